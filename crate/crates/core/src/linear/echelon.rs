//! Dense Gauss-Jordan elimination and everything derived from it: rank,
//! particular solutions, kernels, left inverses, and coset enumeration.
//!
//! Elimination runs on the augmented matrix `[A | I]` so the row operations
//! are recorded in `transform`, with `transform * A = [reduced; 0]`. GF(2)
//! uses a bit-packed path.

use crate::error::{check_cap, check_len, Error, Result};
use crate::gf::{Field, Symbol};

use super::{for_each_vector, SparseMatrix};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EchelonForm {
    field: Field,
    rows: usize,
    cols: usize,
    /// Nonzero rows of the reduced row echelon form (`rank x cols`).
    reduced: Vec<Vec<Symbol>>,
    pivots: Vec<usize>,
    /// `rows x rows` record of the row operations.
    transform: Vec<Vec<Symbol>>,
}

impl EchelonForm {
    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }

    pub fn reduced(&self) -> &[Vec<Symbol>] {
        &self.reduced
    }

    pub fn transform(&self) -> &[Vec<Symbol>] {
        &self.transform
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Some `x` with `A x = c`, free variables set to zero; `None` if `c` is
    /// outside the image.
    pub fn solve(&self, c: &[Symbol]) -> Result<Option<Vec<Symbol>>> {
        check_len("right-hand side", self.rows, c.len())?;
        self.field.check_vector(c)?;
        let f = self.field;
        let y: Vec<Symbol> = self.transform.iter().map(|t| f.dot(t, c)).collect();
        if y[self.rank()..].iter().any(|&v| v != 0) {
            return Ok(None);
        }
        let mut x = vec![0; self.cols];
        for (i, &p) in self.pivots.iter().enumerate() {
            x[p] = y[i];
        }
        Ok(Some(x))
    }

    pub fn kernel_basis(&self) -> Vec<Vec<Symbol>> {
        let f = self.field;
        let mut is_pivot = vec![false; self.cols];
        for &p in &self.pivots {
            is_pivot[p] = true;
        }
        (0..self.cols)
            .filter(|&j| !is_pivot[j])
            .map(|free| {
                let mut v = vec![0; self.cols];
                v[free] = 1;
                for (i, &p) in self.pivots.iter().enumerate() {
                    v[p] = f.neg(self.reduced[i][free]);
                }
                v
            })
            .collect()
    }

    /// The coset `{x : A x = c}` as particular solution plus kernel basis.
    pub fn coset(&self, c: &[Symbol]) -> Result<Option<CosetSpace>> {
        Ok(self.solve(c)?.map(|particular| CosetSpace {
            field: self.field,
            particular,
            basis: self.kernel_basis(),
        }))
    }
}

/// Gaussian elimination over GF(q).
pub fn row_reduce(a: &SparseMatrix) -> EchelonForm {
    if a.field().is_binary() {
        reduce_binary(a)
    } else {
        reduce_generic(a)
    }
}

fn reduce_generic(a: &SparseMatrix) -> EchelonForm {
    let f = a.field();
    let (l, n) = (a.rows(), a.cols());
    let mut m: Vec<Vec<Symbol>> = a
        .to_dense()
        .into_iter()
        .enumerate()
        .map(|(i, mut row)| {
            row.resize(n + l, 0);
            row[n + i] = 1;
            row
        })
        .collect();
    let mut pivots = Vec::new();
    let mut r = 0;
    for col in 0..n {
        if r == l {
            break;
        }
        let Some(p) = (r..l).find(|&i| m[i][col] != 0) else {
            continue;
        };
        m.swap(r, p);
        let inv = f.inv_nonzero(m[r][col]);
        for v in m[r].iter_mut() {
            *v = f.mul(*v, inv);
        }
        let pivot_row = m[r].clone();
        for (i, row) in m.iter_mut().enumerate() {
            if i != r && row[col] != 0 {
                let k = f.neg(row[col]);
                f.axpy(row, k, &pivot_row);
            }
        }
        pivots.push(col);
        r += 1;
    }
    let transform = m.iter().map(|row| row[n..].to_vec()).collect();
    let reduced = m[..r].iter().map(|row| row[..n].to_vec()).collect();
    EchelonForm {
        field: f,
        rows: l,
        cols: n,
        reduced,
        pivots,
        transform,
    }
}

fn reduce_binary(a: &SparseMatrix) -> EchelonForm {
    let (l, n) = (a.rows(), a.cols());
    let width = n + l;
    let words = width.div_ceil(64);
    let bit = |row: &[u64], j: usize| (row[j / 64] >> (j % 64)) & 1;
    let mut m: Vec<Vec<u64>> = (0..l)
        .map(|i| {
            let mut row = vec![0u64; words];
            for &(j, _) in a.row(i) {
                row[j as usize / 64] |= 1 << (j % 64);
            }
            let t = n + i;
            row[t / 64] |= 1 << (t % 64);
            row
        })
        .collect();
    let mut pivots = Vec::new();
    let mut r = 0;
    for col in 0..n {
        if r == l {
            break;
        }
        let Some(p) = (r..l).find(|&i| bit(&m[i], col) == 1) else {
            continue;
        };
        m.swap(r, p);
        let pivot_row = m[r].clone();
        for (i, row) in m.iter_mut().enumerate() {
            if i != r && bit(row, col) == 1 {
                for (w, pw) in row.iter_mut().zip(&pivot_row) {
                    *w ^= pw;
                }
            }
        }
        pivots.push(col);
        r += 1;
    }
    let unpack = |row: &[u64], from: usize, to: usize| -> Vec<Symbol> {
        (from..to).map(|j| bit(row, j) as Symbol).collect()
    };
    EchelonForm {
        field: a.field(),
        rows: l,
        cols: n,
        reduced: m[..r].iter().map(|row| unpack(row, 0, n)).collect(),
        pivots,
        transform: m.iter().map(|row| unpack(row, n, width)).collect(),
    }
}

pub fn rank(a: &SparseMatrix) -> usize {
    row_reduce(a).rank()
}

/// Any `x_c` with `A x_c = c` (free variables zero), or `None` if `c` is not
/// in the image of `A`.
pub fn solve_particular(a: &SparseMatrix, c: &[Symbol]) -> Result<Option<Vec<Symbol>>> {
    row_reduce(a).solve(c)
}

/// A basis of `{x : A x = 0}`, one vector per free column.
pub fn kernel_basis(a: &SparseMatrix) -> Vec<Vec<Symbol>> {
    row_reduce(a).kernel_basis()
}

/// For an injective `G` (`n x k`, full column rank), a `k x n` matrix `B`
/// with `B G m = m` for every `m`.
pub fn left_inverse_of_generator(g: &SparseMatrix) -> Result<SparseMatrix> {
    let ech = row_reduce(g);
    if ech.rank() != g.cols() {
        return Err(Error::Domain(format!(
            "generator has rank {} < {} columns",
            ech.rank(),
            g.cols()
        )));
    }
    // transform * G = [I_k; 0], so the top k rows of transform invert G.
    SparseMatrix::from_dense(g.field(), g.rows(), &ech.transform[..g.cols()])
}

/// The inverse of an injective stacked map `x -> (A x, B x)`.
#[derive(Clone, Debug)]
pub struct Bijection {
    forward: SparseMatrix,
    inverse: SparseMatrix,
    split: usize,
}

impl Bijection {
    /// `x'_AB(c, m)`: the unique `x` with `A x = c` and `B x = m` when
    /// `(c, m)` is in the image of the stacked map.
    pub fn apply(&self, c: &[Symbol], m: &[Symbol]) -> Result<Vec<Symbol>> {
        check_len("first component", self.split, c.len())?;
        check_len(
            "second component",
            self.forward.rows() - self.split,
            m.len(),
        )?;
        let mut joined = c.to_vec();
        joined.extend_from_slice(m);
        self.inverse.mul_vec(&joined)
    }

    /// `x -> (A x, B x)`.
    pub fn forward(&self, x: &[Symbol]) -> Result<(Vec<Symbol>, Vec<Symbol>)> {
        let mut y = self.forward.mul_vec(x)?;
        let m = y.split_off(self.split);
        Ok((y, m))
    }
}

pub fn complement_bijection(a: &SparseMatrix, b: &SparseMatrix) -> Result<Bijection> {
    let forward = a.stack(b)?;
    let inverse = left_inverse_of_generator(&forward).map_err(|_| {
        Error::Domain("stacked map (A, B) is not injective".into())
    })?;
    Ok(Bijection {
        forward,
        inverse,
        split: a.rows(),
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Completion {
    Unique(Vec<Symbol>),
    Multiple,
    None,
}

/// Decides whether exactly one suffix extends `prefix` into a member of
/// `C_A(c)`, and returns it when it does.
pub fn unique_completion(a: &SparseMatrix, c: &[Symbol], prefix: &[Symbol]) -> Result<Completion> {
    check_len("target", a.rows(), c.len())?;
    if prefix.len() > a.cols() {
        return Err(Error::Usage(format!(
            "prefix length {} exceeds n = {}",
            prefix.len(),
            a.cols()
        )));
    }
    a.field().check_vector(prefix)?;
    let f = a.field();
    let k = prefix.len();
    let mut residual = c.to_vec();
    for (i, row) in (0..a.rows()).map(|i| (i, a.row(i))) {
        for &(j, v) in row.iter().take_while(|&&(j, _)| (j as usize) < k) {
            residual[i] = f.sub(residual[i], f.mul(v, prefix[j as usize]));
        }
    }
    let suffix = a.column_suffix(k);
    let ech = row_reduce(&suffix);
    Ok(match ech.solve(&residual)? {
        None => Completion::None,
        Some(x) if ech.rank() == suffix.cols() => Completion::Unique(x),
        Some(_) => Completion::Multiple,
    })
}

/// Every member of `C_A(c)` in lexicographic order, by scanning all of
/// GF(q)^n. Refused when `q^n > cap`.
pub fn coset_members(a: &SparseMatrix, c: &[Symbol], cap: u64) -> Result<Vec<Vec<Symbol>>> {
    check_len("target", a.rows(), c.len())?;
    check_cap("coset scan", a.field().size(), a.cols(), cap)?;
    let mut out = Vec::new();
    for_each_vector(a.field().order(), a.cols(), |x| {
        if a.mul_vec_unchecked(x) == c {
            out.push(x.to_vec());
        }
    });
    Ok(out)
}

/// An affine subspace `particular + span(basis)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CosetSpace {
    field: Field,
    pub particular: Vec<Symbol>,
    pub basis: Vec<Vec<Symbol>>,
}

impl CosetSpace {
    pub fn dimension(&self) -> usize {
        self.basis.len()
    }

    /// Number of members, `q^dim`.
    pub fn size(&self) -> f64 {
        crate::error::states(self.field.size(), self.basis.len())
    }

    /// Visits all `q^dim` members (not in lexicographic order).
    pub fn for_each_member(&self, cap: u64, mut visit: impl FnMut(&[Symbol])) -> Result<()> {
        check_cap("coset enumeration", self.field.size(), self.basis.len(), cap)?;
        let f = self.field;
        let mut x = self.particular.clone();
        let q = f.order();
        let dim = self.basis.len();
        let mut coeffs = vec![0 as Symbol; dim];
        loop {
            visit(&x);
            // Gray-code style increment: bump one coefficient, patch x.
            let mut i = 0;
            loop {
                if i == dim {
                    return Ok(());
                }
                coeffs[i] += 1;
                f.axpy(&mut x, 1, &self.basis[i]);
                if coeffs[i] < q {
                    break;
                }
                // Wrapped around: x is back to its value before this digit moved.
                coeffs[i] = 0;
                i += 1;
            }
        }
    }

    pub fn members(&self, cap: u64) -> Result<Vec<Vec<Symbol>>> {
        let mut out = Vec::new();
        self.for_each_member(cap, |x| out.push(x.to_vec()))?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::{random_vector, EnsembleSpec};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn gf(q: u32) -> Field {
        Field::new(q).unwrap()
    }

    fn dense(q: u32, rows: &[&[u16]]) -> SparseMatrix {
        let rows: Vec<Vec<u16>> = rows.iter().map(|r| r.to_vec()).collect();
        SparseMatrix::from_dense(gf(q), rows[0].len(), &rows).unwrap()
    }

    fn random_dense(q: u32, l: usize, n: usize, seed: u64) -> SparseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<u16>> = (0..l).map(|_| random_vector(gf(q), n, &mut rng)).collect();
        SparseMatrix::from_dense(gf(q), n, &rows).unwrap()
    }

    /// Rank by enumerating the row space: |rowspace| = q^rank.
    fn brute_rank(a: &SparseMatrix) -> usize {
        let f = a.field();
        let dense = a.to_dense();
        let mut space = BTreeSet::new();
        for_each_vector(f.order(), a.rows(), |coeffs| {
            let mut v = vec![0; a.cols()];
            for (k, row) in coeffs.iter().zip(&dense) {
                f.axpy(&mut v, *k, row);
            }
            space.insert(v);
        });
        let mut r = 0;
        while f.size().pow(r as u32) < space.len() {
            r += 1;
        }
        assert_eq!(f.size().pow(r as u32), space.len());
        r
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank(&SparseMatrix::identity(gf(3), 5)), 5);
        assert_eq!(rank(&dense(2, &[&[1, 1], &[1, 1]])), 1);
        for seed in 0..10 {
            let a = random_dense(3, 4, 8, seed);
            assert_eq!(rank(&a), brute_rank(&a));
        }
    }

    #[test]
    fn solve_examples() {
        let id = SparseMatrix::identity(gf(5), 3);
        assert_eq!(solve_particular(&id, &[4, 0, 2]).unwrap(), Some(vec![4, 0, 2]));
        let a = dense(2, &[&[1, 1]]);
        assert_eq!(solve_particular(&a, &[1]).unwrap(), Some(vec![1, 0]));
    }

    #[test]
    fn no_solution_matches_scan() {
        // Rank-deficient 3x6 over GF(2): third row = first + second.
        let a = dense(
            2,
            &[&[1, 0, 1, 1, 0, 0], &[0, 1, 1, 0, 1, 0], &[1, 1, 0, 1, 1, 0]],
        );
        for_each_vector(2, 3, |c| {
            let scan = coset_members(&a, c, 1 << 10).unwrap();
            let sol = solve_particular(&a, c).unwrap();
            assert_eq!(sol.is_none(), scan.is_empty(), "c = {c:?}");
            if let Some(x) = sol {
                assert_eq!(a.mul_vec(&x).unwrap(), c);
            }
        });
    }

    #[test]
    fn kernel_examples() {
        assert!(kernel_basis(&SparseMatrix::identity(gf(2), 4)).is_empty());
        assert_eq!(kernel_basis(&dense(2, &[&[1, 1]])), vec![vec![1, 1]]);
        for seed in 0..5 {
            let a = random_dense(2, 3, 6, seed);
            let basis = kernel_basis(&a);
            assert_eq!(basis.len(), 6 - rank(&a));
            let mut span = BTreeSet::new();
            for_each_vector(2, basis.len(), |coeffs| {
                let mut v = vec![0; 6];
                for (k, b) in coeffs.iter().zip(&basis) {
                    gf(2).axpy(&mut v, *k, b);
                }
                span.insert(v);
            });
            let brute: BTreeSet<_> = coset_members(&a, &[0, 0, 0], 1 << 10)
                .unwrap()
                .into_iter()
                .collect();
            assert_eq!(span, brute);
        }
    }

    #[test]
    fn left_inverse_examples() {
        let id = SparseMatrix::identity(gf(3), 3);
        assert_eq!(left_inverse_of_generator(&id).unwrap(), id);
        let g = dense(2, &[&[1], &[1]]);
        let b = left_inverse_of_generator(&g).unwrap();
        assert_eq!(b.mul_vec(&g.mul_vec(&[1]).unwrap()).unwrap(), vec![1]);
        assert!(left_inverse_of_generator(&dense(2, &[&[1, 1], &[1, 1]])).is_err());
        // Random injective G (6 x 4 over GF(3)): exhaustive B G m = m.
        let mut seed = 0;
        let g = loop {
            let g = random_dense(3, 6, 4, seed);
            if rank(&g) == 4 {
                break g;
            }
            seed += 1;
        };
        let b = left_inverse_of_generator(&g).unwrap();
        for_each_vector(3, 4, |m| {
            assert_eq!(b.mul_vec(&g.mul_vec(m).unwrap()).unwrap(), m);
        });
    }

    #[test]
    fn bijection_examples() {
        let a = dense(2, &[&[1, 1]]);
        let b = dense(2, &[&[1, 0]]);
        let bij = complement_bijection(&a, &b).unwrap();
        for_each_vector(2, 2, |x| {
            let (c, m) = bij.forward(x).unwrap();
            assert_eq!(bij.apply(&c, &m).unwrap(), x);
        });
        let id = SparseMatrix::identity(gf(2), 3);
        let empty = SparseMatrix::zeros(gf(2), 0, 3);
        let bij = complement_bijection(&id, &empty).unwrap();
        assert_eq!(bij.apply(&[1, 0, 1], &[]).unwrap(), vec![1, 0, 1]);
        assert!(complement_bijection(&a, &a).is_err());
    }

    #[test]
    fn bijection_random_exhaustive() {
        let mut done = 0;
        for seed in 0..50u64 {
            let a = random_dense(2, 3, 6, seed);
            let b = random_dense(2, 3, 6, seed + 1000);
            let Ok(bij) = complement_bijection(&a, &b) else {
                continue;
            };
            for_each_vector(2, 6, |x| {
                let (c, m) = bij.forward(x).unwrap();
                assert_eq!(bij.apply(&c, &m).unwrap(), x);
            });
            done += 1;
        }
        assert!(done > 5);
    }

    #[test]
    fn completion_examples() {
        let id = SparseMatrix::identity(gf(3), 4);
        assert_eq!(
            unique_completion(&id, &[1, 2, 0, 1], &[1, 2]).unwrap(),
            Completion::Unique(vec![0, 1])
        );
        let a = dense(2, &[&[1, 1]]);
        assert_eq!(
            unique_completion(&a, &[0], &[1]).unwrap(),
            Completion::Unique(vec![1])
        );
        assert_eq!(unique_completion(&a, &[0], &[]).unwrap(), Completion::Multiple);
        let zero_col = dense(2, &[&[1, 0]]);
        assert_eq!(
            unique_completion(&zero_col, &[1], &[0]).unwrap(),
            Completion::None
        );
    }

    /// Compares `unique_completion` with enumeration of every suffix.
    fn check_completion_by_enumeration(a: &SparseMatrix, c: &[u16], prefix: &[u16]) {
        let n = a.cols();
        let q = a.field().order();
        let mut hits = Vec::new();
        for_each_vector(q, n - prefix.len(), |s| {
            let mut x = prefix.to_vec();
            x.extend_from_slice(s);
            if a.mul_vec(&x).unwrap() == c {
                hits.push(s.to_vec());
            }
        });
        let expected = match hits.len() {
            0 => Completion::None,
            1 => Completion::Unique(hits.pop().unwrap()),
            _ => Completion::Multiple,
        };
        assert_eq!(unique_completion(a, c, prefix).unwrap(), expected);
    }

    #[test]
    fn completion_matches_enumeration_1000() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        use rand::Rng;
        for trial in 0..1000u64 {
            let q = if trial % 3 == 0 { 3 } else { 2 };
            let n = rng.random_range(1..=if q == 2 { 10 } else { 6 });
            let l = rng.random_range(1..=n);
            let a = if trial % 2 == 0 {
                random_dense(q, l, n, trial)
            } else {
                EnsembleSpec { n, l, field: gf(q), tau: 2, seed: trial }
                    .sample()
                    .unwrap()
            };
            let k = rng.random_range(0..=n);
            let prefix = random_vector(gf(q), k, &mut rng);
            // Half the time aim at a reachable target.
            let c = if trial % 4 < 2 {
                a.mul_vec(&random_vector(gf(q), n, &mut rng)).unwrap()
            } else {
                random_vector(gf(q), l, &mut rng)
            };
            check_completion_by_enumeration(&a, &c, &prefix);
        }
    }

    #[test]
    fn coset_members_examples() {
        let a = dense(2, &[&[1, 1]]);
        assert_eq!(
            coset_members(&a, &[0], 16).unwrap(),
            vec![vec![0, 0], vec![1, 1]]
        );
        let id = SparseMatrix::identity(gf(3), 3);
        assert_eq!(coset_members(&id, &[2, 0, 1], 27).unwrap(), vec![vec![2, 0, 1]]);
        assert!(matches!(
            coset_members(&id, &[2, 0, 1], 26),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn coset_size_is_q_to_nullity() {
        for seed in 0..20u64 {
            let q = if seed % 2 == 0 { 2 } else { 3 };
            let n = if q == 2 { 8 } else { 5 };
            let a = EnsembleSpec { n, l: 3, field: gf(q), tau: 2, seed }.sample().unwrap();
            let ech = row_reduce(&a);
            let expected = (q as usize).pow((n - ech.rank()) as u32);
            for_each_vector(q as u16, 3, |c| {
                let members = coset_members(&a, c, 1 << 16).unwrap();
                if let Some(space) = ech.coset(c).unwrap() {
                    assert_eq!(members.len(), expected);
                    let mut fast = space.members(1 << 16).unwrap();
                    fast.sort();
                    assert_eq!(fast, members);
                } else {
                    assert!(members.is_empty());
                }
            });
        }
    }

    proptest! {
        #[test]
        fn binary_and_generic_paths_agree(seed in any::<u64>(), l in 1usize..12, n in 1usize..80) {
            let a = random_dense(2, l, n, seed);
            prop_assert_eq!(reduce_binary(&a), reduce_generic(&a));
        }

        #[test]
        fn particular_solution_solves(seed in any::<u64>(), qi in 0usize..3) {
            let q = [2u32, 3, 5][qi];
            let a = EnsembleSpec { n: 20, l: 8, field: gf(q), tau: 2, seed }.sample().unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = random_vector(gf(q), 8, &mut rng);
            if let Some(x) = solve_particular(&a, &c).unwrap() {
                prop_assert_eq!(a.mul_vec(&x).unwrap(), c);
            }
        }
    }
}
