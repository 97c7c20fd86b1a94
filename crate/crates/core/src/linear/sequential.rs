//! Left-to-right solving of `A x = c`.
//!
//! Let `S_k` be the span of columns `k+1..n` of `A`. If column `k` lies in
//! `S_k`, every symbol at position `k` can be completed; otherwise exactly
//! one can, and it is read off by a linear functional `f_k` that vanishes on
//! `S_k` and maps column `k` to 1. The functionals are built in one
//! right-to-left pass that maintains a basis of the annihilator of `S_k`.

use crate::error::{check_len, Result};
use crate::gf::{Field, Symbol};

use super::SparseMatrix;

#[derive(Clone, Debug)]
pub struct SequentialSolver {
    field: Field,
    rows: usize,
    columns: Vec<Vec<(u32, Symbol)>>,
    functionals: Vec<Option<Vec<Symbol>>>,
    /// Annihilator of the full column space; `c` is reachable iff every
    /// vector here is orthogonal to it.
    left_kernel: Vec<Vec<Symbol>>,
    determined_from: usize,
}

impl SequentialSolver {
    pub fn new(a: &SparseMatrix) -> Self {
        let f = a.field();
        let l = a.rows();
        let n = a.cols();
        let columns = a.columns();
        let mut annihilator: Vec<Vec<Symbol>> = (0..l)
            .map(|i| {
                let mut e = vec![0; l];
                e[i] = 1;
                e
            })
            .collect();
        let mut functionals = vec![None; n];
        let mut scores: Vec<Symbol> = Vec::with_capacity(l);
        for k in (0..n).rev() {
            let col = &columns[k];
            scores.clear();
            scores.extend(annihilator.iter().map(|h| {
                col.iter()
                    .fold(0, |acc, &(r, v)| f.add(acc, f.mul(h[r as usize], v)))
            }));
            let Some(p) = scores.iter().position(|&s| s != 0) else {
                continue;
            };
            let mut fk = annihilator.swap_remove(p);
            let inv = f.inv_nonzero(scores[p]);
            for v in fk.iter_mut() {
                *v = f.mul(*v, inv);
            }
            scores.swap_remove(p);
            for (h, &s) in annihilator.iter_mut().zip(&scores) {
                if s != 0 {
                    f.axpy(h, f.neg(s), &fk);
                }
            }
            functionals[k] = Some(fk);
        }
        let determined_from = functionals
            .iter()
            .rposition(Option::is_none)
            .map_or(0, |p| p + 1);
        SequentialSolver {
            field: f,
            rows: l,
            columns,
            functionals,
            left_kernel: annihilator,
            determined_from,
        }
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.rows - self.left_kernel.len()
    }

    pub fn field(&self) -> Field {
        self.field
    }

    /// Whether `c` lies in the column space of `A`.
    pub fn in_image(&self, c: &[Symbol]) -> Result<bool> {
        check_len("target", self.rows, c.len())?;
        Ok(self.left_kernel.iter().all(|h| self.field.dot(h, c) == 0))
    }

    /// Nonzero entries of column `k` as `(row, coefficient)`.
    pub fn column(&self, k: usize) -> &[(u32, Symbol)] {
        &self.columns[k]
    }

    pub fn is_forced(&self, k: usize) -> bool {
        self.functionals[k].is_some()
    }

    /// Smallest `p` such that every position `>= p` is forced: once a prefix
    /// of length `p` is fixed, the completion is unique.
    pub fn determined_from(&self) -> usize {
        self.determined_from
    }

    /// The only symbol that keeps position `k` completable, if `k` is forced.
    /// `residual` must be `c` minus the contribution of positions `< k`.
    pub fn forced_value(&self, k: usize, residual: &[Symbol]) -> Option<Symbol> {
        self.functionals[k]
            .as_ref()
            .map(|fk| self.field.dot(fk, residual))
    }

    /// Whether `x_k = v` can still be completed.
    pub fn feasible(&self, k: usize, residual: &[Symbol], v: Symbol) -> bool {
        self.forced_value(k, residual).is_none_or(|w| w == v)
    }

    /// `residual -= v * column_k`.
    pub fn subtract_column(&self, residual: &mut [Symbol], k: usize, v: Symbol) {
        if v == 0 {
            return;
        }
        let f = self.field;
        for &(r, a) in &self.columns[k] {
            let r = r as usize;
            residual[r] = f.sub(residual[r], f.mul(a, v));
        }
    }

    /// Completes positions `k..n` when all of them are forced, consuming the
    /// residual. Returns `None` if some position `>= k` is free.
    pub fn complete(&self, k: usize, residual: &mut [Symbol]) -> Option<Vec<Symbol>> {
        if k < self.determined_from {
            return None;
        }
        let mut out = Vec::with_capacity(self.len() - k);
        for j in k..self.len() {
            let v = self.forced_value(j, residual)?;
            self.subtract_column(residual, j, v);
            out.push(v);
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::{
        for_each_vector, random_vector, rank, unique_completion, Completion, EnsembleSpec,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forced_positions_match_unique_completion() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..300u64 {
            let q = if trial % 2 == 0 { 2 } else { 3 };
            let field = Field::new(q).unwrap();
            let n = rng.random_range(1..=8);
            let l = rng.random_range(1..=6);
            let a = EnsembleSpec { n, l, field, tau: 2, seed: trial }.sample().unwrap();
            let solver = SequentialSolver::new(&a);
            assert_eq!(solver.rank(), rank(&a));
            let x = random_vector(field, n, &mut rng);
            let c = a.mul_vec(&x).unwrap();
            assert!(solver.in_image(&c).unwrap());
            let mut residual = c.clone();
            for k in 0..n {
                // Feasible symbols are exactly those with a completion.
                for v in 0..q as u16 {
                    let mut prefix = x[..k].to_vec();
                    prefix.push(v);
                    let reachable =
                        unique_completion(&a, &c, &prefix).unwrap() != Completion::None;
                    assert_eq!(solver.feasible(k, &residual, v), reachable);
                }
                let unique = matches!(
                    unique_completion(&a, &c, &x[..k]).unwrap(),
                    Completion::Unique(_)
                );
                assert_eq!(k >= solver.determined_from(), unique);
                if unique {
                    let mut r = residual.clone();
                    assert_eq!(solver.complete(k, &mut r).unwrap(), x[k..].to_vec());
                    assert!(r.iter().all(|&v| v == 0));
                }
                solver.subtract_column(&mut residual, k, x[k]);
            }
        }
    }

    #[test]
    fn image_membership() {
        let field = Field::new(2).unwrap();
        let a = SparseMatrix::from_dense(field, 2, &[vec![1, 1], vec![1, 1]]).unwrap();
        let solver = SequentialSolver::new(&a);
        let mut image = Vec::new();
        for_each_vector(2, 2, |c| {
            if solver.in_image(c).unwrap() {
                image.push(c.to_vec());
            }
        });
        assert_eq!(image, vec![vec![0, 0], vec![1, 1]]);
        let full = SequentialSolver::new(&SparseMatrix::identity(field, 3));
        assert_eq!(full.determined_from(), 0);
    }
}
