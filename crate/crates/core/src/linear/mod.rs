//! Sparse matrices over GF(q) and the linear algebra built on them.
//!
//! A matrix is stored row-sparse in canonical form: each row is a list of
//! `(column, coefficient)` pairs with strictly increasing columns and no zero
//! coefficients, so structural equality is matrix equality.

mod echelon;
mod format;
mod sequential;

pub use echelon::{
    complement_bijection, coset_members, kernel_basis, left_inverse_of_generator, rank,
    row_reduce, solve_particular, unique_completion, Bijection, Completion, CosetSpace,
    EchelonForm,
};
pub use format::{read_gfmat, write_gfmat};
pub use sequential::SequentialSolver;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{check_len, Error, Result};
use crate::gf::{Field, Symbol};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SparseMatrix {
    field: Field,
    rows: usize,
    cols: usize,
    row_entries: Vec<Vec<(u32, Symbol)>>,
}

impl SparseMatrix {
    /// Builds a matrix from per-row entries, canonicalizing them: entries are
    /// sorted by column, duplicates accumulate, and zero sums are dropped.
    pub fn from_entries(
        field: Field,
        rows: usize,
        cols: usize,
        mut row_entries: Vec<Vec<(u32, Symbol)>>,
    ) -> Result<Self> {
        check_len("row list", rows, row_entries.len())?;
        for row in &mut row_entries {
            row.sort_by_key(|&(c, _)| c);
            let mut out: Vec<(u32, Symbol)> = Vec::with_capacity(row.len());
            for &(c, v) in row.iter() {
                if c as usize >= cols {
                    return Err(Error::Usage(format!("column index {c} out of range {cols}")));
                }
                if v >= field.order() {
                    return Err(Error::Usage(format!("coefficient {v} not in {field}")));
                }
                match out.last_mut() {
                    Some(last) if last.0 == c => last.1 = field.add(last.1, v),
                    _ => out.push((c, v)),
                }
            }
            out.retain(|&(_, v)| v != 0);
            *row = out;
        }
        Ok(SparseMatrix {
            field,
            rows,
            cols,
            row_entries,
        })
    }

    pub fn from_dense(field: Field, cols: usize, dense: &[Vec<Symbol>]) -> Result<Self> {
        let mut entries = Vec::with_capacity(dense.len());
        for row in dense {
            check_len("dense row", cols, row.len())?;
            field.check_vector(row)?;
            entries.push(
                row.iter()
                    .enumerate()
                    .filter(|&(_, &v)| v != 0)
                    .map(|(j, &v)| (j as u32, v))
                    .collect(),
            );
        }
        Ok(SparseMatrix {
            field,
            rows: dense.len(),
            cols,
            row_entries: entries,
        })
    }

    pub fn zeros(field: Field, rows: usize, cols: usize) -> Self {
        SparseMatrix {
            field,
            rows,
            cols,
            row_entries: vec![Vec::new(); rows],
        }
    }

    pub fn identity(field: Field, n: usize) -> Self {
        SparseMatrix {
            field,
            rows: n,
            cols: n,
            row_entries: (0..n).map(|i| vec![(i as u32, 1)]).collect(),
        }
    }

    #[inline]
    pub fn field(&self) -> Field {
        self.field
    }

    /// Number of rows (`l`).
    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of columns (`n`).
    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[(u32, Symbol)] {
        &self.row_entries[i]
    }

    pub fn nnz(&self) -> usize {
        self.row_entries.iter().map(Vec::len).sum()
    }

    pub fn get(&self, i: usize, j: usize) -> Symbol {
        self.row_entries[i]
            .binary_search_by_key(&(j as u32), |&(c, _)| c)
            .map(|p| self.row_entries[i][p].1)
            .unwrap_or(0)
    }

    /// Column-major view: for each column, `(row, coefficient)` pairs in row order.
    pub fn columns(&self) -> Vec<Vec<(u32, Symbol)>> {
        let mut cols = vec![Vec::new(); self.cols];
        for (i, row) in self.row_entries.iter().enumerate() {
            for &(j, v) in row {
                cols[j as usize].push((i as u32, v));
            }
        }
        cols
    }

    pub fn to_dense(&self) -> Vec<Vec<Symbol>> {
        self.row_entries
            .iter()
            .map(|row| {
                let mut d = vec![0; self.cols];
                for &(j, v) in row {
                    d[j as usize] = v;
                }
                d
            })
            .collect()
    }

    pub fn transpose(&self) -> SparseMatrix {
        SparseMatrix {
            field: self.field,
            rows: self.cols,
            cols: self.rows,
            row_entries: self.columns(),
        }
    }

    pub fn mul_vec(&self, x: &[Symbol]) -> Result<Vec<Symbol>> {
        check_len("matrix-vector product", self.cols, x.len())?;
        self.field.check_vector(x)?;
        Ok(self.mul_vec_unchecked(x))
    }

    pub(crate) fn mul_vec_unchecked(&self, x: &[Symbol]) -> Vec<Symbol> {
        let f = self.field;
        self.row_entries
            .iter()
            .map(|row| {
                row.iter()
                    .fold(0, |acc, &(j, v)| f.add(acc, f.mul(v, x[j as usize])))
            })
            .collect()
    }

    /// The map `x -> (self x, other x)`.
    pub fn stack(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        if self.field != other.field {
            return Err(Error::Usage("stacking matrices over different fields".into()));
        }
        check_len("stacked matrix columns", self.cols, other.cols)?;
        let mut row_entries = self.row_entries.clone();
        row_entries.extend(other.row_entries.iter().cloned());
        Ok(SparseMatrix {
            field: self.field,
            rows: self.rows + other.rows,
            cols: self.cols,
            row_entries,
        })
    }

    /// The submatrix made of columns `from..cols`, re-indexed from zero.
    pub fn column_suffix(&self, from: usize) -> SparseMatrix {
        let row_entries = self
            .row_entries
            .iter()
            .map(|row| {
                row.iter()
                    .filter(|&&(j, _)| j as usize >= from)
                    .map(|&(j, v)| (j - from as u32, v))
                    .collect()
            })
            .collect();
        SparseMatrix {
            field: self.field,
            rows: self.rows,
            cols: self.cols.saturating_sub(from),
            row_entries,
        }
    }
}

/// Parameters of the sparse ensemble: every column receives `tau` random
/// additions of a nonzero coefficient at a uniformly chosen row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnsembleSpec {
    pub n: usize,
    pub l: usize,
    pub field: Field,
    pub tau: usize,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.l == 0 {
            return Err(Error::Usage(format!(
                "ensemble needs n >= 1 and l >= 1 (got n={}, l={})",
                self.n, self.l
            )));
        }
        if self.tau == 0 || self.tau % 2 != 0 {
            return Err(Error::Usage(format!(
                "tau must be a positive even integer (got {})",
                self.tau
            )));
        }
        Ok(())
    }

    /// Samples with a ChaCha20 stream seeded from `self.seed`.
    pub fn sample(&self) -> Result<SparseMatrix> {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        sample_sparse_matrix(self, &mut rng)
    }
}

/// Draws one matrix from the sparse ensemble.
///
/// Columns are visited in order; for each, `tau` pairs `(row, a)` are drawn
/// uniformly from `{0..l} x (GF(q) \ {0})` and `a` is added to that entry.
/// Repeated rows accumulate and may cancel to zero.
pub fn sample_sparse_matrix<R: Rng + ?Sized>(
    spec: &EnsembleSpec,
    rng: &mut R,
) -> Result<SparseMatrix> {
    spec.validate()?;
    let f = spec.field;
    let nonzero = f.order() as u32 - 1;
    let mut row_entries: Vec<Vec<(u32, Symbol)>> = vec![Vec::new(); spec.l];
    let mut col: Vec<(u32, Symbol)> = Vec::with_capacity(spec.tau);
    for i in 0..spec.n {
        col.clear();
        for _ in 0..spec.tau {
            // u32 ranges keep the draw sequence identical across platforms.
            let j = rng.random_range(0..spec.l as u32);
            let a = 1 + rng.random_range(0..nonzero) as Symbol;
            match col.iter_mut().find(|(r, _)| *r == j) {
                Some(e) => e.1 = f.add(e.1, a),
                None => col.push((j, a)),
            }
        }
        for &(j, a) in &col {
            if a != 0 {
                row_entries[j as usize].push((i as u32, a));
            }
        }
    }
    // Columns were appended in increasing order, so rows are already canonical.
    Ok(SparseMatrix {
        field: f,
        rows: spec.l,
        cols: spec.n,
        row_entries,
    })
}

/// Uniformly random vector in GF(q)^n.
pub fn random_vector<R: Rng + ?Sized>(field: Field, n: usize, rng: &mut R) -> Vec<Symbol> {
    (0..n)
        .map(|_| rng.random_range(0..field.order() as u32) as Symbol)
        .collect()
}

/// Enumerates GF(q)^n in lexicographic order.
pub(crate) struct Odometer {
    q: Symbol,
    cur: Vec<Symbol>,
    done: bool,
}

impl Odometer {
    pub(crate) fn new(q: Symbol, n: usize) -> Self {
        Odometer {
            q,
            cur: vec![0; n],
            done: false,
        }
    }

    /// The current vector, or `None` once every vector was visited.
    pub(crate) fn next_vec(&self) -> Option<&[Symbol]> {
        (!self.done).then_some(self.cur.as_slice())
    }

    pub(crate) fn advance(&mut self) {
        for d in self.cur.iter_mut().rev() {
            *d += 1;
            if *d < self.q {
                return;
            }
            *d = 0;
        }
        self.done = true;
    }
}

/// Calls `f` on every vector of GF(q)^n in lexicographic order.
pub fn for_each_vector(q: Symbol, n: usize, mut f: impl FnMut(&[Symbol])) {
    let mut od = Odometer::new(q, n);
    while let Some(v) = od.next_vec() {
        f(v);
        od.advance();
    }
}
