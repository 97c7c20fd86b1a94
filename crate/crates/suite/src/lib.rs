//! Random instance generators and brute-force oracles for the acceptance
//! suite. Nothing here calls the code under test beyond building inputs
//! (matrices, channels) and evaluating closed-form log-probabilities.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use coset::channel::draw_matrix;
use coset::linear::{for_each_vector, random_vector, SparseMatrix};
use coset::models::{MemorylessChannel, MemorylessSource, Output};
use coset::{Field, Symbol};

pub fn gf(q: u32) -> Field {
    Field::new(q).unwrap()
}

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Every vector of `GF(q)^n` in lexicographic order.
pub fn all_vectors(q: u32, n: usize) -> Vec<Vec<Symbol>> {
    let mut out = Vec::new();
    for_each_vector(q as Symbol, n, |v| out.push(v.to_vec()));
    out
}

/// Uniform dense rows, or a sparse tau = 2 draw.
pub fn random_matrix<R: Rng>(field: Field, n: usize, l: usize, dense: bool, rng: &mut R) -> SparseMatrix {
    if dense {
        let rows: Vec<Vec<Symbol>> = (0..l).map(|_| random_vector(field, n, rng)).collect();
        SparseMatrix::from_dense(field, n, &rows).unwrap()
    } else {
        draw_matrix(field, n, l, 2, rng).unwrap()
    }
}

/// Per-position pmfs with every entry at least about 0.05 / q.
pub fn random_pmfs<R: Rng>(q: usize, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let w: Vec<f64> = (0..q).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect()
        })
        .collect()
}

/// A coset `{x : A x = c}` with a non-uniform memoryless prior.
pub struct Instance {
    pub a: SparseMatrix,
    pub c: Vec<Symbol>,
    pub prior: Vec<Vec<f64>>,
}

/// q in {2, 3}, n in 1..=max_n, l in 1..=n, dense or sparse, c in Im A.
pub fn crng_instance(seed: u64, max_n: usize) -> Instance {
    let mut r = rng(seed);
    let q = *[2u32, 3].choose(&mut r).unwrap();
    let field = gf(q);
    let n = r.random_range(1..=max_n);
    let l = r.random_range(1..=n);
    let a = random_matrix(field, n, l, r.random_bool(0.5), &mut r);
    let c = a.mul_vec(&random_vector(field, n, &mut r)).unwrap();
    let prior = random_pmfs(q as usize, n, &mut r);
    Instance { a, c, prior }
}

fn find(comp: &mut [usize], mut i: usize) -> usize {
    while comp[i] != i {
        comp[i] = comp[comp[i]];
        i = comp[i];
    }
    i
}

/// A coset whose variable/check incidence graph is a forest: every row
/// joins variables from distinct components.
pub fn tree_instance(seed: u64) -> Instance {
    let mut r = rng(seed);
    let q = *[2u32, 3, 5].choose(&mut r).unwrap();
    let field = gf(q);
    let n = r.random_range(2..=10);
    let mut comp: Vec<usize> = (0..n).collect();
    let rows = r.random_range(1..n);
    let mut dense = Vec::new();
    for _ in 0..rows {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut r);
        let size = r.random_range(1..=4);
        let mut used: Vec<usize> = Vec::new();
        let mut row = vec![0 as Symbol; n];
        for &v in &order {
            let root = find(&mut comp, v);
            if used.contains(&root) {
                continue;
            }
            used.push(root);
            row[v] = r.random_range(1..q) as Symbol;
            if used.len() == size {
                break;
            }
        }
        for w in used.windows(2) {
            let (a, b) = (find(&mut comp, w[0]), find(&mut comp, w[1]));
            comp[a] = b;
        }
        dense.push(row);
    }
    let a = SparseMatrix::from_dense(field, n, &dense).unwrap();
    let c = a.mul_vec(&random_vector(field, n, &mut r)).unwrap();
    let prior = random_pmfs(q as usize, n, &mut r);
    Instance { a, c, prior }
}

/// Brute-force MAP over all of `GF(q)^n`: the lexicographically least
/// maximizer of `log P(x) + log P(y|x)` on the coset, and whether other
/// members score within a relative 1e-12 of it.
pub fn brute_force_map(
    a: &SparseMatrix,
    c: &[Symbol],
    prior: &MemorylessSource,
    ch: &MemorylessChannel,
    y: &[Output],
) -> Option<(Vec<Symbol>, bool)> {
    let mut scored: Vec<(Vec<Symbol>, f64)> = Vec::new();
    for_each_vector(a.field().size() as Symbol, a.cols(), |x| {
        if a.mul_vec(x).unwrap() == c {
            let s = prior.log_prob(x).unwrap() + ch.log_lik(y, x).unwrap();
            if s > f64::NEG_INFINITY {
                scored.push((x.to_vec(), s));
            }
        }
    });
    let best = scored.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-12 * best.abs().max(1.0);
    let mut maximizers = scored.into_iter().filter(|s| s.1 >= best - tol);
    let first = maximizers.next()?.0;
    Some((first, maximizers.next().is_some()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use coset::models::Kernel;

    #[test]
    fn tree_instances_are_forests() {
        for seed in 0..100 {
            let inst = tree_instance(seed);
            // A forest on n variables plus l checks has fewer than n + l edges.
            let edges = inst.a.nnz();
            let nodes = inst.a.cols() + inst.a.rows();
            assert!(edges < nodes, "seed {seed}");
            let mut comp: Vec<usize> = (0..nodes).collect();
            for i in 0..inst.a.rows() {
                for &(j, _) in inst.a.row(i) {
                    let (u, v) = (find(&mut comp, inst.a.cols() + i), find(&mut comp, j as usize));
                    assert_ne!(u, v, "cycle at seed {seed}");
                    comp[u] = v;
                }
            }
        }
    }

    #[test]
    fn brute_force_prefers_the_nearest_codeword() {
        // Repetition code {000, 111}; y = 001 over a BSC decodes to 000.
        let f = gf(2);
        let a = SparseMatrix::from_dense(f, 3, &[vec![1, 1, 0], vec![0, 1, 1]]).unwrap();
        let prior = MemorylessSource::uniform(3, 2);
        let ch = MemorylessChannel::stationary(3, Kernel::bsc(0.1).unwrap());
        let y: Vec<Output> = [0, 0, 1].iter().map(|&s| Output::Symbol(s)).collect();
        assert_eq!(brute_force_map(&a, &[0, 0], &prior, &ch, &y), Some((vec![0, 0, 0], false)));
        // BSC(0.5) makes both codewords equally likely.
        let flat = MemorylessChannel::stationary(3, Kernel::bsc(0.5).unwrap());
        assert_eq!(brute_force_map(&a, &[0, 0], &prior, &flat, &y), Some((vec![0, 0, 0], true)));
    }
}
