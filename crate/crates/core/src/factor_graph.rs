//! Factor graphs over GF(q) and the sum-product algorithm.
//!
//! Factors are dense tables or affine checks `sum_j a_j x_j = c`. Singleton
//! table factors are folded into per-variable unary weights: their outgoing
//! message is the normalized table from the first flooding pass on, so this
//! does not change any message after iteration one.

use crate::error::{check_cap, check_len, Error, Result};
use crate::gf::{Field, Symbol};
use crate::linear::{for_each_vector, SparseMatrix};

#[derive(Clone, Debug, PartialEq)]
pub enum Factor {
    /// `table[idx]` with `idx = sum_t x_{scope[t]} q^{|S|-1-t}`.
    Table { scope: Vec<usize>, table: Vec<f64> },
    /// Indicator of `sum_t coeffs[t] x_{scope[t]} = target`.
    Check {
        scope: Vec<usize>,
        coeffs: Vec<Symbol>,
        target: Symbol,
    },
}

impl Factor {
    pub fn scope(&self) -> &[usize] {
        match self {
            Factor::Table { scope, .. } | Factor::Check { scope, .. } => scope,
        }
    }

    fn eval(&self, field: Field, x: &[Symbol]) -> f64 {
        match self {
            Factor::Table { scope, table } => {
                let q = field.size();
                let idx = scope.iter().fold(0, |acc, &i| acc * q + x[i] as usize);
                table[idx]
            }
            Factor::Check {
                scope,
                coeffs,
                target,
            } => {
                let s = scope
                    .iter()
                    .zip(coeffs)
                    .fold(0, |acc, (&i, &a)| field.add(acc, field.mul(a, x[i])));
                if s == *target {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FactorGraph {
    field: Field,
    n: usize,
    factors: Vec<Factor>,
}

impl FactorGraph {
    pub fn new(field: Field, n: usize, factors: Vec<Factor>) -> Result<Self> {
        let q = field.size();
        for (j, f) in factors.iter().enumerate() {
            let scope = f.scope();
            if scope.windows(2).any(|w| w[0] >= w[1]) || scope.last().is_some_and(|&i| i >= n) {
                return Err(Error::Usage(format!(
                    "factor {j}: scope must be strictly ascending indices below {n}"
                )));
            }
            match f {
                Factor::Table { table, .. } => {
                    let size = q.checked_pow(scope.len() as u32).ok_or_else(|| {
                        Error::Usage(format!("factor {j}: table over {} variables too large", scope.len()))
                    })?;
                    check_len("factor table", size, table.len())?;
                    if table.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
                        return Err(Error::Usage(format!("factor {j}: entries must be finite and >= 0")));
                    }
                }
                Factor::Check { coeffs, target, .. } => {
                    check_len("check coefficients", scope.len(), coeffs.len())?;
                    if coeffs.iter().any(|&a| a == 0 || a >= field.order()) || *target >= field.order() {
                        return Err(Error::Usage(format!(
                            "factor {j}: coefficients must be nonzero elements of {field}"
                        )));
                    }
                }
            }
        }
        Ok(FactorGraph { field, n, factors })
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn variables(&self) -> usize {
        self.n
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    /// Unnormalized global function at `x`.
    pub fn weight(&self, x: &[Symbol]) -> f64 {
        self.factors.iter().map(|f| f.eval(self.field, x)).product()
    }
}

/// `n` singleton prior factors followed by one check per row of `a`.
pub fn build_coset_graph(a: &SparseMatrix, c: &[Symbol], priors: &[Vec<f64>]) -> Result<FactorGraph> {
    let field = a.field();
    check_len("target", a.rows(), c.len())?;
    check_len("priors", a.cols(), priors.len())?;
    field.check_vector(c)?;
    let mut factors = Vec::with_capacity(a.cols() + a.rows());
    for (i, p) in priors.iter().enumerate() {
        check_len("prior alphabet", field.size(), p.len())?;
        factors.push(Factor::Table {
            scope: vec![i],
            table: p.clone(),
        });
    }
    for (i, &ci) in c.iter().enumerate() {
        let row = a.row(i);
        factors.push(Factor::Check {
            scope: row.iter().map(|&(j, _)| j as usize).collect(),
            coeffs: row.iter().map(|&(_, v)| v).collect(),
            target: ci,
        });
    }
    FactorGraph::new(field, a.cols(), factors)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BpConfig {
    pub max_iters: usize,
    pub damping: f64,
    pub tol: f64,
}

impl Default for BpConfig {
    fn default() -> Self {
        BpConfig {
            max_iters: 100,
            damping: 0.0,
            tol: 1e-8,
        }
    }
}

impl BpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Usage("max_iters must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::Usage(format!("damping must lie in [0, 1), got {}", self.damping)));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Usage("tol must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Marginals {
    pub marginals: Vec<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
}

/// Flooding sum-product from fresh messages.
pub fn sum_product(graph: &FactorGraph, cfg: &BpConfig) -> Result<Marginals> {
    let mut bp = SumProduct::new(graph)?;
    let (converged, iterations) = bp.run(cfg)?;
    Ok(Marginals {
        marginals: bp.marginals()?,
        converged,
        iterations,
    })
}

/// Marginals by weighted enumeration of all `q^n` assignments.
pub fn exact_marginals(graph: &FactorGraph, cap: u64) -> Result<Vec<Vec<f64>>> {
    let q = graph.field.size();
    check_cap("exact marginals", q, graph.n, cap)?;
    let mut acc = vec![vec![0.0; q]; graph.n];
    let mut total = 0.0;
    for_each_vector(graph.field.order(), graph.n, |x| {
        let w = graph.weight(x);
        if w > 0.0 {
            total += w;
            for (i, &xi) in x.iter().enumerate() {
                acc[i][xi as usize] += w;
            }
        }
    });
    if total <= 0.0 {
        return Err(Error::Inconsistent("global function is identically zero".into()));
    }
    for m in &mut acc {
        m.iter_mut().for_each(|v| *v /= total);
    }
    Ok(acc)
}

fn normalize(v: &mut [f64]) -> Option<()> {
    let s: f64 = v.iter().sum();
    if !(s > 0.0 && s.is_finite()) {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= s);
    Some(())
}

#[derive(Clone)]
struct Edge {
    var: usize,
    factor: usize,
    /// Check coefficient, unused for tables.
    coeff: Symbol,
}

#[derive(Clone)]
enum Kind {
    Table { scope: Vec<usize>, table: Vec<f64> },
    Check { target: Symbol },
}

/// Message state of one sum-product run. Variables can be fixed between runs
/// and messages are kept, so successive runs warm-start.
#[derive(Clone)]
pub struct SumProduct {
    field: Field,
    q: usize,
    unary: Vec<Vec<f64>>,
    fixed: Vec<Option<Symbol>>,
    edges: Vec<Edge>,
    kinds: Vec<Kind>,
    /// Active edges per factor; fixing a variable drops it from checks.
    factor_edges: Vec<Vec<usize>>,
    var_edges: Vec<Vec<usize>>,
    pi: Vec<f64>,
    sigma: Vec<f64>,
    scratch: Vec<f64>,
}

impl SumProduct {
    pub fn new(graph: &FactorGraph) -> Result<Self> {
        let field = graph.field;
        let q = field.size();
        let n = graph.n;
        let mut unary = vec![vec![1.0; q]; n];
        let mut edges = Vec::new();
        let mut kinds = Vec::new();
        let mut factor_edges = Vec::new();
        let mut var_edges = vec![Vec::new(); n];
        for f in &graph.factors {
            match f {
                Factor::Table { scope, table } if scope.len() == 1 => {
                    for (u, &t) in unary[scope[0]].iter_mut().zip(table) {
                        *u *= t;
                    }
                }
                Factor::Table { scope, table } if scope.is_empty() => {
                    if table[0] <= 0.0 {
                        return Err(Error::Inconsistent("constant factor is zero".into()));
                    }
                }
                Factor::Check { scope, target, .. } if scope.is_empty() => {
                    if *target != 0 {
                        return Err(Error::Inconsistent(format!("empty check requires 0 = {target}")));
                    }
                }
                _ => {
                    let fid = kinds.len();
                    let mut mine = Vec::with_capacity(f.scope().len());
                    for (t, &v) in f.scope().iter().enumerate() {
                        let coeff = match f {
                            Factor::Check { coeffs, .. } => coeffs[t],
                            Factor::Table { .. } => 0,
                        };
                        var_edges[v].push(edges.len());
                        mine.push(edges.len());
                        edges.push(Edge {
                            var: v,
                            factor: fid,
                            coeff,
                        });
                    }
                    factor_edges.push(mine);
                    kinds.push(match f {
                        Factor::Table { scope, table } => Kind::Table {
                            scope: scope.clone(),
                            table: table.clone(),
                        },
                        Factor::Check { target, .. } => Kind::Check { target: *target },
                    });
                }
            }
        }
        let mut pi = vec![0.0; edges.len() * q];
        for (e, edge) in edges.iter().enumerate() {
            let dst = &mut pi[e * q..(e + 1) * q];
            dst.copy_from_slice(&unary[edge.var]);
            if normalize(dst).is_none() {
                return Err(Error::Inconsistent(format!("prior of variable {} is zero", edge.var)));
            }
        }
        let sigma = vec![1.0 / q as f64; edges.len() * q];
        Ok(SumProduct {
            field,
            q,
            unary,
            fixed: vec![None; n],
            edges,
            kinds,
            factor_edges,
            var_edges,
            pi,
            sigma,
            scratch: Vec::new(),
        })
    }

    pub fn is_fixed(&self, i: usize) -> Option<Symbol> {
        self.fixed[i]
    }

    /// Substitutes `x_i = v`: checks absorb it into their targets, table
    /// factors see a point-mass input.
    pub fn fix(&mut self, i: usize, v: Symbol) -> Result<()> {
        if v >= self.field.order() {
            return Err(Error::Usage(format!("symbol {v} outside {}", self.field)));
        }
        if self.fixed[i].is_some() {
            return Err(Error::Usage(format!("variable {i} already fixed")));
        }
        self.fixed[i] = Some(v);
        let q = self.q;
        for &e in &self.var_edges[i] {
            let fid = self.edges[e].factor;
            match &mut self.kinds[fid] {
                Kind::Check { target } => {
                    let f = self.field;
                    *target = f.sub(*target, f.mul(self.edges[e].coeff, v));
                    self.factor_edges[fid].retain(|&x| x != e);
                    if self.factor_edges[fid].is_empty() && *target != 0 {
                        return Err(Error::Inconsistent(format!(
                            "fixing variable {i} violates a check"
                        )));
                    }
                }
                Kind::Table { .. } => {
                    let dst = &mut self.pi[e * q..(e + 1) * q];
                    dst.fill(0.0);
                    dst[v as usize] = 1.0;
                }
            }
        }
        Ok(())
    }

    /// Runs flooding iterations until the largest factor-to-variable message
    /// change drops below `tol`. Returns `(converged, iterations)`.
    pub fn run(&mut self, cfg: &BpConfig) -> Result<(bool, usize)> {
        cfg.validate()?;
        for it in 1..=cfg.max_iters {
            let delta = self.update_factors(cfg.damping)?;
            self.update_variables()?;
            if delta < cfg.tol {
                return Ok((true, it));
            }
        }
        Ok((false, cfg.max_iters))
    }

    fn update_factors(&mut self, damping: f64) -> Result<f64> {
        let q = self.q;
        let mut delta: f64 = 0.0;
        let mut out = std::mem::take(&mut self.scratch);
        for fid in 0..self.kinds.len() {
            let active = &self.factor_edges[fid];
            if active.is_empty() {
                continue;
            }
            out.clear();
            out.resize(active.len() * q, 0.0);
            match &self.kinds[fid] {
                Kind::Check { target } => {
                    check_messages(self.field, &self.edges, active, &self.pi, *target, &mut out)
                }
                Kind::Table { scope, table } => {
                    table_messages(q, scope, table, active, &self.pi, &mut out)
                }
            }
            for (t, &e) in active.iter().enumerate() {
                let new = &mut out[t * q..(t + 1) * q];
                if normalize(new).is_none() {
                    return Err(Error::Inconsistent(format!(
                        "factor {fid} sends an all-zero message to variable {}",
                        self.edges[e].var
                    )));
                }
                let old = &mut self.sigma[e * q..(e + 1) * q];
                for (o, &nv) in old.iter_mut().zip(new.iter()) {
                    let v = (1.0 - damping) * nv + damping * *o;
                    delta = delta.max((v - *o).abs());
                    *o = v;
                }
            }
        }
        self.scratch = out;
        Ok(delta)
    }

    fn update_variables(&mut self) -> Result<()> {
        let q = self.q;
        let mut prefix = std::mem::take(&mut self.scratch);
        for i in 0..self.unary.len() {
            if self.fixed[i].is_some() {
                continue;
            }
            let ve = &self.var_edges[i];
            let d = ve.len();
            if d == 0 {
                continue;
            }
            // prefix[t] = unary * prod_{s < t} sigma_s
            prefix.clear();
            prefix.extend_from_slice(&self.unary[i]);
            for t in 0..d - 1 {
                let e = ve[t];
                for x in 0..q {
                    let v = prefix[t * q + x] * self.sigma[e * q + x];
                    prefix.push(v);
                }
            }
            let mut suffix = vec![1.0; q];
            for t in (0..d).rev() {
                let e = ve[t];
                let dst = &mut self.pi[e * q..(e + 1) * q];
                for x in 0..q {
                    dst[x] = prefix[t * q + x] * suffix[x];
                }
                if normalize(dst).is_none() {
                    return Err(Error::Inconsistent(format!(
                        "variable {i} has contradictory incoming messages"
                    )));
                }
                for x in 0..q {
                    suffix[x] *= self.sigma[e * q + x];
                }
                // Rescale to keep long products away from underflow.
                let m = suffix.iter().cloned().fold(0.0, f64::max);
                if m > 0.0 {
                    suffix.iter_mut().for_each(|v| *v /= m);
                }
            }
        }
        self.scratch = prefix;
        Ok(())
    }

    /// Current belief of variable `i`: unary times all incoming messages.
    pub fn marginal(&self, i: usize) -> Result<Vec<f64>> {
        let q = self.q;
        if let Some(v) = self.fixed[i] {
            let mut m = vec![0.0; q];
            m[v as usize] = 1.0;
            return Ok(m);
        }
        let mut m = self.unary[i].clone();
        for &e in &self.var_edges[i] {
            let s = &self.sigma[e * q..(e + 1) * q];
            m.iter_mut().zip(s).for_each(|(a, b)| *a *= b);
            let mx = m.iter().cloned().fold(0.0, f64::max);
            if mx > 0.0 {
                m.iter_mut().for_each(|v| *v /= mx);
            }
        }
        normalize(&mut m)
            .ok_or_else(|| Error::Inconsistent(format!("belief of variable {i} is zero")))?;
        Ok(m)
    }

    pub fn marginals(&self) -> Result<Vec<Vec<f64>>> {
        (0..self.unary.len()).map(|i| self.marginal(i)).collect()
    }

    /// Largest deviation of any stored message sum from 1.
    pub fn max_normalization_error(&self) -> f64 {
        self.pi
            .chunks(self.q)
            .chain(self.sigma.chunks(self.q))
            .map(|m| (m.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Check-to-variable messages: `sigma_t(v) = P(sum_{s != t} a_s X_s = c - a_t v)`
/// with `X_s ~ pi_s`, via prefix/suffix convolutions.
fn check_messages(
    field: Field,
    edges: &[Edge],
    active: &[usize],
    pi: &[f64],
    target: Symbol,
    out: &mut [f64],
) {
    let q = field.size();
    let d = active.len();
    if q == 2 {
        // P(sum = 0) - P(sum = 1) is the product of pi(0) - pi(1).
        let diff = |e: usize| pi[e * 2] - pi[e * 2 + 1];
        let mut prefix = vec![1.0; d + 1];
        for t in 0..d {
            prefix[t + 1] = prefix[t] * diff(active[t]);
        }
        let mut suffix = 1.0;
        for t in (0..d).rev() {
            let rest = prefix[t] * suffix;
            let (p_even, p_odd) = ((1.0 + rest) / 2.0, (1.0 - rest) / 2.0);
            let (a, b) = if target == 0 { (p_even, p_odd) } else { (p_odd, p_even) };
            out[t * 2] = a.max(0.0);
            out[t * 2 + 1] = b.max(0.0);
            suffix *= diff(active[t]);
        }
        return;
    }
    // Distribution of a_s X_s for each active edge.
    let scaled: Vec<Vec<f64>> = active
        .iter()
        .map(|&e| {
            let mut s = vec![0.0; q];
            for x in 0..q {
                s[field.mul(edges[e].coeff, x as Symbol) as usize] += pi[e * q + x];
            }
            s
        })
        .collect();
    let conv = |a: &[f64], b: &[f64]| -> Vec<f64> {
        let mut r = vec![0.0; q];
        for (i, &x) in a.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (j, &y) in b.iter().enumerate() {
                r[(i + j) % q] += x * y;
            }
        }
        r
    };
    let mut delta0 = vec![0.0; q];
    delta0[0] = 1.0;
    let mut prefix = Vec::with_capacity(d);
    let mut acc = delta0.clone();
    for s in &scaled {
        prefix.push(acc.clone());
        acc = conv(&acc, s);
    }
    let mut suffix = delta0;
    for t in (0..d).rev() {
        let rest = conv(&prefix[t], &suffix);
        let a = edges[active[t]].coeff;
        for v in 0..q {
            let need = field.sub(target, field.mul(a, v as Symbol));
            out[t * q + v] = rest[need as usize];
        }
        suffix = conv(&suffix, &scaled[t]);
    }
}

fn table_messages(
    q: usize,
    scope: &[usize],
    table: &[f64],
    active: &[usize],
    pi: &[f64],
    out: &mut [f64],
) {
    let k = scope.len();
    let mut digits = vec![0usize; k];
    for (idx, &w) in table.iter().enumerate() {
        let mut r = idx;
        for t in (0..k).rev() {
            digits[t] = r % q;
            r /= q;
        }
        if w == 0.0 {
            continue;
        }
        for t in 0..k {
            let mut p = w;
            for s in 0..k {
                if s != t {
                    p *= pi[active[s] * q + digits[s]];
                }
            }
            out[t * q + digits[t]] += p;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gf(q: u32) -> Field {
        Field::new(q).unwrap()
    }

    fn max_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        a.iter()
            .flatten()
            .zip(b.iter().flatten())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    fn random_pmf(rng: &mut ChaCha8Rng, q: usize) -> Vec<f64> {
        let mut p: Vec<f64> = (0..q).map(|_| rng.random::<f64>() + 0.05).collect();
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        p
    }

    /// Random tree: variable `i > 0` hangs off an earlier one through a check
    /// or a pairwise table.
    fn random_tree(rng: &mut ChaCha8Rng, q: u32, n: usize) -> FactorGraph {
        let f = gf(q);
        let mut factors = Vec::new();
        for i in 0..n {
            factors.push(Factor::Table {
                scope: vec![i],
                table: random_pmf(rng, q as usize),
            });
        }
        for i in 1..n {
            let parent = rng.random_range(0..i);
            if rng.random_bool(0.5) {
                factors.push(Factor::Check {
                    scope: vec![parent, i],
                    coeffs: vec![rng.random_range(1..q) as u16, rng.random_range(1..q) as u16],
                    target: rng.random_range(0..q) as u16,
                });
            } else {
                let t: Vec<f64> = (0..q * q).map(|_| rng.random::<f64>()).collect();
                factors.push(Factor::Table {
                    scope: vec![parent, i],
                    table: t,
                });
            }
        }
        FactorGraph::new(f, n, factors).unwrap()
    }

    #[test]
    fn coset_graph_construction() {
        let f = gf(2);
        let a = SparseMatrix::from_dense(f, 2, &[vec![1, 1]]).unwrap();
        let g = build_coset_graph(&a, &[0], &[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert_eq!(g.factors().len(), 3);
        assert_eq!(g.factors()[2].scope(), &[0, 1]);

        let empty = SparseMatrix::zeros(f, 0, 3);
        let g = build_coset_graph(&empty, &[], &vec![vec![0.5, 0.5]; 3]).unwrap();
        assert!(g.factors().iter().all(|x| x.scope().len() == 1));

        let id = SparseMatrix::identity(gf(3), 3);
        let g = build_coset_graph(&id, &[2, 0, 1], &vec![vec![1.0 / 3.0; 3]; 3]).unwrap();
        let m = sum_product(&g, &BpConfig::default()).unwrap();
        assert_eq!(m.marginals, vec![vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
        assert!(build_coset_graph(&id, &[0, 0], &vec![vec![1.0 / 3.0; 3]; 3]).is_err());
    }

    #[test]
    fn exact_marginal_examples() {
        let f = gf(2);
        let a = SparseMatrix::from_dense(f, 2, &[vec![1, 1]]).unwrap();
        let g = build_coset_graph(&a, &[0], &[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert_eq!(exact_marginals(&g, 1 << 20).unwrap(), vec![vec![0.5, 0.5]; 2]);

        let g = build_coset_graph(&a, &[0], &[vec![0.7, 0.3], vec![0.7, 0.3]]).unwrap();
        let m = exact_marginals(&g, 1 << 20).unwrap();
        // Coset {00, 11} with weights 0.49 and 0.09.
        assert!((m[0][0] - 0.49 / 0.58).abs() < 1e-15);
        let bp = sum_product(&g, &BpConfig::default()).unwrap();
        assert!(max_diff(&bp.marginals, &m) < 1e-12);

        let contra = FactorGraph::new(
            f,
            1,
            vec![
                Factor::Check { scope: vec![0], coeffs: vec![1], target: 0 },
                Factor::Check { scope: vec![0], coeffs: vec![1], target: 1 },
            ],
        )
        .unwrap();
        assert!(matches!(exact_marginals(&contra, 1 << 20), Err(Error::Inconsistent(_))));
        assert!(matches!(sum_product(&contra, &BpConfig::default()), Err(Error::Inconsistent(_))));
        assert!(matches!(exact_marginals(&g, 2), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn priors_only() {
        let priors = vec![vec![0.2, 0.8], vec![0.6, 0.4]];
        let g = build_coset_graph(&SparseMatrix::zeros(gf(2), 0, 2), &[], &priors).unwrap();
        assert_eq!(sum_product(&g, &BpConfig::default()).unwrap().marginals, priors);
    }

    #[test]
    fn chain_of_three_matches_enumeration() {
        for q in [2u32, 3, 5] {
            let f = gf(q);
            let mut rng = ChaCha8Rng::seed_from_u64(q as u64);
            let priors: Vec<_> = (0..3).map(|_| random_pmf(&mut rng, q as usize)).collect();
            let a = SparseMatrix::from_dense(f, 3, &[vec![1, 1, 0], vec![0, 1, q as u16 - 1]]).unwrap();
            let g = build_coset_graph(&a, &[1, 0], &priors).unwrap();
            let bp = sum_product(&g, &BpConfig::default()).unwrap();
            assert!(bp.converged);
            assert!(max_diff(&bp.marginals, &exact_marginals(&g, 1 << 20).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn random_trees_exact_within_n_iterations() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..60 {
            let q = [2u32, 3, 5][trial % 3];
            let n = rng.random_range(1..=if q == 5 { 7 } else { 10 });
            let g = random_tree(&mut rng, q, n);
            let exact = exact_marginals(&g, 1 << 20).unwrap();
            let cfg = BpConfig { max_iters: n.max(1) + 1, tol: 0.0, ..BpConfig::default() };
            let bp = sum_product(&g, &cfg).unwrap();
            assert!(max_diff(&bp.marginals, &exact) < 1e-10, "trial {trial}");
        }
    }

    #[test]
    fn messages_stay_normalized_and_damping_zero_is_plain() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = gf(3);
        let a = crate::linear::EnsembleSpec { n: 12, l: 8, field: f, tau: 2, seed: 4 }
            .sample()
            .unwrap();
        let x = crate::linear::random_vector(f, 12, &mut rng);
        let c = a.mul_vec(&x).unwrap();
        let priors: Vec<_> = (0..12).map(|_| random_pmf(&mut rng, 3)).collect();
        let g = build_coset_graph(&a, &c, &priors).unwrap();
        let mut bp = SumProduct::new(&g).unwrap();
        let one = BpConfig { max_iters: 1, tol: 0.0, ..BpConfig::default() };
        for _ in 0..30 {
            bp.run(&one).unwrap();
            assert!(bp.max_normalization_error() < 1e-9);
        }
        let stepped = bp.marginals().unwrap();
        let cfg = BpConfig { max_iters: 30, tol: 0.0, damping: 0.0 };
        let whole = sum_product(&g, &cfg).unwrap();
        assert_eq!(whole.marginals, stepped);

        let damped = sum_product(&g, &BpConfig { damping: 0.5, max_iters: 400, ..BpConfig::default() })
            .unwrap();
        assert!(damped.marginals.iter().all(|m| (m.iter().sum::<f64>() - 1.0).abs() < 1e-9));
    }

    #[test]
    fn relabeling_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let f = gf(3);
            let n = 9;
            let a = crate::linear::EnsembleSpec { n, l: 6, field: f, tau: 2, seed: rng.random() }
                .sample()
                .unwrap();
            let x = crate::linear::random_vector(f, n, &mut rng);
            let c = a.mul_vec(&x).unwrap();
            let priors: Vec<_> = (0..n).map(|_| random_pmf(&mut rng, 3)).collect();
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            // Column j of `a` becomes column perm[j].
            let rows: Vec<Vec<(u32, Symbol)>> = (0..a.rows())
                .map(|i| a.row(i).iter().map(|&(j, v)| (perm[j as usize] as u32, v)).collect())
                .collect();
            let b = SparseMatrix::from_entries(f, a.rows(), n, rows).unwrap();
            let mut permuted_priors = vec![Vec::new(); n];
            for j in 0..n {
                permuted_priors[perm[j]] = priors[j].clone();
            }
            let cfg = BpConfig { max_iters: 20, tol: 0.0, ..BpConfig::default() };
            let m1 = sum_product(&build_coset_graph(&a, &c, &priors).unwrap(), &cfg).unwrap();
            let m2 = sum_product(&build_coset_graph(&b, &c, &permuted_priors).unwrap(), &cfg).unwrap();
            for j in 0..n {
                for v in 0..3 {
                    assert!((m1.marginals[j][v] - m2.marginals[perm[j]][v]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn fixing_matches_conditioning() {
        let f = gf(3);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..40 {
            let n = 6;
            let g = random_tree(&mut rng, 3, n);
            let v = rng.random_range(0..3u16);
            // Condition by adding a pinning check.
            let mut factors = g.factors().to_vec();
            factors.push(Factor::Check { scope: vec![0], coeffs: vec![1], target: v });
            let pinned = FactorGraph::new(f, n, factors).unwrap();
            let Ok(exact) = exact_marginals(&pinned, 1 << 20) else {
                continue;
            };
            let mut bp = SumProduct::new(&g).unwrap();
            bp.run(&BpConfig::default()).unwrap();
            bp.fix(0, v).unwrap();
            bp.run(&BpConfig::default()).unwrap();
            assert!(max_diff(&bp.marginals().unwrap(), &exact) < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_graphs() {
        let f = gf(2);
        let unsorted = Factor::Check { scope: vec![1, 0], coeffs: vec![1, 1], target: 0 };
        assert!(FactorGraph::new(f, 2, vec![unsorted]).is_err());
        let short = Factor::Table { scope: vec![0, 1], table: vec![1.0; 3] };
        assert!(FactorGraph::new(f, 2, vec![short]).is_err());
        let zero_coeff = Factor::Check { scope: vec![0], coeffs: vec![0], target: 0 };
        assert!(FactorGraph::new(f, 2, vec![zero_coeff]).is_err());
        assert!(BpConfig { damping: 1.0, ..BpConfig::default() }.validate().is_err());
        assert!(BpConfig { max_iters: 0, ..BpConfig::default() }.validate().is_err());
    }
}
