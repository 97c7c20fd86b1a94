//! Hash-property diagnostics for ensembles of linear maps `GF(q)^n -> GF(q)^l`.
//!
//! Exact ensembles carry integer member weights over a common denominator,
//! so collision probabilities and spectra are exact rationals until the
//! final division. For linear maps `P(Au = Au')` only depends on `u - u'`;
//! [`KernelProfile`] tabulates `P(Ad = 0)` for every `d` and the collision
//! statistics, average spectrum and (H3)-type checks are read off it. The
//! collision-resistance and balanced-coloring checks enumerate members
//! directly.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{check_cap, check_len, states, Error, Result};
use crate::gf::{Field, Symbol};
use crate::linear::{row_reduce, sample_sparse_matrix, EnsembleSpec, SparseMatrix};
use crate::stats::{MeanAcc, Proportion};

/// Largest ensemble that is enumerated exactly.
pub const EXACT_MEMBER_CAP: u64 = 1 << 24;
/// Largest domain `q^n` scanned per matrix.
pub const DOMAIN_CAP: u64 = 1 << 20;

/// Relative slack used when comparing computed probabilities with bounds.
const REL_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum Ensemble {
    /// Uniform over all `l x n` matrices.
    AllLinear { field: Field, n: usize, l: usize },
    /// The sparse ensemble with `tau` additions per column.
    SparseTau {
        field: Field,
        n: usize,
        l: usize,
        tau: usize,
    },
    /// Explicit matrices with integer multiplicities.
    Explicit {
        field: Field,
        n: usize,
        l: usize,
        members: Vec<(SparseMatrix, u64)>,
    },
    /// Independent pair, acting as the stacked map `u -> (Au, Bu)`.
    Product(Box<Ensemble>, Box<Ensemble>),
}

impl Ensemble {
    pub fn explicit(members: Vec<(SparseMatrix, u64)>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::Usage("explicit ensemble needs at least one member".into()))?;
        let (field, n, l) = (first.0.field(), first.0.cols(), first.0.rows());
        for (m, w) in &members {
            if m.field() != field {
                return Err(Error::Usage("explicit members must share a field".into()));
            }
            check_len("member columns", n, m.cols())?;
            check_len("member rows", l, m.rows())?;
            if *w == 0 {
                return Err(Error::Usage("member multiplicities must be positive".into()));
            }
        }
        Ok(Ensemble::Explicit {
            field,
            n,
            l,
            members,
        })
    }

    pub fn field(&self) -> Field {
        match self {
            Ensemble::AllLinear { field, .. }
            | Ensemble::SparseTau { field, .. }
            | Ensemble::Explicit { field, .. } => *field,
            Ensemble::Product(a, _) => a.field(),
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Ensemble::AllLinear { n, .. }
            | Ensemble::SparseTau { n, .. }
            | Ensemble::Explicit { n, .. } => *n,
            Ensemble::Product(a, _) => a.n(),
        }
    }

    /// Output length `l`; the image set is all of `GF(q)^l`.
    pub fn l(&self) -> usize {
        match self {
            Ensemble::AllLinear { l, .. }
            | Ensemble::SparseTau { l, .. }
            | Ensemble::Explicit { l, .. } => *l,
            Ensemble::Product(a, b) => a.l() + b.l(),
        }
    }

    /// `|Im A| = q^l`.
    pub fn image_size(&self) -> f64 {
        states(self.field().size(), self.l())
    }

    /// Whether the ensemble can be enumerated exactly.
    pub fn is_exact(&self) -> bool {
        self.prepare().is_ok()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SparseMatrix> {
        match self {
            Ensemble::AllLinear { field, n, l } => {
                let dense: Vec<Vec<Symbol>> = (0..*l)
                    .map(|_| crate::linear::random_vector(*field, *n, rng))
                    .collect();
                SparseMatrix::from_dense(*field, *n, &dense)
            }
            Ensemble::SparseTau { field, n, l, tau } => {
                let spec = EnsembleSpec {
                    n: *n,
                    l: *l,
                    field: *field,
                    tau: *tau,
                    seed: 0,
                };
                sample_sparse_matrix(&spec, rng)
            }
            Ensemble::Explicit { members, .. } => {
                let total: u64 = members.iter().map(|(_, w)| w).sum();
                let mut r = rng.random_range(0..total);
                for (m, w) in members {
                    if r < *w {
                        return Ok(m.clone());
                    }
                    r -= w;
                }
                unreachable!("weights sum to total")
            }
            Ensemble::Product(a, b) => a.sample(rng)?.stack(&b.sample(rng)?),
        }
    }

    fn prepare(&self) -> Result<Prepared> {
        let overflow = || Error::CapExceeded {
            what: "exact ensemble",
            needed: f64::INFINITY,
            cap: EXACT_MEMBER_CAP,
        };
        let p = match self {
            Ensemble::AllLinear { field, n, l } => {
                check_cap("exact ensemble", field.size(), n * l, EXACT_MEMBER_CAP)?;
                let count = (field.size() as u64).pow((n * l) as u32);
                Prepared {
                    field: *field,
                    n: *n,
                    l: *l,
                    count,
                    denominator: count as u128,
                    kind: PKind::AllLinear,
                }
            }
            Ensemble::SparseTau { field, n, l, tau } => {
                EnsembleSpec {
                    n: *n,
                    l: *l,
                    field: *field,
                    tau: *tau,
                    seed: 0,
                }
                .validate()?;
                let (support, denom) = column_distribution(*field, *l, *tau)?;
                let count_f = states(support.len(), *n);
                if count_f > EXACT_MEMBER_CAP as f64 {
                    return Err(Error::CapExceeded {
                        what: "exact ensemble",
                        needed: count_f,
                        cap: EXACT_MEMBER_CAP,
                    });
                }
                let mut denominator: u128 = 1;
                for _ in 0..*n {
                    denominator = denominator.checked_mul(denom).ok_or_else(overflow)?;
                }
                Prepared {
                    field: *field,
                    n: *n,
                    l: *l,
                    count: count_f as u64,
                    denominator,
                    kind: PKind::Columns(support),
                }
            }
            Ensemble::Explicit {
                field,
                n,
                l,
                members,
            } => Prepared {
                field: *field,
                n: *n,
                l: *l,
                count: members.len() as u64,
                denominator: members.iter().map(|(_, w)| *w as u128).sum(),
                kind: PKind::List(members.iter().map(|(m, w)| (m.clone(), *w as u128)).collect()),
            },
            Ensemble::Product(a, b) => {
                let (pa, pb) = (a.prepare()?, b.prepare()?);
                if pa.field != pb.field || pa.n != pb.n {
                    return Err(Error::Usage("product ensembles need a common domain".into()));
                }
                let count = pa.count.checked_mul(pb.count).ok_or_else(overflow)?;
                if count > EXACT_MEMBER_CAP {
                    return Err(Error::CapExceeded {
                        what: "exact ensemble",
                        needed: count as f64,
                        cap: EXACT_MEMBER_CAP,
                    });
                }
                Prepared {
                    field: pa.field,
                    n: pa.n,
                    l: pa.l + pb.l,
                    count,
                    denominator: pa.denominator.checked_mul(pb.denominator).ok_or_else(overflow)?,
                    kind: PKind::Product(Box::new(pa), Box::new(pb)),
                }
            }
        };
        Ok(p)
    }
}

/// Law of one sparse column: every reachable dense column with its count
/// out of `(l (q-1))^tau` equally likely draw sequences.
pub fn column_distribution(field: Field, l: usize, tau: usize) -> Result<(Vec<(Vec<Symbol>, u128)>, u128)> {
    let choices = l * (field.size() - 1);
    check_cap("column draw sequences", choices, tau, EXACT_MEMBER_CAP)?;
    let mut counts: BTreeMap<Vec<Symbol>, u128> = BTreeMap::new();
    let mut draw = vec![0usize; tau];
    loop {
        let mut col = vec![0 as Symbol; l];
        for &d in &draw {
            let (row, a) = (d / (field.size() - 1), 1 + (d % (field.size() - 1)) as Symbol);
            col[row] = field.add(col[row], a);
        }
        *counts.entry(col).or_default() += 1;
        let mut i = tau;
        loop {
            if i == 0 {
                let denom = (choices as u128).pow(tau as u32);
                return Ok((counts.into_iter().collect(), denom));
            }
            i -= 1;
            draw[i] += 1;
            if draw[i] < choices {
                break;
            }
            draw[i] = 0;
        }
    }
}

enum PKind {
    AllLinear,
    Columns(Vec<(Vec<Symbol>, u128)>),
    List(Vec<(SparseMatrix, u128)>),
    Product(Box<Prepared>, Box<Prepared>),
}

/// An exact ensemble indexed `0..count`, member weights over `denominator`.
struct Prepared {
    field: Field,
    n: usize,
    l: usize,
    count: u64,
    denominator: u128,
    kind: PKind,
}

impl Prepared {
    fn member(&self, i: u64) -> (SparseMatrix, u128) {
        let q = self.field.size() as u64;
        match &self.kind {
            PKind::AllLinear => {
                // Entries in row-major order, last entry fastest.
                let mut dense = vec![vec![0 as Symbol; self.n]; self.l];
                let mut r = i;
                for idx in (0..self.n * self.l).rev() {
                    dense[idx / self.n][idx % self.n] = (r % q) as Symbol;
                    r /= q;
                }
                (SparseMatrix::from_dense(self.field, self.n, &dense).expect("shape"), 1)
            }
            PKind::Columns(support) => {
                let s = support.len() as u64;
                let mut dense = vec![vec![0 as Symbol; self.n]; self.l];
                let mut w: u128 = 1;
                let mut r = i;
                for j in (0..self.n).rev() {
                    let (col, c) = &support[(r % s) as usize];
                    r /= s;
                    w *= c;
                    for (row, &v) in col.iter().enumerate() {
                        dense[row][j] = v;
                    }
                }
                (SparseMatrix::from_dense(self.field, self.n, &dense).expect("shape"), w)
            }
            PKind::List(list) => list[i as usize].clone(),
            PKind::Product(a, b) => {
                let (ma, wa) = a.member(i / b.count);
                let (mb, wb) = b.member(i % b.count);
                (ma.stack(&mb).expect("common domain"), wa * wb)
            }
        }
    }

    /// Folds over all members in parallel; `merge` must be order-insensitive
    /// (integer sums) or the result would depend on the thread count.
    fn fold<T: Send>(
        &self,
        init: impl Fn() -> T + Sync + Send,
        step: impl Fn(&mut T, SparseMatrix, u128) + Sync + Send,
        merge: impl Fn(T, T) -> T + Sync + Send,
    ) -> T {
        (0..self.count)
            .into_par_iter()
            .fold(&init, |mut acc, i| {
                let (m, w) = self.member(i);
                step(&mut acc, m, w);
                acc
            })
            .reduce(&init, merge)
    }

    /// Ordered fold for floating-point accumulators: fixed chunks, merged
    /// in index order.
    fn fold_ordered<T: Send>(
        &self,
        init: impl Fn() -> T + Sync + Send,
        step: impl Fn(&mut T, SparseMatrix, u128) + Sync + Send,
        mut merge: impl FnMut(&mut T, T),
    ) -> T {
        const CHUNKS: u64 = 64;
        let chunks = CHUNKS.min(self.count.max(1));
        let parts: Vec<T> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut acc = init();
                for i in c * self.count / chunks..(c + 1) * self.count / chunks {
                    let (m, w) = self.member(i);
                    step(&mut acc, m, w);
                }
                acc
            })
            .collect();
        let mut total = init();
        for p in parts {
            merge(&mut total, p);
        }
        total
    }
}

fn vector_index(q: usize, v: &[Symbol]) -> usize {
    v.iter().fold(0, |acc, &x| acc * q + x as usize)
}

fn index_vector(q: usize, n: usize, mut idx: usize) -> Vec<Symbol> {
    let mut v = vec![0; n];
    for i in (0..n).rev() {
        v[i] = (idx % q) as Symbol;
        idx /= q;
    }
    v
}

/// Composition of a vector: count of each symbol `0..q`.
pub type Composition = Vec<u32>;

pub fn composition(q: usize, v: &[Symbol]) -> Composition {
    let mut t = vec![0u32; q];
    for &x in v {
        t[x as usize] += 1;
    }
    t
}

/// `|C_t| = n! / prod t_s!`.
pub fn type_class_size(t: &[u32]) -> u128 {
    let mut total: u128 = 1;
    let mut placed: u128 = 0;
    for &c in t {
        // multiply by binom(placed + c, c) incrementally
        for k in 1..=c as u128 {
            placed += 1;
            total = total * placed / k;
        }
    }
    total
}

/// All compositions of `n` into `q` parts except the all-zero vector's type,
/// in lexicographic order.
pub fn nonzero_types(q: usize, n: usize) -> Vec<Composition> {
    fn rec(q: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Composition>) {
        if cur.len() == q - 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for c in 0..=left {
            cur.push(c);
            rec(q, left - c, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(q, n as u32, &mut Vec::new(), &mut out);
    out.retain(|t| t[0] as usize != n);
    out
}

/// `P(Ad = 0)` for every `d in GF(q)^n`, as integer numerators.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelProfile {
    field: Field,
    n: usize,
    l: usize,
    denominator: u128,
    counts: Vec<u128>,
}

pub fn kernel_profile(e: &Ensemble) -> Result<KernelProfile> {
    let p = e.prepare()?;
    let q = p.field.size();
    check_cap("kernel profile domain", q, p.n, DOMAIN_CAP)?;
    let size = q.pow(p.n as u32);
    let zeros = vec![0 as Symbol; p.l];
    let counts = p.fold(
        || vec![0u128; size],
        |acc, m, w| {
            let ech = row_reduce(&m);
            let kernel = ech.coset(&zeros).expect("target length").expect("0 is in the image");
            kernel
                .for_each_member(DOMAIN_CAP, |d| acc[vector_index(q, d)] += w)
                .expect("kernel within domain cap");
        },
        |mut a, b| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            a
        },
    );
    Ok(KernelProfile {
        field: p.field,
        n: p.n,
        l: p.l,
        denominator: p.denominator,
        counts,
    })
}

impl KernelProfile {
    pub fn field(&self) -> Field {
        self.field
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn image_size(&self) -> f64 {
        states(self.field.size(), self.l)
    }

    /// `P(Ad = 0)` as `(numerator, denominator)`.
    pub fn kernel_ratio(&self, d: &[Symbol]) -> (u128, u128) {
        (self.counts[vector_index(self.field.size(), d)], self.denominator)
    }

    pub fn kernel_prob(&self, d: &[Symbol]) -> f64 {
        let (a, b) = self.kernel_ratio(d);
        a as f64 / b as f64
    }

    fn prob_at(&self, idx: usize) -> f64 {
        self.counts[idx] as f64 / self.denominator as f64
    }

    /// `P(Au = Au')`.
    pub fn collision_prob(&self, u: &[Symbol], v: &[Symbol]) -> Result<f64> {
        check_len("u", self.n, u.len())?;
        check_len("u'", self.n, v.len())?;
        if u == v {
            return Err(Error::Usage("collision probability needs u != u'".into()));
        }
        let f = self.field;
        let d: Vec<Symbol> = u.iter().zip(v).map(|(&a, &b)| f.sub(a, b)).collect();
        Ok(self.kernel_prob(&d))
    }

    /// Whether `P(Ad = 0)` depends on `d` only through its composition.
    pub fn is_type_invariant(&self) -> bool {
        let q = self.field.size();
        let mut seen: BTreeMap<Composition, u128> = BTreeMap::new();
        (0..self.counts.len()).all(|idx| {
            let t = composition(q, &index_vector(q, self.n, idx));
            *seen.entry(t).or_insert(self.counts[idx]) == self.counts[idx]
        })
    }

    /// Smallest `beta` for which (H3) holds at this `alpha`, i.e. the largest
    /// over `u` of the tail sum. For linear maps it does not depend on `u`.
    pub fn h3_min_beta(&self, alpha: f64) -> f64 {
        let threshold = alpha / self.image_size() * (1.0 + REL_TOL);
        (1..self.counts.len())
            .map(|i| self.prob_at(i))
            .filter(|&p| p > threshold)
            .sum()
    }
}

/// `P(Au = Au')` by direct enumeration of members.
pub fn collision_prob(e: &Ensemble, u: &[Symbol], v: &[Symbol]) -> Result<f64> {
    let p = e.prepare()?;
    check_len("u", p.n, u.len())?;
    check_len("u'", p.n, v.len())?;
    if u == v {
        return Err(Error::Usage("collision probability needs u != u'".into()));
    }
    let hits = p.fold(
        || 0u128,
        |acc, m, w| {
            if m.mul_vec_unchecked(u) == m.mul_vec_unchecked(v) {
                *acc += w;
            }
        },
        |a, b| a + b,
    );
    Ok(hits as f64 / p.denominator as f64)
}

/// Monte-Carlo collision probability with a Wilson interval at `z`.
pub fn collision_prob_mc<R: Rng + ?Sized>(
    e: &Ensemble,
    u: &[Symbol],
    v: &[Symbol],
    trials: u64,
    z: f64,
    rng: &mut R,
) -> Result<Proportion> {
    check_len("u", e.n(), u.len())?;
    check_len("u'", e.n(), v.len())?;
    if u == v {
        return Err(Error::Usage("collision probability needs u != u'".into()));
    }
    let mut hits = 0;
    for _ in 0..trials {
        let m = e.sample(rng)?;
        if m.mul_vec(u)? == m.mul_vec(v)? {
            hits += 1;
        }
    }
    Ok(Proportion::new(hits, trials, z))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumEntry {
    pub class_size: u128,
    /// `S(p_A, t)`: exact expectation or Monte-Carlo mean.
    pub s: f64,
    pub stderr: f64,
}

/// Average spectrum over every nonzero type.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumTable {
    pub field: Field,
    pub n: usize,
    pub l: usize,
    pub exact: bool,
    pub samples: u64,
    pub entries: BTreeMap<Composition, SpectrumEntry>,
}

impl SpectrumTable {
    pub fn from_profile(p: &KernelProfile) -> Self {
        let q = p.field.size();
        let mut sums: BTreeMap<Composition, u128> =
            nonzero_types(q, p.n).into_iter().map(|t| (t, 0)).collect();
        for idx in 1..p.counts.len() {
            let t = composition(q, &index_vector(q, p.n, idx));
            *sums.get_mut(&t).expect("nonzero type") += p.counts[idx];
        }
        SpectrumTable {
            field: p.field,
            n: p.n,
            l: p.l,
            exact: true,
            samples: 0,
            entries: sums
                .into_iter()
                .map(|(t, s)| {
                    let entry = SpectrumEntry {
                        class_size: type_class_size(&t),
                        s: s as f64 / p.denominator as f64,
                        stderr: 0.0,
                    };
                    (t, entry)
                })
                .collect(),
        }
    }

    /// `S(p_Abar, t) = |C_t| q^{-l}` for the uniform ensemble.
    pub fn uniform_reference(&self, t: &[u32]) -> f64 {
        type_class_size(t) as f64 / states(self.field.size(), self.l)
    }

    /// `|Im A| = q^l`.
    pub fn image_size(&self) -> f64 {
        states(self.field.size(), self.l)
    }

    /// Rows `(composition, |C_t|, S, stderr)` with the composition written
    /// as symbol counts joined by `;`.
    pub fn rows(&self) -> Vec<(String, u128, f64, f64)> {
        self.entries
            .iter()
            .map(|(t, e)| {
                let comp = t.iter().map(u32::to_string).collect::<Vec<_>>().join(";");
                (comp, e.class_size, e.s, e.stderr)
            })
            .collect()
    }
}

/// Exact spectrum for exact ensembles; otherwise the mean over `budget`
/// sampled matrices, each with its kernel enumerated.
pub fn avg_spectrum<R: Rng + ?Sized>(e: &Ensemble, budget: u64, rng: &mut R) -> Result<SpectrumTable> {
    if e.is_exact() {
        return Ok(SpectrumTable::from_profile(&kernel_profile(e)?));
    }
    avg_spectrum_mc(e, budget, rng)
}

pub fn avg_spectrum_mc<R: Rng + ?Sized>(e: &Ensemble, budget: u64, rng: &mut R) -> Result<SpectrumTable> {
    let field = e.field();
    let q = field.size();
    let n = e.n();
    check_cap("spectrum domain", q, n, DOMAIN_CAP)?;
    if budget == 0 {
        return Err(Error::Usage("spectrum sampling needs a positive budget".into()));
    }
    let types = nonzero_types(q, n);
    let slot: BTreeMap<Composition, usize> = types.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
    let mut accs = vec![MeanAcc::default(); types.len()];
    let zeros = vec![0 as Symbol; e.l()];
    let mut counts = vec![0u64; types.len()];
    for _ in 0..budget {
        let m = e.sample(rng)?;
        counts.iter_mut().for_each(|c| *c = 0);
        let kernel = row_reduce(&m).coset(&zeros)?.expect("0 is in the image");
        kernel.for_each_member(DOMAIN_CAP, |d| {
            if d.iter().any(|&x| x != 0) {
                counts[slot[&composition(q, d)]] += 1;
            }
        })?;
        for (a, &c) in accs.iter_mut().zip(&counts) {
            a.push(c as f64);
        }
    }
    Ok(SpectrumTable {
        field,
        n,
        l: e.l(),
        exact: false,
        samples: budget,
        entries: types
            .into_iter()
            .zip(accs)
            .map(|(t, a)| {
                let entry = SpectrumEntry {
                    class_size: type_class_size(&t),
                    s: a.mean(),
                    stderr: a.stderr(),
                };
                (t, entry)
            })
            .collect(),
    })
}

/// Types of weight (nonzero count) above `rho * n`.
pub fn default_h_hat(spec: &SpectrumTable, rho: f64) -> Vec<Composition> {
    spec.entries
        .keys()
        .filter(|t| (spec.n as u32 - t[0]) as f64 > rho * spec.n as f64)
        .cloned()
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlphaBeta {
    pub alpha: f64,
    pub beta: f64,
    /// Same quantities through `|Im A| max p_t` and `sum |C_t| p_t`.
    pub alpha_via_prob: f64,
    pub beta_via_prob: f64,
    pub h_hat: Vec<Composition>,
}

impl AlphaBeta {
    pub fn forms_agree(&self) -> bool {
        close(self.alpha, self.alpha_via_prob) && close(self.beta, self.beta_via_prob)
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= REL_TOL * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// `alpha = |Im A|/q^l * max_{t in H} S(t)/S_bar(t)` and
/// `beta = sum_{t not in H} S(t)`, with `p_t = S(t)/|C_t|` for the cross-check.
/// An empty `H` gives `alpha = 0`.
pub fn alpha_beta(spec: &SpectrumTable, h_hat: &[Composition]) -> Result<AlphaBeta> {
    let image = spec.image_size();
    let ql = states(spec.field.size(), spec.l);
    let mut alpha: f64 = 0.0;
    let mut max_p: f64 = 0.0;
    for t in h_hat {
        let e = spec
            .entries
            .get(t)
            .ok_or_else(|| Error::Usage(format!("type {t:?} is not a nonzero type of length {}", spec.n)))?;
        let reference = spec.uniform_reference(t);
        if reference <= 0.0 {
            return Err(Error::Usage(format!("uniform reference spectrum vanishes at {t:?}")));
        }
        alpha = alpha.max(image / ql * e.s / reference);
        max_p = max_p.max(e.s / e.class_size as f64);
    }
    let mut beta = 0.0;
    let mut beta2 = 0.0;
    for (t, e) in &spec.entries {
        if !h_hat.contains(t) {
            beta += e.s;
            beta2 += e.class_size as f64 * (e.s / e.class_size as f64);
        }
    }
    Ok(AlphaBeta {
        alpha,
        beta,
        alpha_via_prob: image * max_p,
        beta_via_prob: beta2,
        h_hat: h_hat.to_vec(),
    })
}

/// Outcome of an inequality check `lhs <= rhs`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

impl BoundCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        BoundCheck {
            lhs,
            rhs,
            pass: lhs <= rhs + REL_TOL * rhs.abs().max(1.0),
        }
    }
}

/// (H3) at `u`: the sum of collision probabilities exceeding
/// `alpha/|Im A|` must not exceed `beta`.
pub fn check_h3(p: &KernelProfile, u: &[Symbol], alpha: f64, beta: f64) -> Result<BoundCheck> {
    check_len("u", p.n, u.len())?;
    let q = p.field.size();
    let threshold = alpha / p.image_size() * (1.0 + REL_TOL);
    let mut sum = 0.0;
    for idx in 0..p.counts.len() {
        let v = index_vector(q, p.n, idx);
        if v == u {
            continue;
        }
        let c = p.collision_prob(u, &v)?;
        if c > threshold {
            sum += c;
        }
    }
    Ok(BoundCheck::new(sum, beta))
}

/// (H3') for explicit sets `T`, `T'`.
pub fn check_h3prime(
    p: &KernelProfile,
    t1: &[Vec<Symbol>],
    t2: &[Vec<Symbol>],
    alpha: f64,
    beta: f64,
) -> Result<BoundCheck> {
    let mut lhs = 0.0;
    let mut common = 0usize;
    for u in t1 {
        for v in t2 {
            if u == v {
                lhs += 1.0;
                common += 1;
            } else {
                lhs += p.collision_prob(u, v)?;
            }
        }
    }
    let (a, b) = (t1.len() as f64, t2.len() as f64);
    let rhs = common as f64 + a * b * alpha / p.image_size() + a.min(b) * beta;
    Ok(BoundCheck::new(lhs, rhs))
}

/// Collision resistance: `P(some u' in G \ {u} shares the bin of u)` against
/// `|G| alpha/|Im A| + beta`.
pub fn check_crp(e: &Ensemble, g: &[Vec<Symbol>], u: &[Symbol], alpha: f64, beta: f64) -> Result<BoundCheck> {
    let p = e.prepare()?;
    check_len("u", p.n, u.len())?;
    for v in g {
        check_len("member of G", p.n, v.len())?;
    }
    let others: Vec<&Vec<Symbol>> = g.iter().filter(|v| v.as_slice() != u).collect();
    let hits = p.fold(
        || 0u128,
        |acc, m, w| {
            let cu = m.mul_vec_unchecked(u);
            if others.iter().any(|v| m.mul_vec_unchecked(v) == cu) {
                *acc += w;
            }
        },
        |a, b| a + b,
    );
    let lhs = hits as f64 / p.denominator as f64;
    let distinct: std::collections::BTreeSet<&Vec<Symbol>> = g.iter().collect();
    let rhs = distinct.len() as f64 * alpha / e.image_size() + beta;
    Ok(BoundCheck::new(lhs, rhs))
}

/// Balanced coloring: `E_A sum_c |Q(T cap C_A(c))/Q(T) - 1/|Im A||` against
/// `sqrt(alpha - 1 + (beta + 1)|Im A| max Q / Q(T))`. The sum runs over all
/// of `GF(q)^l`, so empty bins contribute `1/|Im A|` each.
pub fn check_bcp(
    e: &Ensemble,
    t: &[Vec<Symbol>],
    weights: &[f64],
    alpha: f64,
    beta: f64,
) -> Result<BoundCheck> {
    let p = e.prepare()?;
    check_len("weights", t.len(), weights.len())?;
    for v in t {
        check_len("member of T", p.n, v.len())?;
    }
    if weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
        return Err(Error::Usage("Q must be finite and nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Usage("Q(T) must be positive".into()));
    }
    let image = e.image_size();
    let lhs_num = p.fold_ordered(
        || 0.0f64,
        |acc, m, w| {
            let mut bins: BTreeMap<Vec<Symbol>, f64> = BTreeMap::new();
            for (v, &qv) in t.iter().zip(weights) {
                *bins.entry(m.mul_vec_unchecked(v)).or_default() += qv;
            }
            let empty = image - bins.len() as f64;
            let dev: f64 = bins.values().map(|&b| (b / total - 1.0 / image).abs()).sum::<f64>()
                + empty / image;
            *acc += w as f64 * dev;
        },
        |a, b| *a += b,
    );
    let lhs = lhs_num / p.denominator as f64;
    let max_q = weights.iter().cloned().fold(0.0, f64::max);
    let rhs = (alpha - 1.0 + (beta + 1.0) * image * max_q / total).max(0.0).sqrt();
    Ok(BoundCheck::new(lhs, rhs))
}

/// The product ensemble and its composed constants
/// `(alpha_A alpha_B, beta_A + beta_B)`.
pub fn product_ensemble(
    a: &Ensemble,
    ab_a: (f64, f64),
    b: &Ensemble,
    ab_b: (f64, f64),
) -> Result<(Ensemble, (f64, f64))> {
    if a.field() != b.field() || a.n() != b.n() {
        return Err(Error::Usage("product ensembles need a common domain".into()));
    }
    Ok((
        Ensemble::Product(Box::new(a.clone()), Box::new(b.clone())),
        (ab_a.0 * ab_b.0, ab_a.1 + ab_b.1),
    ))
}
