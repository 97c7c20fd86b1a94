//! Constrained random number generation: sampling `x` from a prior
//! restricted to the coset `{x : Ax = c}`, one symbol at a time.
//!
//! Step `k` draws `x_k` from the conditional law given the prefix. Two
//! engines compute that law: exhaustive suffix enumeration (exact, small
//! `n`) and sum-product on the coset graph with the prefix substituted.
//! Once every remaining position is forced by the prefix, generation can
//! stop early and finish with the unique completion.
//!
//! The interval variant replaces the per-step uniform draw by nested
//! interval selection driven by the bits of one point `omega in [0, 1)`.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{check_cap, check_len, Error, Result};
use crate::factor_graph::{build_coset_graph, BpConfig, SumProduct};
use crate::gf::{Field, Symbol};
use crate::linear::{coset_members, SequentialSolver, SparseMatrix};
use crate::models::{entropy, sample_index, MemorylessSource};

/// A law on sequences given through its chain-rule conditionals.
///
/// Memoryless priors also expose their per-position pmfs, which the
/// sum-product engine needs; other priors only work with the exact engine.
pub trait SequencePrior {
    fn len(&self) -> usize;
    fn alphabet(&self) -> usize;
    /// `P(x_k = v | x_1..x_{k-1} = prefix)` with `k = prefix.len()`.
    fn prob(&self, prefix: &[Symbol], v: Symbol) -> f64;
    fn memoryless(&self) -> Option<&[Vec<f64>]> {
        None
    }
}

impl SequencePrior for [Vec<f64>] {
    fn len(&self) -> usize {
        <[Vec<f64>]>::len(self)
    }
    fn alphabet(&self) -> usize {
        self.first().map_or(0, Vec::len)
    }
    fn prob(&self, prefix: &[Symbol], v: Symbol) -> f64 {
        self[prefix.len()][v as usize]
    }
    fn memoryless(&self) -> Option<&[Vec<f64>]> {
        Some(self)
    }
}

impl SequencePrior for Vec<Vec<f64>> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }
    fn alphabet(&self) -> usize {
        self.as_slice().alphabet()
    }
    fn prob(&self, prefix: &[Symbol], v: Symbol) -> f64 {
        self.as_slice().prob(prefix, v)
    }
    fn memoryless(&self) -> Option<&[Vec<f64>]> {
        Some(self)
    }
}

impl SequencePrior for MemorylessSource {
    fn len(&self) -> usize {
        MemorylessSource::len(self)
    }
    fn alphabet(&self) -> usize {
        MemorylessSource::alphabet(self)
    }
    fn prob(&self, prefix: &[Symbol], v: Symbol) -> f64 {
        self.pmf(prefix.len())[v as usize]
    }
    fn memoryless(&self) -> Option<&[Vec<f64>]> {
        Some(self.pmfs())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Engine {
    Exact,
    SumProduct,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrngConfig {
    pub engine: Engine,
    /// Largest number of suffix states the exact engine may enumerate per step.
    pub exact_cap: u64,
    pub bp: BpConfig,
    pub early_stop: bool,
    /// Fresh-randomness retries after a dead end (sum-product engine only).
    pub max_restarts: usize,
}

impl Default for CrngConfig {
    fn default() -> Self {
        CrngConfig {
            engine: Engine::SumProduct,
            exact_cap: 1 << 16,
            bp: BpConfig::default(),
            early_stop: true,
            max_restarts: 16,
        }
    }
}

impl CrngConfig {
    pub fn exact() -> Self {
        CrngConfig {
            engine: Engine::Exact,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.exact_cap == 0 {
            return Err(Error::Usage("exact_cap must be positive".into()));
        }
        self.bp.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Full,
    /// Stopped after `k` drawn symbols; the rest was the unique completion.
    EarlyAt(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedSample {
    pub x: Vec<Symbol>,
    /// `log2 p_k(x_k)` for every drawn symbol.
    pub log2_conditionals: Vec<f64>,
    /// Entropy in bits of every step's conditional law.
    pub entropy_bits: Vec<f64>,
    pub termination: Termination,
    pub restarts: usize,
    /// False if some sum-product run hit its iteration limit.
    pub bp_converged: bool,
    /// Bits of `omega` read by the interval variant.
    pub bits_consumed: Option<usize>,
}

impl GeneratedSample {
    /// `log2` of the probability with which this output was produced.
    pub fn log2_prob(&self) -> f64 {
        self.log2_conditionals.iter().sum()
    }
}

/// A sampler for one map `A`. The map's sequential structure is computed
/// once and reused across targets and priors.
#[derive(Clone, Debug)]
pub struct Crng {
    a: SparseMatrix,
    solver: SequentialSolver,
    cfg: CrngConfig,
}

impl Crng {
    pub fn new(a: SparseMatrix, cfg: CrngConfig) -> Result<Self> {
        cfg.validate()?;
        let solver = SequentialSolver::new(&a);
        Ok(Crng { a, solver, cfg })
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.a
    }

    pub fn config(&self) -> &CrngConfig {
        &self.cfg
    }

    pub fn solver(&self) -> &SequentialSolver {
        &self.solver
    }

    /// Law of `x_k` given `prefix`, exactly as `generate` would use it.
    pub fn step_conditional<P: SequencePrior + ?Sized>(
        &self,
        c: &[Symbol],
        prior: &P,
        prefix: &[Symbol],
    ) -> Result<Vec<f64>> {
        if prefix.len() >= self.a.cols() {
            return Err(Error::Usage(format!(
                "prefix length {} leaves no position to draw",
                prefix.len()
            )));
        }
        let mut run = Run::start(self, c, prior)?;
        for &v in prefix {
            run.push(v)?;
        }
        run.conditional()
    }

    pub fn generate<P: SequencePrior + ?Sized, R: Rng + ?Sized>(
        &self,
        c: &[Symbol],
        prior: &P,
        rng: &mut R,
    ) -> Result<GeneratedSample> {
        let mut restarts = 0;
        loop {
            match self.generate_once(c, prior, rng, restarts) {
                Err(Error::DeadEnd { step })
                    if step > 0
                        && self.cfg.engine == Engine::SumProduct
                        && restarts < self.cfg.max_restarts =>
                {
                    restarts += 1;
                }
                // Zero mass at the very first step: nothing in the coset is
                // reachable under the prior.
                Err(Error::DeadEnd { step: 0 }) => return Err(Error::Encoding),
                other => return other,
            }
        }
    }

    fn generate_once<P: SequencePrior + ?Sized, R: Rng + ?Sized>(
        &self,
        c: &[Symbol],
        prior: &P,
        rng: &mut R,
        restarts: usize,
    ) -> Result<GeneratedSample> {
        let mut run = Run::start(self, c, prior)?;
        let mut logs = Vec::new();
        let mut ents = Vec::new();
        let n = self.a.cols();
        while run.k() < n {
            if run.determined() {
                let k = run.k();
                run.complete()?;
                return Ok(run.finish(logs, ents, Termination::EarlyAt(k), restarts, None));
            }
            let p = run.conditional()?;
            let v = sample_index(&p, rng.random::<f64>());
            logs.push(p[v].log2());
            ents.push(entropy(&p));
            run.push(v as Symbol)?;
        }
        Ok(run.finish(logs, ents, Termination::Full, restarts, None))
    }

    /// Interval-algorithm generation driven by the bits of `omega`.
    pub fn generate_interval<P: SequencePrior + ?Sized, B: BitSource + ?Sized>(
        &self,
        c: &[Symbol],
        prior: &P,
        bits: &mut B,
    ) -> Result<GeneratedSample> {
        let mut run = Run::start(self, c, prior)?;
        let mut iv = Interval::new();
        let mut logs = Vec::new();
        let mut ents = Vec::new();
        let n = self.a.cols();
        while run.k() < n {
            if run.determined() {
                let k = run.k();
                run.complete()?;
                return Ok(run.finish(logs, ents, Termination::EarlyAt(k), 0, Some(iv.consumed)));
            }
            let p = run.conditional()?;
            let v = iv.select(&p, bits, run.k())?;
            logs.push(p[v].log2());
            ents.push(entropy(&p));
            run.push(v as Symbol)?;
        }
        Ok(run.finish(logs, ents, Termination::Full, 0, Some(iv.consumed)))
    }

    /// A memoizing interval sampler for repeated runs on one `(c, prior)`.
    pub fn interval_sampler<'a, P: SequencePrior + ?Sized>(
        &'a self,
        c: &'a [Symbol],
        prior: &'a P,
    ) -> Result<IntervalSampler<'a, P>> {
        Run::start(self, c, prior)?;
        Ok(IntervalSampler {
            crng: self,
            c,
            prior,
            nodes: vec![Node::Unexpanded],
            children: Vec::new(),
        })
    }

    /// The output law of `generate`, from expanding every positive-probability
    /// path of step conditionals. Sorted lexicographically.
    pub fn path_tree_law<P: SequencePrior + ?Sized>(
        &self,
        c: &[Symbol],
        prior: &P,
    ) -> Result<Vec<(Vec<Symbol>, f64)>> {
        let root = Run::start(self, c, prior)?;
        let mut out = Vec::new();
        self.expand(root, 1.0, &mut out)?;
        out.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(out)
    }

    fn expand<P: SequencePrior + ?Sized>(
        &self,
        mut run: Run<'_, P>,
        prob: f64,
        out: &mut Vec<(Vec<Symbol>, f64)>,
    ) -> Result<()> {
        if run.k() == self.a.cols() {
            out.push((run.prefix, prob));
            return Ok(());
        }
        if run.determined() {
            run.complete()?;
            out.push((run.prefix, prob));
            return Ok(());
        }
        let p = run.conditional()?;
        for (v, &w) in p.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            let mut child = run.clone();
            child.push(v as Symbol)?;
            self.expand(child, prob * w, out)?;
        }
        Ok(())
    }
}

/// The normalized restriction of `prior` to `C_A(c)`, lexicographic.
pub fn exact_coset_law<P: SequencePrior + ?Sized>(
    a: &SparseMatrix,
    c: &[Symbol],
    prior: &P,
    cap: u64,
) -> Result<Vec<(Vec<Symbol>, f64)>> {
    check_len("prior length", a.cols(), prior.len())?;
    check_len("prior alphabet", a.field().size(), prior.alphabet())?;
    let members = coset_members(a, c, cap)?;
    let mut law: Vec<(Vec<Symbol>, f64)> = members
        .into_iter()
        .map(|x| {
            let w = sequence_weight(prior, &x, 0);
            (x, w)
        })
        .filter(|(_, w)| *w > 0.0)
        .collect();
    let total: f64 = law.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        return Err(Error::Encoding);
    }
    law.iter_mut().for_each(|(_, w)| *w /= total);
    Ok(law)
}

/// Total variation distance between two laws given as outcome lists.
pub fn total_variation(p: &[(Vec<Symbol>, f64)], q: &[(Vec<Symbol>, f64)]) -> f64 {
    let mut diff: BTreeMap<&[Symbol], f64> = BTreeMap::new();
    for (x, w) in p {
        *diff.entry(x.as_slice()).or_default() += w;
    }
    for (x, w) in q {
        *diff.entry(x.as_slice()).or_default() -= w;
    }
    diff.values().map(|d| d.abs()).sum::<f64>() / 2.0
}

/// `prod_{j >= from} P(x_j | x_1..x_{j-1})`.
fn sequence_weight<P: SequencePrior + ?Sized>(prior: &P, x: &[Symbol], from: usize) -> f64 {
    let mut w = 1.0;
    for j in from..x.len() {
        w *= prior.prob(&x[..j], x[j]);
        if w == 0.0 {
            break;
        }
    }
    w
}

/// State of one generation: the prefix, the residual target and, for the
/// sum-product engine, the warm message state.
struct Run<'a, P: SequencePrior + ?Sized> {
    crng: &'a Crng,
    prior: &'a P,
    residual: Vec<Symbol>,
    prefix: Vec<Symbol>,
    bp: Option<SumProduct>,
    /// Priors at positions `>= uniform_from` are uniform.
    uniform_from: usize,
    converged: bool,
}

impl<P: SequencePrior + ?Sized> Clone for Run<'_, P> {
    fn clone(&self) -> Self {
        Run {
            crng: self.crng,
            prior: self.prior,
            residual: self.residual.clone(),
            prefix: self.prefix.clone(),
            bp: self.bp.clone(),
            uniform_from: self.uniform_from,
            converged: self.converged,
        }
    }
}

impl<'a, P: SequencePrior + ?Sized> Run<'a, P> {
    fn start(crng: &'a Crng, c: &[Symbol], prior: &'a P) -> Result<Self> {
        let a = &crng.a;
        let field = a.field();
        check_len("target", a.rows(), c.len())?;
        check_len("prior length", a.cols(), prior.len())?;
        check_len("prior alphabet", field.size(), prior.alphabet())?;
        field.check_vector(c)?;
        if !crng.solver.in_image(c)? {
            return Err(Error::Encoding);
        }
        let mut run = Run {
            crng,
            prior,
            residual: c.to_vec(),
            prefix: Vec::with_capacity(a.cols()),
            bp: None,
            uniform_from: 0,
            converged: true,
        };
        if crng.cfg.engine == Engine::SumProduct {
            let pmfs = prior.memoryless().ok_or_else(|| {
                Error::Usage("the sum-product engine needs a memoryless prior".into())
            })?;
            let q = field.size();
            run.uniform_from = pmfs
                .iter()
                .rposition(|p| p.iter().any(|&v| v != 1.0 / q as f64))
                .map_or(0, |i| i + 1);
            if run.needs_bp(0) {
                let graph = build_coset_graph(a, c, pmfs)?;
                let mut bp = SumProduct::new(&graph).map_err(|_| Error::Encoding)?;
                run.converged = bp.run(&crng.cfg.bp).map_err(|_| Error::Encoding)?.0;
                run.bp = Some(bp);
            }
        }
        // The exact engine finds a massless coset at its first step; with
        // early stop at k = 0 the completion check catches it.
        if crng.cfg.engine == Engine::Exact && !run.determined() {
            run.conditional().map_err(|e| match e {
                Error::DeadEnd { .. } => Error::Encoding,
                e => e,
            })?;
        }
        Ok(run)
    }

    fn k(&self) -> usize {
        self.prefix.len()
    }

    fn field(&self) -> Field {
        self.crng.a.field()
    }

    fn determined(&self) -> bool {
        self.crng.cfg.early_stop && self.k() >= self.crng.solver.determined_from()
    }

    /// Whether the step at position `k` needs sum-product marginals.
    fn needs_bp(&self, k: usize) -> bool {
        let stop = if self.crng.cfg.early_stop {
            self.crng.solver.determined_from()
        } else {
            self.crng.a.cols()
        };
        k < stop && k + 1 < self.uniform_from
    }

    fn conditional(&self) -> Result<Vec<f64>> {
        let k = self.k();
        let mut p = match self.crng.cfg.engine {
            Engine::Exact => self.exact_conditional()?,
            Engine::SumProduct => self.sp_conditional()?,
        };
        let total: f64 = p.iter().sum();
        if !(total > 0.0) {
            return Err(Error::DeadEnd { step: k });
        }
        p.iter_mut().for_each(|v| *v /= total);
        Ok(p)
    }

    /// Weighted count of every suffix `x_k..x_n` that completes the prefix,
    /// split by the value of `x_k`.
    fn exact_conditional(&self) -> Result<Vec<f64>> {
        let a = &self.crng.a;
        let field = self.field();
        let q = field.size();
        let n = a.cols();
        let k = self.k();
        let m = n - k;
        check_cap("exact step conditional", q, m, self.crng.cfg.exact_cap)?;
        let solver = &self.crng.solver;
        // syndrome of the current suffix, tracked incrementally
        let mut syn = vec![0 as Symbol; a.rows()];
        let mut mismatches = self.residual.iter().filter(|&&r| r != 0).count();
        let mut full = self.prefix.clone();
        full.resize(n, 0);
        let mut acc = vec![0.0; q];
        let memoryless = self.prior.memoryless();
        loop {
            if mismatches == 0 {
                let w = match memoryless {
                    Some(pmfs) => full[k..]
                        .iter()
                        .enumerate()
                        .map(|(t, &v)| pmfs[k + t][v as usize])
                        .product(),
                    None => sequence_weight(self.prior, &full, k),
                };
                acc[full[k] as usize] += w;
            }
            // advance the odometer over positions k..n, last digit fastest
            let mut t = n;
            loop {
                if t == k {
                    return Ok(acc);
                }
                t -= 1;
                let old = full[t];
                let new = if old as usize + 1 == q { 0 } else { old + 1 };
                let delta = field.sub(new, old);
                for &(r, coef) in solver.column(t) {
                    let r = r as usize;
                    let was = syn[r] == self.residual[r];
                    syn[r] = field.add(syn[r], field.mul(coef, delta));
                    let is = syn[r] == self.residual[r];
                    if was && !is {
                        mismatches += 1;
                    } else if !was && is {
                        mismatches -= 1;
                    }
                }
                full[t] = new;
                if new != 0 {
                    break;
                }
            }
        }
    }

    fn sp_conditional(&self) -> Result<Vec<f64>> {
        let k = self.k();
        let solver = &self.crng.solver;
        let pmfs = self.prior.memoryless().expect("checked at start");
        let base = if k + 1 >= self.uniform_from {
            // Uniform suffix: every feasible symbol has the same number of
            // completions, so the conditional is the prior times feasibility.
            pmfs[k].clone()
        } else {
            let bp = self.bp.as_ref().expect("built when needed");
            bp.marginal(k).map_err(|_| Error::DeadEnd { step: k })?
        };
        Ok(base
            .into_iter()
            .enumerate()
            .map(|(v, w)| {
                if solver.feasible(k, &self.residual, v as Symbol) {
                    w
                } else {
                    0.0
                }
            })
            .collect())
    }

    fn push(&mut self, v: Symbol) -> Result<()> {
        let k = self.k();
        if v as usize >= self.field().size() {
            return Err(Error::Usage(format!("symbol {v} outside {}", self.field())));
        }
        self.crng.solver.subtract_column(&mut self.residual, k, v);
        self.prefix.push(v);
        if self.bp.is_some() {
            let next_needs = self.needs_bp(k + 1);
            let bp = self.bp.as_mut().unwrap();
            bp.fix(k, v).map_err(|_| Error::DeadEnd { step: k })?;
            if next_needs {
                let (conv, _) = bp
                    .run(&self.crng.cfg.bp)
                    .map_err(|_| Error::DeadEnd { step: k + 1 })?;
                self.converged &= conv;
            }
        }
        Ok(())
    }

    /// Finishes with the unique completion of the current prefix.
    fn complete(&mut self) -> Result<()> {
        let k = self.k();
        let tail = self
            .crng
            .solver
            .complete(k, &mut self.residual)
            .ok_or(Error::DeadEnd { step: k })?;
        self.prefix.extend_from_slice(&tail);
        if sequence_weight(self.prior, &self.prefix, k) <= 0.0 {
            return Err(if k == 0 {
                Error::Encoding
            } else {
                Error::DeadEnd { step: k }
            });
        }
        Ok(())
    }

    fn finish(
        self,
        log2_conditionals: Vec<f64>,
        entropy_bits: Vec<f64>,
        termination: Termination,
        restarts: usize,
        bits_consumed: Option<usize>,
    ) -> GeneratedSample {
        debug_assert!(self.crng.cfg.engine != Engine::Exact
            || self.crng.a.mul_vec(&self.prefix).is_ok());
        GeneratedSample {
            x: self.prefix,
            log2_conditionals,
            entropy_bits,
            termination,
            restarts,
            bp_converged: self.converged,
            bits_consumed,
        }
    }
}

/// Lazy binary expansion of `omega`.
pub trait BitSource {
    fn next_bit(&mut self) -> Option<bool>;
}

/// Uniform bits from a random stream.
pub struct RngBits<R> {
    rng: R,
    word: u64,
    left: u32,
}

impl<R: Rng> RngBits<R> {
    pub fn new(rng: R) -> Self {
        RngBits { rng, word: 0, left: 0 }
    }
}

impl<R: Rng> BitSource for RngBits<R> {
    fn next_bit(&mut self) -> Option<bool> {
        if self.left == 0 {
            self.word = self.rng.random();
            self.left = 64;
        }
        self.left -= 1;
        Some((self.word >> self.left) & 1 == 1)
    }
}

/// `omega = value / 2^depth`, followed by zeros forever.
#[derive(Clone, Copy, Debug)]
pub struct DyadicPoint {
    value: u64,
    depth: u32,
    pos: u32,
}

impl DyadicPoint {
    pub fn new(value: u64, depth: u32) -> Self {
        assert!(depth <= 64 && (depth == 64 || value >> depth == 0), "value outside the grid");
        DyadicPoint { value, depth, pos: 0 }
    }
}

impl BitSource for DyadicPoint {
    fn next_bit(&mut self) -> Option<bool> {
        let bit = self.pos < self.depth && (self.value >> (self.depth - 1 - self.pos)) & 1 == 1;
        self.pos = self.pos.saturating_add(1);
        Some(bit)
    }
}

/// A finite bit string; running past its end is an error.
#[derive(Clone, Debug)]
pub struct FixedBits {
    bits: Vec<bool>,
    pos: usize,
}

impl FixedBits {
    pub fn new(bits: Vec<bool>) -> Self {
        FixedBits { bits, pos: 0 }
    }

    /// Most significant bit of the first byte first.
    pub fn from_bytes(bytes: &[u8]) -> Self {
        Self::new(
            bytes
                .iter()
                .flat_map(|b| (0..8).rev().map(move |i| (b >> i) & 1 == 1))
                .collect(),
        )
    }
}

impl BitSource for FixedBits {
    fn next_bit(&mut self) -> Option<bool> {
        let b = self.bits.get(self.pos).copied();
        self.pos += 1;
        b
    }
}

/// Reads past this many bits are treated as an exhausted stream.
const MAX_BITS: usize = 1 << 20;

/// Current interval `[lo, hi)` and the window `[w, w + width)` known to hold
/// `omega`, both in a zoomed frame. Zooming doubles around 0, 1/2 or 1/4,
/// which is exact in binary floating point.
struct Interval {
    lo: f64,
    hi: f64,
    w: f64,
    width: f64,
    consumed: usize,
    bounds: Vec<f64>,
}

impl Interval {
    fn new() -> Self {
        Interval {
            lo: 0.0,
            hi: 1.0,
            w: 0.0,
            width: 1.0,
            consumed: 0,
            bounds: Vec::new(),
        }
    }

    /// Splits the interval in canonical symbol order proportionally to `p`
    /// and descends into the part holding `omega`.
    fn select<B: BitSource + ?Sized>(&mut self, p: &[f64], bits: &mut B, step: usize) -> Result<usize> {
        let span = self.hi - self.lo;
        self.bounds.clear();
        let mut cum = 0.0;
        self.bounds.push(self.lo);
        for (v, &pv) in p.iter().enumerate() {
            cum += pv;
            let b = if v + 1 == p.len() { self.hi } else { self.lo + span * cum.min(1.0) };
            self.bounds.push(b);
        }
        loop {
            let end = self.w + self.width;
            for v in 0..p.len() {
                if p[v] > 0.0 && self.bounds[v] <= self.w && end <= self.bounds[v + 1] {
                    self.lo = self.bounds[v];
                    self.hi = self.bounds[v + 1];
                    self.zoom();
                    return Ok(v);
                }
            }
            if self.consumed >= MAX_BITS {
                return Err(Error::BitsExhausted { consumed: self.consumed, step });
            }
            let bit = bits.next_bit().ok_or(Error::BitsExhausted {
                consumed: self.consumed,
                step,
            })?;
            self.consumed += 1;
            self.width *= 0.5;
            if bit {
                self.w += self.width;
            }
        }
    }

    fn zoom(&mut self) {
        loop {
            let shift = if self.hi <= 0.5 {
                0.0
            } else if self.lo >= 0.5 {
                1.0
            } else if self.lo >= 0.25 && self.hi <= 0.75 {
                0.5
            } else {
                return;
            };
            self.lo = 2.0 * self.lo - shift;
            self.hi = 2.0 * self.hi - shift;
            self.w = 2.0 * self.w - shift;
            self.width *= 2.0;
        }
    }
}

enum Node {
    Unexpanded,
    Step(Vec<f64>),
    Leaf(Vec<Symbol>),
    Failed(Error),
}

/// Interval sampler that caches the conditional at every visited prefix.
/// Conditionals depend on the prefix alone, so sweeping many `omega` values
/// only computes each tree node once.
pub struct IntervalSampler<'a, P: SequencePrior + ?Sized> {
    crng: &'a Crng,
    c: &'a [Symbol],
    prior: &'a P,
    nodes: Vec<Node>,
    /// `children[node * q + v]`, `u32::MAX` if absent.
    children: Vec<u32>,
}

impl<P: SequencePrior + ?Sized> IntervalSampler<'_, P> {
    fn expand(&mut self, node: usize, path: &[Symbol]) {
        let result = (|| {
            let mut run = Run::start(self.crng, self.c, self.prior)?;
            for &v in path {
                run.push(v)?;
            }
            if run.k() == self.crng.a.cols() {
                return Ok(Node::Leaf(run.prefix));
            }
            if run.determined() {
                run.complete()?;
                return Ok(Node::Leaf(run.prefix));
            }
            Ok(Node::Step(run.conditional()?))
        })();
        self.nodes[node] = result.unwrap_or_else(Node::Failed);
    }

    /// Output `x` and the number of bits read.
    pub fn sample<B: BitSource + ?Sized>(&mut self, bits: &mut B) -> Result<(Vec<Symbol>, usize)> {
        let q = self.crng.a.field().size();
        let mut iv = Interval::new();
        let mut node = 0usize;
        let mut path = Vec::new();
        loop {
            if matches!(self.nodes[node], Node::Unexpanded) {
                self.expand(node, &path);
                self.children.resize(self.nodes.len() * q, u32::MAX);
            }
            let v = match &self.nodes[node] {
                Node::Leaf(x) => return Ok((x.clone(), iv.consumed)),
                Node::Failed(e) => return Err(e.clone()),
                Node::Step(p) => iv.select(p, bits, path.len())?,
                Node::Unexpanded => unreachable!(),
            };
            path.push(v as Symbol);
            let slot = node * q + v;
            if self.children[slot] == u32::MAX {
                self.children[slot] = self.nodes.len() as u32;
                self.nodes.push(Node::Unexpanded);
                self.children.resize(self.nodes.len() * q, u32::MAX);
            }
            node = self.children[slot] as usize;
        }
    }
}
