//! Pieces shared by the channel and lossy codes: decoder outcomes, coset
//! argmax, sum-product coset decoding and rate-condition reports.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::factor_graph::{build_coset_graph, BpConfig, SumProduct};
use crate::gf::Symbol;
use crate::linear::{CosetSpace, SparseMatrix};

/// Largest coset searched by exact decoders unless configured otherwise.
pub const DEFAULT_DECODE_CAP: u64 = 1 << 20;

/// Relative tolerance under which two log-scores count as tied.
const TIE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DecodeMethod {
    MapExhaustive,
    Bp,
}

impl DecodeMethod {
    pub fn name(self) -> &'static str {
        match self {
            DecodeMethod::MapExhaustive => "map-exhaustive",
            DecodeMethod::Bp => "bp",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DecodeFailure {
    /// The coset searched is empty.
    EmptyCoset,
    /// Every candidate has zero posterior weight.
    ZeroPosterior,
    /// Sum-product produced an all-zero message.
    Inconsistent,
    /// The sum-product hard decision misses the constraints.
    ConstraintViolated,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeOutcome {
    pub method: DecodeMethod,
    /// Decoded message, absent on failure.
    pub message: Option<Vec<Symbol>>,
    /// The sequence estimate the message was read from. A violated
    /// sum-product decision is kept here for diagnostics.
    pub estimate: Option<Vec<Symbol>>,
    pub failure: Option<DecodeFailure>,
    /// Several maximizers tied and the lexicographically least was taken.
    pub tie: bool,
    pub iterations: usize,
    pub converged: bool,
}

impl DecodeOutcome {
    pub(crate) fn failed(method: DecodeMethod, failure: DecodeFailure) -> Self {
        DecodeOutcome {
            method,
            message: None,
            estimate: None,
            failure: Some(failure),
            tie: false,
            iterations: 0,
            converged: false,
        }
    }
}

/// Per-trial random stream: stream `trial` of the ChaCha20 generator keyed
/// by `seed`, so results do not depend on how trials are scheduled.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Running argmax of log-scores with lexicographic tie-breaking.
#[derive(Clone, Debug, Default)]
pub(crate) struct Argmax {
    best: Option<(f64, Vec<Symbol>)>,
    tie: bool,
}

impl Argmax {
    pub(crate) fn offer(&mut self, score: f64, x: &[Symbol]) {
        if score == f64::NEG_INFINITY {
            return;
        }
        match &mut self.best {
            None => self.best = Some((score, x.to_vec())),
            Some((b, bx)) => {
                let tol = TIE_TOL * b.abs().max(1.0);
                if score > *b + tol {
                    *b = score;
                    *bx = x.to_vec();
                    self.tie = false;
                } else if score >= *b - tol {
                    self.tie = true;
                    if x < bx.as_slice() {
                        bx.clear();
                        bx.extend_from_slice(x);
                    }
                    *b = b.max(score);
                }
            }
        }
    }

    pub(crate) fn finish(self) -> Option<(Vec<Symbol>, bool)> {
        self.best.map(|(_, x)| (x, self.tie))
    }
}

/// Maximizes `score` (a natural-log weight) over an affine coset.
pub(crate) fn coset_argmax(
    space: &CosetSpace,
    cap: u64,
    mut score: impl FnMut(&[Symbol]) -> f64,
) -> Result<Option<(Vec<Symbol>, bool)>> {
    let mut am = Argmax::default();
    space.for_each_member(cap, |x| am.offer(score(x), x))?;
    Ok(am.finish())
}

/// `sum_i ln pmfs[i][x_i]`.
pub(crate) fn log_weight(pmfs: &[Vec<f64>], x: &[Symbol]) -> f64 {
    pmfs.iter().zip(x).map(|(p, &v)| p[v as usize].ln()).sum()
}

/// Sum-product on the coset graph of `A x = c` with per-position priors.
/// Stops as soon as the hard decision satisfies the constraints, when the
/// messages settle, or after `cfg.max_iters` flooding iterations.
pub(crate) fn bp_coset_decode(
    a: &SparseMatrix,
    c: &[Symbol],
    priors: &[Vec<f64>],
    cfg: &BpConfig,
) -> Result<DecodeOutcome> {
    cfg.validate()?;
    let graph = build_coset_graph(a, c, priors)?;
    let fail = |iterations| DecodeOutcome {
        iterations,
        ..DecodeOutcome::failed(DecodeMethod::Bp, DecodeFailure::Inconsistent)
    };
    let mut sp = match SumProduct::new(&graph) {
        Ok(sp) => sp,
        Err(Error::Inconsistent(_)) => return Ok(fail(0)),
        Err(e) => return Err(e),
    };
    let step = BpConfig {
        max_iters: 1,
        ..*cfg
    };
    let mut x = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=cfg.max_iters {
        iterations = it;
        match sp.run(&step) {
            Ok((conv, _)) => converged = conv,
            Err(Error::Inconsistent(_)) => return Ok(fail(it)),
            Err(e) => return Err(e),
        }
        x.clear();
        for i in 0..a.cols() {
            match sp.marginal(i) {
                Ok(m) => x.push(first_max(&m) as Symbol),
                Err(Error::Inconsistent(_)) => return Ok(fail(it)),
                Err(e) => return Err(e),
            }
        }
        if a.mul_vec_unchecked(&x) == c || converged {
            break;
        }
    }
    let ok = a.mul_vec_unchecked(&x) == c;
    Ok(DecodeOutcome {
        method: DecodeMethod::Bp,
        message: None,
        estimate: Some(x),
        failure: (!ok).then_some(DecodeFailure::ConstraintViolated),
        tie: false,
        iterations,
        converged,
    })
}

/// Index of the first largest entry.
pub(crate) fn first_max(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// One rate condition `lhs op rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct RateCondition {
    pub name: &'static str,
    pub lhs: f64,
    pub op: &'static str,
    pub rhs: f64,
    pub satisfied: bool,
    /// Applies only to the deterministic linear-code variant, which needs
    /// a uniform prior.
    pub linear_only: bool,
}

impl RateCondition {
    pub(crate) fn new(name: &'static str, lhs: f64, op: &'static str, rhs: f64) -> Self {
        let satisfied = match op {
            "<" => lhs < rhs,
            ">" => lhs > rhs,
            ">=" => lhs >= rhs,
            "<=" => lhs <= rhs,
            _ => unreachable!("unknown comparison {op}"),
        };
        RateCondition {
            name,
            lhs,
            op,
            rhs,
            satisfied,
            linear_only: false,
        }
    }

    pub(crate) fn linear_only(mut self) -> Self {
        self.linear_only = true;
        self
    }
}

/// Advisory comparison of code rates with single-letter entropies.
#[derive(Clone, Debug, PartialEq)]
pub struct RateReport {
    pub r: f64,
    pub big_r: f64,
    pub h_x: f64,
    pub h_x_given_y: f64,
    pub conditions: Vec<RateCondition>,
}

impl RateReport {
    /// The conditions of the stochastic code all hold.
    pub fn all_satisfied(&self) -> bool {
        self.conditions.iter().filter(|c| !c.linear_only).all(|c| c.satisfied)
    }

    /// The linear-code conditions exist and all hold.
    pub fn linear_satisfied(&self) -> bool {
        let mut lin = self.conditions.iter().filter(|c| c.linear_only).peekable();
        lin.peek().is_some() && lin.all(|c| c.satisfied)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_go_to_lexicographic_least() {
        let mut am = Argmax::default();
        am.offer(-1.0, &[1, 0]);
        am.offer(-1.0, &[0, 1]);
        am.offer(-2.0, &[0, 0]);
        assert_eq!(am.finish(), Some((vec![0, 1], true)));

        let mut am = Argmax::default();
        am.offer(-1.0, &[1, 0]);
        am.offer(-1.0, &[0, 1]);
        am.offer(-0.5, &[1, 1]);
        assert_eq!(am.finish(), Some((vec![1, 1], false)));

        let mut am = Argmax::default();
        am.offer(f64::NEG_INFINITY, &[0]);
        assert_eq!(am.finish(), None);
    }

    #[test]
    fn trial_streams_are_independent_of_order() {
        use rand::Rng;
        let a: u64 = trial_rng(9, 3).random();
        let _ = trial_rng(9, 2).random::<u64>();
        assert_eq!(a, trial_rng(9, 3).random::<u64>());
        assert_ne!(a, trial_rng(9, 4).random::<u64>());
        assert_ne!(a, trial_rng(10, 3).random::<u64>());
    }

    #[test]
    fn rate_condition_strictness() {
        assert!(!RateCondition::new("x", 1.0, "<", 1.0).satisfied);
        assert!(RateCondition::new("x", 1.0, ">=", 1.0).satisfied);
        assert_eq!(first_max(&[0.2, 0.4, 0.4]), 1);
    }
}
