//! Fixed-rate lossy source code. The encoder samples a reproduction `x`
//! from the test-channel posterior restricted to `C_A(c)` and sends
//! `m = B x`; the decoder returns the most likely member of `C_AB(c, m)`
//! under the reproduction marginal.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;

use crate::channel::draw_matrix;
use crate::coding::{
    bp_coset_decode, coset_argmax, log_weight, trial_rng, DecodeFailure, DecodeMethod, DecodeOutcome,
    RateCondition, RateReport, DEFAULT_DECODE_CAP,
};
use crate::crng::{exact_coset_law, Crng, CrngConfig, GeneratedSample};
use crate::error::{check_cap, check_len, Error, Result};
use crate::factor_graph::BpConfig;
use crate::gf::{Field, Symbol};
use crate::linear::{
    complement_bijection, for_each_vector, random_vector, row_reduce, Bijection, EchelonForm, SparseMatrix,
};
use crate::models::{joint_entropies, DistortionSpec, Kernel, MemorylessChannel, MemorylessSource};
use crate::stats::{MeanAcc, Proportion};

/// Bins of the per-letter distortion histogram.
pub const HIST_BINS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossyConfig {
    pub crng: CrngConfig,
    /// Cosets up to this size are decoded exhaustively, larger ones by BP.
    pub decode_cap: u64,
    pub bp: BpConfig,
}

impl Default for LossyConfig {
    fn default() -> Self {
        LossyConfig {
            crng: CrngConfig::default(),
            decode_cap: DEFAULT_DECODE_CAP,
            bp: BpConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LossyCode {
    a: SparseMatrix,
    b: SparseMatrix,
    c: Vec<Symbol>,
    source: MemorylessSource,
    test_channel: MemorylessChannel,
    /// `mu_X` per position.
    marginal: Vec<Vec<f64>>,
    distortion: DistortionSpec,
    encoder: Crng,
    stacked: SparseMatrix,
    stacked_echelon: EchelonForm,
    bijection: Option<Bijection>,
    rank_a: usize,
    cfg: LossyConfig,
}

/// Result of encoding one source sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct LossyEncoding {
    pub m: Vec<Symbol>,
    pub sample: GeneratedSample,
}

impl LossyCode {
    /// `test_channel` maps source letters to reproduction letters in
    /// `GF(q)`, i.e. it is `mu_{X|Y}`.
    pub fn new(
        a: SparseMatrix,
        b: SparseMatrix,
        c: Vec<Symbol>,
        source: MemorylessSource,
        test_channel: MemorylessChannel,
        distortion: DistortionSpec,
        cfg: LossyConfig,
    ) -> Result<Self> {
        let n = a.cols();
        let q = a.field().size();
        check_len("B columns", n, b.cols())?;
        check_len("c", a.rows(), c.len())?;
        check_len("source length", n, source.len())?;
        check_len("test channel length", n, test_channel.len())?;
        if a.field() != b.field() {
            return Err(Error::Usage("A and B must share a field".into()));
        }
        for i in 0..n {
            let k = test_channel.kernel(i);
            check_len("test channel inputs", source.alphabet(), k.inputs())?;
            if k.outputs() != Some(q) {
                return Err(Error::Usage(format!(
                    "test channel must output GF({q}) letters at position {i}"
                )));
            }
        }
        if cfg.decode_cap == 0 {
            return Err(Error::Usage("decode_cap must be positive".into()));
        }
        cfg.bp.validate()?;
        a.field().check_vector(&c)?;
        let encoder = Crng::new(a.clone(), cfg.crng)?;
        if !encoder.solver().in_image(&c)? {
            return Err(Error::Usage("c is not in the image of A".into()));
        }
        let marginal = (0..n)
            .map(|i| {
                let Kernel::Discrete { table } = test_channel.kernel(i) else {
                    unreachable!("outputs checked above")
                };
                (0..q)
                    .map(|x| source.pmf(i).iter().zip(table).map(|(py, row)| py * row[x]).sum())
                    .collect()
            })
            .collect();
        let stacked = a.stack(&b)?;
        let stacked_echelon = row_reduce(&stacked);
        let bijection = complement_bijection(&a, &b).ok();
        Ok(LossyCode {
            rank_a: encoder.solver().rank(),
            a,
            b,
            c,
            source,
            test_channel,
            marginal,
            distortion,
            encoder,
            stacked,
            stacked_echelon,
            bijection,
            cfg,
        })
    }

    /// Draws `A` and `B` independently from the sparse ensemble and `c`
    /// uniformly from the image of `A`.
    #[allow(clippy::too_many_arguments)]
    pub fn sample<R: Rng + ?Sized>(
        field: Field,
        l: usize,
        k: usize,
        tau: usize,
        source: MemorylessSource,
        test_channel: MemorylessChannel,
        distortion: DistortionSpec,
        cfg: LossyConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let n = source.len();
        let a = draw_matrix(field, n, l, tau, rng)?;
        let b = draw_matrix(field, n, k, tau, rng)?;
        let c = a.mul_vec(&random_vector(field, n, rng))?;
        Self::new(a, b, c, source, test_channel, distortion, cfg)
    }

    pub fn a(&self) -> &SparseMatrix {
        &self.a
    }

    pub fn b(&self) -> &SparseMatrix {
        &self.b
    }

    pub fn c(&self) -> &[Symbol] {
        &self.c
    }

    pub fn n(&self) -> usize {
        self.a.cols()
    }

    pub fn field(&self) -> Field {
        self.a.field()
    }

    pub fn source(&self) -> &MemorylessSource {
        &self.source
    }

    pub fn marginal(&self) -> &[Vec<f64>] {
        &self.marginal
    }

    pub fn r(&self) -> f64 {
        self.rank_a as f64 / self.n() as f64 * (self.field().size() as f64).log2()
    }

    /// `(rank(A, B) - rank(A))/n log2 q`.
    pub fn big_r(&self) -> f64 {
        (self.stacked_echelon.rank() - self.rank_a) as f64 / self.n() as f64
            * (self.field().size() as f64).log2()
    }

    /// `mu_{X_i | Y_i = y_i}` for every position.
    pub fn posteriors(&self, y: &[Symbol]) -> Result<Vec<Vec<f64>>> {
        check_len("source sequence", self.n(), y.len())?;
        y.iter()
            .enumerate()
            .map(|(i, &yi)| match self.test_channel.kernel(i) {
                Kernel::Discrete { table } => table
                    .get(yi as usize)
                    .cloned()
                    .ok_or_else(|| Error::Usage(format!("source letter {yi} outside alphabet"))),
                Kernel::BiAwgn { .. } => unreachable!("checked at construction"),
            })
            .collect()
    }

    pub fn encode<R: Rng + ?Sized>(&self, y: &[Symbol], rng: &mut R) -> Result<LossyEncoding> {
        let post = self.posteriors(y)?;
        let sample = self.encoder.generate(&self.c, &post, rng)?;
        Ok(LossyEncoding {
            m: self.b.mul_vec_unchecked(&sample.x),
            sample,
        })
    }

    /// The ideal encoder law of `x` given `y`.
    pub fn encoder_law(&self, y: &[Symbol], cap: u64) -> Result<Vec<(Vec<Symbol>, f64)>> {
        exact_coset_law(&self.a, &self.c, &self.posteriors(y)?, cap)
    }

    /// Most likely member of `C_AB(c, m)` under `mu_X`: exhaustive when the
    /// coset has at most `decode_cap` members, sum-product otherwise.
    pub fn decode(&self, m: &[Symbol]) -> Result<DecodeOutcome> {
        check_len("message", self.b.rows(), m.len())?;
        self.field().check_vector(m)?;
        let mut target = self.c.clone();
        target.extend_from_slice(m);
        let Some(space) = self.stacked_echelon.coset(&target)? else {
            return Ok(DecodeOutcome::failed(DecodeMethod::MapExhaustive, DecodeFailure::EmptyCoset));
        };
        if space.size() <= self.cfg.decode_cap as f64 {
            let best = coset_argmax(&space, self.cfg.decode_cap, |x| log_weight(&self.marginal, x))?;
            return Ok(match best {
                None => DecodeOutcome::failed(DecodeMethod::MapExhaustive, DecodeFailure::ZeroPosterior),
                Some((x, tie)) => DecodeOutcome {
                    method: DecodeMethod::MapExhaustive,
                    message: None,
                    estimate: Some(x),
                    failure: None,
                    tie,
                    iterations: 0,
                    converged: true,
                },
            });
        }
        bp_coset_decode(&self.stacked, &target, &self.marginal, &self.cfg.bp)
    }

    /// `x'_AB(c, m)`: the unique solution of the stacked system.
    pub fn linear_decode(&self, m: &[Symbol]) -> Result<Vec<Symbol>> {
        let bij = self
            .bijection
            .as_ref()
            .ok_or_else(|| Error::Usage("stacked map (A, B) is not injective".into()))?;
        bij.apply(&self.c, m)
    }

    /// Error threshold test `d > n D`, with slack for rounding in `n D`.
    fn exceeds(&self, d: f64, max_letter: f64) -> bool {
        let bound = max_letter * self.n() as f64;
        d > bound + 1e-12 * bound.abs().max(1.0)
    }

    pub fn run_trial(&self, d_max: f64, seed: u64, trial: u64) -> Result<LossyTrial> {
        let mut rng = trial_rng(seed, trial);
        let y = self.source.sample(&mut rng);
        // Unconstrained test-channel draw for the baseline comparison.
        let post = self.posteriors(&y)?;
        let free: Vec<Symbol> = post
            .iter()
            .map(|p| crate::models::sample_index(p, rng.random::<f64>()) as Symbol)
            .collect();
        let baseline_error = self.exceeds(self.distortion.distortion(&free, &y)?, d_max);
        let enc = match self.encode(&y, &mut rng) {
            Ok(e) => e,
            // A sampler that ran out of restarts is scored like an encoding error.
            Err(Error::Encoding | Error::DeadEnd { .. }) => {
                return Ok(LossyTrial::failed(true, baseline_error))
            }
            Err(e) => return Err(e),
        };
        let encoder_distortion = Some(self.distortion.distortion(&enc.sample.x, &y)?);
        let dec = self.decode(&enc.m)?;
        let Some(x) = dec.estimate.filter(|_| dec.failure.is_none()) else {
            return Ok(LossyTrial {
                encoder_distortion,
                ..LossyTrial::failed(false, baseline_error)
            });
        };
        let d = self.distortion.distortion(&x, &y)?;
        Ok(LossyTrial {
            encoding_error: false,
            decode_failure: false,
            distortion: Some(d),
            encoder_distortion,
            error: self.exceeds(d, d_max),
            baseline_error,
            restarts: enc.sample.restarts,
            bp_converged: enc.sample.bp_converged,
            encoder_bits: -enc.sample.log2_prob(),
            reproduces_encoder: x == enc.sample.x,
        })
    }

    /// Monte-Carlo estimate of `P(d_n > n D)`, encoding and decoding
    /// failures counting as infinite distortion.
    pub fn simulate(&self, d_max: f64, trials: u64, seed: u64, z: f64) -> Result<DistortionStats> {
        if trials == 0 {
            return Err(Error::Usage("simulation needs at least one trial".into()));
        }
        let outcomes: Vec<LossyTrial> = (0..trials)
            .into_par_iter()
            .map(|t| self.run_trial(d_max, seed, t))
            .collect::<Result<_>>()?;
        let mut stats = DistortionStats::collect(&outcomes, self.n(), self.distortion.max_letter(), z);
        if self.exact_scale() {
            stats.exact = Some(self.exact_error(d_max, EXACT_SUM_CAP)?);
        }
        Ok(stats)
    }

    fn exact_scale(&self) -> bool {
        let fits = |k: usize| (k as f64).powi(self.n() as i32) <= EXACT_SUM_CAP as f64;
        fits(self.source.alphabet()) && fits(self.field().size())
    }

    /// `Error(A, B, c, D)` by summation over source sequences and encoder
    /// outputs, using the encoder's ideal law.
    pub fn exact_error(&self, d_max: f64, cap: u64) -> Result<f64> {
        check_cap("exact error source space", self.source.alphabet(), self.n(), cap)?;
        let mut decoded: BTreeMap<Vec<Symbol>, Option<Vec<Symbol>>> = BTreeMap::new();
        let mut ys = Vec::new();
        for_each_vector(self.source.alphabet() as Symbol, self.n(), |y| ys.push(y.to_vec()));
        let mut error = 0.0;
        for y in &ys {
            let py = self.source.log_prob(y)?.exp2();
            if py == 0.0 {
                continue;
            }
            let law = match self.encoder_law(y, cap) {
                Ok(law) => law,
                Err(Error::Encoding) => {
                    error += py;
                    continue;
                }
                Err(e) => return Err(e),
            };
            for (x, px) in &law {
                let m = self.b.mul_vec_unchecked(x);
                let xhat = match decoded.get(&m) {
                    Some(v) => v.clone(),
                    None => {
                        let out = self.decode(&m)?;
                        let v = out.estimate.filter(|_| out.failure.is_none());
                        decoded.insert(m, v.clone());
                        v
                    }
                };
                let bad = match xhat {
                    None => true,
                    Some(xh) => self.exceeds(self.distortion.distortion(&xh, y)?, d_max),
                };
                if bad {
                    error += py * px;
                }
            }
        }
        Ok(error)
    }

    pub fn rate_check(&self) -> Result<RateReport> {
        rate_check(self.r(), self.big_r(), &self.source, &self.test_channel)
    }
}

const EXACT_SUM_CAP: u64 = 1 << 10;

/// Lossy rate conditions `r < H(X|Y)` and `r + R > H(X)`, with `X` the
/// test-channel output.
pub fn rate_check(
    r: f64,
    big_r: f64,
    source: &MemorylessSource,
    test_channel: &MemorylessChannel,
) -> Result<RateReport> {
    let je = joint_entropies(source, test_channel)?;
    Ok(RateReport {
        r,
        big_r,
        h_x: je.h_output,
        h_x_given_y: je.h_output_given_input,
        conditions: vec![
            RateCondition::new("r < H(X|Y)", r, "<", je.h_output_given_input),
            RateCondition::new("r + R > H(X)", r + big_r, ">", je.h_output),
        ],
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossyTrial {
    pub encoding_error: bool,
    pub decode_failure: bool,
    /// `d_n(x_hat, y)`, absent when the distortion is infinite.
    pub distortion: Option<f64>,
    /// `d_n(x, y)` for the encoder's own sample `x`.
    pub encoder_distortion: Option<f64>,
    pub error: bool,
    pub baseline_error: bool,
    pub restarts: usize,
    pub bp_converged: bool,
    pub encoder_bits: f64,
    /// The decoder returned exactly the encoder's sample.
    pub reproduces_encoder: bool,
}

impl LossyTrial {
    fn failed(encoding_error: bool, baseline_error: bool) -> Self {
        LossyTrial {
            encoding_error,
            decode_failure: !encoding_error,
            distortion: None,
            encoder_distortion: None,
            error: true,
            baseline_error,
            restarts: 0,
            bp_converged: false,
            encoder_bits: 0.0,
            reproduces_encoder: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistortionStats {
    pub trials: u64,
    pub errors: u64,
    pub encoding_errors: u64,
    pub decode_failures: u64,
    pub rate: Proportion,
    /// Mean per-letter distortion over trials with finite distortion.
    pub mean_distortion: f64,
    pub distortion_stderr: f64,
    /// Mean per-letter distortion of the encoder's sample itself.
    pub mean_encoder_distortion: f64,
    /// Per-letter distortion counts over `HIST_BINS` equal bins of
    /// `[0, max letter distortion]`.
    pub histogram: Vec<u64>,
    /// `P(d_n(X, Y) > n D)` for an unconstrained test-channel draw.
    pub baseline: Proportion,
    pub restarts: u64,
    pub bp_converged: u64,
    pub mean_encoder_bits: f64,
    pub exact: Option<f64>,
}

impl DistortionStats {
    pub fn collect(outcomes: &[LossyTrial], n: usize, max_letter: f64, z: f64) -> Self {
        let trials = outcomes.len() as u64;
        let mut dist = MeanAcc::default();
        let mut bits = MeanAcc::default();
        let mut enc = MeanAcc::default();
        let mut histogram = vec![0u64; HIST_BINS];
        for o in outcomes {
            if let Some(d) = o.encoder_distortion {
                enc.push(d / n as f64);
            }
            if let Some(d) = o.distortion {
                let per = d / n as f64;
                dist.push(per);
                bits.push(o.encoder_bits);
                let bin = if max_letter > 0.0 {
                    ((per / max_letter * HIST_BINS as f64) as usize).min(HIST_BINS - 1)
                } else {
                    0
                };
                histogram[bin] += 1;
            }
        }
        let count = |f: &dyn Fn(&LossyTrial) -> bool| outcomes.iter().filter(|o| f(o)).count() as u64;
        let errors = count(&|o| o.error);
        DistortionStats {
            trials,
            errors,
            encoding_errors: count(&|o| o.encoding_error),
            decode_failures: count(&|o| o.decode_failure),
            rate: Proportion::new(errors, trials, z),
            mean_distortion: dist.mean(),
            distortion_stderr: dist.stderr(),
            mean_encoder_distortion: enc.mean(),
            histogram,
            baseline: Proportion::new(count(&|o| o.baseline_error), trials, z),
            restarts: outcomes.iter().map(|o| o.restarts as u64).sum(),
            bp_converged: count(&|o| o.bp_converged),
            mean_encoder_bits: bits.mean(),
            exact: None,
        }
    }
}
