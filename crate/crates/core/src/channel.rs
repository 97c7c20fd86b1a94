//! Channel code built from two linear maps: `A` fixes a coset `C_A(c)`,
//! `B` indexes messages inside it. The encoder samples the input prior
//! restricted to `{x : Ax = c, Bx = m}`; the decoder finds the most likely
//! member of `C_A(c)` given the channel output and reads off `B x`.

use std::collections::BTreeSet;

use rand::Rng;
use rayon::prelude::*;

use crate::coding::{
    bp_coset_decode, coset_argmax, trial_rng, DecodeFailure, DecodeMethod, DecodeOutcome,
    RateCondition, RateReport,
};
use crate::crng::{exact_coset_law, BitSource, Crng, CrngConfig, GeneratedSample};
use crate::error::{check_cap, check_len, Error, Result};
use crate::factor_graph::BpConfig;
use crate::gf::{Field, Symbol};
use crate::linear::{
    for_each_vector, left_inverse_of_generator, random_vector, row_reduce, sample_sparse_matrix,
    EchelonForm, EnsembleSpec, SequentialSolver, SparseMatrix,
};
use crate::models::{rate_quantities, reverse_model, MemorylessChannel, MemorylessSource, Output};
use crate::stats::{MeanAcc, Proportion};

/// Which decoder a simulation uses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Decoder {
    /// Exhaustive MAP over `C_A(c)`, refused above `cap` members.
    Map { cap: u64 },
    Bp(BpConfig),
}

#[derive(Clone, Debug)]
pub struct ChannelCode {
    a: SparseMatrix,
    b: SparseMatrix,
    c: Vec<Symbol>,
    prior: MemorylessSource,
    a_echelon: EchelonForm,
    b_solver: SequentialSolver,
    encoder: Crng,
    rank_a: usize,
    rank_ab: usize,
}

impl ChannelCode {
    pub fn new(
        a: SparseMatrix,
        b: SparseMatrix,
        c: Vec<Symbol>,
        prior: MemorylessSource,
        cfg: CrngConfig,
    ) -> Result<Self> {
        let n = a.cols();
        check_len("B columns", n, b.cols())?;
        check_len("c", a.rows(), c.len())?;
        check_len("prior length", n, prior.len())?;
        check_len("prior alphabet", a.field().size(), prior.alphabet())?;
        if a.field() != b.field() {
            return Err(Error::Usage("A and B must share a field".into()));
        }
        a.field().check_vector(&c)?;
        let a_echelon = row_reduce(&a);
        if a_echelon.solve(&c)?.is_none() {
            return Err(Error::Usage("c is not in the image of A".into()));
        }
        let stacked = a.stack(&b)?;
        let encoder = Crng::new(stacked, cfg)?;
        Ok(ChannelCode {
            rank_a: a_echelon.rank(),
            rank_ab: encoder.solver().rank(),
            b_solver: SequentialSolver::new(&b),
            a,
            b,
            c,
            prior,
            a_echelon,
            encoder,
        })
    }

    /// Draws `A` and `B` independently from the sparse ensemble and `c`
    /// uniformly from the image of `A`.
    #[allow(clippy::too_many_arguments)]
    pub fn sample<R: Rng + ?Sized>(
        field: Field,
        n: usize,
        l: usize,
        k: usize,
        tau: usize,
        prior: MemorylessSource,
        cfg: CrngConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let a = draw_matrix(field, n, l, tau, rng)?;
        let b = draw_matrix(field, n, k, tau, rng)?;
        let c = a.mul_vec(&random_vector(field, n, rng))?;
        Self::new(a, b, c, prior, cfg)
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

    pub fn prior(&self) -> &MemorylessSource {
        &self.prior
    }

    pub fn field(&self) -> Field {
        self.a.field()
    }

    pub fn n(&self) -> usize {
        self.a.cols()
    }

    pub fn rank_a(&self) -> usize {
        self.rank_a
    }

    /// Rank of the stacked map `(A, B)`.
    pub fn rank_stacked(&self) -> usize {
        self.rank_ab
    }

    /// `r = rank(A)/n log2 q`.
    pub fn r(&self) -> f64 {
        self.rank_a as f64 / self.n() as f64 * (self.field().size() as f64).log2()
    }

    /// Effective message rate: the message dimensions the stacked map
    /// actually separates, `(rank(A, B) - rank(A))/n log2 q`.
    pub fn big_r(&self) -> f64 {
        (self.rank_ab - self.rank_a) as f64 / self.n() as f64 * (self.field().size() as f64).log2()
    }

    pub fn is_message(&self, m: &[Symbol]) -> Result<bool> {
        self.field().check_vector(m)?;
        self.b_solver.in_image(m)
    }

    /// A uniform element of `Im B`.
    pub fn random_message<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Symbol> {
        let u = random_vector(self.field(), self.n(), rng);
        self.b.mul_vec_unchecked(&u)
    }

    /// Samples `x` from the prior restricted to `C_AB(c, m)`. Fails with
    /// [`Error::Encoding`] when that set is empty or has zero prior mass.
    pub fn encode<R: Rng + ?Sized>(&self, m: &[Symbol], rng: &mut R) -> Result<GeneratedSample> {
        let target = self.target(m)?;
        let s = self.encoder.generate(&target, &self.prior, rng)?;
        debug_assert_eq!(self.encoder.matrix().mul_vec_unchecked(&s.x), target);
        Ok(s)
    }

    /// Deterministic encoding: the interval algorithm driven by `bits`.
    pub fn encode_with_bits<B: BitSource + ?Sized>(&self, m: &[Symbol], bits: &mut B) -> Result<GeneratedSample> {
        let target = self.target(m)?;
        self.encoder.generate_interval(&target, &self.prior, bits)
    }

    fn target(&self, m: &[Symbol]) -> Result<Vec<Symbol>> {
        check_len("message", self.b.rows(), m.len())?;
        if !self.is_message(m)? {
            return Err(Error::Usage("message is not in the image of B".into()));
        }
        let mut target = self.c.clone();
        target.extend_from_slice(m);
        Ok(target)
    }

    /// The encoder's law for `m`: the normalized prior on `C_AB(c, m)`.
    pub fn encoder_law(&self, m: &[Symbol], cap: u64) -> Result<Vec<(Vec<Symbol>, f64)>> {
        let target = self.target(m)?;
        exact_coset_law(self.encoder.matrix(), &target, &self.prior, cap)
    }

    /// Natural-log posterior weight `ln prior(x) + ln W(y|x)`.
    fn log_posterior(&self, ch: &MemorylessChannel, y: &[Output], x: &[Symbol]) -> Result<f64> {
        let mut s = 0.0;
        for i in 0..x.len() {
            s += (self.prior.pmf(i)[x[i] as usize] * ch.kernel(i).likelihood(y[i], x[i])?).ln();
        }
        Ok(s)
    }

    fn check_output(&self, ch: &MemorylessChannel, y: &[Output]) -> Result<()> {
        check_len("channel length", self.n(), ch.len())?;
        check_len("channel output", self.n(), y.len())
    }

    /// Exhaustive MAP over `C_A(c)`; ties go to the lexicographically least
    /// maximizer and are flagged.
    pub fn decode_map(&self, y: &[Output], ch: &MemorylessChannel, cap: u64) -> Result<DecodeOutcome> {
        self.check_output(ch, y)?;
        let space = self.a_echelon.coset(&self.c)?.expect("c checked at construction");
        // Validate letters once so the scoring closure cannot fail.
        for (i, &yi) in y.iter().enumerate() {
            ch.kernel(i).likelihood(yi, 0)?;
        }
        let best = coset_argmax(&space, cap, |x| self.log_posterior(ch, y, x).expect("validated"))?;
        Ok(match best {
            None => DecodeOutcome::failed(DecodeMethod::MapExhaustive, DecodeFailure::ZeroPosterior),
            Some((x, tie)) => DecodeOutcome {
                method: DecodeMethod::MapExhaustive,
                message: Some(self.b.mul_vec_unchecked(&x)),
                estimate: Some(x),
                failure: None,
                tie,
                iterations: 0,
                converged: true,
            },
        })
    }

    /// Sum-product on the coset graph with per-letter posteriors as priors.
    pub fn decode_bp(&self, y: &[Output], ch: &MemorylessChannel, cfg: &BpConfig) -> Result<DecodeOutcome> {
        self.check_output(ch, y)?;
        let post = match reverse_model(&self.prior, ch, y) {
            Ok(p) => p.posteriors,
            Err(Error::ZeroEvidence { .. }) => {
                return Ok(DecodeOutcome::failed(DecodeMethod::Bp, DecodeFailure::ZeroPosterior))
            }
            Err(e) => return Err(e),
        };
        let mut out = bp_coset_decode(&self.a, &self.c, &post, cfg)?;
        if out.failure.is_none() {
            out.message = out.estimate.as_ref().map(|x| self.b.mul_vec_unchecked(x));
        }
        Ok(out)
    }

    pub fn decode(&self, y: &[Output], ch: &MemorylessChannel, decoder: &Decoder) -> Result<DecodeOutcome> {
        match decoder {
            Decoder::Map { cap } => self.decode_map(y, ch, *cap),
            Decoder::Bp(cfg) => self.decode_bp(y, ch, cfg),
        }
    }

    /// One encode/transmit/decode round on the trial's own random stream.
    pub fn run_trial(&self, ch: &MemorylessChannel, decoder: &Decoder, seed: u64, trial: u64) -> Result<TrialOutcome> {
        let mut rng = trial_rng(seed, trial);
        let m = self.random_message(&mut rng);
        let sample = match self.encode(&m, &mut rng) {
            Ok(s) => s,
            Err(Error::Encoding | Error::DeadEnd { .. }) => return Ok(TrialOutcome::encoding_error()),
            Err(e) => return Err(e),
        };
        let y = ch.sample(&sample.x, &mut rng)?;
        let d = self.decode(&y, ch, decoder)?;
        Ok(TrialOutcome {
            encoding_error: false,
            failure: d.failure,
            wrong_message: d.failure.is_none() && d.message.as_deref() != Some(m.as_slice()),
            tie: d.tie,
            bp_iterations: d.iterations,
            bp_converged: d.converged,
            restarts: sample.restarts,
            encoder_bits: -sample.log2_prob(),
        })
    }

    /// Monte-Carlo estimate of the block error probability. Messages are
    /// uniform on `Im B`; encoding errors count as errors.
    pub fn simulate(
        &self,
        ch: &MemorylessChannel,
        trials: u64,
        decoder: &Decoder,
        seed: u64,
        z: f64,
    ) -> Result<ErrorStats> {
        if trials == 0 {
            return Err(Error::Usage("simulation needs at least one trial".into()));
        }
        let outcomes: Vec<TrialOutcome> = (0..trials)
            .into_par_iter()
            .map(|t| self.run_trial(ch, decoder, seed, t))
            .collect::<Result<_>>()?;
        let mut stats = ErrorStats::collect(&outcomes, z);
        if exact_scale(self, ch) {
            stats.exact = Some(self.exact_error(ch, decoder, EXACT_SUM_CAP)?);
        }
        Ok(stats)
    }

    /// `Error(A, B, c)` by full summation over messages, encoder outputs
    /// and channel outputs. Discrete channels only.
    pub fn exact_error(&self, ch: &MemorylessChannel, decoder: &Decoder, cap: u64) -> Result<f64> {
        check_len("channel length", self.n(), ch.len())?;
        let outputs = ch
            .kernel(0)
            .outputs()
            .ok_or_else(|| Error::Usage("exact error needs a discrete channel".into()))?;
        if (0..self.n()).any(|i| ch.kernel(i).outputs() != Some(outputs)) {
            return Err(Error::Usage("exact error needs a common output alphabet".into()));
        }
        let q = self.field().size();
        check_cap("exact error input space", q, self.n(), cap)?;
        check_cap("exact error output space", outputs, self.n(), cap)?;
        // Decisions for every output sequence.
        let mut ys = Vec::new();
        for_each_vector(outputs as Symbol, self.n(), |y| ys.push(y.to_vec()));
        let decisions: Vec<Option<Vec<Symbol>>> = ys
            .par_iter()
            .map(|y| {
                let y: Vec<Output> = y.iter().map(|&s| Output::Symbol(s)).collect();
                Ok(self.decode(&y, ch, decoder)?.message)
            })
            .collect::<Result<_>>()?;
        let mut messages = BTreeSet::new();
        for_each_vector(q as Symbol, self.n(), |x| {
            messages.insert(self.b.mul_vec_unchecked(x));
        });
        let weight = 1.0 / messages.len() as f64;
        let mut error = 0.0;
        for m in &messages {
            let law = match self.encoder_law(m, cap) {
                Ok(law) => law,
                Err(Error::Encoding) => {
                    error += weight;
                    continue;
                }
                Err(e) => return Err(e),
            };
            for (x, px) in &law {
                for (y, d) in ys.iter().zip(&decisions) {
                    if d.as_deref() == Some(m.as_slice()) {
                        continue;
                    }
                    let mut w = 1.0;
                    for i in 0..self.n() {
                        w *= ch.kernel(i).likelihood(Output::Symbol(y[i]), x[i])?;
                    }
                    error += weight * px * w;
                }
            }
        }
        Ok(error)
    }

    /// Conditions `r > H(X|Y)` and `r + R < H(X)` at the code's own rates.
    pub fn rate_check(&self, ch: &MemorylessChannel) -> Result<RateReport> {
        rate_check(self.r(), self.big_r(), &self.prior, ch)
    }
}

/// Cap on `q^n` and `|Y|^n` for the exact error summation in [`ChannelCode::simulate`].
const EXACT_SUM_CAP: u64 = 1 << 10;

fn exact_scale(code: &ChannelCode, ch: &MemorylessChannel) -> bool {
    let n = code.n();
    let fits = |k: usize| (k as f64).powi(n as i32) <= EXACT_SUM_CAP as f64;
    fits(code.field().size()) && ch.kernel(0).outputs().is_some_and(fits)
}

/// One sparse-ensemble draw with `rows` rows; an empty map when `rows == 0`.
pub fn draw_matrix<R: Rng + ?Sized>(field: Field, n: usize, rows: usize, tau: usize, rng: &mut R) -> Result<SparseMatrix> {
    if rows == 0 {
        return Ok(SparseMatrix::zeros(field, 0, n));
    }
    let spec = EnsembleSpec {
        n,
        l: rows,
        field,
        tau,
        seed: 0,
    };
    sample_sparse_matrix(&spec, rng)
}

/// Channel-coding rate conditions for given rates.
pub fn rate_check(r: f64, big_r: f64, prior: &MemorylessSource, ch: &MemorylessChannel) -> Result<RateReport> {
    let rq = rate_quantities(prior, ch)?;
    let log_q = (prior.alphabet() as f64).log2();
    let mut conditions = vec![
        RateCondition::new("r > H(X|Y)", r, ">", rq.h_x_given_y),
        RateCondition::new("r + R < H(X)", r + big_r, "<", rq.h_x),
    ];
    if prior.is_uniform() {
        conditions.push(RateCondition::new("r < log|X|", r, "<", log_q).linear_only());
        conditions.push(RateCondition::new("R >= log|X| - r", big_r, ">=", log_q - r).linear_only());
    }
    Ok(RateReport {
        r,
        big_r,
        h_x: rq.h_x,
        h_x_given_y: rq.h_x_given_y,
        conditions,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialOutcome {
    pub encoding_error: bool,
    pub failure: Option<DecodeFailure>,
    pub wrong_message: bool,
    pub tie: bool,
    pub bp_iterations: usize,
    pub bp_converged: bool,
    pub restarts: usize,
    /// `-log2` of the probability of the encoder's draw.
    pub encoder_bits: f64,
}

impl TrialOutcome {
    fn encoding_error() -> Self {
        TrialOutcome {
            encoding_error: true,
            failure: None,
            wrong_message: false,
            tie: false,
            bp_iterations: 0,
            bp_converged: false,
            restarts: 0,
            encoder_bits: 0.0,
        }
    }

    pub fn is_error(&self) -> bool {
        self.encoding_error || self.failure.is_some() || self.wrong_message
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorStats {
    pub trials: u64,
    pub errors: u64,
    pub encoding_errors: u64,
    /// Decoder gave up: empty or massless coset, inconsistent or violated BP.
    pub decode_failures: u64,
    pub wrong_messages: u64,
    pub ties: u64,
    pub rate: Proportion,
    pub bp_converged: u64,
    pub mean_bp_iterations: f64,
    pub restarts: u64,
    pub mean_encoder_bits: f64,
    /// Full-summation error probability when the instance is small enough.
    pub exact: Option<f64>,
}

impl ErrorStats {
    pub fn collect(outcomes: &[TrialOutcome], z: f64) -> Self {
        let mut iters = MeanAcc::default();
        let mut bits = MeanAcc::default();
        let count = |f: &dyn Fn(&TrialOutcome) -> bool| outcomes.iter().filter(|o| f(o)).count() as u64;
        for o in outcomes.iter().filter(|o| !o.encoding_error) {
            iters.push(o.bp_iterations as f64);
            bits.push(o.encoder_bits);
        }
        let errors = count(&|o| o.is_error());
        ErrorStats {
            trials: outcomes.len() as u64,
            errors,
            encoding_errors: count(&|o| o.encoding_error),
            decode_failures: count(&|o| o.failure.is_some()),
            wrong_messages: count(&|o| o.wrong_message),
            ties: count(&|o| o.tie),
            rate: Proportion::new(errors, outcomes.len() as u64, z),
            bp_converged: count(&|o| o.bp_converged),
            mean_bp_iterations: iters.mean(),
            restarts: outcomes.iter().map(|o| o.restarts as u64).sum(),
            mean_encoder_bits: bits.mean(),
            exact: None,
        }
    }
}

/// The conventional linear code for a uniform input: `x = G m + x_c` with
/// `G` a kernel basis of `A`, decoded by `B (x_A(c|y) - x_c)` with `B G = I`.
#[derive(Clone, Debug)]
pub struct LinearCode {
    a: SparseMatrix,
    c: Vec<Symbol>,
    g: SparseMatrix,
    b: SparseMatrix,
    x_c: Vec<Symbol>,
    a_echelon: EchelonForm,
}

impl LinearCode {
    pub fn new(a: SparseMatrix, c: Vec<Symbol>) -> Result<Self> {
        let f = a.field();
        let n = a.cols();
        let a_echelon = row_reduce(&a);
        let x_c = a_echelon
            .solve(&c)?
            .ok_or_else(|| Error::Usage("c is not in the image of A".into()))?;
        let basis = a_echelon.kernel_basis();
        let dense: Vec<Vec<Symbol>> = (0..n).map(|i| basis.iter().map(|v| v[i]).collect()).collect();
        let g = SparseMatrix::from_dense(f, basis.len(), &dense)?;
        let b = left_inverse_of_generator(&g)?;
        // Shift x_c inside its coset so that B x_c = 0; then B inverts the
        // encoder exactly.
        let shift = g.mul_vec(&b.mul_vec(&x_c)?)?;
        let x_c: Vec<Symbol> = x_c.iter().zip(&shift).map(|(&u, &v)| f.sub(u, v)).collect();
        Ok(LinearCode {
            a,
            c,
            g,
            b,
            x_c,
            a_echelon,
        })
    }

    pub fn generator(&self) -> &SparseMatrix {
        &self.g
    }

    pub fn left_inverse(&self) -> &SparseMatrix {
        &self.b
    }

    pub fn offset(&self) -> &[Symbol] {
        &self.x_c
    }

    /// Message length `n - rank(A)`.
    pub fn k(&self) -> usize {
        self.g.cols()
    }

    pub fn encode(&self, m: &[Symbol]) -> Result<Vec<Symbol>> {
        let f = self.a.field();
        check_len("message", self.k(), m.len())?;
        f.check_vector(m)?;
        let gm = self.g.mul_vec(m)?;
        Ok(gm.iter().zip(&self.x_c).map(|(&u, &v)| f.add(u, v)).collect())
    }

    /// MAP over `C_A(c)` under the uniform prior, then `B (x - x_c)`.
    pub fn decode_map(&self, y: &[Output], ch: &MemorylessChannel, cap: u64) -> Result<DecodeOutcome> {
        let f = self.a.field();
        check_len("channel length", self.a.cols(), ch.len())?;
        check_len("channel output", self.a.cols(), y.len())?;
        for (i, &yi) in y.iter().enumerate() {
            ch.kernel(i).likelihood(yi, 0)?;
        }
        let space = self.a_echelon.coset(&self.c)?.expect("c checked at construction");
        let best = coset_argmax(&space, cap, |x| {
            (0..x.len())
                .map(|i| ch.kernel(i).likelihood(y[i], x[i]).expect("validated").ln())
                .sum()
        })?;
        Ok(match best {
            None => DecodeOutcome::failed(DecodeMethod::MapExhaustive, DecodeFailure::ZeroPosterior),
            Some((x, tie)) => {
                let diff: Vec<Symbol> = x.iter().zip(&self.x_c).map(|(&u, &v)| f.sub(u, v)).collect();
                DecodeOutcome {
                    method: DecodeMethod::MapExhaustive,
                    message: Some(self.b.mul_vec(&diff)?),
                    estimate: Some(x),
                    failure: None,
                    tie,
                    iterations: 0,
                    converged: true,
                }
            }
        })
    }

    /// The same code as a stochastic code: uniform prior, `B` as message map.
    pub fn as_channel_code(&self, cfg: CrngConfig) -> Result<ChannelCode> {
        let prior = MemorylessSource::uniform(self.a.cols(), self.a.field().size());
        ChannelCode::new(self.a.clone(), self.b.clone(), self.c.clone(), prior, cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Kernel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gf2() -> Field {
        Field::new(2).unwrap()
    }

    fn mat(rows: &[&[u16]], n: usize) -> SparseMatrix {
        let dense: Vec<Vec<u16>> = rows.iter().map(|r| r.to_vec()).collect();
        SparseMatrix::from_dense(gf2(), n, &dense).unwrap()
    }

    fn sym(x: &[u16]) -> Vec<Output> {
        x.iter().map(|&s| Output::Symbol(s)).collect()
    }

    #[test]
    fn no_hash_identity_message() {
        let f = gf2();
        let code = ChannelCode::new(
            SparseMatrix::zeros(f, 0, 4),
            SparseMatrix::identity(f, 4),
            vec![],
            MemorylessSource::bernoulli(4, 0.3).unwrap(),
            CrngConfig::default(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for m in [[0, 1, 1, 0], [1, 1, 1, 1]] {
            assert_eq!(code.encode(&m, &mut rng).unwrap().x, m);
        }
        assert_eq!(code.r(), 0.0);
        assert_eq!(code.big_r(), 1.0);
    }

    #[test]
    fn singleton_coset_encodes_deterministically() {
        let code = ChannelCode::new(
            mat(&[&[1, 1]], 2),
            mat(&[&[1, 0]], 2),
            vec![0],
            MemorylessSource::uniform(2, 2),
            CrngConfig::default(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            assert_eq!(code.encode(&[1], &mut rng).unwrap().x, vec![1, 1]);
        }
    }

    #[test]
    fn rejects_bad_targets() {
        let a = mat(&[&[1, 1, 0], &[1, 1, 0]], 3);
        let b = mat(&[&[0, 0, 0]], 3);
        let p = MemorylessSource::uniform(3, 2);
        assert!(matches!(
            ChannelCode::new(a.clone(), b.clone(), vec![1, 0], p.clone(), CrngConfig::default()),
            Err(Error::Usage(_))
        ));
        let code = ChannelCode::new(a, b, vec![1, 1], p, CrngConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(code.encode(&[1], &mut rng), Err(Error::Usage(_))));
        assert_eq!(code.encode(&[0], &mut rng).unwrap().x[..2].iter().fold(0, |a, &b| a ^ b), 1);
    }

    #[test]
    fn zero_mass_coset_is_an_encoding_error() {
        let prior = MemorylessSource::new(vec![vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let code = ChannelCode::new(
            mat(&[&[1, 1]], 2),
            mat(&[&[1, 0]], 2),
            vec![0],
            prior,
            CrngConfig::default(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(matches!(code.encode(&[1], &mut rng), Err(Error::Encoding)));
        assert_eq!(code.encode(&[0], &mut rng).unwrap().x, vec![0, 0]);
    }

    #[test]
    fn uniform_encoder_is_uniform_on_coset() {
        // Chi-square over C_AB(c, m) at n = 8.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = mat(&[&[1, 1, 0, 1, 0, 0, 1, 0], &[0, 1, 1, 0, 1, 0, 0, 1]], 8);
        let b = mat(&[&[1, 0, 0, 0, 1, 1, 0, 0]], 8);
        let code = ChannelCode::new(a, b, vec![1, 0], MemorylessSource::uniform(8, 2), CrngConfig::default())
            .unwrap();
        let law = code.encoder_law(&[1], 1 << 12).unwrap();
        assert_eq!(law.len(), 32);
        let mut counts = std::collections::BTreeMap::new();
        let trials = 32_000;
        for _ in 0..trials {
            *counts.entry(code.encode(&[1], &mut rng).unwrap().x).or_insert(0u32) += 1;
        }
        assert_eq!(counts.len(), 32);
        let e = trials as f64 / 32.0;
        let chi2: f64 = counts.values().map(|&o| (o as f64 - e).powi(2) / e).sum();
        // 31 degrees of freedom, 99.9% quantile about 61.1.
        assert!(chi2 < 61.1, "chi2 {chi2}");
    }

    #[test]
    fn map_matches_full_space_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ch = MemorylessChannel::stationary(8, Kernel::bsc(0.1).unwrap());
        let prior = MemorylessSource::uniform(8, 2);
        for _ in 0..20 {
            let code = ChannelCode::sample(gf2(), 8, 4, 2, 2, prior.clone(), CrngConfig::default(), &mut rng)
                .unwrap();
            let y: Vec<u16> = (0..8).map(|_| rng.random_range(0..2)).collect();
            let out = code.decode_map(&sym(&y), &ch, 1 << 10).unwrap();
            let mut best: Option<(f64, Vec<u16>)> = None;
            for_each_vector(2, 8, |x| {
                if code.a().mul_vec(x).unwrap() != code.c() {
                    return;
                }
                let s: f64 = (0..8).map(|i| (0.5f64 * if x[i] == y[i] { 0.9 } else { 0.1 }).ln()).sum();
                if best.as_ref().is_none_or(|(b, _)| s > b + 1e-12 * b.abs().max(1.0)) {
                    best = Some((s, x.to_vec()));
                }
            });
            assert_eq!(out.estimate, best.map(|b| b.1));
        }
    }

    #[test]
    fn map_tie_and_noiseless() {
        let code = ChannelCode::new(
            mat(&[&[1, 1, 1]], 3),
            mat(&[&[1, 0, 0]], 3),
            vec![0],
            MemorylessSource::uniform(3, 2),
            CrngConfig::default(),
        )
        .unwrap();
        let useless = MemorylessChannel::stationary(3, Kernel::bsc(0.5).unwrap());
        let out = code.decode_map(&sym(&[1, 1, 1]), &useless, 1 << 10).unwrap();
        assert!(out.tie);
        assert_eq!(out.estimate, Some(vec![0, 0, 0]));

        let clean = MemorylessChannel::stationary(3, Kernel::noiseless(2));
        let out = code.decode_map(&sym(&[1, 0, 1]), &clean, 1 << 10).unwrap();
        assert_eq!((out.message, out.tie), (Some(vec![1]), false));
        let bp = code.decode_bp(&sym(&[1, 0, 1]), &clean, &BpConfig::default()).unwrap();
        assert_eq!((bp.message, bp.iterations), (Some(vec![1]), 1));
        // An output no coset member can produce.
        let bad = code.decode_bp(&sym(&[1, 0, 0]), &clean, &BpConfig::default()).unwrap();
        assert!(bad.failure.is_some() && bad.message.is_none());
        let bad = code.decode_map(&sym(&[1, 0, 0]), &clean, 1 << 10).unwrap();
        assert_eq!(bad.failure, Some(DecodeFailure::ZeroPosterior));
    }

    #[test]
    fn bp_agrees_with_map_on_a_tree() {
        // Two checks sharing one variable: a tree.
        let a = mat(&[&[1, 1, 1, 0, 0, 0, 0, 0], &[0, 0, 1, 1, 1, 0, 0, 0]], 8);
        let b = mat(&[&[1, 0, 0, 1, 0, 1, 0, 1]], 8);
        let code = ChannelCode::new(a, b, vec![1, 0], MemorylessSource::uniform(8, 2), CrngConfig::default())
            .unwrap();
        let ch = MemorylessChannel::stationary(8, Kernel::bsc(0.15).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut compared = 0;
        for _ in 0..200 {
            let y: Vec<u16> = (0..8).map(|_| rng.random_range(0..2)).collect();
            let map = code.decode_map(&sym(&y), &ch, 1 << 10).unwrap();
            if map.tie {
                continue;
            }
            let bp = code.decode_bp(&sym(&y), &ch, &BpConfig::default()).unwrap();
            assert_eq!(bp.estimate, map.estimate, "y = {y:?}");
            compared += 1;
        }
        assert!(compared > 50);
    }

    #[test]
    fn noiseless_simulation_has_no_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let code = ChannelCode::sample(gf2(), 10, 4, 6, 2, MemorylessSource::uniform(10, 2), CrngConfig::default(), &mut rng)
            .unwrap();
        let ch = MemorylessChannel::stationary(10, Kernel::noiseless(2));
        for dec in [Decoder::Map { cap: 1 << 12 }, Decoder::Bp(BpConfig::default())] {
            let s = code.simulate(&ch, 200, &dec, 3, crate::stats::Z99).unwrap();
            assert_eq!(s.errors, s.encoding_errors);
        }
    }

    #[test]
    fn single_message_error_is_leaving_the_mode() {
        // R = 0: B = 0, one message. Error = P(MAP over C_A(c) != sent x).
        let a = mat(&[&[1, 1, 0, 0], &[0, 0, 1, 1]], 4);
        let b = mat(&[&[0, 0, 0, 0]], 4);
        let code = ChannelCode::new(a, b, vec![0, 0], MemorylessSource::uniform(4, 2), CrngConfig::default())
            .unwrap();
        let ch = MemorylessChannel::stationary(4, Kernel::bsc(0.1).unwrap());
        let e = code.exact_error(&ch, &Decoder::Map { cap: 1 << 10 }, 1 << 10).unwrap();
        assert!(e.abs() < 1e-15, "the decoded message is always the single one");
    }

    #[test]
    fn exact_error_matches_simulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let code = ChannelCode::sample(gf2(), 6, 2, 2, 2, MemorylessSource::uniform(6, 2), CrngConfig::default(), &mut rng)
            .unwrap();
        let ch = MemorylessChannel::stationary(6, Kernel::bsc(0.1).unwrap());
        let s = code.simulate(&ch, 20_000, &Decoder::Map { cap: 1 << 10 }, 11, crate::stats::Z99).unwrap();
        let exact = s.exact.unwrap();
        assert!(s.rate.contains(exact), "{exact} vs {:?}", s.rate);
    }

    #[test]
    fn rate_conditions() {
        let prior = MemorylessSource::uniform(1, 2);
        let ch = MemorylessChannel::stationary(1, Kernel::bsc(0.11).unwrap());
        let rep = rate_check(0.55, 0.4, &prior, &ch).unwrap();
        assert!(rep.conditions[0].satisfied && rep.conditions[1].satisfied);
        // 0.4 < 1 - 0.55: the linear variant would need more message rate.
        assert!(rep.all_satisfied() && !rep.linear_satisfied());
        assert!(rate_check(0.55, 0.45, &prior, &ch).unwrap().linear_satisfied());
        assert!(!rate_check(0.0, 0.4, &prior, &ch).unwrap().conditions[0].satisfied);
        assert!(!rate_check(0.6, 0.4, &prior, &ch).unwrap().conditions[1].satisfied);
    }

    #[test]
    fn linear_code_round_trip_and_equivalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let f = gf2();
        for _ in 0..10 {
            let a = draw_matrix(f, 6, 3, 2, &mut rng).unwrap();
            let c = a.mul_vec(&random_vector(f, 6, &mut rng)).unwrap();
            let lin = LinearCode::new(a.clone(), c.clone()).unwrap();
            let k = lin.k();
            let stoch = lin.as_channel_code(CrngConfig::default()).unwrap();
            for_each_vector(2, k, |m| {
                let x = lin.encode(m).unwrap();
                assert_eq!(a.mul_vec(&x).unwrap(), c);
                assert_eq!(lin.left_inverse().mul_vec(&lin.generator().mul_vec(m).unwrap()).unwrap(), m);
                // The stochastic code with the same B puts all mass on x.
                let law = stoch.encoder_law(m, 1 << 10).unwrap();
                assert_eq!(law, vec![(x, 1.0)]);
            });
            let ch = MemorylessChannel::stationary(6, Kernel::bsc(0.1).unwrap());
            let dec = Decoder::Map { cap: 1 << 10 };
            let e1 = stoch.exact_error(&ch, &dec, 1 << 10).unwrap();
            // Deterministic code, averaged over messages.
            let mut e2 = 0.0;
            let mut count = 0;
            for_each_vector(2, k, |m| {
                count += 1;
                let x = lin.encode(m).unwrap();
                for_each_vector(2, 6, |y| {
                    let out = lin.decode_map(&sym(y), &ch, 1 << 10).unwrap();
                    if out.message.as_deref() != Some(m) {
                        let w: f64 = (0..6).map(|i| if x[i] == y[i] { 0.9 } else { 0.1 }).product();
                        e2 += w;
                    }
                });
            });
            assert!((e1 - e2 / count as f64).abs() < 1e-12);
        }
        let a = mat(&[&[1, 1, 0], &[1, 1, 0]], 3);
        assert!(matches!(LinearCode::new(a, vec![1, 0]), Err(Error::Usage(_))));
    }

    #[test]
    fn zero_target_linear_code_is_plain() {
        let a = mat(&[&[1, 1, 0, 1], &[0, 1, 1, 1]], 4);
        let lin = LinearCode::new(a, vec![0, 0]).unwrap();
        assert!(lin.offset().iter().all(|&v| v == 0));
        assert_eq!(lin.encode(&[1, 0]).unwrap(), lin.generator().mul_vec(&[1, 0]).unwrap());
    }
}
