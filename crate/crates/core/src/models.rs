//! Memoryless sources and channels, possibly non-stationary.
//!
//! Probabilities are reported in log2. A source holds one pmf per position;
//! a channel holds one kernel per position. Kernels are either finite tables
//! or the binary-input AWGN density (`0 -> +1`, `1 -> -1`).

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_len, Error, Result};
use crate::gf::Symbol;

const PMF_TOL: f64 = 1e-9;

fn check_pmf(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() {
        return Err(Error::Usage(format!("{what}: empty pmf")));
    }
    if p.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
        return Err(Error::Usage(format!("{what}: entries must be finite and >= 0")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > PMF_TOL {
        return Err(Error::Usage(format!("{what}: pmf sums to {s}, not 1")));
    }
    Ok(())
}

/// Entropy of a pmf in bits.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.log2())
        .sum::<f64>()
}

/// Binary entropy `h(p)` in bits.
pub fn binary_entropy(p: f64) -> f64 {
    entropy(&[p, 1.0 - p])
}

/// Index drawn from `pmf` by inverse CDF at `u in [0, 1)`, scanning symbols
/// in canonical order. Never returns a zero-probability index.
pub fn sample_index(pmf: &[f64], u: f64) -> usize {
    let total: f64 = pmf.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in pmf.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if target < acc {
                return i;
            }
        }
    }
    last_positive
}

#[derive(Clone, Debug, PartialEq)]
pub struct MemorylessSource {
    alphabet: usize,
    pmfs: Vec<Vec<f64>>,
}

impl MemorylessSource {
    pub fn new(pmfs: Vec<Vec<f64>>) -> Result<Self> {
        let alphabet = pmfs.first().map_or(0, Vec::len);
        for (i, p) in pmfs.iter().enumerate() {
            check_len("pmf", alphabet, p.len())?;
            check_pmf(p, &format!("source position {i}"))?;
        }
        Ok(MemorylessSource { alphabet, pmfs })
    }

    pub fn iid(n: usize, pmf: &[f64]) -> Result<Self> {
        Self::new(vec![pmf.to_vec(); n])
    }

    pub fn uniform(n: usize, q: usize) -> Self {
        MemorylessSource {
            alphabet: q,
            pmfs: vec![vec![1.0 / q as f64; q]; n],
        }
    }

    /// IID binary source with `P(1) = p`.
    pub fn bernoulli(n: usize, p: f64) -> Result<Self> {
        Self::iid(n, &[1.0 - p, p])
    }

    /// Parses `uniform`, `bernoulli(p)` or `pmf(p0,p1,...)` into an IID
    /// source of length `n` over `q` letters.
    pub fn from_preset(s: &str, n: usize, q: usize) -> Result<Self> {
        if s.trim() == "uniform" {
            return Ok(Self::uniform(n, q));
        }
        let (name, args) = parse_call(s)?;
        let src = match name {
            "bernoulli" if args.len() == 1 => Self::bernoulli(n, args[0])?,
            "pmf" => Self::iid(n, &args)?,
            _ => return Err(Error::Usage(format!("unknown source preset {s:?}"))),
        };
        check_len("source alphabet", q, src.alphabet())?;
        Ok(src)
    }

    pub fn len(&self) -> usize {
        self.pmfs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pmfs.is_empty()
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn pmf(&self, i: usize) -> &[f64] {
        &self.pmfs[i]
    }

    pub fn pmfs(&self) -> &[Vec<f64>] {
        &self.pmfs
    }

    pub fn is_uniform(&self) -> bool {
        let u = 1.0 / self.alphabet as f64;
        self.pmfs.iter().flatten().all(|&p| p == u)
    }

    pub fn log_prob(&self, x: &[Symbol]) -> Result<f64> {
        check_len("source word", self.len(), x.len())?;
        let mut s = 0.0;
        for (i, (&xi, p)) in x.iter().zip(&self.pmfs).enumerate() {
            let pi = *p.get(xi as usize).ok_or_else(|| {
                Error::Usage(format!("symbol {xi} at {i} outside alphabet {}", self.alphabet))
            })?;
            s += pi.log2();
        }
        Ok(s)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Symbol> {
        self.pmfs
            .iter()
            .map(|p| sample_index(p, rng.random::<f64>()) as Symbol)
            .collect()
    }
}

/// One channel letter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Output {
    Symbol(Symbol),
    Real(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Kernel {
    /// `table[x][y] = P(y | x)`.
    Discrete { table: Vec<Vec<f64>> },
    /// Binary input, `y = (1 - 2x) + N(0, sigma^2)`.
    BiAwgn { sigma: f64 },
}

impl Kernel {
    pub fn discrete(table: Vec<Vec<f64>>) -> Result<Self> {
        let outputs = table.first().map_or(0, Vec::len);
        for (x, row) in table.iter().enumerate() {
            check_len("kernel row", outputs, row.len())?;
            check_pmf(row, &format!("kernel row {x}"))?;
        }
        Ok(Kernel::Discrete { table })
    }

    pub fn bsc(p: f64) -> Result<Self> {
        Self::discrete(vec![vec![1.0 - p, p], vec![p, 1.0 - p]])
    }

    /// Binary asymmetric channel: `P(1|0) = p01`, `P(0|1) = p10`.
    pub fn bac(p01: f64, p10: f64) -> Result<Self> {
        Self::discrete(vec![vec![1.0 - p01, p01], vec![p10, 1.0 - p10]])
    }

    /// q-ary symmetric channel: correct with `1 - p`, otherwise uniform over
    /// the other `q - 1` symbols.
    pub fn qsc(q: usize, p: f64) -> Result<Self> {
        if q < 2 {
            return Err(Error::Usage("qsc needs q >= 2".into()));
        }
        let off = p / (q - 1) as f64;
        Self::discrete(
            (0..q)
                .map(|x| (0..q).map(|y| if x == y { 1.0 - p } else { off }).collect())
                .collect(),
        )
    }

    pub fn noiseless(q: usize) -> Self {
        Kernel::Discrete {
            table: (0..q)
                .map(|x| (0..q).map(|y| if x == y { 1.0 } else { 0.0 }).collect())
                .collect(),
        }
    }

    /// Output independent of the input.
    pub fn independent(inputs: usize, out: &[f64]) -> Result<Self> {
        Self::discrete(vec![out.to_vec(); inputs])
    }

    pub fn biawgn(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::Usage(format!("biawgn sigma must be > 0, got {sigma}")));
        }
        Ok(Kernel::BiAwgn { sigma })
    }

    /// Parses `bsc(p)`, `bac(p01,p10)`, `qsc(q,p)`, `biawgn(sigma)`,
    /// `noiseless(q)`.
    pub fn from_preset(s: &str) -> Result<Self> {
        let (name, args) = parse_call(s)?;
        let arity = |k: usize| -> Result<()> {
            if args.len() != k {
                return Err(Error::Usage(format!("{name} takes {k} argument(s)")));
            }
            Ok(())
        };
        match name {
            "bsc" => {
                arity(1)?;
                Self::bsc(args[0])
            }
            "bac" => {
                arity(2)?;
                Self::bac(args[0], args[1])
            }
            "qsc" => {
                arity(2)?;
                Self::qsc(args[0] as usize, args[1])
            }
            "biawgn" => {
                arity(1)?;
                Self::biawgn(args[0])
            }
            "noiseless" => {
                arity(1)?;
                Ok(Self::noiseless(args[0] as usize))
            }
            _ => Err(Error::Usage(format!("unknown channel preset {name:?}"))),
        }
    }

    pub fn inputs(&self) -> usize {
        match self {
            Kernel::Discrete { table } => table.len(),
            Kernel::BiAwgn { .. } => 2,
        }
    }

    /// Output alphabet size; `None` for real-valued outputs.
    pub fn outputs(&self) -> Option<usize> {
        match self {
            Kernel::Discrete { table } => Some(table[0].len()),
            Kernel::BiAwgn { .. } => None,
        }
    }

    /// `P(y | x)`, or the density for real outputs.
    pub fn likelihood(&self, y: Output, x: Symbol) -> Result<f64> {
        match (self, y) {
            (Kernel::Discrete { table }, Output::Symbol(s)) => table
                .get(x as usize)
                .and_then(|row| row.get(s as usize))
                .copied()
                .ok_or_else(|| Error::Usage(format!("letter ({x}, {s}) outside kernel alphabet"))),
            (Kernel::BiAwgn { sigma }, Output::Real(v)) => {
                if x > 1 {
                    return Err(Error::Usage(format!("biawgn input {x} not binary")));
                }
                let mean = 1.0 - 2.0 * x as f64;
                Ok(gaussian_density(v - mean, *sigma))
            }
            _ => Err(Error::Usage("output letter kind does not match the kernel".into())),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, x: Symbol, rng: &mut R) -> Output {
        match self {
            Kernel::Discrete { table } => {
                Output::Symbol(sample_index(&table[x as usize], rng.random::<f64>()) as Symbol)
            }
            Kernel::BiAwgn { sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                Output::Real(1.0 - 2.0 * x as f64 + sigma * z)
            }
        }
    }
}

fn gaussian_density(d: f64, sigma: f64) -> f64 {
    (-(d * d) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Splits `name(a,b,...)` into the name and numeric arguments.
pub(crate) fn parse_call(s: &str) -> Result<(&str, Vec<f64>)> {
    let s = s.trim();
    let bad = || Error::Usage(format!("expected name(args...), got {s:?}"));
    let open = s.find('(').ok_or_else(bad)?;
    let inner = s[open + 1..].strip_suffix(')').ok_or_else(bad)?;
    let args = if inner.trim().is_empty() {
        Vec::new()
    } else {
        inner
            .split(',')
            .map(|a| a.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    Ok((s[..open].trim(), args))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MemorylessChannel {
    kernels: Vec<Kernel>,
}

impl MemorylessChannel {
    pub fn new(kernels: Vec<Kernel>) -> Result<Self> {
        if let Some(first) = kernels.first() {
            for k in &kernels {
                check_len("kernel inputs", first.inputs(), k.inputs())?;
            }
        }
        Ok(MemorylessChannel { kernels })
    }

    pub fn stationary(n: usize, kernel: Kernel) -> Self {
        MemorylessChannel {
            kernels: vec![kernel; n],
        }
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn kernel(&self, i: usize) -> &Kernel {
        &self.kernels[i]
    }

    pub fn is_discrete(&self) -> bool {
        self.kernels.iter().all(|k| k.outputs().is_some())
    }

    pub fn sample<R: Rng + ?Sized>(&self, x: &[Symbol], rng: &mut R) -> Result<Vec<Output>> {
        check_len("channel input", self.len(), x.len())?;
        for (i, &xi) in x.iter().enumerate() {
            if xi as usize >= self.kernels[i].inputs() {
                return Err(Error::Usage(format!("input {xi} at {i} outside kernel alphabet")));
            }
        }
        Ok(x.iter()
            .zip(&self.kernels)
            .map(|(&xi, k)| k.sample(xi, rng))
            .collect())
    }

    /// Sum of per-position log2 likelihoods (log-densities for real letters).
    pub fn log_lik(&self, y: &[Output], x: &[Symbol]) -> Result<f64> {
        check_len("channel output", self.len(), y.len())?;
        check_len("channel input", self.len(), x.len())?;
        let mut s = 0.0;
        for ((k, &yi), &xi) in self.kernels.iter().zip(y).zip(x) {
            s += k.likelihood(yi, xi)?.log2();
        }
        Ok(s)
    }
}

/// Per-position posteriors `P(X_i | Y_i = y_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReverseModel {
    pub posteriors: Vec<Vec<f64>>,
    pub evidence: Vec<f64>,
}

pub fn reverse_model(
    prior: &MemorylessSource,
    ch: &MemorylessChannel,
    y: &[Output],
) -> Result<ReverseModel> {
    check_len("channel length", prior.len(), ch.len())?;
    check_len("observation", prior.len(), y.len())?;
    let mut posteriors = Vec::with_capacity(y.len());
    let mut evidence = Vec::with_capacity(y.len());
    for (i, &yi) in y.iter().enumerate() {
        let kernel = ch.kernel(i);
        check_len("prior alphabet vs kernel inputs", kernel.inputs(), prior.alphabet())?;
        let mut post = Vec::with_capacity(prior.alphabet());
        for (x, &px) in prior.pmf(i).iter().enumerate() {
            post.push(px * kernel.likelihood(yi, x as Symbol)?);
        }
        let z: f64 = post.iter().sum();
        if z <= 0.0 {
            return Err(Error::ZeroEvidence { index: i });
        }
        post.iter_mut().for_each(|v| *v /= z);
        posteriors.push(post);
        evidence.push(z);
    }
    Ok(ReverseModel {
        posteriors,
        evidence,
    })
}

/// Position-averaged single-letter quantities, in bits per symbol.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateQuantities {
    pub h_x: f64,
    pub h_x_given_y: f64,
    pub i_xy: f64,
}

/// Entropies of an input/output pair at one position.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct JointEntropies {
    pub h_input: f64,
    pub h_output: f64,
    pub h_input_given_output: f64,
    pub h_output_given_input: f64,
}

/// Simpson grid for the real-output integrals: `[-1 - 12 sigma, 1 + 12 sigma]`.
const AWGN_QUAD_POINTS: usize = 40_001;

fn position_entropies(px: &[f64], kernel: &Kernel) -> JointEntropies {
    let h_input = entropy(px);
    match kernel {
        Kernel::Discrete { table } => {
            let outs = table[0].len();
            let mut py = vec![0.0; outs];
            let mut h_out_given_in = 0.0;
            for (x, row) in table.iter().enumerate() {
                h_out_given_in += px[x] * entropy(row);
                for (y, &p) in row.iter().enumerate() {
                    py[y] += px[x] * p;
                }
            }
            let h_output = entropy(&py);
            let h_joint = h_input + h_out_given_in;
            JointEntropies {
                h_input,
                h_output,
                h_input_given_output: h_joint - h_output,
                h_output_given_input: h_out_given_in,
            }
        }
        Kernel::BiAwgn { sigma } => {
            let lim = 1.0 + 12.0 * sigma;
            let m = AWGN_QUAD_POINTS - 1;
            let step = 2.0 * lim / m as f64;
            let mut h_cond = 0.0;
            for k in 0..=m {
                let y = -lim + k as f64 * step;
                let w = if k == 0 || k == m {
                    1.0
                } else if k % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                let joint: Vec<f64> = (0..2)
                    .map(|x| px[x] * gaussian_density(y - (1.0 - 2.0 * x as f64), *sigma))
                    .collect();
                let py: f64 = joint.iter().sum();
                if py > 0.0 {
                    let term: f64 = joint
                        .iter()
                        .filter(|&&j| j > 0.0)
                        .map(|&j| -j * (j / py).log2())
                        .sum();
                    h_cond += w * term;
                }
            }
            h_cond *= step / 3.0;
            JointEntropies {
                h_input,
                // Differential quantities are not used for finite-input rates.
                h_output: f64::NAN,
                h_input_given_output: h_cond,
                h_output_given_input: f64::NAN,
            }
        }
    }
}

/// Averages of the per-position entropies of `(input, output)`.
pub fn joint_entropies(input: &MemorylessSource, ch: &MemorylessChannel) -> Result<JointEntropies> {
    check_len("channel length", input.len(), ch.len())?;
    if input.is_empty() {
        return Ok(JointEntropies::default());
    }
    let mut acc = JointEntropies::default();
    for i in 0..input.len() {
        check_len("kernel inputs", input.alphabet(), ch.kernel(i).inputs())?;
        let e = position_entropies(input.pmf(i), ch.kernel(i));
        acc.h_input += e.h_input;
        acc.h_output += e.h_output;
        acc.h_input_given_output += e.h_input_given_output;
        acc.h_output_given_input += e.h_output_given_input;
    }
    let n = input.len() as f64;
    acc.h_input /= n;
    acc.h_output /= n;
    acc.h_input_given_output /= n;
    acc.h_output_given_input /= n;
    Ok(acc)
}

/// `H(X)`, `H(X|Y)` and `I(X;Y) = H(X) - H(X|Y)` for a fixed input law.
pub fn rate_quantities(prior: &MemorylessSource, ch: &MemorylessChannel) -> Result<RateQuantities> {
    let e = joint_entropies(prior, ch)?;
    Ok(RateQuantities {
        h_x: e.h_input,
        h_x_given_y: e.h_input_given_output,
        i_xy: e.h_input - e.h_input_given_output,
    })
}

/// `I(X;Y)` as the averaged divergence `sum p(x) p(y|x) log p(y|x)/p(y)`,
/// discrete kernels only.
pub fn mutual_information_direct(prior: &MemorylessSource, ch: &MemorylessChannel) -> Result<f64> {
    check_len("channel length", prior.len(), ch.len())?;
    let mut total = 0.0;
    for i in 0..prior.len() {
        let Kernel::Discrete { table } = ch.kernel(i) else {
            return Err(Error::Usage("direct mutual information needs discrete outputs".into()));
        };
        let px = prior.pmf(i);
        let outs = table[0].len();
        let py: Vec<f64> = (0..outs)
            .map(|y| table.iter().zip(px).map(|(row, p)| p * row[y]).sum())
            .collect();
        for (x, row) in table.iter().enumerate() {
            for (y, &w) in row.iter().enumerate() {
                if px[x] > 0.0 && w > 0.0 {
                    total += px[x] * w * (w / py[y]).log2();
                }
            }
        }
    }
    Ok(total / prior.len().max(1) as f64)
}

/// Additive per-letter distortion, `table[x][y] = d(x, y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DistortionSpec {
    table: Vec<Vec<f64>>,
}

impl DistortionSpec {
    pub fn new(table: Vec<Vec<f64>>) -> Result<Self> {
        let cols = table.first().map_or(0, Vec::len);
        for row in &table {
            check_len("distortion row", cols, row.len())?;
            if row.iter().any(|&d| !(d.is_finite() && d >= 0.0)) {
                return Err(Error::Usage("distortion entries must be finite and >= 0".into()));
            }
        }
        Ok(DistortionSpec { table })
    }

    pub fn hamming(q: usize) -> Self {
        DistortionSpec {
            table: (0..q)
                .map(|x| (0..q).map(|y| if x == y { 0.0 } else { 1.0 }).collect())
                .collect(),
        }
    }

    /// Largest single-letter distortion.
    pub fn max_letter(&self) -> f64 {
        self.table.iter().flatten().cloned().fold(0.0, f64::max)
    }

    pub fn letter(&self, x: Symbol, y: Symbol) -> f64 {
        self.table[x as usize][y as usize]
    }

    /// `sum_i d(x_i, y_i)`.
    pub fn distortion(&self, x: &[Symbol], y: &[Symbol]) -> Result<f64> {
        check_len("distortion arguments", x.len(), y.len())?;
        let mut s = 0.0;
        for (&a, &b) in x.iter().zip(y) {
            s += *self
                .table
                .get(a as usize)
                .and_then(|r| r.get(b as usize))
                .ok_or_else(|| Error::Usage(format!("letter ({a}, {b}) outside distortion table")))?;
        }
        Ok(s)
    }
}

/// Parses one pmf per non-empty line, whitespace separated.
pub fn parse_pmf_lines(text: &str) -> Result<Vec<Vec<f64>>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            l.split_whitespace()
                .map(|t| {
                    t.parse::<f64>().map_err(|_| Error::Parse {
                        line: i + 1,
                        msg: format!("bad probability {t:?}"),
                    })
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn source_presets() {
        assert!(MemorylessSource::from_preset("uniform", 3, 3).unwrap().is_uniform());
        let b = MemorylessSource::from_preset("bernoulli(0.25)", 2, 2).unwrap();
        assert_eq!(b.pmf(1), &[0.75, 0.25]);
        let p = MemorylessSource::from_preset("pmf(0.5, 0.25, 0.25)", 1, 3).unwrap();
        assert_eq!(p.pmf(0), &[0.5, 0.25, 0.25]);
        assert!(MemorylessSource::from_preset("pmf(0.5,0.5)", 1, 3).is_err());
        assert!(MemorylessSource::from_preset("gauss(1)", 1, 2).is_err());
    }

    #[test]
    fn source_log_prob() {
        let s = MemorylessSource::bernoulli(4, 0.5).unwrap();
        assert_eq!(s.log_prob(&[0, 1, 1, 0]).unwrap(), -4.0);
        let det = MemorylessSource::bernoulli(3, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(det.sample(&mut rng), vec![0, 0, 0]);
        assert_eq!(det.log_prob(&[0, 0, 0]).unwrap(), 0.0);
        assert_eq!(det.log_prob(&[0, 1, 0]).unwrap(), f64::NEG_INFINITY);
        let ns = MemorylessSource::new(vec![vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap();
        assert!(close(ns.log_prob(&[1, 1]).unwrap(), 0.09f64.log2(), 1e-12));
        assert!(ns.log_prob(&[2, 0]).is_err());
        assert!(ns.log_prob(&[0]).is_err());
        assert!(MemorylessSource::new(vec![vec![0.5, 0.6]]).is_err());
    }

    #[test]
    fn channel_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ch = MemorylessChannel::stationary(6, Kernel::bsc(0.0).unwrap());
        let x = vec![1, 0, 1, 1, 0, 0];
        let y = ch.sample(&x, &mut rng).unwrap();
        assert_eq!(y, x.iter().map(|&v| Output::Symbol(v)).collect::<Vec<_>>());

        let p: f64 = 0.2;
        let ch = MemorylessChannel::stationary(4, Kernel::bsc(p).unwrap());
        let y: Vec<_> = [1, 1, 0, 0].iter().map(|&v| Output::Symbol(v)).collect();
        let ll = ch.log_lik(&y, &[0, 1, 0, 1]).unwrap();
        assert!(close(ll, 2.0 * p.log2() + 2.0 * (1.0 - p).log2(), 1e-12));

        let awgn = Kernel::biawgn(1.0).unwrap();
        let d = awgn.likelihood(Output::Real(1.0), 0).unwrap();
        assert!(close(d, 1.0 / (2.0 * std::f64::consts::PI).sqrt(), 1e-15));
        assert!(awgn.likelihood(Output::Symbol(0), 0).is_err());
    }

    #[test]
    fn reverse_model_examples() {
        let uniform = MemorylessSource::uniform(1, 2);
        let bsc = MemorylessChannel::stationary(1, Kernel::bsc(0.1).unwrap());
        let r = reverse_model(&uniform, &bsc, &[Output::Symbol(0)]).unwrap();
        assert!(close(r.posteriors[0][0], 0.9, 1e-12));

        let noiseless = MemorylessChannel::stationary(1, Kernel::noiseless(3));
        let r = reverse_model(&MemorylessSource::uniform(1, 3), &noiseless, &[Output::Symbol(2)])
            .unwrap();
        assert_eq!(r.posteriors[0], vec![0.0, 0.0, 1.0]);

        let prior = MemorylessSource::iid(1, &[0.3, 0.7]).unwrap();
        let r = reverse_model(&prior, &bsc, &[Output::Symbol(1)]).unwrap();
        assert!(close(r.posteriors[0][0], 1.0 / 22.0, 1e-12));
        assert!(close(r.posteriors[0][1], 21.0 / 22.0, 1e-12));

        let point = MemorylessSource::iid(2, &[1.0, 0.0]).unwrap();
        let nl = MemorylessChannel::stationary(2, Kernel::noiseless(2));
        assert_eq!(
            reverse_model(&point, &nl, &[Output::Symbol(0), Output::Symbol(1)]),
            Err(Error::ZeroEvidence { index: 1 })
        );
    }

    #[test]
    fn bayes_consistency() {
        let prior = MemorylessSource::new(vec![vec![0.2, 0.5, 0.3], vec![0.6, 0.1, 0.3]]).unwrap();
        let ch = MemorylessChannel::new(vec![
            Kernel::qsc(3, 0.3).unwrap(),
            Kernel::discrete(vec![
                vec![0.5, 0.5, 0.0],
                vec![0.1, 0.2, 0.7],
                vec![0.3, 0.3, 0.4],
            ])
            .unwrap(),
        ])
        .unwrap();
        for y0 in 0..3u16 {
            for y1 in 0..3u16 {
                let y = [Output::Symbol(y0), Output::Symbol(y1)];
                let r = reverse_model(&prior, &ch, &y).unwrap();
                for i in 0..2 {
                    for x in 0..3u16 {
                        let lhs = prior.pmf(i)[x as usize] * ch.kernel(i).likelihood(y[i], x).unwrap();
                        let rhs = r.evidence[i] * r.posteriors[i][x as usize];
                        assert!(close(lhs, rhs, 1e-9));
                    }
                }
            }
        }
    }

    #[test]
    fn rate_examples() {
        let uniform = MemorylessSource::uniform(3, 2);
        let bsc = MemorylessChannel::stationary(3, Kernel::bsc(0.11).unwrap());
        let r = rate_quantities(&uniform, &bsc).unwrap();
        assert!(close(r.h_x, 1.0, 1e-12));
        // h(0.11) from its definition.
        let h = -(0.11f64 * 0.11f64.log2() + 0.89 * 0.89f64.log2());
        assert!(close(r.h_x_given_y, h, 1e-12));
        assert!(close(r.i_xy, 1.0 - h, 1e-12));

        let nl = MemorylessChannel::stationary(3, Kernel::noiseless(2));
        let r = rate_quantities(&MemorylessSource::bernoulli(3, 0.3).unwrap(), &nl).unwrap();
        assert!(close(r.h_x_given_y, 0.0, 1e-12));
        assert!(close(r.i_xy, r.h_x, 1e-12));

        let ind = MemorylessChannel::stationary(3, Kernel::independent(2, &[0.4, 0.6]).unwrap());
        let r = rate_quantities(&MemorylessSource::bernoulli(3, 0.3).unwrap(), &ind).unwrap();
        assert!(close(r.i_xy, 0.0, 1e-12));
    }

    #[test]
    fn mutual_information_two_ways() {
        let prior = MemorylessSource::new(vec![vec![0.2, 0.5, 0.3], vec![0.6, 0.1, 0.3]]).unwrap();
        for p in [0.0, 0.05, 0.3, 0.6] {
            let ch = MemorylessChannel::new(vec![
                Kernel::qsc(3, p).unwrap(),
                Kernel::discrete(vec![
                    vec![0.5, 0.5, 0.0],
                    vec![0.1, 0.2, 0.7],
                    vec![0.3, 0.3, 0.4],
                ])
                .unwrap(),
            ])
            .unwrap();
            let r = rate_quantities(&prior, &ch).unwrap();
            let direct = mutual_information_direct(&prior, &ch).unwrap();
            assert!(close(r.i_xy, direct, 1e-9), "p={p}: {} vs {direct}", r.i_xy);
            assert!(r.i_xy >= -1e-9);
        }
    }

    #[test]
    fn awgn_rate_is_sane() {
        let u = MemorylessSource::uniform(1, 2);
        let noisy = rate_quantities(&u, &MemorylessChannel::stationary(1, Kernel::biawgn(0.8).unwrap()))
            .unwrap();
        let quiet = rate_quantities(&u, &MemorylessChannel::stationary(1, Kernel::biawgn(0.1).unwrap()))
            .unwrap();
        assert!(noisy.i_xy > 0.0 && noisy.i_xy < quiet.i_xy && quiet.i_xy <= 1.0 + 1e-9);
        // Near-noiseless limit.
        assert!(close(quiet.i_xy, 1.0, 1e-6));
    }

    #[test]
    fn distortion_examples() {
        let h = DistortionSpec::hamming(2);
        assert_eq!(h.distortion(&[0, 1, 1], &[0, 1, 1]).unwrap(), 0.0);
        assert_eq!(h.distortion(&[0, 1, 1, 0], &[1, 1, 0, 0]).unwrap(), 2.0);
        let w = DistortionSpec::new(vec![vec![0.0, 2.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(w.distortion(&[0], &[1]).unwrap(), 2.0);
        assert!(DistortionSpec::new(vec![vec![-1.0]]).is_err());
    }

    #[test]
    fn presets() {
        assert_eq!(Kernel::from_preset("bsc(0.1)").unwrap(), Kernel::bsc(0.1).unwrap());
        assert_eq!(
            Kernel::from_preset(" bac(0.1, 0.2) ").unwrap(),
            Kernel::bac(0.1, 0.2).unwrap()
        );
        assert_eq!(Kernel::from_preset("qsc(3,0.3)").unwrap().inputs(), 3);
        assert!(matches!(Kernel::from_preset("biawgn(0.5)").unwrap(), Kernel::BiAwgn { .. }));
        assert!(Kernel::from_preset("bsc(0.1,0.2)").is_err());
        assert!(Kernel::from_preset("zzz(1)").is_err());
        assert!(Kernel::from_preset("bsc0.1").is_err());
        let pmfs = parse_pmf_lines("0.5 0.5\n\n# comment\n0.1 0.9\n").unwrap();
        assert_eq!(pmfs, vec![vec![0.5, 0.5], vec![0.1, 0.9]]);
    }

    #[test]
    fn sampling_frequencies_within_four_sigma() {
        let src = MemorylessSource::new(vec![vec![0.1, 0.6, 0.3], vec![0.5, 0.25, 0.25]]).unwrap();
        let draws = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = vec![vec![0usize; 3]; 2];
        for _ in 0..draws {
            for (i, &x) in src.sample(&mut rng).iter().enumerate() {
                counts[i][x as usize] += 1;
            }
        }
        for i in 0..2 {
            for x in 0..3 {
                let p = src.pmf(i)[x];
                let sd = (draws as f64 * p * (1.0 - p)).sqrt();
                assert!((counts[i][x] as f64 - draws as f64 * p).abs() <= 4.0 * sd);
            }
        }
        let ch = MemorylessChannel::stationary(1, Kernel::bsc(0.2).unwrap());
        let flips = (0..draws)
            .filter(|_| ch.sample(&[0], &mut rng).unwrap()[0] == Output::Symbol(1))
            .count();
        let sd = (draws as f64 * 0.16).sqrt();
        assert!((flips as f64 - 0.2 * draws as f64).abs() <= 4.0 * sd);
    }

    #[test]
    fn sample_index_skips_zeros() {
        assert_eq!(sample_index(&[0.0, 1.0, 0.0], 0.0), 1);
        assert_eq!(sample_index(&[0.0, 0.5, 0.5], 0.999_999), 2);
        assert_eq!(sample_index(&[0.5, 0.5, 0.0], 0.999_999_999_999), 1);
    }
}
