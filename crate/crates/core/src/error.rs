use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Caller violated a precondition (bad argument, field mismatch, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// Mathematically undefined request (inverse of zero, singular map, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    /// The conditioning set has zero prior mass (empty or massless coset).
    #[error("encoding error: target coset has zero probability mass")]
    Encoding,

    /// A sequential sampler reached a prefix with zero continuation mass.
    #[error("dead end at step {step}: no continuation has positive mass")]
    DeadEnd { step: usize },

    /// Message passing or exhaustive marginalization hit contradictory constraints.
    #[error("inconsistent constraints: {0}")]
    Inconsistent(String),

    /// An exhaustive computation was refused because it exceeds its cap.
    #[error("refused: {what} needs {needed} states, cap is {cap}")]
    CapExceeded {
        what: &'static str,
        needed: f64,
        cap: u64,
    },

    #[error("zero evidence at index {index}: observation impossible under every input")]
    ZeroEvidence { index: usize },

    #[error("random bit stream exhausted after {consumed} bits at step {step}")]
    BitsExhausted { consumed: usize, step: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Dimension {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

/// `q^k` as a float, for cap comparisons that must not overflow.
pub(crate) fn states(q: usize, k: usize) -> f64 {
    (q as f64).powi(k as i32)
}

pub(crate) fn check_cap(what: &'static str, q: usize, k: usize, cap: u64) -> Result<()> {
    let needed = states(q, k);
    if needed > cap as f64 {
        return Err(Error::CapExceeded { what, needed, cap });
    }
    Ok(())
}
