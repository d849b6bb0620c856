//! Scalar information functionals on binary variables.
//!
//! Everything here is measured in bits. The `0 · log 0 = 0` convention is
//! applied by explicit branch so that deterministic channels never produce
//! `NaN`.

use std::f64::consts::LN_2;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{NicError, Result};

/// Information measured in bits.
pub type Bits = f64;

/// Values within this distance of `[0, 1]` are clamped rather than rejected.
pub const PROBABILITY_SLACK: f64 = 1e-12;

/// Below this bias the entropy deficit is evaluated from its power series.
pub const SMALL_BIAS: f64 = 1e-4;

/// A probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub const HALF: Probability = Probability(0.5);
    pub const ZERO: Probability = Probability(0.0);
    pub const ONE: Probability = Probability(1.0);

    /// Validates `p`, clamping rounding excursions of up to
    /// [`PROBABILITY_SLACK`].
    pub fn new(p: f64) -> Result<Self> {
        if !(-PROBABILITY_SLACK..=1.0 + PROBABILITY_SLACK).contains(&p) {
            return Err(NicError::ProbabilityDomain(p));
        }
        Ok(Probability(p.clamp(0.0, 1.0)))
    }

    /// Clamps any finite value into `[0, 1]`. Use only where the value is
    /// known to be a probability up to rounding.
    pub(crate) fn saturating(p: f64) -> Self {
        Probability(p.clamp(0.0, 1.0))
    }

    pub fn get(self) -> f64 {
        self.0
    }

    pub fn complement(self) -> Self {
        Probability(1.0 - self.0)
    }
}

impl TryFrom<f64> for Probability {
    type Error = NicError;

    fn try_from(p: f64) -> Result<Self> {
        Probability::new(p)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

impl fmt::Display for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// `-p log2 p`, zero at `p = 0`.
#[inline]
pub(crate) fn neg_plogp(p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        -p * p.log2()
    }
}

/// Binary entropy `h(p)` in bits.
pub fn binary_entropy(p: Probability) -> Bits {
    let p = p.get();
    if p == 0.0 || p == 1.0 {
        return 0.0;
    }
    neg_plogp(p) + neg_plogp(1.0 - p)
}

/// Entropy deficit `1 - h((1 + delta) / 2)` for a bias `delta` in `[-1, 1]`.
///
/// The `log1p` form keeps full relative precision for moderate biases; below
/// [`SMALL_BIAS`] the series `δ²/(2 ln 2) + δ⁴/(12 ln 2) + δ⁶/(30 ln 2)` is
/// used instead.
pub fn entropy_deficit(delta: f64) -> Bits {
    let d = delta.abs().min(1.0);
    if d < SMALL_BIAS {
        let d2 = d * d;
        return d2 * (0.5 + d2 * (1.0 / 12.0 + d2 / 30.0)) / LN_2;
    }
    if d == 1.0 {
        return 1.0;
    }
    let plus = (1.0 + d) * d.ln_1p();
    let minus = (1.0 - d) * (-d).ln_1p();
    (0.5 * (plus + minus) / LN_2).max(0.0)
}

/// Mutual information of a binary symmetric channel with success
/// probability `p` and an unbiased input: `1 - h(p)`.
pub fn bsc_information(p: Probability) -> Bits {
    entropy_deficit(2.0 * p.get() - 1.0)
}

/// Mutual information between an unbiased input bit and the output of a
/// general binary channel with `q = Pr[out = 1 | in = 0]` and
/// `r = Pr[out = 1 | in = 1]`.
pub fn binary_channel_information(q: Probability, r: Probability) -> Bits {
    let mixed = Probability::saturating(0.5 * (q.get() + r.get()));
    let value = binary_entropy(mixed) - 0.5 * binary_entropy(q) - 0.5 * binary_entropy(r);
    value.max(0.0)
}

/// Binary Kullback-Leibler divergence `D(p || q)` in bits.
///
/// Returns `f64::INFINITY` when `q` sits on the boundary and `p` puts mass
/// where `q` has none.
pub fn bernoulli_kl(p: Probability, q: Probability) -> Bits {
    let (p, q) = (p.get(), q.get());
    let term = |a: f64, b: f64| -> f64 {
        if a == 0.0 {
            0.0
        } else if b == 0.0 {
            f64::INFINITY
        } else {
            a * (a / b).log2()
        }
    };
    let d = term(p, q) + term(1.0 - p, 1.0 - q);
    if d.is_infinite() {
        d
    } else {
        d.max(0.0)
    }
}

/// Mutual information of a 2x2 joint distribution `joint[u][v]`, computed
/// as `H(U) + H(V) - H(U, V)`.
pub fn mi_from_joint(joint: &[[f64; 2]; 2]) -> Bits {
    let row = [joint[0][0] + joint[0][1], joint[1][0] + joint[1][1]];
    let col = [joint[0][0] + joint[1][0], joint[0][1] + joint[1][1]];
    let h = |xs: &[f64]| xs.iter().map(|&x| neg_plogp(x)).sum::<f64>();
    let flat = [joint[0][0], joint[0][1], joint[1][0], joint[1][1]];
    (h(&row) + h(&col) - h(&flat)).max(0.0)
}
