//! Binary-input/binary-output no-signaling boxes ("CHSH cells").
//!
//! A [`BoxTable`] stores the conditional distribution `P(A, B | s, t)` as a
//! 4x4 array: row `2s + t`, column `2A + B`. Parametric cells are described by
//! a [`CellSpec`] and expand to a table on demand.

use std::f64::consts::FRAC_PI_4;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NicError, Result};

/// A single bit, always 0 or 1.
pub type Bit = u8;

/// Normalization tolerance for each conditional row.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Maximum cross-input marginal deviation for a no-signaling box.
pub const NO_SIGNALING_TOL: f64 = 1e-10;

const ANGLE_SLACK: f64 = 1e-12;

#[inline]
fn row(s: Bit, t: Bit) -> usize {
    usize::from(2 * s + t)
}

#[inline]
fn col(a: Bit, b: Bit) -> usize {
    usize::from(2 * a + b)
}

fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(NicError::Range {
            name,
            value,
            range: "[0, 1]",
        });
    }
    Ok(())
}

/// Conditional output distribution of a two-party box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BoxTable {
    probs: [[f64; 4]; 4],
}

impl BoxTable {
    /// Builds a table, requiring normalized non-negative rows and the
    /// no-signaling condition.
    pub fn new(probs: [[f64; 4]; 4]) -> Result<Self> {
        let table = Self::new_raw(probs)?;
        let report = no_signaling_check(&table);
        if !report.pass {
            return Err(NicError::Signaling(report.max_deviation));
        }
        Ok(table)
    }

    /// Builds a table checking only that each row is a distribution. Useful
    /// for analysing arbitrary (possibly signaling) tables.
    pub fn new_raw(probs: [[f64; 4]; 4]) -> Result<Self> {
        for (r, dist) in probs.iter().enumerate() {
            if dist.iter().any(|&p| !p.is_finite() || p < 0.0) {
                return Err(NicError::InvalidTable(format!(
                    "row {r} has a negative or non-finite entry"
                )));
            }
            let sum: f64 = dist.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(NicError::InvalidTable(format!("row {r} sums to {sum}")));
            }
        }
        Ok(BoxTable { probs })
    }

    /// `P(A = a, B = b | s, t)`.
    pub fn prob(&self, s: Bit, t: Bit, a: Bit, b: Bit) -> f64 {
        self.probs[row(s, t)][col(a, b)]
    }

    pub fn probs(&self) -> &[[f64; 4]; 4] {
        &self.probs
    }

    /// `Pr[A xor B = s t | s, t]`.
    pub fn win_probability(&self, s: Bit, t: Bit) -> f64 {
        let target = s & t;
        let r = &self.probs[row(s, t)];
        let mut p = 0.0;
        for a in 0..2u8 {
            for b in 0..2u8 {
                if a ^ b == target {
                    p += r[col(a, b)];
                }
            }
        }
        p
    }

    /// `E_st = Pr[A = B] - Pr[A != B]` on inputs `(s, t)`.
    pub fn correlator(&self, s: Bit, t: Bit) -> f64 {
        let r = &self.probs[row(s, t)];
        r[0] + r[3] - r[1] - r[2]
    }

    pub fn correlators(&self) -> CorrelatorSet {
        CorrelatorSet {
            e00: self.correlator(0, 0),
            e01: self.correlator(0, 1),
            e10: self.correlator(1, 0),
            e11: self.correlator(1, 1),
        }
    }

    /// `P(A = 0 | s, t)`.
    pub fn alice_zero(&self, s: Bit, t: Bit) -> f64 {
        let r = &self.probs[row(s, t)];
        r[0] + r[1]
    }

    /// `P(B = 0 | s, t)`.
    pub fn bob_zero(&self, s: Bit, t: Bit) -> f64 {
        let r = &self.probs[row(s, t)];
        r[0] + r[2]
    }
}

impl TryFrom<Vec<f64>> for BoxTable {
    type Error = NicError;

    fn try_from(flat: Vec<f64>) -> Result<Self> {
        if flat.len() != 16 {
            return Err(NicError::Shape(format!(
                "box table needs 16 probabilities, got {}",
                flat.len()
            )));
        }
        let mut probs = [[0.0; 4]; 4];
        for (i, p) in flat.into_iter().enumerate() {
            probs[i / 4][i % 4] = p;
        }
        BoxTable::new_raw(probs)
    }
}

impl From<BoxTable> for Vec<f64> {
    fn from(table: BoxTable) -> Vec<f64> {
        table.probs.iter().flatten().copied().collect()
    }
}

/// The four CHSH correlators `E_st`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorSet {
    pub e00: f64,
    pub e01: f64,
    pub e10: f64,
    pub e11: f64,
}

impl CorrelatorSet {
    pub fn get(&self, s: Bit, t: Bit) -> f64 {
        match (s, t) {
            (0, 0) => self.e00,
            (0, 1) => self.e01,
            (1, 0) => self.e10,
            _ => self.e11,
        }
    }

    /// CHSH value from correlators: `2 + (E00 + E01 + E10 - E11) / 2`.
    pub fn chsh_value(&self) -> f64 {
        2.0 + 0.5 * (self.e00 + self.e01 + self.e10 - self.e11)
    }

    /// Winning probability `(1 + (-1)^(st) E_st) / 2`.
    pub fn win_probability(&self, s: Bit, t: Bit) -> f64 {
        let sign = if s & t == 1 { -1.0 } else { 1.0 };
        0.5 * (1.0 + sign * self.get(s, t))
    }
}

/// Result of a no-signaling audit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoSignalingReport {
    pub pass: bool,
    pub max_deviation: f64,
}

/// Largest change of Alice's marginal under Bob's input (and vice versa).
pub fn no_signaling_check(table: &BoxTable) -> NoSignalingReport {
    let mut dev: f64 = 0.0;
    for x in 0..2u8 {
        dev = dev.max((table.alice_zero(x, 0) - table.alice_zero(x, 1)).abs());
        dev = dev.max((table.bob_zero(0, x) - table.bob_zero(1, x)).abs());
    }
    NoSignalingReport {
        pass: dev <= NO_SIGNALING_TOL,
        max_deviation: dev,
    }
}

/// `S_CHSH = sum over (s, t) of Pr[A xor B = s t | s, t]`.
pub fn chsh_value(table: &BoxTable) -> f64 {
    let mut s_chsh = 0.0;
    for s in 0..2u8 {
        for t in 0..2u8 {
            s_chsh += table.win_probability(s, t);
        }
    }
    s_chsh
}

/// `S_CHSH / 2 - 1`, clipped to `[-1, 1]`.
pub fn effective_iso_bias(table: &BoxTable) -> f64 {
    (0.5 * chsh_value(table) - 1.0).clamp(-1.0, 1.0)
}

/// Box with uniform marginals and the given correlators:
/// `P(A, B | s, t) = (1 + (-1)^(A xor B) E_st) / 4`.
pub fn box_from_correlators(c: &CorrelatorSet) -> Result<BoxTable> {
    let mut probs = [[0.0; 4]; 4];
    for s in 0..2u8 {
        for t in 0..2u8 {
            let e = c.get(s, t);
            if !(-1.0..=1.0).contains(&e) {
                return Err(NicError::Range {
                    name: "correlator",
                    value: e,
                    range: "[-1, 1]",
                });
            }
            for a in 0..2u8 {
                for b in 0..2u8 {
                    let sign = if a == b { 1.0 } else { -1.0 };
                    probs[row(s, t)][col(a, b)] = 0.25 * (1.0 + sign * e);
                }
            }
        }
    }
    BoxTable::new(probs)
}

/// Isotropic cell with bias `e`: every input pair wins with probability
/// `(1 + e) / 2`, marginals uniform.
pub fn make_isotropic(e: f64) -> Result<BoxTable> {
    check_unit("E", e)?;
    box_from_correlators(&CorrelatorSet {
        e00: e,
        e01: e,
        e10: e,
        e11: -e,
    })
}

/// Correlators of the measurement-angle family with visibility:
/// `nu * (cos phi, cos phi, sin phi, -sin phi)`.
pub fn quantum_phi_correlators(phi: f64, visibility: f64) -> Result<CorrelatorSet> {
    if !(-ANGLE_SLACK..=FRAC_PI_4 + ANGLE_SLACK).contains(&phi) {
        return Err(NicError::Range {
            name: "phi",
            value: phi,
            range: "[0, pi/4]",
        });
    }
    check_unit("visibility", visibility)?;
    let phi = phi.clamp(0.0, FRAC_PI_4);
    let (sin, cos) = phi.sin_cos();
    Ok(CorrelatorSet {
        e00: visibility * cos,
        e01: visibility * cos,
        e10: visibility * sin,
        e11: -visibility * sin,
    })
}

/// Effective isotropic bias of the angle family, `nu (cos phi + sin phi) / 2`.
pub fn quantum_phi_iso_bias(phi: f64, visibility: f64) -> Result<f64> {
    let c = quantum_phi_correlators(phi, visibility)?;
    Ok(0.5 * c.chsh_value() - 1.0)
}

/// CHSH twirl: exact average over the eight shared-randomness assignments
/// `(u, v, w)`. Inputs are shifted to `(s ^ u, t ^ v)` and outputs corrected
/// to `A' = A ^ w ^ (s v) ^ (u v)`, `B' = B ^ w ^ (u t)`.
pub fn twirl(table: &BoxTable) -> Result<BoxTable> {
    let report = no_signaling_check(table);
    if !report.pass {
        return Err(NicError::Signaling(report.max_deviation));
    }
    let mut probs = [[0.0; 4]; 4];
    for s in 0..2u8 {
        for t in 0..2u8 {
            for u in 0..2u8 {
                for v in 0..2u8 {
                    for w in 0..2u8 {
                        for a in 0..2u8 {
                            for b in 0..2u8 {
                                let p = table.prob(s ^ u, t ^ v, a, b);
                                let a2 = a ^ w ^ (s & v) ^ (u & v);
                                let b2 = b ^ w ^ (u & t);
                                probs[row(s, t)][col(a2, b2)] += p / 8.0;
                            }
                        }
                    }
                }
            }
        }
    }
    BoxTable::new(probs)
}

/// A correlation resource, either parametric or an explicit table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CellSpec {
    Isotropic {
        e: f64,
    },
    /// Bias depends on Bob's input: `E_t` for `t in {0, 1}`.
    Asymmetric {
        e0: f64,
        e1: f64,
    },
    QuantumPhi {
        phi: f64,
        visibility: f64,
    },
    Explicit {
        table: BoxTable,
    },
}

impl CellSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CellSpec::Isotropic { e } => check_unit("E", e),
            CellSpec::Asymmetric { e0, e1 } => {
                check_unit("E0", e0)?;
                check_unit("E1", e1)
            }
            CellSpec::QuantumPhi { phi, visibility } => {
                quantum_phi_correlators(phi, visibility).map(|_| ())
            }
            CellSpec::Explicit { table } => {
                let report = no_signaling_check(&table);
                if report.pass {
                    Ok(())
                } else {
                    Err(NicError::Signaling(report.max_deviation))
                }
            }
        }
    }

    /// Correlators of a parametric cell; `None` for explicit tables.
    fn parametric_correlators(&self) -> Option<CorrelatorSet> {
        match *self {
            CellSpec::Isotropic { e } => Some(CorrelatorSet {
                e00: e,
                e01: e,
                e10: e,
                e11: -e,
            }),
            CellSpec::Asymmetric { e0, e1 } => Some(CorrelatorSet {
                e00: e0,
                e01: e1,
                e10: e0,
                e11: -e1,
            }),
            CellSpec::QuantumPhi { phi, visibility } => {
                quantum_phi_correlators(phi, visibility).ok()
            }
            CellSpec::Explicit { .. } => None,
        }
    }

    /// Expands the cell into its conditional table.
    pub fn table(&self) -> Result<BoxTable> {
        self.validate()?;
        match self {
            CellSpec::Explicit { table } => Ok(*table),
            other => {
                box_from_correlators(&other.parametric_correlators().expect("parametric cell"))
            }
        }
    }

    /// Builds a sampler for repeated draws.
    pub fn sampler(&self) -> Result<CellSampler> {
        self.validate()?;
        let table = self.table()?;
        let mut win = [0.0; 4];
        let mut alice_zero = [0.0; 2];
        let mut bob_zero_given = [[0.0; 2]; 4];
        for s in 0..2u8 {
            alice_zero[usize::from(s)] = 0.5 * (table.alice_zero(s, 0) + table.alice_zero(s, 1));
            for t in 0..2u8 {
                win[row(s, t)] = table.win_probability(s, t);
                for a in 0..2u8 {
                    let pa = table.prob(s, t, a, 0) + table.prob(s, t, a, 1);
                    bob_zero_given[row(s, t)][usize::from(a)] = if pa > 0.0 {
                        table.prob(s, t, a, 0) / pa
                    } else {
                        0.5
                    };
                }
            }
        }
        let mode = match self {
            CellSpec::Explicit { .. } => SamplerMode::Table {
                alice_zero,
                bob_zero_given,
            },
            _ => SamplerMode::Generative { win },
        };
        Ok(CellSampler { mode })
    }
}

/// The two uniforms a cell consumes per use. Both are drawn before any input
/// is known, so Alice's output never depends on Bob's input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellDraw {
    pub alice: f64,
    pub bob: f64,
}

impl CellDraw {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        CellDraw {
            alice: rng.random(),
            bob: rng.random(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum SamplerMode {
    /// `A = U`, `B = U ^ s t ^ e` with `Pr[e = 0] = win(s, t)`.
    Generative { win: [f64; 4] },
    /// Alice's marginal, then Bob conditioned on Alice's output.
    Table {
        alice_zero: [f64; 2],
        bob_zero_given: [[f64; 2]; 4],
    },
}

/// Precomputed sampling rule for one cell type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSampler {
    mode: SamplerMode,
}

impl CellSampler {
    pub fn alice(&self, s: Bit, draw: &CellDraw) -> Bit {
        match &self.mode {
            SamplerMode::Generative { .. } => u8::from(draw.alice >= 0.5),
            SamplerMode::Table { alice_zero, .. } => {
                u8::from(draw.alice >= alice_zero[usize::from(s)])
            }
        }
    }

    /// Bob's output given both inputs and Alice's realized output.
    pub fn bob(&self, s: Bit, t: Bit, a: Bit, draw: &CellDraw) -> Bit {
        match &self.mode {
            SamplerMode::Generative { win } => {
                let e = u8::from(draw.bob >= win[row(s, t)]);
                a ^ (s & t) ^ e
            }
            SamplerMode::Table { bob_zero_given, .. } => {
                u8::from(draw.bob >= bob_zero_given[row(s, t)][usize::from(a)])
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, s: Bit, t: Bit, rng: &mut R) -> (Bit, Bit) {
        let draw = CellDraw::sample(rng);
        let a = self.alice(s, &draw);
        (a, self.bob(s, t, a, &draw))
    }
}

/// One use of a cell on inputs `(s, t)`.
pub fn sample_cell<R: Rng + ?Sized>(
    spec: &CellSpec,
    s: Bit,
    t: Bit,
    rng: &mut R,
) -> Result<(Bit, Bit)> {
    Ok(spec.sampler()?.sample(s, t, rng))
}
