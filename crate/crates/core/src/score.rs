//! Exact Neural-RAC information scores, criticality boundaries, conditional
//! scores for correlated databases, and the regularized angle objective.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_4, LN_2};

use serde::{Deserialize, Serialize};

use crate::cells::quantum_phi_iso_bias;
use crate::error::{NicError, Result};
use crate::info::{binary_entropy, entropy_deficit, mi_from_joint, Bits, Probability};
use crate::protocols::Database;

/// Deepest protocol accepted by the closed-form evaluators.
pub const MAX_DEPTH: u32 = 60;

/// Bisection stops once the bracket is this narrow and the residual is
/// below [`ROOT_RESIDUAL_TOL`].
pub const ROOT_BRACKET_TOL: f64 = 1e-10;
pub const ROOT_RESIDUAL_TOL: f64 = 1e-9;
pub const ROOT_MAX_ITERATIONS: u32 = 200;

/// Golden-section stopping width on the angle.
pub const ANGLE_TOL: f64 = 1e-8;

/// How a score was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMethod {
    ClosedForm,
    LowerBound,
    PlugIn,
    SymmetricEstimate,
}

/// A score with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub score: Bits,
    pub method: ScoreMethod,
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<(Bits, Bits)>,
}

impl ScoreReport {
    pub fn new(score: Bits, method: ScoreMethod) -> Self {
        ScoreReport {
            score: score.max(0.0),
            method,
            params: BTreeMap::new(),
            interval: None,
        }
    }

    pub fn with_param(mut self, name: &str, value: f64) -> Self {
        self.params.insert(name.to_owned(), value);
        self
    }

    /// Attaches an interval, which must contain the score.
    pub fn with_interval(mut self, lo: Bits, hi: Bits) -> Result<Self> {
        if !(lo <= self.score && self.score <= hi) {
            return Err(NicError::Invalid(format!(
                "interval [{lo}, {hi}] does not contain score {}",
                self.score
            )));
        }
        self.interval = Some((lo, hi));
        Ok(self)
    }

    pub fn half_width(&self) -> Option<f64> {
        self.interval.map(|(lo, hi)| 0.5 * (hi - lo))
    }
}

fn check_depth(n: u32) -> Result<()> {
    if n == 0 {
        return Err(NicError::Shape("depth must be at least 1".into()));
    }
    if n > MAX_DEPTH {
        return Err(NicError::DepthOverflow(n));
    }
    Ok(())
}

fn check_bias(name: &'static str, e: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&e) {
        return Err(NicError::Range {
            name,
            value: e,
            range: "[0, 1]",
        });
    }
    Ok(())
}

/// `2^n (1 - h((1 + E^n) / 2))` for the nested isotropic protocol.
pub fn closed_form_score(n: u32, e: f64) -> Result<Bits> {
    check_depth(n)?;
    check_bias("E", e)?;
    Ok(2f64.powi(n as i32) * entropy_deficit(e.powi(n as i32)))
}

pub fn closed_form_report(n: u32, e: f64) -> Result<ScoreReport> {
    Ok(
        ScoreReport::new(closed_form_score(n, e)?, ScoreMethod::ClosedForm)
            .with_param("n", f64::from(n))
            .with_param("E", e),
    )
}

/// Exact score for asymmetric seed biases: the sum over all `2^n` query
/// paths of `1 - h((1 + prod E_{b_l}) / 2)`. Paths with `k` uses of `E1`
/// share the same product, so the sum is taken over `k` with binomial
/// weights from Pascal's triangle.
pub fn asym_exact_score(n: u32, e0: f64, e1: f64) -> Result<Bits> {
    check_depth(n)?;
    check_bias("E0", e0)?;
    check_bias("E1", e1)?;
    let n_us = n as usize;
    let mut pascal = vec![0.0f64; n_us + 1];
    pascal[0] = 1.0;
    for row in 1..=n_us {
        for k in (1..=row).rev() {
            pascal[k] += pascal[k - 1];
        }
    }
    let total = (0..=n_us)
        .map(|k| {
            let product = e0.powi((n_us - k) as i32) * e1.powi(k as i32);
            pascal[k] * entropy_deficit(product)
        })
        .sum();
    Ok(total)
}

/// `N - sum_K h(P_K)`.
pub fn score_lower_bound_from_accuracy(accuracies: &[Probability]) -> Bits {
    let n = accuracies.len() as f64;
    (n - accuracies.iter().map(|&p| binary_entropy(p)).sum::<f64>()).max(0.0)
}

/// Finite-depth critical bias for a capacity budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalityResult {
    pub n: u32,
    pub capacity: Bits,
    pub e_crit: f64,
    pub bracket: (f64, f64),
    pub iterations: u32,
}

/// Solves `closed_form_score(n, E) = capacity` for `E` by bisection on
/// `[0, 1]`.
pub fn critical_bias(n: u32, capacity: Bits) -> Result<CriticalityResult> {
    check_depth(n)?;
    let max = 2f64.powi(n as i32);
    if capacity.is_nan() || capacity <= 0.0 {
        return Err(NicError::Range {
            name: "C_H",
            value: capacity,
            range: "(0, 2^n)",
        });
    }
    if capacity >= max {
        return Err(NicError::NoRoot {
            target: capacity,
            max,
        });
    }
    let f = |e: f64| closed_form_score(n, e).map(|s| s - capacity);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut iterations = 0;
    let mut mid = 0.5;
    // The bracket `mid` was taken from; it holds the root with `mid` strictly
    // inside, whereas after the update `mid` is one of the endpoints.
    let mut bracket = (lo, hi);
    while iterations < ROOT_MAX_ITERATIONS {
        mid = 0.5 * (lo + hi);
        bracket = (lo, hi);
        iterations += 1;
        let value = f(mid)?;
        if value < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        let converged = hi - lo <= ROOT_BRACKET_TOL && value.abs() <= ROOT_RESIDUAL_TOL;
        if converged || mid == 0.5 * (lo + hi) {
            break;
        }
    }
    Ok(CriticalityResult {
        n,
        capacity,
        e_crit: mid,
        bracket,
        iterations,
    })
}

/// Large-depth approximation `(1/sqrt 2) (2 C_H ln 2)^(1 / (2n))`.
pub fn critical_bias_asymptotic(n: u32, capacity: Bits) -> f64 {
    std::f64::consts::FRAC_1_SQRT_2 * (2.0 * capacity * LN_2).powf(1.0 / (2.0 * f64::from(n)))
}

/// Limit of the Tsirelson-point score, `1 / (2 ln 2)`.
pub fn critical_constant() -> Bits {
    1.0 / (2.0 * LN_2)
}

/// One observed episode with the full database attached.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatabaseRecord {
    pub database: Database,
    pub query: usize,
    pub output: u8,
}

/// Context `A_<K` of a query with fewer than the minimum number of samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparseContext {
    pub query: usize,
    pub context: u64,
    pub count: u64,
}

/// Conditional score with its Fano audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalScore {
    pub score: Bits,
    /// `sum_K H(A_K | A_<K) - sum_K h(P_e,K)`; never exceeds `score`.
    pub fano_bound: Bits,
    /// Per-query terms `I(A_K : beta | b = K, A_<K)`.
    pub terms: Vec<Bits>,
    pub sparse_contexts: Vec<SparseContext>,
}

/// Largest database length accepted by the conditional scorers.
pub const CONDITIONAL_MAX_N: usize = 12;

/// Contexts observed fewer times than this are reported as sparse.
pub const MIN_CONTEXT_COUNT: u64 = 30;

/// Accumulated per-query statistics: for every context `A_<K`, the joint
/// weight of `(A_K, beta)`.
struct ConditionalAccumulator {
    // joints[K][context][a][beta]
    joints: Vec<Vec<[[f64; 2]; 2]>>,
}

impl ConditionalAccumulator {
    fn new(n: usize) -> Self {
        ConditionalAccumulator {
            joints: (0..n).map(|k| vec![[[0.0; 2]; 2]; 1 << k]).collect(),
        }
    }

    fn add(&mut self, db_bits: u64, query: usize, output: u8, weight: f64) {
        let context = (db_bits & ((1u64 << query) - 1)) as usize;
        let a = ((db_bits >> query) & 1) as usize;
        self.joints[query][context][a][usize::from(output)] += weight;
    }

    fn finish(self) -> (Vec<Bits>, Bits) {
        let mut terms = Vec::with_capacity(self.joints.len());
        let mut fano = 0.0;
        for per_context in &self.joints {
            let total: f64 = per_context.iter().flatten().flatten().sum();
            if total <= 0.0 {
                terms.push(0.0);
                continue;
            }
            let mut mi = 0.0;
            let mut cond_entropy = 0.0;
            let mut error = 0.0;
            for joint in per_context {
                let weight: f64 = joint.iter().flatten().sum();
                if weight <= 0.0 {
                    continue;
                }
                let normalized = joint.map(|r| r.map(|x| x / weight));
                mi += weight / total * mi_from_joint(&normalized);
                let p1 = normalized[1][0] + normalized[1][1];
                cond_entropy += weight / total * binary_entropy(Probability::saturating(p1));
                error += (joint[0][1] + joint[1][0]) / total;
            }
            terms.push(mi);
            fano += cond_entropy - binary_entropy(Probability::saturating(error));
        }
        (terms, fano)
    }
}

fn check_conditional_n(n: usize) -> Result<()> {
    if n == 0 || n > CONDITIONAL_MAX_N {
        return Err(NicError::Shape(format!(
            "conditional score supports 1 <= N <= {CONDITIONAL_MAX_N}, got {n}"
        )));
    }
    Ok(())
}

fn database_bits(db: &Database) -> u64 {
    db.bits()
        .iter()
        .enumerate()
        .fold(0u64, |acc, (i, &b)| acc | (u64::from(b) << i))
}

/// Plug-in estimate of `sum_K I(A_K : beta | b = K, A_<K)` from records.
/// Contexts are weighted by their empirical frequency among the records of
/// query `K`.
pub fn conditional_score(records: &[DatabaseRecord], n: usize) -> Result<ConditionalScore> {
    check_conditional_n(n)?;
    let mut acc = ConditionalAccumulator::new(n);
    let mut counts: Vec<Vec<u64>> = (0..n).map(|k| vec![0; 1 << k]).collect();
    for r in records {
        if r.database.len() != n || r.query >= n || r.output > 1 {
            return Err(NicError::Shape(format!(
                "record with N = {}, query {} does not fit N = {n}",
                r.database.len(),
                r.query
            )));
        }
        let bits = database_bits(&r.database);
        acc.add(bits, r.query, r.output, 1.0);
        counts[r.query][(bits & ((1u64 << r.query) - 1)) as usize] += 1;
    }
    let sparse_contexts = counts
        .iter()
        .enumerate()
        .flat_map(|(query, per)| {
            per.iter()
                .enumerate()
                .filter(|(_, &c)| c > 0 && c < MIN_CONTEXT_COUNT)
                .map(move |(context, &count)| SparseContext {
                    query,
                    context: context as u64,
                    count,
                })
        })
        .collect();
    let (terms, fano_bound) = acc.finish();
    Ok(ConditionalScore {
        score: terms.iter().sum(),
        fano_bound,
        terms,
        sparse_contexts,
    })
}

/// Exact conditional score for an explicit database distribution.
///
/// `db_dist[v]` is the probability of the database whose bit `i` is bit `i`
/// of `v`; `response(v, K)` is `Pr[beta = 1 | database v, query K]`.
pub fn conditional_score_exact(
    db_dist: &[f64],
    n: usize,
    response: impl Fn(u64, usize) -> f64,
) -> Result<ConditionalScore> {
    check_conditional_n(n)?;
    if db_dist.len() != 1 << n {
        return Err(NicError::Shape(format!(
            "distribution over N = {n} bits needs {} entries, got {}",
            1usize << n,
            db_dist.len()
        )));
    }
    let mut acc = ConditionalAccumulator::new(n);
    for (v, &p) in db_dist.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        for k in 0..n {
            let one = Probability::new(response(v as u64, k))?.get();
            acc.add(v as u64, k, 1, p * one);
            acc.add(v as u64, k, 0, p * (1.0 - one));
        }
    }
    let (terms, fano_bound) = acc.finish();
    Ok(ConditionalScore {
        score: terms.iter().sum(),
        fano_bound,
        terms,
        sparse_contexts: Vec::new(),
    })
}

/// `U(phi) = I(n, E_iso(phi)) - lambda (phi / (pi/4))^2`.
pub fn regularized_utility(n: u32, lambda: f64, phi: f64) -> Result<f64> {
    let e = quantum_phi_iso_bias(phi, 1.0)?;
    Ok(closed_form_score(n, e)? - lambda * (phi / FRAC_PI_4).powi(2))
}

/// Maximizer of the regularized utility on `[0, pi/4]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleOptimum {
    pub phi: f64,
    pub utility: f64,
    pub iterations: u32,
}

/// Grid points used to bracket the global maximum before refinement.
const ANGLE_GRID: usize = 512;

/// Maximizes [`regularized_utility`] on `[0, pi/4]`.
///
/// The objective can have two local maxima (a tiny one near `phi = 0` and
/// the main one), so a uniform grid first selects the best cell and
/// golden-section search then refines inside the two neighbouring cells.
/// Endpoints are compared against the refined point, so an optimum on the
/// boundary is reported exactly.
pub fn optimize_regularized_angle(n: u32, lambda: f64) -> Result<AngleOptimum> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(NicError::Range {
            name: "lambda",
            value: lambda,
            range: "[0, inf)",
        });
    }
    check_depth(n)?;
    let u = |phi: f64| regularized_utility(n, lambda, phi);
    let step = FRAC_PI_4 / ANGLE_GRID as f64;
    let mut best_k = 0;
    let mut best_u = f64::NEG_INFINITY;
    for k in 0..=ANGLE_GRID {
        let value = u(k as f64 * step)?;
        if value > best_u {
            best_u = value;
            best_k = k;
        }
    }
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = best_k.saturating_sub(1) as f64 * step;
    let mut b = ((best_k + 1).min(ANGLE_GRID) as f64 * step).min(FRAC_PI_4);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (u(c)?, u(d)?);
    let mut iterations = 0;
    while b - a > ANGLE_TOL {
        iterations += 1;
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = u(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = u(d)?;
        }
    }
    let mid = 0.5 * (a + b);
    let mut best = AngleOptimum {
        phi: mid,
        utility: u(mid)?,
        iterations,
    };
    for edge in [0.0, FRAC_PI_4] {
        let value = u(edge)?;
        if value >= best.utility - 1e-12 * best.utility.abs().max(1.0) {
            best.phi = edge;
            best.utility = value;
        }
    }
    Ok(best)
}
