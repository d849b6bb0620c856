//! Finite-sample estimation of information scores from episode records.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::cells::Bit;
use crate::error::{NicError, Result};
use crate::info::{bsc_information, mi_from_joint, Bits, Probability};
use crate::protocols::EpisodeOutcome;
use crate::score::{ScoreMethod, ScoreReport};

/// Counts of `(target, output)` pairs for one query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub query: usize,
    /// `counts[target][output]`.
    pub counts: [[u64; 2]; 2],
}

impl ContingencyTable {
    pub fn new(query: usize, counts: [[u64; 2]; 2]) -> Self {
        ContingencyTable { query, counts }
    }

    pub fn empty(query: usize) -> Self {
        ContingencyTable {
            query,
            counts: [[0; 2]; 2],
        }
    }

    pub fn record(&mut self, target: Bit, output: Bit) {
        self.counts[usize::from(target)][usize::from(output)] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn successes(&self) -> u64 {
        self.counts[0][0] + self.counts[1][1]
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }
}

/// Tabulates the records whose query is `query`.
pub fn contingency_from_trials(records: &[EpisodeOutcome], query: usize) -> ContingencyTable {
    let mut table = ContingencyTable::empty(query);
    for r in records.iter().filter(|r| r.query == query) {
        table.record(r.target, r.output);
    }
    table
}

/// One table per query `0..n`.
pub fn contingency_tables(records: &[EpisodeOutcome], n: usize) -> Vec<ContingencyTable> {
    let mut tables: Vec<_> = (0..n).map(ContingencyTable::empty).collect();
    for r in records {
        tables[r.query].record(r.target, r.output);
    }
    tables
}

/// Plug-in mutual information of a 2x2 table, with `smoothing` pseudocounts
/// added to every cell.
pub fn plugin_mi(table: &ContingencyTable, smoothing: f64) -> Result<Bits> {
    if !(smoothing >= 0.0 && smoothing.is_finite()) {
        return Err(NicError::Range {
            name: "smoothing",
            value: smoothing,
            range: "[0, inf)",
        });
    }
    let cell = |u: usize, v: usize| table.counts[u][v] as f64 + smoothing;
    let total: f64 = (0..4).map(|i| cell(i / 2, i % 2)).sum();
    if total <= 0.0 {
        return Err(NicError::EmptyTable(table.query));
    }
    let joint = [
        [cell(0, 0) / total, cell(0, 1) / total],
        [cell(1, 0) / total, cell(1, 1) / total],
    ];
    Ok(mi_from_joint(&joint))
}

/// Confidence-interval construction for a binomial proportion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMethod {
    #[default]
    Wilson,
    #[serde(alias = "cp")]
    ClopperPearson,
    Hoeffding,
}

impl FromStr for IntervalMethod {
    type Err = NicError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wilson" => Ok(IntervalMethod::Wilson),
            "cp" | "clopper_pearson" | "clopper-pearson" => Ok(IntervalMethod::ClopperPearson),
            "hoeffding" => Ok(IntervalMethod::Hoeffding),
            other => Err(NicError::Invalid(format!(
                "unknown interval method `{other}`"
            ))),
        }
    }
}

impl fmt::Display for IntervalMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IntervalMethod::Wilson => "wilson",
            IntervalMethod::ClopperPearson => "cp",
            IntervalMethod::Hoeffding => "hoeffding",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    pub method: IntervalMethod,
}

impl ConfidenceInterval {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

fn check_binomial(successes: u64, trials: u64, level: f64) -> Result<()> {
    if trials == 0 {
        return Err(NicError::DegenerateSample(trials));
    }
    if successes > trials {
        return Err(NicError::Invalid(format!(
            "{successes} successes out of {trials} trials"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(NicError::Range {
            name: "level",
            value: level,
            range: "(0, 1)",
        });
    }
    Ok(())
}

/// Two-sided standard normal quantile for confidence `level`.
pub fn normal_quantile(level: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    normal.inverse_cdf(0.5 + 0.5 * level)
}

/// Wilson score interval.
pub fn wilson_interval(successes: u64, trials: u64, level: f64) -> Result<ConfidenceInterval> {
    check_binomial(successes, trials, level)?;
    let z = normal_quantile(level);
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    // The endpoints at 0 and T successes are exactly 0 and 1; the formula
    // lands an ulp short.
    let lo = if successes == 0 {
        0.0
    } else {
        (center - half).clamp(0.0, 1.0)
    };
    let hi = if successes == trials {
        1.0
    } else {
        (center + half).clamp(0.0, 1.0)
    };
    Ok(ConfidenceInterval {
        lo,
        hi,
        level,
        method: IntervalMethod::Wilson,
    })
}

/// Hoeffding interval `p_hat +/- sqrt(ln(2 / alpha) / (2T))`.
pub fn hoeffding_interval(successes: u64, trials: u64, level: f64) -> Result<ConfidenceInterval> {
    check_binomial(successes, trials, level)?;
    let p = successes as f64 / trials as f64;
    let half = ((2.0 / (1.0 - level)).ln() / (2.0 * trials as f64)).sqrt();
    Ok(ConfidenceInterval {
        lo: (p - half).max(0.0),
        hi: (p + half).min(1.0),
        level,
        method: IntervalMethod::Hoeffding,
    })
}

/// `ln k!` for `k = 0..=n`, accumulated with compensated summation.
fn ln_factorials(n: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n as usize + 1);
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    out.push(0.0);
    for k in 1..=n {
        let y = (k as f64).ln() - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        out.push(sum);
    }
    out
}

fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// `Pr[lo <= X <= hi]` for `X ~ Binomial(n, p)`, by direct summation.
fn binomial_range(lo: u64, hi: u64, n: u64, p: f64, lnf: &[f64]) -> f64 {
    if lo > hi {
        return 0.0;
    }
    if p <= 0.0 {
        return if lo == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return if hi >= n { 1.0 } else { 0.0 };
    }
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let n_us = n as usize;
    let terms = (lo..=hi).map(move |j| {
        let j = j as usize;
        lnf[n_us] - lnf[j] - lnf[n_us - j] + j as f64 * lp + (n_us - j) as f64 * lq
    });
    log_sum_exp(terms).exp().min(1.0)
}

/// Binomial CDF `Pr[X <= k]`.
pub fn binomial_cdf(k: u64, n: u64, p: f64) -> f64 {
    let lnf = ln_factorials(n);
    binomial_range(0, k.min(n), n, p, &lnf)
}

fn bisect_decreasing(mut f: impl FnMut(f64) -> f64, target: f64) -> f64 {
    // f decreasing on [0, 1]; returns p with f(p) = target.
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Exact (Clopper-Pearson) interval by bisection on the binomial CDF.
pub fn clopper_pearson_interval(
    successes: u64,
    trials: u64,
    level: f64,
) -> Result<ConfidenceInterval> {
    check_binomial(successes, trials, level)?;
    let alpha = 1.0 - level;
    let lnf = ln_factorials(trials);
    let k = successes;
    let lo = if k == 0 {
        0.0
    } else {
        // Pr[X >= k; p] increases with p; solve 1 - Pr[X >= k] = 1 - alpha / 2.
        bisect_decreasing(
            |p| 1.0 - binomial_range(k, trials, trials, p, &lnf),
            1.0 - 0.5 * alpha,
        )
    };
    let hi = if k == trials {
        1.0
    } else {
        bisect_decreasing(|p| binomial_range(0, k, trials, p, &lnf), 0.5 * alpha)
    };
    Ok(ConfidenceInterval {
        lo,
        hi,
        level,
        method: IntervalMethod::ClopperPearson,
    })
}

pub fn binomial_interval(
    method: IntervalMethod,
    successes: u64,
    trials: u64,
    level: f64,
) -> Result<ConfidenceInterval> {
    match method {
        IntervalMethod::Wilson => wilson_interval(successes, trials, level),
        IntervalMethod::ClopperPearson => clopper_pearson_interval(successes, trials, level),
        IntervalMethod::Hoeffding => hoeffding_interval(successes, trials, level),
    }
}

/// Interval on a score in bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreInterval {
    pub lo: Bits,
    pub hi: Bits,
    pub level: f64,
    pub method: IntervalMethod,
    /// The probability interval reached below 1/2, where `N(1 - h(p))` is
    /// not monotone; endpoints come from an extremum search.
    pub non_monotone: bool,
}

/// Maps an interval on a success probability to an interval on
/// `N (1 - h(p))`.
pub fn score_interval_transform(interval: &ConfidenceInterval, n: usize) -> Result<ScoreInterval> {
    let lo = Probability::new(interval.lo)?;
    let hi = Probability::new(interval.hi)?;
    if lo > hi {
        return Err(NicError::Invalid(format!(
            "interval [{lo}, {hi}] is reversed"
        )));
    }
    let scale = n as f64;
    let f = |p: Probability| scale * bsc_information(p);
    let (a, b, non_monotone) = if lo.get() >= 0.5 {
        (f(lo), f(hi), false)
    } else {
        // The deficit is symmetric about 1/2 and increasing in |p - 1/2|:
        // minimum at the point closest to 1/2, maximum at the farthest end.
        let min = if hi.get() >= 0.5 { 0.0 } else { f(hi) };
        let max = f(lo).max(f(hi));
        (min, max, true)
    };
    Ok(ScoreInterval {
        lo: a,
        hi: b,
        level: interval.level,
        method: interval.method,
        non_monotone,
    })
}

/// `N (1 - h(P_hat))` with a transformed interval attached.
pub fn symmetric_score_estimate(successes: u64, trials: u64, n: usize) -> Result<ScoreReport> {
    symmetric_score_estimate_with(successes, trials, n, IntervalMethod::Wilson, 0.95)
}

pub fn symmetric_score_estimate_with(
    successes: u64,
    trials: u64,
    n: usize,
    method: IntervalMethod,
    level: f64,
) -> Result<ScoreReport> {
    let ci = binomial_interval(method, successes, trials, level)?;
    let p_hat = Probability::new(successes as f64 / trials as f64)?;
    let score = n as f64 * bsc_information(p_hat);
    let interval = score_interval_transform(&ci, n)?;
    ScoreReport::new(score, ScoreMethod::SymmetricEstimate)
        .with_param("N", n as f64)
        .with_param("T", trials as f64)
        .with_interval(interval.lo.min(score), interval.hi.max(score))
}

/// Delta-method standard error of `1 - h(P_hat)` from `successes / trials`.
pub fn deficit_standard_error(successes: u64, trials: u64) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    let p = successes as f64 / trials as f64;
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    (p / (1.0 - p)).log2().abs() * (p * (1.0 - p) / trials as f64).sqrt()
}

/// Sum of per-query plug-in informations. Each query contributes its success
/// interval mapped through `1 - h`, widened to include its plug-in value.
///
/// Re-centring the mapped interval on the plug-in value would be wrong for
/// perfect channels: the plug-in value is then the empirical target entropy,
/// which sits below one bit.
pub fn per_query_plugin_score(
    tables: &[ContingencyTable],
    smoothing: f64,
    method: IntervalMethod,
    level: f64,
) -> Result<ScoreReport> {
    let mut score = 0.0;
    let (mut lo, mut hi) = (0.0, 0.0);
    for table in tables {
        let mi = plugin_mi(table, smoothing)?;
        let ci = binomial_interval(method, table.successes(), table.total(), level)?;
        let mapped = score_interval_transform(&ci, 1)?;
        score += mi;
        lo += mapped.lo.min(mi);
        hi += mapped.hi.max(mi);
    }
    ScoreReport::new(score, ScoreMethod::PlugIn)
        .with_param("N", tables.len() as f64)
        .with_param("smoothing", smoothing)
        .with_interval(lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::info::binary_channel_information;
    use crate::rng::stream;
    use rand::Rng;

    #[test]
    fn plugin_reference_tables() {
        let perfect = ContingencyTable::new(0, [[50, 0], [0, 50]]);
        assert!((plugin_mi(&perfect, 0.0).unwrap() - 1.0).abs() < 1e-15);
        let indep = ContingencyTable::new(0, [[25, 25], [25, 25]]);
        assert!(plugin_mi(&indep, 0.0).unwrap().abs() < 1e-15);
        assert!(matches!(
            plugin_mi(&ContingencyTable::empty(3), 0.0),
            Err(NicError::EmptyTable(3))
        ));
        assert!(plugin_mi(&ContingencyTable::empty(3), 0.5).unwrap().abs() < 1e-15);
    }

    #[test]
    fn plugin_matches_direct_formula() {
        let table = ContingencyTable::new(0, [[45, 5], [10, 40]]);
        // Direct sum_{uv} p_uv log(p_uv / (p_u p_v)).
        let p: [[f64; 2]; 2] = [[0.45, 0.05], [0.10, 0.40]];
        let pu = [0.5, 0.5];
        let pv = [0.55, 0.45];
        let mut direct = 0.0;
        for u in 0..2 {
            for v in 0..2 {
                direct += p[u][v] * (p[u][v] / (pu[u] * pv[v])).log2();
            }
        }
        let got = plugin_mi(&table, 0.0).unwrap();
        assert!((got - direct).abs() < 1e-14);
        // Balanced input, so the general-channel formula applies directly.
        let q = Probability::new(5.0 / 50.0).unwrap();
        let r = Probability::new(40.0 / 50.0).unwrap();
        assert!((got - binary_channel_information(q, r)).abs() < 1e-14);
    }

    #[test]
    fn contingency_counts() {
        let records: Vec<EpisodeOutcome> = (0..100)
            .map(|i| EpisodeOutcome {
                query: i % 2,
                target: (i % 4 / 2) as u8,
                output: (i % 4 / 2) as u8,
                success: true,
                errors: vec![],
            })
            .collect();
        let table = contingency_from_trials(&records, 0);
        assert_eq!(table.counts, [[25, 0], [0, 25]]);
        assert!(contingency_from_trials(&records, 7).is_empty());
        let tables = contingency_tables(&records, 2);
        assert_eq!(tables[1].total(), 50);
    }

    #[test]
    fn hoeffding_half_width() {
        let ci = hoeffding_interval(5000, 10_000, 0.95).unwrap();
        let expected = (40f64.ln() / 2e4).sqrt();
        assert!((ci.half_width() - expected).abs() < 1e-15);
        assert!((expected - 0.013_58).abs() < 1e-5);
    }

    #[test]
    fn all_successes_reach_one() {
        for method in [
            IntervalMethod::Wilson,
            IntervalMethod::ClopperPearson,
            IntervalMethod::Hoeffding,
        ] {
            let ci = binomial_interval(method, 40, 40, 0.95).unwrap();
            assert_eq!(ci.hi, 1.0, "{method}");
            let ci = binomial_interval(method, 0, 40, 0.95).unwrap();
            assert_eq!(ci.lo, 0.0, "{method}");
        }
        assert!(matches!(
            wilson_interval(0, 0, 0.95),
            Err(NicError::DegenerateSample(0))
        ));
    }

    #[test]
    fn boundary_counts_reach_the_ends() {
        for t in [1u64, 7, 1000, 123_457] {
            assert_eq!(wilson_interval(t, t, 0.95).unwrap().hi, 1.0);
            assert_eq!(wilson_interval(0, t, 0.95).unwrap().lo, 0.0);
        }
        // A perfect channel over an unbalanced target: plug-in is the
        // empirical target entropy, below one bit, yet the interval reaches 1.
        let table = ContingencyTable::new(0, [[5200, 0], [0, 4800]]);
        let report = per_query_plugin_score(&[table], 0.0, IntervalMethod::Wilson, 0.95).unwrap();
        let (lo, hi) = report.interval.unwrap();
        assert!(report.score < 1.0);
        assert!(lo <= report.score && hi == 1.0);
    }

    #[test]
    fn wilson_against_cdf_inversion() {
        // The Wilson bounds are the p at which the observed proportion sits
        // exactly z standard errors away: solve |p_hat - p| = z sqrt(p(1-p)/n)
        // by bisection on each side.
        let (k, n, level) = (75u64, 100u64, 0.95);
        let ci = wilson_interval(k, n, level).unwrap();
        let z = normal_quantile(level);
        let p_hat = k as f64 / n as f64;
        let gap = |p: f64| (p_hat - p) - z * (p * (1.0 - p) / n as f64).sqrt();
        let root = |mut a: f64, mut b: f64| {
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if gap(a) * gap(m) <= 0.0 {
                    b = m;
                } else {
                    a = m;
                }
            }
            0.5 * (a + b)
        };
        assert!((ci.lo - root(0.0, p_hat)).abs() < 1e-12);
        let gap_hi = |p: f64| (p - p_hat) - z * (p * (1.0 - p) / n as f64).sqrt();
        let (mut a, mut b) = (p_hat, 1.0);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if gap_hi(m) < 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        assert!((ci.hi - 0.5 * (a + b)).abs() < 1e-12);
        // Clopper-Pearson is at least as wide.
        let cp = clopper_pearson_interval(k, n, level).unwrap();
        assert!(cp.lo <= ci.lo && cp.hi >= ci.hi);
    }

    #[test]
    fn clopper_pearson_tails() {
        let cp = clopper_pearson_interval(7, 20, 0.9).unwrap();
        let lnf = ln_factorials(20);
        assert!((binomial_range(7, 20, 20, cp.lo, &lnf) - 0.05).abs() < 1e-10);
        assert!((binomial_cdf(7, 20, cp.hi) - 0.05).abs() < 1e-10);
        assert!((binomial_cdf(1, 2, 0.5) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn score_transform_cases() {
        let ci = |lo, hi| ConfidenceInterval {
            lo,
            hi,
            level: 0.95,
            method: IntervalMethod::Wilson,
        };
        let point = score_interval_transform(&ci(0.5, 0.5), 8).unwrap();
        assert_eq!((point.lo, point.hi), (0.0, 0.0));
        let mono = score_interval_transform(&ci(0.51, 0.53), 8).unwrap();
        assert!(!mono.non_monotone);
        assert!((mono.lo - 8.0 * bsc_information(Probability::new(0.51).unwrap())).abs() < 1e-15);
        assert!((mono.hi - 8.0 * bsc_information(Probability::new(0.53).unwrap())).abs() < 1e-15);
        let straddle = score_interval_transform(&ci(0.49, 0.53), 8).unwrap();
        assert!(straddle.non_monotone);
        assert_eq!(straddle.lo, 0.0);
        assert!((straddle.hi - mono.hi).abs() < 1e-15);
    }

    #[test]
    fn symmetric_estimate_edges() {
        let full = symmetric_score_estimate(1000, 1000, 8).unwrap();
        assert_eq!(full.score, 8.0);
        let half = symmetric_score_estimate(500, 1000, 8).unwrap();
        assert_eq!(half.score, 0.0);
        let (lo, hi) = half.interval.unwrap();
        assert!(lo <= 0.0 && hi > 0.0);
    }

    #[test]
    fn plugin_nonnegative_and_consistent() {
        let mut rng = stream(17);
        let p = 0.75;
        let mut table = ContingencyTable::empty(0);
        for _ in 0..100_000 {
            let target = u8::from(rng.random::<bool>());
            let flip = u8::from(rng.random::<f64>() >= p);
            table.record(target, target ^ flip);
        }
        let est = plugin_mi(&table, 0.0).unwrap();
        let truth = bsc_information(Probability::new(p).unwrap());
        assert!((est - truth).abs() < 0.01);
        for counts in [[[3, 0], [0, 0]], [[1, 1], [1, 2]], [[0, 7], [9, 0]]] {
            assert!(plugin_mi(&ContingencyTable::new(0, counts), 0.0).unwrap() >= -1e-12);
        }
    }
}
