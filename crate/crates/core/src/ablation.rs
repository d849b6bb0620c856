//! Controlled leakage experiments.
//!
//! A strict model trained end-to-end through an `m`-bit straight-through
//! bottleneck, plus three deliberately leaky controls that beat the counted
//! capacity by breaking the accounting rules.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::capacity::{pack_coordinate, tabulate, unpack_coordinate};
use crate::error::{NicError, Result};
use crate::estimation::{
    per_query_plugin_score, plugin_mi, symmetric_score_estimate_with, ContingencyTable,
    IntervalMethod,
};
use crate::info::Bits;
use crate::protocols::{Database, Query};
use crate::rng::substream;

pub const QUERY_LEAK_DIAGNOSIS: &str = "query separation broken";
pub const EPISODE_WEIGHTS_DIAGNOSIS: &str = "weights are data-dependent memory";

/// Largest database enumerated exhaustively by the controls.
pub const MAX_ENUMERATED_N: usize = 20;

/// Training settings for [`BottleneckNet`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub hidden: usize,
    pub step_size: f64,
    pub batch: usize,
    pub steps: usize,
    pub seed: u64,
    /// Loss is recorded every `log_every` steps.
    pub log_every: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            hidden: 32,
            step_size: 0.05,
            batch: 256,
            steps: 20_000,
            seed: 0,
            log_every: 100,
        }
    }
}

/// How the bottleneck is applied in the forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binarizer {
    /// `sign`, with identity gradient.
    StraightThrough,
    /// No binarization; used to check gradients.
    Identity,
}

/// Parameter block offsets inside the flat weight vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Layout {
    n: usize,
    m: usize,
    h: usize,
}

impl Layout {
    fn w1(&self) -> usize {
        0
    }
    fn b1(&self) -> usize {
        self.h * self.n
    }
    fn w2(&self) -> usize {
        self.b1() + self.h
    }
    fn b2(&self) -> usize {
        self.w2() + self.m * self.h
    }
    fn w3(&self) -> usize {
        self.b2() + self.m
    }
    fn dec_in(&self) -> usize {
        self.m + self.n
    }
    fn b3(&self) -> usize {
        self.w3() + self.h * self.dec_in()
    }
    fn w4(&self) -> usize {
        self.b3() + self.h
    }
    fn b4(&self) -> usize {
        self.w4() + self.h
    }
    fn len(&self) -> usize {
        self.b4() + 1
    }
}

/// Encoder `N -> hidden -> m` (tanh), sign bottleneck, decoder over the
/// bottleneck bits and a one-hot query, `m + N -> hidden -> 1` (tanh).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BottleneckNet {
    layout: Layout,
    weights: Vec<f64>,
    pub hyper: Hyperparams,
    /// `(step, mean batch loss)` pairs recorded during training.
    pub curve: Vec<(usize, f64)>,
}

fn signed(bit: u8) -> f64 {
    if bit == 1 {
        1.0
    } else {
        -1.0
    }
}

impl BottleneckNet {
    /// Fresh network with uniform `+-1/sqrt(fan_in)` initialization.
    pub fn new(n: usize, m: usize, hyper: Hyperparams) -> Result<Self> {
        if n == 0 || m == 0 || hyper.hidden == 0 {
            return Err(NicError::Shape(format!(
                "need N, m, hidden >= 1, got {n}, {m}, {}",
                hyper.hidden
            )));
        }
        let layout = Layout {
            n,
            m,
            h: hyper.hidden,
        };
        let mut rng = substream(hyper.seed, 0);
        let mut weights = vec![0.0; layout.len()];
        let mut fill = |start: usize, len: usize, fan_in: usize| {
            let r = 1.0 / (fan_in as f64).sqrt();
            for w in &mut weights[start..start + len] {
                *w = rng.random_range(-r..r);
            }
        };
        fill(layout.w1(), layout.h * n, n);
        fill(layout.w2(), m * layout.h, layout.h);
        fill(layout.w3(), layout.h * layout.dec_in(), layout.dec_in());
        fill(layout.w4(), layout.h, layout.h);
        Ok(BottleneckNet {
            layout,
            weights,
            hyper,
            curve: Vec::new(),
        })
    }

    /// Hand-set network with `m = N` that copies the database through the
    /// bottleneck and reads back the queried bit. Needs `hidden >= 2N`.
    pub fn copy_net(n: usize, hyper: Hyperparams) -> Result<Self> {
        if hyper.hidden < 2 * n {
            return Err(NicError::Shape(format!(
                "copy net needs hidden >= {}, got {}",
                2 * n,
                hyper.hidden
            )));
        }
        let mut net = BottleneckNet::new(n, n, hyper)?;
        let l = net.layout;
        let (gain, out) = (4.0, 4.0);
        let w = &mut net.weights;
        w.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..n {
            // h1_k = tanh(gain x_k), z_k = h1_k.
            w[l.w1() + k * n + k] = gain;
            w[l.w2() + k * l.h + k] = 1.0;
            // Two decoder units per bit fire only when bit k is queried:
            // one when s_k = +1, one when s_k = -1.
            let d = l.dec_in();
            for (unit, sign) in [(2 * k, 1.0), (2 * k + 1, -1.0)] {
                w[l.w3() + unit * d + k] = gain * sign;
                w[l.w3() + unit * d + n + k] = 2.0 * gain;
                w[l.b3() + unit] = -2.0 * gain;
                w[l.w4() + unit] = out * sign;
            }
        }
        Ok(net)
    }

    pub fn database_len(&self) -> usize {
        self.layout.n
    }

    pub fn bottleneck_bits(&self) -> usize {
        self.layout.m
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    fn scratch(&self) -> Scratch {
        let Layout { n, m, h } = self.layout;
        Scratch {
            x: vec![0.0; n],
            h1: vec![0.0; h],
            z: vec![0.0; m],
            u: vec![0.0; m + n],
            h2: vec![0.0; h],
            du: vec![0.0; m + n],
            dh1: vec![0.0; h],
        }
    }

    /// Encoder pass; leaves `x`, `h1` and the pre-binarization `z` in `s`.
    fn encoder_pass(&self, bits: &[u8], s: &mut Scratch) {
        let l = self.layout;
        let w = &self.weights;
        for (x, &b) in s.x.iter_mut().zip(bits) {
            *x = signed(b);
        }
        let w1 = &w[l.w1()..l.b1()];
        let b1 = &w[l.b1()..l.w2()];
        for ((h, row), b) in s.h1.iter_mut().zip(w1.chunks_exact(l.n)).zip(b1) {
            *h = (dot(row, &s.x) + b).tanh();
        }
        let w2 = &w[l.w2()..l.b2()];
        let b2 = &w[l.b2()..l.w3()];
        for ((z, row), b) in s.z.iter_mut().zip(w2.chunks_exact(l.h)).zip(b2) {
            *z = dot(row, &s.h1) + b;
        }
    }

    /// Decoder pass over the code already stored in `s.u[..m]`.
    fn decoder_pass(&self, query: usize, s: &mut Scratch) -> f64 {
        let l = self.layout;
        let w = &self.weights;
        s.u[l.m..].iter_mut().for_each(|v| *v = 0.0);
        s.u[l.m + query] = 1.0;
        let w3 = &w[l.w3()..l.b3()];
        let b3 = &w[l.b3()..l.w4()];
        for ((h, row), b) in s.h2.iter_mut().zip(w3.chunks_exact(l.dec_in())).zip(b3) {
            *h = (dot(row, &s.u) + b).tanh();
        }
        dot(&w[l.w4()..l.b4()], &s.h2) + w[l.b4()]
    }

    fn forward(&self, bits: &[u8], query: usize, binarizer: Binarizer, s: &mut Scratch) -> f64 {
        self.encoder_pass(bits, s);
        let m = self.layout.m;
        for k in 0..m {
            s.u[k] = match binarizer {
                Binarizer::StraightThrough => {
                    if s.z[k] >= 0.0 {
                        1.0
                    } else {
                        -1.0
                    }
                }
                Binarizer::Identity => s.z[k],
            };
        }
        self.decoder_pass(query, s)
    }

    /// The transmitted bits. The encoder never sees the query.
    pub fn encode(&self, db: &Database) -> Vec<u8> {
        let mut s = self.scratch();
        self.encoder_pass(db.bits(), &mut s);
        s.z.iter().map(|&v| u8::from(v >= 0.0)).collect()
    }

    /// Decoder logit for `Pr[target = 1]` given transmitted bits and query.
    pub fn decode_logit(&self, bits: &[u8], query: Query) -> f64 {
        let mut s = self.scratch();
        for (u, &b) in s.u.iter_mut().zip(bits) {
            *u = signed(b);
        }
        self.decoder_pass(query.0, &mut s)
    }

    /// Guess for bit `query`, using only the transmitted bits.
    pub fn answer(&self, db: &Database, query: Query) -> u8 {
        let bits = self.encode(db);
        u8::from(self.decode_logit(&bits, query) > 0.0)
    }

    /// Binary cross-entropy of the logit against `target`.
    pub fn loss(&self, db: &Database, query: Query, binarizer: Binarizer) -> f64 {
        let mut s = self.scratch();
        bce(
            self.forward(db.bits(), query.0, binarizer, &mut s),
            db.bit(query.0),
        )
    }

    /// Adds the gradient of the example loss to `grad`; returns the loss.
    fn accumulate(
        &self,
        bits: &[u8],
        query: usize,
        binarizer: Binarizer,
        grad: &mut [f64],
        s: &mut Scratch,
    ) -> f64 {
        let l = self.layout;
        let (h, d) = (l.h, l.dec_in());
        let w = &self.weights;
        let logit = self.forward(bits, query, binarizer, s);
        let target = bits[query];
        let dy = sigmoid(logit) - f64::from(target);
        grad[l.b4()] += dy;
        s.du.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..h {
            grad[l.w4() + i] += dy * s.h2[i];
            let da = dy * w[l.w4() + i] * (1.0 - s.h2[i] * s.h2[i]);
            grad[l.b3() + i] += da;
            let row = l.w3() + i * d;
            axpy(da, &s.u, &mut grad[row..row + d]);
            axpy(da, &w[row..row + d], &mut s.du);
        }
        // Straight-through: the gradient with respect to the pre-activation
        // is the gradient with respect to the code.
        s.dh1.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..l.m {
            let dz = s.du[k];
            grad[l.b2() + k] += dz;
            let row = l.w2() + k * h;
            axpy(dz, &s.h1, &mut grad[row..row + h]);
            axpy(dz, &w[row..row + h], &mut s.dh1);
        }
        for i in 0..h {
            let da = s.dh1[i] * (1.0 - s.h1[i] * s.h1[i]);
            grad[l.b1() + i] += da;
            let row = l.w1() + i * l.n;
            axpy(da, &s.x, &mut grad[row..row + l.n]);
        }
        bce(logit, target)
    }

    /// Gradient of the mean loss over `batch`.
    pub fn gradient(&self, batch: &[(Database, Query)], binarizer: Binarizer) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.weights.len()];
        let mut s = self.scratch();
        let mut loss = 0.0;
        for (db, q) in batch {
            loss += self.accumulate(db.bits(), q.0, binarizer, &mut grad, &mut s);
        }
        let scale = 1.0 / batch.len() as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        (loss * scale, grad)
    }
}

/// Reusable activation buffers.
struct Scratch {
    x: Vec<f64>,
    h1: Vec<f64>,
    z: Vec<f64>,
    u: Vec<f64>,
    h2: Vec<f64>,
    du: Vec<f64>,
    dh1: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha x`.
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += alpha * x;
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-log Pr[target]` in nats for a Bernoulli with the given logit.
fn bce(logit: f64, target: u8) -> f64 {
    let softplus = |x: f64| {
        if x > 0.0 {
            x + (-x).exp().ln_1p()
        } else {
            x.exp().ln_1p()
        }
    };
    if target == 1 {
        softplus(-logit)
    } else {
        softplus(logit)
    }
}

/// Trains a query-blind bottleneck network with plain SGD on fresh
/// databases. Deterministic in `hyper.seed`.
pub fn train_strict(n: usize, m: usize, hyper: Hyperparams) -> Result<BottleneckNet> {
    if hyper.batch == 0 {
        return Err(NicError::Shape("batch size must be positive".into()));
    }
    let mut net = BottleneckNet::new(n, m, hyper)?;
    let mut rng = substream(hyper.seed, 1);
    let log_every = hyper.log_every.max(1);
    let mut scratch = net.scratch();
    let mut grad = vec![0.0; net.weights.len()];
    let mut bits = vec![0u8; n];
    let mut running = 0.0;
    let mut since = 0;
    for step in 0..hyper.steps {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for _ in 0..hyper.batch {
            bits.iter_mut()
                .for_each(|b| *b = u8::from(rng.random::<bool>()));
            let q = rng.random_range(0..n);
            loss += net.accumulate(
                &bits,
                q,
                Binarizer::StraightThrough,
                &mut grad,
                &mut scratch,
            );
        }
        let scale = 1.0 / hyper.batch as f64;
        loss *= scale;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(NicError::Diverged { step, loss });
        }
        let rate = hyper.step_size * scale;
        for (w, g) in net.weights.iter_mut().zip(&grad) {
            *w -= rate * g;
        }
        running += loss;
        since += 1;
        if (step + 1) % log_every == 0 || step + 1 == hyper.steps {
            net.curve.push((step + 1, running / since as f64));
            running = 0.0;
            since = 0;
        }
    }
    Ok(net)
}

/// Which experiment produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    Strict,
    QueryLeaky,
    PrecisionPacking,
    EpisodeWeights,
    FrozenWeights,
}

impl AblationMode {
    pub fn name(self) -> &'static str {
        match self {
            AblationMode::Strict => "strict",
            AblationMode::QueryLeaky => "query_leaky",
            AblationMode::PrecisionPacking => "precision_packing",
            AblationMode::EpisodeWeights => "episode_weights",
            AblationMode::FrozenWeights => "frozen_weights",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub mode: AblationMode,
    pub database_len: usize,
    pub observed: Bits,
    /// Absent for exact (enumerated) evaluations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<(Bits, Bits)>,
    /// Pooled `N (1 - h(P_hat))`, for comparison with the plug-in sum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symmetric: Option<Bits>,
    pub counted_capacity: Bits,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrected_capacity: Option<Bits>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnosis: Option<String>,
    /// Episodes evaluated; for exact reports, the enumerated count.
    pub episodes: u64,
}

impl AblationReport {
    pub fn half_width(&self) -> f64 {
        self.interval.map_or(0.0, |(lo, hi)| 0.5 * (hi - lo))
    }

    /// Observed score within the counted capacity plus three half-widths.
    pub fn within_counted(&self) -> bool {
        self.observed <= self.counted_capacity + 3.0 * self.half_width()
    }
}

/// Per-query plug-in score of a frozen network on `episodes` fresh episodes.
pub fn eval_score(
    net: &BottleneckNet,
    episodes: u64,
    seed: u64,
    method: IntervalMethod,
    level: f64,
) -> Result<AblationReport> {
    let n = net.database_len();
    let settings = crate::capacity::ProbeSettings {
        episodes,
        seed,
        method,
        level,
    };
    let tables = tabulate(n, &settings, |db, q, _| Ok(net.answer(db, q)))?;
    if let Some(t) = tables.iter().find(|t| t.is_empty()) {
        return Err(NicError::EmptyTable(t.query));
    }
    let report = per_query_plugin_score(&tables, 0.0, method, level)?;
    let successes: u64 = tables.iter().map(ContingencyTable::successes).sum();
    let symmetric = symmetric_score_estimate_with(successes, episodes, n, method, level)?;
    Ok(AblationReport {
        mode: AblationMode::Strict,
        database_len: n,
        observed: report.score,
        interval: report.interval,
        symmetric: Some(symmetric.score),
        counted_capacity: net.bottleneck_bits() as f64,
        corrected_capacity: None,
        diagnosis: None,
        episodes,
    })
}

/// True when the transmitted bits for `db` are the same whichever query is
/// later asked. `encode` takes no query, so this checks the full pipeline
/// rather than the signature.
pub fn query_blindness_audit(net: &BottleneckNet, db: &Database) -> bool {
    let reference = net.encode(db);
    (0..net.database_len()).all(|b| {
        let sent = net.encode(db);
        sent == reference
            && net.answer(db, Query(b)) == u8::from(net.decode_logit(&sent, Query(b)) > 0.0)
    })
}

/// Exact per-query tables of a deterministic protocol, enumerating every
/// database and query once.
fn enumerate<F>(n: usize, protocol: F) -> Result<Vec<ContingencyTable>>
where
    F: Fn(&Database, Query) -> u8,
{
    if n == 0 || n > MAX_ENUMERATED_N {
        return Err(NicError::Range {
            name: "N",
            value: n as f64,
            range: "[1, 20]",
        });
    }
    let mut tables: Vec<_> = (0..n).map(ContingencyTable::empty).collect();
    for v in 0..1u64 << n {
        let db = Database::from_index(v, n);
        for (b, table) in tables.iter_mut().enumerate() {
            table.record(db.bit(b), protocol(&db, Query(b)));
        }
    }
    Ok(tables)
}

fn exact_report(
    mode: AblationMode,
    tables: &[ContingencyTable],
    counted: Bits,
) -> Result<AblationReport> {
    let mut observed = 0.0;
    for t in tables {
        observed += plugin_mi(t, 0.0)?;
    }
    Ok(AblationReport {
        mode,
        database_len: tables.len(),
        observed,
        interval: None,
        symmetric: None,
        counted_capacity: counted,
        corrected_capacity: None,
        diagnosis: None,
        episodes: tables.iter().map(ContingencyTable::total).sum(),
    })
}

/// The encoder is shown the query and sends the requested bit.
pub fn query_leaky_control(n: usize) -> Result<AblationReport> {
    let leaky_encoder = |db: &Database, q: Query| db.bit(q.0);
    let tables = enumerate(n, |db, q| leaky_encoder(db, q))?;
    let mut report = exact_report(AblationMode::QueryLeaky, &tables, 1.0)?;
    if n > 1 {
        report.diagnosis = Some(QUERY_LEAK_DIAGNOSIS.to_owned());
    }
    Ok(report)
}

/// One real coordinate quantized to `q` bits carries the first `min(N, q)`
/// database bits. Unrecoverable bits are answered with a constant.
pub fn precision_packing_control(n: usize, q: usize) -> Result<AblationReport> {
    if q > 64 {
        return Err(NicError::Range {
            name: "q",
            value: q as f64,
            range: "[0, 64]",
        });
    }
    let carried = n.min(q);
    let tables = enumerate(n, |db, query| {
        let x = pack_coordinate(&db.bits()[..carried], carried);
        if query.0 < carried {
            unpack_coordinate(x, carried)[query.0]
        } else {
            0
        }
    })?;
    let mut report = exact_report(AblationMode::PrecisionPacking, &tables, 1.0)?;
    report.corrected_capacity = Some(q as f64);
    Ok(report)
}

/// Decoder weights are overwritten with the episode's database; the message
/// is empty.
pub fn episode_weights_control(n: usize) -> Result<AblationReport> {
    let tables = enumerate(n, |db, q| {
        let weights = db.bits().to_vec();
        weights[q.0]
    })?;
    let mut report = exact_report(AblationMode::EpisodeWeights, &tables, 0.0)?;
    report.diagnosis = Some(EPISODE_WEIGHTS_DIAGNOSIS.to_owned());
    Ok(report)
}

/// The same decoder with weights frozen to a database drawn once from
/// `seed`, independent of every evaluated episode.
pub fn frozen_weights_control(n: usize, seed: u64) -> Result<AblationReport> {
    let mut rng = substream(seed, 0);
    let weights = Database::random(n.clamp(1, MAX_ENUMERATED_N), &mut rng);
    let tables = enumerate(n, |_, q| weights.bit(q.0))?;
    exact_report(AblationMode::FrozenWeights, &tables, 0.0)
}
