//! Random-access-coding protocols with a one-bit message.
//!
//! The nested ("pyramid") protocol uses a full binary tree of cells. Nodes are
//! addressed by binary words; internally a word `w` is stored at heap index
//! `1w` (the word with a leading one), so the root is index 1 and the
//! children of `i` are `2i` and `2i + 1`. Leaves at depth `n` hold the
//! database bits, with the database index read most-significant bit first
//! along the root-to-leaf path.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cells::{Bit, CellDraw, CellSampler, CellSpec};
use crate::error::{NicError, Result};
use crate::rng::{derive_seed, substream};

/// Largest `N` accepted by [`classical_avg_success_closed_form`].
pub const CLASSICAL_N_BUDGET: u64 = 1 << 16;

/// Deepest pyramid that can be materialized in memory.
pub const MAX_PYRAMID_DEPTH: u32 = 24;

/// Alice's database of independent bits.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Database {
    bits: Vec<Bit>,
}

impl Database {
    pub fn new(bits: Vec<Bit>) -> Result<Self> {
        if bits.is_empty() {
            return Err(NicError::Shape(
                "database must hold at least one bit".into(),
            ));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(NicError::Shape("database entries must be 0 or 1".into()));
        }
        Ok(Database { bits })
    }

    /// Database whose bit `i` is bit `i` of `value`.
    pub fn from_index(value: u64, len: usize) -> Self {
        Database {
            bits: (0..len).map(|i| ((value >> i) & 1) as Bit).collect(),
        }
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        Database {
            bits: (0..len).map(|_| u8::from(rng.random::<bool>())).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bit(&self, i: usize) -> Bit {
        self.bits[i]
    }

    pub fn bits(&self) -> &[Bit] {
        &self.bits
    }
}

/// Bob's query: the index of the requested bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Query(pub usize);

impl Query {
    /// Path bits `(b_1, ..., b_n)` from the root: the binary expansion of the
    /// index, most significant bit first.
    pub fn path(self, depth: u32) -> Vec<Bit> {
        (0..depth)
            .rev()
            .map(|k| ((self.0 >> k) & 1) as Bit)
            .collect()
    }
}

/// Result of a single episode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub query: usize,
    pub target: Bit,
    pub output: Bit,
    pub success: bool,
    /// Cell error bits along the query path, root first. Empty for protocols
    /// that use no cells.
    pub errors: Vec<Bit>,
}

impl EpisodeOutcome {
    fn new(query: usize, target: Bit, output: Bit, errors: Vec<Bit>) -> Self {
        EpisodeOutcome {
            query,
            target,
            output,
            success: target == output,
            errors,
        }
    }

    /// Parity of the recorded error bits.
    pub fn error_parity(&self) -> Bit {
        self.errors.iter().fold(0, |acc, &e| acc ^ e)
    }
}

/// One line of an exported episode trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub seed: u64,
    pub query: usize,
    pub target: Bit,
    pub output: Bit,
    pub errors: Vec<Bit>,
}

impl TraceRecord {
    pub fn new(seed: u64, outcome: &EpisodeOutcome) -> Self {
        TraceRecord {
            seed,
            query: outcome.query,
            target: outcome.target,
            output: outcome.output,
            errors: outcome.errors.clone(),
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trace record serializes")
    }
}

/// The `(2, 1)` seed protocol on a single cell.
pub fn run_seed<R: Rng + ?Sized>(
    spec: &CellSpec,
    a0: Bit,
    a1: Bit,
    b: Bit,
    rng: &mut R,
) -> Result<EpisodeOutcome> {
    let sampler = spec.sampler()?;
    let draw = CellDraw::sample(rng);
    let s = a0 ^ a1;
    let a = sampler.alice(s, &draw);
    let x = a0 ^ a;
    let bob = sampler.bob(s, b, a, &draw);
    let beta = x ^ bob;
    let target = if b == 0 { a0 } else { a1 };
    Ok(EpisodeOutcome::new(
        usize::from(b),
        target,
        beta,
        vec![a ^ bob ^ (s & b)],
    ))
}

/// Depth-`n` nested protocol over a bank of `2^n - 1` cells.
#[derive(Debug, Clone, PartialEq)]
pub struct PyramidProtocol {
    depth: u32,
    cells: Vec<CellSpec>,
    samplers: Vec<CellSampler>,
}

/// Alice's side of one episode: everything fixed before the query arrives.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoding {
    /// The transmitted bit `x`.
    pub message: Bit,
    /// Inputs `s_w` in heap order (index 0 unused).
    inputs: Vec<Bit>,
    /// Outputs `A_w` in heap order (index 0 unused).
    alice: Vec<Bit>,
    draws: Vec<CellDraw>,
}

impl Encoding {
    /// Alice's input `s_w` at each cell, heap order (root at 1, children of
    /// `i` at `2i` and `2i + 1`; index 0 unused).
    pub fn cell_inputs(&self) -> &[Bit] {
        &self.inputs
    }
}

impl PyramidProtocol {
    /// Protocol with the same cell type at every node.
    pub fn uniform(depth: u32, cell: CellSpec) -> Result<Self> {
        Self::check_depth(depth)?;
        Self::new(depth, vec![cell; (1usize << depth) - 1])
    }

    /// Protocol with an explicit bank, indexed in heap order (root first,
    /// then words `0`, `1`, `00`, `01`, ...).
    pub fn new(depth: u32, cells: Vec<CellSpec>) -> Result<Self> {
        Self::check_depth(depth)?;
        let expected = (1usize << depth) - 1;
        if cells.len() != expected {
            return Err(NicError::Shape(format!(
                "depth {depth} needs {expected} cells, got {}",
                cells.len()
            )));
        }
        let samplers = cells
            .iter()
            .map(CellSpec::sampler)
            .collect::<Result<Vec<_>>>()?;
        Ok(PyramidProtocol {
            depth,
            cells,
            samplers,
        })
    }

    fn check_depth(depth: u32) -> Result<()> {
        if depth == 0 || depth > MAX_PYRAMID_DEPTH {
            return Err(NicError::Shape(format!(
                "pyramid depth must be in 1..={MAX_PYRAMID_DEPTH}, got {depth}"
            )));
        }
        Ok(())
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn database_len(&self) -> usize {
        1 << self.depth
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    /// Cell at the node labelled by `word` (root = empty word).
    pub fn cell(&self, word: &[Bit]) -> Option<&CellSpec> {
        if word.len() >= self.depth as usize {
            return None;
        }
        let idx = word.iter().fold(1usize, |i, &b| 2 * i + usize::from(b));
        self.cells.get(idx - 1)
    }

    /// Upward pass: `s_w = x_w0 ^ x_w1`, `x_w = x_w0 ^ A_w`. Depends only on
    /// the database and the randomness, never on the query.
    pub fn encode<R: Rng + ?Sized>(&self, db: &Database, rng: &mut R) -> Result<Encoding> {
        let leaves = self.database_len();
        if db.len() != leaves {
            return Err(NicError::Shape(format!(
                "depth {} needs N = {leaves}, got {}",
                self.depth,
                db.len()
            )));
        }
        let draws: Vec<CellDraw> = (0..leaves).map(|_| CellDraw::sample(rng)).collect();
        let mut x = vec![0u8; 2 * leaves];
        x[leaves..].copy_from_slice(db.bits());
        let mut inputs = vec![0u8; leaves];
        let mut alice = vec![0u8; leaves];
        for node in (1..leaves).rev() {
            let (left, right) = (x[2 * node], x[2 * node + 1]);
            let s = left ^ right;
            let a = self.samplers[node - 1].alice(s, &draws[node]);
            inputs[node] = s;
            alice[node] = a;
            x[node] = left ^ a;
        }
        Ok(Encoding {
            message: x[1],
            inputs,
            alice,
            draws,
        })
    }

    /// Downward pass along the query path: `x_hat_{w t} = x_hat_w ^ B_w`.
    pub fn decode(
        &self,
        encoding: &Encoding,
        db: &Database,
        query: Query,
    ) -> Result<EpisodeOutcome> {
        if query.0 >= self.database_len() {
            return Err(NicError::Shape(format!(
                "query {} out of range for N = {}",
                query.0,
                self.database_len()
            )));
        }
        let mut estimate = encoding.message;
        let mut node = 1usize;
        let mut errors = Vec::with_capacity(self.depth as usize);
        for t in query.path(self.depth) {
            let s = encoding.inputs[node];
            let a = encoding.alice[node];
            let b = self.samplers[node - 1].bob(s, t, a, &encoding.draws[node]);
            errors.push(a ^ b ^ (s & t));
            estimate ^= b;
            node = 2 * node + usize::from(t);
        }
        Ok(EpisodeOutcome::new(
            query.0,
            db.bit(query.0),
            estimate,
            errors,
        ))
    }
}

/// One full episode of the nested protocol.
pub fn run_pyramid<R: Rng + ?Sized>(
    protocol: &PyramidProtocol,
    db: &Database,
    query: Query,
    rng: &mut R,
) -> Result<EpisodeOutcome> {
    let encoding = protocol.encode(db, rng)?;
    protocol.decode(&encoding, db, query)
}

/// Aggregate counts from a Monte Carlo run of the nested protocol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PyramidStats {
    pub episodes: u64,
    pub successes: u64,
    /// Per-query `(successes, trials)`.
    pub per_query: Vec<(u64, u64)>,
    /// Episodes where `success` disagreed with even error parity.
    pub parity_violations: u64,
    /// Episodes with odd error parity.
    pub odd_parity: u64,
}

impl PyramidStats {
    fn empty(n: usize) -> Self {
        PyramidStats {
            episodes: 0,
            successes: 0,
            per_query: vec![(0, 0); n],
            parity_violations: 0,
            odd_parity: 0,
        }
    }

    fn record(&mut self, outcome: &EpisodeOutcome) {
        self.episodes += 1;
        let slot = &mut self.per_query[outcome.query];
        slot.1 += 1;
        if outcome.success {
            self.successes += 1;
            slot.0 += 1;
        }
        let parity = outcome.error_parity();
        self.odd_parity += u64::from(parity);
        if outcome.success != (parity == 0) {
            self.parity_violations += 1;
        }
    }

    fn merge(mut self, other: Self) -> Self {
        self.episodes += other.episodes;
        self.successes += other.successes;
        self.parity_violations += other.parity_violations;
        self.odd_parity += other.odd_parity;
        for (a, b) in self.per_query.iter_mut().zip(other.per_query) {
            a.0 += b.0;
            a.1 += b.1;
        }
        self
    }
}

/// Episode `episode` of a Monte Carlo run: database, query and cells all
/// come from substream `(master_seed, episode)`.
pub fn pyramid_episode(
    protocol: &PyramidProtocol,
    master_seed: u64,
    episode: u64,
) -> Result<EpisodeOutcome> {
    let n = protocol.database_len();
    let mut rng = substream(master_seed, episode);
    let db = Database::random(n, &mut rng);
    let query = Query(rng.random_range(0..n));
    run_pyramid(protocol, &db, query, &mut rng)
}

/// Trace records for episodes `range` of the run seeded by `master_seed`,
/// identical to the episodes counted by [`simulate_pyramid`]. Each record
/// carries its episode seed.
pub fn trace_pyramid(
    protocol: &PyramidProtocol,
    master_seed: u64,
    range: std::ops::Range<u64>,
) -> Result<Vec<TraceRecord>> {
    range
        .map(|episode| {
            let outcome = pyramid_episode(protocol, master_seed, episode)?;
            Ok(TraceRecord::new(
                derive_seed(master_seed, episode),
                &outcome,
            ))
        })
        .collect()
}

/// Runs `episodes` independent episodes in parallel. Episode `i` draws a
/// fresh database, a uniform query and fresh cells from substream
/// `(master_seed, i)`, so the result is independent of thread scheduling.
pub fn simulate_pyramid(
    protocol: &PyramidProtocol,
    episodes: u64,
    master_seed: u64,
) -> Result<PyramidStats> {
    let n = protocol.database_len();
    (0..episodes)
        .into_par_iter()
        .try_fold(
            || PyramidStats::empty(n),
            |mut stats, episode| {
                stats.record(&pyramid_episode(protocol, master_seed, episode)?);
                Ok(stats)
            },
        )
        .try_reduce(|| PyramidStats::empty(n), |a, b| Ok(a.merge(b)))
}

/// `(1 + E^n) / 2`.
pub fn pyramid_success_closed_form(depth: u32, e: f64) -> Result<f64> {
    if depth == 0 {
        return Err(NicError::Shape("depth must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&e) {
        return Err(NicError::Range {
            name: "E",
            value: e,
            range: "[0, 1]",
        });
    }
    Ok(0.5 * (1.0 + e.powi(depth as i32)))
}

/// `(1 + prod_l E_{b_l}) / 2` for a path of Bob inputs.
pub fn asym_path_success(e0: f64, e1: f64, path: &[Bit]) -> Result<f64> {
    for (name, v) in [("E0", e0), ("E1", e1)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(NicError::Range {
                name,
                value: v,
                range: "[0, 1]",
            });
        }
    }
    let product: f64 = path.iter().map(|&b| if b == 0 { e0 } else { e1 }).product();
    Ok(0.5 * (1.0 + product))
}

/// Majority of the database bits; ties go to 0.
pub fn majority_encode(db: &Database) -> Bit {
    let ones = db.bits().iter().filter(|&&b| b == 1).count();
    u8::from(2 * ones > db.len())
}

/// The majority decoder answers every query with the message bit.
pub fn majority_decode(message: Bit, _query: Query) -> Bit {
    message
}

/// Optimal classical one-bit average success
/// `1/2 + 2^-N C(N - 1, floor((N - 1) / 2))`, evaluated exactly with big
/// integers and rounded once to `f64`.
pub fn classical_avg_success_closed_form(n: u64) -> Result<f64> {
    if n == 0 {
        return Err(NicError::Shape("N must be at least 1".into()));
    }
    if n > CLASSICAL_N_BUDGET {
        return Err(NicError::BinomialBudget(n));
    }
    let top = n - 1;
    let k = top / 2;
    let mut binom = BigUint::one();
    for i in 0..k {
        binom *= top - i;
        binom /= i + 1;
    }
    let bits = binom.bits();
    let shift = bits.saturating_sub(64);
    let mantissa = (&binom >> shift).to_u64().expect("at most 64 bits") as f64;
    let exponent = shift as i64 - n as i64;
    Ok(0.5 + mantissa * 2f64.powi(exponent as i32))
}

/// Copies the first `m` bits; answers `b < m` exactly and flips a fair coin
/// otherwise.
pub fn baseline_copy_protocol<R: Rng + ?Sized>(
    m: usize,
    db: &Database,
    query: Query,
    rng: &mut R,
) -> Result<EpisodeOutcome> {
    if m > db.len() {
        return Err(NicError::Shape(format!("m = {m} exceeds N = {}", db.len())));
    }
    if query.0 >= db.len() {
        return Err(NicError::Shape(format!("query {} out of range", query.0)));
    }
    let message = &db.bits()[..m];
    let output = if query.0 < m {
        message[query.0]
    } else {
        u8::from(rng.random::<bool>())
    };
    Ok(EpisodeOutcome::new(
        query.0,
        db.bit(query.0),
        output,
        Vec::new(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn query_path_is_msb_first() {
        assert_eq!(Query(5).path(3), vec![1, 0, 1]);
        assert_eq!(Query(1).path(3), vec![0, 0, 1]);
    }

    #[test]
    fn perfect_pyramid_always_succeeds() {
        let protocol = PyramidProtocol::uniform(3, CellSpec::Isotropic { e: 1.0 }).unwrap();
        let mut rng = stream(1);
        for v in 0..256u64 {
            let db = Database::from_index(v, 8);
            for q in 0..8 {
                let out = run_pyramid(&protocol, &db, Query(q), &mut rng).unwrap();
                assert!(out.success);
                assert_eq!(out.errors, vec![0, 0, 0]);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let protocol = PyramidProtocol::uniform(3, CellSpec::Isotropic { e: 0.5 }).unwrap();
        let mut rng = stream(1);
        let db = Database::from_index(0, 4);
        assert!(matches!(
            run_pyramid(&protocol, &db, Query(0), &mut rng),
            Err(NicError::Shape(_))
        ));
        let db = Database::from_index(0, 8);
        assert!(run_pyramid(&protocol, &db, Query(8), &mut rng).is_err());
        assert!(PyramidProtocol::new(2, vec![CellSpec::Isotropic { e: 0.5 }; 2]).is_err());
        assert!(Database::new(vec![]).is_err());
        assert!(Database::new(vec![2]).is_err());
    }

    #[test]
    fn cells_are_addressed_by_word() {
        let cells: Vec<CellSpec> = (0..7)
            .map(|i| CellSpec::Isotropic {
                e: f64::from(i) / 10.0,
            })
            .collect();
        let protocol = PyramidProtocol::new(3, cells).unwrap();
        assert_eq!(protocol.cell(&[]), Some(&CellSpec::Isotropic { e: 0.0 }));
        assert_eq!(protocol.cell(&[1]), Some(&CellSpec::Isotropic { e: 0.2 }));
        assert_eq!(
            protocol.cell(&[1, 0]),
            Some(&CellSpec::Isotropic { e: 0.5 })
        );
        assert_eq!(protocol.cell(&[1, 0, 0]), None);
    }

    #[test]
    fn closed_forms() {
        assert_eq!(pyramid_success_closed_form(7, 1.0).unwrap(), 1.0);
        assert_eq!(pyramid_success_closed_form(1, 0.75).unwrap(), 0.875);
        let v = pyramid_success_closed_form(10, std::f64::consts::FRAC_1_SQRT_2).unwrap();
        assert!((v - 0.515_625).abs() < 1e-15);
        assert!((asym_path_success(0.9, 0.6, &[1, 0, 1]).unwrap() - 0.662).abs() < 1e-15);
        assert_eq!(asym_path_success(1.0, 1.0, &[0, 1, 1, 0]).unwrap(), 1.0);
        assert!(asym_path_success(1.1, 0.5, &[0]).is_err());
    }

    #[test]
    fn majority_rules() {
        let db = Database::new(vec![1, 1, 0]).unwrap();
        assert_eq!(majority_encode(&db), 1);
        assert_eq!(majority_decode(1, Query(2)), 1);
        assert_eq!(majority_encode(&Database::new(vec![1, 0]).unwrap()), 0);
    }

    // Exhaustive average success of majority coding.
    fn majority_average(n: usize) -> f64 {
        let mut wins = 0usize;
        for v in 0..(1u64 << n) {
            let db = Database::from_index(v, n);
            let x = majority_encode(&db);
            wins += (0..n)
                .filter(|&q| majority_decode(x, Query(q)) == db.bit(q))
                .count();
        }
        wins as f64 / (n << n) as f64
    }

    #[test]
    fn classical_closed_form_matches_enumeration() {
        for n in 1..=10usize {
            let closed = classical_avg_success_closed_form(n as u64).unwrap();
            assert!((closed - majority_average(n)).abs() < 1e-15, "N = {n}");
        }
        assert_eq!(classical_avg_success_closed_form(2).unwrap(), 0.75);
        assert_eq!(classical_avg_success_closed_form(3).unwrap(), 0.75);
        let big = classical_avg_success_closed_form(1024).unwrap();
        assert!((big - (0.5 + 1.0 / (2.0 * std::f64::consts::PI * 1024.0).sqrt())).abs() < 1e-4);
        assert!(matches!(
            classical_avg_success_closed_form(CLASSICAL_N_BUDGET + 1),
            Err(NicError::BinomialBudget(_))
        ));
    }

    #[test]
    fn baseline_copy_behaviour() {
        let mut rng = stream(3);
        let db = Database::new(vec![1, 0, 1, 1]).unwrap();
        for q in 0..4 {
            assert!(
                baseline_copy_protocol(4, &db, Query(q), &mut rng)
                    .unwrap()
                    .success
            );
        }
        assert!(baseline_copy_protocol(5, &db, Query(0), &mut rng).is_err());
    }

    #[test]
    fn trace_lines_are_json() {
        let out = EpisodeOutcome::new(3, 1, 0, vec![0, 1, 0]);
        let line = TraceRecord::new(42, &out).to_json_line();
        assert_eq!(
            line,
            r#"{"seed":42,"query":3,"target":1,"output":0,"errors":[0,1,0]}"#
        );
    }
}
