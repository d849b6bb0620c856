use nic_core::cells::{chsh_value, CellSpec};
use nic_core::estimation::symmetric_score_estimate;
use nic_core::protocols::{
    pyramid_success_closed_form, run_pyramid, run_seed, simulate_pyramid, Database,
    PyramidProtocol, Query,
};
use nic_core::rng::{stream, substream};
use nic_core::score::{conditional_score, DatabaseRecord};
use rand::Rng;

fn sigma(p: f64, trials: u64) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

#[test]
fn seed_retrieval_accuracy_and_chsh_identity() {
    let spec = CellSpec::Isotropic { e: 0.75 };
    let mut rng = stream(3);
    let per_query = 500_000u64;
    let mut wins = [0u64; 2];
    for _ in 0..per_query {
        for b in 0..2u8 {
            let (a0, a1) = (rng.random::<bool>() as u8, rng.random::<bool>() as u8);
            if run_seed(&spec, a0, a1, b, &mut rng).unwrap().success {
                wins[b as usize] += 1;
            }
        }
    }
    let p0 = wins[0] as f64 / per_query as f64;
    let p1 = wins[1] as f64 / per_query as f64;
    let pooled = (p0 + p1) / 2.0;
    assert!(
        (pooled - 0.875).abs() < 3.0 * sigma(0.875, 2 * per_query),
        "P = {pooled}"
    );
    let s = chsh_value(&spec.table().unwrap());
    assert!(
        (2.0 * (p0 + p1) - s).abs() < 4.0 * 3.0 * sigma(0.875, per_query),
        "{} vs {s}",
        2.0 * (p0 + p1)
    );
}

#[test]
fn pyramid_success_matches_closed_form() {
    let protocol = PyramidProtocol::uniform(3, CellSpec::Isotropic { e: 0.5 }).unwrap();
    let episodes = 1_000_000;
    let stats = simulate_pyramid(&protocol, episodes, 17).unwrap();
    let p = stats.successes as f64 / episodes as f64;
    let expected = pyramid_success_closed_form(3, 0.5).unwrap();
    assert_eq!(expected, 0.5625);
    assert!(
        (p - expected).abs() < 3.0 * sigma(expected, episodes),
        "P = {p}"
    );
    assert_eq!(stats.parity_violations, 0);
}

#[test]
fn query_symmetry() {
    let protocol = PyramidProtocol::uniform(3, CellSpec::Isotropic { e: 0.8 }).unwrap();
    let stats = simulate_pyramid(&protocol, 400_000, 5).unwrap();
    let expected = pyramid_success_closed_form(3, 0.8).unwrap();
    for (k, &(wins, trials)) in stats.per_query.iter().enumerate() {
        let p = wins as f64 / trials as f64;
        assert!(
            (p - expected).abs() < 3.0 * sigma(expected, trials),
            "query {k}: {p}"
        );
    }
}

#[test]
fn parity_law() {
    for (n, e) in [(2u32, 0.6), (4, 0.9)] {
        let protocol = PyramidProtocol::uniform(n, CellSpec::Isotropic { e }).unwrap();
        let episodes = 300_000;
        let stats = simulate_pyramid(&protocol, episodes, 8).unwrap();
        let odd = stats.odd_parity as f64 / episodes as f64;
        let expected = (1.0 - e.powi(n as i32)) / 2.0;
        assert!(
            (odd - expected).abs() < 3.0 * sigma(expected, episodes),
            "n={n}: {odd} vs {expected}"
        );
        assert_eq!(stats.parity_violations, 0);
    }
}

/// Pearson statistic of a 2x2 table.
fn chi_square(table: [[u64; 2]; 2]) -> f64 {
    let total: u64 = table.iter().flatten().sum();
    let mut stat = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &observed) in row.iter().enumerate() {
            let rows = (table[i][0] + table[i][1]) as f64;
            let cols = (table[0][j] + table[1][j]) as f64;
            let expected = rows * cols / total as f64;
            stat += (observed as f64 - expected).powi(2) / expected;
        }
    }
    stat
}

#[test]
fn error_bits_independent_of_adaptive_inputs() {
    // 1 degree of freedom, alpha = 0.01.
    const CRITICAL: f64 = 6.635;
    let n = 3;
    let protocol = PyramidProtocol::uniform(n, CellSpec::Isotropic { e: 0.6 }).unwrap();
    let mut rng = stream(21);
    // Per level: error bit against Alice's input, and against Bob's input.
    let mut vs_alice = vec![[[0u64; 2]; 2]; n as usize];
    let mut vs_bob = vec![[[0u64; 2]; 2]; n as usize];
    for _ in 0..200_000 {
        let db = Database::random(8, &mut rng);
        let q = Query(rng.random_range(0..8));
        let encoding = protocol.encode(&db, &mut rng).unwrap();
        let outcome = protocol.decode(&encoding, &db, q).unwrap();
        let mut node = 1usize;
        for (level, &t) in q.path(n).iter().enumerate() {
            let e = outcome.errors[level] as usize;
            vs_alice[level][encoding.cell_inputs()[node] as usize][e] += 1;
            vs_bob[level][t as usize][e] += 1;
            node = 2 * node + t as usize;
        }
    }
    for level in 0..n as usize {
        let a = chi_square(vs_alice[level]);
        let b = chi_square(vs_bob[level]);
        assert!(a < CRITICAL, "level {level}: error vs s, chi2 = {a}");
        assert!(b < CRITICAL, "level {level}: error vs t, chi2 = {b}");
    }
}

#[test]
fn non_isotropic_cells_leak_inputs_into_errors() {
    // The same statistic detects dependence when the cell's win probability
    // varies with its inputs.
    let protocol = PyramidProtocol::uniform(1, CellSpec::Asymmetric { e0: 0.9, e1: 0.3 }).unwrap();
    let mut rng = stream(22);
    let mut table = [[0u64; 2]; 2];
    for _ in 0..20_000 {
        let db = Database::random(2, &mut rng);
        let q = rng.random_range(0..2);
        let outcome = run_pyramid(&protocol, &db, Query(q), &mut rng).unwrap();
        table[q][outcome.errors[0] as usize] += 1;
    }
    assert!(chi_square(table) > 100.0);
}

#[test]
fn message_does_not_depend_on_the_query() {
    let protocol = PyramidProtocol::uniform(3, CellSpec::Isotropic { e: 0.7 }).unwrap();
    let mut outer = stream(2);
    for trial in 0..200u64 {
        let db = Database::random(8, &mut outer);
        let message = protocol
            .encode(&db, &mut substream(99, trial))
            .unwrap()
            .message;
        for q in 0..8 {
            let again = protocol.encode(&db, &mut substream(99, trial)).unwrap();
            assert_eq!(again.message, message);
            let direct = run_pyramid(&protocol, &db, Query(q), &mut substream(99, trial)).unwrap();
            assert_eq!(direct, protocol.decode(&again, &db, Query(q)).unwrap());
        }
    }
}

#[test]
fn conditional_score_passes_fano_audit() {
    let protocol = PyramidProtocol::uniform(2, CellSpec::Isotropic { e: 0.85 }).unwrap();
    let mut rng = stream(13);
    for correlated in [false, true] {
        let records: Vec<DatabaseRecord> = (0..100_000)
            .map(|_| {
                let database = if correlated && rng.random::<bool>() {
                    let bit = rng.random::<bool>() as u8;
                    Database::new(vec![bit; 4]).unwrap()
                } else {
                    Database::random(4, &mut rng)
                };
                let query = rng.random_range(0..4);
                let outcome = run_pyramid(&protocol, &database, Query(query), &mut rng).unwrap();
                DatabaseRecord {
                    database,
                    query,
                    output: outcome.output,
                }
            })
            .collect();
        let result = conditional_score(&records, 4).unwrap();
        assert!(result.fano_bound <= result.score + 1e-12, "{result:?}");
        assert!(result.sparse_contexts.is_empty());
        assert!(result.score > 0.0 && result.score < 4.0);
    }
}

#[test]
fn estimate_tightens_with_samples() {
    // Half-width of the symmetric estimate shrinks like 1 / sqrt(T).
    let protocol = PyramidProtocol::uniform(2, CellSpec::Isotropic { e: 0.9 }).unwrap();
    let mut widths = Vec::new();
    for episodes in [10_000u64, 1_000_000] {
        let stats = simulate_pyramid(&protocol, episodes, 4).unwrap();
        let report = symmetric_score_estimate(stats.successes, stats.episodes, 4).unwrap();
        widths.push(report.half_width().unwrap());
    }
    let ratio = widths[0] / widths[1];
    assert!((ratio - 10.0).abs() < 1.5, "ratio {ratio}");
}
