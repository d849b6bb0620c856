use std::f64::consts::FRAC_1_SQRT_2;

use nic_core::ablation::{query_leaky_control, AblationReport};
use nic_core::capacity::{
    capacity_certificate, run_hard_copy_probe, InterfaceModel, ProbeResult, ProbeSettings,
};
use nic_core::cells::{
    chsh_value, effective_iso_bias, make_isotropic, no_signaling_check, BoxTable, CellSpec,
};
use nic_core::estimation::{wilson_interval, ConfidenceInterval, ContingencyTable, IntervalMethod};
use nic_core::protocols::{pyramid_episode, trace_pyramid, PyramidProtocol, TraceRecord};
use nic_core::rng::derive_seed;
use nic_core::score::{closed_form_report, ScoreReport};
use nic_core::NicError;
use serde_json::Value;

fn fixture(name: &str) -> String {
    let path = format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

#[test]
fn box_fixtures_load_row_major() {
    let tsirelson: BoxTable = serde_json::from_str(&fixture("isotropic_tsirelson.json")).unwrap();
    assert!((effective_iso_bias(&tsirelson) - FRAC_1_SQRT_2).abs() < 1e-15);
    let reference = make_isotropic(FRAC_1_SQRT_2).unwrap();
    for (a, b) in tsirelson
        .probs()
        .iter()
        .flatten()
        .zip(reference.probs().iter().flatten())
    {
        assert!((a - b).abs() < 1e-15);
    }

    // A = s, B = 0.
    let local: BoxTable = serde_json::from_str(&fixture("local_deterministic.json")).unwrap();
    assert_eq!(local.prob(1, 0, 1, 0), 1.0);
    assert_eq!(local.prob(0, 1, 0, 0), 1.0);
    assert_eq!(chsh_value(&local), 3.0);
}

#[test]
fn box_json_round_trip() {
    let table = CellSpec::QuantumPhi {
        phi: 0.4,
        visibility: 0.9,
    }
    .table()
    .unwrap();
    let json = serde_json::to_string(&table).unwrap();
    let values: Vec<f64> = serde_json::from_str(&json).unwrap();
    assert_eq!(values.len(), 16);
    // Index (s, t, a, b) -> 8s + 4t + 2a + b.
    assert_eq!(values[8 + 2 + 1], table.prob(1, 0, 1, 1));
    assert_eq!(serde_json::from_str::<BoxTable>(&json).unwrap(), table);
}

#[test]
fn malformed_box_json_is_rejected() {
    assert!(serde_json::from_str::<BoxTable>("[0.25, 0.25, 0.25]").is_err());
    let mut unnormalized = vec![0.25; 16];
    unnormalized[0] = 0.5;
    assert!(
        serde_json::from_str::<BoxTable>(&serde_json::to_string(&unnormalized).unwrap()).is_err()
    );
    // A = 0, B = s signals from Alice to Bob.
    let mut signaling = vec![0.0; 16];
    for s in 0..2 {
        for t in 0..2 {
            signaling[8 * s + 4 * t + s] = 1.0;
        }
    }
    // Loading accepts any normalized table so the audit can flag it.
    let loaded: BoxTable =
        serde_json::from_str(&serde_json::to_string(&signaling).unwrap()).unwrap();
    let report = no_signaling_check(&loaded);
    assert!(!report.pass);
    assert_eq!(report.max_deviation, 1.0);
    assert!(matches!(
        BoxTable::new(*loaded.probs()),
        Err(NicError::Signaling(_))
    ));
}

#[test]
fn cell_specs_serialize_with_kind_tags() {
    let spec = CellSpec::Asymmetric { e0: 0.9, e1: 0.5 };
    let json: Value = serde_json::to_value(spec).unwrap();
    assert_eq!(json["kind"], "asymmetric");
    assert_eq!(serde_json::from_value::<CellSpec>(json).unwrap(), spec);
    let explicit = CellSpec::Explicit {
        table: make_isotropic(0.3).unwrap(),
    };
    let back: CellSpec = serde_json::from_str(&serde_json::to_string(&explicit).unwrap()).unwrap();
    assert_eq!(back, explicit);
}

#[test]
fn trace_lines_are_self_describing() {
    let protocol = PyramidProtocol::uniform(3, CellSpec::Isotropic { e: 0.8 }).unwrap();
    let records = trace_pyramid(&protocol, 42, 10..15).unwrap();
    assert_eq!(records.len(), 5);
    for (offset, record) in records.iter().enumerate() {
        let episode = 10 + offset as u64;
        let line = record.to_json_line();
        assert!(!line.contains('\n'));
        let json: Value = serde_json::from_str(&line).unwrap();
        let keys: Vec<&str> = json
            .as_object()
            .unwrap()
            .keys()
            .map(String::as_str)
            .collect();
        for key in ["seed", "query", "target", "output", "errors"] {
            assert!(keys.contains(&key), "{key} missing in {line}");
        }
        assert_eq!(json["seed"], derive_seed(42, episode));
        assert_eq!(json["errors"].as_array().unwrap().len(), 3);
        // Each line replays the episode it came from.
        let replay = pyramid_episode(&protocol, 42, episode).unwrap();
        assert_eq!(*record, TraceRecord::new(derive_seed(42, episode), &replay));
        assert_eq!(serde_json::from_str::<TraceRecord>(&line).unwrap(), *record);
    }
}

#[test]
fn reports_round_trip_through_json() {
    let report = closed_form_report(10, FRAC_1_SQRT_2).unwrap();
    let back: ScoreReport = serde_json::from_str(&serde_json::to_string(&report).unwrap()).unwrap();
    assert_eq!(back, report);

    let ci = wilson_interval(70, 100, 0.95).unwrap();
    let json: Value = serde_json::to_value(ci).unwrap();
    assert_eq!(json["method"], "wilson");
    assert_eq!(
        serde_json::from_value::<ConfidenceInterval>(json).unwrap(),
        ci
    );

    let table = ContingencyTable::new(2, [[40, 10], [5, 45]]);
    let back: ContingencyTable =
        serde_json::from_str(&serde_json::to_string(&table).unwrap()).unwrap();
    assert_eq!(back, table);

    let probe = run_hard_copy_probe(4, 2, &ProbeSettings::new(2000, 1)).unwrap();
    let back: ProbeResult = serde_json::from_str(&serde_json::to_string(&probe).unwrap()).unwrap();
    assert_eq!(back, probe);

    let leak = query_leaky_control(4).unwrap();
    let json: Value = serde_json::to_value(&leak).unwrap();
    assert_eq!(json["mode"], "query_leaky");
    assert_eq!(
        serde_json::from_value::<AblationReport>(json).unwrap(),
        leak
    );
}

#[test]
fn interface_models_from_json() {
    let models: Vec<InterfaceModel> = serde_json::from_str(
        r#"[{"kind": "hard_bits", "m": 3},
            {"kind": "packed_precision", "d": 2, "q": 4},
            {"kind": "awgn_bpsk", "d": 2, "snr": 1.0},
            {"kind": "qubits", "m": 2}]"#,
    )
    .unwrap();
    let caps: Vec<f64> = models.iter().map(capacity_certificate).collect();
    assert_eq!(caps, vec![3.0, 8.0, 1.0, 2.0]);
    assert!(serde_json::from_str::<InterfaceModel>(
        r#"{"kind": "awgn_bpsk", "d": 2, "snr": -1.0}"#
    )
    .map(|m| m.validate().is_err())
    .unwrap_or(true));
}

#[test]
fn interval_methods_parse_from_cli_names() {
    for (name, method) in [
        ("wilson", IntervalMethod::Wilson),
        ("cp", IntervalMethod::ClopperPearson),
        ("hoeffding", IntervalMethod::Hoeffding),
    ] {
        assert_eq!(name.parse::<IntervalMethod>().unwrap(), method);
        assert_eq!(method.to_string(), name);
    }
    assert!(matches!(
        "bootstrap".parse::<IntervalMethod>(),
        Err(NicError::Invalid(_))
    ));
}
