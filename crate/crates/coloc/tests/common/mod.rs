#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use uwb_coloc::config::{load_config, parse_config, WorldConfig};

pub fn scenario_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/mixed_grid.json")
}

pub fn mixed_grid(overrides: &[&str]) -> WorldConfig {
    let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    load_config(&scenario_path(), &o).unwrap()
}

pub fn small_world(overrides: &[&str]) -> WorldConfig {
    let text = r#"{
        "schema_version": 1, "dt": 0.1, "duration": 5.0, "seed": 1,
        "agents": [
            {"id": 1, "waypoints": [[1, 1], [9, 1], [9, 9], [1, 9]], "speed": 1.0, "closed": true, "max_turn_rate": 2.0},
            {"id": 2, "waypoints": [[5, 5], [8, 5]], "speed": 0.5}
        ],
        "beacons": [{"id": 7, "position": [0, 0]}, {"id": 8, "position": [10, 10]}],
        "obstacles": [[[3, 3], [7, 3]]],
        "odometry_noise": {"sigma_v": 0.05, "sigma_omega": 0.02},
        "r": 0.01,
        "bias": {"phi_bar": 1.0, "phi": 0.25},
        "sensing_range": 20.0,
        "ranging_interval": 2
    }"#;
    let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    parse_config(text, "small_world", &o).unwrap()
}

/// CSV file as header-keyed rows of strings.
pub fn read_csv(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let headers = r.headers().unwrap().clone();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            headers.iter().zip(rec.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect()
        })
        .collect()
}

pub fn f(row: &BTreeMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap_or_else(|_| panic!("{key}: `{}`", row[key]))
}

pub fn u(row: &BTreeMap<String, String>, key: &str) -> u64 {
    row[key].parse().unwrap()
}

/// Every file below `dir`, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

#[derive(Debug, Default)]
pub struct Audit {
    pub belief: u64,
    pub bias: u64,
    /// Messages with no matching inter-agent measurement.
    pub orphan: u64,
    /// Measurement events answered by more than one message of one kind.
    pub duplicated: u64,
    /// Inter-agent measurements.
    pub agent_ranges: u64,
    /// Inter-agent measurements with a nonzero NLoS probability for `aucl`.
    pub nlos_possible: u64,
    /// Messages sent from a beacon, or in a step with no inter-agent measurement.
    pub beacon_or_idle: u64,
}

/// Cross-check a variant's message log against the measurement log of the run.
pub fn audit_messages(run_dir: &Path, variant: &str, p_nlos: impl Fn(f64) -> f64) -> Audit {
    let meas = read_csv(&run_dir.join("measurements.csv"));
    let msgs = read_csv(&run_dir.join(variant).join("messages.csv"));
    let mut events = BTreeSet::new();
    let mut steps = BTreeSet::new();
    let mut beacons = BTreeSet::new();
    let mut audit = Audit::default();
    for m in &meas {
        if m["target_kind"] == "agent" {
            events.insert((u(m, "step"), u(m, "target"), u(m, "observer")));
            steps.insert(u(m, "step"));
            audit.agent_ranges += 1;
            if p_nlos(f(m, "power_metric")) > 0.0 {
                audit.nlos_possible += 1;
            }
        } else {
            beacons.insert(u(m, "target"));
        }
    }
    let mut seen: BTreeMap<(u64, u64, u64, String), u64> = BTreeMap::new();
    for m in &msgs {
        let key = (u(m, "step"), u(m, "sender"), u(m, "receiver"));
        match m["type"].as_str() {
            "belief" => audit.belief += 1,
            "bias_correlation" => audit.bias += 1,
            other => panic!("unknown message type {other}"),
        }
        if !events.contains(&key) {
            audit.orphan += 1;
        }
        if beacons.contains(&key.1) || !steps.contains(&key.0) {
            audit.beacon_or_idle += 1;
        }
        let n = seen.entry((key.0, key.1, key.2, m["type"].clone())).or_default();
        *n += 1;
        if *n > 1 {
            audit.duplicated += 1;
        }
    }
    audit
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
