//! Runs every filter variant over one simulated world and writes the results.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use uwb_coloc_core::discriminator::{deterministic_mode, nlos_probability, SigmoidParams};
use uwb_coloc_core::imm::{process_measurement, ImmConfig, ImmTarget};
use uwb_coloc_core::motion::{propagate_dead_reckoning, OdometryNoise};
use uwb_coloc_core::skf_nlos::predict_bias;
use uwb_coloc_core::{Belief, BiasBook, BiasModel, Covariance, ModeProbabilities, StateVector};

use crate::config::WorldConfig;
use crate::network::{write_messages_csv, MessageKind, MessageRecord, Network};
use crate::sim::{simulate, Pose, SimMeasurement, Simulation};

/// Slack allowed when checking that an update does not grow `det P`.
pub const DET_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantId {
    /// Odometry only.
    DrOnly,
    /// Every range treated as LoS.
    NaiveUwb,
    /// Hard LoS/NLoS decision from a power-metric threshold.
    Deterministic,
    /// Soft mode probabilities through the full IMM.
    Aucl,
    /// As `Aucl` with the compact NLoS update (no bias-book exchange).
    AuclCompact,
}

impl VariantId {
    pub const ALL: [VariantId; 5] = [
        VariantId::DrOnly,
        VariantId::NaiveUwb,
        VariantId::Deterministic,
        VariantId::Aucl,
        VariantId::AuclCompact,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VariantId::DrOnly => "dr_only",
            VariantId::NaiveUwb => "naive_uwb",
            VariantId::Deterministic => "deterministic",
            VariantId::Aucl => "aucl",
            VariantId::AuclCompact => "aucl_compact",
        }
    }

    fn uses_ranges(self) -> bool {
        self != VariantId::DrOnly
    }
}

impl fmt::Display for VariantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VariantId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VariantId::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown variant `{s}`"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{variant}: step {step}, agent {agent}: {message}")]
    Numerical {
        variant: VariantId,
        step: u64,
        agent: u32,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// One row of a per-agent CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentRow {
    pub step: u64,
    pub time: f64,
    pub truth: Pose,
    pub estimate: [f64; 3],
    pub pos_error: f64,
    pub nees: f64,
    /// Mean posterior mode probabilities of the ranges processed this step.
    pub modes: Option<(f64, f64)>,
    pub trace_p: f64,
}

pub const AGENT_HEADER: [&str; 13] = [
    "step",
    "time",
    "true_x",
    "true_y",
    "true_theta",
    "est_x",
    "est_y",
    "est_theta",
    "pos_error",
    "nees",
    "p_los",
    "p_nlos",
    "trace_p",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    /// `sqrt(mean over agents of final position error²)` (m).
    pub final_rmse: Option<f64>,
    /// Final position error per agent, ascending id (m).
    pub final_pos_error: Vec<f64>,
    /// Mean over closed-path agents of final error / path length (%).
    pub loop_closure_pct: Option<f64>,
    /// Mean NEES over all agents and steps.
    pub mean_nees: Option<f64>,
    pub measurements_processed: u64,
    /// Updates rejected by the filter (degenerate geometry, numerical breakdown).
    pub updates_failed: u64,
    /// Inter-agent ranges whose exchange failed.
    pub exchanges_dropped: u64,
    pub belief_messages: u64,
    pub bias_messages: u64,
    pub message_bytes: u64,
    pub det_checks: u64,
    pub det_violations: u64,
    /// Violations split by update: LoS branch, NLoS branch, combined IMM output.
    pub det_violations_by_kind: [u64; 3],
    /// Largest `det P⁺ − det P⁻` seen.
    pub max_det_increase: f64,
    /// Largest `det P⁺ / det P⁻` seen.
    pub max_det_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub steps: u64,
    pub dt: f64,
    pub config_hash: String,
    pub scenario_hash: String,
    pub agents: Vec<u32>,
    pub path_length: Vec<f64>,
    pub variants: BTreeMap<VariantId, VariantSummary>,
}

#[derive(Debug, Clone)]
pub struct VariantRun {
    pub variant: VariantId,
    /// `rows[a]`: rows of agent `a` for steps `1..=N`.
    pub rows: Vec<Vec<AgentRow>>,
    pub messages: Vec<MessageRecord>,
    pub summary: VariantSummary,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub sim: Simulation,
    pub variants: Vec<VariantRun>,
    pub summary: RunSummary,
}

fn initial_belief(config: &WorldConfig, pose: &Pose) -> Belief {
    let iu = config.initial_uncertainty;
    let sp = iu.sigma_position * iu.sigma_position;
    let sh = iu.sigma_heading * iu.sigma_heading;
    Belief::new(
        StateVector::pose(pose.x, pose.y, pose.theta).expect("finite initial pose"),
        Covariance::from_diagonal(&[sp, sp, sh]).expect("positive initial covariance"),
        0,
    )
    .expect("three-dimensional belief")
}

/// `(x − x̂)ᵀ P⁻¹ (x − x̂)` with a wrapped heading error.
pub fn nees(belief: &Belief, truth: &Pose) -> f64 {
    let t = StateVector::pose(truth.x, truth.y, truth.theta).expect("finite truth");
    let e = t.error_from(&belief.x_hat);
    match belief.p.matrix().clone().cholesky() {
        Some(ch) => e.dot(&ch.solve(&e)),
        None => match belief.p.matrix().clone().try_inverse() {
            Some(inv) => e.dot(&(inv * &e)),
            None => f64::NAN,
        },
    }
}

fn det(p: &DMatrix<f64>) -> f64 {
    p.determinant()
}

/// Mode probabilities a variant assigns to a measurement.
pub fn variant_modes(variant: VariantId, config: &WorldConfig, pm: f64) -> ModeProbabilities {
    let s = config.filter.sigmoid;
    match variant {
        VariantId::DrOnly | VariantId::NaiveUwb => ModeProbabilities::LOS,
        VariantId::Deterministic => {
            deterministic_mode(pm, config.filter.deterministic_threshold).expect("finite power metric")
        }
        VariantId::Aucl | VariantId::AuclCompact => {
            let params = SigmoidParams::new(s.a, s.b, s.c).expect("validated sigmoid");
            nlos_probability(pm, &params).expect("finite power metric")
        }
    }
}

#[derive(Default)]
struct DetTracker {
    checks: u64,
    violations: [u64; 3],
    max_increase: Option<f64>,
    max_ratio: Option<f64>,
}

impl DetTracker {
    /// `kind`: 0 LoS branch, 1 NLoS branch, 2 combined.
    fn check(&mut self, kind: usize, before: f64, after: &Covariance) {
        let a = det(after.matrix());
        let d = a - before;
        self.checks += 1;
        if d > DET_TOLERANCE {
            self.violations[kind] += 1;
        }
        self.max_increase = Some(self.max_increase.map_or(d, |m| m.max(d)));
        self.max_ratio = Some(self.max_ratio.map_or(a / before, |m| m.max(a / before)));
    }
}

/// Run one variant over a simulated world.
pub fn run_variant(config: &WorldConfig, sim: &Simulation, variant: VariantId) -> Result<VariantRun, RunError> {
    let ids = &sim.agents;
    let n_agents = ids.len();
    let noise = OdometryNoise {
        sigma_v: config.odometry_noise.sigma_v,
        sigma_omega: config.odometry_noise.sigma_omega,
    };
    let bias = BiasModel::new(config.bias.phi_bar, config.bias.phi, config.bias.handling.into())
        .expect("validated bias model");
    let imm = ImmConfig {
        combine_rule: config.filter.combine_rule.into(),
        compact: variant == VariantId::AuclCompact,
        ..ImmConfig::default()
    };
    let numerical = |step: u64, a: usize, message: String| RunError::Numerical {
        variant,
        step,
        agent: ids[a].0,
        message,
    };

    let mut beliefs: Vec<Belief> = sim.initial.iter().map(|p| initial_belief(config, p)).collect();
    let mut books: Vec<BiasBook> = ids.iter().map(|id| BiasBook::zeros(*id, ids.iter().copied(), 3)).collect();
    let mut network = Network::new(config.comm_range());
    let mut rows: Vec<Vec<AgentRow>> = vec![Vec::with_capacity(sim.steps() as usize); n_agents];
    let mut summary = VariantSummary::default();
    let mut dets = DetTracker::default();

    for k in 1..=sim.steps() {
        let truth = &sim.truth[k as usize];
        for a in 0..n_agents {
            let (bel, f) = propagate_dead_reckoning(&beliefs[a], sim.odometry[k as usize - 1][a], noise, config.dt)
                .map_err(|e| numerical(k, a, e.to_string()))?;
            books[a] = predict_bias(&books[a], &f).map_err(|e| numerical(k, a, e.to_string()))?;
            beliefs[a] = bel;
        }
        network.begin_step(k);
        for a in 0..n_agents {
            network.publish(ids[a], &beliefs[a], &books[a], truth[a].position());
        }

        let mut mode_sums = vec![(0.0, 0.0, 0u32); n_agents];
        let measurements: &[SimMeasurement] = if variant.uses_ranges() {
            &sim.measurements[k as usize - 1]
        } else {
            &[]
        };
        for m in measurements {
            let a = sim.agent_index(m.observer).expect("observer is an agent");
            let modes = variant_modes(variant, config, m.power_metric);
            let exchange;
            let target_belief;
            let target_book;
            let target = if m.target_is_beacon {
                let position = config
                    .beacons
                    .iter()
                    .find(|b| b.id == m.target.0)
                    .expect("beacon exists")
                    .position;
                ImmTarget::Beacon { id: m.target, position }
            } else {
                let needs_book = !imm.compact && modes.p_nlos > 0.0;
                exchange = match network.request_exchange(m.observer, m.target, needs_book) {
                    Ok(ex) => ex,
                    Err(_) => {
                        summary.exchanges_dropped += 1;
                        continue;
                    }
                };
                target_belief = exchange.to_belief();
                target_book = exchange.bias.as_ref().map(|b| b.to_book(3));
                ImmTarget::Agent {
                    id: m.target,
                    belief: &target_belief,
                    book: target_book.as_ref(),
                }
            };
            let prior = &beliefs[a];
            let det_prior = det(prior.p.matrix());
            match process_measurement(prior, &bias, &books[a], &target, m.z, modes, config.r, &imm) {
                Ok(step) => {
                    let d = &step.diagnostics;
                    for (kind, branch) in [&d.los, &d.nlos].into_iter().enumerate() {
                        if let Some(b) = branch {
                            dets.check(kind, det_prior, &b.belief.p);
                        }
                    }
                    dets.check(2, det_prior, &step.belief.p);
                    let s = &mut mode_sums[a];
                    s.0 += d.posterior_modes.p_los;
                    s.1 += d.posterior_modes.p_nlos;
                    s.2 += 1;
                    summary.measurements_processed += 1;
                    beliefs[a] = step.belief;
                    books[a] = step.book;
                }
                Err(_) => summary.updates_failed += 1,
            }
        }

        for a in 0..n_agents {
            let b = &beliefs[a];
            let x = b.x_hat.as_vector();
            let t = truth[a];
            let nees = nees(b, &t);
            if !nees.is_finite() || x.iter().any(|v| !v.is_finite()) {
                return Err(numerical(k, a, "belief became non-finite or singular".into()));
            }
            let (sl, sn, count) = mode_sums[a];
            rows[a].push(AgentRow {
                step: k,
                time: k as f64 * config.dt,
                truth: t,
                estimate: [x[0], x[1], x[2]],
                pos_error: (x[0] - t.x).hypot(x[1] - t.y),
                nees,
                modes: (count > 0).then(|| (sl / count as f64, sn / count as f64)),
                trace_p: b.p.trace(),
            });
        }
    }

    let messages = network.into_log();
    for m in &messages {
        match m.kind {
            MessageKind::Belief => summary.belief_messages += 1,
            MessageKind::BiasCorrelation => summary.bias_messages += 1,
        }
        summary.message_bytes += m.payload_bytes as u64;
    }
    summary.det_checks = dets.checks;
    summary.det_violations = dets.violations.iter().sum();
    summary.det_violations_by_kind = dets.violations;
    summary.max_det_increase = dets.max_increase.unwrap_or(0.0);
    summary.max_det_ratio = dets.max_ratio.unwrap_or(1.0);
    fill_metrics(config, sim, &rows, &mut summary);
    Ok(VariantRun {
        variant,
        rows,
        messages,
        summary,
    })
}

fn fill_metrics(config: &WorldConfig, sim: &Simulation, rows: &[Vec<AgentRow>], summary: &mut VariantSummary) {
    if sim.steps() == 0 {
        return;
    }
    summary.final_pos_error = rows.iter().map(|r| r.last().expect("one row per step").pos_error).collect();
    let n = summary.final_pos_error.len() as f64;
    summary.final_rmse = Some((summary.final_pos_error.iter().map(|e| e * e).sum::<f64>() / n).sqrt());
    let mut agents: Vec<_> = config.agents.iter().collect();
    agents.sort_by_key(|a| a.id);
    let loops: Vec<f64> = agents
        .iter()
        .enumerate()
        .filter(|(a, cfg)| cfg.closed && sim.path_length[*a] > 0.0)
        .map(|(a, _)| summary.final_pos_error[a] / sim.path_length[a] * 100.0)
        .collect();
    if !loops.is_empty() {
        summary.loop_closure_pct = Some(loops.iter().sum::<f64>() / loops.len() as f64);
    }
    let (sum, count) = rows
        .iter()
        .flatten()
        .fold((0.0, 0usize), |(s, c), r| (s + r.nees, c + 1));
    summary.mean_nees = Some(sum / count as f64);
}

/// Simulate the world once and run every configured variant on it.
pub fn execute(config: &WorldConfig) -> Result<RunOutput, RunError> {
    let sim = simulate(config);
    let mut variants = Vec::with_capacity(config.variants.len());
    let mut seen = Vec::new();
    for v in &config.variants {
        if seen.contains(v) {
            continue;
        }
        seen.push(*v);
        variants.push(run_variant(config, &sim, *v)?);
    }
    let summary = RunSummary {
        seed: config.seed,
        steps: sim.steps(),
        dt: config.dt,
        config_hash: config.hash(),
        scenario_hash: config.scenario_hash(),
        agents: sim.agents.iter().map(|a| a.0).collect(),
        path_length: sim.path_length.clone(),
        variants: variants.iter().map(|v| (v.variant, v.summary.clone())).collect(),
    };
    Ok(RunOutput { sim, variants, summary })
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> RunError + '_ {
    move |e| RunError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

fn write_csv<F>(path: &Path, header: &[&str], mut body: F) -> Result<(), RunError>
where
    F: FnMut(&mut csv::Writer<BufWriter<fs::File>>) -> csv::Result<()>,
{
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(header).map_err(csv_err(path))?;
    body(&mut w).map_err(csv_err(path))?;
    w.flush().map_err(io_err(path))
}

/// Write all run artifacts under `out`.
pub fn write_outputs(config: &WorldConfig, run: &RunOutput, out: &Path) -> Result<(), RunError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let sim = &run.sim;

    let path = out.join("config.json");
    let text = serde_json::to_string_pretty(config).expect("config serializes");
    fs::write(&path, text + "\n").map_err(io_err(&path))?;

    write_csv(&out.join("truth.csv"), &["step", "time", "agent", "x", "y", "theta"], |w| {
        for (k, poses) in sim.truth.iter().enumerate() {
            for (a, p) in poses.iter().enumerate() {
                w.write_record([
                    k.to_string(),
                    num(k as f64 * config.dt),
                    sim.agents[a].0.to_string(),
                    num(p.x),
                    num(p.y),
                    num(p.theta),
                ])?;
            }
        }
        Ok(())
    })?;

    write_csv(
        &out.join("odometry.csv"),
        &["step", "agent", "v", "omega", "true_v", "true_omega"],
        |w| {
            for (k, (odo, cmd)) in sim.odometry.iter().zip(&sim.commands).enumerate() {
                for (a, (u, c)) in odo.iter().zip(cmd).enumerate() {
                    w.write_record([
                        (k + 1).to_string(),
                        sim.agents[a].0.to_string(),
                        num(u.v),
                        num(u.omega),
                        num(c.v),
                        num(c.omega),
                    ])?;
                }
            }
            Ok(())
        },
    )?;

    write_csv(
        &out.join("initial.csv"),
        &["agent", "x", "y", "theta", "var_x", "var_y", "var_theta"],
        |w| {
            let iu = config.initial_uncertainty;
            for (a, p) in sim.initial.iter().enumerate() {
                w.write_record([
                    sim.agents[a].0.to_string(),
                    num(p.x),
                    num(p.y),
                    num(p.theta),
                    num(iu.sigma_position * iu.sigma_position),
                    num(iu.sigma_position * iu.sigma_position),
                    num(iu.sigma_heading * iu.sigma_heading),
                ])?;
            }
            Ok(())
        },
    )?;

    write_csv(
        &out.join("measurements.csv"),
        &[
            "step",
            "observer",
            "target",
            "target_kind",
            "distance",
            "los",
            "nu",
            "bias",
            "z",
            "power_metric",
        ],
        |w| {
            for m in sim.measurements.iter().flatten() {
                w.write_record([
                    m.step.to_string(),
                    m.observer.0.to_string(),
                    m.target.0.to_string(),
                    if m.target_is_beacon { "beacon" } else { "agent" }.to_string(),
                    num(m.distance),
                    (m.los as u8).to_string(),
                    num(m.nu),
                    num(m.bias),
                    num(m.z),
                    num(m.power_metric),
                ])?;
            }
            Ok(())
        },
    )?;

    for v in &run.variants {
        let dir = out.join(v.variant.as_str());
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        for (a, rows) in v.rows.iter().enumerate() {
            let path = dir.join(format!("agent_{}.csv", sim.agents[a].0));
            write_csv(&path, &AGENT_HEADER, |w| {
                for r in rows {
                    w.write_record([
                        r.step.to_string(),
                        num(r.time),
                        num(r.truth.x),
                        num(r.truth.y),
                        num(r.truth.theta),
                        num(r.estimate[0]),
                        num(r.estimate[1]),
                        num(r.estimate[2]),
                        num(r.pos_error),
                        num(r.nees),
                        opt(r.modes.map(|m| m.0)),
                        opt(r.modes.map(|m| m.1)),
                        num(r.trace_p),
                    ])?;
                }
                Ok(())
            })?;
        }
        let path = dir.join("messages.csv");
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        write_messages_csv(BufWriter::new(file), &v.messages).map_err(csv_err(&path))?;
    }

    let path = out.join("summary.json");
    let mut file = BufWriter::new(fs::File::create(&path).map_err(io_err(&path))?);
    serde_json::to_writer_pretty(&mut file, &run.summary).map_err(|e| RunError::Io {
        path: path.clone(),
        source: e.into(),
    })?;
    writeln!(file).and_then(|_| file.flush()).map_err(io_err(&path))
}

/// Simulate, filter, and write everything under `out`.
pub fn run(config: &WorldConfig, out: &Path) -> Result<RunSummary, RunError> {
    let output = execute(config)?;
    write_outputs(config, &output, out)?;
    Ok(output.summary)
}
