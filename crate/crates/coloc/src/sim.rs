//! Synthetic world: true trajectories, noisy odometry, and range synthesis.
//!
//! Randomness comes from three independent ChaCha8 streams of one seed, so
//! changing e.g. the number of measurements never perturbs the odometry.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use uwb_coloc_core::geometry::{line_of_sight, Segment};
use uwb_coloc_core::motion::{unicycle_step, Odometry};
use uwb_coloc_core::{wrap_angle, NodeId};

use crate::config::{AgentConfig, WorldConfig};

const STREAM_INITIAL: u64 = 0;
const STREAM_ODOMETRY: u64 = 1;
const STREAM_MEASUREMENT: u64 = 2;

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Truncated `N(mean, var)` restricted to `[0, ∞)`, by rejection.
pub fn sample_positive_bias(rng: &mut impl Rng, mean: f64, var: f64) -> f64 {
    let sd = var.sqrt();
    loop {
        let b = mean + sd * normal(rng);
        if b >= 0.0 {
            return b;
        }
    }
}

/// A node's true pose (m, m, rad).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn to_vector(self) -> DVector<f64> {
        DVector::from_vec(vec![self.x, self.y, self.theta])
    }
}

/// Waypoint follower driving one agent's true motion.
#[derive(Debug, Clone)]
struct Follower {
    waypoints: Vec<[f64; 2]>,
    next: usize,
    closed: bool,
    speed: f64,
    max_turn_rate: f64,
    done: bool,
}

impl Follower {
    fn new(a: &AgentConfig) -> (Self, Pose) {
        let start = a.waypoints[0];
        let theta = match a.waypoints.get(1) {
            Some(w) => (w[1] - start[1]).atan2(w[0] - start[0]),
            None => 0.0,
        };
        let f = Self {
            waypoints: a.waypoints.clone(),
            next: 1 % a.waypoints.len(),
            closed: a.closed,
            speed: a.speed,
            max_turn_rate: a.max_turn_rate,
            done: a.waypoints.len() < 2 || a.speed == 0.0,
        };
        (f, Pose { x: start[0], y: start[1], theta })
    }

    /// Commanded `(v, ω)` for the step starting at `pose`.
    fn command(&mut self, pose: &Pose, dt: f64) -> Odometry {
        if self.done {
            return Odometry { v: 0.0, omega: 0.0 };
        }
        // Switch early enough that the turn-rate limit can make the corner.
        let switch_radius = (self.speed * dt).max(self.speed / self.max_turn_rate);
        for _ in 0..self.waypoints.len() {
            let w = self.waypoints[self.next];
            if (w[0] - pose.x).hypot(w[1] - pose.y) > switch_radius {
                break;
            }
            if self.next + 1 == self.waypoints.len() && !self.closed {
                self.done = true;
                return Odometry { v: 0.0, omega: 0.0 };
            }
            self.next = (self.next + 1) % self.waypoints.len();
        }
        let w = self.waypoints[self.next];
        let bearing = (w[1] - pose.y).atan2(w[0] - pose.x);
        let omega = (wrap_angle(bearing - pose.theta) / dt).clamp(-self.max_turn_rate, self.max_turn_rate);
        Odometry { v: self.speed, omega }
    }
}

/// One synthesized range and everything needed to audit it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimMeasurement {
    pub step: u64,
    pub observer: NodeId,
    pub target: NodeId,
    pub target_is_beacon: bool,
    /// True distance (m).
    pub distance: f64,
    pub los: bool,
    /// Range noise draw (m).
    pub nu: f64,
    /// Bias draw (m); zero for LoS.
    pub bias: f64,
    pub z: f64,
    pub power_metric: f64,
}

/// Draw a range between two nodes at true distance `distance`. The noise is
/// drawn before the bias so LoS and NLoS realizations share `ν`.
pub fn synthesize_measurement(
    config: &WorldConfig,
    distance: f64,
    los: bool,
    rng: &mut impl Rng,
) -> (f64, f64, f64, f64) {
    let nu = config.r.sqrt() * normal(rng);
    let bias = if los {
        0.0
    } else {
        sample_positive_bias(rng, config.bias.phi_bar, config.bias.phi)
    };
    let mu = if los { config.power_metric.mu_los } else { config.power_metric.mu_nlos };
    let pm = mu + config.power_metric.sigma * normal(rng);
    let z = (distance + nu + bias).max(0.0);
    (nu, bias, z, pm)
}

#[derive(Debug, Clone)]
pub struct Simulation {
    /// Agent ids in ascending order; all per-agent vectors follow it.
    pub agents: Vec<NodeId>,
    /// `truth[k][a]`: pose of agent `a` after step `k` (`k = 0` is the start).
    pub truth: Vec<Vec<Pose>>,
    /// `odometry[k - 1][a]`: measured input driving step `k`.
    pub odometry: Vec<Vec<Odometry>>,
    /// Commanded input driving step `k`, same layout as `odometry`.
    pub commands: Vec<Vec<Odometry>>,
    /// `measurements[k - 1]`: ranges taken after step `k`.
    pub measurements: Vec<Vec<SimMeasurement>>,
    /// Initial estimates, drawn around the true start.
    pub initial: Vec<Pose>,
    /// Distance travelled by each agent (m).
    pub path_length: Vec<f64>,
}

impl Simulation {
    pub fn steps(&self) -> u64 {
        self.odometry.len() as u64
    }

    pub fn agent_index(&self, id: NodeId) -> Option<usize> {
        self.agents.binary_search(&id).ok()
    }
}

pub fn obstacles(config: &WorldConfig) -> Vec<Segment> {
    config.obstacles.iter().map(|o| Segment::new(o[0], o[1])).collect()
}

/// Run the world for `config.steps()` steps with `config.seed`.
pub fn simulate(config: &WorldConfig) -> Simulation {
    let mut agents: Vec<&AgentConfig> = config.agents.iter().collect();
    agents.sort_by_key(|a| a.id);
    let ids: Vec<NodeId> = agents.iter().map(|a| NodeId(a.id)).collect();
    let mut beacons = config.beacons.clone();
    beacons.sort_by_key(|b| b.id);
    let walls = obstacles(config);

    let mut rng_init = stream(config.seed, STREAM_INITIAL);
    let mut rng_odo = stream(config.seed, STREAM_ODOMETRY);
    let mut rng_meas = stream(config.seed, STREAM_MEASUREMENT);

    let (mut followers, mut poses): (Vec<_>, Vec<_>) = agents.iter().map(|a| Follower::new(a)).unzip();
    let iu = config.initial_uncertainty;
    let initial = poses
        .iter()
        .map(|p: &Pose| Pose {
            x: p.x + iu.sigma_position * normal(&mut rng_init),
            y: p.y + iu.sigma_position * normal(&mut rng_init),
            theta: wrap_angle(p.theta + iu.sigma_heading * normal(&mut rng_init)),
        })
        .collect();

    let steps = config.steps();
    let mut sim = Simulation {
        agents: ids.clone(),
        truth: vec![poses.clone()],
        odometry: Vec::with_capacity(steps as usize),
        commands: Vec::with_capacity(steps as usize),
        measurements: Vec::with_capacity(steps as usize),
        initial,
        path_length: vec![0.0; agents.len()],
    };
    let noise = config.odometry_noise;
    for k in 1..=steps {
        let mut odo = Vec::with_capacity(agents.len());
        let mut cmd = Vec::with_capacity(agents.len());
        for (a, (f, pose)) in followers.iter_mut().zip(poses.iter_mut()).enumerate() {
            let u = f.command(pose, config.dt);
            let next = unicycle_step(&pose.to_vector(), u, config.dt).expect("pose is three-dimensional");
            *pose = Pose {
                x: next[0],
                y: next[1],
                theta: wrap_angle(next[2]),
            };
            sim.path_length[a] += u.v.abs() * config.dt;
            cmd.push(u);
            odo.push(Odometry {
                v: u.v + noise.sigma_v * normal(&mut rng_odo),
                omega: u.omega + noise.sigma_omega * normal(&mut rng_odo),
            });
        }
        let mut meas = Vec::new();
        if k % config.ranging_interval == 0 {
            for (a, id) in ids.iter().enumerate() {
                let here = poses[a].position();
                // Candidate targets in ascending id order.
                let mut targets: Vec<(NodeId, [f64; 2], bool)> = ids
                    .iter()
                    .zip(&poses)
                    .filter(|(other, _)| *other != id)
                    .map(|(other, p)| (*other, p.position(), false))
                    .chain(beacons.iter().map(|b| (NodeId(b.id), b.position, true)))
                    .collect();
                targets.sort_by_key(|t| t.0);
                let in_range = targets.into_iter().filter_map(|(t, pos, is_beacon)| {
                    let d = (pos[0] - here[0]).hypot(pos[1] - here[1]);
                    (d <= config.sensing_range).then_some((t, pos, is_beacon, d))
                });
                for (target, pos, is_beacon, distance) in in_range.take(config.max_measurements_per_step) {
                    let los = line_of_sight(here, pos, &walls);
                    let (nu, bias, z, pm) = synthesize_measurement(config, distance, los, &mut rng_meas);
                    meas.push(SimMeasurement {
                        step: k,
                        observer: *id,
                        target,
                        target_is_beacon: is_beacon,
                        distance,
                        los,
                        nu,
                        bias,
                        z,
                        power_metric: pm,
                    });
                }
            }
        }
        sim.truth.push(poses.clone());
        sim.odometry.push(odo);
        sim.commands.push(cmd);
        sim.measurements.push(meas);
    }
    sim
}
