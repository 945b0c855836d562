//! Asteroids-style ship control: reach the target and come to rest there.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::program::Fault;
use crate::runner::ProgramRunner;

pub const ACTIONS: [&str; 4] = ["NO_OP", "THRUST", "ROTATE_LEFT", "ROTATE_RIGHT"];

/// Seed of the fixed five-episode evaluation set.
pub const EPISODE_SET_SEED: u64 = 0x5EED_D21E;
pub const EPISODE_COUNT: usize = 5;
pub const STOP_WINDOW: usize = 5;
pub const STOP_SPEED: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VehicleError {
    #[error("action `{0}` is not one of NO_OP, THRUST, ROTATE_LEFT, ROTATE_RIGHT")]
    InvalidAction(String),
    #[error("omega sweep needs at least one rotation speed")]
    EmptySweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Vec2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShipState {
    pub position: Vec2,
    pub velocity: Vec2,
    /// Degrees in [0, 360).
    pub heading: f64,
}

impl ShipState {
    pub fn at_rest(position: Vec2, heading: f64) -> Self {
        Self {
            position,
            velocity: Vec2::ZERO,
            heading: heading.rem_euclid(360.0),
        }
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }
}

/// Physical constants shared by every episode of a task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Physics {
    /// Rotation speed in degrees per second.
    pub omega: f64,
    pub thrust_accel: f64,
    /// Fraction of velocity lost per step.
    pub drag: f64,
    pub dt: f64,
}

impl Physics {
    pub fn with_omega(omega: f64) -> Self {
        Self {
            omega,
            thrust_accel: 1.0,
            drag: 0.05,
            dt: 1.0,
        }
    }

    /// Terminal speed under permanent thrust.
    pub fn speed_bound(&self) -> f64 {
        self.thrust_accel * self.dt * (1.0 - self.drag) / self.drag
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleTask {
    pub physics: Physics,
    pub start: ShipState,
    pub target: Vec2,
    pub steps: usize,
    pub tolerance: f64,
}

impl VehicleTask {
    pub fn new(physics: Physics, start: ShipState, target: Vec2) -> Self {
        Self {
            physics,
            start,
            target,
            steps: 101,
            tolerance: 10.0,
        }
    }
}

/// One transition. Rotation happens before thrust; drag applies before the
/// position update.
pub fn vehicle_step(
    state: &ShipState,
    action: &str,
    physics: &Physics,
) -> Result<ShipState, VehicleError> {
    let mut next = *state;
    match action {
        "NO_OP" => {}
        "ROTATE_LEFT" => {
            next.heading = (next.heading - physics.omega * physics.dt).rem_euclid(360.0)
        }
        "ROTATE_RIGHT" => {
            next.heading = (next.heading + physics.omega * physics.dt).rem_euclid(360.0)
        }
        "THRUST" => {
            let rad = next.heading.to_radians();
            next.velocity.x += physics.thrust_accel * rad.cos() * physics.dt;
            next.velocity.y += physics.thrust_accel * rad.sin() * physics.dt;
        }
        other => return Err(VehicleError::InvalidAction(other.to_string())),
    }
    let keep = 1.0 - physics.drag;
    next.velocity.x *= keep;
    next.velocity.y *= keep;
    next.position.x += next.velocity.x * physics.dt;
    next.position.y += next.velocity.y * physics.dt;
    Ok(next)
}

/// The fixed evaluation set for a rotation speed: five start/target pairs
/// 80 to 200 units apart, ships at rest with random headings.
pub fn episode_set(omega: f64) -> Vec<VehicleTask> {
    let mut rng = ChaCha8Rng::seed_from_u64(EPISODE_SET_SEED);
    (0..EPISODE_COUNT)
        .map(|_| {
            let start = Vec2::new(
                rng.random_range(-100.0..100.0),
                rng.random_range(-100.0..100.0),
            );
            let dist = rng.random_range(80.0..=200.0);
            let bearing: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let target = Vec2::new(
                start.x + dist * bearing.cos(),
                start.y + dist * bearing.sin(),
            );
            let heading = rng.random_range(0.0..360.0);
            VehicleTask::new(
                Physics::with_omega(omega),
                ShipState::at_rest(start, heading),
                target,
            )
        })
        .collect()
}

pub fn payload(state: &ShipState, task: &VehicleTask, step: usize) -> Value {
    json!({
        "ship": {
            "pos": [state.position.x, state.position.y],
            "vel": [state.velocity.x, state.velocity.y],
            "heading": state.heading,
        },
        "target": [task.target.x, task.target.y],
        "step": step,
        "omega": task.physics.omega,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveEpisode {
    pub actions: Vec<String>,
    /// Distance to target after each step.
    pub distances: Vec<f64>,
    pub min_distance: f64,
    pub final_speed: f64,
    pub stopped: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveReport {
    pub omega: f64,
    pub episodes: Vec<DriveEpisode>,
    pub min_distances: Vec<f64>,
    /// Mean of the per-episode minimum distances.
    pub d_avg: f64,
    /// True when the ship stopped within tolerance in every episode.
    pub success: bool,
}

impl DriveReport {
    /// Positive fitness that grows as the mean minimum distance shrinks.
    pub fn fitness(&self) -> f64 {
        1.0 / (1.0 + self.d_avg)
    }
}

/// Drives one episode. A policy fault ends the episode; the remaining steps
/// coast under NO_OP so the distance record always spans the full episode.
pub fn drive_episode(
    task: &VehicleTask,
    runner: &mut dyn ProgramRunner,
) -> (DriveEpisode, Option<Fault>) {
    let mut state = task.start;
    let mut actions = Vec::with_capacity(task.steps);
    let mut distances = Vec::with_capacity(task.steps);
    let mut fault = None;
    for step in 0..task.steps {
        let action = if fault.is_none() {
            match runner.act(step as u64, &payload(&state, task, step)) {
                Ok(tok) if ACTIONS.contains(&tok.as_str()) => tok,
                Ok(tok) => {
                    fault = Some(Fault::invalid_output(format!(
                        "action `{tok}` is not valid"
                    )));
                    "NO_OP".to_string()
                }
                Err(f) => {
                    fault = Some(f);
                    "NO_OP".to_string()
                }
            }
        } else {
            "NO_OP".to_string()
        };
        state = vehicle_step(&state, &action, &task.physics).expect("validated action");
        if fault.is_none() {
            actions.push(action);
        }
        distances.push(state.position.dist(task.target));
    }
    let min_distance = distances.iter().copied().fold(f64::INFINITY, f64::min);
    let tail = &distances[distances.len().saturating_sub(STOP_WINDOW)..];
    let stopped = fault.is_none()
        && distances.len() >= STOP_WINDOW
        && tail.iter().all(|&d| d <= task.tolerance)
        && state.speed() < STOP_SPEED;
    let ep = DriveEpisode {
        actions,
        distances,
        min_distance,
        final_speed: state.speed(),
        stopped,
        error: fault.as_ref().map(|f| f.to_string()),
    };
    (ep, fault)
}

/// Evaluates a loaded driver on the given episodes (normally
/// [`episode_set`]). A failure on the first action of the first episode
/// marks the program non-executable.
pub fn evaluate_driver(
    runner: &mut dyn ProgramRunner,
    omega: f64,
    tasks: &[VehicleTask],
) -> Result<DriveReport, Fault> {
    let mut episodes = Vec::with_capacity(tasks.len());
    for (i, task) in tasks.iter().enumerate() {
        let (ep, fault) = drive_episode(task, runner);
        if let Some(f) = fault {
            if i == 0 && ep.actions.is_empty() {
                return Err(f);
            }
            if matches!(
                f.status,
                crate::program::ExecStatus::Crash | crate::program::ExecStatus::Timeout
            ) {
                runner.recover();
            }
        }
        episodes.push(ep);
    }
    let min_distances: Vec<f64> = episodes.iter().map(|e| e.min_distance).collect();
    let d_avg = if min_distances.is_empty() {
        0.0
    } else {
        min_distances.iter().sum::<f64>() / min_distances.len() as f64
    };
    Ok(DriveReport {
        omega,
        success: !episodes.is_empty() && episodes.iter().all(|e| e.stopped),
        episodes,
        min_distances,
        d_avg,
    })
}

/// Sweep row: best distance per rotation speed plus their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub label: String,
    pub omegas: Vec<f64>,
    /// Best mean minimum distance per omega; `None` when nothing executed.
    pub distances: Vec<Option<f64>>,
    pub d_avg: Option<f64>,
}

/// Runs `search` once per omega and tabulates the resulting distances.
pub fn sweep_omega<E>(
    label: &str,
    omegas: &[f64],
    mut search: impl FnMut(f64) -> Result<Option<f64>, E>,
) -> Result<SweepRow, SweepError<E>> {
    if omegas.is_empty() {
        return Err(SweepError::Empty(VehicleError::EmptySweep));
    }
    let mut distances = Vec::with_capacity(omegas.len());
    for &omega in omegas {
        distances.push(search(omega).map_err(SweepError::Search)?);
    }
    let present: Vec<f64> = distances.iter().flatten().copied().collect();
    let d_avg = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
    Ok(SweepRow {
        label: label.to_string(),
        omegas: omegas.to_vec(),
        distances,
        d_avg,
    })
}

#[derive(Debug, Error)]
pub enum SweepError<E> {
    #[error(transparent)]
    Empty(VehicleError),
    #[error("search failed: {0}")]
    Search(E),
}

pub fn sweep_markdown(rows: &[SweepRow]) -> String {
    let Some(first) = rows.first() else {
        return String::new();
    };
    let mut out = String::from("| model |");
    for w in &first.omegas {
        out.push_str(&format!(" ω={w} |"));
    }
    out.push_str(" D_avg |\n|---|");
    for _ in &first.omegas {
        out.push_str("---|");
    }
    out.push_str("---|\n");
    let cell = |d: &Option<f64>| d.map_or("-".to_string(), |v| format!("{v:.2}"));
    for row in rows {
        out.push_str(&format!("| {} |", row.label));
        for d in &row.distances {
            out.push_str(&format!(" {} |", cell(d)));
        }
        out.push_str(&format!(" {} |\n", cell(&row.d_avg)));
    }
    out
}
