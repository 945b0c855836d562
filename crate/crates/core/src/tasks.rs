//! Search tasks: what to ask the model for, how to smoke-test a candidate
//! and how to score it.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::grid::{self, FitnessReport, GameId, GameSpec};
use crate::env::maze::{self, GenReport, MazeGrid};
use crate::env::vehicle::{self, DriveReport, VehicleTask};
use crate::program::Fault;
use crate::prompt::{repair_prompt, PromptBundle, PromptKind};
use crate::runner::ProgramRunner;
use crate::sandbox::protocol::GenerateParams;
use crate::search::SearchState;

pub const DEFAULT_TRACE_LIMIT: usize = 200;
pub const DEFAULT_MAZE_COUNT: usize = 5;
pub const DEFAULT_MAZE_SIZE: (usize, usize) = (20, 20);

const SYSTEM_TEXT: &str =
    "You are an expert Python programmer. You write complete, self-contained \
programs that use only the Python standard library. Reply with the full program in a single \
```python code block.";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TaskError {
    #[error("unknown task `{0}` (expected breakout, freeway, asterix, vehicle or maze)")]
    UnknownTask(String),
    #[error("no incumbent program to improve")]
    MissingIncumbent,
}

/// Task-specific detail of one evaluation, fed back into improve prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EvaluationResult {
    Grid(FitnessReport),
    Vehicle(DriveReport),
    Maze(GenReport),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub fitness: f64,
    pub result: EvaluationResult,
}

pub trait Task: Send + Sync {
    fn name(&self) -> &str;

    /// Function the runner calls.
    fn entry(&self) -> &str;

    fn initial_prompt(&self) -> PromptBundle;

    /// Improve prompt built around the incumbent of `state`.
    fn improve_prompt(&self, state: &SearchState) -> Result<PromptBundle, TaskError>;

    /// Short task reminder placed at the top of repair prompts.
    fn repair_summary(&self) -> String;

    /// One cheap invocation on the task's initial input. The program must
    /// already be loaded.
    fn smoke(&self, runner: &mut dyn ProgramRunner) -> Result<(), Fault>;

    /// Full evaluation of a loaded program. `seed` is the trial seed and
    /// `episodes` the episode budget for tasks that use one.
    fn evaluate(
        &self,
        runner: &mut dyn ProgramRunner,
        seed: u64,
        episodes: usize,
    ) -> Result<Evaluation, Fault>;

    /// Episode budget when the configuration does not override it.
    fn default_episodes(&self) -> usize;

    fn repair(&self, source: &str, error: &str) -> PromptBundle {
        repair_prompt(SYSTEM_TEXT, &self.repair_summary(), source, error)
    }
}

/// Looks a task up by name. `omega` configures the vehicle task.
pub fn task_by_name(name: &str, omega: f64) -> Result<Box<dyn Task>, TaskError> {
    match name.to_ascii_lowercase().as_str() {
        "vehicle" => Ok(Box::new(DriveTask::new(omega))),
        "maze" => Ok(Box::new(MazeTask::default())),
        other => other
            .parse::<GameId>()
            .map(|g| Box::new(GridTask::new(g)) as Box<dyn Task>)
            .map_err(|_| TaskError::UnknownTask(name.to_string())),
    }
}

fn incumbent(state: &SearchState) -> Result<(&str, f64), TaskError> {
    state
        .best_program
        .as_ref()
        .map(|p| (p.source.as_str(), state.best_fitness))
        .ok_or(TaskError::MissingIncumbent)
}

fn fence(out: &mut String, lang: &str, body: &str) {
    let _ = writeln!(out, "```{lang}\n{}\n```", body.trim_end());
}

fn game_rules(game: GameId) -> &'static str {
    match game {
        GameId::Breakout => {
            "Mini-Breakout. You control a one-cell paddle on the bottom row. A ball moves \
diagonally one cell per tick and bounces off the side walls, the ceiling, the paddle and bricks. \
Three rows of bricks sit near the top; each brick the ball hits disappears and gives one point. \
The trail cell shows where the ball was on the previous tick, so the two together reveal its \
direction. If the ball reaches the bottom row where the paddle is not, the game ends. When every \
brick is gone, a fresh wall of bricks appears."
        }
        GameId::Freeway => {
            "Freeway. You control a chicken that starts at the bottom row and must cross a road to \
reach the top row. Rows 1 to 8 are lanes, each with one car moving horizontally at its own \
speed; neighbouring lanes move in opposite directions and cars wrap around the edges. Reaching \
the top row gives one point and returns the chicken to the bottom. Being hit by a car sends the \
chicken back to the bottom row without any penalty other than lost time."
        }
        GameId::Asterix => {
            "Asterix. You control a player that moves one cell per tick in four directions within \
rows 1 to 8. Every few ticks a new object enters from the left or right edge on an empty row and \
travels horizontally across the screen. Objects are either gold or enemies. Touching gold collects \
it for one point; touching an enemy ends the game."
        }
    }
}

fn game_objective(game: GameId) -> &'static str {
    match game {
        GameId::Breakout => "Maximise the number of bricks destroyed before the ball is lost.",
        GameId::Freeway => "Maximise the number of successful crossings within the time limit.",
        GameId::Asterix => "Collect as much gold as possible while staying away from enemies.",
    }
}

fn game_labels(game: GameId) -> &'static str {
    match game {
        GameId::Breakout => "empty, paddle, ball, trail, brick",
        GameId::Freeway => "empty, chicken, car",
        GameId::Asterix => "empty, player, gold, enemy",
    }
}

/// A policy for one of the grid games.
#[derive(Debug, Clone)]
pub struct GridTask {
    pub spec: GameSpec,
    pub step_limit: u64,
    pub trace_limit: usize,
}

impl GridTask {
    pub fn new(game: GameId) -> Self {
        Self {
            spec: GameSpec::new(game),
            step_limit: game.default_step_limit(),
            trace_limit: DEFAULT_TRACE_LIMIT,
        }
    }

    fn game(&self) -> GameId {
        self.spec.game
    }

    fn description(&self) -> String {
        let game = self.game();
        let actions = game.actions().join(", ");
        let initial = grid::render_text(&grid::reset(self.spec, 0));
        let mut out = String::new();
        let _ = writeln!(out, "{}\n", game_rules(game));
        let _ = writeln!(out, "Objective: {}\n", game_objective(game));
        let _ = writeln!(out, "Possible actions: {actions}.\n");
        let _ = writeln!(
            out,
            "The state is a 10x10 grid of text labels, row 0 at the top. Labels: {}. \
An episode lasts at most {} steps. The initial state looks like this:\n",
            game_labels(game),
            self.step_limit
        );
        fence(&mut out, "", &initial);
        let _ = writeln!(
            out,
            "\nWrite a function with this signature:\n\n\
```python\ndef policy(state: dict) -> str:\n```\n\n\
`state[\"grid\"]` is a list of 10 rows, each a list of 10 labels. `state[\"aux\"]` holds \
`game`, `tick` and `score`. Return one of: {actions}."
        );
        out
    }
}

impl Task for GridTask {
    fn name(&self) -> &str {
        self.game().name()
    }

    fn entry(&self) -> &str {
        "policy"
    }

    fn initial_prompt(&self) -> PromptBundle {
        PromptBundle::new(PromptKind::Initial, SYSTEM_TEXT, self.description())
    }

    fn improve_prompt(&self, state: &SearchState) -> Result<PromptBundle, TaskError> {
        let (source, fitness) = incumbent(state)?;
        let mut out = self.description();
        out.push_str("\nThis is the best policy so far:\n\n");
        fence(&mut out, "python", source);
        let _ = writeln!(out, "\nIt achieved a mean reward of {fitness} per episode.");
        if let Some(EvaluationResult::Grid(report)) = &state.best_result {
            let _ = writeln!(
                out,
                "Best episode reward {}, standard deviation {:.3}.",
                report.max, report.std
            );
            if let Some(ep) = report.episodes.first() {
                let shown = ep.actions.len().min(self.trace_limit);
                let _ = writeln!(
                    out,
                    "\nActions taken in the first episode ({} of {} steps shown, reward {}):\n{}",
                    shown,
                    ep.steps,
                    ep.total_reward,
                    ep.actions[..shown].join(" ")
                );
            }
        }
        out.push_str("\nImprove the policy so that it earns a higher reward.");
        Ok(PromptBundle::new(PromptKind::Improve, SYSTEM_TEXT, out))
    }

    fn repair_summary(&self) -> String {
        format!(
            "Task: write `policy(state) -> str` for the {} grid game. Valid actions: {}.",
            self.game().name(),
            self.game().actions().join(", ")
        )
    }

    fn smoke(&self, runner: &mut dyn ProgramRunner) -> Result<(), Fault> {
        let state = grid::reset(self.spec, 0);
        let token = runner.act(0, &state.payload())?;
        if self.game().actions().contains(&token.as_str()) {
            Ok(())
        } else {
            Err(Fault::invalid_output(format!(
                "action `{token}` is not one of {}",
                self.game().actions().join(", ")
            )))
        }
    }

    fn evaluate(
        &self,
        runner: &mut dyn ProgramRunner,
        seed: u64,
        episodes: usize,
    ) -> Result<Evaluation, Fault> {
        let report = grid::evaluate_policy(self.spec, runner, episodes, seed, self.step_limit)?;
        Ok(Evaluation {
            fitness: report.fitness,
            result: EvaluationResult::Grid(report),
        })
    }

    fn default_episodes(&self) -> usize {
        50
    }
}

const VEHICLE_HELPERS: &str = "class Vector2d:
    x: float
    y: float
    add(other) -> Vector2d, subtract(other) -> Vector2d, multiply(k) -> Vector2d
    mag() -> float                 # Euclidean length
    dist(other) -> float
    rotate(degrees) -> Vector2d
    normalise() -> Vector2d

class Vehicle:                     # superclass of the ship
    s: Vector2d                    # position
    v: Vector2d                    # velocity
    d: float                       # heading in degrees, 0 = +x, clockwise towards +y
    apply_action(action)           # rotate or thrust, then drag, then move
    copy() -> Vehicle

class AsteroidsShip(Vehicle):
    thrust = 1.0, drag = 0.05, dt = 1.0, omega = <rotation speed>";

/// Ship control with rotation speed `omega`.
#[derive(Debug, Clone)]
pub struct DriveTask {
    pub omega: f64,
    pub episodes: Vec<VehicleTask>,
    pub trace_limit: usize,
    name: String,
}

impl DriveTask {
    pub fn new(omega: f64) -> Self {
        Self {
            omega,
            episodes: vehicle::episode_set(omega),
            trace_limit: DEFAULT_TRACE_LIMIT,
            name: "vehicle".into(),
        }
    }

    fn description(&self) -> String {
        let t = &self.episodes[0];
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Vehicle driving. You control a ship in an unbounded 2D plane. The goal is to reach \
the target position and come to rest there before the episode ends. Each episode lasts {} steps \
of {} s. The ship rotates by {} degrees per step, thrust accelerates it by {} units/s^2 along its \
heading, and drag removes {}% of its velocity every step, so it keeps drifting unless you brake. \
An episode counts as solved when the ship stays within {} units of the target for the last {} \
steps and ends slower than {} units/s.\n",
            t.steps,
            t.physics.dt,
            self.omega,
            t.physics.thrust_accel,
            t.physics.drag * 100.0,
            t.tolerance,
            vehicle::STOP_WINDOW,
            vehicle::STOP_SPEED
        );
        let _ = writeln!(out, "Possible actions: {}.\n", vehicle::ACTIONS.join(", "));
        out.push_str(
            "Hints:\n\
- This task is best approached with a search algorithm, for example One Step Lookahead, Monte \
Carlo Tree Search or Rolling Horizon Evolution.\n\
- Use a heuristic that rewards facing towards the target as well as being close to it.\n\
- Consider macro-actions, such as repeating each chosen action several times.\n\n",
        );
        out.push_str("Helper code available to your program (pseudocode):\n\n");
        fence(&mut out, "", VEHICLE_HELPERS);
        out.push_str(
            "\nWrite a function with this signature:\n\n\
```python\ndef policy(state: dict) -> str:\n```\n\n\
`state[\"ship\"]` has `pos` [x, y], `vel` [vx, vy] and `heading` in degrees; `state[\"target\"]` \
is [x, y]; `state[\"step\"]` is the step index and `state[\"omega\"]` the rotation speed.",
        );
        out
    }
}

impl Task for DriveTask {
    fn name(&self) -> &str {
        &self.name
    }

    fn entry(&self) -> &str {
        "policy"
    }

    fn initial_prompt(&self) -> PromptBundle {
        PromptBundle::new(PromptKind::Initial, SYSTEM_TEXT, self.description())
    }

    fn improve_prompt(&self, state: &SearchState) -> Result<PromptBundle, TaskError> {
        let (source, fitness) = incumbent(state)?;
        let mut out = self.description();
        out.push_str("\n\nThis is the best policy so far:\n\n");
        fence(&mut out, "python", source);
        let _ = writeln!(
            out,
            "\nIts fitness is {fitness:.6} (1 / (1 + mean minimum distance))."
        );
        if let Some(EvaluationResult::Vehicle(report)) = &state.best_result {
            let dists: Vec<String> = report
                .min_distances
                .iter()
                .map(|d| format!("{d:.2}"))
                .collect();
            let _ = writeln!(
                out,
                "Minimum distance per episode: {}; mean {:.2}; solved all episodes: {}.",
                dists.join(", "),
                report.d_avg,
                report.success
            );
            if let Some(ep) = report.episodes.first() {
                let shown = ep.actions.len().min(self.trace_limit);
                let _ = writeln!(
                    out,
                    "\nActions taken in the first episode ({shown} of {} shown):\n{}",
                    ep.actions.len(),
                    ep.actions[..shown].join(" ")
                );
            }
        }
        out.push_str(
            "\nImprove the policy so that the ship gets closer to the target and stops there.",
        );
        Ok(PromptBundle::new(PromptKind::Improve, SYSTEM_TEXT, out))
    }

    fn repair_summary(&self) -> String {
        format!(
            "Task: write `policy(state) -> str` steering a ship to a target. Valid actions: {}.",
            vehicle::ACTIONS.join(", ")
        )
    }

    fn smoke(&self, runner: &mut dyn ProgramRunner) -> Result<(), Fault> {
        let t = &self.episodes[0];
        let token = runner.act(0, &vehicle::payload(&t.start, t, 0))?;
        if vehicle::ACTIONS.contains(&token.as_str()) {
            Ok(())
        } else {
            Err(Fault::invalid_output(format!(
                "action `{token}` is not one of {}",
                vehicle::ACTIONS.join(", ")
            )))
        }
    }

    fn evaluate(
        &self,
        runner: &mut dyn ProgramRunner,
        _seed: u64,
        _episodes: usize,
    ) -> Result<Evaluation, Fault> {
        let report = vehicle::evaluate_driver(runner, self.omega, &self.episodes)?;
        Ok(Evaluation {
            fitness: report.fitness(),
            result: EvaluationResult::Vehicle(report),
        })
    }

    fn default_episodes(&self) -> usize {
        vehicle::EPISODE_COUNT
    }
}

/// Maze generation under the longest-shortest-path objective.
#[derive(Debug, Clone)]
pub struct MazeTask {
    pub size: (usize, usize),
    pub count: usize,
}

impl Default for MazeTask {
    fn default() -> Self {
        Self {
            size: DEFAULT_MAZE_SIZE,
            count: DEFAULT_MAZE_COUNT,
        }
    }
}

impl MazeTask {
    fn description(&self) -> String {
        let (w, h) = self.size;
        format!(
            "Procedural maze generation. Write a function that generates a random maze on a \
{w}x{h} grid by placing a corridor (0) or a wall (1) in each cell. The start is the top-left \
cell (0, 0) and the end is the bottom-right cell ({}, {}). Moves are up, down, left and right \
through corridor cells.\n\n\
Use the longest shortest path objective: a maze scores the length of the shortest path from \
start to end, so good mazes force a long route. A maze where the end cannot be reached, or where \
the start or end is a wall, scores -1. Each program is asked for {} mazes with different seeds \
and its fitness is their mean score.\n\n\
Write a function with this signature:\n\n\
```python\ndef generate(params: dict) -> list[list[int]]:\n```\n\n\
`params` has `width`, `height` and `seed`. Return `height` rows of `width` integers, each 0 or 1, \
and use the seed so that different seeds give different mazes.",
            h - 1,
            w - 1,
            self.count
        )
    }
}

impl Task for MazeTask {
    fn name(&self) -> &str {
        "maze"
    }

    fn entry(&self) -> &str {
        "generate"
    }

    fn initial_prompt(&self) -> PromptBundle {
        PromptBundle::new(PromptKind::Initial, SYSTEM_TEXT, self.description())
    }

    fn improve_prompt(&self, state: &SearchState) -> Result<PromptBundle, TaskError> {
        let (source, fitness) = incumbent(state)?;
        let mut out = self.description();
        out.push_str("\n\nThis is the best generator so far:\n\n");
        fence(&mut out, "python", source);
        let _ = writeln!(out, "\nIts mean score is {fitness}.");
        if let Some(EvaluationResult::Maze(report)) = &state.best_result {
            let _ = writeln!(
                out,
                "It produced these mazes (# wall, . corridor, S start, E end):"
            );
            for (i, m) in report.mazes.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "\nMaze {} (seed {}), score {}:",
                    i + 1,
                    m.seed,
                    m.score
                );
                match &m.grid {
                    Some(g) => fence(&mut out, "", &maze::render_ascii(g)),
                    None => {
                        let _ =
                            writeln!(out, "invalid: {}", m.error.as_deref().unwrap_or("no maze"));
                    }
                }
            }
        }
        out.push_str("\nImprove the generator so that its mazes have longer shortest paths.");
        Ok(PromptBundle::new(PromptKind::Improve, SYSTEM_TEXT, out))
    }

    fn repair_summary(&self) -> String {
        let (w, h) = self.size;
        format!("Task: write `generate(params) -> list[list[int]]` returning a {w}x{h} grid of 0/1 cells.")
    }

    fn smoke(&self, runner: &mut dyn ProgramRunner) -> Result<(), Fault> {
        let (width, height) = self.size;
        let rows = runner.generate(&GenerateParams {
            width,
            height,
            seed: 0,
        })?;
        let grid =
            MazeGrid::from_artifact(&rows).map_err(|e| Fault::invalid_output(e.to_string()))?;
        if (grid.width, grid.height) != self.size {
            return Err(Fault::invalid_output(format!(
                "maze is {}x{}, requested {width}x{height}",
                grid.width, grid.height
            )));
        }
        Ok(())
    }

    fn evaluate(
        &self,
        runner: &mut dyn ProgramRunner,
        seed: u64,
        _episodes: usize,
    ) -> Result<Evaluation, Fault> {
        let report = maze::evaluate_generator(runner, self.count, self.size, seed)?;
        Ok(Evaluation {
            fitness: report.fitness(),
            result: EvaluationResult::Maze(report),
        })
    }

    fn default_episodes(&self) -> usize {
        self.count
    }
}
