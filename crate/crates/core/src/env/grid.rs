//! 10x10 symbolic grid games: Mini-Breakout, Freeway and Asterix.
//!
//! Each game is a pure transition function over [`GridState`] plus the
//! seeded generator the state owns, so `(seed, actions)` fully determines
//! an episode. States are rendered as a grid of text tokens; that rendering
//! is both what the policy receives and what the prompt shows.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::program::Fault;
use crate::runner::ProgramRunner;

pub const SIZE: usize = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GridError {
    #[error("unknown game `{0}`")]
    UnknownGame(String),
    #[error("action `{action}` is not valid for {game}")]
    InvalidAction { game: GameId, action: String },
    #[error("step called on a terminal state")]
    SteppedTerminal,
    #[error("cannot parse rendered grid: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GameId {
    Breakout,
    Freeway,
    Asterix,
}

impl GameId {
    pub const ALL: [GameId; 3] = [GameId::Breakout, GameId::Freeway, GameId::Asterix];

    pub fn name(self) -> &'static str {
        match self {
            GameId::Breakout => "breakout",
            GameId::Freeway => "freeway",
            GameId::Asterix => "asterix",
        }
    }

    pub fn actions(self) -> &'static [&'static str] {
        match self {
            GameId::Breakout => &["LEFT", "RIGHT", "NOOP"],
            GameId::Freeway => &["UP", "DOWN", "NOOP"],
            GameId::Asterix => &["UP", "DOWN", "LEFT", "RIGHT", "NOOP"],
        }
    }

    pub fn default_step_limit(self) -> u64 {
        match self {
            GameId::Breakout => 1000,
            GameId::Freeway => 250,
            GameId::Asterix => 1000,
        }
    }

    fn parse_action(self, token: &str) -> Result<Move, GridError> {
        if !self.actions().contains(&token) {
            return Err(GridError::InvalidAction {
                game: self,
                action: token.to_string(),
            });
        }
        Ok(match token {
            "LEFT" => Move::Left,
            "RIGHT" => Move::Right,
            "UP" => Move::Up,
            "DOWN" => Move::Down,
            _ => Move::Noop,
        })
    }
}

impl fmt::Display for GameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GameId {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GameId::ALL
            .into_iter()
            .find(|g| g.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| GridError::UnknownGame(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Move {
    Left,
    Right,
    Up,
    Down,
    Noop,
}

/// Cell labels of the rendered grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Token {
    Empty,
    Paddle,
    Ball,
    Trail,
    Brick,
    Chicken,
    Car,
    Player,
    Gold,
    Enemy,
}

impl Token {
    pub const ALL: [Token; 10] = [
        Token::Empty,
        Token::Paddle,
        Token::Ball,
        Token::Trail,
        Token::Brick,
        Token::Chicken,
        Token::Car,
        Token::Player,
        Token::Gold,
        Token::Enemy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Token::Empty => "empty",
            Token::Paddle => "paddle",
            Token::Ball => "ball",
            Token::Trail => "trail",
            Token::Brick => "brick",
            Token::Chicken => "chicken",
            Token::Car => "car",
            Token::Player => "player",
            Token::Gold => "gold",
            Token::Enemy => "enemy",
        }
    }

    pub fn parse(s: &str) -> Option<Token> {
        Token::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

pub type Cells = [[Token; SIZE]; SIZE];

/// Game variants that tests and experiments may toggle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameSpec {
    pub game: GameId,
    /// Freeway only: when false the road is empty.
    pub traffic: bool,
}

impl GameSpec {
    pub fn new(game: GameId) -> Self {
        Self {
            game,
            traffic: true,
        }
    }

    pub fn without_traffic(mut self) -> Self {
        self.traffic = false;
        self
    }
}

impl From<GameId> for GameSpec {
    fn from(game: GameId) -> Self {
        GameSpec::new(game)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Breakout {
    pub paddle: usize,
    pub ball: (usize, usize),
    /// (dy, dx), each -1 or +1.
    pub dir: (i32, i32),
    pub trail: Option<(usize, usize)>,
    pub bricks: [[bool; SIZE]; SIZE],
    pub bricks_removed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Car {
    pub col: usize,
    pub dir: i32,
    pub period: u32,
    pub timer: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Freeway {
    pub chicken_row: usize,
    /// Car of road row `i + 1`; empty without traffic.
    pub cars: Vec<Car>,
    pub crossings: u64,
}

pub const FREEWAY_COLUMN: usize = 4;
pub const FREEWAY_PERIODS: [u32; 8] = [1, 2, 3, 4, 4, 3, 2, 1];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    pub row: usize,
    pub col: usize,
    pub dir: i32,
    pub gold: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Asterix {
    pub player: (usize, usize),
    pub entities: Vec<Entity>,
    pub gold_collected: u64,
}

pub const ASTERIX_SPAWN_EVERY: u64 = 5;
pub const ASTERIX_MOVE_EVERY: u64 = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Game {
    Breakout(Breakout),
    Freeway(Freeway),
    Asterix(Asterix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridState {
    pub game: Game,
    pub tick: u64,
    pub score: f64,
    pub terminal: bool,
    rng: ChaCha8Rng,
}

fn full_brick_rows(except: Option<(usize, usize)>) -> [[bool; SIZE]; SIZE] {
    let mut bricks = [[false; SIZE]; SIZE];
    for (r, row) in bricks.iter_mut().enumerate().take(4).skip(1) {
        for (c, cell) in row.iter_mut().enumerate() {
            *cell = except != Some((r, c));
        }
    }
    bricks
}

/// Canonical initial state of `spec.game` for `seed`.
pub fn reset(spec: impl Into<GameSpec>, seed: u64) -> GridState {
    let spec = spec.into();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let game = match spec.game {
        GameId::Breakout => {
            let col = if rng.random_bool(0.5) { 0 } else { SIZE - 1 };
            let ball = (3, col);
            Game::Breakout(Breakout {
                paddle: 4,
                ball,
                dir: (1, if col == 0 { 1 } else { -1 }),
                trail: None,
                // the ball's own cell starts cleared
                bricks: full_brick_rows(Some(ball)),
                bricks_removed: 0,
            })
        }
        GameId::Freeway => {
            let cars = if spec.traffic {
                FREEWAY_PERIODS
                    .iter()
                    .enumerate()
                    .map(|(i, &period)| Car {
                        col: rng.random_range(0..SIZE),
                        dir: if i % 2 == 0 { 1 } else { -1 },
                        period,
                        timer: rng.random_range(1..=period),
                    })
                    .collect()
            } else {
                Vec::new()
            };
            Game::Freeway(Freeway {
                chicken_row: SIZE - 1,
                cars,
                crossings: 0,
            })
        }
        GameId::Asterix => Game::Asterix(Asterix {
            player: (5, 4),
            entities: Vec::new(),
            gold_collected: 0,
        }),
    };
    GridState {
        game,
        tick: 0,
        score: 0.0,
        terminal: false,
        rng,
    }
}

fn shift(pos: usize, delta: i32, lo: usize, hi: usize) -> usize {
    (pos as i64 + delta as i64).clamp(lo as i64, hi as i64) as usize
}

impl GridState {
    pub fn id(&self) -> GameId {
        match self.game {
            Game::Breakout(_) => GameId::Breakout,
            Game::Freeway(_) => GameId::Freeway,
            Game::Asterix(_) => GameId::Asterix,
        }
    }

    /// Advances one tick and returns the reward earned.
    pub fn step(&mut self, action: &str) -> Result<f64, GridError> {
        if self.terminal {
            return Err(GridError::SteppedTerminal);
        }
        let mv = self.id().parse_action(action)?;
        self.tick += 1;
        let reward = match &mut self.game {
            Game::Breakout(b) => step_breakout(b, mv, &mut self.terminal),
            Game::Freeway(f) => step_freeway(f, mv),
            Game::Asterix(a) => step_asterix(a, mv, self.tick, &mut self.rng, &mut self.terminal),
        };
        self.score += reward;
        Ok(reward)
    }

    pub fn cells(&self) -> Cells {
        let mut cells = [[Token::Empty; SIZE]; SIZE];
        match &self.game {
            Game::Breakout(b) => {
                if let Some((r, c)) = b.trail {
                    cells[r][c] = Token::Trail;
                }
                for (r, row) in b.bricks.iter().enumerate() {
                    for (c, &brick) in row.iter().enumerate() {
                        if brick {
                            cells[r][c] = Token::Brick;
                        }
                    }
                }
                cells[b.ball.0][b.ball.1] = Token::Ball;
                cells[SIZE - 1][b.paddle] = Token::Paddle;
            }
            Game::Freeway(f) => {
                for (i, car) in f.cars.iter().enumerate() {
                    cells[i + 1][car.col] = Token::Car;
                }
                cells[f.chicken_row][FREEWAY_COLUMN] = Token::Chicken;
            }
            Game::Asterix(a) => {
                for e in &a.entities {
                    cells[e.row][e.col] = if e.gold { Token::Gold } else { Token::Enemy };
                }
                cells[a.player.0][a.player.1] = Token::Player;
            }
        }
        cells
    }

    /// Policy payload: the rendered grid plus auxiliary counters.
    pub fn payload(&self) -> Value {
        let grid: Vec<Vec<&str>> = self
            .cells()
            .iter()
            .map(|row| row.iter().map(|t| t.as_str()).collect())
            .collect();
        json!({
            "grid": grid,
            "aux": {"game": self.id().name(), "tick": self.tick, "score": self.score},
        })
    }
}

fn step_breakout(b: &mut Breakout, mv: Move, terminal: &mut bool) -> f64 {
    b.paddle = match mv {
        Move::Left => b.paddle.saturating_sub(1),
        Move::Right => (b.paddle + 1).min(SIZE - 1),
        _ => b.paddle,
    };
    let (r, c) = b.ball;
    let (mut dy, mut dx) = b.dir;
    if !(0..SIZE as i32).contains(&(c as i32 + dx)) {
        dx = -dx;
    }
    if r as i32 + dy < 0 {
        dy = -dy;
    }
    let nc = (c as i32 + dx) as usize;
    let mut nr = (r as i32 + dy) as usize;
    let mut reward = 0.0;
    if nr == SIZE - 1 {
        if b.paddle == nc || b.paddle == c {
            dy = -dy;
            nr = (r as i32 + dy) as usize;
        } else {
            *terminal = true;
        }
    } else if b.bricks[nr][nc] {
        b.bricks[nr][nc] = false;
        b.bricks_removed += 1;
        reward = 1.0;
        dy = -dy;
    }
    b.trail = Some((r, c));
    b.ball = (nr, nc);
    b.dir = (dy, dx);
    if b.bricks.iter().flatten().all(|&x| !x) {
        b.bricks = full_brick_rows(Some(b.ball));
    }
    reward
}

fn step_freeway(f: &mut Freeway, mv: Move) -> f64 {
    let mut reward = 0.0;
    match mv {
        Move::Up => f.chicken_row = f.chicken_row.saturating_sub(1),
        Move::Down => f.chicken_row = (f.chicken_row + 1).min(SIZE - 1),
        _ => {}
    }
    if f.chicken_row == 0 {
        reward = 1.0;
        f.crossings += 1;
        f.chicken_row = SIZE - 1;
    }
    for car in &mut f.cars {
        car.timer -= 1;
        if car.timer == 0 {
            car.timer = car.period;
            car.col = (car.col as i32 + car.dir).rem_euclid(SIZE as i32) as usize;
        }
    }
    let row = f.chicken_row;
    if (1..=8).contains(&row)
        && f.cars[..]
            .get(row - 1)
            .is_some_and(|car| car.col == FREEWAY_COLUMN)
    {
        f.chicken_row = SIZE - 1;
    }
    reward
}

fn resolve_asterix(a: &mut Asterix, terminal: &mut bool) -> f64 {
    let mut reward = 0.0;
    let player = a.player;
    a.entities.retain(|e| {
        if (e.row, e.col) != player {
            return true;
        }
        if e.gold {
            reward += 1.0;
            false
        } else {
            *terminal = true;
            true
        }
    });
    a.gold_collected += reward as u64;
    reward
}

fn step_asterix(
    a: &mut Asterix,
    mv: Move,
    tick: u64,
    rng: &mut ChaCha8Rng,
    terminal: &mut bool,
) -> f64 {
    let (r, c) = a.player;
    a.player = match mv {
        Move::Up => (shift(r, -1, 1, 8), c),
        Move::Down => (shift(r, 1, 1, 8), c),
        Move::Left => (r, shift(c, -1, 0, SIZE - 1)),
        Move::Right => (r, shift(c, 1, 0, SIZE - 1)),
        Move::Noop => (r, c),
    };
    let mut reward = resolve_asterix(a, terminal);
    if *terminal {
        return reward;
    }
    if tick.is_multiple_of(ASTERIX_MOVE_EVERY) {
        for e in &mut a.entities {
            e.col = (e.col as i32 + e.dir) as usize;
        }
        a.entities.retain(|e| e.col < SIZE);
        reward += resolve_asterix(a, terminal);
        if *terminal {
            return reward;
        }
    }
    if tick.is_multiple_of(ASTERIX_SPAWN_EVERY) {
        let free: Vec<usize> = (1..=8)
            .filter(|row| a.entities.iter().all(|e| e.row != *row))
            .collect();
        if !free.is_empty() {
            let row = free[rng.random_range(0..free.len())];
            let rightward = rng.random_bool(0.5);
            let gold = rng.random_bool(1.0 / 3.0);
            a.entities.push(Entity {
                row,
                col: if rightward { 0 } else { SIZE - 1 },
                dir: if rightward { 1 } else { -1 },
                gold,
            });
            reward += resolve_asterix(a, terminal);
        }
    }
    reward
}

/// Renders the state as 10 lines of 10 space-separated tokens, row 0 first.
pub fn render_text(state: &GridState) -> String {
    render_cells(&state.cells())
}

pub fn render_cells(cells: &Cells) -> String {
    cells
        .iter()
        .map(|row| row.iter().map(|t| t.as_str()).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Inverse of [`render_text`].
pub fn parse_text(text: &str) -> Result<Cells, GridError> {
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() != SIZE {
        return Err(GridError::Parse(format!(
            "expected {SIZE} rows, got {}",
            lines.len()
        )));
    }
    let mut cells = [[Token::Empty; SIZE]; SIZE];
    for (r, line) in lines.iter().enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != SIZE {
            return Err(GridError::Parse(format!(
                "row {r} has {} tokens",
                toks.len()
            )));
        }
        for (c, tok) in toks.iter().enumerate() {
            cells[r][c] = Token::parse(tok)
                .ok_or_else(|| GridError::Parse(format!("unknown token `{tok}`")))?;
        }
    }
    Ok(cells)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EndReason {
    Terminal,
    StepLimit,
    PolicyError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub actions: Vec<String>,
    pub rewards: Vec<f64>,
    pub total_reward: f64,
    pub steps: u64,
    pub end_reason: EndReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessReport {
    pub game: GameId,
    pub episodes: Vec<EpisodeRecord>,
    /// Mean episode reward; the search fitness.
    pub fitness: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
}

/// Mean, max and population standard deviation.
pub(crate) fn stats(values: &[f64]) -> (f64, f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, max, var.sqrt())
}

/// Plays one episode. Returns the record and, on policy failure, the fault.
pub fn play_episode(
    spec: GameSpec,
    runner: &mut dyn ProgramRunner,
    seed: u64,
    step_limit: u64,
) -> (EpisodeRecord, Option<Fault>) {
    let mut state = reset(spec, seed);
    let mut rec = EpisodeRecord {
        seed,
        actions: Vec::new(),
        rewards: Vec::new(),
        total_reward: 0.0,
        steps: 0,
        end_reason: EndReason::StepLimit,
        error: None,
    };
    let mut fault = None;
    while rec.steps < step_limit {
        if state.terminal {
            rec.end_reason = EndReason::Terminal;
            break;
        }
        let token = match runner.act(rec.steps, &state.payload()) {
            Ok(tok) => tok,
            Err(f) => {
                fault = Some(f);
                break;
            }
        };
        let reward = match state.step(&token) {
            Ok(r) => r,
            Err(e) => {
                fault = Some(Fault::invalid_output(e.to_string()));
                break;
            }
        };
        rec.actions.push(token);
        rec.rewards.push(reward);
        rec.total_reward += reward;
        rec.steps += 1;
    }
    if state.terminal && fault.is_none() {
        rec.end_reason = EndReason::Terminal;
    }
    if let Some(f) = &fault {
        rec.end_reason = EndReason::PolicyError;
        rec.error = Some(f.to_string());
    }
    (rec, fault)
}

/// Runs `episodes` episodes with seeds `seed_base..seed_base + episodes`.
///
/// A policy failure ends its episode with the partial reward. A failure on
/// the very first action of the first episode makes the program
/// non-executable and is returned as the error. After a crash or timeout the
/// runner is recovered once per its restart budget; if it cannot be, the
/// remaining episodes score zero.
pub fn evaluate_policy(
    spec: impl Into<GameSpec>,
    runner: &mut dyn ProgramRunner,
    episodes: usize,
    seed_base: u64,
    step_limit: u64,
) -> Result<FitnessReport, Fault> {
    let spec = spec.into();
    let mut records = Vec::with_capacity(episodes);
    let mut runner_dead = false;
    for i in 0..episodes {
        let seed = seed_base + i as u64;
        if runner_dead {
            records.push(EpisodeRecord {
                seed,
                actions: Vec::new(),
                rewards: Vec::new(),
                total_reward: 0.0,
                steps: 0,
                end_reason: EndReason::PolicyError,
                error: Some("runner unavailable".into()),
            });
            continue;
        }
        let (rec, fault) = play_episode(spec, runner, seed, step_limit);
        if let Some(f) = fault {
            if i == 0 && rec.steps == 0 {
                return Err(f);
            }
            if matches!(
                f.status,
                crate::program::ExecStatus::Crash | crate::program::ExecStatus::Timeout
            ) && !runner.recover()
            {
                runner_dead = true;
            }
        }
        records.push(rec);
    }
    let totals: Vec<f64> = records.iter().map(|r| r.total_reward).collect();
    let (mean, max, std) = stats(&totals);
    Ok(FitnessReport {
        game: spec.game,
        episodes: records,
        fitness: mean,
        max,
        mean,
        std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stub::StubRunner;

    fn count(cells: &Cells, t: Token) -> usize {
        cells.iter().flatten().filter(|&&c| c == t).count()
    }

    #[test]
    fn breakout_reset_layout() {
        for seed in 0..20 {
            let s = reset(GameId::Breakout, seed);
            let Game::Breakout(b) = &s.game else {
                unreachable!()
            };
            assert_eq!(b.paddle, 4);
            assert_eq!(b.ball.0, 3);
            assert!(b.ball.1 == 0 || b.ball.1 == 9);
            assert_eq!(s.tick, 0);
            assert_eq!(s.score, 0.0);
            for r in 0..SIZE {
                for c in 0..SIZE {
                    let expect = (1..=3).contains(&r) && (r, c) != b.ball;
                    assert_eq!(b.bricks[r][c], expect);
                }
            }
            let cells = s.cells();
            assert_eq!(count(&cells, Token::Paddle), 1);
            assert_eq!(count(&cells, Token::Ball), 1);
            assert_eq!(count(&cells, Token::Brick), 29);
        }
        let cols: std::collections::HashSet<usize> = (0..20)
            .map(|seed| match reset(GameId::Breakout, seed).game {
                Game::Breakout(b) => b.ball.1,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(cols.len(), 2, "seed should select both start columns");
    }

    #[test]
    fn freeway_and_asterix_reset() {
        let s = reset(GameId::Freeway, 3);
        let Game::Freeway(f) = &s.game else {
            unreachable!()
        };
        assert_eq!(f.chicken_row, 9);
        assert_eq!(f.cars.len(), 8);
        assert_eq!(count(&s.cells(), Token::Car), 8);
        assert_eq!(s.cells()[9][4], Token::Chicken);

        let s = reset(GameId::Asterix, 3);
        let Game::Asterix(a) = &s.game else {
            unreachable!()
        };
        assert_eq!(a.player, (5, 4));
        assert!(a.entities.is_empty());
    }

    #[test]
    fn breakout_paddle_bounce() {
        let mut s = reset(GameId::Breakout, 0);
        if let Game::Breakout(b) = &mut s.game {
            b.ball = (8, 3);
            b.dir = (1, 1);
            b.paddle = 4;
        }
        let r = s.step("NOOP").unwrap();
        assert_eq!(r, 0.0);
        assert!(!s.terminal);
        let Game::Breakout(b) = &s.game else {
            unreachable!()
        };
        assert_eq!(b.dir, (-1, 1));
        assert_eq!(b.ball, (7, 4));
        assert_eq!(b.trail, Some((8, 3)));
    }

    #[test]
    fn breakout_miss_is_terminal() {
        let mut s = reset(GameId::Breakout, 0);
        if let Game::Breakout(b) = &mut s.game {
            b.ball = (8, 3);
            b.dir = (1, 1);
            b.paddle = 0;
        }
        s.step("NOOP").unwrap();
        assert!(s.terminal);
        assert_eq!(s.step("NOOP"), Err(GridError::SteppedTerminal));
    }

    #[test]
    fn breakout_brick_hit() {
        let mut s = reset(GameId::Breakout, 0);
        if let Game::Breakout(b) = &mut s.game {
            b.ball = (5, 5);
            b.dir = (-1, 1);
        }
        assert_eq!(s.step("NOOP").unwrap(), 0.0);
        assert_eq!(s.step("NOOP").unwrap(), 1.0);
        let Game::Breakout(b) = &s.game else {
            unreachable!()
        };
        assert_eq!(b.ball, (3, 7));
        assert!(!b.bricks[3][7]);
        assert_eq!(b.dir, (1, 1));
    }

    #[test]
    fn freeway_empty_road_crossing() {
        let mut s = reset(GameSpec::new(GameId::Freeway).without_traffic(), 0);
        for i in 0..8 {
            assert_eq!(s.step("UP").unwrap(), 0.0, "step {i}");
        }
        assert_eq!(s.step("UP").unwrap(), 1.0);
        let Game::Freeway(f) = &s.game else {
            unreachable!()
        };
        assert_eq!(f.chicken_row, 9);
    }

    #[test]
    fn asterix_gold_pickup() {
        let mut s = reset(GameId::Asterix, 0);
        if let Game::Asterix(a) = &mut s.game {
            a.entities.push(Entity {
                row: 4,
                col: 4,
                dir: 1,
                gold: true,
            });
        }
        assert_eq!(s.step("UP").unwrap(), 1.0);
        let Game::Asterix(a) = &s.game else {
            unreachable!()
        };
        assert!(a.entities.is_empty());
        assert!(!s.terminal);
    }

    #[test]
    fn asterix_enemy_is_terminal() {
        let mut s = reset(GameId::Asterix, 0);
        if let Game::Asterix(a) = &mut s.game {
            a.entities.push(Entity {
                row: 5,
                col: 5,
                dir: -1,
                gold: false,
            });
        }
        s.step("RIGHT").unwrap();
        assert!(s.terminal);
    }

    #[test]
    fn invalid_action() {
        let mut s = reset(GameId::Breakout, 0);
        assert!(matches!(s.step("UP"), Err(GridError::InvalidAction { .. })));
        assert!("pong".parse::<GameId>().is_err());
    }

    #[test]
    fn render_layout_and_round_trip() {
        let empty = [[Token::Empty; SIZE]; SIZE];
        let text = render_cells(&empty);
        assert_eq!(text.lines().count(), 10);
        assert!(text.lines().all(|l| l.split(' ').count() == 10));
        assert_eq!(
            text.split_whitespace().filter(|t| *t == "empty").count(),
            100
        );
        for game in GameId::ALL {
            let s = reset(game, 11);
            assert_eq!(parse_text(&render_text(&s)).unwrap(), s.cells());
        }
    }

    #[test]
    fn always_up_on_empty_freeway_scores_27() {
        let mut runner = StubRunner::new();
        runner
            .load("x", "def policy\nact const UP", "policy")
            .unwrap();
        let spec = GameSpec::new(GameId::Freeway).without_traffic();
        let report = evaluate_policy(spec, &mut runner, 3, 0, 250).unwrap();
        for ep in &report.episodes {
            assert_eq!(ep.total_reward, 27.0);
            assert_eq!(ep.steps, 250);
        }
        assert_eq!(report.fitness, 27.0);
        assert_eq!(report.std, 0.0);
    }

    #[test]
    fn noop_freeway_scores_zero() {
        let mut runner = StubRunner::new();
        runner
            .load("x", "def policy\nact const NOOP", "policy")
            .unwrap();
        let report = evaluate_policy(GameId::Freeway, &mut runner, 5, 100, 250).unwrap();
        assert_eq!(report.fitness, 0.0);
    }

    #[test]
    fn first_action_failure_is_non_executable() {
        let mut runner = StubRunner::new();
        runner
            .load("x", "def policy\nact const JUMP", "policy")
            .unwrap();
        let err = evaluate_policy(GameId::Breakout, &mut runner, 5, 0, 100).unwrap_err();
        assert_eq!(err.status, crate::program::ExecStatus::InvalidOutput);
    }

    #[test]
    fn mid_episode_failure_keeps_partial_reward() {
        let mut runner = StubRunner::new();
        runner
            .load("x", "def policy\nact fail-after 20 UP", "policy")
            .unwrap();
        let spec = GameSpec::new(GameId::Freeway).without_traffic();
        let report = evaluate_policy(spec, &mut runner, 2, 0, 250).unwrap();
        for ep in &report.episodes {
            assert_eq!(ep.end_reason, EndReason::PolicyError);
            assert_eq!(ep.steps, 20);
            assert_eq!(ep.total_reward, 2.0);
        }
    }
}
