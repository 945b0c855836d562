//! Maze generation task scored by the longest-shortest-path objective, and
//! an evolutionary baseline that optimises the objective directly.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::program::{ExecStatus, Fault};
use crate::runner::{IntGrid, ProgramRunner};
use crate::sandbox::protocol::GenerateParams;

pub const CORRIDOR: u8 = 0;
pub const WALL: u8 = 1;
pub const INVALID_SCORE: i64 = -1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MazeError {
    #[error("malformed maze: {0}")]
    MalformedGrid(String),
}

/// Binary occupancy grid, row-major. `start` and `end` are (row, col).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MazeGrid {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<u8>,
    pub start: (usize, usize),
    pub end: (usize, usize),
}

impl MazeGrid {
    /// All-corridor grid with corner endpoints.
    pub fn open(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            cells: vec![CORRIDOR; width * height],
            start: (0, 0),
            end: (height.saturating_sub(1), width.saturating_sub(1)),
        }
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self, MazeError> {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(MazeError::MalformedGrid("rows differ in length".into()));
        }
        let mut grid = MazeGrid::open(width, height);
        grid.cells = rows.concat();
        grid.validate()?;
        Ok(grid)
    }

    /// Converts a generator artifact; any value other than 0/1 is malformed.
    pub fn from_artifact(rows: &IntGrid) -> Result<Self, MazeError> {
        let converted = rows
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&v| match v {
                        0 => Ok(CORRIDOR),
                        1 => Ok(WALL),
                        other => Err(MazeError::MalformedGrid(format!(
                            "cell value {other} is not 0 or 1"
                        ))),
                    })
                    .collect::<Result<Vec<u8>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        MazeGrid::from_rows(&converted)
    }

    pub fn validate(&self) -> Result<(), MazeError> {
        if self.width == 0 || self.height == 0 {
            return Err(MazeError::MalformedGrid("empty grid".into()));
        }
        if self.cells.len() != self.width * self.height {
            return Err(MazeError::MalformedGrid(
                "cell count does not match dimensions".into(),
            ));
        }
        if self.cells.iter().any(|&c| c > WALL) {
            return Err(MazeError::MalformedGrid("cells must be 0 or 1".into()));
        }
        let in_bounds = |(r, c): (usize, usize)| r < self.height && c < self.width;
        if !in_bounds(self.start) || !in_bounds(self.end) {
            return Err(MazeError::MalformedGrid("endpoint out of bounds".into()));
        }
        if self.start == self.end {
            return Err(MazeError::MalformedGrid("start equals end".into()));
        }
        Ok(())
    }

    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.cells[r * self.width + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: u8) {
        self.cells[r * self.width + c] = v;
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        self.cells.chunks(self.width).map(<[u8]>::to_vec).collect()
    }

    pub fn transpose(&self) -> MazeGrid {
        let mut t = MazeGrid::open(self.height, self.width);
        for r in 0..self.height {
            for c in 0..self.width {
                t.set(c, r, self.get(r, c));
            }
        }
        t.start = (self.start.1, self.start.0);
        t.end = (self.end.1, self.end.0);
        t
    }

    /// Plain-text export: one line per row of `0`/`1` characters.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for row in self.cells.chunks(self.width) {
            for &c in row {
                out.push(if c == WALL { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }

    /// Binary PGM (P5); walls black, corridors white, `scale` pixels per cell.
    pub fn to_pgm(&self, scale: usize) -> Vec<u8> {
        let scale = scale.max(1);
        let (w, h) = (self.width * scale, self.height * scale);
        let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
        for r in 0..h {
            for c in 0..w {
                out.push(if self.get(r / scale, c / scale) == WALL {
                    0
                } else {
                    255
                });
            }
        }
        out
    }
}

/// Longest-shortest-path score: BFS distance (4-connected, unit edges)
/// from start to end, or -1 when unreachable or an endpoint is a wall.
pub fn score_maze(grid: &MazeGrid) -> Result<i64, MazeError> {
    grid.validate()?;
    Ok(bfs_distance(grid))
}

fn bfs_distance(grid: &MazeGrid) -> i64 {
    let (w, h) = (grid.width, grid.height);
    let idx = |(r, c): (usize, usize)| r * w + c;
    if grid.cells[idx(grid.start)] == WALL || grid.cells[idx(grid.end)] == WALL {
        return INVALID_SCORE;
    }
    let mut dist = vec![u32::MAX; w * h];
    let mut queue = VecDeque::new();
    dist[idx(grid.start)] = 0;
    queue.push_back(grid.start);
    let goal = idx(grid.end);
    while let Some((r, c)) = queue.pop_front() {
        let d = dist[idx((r, c))];
        if idx((r, c)) == goal {
            return d as i64;
        }
        let neighbours = [
            (r.wrapping_sub(1), c),
            (r + 1, c),
            (r, c.wrapping_sub(1)),
            (r, c + 1),
        ];
        for (nr, nc) in neighbours {
            if nr < h && nc < w {
                let n = idx((nr, nc));
                if grid.cells[n] == CORRIDOR && dist[n] == u32::MAX {
                    dist[n] = d + 1;
                    queue.push_back((nr, nc));
                }
            }
        }
    }
    INVALID_SCORE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedMaze {
    pub seed: u64,
    pub grid: Option<MazeGrid>,
    pub score: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenReport {
    pub mazes: Vec<GeneratedMaze>,
    pub scores: Vec<i64>,
    pub d_max: i64,
    pub d_avg: f64,
    pub sigma: f64,
}

impl GenReport {
    pub fn fitness(&self) -> f64 {
        self.d_avg
    }
}

/// Requests `count` mazes with seeds `seed_base..` and scores them.
///
/// Unreachable mazes and failed or malformed artifacts score -1. A failure
/// on the first request marks the program non-executable.
pub fn evaluate_generator(
    runner: &mut dyn ProgramRunner,
    count: usize,
    size: (usize, usize),
    seed_base: u64,
) -> Result<GenReport, Fault> {
    let (width, height) = size;
    let mut mazes = Vec::with_capacity(count);
    for i in 0..count {
        let seed = seed_base + i as u64;
        let params = GenerateParams {
            width,
            height,
            seed,
        };
        let outcome = runner.generate(&params).and_then(|rows| {
            let grid =
                MazeGrid::from_artifact(&rows).map_err(|e| Fault::invalid_output(e.to_string()))?;
            if (grid.width, grid.height) != size {
                return Err(Fault::invalid_output(format!(
                    "maze is {}x{}, requested {width}x{height}",
                    grid.width, grid.height
                )));
            }
            Ok(grid)
        });
        match outcome {
            Ok(grid) => {
                let score = bfs_distance(&grid);
                mazes.push(GeneratedMaze {
                    seed,
                    grid: Some(grid),
                    score,
                    error: None,
                });
            }
            Err(f) if i == 0 => return Err(f),
            Err(f) => {
                if matches!(f.status, ExecStatus::Crash | ExecStatus::Timeout) {
                    runner.recover();
                }
                mazes.push(GeneratedMaze {
                    seed,
                    grid: None,
                    score: INVALID_SCORE,
                    error: Some(f.to_string()),
                });
            }
        }
    }
    let scores: Vec<i64> = mazes.iter().map(|m| m.score).collect();
    let as_f: Vec<f64> = scores.iter().map(|&s| s as f64).collect();
    let (d_avg, _, sigma) = crate::env::grid::stats(&as_f);
    Ok(GenReport {
        d_max: scores.iter().copied().max().unwrap_or(INVALID_SCORE),
        mazes,
        scores,
        d_avg,
        sigma,
    })
}

/// Result of the evolutionary baseline, with the best-so-far trace.
#[derive(Debug, Clone, PartialEq)]
pub struct EaRun {
    pub best: MazeGrid,
    pub score: i64,
    pub evaluations: usize,
    /// Best-so-far score after each evaluation.
    pub history: Vec<i64>,
}

/// (1+4) evolution strategy on the maze objective.
///
/// The parent starts as the open grid. Each offspring flips every cell
/// independently with probability 2/(width*height). The best offspring of a
/// generation replaces the parent when it scores at least as well, so -1
/// offspring never displace a valid parent. Every scored grid, including the
/// initial parent, consumes one evaluation.
pub fn ea_baseline(size: (usize, usize), evaluations: usize, seed: u64) -> EaRun {
    let (width, height) = size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parent = MazeGrid::open(width, height);
    let mut parent_score = bfs_distance(&parent);
    let mut history = vec![parent_score];
    let flip_p = 2.0 / (width * height) as f64;
    let mut used = 1;
    while used < evaluations {
        let mut best_child: Option<(MazeGrid, i64)> = None;
        let mut seen = parent_score;
        for _ in 0..4 {
            if used >= evaluations {
                break;
            }
            let mut child = parent.clone();
            for cell in child.cells.iter_mut() {
                if rng.random_bool(flip_p) {
                    *cell ^= 1;
                }
            }
            let s = bfs_distance(&child);
            used += 1;
            if best_child.as_ref().is_none_or(|(_, bs)| s > *bs) {
                best_child = Some((child, s));
            }
            seen = seen.max(s);
            history.push(seen);
        }
        if let Some((child, s)) = best_child {
            if s >= parent_score {
                parent = child;
                parent_score = s;
            }
        }
    }
    EaRun {
        best: parent,
        score: parent_score,
        evaluations: used,
        history,
    }
}

/// Shortest start-to-end path found by enumerating every simple path with a
/// depth-first search. Exponential; meant for cross-checking [`score_maze`]
/// on tiny grids.
pub fn exhaustive_score(grid: &MazeGrid) -> i64 {
    fn dfs(grid: &MazeGrid, at: (usize, usize), len: i64, seen: &mut [bool], best: &mut i64) {
        if at == grid.end {
            if *best < 0 || len < *best {
                *best = len;
            }
            return;
        }
        let (r, c) = at;
        let moves = [
            (r.wrapping_sub(1), c),
            (r + 1, c),
            (r, c.wrapping_sub(1)),
            (r, c + 1),
        ];
        for (nr, nc) in moves {
            if nr >= grid.height || nc >= grid.width {
                continue;
            }
            let i = nr * grid.width + nc;
            if grid.cells[i] == WALL || seen[i] {
                continue;
            }
            seen[i] = true;
            dfs(grid, (nr, nc), len + 1, seen, best);
            seen[i] = false;
        }
    }
    if grid.get(grid.start.0, grid.start.1) == WALL || grid.get(grid.end.0, grid.end.1) == WALL {
        return INVALID_SCORE;
    }
    let mut seen = vec![false; grid.cells.len()];
    seen[grid.start.0 * grid.width + grid.start.1] = true;
    let mut best = INVALID_SCORE;
    dfs(grid, grid.start, 0, &mut seen, &mut best);
    best
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub width: usize,
    pub height: usize,
    pub patterns: u64,
    pub mismatches: u64,
    /// First disagreeing pattern, as a bit mask over row-major cells.
    pub first_mismatch: Option<u64>,
}

/// Largest grid [`verify_exhaustive`] accepts, in cells.
pub const MAX_VERIFY_CELLS: usize = 20;

/// Scores every wall pattern of a `width`x`height` grid with both
/// [`score_maze`] and [`exhaustive_score`] and counts disagreements.
pub fn verify_exhaustive(width: usize, height: usize) -> Result<VerifyReport, MazeError> {
    let n = width * height;
    if width == 0 || height == 0 || !(2..=MAX_VERIFY_CELLS).contains(&n) {
        return Err(MazeError::MalformedGrid(format!(
            "exhaustive check needs between 2 and {MAX_VERIFY_CELLS} cells, got {width}x{height}"
        )));
    }
    let mut grid = MazeGrid::open(width, height);
    let mut report = VerifyReport {
        width,
        height,
        patterns: 1 << n,
        mismatches: 0,
        first_mismatch: None,
    };
    for mask in 0..report.patterns {
        for (i, cell) in grid.cells.iter_mut().enumerate() {
            *cell = ((mask >> i) & 1) as u8;
        }
        if bfs_distance(&grid) != exhaustive_score(&grid) {
            report.mismatches += 1;
            report.first_mismatch.get_or_insert(mask);
        }
    }
    Ok(report)
}

/// ASCII rendering used in prompts: `#` wall, `.` corridor, `S`/`E`
/// endpoints.
pub fn render_ascii(grid: &MazeGrid) -> String {
    let mut out = String::new();
    for r in 0..grid.height {
        for c in 0..grid.width {
            let ch = if (r, c) == grid.start {
                'S'
            } else if (r, c) == grid.end {
                'E'
            } else if grid.get(r, c) == WALL {
                '#'
            } else {
                '.'
            };
            out.push(ch);
        }
        let _ = writeln!(out);
    }
    out
}
