use llmsearch::env::maze::{
    ea_baseline, evaluate_generator, exhaustive_score, score_maze, verify_exhaustive, MazeGrid,
    INVALID_SCORE, WALL,
};
use llmsearch::stub::StubRunner;
use llmsearch::ProgramRunner;
use proptest::prelude::*;

/// All-pairs shortest paths by Floyd-Warshall over the corridor graph.
fn floyd_score(grid: &MazeGrid) -> i64 {
    let (w, h) = (grid.width, grid.height);
    let n = w * h;
    const INF: i64 = i64::MAX / 4;
    let mut d = vec![vec![INF; n]; n];
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if grid.cells[i] == WALL {
                continue;
            }
            d[i][i] = 0;
            if c + 1 < w && grid.cells[i + 1] != WALL {
                d[i][i + 1] = 1;
                d[i + 1][i] = 1;
            }
            if r + 1 < h && grid.cells[i + w] != WALL {
                d[i][i + w] = 1;
                d[i + w][i] = 1;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    let v = d[grid.start.0 * w + grid.start.1][grid.end.0 * w + grid.end.1];
    if v >= INF {
        -1
    } else {
        v
    }
}

fn from_mask(w: usize, h: usize, mask: u64) -> MazeGrid {
    let mut g = MazeGrid::open(w, h);
    for (i, cell) in g.cells.iter_mut().enumerate() {
        *cell = ((mask >> i) & 1) as u8;
    }
    g
}

#[test]
fn every_4x4_pattern_matches_floyd_warshall() {
    let mut reachable = 0;
    for mask in 0..(1u64 << 16) {
        let g = from_mask(4, 4, mask);
        let expected = floyd_score(&g);
        assert_eq!(score_maze(&g).unwrap(), expected, "pattern {mask:#06x}");
        if expected >= 0 {
            reachable += 1;
        }
    }
    // Sanity on the oracle itself: the open grid is reachable, a blocked start is not.
    assert!(reachable > 0);
    assert_eq!(floyd_score(&from_mask(4, 4, 0)), 6);
    assert_eq!(floyd_score(&from_mask(4, 4, 1)), -1);
}

#[test]
fn library_verifier_agrees_on_4x4() {
    let r = verify_exhaustive(4, 4).unwrap();
    assert_eq!(r.patterns, 65536);
    assert_eq!(r.mismatches, 0);
    assert_eq!(r.first_mismatch, None);
}

#[test]
fn exhaustive_score_matches_floyd_on_sample() {
    for mask in (0..(1u64 << 12)).step_by(7) {
        let g = from_mask(4, 3, mask);
        assert_eq!(exhaustive_score(&g), floyd_score(&g), "pattern {mask:#05x}");
    }
}

#[test]
fn open_grid_anchors() {
    assert_eq!(score_maze(&MazeGrid::open(10, 10)).unwrap(), 18);
    assert_eq!(score_maze(&MazeGrid::open(20, 20)).unwrap(), 38);
    let mut g = MazeGrid::open(20, 20);
    g.set(0, 0, WALL);
    assert_eq!(score_maze(&g).unwrap(), INVALID_SCORE);
}

#[test]
fn single_evaluation_returns_the_open_grid() {
    let run = ea_baseline((20, 20), 1, 0);
    assert_eq!(run.evaluations, 1);
    assert_eq!(run.score, 38);
    assert_eq!(run.best, MazeGrid::open(20, 20));
    assert_eq!(run.history, vec![38]);
}

#[test]
fn ea_is_deterministic_and_monotone() {
    let a = ea_baseline((20, 20), 2_000, 11);
    let b = ea_baseline((20, 20), 2_000, 11);
    assert_eq!(a, b);
    assert_eq!(a.evaluations, 2_000);
    assert_eq!(a.history.len(), 2_000);
    assert!(a.history.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(score_maze(&a.best).unwrap(), a.score);
    assert!(a.score >= 38);
}

#[test]
fn random_walls_are_rescored_consistently() {
    let mut r = StubRunner::new();
    r.load("g", "def generate\ngen walls 0.3", "generate")
        .unwrap();
    let report = evaluate_generator(&mut r, 20, (20, 20), 100).unwrap();
    assert_eq!(report.mazes.len(), 20);
    for m in &report.mazes {
        let g = m.grid.as_ref().unwrap();
        assert_eq!(m.score, floyd_score(g), "seed {}", m.seed);
    }
    let mean = report.scores.iter().sum::<i64>() as f64 / 20.0;
    assert!((report.d_avg - mean).abs() < 1e-12);
    assert_eq!(report.d_max, *report.scores.iter().max().unwrap());
}

fn grid_strategy() -> impl Strategy<Value = MazeGrid> {
    (2usize..9, 2usize..9)
        .prop_flat_map(|(w, h)| {
            (
                Just(w),
                Just(h),
                prop::collection::vec(prop::bool::weighted(0.3), w * h),
            )
        })
        .prop_map(|(w, h, walls)| {
            let mut g = MazeGrid::open(w, h);
            for (cell, wall) in g.cells.iter_mut().zip(walls) {
                *cell = wall as u8;
            }
            g
        })
}

proptest! {
    #[test]
    fn transpose_preserves_score(g in grid_strategy()) {
        prop_assert_eq!(score_maze(&g).unwrap(), score_maze(&g.transpose()).unwrap());
    }

    #[test]
    fn adding_a_wall_never_shortens_the_path(g in grid_strategy(), pick in any::<prop::sample::Index>()) {
        let before = score_maze(&g).unwrap();
        let mut walled = g.clone();
        let i = pick.index(g.cells.len());
        walled.cells[i] = WALL;
        let after = score_maze(&walled).unwrap();
        prop_assert!(after == INVALID_SCORE || after >= before, "{} -> {}", before, after);
    }

    #[test]
    fn bfs_agrees_with_floyd(g in grid_strategy()) {
        prop_assert_eq!(score_maze(&g).unwrap(), floyd_score(&g));
    }
}
