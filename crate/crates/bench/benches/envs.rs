use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use llmsearch::env::grid::{self, evaluate_policy, GameId};
use llmsearch::env::maze::{ea_baseline, score_maze, MazeGrid};
use llmsearch::env::vehicle::{episode_set, evaluate_driver};
use llmsearch::stub::StubRunner;
use llmsearch::ProgramRunner;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_maze(seed: u64, density: f64) -> MazeGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = MazeGrid::open(20, 20);
    for c in g.cells.iter_mut() {
        *c = rng.random_bool(density) as u8;
    }
    g.cells[0] = 0;
    *g.cells.last_mut().unwrap() = 0;
    g
}

fn maze(c: &mut Criterion) {
    let open = MazeGrid::open(20, 20);
    let walled = random_maze(1, 0.3);
    c.bench_function("score_maze open 20x20", |b| {
        b.iter(|| score_maze(black_box(&open)))
    });
    c.bench_function("score_maze walls 20x20", |b| {
        b.iter(|| score_maze(black_box(&walled)))
    });
    c.bench_function("ea_baseline 1000 evals", |b| {
        b.iter(|| ea_baseline((20, 20), 1000, black_box(7)))
    });
}

fn games(c: &mut Criterion) {
    for game in GameId::ALL {
        let actions = game.actions();
        c.bench_function(&format!("{} 1000 random steps", game.name()), |b| {
            b.iter(|| {
                let mut rng = ChaCha8Rng::seed_from_u64(3);
                let mut s = grid::reset(game, 0);
                for _ in 0..1000 {
                    if s.terminal {
                        s = grid::reset(game, rng.random());
                    }
                    s.step(actions[rng.random_range(0..actions.len())]).unwrap();
                }
                black_box(s.score)
            })
        });
    }
    let mut runner = StubRunner::new();
    runner
        .load("p", "def policy\nact track ball paddle", "policy")
        .unwrap();
    c.bench_function("breakout evaluate 5 episodes in-process", |b| {
        b.iter(|| {
            evaluate_policy(GameId::Breakout, &mut runner, 5, 0, 1000)
                .unwrap()
                .fitness
        })
    });
}

fn vehicle(c: &mut Criterion) {
    let tasks = episode_set(30.0);
    let mut runner = StubRunner::new();
    runner.load("d", "def policy\nact steer", "policy").unwrap();
    c.bench_function("vehicle evaluate 5 episodes", |b| {
        b.iter(|| evaluate_driver(&mut runner, 30.0, &tasks).unwrap().d_avg)
    });
}

criterion_group!(benches, maze, games, vehicle);
criterion_main!(benches);
