use std::hint::black_box;
use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use secgames::audit::rps_prompt_game;
use secgames::equilibrium::{solve_bimatrix, solve_zero_sum};
use secgames::game::matrix_from_rows;
use secgames::interdiction::solve_minmax_interdiction;
use secgames::markov::shapley_value_iteration;
use secgames::prompt::llm_nash_equilibria;
use secgames::signaling::{enumerate_pure_pbne, HoneypotParams};
use secgames::spec::{load_game_spec, LoadOptions, LoadedSpec};
use secgames::stackelberg::solve_leader_commitment;
use secgames::workflow::run_workflow;
use secgames::{ActionSpace, BimatrixGame};

fn fixture(name: &str) -> LoadedSpec {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name);
    load_game_spec(path, &LoadOptions::default()).unwrap().1
}

fn random_rows(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Vec<Vec<f64>> {
    (0..m).map(|_| (0..n).map(|_| rng.random_range(-5.0..5.0)).collect()).collect()
}

fn matrix_games(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut group = c.benchmark_group("solve_zero_sum");
    for n in [3, 6, 9] {
        let g = BimatrixGame::zero_sum(
            ActionSpace::indexed("r", n).unwrap(),
            ActionSpace::indexed("c", n).unwrap(),
            matrix_from_rows(&random_rows(&mut rng, n, n)).unwrap(),
        )
        .unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &g, |b, g| b.iter(|| solve_zero_sum(black_box(g)).unwrap()));
    }
    group.finish();

    let mut group = c.benchmark_group("solve_bimatrix");
    for n in [3, 5] {
        let g = BimatrixGame::new(
            ActionSpace::indexed("r", n).unwrap(),
            ActionSpace::indexed("c", n).unwrap(),
            matrix_from_rows(&random_rows(&mut rng, n, n)).unwrap(),
            matrix_from_rows(&random_rows(&mut rng, n, n)).unwrap(),
        )
        .unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &g, |b, g| b.iter(|| solve_bimatrix(black_box(g)).unwrap()));
    }
    group.finish();
}

fn dynamic_games(c: &mut Criterion) {
    let LoadedSpec::Markov(markov) = fixture("markov_breach.json") else { unreachable!() };
    c.bench_function("shapley_value_iteration/markov_breach", |b| b.iter(|| shapley_value_iteration(black_box(&markov)).unwrap()));

    let LoadedSpec::Stackelberg(s) = fixture("stackelberg_deception.json") else { unreachable!() };
    c.bench_function("solve_leader_commitment/deception", |b| b.iter(|| solve_leader_commitment(black_box(&s.game)).unwrap()));

    let honeypot = HoneypotParams::default().build().unwrap();
    c.bench_function("enumerate_pure_pbne/honeypot", |b| b.iter(|| enumerate_pure_pbne(black_box(&honeypot)).unwrap()));
}

fn networks_and_prompts(c: &mut Criterion) {
    let LoadedSpec::Interdiction(net) = fixture("interdiction_network.json") else { unreachable!() };
    let mut group = c.benchmark_group("solve_minmax_interdiction");
    for (ka, kd) in [(1, 1), (2, 2)] {
        let inst = net.with_budgets(ka, kd).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(format!("kA{ka}_kD{kd}")), &inst, |b, i| {
            b.iter(|| solve_minmax_interdiction(black_box(i)).unwrap())
        });
    }
    group.finish();

    let game = rps_prompt_game().unwrap();
    c.bench_function("llm_nash_equilibria/rps", |b| b.iter(|| llm_nash_equilibria(black_box(&game)).unwrap()));

    let LoadedSpec::Workflow(w) = fixture("monitor_loop.json") else { unreachable!() };
    c.bench_function("run_workflow/monitor_loop", |b| b.iter(|| run_workflow(black_box(&w.graph), &w.initial_inputs, 3).unwrap()));
}

criterion_group!(benches, matrix_games, dynamic_games, networks_and_prompts);
criterion_main!(benches);
