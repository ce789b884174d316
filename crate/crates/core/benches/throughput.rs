use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use shadowcost::fixtures;
use shadowcost::pipeline::{self, PipelineOptions};
use shadowcost::reference;
use shadowcost::scenario::{self, ScenarioInputs};
use shadowcost::solver::{self, NewtonProblem, SolverConfig};
use shadowcost::{equilibrium, Execution};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn sampler(c: &mut Criterion) {
    let (market, _, _) = fixtures::five_asset();
    let mut group = c.benchmark_group("sampler");
    group.sample_size(10);
    for count in [10_000usize, 100_000] {
        group.throughput(Throughput::Elements(count as u64));
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, count), &count, |b, &count| {
                b.iter(|| reference::sample_posterior(market.pi_c(), market.sigma(), count, 7, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn sweep_inputs(points: usize) -> ScenarioInputs {
    let text = include_str!("../data/paper_tables.scenario");
    let file = scenario::parse_scenario(text).unwrap();
    let mut inputs = file.inputs().unwrap();
    inputs.sweeps.tau = (1..=points).map(|k| k as f64 / (points + 1) as f64).collect();
    inputs.sweeps.confidence = (1..=points).map(|k| k as f64 / (points + 1) as f64).collect();
    inputs
}

fn sweeps(c: &mut Criterion) {
    let mut group = c.benchmark_group("pipeline_sweeps");
    group.sample_size(20);
    for points in [8usize, 64] {
        let inputs = sweep_inputs(points);
        for (name, exec) in MODES {
            let options = PipelineOptions {
                execution: exec,
                ..Default::default()
            };
            group.bench_with_input(BenchmarkId::new(name, points), &inputs, |b, inputs| {
                b.iter(|| pipeline::run_inputs(inputs, &options).unwrap())
            });
        }
    }
    group.finish();
}

fn newton_problems(count: usize) -> Vec<NewtonProblem> {
    let (market, shadow, _) = fixtures::five_asset();
    let capm = solver::capm_weights(&market).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    (0..count)
        .map(|_| {
            let bump = DVector::from_fn(market.n(), |_, _| rng.random_range(-0.02..0.02));
            let lambda = shadow
                .lambda
                .component_mul(&DVector::from_fn(market.n(), |_, _| rng.random_range(0.5..1.5)));
            let pi = equilibrium::implied_excess_returns(&market, &lambda, &(&capm + bump));
            NewtonProblem {
                scenario: market.clone(),
                lambda,
                pi,
            }
        })
        .collect()
}

fn newton_batch(c: &mut Criterion) {
    let config = SolverConfig::default();
    let mut group = c.benchmark_group("newton_batch");
    for count in [256usize, 4096] {
        let problems = newton_problems(count);
        group.throughput(Throughput::Elements(count as u64));
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, count), &problems, |b, problems| {
                b.iter(|| solver::solve_many(exec, problems, &config))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, sampler, sweeps, newton_batch);
criterion_main!(benches);
