use criterion::{criterion_group, criterion_main, Criterion};
use smartmc_bench::problem;
use smartmc_core::smart_mc::{log_likelihood, CoefficientMatrix, LikelihoodObjective};
use smartmc_core::{random_point, Objective, SphereShape};

fn likelihood(c: &mut Criterion) {
    let pr = problem(10, 1000, 20, 5);
    let keys = pr.mask.masked_entries();
    let point = random_point(&SphereShape::uniform(keys.len(), 6).unwrap(), 1).unwrap();
    let coeffs = CoefficientMatrix::from_point(&keys, &point).unwrap();
    let objective = LikelihoodObjective::new(&pr.data, &pr.mask, &pr.empirical).unwrap();

    let mut g = c.benchmark_group("likelihood_n10_k1000_t20_p5");
    g.bench_function("reference", |b| {
        b.iter(|| log_likelihood(&coeffs, &pr.data, &pr.mask, &pr.empirical).unwrap())
    });
    g.bench_function("objective_full", |b| b.iter(|| objective.evaluate(&point)));
    g.bench_function("objective_one_block", |b| {
        let replacement = point.block(0).to_vec();
        b.iter(|| objective.term_with_block(&point, 0, &replacement))
    });
    g.finish();
}

criterion_group!(benches, likelihood);
criterion_main!(benches);
