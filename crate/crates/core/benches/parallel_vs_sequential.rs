use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fracpme::diffusion::{self, BoundaryCondition};
use fracpme::fdm::{self, FdConfig, FdProblem};
use fracpme::spfun::QuadConfig;
use fracpme::volterra::{self, Method, SolverConfig};
use fracpme::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn volterra_solve(c: &mut Criterion) {
    let p = diffusion::params_from_bc(0.5, 3.0, BoundaryCondition::Dirichlet).unwrap();
    let problem = diffusion::build_problem(&p, &QuadConfig::default()).unwrap();
    let mut group = c.benchmark_group("volterra_trapezoid");
    group.sample_size(10);
    for n in [100, 200] {
        for (name, exec) in MODES {
            let cfg = SolverConfig::new(n, Method::Trapezoid).with_exec(exec);
            group.bench_with_input(BenchmarkId::new(name, n), &cfg, |b, cfg| {
                b.iter(|| volterra::solve(&problem, cfg).unwrap())
            });
        }
    }
    group.finish();
}

fn fd_run(c: &mut Criterion) {
    let problem = FdProblem::new(0.7, 2.0, BoundaryCondition::Dirichlet).unwrap();
    let mut group = c.benchmark_group("fd_l1");
    group.sample_size(10);
    for n in [200, 400] {
        for (name, exec) in MODES {
            let dt = 1.0 / n as f64;
            let mut cfg = FdConfig::new(dt, 5.0 * dt, 1.0, 2.5);
            cfg.exec = exec;
            group.bench_with_input(BenchmarkId::new(name, n), &cfg, |b, cfg| b.iter(|| fdm::run(&problem, cfg).unwrap()));
        }
    }
    group.finish();
}

criterion_group!(benches, volterra_solve, fd_run);
criterion_main!(benches);
