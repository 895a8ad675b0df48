use fracpme::diffusion::{self, BoundaryCondition, FrontResult, SelfSimilarParams};
use fracpme::fdm::{self, FdConfig, FdField, FdProblem};
use fracpme::spfun::QuadConfig;
use fracpme::volterra::{self, GridSolution, Method, SolverConfig};
use fracpme::Execution;

fn volterra_reference(alpha: f64, m: f64) -> (SelfSimilarParams, GridSolution, FrontResult) {
    let p = diffusion::params_from_bc(alpha, m, BoundaryCondition::Dirichlet).unwrap();
    let problem = diffusion::build_problem(&p, &QuadConfig::default()).unwrap();
    let sol = volterra::solve(&problem, &SolverConfig::new(200, Method::Trapezoid)).unwrap();
    let front = diffusion::wetting_front(&sol, &p).unwrap();
    (p, sol, front)
}

fn fd_run(alpha: f64, m: f64, n: usize) -> (FdConfig, FdField) {
    let problem = FdProblem::new(alpha, m, BoundaryCondition::Dirichlet).unwrap();
    let dt = 1.0 / n as f64;
    let cfg = FdConfig::new(dt, 5.0 * dt, 1.0, 2.5);
    let field = fdm::run(&problem, &cfg).unwrap();
    (cfg, field)
}

#[test]
fn classical_limit_front() {
    let (_, _, front) = volterra_reference(1.0, 2.0);
    let (cfg, field) = fd_run(1.0, 2.0, 800);
    let x = fdm::wetting_front_fd(&field, &cfg).unwrap();
    assert!((x - front.eta_star).abs() <= 0.02 * front.eta_star, "{x} vs {}", front.eta_star);
}

#[test]
fn profile_converges_to_self_similar_solution() {
    let (p, sol, front) = volterra_reference(0.999, 2.0);
    let profile_error = |n: usize| {
        let (_, field) = fd_run(0.999, 2.0, n);
        field
            .last()
            .iter()
            .enumerate()
            .map(|(j, &u)| (u - diffusion::reconstruct_u(field.x(j), 1.0, &sol, &front, &p)).abs())
            .fold(0.0, f64::max)
    };
    let (coarse, fine) = (profile_error(100), profile_error(400));
    assert!(fine < coarse, "{coarse} -> {fine}");
    assert!(fine < 0.1);
}

#[test]
fn halving_threshold_moves_front_at_most_one_cell() {
    let (cfg, field) = fd_run(0.999, 2.0, 400);
    let mut half = cfg;
    half.zero_threshold /= 2.0;
    let a = fdm::wetting_front_fd(&field, &cfg).unwrap();
    let b = fdm::wetting_front_fd(&field, &half).unwrap();
    assert!((a - b).abs() <= cfg.dx * 1.000001);
}

#[test]
fn execution_modes_agree() {
    let problem = FdProblem::new(0.6, 3.0, BoundaryCondition::Neumann).unwrap();
    let mut cfg = FdConfig::new(0.005, 0.01, 0.5, 3.0);
    cfg.exec = Execution::Sequential;
    let seq = fdm::run(&problem, &cfg).unwrap();
    cfg.exec = Execution::Parallel;
    let par = fdm::run(&problem, &cfg).unwrap();
    assert_eq!(seq.rows, par.rows);
}

#[test]
fn history_cost_grows_linearly_with_level() {
    let problem = FdProblem::new(0.5, 2.0, BoundaryCondition::Dirichlet).unwrap();
    let cfg = FdConfig::new(0.01, 0.02, 1.0, 3.0);
    let mut field = fdm::initial_field(&problem, &cfg);
    let mut per_step = Vec::new();
    for _ in 0..cfg.n_time() {
        let before = field.flops;
        fdm::step(&mut field, &problem, &cfg).unwrap();
        per_step.push(field.flops - before);
    }
    let diffs: Vec<u64> = per_step.windows(2).map(|w| w[1] - w[0]).collect();
    assert!(diffs.iter().all(|&d| d == diffs[0]) && diffs[0] > 0);
}
