use fracpme::analysis;
use fracpme::diffusion::{self, BoundaryCondition, SelfSimilarParams};
use fracpme::fdm::{self, BenchOptions, FdConfig, FdProblem};
use fracpme::spfun::QuadConfig;
use fracpme::volterra::{self, GridSolution, KernelSpec, SolverConfig, VolterraProblem};
use fracpme::Execution;
use log::info;

use crate::config::{Command, KernelChoice, RunConfig};
use crate::table::{Cell, Table};
use crate::CliError;

/// Result of a command: the table plus whether some rows recorded a failure
/// that should still surface in the exit code.
pub struct Outcome {
    pub table: Table,
    pub failure: Option<CliError>,
}

impl From<Table> for Outcome {
    fn from(table: Table) -> Self {
        Outcome { table, failure: None }
    }
}

pub fn dispatch(cfg: &RunConfig) -> Result<Outcome, CliError> {
    match cfg.command {
        Command::Solve => solve(cfg).map(Into::into),
        Command::Front => front(cfg).map(Into::into),
        Command::Order => order(cfg),
        Command::M0 => m0(cfg),
        Command::Fd => fd(cfg).map(Into::into),
        Command::Bench => bench(cfg).map(Into::into),
        Command::Profile => profile(cfg).map(Into::into),
    }
}

fn exec() -> Execution {
    Execution::default()
}

fn solver(cfg: &RunConfig, n: usize) -> SolverConfig {
    SolverConfig::new(n, cfg.method).with_start(cfg.start).with_exec(exec())
}

/// Every `(bc, α, m)` combination, in that nesting order.
fn sweep(cfg: &RunConfig) -> Vec<(BoundaryCondition, f64, f64)> {
    let mut out = Vec::new();
    for &bc in &cfg.bc {
        for &alpha in &cfg.alpha {
            for &m in &cfg.m {
                out.push((bc, alpha, m));
            }
        }
    }
    out
}

fn diffusion_solution(cfg: &RunConfig, bc: BoundaryCondition, alpha: f64, m: f64, n: usize) -> Result<(SelfSimilarParams, GridSolution), CliError> {
    let p = diffusion::params_from_bc(alpha, m, bc)?;
    let problem = diffusion::build_problem(&p, &QuadConfig::default())?;
    let sol = volterra::solve(&problem, &solver(cfg, n))?;
    Ok((p, sol))
}

fn sqrt_sine_kernel() -> KernelSpec {
    KernelSpec::new(0.5, 0.5, 1.0, |z, s| (z - s).max(0.0).sqrt() / (1.0 + s.sin().powi(2))).expect("valid kernel")
}

fn push_nodes(table: &mut Table, prefix: &[Cell], sol: &GridSolution) {
    for (n, (v, y)) in sol.v.iter().zip(&sol.y).enumerate() {
        let mut row = prefix.to_vec();
        row.extend([sol.z(n).into(), (*v).into(), (*y).into()]);
        table.push(row);
    }
}

fn solve(cfg: &RunConfig) -> Result<Table, CliError> {
    match cfg.kernel {
        KernelChoice::Diffusion => {
            let mut table = Table::new(&["bc", "alpha", "m", "z", "v", "y"]);
            for (bc, alpha, m) in sweep(cfg) {
                info!("solve bc={bc} alpha={alpha} m={m} n={}", cfg.n_steps);
                let (_, sol) = diffusion_solution(cfg, bc, alpha, m, cfg.n_steps)?;
                push_nodes(&mut table, &[bc.to_string().into(), alpha.into(), m.into()], &sol);
            }
            Ok(table)
        }
        KernelChoice::Power => {
            let mut table = Table::new(&["m", "gamma", "max_error"]);
            for &m in &cfg.m {
                for &gamma in &cfg.gamma {
                    let problem = VolterraProblem::new(m, KernelSpec::power(1.0, gamma)?)?;
                    let sol = volterra::solve(&problem, &solver(cfg, cfg.n_steps))?;
                    let exact = volterra::constant_solution(1.0, gamma, m)?;
                    let err = sol.v.iter().map(|v| (v - exact).abs()).fold(0.0, f64::max);
                    table.push(vec![m.into(), gamma.into(), err.into()]);
                }
            }
            Ok(table)
        }
        KernelChoice::SqrtSine => {
            let mut table = Table::new(&["m", "z", "v", "y"]);
            for &m in &cfg.m {
                let problem = VolterraProblem::new(m, sqrt_sine_kernel())?;
                let sol = volterra::solve(&problem, &solver(cfg, cfg.n_steps))?;
                push_nodes(&mut table, &[m.into()], &sol);
            }
            Ok(table)
        }
    }
}

fn front(cfg: &RunConfig) -> Result<Table, CliError> {
    let mut table = Table::new(&["bc", "alpha", "m", "n", "eta_star", "c_scale", "y_at_1", "eta_error_estimate"]);
    let coarse_n = cfg.n_steps / 2;
    for (bc, alpha, m) in sweep(cfg) {
        info!("front bc={bc} alpha={alpha} m={m} n={}", cfg.n_steps);
        let (p, sol) = diffusion_solution(cfg, bc, alpha, m, cfg.n_steps)?;
        let fine = diffusion::wetting_front(&sol, &p)?;
        let (_, coarse_sol) = diffusion_solution(cfg, bc, alpha, m, coarse_n)?;
        let coarse = diffusion::wetting_front(&coarse_sol, &p)?;
        // second-order Richardson estimate of the error in the fine value
        let ratio = cfg.n_steps as f64 / coarse_n as f64;
        let estimate = (fine.eta_star - coarse.eta_star).abs() / (ratio * ratio - 1.0);
        table.push(vec![
            bc.to_string().into(),
            alpha.into(),
            m.into(),
            cfg.n_steps.into(),
            fine.eta_star.into(),
            fine.c_scale.into(),
            fine.y_at_1.into(),
            estimate.into(),
        ]);
    }
    Ok(table)
}

fn order(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let mut table = Table::new(&["bc", "alpha", "m", "order", "v_n", "v_2n", "v_4n", "status"]);
    let mut failure = None;
    let mut push = |table: &mut Table, bc: Cell, alpha: Cell, m: f64, est: Result<analysis::OrderEstimate, String>| match est {
        Ok(e) => table.push(vec![
            bc,
            alpha,
            m.into(),
            e.value.into(),
            e.triple[0].into(),
            e.triple[1].into(),
            e.triple[2].into(),
            "ok".into(),
        ]),
        Err(msg) => {
            failure.get_or_insert_with(|| CliError::Numerical(msg.clone()));
            table.push(vec![bc, alpha, m.into(), Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty, msg.into()]);
        }
    };
    match cfg.kernel {
        KernelChoice::Diffusion => {
            for &bc in &cfg.bc {
                info!("order table bc={bc} base n={}", cfg.n_steps);
                for row in analysis::order_table_diffusion(&cfg.alpha, &cfg.m, bc, cfg.n_steps, exec()) {
                    for cell in row {
                        push(&mut table, bc.to_string().into(), cell.alpha.into(), cell.m, cell.estimate);
                    }
                }
            }
        }
        KernelChoice::SqrtSine => {
            for &m in &cfg.m {
                let problem = VolterraProblem::new(m, sqrt_sine_kernel())?;
                let est = analysis::aitken_order(|n| volterra::solve(&problem, &solver(cfg, n)).map(|s| s.v_terminal()), cfg.n_steps);
                push(&mut table, Cell::Empty, Cell::Empty, m, est.map_err(|e| e.to_string()));
            }
        }
        KernelChoice::Power => {
            return Err(CliError::Config("order estimates need a kernel whose solution is not constant".into()));
        }
    }
    Ok(Outcome { table, failure })
}

fn m0(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let mut table = Table::new(&["bc", "alpha", "m0", "status"]);
    let mut failure = None;
    for &bc in &cfg.bc {
        for &alpha in &cfg.alpha {
            info!("m0 bc={bc} alpha={alpha}");
            match analysis::m0_of_alpha(alpha, bc) {
                Ok(m0) => table.push(vec![bc.to_string().into(), alpha.into(), m0.into(), "ok".into()]),
                Err(e) => {
                    table.push(vec![bc.to_string().into(), alpha.into(), Cell::Empty, e.to_string().into()]);
                    failure.get_or_insert(CliError::from(e));
                }
            }
        }
    }
    Ok(Outcome { table, failure })
}

fn fd(cfg: &RunConfig) -> Result<Table, CliError> {
    let mut table = Table::new(&["bc", "alpha", "m", "t", "x", "u"]);
    let s = &cfg.fd;
    let mut fd_cfg = FdConfig::new(s.dt, s.dx, s.t_final, s.x_max);
    fd_cfg.theta = s.theta;
    fd_cfg.zero_threshold = s.zero_threshold;
    fd_cfg.exec = exec();
    fd_cfg.validate()?;
    for (bc, alpha, m) in sweep(cfg) {
        info!("fd bc={bc} alpha={alpha} m={m} levels={}", fd_cfg.n_time());
        let problem = FdProblem::new(alpha, m, bc)?;
        let field = fdm::run(&problem, &fd_cfg)?;
        let last = field.levels() - 1;
        let exported = (0..=last).filter(|&i| i == last || (s.snapshot_every > 0 && i % s.snapshot_every == 0));
        for i in exported {
            for (j, &u) in field.rows[i].iter().enumerate() {
                table.push(vec![bc.to_string().into(), alpha.into(), m.into(), field.t(i).into(), field.x(j).into(), u.into()]);
            }
        }
        let front = fdm::wetting_front_fd(&field, &fd_cfg)?;
        table.note(format!("front[{bc},{alpha},{m}]"), front);
    }
    Ok(table)
}

fn bench(cfg: &RunConfig) -> Result<Table, CliError> {
    let mut table = Table::new(&[
        "alpha",
        "m",
        "eps",
        "volterra_n",
        "volterra_ops",
        "volterra_seconds",
        "volterra_error",
        "fd_n",
        "fd_ops",
        "fd_seconds",
        "fd_error",
    ]);
    let opts = BenchOptions {
        budget_seconds: cfg.bench.budget_seconds,
        dx_over_dt: cfg.bench.dx_over_dt,
        exec: exec(),
        ..BenchOptions::default()
    };
    for &alpha in &cfg.alpha {
        for &m in &cfg.m {
            info!("bench alpha={alpha} m={m}");
            let report = fdm::complexity_benchmark(&cfg.bench.tolerances, alpha, m, &opts)?;
            for row in &report.rows {
                let (v, f) = (row.volterra, row.fd);
                table.push(vec![
                    alpha.into(),
                    m.into(),
                    row.eps.into(),
                    v.map(|s| s.n).into(),
                    v.map(|s| s.ops).into(),
                    v.map(|s| s.seconds).into(),
                    v.map(|s| s.error).into(),
                    f.map(|s| s.n).into(),
                    f.map(|s| s.ops).into(),
                    f.map(|s| s.seconds).into(),
                    f.map(|s| s.error).into(),
                ]);
            }
            table.note(format!("reference_front[{alpha},{m}]"), report.reference_front);
            table.note(format!("volterra_slope[{alpha},{m}]"), report.volterra_slope);
            table.note(format!("fd_slope[{alpha},{m}]"), report.fd_slope);
        }
    }
    Ok(table)
}

fn profile(cfg: &RunConfig) -> Result<Table, CliError> {
    let mut table = Table::new(&["bc", "alpha", "m", "t", "x", "u"]);
    let t_max = cfg.t.iter().copied().fold(0.0, f64::max);
    for (bc, alpha, m) in sweep(cfg) {
        info!("profile bc={bc} alpha={alpha} m={m}");
        let (p, sol) = diffusion_solution(cfg, bc, alpha, m, cfg.n_steps)?;
        let front = diffusion::wetting_front(&sol, &p)?;
        // common x-range slightly past the furthest front
        let x_end = 1.05 * front.eta_star * t_max.powf(p.b);
        for &t in &cfg.t {
            for k in 0..cfg.points {
                let x = x_end * k as f64 / (cfg.points - 1) as f64;
                let u = diffusion::reconstruct_u(x, t, &sol, &front, &p);
                table.push(vec![bc.to_string().into(), alpha.into(), m.into(), t.into(), x.into(), u.into()]);
            }
        }
        table.note(format!("eta_star[{bc},{alpha},{m}]"), front.eta_star);
    }
    Ok(table)
}
