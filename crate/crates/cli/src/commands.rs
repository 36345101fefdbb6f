use serde::Serialize;
use twotemp::chapman_enskog::{relax_f, relax_k, solve_abc, transport_coeffs, transport_mc, CoefficientTable, GramMethod};
use twotemp::dsmc::{dsmc_ensemble, relaxation_ode, RelaxationParams};
use twotemp::fluid::{equilibrium_gamma, rankine_hugoniot, shock_structure, ExactRiemann, FluidSolver, FluidState1D, ProfileRow, ShockSetup, GAMMA_TR};
use twotemp::{Boundary, CeOptions, CoefficientProvider, FluidParams, GasModel, MacroState, Primitive, ScalingMode};

use crate::config::{CoefficientSource, RunConfig, TaskKind};
use crate::error::{CliError, CliResult};
use crate::output::Writer;
use crate::verify::{self, CheckReport, Status};

/// Cross coefficients below this multiple of Lambda_tr_tr are reported as 0.
const CROSS_ZERO_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct Valued {
    pub name: &'static str,
    pub value: f64,
    pub uncertainty: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoeffsReport {
    pub gas: GasModel,
    pub state: MacroState,
    pub coefficients: Vec<Valued>,
    pub basis: (usize, usize),
    /// Same quantities on the basis with half the modes in each direction.
    pub half_basis: (usize, usize),
    pub half_basis_relative_change: Vec<f64>,
    pub gram_residual: f64,
    pub constraint_residuals: (f64, f64),
    pub k_kernel_residual: Option<f64>,
}

pub fn coeffs(cfg: &RunConfig) -> CliResult<CoeffsReport> {
    let gas = cfg.gas_model()?;
    let st = cfg.macro_state()?;
    let opts = cfg.ce_options();
    let half = CeOptions { n_c: (opts.n_c / 2).max(2), n_i: (opts.n_i / 2).max(2), ..opts };
    let sol = solve_abc(&st, &gas, &opts)?;
    let tc = transport_coeffs(&sol)?;
    let coarse = transport_coeffs(&solve_abc(&st, &gas, &half)?)?;
    let mut values = vec![tc.lambda_mu, tc.lambda_tr_tr, tc.lambda_tr_int, tc.lambda_int_tr, tc.lambda_int_int];
    let coarse_v = [coarse.lambda_mu, coarse.lambda_tr_tr, coarse.lambda_tr_int, coarse.lambda_int_tr, coarse.lambda_int_int];
    let mut unc: Vec<f64> = values.iter().zip(&coarse_v).map(|(a, b)| (a - b).abs()).collect();
    if matches!(opts.gram, GramMethod::MonteCarlo { .. }) {
        let mc = transport_mc(&st, &gas, &opts)?;
        for (u, e) in unc.iter_mut().zip(&mc) {
            *u = u.hypot(e.std_error);
        }
    }
    if gas.alpha == 0.0 {
        for k in [2, 3] {
            if values[k].abs() < CROSS_ZERO_TOL * values[1] {
                values[k] = 0.0;
                unc[k] = unc[k].max(CROSS_ZERO_TOL * values[1]);
            }
        }
    }
    let change: Vec<f64> = values.iter().zip(&coarse_v).map(|(a, b)| if *a == 0.0 { 0.0 } else { (a - b).abs() / a.abs() }).collect();
    let names = ["lambda_mu", "lambda_tr_tr", "lambda_tr_int", "lambda_int_tr", "lambda_int_int"];
    let mut coefficients: Vec<Valued> = names.iter().zip(values.iter().zip(&unc)).map(|(n, (v, u))| Valued { name: n, value: *v, uncertainty: *u }).collect();
    coefficients.push(Valued { name: "f_relax", value: relax_f(&st, &gas)?, uncertainty: 0.0 });
    let mut k_kernel_residual = None;
    if cfg.task.coeffs.with_k {
        let k = relax_k(&st, &gas, &opts)?;
        let kc = relax_k(&st, &gas, &half)?;
        coefficients.push(Valued { name: "k_relax", value: k.value, uncertainty: (k.value - kc.value).abs() });
        k_kernel_residual = Some(k.kernel_residual);
    }
    Ok(CoeffsReport {
        gas,
        state: st,
        coefficients,
        basis: (opts.n_c, opts.n_i),
        half_basis: (half.n_c, half.n_i),
        half_basis_relative_change: change,
        gram_residual: sol.gram_residual,
        constraint_residuals: sol.constraint_residuals(),
        k_kernel_residual,
    })
}

pub fn run_coeffs(cfg: &RunConfig, w: &mut Writer) -> CliResult<CoeffsReport> {
    let r = coeffs(cfg)?;
    w.json(cfg, &r)?;
    w.csv(cfg, "", &r.coefficients)?;
    Ok(r)
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub passed: usize,
    pub failed: usize,
    pub skipped: usize,
    pub checks: Vec<CheckReport>,
}

pub fn run_verify(cfg: &RunConfig, w: &mut Writer, progress: impl FnMut(&CheckReport)) -> CliResult<VerifyReport> {
    let checks = verify::run(cfg, &cfg.task.verify.checks, progress)?;
    let count = |s| checks.iter().filter(|c| c.status == s).count();
    let r = VerifyReport { passed: count(Status::Pass), failed: count(Status::Fail), skipped: count(Status::Skip), checks };
    w.json(cfg, &r)?;
    #[derive(Serialize)]
    struct Row<'a> {
        id: u8,
        name: &'a str,
        status: &'a str,
        margin: f64,
    }
    let rows: Vec<Row> = r.checks.iter().map(|c| Row { id: c.id, name: c.name, status: c.status.label(), margin: c.margin }).collect();
    w.csv(cfg, "", &rows)?;
    Ok(r)
}

fn provider(cfg: &RunConfig, gas: &GasModel, with_k: bool) -> CliResult<CoefficientProvider> {
    let maxwell = gas.alpha == 0.0 && gas.beta == 0.0;
    let n = &cfg.numerics;
    Ok(match n.coefficients {
        CoefficientSource::Analytic => CoefficientProvider::analytic(gas)?,
        CoefficientSource::Auto if maxwell => CoefficientProvider::analytic(gas)?,
        CoefficientSource::Auto | CoefficientSource::Table => {
            CoefficientProvider::Tabulated(CoefficientTable::build(gas, &cfg.ce_options(), 0.25, 4.0, n.table_points, with_k)?)
        }
        CoefficientSource::Live => CoefficientProvider::Live { gas: *gas, opts: cfg.ce_options(), with_k },
    })
}

fn fluid_params(cfg: &RunConfig, boundary: Boundary) -> FluidParams {
    let n = &cfg.numerics;
    FluidParams { eps: n.eps, kappa: n.kappa, mode: n.scaling_mode, k_correction: n.k_correction, viscous: n.viscous, cfl: n.cfl, boundary }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RelaxRow {
    pub t: f64,
    pub t_tr_ode: f64,
    pub t_int_ode: f64,
    pub t_tr_dsmc: Option<f64>,
    pub t_tr_dsmc_se: Option<f64>,
    pub t_int_dsmc: Option<f64>,
    pub t_int_dsmc_se: Option<f64>,
    pub t_tr_fluid: Option<f64>,
    pub t_int_fluid: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RelaxReport {
    pub f_relax: f64,
    pub theta: f64,
    /// Largest |T_int(DSMC) - T_int(ODE)| in ensemble standard errors.
    pub dsmc_max_z: Option<f64>,
    pub fluid_max_abs_error: Option<f64>,
    pub rows: Vec<RelaxRow>,
}

/// Homogeneous relaxation at the configured state. Times are in the units of
/// the kinetic equation with eps = 1, so the exchange rate is theta F.
pub fn relax(cfg: &RunConfig) -> CliResult<RelaxReport> {
    let gas = cfg.gas_model()?;
    let st = cfg.macro_state()?;
    let task = &cfg.task.relax;
    if task.snapshots == 0 || !(task.t_end > 0.0) {
        return Err(CliError::Config("task.relax needs t_end > 0 and snapshots >= 1".into()));
    }
    let times: Vec<f64> = (0..=task.snapshots).map(|k| task.t_end * k as f64 / task.snapshots as f64).collect();
    let ode = relaxation_ode(&st, &gas, gas.theta, &times)?;
    let mut rows: Vec<RelaxRow> = times
        .iter()
        .zip(&ode)
        .map(|(&t, o)| RelaxRow {
            t,
            t_tr_ode: o.0,
            t_int_ode: o.1,
            t_tr_dsmc: None,
            t_tr_dsmc_se: None,
            t_int_dsmc: None,
            t_int_dsmc_se: None,
            t_tr_fluid: None,
            t_int_fluid: None,
        })
        .collect();
    let mut dsmc_max_z = None;
    if task.dsmc {
        let params = RelaxationParams { n_particles: task.particles, t_end: task.t_end, n_snapshots: task.snapshots, dt_max: task.dt_max };
        let ens = dsmc_ensemble(&st, &gas, &params, task.replicas, cfg.numerics.seed)?;
        let mut z = 0.0f64;
        for (r, p) in rows.iter_mut().zip(&ens) {
            r.t_tr_dsmc = Some(p.t_tr);
            r.t_tr_dsmc_se = Some(p.t_tr_se);
            r.t_int_dsmc = Some(p.t_int);
            r.t_int_dsmc_se = Some(p.t_int_se);
            // The initial ensemble matches the target moments exactly.
            if p.t > 0.0 {
                z = z.max((p.t_int - r.t_int_ode).abs() / p.t_int_se);
            }
        }
        dsmc_max_z = Some(z);
    }
    let mut fluid_max_abs_error = None;
    if task.fluid {
        let prov = provider(cfg, &gas, false)?;
        let params = FluidParams { eps: 1.0, kappa: gas.theta, mode: ScalingMode::Eps2, k_correction: false, viscous: false, cfl: cfg.numerics.cfl, boundary: Boundary::Periodic };
        let solver = FluidSolver::new(params, &prov)?;
        let init = Primitive::new(st.rho, 0.0, st.t_tr, st.t_int);
        let mut fs = FluidState1D::new(0.0, 1.0, 4, gas.delta, |_| init)?;
        let mut err = 0.0f64;
        for r in rows.iter_mut() {
            if r.t > fs.time {
                solver.advance(&mut fs, r.t, usize::MAX)?;
            }
            let p = fs.primitives()?[0];
            r.t_tr_fluid = Some(p.t_tr);
            r.t_int_fluid = Some(p.t_int);
            err = err.max((p.t_tr - r.t_tr_ode).abs()).max((p.t_int - r.t_int_ode).abs());
        }
        fluid_max_abs_error = Some(err);
    }
    Ok(RelaxReport { f_relax: relax_f(&st, &gas)?, theta: gas.theta, dsmc_max_z, fluid_max_abs_error, rows })
}

pub fn run_relax(cfg: &RunConfig, w: &mut Writer) -> CliResult<RelaxReport> {
    let r = relax(cfg)?;
    w.csv(cfg, "", &r.rows)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        f_relax: f64,
        theta: f64,
        dsmc_max_z: Option<f64>,
        fluid_max_abs_error: Option<f64>,
        final_state: &'a RelaxRow,
    }
    let last = r.rows.last().expect("at least one row");
    w.json(cfg, &Summary { f_relax: r.f_relax, theta: r.theta, dsmc_max_z: r.dsmc_max_z, fluid_max_abs_error: r.fluid_max_abs_error, final_state: last })?;
    Ok(r)
}

#[derive(Debug, Clone, Serialize)]
pub struct ShockReport {
    pub mach: f64,
    pub gamma: f64,
    pub upstream: Primitive,
    pub downstream: Primitive,
    pub rankine_hugoniot: Primitive,
    pub density_ratio: f64,
    pub expected_ratio: f64,
    pub relative_error: f64,
    pub residual: f64,
    pub time: f64,
    pub steps: usize,
    #[serde(skip)]
    pub profile: Vec<ProfileRow>,
}

pub fn shock(cfg: &RunConfig) -> CliResult<ShockReport> {
    let gas = cfg.gas_model()?;
    let s = &cfg.task.shock;
    let st = cfg.macro_state()?;
    let t1 = st.temperature(gas.delta);
    let prov = provider(cfg, &gas, cfg.numerics.k_correction && cfg.numerics.scaling_mode == ScalingMode::Eps1)?;
    // Boundary is replaced by the inflow/outflow pair inside.
    let params = fluid_params(cfg, Boundary::Transmissive);
    let setup = ShockSetup { mach: s.mach, rho1: st.rho, t1, x_left: s.x_left, x_right: s.x_right, cells: cfg.numerics.cells, tol: s.tol, t_max: s.t_max };
    let r = shock_structure(gas.delta, &prov, params, &setup)?;
    let (_, down) = rankine_hugoniot(st.rho, t1, s.mach, gas.delta)?;
    Ok(ShockReport {
        mach: s.mach,
        gamma: equilibrium_gamma(gas.delta),
        upstream: r.upstream,
        downstream: r.downstream,
        rankine_hugoniot: down,
        density_ratio: r.density_ratio,
        expected_ratio: r.expected_ratio,
        relative_error: (r.density_ratio / r.expected_ratio - 1.0).abs(),
        residual: r.residual,
        time: r.time,
        steps: r.steps,
        profile: r.profile,
    })
}

pub fn run_shock(cfg: &RunConfig, w: &mut Writer) -> CliResult<ShockReport> {
    let r = shock(cfg)?;
    w.json(cfg, &r)?;
    w.csv(cfg, "", &r.profile)?;
    Ok(r)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RiemannRow {
    pub x: f64,
    pub rho: f64,
    pub u: f64,
    pub p: f64,
    pub t_tr: f64,
    pub t_int: f64,
    pub rho_frozen: f64,
    pub u_frozen: f64,
    pub p_frozen: f64,
    pub rho_equilibrium: f64,
    pub u_equilibrium: f64,
    pub p_equilibrium: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RiemannReport {
    pub time: f64,
    pub steps: usize,
    /// L1 density error relative to the exact solutions with the frozen (5/3)
    /// and the equilibrium ratio of specific heats.
    pub l1_frozen: f64,
    pub l1_equilibrium: f64,
    #[serde(skip)]
    pub rows: Vec<RiemannRow>,
}

/// Shock tube from equilibrium states, compared with the exact solutions of
/// the frozen and the fully relaxed Euler equations.
pub fn riemann(cfg: &RunConfig) -> CliResult<RiemannReport> {
    let gas = cfg.gas_model()?;
    let task = &cfg.task.riemann;
    if !(task.x_left < task.x_diaphragm && task.x_diaphragm < task.x_right && task.t_end > 0.0) {
        return Err(CliError::Config("task.riemann needs x_left < x_diaphragm < x_right and t_end > 0".into()));
    }
    let side = |s: [f64; 3]| -> CliResult<Primitive> {
        if !(s[0] > 0.0 && s[2] > 0.0) {
            return Err(CliError::Config(format!("task.riemann state {s:?} needs positive density and pressure")));
        }
        let t = s[2] / s[0];
        Ok(Primitive::new(s[0], s[1], t, t))
    };
    let (l, r) = (side(task.left)?, side(task.right)?);
    let prov = provider(cfg, &gas, false)?;
    let solver = FluidSolver::new(fluid_params(cfg, Boundary::Transmissive), &prov)?;
    let mut st = FluidState1D::new(task.x_left, task.x_right, cfg.numerics.cells, gas.delta, |x| if x < task.x_diaphragm { l } else { r })?;
    let stats = solver.advance(&mut st, task.t_end, usize::MAX)?;
    let tl = (task.left[0], task.left[1], task.left[2]);
    let tr = (task.right[0], task.right[1], task.right[2]);
    let frozen = ExactRiemann::new(tl, tr, GAMMA_TR)?;
    let relaxed = ExactRiemann::new(tl, tr, equilibrium_gamma(gas.delta))?;
    let mut rows = Vec::with_capacity(st.len());
    let (mut e_f, mut e_e, mut norm) = (0.0, 0.0, 0.0);
    for (j, p) in st.primitives()?.iter().enumerate() {
        let x = st.center(j);
        let s = (x - task.x_diaphragm) / st.time;
        let f = frozen.sample(s);
        let e = relaxed.sample(s);
        e_f += (p.rho - f.0).abs();
        e_e += (p.rho - e.0).abs();
        norm += f.0;
        rows.push(RiemannRow {
            x,
            rho: p.rho,
            u: p.u,
            p: p.pressure(),
            t_tr: p.t_tr,
            t_int: p.t_int,
            rho_frozen: f.0,
            u_frozen: f.1,
            p_frozen: f.2,
            rho_equilibrium: e.0,
            u_equilibrium: e.1,
            p_equilibrium: e.2,
        });
    }
    Ok(RiemannReport { time: st.time, steps: stats.steps, l1_frozen: e_f / norm, l1_equilibrium: e_e / norm, rows })
}

pub fn run_riemann(cfg: &RunConfig, w: &mut Writer) -> CliResult<RiemannReport> {
    let r = riemann(cfg)?;
    w.json(cfg, &r)?;
    w.csv(cfg, "", &r.rows)?;
    Ok(r)
}

/// Rejects a config whose `task.kind` names a different subcommand.
pub fn check_kind(cfg: &RunConfig, kind: TaskKind) -> CliResult<()> {
    match cfg.task.kind {
        Some(k) if k != kind => Err(CliError::Config(format!("config is for task '{}' but '{}' was requested", k.name(), kind.name()))),
        _ => Ok(()),
    }
}
