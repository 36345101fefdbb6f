//! Spatially homogeneous stochastic particle simulation of the mixed
//! resonant/inelastic Boltzmann equation.
//!
//! Pairs are selected with the no-time-counter scheme against a majorant of
//! the kernel factor (I+I*)^alpha |g|^beta. The R-dependence of the standard
//! kernel is carried by its Beta law, so both branches share the majorant and
//! the branch is chosen per accepted pair with probability theta.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Beta, Distribution};
use serde::Serialize;

use crate::chapman_enskog::relax_f;
use crate::equilibrium::{moments_from_samples, MacroState, MaxwellianSampler, Moments, Particle};
use crate::error::{Error, Result};
use crate::model::{bl_collide_resonant, bl_collide_standard, GasModel, Pair, Vec3};
use crate::rng::{stream, unit_sphere, Rng};

/// Safety factor applied to the ensemble bound of the kernel factor.
const MAJORANT_SAFETY: f64 = 1.5;

#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    pub particles: Vec<Particle>,
    /// Number density represented by one particle (unit volume).
    pub weight: f64,
    pub time: f64,
}

impl ParticleEnsemble {
    /// Draws `n` particles from M_r and shifts and rescales them so that the
    /// sample moments equal the target state exactly.
    pub fn from_maxwellian(state: &MacroState, delta: f64, n: usize, rng: &mut Rng) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 particles, got {n}")));
        }
        let sampler = MaxwellianSampler::new(state, delta)?;
        let weight = state.rho / n as f64;
        let mut particles: Vec<Particle> = (0..n)
            .map(|_| {
                let (c, i) = sampler.sample_peculiar(rng);
                Particle { xi: c, i, weight }
            })
            .collect();
        let mean = particles.iter().map(|p| p.xi).sum::<Vec3>() / n as f64;
        let c2 = particles.iter().map(|p| (p.xi - mean).norm_squared()).sum::<f64>() / (3.0 * n as f64);
        let ei = particles.iter().map(|p| p.i).sum::<f64>() / n as f64;
        let sc = (state.t_tr / c2).sqrt();
        let si = state.t_int * delta / 2.0 / ei;
        let u = state.velocity();
        for p in &mut particles {
            p.xi = u + (p.xi - mean) * sc;
            p.i *= si;
        }
        Ok(ParticleEnsemble { particles, weight, time: 0.0 })
    }

    pub fn moments(&self, delta: f64) -> Result<Moments> {
        let mut m = moments_from_samples(&self.particles, delta)?;
        // Particle weights already carry the density; keep rho exact.
        m.rho = self.weight * self.particles.len() as f64;
        Ok(m)
    }

    pub fn momentum(&self) -> Vec3 {
        self.particles.iter().map(|p| p.xi).sum()
    }

    /// Sum of |xi|^2/2 and of I over the particles.
    pub fn energies(&self) -> (f64, f64) {
        self.particles.iter().fold((0.0, 0.0), |(k, e), p| (k + 0.5 * p.xi.norm_squared(), e + p.i))
    }
}

/// Collision counters of one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StepStats {
    pub candidates: u64,
    pub standard: u64,
    pub resonant: u64,
}

/// Advances the ensemble by `dt`.
pub fn dsmc_step(ens: &mut ParticleEnsemble, gas: &GasModel, dt: f64, rng: &mut Rng) -> Result<StepStats> {
    let n = ens.particles.len();
    if n < 2 {
        return Err(Error::InvalidParameter("a collision step needs at least 2 particles".into()));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
    }
    let mean = ens.momentum() / n as f64;
    let (mut c_max, mut i_max) = (0.0f64, 0.0f64);
    for p in &ens.particles {
        c_max = c_max.max((p.xi - mean).norm());
        i_max = i_max.max(p.i);
    }
    let kern_max = MAJORANT_SAFETY * gas.pair_factor(2.0 * c_max, 2.0 * i_max);
    let k = gas.resonant_weight();
    let density = ens.weight * n as f64;
    let per_particle = density * k * kern_max * dt;
    if per_particle > 1.0 {
        return Err(Error::Numerical(format!(
            "time step too large: majorant collision probability per particle is {per_particle:.3}"
        )));
    }
    let expected = 0.5 * (n * (n - 1)) as f64 * ens.weight * k * kern_max * dt;
    let mut candidates = expected.floor() as u64;
    if rng.random::<f64>() < expected - expected.floor() {
        candidates += 1;
    }
    let (a, b) = gas.r_cap_shape();
    let h = gas.r_split_shape();
    let r_cap = Beta::new(a, b).map_err(|e| Error::InvalidParameter(format!("Beta law: {e}")))?;
    let r_split = Beta::new(h, h).map_err(|e| Error::InvalidParameter(format!("Beta law: {e}")))?;
    let mut stats = StepStats { candidates, ..Default::default() };
    for _ in 0..candidates {
        let p = rng.random_range(0..n);
        let mut q = rng.random_range(0..n - 1);
        if q >= p {
            q += 1;
        }
        let (pp, pq) = (ens.particles[p], ens.particles[q]);
        let pre = Pair::new(pp.xi, pq.xi, pp.i, pq.i);
        let ratio = gas.pair_factor(pre.relative_speed(), pre.i + pre.i_star) / kern_max;
        if ratio > 1.0 {
            return Err(Error::Numerical(format!(
                "majorant violated by pair (|g| = {:.6}, I + I* = {:.6}): acceptance {ratio:.4}",
                pre.relative_speed(),
                pre.i + pre.i_star
            )));
        }
        if rng.random::<f64>() >= ratio {
            continue;
        }
        let sigma = unit_sphere(rng);
        let post = if rng.random::<f64>() < gas.theta {
            stats.standard += 1;
            bl_collide_standard(&pre, r_cap.sample(rng), r_split.sample(rng), &sigma)?
        } else {
            stats.resonant += 1;
            bl_collide_resonant(&pre, r_split.sample(rng), &sigma)?
        };
        ens.particles[p].xi = post.xi;
        ens.particles[p].i = post.i;
        ens.particles[q].xi = post.xi_star;
        ens.particles[q].i = post.i_star;
    }
    ens.time += dt;
    Ok(stats)
}

/// State of a homogeneous run at one output time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Snapshot {
    pub t: f64,
    pub rho: f64,
    pub ux: f64,
    pub uy: f64,
    pub uz: f64,
    pub t_tr: f64,
    pub t_int: f64,
}

impl Snapshot {
    fn new(t: f64, m: &Moments) -> Self {
        Snapshot { t, rho: m.rho, ux: m.u[0], uy: m.u[1], uz: m.u[2], t_tr: m.t_tr, t_int: m.t_int }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelaxationParams {
    pub n_particles: usize,
    pub t_end: f64,
    pub n_snapshots: usize,
    /// Largest time step; reduced so snapshots fall on step boundaries.
    pub dt_max: f64,
}

impl RelaxationParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_particles < 10_000 {
            return Err(Error::InvalidParameter(format!("relaxation runs need at least 1e4 particles, got {}", self.n_particles)));
        }
        if !(self.t_end > 0.0 && self.dt_max > 0.0) || self.n_snapshots < 1 {
            return Err(Error::InvalidParameter("t_end and dt_max must be positive and n_snapshots at least 1".into()));
        }
        Ok(())
    }

    fn steps_per_snapshot(&self) -> (usize, f64) {
        let span = self.t_end / self.n_snapshots as f64;
        let steps = (span / self.dt_max).ceil().max(1.0) as usize;
        (steps, span / steps as f64)
    }
}

/// One homogeneous trajectory: the initial snapshot followed by
/// `n_snapshots` equally spaced ones ending at `t_end`.
pub fn dsmc_relaxation_run(initial: &MacroState, gas: &GasModel, params: &RelaxationParams, seed: u64) -> Result<Vec<Snapshot>> {
    params.validate()?;
    let mut rng = stream(seed, 0);
    let mut ens = ParticleEnsemble::from_maxwellian(initial, gas.delta, params.n_particles, &mut rng)?;
    let (steps, dt) = params.steps_per_snapshot();
    let mut out = Vec::with_capacity(params.n_snapshots + 1);
    out.push(Snapshot::new(0.0, &ens.moments(gas.delta)?));
    for s in 1..=params.n_snapshots {
        for _ in 0..steps {
            dsmc_step(&mut ens, gas, dt, &mut rng)?;
        }
        out.push(Snapshot::new(params.t_end * s as f64 / params.n_snapshots as f64, &ens.moments(gas.delta)?));
    }
    Ok(out)
}

/// Mean and standard error over independent trajectories at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnsemblePoint {
    pub t: f64,
    pub t_tr: f64,
    pub t_tr_se: f64,
    pub t_int: f64,
    pub t_int_se: f64,
    /// 3 T_tr + delta T_int.
    pub energy: f64,
    pub energy_se: f64,
}

/// Runs `replicas` independent trajectories on separate threads, seeding
/// replica j with stream j of `seed`.
pub fn dsmc_ensemble(initial: &MacroState, gas: &GasModel, params: &RelaxationParams, replicas: usize, seed: u64) -> Result<Vec<EnsemblePoint>> {
    if replicas < 2 {
        return Err(Error::InvalidParameter("ensemble statistics need at least 2 replicas".into()));
    }
    let runs: Vec<Result<Vec<Snapshot>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..replicas)
            .map(|j| {
                let s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(j as u64);
                scope.spawn(move || dsmc_relaxation_run(initial, gas, params, s))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("replica thread panicked")).collect()
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let r = replicas as f64;
    let stat = |xs: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = xs.collect();
        let m = v.iter().sum::<f64>() / r;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (r - 1.0);
        (m, (var / r).sqrt())
    };
    Ok((0..runs[0].len())
        .map(|k| {
            let (t_tr, t_tr_se) = stat(&mut runs.iter().map(|run| run[k].t_tr));
            let (t_int, t_int_se) = stat(&mut runs.iter().map(|run| run[k].t_int));
            let (energy, energy_se) = stat(&mut runs.iter().map(|run| 3.0 * run[k].t_tr + gas.delta * run[k].t_int));
            EnsemblePoint { t: runs[0][k].t, t_tr, t_tr_se, t_int, t_int_se, energy, energy_se }
        })
        .collect())
}

/// Homogeneous two-temperature relaxation
/// (3/2) rho dT_tr/dt = -kappa F (T_tr - T_int), (delta/2) rho dT_int/dt = +kappa F (T_tr - T_int),
/// returning (T_tr, T_int) at each requested time. Exact when F does not
/// depend on the temperatures (alpha = beta = 0), classical RK4 otherwise.
pub fn relaxation_ode(initial: &MacroState, gas: &GasModel, kappa: f64, times: &[f64]) -> Result<Vec<(f64, f64)>> {
    initial.validate()?;
    let rho = initial.rho;
    let delta = gas.delta;
    let rate = |t_tr: f64, t_int: f64| -> Result<f64> {
        let st = MacroState::at_rest(rho, t_tr, t_int)?;
        Ok(kappa * relax_f(&st, gas)?)
    };
    let conserved = 3.0 * initial.t_tr + delta * initial.t_int;
    let split = |d: f64| ((conserved + delta * d) / (3.0 + delta), (conserved - 3.0 * d) / (3.0 + delta));
    let decay = 2.0 / (3.0 * rho) + 2.0 / (delta * rho);
    let d0 = initial.t_tr - initial.t_int;
    if gas.alpha == 0.0 && gas.beta == 0.0 {
        let g = rate(initial.t_tr, initial.t_int)? * decay;
        return Ok(times.iter().map(|&t| split(d0 * (-g * t).exp())).collect());
    }
    let g0 = rate(initial.t_tr, initial.t_int)? * decay;
    let h = 1e-3 / g0.max(1e-300);
    let rhs = |d: f64| -> Result<f64> {
        let (a, b) = split(d);
        Ok(-rate(a, b)? * decay * d)
    };
    let mut out = Vec::with_capacity(times.len());
    let (mut t, mut d) = (0.0, d0);
    for &target in times {
        if target < t {
            return Err(Error::InvalidParameter("output times must be nondecreasing".into()));
        }
        let steps = ((target - t) / h).ceil() as usize;
        if steps > 0 {
            let dt = (target - t) / steps as f64;
            for _ in 0..steps {
                let k1 = rhs(d)?;
                let k2 = rhs(d + 0.5 * dt * k1)?;
                let k3 = rhs(d + 0.5 * dt * k2)?;
                let k4 = rhs(d + dt * k3)?;
                d += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
        }
        t = target;
        out.push(split(d));
    }
    Ok(out)
}

/// Mean collision frequency per particle of a Maxwellian ensemble, K_r rho E[kernel].
pub fn mean_collision_rate(state: &MacroState, gas: &GasModel) -> f64 {
    // E|g|^beta for g ~ N(0, 2 T_tr) and E(I+I*)^alpha for I+I* ~ Gamma(delta, T_int).
    let eg = (4.0 * state.t_tr).powf(gas.beta / 2.0) * 2.0 / PI.sqrt()
        * statrs::function::gamma::gamma((3.0 + gas.beta) / 2.0);
    let ei = state.t_int.powf(gas.alpha) * statrs::function::gamma::gamma(gas.delta + gas.alpha)
        / statrs::function::gamma::gamma(gas.delta);
    gas.resonant_weight() * state.rho * eg * ei
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ensemble(gas: &GasModel, n: usize, seed: u64) -> ParticleEnsemble {
        let st = MacroState::new(1.0, [0.3, -0.1, 0.2], 2.0, 1.0).unwrap();
        ParticleEnsemble::from_maxwellian(&st, gas.delta, n, &mut stream(seed, 0)).unwrap()
    }

    #[test]
    fn resonant_steps_keep_both_energies() {
        let gas = GasModel::new(3.0, 0.5, 1.0, 1.0, 0.0).unwrap();
        let mut ens = ensemble(&gas, 2000, 1);
        let (k0, i0) = ens.energies();
        let p0 = ens.momentum();
        let mut rng = stream(2, 0);
        for _ in 0..20 {
            dsmc_step(&mut ens, &gas, 0.001, &mut rng).unwrap();
        }
        let (k1, i1) = ens.energies();
        assert!((k1 - k0).abs() < 1e-10 * k0 && (i1 - i0).abs() < 1e-10 * i0);
        assert!((ens.momentum() - p0).norm() < 1e-10 * p0.norm());
    }

    #[test]
    fn standard_steps_keep_total_energy() {
        let gas = GasModel::new(2.0, 0.0, 0.5, 1.0, 1.0).unwrap();
        let mut ens = ensemble(&gas, 2000, 3);
        let (k0, i0) = ens.energies();
        let mut rng = stream(4, 0);
        for _ in 0..20 {
            dsmc_step(&mut ens, &gas, 0.01, &mut rng).unwrap();
        }
        let (k1, i1) = ens.energies();
        assert!(((k1 + i1) - (k0 + i0)).abs() < 1e-10 * (k0 + i0));
        assert!((i1 - i0).abs() > 1e-6 * i0);
    }

    #[test]
    fn collision_rate_matches_kernel() {
        let gas = GasModel::new(2.0, 0.5, 1.0, 1.0, 0.0).unwrap();
        let st = MacroState::at_rest(1.0, 1.0, 1.0).unwrap();
        let mut rng = stream(5, 0);
        let mut ens = ParticleEnsemble::from_maxwellian(&st, gas.delta, 20_000, &mut rng).unwrap();
        let dt = 0.0005;
        let mut total = 0;
        for _ in 0..40 {
            let s = dsmc_step(&mut ens, &gas, dt, &mut rng).unwrap();
            total += s.resonant;
        }
        let expected = 0.5 * 20_000.0 * mean_collision_rate(&st, &gas) * 40.0 * dt;
        assert!((total as f64 - expected).abs() < 5.0 * expected.sqrt() + 0.01 * expected, "{total} vs {expected}");
    }

    #[test]
    fn oversized_step_is_rejected() {
        let gas = GasModel::new(2.0, 0.0, 0.0, 1.0, 0.5).unwrap();
        let mut ens = ensemble(&gas, 100, 6);
        assert!(dsmc_step(&mut ens, &gas, 10.0, &mut stream(7, 0)).is_err());
    }

    #[test]
    fn same_seed_same_trajectory() {
        let gas = GasModel::new(2.0, 0.0, 0.0, 1.0, 0.3).unwrap();
        let st = MacroState::at_rest(1.0, 2.0, 1.0).unwrap();
        let p = RelaxationParams { n_particles: 10_000, t_end: 0.2, n_snapshots: 2, dt_max: 0.01 };
        let a = dsmc_relaxation_run(&st, &gas, &p, 9).unwrap();
        let b = dsmc_relaxation_run(&st, &gas, &p, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ode_closed_form_and_rk4_agree() {
        let st = MacroState::at_rest(1.2, 2.0, 1.0).unwrap();
        let gas = GasModel::new(2.0, 0.0, 0.0, 1.0, 1.0).unwrap();
        let times = [0.0, 0.1, 0.5, 2.0];
        let exact = relaxation_ode(&st, &gas, 0.1, &times).unwrap();
        // Force the RK4 branch with an infinitesimal beta perturbation of F.
        let tiny = GasModel::new(2.0, 0.0, 1e-14, 1.0, 1.0).unwrap();
        let rk = relaxation_ode(&st, &tiny, 0.1, &times).unwrap();
        for (a, b) in exact.iter().zip(&rk) {
            assert!((a.0 - b.0).abs() < 1e-10 && (a.1 - b.1).abs() < 1e-10);
            assert!((3.0 * a.0 + 2.0 * a.1 - 8.0).abs() < 1e-12);
        }
    }
}
