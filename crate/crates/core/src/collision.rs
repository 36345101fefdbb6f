//! Collision integrals: Monte Carlo weak forms, Dirichlet forms, collision
//! frequencies and the pointwise inelastic collision operator on a
//! two-temperature Maxwellian.
//!
//! Monte Carlo estimators draw the pre-collision pair from M_r x M_r, the
//! energy fraction R ~ Beta((beta+3)/2, alpha+delta), the internal split
//! r ~ Beta(delta/2, delta/2) and sigma uniformly on the sphere. The remaining
//! kernel factor is (I + I*)^alpha |g|^beta times a constant weight.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand_distr::{Beta, Distribution};
use serde::Serialize;
use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

use crate::equilibrium::{MacroState, Maxwellian, MaxwellianSampler};
use crate::error::{Error, Result};
use crate::model::{bl_collide_resonant, bl_collide_standard, pow0, GasModel, Pair, Vec3};
use crate::quadrature::{integrate_gk, integrate_gk_semi_infinite, GaussRule, Tolerance};
use crate::rng::{batch_means, batch_means_vec, unit_sphere, McEstimate, Rng, VecEstimate};

/// A test function g(xi, I) of the lab-frame velocity and internal energy.
#[derive(Clone)]
pub struct TestFunction {
    pub label: String,
    f: Arc<dyn Fn(&Vec3, f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TestFunction({})", self.label)
    }
}

impl TestFunction {
    pub fn new(label: impl Into<String>, f: impl Fn(&Vec3, f64) -> f64 + Send + Sync + 'static) -> Self {
        TestFunction { label: label.into(), f: Arc::new(f) }
    }

    #[inline]
    pub fn eval(&self, xi: &Vec3, i: f64) -> f64 {
        (self.f)(xi, i)
    }

    pub fn one() -> Self {
        Self::new("1", |_, _| 1.0)
    }

    pub fn momentum(axis: usize) -> Self {
        assert!(axis < 3);
        Self::new(format!("xi_{axis}"), move |xi, _| xi[axis])
    }

    /// |xi|^2 + 2 I.
    pub fn total_energy() -> Self {
        Self::new("|xi|^2 + 2I", |xi, i| xi.norm_squared() + 2.0 * i)
    }

    pub fn kinetic_energy() -> Self {
        Self::new("|xi|^2", |xi, _| xi.norm_squared())
    }

    pub fn internal_energy() -> Self {
        Self::new("I", |_, i| i)
    }

    /// The six collision invariants of the resonant operator.
    pub fn resonant_invariants() -> Vec<Self> {
        vec![
            Self::one(),
            Self::momentum(0),
            Self::momentum(1),
            Self::momentum(2),
            Self::kinetic_energy(),
            Self::internal_energy(),
        ]
    }
}

/// One Monte Carlo draw: a pre-collision pair, its post-collision images for
/// the requested branches and the kernel factor (I+I*)^alpha |g|^beta.
#[derive(Debug, Clone, Copy)]
pub struct CollisionDraw {
    pub pre: Pair,
    pub standard: Option<Pair>,
    pub resonant: Option<Pair>,
    pub r_cap: f64,
    pub factor: f64,
}

/// Draws collision configurations for a Maxwellian background.
#[derive(Debug, Clone)]
pub struct CollisionSampler {
    pub gas: GasModel,
    pub state: MacroState,
    maxwellian: MaxwellianSampler,
    r_cap: Beta<f64>,
    r_split: Beta<f64>,
}

impl CollisionSampler {
    pub fn new(state: &MacroState, gas: &GasModel) -> Result<Self> {
        let (a, b) = gas.r_cap_shape();
        let h = gas.r_split_shape();
        let bad = |e: rand_distr::BetaError| Error::InvalidParameter(format!("Beta law: {e}"));
        Ok(CollisionSampler {
            gas: *gas,
            state: *state,
            maxwellian: MaxwellianSampler::new(state, gas.delta)?,
            r_cap: Beta::new(a, b).map_err(bad)?,
            r_split: Beta::new(h, h).map_err(bad)?,
        })
    }

    pub fn draw(&self, rng: &mut Rng, standard: bool, resonant: bool) -> Result<CollisionDraw> {
        let (xi, i) = self.maxwellian.sample(rng);
        let (xs, is) = self.maxwellian.sample(rng);
        let pre = Pair::new(xi, xs, i, is);
        let factor = self.gas.pair_factor(pre.relative_speed(), i + is);
        let mut r_cap = f64::NAN;
        let std_post = if standard {
            r_cap = self.r_cap.sample(rng);
            let r = self.r_split.sample(rng);
            Some(bl_collide_standard(&pre, r_cap, r, &unit_sphere(rng))?)
        } else {
            None
        };
        let res_post = if resonant {
            let r = self.r_split.sample(rng);
            Some(bl_collide_resonant(&pre, r, &unit_sphere(rng))?)
        } else {
            None
        };
        Ok(CollisionDraw { pre, standard: std_post, resonant: res_post, r_cap, factor })
    }
}

/// g' + g*' - g - g*.
#[inline]
pub fn delta_of(g: &TestFunction, pre: &Pair, post: &Pair) -> f64 {
    g.eval(&post.xi, post.i) + g.eval(&post.xi_star, post.i_star) - g.eval(&pre.xi, pre.i) - g.eval(&pre.xi_star, pre.i_star)
}

fn theta_branches(theta: f64) -> Result<(bool, bool)> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidParameter(format!("theta must lie in [0, 1], got {theta}")));
    }
    Ok((theta > 0.0, theta < 1.0))
}

/// Weak form (Q_theta(M_r, M_r), g), Q_theta = theta Q_s + (1 - theta) Q_r.
pub fn weak_q_mc(state: &MacroState, g: &TestFunction, gas: &GasModel, theta: f64, n: u64, seed: u64) -> Result<McEstimate> {
    weak_q_perturbed_mc(state, None, g, gas, theta, n, seed)
}

/// Weak form (Q_theta(f, f), g) for f = M_r (1 + h).
pub fn weak_q_perturbed_mc(
    state: &MacroState,
    h: Option<&TestFunction>,
    g: &TestFunction,
    gas: &GasModel,
    theta: f64,
    n: u64,
    seed: u64,
) -> Result<McEstimate> {
    let (want_s, want_r) = theta_branches(theta)?;
    let sampler = CollisionSampler::new(state, gas)?;
    let ks = 0.5 * state.rho * state.rho * theta * gas.standard_weight();
    let kr = 0.5 * state.rho * state.rho * (1.0 - theta) * gas.resonant_weight();
    batch_means(n, seed, |_, rng| {
        let d = sampler.draw(rng, want_s, want_r)?;
        let mut v = 0.0;
        if let Some(p) = &d.standard {
            v += ks * delta_of(g, &d.pre, p);
        }
        if let Some(p) = &d.resonant {
            v += kr * delta_of(g, &d.pre, p);
        }
        let pert = match h {
            Some(h) => (1.0 + h.eval(&d.pre.xi, d.pre.i)) * (1.0 + h.eval(&d.pre.xi_star, d.pre.i_star)),
            None => 1.0,
        };
        Ok(v * d.factor * pert)
    })
}

/// (Q_s(M_r, M_r psi), g), the inelastic operator linear in its second slot.
pub fn weak_qs_linear_mc(
    state: &MacroState,
    psi: &TestFunction,
    g: &TestFunction,
    gas: &GasModel,
    n: u64,
    seed: u64,
) -> Result<McEstimate> {
    let sampler = CollisionSampler::new(state, gas)?;
    let k = 0.25 * state.rho * state.rho * gas.standard_weight();
    batch_means(n, seed, |_, rng| {
        let d = sampler.draw(rng, true, false)?;
        let post = d.standard.expect("standard branch drawn");
        let s = psi.eval(&d.pre.xi, d.pre.i) + psi.eval(&d.pre.xi_star, d.pre.i_star);
        Ok(k * d.factor * s * delta_of(g, &d.pre, &post))
    })
}

/// Dirichlet form (L_r h, M_r g) = 1/4 int Delta h Delta g over the resonant
/// collision measure.
pub fn dirichlet_form(state: &MacroState, h: &TestFunction, g: &TestFunction, gas: &GasModel, n: u64, seed: u64) -> Result<McEstimate> {
    let sampler = CollisionSampler::new(state, gas)?;
    let k = 0.25 * state.rho * state.rho * gas.resonant_weight();
    batch_means(n, seed, |_, rng| {
        let d = sampler.draw(rng, false, true)?;
        let post = d.resonant.expect("resonant branch drawn");
        Ok(k * d.factor * delta_of(h, &d.pre, &post) * delta_of(g, &d.pre, &post))
    })
}

/// Gram matrix of the Dirichlet form over a family of functions, from one set
/// of common random numbers. The estimate keeps per-batch means of the upper
/// triangle so derived quantities can be jackknifed; the matrix returned by
/// [`dirichlet_gram_matrix`] is exactly symmetric.
pub fn dirichlet_gram_mc(state: &MacroState, basis: &[TestFunction], gas: &GasModel, n: u64, seed: u64) -> Result<VecEstimate> {
    let sampler = CollisionSampler::new(state, gas)?;
    let k = 0.25 * state.rho * state.rho * gas.resonant_weight();
    let m = basis.len();
    let mut deltas = vec![0.0; m];
    batch_means_vec(n, seed, m * (m + 1) / 2, |_, rng, out| {
        let d = sampler.draw(rng, false, true)?;
        let post = d.resonant.expect("resonant branch drawn");
        for (dv, f) in deltas.iter_mut().zip(basis) {
            *dv = delta_of(f, &d.pre, &post);
        }
        let w = k * d.factor;
        let mut idx = 0;
        for a in 0..m {
            let wa = w * deltas[a];
            for b in a..m {
                out[idx] = wa * deltas[b];
                idx += 1;
            }
        }
        Ok(())
    })
}

/// Unpacks an upper-triangle vector into a symmetric matrix.
pub fn dirichlet_gram_matrix(upper: &[f64], m: usize) -> nalgebra::DMatrix<f64> {
    let mut g = nalgebra::DMatrix::zeros(m, m);
    let mut idx = 0;
    for a in 0..m {
        for b in a..m {
            g[(a, b)] = upper[idx];
            g[(b, a)] = upper[idx];
            idx += 1;
        }
    }
    g
}

/// Entropy production rate W_theta[f] = (Q_theta(f, f), ln(I^{1-delta/2} f))
/// for f = M_r (1 + h). Non-positive by the H-theorem.
pub fn h_functional_rate(
    state: &MacroState,
    h: Option<&TestFunction>,
    gas: &GasModel,
    theta: f64,
    n: u64,
    seed: u64,
) -> Result<McEstimate> {
    let (want_s, want_r) = theta_branches(theta)?;
    let sampler = CollisionSampler::new(state, gas)?;
    let m = Maxwellian::new(*state, gas.delta)?;
    let ks = 0.5 * state.rho * state.rho * theta * gas.standard_weight();
    let kr = 0.5 * state.rho * state.rho * (1.0 - theta) * gas.resonant_weight();
    let one_plus_h = |xi: &Vec3, i: f64| -> Result<f64> {
        let v = 1.0 + h.map_or(0.0, |h| h.eval(xi, i));
        if v > 0.0 {
            Ok(v)
        } else {
            Err(Error::Domain(format!("f = M_r (1 + h) is not positive at xi = {xi:?}, I = {i}")))
        }
    };
    let log_f = |xi: &Vec3, i: f64| -> Result<f64> { Ok(m.ln_reduced(xi, i) + one_plus_h(xi, i)?.ln()) };
    let delta_log = |pre: &Pair, post: &Pair| -> Result<f64> {
        Ok(log_f(&post.xi, post.i)? + log_f(&post.xi_star, post.i_star)? - log_f(&pre.xi, pre.i)? - log_f(&pre.xi_star, pre.i_star)?)
    };
    batch_means(n, seed, |_, rng| {
        let d = sampler.draw(rng, want_s, want_r)?;
        let mut v = 0.0;
        if let Some(p) = &d.standard {
            v += ks * delta_log(&d.pre, p)?;
        }
        if let Some(p) = &d.resonant {
            v += kr * delta_log(&d.pre, p)?;
        }
        let pert = one_plus_h(&d.pre.xi, d.pre.i)? * one_plus_h(&d.pre.xi_star, d.pre.i_star)?;
        Ok(v * d.factor * pert)
    })
}

/// Collision frequencies of the two branches at one molecular state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollisionFrequency {
    pub standard: f64,
    pub resonant: f64,
}

const NU_TOL: f64 = 1e-8;

fn quad_1d<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64) -> Result<f64> {
    let (v, err) = integrate_gk(f, a, b, Tolerance { rel: 1e-13, abs: 0.0, max_segments: 2000 })?;
    if err > NU_TOL * v.abs() {
        return Err(Error::Quadrature(format!("1-D integral on [{a}, {b}]: error {err:.2e} on {v:.6e}")));
    }
    Ok(v)
}

fn quad_semi<F: FnMut(f64) -> f64>(f: F) -> Result<f64> {
    let (v, err) = integrate_gk_semi_infinite(f, 0.0, Tolerance { rel: 1e-13, abs: 0.0, max_segments: 2000 })?;
    if err > NU_TOL * v.abs() {
        return Err(Error::Quadrature(format!("1-D integral on [0, inf): error {err:.2e} on {v:.6e}")));
    }
    Ok(v)
}

/// E |w - Z sqrt(T)|^beta for a standard normal 3-vector Z, as a function of
/// w = |w|.
fn speed_moment(w: f64, t: f64, beta: f64) -> Result<f64> {
    if beta == 0.0 {
        return Ok(1.0);
    }
    let a = w / t.sqrt();
    let scale = t.powf(beta / 2.0);
    if a < 1e-6 {
        let v = 2f64.powf(beta / 2.0) * (ln_gamma((3.0 + beta) / 2.0) - ln_gamma(1.5)).exp();
        return Ok(scale * v);
    }
    let v = quad_1d(
        |z| z.powf(1.0 + beta) * ((-0.5 * (z - a).powi(2)).exp() - (-0.5 * (z + a).powi(2)).exp()),
        0.0,
        a + 40.0,
    )?;
    Ok(scale * v / ((2.0 * PI).sqrt() * a))
}

/// E (I + I*)^alpha for I* ~ Gamma(delta/2, T_int).
fn energy_moment(i: f64, t_int: f64, alpha: f64, delta: f64) -> Result<f64> {
    if alpha == 0.0 {
        return Ok(1.0);
    }
    let h = delta / 2.0;
    if i == 0.0 {
        return Ok(t_int.powf(alpha) * (ln_gamma(h + alpha) - ln_gamma(h)).exp());
    }
    let v = quad_semi(|y| (i + t_int * y).powf(alpha) * y.powf(h - 1.0) * (-y).exp())?;
    Ok(v / ln_gamma(h).exp())
}

/// Collision frequencies nu_s and nu_r of a molecule (xi, I) against a
/// Maxwellian background. The R and r integrals are evaluated by quadrature
/// so that nu_s = nu_r is a numerical identity of the cross-section constants.
pub fn nu_model(xi: &Vec3, i: f64, background: &MacroState, gas: &GasModel) -> Result<CollisionFrequency> {
    background.validate()?;
    if !(i.is_finite() && i >= 0.0) || !xi.iter().all(|x| x.is_finite()) {
        return Err(Error::Domain(format!("molecular state must be finite with I >= 0, got I = {i}")));
    }
    let (a, b) = gas.r_cap_shape();
    let h = gas.r_split_shape();
    let r_int = quad_1d(|r| pow0(r * (1.0 - r), h - 1.0), 0.0, 1.0)?;
    let big_r_int = quad_1d(|r| r.powf(a - 1.0) * pow0(1.0 - r, b - 1.0), 0.0, 1.0)?;
    let w = (xi - background.velocity()).norm();
    let common = 4.0 * PI * background.rho
        * speed_moment(w, background.t_tr, gas.beta)?
        * energy_moment(i, background.t_int, gas.alpha, gas.delta)?
        * r_int;
    Ok(CollisionFrequency { standard: common * gas.c_s() * big_r_int, resonant: common * gas.c_r })
}

/// Exchange scale zeta = T_tr T_int / |T_tr - T_int| and sign eta of
/// T_tr - T_int. At equal temperatures zeta is infinite and eta is zero.
pub fn exchange_scale(t_tr: f64, t_int: f64) -> (f64, f64) {
    let d = t_tr - t_int;
    if d == 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        (t_tr * t_int / d.abs(), d.signum())
    }
}

/// Pointwise Q_s(M_r, M_r)(c, I) as a function of the peculiar speed |c| and
/// the internal energy.
///
/// After the angular integrals the operator reduces to
/// P I^{delta/2-1} e^{-c^2/2T} [ sum_R w_R G_R(c) H_R(I) - W G_0(c) H_0(I) ],
/// where the R-sum is a Gauss-Jacobi rule for R^{(beta+1)/2} (1-R)^{alpha+delta-1},
/// G_R is a 1-D integral over the relative speed and H_R a 1-D integral over I*.
#[derive(Debug, Clone)]
pub struct QsPointwise {
    pub state: MacroState,
    pub gas: GasModel,
    kappa: f64,
    prefactor: f64,
    r_rule: GaussRule,
    tol: Tolerance,
}

/// Factors of the separable representation at one speed.
#[derive(Debug, Clone)]
pub struct SpeedFactors {
    pub c: f64,
    g_r: Vec<f64>,
    g_0: f64,
}

/// Factors of the separable representation at one internal energy.
#[derive(Debug, Clone)]
pub struct EnergyFactors {
    pub i: f64,
    h_r: Vec<f64>,
    h_0: f64,
}

impl QsPointwise {
    pub const DEFAULT_R_NODES: usize = 40;

    pub fn new(state: &MacroState, gas: &GasModel) -> Result<Self> {
        Self::with_nodes(state, gas, Self::DEFAULT_R_NODES)
    }

    pub fn with_nodes(state: &MacroState, gas: &GasModel, r_nodes: usize) -> Result<Self> {
        state.validate()?;
        let (t, ti) = (state.t_tr, state.t_int);
        let (zeta, eta) = exchange_scale(t, ti);
        let kappa = if eta == 0.0 { 0.0 } else { eta / zeta };
        let h = gas.delta / 2.0;
        let ln_n = state.rho.ln() - 1.5 * (2.0 * PI * t).ln() - h * t.ln() - ln_gamma(h);
        let prefactor = gas.c_s()
            * (gas.delta * (t / ti).ln() + ln_beta(h, h) + 2.0 * ln_n).exp()
            * (4.0 * PI)
            * (4.0 * PI);
        let (a, b) = gas.r_cap_shape();
        Ok(QsPointwise {
            state: *state,
            gas: *gas,
            kappa,
            prefactor,
            r_rule: GaussRule::jacobi01(r_nodes, a - 1.0, b - 1.0),
            tol: Tolerance { rel: 1e-12, abs: 0.0, max_segments: 4000 },
        })
    }

    /// 1/T_int - 1/T_tr.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    fn g_integral(&self, c: f64, mu: f64) -> Result<f64> {
        let t = self.state.t_tr;
        let beta = self.gas.beta;
        let f = |g: f64| -> f64 {
            if g == 0.0 {
                return 0.0;
            }
            let a = c * g / t;
            let shape = if a < 1e-12 { 1.0 } else { -(-2.0 * a).exp_m1() / (2.0 * a) };
            let ex = -(g - c).powi(2) / (2.0 * t) - mu * g * g;
            g.powf(2.0 + beta) * shape * ex.exp()
        };
        // Split at the peak region so the adaptive rule sees it.
        let width = (t / (1.0 + 2.0 * t * mu.max(0.0))).sqrt();
        let hi = c + 12.0 * width;
        let (v1, e1) = integrate_gk(f, 0.0, hi, self.tol)?;
        let (v2, e2) = integrate_gk_semi_infinite(f, hi, self.tol)?;
        let v = v1 + v2;
        if e1 + e2 > 1e-9 * v.abs() {
            return Err(Error::Quadrature(format!("relative-speed integral at |c| = {c}: error {:.2e} on {v:.6e}", e1 + e2)));
        }
        Ok(v)
    }

    fn h_integral(&self, i: f64, rate: f64) -> Result<f64> {
        let hd = self.gas.delta / 2.0;
        let alpha = self.gas.alpha;
        let base = (-rate * i).exp() * rate.powf(-hd);
        if alpha == 0.0 {
            return Ok(base * ln_gamma(hd).exp());
        }
        let (v, e) = integrate_gk_semi_infinite(|y| y.powf(hd - 1.0) * (i + y / rate).powf(alpha) * (-y).exp(), 0.0, self.tol)?;
        if e > 1e-9 * v.abs() {
            return Err(Error::Quadrature(format!("internal-energy integral at I = {i}: error {e:.2e} on {v:.6e}")));
        }
        Ok(base * v)
    }

    pub fn speed_factors(&self, c: f64) -> Result<SpeedFactors> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::Domain(format!("speed must be finite and non-negative, got {c}")));
        }
        let k = self.kappa;
        let g_r = self.r_rule.nodes.iter().map(|&r| self.g_integral(c, k * (1.0 - r) / 4.0)).collect::<Result<Vec<_>>>()?;
        Ok(SpeedFactors { c, g_r, g_0: self.g_integral(c, 0.0)? })
    }

    pub fn energy_factors(&self, i: f64) -> Result<EnergyFactors> {
        if !(i.is_finite() && i >= 0.0) {
            return Err(Error::Domain(format!("internal energy must be finite and non-negative, got {i}")));
        }
        let (k, ti) = (self.kappa, self.state.t_int);
        let h_r = self.r_rule.nodes.iter().map(|&r| self.h_integral(i, 1.0 / ti - k * r)).collect::<Result<Vec<_>>>()?;
        Ok(EnergyFactors { i, h_r, h_0: self.h_integral(i, 1.0 / ti)? })
    }

    pub fn combine(&self, s: &SpeedFactors, e: &EnergyFactors) -> f64 {
        pow0(e.i, self.gas.delta / 2.0 - 1.0) * self.combine_reduced(s, e)
    }

    /// Q_s / I^{delta/2-1}.
    fn combine_reduced(&self, s: &SpeedFactors, e: &EnergyFactors) -> f64 {
        if self.kappa == 0.0 {
            return 0.0;
        }
        let w_total: f64 = self.r_rule.weights.iter().sum();
        let sum: f64 = self.r_rule.weights.iter().zip(s.g_r.iter().zip(&e.h_r)).map(|(w, (g, h))| w * g * h).sum();
        self.prefactor * (-s.c * s.c / (2.0 * self.state.t_tr)).exp() * (sum - w_total * s.g_0 * e.h_0)
    }

    /// Tabulates Q_s on an outer grid in x = |c|^2/(2 T_o) (Gauss-Laguerre)
    /// and y = I/T_o (graded panels, since Q_s carries a non-analytic power of
    /// I at 0 when alpha > 0), T_o = max(T_tr, T_int).
    pub fn field(&self, n_c: usize, n_i: usize) -> Result<QsField> {
        let t_o = self.state.t_tr.max(self.state.t_int);
        let rc = GaussRule::laguerre(n_c, 0.5);
        let ri = GaussRule::graded_half_line((n_i / 4).max(6), 12 + n_i / 8, 0.2, n_i);
        let speeds = rc.nodes.iter().map(|&x| self.speed_factors((2.0 * t_o * x).sqrt())).collect::<Result<Vec<_>>>()?;
        let energies = ri.nodes.iter().map(|&y| self.energy_factors(t_o * y)).collect::<Result<Vec<_>>>()?;
        let c_scale = 2.0 * PI * (2.0 * t_o).powf(1.5);
        let mut nodes = Vec::with_capacity(n_c * ri.len());
        for (a, s) in speeds.iter().enumerate() {
            let wc = rc.weights[a] * rc.nodes[a].exp() * c_scale;
            for (b, e) in energies.iter().enumerate() {
                nodes.push((s.c, e.i, wc * ri.weights[b] * t_o * self.combine(s, e)));
            }
        }
        Ok(QsField { nodes })
    }

    /// Projections (Q_s(M_r, M_r), phi_k) for each phi_k, from two outer
    /// resolutions. Fails when they disagree by more than `tol` relative to
    /// `scale`.
    pub fn projections(&self, phis: &[&dyn Fn(f64, f64) -> f64], n: usize, tol: f64, scale: f64) -> Result<Vec<f64>> {
        let coarse = self.field(n, n)?;
        let fine = self.field(n + 8, n + 8)?;
        phis.iter()
            .map(|phi| {
                let (a, b) = (coarse.project(phi), fine.project(phi));
                if (a - b).abs() > tol * scale.max(b.abs()) {
                    return Err(Error::Quadrature(format!("outer quadrature of Q_s projection not converged: {a:.12e} vs {b:.12e}")));
                }
                Ok(b)
            })
            .collect()
    }

    /// Q_s(M_r, M_r) at peculiar speed `c` and internal energy `i`.
    pub fn eval(&self, c: f64, i: f64) -> Result<f64> {
        if self.kappa == 0.0 {
            return Ok(0.0);
        }
        Ok(self.combine(&self.speed_factors(c)?, &self.energy_factors(i)?))
    }
}

/// Q_s(M_r, M_r) tabulated on an outer quadrature grid: (|c|, I, weight x value).
#[derive(Debug, Clone)]
pub struct QsField {
    pub nodes: Vec<(f64, f64, f64)>,
}

impl QsField {
    /// int phi(|c|, I) Q_s(M_r, M_r) dc dI.
    pub fn project(&self, phi: &dyn Fn(f64, f64) -> f64) -> f64 {
        self.nodes.iter().map(|&(c, i, w)| w * phi(c, i)).sum()
    }
}

/// Monte Carlo estimate of Q_s(M_r, M_r)(xi, I) straight from the strong
/// Borgnakke-Larsen form, with M_r evaluated at the post-collision states.
pub fn qs_pointwise_mc(state: &MacroState, gas: &GasModel, xi: &Vec3, i: f64, n: u64, seed: u64) -> Result<McEstimate> {
    let m = Maxwellian::new(*state, gas.delta)?;
    let mws = MaxwellianSampler::new(state, gas.delta)?;
    let (a, b) = gas.r_cap_shape();
    let h = gas.r_split_shape();
    let r_cap = Beta::new(a, b).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let r_split = Beta::new(h, h).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let k = gas.standard_weight() * state.rho;
    let ipow = pow0(i, h - 1.0);
    let ln_here = m.ln_reduced(xi, i);
    batch_means(n, seed, |_, rng| {
        let (xs, is) = mws.sample(rng);
        let pre = Pair::new(*xi, xs, i, is);
        let rc = r_cap.sample(rng);
        let r = r_split.sample(rng);
        let post = bl_collide_standard(&pre, rc, r, &unit_sphere(rng))?;
        let gain = (m.ln_reduced(&post.xi, post.i) + m.ln_reduced(&post.xi_star, post.i_star) - m.ln_reduced(&xs, is)).exp();
        Ok(k * gas.pair_factor(pre.relative_speed(), i + is) * ipow * (gain - ln_here.exp()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state() -> MacroState {
        MacroState::new(1.2, [0.3, -0.2, 0.1], 1.6, 0.9).unwrap()
    }

    #[test]
    fn invariants_vanish_sample_by_sample() {
        let st = state();
        let gas = GasModel::new(3.0, 0.5, 0.7, 1.0, 0.5).unwrap();
        let sampler = CollisionSampler::new(&st, &gas).unwrap();
        let mut rng = crate::rng::stream(1, 0);
        let tot = TestFunction::total_energy();
        for _ in 0..10_000 {
            let d = sampler.draw(&mut rng, true, true).unwrap();
            let s = d.standard.unwrap();
            let r = d.resonant.unwrap();
            let scale = d.pre.total_energy();
            assert!(delta_of(&tot, &d.pre, &s).abs() < 1e-12 * scale);
            assert!(delta_of(&tot, &d.pre, &r).abs() < 1e-12 * scale);
            assert!((s.momentum() - d.pre.momentum()).norm() < 1e-12 * scale.sqrt().max(1.0));
            assert!(((r.i + r.i_star) - (d.pre.i + d.pre.i_star)).abs() < 1e-12 * scale);
            assert!(((r.xi - r.xi_star).norm() - d.pre.relative_speed()).abs() < 1e-12 * scale.sqrt().max(1.0));
        }
    }

    #[test]
    fn weak_form_of_invariants_is_zero() {
        let st = state();
        let gas = GasModel::new(2.0, 0.0, 1.0, 1.0, 0.4).unwrap();
        for g in [TestFunction::one(), TestFunction::momentum(1), TestFunction::total_energy()] {
            let e = weak_q_mc(&st, &g, &gas, 0.4, 4096, 3).unwrap();
            assert!(e.value.abs() < 1e-11, "{} {e:?}", g.label);
        }
    }

    #[test]
    fn collision_frequency_alpha0_beta0_closed_form() {
        let st = state();
        let gas = GasModel::new(2.0, 0.0, 0.0, 1.3, 0.5).unwrap();
        let nu = nu_model(&Vec3::new(0.4, 0.0, 1.0), 2.0, &st, &gas).unwrap();
        let expected = 4.0 * PI * 1.3 * st.rho;
        assert!((nu.resonant / expected - 1.0).abs() < 1e-10);
        assert!((nu.standard / nu.resonant - 1.0).abs() < 1e-10);
    }

    #[test]
    fn speed_moment_beta1_closed_form() {
        // E|w - Z| for |w| = a is (a + 1/a) erf(a/sqrt2) + sqrt(2/pi) exp(-a^2/2);
        // value at a = 1.7 to 30 digits.
        let v = speed_moment(1.7, 1.0, 1.0).unwrap();
        let exact = 2.272_380_919_305_853_35;
        assert!((v - exact).abs() < 1e-12, "{v} {exact}");
        let v0 = speed_moment(0.0, 1.0, 1.0).unwrap();
        assert!((v0 - 2.0 * (2.0 / PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn corrupted_c_s_breaks_frequency_identity() {
        let st = state();
        let gas = GasModel::new(2.0, 0.5, 0.5, 1.0, 0.5).unwrap();
        let bad = gas.with_corrupted_c_s(gas.c_s() * 1.01);
        let nu = nu_model(&Vec3::new(1.0, 0.0, 0.0), 0.5, &st, &bad).unwrap();
        assert!((nu.standard / nu.resonant - 1.01).abs() < 1e-9);
    }

    #[test]
    fn pointwise_qs_vanishes_at_equal_temperatures() {
        let st = MacroState::at_rest(1.0, 1.0, 1.0).unwrap();
        let gas = GasModel::new(2.0, 0.0, 1.0, 1.0, 0.5).unwrap();
        let q = QsPointwise::new(&st, &gas).unwrap();
        assert_eq!(q.eval(1.0, 0.5).unwrap(), 0.0);
    }

    fn relax_f_closed(st: &MacroState, gas: &GasModel) -> f64 {
        let (d, a, b) = (gas.delta, gas.alpha, gas.beta);
        let lc = (b + 2.0) * 2f64.ln() + 0.5 * PI.ln() + ln_gamma(d + a + 1.0) + 2.0 * ln_gamma(d / 2.0)
            + ln_gamma((b + 5.0) / 2.0)
            - 2.0 * ln_gamma(d);
        lc.exp() / (d + a + (b + 3.0) / 2.0) * gas.c_r * st.rho.powi(2) * st.t_tr.powf(b / 2.0) * st.t_int.powf(a)
    }

    #[test]
    fn pointwise_qs_energy_moment_matches_closed_form() {
        for (d, a, b, ttr, tint) in [(2.0, 0.0, 0.0, 2.0, 1.0), (3.0, 0.5, 1.0, 0.7, 1.3), (2.0, 0.5, 0.5, 1.0, 1.1)] {
            let st = MacroState::at_rest(1.3, ttr, tint).unwrap();
            let gas = GasModel::new(d, a, b, 0.8, 1.0).unwrap();
            let q = QsPointwise::new(&st, &gas).unwrap();
            let expected = relax_f_closed(&st, &gas) * (ttr - tint);
            let p = q.projections(&[&|_, i| i, &|_, _| 1.0, &|c, i| c * c + 2.0 * i], 40, 1e-9, expected.abs()).unwrap();
            assert!((p[0] / expected - 1.0).abs() < 1e-7, "{d} {a} {b}: {} vs {expected}", p[0]);
            assert!(p[1].abs() < 1e-8 * expected.abs(), "mass {}", p[1]);
            assert!(p[2].abs() < 1e-8 * expected.abs(), "energy {}", p[2]);
        }
    }

    #[test]
    fn pointwise_qs_matches_strong_form_mc() {
        let st = MacroState::new(1.0, [0.5, 0.0, 0.0], 2.0, 1.0).unwrap();
        let gas = GasModel::new(2.0, 0.5, 1.0, 1.0, 1.0).unwrap();
        let q = QsPointwise::new(&st, &gas).unwrap();
        let (c, i) = (1.2, 0.7);
        let exact = q.eval(c, i).unwrap();
        let xi = Vec3::new(0.5, c, 0.0);
        let e = qs_pointwise_mc(&st, &gas, &xi, i, 400_000, 11).unwrap();
        assert!(e.within(exact, 4.0), "{exact} vs {e:?}");
    }

    #[test]
    fn exchange_scale_signs() {
        let (z, e) = exchange_scale(2.0, 1.0);
        assert_eq!(e, 1.0);
        assert!((z - 2.0).abs() < 1e-15);
        let (_, e) = exchange_scale(1.0, 2.0);
        assert_eq!(e, -1.0);
        assert_eq!(exchange_scale(1.0, 1.0).1, 0.0);
    }
}
