//! Gas parameters, collision cross sections and Borgnakke-Larsen collision maps.
//!
//! Units are dimensionless with m = k_B = 1. A molecule carries a velocity
//! `xi` and a non-negative internal energy `i` with `delta` internal degrees
//! of freedom.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::Serialize;
use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

use crate::error::{ensure, Error, Result};

pub type Vec3 = Vector3<f64>;

/// Parameters of the mixed resonant/inelastic collision model.
///
/// `c_s` is derived from `c_r` so that the standard and resonant branches
/// share the same total collision frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GasModel {
    pub delta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub c_r: f64,
    pub theta: f64,
    c_s: f64,
}

impl GasModel {
    pub fn new(delta: f64, alpha: f64, beta: f64, c_r: f64, theta: f64) -> Result<Self> {
        ensure(delta.is_finite() && delta >= 2.0, || format!("delta must be >= 2, got {delta}"))?;
        ensure(alpha.is_finite() && alpha >= 0.0 && alpha < delta / 2.0, || {
            format!("alpha must lie in [0, delta/2) = [0, {}), got {alpha}", delta / 2.0)
        })?;
        ensure(beta.is_finite() && (0.0..=1.0).contains(&beta), || {
            format!("beta must lie in [0, 1], got {beta}")
        })?;
        ensure(c_r.is_finite() && c_r > 0.0, || format!("c_r must be positive, got {c_r}"))?;
        ensure(theta.is_finite() && (0.0..=1.0).contains(&theta), || {
            format!("theta must lie in [0, 1], got {theta}")
        })?;
        let c_s = c_r * standard_to_resonant_ratio(delta, alpha, beta);
        Ok(GasModel { delta, alpha, beta, c_r, theta, c_s })
    }

    pub fn c_s(&self) -> f64 {
        self.c_s
    }

    /// Copy of the model with `c_s` replaced. Only meant for fault injection:
    /// it breaks the equality of the two collision frequencies on purpose.
    pub fn with_corrupted_c_s(mut self, c_s: f64) -> Self {
        self.c_s = c_s;
        self
    }

    pub fn with_theta(mut self, theta: f64) -> Result<Self> {
        ensure((0.0..=1.0).contains(&theta), || format!("theta must lie in [0, 1], got {theta}"))?;
        self.theta = theta;
        Ok(self)
    }

    /// Shape parameters of the Beta law of the energy fraction `R` kept by
    /// the relative motion in a standard collision.
    pub fn r_cap_shape(&self) -> (f64, f64) {
        ((self.beta + 3.0) / 2.0, self.alpha + self.delta)
    }

    /// Shape parameter of the symmetric Beta law of the internal split `r`.
    pub fn r_split_shape(&self) -> f64 {
        self.delta / 2.0
    }

    /// 4 pi C_s B(a, b) B(delta/2, delta/2): total weight of the standard
    /// kernel once R, r and sigma are integrated out.
    pub fn standard_weight(&self) -> f64 {
        let (a, b) = self.r_cap_shape();
        let h = self.delta / 2.0;
        4.0 * PI * self.c_s * (ln_beta(a, b) + ln_beta(h, h)).exp()
    }

    /// 4 pi C_r B(delta/2, delta/2).
    pub fn resonant_weight(&self) -> f64 {
        let h = self.delta / 2.0;
        4.0 * PI * self.c_r * ln_beta(h, h).exp()
    }

    /// Microscopic weight (I + I*)^alpha |g|^beta shared by both kernels.
    pub fn pair_factor(&self, g_mag: f64, i_sum: f64) -> f64 {
        pow0(i_sum, self.alpha) * pow0(g_mag, self.beta)
    }
}

/// C_s / C_r.
pub fn standard_to_resonant_ratio(delta: f64, alpha: f64, beta: f64) -> f64 {
    let a = (beta + 3.0) / 2.0;
    (ln_gamma(delta + alpha + a) - ln_gamma(a) - ln_gamma(delta + alpha)).exp()
}

/// x^p with 0^0 = 1.
#[inline]
pub(crate) fn pow0(x: f64, p: f64) -> f64 {
    if p == 0.0 {
        1.0
    } else {
        x.powf(p)
    }
}

fn check_energy(name: &str, x: f64) -> Result<()> {
    if !x.is_finite() || x < 0.0 {
        return Err(Error::Domain(format!("{name} must be a finite non-negative energy, got {x}")));
    }
    Ok(())
}

/// Cross section of the standard (inelastic) branch, sigma_s(|g|, I, I* -> I', I*').
pub fn sigma_s(g_mag: f64, i: f64, i_star: f64, i_p: f64, i_star_p: f64, gas: &GasModel) -> Result<f64> {
    if !(g_mag.is_finite() && g_mag > 0.0) {
        return Err(Error::Domain(format!("relative speed must be positive, got {g_mag}")));
    }
    for (n, x) in [("i", i), ("i_star", i_star), ("i_prime", i_p), ("i_star_prime", i_star_p)] {
        check_energy(n, x)?;
    }
    let e = 0.25 * g_mag * g_mag + i + i_star;
    let gp2 = g_mag * g_mag - 4.0 * (i_p + i_star_p - i - i_star);
    if gp2 < 0.0 {
        return Err(Error::Domain(format!(
            "post-collision internal energy {} exceeds the available energy {e}",
            i_p + i_star_p
        )));
    }
    let (d, a, b) = (gas.delta, gas.alpha, gas.beta);
    let v = gas.c_s
        * 0.25f64.powf((b + 1.0) / 2.0)
        * pow0(i + i_star, a)
        * pow0(i_p + i_star_p, a)
        * pow0(i_p * i_star_p, d / 2.0 - 1.0)
        / e.powf(d + a + (b + 1.0) / 2.0)
        * g_mag.powf(b - 1.0)
        * gp2.sqrt().powf(b + 1.0);
    Ok(v)
}

/// Cross section of the resonant branch. The post-collision internal energies
/// must share the pre-collision sum.
pub fn sigma_r(g_mag: f64, i: f64, i_star: f64, i_p: f64, i_star_p: f64, gas: &GasModel) -> Result<f64> {
    if !(g_mag.is_finite() && g_mag > 0.0) {
        return Err(Error::Domain(format!("relative speed must be positive, got {g_mag}")));
    }
    for (n, x) in [("i", i), ("i_star", i_star), ("i_prime", i_p), ("i_star_prime", i_star_p)] {
        check_energy(n, x)?;
    }
    let s = i + i_star;
    if s <= 0.0 {
        return Err(Error::Domain("resonant cross section is singular at I + I* = 0".into()));
    }
    if ((i_p + i_star_p) - s).abs() > 1e-12 * s {
        return Err(Error::Domain(format!(
            "resonant collision must conserve internal energy: {s} -> {}",
            i_p + i_star_p
        )));
    }
    let (d, a, b) = (gas.delta, gas.alpha, gas.beta);
    Ok(gas.c_r * pow0(i_p * i_star_p, d / 2.0 - 1.0) / s.powf(d - 1.0 - a) * g_mag.powf(b - 1.0))
}

/// B_s = C_s (I+I*)^alpha |g|^beta R^(beta/2) (1-R)^alpha.
pub fn kernel_b_s(g_mag: f64, i: f64, i_star: f64, r_cap: f64, gas: &GasModel) -> Result<f64> {
    if !(0.0..=1.0).contains(&r_cap) {
        return Err(Error::Domain(format!("R must lie in [0, 1], got {r_cap}")));
    }
    check_energy("i", i)?;
    check_energy("i_star", i_star)?;
    Ok(gas.c_s * gas.pair_factor(g_mag.abs(), i + i_star) * pow0(r_cap, gas.beta / 2.0) * pow0(1.0 - r_cap, gas.alpha))
}

/// B_r = C_r (I+I*)^alpha |g|^beta.
pub fn kernel_b_r(g_mag: f64, i: f64, i_star: f64, gas: &GasModel) -> Result<f64> {
    check_energy("i", i)?;
    check_energy("i_star", i_star)?;
    Ok(gas.c_r * gas.pair_factor(g_mag.abs(), i + i_star))
}

/// One molecule pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair {
    pub xi: Vec3,
    pub xi_star: Vec3,
    pub i: f64,
    pub i_star: f64,
}

impl Pair {
    pub fn new(xi: Vec3, xi_star: Vec3, i: f64, i_star: f64) -> Self {
        Pair { xi, xi_star, i, i_star }
    }

    pub fn relative_speed(&self) -> f64 {
        (self.xi - self.xi_star).norm()
    }

    pub fn total_energy(&self) -> f64 {
        0.5 * (self.xi.norm_squared() + self.xi_star.norm_squared()) + self.i + self.i_star
    }

    pub fn momentum(&self) -> Vec3 {
        self.xi + self.xi_star
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Branch {
    Standard,
    Resonant,
}

/// A pre/post collision pair together with the parameters that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionSample {
    pub pre: Pair,
    pub post: Pair,
    pub branch: Branch,
    pub r_cap: Option<f64>,
    pub r: f64,
    pub sigma: Vec3,
}

fn check_unit(sigma: &Vec3) -> Result<()> {
    if (sigma.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(format!("sigma must be a unit vector, |sigma| = {}", sigma.norm())));
    }
    Ok(())
}

fn check_fraction(name: &str, x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("{name} must lie in [0, 1], got {x}")));
    }
    Ok(())
}

/// Standard Borgnakke-Larsen collision: a fraction R of the total energy
/// E = |g|^2/4 + I + I* stays in relative motion, the rest is split r : 1-r.
pub fn bl_collide_standard(pre: &Pair, r_cap: f64, r: f64, sigma: &Vec3) -> Result<Pair> {
    check_fraction("R", r_cap)?;
    check_fraction("r", r)?;
    check_unit(sigma)?;
    check_energy("i", pre.i)?;
    check_energy("i_star", pre.i_star)?;
    let g = pre.xi - pre.xi_star;
    let e = 0.25 * g.norm_squared() + pre.i + pre.i_star;
    let centre = 0.5 * (pre.xi + pre.xi_star);
    let half = (r_cap * e).sqrt() * sigma;
    let ie = (1.0 - r_cap) * e;
    Ok(Pair { xi: centre + half, xi_star: centre - half, i: r * ie, i_star: (1.0 - r) * ie })
}

/// Resonant collision: |g| is kept, internal energy is redistributed r : 1-r.
pub fn bl_collide_resonant(pre: &Pair, r: f64, sigma: &Vec3) -> Result<Pair> {
    check_fraction("r", r)?;
    check_unit(sigma)?;
    check_energy("i", pre.i)?;
    check_energy("i_star", pre.i_star)?;
    let g = pre.xi - pre.xi_star;
    let centre = 0.5 * (pre.xi + pre.xi_star);
    let half = 0.5 * g.norm() * sigma;
    let s = pre.i + pre.i_star;
    Ok(Pair { xi: centre + half, xi_star: centre - half, i: r * s, i_star: (1.0 - r) * s })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gas(delta: f64, alpha: f64, beta: f64) -> GasModel {
        GasModel::new(delta, alpha, beta, 1.0, 0.5).unwrap()
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(GasModel::new(1.5, 0.0, 0.0, 1.0, 0.1).is_err());
        assert!(GasModel::new(2.0, 1.0, 0.0, 1.0, 0.1).is_err());
        assert!(GasModel::new(2.0, 0.0, 1.5, 1.0, 0.1).is_err());
        assert!(GasModel::new(2.0, 0.0, 0.5, 0.0, 0.1).is_err());
        assert!(GasModel::new(2.0, 0.0, 0.5, 1.0, 1.1).is_err());
        assert!(GasModel::new(2.0, 0.0, 0.5, 1.0, 0.0).is_ok());
    }

    #[test]
    fn c_s_ratio_for_delta2_alpha0_beta0() {
        // Gamma(3.5) / (Gamma(1.5) Gamma(2)) = 15/4
        let g = gas(2.0, 0.0, 0.0);
        assert!((g.c_s() - 3.75).abs() < 1e-12);
    }

    #[test]
    fn standard_and_resonant_weights_coincide() {
        for (d, a, b) in [(2.0, 0.0, 0.0), (3.0, 0.5, 1.0), (5.0, 2.0, 0.3)] {
            let g = gas(d, a, b);
            assert!((g.standard_weight() / g.resonant_weight() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sigma_r_example_value() {
        let g = GasModel::new(2.0, 0.0, 1.0, 1.0, 0.0).unwrap();
        assert!((sigma_r(1.0, 1.0, 1.0, 1.5, 0.5, &g).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kernel_b_s_example_value() {
        let ratio = standard_to_resonant_ratio(2.0, 0.0, 1.0);
        let g = GasModel::new(2.0, 0.0, 1.0, 1.0 / ratio, 0.0).unwrap();
        assert!((g.c_s() - 1.0).abs() < 1e-14);
        assert!((kernel_b_s(3.0, 0.7, 0.2, 0.25, &g).unwrap() - 1.5).abs() < 1e-14);
    }

    #[test]
    fn kernel_matches_cross_section_with_bl_jacobian() {
        // B_s = sigma_s |g| E^2 / ([r(1-r)]^(d/2-1) (1-R)^(d-2) R^(1/2))
        let g = gas(3.0, 0.5, 0.7);
        let (gm, i, is, rc, r) = (1.3, 0.4, 0.9, 0.35, 0.2);
        let e = 0.25 * gm * gm + i + is;
        let ie = (1.0 - rc) * e;
        let s = sigma_s(gm, i, is, r * ie, (1.0 - r) * ie, &g).unwrap();
        let via_sigma = s * gm * e * e
            / ((r * (1.0 - r)).powf(g.delta / 2.0 - 1.0) * (1.0 - rc).powf(g.delta - 2.0) * rc.sqrt());
        let direct = kernel_b_s(gm, i, is, rc, &g).unwrap();
        assert!((via_sigma / direct - 1.0).abs() < 1e-12, "{via_sigma} vs {direct}");
    }

    #[test]
    fn sigma_domain_errors() {
        let g = gas(2.0, 0.0, 0.5);
        assert!(matches!(sigma_s(0.0, 1.0, 1.0, 1.0, 1.0, &g), Err(Error::Domain(_))));
        assert!(matches!(sigma_s(1.0, 0.1, 0.1, 2.0, 2.0, &g), Err(Error::Domain(_))));
        assert!(matches!(sigma_r(1.0, 0.0, 0.0, 0.0, 0.0, &g), Err(Error::Domain(_))));
        assert!(matches!(sigma_r(1.0, 1.0, 1.0, 1.0, 0.5, &g), Err(Error::Domain(_))));
    }

    #[test]
    fn bl_example_conserves() {
        let pre = Pair::new(Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0), 1.0, 1.0);
        let post = bl_collide_standard(&pre, 0.5, 0.5, &Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert!((post.total_energy() - 3.0).abs() < 1e-14);
        assert!(post.momentum().norm() < 1e-14);
        assert!((post.i - 0.75).abs() < 1e-14 && (post.i_star - 0.75).abs() < 1e-14);
    }

    #[test]
    fn bl_rejects_non_unit_sigma() {
        let pre = Pair::new(Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), 1.0, 1.0);
        assert!(bl_collide_resonant(&pre, 0.5, &Vec3::new(0.0, 0.0, 2.0)).is_err());
        assert!(bl_collide_standard(&pre, 1.5, 0.5, &Vec3::new(0.0, 0.0, 1.0)).is_err());
    }
}
