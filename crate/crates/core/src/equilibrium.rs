//! Macroscopic states, single- and two-temperature Maxwellians, sampling and
//! moments of particle sets, and reference scales for nondimensionalization.

use std::f64::consts::PI;

use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{ensure, Error, Result};
use crate::model::Vec3;
use crate::rng::{normal3, Rng};

/// Density, bulk velocity and the two temperatures of a gas element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroState {
    pub rho: f64,
    pub u: [f64; 3],
    pub t_tr: f64,
    pub t_int: f64,
}

impl MacroState {
    pub fn new(rho: f64, u: [f64; 3], t_tr: f64, t_int: f64) -> Result<Self> {
        let s = MacroState { rho, u, t_tr, t_int };
        s.validate()?;
        Ok(s)
    }

    pub fn at_rest(rho: f64, t_tr: f64, t_int: f64) -> Result<Self> {
        Self::new(rho, [0.0; 3], t_tr, t_int)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.rho.is_finite() && self.rho > 0.0, || format!("density must be positive, got {}", self.rho))?;
        ensure(self.t_tr.is_finite() && self.t_tr > 0.0, || format!("T_tr must be positive, got {}", self.t_tr))?;
        ensure(self.t_int.is_finite() && self.t_int > 0.0, || format!("T_int must be positive, got {}", self.t_int))?;
        ensure(self.u.iter().all(|x| x.is_finite()), || "bulk velocity must be finite".into())
    }

    pub fn velocity(&self) -> Vec3 {
        Vec3::from(self.u)
    }

    /// Equilibrium temperature (3 T_tr + delta T_int) / (3 + delta).
    pub fn temperature(&self, delta: f64) -> f64 {
        (3.0 * self.t_tr + delta * self.t_int) / (3.0 + delta)
    }

    /// Same state with both temperatures set to the equilibrium temperature.
    pub fn equilibrated(&self, delta: f64) -> Self {
        let t = self.temperature(delta);
        MacroState { t_tr: t, t_int: t, ..*self }
    }
}

/// Two-temperature Maxwellian M_r; with T_tr = T_int it is the
/// single-temperature M_s.
#[derive(Debug, Clone, Copy)]
pub struct Maxwellian {
    pub state: MacroState,
    pub delta: f64,
    ln_norm: f64,
}

impl Maxwellian {
    pub fn new(state: MacroState, delta: f64) -> Result<Self> {
        state.validate()?;
        ensure(delta >= 2.0, || format!("delta must be >= 2, got {delta}"))?;
        let h = delta / 2.0;
        let ln_norm = state.rho.ln() - 1.5 * (2.0 * PI * state.t_tr).ln() - h * state.t_int.ln() - ln_gamma(h);
        Ok(Maxwellian { state, delta, ln_norm })
    }

    pub fn single_temperature(rho: f64, u: [f64; 3], t: f64, delta: f64) -> Result<Self> {
        Self::new(MacroState::new(rho, u, t, t)?, delta)
    }

    /// ln( I^{1 - delta/2} M(xi, I) ); finite at I = 0.
    pub fn ln_reduced(&self, xi: &Vec3, i: f64) -> f64 {
        let c2 = (xi - self.state.velocity()).norm_squared();
        self.ln_norm - c2 / (2.0 * self.state.t_tr) - i / self.state.t_int
    }

    pub fn density(&self, xi: &Vec3, i: f64) -> f64 {
        if i < 0.0 {
            return 0.0;
        }
        let p = self.delta / 2.0 - 1.0;
        let ipow = if p == 0.0 { 1.0 } else { i.powf(p) };
        ipow * self.ln_reduced(xi, i).exp()
    }
}

/// Draws (xi, I) from a Maxwellian: Gaussian velocity with variance T_tr per
/// component and I ~ Gamma(delta/2, T_int).
#[derive(Debug, Clone)]
pub struct MaxwellianSampler {
    u: Vec3,
    sd: f64,
    energy: Gamma<f64>,
}

impl MaxwellianSampler {
    pub fn new(state: &MacroState, delta: f64) -> Result<Self> {
        state.validate()?;
        let energy = Gamma::new(delta / 2.0, state.t_int)
            .map_err(|e| Error::InvalidParameter(format!("internal energy law: {e}")))?;
        Ok(MaxwellianSampler { u: state.velocity(), sd: state.t_tr.sqrt(), energy })
    }

    pub fn sample(&self, rng: &mut Rng) -> (Vec3, f64) {
        (self.u + self.sd * normal3(rng), self.energy.sample(rng))
    }

    /// Peculiar velocity only (bulk velocity not added).
    pub fn sample_peculiar(&self, rng: &mut Rng) -> (Vec3, f64) {
        (self.sd * normal3(rng), self.energy.sample(rng))
    }
}

/// A simulation particle with a statistical weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub xi: Vec3,
    pub i: f64,
    pub weight: f64,
}

/// Moments of a particle set. Temperatures may vanish, so this is not a
/// [`MacroState`] until converted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub rho: f64,
    pub u: [f64; 3],
    pub t_tr: f64,
    pub t_int: f64,
}

impl TryFrom<Moments> for MacroState {
    type Error = Error;
    fn try_from(m: Moments) -> Result<MacroState> {
        MacroState::new(m.rho, m.u, m.t_tr, m.t_int)
    }
}

/// Weighted moments of a particle set: rho = sum w, u, T_tr = <|c|^2>/3 and
/// T_int = 2 <I> / delta.
pub fn moments_from_samples(particles: &[Particle], delta: f64) -> Result<Moments> {
    if particles.is_empty() {
        return Err(Error::InvalidParameter("empty particle set".into()));
    }
    let w: f64 = particles.iter().map(|p| p.weight).sum();
    if !(w > 0.0) {
        return Err(Error::InvalidParameter("total particle weight must be positive".into()));
    }
    let mut mom = Vec3::zeros();
    let mut ei = 0.0;
    for p in particles {
        if !(p.xi.iter().all(|x| x.is_finite()) && p.i.is_finite() && p.weight.is_finite()) {
            return Err(Error::NonFinite("particle with non-finite velocity, energy or weight".into()));
        }
        mom += p.weight * p.xi;
        ei += p.weight * p.i;
    }
    let u = mom / w;
    let c2: f64 = particles.iter().map(|p| p.weight * (p.xi - u).norm_squared()).sum();
    Ok(Moments { rho: w, u: [u.x, u.y, u.z], t_tr: c2 / (3.0 * w), t_int: 2.0 * ei / (delta * w) })
}

/// Reference scales of a dimensional problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceScales {
    pub mass: f64,
    pub k_b: f64,
    pub number_density: f64,
    pub temperature: f64,
    pub length: f64,
    pub time: f64,
    /// Scale of the collision kernel W_theta, per unit number density.
    pub kernel: f64,
}

/// Dimensional state: number density, velocity and temperatures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalState {
    pub number_density: f64,
    pub u: [f64; 3],
    pub t_tr: f64,
    pub t_int: f64,
}

impl ReferenceScales {
    pub fn validate(&self) -> Result<()> {
        for (n, x) in [
            ("mass", self.mass),
            ("k_b", self.k_b),
            ("number_density", self.number_density),
            ("temperature", self.temperature),
            ("length", self.length),
            ("time", self.time),
            ("kernel", self.kernel),
        ] {
            ensure(x.is_finite() && x > 0.0, || format!("reference {n} must be positive, got {x}"))?;
        }
        Ok(())
    }

    /// Thermal speed sqrt(k_B T0 / m).
    pub fn speed(&self) -> f64 {
        (self.k_b * self.temperature / self.mass).sqrt()
    }

    /// Knudsen number xi0 / (L0 n0 W0).
    pub fn knudsen(&self) -> f64 {
        self.speed() / (self.length * self.number_density * self.kernel)
    }

    /// Strouhal number L0 / (t0 xi0).
    pub fn strouhal(&self) -> f64 {
        self.length / (self.time * self.speed())
    }

    pub fn to_dimensionless(&self, s: &PhysicalState) -> Result<MacroState> {
        self.validate()?;
        let v = self.speed();
        MacroState::new(
            s.number_density / self.number_density,
            [s.u[0] / v, s.u[1] / v, s.u[2] / v],
            s.t_tr / self.temperature,
            s.t_int / self.temperature,
        )
    }

    pub fn to_physical(&self, s: &MacroState) -> Result<PhysicalState> {
        self.validate()?;
        let v = self.speed();
        Ok(PhysicalState {
            number_density: s.rho * self.number_density,
            u: [s.u[0] * v, s.u[1] * v, s.u[2] * v],
            t_tr: s.t_tr * self.temperature,
            t_int: s.t_int * self.temperature,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussRule;
    use crate::rng::stream;

    #[test]
    fn maxwellian_example_value() {
        let m = Maxwellian::single_temperature(1.0, [0.0; 3], 1.0, 2.0).unwrap();
        let v = m.density(&Vec3::zeros(), 0.0);
        assert!((v - (2.0 * PI).powf(-1.5)).abs() < 1e-15);
    }

    #[test]
    fn maxwellian_moments_by_tensor_quadrature() {
        // 64-point Gauss-Hermite per axis and 64-point Laguerre in I, built
        // for unit temperatures, integrate a Maxwellian at other temperatures.
        let st = MacroState::new(1.3, [0.2, -0.1, 0.4], 1.4, 0.8).unwrap();
        let delta = 3.0;
        let m = Maxwellian::new(st, delta).unwrap();
        let gh = GaussRule::hermite_normal(64);
        let a = delta / 2.0 - 1.0;
        let gl = GaussRule::laguerre(64, a);
        let (mut mass, mut mom, mut e_tr, mut e_int) = (0.0, Vec3::zeros(), 0.0, 0.0);
        let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * PI).sqrt();
        for (y, wy) in gl.iter() {
            let wi = wy / (y.powf(a) * (-y).exp());
            for (x1, w1) in gh.iter() {
                for (x2, w2) in gh.iter() {
                    for (x3, w3) in gh.iter() {
                        let xi = Vec3::new(x1, x2, x3);
                        let w = w1 * w2 * w3 * wi / (phi(x1) * phi(x2) * phi(x3));
                        let f = w * m.density(&xi, y);
                        mass += f;
                        mom += f * xi;
                        e_tr += f * (xi - st.velocity()).norm_squared();
                        e_int += f * y;
                    }
                }
            }
        }
        assert!((mass / st.rho - 1.0).abs() < 1e-10, "{mass}");
        assert!((mom / st.rho - st.velocity()).norm() < 1e-10);
        assert!((e_tr / (3.0 * st.rho) / st.t_tr - 1.0).abs() < 1e-10);
        assert!((2.0 * e_int / (delta * st.rho) / st.t_int - 1.0).abs() < 1e-10);
    }

    #[test]
    fn sampled_moments_recover_state() {
        let st = MacroState::new(2.0, [0.3, 0.0, -0.2], 1.5, 0.7).unwrap();
        let s = MaxwellianSampler::new(&st, 3.0).unwrap();
        let mut rng = stream(11, 0);
        let ps: Vec<Particle> = (0..200_000)
            .map(|_| {
                let (xi, i) = s.sample(&mut rng);
                Particle { xi, i, weight: 2.0 / 200_000.0 }
            })
            .collect();
        let m = moments_from_samples(&ps, 3.0).unwrap();
        assert!((m.rho - 2.0).abs() < 1e-9);
        assert!((m.t_tr / 1.5 - 1.0).abs() < 0.01);
        assert!((m.t_int / 0.7 - 1.0).abs() < 0.01);
        assert!((m.u[0] - 0.3).abs() < 0.01);
    }

    #[test]
    fn single_particle_has_zero_temperature() {
        let p = Particle { xi: Vec3::new(1.0, 0.0, 0.0), i: 0.0, weight: 1.0 };
        let m = moments_from_samples(&[p], 2.0).unwrap();
        assert_eq!(m.u, [1.0, 0.0, 0.0]);
        assert_eq!(m.t_tr, 0.0);
        assert_eq!(m.t_int, 0.0);
        assert!(MacroState::try_from(m).is_err());
    }

    #[test]
    fn nondimensional_round_trip() {
        let r = ReferenceScales {
            mass: 4.65e-26,
            k_b: 1.380649e-23,
            number_density: 2.5e25,
            temperature: 300.0,
            length: 1e-3,
            time: 1e-6,
            kernel: 1e-16,
        };
        let p = PhysicalState { number_density: 3e25, u: [100.0, -20.0, 5.0], t_tr: 450.0, t_int: 310.0 };
        let d = r.to_dimensionless(&p).unwrap();
        let back = r.to_physical(&d).unwrap();
        assert!((back.number_density / p.number_density - 1.0).abs() < 1e-14);
        assert!((back.t_tr / p.t_tr - 1.0).abs() < 1e-14);
        assert!((back.u[1] / p.u[1] - 1.0).abs() < 1e-14);
        assert!(r.knudsen() > 0.0 && r.strouhal() > 0.0);
    }
}
