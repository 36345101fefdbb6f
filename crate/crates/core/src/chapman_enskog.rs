//! Galerkin solution of the linearized resonant equations and the transport
//! and relaxation coefficients built from them.
//!
//! Unknowns are expanded in t(c) L_k^{(a)}(x) L_n^{(delta/2-1)}(y) with
//! x = |c|^2/(2 T_tr), y = I/T_int and the sector prefactor t(c) equal to
//! c_x c_y (shear), c_x (heat) or 1 (relaxation). These are orthogonal under
//! M_r. The collision invariants of each sector are dropped from the basis,
//! which imposes the Chapman-Enskog constraints exactly and leaves a positive
//! definite Gram matrix.
//!
//! The Gram matrix of the Dirichlet form separates into velocity and internal
//! energy factors, each a low-dimensional polynomial integral, so it is
//! evaluated exactly by Gauss rules. A Monte Carlo assembly is available as an
//! independent check.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::collision::{dirichlet_gram_matrix, dirichlet_gram_mc, exchange_scale, QsPointwise, TestFunction};
use crate::equilibrium::MacroState;
use crate::error::{finite, Error, Result};
use crate::model::{GasModel, Vec3};
use crate::quadrature::{laguerre_norm2, laguerre_values, GaussRule, SphereRule};
use crate::rng::{jackknife, McEstimate, VecEstimate};

/// Angular family of a Chapman-Enskog unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sector {
    /// c_x c_y prefactor, for the shear function.
    Tensor,
    /// c_x prefactor, for the two heat-flux functions.
    Vector,
    /// No prefactor, for the relaxation correction.
    Scalar,
}

impl Sector {
    /// Laguerre parameter in x that makes the basis orthogonal.
    pub fn laguerre_a(self) -> f64 {
        match self {
            Sector::Tensor => 2.5,
            Sector::Vector => 1.5,
            Sector::Scalar => 0.5,
        }
    }

    fn tensor_rank(self) -> i32 {
        match self {
            Sector::Tensor => 2,
            Sector::Vector => 1,
            Sector::Scalar => 0,
        }
    }

    /// Number of components the rotation-invariant contraction sums over,
    /// weighted so that contraction / components is the single-component form.
    fn components(self) -> f64 {
        match self {
            Sector::Tensor => 10.0,
            Sector::Vector => 3.0,
            Sector::Scalar => 1.0,
        }
    }

    pub fn prefactor(self, c: &Vec3) -> f64 {
        match self {
            Sector::Tensor => c.x * c.y,
            Sector::Vector => c.x,
            Sector::Scalar => 1.0,
        }
    }

    /// sum over components of t(a) t(b) for the traceless tensor, vector or scalar.
    fn contraction(self, a: &Vec3, b: &Vec3) -> f64 {
        match self {
            Sector::Tensor => {
                let d = a.dot(b);
                d * d - a.norm_squared() * b.norm_squared() / 3.0
            }
            Sector::Vector => a.dot(b),
            Sector::Scalar => 1.0,
        }
    }

    /// Modes spanning the collision invariants of this sector.
    fn is_invariant(self, k: usize, n: usize) -> bool {
        match self {
            Sector::Tensor => false,
            Sector::Vector => k == 0 && n == 0,
            Sector::Scalar => (k, n) == (0, 0) || (k, n) == (1, 0) || (k, n) == (0, 1),
        }
    }
}

/// Orthogonal product basis of one sector, with the invariant modes removed.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    pub sector: Sector,
    pub n_c: usize,
    pub n_i: usize,
    pub delta: f64,
    pub state: MacroState,
    modes: Vec<(usize, usize)>,
    norm2: Vec<f64>,
}

impl SpectralBasis {
    pub fn new(sector: Sector, n_c: usize, n_i: usize, state: &MacroState, delta: f64) -> Result<Self> {
        state.validate()?;
        if n_c < 2 || n_i < 1 {
            return Err(Error::InvalidParameter(format!("basis needs n_c >= 2 and n_i >= 1, got ({n_c}, {n_i})")));
        }
        let a = sector.laguerre_a();
        let h = delta / 2.0;
        let mut modes = Vec::new();
        let mut norm2 = Vec::new();
        for k in 0..n_c {
            for n in 0..n_i {
                if sector.is_invariant(k, n) {
                    continue;
                }
                modes.push((k, n));
                norm2.push(
                    state.t_tr.powi(sector.tensor_rank()) * laguerre_norm2(k, a) * laguerre_norm2(n, h - 1.0),
                );
            }
        }
        Ok(SpectralBasis { sector, n_c, n_i, delta, state: *state, modes, norm2 })
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[(usize, usize)] {
        &self.modes
    }

    pub fn index_of(&self, k: usize, n: usize) -> Option<usize> {
        self.modes.iter().position(|&m| m == (k, n))
    }

    /// Squared norm <t^2 L_k^2 L_n^2> under M_r / rho.
    pub fn norm2(&self, idx: usize) -> f64 {
        self.norm2[idx]
    }

    /// Radial parts L_k(x) L_n(y) / norm of every mode at (|c|, I).
    pub fn radial_values(&self, c_mag: f64, i: f64, out: &mut [f64]) {
        let mut r = vec![0.0; self.n_c];
        let mut q = vec![0.0; self.n_i];
        laguerre_values(self.sector.laguerre_a(), c_mag * c_mag / (2.0 * self.state.t_tr), &mut r);
        laguerre_values(self.delta / 2.0 - 1.0, i / self.state.t_int, &mut q);
        for (o, (&(k, n), nn)) in out.iter_mut().zip(self.modes.iter().zip(&self.norm2)) {
            *o = r[k] * q[n] / nn.sqrt();
        }
    }

    /// Value of mode `idx` at peculiar velocity `c`.
    pub fn eval(&self, idx: usize, c: &Vec3, i: f64) -> f64 {
        let (k, n) = self.modes[idx];
        let mut r = vec![0.0; k + 1];
        let mut q = vec![0.0; n + 1];
        laguerre_values(self.sector.laguerre_a(), c.norm_squared() / (2.0 * self.state.t_tr), &mut r);
        laguerre_values(self.delta / 2.0 - 1.0, i / self.state.t_int, &mut q);
        self.sector.prefactor(c) * r[k] * q[n] / self.norm2[idx].sqrt()
    }

    /// The modes as test functions of the lab-frame velocity.
    pub fn test_functions(&self) -> Vec<TestFunction> {
        let u = self.state.velocity();
        (0..self.len())
            .map(|idx| {
                let b = self.clone();
                let (k, n) = self.modes[idx];
                TestFunction::new(format!("{:?}({k},{n})", self.sector), move |xi, i| b.eval(idx, &(xi - u), i))
            })
            .collect()
    }

    /// Function sum_a x_a phi_a(c, I) (with the prefactor) as a test function.
    pub fn expansion(&self, coeffs: &DVector<f64>, label: &str) -> TestFunction {
        let b = self.clone();
        let x = coeffs.clone();
        let u = self.state.velocity();
        TestFunction::new(label, move |xi, i| b.radial(&x, &(xi - u), i) * b.sector.prefactor(&(xi - u)))
    }

    /// Radial function sum_a x_a L_k(x) L_n(y) / norm at peculiar velocity c.
    pub fn radial(&self, coeffs: &DVector<f64>, c: &Vec3, i: f64) -> f64 {
        let mut v = vec![0.0; self.len()];
        self.radial_values(c.norm(), i, &mut v);
        v.iter().zip(coeffs.iter()).map(|(a, b)| a * b).sum()
    }
}

/// Velocity factors of the Gram matrix: same-particle, partner and
/// pre/post-collision correlations of |g|^beta t t' L_k L_k'.
struct VelocityMoments {
    same: DMatrix<f64>,
    partner: DMatrix<f64>,
    mixed: DMatrix<f64>,
}

fn velocity_moments(sector: Sector, n_c: usize, t: f64, beta: f64) -> VelocityMoments {
    let a = sector.laguerre_a();
    let deg = 2 * sector.tensor_rank() as usize + 4 * (n_c - 1);
    let ru = GaussRule::laguerre(deg / 4 + 2, 0.0);
    let rz = GaussRule::hermite_normal(deg / 2 + 2);
    let rt = GaussRule::laguerre(deg / 4 + 2, (1.0 + beta) / 2.0);
    let sphere = SphereRule::for_degree(deg);
    let t_pref = 2.0 / PI.sqrt() * (4.0 * t).powf(beta / 2.0);
    let mut same = DMatrix::zeros(n_c, n_c);
    let mut partner = DMatrix::zeros(n_c, n_c);
    let mut mixed = DMatrix::zeros(n_c, n_c);
    let (mut rc, mut rs, mut rp) = (vec![0.0; n_c], vec![0.0; n_c], vec![0.0; n_c]);
    let mut acc = DMatrix::zeros(n_c, n_c);
    for (u, wu) in ru.iter() {
        for (z, wz) in rz.iter() {
            let g_cm = Vec3::new((t * u).sqrt(), 0.0, (t / 2.0).sqrt() * z);
            for (tt, wt) in rt.iter() {
                let gm = (4.0 * t * tt).sqrt();
                let w = wu * wz * wt * t_pref;
                let half = Vec3::new(0.0, 0.0, gm / 2.0);
                let c = g_cm + half;
                let cs = g_cm - half;
                laguerre_values(a, c.norm_squared() / (2.0 * t), &mut rc);
                laguerre_values(a, cs.norm_squared() / (2.0 * t), &mut rs);
                let ts = w * sector.contraction(&c, &c);
                let tp = w * sector.contraction(&c, &cs);
                for i in 0..n_c {
                    for j in 0..n_c {
                        same[(i, j)] += ts * rc[i] * rc[j];
                        partner[(i, j)] += tp * rc[i] * rs[j];
                    }
                }
                acc.fill(0.0);
                for (p, ws) in sphere.points.iter().zip(&sphere.weights) {
                    let cp = g_cm + Vec3::new(p[0], p[1], p[2]) * (gm / 2.0);
                    laguerre_values(a, cp.norm_squared() / (2.0 * t), &mut rp);
                    let tm = ws * sector.contraction(&c, &cp);
                    for j in 0..n_c {
                        let v = tm * rp[j];
                        for i in 0..n_c {
                            acc[(i, j)] += v * rc[i];
                        }
                    }
                }
                mixed += &acc * w;
            }
        }
    }
    let sym = |m: DMatrix<f64>| (&m + m.transpose()) * 0.5;
    VelocityMoments { same: sym(same), partner: sym(partner), mixed: sym(mixed) }
}

/// Internal-energy factors: correlations of (I+I*)^alpha L_n L_n'.
struct InternalMoments {
    same: DMatrix<f64>,
    partner: DMatrix<f64>,
    mixed: DMatrix<f64>,
}

fn internal_moments(n_i: usize, t_int: f64, delta: f64, alpha: f64) -> InternalMoments {
    let h = delta / 2.0;
    let rs = GaussRule::laguerre(n_i + 2, delta - 1.0 + alpha);
    let scale = t_int.powf(alpha) / ln_gamma(delta).exp();
    let rr = GaussRule::jacobi01(n_i + 2, h - 1.0, h - 1.0).normalized();
    let mut same = DMatrix::zeros(n_i, n_i);
    let mut partner = DMatrix::zeros(n_i, n_i);
    let mut mixed = DMatrix::zeros(n_i, n_i);
    let (mut q, mut qs, mut qp) = (vec![0.0; n_i], vec![0.0; n_i], vec![0.0; n_i]);
    for (s, ws) in rs.iter() {
        for (r, wr) in rr.iter() {
            let w = ws * wr * scale;
            laguerre_values(h - 1.0, s * r, &mut q);
            laguerre_values(h - 1.0, s * (1.0 - r), &mut qs);
            for i in 0..n_i {
                for j in 0..n_i {
                    same[(i, j)] += w * q[i] * q[j];
                    partner[(i, j)] += w * q[i] * qs[j];
                }
            }
            for (rq, wq) in rr.iter() {
                laguerre_values(h - 1.0, s * rq, &mut qp);
                for i in 0..n_i {
                    for j in 0..n_i {
                        mixed[(i, j)] += w * wq * q[i] * qp[j];
                    }
                }
            }
        }
    }
    let sym = |m: DMatrix<f64>| (&m + m.transpose()) * 0.5;
    InternalMoments { same: sym(same), partner: sym(partner), mixed: sym(mixed) }
}

/// Exact Gram matrix (L_r phi_b, M_r phi_a) of a sector basis.
pub fn exact_gram(basis: &SpectralBasis, gas: &GasModel) -> DMatrix<f64> {
    let st = &basis.state;
    let v = velocity_moments(basis.sector, basis.n_c, st.t_tr, gas.beta);
    let m = internal_moments(basis.n_i, st.t_int, gas.delta, gas.alpha);
    let pref = 0.25 * st.rho * st.rho * gas.resonant_weight() / basis.sector.components();
    let n = basis.len();
    let mut g = DMatrix::zeros(n, n);
    for (a, &(ka, na)) in basis.modes.iter().enumerate() {
        for (b, &(kb, nb)) in basis.modes.iter().enumerate() {
            let e = 4.0 * v.same[(ka, kb)] * m.same[(na, nb)] + 4.0 * v.partner[(ka, kb)] * m.partner[(na, nb)]
                - 8.0 * v.mixed[(ka, kb)] * m.mixed[(na, nb)];
            g[(a, b)] = pref * e / (basis.norm2[a] * basis.norm2[b]).sqrt();
        }
    }
    (&g + g.transpose()) * 0.5
}

/// How the Gram matrix is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum GramMethod {
    Exact,
    MonteCarlo { samples: u64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CeOptions {
    pub n_c: usize,
    pub n_i: usize,
    pub gram: GramMethod,
    /// Largest accepted standard error of a Monte Carlo Gram entry relative
    /// to sqrt(G_aa G_bb).
    pub mc_budget: f64,
    /// Condition number above which a Gram matrix is rejected.
    pub max_condition: f64,
}

impl Default for CeOptions {
    fn default() -> Self {
        CeOptions { n_c: 8, n_i: 4, gram: GramMethod::Exact, mc_budget: 0.02, max_condition: 1e12 }
    }
}

impl CeOptions {
    pub fn validate(&self) -> Result<()> {
        if self.n_c < 2 || self.n_i < 2 {
            return Err(Error::InvalidParameter(format!("basis sizes must be at least 2, got n_c = {}, n_i = {}", self.n_c, self.n_i)));
        }
        if let GramMethod::MonteCarlo { samples, .. } = self.gram {
            if samples < 10_000 {
                return Err(Error::InvalidParameter(format!("Monte Carlo Gram needs at least 1e4 samples, got {samples}")));
            }
        }
        if !(self.mc_budget > 0.0) || !(self.max_condition > 1.0) {
            return Err(Error::InvalidParameter("mc_budget must be positive and max_condition above 1".into()));
        }
        Ok(())
    }
}

/// Assembled Gram system of one sector.
#[derive(Debug, Clone)]
pub struct SectorSystem {
    pub basis: SpectralBasis,
    pub gram: DMatrix<f64>,
    pub min_eigenvalue: f64,
    pub condition: f64,
    /// Batch means of the upper triangle for a Monte Carlo Gram.
    pub mc: Option<VecEstimate>,
    /// Largest entry standard error relative to sqrt(G_aa G_bb).
    pub mc_error: f64,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

fn spectrum(g: &DMatrix<f64>) -> (f64, f64) {
    let eig = g.clone().symmetric_eigen();
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (min, max / min)
}

impl SectorSystem {
    pub fn assemble(sector: Sector, state: &MacroState, gas: &GasModel, opts: &CeOptions) -> Result<Self> {
        opts.validate()?;
        let basis = SpectralBasis::new(sector, opts.n_c, opts.n_i, state, gas.delta)?;
        let m = basis.len();
        let (gram, mc, mc_error) = match opts.gram {
            GramMethod::Exact => (exact_gram(&basis, gas), None, 0.0),
            GramMethod::MonteCarlo { samples, seed } => {
                let est = dirichlet_gram_mc(state, &basis.test_functions(), gas, samples, seed)?;
                let g = dirichlet_gram_matrix(&est.mean, m);
                let se = dirichlet_gram_matrix(&est.std_error, m);
                let mut worst: f64 = 0.0;
                for a in 0..m {
                    for b in 0..m {
                        worst = worst.max(se[(a, b)] / (g[(a, a)] * g[(b, b)]).abs().sqrt());
                    }
                }
                if worst > opts.mc_budget {
                    return Err(Error::Numerical(format!(
                        "Monte Carlo Gram entry error {worst:.3e} exceeds the budget {:.3e}; raise the sample count or shrink the basis",
                        opts.mc_budget
                    )));
                }
                (g, Some(est), worst)
            }
        };
        Self::from_gram(basis, gram, mc, mc_error, opts.max_condition)
    }

    fn from_gram(basis: SpectralBasis, gram: DMatrix<f64>, mc: Option<VecEstimate>, mc_error: f64, max_condition: f64) -> Result<Self> {
        if gram.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("{:?} Gram matrix has non-finite entries", basis.sector)));
        }
        let (min_eigenvalue, condition) = spectrum(&gram);
        if !(min_eigenvalue > 0.0) || condition > max_condition {
            return Err(Error::IllConditioned(format!(
                "{:?} Gram matrix: smallest eigenvalue {min_eigenvalue:.3e}, condition {condition:.3e}",
                basis.sector
            )));
        }
        let chol = gram.clone().cholesky().ok_or_else(|| Error::IllConditioned(format!("{:?} Gram matrix is not positive definite", basis.sector)))?;
        Ok(SectorSystem { basis, gram, min_eigenvalue, condition, mc, mc_error, chol })
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    /// ||G x - b|| / ||b||.
    pub fn residual(&self, x: &DVector<f64>, rhs: &DVector<f64>) -> f64 {
        (&self.gram * x - rhs).norm() / rhs.norm().max(f64::MIN_POSITIVE)
    }
}

/// Right-hand sides of the three Chapman-Enskog equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    /// A_xy = c_x c_y.
    Shear,
    /// B_x = c_x (|c|^2/(2 T_tr) - 5/2).
    TranslationalHeat,
    /// C_x = c_x (I/T_int - delta/2).
    InternalHeat,
}

/// (source, M_r phi_a) for every mode of the matching sector. The sources are
/// single basis modes up to sign, so the projections are exact.
pub fn source_projection(basis: &SpectralBasis, source: Source) -> Result<DVector<f64>> {
    let (sector, mode, sign) = match source {
        Source::Shear => (Sector::Tensor, (0, 0), 1.0),
        Source::TranslationalHeat => (Sector::Vector, (1, 0), -1.0),
        Source::InternalHeat => (Sector::Vector, (0, 1), -1.0),
    };
    if basis.sector != sector {
        return Err(Error::InvalidParameter(format!("{source:?} belongs to the {sector:?} sector")));
    }
    let idx = basis
        .index_of(mode.0, mode.1)
        .ok_or_else(|| Error::InvalidParameter(format!("basis ({}, {}) too small for {source:?}", basis.n_c, basis.n_i)))?;
    let mut b = DVector::zeros(basis.len());
    b[idx] = sign * basis.state.rho * basis.norm2[idx].sqrt();
    Ok(b)
}

/// Galerkin coefficients of the shear and heat-flux functions.
#[derive(Debug, Clone)]
pub struct CeSolution {
    pub state: MacroState,
    pub gas: GasModel,
    pub tensor: SectorSystem,
    pub vector: SectorSystem,
    pub coeff_a: DVector<f64>,
    pub coeff_b: DVector<f64>,
    pub coeff_c: DVector<f64>,
    pub rhs_a: DVector<f64>,
    pub rhs_b: DVector<f64>,
    pub rhs_c: DVector<f64>,
    /// Largest relative Galerkin residual ||G x - b|| / ||b||.
    pub gram_residual: f64,
    /// Largest relative Monte Carlo error of a Gram entry (0 when exact).
    pub mc_error_budget: f64,
}

pub fn solve_abc(state: &MacroState, gas: &GasModel, opts: &CeOptions) -> Result<CeSolution> {
    let tensor = SectorSystem::assemble(Sector::Tensor, state, gas, opts)?;
    let vector = SectorSystem::assemble(Sector::Vector, state, gas, opts)?;
    let rhs_a = source_projection(&tensor.basis, Source::Shear)?;
    let rhs_b = source_projection(&vector.basis, Source::TranslationalHeat)?;
    let rhs_c = source_projection(&vector.basis, Source::InternalHeat)?;
    let coeff_a = tensor.solve(&rhs_a);
    let coeff_b = vector.solve(&rhs_b);
    let coeff_c = vector.solve(&rhs_c);
    let gram_residual = tensor
        .residual(&coeff_a, &rhs_a)
        .max(vector.residual(&coeff_b, &rhs_b))
        .max(vector.residual(&coeff_c, &rhs_c));
    let mc_error_budget = tensor.mc_error.max(vector.mc_error);
    Ok(CeSolution { state: *state, gas: *gas, tensor, vector, coeff_a, coeff_b, coeff_c, rhs_a, rhs_b, rhs_c, gram_residual, mc_error_budget })
}

impl CeSolution {
    /// Shear function A(|c|, I).
    pub fn shear(&self, c: f64, i: f64) -> f64 {
        self.tensor.basis.radial(&self.coeff_a, &Vec3::new(c, 0.0, 0.0), i)
    }

    /// Translational heat function B(|c|, I).
    pub fn heat_tr(&self, c: f64, i: f64) -> f64 {
        self.vector.basis.radial(&self.coeff_b, &Vec3::new(c, 0.0, 0.0), i)
    }

    /// Internal heat function C(|c|, I).
    pub fn heat_int(&self, c: f64, i: f64) -> f64 {
        self.vector.basis.radial(&self.coeff_c, &Vec3::new(c, 0.0, 0.0), i)
    }

    /// (c_i, c_j X M_r) for X = B and C, i.e. the Chapman-Enskog constraint,
    /// evaluated by quadrature and made relative to ||X||.
    pub fn constraint_residuals(&self) -> (f64, f64) {
        let st = &self.state;
        let h = self.gas.delta / 2.0;
        let n = self.vector.basis.n_c + self.vector.basis.n_i + 4;
        let rx = GaussRule::laguerre(n, 1.5).normalized();
        let ry = GaussRule::laguerre(n, h - 1.0).normalized();
        let eval = |coeffs: &DVector<f64>| {
            let mut v = 0.0;
            for (x, wx) in rx.iter() {
                let c = (2.0 * st.t_tr * x).sqrt();
                for (y, wy) in ry.iter() {
                    v += wx * wy * self.vector.basis.radial(coeffs, &Vec3::new(c, 0.0, 0.0), st.t_int * y);
                }
            }
            v / coeffs.norm().max(f64::MIN_POSITIVE)
        };
        (eval(&self.coeff_b), eval(&self.coeff_c))
    }

    /// h_1 for prescribed gradients: strain du_i/dx_j, grad T_tr and grad T_int.
    pub fn first_order_perturbation(&self, grad_u: [[f64; 3]; 3], grad_t_tr: [f64; 3], grad_t_int: [f64; 3]) -> TestFunction {
        let sol = self.clone();
        let u = self.state.velocity();
        TestFunction::new("h1", move |xi, i| {
            let c = xi - u;
            let t = sol.state.t_tr;
            let cm = c.norm();
            let a = sol.shear(cm, i);
            let b = sol.heat_tr(cm, i);
            let cc = sol.heat_int(cm, i);
            let mut shear = 0.0;
            for p in 0..3 {
                for q in 0..3 {
                    let s = grad_u[p][q] + grad_u[q][p];
                    let aij = c[p] * c[q] - if p == q { cm * cm / 3.0 } else { 0.0 };
                    shear += s * aij;
                }
            }
            let gt: f64 = (0..3).map(|j| grad_t_tr[j] * c[j]).sum();
            let gi: f64 = (0..3).map(|j| grad_t_int[j] * c[j]).sum();
            -shear * a / (2.0 * t) - gt * b / t - gi * cc / sol.state.t_int
        })
    }
}

/// Navier-Stokes coefficients. Heat-flux coefficients are named flux first,
/// gradient second: q_tr = -eps [lambda_tr_tr dT_tr/T_tr + lambda_tr_int dT_int/T_int].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransportCoefficients {
    pub lambda_mu: f64,
    pub lambda_tr_tr: f64,
    pub lambda_tr_int: f64,
    pub lambda_int_tr: f64,
    pub lambda_int_int: f64,
    pub f_relax: f64,
    pub k_relax: Option<f64>,
}

/// Evaluates the viscosity and heat-conduction integrals of the expansion by
/// Gauss-Laguerre quadrature in (x, y).
pub fn transport_coeffs(sol: &CeSolution) -> Result<TransportCoefficients> {
    let st = &sol.state;
    let gas = &sol.gas;
    let h = gas.delta / 2.0;
    let t = st.t_tr;
    let n = sol.tensor.basis.n_c.max(sol.vector.basis.n_c) + sol.tensor.basis.n_i.max(sol.vector.basis.n_i) + 4;
    let gh = ln_gamma(h).exp();
    let double = |ax: f64, ay: f64, f: &dyn Fn(f64, f64) -> f64| {
        let rx = GaussRule::laguerre(n, ax);
        let ry = GaussRule::laguerre(n, ay);
        let mut v = 0.0;
        for (x, wx) in rx.iter() {
            for (y, wy) in ry.iter() {
                v += wx * wy * f((2.0 * t * x).sqrt(), st.t_int * y);
            }
        }
        v
    };
    let sp = PI.sqrt();
    let lambda_mu = 8.0 * t * st.rho / (15.0 * sp * gh) * double(2.5, h - 1.0, &|c, i| sol.shear(c, i));
    let k_tr = 4.0 * t * t * st.rho / (3.0 * sp * gh);
    let k_int = 4.0 * t * st.t_int * st.rho / (3.0 * sp * gh);
    let tc = TransportCoefficients {
        lambda_mu,
        lambda_tr_tr: k_tr * double(2.5, h - 1.0, &|c, i| sol.heat_tr(c, i)),
        lambda_tr_int: k_tr * double(2.5, h - 1.0, &|c, i| sol.heat_int(c, i)),
        lambda_int_tr: k_int * double(1.5, h, &|c, i| sol.heat_tr(c, i)),
        lambda_int_int: k_int * double(1.5, h, &|c, i| sol.heat_int(c, i)),
        f_relax: relax_f(st, gas)?,
        k_relax: None,
    };
    let all = [tc.lambda_mu, tc.lambda_tr_tr, tc.lambda_tr_int, tc.lambda_int_tr, tc.lambda_int_int];
    if let Some(bad) = all.iter().find(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("transport coefficient evaluated to {bad}")));
    }
    Ok(tc)
}

/// The same coefficients from the Galerkin projections: Lambda_mu = x_A.b_A / T_tr,
/// Lambda_tr_X = T_tr b_B.x_X, Lambda_int_X = T_int b_C.x_X.
pub fn transport_from_projections(sol: &CeSolution) -> [f64; 5] {
    let (t, ti) = (sol.state.t_tr, sol.state.t_int);
    [
        sol.coeff_a.dot(&sol.rhs_a) / t,
        t * sol.rhs_b.dot(&sol.coeff_b),
        t * sol.rhs_b.dot(&sol.coeff_c),
        ti * sol.rhs_c.dot(&sol.coeff_b),
        ti * sol.rhs_c.dot(&sol.coeff_c),
    ]
}

/// Transport coefficients with jackknife errors from a Monte Carlo Gram.
pub fn transport_mc(state: &MacroState, gas: &GasModel, opts: &CeOptions) -> Result<[McEstimate; 5]> {
    if !matches!(opts.gram, GramMethod::MonteCarlo { .. }) {
        return Err(Error::InvalidParameter("transport_mc needs a Monte Carlo Gram method".into()));
    }
    let sol = solve_abc(state, gas, opts)?;
    let (t, ti) = (state.t_tr, state.t_int);
    let solve_with = |sys: &SectorSystem, m: &[f64], rhs: &DVector<f64>| -> Result<DVector<f64>> {
        let g = dirichlet_gram_matrix(m, sys.basis.len());
        g.cholesky()
            .map(|c| c.solve(rhs))
            .ok_or_else(|| Error::IllConditioned("jackknife Gram replica is not positive definite".into()))
    };
    let tens = sol.tensor.mc.as_ref().expect("Monte Carlo Gram");
    let vect = sol.vector.mc.as_ref().expect("Monte Carlo Gram");
    let mu = jackknife(tens, |m| Ok(solve_with(&sol.tensor, m, &sol.rhs_a)?.dot(&sol.rhs_a) / t))?;
    let pair = |left: &DVector<f64>, right: &DVector<f64>, scale: f64| {
        jackknife(vect, |m| Ok(scale * left.dot(&solve_with(&sol.vector, m, right)?)))
    };
    Ok([
        mu,
        pair(&sol.rhs_b, &sol.rhs_b, t)?,
        pair(&sol.rhs_b, &sol.rhs_c, t)?,
        pair(&sol.rhs_c, &sol.rhs_b, ti)?,
        pair(&sol.rhs_c, &sol.rhs_c, ti)?,
    ])
}

/// Relaxation coefficient F with (I, Q_s(M_r, M_r)) = F (T_tr - T_int).
pub fn relax_f(state: &MacroState, gas: &GasModel) -> Result<f64> {
    state.validate()?;
    Ok(f_scaled(relax_constant(gas), gas, state.rho, state.t_tr, state.t_int))
}

/// C in F = C rho^2 T_tr^(beta/2) T_int^alpha.
pub fn relax_constant(gas: &GasModel) -> f64 {
    let (d, a, b) = (gas.delta, gas.alpha, gas.beta);
    let ln_c = (b + 2.0) * 2f64.ln() + 0.5 * PI.ln() + ln_gamma(d + a + 1.0) + 2.0 * ln_gamma(d / 2.0)
        + ln_gamma((b + 5.0) / 2.0)
        - 2.0 * ln_gamma(d);
    ln_c.exp() / (d + a + (b + 3.0) / 2.0) * gas.c_r
}

fn f_scaled(c: f64, gas: &GasModel, rho: f64, t_tr: f64, t_int: f64) -> f64 {
    let tt = if gas.beta == 0.0 { 1.0 } else { t_tr.powf(gas.beta / 2.0) };
    let ti = if gas.alpha == 0.0 { 1.0 } else { t_int.powf(gas.alpha) };
    c * rho * rho * tt * ti
}

/// Result of the first-order relaxation correction.
#[derive(Debug, Clone, Serialize)]
pub struct RelaxK {
    pub value: f64,
    /// Largest |(D, M_r psi)| over the collision invariants psi, times T.
    pub kernel_residual: f64,
    /// Coefficients of the relaxation function on the scalar basis.
    pub coeffs: Vec<f64>,
    /// Whether the value was obtained by averaging across equal temperatures.
    pub central_difference: bool,
}

/// Outer quadrature size for projections of Q_s(M_r, M_r).
const QS_OUTER: usize = 40;
/// Relative temperature gap below which K is evaluated by central averaging.
const K_EQUAL_GAP: f64 = 1e-3;

/// First-order relaxation coefficient K = 2 (I, Q_s(M_r, M_r D~)) with
/// L_r D~ = D.
pub fn relax_k(state: &MacroState, gas: &GasModel, opts: &CeOptions) -> Result<RelaxK> {
    opts.validate()?;
    state.validate()?;
    let gap = (state.t_tr - state.t_int) / state.t_tr.max(state.t_int);
    if gap.abs() < K_EQUAL_GAP {
        let step = 2.0 * K_EQUAL_GAP * state.t_int;
        let lo = relax_k(&MacroState { t_int: state.t_int - step, ..*state }, gas, opts)?;
        let hi = relax_k(&MacroState { t_int: state.t_int + step, ..*state }, gas, opts)?;
        return Ok(RelaxK {
            value: 0.5 * (lo.value + hi.value),
            kernel_residual: lo.kernel_residual.max(hi.kernel_residual),
            coeffs: lo.coeffs.iter().zip(&hi.coeffs).map(|(a, b)| 0.5 * (a + b)).collect(),
            central_difference: true,
        });
    }
    relax_k_direct(state, gas, opts)
}

fn relax_k_direct(state: &MacroState, gas: &GasModel, opts: &CeOptions) -> Result<RelaxK> {
    let sys = SectorSystem::assemble(Sector::Scalar, state, gas, opts)?;
    let basis = &sys.basis;
    let (t, ti, rho) = (state.t_tr, state.t_int, state.rho);
    let h = gas.delta / 2.0;
    let f_dt = relax_f(state, gas)? * (t - ti);

    // Projections of Q_s(M_r, M_r) onto the retained modes and the invariants.
    let qs = QsPointwise::new(state, gas)?;
    let m = basis.len();
    let mut phis: Vec<Box<dyn Fn(f64, f64) -> f64>> = Vec::with_capacity(m + 3);
    for idx in 0..m {
        let b = basis.clone();
        phis.push(Box::new(move |c, i| {
            let mut v = vec![0.0; b.len()];
            b.radial_values(c, i, &mut v);
            v[idx]
        }));
    }
    let x_of = move |c: f64| c * c / (2.0 * t);
    phis.push(Box::new(|_, _| 1.0));
    phis.push(Box::new(move |c, _| 1.5 - x_of(c)));
    phis.push(Box::new(move |_, i| h - i / ti));
    let refs: Vec<&dyn Fn(f64, f64) -> f64> = phis.iter().map(|b| b.as_ref()).collect();
    let proj = qs.projections(&refs, QS_OUTER, 1e-8, f_dt.abs() / t.min(ti))?;
    let d = DVector::from_iterator(m, proj[..m].iter().map(|p| p / f_dt));

    // (D, M_r psi) on the invariants: D_1 contributes 0, -2 rho/(3 T_tr)... in
    // the unnormalised Laguerre modes 1, L_1^{1/2}(x), L_1^{h-1}(y).
    let d1 = [0.0, -(2.0 / (3.0 * t)) * 1.5, (1.0 / (h * ti)) * h];
    let kernel_residual = (0..3).map(|j| (d1[j] + proj[m + j] / f_dt).abs() * t.max(ti)).fold(0.0, f64::max);

    let x = sys.solve(&d);
    let k = relax_moments(basis, gas);
    let value = finite("relaxation correction", rho * rho * gas.standard_weight() * x.dot(&k))?;
    Ok(RelaxK { value, kernel_residual, coeffs: x.iter().cloned().collect(), central_difference: false })
}

/// E[(I+I*)^alpha |g|^beta phi_a(c, I) (Delta I + Delta I*)] over the standard collision
/// measure with pre-collision states from M_r / rho.
fn relax_moments(basis: &SpectralBasis, gas: &GasModel) -> DVector<f64> {
    let st = &basis.state;
    let (t, ti) = (st.t_tr, st.t_int);
    let h = gas.delta / 2.0;
    let (ra, rb) = gas.r_cap_shape();
    let r_mean = ra / (ra + rb);
    let n_c = basis.n_c;
    let n_i = basis.n_i;
    // Velocity: E[|g|^beta L_k(x)] and E[|g|^beta L_k(x) |g|^2/4].
    let deg = 4 * n_c + 4;
    let ru = GaussRule::laguerre(deg / 4 + 2, 0.0);
    let rz = GaussRule::hermite_normal(deg / 2 + 2);
    let rt = GaussRule::laguerre(deg / 4 + 2, (1.0 + gas.beta) / 2.0);
    let t_pref = 2.0 / PI.sqrt() * (4.0 * t).powf(gas.beta / 2.0);
    let mut ev0 = vec![0.0; n_c];
    let mut ev2 = vec![0.0; n_c];
    let mut r = vec![0.0; n_c];
    for (u, wu) in ru.iter() {
        for (z, wz) in rz.iter() {
            for (tt, wt) in rt.iter() {
                let gm = (4.0 * t * tt).sqrt();
                let c = Vec3::new((t * u).sqrt(), 0.0, (t / 2.0).sqrt() * z + gm / 2.0);
                laguerre_values(0.5, c.norm_squared() / (2.0 * t), &mut r);
                let w = wu * wz * wt * t_pref;
                for k in 0..n_c {
                    ev0[k] += w * r[k];
                    ev2[k] += w * r[k] * gm * gm / 4.0;
                }
            }
        }
    }
    // Internal: E[s^alpha L_n(y)] and E[s^{alpha+1} L_n(y)].
    let rs = GaussRule::laguerre(n_i + 3, gas.delta - 1.0 + gas.alpha);
    let scale = ti.powf(gas.alpha) / ln_gamma(gas.delta).exp();
    let rr = GaussRule::jacobi01(n_i + 2, h - 1.0, h - 1.0).normalized();
    let mut ei0 = vec![0.0; n_i];
    let mut ei1 = vec![0.0; n_i];
    let mut q = vec![0.0; n_i];
    for (s, ws) in rs.iter() {
        for (rv, wr) in rr.iter() {
            laguerre_values(h - 1.0, s * rv, &mut q);
            let w = ws * wr * scale;
            for n in 0..n_i {
                ei0[n] += w * q[n];
                ei1[n] += w * q[n] * s * ti;
            }
        }
    }
    DVector::from_iterator(
        basis.len(),
        basis.modes.iter().zip(&basis.norm2).map(|(&(k, n), nn)| {
            ((1.0 - r_mean) * ev2[k] * ei0[n] - r_mean * ev0[k] * ei1[n]) / nn.sqrt()
        }),
    )
}

/// Monte Carlo estimate of K = 2 (I, Q_s(M_r, M_r D~)) from a solved D~.
pub fn relax_k_mc(state: &MacroState, gas: &GasModel, opts: &CeOptions, k: &RelaxK, n: u64, seed: u64) -> Result<McEstimate> {
    let basis = SpectralBasis::new(Sector::Scalar, opts.n_c, opts.n_i, state, gas.delta)?;
    let psi = basis.expansion(&DVector::from_vec(k.coeffs.clone()), "D~");
    Ok(crate::collision::weak_qs_linear_mc(state, &psi, &TestFunction::internal_energy(), gas, n, seed)?.scaled(2.0))
}

/// Scaling exponents in temperature: Lambda(rho, s T_tr, s T_int) = s^p Lambda.
pub fn viscosity_exponent(gas: &GasModel) -> f64 {
    1.0 - gas.alpha - gas.beta / 2.0
}

pub fn conduction_exponent(gas: &GasModel) -> f64 {
    2.0 - gas.alpha - gas.beta / 2.0
}

/// Closed forms for alpha = beta = 0, where every Chapman-Enskog function is a
/// single eigenfunction of the linearized operator.
pub fn maxwell_coefficients(state: &MacroState, gas: &GasModel) -> Result<TransportCoefficients> {
    if gas.alpha != 0.0 || gas.beta != 0.0 {
        return Err(Error::InvalidParameter("closed-form coefficients need alpha = beta = 0".into()));
    }
    let h = gas.delta / 2.0;
    let k0 = gas.c_r * (2.0 * ln_gamma(h) - ln_gamma(gas.delta)).exp();
    let (t, ti) = (state.t_tr, state.t_int);
    Ok(TransportCoefficients {
        lambda_mu: t / (2.0 * PI * k0),
        lambda_tr_tr: 15.0 * t * t / (8.0 * PI * k0),
        lambda_tr_int: 0.0,
        lambda_int_tr: 0.0,
        lambda_int_int: gas.delta * t * ti / (4.0 * PI * k0),
        f_relax: relax_f(state, gas)?,
        k_relax: Some(0.0),
    })
}

/// Eigenvalue of L_r on c_x (I/T_int - delta/2) for alpha = beta = 0.
pub fn maxwell_internal_eigenvalue(state: &MacroState, gas: &GasModel) -> f64 {
    let h = gas.delta / 2.0;
    2.0 * PI * state.rho * (2.0 * ln_gamma(h) - ln_gamma(gas.delta)).exp() * gas.c_r
}

/// Where the fluid solver gets its coefficients from.
#[derive(Debug, Clone)]
pub enum CoefficientProvider {
    /// Closed forms, alpha = beta = 0 only. Build with [`CoefficientProvider::analytic`].
    Analytic { gas: GasModel, c_f: f64, k0: f64 },
    /// Interpolated in the temperature ratio and rescaled.
    Tabulated(CoefficientTable),
    /// Fresh Galerkin solve at every query.
    Live { gas: GasModel, opts: CeOptions, with_k: bool },
}

/// Coefficients at one local state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalCoefficients {
    pub lambda_mu: f64,
    pub lambda_tr_tr: f64,
    pub lambda_tr_int: f64,
    pub lambda_int_tr: f64,
    pub lambda_int_int: f64,
    pub f_relax: f64,
    pub k_relax: f64,
}

impl From<TransportCoefficients> for LocalCoefficients {
    fn from(t: TransportCoefficients) -> Self {
        LocalCoefficients {
            lambda_mu: t.lambda_mu,
            lambda_tr_tr: t.lambda_tr_tr,
            lambda_tr_int: t.lambda_tr_int,
            lambda_int_tr: t.lambda_int_tr,
            lambda_int_int: t.lambda_int_int,
            f_relax: t.f_relax,
            k_relax: t.k_relax.unwrap_or(0.0),
        }
    }
}

/// Coefficients evaluated at (rho = 1, T_int = 1, T_tr = ratio) on a
/// log-uniform grid of ratios. The coefficients do not depend on rho and are
/// homogeneous in temperature, so one ratio axis covers every state.
#[derive(Debug, Clone, Serialize)]
pub struct CoefficientTable {
    pub gas: GasModel,
    pub c_f: f64,
    pub log_ratio: Vec<f64>,
    /// Rows of [lambda_mu, lambda_tr_tr, lambda_tr_int, lambda_int_tr, lambda_int_int, k_relax].
    pub values: Vec<[f64; 6]>,
}

impl CoefficientTable {
    pub fn build(gas: &GasModel, opts: &CeOptions, ratio_min: f64, ratio_max: f64, points: usize, with_k: bool) -> Result<Self> {
        if !(ratio_min > 0.0 && ratio_max > ratio_min && points >= 4) {
            return Err(Error::InvalidParameter(format!("bad table range [{ratio_min}, {ratio_max}] with {points} points")));
        }
        let (l0, l1) = (ratio_min.ln(), ratio_max.ln());
        let mut log_ratio = Vec::with_capacity(points);
        let mut values = Vec::with_capacity(points);
        for j in 0..points {
            let l = l0 + (l1 - l0) * j as f64 / (points - 1) as f64;
            let st = MacroState::at_rest(1.0, l.exp(), 1.0)?;
            let tc = transport_coeffs(&solve_abc(&st, gas, opts)?)?;
            let k = if with_k { relax_k(&st, gas, opts)?.value } else { 0.0 };
            log_ratio.push(l);
            values.push([tc.lambda_mu, tc.lambda_tr_tr, tc.lambda_tr_int, tc.lambda_int_tr, tc.lambda_int_int, k]);
        }
        Ok(CoefficientTable { gas: *gas, c_f: relax_constant(gas), log_ratio, values })
    }

    /// Catmull-Rom interpolation on the uniform log-ratio grid.
    fn interpolate(&self, l: f64) -> Result<[f64; 6]> {
        let n = self.log_ratio.len();
        let (l0, l1) = (self.log_ratio[0], self.log_ratio[n - 1]);
        let tol = 1e-12 * (l1 - l0);
        if l < l0 - tol || l > l1 + tol {
            return Err(Error::Domain(format!(
                "temperature ratio {:.6} outside the table range [{:.6}, {:.6}]",
                l.exp(),
                l0.exp(),
                l1.exp()
            )));
        }
        let hstep = (l1 - l0) / (n - 1) as f64;
        let s = ((l - l0) / hstep).clamp(0.0, (n - 1) as f64);
        let j = (s.floor() as usize).min(n - 2);
        let u = s - j as f64;
        let at = |k: isize| -> [f64; 6] {
            let k = k.clamp(0, n as isize - 1) as usize;
            self.values[k]
        };
        let (p0, p1, p2, p3) = (at(j as isize - 1), at(j as isize), at(j as isize + 1), at(j as isize + 2));
        let mut out = [0.0; 6];
        for m in 0..6 {
            // One-sided slopes at the table ends.
            let m1 = if j == 0 { p2[m] - p1[m] } else { 0.5 * (p2[m] - p0[m]) };
            let m2 = if j + 2 >= n { p2[m] - p1[m] } else { 0.5 * (p3[m] - p1[m]) };
            let (u2, u3) = (u * u, u * u * u);
            out[m] = (2.0 * u3 - 3.0 * u2 + 1.0) * p1[m] + (u3 - 2.0 * u2 + u) * m1 + (-2.0 * u3 + 3.0 * u2) * p2[m] + (u3 - u2) * m2;
        }
        Ok(out)
    }
}

impl CoefficientProvider {
    pub fn gas(&self) -> &GasModel {
        match self {
            CoefficientProvider::Analytic { gas, .. } | CoefficientProvider::Live { gas, .. } => gas,
            CoefficientProvider::Tabulated(t) => &t.gas,
        }
    }

    pub fn analytic(gas: &GasModel) -> Result<Self> {
        if gas.alpha != 0.0 || gas.beta != 0.0 {
            return Err(Error::InvalidParameter("analytic coefficients need alpha = beta = 0".into()));
        }
        let k0 = gas.c_r * (2.0 * ln_gamma(gas.delta / 2.0) - ln_gamma(gas.delta)).exp();
        Ok(CoefficientProvider::Analytic { gas: *gas, c_f: relax_constant(gas), k0 })
    }

    pub fn at(&self, rho: f64, t_tr: f64, t_int: f64) -> Result<LocalCoefficients> {
        if !(rho > 0.0 && t_tr > 0.0 && t_int > 0.0) {
            return Err(Error::Domain(format!("coefficients need a positive state, got rho = {rho}, T_tr = {t_tr}, T_int = {t_int}")));
        }
        match self {
            CoefficientProvider::Analytic { gas, c_f, k0 } => Ok(LocalCoefficients {
                lambda_mu: t_tr / (2.0 * PI * k0),
                lambda_tr_tr: 15.0 * t_tr * t_tr / (8.0 * PI * k0),
                lambda_tr_int: 0.0,
                lambda_int_tr: 0.0,
                lambda_int_int: gas.delta * t_tr * t_int / (4.0 * PI * k0),
                f_relax: f_scaled(*c_f, gas, rho, t_tr, t_int),
                k_relax: 0.0,
            }),
            CoefficientProvider::Live { gas, opts, with_k } => {
                let st = MacroState::at_rest(rho, t_tr, t_int)?;
                let mut tc = transport_coeffs(&solve_abc(&st, gas, opts)?)?;
                if *with_k {
                    tc.k_relax = Some(relax_k(&st, gas, opts)?.value);
                }
                Ok(tc.into())
            }
            CoefficientProvider::Tabulated(table) => {
                let gas = &table.gas;
                let v = table.interpolate((t_tr / t_int).ln())?;
                let pv = t_int.powf(viscosity_exponent(gas));
                let pc = t_int.powf(conduction_exponent(gas));
                Ok(LocalCoefficients {
                    lambda_mu: v[0] * pv,
                    lambda_tr_tr: v[1] * pc,
                    lambda_tr_int: v[2] * pc,
                    lambda_int_tr: v[3] * pc,
                    lambda_int_int: v[4] * pc,
                    f_relax: f_scaled(table.c_f, gas, rho, t_tr, t_int),
                    k_relax: v[5],
                })
            }
        }
    }
}

/// T_tr T_int / |T_tr - T_int| and the sign of T_tr - T_int.
pub fn zeta_eta(state: &MacroState) -> (f64, f64) {
    exchange_scale(state.t_tr, state.t_int)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st() -> MacroState {
        MacroState::at_rest(1.3, 2.0, 1.0).unwrap()
    }

    #[test]
    fn basis_is_orthonormal() {
        let s = MacroState::at_rest(1.0, 1.7, 0.6).unwrap();
        for sector in [Sector::Tensor, Sector::Vector, Sector::Scalar] {
            let b = SpectralBasis::new(sector, 5, 3, &s, 3.0).unwrap();
            let rz = GaussRule::hermite_normal(16);
            let ry = GaussRule::laguerre(12, 0.5).normalized();
            let m = b.len();
            let mut gram = DMatrix::<f64>::zeros(m, m);
            let mut v = vec![0.0; m];
            for (x, wx) in rz.iter() {
                for (y, wy) in rz.iter() {
                    for (z, wz) in rz.iter() {
                        let c = Vec3::new(x, y, z) * s.t_tr.sqrt();
                        for (e, we) in ry.iter() {
                            let i = e * s.t_int;
                            for a in 0..m {
                                v[a] = b.eval(a, &c, i);
                            }
                            let w = wx * wy * wz * we;
                            for a in 0..m {
                                for bb in 0..m {
                                    gram[(a, bb)] += w * v[a] * v[bb];
                                }
                            }
                        }
                    }
                }
            }
            let err = (&gram - DMatrix::identity(m, m)).amax();
            assert!(err < 1e-10, "{sector:?}: {err}");
        }
    }

    #[test]
    fn exact_gram_matches_monte_carlo() {
        let s = st();
        let gas = GasModel::new(3.0, 0.5, 0.5, 1.0, 0.0).unwrap();
        for sector in [Sector::Tensor, Sector::Vector, Sector::Scalar] {
            let b = SpectralBasis::new(sector, 3, 2, &s, gas.delta).unwrap();
            let g = exact_gram(&b, &gas);
            let est = dirichlet_gram_mc(&s, &b.test_functions(), &gas, 400_000, 5).unwrap();
            let mc = dirichlet_gram_matrix(&est.mean, b.len());
            let se = dirichlet_gram_matrix(&est.std_error, b.len());
            for a in 0..b.len() {
                for c in 0..b.len() {
                    let z = (g[(a, c)] - mc[(a, c)]).abs() / se[(a, c)];
                    assert!(z < 4.5, "{sector:?} ({a},{c}): exact {} mc {} se {}", g[(a, c)], mc[(a, c)], se[(a, c)]);
                }
            }
        }
    }

    #[test]
    fn maxwell_closed_forms_recovered() {
        let s = st();
        let gas = GasModel::new(2.0, 0.0, 0.0, 0.7, 0.0).unwrap();
        let sol = solve_abc(&s, &gas, &CeOptions::default()).unwrap();
        let tc = transport_coeffs(&sol).unwrap();
        let cf = maxwell_coefficients(&s, &gas).unwrap();
        for (a, b) in [
            (tc.lambda_mu, cf.lambda_mu),
            (tc.lambda_tr_tr, cf.lambda_tr_tr),
            (tc.lambda_int_int, cf.lambda_int_int),
        ] {
            assert!((a / b - 1.0).abs() < 1e-10, "{a} vs {b}");
        }
        assert!(tc.lambda_tr_int.abs() < 1e-12 && tc.lambda_int_tr.abs() < 1e-12);
    }

    #[test]
    fn quadrature_and_projection_routes_agree() {
        let s = MacroState::at_rest(0.8, 1.4, 0.9).unwrap();
        let gas = GasModel::new(3.0, 0.5, 1.0, 1.0, 0.0).unwrap();
        let sol = solve_abc(&s, &gas, &CeOptions::default()).unwrap();
        let tc = transport_coeffs(&sol).unwrap();
        let p = transport_from_projections(&sol);
        let q = [tc.lambda_mu, tc.lambda_tr_tr, tc.lambda_tr_int, tc.lambda_int_tr, tc.lambda_int_int];
        for (a, b) in q.iter().zip(&p) {
            assert!((a - b).abs() < 1e-10 * a.abs().max(1e-3), "{q:?} vs {p:?}");
        }
        // Onsager reciprocity.
        assert!((tc.lambda_tr_int / s.t_tr - tc.lambda_int_tr / s.t_int).abs() < 1e-10 * tc.lambda_tr_int.abs());
        let (rb, rc) = sol.constraint_residuals();
        assert!(rb.abs() < 1e-10 && rc.abs() < 1e-10);
        assert!(sol.gram_residual < 1e-12);
    }

    #[test]
    fn relax_f_hand_value() {
        let s = MacroState::at_rest(1.0, 2.0, 1.0).unwrap();
        let gas = GasModel::new(2.0, 0.0, 0.0, 1.0, 1.0).unwrap();
        assert!((relax_f(&s, &gas).unwrap() - 12.0 * PI / 7.0).abs() < 1e-12);
        let s2 = MacroState { rho: 2.0, ..s };
        assert_eq!(relax_f(&s2, &gas).unwrap(), 4.0 * relax_f(&s, &gas).unwrap());
    }

    #[test]
    fn relaxation_source_is_orthogonal_to_invariants() {
        let s = MacroState::at_rest(1.0, 1.5, 1.0).unwrap();
        let gas = GasModel::new(2.0, 0.5, 1.0, 1.0, 1.0).unwrap();
        let k = relax_k(&s, &gas, &CeOptions::default()).unwrap();
        assert!(k.kernel_residual < 1e-8, "{k:?}");
        assert!(k.value.is_finite());
    }

    #[test]
    fn maxwell_relaxation_correction_vanishes() {
        // alpha = beta = 0: Q_s(M_r, M_r) / M_r is a combination of invariant-free
        // modes whose image under the correction integral cancels.
        let s = MacroState::at_rest(1.0, 1.5, 1.0).unwrap();
        let gas = GasModel::new(2.0, 0.0, 0.0, 1.0, 1.0).unwrap();
        let k = relax_k(&s, &gas, &CeOptions::default()).unwrap();
        assert!(k.kernel_residual < 1e-8);
        assert!(k.value.abs() < 1e-8, "{k:?}");
    }

    #[test]
    fn relax_k_matches_monte_carlo() {
        let s = MacroState::at_rest(1.0, 1.5, 1.0).unwrap();
        let gas = GasModel::new(2.0, 0.5, 1.0, 1.0, 1.0).unwrap();
        let opts = CeOptions::default();
        let k = relax_k(&s, &gas, &opts).unwrap();
        let mc = relax_k_mc(&s, &gas, &opts, &k, 400_000, 11).unwrap();
        assert!(mc.within(k.value, 4.0), "quadrature {} vs {mc:?}", k.value);
    }

    #[test]
    fn alpha_zero_decouples() {
        let s = MacroState::at_rest(1.0, 2.0, 1.0).unwrap();
        let gas = GasModel::new(3.0, 0.0, 1.0, 1.0, 0.0).unwrap();
        let sol = solve_abc(&s, &gas, &CeOptions::default()).unwrap();
        let tc = transport_coeffs(&sol).unwrap();
        assert!(tc.lambda_tr_int.abs() < 1e-12 * tc.lambda_tr_tr && tc.lambda_int_tr.abs() < 1e-12 * tc.lambda_tr_tr);
        for (coeffs, basis) in [(&sol.coeff_a, &sol.tensor.basis), (&sol.coeff_b, &sol.vector.basis)] {
            for (x, &(_, n)) in coeffs.iter().zip(basis.modes()) {
                if n > 0 {
                    assert!(x.abs() < 1e-12 * coeffs.amax(), "{x}");
                }
            }
        }
        // C factorizes into (y - h) times a function of |c|.
        for (x, &(_, n)) in sol.coeff_c.iter().zip(sol.vector.basis.modes()) {
            if n != 1 {
                assert!(x.abs() < 1e-12 * sol.coeff_c.amax(), "{x}");
            }
        }
    }

    #[test]
    fn heat_and_viscosity_positive() {
        for delta in [2.0, 3.0, 5.0] {
            for ratio in [0.5, 1.0, 2.0] {
                let s = MacroState::at_rest(1.0, ratio, 1.0).unwrap();
                let gas = GasModel::new(delta, 0.5, 0.5, 1.0, 0.0).unwrap();
                let tc = transport_coeffs(&solve_abc(&s, &gas, &CeOptions::default()).unwrap()).unwrap();
                assert!(tc.lambda_mu > 0.0 && tc.lambda_tr_tr > 0.0 && tc.lambda_int_int > 0.0, "{tc:?}");
            }
        }
    }

    #[test]
    fn coefficients_scale_with_temperature_not_density() {
        let gas = GasModel::new(3.0, 0.5, 1.0, 1.0, 0.0).unwrap();
        let opts = CeOptions { n_c: 5, n_i: 3, ..Default::default() };
        let base = transport_coeffs(&solve_abc(&MacroState::at_rest(1.0, 1.5, 1.0).unwrap(), &gas, &opts).unwrap()).unwrap();
        let dense = transport_coeffs(&solve_abc(&MacroState::at_rest(3.0, 1.5, 1.0).unwrap(), &gas, &opts).unwrap()).unwrap();
        let hot = transport_coeffs(&solve_abc(&MacroState::at_rest(1.0, 3.0, 2.0).unwrap(), &gas, &opts).unwrap()).unwrap();
        assert!((dense.lambda_mu / base.lambda_mu - 1.0).abs() < 1e-10);
        assert!((dense.lambda_int_int / base.lambda_int_int - 1.0).abs() < 1e-10);
        assert!((hot.lambda_mu / base.lambda_mu - 2f64.powf(viscosity_exponent(&gas))).abs() < 1e-10);
        assert!((hot.lambda_tr_int / base.lambda_tr_int - 2f64.powf(conduction_exponent(&gas))).abs() < 1e-9);
    }

    #[test]
    fn table_tracks_live_solve() {
        let gas = GasModel::new(2.0, 0.0, 1.0, 1.0, 1.0).unwrap();
        let opts = CeOptions { n_c: 5, n_i: 3, ..Default::default() };
        let table = CoefficientTable::build(&gas, &opts, 0.5, 2.0, 9, false).unwrap();
        let tab = CoefficientProvider::Tabulated(table);
        let live = CoefficientProvider::Live { gas, opts, with_k: false };
        for (rho, t, ti) in [(0.7, 1.3, 0.9), (2.0, 0.8, 1.1), (1.0, 3.0, 2.5)] {
            let a = tab.at(rho, t, ti).unwrap();
            let b = live.at(rho, t, ti).unwrap();
            assert!((a.lambda_mu / b.lambda_mu - 1.0).abs() < 1e-2);
            assert!((a.lambda_tr_tr / b.lambda_tr_tr - 1.0).abs() < 1e-2);
            assert!((a.lambda_int_int / b.lambda_int_int - 1.0).abs() < 1e-2);
            assert!((a.f_relax / b.f_relax - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn doubling_the_basis_moves_little() {
        let s = MacroState::at_rest(1.0, 2.0, 1.0).unwrap();
        let gas = GasModel::new(2.0, 0.0, 1.0, 1.0, 1.0).unwrap();
        let small = CeOptions { n_c: 6, n_i: 3, ..Default::default() };
        let large = CeOptions { n_c: 12, n_i: 6, ..Default::default() };
        let a = transport_coeffs(&solve_abc(&s, &gas, &small).unwrap()).unwrap();
        let b = transport_coeffs(&solve_abc(&s, &gas, &large).unwrap()).unwrap();
        for (x, y) in [(a.lambda_mu, b.lambda_mu), (a.lambda_tr_tr, b.lambda_tr_tr), (a.lambda_int_int, b.lambda_int_int)] {
            assert!((x / y - 1.0).abs() < 1e-2, "{x} vs {y}");
        }
        let ka = relax_k(&s, &gas, &small).unwrap().value;
        let kb = relax_k(&s, &gas, &large).unwrap().value;
        assert!((ka / kb - 1.0).abs() < 1e-2, "{ka} vs {kb}");
    }
}
