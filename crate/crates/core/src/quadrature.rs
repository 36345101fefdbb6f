//! Gauss rules built with the Golub-Welsch eigenvalue method, an adaptive
//! Gauss-Kronrod integrator and Laguerre polynomial helpers.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Nodes and weights of a Gauss rule.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn golub_welsch(diag: &[f64], off: &[f64], mu0: f64) -> GaussRule {
    let n = diag.len();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        m[(k, k)] = diag[k];
        if k + 1 < n {
            m[(k, k + 1)] = off[k];
            m[(k + 1, k)] = off[k];
        }
    }
    let eig = SymmetricEigen::new(m);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], mu0 * eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    GaussRule { nodes: pairs.iter().map(|p| p.0).collect(), weights: pairs.iter().map(|p| p.1).collect() }
}

impl GaussRule {
    /// Gauss-Legendre on [-1, 1].
    pub fn legendre(n: usize) -> Self {
        assert!(n > 0);
        let off: Vec<f64> = (1..n).map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        }).collect();
        let mut rule = golub_welsch(&vec![0.0; n], &off, 2.0);
        symmetrize(&mut rule);
        rule
    }

    /// Generalised Gauss-Laguerre for the weight x^a e^{-x} on [0, inf).
    pub fn laguerre(n: usize, a: f64) -> Self {
        assert!(n > 0 && a > -1.0);
        let diag: Vec<f64> = (0..n).map(|k| 2.0 * k as f64 + a + 1.0).collect();
        let off: Vec<f64> = (1..n).map(|k| (k as f64 * (k as f64 + a)).sqrt()).collect();
        let mut rule = golub_welsch(&diag, &off, ln_gamma(a + 1.0).exp());
        // Newton polish of the nodes and weights from the three-term recurrence.
        let nf = n as f64;
        let mut v = vec![0.0; n + 2];
        let lnc = ln_gamma(nf + a + 1.0) - ln_gamma(nf + 1.0);
        for k in 0..n {
            let mut x = rule.nodes[k];
            for _ in 0..3 {
                laguerre_values(a, x, &mut v[..n + 1]);
                let d = (nf * v[n] - (nf + a) * v[n - 1]) / x;
                x -= v[n] / d;
            }
            laguerre_values(a, x, &mut v);
            rule.nodes[k] = x;
            rule.weights[k] = (lnc + x.ln() - 2.0 * ((nf + 1.0) * v[n + 1].abs()).ln()).exp();
        }
        rule
    }

    /// Gauss-Hermite for the standard normal density: sum w f(x) = E[f(Z)].
    pub fn hermite_normal(n: usize) -> Self {
        assert!(n > 0);
        let off: Vec<f64> = (1..n).map(|k| (k as f64).sqrt()).collect();
        let mut rule = golub_welsch(&vec![0.0; n], &off, 1.0);
        let lnf = ln_gamma(n as f64 + 1.0);
        for k in 0..n {
            let mut x = rule.nodes[k];
            for _ in 0..3 {
                let (h, hm) = hermite_pair(n, x);
                x -= h / (n as f64 * hm);
            }
            let (_, hm) = hermite_pair(n, x);
            rule.nodes[k] = x;
            rule.weights[k] = (lnf - 2.0 * (n as f64 * hm.abs()).ln()).exp();
        }
        symmetrize(&mut rule);
        rule
    }

    /// Gauss-Jacobi for the weight t^a (1-t)^b on [0, 1].
    pub fn jacobi01(n: usize, a: f64, b: f64) -> Self {
        assert!(n > 0 && a > -1.0 && b > -1.0);
        // Jacobi on [-1, 1] with weight (1-x)^al (1+x)^be, t = (1+x)/2.
        let (al, be) = (b, a);
        let s = al + be;
        let diag: Vec<f64> = (0..n)
            .map(|k| {
                if k == 0 {
                    (be - al) / (s + 2.0)
                } else {
                    let d = 2.0 * k as f64 + s;
                    (be * be - al * al) / (d * (d + 2.0))
                }
            })
            .collect();
        let off: Vec<f64> = (1..n)
            .map(|k| {
                let k = k as f64;
                let d = 2.0 * k + s;
                (4.0 * k * (k + al) * (k + be) * (k + s) / (d * d * (d + 1.0) * (d - 1.0))).sqrt()
            })
            .collect();
        let mu0 = ((s + 1.0) * 2f64.ln() + ln_gamma(al + 1.0) + ln_gamma(be + 1.0) - ln_gamma(s + 2.0)).exp();
        let r = golub_welsch(&diag, &off, mu0);
        let scale = 0.5f64.powf(s + 1.0);
        GaussRule {
            nodes: r.nodes.iter().map(|x| 0.5 * (1.0 + x)).collect(),
            weights: r.weights.iter().map(|w| w * scale).collect(),
        }
    }

    /// Same rule with weights divided by their sum, turning the rule into an
    /// expectation over the normalised weight.
    /// Unweighted rule for int_0^inf F(y) dy when F is smooth on (0, inf),
    /// decays like e^{-y} and may carry a non-analytic power at 0: Gauss-Legendre
    /// panels graded geometrically towards 0 on [0, 1], Gauss-Laguerre beyond.
    pub fn graded_half_line(n_panel: usize, levels: usize, ratio: f64, n_tail: usize) -> Self {
        let gl = Self::legendre(n_panel);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut edges: Vec<f64> = (0..=levels).map(|k| ratio.powi((levels - k) as i32)).collect();
        edges.insert(0, 0.0);
        for w in edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            for (x, wt) in gl.iter() {
                nodes.push(a + (b - a) * 0.5 * (x + 1.0));
                weights.push(wt * (b - a) * 0.5);
            }
        }
        let tail = Self::laguerre(n_tail, 0.0);
        for (t, wt) in tail.iter() {
            nodes.push(1.0 + t);
            weights.push(wt * t.exp());
        }
        GaussRule { nodes, weights }
    }

    pub fn normalized(mut self) -> Self {
        let s: f64 = self.weights.iter().sum();
        self.weights.iter_mut().for_each(|w| *w /= s);
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

/// (He_n(x), He_{n-1}(x)) for the probabilists' Hermite polynomials.
fn hermite_pair(n: usize, x: f64) -> (f64, f64) {
    let (mut prev, mut cur) = (0.0, 1.0);
    for k in 0..n {
        let next = x * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

fn symmetrize(rule: &mut GaussRule) {
    let n = rule.len();
    for k in 0..n / 2 {
        let x = 0.5 * (rule.nodes[n - 1 - k] - rule.nodes[k]);
        let w = 0.5 * (rule.weights[n - 1 - k] + rule.weights[k]);
        rule.nodes[k] = -x;
        rule.nodes[n - 1 - k] = x;
        rule.weights[k] = w;
        rule.weights[n - 1 - k] = w;
    }
    if n % 2 == 1 {
        rule.nodes[n / 2] = 0.0;
    }
}

/// Product rule on the unit sphere: Gauss-Legendre in the polar cosine and
/// equally spaced azimuths. Weights sum to one (an average over directions).
/// Exact for polynomials of total degree below min(2 n_z, n_phi).
#[derive(Debug, Clone)]
pub struct SphereRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    pub fn product(n_z: usize, n_phi: usize) -> Self {
        let gl = GaussRule::legendre(n_z);
        let mut points = Vec::with_capacity(n_z * n_phi);
        let mut weights = Vec::with_capacity(n_z * n_phi);
        for (z, wz) in gl.iter() {
            let rho = (1.0 - z * z).max(0.0).sqrt();
            for k in 0..n_phi {
                let phi = 2.0 * PI * (k as f64 + 0.5) / n_phi as f64;
                points.push([rho * phi.cos(), rho * phi.sin(), z]);
                weights.push(0.5 * wz / n_phi as f64);
            }
        }
        SphereRule { points, weights }
    }

    /// Smallest product rule exact for polynomials of total degree `deg`.
    pub fn for_degree(deg: usize) -> Self {
        SphereRule::product(deg / 2 + 1, deg + 1)
    }
}

/// Values L_0^{(a)}(x) .. L_{n-1}^{(a)}(x) written into `out`.
pub fn laguerre_values(a: f64, x: f64, out: &mut [f64]) {
    let n = out.len();
    if n == 0 {
        return;
    }
    out[0] = 1.0;
    if n == 1 {
        return;
    }
    out[1] = 1.0 + a - x;
    for k in 1..n - 1 {
        let kf = k as f64;
        out[k + 1] = ((2.0 * kf + 1.0 + a - x) * out[k] - (kf + a) * out[k - 1]) / (kf + 1.0);
    }
}

/// Squared norm of L_k^{(a)} under the normalised Gamma(a+1) weight.
pub fn laguerre_norm2(k: usize, a: f64) -> f64 {
    (ln_gamma(k as f64 + a + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma(a + 1.0)).exp()
}

// Gauss-Kronrod 7/15 nodes and weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Segment {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Segment {
    fn cmp(&self, o: &Self) -> Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Tolerances of the adaptive integrator.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    pub max_segments: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { rel: 1e-10, abs: 0.0, max_segments: 400 }
    }
}

/// Globally adaptive Gauss-Kronrod 7/15 on [a, b].
/// Returns the value and the error estimate.
pub fn integrate_gk<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Result<(f64, f64)> {
    let (v, e) = gk15(&mut f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value: v, err: e });
    let (mut total, mut err) = (v, e);
    let mut n = 1;
    loop {
        if !total.is_finite() {
            return Err(Error::NonFinite(format!("integrand on [{a}, {b}]")));
        }
        if err <= tol.abs.max(tol.rel * total.abs()) {
            return Ok((total, err));
        }
        if n >= tol.max_segments {
            return Err(Error::Quadrature(format!(
                "adaptive Gauss-Kronrod on [{a}, {b}]: error {err:.3e} for value {total:.6e} after {n} segments"
            )));
        }
        let s = heap.pop().expect("non-empty heap");
        let m = 0.5 * (s.a + s.b);
        let (v1, e1) = gk15(&mut f, s.a, m);
        let (v2, e2) = gk15(&mut f, m, s.b);
        total += v1 + v2 - s.value;
        err += e1 + e2 - s.err;
        heap.push(Segment { a: s.a, b: m, value: v1, err: e1 });
        heap.push(Segment { a: m, b: s.b, value: v2, err: e2 });
        n += 1;
        if err < 0.0 {
            err = heap.iter().map(|s| s.err).sum();
        }
    }
}

/// Integral over [a, inf) through x = a + t / (1 - t).
pub fn integrate_gk_semi_infinite<F: FnMut(f64) -> f64>(mut f: F, a: f64, tol: Tolerance) -> Result<(f64, f64)> {
    integrate_gk(
        |t| {
            let u = 1.0 - t;
            let v = f(a + t / u);
            if v == 0.0 {
                0.0
            } else {
                v / (u * u)
            }
        },
        0.0,
        1.0,
        tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::gamma::gamma;

    #[test]
    fn laguerre_64_integrates_gamma_moments() {
        for a in [0.0, 0.5, 1.5, 2.5] {
            let r = GaussRule::laguerre(64, a);
            for k in 0..20 {
                let exact = gamma(a + 1.0 + k as f64);
                let v = r.integrate(|x| x.powi(k));
                assert!((v / exact - 1.0).abs() < 1e-12, "a={a} k={k} {v} {exact}");
            }
        }
    }

    #[test]
    fn hermite_64_gives_normal_moments() {
        let r = GaussRule::hermite_normal(64);
        let mut dfact = 1.0;
        for k in 0..15 {
            let v = r.integrate(|x| x.powi(2 * k));
            assert!((v / dfact - 1.0).abs() < 1e-11, "k={k}");
            assert!(r.integrate(|x| x.powi(2 * k + 1)).abs() < 1e-9 * dfact);
            dfact *= (2 * k + 1) as f64;
        }
    }

    #[test]
    fn jacobi_integrates_beta_moments() {
        for (a, b, n) in [(1.0, 3.0, 7), (0.5, 2.0, 8), (0.75, 1.5, 5)] {
            let r = GaussRule::jacobi01(n, a, b);
            for k in 0..(2 * n) {
                let exact = (ln_gamma(a + 1.0 + k as f64) + ln_gamma(b + 1.0) - ln_gamma(a + b + 2.0 + k as f64)).exp();
                let v = r.integrate(|t| t.powi(k as i32));
                assert!((v / exact - 1.0).abs() < 1e-12, "a={a} b={b} k={k}");
            }
        }
    }

    #[test]
    fn sphere_rule_moments() {
        let s = SphereRule::for_degree(8);
        let avg = |f: &dyn Fn(&[f64; 3]) -> f64| -> f64 { s.points.iter().zip(&s.weights).map(|(p, w)| w * f(p)).sum() };
        assert!((avg(&|p| p[0] * p[0]) - 1.0 / 3.0).abs() < 1e-14);
        assert!((avg(&|p| p[0].powi(2) * p[1].powi(2)) - 1.0 / 15.0).abs() < 1e-14);
        assert!((avg(&|p| p[2].powi(8)) - 1.0 / 9.0).abs() < 1e-14);
        assert!(avg(&|p| p[0] * p[1].powi(2)).abs() < 1e-15);
    }

    #[test]
    fn laguerre_orthogonality() {
        let a = 1.5;
        let r = GaussRule::laguerre(20, a).normalized();
        let mut v = vec![0.0; 6];
        let mut g = [[0.0; 6]; 6];
        for (x, w) in r.iter() {
            laguerre_values(a, x, &mut v);
            for i in 0..6 {
                for j in 0..6 {
                    g[i][j] += w * v[i] * v[j];
                }
            }
        }
        for i in 0..6 {
            for j in 0..6 {
                let e = if i == j { laguerre_norm2(i, a) } else { 0.0 };
                assert!((g[i][j] - e).abs() < 1e-11, "{i} {j}");
            }
        }
    }

    #[test]
    fn gk_handles_endpoint_power() {
        let (v, _) = integrate_gk(|x: f64| x.sqrt() * (1.0 - x).powf(1.5), 0.0, 1.0, Tolerance { rel: 1e-12, ..Default::default() }).unwrap();
        let exact = (ln_gamma(1.5) + ln_gamma(2.5) - ln_gamma(4.0)).exp();
        assert!((v - exact).abs() < 1e-11);
        let (v, _) = integrate_gk_semi_infinite(|x: f64| x.powf(0.5) * (-x).exp(), 0.0, Tolerance::default()).unwrap();
        assert!((v - gamma(1.5)).abs() < 1e-10);
    }

    #[test]
    fn gk_reports_failure() {
        let t = Tolerance { rel: 1e-14, abs: 0.0, max_segments: 3 };
        assert!(matches!(integrate_gk(|x: f64| x.powf(-0.9), 0.0, 1.0, t), Err(Error::Quadrature(_))));
    }
}
