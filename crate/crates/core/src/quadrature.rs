//! Product quadrature on the unit sphere.
//!
//! Gauss–Legendre in `cos ϑ` times a periodic trapezoid rule in `φ`. The polar
//! axis is +y, the normal of the x–z measurement plane, so `â·λ` for a planar
//! axis reduces to `sin ϑ · cos(φ − α)`. The azimuthal nodes sit at half steps,
//! `φⱼ = (j + ½)·2π/n_phi`; sign boundaries of planar settings whose angles are
//! multiples of `2π/n_phi` therefore fall strictly between nodes.

use std::f64::consts::PI;

use crate::domain::HiddenState;
use crate::error::{invalid, Result};

/// Resolution of the sphere product rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadratureSpec {
    n_theta: usize,
    n_phi: usize,
}

impl QuadratureSpec {
    pub fn new(n_theta: usize, n_phi: usize) -> Result<Self> {
        if n_theta < 2 {
            return Err(invalid(format!("n_theta must be at least 2, got {n_theta}")));
        }
        if n_phi < 4 {
            return Err(invalid(format!("n_phi must be at least 4, got {n_phi}")));
        }
        Ok(Self { n_theta, n_phi })
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn node_count(&self) -> usize {
        self.n_theta * self.n_phi
    }

    /// Azimuthal grid step in radians.
    pub fn phi_step(&self) -> f64 {
        2.0 * PI / self.n_phi as f64
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { n_theta: 64, n_phi: 64 }
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Nodes and probability weights (summing to one) for the uniform measure on
/// the unit sphere.
pub fn sphere_nodes(spec: &QuadratureSpec) -> Vec<(HiddenState, f64)> {
    let (cos_theta, gl_w) = gauss_legendre(spec.n_theta);
    let step = spec.phi_step();
    let azimuths: Vec<(f64, f64)> = (0..spec.n_phi)
        .map(|j| {
            let phi = (j as f64 + 0.5) * step;
            (phi.sin(), phi.cos())
        })
        .collect();
    let mut out = Vec::with_capacity(spec.node_count());
    for (&c, &w) in cos_theta.iter().zip(&gl_w) {
        let s = (1.0 - c * c).max(0.0).sqrt();
        let weight = 0.5 * w / spec.n_phi as f64;
        for &(sin_phi, cos_phi) in &azimuths {
            out.push((HiddenState::new([s * sin_phi, c, s * cos_phi]), weight));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_bounds() {
        assert!(QuadratureSpec::new(1, 8).is_err());
        assert!(QuadratureSpec::new(2, 3).is_err());
        assert_eq!(QuadratureSpec::new(2, 4).unwrap().node_count(), 8);
    }

    #[test]
    fn gauss_legendre_small_orders() {
        let (x, w) = gauss_legendre(2);
        let r = 1.0 / 3f64.sqrt();
        assert!((x[0] + r).abs() < 1e-15 && (x[1] - r).abs() < 1e-15);
        assert!((w[0] - 1.0).abs() < 1e-15 && (w[1] - 1.0).abs() < 1e-15);
        let (x, w) = gauss_legendre(3);
        assert_eq!(x[1], 0.0);
        assert!((w[1] - 8.0 / 9.0).abs() < 1e-15);
        assert!((x[2] - 0.6f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in [2usize, 5, 16, 64] {
            let (x, w) = gauss_legendre(n);
            for deg in 0..(2 * n).min(40) {
                let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((approx - exact).abs() < 1e-13, "n={n} deg={deg}: {approx} vs {exact}");
            }
        }
    }

    #[test]
    fn sphere_weights_sum_to_one_and_nodes_are_unit() {
        for (nt, np) in [(2, 4), (7, 9), (64, 64)] {
            let nodes = sphere_nodes(&QuadratureSpec::new(nt, np).unwrap());
            assert_eq!(nodes.len(), nt * np);
            let total: f64 = nodes.iter().map(|(_, w)| w).sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!(nodes.iter().all(|(l, w)| *w > 0.0 && (l.norm() - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn sphere_second_moments() {
        // ∫ λᵢ λⱼ dΩ/4π = δᵢⱼ / 3
        let nodes = sphere_nodes(&QuadratureSpec::new(8, 8).unwrap());
        for i in 0..3 {
            for j in 0..3 {
                let m: f64 = nodes.iter().map(|(l, w)| w * l.coords()[i] * l.coords()[j]).sum();
                let expect = if i == j { 1.0 / 3.0 } else { 0.0 };
                assert!((m - expect).abs() < 1e-14, "({i},{j}) = {m}");
            }
        }
    }
}
