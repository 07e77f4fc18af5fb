//! Product quadrature on the unit sphere `S³ ⊂ C²`.
//!
//! Points are `(sqrt(1−s)·e^{iξ₁}, sqrt(s)·e^{iξ₂})`; the surface element is
//! `½ ds dξ₁ dξ₂`. Gauss–Legendre in `s` and the periodic trapezoid rule in
//! both angles give exactness for polynomials in `z, z̄` of degree `2q − 1`.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex64;

use crate::domain::{sphere_area, ComplexPoint};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct SphereQuadrature {
    pub order: usize,
    pub nodes: Vec<ComplexPoint>,
    pub weights: Vec<f64>,
    /// Polynomial degree integrated exactly.
    pub exact_degree: usize,
}

impl SphereQuadrature {
    /// Rule with `order` Gauss–Legendre nodes and `2·order` angles per circle.
    pub fn new(n: usize, order: usize) -> Result<Self> {
        if n != 2 {
            return Err(Error::InvalidInput("sphere quadrature is implemented for n = 2".into()));
        }
        let q = NonZeroUsize::new(order).ok_or_else(|| Error::InvalidInput("quadrature order must be positive".into()))?;
        let gl = GaussLegendre::new(q);
        let m = 2 * order;
        let dtheta = 2.0 * PI / m as f64;
        let mut nodes = Vec::with_capacity(order * m * m);
        let mut weights = Vec::with_capacity(order * m * m);
        for &(x, w) in gl.as_node_weight_pairs() {
            let s = 0.5 * (x + 1.0);
            let ws = 0.5 * w;
            let (r1, r2) = ((1.0 - s).sqrt(), s.sqrt());
            for i in 0..m {
                let a = (i as f64 + 0.5) * dtheta;
                for j in 0..m {
                    let b = j as f64 * dtheta;
                    nodes.push(vec![Complex64::from_polar(r1, a), Complex64::from_polar(r2, b)]);
                    weights.push(0.5 * ws * dtheta * dtheta);
                }
            }
        }
        Ok(SphereQuadrature { order, nodes, weights, exact_degree: 2 * order - 1 })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `∫_{S³} f dS`.
    pub fn integrate(&self, f: impl Fn(&[Complex64]) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(x)).sum()
    }

    /// Mean of `f` over the sphere.
    pub fn mean(&self, f: impl Fn(&[Complex64]) -> f64) -> f64 {
        self.integrate(f) / sphere_area(2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn total_area() {
        let q = SphereQuadrature::new(2, 6).unwrap();
        assert!((q.total_weight() - 2.0 * PI * PI).abs() < 1e-12);
        assert!(q.weights.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn monomial_moments() {
        // ∫ |z1|^{2a} |z2|^{2b} = 2π² a! b! / (a+b+1)!
        let fact = |k: u32| (1..=k).map(f64::from).product::<f64>();
        let q = SphereQuadrature::new(2, 5).unwrap();
        for a in 0..4u32 {
            for b in 0..(4 - a) {
                let got = q.integrate(|z| z[0].norm_sqr().powi(a as i32) * z[1].norm_sqr().powi(b as i32));
                let want = 2.0 * PI * PI * fact(a) * fact(b) / fact(a + b + 1);
                assert!((got - want).abs() < 1e-12, "a={a} b={b}");
            }
        }
        // odd angular frequency integrates to zero
        let got = q.integrate(|z| (z[0] * z[0] * z[1].conj()).re);
        assert!(got.abs() < 1e-13);
    }
}
