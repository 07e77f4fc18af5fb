//! Robin jets on numerically solved domains and two independent oracles for
//! them: the sphere mean of `G` and the double Poisson integral of `H`.

use std::collections::HashMap;
use std::sync::Arc;

use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::dirichlet::{PoleSolver, ReferenceSphere, SolverConfig, SolverHandle};
use crate::domain::{c, norm, pullback_jet, sub, ComplexPoint, DomainSpec, Shape};
use crate::jet::{exponent_factorial, real_to_wirtinger, Basis, Jet};
use crate::potential::{
    ball_robin_jet, distance_sq_jet, halfspace_robin_jet, kernel, JetSource, RobinJet, MAX_ORDER,
};
use crate::quadrature::SphereQuadrature;
use crate::{Error, Result};

/// Anything that can produce Robin jets on a fixed domain.
pub trait RobinProvider: Send + Sync {
    fn domain(&self) -> &DomainSpec;

    fn robin_jet(&self, p: &[Complex64], order: usize) -> Result<RobinJet>;

    fn lambda(&self, p: &[Complex64]) -> Result<f64> {
        Ok(self.robin_jet(p, 0)?.lambda())
    }
}

/// Exact jets for balls and half-spaces, including their images under
/// similarities.
#[derive(Clone, Debug)]
pub struct ClosedForm {
    domain: DomainSpec,
}

impl ClosedForm {
    pub fn new(domain: DomainSpec) -> Result<Self> {
        match domain.shape() {
            Shape::Ball { .. } | Shape::HalfSpace { .. } => Ok(ClosedForm { domain }),
            _ => Err(Error::InvalidDomain(format!("no closed form for {}", domain.kind_name()))),
        }
    }
}

/// Closed-form jet on the unmapped shape.
fn base_closed_form(shape: &Shape, z: &[Complex64], order: usize) -> Result<RobinJet> {
    match shape {
        Shape::Ball { center, radius } => ball_robin_jet(center, *radius, z, order),
        Shape::HalfSpace { a, c: level } => {
            // {2 Re a·z < c} is {2 Re a·(z − b) < 1} with 2 Re a·b = c − 1
            let a2: f64 = a.iter().map(|x| x.norm_sqr()).sum();
            let b: ComplexPoint = a.iter().map(|x| x.conj() * ((level - 1.0) / (2.0 * a2))).collect();
            let mut jet = halfspace_robin_jet(a, &sub(z, &b), order)?;
            jet.p = z.to_vec();
            Ok(jet)
        }
        _ => Err(Error::InvalidDomain("no closed form for this shape".into())),
    }
}

impl RobinProvider for ClosedForm {
    fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    fn robin_jet(&self, p: &[Complex64], order: usize) -> Result<RobinJet> {
        if !self.domain.contains(p) {
            return Err(Error::InvalidInput("point is not inside the domain".into()));
        }
        match self.domain.similarity() {
            None => base_closed_form(self.domain.shape(), p, order),
            Some(m) => {
                // Λ_{f(D)}(f(z)) = |s|^{−(2n−2)} Λ_D(z)
                let z = m.inverse(p);
                let base = base_closed_form(self.domain.shape(), &z, order)?;
                let factor = m.dilation().powi(-(2 * self.domain.n() as i32 - 2));
                let jet = pullback_jet(m, &base.jet).scale(c(factor, 0.0));
                Ok(RobinJet::exact(p.to_vec(), jet, JetSource::ClosedForm))
            }
        }
    }
}

/// Collocation jets with graded per-pole solvers.
pub struct Numerical {
    solver: PoleSolver,
}

impl Numerical {
    pub fn new(domain: DomainSpec, config: SolverConfig) -> Self {
        Numerical { solver: PoleSolver::new(domain, config) }
    }

    pub fn solver(&self) -> &PoleSolver {
        &self.solver
    }

    pub fn handle_for(&self, p: &[Complex64]) -> Result<Arc<SolverHandle>> {
        self.solver.handle_for(p)
    }

    /// Finite-difference jet from `Λ` values of the handle serving `p`.
    pub fn robin_jet_fd(&self, p: &[Complex64], order: usize, h: Option<f64>) -> Result<RobinJet> {
        let handle = self.handle_for(p)?;
        robin_jet_fd(&handle, p, order, h)
    }
}

impl RobinProvider for Numerical {
    fn domain(&self) -> &DomainSpec {
        self.solver.domain()
    }

    fn robin_jet(&self, p: &[Complex64], order: usize) -> Result<RobinJet> {
        let handle = self.handle_for(p)?;
        robin_jet(&handle, p, order)
    }
}

/// Closed form when the shape has one, collocation otherwise.
pub fn provider_for(domain: &DomainSpec, config: &SolverConfig) -> Box<dyn RobinProvider> {
    match ClosedForm::new(domain.clone()) {
        Ok(cf) => Box::new(cf),
        Err(_) => Box::new(Numerical::new(domain.clone(), config.clone())),
    }
}

/// Distance from `p` used for derivative error bounds.
fn interior_distance(handle: &SolverHandle, p: &[Complex64]) -> f64 {
    match handle.domain().nearest_boundary(p) {
        Ok(f) => f.delta,
        Err(_) => handle.collocation().boundary.iter().map(|bp| norm(&sub(&bp.x, p))).fold(f64::INFINITY, f64::min),
    }
}

/// Jet of `Λ` at `p` from one collocation solve.
///
/// The error estimate bounds each harmonic Taylor coefficient by its boundary
/// residual (maximum principle) and spreads it to `z`-derivatives with a
/// Cauchy factor `2/δ` per order.
pub fn robin_jet(handle: &SolverHandle, p: &[Complex64], upto: usize) -> Result<RobinJet> {
    let sol = handle.solve_pole(p, upto)?;
    let jet = sol.robin_jet(&handle.collocation().charges)?;
    let basis = jet.basis().clone();
    let cauchy = 2.0 / interior_distance(handle, p);
    let err_est = (0..basis.len())
        .map(|i| {
            let e = basis.exponents(i);
            let total: f64 = (0..basis.len())
                .filter(|&j| basis.exponents(j).iter().zip(e).all(|(a, b)| a <= b))
                .map(|j| sol.residual[j] * cauchy.powi((basis.degree(i) - basis.degree(j)) as i32))
                .sum();
            total * exponent_factorial(e)
        })
        .collect();
    let rel = sol.relative_residual(0);
    let threshold = 10f64.powi(-(4 + upto as i32));
    let mut flag = None;
    if rel > threshold {
        flag = Some(format!("relative boundary residual {rel:.1e} exceeds {threshold:.0e} for order {upto}"));
    }
    if !(jet.value().re < 0.0) {
        flag = Some(format!("Λ = {} is not negative", jet.value().re));
    }
    Ok(RobinJet { p: p.to_vec(), jet, err_est, source: JetSource::Collocation, flag })
}

/// Default finite-difference step `10⁻²·δ` clamped to `[10⁻⁴, 10⁻²]`.
pub fn default_fd_step(delta: f64) -> f64 {
    (1e-2 * delta).clamp(1e-4, 1e-2)
}

/// Second-order central stencil for `d^k/dx^k` as (offset, weight·h^k).
fn stencil(k: u8) -> &'static [(i8, f64)] {
    match k {
        0 => &[(0, 1.0)],
        1 => &[(-1, -0.5), (1, 0.5)],
        2 => &[(-1, 1.0), (0, -2.0), (1, 1.0)],
        3 => &[(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)],
        _ => &[(-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)],
    }
}

/// Real Taylor jet of `f` at `p` from nested central differences with step
/// `h`. `f` is evaluated in one batch.
fn fd_real_jet(
    n: usize,
    p: &[Complex64],
    upto: usize,
    h: f64,
    f: &dyn Fn(&[ComplexPoint]) -> Result<Vec<f64>>,
) -> Result<Jet<f64>> {
    let basis = Basis::get(2 * n, upto);
    let mut offsets: HashMap<Vec<i8>, usize> = HashMap::new();
    let mut terms: Vec<Vec<(usize, f64)>> = Vec::with_capacity(basis.len());
    for i in 0..basis.len() {
        let e = basis.exponents(i);
        let mut combo: Vec<(Vec<i8>, f64)> = vec![(Vec::new(), 1.0)];
        for &k in e {
            let mut next = Vec::new();
            for (off, w) in &combo {
                for &(o, sw) in stencil(k) {
                    let mut v = off.clone();
                    v.push(o);
                    next.push((v, w * sw));
                }
            }
            combo = next;
        }
        let scale = h.powi(-(basis.degree(i) as i32)) / exponent_factorial(e);
        let row = combo
            .into_iter()
            .map(|(off, w)| {
                let len = offsets.len();
                let idx = *offsets.entry(off).or_insert(len);
                (idx, w * scale)
            })
            .collect();
        terms.push(row);
    }
    let mut points = vec![Vec::new(); offsets.len()];
    for (off, &idx) in &offsets {
        points[idx] = (0..n).map(|k| p[k] + c(h * off[2 * k] as f64, h * off[2 * k + 1] as f64)).collect();
    }
    let values = f(&points)?;
    let coeffs = terms.iter().map(|row| row.iter().map(|&(i, w)| w * values[i]).sum()).collect();
    Ok(Jet::from_coeffs(&basis, coeffs))
}

/// Finite-difference Robin jet with Richardson extrapolation over `h` and
/// `h/2`. The error estimate is the size of the extrapolation correction.
pub fn robin_jet_fd(handle: &SolverHandle, p: &[Complex64], upto: usize, h: Option<f64>) -> Result<RobinJet> {
    if upto > MAX_ORDER {
        return Err(Error::InvalidInput(format!("jets are limited to order {MAX_ORDER}")));
    }
    let n = handle.domain().n();
    let delta = interior_distance(handle, p);
    let h = h.unwrap_or_else(|| default_fd_step(delta));
    if !(h > 0.0) || 4.0 * h >= delta {
        return Err(Error::InvalidInput(format!("step {h} too large for distance {delta} to the boundary")));
    }
    if h < 1e-5 {
        return Err(Error::InvalidInput(format!("step {h} is below the noise floor of the solver")));
    }
    let eval = |pts: &[ComplexPoint]| -> Result<Vec<f64>> {
        if pts.iter().any(|q| !handle.domain().contains(q)) {
            return Err(Error::InvalidInput("stencil leaves the domain".into()));
        }
        Ok(handle.lambda_values(pts))
    };
    let coarse = fd_real_jet(n, p, upto, h, &eval)?;
    let fine = fd_real_jet(n, p, upto, 0.5 * h, &eval)?;
    let mut rich = fine.scale(4.0 / 3.0);
    rich.add_scaled(&coarse, -1.0 / 3.0);
    let jet = real_to_wirtinger(&rich);
    let corr = real_to_wirtinger(&(&rich - &fine));
    let basis = jet.basis().clone();
    let err_est = (0..basis.len()).map(|i| corr.coeffs()[i].norm() * exponent_factorial(basis.exponents(i))).collect();
    Ok(RobinJet { p: p.to_vec(), jet, err_est, source: JetSource::FiniteDifference, flag: None })
}

/// Green function values and harmonic-part quadratic forms for the oracles.
pub trait GreenFunction: Sync {
    fn domain(&self) -> &DomainSpec;

    /// `G(z, p)` for each `z`.
    fn green(&self, p: &[Complex64], zs: &[ComplexPoint]) -> Result<Vec<f64>>;

    /// `Σ_ij a_i a_j H(z_i, z_j)` with `H(·, w)` the harmonic part for the
    /// pole `w` and jet-valued weights `a`.
    fn harmonic_form(&self, zs: &[ComplexPoint], a: &[Jet<Complex64>]) -> Result<Jet<Complex64>>;
}

/// Splits jet weights into a real matrix: real parts then imaginary parts.
fn weights_matrix(a: &[Jet<Complex64>]) -> Mat<f64> {
    let nm = a[0].coeffs().len();
    Mat::<f64>::from_fn(a.len(), 2 * nm, |i, j| if j < nm { a[i].coeffs()[j].re } else { a[i].coeffs()[j - nm].im })
}

fn jets_from_rows(basis: &Arc<Basis>, m: &Mat<f64>) -> Vec<Jet<Complex64>> {
    let nm = basis.len();
    (0..m.nrows()).map(|k| Jet::from_coeffs(basis, (0..nm).map(|j| c(m[(k, j)], m[(k, j + nm)])).collect())).collect()
}

impl GreenFunction for SolverHandle {
    fn domain(&self) -> &DomainSpec {
        SolverHandle::domain(self)
    }

    fn green(&self, p: &[Complex64], zs: &[ComplexPoint]) -> Result<Vec<f64>> {
        let sol = self.solve_pole(p, 0)?;
        zs.iter().map(|z| self.green_eval(&sol, z)).collect()
    }

    fn harmonic_form(&self, zs: &[ComplexPoint], a: &[Jet<Complex64>]) -> Result<Jet<Complex64>> {
        // Σ_k (Σ_i a_i K(z_i, q_k)) · c_k(Σ_j a_j δ_{z_j})
        let basis = a[0].basis().clone();
        let am = weights_matrix(a);
        let charges = &self.collocation().charges;
        let boundary = &self.collocation().boundary;
        let rows: Vec<Vec<f64>> = charges.par_iter().map(|q| zs.iter().map(|z| kernel(z, q)).collect()).collect();
        let et = Mat::<f64>::from_fn(charges.len(), zs.len(), |k, i| rows[k][i]);
        let rows: Vec<Vec<f64>> = boundary.par_iter().map(|bp| zs.iter().map(|z| -kernel(&bp.x, z)).collect()).collect();
        let b = Mat::<f64>::from_fn(boundary.len(), zs.len(), |i, j| rows[i][j]);
        let u = jets_from_rows(&basis, &(&et * &am));
        let v = jets_from_rows(&basis, &self.apply_pinv(&(&b * &am)));
        let mut out = Jet::zero(&basis);
        for (uk, vk) in u.iter().zip(&v) {
            uk.mul_acc(vk, &mut out);
        }
        Ok(out)
    }
}

/// `G = K − K_img` on a ball.
#[derive(Clone, Debug)]
pub struct BallGreen {
    domain: DomainSpec,
    sphere: ReferenceSphere,
}

impl BallGreen {
    pub fn new(center: ComplexPoint, radius: f64) -> Result<Self> {
        let domain = DomainSpec::ball(center.len(), center.clone(), radius)?;
        Ok(BallGreen { domain, sphere: ReferenceSphere { center, radius } })
    }

    fn harmonic(&self, z: &[Complex64], w: &[Complex64]) -> f64 {
        -self.sphere.image_kernel(z, w)
    }
}

impl GreenFunction for BallGreen {
    fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    fn green(&self, p: &[Complex64], zs: &[ComplexPoint]) -> Result<Vec<f64>> {
        Ok(zs.iter().map(|z| kernel(z, p) + self.harmonic(z, p)).collect())
    }

    fn harmonic_form(&self, zs: &[ComplexPoint], a: &[Jet<Complex64>]) -> Result<Jet<Complex64>> {
        let basis = a[0].basis().clone();
        let hrow = |j: usize| -> Vec<f64> { zs.iter().map(|z| self.harmonic(z, &zs[j])).collect() };
        Ok(quadratic_form(a, &hrow, &basis))
    }
}

/// `Σ_ij a_i a_j H_ij` with column `j` of `H` produced on demand.
fn quadratic_form(a: &[Jet<Complex64>], column: &(dyn Fn(usize) -> Vec<f64> + Sync), basis: &Arc<Basis>) -> Jet<Complex64> {
    let nm = basis.len();
    let parts: Vec<Vec<Complex64>> = (0..a.len())
        .into_par_iter()
        .map(|j| {
            let col = column(j);
            let mut y = vec![c(0.0, 0.0); nm];
            for (ai, h) in a.iter().zip(&col) {
                for (yk, ak) in y.iter_mut().zip(ai.coeffs()) {
                    *yk += ak * h;
                }
            }
            y
        })
        .collect();
    let mut out = Jet::zero(basis);
    for (aj, y) in a.iter().zip(parts) {
        aj.mul_acc(&Jet::from_coeffs(basis, y), &mut out);
    }
    out
}

/// Checks that `B(p, r)` lies inside the domain, with the quadrature nodes
/// as witnesses when no nearest boundary point is available.
fn check_ball_inside(domain: &DomainSpec, p: &[Complex64], r: f64, nodes: &[ComplexPoint]) -> Result<()> {
    if !(r > 0.0) {
        return Err(Error::InvalidInput("sphere radius must be positive".into()));
    }
    let inside = match domain.nearest_boundary(p) {
        Ok(f) => f.delta > r,
        Err(_) => nodes.iter().all(|x| domain.contains(x)),
    };
    if !inside || !domain.contains(p) {
        return Err(Error::InvalidInput(format!("ball of radius {r} is not inside the domain")));
    }
    Ok(())
}

fn sphere_nodes(center: &[Complex64], r: f64, quad: &SphereQuadrature) -> Vec<ComplexPoint> {
    quad.nodes.iter().map(|w| center.iter().zip(w).map(|(a, b)| a + b * r).collect()).collect()
}

/// `Λ(p) = −r^{−2n+2} + (σ r^{2n−1})⁻¹ ∫_{∂B(p,r)} G(·, p) dS`.
pub fn sphere_mean_lambda(green: &dyn GreenFunction, p: &[Complex64], r: f64, quad: &SphereQuadrature) -> Result<f64> {
    let n = p.len();
    let nodes = sphere_nodes(p, r, quad);
    check_ball_inside(green.domain(), p, r, &nodes)?;
    let g = green.green(p, &nodes)?;
    let mean = quad.weights.iter().zip(&g).map(|(w, x)| w * x).sum::<f64>() / quad.total_weight();
    Ok(mean - r.powi(-(2 * n as i32 - 2)))
}

/// Poisson-kernel jets `w_i dS · P(p, z_i)` for `B(p0, r)` in the pole `p`.
fn poisson_weights(p0: &[Complex64], r: f64, quad: &SphereQuadrature, p: &[Complex64], upto: usize) -> Vec<Jet<Complex64>> {
    let n = p.len();
    let sigma = quad.total_weight();
    let nodes = sphere_nodes(p0, r, quad);
    let mut num = distance_sq_jet(p0, p, upto).scale(c(-1.0, 0.0));
    num.coeffs_mut()[0] += c(r * r, 0.0);
    nodes
        .par_iter()
        .zip(&quad.weights)
        .map(|(z, w)| {
            let den = distance_sq_jet(z, p, upto).powf(-(n as f64));
            // P = (r² − |p−p0|²) / (σ r |z−p|^{2n}), dS = r^{2n−1} w
            (&num * &den).scale(c(w * r.powi(2 * n as i32 - 2) / sigma, 0.0))
        })
        .collect()
}

/// `Λ` and its derivatives up to order 2 at `p ∈ B(p0, r)` from
/// `Λ(p) = ∫∫ P(p, z) P(p, w) H(z, w) dS(z) dS(w)`, differentiated under the
/// integral. A second rule two orders lower gives the error estimate.
pub fn double_poisson_lambda(
    green: &dyn GreenFunction,
    p0: &[Complex64],
    r: f64,
    quad: &SphereQuadrature,
    p: &[Complex64],
    upto: usize,
) -> Result<RobinJet> {
    if upto > 2 {
        return Err(Error::InvalidInput("the double Poisson oracle is limited to order 2".into()));
    }
    if quad.order < 4 {
        return Err(Error::Quadrature("quadrature order must be at least 4".into()));
    }
    if norm(&sub(p, p0)) >= r {
        return Err(Error::InvalidInput("evaluation point outside the Poisson ball".into()));
    }
    let evaluate = |q: &SphereQuadrature| -> Result<Jet<Complex64>> {
        let nodes = sphere_nodes(p0, r, q);
        check_ball_inside(green.domain(), p0, r, &nodes)?;
        green.harmonic_form(&nodes, &poisson_weights(p0, r, q, p, upto))
    };
    let jet = evaluate(quad)?;
    let coarse = evaluate(&SphereQuadrature::new(p.len(), quad.order - 2)?)?;
    let basis = jet.basis().clone();
    let err_est: Vec<f64> = (0..basis.len())
        .map(|i| (jet.coeffs()[i] - coarse.coeffs()[i]).norm() * exponent_factorial(basis.exponents(i)))
        .collect();
    let rel = err_est[0] / jet.value().norm();
    if !(rel < 1e-2) {
        return Err(Error::Quadrature(format!("quadrature orders disagree by {rel:.1e}")));
    }
    let flag = (rel > 1e-6).then(|| format!("quadrature orders disagree by {rel:.1e}"));
    Ok(RobinJet { p: p.to_vec(), jet, err_est, source: JetSource::DoublePoisson, flag })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Similarity;

    fn rel_jet_err(a: &RobinJet, b: &RobinJet) -> f64 {
        let (mut e, mut s) = (0.0f64, 0.0f64);
        for ((_, x, _), (_, y, _)) in a.entries().iter().zip(b.entries()) {
            e = e.max((x - y).norm());
            s = s.max(y.norm());
        }
        e / s
    }

    #[test]
    fn mapped_ball_closed_form() {
        let d = DomainSpec::unit_ball(2);
        let m = Similarity { s: c(0.0, 2.0), u: Similarity::identity(2).u, b: vec![c(0.5, 0.0), c(0.0, 1.0)] };
        let cf = ClosedForm::new(d.mapped(m.clone()).unwrap()).unwrap();
        let z = vec![c(0.2, 0.1), c(-0.3, 0.0)];
        let w = m.apply(&z);
        let got = cf.robin_jet(&w, 2).unwrap();
        let want = ball_robin_jet(&m.b, 2.0, &w, 2).unwrap();
        assert!(rel_jet_err(&got, &want) < 1e-13);
    }

    #[test]
    fn shifted_half_space() {
        let a = vec![c(0.0, 0.0), c(0.5, 0.0)];
        let d = DomainSpec::half_space(a, 0.4).unwrap();
        let cf = ClosedForm::new(d).unwrap();
        // Λ = −(2·dist)^{−2}; the plane is Re z2 = 0.4
        let p = vec![c(0.3, 0.2), c(0.1, 0.7)];
        let want = -(2.0f64 * 0.3).powi(-2);
        assert!((cf.lambda(&p).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn fd_on_closed_form_values() {
        // nested differences on an analytic function match its jet
        let d = DomainSpec::unit_ball(2);
        let o = vec![c(0.0, 0.0); 2];
        let p = vec![c(0.2, -0.1), c(0.1, 0.3)];
        let f = |pts: &[ComplexPoint]| -> Result<Vec<f64>> {
            Ok(pts.iter().map(|q| ball_robin_jet(&o, 1.0, q, 0).unwrap().lambda()).collect())
        };
        let coarse = fd_real_jet(2, &p, 4, 2e-2, &f).unwrap();
        let fine = fd_real_jet(2, &p, 4, 1e-2, &f).unwrap();
        let mut rich = fine.scale(4.0 / 3.0);
        rich.add_scaled(&coarse, -1.0 / 3.0);
        let jet = real_to_wirtinger(&rich);
        let exact = ball_robin_jet(&o, 1.0, &p, 4).unwrap();
        let fdj = RobinJet::exact(p.clone(), jet, JetSource::FiniteDifference);
        assert!(rel_jet_err(&fdj, &exact) < 1e-5, "{}", rel_jet_err(&fdj, &exact));
        let _ = d;
    }

    #[test]
    fn sphere_mean_on_closed_form() {
        let g = BallGreen::new(vec![c(0.0, 0.0); 2], 1.0).unwrap();
        let quad = SphereQuadrature::new(2, 12).unwrap();
        let o = vec![c(0.0, 0.0); 2];
        assert!((sphere_mean_lambda(&g, &o, 0.5, &quad).unwrap() + 1.0).abs() < 1e-12);
        let p = vec![c(0.2, 0.1), c(0.0, -0.2)];
        let a = sphere_mean_lambda(&g, &p, 0.3, &quad).unwrap();
        let b = sphere_mean_lambda(&g, &p, 0.5, &quad).unwrap();
        let want = ball_robin_jet(&o, 1.0, &p, 0).unwrap().lambda();
        assert!((a - want).abs() < 1e-9 * want.abs());
        assert!((b - want).abs() < 1e-9 * want.abs());
        assert!(sphere_mean_lambda(&g, &p, 0.8, &quad).is_err());
    }

    #[test]
    fn double_poisson_on_closed_form() {
        let g = BallGreen::new(vec![c(0.0, 0.0); 2], 1.0).unwrap();
        let quad = SphereQuadrature::new(2, 12).unwrap();
        let o = vec![c(0.0, 0.0); 2];
        let at0 = double_poisson_lambda(&g, &o, 0.4, &quad, &o, 2).unwrap();
        assert!((at0.lambda() + 1.0).abs() < 1e-4);
        let p = vec![c(0.2, 0.0), c(0.0, 0.0)];
        let jet = double_poisson_lambda(&g, &o, 0.4, &quad, &p, 1).unwrap();
        let exact = ball_robin_jet(&o, 1.0, &p, 1).unwrap();
        assert!(rel_jet_err(&jet, &exact) < 1e-3, "{}", rel_jet_err(&jet, &exact));
        assert!(jet.err_est[1] > (jet.jet.coeffs()[1] - exact.jet.coeffs()[1]).norm());
    }

    #[test]
    fn double_poisson_swap_symmetry() {
        let g = BallGreen::new(vec![c(0.0, 0.0); 2], 1.0).unwrap();
        let quad = SphereQuadrature::new(2, 6).unwrap();
        let p0 = vec![c(0.1, 0.0), c(0.0, 0.1)];
        let nodes = sphere_nodes(&p0, 0.4, &quad);
        let p = vec![c(0.15, 0.05), c(0.0, 0.1)];
        let a = poisson_weights(&p0, 0.4, &quad, &p, 0);
        let basis = a[0].basis().clone();
        let direct = |j: usize| -> Vec<f64> { nodes.iter().map(|z| g.harmonic(z, &nodes[j])).collect() };
        let swapped = |j: usize| -> Vec<f64> { nodes.iter().map(|z| g.harmonic(&nodes[j], z)).collect() };
        let x = quadratic_form(&a, &direct, &basis).value().re;
        let y = quadratic_form(&a, &swapped, &basis).value().re;
        assert!((x - y).abs() < 1e-10 * x.abs());
    }

    #[test]
    fn oracles_on_numerical_ball() {
        let d = DomainSpec::unit_ball(2);
        let num = Numerical::new(d, SolverConfig::default());
        let o = vec![c(0.0, 0.0); 2];
        let p = vec![c(0.2, 0.1), c(0.0, -0.1)];
        let h = num.handle_for(&p).unwrap();
        let want = ball_robin_jet(&o, 1.0, &p, 1).unwrap();
        let quad = SphereQuadrature::new(2, 12).unwrap();
        let sm = sphere_mean_lambda(h.as_ref(), &p, 0.3, &quad).unwrap();
        assert!((sm - want.lambda()).abs() < 1e-6 * want.lambda().abs(), "{sm}");
        let dp = double_poisson_lambda(h.as_ref(), &p, 0.4, &quad, &p, 1).unwrap();
        assert!(rel_jet_err(&dp, &want) < 1e-4, "{}", rel_jet_err(&dp, &want));
    }

    #[test]
    fn numerical_ball_jet_matches_closed_form() {
        let d = DomainSpec::unit_ball(2);
        let num = Numerical::new(d, SolverConfig::default());
        let o = vec![c(0.0, 0.0); 2];
        let p = vec![c(0.5, 0.0), c(0.0, 0.0)];
        let jet = num.robin_jet(&p, 4).unwrap();
        assert!((jet.lambda() + 16.0 / 9.0).abs() < 1e-6);
        let exact = ball_robin_jet(&o, 1.0, &p, 4).unwrap();
        assert!(rel_jet_err(&jet, &exact) < 1e-5, "{}", rel_jet_err(&jet, &exact));
        for (idx, v, _) in jet.entries() {
            assert!((v - jet.value(&idx.swapped()).conj()).norm() < 1e-9 * (1.0 + v.norm()));
        }
        let fd = num.robin_jet_fd(&p, 4, None).unwrap();
        let e3 = rel_jet_err(&fd.truncate(3), &jet.truncate(3));
        assert!(e3 < 1e-4, "{e3}");
        assert!(rel_jet_err(&fd, &jet) < 1e-3);
    }
}
