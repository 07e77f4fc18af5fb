//! Supported domains and their analytic geometry.
//!
//! Every domain is `{ψ < 0}` for an explicit defining function whose
//! Wirtinger jets are exact. Domains may be carried by a complex similarity
//! `w = s·U·z + b`, in which case `ψ' = ψ ∘ f⁻¹`.

use std::f64::consts::PI;

use faer::linalg::solvers::Solve;
use faer::Mat;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::jet::{wirtinger_basis, Jet};
use crate::{Error, Result};

pub type ComplexPoint = Vec<Complex64>;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Standard Hermitian product `Σ v_α conj(w_α)`.
pub fn hermitian(v: &[Complex64], w: &[Complex64]) -> Complex64 {
    v.iter().zip(w).map(|(a, b)| a * b.conj()).sum()
}

pub fn norm_sq(v: &[Complex64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum()
}

pub fn norm(v: &[Complex64]) -> f64 {
    norm_sq(v).sqrt()
}

pub fn sub(a: &[Complex64], b: &[Complex64]) -> ComplexPoint {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[Complex64], b: &[Complex64]) -> ComplexPoint {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[Complex64], s: f64) -> ComplexPoint {
    a.iter().map(|x| x * s).collect()
}

/// `a + s·b`.
pub fn axpy(a: &[Complex64], s: f64, b: &[Complex64]) -> ComplexPoint {
    a.iter().zip(b).map(|(x, y)| x + y * s).collect()
}

/// Smooth bump `exp(1 − 1/(1 − s²))`, `s = (x − center)/width`, used by the
/// perturbed ball.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: f64,
    pub width: f64,
}

impl Default for Bump {
    fn default() -> Self {
        Bump { center: 0.6, width: 0.6 }
    }
}

impl Bump {
    pub fn value(&self, x: f64) -> f64 {
        let s = (x - self.center) / self.width;
        if s.abs() >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - s * s)).exp()
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let s = (x - self.center) / self.width;
        if s.abs() >= 1.0 {
            0.0
        } else {
            let u = 1.0 - s * s;
            self.value(x) * (-2.0 * s / (u * u)) / self.width
        }
    }

    fn jet(&self, x: &Jet<Complex64>) -> Jet<Complex64> {
        let s = x.scale(c(1.0 / self.width, 0.0));
        let mut s = s;
        s.coeffs_mut()[0] -= c(self.center / self.width, 0.0);
        if s.value().re.abs() >= 1.0 {
            return Jet::zero(x.basis());
        }
        let mut u = (&s * &s).scale(c(-1.0, 0.0));
        u.coeffs_mut()[0] += c(1.0, 0.0);
        let mut e = u.recip().scale(c(-1.0, 0.0));
        e.coeffs_mut()[0] += c(1.0, 0.0);
        e.exp()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    Ball { center: ComplexPoint, radius: f64 },
    Ellipsoid { a: Vec<f64> },
    /// `|z|² − 1 − ε·bump(Re z_1)`.
    PerturbedBall { epsilon: f64, bump: Bump },
    /// `2 Re Σ a_α z_α − c < 0`.
    HalfSpace { a: ComplexPoint, c: f64 },
}

/// Jet in `w` of `f ∘ m⁻¹` from the jet of `f` at `m⁻¹(w)`: substitutes
/// `h_base = (sU)⁻¹ h` and its conjugate.
pub fn pullback_jet(m: &Similarity, base: &Jet<Complex64>) -> Jet<Complex64> {
    let basis = base.basis().clone();
    let n = m.b.len();
    if basis.order() == 0 {
        return base.clone();
    }
    let mut images = Vec::with_capacity(2 * n);
    let mut conj_images = Vec::with_capacity(n);
    let mut e = vec![c(0.0, 0.0); n];
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        e.iter_mut().for_each(|x| *x = c(0.0, 0.0));
        e[j] = c(1.0, 0.0);
        cols.push(m.linear_inverse(&e));
    }
    for k in 0..n {
        let mut img = Jet::zero(&basis);
        let mut img_bar = Jet::zero(&basis);
        for (j, col) in cols.iter().enumerate() {
            img.coeffs_mut()[1 + j] = col[k];
            img_bar.coeffs_mut()[1 + n + j] = col[k].conj();
        }
        images.push(img);
        conj_images.push(img_bar);
    }
    images.extend(conj_images);
    let mut shifted = base.clone();
    shifted.coeffs_mut()[0] = c(0.0, 0.0);
    let mut out = shifted.substitute(&basis, &images);
    out.coeffs_mut()[0] = base.value();
    out
}

/// `w = s·U·z + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub s: Complex64,
    /// Row-major unitary matrix.
    pub u: Vec<Vec<Complex64>>,
    pub b: ComplexPoint,
}

impl Similarity {
    pub fn identity(n: usize) -> Self {
        let u = (0..n)
            .map(|i| (0..n).map(|j| if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) }).collect())
            .collect();
        Similarity { s: c(1.0, 0.0), u, b: vec![c(0.0, 0.0); n] }
    }

    /// `s·U·v` without translation.
    pub fn linear(&self, v: &[Complex64]) -> ComplexPoint {
        self.u.iter().map(|row| self.s * row.iter().zip(v).map(|(a, x)| a * x).sum::<Complex64>()).collect()
    }

    /// `(s·U)⁻¹·v`.
    pub fn linear_inverse(&self, v: &[Complex64]) -> ComplexPoint {
        let n = v.len();
        (0..n)
            .map(|j| (0..n).map(|i| self.u[i][j].conj() * v[i]).sum::<Complex64>() / self.s)
            .collect()
    }

    pub fn apply(&self, z: &[Complex64]) -> ComplexPoint {
        add(&self.linear(z), &self.b)
    }

    pub fn inverse(&self, w: &[Complex64]) -> ComplexPoint {
        self.linear_inverse(&sub(w, &self.b))
    }

    pub fn dilation(&self) -> f64 {
        self.s.norm()
    }

    fn compose(&self, inner: &Similarity) -> Similarity {
        let n = self.b.len();
        let u = (0..n)
            .map(|i| (0..n).map(|j| (0..n).map(|k| self.u[i][k] * inner.u[k][j]).sum()).collect())
            .collect();
        Similarity { s: self.s * inner.s, u, b: self.apply(&inner.b) }
    }
}

/// Haar-distributed random unitary matrix (row-major).
pub fn random_unitary(n: usize, rng: &mut impl Rng) -> Vec<Vec<Complex64>> {
    let mut cols: Vec<ComplexPoint> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: ComplexPoint =
            (0..n).map(|_| c(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
        for q in &cols {
            let proj = hermitian(&v, q);
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= proj * qi;
            }
        }
        let nv = norm(&v);
        if nv > 1e-8 {
            cols.push(scale(&v, 1.0 / nv));
        }
    }
    (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
}

/// A point on the boundary with its outward complex unit normal.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryPoint {
    pub x: ComplexPoint,
    pub normal: ComplexPoint,
    /// Typical distance to neighbouring samples.
    pub spacing: f64,
}

/// Nearest-point data for an interior point.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryFrame {
    pub point: ComplexPoint,
    pub delta: f64,
    /// Inward unit normal as a complex vector.
    pub inward: ComplexPoint,
    /// `∂ψ(π(z))`.
    pub grad: ComplexPoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    n: usize,
    shape: Shape,
    map: Option<Similarity>,
}

impl DomainSpec {
    pub fn ball(n: usize, center: ComplexPoint, radius: f64) -> Result<Self> {
        if center.len() != n || radius <= 0.0 || !radius.is_finite() {
            return Err(Error::InvalidDomain(format!("ball needs {n} center coordinates and a positive radius")));
        }
        Self::checked(n, Shape::Ball { center, radius })
    }

    pub fn unit_ball(n: usize) -> Self {
        Self::ball(n, vec![c(0.0, 0.0); n], 1.0).expect("unit ball is valid")
    }

    pub fn ellipsoid(a: Vec<f64>) -> Result<Self> {
        if a.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidDomain("ellipsoid coefficients must be positive".into()));
        }
        Self::checked(a.len(), Shape::Ellipsoid { a })
    }

    pub fn perturbed_ball(n: usize, epsilon: f64, bump: Bump) -> Result<Self> {
        if !(epsilon.abs() <= 0.05) {
            return Err(Error::InvalidDomain("perturbation amplitude must satisfy |ε| ≤ 0.05".into()));
        }
        if !(bump.width > 0.0 && bump.width.is_finite() && bump.center.is_finite()) {
            return Err(Error::InvalidDomain("bump width must be positive".into()));
        }
        Self::checked(n, Shape::PerturbedBall { epsilon, bump })
    }

    pub fn half_space(a: ComplexPoint, level: f64) -> Result<Self> {
        if norm(&a) == 0.0 || !level.is_finite() {
            return Err(Error::InvalidDomain("half-space normal must be nonzero".into()));
        }
        let n = a.len();
        Self::checked(n, Shape::HalfSpace { a, c: level })
    }

    fn checked(n: usize, shape: Shape) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDomain("dimension must be at least 2".into()));
        }
        Ok(DomainSpec { n, shape, map: None })
    }

    /// Image of this domain under `map`.
    pub fn mapped(&self, map: Similarity) -> Result<Self> {
        if map.b.len() != self.n || map.u.len() != self.n || map.s.norm() == 0.0 {
            return Err(Error::InvalidDomain("similarity does not match the dimension".into()));
        }
        let map = match &self.map {
            Some(inner) => map.compose(inner),
            None => map,
        };
        Ok(DomainSpec { n: self.n, shape: self.shape.clone(), map: Some(map) })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn similarity(&self) -> Option<&Similarity> {
        self.map.as_ref()
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self.shape, Shape::HalfSpace { .. })
    }

    pub fn kind_name(&self) -> &'static str {
        match self.shape {
            Shape::Ball { .. } => "ball",
            Shape::Ellipsoid { .. } => "ellipsoid",
            Shape::PerturbedBall { .. } => "perturbed_ball",
            Shape::HalfSpace { .. } => "half_space",
        }
    }

    fn to_base(&self, z: &[Complex64]) -> ComplexPoint {
        match &self.map {
            Some(m) => m.inverse(z),
            None => z.to_vec(),
        }
    }

    fn from_base(&self, z: &[Complex64]) -> ComplexPoint {
        match &self.map {
            Some(m) => m.apply(z),
            None => z.to_vec(),
        }
    }

    fn base_scale(&self) -> f64 {
        self.map.as_ref().map_or(1.0, |m| m.dilation())
    }

    fn check_point(&self, z: &[Complex64]) -> Result<()> {
        if z.len() != self.n {
            return Err(Error::InvalidInput(format!("expected {} coordinates, got {}", self.n, z.len())));
        }
        if z.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
            return Err(Error::InvalidInput("non-finite coordinate".into()));
        }
        Ok(())
    }

    fn base_psi(&self, z: &[Complex64]) -> f64 {
        match &self.shape {
            Shape::Ball { center, radius } => norm_sq(&sub(z, center)) - radius * radius,
            Shape::Ellipsoid { a } => a.iter().zip(z).map(|(a, x)| a * x.norm_sqr()).sum::<f64>() - 1.0,
            Shape::PerturbedBall { epsilon, bump } => norm_sq(z) - 1.0 - epsilon * bump.value(z[0].re),
            Shape::HalfSpace { a, c } => 2.0 * a.iter().zip(z).map(|(a, x)| a * x).sum::<Complex64>().re - c,
        }
    }

    /// Defining function value.
    pub fn psi(&self, z: &[Complex64]) -> f64 {
        self.base_psi(&self.to_base(z))
    }

    pub fn contains(&self, z: &[Complex64]) -> bool {
        self.psi(z) < 0.0
    }

    fn base_psi_jet(&self, z: &[Complex64], order: usize) -> Jet<Complex64> {
        let n = self.n;
        let basis = wirtinger_basis(n, order);
        let holo = |k: usize, v: Complex64| Jet::variable(&basis, k, v);
        let anti = |k: usize, v: Complex64| Jet::variable(&basis, n + k, v.conj());
        let mut out = Jet::zero(&basis);
        match &self.shape {
            Shape::Ball { center, radius } => {
                for k in 0..n {
                    let d = z[k] - center[k];
                    holo(k, d).mul_acc(&anti(k, d), &mut out);
                }
                out.coeffs_mut()[0] -= c(radius * radius, 0.0);
            }
            Shape::Ellipsoid { a } => {
                for k in 0..n {
                    holo(k, z[k]).scale(c(a[k], 0.0)).mul_acc(&anti(k, z[k]), &mut out);
                }
                out.coeffs_mut()[0] -= c(1.0, 0.0);
            }
            Shape::PerturbedBall { epsilon, bump } => {
                for k in 0..n {
                    holo(k, z[k]).mul_acc(&anti(k, z[k]), &mut out);
                }
                out.coeffs_mut()[0] -= c(1.0, 0.0);
                let x1 = (&holo(0, z[0]) + &anti(0, z[0])).scale(c(0.5, 0.0));
                out.add_scaled(&bump.jet(&x1), c(-epsilon, 0.0));
            }
            Shape::HalfSpace { a, c: level } => {
                for k in 0..n {
                    out.add_scaled(&holo(k, z[k]), a[k]);
                    out.add_scaled(&anti(k, z[k]), a[k].conj());
                }
                out.coeffs_mut()[0] -= c(*level, 0.0);
            }
        }
        out
    }

    /// Wirtinger jet of ψ at `z`: the coefficient of `h^A conj(h)^B` is
    /// `D^{AB̄}ψ(z)/(A!B!)`.
    pub fn psi_jet(&self, z: &[Complex64], order: usize) -> Result<Jet<Complex64>> {
        self.check_point(z)?;
        if order > 4 {
            return Err(Error::InvalidInput(format!("ψ jets are supported up to order 4, got {order}")));
        }
        let base = self.base_psi_jet(&self.to_base(z), order);
        Ok(match &self.map {
            None => base,
            Some(m) => pullback_jet(m, &base),
        })
    }

    /// Complex gradient `∂ψ = (∂ψ/∂z_1, …, ∂ψ/∂z_n)`.
    pub fn grad(&self, z: &[Complex64]) -> ComplexPoint {
        let j = self.psi_jet(z, 1).expect("valid point");
        j.coeffs()[1..=self.n].to_vec()
    }

    /// `(Σ |∂ψ/∂z_α|²)^{1/2}`.
    pub fn grad_norm(&self, z: &[Complex64]) -> f64 {
        norm(&self.grad(z))
    }

    /// Matrix `ψ_{αβ̄}(z)`.
    pub fn levi_matrix(&self, z: &[Complex64]) -> Vec<Vec<Complex64>> {
        let n = self.n;
        let j = self.psi_jet(z, 2).expect("valid point");
        let mut m = vec![vec![c(0.0, 0.0); n]; n];
        let mut e = vec![0u8; 2 * n];
        for a in 0..n {
            for b in 0..n {
                e.iter_mut().for_each(|x| *x = 0);
                e[a] += 1;
                e[n + b] += 1;
                m[a][b] = j.derivative(&e);
            }
        }
        m
    }

    /// `Σ ψ_{αβ̄}(p) v^α conj(v^β)`.
    pub fn levi_form(&self, p: &[Complex64], v: &[Complex64]) -> f64 {
        let m = self.levi_matrix(p);
        let mut s = c(0.0, 0.0);
        for (a, row) in m.iter().enumerate() {
            for (b, x) in row.iter().enumerate() {
                s += x * v[a] * v[b].conj();
            }
        }
        s.re
    }

    /// Outward complex unit normal `conj(∂ψ)/|∂ψ|`.
    pub fn outward_normal(&self, x: &[Complex64]) -> ComplexPoint {
        let g = self.grad(x);
        let gn = norm(&g);
        g.iter().map(|v| v.conj() / gn).collect()
    }

    /// Point in the base shape where the ray from the star center in
    /// direction `omega` (unit) meets the boundary.
    fn base_radial(&self, omega: &[Complex64]) -> ComplexPoint {
        match &self.shape {
            Shape::Ball { center, radius } => axpy(center, *radius, omega),
            Shape::Ellipsoid { a } => {
                let q: f64 = a.iter().zip(omega).map(|(a, w)| a * w.norm_sqr()).sum();
                scale(omega, 1.0 / q.sqrt())
            }
            Shape::PerturbedBall { epsilon, bump } => {
                let x = omega[0].re;
                let mut r = 1.0;
                for _ in 0..60 {
                    let f = r * r - 1.0 - epsilon * bump.value(r * x);
                    let df = 2.0 * r - epsilon * bump.derivative(r * x) * x;
                    let step = f / df;
                    r -= step;
                    if step.abs() < 1e-15 {
                        break;
                    }
                }
                scale(omega, r)
            }
            Shape::HalfSpace { .. } => unreachable!("half-space has no radial parametrization"),
        }
    }

    fn base_center(&self) -> ComplexPoint {
        match &self.shape {
            Shape::Ball { center, .. } => center.clone(),
            _ => vec![c(0.0, 0.0); self.n],
        }
    }

    /// Star center of the domain.
    pub fn center(&self) -> ComplexPoint {
        self.from_base(&self.base_center())
    }

    /// Boundary point on the ray from the star center through the direction
    /// `omega` given in base coordinates.
    pub(crate) fn boundary_from_base_direction(&self, omega: &[Complex64]) -> BoundaryPoint {
        let xb = self.base_radial(omega);
        let x = self.from_base(&xb);
        let normal = self.outward_normal(&x);
        BoundaryPoint { x, normal, spacing: 0.0 }
    }

    /// Direction in base coordinates pointing from the star center to `z`.
    pub(crate) fn base_direction(&self, z: &[Complex64]) -> Option<ComplexPoint> {
        let d = sub(&self.to_base(z), &self.base_center());
        let r = norm(&d);
        (r > 0.0).then(|| scale(&d, 1.0 / r))
    }

    /// Radial projection of `z` onto the boundary.
    pub fn radial_projection(&self, z: &[Complex64]) -> Result<ComplexPoint> {
        if !self.is_bounded() {
            return Err(Error::InvalidDomain("radial projection needs a bounded domain".into()));
        }
        let dir = self.base_direction(z).ok_or_else(|| Error::InvalidInput("radial projection at the center".into()))?;
        Ok(self.from_base(&self.base_radial(&dir)))
    }

    /// Quasi-uniform boundary samples.
    pub fn boundary_sample(&self, m: usize, seed: u64) -> Result<Vec<BoundaryPoint>> {
        if !self.is_bounded() {
            return Err(Error::InvalidDomain("cannot sample the boundary of an unbounded domain".into()));
        }
        if m < 8 {
            return Err(Error::InvalidInput("need at least 8 boundary samples".into()));
        }
        let dirs = sphere_directions(self.n, m, seed);
        let spacing0 = (sphere_area(self.n) / m as f64).powf(1.0 / (2 * self.n - 1) as f64);
        Ok(dirs
            .iter()
            .map(|w| {
                let mut bp = self.boundary_from_base_direction(w);
                bp.spacing = spacing0 * norm(&sub(&bp.x, &self.center()));
                bp
            })
            .collect())
    }

    /// Closest boundary point with distance and inward normal.
    pub fn nearest_boundary(&self, z: &[Complex64]) -> Result<BoundaryFrame> {
        self.check_point(z)?;
        if !self.contains(z) {
            return Err(Error::InvalidInput("point is not inside the domain".into()));
        }
        let zb = self.to_base(z);
        let (xb, delta_b) = self.base_nearest(&zb)?;
        let point = self.from_base(&xb);
        let grad = self.grad(&point);
        let gn = norm(&grad);
        let inward = grad.iter().map(|g| -g.conj() / gn).collect();
        Ok(BoundaryFrame { point, delta: delta_b * self.base_scale(), inward, grad })
    }

    fn base_nearest(&self, z: &[Complex64]) -> Result<(ComplexPoint, f64)> {
        let n = self.n;
        match &self.shape {
            Shape::Ball { center, radius } => {
                let d = sub(z, center);
                let r = norm(&d);
                if r == 0.0 {
                    return Err(Error::OutsideTube("the center of a ball has no unique nearest boundary point".into()));
                }
                Ok((axpy(center, radius / r, &d), radius - r))
            }
            Shape::HalfSpace { a, c: level } => {
                let an = norm(a);
                let psi = self.base_psi(z);
                // conj(a) is the real gradient direction of 2 Re⟨z, conj a⟩
                let step = -psi / (2.0 * an * an);
                let x: ComplexPoint = z.iter().zip(a).map(|(zi, ai)| zi + ai.conj() * step).collect();
                let _ = level;
                Ok((x, psi.abs() / (2.0 * an)))
            }
            _ => {
                let dir = self.base_direction(z).ok_or_else(|| {
                    Error::OutsideTube("no unique nearest boundary point at the center".into())
                })?;
                // Newton can settle on a far stationary point, so keep the
                // closest local minimizer over several starts
                let mut starts: Vec<ComplexPoint> = sphere_directions(n, 64, 11).iter().map(|w| self.base_radial(w)).collect();
                starts.sort_by(|a, b| norm(&sub(a, z)).total_cmp(&norm(&sub(b, z))));
                starts.truncate(4);
                starts.insert(0, self.base_radial(&dir));
                let mut best: Option<(ComplexPoint, f64)> = None;
                let mut stationary = false;
                for x0 in starts {
                    let Some((x, mu)) = self.base_newton_nearest(z, x0) else { continue };
                    stationary = true;
                    let jet = self.base_psi_jet(&x, 2);
                    let (g, h) = real_gradient_hessian(&jet, n);
                    // second-order condition: the distance is minimized, not merely stationary
                    if mu <= 0.0 || tangent_min_eig(&g, &h, mu) <= 0.0 {
                        continue;
                    }
                    let d = norm(&sub(&x, z));
                    if best.as_ref().is_none_or(|b| d < b.1 - 1e-12) {
                        best = Some((x, d));
                    }
                }
                match best {
                    Some(b) => Ok(b),
                    None if stationary => Err(Error::OutsideTube("point lies beyond the tubular neighbourhood".into())),
                    None => Err(Error::NoConvergence("nearest boundary point".into())),
                }
            }
        }
    }

    /// Newton on the Lagrange system `x − z = μ∇ψ(x)`, `ψ(x) = 0` from `x`.
    fn base_newton_nearest(&self, z: &[Complex64], mut x: ComplexPoint) -> Option<(ComplexPoint, f64)> {
        let n = self.n;
        // unknowns: real coordinates of x and the multiplier μ
        let dim = 2 * n;
        let unpack = |v: &[Complex64]| -> Vec<f64> { v.iter().flat_map(|c| [c.re, c.im]).collect() };
        let zr = unpack(z);
        let mut mu = 0.0;
        for _ in 0..100 {
            let jet = self.base_psi_jet(&x, 2);
            let (g, h) = real_gradient_hessian(&jet, n);
            let xr = unpack(&x);
            let psi = jet.value().re;
            if mu == 0.0 {
                let gg: f64 = g.iter().map(|v| v * v).sum();
                mu = g.iter().zip(xr.iter().zip(&zr)).map(|(gi, (xi, zi))| gi * (xi - zi)).sum::<f64>() / gg;
            }
            let mut f = vec![0.0; dim + 1];
            for i in 0..dim {
                f[i] = xr[i] - zr[i] - mu * g[i];
            }
            f[dim] = psi;
            let res = f.iter().map(|v| v.abs()).fold(0.0, f64::max);
            if !res.is_finite() {
                return None;
            }
            if res < 1e-13 {
                return Some((x, mu));
            }
            let jac = Mat::<f64>::from_fn(dim + 1, dim + 1, |i, j| {
                if i < dim && j < dim {
                    (if i == j { 1.0 } else { 0.0 }) - mu * h[i][j]
                } else if i < dim {
                    -g[i]
                } else if j < dim {
                    g[j]
                } else {
                    0.0
                }
            });
            let rhs = Mat::<f64>::from_fn(dim + 1, 1, |i, _| -f[i]);
            let step = jac.partial_piv_lu().solve(&rhs);
            let len = (0..dim).map(|i| step[(i, 0)] * step[(i, 0)]).sum::<f64>().sqrt();
            let cap = 0.25 * norm(&sub(&x, z)).max(1e-3);
            let damp = if len > cap { cap / len } else { 1.0 };
            for k in 0..n {
                x[k] += c(step[(2 * k, 0)], step[(2 * k + 1, 0)]) * damp;
            }
            mu += step[(dim, 0)] * damp;
        }
        None
    }

    /// Decomposition `v = v_H + v_N` at the nearest boundary point of `z`.
    pub fn split_vector(&self, z: &[Complex64], v: &[Complex64]) -> Result<(ComplexPoint, ComplexPoint)> {
        let frame = self.nearest_boundary(z)?;
        Ok(split_at_gradient(&frame.grad, v))
    }

    /// Lower bound for the Levi form on boundary samples, as the smallest
    /// eigenvalue of `ψ_{αβ̄}` over `m` samples.
    pub fn min_levi_eigenvalue(&self, m: usize, seed: u64) -> Result<f64> {
        let samples = self.boundary_sample(m, seed)?;
        let mut worst = f64::INFINITY;
        for bp in &samples {
            let lev = self.levi_matrix(&bp.x);
            worst = worst.min(min_hermitian_eigenvalue(&lev));
        }
        Ok(worst)
    }
}

/// Split of `v` into the part orthogonal to `conj(grad)` and the part along it.
pub fn split_at_gradient(grad: &[Complex64], v: &[Complex64]) -> (ComplexPoint, ComplexPoint) {
    let gbar: ComplexPoint = grad.iter().map(|g| g.conj()).collect();
    let coef = hermitian(v, &gbar) / norm_sq(&gbar);
    let vn: ComplexPoint = gbar.iter().map(|g| coef * g).collect();
    let vh = sub(v, &vn);
    (vh, vn)
}

pub fn min_hermitian_eigenvalue(m: &[Vec<Complex64>]) -> f64 {
    let n = m.len();
    let mat = Mat::<Complex64>::from_fn(n, n, |i, j| m[i][j]);
    let ev = mat.self_adjoint_eigenvalues(faer::Side::Lower).expect("hermitian eigenvalues");
    ev[0]
}

/// Real gradient and Hessian in coordinates `[x_1, y_1, …]` from a
/// Wirtinger jet of order ≥ 2 of a real function.
pub fn real_gradient_hessian(jet: &Jet<Complex64>, n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut e = vec![0u8; 2 * n];
    let mut d = |idx: &[usize]| -> Complex64 {
        e.iter_mut().for_each(|x| *x = 0);
        for &i in idx {
            e[i] += 1;
        }
        jet.derivative(&e)
    };
    let i = c(0.0, 1.0);
    let mut g = vec![0.0; 2 * n];
    for a in 0..n {
        let fz = d(&[a]);
        g[2 * a] = 2.0 * fz.re;
        g[2 * a + 1] = -2.0 * fz.im;
    }
    let mut h = vec![vec![0.0; 2 * n]; 2 * n];
    for a in 0..n {
        for b in 0..n {
            let zz = d(&[a, b]);
            let zzb = d(&[a, n + b]);
            let zbz = d(&[n + a, b]);
            let zbzb = d(&[n + a, n + b]);
            // ∂_x = ∂ + ∂̄, ∂_y = i(∂ − ∂̄)
            let xx = zz + zzb + zbz + zbzb;
            let xy = i * (zz - zzb + zbz - zbzb);
            let yy = -(zz - zzb - zbz + zbzb);
            h[2 * a][2 * b] = xx.re;
            h[2 * a][2 * b + 1] = xy.re;
            h[2 * a + 1][2 * b] = (i * (zz + zzb - zbz - zbzb)).re;
            h[2 * a + 1][2 * b + 1] = yy.re;
        }
    }
    (g, h)
}

/// Smallest eigenvalue of `I − μH` restricted to the tangent space `g^⊥`.
fn tangent_min_eig(g: &[f64], h: &[Vec<f64>], mu: f64) -> f64 {
    let d = g.len();
    let gn: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let proj = |i: usize, j: usize| (if i == j { 1.0 } else { 0.0 }) - g[i] * g[j] / (gn * gn);
    let a = Mat::<f64>::from_fn(d, d, |i, j| (if i == j { 1.0 } else { 0.0 }) - mu * h[i][j]);
    let p = Mat::<f64>::from_fn(d, d, proj);
    // the normal direction contributes eigenvalue 1 after the shift below
    let pap = &p * &a * &p + (Mat::<f64>::identity(d, d) - &p);
    let ev = pap.self_adjoint_eigenvalues(faer::Side::Lower).expect("symmetric eigenvalues");
    ev[0]
}

/// Surface area of the unit sphere in `R^{2n}`.
pub fn sphere_area(n: usize) -> f64 {
    let fact: f64 = (1..n).map(|k| k as f64).product();
    2.0 * PI.powi(n as i32) / fact
}

/// Quasi-uniform unit directions in `C^n`, deterministic in `seed`.
///
/// For `n = 2` a super-Fibonacci spiral on `S³` under a seeded random
/// unitary; otherwise normalized Gaussian samples.
pub fn sphere_directions(n: usize, m: usize, seed: u64) -> Vec<ComplexPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if n == 2 {
        let phi = 2f64.sqrt();
        let psi = 1.533751168755204288118041;
        let u = random_unitary(2, &mut rng);
        (0..m)
            .map(|i| {
                let s = i as f64 + 0.5;
                let r = (s / m as f64).sqrt();
                let big_r = (1.0 - s / m as f64).sqrt();
                let alpha = 2.0 * PI * s / phi;
                let beta = 2.0 * PI * s / psi;
                let q = [Complex64::from_polar(r, alpha), Complex64::from_polar(big_r, beta)];
                vec![u[0][0] * q[0] + u[0][1] * q[1], u[1][0] * q[0] + u[1][1] * q[1]]
            })
            .collect()
    } else {
        (0..m)
            .map(|_| {
                let v: ComplexPoint =
                    (0..n).map(|_| c(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
                let nv = norm(&v);
                scale(&v, 1.0 / nv)
            })
            .collect()
    }
}

/// Möbius map of the unit sphere concentrating directions toward `e`: the
/// stereographic image from `−e` is scaled by `eps`.
pub fn concentrate(omega: &[Complex64], e: &[Complex64], eps: f64) -> ComplexPoint {
    let dot = hermitian(omega, e).re;
    let denom = 1.0 + dot;
    let y: ComplexPoint = omega.iter().zip(e).map(|(w, ei)| (w - ei * dot) / denom).collect();
    let y = scale(&y, eps);
    let y2 = norm_sq(&y);
    let out: ComplexPoint = e.iter().zip(&y).map(|(ei, yi)| (ei * (1.0 - y2) + yi * 2.0) / (1.0 + y2)).collect();
    let nv = norm(&out);
    scale(&out, 1.0 / nv)
}
