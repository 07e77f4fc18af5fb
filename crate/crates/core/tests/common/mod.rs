#![allow(dead_code)]

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use robinfield::potential::RobinJet;
use robinfield::{c, ComplexPoint, DomainSpec};

/// Polynomial in `h_1..h_n, h̄_1..h̄_n`, keyed by exponent vectors.
#[derive(Clone, Debug, Default)]
pub struct Poly(pub BTreeMap<Vec<u8>, Complex64>);

impl Poly {
    pub fn constant(nv: usize, v: Complex64) -> Self {
        Poly(BTreeMap::from([(vec![0; nv], v)]))
    }

    pub fn add_term(&mut self, e: Vec<u8>, v: Complex64) {
        *self.0.entry(e).or_insert(c(0.0, 0.0)) += v;
    }

    /// Product truncated at total degree `max`.
    pub fn mul(&self, o: &Poly, max: usize) -> Poly {
        let mut out = Poly::default();
        for (a, x) in &self.0 {
            for (b, y) in &o.0 {
                let e: Vec<u8> = a.iter().zip(b).map(|(i, j)| i + j).collect();
                if e.iter().map(|&k| k as usize).sum::<usize>() <= max {
                    out.add_term(e, x * y);
                }
            }
        }
        out
    }

    pub fn scaled(&self, s: f64) -> Poly {
        Poly(self.0.iter().map(|(e, v)| (e.clone(), v * s)).collect())
    }

    pub fn plus(&self, o: &Poly) -> Poly {
        let mut out = self.clone();
        for (e, v) in &o.0 {
            out.add_term(e.clone(), *v);
        }
        out
    }

    /// Derivative `∂^A ∂̄^B` at the origin.
    pub fn derivative(&self, e: &[u8]) -> Complex64 {
        let fact: f64 = e.iter().map(|&k| (1..=k as u32).product::<u32>() as f64).product();
        self.0.get(e).copied().unwrap_or(c(0.0, 0.0)) * fact
    }
}

/// `(s − q)^{−m}` expanded as `Σ_k C(m+k−1, k) q^k s^{−m−k}` to degree `max`,
/// where `q` has no constant term.
pub fn inverse_power_series(s: f64, q: &Poly, m: f64, max: usize, nv: usize) -> Poly {
    let mut out = Poly::default();
    let mut qk = Poly::constant(nv, c(1.0, 0.0));
    let mut binom = 1.0;
    for k in 0..=max {
        out = out.plus(&qk.scaled(binom * s.powf(-m - k as f64)));
        qk = qk.mul(q, max);
        binom *= (m + k as f64) / (k as f64 + 1.0);
    }
    out
}

/// `Σ_j (h_j w̄_j + w_j h̄_j) + sign·|h|²` as a polynomial.
pub fn hermitian_shift(w: &[Complex64], sign: f64) -> Poly {
    let n = w.len();
    let mut q = Poly::default();
    for j in 0..n {
        let mut e = vec![0u8; 2 * n];
        e[j] = 1;
        q.add_term(e.clone(), w[j].conj());
        e[j] = 0;
        e[n + j] = 1;
        q.add_term(e.clone(), w[j]);
        e[j] = 1;
        q.add_term(e, c(sign, 0.0));
    }
    q
}

/// Largest deviation between two jets relative to the largest entry of the
/// reference in the same total order.
pub fn rel_jet_err(got: &RobinJet, want: &RobinJet) -> f64 {
    let entries = want.entries();
    let mut scale = vec![0.0f64; want.order() + 1];
    for (idx, v, _) in &entries {
        scale[idx.order()] = scale[idx.order()].max(v.norm());
    }
    entries
        .iter()
        .filter(|(idx, _, _)| idx.order() <= got.order())
        .map(|(idx, v, _)| (got.value(idx) - v).norm() / scale[idx.order()].max(1e-300))
        .fold(0.0, f64::max)
}

/// Nested central Wirtinger differences of `f` at `z`, with one Richardson
/// step: `∂_j = (∂_x − i∂_y)/2`, `∂̄_j = (∂_x + i∂_y)/2`.
pub fn fd_wirtinger(f: &dyn Fn(&[Complex64]) -> Complex64, z: &[Complex64], e: &[u8], h: f64) -> Complex64 {
    let d = |h: f64| nested(f, z, e, h);
    (d(h / 2.0) * 4.0 - d(h)) / 3.0
}

fn nested(f: &dyn Fn(&[Complex64]) -> Complex64, z: &[Complex64], e: &[u8], h: f64) -> Complex64 {
    let n = z.len();
    let Some(k) = e.iter().position(|&x| x > 0) else { return f(z) };
    let mut rest = e.to_vec();
    rest[k] -= 1;
    let (j, anti) = if k < n { (k, false) } else { (k - n, true) };
    let shifted = |dz: Complex64| {
        let mut w = z.to_vec();
        w[j] += dz;
        nested(f, &w, &rest, h)
    };
    let dx = (shifted(c(h, 0.0)) - shifted(c(-h, 0.0))) / (2.0 * h);
    let dy = (shifted(c(0.0, h)) - shifted(c(0.0, -h))) / (2.0 * h);
    let i = c(0.0, 1.0);
    if anti {
        (dx + i * dy) * 0.5
    } else {
        (dx - i * dy) * 0.5
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vector(n: usize, rng: &mut ChaCha8Rng) -> ComplexPoint {
    (0..n).map(|_| c(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect()
}

/// Uniform points of the ball of radius `r` about the domain center that lie
/// inside the domain.
pub fn interior(domain: &DomainSpec, count: usize, r: f64, seed: u64) -> Vec<ComplexPoint> {
    let mut g = rng(seed);
    let n = domain.n();
    let o = domain.center();
    let mut out = Vec::new();
    while out.len() < count {
        let v = gaussian_vector(n, &mut g);
        let s = r * g.random::<f64>().powf(1.0 / (2 * n) as f64) / robinfield::domain::norm(&v);
        let z: ComplexPoint = o.iter().zip(&v).map(|(a, b)| a + b * s).collect();
        if domain.contains(&z) {
            out.push(z);
        }
    }
    out
}

pub fn all_exponents(n: usize, order: usize) -> Vec<Vec<u8>> {
    robinfield::potential::multi_indices(n, order).into_iter().map(|m| m.exponents()).collect()
}

use robinfield::domain::Bump;
use robinfield::metric::{curvature_at, f_r_length, metric_at};
use robinfield::robin::{ClosedForm, Numerical, RobinProvider};

/// Every supported shape with the provider used for it.
pub fn shapes() -> Vec<(&'static str, DomainSpec)> {
    vec![
        ("ball", DomainSpec::unit_ball(2)),
        ("ellipsoid", DomainSpec::ellipsoid(vec![1.0, 2.0]).unwrap()),
        ("perturbed_ball", DomainSpec::perturbed_ball(2, 0.02, Bump::default()).unwrap()),
        ("half_space", DomainSpec::half_space(vec![c(0.0, 0.0), c(0.5, 0.0)], 1.0).unwrap()),
    ]
}

pub fn numerical(d: &DomainSpec) -> Box<dyn RobinProvider> {
    Box::new(Numerical::new(d.clone(), robinfield::dirichlet::SolverConfig::default()))
}

/// Closed form where one exists, otherwise the collocation solver.
pub fn provider(d: &DomainSpec) -> Box<dyn RobinProvider> {
    match ClosedForm::new(d.clone()) {
        Ok(cf) => Box::new(cf),
        Err(_) => numerical(d),
    }
}

/// Interior point from unit-cube parameters: a fraction `t` of the way from
/// the center to the boundary along `dir`, or depth `t` for a half-space.
pub fn point_in(d: &DomainSpec, dir: &[f64; 4], t: f64) -> ComplexPoint {
    let v = vec![c(dir[0], dir[1]), c(dir[2], dir[3])];
    if !d.is_bounded() {
        // ψ = Re z_2 − 1 on the test half-space
        return vec![v[0], c(1.0 - 0.1 - 2.0 * t, v[1].im)];
    }
    let o = d.center();
    let w: ComplexPoint = o.iter().zip(&v).map(|(a, b)| a + b).collect();
    let x = d.radial_projection(&w).unwrap();
    o.iter().zip(&x).map(|(a, b)| a + (b - a) * t).collect()
}

/// Pointwise invariants of the Robin jet, metric and curvature at `z`.
pub fn point_invariants(p: &dyn RobinProvider, z: &[Complex64], v: &[Complex64], lam: Complex64) -> Result<(), String> {
    let jet = p.robin_jet(z, 4).map_err(|e| e.to_string())?;
    if !(jet.lambda() < 0.0) {
        return Err(format!("Λ = {} is not negative", jet.lambda()));
    }
    for (idx, x, _) in jet.entries() {
        let y = jet.value(&idx.swapped()).conj();
        if (x - y).norm() > 1e-9 * (1.0 + x.norm()) {
            return Err(format!("conjugation symmetry fails at {idx}: {x} vs {y}"));
        }
    }
    if !p.domain().is_bounded() {
        // Λ depends on the normal coordinate alone, so g has rank one
        return match metric_at(&jet) {
            Err(_) => Ok(()),
            Ok(_) => Err("half-space metric should be refused as degenerate".into()),
        };
    }
    let me = metric_at(&jet).map_err(|e| e.to_string())?;
    let n = me.n();
    let gs = me.g.iter().flatten().map(|x| x.norm()).fold(0.0, f64::max);
    for a in 0..n {
        for b in 0..n {
            if (me.g[a][b] - me.g[b][a].conj()).norm() > 1e-12 * gs {
                return Err("g is not Hermitian".into());
            }
        }
    }
    if !(me.min_eigenvalue() > 0.0) || !(me.det_g > 0.0) {
        return Err(format!("g is not positive definite: λ_min = {}", me.min_eigenvalue()));
    }
    if me.inverse_defect() > 1e-8 {
        return Err(format!("g·g⁻¹ − I = {}", me.inverse_defect()));
    }
    let dgs = me.dg.as_ref().map_or(0.0, |dg| dg.iter().flatten().flatten().map(|x| x.norm()).fold(0.0, f64::max));
    let kd = me.kahler_defect().ok_or("no third derivatives")?;
    if kd > 10.0 * me.jet_err + 1e-9 * dgs {
        return Err(format!("Kähler defect {kd} exceeds 10 × jet error {}", me.jet_err));
    }
    let f1 = f_r_length(&me, v);
    let lv: ComplexPoint = v.iter().map(|x| x * lam).collect();
    let f2 = f_r_length(&me, &lv);
    if (f2 - lam.norm() * f1).abs() > 1e-12 * f2.max(1e-300) {
        return Err(format!("F_R(λv) = {f2} but |λ|F_R(v) = {}", lam.norm() * f1));
    }
    let r1 = curvature_at(&me, v).map_err(|e| e.to_string())?;
    let r2 = curvature_at(&me, &lv).map_err(|e| e.to_string())?;
    if r1.numerator.im.abs() > 1e-8 * r1.numerator.norm().max(1.0) {
        return Err(format!("curvature numerator is not real: {}", r1.numerator));
    }
    if (r1.r - r2.r).abs() > 1e-9 * r1.r.abs().max(1.0) {
        return Err(format!("R(λv) = {} but R(v) = {}", r2.r, r1.r));
    }
    Ok(())
}

/// Two evaluations from independently built providers agree bit for bit.
pub fn deterministic(make: &dyn Fn() -> Box<dyn RobinProvider>, z: &[Complex64]) -> Result<(), String> {
    let a = make().robin_jet(z, 4).map_err(|e| e.to_string())?;
    let b = make().robin_jet(z, 4).map_err(|e| e.to_string())?;
    let same = a.jet.coeffs().iter().zip(b.jet.coeffs()).all(|(x, y)| x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits());
    if same && a.err_est == b.err_est {
        Ok(())
    } else {
        Err("repeated evaluation differs".into())
    }
}

/// `0 − tol ≤ G(z, p) ≤ |z − p|^{−2n+2} + tol` with `tol` ten times the
/// boundary residual.
pub fn maximum_principle(d: &DomainSpec, pole: &[Complex64], points: &[ComplexPoint]) -> Result<(), String> {
    let num = Numerical::new(d.clone(), robinfield::dirichlet::SolverConfig::default());
    let h = num.handle_for(pole).map_err(|e| e.to_string())?;
    let sol = h.solve_pole(pole, 0).map_err(|e| e.to_string())?;
    let tol = 10.0 * h.residual_check(&sol, &points[..4.min(points.len())]).map_err(|e| e.to_string())?.max_boundary;
    for z in points {
        if robinfield::domain::norm(&robinfield::domain::sub(z, pole)) < 1e-6 {
            continue;
        }
        let g = h.green_eval(&sol, z).map_err(|e| e.to_string())?;
        let k = robinfield::potential::kernel(z, pole);
        if g < -tol || g > k + tol {
            return Err(format!("G = {g} outside [0, {k}] at {z:?}"));
        }
    }
    Ok(())
}
