//! The kernel `K(x, p) = |x − p|^{−2n+2}`, its Wirtinger jets, and the
//! closed-form Robin functions of balls and half-spaces.

use std::fmt;

use num_complex::Complex64;
use serde::Serialize;

use crate::domain::{c, norm_sq, sub, ComplexPoint};
use crate::jet::{exponent_factorial, join_multi_index, split_multi_index, wirtinger_basis, Jet};
use crate::{Error, Result};

pub const MAX_ORDER: usize = 4;

pub fn kernel(x: &[Complex64], p: &[Complex64]) -> f64 {
    let n = x.len();
    let u = norm_sq(&sub(x, p));
    u.powi(-(n as i32 - 1))
}

/// Pair of holomorphic and antiholomorphic multi-indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct MultiIndexPair {
    pub a: Vec<u8>,
    pub b: Vec<u8>,
}

impl MultiIndexPair {
    pub fn new(a: Vec<u8>, b: Vec<u8>) -> Self {
        MultiIndexPair { a, b }
    }

    pub fn empty(n: usize) -> Self {
        MultiIndexPair { a: vec![0; n], b: vec![0; n] }
    }

    pub fn order(&self) -> usize {
        self.a.iter().chain(&self.b).map(|&e| e as usize).sum()
    }

    pub fn exponents(&self) -> Vec<u8> {
        join_multi_index(&self.a, &self.b)
    }

    pub fn swapped(&self) -> Self {
        MultiIndexPair { a: self.b.clone(), b: self.a.clone() }
    }
}

fn fmt_index(v: &[u8]) -> String {
    let parts: Vec<String> = v.iter().map(|e| e.to_string()).collect();
    format!("({})", parts.join(";"))
}

impl fmt::Display for MultiIndexPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}", fmt_index(&self.a), fmt_index(&self.b))
    }
}

/// All pairs with `|A| + |B| ≤ order` in graded lexicographic order.
pub fn multi_indices(n: usize, order: usize) -> Vec<MultiIndexPair> {
    let basis = wirtinger_basis(n, order);
    (0..basis.len())
        .map(|i| {
            let (a, b) = split_multi_index(basis.exponents(i));
            MultiIndexPair::new(a.to_vec(), b.to_vec())
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JetSource {
    ClosedForm,
    Collocation,
    FiniteDifference,
    DoublePoisson,
}

/// `D^{AB̄}Λ(p)` for all `|A| + |B| ≤ order`, stored as a Wirtinger Taylor jet.
#[derive(Clone, Debug)]
pub struct RobinJet {
    pub p: ComplexPoint,
    pub jet: Jet<Complex64>,
    /// Error estimate per monomial of `jet`, in derivative units.
    pub err_est: Vec<f64>,
    pub source: JetSource,
    /// Set when the underlying solve is not trusted at the requested order.
    pub flag: Option<String>,
}

impl RobinJet {
    pub fn exact(p: ComplexPoint, jet: Jet<Complex64>, source: JetSource) -> Self {
        let len = jet.coeffs().len();
        RobinJet { p, jet, err_est: vec![0.0; len], source, flag: None }
    }

    pub fn n(&self) -> usize {
        self.p.len()
    }

    pub fn order(&self) -> usize {
        self.jet.basis().order()
    }

    /// `Λ(p)`.
    pub fn lambda(&self) -> f64 {
        self.jet.value().re
    }

    /// `D^{AB̄}Λ(p)`.
    pub fn value(&self, idx: &MultiIndexPair) -> Complex64 {
        self.jet.derivative(&idx.exponents())
    }

    /// Derivative addressed by lists of holomorphic and antiholomorphic
    /// variable indices, e.g. `d(&[0], &[1])` is `∂²Λ/∂z_1∂z̄_2`.
    pub fn d(&self, holo: &[usize], anti: &[usize]) -> Complex64 {
        let n = self.n();
        let mut e = vec![0u8; 2 * n];
        for &i in holo {
            e[i] += 1;
        }
        for &j in anti {
            e[n + j] += 1;
        }
        self.jet.derivative(&e)
    }

    pub fn err(&self, idx: &MultiIndexPair) -> f64 {
        let i = self.jet.basis().index_of(&idx.exponents()).expect("index within jet order");
        self.err_est[i]
    }

    pub fn entries(&self) -> Vec<(MultiIndexPair, Complex64, f64)> {
        let basis = self.jet.basis();
        (0..basis.len())
            .map(|i| {
                let e = basis.exponents(i);
                let (a, b) = split_multi_index(e);
                (MultiIndexPair::new(a.to_vec(), b.to_vec()), self.jet.coeffs()[i] * exponent_factorial(e), self.err_est[i])
            })
            .collect()
    }

    pub fn truncate(&self, order: usize) -> RobinJet {
        let jet = self.jet.truncate(order);
        let err_est = self.err_est[..jet.coeffs().len()].to_vec();
        RobinJet { p: self.p.clone(), jet, err_est, source: self.source, flag: self.flag.clone() }
    }
}

/// Wirtinger jet of `u = |x − p|²` in the variable `p` around the given `p`.
pub(crate) fn distance_sq_jet(x: &[Complex64], p: &[Complex64], order: usize) -> Jet<Complex64> {
    let n = x.len();
    let basis = wirtinger_basis(n, order);
    let mut u = Jet::zero(&basis);
    let d = sub(x, p);
    {
        let cs = u.coeffs_mut();
        cs[0] = c(norm_sq(&d), 0.0);
        if order >= 1 {
            for a in 0..n {
                cs[1 + a] = -d[a].conj();
                cs[1 + n + a] = -d[a];
            }
        }
    }
    if order >= 2 {
        let mut e = vec![0u8; 2 * n];
        for a in 0..n {
            e.iter_mut().for_each(|x| *x = 0);
            e[a] = 1;
            e[n + a] = 1;
            let i = basis.index_of(&e).expect("second-order monomial");
            u.coeffs_mut()[i] = c(1.0, 0.0);
        }
    }
    u
}

/// Wirtinger jet in `p` of `K(x, p)` up to total order `upto`.
pub fn kernel_jet(x: &[Complex64], p: &[Complex64], upto: usize) -> Result<Jet<Complex64>> {
    if upto > MAX_ORDER {
        return Err(Error::InvalidInput(format!("kernel jets are limited to order {MAX_ORDER}")));
    }
    if x.len() != p.len() {
        return Err(Error::InvalidInput("dimension mismatch".into()));
    }
    let u = distance_sq_jet(x, p, upto);
    if u.value().re == 0.0 {
        return Err(Error::InvalidInput("kernel jet requested at its pole".into()));
    }
    Ok(kernel_from_distance(&u, x.len()))
}

/// `u^{−(n−1)}` as a Taylor composition.
pub(crate) fn kernel_from_distance(u: &Jet<Complex64>, n: usize) -> Jet<Complex64> {
    let order = u.basis().order();
    let u0 = u.value().re;
    let alpha = -(n as f64 - 1.0);
    let mut series = Vec::with_capacity(order + 1);
    let mut binom = 1.0;
    for k in 0..=order {
        series.push(c(binom * u0.powf(alpha - k as f64), 0.0));
        binom *= (alpha - k as f64) / (k as f64 + 1.0);
    }
    u.compose(&series)
}

/// Robin jet of the half-space `{2 Re Σ a_α z_α − 1 < 0}`.
pub fn halfspace_robin_jet(a: &[Complex64], p: &[Complex64], upto: usize) -> Result<RobinJet> {
    let n = a.len();
    if upto > MAX_ORDER {
        return Err(Error::InvalidInput(format!("Robin jets are limited to order {MAX_ORDER}")));
    }
    if norm_sq(a) == 0.0 || p.len() != n {
        return Err(Error::InvalidInput("half-space normal must be nonzero and match p".into()));
    }
    let level = 1.0 - 2.0 * a.iter().zip(p).map(|(x, y)| x * y).sum::<Complex64>().re;
    if level <= 0.0 {
        return Err(Error::InvalidInput("p is not inside the half-space".into()));
    }
    let basis = wirtinger_basis(n, upto);
    let m = 2.0 * n as f64 - 2.0;
    let amp = norm_sq(a).powf(n as f64 - 1.0);
    let coeffs = (0..basis.len())
        .map(|i| {
            let e = basis.exponents(i);
            let (ea, eb) = split_multi_index(e);
            let k = basis.degree(i);
            let mut mono = c(1.0, 0.0);
            for (j, &x) in ea.iter().enumerate() {
                mono *= a[j].powi(x as i32);
            }
            for (j, &x) in eb.iter().enumerate() {
                mono *= a[j].conj().powi(x as i32);
            }
            let ladder: f64 = (0..k).map(|j| m + j as f64).product();
            let d = -amp * ladder * level.powf(-m - k as f64) * mono;
            d / exponent_factorial(e)
        })
        .collect();
    Ok(RobinJet::exact(p.to_vec(), Jet::from_coeffs(&basis, coeffs), JetSource::ClosedForm))
}

/// Robin jet of the ball `B(center, r)`.
pub fn ball_robin_jet(center: &[Complex64], r: f64, p: &[Complex64], upto: usize) -> Result<RobinJet> {
    let n = center.len();
    if upto > MAX_ORDER {
        return Err(Error::InvalidInput(format!("Robin jets are limited to order {MAX_ORDER}")));
    }
    if p.len() != n {
        return Err(Error::InvalidInput("dimension mismatch".into()));
    }
    let d2 = norm_sq(&sub(p, center));
    if d2 >= r * r {
        return Err(Error::InvalidInput("p is not inside the ball".into()));
    }
    // u = r² − |p − center|²
    let mut u = distance_sq_jet(center, p, upto).scale(c(-1.0, 0.0));
    u.coeffs_mut()[0] += c(r * r, 0.0);
    let m = 2.0 * n as f64 - 2.0;
    let jet = u.powf(-m).scale(c(-r.powf(m), 0.0));
    Ok(RobinJet::exact(p.to_vec(), jet, JetSource::ClosedForm))
}
