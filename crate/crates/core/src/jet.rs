//! Truncated multivariate Taylor polynomials.
//!
//! A [`Jet`] holds the Taylor coefficients of a function of `nvars` formal
//! variables up to a fixed total degree. Monomials are stored in graded
//! lexicographic order and the monomial tables are shared through a
//! process-wide cache, so jets over the same `(nvars, order)` pair are cheap
//! to create and combine.
//!
//! Wirtinger jets on `C^n` use `2n` variables: `h_1..h_n` followed by
//! `conj(h_1)..conj(h_n)`. The coefficient of `h^A conj(h)^B` equals
//! `D^{A,B} f / (A! B!)`.

use std::collections::HashMap;
use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;

/// Coefficient field of a jet.
pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn zero() -> Self;
    fn one() -> Self;
    fn real(x: f64) -> Self;
    fn powf(self, a: f64) -> Self;
    fn ln(self) -> Self;
    fn exp(self) -> Self;
    fn modulus(self) -> f64;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn real(x: f64) -> Self {
        x
    }
    fn powf(self, a: f64) -> Self {
        f64::powf(self, a)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn powf(self, a: f64) -> Self {
        if self.im == 0.0 && self.re > 0.0 {
            Complex64::new(self.re.powf(a), 0.0)
        } else {
            Complex64::powf(self, a)
        }
    }
    fn ln(self) -> Self {
        Complex64::ln(self)
    }
    fn exp(self) -> Self {
        Complex64::exp(self)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
}

/// Monomial table for a given number of variables and truncation order.
#[derive(Debug)]
pub struct Basis {
    nvars: usize,
    order: usize,
    exps: Vec<Box<[u8]>>,
    degree_start: Vec<usize>,
    index: HashMap<Box<[u8]>, usize>,
    products: Vec<(u32, u32, u32)>,
}

fn push_degree(nvars: usize, remaining: usize, prefix: &mut Vec<u8>, out: &mut Vec<Box<[u8]>>) {
    if prefix.len() + 1 == nvars {
        prefix.push(remaining as u8);
        out.push(prefix.clone().into_boxed_slice());
        prefix.pop();
        return;
    }
    for e in (0..=remaining).rev() {
        prefix.push(e as u8);
        push_degree(nvars, remaining - e, prefix, out);
        prefix.pop();
    }
}

impl Basis {
    fn build(nvars: usize, order: usize) -> Basis {
        assert!(nvars > 0, "a jet needs at least one variable");
        assert!(order < 64, "truncation order too large");
        let mut exps = Vec::new();
        let mut degree_start = Vec::with_capacity(order + 2);
        for d in 0..=order {
            degree_start.push(exps.len());
            push_degree(nvars, d, &mut Vec::with_capacity(nvars), &mut exps);
        }
        degree_start.push(exps.len());
        let index: HashMap<Box<[u8]>, usize> =
            exps.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
        let mut products = Vec::new();
        let mut scratch = vec![0u8; nvars];
        for (i, ei) in exps.iter().enumerate() {
            let di: usize = ei.iter().map(|&e| e as usize).sum();
            for (j, ej) in exps[..degree_start[order - di + 1]].iter().enumerate() {
                for v in 0..nvars {
                    scratch[v] = ei[v] + ej[v];
                }
                let k = index[&scratch[..]];
                products.push((i as u32, j as u32, k as u32));
            }
        }
        Basis { nvars, order, exps, degree_start, index, products }
    }

    /// Shared table for `(nvars, order)`.
    pub fn get(nvars: usize, order: usize) -> Arc<Basis> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<Basis>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        let mut map = cache.lock().unwrap_or_else(|e| e.into_inner());
        map.entry((nvars, order)).or_insert_with(|| Arc::new(Basis::build(nvars, order))).clone()
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    /// Exponent vector of the `i`-th monomial.
    pub fn exponents(&self, i: usize) -> &[u8] {
        &self.exps[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.exps[i].iter().map(|&e| e as usize).sum()
    }

    /// Index range of the monomials of total degree `d`.
    pub fn degree_range(&self, d: usize) -> std::ops::Range<usize> {
        self.degree_start[d]..self.degree_start[d + 1]
    }

    pub fn index_of(&self, exps: &[u8]) -> Option<usize> {
        self.index.get(exps).copied()
    }
}

/// Product of factorials of the exponents.
pub fn exponent_factorial(exps: &[u8]) -> f64 {
    exps.iter().map(|&e| (1..=e as u32).map(f64::from).product::<f64>()).product()
}

/// Truncated Taylor polynomial.
#[derive(Clone)]
pub struct Jet<S: Scalar> {
    basis: Arc<Basis>,
    coeffs: Vec<S>,
}

impl<S: Scalar> Debug for Jet<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Jet")
            .field("nvars", &self.basis.nvars)
            .field("order", &self.basis.order)
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl<S: Scalar> Jet<S> {
    pub fn zero(basis: &Arc<Basis>) -> Self {
        Jet { basis: basis.clone(), coeffs: vec![S::zero(); basis.len()] }
    }

    pub fn constant(basis: &Arc<Basis>, value: S) -> Self {
        let mut j = Self::zero(basis);
        j.coeffs[0] = value;
        j
    }

    /// `value + h_var`.
    pub fn variable(basis: &Arc<Basis>, var: usize, value: S) -> Self {
        let mut j = Self::constant(basis, value);
        if basis.order > 0 {
            j.coeffs[1 + var] = S::one();
        }
        j
    }

    pub fn from_coeffs(basis: &Arc<Basis>, coeffs: Vec<S>) -> Self {
        assert_eq!(coeffs.len(), basis.len(), "coefficient count does not match basis");
        Jet { basis: basis.clone(), coeffs }
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[S] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [S] {
        &mut self.coeffs
    }

    pub fn value(&self) -> S {
        self.coeffs[0]
    }

    /// Taylor coefficient of the monomial with the given exponents.
    pub fn coeff(&self, exps: &[u8]) -> S {
        match self.basis.index_of(exps) {
            Some(i) => self.coeffs[i],
            None => panic!("monomial {exps:?} outside jet of order {}", self.basis.order),
        }
    }

    /// Partial derivative `D^exps f` at the expansion point.
    pub fn derivative(&self, exps: &[u8]) -> S {
        self.coeff(exps) * S::real(exponent_factorial(exps))
    }

    pub fn scale(&self, s: S) -> Self {
        Jet { basis: self.basis.clone(), coeffs: self.coeffs.iter().map(|&c| c * s).collect() }
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(S) -> T) -> Jet<T> {
        Jet { basis: self.basis.clone(), coeffs: self.coeffs.iter().map(|&c| f(c)).collect() }
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, other: &Jet<S>, s: S) {
        debug_assert!(Arc::ptr_eq(&self.basis, &other.basis));
        for (a, &b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b * s;
        }
    }

    /// `out += self * other`, truncated.
    pub fn mul_acc(&self, other: &Jet<S>, out: &mut Jet<S>) {
        assert!(Arc::ptr_eq(&self.basis, &other.basis), "jets over different bases");
        let a = &self.coeffs;
        let b = &other.coeffs;
        let c = &mut out.coeffs;
        for &(i, j, k) in &self.basis.products {
            c[k as usize] += a[i as usize] * b[j as usize];
        }
    }

    /// Composition `f(self)` with a univariate series given by the Taylor
    /// coefficients of `f` at `self.value()`.
    pub fn compose(&self, series: &[S]) -> Self {
        let order = self.basis.order;
        let mut delta = self.clone();
        delta.coeffs[0] = S::zero();
        let top = order.min(series.len().saturating_sub(1));
        let mut acc = Self::constant(&self.basis, series[top]);
        for k in (0..top).rev() {
            let mut next = Self::constant(&self.basis, series[k]);
            acc.mul_acc(&delta, &mut next);
            acc = next;
        }
        acc
    }

    /// `self^alpha` for real `alpha`.
    pub fn powf(&self, alpha: f64) -> Self {
        let u0 = self.value();
        let order = self.basis.order;
        let mut series = Vec::with_capacity(order + 1);
        let mut binom = 1.0;
        for k in 0..=order {
            series.push(S::real(binom) * u0.powf(alpha - k as f64));
            binom *= (alpha - k as f64) / (k as f64 + 1.0);
        }
        self.compose(&series)
    }

    pub fn recip(&self) -> Self {
        let u0 = self.value();
        let inv = S::one() / u0;
        let mut series = Vec::with_capacity(self.basis.order + 1);
        let mut t = inv;
        for _ in 0..=self.basis.order {
            series.push(t);
            t = -(t * inv);
        }
        self.compose(&series)
    }

    pub fn ln(&self) -> Self {
        let u0 = self.value();
        let inv = S::one() / u0;
        let mut series = vec![u0.ln()];
        let mut t = inv;
        for k in 1..=self.basis.order {
            series.push(t / S::real(k as f64));
            t = -(t * inv);
        }
        self.compose(&series)
    }

    pub fn exp(&self) -> Self {
        let e0 = self.value().exp();
        let mut series = Vec::with_capacity(self.basis.order + 1);
        let mut fact = 1.0;
        for k in 0..=self.basis.order {
            if k > 0 {
                fact *= k as f64;
            }
            series.push(e0 / S::real(fact));
        }
        self.compose(&series)
    }

    pub fn sqrt(&self) -> Self {
        self.powf(0.5)
    }

    /// Substitutes each variable by a jet over `target` with no constant term.
    pub fn substitute(&self, target: &Arc<Basis>, images: &[Jet<S>]) -> Jet<S> {
        assert_eq!(images.len(), self.basis.nvars, "one image per variable");
        let order = target.order.min(self.basis.order);
        for img in images {
            assert!(Arc::ptr_eq(&img.basis, target), "images must live in the target basis");
            assert!(img.coeffs[0].modulus() == 0.0, "substituted jets must vanish at the origin");
        }
        // powers[v][e] = images[v]^e
        let mut powers: Vec<Vec<Jet<S>>> = Vec::with_capacity(images.len());
        for img in images {
            let mut row = vec![Jet::constant(target, S::one())];
            for e in 1..=order {
                let mut next = Jet::zero(target);
                row[e - 1].mul_acc(img, &mut next);
                row.push(next);
            }
            powers.push(row);
        }
        let mut out = Jet::zero(target);
        for (i, &c) in self.coeffs.iter().enumerate() {
            if c.modulus() == 0.0 || self.basis.degree(i) > order {
                continue;
            }
            let exps = self.basis.exponents(i);
            let mut term = Jet::constant(target, c);
            for (v, &e) in exps.iter().enumerate() {
                if e > 0 {
                    let mut next = Jet::zero(target);
                    term.mul_acc(&powers[v][e as usize], &mut next);
                    term = next;
                }
            }
            out.add_scaled(&term, S::one());
        }
        out
    }

    /// Same jet over a basis of lower order.
    pub fn truncate(&self, order: usize) -> Jet<S> {
        let target = Basis::get(self.basis.nvars, order.min(self.basis.order));
        let coeffs = self.coeffs[..target.len()].to_vec();
        Jet { basis: target, coeffs }
    }

    /// Largest coefficient modulus among the monomials of degree `d`.
    pub fn max_in_degree(&self, d: usize) -> f64 {
        self.coeffs[self.basis.degree_range(d)].iter().map(|c| c.modulus()).fold(0.0, f64::max)
    }
}

impl<S: Scalar> Add for &Jet<S> {
    type Output = Jet<S>;
    fn add(self, rhs: &Jet<S>) -> Jet<S> {
        let mut out = self.clone();
        out.add_scaled(rhs, S::one());
        out
    }
}

impl<S: Scalar> Sub for &Jet<S> {
    type Output = Jet<S>;
    fn sub(self, rhs: &Jet<S>) -> Jet<S> {
        let mut out = self.clone();
        out.add_scaled(rhs, -S::one());
        out
    }
}

impl<S: Scalar> Mul for &Jet<S> {
    type Output = Jet<S>;
    fn mul(self, rhs: &Jet<S>) -> Jet<S> {
        let mut out = Jet::zero(&self.basis);
        self.mul_acc(rhs, &mut out);
        out
    }
}

impl<S: Scalar> Neg for &Jet<S> {
    type Output = Jet<S>;
    fn neg(self) -> Jet<S> {
        self.scale(-S::one())
    }
}

/// Basis for Wirtinger jets on `C^n`.
pub fn wirtinger_basis(n: usize, order: usize) -> Arc<Basis> {
    Basis::get(2 * n, order)
}

/// Splits a Wirtinger exponent vector into its holomorphic and
/// antiholomorphic halves.
pub fn split_multi_index(exps: &[u8]) -> (&[u8], &[u8]) {
    exps.split_at(exps.len() / 2)
}

/// Joins holomorphic and antiholomorphic exponents.
pub fn join_multi_index(a: &[u8], b: &[u8]) -> Vec<u8> {
    let mut v = a.to_vec();
    v.extend_from_slice(b);
    v
}

/// Converts a jet in the real coordinates `[x_1, y_1, ..., x_n, y_n]` into a
/// Wirtinger jet.
pub fn real_to_wirtinger(real: &Jet<f64>) -> Jet<Complex64> {
    let n = real.basis().nvars() / 2;
    assert_eq!(real.basis().nvars(), 2 * n, "real jets need an even number of variables");
    let target = wirtinger_basis(n, real.basis().order());
    let half = Complex64::new(0.5, 0.0);
    let half_i = Complex64::new(0.0, 0.5);
    let mut images = Vec::with_capacity(2 * n);
    for a in 0..n {
        let mut x = Jet::zero(&target);
        let mut y = Jet::zero(&target);
        if target.order() > 0 {
            x.coeffs[1 + a] = half;
            x.coeffs[1 + n + a] = half;
            y.coeffs[1 + a] = -half_i;
            y.coeffs[1 + n + a] = half_i;
        }
        images.push(x);
        images.push(y);
    }
    real.map(|c| Complex64::new(c, 0.0)).substitute(&target, &images)
}
