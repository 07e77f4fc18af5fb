//! Boundary-asymptotics tables, the scaling identity, affine invariance and
//! stability scans.
//!
//! Every table walks an [`ApproachPath`] toward a boundary point and records
//! a scaled quantity next to its predicted limit. Limits are extrapolated to
//! `t = 0` from the three finest rows.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{c, hermitian, norm, split_at_gradient, sub, ComplexPoint, DomainSpec, Similarity};
use crate::metric::{curvature_at, f_r_length, metric_at, MetricEval};
use crate::potential::{halfspace_robin_jet, MultiIndexPair, RobinJet};
use crate::robin::RobinProvider;
use crate::{Error, Result};

/// Default geometric grid, ratio ½.
pub const DEFAULT_T: [f64; 5] = [0.2, 0.1, 0.05, 0.025, 0.0125];

#[derive(Clone, Debug, Serialize)]
pub struct ApproachPath {
    pub z0: ComplexPoint,
    /// Unit direction pointing into the domain.
    pub direction: ComplexPoint,
    pub t: Vec<f64>,
}

impl ApproachPath {
    /// Points `z0 + t·N` on the inner normal `N = −conj(∂ψ)/|∂ψ|`.
    pub fn normal(domain: &DomainSpec, z0: &[Complex64], t: &[f64]) -> Result<Self> {
        Self::check_base(domain, z0)?;
        let g = domain.grad(z0);
        let gn = norm(&g);
        let direction = g.iter().map(|x| -x.conj() / gn).collect();
        Self::along(domain, z0, direction, t)
    }

    /// Points `z0 + t·w` for a unit direction `w` pointing strictly inward.
    pub fn oblique(domain: &DomainSpec, z0: &[Complex64], w: &[Complex64], t: &[f64]) -> Result<Self> {
        Self::check_base(domain, z0)?;
        let wn = norm(w);
        let w: ComplexPoint = w.iter().map(|x| x / wn).collect();
        if hermitian(&w, &domain.grad(z0).iter().map(|g| g.conj()).collect::<Vec<_>>()).re >= 0.0 {
            return Err(Error::InvalidInput("approach direction must point into the domain".into()));
        }
        Self::along(domain, z0, w, t)
    }

    fn check_base(domain: &DomainSpec, z0: &[Complex64]) -> Result<()> {
        if z0.len() != domain.n() {
            return Err(Error::InvalidInput("boundary point has the wrong dimension".into()));
        }
        if domain.psi(z0).abs() > 1e-9 {
            return Err(Error::InvalidInput("approach base point must lie on the boundary".into()));
        }
        Ok(())
    }

    fn along(domain: &DomainSpec, z0: &[Complex64], direction: ComplexPoint, t: &[f64]) -> Result<Self> {
        if t.is_empty() || t.iter().any(|&x| !(x > 0.0)) || t.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidInput("t grid must be positive and strictly decreasing".into()));
        }
        let path = ApproachPath { z0: z0.to_vec(), direction, t: t.to_vec() };
        if let Some(k) = (0..t.len()).find(|&k| !domain.contains(&path.point(k))) {
            return Err(Error::InvalidInput(format!("approach point at t = {} is outside the domain", t[k])));
        }
        Ok(path)
    }

    pub fn point(&self, k: usize) -> ComplexPoint {
        self.z0.iter().zip(&self.direction).map(|(z, d)| z + d * self.t[k]).collect()
    }

    /// Same direction with every `t` halved.
    pub fn halved(&self, domain: &DomainSpec) -> Result<Self> {
        let t: Vec<f64> = self.t.iter().map(|x| 0.5 * x).collect();
        Self::along(domain, &self.z0, self.direction.clone(), &t)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AsymptoticsRow {
    pub t: f64,
    pub value: Complex64,
    pub predicted: Complex64,
    pub gap: f64,
    pub rel_gap: f64,
    pub flag: Option<String>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Extrapolation {
    pub limit: Complex64,
    /// Observed convergence order from the finest triple.
    pub order: Option<f64>,
    /// Difference between the linear and quadratic extrapolants.
    pub err_est: f64,
}

/// Polynomial extrapolation to `t = 0` through the three smallest `t`.
pub fn richardson(t: &[f64], v: &[Complex64]) -> Result<Extrapolation> {
    if t.len() != v.len() || t.len() < 3 {
        return Err(Error::InvalidInput("extrapolation needs at least three rows".into()));
    }
    let mut idx: Vec<usize> = (0..t.len()).collect();
    idx.sort_by(|&a, &b| t[b].total_cmp(&t[a]));
    let k = &idx[idx.len() - 3..];
    let (t1, t2, t3) = (t[k[0]], t[k[1]], t[k[2]]);
    let (v1, v2, v3) = (v[k[0]], v[k[1]], v[k[2]]);
    let lin = (v3 * t2 - v2 * t3) / (t2 - t3);
    let w1 = t2 * t3 / ((t1 - t2) * (t1 - t3));
    let w2 = t1 * t3 / ((t2 - t1) * (t2 - t3));
    let w3 = t1 * t2 / ((t3 - t1) * (t3 - t2));
    let quad = v1 * w1 + v2 * w2 + v3 * w3;
    let (d1, d2) = ((v1 - v2).norm(), (v2 - v3).norm());
    let floor = 1e-13 * v3.norm().max(1e-300);
    let order = (d1 > floor && d2 > floor).then(|| (d1 / d2).ln() / (t1 / t2).ln());
    Ok(Extrapolation { limit: quad, order, err_est: (quad - lin).norm() })
}

/// `|a − b|/|b|`, or `|a − b|` when the reference vanishes.
fn gap_of(value: Complex64, predicted: Complex64) -> f64 {
    let d = (value - predicted).norm();
    if predicted.norm() > 1e-12 {
        d / predicted.norm()
    } else {
        d
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ReportTable {
    pub id: String,
    pub rows: Vec<AsymptoticsRow>,
    pub predicted: Complex64,
    pub limit: Option<Extrapolation>,
    /// Largest pairwise distance between row values.
    pub spread: f64,
    /// Relative gap of the extrapolated limit, absolute when the prediction
    /// is zero.
    pub gap: f64,
    pub tolerance: Option<f64>,
    pub pass: Option<bool>,
}

impl ReportTable {
    fn build(id: String, rows: Vec<AsymptoticsRow>, predicted: Complex64) -> Self {
        let t: Vec<f64> = rows.iter().map(|r| r.t).collect();
        let v: Vec<Complex64> = rows.iter().map(|r| r.value).collect();
        let limit = richardson(&t, &v).ok();
        let mut spread = 0.0f64;
        for a in &v {
            for b in &v {
                spread = spread.max((a - b).norm());
            }
        }
        let gap = limit.map_or(f64::NAN, |l| gap_of(l.limit, predicted));
        ReportTable { id, rows, predicted, limit, spread, gap, tolerance: None, pass: None }
    }

    /// Pass iff the extrapolated gap is below `tol`.
    pub fn judge(mut self, tol: f64) -> Self {
        self.tolerance = Some(tol);
        self.pass = Some(self.gap < tol);
        self
    }

    /// Pass iff the rows agree to within `tol`.
    pub fn judge_constant(mut self, tol: f64) -> Self {
        self.tolerance = Some(tol);
        self.pass = Some(self.spread < tol && self.rows.iter().all(|r| r.rel_gap < tol));
        self
    }

    pub fn extrapolated(&self) -> Option<Complex64> {
        self.limit.map(|l| l.limit)
    }

    pub fn flagged_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.flag.is_some()).count()
    }
}

struct PathSample<'a> {
    z: ComplexPoint,
    psi: f64,
    jet: RobinJet,
    domain: &'a DomainSpec,
}

fn tabulate(
    id: String,
    provider: &dyn RobinProvider,
    path: &ApproachPath,
    order: usize,
    predicted: Complex64,
    f: &(dyn Fn(&PathSample) -> Result<Complex64> + Sync),
) -> Result<ReportTable> {
    let domain = provider.domain();
    let rows: Vec<AsymptoticsRow> = (0..path.t.len())
        .into_par_iter()
        .map(|k| {
            let z = path.point(k);
            let jet = provider.robin_jet(&z, order)?;
            let sample = PathSample { psi: domain.psi(&z), z, jet, domain };
            let value = f(&sample)?;
            let gap = (value - predicted).norm();
            Ok(AsymptoticsRow { t: path.t[k], value, predicted, gap, rel_gap: gap_of(value, predicted), flag: sample.jet.flag.clone() })
        })
        .collect::<Result<_>>()?;
    Ok(ReportTable::build(id, rows, predicted))
}

fn index_label(idx: &MultiIndexPair) -> String {
    idx.to_string().replace(['(', ')'], "").replace(';', ".")
}

/// `(−1)^{|A|+|B|} D^{AB̄}Λ(z) (cψ(z))^{2n−2+|A|+|B|}` against the half-space
/// jet with normal `c·∂ψ(z0)`.
pub fn thm11_table(provider: &dyn RobinProvider, path: &ApproachPath, idx: &MultiIndexPair, psi_scale: f64) -> Result<ReportTable> {
    let domain = provider.domain();
    let n = domain.n();
    let k = idx.order();
    if k > 4 || idx.a.len() != n || idx.b.len() != n {
        return Err(Error::InvalidInput("multi-index must have |A| + |B| ≤ 4 in the domain dimension".into()));
    }
    if !(psi_scale > 0.0) {
        return Err(Error::InvalidInput("defining-function scale must be positive".into()));
    }
    let a: ComplexPoint = domain.grad(&path.z0).iter().map(|g| g * psi_scale).collect();
    let predicted = halfspace_robin_jet(&a, &vec![c(0.0, 0.0); n], k)?.value(idx);
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    let power = (2 * n - 2 + k) as i32;
    tabulate(format!("thm11[{}]", index_label(idx)), provider, path, k, predicted, &|s| {
        Ok(s.jet.value(idx) * sign * (psi_scale * s.psi).powi(power))
    })
}

/// `g_{αβ̄}ψ²`, or `∂_γ g_{αβ̄}(−ψ)³` when `gamma` is given, against the
/// half-space metric `(2n−2) a_α ā_β / L²` at the origin.
pub fn cor12_table(provider: &dyn RobinProvider, path: &ApproachPath, alpha: usize, beta: usize, gamma: Option<usize>) -> Result<ReportTable> {
    let domain = provider.domain();
    let n = domain.n();
    if alpha >= n || beta >= n || gamma.is_some_and(|g| g >= n) {
        return Err(Error::InvalidInput("metric index out of range".into()));
    }
    let a = domain.grad(&path.z0);
    let w = (2 * n - 2) as f64;
    let base = a[alpha] * a[beta].conj() * w;
    match gamma {
        None => tabulate(format!("cor12[{}{}]", alpha + 1, beta + 1), provider, path, 2, base, &|s| {
            Ok(metric_at(&s.jet)?.g[alpha][beta] * s.psi * s.psi)
        }),
        Some(g) => {
            let predicted = base * a[g] * 2.0;
            tabulate(format!("cor12[{}{};{}]", alpha + 1, beta + 1, g + 1), provider, path, 3, predicted, &|s| {
                let me = metric_at(&s.jet)?;
                let dg = me.dg.as_ref().expect("order-3 jet carries dg");
                Ok(dg[g][alpha][beta] * (-s.psi).powi(3))
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthPart {
    Normal,
    Horizontal,
}

/// `F_R(z, v_N)(−ψ)` or `F_R(z, v_H)(−ψ)^{1/2}`, with the split taken at the
/// nearest boundary point of `z`.
pub fn thm13_table(provider: &dyn RobinProvider, path: &ApproachPath, v: &[Complex64], part: LengthPart) -> Result<ReportTable> {
    let domain = provider.domain();
    let n = domain.n();
    if v.len() != n {
        return Err(Error::InvalidInput("tangent vector has the wrong dimension".into()));
    }
    let s2 = ((2 * n - 2) as f64).sqrt();
    let g0 = domain.grad(&path.z0);
    let (vh0, vn0) = split_at_gradient(&g0, v);
    let predicted = match part {
        LengthPart::Normal => s2 * norm(&vn0) * norm(&g0),
        LengthPart::Horizontal => s2 * domain.levi_form(&path.z0, &vh0).max(0.0).sqrt(),
    };
    let tag = match part {
        LengthPart::Normal => "normal",
        LengthPart::Horizontal => "horizontal",
    };
    tabulate(format!("thm13[{tag}]"), provider, path, 2, c(predicted, 0.0), &|s| {
        let frame = s.domain.nearest_boundary(&s.z)?;
        let (vh, vn) = split_at_gradient(&frame.grad, v);
        let me = metric_at(&s.jet)?;
        Ok(c(
            match part {
                LengthPart::Normal => f_r_length(&me, &vn) * (-s.psi),
                LengthPart::Horizontal => f_r_length(&me, &vh) * (-s.psi).sqrt(),
            },
            0.0,
        ))
    })
}

/// Unitary frame `e_1, …, e_n` with `e_n = conj(∂ψ(z0))/|∂ψ(z0)|`, so that
/// in the coordinates `z = z0 + Σ w_α e_α` the gradient of `ψ/|∂ψ(z0)|` at
/// the origin is `(0, …, 0, 1)`.
pub fn boundary_frame(domain: &DomainSpec, z0: &[Complex64]) -> Vec<ComplexPoint> {
    let n = domain.n();
    let g = domain.grad(z0);
    let gn = norm(&g);
    let en: ComplexPoint = g.iter().map(|x| x.conj() / gn).collect();
    let mut frame: Vec<ComplexPoint> = Vec::with_capacity(n);
    // Gram–Schmidt on the standard basis, skipping the most parallel vector
    let skip = (0..n).max_by(|&i, &j| en[i].norm().total_cmp(&en[j].norm())).expect("n ≥ 1");
    let mut done = vec![en.clone()];
    for k in (0..n).filter(|&k| k != skip) {
        let mut v = vec![c(0.0, 0.0); n];
        v[k] = c(1.0, 0.0);
        for u in &done {
            let p = hermitian(&v, u);
            for i in 0..n {
                v[i] -= p * u[i];
            }
        }
        let vn = norm(&v);
        v.iter_mut().for_each(|x| *x /= vn);
        done.push(v.clone());
        frame.push(v);
    }
    frame.push(en);
    frame
}

/// `g(e_α, e_β)` in the frame.
fn frame_metric(me: &MetricEval, frame: &[ComplexPoint]) -> Vec<Vec<Complex64>> {
    let n = frame.len();
    let mut out = vec![vec![c(0.0, 0.0); n]; n];
    for a in 0..n {
        for b in 0..n {
            let mut s = c(0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    s += me.g[i][j] * frame[a][i] * frame[b][j].conj();
                }
            }
            out[a][b] = s;
        }
    }
    out
}

/// Second derivatives of `ψ/|∂ψ(z0)|` at `z0` in frame coordinates:
/// `(ψ_{αβ}, ψ_{αβ̄})`.
fn frame_hessians(domain: &DomainSpec, z0: &[Complex64], frame: &[ComplexPoint]) -> Result<(Vec<Vec<Complex64>>, Vec<Vec<Complex64>>)> {
    let n = domain.n();
    let jet = domain.psi_jet(z0, 2)?;
    let gn = domain.grad_norm(z0);
    let d2 = |i: usize, j: usize| {
        let mut e = vec![0u8; 2 * n];
        e[i] += 1;
        e[j] += 1;
        jet.derivative(&e) / gn
    };
    let mut hh = vec![vec![c(0.0, 0.0); n]; n];
    let mut hm = vec![vec![c(0.0, 0.0); n]; n];
    for a in 0..n {
        for b in 0..n {
            for i in 0..n {
                for j in 0..n {
                    hh[a][b] += d2(i, j) * frame[a][i] * frame[b][j];
                    hm[a][b] += d2(i, n + j) * frame[a][i] * frame[b][j].conj();
                }
            }
        }
    }
    Ok((hh, hm))
}

/// `g_{αβ̄}ψ` for a tangential `α` in normalized frame coordinates, against
/// `(2n−2)(C_α ψ_β̄(0) − ψ_{αβ̄}(0))`, `C_α = ½(ψ_{αn}(0) + ψ_{αn̄}(0))`.
pub fn normal_lemma_table(provider: &dyn RobinProvider, path: &ApproachPath, alpha: usize, beta: usize) -> Result<ReportTable> {
    let domain = provider.domain();
    let n = domain.n();
    if alpha + 1 >= n || beta >= n {
        return Err(Error::InvalidInput("need a tangential first index and β ≤ n".into()));
    }
    let frame = boundary_frame(domain, &path.z0);
    let (hh, hm) = frame_hessians(domain, &path.z0, &frame)?;
    let ca = (hh[alpha][n - 1] + hm[alpha][n - 1]) * 0.5;
    let psib = if beta == n - 1 { c(1.0, 0.0) } else { c(0.0, 0.0) };
    let predicted = (ca * psib - hm[alpha][beta]) * (2 * n - 2) as f64;
    let gn = domain.grad_norm(&path.z0);
    tabulate(format!("lemma_g[{}{}]", alpha + 1, beta + 1), provider, path, 2, predicted, &|s| {
        let gf = frame_metric(&metric_at(&s.jet)?, &frame);
        Ok(gf[alpha][beta] * (s.psi / gn))
    })
}

/// `det(g)ψ^{n+1}` in normalized frame coordinates against
/// `(−1)^{n−1}(2n−2)^n det(ψ_{αβ̄}(0))_{α,β<n}`.
pub fn det_lemma_table(provider: &dyn RobinProvider, path: &ApproachPath) -> Result<ReportTable> {
    let domain = provider.domain();
    let n = domain.n();
    let frame = boundary_frame(domain, &path.z0);
    let (_, hm) = frame_hessians(domain, &path.z0, &frame)?;
    let tangential: Vec<Vec<Complex64>> = hm[..n - 1].iter().map(|r| r[..n - 1].to_vec()).collect();
    let sign = if (n - 1) % 2 == 0 { 1.0 } else { -1.0 };
    let predicted = complex_det(&tangential) * sign * ((2 * n - 2) as f64).powi(n as i32);
    let gn = domain.grad_norm(&path.z0);
    tabulate("lemma_det".into(), provider, path, 2, predicted, &|s| {
        let me = metric_at(&s.jet)?;
        Ok(c(me.det_g * (s.psi / gn).powi(n as i32 + 1), 0.0))
    })
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn complex_det(m: &[Vec<Complex64>]) -> Complex64 {
    let n = m.len();
    let mut a = m.to_vec();
    let mut det = c(1.0, 0.0);
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].norm().total_cmp(&a[j][k].norm())).expect("nonempty");
        if a[p][k].norm() == 0.0 {
            return c(0.0, 0.0);
        }
        if p != k {
            a.swap(p, k);
            det = -det;
        }
        det *= a[k][k];
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                let s = a[k][j];
                a[i][j] -= f * s;
            }
        }
    }
    det
}

/// `R(z(t), v_N(z(t)))` against `−1/(n−1)`.
pub fn thm16_curvature_limit(provider: &dyn RobinProvider, path: &ApproachPath) -> Result<ReportTable> {
    let n = provider.domain().n();
    let predicted = c(-1.0 / (n - 1) as f64, 0.0);
    tabulate("thm16".into(), provider, path, 4, predicted, &|s| {
        let frame = s.domain.nearest_boundary(&s.z)?;
        let vn: ComplexPoint = frame.grad.iter().map(|g| g.conj()).collect();
        Ok(c(curvature_at(&metric_at(&s.jet)?, &vn)?.r, 0.0))
    })
}

/// The same curvature along an arbitrary approach path. Reported only.
pub fn oblique_curvature_scan(provider: &dyn RobinProvider, path: &ApproachPath) -> Result<ReportTable> {
    let mut table = thm16_curvature_limit(provider, path)?;
    table.id = "thm16_oblique".into();
    Ok(table)
}

/// Rows `Λ(z_j − ψ(z_j)p)ψ(z_j)^{2n−2}` along the path against the half-space
/// value `Λ_H(p)` for the normal `∂ψ(z0)`. Rows whose point leaves the domain
/// are skipped.
pub fn scaling_check(provider: &dyn RobinProvider, path: &ApproachPath, p: &[Complex64]) -> Result<ReportTable> {
    let domain = provider.domain();
    let n = domain.n();
    if p.len() != n {
        return Err(Error::InvalidInput("test point has the wrong dimension".into()));
    }
    let a = domain.grad(&path.z0);
    let predicted = c(halfspace_robin_jet(&a, p, 0)?.lambda(), 0.0);
    let rows: Vec<Option<AsymptoticsRow>> = (0..path.t.len())
        .into_par_iter()
        .map(|k| {
            let zj = path.point(k);
            let pj = domain.psi(&zj);
            let w: ComplexPoint = zj.iter().zip(p).map(|(z, x)| z - x * pj).collect();
            if !domain.contains(&w) {
                return Ok(None);
            }
            let jet = provider.robin_jet(&w, 0)?;
            let value = c(jet.lambda() * pj.powi(2 * n as i32 - 2), 0.0);
            let gap = (value - predicted).norm();
            Ok(Some(AsymptoticsRow { t: path.t[k], value, predicted, gap, rel_gap: gap_of(value, predicted), flag: jet.flag }))
        })
        .collect::<Result<_>>()?;
    Ok(ReportTable::build("scaling".into(), rows.into_iter().flatten().collect(), predicted))
}

#[derive(Clone, Debug, Serialize)]
pub struct InvarianceReport {
    pub samples: usize,
    /// Largest `|F_D(z,v) − F_{D′}(f z, df v)| / F_D(z,v)`.
    pub length_dev: f64,
    /// Largest relative deviation of `Λ_{D′}(f z) = |s|^{−2n+2}Λ_D(z)`.
    pub lambda_dev: f64,
}

/// Compares lengths and Robin values on `D` and `f(D)` for the similarity
/// `f(z) = sUz + b`.
pub fn affine_invariance_check(
    base: &dyn RobinProvider,
    image: &dyn RobinProvider,
    map: &Similarity,
    samples: &[(ComplexPoint, ComplexPoint)],
) -> Result<InvarianceReport> {
    let n = base.domain().n();
    if samples.is_empty() {
        return Err(Error::InvalidInput("no sample points".into()));
    }
    let devs: Vec<(f64, f64)> = samples
        .par_iter()
        .map(|(z, v)| {
            let jb = base.robin_jet(z, 2)?;
            let w = map.apply(z);
            let jw = image.robin_jet(&w, 2)?;
            let fv = map.linear(v);
            let a = f_r_length(&metric_at(&jb)?, v);
            let b = f_r_length(&metric_at(&jw)?, &fv);
            let want = jb.lambda() * map.s.norm().powi(-(2 * n as i32 - 2));
            Ok(((a - b).abs() / a, (jw.lambda() - want).abs() / want.abs()))
        })
        .collect::<Result<_>>()?;
    Ok(InvarianceReport {
        samples: samples.len(),
        length_dev: devs.iter().map(|d| d.0).fold(0.0, f64::max),
        lambda_dev: devs.iter().map(|d| d.1).fold(0.0, f64::max),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityRow {
    pub epsilon: f64,
    /// `sup_K max_{|A|+|B| = k} |D^{AB̄}Λ_ε − D^{AB̄}Λ_0|` for `k = 0, …, orders`.
    pub sup_jet: Vec<f64>,
    pub sup_curvature: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub rows: Vec<StabilityRow>,
    pub lambda_ratios: Vec<f64>,
    pub curvature_ratios: Vec<f64>,
    pub monotone: bool,
}

impl StabilityReport {
    /// Monotone decrease with every successive ratio in `[lo, hi]`.
    pub fn ratios_within(&self, lo: f64, hi: f64) -> bool {
        self.monotone && self.lambda_ratios.iter().chain(&self.curvature_ratios).all(|&r| (lo..=hi).contains(&r))
    }
}

/// Deviations of jets and normal-independent curvature from the limit domain
/// over the compact sample `points × directions`. Rows follow `eps` order.
pub fn stability_scan(
    family: &(dyn Fn(f64) -> Result<Box<dyn RobinProvider>> + Sync),
    limit: &dyn RobinProvider,
    eps: &[f64],
    points: &[ComplexPoint],
    directions: &[ComplexPoint],
    orders: usize,
) -> Result<StabilityReport> {
    if eps.is_empty() || points.is_empty() {
        return Err(Error::InvalidInput("stability scan needs parameters and sample points".into()));
    }
    let order = orders.max(if directions.is_empty() { 0 } else { 4 });
    let reference: Vec<(RobinJet, Option<MetricEval>)> = points
        .par_iter()
        .map(|z| {
            let j = limit.robin_jet(z, order)?;
            let m = if directions.is_empty() { None } else { Some(metric_at(&j)?) };
            Ok((j, m))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(eps.len());
    for &e in eps {
        let provider = family(e)?;
        let parts: Vec<(Vec<f64>, f64)> = points
            .par_iter()
            .zip(&reference)
            .map(|(z, (j0, m0))| {
                let j = provider.robin_jet(z, order)?;
                let mut sup = vec![0.0f64; orders + 1];
                let basis = j.jet.basis().clone();
                for (i, (idx, x, _)) in j.entries().into_iter().enumerate() {
                    let k = basis.degree(i);
                    if k <= orders {
                        sup[k] = sup[k].max((x - j0.value(&idx)).norm());
                    }
                }
                let mut r = 0.0f64;
                if let Some(m0) = m0 {
                    let m = metric_at(&j)?;
                    for v in directions {
                        r = r.max((curvature_at(&m, v)?.r - curvature_at(m0, v)?.r).abs());
                    }
                }
                Ok((sup, r))
            })
            .collect::<Result<_>>()?;
        let mut sup_jet = vec![0.0f64; orders + 1];
        let mut sup_curvature = 0.0f64;
        for (s, r) in parts {
            for k in 0..=orders {
                sup_jet[k] = sup_jet[k].max(s[k]);
            }
            sup_curvature = sup_curvature.max(r);
        }
        rows.push(StabilityRow { epsilon: e, sup_jet, sup_curvature });
    }
    let ratios = |f: &dyn Fn(&StabilityRow) -> f64| -> Vec<f64> { rows.windows(2).map(|w| f(&w[1]) / f(&w[0])).collect() };
    let lambda_ratios = ratios(&|r| r.sup_jet[0]);
    let curvature_ratios = if directions.is_empty() { Vec::new() } else { ratios(&|r| r.sup_curvature) };
    let monotone = lambda_ratios.iter().chain(&curvature_ratios).all(|&r| r < 1.0);
    Ok(StabilityReport { rows, lambda_ratios, curvature_ratios, monotone })
}

/// Distance of each path point to the boundary, for checking the path
/// parametrization.
pub fn path_deltas(domain: &DomainSpec, path: &ApproachPath) -> Result<Vec<f64>> {
    (0..path.t.len()).map(|k| Ok(domain.nearest_boundary(&path.point(k))?.delta)).collect()
}

/// Distance between the base point and the nearest boundary point of each
/// path point.
pub fn path_drift(domain: &DomainSpec, path: &ApproachPath) -> Result<f64> {
    let mut m = 0.0f64;
    for k in 0..path.t.len() {
        m = m.max(norm(&sub(&domain.nearest_boundary(&path.point(k))?.point, &path.z0)));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robin::ClosedForm;

    fn ball() -> (ClosedForm, ApproachPath) {
        let d = DomainSpec::unit_ball(2);
        let path = ApproachPath::normal(&d, &[c(1.0, 0.0), c(0.0, 0.0)], &DEFAULT_T).unwrap();
        (ClosedForm::new(d).unwrap(), path)
    }

    #[test]
    fn path_distance_matches_parameter() {
        let (cf, path) = ball();
        for (d, t) in path_deltas(cf.domain(), &path).unwrap().iter().zip(&path.t) {
            assert!((d - t).abs() < 1e-10);
        }
        assert!(ApproachPath::normal(cf.domain(), &[c(0.9, 0.0), c(0.0, 0.0)], &DEFAULT_T).is_err());
        assert!(ApproachPath::normal(cf.domain(), &[c(1.0, 0.0), c(0.0, 0.0)], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn richardson_recovers_polynomials() {
        let t = [0.2, 0.1, 0.05, 0.025];
        let v: Vec<Complex64> = t.iter().map(|&x| c(3.0 + 2.0 * x - 5.0 * x * x, -1.0 + x)).collect();
        let e = richardson(&t, &v).unwrap();
        assert!((e.limit - c(3.0, -1.0)).norm() < 1e-12);
        let v: Vec<Complex64> = t.iter().map(|&x| c(1.0 + x.powf(1.5), 0.0)).collect();
        assert!((richardson(&t, &v).unwrap().order.unwrap() - 1.5).abs() < 1e-12);
        assert!(richardson(&t[..2], &v[..2]).is_err());
    }

    #[test]
    fn ball_tables_are_constant() {
        let (cf, path) = ball();
        let e1 = [c(1.0, 0.0), c(0.0, 0.0)];
        let e2 = [c(0.0, 0.0), c(1.0, 0.0)];
        let tables = [
            (thm11_table(&cf, &path, &MultiIndexPair::empty(2), 1.0).unwrap(), -1.0),
            (thm13_table(&cf, &path, &e1, LengthPart::Normal).unwrap(), 2f64.sqrt()),
            (thm13_table(&cf, &path, &e2, LengthPart::Horizontal).unwrap(), 2f64.sqrt()),
            (thm16_curvature_limit(&cf, &path).unwrap(), -1.0),
            (cor12_table(&cf, &path, 0, 0, None).unwrap(), 2.0),
            (normal_lemma_table(&cf, &path, 0, 0).unwrap(), -2.0),
            (det_lemma_table(&cf, &path).unwrap(), -4.0),
        ];
        for (t, want) in tables {
            let t = t.judge_constant(1e-10);
            assert_eq!(t.pass, Some(true), "{}: {:?}", t.id, t.rows);
            assert!((t.predicted - c(want, 0.0)).norm() < 1e-12, "{}", t.id);
        }
    }

    #[test]
    fn ball_first_order_limits() {
        let (cf, path) = ball();
        for idx in crate::potential::multi_indices(2, 2).into_iter().filter(|i| i.order() >= 1) {
            let t = thm11_table(&cf, &path, &idx, 1.0).unwrap().judge(1e-4);
            assert_eq!(t.pass, Some(true), "{} gap {}", t.id, t.gap);
        }
        let t = cor12_table(&cf, &path, 1, 1, None).unwrap();
        assert!(t.extrapolated().unwrap().norm() < 1e-6);
        let t = cor12_table(&cf, &path, 0, 0, Some(0)).unwrap().judge(1e-4);
        assert_eq!(t.pass, Some(true), "gap {}", t.gap);
    }

    #[test]
    fn psi_rescaling_scales_prediction() {
        let (cf, path) = ball();
        let idx = MultiIndexPair::new(vec![1, 0], vec![0, 0]);
        let a = thm11_table(&cf, &path, &idx, 1.0).unwrap();
        let b = thm11_table(&cf, &path, &idx, 2.0).unwrap();
        assert!((b.predicted - a.predicted * 8.0).norm() < 1e-12);
        assert!((b.rows[2].value - a.rows[2].value * 8.0).norm() < 1e-10);
    }

    #[test]
    fn scaling_identity_on_ball() {
        let (cf, _) = ball();
        let t: Vec<f64> = (1..=8).map(|j| 0.5f64.powi(j)).collect();
        let path = ApproachPath::normal(cf.domain(), &[c(1.0, 0.0), c(0.0, 0.0)], &t).unwrap();
        let zero = [c(0.0, 0.0), c(0.0, 0.0)];
        let table = scaling_check(&cf, &path, &zero).unwrap().judge_constant(1e-12);
        assert_eq!(table.pass, Some(true));
        let p = [c(0.0, 0.0), c(0.0, 0.3)];
        let table = scaling_check(&cf, &path, &p).unwrap();
        let gaps: Vec<f64> = table.rows.iter().map(|r| r.gap).collect();
        assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
        assert!(gaps.last().unwrap() < &1e-2);
    }

    #[test]
    fn frame_is_unitary() {
        let d = DomainSpec::ellipsoid(vec![1.0, 2.0]).unwrap();
        let z0 = [c(0.6, 0.0), c(0.0, (0.64f64 / 2.0).sqrt())];
        let f = boundary_frame(&d, &z0);
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((hermitian(&f[i], &f[j]) - c(want, 0.0)).norm() < 1e-14);
            }
        }
        let g = d.grad(&z0);
        assert!(hermitian(&f[0], &g.iter().map(|x| x.conj()).collect::<Vec<_>>()).norm() < 1e-14);
    }

    #[test]
    fn identity_map_is_invariant() {
        let (cf, _) = ball();
        let id = Similarity::identity(2);
        let samples = vec![(vec![c(0.2, 0.1), c(-0.3, 0.0)], vec![c(1.0, 0.0), c(0.5, -0.5)])];
        let r = affine_invariance_check(&cf, &cf, &id, &samples).unwrap();
        assert_eq!(r.length_dev, 0.0);
        assert_eq!(r.lambda_dev, 0.0);
    }
}
