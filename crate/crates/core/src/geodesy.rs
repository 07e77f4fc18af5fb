//! Metric geometry of the Λ-metric: path lengths and distance estimates,
//! four-point hyperbolicity, horizontal boundary distance, the Balogh–Bonk
//! type surrogate `g(x, y)` and the closed-form ball comparison.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex64;
use petgraph::graph::{NodeIndex, UnGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{c, hermitian, norm, norm_sq, split_at_gradient, sub, ComplexPoint, DomainSpec};
use crate::metric::{f_r_length, metric_at};
use crate::robin::RobinProvider;
use crate::{Error, Result};

#[derive(Clone, Debug, Serialize)]
pub struct Polyline {
    pub nodes: Vec<ComplexPoint>,
    /// Gauss–Legendre nodes per segment.
    pub quad_order: usize,
}

impl Polyline {
    pub fn straight(p: &[Complex64], q: &[Complex64], segments: usize, quad_order: usize) -> Self {
        let nodes = (0..=segments)
            .map(|k| {
                let t = k as f64 / segments as f64;
                p.iter().zip(q).map(|(a, b)| a + (b - a) * t).collect()
            })
            .collect();
        Polyline { nodes, quad_order }
    }

    pub fn segments(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }

    /// Inserts segment midpoints.
    fn refined(&self) -> Polyline {
        let mut nodes = Vec::with_capacity(2 * self.nodes.len());
        for w in self.nodes.windows(2) {
            nodes.push(w[0].clone());
            nodes.push(w[0].iter().zip(&w[1]).map(|(a, b)| (a + b) * 0.5).collect());
        }
        nodes.push(self.nodes.last().expect("nonempty polyline").clone());
        Polyline { nodes, quad_order: self.quad_order }
    }
}

fn gauss_rule(order: usize) -> Vec<(f64, f64)> {
    let q = NonZeroUsize::new(order.max(1)).expect("positive order");
    GaussLegendre::new(q).as_node_weight_pairs().iter().map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w)).collect()
}

/// `∫₀¹ F_R(a + t(b−a), b−a) dt`.
fn segment_length(provider: &dyn RobinProvider, a: &[Complex64], b: &[Complex64], rule: &[(f64, f64)]) -> Result<f64> {
    let v = sub(b, a);
    if norm(&v) == 0.0 {
        return Ok(0.0);
    }
    let mut s = 0.0;
    for &(t, w) in rule {
        let z: ComplexPoint = a.iter().zip(&v).map(|(x, d)| x + d * t).collect();
        if !provider.domain().contains(&z) {
            return Err(Error::InvalidInput("path leaves the domain".into()));
        }
        s += w * f_r_length(&metric_at(&provider.robin_jet(&z, 2)?)?, &v);
    }
    Ok(s)
}

/// Riemannian length of the polyline.
pub fn path_length(provider: &dyn RobinProvider, poly: &Polyline) -> Result<f64> {
    if let Some(z) = poly.nodes.iter().find(|z| !provider.domain().contains(z)) {
        return Err(Error::InvalidInput(format!("node {z:?} is outside the domain")));
    }
    let rule = gauss_rule(poly.quad_order);
    let parts: Vec<Result<f64>> =
        poly.nodes.par_windows(2).map(|w| segment_length(provider, &w[0], &w[1], &rule)).collect();
    parts.into_iter().sum()
}

#[derive(Clone, Debug, Serialize)]
pub struct DistanceBudget {
    /// Segment counts of the node-doubling schedule.
    pub schedule: Vec<usize>,
    pub max_iters: usize,
    /// Relative energy decrease below which a level stops.
    pub tol: f64,
    pub quad_order: usize,
}

impl Default for DistanceBudget {
    fn default() -> Self {
        DistanceBudget { schedule: vec![8, 16, 32], max_iters: 200, tol: 1e-10, quad_order: 4 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DistanceEstimate {
    pub value: f64,
    pub polyline: Polyline,
    pub iterations: usize,
    /// Best length after each accepted step; nonincreasing.
    pub history: Vec<f64>,
    pub converged: bool,
    pub flagged: bool,
}

/// `m Σ L_s²` over segments, which is minimized by equal-length segments of
/// a shortest path.
fn energy(provider: &dyn RobinProvider, nodes: &[ComplexPoint], rule: &[(f64, f64)]) -> Option<(f64, f64)> {
    let lens: Vec<Option<f64>> =
        nodes.par_windows(2).map(|w| segment_length(provider, &w[0], &w[1], rule).ok()).collect();
    let mut e = 0.0;
    let mut l = 0.0;
    for x in lens {
        let x = x?;
        e += x * x;
        l += x;
    }
    Some((e * (nodes.len() - 1) as f64, l))
}

/// Central-difference gradient of the energy in the real coordinates of the
/// interior nodes. Moving a node only changes its two adjacent segments.
fn energy_gradient(provider: &dyn RobinProvider, nodes: &[ComplexPoint], rule: &[(f64, f64)], h: f64) -> Option<Vec<ComplexPoint>> {
    let m = (nodes.len() - 1) as f64;
    let local = |k: usize, z: &ComplexPoint| -> Option<f64> {
        let a = segment_length(provider, &nodes[k - 1], z, rule).ok()?;
        let b = segment_length(provider, z, &nodes[k + 1], rule).ok()?;
        Some(m * (a * a + b * b))
    };
    (1..nodes.len() - 1)
        .into_par_iter()
        .map(|k| {
            let n = nodes[k].len();
            let mut g = vec![c(0.0, 0.0); n];
            for j in 0..n {
                for (dir, slot) in [(c(1.0, 0.0), 0), (c(0.0, 1.0), 1)] {
                    let mut zp = nodes[k].clone();
                    let mut zm = nodes[k].clone();
                    zp[j] += dir * h;
                    zm[j] -= dir * h;
                    let d = (local(k, &zp)? - local(k, &zm)?) / (2.0 * h);
                    if slot == 0 {
                        g[j].re = d;
                    } else {
                        g[j].im = d;
                    }
                }
            }
            Some(g)
        })
        .collect()
}

/// Upper estimate of `d_R(p, q)` by descent on the discrete path energy with
/// Armijo backtracking and node doubling.
pub fn distance_estimate(provider: &dyn RobinProvider, p: &[Complex64], q: &[Complex64], budget: &DistanceBudget) -> Result<DistanceEstimate> {
    let dom = provider.domain();
    if !dom.contains(p) || !dom.contains(q) {
        return Err(Error::InvalidInput("endpoints must lie inside the domain".into()));
    }
    let first = *budget.schedule.first().ok_or_else(|| Error::InvalidInput("empty node schedule".into()))?;
    let rule = gauss_rule(budget.quad_order);
    let mut poly = Polyline::straight(p, q, first, budget.quad_order);
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = true;
    if norm(&sub(p, q)) == 0.0 {
        return Ok(DistanceEstimate { value: 0.0, polyline: poly, iterations, history: vec![0.0], converged, flagged: false });
    }
    let mut best = f64::INFINITY;
    for (level, &segs) in budget.schedule.iter().enumerate() {
        if level > 0 {
            while poly.segments() < segs {
                poly = poly.refined();
            }
        }
        let (mut e, mut len) =
            energy(provider, &poly.nodes, &rule).ok_or_else(|| Error::InvalidInput("initial path leaves the domain".into()))?;
        best = best.min(len);
        history.push(best);
        let scale = norm(&sub(p, q)) / segs as f64;
        let mut step = scale * scale / e.max(1e-300);
        let mut level_converged = false;
        for _ in 0..budget.max_iters {
            iterations += 1;
            let h = 1e-6 * scale;
            let Some(grad) = energy_gradient(provider, &poly.nodes, &rule, h) else { break };
            let gnorm2: f64 = grad.iter().map(|g| norm_sq(g)).sum();
            if gnorm2 == 0.0 {
                level_converged = true;
                break;
            }
            let mut accepted = None;
            for _ in 0..40 {
                let mut trial = poly.nodes.clone();
                for (k, g) in grad.iter().enumerate() {
                    for j in 0..g.len() {
                        trial[k + 1][j] -= g[j] * step;
                    }
                }
                if let Some((et, lt)) = energy(provider, &trial, &rule) {
                    if et <= e - 1e-4 * step * gnorm2 {
                        accepted = Some((trial, et, lt));
                        break;
                    }
                }
                step *= 0.5;
            }
            let Some((trial, et, lt)) = accepted else {
                level_converged = true;
                break;
            };
            let rel = (e - et) / e;
            poly.nodes = trial;
            e = et;
            len = lt;
            best = best.min(len);
            history.push(best);
            step *= 2.0;
            if rel < budget.tol {
                level_converged = true;
                break;
            }
        }
        converged &= level_converged;
    }
    let fine = Polyline { nodes: poly.nodes.clone(), quad_order: 2 * budget.quad_order };
    let value = path_length(provider, &fine)?;
    let flagged = !converged || history.windows(2).any(|w| w[1] > w[0]);
    Ok(DistanceEstimate { value: value.min(best.max(value)), polyline: fine, iterations, history, converged, flagged })
}

/// Kobayashi length on the ball `B(0, r)`:
/// `F_K² = |v|²/(r²−|z|²) + |⟨z,v⟩|²/(r²−|z|²)²`.
pub fn ball_kobayashi(z: &[Complex64], v: &[Complex64], r: f64) -> Result<f64> {
    let d = r * r - norm_sq(z);
    if !(d > 0.0) {
        return Err(Error::InvalidInput("point is not inside the ball".into()));
    }
    Ok((norm_sq(v) / d + hermitian(z, v).norm_sqr() / (d * d)).sqrt())
}

/// Kobayashi distance on the unit ball.
pub fn ball_kobayashi_distance(z: &[Complex64], w: &[Complex64]) -> Result<f64> {
    let (a, b) = (1.0 - norm_sq(z), 1.0 - norm_sq(w));
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InvalidInput("point is not inside the unit ball".into()));
    }
    let x = (1.0 - a * b / (c(1.0, 0.0) - hermitian(z, w)).norm_sqr()).max(0.0).sqrt();
    Ok(x.min(1.0 - 1e-16).atanh())
}

/// `d_R = √(2n−2)·d_K` on the unit ball.
pub fn ball_distance(z: &[Complex64], w: &[Complex64]) -> Result<f64> {
    let n = z.len() as f64;
    Ok((2.0 * n - 2.0).sqrt() * ball_kobayashi_distance(z, w)?)
}

#[derive(Clone, Debug, Serialize)]
pub struct HyperbolicityReport {
    pub samples: usize,
    pub delta: f64,
    /// Quartiles and 99th percentile of the per-quadruple defect.
    pub quantiles: Vec<(f64, f64)>,
}

/// Four-point defect `(S₁ − S₂)/2` of the largest two pair sums.
pub fn four_point_defect(d: &dyn Fn(&[Complex64], &[Complex64]) -> f64, x: &[Complex64], y: &[Complex64], z: &[Complex64], w: &[Complex64]) -> f64 {
    let mut s = [d(x, y) + d(z, w), d(x, z) + d(y, w), d(x, w) + d(y, z)];
    s.sort_by(|a, b| b.total_cmp(a));
    0.5 * (s[0] - s[1])
}

/// Uniform samples in the ball `|z| ≤ radius` of `C^n`.
pub fn ball_samples(n: usize, count: usize, radius: f64, seed: u64) -> Vec<ComplexPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let g: Vec<Complex64> = (0..n).map(|_| c(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
            let s = radius * rng.random::<f64>().powf(1.0 / (2 * n) as f64) / norm(&g);
            g.iter().map(|x| x * s).collect()
        })
        .collect()
}

/// Index quadruples drawn from `points` with their four-point defects. The
/// first `k` quadruples are the same for every call with the same seed.
pub fn four_point_defects(
    d: &(dyn Fn(&[Complex64], &[Complex64]) -> f64 + Sync),
    points: &[ComplexPoint],
    quadruples: usize,
    seed: u64,
) -> Result<Vec<([usize; 4], f64)>> {
    if quadruples == 0 || points.is_empty() {
        return Err(Error::InvalidInput("need at least one quadruple".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx: Vec<[usize; 4]> = (0..quadruples).map(|_| std::array::from_fn(|_| rng.random_range(0..points.len()))).collect();
    Ok(idx
        .into_par_iter()
        .map(|q| (q, four_point_defect(d, &points[q[0]], &points[q[1]], &points[q[2]], &points[q[3]])))
        .collect())
}

/// Largest four-point defect over sampled quadruples.
pub fn gromov_delta(
    d: &(dyn Fn(&[Complex64], &[Complex64]) -> f64 + Sync),
    points: &[ComplexPoint],
    quadruples: usize,
    seed: u64,
) -> Result<HyperbolicityReport> {
    let mut defects: Vec<f64> = four_point_defects(d, points, quadruples, seed)?.into_iter().map(|x| x.1).collect();
    let delta = defects.iter().cloned().fold(0.0, f64::max);
    defects.sort_by(f64::total_cmp);
    let at = |f: f64| defects[((defects.len() - 1) as f64 * f).round() as usize];
    let quantiles = [0.25, 0.5, 0.75, 0.99].iter().map(|&f| (f, at(f))).collect();
    Ok(HyperbolicityReport { samples: quadruples, delta, quantiles })
}

/// Horizontal-chord graph on boundary samples.
pub struct CcGraph {
    points: Vec<ComplexPoint>,
    graph: UnGraph<(), f64>,
}

impl CcGraph {
    /// `m` quasi-uniform samples plus `extra` boundary points. A chord is an
    /// edge when it is shorter than `reach` and, once its real-normal part is
    /// removed, the component along `i·ν` is below `theta` times what remains.
    /// The weight is the Levi length of the horizontal part.
    pub fn new(domain: &DomainSpec, m: usize, extra: &[ComplexPoint], theta: f64, reach: f64, seed: u64) -> Result<Self> {
        let mut points: Vec<ComplexPoint> = domain.boundary_sample(m, seed)?.into_iter().map(|bp| bp.x).collect();
        for x in extra {
            if domain.psi(x).abs() > 1e-9 {
                return Err(Error::InvalidInput("graph endpoints must lie on the boundary".into()));
            }
            points.push(x.clone());
        }
        let grads: Vec<ComplexPoint> = points.iter().map(|x| domain.grad(x)).collect();
        let edges: Vec<Vec<(usize, usize, f64)>> = (0..points.len())
            .into_par_iter()
            .map(|i| {
                let mut out = Vec::new();
                for j in i + 1..points.len() {
                    let chord = sub(&points[j], &points[i]);
                    let len = norm(&chord);
                    if len == 0.0 || len > reach {
                        continue;
                    }
                    // horizontality judged at both ends
                    let Some(h0) = horizontal_part(&grads[i], &chord, theta) else { continue };
                    let Some(h1) = horizontal_part(&grads[j], &chord, theta) else { continue };
                    let w = 0.5 * (domain.levi_form(&points[i], &h0).max(0.0).sqrt() + domain.levi_form(&points[j], &h1).max(0.0).sqrt());
                    out.push((i, j, w));
                }
                out
            })
            .collect();
        let mut graph = UnGraph::<(), f64>::with_capacity(points.len(), 0);
        for _ in 0..points.len() {
            graph.add_node(());
        }
        for (i, j, w) in edges.into_iter().flatten() {
            graph.add_edge(NodeIndex::new(i), NodeIndex::new(j), w);
        }
        Ok(CcGraph { points, graph })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Node index of the `k`-th extra point.
    pub fn extra_index(&self, k: usize, extras: usize) -> usize {
        self.points.len() - extras + k
    }

    /// Graph distances from node `i` to all nodes.
    pub fn distances_from(&self, i: usize) -> Vec<f64> {
        let map = petgraph::algo::dijkstra(&self.graph, NodeIndex::new(i), None, |e| *e.weight());
        let mut out = vec![f64::INFINITY; self.points.len()];
        for (k, d) in map {
            out[k.index()] = d;
        }
        out
    }

    pub fn distance(&self, i: usize, j: usize) -> Result<f64> {
        let d = self.distances_from(i)[j];
        if d.is_finite() {
            Ok(d)
        } else {
            Err(Error::NoConvergence("horizontal graph is disconnected at this resolution".into()))
        }
    }
}

/// Horizontal part of `chord` at a point with gradient `grad`, or `None` when
/// the chord leaves the horizontality cone.
fn horizontal_part(grad: &[Complex64], chord: &[Complex64], theta: f64) -> Option<ComplexPoint> {
    let (h, vn) = split_at_gradient(grad, chord);
    let gbar: ComplexPoint = grad.iter().map(|g| g.conj()).collect();
    let coef = hermitian(&vn, &gbar) / norm_sq(&gbar);
    let reeb = coef.im.abs() * norm(&gbar);
    let tangential = (norm_sq(&h) + reeb * reeb).sqrt();
    (reeb < theta * tangential).then_some(h)
}

/// Chord reach giving a few hundred neighbours per node at resolution `m`.
pub fn cc_reach(n: usize, m: usize) -> f64 {
    4.0 * (crate::domain::sphere_area(n) / m as f64).powf(1.0 / (2 * n - 1) as f64)
}

/// Default horizontality tolerance.
pub const CC_THETA: f64 = 0.1;

/// Approximate horizontal distance between boundary points `p` and `q`.
pub fn cc_distance(domain: &DomainSpec, p: &[Complex64], q: &[Complex64], resolution: usize) -> Result<f64> {
    if norm(&sub(p, q)) == 0.0 {
        return Ok(0.0);
    }
    let g = CcGraph::new(domain, resolution, &[p.to_vec(), q.to_vec()], CC_THETA, cc_reach(domain.n(), resolution), 7)?;
    g.distance(g.extra_index(0, 2), g.extra_index(1, 2))
}

/// `h(x) = δ(x)^{1/2}` and the radial boundary projection.
pub fn surrogate_parts(domain: &DomainSpec, x: &[Complex64]) -> Result<(ComplexPoint, f64)> {
    let frame = domain.nearest_boundary(x)?;
    Ok((domain.radial_projection(x)?, frame.delta.sqrt()))
}

/// `g(x, y) = 2 log((d_H(π x, π y) + max(h(x), h(y))) / (h(x) h(y))^{1/2})`.
pub fn bb_surrogate(domain: &DomainSpec, x: &[Complex64], y: &[Complex64], d_h: &dyn Fn(&[Complex64], &[Complex64]) -> Result<f64>) -> Result<f64> {
    let (px, hx) = surrogate_parts(domain, x)?;
    let (py, hy) = surrogate_parts(domain, y)?;
    let dh = if norm(&sub(&px, &py)) == 0.0 { 0.0 } else { d_h(&px, &py)? };
    Ok(2.0 * ((dh + hx.max(hy)) / (hx * hy).sqrt()).ln())
}

#[derive(Clone, Debug, Serialize)]
pub struct SandwichFit {
    pub alpha: f64,
    pub c: f64,
    pub pairs: usize,
}

/// Smallest `C` over a grid of `α > 1` with `g/α − C ≤ d ≤ α g + C` on every
/// pair, choosing the `α` that minimizes `C`.
pub fn fit_sandwich(pairs: &[(f64, f64)]) -> Result<SandwichFit> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no pairs to fit".into()));
    }
    let need = |alpha: f64| -> f64 {
        pairs.iter().fold(0.0f64, |acc, &(g, d)| acc.max(g / alpha - d).max(d - alpha * g))
    };
    let mut best = (f64::INFINITY, 0.0);
    for k in 1..=400 {
        let alpha = 1.0 + 0.025 * k as f64;
        let cc = need(alpha);
        if cc < best.0 {
            best = (cc, alpha);
        }
    }
    let c = best.0.max(1e-12);
    if !c.is_finite() {
        return Err(Error::NoConvergence("sandwich fit failed".into()));
    }
    Ok(SandwichFit { alpha: best.1, c, pairs: pairs.len() })
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparabilityStats {
    pub samples: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

/// `(|v_N|²/δ² + L_ψ(π z, v_H)/δ)^{1/2}`.
pub fn comparison_length(domain: &DomainSpec, z: &[Complex64], v: &[Complex64]) -> Result<f64> {
    let frame = domain.nearest_boundary(z)?;
    let (vh, vn) = split_at_gradient(&frame.grad, v);
    let d = frame.delta;
    Ok((norm_sq(&vn) / (d * d) + domain.levi_form(&frame.point, &vh).max(0.0) / d).sqrt())
}

/// Ratios `F_R / comparison_length` at points `z` with `δ(z) < max_delta`.
pub fn comparability_scan(
    provider: &dyn RobinProvider,
    points: &[(ComplexPoint, ComplexPoint)],
    max_delta: f64,
) -> Result<ComparabilityStats> {
    let dom = provider.domain();
    let ratios: Vec<Option<f64>> = points
        .par_iter()
        .map(|(z, v)| -> Result<Option<f64>> {
            if dom.nearest_boundary(z)?.delta >= max_delta {
                return Ok(None);
            }
            let f = f_r_length(&metric_at(&provider.robin_jet(z, 2)?)?, v);
            Ok(Some(f / comparison_length(dom, z, v)?))
        })
        .collect::<Result<_>>()?;
    let ratios: Vec<f64> = ratios.into_iter().flatten().collect();
    if ratios.is_empty() {
        return Err(Error::InvalidInput("no sample close enough to the boundary".into()));
    }
    Ok(ComparabilityStats {
        samples: ratios.len(),
        min_ratio: ratios.iter().cloned().fold(f64::INFINITY, f64::min),
        max_ratio: ratios.iter().cloned().fold(0.0, f64::max),
    })
}

/// Points `π − tν` with random unit directions `v`, for `t` in `(t_min, t_max)`.
pub fn near_boundary_samples(domain: &DomainSpec, count: usize, t_min: f64, t_max: f64, seed: u64) -> Result<Vec<(ComplexPoint, ComplexPoint)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = domain.n();
    let base = domain.boundary_sample(count.max(8), seed)?;
    Ok(base
        .into_iter()
        .take(count)
        .map(|bp| {
            let t = t_min + (t_max - t_min) * rng.random::<f64>();
            let nrm = domain.outward_normal(&bp.x);
            let z: ComplexPoint = bp.x.iter().zip(&nrm).map(|(x, e)| x - e * t).collect();
            let g: Vec<Complex64> = (0..n).map(|_| c(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
            let s = 1.0 / norm(&g);
            (z, g.iter().map(|x| x * s).collect())
        })
        .collect())
}
