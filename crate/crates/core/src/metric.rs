//! The Λ-metric `g_{αβ̄} = ∂² log(−Λ)/∂z_α∂z̄_β`, its first and second
//! derivatives, lengths `F_R` and holomorphic sectional curvature, all
//! assembled from Robin jets.

use faer::{Mat, Side};
use num_complex::Complex64;
use serde::Serialize;

use crate::domain::{c, ComplexPoint};
use crate::potential::{JetSource, RobinJet};
use crate::robin::RobinProvider;
use crate::{Error, Result};

/// Largest accepted condition number of `g`.
pub const MAX_CONDITION: f64 = 1e12;

pub type Matrix = Vec<Vec<Complex64>>;

#[derive(Clone, Debug, Serialize)]
pub struct MetricEval {
    pub z: ComplexPoint,
    /// `g[α][β] = g_{αβ̄}`.
    pub g: Matrix,
    /// `g_inv[β][α]` with `Σ_β g[α][β]·g_inv[β][γ] = δ_{αγ}`.
    pub g_inv: Matrix,
    pub det_g: f64,
    pub condition: f64,
    /// `dg[γ][α][β] = ∂g_{αβ̄}/∂z_γ`, present for jets of order ≥ 3.
    pub dg: Option<Vec<Matrix>>,
    /// `d2g[γ][δ][α][β] = ∂²g_{αβ̄}/∂z_γ∂z̄_δ`, present for jets of order ≥ 4.
    pub d2g: Option<Vec<Vec<Matrix>>>,
    pub source: JetSource,
    /// Largest per-entry error estimate of the underlying jet.
    pub jet_err: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CurvatureEval {
    pub z: ComplexPoint,
    pub v: ComplexPoint,
    /// Real part of the quotient.
    pub r: f64,
    /// `R_{ij̄kl̄} v^i v̄^j v^k v̄^l`.
    pub numerator: Complex64,
    /// `(g_{ij̄} v^i v̄^j)²`.
    pub denominator: f64,
}

fn zeros(n: usize) -> Matrix {
    vec![vec![c(0.0, 0.0); n]; n]
}

/// `g` from the explicit rational expressions in the derivatives of `Λ`.
pub fn metric_at(jet: &RobinJet) -> Result<MetricEval> {
    let n = jet.n();
    let order = jet.order();
    if order < 2 {
        return Err(Error::InvalidInput("the metric needs a jet of order at least 2".into()));
    }
    let l = jet.lambda();
    if !(l < 0.0) {
        return Err(Error::InvalidInput(format!("Λ = {l} is not negative")));
    }
    let l = c(l, 0.0);
    let d = |h: &[usize], a: &[usize]| jet.d(h, a);
    let mut g = zeros(n);
    for al in 0..n {
        for be in 0..n {
            g[al][be] = d(&[al], &[be]) / l - d(&[al], &[]) * d(&[], &[be]) / (l * l);
        }
    }
    let dg = (order >= 3).then(|| {
        let mut out = vec![zeros(n); n];
        for ga in 0..n {
            for al in 0..n {
                for be in 0..n {
                    let (la, lb, lg) = (d(&[al], &[]), d(&[], &[be]), d(&[ga], &[]));
                    out[ga][al][be] = d(&[al, ga], &[be]) / l - d(&[al], &[be]) * lg / (l * l)
                        - (d(&[al, ga], &[]) * lb + la * d(&[ga], &[be])) / (l * l)
                        + la * lb * lg * 2.0 / (l * l * l);
                }
            }
        }
        out
    });
    let d2g = (order >= 4).then(|| {
        let mut out = vec![vec![zeros(n); n]; n];
        for ga in 0..n {
            for de in 0..n {
                for al in 0..n {
                    for be in 0..n {
                        let la = d(&[al], &[]);
                        let lb = d(&[], &[be]);
                        let lg = d(&[ga], &[]);
                        let ld = d(&[], &[de]);
                        let (l2, l3, l4) = (l * l, l * l * l, l * l * l * l);
                        let t1 = d(&[al, ga], &[be, de]) / l - d(&[al, ga], &[be]) * ld / l2;
                        let t2 = -(d(&[al], &[be, de]) * lg + d(&[al], &[be]) * d(&[ga], &[de])) / l2
                            + d(&[al], &[be]) * lg * ld * 2.0 / l3;
                        let t3 = -(d(&[al, ga], &[de]) * lb + d(&[al, ga], &[]) * d(&[], &[be, de])) / l2
                            + d(&[al, ga], &[]) * lb * ld * 2.0 / l3;
                        let t4 = -(d(&[al], &[de]) * d(&[ga], &[be]) + la * d(&[ga], &[be, de])) / l2
                            + la * d(&[ga], &[be]) * ld * 2.0 / l3;
                        let t5 = (d(&[al], &[de]) * lb * lg + la * d(&[], &[be, de]) * lg + la * lb * d(&[ga], &[de]))
                            * 2.0
                            / l3
                            - la * lb * lg * ld * 6.0 / l4;
                        out[ga][de][al][be] = t1 + t2 + t3 + t4 + t5;
                    }
                }
            }
        }
        out
    });
    finish(jet, g, dg, d2g)
}

/// Same tensors read off the Taylor jet of `log(−Λ)`.
pub fn metric_via_log(jet: &RobinJet) -> Result<MetricEval> {
    let n = jet.n();
    let order = jet.order();
    if order < 2 {
        return Err(Error::InvalidInput("the metric needs a jet of order at least 2".into()));
    }
    if !(jet.lambda() < 0.0) {
        return Err(Error::InvalidInput(format!("Λ = {} is not negative", jet.lambda())));
    }
    let phi = jet.jet.scale(c(-1.0, 0.0)).ln();
    let d = |h: &[usize], a: &[usize]| {
        let mut e = vec![0u8; 2 * n];
        for &i in h {
            e[i] += 1;
        }
        for &j in a {
            e[n + j] += 1;
        }
        phi.derivative(&e)
    };
    let mut g = zeros(n);
    for al in 0..n {
        for be in 0..n {
            g[al][be] = d(&[al], &[be]);
        }
    }
    let dg = (order >= 3).then(|| {
        (0..n)
            .map(|ga| (0..n).map(|al| (0..n).map(|be| d(&[al, ga], &[be])).collect()).collect())
            .collect()
    });
    let d2g = (order >= 4).then(|| {
        (0..n)
            .map(|ga| {
                (0..n)
                    .map(|de| (0..n).map(|al| (0..n).map(|be| d(&[al, ga], &[be, de])).collect()).collect())
                    .collect()
            })
            .collect()
    });
    finish(jet, g, dg, d2g)
}

fn finish(jet: &RobinJet, mut g: Matrix, dg: Option<Vec<Matrix>>, d2g: Option<Vec<Vec<Matrix>>>) -> Result<MetricEval> {
    let n = g.len();
    // exact Hermitian part; the antisymmetric residue is jet noise
    for a in 0..n {
        for b in a..n {
            let m = (g[a][b] + g[b][a].conj()) * 0.5;
            g[a][b] = m;
            g[b][a] = m.conj();
        }
    }
    let m = Mat::<Complex64>::from_fn(n, n, |i, j| g[i][j]);
    let eig = m.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Singular(format!("eigendecomposition failed: {e:?}")))?;
    let s = eig.S().column_vector();
    let u = eig.U();
    let lmin = (0..n).map(|i| s[i].re).fold(f64::INFINITY, f64::min);
    let lmax = (0..n).map(|i| s[i].re).fold(f64::NEG_INFINITY, f64::max);
    if !(lmin > 0.0) {
        return Err(Error::Singular(format!("metric is not positive definite (smallest eigenvalue {lmin:.3e})")));
    }
    let condition = lmax / lmin;
    if condition > MAX_CONDITION {
        return Err(Error::Singular(format!("metric condition {condition:.3e} exceeds {MAX_CONDITION:.0e}")));
    }
    let mut g_inv = zeros(n);
    for i in 0..n {
        for j in 0..n {
            g_inv[i][j] = (0..n).map(|k| u[(i, k)] * u[(j, k)].conj() / s[k].re).sum();
        }
    }
    let det_g = (0..n).map(|i| s[i].re).product();
    let jet_err = jet.err_est.iter().cloned().fold(0.0, f64::max);
    Ok(MetricEval { z: jet.p.clone(), g, g_inv, det_g, condition, dg, d2g, source: jet.source, jet_err })
}

impl MetricEval {
    pub fn n(&self) -> usize {
        self.g.len()
    }

    /// `Σ g_{αβ̄} v^α v̄^β`.
    pub fn quadratic(&self, v: &[Complex64]) -> f64 {
        let n = self.n();
        let mut s = c(0.0, 0.0);
        for a in 0..n {
            for b in 0..n {
                s += self.g[a][b] * v[a] * v[b].conj();
            }
        }
        s.re
    }

    /// Smallest eigenvalue of `g`.
    pub fn min_eigenvalue(&self) -> f64 {
        crate::domain::min_hermitian_eigenvalue(&self.g)
    }

    /// `max |∂_γ g_{αβ̄} − ∂_α g_{γβ̄}|`.
    pub fn kahler_defect(&self) -> Option<f64> {
        let dg = self.dg.as_ref()?;
        let n = self.n();
        let mut m = 0.0f64;
        for ga in 0..n {
            for al in 0..n {
                for be in 0..n {
                    m = m.max((dg[ga][al][be] - dg[al][ga][be]).norm());
                }
            }
        }
        Some(m)
    }

    /// `max |g·g_inv − I|`.
    pub fn inverse_defect(&self) -> f64 {
        let n = self.n();
        let mut m = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let s: Complex64 = (0..n).map(|k| self.g[i][k] * self.g_inv[k][j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                m = m.max((s - want).norm());
            }
        }
        m
    }
}

/// `F_R(z, v) = (Σ g_{αβ̄} v^α v̄^β)^{1/2}`.
pub fn f_r_length(me: &MetricEval, v: &[Complex64]) -> f64 {
    me.quadratic(v).max(0.0).sqrt()
}

/// `R_{ij̄kl̄} = −∂_k∂̄_l g_{ij̄} + Σ g^{νμ̄} ∂_k g_{iμ̄} ∂̄_l g_{νj̄}`.
pub fn curvature_tensor(me: &MetricEval) -> Result<Vec<Vec<Vec<Vec<Complex64>>>>> {
    let (Some(dg), Some(d2g)) = (me.dg.as_ref(), me.d2g.as_ref()) else {
        return Err(Error::InvalidInput("curvature needs a jet of order 4".into()));
    };
    let n = me.n();
    let mut r = vec![vec![vec![vec![c(0.0, 0.0); n]; n]; n]; n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let mut s = -d2g[k][l][i][j];
                    for mu in 0..n {
                        for nu in 0..n {
                            // ∂̄_l g_{νj̄} = conj(∂_l g_{jν̄})
                            s += me.g_inv[mu][nu] * dg[k][i][mu] * dg[l][j][nu].conj();
                        }
                    }
                    r[i][j][k][l] = s;
                }
            }
        }
    }
    Ok(r)
}

/// Holomorphic sectional curvature in the complex line of `v`.
pub fn curvature_at(me: &MetricEval, v: &[Complex64]) -> Result<CurvatureEval> {
    let r = curvature_tensor(me)?;
    let n = me.n();
    let q = me.quadratic(v);
    if !(q > 0.0) {
        return Err(Error::InvalidInput("curvature direction is degenerate".into()));
    }
    let mut num = c(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    num += r[i][j][k][l] * v[i] * v[j].conj() * v[k] * v[l].conj();
                }
            }
        }
    }
    let den = q * q;
    Ok(CurvatureEval { z: me.z.clone(), v: v.to_vec(), r: num.re / den, numerator: num, denominator: den })
}

/// Metric at `z` from a provider, with derivatives up to `order − 2`.
pub fn metric_from(provider: &dyn RobinProvider, z: &[Complex64], order: usize) -> Result<MetricEval> {
    metric_at(&provider.robin_jet(z, order)?)
}

/// `R(z, v)` from a provider.
pub fn curvature_from(provider: &dyn RobinProvider, z: &[Complex64], v: &[Complex64]) -> Result<f64> {
    Ok(curvature_at(&metric_from(provider, z, 4)?, v)?.r)
}

/// `F_R(z, v)` from a provider.
pub fn length_from(provider: &dyn RobinProvider, z: &[Complex64], v: &[Complex64]) -> Result<f64> {
    Ok(f_r_length(&metric_from(provider, z, 2)?, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainSpec;
    use crate::potential::ball_robin_jet;
    use crate::robin::ClosedForm;

    fn ball_jet(p: &[Complex64], order: usize) -> RobinJet {
        ball_robin_jet(&[c(0.0, 0.0), c(0.0, 0.0)], 1.0, p, order).unwrap()
    }

    #[test]
    fn ball_metric_at_center() {
        let me = metric_at(&ball_jet(&[c(0.0, 0.0), c(0.0, 0.0)], 4)).unwrap();
        assert!((me.g[0][0].re - 2.0).abs() < 1e-14 && (me.g[1][1].re - 2.0).abs() < 1e-14);
        assert!(me.g[0][1].norm() < 1e-14);
        assert!((f_r_length(&me, &[c(1.0, 0.0), c(0.0, 0.0)]) - 2f64.sqrt()).abs() < 1e-14);
        assert!(me.inverse_defect() < 1e-12);
    }

    #[test]
    fn explicit_and_log_routes_agree() {
        let p = vec![c(0.3, -0.2), c(0.1, 0.4)];
        let j = ball_jet(&p, 4);
        let a = metric_at(&j).unwrap();
        let b = metric_via_log(&j).unwrap();
        let (ad, bd) = (a.d2g.unwrap(), b.d2g.unwrap());
        for ga in 0..2 {
            for de in 0..2 {
                for al in 0..2 {
                    for be in 0..2 {
                        let x = ad[ga][de][al][be];
                        let y = bd[ga][de][al][be];
                        assert!((x - y).norm() < 1e-10 * (1.0 + y.norm()), "{x} {y}");
                    }
                }
            }
        }
        for al in 0..2 {
            for be in 0..2 {
                assert!((a.g[al][be] - b.g[al][be]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn ball_determinant_and_curvature() {
        for p in [vec![c(0.5, 0.0), c(0.0, 0.0)], vec![c(0.2, 0.3), c(-0.4, 0.1)]] {
            let me = metric_at(&ball_jet(&p, 4)).unwrap();
            let r2: f64 = p.iter().map(|x| x.norm_sqr()).sum();
            // (2n−2)^n r² / (r² − |z|²)^{n+1}
            let want = 4.0 / (1.0 - r2).powi(3);
            assert!((me.det_g - want).abs() < 1e-10 * want);
            for v in [vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.3, 0.2), c(-1.0, 0.5)]] {
                let k = curvature_at(&me, &v).unwrap();
                assert!((k.r + 1.0).abs() < 1e-9, "{}", k.r);
                assert!(k.numerator.im.abs() < 1e-8 * k.denominator);
                let scaled: Vec<Complex64> = v.iter().map(|x| x * c(-0.7, 2.0)).collect();
                assert!((curvature_at(&me, &scaled).unwrap().r - k.r).abs() < 1e-12);
            }
            assert!(me.kahler_defect().unwrap() < 1e-10);
        }
    }

    #[test]
    fn refuses_ill_conditioned_metric() {
        let p = vec![c(1.0 - 1e-13, 0.0), c(0.0, 0.0)];
        assert!(matches!(metric_at(&ball_jet(&p, 2)), Err(Error::Singular(_))));
        assert!(metric_at(&ball_jet(&p, 1)).is_err());
    }

    #[test]
    fn provider_helpers() {
        let cf = ClosedForm::new(DomainSpec::unit_ball(2)).unwrap();
        let z = vec![c(0.1, 0.0), c(0.0, 0.2)];
        let r = curvature_from(&cf, &z, &[c(0.0, 1.0), c(1.0, 0.0)]).unwrap();
        assert!((r + 1.0).abs() < 1e-9);
        let f = length_from(&cf, &z, &[c(2.0, 0.0), c(0.0, 0.0)]).unwrap();
        let unit = length_from(&cf, &z, &[c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert!((f - 2.0 * unit).abs() < 1e-12);
    }
}
