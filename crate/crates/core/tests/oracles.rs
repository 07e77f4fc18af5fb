//! Independent oracles for the analytic and numerical jets: exact power
//! series, nested finite differences and closed-form Green functions.

mod common;

use common::*;
use num_complex::Complex64;
use robinfield::dirichlet::{PoleSolver, SolverConfig};
use robinfield::domain::{norm, norm_sq, random_unitary, sub, Bump, Similarity};
use robinfield::potential::{ball_robin_jet, halfspace_robin_jet, kernel, kernel_jet};
use robinfield::robin::{ClosedForm, Numerical, RobinProvider};
use robinfield::{c, ComplexPoint, DomainSpec};

fn close(a: Complex64, b: Complex64, tol: f64, scale: f64) -> bool {
    (a - b).norm() <= tol * scale.max(b.norm())
}

#[test]
fn ball_jet_matches_power_series_to_order_four() {
    let p = vec![c(0.3, 0.0), c(0.0, 0.2)];
    let jet = ball_robin_jet(&[c(0.0, 0.0); 2], 1.0, &p, 4).unwrap();
    // Λ(p + h) = −(s − q)^{−2}, s = 1 − |p|², q = 2 Re⟨h, p⟩ + |h|²
    let series = inverse_power_series(1.0 - norm_sq(&p), &hermitian_shift(&p, 1.0), 2.0, 4, 4).scaled(-1.0);
    for e in all_exponents(2, 4) {
        let want = series.derivative(&e);
        assert!(close(jet.jet.derivative(&e), want, 1e-8, 1.0), "{e:?}: {} vs {want}", jet.jet.derivative(&e));
    }
}

#[test]
fn kernel_jet_matches_series_and_nested_differences() {
    let p = vec![c(0.0, 0.0); 2];
    let x = vec![c(0.7, 0.0), c(0.0, 0.3)];
    let jet = kernel_jet(&x, &p, 4).unwrap();
    // |x − p − h|² = s − (2 Re⟨h, x − p⟩ − |h|²)
    let d = sub(&x, &p);
    let series = inverse_power_series(norm_sq(&d), &hermitian_shift(&d, -1.0), 1.0, 4, 4);
    let f = |q: &[Complex64]| c(kernel(&x, q), 0.0);
    for e in all_exponents(2, 4) {
        let got = jet.derivative(&e);
        assert!(close(got, series.derivative(&e), 1e-10, 1.0), "{e:?}");
        let order: u8 = e.iter().sum();
        if order <= 2 {
            let fd = fd_wirtinger(&f, &p, &e, 1e-2);
            assert!(close(got, fd, 1e-6, 1.0), "{e:?}: {got} vs {fd}");
        }
    }
    // the example from x − p = (1, 0): ∂K/∂p_1 = x̄_1 − p̄_1 = 1
    let j = kernel_jet(&[c(1.0, 0.0), c(0.0, 0.0)], &p, 1).unwrap();
    assert!((j.derivative(&[1, 0, 0, 0]) - c(1.0, 0.0)).norm() < 1e-14);
}

#[test]
fn kernel_is_harmonic_away_from_pole() {
    let p = vec![c(0.1, -0.2), c(0.3, 0.0)];
    let h = 1e-3;
    let dom = DomainSpec::ball(2, vec![c(0.0, 0.0); 2], 3.0).unwrap();
    let mut n = 0;
    for z in interior(&dom, 200, 3.0, 4) {
        if norm(&sub(&z, &p)) <= 0.5 || n == 50 {
            continue;
        }
        n += 1;
        let mut lap = -8.0 * kernel(&z, &p);
        for j in 0..2 {
            for dz in [c(h, 0.0), c(-h, 0.0), c(0.0, h), c(0.0, -h)] {
                let mut w = z.clone();
                w[j] += dz;
                lap += kernel(&w, &p);
            }
        }
        assert!((lap / (h * h)).abs() < 1e-4, "{z:?}");
    }
    assert_eq!(n, 50);
}

#[test]
fn perturbed_ball_psi_matches_finite_differences() {
    let d = DomainSpec::perturbed_ball(2, 0.01, Bump::default()).unwrap();
    let f = |z: &[Complex64]| c(d.psi(z), 0.0);
    for z in interior(&d, 6, 0.95, 9) {
        let jet = d.psi_jet(&z, 2).unwrap();
        for e in all_exponents(2, 2) {
            // the bump varies fast near the edge of its support
            let fd = fd_wirtinger(&f, &z, &e, 2e-4);
            assert!((jet.derivative(&e) - fd).norm() < 1e-8, "{e:?} at {z:?}: {} {fd}", jet.derivative(&e));
        }
    }
}

#[test]
fn ball_lambda_depends_only_on_modulus() {
    let o = vec![c(0.0, 0.0); 2];
    let mut g = rng(21);
    let p = vec![c(0.25, 0.1), c(-0.2, 0.3)];
    let base = ball_robin_jet(&o, 1.0, &p, 1).unwrap();
    for _ in 0..20 {
        let u = random_unitary(2, &mut g);
        let map = Similarity { s: c(1.0, 0.0), u: u.clone(), b: o.clone() };
        let jet = ball_robin_jet(&o, 1.0, &map.apply(&p), 1).unwrap();
        assert!((jet.lambda() - base.lambda()).abs() < 1e-13);
        // ∂_j Λ(p) = Σ_k ∂_k Λ(Up) U_kj
        for j in 0..2 {
            let chain: Complex64 = (0..2).map(|k| jet.d(&[k], &[]) * u[k][j]).sum();
            assert!((chain - base.d(&[j], &[])).norm() < 1e-12);
        }
    }
}

#[test]
fn half_space_jet_is_scale_free() {
    let a = vec![c(0.0, 0.0), c(0.5, 0.0)];
    let p = vec![c(0.1, 0.2), c(-0.5, 0.1)];
    let want = halfspace_robin_jet(&a, &p, 4).unwrap();
    // reflection formula: Λ_H = −|p − p*|^{−2}
    let dist = (1.0 - 2.0 * (a[1] * p[1]).re) / (2.0 * norm(&a));
    assert!((want.lambda() + (2.0 * dist).powi(-2)).abs() < 1e-14);
    for t in [0.5, 2.0, 7.0] {
        let at: ComplexPoint = a.iter().map(|x| x / t).collect();
        let cf = ClosedForm::new(DomainSpec::half_space(at, 1.0 / t).unwrap()).unwrap();
        let got = cf.robin_jet(&p, 4).unwrap();
        assert!(rel_jet_err(&got, &want) < 1e-12, "t = {t}");
    }
    for (idx, v, _) in want.entries() {
        assert!((v - want.value(&idx.swapped()).conj()).norm() < 1e-12);
    }
}

#[test]
fn ellipsoid_jet_matches_finite_differences_at_center() {
    let d = DomainSpec::ellipsoid(vec![1.0, 2.0]).unwrap();
    let num = Numerical::new(d, SolverConfig::default());
    let p = vec![c(0.0, 0.0); 2];
    let jet = num.robin_jet(&p, 2).unwrap();
    assert!(jet.lambda() < 0.0);
    assert!(jet.jet.value().im.abs() < 1e-12);
    let fd = num.robin_jet_fd(&p, 2, None).unwrap();
    let err = rel_jet_err(&fd, &jet);
    assert!(err < 1e-4, "{err}");
}

#[test]
fn green_function_bounds_symmetry_and_inclusion() {
    let big = DomainSpec::unit_ball(2);
    let small = DomainSpec::ball(2, vec![c(0.0, 0.0); 2], 0.9).unwrap();
    let sb = PoleSolver::new(big.clone(), SolverConfig::default());
    let ss = PoleSolver::new(small.clone(), SolverConfig::default());
    let p = vec![c(0.3, 0.1), c(0.0, -0.2)];
    let hb = sb.handle_for(&p).unwrap();
    let sol = hb.solve_pole(&p, 0).unwrap();
    let hs = ss.handle_for(&p).unwrap();
    let sol_s = hs.solve_pole(&p, 0).unwrap();
    let probes = interior(&big, 4, 0.5, 2);
    let tol = 10.0 * hb.residual_check(&sol, &probes).unwrap().max_boundary.max(1e-12);
    for z in interior(&small, 200, 0.9, 3) {
        if norm(&sub(&z, &p)) < 1e-3 {
            continue;
        }
        let g = hb.green_eval(&sol, &z).unwrap();
        assert!(g >= -tol && g <= kernel(&z, &p) + tol, "{z:?}: {g}");
        assert!(hs.green_eval(&sol_s, &z).unwrap() <= g + tol);
    }
    // G(z, p) = G(p, z) from two independent solves
    let z = vec![c(-0.2, 0.0), c(0.1, 0.4)];
    let hz = sb.handle_for(&z).unwrap();
    let gz = hz.green_eval(&hz.solve_pole(&z, 0).unwrap(), &p).unwrap();
    let gp = hb.green_eval(&sol, &z).unwrap();
    assert!((gz - gp).abs() < 1e-6, "{gz} {gp}");
}

#[test]
fn numerical_metric_converges_on_the_ball() {
    let p = vec![c(0.4, 0.1), c(0.0, 0.2)];
    let exact = robinfield::metric::metric_at(&ball_robin_jet(&[c(0.0, 0.0); 2], 1.0, &p, 2).unwrap()).unwrap();
    let mut errs = Vec::new();
    for m in [200, 400, 800] {
        let cfg = SolverConfig { m_boundary: m, m_charges: m / 2, densify_near_pole: false, ..Default::default() };
        let me = robinfield::metric::metric_at(&Numerical::new(DomainSpec::unit_ball(2), cfg).robin_jet(&p, 2).unwrap()).unwrap();
        let e = (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| (me.g[i][j] - exact.g[i][j]).norm()).fold(0.0, f64::max);
        errs.push(e);
    }
    assert!(errs[1] < errs[0] && errs[2] < errs[1], "{errs:?}");
}
