use std::collections::BTreeMap;
use std::path::PathBuf;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use robinfield::config::{AsymptoticsParams, Experiment, ExperimentConfig, PointSet, TableKind};
use robinfield::dirichlet::PoleSolver;
use robinfield::domain::{norm, random_unitary, scale, Bump, Shape, Similarity};
use robinfield::geodesy::{self, DistanceBudget};
use robinfield::harness::{self, ApproachPath, LengthPart, ReportTable};
use robinfield::metric::{curvature_at, metric_at};
use robinfield::report::{self, Status, SummaryLine};
use robinfield::robin::{ClosedForm, Numerical, RobinProvider};
use robinfield::{c, ComplexPoint, DomainSpec, Error, Result};

struct Output {
    dir: PathBuf,
    prefix: String,
    lines: Vec<SummaryLine>,
    tables: Vec<PathBuf>,
    summary_rows: Vec<Vec<String>>,
}

impl Output {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{}_{name}.csv", self.prefix))
    }

    fn csv<S: AsRef<str>>(&self, name: &str, header: &[S], rows: &[Vec<String>]) -> Result<PathBuf> {
        let p = self.path(name);
        report::write_csv(&p, header, rows)?;
        Ok(p)
    }

    fn line(&mut self, id: &str, kind: &str, pass: Option<bool>, values: BTreeMap<String, f64>, notes: Vec<String>) {
        let status = match pass {
            Some(true) => Status::Pass,
            Some(false) => Status::Fail,
            None => Status::Report,
        };
        self.lines.push(SummaryLine { id: format!("{}.{id}", self.prefix), kind: kind.into(), status, values, notes });
    }

    fn table(&mut self, t: &ReportTable) -> Result<()> {
        let name = t.id.replace(|ch: char| !ch.is_ascii_alphanumeric(), "_").trim_end_matches('_').to_string();
        let p = self.csv(&name, &report::TABLE_HEADER, &report::table_rows(t))?;
        self.tables.push(p);
        self.summary_rows.push(report::summary_row(t));
        Ok(())
    }
}

fn provider(domain: &DomainSpec, cfg: &ExperimentConfig) -> Box<dyn RobinProvider> {
    if cfg.closed_form {
        if let Ok(cf) = ClosedForm::new(domain.clone()) {
            return Box::new(cf);
        }
    }
    Box::new(Numerical::new(domain.clone(), cfg.solver.clone()))
}

fn unit_vector(n: usize, rng: &mut ChaCha8Rng) -> ComplexPoint {
    let v: ComplexPoint = (0..n).map(|_| c(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
    let s = 1.0 / norm(&v);
    scale(&v, s)
}

/// Uniform points of `center + radius·B` that lie in the domain.
fn sample_inside(domain: &DomainSpec, count: usize, radius: f64, seed: u64) -> Result<Vec<ComplexPoint>> {
    let center = domain.center();
    let mut out = Vec::with_capacity(count);
    let mut k = 0u64;
    while out.len() < count {
        if k > 1000 + 100 * count as u64 {
            return Err(Error::InvalidInput("could not sample points inside the domain".into()));
        }
        for z in geodesy::ball_samples(domain.n(), 1, radius, seed.wrapping_add(k)) {
            let w: ComplexPoint = z.iter().zip(&center).map(|(a, b)| a + b).collect();
            if domain.contains(&w) {
                out.push(w);
            }
        }
        k += 1;
    }
    Ok(out)
}

fn points(domain: &DomainSpec, set: &PointSet, seed: u64) -> Result<Vec<ComplexPoint>> {
    match set {
        PointSet::Explicit(p) => Ok(p.clone()),
        PointSet::Random { count, radius } => sample_inside(domain, *count, *radius, seed),
    }
}

fn ball_of(domain: &DomainSpec) -> Result<(ComplexPoint, f64)> {
    match (domain.shape(), domain.similarity()) {
        (Shape::Ball { center, radius }, None) => Ok((center.clone(), *radius)),
        _ => Err(Error::InvalidDomain("this experiment needs a ball for the closed-form distance".into())),
    }
}

fn to_unit(z: &[Complex64], center: &[Complex64], r: f64) -> ComplexPoint {
    z.iter().zip(center).map(|(a, b)| (a - b) / r).collect()
}

/// Runs one configured experiment; `Ok(false)` when an assertion fails.
pub fn run(cfg: &ExperimentConfig) -> Result<bool> {
    std::fs::create_dir_all(&cfg.directory)?;
    let mut out = Output { dir: cfg.directory.clone(), prefix: cfg.prefix.clone(), lines: Vec::new(), tables: Vec::new(), summary_rows: Vec::new() };
    let domain = &cfg.domain;
    let n = domain.n();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let kind = cfg.experiment.kind();
    let mut values = BTreeMap::new();
    let mut notes = Vec::new();
    let pass: Option<bool> = match &cfg.experiment {
        Experiment::Robin { points: set, order } => {
            let prov = provider(domain, cfg);
            let ps = points(domain, set, cfg.seed)?;
            let mut ok = true;
            for (k, p) in ps.iter().enumerate() {
                let jet = prov.robin_jet(p, *order)?;
                ok &= jet.lambda() < 0.0;
                if let Some(f) = &jet.flag {
                    notes.push(format!("pole {}: {f}", k + 1));
                }
                out.csv(&format!("jet_{}", k + 1), &report::JET_HEADER, &report::jet_rows(&jet))?;
                values.insert(format!("lambda_{}", k + 1), jet.lambda());
            }
            Some(ok)
        }
        Experiment::Metric { points: set } => {
            let prov = provider(domain, cfg);
            let ps = points(domain, set, cfg.seed)?;
            let mut rows = Vec::new();
            let mut worst = 0.0f64;
            for p in &ps {
                let me = metric_at(&prov.robin_jet(p, 3)?)?;
                worst = worst.max(me.kahler_defect().unwrap_or(0.0));
                rows.push(report::metric_row(&me));
            }
            out.csv("metric", &report::metric_header(n), &rows)?;
            values.insert("max_kahler_defect".into(), worst);
            Some(true)
        }
        Experiment::Curvature { points: set, directions } => {
            let prov = provider(domain, cfg);
            let ps = points(domain, set, cfg.seed)?;
            let mut rows = Vec::new();
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for p in &ps {
                let me = metric_at(&prov.robin_jet(p, 4)?)?;
                for _ in 0..*directions {
                    let v = unit_vector(n, &mut rng);
                    let r = curvature_at(&me, &v)?.r;
                    lo = lo.min(r);
                    hi = hi.max(r);
                    rows.push(report::curvature_row(p, &v, r));
                }
            }
            out.csv("curvature", &report::curvature_header(n), &rows)?;
            values.insert("min_r".into(), lo);
            values.insert("max_r".into(), hi);
            None
        }
        Experiment::Asymptotics(params) => asymptotics(cfg, params, &mut out, &mut values)?,
        Experiment::Distance { p, q, schedule, max_iters, expected, tolerance } => {
            let prov = provider(domain, cfg);
            let budget = DistanceBudget { schedule: schedule.clone(), max_iters: *max_iters, ..Default::default() };
            let est = geodesy::distance_estimate(prov.as_ref(), p, q, &budget)?;
            let mut header = vec!["node".to_string()];
            header.extend(report::point_header("z", n));
            let rows: Vec<Vec<String>> = est
                .polyline
                .nodes
                .iter()
                .enumerate()
                .map(|(k, z)| {
                    let mut r = vec![k.to_string()];
                    r.extend(z.iter().map(|x| report::num(x.re)).chain(z.iter().map(|x| report::num(x.im))));
                    r
                })
                .collect();
            out.csv("polyline", &header, &rows)?;
            let hist: Vec<Vec<String>> = est.history.iter().enumerate().map(|(k, l)| vec![k.to_string(), report::num(*l)]).collect();
            out.csv("history", &["step", "best_length"], &hist)?;
            values.insert("d_r".into(), est.value);
            values.insert("iterations".into(), est.iterations as f64);
            if est.flagged {
                notes.push("optimizer did not converge on every level".into());
            }
            if let Ok((center, r)) = ball_of(domain) {
                values.insert("ball_closed_form".into(), geodesy::ball_distance(&to_unit(p, &center, r), &to_unit(q, &center, r))?);
            }
            expected.map(|e| {
                values.insert("expected".into(), e);
                (est.value - e).abs() <= tolerance * e.abs().max(1e-300)
            })
        }
        Experiment::Hyperbolicity { samples, quadruples, radius, tolerance } => {
            let (center, r) = ball_of(domain)?;
            let d = |a: &[Complex64], b: &[Complex64]| geodesy::ball_distance(&to_unit(a, &center, r), &to_unit(b, &center, r)).unwrap_or(f64::NAN);
            let ps: Vec<ComplexPoint> =
                geodesy::ball_samples(n, *samples, radius * r, cfg.seed).into_iter().map(|z| z.iter().zip(&center).map(|(a, b)| a + b).collect()).collect();
            let small = geodesy::gromov_delta(&d, &ps, *quadruples, cfg.seed)?;
            let defects = geodesy::four_point_defects(&d, &ps, 2 * quadruples, cfg.seed)?;
            let big = defects.iter().map(|x| x.1).fold(0.0, f64::max);
            let rows: Vec<Vec<String>> = defects.iter().enumerate().map(|(k, (_, x))| vec![(k + 1).to_string(), report::num(*x)]).collect();
            out.csv("quadruples", &["quadruple", "delta"], &rows)?;
            let change = (big - small.delta).abs() / small.delta.max(1e-300);
            values.insert("delta".into(), small.delta);
            values.insert("delta_doubled".into(), big);
            values.insert("relative_change".into(), change);
            for (q, v) in &small.quantiles {
                values.insert(format!("q{}", (q * 100.0).round()), *v);
            }
            Some(big.is_finite() && change < *tolerance)
        }
        Experiment::Comparability { pairs, t_max, resolution } => {
            let (center, r) = ball_of(domain)?;
            let samples = geodesy::near_boundary_samples(domain, 2 * pairs, 0.1 * t_max, *t_max, cfg.seed)?;
            let ps: Vec<ComplexPoint> = samples.into_iter().map(|s| s.0).collect();
            let (xs, ys) = ps.split_at(*pairs);
            let mut extras = Vec::new();
            let mut hs = Vec::new();
            for z in xs.iter().chain(ys) {
                let (p, h) = geodesy::surrogate_parts(domain, z)?;
                extras.push(p);
                hs.push(h);
            }
            let graph = geodesy::CcGraph::new(domain, *resolution, &extras, geodesy::CC_THETA, geodesy::cc_reach(n, *resolution), cfg.seed)?;
            let m = extras.len();
            let mut rows = Vec::new();
            let mut fit_pairs = Vec::new();
            for i in 0..*pairs {
                let dist = graph.distances_from(graph.extra_index(i, m));
                let dh = dist[graph.extra_index(pairs + i, m)];
                if !dh.is_finite() {
                    return Err(Error::NoConvergence("horizontal graph is disconnected at this resolution".into()));
                }
                let (hx, hy) = (hs[i], hs[pairs + i]);
                let g = 2.0 * ((dh + hx.max(hy)) / (hx * hy).sqrt()).ln();
                let d = geodesy::ball_distance(&to_unit(&xs[i], &center, r), &to_unit(&ys[i], &center, r))?;
                rows.push(vec![(i + 1).to_string(), report::num(d), report::num(g), report::num(d / g)]);
                fit_pairs.push((g, d));
            }
            out.csv("pairs", &["pair", "d_r", "g_surrogate", "ratio"], &rows)?;
            let fit = geodesy::fit_sandwich(&fit_pairs)?;
            out.csv("fit", &["alpha", "c", "pairs"], &[vec![report::num(fit.alpha), report::num(fit.c), fit.pairs.to_string()]])?;
            values.insert("alpha".into(), fit.alpha);
            values.insert("c".into(), fit.c);
            Some(fit.alpha > 1.0 && fit.c > 0.0 && fit.c.is_finite())
        }
        Experiment::Invariance { maps, samples, radius, tolerance } => {
            let base = provider(domain, cfg);
            let pts = sample_inside(domain, *samples, *radius, cfg.seed)?;
            let sv: Vec<(ComplexPoint, ComplexPoint)> = pts.into_iter().map(|z| (z, unit_vector(n, &mut rng))).collect();
            let mut rows = Vec::new();
            let (mut lw, mut aw) = (0.0f64, 0.0f64);
            for k in 0..*maps {
                let modulus = 0.5 * 4f64.powf(rng.random::<f64>());
                let angle = std::f64::consts::TAU * rng.random::<f64>();
                let map = Similarity { s: Complex64::from_polar(modulus, angle), u: random_unitary(n, &mut rng), b: scale(&unit_vector(n, &mut rng), rng.random::<f64>()) };
                let image = provider(&domain.mapped(map.clone())?, cfg);
                let rep = harness::affine_invariance_check(base.as_ref(), image.as_ref(), &map, &sv)?;
                lw = lw.max(rep.length_dev);
                aw = aw.max(rep.lambda_dev);
                rows.push(vec![(k + 1).to_string(), report::num(rep.length_dev), report::num(rep.lambda_dev)]);
            }
            out.csv("invariance", &["map", "length_dev", "lambda_dev"], &rows)?;
            values.insert("length_dev".into(), lw);
            values.insert("lambda_dev".into(), aw);
            Some(lw < *tolerance && aw < *tolerance)
        }
        Experiment::Stability { perturbed, eps, samples, radius, directions, orders, ratio_min, ratio_max } => {
            if !matches!(domain.shape(), Shape::Ball { radius, center } if *radius == 1.0 && norm(center) == 0.0) || domain.similarity().is_some() {
                return Err(Error::InvalidDomain("stability scans compare against the unit ball".into()));
            }
            let limit = ClosedForm::new(domain.clone())?;
            let solver = cfg.solver.clone();
            let family = move |e: f64| -> Result<Box<dyn RobinProvider>> {
                let d = if *perturbed {
                    DomainSpec::perturbed_ball(n, e, Bump::default())?
                } else {
                    let mut a = vec![1.0; n];
                    a[n - 1] += e;
                    DomainSpec::ellipsoid(a)?
                };
                Ok(Box::new(Numerical::new(d, solver.clone())))
            };
            let pts = geodesy::ball_samples(n, *samples, *radius, cfg.seed);
            let dirs: Vec<ComplexPoint> = (0..*directions).map(|_| unit_vector(n, &mut rng)).collect();
            let rep = harness::stability_scan(&family, &limit, eps, &pts, &dirs, *orders)?;
            let mut header = vec!["epsilon".to_string()];
            header.extend((0..=*orders).map(|k| format!("sup_order{k}")));
            header.push("sup_curvature".into());
            let rows: Vec<Vec<String>> = rep
                .rows
                .iter()
                .map(|r| {
                    let mut row = vec![report::num(r.epsilon)];
                    row.extend(r.sup_jet.iter().map(|x| report::num(*x)));
                    row.push(report::num(r.sup_curvature));
                    row
                })
                .collect();
            out.csv("stability", &header, &rows)?;
            for (k, x) in rep.lambda_ratios.iter().enumerate() {
                values.insert(format!("lambda_ratio_{}", k + 1), *x);
            }
            for (k, x) in rep.curvature_ratios.iter().enumerate() {
                values.insert(format!("curvature_ratio_{}", k + 1), *x);
            }
            Some(rep.ratios_within(*ratio_min, *ratio_max))
        }
        Experiment::Validate { probes, poles, radius } => {
            let solver = PoleSolver::new(domain.clone(), cfg.solver.clone());
            let ps = sample_inside(domain, *poles, *radius, cfg.seed)?;
            let pr = sample_inside(domain, *probes, *radius, cfg.seed.wrapping_add(1))?;
            let mut header = vec!["pole".to_string()];
            header.extend(report::point_header("p", n));
            header.extend(["max_boundary", "relative", "max_laplacian", "flagged"].map(String::from));
            let mut rows = Vec::new();
            let mut worst = 0.0f64;
            let mut ok = true;
            for (k, p) in ps.iter().enumerate() {
                let h = solver.handle_for(p)?;
                let sol = h.solve_pole(p, 0)?;
                let rep = h.residual_check(&sol, &pr)?;
                worst = worst.max(rep.relative);
                ok &= !rep.flagged;
                let mut row = vec![(k + 1).to_string()];
                row.extend(p.iter().map(|x| report::num(x.re)).chain(p.iter().map(|x| report::num(x.im))));
                row.extend([report::num(rep.max_boundary), report::num(rep.relative), report::num(rep.max_laplacian), rep.flagged.to_string()]);
                rows.push(row);
            }
            out.csv("residuals", &header, &rows)?;
            values.insert("max_relative_residual".into(), worst);
            Some(ok)
        }
    };
    out.line(kind, kind, pass, values, notes);
    finish(&out)?;
    Ok(pass != Some(false))
}

fn asymptotics(cfg: &ExperimentConfig, a: &AsymptoticsParams, out: &mut Output, values: &mut BTreeMap<String, f64>) -> Result<Option<bool>> {
    let domain = &cfg.domain;
    let prov = provider(domain, cfg);
    let path = match &a.direction {
        Some(w) => ApproachPath::oblique(domain, &a.z0, w, &a.t)?,
        None => ApproachPath::normal(domain, &a.z0, &a.t)?,
    };
    let table = |path: &ApproachPath| -> Result<ReportTable> {
        let p = prov.as_ref();
        match a.table {
            TableKind::Thm11 => harness::thm11_table(p, path, &a.index, a.psi_scale),
            TableKind::Cor12 => harness::cor12_table(p, path, a.alpha, a.beta, a.gamma),
            TableKind::Thm13 => harness::thm13_table(p, path, &a.v, if a.horizontal { LengthPart::Horizontal } else { LengthPart::Normal }),
            TableKind::LemmaG => harness::normal_lemma_table(p, path, a.alpha, a.beta),
            TableKind::LemmaDet => harness::det_lemma_table(p, path),
            TableKind::Thm16 => harness::thm16_curvature_limit(p, path),
            TableKind::Oblique => harness::oblique_curvature_scan(p, path),
            TableKind::Scaling => harness::scaling_check(p, path, &a.p),
        }
    };
    let mut t = table(&path)?;
    let mut pass = None;
    if a.table != TableKind::Oblique {
        if a.assert_constant {
            t = t.judge_constant(a.tolerance.unwrap_or(1e-6));
        } else if let Some(tol) = a.tolerance {
            t = t.judge(tol);
        }
        pass = t.pass;
    }
    if let Some(l) = t.extrapolated() {
        values.insert("limit_re".into(), l.re);
        values.insert("limit_im".into(), l.im);
    }
    if let Some(o) = t.limit.and_then(|l| l.order) {
        values.insert("order".into(), o);
    }
    values.insert("predicted_re".into(), t.predicted.re);
    values.insert("predicted_im".into(), t.predicted.im);
    values.insert("gap".into(), t.gap);
    values.insert("spread".into(), t.spread);
    values.insert("flagged_rows".into(), t.flagged_rows() as f64);
    out.table(&t)?;
    if a.check_halving {
        let mut h = table(&path.halved(domain)?)?;
        h.id = format!("{}_halved", t.id);
        let (l0, l1) = (t.extrapolated(), h.extrapolated());
        if let (Some(l0), Some(l1)) = (l0, l1) {
            let change = (l1 - l0).norm() / l0.norm().max(1e-300);
            values.insert("halving_change".into(), change);
            pass = Some(pass.unwrap_or(true) && change < 0.01);
        }
        out.table(&h)?;
    }
    Ok(pass)
}

fn finish(out: &Output) -> Result<()> {
    if !out.summary_rows.is_empty() {
        out.csv("summary", &report::SUMMARY_HEADER, &out.summary_rows)?;
        std::fs::write(out.dir.join(format!("{}_plot.py", out.prefix)), report::plot_script(&out.tables))?;
    }
    report::write_jsonl(&out.dir.join(format!("{}_summary.jsonl", out.prefix)), &out.lines)?;
    for l in &out.lines {
        let status = serde_json::to_string(&l.status).unwrap_or_default();
        println!("{} {}", l.id, status.trim_matches('"'));
    }
    Ok(())
}
