//! Experiment configuration files.
//!
//! ```text
//! # comment
//! seed = 7
//! [domain]
//! kind = ellipsoid
//! a = 1, 2
//! [experiment]
//! kind = asymptotics
//! table = thm16
//! z0 = 1, 0
//! ```
//!
//! Lines are `key = value` or `[section]`; a section prefixes the keys that
//! follow it with `section.`, and keys may also be written fully dotted.
//! `#` starts a comment. Values may be wrapped in double quotes. Lists are
//! comma separated, point lists separate points with `;`, and complex
//! numbers are written `re`, `re+imi`, `imi` or `i`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use num_complex::Complex64;

use crate::dirichlet::{ImageRule, SolverConfig};
use crate::domain::{Bump, ComplexPoint, DomainSpec};
use crate::potential::MultiIndexPair;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        ConfigError { line: Some(line), key: None, message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.line, &self.key) {
            (Some(l), Some(k)) => write!(f, "line {l}: key `{k}`: {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            (None, Some(k)) => write!(f, "key `{k}`: {}", self.message),
            (None, None) => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub value: String,
    pub line: usize,
}

/// Flat map from dotted keys to raw values.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RawConfig {
    pub entries: BTreeMap<String, Entry>,
}

fn valid_name(s: &str) -> bool {
    let mut parts = s.split('.');
    parts.all(|p| {
        let mut ch = p.chars();
        matches!(ch.next(), Some(c) if c.is_ascii_lowercase() || c == '_')
            && ch.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
    })
}

/// Parses the line syntax, without interpreting keys.
pub fn parse(text: &str) -> Result<RawConfig, ConfigError> {
    let mut out = RawConfig::default();
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = match raw.find('#') {
            Some(k) => &raw[..k],
            None => raw,
        }
        .trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::at(line, "unterminated section header"))?
                .trim();
            if !valid_name(name) {
                return Err(ConfigError::at(line, format!("invalid section name `{name}`")));
            }
            section = name.to_string();
            continue;
        }
        let (k, v) = body.split_once('=').ok_or_else(|| ConfigError::at(line, "expected `key = value`"))?;
        let k = k.trim();
        if !valid_name(k) {
            return Err(ConfigError::at(line, format!("invalid key `{k}`")));
        }
        let key = if section.is_empty() { k.to_string() } else { format!("{section}.{k}") };
        let mut v = v.trim();
        if v.len() >= 2 && v.starts_with('"') && v.ends_with('"') {
            v = &v[1..v.len() - 1];
        } else if v.contains('"') {
            return Err(ConfigError { line: Some(line), key: Some(key), message: "unbalanced quote".into() });
        }
        if v.is_empty() {
            return Err(ConfigError { line: Some(line), key: Some(key), message: "empty value".into() });
        }
        if let Some(prev) = out.entries.get(&key) {
            return Err(ConfigError {
                line: Some(line),
                key: Some(key),
                message: format!("duplicate key, first set on line {}", prev.line),
            });
        }
        out.entries.insert(key, Entry { value: v.to_string(), line });
    }
    Ok(out)
}

/// `re`, `re+imi`, `re-imi`, `imi`, `i`, `-i`.
pub fn parse_complex(s: &str) -> Option<Complex64> {
    let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let real = |t: &str| -> Option<f64> { t.parse::<f64>().ok().filter(|x| x.is_finite()) };
    let Some(body) = s.strip_suffix('i') else {
        return real(&s).map(|r| Complex64::new(r, 0.0));
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len()).rev().find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let imag = |t: &str| -> Option<f64> {
        match t {
            "" | "+" => Some(1.0),
            "-" => Some(-1.0),
            _ => real(t),
        }
    };
    match split {
        Some(k) => Some(Complex64::new(real(&body[..k])?, imag(&body[k..])?)),
        None => Some(Complex64::new(0.0, imag(body)?)),
    }
}

/// Typed access that remembers which keys were read.
struct Reader<'a> {
    raw: &'a RawConfig,
    used: std::cell::RefCell<std::collections::BTreeSet<String>>,
}

impl<'a> Reader<'a> {
    fn new(raw: &'a RawConfig) -> Self {
        Reader { raw, used: Default::default() }
    }

    fn err(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError { line: self.raw.entries.get(key).map(|e| e.line), key: Some(key.to_string()), message: message.into() }
    }

    fn get(&self, key: &str) -> Option<&'a str> {
        let e = self.raw.entries.get(key)?;
        self.used.borrow_mut().insert(key.to_string());
        Some(e.value.as_str())
    }

    fn has(&self, key: &str) -> bool {
        self.raw.entries.contains_key(key)
    }

    fn f64_in(&self, key: &str, default: Option<f64>, lo: f64, hi: f64) -> Result<f64, ConfigError> {
        let v = match self.get(key) {
            Some(s) => s.trim().parse::<f64>().map_err(|_| self.err(key, format!("`{s}` is not a number")))?,
            None => default.ok_or_else(|| self.err(key, "missing required key"))?,
        };
        if !(v >= lo && v <= hi) {
            return Err(self.err(key, format!("value {v} outside [{lo}, {hi}]")));
        }
        Ok(v)
    }

    fn opt_f64(&self, key: &str, lo: f64, hi: f64) -> Result<Option<f64>, ConfigError> {
        if self.has(key) {
            self.f64_in(key, None, lo, hi).map(Some)
        } else {
            Ok(None)
        }
    }

    fn usize_in(&self, key: &str, default: Option<usize>, lo: usize, hi: usize) -> Result<usize, ConfigError> {
        let v = match self.get(key) {
            Some(s) => s.trim().parse::<usize>().map_err(|_| self.err(key, format!("`{s}` is not a nonnegative integer")))?,
            None => default.ok_or_else(|| self.err(key, "missing required key"))?,
        };
        if v < lo || v > hi {
            return Err(self.err(key, format!("value {v} outside [{lo}, {hi}]")));
        }
        Ok(v)
    }

    fn u64(&self, key: &str, default: u64) -> Result<u64, ConfigError> {
        match self.get(key) {
            Some(s) => s.trim().parse::<u64>().map_err(|_| self.err(key, format!("`{s}` is not a nonnegative integer"))),
            None => Ok(default),
        }
    }

    fn bool(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.get(key).map(str::trim) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(s) => Err(self.err(key, format!("`{s}` is not `true` or `false`"))),
        }
    }

    fn choice(&self, key: &str, default: Option<&'static str>, options: &[&'static str]) -> Result<&'static str, ConfigError> {
        let s = match self.get(key) {
            Some(s) => s.trim(),
            None => return default.ok_or_else(|| self.err(key, "missing required key")),
        };
        options
            .iter()
            .find(|o| **o == s)
            .copied()
            .ok_or_else(|| self.err(key, format!("`{s}` is not one of {}", options.join(", "))))
    }

    fn f64_list(&self, key: &str, lo: f64, hi: f64) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(s) = self.get(key) else { return Ok(None) };
        let v: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| self.err(key, format!("`{}` is not a number", t.trim()))))
            .collect::<Result<_, _>>()?;
        if let Some(x) = v.iter().find(|x| !(**x >= lo && **x <= hi)) {
            return Err(self.err(key, format!("entry {x} outside [{lo}, {hi}]")));
        }
        Ok(Some(v))
    }

    fn usize_list(&self, key: &str, hi: usize) -> Result<Option<Vec<usize>>, ConfigError> {
        let Some(s) = self.get(key) else { return Ok(None) };
        let v: Vec<usize> = s
            .split(',')
            .map(|t| t.trim().parse::<usize>().map_err(|_| self.err(key, format!("`{}` is not a nonnegative integer", t.trim()))))
            .collect::<Result<_, _>>()?;
        if v.iter().any(|&x| x > hi) {
            return Err(self.err(key, format!("entries must be at most {hi}")));
        }
        Ok(Some(v))
    }

    fn point(&self, key: &str, n: usize) -> Result<Option<ComplexPoint>, ConfigError> {
        let Some(s) = self.get(key) else { return Ok(None) };
        self.parse_point(key, s, n).map(Some)
    }

    fn parse_point(&self, key: &str, s: &str, n: usize) -> Result<ComplexPoint, ConfigError> {
        let v: ComplexPoint =
            s.split(',').map(|t| parse_complex(t).ok_or_else(|| self.err(key, format!("`{}` is not a complex number", t.trim())))).collect::<Result<_, _>>()?;
        if v.len() != n {
            return Err(self.err(key, format!("expected {n} coordinates, got {}", v.len())));
        }
        if v.iter().any(|z| z.norm() > 1e6) {
            return Err(self.err(key, "coordinates must have modulus at most 1e6"));
        }
        Ok(v)
    }

    fn points(&self, key: &str, n: usize) -> Result<Option<Vec<ComplexPoint>>, ConfigError> {
        let Some(s) = self.get(key) else { return Ok(None) };
        s.split(';').map(|p| self.parse_point(key, p, n)).collect::<Result<Vec<_>, _>>().map(Some)
    }

    fn finish(&self) -> Result<(), ConfigError> {
        let used = self.used.borrow();
        match self.raw.entries.iter().filter(|(k, _)| !used.contains(*k)).min_by_key(|(_, e)| e.line) {
            Some((k, e)) => Err(ConfigError { line: Some(e.line), key: Some(k.clone()), message: "unknown key".into() }),
            None => Ok(()),
        }
    }
}

/// The ten experiment kinds with their parameters, in listing order.
pub const KINDS: [(&str, &str); 10] = [
    ("robin", "Robin jets at points. points | samples, radius; order (0-4)"),
    ("metric", "Λ-metric at points. points | samples, radius"),
    ("curvature", "holomorphic sectional curvature. points | samples, radius; directions"),
    (
        "asymptotics",
        "boundary tables. table (thm11 cor12 thm13 lemma_g lemma_det thm16 oblique scaling); z0; t; tolerance; assert_constant; check_halving; a, b; alpha, beta, gamma; v; part (normal horizontal); psi_scale; p; direction",
    ),
    ("distance", "path-optimizer distance. p; q; schedule; max_iters; expected; tolerance"),
    ("hyperbolicity", "four-point δ for the ball distance. samples; quadruples; radius; tolerance"),
    ("comparability", "sandwich fit of d_R against the surrogate g. pairs; t_max; resolution"),
    ("invariance", "lengths under random similarities. maps; samples; radius; tolerance"),
    ("stability", "deviation from the ball along a family. family (ellipsoid perturbed_ball); eps; samples; radius; directions; orders; ratio_min; ratio_max"),
    ("validate", "collocation residuals. probes; poles; radius"),
];

#[derive(Clone, Debug, PartialEq)]
pub enum PointSet {
    Explicit(Vec<ComplexPoint>),
    Random { count: usize, radius: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableKind {
    Thm11,
    Cor12,
    Thm13,
    LemmaG,
    LemmaDet,
    Thm16,
    Oblique,
    Scaling,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AsymptoticsParams {
    pub table: TableKind,
    pub z0: ComplexPoint,
    pub t: Vec<f64>,
    pub tolerance: Option<f64>,
    pub assert_constant: bool,
    pub check_halving: bool,
    pub index: MultiIndexPair,
    pub alpha: usize,
    pub beta: usize,
    pub gamma: Option<usize>,
    pub v: ComplexPoint,
    pub horizontal: bool,
    pub psi_scale: f64,
    pub p: ComplexPoint,
    pub direction: Option<ComplexPoint>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Experiment {
    Robin { points: PointSet, order: usize },
    Metric { points: PointSet },
    Curvature { points: PointSet, directions: usize },
    Asymptotics(Box<AsymptoticsParams>),
    Distance { p: ComplexPoint, q: ComplexPoint, schedule: Vec<usize>, max_iters: usize, expected: Option<f64>, tolerance: f64 },
    Hyperbolicity { samples: usize, quadruples: usize, radius: f64, tolerance: f64 },
    Comparability { pairs: usize, t_max: f64, resolution: usize },
    Invariance { maps: usize, samples: usize, radius: f64, tolerance: f64 },
    Stability { perturbed: bool, eps: Vec<f64>, samples: usize, radius: f64, directions: usize, orders: usize, ratio_min: f64, ratio_max: f64 },
    Validate { probes: usize, poles: usize, radius: f64 },
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Robin { .. } => "robin",
            Experiment::Metric { .. } => "metric",
            Experiment::Curvature { .. } => "curvature",
            Experiment::Asymptotics(_) => "asymptotics",
            Experiment::Distance { .. } => "distance",
            Experiment::Hyperbolicity { .. } => "hyperbolicity",
            Experiment::Comparability { .. } => "comparability",
            Experiment::Invariance { .. } => "invariance",
            Experiment::Stability { .. } => "stability",
            Experiment::Validate { .. } => "validate",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub domain: DomainSpec,
    pub solver: SolverConfig,
    /// Use closed forms where the shape has one.
    pub closed_form: bool,
    pub experiment: Experiment,
    pub directory: PathBuf,
    pub prefix: String,
    pub seed: u64,
    pub threads: Option<usize>,
}

fn read_domain(r: &Reader) -> Result<DomainSpec, ConfigError> {
    let kind = r.choice("domain.kind", None, &["ball", "ellipsoid", "perturbed_ball", "half_space"])?;
    let n = r.usize_in("domain.n", Some(2), 2, 8)?;
    let invalid = |e: crate::Error| r.err("domain.kind", e.to_string());
    match kind {
        "ball" => {
            let radius = r.f64_in("domain.radius", Some(1.0), 1e-6, 1e6)?;
            let center = r.point("domain.center", n)?.unwrap_or_else(|| vec![Complex64::new(0.0, 0.0); n]);
            DomainSpec::ball(n, center, radius).map_err(invalid)
        }
        "ellipsoid" => {
            let a = r.f64_list("domain.a", 1e-6, 1e6)?.ok_or_else(|| r.err("domain.a", "missing required key"))?;
            if r.has("domain.n") && a.len() != n {
                return Err(r.err("domain.a", format!("expected {n} coefficients")));
            }
            if a.len() < 2 || a.len() > 8 {
                return Err(r.err("domain.a", "need between 2 and 8 coefficients"));
            }
            DomainSpec::ellipsoid(a).map_err(invalid)
        }
        "perturbed_ball" => {
            let epsilon = r.f64_in("domain.epsilon", None, -0.05, 0.05)?;
            let d = Bump::default();
            let bump = Bump {
                center: r.f64_in("domain.bump_center", Some(d.center), -2.0, 2.0)?,
                width: r.f64_in("domain.bump_width", Some(d.width), 1e-3, 4.0)?,
            };
            DomainSpec::perturbed_ball(n, epsilon, bump).map_err(invalid)
        }
        _ => {
            let a = r.point("domain.a", n)?.ok_or_else(|| r.err("domain.a", "missing required key"))?;
            let level = r.f64_in("domain.level", Some(1.0), -1e6, 1e6)?;
            DomainSpec::half_space(a, level).map_err(invalid)
        }
    }
}

fn read_solver(r: &Reader) -> Result<SolverConfig, ConfigError> {
    let d = SolverConfig::default();
    let m_boundary = r.usize_in("solver.m_boundary", Some(d.m_boundary), 8, 20_000)?;
    let m_charges = r.usize_in("solver.m_charges", Some(d.m_charges), 8, 20_000)?;
    if m_charges > m_boundary {
        return Err(r.err("solver.m_charges", "must not exceed solver.m_boundary"));
    }
    let image = match r.choice("solver.image", Some("none"), &["none", "osculating"])? {
        "none" => ImageRule::None,
        _ => ImageRule::Osculating {
            factor: r.f64_in("solver.image_factor", Some(1.0), 0.1, 10.0)?,
            max_delta: r.f64_in("solver.image_max_delta", Some(0.2), 0.0, 10.0)?,
        },
    };
    let mut grading = d.grading.clone();
    grading.level_boundary = r.usize_in("solver.level_boundary", Some(grading.level_boundary), 8, 20_000)?;
    grading.level_charges = r.usize_in("solver.level_charges", Some(grading.level_charges), 8, 20_000)?;
    Ok(SolverConfig {
        m_boundary,
        m_charges,
        offset: r.f64_in("solver.offset", Some(d.offset), 1e-3, 100.0)?,
        svd_tol: r.f64_in("solver.svd_tol", Some(d.svd_tol), 1e-16, 1e-2)?,
        seed: r.u64("solver.seed", d.seed)?,
        densify_near_pole: r.bool("solver.densify_near_pole", d.densify_near_pole)?,
        image,
        grading,
    })
}

fn read_points(r: &Reader, domain: &DomainSpec) -> Result<PointSet, ConfigError> {
    let n = domain.n();
    if let Some(ps) = r.points("experiment.points", n)? {
        if let Some(k) = ps.iter().position(|p| !domain.contains(p)) {
            return Err(r.err("experiment.points", format!("point {} is outside the domain", k + 1)));
        }
        return Ok(PointSet::Explicit(ps));
    }
    Ok(PointSet::Random {
        count: r.usize_in("experiment.samples", Some(10), 1, 10_000)?,
        radius: r.f64_in("experiment.radius", Some(0.5), 0.0, 1.0)?,
    })
}

fn read_index(r: &Reader, key: &str, n: usize) -> Result<Vec<u8>, ConfigError> {
    match r.usize_list(key, 4)? {
        None => Ok(vec![0; n]),
        Some(v) if v.len() == n => Ok(v.into_iter().map(|x| x as u8).collect()),
        Some(v) => Err(r.err(key, format!("expected {n} entries, got {}", v.len()))),
    }
}

fn boundary_point(r: &Reader, domain: &DomainSpec, key: &str) -> Result<ComplexPoint, ConfigError> {
    let z0 = r.point(key, domain.n())?.ok_or_else(|| r.err(key, "missing required key"))?;
    if domain.psi(&z0).abs() > 1e-9 {
        return Err(r.err(key, "point is not on the boundary"));
    }
    Ok(z0)
}

fn read_asymptotics(r: &Reader, domain: &DomainSpec) -> Result<AsymptoticsParams, ConfigError> {
    let n = domain.n();
    let table = match r.choice("experiment.table", None, &["thm11", "cor12", "thm13", "lemma_g", "lemma_det", "thm16", "oblique", "scaling"])? {
        "thm11" => TableKind::Thm11,
        "cor12" => TableKind::Cor12,
        "thm13" => TableKind::Thm13,
        "lemma_g" => TableKind::LemmaG,
        "lemma_det" => TableKind::LemmaDet,
        "thm16" => TableKind::Thm16,
        "oblique" => TableKind::Oblique,
        _ => TableKind::Scaling,
    };
    let z0 = boundary_point(r, domain, "experiment.z0")?;
    let t = r.f64_list("experiment.t", 1e-8, 1.0)?.unwrap_or_else(|| crate::harness::DEFAULT_T.to_vec());
    if t.len() < 3 || t.windows(2).any(|w| w[1] >= w[0]) {
        return Err(r.err("experiment.t", "need at least three strictly decreasing values"));
    }
    let zero = vec![Complex64::new(0.0, 0.0); n];
    let mut e1 = zero.clone();
    e1[0] = Complex64::new(1.0, 0.0);
    let mut p = AsymptoticsParams {
        table,
        z0,
        t,
        tolerance: r.opt_f64("experiment.tolerance", 0.0, 1e3)?,
        assert_constant: r.bool("experiment.assert_constant", false)?,
        check_halving: r.bool("experiment.check_halving", false)?,
        index: MultiIndexPair::empty(n),
        alpha: 0,
        beta: 0,
        gamma: None,
        v: e1,
        horizontal: false,
        psi_scale: 1.0,
        p: zero,
        direction: None,
    };
    let index1 = |key: &str, default: usize| -> Result<usize, ConfigError> { Ok(r.usize_in(key, Some(default), 1, n)? - 1) };
    match table {
        TableKind::Thm11 => {
            p.index = MultiIndexPair::new(read_index(r, "experiment.a", n)?, read_index(r, "experiment.b", n)?);
            if p.index.order() > 4 {
                return Err(r.err("experiment.a", "need |A| + |B| ≤ 4"));
            }
            p.psi_scale = r.f64_in("experiment.psi_scale", Some(1.0), 1e-3, 1e3)?;
        }
        TableKind::Cor12 => {
            p.alpha = index1("experiment.alpha", 1)?;
            p.beta = index1("experiment.beta", 1)?;
            if r.has("experiment.gamma") {
                p.gamma = Some(index1("experiment.gamma", 1)?);
            }
        }
        TableKind::Thm13 => {
            p.v = r.point("experiment.v", n)?.unwrap_or(p.v);
            p.horizontal = r.choice("experiment.part", Some("normal"), &["normal", "horizontal"])? == "horizontal";
        }
        TableKind::LemmaG => {
            p.alpha = index1("experiment.alpha", 1)?;
            p.beta = index1("experiment.beta", 1)?;
            if p.alpha + 1 >= n {
                return Err(r.err("experiment.alpha", "first index must be tangential (at most n − 1)"));
            }
        }
        TableKind::Oblique => {
            p.direction = Some(r.point("experiment.direction", n)?.ok_or_else(|| r.err("experiment.direction", "missing required key"))?);
        }
        TableKind::Scaling => {
            p.p = r.point("experiment.p", n)?.unwrap_or(p.p);
        }
        TableKind::LemmaDet | TableKind::Thm16 => {}
    }
    Ok(p)
}

fn read_experiment(r: &Reader, domain: &DomainSpec) -> Result<Experiment, ConfigError> {
    let kinds: Vec<&'static str> = KINDS.iter().map(|k| k.0).collect();
    let kind = r.choice("experiment.kind", None, &kinds)?;
    let n = domain.n();
    let inside = |key: &str, p: ComplexPoint| -> Result<ComplexPoint, ConfigError> {
        if domain.contains(&p) {
            Ok(p)
        } else {
            Err(r.err(key, "point is outside the domain"))
        }
    };
    let ball = matches!(domain.shape(), crate::domain::Shape::Ball { .. }) && domain.similarity().is_none();
    match kind {
        "hyperbolicity" | "comparability" if !ball => {
            return Err(r.err("experiment.kind", format!("`{kind}` uses the closed-form ball distance and needs domain.kind = ball")));
        }
        "stability" if !ball || !matches!(domain.shape(), crate::domain::Shape::Ball { center, radius } if *radius == 1.0 && center.iter().all(|x| x.norm() == 0.0)) => {
            return Err(r.err("experiment.kind", "`stability` compares against the unit ball; use domain.kind = ball with the default center and radius"));
        }
        _ => {}
    }
    Ok(match kind {
        "robin" => Experiment::Robin { points: read_points(r, domain)?, order: r.usize_in("experiment.order", Some(2), 0, 4)? },
        "metric" => Experiment::Metric { points: read_points(r, domain)? },
        "curvature" => Experiment::Curvature {
            points: read_points(r, domain)?,
            directions: r.usize_in("experiment.directions", Some(4), 1, 1000)?,
        },
        "asymptotics" => Experiment::Asymptotics(Box::new(read_asymptotics(r, domain)?)),
        "distance" => {
            let p = inside("experiment.p", r.point("experiment.p", n)?.ok_or_else(|| r.err("experiment.p", "missing required key"))?)?;
            let q = inside("experiment.q", r.point("experiment.q", n)?.ok_or_else(|| r.err("experiment.q", "missing required key"))?)?;
            let schedule = r.usize_list("experiment.schedule", 512)?.unwrap_or_else(|| vec![8, 16, 32]);
            if schedule.is_empty() || schedule[0] == 0 || schedule.windows(2).any(|w| w[1] < w[0]) {
                return Err(r.err("experiment.schedule", "segment counts must be positive and nondecreasing"));
            }
            Experiment::Distance {
                p,
                q,
                schedule,
                max_iters: r.usize_in("experiment.max_iters", Some(200), 1, 100_000)?,
                expected: r.opt_f64("experiment.expected", 0.0, 1e6)?,
                tolerance: r.f64_in("experiment.tolerance", Some(5e-3), 0.0, 1.0)?,
            }
        }
        "hyperbolicity" => Experiment::Hyperbolicity {
            samples: r.usize_in("experiment.samples", Some(200), 4, 100_000)?,
            quadruples: r.usize_in("experiment.quadruples", Some(10_000), 1, 10_000_000)?,
            radius: r.f64_in("experiment.radius", Some(0.95), 0.0, 0.999_999)?,
            tolerance: r.f64_in("experiment.tolerance", Some(0.05), 0.0, 1.0)?,
        },
        "comparability" => Experiment::Comparability {
            pairs: r.usize_in("experiment.pairs", Some(100), 1, 10_000)?,
            t_max: r.f64_in("experiment.t_max", Some(0.1), 1e-6, 0.5)?,
            resolution: r.usize_in("experiment.resolution", Some(1500), 8, 50_000)?,
        },
        "invariance" => Experiment::Invariance {
            maps: r.usize_in("experiment.maps", Some(20), 1, 10_000)?,
            samples: r.usize_in("experiment.samples", Some(5), 1, 10_000)?,
            radius: r.f64_in("experiment.radius", Some(0.5), 0.0, 1.0)?,
            tolerance: r.f64_in("experiment.tolerance", Some(1e-6), 0.0, 1.0)?,
        },
        "stability" => {
            let eps = r.f64_list("experiment.eps", 0.0, 0.5)?.unwrap_or_else(|| vec![0.1, 0.05, 0.025]);
            let ratio_min = r.f64_in("experiment.ratio_min", Some(0.3), 0.0, 1.0)?;
            let ratio_max = r.f64_in("experiment.ratio_max", Some(0.7), ratio_min, 1.0)?;
            Experiment::Stability {
                perturbed: r.choice("experiment.family", Some("ellipsoid"), &["ellipsoid", "perturbed_ball"])? == "perturbed_ball",
                eps,
                samples: r.usize_in("experiment.samples", Some(10), 1, 10_000)?,
                radius: r.f64_in("experiment.radius", Some(0.5), 0.0, 0.9)?,
                directions: r.usize_in("experiment.directions", Some(20), 0, 1000)?,
                orders: r.usize_in("experiment.orders", Some(2), 0, 4)?,
                ratio_min,
                ratio_max,
            }
        }
        _ => Experiment::Validate {
            probes: r.usize_in("experiment.probes", Some(4), 1, 1000)?,
            poles: r.usize_in("experiment.poles", Some(3), 1, 1000)?,
            radius: r.f64_in("experiment.radius", Some(0.5), 0.0, 1.0)?,
        },
    })
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        let r = Reader::new(raw);
        let domain = read_domain(&r)?;
        let solver = read_solver(&r)?;
        let closed_form = r.bool("solver.closed_form", true)?;
        let experiment = read_experiment(&r, &domain)?;
        let directory = PathBuf::from(r.get("output.directory").unwrap_or("out"));
        let prefix = r.get("output.prefix").unwrap_or("run").to_string();
        if !valid_name(&prefix.replace('-', "_")) || prefix.contains('.') {
            return Err(r.err("output.prefix", "prefix must be lowercase letters, digits, `_` or `-`"));
        }
        let seed = r.u64("seed", 1)?;
        let threads = if r.has("run.threads") { Some(r.usize_in("run.threads", None, 1, 1024)?) } else { None };
        r.finish()?;
        Ok(ExperimentConfig { domain, solver, closed_form, experiment, directory, prefix, seed, threads })
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::from_raw(&parse(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_dotted_keys() {
        let raw = parse("seed = 3\n[domain]\nkind = ball # unit\n radius = \"2\"\n[solver]\nm_boundary=100\n").unwrap();
        assert_eq!(raw.entries["domain.kind"].value, "ball");
        assert_eq!(raw.entries["domain.radius"].value, "2");
        assert_eq!(raw.entries["solver.m_boundary"].line, 6);
    }

    #[test]
    fn line_diagnostics() {
        let e = parse("a = 1\n\nb 2\n").unwrap_err();
        assert_eq!(e.line, Some(3));
        let e = parse("a = 1\na = 2\n").unwrap_err();
        assert_eq!((e.line, e.key.as_deref()), (Some(2), Some("a")));
        assert!(parse("[Domain]\n").is_err());
        assert!(parse("x = \n").is_err());
        assert!(parse("[open\n").is_err());
    }

    #[test]
    fn complex_numbers() {
        let c = Complex64::new;
        assert_eq!(parse_complex("1"), Some(c(1.0, 0.0)));
        assert_eq!(parse_complex("0.5-2i"), Some(c(0.5, -2.0)));
        assert_eq!(parse_complex(" -i"), Some(c(0.0, -1.0)));
        assert_eq!(parse_complex("1e-3+1e-2i"), Some(c(1e-3, 1e-2)));
        assert_eq!(parse_complex("3i"), Some(c(0.0, 3.0)));
        assert_eq!(parse_complex("1+i"), Some(c(1.0, 1.0)));
        assert_eq!(parse_complex("x"), None);
        assert_eq!(parse_complex("inf"), None);
        assert_eq!(parse_complex(""), None);
    }

    #[test]
    fn typed_config_and_unknown_keys() {
        let text = "[domain]\nkind = ellipsoid\na = 1, 2\n[experiment]\nkind = asymptotics\ntable = thm16\nz0 = 1, 0\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.experiment.kind(), "asymptotics");
        assert_eq!(cfg.domain.n(), 2);
        let e = ExperimentConfig::parse(&format!("{text}alpha = 1\n")).unwrap_err();
        assert_eq!((e.line, e.key.as_deref(), e.message.as_str()), (Some(8), Some("experiment.alpha"), "unknown key"));
        let e = ExperimentConfig::parse(&text.replace("z0 = 1, 0", "z0 = 0.9, 0")).unwrap_err();
        assert_eq!(e.key.as_deref(), Some("experiment.z0"));
        let e = ExperimentConfig::parse("[domain]\nkind = ball\n[solver]\nm_boundary = 10\nm_charges = 20\n[experiment]\nkind = validate\n").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("solver.m_charges"));
    }

    #[test]
    fn kinds_are_listed_once() {
        let mut names: Vec<&str> = KINDS.iter().map(|k| k.0).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 10);
    }
}
