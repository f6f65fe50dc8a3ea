//! Line-oriented `section.key = value` configuration with a fixed schema.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::fmt::parse_g;
use crate::mesh::{Face, FaceSelection};

use super::RunnerError;

/// Every accepted key with its default (`None` = required or absent).
const SCHEMA: &[(&str, Option<&str>)] = &[
    ("run.name", Some("scenario")),
    ("run.seed", None),
    ("grid.dim", Some("1")),
    ("grid.extents", Some("1")),
    ("grid.counts", Some("100")),
    ("diffusion.value", Some("1")),
    ("c1.field", Some("const:0")),
    ("c2.field", None),
    ("initial.kind", Some("field")),
    ("initial.field", Some("const:1")),
    ("initial.theta_power", Some("0.7")),
    ("initial.modes", Some("0,1,2")),
    ("initial.weights", None),
    ("initial.threshold", Some("auto")),
    ("gamma.faces", Some("left")),
    ("time.t_end", Some("0.1")),
    ("time.dt", Some("1e-4")),
    ("time.first", None),
    ("time.samples", Some("40")),
    ("time.tau", Some("0.5")),
    ("tol.trace", Some("1e-9")),
    ("tol.f", Some("1e-8")),
    ("tol.rate", Some("1e-4")),
    ("tol.mode_trace", Some("1e-4")),
    ("modes.max", Some("3")),
    ("audit.which", Some("elliptic,boundary,parabolic")),
    ("audit.samples", Some("100")),
    ("audit.s_list", Some("auto")),
    ("audit.time_points", Some("41")),
    ("audit.lambda", Some("2")),
    ("audit.y", None),
    ("audit.eigenvectors", Some("10")),
    ("audit.c_scales", Some("1,2")),
    ("decay.theta_power", Some("0.7")),
    ("decay.sigma", Some("1")),
    ("decay.sigma1", Some("1")),
    ("omega.expected", None),
    ("omega.y", None),
];

/// Scalar field built from additive terms.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldTerm {
    Const(f64),
    /// Raised-cosine bump `h (1 + cos(pi r / R)) / 2` with `R = width / 2`.
    Bump { height: f64, centre: [f64; 2], width: f64 },
    /// `h exp(-k r^2)`.
    Gauss { height: f64, centre: [f64; 2], k: f64 },
    /// `v` on the closed box.
    Block { value: f64, lo: [f64; 2], hi: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSpec(pub Vec<FieldTerm>);

impl FieldSpec {
    /// Parses `kind:args; kind:args` where kinds are `const:v`,
    /// `bump:h,cx[,cy],width`, `gauss:h,cx[,cy],k` and `block:v,x0,x1[,y0,y1]`.
    pub fn parse(text: &str, dim: usize) -> Result<Self, String> {
        let mut terms = Vec::new();
        for part in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (kind, args) = part.split_once(':').ok_or(format!("term `{part}` lacks `kind:`"))?;
            let args: Vec<f64> = args
                .split(',')
                .map(|a| parse_g(a.trim()).ok_or(format!("bad number `{a}` in `{part}`")))
                .collect::<Result<_, _>>()?;
            let want = |n1: usize, n2: usize| {
                let n = if dim == 1 { n1 } else { n2 };
                if args.len() == n {
                    Ok(())
                } else {
                    Err(format!("`{kind}` takes {n} arguments in {dim}D, got {}", args.len()))
                }
            };
            let point = |i: usize| if dim == 1 { [args[i], 0.0] } else { [args[i], args[i + 1]] };
            let term = match kind.trim() {
                "const" => {
                    want(1, 1)?;
                    FieldTerm::Const(args[0])
                }
                "bump" => {
                    want(3, 4)?;
                    FieldTerm::Bump { height: args[0], centre: point(1), width: args[dim + 1] }
                }
                "gauss" => {
                    want(3, 4)?;
                    FieldTerm::Gauss { height: args[0], centre: point(1), k: args[dim + 1] }
                }
                "block" => {
                    want(3, 5)?;
                    let (lo, hi) = if dim == 1 {
                        ([args[1], 0.0], [args[2], 0.0])
                    } else {
                        ([args[1], args[3]], [args[2], args[4]])
                    };
                    FieldTerm::Block { value: args[0], lo, hi }
                }
                other => return Err(format!("unknown field kind `{other}`")),
            };
            terms.push(term);
        }
        if terms.is_empty() {
            return Err("empty field".into());
        }
        Ok(FieldSpec(terms))
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        let dist = |c: [f64; 2]| ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)).sqrt();
        self.0
            .iter()
            .map(|t| match *t {
                FieldTerm::Const(v) => v,
                FieldTerm::Bump { height, centre, width } => {
                    let r = dist(centre) / (0.5 * width);
                    if r < 1.0 {
                        0.5 * height * (1.0 + (std::f64::consts::PI * r).cos())
                    } else {
                        0.0
                    }
                }
                FieldTerm::Gauss { height, centre, k } => height * (-k * dist(centre).powi(2)).exp(),
                FieldTerm::Block { value, lo, hi } => {
                    let eps = 1e-12;
                    let inside = (0..2).all(|d| x[d] >= lo[d] - eps && x[d] <= hi[d] + eps);
                    if inside {
                        value
                    } else {
                        0.0
                    }
                }
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    Field(FieldSpec),
    /// Generated with decaying coefficients for `theta = eta^p`.
    Theta(f64),
    /// Combination of eigenvectors (first member of each listed cluster).
    Eigen { modes: Vec<usize>, weights: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuditKind {
    Elliptic,
    Boundary,
    Parabolic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub name: String,
    pub seed: u64,
    pub dim: usize,
    pub extents: Vec<f64>,
    pub counts: Vec<usize>,
    pub diffusion: f64,
    pub c1: FieldSpec,
    pub c2: FieldSpec,
    pub initial: InitialSpec,
    /// `None` selects the automatic positivity threshold.
    pub threshold: Option<f64>,
    pub gamma: Vec<FaceSelection>,
    pub t_end: f64,
    pub dt: f64,
    pub first_sample: f64,
    pub samples: usize,
    pub tau: f64,
    pub trace_tol: f64,
    pub f_tol: f64,
    pub rate_tol: f64,
    pub mode_trace_tol: f64,
    pub max_modes: usize,
    pub audits: Vec<AuditKind>,
    pub audit_samples: usize,
    /// `None` selects the default scan.
    pub s_list: Option<Vec<f64>>,
    pub audit_time_points: usize,
    pub lambda: f64,
    pub audit_y: Option<Vec<f64>>,
    pub audit_eigenvectors: usize,
    pub c_scales: Vec<f64>,
    pub theta_power: f64,
    pub sigma: f64,
    pub sigma1: f64,
    pub omega_expected: Option<PathBuf>,
    pub omega_y: Option<Vec<f64>>,
    /// Canonical `key = value` listing of every effective setting.
    pub canonical: String,
}

fn parse_list<T>(key: &str, text: &str, f: impl Fn(&str) -> Option<T>) -> Result<Vec<T>, RunnerError> {
    text.split(',')
        .map(|s| f(s.trim()).ok_or_else(|| RunnerError::Config(format!("{key}: bad value `{s}`"))))
        .collect()
}

fn parse_face(text: &str) -> Result<FaceSelection, String> {
    let (name, range) = match text.split_once(':') {
        Some((n, r)) => (n.trim(), Some(r.trim())),
        None => (text.trim(), None),
    };
    let face = Face::parse(name).ok_or(format!("unknown face `{name}`"))?;
    let range = match range {
        None => None,
        Some(r) => {
            let (lo, hi) = r.split_once("..").ok_or(format!("range `{r}` is not `lo..hi`"))?;
            let lo = lo.trim().parse().map_err(|_| format!("bad index `{lo}`"))?;
            let hi = hi.trim().parse().map_err(|_| format!("bad index `{hi}`"))?;
            Some((lo, hi))
        }
    };
    Ok(FaceSelection { face, range })
}

impl Config {
    /// Parses the text of a config file. `seed` overrides `run.seed`;
    /// relative paths resolve against `base`.
    pub fn parse(text: &str, seed: Option<u64>, base: &Path) -> Result<Self, RunnerError> {
        let mut raw: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| RunnerError::Config(format!("line {}: expected `section.key = value`", lineno + 1)))?;
            let key = key.trim().to_string();
            if !SCHEMA.iter().any(|(k, _)| *k == key) {
                return Err(RunnerError::Config(format!("line {}: unknown key `{key}`", lineno + 1)));
            }
            if raw.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(RunnerError::Config(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
        }
        if let Some(s) = seed {
            raw.insert("run.seed".into(), s.to_string());
        }
        if !raw.contains_key("run.seed") {
            return Err(RunnerError::Config("no seed: set run.seed or pass --seed".into()));
        }
        if !raw.contains_key("c2.field") {
            let c1 = raw.get("c1.field").cloned().unwrap_or_else(|| "const:0".into());
            raw.insert("c2.field".into(), c1);
        }
        for (k, default) in SCHEMA {
            if let Some(d) = default {
                raw.entry(k.to_string()).or_insert_with(|| d.to_string());
            }
        }
        let canonical: String = raw.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        let get = |k: &str| raw.get(k).map(String::as_str);
        let num = |k: &str| -> Result<f64, RunnerError> {
            parse_g(get(k).unwrap_or("")).ok_or_else(|| RunnerError::Config(format!("{k}: not a number")))
        };
        let int = |k: &str| -> Result<usize, RunnerError> {
            get(k).unwrap_or("").parse().map_err(|_| RunnerError::Config(format!("{k}: not a non-negative integer")))
        };
        let bad = |k: &str, e: String| RunnerError::Config(format!("{k}: {e}"));

        let dim = int("grid.dim")?;
        let extents = parse_list("grid.extents", get("grid.extents").unwrap(), parse_g)?;
        let counts = parse_list("grid.counts", get("grid.counts").unwrap(), |s| s.parse().ok())?;
        let c1 = FieldSpec::parse(get("c1.field").unwrap(), dim).map_err(|e| bad("c1.field", e))?;
        let c2 = FieldSpec::parse(get("c2.field").unwrap(), dim).map_err(|e| bad("c2.field", e))?;
        let initial = match get("initial.kind").unwrap() {
            "field" => InitialSpec::Field(
                FieldSpec::parse(get("initial.field").unwrap(), dim).map_err(|e| bad("initial.field", e))?,
            ),
            "theta" => InitialSpec::Theta(num("initial.theta_power")?),
            "eigen" => {
                let modes = parse_list("initial.modes", get("initial.modes").unwrap(), |s| s.parse().ok())?;
                let weights = match get("initial.weights") {
                    Some(w) => parse_list("initial.weights", w, parse_g)?,
                    None => vec![1.0; modes.len()],
                };
                if weights.len() != modes.len() {
                    return Err(RunnerError::Config("initial.weights must match initial.modes".into()));
                }
                InitialSpec::Eigen { modes, weights }
            }
            other => return Err(RunnerError::Config(format!("initial.kind: unknown kind `{other}`"))),
        };
        let threshold = match get("initial.threshold").unwrap() {
            "auto" => None,
            t => Some(parse_g(t).ok_or_else(|| RunnerError::Config("initial.threshold: not a number".into()))?),
        };
        let gamma = get("gamma.faces")
            .unwrap()
            .split(';')
            .map(|f| parse_face(f).map_err(|e| bad("gamma.faces", e)))
            .collect::<Result<Vec<_>, _>>()?;
        let audits = get("audit.which")
            .unwrap()
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| match s {
                "elliptic" => Ok(AuditKind::Elliptic),
                "boundary" => Ok(AuditKind::Boundary),
                "parabolic" => Ok(AuditKind::Parabolic),
                other => Err(RunnerError::Config(format!("audit.which: unknown audit `{other}`"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let s_list = match get("audit.s_list").unwrap() {
            "auto" => None,
            s => Some(parse_list("audit.s_list", s, parse_g)?),
        };
        let coords = |k: &str| get(k).map(|v| parse_list(k, v, parse_g)).transpose();
        let t_end = num("time.t_end")?;
        let first_sample = match get("time.first") {
            Some(_) => num("time.first")?,
            None => t_end / 10.0,
        };
        let cfg = Config {
            name: get("run.name").unwrap().to_string(),
            seed: get("run.seed").unwrap().parse().map_err(|_| RunnerError::Config("run.seed: not a u64".into()))?,
            dim,
            extents,
            counts,
            diffusion: num("diffusion.value")?,
            c1,
            c2,
            initial,
            threshold,
            gamma,
            t_end,
            dt: num("time.dt")?,
            first_sample,
            samples: int("time.samples")?,
            tau: num("time.tau")?,
            trace_tol: num("tol.trace")?,
            f_tol: num("tol.f")?,
            rate_tol: num("tol.rate")?,
            mode_trace_tol: num("tol.mode_trace")?,
            max_modes: int("modes.max")?,
            audits,
            audit_samples: int("audit.samples")?,
            s_list,
            audit_time_points: int("audit.time_points")?,
            lambda: num("audit.lambda")?,
            audit_y: coords("audit.y")?,
            audit_eigenvectors: int("audit.eigenvectors")?,
            c_scales: parse_list("audit.c_scales", get("audit.c_scales").unwrap(), parse_g)?,
            theta_power: num("decay.theta_power")?,
            sigma: num("decay.sigma")?,
            sigma1: num("decay.sigma1")?,
            omega_expected: get("omega.expected").map(|p| base.join(p)),
            omega_y: coords("omega.y")?,
            canonical,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path, seed: Option<u64>) -> Result<Self, RunnerError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunnerError::io(path, e))?;
        Config::parse(&text, seed, path.parent().unwrap_or(Path::new(".")))
    }

    fn validate(&self) -> Result<(), RunnerError> {
        let fail = |m: &str| Err(RunnerError::Config(m.to_string()));
        if self.extents.len() != self.dim || self.counts.len() != self.dim {
            return fail("grid.extents and grid.counts need one entry per dimension");
        }
        if !(self.t_end > 0.0 && self.dt > 0.0 && self.dt <= self.t_end) {
            return fail("need 0 < time.dt <= time.t_end");
        }
        if !(self.first_sample > 0.0 && self.first_sample < self.t_end) {
            return fail("need 0 < time.first < time.t_end");
        }
        if self.samples < 2 {
            return fail("time.samples must be at least 2");
        }
        if !(self.tau > 0.0 && self.lambda > 0.0) {
            return fail("time.tau and audit.lambda must be positive");
        }
        if self.s_list.as_ref().is_some_and(|s| s.iter().any(|v| *v <= 0.0)) {
            return fail("audit.s_list entries must be positive");
        }
        for (k, c) in [("audit.y", &self.audit_y), ("omega.y", &self.omega_y)] {
            if c.as_ref().is_some_and(|c| c.len() != self.dim) {
                return Err(RunnerError::Config(format!("{k} needs {} coordinate(s)", self.dim)));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical listing, hex encoded.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(self.canonical.as_bytes()))
    }
}
