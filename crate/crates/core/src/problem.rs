//! Game instances: coefficients, control grids, horizon and spatial box.
//!
//! Problems are described by a JSON document whose coefficient fields are
//! strings in the [`crate::dsl`] language. A handful of analytic benchmarks
//! ship in [`catalog`].

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{self, Bindings, DslError, Expr, VarSet};

/// Supported state dimensions.
pub const MAX_DIM: usize = 2;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("config error: {0}")]
    Config(#[from] serde_json::Error),
    #[error("missing key `{0}`")]
    MissingKey(&'static str),
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("cannot parse `{slot}`: {source}")]
    Parse { slot: String, source: DslError },
    #[error("evaluating {site}: {source}")]
    Eval { site: Box<EvalSite>, source: DslError },
    #[error("structural condition `{mode}` violated by `{coefficient}`: {message}")]
    Condition41 { mode: &'static str, coefficient: String, message: String },
    #[error("unknown catalog problem `{0}` (and no such file)")]
    UnknownCatalog(String),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    InFile { path: String, source: Box<ProblemError> },
}

/// Where a coefficient failed to evaluate.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSite {
    pub slot: String,
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl std::fmt::Display for EvalSite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "`{}` at t={}, x={:?}, u={:?}, v={:?}", self.slot, self.t, self.x, self.u, self.v)
    }
}

impl ProblemError {
    fn eval(slot: String, t: f64, x: &[f64], u: &[f64], v: &[f64], source: DslError) -> Self {
        let site = EvalSite { slot, t, x: x.to_vec(), u: u.to_vec(), v: v.to_vec() };
        ProblemError::Eval { site: Box::new(site), source }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    /// Boundary nodes copy the nearest interior node (homogeneous Neumann).
    #[default]
    Clamp,
    /// The last node along each axis coincides with the first.
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition41 {
    /// σ depends on `(t, x)` only.
    SigmaUncontrolled,
    /// `f = f0(t,x,y,u,v) + f1(t)·z`.
    FLinearInZ,
}

impl Condition41 {
    pub fn name(self) -> &'static str {
        match self {
            Condition41::SigmaUncontrolled => "sigma_uncontrolled",
            Condition41::FLinearInZ => "f_linear_in_z",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainConfig {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    #[serde(default)]
    pub boundary: BoundaryMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub points: Vec<Vec<f64>>,
}

/// User-declared bounds. Anything left out is estimated by sampling at load.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub sup_b: Option<f64>,
    pub sup_sigma: Option<f64>,
    pub sup_f: Option<f64>,
    pub sup_phi: Option<f64>,
    pub lip_x_b: Option<f64>,
    pub lip_x_sigma: Option<f64>,
    pub lip_x_f: Option<f64>,
    pub lip_y_f: Option<f64>,
    pub lip_z_f: Option<f64>,
    pub lip_phi: Option<f64>,
    /// Overrides the computed space-Lipschitz constant of the value.
    pub value_lipschitz: Option<f64>,
}

/// The on-disk problem description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub name: Option<String>,
    pub d: Option<usize>,
    #[serde(rename = "T", alias = "horizon")]
    pub horizon: Option<f64>,
    pub b: Option<Vec<String>>,
    pub sigma: Option<Vec<Vec<String>>>,
    pub f: Option<String>,
    pub phi: Option<String>,
    #[serde(rename = "U")]
    pub u: Option<GridConfig>,
    #[serde(rename = "V")]
    pub v: Option<GridConfig>,
    pub domain: Option<DomainConfig>,
    pub condition41_mode: Option<Condition41>,
    #[serde(default)]
    pub bounds: BoundsConfig,
    /// Default node count per axis for this problem.
    pub nx: Option<usize>,
}

/// Finite control set standing in for a compact control space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlGrid {
    pub label: String,
    points: Vec<Vec<f64>>,
}

impl ControlGrid {
    pub fn new(label: &str, points: Vec<Vec<f64>>) -> Result<Self, ProblemError> {
        let key = format!("{label}.points");
        let invalid = |message: String| ProblemError::Invalid { key: key.clone(), message };
        let q = points.first().map(Vec::len).ok_or_else(|| invalid("no control points".into()))?;
        if q == 0 {
            return Err(invalid("control points must have at least one coordinate".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != q {
                return Err(invalid(format!("point {i} has dimension {}, expected {q}", p.len())));
            }
            if p.iter().any(|c| !c.is_finite()) {
                return Err(invalid(format!("point {i} has a non-finite coordinate")));
            }
            if points[..i].contains(p) {
                return Err(invalid(format!("point {i} duplicates an earlier point")));
            }
        }
        Ok(Self { label: label.to_string(), points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn point(&self, index: usize) -> &[f64] {
        &self.points[index]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub boundary: BoundaryMode,
}

/// Resolved bounds used for CFL conditions and regularity checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub sup_b: f64,
    pub sup_sigma: f64,
    pub sup_f: f64,
    pub sup_phi: f64,
    pub lip_x_b: f64,
    pub lip_x_sigma: f64,
    pub lip_x_f: f64,
    pub lip_y_f: f64,
    pub lip_z_f: f64,
    pub lip_phi: f64,
    pub value_lipschitz: f64,
}

/// Coefficients frozen at one `(t, x, u, v)`. Entries past `d` are zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrozenCoefficients {
    pub b: [f64; MAX_DIM],
    /// σ, row-major `d × d`.
    pub sigma: [f64; MAX_DIM * MAX_DIM],
    /// σσᵀ, row-major `d × d`.
    pub a: [f64; MAX_DIM * MAX_DIM],
}

/// A validated game instance. Immutable after load.
#[derive(Debug, Clone)]
pub struct Problem {
    pub name: String,
    pub d: usize,
    pub horizon: f64,
    b: Vec<Expr>,
    sigma: Vec<Expr>,
    f: Expr,
    phi: Expr,
    pub u_grid: ControlGrid,
    pub v_grid: ControlGrid,
    pub domain: Domain,
    pub condition41: Condition41,
    pub bounds: Bounds,
    pub default_nx: usize,
    /// The config this problem was built from.
    pub config: ProblemConfig,
    /// Load-time bound cross-check findings.
    pub warnings: Vec<String>,
}

/// Parses a JSON problem description and validates it.
pub fn load_problem(text: &str) -> Result<Problem, ProblemError> {
    let config: ProblemConfig = serde_json::from_str(text)?;
    Problem::from_config(config)
}

/// Resolves a catalog name or a path to a JSON file.
pub fn resolve(name_or_path: &str) -> Result<Problem, ProblemError> {
    if let Some(text) = catalog_source(name_or_path) {
        return load_problem(text);
    }
    let path = std::path::Path::new(name_or_path);
    if !path.exists() {
        return Err(ProblemError::UnknownCatalog(name_or_path.to_string()));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|source| ProblemError::Io { path: name_or_path.to_string(), source })?;
    load_problem(&text).map_err(|e| ProblemError::InFile { path: name_or_path.to_string(), source: Box::new(e) })
}

impl Problem {
    pub fn from_config(config: ProblemConfig) -> Result<Problem, ProblemError> {
        let d = config.d.ok_or(ProblemError::MissingKey("d"))?;
        if d == 0 || d > MAX_DIM {
            return Err(invalid("d", format!("supported dimensions are 1 and 2, got {d}")));
        }
        let horizon = config.horizon.ok_or(ProblemError::MissingKey("T"))?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(invalid("T", format!("horizon must be positive, got {horizon}")));
        }
        let u_grid =
            ControlGrid::new("U", config.u.clone().ok_or(ProblemError::MissingKey("U"))?.points)?;
        let v_grid =
            ControlGrid::new("V", config.v.clone().ok_or(ProblemError::MissingKey("V"))?.points)?;
        let (qu, qv) = (u_grid.dim(), v_grid.dim());

        let b_src = config.b.clone().ok_or(ProblemError::MissingKey("b"))?;
        if b_src.len() != d {
            return Err(invalid("b", format!("expected {d} entries, got {}", b_src.len())));
        }
        let sigma_src = config.sigma.clone().ok_or(ProblemError::MissingKey("sigma"))?;
        if sigma_src.len() != d || sigma_src.iter().any(|r| r.len() != d) {
            return Err(invalid("sigma", format!("expected a {d}x{d} array")));
        }
        let dyn_vars = VarSet::dynamics(d, qu, qv);
        let b = b_src
            .iter()
            .enumerate()
            .map(|(i, s)| parse_slot(&format!("b[{i}]"), s, &dyn_vars))
            .collect::<Result<Vec<_>, _>>()?;
        let mut sigma = Vec::with_capacity(d * d);
        for (i, row) in sigma_src.iter().enumerate() {
            for (j, s) in row.iter().enumerate() {
                sigma.push(parse_slot(&format!("sigma[{i}][{j}]"), s, &dyn_vars)?);
            }
        }
        let f_src = config.f.as_deref().ok_or(ProblemError::MissingKey("f"))?;
        let f = parse_slot("f", f_src, &VarSet::running(d, qu, qv))?;
        let phi_src = config.phi.as_deref().ok_or(ProblemError::MissingKey("phi"))?;
        let phi = parse_slot("phi", phi_src, &VarSet::terminal(d))?;

        let dom = config.domain.clone().ok_or(ProblemError::MissingKey("domain"))?;
        if dom.min.len() != d || dom.max.len() != d {
            return Err(invalid("domain", format!("min and max need {d} entries")));
        }
        if dom.min.iter().zip(&dom.max).any(|(lo, hi)| lo >= hi || !lo.is_finite() || !hi.is_finite()) {
            return Err(invalid("domain", "x_min < x_max must hold componentwise".into()));
        }
        let domain = Domain { min: dom.min, max: dom.max, boundary: dom.boundary };
        let default_nx = config.nx.unwrap_or(201);
        if default_nx < 3 {
            return Err(invalid("nx", "at least 3 nodes per axis".into()));
        }

        let mut problem = Problem {
            name: config.name.clone().unwrap_or_else(|| "unnamed".into()),
            d,
            horizon,
            b,
            sigma,
            f,
            phi,
            u_grid,
            v_grid,
            domain,
            condition41: Condition41::SigmaUncontrolled,
            bounds: Bounds {
                sup_b: 0.0,
                sup_sigma: 0.0,
                sup_f: 0.0,
                sup_phi: 0.0,
                lip_x_b: 0.0,
                lip_x_sigma: 0.0,
                lip_x_f: 0.0,
                lip_y_f: 0.0,
                lip_z_f: 0.0,
                lip_phi: 0.0,
                value_lipschitz: 0.0,
            },
            default_nx,
            config,
            warnings: Vec::new(),
        };
        problem.condition41 = problem.check_condition41()?;
        let observed = problem.sample_bounds()?;
        problem.check_diagonal_dominance()?;
        problem.resolve_bounds(observed);
        Ok(problem)
    }

    fn check_condition41(&self) -> Result<Condition41, ProblemError> {
        let sigma_free =
            self.sigma.iter().enumerate().find(|(_, e)| e.uses_controls()).map(|(k, _)| k);
        let declared = self.config.condition41_mode;
        let slot = |k: usize| format!("sigma[{}][{}]", k / self.d, k % self.d);
        match declared {
            Some(Condition41::SigmaUncontrolled) => match sigma_free {
                None => Ok(Condition41::SigmaUncontrolled),
                Some(k) => Err(ProblemError::Condition41 {
                    mode: "sigma_uncontrolled",
                    coefficient: slot(k),
                    message: "references a control variable".into(),
                }),
            },
            Some(Condition41::FLinearInZ) => {
                self.probe_linear_in_z().map_err(|message| ProblemError::Condition41 {
                    mode: "f_linear_in_z",
                    coefficient: "f".into(),
                    message,
                })?;
                Ok(Condition41::FLinearInZ)
            }
            None => match sigma_free {
                None => Ok(Condition41::SigmaUncontrolled),
                Some(k) => self
                    .probe_linear_in_z()
                    .map(|_| Condition41::FLinearInZ)
                    .map_err(|message| ProblemError::Condition41 {
                        mode: "inferred",
                        coefficient: format!("{} and f", slot(k)),
                        message: format!("sigma is controlled and f is not linear in z: {message}"),
                    }),
            },
        }
    }

    /// Checks that `f(t,x,y,z,u,v) = f0(t,x,y,u,v) + f1(t)·z` at random points.
    fn probe_linear_in_z(&self) -> Result<(), String> {
        if !self.f.uses_z() {
            return Ok(());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x11ea);
        let d = self.d;
        for _ in 0..10 {
            let a = self.random_running_point(&mut rng);
            let mut other = self.random_running_point(&mut rng);
            other.t = a.t;
            let dir: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let eval = |p: &RunningPoint, z: &[f64]| -> Result<f64, String> {
                self.eval_f_raw(p.t, &p.x, p.y, z, &p.u, &p.v).map_err(|e| e.to_string())
            };
            let shifted = |z: &[f64], s: f64| -> Vec<f64> {
                z.iter().zip(&dir).map(|(zi, di)| zi + s * di).collect()
            };
            let fp = eval(&a, &shifted(&a.z, 1.0))?;
            let f0 = eval(&a, &a.z)?;
            let fm = eval(&a, &shifted(&a.z, -1.0))?;
            let curvature = (fp - 2.0 * f0 + fm).abs();
            let scale = fp.abs() + f0.abs() + fm.abs() + 1.0;
            if curvature / scale >= 1e-8 {
                return Err(format!("second difference in z is {curvature:e}"));
            }
            for k in 0..d {
                let mut e = vec![0.0; d];
                e[k] = 1.0;
                let slope = |p: &RunningPoint| -> Result<f64, String> {
                    let zp: Vec<f64> = p.z.iter().zip(&e).map(|(z, ek)| z + ek).collect();
                    let zm: Vec<f64> = p.z.iter().zip(&e).map(|(z, ek)| z - ek).collect();
                    Ok((eval(p, &zp)? - eval(p, &zm)?) / 2.0)
                };
                let (sa, sb) = (slope(&a)?, slope(&other)?);
                if (sa - sb).abs() / (sa.abs() + sb.abs() + 1.0) >= 1e-8 {
                    return Err(format!("z{}-slope depends on (x, y, u, v)", k + 1));
                }
            }
        }
        Ok(())
    }

    fn random_running_point(&self, rng: &mut ChaCha8Rng) -> RunningPoint {
        let d = self.d;
        RunningPoint {
            t: rng.random_range(0.0..=self.horizon),
            x: (0..d).map(|i| rng.random_range(self.domain.min[i]..=self.domain.max[i])).collect(),
            y: rng.random_range(-1.0..1.0),
            z: (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
            u: self.u_grid.point(rng.random_range(0..self.u_grid.len())).to_vec(),
            v: self.v_grid.point(rng.random_range(0..self.v_grid.len())).to_vec(),
        }
    }

    fn check_diagonal_dominance(&self) -> Result<(), ProblemError> {
        if self.d < 2 {
            return Ok(());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0xd1a6);
        for _ in 0..1000 {
            let p = self.random_running_point(&mut rng);
            let ui = rng.random_range(0..self.u_grid.len());
            let vi = rng.random_range(0..self.v_grid.len());
            let fr = self.freeze(p.t, &p.x, ui, vi)?;
            let off = fr.a[1].abs();
            if fr.a[0] + 1e-12 < off || fr.a[3] + 1e-12 < off {
                return Err(invalid(
                    "sigma",
                    format!(
                        "sigma sigma^T is not diagonally dominant at t={}, x={:?} (a11={}, a22={}, a12={})",
                        p.t, p.x, fr.a[0], fr.a[3], fr.a[1]
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Samples 10⁴ points for observed sup/Lipschitz values.
    fn sample_bounds(&self) -> Result<BTreeMap<&'static str, f64>, ProblemError> {
        let mut rng = ChaCha8Rng::seed_from_u64(0xb0d5);
        let mut obs: BTreeMap<&'static str, f64> = BTreeMap::new();
        let mut bump = |k: &'static str, v: f64| {
            let e = obs.entry(k).or_insert(0.0);
            *e = e.max(v);
        };
        let d = self.d;
        let zero = vec![0.0; d];
        for n in 0..10_000 {
            let p = self.random_running_point(&mut rng);
            // also visit every control pair at the domain corners
            let (ui, vi) = if n < self.u_grid.len() * self.v_grid.len() {
                (n / self.v_grid.len(), n % self.v_grid.len())
            } else {
                (rng.random_range(0..self.u_grid.len()), rng.random_range(0..self.v_grid.len()))
            };
            let x = if n < 4 {
                (0..d)
                    .map(|i| if (n >> i) & 1 == 0 { self.domain.min[i] } else { self.domain.max[i] })
                    .collect()
            } else {
                p.x.clone()
            };
            let fr = self.freeze(p.t, &x, ui, vi)?;
            bump("sup_b", fr.b[..d].iter().fold(0.0, |m, v| m.max(v.abs())));
            bump("sup_sigma", fr.sigma[..d * d].iter().fold(0.0, |m, v| m.max(v.abs())));
            let f0 = self.running_payoff(p.t, &x, 0.0, &zero, ui, vi)?;
            bump("sup_f", f0.abs());
            let phi = self.terminal(&x)?;
            bump("sup_phi", phi.abs());

            // finite-difference Lipschitz probes
            let hstep = 1e-4;
            let fy = self.running_payoff(p.t, &x, p.y, &p.z, ui, vi)?;
            let fy2 = self.running_payoff(p.t, &x, p.y + hstep, &p.z, ui, vi)?;
            bump("lip_y_f", (fy2 - fy).abs() / hstep);
            let mut zs = p.z.clone();
            for k in 0..d {
                zs[k] += hstep;
                let fz = self.running_payoff(p.t, &x, p.y, &zs, ui, vi)?;
                zs[k] -= hstep;
                bump("lip_z_f", (fz - fy).abs() / hstep);
            }
            let mut xs = x.clone();
            for k in 0..d {
                let step = hstep.min(self.domain.max[k] - x[k]);
                if step <= 0.0 {
                    continue;
                }
                xs[k] += step;
                let fr2 = self.freeze(p.t, &xs, ui, vi)?;
                let db = (0..d).fold(0.0f64, |m, i| m.max((fr2.b[i] - fr.b[i]).abs()));
                let ds = (0..d * d).fold(0.0f64, |m, i| m.max((fr2.sigma[i] - fr.sigma[i]).abs()));
                bump("lip_x_b", db / step);
                bump("lip_x_sigma", ds / step);
                let f2 = self.running_payoff(p.t, &xs, p.y, &p.z, ui, vi)?;
                bump("lip_x_f", (f2 - fy).abs() / step);
                bump("lip_phi", (self.terminal(&xs)? - phi).abs() / step);
                xs[k] = x[k];
            }
        }
        Ok(obs)
    }

    fn resolve_bounds(&mut self, observed: BTreeMap<&'static str, f64>) {
        let declared = self.config.bounds.clone();
        let mut warnings = Vec::new();
        let mut pick = |key: &'static str, value: Option<f64>| -> f64 {
            let seen = observed.get(key).copied().unwrap_or(0.0);
            match value {
                Some(v) => {
                    // finite-difference probes carry O(h) noise
                    if seen > v * (1.0 + 1e-3) + 1e-6 {
                        warnings.push(format!(
                            "declared bound {key} = {v} is exceeded by sampled value {seen}"
                        ));
                    }
                    v
                }
                None => seen,
            }
        };
        let mut bounds = Bounds {
            sup_b: pick("sup_b", declared.sup_b),
            sup_sigma: pick("sup_sigma", declared.sup_sigma),
            sup_f: pick("sup_f", declared.sup_f),
            sup_phi: pick("sup_phi", declared.sup_phi),
            lip_x_b: pick("lip_x_b", declared.lip_x_b),
            lip_x_sigma: pick("lip_x_sigma", declared.lip_x_sigma),
            lip_x_f: pick("lip_x_f", declared.lip_x_f),
            lip_y_f: pick("lip_y_f", declared.lip_y_f),
            lip_z_f: pick("lip_z_f", declared.lip_z_f),
            lip_phi: pick("lip_phi", declared.lip_phi),
            value_lipschitz: 0.0,
        };
        bounds.value_lipschitz =
            declared.value_lipschitz.unwrap_or_else(|| gronwall_lipschitz(&bounds, self.horizon));
        for w in &warnings {
            log::warn!("{}: {w}", self.name);
        }
        self.warnings = warnings;
        self.bounds = bounds;
    }

    /// Evaluates b, σ and σσᵀ at `(t, x)` for the control pair `(u_idx, v_idx)`.
    pub fn freeze(
        &self,
        t: f64,
        x: &[f64],
        u_idx: usize,
        v_idx: usize,
    ) -> Result<FrozenCoefficients, ProblemError> {
        let d = self.d;
        let u = self.u_grid.point(u_idx);
        let v = self.v_grid.point(v_idx);
        let env = Bindings { t: Some(t), x, u, v, ..Default::default() };
        let mut out = FrozenCoefficients::default();
        let located = |slot: String, source: DslError| ProblemError::eval(slot, t, x, u, v, source);
        for i in 0..d {
            out.b[i] = self.b[i].evaluate(&env).map_err(|e| located(format!("b[{i}]"), e))?;
        }
        for k in 0..d * d {
            out.sigma[k] = self.sigma[k]
                .evaluate(&env)
                .map_err(|e| located(format!("sigma[{}][{}]", k / d, k % d), e))?;
        }
        for i in 0..d {
            for j in 0..d {
                out.a[i * d + j] = (0..d).map(|k| out.sigma[i * d + k] * out.sigma[j * d + k]).sum();
            }
        }
        Ok(out)
    }

    /// Running payoff `f(t, x, y, z, u, v)` for grid controls.
    pub fn running_payoff(
        &self,
        t: f64,
        x: &[f64],
        y: f64,
        z: &[f64],
        u_idx: usize,
        v_idx: usize,
    ) -> Result<f64, ProblemError> {
        let u = self.u_grid.point(u_idx);
        let v = self.v_grid.point(v_idx);
        self.eval_f_raw(t, x, y, z, u, v).map_err(|source| ProblemError::eval("f".into(), t, x, u, v, source))
    }

    fn eval_f_raw(
        &self,
        t: f64,
        x: &[f64],
        y: f64,
        z: &[f64],
        u: &[f64],
        v: &[f64],
    ) -> Result<f64, DslError> {
        self.f.evaluate(&Bindings { t: Some(t), x, y: Some(y), z, u, v })
    }

    /// Terminal payoff Φ(x).
    pub fn terminal(&self, x: &[f64]) -> Result<f64, ProblemError> {
        self.phi
            .evaluate(&Bindings { x, ..Default::default() })
            .map_err(|source| ProblemError::eval("phi".into(), self.horizon, x, &[], &[], source))
    }

    pub fn running_expr(&self) -> &Expr {
        &self.f
    }

    pub fn control_pairs(&self) -> usize {
        self.u_grid.len() * self.v_grid.len()
    }

    /// True when neither b nor σ depends on `t`.
    pub fn dynamics_time_independent(&self) -> bool {
        !self.b.iter().chain(&self.sigma).any(Expr::uses_time)
    }

    pub fn f_uses_y(&self) -> bool {
        self.f.uses_y()
    }

    pub fn f_uses_z(&self) -> bool {
        self.f.uses_z()
    }

    /// Classical case: f free of `(y, z)`.
    pub fn is_classical(&self) -> bool {
        !self.f.uses_y() && !self.f.uses_z()
    }

    /// Width trimmed from each side of the box before measuring errors:
    /// `sup|b|·T + 4·sup|σ|·√T`.
    pub fn interior_margin(&self) -> f64 {
        self.bounds.sup_b * self.horizon + 4.0 * self.bounds.sup_sigma * self.horizon.sqrt()
    }

    /// Per-axis interior window, `None` when the margin swallows the box.
    pub fn interior_window(&self) -> Option<Vec<(f64, f64)>> {
        let m = self.interior_margin();
        let w: Vec<(f64, f64)> =
            (0..self.d).map(|i| (self.domain.min[i] + m, self.domain.max[i] - m)).collect();
        w.iter().all(|(lo, hi)| lo <= hi).then_some(w)
    }

    /// A-priori sup bound `sup|Φ| + T·sup|f(·,0,0)|·exp(Lip_y·T)`.
    pub fn value_bound(&self) -> f64 {
        let b = &self.bounds;
        b.sup_phi + self.horizon * b.sup_f * (b.lip_y_f * self.horizon).exp()
    }

    /// Constant bounding the time modulus `|W(t_j) - W(t_{j-1})| / √Δ`:
    /// drift and running cost move the value by `O(Δ) ≤ O(√(TΔ))`, the
    /// noise by `L·sup|σ|·√Δ`; the factor 4 absorbs the Gronwall constants.
    pub fn time_modulus_bound(&self) -> f64 {
        let b = &self.bounds;
        let l = b.value_lipschitz;
        4.0 * ((b.sup_f + b.sup_b * l) * self.horizon.sqrt() + b.sup_sigma * l)
    }
}

struct RunningPoint {
    t: f64,
    x: Vec<f64>,
    y: f64,
    z: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
}

fn invalid(key: &str, message: String) -> ProblemError {
    ProblemError::Invalid { key: key.to_string(), message }
}

fn parse_slot(slot: &str, source: &str, vars: &VarSet) -> Result<Expr, ProblemError> {
    dsl::parse(source, vars).map_err(|source| ProblemError::Parse { slot: slot.to_string(), source })
}

/// Gronwall-type space-Lipschitz estimate for the value:
/// `(Lip Φ + T·Lip_x f)·exp(T·(Lip_x b + ½Lip_x σ² + Lip_y f + ½Lip_z f²))`.
pub fn gronwall_lipschitz(b: &Bounds, horizon: f64) -> f64 {
    let rate = b.lip_x_b + 0.5 * b.lip_x_sigma.powi(2) + b.lip_y_f + 0.5 * b.lip_z_f.powi(2);
    (b.lip_phi + horizon * b.lip_x_f) * (rate * horizon).exp()
}

/// Names of the shipped benchmark problems.
pub const CATALOG: &[&str] =
    &["uv_running_cost", "heat_cosine", "uv_drift", "uv_drift_cosine", "uv_discounted", "heat_2d"];

/// JSON source of a catalog problem.
pub fn catalog_source(name: &str) -> Option<&'static str> {
    Some(match name {
        "uv_running_cost" => UV_RUNNING_COST,
        "heat_cosine" => HEAT_COSINE,
        "uv_drift" => UV_DRIFT,
        "uv_drift_cosine" => UV_DRIFT_COSINE,
        "uv_discounted" => UV_DISCOUNTED,
        "heat_2d" => HEAT_2D,
        _ => return None,
    })
}

/// Loads a catalog problem by name.
pub fn catalog(name: &str) -> Result<Problem, ProblemError> {
    let src = catalog_source(name).ok_or_else(|| ProblemError::UnknownCatalog(name.to_string()))?;
    load_problem(src)
}

// Matching pennies in the running cost: H⁻ = -1, H⁺ = +1, mixed value 0.
const UV_RUNNING_COST: &str = r#"{
  "name": "uv_running_cost", "d": 1, "T": 1.0,
  "b": ["0"], "sigma": [["1"]], "f": "u1*v1", "phi": "0",
  "U": {"points": [[-1], [1]]}, "V": {"points": [[-1], [1]]},
  "domain": {"min": [-5.0], "max": [5.0], "boundary": "clamp"},
  "condition41_mode": "sigma_uncontrolled", "nx": 201,
  "bounds": {"sup_b": 0, "sup_sigma": 1, "sup_f": 1, "sup_phi": 0,
             "lip_x_b": 0, "lip_x_sigma": 0, "lip_x_f": 0, "lip_y_f": 0, "lip_z_f": 0, "lip_phi": 0}
}"#;

const HEAT_COSINE: &str = r#"{
  "name": "heat_cosine", "d": 1, "T": 1.0,
  "b": ["0"], "sigma": [["1"]], "f": "0", "phi": "cos(x1)",
  "U": {"points": [[0]]}, "V": {"points": [[0]]},
  "domain": {"min": [-6.283185307179586], "max": [6.283185307179586], "boundary": "periodic"},
  "condition41_mode": "sigma_uncontrolled", "nx": 401,
  "bounds": {"sup_b": 0, "sup_sigma": 1, "sup_f": 0, "sup_phi": 1,
             "lip_x_b": 0, "lip_x_sigma": 0, "lip_x_f": 0, "lip_y_f": 0, "lip_z_f": 0, "lip_phi": 1}
}"#;

const UV_DRIFT: &str = r#"{
  "name": "uv_drift", "d": 1, "T": 1.0,
  "b": ["u1*v1"], "sigma": [["1"]], "f": "0", "phi": "x1",
  "U": {"points": [[-1], [1]]}, "V": {"points": [[-1], [1]]},
  "domain": {"min": [-6.0], "max": [6.0], "boundary": "clamp"},
  "condition41_mode": "sigma_uncontrolled", "nx": 241,
  "bounds": {"sup_b": 1, "sup_sigma": 1, "sup_f": 0, "sup_phi": 6,
             "lip_x_b": 0, "lip_x_sigma": 0, "lip_x_f": 0, "lip_y_f": 0, "lip_z_f": 0, "lip_phi": 1}
}"#;

const UV_DRIFT_COSINE: &str = r#"{
  "name": "uv_drift_cosine", "d": 1, "T": 1.0,
  "b": ["u1*v1"], "sigma": [["1"]], "f": "0", "phi": "cos(x1)",
  "U": {"points": [[-1], [-0.3333333333333333], [0.3333333333333333], [1]]},
  "V": {"points": [[-1], [-0.3333333333333333], [0.3333333333333333], [1]]},
  "domain": {"min": [-6.283185307179586], "max": [6.283185307179586], "boundary": "periodic"},
  "condition41_mode": "sigma_uncontrolled", "nx": 251,
  "bounds": {"sup_b": 1, "sup_sigma": 1, "sup_f": 0, "sup_phi": 1,
             "lip_x_b": 0, "lip_x_sigma": 0, "lip_x_f": 0, "lip_y_f": 0, "lip_z_f": 0, "lip_phi": 1}
}"#;

// y-dependent running payoff; mixed value 1 - exp(-(T-t)).
const UV_DISCOUNTED: &str = r#"{
  "name": "uv_discounted", "d": 1, "T": 1.0,
  "b": ["0"], "sigma": [["1"]], "f": "u1*v1 + 1 - y", "phi": "0",
  "U": {"points": [[-1], [1]]}, "V": {"points": [[-1], [1]]},
  "domain": {"min": [-5.0], "max": [5.0], "boundary": "clamp"},
  "condition41_mode": "sigma_uncontrolled", "nx": 201,
  "bounds": {"sup_b": 0, "sup_sigma": 1, "sup_f": 2, "sup_phi": 0,
             "lip_x_b": 0, "lip_x_sigma": 0, "lip_x_f": 0, "lip_y_f": 1, "lip_z_f": 0, "lip_phi": 0}
}"#;

// Correlated diffusion, σσᵀ = [[1, 1/2], [1/2, 1]].
const HEAT_2D: &str = r#"{
  "name": "heat_2d", "d": 2, "T": 1.0,
  "b": ["0", "0"], "sigma": [["1", "0"], ["0.5", "0.8660254037844386"]],
  "f": "0", "phi": "cos(x1)*cos(x2)",
  "U": {"points": [[0]]}, "V": {"points": [[0]]},
  "domain": {"min": [-6.283185307179586, -6.283185307179586],
             "max": [6.283185307179586, 6.283185307179586], "boundary": "periodic"},
  "condition41_mode": "sigma_uncontrolled", "nx": 101,
  "bounds": {"sup_b": 0, "sup_sigma": 1, "sup_f": 0, "sup_phi": 1,
             "lip_x_b": 0, "lip_x_sigma": 0, "lip_x_f": 0, "lip_y_f": 0, "lip_z_f": 0, "lip_phi": 1.4142135623730951}
}"#;
