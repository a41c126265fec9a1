//! Configuration-driven experiment pipeline: problem setup, basis
//! construction, reference solves and report output.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::correction::CorrectionContext;
use crate::error::{Error, Result};
use crate::fem::{
    assemble_inclusion, assemble_sine_family_with, uniform_square_mesh, AssembledProblem,
    CoefficientCoordinate,
};
use crate::fmt17;
use crate::interp::{cl_grid_on_box, smolyak_set, CLGrid, SmolyakSet};
use crate::linalg::{generalized_eig, EigPairs, SymMatrix};
use crate::mmio::read_symmetric;
use crate::pencil::{
    equivalence_from_box, rho_lambda_for_size, spectral_basis_from_pairs, AffineOperator,
    BoundStyle, Interval, SpectralEquivalence,
};
use crate::ritz::{
    build_basis, error_report, ErrorReport, Method, ReducedPencil, ReferenceSpectra, RitzBasis,
};

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ProblemConfig {
    Sine {
        d: usize,
        one_d: bool,
        coordinate: CoefficientCoordinate,
        domain: Interval,
    },
    Inclusion {
        kappa: f64,
    },
    External {
        a0: PathBuf,
        terms: Vec<PathBuf>,
        mass: PathBuf,
        /// One interval per parameter, or a single interval for all.
        parameter_box: Vec<Interval>,
    },
}

/// How the target endpoint `Λ` is chosen.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// `Λ = λ_N(Ā)`; the `N` smallest eigenvalues are measured.
    Count(usize),
    /// Explicit `Λ`; eigenvalues of `Ā` below it are measured.
    Lambda(f64),
}

/// How the sampling endpoint `ρΛ` is chosen.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    Rho(f64),
    RhoLambda(f64),
    /// `ρΛ` midway between `λ_m(Ā)` and `λ_{m+1}(Ā)`.
    BasisSize(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonSpec {
    Absolute(f64),
    /// `ε = η₁ / divisor`.
    Divisor(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TInterval {
    /// `[0, ρΛ]`.
    Sampling,
    /// `[0, Λ]`.
    Target,
    Explicit(Interval),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    /// Endpoints included for `d = 1`; a rank-1 lattice for `d > 1`.
    Equispaced,
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub label: String,
    pub problem: ProblemConfig,
    pub mesh_level: u32,
    pub target: Target,
    pub endpoint: Endpoint,
    /// Defaults to `ηₘ = 2⁻ᵐ`.
    pub eta: Option<Vec<f64>>,
    pub epsilon: EpsilonSpec,
    pub q: usize,
    pub t_interval: TInterval,
    pub method: Method,
    pub tol: f64,
    pub bound_style: BoundStyle,
    pub sample_count: usize,
    pub distribution: Distribution,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            label: "run".into(),
            problem: ProblemConfig::Sine {
                d: 1,
                one_d: true,
                coordinate: CoefficientCoordinate::FirstCoordinate,
                domain: (0.0, 1.0),
            },
            mesh_level: 4,
            target: Target::Count(10),
            endpoint: Endpoint::Rho(1.25),
            eta: None,
            epsilon: EpsilonSpec::Divisor(2.0),
            q: 2,
            t_interval: TInterval::Sampling,
            method: Method::Rmcli,
            tol: 1e-6,
            bound_style: BoundStyle::VertexSampling,
            sample_count: 20,
            distribution: Distribution::Equispaced,
            seed: 0,
            output_dir: None,
        }
    }
}

fn cfg_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

fn parse_f64(field: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse()
        .map_err(|_| cfg_err(field, format!("expected a number, found `{v}`")))
}

fn parse_usize(field: &str, v: &str) -> Result<usize> {
    v.trim().parse().map_err(|_| {
        cfg_err(
            field,
            format!("expected a non-negative integer, found `{v}`"),
        )
    })
}

fn parse_list(field: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|x| parse_f64(field, x)).collect()
}

fn parse_interval(field: &str, v: &str) -> Result<Interval> {
    let p = parse_list(field, v)?;
    if p.len() != 2 || !(p[0] < p[1]) {
        return Err(cfg_err(
            field,
            format!("expected `lo,hi` with lo < hi, found `{v}`"),
        ));
    }
    Ok((p[0], p[1]))
}

fn parse_bool(field: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(cfg_err(
            field,
            format!("expected true or false, found `{other}`"),
        )),
    }
}

fn fmt_interval(iv: Interval) -> String {
    format!("{},{}", iv.0, iv.1)
}

const GROUPS: [&[&str]; 2] = [
    &["spectral.N", "spectral.Lambda"],
    &["spectral.rho", "spectral.rho_lambda", "spectral.basis_size"],
];

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = ExperimentConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen: Vec<String> = Vec::new();
        let mut pending: HashMap<String, String> = HashMap::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| cfg_err(&format!("line {}", ln + 1), "expected `key = value`"))?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if seen.contains(&k) {
                return Err(cfg_err(&k, "key given twice"));
            }
            for g in GROUPS {
                if g.contains(&k.as_str()) {
                    if let Some(other) = seen.iter().find(|s| g.contains(&s.as_str())) {
                        return Err(cfg_err(&k, format!("conflicts with `{other}`")));
                    }
                }
            }
            seen.push(k.clone());
            pending.insert(k, v);
        }
        // the problem kind first, so that its sub-keys land on the right variant
        if let Some(v) = pending.remove("problem") {
            self.set("problem", &v)?;
        }
        let mut keys: Vec<_> = pending.keys().cloned().collect();
        keys.sort();
        for k in keys {
            self.set(&k, &pending[&k])?;
        }
        self.validate()
    }

    /// Sets a single key.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "label" => self.label = v.to_string(),
            "problem" => {
                self.problem = match v {
                    "sine" => ProblemConfig::Sine {
                        d: 1,
                        one_d: true,
                        coordinate: CoefficientCoordinate::FirstCoordinate,
                        domain: (0.0, 1.0),
                    },
                    "inclusion" => ProblemConfig::Inclusion { kappa: 0.5 },
                    "external" => ProblemConfig::External {
                        a0: PathBuf::new(),
                        terms: Vec::new(),
                        mass: PathBuf::new(),
                        parameter_box: vec![(-1.0, 1.0)],
                    },
                    other => return Err(cfg_err(key, format!("unknown problem `{other}`"))),
                }
            }
            "problem.d" | "problem.one_d" | "problem.coordinate" | "problem.domain" => {
                let ProblemConfig::Sine {
                    d,
                    one_d,
                    coordinate,
                    domain,
                } = &mut self.problem
                else {
                    return Err(cfg_err(key, "only valid for problem = sine"));
                };
                match key {
                    "problem.d" => {
                        *d = parse_usize(key, v)?;
                        if *d != 1 {
                            *one_d = false;
                        }
                    }
                    "problem.one_d" => *one_d = parse_bool(key, v)?,
                    "problem.coordinate" => {
                        *coordinate = match v {
                            "first" | "x1" => CoefficientCoordinate::FirstCoordinate,
                            "radial" => CoefficientCoordinate::Radial,
                            other => {
                                return Err(cfg_err(key, format!("unknown coordinate `{other}`")))
                            }
                        }
                    }
                    _ => *domain = parse_interval(key, v)?,
                }
            }
            "problem.kappa" => {
                let ProblemConfig::Inclusion { kappa } = &mut self.problem else {
                    return Err(cfg_err(key, "only valid for problem = inclusion"));
                };
                *kappa = parse_f64(key, v)?;
            }
            "external.a0" | "external.terms" | "external.mass" | "external.box" => {
                let ProblemConfig::External {
                    a0,
                    terms,
                    mass,
                    parameter_box,
                } = &mut self.problem
                else {
                    return Err(cfg_err(key, "only valid for problem = external"));
                };
                match key {
                    "external.a0" => *a0 = PathBuf::from(v),
                    "external.mass" => *mass = PathBuf::from(v),
                    "external.terms" => {
                        *terms = v.split(',').map(|s| PathBuf::from(s.trim())).collect()
                    }
                    _ => {
                        *parameter_box = v
                            .split(';')
                            .map(|s| parse_interval(key, s))
                            .collect::<Result<_>>()?;
                    }
                }
            }
            "mesh.level" => self.mesh_level = parse_usize(key, v)? as u32,
            "spectral.N" => self.target = Target::Count(parse_usize(key, v)?),
            "spectral.Lambda" => self.target = Target::Lambda(parse_f64(key, v)?),
            "spectral.rho" => self.endpoint = Endpoint::Rho(parse_f64(key, v)?),
            "spectral.rho_lambda" => self.endpoint = Endpoint::RhoLambda(parse_f64(key, v)?),
            "spectral.basis_size" => self.endpoint = Endpoint::BasisSize(parse_usize(key, v)?),
            "spectral.bounds" => {
                self.bound_style = match v {
                    "vertex" => BoundStyle::VertexSampling,
                    "coefficient" => BoundStyle::CoefficientBounds { kappa: None },
                    other => return Err(cfg_err(key, format!("unknown bound style `{other}`"))),
                }
            }
            "collocation.eta" => self.eta = Some(parse_list(key, v)?),
            "collocation.epsilon" => self.epsilon = EpsilonSpec::Absolute(parse_f64(key, v)?),
            "collocation.epsilon_divisor" => {
                self.epsilon = EpsilonSpec::Divisor(parse_f64(key, v)?)
            }
            "collocation.q" => self.q = parse_usize(key, v)?,
            "collocation.t_interval" => {
                self.t_interval = match v {
                    "sampling" => TInterval::Sampling,
                    "target" => TInterval::Target,
                    other => TInterval::Explicit(parse_interval(key, other)?),
                }
            }
            "method" => {
                self.method = v
                    .parse()
                    .map_err(|_| cfg_err(key, format!("unknown method `{v}`")))?
            }
            "method.tol" => self.tol = parse_f64(key, v)?,
            "samples.count" => self.sample_count = parse_usize(key, v)?,
            "samples.distribution" => {
                self.distribution = match v {
                    "equispaced" => Distribution::Equispaced,
                    "uniform" => Distribution::Uniform,
                    other => return Err(cfg_err(key, format!("unknown distribution `{other}`"))),
                }
            }
            "samples.seed" => {
                self.seed = v.parse().map_err(|_| {
                    cfg_err(key, format!("expected an unsigned integer, found `{v}`"))
                })?
            }
            "output.dir" => self.output_dir = Some(PathBuf::from(v)),
            "output.label" => self.label = v.to_string(),
            other => return Err(cfg_err(other, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.mesh_level == 0 {
            return Err(cfg_err("mesh.level", "must be at least 1"));
        }
        if self.q == 0 {
            return Err(cfg_err("collocation.q", "must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(cfg_err("method.tol", "must be positive"));
        }
        if self.sample_count == 0 {
            return Err(cfg_err("samples.count", "must be at least 1"));
        }
        match &self.target {
            Target::Count(0) => return Err(cfg_err("spectral.N", "must be at least 1")),
            Target::Lambda(l) if !(*l > 0.0) => {
                return Err(cfg_err("spectral.Lambda", "must be positive"))
            }
            _ => {}
        }
        match &self.endpoint {
            Endpoint::Rho(r) if !(*r > 1.0) => {
                return Err(cfg_err("spectral.rho", "must exceed 1"))
            }
            Endpoint::RhoLambda(r) if !(*r > 0.0) => {
                return Err(cfg_err("spectral.rho_lambda", "must be positive"))
            }
            Endpoint::BasisSize(0) => {
                return Err(cfg_err("spectral.basis_size", "must be at least 1"))
            }
            _ => {}
        }
        match &self.epsilon {
            EpsilonSpec::Absolute(e) if !(*e > 0.0) => {
                return Err(cfg_err("collocation.epsilon", "must be positive"))
            }
            EpsilonSpec::Divisor(dv) if !(*dv > 0.0) => {
                return Err(cfg_err("collocation.epsilon_divisor", "must be positive"))
            }
            _ => {}
        }
        match &self.problem {
            ProblemConfig::Sine { d: 0, .. } => {
                return Err(cfg_err("problem.d", "must be at least 1"))
            }
            ProblemConfig::Sine { d, one_d: true, .. } if *d != 1 => {
                return Err(cfg_err("problem.one_d", "requires problem.d = 1"))
            }
            ProblemConfig::External { a0, mass, .. }
                if a0.as_os_str().is_empty() || mass.as_os_str().is_empty() =>
            {
                return Err(cfg_err(
                    "external.a0",
                    "external problems need external.a0 and external.mass",
                ))
            }
            _ => {}
        }
        if let Some(eta) = &self.eta {
            if eta.len() != self.parameter_dim() {
                return Err(cfg_err(
                    "collocation.eta",
                    format!(
                        "needs {} entries, found {}",
                        self.parameter_dim(),
                        eta.len()
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn parameter_dim(&self) -> usize {
        match &self.problem {
            ProblemConfig::Sine { d, .. } => *d,
            ProblemConfig::Inclusion { .. } => 1,
            ProblemConfig::External { terms, .. } => terms.len(),
        }
    }

    pub fn resolved_eta(&self) -> Vec<f64> {
        self.eta.clone().unwrap_or_else(|| {
            (1..=self.parameter_dim())
                .map(|m| 0.5f64.powi(m as i32))
                .collect()
        })
    }

    pub fn resolved_epsilon(&self) -> f64 {
        match self.epsilon {
            EpsilonSpec::Absolute(e) => e,
            EpsilonSpec::Divisor(dv) => self.resolved_eta()[0] / dv,
        }
    }

    /// Key-value text that parses back to this configuration.
    pub fn to_text(&self) -> String {
        let mut s = format!("label = {}\n", self.label);
        match &self.problem {
            ProblemConfig::Sine {
                d,
                one_d,
                coordinate,
                domain,
            } => {
                s.push_str(&format!(
                    "problem = sine\nproblem.d = {d}\nproblem.one_d = {one_d}\n"
                ));
                let c = match coordinate {
                    CoefficientCoordinate::FirstCoordinate => "first",
                    CoefficientCoordinate::Radial => "radial",
                };
                s.push_str(&format!(
                    "problem.coordinate = {c}\nproblem.domain = {}\n",
                    fmt_interval(*domain)
                ));
            }
            ProblemConfig::Inclusion { kappa } => {
                s.push_str(&format!("problem = inclusion\nproblem.kappa = {kappa}\n"))
            }
            ProblemConfig::External {
                a0,
                terms,
                mass,
                parameter_box,
            } => {
                let t: Vec<String> = terms.iter().map(|p| p.display().to_string()).collect();
                let b: Vec<String> = parameter_box.iter().map(|iv| fmt_interval(*iv)).collect();
                s.push_str(&format!(
                    "problem = external\nexternal.a0 = {}\nexternal.terms = {}\nexternal.mass = {}\nexternal.box = {}\n",
                    a0.display(),
                    t.join(","),
                    mass.display(),
                    b.join(";")
                ));
            }
        }
        s.push_str(&format!("mesh.level = {}\n", self.mesh_level));
        match &self.target {
            Target::Count(n) => s.push_str(&format!("spectral.N = {n}\n")),
            Target::Lambda(l) => s.push_str(&format!("spectral.Lambda = {l}\n")),
        }
        match &self.endpoint {
            Endpoint::Rho(r) => s.push_str(&format!("spectral.rho = {r}\n")),
            Endpoint::RhoLambda(r) => s.push_str(&format!("spectral.rho_lambda = {r}\n")),
            Endpoint::BasisSize(m) => s.push_str(&format!("spectral.basis_size = {m}\n")),
        }
        let bounds = match self.bound_style {
            BoundStyle::VertexSampling => "vertex",
            BoundStyle::CoefficientBounds { .. } => "coefficient",
        };
        s.push_str(&format!("spectral.bounds = {bounds}\n"));
        if let Some(eta) = &self.eta {
            let e: Vec<String> = eta.iter().map(|v| v.to_string()).collect();
            s.push_str(&format!("collocation.eta = {}\n", e.join(",")));
        }
        match self.epsilon {
            EpsilonSpec::Absolute(e) => s.push_str(&format!("collocation.epsilon = {e}\n")),
            EpsilonSpec::Divisor(dv) => {
                s.push_str(&format!("collocation.epsilon_divisor = {dv}\n"))
            }
        }
        s.push_str(&format!("collocation.q = {}\n", self.q));
        match self.t_interval {
            TInterval::Sampling => s.push_str("collocation.t_interval = sampling\n"),
            TInterval::Target => s.push_str("collocation.t_interval = target\n"),
            TInterval::Explicit(iv) => {
                s.push_str(&format!("collocation.t_interval = {}\n", fmt_interval(iv)))
            }
        }
        s.push_str(&format!(
            "method = {}\nmethod.tol = {}\n",
            self.method, self.tol
        ));
        let dist = match self.distribution {
            Distribution::Equispaced => "equispaced",
            Distribution::Uniform => "uniform",
        };
        s.push_str(&format!(
            "samples.count = {}\nsamples.distribution = {dist}\nsamples.seed = {}\n",
            self.sample_count, self.seed
        ));
        if let Some(dir) = &self.output_dir {
            s.push_str(&format!("output.dir = {}\n", dir.display()));
        }
        s
    }

    /// Identifies the assembled pencil, for caching.
    fn problem_key(&self) -> String {
        format!("{:?}|{}", self.problem, self.mesh_level)
    }
}

/// Loads `A₀`, the terms `A₁..A_d` and `M` from Matrix Market files.
/// Returns the names of files that had to be symmetrized.
pub fn import_pencil(
    a0: &Path,
    terms: &[PathBuf],
    mass: &Path,
) -> Result<(AffineOperator, SymMatrix, Vec<String>)> {
    let mut fixed = Vec::new();
    let mut load = |p: &Path| -> Result<SymMatrix> {
        let text = std::fs::read_to_string(p)
            .map_err(|e| Error::from(e).context(p.display().to_string()))?;
        let (m, sym) = read_symmetric(&text).map_err(|e| e.context(p.display().to_string()))?;
        if sym {
            fixed.push(p.display().to_string());
        }
        Ok(m)
    };
    let a = load(a0)?;
    let ts = terms.iter().map(|p| load(p)).collect::<Result<Vec<_>>>()?;
    let m = load(mass)?;
    if m.n() != a.n() {
        return Err(Error::DimensionMismatch {
            context: "mass matrix dimension",
            expected: a.n(),
            found: m.n(),
        });
    }
    Ok((AffineOperator::new(a, ts)?, m, fixed))
}

/// σ samples on the box.
pub fn sigma_samples(
    bx: &[Interval],
    count: usize,
    distribution: Distribution,
    seed: u64,
) -> Vec<Vec<f64>> {
    let d = bx.len();
    match distribution {
        Distribution::Uniform => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count)
                .map(|_| bx.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect())
                .collect()
        }
        Distribution::Equispaced if d == 1 => {
            let (lo, hi) = bx[0];
            if count == 1 {
                return vec![vec![0.5 * (lo + hi)]];
            }
            (0..count)
                .map(|i| vec![lo + (hi - lo) * i as f64 / (count - 1) as f64])
                .collect()
        }
        Distribution::Equispaced => {
            // centred rank-1 lattice with a Korobov generator
            let n = count as u64;
            let a = korobov_generator(n);
            let mut z = vec![1u64; d];
            for m in 1..d {
                z[m] = z[m - 1] * a % n.max(1);
            }
            (0..n)
                .map(|k| {
                    (0..d)
                        .map(|m| {
                            let u = ((k * z[m]) % n) as f64 / n as f64 + 0.5 / n as f64;
                            bx[m].0 + (bx[m].1 - bx[m].0) * u
                        })
                        .collect()
                })
                .collect()
        }
    }
}

/// Largest integer below `0.618 n` coprime to `n`, at least 1.
fn korobov_generator(n: u64) -> u64 {
    fn gcd(a: u64, b: u64) -> u64 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    let mut a = ((n as f64) * 0.618) as u64;
    while a > 1 && gcd(a, n) != 1 {
        a -= 1;
    }
    a.max(1)
}

/// Problem data shared by runs that differ only in collocation settings.
pub struct PreparedProblem {
    pub op: AffineOperator,
    pub mass: SymMatrix,
    pub parameter_box: Vec<Interval>,
    pub abar_pairs: EigPairs,
    pub symmetrized: Vec<String>,
}

impl PreparedProblem {
    pub fn from_parts(
        op: AffineOperator,
        mass: SymMatrix,
        parameter_box: Vec<Interval>,
    ) -> Result<Self> {
        let abar_pairs = generalized_eig(op.a0(), &mass)?;
        Ok(PreparedProblem {
            op,
            mass,
            parameter_box,
            abar_pairs,
            symmetrized: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.op.n()
    }
}

pub fn assemble(config: &ExperimentConfig) -> Result<AssembledProblem> {
    match &config.problem {
        ProblemConfig::Sine {
            d,
            one_d,
            coordinate,
            domain,
        } => {
            let mesh = uniform_square_mesh(*domain, config.mesh_level)?;
            assemble_sine_family_with(&mesh, *d, *one_d, *coordinate)
        }
        ProblemConfig::Inclusion { kappa } => {
            let mesh = uniform_square_mesh((-1.0, 1.0), config.mesh_level)?;
            assemble_inclusion(&mesh, *kappa)
        }
        ProblemConfig::External { .. } => Err(cfg_err(
            "problem",
            "external pencils are imported, not assembled",
        )),
    }
}

fn prepare(config: &ExperimentConfig) -> Result<PreparedProblem> {
    match &config.problem {
        ProblemConfig::External {
            a0,
            terms,
            mass,
            parameter_box,
        } => {
            let (op, m, fixed) = import_pencil(a0, terms, mass)?;
            let bx = match parameter_box.len() {
                1 => vec![parameter_box[0]; op.d()],
                k if k == op.d() => parameter_box.clone(),
                k => {
                    return Err(cfg_err(
                        "external.box",
                        format!("needs 1 or {} intervals, found {k}", op.d()),
                    ))
                }
            };
            let mut p = PreparedProblem::from_parts(op, m, bx)?;
            p.symmetrized = fixed;
            Ok(p)
        }
        _ => {
            let a = assemble(config)?;
            PreparedProblem::from_parts(a.op, a.mass, a.parameter_box)
        }
    }
}

/// Resolved spectral quantities of a run.
#[derive(Clone, Debug, Serialize)]
pub struct SpectralSetup {
    pub lambda: f64,
    pub rho: f64,
    pub rho_lambda: f64,
    pub count: usize,
    pub m: usize,
}

pub fn resolve_spectral(config: &ExperimentConfig, values: &[f64]) -> Result<SpectralSetup> {
    let (lambda, count) = match config.target {
        Target::Count(n) => {
            if n > values.len() {
                return Err(cfg_err(
                    "spectral.N",
                    format!("exceeds the problem size {}", values.len()),
                ));
            }
            (values[n - 1], n)
        }
        Target::Lambda(l) => {
            let c = values.iter().filter(|&&v| v < l).count();
            if c == 0 {
                return Err(cfg_err(
                    "spectral.Lambda",
                    format!("no eigenvalue of the average pencil below {l}"),
                ));
            }
            (l, c)
        }
    };
    let rho_lambda = match config.endpoint {
        Endpoint::Rho(r) => r * lambda,
        Endpoint::RhoLambda(r) => r,
        Endpoint::BasisSize(m) => {
            rho_lambda_for_size(values, m).map_err(|e| e.context("spectral.basis_size"))?
        }
    };
    if rho_lambda < lambda {
        return Err(cfg_err(
            "spectral",
            format!("sampling endpoint {rho_lambda} lies below the target endpoint {lambda}"),
        ));
    }
    let m = values.iter().filter(|&&v| v < rho_lambda).count();
    Ok(SpectralSetup {
        lambda,
        rho: rho_lambda / lambda,
        rho_lambda,
        count,
        m,
    })
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Timings {
    pub setup_s: f64,
    pub basis_s: f64,
    pub reference_s: f64,
    pub report_s: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub label: String,
    pub config: ExperimentConfig,
    pub n: usize,
    pub d: usize,
    pub spectral: SpectralSetup,
    pub alpha: f64,
    pub beta: f64,
    pub eta: Vec<f64>,
    pub epsilon: f64,
    pub q: usize,
    pub tol: Option<f64>,
    pub t_interval: Interval,
    pub index_count: usize,
    pub retained_index_count: usize,
    pub sigma_points: usize,
    pub n_pairs: usize,
    pub pre_orth_columns: usize,
    pub dim: usize,
    pub global_max_error: Option<f64>,
    pub timings: Timings,
}

pub struct RunOutcome {
    pub summary: RunSummary,
    pub report: ErrorReport,
    pub basis: RitzBasis,
    pub grid: CLGrid,
    pub set: SmolyakSet,
    pub equivalence: SpectralEquivalence,
}

impl RunOutcome {
    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.summary)?)
    }

    /// Writes `<label>.csv`, `<label>_grid.csv` and `<label>.json`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let label = &self.summary.label;
        let files = [
            (format!("{label}.csv"), self.report.to_csv()),
            (format!("{label}_grid.csv"), self.grid.to_csv()),
            (format!("{label}.json"), self.summary_json()? + "\n"),
        ];
        let mut out = Vec::new();
        for (name, body) in files {
            let p = dir.join(name);
            std::fs::write(&p, body)?;
            out.push(p);
        }
        Ok(out)
    }
}

/// Reuses assembled problems and reference spectra across runs.
#[derive(Default)]
pub struct Session {
    problems: HashMap<String, PreparedProblem>,
    references: HashMap<String, ReferenceSpectra>,
}

impl Session {
    pub fn new() -> Self {
        Session::default()
    }

    pub fn problem(&mut self, config: &ExperimentConfig) -> Result<&PreparedProblem> {
        let key = config.problem_key();
        if !self.problems.contains_key(&key) {
            let p = prepare(config)?;
            self.problems.insert(key.clone(), p);
        }
        Ok(&self.problems[&key])
    }

    /// Registers an already prepared pencil for `config`, bypassing assembly.
    pub fn insert_problem(&mut self, config: &ExperimentConfig, problem: PreparedProblem) {
        self.problems.insert(config.problem_key(), problem);
    }

    /// Everything up to and including the Ritz basis.
    pub fn build(&mut self, config: &ExperimentConfig) -> Result<BasisStage> {
        config.validate()?;
        let t0 = Instant::now();
        let problem = self.problem(config)?;
        let mut timings = Timings::default();
        let spectral = resolve_spectral(config, &problem.abar_pairs.values)?;
        let basis0 = spectral_basis_from_pairs(&problem.abar_pairs, spectral.rho_lambda)?;
        let equivalence =
            equivalence_from_box(&problem.op, &problem.parameter_box, &config.bound_style)?;
        let ctx = CorrectionContext::new(
            problem.op.clone(),
            problem.mass.clone(),
            basis0,
            equivalence.clone(),
            spectral.lambda,
        )?;
        let eta = config.resolved_eta();
        let epsilon = config.resolved_epsilon();
        let set = smolyak_set(&eta, epsilon).map_err(|e| e.context("collocation"))?;
        let t_interval = match config.t_interval {
            TInterval::Sampling => (0.0, spectral.rho_lambda),
            TInterval::Target => (0.0, spectral.lambda),
            TInterval::Explicit(iv) => iv,
        };
        let grid = cl_grid_on_box(&set, config.q, t_interval, &problem.parameter_box)?;
        timings.setup_s = t0.elapsed().as_secs_f64();

        let t1 = Instant::now();
        let basis = build_basis(&ctx, &grid, config.method, config.tol)?;
        timings.basis_s = t1.elapsed().as_secs_f64();

        let summary = RunSummary {
            label: config.label.clone(),
            config: config.clone(),
            n: problem.n(),
            d: problem.op.d(),
            spectral,
            alpha: equivalence.alpha,
            beta: equivalence.beta,
            eta,
            epsilon,
            q: config.q,
            tol: basis.tol,
            t_interval,
            index_count: set.len(),
            retained_index_count: set.retained().len(),
            sigma_points: grid.sigma_points.len(),
            n_pairs: grid.n_pairs(),
            pre_orth_columns: basis.pre_orth_columns,
            dim: basis.dim(),
            global_max_error: None,
            timings,
        };
        Ok(BasisStage {
            summary,
            basis,
            grid,
            set,
            equivalence,
        })
    }

    /// σ samples of `config` with the Ritz values at each, without reference solves.
    pub fn solve(&mut self, config: &ExperimentConfig) -> Result<Solved> {
        let stage = self.build(config)?;
        let problem = &self.problems[&config.problem_key()];
        let samples = sigma_samples(
            &problem.parameter_box,
            config.sample_count,
            config.distribution,
            config.seed,
        );
        let pencil = ReducedPencil::new(&stage.basis.q, &problem.op, &problem.mass)?;
        let count = stage.summary.spectral.count.min(pencil.k());
        let mu = samples
            .par_iter()
            .map(|s| pencil.values(s, count))
            .collect::<Result<Vec<_>>>()?;
        Ok(Solved { stage, samples, mu })
    }

    pub fn run(&mut self, config: &ExperimentConfig) -> Result<RunOutcome> {
        let BasisStage {
            mut summary,
            basis,
            grid,
            set,
            equivalence,
        } = self.build(config)?;
        let key = config.problem_key();
        let problem = &self.problems[&key];

        let t2 = Instant::now();
        let samples = sigma_samples(
            &problem.parameter_box,
            config.sample_count,
            config.distribution,
            config.seed,
        );
        let rkey = format!("{key}|{:?}|{}", samples, summary.spectral.count);
        if !self.references.contains_key(&rkey) {
            let r = ReferenceSpectra::compute(
                &problem.op,
                &problem.mass,
                &samples,
                summary.spectral.count,
            )?;
            self.references.insert(rkey.clone(), r);
        }
        let reference = &self.references[&rkey];
        summary.timings.reference_s = t2.elapsed().as_secs_f64();

        let t3 = Instant::now();
        let report = error_report(&basis, &problem.op, &problem.mass, reference)?;
        summary.timings.report_s = t3.elapsed().as_secs_f64();
        summary.global_max_error = Some(report.global_max);

        let out = RunOutcome {
            summary,
            report,
            basis,
            grid,
            set,
            equivalence,
        };
        if let Some(dir) = &config.output_dir {
            out.write(dir)?;
        }
        Ok(out)
    }
}

/// Output of [`Session::build`].
pub struct BasisStage {
    pub summary: RunSummary,
    pub basis: RitzBasis,
    pub grid: CLGrid,
    pub set: SmolyakSet,
    pub equivalence: SpectralEquivalence,
}

/// Output of [`Session::solve`].
pub struct Solved {
    pub stage: BasisStage,
    pub samples: Vec<Vec<f64>>,
    /// Ritz values, one row per sample.
    pub mu: Vec<Vec<f64>>,
}

/// Ritz values per σ sample: `sample,sigma_1..sigma_d,k,mu`.
pub fn ritz_values_csv(samples: &[Vec<f64>], mu: &[Vec<f64>]) -> String {
    let d = samples.first().map_or(0, Vec::len);
    let mut s = String::from("sample");
    for m in 1..=d {
        s.push_str(&format!(",sigma_{m}"));
    }
    s.push_str(",k,mu\n");
    for (i, (sig, vals)) in samples.iter().zip(mu).enumerate() {
        let prefix: String = sig.iter().map(|v| format!(",{}", fmt17(*v))).collect();
        for (k, v) in vals.iter().enumerate() {
            s.push_str(&format!("{i}{prefix},{},{}\n", k + 1, fmt17(*v)));
        }
    }
    s
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutcome> {
    Session::new().run(config)
}

/// One point of a plotted series.
#[derive(Clone, Debug)]
pub struct PlotPoint {
    pub series: String,
    pub x: f64,
    pub y: f64,
    pub pre_dim: usize,
    pub dim: usize,
}

impl PlotPoint {
    pub fn from_summary(series: impl Into<String>, x: f64, s: &RunSummary) -> Self {
        PlotPoint {
            series: series.into(),
            x,
            y: s.global_max_error.unwrap_or(f64::NAN),
            pre_dim: s.pre_orth_columns,
            dim: s.dim,
        }
    }
}

/// Long-format CSV: `series,x,y,pre_dim,dim`.
pub fn emit_plot_data(points: &[PlotPoint]) -> String {
    let mut s = String::from("series,x,y,pre_dim,dim\n");
    for p in points {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            p.series,
            fmt17(p.x),
            fmt17(p.y),
            p.pre_dim,
            p.dim
        ));
    }
    s
}

/// A named sweep: configurations plus how each maps onto a plot point.
pub struct Sweep {
    pub name: &'static str,
    pub runs: Vec<(ExperimentConfig, String, f64)>,
}

fn sine_1d(level: u32) -> ExperimentConfig {
    ExperimentConfig {
        mesh_level: level,
        eta: Some(vec![0.5]),
        ..ExperimentConfig::default()
    }
}

/// Four ε values with the one-parameter sine problem.
pub fn table1(level: u32) -> Sweep {
    let runs = [1.1, 2.0, 5.0, 20.0]
        .iter()
        .map(|&dv| {
            let mut c = sine_1d(level);
            c.epsilon = EpsilonSpec::Divisor(dv);
            c.label = format!("table1_eps_div_{dv}");
            (c, "rmcli".to_string(), dv)
        })
        .collect();
    Sweep {
        name: "table1",
        runs,
    }
}

/// `q = 1..5` for both methods at `ε = η/10`, basis size 10, tolerance `1e-7`.
pub fn table2(level: u32) -> Sweep {
    let mut runs = Vec::new();
    for method in [Method::Rmcli, Method::RmcliReduced] {
        for q in 1..=5 {
            let mut c = sine_1d(level);
            c.endpoint = Endpoint::BasisSize(10);
            c.epsilon = EpsilonSpec::Divisor(10.0);
            c.q = q;
            c.method = method;
            c.tol = 1e-7;
            c.label = format!("table2_{method}_q{q}");
            runs.push((c, method.to_string(), q as f64));
        }
    }
    Sweep {
        name: "table2",
        runs,
    }
}

/// Error against `q` for both methods; same runs as [`table2`] with the
/// default endpoint.
pub fn fig1(level: u32) -> Sweep {
    let mut s = table2(level);
    for (c, _, _) in &mut s.runs {
        c.endpoint = Endpoint::Rho(1.25);
        c.label = c.label.replacen("table2", "fig1", 1);
    }
    s.name = "fig1";
    s
}

/// `d = 1..4`, `q ∈ {1, 3, 5}`, both methods at tolerance `1e-6`, 10 samples.
pub fn fig3(level: u32) -> Sweep {
    let mut runs = Vec::new();
    for method in [Method::Rmcli, Method::RmcliReduced] {
        for q in [1, 3, 5] {
            for d in 1..=4 {
                let c = ExperimentConfig {
                    label: format!("fig3_{method}_q{q}_d{d}"),
                    problem: ProblemConfig::Sine {
                        d,
                        one_d: false,
                        coordinate: CoefficientCoordinate::FirstCoordinate,
                        domain: (0.0, 1.0),
                    },
                    mesh_level: level,
                    epsilon: EpsilonSpec::Divisor(10.0),
                    q,
                    method,
                    tol: 1e-6,
                    sample_count: 10,
                    ..ExperimentConfig::default()
                };
                runs.push((c, format!("{method}_q{q}"), d as f64));
            }
        }
    }
    Sweep { name: "fig3", runs }
}

pub fn canned(name: &str, level: u32) -> Result<Sweep> {
    match name {
        "table1" => Ok(table1(level)),
        "table2" => Ok(table2(level)),
        "fig1" => Ok(fig1(level)),
        "fig3" => Ok(fig3(level)),
        other => Err(Error::InvalidParameter(format!(
            "unknown experiment `{other}` (expected table1, table2, fig1 or fig3)"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_defaults_and_overrides() {
        let c = ExperimentConfig::parse(
            "# comment\nmesh.level = 3\ncollocation.eta = 0.5\nspectral.N = 5 # trailing\n",
        )
        .unwrap();
        assert_eq!(c.mesh_level, 3);
        assert_eq!(c.target, Target::Count(5));
        assert_eq!(c.resolved_epsilon(), 0.25);
        let back = ExperimentConfig::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn exclusive_keys_are_rejected() {
        let e = ExperimentConfig::parse("spectral.N = 3\nspectral.Lambda = 40\n").unwrap_err();
        assert!(matches!(e, Error::Config { ref field, .. } if field == "spectral.Lambda"));
        let e =
            ExperimentConfig::parse("spectral.rho = 1.3\nspectral.rho_lambda = 40\n").unwrap_err();
        assert!(matches!(e, Error::Config { .. }));
        let e = ExperimentConfig::parse("bogus = 1\n").unwrap_err();
        assert!(matches!(e, Error::Config { ref field, .. } if field == "bogus"));
        let e = ExperimentConfig::parse("problem = inclusion\nproblem.d = 2\n").unwrap_err();
        assert!(matches!(e, Error::Config { ref field, .. } if field == "problem.d"));
    }

    #[test]
    fn problem_sub_keys_follow_problem_kind() {
        let c = ExperimentConfig::parse("problem.kappa = 0.3\nproblem = inclusion\n").unwrap();
        assert_eq!(c.problem, ProblemConfig::Inclusion { kappa: 0.3 });
        let c = ExperimentConfig::parse("problem = sine\nproblem.d = 3\n").unwrap();
        assert_eq!(c.parameter_dim(), 3);
        assert_eq!(c.resolved_eta(), vec![0.5, 0.25, 0.125]);
    }

    #[test]
    fn equispaced_samples() {
        let s = sigma_samples(&[(-1.0, 1.0)], 5, Distribution::Equispaced, 0);
        assert_eq!(
            s,
            vec![vec![-1.0], vec![-0.5], vec![0.0], vec![0.5], vec![1.0]]
        );
        let s = sigma_samples(&[(-1.0, 1.0); 3], 10, Distribution::Equispaced, 0);
        assert_eq!(s.len(), 10);
        assert!(s.iter().flatten().all(|v| v.abs() < 1.0));
        // each coordinate of a rank-1 lattice with coprime generator is a permutation of the 1-D grid
        for m in 0..3 {
            let mut c: Vec<f64> = s.iter().map(|p| p[m]).collect();
            c.sort_by(f64::total_cmp);
            assert!(c.windows(2).all(|w| (w[1] - w[0] - 0.2).abs() < 1e-12));
        }
        let a = sigma_samples(&[(-1.0, 1.0)], 4, Distribution::Uniform, 7);
        assert_eq!(
            a,
            sigma_samples(&[(-1.0, 1.0)], 4, Distribution::Uniform, 7)
        );
    }

    #[test]
    fn spectral_resolution() {
        let values = [1.0, 2.0, 3.0, 4.0, 8.0];
        let s = resolve_spectral(
            &ExperimentConfig::parse("spectral.N = 3\n").unwrap(),
            &values,
        )
        .unwrap();
        assert_eq!((s.lambda, s.count, s.m), (3.0, 3, 3));
        let c = ExperimentConfig::parse("spectral.N = 2\nspectral.basis_size = 4\n").unwrap();
        let s = resolve_spectral(&c, &values).unwrap();
        assert_eq!((s.rho_lambda, s.m), (6.0, 4));
        assert!((s.rho - 3.0).abs() < 1e-15);
    }

    #[test]
    fn small_run_end_to_end() {
        let c = ExperimentConfig::parse(
            "mesh.level = 3\nspectral.N = 4\ncollocation.eta = 0.5\nsamples.count = 5\n",
        )
        .unwrap();
        let out = run_experiment(&c).unwrap();
        assert_eq!(out.summary.n, 49);
        assert!(out.report.global_max.is_finite());
        assert!(out.report.min_error() >= -1e-12);
        assert_eq!(out.summary.sigma_points, 3);
        assert!(out.summary_json().unwrap().contains("\"rho_lambda\""));
    }

    #[test]
    fn plot_rows() {
        let c =
            ExperimentConfig::parse("mesh.level = 2\nspectral.N = 2\nsamples.count = 3\n").unwrap();
        let out = run_experiment(&c).unwrap();
        let csv = emit_plot_data(&[PlotPoint::from_summary("a", 1.0, &out.summary)]);
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(fig1(4).runs.len(), 10);
        assert_eq!(fig3(4).runs.len(), 24);
    }
}
