//! Experiment configuration, embedding files, orchestration of replicate
//! runs and trace/summary emission.

use std::fmt;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandit::{
    build_population, run, Algorithm, ArmSpec, BanditConfig, BanditTrace, FeatureMap,
    ObjectiveSpec, Population, PopulationSettings, PostMap, ReferenceData,
};
use crate::diagnostics::{count_floor, hoeffding_radius, CountFloorReport};
use crate::error::Error;
use crate::kernels::{KernelKind, KernelSpec, RffMap};
use crate::linalg::SymMatrix;
use crate::metrics::GaussianMoments;
use crate::solver::EGConfig;

const MAGIC: &[u8; 4] = b"MXE1";
const VERSION: u32 = 1;
const HEADER_BYTES: u64 = 20;

/// Where a non-finite value sits in an embedding file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Byte(u64),
    Row { row: usize, col: usize },
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Byte(b) => write!(f, "byte {b}"),
            Self::Row { row, col } => write!(f, "row {row}, column {col}"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: {source}", path.display())]
    Write {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: invalid config: {message}", path.display())]
    Config { path: PathBuf, message: String },
    #[error("{}: bad magic at byte 0", path.display())]
    BadMagic { path: PathBuf },
    #[error("{}: unsupported version {version} at byte 4", path.display())]
    UnsupportedVersion { path: PathBuf, version: u32 },
    #[error("{}: header promises {expected} bytes, file has {got}", path.display())]
    Truncated { path: PathBuf, expected: u64, got: u64 },
    #[error("{}: row {row} has {got} values, expected {expected}", path.display())]
    DimMismatch {
        path: PathBuf,
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("{}: non-finite value at {location}", path.display())]
    NaNFound { path: PathBuf, location: Location },
    #[error("{}: row {row}: {message}", path.display())]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },
    #[error("{}: file holds no samples", path.display())]
    EmptyInput { path: PathBuf },
    #[error("{context}: {source}")]
    Invalid {
        context: String,
        #[source]
        source: Error,
    },
    #[error("{context}: {source}")]
    Runtime {
        context: String,
        #[source]
        source: Error,
    },
}

impl HarnessError {
    /// 2 for anything wrong with the inputs, 3 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Write { .. } | Self::Runtime { .. } => 3,
            _ => 2,
        }
    }

    fn config(path: &Path, message: impl Into<String>) -> Self {
        Self::Config {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }
}

pub type HarnessResult<T> = std::result::Result<T, HarnessError>;

fn invalid(context: impl fmt::Display) -> impl FnOnce(Error) -> HarnessError {
    let context = context.to_string();
    move |source| HarnessError::Invalid { context, source }
}

fn runtime(context: impl fmt::Display) -> impl FnOnce(Error) -> HarnessError {
    let context = context.to_string();
    move |source| HarnessError::Runtime { context, source }
}

fn write_err(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Write {
        path: path.to_path_buf(),
        source,
    }
}

// ---------------------------------------------------------------------------
// Embedding files

/// Reads a binary `MXE1` file, or CSV when the extension is `.csv`.
pub fn load_embeddings(path: &Path) -> HarnessResult<Vec<Vec<f64>>> {
    let bytes = fs::read(path).map_err(|source| HarnessError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        parse_csv(path, &bytes)
    } else {
        parse_binary(path, &bytes)
    }
}

fn parse_binary(path: &Path, bytes: &[u8]) -> HarnessResult<Vec<Vec<f64>>> {
    let p = || path.to_path_buf();
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(HarnessError::BadMagic { path: p() });
    }
    if (bytes.len() as u64) < HEADER_BYTES {
        return Err(HarnessError::Truncated {
            path: p(),
            expected: HEADER_BYTES,
            got: bytes.len() as u64,
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(HarnessError::UnsupportedVersion { path: p(), version });
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let dim = u32::from_le_bytes(bytes[16..20].try_into().expect("4 bytes")) as u64;
    if count == 0 || dim == 0 {
        return Err(HarnessError::EmptyInput { path: p() });
    }
    let expected = count
        .checked_mul(dim)
        .and_then(|v| v.checked_mul(4))
        .and_then(|v| v.checked_add(HEADER_BYTES))
        .unwrap_or(u64::MAX);
    if bytes.len() as u64 != expected {
        return Err(HarnessError::Truncated {
            path: p(),
            expected,
            got: bytes.len() as u64,
        });
    }
    let dim = dim as usize;
    let body = &bytes[HEADER_BYTES as usize..];
    let mut out = Vec::with_capacity(count as usize);
    for (r, row) in body.chunks_exact(4 * dim).enumerate() {
        let mut v = Vec::with_capacity(dim);
        for (c, chunk) in row.chunks_exact(4).enumerate() {
            let x = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
            if !x.is_finite() {
                let offset = HEADER_BYTES + 4 * (r * dim + c) as u64;
                return Err(HarnessError::NaNFound {
                    path: p(),
                    location: Location::Byte(offset),
                });
            }
            v.push(f64::from(x));
        }
        out.push(v);
    }
    Ok(out)
}

fn parse_csv(path: &Path, bytes: &[u8]) -> HarnessResult<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut out: Vec<Vec<f64>> = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| HarnessError::Parse {
            path: path.to_path_buf(),
            row,
            message: e.to_string(),
        })?;
        let mut v = Vec::with_capacity(rec.len());
        for (col, field) in rec.iter().enumerate() {
            let x: f64 = field.parse().map_err(|_| HarnessError::Parse {
                path: path.to_path_buf(),
                row,
                message: format!("cannot parse {field:?} as a number"),
            })?;
            if !x.is_finite() {
                return Err(HarnessError::NaNFound {
                    path: path.to_path_buf(),
                    location: Location::Row { row, col },
                });
            }
            v.push(x);
        }
        if let Some(first) = out.first() {
            if first.len() != v.len() {
                return Err(HarnessError::DimMismatch {
                    path: path.to_path_buf(),
                    row,
                    expected: first.len(),
                    got: v.len(),
                });
            }
        }
        out.push(v);
    }
    if out.is_empty() || out[0].is_empty() {
        return Err(HarnessError::EmptyInput {
            path: path.to_path_buf(),
        });
    }
    Ok(out)
}

fn uniform_dim(path: &Path, samples: &[Vec<f64>]) -> HarnessResult<usize> {
    let dim = samples.first().map_or(0, Vec::len);
    if let Some((row, x)) = samples.iter().enumerate().find(|(_, x)| x.len() != dim) {
        return Err(HarnessError::DimMismatch {
            path: path.to_path_buf(),
            row,
            expected: dim,
            got: x.len(),
        });
    }
    Ok(dim)
}

/// Writes samples as `MXE1` (values are stored as `f32`).
pub fn write_embeddings(path: &Path, samples: &[Vec<f64>]) -> HarnessResult<()> {
    let dim = uniform_dim(path, samples)?;
    let mut buf = Vec::with_capacity(HEADER_BYTES as usize + 4 * dim * samples.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(samples.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    for x in samples.iter().flatten() {
        buf.extend_from_slice(&(*x as f32).to_le_bytes());
    }
    fs::write(path, buf).map_err(write_err(path))
}

pub fn write_embeddings_csv(path: &Path, samples: &[Vec<f64>]) -> HarnessResult<()> {
    uniform_dim(path, samples)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for x in samples {
        w.write_record(x.iter().map(f64::to_string))
            .map_err(|e| write_err(path)(e.into()))?;
    }
    let bytes = w.into_inner().map_err(|e| write_err(path)(e.into_error()))?;
    fs::write(path, bytes).map_err(write_err(path))
}

// ---------------------------------------------------------------------------
// Configuration

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PostMapConfig {
    #[default]
    Raw,
    Unit,
    Rff {
        pairs: usize,
        bandwidth: f64,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArmConfig {
    /// `N(mean, cov)`, with `cov = std² I` when no matrix is given.
    Gaussian {
        mean: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cov: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        std: Option<f64>,
        #[serde(default)]
        post_map: PostMapConfig,
    },
    File {
        path: PathBuf,
    },
}

fn default_reference_samples() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceConfig {
    /// Exact moments plus a finite sample drawn from the instance seed.
    Gaussian {
        mean: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cov: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        std: Option<f64>,
        #[serde(default = "default_reference_samples")]
        samples: usize,
    },
    File {
        path: PathBuf,
    },
    /// Moments only; enough for the Fréchet objective.
    Moments {
        mean: Vec<f64>,
        cov: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepAxes {
    pub delta_l: Vec<f64>,
    pub sigma: Vec<f64>,
    pub rff_pairs: Vec<usize>,
}

impl SweepAxes {
    pub fn is_empty(&self) -> bool {
        self.delta_l.is_empty() && self.sigma.is_empty() && self.rff_pairs.is_empty()
    }
}

fn default_name() -> String {
    "experiment".into()
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_warm_start() -> usize {
    5
}
fn default_true() -> bool {
    true
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub horizon: usize,
    #[serde(default = "default_warm_start")]
    pub warm_start: usize,
    pub algorithms: Vec<Algorithm>,
    #[serde(default)]
    pub eg: EGConfig,
    pub arms: Vec<ArmConfig>,
    pub objective: ObjectiveSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceConfig>,
    /// Seed for reference draws and other per-instance randomness.
    #[serde(default)]
    pub instance_seed: u64,
    /// Record population loss and regret each round.
    #[serde(default = "default_true")]
    pub track_regret: bool,
    #[serde(default)]
    pub population: PopulationSettings,
    #[serde(default)]
    pub sweep: SweepAxes,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str, path: &Path) -> HarnessResult<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::config(path, e.to_string()))?;
        cfg.check(path)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> HarnessResult<Self> {
        let text = fs::read_to_string(path).map_err(|source| HarnessError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text, path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn check(&self, path: &Path) -> HarnessResult<()> {
        if self.arms.is_empty() {
            return Err(HarnessError::config(path, "at least one arm is required"));
        }
        if self.algorithms.is_empty() {
            return Err(HarnessError::config(path, "at least one algorithm is required"));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::config(path, "at least one seed is required"));
        }
        if self.horizon == 0 || self.warm_start == 0 {
            return Err(HarnessError::config(path, "horizon and warm_start must be at least 1"));
        }
        Ok(())
    }

    fn needs_population(&self) -> bool {
        self.track_regret || self.algorithms.iter().any(Algorithm::needs_population)
    }
}

/// Command-line overrides applied on top of a loaded config.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub algorithm: Option<String>,
    pub delta_l: Option<f64>,
    pub sigma: Option<f64>,
    pub rff_pairs: Option<usize>,
    pub fidelity_weight: Option<f64>,
}

/// Parses an algorithm name; `mixture_ucb` takes `delta_l` (default 0.05)
/// and `epsilon_greedy` uses ε = 0.1.
pub fn parse_algorithm(name: &str, delta_l: Option<f64>) -> Option<Algorithm> {
    Some(match name.replace('-', "_").as_str() {
        "mixture_greedy" => Algorithm::MixtureGreedy,
        "mixture_ucb" => Algorithm::MixtureUcb {
            delta_l: delta_l.unwrap_or(0.05),
            c: 1.0,
        },
        "one_arm_greedy" => Algorithm::OneArmGreedy,
        "epsilon_greedy" => Algorithm::EpsilonGreedy { epsilon: 0.1 },
        "mixture_oracle" => Algorithm::MixtureOracle,
        "one_arm_oracle" => Algorithm::OneArmOracle,
        _ => return None,
    })
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig, path: &Path) -> HarnessResult<()> {
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(o) = &self.output {
            cfg.output = o.clone();
        }
        if let Some(name) = &self.algorithm {
            let alg = parse_algorithm(name, self.delta_l)
                .ok_or_else(|| HarnessError::config(path, format!("unknown algorithm {name:?}")))?;
            cfg.algorithms = vec![alg];
        }
        if let Some(d) = self.delta_l {
            set_delta_l(cfg, d).map_err(|m| HarnessError::config(path, m))?;
        }
        if let Some(s) = self.sigma {
            set_sigma(cfg, s).map_err(|m| HarnessError::config(path, m))?;
        }
        if let Some(p) = self.rff_pairs {
            set_rff_pairs(cfg, p).map_err(|m| HarnessError::config(path, m))?;
        }
        if let Some(w) = self.fidelity_weight {
            match &mut cfg.objective {
                ObjectiveSpec::Quadratic {
                    fidelity: Some(f), ..
                } => f.weight = w,
                _ => {
                    return Err(HarnessError::config(
                        path,
                        "--fidelity-weight needs a quadratic objective with a fidelity radius",
                    ))
                }
            }
        }
        Ok(())
    }
}

fn set_delta_l(cfg: &mut ExperimentConfig, value: f64) -> Result<(), String> {
    let mut hit = false;
    for a in &mut cfg.algorithms {
        if let Algorithm::MixtureUcb { delta_l, .. } = a {
            *delta_l = value;
            hit = true;
        }
    }
    hit.then_some(()).ok_or_else(|| "delta_l needs a mixture_ucb algorithm".into())
}

fn set_kernel_bandwidth(kernel: &mut KernelSpec, value: f64) -> bool {
    match &mut kernel.kind {
        KernelKind::Gaussian { bandwidth } => {
            *bandwidth = value;
            true
        }
        KernelKind::Cosine => false,
    }
}

fn set_sigma(cfg: &mut ExperimentConfig, value: f64) -> Result<(), String> {
    let hit = match &mut cfg.objective {
        ObjectiveSpec::NlvKernel { kernel } | ObjectiveSpec::Quadratic { kernel, .. } => {
            set_kernel_bandwidth(kernel, value)
        }
        ObjectiveSpec::NlvFeatures {
            feature_map: FeatureMap::Rff { bandwidth, .. },
            ..
        } => {
            *bandwidth = value;
            true
        }
        _ => false,
    };
    hit.then_some(()).ok_or_else(|| "sigma needs a Gaussian kernel or RFF feature map".into())
}

fn set_rff_pairs(cfg: &mut ExperimentConfig, value: usize) -> Result<(), String> {
    match &mut cfg.objective {
        ObjectiveSpec::NlvFeatures {
            feature_map: FeatureMap::Rff { pairs, .. },
            ..
        } => {
            *pairs = value;
            Ok(())
        }
        _ => Err("rff_pairs needs an RFF feature map on the objective".into()),
    }
}

fn fmt_axis(v: f64) -> String {
    format!("{v}")
}

/// Cartesian product of the sweep axes, each point with a label.
pub fn expand_sweep(cfg: &ExperimentConfig, path: &Path) -> HarnessResult<Vec<(String, ExperimentConfig)>> {
    let ax = &cfg.sweep;
    let dl: Vec<Option<f64>> = opt_axis(&ax.delta_l);
    let sg: Vec<Option<f64>> = opt_axis(&ax.sigma);
    let rp: Vec<Option<usize>> = opt_axis(&ax.rff_pairs);
    let mut out = Vec::new();
    for d in &dl {
        for s in &sg {
            for r in &rp {
                let mut point = cfg.clone();
                point.sweep = SweepAxes::default();
                let mut parts = Vec::new();
                if let Some(d) = d {
                    set_delta_l(&mut point, *d).map_err(|m| HarnessError::config(path, m))?;
                    parts.push(format!("delta_l={}", fmt_axis(*d)));
                }
                if let Some(s) = s {
                    set_sigma(&mut point, *s).map_err(|m| HarnessError::config(path, m))?;
                    parts.push(format!("sigma={}", fmt_axis(*s)));
                }
                if let Some(r) = r {
                    set_rff_pairs(&mut point, *r).map_err(|m| HarnessError::config(path, m))?;
                    parts.push(format!("rff_pairs={r}"));
                }
                let label = if parts.is_empty() { "base".into() } else { parts.join(",") };
                out.push((label, point));
            }
        }
    }
    Ok(out)
}

fn opt_axis<T: Copy>(v: &[T]) -> Vec<Option<T>> {
    if v.is_empty() {
        vec![None]
    } else {
        v.iter().copied().map(Some).collect()
    }
}

// ---------------------------------------------------------------------------
// Instance resolution

/// Arms and reference data with files loaded and paths resolved.
#[derive(Debug, Clone)]
pub struct Instance {
    pub arms: Vec<ArmSpec>,
    pub reference: ReferenceData,
}

fn matrix_from(rows: Option<&Vec<Vec<f64>>>, std: Option<f64>, d: usize, what: &str) -> Result<SymMatrix<f64>, Error> {
    match rows {
        Some(r) => {
            let m = SymMatrix::from_rows(r)?;
            if m.dim() != d {
                return Err(Error::DimMismatch {
                    expected: d,
                    got: m.dim(),
                });
            }
            Ok(m)
        }
        None => {
            let s = std.unwrap_or(1.0);
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::InvalidConfig(format!("{what}: std must be nonnegative, got {s}")));
            }
            Ok(SymMatrix::identity(d).scaled(s * s))
        }
    }
}

fn resolve_path(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl Instance {
    /// `base` is the directory relative file paths are resolved against.
    pub fn resolve(cfg: &ExperimentConfig, base: &Path) -> HarnessResult<Self> {
        let mut arms = Vec::with_capacity(cfg.arms.len());
        for (i, a) in cfg.arms.iter().enumerate() {
            let ctx = format!("arm {i}");
            arms.push(match a {
                ArmConfig::Gaussian {
                    mean,
                    cov,
                    std,
                    post_map,
                } => {
                    let cov = matrix_from(cov.as_ref(), *std, mean.len(), &ctx).map_err(invalid(&ctx))?;
                    let post = match post_map {
                        PostMapConfig::Raw => PostMap::Raw,
                        PostMapConfig::Unit => PostMap::Unit,
                        PostMapConfig::Rff {
                            pairs,
                            bandwidth,
                            seed,
                        } => PostMap::Rff(Arc::new(
                            RffMap::from_seed(mean.len(), *pairs, *bandwidth, *seed).map_err(invalid(&ctx))?,
                        )),
                    };
                    ArmSpec::Gaussian {
                        mean: mean.clone(),
                        cov,
                        post,
                    }
                }
                ArmConfig::File { path } => ArmSpec::Pool {
                    samples: Arc::new(load_embeddings(&resolve_path(base, path))?),
                },
            });
        }
        let reference = match &cfg.reference {
            None => ReferenceData::default(),
            Some(ReferenceConfig::File { path }) => ReferenceData {
                samples: load_embeddings(&resolve_path(base, path))?,
                moments: None,
            },
            Some(ReferenceConfig::Moments { mean, cov }) => ReferenceData {
                samples: vec![],
                moments: Some(GaussianMoments {
                    mean: mean.clone(),
                    cov: matrix_from(Some(cov), None, mean.len(), "reference").map_err(invalid("reference"))?,
                }),
            },
            Some(ReferenceConfig::Gaussian {
                mean,
                cov,
                std,
                samples,
            }) => {
                let cov = matrix_from(cov.as_ref(), *std, mean.len(), "reference").map_err(invalid("reference"))?;
                let spec = ArmSpec::gaussian(mean.clone(), cov.clone());
                let mut s = spec
                    .sampler(cfg.instance_seed, "reference", 0)
                    .map_err(invalid("reference"))?;
                let draws = (0..*samples)
                    .map(|_| s.draw(0))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(invalid("reference"))?;
                ReferenceData {
                    samples: draws,
                    moments: Some(GaussianMoments {
                        mean: mean.clone(),
                        cov,
                    }),
                }
            }
        };
        Ok(Self { arms, reference })
    }

    pub fn bandit_config(&self, cfg: &ExperimentConfig, algorithm: &Algorithm, seed: u64) -> BanditConfig {
        BanditConfig {
            arms: self.arms.clone(),
            objective: cfg.objective.clone(),
            reference: self.reference.clone(),
            horizon: cfg.horizon,
            warm_start: cfg.warm_start,
            algorithm: algorithm.clone(),
            eg: cfg.eg,
            seed,
        }
    }

    pub fn population(&self, cfg: &ExperimentConfig) -> HarnessResult<Population> {
        build_population(&self.arms, &cfg.objective, &self.reference, &cfg.population)
            .map_err(runtime("population values"))
    }
}

// ---------------------------------------------------------------------------
// Running

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub score: String,
    pub runs: usize,
    pub final_mean: f64,
    pub final_sd: f64,
    pub auc_mean: Option<f64>,
    pub auc_sd: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub summary: Vec<SummaryRow>,
    pub traces: Vec<BanditTrace>,
    /// `(α*, F*)` when population values were computed.
    pub oracle: Option<(Vec<f64>, f64)>,
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect()
}

pub fn trace_file_name(trace: &BanditTrace) -> String {
    format!("trace_{}_seed{}.csv", slug(&trace.algorithm), trace.seed)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Trace CSV bytes: `t, I_t, alpha_0.., emp_loss, pop_loss, cum_regret`.
pub fn trace_csv(trace: &BanditTrace) -> Vec<u8> {
    let m = trace.counts.len();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string(), "I_t".to_string()];
    header.extend((0..m).map(|i| format!("alpha_{i}")));
    header.extend(["emp_loss", "pop_loss", "cum_regret"].map(String::from));
    w.write_record(&header).expect("in-memory write");
    for r in &trace.rounds {
        let mut row = vec![r.t.to_string(), r.arm.to_string()];
        row.extend(r.alpha.iter().map(f64::to_string));
        row.push(r.emp_loss.to_string());
        row.push(opt(r.pop_loss));
        row.push(opt(r.cum_regret));
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

pub fn summarize(traces: &[BanditTrace]) -> Vec<SummaryRow> {
    let mut labels: Vec<&str> = Vec::new();
    for t in traces {
        if !labels.contains(&t.algorithm.as_str()) {
            labels.push(&t.algorithm);
        }
    }
    labels
        .into_iter()
        .map(|label| {
            let group: Vec<&BanditTrace> = traces.iter().filter(|t| t.algorithm == label).collect();
            let finals: Vec<f64> = group.iter().map(|t| t.final_score).collect();
            let aucs: Option<Vec<f64>> = group
                .iter()
                .map(|t| t.regret().map(|r| r.iter().sum::<f64>()))
                .collect();
            let (final_mean, final_sd) = mean_sd(&finals);
            let (auc_mean, auc_sd) = match aucs {
                Some(a) => {
                    let (m, s) = mean_sd(&a);
                    (Some(m), Some(s))
                }
                None => (None, None),
            };
            SummaryRow {
                algorithm: label.to_string(),
                score: group[0].score_name.to_string(),
                runs: group.len(),
                final_mean,
                final_sd,
                auc_mean,
                auc_sd,
            }
        })
        .collect()
}

const SUMMARY_HEADER: [&str; 7] = ["algorithm", "score", "runs", "final_mean", "final_sd", "auc_mean", "auc_sd"];

fn summary_fields(r: &SummaryRow) -> Vec<String> {
    vec![
        r.algorithm.clone(),
        r.score.clone(),
        r.runs.to_string(),
        r.final_mean.to_string(),
        r.final_sd.to_string(),
        opt(r.auc_mean),
        opt(r.auc_sd),
    ]
}

pub fn summary_csv(rows: &[SummaryRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER).expect("in-memory write");
    for r in rows {
        w.write_record(summary_fields(r)).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Line chart of the per-round loss averaged over seeds, one line per algorithm.
/// Population loss is plotted when recorded, empirical loss otherwise.
pub fn score_svg(traces: &[BanditTrace]) -> String {
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let mut labels: Vec<&str> = Vec::new();
    for t in traces {
        if !labels.contains(&t.algorithm.as_str()) {
            labels.push(&t.algorithm);
        }
    }
    // Mean over seeds, rounds aligned by index.
    let series: Vec<(String, Vec<f64>)> = labels
        .into_iter()
        .map(|label| {
            let group: Vec<&BanditTrace> = traces.iter().filter(|t| t.algorithm == label).collect();
            let n = group.iter().map(|t| t.rounds.len()).min().unwrap_or(0);
            let ys = (0..n)
                .map(|k| {
                    group
                        .iter()
                        .map(|t| t.rounds[k].pop_loss.unwrap_or(t.rounds[k].emp_loss))
                        .sum::<f64>()
                        / group.len() as f64
                })
                .collect();
            (label.to_string(), ys)
        })
        .collect();
    let all = series.iter().flat_map(|(_, y)| y.iter().copied()).filter(|y| y.is_finite());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (lo.min(0.0), lo.max(0.0) + 1.0) };
    let xmax = series.iter().map(|(_, y)| y.len()).max().unwrap_or(1).max(2) as f64;
    let px = |k: usize| pad + (k as f64) / (xmax - 1.0) * (w - 2.0 * pad);
    let py = |y: f64| h - pad - (y - lo) / (hi - lo) * (h - 2.0 * pad);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <line x1=\"{pad}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <text x=\"{pad}\" y=\"{lb}\" font-size=\"11\">1</text>\n\
         <text x=\"{r}\" y=\"{lb}\" font-size=\"11\" text-anchor=\"end\">{xm}</text>\n\
         <text x=\"4\" y=\"{b}\" font-size=\"11\">{lo:.4}</text>\n\
         <text x=\"4\" y=\"{pad}\" font-size=\"11\">{hi:.4}</text>\n\
         <text x=\"{cx}\" y=\"{lb2}\" font-size=\"12\" text-anchor=\"middle\">round</text>\n",
        b = h - pad,
        r = w - pad,
        lb = h - pad + 15.0,
        lb2 = h - 8.0,
        cx = w / 2.0,
        xm = xmax as usize,
    );
    for (k, (label, ys)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = ys
            .iter()
            .enumerate()
            .filter(|(_, y)| y.is_finite())
            .map(|(i, &y)| format!("{:.2},{:.2}", px(i), py(y)))
            .collect();
        s.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        s.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" fill=\"{color}\">{}</text>\n",
            w - pad - 150.0,
            pad + 14.0 * (k as f64 + 1.0),
            xml_escape(label)
        ));
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn thread_pool(jobs: usize) -> HarnessResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| HarnessError::Runtime {
            context: "worker pool".into(),
            source: Error::InconsistentState(e.to_string()),
        })
}

/// Runs every (algorithm, seed) pair without touching the filesystem.
pub fn execute(cfg: &ExperimentConfig, instance: &Instance, jobs: usize) -> HarnessResult<ExperimentReport> {
    let tasks: Vec<(&Algorithm, u64)> = cfg
        .algorithms
        .iter()
        .flat_map(|a| cfg.seeds.iter().map(move |&s| (a, s)))
        .collect();
    for (a, _) in &tasks {
        instance
            .bandit_config(cfg, a, 0)
            .validate()
            .map_err(invalid(format!("{} ({})", cfg.name, a.label())))?;
    }
    let population = if cfg.needs_population() {
        Some(instance.population(cfg)?)
    } else {
        None
    };
    let pool = thread_pool(jobs)?;
    let traces = pool.install(|| {
        tasks
            .par_iter()
            .map(|(a, seed)| {
                let bc = instance.bandit_config(cfg, a, *seed);
                let pop = if cfg.track_regret || a.needs_population() {
                    population.as_ref()
                } else {
                    None
                };
                info!("{}: {} seed {seed}", cfg.name, a.label());
                run(&bc, pop).map_err(runtime(format!("{} seed {seed}", a.label())))
            })
            .collect::<HarnessResult<Vec<_>>>()
    })?;
    Ok(ExperimentReport {
        summary: summarize(&traces),
        oracle: population.map(|p| (p.optimum.into_vec(), p.value)),
        traces,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> HarnessResult<()> {
    fs::write(path, bytes).map_err(write_err(path))
}

/// Runs the experiment and writes `traces/`, `summary.csv` and `scores.svg`
/// under `out`.
pub fn run_experiment(cfg: &ExperimentConfig, base: &Path, out: &Path, jobs: usize) -> HarnessResult<ExperimentReport> {
    let instance = Instance::resolve(cfg, base)?;
    let report = execute(cfg, &instance, jobs)?;
    let traces_dir = out.join("traces");
    fs::create_dir_all(&traces_dir).map_err(write_err(&traces_dir))?;
    for t in &report.traces {
        write_file(&traces_dir.join(trace_file_name(t)), &trace_csv(t))?;
    }
    write_file(&out.join("summary.csv"), &summary_csv(&report.summary))?;
    write_file(&out.join("scores.svg"), score_svg(&report.traces).as_bytes())?;
    Ok(report)
}

/// Runs every sweep point into its own subdirectory and merges the summaries
/// into `sweep_summary.csv`.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    path: &Path,
    base: &Path,
    out: &Path,
    jobs: usize,
) -> HarnessResult<Vec<(String, Vec<SummaryRow>)>> {
    let points = expand_sweep(cfg, path)?;
    let mut merged = Vec::new();
    for (label, point) in points {
        let dir = out.join(slug(&label));
        let report = run_experiment(&point, base, &dir, jobs)?;
        merged.push((label, report.summary));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["point"];
    header.extend(SUMMARY_HEADER);
    w.write_record(&header).expect("in-memory write");
    for (label, rows) in &merged {
        for r in rows {
            let mut f = vec![label.clone()];
            f.extend(summary_fields(r));
            w.write_record(&f).expect("in-memory write");
        }
    }
    fs::create_dir_all(out).map_err(write_err(out))?;
    write_file(&out.join("sweep_summary.csv"), &w.into_inner().expect("in-memory flush"))?;
    Ok(merged)
}

/// Population optimum `(α*, F*)` plus standalone arm values.
pub fn oracle(cfg: &ExperimentConfig, base: &Path) -> HarnessResult<Population> {
    Instance::resolve(cfg, base)?.population(cfg)
}

// ---------------------------------------------------------------------------
// Trace ingestion and diagnostics

/// Pulls and regret read back from a trace CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSummary {
    pub arms: usize,
    pub pulls: Vec<usize>,
    pub alphas: Vec<Vec<f64>>,
    pub cum_regret: Option<Vec<f64>>,
}

pub fn read_trace(path: &Path) -> HarnessResult<TraceSummary> {
    let bytes = fs::read(path).map_err(|source| HarnessError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let parse_err = |row: usize, message: String| HarnessError::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };
    let header = reader.headers().map_err(|e| parse_err(0, e.to_string()))?.clone();
    let arms = header.iter().filter(|h| h.starts_with("alpha_")).count();
    if arms == 0 || header.get(1) != Some("I_t") {
        return Err(parse_err(0, "not a trace file".into()));
    }
    let mut pulls = Vec::new();
    let mut alphas = Vec::new();
    let mut regret = Vec::new();
    let mut has_regret = true;
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(row + 1, e.to_string()))?;
        let num = |k: usize| -> HarnessResult<f64> {
            rec.get(k)
                .unwrap_or("")
                .parse()
                .map_err(|_| parse_err(row + 1, format!("column {k} is not a number")))
        };
        pulls.push(
            rec.get(1)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err(row + 1, "bad arm index".into()))?,
        );
        alphas.push((0..arms).map(|i| num(2 + i)).collect::<HarnessResult<Vec<_>>>()?);
        match rec.get(4 + arms).filter(|s| !s.is_empty()) {
            Some(_) => regret.push(num(4 + arms)?),
            None => has_regret = false,
        }
    }
    Ok(TraceSummary {
        arms,
        pulls,
        alphas,
        cum_regret: has_regret.then_some(regret),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceDiagnosis {
    pub file: PathBuf,
    pub horizon: usize,
    pub online_counts: Vec<usize>,
    pub min_fraction: f64,
    pub count_floor: CountFloorReport,
    pub hoeffding_radius: f64,
    pub final_regret: Option<f64>,
}

/// Diagnoses every `trace_*.csv` directly under `dir` (or one file).
pub fn diagnose(target: &Path, warm_start: usize, gamma: f64, delta: f64) -> HarnessResult<Vec<TraceDiagnosis>> {
    let files: Vec<PathBuf> = if target.is_dir() {
        let mut v: Vec<PathBuf> = fs::read_dir(target)
            .map_err(|source| HarnessError::Read {
                path: target.to_path_buf(),
                source,
            })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("trace_") && n.ends_with(".csv"))
            })
            .collect();
        v.sort();
        v
    } else {
        vec![target.to_path_buf()]
    };
    if files.is_empty() {
        return Err(HarnessError::EmptyInput {
            path: target.to_path_buf(),
        });
    }
    files
        .into_iter()
        .map(|file| {
            let tr = read_trace(&file)?;
            let horizon = tr.pulls.len();
            let mut online = vec![0usize; tr.arms];
            for &a in &tr.pulls {
                if a >= tr.arms {
                    return Err(HarnessError::Parse {
                        path: file.clone(),
                        row: 0,
                        message: format!("arm {a} out of range"),
                    });
                }
                online[a] += 1;
            }
            let ctx = file.display().to_string();
            let floor = count_floor(&tr.pulls, tr.arms, warm_start, gamma, delta).map_err(invalid(&ctx))?;
            let radius = hoeffding_radius(warm_start, tr.arms, horizon, delta).map_err(invalid(&ctx))?;
            let min_fraction = online.iter().copied().min().unwrap_or(0) as f64 / horizon.max(1) as f64;
            Ok(TraceDiagnosis {
                horizon,
                min_fraction,
                count_floor: floor,
                hoeffding_radius: radius,
                final_regret: tr.cum_regret.as_ref().and_then(|r| r.last().copied()),
                online_counts: online,
                file,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Fixture generation

/// Draws `count` samples from every Gaussian arm (and a Gaussian reference)
/// into `MXE1` files under `out`, plus a `config.json` that points at them.
pub fn generate_fixtures(cfg: &ExperimentConfig, base: &Path, out: &Path, count: usize) -> HarnessResult<Vec<PathBuf>> {
    if count == 0 {
        return Err(HarnessError::config(base, "fixture count must be positive"));
    }
    let instance = Instance::resolve(cfg, base)?;
    fs::create_dir_all(out).map_err(write_err(out))?;
    let mut written = Vec::new();
    let mut file_cfg = cfg.clone();
    for (i, arm) in instance.arms.iter().enumerate() {
        if !matches!(arm, ArmSpec::Gaussian { .. }) {
            continue;
        }
        let ctx = format!("arm {i}");
        let mut s = arm.sampler(cfg.instance_seed, "fixture", i).map_err(invalid(&ctx))?;
        let xs = (0..count)
            .map(|_| s.draw(0))
            .collect::<Result<Vec<_>, _>>()
            .map_err(runtime(&ctx))?;
        let name = format!("arm_{i}.mxe");
        let path = out.join(&name);
        write_embeddings(&path, &xs)?;
        file_cfg.arms[i] = ArmConfig::File { path: name.into() };
        written.push(path);
    }
    if let Some(ReferenceConfig::Gaussian { .. }) = &cfg.reference {
        let path = out.join("reference.mxe");
        write_embeddings(&path, &instance.reference.samples)?;
        file_cfg.reference = Some(ReferenceConfig::File {
            path: "reference.mxe".into(),
        });
        written.push(path);
    }
    let cfg_path = out.join("config.json");
    let mut f = fs::File::create(&cfg_path).map_err(write_err(&cfg_path))?;
    writeln!(f, "{}", file_cfg.to_json()).map_err(write_err(&cfg_path))?;
    written.push(cfg_path);
    Ok(written)
}
