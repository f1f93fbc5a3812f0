//! Online protocols: Mixture-Greedy, the Mixture-UCB baseline, one-arm
//! baselines and oracles, synthetic and pool-backed arms, and regret
//! accounting against population values.

use std::sync::Arc;

use log::debug;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{gram, kernel_eval, KernelKind, KernelSpec, RffMap};
use crate::linalg::{psd_fn, sym_eig, MatrixFn, SymMatrix};
use crate::metrics::{frechet_distance, kernel_distance, moments_of, rke, vendi_score, GaussianMoments};
use crate::objectives::{
    fd_loss, nlv_features_eval, nlv_kernel_eval, ArmMomentStats, FdObjective, FdReference,
    FeatureRoute, FeatureState, FidelitySpec, MixtureWeights, NlvFeatureObjective,
    NlvKernelObjective, PoolKernel, PooledKernelState, QuadEstimate, QuadForm, QuadMode,
};
use crate::rng::{stream, StreamRng};
use crate::scalar::{norm, sq_dist};
use crate::solver::{brute_force_simplex, solve_simplex, EGConfig, SimplexObjective, WarmStart};

/// Map applied to every raw Gaussian draw.
#[derive(Debug, Clone, PartialEq)]
pub enum PostMap {
    Raw,
    /// Projection onto the unit sphere.
    Unit,
    Rff(Arc<RffMap<f64>>),
}

/// Where an arm's samples come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ArmSpec {
    Gaussian {
        mean: Vec<f64>,
        cov: SymMatrix<f64>,
        post: PostMap,
    },
    /// Finite pool drawn without replacement in a seeded shuffled order.
    Pool { samples: Arc<Vec<Vec<f64>>> },
}

impl ArmSpec {
    pub fn gaussian(mean: Vec<f64>, cov: SymMatrix<f64>) -> Self {
        Self::Gaussian {
            mean,
            cov,
            post: PostMap::Raw,
        }
    }

    /// Dimension of the samples this arm emits.
    pub fn output_dim(&self) -> usize {
        match self {
            Self::Gaussian { post: PostMap::Rff(map), .. } => map.dim_out(),
            Self::Gaussian { mean, .. } => mean.len(),
            Self::Pool { samples } => samples.first().map_or(0, Vec::len),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Self::Gaussian { mean, cov, post } => {
                if mean.is_empty() || mean.len() != cov.dim() {
                    return Err(Error::DimMismatch {
                        expected: mean.len(),
                        got: cov.dim(),
                    });
                }
                if let PostMap::Rff(map) = post {
                    if map.dim_in() != mean.len() {
                        return Err(Error::DimMismatch {
                            expected: mean.len(),
                            got: map.dim_in(),
                        });
                    }
                }
                Ok(())
            }
            Self::Pool { samples } => {
                let d = samples.first().ok_or(Error::EmptyInput)?.len();
                match samples.iter().find(|x| x.len() != d) {
                    Some(x) => Err(Error::DimMismatch {
                        expected: d,
                        got: x.len(),
                    }),
                    None => Ok(()),
                }
            }
        }
    }

    /// Sampler with its own random stream `(seed, stream_name, index)`.
    pub fn sampler(&self, seed: u64, stream_name: &str, index: usize) -> Result<ArmSampler> {
        self.validate()?;
        let mut rng = stream(seed, stream_name, index as u64);
        let source = match self {
            Self::Gaussian { mean, cov, post } => Source::Gaussian {
                mean: mean.clone(),
                root: psd_fn(cov, MatrixFn::Sqrt, 0.0)?,
                post: post.clone(),
            },
            Self::Pool { samples } => {
                let mut order: Vec<usize> = (0..samples.len()).collect();
                // Fisher-Yates from the arm's own stream.
                for k in (1..order.len()).rev() {
                    order.swap(k, rng.gen_range(0..=k));
                }
                Source::Pool {
                    samples: Arc::clone(samples),
                    order,
                    cursor: 0,
                }
            }
        };
        Ok(ArmSampler { index, rng, source })
    }
}

#[derive(Debug, Clone)]
enum Source {
    Gaussian {
        mean: Vec<f64>,
        root: SymMatrix<f64>,
        post: PostMap,
    },
    Pool {
        samples: Arc<Vec<Vec<f64>>>,
        order: Vec<usize>,
        cursor: usize,
    },
}

#[derive(Debug, Clone)]
pub struct ArmSampler {
    index: usize,
    rng: StreamRng,
    source: Source,
}

impl ArmSampler {
    /// Next sample; `round` only labels exhaustion errors.
    pub fn draw(&mut self, round: usize) -> Result<Vec<f64>> {
        match &mut self.source {
            Source::Gaussian { mean, root, post } => {
                let z: Vec<f64> = (0..mean.len()).map(|_| self.rng.sample(StandardNormal)).collect();
                let mut x = root.matvec(&z);
                x.iter_mut().zip(mean.iter()).for_each(|(a, &m)| *a += m);
                match post {
                    PostMap::Raw => Ok(x),
                    PostMap::Unit => {
                        let n = norm(&x);
                        if n == 0.0 {
                            return Err(Error::ZeroVector);
                        }
                        Ok(x.into_iter().map(|v| v / n).collect())
                    }
                    PostMap::Rff(map) => map.embed(&x),
                }
            }
            Source::Pool {
                samples,
                order,
                cursor,
            } => {
                let idx = *order.get(*cursor).ok_or(Error::PoolExhausted {
                    arm: self.index,
                    round,
                })?;
                *cursor += 1;
                Ok(samples[idx].clone())
            }
        }
    }
}

/// Feature map used by the feature-form log-Vendi objective.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureMap {
    #[default]
    Identity,
    Rff {
        pairs: usize,
        bandwidth: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_true() -> bool {
    true
}

/// Objective family plus its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ObjectiveSpec {
    Fd,
    NlvKernel {
        kernel: KernelSpec,
    },
    NlvFeatures {
        #[serde(default)]
        feature_map: FeatureMap,
        #[serde(default)]
        route: FeatureRoute,
        /// Keep pooled embeddings so the Gram route is available.
        #[serde(default = "default_true")]
        keep_embeddings: bool,
    },
    Quadratic {
        mode: QuadMode,
        kernel: KernelSpec,
        #[serde(default)]
        fidelity: Option<FidelitySpec>,
    },
}

impl ObjectiveSpec {
    pub fn is_quadratic(&self) -> bool {
        matches!(self, Self::Quadratic { .. })
    }

    /// Name of the end-of-run score column.
    pub fn score_name(&self) -> &'static str {
        match self {
            Self::Fd => "fd",
            Self::NlvKernel { .. } | Self::NlvFeatures { .. } => "vendi",
            Self::Quadratic { mode: QuadMode::Kd, .. } => "kd",
            Self::Quadratic { mode: QuadMode::InvRke, .. } => "rke",
        }
    }
}

/// Real data: samples for set-based terms and, optionally, exact moments for the Fréchet term.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReferenceData {
    pub samples: Vec<Vec<f64>>,
    pub moments: Option<GaussianMoments<f64>>,
}

impl ReferenceData {
    fn fd_reference(&self) -> Result<FdReference<f64>> {
        let moments = match &self.moments {
            Some(m) => m.clone(),
            None if self.samples.is_empty() => {
                return Err(Error::InvalidConfig(
                    "the Fréchet objective needs reference samples or moments".into(),
                ))
            }
            None => moments_of(&self.samples)?,
        };
        FdReference::new(moments)
    }
}

fn build_feature_map(map: &FeatureMap, dim_in: usize) -> Result<Option<RffMap<f64>>> {
    match map {
        FeatureMap::Identity => Ok(None),
        FeatureMap::Rff {
            pairs,
            bandwidth,
            seed,
        } => Ok(Some(RffMap::from_seed(dim_in, *pairs, *bandwidth, *seed)?)),
    }
}

/// Plug-in statistics of the online protocol.
#[derive(Debug, Clone)]
pub enum EmpiricalState {
    Fd {
        stats: Vec<ArmMomentStats<f64>>,
        reference: FdReference<f64>,
    },
    NlvKernel {
        pool: PooledKernelState<f64>,
    },
    NlvFeatures {
        state: FeatureState<f64>,
        map: Option<RffMap<f64>>,
        route: FeatureRoute,
    },
    Quadratic {
        est: QuadEstimate<f64>,
        weight: f64,
    },
}

impl EmpiricalState {
    pub fn new(objective: &ObjectiveSpec, arms: usize, dim: usize, reference: &ReferenceData) -> Result<Self> {
        if arms == 0 || dim == 0 {
            return Err(Error::EmptyInput);
        }
        Ok(match objective {
            ObjectiveSpec::Fd => {
                let reference = reference.fd_reference()?;
                if reference.dim() != dim {
                    return Err(Error::DimMismatch {
                        expected: dim,
                        got: reference.dim(),
                    });
                }
                Self::Fd {
                    stats: vec![ArmMomentStats::new(dim); arms],
                    reference,
                }
            }
            ObjectiveSpec::NlvKernel { kernel } => {
                kernel.validate()?;
                Self::NlvKernel {
                    pool: PooledKernelState::new(arms, PoolKernel::Spec(kernel.clone())),
                }
            }
            ObjectiveSpec::NlvFeatures {
                feature_map,
                route,
                keep_embeddings,
            } => {
                let map = build_feature_map(feature_map, dim)?;
                let fdim = map.as_ref().map_or(dim, RffMap::dim_out);
                Self::NlvFeatures {
                    state: FeatureState::new(arms, fdim, *keep_embeddings),
                    map,
                    route: *route,
                }
            }
            ObjectiveSpec::Quadratic {
                mode,
                kernel,
                fidelity,
            } => Self::Quadratic {
                est: QuadEstimate::new(
                    arms,
                    *mode,
                    kernel.clone(),
                    reference.samples.clone(),
                    fidelity.map(|f| f.tau),
                )?,
                weight: fidelity.map_or(0.0, |f| f.weight),
            },
        })
    }

    pub fn push(&mut self, arm: usize, x: Vec<f64>) -> Result<()> {
        match self {
            Self::Fd { stats, .. } => stats
                .get_mut(arm)
                .ok_or_else(|| Error::InconsistentState(format!("arm {arm} out of range")))?
                .push(&x),
            Self::NlvKernel { pool } => pool.push(arm, x),
            Self::NlvFeatures { state, map, .. } => {
                let phi = match map {
                    Some(m) => m.embed(&x)?,
                    None => x,
                };
                state.push(arm, phi)
            }
            Self::Quadratic { est, .. } => est.update(arm, x),
        }
    }

    pub fn arms(&self) -> usize {
        match self {
            Self::Fd { stats, .. } => stats.len(),
            Self::NlvKernel { pool } => pool.arms(),
            Self::NlvFeatures { state, .. } => state.stats().len(),
            Self::Quadratic { est, .. } => est.arms(),
        }
    }

    /// Minimizes the plug-in objective from `start`.
    pub fn solve(&self, start: &[f64], eg: &EGConfig) -> Result<MixtureWeights<f64>> {
        match self {
            Self::Fd { stats, reference } => solve_simplex(&FdObjective { stats, reference }, start, eg),
            Self::NlvKernel { pool } => solve_simplex(&NlvKernelObjective { pooled: pool }, start, eg),
            Self::NlvFeatures { state, route, .. } => solve_simplex(
                &NlvFeatureObjective {
                    state,
                    route: *route,
                },
                start,
                eg,
            ),
            Self::Quadratic { est, weight } => solve_simplex(&est.form(*weight)?, start, eg),
        }
    }

    pub fn loss(&self, alpha: &[f64]) -> Result<f64> {
        match self {
            Self::Fd { stats, reference } => fd_loss(alpha, stats, reference),
            Self::NlvKernel { pool } => Ok(nlv_kernel_eval(alpha, pool, false)?.0),
            Self::NlvFeatures { state, route, .. } => Ok(nlv_features_eval(alpha, state, *route, false)?.0),
            Self::Quadratic { est, weight } => est.form(*weight)?.loss(alpha),
        }
    }

    /// Standalone empirical loss of every arm; quadratic scores use the raw estimate.
    pub fn vertex_scores(&self) -> Result<Vec<f64>> {
        let m = self.arms();
        if let Self::Quadratic { est, weight } = self {
            let n = est.counts();
            let k = est.khat_diag();
            let (b, th) = (est.bhat(), est.theta());
            return (0..m)
                .map(|i| match k[i] {
                    Some(kii) if n[i] > 0 => Ok(kii + b[i] + weight * th[i]),
                    _ => Err(Error::MissingWarmStart(i)),
                })
                .collect();
        }
        (0..m)
            .map(|i| self.loss(MixtureWeights::vertex(m, i).as_slice()))
            .collect()
    }

    /// Optimistic quadratic surrogate with bonuses scaled by `c · δ_L`.
    pub fn ucb_form(&self, delta_l: f64, c: f64) -> Result<QuadForm<f64>> {
        let Self::Quadratic { est, weight } = self else {
            return Err(Error::UnsupportedObjective(
                "the UCB baseline needs a quadratic objective".into(),
            ));
        };
        let coef = c * delta_l;
        let counts = est.counts();
        let total: usize = counts.iter().sum();
        let log_term = 2.0 * (1.0 + total as f64).ln();
        let pc = est.pair_counts();
        let k = est.khat()?;
        let m = est.arms();
        let bonus = SymMatrix::from_fn(m, |i, j| coef * (log_term / pc[i][j] as f64).sqrt());
        let linear_range = match est.mode() {
            QuadMode::Kd => 2.0,
            QuadMode::InvRke => 0.0,
        } + weight;
        let lin = est
            .bhat()
            .iter()
            .zip(est.theta())
            .zip(&counts)
            .map(|((&b, th), &n)| b + weight * th - linear_range * coef * (log_term / n as f64).sqrt())
            .collect();
        QuadForm::new(k.sub(&bonus), lin)
    }
}

/// Settings for population values of synthetic instances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PopulationSettings {
    /// Draws per arm for plug-in second moments.
    pub plugin_samples: usize,
    /// Samples per arm in the frozen pool of the kernel-form log-Vendi.
    pub kernel_pool: usize,
    /// Samples per arm for plug-in quadratic terms.
    pub quad_samples: usize,
    /// EG steps of the oracle solve.
    pub oracle_steps: usize,
    /// Lattice resolution of the brute-force cross-check (`m ≤ 4`); 0 disables it.
    pub check_resolution: usize,
    pub seed: u64,
}

impl Default for PopulationSettings {
    fn default() -> Self {
        Self {
            plugin_samples: 100_000,
            kernel_pool: 128,
            quad_samples: 1000,
            oracle_steps: 3000,
            check_resolution: 100,
            seed: 0x5eed,
        }
    }
}

/// Population counterpart of [`EmpiricalState`].
#[derive(Debug, Clone)]
pub enum PopulationObjective {
    Fd {
        stats: Vec<ArmMomentStats<f64>>,
        reference: FdReference<f64>,
    },
    NlvKernel {
        pool: PooledKernelState<f64>,
    },
    NlvFeatures {
        state: FeatureState<f64>,
    },
    Quadratic {
        form: QuadForm<f64>,
    },
}

impl SimplexObjective<f64> for PopulationObjective {
    fn arms(&self) -> usize {
        match self {
            Self::Fd { stats, .. } => stats.len(),
            Self::NlvKernel { pool } => pool.arms(),
            Self::NlvFeatures { state } => state.stats().len(),
            Self::Quadratic { form } => form.arms(),
        }
    }

    fn loss(&self, alpha: &[f64]) -> Result<f64> {
        match self {
            Self::Fd { stats, reference } => fd_loss(alpha, stats, reference),
            Self::NlvKernel { pool } => Ok(nlv_kernel_eval(alpha, pool, false)?.0),
            Self::NlvFeatures { state } => {
                Ok(nlv_features_eval(alpha, state, FeatureRoute::Covariance, false)?.0)
            }
            Self::Quadratic { form } => form.loss(alpha),
        }
    }

    fn gradient(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::Fd { stats, reference } => FdObjective { stats, reference }.gradient(alpha),
            Self::NlvKernel { pool } => NlvKernelObjective { pooled: pool }.gradient(alpha),
            Self::NlvFeatures { state } => NlvFeatureObjective {
                state,
                route: FeatureRoute::Covariance,
            }
            .gradient(alpha),
            Self::Quadratic { form } => form.gradient(alpha),
        }
    }
}

/// Population objective with its optimal mixture and best single arm.
#[derive(Debug, Clone)]
pub struct Population {
    pub objective: PopulationObjective,
    pub optimum: MixtureWeights<f64>,
    pub value: f64,
    pub arm_values: Vec<f64>,
    pub best_arm: usize,
}

impl Population {
    pub fn loss(&self, alpha: &[f64]) -> Result<f64> {
        self.objective.loss(alpha)
    }
}

fn draw_many(arm: &ArmSpec, n: usize, seed: u64, index: usize) -> Result<Vec<Vec<f64>>> {
    match arm {
        ArmSpec::Pool { samples } => Ok(samples.iter().take(n).cloned().collect()),
        ArmSpec::Gaussian { .. } => {
            let mut s = arm.sampler(seed, "population", index)?;
            (0..n).map(|_| s.draw(0)).collect()
        }
    }
}

/// `E exp(−|Z|²/(2σ²))` for `Z ~ N(Δ, S)`.
fn gaussian_kernel_mean(delta: &[f64], s: &SymMatrix<f64>, sigma: f64) -> Result<f64> {
    let s2 = sigma * sigma;
    let eig = sym_eig(s)?;
    let mut log_det = 0.0;
    let mut quad = 0.0;
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        let lam = lam.max(0.0);
        log_det += (1.0 + lam / s2).ln();
        let proj: f64 = eig.vector(k).iter().zip(delta).map(|(v, d)| v * d).sum();
        quad += proj * proj / (s2 + lam);
    }
    Ok((-0.5 * log_det - 0.5 * quad).exp())
}

fn raw_gaussians(arms: &[ArmSpec]) -> Option<Vec<(&[f64], &SymMatrix<f64>)>> {
    arms.iter()
        .map(|a| match a {
            ArmSpec::Gaussian {
                mean,
                cov,
                post: PostMap::Raw,
            } => Some((mean.as_slice(), cov)),
            _ => None,
        })
        .collect()
}

/// Closed-form `E k(X_i, X_j′)` (or `E k²`) and `E k(X_i, y)` for Gaussian arms and kernel.
fn closed_form_quadratic(
    gaussians: &[(&[f64], &SymMatrix<f64>)],
    mode: QuadMode,
    sigma: f64,
    real: &[Vec<f64>],
) -> Result<(SymMatrix<f64>, Vec<f64>)> {
    let m = gaussians.len();
    let sig = match mode {
        QuadMode::Kd => sigma,
        QuadMode::InvRke => sigma / 2f64.sqrt(),
    };
    let mut k = SymMatrix::zeros(m);
    for i in 0..m {
        for j in i..m {
            let (mi, si) = gaussians[i];
            let (mj, sj) = gaussians[j];
            let delta: Vec<f64> = mi.iter().zip(mj).map(|(a, b)| a - b).collect();
            k.set(i, j, gaussian_kernel_mean(&delta, &si.add(sj), sig)?);
        }
    }
    let mut b = vec![0.0; m];
    if mode == QuadMode::Kd {
        for (i, (mi, si)) in gaussians.iter().enumerate() {
            let mut s = 0.0;
            for y in real {
                let delta: Vec<f64> = mi.iter().zip(y).map(|(a, c)| a - c).collect();
                s += gaussian_kernel_mean(&delta, si, sigma)?;
            }
            b[i] = -2.0 * s / real.len() as f64;
        }
    }
    Ok((k, b))
}

/// Builds the population objective and solves for `α*`.
pub fn build_population(
    arms: &[ArmSpec],
    objective: &ObjectiveSpec,
    reference: &ReferenceData,
    settings: &PopulationSettings,
) -> Result<Population> {
    let m = arms.len();
    if m == 0 {
        return Err(Error::EmptyInput);
    }
    for a in arms {
        a.validate()?;
    }
    let seed = settings.seed;
    let obj = match objective {
        ObjectiveSpec::Fd => {
            let reference = reference.fd_reference()?;
            let stats = arms
                .iter()
                .enumerate()
                .map(|(i, arm)| match arm {
                    ArmSpec::Gaussian {
                        mean,
                        cov,
                        post: PostMap::Raw,
                    } => {
                        let mut second = cov.clone();
                        second.add_outer(mean, 1.0);
                        ArmMomentStats::from_moments(1, mean.clone(), second)
                    }
                    _ => ArmMomentStats::from_samples(&draw_many(arm, settings.plugin_samples, seed, i)?),
                })
                .collect::<Result<Vec<_>>>()?;
            PopulationObjective::Fd { stats, reference }
        }
        ObjectiveSpec::NlvKernel { kernel } => {
            let mut pool = PooledKernelState::new(m, PoolKernel::Spec(kernel.clone()));
            for (i, arm) in arms.iter().enumerate() {
                for x in draw_many(arm, settings.kernel_pool, seed, i)? {
                    pool.push(i, x)?;
                }
            }
            PopulationObjective::NlvKernel { pool }
        }
        ObjectiveSpec::NlvFeatures { feature_map, .. } => {
            let map = build_feature_map(feature_map, arms[0].output_dim())?;
            let stats = arms
                .iter()
                .enumerate()
                .map(|(i, arm)| {
                    let xs = draw_many(arm, settings.plugin_samples, seed, i)?;
                    let phis = match &map {
                        Some(f) => xs.iter().map(|x| f.embed(x)).collect::<Result<Vec<_>>>()?,
                        None => xs,
                    };
                    ArmMomentStats::from_samples(&phis)
                })
                .collect::<Result<Vec<_>>>()?;
            PopulationObjective::NlvFeatures {
                state: FeatureState::from_stats(stats)?,
            }
        }
        ObjectiveSpec::Quadratic {
            mode,
            kernel,
            fidelity,
        } => {
            let weight = fidelity.map_or(0.0, |f| f.weight);
            let mut est = QuadEstimate::new(
                m,
                *mode,
                kernel.clone(),
                reference.samples.clone(),
                fidelity.map(|f| f.tau),
            )?;
            let closed = match (&kernel.kind, raw_gaussians(arms)) {
                (KernelKind::Gaussian { bandwidth }, Some(g)) => {
                    Some(closed_form_quadratic(&g, *mode, *bandwidth, &reference.samples)?)
                }
                _ => None,
            };
            let needs_plugin = closed.is_none() || fidelity.is_some();
            let mut theta = vec![0.0; m];
            if needs_plugin {
                let draws: Vec<Vec<Vec<f64>>> = arms
                    .iter()
                    .enumerate()
                    .map(|(i, a)| draw_many(a, settings.quad_samples, seed, i))
                    .collect::<Result<_>>()?;
                if closed.is_none() {
                    let longest = draws.iter().map(Vec::len).max().unwrap_or(0);
                    for r in 0..longest {
                        for (i, d) in draws.iter().enumerate() {
                            if let Some(x) = d.get(r) {
                                est.update(i, x.clone())?;
                            }
                        }
                    }
                    theta = est.theta();
                } else if let Some(f) = fidelity {
                    let tau2 = f.tau * f.tau;
                    for (i, d) in draws.iter().enumerate() {
                        let miss = d
                            .iter()
                            .filter(|x| reference.samples.iter().all(|y| sq_dist(x, y) > tau2))
                            .count();
                        theta[i] = miss as f64 / d.len().max(1) as f64;
                    }
                }
            }
            let (k, b) = match closed {
                Some(kb) => kb,
                None => (est.khat()?, est.bhat()),
            };
            let lin = b.iter().zip(&theta).map(|(b, t)| b + weight * t).collect();
            PopulationObjective::Quadratic {
                form: QuadForm::new(crate::linalg::project_psd(&k)?, lin)?,
            }
        }
    };
    solve_population(obj, settings)
}

fn solve_population(objective: PopulationObjective, settings: &PopulationSettings) -> Result<Population> {
    let m = objective.arms();
    let arm_values = (0..m)
        .map(|i| objective.loss(MixtureWeights::vertex(m, i).as_slice()))
        .collect::<Result<Vec<_>>>()?;
    let best_arm = argmin(&arm_values);
    let cfg = EGConfig {
        stepsize: 0.5,
        steps: settings.oracle_steps.max(1),
        warm_start: WarmStart::Uniform,
        diminishing: false,
    };
    let uniform = MixtureWeights::uniform(m);
    let mut optimum = solve_simplex(&objective, uniform.as_slice(), &cfg)?;
    let mut value = objective.loss(optimum.as_slice())?;
    let cheap = !matches!(objective, PopulationObjective::NlvKernel { .. });
    if m <= 4 && m > 1 && settings.check_resolution > 0 && cheap {
        let grid = brute_force_simplex(m, settings.check_resolution, |a| objective.loss(a))?;
        let grid_value = objective.loss(grid.as_slice())?;
        debug!("oracle check: EG {value:.6e} vs grid {grid_value:.6e}");
        if grid_value < value {
            // Restart EG from an interior point near the grid optimum.
            let start: Vec<f64> = grid
                .as_slice()
                .iter()
                .map(|&a| (a + 1e-3) / (1.0 + 1e-3 * m as f64))
                .collect();
            let refined = solve_simplex(&objective, &start, &cfg)?;
            let refined_value = objective.loss(refined.as_slice())?;
            (optimum, value) = if refined_value < grid_value {
                (refined, refined_value)
            } else {
                (grid, grid_value)
            };
        }
    }
    if arm_values[best_arm] < value {
        optimum = MixtureWeights::vertex(m, best_arm);
        value = arm_values[best_arm];
    }
    Ok(Population {
        objective,
        optimum,
        value,
        arm_values,
        best_arm,
    })
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = i;
        }
    }
    best
}

/// Online strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Algorithm {
    MixtureGreedy,
    MixtureUcb {
        delta_l: f64,
        #[serde(default = "default_c")]
        c: f64,
    },
    OneArmGreedy,
    EpsilonGreedy {
        epsilon: f64,
    },
    MixtureOracle,
    OneArmOracle,
}

fn default_c() -> f64 {
    1.0
}

impl Algorithm {
    pub fn label(&self) -> String {
        match self {
            Self::MixtureGreedy => "mixture_greedy".into(),
            Self::MixtureUcb { delta_l, c } => format!("mixture_ucb(delta_l={delta_l},c={c})"),
            Self::OneArmGreedy => "one_arm_greedy".into(),
            Self::EpsilonGreedy { epsilon } => format!("epsilon_greedy(epsilon={epsilon})"),
            Self::MixtureOracle => "mixture_oracle".into(),
            Self::OneArmOracle => "one_arm_oracle".into(),
        }
    }

    pub fn needs_population(&self) -> bool {
        matches!(self, Self::MixtureOracle | Self::OneArmOracle)
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Self::MixtureUcb { delta_l, c } if !(delta_l >= 0.0 && c >= 0.0) => Err(Error::InvalidConfig(
                format!("UCB coefficients must be nonnegative, got delta_l={delta_l}, c={c}"),
            )),
            Self::EpsilonGreedy { epsilon } if !(0.0..=1.0).contains(&epsilon) => Err(
                Error::InvalidConfig(format!("epsilon must lie in [0, 1], got {epsilon}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Variant of the single-arm baselines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OneArmVariant {
    Greedy,
    Epsilon(f64),
    Oracle,
}

#[derive(Debug, Clone)]
pub struct BanditConfig {
    pub arms: Vec<ArmSpec>,
    pub objective: ObjectiveSpec,
    pub reference: ReferenceData,
    pub horizon: usize,
    pub warm_start: usize,
    pub algorithm: Algorithm,
    pub eg: EGConfig,
    pub seed: u64,
}

impl BanditConfig {
    pub fn validate(&self) -> Result<()> {
        if self.arms.is_empty() {
            return Err(Error::InvalidConfig("at least one arm is required".into()));
        }
        if self.horizon == 0 || self.warm_start == 0 {
            return Err(Error::InvalidConfig("horizon and warm start must be at least 1".into()));
        }
        let d = self.arms[0].output_dim();
        for a in &self.arms {
            a.validate()?;
            if a.output_dim() != d {
                return Err(Error::DimMismatch {
                    expected: d,
                    got: a.output_dim(),
                });
            }
        }
        self.eg.validate()?;
        self.algorithm.validate()?;
        if matches!(self.algorithm, Algorithm::MixtureUcb { .. }) && !self.objective.is_quadratic() {
            return Err(Error::UnsupportedObjective(
                "the UCB baseline is defined for quadratic objectives only".into(),
            ));
        }
        Ok(())
    }
}

/// One online round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub t: usize,
    pub arm: usize,
    pub alpha: Vec<f64>,
    pub emp_loss: f64,
    pub pop_loss: Option<f64>,
    pub cum_regret: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BanditTrace {
    pub algorithm: String,
    pub seed: u64,
    pub warm_start: usize,
    pub rounds: Vec<RoundRecord>,
    /// Final `n_i(T)`, warm start included.
    pub counts: Vec<usize>,
    /// Online draws in order, warm start excluded.
    pub samples: Vec<Vec<f64>>,
    pub score_name: &'static str,
    pub final_score: f64,
}

impl BanditTrace {
    pub fn pulls(&self) -> Vec<usize> {
        self.rounds.iter().map(|r| r.arm).collect()
    }

    /// `N_i(T)`: online pulls per arm.
    pub fn online_counts(&self) -> Vec<usize> {
        self.counts.iter().map(|&n| n - self.warm_start).collect()
    }

    pub fn regret(&self) -> Option<Vec<f64>> {
        self.rounds.iter().map(|r| r.cum_regret).collect()
    }
}

/// Inverse-CDF draw from `alpha` with one uniform variate.
pub fn sample_index(alpha: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &a) in alpha.iter().enumerate() {
        if a > 0.0 {
            last = i;
            acc += a;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// `Reg_t = Σ_{s≤t} (F(α_s) − F*)`.
pub fn regret_curve(pop_losses: &[f64], f_star: f64) -> Vec<f64> {
    pop_losses
        .iter()
        .scan(0.0, |acc, &f| {
            *acc += f - f_star;
            Some(*acc)
        })
        .collect()
}

/// Metric of the online sample set named by [`ObjectiveSpec::score_name`].
pub fn final_score(objective: &ObjectiveSpec, reference: &ReferenceData, samples: &[Vec<f64>]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    match objective {
        ObjectiveSpec::Fd => frechet_distance(&moments_of(samples)?, reference.fd_reference()?.moments()),
        ObjectiveSpec::NlvKernel { kernel } => vendi_score(&gram(kernel, samples)?, samples.len()),
        ObjectiveSpec::NlvFeatures { feature_map, .. } => {
            let map = build_feature_map(feature_map, samples[0].len())?;
            let phis = match &map {
                Some(f) => samples.iter().map(|x| f.embed(x)).collect::<Result<Vec<_>>>()?,
                None => samples.to_vec(),
            };
            let state = FeatureState::from_stats(vec![ArmMomentStats::from_samples(&phis)?])?;
            Ok((-nlv_features_eval(&[1.0], &state, FeatureRoute::Covariance, false)?.0).exp())
        }
        ObjectiveSpec::Quadratic { mode, kernel, .. } => match mode {
            QuadMode::Kd => kernel_distance(kernel, samples, &reference.samples),
            QuadMode::InvRke => {
                let k = SymMatrix::from_fn(samples.len(), |i, j| {
                    kernel_eval(kernel, &samples[i], &samples[j]).unwrap_or(f64::NAN)
                });
                Ok(rke(&k, samples.len())?.rke)
            }
        },
    }
}

/// Runs the configured algorithm. Oracles need `population`; when it is
/// given, every round also records the population loss and regret.
pub fn run(cfg: &BanditConfig, population: Option<&Population>) -> Result<BanditTrace> {
    cfg.validate()?;
    if cfg.algorithm.needs_population() && population.is_none() {
        return Err(Error::InvalidConfig(format!(
            "{} needs population statistics",
            cfg.algorithm.label()
        )));
    }
    let m = cfg.arms.len();
    if let Some(p) = population {
        if p.objective.arms() != m {
            return Err(Error::DimMismatch {
                expected: m,
                got: p.objective.arms(),
            });
        }
    }
    let dim = cfg.arms[0].output_dim();
    let mut state = EmpiricalState::new(&cfg.objective, m, dim, &cfg.reference)?;
    let mut samplers = cfg
        .arms
        .iter()
        .enumerate()
        .map(|(i, a)| a.sampler(cfg.seed, "arm", i))
        .collect::<Result<Vec<_>>>()?;
    for (i, s) in samplers.iter_mut().enumerate() {
        for _ in 0..cfg.warm_start {
            state.push(i, s.draw(0)?)?;
        }
    }
    let mut counts = vec![cfg.warm_start; m];
    let mut previous = MixtureWeights::uniform(m).into_vec();
    let mut rounds = Vec::with_capacity(cfg.horizon);
    let mut samples = Vec::with_capacity(cfg.horizon);
    let mut cum = 0.0;
    let mut warned = false;

    for t in 1..=cfg.horizon {
        let start = match cfg.eg.warm_start {
            WarmStart::PreviousIterate => previous.clone(),
            WarmStart::Uniform => MixtureWeights::uniform(m).into_vec(),
        };
        let (alpha, emp_loss) = match &cfg.algorithm {
            Algorithm::MixtureGreedy => {
                let a = state.solve(&start, &cfg.eg)?.into_vec();
                let l = state.loss(&a)?;
                (a, l)
            }
            Algorithm::MixtureUcb { delta_l, c } => {
                let a = if delta_l * c == 0.0 {
                    state.solve(&start, &cfg.eg)?
                } else {
                    let form = state.ucb_form(*delta_l, *c)?;
                    if !warned && sym_eig(&form.k)?.eigenvalues.last().map_or(false, |&l| l < 0.0) {
                        debug!("optimistic surrogate is indefinite at round {t}");
                        warned = true;
                    }
                    solve_simplex(&form, &start, &cfg.eg)?
                }
                .into_vec();
                let l = state.loss(&a)?;
                (a, l)
            }
            Algorithm::OneArmGreedy | Algorithm::EpsilonGreedy { .. } => {
                let scores = state.vertex_scores()?;
                let g = argmin(&scores);
                let eps = match cfg.algorithm {
                    Algorithm::EpsilonGreedy { epsilon } => epsilon,
                    _ => 0.0,
                };
                let mut a = vec![eps / m as f64; m];
                a[g] += 1.0 - eps;
                let l = state.loss(&a)?;
                (a, l)
            }
            Algorithm::MixtureOracle => {
                let a = population.expect("checked").optimum.as_slice().to_vec();
                let l = state.loss(&a)?;
                (a, l)
            }
            Algorithm::OneArmOracle => {
                let a = MixtureWeights::vertex(m, population.expect("checked").best_arm).into_vec();
                let l = state.loss(&a)?;
                (a, l)
            }
        };
        let arm = sample_index(&alpha, &mut stream(cfg.seed, "index", t as u64));
        let x = samplers[arm].draw(t)?;
        state.push(arm, x.clone())?;
        samples.push(x);
        counts[arm] += 1;
        let (pop_loss, cum_regret) = match population {
            Some(p) => {
                let f = p.loss(&alpha)?;
                cum += f - p.value;
                (Some(f), Some(cum))
            }
            None => (None, None),
        };
        rounds.push(RoundRecord {
            t,
            arm,
            alpha: alpha.clone(),
            emp_loss,
            pop_loss,
            cum_regret,
        });
        previous = alpha;
        if previous.iter().any(|&a| a == 0.0) && cfg.eg.warm_start == WarmStart::PreviousIterate {
            // EG cannot leave a face; restart solves from the interior.
            let u = 1.0 / m as f64;
            previous = previous.iter().map(|&a| 0.99 * a + 0.01 * u).collect();
        }
    }
    let final_score = final_score(&cfg.objective, &cfg.reference, &samples)?;
    Ok(BanditTrace {
        algorithm: cfg.algorithm.label(),
        seed: cfg.seed,
        warm_start: cfg.warm_start,
        rounds,
        counts,
        samples,
        score_name: cfg.objective.score_name(),
        final_score,
    })
}

pub fn run_mixture_greedy(cfg: &BanditConfig, population: Option<&Population>) -> Result<BanditTrace> {
    let cfg = BanditConfig {
        algorithm: Algorithm::MixtureGreedy,
        ..cfg.clone()
    };
    run(&cfg, population)
}

pub fn run_mixture_ucb(
    cfg: &BanditConfig,
    delta_l: f64,
    c: f64,
    population: Option<&Population>,
) -> Result<BanditTrace> {
    let cfg = BanditConfig {
        algorithm: Algorithm::MixtureUcb { delta_l, c },
        ..cfg.clone()
    };
    run(&cfg, population)
}

pub fn run_one_arm(
    cfg: &BanditConfig,
    variant: OneArmVariant,
    population: Option<&Population>,
) -> Result<BanditTrace> {
    let algorithm = match variant {
        OneArmVariant::Greedy => Algorithm::OneArmGreedy,
        OneArmVariant::Epsilon(epsilon) => Algorithm::EpsilonGreedy { epsilon },
        OneArmVariant::Oracle => Algorithm::OneArmOracle,
    };
    run(
        &BanditConfig {
            algorithm,
            ..cfg.clone()
        },
        population,
    )
}

/// `(α*, F(α*))` of a population objective.
pub fn mixture_oracle(population: &Population) -> (MixtureWeights<f64>, f64) {
    (population.optimum.clone(), population.value)
}
