//! Empirical mixture losses and their gradients: Fréchet, negative log-Vendi
//! (kernel and feature forms) and quadratic kernel scores with a linear
//! fidelity term.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{kernel_eval, KernelSpec};
use crate::linalg::{
    clamp_dust, neg_entropy_of_spectrum, project_psd, spectral_weights, sym_eig,
    EigenDecomposition, MatrixFn, SymMatrix, DEFAULT_CLAMP,
};
use crate::metrics::GaussianMoments;
use crate::scalar::{dot, sq_dist, Real};
use crate::solver::SimplexObjective;

/// Floor on per-sample weights where the log-Vendi gradient divides by `q_j`.
pub const Q_MIN: f64 = 1e-12;

/// A point on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureWeights<R>(Vec<R>);

impl<R: Real> MixtureWeights<R> {
    pub fn new(alpha: Vec<R>) -> Result<Self> {
        check_simplex(&alpha)?;
        Ok(Self(alpha))
    }

    pub fn uniform(m: usize) -> Self {
        Self(vec![R::from_usize_lossy(m).recip(); m])
    }

    pub fn vertex(m: usize, i: usize) -> Self {
        let mut a = vec![R::zero(); m];
        a[i] = R::one();
        Self(a)
    }

    pub fn arms(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[R] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<R> {
        self.0
    }
}

impl<R> AsRef<[R]> for MixtureWeights<R> {
    fn as_ref(&self) -> &[R] {
        &self.0
    }
}

pub(crate) fn check_simplex<R: Real>(alpha: &[R]) -> Result<()> {
    if alpha.is_empty() {
        return Err(Error::EmptyInput);
    }
    if alpha.iter().any(|&a| !(a >= R::zero()) || !a.is_finite()) {
        return Err(Error::OutOfDomain(format!("weights must be nonnegative: {alpha:?}")));
    }
    let s: R = alpha.iter().copied().sum();
    let tol = R::lit(1e-12).max(R::epsilon() * R::lit(4.0) * R::from_usize_lossy(alpha.len()));
    if (s - R::one()).abs() > tol {
        return Err(Error::OutOfDomain(format!("weights sum to {s}, not 1")));
    }
    Ok(())
}

fn check_arms(alpha_len: usize, m: usize) -> Result<()> {
    if alpha_len != m {
        return Err(Error::DimMismatch {
            expected: m,
            got: alpha_len,
        });
    }
    Ok(())
}

/// Running count, mean and uncentered second moment of one arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmMomentStats<R> {
    count: usize,
    mean: Vec<R>,
    second: SymMatrix<R>,
}

impl<R: Real> ArmMomentStats<R> {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![R::zero(); dim],
            second: SymMatrix::zeros(dim),
        }
    }

    pub fn from_samples(samples: &[Vec<R>]) -> Result<Self> {
        let first = samples.first().ok_or(Error::EmptyInput)?;
        let mut s = Self::new(first.len());
        for x in samples {
            s.push(x)?;
        }
        Ok(s)
    }

    /// Stats carrying known moments, e.g. a population law; `count` is nominal.
    pub fn from_moments(count: usize, mean: Vec<R>, second: SymMatrix<R>) -> Result<Self> {
        if mean.len() != second.dim() {
            return Err(Error::DimMismatch {
                expected: mean.len(),
                got: second.dim(),
            });
        }
        Ok(Self {
            count,
            mean,
            second,
        })
    }

    pub fn push(&mut self, x: &[R]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        self.count += 1;
        let w = R::from_usize_lossy(self.count).recip();
        for (m, &xi) in self.mean.iter_mut().zip(x) {
            *m += (xi - *m) * w;
        }
        let keep = R::one() - w;
        self.second = self.second.scaled(keep);
        self.second.add_outer(x, w);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> &[R] {
        &self.mean
    }

    pub fn second_moment(&self) -> &SymMatrix<R> {
        &self.second
    }

    pub fn covariance(&self) -> SymMatrix<R> {
        let mut c = self.second.clone();
        c.add_outer(&self.mean, -R::one());
        c
    }
}

fn check_stats<R: Real>(alpha: &[R], stats: &[ArmMomentStats<R>]) -> Result<usize> {
    check_arms(alpha.len(), stats.len())?;
    let d = stats.first().ok_or(Error::EmptyInput)?.dim();
    for (i, s) in stats.iter().enumerate() {
        if s.count == 0 {
            return Err(Error::MissingWarmStart(i));
        }
        if s.dim() != d {
            return Err(Error::DimMismatch {
                expected: d,
                got: s.dim(),
            });
        }
    }
    Ok(d)
}

/// `Σ α_i Ŝ_i`.
fn mixed_second<R: Real>(alpha: &[R], stats: &[ArmMomentStats<R>]) -> SymMatrix<R> {
    let mut s = SymMatrix::zeros(stats[0].dim());
    for (&a, st) in alpha.iter().zip(stats) {
        if a != R::zero() {
            s.axpy(a, &st.second);
        }
    }
    s
}

/// Mean and covariance of the α-mixture of the arms' empirical laws.
pub fn mixture_moments<R: Real>(
    alpha: &[R],
    stats: &[ArmMomentStats<R>],
) -> Result<GaussianMoments<R>> {
    let d = check_stats(alpha, stats)?;
    let mut mean = vec![R::zero(); d];
    for (&a, st) in alpha.iter().zip(stats) {
        for (m, &x) in mean.iter_mut().zip(&st.mean) {
            *m += a * x;
        }
    }
    let mut cov = mixed_second(alpha, stats);
    cov.add_outer(&mean, -R::one());
    Ok(GaussianMoments { mean, cov })
}

/// Frozen reference moments with the square root of the covariance cached.
#[derive(Debug, Clone, PartialEq)]
pub struct FdReference<R> {
    moments: GaussianMoments<R>,
    cov_sqrt: SymMatrix<R>,
}

impl<R: Real> FdReference<R> {
    pub fn new(moments: GaussianMoments<R>) -> Result<Self> {
        if moments.mean.len() != moments.cov.dim() {
            return Err(Error::DimMismatch {
                expected: moments.mean.len(),
                got: moments.cov.dim(),
            });
        }
        let eig = sym_eig(&moments.cov)?;
        let top = eig.eigenvalues[0].max(R::one());
        let bottom = *eig.eigenvalues.last().expect("nonempty spectrum");
        if !(bottom > R::lit(DEFAULT_CLAMP) * top) {
            return Err(Error::DegenerateReference(bottom.as_f64()));
        }
        let w: Vec<R> = eig.eigenvalues.iter().map(|l| l.sqrt()).collect();
        let cov_sqrt = eig.compose(&w);
        Ok(Self { moments, cov_sqrt })
    }

    pub fn moments(&self) -> &GaussianMoments<R> {
        &self.moments
    }

    pub fn dim(&self) -> usize {
        self.moments.mean.len()
    }
}

/// Loss and, if asked, gradient of the Fréchet objective sharing one eigendecomposition.
pub fn fd_eval<R: Real>(
    alpha: &[R],
    stats: &[ArmMomentStats<R>],
    reference: &FdReference<R>,
    want_grad: bool,
) -> Result<(R, Option<Vec<R>>)> {
    let mix = mixture_moments(alpha, stats)?;
    if mix.mean.len() != reference.dim() {
        return Err(Error::DimMismatch {
            expected: reference.dim(),
            got: mix.mean.len(),
        });
    }
    let r = &reference.moments;
    let h = &reference.cov_sqrt;
    let mut eig = sym_eig(&h.congruence(&mix.cov))?;
    clamp_dust(&mut eig)?;
    let cross: R = eig.eigenvalues.iter().map(|&l| l.sqrt()).sum();
    let loss = sq_dist(&mix.mean, &r.mean) + mix.cov.trace() + r.cov.trace() - R::lit(2.0) * cross;
    let loss = loss.max(R::zero());
    if !want_grad {
        return Ok((loss, None));
    }

    // G = I − H (H Σ H)^{-1/2} H with H = Σ₀^{1/2}.
    let inv_sqrt = eig.compose(&spectral_weights(
        &eig.eigenvalues,
        MatrixFn::InvSqrt,
        R::lit(DEFAULT_CLAMP),
    )?);
    let mut g = h.congruence(&inv_sqrt).scaled(-R::one());
    for i in 0..g.dim() {
        g.set(i, i, g.get(i, i) + R::one());
    }
    let g_mu = g.matvec(&mix.mean);
    let diff: Vec<R> = mix.mean.iter().zip(&r.mean).map(|(&a, &b)| a - b).collect();
    let grad = stats
        .iter()
        .map(|st| {
            R::lit(2.0) * dot(&diff, &st.mean) + g.inner(&st.second) - R::lit(2.0) * dot(&st.mean, &g_mu)
        })
        .collect();
    Ok((loss, Some(grad)))
}

pub fn fd_loss<R: Real>(
    alpha: &[R],
    stats: &[ArmMomentStats<R>],
    reference: &FdReference<R>,
) -> Result<R> {
    Ok(fd_eval(alpha, stats, reference, false)?.0)
}

pub fn fd_gradient<R: Real>(
    alpha: &[R],
    stats: &[ArmMomentStats<R>],
    reference: &FdReference<R>,
) -> Result<Vec<R>> {
    Ok(fd_eval(alpha, stats, reference, true)?.1.expect("gradient requested"))
}

/// Similarity used to build the pooled Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum PoolKernel {
    Spec(KernelSpec),
    /// Plain inner products, for samples that are already feature embeddings.
    Linear,
}

/// Pooled samples with arm provenance and an incrementally grown Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledKernelState<R> {
    kernel: PoolKernel,
    samples: Vec<Vec<R>>,
    arm_of: Vec<usize>,
    counts: Vec<usize>,
    /// Packed lower triangle, row `j` holds `K[j][0..=j]`.
    packed: Vec<R>,
}

impl<R: Real> PooledKernelState<R> {
    pub fn new(arms: usize, kernel: PoolKernel) -> Self {
        Self {
            kernel,
            samples: Vec::new(),
            arm_of: Vec::new(),
            counts: vec![0; arms],
            packed: Vec::new(),
        }
    }

    pub fn push(&mut self, arm: usize, x: Vec<R>) -> Result<()> {
        if arm >= self.counts.len() {
            return Err(Error::InconsistentState(format!(
                "arm {arm} out of range for {} arms",
                self.counts.len()
            )));
        }
        if let Some(first) = self.samples.first() {
            if first.len() != x.len() {
                return Err(Error::DimMismatch {
                    expected: first.len(),
                    got: x.len(),
                });
            }
        }
        for y in &self.samples {
            let k = self.similarity(&x, y)?;
            self.packed.push(k);
        }
        let kxx = self.similarity(&x, &x)?;
        self.packed.push(kxx);
        self.samples.push(x);
        self.arm_of.push(arm);
        self.counts[arm] += 1;
        Ok(())
    }

    fn similarity(&self, x: &[R], y: &[R]) -> Result<R> {
        match &self.kernel {
            PoolKernel::Spec(spec) => kernel_eval(spec, x, y),
            PoolKernel::Linear => Ok(dot(x, y)),
        }
    }

    pub fn kernel(&self) -> &PoolKernel {
        &self.kernel
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn arms(&self) -> usize {
        self.counts.len()
    }

    pub fn samples(&self) -> &[Vec<R>] {
        &self.samples
    }

    pub fn arm_of(&self) -> &[usize] {
        &self.arm_of
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    #[inline]
    pub fn gram_entry(&self, i: usize, j: usize) -> R {
        let (a, b) = if i >= j { (i, j) } else { (j, i) };
        self.packed[a * (a + 1) / 2 + b]
    }

    pub fn gram(&self) -> SymMatrix<R> {
        SymMatrix::from_fn(self.len(), |i, j| self.gram_entry(i, j))
    }
}

/// `q_j = α_{I_j} / n_{I_j}`.
pub fn nlv_weights<R: Real>(alpha: &[R], pooled: &PooledKernelState<R>) -> Result<Vec<R>> {
    check_arms(alpha.len(), pooled.arms())?;
    let mut seen = vec![0usize; pooled.arms()];
    for &a in &pooled.arm_of {
        seen[a] += 1;
    }
    if seen != pooled.counts {
        return Err(Error::InconsistentState(
            "per-arm counts disagree with sample provenance".into(),
        ));
    }
    if pooled.is_empty() {
        return Err(Error::EmptyInput);
    }
    for (i, &a) in alpha.iter().enumerate() {
        if a > R::zero() && pooled.counts[i] == 0 {
            return Err(Error::MissingWarmStart(i));
        }
    }
    let per_arm: Vec<R> = alpha
        .iter()
        .zip(&pooled.counts)
        .map(|(&a, &n)| if n == 0 { R::zero() } else { a / R::from_usize_lossy(n) })
        .collect();
    Ok(pooled.arm_of.iter().map(|&i| per_arm[i]).collect())
}

fn rho_eig<R: Real>(q: &[R], pooled: &PooledKernelState<R>, active: &[usize]) -> Result<EigenDecomposition<R>> {
    let s: Vec<R> = active.iter().map(|&j| q[j].sqrt()).collect();
    let rho = SymMatrix::from_fn(active.len(), |a, b| {
        s[a] * pooled.gram_entry(active[a], active[b]) * s[b]
    });
    let mut eig = sym_eig(&rho)?;
    clamp_dust(&mut eig)?;
    Ok(eig)
}

/// Per-arm gradient from the diagonal of `(log ρ + I) ρ` divided by `q`.
///
/// Samples outside `active` have zero weight and contribute nothing.
fn pooled_gradient<R: Real>(
    eig: &EigenDecomposition<R>,
    q: &[R],
    active: &[usize],
    arm_of: &[usize],
    counts: &[usize],
) -> Vec<R> {
    let clamp = R::lit(DEFAULT_CLAMP);
    let w: Vec<R> = eig
        .eigenvalues
        .iter()
        .map(|&l| l * (l.max(clamp).ln() + R::one()))
        .collect();
    let diag = eig.compose_diag(&w);
    let mut grad = vec![R::zero(); counts.len()];
    for (&dj, &j) in diag.iter().zip(active) {
        grad[arm_of[j]] += dj / q[j].max(R::lit(Q_MIN));
    }
    for (g, &n) in grad.iter_mut().zip(counts) {
        if n > 0 {
            *g /= R::from_usize_lossy(n);
        }
    }
    grad
}

/// Loss and optional gradient of the kernel-form negative log-Vendi objective.
pub fn nlv_kernel_eval<R: Real>(
    alpha: &[R],
    pooled: &PooledKernelState<R>,
    want_grad: bool,
) -> Result<(R, Option<Vec<R>>)> {
    let q = nlv_weights(alpha, pooled)?;
    // Zero-weight samples give zero rows and columns of ρ.
    let active: Vec<usize> = (0..q.len()).filter(|&j| q[j] > R::zero()).collect();
    let eig = rho_eig(&q, pooled, &active)?;
    let loss = neg_entropy_of_spectrum(&eig.eigenvalues);
    let grad = want_grad.then(|| pooled_gradient(&eig, &q, &active, &pooled.arm_of, &pooled.counts));
    Ok((loss, grad))
}

/// `Tr(ρ log ρ)` with `ρ = diag(q)^{1/2} K diag(q)^{1/2}`.
pub fn nlv_loss_kernel<R: Real>(alpha: &[R], pooled: &PooledKernelState<R>) -> Result<R> {
    Ok(nlv_kernel_eval(alpha, pooled, false)?.0)
}

pub fn nlv_gradient_kernel<R: Real>(alpha: &[R], pooled: &PooledKernelState<R>) -> Result<Vec<R>> {
    Ok(nlv_kernel_eval(alpha, pooled, true)?.1.expect("gradient requested"))
}

/// Which matrix the feature-form log-Vendi is diagonalized through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureRoute {
    /// `D × D` feature covariance `C(α)`.
    Covariance,
    /// `N × N` Gram of the pooled embeddings.
    Gram,
    /// Whichever of the two is smaller.
    #[default]
    Auto,
}

/// Per-arm feature second moments, plus the pooled embeddings when the Gram route may be used.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureState<R> {
    stats: Vec<ArmMomentStats<R>>,
    pool: Option<PooledKernelState<R>>,
}

impl<R: Real> FeatureState<R> {
    pub fn new(arms: usize, dim: usize, keep_embeddings: bool) -> Self {
        Self {
            stats: vec![ArmMomentStats::new(dim); arms],
            pool: keep_embeddings.then(|| PooledKernelState::new(arms, PoolKernel::Linear)),
        }
    }

    pub fn push(&mut self, arm: usize, phi: Vec<R>) -> Result<()> {
        let st = self.stats.get_mut(arm).ok_or_else(|| {
            Error::InconsistentState(format!("arm {arm} out of range"))
        })?;
        st.push(&phi)?;
        if let Some(pool) = self.pool.as_mut() {
            pool.push(arm, phi)?;
        }
        Ok(())
    }

    /// State over known per-arm second moments only; the Gram route is unavailable.
    pub fn from_stats(stats: Vec<ArmMomentStats<R>>) -> Result<Self> {
        if stats.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(Self { stats, pool: None })
    }

    pub fn stats(&self) -> &[ArmMomentStats<R>] {
        &self.stats
    }

    pub fn pool(&self) -> Option<&PooledKernelState<R>> {
        self.pool.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.stats[0].dim()
    }

    pub fn total(&self) -> usize {
        self.stats.iter().map(|s| s.count()).sum()
    }

    fn use_gram(&self, route: FeatureRoute) -> Result<bool> {
        match route {
            FeatureRoute::Covariance => Ok(false),
            FeatureRoute::Gram if self.pool.is_none() => Err(Error::InvalidConfig(
                "Gram route requested but embeddings were not kept".into(),
            )),
            FeatureRoute::Gram => Ok(true),
            FeatureRoute::Auto => Ok(self.pool.is_some() && self.total() < self.dim()),
        }
    }
}

/// Loss and optional gradient of the feature-form negative log-Vendi objective.
pub fn nlv_features_eval<R: Real>(
    alpha: &[R],
    state: &FeatureState<R>,
    route: FeatureRoute,
    want_grad: bool,
) -> Result<(R, Option<Vec<R>>)> {
    check_stats(alpha, &state.stats)?;
    if state.use_gram(route)? {
        return nlv_kernel_eval(alpha, state.pool.as_ref().expect("checked"), want_grad);
    }
    let c = mixed_second(alpha, &state.stats);
    let mut eig = sym_eig(&c)?;
    clamp_dust(&mut eig)?;
    let loss = neg_entropy_of_spectrum(&eig.eigenvalues);
    if !want_grad {
        return Ok((loss, None));
    }
    let log_c = eig.compose(&spectral_weights(
        &eig.eigenvalues,
        MatrixFn::Log,
        R::lit(DEFAULT_CLAMP),
    )?);
    let grad = state
        .stats
        .iter()
        .map(|st| log_c.inner(&st.second) + st.second.trace())
        .collect();
    Ok((loss, Some(grad)))
}

/// `Tr(C log C)` with `C(α) = Σ_j q_j φ_j φ_jᵀ`.
pub fn nlv_loss_features<R: Real>(
    alpha: &[R],
    state: &FeatureState<R>,
    route: FeatureRoute,
) -> Result<R> {
    Ok(nlv_features_eval(alpha, state, route, false)?.0)
}

pub fn nlv_gradient_features<R: Real>(
    alpha: &[R],
    state: &FeatureState<R>,
    route: FeatureRoute,
) -> Result<Vec<R>> {
    Ok(nlv_features_eval(alpha, state, route, true)?.1.expect("gradient requested"))
}

/// Which quadratic kernel score the estimate tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadMode {
    /// Squared MMD to a fixed real set, up to the constant real-real term.
    Kd,
    /// Inverse RKE, `E k²(X, X′)`.
    InvRke,
}

/// Weight and radius of the linear fidelity term.
///
/// `ψ(x) = 1{min_y |x − y| > τ}` is the miss indicator against the real set,
/// so a positive weight penalizes samples far from real data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelitySpec {
    pub weight: f64,
    pub tau: f64,
}

/// Running pair averages for the quadratic objective.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadEstimate<R> {
    mode: QuadMode,
    kernel: KernelSpec,
    real: Vec<Vec<R>>,
    tau: Option<R>,
    samples: Vec<Vec<Vec<R>>>,
    /// Row-major `m × m` pair sums, kept symmetric.
    pair_sums: Vec<R>,
    cross_sums: Vec<R>,
    misses: Vec<usize>,
}

impl<R: Real> QuadEstimate<R> {
    /// `real` is required in `Kd` mode and whenever `tau` is set.
    pub fn new(
        arms: usize,
        mode: QuadMode,
        kernel: KernelSpec,
        real: Vec<Vec<R>>,
        tau: Option<R>,
    ) -> Result<Self> {
        kernel.validate()?;
        if arms == 0 {
            return Err(Error::EmptyInput);
        }
        if (mode == QuadMode::Kd || tau.is_some()) && real.is_empty() {
            return Err(Error::InvalidConfig(
                "kernel-distance and fidelity terms need a nonempty real set".into(),
            ));
        }
        Ok(Self {
            mode,
            kernel,
            real,
            tau,
            samples: vec![Vec::new(); arms],
            pair_sums: vec![R::zero(); arms * arms],
            cross_sums: vec![R::zero(); arms],
            misses: vec![0; arms],
        })
    }

    pub fn arms(&self) -> usize {
        self.samples.len()
    }

    pub fn mode(&self) -> QuadMode {
        self.mode
    }

    pub fn counts(&self) -> Vec<usize> {
        self.samples.iter().map(Vec::len).collect()
    }

    fn pair_value(&self, x: &[R], y: &[R]) -> Result<R> {
        let k = kernel_eval(&self.kernel, x, y)?;
        Ok(match self.mode {
            QuadMode::Kd => k,
            QuadMode::InvRke => k * k,
        })
    }

    /// Adds one sample from `arm`.
    pub fn update(&mut self, arm: usize, x: Vec<R>) -> Result<()> {
        let m = self.arms();
        if arm >= m {
            return Err(Error::InconsistentState(format!("arm {arm} out of range for {m} arms")));
        }
        for j in 0..m {
            let mut s = R::zero();
            for y in &self.samples[j] {
                s += self.pair_value(&x, y)?;
            }
            self.pair_sums[arm * m + j] += s;
            if j != arm {
                self.pair_sums[j * m + arm] += s;
            }
        }
        if self.mode == QuadMode::Kd {
            let mut s = R::zero();
            for y in &self.real {
                s += kernel_eval(&self.kernel, &x, y)?;
            }
            self.cross_sums[arm] += s / R::from_usize_lossy(self.real.len());
        }
        if let Some(tau) = self.tau {
            let tau2 = tau * tau;
            if self.real.iter().all(|y| sq_dist(&x, y) > tau2) {
                self.misses[arm] += 1;
            }
        }
        self.samples[arm].push(x);
        Ok(())
    }

    /// Pair counts: `n_i n_j` off the diagonal and `n_i(n_i − 1)/2` on it.
    pub fn pair_counts(&self) -> Vec<Vec<usize>> {
        let n = self.counts();
        (0..self.arms())
            .map(|i| {
                (0..self.arms())
                    .map(|j| if i == j { n[i] * n[i].saturating_sub(1) / 2 } else { n[i] * n[j] })
                    .collect()
            })
            .collect()
    }

    /// Raw pair averages (not projected).
    pub fn khat(&self) -> Result<SymMatrix<R>> {
        let m = self.arms();
        let pc = self.pair_counts();
        for (i, row) in pc.iter().enumerate() {
            if row.iter().any(|&c| c == 0) {
                return Err(Error::MissingWarmStart(i));
            }
        }
        Ok(SymMatrix::from_fn(m, |i, j| {
            self.pair_sums[i * m + j] / R::from_usize_lossy(pc[i][j])
        }))
    }

    /// Diagonal of the estimate; `None` for arms whose U-statistic is undefined.
    pub fn khat_diag(&self) -> Vec<Option<R>> {
        let m = self.arms();
        let pc = self.pair_counts();
        (0..m)
            .map(|i| (pc[i][i] > 0).then(|| self.pair_sums[i * m + i] / R::from_usize_lossy(pc[i][i])))
            .collect()
    }

    /// `−2 · mean k(x, y)` against the real set per arm; zero outside `Kd` mode.
    pub fn bhat(&self) -> Vec<R> {
        self.samples
            .iter()
            .zip(&self.cross_sums)
            .map(|(s, &c)| {
                if self.mode != QuadMode::Kd || s.is_empty() {
                    R::zero()
                } else {
                    -R::lit(2.0) * c / R::from_usize_lossy(s.len())
                }
            })
            .collect()
    }

    /// Per-arm miss rates of the fidelity functional; zero when no radius is set.
    pub fn theta(&self) -> Vec<R> {
        self.samples
            .iter()
            .zip(&self.misses)
            .map(|(s, &k)| {
                if s.is_empty() {
                    R::zero()
                } else {
                    R::from_usize_lossy(k) / R::from_usize_lossy(s.len())
                }
            })
            .collect()
    }

    /// Projected quadratic form `αᵀK̂⁺α + αᵀ(b̂ + wθ̂)`.
    pub fn form(&self, w: R) -> Result<QuadForm<R>> {
        let k = project_psd(&self.khat()?)?;
        let lin = self
            .bhat()
            .iter()
            .zip(self.theta())
            .map(|(&b, t)| b + w * t)
            .collect();
        Ok(QuadForm { k, lin })
    }
}

/// Free-function form of [`QuadEstimate::update`].
pub fn quad_estimate_update<R: Real>(
    mut est: QuadEstimate<R>,
    arm: usize,
    x: Vec<R>,
) -> Result<QuadEstimate<R>> {
    est.update(arm, x)?;
    Ok(est)
}

/// `αᵀKα + αᵀ lin`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadForm<R> {
    pub k: SymMatrix<R>,
    pub lin: Vec<R>,
}

impl<R: Real> QuadForm<R> {
    pub fn new(k: SymMatrix<R>, lin: Vec<R>) -> Result<Self> {
        check_arms(lin.len(), k.dim())?;
        Ok(Self { k, lin })
    }
}

pub fn quad_loss<R: Real>(alpha: &[R], form: &QuadForm<R>) -> Result<R> {
    check_arms(alpha.len(), form.lin.len())?;
    Ok(form.k.quad_form(alpha) + dot(alpha, &form.lin))
}

pub fn quad_gradient<R: Real>(alpha: &[R], form: &QuadForm<R>) -> Result<Vec<R>> {
    check_arms(alpha.len(), form.lin.len())?;
    Ok(form
        .k
        .matvec(alpha)
        .iter()
        .zip(&form.lin)
        .map(|(&ka, &b)| R::lit(2.0) * ka + b)
        .collect())
}

impl<R: Real> SimplexObjective<R> for QuadForm<R> {
    fn arms(&self) -> usize {
        self.lin.len()
    }
    fn loss(&self, alpha: &[R]) -> Result<R> {
        quad_loss(alpha, self)
    }
    fn gradient(&self, alpha: &[R]) -> Result<Vec<R>> {
        quad_gradient(alpha, self)
    }
}

/// Fréchet objective over frozen arm statistics.
#[derive(Debug, Clone, Copy)]
pub struct FdObjective<'a, R> {
    pub stats: &'a [ArmMomentStats<R>],
    pub reference: &'a FdReference<R>,
}

impl<R: Real> SimplexObjective<R> for FdObjective<'_, R> {
    fn arms(&self) -> usize {
        self.stats.len()
    }
    fn loss(&self, alpha: &[R]) -> Result<R> {
        fd_loss(alpha, self.stats, self.reference)
    }
    fn gradient(&self, alpha: &[R]) -> Result<Vec<R>> {
        fd_gradient(alpha, self.stats, self.reference)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NlvKernelObjective<'a, R> {
    pub pooled: &'a PooledKernelState<R>,
}

impl<R: Real> SimplexObjective<R> for NlvKernelObjective<'_, R> {
    fn arms(&self) -> usize {
        self.pooled.arms()
    }
    fn loss(&self, alpha: &[R]) -> Result<R> {
        nlv_loss_kernel(alpha, self.pooled)
    }
    fn gradient(&self, alpha: &[R]) -> Result<Vec<R>> {
        nlv_gradient_kernel(alpha, self.pooled)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NlvFeatureObjective<'a, R> {
    pub state: &'a FeatureState<R>,
    pub route: FeatureRoute,
}

impl<R: Real> SimplexObjective<R> for NlvFeatureObjective<'_, R> {
    fn arms(&self) -> usize {
        self.state.stats.len()
    }
    fn loss(&self, alpha: &[R]) -> Result<R> {
        nlv_loss_features(alpha, self.state, self.route)
    }
    fn gradient(&self, alpha: &[R]) -> Result<Vec<R>> {
        nlv_gradient_features(alpha, self.state, self.route)
    }
}
