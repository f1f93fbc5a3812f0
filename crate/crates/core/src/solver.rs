//! Exponentiated-gradient minimization over the probability simplex, and a
//! brute-force lattice search used to verify it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::{check_simplex, MixtureWeights};
use crate::scalar::Real;

/// Loss and gradient oracle on the simplex.
pub trait SimplexObjective<R: Real> {
    fn arms(&self) -> usize;
    fn loss(&self, alpha: &[R]) -> Result<R>;
    fn gradient(&self, alpha: &[R]) -> Result<Vec<R>>;
}

impl<R: Real, T: SimplexObjective<R> + ?Sized> SimplexObjective<R> for &T {
    fn arms(&self) -> usize {
        (**self).arms()
    }
    fn loss(&self, alpha: &[R]) -> Result<R> {
        (**self).loss(alpha)
    }
    fn gradient(&self, alpha: &[R]) -> Result<Vec<R>> {
        (**self).gradient(alpha)
    }
}

/// Objective assembled from two closures.
pub struct FnObjective<L, G> {
    arms: usize,
    loss: L,
    gradient: G,
}

impl<L, G> FnObjective<L, G> {
    pub fn new(arms: usize, loss: L, gradient: G) -> Self {
        Self {
            arms,
            loss,
            gradient,
        }
    }
}

impl<R, L, G> SimplexObjective<R> for FnObjective<L, G>
where
    R: Real,
    L: Fn(&[R]) -> Result<R>,
    G: Fn(&[R]) -> Result<Vec<R>>,
{
    fn arms(&self) -> usize {
        self.arms
    }
    fn loss(&self, alpha: &[R]) -> Result<R> {
        (self.loss)(alpha)
    }
    fn gradient(&self, alpha: &[R]) -> Result<Vec<R>> {
        (self.gradient)(alpha)
    }
}

/// Where each round's solve starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmStart {
    #[default]
    PreviousIterate,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EGConfig {
    pub stepsize: f64,
    pub steps: usize,
    pub warm_start: WarmStart,
    /// Use `η / √(s + 1)` at step `s`.
    pub diminishing: bool,
}

impl Default for EGConfig {
    fn default() -> Self {
        Self {
            stepsize: 0.5,
            steps: 200,
            warm_start: WarmStart::PreviousIterate,
            diminishing: false,
        }
    }
}

impl EGConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.stepsize.is_finite() && self.stepsize > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "EG stepsize must be finite and positive, got {}",
                self.stepsize
            )));
        }
        if self.steps == 0 {
            return Err(Error::InvalidConfig("EG needs at least one step".into()));
        }
        Ok(())
    }
}

/// One multiplicative-weights step `α′ ∝ α · exp(−η g)`.
pub fn eg_step<R: Real>(alpha: &[R], g: &[R], eta: R) -> Result<Vec<R>> {
    if alpha.len() != g.len() {
        return Err(Error::DimMismatch {
            expected: alpha.len(),
            got: g.len(),
        });
    }
    if let Some(bad) = g.iter().find(|x| !x.is_finite()) {
        return Err(Error::OutOfDomain(format!("non-finite gradient entry {bad}")));
    }
    // Shift so the largest exponent is zero; only entries with α > 0 matter.
    let shift = alpha
        .iter()
        .zip(g)
        .filter(|(&a, _)| a > R::zero())
        .map(|(_, &gi)| -eta * gi)
        .fold(R::neg_infinity(), R::max);
    let mut out: Vec<R> = alpha
        .iter()
        .zip(g)
        .map(|(&a, &gi)| if a > R::zero() { a * (-eta * gi - shift).exp() } else { R::zero() })
        .collect();
    let total: R = out.iter().copied().sum();
    if !(total > R::zero()) {
        return Err(Error::OutOfDomain("weights vanished in EG step".into()));
    }
    out.iter_mut().for_each(|x| *x /= total);
    Ok(out)
}

/// `cfg.steps` EG steps from `start`; returns the last iterate.
pub fn solve_simplex<R: Real, O: SimplexObjective<R> + ?Sized>(
    objective: &O,
    start: &[R],
    cfg: &EGConfig,
) -> Result<MixtureWeights<R>> {
    cfg.validate()?;
    if start.len() != objective.arms() {
        return Err(Error::DimMismatch {
            expected: objective.arms(),
            got: start.len(),
        });
    }
    check_simplex(start)?;
    let mut alpha = start.to_vec();
    if alpha.len() == 1 {
        return MixtureWeights::new(alpha);
    }
    for s in 0..cfg.steps {
        let eta = if cfg.diminishing {
            cfg.stepsize / ((s + 1) as f64).sqrt()
        } else {
            cfg.stepsize
        };
        let g = objective.gradient(&alpha)?;
        alpha = eg_step(&alpha, &g, R::lit(eta))?;
    }
    MixtureWeights::new(alpha)
}

/// Minimizer of `loss` over the lattice `{k / r}` on the simplex, `m ≤ 4`.
///
/// Points are visited in lexicographic order of `(k_1, …, k_m)` and a later
/// point replaces the incumbent only if strictly better.
pub fn brute_force_simplex<R: Real, F>(m: usize, resolution: usize, loss: F) -> Result<MixtureWeights<R>>
where
    F: Fn(&[R]) -> Result<R>,
{
    if m == 0 || resolution == 0 {
        return Err(Error::EmptyInput);
    }
    if m > 4 {
        return Err(Error::TooManyArms(m));
    }
    let r = R::from_usize_lossy(resolution);
    let mut ks = vec![0usize; m];
    let mut best: Option<(R, Vec<R>)> = None;
    loop {
        let used: usize = ks[..m - 1].iter().sum();
        if used <= resolution {
            ks[m - 1] = resolution - used;
            let alpha: Vec<R> = ks.iter().map(|&k| R::from_usize_lossy(k) / r).collect();
            let v = loss(&alpha)?;
            if best.as_ref().map_or(true, |(b, _)| v < *b) {
                best = Some((v, alpha));
            }
        }
        // Odometer over the first m − 1 coordinates.
        let mut pos = m - 1;
        loop {
            if pos == 0 {
                let (_, alpha) = best.expect("grid is nonempty");
                return Ok(MixtureWeights::new(alpha).unwrap_or_else(|_| MixtureWeights::uniform(m)));
            }
            pos -= 1;
            ks[pos] += 1;
            if ks[..=pos].iter().sum::<usize>() <= resolution {
                for k in ks[pos + 1..m - 1].iter_mut() {
                    *k = 0;
                }
                break;
            }
            ks[pos] = 0;
        }
    }
}
