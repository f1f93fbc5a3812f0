//! Kernel functions, Gram matrices and unit-norm random Fourier features.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::scalar::{dot, norm, sq_dist, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelKind {
    /// `exp(-|x - y|² / (2σ²))`.
    Gaussian { bandwidth: f64 },
    /// `⟨x, y⟩ / (|x| |y|)`.
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(flatten)]
    pub kind: KernelKind,
    #[serde(default = "default_true")]
    pub normalize: bool,
}

fn default_true() -> bool {
    true
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Self {
        Self {
            kind: KernelKind::Gaussian { bandwidth },
            normalize: true,
        }
    }

    pub fn cosine() -> Self {
        Self {
            kind: KernelKind::Cosine,
            normalize: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            KernelKind::Gaussian { bandwidth } if !(bandwidth > 0.0 && bandwidth.is_finite()) => {
                Err(Error::InvalidConfig(format!(
                    "gaussian bandwidth must be positive, got {bandwidth}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Gaussian bandwidth, if any.
    pub fn bandwidth(&self) -> Option<f64> {
        match self.kind {
            KernelKind::Gaussian { bandwidth } => Some(bandwidth),
            KernelKind::Cosine => None,
        }
    }

    fn raw<R: Real>(&self, x: &[R], y: &[R]) -> Result<R> {
        match self.kind {
            KernelKind::Gaussian { bandwidth } => {
                let s2 = R::lit(2.0 * bandwidth * bandwidth);
                Ok((-sq_dist(x, y) / s2).exp())
            }
            KernelKind::Cosine => {
                let (nx, ny) = (norm(x), norm(y));
                if nx == R::zero() || ny == R::zero() {
                    return Err(Error::ZeroVector);
                }
                Ok(dot(x, y) / (nx * ny))
            }
        }
    }
}

/// Evaluates `k(x, y)`.
pub fn kernel_eval<R: Real>(spec: &KernelSpec, x: &[R], y: &[R]) -> Result<R> {
    if x.len() != y.len() {
        return Err(Error::DimMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let k = spec.raw(x, y)?;
    if !spec.normalize {
        return Ok(k);
    }
    // Both shipped kernels have k(x,x) = 1, so this is the identity up to
    // round-off; kept so the flag means the same thing for any kernel.
    let kxx = spec.raw(x, x)?;
    let kyy = spec.raw(y, y)?;
    Ok(k / (kxx * kyy).sqrt())
}

/// Gram matrix `K_ij = k(x_i, x_j)`; the diagonal is exactly one when normalized.
pub fn gram<R: Real>(spec: &KernelSpec, samples: &[Vec<R>]) -> Result<SymMatrix<R>> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let d = samples[0].len();
    if let Some(bad) = samples.iter().find(|s| s.len() != d) {
        return Err(Error::DimMismatch {
            expected: d,
            got: bad.len(),
        });
    }
    let mut k = SymMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            let v = if i == j && spec.normalize {
                R::one()
            } else {
                kernel_eval(spec, &samples[i], &samples[j])?
            };
            k.set(i, j, v);
        }
    }
    Ok(k)
}

/// Inner-product Gram `K_ij = ⟨φ_i, φ_j⟩` of explicit feature vectors.
pub fn linear_gram<R: Real>(features: &[Vec<R>]) -> SymMatrix<R> {
    SymMatrix::from_fn(features.len(), |i, j| dot(&features[i], &features[j]))
}

/// Paired cos/sin random Fourier features for the Gaussian kernel.
///
/// `φ(x) = D^{-1/2} (cos ω₁ᵀx, sin ω₁ᵀx, …, cos ω_Dᵀx, sin ω_Dᵀx)` has unit
/// Euclidean norm for every `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct RffMap<R> {
    dim_in: usize,
    num_pairs: usize,
    bandwidth: f64,
    seed: u64,
    /// Row-major `num_pairs × dim_in`.
    frequencies: Vec<R>,
}

impl<R: Real> RffMap<R> {
    /// Samples frequencies `ω_r ~ N(0, σ⁻² I)` from `rng`; `seed` is recorded for provenance.
    pub fn sample(
        dim_in: usize,
        num_pairs: usize,
        bandwidth: f64,
        seed: u64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if num_pairs == 0 || dim_in == 0 {
            return Err(Error::InvalidConfig(
                "random features need positive input and feature dimensions".into(),
            ));
        }
        if !(bandwidth > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        let inv = 1.0 / bandwidth;
        let frequencies = (0..num_pairs * dim_in)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                R::lit(z * inv)
            })
            .collect();
        Ok(Self {
            dim_in,
            num_pairs,
            bandwidth,
            seed,
            frequencies,
        })
    }

    /// Seeds a dedicated ChaCha stream from `seed`.
    pub fn from_seed(dim_in: usize, num_pairs: usize, bandwidth: f64, seed: u64) -> Result<Self> {
        let mut rng = crate::rng::stream(seed, "rff", 0);
        Self::sample(dim_in, num_pairs, bandwidth, seed, &mut rng)
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn num_pairs(&self) -> usize {
        self.num_pairs
    }

    pub fn dim_out(&self) -> usize {
        2 * self.num_pairs
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn frequency(&self, r: usize) -> &[R] {
        &self.frequencies[r * self.dim_in..(r + 1) * self.dim_in]
    }

    pub fn embed(&self, x: &[R]) -> Result<Vec<R>> {
        if x.len() != self.dim_in {
            return Err(Error::DimMismatch {
                expected: self.dim_in,
                got: x.len(),
            });
        }
        let scale = R::from_usize_lossy(self.num_pairs).sqrt().recip();
        let mut out = Vec::with_capacity(2 * self.num_pairs);
        for r in 0..self.num_pairs {
            let (s, c) = dot(self.frequency(r), x).sin_cos();
            out.push(c * scale);
            out.push(s * scale);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, d: usize, scale: f64, rng: &mut impl Rng) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-scale..scale)).collect())
            .collect()
    }

    #[test]
    fn gaussian_closed_forms() {
        let k = KernelSpec::gaussian(1.0);
        assert_eq!(kernel_eval(&k, &[0.3, -1.0], &[0.3, -1.0]).unwrap(), 1.0);
        // |x - y|² = 2 with σ = 1 gives e^{-1}.
        let v = kernel_eval(&k, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn cosine_cases() {
        let k = KernelSpec::cosine();
        assert!(kernel_eval::<f64>(&k, &[1.0, 0.0], &[0.0, 2.0]).unwrap().abs() < 1e-15);
        assert_eq!(
            kernel_eval(&k, &[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::ZeroVector)
        );
    }

    #[test]
    fn dimension_checks() {
        let k = KernelSpec::gaussian(1.0);
        assert!(matches!(
            kernel_eval(&k, &[1.0], &[1.0, 2.0]),
            Err(Error::DimMismatch { .. })
        ));
        assert_eq!(gram::<f64>(&k, &[]), Err(Error::EmptyInput));
    }

    #[test]
    fn gram_small_cases() {
        let k = KernelSpec::gaussian(0.7);
        let g = gram(&k, &vec![vec![1.0, 2.0]; 4]).unwrap();
        assert!(g.as_slice().iter().all(|&x| x == 1.0));

        // Place two points so that k(x1, x2) = 0.5: |x1-x2|² = 2σ² ln 2.
        let sigma = 1.3f64;
        let dist = (2.0 * sigma * sigma * 2.0f64.ln()).sqrt();
        let g = gram(&KernelSpec::gaussian(sigma), &[vec![0.0], vec![dist]]).unwrap();
        assert_eq!(g.get(0, 0), 1.0);
        assert!((g.get(0, 1) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn gram_is_psd_with_unit_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for spec in [KernelSpec::gaussian(0.8), KernelSpec::cosine()] {
            let pts = random_points(5, 3, 2.0, &mut rng);
            let g = gram(&spec, &pts).unwrap();
            assert!(g.diag().iter().all(|&d| d == 1.0));
            let min = *sym_eig(&g).unwrap().eigenvalues.last().unwrap();
            assert!(min >= -1e-10, "min eigenvalue {min}");
        }
    }

    #[test]
    fn rff_is_unit_norm_and_self_similar() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let map = RffMap::<f64>::from_seed(4, 64, 1.5, 42).unwrap();
        for x in random_points(20, 4, 5.0, &mut rng) {
            let phi = map.embed(&x).unwrap();
            assert_eq!(phi.len(), 128);
            assert!((dot(&phi, &phi) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn rff_gram_equals_embedding_inner_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let map = RffMap::<f64>::from_seed(2, 16, 1.0, 1).unwrap();
        let pts = random_points(6, 2, 1.0, &mut rng);
        let feats: Vec<Vec<f64>> = pts.iter().map(|x| map.embed(x).unwrap()).collect();
        let g = linear_gram(&feats);
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(g.get(i, j), dot(&feats[i], &feats[j]));
            }
        }
    }

    #[test]
    fn rff_approximates_gaussian_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let d_pairs = 4096;
        let map = RffMap::<f64>::from_seed(3, d_pairs, 1.0, 7).unwrap();
        let exact = KernelSpec::gaussian(1.0);
        let mut total = 0.0;
        let pairs = 100;
        for _ in 0..pairs {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let approx = dot(&map.embed(&x).unwrap(), &map.embed(&y).unwrap());
            let truth = kernel_eval(&exact, &x, &y).unwrap();
            let err = (approx - truth).abs();
            assert!(err <= 0.05, "pair error {err}");
            total += err;
        }
        let mae = total / pairs as f64;
        assert!(mae <= 3.0 / (d_pairs as f64).sqrt(), "mean abs error {mae}");
    }

    #[test]
    fn rff_is_reproducible_from_seed() {
        let a = RffMap::<f64>::from_seed(3, 8, 2.0, 99).unwrap();
        let b = RffMap::<f64>::from_seed(3, 8, 2.0, 99).unwrap();
        assert_eq!(a, b);
        let c = RffMap::<f64>::from_seed(3, 8, 2.0, 100).unwrap();
        assert_ne!(a, c);
    }
}
