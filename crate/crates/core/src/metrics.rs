//! Batch scores over finished sample sets: Fréchet distance, kernel distance,
//! Vendi and RKE.

use crate::error::{Error, Result};
use crate::kernels::{kernel_eval, KernelSpec};
use crate::linalg::{clamp_dust, sym_eig, MatrixFn, SymMatrix};
use crate::scalar::{sq_dist, Real};

/// Mean and (population-normalized) covariance of a sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMoments<R> {
    pub mean: Vec<R>,
    pub cov: SymMatrix<R>,
}

impl<R: Real> GaussianMoments<R> {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Mean and `1/n` covariance, accumulated through the uncentered second moment.
pub fn moments_of<R: Real>(samples: &[Vec<R>]) -> Result<GaussianMoments<R>> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let d = samples[0].len();
    let mut mean = vec![R::zero(); d];
    let mut second = SymMatrix::zeros(d);
    for x in samples {
        if x.len() != d {
            return Err(Error::DimMismatch {
                expected: d,
                got: x.len(),
            });
        }
        for (m, &xi) in mean.iter_mut().zip(x) {
            *m += xi;
        }
        second.add_outer(x, R::one());
    }
    let inv_n = R::from_usize_lossy(n).recip();
    mean.iter_mut().for_each(|m| *m *= inv_n);
    let mut cov = second.scaled(inv_n);
    cov.add_outer(&mean, -R::one());
    Ok(GaussianMoments { mean, cov })
}

/// `Tr((A^{1/2} B A^{1/2})^{1/2})`, the cross term of the Fréchet distance.
pub(crate) fn sqrt_cross_trace<R: Real>(a: &SymMatrix<R>, b: &SymMatrix<R>) -> Result<R> {
    let a_half = crate::linalg::psd_fn(a, MatrixFn::Sqrt, R::zero())?;
    let inner = a_half.congruence(b);
    let mut eig = sym_eig(&inner)?;
    clamp_dust(&mut eig)?;
    Ok(eig.eigenvalues.iter().map(|&l| l.sqrt()).sum())
}

/// `|μa − μb|² + Tr(Σa + Σb − 2(Σa^{1/2} Σb Σa^{1/2})^{1/2})`, floored at zero.
pub fn frechet_distance<R: Real>(a: &GaussianMoments<R>, b: &GaussianMoments<R>) -> Result<R> {
    if a.dim() != b.dim() || a.cov.dim() != b.cov.dim() {
        return Err(Error::DimMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let mean_term = sq_dist(&a.mean, &b.mean);
    let cross = sqrt_cross_trace(&a.cov, &b.cov)?;
    let fd = mean_term + a.cov.trace() + b.cov.trace() - R::lit(2.0) * cross;
    Ok(fd.max(R::zero()))
}

fn mean_kernel<R: Real>(spec: &KernelSpec, xs: &[Vec<R>], ys: &[Vec<R>]) -> Result<R> {
    let mut total = R::zero();
    for x in xs {
        for y in ys {
            total += kernel_eval(spec, x, y)?;
        }
    }
    Ok(total / (R::from_usize_lossy(xs.len()) * R::from_usize_lossy(ys.len())))
}

/// Squared MMD, V-statistic form (self-pairs included), floored at zero.
pub fn kernel_distance<R: Real>(spec: &KernelSpec, xs: &[Vec<R>], ys: &[Vec<R>]) -> Result<R> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::EmptyInput);
    }
    let kxx = mean_kernel(spec, xs, xs)?;
    let kyy = mean_kernel(spec, ys, ys)?;
    let kxy = mean_kernel(spec, xs, ys)?;
    Ok((kxx + kyy - R::lit(2.0) * kxy).max(R::zero()))
}

fn check_normalized<R: Real>(k: &SymMatrix<R>, n: usize) -> Result<()> {
    if k.dim() != n {
        return Err(Error::DimMismatch {
            expected: n,
            got: k.dim(),
        });
    }
    let tol = R::lit(1e-10).max(R::epsilon() * R::lit(64.0));
    for i in 0..n {
        let d = k.get(i, i);
        if (d - R::one()).abs() > tol {
            return Err(Error::NotNormalized {
                index: i,
                value: d.as_f64(),
            });
        }
    }
    Ok(())
}

/// `exp(VNE(K/n))`.
pub fn vendi_score<R: Real>(k: &SymMatrix<R>, n: usize) -> Result<R> {
    check_normalized(k, n)?;
    let mut eig = sym_eig(&k.scaled(R::from_usize_lossy(n).recip()))?;
    clamp_dust(&mut eig)?;
    let neg_entropy = crate::linalg::neg_entropy_of_spectrum(&eig.eigenvalues);
    Ok((-neg_entropy).exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RkeScore<R> {
    pub rke: R,
    pub inv_rke: R,
}

/// `InvRKE = |K|_F² / n²` and its reciprocal.
pub fn rke<R: Real>(k: &SymMatrix<R>, n: usize) -> Result<RkeScore<R>> {
    check_normalized(k, n)?;
    let nn = R::from_usize_lossy(n);
    let fro2 = k.as_slice().iter().map(|&x| x * x).sum::<R>();
    let inv_rke = fro2 / (nn * nn);
    Ok(RkeScore {
        rke: inv_rke.recip(),
        inv_rke,
    })
}
