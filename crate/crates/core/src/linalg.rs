//! Dense symmetric matrices and spectral functions.
//!
//! The eigensolver is the classical Householder tridiagonalization followed by
//! the implicit QL iteration with Wilkinson-style shifts. It is deterministic
//! for fixed input bits and generic over the scalar type.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Eigenvalues below this (relative to `max(1, |λ|max)`) are treated as a
/// violation of positive semidefiniteness instead of round-off dust.
pub const NEGATIVE_DUST: f64 = 1e-8;

/// Default eigenvalue floor for `log` and `inv_sqrt`.
pub const DEFAULT_CLAMP: f64 = 1e-12;

const SYMMETRY_TOL: f64 = 1e-10;

/// Square real matrix that is symmetric up to round-off, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<R> {
    dim: usize,
    data: Vec<R>,
}

impl<R: Real> SymMatrix<R> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![R::zero(); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diag(&vec![R::one(); dim])
    }

    pub fn from_diag(diag: &[R]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * m.dim + i] = d;
        }
        m
    }

    /// Builds `coef · v vᵀ`.
    pub fn outer(v: &[R], coef: R) -> Self {
        let mut m = Self::zeros(v.len());
        m.add_outer(v, coef);
        m
    }

    /// Builds a matrix from a generator evaluated on the upper triangle.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> R) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                m.data[i * dim + j] = v;
                m.data[j * dim + i] = v;
            }
        }
        m
    }

    /// Validating constructor from row-major storage.
    pub fn from_row_major(dim: usize, data: Vec<R>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidMatrix("zero dimension".into()));
        }
        if data.len() != dim * dim {
            return Err(Error::InvalidMatrix(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMatrix("non-finite entry".into()));
        }
        let scale = data
            .iter()
            .fold(R::one(), |acc, &x| if x.abs() > acc { x.abs() } else { acc });
        let tol = symmetry_tol::<R>() * scale;
        for i in 0..dim {
            for j in (i + 1)..dim {
                let (a, b) = (data[i * dim + j], data[j * dim + i]);
                if (a - b).abs() > tol {
                    return Err(Error::InvalidMatrix(format!(
                        "asymmetric at ({i},{j}): {a} vs {b}"
                    )));
                }
            }
        }
        let mut m = Self { dim, data };
        m.symmetrize();
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<R>]) -> Result<Self> {
        let dim = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::InvalidMatrix(format!(
                "non-square: {dim} rows but a row of length {}",
                bad.len()
            )));
        }
        Self::from_row_major(dim, rows.concat())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> R {
        self.data[i * self.dim + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: R) {
        self.data[i * self.dim + j] = v;
        self.data[j * self.dim + i] = v;
    }

    pub fn as_slice(&self) -> &[R] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[R] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_rows(&self) -> Vec<Vec<R>> {
        self.data.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    pub fn diag(&self) -> Vec<R> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> R {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius(&self) -> R {
        self.data.iter().map(|&x| x * x).sum::<R>().sqrt()
    }

    /// `⟨A, B⟩ = Tr(AᵀB)`.
    pub fn inner(&self, other: &Self) -> R {
        self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum()
    }

    pub fn max_abs(&self) -> R {
        self.data
            .iter()
            .fold(R::zero(), |acc, &x| if x.abs() > acc { x.abs() } else { acc })
    }

    /// Averages each entry with its transpose.
    pub fn symmetrize(&mut self) {
        let n = self.dim;
        let half = R::lit(0.5);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = (self.data[i * n + j] + self.data[j * n + i]) * half;
                self.data[i * n + j] = v;
                self.data[j * n + i] = v;
            }
        }
    }

    /// `self += coef · v vᵀ`.
    pub fn add_outer(&mut self, v: &[R], coef: R) {
        debug_assert_eq!(v.len(), self.dim);
        let n = self.dim;
        for i in 0..n {
            let ci = coef * v[i];
            for j in 0..n {
                self.data[i * n + j] += ci * v[j];
            }
        }
    }

    /// `self += coef · (a bᵀ + b aᵀ)`.
    pub fn add_sym_outer(&mut self, a: &[R], b: &[R], coef: R) {
        let n = self.dim;
        for i in 0..n {
            for j in 0..n {
                self.data[i * n + j] += coef * (a[i] * b[j] + b[i] * a[j]);
            }
        }
    }

    /// `self += coef · other`.
    pub fn axpy(&mut self, coef: R, other: &Self) {
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += coef * b;
        }
    }

    pub fn scaled(&self, coef: R) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&x| x * coef).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(-R::one(), other);
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(R::one(), other);
        out
    }

    pub fn matvec(&self, v: &[R]) -> Vec<R> {
        self.data
            .chunks(self.dim)
            .map(|row| row.iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    /// `vᵀ M v`.
    pub fn quad_form(&self, v: &[R]) -> R {
        crate::scalar::dot(v, &self.matvec(v))
    }

    /// Dense product `self · other` (not symmetric in general).
    pub fn matmul(&self, other: &Self) -> Vec<R> {
        let n = self.dim;
        let mut out = vec![R::zero(); n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == R::zero() {
                    continue;
                }
                let brow = &other.data[k * n..(k + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// Congruence `A B A` for symmetric `A` (= self) and `B`; symmetric by construction.
    pub fn congruence(&self, b: &Self) -> Self {
        let n = self.dim;
        let ab = self.matmul(b);
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                let mut s = R::zero();
                for k in 0..n {
                    s += ab[i * n + k] * self.data[k * n + j];
                }
                out.set(i, j, s);
            }
        }
        out
    }

    /// Symmetric matrix with rows/cols permuted: `out[i][j] = self[p[i]][p[j]]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self::from_fn(self.dim, |i, j| self.get(perm[i], perm[j]))
    }

    pub fn map_real<S: Real>(&self) -> SymMatrix<S> {
        SymMatrix {
            dim: self.dim,
            data: self.data.iter().map(|&x| S::lit(x.as_f64())).collect(),
        }
    }
}

fn symmetry_tol<R: Real>() -> R {
    let eps = R::epsilon() * R::lit(16.0);
    let base = R::lit(SYMMETRY_TOL);
    if eps > base {
        eps
    } else {
        base
    }
}

/// Spectral decomposition `M = V Λ Vᵀ` with eigenvalues in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition<R> {
    pub eigenvalues: Vec<R>,
    /// Row-major `n × n`; column `k` is the eigenvector of `eigenvalues[k]`.
    vectors: Vec<R>,
}

impl<R: Real> EigenDecomposition<R> {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Entry `i` of eigenvector `k`.
    #[inline]
    pub fn vector_entry(&self, i: usize, k: usize) -> R {
        self.vectors[i * self.dim() + k]
    }

    pub fn vector(&self, k: usize) -> Vec<R> {
        (0..self.dim()).map(|i| self.vector_entry(i, k)).collect()
    }

    /// `V diag(w) Vᵀ`.
    pub fn compose(&self, weights: &[R]) -> SymMatrix<R> {
        let n = self.dim();
        let mut out = SymMatrix::zeros(n);
        let scaled: Vec<R> = (0..n * n)
            .map(|idx| self.vectors[idx] * weights[idx % n])
            .collect();
        for i in 0..n {
            let si = &scaled[i * n..(i + 1) * n];
            for j in i..n {
                let vj = &self.vectors[j * n..(j + 1) * n];
                let s: R = si.iter().zip(vj).map(|(&a, &b)| a * b).sum();
                out.set(i, j, s);
            }
        }
        out
    }

    /// Diagonal of `V diag(w) Vᵀ` in `O(n²)`.
    pub fn compose_diag(&self, weights: &[R]) -> Vec<R> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let row = &self.vectors[i * n..(i + 1) * n];
                row.iter().zip(weights).map(|(&v, &w)| v * v * w).sum()
            })
            .collect()
    }

    pub fn reconstruct(&self) -> SymMatrix<R> {
        self.compose(&self.eigenvalues)
    }
}

/// Symmetric eigendecomposition, eigenvalues sorted descending.
pub fn sym_eig<R: Real>(m: &SymMatrix<R>) -> Result<EigenDecomposition<R>> {
    let n = m.dim();
    if n == 0 {
        return Err(Error::InvalidMatrix("zero dimension".into()));
    }
    let mut v = m.data.clone();
    let mut d = vec![R::zero(); n];
    let mut e = vec![R::zero(); n];
    tridiagonalize(n, &mut v, &mut d, &mut e);
    tridiagonal_ql(n, &mut v, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[b].partial_cmp(&d[a]).expect("finite eigenvalues"));
    let eigenvalues = order.iter().map(|&k| d[k]).collect();
    let mut vectors = vec![R::zero(); n * n];
    for i in 0..n {
        for (newk, &k) in order.iter().enumerate() {
            vectors[i * n + newk] = v[i * n + k];
        }
    }
    Ok(EigenDecomposition {
        eigenvalues,
        vectors,
    })
}

// Householder reduction to tridiagonal form (EISPACK tred2).
fn tridiagonalize<R: Real>(n: usize, v: &mut [R], d: &mut [R], e: &mut [R]) {
    let zero = R::zero();
    for j in 0..n {
        d[j] = v[(n - 1) * n + j];
    }
    for i in (1..n).rev() {
        let mut scale = zero;
        let mut h = zero;
        for &dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == zero {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1) * n + j];
                v[i * n + j] = zero;
                v[j * n + i] = zero;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > zero {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = zero;
            }
            for j in 0..i {
                f = d[j];
                v[j * n + i] = f;
                g = e[j] + v[j * n + j] * f;
                for k in (j + 1)..i {
                    g += v[k * n + j] * d[k];
                    e[k] += v[k * n + j] * f;
                }
                e[j] = g;
            }
            f = zero;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    let upd = f * e[k] + g * d[k];
                    v[k * n + j] -= upd;
                }
                d[j] = v[(i - 1) * n + j];
                v[i * n + j] = zero;
            }
        }
        d[i] = h;
    }

    for i in 0..n.saturating_sub(1) {
        v[(n - 1) * n + i] = v[i * n + i];
        v[i * n + i] = R::one();
        let h = d[i + 1];
        if h != zero {
            for k in 0..=i {
                d[k] = v[k * n + i + 1] / h;
            }
            for j in 0..=i {
                let mut g = zero;
                for k in 0..=i {
                    g += v[k * n + i + 1] * v[k * n + j];
                }
                for k in 0..=i {
                    let upd = g * d[k];
                    v[k * n + j] -= upd;
                }
            }
        }
        for k in 0..=i {
            v[k * n + i + 1] = zero;
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1) * n + j];
        v[(n - 1) * n + j] = zero;
    }
    v[(n - 1) * n + n - 1] = R::one();
    e[0] = zero;
}

// Implicit QL on the tridiagonal (EISPACK tql2), accumulating into `v`.
fn tridiagonal_ql<R: Real>(n: usize, v: &mut [R], d: &mut [R], e: &mut [R]) -> Result<()> {
    let zero = R::zero();
    let one = R::one();
    let two = R::lit(2.0);
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = zero;

    let mut f = zero;
    let mut tst1 = zero;
    let eps = R::epsilon();
    for l in 0..n {
        let mag = d[l].abs() + e[l].abs();
        if mag > tst1 {
            tst1 = mag;
        }
        let mut m = l;
        while m < n - 1 {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 60 {
                    return Err(Error::InvalidMatrix(
                        "QL iteration failed to converge".into(),
                    ));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(one);
                if p < zero {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = one;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = zero;
                let mut s2 = zero;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        let row = k * n;
                        h = v[row + i + 1];
                        v[row + i + 1] = s * v[row + i] + c * h;
                        v[row + i] = c * v[row + i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if !(e[l].abs() > eps * tst1) {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = zero;
    }
    if d.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidMatrix("non-finite eigenvalue".into()));
    }
    Ok(())
}

/// Scalar function applied on the spectrum by [`psd_fn`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFn {
    Sqrt,
    InvSqrt,
    Log,
}

/// Checks PSD up to dust and returns eigenvalues with dust clamped to zero.
pub fn clamp_dust<R: Real>(eig: &mut EigenDecomposition<R>) -> Result<()> {
    let top = eig
        .eigenvalues
        .iter()
        .fold(R::one(), |acc, &x| if x.abs() > acc { x.abs() } else { acc });
    let floor = -R::lit(NEGATIVE_DUST) * top;
    for lam in eig.eigenvalues.iter_mut() {
        if *lam < floor {
            return Err(Error::NotPsd(lam.as_f64()));
        }
        if *lam < R::zero() {
            *lam = R::zero();
        }
    }
    Ok(())
}

/// Applies a scalar function to the spectrum of a PSD matrix.
///
/// Eigenvalues below `clamp` are raised to `clamp` before `f` is applied.
pub fn psd_fn<R: Real>(m: &SymMatrix<R>, f: MatrixFn, clamp: R) -> Result<SymMatrix<R>> {
    let mut eig = sym_eig(m)?;
    clamp_dust(&mut eig)?;
    psd_fn_from_eig(&eig, f, clamp)
}

/// [`psd_fn`] for an already decomposed (and dust-clamped) matrix.
pub fn psd_fn_from_eig<R: Real>(
    eig: &EigenDecomposition<R>,
    f: MatrixFn,
    clamp: R,
) -> Result<SymMatrix<R>> {
    let weights = spectral_weights(&eig.eigenvalues, f, clamp)?;
    Ok(eig.compose(&weights))
}

pub(crate) fn spectral_weights<R: Real>(eigs: &[R], f: MatrixFn, clamp: R) -> Result<Vec<R>> {
    eigs.iter()
        .map(|&lam| {
            let x = if lam < clamp { clamp } else { lam };
            match f {
                MatrixFn::Sqrt => Ok(x.max(R::zero()).sqrt()),
                MatrixFn::InvSqrt | MatrixFn::Log if x <= R::zero() => Err(Error::SingularMatrix),
                MatrixFn::InvSqrt => Ok(x.sqrt().recip()),
                MatrixFn::Log => Ok(x.ln()),
            }
        })
        .collect()
}

/// Sum of absolute eigenvalues.
pub fn trace_norm<R: Real>(m: &SymMatrix<R>) -> Result<R> {
    Ok(sym_eig(m)?.eigenvalues.iter().map(|x| x.abs()).sum())
}

/// Largest absolute eigenvalue.
pub fn op_norm<R: Real>(m: &SymMatrix<R>) -> Result<R> {
    Ok(sym_eig(m)?
        .eigenvalues
        .iter()
        .fold(R::zero(), |acc, &x| if x.abs() > acc { x.abs() } else { acc }))
}

/// Nearest PSD matrix in Frobenius norm: negative eigenvalues set to zero.
pub fn project_psd<R: Real>(m: &SymMatrix<R>) -> Result<SymMatrix<R>> {
    let eig = sym_eig(m)?;
    if eig.eigenvalues.iter().all(|&l| l >= R::zero()) {
        return Ok(m.clone());
    }
    let w: Vec<R> = eig.eigenvalues.iter().map(|&l| l.max(R::zero())).collect();
    Ok(eig.compose(&w))
}

/// `Σ λ log λ` over the spectrum with `0 log 0 = 0` and dust clamped.
pub fn neg_entropy_of_spectrum<R: Real>(eigs: &[R]) -> R {
    eigs.iter()
        .filter(|&&l| l > R::zero())
        .map(|&l| l * l.ln())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(n: usize, rng: &mut impl Rng) -> SymMatrix<f64> {
        SymMatrix::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn random_psd(n: usize, rank: usize, rng: &mut impl Rng) -> SymMatrix<f64> {
        let mut m = SymMatrix::zeros(n);
        for _ in 0..rank {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            m.add_outer(&v, 1.0);
        }
        m
    }

    fn dense_product(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    out[i * n + j] += a[i * n + k] * b[k * n + j];
                }
            }
        }
        out
    }

    #[test]
    fn identity_and_diagonal_spectra() {
        let e = sym_eig(&SymMatrix::<f64>::identity(3)).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 1.0, 1.0]);
        let e = sym_eig(&SymMatrix::<f64>::from_diag(&[2.0, 0.0, -1.0])).unwrap();
        for (got, want) in e.eigenvalues.iter().zip([2.0, 0.0, -1.0]) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn one_by_one() {
        let e = sym_eig(&SymMatrix::from_diag(&[-3.5])).unwrap();
        assert_eq!(e.eigenvalues, vec![-3.5]);
        assert_eq!(e.vector(0), vec![1.0]);
    }

    #[test]
    fn rejects_asymmetric_and_ragged() {
        let err = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap_err();
        assert!(matches!(err, Error::InvalidMatrix(_)));
        let err = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0]]).unwrap_err();
        assert!(matches!(err, Error::InvalidMatrix(_)));
    }

    #[test]
    fn reconstruction_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1, 2, 4, 7, 20] {
            let m = random_sym(n, &mut rng);
            let eig = sym_eig(&m).unwrap();
            let rec = eig.reconstruct();
            let err = rec.sub(&m).frobenius();
            assert!(err <= 1e-8 * m.frobenius().max(1.0), "n={n} err={err}");
            for a in 0..n {
                for b in 0..n {
                    let d: f64 = (0..n)
                        .map(|i| eig.vector_entry(i, a) * eig.vector_entry(i, b))
                        .sum();
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((d - want).abs() < 1e-8);
                }
            }
            assert!(eig.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn deterministic_for_fixed_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_sym(9, &mut rng);
        assert_eq!(sym_eig(&m).unwrap(), sym_eig(&m).unwrap());
    }

    #[test]
    fn repeated_eigenvalues() {
        let mut m = SymMatrix::<f64>::identity(5).scaled(2.0);
        m.add_outer(&[1.0, 1.0, 0.0, 0.0, 0.0], 1.0);
        let e = sym_eig(&m).unwrap();
        assert!((e.eigenvalues[0] - 4.0).abs() < 1e-12);
        assert!(e.eigenvalues[1..].iter().all(|l| (l - 2.0).abs() < 1e-12));
    }

    #[test]
    fn f32_decomposition() {
        let m = SymMatrix::<f32>::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let e = sym_eig(&m).unwrap();
        assert!((e.eigenvalues[0] - 3.0).abs() < 1e-5);
        assert!((e.eigenvalues[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn psd_fn_closed_forms() {
        let id = SymMatrix::<f64>::identity(2);
        assert_eq!(psd_fn(&id, MatrixFn::Sqrt, 0.0).unwrap(), id);
        let r = psd_fn(&SymMatrix::from_diag(&[4.0, 9.0]), MatrixFn::Sqrt, 0.0).unwrap();
        assert!(r.sub(&SymMatrix::from_diag(&[2.0, 3.0])).max_abs() < 1e-14);
        let e = std::f64::consts::E;
        let r = psd_fn(&SymMatrix::from_diag(&[e, e * e]), MatrixFn::Log, 1e-12).unwrap();
        assert!(r.sub(&SymMatrix::from_diag(&[1.0, 2.0])).max_abs() < 1e-14);
    }

    #[test]
    fn singular_without_clamp() {
        let m = SymMatrix::from_diag(&[1.0, 0.0]);
        assert_eq!(psd_fn(&m, MatrixFn::Log, 0.0), Err(Error::SingularMatrix));
        assert_eq!(psd_fn(&m, MatrixFn::InvSqrt, 0.0), Err(Error::SingularMatrix));
        let l = psd_fn(&m, MatrixFn::Log, 1e-12).unwrap();
        assert!((l.get(1, 1) - 1e-12f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn dust_is_clamped_but_negativity_is_not() {
        let m = SymMatrix::from_diag(&[1.0, -1e-10]);
        let s = psd_fn(&m, MatrixFn::Sqrt, 0.0).unwrap();
        assert_eq!(s.get(1, 1), 0.0);
        let m = SymMatrix::from_diag(&[1.0, -1e-3]);
        assert!(matches!(psd_fn(&m, MatrixFn::Sqrt, 0.0), Err(Error::NotPsd(_))));
    }

    #[test]
    fn trace_norm_cases() {
        assert!((trace_norm(&SymMatrix::<f64>::from_diag(&[1.0, -2.0])).unwrap() - 3.0).abs() < 1e-14);
        assert_eq!(trace_norm(&SymMatrix::<f64>::zeros(3)).unwrap(), 0.0);
        // rank one v vᵀ with |v| = 2 has the single eigenvalue |v|² = 4.
        let m = SymMatrix::outer(&[0.0, 2.0f64.sqrt(), 2.0f64.sqrt()], 1.0);
        assert!((trace_norm(&m).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn projection_clamps_negative_part() {
        let m = SymMatrix::from_diag(&[1.0, -0.5]);
        let p = project_psd(&m).unwrap();
        assert!(p.sub(&SymMatrix::from_diag(&[1.0, 0.0])).max_abs() < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn sqrt_of_sqrt_squares_back(seed in any::<u64>(), n in 1usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_psd(n, n + 1, &mut rng);
            let r = psd_fn(&psd_fn(&m, MatrixFn::Sqrt, 0.0).unwrap(), MatrixFn::Sqrt, 0.0).unwrap();
            let r2 = SymMatrix::from_row_major(n, r.matmul(&r)).unwrap();
            let back = SymMatrix::from_row_major(n, r2.matmul(&r2)).unwrap();
            prop_assert!(back.sub(&m).max_abs() < 1e-6);
        }

        #[test]
        fn sqrt_times_inv_sqrt_is_projector(seed in any::<u64>(), n in 2usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_psd(n, n - 1, &mut rng);
            let clamp = 1e-9;
            let eig = sym_eig(&m).unwrap();
            let s = psd_fn(&m, MatrixFn::Sqrt, 0.0).unwrap();
            let is = psd_fn(&m, MatrixFn::InvSqrt, clamp).unwrap();
            let prod = dense_product(s.as_slice(), is.as_slice(), n);
            // Identity on eigenvectors whose eigenvalue is above the clamp.
            for k in 0..n {
                if eig.eigenvalues[k] <= 1e-6 {
                    continue;
                }
                let v = eig.vector(k);
                for i in 0..n {
                    let pv: f64 = (0..n).map(|j| prod[i * n + j] * v[j]).sum();
                    prop_assert!((pv - v[i]).abs() < 1e-6);
                }
            }
        }

        #[test]
        fn norm_chain(seed in any::<u64>(), n in 1usize..9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_sym(n, &mut rng);
            let tn = trace_norm(&m).unwrap();
            let fro = m.frobenius();
            let op = op_norm(&m).unwrap();
            prop_assert!(tn + 1e-12 >= fro);
            prop_assert!(fro + 1e-12 >= op);
            prop_assert!(tn <= (n as f64).sqrt() * fro + 1e-12);
        }
    }
}
