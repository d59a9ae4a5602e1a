//! Dense linear algebra for small symmetric systems: half-vectorization
//! calculus, Kronecker products, matrix norms, spectral quantities and the
//! unique SPD square root.
//!
//! Conventions: matrices are `nalgebra::DMatrix<f64>`, indices are 0-based in
//! code. Half-vectorization reads the lower triangle column-wise, so for a
//! symmetric `m x m` matrix the packed length is `m* = m(m+1)/2`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance for symmetry checks.
pub const SYM_REL_TOL: f64 = 1e-10;
/// Relative tolerance for `sqrt_spd` residuals (`S*S - M`).
pub const SQRT_REL_TOL: f64 = 1e-9;

const EIGEN_EPS: f64 = 1e-13;
const EIGEN_MAX_ITER: usize = 100_000;

/// Bijection between packed lower-triangle indices `k` and pairs `(i, j)`,
/// `i >= j`, for symmetric matrices of a fixed dimension.
///
/// Entries are ordered column-wise: for `m = 2` the pairs are
/// `(0,0), (1,0), (1,1)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymIndexMap {
    m: usize,
    forward: Vec<(usize, usize)>,
    backward: Vec<usize>,
}

impl SymIndexMap {
    pub fn new(m: usize) -> Self {
        let m_star = m * (m + 1) / 2;
        let mut forward = Vec::with_capacity(m_star);
        let mut backward = vec![usize::MAX; m * m];
        for j in 0..m {
            for i in j..m {
                backward[i * m + j] = forward.len();
                backward[j * m + i] = forward.len();
                forward.push((i, j));
            }
        }
        Self { m, forward, backward }
    }

    /// Matrix dimension `m`.
    pub fn dim(&self) -> usize {
        self.m
    }

    /// Packed length `m* = m(m+1)/2`.
    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    /// Pair `(i, j)`, `i >= j`, stored at packed position `k`.
    pub fn pair(&self, k: usize) -> Result<(usize, usize)> {
        self.forward
            .get(k)
            .copied()
            .ok_or_else(|| Error::Range(format!("packed index {k} >= {}", self.len())))
    }

    /// Packed position of the unordered pair `(i, j)`.
    pub fn index(&self, i: usize, j: usize) -> Result<usize> {
        if i >= self.m || j >= self.m {
            return Err(Error::Range(format!(
                "pair ({i}, {j}) outside dimension {}",
                self.m
            )));
        }
        Ok(self.backward[i * self.m + j])
    }
}

/// Maps a packed index to its `(row, col)` pair, `row >= col`, both 0-based.
pub fn phi(k: usize, m: usize) -> Result<(usize, usize)> {
    SymIndexMap::new(m).pair(k)
}

/// Inverse of [`phi`]: packed position of an unordered pair.
pub fn phi_inv(i: usize, j: usize, m: usize) -> Result<usize> {
    SymIndexMap::new(m).index(i, j)
}

fn ensure_square(m: &DMatrix<f64>) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "expected square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.nrows())
}

/// Errors if any entry is NaN or infinite.
pub fn ensure_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain("matrix has non-finite entries".into()))
    }
}

fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Checks symmetry up to `SYM_REL_TOL` relative to the largest entry.
pub fn ensure_symmetric(m: &DMatrix<f64>) -> Result<()> {
    ensure_square(m)?;
    let scale = norm_max(m).max(1.0);
    if asymmetry(m) <= SYM_REL_TOL * scale {
        Ok(())
    } else {
        Err(Error::Domain("matrix is not symmetric within tolerance".into()))
    }
}

/// Packs the lower triangle of a symmetric matrix column-wise.
pub fn vech(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    ensure_symmetric(m)?;
    let idx = SymIndexMap::new(m.nrows());
    Ok(DVector::from_fn(idx.len(), |k, _| {
        let (i, j) = idx.forward[k];
        m[(i, j)]
    }))
}

/// Rebuilds the symmetric matrix from its packed lower triangle.
pub fn unvech(v: &DVector<f64>) -> Result<DMatrix<f64>> {
    let m_star = v.len();
    // Solve m(m+1)/2 = m_star for integral m.
    let m = ((-1.0 + (1.0 + 8.0 * m_star as f64).sqrt()) / 2.0).round() as usize;
    if m * (m + 1) / 2 != m_star {
        return Err(Error::Dimension(format!(
            "length {m_star} is not of the form m(m+1)/2"
        )));
    }
    let idx = SymIndexMap::new(m);
    let mut out = DMatrix::zeros(m, m);
    for k in 0..m_star {
        let (i, j) = idx.forward[k];
        out[(i, j)] = v[k];
        out[(j, i)] = v[k];
    }
    Ok(out)
}

/// Diagonal of a square matrix as a vector.
pub fn vecd(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(m.nrows().min(m.ncols()), |i, _| m[(i, i)])
}

/// Diagonal matrix with the given entries.
pub fn diag_embed(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(v)
}

/// Kronecker product.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// `p`-fold Kronecker power; `p` must be at least 1.
pub fn kron_power(a: &DMatrix<f64>, p: usize) -> Result<DMatrix<f64>> {
    if p == 0 {
        return Err(Error::Range("Kronecker power requires p >= 1".into()));
    }
    let mut out = a.clone();
    for _ in 1..p {
        out = out.kronecker(a);
    }
    Ok(out)
}

/// Largest absolute entry.
pub fn norm_max(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

/// Largest row sum of absolute values (operator norm induced by the sup norm).
pub fn norm_induced_inf(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0f64, f64::max)
}

/// Largest singular value.
pub fn norm_spectral(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone()
        .try_svd(false, false, EIGEN_EPS, EIGEN_MAX_ITER)
        .map(|svd| svd.singular_values.iter().fold(0.0f64, |a, s| a.max(*s)))
        .unwrap_or_else(|| {
            // SVD failed to converge; fall back on the sqrt of rho(M'M).
            let gram = m.transpose() * m;
            spectral_radius(&gram).map(f64::sqrt).unwrap_or(f64::NAN)
        })
}

fn triangular_radius(m: &DMatrix<f64>) -> Option<f64> {
    let n = m.nrows();
    let strictly_lower = (0..n).all(|i| (i..n).all(|j| m[(i, j)] == 0.0 || i == j));
    let strictly_upper = (0..n).all(|i| (0..=i).all(|j| m[(i, j)] == 0.0 || i == j));
    if strictly_lower || strictly_upper {
        Some((0..n).fold(0.0f64, |acc, i| acc.max(m[(i, i)].abs())))
    } else {
        None
    }
}

/// Largest eigenvalue modulus of a square matrix.
///
/// Triangular inputs are read off the diagonal exactly (QR iteration smears
/// the eigenvalues of nilpotent blocks by roughly `eps^(1/n)`, far too much
/// for shift companions); everything else goes through the Schur form.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    let n = ensure_square(m)?;
    ensure_finite(m)?;
    if n == 0 {
        return Ok(0.0);
    }
    if let Some(rho) = triangular_radius(m) {
        return Ok(rho);
    }
    let schur = m
        .clone()
        .try_schur(EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or_else(|| {
            Error::Numeric(format!(
                "Schur iteration did not converge after {EIGEN_MAX_ITER} iterations on a {n}x{n} matrix"
            ))
        })?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .fold(0.0f64, |acc, l| acc.max(l.norm())))
}

/// Power-based spectral radius estimate by scaled repeated squaring: after
/// `k` squarings the max-norm of the rescaled power gives
/// `|M^(2^k)|^(1/2^k) -> rho(M)`. Independent of the Schur path, hence
/// useful as a cross-check oracle on companion matrices.
pub fn spectral_radius_power(m: &DMatrix<f64>, tol: f64, max_squarings: usize) -> Result<f64> {
    let n = ensure_square(m)?;
    ensure_finite(m)?;
    if n == 0 {
        return Ok(0.0);
    }
    let mut p = m.clone();
    let mut log_scale = 0.0f64; // ln |M^(2^k)| accumulated across rescalings
    let mut power = 1.0f64; // 2^k
    let mut prev = f64::INFINITY;
    for _ in 0..max_squarings {
        let s = norm_max(&p);
        if s == 0.0 {
            return Ok(0.0);
        }
        if !s.is_finite() {
            return Err(Error::Numeric("matrix powers overflowed".into()));
        }
        let estimate = ((log_scale + s.ln()) / power).exp();
        // powers below the dimension cannot have flushed nilpotent structure
        if power > n as f64 && (estimate - prev).abs() <= tol * estimate.max(1.0) {
            return Ok(estimate);
        }
        prev = estimate;
        p = (&p / s) * (&p / s);
        log_scale = 2.0 * (log_scale + s.ln());
        power *= 2.0;
    }
    Ok(prev)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn lambda_min_sym(m: &DMatrix<f64>) -> Result<f64> {
    ensure_symmetric(m)?;
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let eig = nalgebra::SymmetricEigen::try_new(m.clone(), EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or_else(|| Error::Numeric("symmetric eigensolver did not converge".into()))?;
    Ok(eig.eigenvalues.iter().fold(f64::INFINITY, |a, l| a.min(*l)))
}

/// Symmetric positive definite matrix, validated at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    mat: DMatrix<f64>,
    lambda_min: f64,
}

impl SpdMatrix {
    /// Validates symmetry (to `SYM_REL_TOL`) and positive definiteness
    /// (smallest eigenvalue above `1e-12` times the largest).
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        ensure_finite(&mat)?;
        ensure_symmetric(&mat)?;
        let eig = nalgebra::SymmetricEigen::try_new(mat.clone(), EIGEN_EPS, EIGEN_MAX_ITER)
            .ok_or_else(|| Error::Numeric("symmetric eigensolver did not converge".into()))?;
        let lambda_max = eig.eigenvalues.iter().fold(0.0f64, |a, l| a.max(*l));
        let lambda_min = eig
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |a, l| a.min(*l));
        if mat.nrows() == 0 || lambda_min <= 1e-12 * lambda_max.max(f64::MIN_POSITIVE) {
            return Err(Error::Domain(format!(
                "matrix is not positive definite (lambda_min = {lambda_min:e})"
            )));
        }
        Ok(Self { mat, lambda_min })
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }

    /// Smallest eigenvalue, computed at construction.
    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    /// Unique SPD square root via eigendecomposition.
    pub fn sqrt(&self) -> Result<SpdMatrix> {
        let root = sqrt_sym_psd(&self.mat)?;
        Ok(SpdMatrix {
            lambda_min: self.lambda_min.sqrt(),
            mat: root,
        })
    }
}

/// Smallest eigenvalue of an SPD matrix.
pub fn lambda_min_spd(m: &SpdMatrix) -> f64 {
    m.lambda_min()
}

/// Unique SPD square root of an SPD matrix.
pub fn sqrt_spd(m: &SpdMatrix) -> Result<SpdMatrix> {
    m.sqrt()
}

/// Symmetric square root of a symmetric positive semidefinite matrix.
///
/// Eigenvalues within rounding slop below zero are clamped to zero; anything
/// more negative is a domain error. Used on correlation matrices whose
/// smallest eigenvalue can legitimately approach zero.
pub fn sqrt_sym_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_symmetric(m)?;
    let n = m.nrows();
    if n == 0 {
        return Ok(m.clone());
    }
    let eig = nalgebra::SymmetricEigen::try_new(m.clone(), EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or_else(|| Error::Numeric("symmetric eigensolver did not converge".into()))?;
    let lambda_max = eig.eigenvalues.iter().fold(0.0f64, |a, l| a.max(*l));
    let floor = -1e-10 * lambda_max.max(1.0);
    let mut roots = eig.eigenvalues.clone();
    for l in roots.iter_mut() {
        if *l < floor {
            return Err(Error::Domain(format!(
                "matrix is not positive semidefinite (eigenvalue {l:e})"
            )));
        }
        *l = l.max(0.0).sqrt();
    }
    let v = &eig.eigenvectors;
    let mut out = v * DMatrix::from_diagonal(&roots) * v.transpose();
    // Re-symmetrize to kill rounding skew.
    let t = out.transpose();
    out = (out + t) * 0.5;
    Ok(out)
}

/// Matrix `L` of the congruence action on packed symmetric matrices:
/// `vech(M Q M') = L * vech(Q)` for every symmetric `Q`.
///
/// Writing `u -> (i, j)` and `v -> (a, b)` for the packed index pairs, the
/// entry is `L[u, v] = M[i, a] * M[j, b] + (a != b) * M[i, b] * M[j, a]`;
/// the second term carries the off-diagonal symmetric weight.
pub fn lift_congruence(m: &DMatrix<f64>, idx: &SymIndexMap) -> Result<DMatrix<f64>> {
    let n = ensure_square(m)?;
    if n != idx.dim() {
        return Err(Error::Dimension(format!(
            "matrix is {n}x{n} but index map has dimension {}",
            idx.dim()
        )));
    }
    let m_star = idx.len();
    let mut out = DMatrix::zeros(m_star, m_star);
    for u in 0..m_star {
        let (i, j) = idx.forward[u];
        for v in 0..m_star {
            let (a, b) = idx.forward[v];
            let mut entry = m[(i, a)] * m[(j, b)];
            if a != b {
                entry += m[(i, b)] * m[(j, a)];
            }
            out[(u, v)] = entry;
        }
    }
    Ok(out)
}
