//! Order-one Markov representation of the DCC process.
//!
//! The stacked state
//! `X_t = (X^(1), X^(2), X^(3), X^(4))` holds, most recent first,
//!
//! * `X^(1)`: the last `r` instantaneous-variance vectors `Vecd(D)`,
//! * `X^(2)`: the last `s` squared-return vectors,
//! * `X^(3)`: the last `nu` packed correlation drivers `vech(Q)`,
//! * `X^(4)`: the last `mu` packed residual outer products `vech(eps eps')`.
//!
//! One step of the process is the random affine map
//! `X_t = T_t X_{t-1} + zeta_t` where all randomness enters through the
//! standardized residual `eps_t`. This module builds the transition exactly
//! block by block, plus the deterministic companion matrices used by the
//! stationarity diagnostics.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matrix::{self, SymIndexMap};
use crate::model::{partial_scalar_m_coefs, DccSpec};
use crate::stationarity::BoundConstants;

/// Block offsets and lengths of the stacked state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub m: usize,
    pub m_star: usize,
    pub r: usize,
    pub s: usize,
    pub nu: usize,
    pub mu: usize,
}

impl StateLayout {
    pub fn of(spec: &DccSpec) -> Self {
        Self {
            m: spec.m,
            m_star: spec.m_star(),
            r: spec.r(),
            s: spec.s(),
            nu: spec.nu(),
            mu: spec.mu(),
        }
    }

    /// Total state dimension `(r+s) m + (nu+mu) m*`.
    pub fn dim(&self) -> usize {
        (self.r + self.s) * self.m + (self.nu + self.mu) * self.m_star
    }

    pub fn x1_offset(&self) -> usize {
        0
    }

    pub fn x2_offset(&self) -> usize {
        self.r * self.m
    }

    pub fn x3_offset(&self) -> usize {
        (self.r + self.s) * self.m
    }

    pub fn x4_offset(&self) -> usize {
        self.x3_offset() + self.nu * self.m_star
    }
}

/// A concrete state vector with block accessors. Lags are 0-based: lag 0 is
/// the current time.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub layout: StateLayout,
    pub data: DVector<f64>,
}

impl StateVector {
    fn block(&self, offset: usize, len: usize) -> DVector<f64> {
        self.data.rows(offset, len).into_owned()
    }

    /// `Vecd(D)` at the given lag.
    pub fn vecd_d(&self, lag: usize) -> DVector<f64> {
        self.block(self.layout.x1_offset() + lag * self.layout.m, self.layout.m)
    }

    /// Squared returns at the given lag.
    pub fn z_squared(&self, lag: usize) -> DVector<f64> {
        self.block(self.layout.x2_offset() + lag * self.layout.m, self.layout.m)
    }

    /// Packed `vech(Q)` at the given lag.
    pub fn vech_q(&self, lag: usize) -> DVector<f64> {
        self.block(
            self.layout.x3_offset() + lag * self.layout.m_star,
            self.layout.m_star,
        )
    }

    /// Packed `vech(eps eps')` at the given lag.
    pub fn vech_eps_outer(&self, lag: usize) -> DVector<f64> {
        self.block(
            self.layout.x4_offset() + lag * self.layout.m_star,
            self.layout.m_star,
        )
    }
}

/// One random affine step `x -> transition * x + intercept`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineStep {
    pub transition: DMatrix<f64>,
    pub intercept: DVector<f64>,
}

/// Packs per-lag histories (most recent first) into a state vector.
///
/// `q_hist` entries must be SPD; variance and squared-return entries must be
/// nonnegative; `eps_outer_hist` entries must be symmetric.
pub fn pack_state(
    d_hist: &[DVector<f64>],
    zsq_hist: &[DVector<f64>],
    q_hist: &[DMatrix<f64>],
    eps_outer_hist: &[DMatrix<f64>],
    layout: &StateLayout,
) -> Result<StateVector> {
    if d_hist.len() != layout.r
        || zsq_hist.len() != layout.s
        || q_hist.len() != layout.nu
        || eps_outer_hist.len() != layout.mu
    {
        return Err(Error::Dimension(format!(
            "history lengths ({}, {}, {}, {}) do not match orders ({}, {}, {}, {})",
            d_hist.len(),
            zsq_hist.len(),
            q_hist.len(),
            eps_outer_hist.len(),
            layout.r,
            layout.s,
            layout.nu,
            layout.mu
        )));
    }
    let mut data = DVector::zeros(layout.dim());
    let mut write_vec = |offset: usize, v: &DVector<f64>, len: usize, what: &str| -> Result<()> {
        if v.len() != len {
            return Err(Error::Dimension(format!("{what} has length {}, expected {len}", v.len())));
        }
        data.rows_mut(offset, len).copy_from(v);
        Ok(())
    };
    for (i, v) in d_hist.iter().enumerate() {
        if v.iter().any(|x| *x < 0.0) {
            return Err(Error::Domain(format!("variance history at lag {i} has negative entries")));
        }
        write_vec(layout.x1_offset() + i * layout.m, v, layout.m, "variance history entry")?;
    }
    for (j, v) in zsq_hist.iter().enumerate() {
        if v.iter().any(|x| *x < 0.0) {
            return Err(Error::Domain(format!("squared-return history at lag {j} has negative entries")));
        }
        write_vec(layout.x2_offset() + j * layout.m, v, layout.m, "squared-return history entry")?;
    }
    for (k, q) in q_hist.iter().enumerate() {
        if q.nrows() != layout.m || q.ncols() != layout.m {
            return Err(Error::Dimension(format!("Q history at lag {k} is not {0}x{0}", layout.m)));
        }
        if matrix::lambda_min_sym(q)? <= 0.0 {
            return Err(Error::Domain(format!("Q history at lag {k} is not positive definite")));
        }
        let v = matrix::vech(q)?;
        write_vec(layout.x3_offset() + k * layout.m_star, &v, layout.m_star, "Q history entry")?;
    }
    for (l, e) in eps_outer_hist.iter().enumerate() {
        if e.nrows() != layout.m || e.ncols() != layout.m {
            return Err(Error::Dimension(format!(
                "residual outer product at lag {l} is not {0}x{0}",
                layout.m
            )));
        }
        let v = matrix::vech(e)?;
        write_vec(layout.x4_offset() + l * layout.m_star, &v, layout.m_star, "residual history entry")?;
    }
    Ok(StateVector { layout: *layout, data })
}

/// Inverse of [`pack_state`]; `Q` and residual blocks come back as matrices.
#[allow(clippy::type_complexity)]
pub fn unpack_state(
    state: &StateVector,
) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
    let l = &state.layout;
    let d_hist = (0..l.r).map(|i| state.vecd_d(i)).collect();
    let zsq_hist = (0..l.s).map(|j| state.z_squared(j)).collect();
    let q_hist = (0..l.nu)
        .map(|k| matrix::unvech(&state.vech_q(k)))
        .collect::<Result<Vec<_>>>()?;
    let eps_hist = (0..l.mu)
        .map(|k| matrix::unvech(&state.vech_eps_outer(k)))
        .collect::<Result<Vec<_>>>()?;
    Ok((d_hist, zsq_hist, q_hist, eps_hist))
}

/// Companion matrix with the given top-row blocks and identity subdiagonal.
fn companion(blocks: &[DMatrix<f64>], block_dim: usize) -> DMatrix<f64> {
    let n = blocks.len();
    let mut out = DMatrix::zeros(n * block_dim, n * block_dim);
    for (k, blk) in blocks.iter().enumerate() {
        out.view_mut((0, k * block_dim), (block_dim, block_dim)).copy_from(blk);
    }
    for k in 1..n {
        out.view_mut((k * block_dim, (k - 1) * block_dim), (block_dim, block_dim))
            .fill_with_identity();
    }
    out
}

/// Scales the rows of `mat` by the entries of `v` (the `v (.) M` action).
fn row_scale(v: &DVector<f64>, mat: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = mat.clone();
    for i in 0..out.nrows() {
        let f = v[i];
        for j in 0..out.ncols() {
            out[(i, j)] *= f;
        }
    }
    out
}

fn congruence_lifts(mats: &[DMatrix<f64>], idx: &SymIndexMap) -> Result<Vec<DMatrix<f64>>> {
    mats.iter().map(|m| matrix::lift_congruence(m, idx)).collect()
}

/// Assembles the random affine step for a given standardized residual.
///
/// Zero blocks of the transition are exactly: rows of `X^(1)` against the
/// packed blocks, rows of `X^(2)` against the packed blocks, rows of `X^(3)`
/// and `X^(4)` against the variance/return blocks, and the rows of `X^(4)`
/// against `X^(3)`.
pub fn build_affine_step(spec: &DccSpec, eps: &DVector<f64>) -> Result<AffineStep> {
    let layout = StateLayout::of(spec);
    if eps.len() != layout.m {
        return Err(Error::Dimension(format!(
            "residual has length {}, expected {}",
            eps.len(),
            layout.m
        )));
    }
    if eps.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("residual has non-finite entries".into()));
    }
    let eps_sq = eps.component_mul(eps);
    let idx = SymIndexMap::new(layout.m);
    let m = layout.m;
    let ms = layout.m_star;
    let d = layout.dim();
    let (x1, x2, x3, x4) = (
        layout.x1_offset(),
        layout.x2_offset(),
        layout.x3_offset(),
        layout.x4_offset(),
    );

    let mut t = DMatrix::zeros(d, d);

    // variance rows: companion in A with the B row feeding from X^(2)
    if layout.r > 0 {
        t.view_mut((x1, x1), (layout.r * m, layout.r * m))
            .copy_from(&companion(&spec.a, m));
        for (j, bj) in spec.b.iter().enumerate() {
            t.view_mut((x1, x2 + j * m), (m, m)).copy_from(bj);
        }
    }

    // squared-return rows: the same recursion scaled by eps^2, with its own shift
    if layout.s > 0 {
        for (i, ai) in spec.a.iter().enumerate() {
            t.view_mut((x2, x1 + i * m), (m, m)).copy_from(&row_scale(&eps_sq, ai));
        }
        for (j, bj) in spec.b.iter().enumerate() {
            t.view_mut((x2, x2 + j * m), (m, m)).copy_from(&row_scale(&eps_sq, bj));
        }
        for j in 1..layout.s {
            t.view_mut((x2 + j * m, x2 + (j - 1) * m), (m, m)).fill_with_identity();
        }
    }

    // packed Q rows: companion in the congruence lifts, N-lifts feeding from X^(4)
    if layout.nu > 0 {
        let m_lifts = congruence_lifts(&spec.m_mats, &idx)?;
        t.view_mut((x3, x3), (layout.nu * ms, layout.nu * ms))
            .copy_from(&companion(&m_lifts, ms));
        let n_lifts = congruence_lifts(&spec.n_mats, &idx)?;
        for (l, nl) in n_lifts.iter().enumerate() {
            t.view_mut((x3, x4 + l * ms), (ms, ms)).copy_from(nl);
        }
    }

    // packed residual rows: pure shift
    if layout.mu > 0 {
        for l in 1..layout.mu {
            t.view_mut((x4 + l * ms, x4 + (l - 1) * ms), (ms, ms)).fill_with_identity();
        }
    }

    let mut zeta = DVector::zeros(d);
    if layout.r > 0 {
        zeta.rows_mut(x1, m).copy_from(&spec.v0);
    }
    if layout.s > 0 {
        zeta.rows_mut(x2, m).copy_from(&eps_sq.component_mul(&spec.v0));
    }
    if layout.nu > 0 {
        zeta.rows_mut(x3, ms).copy_from(&matrix::vech(&spec.w0)?);
    }
    if layout.mu > 0 {
        let outer = eps * eps.transpose();
        zeta.rows_mut(x4, ms).copy_from(&matrix::vech(&outer)?);
    }

    Ok(AffineStep { transition: t, intercept: zeta })
}

/// Deterministic transition bound: the affine step evaluated at a unit
/// residual, with every entry replaced by its absolute value. Its spectral
/// radius below one is the existence criterion at first order.
pub fn build_t_star(spec: &DccSpec) -> Result<DMatrix<f64>> {
    let ones = DVector::from_element(spec.m, 1.0);
    let step = build_affine_step(spec, &ones)?;
    Ok(step.transition.map(f64::abs))
}

/// Mean transition of the variance/return blocks (unit residual expectation);
/// spectral radius below one is the volatility-side uniqueness criterion.
pub fn build_t_bar_star(spec: &DccSpec) -> Result<DMatrix<f64>> {
    let ones = DVector::from_element(spec.m, 1.0);
    let step = build_affine_step(spec, &ones)?;
    let n = (spec.r() + spec.s()) * spec.m;
    Ok(step.transition.view((0, 0), (n, n)).into_owned())
}

/// Time-invariant transition of the packed `Q` block: the companion matrix
/// of the congruence lifts.
pub fn build_t33(spec: &DccSpec) -> Result<DMatrix<f64>> {
    let idx = SymIndexMap::new(spec.m);
    let lifts = congruence_lifts(&spec.m_mats, &idx)?;
    Ok(companion(&lifts, spec.m_star()))
}

/// Scalar companion of the `Q`-autoregression coefficients `(m^(k))^2`.
/// Requires every `M_k` to be a scalar multiple of the identity.
pub fn build_m_star(spec: &DccSpec) -> Result<DMatrix<f64>> {
    let coefs = partial_scalar_m_coefs(spec).ok_or_else(|| {
        Error::Structure("Q-autoregression matrices are not scalar multiples of the identity".into())
    })?;
    let blocks: Vec<DMatrix<f64>> = coefs
        .iter()
        .map(|c| DMatrix::from_element(1, 1, c * c))
        .collect();
    Ok(companion(&blocks, 1))
}

/// One sample of the contraction companion matrix driving the uniqueness
/// argument. Top row entries are
/// `beta_j = [j <= nu] |M_j|_s^2
///         + [j <= mu] |N_j|_s^2 * 4 (2m+1) sqrt(m) / (sqrt(c_lambda) c_q)
///           * |eta|^2 * sqrt(q)`.
pub fn build_n_star_sample(
    spec: &DccSpec,
    eta_norm_sq: f64,
    q_t: f64,
    constants: &BoundConstants,
) -> Result<DMatrix<f64>> {
    let betas = n_star_top_row(spec, eta_norm_sq, q_t, constants)?;
    let blocks: Vec<DMatrix<f64>> = betas
        .iter()
        .map(|b| DMatrix::from_element(1, 1, *b))
        .collect();
    Ok(companion(&blocks, 1))
}

/// Top row of [`build_n_star_sample`] without assembling the matrix.
pub fn n_star_top_row(
    spec: &DccSpec,
    eta_norm_sq: f64,
    q_t: f64,
    constants: &BoundConstants,
) -> Result<Vec<f64>> {
    if !(eta_norm_sq >= 0.0) || !(q_t >= 0.0) {
        return Err(Error::Domain(format!(
            "eta_norm_sq = {eta_norm_sq} and q_t = {q_t} must be nonnegative"
        )));
    }
    if !(constants.c_lambda > 0.0) || !(constants.c_q > 0.0) {
        return Err(Error::Domain(format!(
            "constants must be strictly positive, got c_lambda = {}, c_q = {}",
            constants.c_lambda, constants.c_q
        )));
    }
    let kappa = spec.nu().max(spec.mu());
    let mult = contraction_multiplier(spec.m, constants);
    let factor = mult * eta_norm_sq * q_t.sqrt();
    Ok((1..=kappa)
        .map(|j| {
            let mut beta = 0.0;
            if j <= spec.nu() {
                beta += matrix::norm_spectral(&spec.m_mats[j - 1]).powi(2);
            }
            if j <= spec.mu() {
                beta += matrix::norm_spectral(&spec.n_mats[j - 1]).powi(2) * factor;
            }
            beta
        })
        .collect())
}

/// The dimension-dependent factor `4 (2m+1) sqrt(m) / (sqrt(c_lambda) c_q)`.
pub fn contraction_multiplier(m: usize, constants: &BoundConstants) -> f64 {
    4.0 * (2.0 * m as f64 + 1.0) * (m as f64).sqrt() / (constants.c_lambda.sqrt() * constants.c_q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{norm_max, norm_spectral, spectral_radius};
    use crate::model::{build_scalar, reference_bivariate};
    use crate::stationarity::compute_constants;
    use nalgebra::DMatrix;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn layout_2211() -> StateLayout {
        StateLayout { m: 2, m_star: 3, r: 1, s: 1, nu: 1, mu: 1 }
    }

    #[test]
    fn layout_dimension_example() {
        let l = layout_2211();
        assert_eq!(l.dim(), 2 + 2 + 3 + 3);
        assert_eq!(
            (l.x1_offset(), l.x2_offset(), l.x3_offset(), l.x4_offset()),
            (0, 2, 4, 7)
        );
    }

    #[test]
    fn pack_unpack_roundtrip() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let layout = StateLayout { m: 2, m_star: 3, r: 2, s: 1, nu: 2, mu: 1 };
        let rand_pos = |rng: &mut ChaCha12Rng| {
            DVector::from_fn(2, |_, _| rng.gen_range(0.01..2.0))
        };
        let rand_spd = |rng: &mut ChaCha12Rng| {
            let a = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
            &a * a.transpose() + DMatrix::identity(2, 2) * 0.3
        };
        let d_hist = vec![rand_pos(&mut rng), rand_pos(&mut rng)];
        let z_hist = vec![rand_pos(&mut rng)];
        let q_hist = vec![rand_spd(&mut rng), rand_spd(&mut rng)];
        let eps = DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
        let e_hist = vec![&eps * eps.transpose()];

        let state = pack_state(&d_hist, &z_hist, &q_hist, &e_hist, &layout).unwrap();
        let (d2, z2, q2, e2) = unpack_state(&state).unwrap();
        let repacked = pack_state(&d2, &z2, &q2, &e2, &layout).unwrap();
        assert_eq!(state, repacked);
        assert_eq!(d_hist, d2);
        assert_eq!(z_hist, z2);
    }

    #[test]
    fn pack_rejects_bad_histories() {
        let layout = layout_2211();
        let ok_v = DVector::from_element(2, 0.5);
        let id = DMatrix::<f64>::identity(2, 2);
        // wrong history length
        assert!(pack_state(&[], &[ok_v.clone()], &[id.clone()], &[id.clone()], &layout).is_err());
        // negative variance entry
        let neg = DVector::from_column_slice(&[0.5, -0.1]);
        assert!(pack_state(&[neg], &[ok_v.clone()], &[id.clone()], &[id.clone()], &layout).is_err());
        // non-SPD Q
        let bad_q = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(pack_state(&[ok_v.clone()], &[ok_v.clone()], &[bad_q], &[id.clone()], &layout).is_err());
    }

    #[test]
    fn zero_histories_with_identity_q() {
        let layout = layout_2211();
        let zero = DVector::zeros(2);
        let id = DMatrix::<f64>::identity(2, 2);
        let state = pack_state(&[zero.clone()], &[zero], &[id], &[DMatrix::zeros(2, 2)], &layout).unwrap();
        assert_eq!(state.vech_q(0).as_slice(), &[1.0, 0.0, 1.0]);
        assert_eq!(state.vech_eps_outer(0).as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn unit_residual_recovers_t_star_for_nonnegative_specs() {
        let spec = reference_bivariate(0.999, 3.0f64.sqrt());
        let ones = DVector::from_element(2, 1.0);
        let step = build_affine_step(&spec, &ones).unwrap();
        let t_star = build_t_star(&spec).unwrap();
        assert_eq!(step.transition, t_star);
    }

    #[test]
    fn scalar_order_one_t33_block() {
        let spec = reference_bivariate(0.999, 1.0);
        let t33 = build_t33(&spec).unwrap();
        let coef = 0.999f64.sqrt().powi(2);
        assert!(norm_max(&(t33.clone() - DMatrix::identity(3, 3) * coef)) < 1e-15);
        assert!((norm_spectral(&t33) - coef).abs() < 1e-12);
    }

    #[test]
    fn sparsity_pattern_matches_block_structure() {
        let w0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.0]);
        let spec = build_scalar(2, &[0.3, 0.1], &[0.2, 0.05], &[0.5, 0.2], &[0.4, 0.1], 0.5, w0).unwrap();
        let layout = StateLayout::of(&spec);
        let eps = DVector::from_column_slice(&[0.7, -1.3]);
        let step = build_affine_step(&spec, &eps).unwrap();
        let t = &step.transition;
        let (x1, x2, x3, x4) = (
            layout.x1_offset(),
            layout.x2_offset(),
            layout.x3_offset(),
            layout.x4_offset(),
        );
        let d = layout.dim();
        let block_is_zero = |r0: usize, r1: usize, c0: usize, c1: usize| -> bool {
            (r0..r1).all(|i| (c0..c1).all(|j| t[(i, j)] == 0.0))
        };
        // variance and return rows never read the packed blocks
        assert!(block_is_zero(x1, x2, x3, d));
        assert!(block_is_zero(x2, x3, x3, d));
        // packed rows never read the variance/return blocks
        assert!(block_is_zero(x3, d, 0, x3));
        // residual rows never read the Q block, and shift only
        assert!(block_is_zero(x4, d, x3, x4));
        let t44 = t.view((x4, x4), (d - x4, d - x4)).into_owned();
        assert!(spectral_radius(&t44).unwrap() < 1e-12);
    }

    #[test]
    fn t_star_radius_examples() {
        let spec = reference_bivariate(0.999, 3.0f64.sqrt());
        let rho = spectral_radius(&build_t_star(&spec).unwrap()).unwrap();
        assert!((rho - 0.999).abs() < 1e-10, "rho = {rho}");

        let w0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let zero = build_scalar(2, &[0.0], &[0.0], &[0.0], &[0.0], 0.25, w0.clone()).unwrap();
        assert!(spectral_radius(&build_t_star(&zero).unwrap()).unwrap() < 1e-12);

        let vol_only = build_scalar(2, &[0.8], &[0.1], &[0.0], &[0.0], 0.25, w0).unwrap();
        let rho = spectral_radius(&build_t_star(&vol_only).unwrap()).unwrap();
        assert!((rho - 0.9).abs() < 1e-10, "rho = {rho}");
    }

    #[test]
    fn t_star_radius_ignores_n_loading() {
        for n in [0.0, 1.0, 3.0f64.sqrt(), 3.0] {
            let spec = reference_bivariate(0.999, n);
            let rho = spectral_radius(&build_t_star(&spec).unwrap()).unwrap();
            assert!((rho - 0.999).abs() < 1e-10);
        }
    }

    #[test]
    fn t_bar_star_examples() {
        let spec = reference_bivariate(0.999, 1.0);
        let tbar = build_t_bar_star(&spec).unwrap();
        // scalar order one: [[a, b], [a, b]] (x) I_m
        let a = DMatrix::from_row_slice(2, 2, &[0.8, 0.1, 0.8, 0.1]);
        let expect = a.kronecker(&DMatrix::identity(2, 2));
        assert!(norm_max(&(tbar.clone() - expect)) < 1e-15);
        assert!((spectral_radius(&tbar).unwrap() - 0.9).abs() < 1e-12);

        let w0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let quiet = build_scalar(2, &[0.0], &[0.0], &[0.5], &[0.5], 0.25, w0).unwrap();
        assert!(spectral_radius(&build_t_bar_star(&quiet).unwrap()).unwrap() < 1e-12);
    }

    #[test]
    fn m_star_companion() {
        let w0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.0]);
        let spec = build_scalar(
            2,
            &[0.1],
            &[0.1],
            &[0.5f64.sqrt(), 0.3f64.sqrt()],
            &[0.1],
            0.5,
            w0,
        )
        .unwrap();
        let m_star = build_m_star(&spec).unwrap();
        assert_eq!(m_star.nrows(), 2);
        assert!((m_star[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((m_star[(0, 1)] - 0.3).abs() < 1e-15);
        assert_eq!(m_star[(1, 0)], 1.0);
        let rho = spectral_radius(&m_star).unwrap();
        assert!(rho < 1.0, "rho = {rho}");

        let mut general = reference_bivariate(0.999, 1.0);
        general.m_mats[0][(0, 1)] = 0.2;
        assert!(matches!(build_m_star(&general), Err(Error::Structure(_))));
    }

    #[test]
    fn n_star_multiplier_and_edge_cases() {
        let spec = reference_bivariate(0.999, 3.0f64.sqrt());
        let constants = compute_constants(&spec).unwrap();
        let mult = contraction_multiplier(2, &constants);
        assert!((mult - 40.0).abs() < 1e-12, "multiplier = {mult}");

        // no N loading: deterministic top row made of |M_j|_s^2
        let w0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let no_n = build_scalar(2, &[0.1], &[0.1], &[0.7], &[0.0], 0.25, w0).unwrap();
        let c = compute_constants(&no_n).unwrap();
        let n1 = build_n_star_sample(&no_n, 5.0, 7.0, &c).unwrap();
        let n2 = build_n_star_sample(&no_n, 0.1, 0.3, &c).unwrap();
        assert_eq!(n1, n2);
        assert_eq!(n1.nrows(), 1);
        assert!((n1[(0, 0)] - 0.49).abs() < 1e-12);

        assert!(build_n_star_sample(&spec, -1.0, 1.0, &constants).is_err());
        let bad = BoundConstants { c_lambda: 0.0, c_q: 1.0, c_lambda_star: None, c_q_star: None };
        assert!(build_n_star_sample(&spec, 1.0, 1.0, &bad).is_err());
    }

    #[test]
    fn scalar_radius_matches_companion_factorization() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let w0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]);
        for _ in 0..20 {
            let r = rng.gen_range(1..=2);
            let s = rng.gen_range(1..=2);
            let nu = rng.gen_range(1..=2);
            let mu = rng.gen_range(1..=2);
            let a: Vec<f64> = (0..r).map(|_| rng.gen_range(0.0..0.5)).collect();
            let b: Vec<f64> = (0..s).map(|_| rng.gen_range(0.0..0.4)).collect();
            let mc: Vec<f64> = (0..nu).map(|_| rng.gen_range(-0.7..0.7)).collect();
            let nc: Vec<f64> = (0..mu).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let spec = build_scalar(2, &a, &b, &mc, &nc, 0.25, w0.clone()).unwrap();

            // volatility factor: companion with coefficients a_k + b_k
            let deg = r.max(s);
            let mut vol = DMatrix::zeros(deg, deg);
            for k in 0..deg {
                let mut c = 0.0;
                if k < r {
                    c += a[k];
                }
                if k < s {
                    c += b[k];
                }
                vol[(0, k)] = c;
            }
            for i in 1..deg {
                vol[(i, i - 1)] = 1.0;
            }
            // correlation factor: companion with coefficients (m^(k))^2
            let mut corr = DMatrix::zeros(nu, nu);
            for k in 0..nu {
                corr[(0, k)] = mc[k] * mc[k];
            }
            for i in 1..nu {
                corr[(i, i - 1)] = 1.0;
            }
            let expect = spectral_radius(&vol)
                .unwrap()
                .max(spectral_radius(&corr).unwrap());
            let rho = spectral_radius(&build_t_star(&spec).unwrap()).unwrap();
            assert!(
                (rho - expect).abs() < 1e-10,
                "rho = {rho}, factorized = {expect}"
            );
        }
    }

    /// The conditional mean of the random transition equals the unit-residual
    /// transition whatever correlation the residuals carry.
    #[test]
    fn monte_carlo_mean_transition_matches_base() {
        let spec = reference_bivariate(0.5, 0.8);
        let ones = DVector::from_element(2, 1.0);
        let base = build_affine_step(&spec, &ones).unwrap().transition;

        let r = DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 1.0]);
        let root = crate::matrix::sqrt_sym_psd(&r).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let n = 100_000;
        let d = base.nrows();
        let mut sum = DMatrix::zeros(d, d);
        let mut sum_sq = DMatrix::zeros(d, d);
        for _ in 0..n {
            let eta = DVector::from_fn(2, |_, _| {
                rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng)
            });
            let eps = &root * eta;
            let t = build_affine_step(&spec, &eps).unwrap().transition;
            sum += &t;
            sum_sq += t.component_mul(&t);
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean.component_mul(&mean);
        for i in 0..d {
            for j in 0..d {
                let se = (var[(i, j)].max(0.0) / n as f64).sqrt();
                let dev = (mean[(i, j)] - base[(i, j)]).abs();
                // the absolute slack absorbs summation drift on constant entries
                assert!(
                    dev <= 3.0 * se + 1e-9,
                    "entry ({i},{j}): dev {dev:.3e} vs se {se:.3e}"
                );
            }
        }
    }
}
