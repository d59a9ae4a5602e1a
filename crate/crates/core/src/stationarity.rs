//! Sufficient conditions for existence and uniqueness of strictly stationary
//! DCC solutions, together with the bound processes and Monte Carlo
//! estimators they rely on.
//!
//! All deterministic criteria are open conditions checked with strict
//! inequalities and no tolerance slack; Monte Carlo criteria pass only with a
//! two-standard-error margin. A failed criterion never means "nonstationary",
//! only that no sufficient condition was verified.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain;
use crate::error::{Error, Result};
use crate::innovations::InnovationSpec;
use crate::matrix;
use crate::model::{self, DccSpec, ModelStructure, StructureKind};

/// Floors extracted from the correlation-driver intercept: `c_lambda` is its
/// smallest eigenvalue, `c_q` its smallest diagonal entry. The starred
/// variants divide by `1 - sum (m^(k))^2` and exist only when the
/// `Q`-autoregression is scalar with summed squares below one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundConstants {
    pub c_lambda: f64,
    pub c_q: f64,
    pub c_lambda_star: Option<f64>,
    pub c_q_star: Option<f64>,
}

impl BoundConstants {
    /// Constants with the starred values in the driving position, for the
    /// sharpened contraction criterion of partially scalar models.
    pub fn starred(&self) -> Result<BoundConstants> {
        match (self.c_lambda_star, self.c_q_star) {
            (Some(cl), Some(cq)) => Ok(BoundConstants {
                c_lambda: cl,
                c_q: cq,
                c_lambda_star: Some(cl),
                c_q_star: Some(cq),
            }),
            _ => Err(Error::Structure(
                "starred constants need a scalar Q-autoregression with summed squares below one".into(),
            )),
        }
    }
}

/// Computes the bound constants from a spec with an SPD intercept.
pub fn compute_constants(spec: &DccSpec) -> Result<BoundConstants> {
    let w0 = spec.w0_spd()?;
    let c_lambda = w0.lambda_min();
    let c_q = (0..spec.m)
        .map(|i| spec.w0[(i, i)])
        .fold(f64::INFINITY, f64::min);
    let starred = model::partial_scalar_m_coefs(spec).and_then(|coefs| {
        let sum_sq: f64 = coefs.iter().map(|c| c * c).sum();
        (sum_sq < 1.0).then(|| 1.0 - sum_sq)
    });
    Ok(BoundConstants {
        c_lambda,
        c_q,
        c_lambda_star: starred.map(|gap| c_lambda / gap),
        c_q_star: starred.map(|gap| c_q / gap),
    })
}

/// Operator norm used by the norm-sum existence criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixNorm {
    /// Maximum absolute row sum; cheap and exact.
    #[default]
    InducedInf,
    /// Largest singular value.
    Spectral,
}

fn op_norm(mat: &DMatrix<f64>, norm: MatrixNorm) -> f64 {
    match norm {
        MatrixNorm::InducedInf => matrix::norm_induced_inf(mat),
        MatrixNorm::Spectral => matrix::norm_spectral(mat),
    }
}

/// Norm-sum existence criterion: the volatility matrices and the congruence
/// lifts must each sum to less than one in the chosen operator norm. The
/// residual-loading matrices play no role here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormCheck {
    pub vol_sum: f64,
    pub corr_sum: f64,
    pub norm: MatrixNorm,
    pub pass: bool,
}

pub fn check_existence_norms(spec: &DccSpec, norm: MatrixNorm) -> Result<NormCheck> {
    let vol_sum = spec
        .a
        .iter()
        .chain(spec.b.iter())
        .map(|mat| op_norm(mat, norm))
        .sum::<f64>();
    let idx = matrix::SymIndexMap::new(spec.m);
    let corr_sum = spec
        .m_mats
        .iter()
        .map(|mat| matrix::lift_congruence(mat, &idx).map(|l| op_norm(&l, norm)))
        .sum::<Result<f64>>()?;
    Ok(NormCheck {
        vol_sum,
        corr_sum,
        norm,
        pass: vol_sum < 1.0 && corr_sum < 1.0,
    })
}

/// Spectral-radius existence criterion at first order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralCheck {
    pub rho: f64,
    pub pass: bool,
}

pub fn check_existence_spectral_p1(spec: &DccSpec) -> Result<SpectralCheck> {
    let rho = matrix::spectral_radius(&chain::build_t_star(spec)?)?;
    Ok(SpectralCheck { rho, pass: rho < 1.0 })
}

/// Margin-wise existence criterion for diagonal models: per-margin volatility
/// coefficient sums and per-component lifted autoregression sums, each with
/// supremum below one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagonalCheck {
    pub margin_sums: Vec<f64>,
    pub lift_sums: Vec<f64>,
    pub pass: bool,
}

pub fn check_existence_diagonal(spec: &DccSpec) -> Result<DiagonalCheck> {
    let st = model::detect_structure(spec);
    if !matches!(st.kind, StructureKind::Scalar | StructureKind::Diagonal) {
        return Err(Error::Structure(
            "margin-wise criterion applies to diagonal or scalar models only".into(),
        ));
    }
    let m = spec.m;
    let margin_sums: Vec<f64> = (0..m)
        .map(|k| {
            spec.a.iter().map(|mat| mat[(k, k)]).sum::<f64>()
                + spec.b.iter().map(|mat| mat[(k, k)]).sum::<f64>()
        })
        .collect();
    let idx = matrix::SymIndexMap::new(m);
    let lift_sums: Vec<f64> = (0..spec.m_star())
        .map(|l| {
            let (i, j) = idx.pair(l).expect("index in range");
            spec.m_mats
                .iter()
                .map(|mat| (mat[(i, i)] * mat[(j, j)]).abs())
                .sum::<f64>()
        })
        .collect();
    let sup_margin = margin_sums.iter().fold(0.0f64, |a, x| a.max(*x));
    let sup_lift = lift_sums.iter().fold(0.0f64, |a, x| a.max(*x));
    Ok(DiagonalCheck {
        margin_sums,
        lift_sums,
        pass: sup_margin < 1.0 && sup_lift < 1.0,
    })
}

/// Geometric forgetting horizon for the squared-innovation filter:
/// `max(1000, 10 / (1 - |T33|_s))`.
pub fn default_burn_in(t33_norm: f64) -> usize {
    if t33_norm >= 1.0 {
        return usize::MAX;
    }
    let horizon = (10.0 / (1.0 - t33_norm)).ceil() as usize;
    horizon.max(1000)
}

/// Output of [`xi_process`]: the filtered series after burn-in, with the
/// residual initialization bias bound.
#[derive(Debug, Clone, PartialEq)]
pub struct XiSeries {
    pub values: Vec<f64>,
    pub t33_norm: f64,
    /// Scale of the initialization transient remaining after burn-in.
    pub truncation_bound: f64,
    /// Set when the contraction factor exceeds 0.99 and mixing is slow.
    pub near_unit_warning: bool,
}

/// Geometric filter of squared innovation norms:
/// `xi_t = |T33|_s xi_{t-1} + |eta_t|^2`, started at its stationary mean
/// `m / (1 - |T33|_s)`; the first `burn_in` outputs are discarded.
pub fn xi_process(spec: &DccSpec, eta_norm_sq: &[f64], burn_in: usize) -> Result<XiSeries> {
    let t33_norm = matrix::norm_spectral(&chain::build_t33(spec)?);
    if t33_norm >= 1.0 {
        return Err(Error::Domain(format!(
            "squared-innovation filter diverges: |T33|_s = {t33_norm} >= 1"
        )));
    }
    let init = spec.m as f64 / (1.0 - t33_norm);
    let mut xi = init;
    let mut values = Vec::with_capacity(eta_norm_sq.len().saturating_sub(burn_in));
    for (t, nsq) in eta_norm_sq.iter().enumerate() {
        xi = t33_norm * xi + nsq;
        if t >= burn_in {
            values.push(xi);
        }
    }
    Ok(XiSeries {
        values,
        t33_norm,
        truncation_bound: t33_norm.powi(burn_in.min(i32::MAX as usize) as i32) * init,
        near_unit_warning: t33_norm > 0.99,
    })
}

fn q_bound_terms(spec: &DccSpec) -> Result<(f64, f64, Vec<f64>)> {
    let t33_norm = matrix::norm_spectral(&chain::build_t33(spec)?);
    if t33_norm >= 1.0 {
        return Err(Error::Domain(format!(
            "driver bound requires |T33|_s < 1, got {t33_norm}"
        )));
    }
    let w0_vech = matrix::vech(&spec.w0)?;
    let base = w0_vech.norm() / (1.0 - t33_norm);
    let m = spec.m as f64;
    let prefactor = (m.powi(3) * (m + 1.0) / 2.0).sqrt();
    let idx = matrix::SymIndexMap::new(spec.m);
    let n_lift_norms = spec
        .n_mats
        .iter()
        .map(|n| matrix::lift_congruence(n, &idx).map(|l| matrix::norm_spectral(&l)))
        .collect::<Result<Vec<f64>>>()?;
    Ok((base, prefactor, n_lift_norms))
}

/// Almost-sure upper bound on `|Q_t|_max` driven by the filtered series:
/// `q_t = |vech(W0)|_2 / (1 - |T33|_s)
///       + sqrt(m^3 (m+1) / 2) * sum_l |lift(N_l)|_s xi_{t-l}`.
///
/// Entry `i` of the output is the bound for the time of `xi[i + mu]`, so it
/// only uses lagged filter values.
pub fn q_bound_process(spec: &DccSpec, xi: &[f64]) -> Result<Vec<f64>> {
    let (base, prefactor, n_lift_norms) = q_bound_terms(spec)?;
    let mu = spec.mu();
    if xi.len() < mu {
        return Ok(Vec::new());
    }
    Ok((mu..=xi.len().saturating_sub(1).max(mu).min(xi.len()))
        .take(xi.len() - mu)
        .map(|t| {
            base + prefactor
                * n_lift_norms
                    .iter()
                    .enumerate()
                    .map(|(l, norm)| norm * xi[t - 1 - l])
                    .sum::<f64>()
        })
        .collect())
}

/// Constant driver bound when the innovations are bounded by `eta_bound`:
/// the filtered series is then at most `eta_bound^2 / (1 - |T33|_s)`.
pub fn q_bound_constant(spec: &DccSpec, eta_bound: f64) -> Result<f64> {
    if !(eta_bound >= 0.0) {
        return Err(Error::Domain(format!("eta_bound = {eta_bound} must be nonnegative")));
    }
    let t33_norm = matrix::norm_spectral(&chain::build_t33(spec)?);
    if t33_norm >= 1.0 {
        return Err(Error::Domain(format!(
            "driver bound requires |T33|_s < 1, got {t33_norm}"
        )));
    }
    let w0_vech = matrix::vech(&spec.w0)?;
    let m = spec.m as f64;
    let prefactor = (m.powi(3) * (m + 1.0) / 2.0).sqrt();
    let idx = matrix::SymIndexMap::new(spec.m);
    let n_sum = spec
        .n_mats
        .iter()
        .map(|n| matrix::lift_congruence(n, &idx).map(|l| matrix::norm_spectral(&l)))
        .sum::<Result<f64>>()?;
    let c_eta_sq = eta_bound * eta_bound * spec.m as f64;
    Ok((w0_vech.norm() + prefactor * n_sum * c_eta_sq) / (1.0 - t33_norm))
}

/// Running driver-bound chain fed by one innovation stream.
struct QBoundChain {
    t33_norm: f64,
    base: f64,
    weighted_lift_norms: Vec<f64>,
    xi_lags: VecDeque<f64>,
}

impl QBoundChain {
    fn new(spec: &DccSpec) -> Result<Self> {
        let (base, prefactor, n_lift_norms) = q_bound_terms(spec)?;
        let t33_norm = matrix::norm_spectral(&chain::build_t33(spec)?);
        let init = spec.m as f64 / (1.0 - t33_norm);
        let lags = spec.mu().max(1);
        Ok(Self {
            t33_norm,
            base,
            weighted_lift_norms: n_lift_norms.iter().map(|n| prefactor * n).collect(),
            xi_lags: VecDeque::from(vec![init; lags]),
        })
    }

    /// Bound for the current step (lagged filter values only), then absorbs
    /// the new squared innovation norm.
    fn step(&mut self, eta_norm_sq: f64) -> f64 {
        let q = self.base
            + self
                .weighted_lift_norms
                .iter()
                .zip(self.xi_lags.iter())
                .map(|(w, xi)| w * xi)
                .sum::<f64>();
        let xi_next = self.t33_norm * self.xi_lags[0] + eta_norm_sq;
        self.xi_lags.push_front(xi_next);
        self.xi_lags.pop_back();
        q
    }
}

/// Monte Carlo estimate of the top Lyapunov exponent of the contraction
/// companion sequence, with renormalized matrix products.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovEstimate {
    /// Per-step log growth rate (nats per step).
    pub gamma_hat: f64,
    /// Standard error across replications.
    pub std_error: f64,
    pub horizon: usize,
    pub replications: usize,
    /// Number of product renormalizations across all replications.
    pub rescale_count: usize,
    /// Sample mean of `ln |N*_t|_s`, an upper bound for the exponent.
    pub single_step_bound: f64,
    /// Whether the sharpened (starred) constants were used.
    pub starred_constants: bool,
    /// `gamma_hat + 2 std_error < 0`.
    pub pass: bool,
}

/// Estimates the top Lyapunov exponent of the random companion matrices by
/// accumulating log-norms of renormalized products over independent
/// replications. The `seed` overrides the innovation spec's own seed;
/// replication `i` runs on stream `innovations.stream + i`.
pub fn estimate_lyapunov_n(
    spec: &DccSpec,
    innovations: &InnovationSpec,
    horizon: usize,
    replications: usize,
    seed: u64,
    parallelism: usize,
) -> Result<LyapunovEstimate> {
    if horizon == 0 || replications == 0 {
        return Err(Error::Domain("horizon and replications must be positive".into()));
    }
    if spec.nu().max(spec.mu()) == 0 {
        return Err(Error::Structure(
            "no correlation dynamics: the contraction sequence is empty".into(),
        ));
    }
    let constants = compute_constants(spec)?;
    let (constants, starred) = match constants.starred() {
        Ok(c) => (c, true),
        Err(_) => (constants, false),
    };
    let t33_norm = matrix::norm_spectral(&chain::build_t33(spec)?);
    if t33_norm >= 1.0 {
        return Err(Error::Domain(format!(
            "driver bound requires |T33|_s < 1, got {t33_norm}"
        )));
    }
    let burn = default_burn_in(t33_norm);

    let run_rep = |rep: usize| -> Result<(f64, f64, usize)> {
        let inn = InnovationSpec { seed, ..*innovations }.offset_stream(rep as u64);
        let mut sampler = inn.sampler(spec.m)?;
        let mut qchain = QBoundChain::new(spec)?;
        for _ in 0..burn {
            qchain.step(sampler.draw_norm_sq());
        }
        let kappa = spec.nu().max(spec.mu());
        let mut product = DMatrix::<f64>::identity(kappa, kappa);
        let mut log_acc = 0.0f64;
        let mut rescales = 0usize;
        let mut step_log_sum = 0.0f64;
        for _ in 0..horizon {
            let eta_norm_sq = sampler.draw_norm_sq();
            let q = qchain.step(eta_norm_sq);
            let n_star = chain::build_n_star_sample(spec, eta_norm_sq, q, &constants)?;
            step_log_sum += matrix::norm_spectral(&n_star).ln();
            product = &n_star * product;
            let scale = matrix::norm_max(&product);
            if !scale.is_finite() {
                return Err(Error::Numeric(
                    "matrix product overflowed despite renormalization".into(),
                ));
            }
            if scale == 0.0 {
                // the product vanished; the exponent is minus infinity
                return Ok((f64::NEG_INFINITY, step_log_sum / horizon as f64, rescales));
            }
            if !(1e-100..=1e100).contains(&scale) {
                log_acc += scale.ln();
                product /= scale;
                rescales += 1;
            }
        }
        let gamma = (log_acc + matrix::norm_spectral(&product).ln()) / horizon as f64;
        Ok((gamma, step_log_sum / horizon as f64, rescales))
    };

    let results: Vec<(f64, f64, usize)> = if parallelism > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .map_err(|e| Error::Numeric(format!("thread pool: {e}")))?;
        pool.install(|| (0..replications).into_par_iter().map(run_rep).collect::<Result<_>>())?
    } else {
        (0..replications).map(run_rep).collect::<Result<_>>()?
    };

    let gammas: Vec<f64> = results.iter().map(|r| r.0).collect();
    let single_step_bound = results.iter().map(|r| r.1).sum::<f64>() / replications as f64;
    let rescale_count = results.iter().map(|r| r.2).sum();
    let (gamma_hat, std_error) = if gammas.iter().any(|g| *g == f64::NEG_INFINITY) {
        (f64::NEG_INFINITY, 0.0)
    } else {
        (mean(&gammas), sd(&gammas) / (replications as f64).sqrt())
    };
    let pass = gamma_hat + 2.0 * std_error < 0.0;
    Ok(LyapunovEstimate {
        gamma_hat,
        std_error,
        horizon,
        replications,
        rescale_count,
        single_step_bound,
        starred_constants: starred,
        pass,
    })
}

/// Monte Carlo verdict on a signed expectation: `pass` iff the estimate is
/// below zero by at least two standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McCheck {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: usize,
    pub pass: bool,
}

/// Evaluates the scalar order-one uniqueness expectation
/// `E[ln((m1)^2 + (n1)^2 * 4 (2m+1) sqrt(m) / (sqrt(c_lambda) c_q)
///        * |eta|^2 sqrt(q))]`
/// by Monte Carlo with the innovation draw and the driver bound taken from
/// independent streams.
pub fn check_uniqueness_scalar(
    spec: &DccSpec,
    innovations: &InnovationSpec,
    samples: usize,
    seed: u64,
) -> Result<McCheck> {
    scalar_uniqueness_core(spec, innovations, samples, seed, false)
}

fn scalar_uniqueness_core(
    spec: &DccSpec,
    innovations: &InnovationSpec,
    samples: usize,
    seed: u64,
    paired: bool,
) -> Result<McCheck> {
    if samples == 0 {
        return Err(Error::Domain("samples must be positive".into()));
    }
    if spec.nu() != 1 || spec.mu() != 1 {
        return Err(Error::Structure(
            "scalar uniqueness expectation requires exactly one Q lag and one residual lag".into(),
        ));
    }
    let m_coef = model::partial_scalar_m_coefs(spec).and_then(|c| c.first().copied());
    let n_coef = model::detect_structure(spec).n_coefs.and_then(|c| c.first().copied());
    let (m1, n1) = match (m_coef, n_coef) {
        (Some(m1), Some(n1)) => (m1, n1),
        _ => {
            return Err(Error::Structure(
                "scalar uniqueness expectation requires scalar M and N matrices".into(),
            ))
        }
    };
    let constants = compute_constants(spec)?;
    let mult = chain::contraction_multiplier(spec.m, &constants);
    let m1_sq = m1 * m1;
    let n1_sq = n1 * n1;

    let mut q_sampler = InnovationSpec { seed, ..*innovations }.sampler(spec.m)?;
    let mut eta_sampler = InnovationSpec { seed, ..*innovations }
        .offset_stream(1 << 32)
        .sampler(spec.m)?;

    let mut qchain = QBoundChain::new(spec)?;
    let t33_norm = qchain.t33_norm;
    for _ in 0..default_burn_in(t33_norm) {
        qchain.step(q_sampler.draw_norm_sq());
    }
    let mut draws = Vec::with_capacity(samples);
    for _ in 0..samples {
        let chain_nsq = q_sampler.draw_norm_sq();
        let q = qchain.step(chain_nsq);
        let eta_norm_sq = if paired { chain_nsq } else { eta_sampler.draw_norm_sq() };
        draws.push((m1_sq + n1_sq * mult * eta_norm_sq * q.sqrt()).ln());
    }
    let estimate = mean(&draws);
    let std_error = batch_se(&draws, 50);
    Ok(McCheck {
        estimate,
        std_error,
        samples,
        pass: estimate + 2.0 * std_error < 0.0,
    })
}

/// Settings for the Monte Carlo parts of a report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSettings {
    /// Product horizon for the Lyapunov estimator.
    pub horizon: usize,
    /// Replications for the Lyapunov estimator.
    pub replications: usize,
    /// Draws for the scalar uniqueness expectation.
    pub samples: usize,
    pub seed: u64,
    /// Replication-parallelism degree; 1 runs sequentially.
    pub parallelism: usize,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            horizon: 10_000,
            replications: 24,
            samples: 100_000,
            seed: 0,
            parallelism: 1,
        }
    }
}

/// Spectral-norm contraction gate on the packed-`Q` transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContractionCheck {
    pub norm: f64,
    pub pass: bool,
}

/// Companion-radius gate for a scalar `Q`-autoregression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PartialScalarCheck {
    pub applicable: bool,
    pub rho: Option<f64>,
    pub pass: bool,
}

/// Existence side of a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExistenceChecks {
    pub spectral: SpectralCheck,
    pub norm_sums: NormCheck,
    pub diagonal_margins: Option<DiagonalCheck>,
    pub pass: bool,
}

/// Uniqueness side of a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessChecks {
    /// Contraction of the packed-`Q` transition (gates everything else).
    pub corr_contraction: ContractionCheck,
    /// Mean volatility transition radius below one.
    pub vol_mean_contraction: SpectralCheck,
    /// Scalar `Q`-autoregression companion radius, when applicable.
    pub partial_scalar: PartialScalarCheck,
    /// Lyapunov product estimate; absent when the contraction gate fails.
    pub lyapunov: Option<LyapunovEstimate>,
    /// Scalar order-one log expectation; absent unless that structure holds.
    pub scalar_expectation: Option<McCheck>,
    pub pass: bool,
}

/// Aggregated stationarity diagnostics with plain-language verdicts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarityReport {
    pub structure: ModelStructure,
    pub constants: BoundConstants,
    pub existence: ExistenceChecks,
    pub uniqueness: UniquenessChecks,
    pub existence_verdict: String,
    pub uniqueness_verdict: String,
}

/// Runs every applicable check and assembles the report.
///
/// Requires an admissible spec (every validation invariant satisfied).
pub fn full_report(
    spec: &DccSpec,
    innovations: &InnovationSpec,
    norm: MatrixNorm,
    mc: &McSettings,
) -> Result<StationarityReport> {
    let validation = model::validate(spec);
    if !validation.is_valid() {
        return Err(Error::Domain(format!("spec is not admissible: {validation}")));
    }
    let structure = model::detect_structure(spec);

    let spectral = check_existence_spectral_p1(spec)?;
    let norm_sums = check_existence_norms(spec, norm)?;
    let diagonal_margins = match structure.kind {
        StructureKind::Scalar | StructureKind::Diagonal => Some(check_existence_diagonal(spec)?),
        _ => None,
    };
    let existence_pass = spectral.pass
        || norm_sums.pass
        || diagonal_margins.as_ref().map(|d| d.pass).unwrap_or(false);
    let existence = ExistenceChecks {
        spectral,
        norm_sums,
        diagonal_margins,
        pass: existence_pass,
    };

    let constants = compute_constants(spec)?;

    let t33_norm = matrix::norm_spectral(&chain::build_t33(spec)?);
    let corr_contraction = ContractionCheck { norm: t33_norm, pass: t33_norm < 1.0 };

    let rho_bar = matrix::spectral_radius(&chain::build_t_bar_star(spec)?)?;
    let vol_mean_contraction = SpectralCheck { rho: rho_bar, pass: rho_bar < 1.0 };

    let partial_scalar = match model::partial_scalar_m_coefs(spec) {
        Some(_) => {
            let rho = matrix::spectral_radius(&chain::build_m_star(spec)?)?;
            PartialScalarCheck { applicable: true, rho: Some(rho), pass: rho < 1.0 }
        }
        None => PartialScalarCheck { applicable: false, rho: None, pass: false },
    };

    let has_corr_dynamics = spec.nu().max(spec.mu()) > 0;
    let lyapunov = if corr_contraction.pass && has_corr_dynamics {
        Some(estimate_lyapunov_n(
            spec,
            innovations,
            mc.horizon,
            mc.replications,
            mc.seed,
            mc.parallelism,
        )?)
    } else {
        None
    };

    let scalar_order_one = spec.nu() == 1
        && spec.mu() == 1
        && model::partial_scalar_m_coefs(spec).is_some()
        && model::detect_structure(spec)
            .n_coefs
            .as_ref()
            .map(|c| c.len() == 1)
            .unwrap_or(false);
    let scalar_expectation = if scalar_order_one && corr_contraction.pass {
        Some(check_uniqueness_scalar(spec, innovations, mc.samples, mc.seed)?)
    } else {
        None
    };

    // Contraction of the driver difference needs either the Lyapunov product
    // estimate or, for scalar order-one models, the log expectation.
    let contraction_evidence = lyapunov.map(|l| l.pass).unwrap_or(!has_corr_dynamics)
        || scalar_expectation.map(|e| e.pass).unwrap_or(false);
    let uniqueness_pass =
        (corr_contraction.pass || !has_corr_dynamics) && vol_mean_contraction.pass && contraction_evidence;
    let uniqueness = UniquenessChecks {
        corr_contraction,
        vol_mean_contraction,
        partial_scalar,
        lyapunov,
        scalar_expectation,
        pass: uniqueness_pass,
    };

    let mut satisfied = Vec::new();
    if existence.spectral.pass {
        satisfied.push("mean-transition spectral radius below one");
    }
    if existence.norm_sums.pass {
        satisfied.push("parameter norm sums below one");
    }
    if existence.diagonal_margins.as_ref().map(|d| d.pass).unwrap_or(false) {
        satisfied.push("margin-wise coefficient sums below one");
    }
    let existence_verdict = if existence.pass {
        format!("a strictly stationary solution exists ({})", satisfied.join("; "))
    } else {
        "no sufficient condition for existence verified".to_string()
    };
    let uniqueness_verdict = if uniqueness.pass {
        "the stationary solution is unique and ergodic (contraction criteria verified)".to_string()
    } else {
        "uniqueness not established (sufficient conditions not verified)".to_string()
    };

    Ok(StationarityReport {
        structure,
        constants,
        existence,
        uniqueness,
        existence_verdict,
        uniqueness_verdict,
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Batch-means standard error of the mean; robust to serial correlation.
pub(crate) fn batch_se(xs: &[f64], batches: usize) -> f64 {
    let nb = batches.min(xs.len()).max(1);
    let len = xs.len() / nb;
    if len == 0 || nb < 2 {
        return sd(xs) / (xs.len().max(1) as f64).sqrt();
    }
    let means: Vec<f64> = (0..nb).map(|b| mean(&xs[b * len..(b + 1) * len])).collect();
    sd(&means) / (nb as f64).sqrt()
}
