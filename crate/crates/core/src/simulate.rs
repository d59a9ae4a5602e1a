//! Trajectory generation for the DCC process.
//!
//! Each step computes the instantaneous variances and the correlation driver
//! from their lags, normalizes the driver into a correlation matrix, then
//! maps the innovation through its SPD square root:
//! `eps_t = R_t^{1/2} eta_t`, `z_t = D_t^{1/2} eps_t`.
//!
//! Pre-history residuals are drawn against the initial correlation
//! `R_0 = normalize(Q_0)` and pre-history returns against the initial
//! variances, so a run is a deterministic function of `(spec, config, seed,
//! stream)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::VecDeque;

use crate::chain::{self, StateLayout};
use crate::error::{Error, Result};
use crate::innovations::{InnovationSampler, InnovationSpec};
use crate::matrix::{self, SpdMatrix};
use crate::model::{self, DccSpec};

/// Simulation horizon, initialization and recording policy.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Number of steps to simulate (time runs from 1 to `horizon`).
    pub horizon: usize,
    /// Leading steps dropped from the record.
    pub burn_in: usize,
    /// Initial correlation driver, used for every pre-history lag. The
    /// initial correlation is its normalization.
    pub q0: DMatrix<f64>,
    /// Initial instantaneous variances, used for every pre-history lag.
    pub h0: DVector<f64>,
    /// Explosion threshold on `|Q_t|_max`.
    pub explosion_threshold: f64,
    /// Keep every `record_stride`-th step after burn-in.
    pub record_stride: usize,
}

impl SimConfig {
    /// Identity initialization with variances 1/2, the benchmark convention.
    pub fn new(horizon: usize, m: usize) -> Self {
        Self {
            horizon,
            burn_in: 0,
            q0: DMatrix::identity(m, m),
            h0: DVector::from_element(m, 0.5),
            explosion_threshold: 1e12,
            record_stride: 1,
        }
    }

    fn validate(&self, m: usize) -> Result<SpdMatrix> {
        if self.horizon == 0 || self.burn_in >= self.horizon {
            return Err(Error::Domain(format!(
                "horizon ({}) must exceed burn_in ({})",
                self.horizon, self.burn_in
            )));
        }
        if !(self.explosion_threshold > 0.0) {
            return Err(Error::Domain("explosion threshold must be positive".into()));
        }
        if self.record_stride == 0 {
            return Err(Error::Domain("record stride must be at least 1".into()));
        }
        if self.h0.len() != m || self.h0.iter().any(|h| !(*h > 0.0)) {
            return Err(Error::Domain(format!(
                "initial variances must be {m} strictly positive entries"
            )));
        }
        if self.q0.nrows() != m || self.q0.ncols() != m {
            return Err(Error::Dimension(format!("q0 must be {m}x{m}")));
        }
        SpdMatrix::new(self.q0.clone())
            .map_err(|e| Error::Domain(format!("q0 is not symmetric positive definite: {e}")))
    }
}

/// One recorded step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Time index, starting at 1.
    pub t: usize,
    pub z: DVector<f64>,
    pub eps: DVector<f64>,
    pub eta: DVector<f64>,
    pub h: DVector<f64>,
    pub vech_q: DVector<f64>,
    pub vech_r: DVector<f64>,
}

/// A simulated path with its explosion diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub m: usize,
    pub records: Vec<StepRecord>,
    /// First time `|Q_t|_max` crossed the threshold or a value overflowed;
    /// the simulation halts there, keeping the earlier records.
    pub first_explosion_time: Option<usize>,
    /// Largest `|Q_t|_max` seen over every computed step, burn-in included.
    pub max_q_norm: f64,
}

impl Trajectory {
    pub fn exploded(&self) -> bool {
        self.first_explosion_time.is_some()
    }

    /// Per-component sample moment `mean(z^order)` over the records.
    pub fn z_moment(&self, order: u32) -> DVector<f64> {
        let mut acc = DVector::zeros(self.m);
        for rec in &self.records {
            for k in 0..self.m {
                acc[k] += rec.z[k].powi(order as i32);
            }
        }
        acc / (self.records.len().max(1) as f64)
    }

    /// Off-diagonal entries of the last recorded correlation matrix, packed
    /// in vech order.
    pub fn terminal_r_offdiag(&self) -> Vec<f64> {
        let Some(last) = self.records.last() else {
            return Vec::new();
        };
        let idx = matrix::SymIndexMap::new(self.m);
        (0..idx.len())
            .filter_map(|k| {
                let (i, j) = idx.pair(k).expect("index in range");
                (i != j).then(|| last.vech_r[k])
            })
            .collect()
    }
}

struct Buffers {
    h: VecDeque<DVector<f64>>,
    zsq: VecDeque<DVector<f64>>,
    q: VecDeque<DMatrix<f64>>,
    eps: VecDeque<DVector<f64>>,
}

enum StepOutcome {
    Step {
        h: DVector<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        eps: DVector<f64>,
        z: DVector<f64>,
    },
    Explosion,
}

/// Advances the recursion by one step. Draws nothing: the innovation is
/// supplied. Buffers are updated only on a regular step.
fn step(spec: &DccSpec, buffers: &mut Buffers, eta: &DVector<f64>, threshold: f64) -> Result<StepOutcome> {
    // variances and driver from lags only
    let mut h = spec.v0.clone();
    for (i, a) in spec.a.iter().enumerate() {
        h += a * &buffers.h[i];
    }
    for (j, b) in spec.b.iter().enumerate() {
        h += b * &buffers.zsq[j];
    }

    let mut q = spec.w0.clone();
    for (k, mk) in spec.m_mats.iter().enumerate() {
        q += mk * &buffers.q[k] * mk.transpose();
    }
    for (l, nl) in spec.n_mats.iter().enumerate() {
        let loaded = nl * &buffers.eps[l];
        q += &loaded * loaded.transpose();
    }
    let qt = q.transpose();
    q = (q + qt) * 0.5;

    if h.iter().any(|x| !x.is_finite())
        || q.iter().any(|x| !x.is_finite())
        || matrix::norm_max(&q) > threshold
    {
        return Ok(StepOutcome::Explosion);
    }

    // positive diagonal is guaranteed by the SPD intercept; a violation is a bug
    let m = spec.m;
    for i in 0..m {
        if !(q[(i, i)] > 0.0) {
            return Err(Error::Numeric(format!(
                "driver lost positive definiteness: diagonal entry {i} = {}",
                q[(i, i)]
            )));
        }
    }
    let inv_root_diag = DVector::from_fn(m, |i, _| 1.0 / q[(i, i)].sqrt());
    let mut r = DMatrix::from_fn(m, m, |i, j| q[(i, j)] * inv_root_diag[i] * inv_root_diag[j]);
    for i in 0..m {
        r[(i, i)] = 1.0;
        for j in (i + 1)..m {
            let v = 0.5 * (r[(i, j)] + r[(j, i)]);
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }

    let root = matrix::sqrt_sym_psd(&r).map_err(|e| {
        Error::Numeric(format!("correlation square root failed (driver degenerate?): {e}"))
    })?;
    let eps = &root * eta;
    let z = DVector::from_fn(m, |k, _| h[k].sqrt() * eps[k]);

    buffers.h.push_front(h.clone());
    buffers.h.pop_back();
    buffers.zsq.push_front(z.component_mul(&z));
    buffers.zsq.pop_back();
    buffers.q.push_front(q.clone());
    buffers.q.pop_back();
    buffers.eps.push_front(eps.clone());
    buffers.eps.pop_back();

    Ok(StepOutcome::Step { h, q, r, eps, z })
}

/// Simulates a trajectory; deterministic given the innovation seed/stream.
pub fn simulate(spec: &DccSpec, config: &SimConfig, innovations: &InnovationSpec) -> Result<Trajectory> {
    let validation = model::validate(spec);
    if !validation.is_valid() {
        return Err(Error::Domain(format!("spec is not admissible: {validation}")));
    }
    let q0 = config.validate(spec.m)?;
    let mut sampler = innovations.sampler(spec.m)?;
    simulate_prepared(spec, config, &q0, &mut sampler)
}

fn simulate_prepared(
    spec: &DccSpec,
    config: &SimConfig,
    q0: &SpdMatrix,
    sampler: &mut InnovationSampler,
) -> Result<Trajectory> {
    let m = spec.m;
    let r0 = {
        let q = q0.as_matrix();
        let inv_root_diag = DVector::from_fn(m, |i, _| 1.0 / q[(i, i)].sqrt());
        let mut r = DMatrix::from_fn(m, m, |i, j| q[(i, j)] * inv_root_diag[i] * inv_root_diag[j]);
        for i in 0..m {
            r[(i, i)] = 1.0;
        }
        r
    };
    let r0_root = matrix::sqrt_sym_psd(&r0)?;

    // pre-history residuals, oldest first, shared by the return lags
    let n_pre = spec.s().max(spec.mu());
    let mut pre_eps: Vec<DVector<f64>> = (0..n_pre).map(|_| &r0_root * sampler.draw()).collect();
    pre_eps.reverse(); // most recent first

    let mut buffers = Buffers {
        h: (0..spec.r()).map(|_| config.h0.clone()).collect(),
        zsq: (0..spec.s())
            .map(|j| {
                let e = &pre_eps[j];
                DVector::from_fn(m, |k, _| config.h0[k] * e[k] * e[k])
            })
            .collect(),
        q: (0..spec.nu()).map(|_| q0.as_matrix().clone()).collect(),
        eps: (0..spec.mu()).map(|l| pre_eps[l].clone()).collect(),
    };

    let mut records = Vec::new();
    let mut first_explosion_time = None;
    let mut max_q_norm = matrix::norm_max(q0.as_matrix());

    for t in 1..=config.horizon {
        let eta = sampler.draw();
        match step(spec, &mut buffers, &eta, config.explosion_threshold)? {
            StepOutcome::Explosion => {
                first_explosion_time = Some(t);
                break;
            }
            StepOutcome::Step { h, q, r, eps, z } => {
                max_q_norm = max_q_norm.max(matrix::norm_max(&q));
                if t > config.burn_in && (t - config.burn_in - 1) % config.record_stride == 0 {
                    records.push(StepRecord {
                        t,
                        z,
                        eps,
                        eta,
                        h,
                        vech_q: matrix::vech(&q)?,
                        vech_r: matrix::vech(&r)?,
                    });
                }
            }
        }
    }

    Ok(Trajectory { m, records, first_explosion_time, max_q_norm })
}

/// Window-halves stability flags for a run: each pooled even moment of the
/// returns is compared across the two halves of the record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentStability {
    pub second_ratio: Option<f64>,
    pub fourth_ratio: Option<f64>,
    /// No explosion and both ratios within `[1/2, 2]`.
    pub stable: bool,
}

fn pooled_moment(records: &[StepRecord], order: u32) -> f64 {
    if records.is_empty() {
        return f64::NAN;
    }
    let m = records[0].z.len();
    let total: f64 = records
        .iter()
        .map(|r| r.z.iter().map(|z| z.powi(order as i32)).sum::<f64>())
        .sum();
    total / (records.len() * m) as f64
}

fn stability_ratio(records: &[StepRecord], order: u32) -> Option<f64> {
    if records.len() < 4 {
        return None;
    }
    let half = records.len() / 2;
    let first = pooled_moment(&records[..half], order);
    let second = pooled_moment(&records[half..], order);
    (first > 0.0).then(|| second / first)
}

fn moment_stability(traj: &Trajectory) -> MomentStability {
    let second_ratio = stability_ratio(&traj.records, 2);
    let fourth_ratio = stability_ratio(&traj.records, 4);
    let in_band = |r: Option<f64>| r.map(|x| (0.5..=2.0).contains(&x)).unwrap_or(false);
    MomentStability {
        second_ratio,
        fourth_ratio,
        stable: !traj.exploded() && in_band(second_ratio) && in_band(fourth_ratio),
    }
}

/// Summary of one ensemble member.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub run: usize,
    pub stream: u64,
    pub first_explosion_time: Option<usize>,
    pub max_q_norm: f64,
    /// `|Q_t|_max` at the requested checkpoints (last available value if the
    /// run halted earlier).
    pub q_norm_at: Vec<(usize, f64)>,
    pub terminal_r_offdiag: Vec<f64>,
    pub moments: MomentStability,
}

/// Aggregates across an ensemble; statistics cover the non-failed runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub runs: usize,
    pub failed_runs: usize,
    pub explosion_fraction: f64,
    /// (min, median, max) of the per-run `max |Q_t|_max`.
    pub max_q_norm_range: (f64, f64, f64),
    /// Median `|Q|_max` at the late checkpoint over the median at the early
    /// checkpoint; the growth trend marker.
    pub growth_ratio: Option<f64>,
    /// Standard deviation of each terminal off-diagonal correlation entry
    /// across runs.
    pub terminal_r_offdiag_std: Vec<f64>,
    pub unstable_runs: usize,
}

/// Ensemble outcome: per-run results plus the aggregate summary.
#[derive(Debug, Clone)]
pub struct EnsembleOutcome {
    pub runs: Vec<Result<RunSummary>>,
    pub summary: EnsembleSummary,
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

fn summarize_run(run: usize, stream: u64, traj: &Trajectory, checkpoints: &[usize]) -> RunSummary {
    let q_norm_at = checkpoints
        .iter()
        .map(|t| {
            let at = traj
                .records
                .iter()
                .rev()
                .find(|rec| rec.t <= *t)
                .map(|rec| rec.vech_q.amax())
                .unwrap_or(f64::NAN);
            (*t, at)
        })
        .collect();
    RunSummary {
        run,
        stream,
        first_explosion_time: traj.first_explosion_time,
        max_q_norm: traj.max_q_norm,
        q_norm_at,
        terminal_r_offdiag: traj.terminal_r_offdiag(),
        moments: moment_stability(traj),
    }
}

/// Runs `n_runs` independent simulations on streams
/// `innovations.stream .. innovations.stream + n_runs`; per-run failures are
/// recorded without aborting the rest, and results do not depend on the
/// parallelism degree.
pub fn ensemble(
    spec: &DccSpec,
    config: &SimConfig,
    innovations: &InnovationSpec,
    n_runs: usize,
    parallelism: usize,
) -> Result<EnsembleOutcome> {
    if n_runs == 0 {
        return Err(Error::Domain("ensemble needs at least one run".into()));
    }
    let validation = model::validate(spec);
    if !validation.is_valid() {
        return Err(Error::Domain(format!("spec is not admissible: {validation}")));
    }
    config.validate(spec.m)?;
    let checkpoints = if config.horizon >= 10 {
        vec![config.horizon / 10, config.horizon]
    } else {
        vec![config.horizon]
    };

    let run_one = |run: usize| -> Result<RunSummary> {
        let inn = innovations.offset_stream(run as u64);
        let traj = simulate(spec, config, &inn)?;
        Ok(summarize_run(run, inn.stream, &traj, &checkpoints))
    };

    let runs: Vec<Result<RunSummary>> = if parallelism > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .map_err(|e| Error::Numeric(format!("thread pool: {e}")))?;
        pool.install(|| (0..n_runs).into_par_iter().map(run_one).collect())
    } else {
        (0..n_runs).map(run_one).collect()
    };

    let ok: Vec<&RunSummary> = runs.iter().filter_map(|r| r.as_ref().ok()).collect();
    let failed_runs = n_runs - ok.len();
    let explosion_fraction = if ok.is_empty() {
        f64::NAN
    } else {
        ok.iter().filter(|r| r.first_explosion_time.is_some()).count() as f64 / ok.len() as f64
    };
    let mut max_q: Vec<f64> = ok.iter().map(|r| r.max_q_norm).collect();
    max_q.sort_by(f64::total_cmp);
    let max_q_norm_range = (
        quantile_sorted(&max_q, 0.0),
        quantile_sorted(&max_q, 0.5),
        quantile_sorted(&max_q, 1.0),
    );
    let growth_ratio = if checkpoints.len() == 2 {
        let collect_at = |slot: usize| {
            let mut v: Vec<f64> = ok
                .iter()
                .filter_map(|r| {
                    let x = r.q_norm_at[slot].1;
                    x.is_finite().then_some(x)
                })
                .collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let early = collect_at(0);
        let late = collect_at(1);
        (!early.is_empty() && !late.is_empty())
            .then(|| quantile_sorted(&late, 0.5) / quantile_sorted(&early, 0.5))
    } else {
        None
    };
    let n_offdiag = ok.first().map(|r| r.terminal_r_offdiag.len()).unwrap_or(0);
    let terminal_r_offdiag_std = (0..n_offdiag)
        .map(|k| {
            let vals: Vec<f64> = ok
                .iter()
                .filter_map(|r| r.terminal_r_offdiag.get(k).copied())
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len().max(1) as f64;
            if vals.len() < 2 {
                0.0
            } else {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64)
                    .sqrt()
            }
        })
        .collect();
    let unstable_runs = ok.iter().filter(|r| !r.moments.stable).count();

    Ok(EnsembleOutcome {
        runs,
        summary: EnsembleSummary {
            runs: n_runs,
            failed_runs,
            explosion_fraction,
            max_q_norm_range,
            growth_ratio,
            terminal_r_offdiag_std,
            unstable_runs,
        },
    })
}

/// One pooled sample moment with a batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub order: u32,
    pub value: f64,
    pub std_error: f64,
}

/// Sample moments of the returns, variances, absolute driver entries and
/// absolute residuals over the recorded window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentDiagnostics {
    pub z: Vec<MomentEstimate>,
    pub h: Vec<MomentEstimate>,
    pub q_abs: Vec<MomentEstimate>,
    pub eps_abs: Vec<MomentEstimate>,
    /// Window-halves ratio of the pooled return moment per order.
    pub window_stability: Vec<(u32, Option<f64>)>,
}

/// Computes pooled moments with batch-means standard errors; rejects
/// explosion-flagged trajectories.
pub fn moment_diagnostics(traj: &Trajectory, orders: &[u32]) -> Result<MomentDiagnostics> {
    if traj.exploded() {
        return Err(Error::Domain(
            "trajectory carries an explosion flag; moments are not meaningful".into(),
        ));
    }
    if traj.records.is_empty() {
        return Err(Error::Domain("trajectory has no recorded steps".into()));
    }
    let m = traj.m;
    let estimate = |values: &dyn Fn(&StepRecord) -> Vec<f64>, order: u32| -> MomentEstimate {
        let series: Vec<f64> = traj
            .records
            .iter()
            .map(|rec| {
                let vals = values(rec);
                vals.iter().map(|v| v.powi(order as i32)).sum::<f64>() / vals.len() as f64
            })
            .collect();
        let value = series.iter().sum::<f64>() / series.len() as f64;
        let std_error = crate::stationarity::batch_se(&series, 20);
        MomentEstimate { order, value, std_error }
    };
    let z_vals = |rec: &StepRecord| rec.z.iter().copied().collect::<Vec<f64>>();
    let h_vals = |rec: &StepRecord| rec.h.iter().copied().collect::<Vec<f64>>();
    let q_vals = |rec: &StepRecord| rec.vech_q.iter().map(|q| q.abs()).collect::<Vec<f64>>();
    let e_vals = |rec: &StepRecord| rec.eps.iter().map(|e| e.abs()).collect::<Vec<f64>>();
    let _ = m;
    Ok(MomentDiagnostics {
        z: orders.iter().map(|o| estimate(&z_vals, *o)).collect(),
        h: orders.iter().map(|o| estimate(&h_vals, *o)).collect(),
        q_abs: orders.iter().map(|o| estimate(&q_vals, *o)).collect(),
        eps_abs: orders.iter().map(|o| estimate(&e_vals, *o)).collect(),
        window_stability: orders
            .iter()
            .map(|o| (*o, stability_ratio(&traj.records, *o)))
            .collect(),
    })
}

/// Builds the stacked chain state from consecutive records ending at `at`.
/// Needs `at + 1` to be at least the largest lag order; records must be
/// consecutive (stride one).
pub fn state_at(traj: &Trajectory, at: usize, layout: &StateLayout) -> Result<chain::StateVector> {
    let need = layout.r.max(layout.s).max(layout.nu).max(layout.mu);
    if at + 1 < need {
        return Err(Error::Range(format!(
            "state at index {at} needs {need} consecutive records"
        )));
    }
    let rec = |lag: usize| &traj.records[at - lag];
    let d_hist: Vec<DVector<f64>> = (0..layout.r).map(|i| rec(i).h.clone()).collect();
    let zsq_hist: Vec<DVector<f64>> = (0..layout.s)
        .map(|j| rec(j).z.component_mul(&rec(j).z))
        .collect();
    let q_hist = (0..layout.nu)
        .map(|k| matrix::unvech(&rec(k).vech_q))
        .collect::<Result<Vec<_>>>()?;
    let eps_hist: Vec<DMatrix<f64>> = (0..layout.mu)
        .map(|l| {
            let e = &rec(l).eps;
            e * e.transpose()
        })
        .collect();
    chain::pack_state(&d_hist, &zsq_hist, &q_hist, &eps_hist, layout)
}
