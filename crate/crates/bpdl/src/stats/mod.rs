//! Ensemble estimators over simulation traces.
//!
//! All estimators are pure functions of the trace set: re-running them on
//! the same inputs is bit-identical. Counts are reported raw; intensity
//! (per unit volume) readings divide by the torus volume `V`, which makes
//! the mean equation
//! `dn/dt = n(gamma - mu - alpha n) - alpha U(0) n - alpha int C_t(dr) U(r)`
//! an exact identity that the residual estimator tests statistically.

pub mod dist;

use serde::Serialize;
use thiserror::Error;

use crate::params::ModelParams;
use crate::rng::replicate_rng;
use crate::trace::Trace;
use dist::{bootstrap_ci, mean_var_se};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("no snapshot at t = {t}")]
    NoSnapshot { t: f64 },
    #[error("snapshot at t = {t} lacks {what}")]
    MissingField { t: f64, what: &'static str },
    #[error("need at least two replicates (have {n})")]
    NotEnoughReplicates { n: usize },
    #[error("estimator requires spatially constant rates")]
    NonConstantRates,
}

/// Mean/variance/standard error of a scalar across replicates at one time.
#[derive(Debug, Clone, Serialize)]
pub struct EnsembleStat {
    pub t: f64,
    pub mean: f64,
    pub variance: f64,
    pub stderr: f64,
    pub n_replicates: usize,
}

fn ensemble(t: f64, values: &[f64]) -> Result<EnsembleStat, StatsError> {
    if values.len() < 2 {
        return Err(StatsError::NotEnoughReplicates { n: values.len() });
    }
    let (mean, variance, stderr) = mean_var_se(values);
    Ok(EnsembleStat { t, mean, variance, stderr, n_replicates: values.len() })
}

fn counts_at(traces: &[Trace], t: f64) -> Result<Vec<f64>, StatsError> {
    traces
        .iter()
        .map(|tr| tr.snapshot_at(t).map(|s| s.count as f64).ok_or(StatsError::NoSnapshot { t }))
        .collect()
}

/// Sample mean and variance of the population count at time `t`.
pub fn estimate_count(traces: &[Trace], t: f64) -> Result<EnsembleStat, StatsError> {
    ensemble(t, &counts_at(traces, t)?)
}

/// One lag bin of the covariance-measure estimate.
#[derive(Debug, Clone, Serialize)]
pub struct LagBin {
    pub left: f64,
    pub width: f64,
    /// Covariance measure of the bin, per unit volume.
    pub value: f64,
    /// `value` divided by the lag-space volume of the bin.
    pub density: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CovarianceEstimate {
    pub t: f64,
    pub intensity: f64,
    pub volume: f64,
    pub bins: Vec<LagBin>,
}

/// Lag-space volume of the shell `left <= |r| < left + width`.
fn shell_volume(dim: usize, left: f64, width: f64) -> f64 {
    let right = left + width;
    match dim {
        1 => 2.0 * width,
        2 => std::f64::consts::PI * (right * right - left * left),
        3 => 4.0 / 3.0 * std::f64::consts::PI * (right.powi(3) - left.powi(3)),
        d => panic!("unsupported dimension {d}"),
    }
}

/// Centered pair-correlation estimate on scalar lag bins.
///
/// For each bin `[l, l+w)` the estimator is the replicate average of
/// `sum_{i != j} 1{|x_i - x_j| in bin} / V` minus the Poisson baseline
/// `nhat^2 * shell_volume`, where `nhat` = mean count / V. Distances use
/// the minimal-image convention. Requires positions at `t`.
pub fn covariance_measure(
    traces: &[Trace],
    t: f64,
    bins: &[(f64, f64)],
    params: &ModelParams,
) -> Result<CovarianceEstimate, StatsError> {
    let volume = params.domain.volume().expect("covariance estimator runs on a bounded domain");
    let dim = params.dim();
    let n_rep = traces.len();
    if n_rep < 2 {
        return Err(StatsError::NotEnoughReplicates { n: n_rep });
    }
    let mut per_bin: Vec<Vec<f64>> = vec![Vec::with_capacity(n_rep); bins.len()];
    let mut counts = Vec::with_capacity(n_rep);
    for tr in traces {
        let snap = tr.snapshot_at(t).ok_or(StatsError::NoSnapshot { t })?;
        let pos = snap
            .positions
            .as_ref()
            .ok_or(StatsError::MissingField { t, what: "positions" })?;
        counts.push(snap.count as f64);
        let pts: Vec<&[f64]> = pos.chunks_exact(dim).collect();
        let mut acc = vec![0.0f64; bins.len()];
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                if i == j {
                    continue;
                }
                let r = params.domain.distance(pts[i], pts[j]);
                for (b, (l, w)) in bins.iter().enumerate() {
                    if r >= *l && r < l + w {
                        acc[b] += 1.0;
                    }
                }
            }
        }
        for (b, a) in acc.iter().enumerate() {
            per_bin[b].push(a / volume);
        }
    }
    let nhat = counts.iter().sum::<f64>() / (n_rep as f64) / volume;
    let mut out = Vec::with_capacity(bins.len());
    for (b, (l, w)) in bins.iter().enumerate() {
        let (mean_pairs, _, se) = mean_var_se(&per_bin[b]);
        let lag_vol = shell_volume(dim, *l, *w);
        let value = mean_pairs - nhat * nhat * lag_vol;
        out.push(LagBin { left: *l, width: *w, value, density: value / lag_vol, stderr: se });
    }
    Ok(CovarianceEstimate { t, intensity: nhat, volume, bins: out })
}

/// Off-diagonal U-weighted pair sum of one replicate at `t`, from the
/// recorded value when present or recomputed from positions.
fn pair_u_of(trace: &Trace, t: f64, params: &ModelParams) -> Result<f64, StatsError> {
    let snap = trace.snapshot_at(t).ok_or(StatsError::NoSnapshot { t })?;
    if let Some(v) = snap.pair_u {
        return Ok(v);
    }
    let pos =
        snap.positions.as_ref().ok_or(StatsError::MissingField { t, what: "pair_u or positions" })?;
    let dim = params.dim();
    let pts: Vec<&[f64]> = pos.chunks_exact(dim).collect();
    let mut z = vec![0.0; dim];
    let mut total = 0.0;
    for i in 0..pts.len() {
        for j in 0..pts.len() {
            if i == j {
                continue;
            }
            params.domain.displacement(pts[i], pts[j], &mut z);
            total += params.competition.eval(&z);
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentResidual {
    pub t: f64,
    pub dt: f64,
    pub residual: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub derivative: f64,
    pub rhs: f64,
    pub contains_zero: bool,
}

/// Residual of the mean equation at time `t`, intensity units.
///
/// The derivative is a central difference of the mean intensity over
/// `[t - dt, t + dt]`; the right-hand side is assembled from the count
/// and covariance estimators. The confidence interval is a percentile
/// bootstrap over replicates at the given level.
pub fn moment_residual(
    traces: &[Trace],
    t: f64,
    dt: f64,
    params: &ModelParams,
    level: f64,
    seed: u64,
) -> Result<MomentResidual, StatsError> {
    if !params.constant_rates() {
        return Err(StatsError::NonConstantRates);
    }
    let volume = params.domain.volume().expect("moment residual runs on a bounded domain");
    let gamma = params.gamma_bar();
    let mu = params.mu_bar();
    let alpha = params.alpha_bar();
    let u0 = params.u_at_zero();
    let u_mass = params.competition.mass;

    let minus = counts_at(traces, t - dt)?;
    let plus = counts_at(traces, t + dt)?;
    let center = counts_at(traces, t)?;
    let pairs: Vec<f64> =
        traces.iter().map(|tr| pair_u_of(tr, t, params)).collect::<Result<_, _>>()?;

    let eval = |idx: &[usize]| {
        let n = idx.len() as f64;
        let m_minus: f64 = idx.iter().map(|&i| minus[i]).sum::<f64>() / n / volume;
        let m_plus: f64 = idx.iter().map(|&i| plus[i]).sum::<f64>() / n / volume;
        let nhat: f64 = idx.iter().map(|&i| center[i]).sum::<f64>() / n / volume;
        let pair_hat: f64 = idx.iter().map(|&i| pairs[i]).sum::<f64>() / n / volume;
        let deriv = (m_plus - m_minus) / (2.0 * dt);
        let cov_u = pair_hat - nhat * nhat * u_mass;
        let rhs = nhat * (gamma - mu - alpha * nhat * u_mass) - alpha * u0 * nhat - alpha * cov_u;
        (deriv, rhs)
    };

    let all: Vec<usize> = (0..traces.len()).collect();
    let (deriv, rhs) = eval(&all);
    let residual = deriv - rhs;
    let mut rng = replicate_rng(seed, 0xb00f);
    let (lo, hi) = bootstrap_ci(traces.len(), 1000, level, &mut rng, |idx| {
        let (d, r) = eval(idx);
        d - r
    });
    Ok(MomentResidual {
        t,
        dt,
        residual,
        ci_low: lo,
        ci_high: hi,
        derivative: deriv,
        rhs,
        contains_zero: lo <= 0.0 && 0.0 <= hi,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MartingaleCheck {
    pub t: f64,
    pub mean: f64,
    pub stderr: f64,
    pub variance: f64,
    pub mean_bracket: f64,
    /// `Var(M_t) / mean <M>_t`; `None` when the bracket vanishes.
    pub bracket_ratio: Option<f64>,
    pub n_replicates: usize,
}

/// Martingale mean and bracket ratio for the observable at `obs_index`.
///
/// Requires the snapshot plan to include `t = 0` (for the initial value)
/// and `t`.
pub fn martingale_residual(
    traces: &[Trace],
    obs_index: usize,
    t: f64,
) -> Result<MartingaleCheck, StatsError> {
    let mut ms = Vec::with_capacity(traces.len());
    let mut brackets = Vec::with_capacity(traces.len());
    for tr in traces {
        let s0 = tr.snapshot_at(0.0).ok_or(StatsError::NoSnapshot { t: 0.0 })?;
        let st = tr.snapshot_at(t).ok_or(StatsError::NoSnapshot { t })?;
        let o0 = s0
            .observables
            .get(obs_index)
            .ok_or(StatsError::MissingField { t: 0.0, what: "observable" })?;
        let ot = st
            .observables
            .get(obs_index)
            .ok_or(StatsError::MissingField { t, what: "observable" })?;
        ms.push(ot.value - o0.value - ot.drift_int);
        brackets.push(ot.bracket_int);
    }
    let (mean, variance, stderr) = mean_var_se(&ms);
    let (mean_bracket, _, _) = mean_var_se(&brackets);
    let bracket_ratio = (mean_bracket.abs() > 1e-300).then(|| variance / mean_bracket);
    Ok(MartingaleCheck {
        t,
        mean,
        stderr,
        variance,
        mean_bracket,
        bracket_ratio,
        n_replicates: traces.len(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HistogramBin {
    pub left: f64,
    pub width: f64,
    pub intensity: f64,
    pub stderr: f64,
}

/// Replicate-averaged spatial intensity per bin (1-d), from positions at `t`.
pub fn density_histogram(
    traces: &[Trace],
    t: f64,
    edges: &[f64],
) -> Result<Vec<HistogramBin>, StatsError> {
    let n_bins = edges.len() - 1;
    let mut per_bin: Vec<Vec<f64>> = vec![Vec::with_capacity(traces.len()); n_bins];
    for tr in traces {
        let snap = tr.snapshot_at(t).ok_or(StatsError::NoSnapshot { t })?;
        let pos = snap
            .positions
            .as_ref()
            .ok_or(StatsError::MissingField { t, what: "positions" })?;
        let mut acc = vec![0.0f64; n_bins];
        for x in pos.chunks_exact(tr.dim) {
            let v = x[0];
            if v < edges[0] || v >= edges[n_bins] {
                continue;
            }
            let b = edges[..n_bins].partition_point(|e| *e <= v) - 1;
            acc[b] += 1.0;
        }
        for (b, a) in acc.iter().enumerate() {
            per_bin[b].push(a / (edges[b + 1] - edges[b]));
        }
    }
    let mut out = Vec::with_capacity(n_bins);
    for (b, vals) in per_bin.iter().enumerate() {
        let (mean, _, se) = mean_var_se(vals);
        out.push(HistogramBin { left: edges[b], width: edges[b + 1] - edges[b], intensity: mean, stderr: se });
    }
    Ok(out)
}

/// Replicate mean of a recorded snapshot scalar over a time window,
/// then averaged over the window's snapshot times.
pub fn window_time_average(
    traces: &[Trace],
    t_from: f64,
    t_to: f64,
    value: impl Fn(&crate::trace::Snapshot) -> Option<f64>,
) -> Result<EnsembleStat, StatsError> {
    // per replicate: time-average of the scalar over scheduled snapshots
    let mut per_rep = Vec::with_capacity(traces.len());
    for tr in traces {
        let mut acc = 0.0;
        let mut n = 0usize;
        for s in &tr.snapshots {
            if s.t >= t_from - 1e-9 && s.t <= t_to + 1e-9 {
                let v = value(s).ok_or(StatsError::MissingField { t: s.t, what: "window scalar" })?;
                acc += v;
                n += 1;
            }
        }
        if n == 0 {
            return Err(StatsError::NoSnapshot { t: t_from });
        }
        per_rep.push(acc / n as f64);
    }
    ensemble(0.5 * (t_from + t_to), &per_rep)
}
