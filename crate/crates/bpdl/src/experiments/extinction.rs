//! Extinction studies: the subcritical regime (dominated by a linear
//! birth-death chain) and the compact-domain regime with its derived
//! mean-mass bound.

use std::sync::Arc;

use serde::Serialize;

use crate::params::ModelParams;
use crate::quad::adaptive_simpson;
use crate::sim::{EngineKind, Horizon, InitialCondition, ReplicateSpec, SimError};
use crate::stats::dist::mean_var_se;
use crate::trace::SnapshotPlan;

/// Binary Galton-Watson (linear birth-death) extinction-time oracle:
/// per-capita birth rate `gamma`, death rate `mu`, starting from `n0`.
#[derive(Debug, Clone, Copy)]
pub struct GwOracle {
    pub gamma: f64,
    pub mu: f64,
    pub n0: usize,
}

impl GwOracle {
    /// Extinction probability by time `t` starting from one individual.
    pub fn extinct_prob_single(&self, t: f64) -> f64 {
        let (g, m) = (self.gamma, self.mu);
        if m == 0.0 {
            return 0.0;
        }
        if (g - m).abs() < 1e-12 {
            return m * t / (1.0 + m * t);
        }
        let e = (-(m - g) * t).exp();
        (m * (1.0 - e) / (m - g * e)).clamp(0.0, 1.0)
    }

    /// Extinction probability by `t` from `n0` independent lines.
    pub fn extinct_prob(&self, t: f64) -> f64 {
        self.extinct_prob_single(t).powi(self.n0 as i32)
    }

    /// Whether extinction is certain (`gamma <= mu`).
    pub fn is_subcritical(&self) -> bool {
        self.gamma <= self.mu && self.mu > 0.0
    }

    /// Quantile of the extinction time (requires `gamma <= mu`).
    pub fn quantile(&self, p: f64) -> f64 {
        assert!(self.is_subcritical());
        let (mut lo, mut hi) = (0.0, 1.0);
        while self.extinct_prob(hi) < p {
            hi *= 2.0;
            assert!(hi < 1e12, "quantile out of range");
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.extinct_prob(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Mean extinction time `int (1 - q(t)^n0) dt` (requires `gamma <= mu`).
    pub fn mean_extinction_time(&self) -> f64 {
        assert!(self.is_subcritical());
        let t_cut = self.quantile(1.0 - 1e-10);
        adaptive_simpson(|t| 1.0 - self.extinct_prob(t), 0.0, t_cut, 1e-10).unwrap()
    }
}

/// The cube-counting mass bound for a compact domain: a torus of side
/// `side` in dimension `dim` covered by cubes of side `delta/sqrt(dim)`
/// gives `x0 = gap * l_tilde / (alpha0 * eps)` with `gap = sup|gamma-mu|`.
pub fn compact_mass_bound(
    side: f64,
    dim: usize,
    delta: f64,
    eps: f64,
    gap: f64,
    alpha0: f64,
) -> (u64, f64) {
    let cubes_per_axis = (side / (delta / (dim as f64).sqrt())).ceil() as u64;
    let l_tilde = cubes_per_axis.pow(dim as u32);
    (l_tilde, gap * l_tilde as f64 / (alpha0 * eps))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub enum HorizonPolicy {
    /// 10x the 99th percentile of the dominating linear chain, when that
    /// chain is subcritical; otherwise the fallback horizon.
    Adaptive { fallback_t: f64 },
    Fixed(f64),
}

#[derive(Clone)]
pub struct ExtinctionPlan {
    pub params: Arc<ModelParams>,
    pub initial: InitialCondition,
    pub initial_count: usize,
    pub replicates: usize,
    pub seed: u64,
    pub policy: HorizonPolicy,
    pub snapshot_dt: f64,
    /// Theoretical mean-mass bound `max(E<nu_0,1>, x0)` to verify, if any.
    pub mass_bound: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtinctionSummary {
    pub replicates: usize,
    pub cap: f64,
    pub extinct: usize,
    pub censored: usize,
    pub extinct_fraction: f64,
    pub mean_extinction_time: f64,
    pub se_extinction_time: f64,
    pub q50: f64,
    pub q90: f64,
    /// Largest across-time value of the replicate-mean mass.
    pub sup_mean_mass: f64,
    pub sup_mean_mass_se: f64,
    pub gw_mean: Option<f64>,
    pub gw_q99: Option<f64>,
    pub mass_bound: Option<f64>,
    pub mass_bound_respected: Option<bool>,
}

pub fn extinction_experiment(plan: &ExtinctionPlan) -> Result<ExtinctionSummary, SimError> {
    let params = &plan.params;
    let oracle = GwOracle {
        gamma: params.gamma_bar(),
        mu: params.mu_bar(),
        n0: plan.initial_count,
    };
    let (cap, gw_mean, gw_q99) = match plan.policy {
        HorizonPolicy::Adaptive { fallback_t } => {
            if oracle.is_subcritical() {
                let q99 = oracle.quantile(0.99);
                (10.0 * q99, Some(oracle.mean_extinction_time()), Some(q99))
            } else {
                (fallback_t, None, None)
            }
        }
        HorizonPolicy::Fixed(t) => {
            if oracle.is_subcritical() {
                (t, Some(oracle.mean_extinction_time()), Some(oracle.quantile(0.99)))
            } else {
                (t, None, None)
            }
        }
    };

    let spec = ReplicateSpec::new(
        params.clone(),
        EngineKind::Auto,
        plan.initial.clone(),
        Horizon::UntilExtinct { t_max: cap },
        SnapshotPlan::regular(cap, plan.snapshot_dt),
    )
    .seeded(plan.seed, plan.replicates);
    let traces = spec.run_all()?;

    let mut times: Vec<f64> = Vec::new();
    let mut censored = 0usize;
    for tr in &traces {
        match tr.extinct_at {
            Some(t) => times.push(t),
            None => censored += 1,
        }
    }
    let extinct = times.len();
    let (mean_t, se_t) = if extinct >= 2 {
        let (m, _, se) = mean_var_se(&times);
        (m, se)
    } else {
        (f64::NAN, f64::NAN)
    };
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let quantile = |p: f64| -> f64 {
        if times.is_empty() {
            f64::NAN
        } else {
            times[((times.len() as f64 * p) as usize).min(times.len() - 1)]
        }
    };

    // replicate-mean mass at each snapshot time
    let n_snap = traces[0].snapshots.len();
    let mut sup_mean = 0.0f64;
    let mut sup_se = 0.0f64;
    for k in 0..n_snap {
        let vals: Vec<f64> = traces.iter().map(|tr| tr.snapshots[k].count as f64).collect();
        let (m, _, se) = mean_var_se(&vals);
        if m > sup_mean {
            sup_mean = m;
            sup_se = se;
        }
    }
    let mass_bound_respected = plan.mass_bound.map(|b| sup_mean <= b + 3.0 * sup_se);

    Ok(ExtinctionSummary {
        replicates: plan.replicates,
        cap,
        extinct,
        censored,
        extinct_fraction: extinct as f64 / plan.replicates as f64,
        mean_extinction_time: mean_t,
        se_extinction_time: se_t,
        q50: quantile(0.5),
        q90: quantile(0.9),
        sup_mean_mass: sup_mean,
        sup_mean_mass_se: sup_se,
        gw_mean,
        gw_q99,
        mass_bound: plan.mass_bound,
        mass_bound_respected,
    })
}
