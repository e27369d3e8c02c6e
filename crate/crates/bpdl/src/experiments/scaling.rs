//! Scaling-limit experiments.
//!
//! Regime C1 (mean-field): competition scaled by 1/n, initial condition
//! of n i.i.d. points with total weight 1; the rescaled process
//! `X^n = nu/n` converges to the deterministic nonlocal logistic flow.
//! The experiment measures the RMS sup-distance of `<X^n, f>` to
//! `<xi, f>` along a ladder of n.
//!
//! Regime C2 (superprocess): birth and death rates accelerated by n with
//! net growth `beta`, Gaussian dispersal of variance `sigma/n`,
//! competition scaled by 1/n. The experiment verifies the finite-n
//! predictable bracket identity and that the bracket approaches the
//! limit form `2 gamma int <X, f^2> ds` along the ladder.

use std::sync::Arc;

use serde::Serialize;

use crate::domain::SpatialDomain;
use crate::kernel::Kernel;
use crate::meanfield::{DensityField, GridSpec, Solver};
use crate::params::{make_params, ModelParams};
use crate::rates::RateField;
use crate::sim::{EngineKind, Horizon, InitialCondition, ReplicateSpec, SimError};
use crate::stats::dist::mean_var_se;
use crate::testfn::TestFn;
use crate::trace::SnapshotPlan;

fn scale_rate(rate: &RateField, factor: f64) -> RateField {
    match rate {
        RateField::Constant(v) => RateField::Constant(v * factor),
        RateField::Field { bound, f } => {
            let f = f.clone();
            RateField::Field {
                bound: bound * factor,
                f: Arc::new(move |x: &[f64]| f(x) * factor),
            }
        }
    }
}

#[derive(Clone)]
pub struct C1Plan {
    /// Unscaled parameters (the limit equation's coefficients).
    pub base: Arc<ModelParams>,
    pub ladder: Vec<usize>,
    pub t_end: f64,
    pub snapshot_dt: f64,
    pub replicates_per_n: usize,
    pub seed: u64,
    /// Mean-field grid resolution.
    pub grid_n: usize,
    pub observable: TestFn,
}

#[derive(Debug, Clone, Serialize)]
pub struct C1Rung {
    pub n: usize,
    /// RMS over replicates of `sup_t |<X^n_t, f> - <xi_t, f>|`.
    pub rms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct C1Summary {
    pub rungs: Vec<C1Rung>,
    pub strictly_decreasing: bool,
    pub final_over_initial: f64,
}

pub fn scaling_meanfield(plan: &C1Plan) -> Result<C1Summary, SimError> {
    let base = &plan.base;
    let volume = base.domain.volume().expect("C1 runs on a torus");
    // deterministic limit: xi_0 is the uniform probability density
    let spec = GridSpec::new_1d(
        match base.domain {
            SpatialDomain::Torus { side, .. } => side,
            _ => panic!("C1 runs on a torus"),
        },
        plan.grid_n,
    );
    let solver = Solver::new(base, spec).expect("C1 base parameters fit the solver");
    let xi0 = DensityField::uniform(spec, 1.0 / volume);
    let result = solver
        .integrate(&xi0, plan.t_end, None, plan.snapshot_dt, true)
        .expect("limit integration succeeds");
    // <xi_t, f> along the dense output
    let limit_values: Vec<f64> = result
        .frames
        .iter()
        .map(|frame| {
            let cell = spec.cell_volume();
            (0..spec.len())
                .map(|k| plan.observable.eval(&[spec.coord(k)], &base.domain) * frame.values[k])
                .sum::<f64>()
                * cell
        })
        .collect();
    let limit_times: Vec<f64> = result.trace.iter().map(|p| p.t).collect();

    let mut rungs = Vec::with_capacity(plan.ladder.len());
    for (rung_idx, &n) in plan.ladder.iter().enumerate() {
        let params_n = Arc::new(ModelParams {
            domain: base.domain.clone(),
            gamma: base.gamma.clone(),
            mu: base.mu.clone(),
            alpha: scale_rate(&base.alpha, 1.0 / n as f64),
            dispersal: base.dispersal.clone(),
            competition: base.competition.clone(),
        });
        let spec_n = ReplicateSpec::new(
            params_n,
            EngineKind::Indexed,
            InitialCondition::UniformIid { count: n, window: None },
            Horizon::UntilTime(plan.t_end),
            SnapshotPlan::regular(plan.t_end, plan.snapshot_dt),
        )
        .with_observers(vec![plan.observable])
        .seeded(plan.seed.wrapping_add(rung_idx as u64), plan.replicates_per_n);
        let traces = spec_n.run_all()?;
        let mut sup_sq = Vec::with_capacity(traces.len());
        for tr in &traces {
            let mut sup = 0.0f64;
            for (snap, (lt, lv)) in tr.snapshots.iter().zip(limit_times.iter().zip(&limit_values))
            {
                debug_assert!((snap.t - lt).abs() < 1e-9);
                let x_f = snap.observables[0].value / n as f64;
                sup = sup.max((x_f - lv).abs());
            }
            sup_sq.push(sup * sup);
        }
        let rms = (sup_sq.iter().sum::<f64>() / sup_sq.len() as f64).sqrt();
        rungs.push(C1Rung { n, rms });
    }
    let strictly_decreasing = rungs.windows(2).all(|w| w[1].rms < w[0].rms);
    let final_over_initial = rungs.last().unwrap().rms / rungs.first().unwrap().rms;
    Ok(C1Summary { rungs, strictly_decreasing, final_over_initial })
}

#[derive(Clone)]
pub struct C2Plan {
    pub gamma: f64,
    pub beta: f64,
    pub alpha: f64,
    pub sigma: f64,
    /// Competition kernel (compact support).
    pub competition: Kernel,
    pub ladder: Vec<usize>,
    pub t_end: f64,
    pub replicates_per_n: usize,
    pub seed: u64,
    pub observables: Vec<TestFn>,
    /// Initial i.i.d. window for the n weight-1/n points.
    pub initial_halfwidth: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct C2Rung {
    pub n: usize,
    pub f: TestFn,
    /// Var(M^n_t) / E[<M^n>_t]: the finite-n bracket identity.
    pub finite_ratio: f64,
    /// Var(M^n_t) / (2 gamma int E<X, f^2> ds): the limit bracket.
    pub limit_ratio: f64,
    pub var_m: f64,
    pub mean_bracket: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct C2Summary {
    pub rungs: Vec<C2Rung>,
    /// Limit ratios of the last rung, one per observable.
    pub final_limit_ratios: Vec<f64>,
}

fn c2_params(plan: &C2Plan, n: usize) -> ModelParams {
    let nf = n as f64;
    make_params(
        SpatialDomain::Unbounded { dim: 1 },
        RateField::constant(nf * plan.gamma + plan.beta),
        RateField::constant(nf * plan.gamma),
        RateField::constant(plan.alpha / nf),
        Kernel::gaussian(1, plan.sigma / nf, 1.0),
        plan.competition.clone(),
    )
    .expect("C2 parameters are valid")
}

pub fn scaling_superprocess(plan: &C2Plan) -> Result<C2Summary, SimError> {
    let mut rungs = Vec::new();
    for (rung_idx, &n) in plan.ladder.iter().enumerate() {
        let params = Arc::new(c2_params(plan, n));
        let spec = ReplicateSpec::new(
            params,
            EngineKind::Indexed,
            InitialCondition::UniformIid {
                count: n,
                window: Some(vec![(-plan.initial_halfwidth, plan.initial_halfwidth)]),
            },
            Horizon::UntilTime(plan.t_end),
            SnapshotPlan::at_times(vec![0.0, plan.t_end]),
        )
        .with_observers(plan.observables.clone())
        .seeded(plan.seed.wrapping_add(1000 * rung_idx as u64), plan.replicates_per_n);
        let traces = spec.run_all()?;
        let nf = n as f64;
        for (k, f) in plan.observables.iter().enumerate() {
            let mut ms = Vec::with_capacity(traces.len());
            let mut brackets = Vec::with_capacity(traces.len());
            let mut int_f2 = Vec::with_capacity(traces.len());
            for tr in &traces {
                let o0 = &tr.snapshots[0].observables[k];
                let ot = &tr.snapshots[1].observables[k];
                ms.push((ot.value - o0.value - ot.drift_int) / nf);
                brackets.push(ot.bracket_int / (nf * nf));
                int_f2.push(ot.int_f2 / nf);
            }
            let (_, var_m, _) = mean_var_se(&ms);
            let (mean_bracket, _, _) = mean_var_se(&brackets);
            let (mean_if2, _, _) = mean_var_se(&int_f2);
            let limit_bracket = 2.0 * plan.gamma * mean_if2;
            rungs.push(C2Rung {
                n,
                f: *f,
                finite_ratio: var_m / mean_bracket,
                limit_ratio: var_m / limit_bracket,
                var_m,
                mean_bracket,
            });
        }
    }
    let last_n = *plan.ladder.last().unwrap();
    let final_limit_ratios =
        rungs.iter().filter(|r| r.n == last_n).map(|r| r.limit_ratio).collect();
    Ok(C2Summary { rungs, final_limit_ratios })
}
