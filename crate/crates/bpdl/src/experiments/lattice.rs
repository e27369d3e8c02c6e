//! Lattice survival: the integer-lattice process with pointwise
//! competition, compared against the dominating contact process.
//!
//! With pointwise competition `U(x,y) = 1{x=y}` and nearest-neighbor
//! dispersal, the site-occupancy process dominates a contact process
//! with spread rate `lambda_d = gamma 2^{-d}` and removal rate
//! `lambda_m = mu + alpha`; the sufficient survival condition is
//! `lambda_d > 2 lambda_m`. Both processes are run from a single origin
//! site; a replicate that reaches the escape threshold is counted as
//! surviving and stopped (at that size the extinction probability of a
//! supercritical process is numerically zero).

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::domain::SpatialDomain;
use crate::kernel::Kernel;
use crate::params::{make_params, ModelParams};
use crate::population::Population;
use crate::rates::RateField;
use crate::rng::{exp_variate, replicate_rng, SimRng};
use crate::sim::{EngineKind, SimError, SimState};

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LatticeSurvivalPlan {
    pub gamma: f64,
    pub mu: f64,
    pub alpha: f64,
    pub dim: usize,
    pub t_end: f64,
    /// Population size at which a replicate is declared surviving.
    pub escape_threshold: usize,
    pub replicates: usize,
    pub seed: u64,
}

/// `gamma 2^{-d} / (mu + alpha)`, the ratio that must exceed 2.
pub fn condition_ratio(gamma: f64, mu: f64, alpha: f64, dim: usize) -> f64 {
    gamma / 2f64.powi(dim as i32) / (mu + alpha)
}

#[derive(Debug, Clone, Serialize)]
pub struct LatticeSurvivalSummary {
    pub condition_ratio: f64,
    pub condition_holds: bool,
    pub lambda_d: f64,
    pub lambda_m: f64,
    pub bpdl_survival: f64,
    pub bpdl_se: f64,
    pub contact_survival: f64,
    pub contact_se: f64,
    /// BPDL survival >= contact survival - 3 pooled SE, and positive.
    pub domination_pass: bool,
}

fn lattice_params(plan: &LatticeSurvivalPlan) -> ModelParams {
    let half = 4 * (plan.t_end.ceil() as i64 + plan.escape_threshold as i64).max(100);
    make_params(
        SpatialDomain::Lattice { bounds: vec![(-half, half); plan.dim] },
        RateField::constant(plan.gamma),
        RateField::constant(plan.mu),
        RateField::constant(plan.alpha),
        Kernel::lattice_nn(plan.dim),
        Kernel::point(plan.dim, 1.0),
    )
    .expect("lattice parameters are valid")
}

fn run_bpdl_replicate(
    params: &Arc<ModelParams>,
    plan: &LatticeSurvivalPlan,
    rng: SimRng,
) -> Result<bool, SimError> {
    let origin = vec![0.0; plan.dim];
    let pop = Population::from_positions(plan.dim, &[origin]);
    let mut state = SimState::new(params.clone(), pop, EngineKind::Faithful, rng);
    loop {
        if state.pop.is_empty() {
            return Ok(false);
        }
        if state.t >= plan.t_end || state.pop.len() >= plan.escape_threshold {
            return Ok(true);
        }
        state.step()?;
    }
}

/// Minimal contact process on `Z^d`: occupied sites spread to each empty
/// neighbor at rate `lambda_d` and vacate at rate `lambda_m`.
struct ContactState {
    lambda_d: f64,
    lambda_m: f64,
    dim: usize,
    sites: Vec<[i64; 3]>,
    index: HashMap<[i64; 3], usize>,
}

impl ContactState {
    fn new(dim: usize) -> Self {
        let origin = [0i64; 3];
        let mut index = HashMap::new();
        index.insert(origin, 0);
        ContactState { lambda_d: 0.0, lambda_m: 0.0, dim, sites: vec![origin], index }
    }

    fn step(&mut self, rng: &mut SimRng) -> f64 {
        let n = self.sites.len() as f64;
        let birth_total = self.lambda_d * 2.0 * self.dim as f64 * n;
        let death_total = self.lambda_m * n;
        let total = birth_total + death_total;
        let dt = exp_variate(rng, total);
        if rng.random::<f64>() * total < birth_total {
            // uniform occupied site, uniform neighbor; occupy if empty
            let i = rng.random_range(0..self.sites.len());
            let axis = rng.random_range(0..self.dim);
            let dir = if rng.random::<bool>() { 1 } else { -1 };
            let mut target = self.sites[i];
            target[axis] += dir;
            if !self.index.contains_key(&target) {
                self.index.insert(target, self.sites.len());
                self.sites.push(target);
            }
        } else {
            let i = rng.random_range(0..self.sites.len());
            let site = self.sites[i];
            let last = self.sites.len() - 1;
            self.sites.swap_remove(i);
            self.index.remove(&site);
            if i != last {
                self.index.insert(self.sites[i], i);
            }
        }
        dt
    }
}

fn run_contact_replicate(
    lambda_d: f64,
    lambda_m: f64,
    plan: &LatticeSurvivalPlan,
    mut rng: SimRng,
) -> bool {
    let mut state = ContactState::new(plan.dim);
    state.lambda_d = lambda_d;
    state.lambda_m = lambda_m;
    let mut t = 0.0;
    loop {
        if state.sites.is_empty() {
            return false;
        }
        if t >= plan.t_end || state.sites.len() >= plan.escape_threshold {
            return true;
        }
        t += state.step(&mut rng);
    }
}

pub fn lattice_survival(plan: &LatticeSurvivalPlan) -> Result<LatticeSurvivalSummary, SimError> {
    use rayon::prelude::*;
    let ratio = condition_ratio(plan.gamma, plan.mu, plan.alpha, plan.dim);
    let lambda_d = plan.gamma / 2f64.powi(plan.dim as i32);
    let lambda_m = plan.mu + plan.alpha;
    let params = Arc::new(lattice_params(plan));

    let bpdl_alive: usize = (0..plan.replicates as u64)
        .into_par_iter()
        .map(|id| {
            let rng = replicate_rng(plan.seed, id);
            run_bpdl_replicate(&params, plan, rng).map(|alive| alive as usize)
        })
        .sum::<Result<usize, SimError>>()?;
    let contact_alive: usize = (0..plan.replicates as u64)
        .into_par_iter()
        .map(|id| {
            let rng = replicate_rng(plan.seed ^ 0xc0417ac7, id);
            run_contact_replicate(lambda_d, lambda_m, plan, rng) as usize
        })
        .sum();

    let n = plan.replicates as f64;
    let p_b = bpdl_alive as f64 / n;
    let p_c = contact_alive as f64 / n;
    let se_b = (p_b * (1.0 - p_b) / n).sqrt();
    let se_c = (p_c * (1.0 - p_c) / n).sqrt();
    let pooled = (se_b * se_b + se_c * se_c).sqrt();
    let domination_pass = p_b > 0.0 && p_b >= p_c - 3.0 * pooled;

    Ok(LatticeSurvivalSummary {
        condition_ratio: ratio,
        condition_holds: ratio > 2.0,
        lambda_d,
        lambda_m,
        bpdl_survival: p_b,
        bpdl_se: se_b,
        contact_survival: p_c,
        contact_se: se_c,
        domination_pass,
    })
}
