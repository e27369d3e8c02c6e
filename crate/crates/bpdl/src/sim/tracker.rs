//! Incrementally maintained per-individual competition sums.
//!
//! `S_i = sum_j U(x_i, x_j)` over the whole population including `j = i`,
//! matching the generator's pair integral. When the competition kernel has
//! compact support the updates touch only the cell-grid neighborhood of
//! the changed individual; otherwise every individual is visited.

use crate::params::ModelParams;
use crate::population::{competition_sum, Population};
use crate::sim::grid::CellGrid;

const REBUILD_EVERY: u64 = 1 << 20;

#[derive(Debug, Clone)]
pub struct CompetitionTracker {
    /// S_i including the self term U(0).
    pub s: Vec<f64>,
    /// alpha(x_i) * S_i, the exact per-individual competition death rate.
    pub alpha_s: Vec<f64>,
    pub total_alpha_s: f64,
    grid: Option<CellGrid>,
    /// Neighbors touched by the last add/remove: (index, U value).
    scratch: Vec<(u32, f64)>,
    updates: u64,
}

impl CompetitionTracker {
    pub fn build(pop: &Population, params: &ModelParams) -> Self {
        let radius = params.competition.support_radius();
        let grid = if radius.is_finite() && radius > 0.0 && pop.dim() <= 3 {
            Some(CellGrid::build(pop, &params.domain, radius))
        } else {
            None
        };
        let mut tracker = CompetitionTracker {
            s: Vec::new(),
            alpha_s: Vec::new(),
            total_alpha_s: 0.0,
            grid,
            scratch: Vec::new(),
            updates: 0,
        };
        tracker.rebuild(pop, params);
        tracker
    }

    /// Recompute all sums from scratch.
    pub fn rebuild(&mut self, pop: &Population, params: &ModelParams) {
        let n = pop.len();
        self.s.clear();
        self.s.resize(n, 0.0);
        let mut z = vec![0.0; pop.dim()];
        match &self.grid {
            Some(grid) => {
                for i in 0..n {
                    let xi = pop.position(i);
                    let mut acc = 0.0;
                    grid.for_neighbors(xi, |j| {
                        params.domain.displacement(xi, pop.position(j as usize), &mut z);
                        acc += params.competition.eval(&z);
                    });
                    self.s[i] = acc;
                }
            }
            None => {
                for i in 0..n {
                    self.s[i] = competition_sum(pop, pop.position(i), params);
                }
            }
        }
        self.alpha_s.clear();
        self.alpha_s
            .extend((0..n).map(|i| params.alpha.eval(pop.position(i)) * self.s[i]));
        self.total_alpha_s = self.alpha_s.iter().sum();
        self.updates = 0;
    }

    /// Collect the (index, U) pairs of individuals interacting with `x`.
    fn collect_touched(&mut self, pop: &Population, params: &ModelParams, x: &[f64]) {
        self.scratch.clear();
        let mut z = vec![0.0; pop.dim()];
        match &self.grid {
            Some(grid) => {
                let scratch = &mut self.scratch;
                grid.for_neighbors(x, |j| {
                    params.domain.displacement(x, pop.position(j as usize), &mut z);
                    let u = params.competition.eval(&z);
                    if u != 0.0 {
                        scratch.push((j, u));
                    }
                });
            }
            None => {
                for j in 0..pop.len() {
                    params.domain.displacement(x, pop.position(j), &mut z);
                    let u = params.competition.eval(&z);
                    if u != 0.0 {
                        self.scratch.push((j as u32, u));
                    }
                }
            }
        }
    }

    /// Account for a birth at `y`. Must be called *before* the population
    /// push. Returns the newborn's S value; the touched-neighbor list is
    /// available through [`touched`](Self::touched) until the next update.
    pub fn add(&mut self, pop: &Population, params: &ModelParams, y: &[f64]) -> f64 {
        self.collect_touched(pop, params, y);
        let u0 = params.competition.eval(&vec![0.0; pop.dim()]);
        let mut s_new = u0;
        let mut delta_total = 0.0;
        for &(j, u) in &self.scratch {
            s_new += u;
            self.s[j as usize] += u;
            let da = params.alpha.eval(pop.position(j as usize)) * u;
            self.alpha_s[j as usize] += da;
            delta_total += da;
        }
        let alpha_new = params.alpha.eval(y) * s_new;
        self.s.push(s_new);
        self.alpha_s.push(alpha_new);
        self.total_alpha_s += delta_total + alpha_new;
        if let Some(grid) = &mut self.grid {
            grid.insert(pop.len() as u32, y);
        }
        self.maybe_rebuild_counter();
        s_new
    }

    /// Account for the death of individual `i`. Must be called *before*
    /// the population swap-remove. Returns the removed S value; the
    /// touched list excludes `i` itself.
    pub fn remove(&mut self, pop: &Population, params: &ModelParams, i: usize) -> f64 {
        let xi = pop.position(i).to_vec();
        self.collect_touched(pop, params, &xi);
        let mut delta_total = 0.0;
        let mut keep = 0;
        for k in 0..self.scratch.len() {
            let (j, u) = self.scratch[k];
            if j as usize == i {
                continue; // self entry: dropped from the touched list
            }
            self.s[j as usize] -= u;
            let da = params.alpha.eval(pop.position(j as usize)) * u;
            self.alpha_s[j as usize] -= da;
            delta_total -= da;
            self.scratch[keep] = (j, u);
            keep += 1;
        }
        self.scratch.truncate(keep);
        let s_i = self.s[i];
        self.total_alpha_s += delta_total - self.alpha_s[i];
        self.s.swap_remove(i);
        self.alpha_s.swap_remove(i);
        if let Some(grid) = &mut self.grid {
            grid.remove_swap(i as u32);
        }
        if self.total_alpha_s < 0.0 {
            self.total_alpha_s = 0.0;
        }
        self.maybe_rebuild_counter();
        s_i
    }

    fn maybe_rebuild_counter(&mut self) {
        self.updates += 1;
    }

    /// Whether accumulated float drift warrants a full rebuild.
    pub fn wants_rebuild(&self) -> bool {
        self.updates >= REBUILD_EVERY
    }

    pub fn touched(&self) -> &[(u32, f64)] {
        &self.scratch
    }

    /// Compare every cached S_i against the brute-force oracle.
    ///
    /// Returns the largest relative deviation. Used as a debug-mode
    /// staleness assertion and directly by tests.
    pub fn audit(&self, pop: &Population, params: &ModelParams) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..pop.len() {
            let oracle = competition_sum(pop, pop.position(i), params);
            let got = self.s[i];
            let denom = oracle.abs().max(1.0);
            worst = worst.max((got - oracle).abs() / denom);
        }
        worst
    }
}
