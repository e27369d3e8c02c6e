//! Exact continuous-time simulation of the spatial birth-death process.
//!
//! Two engines sample the same law:
//!
//! - [`EngineKind::Faithful`]: envelope thinning. Events are proposed at
//!   the envelope rates `(C gammabar N, mubar N, alphabar Ubar N^2)` and
//!   accepted with the exact rate ratios; rejected proposals advance the
//!   clock but change nothing (fictitious events).
//! - [`EngineKind::Indexed`]: exact total rates. Per-individual
//!   competition sums are maintained incrementally through a cell grid,
//!   so no N^2 proposal mass is needed; only dispersal displacements are
//!   still drawn by thinning.
//!
//! The faithful engine costs Theta(N^2) proposal mass regardless of
//! acceptance; the indexed engine is the default above 200 individuals.

pub mod grid;
pub mod observer;
pub mod tracker;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Placement;
use crate::params::ModelParams;
use crate::population::{interaction_load, sample_dispersal, Population};
use crate::rng::{exp_variate, replicate_rng, SimRng};
use crate::testfn::TestFn;
use crate::trace::{ObservablePoint, Snapshot, SnapshotPlan, Trace};
use observer::MartingaleObserver;
use rand::Rng;
use tracker::CompetitionTracker;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Faithful,
    Indexed,
    /// Faithful below 200 initial individuals, indexed above.
    Auto,
}

impl EngineKind {
    fn resolve(self, initial_count: usize) -> EngineKind {
        match self {
            EngineKind::Auto => {
                if initial_count > 200 {
                    EngineKind::Indexed
                } else {
                    EngineKind::Faithful
                }
            }
            other => other,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    Birth { parent: usize, child: Vec<f64> },
    NaturalDeath { index: usize },
    CompetitionDeath { index: usize },
    /// Thinning rejection: the clock advanced, nothing changed.
    Fictitious,
    /// Accepted birth whose seed landed outside a bounded box.
    SeedLost,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounters {
    pub births: u64,
    pub natural_deaths: u64,
    pub competition_deaths: u64,
    pub fictitious: u64,
    pub seeds_lost: u64,
    pub total_events: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Horizon {
    UntilTime(f64),
    UntilEvents(u64),
    UntilExtinct { t_max: f64 },
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("step on an empty population")]
    EmptyPopulation,
    #[error("event budget exceeded ({cap} events) at t = {t}")]
    BudgetExceeded { cap: u64, t: f64 },
    #[error("competition index stale: max relative deviation {deviation}")]
    IndexStale { deviation: f64 },
}

/// How to build the initial configuration of a replicate.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    /// Explicit list of positions.
    Points { positions: Vec<Vec<f64>> },
    /// `count` individuals stacked at one position.
    Replicated { position: Vec<f64>, count: usize },
    /// Poisson(intensity x volume) points, i.i.d. uniform on the window
    /// (defaults to the whole domain when bounded).
    PoissonUniform { intensity: f64, window: Option<Vec<(f64, f64)>> },
    /// Fixed count of i.i.d. uniform points.
    UniformIid { count: usize, window: Option<Vec<(f64, f64)>> },
}

impl InitialCondition {
    fn default_window(domain: &crate::domain::SpatialDomain) -> Vec<(f64, f64)> {
        match domain {
            crate::domain::SpatialDomain::Torus { side, dim } => {
                vec![(-side / 2.0, side / 2.0); *dim]
            }
            crate::domain::SpatialDomain::Box { bounds } => bounds.clone(),
            _ => panic!("an explicit window is required on this domain"),
        }
    }

    pub fn build(&self, domain: &crate::domain::SpatialDomain, rng: &mut SimRng) -> Population {
        match self {
            InitialCondition::Points { positions } => {
                Population::from_positions(domain.dim(), positions)
            }
            InitialCondition::Replicated { position, count } => {
                let mut pop = Population::with_capacity(domain.dim(), *count);
                for _ in 0..*count {
                    pop.push(position);
                }
                pop
            }
            InitialCondition::PoissonUniform { intensity, window } => {
                let w = window.clone().unwrap_or_else(|| Self::default_window(domain));
                crate::population::poisson_configuration(&w, *intensity, rng)
            }
            InitialCondition::UniformIid { count, window } => {
                let w = window.clone().unwrap_or_else(|| Self::default_window(domain));
                crate::population::uniform_configuration(&w, *count, rng)
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Action {
    Birth { parent: usize, child: Vec<f64> },
    NaturalDeath(usize),
    CompetitionDeath(usize),
    Fictitious,
    SeedLost,
}

struct Draw {
    dt: f64,
    action: Action,
}

pub const DEFAULT_EVENT_CAP: u64 = 100_000_000;

/// One replicate's running state.
pub struct SimState {
    pub params: Arc<ModelParams>,
    pub pop: Population,
    pub t: f64,
    pub rng: SimRng,
    pub engine: EngineKind,
    pub counters: EventCounters,
    pub event_cap: u64,
    tracker: Option<CompetitionTracker>,
    observers: Vec<MartingaleObserver>,
    // running rate sums, maintained only for spatially varying fields
    sum_gamma: f64,
    sum_mu: f64,
}

impl SimState {
    pub fn new(params: Arc<ModelParams>, pop: Population, engine: EngineKind, rng: SimRng) -> Self {
        let engine = engine.resolve(pop.len());
        let tracker = if engine == EngineKind::Indexed {
            Some(CompetitionTracker::build(&pop, &params))
        } else {
            None
        };
        let mut state = SimState {
            params,
            pop,
            t: 0.0,
            rng,
            engine,
            counters: EventCounters::default(),
            event_cap: DEFAULT_EVENT_CAP,
            tracker,
            observers: Vec::new(),
            sum_gamma: 0.0,
            sum_mu: 0.0,
        };
        state.resync_rate_sums();
        state
    }

    /// Attach martingale observers for the given test functions.
    pub fn with_observers(mut self, fs: &[TestFn]) -> Self {
        if fs.is_empty() {
            return self;
        }
        if self.tracker.is_none() {
            self.tracker = Some(CompetitionTracker::build(&self.pop, &self.params));
        }
        let s = &self.tracker.as_ref().unwrap().s;
        self.observers =
            fs.iter().map(|f| MartingaleObserver::new(*f, &self.pop, &self.params, s)).collect();
        self
    }

    pub fn with_event_cap(mut self, cap: u64) -> Self {
        self.event_cap = cap;
        self
    }

    fn resync_rate_sums(&mut self) {
        if !self.params.gamma.is_constant() {
            self.sum_gamma = self.pop.iter().map(|x| self.params.gamma.eval(x)).sum();
        }
        if !self.params.mu.is_constant() {
            self.sum_mu = self.pop.iter().map(|x| self.params.mu.eval(x)).sum();
        }
    }

    /// Envelope event rates `(m1, m2, m3)` of the thinning construction:
    /// `m1 = C gammabar N`, `m2 = mubar N`, `m3 = alphabar Ubar N^2`.
    pub fn event_rates(&self) -> (f64, f64, f64) {
        let n = self.pop.len() as f64;
        let p = &self.params;
        (
            p.envelope_c() * p.gamma_bar() * n,
            p.mu_bar() * n,
            p.alpha_bar() * p.u_bar() * n * n,
        )
    }

    /// Exact class rates of the indexed engine:
    /// `(sum gamma(x_i), sum mu(x_i), sum alpha(x_i) S_i)`.
    pub fn indexed_rates(&self) -> (f64, f64, f64) {
        let n = self.pop.len() as f64;
        let p = &self.params;
        let b = if p.gamma.is_constant() { p.gamma_bar() * n } else { self.sum_gamma };
        let d = if p.mu.is_constant() { p.mu_bar() * n } else { self.sum_mu };
        let c = match &self.tracker {
            Some(t) => t.total_alpha_s.max(0.0),
            None => {
                // no tracker: brute-force the exact competition rate
                (0..self.pop.len())
                    .map(|i| {
                        p.alpha.eval(self.pop.position(i))
                            * crate::population::competition_sum(
                                &self.pop,
                                self.pop.position(i),
                                p,
                            )
                    })
                    .sum()
            }
        };
        (b, d, c)
    }

    fn draw_faithful(&mut self) -> Option<Draw> {
        let n = self.pop.len();
        let (m1, m2, m3) = self.event_rates();
        let m = m1 + m2 + m3;
        if m <= 0.0 {
            return None;
        }
        let dt = exp_variate(&mut self.rng, m);
        let pick = self.rng.random::<f64>() * m;
        let p = &self.params;
        let action = if pick < m1 {
            // seed production proposal
            let parent = self.rng.random_range(0..n);
            let x = self.pop.position(parent);
            let mut z = vec![0.0; p.dim()];
            p.dispersal.sample_envelope(&mut self.rng, &mut z);
            let accept = (p.gamma.eval(x) / p.gamma_bar()) * p.dispersal.thinning_ratio(&z);
            if self.rng.random::<f64>() < accept {
                let mut child = vec![0.0; p.dim()];
                match p.domain.place(x, &z, &mut child) {
                    Placement::Inside => Action::Birth { parent, child },
                    Placement::Lost => Action::SeedLost,
                }
            } else {
                Action::Fictitious
            }
        } else if pick < m1 + m2 {
            // intrinsic death proposal
            let i = self.rng.random_range(0..n);
            let accept = p.mu.eval(self.pop.position(i)) / p.mu_bar();
            if self.rng.random::<f64>() < accept {
                Action::NaturalDeath(i)
            } else {
                Action::Fictitious
            }
        } else {
            // competition proposal; j drawn with replacement so j = i
            // carries the self-competition U(x, x) of the pair integral
            let i = self.rng.random_range(0..n);
            let j = self.rng.random_range(0..n);
            let mut z = vec![0.0; p.dim()];
            p.domain.displacement(self.pop.position(i), self.pop.position(j), &mut z);
            let accept = p.competition.eval(&z) * p.alpha.eval(self.pop.position(i))
                / (p.u_bar() * p.alpha_bar());
            if self.rng.random::<f64>() < accept {
                Action::CompetitionDeath(i)
            } else {
                Action::Fictitious
            }
        };
        Some(Draw { dt, action })
    }

    /// Select an index with probability proportional to `weights`, given
    /// their maintained total. Clamps to the last entry on float slack.
    fn weighted_index(weights: &[f64], total: f64, u: f64) -> usize {
        let mut target = u * total;
        for (i, w) in weights.iter().enumerate() {
            if target < *w {
                return i;
            }
            target -= w;
        }
        weights.len() - 1
    }

    fn pick_rate_weighted(&mut self, rate: &crate::rates::RateField) -> usize {
        let n = self.pop.len();
        if rate.is_constant() {
            return self.rng.random_range(0..n);
        }
        let bound = rate.bound();
        loop {
            let i = self.rng.random_range(0..n);
            if self.rng.random::<f64>() * bound < rate.eval(self.pop.position(i)) {
                return i;
            }
        }
    }

    fn draw_indexed(&mut self) -> Option<Draw> {
        let (b, d, c) = self.indexed_rates();
        let m = b + d + c;
        if m <= 0.0 {
            return None;
        }
        let dt = exp_variate(&mut self.rng, m);
        let pick = self.rng.random::<f64>() * m;
        let action = if pick < b {
            let gamma = self.params.gamma.clone();
            let parent = self.pick_rate_weighted(&gamma);
            let params = self.params.clone();
            let mut child = vec![0.0; params.dim()];
            match sample_dispersal(&params, self.pop.position(parent), &mut self.rng, &mut child) {
                Some(()) => Action::Birth { parent, child },
                None => Action::SeedLost,
            }
        } else if pick < b + d {
            let mu = self.params.mu.clone();
            Action::NaturalDeath(self.pick_rate_weighted(&mu))
        } else {
            let tracker = self.tracker.as_ref().expect("indexed engine has a tracker");
            let u = self.rng.random::<f64>();
            Action::CompetitionDeath(Self::weighted_index(
                &tracker.alpha_s,
                tracker.total_alpha_s,
                u,
            ))
        };
        Some(Draw { dt, action })
    }

    fn draw(&mut self) -> Result<Option<Draw>, SimError> {
        if self.pop.is_empty() {
            return Err(SimError::EmptyPopulation);
        }
        Ok(match self.engine {
            EngineKind::Faithful => self.draw_faithful(),
            EngineKind::Indexed => self.draw_indexed(),
            EngineKind::Auto => unreachable!("engine resolved at construction"),
        })
    }

    fn advance_time(&mut self, dt: f64) {
        for obs in &mut self.observers {
            obs.accumulate(dt);
        }
        self.t += dt;
    }

    fn apply(&mut self, action: Action) -> EventKind {
        let params = self.params.clone();
        self.counters.total_events += 1;
        match action {
            Action::Birth { parent, child } => {
                if let Some(tracker) = &mut self.tracker {
                    let s_new = tracker.add(&self.pop, &params, &child);
                    for obs in &mut self.observers {
                        obs.on_birth(&self.pop, &params, &child, s_new, tracker.touched());
                    }
                }
                if !params.gamma.is_constant() {
                    self.sum_gamma += params.gamma.eval(&child);
                }
                if !params.mu.is_constant() {
                    self.sum_mu += params.mu.eval(&child);
                }
                self.pop.push(&child);
                self.counters.births += 1;
                self.after_update();
                EventKind::Birth { parent, child }
            }
            Action::NaturalDeath(i) | Action::CompetitionDeath(i) => {
                let competition = matches!(action, Action::CompetitionDeath(_));
                if let Some(tracker) = &mut self.tracker {
                    let s_i = tracker.remove(&self.pop, &params, i);
                    for obs in &mut self.observers {
                        obs.on_death(&self.pop, &params, i, s_i, tracker.touched());
                    }
                }
                let x = self.pop.position(i);
                if !params.gamma.is_constant() {
                    self.sum_gamma -= params.gamma.eval(x);
                }
                if !params.mu.is_constant() {
                    self.sum_mu -= params.mu.eval(x);
                }
                self.pop.swap_remove(i);
                if competition {
                    self.counters.competition_deaths += 1;
                    self.after_update();
                    EventKind::CompetitionDeath { index: i }
                } else {
                    self.counters.natural_deaths += 1;
                    self.after_update();
                    EventKind::NaturalDeath { index: i }
                }
            }
            Action::Fictitious => {
                self.counters.fictitious += 1;
                EventKind::Fictitious
            }
            Action::SeedLost => {
                self.counters.seeds_lost += 1;
                EventKind::SeedLost
            }
        }
    }

    fn after_update(&mut self) {
        if self.tracker.is_none() {
            return;
        }
        if self.tracker.as_ref().unwrap().wants_rebuild() {
            let mut tracker = self.tracker.take().unwrap();
            tracker.rebuild(&self.pop, &self.params);
            self.resync_rate_sums();
            for obs in &mut self.observers {
                obs.resync(&self.pop, &self.params, &tracker.s);
            }
            self.tracker = Some(tracker);
        }
        #[cfg(debug_assertions)]
        if self.counters.total_events % 65_536 == 0 {
            let dev = self.tracker.as_ref().unwrap().audit(&self.pop, &self.params);
            assert!(dev <= 1e-9, "competition index stale: deviation {dev}");
        }
    }

    /// Audit the cached competition sums against the brute-force oracle.
    pub fn verify_index(&self) -> Result<(), SimError> {
        if let Some(tracker) = &self.tracker {
            let deviation = tracker.audit(&self.pop, &self.params);
            if deviation > 1e-9 {
                return Err(SimError::IndexStale { deviation });
            }
        }
        Ok(())
    }

    /// Advance by one proposed event: waiting time, class selection,
    /// thinning, state change. Returns the realized event.
    pub fn step(&mut self) -> Result<Event, SimError> {
        match self.draw()? {
            None => Err(SimError::EmptyPopulation), // zero total rate on a live population
            Some(d) => {
                self.advance_time(d.dt);
                let kind = self.apply(d.action);
                Ok(Event { time: self.t, kind })
            }
        }
    }

    fn record_snapshot(&self, plan: &SnapshotPlan) -> Snapshot {
        let n = self.pop.len();
        let positions = plan.record_positions.then(|| self.pop.coords().to_vec());
        let pair_u = plan.record_pair_u.then(|| self.pair_u());
        let window_count = plan.count_radius.map(|r| {
            let origin = vec![0.0; self.pop.dim()];
            self.pop
                .iter()
                .filter(|x| self.params.domain.distance(x, &origin) <= r)
                .count()
        });
        let load = plan.load_radius.map(|r| self.load_within(r));
        let observables = self
            .observers
            .iter()
            .map(|o| ObservablePoint {
                value: o.current_sum_f(),
                drift_int: o.drift_int,
                bracket_int: o.bracket_int,
                int_f2: o.int_f2,
            })
            .collect();
        Snapshot {
            t: self.t,
            count: n,
            births_cum: self.counters.births,
            ndeaths_cum: self.counters.natural_deaths,
            cdeaths_cum: self.counters.competition_deaths,
            fictitious_cum: self.counters.fictitious,
            seeds_lost_cum: self.counters.seeds_lost,
            positions,
            pair_u,
            window_count,
            load,
            observables,
        }
    }

    /// Off-diagonal pair sum `sum_{i != j} U(x_i - x_j)`.
    fn pair_u(&self) -> f64 {
        match &self.tracker {
            Some(t) => {
                let total: f64 = t.s.iter().sum();
                total - self.pop.len() as f64 * self.params.u_at_zero()
            }
            None => {
                let mut z = vec![0.0; self.pop.dim()];
                let mut total = 0.0;
                for i in 0..self.pop.len() {
                    for j in 0..self.pop.len() {
                        if i == j {
                            continue;
                        }
                        self.params.domain.displacement(
                            self.pop.position(i),
                            self.pop.position(j),
                            &mut z,
                        );
                        total += self.params.competition.eval(&z);
                    }
                }
                total
            }
        }
    }

    fn load_within(&self, radius: f64) -> f64 {
        match &self.tracker {
            Some(t) => {
                let origin = vec![0.0; self.pop.dim()];
                (0..self.pop.len())
                    .filter(|&i| self.params.domain.distance(self.pop.position(i), &origin) <= radius)
                    .map(|i| t.s[i])
                    .sum()
            }
            None => interaction_load(&self.pop, &self.params, radius),
        }
    }

    /// Run until the horizon, recording scheduled snapshots.
    ///
    /// Deterministic given the seed: the trace depends only on the
    /// configuration and the RNG stream.
    pub fn run(&mut self, horizon: Horizon, plan: &SnapshotPlan) -> Result<Trace, SimError> {
        let t_limit = match horizon {
            Horizon::UntilTime(t) => t,
            Horizon::UntilExtinct { t_max } => t_max,
            Horizon::UntilEvents(_) => f64::INFINITY,
        };
        let mut snapshots = Vec::with_capacity(plan.times.len());
        let mut next_snap = 0usize;
        let mut extinct_at: Option<f64> = None;

        // snapshots scheduled at or before the start time
        while next_snap < plan.times.len() && plan.times[next_snap] <= self.t {
            snapshots.push(self.record_snapshot(plan));
            next_snap += 1;
        }

        loop {
            if self.pop.is_empty() {
                extinct_at = extinct_at.or(Some(self.t));
                if t_limit.is_finite() {
                    self.flush_snapshots(plan, &mut snapshots, &mut next_snap, t_limit);
                    self.t = t_limit;
                }
                break;
            }
            if let Horizon::UntilEvents(k) = horizon {
                if self.counters.total_events >= k {
                    break;
                }
            }
            let Some(d) = self.draw()? else {
                // all rates vanish: the state is frozen until the horizon
                if t_limit.is_finite() {
                    self.flush_snapshots(plan, &mut snapshots, &mut next_snap, t_limit);
                    self.t = t_limit;
                }
                break;
            };
            let t_event = self.t + d.dt;
            if t_event > t_limit {
                self.flush_snapshots(plan, &mut snapshots, &mut next_snap, t_limit);
                self.advance_time(t_limit - self.t);
                break;
            }
            self.flush_snapshots(plan, &mut snapshots, &mut next_snap, t_event);
            self.advance_time(t_event - self.t);
            let was_death = matches!(d.action, Action::NaturalDeath(_) | Action::CompetitionDeath(_));
            self.apply(d.action);
            if was_death && self.pop.is_empty() {
                extinct_at = Some(self.t);
            }
            if self.counters.total_events >= self.event_cap {
                return Err(SimError::BudgetExceeded { cap: self.event_cap, t: self.t });
            }
        }

        Ok(Trace {
            replicate_id: 0,
            dim: self.pop.dim(),
            snapshots,
            extinct_at,
            total_events: self.counters.total_events,
            final_count: self.pop.len(),
            final_t: self.t,
        })
    }

    fn flush_snapshots(
        &mut self,
        plan: &SnapshotPlan,
        snapshots: &mut Vec<Snapshot>,
        next_snap: &mut usize,
        target: f64,
    ) {
        while *next_snap < plan.times.len() && plan.times[*next_snap] <= target {
            let ts = plan.times[*next_snap];
            self.advance_time(ts - self.t);
            snapshots.push(self.record_snapshot(plan));
            *next_snap += 1;
        }
    }
}

/// A replicate fleet: same model, per-replicate RNG streams.
#[derive(Clone)]
pub struct ReplicateSpec {
    pub params: Arc<ModelParams>,
    pub engine: EngineKind,
    pub initial: InitialCondition,
    pub horizon: Horizon,
    pub plan: SnapshotPlan,
    pub observers: Vec<TestFn>,
    pub master_seed: u64,
    pub replicates: usize,
    pub event_cap: u64,
}

impl ReplicateSpec {
    pub fn new(
        params: Arc<ModelParams>,
        engine: EngineKind,
        initial: InitialCondition,
        horizon: Horizon,
        plan: SnapshotPlan,
    ) -> Self {
        ReplicateSpec {
            params,
            engine,
            initial,
            horizon,
            plan,
            observers: Vec::new(),
            master_seed: 0,
            replicates: 1,
            event_cap: DEFAULT_EVENT_CAP,
        }
    }

    pub fn with_observers(mut self, fs: Vec<TestFn>) -> Self {
        self.observers = fs;
        self
    }

    pub fn seeded(mut self, master_seed: u64, replicates: usize) -> Self {
        self.master_seed = master_seed;
        self.replicates = replicates;
        self
    }

    pub fn with_event_cap(mut self, cap: u64) -> Self {
        self.event_cap = cap;
        self
    }

    fn run_one(&self, replicate_id: u64) -> Result<Trace, SimError> {
        let mut rng = replicate_rng(self.master_seed, replicate_id);
        let pop = self.initial.build(&self.params.domain, &mut rng);
        let mut state = SimState::new(self.params.clone(), pop, self.engine, rng)
            .with_observers(&self.observers)
            .with_event_cap(self.event_cap);
        let mut trace = state.run(self.horizon, &self.plan)?;
        trace.replicate_id = replicate_id;
        Ok(trace)
    }

    /// Run all replicates (in parallel), ordered by replicate id.
    pub fn run_all(&self) -> Result<Vec<Trace>, SimError> {
        (0..self.replicates as u64)
            .into_par_iter()
            .map(|id| self.run_one(id))
            .collect()
    }

    /// Single-threaded variant, used to verify thread-count independence.
    pub fn run_all_serial(&self) -> Result<Vec<Trace>, SimError> {
        (0..self.replicates as u64).map(|id| self.run_one(id)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::SpatialDomain;
    use crate::kernel::Kernel;
    use crate::params::{make_params, presets};
    use crate::rates::RateField;

    fn fig_state(n0: usize, engine: EngineKind, seed: u64) -> SimState {
        let params = Arc::new(presets::fig_params(40.0));
        let pos: Vec<Vec<f64>> = vec![vec![0.0]; n0];
        let pop = Population::from_positions(1, &pos);
        SimState::new(params, pop, engine, replicate_rng(seed, 0))
    }

    #[test]
    fn envelope_rates_reference_values() {
        let s = fig_state(1, EngineKind::Faithful, 1);
        assert_eq!(s.event_rates(), (5.0, 1.0, 1.0));
        let s3 = fig_state(3, EngineKind::Faithful, 1);
        assert_eq!(s3.event_rates(), (15.0, 3.0, 9.0));
        let s0 = fig_state(0, EngineKind::Faithful, 1);
        assert_eq!(s0.event_rates(), (0.0, 0.0, 0.0));
    }

    #[test]
    fn step_on_empty_population_errors() {
        let mut s = fig_state(0, EngineKind::Faithful, 1);
        assert!(matches!(s.step(), Err(SimError::EmptyPopulation)));
    }

    #[test]
    fn saturated_thinning_has_no_fictitious_events() {
        // constant rates, D~ = D with C = 1, and U covering the whole torus
        // (U = Ubar everywhere): every proposal is accepted
        let params = Arc::new(
            make_params(
                SpatialDomain::Torus { side: 10.0, dim: 1 },
                RateField::constant(1.0),
                RateField::constant(1.0),
                RateField::constant(0.05),
                Kernel::tophat(1, 3.0, 1.0),
                Kernel::tophat(1, 5.0, 10.0), // density 1 everywhere within min-image range
            )
            .unwrap(),
        );
        let pop = Population::from_positions(1, &vec![vec![0.0]; 20]);
        let mut s = SimState::new(params, pop, EngineKind::Faithful, replicate_rng(2, 0));
        for _ in 0..10_000 {
            if s.pop.is_empty() {
                break;
            }
            s.step().unwrap();
        }
        assert_eq!(s.counters.fictitious, 0, "saturated thinning must accept everything");
    }

    #[test]
    fn single_individual_birth_fraction() {
        // first effective event is a birth w.p. gamma/(gamma+mu+alpha*U(0)) = 5/7
        let mut births = 0u32;
        let total = 20_000u32;
        for rep in 0..total {
            let mut s = fig_state(1, EngineKind::Faithful, 1000 + rep as u64);
            loop {
                let e = s.step().unwrap();
                match e.kind {
                    EventKind::Birth { .. } => {
                        births += 1;
                        break;
                    }
                    EventKind::NaturalDeath { .. } | EventKind::CompetitionDeath { .. } => break,
                    _ => continue,
                }
            }
        }
        let p = births as f64 / total as f64;
        let expect = 5.0 / 7.0;
        let se = (expect * (1.0 - expect) / total as f64).sqrt();
        assert!((p - expect).abs() < 3.5 * se, "birth fraction {p} vs {expect}");
    }

    #[test]
    fn single_individual_branch_probabilities_agree_across_engines() {
        // with one individual the indexed rates coincide with the faithful
        // effective rates exactly
        let f = fig_state(1, EngineKind::Faithful, 3);
        let i = fig_state(1, EngineKind::Indexed, 3);
        let (b, d, c) = i.indexed_rates();
        assert_eq!((b, d, c), (5.0, 1.0, 1.0));
        // faithful envelope rates with acceptance 1 for this configuration
        assert_eq!(f.event_rates(), (5.0, 1.0, 1.0));
    }

    #[test]
    fn pure_death_extinction_time_matches_chain() {
        // N0 = 3, mu = 1: mean extinction time 1 + 1/2 + 1/3 = 11/6
        let params = Arc::new(
            make_params(
                SpatialDomain::Torus { side: 10.0, dim: 1 },
                RateField::constant(0.0),
                RateField::constant(1.0),
                RateField::constant(0.0),
                Kernel::tophat(1, 1.0, 1.0),
                Kernel::tophat(1, 0.5, 1.0),
            )
            .unwrap(),
        );
        let spec = ReplicateSpec::new(
            params,
            EngineKind::Faithful,
            InitialCondition::UniformIid { count: 3, window: None },
            Horizon::UntilExtinct { t_max: 1e9 },
            SnapshotPlan::default(),
        )
        .seeded(42, 10_000);
        let traces = spec.run_all().unwrap();
        let times: Vec<f64> = traces.iter().map(|t| t.extinct_at.unwrap()).collect();
        let n = times.len() as f64;
        let mean = times.iter().sum::<f64>() / n;
        let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        let expect = 11.0 / 6.0;
        assert!((mean - expect).abs() < 3.0 * se, "mean {mean} vs {expect} (se {se})");
        // population is monotone nonincreasing under pure death
        for t in &traces[..100] {
            assert_eq!(t.total_events, 3);
        }
    }

    #[test]
    fn identical_seeds_give_identical_traces() {
        for engine in [EngineKind::Faithful, EngineKind::Indexed] {
            let params = Arc::new(presets::fig_params(40.0));
            let spec = ReplicateSpec::new(
                params,
                engine,
                InitialCondition::Replicated { position: vec![0.0], count: 1 },
                Horizon::UntilTime(5.0),
                SnapshotPlan::regular(5.0, 0.5).with_positions(),
            )
            .seeded(7, 8);
            let a = spec.run_all().unwrap();
            let b = spec.run_all().unwrap();
            let c = spec.run_all_serial().unwrap();
            assert_eq!(a, b, "parallel runs must be bit-identical ({engine:?})");
            assert_eq!(a, c, "thread count must not matter ({engine:?})");
        }
    }

    #[test]
    fn counters_consistent_with_population() {
        let mut s = fig_state(5, EngineKind::Indexed, 11);
        for _ in 0..2000 {
            if s.pop.is_empty() {
                break;
            }
            s.step().unwrap();
        }
        let net = 5 + s.counters.births as i64
            - s.counters.natural_deaths as i64
            - s.counters.competition_deaths as i64;
        assert_eq!(net, s.pop.len() as i64);
    }

    #[test]
    fn box_domain_discards_outside_seeds() {
        // dispersal radius comparable to the box: many seeds land outside
        // and are dropped without changing the population
        let params = Arc::new(
            make_params(
                SpatialDomain::Box { bounds: vec![(-1.0, 1.0)] },
                RateField::constant(3.0),
                RateField::constant(0.2),
                RateField::constant(0.5),
                Kernel::tophat(1, 3.0, 1.0),
                Kernel::tophat(1, 0.5, 1.0),
            )
            .unwrap(),
        );
        for engine in [EngineKind::Faithful, EngineKind::Indexed] {
            let pop = Population::from_positions(1, &vec![vec![0.0]; 10]);
            let mut s = SimState::new(params.clone(), pop, engine, replicate_rng(31, 0));
            let plan = SnapshotPlan::regular(6.0, 1.0).with_positions();
            let trace = s.run(Horizon::UntilTime(6.0), &plan).unwrap();
            assert!(s.counters.seeds_lost > 0, "{engine:?}: no seeds were lost");
            let net = 10 + s.counters.births as i64
                - s.counters.natural_deaths as i64
                - s.counters.competition_deaths as i64;
            assert_eq!(net, s.pop.len() as i64, "{engine:?}: lost seeds must not count as births");
            for snap in &trace.snapshots {
                for x in snap.positions.as_ref().unwrap().iter() {
                    assert!((-1.0..=1.0).contains(x), "{engine:?}: position {x} escaped the box");
                }
            }
        }
    }

    #[test]
    fn until_events_horizon_counts_proposals() {
        let params = Arc::new(presets::fig_params(40.0));
        let pop = Population::from_positions(1, &vec![vec![0.0]; 10]);
        let mut s = SimState::new(params, pop, EngineKind::Indexed, replicate_rng(9, 0));
        let trace = s.run(Horizon::UntilEvents(100), &SnapshotPlan::default()).unwrap();
        assert_eq!(trace.total_events, 100);
        s.verify_index().unwrap();
    }

    #[test]
    fn budget_guard_trips() {
        let params = Arc::new(presets::fig_params(40.0));
        let pop = Population::from_positions(1, &vec![vec![0.0]; 10]);
        let mut s = SimState::new(params, pop, EngineKind::Faithful, replicate_rng(1, 0))
            .with_event_cap(100);
        let err = s.run(Horizon::UntilTime(1e9), &SnapshotPlan::default());
        assert!(matches!(err, Err(SimError::BudgetExceeded { .. })));
    }

    #[test]
    fn snapshots_cover_schedule_after_extinction() {
        let params = Arc::new(
            make_params(
                SpatialDomain::Torus { side: 10.0, dim: 1 },
                RateField::constant(0.0),
                RateField::constant(2.0),
                RateField::constant(0.0),
                Kernel::tophat(1, 1.0, 1.0),
                Kernel::tophat(1, 0.5, 1.0),
            )
            .unwrap(),
        );
        let pop = Population::from_positions(1, &[vec![0.0]]);
        let mut s = SimState::new(params, pop, EngineKind::Faithful, replicate_rng(5, 0));
        let trace = s.run(Horizon::UntilTime(100.0), &SnapshotPlan::regular(100.0, 10.0)).unwrap();
        assert_eq!(trace.snapshots.len(), 11);
        assert!(trace.extinct_at.is_some());
        assert_eq!(trace.snapshots.last().unwrap().count, 0);
    }
}
