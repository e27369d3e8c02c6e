//! Exact along-path accumulators for martingale checks.
//!
//! For a test function `f`, the process
//! `M_t = <nu_t, f> - <nu_0, f> - int_0^t [B(nu_s) - D(nu_s)] ds`
//! with birth drift `B = sum_i gamma(x_i) (D*f)(x_i)` and death drift
//! `D = sum_i f(x_i) [mu(x_i) + alpha(x_i) S_i]` is a martingale with
//! predictable bracket
//! `<M>_t = int_0^t [sum_i gamma(x_i)(D*f^2)(x_i) + sum_i f^2(x_i)(mu + alpha S_i)] ds`.
//!
//! The population is piecewise constant between events, so both time
//! integrals are computed exactly by accumulating `integrand * dt` and
//! updating the integrand sums incrementally at each effective event.

use crate::params::ModelParams;
use crate::population::Population;
use crate::testfn::TestFn;

#[derive(Debug, Clone)]
pub struct MartingaleObserver {
    pub f: TestFn,
    // per-individual cached values, index-aligned with the population
    f1: Vec<f64>,
    f2: Vec<f64>,
    gconv1: Vec<f64>, // gamma(x_i) * (D*f)(x_i)
    gconv2: Vec<f64>, // gamma(x_i) * (D*f^2)(x_i)
    // running integrand sums
    sum_f: f64,
    sum_f2: f64,
    sum_gconv1: f64,
    sum_gconv2: f64,
    sum_mu_f: f64,
    sum_mu_f2: f64,
    sum_comp_f: f64,  // sum_i f(x_i) alpha(x_i) S_i
    sum_comp_f2: f64, // sum_i f^2(x_i) alpha(x_i) S_i
    // accumulated integrals
    pub drift_int: f64,
    pub bracket_int: f64,
    /// integral of sum_i f^2(x_i) ds (used by scaling limit brackets)
    pub int_f2: f64,
    pub initial_sum_f: f64,
}

impl MartingaleObserver {
    pub fn new(f: TestFn, pop: &Population, params: &ModelParams, s: &[f64]) -> Self {
        let n = pop.len();
        let mut obs = MartingaleObserver {
            f,
            f1: Vec::with_capacity(n),
            f2: Vec::with_capacity(n),
            gconv1: Vec::with_capacity(n),
            gconv2: Vec::with_capacity(n),
            sum_f: 0.0,
            sum_f2: 0.0,
            sum_gconv1: 0.0,
            sum_gconv2: 0.0,
            sum_mu_f: 0.0,
            sum_mu_f2: 0.0,
            sum_comp_f: 0.0,
            sum_comp_f2: 0.0,
            drift_int: 0.0,
            bracket_int: 0.0,
            int_f2: 0.0,
            initial_sum_f: 0.0,
        };
        for i in 0..n {
            let x = pop.position(i);
            obs.push_individual(x, params, s[i]);
        }
        obs.initial_sum_f = obs.sum_f;
        obs
    }

    fn push_individual(&mut self, x: &[f64], params: &ModelParams, s_i: f64) {
        let fv = self.f.eval(x, &params.domain);
        let fv2 = fv * fv;
        let gamma = params.gamma.eval(x);
        let (c1, c2) = if gamma > 0.0 {
            let c1 = gamma * self.f.convolve(&params.dispersal, x, &params.domain, 1);
            let c2 = gamma * self.f.convolve(&params.dispersal, x, &params.domain, 2);
            (c1, c2)
        } else {
            (0.0, 0.0)
        };
        let mu = params.mu.eval(x);
        let alpha = params.alpha.eval(x);
        self.f1.push(fv);
        self.f2.push(fv2);
        self.gconv1.push(c1);
        self.gconv2.push(c2);
        self.sum_f += fv;
        self.sum_f2 += fv2;
        self.sum_gconv1 += c1;
        self.sum_gconv2 += c2;
        self.sum_mu_f += mu * fv;
        self.sum_mu_f2 += mu * fv2;
        self.sum_comp_f += fv * alpha * s_i;
        self.sum_comp_f2 += fv2 * alpha * s_i;
    }

    /// Advance the time integrals by `dt` with the current (pre-event) state.
    pub fn accumulate(&mut self, dt: f64) {
        self.drift_int += dt * (self.sum_gconv1 - self.sum_mu_f - self.sum_comp_f);
        self.bracket_int += dt * (self.sum_gconv2 + self.sum_mu_f2 + self.sum_comp_f2);
        self.int_f2 += dt * self.sum_f2;
    }

    /// Account for a birth at `y`; called before the population push.
    /// `touched` lists the existing neighbors whose S grew by `u`.
    pub fn on_birth(
        &mut self,
        pop: &Population,
        params: &ModelParams,
        y: &[f64],
        s_new: f64,
        touched: &[(u32, f64)],
    ) {
        for &(j, u) in touched {
            let j = j as usize;
            let alpha_j = params.alpha.eval(pop.position(j));
            self.sum_comp_f += self.f1[j] * alpha_j * u;
            self.sum_comp_f2 += self.f2[j] * alpha_j * u;
        }
        self.push_individual(y, params, s_new);
    }

    /// Account for the death of individual `i`; called before the swap-remove.
    pub fn on_death(
        &mut self,
        pop: &Population,
        params: &ModelParams,
        i: usize,
        s_i: f64,
        touched: &[(u32, f64)],
    ) {
        for &(j, u) in touched {
            let j = j as usize;
            let alpha_j = params.alpha.eval(pop.position(j));
            self.sum_comp_f -= self.f1[j] * alpha_j * u;
            self.sum_comp_f2 -= self.f2[j] * alpha_j * u;
        }
        let x = pop.position(i);
        let mu = params.mu.eval(x);
        let alpha = params.alpha.eval(x);
        self.sum_f -= self.f1[i];
        self.sum_f2 -= self.f2[i];
        self.sum_gconv1 -= self.gconv1[i];
        self.sum_gconv2 -= self.gconv2[i];
        self.sum_mu_f -= mu * self.f1[i];
        self.sum_mu_f2 -= mu * self.f2[i];
        self.sum_comp_f -= self.f1[i] * alpha * s_i;
        self.sum_comp_f2 -= self.f2[i] * alpha * s_i;
        self.f1.swap_remove(i);
        self.f2.swap_remove(i);
        self.gconv1.swap_remove(i);
        self.gconv2.swap_remove(i);
    }

    /// Recompute the running sums from the cached per-individual values
    /// (counters float drift on very long runs; conv caches are kept).
    pub fn resync(&mut self, pop: &Population, params: &ModelParams, s: &[f64]) {
        self.sum_f = self.f1.iter().sum();
        self.sum_f2 = self.f2.iter().sum();
        self.sum_gconv1 = self.gconv1.iter().sum();
        self.sum_gconv2 = self.gconv2.iter().sum();
        self.sum_mu_f = 0.0;
        self.sum_mu_f2 = 0.0;
        self.sum_comp_f = 0.0;
        self.sum_comp_f2 = 0.0;
        for i in 0..pop.len() {
            let x = pop.position(i);
            let mu = params.mu.eval(x);
            let alpha = params.alpha.eval(x);
            self.sum_mu_f += mu * self.f1[i];
            self.sum_mu_f2 += mu * self.f2[i];
            self.sum_comp_f += self.f1[i] * alpha * s[i];
            self.sum_comp_f2 += self.f2[i] * alpha * s[i];
        }
    }

    pub fn current_sum_f(&self) -> f64 {
        self.sum_f
    }

    pub fn current_sum_f2(&self) -> f64 {
        self.sum_f2
    }

    /// Martingale value at the current time.
    pub fn martingale(&self) -> f64 {
        self.sum_f - self.initial_sum_f - self.drift_int
    }
}
