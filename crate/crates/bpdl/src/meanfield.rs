//! Deterministic solver for the nonlocal logistic equation
//! `d/dt xi = gamma (xi * D) - mu xi - alpha xi (xi * U)`
//! on a periodic grid, plus equilibrium analysis of the map
//! `F f = gamma (f * D) / (mu + alpha (f * U))`.

use serde::Serialize;
use thiserror::Error;

use crate::kernel::Kernel;
use crate::params::ModelParams;
use crate::stats::dist::linear_fit;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    /// Torus side length.
    pub side: f64,
    /// Grid points per axis.
    pub n: usize,
    /// 1 or 2.
    pub dim: usize,
}

impl GridSpec {
    pub fn new_1d(side: f64, n: usize) -> Self {
        GridSpec { side, n, dim: 1 }
    }

    pub fn h(&self) -> f64 {
        self.side / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Coordinate of grid point `k` along one axis.
    pub fn coord(&self, k: usize) -> f64 {
        -0.5 * self.side + k as f64 * self.h()
    }
}

/// A gridded nonnegative density on the torus.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl DensityField {
    pub fn uniform(spec: GridSpec, value: f64) -> Self {
        DensityField { values: vec![value; spec.len()], spec }
    }

    /// Build from a function of the grid position.
    pub fn from_fn(spec: GridSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut values = Vec::with_capacity(spec.len());
        match spec.dim {
            1 => {
                for i in 0..spec.n {
                    values.push(f(&[spec.coord(i)]));
                }
            }
            2 => {
                for j in 0..spec.n {
                    for i in 0..spec.n {
                        values.push(f(&[spec.coord(i), spec.coord(j)]));
                    }
                }
            }
            d => panic!("unsupported grid dimension {d}"),
        }
        DensityField { spec, values }
    }

    /// Total mass `h^d * sum values`.
    pub fn mass(&self) -> f64 {
        self.spec.cell_volume() * self.values.iter().sum::<f64>()
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `h^d * sum (v - c)^2`.
    pub fn l2_sq_to(&self, c: f64) -> f64 {
        self.spec.cell_volume() * self.values.iter().map(|v| (v - c) * (v - c)).sum::<f64>()
    }

    pub fn sup_dist_to(&self, c: f64) -> f64 {
        self.values.iter().map(|v| (v - c).abs()).fold(0.0, f64::max)
    }
}

/// Tabulated kernel weights on periodic grid offsets, renormalized so the
/// stencil sums exactly to the kernel mass (this makes the constant
/// carrying capacity an exact grid equilibrium).
#[derive(Debug, Clone)]
pub struct KernelStencil {
    /// (flat index offset contributions) as (dx, dy, weight); dy = 0 in 1-d.
    offsets: Vec<(i64, i64, f64)>,
    pub mass: f64,
}

impl KernelStencil {
    pub fn build(kernel: &Kernel, spec: &GridSpec) -> Result<Self, MeanFieldError> {
        let h = spec.h();
        let m = (kernel.effective_radius() / h).ceil() as i64;
        if 2 * m + 1 > spec.n as i64 {
            return Err(MeanFieldError::KernelWiderThanTorus {
                radius: kernel.effective_radius(),
                side: spec.side,
            });
        }
        let mut offsets = Vec::new();
        let mut total = 0.0;
        match spec.dim {
            1 => {
                for dx in -m..=m {
                    let w = kernel.eval(&[dx as f64 * h]) * h;
                    if w != 0.0 {
                        offsets.push((dx, 0, w));
                        total += w;
                    }
                }
            }
            2 => {
                for dy in -m..=m {
                    for dx in -m..=m {
                        let w = kernel.eval(&[dx as f64 * h, dy as f64 * h]) * h * h;
                        if w != 0.0 {
                            offsets.push((dx, dy, w));
                            total += w;
                        }
                    }
                }
            }
            d => panic!("unsupported grid dimension {d}"),
        }
        if total <= 0.0 {
            return Err(MeanFieldError::EmptyStencil);
        }
        let scale = kernel.mass / total;
        for o in offsets.iter_mut() {
            o.2 *= scale;
        }
        Ok(KernelStencil { offsets, mass: kernel.mass })
    }

    /// Periodic convolution `(K * v)` by direct stencil sum.
    pub fn convolve(&self, spec: &GridSpec, v: &[f64], out: &mut [f64]) {
        let n = spec.n as i64;
        match spec.dim {
            1 => {
                for i in 0..n {
                    let mut acc = 0.0;
                    for &(dx, _, w) in &self.offsets {
                        let j = (i + dx).rem_euclid(n) as usize;
                        acc += w * v[j];
                    }
                    out[i as usize] = acc;
                }
            }
            2 => {
                for iy in 0..n {
                    for ix in 0..n {
                        let mut acc = 0.0;
                        for &(dx, dy, w) in &self.offsets {
                            let jx = (ix + dx).rem_euclid(n);
                            let jy = (iy + dy).rem_euclid(n);
                            acc += w * v[(jy * n + jx) as usize];
                        }
                        out[(iy * n + ix) as usize] = acc;
                    }
                }
            }
            d => panic!("unsupported grid dimension {d}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum MeanFieldError {
    #[error("time step too large: clipped {clipped} of mass {mass} in one step")]
    StepTooLarge { clipped: f64, mass: f64 },
    #[error("F map has a pole: mu = 0 and (f * U) vanishes at grid point {index}")]
    PoleAtZero { index: usize },
    #[error("fixed-point iteration did not converge in {iters} iterations (last change {change})")]
    NoConvergence { iters: usize, change: f64 },
    #[error("kernel radius {radius} does not fit on a torus of side {side}")]
    KernelWiderThanTorus { radius: f64, side: f64 },
    #[error("kernel stencil is empty")]
    EmptyStencil,
    #[error("mean-field solver requires spatially constant rates")]
    NonConstantRates,
}

/// Point on the solver's dense output: time, total mass, L2 distance to c0.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MassPoint {
    pub t: f64,
    pub mass: f64,
    pub l2_to_c0: f64,
}

pub struct IntegrateResult {
    pub field: DensityField,
    pub trace: Vec<MassPoint>,
    /// Dense output fields at the trace times (kept when requested).
    pub frames: Vec<DensityField>,
    pub clipped_mass: f64,
}

/// Mean-field solver for constant rates and translation kernels.
pub struct Solver {
    pub spec: GridSpec,
    pub gamma: f64,
    pub mu: f64,
    pub alpha: f64,
    stencil_d: KernelStencil,
    stencil_u: KernelStencil,
    dispersal: Kernel,
    competition: Kernel,
}

impl Solver {
    pub fn new(params: &ModelParams, spec: GridSpec) -> Result<Self, MeanFieldError> {
        if !params.constant_rates() {
            return Err(MeanFieldError::NonConstantRates);
        }
        let stencil_d = KernelStencil::build(&params.dispersal, &spec)?;
        let stencil_u = KernelStencil::build(&params.competition, &spec)?;
        Ok(Solver {
            spec,
            gamma: params.gamma_bar(),
            mu: params.mu_bar(),
            alpha: params.alpha_bar(),
            stencil_d,
            stencil_u,
            dispersal: params.dispersal.clone(),
            competition: params.competition.clone(),
        })
    }

    /// Nontrivial constant equilibrium `(gamma - mu) / alpha`.
    pub fn c0(&self) -> f64 {
        (self.gamma - self.mu) / self.alpha
    }

    /// Right-hand side `gamma (v*D) - mu v - alpha v (v*U)`, pointwise.
    pub fn rhs(&self, v: &[f64], out: &mut [f64]) {
        let len = v.len();
        let mut conv_d = vec![0.0; len];
        let mut conv_u = vec![0.0; len];
        self.stencil_d.convolve(&self.spec, v, &mut conv_d);
        self.stencil_u.convolve(&self.spec, v, &mut conv_u);
        for i in 0..len {
            out[i] = self.gamma * conv_d[i] - self.mu * v[i] - self.alpha * v[i] * conv_u[i];
        }
    }

    /// Stability-bound time step for the current sup of the field.
    pub fn stable_dt(&self, sup: f64) -> f64 {
        0.1 / (self.gamma + self.mu + self.alpha * sup.max(0.0) * self.stencil_u.mass).max(1e-12)
    }

    /// Classical RK4 integration to `t_end`.
    ///
    /// With `dt = None` the step follows the stability bound; an explicit
    /// `dt` is honored as given (the caller owns the precondition
    /// `dt <= stable_dt`). Negative values produced by a step are clipped
    /// to zero; a step clipping more than 1e-12 of the total mass fails
    /// with `StepTooLarge`. Dense output is recorded every `out_dt` (and
    /// at `t_end`); full frames are kept when `keep_frames` is set.
    pub fn integrate(
        &self,
        field0: &DensityField,
        t_end: f64,
        dt: Option<f64>,
        out_dt: f64,
        keep_frames: bool,
    ) -> Result<IntegrateResult, MeanFieldError> {
        let len = field0.values.len();
        let mut v = field0.values.clone();
        let mut t = 0.0;
        let mut clipped_total = 0.0;
        let c0 = self.c0();
        let cell = self.spec.cell_volume();

        let mut trace = Vec::new();
        let mut frames = Vec::new();
        let mut next_out = 0.0;

        let mut k1 = vec![0.0; len];
        let mut k2 = vec![0.0; len];
        let mut k3 = vec![0.0; len];
        let mut k4 = vec![0.0; len];
        let mut tmp = vec![0.0; len];

        let record = |t: f64,
                      v: &[f64],
                      trace: &mut Vec<MassPoint>,
                      frames: &mut Vec<DensityField>| {
            let mass = cell * v.iter().sum::<f64>();
            let l2 = cell * v.iter().map(|x| (x - c0) * (x - c0)).sum::<f64>();
            trace.push(MassPoint { t, mass, l2_to_c0: l2 });
            if keep_frames {
                frames.push(DensityField { spec: self.spec, values: v.to_vec() });
            }
        };

        loop {
            if t >= next_out - 1e-12 {
                record(t, &v, &mut trace, &mut frames);
                next_out += out_dt;
            }
            if t >= t_end - 1e-12 {
                if trace.last().map_or(true, |p| p.t < t_end - 1e-9) {
                    record(t, &v, &mut trace, &mut frames);
                }
                break;
            }
            let mut step = match dt {
                Some(user_dt) => user_dt,
                None => {
                    let sup = v.iter().cloned().fold(0.0, f64::max);
                    self.stable_dt(sup)
                }
            };
            step = step.min(t_end - t).min(next_out - t).max(1e-12);

            self.rhs(&v, &mut k1);
            for i in 0..len {
                tmp[i] = v[i] + 0.5 * step * k1[i];
            }
            self.rhs(&tmp, &mut k2);
            for i in 0..len {
                tmp[i] = v[i] + 0.5 * step * k2[i];
            }
            self.rhs(&tmp, &mut k3);
            for i in 0..len {
                tmp[i] = v[i] + step * k3[i];
            }
            self.rhs(&tmp, &mut k4);
            let mut clipped = 0.0;
            for i in 0..len {
                let next = v[i] + step / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                if next < 0.0 {
                    clipped -= next;
                    v[i] = 0.0;
                } else {
                    v[i] = next;
                }
            }
            let mass = cell * v.iter().sum::<f64>();
            clipped *= cell;
            if clipped > 1e-12 * mass.max(1e-300) {
                return Err(MeanFieldError::StepTooLarge { clipped, mass });
            }
            clipped_total += clipped;
            t += step;
        }

        Ok(IntegrateResult {
            field: DensityField { spec: self.spec, values: v },
            trace,
            frames,
            clipped_mass: clipped_total,
        })
    }

    /// Implicit Picard iteration on substeps.
    ///
    /// Each iterate solves, per grid point, the linear ODE
    /// `d/dt w = A(t) - B(t) w` with `A = gamma (xi^n * D)` and
    /// `B = mu + alpha (xi^n * U)` frozen at the substep midpoint of the
    /// previous iterate, integrated exactly over the substep.
    pub fn picard_iterate(
        &self,
        field0: &DensityField,
        t_end: f64,
        n_iters: usize,
        substep: f64,
    ) -> DensityField {
        let len = field0.values.len();
        let n_sub = (t_end / substep).ceil().max(1.0) as usize;
        let dt = t_end / n_sub as f64;

        // frames of the frozen iterate at substep endpoints
        let mut prev: Vec<Vec<f64>> = vec![field0.values.clone(); n_sub + 1];
        let mut conv_d = vec![0.0; len];
        let mut conv_u = vec![0.0; len];
        let mut mid = vec![0.0; len];

        for _ in 0..n_iters {
            let mut next: Vec<Vec<f64>> = Vec::with_capacity(n_sub + 1);
            next.push(field0.values.clone());
            for k in 0..n_sub {
                for i in 0..len {
                    mid[i] = 0.5 * (prev[k][i] + prev[k + 1][i]);
                }
                self.stencil_d.convolve(&self.spec, &mid, &mut conv_d);
                self.stencil_u.convolve(&self.spec, &mid, &mut conv_u);
                let mut frame = Vec::with_capacity(len);
                let w = &next[k];
                for i in 0..len {
                    let a = self.gamma * conv_d[i];
                    let b = self.mu + self.alpha * conv_u[i];
                    let bdt = b * dt;
                    let (decay, phi) = if bdt > 1e-8 {
                        let e = (-bdt).exp();
                        (e, (1.0 - e) / bdt)
                    } else {
                        (1.0 - bdt + 0.5 * bdt * bdt, 1.0 - 0.5 * bdt)
                    };
                    frame.push(w[i] * decay + a * dt * phi);
                }
                next.push(frame);
            }
            prev = next;
        }
        DensityField { spec: self.spec, values: prev.pop().unwrap() }
    }

    /// Equilibrium map `F f = gamma (f*D) / (mu + alpha (f*U))`.
    pub fn apply_f(&self, field: &DensityField) -> Result<DensityField, MeanFieldError> {
        let len = field.values.len();
        let mut conv_d = vec![0.0; len];
        let mut conv_u = vec![0.0; len];
        self.stencil_d.convolve(&self.spec, &field.values, &mut conv_d);
        self.stencil_u.convolve(&self.spec, &field.values, &mut conv_u);
        let mut out = Vec::with_capacity(len);
        for i in 0..len {
            let denom = self.mu + self.alpha * conv_u[i];
            if denom <= 0.0 {
                if conv_d[i] == 0.0 && field.values[i] == 0.0 {
                    // 0/0 at a vacuum point: F(0) = 0
                    out.push(0.0);
                    continue;
                }
                return Err(MeanFieldError::PoleAtZero { index: i });
            }
            out.push(self.gamma * conv_d[i] / denom);
        }
        Ok(DensityField { spec: self.spec, values: out })
    }

    /// Iterate `c <- F(c)` to a fixed point.
    pub fn fixed_point(
        &self,
        start: &DensityField,
        tol: f64,
        max_iters: usize,
    ) -> Result<FixedPointResult, MeanFieldError> {
        let c0 = self.c0();
        let mut field = start.clone();
        let mut history = vec![field.sup_dist_to(c0)];
        let mut eps0 = field.values.iter().cloned().fold(f64::INFINITY, f64::min);
        for iter in 1..=max_iters {
            let next = self.apply_f(&field)?;
            let change = next
                .values
                .iter()
                .zip(&field.values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            field = next;
            eps0 = eps0.min(field.values.iter().cloned().fold(f64::INFINITY, f64::min));
            history.push(field.sup_dist_to(c0));
            if change < tol {
                return Ok(FixedPointResult { field, history, eps0, iterations: iter });
            }
        }
        Err(MeanFieldError::NoConvergence {
            iters: max_iters,
            change: history.last().copied().unwrap_or(f64::NAN),
        })
    }

    /// Check the kernel-domination condition `gamma D >= (gamma - mu) U`
    /// pointwise and that `R = D + ((gamma-mu)/mu)(D - U)` has unit mass.
    pub fn check_assumption_c(&self) -> AssumptionCReport {
        let gamma_gt_mu = self.gamma > self.mu;
        let h = self.spec.h();
        let m = (self
            .dispersal
            .effective_radius()
            .max(self.competition.effective_radius())
            / h)
            .ceil() as i64;
        let mut min_margin = f64::INFINITY;
        let probe = |z: &[f64]| self.gamma * self.dispersal.eval(z) - (self.gamma - self.mu) * self.competition.eval(z);
        match self.spec.dim {
            1 => {
                for dx in -m..=m {
                    min_margin = min_margin.min(probe(&[dx as f64 * h]));
                }
            }
            2 => {
                for dy in -m..=m {
                    for dx in -m..=m {
                        min_margin = min_margin.min(probe(&[dx as f64 * h, dy as f64 * h]));
                    }
                }
            }
            d => panic!("unsupported grid dimension {d}"),
        }
        let pointwise_ok = min_margin >= -1e-12;
        let r_mass = if self.mu > 0.0 {
            let d_mass = self.dispersal.mass_by_quadrature();
            let u_mass = self.competition.mass_by_quadrature();
            d_mass + (self.gamma - self.mu) / self.mu * (d_mass - u_mass)
        } else {
            f64::NAN
        };
        let r_mass_ok = self.mu > 0.0 && (r_mass - 1.0).abs() < 1e-6;
        AssumptionCReport {
            gamma_gt_mu,
            pointwise_ok,
            min_margin,
            r_mass,
            pass: gamma_gt_mu && pointwise_ok && r_mass_ok,
        }
    }

    /// Integrate and track the squared L2 distance to c0; fit its log decay.
    pub fn l2_decay_check(
        &self,
        field0: &DensityField,
        t_end: f64,
        out_dt: f64,
    ) -> Result<DecayReport, MeanFieldError> {
        let result = self.integrate(field0, t_end, None, out_dt, false)?;
        let mut monotone = true;
        for w in result.trace.windows(2) {
            if w[1].l2_to_c0 > w[0].l2_to_c0 * (1.0 + 1e-10) + 1e-300 {
                monotone = false;
            }
        }
        let pts: Vec<(f64, f64)> = result
            .trace
            .iter()
            .filter(|p| p.l2_to_c0 > 1e-290)
            .map(|p| (p.t, p.l2_to_c0.ln()))
            .collect();
        let (rate, r_squared) = if pts.len() >= 3 {
            let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let (slope, _, r2) = linear_fit(&xs, &ys);
            (-slope, r2)
        } else {
            (f64::INFINITY, 1.0)
        };
        Ok(DecayReport { trace: result.trace, monotone, rate, r_squared })
    }

    /// Pointwise detailed-balance decay bound
    /// `(xi_t - c0)^2 <= (xi_0 - c0)^2 exp(-2 alpha [(xi_0 ^ c0) * D](x) t)`
    /// checked at every grid point and output time. Also verifies the
    /// one-sided monotone approach to c0. Returns the worst slack
    /// (negative means a violation).
    pub fn dbc_pointwise_check(
        &self,
        field0: &DensityField,
        t_end: f64,
        out_dt: f64,
    ) -> Result<DbcReport, MeanFieldError> {
        let len = field0.values.len();
        let c0 = self.c0();
        let mut floor = vec![0.0; len];
        for i in 0..len {
            floor[i] = field0.values[i].min(c0);
        }
        let mut conv_floor = vec![0.0; len];
        self.stencil_d.convolve(&self.spec, &floor, &mut conv_floor);

        let result = self.integrate(field0, t_end, None, out_dt, true)?;
        let mut worst_slack = f64::INFINITY;
        let mut monotone = true;
        let mut prev_dev: Vec<f64> = field0.values.iter().map(|v| (v - c0).abs()).collect();
        for (frame, pt) in result.frames.iter().zip(&result.trace) {
            for i in 0..len {
                let dev2 = (frame.values[i] - c0).powi(2);
                let bound = (field0.values[i] - c0).powi(2)
                    * (-2.0 * self.alpha * conv_floor[i] * pt.t).exp();
                worst_slack = worst_slack.min(bound - dev2 + 1e-12 * bound.max(1e-300));
                let dev = dev2.sqrt();
                if dev > prev_dev[i] * (1.0 + 1e-9) + 1e-12 {
                    monotone = false;
                }
                prev_dev[i] = dev;
            }
        }
        Ok(DbcReport { worst_slack, bound_holds: worst_slack >= 0.0, monotone })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionCReport {
    pub gamma_gt_mu: bool,
    pub pointwise_ok: bool,
    pub min_margin: f64,
    pub r_mass: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct FixedPointResult {
    pub field: DensityField,
    /// Sup distance to c0 after each iterate (including the start).
    pub history: Vec<f64>,
    /// Running minimum of the iterates (the measured contraction floor).
    pub eps0: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    pub trace: Vec<MassPoint>,
    pub monotone: bool,
    pub rate: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DbcReport {
    pub worst_slack: f64,
    pub bound_holds: bool,
    pub monotone: bool,
}

/// Closed-form logistic solution `K n0 e^{rt} / (K + n0 (e^{rt} - 1))`.
pub fn logistic(n0: f64, r: f64, k: f64, t: f64) -> f64 {
    k * n0 * (r * t).exp() / (k + n0 * ((r * t).exp() - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{make_params, presets};
    use crate::rates::RateField;
    use crate::SpatialDomain;

    fn fig_solver(side: f64, n: usize) -> Solver {
        let params = presets::fig_params(side);
        Solver::new(&params, GridSpec::new_1d(side, n)).unwrap()
    }

    fn tophat_solver(gamma: f64, mu: f64, alpha: f64, side: f64, n: usize) -> Solver {
        let params = make_params(
            SpatialDomain::Torus { side, dim: 1 },
            RateField::constant(gamma),
            RateField::constant(mu),
            RateField::constant(alpha),
            Kernel::tophat(1, 1.0, 1.0),
            Kernel::tophat(1, 1.0, 1.0),
        )
        .unwrap();
        Solver::new(&params, GridSpec::new_1d(side, n)).unwrap()
    }

    #[test]
    fn rhs_vanishes_at_equilibria() {
        let solver = fig_solver(40.0, 800);
        let len = solver.spec.len();
        let c0 = solver.c0();
        let mut out = vec![0.0; len];
        solver.rhs(&vec![c0; len], &mut out);
        let worst = out.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
        assert!(worst <= 1e-12, "rhs at c0: {worst}");
        solver.rhs(&vec![0.0; len], &mut out);
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rhs_constant_field_is_logistic_term() {
        let solver = fig_solver(40.0, 400);
        let len = solver.spec.len();
        let c = 1.7;
        let mut out = vec![0.0; len];
        solver.rhs(&vec![c; len], &mut out);
        let expect = (5.0 - 1.0) * c - c * c;
        for v in &out {
            assert!((v - expect).abs() < 1e-10, "{v} vs {expect}");
        }
    }

    #[test]
    fn integrate_matches_logistic_closed_form() {
        let solver = fig_solver(40.0, 400);
        let field0 = DensityField::uniform(solver.spec, 1.0);
        let result = solver.integrate(&field0, 2.0, None, 0.5, false).unwrap();
        let got = result.trace.last().unwrap().mass / 40.0;
        let expect = logistic(1.0, 4.0, 4.0, 2.0);
        assert!((got - expect).abs() < 1e-6, "{got} vs {expect}");
        assert_eq!(result.clipped_mass, 0.0);
    }

    #[test]
    fn subcritical_mass_decays_exponentially() {
        // gamma = 1 < mu = 2: mass(t) <= mass(0) exp(-(mu-gamma) t)
        let solver = tophat_solver(1.0, 2.0, 1.0, 20.0, 200);
        let field0 = DensityField::from_fn(solver.spec, |x| 1.0 + 0.5 * (0.7 * x[0]).sin());
        let m0 = field0.mass();
        let result = solver.integrate(&field0, 4.0, None, 0.25, false).unwrap();
        for p in &result.trace {
            assert!(
                p.mass <= m0 * (-(2.0 - 1.0) * p.t).exp() + 1e-12,
                "mass {} at t = {} beats the decay bound",
                p.mass,
                p.t
            );
        }
    }

    #[test]
    fn rk4_fourth_order_convergence() {
        let solver = fig_solver(40.0, 200);
        let field0 = DensityField::uniform(solver.spec, 1.0);
        let exact = logistic(1.0, 4.0, 4.0, 1.0);
        let err = |dt: f64| {
            let r = solver.integrate(&field0, 1.0, Some(dt), 1.0, false).unwrap();
            (r.trace.last().unwrap().mass / 40.0 - exact).abs()
        };
        let e1 = err(0.01);
        let e2 = err(0.005);
        let ratio = e1 / e2;
        assert!((12.0..=20.0).contains(&ratio), "order ratio {ratio} (e1 {e1}, e2 {e2})");
    }

    #[test]
    fn two_dimensional_grid_matches_oracles() {
        let params = make_params(
            SpatialDomain::Torus { side: 10.0, dim: 2 },
            RateField::constant(3.0),
            RateField::constant(1.0),
            RateField::constant(1.0),
            Kernel::tophat(2, 1.0, 1.0),
            Kernel::tophat(2, 1.0, 1.0),
        )
        .unwrap();
        let spec = GridSpec { side: 10.0, n: 64, dim: 2 };
        let solver = Solver::new(&params, spec).unwrap();
        let c0 = solver.c0();
        let mut out = vec![0.0; spec.len()];
        solver.rhs(&vec![c0; spec.len()], &mut out);
        assert!(out.iter().all(|v| v.abs() < 1e-12));

        let f0 = DensityField::uniform(spec, 0.5);
        let r = solver.integrate(&f0, 1.0, None, 0.5, false).unwrap();
        let got = r.trace.last().unwrap().mass / 100.0;
        let expect = logistic(0.5, 2.0, 2.0, 1.0);
        assert!((got - expect).abs() < 1e-6, "{got} vs {expect}");

        let p0 = DensityField::from_fn(spec, |x| {
            c0 + 0.3
                * (std::f64::consts::TAU * x[0] / 10.0).cos()
                * (std::f64::consts::TAU * x[1] / 10.0).sin()
        });
        let rep = solver.l2_decay_check(&p0, 1.5, 0.25).unwrap();
        assert!(rep.monotone && rep.rate > 0.0);
    }

    #[test]
    fn oversized_step_is_rejected() {
        // a step far beyond the stability bound drives values negative
        let solver = fig_solver(40.0, 200);
        let field0 = DensityField::from_fn(solver.spec, |x| {
            6.0 + 5.0 * (std::f64::consts::TAU * x[0] / 4.0).sin()
        });
        let err = solver.integrate(&field0, 3.0, Some(1.0), 3.0, false).map(|r| r.field.mass());
        assert!(matches!(err, Err(MeanFieldError::StepTooLarge { .. })), "{err:?}");
    }

    #[test]
    fn picard_cross_validates_on_three_parameter_sets() {
        let cases = [
            (2.0, 1.0, 1.0, 8, 0.9),
            (1.5, 0.5, 1.0, 12, 0.8),
            (2.0, 0.5, 0.5, 12, 1.1),
        ];
        for (gamma, mu, alpha, iters, level) in cases {
            let solver = tophat_solver(gamma, mu, alpha, 20.0, 100);
            let field0 =
                DensityField::from_fn(solver.spec, |x| level + 0.2 * (0.5 * x[0]).cos());
            let a = solver.picard_iterate(&field0, 0.5, iters, 0.002);
            let b = solver.integrate(&field0, 0.5, Some(0.002), 0.5, false).unwrap().field;
            let worst = a
                .values
                .iter()
                .zip(&b.values)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0f64, f64::max);
            assert!(worst < 1e-5, "({gamma},{mu},{alpha}): disagreement {worst}");
        }
    }

    #[test]
    fn picard_fixed_point_at_c0() {
        let solver = tophat_solver(3.0, 1.0, 1.0, 20.0, 200);
        let c0 = solver.c0();
        let field0 = DensityField::uniform(solver.spec, c0);
        let out = solver.picard_iterate(&field0, 0.5, 4, 0.1);
        for v in &out.values {
            assert!((v - c0).abs() < 1e-9, "{v} vs {c0}");
        }
    }

    #[test]
    fn picard_agrees_with_integrate() {
        // mild rates so eight sweeps contract well below the tolerance
        let solver = tophat_solver(2.0, 1.0, 1.0, 20.0, 200);
        let field0 = DensityField::from_fn(solver.spec, |x| 0.5 + 0.2 * (0.5 * x[0]).cos());
        let a = solver.picard_iterate(&field0, 0.5, 8, 0.002);
        let b = solver.integrate(&field0, 0.5, Some(0.002), 0.5, false).unwrap().field;
        let worst = a
            .values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max);
        assert!(worst < 1e-5, "cross-scheme disagreement {worst}");
    }

    #[test]
    fn picard_iterates_respect_growth_bound() {
        let solver = tophat_solver(2.0, 1.0, 1.0, 20.0, 100);
        let field0 = DensityField::from_fn(solver.spec, |x| 1.0 + 0.8 * (0.4 * x[0]).sin());
        let sup0 = field0.sup();
        let t = 0.5;
        for iters in 1..=6 {
            let out = solver.picard_iterate(&field0, t, iters, 0.05);
            assert!(
                out.sup() <= sup0 * (2.0f64 * t).exp() + 1e-9,
                "iterate {iters} exceeds sup bound"
            );
        }
    }

    #[test]
    fn f_map_fixes_equilibria() {
        let solver = fig_solver(40.0, 400);
        let c0 = solver.c0();
        let f_c0 = solver.apply_f(&DensityField::uniform(solver.spec, c0)).unwrap();
        for v in &f_c0.values {
            assert!((v - c0).abs() <= 1e-12, "{v}");
        }
        let f_zero = solver.apply_f(&DensityField::uniform(solver.spec, 0.0)).unwrap();
        assert!(f_zero.values.iter().all(|v| *v == 0.0));
        // scaled input contracts toward c0 from above
        let f_2c0 = solver.apply_f(&DensityField::uniform(solver.spec, 2.0 * c0)).unwrap();
        let expect = 5.0 * 2.0 * c0 / (1.0 + 2.0 * c0);
        for v in &f_2c0.values {
            assert!((v - expect).abs() < 1e-10);
            assert!(*v < 2.0 * c0);
        }
    }

    #[test]
    fn fixed_point_converges_and_contracts() {
        // Prop-7.6-style hypotheses: gamma > 2 mu, D = U radial nonincreasing
        let solver = tophat_solver(3.0, 1.0, 1.0, 20.0, 200);
        let c0 = solver.c0();
        let start =
            DensityField::from_fn(solver.spec, |x| c0 * (1.0 + 0.3 * (std::f64::consts::TAU * x[0] / 20.0).sin()));
        let res = solver.fixed_point(&start, 1e-12, 200).unwrap();
        assert!(res.field.sup_dist_to(c0) < 1e-10);
        // measured contraction factor per iterate <= mu/(mu + alpha eps0)
        let bound = 1.0 / (1.0 + res.eps0);
        for w in res.history.windows(2) {
            if w[0] > 1e-13 {
                let factor = w[1] / w[0];
                assert!(factor <= bound + 1e-9, "factor {factor} > bound {bound}");
            }
        }
    }

    #[test]
    fn fixed_point_trivial_starts() {
        let solver = tophat_solver(3.0, 1.0, 1.0, 20.0, 100);
        let zero = solver.fixed_point(&DensityField::uniform(solver.spec, 0.0), 1e-12, 5).unwrap();
        assert!(zero.field.values.iter().all(|v| *v == 0.0));
        let c0 = solver.c0();
        let eq = solver.fixed_point(&DensityField::uniform(solver.spec, c0), 1e-12, 5).unwrap();
        assert!(eq.iterations <= 1);
        assert!(eq.field.sup_dist_to(c0) <= 1e-12);
    }

    #[test]
    fn assumption_c_fails_for_reference_kernels() {
        // gamma D = 5/6 on |z| <= 3 but (gamma-mu) U = 4 on |z| <= 1/2
        let solver = fig_solver(40.0, 400);
        let report = solver.check_assumption_c();
        assert!(report.gamma_gt_mu);
        assert!(!report.pointwise_ok);
        assert!(!report.pass);
        assert!((report.min_margin - (5.0 / 6.0 - 4.0)).abs() < 1e-9);
    }

    #[test]
    fn assumption_c_passes_for_equal_kernels() {
        let solver = tophat_solver(3.0, 1.0, 1.0, 20.0, 200);
        let report = solver.check_assumption_c();
        assert!(report.pass, "{report:?}");
        assert!((report.r_mass - 1.0).abs() < 1e-9);
    }

    #[test]
    fn l2_decay_monotone_with_loglinear_fit() {
        // gaussian-like kernels, gamma=3, mu=1, alpha=1
        let params = make_params(
            SpatialDomain::Torus { side: 10.0, dim: 1 },
            RateField::constant(3.0),
            RateField::constant(1.0),
            RateField::constant(1.0),
            Kernel::gaussian(1, 0.25, 1.0),
            Kernel::gaussian(1, 0.25, 1.0),
        )
        .unwrap();
        let solver = Solver::new(&params, GridSpec::new_1d(10.0, 200)).unwrap();
        let c0 = solver.c0();
        let field0 = DensityField::from_fn(solver.spec, |x| {
            c0 + 0.5 * (std::f64::consts::TAU * x[0] / 10.0).cos()
        });
        let report = solver.l2_decay_check(&field0, 2.0, 0.1).unwrap();
        assert!(report.monotone);
        assert!(report.rate > 0.0);
        assert!(report.r_squared > 0.95, "R^2 = {}", report.r_squared);
        // xi0 = c0 exactly: energy identically zero
        let flat = solver.l2_decay_check(&DensityField::uniform(solver.spec, c0), 1.0, 0.5).unwrap();
        for p in &flat.trace {
            assert!(p.l2_to_c0 <= 1e-24);
        }
    }

    #[test]
    fn dbc_pointwise_bound_holds() {
        // mu = 0, D = U, alpha = 1, gamma = 2 => c0 = 2 exactly on the grid
        let params = make_params(
            SpatialDomain::Torus { side: 20.0, dim: 1 },
            RateField::constant(2.0),
            RateField::constant(0.0),
            RateField::constant(1.0),
            Kernel::tophat(1, 1.0, 1.0),
            Kernel::tophat(1, 1.0, 1.0),
        )
        .unwrap();
        let solver = Solver::new(&params, GridSpec::new_1d(20.0, 200)).unwrap();
        let c0 = solver.c0();
        let field0 = DensityField::from_fn(solver.spec, |x| {
            c0 + 0.5 * (std::f64::consts::TAU * x[0] / 20.0).cos()
        });
        let report = solver.dbc_pointwise_check(&field0, 3.0, 0.25).unwrap();
        assert!(report.bound_holds, "worst slack {}", report.worst_slack);
        assert!(report.monotone);
    }
}
