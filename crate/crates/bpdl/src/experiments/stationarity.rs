//! Generator evaluation on Poisson configurations and the detailed-balance
//! stationarity test.
//!
//! Under the detailed balance condition (mu = 0, D = U, U(0) = 0) the
//! Poisson field with intensity c0 = gamma/alpha is stationary: the
//! generator applied to any cylinder function phi(nu) = F(<nu, f>) has
//! zero expectation. The test samples Poisson configurations on a window
//! padded by the kernel support radius, so every generator term touching
//! the support of `f` is exact and only Monte Carlo error remains.

use serde::Serialize;

use crate::params::ModelParams;
use crate::population::{competition_sum, poisson_configuration, Population};
use crate::quad::integrate_piecewise;
use crate::rng::replicate_rng;
use crate::stats::dist::mean_var_se;
use crate::testfn::TestFn;

/// Bounded smooth maps F applied to `<nu, f>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundedMap {
    /// `min(u, cap)`
    ClampedLinear { cap: f64 },
    /// `u / (1 + u)`
    Saturating,
    /// `atan(u)`
    Arctan,
}

impl BoundedMap {
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            BoundedMap::ClampedLinear { cap } => u.min(*cap),
            BoundedMap::Saturating => u / (1.0 + u),
            BoundedMap::Arctan => u.atan(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GeneratorError {
    #[error("quadrature failed in the birth term: {0}")]
    QuadratureFail(#[from] crate::quad::QuadratureFail),
}

/// Exact generator value `L phi(nu)` for `phi(nu) = F(<nu, f>)`.
///
/// Birth term: per individual, the dispersal integral of
/// `F(s + f(x+z)) - F(s)` (analytic for indicator `f`, adaptive
/// quadrature otherwise, tolerance 1e-8). Death term: direct sum with
/// brute-force competition sums. For an infinite Poisson field truncated
/// to a window, the value is exact provided the window pads the support
/// of `f` by the kernel support radius.
pub fn eval_generator(
    map: BoundedMap,
    f: TestFn,
    pop: &Population,
    params: &ModelParams,
) -> Result<f64, GeneratorError> {
    if pop.is_empty() {
        return Ok(0.0);
    }
    let domain = &params.domain;
    let s: f64 = pop.iter().map(|x| f.eval(x, domain)).sum();
    let fs = map.eval(s);

    // birth term
    let mut birth = 0.0;
    for i in 0..pop.len() {
        let x = pop.position(i);
        let gamma = params.gamma.eval(x);
        if gamma == 0.0 {
            continue;
        }
        let integral = match f {
            // f is an indicator: the integrand is (F(s+1) - F(s)) where the
            // seed lands inside the support, 0 elsewhere
            TestFn::Indicator { .. } => {
                (map.eval(s + 1.0) - fs) * f.convolve(&params.dispersal, x, domain, 1)
            }
            TestFn::One => map.eval(s + 1.0) - fs,
            _ => birth_integral(map, f, s, x, params)?,
        };
        birth += gamma * integral;
    }

    // death term
    let mut death = 0.0;
    for i in 0..pop.len() {
        let x = pop.position(i);
        let fx = f.eval(x, domain);
        let delta = map.eval(s - fx) - fs;
        if delta == 0.0 {
            continue;
        }
        let rate = params.mu.eval(x) + params.alpha.eval(x) * competition_sum(pop, x, params);
        death += delta * rate;
    }

    Ok(birth + death)
}

fn birth_integral(
    map: BoundedMap,
    f: TestFn,
    s: f64,
    x: &[f64],
    params: &ModelParams,
) -> Result<f64, GeneratorError> {
    assert_eq!(x.len(), 1, "quadrature birth term is one-dimensional");
    let kernel = &params.dispersal;
    if kernel.is_atomic() {
        let mut landing = vec![0.0; x.len()];
        let fs = map.eval(s);
        let mut total = 0.0;
        for (z, w) in kernel.atoms() {
            let _ = params.domain.place(x, &z, &mut landing);
            total += w * (map.eval(s + f.eval(&landing, &params.domain)) - fs);
        }
        return Ok(total);
    }
    let intervals = kernel.support_intervals_1d();
    let max_r = intervals.iter().map(|(_, b)| b.abs()).fold(0.0, f64::max);
    let mut breaks: Vec<f64> = kernel.radial_breaks().iter().flat_map(|r| [*r, -*r]).collect();
    let fr = f.support_radius();
    if fr.is_finite() {
        for b in [-fr, 0.0, fr] {
            // torus images are unnecessary here: stationarity runs live on
            // unbounded windows; still split on the direct preimages
            breaks.push(b - x[0]);
        }
    }
    // a clamped-linear F has a kink where s + f crosses the cap
    if let BoundedMap::ClampedLinear { cap } = map {
        if let TestFn::Triangle { radius } = f {
            let target = cap - s;
            if target > 0.0 && target < 1.0 {
                let dx = (1.0 - target) * radius;
                breaks.push(dx - x[0]);
                breaks.push(-dx - x[0]);
            }
        }
    }
    let fs = map.eval(s);
    let domain = &params.domain;
    let x0 = x[0];
    let mut landing = [0.0];
    let integrand = move |z: f64| {
        let kv = kernel.eval(&[z]);
        if kv == 0.0 {
            return 0.0;
        }
        let _ = domain.place(&[x0], &[z], &mut landing);
        kv * (map.eval(s + f.eval(&landing, domain)) - fs)
    };
    let _ = max_r;
    Ok(integrate_piecewise(integrand, &intervals, &breaks, 1e-8)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct StationarityPlan {
    /// Intensity of the sampled Poisson field.
    pub intensity: f64,
    /// Test battery: all (F, f) pairs are evaluated on the same samples.
    pub battery: Vec<(BoundedMap, TestFn)>,
    pub replicates: usize,
    pub seed: u64,
}

impl StationarityPlan {
    /// The default six-function battery: three bounded maps times two
    /// compactly supported test functions.
    pub fn default_battery() -> Vec<(BoundedMap, TestFn)> {
        let maps = [
            BoundedMap::ClampedLinear { cap: 10.0 },
            BoundedMap::Saturating,
            BoundedMap::Arctan,
        ];
        let fs = [TestFn::Indicator { radius: 1.0 }, TestFn::Triangle { radius: 1.0 }];
        let mut battery = Vec::new();
        for m in maps {
            for f in fs {
                battery.push((m, f));
            }
        }
        battery
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StationarityResult {
    pub map: BoundedMap,
    pub f: TestFn,
    pub mean: f64,
    pub stderr: f64,
    /// `|mean| <= 3 se`
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct StationaritySummary {
    pub intensity: f64,
    pub window: (f64, f64),
    pub replicates: usize,
    pub results: Vec<StationarityResult>,
    pub all_pass: bool,
}

/// Estimate `E[L phi(pi)]` for every battery entry over Poisson samples.
///
/// The window pads the union of the test functions' supports by the
/// kernel support radius, which makes the truncation of the infinite
/// field exact for every term.
pub fn stationarity_test(
    params: &ModelParams,
    plan: &StationarityPlan,
) -> Result<StationaritySummary, GeneratorError> {
    let pad = params
        .dispersal
        .support_radius()
        .max(params.competition.support_radius());
    assert!(pad.is_finite(), "stationarity windows require compact kernels");
    let f_max = plan
        .battery
        .iter()
        .map(|(_, f)| f.support_radius())
        .fold(0.0, f64::max);
    let half = f_max + pad;
    let window = [(-half, half)];

    let mut values: Vec<Vec<f64>> = vec![Vec::with_capacity(plan.replicates); plan.battery.len()];
    let mut rng = replicate_rng(plan.seed, 0);
    for _ in 0..plan.replicates {
        let pop = poisson_configuration(&window, plan.intensity, &mut rng);
        for (k, (map, f)) in plan.battery.iter().enumerate() {
            values[k].push(eval_generator(*map, *f, &pop, params)?);
        }
    }
    let mut results = Vec::with_capacity(plan.battery.len());
    for (k, (map, f)) in plan.battery.iter().enumerate() {
        let (mean, _, se) = mean_var_se(&values[k]);
        results.push(StationarityResult {
            map: *map,
            f: *f,
            mean,
            stderr: se,
            pass: mean.abs() <= 3.0 * se,
        });
    }
    let all_pass = results.iter().all(|r| r.pass);
    Ok(StationaritySummary {
        intensity: plan.intensity,
        window: (-half, half),
        replicates: plan.replicates,
        results,
        all_pass,
    })
}

/// True when the parameters satisfy the detailed balance condition
/// (alpha > 0, gamma > 0, mu = 0, D = U) with no self-competition.
pub fn is_dbc(params: &ModelParams) -> bool {
    params.mu_bar() == 0.0
        && params.alpha_bar() > 0.0
        && params.gamma_bar() > 0.0
        && params.dispersal.shape == params.competition.shape
        && (params.dispersal.mass - params.competition.mass).abs() < 1e-12
        && params.u_at_zero() == 0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::presets;

    fn dbc() -> ModelParams {
        presets::dbc_params(None)
    }

    #[test]
    fn generator_of_constant_phi_is_zero() {
        // F saturating with f = 0-radius support... use F constant via cap 0:
        // min(u, 0) is constant 0 for nonnegative u, so L phi = 0 exactly
        let params = dbc();
        let mut rng = replicate_rng(3, 0);
        let pop = poisson_configuration(&[(-2.0, 2.0)], 4.0, &mut rng);
        let v = eval_generator(
            BoundedMap::ClampedLinear { cap: 0.0 },
            TestFn::Indicator { radius: 1.0 },
            &pop,
            &params,
        )
        .unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn generator_on_empty_population_is_zero() {
        let params = dbc();
        let pop = Population::new(1);
        let v = eval_generator(BoundedMap::Saturating, TestFn::One, &pop, &params).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn single_point_identity_map_closed_form() {
        // nu = delta_x, F = clamped-linear with a high cap (identity in
        // range): L phi = gamma (D*f)(x) - f(x) (mu + alpha U(0))
        let params = presets::fig_params(40.0);
        let pop = Population::from_positions(1, &[vec![0.3]]);
        let f = TestFn::Indicator { radius: 1.0 };
        let v = eval_generator(BoundedMap::ClampedLinear { cap: 1e9 }, f, &pop, &params).unwrap();
        let conv = f.convolve(&params.dispersal, &[0.3], &params.domain, 1);
        let expect = 5.0 * conv - 1.0 * (1.0 + 1.0 * 1.0);
        assert!((v - expect).abs() < 1e-8, "{v} vs {expect}");
    }

    #[test]
    fn dbc_battery_centers_on_zero() {
        let params = dbc();
        assert!(is_dbc(&params));
        let plan = StationarityPlan {
            intensity: 4.0, // gamma / alpha
            battery: StationarityPlan::default_battery(),
            replicates: 3000,
            seed: 71,
        };
        let summary = stationarity_test(&params, &plan).unwrap();
        for r in &summary.results {
            assert!(
                r.pass,
                "battery entry {:?}/{:?}: mean {} vs se {}",
                r.map, r.f, r.mean, r.stderr
            );
        }
    }

    #[test]
    fn broken_dbc_detected() {
        // adding intrinsic death makes the drift strictly negative
        let mut params = dbc();
        params.mu = crate::rates::RateField::constant(0.5);
        let plan = StationarityPlan {
            intensity: 4.0,
            battery: vec![(BoundedMap::ClampedLinear { cap: 10.0 }, TestFn::Indicator { radius: 1.0 })],
            replicates: 3000,
            seed: 72,
        };
        let summary = stationarity_test(&params, &plan).unwrap();
        let r = &summary.results[0];
        assert!(r.mean < 0.0 && r.mean.abs() > 3.0 * r.stderr, "mean {} se {}", r.mean, r.stderr);
    }

    #[test]
    fn wrong_intensity_detected() {
        // doubling the intensity makes quadratic competition beat birth
        let params = dbc();
        let plan = StationarityPlan {
            intensity: 8.0,
            battery: vec![(BoundedMap::ClampedLinear { cap: 10.0 }, TestFn::Indicator { radius: 1.0 })],
            replicates: 3000,
            seed: 73,
        };
        let summary = stationarity_test(&params, &plan).unwrap();
        let r = &summary.results[0];
        assert!(r.mean.abs() > 3.0 * r.stderr, "mean {} se {}", r.mean, r.stderr);
        assert!(r.mean < 0.0);
    }
}
