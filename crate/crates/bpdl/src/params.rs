//! Model parameters and their validation.

use rand::Rng;
use thiserror::Error;

use crate::domain::SpatialDomain;
use crate::kernel::Kernel;
use crate::rates::RateField;
use crate::rng::replicate_rng;

/// Validated parameter set for one model.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub domain: SpatialDomain,
    pub gamma: RateField,
    pub mu: RateField,
    pub alpha: RateField,
    /// Dispersal kernel; must be a probability kernel (mass 1).
    pub dispersal: Kernel,
    /// Competition kernel; any nonnegative mass.
    pub competition: Kernel,
}

impl ModelParams {
    pub fn gamma_bar(&self) -> f64 {
        self.gamma.bound()
    }
    pub fn mu_bar(&self) -> f64 {
        self.mu.bound()
    }
    pub fn alpha_bar(&self) -> f64 {
        self.alpha.bound()
    }
    /// Supremum of the competition kernel.
    pub fn u_bar(&self) -> f64 {
        self.competition.sup_value()
    }
    /// Envelope constant of the dispersal kernel.
    pub fn envelope_c(&self) -> f64 {
        self.dispersal.envelope.c
    }
    /// Self-interaction weight U(x, x).
    pub fn u_at_zero(&self) -> f64 {
        self.competition.eval(&vec![0.0; self.domain.dim()])
    }
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }
    /// True when all three rate fields are spatially constant.
    pub fn constant_rates(&self) -> bool {
        self.gamma.is_constant() && self.mu.is_constant() && self.alpha.is_constant()
    }
}

#[derive(Debug, Error)]
pub enum ParamsError {
    #[error("rate field '{field}' is negative at x = {at:?} (value {value})")]
    NegativeRate { field: &'static str, at: Vec<f64>, value: f64 },
    #[error("rate field '{field}' exceeds its bound at x = {at:?} ({value} > {bound})")]
    BoundViolated { field: &'static str, at: Vec<f64>, value: f64, bound: f64 },
    #[error("dispersal envelope violated at z = {at:?}: K(z)/mass = {density} > C*D~(z) = {envelope}")]
    EnvelopeViolated { at: Vec<f64>, density: f64, envelope: f64 },
    #[error("kernel '{which}' mass mismatch: declared {declared}, computed {computed}")]
    BadKernel { which: &'static str, declared: f64, computed: f64 },
    #[error("kernel '{which}' is not symmetric at z = {at:?}")]
    AsymmetricKernel { which: &'static str, at: Vec<f64> },
    #[error("dimension mismatch: domain is {domain}-d, kernel '{which}' is {kernel}-d")]
    DimensionMismatch { which: &'static str, domain: usize, kernel: usize },
}

fn probe_points(domain: &SpatialDomain, n: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let dim = domain.dim();
    let extent = match domain {
        SpatialDomain::Torus { side, .. } => *side * 0.5,
        SpatialDomain::Box { bounds } => {
            bounds.iter().map(|(a, b)| a.abs().max(b.abs())).fold(0.0, f64::max)
        }
        SpatialDomain::Lattice { bounds } => {
            bounds.iter().map(|(a, b)| (a.abs().max(b.abs())) as f64).fold(0.0, f64::max)
        }
        SpatialDomain::Unbounded { .. } => 50.0,
    };
    (0..n)
        .map(|_| (0..dim).map(|_| (2.0 * rng.random::<f64>() - 1.0) * extent).collect())
        .collect()
}

fn check_rate(
    field: &'static str,
    rate: &RateField,
    probes: &[Vec<f64>],
) -> Result<(), ParamsError> {
    if let RateField::Constant(v) = rate {
        if *v < 0.0 {
            return Err(ParamsError::NegativeRate { field, at: vec![], value: *v });
        }
        return Ok(());
    }
    let bound = rate.bound();
    for x in probes {
        let v = rate.eval(x);
        if v < 0.0 {
            return Err(ParamsError::NegativeRate { field, at: x.clone(), value: v });
        }
        if v > bound * (1.0 + 1e-12) {
            return Err(ParamsError::BoundViolated { field, at: x.clone(), value: v, bound });
        }
    }
    Ok(())
}

fn check_kernel(
    which: &'static str,
    kernel: &Kernel,
    dim: usize,
    rng: &mut impl Rng,
) -> Result<(), ParamsError> {
    if kernel.dim != dim {
        return Err(ParamsError::DimensionMismatch { which, domain: dim, kernel: kernel.dim });
    }
    let computed = kernel.mass_by_quadrature();
    if !(computed.is_finite()) || (computed - kernel.mass).abs() > 1e-6 * kernel.mass.max(1.0) {
        return Err(ParamsError::BadKernel { which, declared: kernel.mass, computed });
    }
    let radius = kernel.effective_radius().min(1e6).max(1.0);
    for _ in 0..1000 {
        let z: Vec<f64> =
            (0..dim).map(|_| (2.0 * rng.random::<f64>() - 1.0) * radius * 1.2).collect();
        let neg: Vec<f64> = z.iter().map(|v| -v).collect();
        if kernel.eval(&z) != kernel.eval(&neg) {
            return Err(ParamsError::AsymmetricKernel { which, at: z });
        }
    }
    Ok(())
}

fn check_envelope(kernel: &Kernel, dim: usize, rng: &mut impl Rng) -> Result<(), ParamsError> {
    if kernel.envelope.proposal.is_none() && kernel.envelope.c >= 1.0 {
        return Ok(()); // proposal is the kernel itself, ratio <= 1 by construction
    }
    let radius = kernel.effective_radius().min(1e6).max(1.0);
    let mut z = vec![0.0; dim];
    for i in 0..10_000 {
        // mix uniform probes over the support with proposal draws
        if i % 2 == 0 {
            for v in z.iter_mut() {
                *v = (2.0 * rng.random::<f64>() - 1.0) * radius;
            }
        } else {
            kernel.sample_envelope(rng, &mut z);
        }
        let ratio = kernel.thinning_ratio(&z);
        if ratio > 1.0 + 1e-12 {
            let tilde = match &kernel.envelope.proposal {
                Some(p) => p.eval(&z) / p.mass,
                None => kernel.eval(&z) / kernel.mass,
            };
            return Err(ParamsError::EnvelopeViolated {
                at: z.clone(),
                density: kernel.eval(&z) / kernel.mass,
                envelope: kernel.envelope.c * tilde,
            });
        }
    }
    Ok(())
}

/// Validate a parameter description into a usable [`ModelParams`].
///
/// Checks: rate nonnegativity and bounds at probe points, kernel mass
/// against the declared value (adaptive quadrature, tolerance 1e-6),
/// kernel symmetry, and the dispersal thinning envelope at 1e4 probes.
pub fn make_params(
    domain: SpatialDomain,
    gamma: RateField,
    mu: RateField,
    alpha: RateField,
    dispersal: Kernel,
    competition: Kernel,
) -> Result<ModelParams, ParamsError> {
    let dim = domain.dim();
    let mut rng = replicate_rng(0x9e3779b97f4a7c15, 0); // fixed probe stream
    let probes = probe_points(&domain, 512, &mut rng);
    check_rate("gamma", &gamma, &probes)?;
    check_rate("mu", &mu, &probes)?;
    check_rate("alpha", &alpha, &probes)?;
    check_kernel("dispersal", &dispersal, dim, &mut rng)?;
    check_kernel("competition", &competition, dim, &mut rng)?;
    if (dispersal.mass - 1.0).abs() > 1e-6 {
        return Err(ParamsError::BadKernel {
            which: "dispersal",
            declared: dispersal.mass,
            computed: dispersal.mass,
        });
    }
    check_envelope(&dispersal, dim, &mut rng)?;
    Ok(ModelParams { domain, gamma, mu, alpha, dispersal, competition })
}

/// Ready-made parameter sets used across tests and presets.
pub mod presets {
    use super::*;

    /// The reference 1-d configuration: gamma=5, mu=1, alpha=1,
    /// U = 1{|z| <= 1/2}, D = (1/6) 1{|z| <= 3}, on a torus of given side.
    pub fn fig_params(side: f64) -> ModelParams {
        make_params(
            SpatialDomain::Torus { side, dim: 1 },
            RateField::constant(5.0),
            RateField::constant(1.0),
            RateField::constant(1.0),
            Kernel::tophat(1, 3.0, 1.0),
            Kernel::tophat(1, 0.5, 1.0),
        )
        .expect("reference parameters are valid")
    }

    /// Detailed-balance configuration: mu = 0, D = U annulus, U(0) = 0.
    pub fn dbc_params(side_or_unbounded: Option<f64>) -> ModelParams {
        let domain = match side_or_unbounded {
            Some(side) => SpatialDomain::Torus { side, dim: 1 },
            None => SpatialDomain::Unbounded { dim: 1 },
        };
        make_params(
            domain,
            RateField::constant(2.0),
            RateField::constant(0.0),
            RateField::constant(0.5),
            Kernel::annulus(1, 0.25, 0.75, 1.0),
            Kernel::annulus(1, 0.25, 0.75, 1.0),
        )
        .expect("DBC parameters are valid")
    }
}
