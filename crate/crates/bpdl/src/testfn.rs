//! Bounded test functions and their exact convolutions with kernels.
//!
//! These are the observables used by martingale checks, generator
//! evaluations and scaling experiments. Convolutions `(K * f^p)(x)` are
//! computed analytically where the integrand is piecewise polynomial and
//! by adaptive quadrature otherwise; on a torus all wrap images are
//! accounted for. General-dimension support exists only for `One` (where
//! the convolution is the kernel mass); everything else is 1-d, which is
//! what every quantitative experiment here uses.

use serde::{Deserialize, Serialize};

use crate::domain::SpatialDomain;
use crate::kernel::{Kernel, KernelShape};
use crate::quad::integrate_piecewise;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFn {
    /// Constant 1.
    One,
    /// Indicator of the centered ball `|x| <= radius`.
    Indicator { radius: f64 },
    /// Triangular bump `max(0, 1 - |x|/radius)`.
    Triangle { radius: f64 },
}

impl TestFn {
    /// Distance from the origin respecting torus wrap.
    fn radial(x: &[f64], domain: &SpatialDomain) -> f64 {
        match domain {
            SpatialDomain::Torus { .. } => {
                let origin = vec![0.0; x.len()];
                domain.distance(x, &origin)
            }
            _ => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }

    pub fn eval(&self, x: &[f64], domain: &SpatialDomain) -> f64 {
        match self {
            TestFn::One => 1.0,
            TestFn::Indicator { radius } => {
                if Self::radial(x, domain) <= *radius {
                    1.0
                } else {
                    0.0
                }
            }
            TestFn::Triangle { radius } => {
                let r = Self::radial(x, domain);
                (1.0 - r / radius).max(0.0)
            }
        }
    }

    /// Radius outside which the function vanishes (infinite for `One`).
    pub fn support_radius(&self) -> f64 {
        match self {
            TestFn::One => f64::INFINITY,
            TestFn::Indicator { radius } | TestFn::Triangle { radius } => *radius,
        }
    }

    /// Points (in function space, d = 1) where the function or its slope jumps.
    fn breakpoints(&self) -> Vec<f64> {
        match self {
            TestFn::One => vec![],
            TestFn::Indicator { radius } | TestFn::Triangle { radius } => {
                vec![-radius, 0.0, *radius]
            }
        }
    }

    /// Convolution `(K * f^pow)(x) = integral K(z) f(x+z)^pow dz`.
    ///
    /// Exact for `One` in any dimension; otherwise 1-d with adaptive
    /// quadrature split at every discontinuity (including torus images).
    pub fn convolve(
        &self,
        kernel: &Kernel,
        x: &[f64],
        domain: &SpatialDomain,
        pow: u32,
    ) -> f64 {
        if matches!(self, TestFn::One) {
            return kernel.mass;
        }
        if kernel.is_atomic() {
            let mut landing = vec![0.0; x.len()];
            let mut total = 0.0;
            for (z, w) in kernel.atoms() {
                // lattice kernels never leave the domain mid-experiment
                let _ = domain.place(x, &z, &mut landing);
                total += w * self.eval(&landing, domain).powi(pow as i32);
            }
            return total;
        }
        assert_eq!(x.len(), 1, "kernel convolutions with non-constant f are one-dimensional");
        // Gaussian-against-indicator has a closed form off the torus; this
        // is the hot path of the accelerated-rates scaling runs
        if let (KernelShape::Gaussian { variance }, TestFn::Indicator { radius }) =
            (&kernel.shape, self)
        {
            if !matches!(domain, SpatialDomain::Torus { .. }) {
                let s = variance.sqrt();
                let cdf = |z: f64| crate::stats::dist::normal_cdf(z);
                return kernel.mass * (cdf((radius - x[0]) / s) - cdf((-radius - x[0]) / s));
            }
        }
        let intervals = kernel.support_intervals_1d();
        let max_r = intervals.iter().map(|(_, b)| b.abs()).fold(0.0, f64::max);
        let x0 = x[0];

        // z-values where f(x + z) has a breakpoint, including wrap images
        let mut breaks: Vec<f64> = Vec::new();
        let period = match domain {
            SpatialDomain::Torus { side, .. } => Some(*side),
            _ => None,
        };
        for b in self.breakpoints() {
            match period {
                Some(l) => {
                    let base = b - x0;
                    let k_min = ((-max_r - base) / l).floor() as i64;
                    let k_max = ((max_r - base) / l).ceil() as i64;
                    for k in k_min..=k_max {
                        breaks.push(base + k as f64 * l);
                    }
                }
                None => breaks.push(b - x0),
            }
        }
        // internal kernel discontinuities (tabulated shapes)
        if let KernelShape::Tabulated { edges, .. } = &kernel.shape {
            for e in edges {
                breaks.push(*e);
                breaks.push(-*e);
            }
        }

        let mut landing = [0.0];
        let integrand = move |z: f64| {
            let kv = kernel.eval(&[z]);
            if kv == 0.0 {
                return 0.0;
            }
            let _ = domain.place(&[x0], &[z], &mut landing);
            kv * self.eval(&landing, domain).powi(pow as i32)
        };
        integrate_piecewise(integrand, &intervals, &breaks, 1e-11)
            .expect("convolution quadrature converges")
    }
}
