//! Symmetric interaction and dispersal kernels.
//!
//! A kernel is a radially symmetric function `K(z)` with a declared total
//! mass. Continuous shapes are densities with respect to Lebesgue measure;
//! the lattice shapes (`LatticeNn`, `Point`) are atom weights with respect
//! to counting measure. Dispersal kernels must have mass 1; competition
//! kernels may carry any nonnegative mass.
//!
//! Each kernel carries an envelope `(C, D~)` used for thinning: proposals
//! are drawn from the probability density `D~` and accepted with
//! probability `K(z) / (C * D~(z))`. By default `D~ = K/mass` and `C = 1`,
//! which makes every proposal exact.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum KernelShape {
    /// Uniform density on the closed ball `|z| <= radius`.
    Tophat { radius: f64 },
    /// Uniform density on the shell `inner <= |z| <= outer`.
    Annulus { inner: f64, outer: f64 },
    /// Centered isotropic Gaussian with the given per-axis variance.
    Gaussian { variance: f64 },
    /// Atoms of equal weight on the 2d nearest lattice neighbors.
    LatticeNn,
    /// Single atom at the origin (pointwise competition).
    Point,
    /// Radial piecewise-constant density: `densities[i]` on `[edges[i], edges[i+1])`.
    Tabulated { edges: Vec<f64>, densities: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    /// Acceptance constant: `K(z)/mass <= c * proposal_density(z)` everywhere.
    pub c: f64,
    /// Proposal law; `None` means the kernel itself (exact proposals).
    pub proposal: Option<Box<Kernel>>,
}

impl Default for Envelope {
    fn default() -> Self {
        Envelope { c: 1.0, proposal: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub shape: KernelShape,
    /// Declared total mass (1 for probability kernels).
    pub mass: f64,
    /// Spatial dimension the density lives in.
    pub dim: usize,
    #[serde(default)]
    pub envelope: Envelope,
}

fn ball_volume(dim: usize, r: f64) -> f64 {
    match dim {
        1 => 2.0 * r,
        2 => std::f64::consts::PI * r * r,
        3 => 4.0 / 3.0 * std::f64::consts::PI * r.powi(3),
        d => panic!("unsupported dimension {d}"),
    }
}

impl Kernel {
    pub fn tophat(dim: usize, radius: f64, mass: f64) -> Self {
        Kernel { shape: KernelShape::Tophat { radius }, mass, dim, envelope: Envelope::default() }
    }

    pub fn annulus(dim: usize, inner: f64, outer: f64, mass: f64) -> Self {
        Kernel {
            shape: KernelShape::Annulus { inner, outer },
            mass,
            dim,
            envelope: Envelope::default(),
        }
    }

    pub fn gaussian(dim: usize, variance: f64, mass: f64) -> Self {
        Kernel { shape: KernelShape::Gaussian { variance }, mass, dim, envelope: Envelope::default() }
    }

    pub fn lattice_nn(dim: usize) -> Self {
        Kernel { shape: KernelShape::LatticeNn, mass: 1.0, dim, envelope: Envelope::default() }
    }

    pub fn point(dim: usize, mass: f64) -> Self {
        Kernel { shape: KernelShape::Point, mass, dim, envelope: Envelope::default() }
    }

    pub fn with_envelope(mut self, c: f64, proposal: Option<Kernel>) -> Self {
        self.envelope = Envelope { c, proposal: proposal.map(Box::new) };
        self
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self.shape, KernelShape::LatticeNn | KernelShape::Point)
    }

    /// Kernel value at displacement `z` (density, or atom weight for lattice shapes).
    pub fn eval(&self, z: &[f64]) -> f64 {
        let r2: f64 = z.iter().map(|v| v * v).sum();
        match &self.shape {
            KernelShape::Tophat { radius } => {
                if r2 <= radius * radius {
                    self.mass / ball_volume(self.dim, *radius)
                } else {
                    0.0
                }
            }
            KernelShape::Annulus { inner, outer } => {
                if r2 >= inner * inner && r2 <= outer * outer {
                    self.mass / (ball_volume(self.dim, *outer) - ball_volume(self.dim, *inner))
                } else {
                    0.0
                }
            }
            KernelShape::Gaussian { variance } => {
                let norm = (2.0 * std::f64::consts::PI * variance).powf(self.dim as f64 / 2.0);
                self.mass * (-0.5 * r2 / variance).exp() / norm
            }
            KernelShape::LatticeNn => {
                if r2 == 1.0 && z.iter().all(|v| v.fract() == 0.0) {
                    self.mass / (2.0 * self.dim as f64)
                } else {
                    0.0
                }
            }
            KernelShape::Point => {
                if r2 == 0.0 {
                    self.mass
                } else {
                    0.0
                }
            }
            KernelShape::Tabulated { edges, densities } => {
                let r = r2.sqrt();
                if r < edges[0] || r >= *edges.last().unwrap() {
                    return 0.0;
                }
                let i = match edges.binary_search_by(|e| e.partial_cmp(&r).unwrap()) {
                    Ok(i) => i.min(densities.len() - 1),
                    Err(i) => i - 1,
                };
                densities[i]
            }
        }
    }

    /// Supremum of the kernel over all displacements.
    pub fn sup_value(&self) -> f64 {
        match &self.shape {
            KernelShape::Tophat { radius } => self.mass / ball_volume(self.dim, *radius),
            KernelShape::Annulus { inner, outer } => {
                self.mass / (ball_volume(self.dim, *outer) - ball_volume(self.dim, *inner))
            }
            KernelShape::Gaussian { variance } => {
                self.mass / (2.0 * std::f64::consts::PI * variance).powf(self.dim as f64 / 2.0)
            }
            KernelShape::LatticeNn => self.mass / (2.0 * self.dim as f64),
            KernelShape::Point => self.mass,
            KernelShape::Tabulated { densities, .. } => {
                densities.iter().cloned().fold(0.0, f64::max)
            }
        }
    }

    /// Radius beyond which the kernel vanishes (infinite for Gaussian).
    pub fn support_radius(&self) -> f64 {
        match &self.shape {
            KernelShape::Tophat { radius } => *radius,
            KernelShape::Annulus { outer, .. } => *outer,
            KernelShape::Gaussian { .. } => f64::INFINITY,
            KernelShape::LatticeNn => 1.0,
            KernelShape::Point => 0.0,
            KernelShape::Tabulated { edges, .. } => *edges.last().unwrap(),
        }
    }

    /// Radius covering all but a negligible tail, for stencil construction.
    pub fn effective_radius(&self) -> f64 {
        match &self.shape {
            KernelShape::Gaussian { variance } => 7.0 * variance.sqrt(),
            _ => self.support_radius(),
        }
    }

    /// Radii where the radial profile jumps.
    pub fn radial_breaks(&self) -> Vec<f64> {
        match &self.shape {
            KernelShape::Tophat { radius } => vec![*radius],
            KernelShape::Annulus { inner, outer } => vec![*inner, *outer],
            KernelShape::Tabulated { edges, .. } => edges.clone(),
            _ => Vec::new(),
        }
    }

    /// 1-d support of the radial profile as signed intervals.
    pub fn support_intervals_1d(&self) -> Vec<(f64, f64)> {
        assert_eq!(self.dim, 1, "interval support is one-dimensional");
        match &self.shape {
            KernelShape::Tophat { radius } => vec![(-radius, *radius)],
            KernelShape::Annulus { inner, outer } => vec![(-outer, -inner), (*inner, *outer)],
            KernelShape::Gaussian { variance } => {
                let r = 9.0 * variance.sqrt();
                vec![(-r, r)]
            }
            KernelShape::Tabulated { edges, .. } => {
                let (a, b) = (edges[0], *edges.last().unwrap());
                if a > 0.0 {
                    vec![(-b, -a), (a, b)]
                } else {
                    vec![(-b, b)]
                }
            }
            KernelShape::LatticeNn | KernelShape::Point => Vec::new(),
        }
    }

    /// Atoms of a lattice kernel as (offset, weight) pairs.
    pub fn atoms(&self) -> Vec<(Vec<f64>, f64)> {
        match &self.shape {
            KernelShape::LatticeNn => {
                let w = self.mass / (2.0 * self.dim as f64);
                let mut out = Vec::with_capacity(2 * self.dim);
                for k in 0..self.dim {
                    for s in [-1.0, 1.0] {
                        let mut z = vec![0.0; self.dim];
                        z[k] = s;
                        out.push((z, w));
                    }
                }
                out
            }
            KernelShape::Point => vec![(vec![0.0; self.dim], self.mass)],
            _ => Vec::new(),
        }
    }

    /// Draw a displacement from the kernel's probability law `K/mass`.
    pub fn sample(&self, rng: &mut impl Rng, out: &mut [f64]) {
        match &self.shape {
            KernelShape::Tophat { radius } => sample_ball(rng, self.dim, *radius, out),
            KernelShape::Annulus { inner, outer } => {
                sample_shell(rng, self.dim, *inner, *outer, out)
            }
            KernelShape::Gaussian { variance } => {
                let n = Normal::new(0.0, variance.sqrt()).unwrap();
                for v in out.iter_mut() {
                    *v = n.sample(rng);
                }
            }
            KernelShape::LatticeNn => {
                out.fill(0.0);
                let k = rng.random_range(0..self.dim);
                out[k] = if rng.random::<bool>() { 1.0 } else { -1.0 };
            }
            KernelShape::Point => out.fill(0.0),
            KernelShape::Tabulated { edges, densities } => {
                assert_eq!(self.dim, 1, "tabulated sampling implemented for d = 1");
                // bin probability is density * signed length, both signs
                let weights: Vec<f64> = densities
                    .iter()
                    .zip(edges.windows(2))
                    .map(|(d, e)| d * 2.0 * (e[1] - e[0]))
                    .collect();
                let total: f64 = weights.iter().sum();
                let mut u = rng.random::<f64>() * total;
                let mut bin = weights.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    if u < *w {
                        bin = i;
                        break;
                    }
                    u -= w;
                }
                let r = edges[bin] + rng.random::<f64>() * (edges[bin + 1] - edges[bin]);
                out[0] = if rng.random::<bool>() { r } else { -r };
            }
        }
    }

    fn proposal_density(&self, z: &[f64]) -> f64 {
        match &self.envelope.proposal {
            Some(p) => p.eval(z) / p.mass,
            None => self.eval(z) / self.mass,
        }
    }

    /// Draw a proposal from the envelope law `D~`.
    pub fn sample_envelope(&self, rng: &mut impl Rng, out: &mut [f64]) {
        match &self.envelope.proposal {
            Some(p) => p.sample(rng, out),
            None => self.sample(rng, out),
        }
    }

    /// Thinning acceptance ratio `K(z) / (mass * C * D~(z))` for a proposal `z`.
    pub fn thinning_ratio(&self, z: &[f64]) -> f64 {
        if self.envelope.proposal.is_none() && self.envelope.c == 1.0 {
            return 1.0;
        }
        let tilde = self.proposal_density(z);
        if tilde <= 0.0 {
            return 0.0;
        }
        (self.eval(z) / self.mass) / (self.envelope.c * tilde)
    }

    /// Total mass recomputed numerically from the radial profile.
    pub fn mass_by_quadrature(&self) -> f64 {
        if self.is_atomic() {
            return self.atoms().iter().map(|(_, w)| w).sum();
        }
        if let KernelShape::Tabulated { edges, densities } = &self.shape {
            // exact piecewise sum (trapezoid degenerates to this for steps)
            return densities
                .iter()
                .zip(edges.windows(2))
                .map(|(d, e)| d * (ball_volume(self.dim, e[1]) - ball_volume(self.dim, e[0])))
                .sum();
        }
        let r_max = self.effective_radius() * 1.05;
        let surface = |r: f64| match self.dim {
            1 => 2.0,
            2 => 2.0 * std::f64::consts::PI * r,
            3 => 4.0 * std::f64::consts::PI * r * r,
            d => panic!("unsupported dimension {d}"),
        };
        let probe = |r: f64| {
            let mut z = vec![0.0; self.dim];
            z[0] = r;
            self.eval(&z) * surface(r)
        };
        crate::quad::integrate_piecewise(probe, &[(0.0, r_max)], &self.radial_breaks(), 1e-10)
            .unwrap_or(f64::NAN)
    }
}

fn sample_ball(rng: &mut impl Rng, dim: usize, radius: f64, out: &mut [f64]) {
    match dim {
        1 => out[0] = (2.0 * rng.random::<f64>() - 1.0) * radius,
        2 => {
            let r = radius * rng.random::<f64>().sqrt();
            let th = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
            out[0] = r * th.cos();
            out[1] = r * th.sin();
        }
        3 => {
            let r = radius * rng.random::<f64>().cbrt();
            direction(rng, out);
            for v in out.iter_mut() {
                *v *= r;
            }
        }
        d => panic!("unsupported dimension {d}"),
    }
}

fn sample_shell(rng: &mut impl Rng, dim: usize, inner: f64, outer: f64, out: &mut [f64]) {
    let u = rng.random::<f64>();
    let r = match dim {
        1 => inner + u * (outer - inner),
        2 => (inner * inner + u * (outer * outer - inner * inner)).sqrt(),
        3 => (inner.powi(3) + u * (outer.powi(3) - inner.powi(3))).cbrt(),
        d => panic!("unsupported dimension {d}"),
    };
    if dim == 1 {
        out[0] = if rng.random::<bool>() { r } else { -r };
    } else {
        direction(rng, out);
        for v in out.iter_mut() {
            *v *= r;
        }
    }
}

fn direction(rng: &mut impl Rng, out: &mut [f64]) {
    let n = Normal::new(0.0, 1.0).unwrap();
    loop {
        let mut s = 0.0;
        for v in out.iter_mut() {
            *v = n.sample(rng);
            s += *v * *v;
        }
        if s > 1e-300 {
            let inv = s.sqrt().recip();
            for v in out.iter_mut() {
                *v *= inv;
            }
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replicate_rng;

    #[test]
    fn tophat_values() {
        // unit-mass 1-d tophat of radius 1/2 has height 1 and includes the edge
        let k = Kernel::tophat(1, 0.5, 1.0);
        assert_eq!(k.eval(&[0.0]), 1.0);
        assert_eq!(k.eval(&[0.5]), 1.0);
        assert_eq!(k.eval(&[0.51]), 0.0);
        assert_eq!(k.sup_value(), 1.0);
    }

    #[test]
    fn symmetry_probes() {
        let kernels = [
            Kernel::tophat(1, 1.3, 2.0),
            Kernel::annulus(1, 0.25, 0.75, 1.0),
            Kernel::gaussian(1, 0.7, 1.0),
        ];
        let mut rng = replicate_rng(11, 0);
        for k in &kernels {
            for _ in 0..1000 {
                let z = [4.0 * (rand::Rng::random::<f64>(&mut rng) - 0.5)];
                assert_eq!(k.eval(&z), k.eval(&[-z[0]]));
            }
        }
    }

    #[test]
    fn masses_match_quadrature() {
        for k in [
            Kernel::tophat(1, 3.0, 1.0),
            Kernel::annulus(1, 0.25, 0.75, 1.0),
            Kernel::gaussian(1, 0.5, 1.0),
            Kernel::tophat(2, 1.5, 2.5),
            Kernel::gaussian(2, 0.3, 1.0),
        ] {
            let m = k.mass_by_quadrature();
            assert!((m - k.mass).abs() < 1e-6, "{:?}: {m}", k.shape);
        }
    }

    #[test]
    fn tabulated_mass_and_eval() {
        let k = Kernel {
            shape: KernelShape::Tabulated {
                edges: vec![0.0, 1.0, 2.0],
                densities: vec![0.2, 0.05],
            },
            mass: 0.5,
            dim: 1,
            envelope: Envelope::default(),
        };
        assert!((k.mass_by_quadrature() - 0.5).abs() < 1e-12);
        assert_eq!(k.eval(&[0.5]), 0.2);
        assert_eq!(k.eval(&[-1.5]), 0.05);
        assert_eq!(k.eval(&[2.5]), 0.0);
    }

    #[test]
    fn envelope_defaults_accept_everything() {
        let k = Kernel::tophat(1, 3.0, 1.0);
        assert_eq!(k.thinning_ratio(&[1.0]), 1.0);
    }

    #[test]
    fn envelope_ratio_with_inflated_c() {
        let k = Kernel::tophat(1, 3.0, 1.0).with_envelope(2.0, Some(Kernel::tophat(1, 3.0, 1.0)));
        let mut rng = replicate_rng(3, 0);
        let mut z = [0.0];
        let n = 50_000;
        let mut acc = 0usize;
        for _ in 0..n {
            k.sample_envelope(&mut rng, &mut z);
            if rand::Rng::random::<f64>(&mut rng) < k.thinning_ratio(&z) {
                acc += 1;
            }
        }
        let rate = acc as f64 / n as f64;
        assert!((rate - 0.5).abs() < 0.01, "acceptance {rate}");
    }

    #[test]
    fn lattice_atoms() {
        let k = Kernel::lattice_nn(2);
        let atoms = k.atoms();
        assert_eq!(atoms.len(), 4);
        for (_, w) in &atoms {
            assert_eq!(*w, 0.25);
        }
        assert_eq!(k.eval(&[0.0, 1.0]), 0.25);
        assert_eq!(k.eval(&[0.0, 0.5]), 0.0);
        let p = Kernel::point(1, 1.0);
        assert_eq!(p.eval(&[0.0]), 1.0);
        assert_eq!(p.eval(&[1.0]), 0.0);
    }

    #[test]
    fn shell_sampler_stays_in_shell() {
        let k = Kernel::annulus(1, 0.25, 0.75, 1.0);
        let mut rng = replicate_rng(5, 0);
        let mut z = [0.0];
        for _ in 0..10_000 {
            k.sample(&mut rng, &mut z);
            let r = z[0].abs();
            assert!((0.25..=0.75).contains(&r), "sample {r} outside shell");
        }
    }
}
