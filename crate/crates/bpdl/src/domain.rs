//! Spatial domains the population lives on.

use serde::{Deserialize, Serialize};

/// Where a dispersed seed ended up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Placement {
    /// Landed inside the domain at the wrapped/raw coordinates.
    Inside,
    /// Landed outside a bounded box; the seed is discarded.
    Lost,
}

/// Supported domain geometries.
///
/// Torus is the default for quantitative runs: compact kernels wrap and
/// every translation-invariance argument stays exact. The box mode drops
/// seeds that land outside (a documented model variant with an effectively
/// reduced birth rate near the edge). The lattice mode restricts positions
/// to integer sites and is only used by the lattice survival experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SpatialDomain {
    Unbounded { dim: usize },
    /// Flat torus `[-side/2, side/2)^dim`.
    Torus { side: f64, dim: usize },
    /// Axis-aligned box with ordered bounds per axis.
    Box { bounds: Vec<(f64, f64)> },
    /// Integer lattice sites inside an axis-aligned integer box.
    Lattice { bounds: Vec<(i64, i64)> },
}

impl SpatialDomain {
    pub fn dim(&self) -> usize {
        match self {
            SpatialDomain::Unbounded { dim } | SpatialDomain::Torus { dim, .. } => *dim,
            SpatialDomain::Box { bounds } => bounds.len(),
            SpatialDomain::Lattice { bounds } => bounds.len(),
        }
    }

    pub fn is_lattice(&self) -> bool {
        matches!(self, SpatialDomain::Lattice { .. })
    }

    /// Volume of the domain, when finite.
    pub fn volume(&self) -> Option<f64> {
        match self {
            SpatialDomain::Unbounded { .. } => None,
            SpatialDomain::Torus { side, dim } => Some(side.powi(*dim as i32)),
            SpatialDomain::Box { bounds } => Some(bounds.iter().map(|(a, b)| b - a).product()),
            SpatialDomain::Lattice { bounds } => {
                Some(bounds.iter().map(|(a, b)| (b - a + 1) as f64).product())
            }
        }
    }

    /// Wrap a coordinate into the canonical torus interval `[-side/2, side/2)`.
    fn wrap(side: f64, x: f64) -> f64 {
        let half = 0.5 * side;
        let mut y = (x + half).rem_euclid(side) - half;
        // rem_euclid can return exactly `side` - half on rounding
        if y >= half {
            y -= side;
        }
        y
    }

    /// Minimal-image displacement `x - y`, written into `out`.
    pub fn displacement(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        match self {
            SpatialDomain::Torus { side, .. } => {
                for k in 0..x.len() {
                    out[k] = Self::wrap(*side, x[k] - y[k]);
                }
            }
            _ => {
                for k in 0..x.len() {
                    out[k] = x[k] - y[k];
                }
            }
        }
    }

    /// Squared minimal-image distance between two positions.
    pub fn distance2(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            SpatialDomain::Torus { side, .. } => x
                .iter()
                .zip(y)
                .map(|(a, b)| {
                    let d = Self::wrap(*side, a - b);
                    d * d
                })
                .sum(),
            _ => x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum(),
        }
    }

    pub fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        self.distance2(x, y).sqrt()
    }

    /// Resolve a seed landing at `parent + z`; writes the final position into `out`.
    pub fn place(&self, parent: &[f64], z: &[f64], out: &mut [f64]) -> Placement {
        for k in 0..parent.len() {
            out[k] = parent[k] + z[k];
        }
        match self {
            SpatialDomain::Unbounded { .. } => Placement::Inside,
            SpatialDomain::Torus { side, .. } => {
                for v in out.iter_mut() {
                    *v = Self::wrap(*side, *v);
                }
                Placement::Inside
            }
            SpatialDomain::Box { bounds } => {
                for (v, (a, b)) in out.iter().zip(bounds) {
                    if *v < *a || *v > *b {
                        return Placement::Lost;
                    }
                }
                Placement::Inside
            }
            SpatialDomain::Lattice { bounds } => {
                for (v, (a, b)) in out.iter().zip(bounds) {
                    if *v < *a as f64 || *v > *b as f64 {
                        return Placement::Lost;
                    }
                }
                Placement::Inside
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torus_wrap_arithmetic() {
        // side 10, parent 9.5 maps to -0.5 canonically; hop +1 lands at 0.5
        let d = SpatialDomain::Torus { side: 10.0, dim: 1 };
        let mut out = [0.0];
        let p = d.place(&[-0.5], &[1.0], &mut out);
        assert_eq!(p, Placement::Inside);
        assert!((out[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn torus_min_image_distance() {
        let d = SpatialDomain::Torus { side: 10.0, dim: 1 };
        assert!((d.distance(&[4.9], &[-4.9]) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn box_loses_outside_seeds() {
        let d = SpatialDomain::Box { bounds: vec![(-5.0, 5.0)] };
        let mut out = [0.0];
        assert_eq!(d.place(&[4.0], &[2.0], &mut out), Placement::Lost);
        assert_eq!(d.place(&[4.0], &[0.5], &mut out), Placement::Inside);
    }

    #[test]
    fn wrap_stays_in_canonical_interval() {
        let d = SpatialDomain::Torus { side: 7.0, dim: 1 };
        let mut out = [0.0];
        for i in -100..100 {
            let x = i as f64 * 0.37;
            d.place(&[0.0], &[x], &mut out);
            assert!(out[0] >= -3.5 && out[0] < 3.5, "wrapped {} -> {}", x, out[0]);
        }
    }

    #[test]
    fn volumes() {
        assert_eq!(SpatialDomain::Torus { side: 4.0, dim: 2 }.volume(), Some(16.0));
        assert_eq!(SpatialDomain::Unbounded { dim: 1 }.volume(), None);
        let b = SpatialDomain::Box { bounds: vec![(-1.0, 3.0), (0.0, 2.0)] };
        assert_eq!(b.volume(), Some(8.0));
    }
}
