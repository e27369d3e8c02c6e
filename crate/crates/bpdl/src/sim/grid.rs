//! Hashed cell grid for neighbor queries with a compact interaction radius.

use std::collections::HashMap;

use crate::domain::SpatialDomain;
use crate::population::Population;

const MAX_DIM: usize = 3;

type CellKey = [i64; MAX_DIM];

/// Uniform-cell spatial index. Cell side is at least the interaction
/// radius, so all individuals interacting with a position live in the
/// 3^d block of cells around it. On a torus the cell coordinates wrap.
#[derive(Debug, Clone)]
pub struct CellGrid {
    dim: usize,
    cell_side: f64,
    /// Cells per axis on a torus (wrapping modulus); none when unbounded.
    wrap: Option<i64>,
    buckets: HashMap<CellKey, Vec<u32>>,
    cell_of: Vec<CellKey>,
}

impl CellGrid {
    /// Build a grid indexing every individual of `pop`.
    ///
    /// `radius` is the interaction radius the grid must cover; must be
    /// finite and positive.
    pub fn build(pop: &Population, domain: &SpatialDomain, radius: f64) -> Self {
        assert!(radius.is_finite() && radius > 0.0);
        let dim = pop.dim();
        assert!(dim <= MAX_DIM, "cell grid supports up to {MAX_DIM} dimensions");
        let (cell_side, wrap) = match domain {
            SpatialDomain::Torus { side, .. } => {
                let n = (side / radius).floor().max(1.0) as i64;
                (side / n as f64, Some(n))
            }
            _ => (radius, None),
        };
        let mut grid = CellGrid {
            dim,
            cell_side,
            wrap,
            buckets: HashMap::new(),
            cell_of: Vec::with_capacity(pop.len()),
        };
        for i in 0..pop.len() {
            grid.insert(i as u32, pop.position(i));
        }
        grid
    }

    fn key_of(&self, x: &[f64]) -> CellKey {
        let mut key = [0i64; MAX_DIM];
        for k in 0..self.dim {
            let mut c = (x[k] / self.cell_side).floor() as i64;
            if let Some(n) = self.wrap {
                c = c.rem_euclid(n);
            }
            key[k] = c;
        }
        key
    }

    pub fn insert(&mut self, index: u32, x: &[f64]) {
        debug_assert_eq!(index as usize, self.cell_of.len());
        let key = self.key_of(x);
        self.buckets.entry(key).or_default().push(index);
        self.cell_of.push(key);
    }

    /// Remove individual `index`, relabeling `last` to `index` to mirror a
    /// swap-remove on the population.
    pub fn remove_swap(&mut self, index: u32) {
        let last = (self.cell_of.len() - 1) as u32;
        let key = self.cell_of[index as usize];
        let bucket = self.buckets.get_mut(&key).expect("indexed cell exists");
        let pos = bucket.iter().position(|&i| i == index).expect("index in bucket");
        bucket.swap_remove(pos);
        if bucket.is_empty() {
            self.buckets.remove(&key);
        }
        if index != last {
            let last_key = self.cell_of[last as usize];
            let b = self.buckets.get_mut(&last_key).expect("cell of last exists");
            let p = b.iter().position(|&i| i == last).expect("last in bucket");
            b[p] = index;
            self.cell_of[index as usize] = last_key;
        }
        self.cell_of.pop();
    }

    /// Visit the indices of every individual in the 3^d cell block around `x`.
    pub fn for_neighbors(&self, x: &[f64], mut visit: impl FnMut(u32)) {
        let center = self.key_of(x);
        let mut offsets = [0i64; MAX_DIM];
        self.walk(0, center, &mut offsets, &mut visit);
    }

    fn walk(
        &self,
        axis: usize,
        center: CellKey,
        offsets: &mut [i64; MAX_DIM],
        visit: &mut impl FnMut(u32),
    ) {
        if axis == self.dim {
            let mut key = [0i64; MAX_DIM];
            for k in 0..self.dim {
                let mut c = center[k] + offsets[k];
                if let Some(n) = self.wrap {
                    c = c.rem_euclid(n);
                }
                key[k] = c;
            }
            if let Some(bucket) = self.buckets.get(&key) {
                for &i in bucket {
                    visit(i);
                }
            }
            return;
        }
        // a torus with fewer than 3 cells per axis would visit cells twice
        let span: &[i64] = if self.wrap == Some(1) {
            &[0]
        } else if self.wrap == Some(2) {
            &[0, 1]
        } else {
            &[-1, 0, 1]
        };
        for &o in span {
            offsets[axis] = o;
            self.walk(axis + 1, center, offsets, visit);
        }
    }

    pub fn len(&self) -> usize {
        self.cell_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cell_of.is_empty()
    }
}
