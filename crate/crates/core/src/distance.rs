//! Point-to-box-set distances with per-box candidate lists.

use rayon::prelude::*;

use crate::grid::{BoxGrid, BoxSet};

/// Euclidean distance from points to the closed union of a box set.
///
/// For each query box `c` the candidates are the members whose box-to-box
/// distance from `c` does not exceed the smallest farthest-point distance
/// from `c` to any member; every nearest member of any point of `c` is a
/// candidate.
#[derive(Clone, Debug)]
pub struct SetDistance {
    dim: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    candidates: Vec<Vec<u32>>,
}

impl SetDistance {
    /// Prepares queries for points lying in the boxes of `query`.
    pub fn new(grid: &BoxGrid, set: &BoxSet, query: &BoxSet) -> Self {
        let dim = grid.dim();
        let mut lo = Vec::with_capacity(set.len() * dim);
        let mut hi = Vec::with_capacity(set.len() * dim);
        for b in set.iter() {
            let (l, h) = grid.bounds(b);
            lo.extend(l);
            hi.extend(h);
        }
        let mut candidates = vec![Vec::new(); grid.len()];
        if !set.is_empty() {
            let lists: Vec<(usize, Vec<u32>)> = query
                .as_slice()
                .par_iter()
                .map(|c| {
                    let (cl, ch) = grid.bounds(*c);
                    let m = set.len();
                    let mut near = vec![0.0; m];
                    let mut bound = f64::INFINITY;
                    for s in 0..m {
                        let (mut dn, mut df) = (0.0, 0.0);
                        for a in 0..dim {
                            let (sl, sh) = (lo[s * dim + a], hi[s * dim + a]);
                            let gap = (sl - ch[a]).max(cl[a] - sh).max(0.0);
                            let far = (sh - cl[a]).abs().max((ch[a] - sl).abs());
                            dn += gap * gap;
                            df += far * far;
                        }
                        near[s] = dn;
                        bound = bound.min(df);
                    }
                    let list = (0..m).filter(|s| near[*s] <= bound).map(|s| s as u32).collect();
                    (*c, list)
                })
                .collect();
            for (c, list) in lists {
                candidates[c] = list;
            }
        }
        Self { dim, lo, hi, candidates }
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    fn member_distance_sq(&self, x: &[f64], s: usize) -> f64 {
        let mut d = 0.0;
        for (a, v) in x.iter().enumerate().take(self.dim) {
            let (l, h) = (self.lo[s * self.dim + a], self.hi[s * self.dim + a]);
            let g = if *v < l {
                l - v
            } else if *v > h {
                v - h
            } else {
                0.0
            };
            d += g * g;
        }
        d
    }

    /// Distance from `x`, lying in box `b`, to the set; `+inf` for an empty
    /// set. Falls back to a full scan when `b` was not a query box.
    pub fn distance(&self, x: &[f64], b: usize) -> f64 {
        if self.is_empty() {
            return f64::INFINITY;
        }
        let best = match self.candidates.get(b) {
            Some(list) if !list.is_empty() => list
                .iter()
                .map(|s| self.member_distance_sq(x, *s as usize))
                .fold(f64::INFINITY, f64::min),
            _ => (0..self.lo.len() / self.dim)
                .map(|s| self.member_distance_sq(x, s))
                .fold(f64::INFINITY, f64::min),
        };
        best.sqrt()
    }

    /// Smallest box-to-box distance between the set and another one.
    pub fn set_distance(&self, grid: &BoxGrid, other: &BoxSet) -> f64 {
        if self.is_empty() || other.is_empty() {
            return f64::INFINITY;
        }
        let m = self.lo.len() / self.dim;
        other
            .iter()
            .map(|b| {
                let (l, h) = grid.bounds(b);
                (0..m)
                    .map(|s| {
                        (0..self.dim)
                            .map(|a| {
                                let g = (self.lo[s * self.dim + a] - h[a]).max(l[a] - self.hi[s * self.dim + a]).max(0.0);
                                g * g
                            })
                            .sum::<f64>()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    }
}
