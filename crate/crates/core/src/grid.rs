//! Uniform cubical grids over the domain and sorted sets of box indices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::Rect;

/// Upper bound on the number of boxes in one grid.
pub const MAX_BOXES: usize = 1 << 28;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxGrid {
    domain: Rect,
    counts: Vec<usize>,
    #[serde(skip)]
    widths: Vec<f64>,
    #[serde(skip)]
    len: usize,
}

impl BoxGrid {
    pub fn new(domain: Rect, counts: Vec<usize>) -> Result<Self> {
        if counts.len() != domain.dim() {
            return Err(Error::Precondition(format!(
                "{} subdivision counts for a {}-dimensional domain",
                counts.len(),
                domain.dim()
            )));
        }
        if let Some(axis) = counts.iter().position(|c| *c == 0) {
            return Err(Error::Precondition(format!("subdivision count on axis {axis} must be >= 1")));
        }
        let len = counts
            .iter()
            .try_fold(1usize, |acc, c| acc.checked_mul(*c))
            .filter(|n| *n <= MAX_BOXES)
            .ok_or_else(|| Error::Capacity(format!("grid {counts:?} exceeds {MAX_BOXES} boxes")))?;
        let widths = domain
            .lower
            .iter()
            .zip(&domain.upper)
            .zip(&counts)
            .map(|((lo, hi), c)| (hi - lo) / *c as f64)
            .collect();
        Ok(Self {
            domain,
            counts,
            widths,
            len,
        })
    }

    /// Restores derived fields after deserialization.
    pub fn rebuild(self) -> Result<Self> {
        Self::new(self.domain, self.counts)
    }

    pub fn domain(&self) -> &Rect {
        &self.domain
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn diagonal(&self) -> f64 {
        self.widths.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn max_width(&self) -> f64 {
        self.widths.iter().cloned().fold(0.0, f64::max)
    }

    pub fn all(&self) -> BoxSet {
        BoxSet((0..self.len).collect())
    }

    /// Axis 0 varies fastest.
    pub fn index_of(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for (m, c) in multi.iter().zip(&self.counts) {
            idx += m * stride;
            stride *= c;
        }
        idx
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        self.counts
            .iter()
            .map(|c| {
                let m = idx % c;
                idx /= c;
                m
            })
            .collect()
    }

    pub fn bounds(&self, idx: usize) -> (Vec<f64>, Vec<f64>) {
        let multi = self.multi_index(idx);
        let lo: Vec<f64> = multi
            .iter()
            .enumerate()
            .map(|(a, m)| self.domain.lower[a] + *m as f64 * self.widths[a])
            .collect();
        let hi = lo.iter().zip(&self.widths).map(|(l, w)| l + w).collect();
        (lo, hi)
    }

    pub fn center(&self, idx: usize) -> Vec<f64> {
        let multi = self.multi_index(idx);
        multi
            .iter()
            .enumerate()
            .map(|(a, m)| self.domain.lower[a] + (*m as f64 + 0.5) * self.widths[a])
            .collect()
    }

    fn axis_cell(&self, axis: usize, v: f64) -> usize {
        let c = ((v - self.domain.lower[axis]) / self.widths[axis]).floor();
        (c.max(0.0) as usize).min(self.counts[axis] - 1)
    }

    /// Box containing `x`; points on a shared face go to the upper box.
    pub fn box_of(&self, x: &[f64]) -> Option<usize> {
        if !self.domain.contains(x) {
            return None;
        }
        let multi: Vec<usize> = x.iter().enumerate().map(|(a, v)| self.axis_cell(a, *v)).collect();
        Some(self.index_of(&multi))
    }

    /// Every box whose closed cell contains `x`.
    pub fn boxes_containing(&self, x: &[f64]) -> Vec<usize> {
        self.boxes_meeting_ball(x, 0.0)
    }

    /// Euclidean distance from `x` to the closed cell of `idx`.
    pub fn point_box_distance(&self, x: &[f64], idx: usize) -> f64 {
        let (lo, hi) = self.bounds(idx);
        x.iter()
            .zip(lo.iter().zip(&hi))
            .map(|(v, (l, h))| {
                let g = if v < l {
                    l - v
                } else if v > h {
                    v - h
                } else {
                    0.0
                };
                g * g
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Boxes meeting the closed Euclidean ball of radius `r` around `x`.
    pub fn boxes_meeting_ball(&self, x: &[f64], r: f64) -> Vec<usize> {
        let dim = self.dim();
        let mut ranges = Vec::with_capacity(dim);
        for a in 0..dim {
            let lo = self.domain.lower[a];
            let w = self.widths[a];
            let first = ((x[a] - r - lo) / w).ceil() - 1.0;
            let last = ((x[a] + r - lo) / w).floor();
            let n = self.counts[a] as f64;
            if last < 0.0 || first > n - 1.0 {
                return Vec::new();
            }
            ranges.push((first.max(0.0) as usize, last.min(n - 1.0) as usize));
        }
        let tol = 1e-12 * self.max_width();
        let mut out = Vec::new();
        let mut multi: Vec<usize> = ranges.iter().map(|r| r.0).collect();
        loop {
            let idx = self.index_of(&multi);
            if self.point_box_distance(x, idx) <= r + tol {
                out.push(idx);
            }
            let mut a = 0;
            loop {
                if a == dim {
                    out.sort_unstable();
                    return out;
                }
                if multi[a] < ranges[a].1 {
                    multi[a] += 1;
                    break;
                }
                multi[a] = ranges[a].0;
                a += 1;
            }
        }
    }

    /// Grid neighbors sharing at least a corner (up to `3^d - 1` boxes).
    pub fn neighbors(&self, idx: usize) -> Vec<usize> {
        let multi = self.multi_index(idx);
        let dim = self.dim();
        let mut out = Vec::new();
        let mut offs = vec![-1i64; dim];
        loop {
            if offs.iter().any(|o| *o != 0) {
                let cand: Option<Vec<usize>> = multi
                    .iter()
                    .zip(&offs)
                    .zip(&self.counts)
                    .map(|((m, o), c)| {
                        let v = *m as i64 + o;
                        (v >= 0 && v < *c as i64).then_some(v as usize)
                    })
                    .collect();
                if let Some(c) = cand {
                    out.push(self.index_of(&c));
                }
            }
            let mut a = 0;
            loop {
                if a == dim {
                    out.sort_unstable();
                    return out;
                }
                if offs[a] < 1 {
                    offs[a] += 1;
                    break;
                }
                offs[a] = -1;
                a += 1;
            }
        }
    }

    /// Number of grid neighbors a box would have away from the domain edge.
    fn full_neighbor_count(&self) -> usize {
        3usize.pow(self.dim() as u32) - 1
    }

    /// Boxes of `set` adjacent to a box outside `set` or to the edge of the grid.
    pub fn boundary_layer(&self, set: &BoxSet) -> BoxSet {
        let full = self.full_neighbor_count();
        let mask = set.mask(self.len);
        BoxSet(
            set.iter()
                .filter(|b| {
                    let nb = self.neighbors(*b);
                    nb.len() < full || nb.iter().any(|n| !mask[*n])
                })
                .collect(),
        )
    }

    /// `set` together with all of its grid neighbors.
    pub fn dilate(&self, set: &BoxSet) -> BoxSet {
        let mut v: Vec<usize> = set.iter().collect();
        for b in set.iter() {
            v.extend(self.neighbors(b));
        }
        BoxSet::from_unsorted(v)
    }

    /// Regular lattice of `per_axis` points per axis over the closed box, corners included.
    pub fn sample_lattice(&self, idx: usize, per_axis: usize) -> Vec<Vec<f64>> {
        let (lo, hi) = self.bounds(idx);
        let dim = self.dim();
        let coords: Vec<Vec<f64>> = (0..dim)
            .map(|a| {
                if per_axis <= 1 {
                    vec![0.5 * (lo[a] + hi[a])]
                } else {
                    (0..per_axis)
                        .map(|k| lo[a] + (hi[a] - lo[a]) * k as f64 / (per_axis - 1) as f64)
                        .collect()
                }
            })
            .collect();
        let total = coords.iter().map(|c| c.len()).product();
        (0..total)
            .map(|mut k| {
                coords
                    .iter()
                    .map(|c| {
                        let v = c[k % c.len()];
                        k /= c.len();
                        v
                    })
                    .collect()
            })
            .collect()
    }
}

/// Sorted, duplicate-free set of box indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BoxSet(Vec<usize>);

impl BoxSet {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub fn from_unsorted(mut v: Vec<usize>) -> Self {
        v.sort_unstable();
        v.dedup();
        Self(v)
    }

    pub fn from_mask(mask: &[bool]) -> Self {
        Self(mask.iter().enumerate().filter(|(_, m)| **m).map(|(i, _)| i).collect())
    }

    pub fn mask(&self, len: usize) -> Vec<bool> {
        let mut m = vec![false; len];
        for b in &self.0 {
            m[*b] = true;
        }
        m
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, b: usize) -> bool {
        self.0.binary_search(&b).is_ok()
    }

    pub fn is_subset(&self, other: &BoxSet) -> bool {
        self.iter().all(|b| other.contains(b))
    }

    pub fn union(&self, other: &BoxSet) -> BoxSet {
        let mut out = Vec::with_capacity(self.len() + other.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => {
                    out.push(self.0[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(other.0[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push(self.0[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.0[i..]);
        out.extend_from_slice(&other.0[j..]);
        BoxSet(out)
    }

    pub fn intersection(&self, other: &BoxSet) -> BoxSet {
        BoxSet(self.iter().filter(|b| other.contains(*b)).collect())
    }

    pub fn difference(&self, other: &BoxSet) -> BoxSet {
        BoxSet(self.iter().filter(|b| !other.contains(*b)).collect())
    }

    pub fn symmetric_difference(&self, other: &BoxSet) -> BoxSet {
        self.difference(other).union(&other.difference(self))
    }

    pub fn max(&self) -> Option<usize> {
        self.0.last().copied()
    }

    pub fn min(&self) -> Option<usize> {
        self.0.first().copied()
    }

    pub fn check_within(&self, grid: &BoxGrid) -> Result<()> {
        match self.max() {
            Some(m) if m >= grid.len() => Err(Error::Precondition(format!(
                "box index {m} out of range for a grid of {} boxes",
                grid.len()
            ))),
            _ => Ok(()),
        }
    }
}

impl FromIterator<usize> for BoxSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        Self::from_unsorted(iter.into_iter().collect())
    }
}
