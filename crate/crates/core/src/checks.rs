//! Sampled property checks on Lyapunov functions and recurrence, shared by
//! the `verify` command and the test suites.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::flow::FlowSystem;
use crate::grid::{BoxGrid, BoxSet};
use crate::index_pair::IndexPair;
use crate::lyapunov::{LyapunovField, LyapunovFunction};
use crate::recurrence::{epsilon_chain_oracle, MorseGraph, OracleParams};

/// Uniform point in box `b`.
pub fn point_in_box(grid: &BoxGrid, b: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (lo, hi) = grid.bounds(b);
    lo.iter().zip(&hi).map(|(l, h)| rng.gen_range(*l..*h)).collect()
}

/// `count` points of `N - L` whose boxes avoid `excluded`; draws boxes
/// uniformly and gives up after `50 * count` attempts.
pub fn sample_points(pair: &IndexPair, excluded: &BoxSet, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let grid = pair.grid();
    let pool: Vec<usize> = pair.isolating().iter().filter(|b| !excluded.contains(*b)).collect();
    let mut out = Vec::with_capacity(count);
    if pool.is_empty() {
        return out;
    }
    for _ in 0..50 * count {
        if out.len() == count {
            break;
        }
        let b = pool[rng.gen_range(0..pool.len())];
        let x = point_in_box(grid, b, rng);
        if grid.box_of(&x).is_some_and(|c| pool.binary_search(&c).is_ok()) {
            out.push(x);
        }
    }
    out
}

/// Boxes within `radius` box steps of `set`.
pub fn neighborhood(grid: &BoxGrid, set: &BoxSet, radius: usize) -> BoxSet {
    (0..radius).fold(set.clone(), |acc, _| grid.dilate(&acc))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleCheck {
    pub samples: usize,
    pub failures: usize,
    /// Worst value of the checked quantity (sign convention per check).
    pub worst: f64,
    pub counterexamples: Vec<Vec<f64>>,
}

impl SampleCheck {
    pub fn pass(&self) -> bool {
        self.failures == 0
    }
}

fn collect(samples: usize, results: Vec<(Vec<f64>, f64, bool)>, worst_is_max: bool) -> SampleCheck {
    let mut worst = if worst_is_max { f64::NEG_INFINITY } else { f64::INFINITY };
    let mut failures = 0;
    let mut counterexamples = Vec::new();
    for (x, v, ok) in results {
        worst = if worst_is_max { worst.max(v) } else { worst.min(v) };
        if !ok {
            failures += 1;
            if counterexamples.len() < 10 {
                counterexamples.push(x);
            }
        }
    }
    SampleCheck {
        samples,
        failures,
        worst,
        counterexamples,
    }
}

/// `g(phi^t x) <= g(x) + tol` for every sample and time; `worst` is the largest increase.
pub fn monotone(f: &LyapunovFunction, points: &[Vec<f64>], times: &[f64], tol: f64) -> Result<SampleCheck> {
    let mut res = Vec::new();
    for x in points {
        let gx = f.value_at(x)?;
        for t in times {
            let rise = f.value_after(x, *t)? - gx;
            res.push((x.clone(), rise, rise <= tol));
        }
    }
    Ok(collect(points.len(), res, true))
}

/// `g(phi^t x) < g(x) - margin`; `worst` is the smallest drop.
pub fn strictly_decreasing(f: &LyapunovFunction, points: &[Vec<f64>], t: f64, margin: f64) -> Result<SampleCheck> {
    let mut res = Vec::new();
    for x in points {
        let drop = f.value_at(x)? - f.value_after(x, t)?;
        res.push((x.clone(), drop, drop > margin));
    }
    Ok(collect(points.len(), res, false))
}

/// Renewal identity residual at step `delta`; `worst` is the largest residual.
pub fn renewal(f: &LyapunovFunction, points: &[Vec<f64>], delta: f64, tol: f64) -> Result<SampleCheck> {
    let mut res = Vec::new();
    for x in points {
        let r = f.renewal_residual(x, delta)?;
        res.push((x.clone(), r, r < tol));
    }
    Ok(collect(points.len(), res, true))
}

/// `max_i max_{b in M_i} |g(b) - i|` for a Morse-sum field.
pub fn level_deviation(field: &LyapunovField, mg: &MorseGraph) -> f64 {
    (0..mg.n())
        .flat_map(|i| mg.morse_set(i).iter().map(move |b| (i, b)))
        .map(|(i, b)| (field.value(b).unwrap_or(f64::NAN) - (i + 1) as f64).abs())
        .fold(0.0, f64::max)
}

/// `(min, max)` of the field over each Morse set.
pub fn morse_set_ranges(field: &LyapunovField, mg: &MorseGraph) -> Vec<(f64, f64)> {
    mg.morse_sets()
        .iter()
        .map(|m| {
            m.iter().filter_map(|b| field.value(b)).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleAgreement {
    pub points: usize,
    pub flagged: usize,
    /// Flagged points not lying in (the closure of) any chain recurrent box.
    pub outside_recurrent: Vec<Vec<f64>>,
    /// Morse sets containing no flagged point.
    pub empty_classes: Vec<usize>,
    /// Recurrent boxes without a flagged point that are not adjacent to a
    /// cluster boundary.
    pub interior_mismatch: Vec<usize>,
}

impl OracleAgreement {
    pub fn pass(&self) -> bool {
        self.outside_recurrent.is_empty() && self.empty_classes.is_empty()
    }
}

/// Compares the point oracle on a uniform lattice of `n` points per axis
/// against the Morse sets.
pub fn oracle_agreement(system: &FlowSystem, grid: &BoxGrid, mg: &MorseGraph, n: usize, p: &OracleParams) -> Result<OracleAgreement> {
    let dom = system.domain();
    let dim = dom.dim();
    let total = n.pow(dim as u32);
    let points: Vec<Vec<f64>> = (0..total)
        .map(|mut k| {
            (0..dim)
                .map(|a| {
                    let i = k % n;
                    k /= n;
                    dom.lower[a] + (dom.upper[a] - dom.lower[a]) * i as f64 / (n - 1).max(1) as f64
                })
                .collect()
        })
        .collect();
    let flagged = epsilon_chain_oracle(system, &points, p)?;
    let recurrent = mg.recurrent();
    let mut hit = vec![false; mg.n()];
    let mut hit_boxes = BoxSet::new();
    let mut outside = Vec::new();
    for i in &flagged {
        let boxes = grid.boxes_containing(&points[*i]);
        let rec: Vec<usize> = boxes.into_iter().filter(|b| recurrent.contains(*b)).collect();
        if rec.is_empty() {
            outside.push(points[*i].clone());
        }
        for b in rec {
            if let Some(c) = mg.class_of(b) {
                hit[c] = true;
            }
            hit_boxes = hit_boxes.union(&BoxSet::from_unsorted(vec![b]));
        }
    }
    let boundary = grid.boundary_layer(&recurrent);
    let interior_mismatch = recurrent
        .difference(&hit_boxes)
        .iter()
        .filter(|b| !boundary.contains(*b) && !grid.neighbors(*b).iter().any(|c| boundary.contains(*c)))
        .collect();
    Ok(OracleAgreement {
        points: points.len(),
        flagged: flagged.len(),
        outside_recurrent: outside,
        empty_classes: (0..mg.n()).filter(|c| !hit[*c]).map(|c| c + 1).collect(),
        interior_mismatch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn samples_are_reproducible_and_avoid_exclusions() {
        let g = BoxGrid::new(crate::flow::Rect::cube(1, 0.0, 1.0), vec![10]).unwrap();
        let pair = IndexPair::new(g.clone(), g.all(), BoxSet::from_unsorted(vec![0])).unwrap();
        let excl = BoxSet::from_unsorted(vec![5, 6]);
        let a = sample_points(&pair, &excl, 30, &mut ChaCha8Rng::seed_from_u64(1));
        let b = sample_points(&pair, &excl, 30, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        assert_eq!(a.len(), 30);
        for x in &a {
            let bx = g.box_of(x).unwrap();
            assert!(bx != 0 && !excl.contains(bx));
        }
        assert_eq!(neighborhood(&g, &BoxSet::from_unsorted(vec![5]), 2).len(), 5);
    }
}
