//! Combinatorial index pairs `(N, L)`, their validation, the exit-time map,
//! the induced semiflows on `N/L` and on `N`, and the regularity and
//! retraction checks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowOutcome, FlowSystem};
use crate::graph::{invariant_part, TransitionGraph};
use crate::grid::{BoxGrid, BoxSet};

#[derive(Clone, Debug)]
pub struct IndexPair {
    grid: BoxGrid,
    n: BoxSet,
    l: BoxSet,
    isolating: BoxSet,
    in_n: Vec<bool>,
    in_l: Vec<bool>,
    in_isolating: Vec<bool>,
}

impl PartialEq for IndexPair {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.n == other.n && self.l == other.l
    }
}

/// Point of the pointed space `N/L`.
#[derive(Clone, Debug, PartialEq)]
pub enum QuotientPoint {
    Point(Vec<f64>),
    Basepoint,
}

/// Value of the exit-time map; orbits still inside at the horizon get the
/// explicit sentinel instead of a large float.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ExitTime {
    Finite(f64),
    NeverWithin { horizon: f64 },
}

impl ExitTime {
    pub fn finite(self) -> Option<f64> {
        match self {
            ExitTime::Finite(t) => Some(t),
            ExitTime::NeverWithin { .. } => None,
        }
    }

    /// Numeric view with `+inf` for the sentinel.
    pub fn as_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl IndexPair {
    pub fn new(grid: BoxGrid, n: BoxSet, l: BoxSet) -> Result<Self> {
        n.check_within(&grid)?;
        if !l.is_subset(&n) {
            return Err(Error::Precondition("exit set L must be contained in N".into()));
        }
        let isolating = n.difference(&l);
        let len = grid.len();
        Ok(Self {
            in_n: n.mask(len),
            in_l: l.mask(len),
            in_isolating: isolating.mask(len),
            grid,
            n,
            l,
            isolating,
        })
    }

    pub fn grid(&self) -> &BoxGrid {
        &self.grid
    }

    pub fn n(&self) -> &BoxSet {
        &self.n
    }

    pub fn l(&self) -> &BoxSet {
        &self.l
    }

    /// Boxes of `N - L`.
    pub fn isolating(&self) -> &BoxSet {
        &self.isolating
    }

    pub fn box_in_l(&self, b: usize) -> bool {
        self.in_l[b]
    }

    pub fn box_in_isolating(&self, b: usize) -> bool {
        self.in_isolating[b]
    }

    /// Box-level membership in `N - L`.
    pub fn point_in_isolating(&self, x: &[f64]) -> bool {
        self.grid.box_of(x).is_some_and(|b| self.in_isolating[b])
    }

    /// Geometric membership in the closed union of the `N - L` boxes.
    pub fn point_in_closure(&self, x: &[f64]) -> bool {
        self.grid.boxes_containing(x).iter().any(|b| self.in_isolating[*b])
    }

    fn box_of_in_n(&self, x: &[f64]) -> Result<usize> {
        match self.grid.box_of(x) {
            Some(b) if self.in_n[b] => Ok(b),
            _ => Err(Error::Precondition(format!("point {x:?} is not in N"))),
        }
    }

    /// Projection `N -> N/L`.
    pub fn quotient_point(&self, x: &[f64]) -> Result<QuotientPoint> {
        let b = self.box_of_in_n(x)?;
        Ok(if self.in_l[b] {
            QuotientPoint::Basepoint
        } else {
            QuotientPoint::Point(x.to_vec())
        })
    }

    /// One sampling step of the quotient semiflow from a point of `N - L`;
    /// `None` is the basepoint.
    pub fn quotient_step(&self, system: &FlowSystem, x: &[f64], dt: f64) -> Result<Option<Vec<f64>>> {
        Ok(match system.flow_map(x, dt)? {
            FlowOutcome::Inside(y) if self.point_in_isolating(&y) => Some(y),
            _ => None,
        })
    }
}

/// Builds an index pair around the invariant part of `region`.
///
/// `N` is the forward closure, inside `region`, of the invariant part and its
/// one-box collar; `L` is the forward closure in `N` of the boxes that leave
/// `N` or hit the exit pseudo-node. The result is validated before returning.
pub fn build_index_pair(graph: &TransitionGraph, region: &BoxSet) -> Result<IndexPair> {
    let grid = graph.grid();
    let inv = invariant_part(graph, region)?;
    if inv.set.is_empty() {
        return Err(Error::Precondition("invariant part of the region is empty".into()));
    }
    if !inv.isolated {
        let touching = inv.set.intersection(&grid.boundary_layer(region)).len();
        return Err(Error::NotIsolating { touching });
    }
    let seed = grid.dilate(&inv.set).intersection(region);
    let n = graph.forward_closure(&seed, region);
    let n_mask = n.mask(graph.len());
    let leaving: BoxSet = n
        .iter()
        .filter(|b| graph.exits(*b) || graph.successors(*b).iter().any(|t| !n_mask[*t]))
        .collect();
    let l = graph.forward_closure(&leaving, &n);
    let clash = l.intersection(&inv.set);
    if !clash.is_empty() {
        return Err(Error::Construction {
            reason: "exit set swallows part of the invariant set".into(),
            boxes: clash.iter().collect(),
        });
    }
    let pair = IndexPair::new(grid.clone(), n, l)?;
    let report = validate_index_pair(graph, &pair);
    if !report.passed() {
        return Err(Error::Construction {
            reason: report.summary(),
            boxes: report.offending_boxes(),
        });
    }
    Ok(pair)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionVerdict {
    pub pass: bool,
    /// Offending edges as box paths; the exit pseudo-node appears as the grid size.
    pub counterexamples: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub positively_invariant: ConditionVerdict,
    pub exit_through_l: ConditionVerdict,
    pub isolating: ConditionVerdict,
}

impl PairReport {
    pub fn passed(&self) -> bool {
        self.positively_invariant.pass && self.exit_through_l.pass && self.isolating.pass
    }

    pub fn summary(&self) -> String {
        let mut failed = Vec::new();
        if !self.positively_invariant.pass {
            failed.push("condition (i): L not positively invariant relative to N");
        }
        if !self.exit_through_l.pass {
            failed.push("condition (ii): orbit leaves N without passing through L");
        }
        if !self.isolating.pass {
            failed.push("N - L is not isolating");
        }
        if failed.is_empty() {
            "all conditions pass".into()
        } else {
            failed.join("; ")
        }
    }

    pub fn offending_boxes(&self) -> Vec<usize> {
        let mut v: Vec<usize> = [&self.positively_invariant, &self.exit_through_l, &self.isolating]
            .iter()
            .flat_map(|c| c.counterexamples.iter().filter_map(|p| p.first().copied()))
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Decides conditions (i) and (ii) and the isolation clause on the graph.
pub fn validate_index_pair(graph: &TransitionGraph, pair: &IndexPair) -> PairReport {
    let exit = graph.exit_id();
    let mut cond_i = Vec::new();
    for b in pair.l.iter() {
        for t in graph.successors(b) {
            if pair.in_n[*t] && !pair.in_l[*t] {
                cond_i.push(vec![b, *t]);
            }
        }
    }
    let mut cond_ii = Vec::new();
    for b in pair.isolating.iter() {
        if graph.exits(b) {
            cond_ii.push(vec![b, exit]);
        }
        for t in graph.successors(b) {
            if !pair.in_n[*t] {
                cond_ii.push(vec![b, *t]);
            }
        }
    }
    let iso_fail: Vec<Vec<usize>> = match invariant_part(graph, &pair.isolating) {
        Ok(inv) if inv.isolated => Vec::new(),
        Ok(inv) => inv
            .set
            .intersection(&pair.grid.boundary_layer(&pair.isolating))
            .iter()
            .map(|b| vec![b])
            .collect(),
        Err(_) => vec![vec![]],
    };
    PairReport {
        positively_invariant: ConditionVerdict {
            pass: cond_i.is_empty(),
            counterexamples: cond_i,
        },
        exit_through_l: ConditionVerdict {
            pass: cond_ii.is_empty(),
            counterexamples: cond_ii,
        },
        isolating: ConditionVerdict {
            pass: iso_fail.is_empty(),
            counterexamples: iso_fail,
        },
    }
}

/// Time until the orbit of `x` first leaves the `N - L` boxes; 0 on `L`.
/// The last sampling step is refined by bisection to `dt / 1024`.
pub fn exit_time(system: &FlowSystem, pair: &IndexPair, x: &[f64], dt: f64, horizon: f64) -> Result<ExitTime> {
    if !(dt > 0.0 && horizon > 0.0) {
        return Err(Error::Precondition("exit_time needs dt > 0 and horizon > 0".into()));
    }
    let b = pair.box_of_in_n(x)?;
    if pair.in_l[b] {
        return Ok(ExitTime::Finite(0.0));
    }
    let steps = (horizon / dt).ceil() as usize;
    let mut cur = x.to_vec();
    for k in 0..steps {
        match pair.quotient_step(system, &cur, dt)? {
            Some(y) => cur = y,
            None => {
                let (mut lo, mut hi) = (0.0, dt);
                while hi - lo > dt / 1024.0 {
                    let mid = 0.5 * (lo + hi);
                    if pair.quotient_step(system, &cur, mid)?.is_some() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return Ok(ExitTime::Finite(k as f64 * dt + 0.5 * (lo + hi)));
            }
        }
    }
    Ok(ExitTime::NeverWithin { horizon })
}

/// Induced semiflow on `N/L`: follows the orbit while every sample stays in
/// `N - L`, otherwise collapses to the basepoint.
pub fn quotient_flow(system: &FlowSystem, pair: &IndexPair, x: &QuotientPoint, t: f64, dt: f64) -> Result<QuotientPoint> {
    let mut cur = match x {
        QuotientPoint::Basepoint => return Ok(QuotientPoint::Basepoint),
        QuotientPoint::Point(p) => {
            if !pair.point_in_isolating(p) {
                return Ok(QuotientPoint::Basepoint);
            }
            p.clone()
        }
    };
    if !(dt > 0.0 && t >= 0.0) {
        return Err(Error::Precondition("quotient_flow needs dt > 0 and t >= 0".into()));
    }
    let full = (t / dt + 1e-9).floor() as usize;
    let rem = t - full as f64 * dt;
    for _ in 0..full {
        match pair.quotient_step(system, &cur, dt)? {
            Some(y) => cur = y,
            None => return Ok(QuotientPoint::Basepoint),
        }
    }
    if rem > dt * 1e-9 {
        match pair.quotient_step(system, &cur, rem)? {
            Some(y) => cur = y,
            None => return Ok(QuotientPoint::Basepoint),
        }
    }
    Ok(QuotientPoint::Point(cur))
}

/// Semiflow on `N` stopped at the exit time: `phi^{min(t, tau_+(x))}(x)`.
pub fn stopped_flow(system: &FlowSystem, pair: &IndexPair, x: &[f64], t: f64, dt: f64, horizon: f64) -> Result<Vec<f64>> {
    let tau = exit_time(system, pair, x, dt, horizon.max(t))?;
    let s = match tau {
        ExitTime::Finite(tau) => t.min(tau),
        ExitTime::NeverWithin { .. } => t,
    };
    if s == 0.0 {
        return Ok(x.to_vec());
    }
    Ok(match system.flow_map(x, s)? {
        FlowOutcome::Inside(y) => y,
        FlowOutcome::Escaped { last_point, .. } => last_point,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityParams {
    pub samples_per_axis: usize,
    pub t_probe: f64,
    pub probes: usize,
    /// Boxes used to estimate the modulus of continuity of the exit time (0 skips it).
    pub modulus_boxes: usize,
    pub dt: f64,
    pub horizon: f64,
}

impl Default for RegularityParams {
    fn default() -> Self {
        Self {
            samples_per_axis: 3,
            t_probe: 0.5,
            probes: 10,
            modulus_boxes: 0,
            dt: 1e-2,
            horizon: 20.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub pass: bool,
    pub samples: usize,
    /// `(point, t)` with the orbit of `point` on `[0, t]` inside the closure of `N - L`.
    pub violations: Vec<(Vec<f64>, f64)>,
    pub exit_time_modulus: Option<f64>,
}

/// Samples points of `L` on the closure of `N - L` and checks that each orbit
/// leaves that closure immediately.
pub fn regularity_check(system: &FlowSystem, pair: &IndexPair, p: &RegularityParams) -> Result<RegularityReport> {
    let grid = &pair.grid;
    let first_t = p.t_probe / p.probes.max(1) as f64;
    let h = first_t / 8.0;
    let inner = (p.t_probe / h).round() as usize;
    let mut samples = 0;
    let mut violations = Vec::new();
    for b in pair.l.iter() {
        if !grid.neighbors(b).iter().any(|n| pair.in_isolating[*n]) {
            continue;
        }
        for x in grid.sample_lattice(b, p.samples_per_axis) {
            samples += 1;
            if !pair.point_in_closure(&x) {
                continue;
            }
            let mut cur = x.clone();
            let mut left_at = None;
            for k in 1..=inner {
                match system.flow_map(&cur, h)? {
                    FlowOutcome::Inside(y) => {
                        if !pair.point_in_closure(&y) {
                            left_at = Some(k as f64 * h);
                            break;
                        }
                        cur = y;
                    }
                    FlowOutcome::Escaped { .. } => {
                        left_at = Some(k as f64 * h);
                        break;
                    }
                }
            }
            match left_at {
                Some(s) if s <= first_t + 1e-12 => {}
                _ => violations.push((x, first_t)),
            }
        }
    }
    let exit_time_modulus = if p.modulus_boxes > 0 {
        Some(exit_time_modulus(system, pair, p)?)
    } else {
        None
    };
    Ok(RegularityReport {
        pass: violations.is_empty(),
        samples,
        violations,
        exit_time_modulus,
    })
}

/// Largest exit-time jump between centers of neighboring `N` boxes where both are finite.
fn exit_time_modulus(system: &FlowSystem, pair: &IndexPair, p: &RegularityParams) -> Result<f64> {
    let grid = &pair.grid;
    let stride = (pair.n.len() / p.modulus_boxes).max(1);
    let mut worst: f64 = 0.0;
    for b in pair.n.iter().step_by(stride) {
        let ta = exit_time(system, pair, &grid.center(b), p.dt, p.horizon)?;
        for nb in grid.neighbors(b) {
            if !pair.in_n[nb] {
                continue;
            }
            let tb = exit_time(system, pair, &grid.center(nb), p.dt, p.horizon)?;
            if let (Some(a), Some(c)) = (ta.finite(), tb.finite()) {
                worst = worst.max((a - c).abs());
            }
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetractionReport {
    pub pass: bool,
    pub samples: usize,
    /// Samples with `tau_+ <= 1`, i.e. inside the collar `U`.
    pub tested: usize,
    pub failures: Vec<Vec<f64>>,
}

/// Checks that the stopped semiflow retracts the collar `tau_+^{-1}[0, 1]` onto `L`.
pub fn retraction_check(
    system: &FlowSystem,
    pair: &IndexPair,
    samples_per_axis: usize,
    dt: f64,
    horizon: f64,
) -> Result<RetractionReport> {
    let grid = &pair.grid;
    let tol = grid.max_width();
    let mut samples = 0;
    let mut tested = 0;
    let mut failures = Vec::new();
    for b in pair.n.iter() {
        for x in grid.sample_lattice(b, samples_per_axis) {
            if !pair.grid.box_of(&x).is_some_and(|c| pair.in_n[c]) {
                continue;
            }
            samples += 1;
            if stopped_flow(system, pair, &x, 0.0, dt, horizon)? != x {
                failures.push(x.clone());
                continue;
            }
            let tau = match exit_time(system, pair, &x, dt, horizon)? {
                ExitTime::Finite(t) if t <= 1.0 => t,
                _ => continue,
            };
            tested += 1;
            let end = stopped_flow(system, pair, &x, tau, dt, horizon)?;
            let d = pair
                .l
                .iter()
                .map(|c| grid.point_box_distance(&end, c))
                .fold(f64::INFINITY, f64::min);
            if d > tol {
                failures.push(x);
            }
        }
    }
    Ok(RetractionReport {
        pass: failures.is_empty(),
        samples,
        tested,
        failures,
    })
}
