//! Lyapunov functions on `N/L`: the Urysohn-type function `rho`, its sup
//! envelope `h`, the discounted average `g`, the sums over a Morse
//! decomposition and over all attractor-repeller pairs, the uniform entry
//! time and the extraction of a regular index filtration.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance::SetDistance;
use crate::error::{Error, Result};
use crate::flow::FlowSystem;
use crate::graph::{invariant_part, TransitionGraph};
use crate::grid::{BoxGrid, BoxSet};
use crate::index_pair::{
    quotient_flow, regularity_check, validate_index_pair, IndexPair, PairReport, QuotientPoint, RegularityParams,
    RegularityReport,
};
use crate::recurrence::{ar_regions_in_pair, enumerate_down_sets, MorseGraph};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovParams {
    /// Sampling step along quotient trajectories.
    pub dt: f64,
    /// Quadrature cutoff for the discounted average.
    pub t_max: f64,
    /// Extra look-ahead used for the sup envelope beyond `t_max`.
    pub horizon: f64,
}

impl Default for LyapunovParams {
    fn default() -> Self {
        Self {
            dt: 0.05,
            t_max: 12.0,
            horizon: 20.0,
        }
    }
}

impl LyapunovParams {
    pub fn check(&self) -> Result<()> {
        let ok = self.dt > 0.0 && self.dt.is_finite() && self.t_max >= 1.0 && self.t_max.is_finite();
        if !ok || !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::Precondition(format!(
                "need dt > 0, t_max >= 1 and horizon >= 0, got {self:?}"
            )));
        }
        Ok(())
    }

    fn quad_steps(&self) -> usize {
        (self.t_max / self.dt).round().max(1.0) as usize
    }

    fn look_ahead(&self) -> usize {
        (self.horizon / self.dt).ceil() as usize
    }
}

/// `rho = d_q(x, Z) / (d_q(x, Z) + d_q(x, R))` with `Z = L ∪ A` in the
/// quotient metric of `N/L`.
#[derive(Clone, Debug)]
pub struct Rho {
    in_a: Vec<bool>,
    in_r: Vec<bool>,
    zero: SetDistance,
    repel: SetDistance,
    exit: Arc<SetDistance>,
    repel_to_exit: f64,
}

impl Rho {
    pub fn new(pair: &IndexPair, attractor: &BoxSet, repeller: &BoxSet) -> Result<Self> {
        let exit = Arc::new(SetDistance::new(pair.grid(), pair.l(), pair.isolating()));
        Self::with_exit(pair, attractor, repeller, exit)
    }

    fn with_exit(pair: &IndexPair, attractor: &BoxSet, repeller: &BoxSet, exit: Arc<SetDistance>) -> Result<Self> {
        let grid = pair.grid();
        attractor.check_within(grid)?;
        repeller.check_within(grid)?;
        let both = attractor.intersection(repeller);
        if !both.is_empty() {
            return Err(Error::Precondition(format!(
                "zero and one regions share boxes {:?}",
                both.as_slice()
            )));
        }
        let query = pair.isolating();
        let repel = SetDistance::new(grid, repeller, query);
        Ok(Self {
            in_a: attractor.mask(grid.len()),
            in_r: repeller.mask(grid.len()),
            zero: SetDistance::new(grid, attractor, query),
            repel_to_exit: repel.set_distance(grid, pair.l()),
            repel,
            exit,
        })
    }

    fn eval(&self, x: &[f64], b: usize, d_l: f64) -> Result<f64> {
        if self.in_a[b] {
            return Ok(0.0);
        }
        if self.in_r[b] {
            return Ok(1.0);
        }
        let dz = d_l.min(self.zero.distance(x, b));
        let dr = self.repel.distance(x, b).min(d_l + self.repel_to_exit);
        if dr == f64::INFINITY {
            return Ok(0.0);
        }
        if dz == f64::INFINITY {
            return Ok(1.0);
        }
        if dz + dr == 0.0 {
            return Err(Error::RegionOverlap { point: x.to_vec() });
        }
        Ok(dz / (dz + dr))
    }

    pub fn value(&self, pair: &IndexPair, x: &QuotientPoint) -> Result<f64> {
        match pair_point(pair, x)? {
            None => Ok(0.0),
            Some((p, b)) => self.eval(&p, b, self.exit.distance(&p, b)),
        }
    }
}

/// Resolves a quotient point to a point of `N - L` and its box, or `None` for the basepoint.
fn pair_point(pair: &IndexPair, x: &QuotientPoint) -> Result<Option<(Vec<f64>, usize)>> {
    match x {
        QuotientPoint::Basepoint => Ok(None),
        QuotientPoint::Point(p) => match pair.quotient_point(p)? {
            QuotientPoint::Basepoint => Ok(None),
            QuotientPoint::Point(p) => {
                let b = pair.grid().box_of(&p).expect("point of N has a box");
                Ok(Some((p, b)))
            }
        },
    }
}

struct March {
    /// `rho_j` at samples `0..=steps`; 0 after the basepoint or absorption.
    series: Vec<Vec<f64>>,
    settled: bool,
}

/// Samples every `rho_j` along one quotient trajectory. A term is absorbed
/// once the orbit enters its zero region.
fn march(system: &FlowSystem, pair: &IndexPair, rhos: &[&Rho], x: &QuotientPoint, dt: f64, steps: usize) -> Result<March> {
    let mut series = vec![vec![0.0; steps + 1]; rhos.len()];
    let Some((mut cur, mut b)) = pair_point(pair, x)? else {
        return Ok(March { series, settled: true });
    };
    let mut absorbed = vec![false; rhos.len()];
    let mut settled = false;
    for k in 0..=steps {
        let mut d_l = None;
        for (j, rho) in rhos.iter().enumerate() {
            if absorbed[j] {
                continue;
            }
            if rho.in_a[b] {
                absorbed[j] = true;
                continue;
            }
            let d = *d_l.get_or_insert_with(|| rho.exit.distance(&cur, b));
            series[j][k] = rho.eval(&cur, b, d)?;
        }
        if absorbed.iter().all(|a| *a) {
            settled = true;
            break;
        }
        if k == steps {
            break;
        }
        match pair.quotient_step(system, &cur, dt)? {
            Some(y) => {
                b = pair.grid().box_of(&y).expect("quotient step stays in N - L");
                cur = y;
            }
            None => {
                settled = true;
                break;
            }
        }
    }
    Ok(March { series, settled })
}

fn suffix_max(s: &[f64]) -> Vec<f64> {
    let mut h = s.to_vec();
    for k in (0..h.len().saturating_sub(1)).rev() {
        h[k] = h[k].max(h[k + 1]);
    }
    h
}

/// Weights of `e^{-t}` against the two endpoint hats on `[0, dt]`.
fn hat_weights(dt: f64) -> (f64, f64) {
    let e = (-dt).exp();
    let q = (1.0 - e) / dt;
    (1.0 - q, q - e)
}

/// `int_0^{m dt} e^{-t} h` for `h` linear between samples.
fn discounted_sum(h: &[f64], dt: f64, m: usize) -> f64 {
    let (a, b) = hat_weights(dt);
    (0..m).map(|k| (-(k as f64) * dt).exp() * (a * h[k] + b * h[k + 1])).sum()
}

/// Discounted average of a sup envelope over `[0, t_max]` plus the tail estimate.
fn discounted(h: &[f64], p: &LyapunovParams) -> f64 {
    let m = p.quad_steps();
    (discounted_sum(h, p.dt, m) + (-(m as f64) * p.dt).exp() * h[m]).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Envelope {
    pub value: f64,
    /// False when the horizon cut the search; `value` is then a lower bound.
    pub converged: bool,
}

/// `h(x) = sup_{t >= 0} rho(phi_#^t x)` over samples at spacing `dt` up to `horizon`.
pub fn sup_envelope(system: &FlowSystem, pair: &IndexPair, rho: &Rho, x: &QuotientPoint, dt: f64, horizon: f64) -> Result<Envelope> {
    if !(dt > 0.0 && horizon >= 0.0) {
        return Err(Error::Precondition("sup_envelope needs dt > 0 and horizon >= 0".into()));
    }
    let steps = (horizon / dt).ceil() as usize;
    let m = march(system, pair, &[rho], x, dt, steps)?;
    let value = m.series[0].iter().copied().fold(0.0, f64::max);
    Ok(Envelope {
        value,
        converged: m.settled || value == 1.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Discounted {
    pub value: f64,
    pub tail_bound: f64,
}

/// `g(x) = int_0^inf e^{-t} h(phi_#^t x) dt`, truncated at `t_max`.
pub fn discounted_average(system: &FlowSystem, pair: &IndexPair, rho: &Rho, x: &QuotientPoint, p: &LyapunovParams) -> Result<Discounted> {
    p.check()?;
    let m = march(system, pair, &[rho], x, p.dt, p.quad_steps() + p.look_ahead())?;
    Ok(Discounted {
        value: discounted(&suffix_max(&m.series[0]), p),
        tail_bound: (-p.t_max).exp(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Construction {
    SinglePair,
    MorseSum,
    Complete,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldComponent {
    pub down_set: Vec<usize>,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub value: f64,
    pub terms: Vec<f64>,
    pub converged: bool,
}

/// Weighted sum of discounted averages, evaluable anywhere on `N/L`.
#[derive(Clone, Debug)]
pub struct LyapunovFunction {
    system: FlowSystem,
    pair: IndexPair,
    terms: Vec<(f64, Rho)>,
    params: LyapunovParams,
}

impl LyapunovFunction {
    pub fn pair(&self) -> &IndexPair {
        &self.pair
    }

    pub fn system(&self) -> &FlowSystem {
        &self.system
    }

    pub fn params(&self) -> &LyapunovParams {
        &self.params
    }

    fn envelopes(&self, x: &QuotientPoint, extra: usize) -> Result<(Vec<Vec<f64>>, bool)> {
        let rhos: Vec<&Rho> = self.terms.iter().map(|(_, r)| r).collect();
        let steps = self.params.quad_steps() + self.params.look_ahead() + extra;
        let m = march(&self.system, &self.pair, &rhos, x, self.params.dt, steps)?;
        Ok((m.series.iter().map(|s| suffix_max(s)).collect(), m.settled))
    }

    pub fn evaluate(&self, x: &QuotientPoint) -> Result<Evaluation> {
        let (hs, settled) = self.envelopes(x, 0)?;
        let terms: Vec<f64> = hs.iter().map(|h| discounted(h, &self.params)).collect();
        let value = self.terms.iter().zip(&terms).map(|((w, _), g)| w * g).sum();
        let converged = settled || hs.iter().all(|h| h[0] == 1.0 || h[0] == 0.0);
        Ok(Evaluation { value, terms, converged })
    }

    /// Value at a point of `N` (points of `L` map to the basepoint).
    pub fn value_at(&self, x: &[f64]) -> Result<f64> {
        Ok(self.evaluate(&self.pair.quotient_point(x)?)?.value)
    }

    /// Value after flowing `x` for time `t` in the quotient semiflow.
    pub fn value_after(&self, x: &[f64], t: f64) -> Result<f64> {
        let q = self.pair.quotient_point(x)?;
        let y = quotient_flow(&self.system, &self.pair, &q, t, self.params.dt)?;
        Ok(self.evaluate(&y)?.value)
    }

    /// `|g(x) - int_0^delta e^{-t} h(phi^t x) dt - e^{-delta} g(phi^delta x)|`.
    pub fn renewal_residual(&self, x: &[f64], delta: f64) -> Result<f64> {
        let q = self.pair.quotient_point(x)?;
        let m = (delta / self.params.dt).round() as usize;
        let (hs, _) = self.envelopes(&q, m)?;
        let head: f64 = self
            .terms
            .iter()
            .zip(&hs)
            .map(|((w, _), h)| w * discounted_sum(h, self.params.dt, m))
            .sum();
        let gx = self.evaluate(&q)?.value;
        let y = quotient_flow(&self.system, &self.pair, &q, m as f64 * self.params.dt, self.params.dt)?;
        let gy = self.evaluate(&y)?.value;
        Ok((gx - head - (-(m as f64) * self.params.dt).exp() * gy).abs())
    }
}

/// Box-center samples of a Lyapunov function on `N`, plus the function itself.
#[derive(Clone, Debug)]
pub struct LyapunovField {
    construction: Construction,
    range: [f64; 2],
    components: Vec<FieldComponent>,
    values: BTreeMap<usize, f64>,
    unconverged: usize,
    function: LyapunovFunction,
}

impl LyapunovField {
    pub fn construction(&self) -> Construction {
        self.construction
    }

    pub fn range(&self) -> [f64; 2] {
        self.range
    }

    pub fn components(&self) -> &[FieldComponent] {
        &self.components
    }

    /// Value per box of `N`, keyed by box index.
    pub fn values(&self) -> &BTreeMap<usize, f64> {
        &self.values
    }

    pub fn value(&self, b: usize) -> Option<f64> {
        self.values.get(&b).copied()
    }

    /// Box-center evaluations whose sup search hit the horizon.
    pub fn unconverged(&self) -> usize {
        self.unconverged
    }

    pub fn function(&self) -> &LyapunovFunction {
        &self.function
    }

    pub fn pair(&self) -> &IndexPair {
        &self.function.pair
    }

    pub fn grid(&self) -> &BoxGrid {
        self.function.pair.grid()
    }

    pub fn params(&self) -> &LyapunovParams {
        &self.function.params
    }
}

struct Term {
    weight: f64,
    down_set: Vec<usize>,
    attractor: BoxSet,
    repeller: BoxSet,
}

fn build_field(
    system: &FlowSystem,
    pair: &IndexPair,
    terms: Vec<Term>,
    params: &LyapunovParams,
    construction: Construction,
    range: [f64; 2],
) -> Result<LyapunovField> {
    params.check()?;
    let exit = Arc::new(SetDistance::new(pair.grid(), pair.l(), pair.isolating()));
    let mut rhos = Vec::with_capacity(terms.len());
    let mut components = Vec::with_capacity(terms.len());
    for t in terms {
        rhos.push((t.weight, Rho::with_exit(pair, &t.attractor, &t.repeller, exit.clone())?));
        components.push(FieldComponent {
            down_set: t.down_set,
            weight: t.weight,
        });
    }
    let function = LyapunovFunction {
        system: system.clone(),
        pair: pair.clone(),
        terms: rhos,
        params: *params,
    };
    let grid = pair.grid();
    let evals: Vec<(usize, Evaluation)> = pair
        .isolating()
        .as_slice()
        .par_iter()
        .map(|b| Ok((*b, function.evaluate(&QuotientPoint::Point(grid.center(*b)))?)))
        .collect::<Result<_>>()?;
    let mut values: BTreeMap<usize, f64> = pair.l().iter().map(|b| (b, 0.0)).collect();
    let mut unconverged = 0;
    for (b, e) in evals {
        unconverged += usize::from(!e.converged);
        values.insert(b, e.value);
    }
    Ok(LyapunovField {
        construction,
        range,
        components,
        values,
        unconverged,
        function,
    })
}

fn check_graph_fits(pair: &IndexPair, mg: &MorseGraph) -> Result<()> {
    if !mg.region().is_subset(pair.n()) {
        return Err(Error::Precondition("Morse graph region must lie inside N".into()));
    }
    Ok(())
}

fn term_for(mg: &MorseGraph, d: Vec<usize>, weight: f64) -> Result<Term> {
    let r = ar_regions_in_pair(mg, &d)?;
    Ok(Term {
        weight,
        down_set: d,
        attractor: r.unstable_of_attractor,
        repeller: r.stable_of_repeller,
    })
}

/// `g` for one attractor-repeller pair given by its zero and one regions.
pub fn pair_lyapunov(
    system: &FlowSystem,
    pair: &IndexPair,
    down_set: &[usize],
    attractor: &BoxSet,
    repeller: &BoxSet,
    params: &LyapunovParams,
) -> Result<LyapunovField> {
    let term = Term {
        weight: 1.0,
        down_set: down_set.to_vec(),
        attractor: attractor.clone(),
        repeller: repeller.clone(),
    };
    build_field(system, pair, vec![term], params, Construction::SinglePair, [0.0, 1.0])
}

/// `g_0 + ... + g_n` over the down-sets `{}`, `{1}`, ..., `{1..n}` of the admissible order.
pub fn morse_lyapunov(
    system: &FlowSystem,
    pair: &IndexPair,
    mg: &MorseGraph,
    params: &LyapunovParams,
) -> Result<LyapunovField> {
    check_graph_fits(pair, mg)?;
    let n = mg.n();
    if n == 0 {
        return Err(Error::Precondition("Morse graph has no Morse sets".into()));
    }
    let terms = (0..=n)
        .map(|j| term_for(mg, (0..j).collect(), 1.0))
        .collect::<Result<_>>()?;
    build_field(system, pair, terms, params, Construction::MorseSum, [0.0, (n + 1) as f64])
}

/// `sum_i 2^{-i} g_i` over every attractor-repeller pair in canonical order.
pub fn complete_lyapunov(
    system: &FlowSystem,
    pair: &IndexPair,
    mg: &MorseGraph,
    params: &LyapunovParams,
) -> Result<LyapunovField> {
    check_graph_fits(pair, mg)?;
    let downs = enumerate_down_sets(mg)?;
    let terms = downs
        .into_iter()
        .enumerate()
        .map(|(i, d)| term_for(mg, d, 0.5f64.powi(i as i32 + 1)))
        .collect::<Result<_>>()?;
    build_field(system, pair, terms, params, Construction::Complete, [0.0, 1.0])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum EntryTime {
    Finite(f64),
    NeverWithin { horizon: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntryReport {
    pub time: EntryTime,
    pub samples: usize,
    /// Start point realizing the reported time.
    pub witness: Option<Vec<f64>>,
}

/// Smallest sampled `T` with `phi_#^{[T, horizon]}(B) ⊂ U ∪ [L]`.
#[allow(clippy::too_many_arguments)]
pub fn uniform_entry_time(
    system: &FlowSystem,
    pair: &IndexPair,
    b: &BoxSet,
    u: &BoxSet,
    repeller: &BoxSet,
    samples_per_axis: usize,
    dt: f64,
    horizon: f64,
) -> Result<EntryReport> {
    if !(dt > 0.0 && horizon > 0.0) {
        return Err(Error::Precondition("uniform_entry_time needs dt > 0 and horizon > 0".into()));
    }
    if !b.is_subset(pair.n()) {
        return Err(Error::Precondition("B must lie inside N".into()));
    }
    let hit = b.intersection(repeller);
    if !hit.is_empty() {
        return Err(Error::Precondition(format!("B meets the repeller region in boxes {:?}", hit.as_slice())));
    }
    if !pair.l().is_subset(u) {
        return Err(Error::Precondition("U must contain the exit set L".into()));
    }
    let grid = pair.grid();
    let in_u = u.mask(grid.len());
    let steps = (horizon / dt).ceil() as usize;
    let starts: Vec<Vec<f64>> = b
        .iter()
        .flat_map(|c| grid.sample_lattice(c, samples_per_axis))
        .filter(|x| grid.box_of(x).is_some_and(|c| pair.n().contains(c)))
        .collect();
    let lasts: Vec<Option<usize>> = starts
        .par_iter()
        .map(|x| {
            let mut cur = match pair.quotient_point(x)? {
                QuotientPoint::Basepoint => return Ok(None),
                QuotientPoint::Point(p) => p,
            };
            let mut last_bad = None;
            for k in 0..=steps {
                if !in_u[grid.box_of(&cur).expect("sample in N")] {
                    last_bad = Some(k);
                }
                if k == steps {
                    break;
                }
                match pair.quotient_step(system, &cur, dt)? {
                    Some(y) => cur = y,
                    None => break,
                }
            }
            Ok(last_bad)
        })
        .collect::<Result<_>>()?;
    let mut worst: Option<(usize, usize)> = None;
    for (i, l) in lasts.iter().enumerate() {
        if let Some(k) = l {
            if worst.is_none_or(|(_, w)| *k > w) {
                worst = Some((i, *k));
            }
        }
    }
    let (time, witness) = match worst {
        None => (EntryTime::Finite(0.0), None),
        Some((i, k)) if k >= steps => (EntryTime::NeverWithin { horizon }, Some(starts[i].clone())),
        Some((i, k)) => (EntryTime::Finite((k + 1) as f64 * dt), Some(starts[i].clone())),
    };
    Ok(EntryReport {
        time,
        samples: starts.len(),
        witness,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: usize,
    pub conditions: PairReport,
    pub isolates_morse_set: bool,
    pub regularity: RegularityReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Filtration {
    /// `N_0 ⊆ N_1 ⊆ ... ⊆ N_n`.
    pub levels: Vec<BoxSet>,
    /// Cut value of each level below the top one.
    pub thresholds: Vec<f64>,
    pub reports: Vec<LevelReport>,
}

/// Cuts a Morse-sum field at `k + 1/2` and validates every `(N_k, N_{k-1})`.
pub fn extract_filtration(
    field: &LyapunovField,
    mg: &MorseGraph,
    graph: &TransitionGraph,
    regularity: &RegularityParams,
) -> Result<Filtration> {
    if field.construction() != Construction::MorseSum {
        return Err(Error::Precondition("filtration needs a Morse-sum field".into()));
    }
    let n = mg.n();
    if field.components().len() != n + 1 {
        return Err(Error::Precondition(format!(
            "field has {} components but the Morse graph has {n} Morse sets",
            field.components().len()
        )));
    }
    let pair = field.pair();
    let mut levels = Vec::with_capacity(n + 1);
    let mut thresholds = Vec::with_capacity(n);
    for k in 0..n {
        let cut = k as f64 + 0.5;
        let below: BoxSet = pair
            .isolating()
            .iter()
            .filter(|b| field.value(*b).is_some_and(|v| v <= cut))
            .collect();
        levels.push(pair.l().union(&below));
        thresholds.push(cut);
    }
    levels.push(pair.n().clone());
    for k in 1..=n {
        if !levels[k - 1].is_subset(&levels[k]) {
            return Err(Error::Filtration {
                level: k,
                reason: "levels are not nested".into(),
                boxes: levels[k - 1].difference(&levels[k]).iter().collect(),
            });
        }
    }
    let mut reports = Vec::with_capacity(n);
    for k in 1..=n {
        let step = IndexPair::new(pair.grid().clone(), levels[k].clone(), levels[k - 1].clone())?;
        let conditions = validate_index_pair(graph, &step);
        if !conditions.passed() {
            return Err(Error::Filtration {
                level: k,
                reason: conditions.summary(),
                boxes: conditions.offending_boxes(),
            });
        }
        let inv = invariant_part(graph, step.isolating())?;
        let mismatch = inv.set.symmetric_difference(mg.morse_set(k - 1));
        if !mismatch.is_empty() {
            return Err(Error::Filtration {
                level: k,
                reason: format!("invariant part of N_{k} - N_{} is not Morse set {k}", k - 1),
                boxes: mismatch.iter().collect(),
            });
        }
        let reg = regularity_check(field.function().system(), &step, regularity)?;
        if !reg.pass {
            let grid = pair.grid();
            let mut boxes: Vec<usize> = reg.violations.iter().filter_map(|(x, _)| grid.box_of(x)).collect();
            boxes.sort_unstable();
            boxes.dedup();
            return Err(Error::Filtration {
                level: k,
                reason: "exit set is not regular".into(),
                boxes,
            });
        }
        reports.push(LevelReport {
            level: k,
            conditions,
            isolates_morse_set: true,
            regularity: reg,
        });
    }
    Ok(Filtration {
        levels,
        thresholds,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{builtin_system, Rect};
    use crate::graph::MapParams;
    use crate::index_pair::build_index_pair;
    use crate::recurrence::morse_graph;

    fn set(v: &[usize]) -> BoxSet {
        BoxSet::from_unsorted(v.to_vec())
    }

    /// 1D grid of 10 boxes on [0, 1] with N = all, L = {}.
    fn line() -> IndexPair {
        let g = BoxGrid::new(Rect::cube(1, 0.0, 1.0), vec![10]).unwrap();
        IndexPair::new(g.clone(), g.all(), BoxSet::new()).unwrap()
    }

    #[test]
    fn rho_zero_one_and_midpoint() {
        let pair = line();
        let rho = Rho::new(&pair, &set(&[0]), &set(&[9])).unwrap();
        let p = |x: f64| QuotientPoint::Point(vec![x]);
        assert_eq!(rho.value(&pair, &p(0.05)).unwrap(), 0.0);
        assert_eq!(rho.value(&pair, &p(0.95)).unwrap(), 1.0);
        assert!((rho.value(&pair, &p(0.5)).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(rho.value(&pair, &QuotientPoint::Basepoint).unwrap(), 0.0);
    }

    #[test]
    fn rho_uses_quotient_metric() {
        let g = BoxGrid::new(Rect::cube(1, 0.0, 1.0), vec![10]).unwrap();
        let pair = IndexPair::new(g.clone(), g.all(), set(&[0])).unwrap();
        // R near the far end; the route through L costs d(x, L) + d(R, L)
        let rho = Rho::new(&pair, &BoxSet::new(), &set(&[9])).unwrap();
        let v = rho.value(&pair, &QuotientPoint::Point(vec![0.3])).unwrap();
        assert!((v - 0.2 / (0.2 + 0.6)).abs() < 1e-12);
        assert_eq!(rho.value(&pair, &QuotientPoint::Point(vec![0.05])).unwrap(), 0.0);
    }

    #[test]
    fn rho_edge_cases() {
        let pair = line();
        let x = QuotientPoint::Point(vec![0.5]);
        let only_r = Rho::new(&pair, &BoxSet::new(), &set(&[9])).unwrap();
        assert_eq!(only_r.value(&pair, &x).unwrap(), 1.0);
        let only_a = Rho::new(&pair, &set(&[0]), &BoxSet::new()).unwrap();
        assert_eq!(only_a.value(&pair, &x).unwrap(), 0.0);
        assert!(matches!(Rho::new(&pair, &set(&[3]), &set(&[3, 4])), Err(Error::Precondition(_))));

        let g = BoxGrid::new(Rect::cube(2, -1.0, 1.0), vec![2, 2]).unwrap();
        let pair = IndexPair::new(g.clone(), g.all(), BoxSet::new()).unwrap();
        let rho = Rho::new(&pair, &set(&[0]), &set(&[1])).unwrap();
        let corner = QuotientPoint::Point(vec![0.0, 0.0]);
        assert!(matches!(rho.value(&pair, &corner), Err(Error::RegionOverlap { .. })));
    }

    #[test]
    fn discount_weights_integrate_constants_exactly() {
        let p = LyapunovParams::default();
        let ones = vec![1.0; p.quad_steps() + 1];
        assert!((discounted(&ones, &p) - 1.0).abs() < 1e-12);
        let m = p.quad_steps();
        assert!((discounted_sum(&ones, p.dt, m) - (1.0 - (-p.t_max).exp())).abs() < 1e-12);
    }

    struct Dw {
        sys: FlowSystem,
        tg: TransitionGraph,
        pair: IndexPair,
        mg: MorseGraph,
    }

    fn doublewell(depth: usize) -> Dw {
        let sys = builtin_system("doublewell1d").unwrap();
        let g = BoxGrid::new(sys.domain().clone(), vec![depth]).unwrap();
        let tg = TransitionGraph::build(&sys, &g, MapParams::for_grid(&g, 1.5)).unwrap();
        let pair = build_index_pair(&tg, &g.all()).unwrap();
        let mg = morse_graph(&tg, pair.isolating()).unwrap();
        Dw { sys, tg, pair, mg }
    }

    #[test]
    fn envelope_and_average_basics() {
        let dw = doublewell(256);
        let r = ar_regions_in_pair(&dw.mg, &[0]).unwrap();
        let rho = Rho::new(&dw.pair, &r.unstable_of_attractor, &r.stable_of_repeller).unwrap();
        let p = LyapunovParams::default();
        let base = QuotientPoint::Basepoint;
        assert_eq!(sup_envelope(&dw.sys, &dw.pair, &rho, &base, 0.05, 20.0).unwrap().value, 0.0);
        assert_eq!(discounted_average(&dw.sys, &dw.pair, &rho, &base, &p).unwrap().value, 0.0);

        let rb = r.stable_of_repeller.iter().next().unwrap();
        let xr = QuotientPoint::Point(dw.pair.grid().center(rb));
        let e = sup_envelope(&dw.sys, &dw.pair, &rho, &xr, 0.05, 20.0).unwrap();
        assert!(e.value == 1.0 && e.converged);
        let g = discounted_average(&dw.sys, &dw.pair, &rho, &xr, &p).unwrap();
        assert!(g.value > 0.95 && g.value <= 1.0);

        // fixed-point recursion h(x) = max(rho(x), h(phi^dt x))
        for x0 in [-0.8, -0.5, -0.3, 0.4] {
            let x = QuotientPoint::Point(vec![x0]);
            let hx = sup_envelope(&dw.sys, &dw.pair, &rho, &x, 0.05, 20.0).unwrap();
            let y = quotient_flow(&dw.sys, &dw.pair, &x, 0.05, 0.05).unwrap();
            let hy = sup_envelope(&dw.sys, &dw.pair, &rho, &y, 0.05, 20.0).unwrap();
            let rx = rho.value(&dw.pair, &x).unwrap();
            if hx.converged && hy.converged {
                assert!((hx.value - rx.max(hy.value)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn pair_field_decreases_along_orbits() {
        let dw = doublewell(256);
        let r = ar_regions_in_pair(&dw.mg, &[0]).unwrap();
        let field = pair_lyapunov(
            &dw.sys,
            &dw.pair,
            &[0],
            &r.unstable_of_attractor,
            &r.stable_of_repeller,
            &LyapunovParams::default(),
        )
        .unwrap();
        for b in r.unstable_of_attractor.iter() {
            assert!(field.value(b).unwrap() < 0.05);
        }
        for b in r.stable_of_repeller.iter() {
            assert!(field.value(b).unwrap() > 0.95);
        }
        let f = field.function();
        let y = f.value_after(&[-0.5], 1.0).unwrap();
        assert!(f.value_at(&[-0.5]).unwrap() > y + 1e-4);
        assert!(f.renewal_residual(&[-0.5], 1.0).unwrap() < 2e-3);
    }

    #[test]
    fn morse_sum_and_filtration() {
        let dw = doublewell(128);
        assert_eq!(dw.mg.n(), 3);
        let field = morse_lyapunov(&dw.sys, &dw.pair, &dw.mg, &LyapunovParams::default()).unwrap();
        assert_eq!(field.range(), [0.0, 4.0]);
        for i in 0..3 {
            for b in dw.mg.morse_set(i).iter() {
                let v = field.value(b).unwrap();
                assert!((v - (i + 1) as f64).abs() < 0.2, "M{} box {b}: {v}", i + 1);
            }
        }
        let filt = extract_filtration(&field, &dw.mg, &dw.tg, &RegularityParams::default()).unwrap();
        assert_eq!(filt.levels.len(), 4);
        assert_eq!(filt.thresholds, vec![0.5, 1.5, 2.5]);
        assert_eq!(filt.levels[3], *dw.pair.n());
    }

    #[test]
    fn complete_field_on_single_attractor() {
        let sys = builtin_system("contract1d").unwrap();
        let g = BoxGrid::new(sys.domain().clone(), vec![32]).unwrap();
        let tg = TransitionGraph::build(&sys, &g, MapParams::for_grid(&g, 1.5)).unwrap();
        let pair = build_index_pair(&tg, &g.all()).unwrap();
        let mg = morse_graph(&tg, pair.isolating()).unwrap();
        let field = complete_lyapunov(&sys, &pair, &mg, &LyapunovParams::default()).unwrap();
        assert_eq!(field.components().len(), 2);
        assert_eq!(field.components()[0].weight, 0.5);
        for v in field.values().values() {
            assert!((0.0..1.0).contains(v));
        }
        for b in mg.morse_set(0).iter() {
            assert!((field.value(b).unwrap() - 0.5).abs() < 0.05);
        }
    }

    #[test]
    fn uniform_entry() {
        let dw = doublewell(64);
        let g = dw.pair.grid();
        let r = ar_regions_in_pair(&dw.mg, &[0]).unwrap();
        let b: BoxSet = (0..g.len()).filter(|c| (-0.7..=-0.3).contains(&g.center(*c)[0])).collect();
        let u = g.dilate(dw.mg.morse_set(0)).union(dw.pair.l());
        let rep = uniform_entry_time(&dw.sys, &dw.pair, &b, &u, &r.stable_of_repeller, 3, 0.05, 20.0).unwrap();
        assert!(matches!(rep.time, EntryTime::Finite(t) if t > 0.0 && t < 20.0));

        let inside = uniform_entry_time(&dw.sys, &dw.pair, dw.mg.morse_set(0), &u, &r.stable_of_repeller, 3, 0.05, 5.0);
        assert_eq!(inside.unwrap().time, EntryTime::Finite(0.0));

        let bad = uniform_entry_time(&dw.sys, &dw.pair, &r.stable_of_repeller, &u, &r.stable_of_repeller, 3, 0.05, 5.0);
        assert!(matches!(bad, Err(Error::Precondition(_))));
    }
}
