//! Chain recurrence, Morse graphs, attractor-repeller pairs and the
//! point-level epsilon-chain oracle.

use fixedbitset::FixedBitSet;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::{FlowOutcome, FlowSystem};
use crate::graph::{invariant_part, TransitionGraph};
use crate::grid::BoxSet;
use crate::scc::{is_nontrivial, tarjan};

/// Guard on the number of down-sets enumerated.
pub const MAX_DOWN_SETS: usize = 1 << 20;

/// Boxes lying in nontrivial strongly connected components of the graph
/// restricted to `region`.
pub fn chain_recurrent_boxes(graph: &TransitionGraph, region: &BoxSet) -> Result<BoxSet> {
    region.check_within(graph.grid())?;
    let mask = region.mask(graph.len());
    let adj = graph.adjacency();
    Ok(tarjan(adj, &mask)
        .into_iter()
        .filter(|c| is_nontrivial(adj, c))
        .flatten()
        .collect())
}

/// Recurrent classes of the restricted graph with an admissible order.
///
/// Morse sets are stored by admissible index: `morse_set(0)` is `M_1`, the
/// lowest class. Condensation edges always run from higher to lower indices.
#[derive(Clone, Debug)]
pub struct MorseGraph {
    region: BoxSet,
    invariant: BoxSet,
    morse_sets: Vec<BoxSet>,
    /// `below[i]`: classes other than `i` reachable from class `i`.
    below: Vec<FixedBitSet>,
    class_of: Vec<Option<usize>>,
    reach: Vec<FixedBitSet>,
    coreach: Vec<FixedBitSet>,
}

impl MorseGraph {
    pub fn n(&self) -> usize {
        self.morse_sets.len()
    }

    pub fn region(&self) -> &BoxSet {
        &self.region
    }

    /// Invariant part of the analysis region.
    pub fn invariant(&self) -> &BoxSet {
        &self.invariant
    }

    pub fn morse_sets(&self) -> &[BoxSet] {
        &self.morse_sets
    }

    pub fn morse_set(&self, i: usize) -> &BoxSet {
        &self.morse_sets[i]
    }

    pub fn recurrent(&self) -> BoxSet {
        self.morse_sets.iter().fold(BoxSet::new(), |acc, m| acc.union(m))
    }

    pub fn class_of(&self, b: usize) -> Option<usize> {
        self.class_of[b]
    }

    /// Whether a path leads from class `i` to class `j` (`i != j`).
    pub fn above(&self, i: usize, j: usize) -> bool {
        self.below[i].contains(j)
    }

    /// Morse classes reachable from box `b` inside the region, its own class included.
    pub fn reachable_classes(&self, b: usize) -> Vec<usize> {
        self.reach[b].ones().collect()
    }

    /// Morse classes from which box `b` can be reached, its own class included.
    pub fn coreachable_classes(&self, b: usize) -> Vec<usize> {
        self.coreach[b].ones().collect()
    }

    /// Region boxes outside every Morse set.
    pub fn connecting_boxes(&self) -> BoxSet {
        self.region.iter().filter(|b| self.class_of[*b].is_none()).collect()
    }

    /// Pairs `(i, j)` with a path from class `i` down to class `j`.
    pub fn order_relation(&self) -> Vec<(usize, usize)> {
        (0..self.n())
            .flat_map(|i| self.below[i].ones().map(move |j| (i, j)))
            .collect()
    }

    pub fn is_down_set(&self, d: &[usize]) -> bool {
        let mut inside = FixedBitSet::with_capacity(self.n());
        for i in d {
            if *i >= self.n() {
                return false;
            }
            inside.insert(*i);
        }
        d.iter().all(|i| self.below[*i].is_subset(&inside))
    }

    fn down_mask(&self, d: &[usize]) -> Result<FixedBitSet> {
        if !self.is_down_set(d) {
            return Err(Error::Precondition(format!("{d:?} is not a down-set of the Morse order")));
        }
        let mut m = FixedBitSet::with_capacity(self.n());
        for i in d {
            m.insert(*i);
        }
        Ok(m)
    }
}

/// Condensation of the restricted graph; see [`MorseGraph`].
pub fn morse_graph(graph: &TransitionGraph, region: &BoxSet) -> Result<MorseGraph> {
    region.check_within(graph.grid())?;
    let n_boxes = graph.len();
    let mask = region.mask(n_boxes);
    let adj = graph.adjacency();
    let comps = tarjan(adj, &mask);
    let mut comp_of = vec![usize::MAX; n_boxes];
    for (c, comp) in comps.iter().enumerate() {
        for b in comp {
            comp_of[*b] = c;
        }
    }
    // provisional class ids in emission order (sinks first)
    let mut class_tmp = vec![None; comps.len()];
    let mut tmp_sets = Vec::new();
    for (c, comp) in comps.iter().enumerate() {
        if is_nontrivial(adj, comp) {
            class_tmp[c] = Some(tmp_sets.len());
            tmp_sets.push(comp.clone());
        }
    }
    let k = tmp_sets.len();

    let mut comp_succ: Vec<Vec<usize>> = vec![Vec::new(); comps.len()];
    for (c, comp) in comps.iter().enumerate() {
        for b in comp {
            for t in &adj[*b] {
                if mask[*t] && comp_of[*t] != c {
                    comp_succ[c].push(comp_of[*t]);
                }
            }
        }
        comp_succ[c].sort_unstable();
        comp_succ[c].dedup();
    }

    let mut reach_c = vec![FixedBitSet::with_capacity(k); comps.len()];
    for c in 0..comps.len() {
        let mut r = FixedBitSet::with_capacity(k);
        if let Some(id) = class_tmp[c] {
            r.insert(id);
        }
        for s in &comp_succ[c] {
            r.union_with(&reach_c[*s]);
        }
        reach_c[c] = r;
    }
    let mut coreach_c = vec![FixedBitSet::with_capacity(k); comps.len()];
    for c in (0..comps.len()).rev() {
        if let Some(id) = class_tmp[c] {
            coreach_c[c].insert(id);
        }
        let cur = coreach_c[c].clone();
        for s in &comp_succ[c] {
            coreach_c[*s].union_with(&cur);
        }
    }

    // admissible order: a class gets the next index once everything below it is placed
    let tmp_comp: Vec<usize> = (0..comps.len()).filter(|c| class_tmp[*c].is_some()).collect();
    let below_tmp: Vec<FixedBitSet> = tmp_comp
        .iter()
        .enumerate()
        .map(|(id, c)| {
            let mut b = reach_c[*c].clone();
            b.set(id, false);
            b
        })
        .collect();
    let mut placed = FixedBitSet::with_capacity(k);
    let mut order = Vec::with_capacity(k);
    while order.len() < k {
        let next = (0..k)
            .filter(|id| !placed.contains(*id) && below_tmp[*id].is_subset(&placed))
            .min_by_key(|id| tmp_sets[*id][0])
            .expect("condensation is acyclic");
        placed.insert(next);
        order.push(next);
    }
    let mut rank = vec![0usize; k];
    for (r, id) in order.iter().enumerate() {
        rank[*id] = r;
    }
    let remap = |s: &FixedBitSet| {
        let mut out = FixedBitSet::with_capacity(k);
        for id in s.ones() {
            out.insert(rank[id]);
        }
        out
    };

    let morse_sets = order.iter().map(|id| BoxSet::from_unsorted(tmp_sets[*id].clone())).collect();
    let below = order.iter().map(|id| remap(&below_tmp[*id])).collect();
    let mut class_of = vec![None; n_boxes];
    let mut reach = vec![FixedBitSet::with_capacity(k); n_boxes];
    let mut coreach = vec![FixedBitSet::with_capacity(k); n_boxes];
    for b in region.iter() {
        let c = comp_of[b];
        class_of[b] = class_tmp[c].map(|id| rank[id]);
        reach[b] = remap(&reach_c[c]);
        coreach[b] = remap(&coreach_c[c]);
    }
    let invariant = invariant_part(graph, region)?.set;
    Ok(MorseGraph {
        region: region.clone(),
        invariant,
        morse_sets,
        below,
        class_of,
        reach,
        coreach,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ARPair {
    pub attractor: BoxSet,
    pub repeller: BoxSet,
    /// Morse indices (0-based) generating the attractor.
    pub down_set: Vec<usize>,
}

/// All down-sets of the Morse order, ordered by size then lexicographically.
pub fn enumerate_down_sets(mg: &MorseGraph) -> Result<Vec<Vec<usize>>> {
    let n = mg.n();
    let mut out: Vec<Vec<usize>> = vec![Vec::new()];
    // admissible order puts every class after all classes below it
    for i in 0..n {
        let extra: Vec<Vec<usize>> = out
            .iter()
            .filter(|d| mg.below[i].ones().all(|j| d.contains(&j)))
            .map(|d| {
                let mut e = d.clone();
                e.push(i);
                e
            })
            .collect();
        out.extend(extra);
        if out.len() > MAX_DOWN_SETS {
            return Err(Error::Capacity(format!(
                "more than {MAX_DOWN_SETS} attractor-repeller pairs for {n} Morse sets"
            )));
        }
    }
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    Ok(out)
}

/// One attractor-repeller pair per down-set, in canonical order.
pub fn enumerate_ar_pairs(mg: &MorseGraph) -> Result<Vec<ARPair>> {
    enumerate_down_sets(mg)?
        .into_iter()
        .map(|d| {
            let (attractor, repeller) = ar_regions(mg, &d)?;
            Ok(ARPair {
                attractor,
                repeller,
                down_set: d,
            })
        })
        .collect()
}

fn side_of(mg: &MorseGraph, b: usize, down: &FixedBitSet) -> (bool, bool) {
    match mg.class_of[b] {
        Some(c) => (down.contains(c), !down.contains(c)),
        None => {
            let co = &mg.coreach[b];
            let re = &mg.reach[b];
            let attracted = co.count_ones(..) > 0 && co.is_subset(down);
            let repelled = re.count_ones(..) > 0 && re.ones().all(|c| !down.contains(c));
            (attracted, repelled)
        }
    }
}

/// Attractor and repeller of the down-set `d` inside the invariant part of
/// the region. A Morse-set box follows its own class; a connecting box is in
/// the attractor when every class reaching it lies in `d`, and in the
/// repeller when every class it reaches lies outside `d`.
pub fn ar_regions(mg: &MorseGraph, d: &[usize]) -> Result<(BoxSet, BoxSet)> {
    let down = mg.down_mask(d)?;
    let mut a = Vec::new();
    let mut r = Vec::new();
    for b in mg.invariant.iter() {
        let (att, rep) = side_of(mg, b, &down);
        if att {
            a.push(b);
        }
        if rep {
            r.push(b);
        }
    }
    Ok((BoxSet::from_unsorted(a), BoxSet::from_unsorted(r)))
}

/// Box over-approximations of `I^-_D` (backward orbit in the region,
/// alpha-limit in the attractor) and `I^+_{D^c}` (forward orbit in the
/// region, omega-limit in the repeller) over the whole analysis region. A
/// box qualifies when it has a path inside the region from (resp. to) the
/// corresponding classes and none from (resp. to) the others.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairRegions {
    pub down_set: Vec<usize>,
    pub unstable_of_attractor: BoxSet,
    pub stable_of_repeller: BoxSet,
}

pub fn ar_regions_in_pair(mg: &MorseGraph, d: &[usize]) -> Result<PairRegions> {
    let down = mg.down_mask(d)?;
    let mut minus = Vec::new();
    let mut plus = Vec::new();
    for b in mg.region.iter() {
        let (att, rep) = side_of(mg, b, &down);
        if att {
            minus.push(b);
        }
        if rep {
            plus.push(b);
        }
    }
    Ok(PairRegions {
        down_set: d.to_vec(),
        unstable_of_attractor: BoxSet::from_unsorted(minus),
        stable_of_repeller: BoxSet::from_unsorted(plus),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleParams {
    pub epsilon: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub steps: usize,
}

/// Brute-force chain recurrence on sample points: `x -> y` when some probe
/// time `t` in `[t_min, t_max]` gives `|phi^t(x) - y| < epsilon`. Returns the
/// indices of points lying on a cycle.
pub fn epsilon_chain_oracle(system: &FlowSystem, points: &[Vec<f64>], p: &OracleParams) -> Result<Vec<usize>> {
    if !(p.epsilon > 0.0) || p.t_min < 1.0 || p.t_max < p.t_min || p.steps == 0 {
        return Err(Error::Precondition(format!(
            "oracle needs epsilon > 0, 1 <= t_min <= t_max, steps >= 1 (got {p:?})"
        )));
    }
    let dt = if p.steps > 1 {
        (p.t_max - p.t_min) / (p.steps - 1) as f64
    } else {
        0.0
    };
    let probes: Vec<Vec<Vec<f64>>> = points
        .par_iter()
        .map(|x| {
            let mut out = Vec::with_capacity(p.steps);
            let mut cur = match system.flow_map(x, p.t_min)? {
                FlowOutcome::Inside(y) => y,
                FlowOutcome::Escaped { .. } => return Ok(out),
            };
            out.push(cur.clone());
            for _ in 1..p.steps {
                match system.flow_map(&cur, dt)? {
                    FlowOutcome::Inside(y) => cur = y,
                    FlowOutcome::Escaped { .. } => break,
                }
                out.push(cur.clone());
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let eps2 = p.epsilon * p.epsilon;
    let adj: Vec<Vec<usize>> = probes
        .par_iter()
        .map(|traj| {
            (0..points.len())
                .filter(|j| {
                    traj.iter().any(|q| {
                        q.iter().zip(&points[*j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() < eps2
                    })
                })
                .collect()
        })
        .collect();
    let mut flagged: Vec<usize> = tarjan(&adj, &vec![true; points.len()])
        .into_iter()
        .filter(|c| is_nontrivial(&adj, c))
        .flatten()
        .collect();
    flagged.sort_unstable();
    Ok(flagged)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecurrenceCheck {
    pub equal: bool,
    pub intersection: BoxSet,
    pub recurrent: BoxSet,
    pub symmetric_difference: BoxSet,
    pub pairs: usize,
}

/// Compares the union of Morse sets with the intersection of `A ∪ A*` over `pairs`.
pub fn compare_with_pairs(mg: &MorseGraph, pairs: &[ARPair]) -> RecurrenceCheck {
    let intersection = pairs.iter().fold(mg.invariant.clone(), |acc, p| {
        acc.intersection(&p.attractor.union(&p.repeller))
    });
    let recurrent = mg.recurrent();
    let symmetric_difference = intersection.symmetric_difference(&recurrent);
    RecurrenceCheck {
        equal: symmetric_difference.is_empty(),
        intersection,
        recurrent,
        symmetric_difference,
        pairs: pairs.len(),
    }
}

/// Checks that the recurrent boxes equal the intersection of `A ∪ A*` over
/// every attractor-repeller pair.
pub fn check_r_equals_intersection(mg: &MorseGraph) -> Result<RecurrenceCheck> {
    Ok(compare_with_pairs(mg, &enumerate_ar_pairs(mg)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{builtin_system, Rect};
    use crate::graph::MapParams;
    use crate::grid::BoxGrid;

    fn explicit(edges: Vec<Vec<usize>>) -> TransitionGraph {
        let n = edges.len();
        let g = BoxGrid::new(Rect::cube(1, 0.0, n as f64), vec![n]).unwrap();
        TransitionGraph::from_edges(g.clone(), MapParams::for_grid(&g, 1.0), edges, vec![false; n]).unwrap()
    }

    fn poset3() -> MorseGraph {
        // classes {0}, {2} sinks, {4} source, 1 and 3 connecting
        let tg = explicit(vec![vec![0], vec![0], vec![2], vec![2], vec![4, 1, 3]]);
        morse_graph(&tg, &tg.grid().all()).unwrap()
    }

    #[test]
    fn admissible_indices_and_down_sets() {
        let mg = poset3();
        assert_eq!(mg.n(), 3);
        assert_eq!(mg.morse_set(0).as_slice(), &[0]);
        assert_eq!(mg.morse_set(1).as_slice(), &[2]);
        assert_eq!(mg.morse_set(2).as_slice(), &[4]);
        assert!(mg.above(2, 0) && mg.above(2, 1) && !mg.above(0, 1));
        let ds = enumerate_down_sets(&mg).unwrap();
        assert_eq!(ds, vec![vec![], vec![0], vec![1], vec![0, 1], vec![0, 1, 2]]);
        assert_eq!(enumerate_ar_pairs(&mg).unwrap().len(), 5);
    }

    #[test]
    fn chain_has_n_plus_one_pairs() {
        let tg = explicit(vec![vec![0], vec![0], vec![2, 1], vec![2], vec![4, 3]]);
        let mg = morse_graph(&tg, &tg.grid().all()).unwrap();
        assert_eq!(mg.n(), 3);
        assert_eq!(enumerate_ar_pairs(&mg).unwrap().len(), 4);
    }

    #[test]
    fn single_class_pairs() {
        let tg = explicit(vec![vec![1], vec![0]]);
        let mg = morse_graph(&tg, &tg.grid().all()).unwrap();
        let pairs = enumerate_ar_pairs(&mg).unwrap();
        assert_eq!(pairs.len(), 2);
        assert!(pairs[0].attractor.is_empty() && pairs[0].repeller.len() == 2);
        assert!(pairs[1].repeller.is_empty() && pairs[1].attractor.len() == 2);
        assert!(check_r_equals_intersection(&mg).unwrap().equal);
    }

    #[test]
    fn acyclic_has_no_recurrence() {
        let tg = explicit(vec![vec![1], vec![2], vec![]]);
        assert!(chain_recurrent_boxes(&tg, &tg.grid().all()).unwrap().is_empty());
        let mg = morse_graph(&tg, &tg.grid().all()).unwrap();
        assert_eq!(mg.n(), 0);
    }

    #[test]
    fn removing_middle_pair_breaks_intersection() {
        // M2 = {2} -> connecting 1 -> M1 = {0}
        let tg = explicit(vec![vec![0], vec![0], vec![2, 1]]);
        let mg = morse_graph(&tg, &tg.grid().all()).unwrap();
        let pairs = enumerate_ar_pairs(&mg).unwrap();
        assert_eq!(pairs.len(), 3);
        assert!(compare_with_pairs(&mg, &pairs).equal);
        let without: Vec<ARPair> = pairs.iter().filter(|p| p.down_set != vec![0]).cloned().collect();
        let chk = compare_with_pairs(&mg, &without);
        assert!(!chk.equal);
        assert_eq!(chk.symmetric_difference.as_slice(), &[1]);
    }

    #[test]
    fn non_down_set_rejected() {
        let mg = poset3();
        assert!(matches!(ar_regions(&mg, &[2]), Err(Error::Precondition(_))));
    }

    #[test]
    fn oracle_trivial_cases() {
        let sys = builtin_system("doublewell1d").unwrap();
        let pts: Vec<Vec<f64>> = (0..9).map(|k| vec![-2.0 + 0.5 * k as f64]).collect();
        let p = OracleParams { epsilon: 10.0, t_min: 1.0, t_max: 2.0, steps: 3 };
        assert_eq!(epsilon_chain_oracle(&sys, &pts, &p).unwrap().len(), 9);
        let lone = vec![vec![0.5]];
        let p = OracleParams { epsilon: 1e-3, t_min: 1.0, t_max: 10.0, steps: 50 };
        assert!(epsilon_chain_oracle(&sys, &lone, &p).unwrap().is_empty());
        let bad = OracleParams { epsilon: 0.1, t_min: 0.5, t_max: 2.0, steps: 3 };
        assert!(epsilon_chain_oracle(&sys, &lone, &bad).is_err());
    }

    #[test]
    fn doublewell_morse_graph() {
        let sys = builtin_system("doublewell1d").unwrap();
        let g = BoxGrid::new(Rect::cube(1, -2.0, 2.0), vec![256]).unwrap();
        let tg = TransitionGraph::build(&sys, &g, MapParams::for_grid(&g, 1.5)).unwrap();
        let mg = morse_graph(&tg, &g.all()).unwrap();
        assert_eq!(mg.n(), 3);
        let hits = |i: usize, x: f64| g.boxes_containing(&[x]).iter().any(|b| mg.morse_set(i).contains(*b));
        assert!(hits(0, -1.0) && hits(1, 1.0) && hits(2, 0.0));
        let (a, r) = ar_regions(&mg, &[0]).unwrap();
        assert!(a.is_subset(mg.morse_set(0)) && a.len() == mg.morse_set(0).len());
        assert!(mg.morse_set(1).is_subset(&r) && mg.morse_set(2).is_subset(&r));
        assert!(r.contains(g.box_of(&[0.5]).unwrap()));
        assert!(!r.contains(g.box_of(&[-0.5]).unwrap()));
        assert!(check_r_equals_intersection(&mg).unwrap().equal);
    }
}
