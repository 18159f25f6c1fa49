//! Outer approximation of the time-`T` map as a digraph over grid boxes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowOutcome, FlowSystem};
use crate::grid::{BoxGrid, BoxSet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapParams {
    pub map_time: f64,
    pub padding: f64,
    pub samples_per_axis: usize,
}

impl MapParams {
    /// Default padding is one box diagonal, three samples per axis.
    pub fn for_grid(grid: &BoxGrid, map_time: f64) -> Self {
        Self {
            map_time,
            padding: grid.diagonal(),
            samples_per_axis: 3,
        }
    }
}

/// Image of one box: target boxes plus whether the exit pseudo-target is hit.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BoxImage {
    pub targets: BoxSet,
    pub exits: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransitionGraph {
    grid: BoxGrid,
    params: MapParams,
    edges: Vec<Vec<usize>>,
    exits: Vec<bool>,
}

fn check_params(system: &FlowSystem, grid: &BoxGrid, p: &MapParams) -> Result<()> {
    if system.dimension() != grid.dim() {
        return Err(Error::Precondition("grid and system dimensions differ".into()));
    }
    if !(p.map_time >= system.step()) {
        return Err(Error::Precondition(format!(
            "map time {} must be at least the integrator step {}",
            p.map_time,
            system.step()
        )));
    }
    if !(p.padding >= 0.0) || p.samples_per_axis == 0 {
        return Err(Error::Precondition("padding must be >= 0 and samples_per_axis >= 1".into()));
    }
    Ok(())
}

/// Outer image of box `b`: sample lattice pushed forward by the flow, each
/// image point inflated by `padding`. An image outside the domain, or whose
/// padded ball pokes outside it, marks the exit pseudo-target.
pub fn box_image(system: &FlowSystem, grid: &BoxGrid, b: usize, params: &MapParams) -> Result<BoxImage> {
    check_params(system, grid, params)?;
    if b >= grid.len() {
        return Err(Error::Precondition(format!("box {b} out of range")));
    }
    image_unchecked(system, grid, b, params)
}

fn image_unchecked(system: &FlowSystem, grid: &BoxGrid, b: usize, params: &MapParams) -> Result<BoxImage> {
    let dom = grid.domain();
    let mut targets = Vec::new();
    let mut exits = false;
    for x in grid.sample_lattice(b, params.samples_per_axis) {
        match system.flow_map(&x, params.map_time)? {
            FlowOutcome::Inside(y) => {
                let r = params.padding;
                if y
                    .iter()
                    .zip(dom.lower.iter().zip(&dom.upper))
                    .any(|(v, (lo, hi))| v - r < *lo || v + r > *hi)
                {
                    exits = true;
                }
                targets.extend(grid.boxes_meeting_ball(&y, r));
            }
            FlowOutcome::Escaped { .. } => exits = true,
        }
    }
    Ok(BoxImage {
        targets: BoxSet::from_unsorted(targets),
        exits,
    })
}

impl TransitionGraph {
    pub fn build(system: &FlowSystem, grid: &BoxGrid, params: MapParams) -> Result<Self> {
        check_params(system, grid, &params)?;
        let images: Vec<BoxImage> = (0..grid.len())
            .into_par_iter()
            .map(|b| image_unchecked(system, grid, b, &params))
            .collect::<Result<_>>()?;
        let (edges, exits) = images
            .into_iter()
            .map(|im| (im.targets.as_slice().to_vec(), im.exits))
            .unzip();
        Ok(Self {
            grid: grid.clone(),
            params,
            edges,
            exits,
        })
    }

    /// Assembles a graph from explicit adjacency; used for hand-built examples
    /// and when re-ingesting exported graphs.
    pub fn from_edges(grid: BoxGrid, params: MapParams, edges: Vec<Vec<usize>>, exits: Vec<bool>) -> Result<Self> {
        if edges.len() != grid.len() || exits.len() != grid.len() {
            return Err(Error::Precondition(format!(
                "adjacency has {} rows for a grid of {} boxes",
                edges.len(),
                grid.len()
            )));
        }
        let mut clean = Vec::with_capacity(edges.len());
        for row in edges {
            let s = BoxSet::from_unsorted(row);
            s.check_within(&grid)?;
            clean.push(s.as_slice().to_vec());
        }
        Ok(Self {
            grid,
            params,
            edges: clean,
            exits,
        })
    }

    pub fn grid(&self) -> &BoxGrid {
        &self.grid
    }

    pub fn params(&self) -> &MapParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Id of the exit pseudo-node in exported edge lists.
    pub fn exit_id(&self) -> usize {
        self.edges.len()
    }

    pub fn adjacency(&self) -> &[Vec<usize>] {
        &self.edges
    }

    pub fn successors(&self, b: usize) -> &[usize] {
        &self.edges[b]
    }

    pub fn exits(&self, b: usize) -> bool {
        self.exits[b]
    }

    pub fn has_exit_node(&self) -> bool {
        self.exits.iter().any(|e| *e)
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(|e| e.len()).sum::<usize>() + self.exits.iter().filter(|e| **e).count()
    }

    /// Predecessor lists restricted to `mask`.
    pub fn predecessors_within(&self, mask: &[bool]) -> Vec<Vec<usize>> {
        let mut preds = vec![Vec::new(); self.len()];
        for (b, row) in self.edges.iter().enumerate() {
            if !mask[b] {
                continue;
            }
            for t in row {
                if mask[*t] {
                    preds[*t].push(b);
                }
            }
        }
        preds
    }

    /// Boxes of `region` from which some path inside `region` reaches the exit
    /// pseudo-node or a box outside `region`.
    pub fn can_leave(&self, region: &BoxSet) -> Vec<bool> {
        let mask = region.mask(self.len());
        let preds = self.predecessors_within(&mask);
        let mut leave = vec![false; self.len()];
        let mut stack = Vec::new();
        for b in region.iter() {
            if self.exits[b] || self.edges[b].iter().any(|t| !mask[*t]) {
                leave[b] = true;
                stack.push(b);
            }
        }
        while let Some(b) = stack.pop() {
            for p in &preds[b] {
                if !leave[*p] {
                    leave[*p] = true;
                    stack.push(*p);
                }
            }
        }
        leave
    }

    /// Boxes reachable from `seeds` by paths staying in `region` (seeds included).
    pub fn forward_closure(&self, seeds: &BoxSet, region: &BoxSet) -> BoxSet {
        let mask = region.mask(self.len());
        let mut seen = vec![false; self.len()];
        let mut stack: Vec<usize> = seeds.iter().filter(|b| mask[*b]).collect();
        for b in &stack {
            seen[*b] = true;
        }
        while let Some(b) = stack.pop() {
            for t in &self.edges[b] {
                if mask[*t] && !seen[*t] {
                    seen[*t] = true;
                    stack.push(*t);
                }
            }
        }
        BoxSet::from_mask(&seen)
    }
}

/// Combinatorial maximal invariant set of a box region.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InvariantPart {
    pub set: BoxSet,
    /// True when the invariant part avoids the outer box layer of the region.
    pub isolated: bool,
}

/// Iteratively prunes boxes lacking an in- or out-neighbor inside the set.
pub fn invariant_part(graph: &TransitionGraph, region: &BoxSet) -> Result<InvariantPart> {
    region.check_within(graph.grid())?;
    let n = graph.len();
    let mut alive = region.mask(n);
    let preds = graph.predecessors_within(&alive);
    let mut out_deg = vec![0usize; n];
    let mut in_deg = vec![0usize; n];
    for b in region.iter() {
        for t in graph.successors(b) {
            if alive[*t] {
                out_deg[b] += 1;
                in_deg[*t] += 1;
            }
        }
    }
    let mut queue: Vec<usize> = region.iter().filter(|b| out_deg[*b] == 0 || in_deg[*b] == 0).collect();
    let mut queued = vec![false; n];
    for b in &queue {
        queued[*b] = true;
    }
    while let Some(b) = queue.pop() {
        if !alive[b] {
            continue;
        }
        alive[b] = false;
        for t in graph.successors(b) {
            if alive[*t] {
                in_deg[*t] -= 1;
                if in_deg[*t] == 0 && !queued[*t] {
                    queued[*t] = true;
                    queue.push(*t);
                }
            }
        }
        for p in &preds[b] {
            if alive[*p] {
                out_deg[*p] -= 1;
                if out_deg[*p] == 0 && !queued[*p] {
                    queued[*p] = true;
                    queue.push(*p);
                }
            }
        }
    }
    let set = BoxSet::from_mask(&alive);
    let boundary = graph.grid().boundary_layer(region);
    let isolated = set.intersection(&boundary).is_empty();
    Ok(InvariantPart { set, isolated })
}
