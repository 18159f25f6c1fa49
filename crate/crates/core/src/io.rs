//! File formats: system spec files, JSON/DOT/CSV exports and re-ingestion.
//! All writes go through a temporary file in the target directory followed
//! by a rename.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{builtin_system, FlowSystem, Rect, Term};
use crate::graph::{MapParams, TransitionGraph};
use crate::grid::{BoxGrid, BoxSet};
use crate::index_pair::IndexPair;
use crate::lyapunov::{Construction, FieldComponent, LyapunovField, LyapunovParams};
use crate::recurrence::MorseGraph;

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, to_json(value)?.as_bytes())
}

pub fn parse_json<T: DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Ingest {
        what: what.to_string(),
        message: e.to_string(),
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Ingest {
        what: format!("{what} ({})", path.display()),
        message: e.to_string(),
    })?;
    parse_json(&text, what)
}

fn ingest_err(what: &str, message: impl Into<String>) -> Error {
    Error::Ingest {
        what: what.to_string(),
        message: message.into(),
    }
}

fn grid_from(grid: BoxGrid, what: &str) -> Result<BoxGrid> {
    grid.rebuild().map_err(|e| ingest_err(what, format!("field `grid`: {e}")))
}

/// Right-hand side of a system spec: a built-in name or a polynomial term list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Builtin(String),
    Terms(Vec<Term>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub dimension: usize,
    pub domain: Vec<[f64; 2]>,
    pub step: f64,
    pub field: FieldSpec,
}

impl SystemSpec {
    pub fn from_system(system: &FlowSystem) -> Self {
        let d = system.domain();
        Self {
            dimension: system.dimension(),
            domain: d.lower.iter().zip(&d.upper).map(|(l, h)| [*l, *h]).collect(),
            step: system.step(),
            field: FieldSpec::Terms(system.terms().to_vec()),
        }
    }

    pub fn build(&self) -> Result<FlowSystem> {
        let what = "system spec";
        if self.domain.len() != self.dimension {
            return Err(ingest_err(
                what,
                format!("field `domain` has {} intervals for dimension {}", self.domain.len(), self.dimension),
            ));
        }
        let rect = Rect::new(self.domain.iter().map(|p| p[0]).collect(), self.domain.iter().map(|p| p[1]).collect())
            .map_err(|e| ingest_err(what, format!("field `domain`: {e}")))?;
        match &self.field {
            FieldSpec::Builtin(name) => {
                let base = builtin_system(name)?;
                if base.dimension() != self.dimension {
                    return Err(ingest_err(
                        what,
                        format!("field `dimension` is {} but `{name}` is {}-dimensional", self.dimension, base.dimension()),
                    ));
                }
                base.with_domain(rect)?.with_step(self.step)
            }
            FieldSpec::Terms(terms) => FlowSystem::polynomial("custom", self.dimension, terms.clone(), rect, self.step)
                .map_err(|e| ingest_err(what, format!("field `field`: {e}"))),
        }
    }
}

pub fn parse_system_spec(text: &str) -> Result<FlowSystem> {
    parse_json::<SystemSpec>(text, "system spec")?.build()
}

pub fn load_system_file(path: &Path) -> Result<FlowSystem> {
    read_json::<SystemSpec>(path, "system spec")?.build()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphRecord {
    pub grid: BoxGrid,
    pub params: MapParams,
    pub exit_node: bool,
    /// `[box, [targets...]]` for every box.
    pub edges: Vec<(usize, Vec<usize>)>,
    /// Boxes with an edge to the exit pseudo-node.
    pub exits: Vec<usize>,
}

impl GraphRecord {
    pub fn from_graph(graph: &TransitionGraph) -> Self {
        Self {
            grid: graph.grid().clone(),
            params: *graph.params(),
            exit_node: graph.has_exit_node(),
            edges: (0..graph.len()).map(|b| (b, graph.successors(b).to_vec())).collect(),
            exits: (0..graph.len()).filter(|b| graph.exits(*b)).collect(),
        }
    }

    pub fn into_graph(self) -> Result<TransitionGraph> {
        let what = "graph";
        let grid = grid_from(self.grid, what)?;
        let n = grid.len();
        let mut edges = vec![Vec::new(); n];
        let mut seen = vec![false; n];
        for (b, targets) in self.edges {
            if b >= n || seen[b] {
                return Err(ingest_err(what, format!("field `edges`: bad or repeated box {b}")));
            }
            seen[b] = true;
            edges[b] = targets;
        }
        let mut exits = vec![false; n];
        for b in self.exits {
            if b >= n {
                return Err(ingest_err(what, format!("field `exits`: box {b} out of range")));
            }
            exits[b] = true;
        }
        if self.exit_node != exits.iter().any(|e| *e) {
            return Err(ingest_err(what, "field `exit_node` disagrees with `exits`"));
        }
        TransitionGraph::from_edges(grid, self.params, edges, exits).map_err(|e| ingest_err(what, format!("field `edges`: {e}")))
    }
}

pub fn graph_dot(graph: &TransitionGraph) -> String {
    let mut s = String::from("digraph transitions {\n");
    for b in 0..graph.len() {
        let _ = writeln!(s, "  {b};");
    }
    if graph.has_exit_node() {
        let _ = writeln!(s, "  exit [shape=box];");
    }
    for b in 0..graph.len() {
        for t in graph.successors(b) {
            let _ = writeln!(s, "  {b} -> {t};");
        }
        if graph.exits(b) {
            let _ = writeln!(s, "  {b} -> exit;");
        }
    }
    s.push_str("}\n");
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorseClassRecord {
    /// Admissible index, starting at 1.
    pub index: usize,
    pub size: usize,
    pub boxes: BoxSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorseGraphRecord {
    pub grid: BoxGrid,
    pub region: BoxSet,
    pub invariant: BoxSet,
    pub classes: Vec<MorseClassRecord>,
    /// `[i, j]`: a path leads from `M_i` down to `M_j`.
    pub order: Vec<[usize; 2]>,
    pub connecting: BoxSet,
}

impl MorseGraphRecord {
    pub fn from_morse_graph(mg: &MorseGraph, grid: &BoxGrid) -> Self {
        Self {
            grid: grid.clone(),
            region: mg.region().clone(),
            invariant: mg.invariant().clone(),
            classes: mg
                .morse_sets()
                .iter()
                .enumerate()
                .map(|(i, m)| MorseClassRecord {
                    index: i + 1,
                    size: m.len(),
                    boxes: m.clone(),
                })
                .collect(),
            order: mg.order_relation().into_iter().map(|(i, j)| [i + 1, j + 1]).collect(),
            connecting: mg.connecting_boxes(),
        }
    }

    pub fn validated(mut self) -> Result<Self> {
        self.grid = grid_from(self.grid, "Morse graph")?;
        let n = self.classes.len();
        if self.order.iter().any(|p| p[0] == 0 || p[1] == 0 || p[0] > n || p[1] > n || p[0] <= p[1]) {
            return Err(ingest_err("Morse graph", "field `order` is not admissible"));
        }
        Ok(self)
    }
}

pub fn morse_dot(mg: &MorseGraph) -> String {
    let mut s = String::from("digraph morse {\n");
    for (i, m) in mg.morse_sets().iter().enumerate() {
        let _ = writeln!(s, "  M{0} [label=\"M{0} ({1} boxes)\"];", i + 1, m.len());
    }
    // transitive reduction keeps the picture readable
    for (i, j) in mg.order_relation() {
        let implied = (0..mg.n()).any(|k| k != i && k != j && mg.above(i, k) && mg.above(k, j));
        if !implied {
            let _ = writeln!(s, "  M{} -> M{};", i + 1, j + 1);
        }
    }
    s.push_str("}\n");
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub grid: BoxGrid,
    #[serde(rename = "N")]
    pub n: BoxSet,
    #[serde(rename = "L")]
    pub l: BoxSet,
}

impl PairRecord {
    pub fn from_pair(pair: &IndexPair) -> Self {
        Self {
            grid: pair.grid().clone(),
            n: pair.n().clone(),
            l: pair.l().clone(),
        }
    }

    pub fn into_pair(self) -> Result<IndexPair> {
        let what = "index pair";
        let grid = grid_from(self.grid, what)?;
        self.n.check_within(&grid).map_err(|e| ingest_err(what, format!("field `N`: {e}")))?;
        if !self.l.is_subset(&self.n) {
            return Err(ingest_err(what, "field `L` is not contained in `N`"));
        }
        IndexPair::new(grid, self.n, self.l)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldValue {
    pub box_id: usize,
    pub center: Vec<f64>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldRecord {
    pub construction: Construction,
    pub range: [f64; 2],
    pub params: LyapunovParams,
    pub components: Vec<FieldComponent>,
    pub unconverged: usize,
    pub grid: BoxGrid,
    pub values: Vec<FieldValue>,
}

impl FieldRecord {
    pub fn from_field(field: &LyapunovField) -> Self {
        let grid = field.grid();
        Self {
            construction: field.construction(),
            range: field.range(),
            params: *field.params(),
            components: field.components().to_vec(),
            unconverged: field.unconverged(),
            grid: grid.clone(),
            values: field
                .values()
                .iter()
                .map(|(b, v)| FieldValue {
                    box_id: *b,
                    center: grid.center(*b),
                    value: *v,
                })
                .collect(),
        }
    }

    pub fn validated(mut self) -> Result<Self> {
        self.grid = grid_from(self.grid, "field")?;
        if let Some(v) = self.values.iter().find(|v| v.box_id >= self.grid.len() || v.center.len() != self.grid.dim()) {
            return Err(ingest_err("field", format!("field `values`: bad entry for box {}", v.box_id)));
        }
        Ok(self)
    }
}

/// `box_id,x0,...,x{d-1},value` per box of `N`.
pub fn field_csv(field: &LyapunovField) -> String {
    let grid = field.grid();
    let mut s = header(grid.dim(), "box_id");
    for (b, v) in field.values() {
        let _ = write!(s, "{b}");
        for c in grid.center(*b) {
            let _ = write!(s, ",{c}");
        }
        let _ = writeln!(s, ",{v}");
    }
    s
}

fn header(dim: usize, first: &str) -> String {
    let mut s = first.to_string();
    for a in 0..dim {
        let _ = write!(s, ",x{a}");
    }
    s.push_str(",value\n");
    s
}

/// Re-reads [`field_csv`] output as `(box_id, center, value)` rows.
pub fn parse_field_csv(text: &str) -> Result<Vec<FieldValue>> {
    let what = "field CSV";
    let mut lines = text.lines();
    let head = lines.next().ok_or_else(|| ingest_err(what, "empty file"))?;
    let cols: Vec<&str> = head.split(',').collect();
    if cols.len() < 3 || cols[0] != "box_id" || cols[cols.len() - 1] != "value" {
        return Err(ingest_err(what, format!("unexpected header `{head}`")));
    }
    let dim = cols.len() - 2;
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || ingest_err(what, format!("line {}: `{line}`", i + 2));
        if f.len() != dim + 2 {
            return Err(bad());
        }
        let box_id = f[0].parse().map_err(|_| bad())?;
        let nums: Vec<f64> = f[1..].iter().map(|v| v.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
        out.push(FieldValue {
            box_id,
            center: nums[..dim].to_vec(),
            value: nums[dim],
        });
    }
    Ok(out)
}

/// Every grid box center with the field value, `nan` outside `N`; for plotting.
pub fn plot_csv(field: &LyapunovField) -> String {
    let grid = field.grid();
    let mut s = header(grid.dim(), "box_id");
    for b in 0..grid.len() {
        let _ = write!(s, "{b}");
        for c in grid.center(b) {
            let _ = write!(s, ",{c}");
        }
        match field.value(b) {
            Some(v) => {
                let _ = writeln!(s, ",{v}");
            }
            None => s.push_str(",nan\n"),
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index_pair::build_index_pair;
    use crate::lyapunov::pair_lyapunov;

    fn small_graph() -> (FlowSystem, TransitionGraph) {
        let sys = builtin_system("saddle1d").unwrap();
        let g = BoxGrid::new(sys.domain().clone(), vec![64]).unwrap();
        let tg = TransitionGraph::build(&sys, &g, MapParams::for_grid(&g, 1.5)).unwrap();
        (sys, tg)
    }

    #[test]
    fn system_spec_round_trip() {
        let sys = builtin_system("hopf2d").unwrap();
        let text = to_json(&SystemSpec::from_system(&sys)).unwrap();
        let back = parse_system_spec(&text).unwrap();
        assert_eq!(back.field(&[0.3, -0.7]), sys.field(&[0.3, -0.7]));
        assert_eq!(back.domain(), sys.domain());

        let named = r#"{"dimension": 1, "domain": [[-3, 3]], "step": 0.02, "field": "doublewell1d"}"#;
        let dw = parse_system_spec(named).unwrap();
        assert_eq!(dw.domain(), &Rect::cube(1, -3.0, 3.0));
        assert_eq!(dw.step(), 0.02);
    }

    #[test]
    fn system_spec_errors_name_the_field() {
        let missing = r#"{"dimension": 1, "domain": [[-1, 1]], "field": "saddle1d"}"#;
        assert!(parse_system_spec(missing).unwrap_err().to_string().contains("step"));
        let wrong_dim = r#"{"dimension": 2, "domain": [[-1, 1]], "step": 0.01, "field": "saddle1d"}"#;
        assert!(parse_system_spec(wrong_dim).unwrap_err().to_string().contains("domain"));
        let unknown = r#"{"dimension": 1, "domain": [[-1, 1]], "step": 0.01, "field": "nope"}"#;
        assert!(matches!(parse_system_spec(unknown), Err(Error::UnknownSystem { .. })));
    }

    #[test]
    fn graph_and_pair_round_trip() {
        let (_, tg) = small_graph();
        let rec: GraphRecord = parse_json(&to_json(&GraphRecord::from_graph(&tg)).unwrap(), "graph").unwrap();
        assert_eq!(rec.into_graph().unwrap(), tg);
        let dot = graph_dot(&tg);
        assert!(dot.contains("-> exit"));

        let pair = build_index_pair(&tg, &tg.grid().all()).unwrap();
        let rec: PairRecord = parse_json(&to_json(&PairRecord::from_pair(&pair)).unwrap(), "pair").unwrap();
        assert_eq!(rec.into_pair().unwrap(), pair);
    }

    #[test]
    fn corrupted_pair_is_rejected() {
        let (_, tg) = small_graph();
        let pair = build_index_pair(&tg, &tg.grid().all()).unwrap();
        let mut rec = PairRecord::from_pair(&pair);
        rec.l = BoxSet::from_unsorted(vec![99]);
        let err = parse_json::<PairRecord>(&to_json(&rec).unwrap(), "pair").unwrap().into_pair().unwrap_err();
        assert!(err.to_string().contains("`L`"));
        let err = parse_json::<PairRecord>(r#"{"grid": 3}"#, "index pair").unwrap_err();
        assert!(matches!(err, Error::Ingest { .. }));
    }

    #[test]
    fn field_csv_and_json_round_trip() {
        let (sys, tg) = small_graph();
        let pair = build_index_pair(&tg, &tg.grid().all()).unwrap();
        let field = pair_lyapunov(&sys, &pair, &[], &BoxSet::new(), pair.isolating(), &LyapunovParams::default()).unwrap();
        let rec = FieldRecord::from_field(&field);
        let back: FieldRecord = parse_json(&to_json(&rec).unwrap(), "field").unwrap();
        assert_eq!(back.validated().unwrap(), rec);
        assert_eq!(parse_field_csv(&field_csv(&field)).unwrap(), rec.values);
        assert_eq!(plot_csv(&field).lines().count(), tg.len() + 1);
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("a.json");
        write_json(&p, &vec![1, 2]).unwrap();
        write_json(&p, &vec![3]).unwrap();
        let v: Vec<i32> = read_json(&p, "list").unwrap();
        assert_eq!(v, vec![3]);
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
