//! The four driver commands. Each writes its artifacts under `config.out`
//! and returns a summary for the caller to print.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checks::{
    level_deviation, monotone, morse_set_ranges, neighborhood, oracle_agreement, renewal, sample_points, strictly_decreasing,
    SampleCheck,
};
use crate::config::{RunConfig, SystemSource};
use crate::error::{Error, Result};
use crate::flow::FlowSystem;
use crate::graph::{invariant_part, TransitionGraph};
use crate::grid::{BoxGrid, BoxSet};
use crate::index_pair::{build_index_pair, regularity_check, validate_index_pair, IndexPair, RegularityParams};
use crate::io::{
    field_csv, graph_dot, morse_dot, plot_csv, to_json, write_atomic, write_json, FieldRecord, GraphRecord,
    MorseGraphRecord, PairRecord,
};
use crate::lyapunov::{
    complete_lyapunov, extract_filtration, morse_lyapunov, pair_lyapunov, Construction, Filtration, LyapunovField,
};
use crate::recurrence::{
    ar_regions_in_pair, check_r_equals_intersection, enumerate_ar_pairs, morse_graph, MorseGraph, OracleParams,
};

/// System, grid and transition graph for one configuration.
pub struct Workspace {
    pub config: RunConfig,
    pub system: FlowSystem,
    pub grid: BoxGrid,
    pub graph: TransitionGraph,
}

impl Workspace {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let system = config.load_system()?;
        let grid = config.grid(&system)?;
        let graph = TransitionGraph::build(&system, &grid, config.map_params(&grid))?;
        Ok(Self {
            config: config.clone(),
            system,
            grid,
            graph,
        })
    }

    /// Morse graph over the whole grid.
    pub fn global_morse_graph(&self) -> Result<MorseGraph> {
        morse_graph(&self.graph, &self.grid.all())
    }

    /// Index pair for the invariant part of the whole grid and the Morse
    /// graph of its isolated invariant set.
    pub fn pair(&self) -> Result<(IndexPair, MorseGraph)> {
        let pair = build_index_pair(&self.graph, &self.grid.all())?;
        let mg = morse_graph(&self.graph, pair.isolating())?;
        Ok((pair, mg))
    }

    fn system_label(&self) -> String {
        match &self.config.system {
            SystemSource::Builtin(n) => n.clone(),
            SystemSource::File(p) => p.display().to_string(),
        }
    }

    fn write(&self, name: &str, text: &str) -> Result<()> {
        write_atomic(&self.config.out.join(name), text.as_bytes())
    }

    fn write_json<T: Serialize>(&self, name: &str, v: &T) -> Result<()> {
        write_json(&self.config.out.join(name), v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub index: usize,
    pub boxes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeSummary {
    pub system: String,
    pub counts: Vec<usize>,
    pub boxes: usize,
    pub edges: usize,
    pub exit_node: bool,
    pub morse_sets: Vec<ClassSummary>,
    /// `[i, j]`: `M_i` lies above `M_j`.
    pub order: Vec<[usize; 2]>,
    pub recurrent_boxes: usize,
}

impl AnalyzeSummary {
    pub fn text(&self) -> String {
        let mut s = format!(
            "system {} grid {:?} ({} boxes, {} edges, exit node: {})\n",
            self.system, self.counts, self.boxes, self.edges, self.exit_node
        );
        let _ = writeln!(s, "{} Morse sets, {} recurrent boxes", self.morse_sets.len(), self.recurrent_boxes);
        for c in &self.morse_sets {
            let _ = writeln!(s, "  M{}: {} boxes", c.index, c.boxes);
        }
        for [i, j] in &self.order {
            let _ = writeln!(s, "  M{i} -> M{j}");
        }
        s
    }
}

pub fn cmd_analyze(config: &RunConfig) -> Result<AnalyzeSummary> {
    let ws = Workspace::new(config)?;
    let mg = ws.global_morse_graph()?;
    let rec = MorseGraphRecord::from_morse_graph(&mg, &ws.grid);
    ws.write_json("graph.json", &GraphRecord::from_graph(&ws.graph))?;
    ws.write("graph.dot", &graph_dot(&ws.graph))?;
    ws.write_json("morse_graph.json", &rec)?;
    ws.write("morse_graph.dot", &morse_dot(&mg))?;
    ws.write_json("recurrent.json", &mg.recurrent())?;
    let summary = AnalyzeSummary {
        system: ws.system_label(),
        counts: ws.grid.counts().to_vec(),
        boxes: ws.grid.len(),
        edges: ws.graph.edge_count(),
        exit_node: ws.graph.has_exit_node(),
        morse_sets: rec
            .classes
            .iter()
            .map(|c| ClassSummary {
                index: c.index,
                boxes: c.size,
            })
            .collect(),
        order: rec.order,
        recurrent_boxes: mg.recurrent().len(),
    };
    ws.write_json("analyze.json", &summary)?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSummary {
    pub construction: Construction,
    pub down_sets: Vec<Vec<usize>>,
    pub boxes: usize,
    pub min: f64,
    pub max: f64,
    /// `(min, max)` per Morse set, by admissible index.
    pub morse_ranges: Vec<(f64, f64)>,
    pub unconverged: usize,
}

impl LyapunovSummary {
    pub fn text(&self) -> String {
        let mut s = format!(
            "{:?} field on {} boxes, values in [{:.6}, {:.6}], {} unconverged sup searches\n",
            self.construction, self.boxes, self.min, self.max, self.unconverged
        );
        for (i, (lo, hi)) in self.morse_ranges.iter().enumerate() {
            let _ = writeln!(s, "  M{}: [{lo:.6}, {hi:.6}]", i + 1);
        }
        s
    }
}

/// Valid selectors for the single-pair construction, one line per pair.
pub fn describe_pairs(mg: &MorseGraph) -> Result<String> {
    let pairs = enumerate_ar_pairs(mg)?;
    let mut s = String::new();
    for (k, p) in pairs.iter().enumerate() {
        let d: Vec<usize> = p.down_set.iter().map(|i| i + 1).collect();
        let _ = writeln!(s, "  {k}: down-set {d:?}");
    }
    Ok(s)
}

fn field_for(ws: &Workspace, pair: &IndexPair, mg: &MorseGraph, construction: Construction, selector: Option<usize>) -> Result<LyapunovField> {
    let params = ws.config.lyapunov_params();
    match construction {
        Construction::SinglePair => {
            let pairs = enumerate_ar_pairs(mg)?;
            let k = selector.unwrap_or(usize::from(pairs.len() > 2));
            let Some(ar) = pairs.get(k) else {
                return Err(Error::Selection(format!(
                    "pair {k} does not exist; valid pairs:\n{}",
                    describe_pairs(mg)?
                )));
            };
            let r = ar_regions_in_pair(mg, &ar.down_set)?;
            pair_lyapunov(
                &ws.system,
                pair,
                &ar.down_set,
                &r.unstable_of_attractor,
                &r.stable_of_repeller,
                &params,
            )
        }
        Construction::MorseSum => morse_lyapunov(&ws.system, pair, mg, &params),
        Construction::Complete => complete_lyapunov(&ws.system, pair, mg, &params),
    }
}

pub fn cmd_lyapunov(config: &RunConfig, construction: Construction, selector: Option<usize>) -> Result<LyapunovSummary> {
    let ws = Workspace::new(config)?;
    let (pair, mg) = ws.pair()?;
    let field = field_for(&ws, &pair, &mg, construction, selector)?;
    ws.write_json("pair.json", &PairRecord::from_pair(&pair))?;
    ws.write_json("field.json", &FieldRecord::from_field(&field))?;
    ws.write("field.csv", &field_csv(&field))?;
    ws.write("field_plot.csv", &plot_csv(&field))?;
    let vals = field.values().values();
    Ok(LyapunovSummary {
        construction,
        down_sets: field.components().iter().map(|c| c.down_set.iter().map(|i| i + 1).collect()).collect(),
        boxes: field.values().len(),
        min: vals.clone().copied().fold(f64::INFINITY, f64::min),
        max: vals.copied().fold(f64::NEG_INFINITY, f64::max),
        morse_ranges: morse_set_ranges(&field, &mg),
        unconverged: field.unconverged(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiltrationFailure {
    pub pass: bool,
    pub level: usize,
    pub reason: String,
    pub boxes: Vec<usize>,
}

pub fn cmd_filtration(config: &RunConfig) -> Result<Filtration> {
    let ws = Workspace::new(config)?;
    if invariant_part(&ws.graph, &ws.grid.all())?.set.is_empty() {
        let trivial = Filtration {
            levels: vec![BoxSet::new()],
            thresholds: Vec::new(),
            reports: Vec::new(),
        };
        ws.write_json("filtration.json", &trivial)?;
        return Ok(trivial);
    }
    let (pair, mg) = match ws.pair() {
        Ok(v) => v,
        Err(e @ (Error::NotIsolating { .. } | Error::Construction { .. } | Error::Precondition(_))) => {
            // The top level N_n = N cannot be formed, so no level below it can either.
            let top = ws.global_morse_graph()?.n();
            let failure = FiltrationFailure {
                pass: false,
                level: top,
                reason: format!("top level N could not be built: {e}"),
                boxes: match &e {
                    Error::Construction { boxes, .. } => boxes.clone(),
                    _ => Vec::new(),
                },
            };
            ws.write_json("filtration_failure.json", &failure)?;
            return Err(Error::Filtration {
                level: failure.level,
                reason: failure.reason,
                boxes: failure.boxes,
            });
        }
        Err(e) => return Err(e),
    };
    if mg.n() == 0 {
        let trivial = Filtration {
            levels: vec![pair.l().clone()],
            thresholds: Vec::new(),
            reports: Vec::new(),
        };
        ws.write_json("filtration.json", &trivial)?;
        return Ok(trivial);
    }
    let field = morse_lyapunov(&ws.system, &pair, &mg, &ws.config.lyapunov_params())?;
    match extract_filtration(&field, &mg, &ws.graph, &RegularityParams::default()) {
        Ok(f) => {
            ws.write_json("filtration.json", &f)?;
            Ok(f)
        }
        Err(Error::Filtration { level, reason, boxes }) => {
            ws.write_json(
                "filtration_failure.json",
                &FiltrationFailure {
                    pass: false,
                    level,
                    reason: reason.clone(),
                    boxes: boxes.clone(),
                },
            )?;
            Err(Error::Filtration { level, reason, boxes })
        }
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub mandatory: bool,
    pub pass: bool,
    pub measured: BTreeMap<String, f64>,
    pub tolerance: Option<f64>,
    pub counterexamples: Vec<String>,
    pub note: Option<String>,
}

impl CheckResult {
    fn new(name: &str, pass: bool) -> Self {
        Self {
            name: name.into(),
            mandatory: true,
            pass,
            measured: BTreeMap::new(),
            tolerance: None,
            counterexamples: Vec::new(),
            note: None,
        }
    }

    fn failed(name: &str, err: &Error) -> Self {
        Self {
            note: Some(err.to_string()),
            ..Self::new(name, false)
        }
    }

    fn with(mut self, key: &str, v: f64) -> Self {
        self.measured.insert(key.into(), v);
        self
    }

    fn tol(mut self, t: f64) -> Self {
        self.tolerance = Some(t);
        self
    }

    fn from_samples(name: &str, c: &SampleCheck, tol: f64) -> Self {
        let mut r = Self::new(name, c.pass())
            .with("samples", c.samples as f64)
            .with("failures", c.failures as f64)
            .with("worst", c.worst)
            .tol(tol);
        r.counterexamples = c.counterexamples.iter().map(|x| format!("{x:?}")).collect();
        if c.samples == 0 {
            r.note = Some("vacuous: no admissible samples".into());
        }
        r
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub system: String,
    pub counts: Vec<usize>,
    pub seed: u64,
    pub pass: bool,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn text(&self) -> String {
        let mut s = format!("verify {} grid {:?} seed {}\n", self.system, self.counts, self.seed);
        for c in &self.checks {
            let tag = if c.pass { "PASS" } else { "FAIL" };
            let _ = write!(s, "{tag} {}", c.name);
            for (k, v) in &c.measured {
                let _ = write!(s, " {k}={v}");
            }
            if let Some(t) = c.tolerance {
                let _ = write!(s, " tol={t}");
            }
            if let Some(n) = &c.note {
                let _ = write!(s, " ({n})");
            }
            s.push('\n');
        }
        let _ = writeln!(s, "overall: {}", if self.pass { "PASS" } else { "FAIL" });
        s
    }
}

/// Samples per sampled property check.
const VERIFY_SAMPLES: usize = 100;

pub fn cmd_verify(config: &RunConfig) -> Result<VerifyReport> {
    let ws = Workspace::new(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut checks = Vec::new();

    let global = ws.global_morse_graph()?;
    let r = check_r_equals_intersection(&global)?;
    checks.push(
        CheckResult::new("r_equals_intersection", r.equal)
            .with("morse_sets", global.n() as f64)
            .with("pairs", r.pairs as f64)
            .with("symmetric_difference", r.symmetric_difference.len() as f64),
    );

    if ws.system.dimension() == 1 {
        let p = OracleParams {
            epsilon: config.epsilon_for(&ws.grid),
            t_min: 1.0,
            t_max: 10.0,
            steps: 91,
        };
        let mut c = match oracle_agreement(&ws.system, &ws.grid, &global, 201, &p) {
            Ok(o) => {
                let mut c = CheckResult::new("oracle_agreement", o.pass())
                    .with("points", o.points as f64)
                    .with("flagged", o.flagged as f64)
                    .with("outside_recurrent", o.outside_recurrent.len() as f64)
                    .with("interior_mismatch", o.interior_mismatch.len() as f64)
                    .tol(p.epsilon);
                c.counterexamples = o.outside_recurrent.iter().map(|x| format!("{x:?}")).collect();
                c
            }
            Err(e) => CheckResult::failed("oracle_agreement", &e),
        };
        c.note.get_or_insert_with(|| "epsilon-chain oracle vs SCC boxes".into());
        checks.push(c);
    }

    let (pair, mg) = match ws.pair() {
        Ok(v) => v,
        Err(e) => {
            checks.push(CheckResult::failed("index_pair", &e));
            return finish(&ws, checks);
        }
    };
    let rep = validate_index_pair(&ws.graph, &pair);
    let mut c = CheckResult::new("index_pair", rep.passed())
        .with("N", pair.n().len() as f64)
        .with("L", pair.l().len() as f64);
    c.counterexamples = rep.offending_boxes().iter().map(|b| b.to_string()).collect();
    checks.push(c);

    let reg = regularity_check(&ws.system, &pair, &RegularityParams::default())?;
    checks.push(
        CheckResult::new("regularity", reg.pass)
            .with("samples", reg.samples as f64)
            .with("violations", reg.violations.len() as f64),
    );

    if mg.n() == 0 {
        return finish(&ws, checks);
    }
    let params = ws.config.lyapunov_params();
    let morse = morse_lyapunov(&ws.system, &pair, &mg, &params)?;
    let dev = level_deviation(&morse, &mg);
    checks.push(CheckResult::new("morse_levels", dev < 0.1).with("max_deviation", dev).tol(0.1));
    let on_l = morse.values().iter().filter(|(b, _)| pair.box_in_l(**b)).all(|(_, v)| *v == 0.0);
    checks.push(CheckResult::new("zero_on_exit_set", on_l));

    let f = morse.function();
    let pts = sample_points(&pair, &BoxSet::new(), VERIFY_SAMPLES, &mut rng);
    checks.push(CheckResult::from_samples("monotone_non_increase", &monotone(f, &pts, &[0.5, 1.0, 2.0], 1e-6)?, 1e-6));
    let exceptional = neighborhood(&ws.grid, &mg.recurrent().union(pair.l()), 1);
    let pts = sample_points(&pair, &exceptional, VERIFY_SAMPLES, &mut rng);
    checks.push(CheckResult::from_samples("strict_decrease", &strictly_decreasing(f, &pts, 1.0, 1e-4)?, 1e-4));
    let pts = sample_points(&pair, &BoxSet::new(), 20, &mut rng);
    checks.push(CheckResult::from_samples("renewal_identity", &renewal(f, &pts, 1.0, 2e-3)?, 2e-3));

    let complete = complete_lyapunov(&ws.system, &pair, &mg, &params)?;
    let ranges = morse_set_ranges(&complete, &mg);
    let spread = ranges.iter().map(|(lo, hi)| hi - lo).fold(0.0, f64::max);
    let mut c = CheckResult::new("complete_constant_on_morse_sets", spread < 0.05)
        .with("max_spread", spread)
        .tol(0.05);
    for (i, (lo, hi)) in ranges.iter().enumerate() {
        c.measured.insert(format!("M{}_min", i + 1), *lo);
        c.measured.insert(format!("M{}_max", i + 1), *hi);
    }
    checks.push(c);

    let filt = match extract_filtration(&morse, &mg, &ws.graph, &RegularityParams::default()) {
        Ok(f) => CheckResult::new("filtration", true).with("levels", f.levels.len() as f64),
        Err(e) => CheckResult::failed("filtration", &e),
    };
    checks.push(filt);
    finish(&ws, checks)
}

fn finish(ws: &Workspace, checks: Vec<CheckResult>) -> Result<VerifyReport> {
    let report = VerifyReport {
        system: ws.system_label(),
        counts: ws.grid.counts().to_vec(),
        seed: ws.config.seed,
        pass: checks.iter().filter(|c| c.mandatory).all(|c| c.pass),
        checks,
    };
    ws.write("verify.json", &to_json(&report)?)?;
    ws.write("verify.txt", &report.text())?;
    Ok(report)
}
