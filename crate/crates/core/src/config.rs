//! Run configuration shared by every command.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{builtin_system, FlowSystem};
use crate::graph::MapParams;
use crate::grid::BoxGrid;
use crate::io::load_system_file;
use crate::lyapunov::LyapunovParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemSource {
    Builtin(String),
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub system: SystemSource,
    /// Boxes per axis; a single entry applies to every axis. Empty picks
    /// 256 in one dimension and 64 per axis otherwise.
    pub depth: Vec<usize>,
    pub map_time: f64,
    /// Image padding; `None` means one box diagonal.
    pub padding: Option<f64>,
    pub dt: f64,
    pub horizon: f64,
    pub t_max: f64,
    /// Oracle chain tolerance; `None` means two box widths.
    pub epsilon: Option<f64>,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let lp = LyapunovParams::default();
        Self {
            system: SystemSource::Builtin("doublewell1d".into()),
            depth: Vec::new(),
            map_time: 1.5,
            padding: None,
            dt: lp.dt,
            horizon: lp.horizon,
            t_max: lp.t_max,
            epsilon: None,
            seed: 0,
            out: PathBuf::from("out"),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("--{name} must be a positive number, got {v}")))
    }
}

impl RunConfig {
    pub fn builtin(name: &str) -> Self {
        Self {
            system: SystemSource::Builtin(name.into()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(d) = self.depth.iter().find(|d| **d == 0) {
            return Err(Error::Config(format!("--depth entries must be >= 1, got {d}")));
        }
        positive("map-time", self.map_time)?;
        positive("dt", self.dt)?;
        positive("horizon", self.horizon)?;
        positive("tmax", self.t_max)?;
        if self.t_max < 1.0 {
            return Err(Error::Config(format!("--tmax must be >= 1, got {}", self.t_max)));
        }
        if let Some(p) = self.padding {
            if !(p >= 0.0 && p.is_finite()) {
                return Err(Error::Config(format!("--padding must be >= 0, got {p}")));
            }
        }
        if let Some(e) = self.epsilon {
            positive("epsilon", e)?;
        }
        Ok(())
    }

    pub fn load_system(&self) -> Result<FlowSystem> {
        match &self.system {
            SystemSource::Builtin(name) => builtin_system(name),
            SystemSource::File(path) => load_system_file(path),
        }
    }

    pub fn counts(&self, dim: usize) -> Result<Vec<usize>> {
        match self.depth.len() {
            0 => Ok(vec![if dim == 1 { 256 } else { 64 }; dim]),
            1 => Ok(vec![self.depth[0]; dim]),
            n if n == dim => Ok(self.depth.clone()),
            n => Err(Error::Config(format!("--depth has {n} entries for a {dim}-dimensional system"))),
        }
    }

    pub fn grid(&self, system: &FlowSystem) -> Result<BoxGrid> {
        BoxGrid::new(system.domain().clone(), self.counts(system.dimension())?)
    }

    pub fn map_params(&self, grid: &BoxGrid) -> MapParams {
        let mut p = MapParams::for_grid(grid, self.map_time);
        if let Some(pad) = self.padding {
            p.padding = pad;
        }
        p
    }

    pub fn lyapunov_params(&self) -> LyapunovParams {
        LyapunovParams {
            dt: self.dt,
            t_max: self.t_max,
            horizon: self.horizon,
        }
    }

    pub fn epsilon_for(&self, grid: &BoxGrid) -> f64 {
        self.epsilon.unwrap_or(2.0 * grid.max_width())
    }
}
