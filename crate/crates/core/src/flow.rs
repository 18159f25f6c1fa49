//! Continuous flows given by polynomial vector fields on a bounded box,
//! integrated with a fixed-step classical Runge-Kutta scheme.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Names accepted by [`builtin_system`].
pub const BUILTIN_NAMES: [&str; 5] = ["saddle1d", "contract1d", "doublewell1d", "hopf2d", "gradient2d"];

/// Axis-aligned rectangle `[lower_0, upper_0] x ... x [lower_d, upper_d]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Rect {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::InvalidSystem(format!(
                "domain bounds have mismatched or zero dimension ({} vs {})",
                lower.len(),
                upper.len()
            )));
        }
        for (axis, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidSystem(format!(
                    "axis {axis}: need finite lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Self {
            lower: vec![lo; dim],
            upper: vec![hi; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| (hi - lo) * (hi - lo))
            .sum::<f64>()
            .sqrt()
    }
}

/// One monomial of a polynomial vector field: `coeffs[i] * prod_j x_j^exponents[j]`
/// contributes to output axis `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeffs: Vec<f64>,
    pub exponents: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowSystem {
    name: String,
    dimension: usize,
    terms: Vec<Term>,
    domain: Rect,
    step: f64,
}

/// Result of integrating a point forward.
#[derive(Clone, Debug, PartialEq)]
pub enum FlowOutcome {
    Inside(Vec<f64>),
    /// The path left the closed domain; carries the last in-domain sample.
    Escaped { last_point: Vec<f64>, last_time: f64 },
}

impl FlowOutcome {
    pub fn inside(self) -> Option<Vec<f64>> {
        match self {
            FlowOutcome::Inside(p) => Some(p),
            FlowOutcome::Escaped { .. } => None,
        }
    }

    pub fn is_escaped(&self) -> bool {
        matches!(self, FlowOutcome::Escaped { .. })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    /// Index of the first sample that could not be reached inside the domain.
    pub escaped: Option<usize>,
}

fn term(coeffs: &[f64], exponents: &[u32]) -> Term {
    Term {
        coeffs: coeffs.to_vec(),
        exponents: exponents.to_vec(),
    }
}

/// Looks up one of the catalog systems with its default domain and step.
pub fn builtin_system(name: &str) -> Result<FlowSystem> {
    let (dim, terms, domain) = match name {
        "saddle1d" => (1, vec![term(&[1.0], &[1])], Rect::cube(1, -1.0, 1.0)),
        "contract1d" => (1, vec![term(&[-1.0], &[1])], Rect::cube(1, -2.0, 2.0)),
        "doublewell1d" => (
            1,
            vec![term(&[1.0], &[1]), term(&[-1.0], &[3])],
            Rect::cube(1, -2.0, 2.0),
        ),
        // x' = x - y - x(x^2 + y^2), y' = x + y - y(x^2 + y^2)
        "hopf2d" => (
            2,
            vec![
                term(&[1.0, 1.0], &[1, 0]),
                term(&[-1.0, 1.0], &[0, 1]),
                term(&[-1.0, 0.0], &[3, 0]),
                term(&[-1.0, 0.0], &[1, 2]),
                term(&[0.0, -1.0], &[2, 1]),
                term(&[0.0, -1.0], &[0, 3]),
            ],
            Rect::cube(2, -2.0, 2.0),
        ),
        "gradient2d" => (
            2,
            vec![term(&[-1.0, 0.0], &[1, 0]), term(&[0.0, -2.0], &[0, 1])],
            Rect::cube(2, -1.0, 1.0),
        ),
        _ => {
            return Err(Error::UnknownSystem {
                name: name.to_string(),
                valid: BUILTIN_NAMES.join(", "),
            })
        }
    };
    FlowSystem::polynomial(name, dim, terms, domain, 0.01)
}

impl FlowSystem {
    pub fn polynomial(name: &str, dimension: usize, terms: Vec<Term>, domain: Rect, step: f64) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidSystem("dimension must be at least 1".into()));
        }
        if domain.dim() != dimension {
            return Err(Error::InvalidSystem(format!(
                "domain has {} axes but dimension is {dimension}",
                domain.dim()
            )));
        }
        let domain = Rect::new(domain.lower, domain.upper)?;
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::InvalidSystem(format!("step must be positive, got {step}")));
        }
        for (k, t) in terms.iter().enumerate() {
            if t.coeffs.len() != dimension || t.exponents.len() != dimension {
                return Err(Error::InvalidSystem(format!(
                    "term {k}: expected {dimension} coefficients and exponents"
                )));
            }
            if t.coeffs.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidSystem(format!("term {k}: non-finite coefficient")));
            }
        }
        Ok(Self {
            name: name.to_string(),
            dimension,
            terms,
            domain,
            step,
        })
    }

    /// Same field on a different box.
    pub fn with_domain(&self, domain: Rect) -> Result<Self> {
        Self::polynomial(&self.name, self.dimension, self.terms.clone(), domain, self.step)
    }

    pub fn with_step(&self, step: f64) -> Result<Self> {
        Self::polynomial(&self.name, self.dimension, self.terms.clone(), self.domain.clone(), step)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn domain(&self) -> &Rect {
        &self.domain
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn field_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for t in &self.terms {
            let mono: f64 = x
                .iter()
                .zip(&t.exponents)
                .map(|(v, e)| if *e == 0 { 1.0 } else { v.powi(*e as i32) })
                .product();
            for (o, c) in out.iter_mut().zip(&t.coeffs) {
                *o += c * mono;
            }
        }
    }

    pub fn field(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension];
        self.field_into(x, &mut out);
        out
    }

    /// Numerical time-`t` map. Integration stops at the first step that leaves
    /// the closed domain.
    pub fn flow_map(&self, x: &[f64], t: f64) -> Result<FlowOutcome> {
        self.check_start(x)?;
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::Precondition(format!("flow time must be finite and nonnegative, got {t}")));
        }
        let mut rk = Rk4::new(self.dimension);
        let mut cur = x.to_vec();
        let mut next = vec![0.0; self.dimension];
        let ratio = t / self.step;
        let mut full = ratio.floor() as u64;
        let mut rem = t - full as f64 * self.step;
        if rem < 0.0 {
            rem = 0.0;
        }
        // absorb roundoff in t/step
        if rem > self.step * (1.0 - 1e-9) {
            full += 1;
            rem = 0.0;
        }
        if rem < self.step * 1e-9 {
            rem = 0.0;
        }
        let mut elapsed = 0.0;
        for k in 0..full {
            rk.step(self, &cur, self.step, &mut next);
            if !next.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { point: cur });
            }
            if !self.domain.contains(&next) {
                return Ok(FlowOutcome::Escaped {
                    last_point: cur,
                    last_time: elapsed,
                });
            }
            std::mem::swap(&mut cur, &mut next);
            elapsed = (k + 1) as f64 * self.step;
        }
        if rem > 0.0 {
            rk.step(self, &cur, rem, &mut next);
            if !next.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { point: cur });
            }
            if !self.domain.contains(&next) {
                return Ok(FlowOutcome::Escaped {
                    last_point: cur,
                    last_time: elapsed,
                });
            }
            cur = next;
        }
        Ok(FlowOutcome::Inside(cur))
    }

    /// Samples `x` at times `0, s, 2s, ...` up to `horizon`, truncating at the
    /// first sample that cannot be reached inside the domain.
    pub fn sample_trajectory(&self, x: &[f64], horizon: f64, sample_step: f64) -> Result<Trajectory> {
        self.check_start(x)?;
        if !(sample_step > 0.0 && horizon > 0.0 && sample_step <= horizon) {
            return Err(Error::Precondition(format!(
                "need 0 < sample_step <= horizon, got step {sample_step}, horizon {horizon}"
            )));
        }
        let n = (horizon / sample_step + 1e-9).floor() as usize;
        let mut times = vec![0.0];
        let mut points = vec![x.to_vec()];
        let mut escaped = None;
        for k in 1..=n {
            let prev = points.last().unwrap();
            match self.flow_map(prev, sample_step)? {
                FlowOutcome::Inside(p) => {
                    times.push(k as f64 * sample_step);
                    points.push(p);
                }
                FlowOutcome::Escaped { .. } => {
                    escaped = Some(k);
                    break;
                }
            }
        }
        Ok(Trajectory { times, points, escaped })
    }

    fn check_start(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension {
            return Err(Error::Precondition(format!(
                "point has {} coordinates, system dimension is {}",
                x.len(),
                self.dimension
            )));
        }
        if !self.domain.contains(x) {
            return Err(Error::OutsideDomain { point: x.to_vec() });
        }
        Ok(())
    }
}

struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    fn step(&mut self, sys: &FlowSystem, x: &[f64], h: f64, out: &mut [f64]) {
        sys.field_into(x, &mut self.k1);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + 0.5 * h * self.k1[i];
        }
        sys.field_into(&self.tmp, &mut self.k2);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + 0.5 * h * self.k2[i];
        }
        sys.field_into(&self.tmp, &mut self.k3);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        sys.field_into(&self.tmp, &mut self.k4);
        for i in 0..x.len() {
            out[i] = x[i] + h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_lookup() {
        let c = builtin_system("contract1d").unwrap();
        assert_eq!(c.domain(), &Rect::cube(1, -2.0, 2.0));
        assert_eq!(c.field(&[1.5]), vec![-1.5]);
        let dw = builtin_system("doublewell1d").unwrap();
        assert_eq!(dw.field(&[1.0]), vec![0.0]);
        let err = builtin_system("bogus").unwrap_err();
        assert!(err.to_string().contains("hopf2d"));
    }

    #[test]
    fn hopf_field_matches_formula() {
        let h = builtin_system("hopf2d").unwrap();
        let (x, y) = (0.3, -0.7);
        let r2 = x * x + y * y;
        let f = h.field(&[x, y]);
        assert!((f[0] - (x - y - x * r2)).abs() < 1e-15);
        assert!((f[1] - (x + y - y * r2)).abs() < 1e-15);
    }

    #[test]
    fn contraction_closed_form() {
        let c = builtin_system("contract1d").unwrap();
        let p = c.flow_map(&[1.0], 2f64.ln()).unwrap().inside().unwrap();
        assert!((p[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn equilibrium_is_fixed() {
        let dw = builtin_system("doublewell1d").unwrap();
        for t in [0.37, 1.0, 5.0] {
            assert_eq!(dw.flow_map(&[1.0], t).unwrap().inside().unwrap(), vec![1.0]);
        }
    }

    #[test]
    fn saddle_escapes() {
        let s = builtin_system("saddle1d").unwrap();
        match s.flow_map(&[0.5], 1.0).unwrap() {
            FlowOutcome::Escaped { last_point, last_time } => {
                assert!(last_point[0] <= 1.0);
                assert!((last_time - 2f64.ln()).abs() < 0.02);
            }
            other => panic!("expected escape, got {other:?}"),
        }
    }

    #[test]
    fn domain_and_numeric_errors() {
        let c = builtin_system("contract1d").unwrap();
        assert!(matches!(c.flow_map(&[3.0], 1.0), Err(Error::OutsideDomain { .. })));
        let big = FlowSystem::polynomial(
            "blowup",
            1,
            vec![Term { coeffs: vec![1e300], exponents: vec![8] }],
            Rect::cube(1, -1e300, 1e300),
            0.1,
        )
        .unwrap();
        assert!(matches!(big.flow_map(&[10.0], 1.0), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn trajectories() {
        let c = builtin_system("contract1d").unwrap();
        let tr = c.sample_trajectory(&[1.0], 2.0, 1.0).unwrap();
        assert_eq!(tr.times, vec![0.0, 1.0, 2.0]);
        for (p, t) in tr.points.iter().zip(&tr.times) {
            assert!((p[0] - (-t).exp()).abs() < 1e-6);
        }
        assert_eq!(tr.escaped, None);

        let dw = builtin_system("doublewell1d").unwrap();
        let eq = dw.sample_trajectory(&[-1.0], 3.0, 0.5).unwrap();
        assert!(eq.points.iter().all(|p| p[0] == -1.0));

        let s = builtin_system("saddle1d").unwrap();
        for step in [1.0, 0.25, 0.1] {
            let tr = s.sample_trajectory(&[0.5], 2.0, step).unwrap();
            assert_eq!(tr.escaped, Some((2f64.ln() / step).ceil() as usize));
        }
    }

    #[test]
    fn bad_definitions_rejected() {
        assert!(Rect::new(vec![1.0], vec![0.0]).is_err());
        assert!(FlowSystem::polynomial("x", 1, vec![], Rect::cube(1, 0.0, 1.0), 0.0).is_err());
        assert!(FlowSystem::polynomial("x", 2, vec![], Rect::cube(1, 0.0, 1.0), 0.1).is_err());
    }
}
