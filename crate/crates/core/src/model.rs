//! Domain types shared by every other module: coefficient descriptors, the
//! unit-horizon time grid, sample paths, and finite path / Markov measures.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for probability vectors summing to one.
pub const PROB_TOL: f64 = 1e-12;

/// Declarative drift or diffusion coefficient.
///
/// The family is closed so that Lipschitz and linear-growth constants are
/// available in closed form (see [`growth_bounds`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CoefficientSpec {
    /// `φ(x) = c`
    Constant { c: f64 },
    /// `φ(x) = a + slope·x`
    Affine { a: f64, slope: f64 },
    /// Ornstein–Uhlenbeck drift `φ(x) = −θx`.
    Ou { theta: f64 },
    /// Continuous piecewise-linear interpolation of `(knots, values)`.
    /// Queries outside the knot range are errors.
    Table { knots: Vec<f64>, values: Vec<f64> },
    /// Path-dependent drift `C·sign(ω(h_sw))·1{t > h_sw}`.
    SignSwitch { c: f64, h_sw: f64 },
}

impl CoefficientSpec {
    pub fn constant(c: f64) -> Self {
        CoefficientSpec::Constant { c }
    }

    pub fn affine(a: f64, slope: f64) -> Self {
        CoefficientSpec::Affine { a, slope }
    }

    pub fn ou(theta: f64) -> Self {
        CoefficientSpec::Ou { theta }
    }

    pub fn table(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let spec = CoefficientSpec::Table { knots, values };
        spec.validate()?;
        Ok(spec)
    }

    pub fn sign_switch(c: f64, h_sw: f64) -> Self {
        CoefficientSpec::SignSwitch { c, h_sw }
    }

    /// Tabulate `f` on `knots`.
    pub fn tabulate(knots: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = knots.iter().map(|&x| f(x)).collect();
        Self::table(knots, values)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: f64, name: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidSpec(format!("{name} must be finite")))
            }
        };
        match self {
            CoefficientSpec::Constant { c } => finite(*c, "c"),
            CoefficientSpec::Affine { a, slope } => {
                finite(*a, "a")?;
                finite(*slope, "slope")
            }
            CoefficientSpec::Ou { theta } => finite(*theta, "theta"),
            CoefficientSpec::Table { knots, values } => {
                if knots.len() < 2 {
                    return Err(Error::InvalidSpec("table needs at least two knots".into()));
                }
                if knots.len() != values.len() {
                    return Err(Error::InvalidSpec(format!(
                        "table has {} knots but {} values",
                        knots.len(),
                        values.len()
                    )));
                }
                if knots.iter().chain(values).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidSpec("table entries must be finite".into()));
                }
                if knots.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidSpec(
                        "table knots must be strictly increasing".into(),
                    ));
                }
                Ok(())
            }
            CoefficientSpec::SignSwitch { c, h_sw } => {
                finite(*c, "c")?;
                if !(*h_sw > 0.0 && *h_sw < 1.0) {
                    return Err(Error::InvalidSpec("h_sw must lie in (0, 1)".into()));
                }
                Ok(())
            }
        }
    }

    pub fn is_markovian(&self) -> bool {
        !matches!(self, CoefficientSpec::SignSwitch { .. })
    }

    /// Evaluate a Markovian coefficient at `x`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        match self {
            CoefficientSpec::Constant { c } => Ok(*c),
            CoefficientSpec::Affine { a, slope } => Ok(a + slope * x),
            CoefficientSpec::Ou { theta } => Ok(-theta * x),
            CoefficientSpec::Table { knots, values } => table_eval(knots, values, x),
            CoefficientSpec::SignSwitch { .. } => Err(Error::NotMarkovian),
        }
    }

    /// Evaluate as a diffusion coefficient; negative values are rejected.
    pub fn eval_diffusion(&self, x: f64) -> Result<f64> {
        let value = self.eval(x)?;
        if value < 0.0 {
            return Err(Error::NegativeDiffusion { x, value });
        }
        Ok(value)
    }
}

fn table_eval(knots: &[f64], values: &[f64], x: f64) -> Result<f64> {
    let lo = knots[0];
    let hi = knots[knots.len() - 1];
    if !(x >= lo && x <= hi) {
        return Err(Error::Extrapolation { x, lo, hi });
    }
    // index of the first knot strictly greater than x
    let j = knots.partition_point(|&k| k <= x);
    if j == knots.len() {
        return Ok(values[values.len() - 1]);
    }
    let i = j - 1;
    let w = (x - knots[i]) / (knots[j] - knots[i]);
    Ok(values[i] + w * (values[j] - values[i]))
}

/// Evaluate `spec` at time `t` given the path observed on `[0, t]`.
///
/// Markovian kinds read the last value of the prefix; `SignSwitch` reads
/// the prefix at `h_sw` (linearly interpolated between grid points).
pub fn eval_coefficient(spec: &CoefficientSpec, t: f64, prefix: &SamplePath) -> Result<f64> {
    if prefix.values.is_empty() {
        return Err(Error::Domain("empty path prefix".into()));
    }
    let covered = prefix.grid.time(prefix.values.len() - 1);
    if t > covered + 1e-12 {
        return Err(Error::Domain(format!(
            "prefix covers [0, {covered}] but t = {t}"
        )));
    }
    match spec {
        CoefficientSpec::SignSwitch { c, h_sw } => {
            if t <= *h_sw {
                return Ok(0.0);
            }
            let w = prefix.value_at(*h_sw)?;
            Ok(c * sign(w))
        }
        _ => spec.eval(*prefix.values.last().unwrap()),
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Lipschitz and linear-growth constants of a Markovian coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthBounds {
    pub lipschitz: Option<f64>,
    /// `|φ(x)| ≤ K (1 + |x|)`
    pub linear_growth_k: f64,
    pub value_at_zero_bound: f64,
}

/// Exact growth constants. For tables the Lipschitz constant is the largest
/// segment slope and `K` is taken over the knot range.
pub fn growth_bounds(spec: &CoefficientSpec) -> Result<GrowthBounds> {
    match spec {
        CoefficientSpec::Constant { c } => Ok(GrowthBounds {
            lipschitz: Some(0.0),
            linear_growth_k: c.abs(),
            value_at_zero_bound: c.abs(),
        }),
        CoefficientSpec::Affine { a, slope } => Ok(GrowthBounds {
            lipschitz: Some(slope.abs()),
            linear_growth_k: a.abs().max(slope.abs()),
            value_at_zero_bound: a.abs(),
        }),
        CoefficientSpec::Ou { theta } => Ok(GrowthBounds {
            lipschitz: Some(theta.abs()),
            linear_growth_k: theta.abs(),
            value_at_zero_bound: 0.0,
        }),
        CoefficientSpec::Table { knots, values } => {
            let lipschitz = knots
                .windows(2)
                .zip(values.windows(2))
                .map(|(k, v)| ((v[1] - v[0]) / (k[1] - k[0])).abs())
                .fold(0.0, f64::max);
            // |φ|/(1+|x|) is monotone on each piece where 1+|x| is affine, so
            // the maximum sits on a knot or at the origin.
            let zero = 0.0f64.clamp(knots[0], knots[knots.len() - 1]);
            let at_zero = table_eval(knots, values, zero)?;
            let k = knots
                .iter()
                .zip(values)
                .map(|(x, v)| v.abs() / (1.0 + x.abs()))
                .fold(at_zero.abs() / (1.0 + zero.abs()), f64::max);
            Ok(GrowthBounds {
                lipschitz: Some(lipschitz),
                linear_growth_k: k,
                value_at_zero_bound: at_zero.abs(),
            })
        }
        CoefficientSpec::SignSwitch { .. } => Err(Error::NotMarkovian),
    }
}

impl fmt::Display for CoefficientSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(";")
        };
        match self {
            CoefficientSpec::Constant { c } => write!(f, "kind=constant,c={c}"),
            CoefficientSpec::Affine { a, slope } => write!(f, "kind=affine,a={a},slope={slope}"),
            CoefficientSpec::Ou { theta } => write!(f, "kind=ou,theta={theta}"),
            CoefficientSpec::Table { knots, values } => {
                write!(f, "kind=table,knots={},values={}", list(knots), list(values))
            }
            CoefficientSpec::SignSwitch { c, h_sw } => {
                write!(f, "kind=sign-switch,c={c},h_sw={h_sw}")
            }
        }
    }
}

/// Parses the key–value text form, e.g. `kind=affine,a=0,slope=2` or
/// `kind=table,knots=0;1,values=0;2`. A bare number is shorthand for a
/// constant.
impl FromStr for CoefficientSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Ok(c) = s.parse::<f64>() {
            return Ok(CoefficientSpec::constant(c));
        }
        let mut fields = std::collections::BTreeMap::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidSpec(format!("expected key=value, got `{part}`")))?;
            fields.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
        }
        let num = |key: &str| -> Result<f64> {
            let raw = fields
                .get(key)
                .ok_or_else(|| Error::InvalidSpec(format!("missing field `{key}`")))?;
            raw.parse::<f64>()
                .map_err(|_| Error::InvalidSpec(format!("field `{key}`: bad number `{raw}`")))
        };
        let nums = |key: &str| -> Result<Vec<f64>> {
            let raw = fields
                .get(key)
                .ok_or_else(|| Error::InvalidSpec(format!("missing field `{key}`")))?;
            raw.split(';')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidSpec(format!("field `{key}`: bad number `{x}`")))
                })
                .collect()
        };
        let kind = fields
            .get("kind")
            .ok_or_else(|| Error::InvalidSpec("missing field `kind`".into()))?
            .to_ascii_lowercase();
        let spec = match kind.as_str() {
            "constant" => CoefficientSpec::constant(num("c")?),
            "affine" => CoefficientSpec::affine(num("a")?, num("slope")?),
            "ou" => CoefficientSpec::ou(num("theta")?),
            "table" => CoefficientSpec::Table {
                knots: nums("knots")?,
                values: nums("values")?,
            },
            "sign-switch" | "signswitch" => CoefficientSpec::sign_switch(num("c")?, num("h_sw")?),
            other => return Err(Error::InvalidSpec(format!("unknown kind `{other}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Uniform grid on `[0, 1]` with `n_steps` steps of size `h = 1/n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::Config("n_steps must be positive".into()));
        }
        Ok(TimeGrid { n_steps })
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n_steps as f64
    }

    /// `t_k = k/N`; exact at both ends.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 / self.n_steps as f64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(|k| self.time(k))
    }

    /// Index `k` with `t_k = t`, if `t` lies on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = (t * self.n_steps as f64).round();
        if k >= 0.0 && (k as usize) <= self.n_steps && (self.time(k as usize) - t).abs() < 1e-12 {
            Some(k as usize)
        } else {
            None
        }
    }
}

/// Values of one path on a [`TimeGrid`], starting with `x_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
}

impl SamplePath {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_steps + 1 {
            return Err(Error::Config(format!(
                "path has {} values, grid needs {}",
                values.len(),
                grid.n_steps + 1
            )));
        }
        if let Some((k, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Divergence { stage: k, value: *v });
        }
        Ok(SamplePath { grid, values })
    }

    /// A prefix `values[0..=k]` on the same grid; used for path-dependent
    /// coefficient evaluation.
    pub fn prefix(grid: TimeGrid, values: &[f64]) -> Self {
        SamplePath {
            grid,
            values: values.to_vec(),
        }
    }

    /// Linear interpolation of the (possibly partial) path at time `t`.
    pub fn value_at(&self, t: f64) -> Result<f64> {
        let pos = t * self.grid.n_steps as f64;
        let last = self.values.len() - 1;
        if pos < -1e-9 || pos > last as f64 + 1e-9 {
            return Err(Error::Domain(format!("time {t} not covered by path")));
        }
        let i = (pos.floor() as usize).min(last);
        if i == last {
            return Ok(self.values[last]);
        }
        let w = pos - i as f64;
        Ok(self.values[i] + w * (self.values[i + 1] - self.values[i]))
    }
}

/// Finitely many weighted paths on a common grid. Coordinates are the
/// costed stages `1..=T`; the common starting point is implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePathMeasure {
    pub paths: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl DiscretePathMeasure {
    pub fn new(paths: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let m = DiscretePathMeasure { paths, weights };
        m.validate()?;
        Ok(m)
    }

    pub fn uniform(paths: Vec<Vec<f64>>) -> Result<Self> {
        let n = paths.len();
        Self::new(paths, vec![1.0 / n as f64; n])
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths.is_empty() {
            return Err(Error::InvalidMeasure("no paths".into()));
        }
        if self.paths.len() != self.weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} paths but {} weights",
                self.paths.len(),
                self.weights.len()
            )));
        }
        let len = self.paths[0].len();
        if len == 0 || self.paths.iter().any(|p| p.len() != len) {
            return Err(Error::InvalidMeasure(
                "paths must be non-empty and share one length".into(),
            ));
        }
        if self.paths.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMeasure("non-finite path value".into()));
        }
        check_probability_vector(&self.weights)
    }

    pub fn n_stages(&self) -> usize {
        self.paths[0].len()
    }
}

/// Nonnegative entries summing to one within [`PROB_TOL`].
pub fn check_probability_vector(w: &[f64]) -> Result<()> {
    if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidMeasure("negative or non-finite weight".into()));
    }
    let s: f64 = w.iter().sum();
    if (s - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidMeasure(format!("weights sum to {s}")));
    }
    Ok(())
}

/// One stage of a [`MarkovLattice`]: the sorted support and the transition
/// matrix from the previous stage's support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeStage {
    pub support: Vec<f64>,
    /// `transitions[i][j]` = P(next = support[j] | previous = prev_support[i])
    pub transitions: Vec<Vec<f64>>,
}

/// Finite-support, finite-stage Markov chain started at `initial_value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovLattice {
    pub initial_value: f64,
    pub stages: Vec<LatticeStage>,
}

impl MarkovLattice {
    pub fn new(initial_value: f64, stages: Vec<LatticeStage>) -> Result<Self> {
        let l = MarkovLattice {
            initial_value,
            stages,
        };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.initial_value.is_finite() {
            return Err(Error::InvalidMeasure("non-finite initial value".into()));
        }
        let mut prev_len = 1;
        for (k, stage) in self.stages.iter().enumerate() {
            if stage.support.is_empty() {
                return Err(Error::InvalidMeasure(format!("stage {} is empty", k + 1)));
            }
            if stage.support.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidMeasure(format!(
                    "stage {} has a non-finite node",
                    k + 1
                )));
            }
            if stage.support.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidMeasure(format!(
                    "stage {} support not strictly increasing",
                    k + 1
                )));
            }
            if stage.transitions.len() != prev_len {
                return Err(Error::InvalidMeasure(format!(
                    "stage {} has {} transition rows, expected {}",
                    k + 1,
                    stage.transitions.len(),
                    prev_len
                )));
            }
            for row in &stage.transitions {
                if row.len() != stage.support.len() {
                    return Err(Error::InvalidMeasure(format!(
                        "stage {} transition row has wrong length",
                        k + 1
                    )));
                }
                check_probability_vector(row).map_err(|e| {
                    Error::InvalidMeasure(format!("stage {} transition row: {e}", k + 1))
                })?;
            }
            prev_len = stage.support.len();
        }
        Ok(())
    }

    pub fn n_stages(&self) -> usize {
        self.stages.len()
    }

    /// Support at stage `k` (stage 0 is the initial value).
    pub fn support(&self, k: usize) -> &[f64] {
        if k == 0 {
            std::slice::from_ref(&self.initial_value)
        } else {
            &self.stages[k - 1].support
        }
    }

    /// Unconditional marginal probabilities at every stage `0..=N`.
    pub fn marginals(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![1.0]];
        for stage in &self.stages {
            let prev = out.last().unwrap();
            let mut next = vec![0.0; stage.support.len()];
            for (p, row) in prev.iter().zip(&stage.transitions) {
                for (n, t) in next.iter_mut().zip(row) {
                    *n += p * t;
                }
            }
            out.push(next);
        }
        out
    }

    /// Mean and variance of the stage-`k` marginal.
    pub fn moments(&self, k: usize) -> (f64, f64) {
        let marg = &self.marginals()[k];
        let support = self.support(k);
        let mean: f64 = marg.iter().zip(support).map(|(p, x)| p * x).sum();
        let var: f64 = marg
            .iter()
            .zip(support)
            .map(|(p, x)| p * (x - mean).powi(2))
            .sum();
        (mean, var)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let l: MarkovLattice = serde_json::from_str(s)?;
        l.validate()?;
        Ok(l)
    }
}
