//! Agent dynamics `y_i(k+1) = f_i(y_i(k), u_i(k))` and the reference schedule.
//!
//! The controller never sees anything from this module; the simulator only
//! feeds plant outputs through the NABCE measurement.

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, Error, Result};

/// Discrete-time dynamics of every agent.
pub trait PlantModel {
    /// Output dimension `p`.
    fn outputs(&self) -> usize;
    /// Input dimension `q`.
    fn inputs(&self) -> usize;
    /// `y_i(k+1)` from `y_i(k)`, `u_i(k)`; `agent` is zero-based.
    fn step(&self, agent: usize, y: &DVector<f64>, u: &DVector<f64>, k: usize) -> Result<DVector<f64>>;
}

/// Exponent convention for `y^c` with `y < 0` and fractional `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PowerMode {
    /// `sign(y) · |y|^c`.
    #[default]
    Signed,
    /// `|y|^c`.
    Absolute,
}

impl PowerMode {
    pub fn pow(self, y: f64, c: f64) -> f64 {
        match self {
            Self::Signed => y.signum() * y.abs().powf(c),
            Self::Absolute => y.abs().powf(c),
        }
    }
}

impl std::str::FromStr for PowerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signed" => Ok(Self::Signed),
            "absolute" => Ok(Self::Absolute),
            other => Err(Error::ConfigInvalid(format!("unknown power mode {other:?}"))),
        }
    }
}

/// Per-agent coefficients of the two-output benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkCoefficients {
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
    pub c3: Vec<f64>,
    pub c4: Vec<f64>,
}

impl Default for BenchmarkCoefficients {
    fn default() -> Self {
        Self {
            c1: vec![2.0, 3.0, 4.0, 3.0, 1.0, 2.0],
            c2: vec![2.0, 5.0, 5.0, 2.0, 1.0, 2.0],
            c3: vec![1.0, 0.9, 0.6, 1.1, 1.3, 1.5],
            c4: vec![0.8, 0.5, 0.7, 1.2, 1.4, 1.6],
        }
    }
}

impl BenchmarkCoefficients {
    pub fn agents(&self) -> usize {
        self.c1.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.c1.len();
        for (name, c) in [("c2", &self.c2), ("c3", &self.c3), ("c4", &self.c4)] {
            if c.len() != n {
                return Err(Error::ConfigInvalid(format!(
                    "benchmark coefficient {name} has {} entries, c1 has {n}",
                    c.len()
                )));
            }
        }
        if [&self.c1, &self.c2, &self.c3, &self.c4]
            .iter()
            .any(|c| c.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinite("benchmark coefficients"));
        }
        Ok(())
    }
}

const DENOMINATOR_GUARD: f64 = 1e-9;

/// One step of the benchmark:
///
/// ```text
/// y₁' = y₁u₁ / (1 + y₁^{c1}) + c2·u₁
/// y₂' = y₂u₂ / (1 + y₁^{c3} + y₂^{c3}) + c4·u₂
/// ```
pub fn benchmark_step(
    agent: usize,
    y: &DVector<f64>,
    u: &DVector<f64>,
    coeffs: &BenchmarkCoefficients,
    mode: PowerMode,
) -> Result<DVector<f64>> {
    if y.len() != 2 {
        return Err(dim_mismatch("benchmark output", 2, y.len()));
    }
    if u.len() != 2 {
        return Err(dim_mismatch("benchmark input", 2, u.len()));
    }
    if agent >= coeffs.agents() {
        return Err(Error::ConfigInvalid(format!(
            "no benchmark coefficients for agent {}",
            agent + 1
        )));
    }
    let (c1, c2, c3, c4) = (coeffs.c1[agent], coeffs.c2[agent], coeffs.c3[agent], coeffs.c4[agent]);
    let d1 = 1.0 + mode.pow(y[0], c1);
    let d2 = 1.0 + mode.pow(y[0], c3) + mode.pow(y[1], c3);
    if !(d1.abs() >= DENOMINATOR_GUARD) || !(d2.abs() >= DENOMINATOR_GUARD) {
        return Err(Error::NonFinite("benchmark denominator"));
    }
    let next = DVector::from_vec(vec![
        y[0] * u[0] / d1 + c2 * u[0],
        y[1] * u[1] / d2 + c4 * u[1],
    ]);
    if next.iter().all(|v| v.is_finite()) {
        Ok(next)
    } else {
        Err(Error::NonFinite("benchmark output"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkPlant {
    pub coefficients: BenchmarkCoefficients,
    pub power_mode: PowerMode,
}

impl PlantModel for BenchmarkPlant {
    fn outputs(&self) -> usize {
        2
    }

    fn inputs(&self) -> usize {
        2
    }

    fn step(&self, agent: usize, y: &DVector<f64>, u: &DVector<f64>, _k: usize) -> Result<DVector<f64>> {
        benchmark_step(agent, y, u, &self.coefficients, self.power_mode)
    }
}

/// `f(y, u) = y`: outputs never move.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoldPlant {
    pub p: usize,
    pub q: usize,
}

impl PlantModel for HoldPlant {
    fn outputs(&self) -> usize {
        self.p
    }

    fn inputs(&self) -> usize {
        self.q
    }

    fn step(&self, _agent: usize, y: &DVector<f64>, _u: &DVector<f64>, _k: usize) -> Result<DVector<f64>> {
        Ok(y.clone())
    }
}

/// Replays recorded outputs: `step(i, _, _, k)` returns `recorded[k][i]`,
/// i.e. `y_i(k+1)` as logged in a previous run.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaybackPlant {
    p: usize,
    q: usize,
    recorded: Vec<Vec<DVector<f64>>>,
}

impl PlaybackPlant {
    /// `recorded[k][i]` is agent `i`'s output after step `k`; index 0 is unused.
    pub fn new(p: usize, q: usize, recorded: Vec<Vec<DVector<f64>>>) -> Self {
        Self { p, q, recorded }
    }
}

impl PlantModel for PlaybackPlant {
    fn outputs(&self) -> usize {
        self.p
    }

    fn inputs(&self) -> usize {
        self.q
    }

    fn step(&self, agent: usize, _y: &DVector<f64>, _u: &DVector<f64>, k: usize) -> Result<DVector<f64>> {
        self.recorded
            .get(k)
            .and_then(|row| row.get(agent))
            .cloned()
            .ok_or_else(|| Error::ConfigInvalid(format!("playback has no output for step {k}, agent {}", agent + 1)))
    }
}

/// Plant construction inputs taken from the config.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlantSpec {
    pub coefficients: BenchmarkCoefficients,
    pub power_mode: PowerMode,
    pub outputs: usize,
    pub inputs: usize,
}

pub type PlantFactory = fn(&PlantSpec) -> Result<Box<dyn PlantModel + Send + Sync>>;

/// Named plant constructors. `benchmark` and `hold` are always present.
pub struct PlantRegistry {
    factories: BTreeMap<String, PlantFactory>,
}

impl Default for PlantRegistry {
    fn default() -> Self {
        let mut reg = Self {
            factories: BTreeMap::new(),
        };
        reg.register("benchmark", |spec| {
            spec.coefficients.validate()?;
            Ok(Box::new(BenchmarkPlant {
                coefficients: spec.coefficients.clone(),
                power_mode: spec.power_mode,
            }))
        });
        reg.register("hold", |spec| {
            Ok(Box::new(HoldPlant {
                p: spec.outputs,
                q: spec.inputs,
            }))
        });
        reg
    }
}

impl PlantRegistry {
    pub fn register(&mut self, name: &str, factory: PlantFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(&self, name: &str, spec: &PlantSpec) -> Result<Box<dyn PlantModel + Send + Sync>> {
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| Error::ConfigInvalid(format!("unknown plant model {name:?}")))?;
        factory(spec)
    }
}

/// A reference value held from step `start` until the next segment begins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSegment {
    pub start: usize,
    pub value: Vec<f64>,
}

/// Piecewise-constant reference `y_d(k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReferenceSchedule {
    segments: Vec<ReferenceSegment>,
}

impl Default for ReferenceSchedule {
    /// `[5, 5]` on `0..=1249`, `[3, 3]` from `1250` on.
    fn default() -> Self {
        Self {
            segments: vec![
                ReferenceSegment {
                    start: 0,
                    value: vec![5.0, 5.0],
                },
                ReferenceSegment {
                    start: 1250,
                    value: vec![3.0, 3.0],
                },
            ],
        }
    }
}

impl ReferenceSchedule {
    /// Segments must start at 0, increase strictly and share one dimension.
    pub fn new(segments: Vec<ReferenceSegment>) -> Result<Self> {
        let schedule = Self { segments };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .segments
            .first()
            .ok_or_else(|| Error::ConfigInvalid("reference schedule is empty".into()))?;
        if first.start != 0 {
            return Err(Error::ConfigInvalid("reference schedule must start at step 0".into()));
        }
        let p = first.value.len();
        if p == 0 {
            return Err(Error::ConfigInvalid("reference values must be nonempty".into()));
        }
        for w in self.segments.windows(2) {
            if w[1].start <= w[0].start {
                return Err(Error::ConfigInvalid("reference segment starts must increase".into()));
            }
        }
        for seg in &self.segments {
            if seg.value.len() != p {
                return Err(dim_mismatch("reference value", p, seg.value.len()));
            }
            if seg.value.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("reference value"));
            }
        }
        Ok(())
    }

    pub fn segments(&self) -> &[ReferenceSegment] {
        &self.segments
    }

    pub fn dim(&self) -> usize {
        self.segments.first().map_or(0, |s| s.value.len())
    }

    pub fn value_at(&self, k: usize) -> DVector<f64> {
        let seg = self
            .segments
            .iter()
            .rev()
            .find(|s| s.start <= k)
            .unwrap_or(&self.segments[0]);
        DVector::from_column_slice(&seg.value)
    }

    /// Inclusive step ranges `(first, last)` of each segment clipped to
    /// `1..=horizon`; segments entirely outside are dropped.
    pub fn phases(&self, horizon: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (idx, seg) in self.segments.iter().enumerate() {
            let first = seg.start.max(1);
            let last = self
                .segments
                .get(idx + 1)
                .map_or(horizon, |next| (next.start - 1).min(horizon));
            if first <= last {
                out.push((first, last));
            }
        }
        out
    }
}

/// The default two-phase reference.
pub fn reference_signal(k: usize) -> DVector<f64> {
    ReferenceSchedule::default().value_at(k)
}
