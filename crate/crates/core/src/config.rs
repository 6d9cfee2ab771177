//! JSON simulation config.
//!
//! One document with `graph`, `plant`, `controller`, `attack`, `reference`
//! and `sim` sections. Matrices are dense row-major nested arrays. Missing
//! controller fields fall back to [`ControllerParams::shipped`].

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::attack::{AttackConfig, CompensationMode};
use crate::controller::{validate_params, ControllerParams};
use crate::error::{Error, Result};
use crate::graph::{
    build_asymmetric_matrices, check_structural_balance, has_leader_spanning_tree, scaling_vector,
    AsymmetricMatrices, BalancePartition, ScalingVector, SignedDigraph,
};
use crate::plant::{BenchmarkCoefficients, PlantModel, PlantRegistry, PlantSpec, PowerMode, ReferenceSchedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub graph: GraphSection,
    #[serde(default)]
    pub plant: PlantSection,
    #[serde(default)]
    pub controller: ControllerSection,
    #[serde(default)]
    pub attack: AttackSection,
    #[serde(default)]
    pub reference: ReferenceSection,
    #[serde(default)]
    pub sim: RunSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    /// `adjacency[i][j] = a_ij`, the weight of edge `j → i`.
    pub adjacency: Vec<Vec<f64>>,
    pub pinning: Vec<f64>,
    pub m: f64,
    pub n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub model: String,
    #[serde(default)]
    pub power_mode: PowerMode,
    #[serde(default)]
    pub coefficients: BenchmarkCoefficients,
    /// Input dimension for plants other than the benchmark; defaults to `p`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inputs: Option<usize>,
}

impl Default for PlantSection {
    fn default() -> Self {
        Self {
            model: "benchmark".into(),
            power_mode: PowerMode::default(),
            coefficients: BenchmarkCoefficients::default(),
            inputs: None,
        }
    }
}

/// Controller fields; every one is optional so overrides can be partial.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ControllerFields {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_phi: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_u: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_u: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_obs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reset_eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_init: Option<Vec<Vec<f64>>>,
    /// `u(0) = u(−1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_input: Option<Vec<f64>>,
}

// `deny_unknown_fields` does not work through `flatten`, so leftover keys
// are collected and rejected during resolution instead.
type Leftover = BTreeMap<String, serde_json::Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentOverride {
    /// 1-based agent index.
    pub agent: usize,
    #[serde(flatten)]
    pub fields: ControllerFields,
    #[serde(flatten, skip_serializing)]
    pub unknown: Leftover,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ControllerSection {
    #[serde(flatten)]
    pub global: ControllerFields,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<AgentOverride>,
    #[serde(flatten, skip_serializing)]
    pub unknown: Leftover,
}

fn reject_unknown(keys: &Leftover, section: &str) -> Result<()> {
    match keys.keys().next() {
        Some(k) => Err(Error::ConfigInvalid(format!("unknown field {k:?} in {section}"))),
        None => Ok(()),
    }
}

/// Either one probability per agent or a full `N × p` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SuccessProb {
    PerAgent(Vec<f64>),
    PerChannel(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    #[serde(default = "default_true")]
    pub enabled: bool,
    /// `P{h = 1}`: probability that a packet is delivered.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success_prob: Option<SuccessProb>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub compensation: CompensationMode,
}

fn default_true() -> bool {
    true
}

impl Default for AttackSection {
    fn default() -> Self {
        Self {
            enabled: true,
            success_prob: None,
            seed: 0,
            compensation: CompensationMode::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    pub segments: ReferenceSchedule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub steps: usize,
    /// `N × p` outputs `y(1)`; zeros when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_outputs: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_tail")]
    pub tail: usize,
    #[serde(default = "default_threshold")]
    pub convergence_threshold: f64,
    #[serde(default = "default_cap")]
    pub phi_cap: f64,
    #[serde(default = "default_cap")]
    pub observer_error_cap: f64,
    #[serde(default = "default_input_eps")]
    pub input_norm_eps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

fn default_tail() -> usize {
    100
}
fn default_threshold() -> f64 {
    0.5
}
fn default_cap() -> f64 {
    100.0
}
fn default_input_eps() -> f64 {
    1e-6
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            steps: 2500,
            initial_outputs: None,
            tail: default_tail(),
            convergence_threshold: default_threshold(),
            phi_cap: default_cap(),
            observer_error_cap: default_cap(),
            input_norm_eps: default_input_eps(),
            output_dir: None,
        }
    }
}

/// Everything a run needs, checked and converted to matrix form.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub graph: SignedDigraph,
    pub partition: BalancePartition,
    pub m: f64,
    pub n: f64,
    pub scaling: ScalingVector,
    pub matrices: AsymmetricMatrices,
    pub params: Vec<ControllerParams>,
    pub initial_inputs: Vec<DVector<f64>>,
    pub attack: AttackConfig,
    pub compensation: CompensationMode,
    pub schedule: ReferenceSchedule,
    pub steps: usize,
    /// `N × p`.
    pub initial_outputs: DMatrix<f64>,
    pub outputs: usize,
    pub inputs: usize,
    pub input_norm_eps: f64,
}

/// Per-check outcome of [`SimConfig::check`].
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub partition: Option<BalancePartition>,
    pub spanning_tree: Option<bool>,
    /// `(agent, result)`, agent 1-based.
    pub params: Vec<(usize, std::result::Result<(), String>)>,
    pub condition_number: Option<f64>,
    pub failures: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::ConfigInvalid(format!("{what} rows have different lengths")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl ControllerFields {
    fn apply(&self, base: &mut ControllerParams, u0: &mut DVector<f64>) -> Result<()> {
        if let Some(v) = self.eta1 {
            base.eta1 = v;
        }
        if let Some(v) = self.eta2 {
            base.eta2 = v;
        }
        if let Some(v) = self.mu {
            base.mu = v;
        }
        if let Some(v) = &self.q_phi {
            base.q_phi = matrix(v, "q_phi")?;
        }
        if let Some(v) = &self.q_u {
            base.q_u = DVector::from_column_slice(v);
        }
        if let Some(v) = &self.r_u {
            base.r_u = matrix(v, "r_u")?;
        }
        if let Some(v) = &self.k_obs {
            base.k_obs = DVector::from_column_slice(v);
        }
        if let Some(v) = self.reset_eps {
            base.reset_eps = v;
        }
        if let Some(v) = &self.phi_init {
            base.phi_init = matrix(v, "phi_init")?;
        }
        if let Some(v) = &self.initial_input {
            *u0 = DVector::from_column_slice(v);
        }
        Ok(())
    }

    /// Every field set from `params`.
    pub fn from_params(params: &ControllerParams) -> Self {
        Self {
            eta1: Some(params.eta1),
            eta2: Some(params.eta2),
            mu: Some(params.mu),
            q_phi: Some(matrix_to_rows(&params.q_phi)),
            q_u: Some(params.q_u.iter().copied().collect()),
            r_u: Some(matrix_to_rows(&params.r_u)),
            k_obs: Some(params.k_obs.iter().copied().collect()),
            reset_eps: Some(params.reset_eps),
            phi_init: Some(matrix_to_rows(&params.phi_init)),
            initial_input: None,
        }
    }
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// The six-agent benchmark scenario with the shipped gains.
    pub fn example() -> Self {
        let mut a = vec![vec![0.0; 6]; 6];
        for (i, j, w) in [(2, 1, 1.0), (3, 1, -1.0), (4, 2, 1.0), (4, 3, -1.0), (5, 3, 1.0), (6, 4, 1.0), (6, 5, -1.0)] {
            a[i - 1][j - 1] = w;
        }
        Self {
            graph: GraphSection {
                adjacency: a,
                pinning: vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
                m: 2.0,
                n: 4.0,
            },
            plant: PlantSection::default(),
            controller: ControllerSection {
                global: ControllerFields {
                    initial_input: Some(vec![0.0, 0.0]),
                    ..ControllerFields::from_params(&ControllerParams::shipped(2, 2))
                },
                overrides: Vec::new(),
                unknown: Leftover::new(),
            },
            attack: AttackSection {
                enabled: true,
                success_prob: Some(SuccessProb::PerAgent(vec![0.2, 0.3, 0.24, 0.33, 0.1, 0.22])),
                seed: 42,
                compensation: CompensationMode::Recursive,
            },
            reference: ReferenceSection::default(),
            sim: RunSection {
                initial_outputs: Some(vec![vec![0.0, 0.0]; 6]),
                ..RunSection::default()
            },
        }
    }

    fn dims(&self) -> (usize, usize) {
        let p = self.reference.segments.dim();
        let q = if self.plant.model == "benchmark" {
            2
        } else {
            self.plant.inputs.unwrap_or(p)
        };
        (p, q)
    }

    /// Controller parameters and initial input for each agent.
    pub fn agent_params(&self, agents: usize) -> Result<Vec<(ControllerParams, DVector<f64>)>> {
        reject_unknown(&self.controller.unknown, "controller")?;
        let (p, q) = self.dims();
        let mut base = ControllerParams::shipped(p, q);
        let mut base_u = DVector::zeros(q);
        self.controller.global.apply(&mut base, &mut base_u)?;
        let mut out = vec![(base, base_u); agents];
        for ov in &self.controller.overrides {
            reject_unknown(&ov.unknown, "controller override")?;
            if ov.agent == 0 || ov.agent > agents {
                return Err(Error::ConfigInvalid(format!(
                    "controller override for agent {} outside 1..={agents}",
                    ov.agent
                )));
            }
            let (params, u0) = &mut out[ov.agent - 1];
            ov.fields.apply(params, u0)?;
        }
        Ok(out)
    }

    fn attack_config(&self, agents: usize, p: usize) -> Result<AttackConfig> {
        let seed = self.attack.seed;
        if !self.attack.enabled {
            return Ok(AttackConfig::no_attack(agents, p, seed));
        }
        match &self.attack.success_prob {
            None => Ok(AttackConfig::no_attack(agents, p, seed)),
            Some(SuccessProb::PerAgent(v)) => {
                if v.len() != agents {
                    return Err(Error::ConfigInvalid(format!(
                        "attack.success_prob has {} entries for {agents} agents",
                        v.len()
                    )));
                }
                AttackConfig::per_agent(v, p, seed)
            }
            Some(SuccessProb::PerChannel(rows)) => {
                let m = matrix(rows, "attack.success_prob")?;
                if m.shape() != (agents, p) {
                    return Err(Error::ConfigInvalid(format!(
                        "attack.success_prob must be {agents}x{p}, got {}x{}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                AttackConfig::new(m, seed)
            }
        }
    }

    fn graph(&self) -> Result<SignedDigraph> {
        SignedDigraph::from_rows(&self.graph.adjacency, &self.graph.pinning)
    }

    /// Checks everything and converts to a [`Scenario`].
    pub fn resolve(&self) -> Result<Scenario> {
        let graph = self.graph()?;
        let agents = graph.n_agents();
        let partition = check_structural_balance(&graph)?;
        if !has_leader_spanning_tree(&graph) {
            return Err(Error::ConfigInvalid("no spanning tree rooted at the leader".into()));
        }
        let scaling = scaling_vector(&partition, self.graph.m, self.graph.n)?;
        let matrices = build_asymmetric_matrices(&graph, &scaling)?;

        self.reference.segments.validate()?;
        let (p, q) = self.dims();
        if self.plant.model == "benchmark" && p != 2 {
            return Err(Error::ConfigInvalid(format!("benchmark plant needs a 2-dimensional reference, got {p}")));
        }
        if self.plant.model == "benchmark" && self.plant.coefficients.agents() < agents {
            return Err(Error::ConfigInvalid(format!(
                "benchmark coefficients cover {} agents, graph has {agents}",
                self.plant.coefficients.agents()
            )));
        }

        let mut params = Vec::with_capacity(agents);
        let mut initial_inputs = Vec::with_capacity(agents);
        for (params_i, u0) in self.agent_params(agents)? {
            validate_params(&params_i)?;
            if params_i.phi_init.shape() != (p, q) {
                return Err(Error::ConfigInvalid(format!("phi_init must be {p}x{q}")));
            }
            if u0.len() != q || u0.iter().any(|v| !v.is_finite()) {
                return Err(Error::ConfigInvalid(format!("initial_input must be {q} finite values")));
            }
            params.push(params_i);
            initial_inputs.push(u0);
        }

        let attack = self.attack_config(agents, p)?;

        let sim = &self.sim;
        let initial_outputs = match &sim.initial_outputs {
            None => DMatrix::zeros(agents, p),
            Some(rows) => {
                let m = matrix(rows, "sim.initial_outputs")?;
                if m.shape() != (agents, p) {
                    return Err(Error::ConfigInvalid(format!("sim.initial_outputs must be {agents}x{p}")));
                }
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("initial outputs"));
                }
                m
            }
        };
        if !(sim.convergence_threshold > 0.0) || !(sim.phi_cap > 0.0) || !(sim.observer_error_cap > 0.0) {
            return Err(Error::ConfigInvalid("sim thresholds and caps must be positive".into()));
        }
        if !(sim.input_norm_eps >= 0.0) {
            return Err(Error::ConfigInvalid("sim.input_norm_eps must be nonnegative".into()));
        }

        Ok(Scenario {
            graph,
            partition,
            m: self.graph.m,
            n: self.graph.n,
            scaling,
            matrices,
            params,
            initial_inputs,
            attack,
            compensation: self.attack.compensation,
            schedule: self.reference.segments.clone(),
            steps: sim.steps,
            initial_outputs,
            outputs: p,
            inputs: q,
            input_norm_eps: sim.input_norm_eps,
        })
    }

    /// Builds the configured plant from `registry`.
    pub fn build_plant(&self, registry: &PlantRegistry) -> Result<Box<dyn PlantModel + Send + Sync>> {
        let (p, q) = self.dims();
        let plant = registry.build(
            &self.plant.model,
            &PlantSpec {
                coefficients: self.plant.coefficients.clone(),
                power_mode: self.plant.power_mode,
                outputs: p,
                inputs: q,
            },
        )?;
        if plant.outputs() != p || plant.inputs() != q {
            return Err(Error::ConfigInvalid(format!(
                "plant {:?} is {}x{}, config expects p={p}, q={q}",
                self.plant.model,
                plant.outputs(),
                plant.inputs()
            )));
        }
        Ok(plant)
    }

    /// Runs every check and collects all failures instead of stopping at
    /// the first one.
    pub fn check(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let graph = match self.graph() {
            Ok(g) => Some(g),
            Err(e) => {
                report.failures.push(e.to_string());
                None
            }
        };
        if let Some(graph) = &graph {
            match check_structural_balance(graph) {
                Ok(p) => report.partition = Some(p),
                Err(e) => report.failures.push(e.to_string()),
            }
            let tree = has_leader_spanning_tree(graph);
            report.spanning_tree = Some(tree);
            if !tree {
                report.failures.push("no spanning tree rooted at the leader".into());
            }
            if let Some(partition) = &report.partition {
                match scaling_vector(partition, self.graph.m, self.graph.n)
                    .and_then(|s| build_asymmetric_matrices(graph, &s))
                {
                    Ok(mats) => report.condition_number = Some(mats.condition_number()),
                    Err(e) => report.failures.push(e.to_string()),
                }
            }
            match self.agent_params(graph.n_agents()) {
                Ok(list) => {
                    for (i, (params, _)) in list.iter().enumerate() {
                        let res = validate_params(params).map_err(|e| e.to_string());
                        if let Err(msg) = &res {
                            report.failures.push(format!("agent {}: {msg}", i + 1));
                        }
                        report.params.push((i + 1, res));
                    }
                }
                Err(e) => report.failures.push(e.to_string()),
            }
        }
        // Anything the individual checks above did not already cover.
        if report.failures.is_empty() {
            if let Err(e) = self.resolve().and_then(|_| self.build_plant(&PlantRegistry::default())) {
                report.failures.push(e.to_string());
            }
        }
        report
    }
}
