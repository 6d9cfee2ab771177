//! Closed-loop simulation.
//!
//! Each step `k = 1..=T` runs, for all agents:
//!
//! 1. measure `ξ(k)` from the current outputs,
//! 2. sample the DoS mask and form the compensated `ξ^c(k)`,
//! 3. update `Φ̂(k)` from `ξ^c(k)` and `Δu(k−1)`,
//! 4. compute `u(k)`,
//! 5. advance the observer to `ξ̂(k+1)`,
//! 6. advance the plant to `y(k+1)`.
//!
//! The first non-finite value stops the run; the trace keeps every complete
//! step before it and records `(step, agent)` in [`SimTrace::divergence`].

use nalgebra::{DMatrix, DVector};

use crate::attack::{apply_attack, compensate, sample_mask, CompensationMode};
use crate::config::{Scenario, SimConfig};
use crate::controller::{upsilon_spectral_radius, AgentController, ControllerParams, PpjmEstimate};
use crate::error::Result;
use crate::graph::SignedDigraph;
use crate::nabce::{local_error, scaled_local_nabce};
use crate::plant::{PlantModel, PlantRegistry};
use crate::trace::{SimTrace, StepDiagnostics, TraceRow};

/// `ρ(Υ)` for the current estimate.
pub fn spectral_radius_diag(est: &PpjmEstimate, params: &ControllerParams) -> f64 {
    upsilon_spectral_radius(est, params)
}

/// Resolves `config`, builds its plant from the default registry and runs.
pub fn run_simulation(config: &SimConfig) -> Result<SimTrace> {
    let scenario = config.resolve()?;
    let plant = config.build_plant(&PlantRegistry::default())?;
    run_scenario(&scenario, plant.as_ref())
}

fn row_vec(m: &DMatrix<f64>, i: usize) -> DVector<f64> {
    m.row(i).transpose()
}

fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn ratio(num: f64, den: f64, eps: f64) -> Option<f64> {
    (den > eps).then(|| num / den)
}

/// Runs `scenario` against `plant`.
pub fn run_scenario(sc: &Scenario, plant: &dyn PlantModel) -> Result<SimTrace> {
    let agents = sc.graph.n_agents();
    let (p, q) = (sc.outputs, sc.inputs);
    let mut trace = SimTrace::empty(agents, p, q);
    trace.rows.reserve(sc.steps * agents);
    trace.diagnostics.reserve(sc.steps * agents);

    let mut controllers = sc
        .params
        .iter()
        .zip(&sc.initial_inputs)
        .map(|(params, u0)| AgentController::new(params.clone(), u0.clone()))
        .collect::<Result<Vec<_>>>()?;

    let mut y = sc.initial_outputs.clone();
    let mut held: Option<DMatrix<f64>> = None;
    // Per-agent (y(k), ξ(k), ‖Δu(k)‖) of the previous step, for the
    // Lipschitz diagnostics.
    let mut prev: Option<(DMatrix<f64>, DMatrix<f64>, Vec<f64>)> = None;

    for k in 1..=sc.steps {
        let y_d = sc.schedule.value_at(k);
        let xi = scaled_local_nabce(&sc.matrices, &sc.scaling, &y, &y_d)?;
        let e_y = local_error(&y, &sc.scaling, &y_d)?;

        let mask = sample_mask(&sc.attack, k as u64);
        let xi_c = match sc.compensation {
            CompensationMode::Disabled => apply_attack(&mask, &xi)?,
            _ => compensate(&mask, &xi, held.as_ref().unwrap_or(&xi))?,
        };
        held = Some(match sc.compensation {
            CompensationMode::Strict => xi.clone(),
            _ => xi_c.clone(),
        });

        if let Some((y_prev, xi_prev, du_prev)) = &prev {
            let base = (k - 2) * agents;
            for i in 0..agents {
                let eps = sc.params[i].reset_eps;
                let dy = (y.row(i) - y_prev.row(i)).norm();
                let dxi = (xi.row(i) - xi_prev.row(i)).norm();
                let diag = &mut trace.diagnostics[base + i];
                diag.output_lipschitz = ratio(dy, du_prev[i], eps);
                diag.nabce_lipschitz = ratio(dxi, du_prev[i], eps);
            }
        }

        let mut step_rows = Vec::with_capacity(agents);
        let mut inputs = Vec::with_capacity(agents);
        let mut du_norms = Vec::with_capacity(agents);
        for (i, ctl) in controllers.iter_mut().enumerate() {
            let out = match ctl.step(&row_vec(&xi_c, i)) {
                Ok(out) => out,
                Err(_) => {
                    trace.divergence = Some((k, i + 1));
                    return Ok(trace);
                }
            };
            let rho = spectral_radius_diag(&out.estimate, ctl.params());
            du_norms.push(ctl.control().delta_u().norm());
            step_rows.push((
                TraceRow {
                    k,
                    agent: i + 1,
                    y: y.row(i).iter().copied().collect(),
                    u: to_vec(&out.u),
                    xi: xi.row(i).iter().copied().collect(),
                    xi_c: xi_c.row(i).iter().copied().collect(),
                    xi_hat: to_vec(&out.xi_hat),
                    e_y: e_y.row(i).iter().copied().collect(),
                    mask: (0..p).map(|r| mask.h(i, r)).collect(),
                    phi_norm: out.estimate.norm(),
                    rho_upsilon: rho,
                },
                StepDiagnostics {
                    output_lipschitz: None,
                    nabce_lipschitz: None,
                    input_above_eps: out.u.norm() > sc.input_norm_eps,
                },
            ));
            inputs.push(out.u);
        }
        for (row, diag) in step_rows {
            trace.rows.push(row);
            trace.diagnostics.push(diag);
        }

        let mut y_next = DMatrix::zeros(agents, p);
        for (i, u) in inputs.iter().enumerate() {
            match plant.step(i, &row_vec(&y, i), u, k) {
                Ok(next) if next.len() == p && next.iter().all(|v| v.is_finite()) => {
                    y_next.set_row(i, &next.transpose());
                }
                _ => {
                    trace.divergence = Some((k, i + 1));
                    return Ok(trace);
                }
            }
        }
        prev = Some((y, xi, du_norms));
        y = y_next;
    }
    Ok(trace)
}

/// Empirical input-increment ratios `max_k ‖Δu_j(k)‖ / ‖Δu_i(k)‖` for every
/// edge `j → i`, over steps with `‖Δu_i(k)‖ > eps`. Zero off the edge set.
pub fn input_increment_ratios(trace: &SimTrace, graph: &SignedDigraph, eps: f64) -> DMatrix<f64> {
    let n = trace.agents;
    let mut out = DMatrix::zeros(n, n);
    let du = |k: usize, i: usize| -> f64 {
        let a = &trace.row(k, i).u;
        let b = &trace.row(k - 1, i).u;
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    };
    for k in 2..=trace.steps() {
        for i in 0..n {
            let di = du(k, i);
            if di <= eps {
                continue;
            }
            for j in (0..n).filter(|&j| graph.has_edge(i, j)) {
                out[(i, j)] = f64::max(out[(i, j)], du(k, j) / di);
            }
        }
    }
    out
}

/// Largest finite Lipschitz ratios `(output, NABCE)` over the run.
pub fn max_lipschitz_ratios(trace: &SimTrace) -> (f64, f64) {
    trace.diagnostics.iter().fold((0.0, 0.0), |(a, b), d| {
        (
            d.output_lipschitz.map_or(a, |v| a.max(v)),
            d.nabce_lipschitz.map_or(b, |v| b.max(v)),
        )
    })
}
