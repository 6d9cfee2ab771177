//! Summary metrics computed from a trace.
//!
//! Everything here reads only the CSV columns, so metrics recomputed from a
//! stored trace match the ones produced at run time.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::ReferenceSchedule;
use crate::trace::SimTrace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentPhaseMetrics {
    pub agent: usize,
    /// Mean of `‖e_y(k)‖` over the tail window.
    pub tail_mean_error: f64,
    pub tail_max_error: f64,
    /// Per-channel mean output over the tail window.
    pub tail_mean_output: Vec<f64>,
    /// First step after which `‖e_y‖` stays below the threshold for the rest
    /// of the phase.
    pub convergence_step: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseMetrics {
    pub phase: usize,
    pub first_step: usize,
    pub last_step: usize,
    pub reference: Vec<f64>,
    pub agents: Vec<AgentPhaseMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryMetrics {
    pub steps: usize,
    pub tail: usize,
    pub threshold: f64,
    pub phases: Vec<PhaseMetrics>,
    pub max_phi_norm: f64,
    pub max_phi_norm_per_agent: Vec<f64>,
    pub max_observer_error: f64,
    pub max_observer_error_per_agent: Vec<f64>,
    /// Fraction of `(k, agent)` rows with `ρ(Υ) < 1`.
    pub rho_below_one_fraction: f64,
    /// `attack_rate[i][r]`: fraction of steps channel `r` of agent `i` was blocked.
    pub attack_rate: Vec<Vec<f64>>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn compute_metrics(
    trace: &SimTrace,
    schedule: &ReferenceSchedule,
    tail: usize,
    threshold: f64,
) -> Result<SummaryMetrics> {
    if tail == 0 {
        return Err(Error::ConfigInvalid("tail window must be at least one step".into()));
    }
    if trace.steps() > 0 && schedule.dim() != trace.outputs {
        return Err(Error::ConfigInvalid(format!(
            "reference has {} channels, trace has {}",
            schedule.dim(),
            trace.outputs
        )));
    }
    let steps = trace.steps();
    let agents = trace.agents;
    let p = trace.outputs;

    let phase_ranges = schedule.phases(steps);
    for &(first, last) in &phase_ranges {
        let len = last - first + 1;
        if tail > len {
            return Err(Error::WindowTooLong { tail, phase_len: len });
        }
    }

    let mut phases = Vec::with_capacity(phase_ranges.len());
    for (idx, &(first, last)) in phase_ranges.iter().enumerate() {
        let tail_first = last + 1 - tail;
        let mut per_agent = Vec::with_capacity(agents);
        for i in 0..agents {
            let errors: Vec<f64> = (first..=last).map(|k| norm(&trace.row(k, i).e_y)).collect();
            let tail_errors = &errors[tail_first - first..];
            let tail_mean_error = tail_errors.iter().sum::<f64>() / tail as f64;
            let tail_max_error = tail_errors.iter().copied().fold(0.0, f64::max);
            let tail_mean_output = (0..p)
                .map(|r| (tail_first..=last).map(|k| trace.row(k, i).y[r]).sum::<f64>() / tail as f64)
                .collect();
            let convergence_step = match errors.iter().rposition(|&e| !(e < threshold)) {
                None => Some(first),
                Some(pos) if pos + 1 < errors.len() => Some(first + pos + 1),
                Some(_) => None,
            };
            per_agent.push(AgentPhaseMetrics {
                agent: i + 1,
                tail_mean_error,
                tail_max_error,
                tail_mean_output,
                convergence_step,
            });
        }
        phases.push(PhaseMetrics {
            phase: idx + 1,
            first_step: first,
            last_step: last,
            reference: schedule.value_at(first).iter().copied().collect(),
            agents: per_agent,
        });
    }

    let mut max_phi = vec![0.0_f64; agents];
    let mut max_obs = vec![0.0_f64; agents];
    let mut blocked = vec![vec![0usize; p]; agents];
    let mut contracting = 0usize;
    for row in &trace.rows {
        let i = row.agent - 1;
        max_phi[i] = max_phi[i].max(row.phi_norm);
        max_obs[i] = max_obs[i].max(diff_norm(&row.xi, &row.xi_hat));
        for (r, &h) in row.mask.iter().enumerate() {
            blocked[i][r] += usize::from(h == 0);
        }
        contracting += usize::from(row.rho_upsilon < 1.0);
    }
    let rows = trace.rows.len();
    Ok(SummaryMetrics {
        steps,
        tail,
        threshold,
        phases,
        max_phi_norm: max_phi.iter().copied().fold(0.0, f64::max),
        max_phi_norm_per_agent: max_phi,
        max_observer_error: max_obs.iter().copied().fold(0.0, f64::max),
        max_observer_error_per_agent: max_obs,
        rho_below_one_fraction: if rows == 0 { 1.0 } else { contracting as f64 / rows as f64 },
        attack_rate: blocked
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|b| if steps == 0 { 0.0 } else { b as f64 / steps as f64 })
                    .collect()
            })
            .collect(),
    })
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

/// One line per phase: worst tail-mean error and the agent it belongs to.
pub fn phase_summary_lines(metrics: &SummaryMetrics) -> Vec<String> {
    metrics
        .phases
        .iter()
        .map(|ph| {
            let worst = ph
                .agents
                .iter()
                .max_by(|a, b| a.tail_mean_error.total_cmp(&b.tail_mean_error));
            let (err, agent) = worst.map_or((0.0, 0), |a| (a.tail_mean_error, a.agent));
            format!(
                "phase {} (k={}..{}, y_d={}): worst tail-mean |e_y| {err:.4e} (agent {agent})",
                ph.phase,
                ph.first_step,
                ph.last_step,
                fmt_vec(&ph.reference)
            )
        })
        .collect()
}

/// Plain-text report.
pub fn render_report(metrics: &SummaryMetrics) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "steps {}  tail {}  convergence threshold {}",
        metrics.steps, metrics.tail, metrics.threshold
    );
    for ph in &metrics.phases {
        let _ = writeln!(
            s,
            "\nphase {}  k={}..{}  y_d={}",
            ph.phase,
            ph.first_step,
            ph.last_step,
            fmt_vec(&ph.reference)
        );
        for a in &ph.agents {
            let conv = a.convergence_step.map_or_else(|| "never".to_string(), |k| k.to_string());
            let _ = writeln!(
                s,
                "  agent {:>2}  tail mean |e_y| {:.4e}  tail max {:.4e}  tail mean y {}  converged at {conv}",
                a.agent,
                a.tail_mean_error,
                a.tail_max_error,
                fmt_vec(&a.tail_mean_output)
            );
        }
    }
    let _ = writeln!(s, "\nmax |phi_hat| {:.4}", metrics.max_phi_norm);
    let _ = writeln!(s, "max |xi - xi_hat| {:.4}", metrics.max_observer_error);
    let _ = writeln!(s, "rho(Upsilon) < 1 on {:.2}% of steps", 100.0 * metrics.rho_below_one_fraction);
    let _ = writeln!(s, "attack rate per channel:");
    for (i, rates) in metrics.attack_rate.iter().enumerate() {
        let _ = writeln!(s, "  agent {:>2}  {}", i + 1, fmt_vec(rates));
    }
    s
}
