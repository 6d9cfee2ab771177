//! Simulation trace and its CSV form.
//!
//! One row per `(k, agent)`, ordered by step then agent. Columns:
//!
//! ```text
//! k,agent,y_1..y_p,u_1..u_q,xi_1..xi_p,xi_c_1..xi_c_p,xi_hat_1..xi_hat_p,
//! e_y_1..e_y_p,mask_1..mask_p,phi_norm,rho_upsilon
//! ```
//!
//! Floats are written as `{:.16e}` (17 significant digits), which round-trips
//! every `f64` exactly, so a trace read back from disk equals the one written.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Logged state of agent `agent` (1-based) at step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub agent: usize,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub xi: Vec<f64>,
    pub xi_c: Vec<f64>,
    pub xi_hat: Vec<f64>,
    pub e_y: Vec<f64>,
    pub mask: Vec<u8>,
    pub phi_norm: f64,
    pub rho_upsilon: f64,
}

/// Diagnostics kept in memory only.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepDiagnostics {
    /// `‖Δy(k+1)‖ / ‖Δu(k)‖` when `‖Δu(k)‖ > reset_eps`.
    pub output_lipschitz: Option<f64>,
    /// `‖Δξ(k+1)‖ / ‖Δu(k)‖` when `‖Δu(k)‖ > reset_eps`.
    pub nabce_lipschitz: Option<f64>,
    /// `‖u(k)‖ > input_norm_eps`.
    pub input_above_eps: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub agents: usize,
    pub outputs: usize,
    pub inputs: usize,
    /// Step-major: `rows[(k − 1) · agents + i]`.
    pub rows: Vec<TraceRow>,
    /// Same indexing as `rows`; empty for traces read from CSV.
    pub diagnostics: Vec<StepDiagnostics>,
    /// `(step, agent)` of the first non-finite value, agent 1-based.
    pub divergence: Option<(usize, usize)>,
}

impl SimTrace {
    pub fn empty(agents: usize, outputs: usize, inputs: usize) -> Self {
        Self {
            agents,
            outputs,
            inputs,
            rows: Vec::new(),
            diagnostics: Vec::new(),
            divergence: None,
        }
    }

    /// Number of complete steps.
    pub fn steps(&self) -> usize {
        self.rows.len().checked_div(self.agents).unwrap_or(0)
    }

    /// Row of `agent` (0-based) at step `k` (1-based).
    pub fn row(&self, k: usize, agent: usize) -> &TraceRow {
        &self.rows[(k - 1) * self.agents + agent]
    }

    pub fn agent_rows(&self, agent: usize) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().skip(agent).step_by(self.agents.max(1))
    }

    /// `Err(Diverged)` if the run stopped early.
    pub fn into_result(self) -> Result<Self> {
        match self.divergence {
            Some((step, agent)) => Err(Error::Diverged { step, agent }),
            None => Ok(self),
        }
    }
}

pub fn header(p: usize, q: usize) -> String {
    let mut cols = vec!["k".to_string(), "agent".to_string()];
    for (prefix, n) in [("y", p), ("u", q), ("xi", p), ("xi_c", p), ("xi_hat", p), ("e_y", p), ("mask", p)] {
        cols.extend((1..=n).map(|r| format!("{prefix}_{r}")));
    }
    cols.push("phi_norm".into());
    cols.push("rho_upsilon".into());
    cols.join(",")
}

fn push_floats(line: &mut String, xs: &[f64]) {
    use std::fmt::Write as _;
    for x in xs {
        let _ = write!(line, ",{x:.16e}");
    }
}

pub fn write_csv<W: Write>(trace: &SimTrace, mut out: W) -> Result<()> {
    writeln!(out, "{}", header(trace.outputs, trace.inputs))?;
    let mut line = String::new();
    for row in &trace.rows {
        line.clear();
        line.push_str(&format!("{},{}", row.k, row.agent));
        for v in [&row.y, &row.u, &row.xi, &row.xi_c, &row.xi_hat, &row.e_y] {
            push_floats(&mut line, v);
        }
        for m in &row.mask {
            line.push(',');
            line.push(if *m == 1 { '1' } else { '0' });
        }
        push_floats(&mut line, &[row.phi_norm, row.rho_upsilon]);
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn write_csv_file(trace: &SimTrace, path: &std::path::Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_csv(trace, &mut w)?;
    w.flush()?;
    Ok(())
}

fn dims_from_header(line: &str) -> Result<(usize, usize)> {
    let count = |prefix: &str| {
        line.split(',')
            .filter(|c| {
                c.strip_prefix(prefix)
                    .and_then(|rest| rest.strip_prefix('_'))
                    .is_some_and(|idx| idx.parse::<usize>().is_ok())
            })
            .count()
    };
    let (p, q) = (count("y"), count("u"));
    if p == 0 || q == 0 || line.trim_end() != header(p, q) {
        return Err(Error::MalformedTrace(format!("unexpected header {:?}", line.trim_end())));
    }
    Ok((p, q))
}

/// Parses a trace written by [`write_csv`]. Every line must be
/// newline-terminated and the `(k, agent)` grid complete and in order.
pub fn read_csv<R: Read>(mut input: R) -> Result<SimTrace> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    if !text.is_empty() && !text.ends_with('\n') {
        return Err(Error::MalformedTrace("last line is not terminated".into()));
    }
    let mut lines = text.lines();
    let head = lines
        .next()
        .ok_or_else(|| Error::MalformedTrace("empty file".into()))?;
    let (p, q) = dims_from_header(head)?;
    let width = 2 + q + 6 * p + 2;

    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != width {
            return Err(Error::MalformedTrace(format!(
                "line {lineno}: {} columns, expected {width}",
                cells.len()
            )));
        }
        let int = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::MalformedTrace(format!("line {lineno}: bad integer {s:?}")))
        };
        let float = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::MalformedTrace(format!("line {lineno}: bad number {s:?}")))
        };
        let floats = |range: std::ops::Range<usize>| cells[range].iter().map(|c| float(c)).collect::<Result<Vec<_>>>();
        let mut at = 2;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let (ry, ru, rxi, rxc, rxh, rey, rmask) = (take(p), take(q), take(p), take(p), take(p), take(p), take(p));
        let mask = cells[rmask]
            .iter()
            .map(|c| match *c {
                "0" => Ok(0),
                "1" => Ok(1),
                other => Err(Error::MalformedTrace(format!("line {lineno}: bad mask {other:?}"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        rows.push(TraceRow {
            k: int(cells[0])?,
            agent: int(cells[1])?,
            y: floats(ry)?,
            u: floats(ru)?,
            xi: floats(rxi)?,
            xi_c: floats(rxc)?,
            xi_hat: floats(rxh)?,
            e_y: floats(rey)?,
            mask,
            phi_norm: float(cells[width - 2])?,
            rho_upsilon: float(cells[width - 1])?,
        });
    }

    let agents = rows.iter().take_while(|r| r.k == 1).count();
    if rows.is_empty() {
        return Ok(SimTrace::empty(0, p, q));
    }
    if agents == 0 || rows.len() % agents != 0 {
        return Err(Error::MalformedTrace(format!(
            "{} rows do not form a complete step x agent grid",
            rows.len()
        )));
    }
    for (idx, row) in rows.iter().enumerate() {
        let (k, agent) = (idx / agents + 1, idx % agents + 1);
        if row.k != k || row.agent != agent {
            return Err(Error::MalformedTrace(format!(
                "row {} is (k={}, agent={}), expected (k={k}, agent={agent})",
                idx + 1,
                row.k,
                row.agent
            )));
        }
    }
    Ok(SimTrace {
        agents,
        outputs: p,
        inputs: q,
        rows,
        diagnostics: Vec::new(),
        divergence: None,
    })
}

pub fn read_csv_file(path: &std::path::Path) -> Result<SimTrace> {
    read_csv(std::fs::File::open(path)?)
}
