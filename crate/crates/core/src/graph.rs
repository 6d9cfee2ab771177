//! Signed communication digraphs.
//!
//! Follower `i` receives from follower `j` when `a_ij ≠ 0` (row `i` of the
//! adjacency lists the in-neighbours of `i`). The virtual leader reaches
//! follower `i` when the pinning gain `g_i > 0`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_mismatch, Error, Result};
use crate::linalg;

/// Weights with magnitude at or below this are not edges.
pub const EDGE_EPS: f64 = 1e-12;

/// Condition number of `L̄ + G` above which validation warns.
pub const ILL_CONDITIONED: f64 = 1e8;

#[derive(Debug, Clone, PartialEq)]
pub struct SignedDigraph {
    adjacency: DMatrix<f64>,
    pinning: DVector<f64>,
}

impl SignedDigraph {
    pub fn new(adjacency: DMatrix<f64>, pinning: DVector<f64>) -> Result<Self> {
        let n = adjacency.nrows();
        if n == 0 {
            return Err(Error::InvalidGraph("graph needs at least one agent".into()));
        }
        if !adjacency.is_square() {
            return Err(dim_mismatch(
                "adjacency",
                format!("{n}x{n}"),
                format!("{}x{}", n, adjacency.ncols()),
            ));
        }
        if pinning.len() != n {
            return Err(dim_mismatch("pinning", n, pinning.len()));
        }
        if adjacency.iter().chain(pinning.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidGraph("non-finite weight".into()));
        }
        if let Some(i) = (0..n).find(|&i| adjacency[(i, i)] != 0.0) {
            return Err(Error::InvalidGraph(format!("self-edge at agent {}", i + 1)));
        }
        if let Some(i) = pinning.iter().position(|&g| g < 0.0) {
            return Err(Error::InvalidGraph(format!(
                "negative pinning gain at agent {}",
                i + 1
            )));
        }
        Ok(Self { adjacency, pinning })
    }

    /// Builds a graph from a dense row-major adjacency and a pinning vector.
    pub fn from_rows(rows: &[Vec<f64>], pinning: &[f64]) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(dim_mismatch("adjacency row", n, bad.len()));
        }
        let adjacency = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Self::new(adjacency, DVector::from_column_slice(pinning))
    }

    pub fn n_agents(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn pinning(&self) -> &DVector<f64> {
        &self.pinning
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[(i, j)]
    }

    /// True when `j → i` is an edge.
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[(i, j)].abs() > EDGE_EPS
    }

    pub fn is_pinned(&self, i: usize) -> bool {
        self.pinning[i] > EDGE_EPS
    }
}

/// Membership of a vertex in the two antagonistic camps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Group {
    One,
    Two,
}

impl Group {
    /// `1` or `2`.
    pub fn label(self) -> u8 {
        match self {
            Group::One => 1,
            Group::Two => 2,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Group::One => Group::Two,
            Group::Two => Group::One,
        }
    }

    /// Gauge sign: `+1` for the first camp, `-1` for the second.
    pub fn sign(self) -> f64 {
        match self {
            Group::One => 1.0,
            Group::Two => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BalancePartition {
    groups: Vec<Group>,
}

impl BalancePartition {
    pub fn new(groups: Vec<Group>) -> Self {
        Self { groups }
    }

    /// Builds a partition from `1`/`2` labels.
    pub fn from_labels(labels: &[u8]) -> Result<Self> {
        labels
            .iter()
            .map(|&l| match l {
                1 => Ok(Group::One),
                2 => Ok(Group::Two),
                other => Err(Error::InvalidGraph(format!("partition label {other}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn group(&self, i: usize) -> Group {
        self.groups[i]
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn labels(&self) -> Vec<u8> {
        self.groups.iter().map(|g| g.label()).collect()
    }

    /// 1-based indices of the members of `group`.
    pub fn members(&self, group: Group) -> Vec<usize> {
        self.groups
            .iter()
            .enumerate()
            .filter(|(_, &g)| g == group)
            .map(|(i, _)| i + 1)
            .collect()
    }

    /// Checks the edge-sign certificate: intra-camp weights are `≥ 0` and
    /// inter-camp weights are `≤ 0`.
    pub fn certifies(&self, graph: &SignedDigraph) -> bool {
        let n = graph.n_agents();
        if self.groups.len() != n {
            return false;
        }
        (0..n).all(|i| {
            (0..n).all(|j| {
                let a = graph.weight(i, j);
                if a.abs() <= EDGE_EPS {
                    true
                } else if self.groups[i] == self.groups[j] {
                    a >= 0.0
                } else {
                    a <= 0.0
                }
            })
        })
    }
}

/// Finds the two-camp partition of a structurally balanced graph.
///
/// Signs are propagated over the undirected union of the edge pattern. Each
/// weakly connected component is rooted at its lowest-indexed vertex, which is
/// placed in the first camp; in particular vertex 1 is always in the first
/// camp.
pub fn check_structural_balance(graph: &SignedDigraph) -> Result<BalancePartition> {
    let n = graph.n_agents();
    let a = graph.adjacency();

    // Undirected edge signs: +1, -1 or 0 (no edge).
    let mut sign = vec![vec![0i8; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let (aij, aji) = (a[(i, j)], a[(j, i)]);
            let sij = edge_sign(aij);
            let sji = edge_sign(aji);
            if sij * sji < 0 {
                return Err(Error::InconsistentSigns { i: i + 1, j: j + 1 });
            }
            let s = if sij != 0 { sij } else { sji };
            sign[i][j] = s;
            sign[j][i] = s;
        }
    }

    let mut groups: Vec<Option<Group>> = vec![None; n];
    let mut queue = VecDeque::new();
    for root in 0..n {
        if groups[root].is_some() {
            continue;
        }
        groups[root] = Some(Group::One);
        queue.push_back(root);
        while let Some(v) = queue.pop_front() {
            let gv = groups[v].expect("queued vertices are labelled");
            for w in 0..n {
                let expected = match sign[v][w] {
                    0 => continue,
                    s if s > 0 => gv,
                    _ => gv.flipped(),
                };
                match groups[w] {
                    None => {
                        groups[w] = Some(expected);
                        queue.push_back(w);
                    }
                    Some(gw) if gw != expected => {
                        return Err(Error::NotBalanced(v + 1, w + 1));
                    }
                    Some(_) => {}
                }
            }
        }
    }

    Ok(BalancePartition::new(
        groups.into_iter().map(|g| g.expect("all labelled")).collect(),
    ))
}

fn edge_sign(w: f64) -> i8 {
    if w > EDGE_EPS {
        1
    } else if w < -EDGE_EPS {
        -1
    } else {
        0
    }
}

/// True iff every follower is reachable from the virtual leader.
pub fn has_leader_spanning_tree(graph: &SignedDigraph) -> bool {
    let n = graph.n_agents();
    let mut seen = vec![false; n];
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| graph.is_pinned(i)).collect();
    for &i in &queue {
        seen[i] = true;
    }
    while let Some(j) = queue.pop_front() {
        for i in 0..n {
            if !seen[i] && graph.has_edge(i, j) {
                seen[i] = true;
                queue.push_back(i);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Per-agent output scaling `s_i`: `m` in the first camp, `-n` in the second.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingVector {
    values: DVector<f64>,
}

impl ScalingVector {
    /// Wraps arbitrary scaling entries; all must be finite and nonzero.
    pub fn from_entries(values: &[f64]) -> Result<Self> {
        if let Some(i) = values.iter().position(|&v| v == 0.0) {
            return Err(Error::ZeroScaling(i + 1));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("scaling vector"));
        }
        Ok(Self {
            values: DVector::from_column_slice(values),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.values
    }
}

pub fn scaling_vector(partition: &BalancePartition, m: f64, n: f64) -> Result<ScalingVector> {
    // `!(x > 0)` also rejects NaN.
    if !(m > 0.0) {
        return Err(Error::NonPositiveCoefficient { name: "m", value: m });
    }
    if !(n > 0.0) {
        return Err(Error::NonPositiveCoefficient { name: "n", value: n });
    }
    let values: Vec<f64> = partition
        .groups()
        .iter()
        .map(|g| match g {
            Group::One => m,
            Group::Two => -n,
        })
        .collect();
    ScalingVector::from_entries(&values)
}

/// Scaled graph matrices: `ā_ij = a_ij / s_j`, `d̄_i = Σ_j ā_ij`,
/// `L̄ = D̄ − Ā` and `G = diag(g)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymmetricMatrices {
    pub scaled_adjacency: DMatrix<f64>,
    pub in_degree: DVector<f64>,
    pub laplacian: DMatrix<f64>,
    pub pinning: DVector<f64>,
}

impl AsymmetricMatrices {
    pub fn n_agents(&self) -> usize {
        self.laplacian.nrows()
    }

    /// `L̄ + G`.
    pub fn laplacian_plus_pinning(&self) -> DMatrix<f64> {
        &self.laplacian + DMatrix::from_diagonal(&self.pinning)
    }

    /// 2-norm condition number of `L̄ + G` (infinite when singular).
    pub fn condition_number(&self) -> f64 {
        let (lo, hi) = linalg::singular_value_range(&self.laplacian_plus_pinning());
        if lo == 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }

    pub fn min_singular_value(&self) -> f64 {
        linalg::singular_value_range(&self.laplacian_plus_pinning()).0
    }
}

pub fn build_asymmetric_matrices(
    graph: &SignedDigraph,
    s: &ScalingVector,
) -> Result<AsymmetricMatrices> {
    let n = graph.n_agents();
    if s.len() != n {
        return Err(dim_mismatch("scaling vector", n, s.len()));
    }
    if let Some(j) = (0..n).find(|&j| s.get(j) == 0.0) {
        return Err(Error::ZeroScaling(j + 1));
    }
    let a = graph.adjacency();
    let scaled_adjacency = DMatrix::from_fn(n, n, |i, j| {
        if graph.has_edge(i, j) {
            a[(i, j)] / s.get(j)
        } else {
            0.0
        }
    });
    let in_degree = DVector::from_fn(n, |i, _| scaled_adjacency.row(i).sum());
    let laplacian = DMatrix::from_diagonal(&in_degree) - &scaled_adjacency;
    Ok(AsymmetricMatrices {
        scaled_adjacency,
        in_degree,
        laplacian,
        pinning: graph.pinning().clone(),
    })
}
