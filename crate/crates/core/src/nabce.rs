//! Neighbourhood asymmetric bipartite consensus error (NABCE).
//!
//! Outputs, errors and NABCE values are `N × p` matrices whose row `i`
//! belongs to agent `i`. Three independent computations are provided:
//!
//! * [`local_nabce`] branches on camp membership and edge signs, using only
//!   the raw weights `a_ij`, the coefficients `m`, `n` and the partition.
//! * [`scaled_local_nabce`] sums `ā_ij (ȳ_j − ȳ_i) + g_i (y_d − ȳ_i)` with
//!   the scaled weights and outputs `ȳ_i = y_i / s_i`.
//! * [`global_nabce`] evaluates `−((L̄ + G) ⊗ I_p) e_y` as the row-block
//!   product `−(L̄ + G) E`.
//!
//! For structurally balanced graphs all three agree to rounding.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_mismatch, Error, Result};
use crate::graph::{AsymmetricMatrices, BalancePartition, Group, ScalingVector, SignedDigraph};

/// `N × p` agent outputs, one row per agent.
pub type OutputMatrix = DMatrix<f64>;
/// `N × p` NABCE values, one row per agent.
pub type NabceMatrix = DMatrix<f64>;
/// `N × p` local consensus errors `e_{y_i} = y_i / s_i − y_d`.
pub type ConsensusError = DMatrix<f64>;

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_rows(what: &'static str, y: &DMatrix<f64>, n: usize, p: usize) -> Result<()> {
    if y.nrows() != n || y.ncols() != p {
        return Err(dim_mismatch(
            what,
            format!("{n}x{p}"),
            format!("{}x{}", y.nrows(), y.ncols()),
        ));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    Ok(())
}

/// `e_{y_i} = y_i / s_i − y_d` for every agent.
pub fn local_error(y: &OutputMatrix, s: &ScalingVector, y_d: &DVector<f64>) -> Result<ConsensusError> {
    check_rows("outputs", y, s.len(), y_d.len())?;
    if let Some(i) = (0..s.len()).find(|&i| s.get(i) == 0.0) {
        return Err(Error::ZeroScaling(i + 1));
    }
    Ok(DMatrix::from_fn(y.nrows(), y.ncols(), |i, r| {
        y[(i, r)] / s.get(i) - y_d[r]
    }))
}

/// Partition-branched NABCE.
///
/// For agent `i` with own coefficient `s_i ∈ {m, −n}`:
///
/// ```text
/// ξ_i = Σ_{j∈𝒱₁} (a_ij/m²)(y_j − c_i¹ sgn(a_ij) y_i)
///     + Σ_{o∈𝒱₂} (a_io/n²)(y_o − c_i² sgn(a_io) y_i)
///     + g_i (y_d − c_iᵍ sgn(g_i) y_i)
/// ```
///
/// with `(c¹, c², cᵍ) = (1, n/m, 1/m)` for `i ∈ 𝒱₁` and
/// `(m/n, 1, −1/n)` for `i ∈ 𝒱₂`. Sums run over all vertices; non-edges
/// carry zero weight.
pub fn local_nabce(
    graph: &SignedDigraph,
    partition: &BalancePartition,
    m: f64,
    n: f64,
    y: &OutputMatrix,
    y_d: &DVector<f64>,
) -> Result<NabceMatrix> {
    let agents = graph.n_agents();
    let p = y_d.len();
    check_rows("outputs", y, agents, p)?;
    if partition.len() != agents {
        return Err(dim_mismatch("partition", agents, partition.len()));
    }
    if !(m > 0.0) {
        return Err(Error::NonPositiveCoefficient { name: "m", value: m });
    }
    if !(n > 0.0) {
        return Err(Error::NonPositiveCoefficient { name: "n", value: n });
    }

    let mut xi = DMatrix::zeros(agents, p);
    for i in 0..agents {
        let (c_one, c_two, c_pin) = match partition.group(i) {
            Group::One => (1.0, n / m, 1.0 / m),
            Group::Two => (m / n, 1.0, -1.0 / n),
        };
        let g = graph.pinning()[i];
        for r in 0..p {
            let yi = y[(i, r)];
            let mut acc = 0.0;
            for j in 0..agents {
                if !graph.has_edge(i, j) {
                    continue;
                }
                let a = graph.weight(i, j);
                acc += match partition.group(j) {
                    Group::One => a / (m * m) * (y[(j, r)] - c_one * sgn(a) * yi),
                    Group::Two => a / (n * n) * (y[(j, r)] - c_two * sgn(a) * yi),
                };
            }
            acc += g * (y_d[r] - c_pin * sgn(g) * yi);
            xi[(i, r)] = acc;
        }
    }
    Ok(xi)
}

/// NABCE from the scaled weights: `Σ_j ā_ij (ȳ_j − ȳ_i) + g_i (y_d − ȳ_i)`.
pub fn scaled_local_nabce(
    matrices: &AsymmetricMatrices,
    s: &ScalingVector,
    y: &OutputMatrix,
    y_d: &DVector<f64>,
) -> Result<NabceMatrix> {
    let agents = matrices.n_agents();
    if s.len() != agents {
        return Err(dim_mismatch("scaling vector", agents, s.len()));
    }
    let p = y_d.len();
    check_rows("outputs", y, agents, p)?;
    if let Some(i) = (0..agents).find(|&i| s.get(i) == 0.0) {
        return Err(Error::ZeroScaling(i + 1));
    }
    let a_bar = &matrices.scaled_adjacency;
    let mut xi = DMatrix::zeros(agents, p);
    for i in 0..agents {
        for r in 0..p {
            let yi_bar = y[(i, r)] / s.get(i);
            let neighbours: f64 = (0..agents)
                .filter(|&j| a_bar[(i, j)] != 0.0)
                .map(|j| a_bar[(i, j)] * (y[(j, r)] / s.get(j) - yi_bar))
                .sum();
            xi[(i, r)] = neighbours + matrices.pinning[i] * (y_d[r] - yi_bar);
        }
    }
    Ok(xi)
}

/// Global form `ξ = −((L̄ + G) ⊗ I_p) e_y`, evaluated blockwise as
/// `−(L̄ + G) E` without forming the Kronecker product.
pub fn global_nabce(matrices: &AsymmetricMatrices, e_y: &ConsensusError) -> Result<NabceMatrix> {
    let agents = matrices.n_agents();
    if e_y.nrows() != agents {
        return Err(dim_mismatch("consensus error rows", agents, e_y.nrows()));
    }
    Ok(-(matrices.laplacian_plus_pinning() * e_y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_asymmetric_matrices, check_structural_balance, scaling_vector};

    fn setup(
        n: usize,
        edges: &[(usize, usize, f64)],
        pinning: &[f64],
        m: f64,
        nn: f64,
    ) -> (SignedDigraph, BalancePartition, ScalingVector, AsymmetricMatrices) {
        let mut a = DMatrix::zeros(n, n);
        for &(i, j, w) in edges {
            a[(i - 1, j - 1)] = w;
        }
        let g = SignedDigraph::new(a, DVector::from_column_slice(pinning)).unwrap();
        let p = check_structural_balance(&g).unwrap();
        let s = scaling_vector(&p, m, nn).unwrap();
        let mats = build_asymmetric_matrices(&g, &s).unwrap();
        (g, p, s, mats)
    }

    #[test]
    fn consensus_outputs_have_zero_error() {
        let (g, p, s, mats) = setup(3, &[(2, 1, 1.0), (3, 2, -2.0)], &[1.0, 0.0, 0.0], 2.0, 4.0);
        let y_d = DVector::from_vec(vec![5.0, -1.0]);
        let y = DMatrix::from_fn(3, 2, |i, r| s.get(i) * y_d[r]);
        assert_eq!(local_error(&y, &s, &y_d).unwrap(), DMatrix::zeros(3, 2));
        assert!(local_nabce(&g, &p, 2.0, 4.0, &y, &y_d).unwrap().amax() < 1e-12);
        assert!(scaled_local_nabce(&mats, &s, &y, &y_d).unwrap().amax() < 1e-12);
    }

    #[test]
    fn local_error_reference_points() {
        let s = ScalingVector::from_entries(&[2.0, 2.0, -4.0]).unwrap();
        let y = DMatrix::from_row_slice(3, 2, &[10.0, 10.0, 0.0, 0.0, -20.0, -20.0]);
        let y_d = DVector::from_vec(vec![5.0, 5.0]);
        let e = local_error(&y, &s, &y_d).unwrap();
        assert_eq!(e.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0]);
        assert_eq!(e.row(2).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_pinned_follower() {
        let (g, p, _, _) = setup(1, &[], &[1.0], 2.0, 4.0);
        let xi = local_nabce(&g, &p, 2.0, 4.0, &DMatrix::zeros(1, 1), &DVector::from_vec(vec![5.0])).unwrap();
        assert_eq!(xi[(0, 0)], 5.0);
    }

    #[test]
    fn scalar_global_form() {
        let (_, _, _, mats) = setup(1, &[], &[1.0], 2.0, 4.0);
        let xi = global_nabce(&mats, &DMatrix::from_element(1, 1, -5.0)).unwrap();
        assert_eq!(xi[(0, 0)], 5.0);
        assert_eq!(global_nabce(&mats, &DMatrix::zeros(1, 3)).unwrap(), DMatrix::zeros(1, 3));
    }

    #[test]
    fn three_forms_on_mixed_graph() {
        let (g, p, s, mats) = setup(
            4,
            &[(2, 1, 1.5), (3, 1, -0.7), (3, 4, 2.0), (4, 2, -1.0), (1, 3, -0.3)],
            &[1.0, 0.0, 0.0, 0.5],
            2.0,
            4.0,
        );
        let y = DMatrix::from_row_slice(4, 2, &[1.0, -2.0, 3.5, 0.25, -7.0, 4.0, 0.0, 9.0]);
        let y_d = DVector::from_vec(vec![5.0, 3.0]);
        let a = local_nabce(&g, &p, 2.0, 4.0, &y, &y_d).unwrap();
        let b = scaled_local_nabce(&mats, &s, &y, &y_d).unwrap();
        let c = global_nabce(&mats, &local_error(&y, &s, &y_d).unwrap()).unwrap();
        assert!((&a - &b).amax() < 1e-10);
        assert!((&b - &c).amax() < 1e-10);
    }

    #[test]
    fn shape_errors() {
        let (g, p, s, mats) = setup(2, &[(2, 1, 1.0)], &[1.0, 0.0], 1.0, 1.0);
        let y = DMatrix::zeros(3, 2);
        let y_d = DVector::zeros(2);
        assert!(matches!(local_error(&y, &s, &y_d), Err(Error::DimensionMismatch { .. })));
        assert!(local_nabce(&g, &p, 1.0, 1.0, &y, &y_d).is_err());
        assert!(scaled_local_nabce(&mats, &s, &y, &y_d).is_err());
        assert!(matches!(global_nabce(&mats, &y), Err(Error::DimensionMismatch { .. })));
    }
}
