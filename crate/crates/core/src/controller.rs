//! Per-agent data-driven controller.
//!
//! Each agent runs three coupled recursions on its own compensated NABCE
//! measurement `ξ^c(k)` and input history, and never sees the plant model:
//!
//! 1. Jacobian estimator ([`update_ppjm`]): a projection update of the
//!    `p × q` estimate `Φ̂(k)` of the map `Δξ(k+1) = Φ(k) Δu(k)`, with a
//!    reset to `Φ̂(1)` whenever `‖Δu(k−1)‖ ≤ reset_eps`.
//! 2. Control update ([`control_step`]):
//!    `u(k) = u(k−1) − η₂ Φ̂ᵀ Q^u (ξ̂ + K(ξ^c − ξ̂)) / (‖Φ̂ᵀ Q^u Φ̂‖ + ‖R^u‖)`.
//! 3. Extended state observer ([`observer_step`]):
//!    `ξ̂(k+1) = ξ̂(k) + Φ̂(k) Δu(k) + K(ξ^c(k) − ξ̂(k))`.
//!
//! The bracket of the control update uses the compensated measurement
//! `ξ^c(k)` together with the observer estimate `ξ̂(k)`; this is the form the
//! closed-loop map `ξ̂(k+1) = Υ(k)(ξ̂ + K(ξ^c − ξ̂))` is built from.
//!
//! Matrix norms are spectral (2-norms); vector norms are Euclidean.
//!
//! # Sign of η₂
//!
//! `Υ = I − η₂ Φ̂Φ̂ᵀQ^u / (‖Φ̂ᵀQ^uΦ̂‖ + ‖R^u‖)` contracts only for `η₂ > 0`:
//! `Φ̂Φ̂ᵀQ^u` has nonnegative eigenvalues, so any `η₂ < 0` gives `ρ(Υ) ≥ 1`.
//! Validation therefore accepts `0 < |η₂| < 1`, and the shipped gains use a
//! positive step together with a negative initial Jacobian `Φ̂(1)`, matching
//! the negative sign of `∂ξ_i/∂u_i` for plants with positive input gain.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_mismatch, Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerParams {
    /// Estimator step `η₁ ∈ (0, 2]`.
    pub eta1: f64,
    /// Control step, `0 < |η₂| < 1`.
    pub eta2: f64,
    /// Estimator regularisation `μ > 0`.
    pub mu: f64,
    /// `q × q` estimator weight, `Q^Φ̂ ⪰ I`.
    pub q_phi: DMatrix<f64>,
    /// Diagonal of the `p × p` output weight `Q^u`, entries `> 0`.
    pub q_u: DVector<f64>,
    /// `q × q` input weight `R^u ≻ 0`.
    pub r_u: DMatrix<f64>,
    /// Diagonal of the observer gain `K`, entries in `(0, 2)`.
    pub k_obs: DVector<f64>,
    /// Estimator reset threshold on `‖Δu(k−1)‖`.
    pub reset_eps: f64,
    /// `p × q` initial (and reset) Jacobian estimate.
    pub phi_init: DMatrix<f64>,
}

impl ControllerParams {
    /// Shipped gains for `p` outputs and `q` inputs.
    pub fn shipped(p: usize, q: usize) -> Self {
        Self {
            eta1: 1.0,
            eta2: 0.2,
            mu: 2.0,
            q_phi: DMatrix::identity(q, q),
            q_u: DVector::from_element(p, 1.0),
            r_u: DMatrix::identity(q, q),
            k_obs: DVector::from_element(p, 0.5),
            reset_eps: 1e-5,
            phi_init: DMatrix::from_fn(p, q, |r, c| if r == c { -2.0 } else { 0.0 }),
        }
    }

    pub fn outputs(&self) -> usize {
        self.phi_init.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.phi_init.ncols()
    }

    fn q_u_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.q_u)
    }
}

fn out_of_range(field: &'static str, reason: impl Into<String>) -> Error {
    Error::ParamOutOfRange {
        field,
        reason: reason.into(),
    }
}

/// Checks every parameter range and the definiteness conditions.
pub fn validate_params(params: &ControllerParams) -> Result<()> {
    let (p, q) = params.phi_init.shape();
    if p == 0 || q == 0 {
        return Err(out_of_range("phi_init", "must be a nonempty p x q matrix"));
    }
    if !(params.eta1 > 0.0 && params.eta1 <= 2.0) {
        return Err(out_of_range("eta1", "out of (0,2]"));
    }
    if !(params.eta2.abs() > 0.0 && params.eta2.abs() < 1.0) {
        return Err(out_of_range("eta2", "out of (-1,0) or (0,1)"));
    }
    if !(params.mu > 0.0) {
        return Err(out_of_range("mu", "must be > 0"));
    }
    if !(params.reset_eps > 0.0) {
        return Err(out_of_range("reset_eps", "must be > 0"));
    }
    if params.phi_init.iter().any(|v| !v.is_finite()) {
        return Err(out_of_range("phi_init", "must be finite"));
    }
    if params.k_obs.len() != p {
        return Err(out_of_range("k_obs", format!("needs {p} entries")));
    }
    if params.k_obs.iter().any(|&k| !(k > 0.0 && k < 2.0)) {
        return Err(out_of_range("k_obs", "entries out of (0,2)"));
    }
    if params.q_u.len() != p {
        return Err(out_of_range("q_u", format!("needs {p} entries")));
    }
    if params.q_u.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(out_of_range("q_u", "entries must be > 0"));
    }
    if params.r_u.shape() != (q, q) {
        return Err(out_of_range("r_u", format!("must be {q}x{q}")));
    }
    if !linalg::is_symmetric(&params.r_u, 1e-12) || params.r_u.clone().cholesky().is_none() {
        return Err(out_of_range("r_u", "must be symmetric positive-definite"));
    }
    if params.q_phi.shape() != (q, q) {
        return Err(out_of_range("q_phi", format!("must be {q}x{q}")));
    }
    let shifted = &params.q_phi - DMatrix::identity(q, q);
    if !linalg::is_symmetric(&params.q_phi, 1e-12) || linalg::min_symmetric_eigenvalue(&shifted) < -1e-12 {
        return Err(out_of_range("q_phi", "must be symmetric with Q - I positive-semidefinite"));
    }
    Ok(())
}

/// Estimated pseudo-partitioned Jacobian `Φ̂(k)`, `p × q`.
#[derive(Debug, Clone, PartialEq)]
pub struct PpjmEstimate(pub DMatrix<f64>);

impl PpjmEstimate {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Spectral norm.
    pub fn norm(&self) -> f64 {
        linalg::spectral_norm(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState {
    pub xi_hat: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlState {
    pub u: DVector<f64>,
    pub u_prev: DVector<f64>,
    /// Compensated NABCE the controller consumed on the previous step.
    pub xi_c_prev: DVector<f64>,
}

impl ControlState {
    /// At rest: `u(0) = u(−1) = u0`.
    pub fn at_rest(u0: DVector<f64>, p: usize) -> Self {
        Self {
            u_prev: u0.clone(),
            u: u0,
            xi_c_prev: DVector::zeros(p),
        }
    }

    pub fn delta_u(&self) -> DVector<f64> {
        &self.u - &self.u_prev
    }
}

fn check_len(what: &'static str, v: &DVector<f64>, len: usize) -> Result<()> {
    if v.len() != len {
        return Err(dim_mismatch(what, len, v.len()));
    }
    Ok(())
}

fn finite_vec(v: DVector<f64>, what: &'static str) -> Result<DVector<f64>> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Jacobian estimator step.
///
/// `xi_c_now − xi_prev` is the measured NABCE increment and `du_prev` the
/// input increment `Δu(k−1)` that produced it.
pub fn update_ppjm(
    est: &PpjmEstimate,
    xi_c_now: &DVector<f64>,
    xi_prev: &DVector<f64>,
    du_prev: &DVector<f64>,
    params: &ControllerParams,
) -> Result<PpjmEstimate> {
    let (p, q) = params.phi_init.shape();
    check_len("xi_c_now", xi_c_now, p)?;
    check_len("xi_prev", xi_prev, p)?;
    check_len("du_prev", du_prev, q)?;
    if du_prev.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("input increment"));
    }
    if du_prev.norm() <= params.reset_eps {
        return Ok(PpjmEstimate(params.phi_init.clone()));
    }
    let denom = (du_prev.transpose() * &params.q_phi * du_prev)[(0, 0)] + params.mu;
    let innovation = (xi_c_now - xi_prev) - &est.0 * du_prev;
    let phi = &est.0 + (innovation * du_prev.transpose()) * (params.eta1 / denom);
    if phi.iter().all(|v| v.is_finite()) {
        Ok(PpjmEstimate(phi))
    } else {
        Err(Error::NonFinite("Jacobian estimate"))
    }
}

/// Extended state observer step, returns `ξ̂(k+1)`.
pub fn observer_step(
    obs: &ObserverState,
    est: &PpjmEstimate,
    du: &DVector<f64>,
    xi_c: &DVector<f64>,
    params: &ControllerParams,
) -> Result<ObserverState> {
    let (p, q) = params.phi_init.shape();
    check_len("xi_hat", &obs.xi_hat, p)?;
    check_len("xi_c", xi_c, p)?;
    check_len("du", du, q)?;
    let correction = params.k_obs.component_mul(&(xi_c - &obs.xi_hat));
    let xi_hat = &obs.xi_hat + &est.0 * du + correction;
    Ok(ObserverState {
        xi_hat: finite_vec(xi_hat, "observer estimate")?,
    })
}

/// Control update, returns the state advanced to step `k`.
pub fn control_step(
    ctl: &ControlState,
    est: &PpjmEstimate,
    obs: &ObserverState,
    xi_c: &DVector<f64>,
    params: &ControllerParams,
) -> Result<ControlState> {
    let (p, q) = params.phi_init.shape();
    check_len("u", &ctl.u, q)?;
    check_len("xi_hat", &obs.xi_hat, p)?;
    check_len("xi_c", xi_c, p)?;
    let phi = &est.0;
    let bracket = &obs.xi_hat + params.k_obs.component_mul(&(xi_c - &obs.xi_hat));
    let step = phi.transpose() * params.q_u_matrix() * bracket * gain_scale(phi, params);
    Ok(ControlState {
        u: finite_vec(&ctl.u - step, "control input")?,
        u_prev: ctl.u.clone(),
        xi_c_prev: xi_c.clone(),
    })
}

/// `η₂ / (‖Φ̂ᵀQ^uΦ̂‖ + ‖R^u‖)`, the step size shared by the control law and `Υ`.
fn gain_scale(phi: &DMatrix<f64>, params: &ControllerParams) -> f64 {
    let denom = linalg::spectral_norm(&(phi.transpose() * params.q_u_matrix() * phi)) + linalg::spectral_norm(&params.r_u);
    params.eta2 / denom
}

/// Closed-loop observer map `Υ = I − η₂ Φ̂Φ̂ᵀQ^u / (‖Φ̂ᵀQ^uΦ̂‖ + ‖R^u‖)`.
pub fn upsilon(est: &PpjmEstimate, params: &ControllerParams) -> DMatrix<f64> {
    let phi = &est.0;
    let p = phi.nrows();
    DMatrix::identity(p, p) - phi * phi.transpose() * params.q_u_matrix() * gain_scale(phi, params)
}

/// `ρ(Υ)`. With `D = (Q^u)^½`, `DΥD⁻¹ = I − c·(DΦ̂)(DΦ̂)ᵀ` is symmetric and
/// has the same spectrum, so a symmetric eigen-solve suffices.
pub fn upsilon_spectral_radius(est: &PpjmEstimate, params: &ControllerParams) -> f64 {
    let phi = &est.0;
    let p = phi.nrows();
    let scaled = DMatrix::from_diagonal(&params.q_u.map(f64::sqrt)) * phi;
    let sym = DMatrix::identity(p, p) - &scaled * scaled.transpose() * gain_scale(phi, params);
    linalg::symmetric_spectral_radius(&sym)
}

/// One agent's controller with its estimator, observer and input history.
#[derive(Debug, Clone)]
pub struct AgentController {
    params: ControllerParams,
    estimate: PpjmEstimate,
    observer: Option<ObserverState>,
    control: ControlState,
}

/// What an agent computed during one step.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentStep {
    /// `u(k)`.
    pub u: DVector<f64>,
    /// `ξ̂(k)`, the observer estimate the step consumed.
    pub xi_hat: DVector<f64>,
    /// `Φ̂(k)`.
    pub estimate: PpjmEstimate,
}

impl AgentController {
    pub fn new(params: ControllerParams, u0: DVector<f64>) -> Result<Self> {
        validate_params(&params)?;
        check_len("initial input", &u0, params.inputs())?;
        let p = params.outputs();
        Ok(Self {
            estimate: PpjmEstimate(params.phi_init.clone()),
            observer: None,
            control: ControlState::at_rest(u0, p),
            params,
        })
    }

    pub fn params(&self) -> &ControllerParams {
        &self.params
    }

    pub fn estimate(&self) -> &PpjmEstimate {
        &self.estimate
    }

    pub fn control(&self) -> &ControlState {
        &self.control
    }

    /// Runs estimator, control update and observer on `ξ^c(k)`.
    ///
    /// The first call seeds `ξ̂(1) = ξ^c(1)`.
    pub fn step(&mut self, xi_c: &DVector<f64>) -> Result<AgentStep> {
        if self.observer.is_none() {
            self.observer = Some(ObserverState { xi_hat: xi_c.clone() });
            self.control.xi_c_prev = xi_c.clone();
        }
        let observer = self.observer.as_ref().expect("seeded above");

        let du_prev = self.control.delta_u();
        let estimate = update_ppjm(&self.estimate, xi_c, &self.control.xi_c_prev, &du_prev, &self.params)?;
        let control = control_step(&self.control, &estimate, observer, xi_c, &self.params)?;
        let next_observer = observer_step(observer, &estimate, &control.delta_u(), xi_c, &self.params)?;

        let out = AgentStep {
            u: control.u.clone(),
            xi_hat: observer.xi_hat.clone(),
            estimate: estimate.clone(),
        };
        self.estimate = estimate;
        self.control = control;
        self.observer = Some(next_observer);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_params(eta2: f64) -> ControllerParams {
        ControllerParams {
            eta1: 1.0,
            eta2,
            mu: 1.0,
            q_phi: DMatrix::identity(1, 1),
            q_u: DVector::from_element(1, 1.0),
            r_u: DMatrix::identity(1, 1),
            k_obs: DVector::from_element(1, 0.5),
            reset_eps: 1e-5,
            phi_init: DMatrix::from_element(1, 1, 0.5),
        }
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn interior_params_validate() {
        let mut p = ControllerParams::shipped(2, 2);
        p.eta2 = -0.5;
        p.mu = 1.0;
        p.phi_init = DMatrix::identity(2, 2) * 0.5;
        assert!(validate_params(&p).is_ok());
        assert!(validate_params(&ControllerParams::shipped(2, 2)).is_ok());
        assert!(validate_params(&ControllerParams::shipped(3, 2)).is_ok());
    }

    #[test]
    fn range_violations_name_the_field() {
        let field = |f: fn(&mut ControllerParams)| {
            let mut p = ControllerParams::shipped(2, 2);
            f(&mut p);
            match validate_params(&p) {
                Err(Error::ParamOutOfRange { field, .. }) => field,
                other => panic!("expected ParamOutOfRange, got {other:?}"),
            }
        };
        assert_eq!(field(|p| p.eta1 = 2.5), "eta1");
        assert_eq!(field(|p| p.eta1 = 0.0), "eta1");
        assert_eq!(field(|p| p.eta2 = 0.0), "eta2");
        assert_eq!(field(|p| p.eta2 = -1.0), "eta2");
        assert_eq!(field(|p| p.mu = 0.0), "mu");
        assert_eq!(field(|p| p.k_obs[0] = 2.0), "k_obs");
        assert_eq!(field(|p| p.k_obs[1] = 0.0), "k_obs");
        assert_eq!(field(|p| p.q_u[0] = 0.0), "q_u");
        assert_eq!(field(|p| p.r_u[(1, 1)] = -1.0), "r_u");
        assert_eq!(field(|p| p.r_u[(0, 1)] = 0.5), "r_u");
        assert_eq!(field(|p| p.q_phi[(0, 0)] = 0.5), "q_phi");
        assert_eq!(field(|p| p.reset_eps = 0.0), "reset_eps");
        assert_eq!(field(|p| p.eta1 = f64::NAN), "eta1");

        let mut p = ControllerParams::shipped(2, 2);
        p.eta1 = 2.5;
        assert_eq!(validate_params(&p).unwrap_err().to_string(), "eta1 out of (0,2]");
    }

    #[test]
    fn scalar_estimator_update() {
        let p = scalar_params(-0.5);
        let est = PpjmEstimate(DMatrix::zeros(1, 1));
        let next = update_ppjm(&est, &v(&[2.0]), &v(&[0.0]), &v(&[1.0]), &p).unwrap();
        assert!((next.0[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn estimator_resets_on_small_increment() {
        let p = scalar_params(-0.5);
        let est = PpjmEstimate(DMatrix::from_element(1, 1, 42.0));
        let next = update_ppjm(&est, &v(&[2.0]), &v(&[0.0]), &v(&[0.0]), &p).unwrap();
        assert_eq!(next.0, p.phi_init);
    }

    #[test]
    fn estimator_flags_non_finite() {
        let p = scalar_params(-0.5);
        let est = PpjmEstimate(DMatrix::zeros(1, 1));
        assert!(matches!(
            update_ppjm(&est, &v(&[f64::INFINITY]), &v(&[0.0]), &v(&[1.0]), &p),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            update_ppjm(&est, &v(&[1.0]), &v(&[0.0]), &v(&[f64::NAN]), &p),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn scalar_observer_examples() {
        let p = scalar_params(-0.5);
        let one = PpjmEstimate(DMatrix::from_element(1, 1, 1.0));
        let next = observer_step(&ObserverState { xi_hat: v(&[0.0]) }, &one, &v(&[1.0]), &v(&[2.0]), &p).unwrap();
        assert!((next.xi_hat[0] - 2.0).abs() < 1e-12);

        let fixed = observer_step(&ObserverState { xi_hat: v(&[3.0]) }, &one, &v(&[0.0]), &v(&[3.0]), &p).unwrap();
        assert_eq!(fixed.xi_hat[0], 3.0);

        let mut deadbeat = p.clone();
        deadbeat.k_obs[0] = 1.0;
        let next = observer_step(&ObserverState { xi_hat: v(&[-4.0]) }, &one, &v(&[0.0]), &v(&[7.5]), &deadbeat).unwrap();
        assert_eq!(next.xi_hat[0], 7.5);
    }

    #[test]
    fn scalar_control_examples() {
        let p = scalar_params(-0.5);
        let one = PpjmEstimate(DMatrix::from_element(1, 1, 1.0));
        let ctl = ControlState::at_rest(v(&[0.0]), 1);
        let next = control_step(&ctl, &one, &ObserverState { xi_hat: v(&[1.0]) }, &v(&[1.0]), &p).unwrap();
        assert!((next.u[0] - 0.25).abs() < 1e-12);
        assert_eq!(next.u_prev[0], 0.0);
        assert_eq!(next.xi_c_prev[0], 1.0);

        let ctl = ControlState::at_rest(v(&[1.5]), 1);
        let idle = control_step(&ctl, &one, &ObserverState { xi_hat: v(&[0.0]) }, &v(&[0.0]), &p).unwrap();
        assert_eq!(idle.u[0], 1.5);

        let zero = PpjmEstimate(DMatrix::zeros(1, 1));
        let blind = control_step(&ctl, &zero, &ObserverState { xi_hat: v(&[3.0]) }, &v(&[2.0]), &p).unwrap();
        assert_eq!(blind.u[0], 1.5);
    }

    #[test]
    fn upsilon_scalar_values() {
        let one = PpjmEstimate(DMatrix::from_element(1, 1, 1.0));
        assert!((upsilon(&one, &scalar_params(-0.5))[(0, 0)] - 1.25).abs() < 1e-12);
        assert!((upsilon(&one, &scalar_params(0.5))[(0, 0)] - 0.75).abs() < 1e-12);
        let zero = PpjmEstimate(DMatrix::zeros(2, 2));
        assert_eq!(upsilon(&zero, &ControllerParams::shipped(2, 2)), DMatrix::identity(2, 2));
    }

    #[test]
    fn upsilon_radius_matches_direct_eigenvalues() {
        let mut params = ControllerParams::shipped(3, 2);
        params.q_u = DVector::from_vec(vec![0.5, 2.0, 3.0]);
        let est = PpjmEstimate(DMatrix::from_row_slice(3, 2, &[1.0, -0.3, 0.2, 2.0, -1.5, 0.7]));
        let direct = linalg::spectral_radius(&upsilon(&est, &params));
        assert!((upsilon_spectral_radius(&est, &params) - direct).abs() < 1e-12);
    }

    #[test]
    fn agent_seeds_observer_from_first_measurement() {
        let mut agent = AgentController::new(ControllerParams::shipped(2, 2), DVector::zeros(2)).unwrap();
        let xi = v(&[1.0, -2.0]);
        let step = agent.step(&xi).unwrap();
        assert_eq!(step.xi_hat, xi);
        // Δu(0) = 0 resets the estimate.
        assert_eq!(step.estimate.0, agent.params().phi_init);
        assert_eq!(agent.control().xi_c_prev, xi);
    }
}
