//! Bernoulli denial-of-service attacks on the NABCE measurement channels and
//! the hold-last-value compensation.
//!
//! `h_{i,r}(k) = 1` means channel `r` of agent `i` delivered its packet at
//! step `k`; `h = 0` means the attack succeeded and the reading is lost. The
//! controller is assumed to detect a missing packet, so the mask is known to
//! it when compensating.
//!
//! # Sampling
//!
//! Masks come from a counter-based generator so that any `(step, agent,
//! channel)` draw can be reproduced in isolation, in any order:
//!
//! * ChaCha8 (`rand_chacha`) seeded with `seed_from_u64(seed)`,
//! * stream id = step `k`,
//! * word position = `2 · (i · p + r)`,
//! * one `next_u64()`, whose top 53 bits give `u ∈ [0, 1)`,
//! * `h = 1` iff `u < h̄_{i,r}`.
//!
//! The ChaCha keystream is fixed by the algorithm, so masks are stable across
//! releases of this crate.

use nalgebra::DMatrix;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    success_prob: DMatrix<f64>,
    seed: u64,
}

impl AttackConfig {
    /// `success_prob[(i, r)]` is `P{h_{i,r}(k) = 1}`, the probability that the
    /// channel is *not* blocked.
    pub fn new(success_prob: DMatrix<f64>, seed: u64) -> Result<Self> {
        if let Some(bad) = success_prob.iter().find(|h| !(0.0..=1.0).contains(*h)) {
            return Err(Error::ParamOutOfRange {
                field: "success_prob",
                reason: format!("entry {bad} out of [0,1]"),
            });
        }
        Ok(Self { success_prob, seed })
    }

    /// Broadcasts one probability per agent to all `p` channels.
    pub fn per_agent(probs: &[f64], p: usize, seed: u64) -> Result<Self> {
        Self::new(DMatrix::from_fn(probs.len(), p, |i, _| probs[i]), seed)
    }

    /// Every channel always delivers.
    pub fn no_attack(agents: usize, p: usize, seed: u64) -> Self {
        Self {
            success_prob: DMatrix::from_element(agents, p, 1.0),
            seed,
        }
    }

    pub fn success_prob(&self) -> &DMatrix<f64> {
        &self.success_prob
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn agents(&self) -> usize {
        self.success_prob.nrows()
    }

    pub fn channels(&self) -> usize {
        self.success_prob.ncols()
    }
}

/// Per-channel delivery indicators for one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackMask {
    delivered: DMatrix<bool>,
}

impl AttackMask {
    pub fn from_matrix(delivered: DMatrix<bool>) -> Self {
        Self { delivered }
    }

    pub fn all(agents: usize, p: usize, delivered: bool) -> Self {
        Self {
            delivered: DMatrix::from_element(agents, p, delivered),
        }
    }

    pub fn delivered(&self, i: usize, r: usize) -> bool {
        self.delivered[(i, r)]
    }

    /// `h_{i,r}` as `0` or `1`.
    pub fn h(&self, i: usize, r: usize) -> u8 {
        u8::from(self.delivered[(i, r)])
    }

    pub fn shape(&self) -> (usize, usize) {
        self.delivered.shape()
    }

    fn check_shape(&self, what: &'static str, m: &DMatrix<f64>) -> Result<()> {
        if m.shape() != self.delivered.shape() {
            let (a, b) = self.delivered.shape();
            return Err(dim_mismatch(
                what,
                format!("{a}x{b}"),
                format!("{}x{}", m.nrows(), m.ncols()),
            ));
        }
        Ok(())
    }
}

/// Uniform draw in `[0, 1)` for `(seed, step, agent, channel)`.
pub fn channel_uniform(seed: u64, step: u64, agent: usize, channel: usize, channels: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step);
    rng.set_word_pos(2 * (agent * channels + channel) as u128);
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn sample_mask(config: &AttackConfig, step: u64) -> AttackMask {
    let (agents, p) = config.success_prob.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(step);
    let delivered = DMatrix::from_fn(agents, p, |i, r| {
        rng.set_word_pos(2 * (i * p + r) as u128);
        let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        u < config.success_prob[(i, r)]
    });
    AttackMask { delivered }
}

/// Received measurement `ξ̄ = H ξ`: blocked channels read zero.
pub fn apply_attack(mask: &AttackMask, xi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    mask.check_shape("NABCE", xi)?;
    Ok(DMatrix::from_fn(xi.nrows(), xi.ncols(), |i, r| {
        if mask.delivered(i, r) {
            xi[(i, r)]
        } else {
            0.0
        }
    }))
}

/// Compensated measurement `ξ^c = H ξ_now + (I − H) ξ_prev`.
pub fn compensate(mask: &AttackMask, xi_now: &DMatrix<f64>, xi_prev: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    mask.check_shape("current NABCE", xi_now)?;
    mask.check_shape("held NABCE", xi_prev)?;
    Ok(DMatrix::from_fn(xi_now.nrows(), xi_now.ncols(), |i, r| {
        if mask.delivered(i, r) {
            xi_now[(i, r)]
        } else {
            xi_prev[(i, r)]
        }
    }))
}

/// Which value a blocked channel falls back to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CompensationMode {
    /// Hold the last compensated value, so bursts keep the last delivered reading.
    #[default]
    Recursive,
    /// Hold the true previous NABCE computed by the agent.
    Strict,
    /// No compensation: the controller sees `H ξ` directly.
    Disabled,
}

impl std::str::FromStr for CompensationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "recursive" => Ok(Self::Recursive),
            "strict" => Ok(Self::Strict),
            "disabled" | "none" => Ok(Self::Disabled),
            other => Err(Error::ConfigInvalid(format!("unknown compensation mode {other:?}"))),
        }
    }
}
