//! Confidence schedules for the exploration bonuses and dynamics confidence sets.
//!
//! All logarithms are natural. `bonus_scale` multiplies `beta` and `gamma`
//! only; the dynamics width `xi` is always used at full strength.

use crate::error::{CmdpError, Result};

/// Which reward-bonus constant applies: known dynamics uses `4|F|t^3/delta`
/// inside the log, the unknown-dynamics learners use `8|F|t^3/delta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BonusMode {
    KnownDynamics,
    UnknownDynamics,
}

impl BonusMode {
    fn log_factor(self) -> f64 {
        match self {
            BonusMode::KnownDynamics => 4.0,
            BonusMode::UnknownDynamics => 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedules {
    pub size_f: usize,
    pub size_fp: usize,
    pub delta: f64,
    pub n_states: usize,
    pub n_actions: usize,
    /// Total number of rounds `T`.
    pub horizon_rounds: usize,
    pub bonus_scale: f64,
}

impl Schedules {
    pub fn new(
        size_f: usize,
        size_fp: usize,
        delta: f64,
        n_states: usize,
        n_actions: usize,
        horizon_rounds: usize,
    ) -> Result<Self> {
        Self {
            size_f,
            size_fp,
            delta,
            n_states,
            n_actions,
            horizon_rounds,
            bonus_scale: 1.0,
        }
        .checked()
    }

    pub fn with_bonus_scale(mut self, scale: f64) -> Result<Self> {
        self.bonus_scale = scale;
        self.checked()
    }

    fn checked(self) -> Result<Self> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(CmdpError::InvalidParameter(format!(
                "delta {} outside (0, 1)",
                self.delta
            )));
        }
        // A zero scale is allowed: it switches the bonus off.
        if !self.bonus_scale.is_finite() || self.bonus_scale < 0.0 {
            return Err(CmdpError::InvalidParameter(format!(
                "bonus_scale {} must be finite and nonnegative",
                self.bonus_scale
            )));
        }
        if self.size_f == 0
            || self.size_fp == 0
            || self.n_states == 0
            || self.n_actions == 0
            || self.horizon_rounds == 0
        {
            return Err(CmdpError::InvalidParameter(
                "schedule counts must be at least 1".into(),
            ));
        }
        Ok(self)
    }

    fn sa(&self) -> f64 {
        (self.n_states * self.n_actions) as f64
    }

    /// `scale * sqrt(17 t ln(K |F| t^3 / delta) / (|S||A|))`.
    pub fn beta(&self, t: usize, mode: BonusMode) -> f64 {
        let t = t as f64;
        let log = (mode.log_factor() * self.size_f as f64 * t.powi(3) / self.delta).ln();
        self.bonus_scale * (17.0 * t * log / self.sa()).sqrt()
    }

    /// `scale * sqrt(18 t ln(8 |Fp| t^3 / delta) / (|S||A|))`.
    pub fn gamma(&self, t: usize) -> f64 {
        let t = t as f64;
        let log = (8.0 * self.size_fp as f64 * t.powi(3) / self.delta).ln();
        self.bonus_scale * (18.0 * t * log / self.sa()).sqrt()
    }

    /// `lambda = 2 ln(4 |S||A| T^2 / delta)`.
    pub fn lambda(&self) -> f64 {
        let big_t = self.horizon_rounds as f64;
        2.0 * (4.0 * self.sa() * big_t * big_t / self.delta).ln()
    }

    /// `2 sqrt((|S| + lambda) / max(1, N))`.
    pub fn xi(&self, visits: u64) -> f64 {
        2.0 * ((self.n_states as f64 + self.lambda()) / visits.max(1) as f64).sqrt()
    }
}
