//! Tabular layered contextual MDPs.
//!
//! States are indexed `0..n_states` and partitioned into layers
//! `S_0, ..., S_H`; transitions only go from layer `h` to layer `h + 1`.
//! Contexts are indexed `0..n_contexts`. All per-(s, a) tables are dense and
//! row-major in `(s, a)`.

use std::fmt;

use crate::error::{CmdpError, Result};

/// Tolerance for probability-simplex invariants.
pub const PROB_TOL: f64 = 1e-12;

/// Tolerance for value comparisons.
pub const VALUE_TOL: f64 = 1e-10;

/// Partition of the state space into `H + 1` layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerPartition {
    layers: Vec<Vec<usize>>,
    layer_of: Vec<usize>,
}

impl LayerPartition {
    pub fn new(layers: Vec<Vec<usize>>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(CmdpError::InvalidPartition(format!(
                "need at least 2 layers (H >= 1), got {}",
                layers.len()
            )));
        }
        let first = &layers[0];
        let last = &layers[layers.len() - 1];
        if first.len() != 1 || last.len() != 1 {
            return Err(CmdpError::InvalidPartition(
                "first and last layers must be singletons".into(),
            ));
        }
        let n_states: usize = layers.iter().map(Vec::len).sum();
        let mut layer_of = vec![usize::MAX; n_states];
        for (h, layer) in layers.iter().enumerate() {
            if layer.is_empty() {
                return Err(CmdpError::InvalidPartition(format!("layer {h} is empty")));
            }
            for &s in layer {
                if s >= n_states {
                    return Err(CmdpError::InvalidPartition(format!(
                        "state {s} out of range (n_states = {n_states})"
                    )));
                }
                if layer_of[s] != usize::MAX {
                    return Err(CmdpError::InvalidPartition(format!(
                        "state {s} appears in more than one layer"
                    )));
                }
                layer_of[s] = h;
            }
        }
        Ok(Self { layers, layer_of })
    }

    /// Layers of the given sizes over consecutive state indices.
    pub fn contiguous(sizes: &[usize]) -> Result<Self> {
        let mut next = 0;
        let layers = sizes
            .iter()
            .map(|&n| {
                let layer: Vec<usize> = (next..next + n).collect();
                next += n;
                layer
            })
            .collect();
        Self::new(layers)
    }

    /// Number of decision steps `H`.
    pub fn horizon(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn n_states(&self) -> usize {
        self.layer_of.len()
    }

    pub fn layers(&self) -> &[Vec<usize>] {
        &self.layers
    }

    pub fn layer(&self, h: usize) -> &[usize] {
        &self.layers[h]
    }

    pub fn layer_of(&self, s: usize) -> usize {
        self.layer_of[s]
    }

    pub fn start(&self) -> usize {
        self.layers[0][0]
    }

    pub fn terminal(&self) -> usize {
        self.layers[self.horizon()][0]
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.layer_of[s] == self.horizon()
    }

    /// States of the layer following the one that contains `s`.
    pub fn successors(&self, s: usize) -> &[usize] {
        let h = self.layer_of[s];
        if h >= self.horizon() {
            &[]
        } else {
            &self.layers[h + 1]
        }
    }

    /// All states in layers `0..H`, in layer order.
    pub fn decision_states(&self) -> impl Iterator<Item = usize> + '_ {
        self.layers[..self.horizon()].iter().flatten().copied()
    }
}

/// Transition probabilities `P(s' | s, a)` as a dense `S x A x S` table.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDynamics {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl TabularDynamics {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![0.0; n_states * n_actions * n_states],
        }
    }

    pub fn from_vec(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions * n_states {
            return Err(CmdpError::DimensionMismatch(format!(
                "dynamics table has {} entries, expected {}",
                probs.len(),
                n_states * n_actions * n_states
            )));
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    fn offset(&self, s: usize, a: usize) -> usize {
        (s * self.n_actions + a) * self.n_states
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let o = self.offset(s, a);
        &self.probs[o..o + self.n_states]
    }

    pub fn row_mut(&mut self, s: usize, a: usize) -> &mut [f64] {
        let o = self.offset(s, a);
        &mut self.probs[o..o + self.n_states]
    }

    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.probs[self.offset(s, a) + next]
    }

    pub fn set(&mut self, s: usize, a: usize, next: usize, p: f64) {
        let o = self.offset(s, a);
        self.probs[o + next] = p;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Structural violations of this table against `partition`.
    pub fn violations(&self, partition: &LayerPartition, context: Option<usize>) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.n_states != partition.n_states() {
            out.push(Violation::Dimension(format!(
                "dynamics over {} states, partition over {}",
                self.n_states,
                partition.n_states()
            )));
            return out;
        }
        for s in partition.decision_states() {
            let h = partition.layer_of(s);
            for a in 0..self.n_actions {
                let row = self.row(s, a);
                let mut sum = 0.0;
                for (next, &p) in row.iter().enumerate() {
                    if !p.is_finite() || p < 0.0 {
                        out.push(Violation::NegativeProbability {
                            context,
                            state: s,
                            action: a,
                            next,
                            value: p,
                        });
                    }
                    if p != 0.0 && partition.layer_of(next) != h + 1 {
                        out.push(Violation::NonConsecutiveSupport {
                            context,
                            state: s,
                            action: a,
                            next,
                        });
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > PROB_TOL {
                    out.push(Violation::RowSum {
                        context,
                        state: s,
                        action: a,
                        sum,
                    });
                }
            }
        }
        out
    }
}

/// Per-(s, a) real values: mean rewards, or optimistic rewards that may exceed 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl RewardTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self::constant(n_states, n_actions, 0.0)
    }

    pub fn constant(n_states: usize, n_actions: usize, v: f64) -> Self {
        Self {
            n_states,
            n_actions,
            values: vec![v; n_states * n_actions],
        }
    }

    pub fn from_vec(n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(CmdpError::DimensionMismatch(format!(
                "reward table has {} entries, expected {}",
                values.len(),
                n_states * n_actions
            )));
        }
        Ok(Self {
            n_states,
            n_actions,
            values,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.n_actions + a] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Rejects NaN and negative infinity, which planning cannot order.
    pub fn check_plannable(&self) -> Result<()> {
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let v = self.get(s, a);
                if v.is_nan() || v == f64::NEG_INFINITY {
                    return Err(CmdpError::InvalidReward {
                        state: s,
                        action: a,
                        value: v,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Tabular state-to-action map.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DeterministicPolicy {
    actions: Vec<usize>,
}

impl DeterministicPolicy {
    pub fn new(actions: Vec<usize>) -> Self {
        Self { actions }
    }

    /// The policy that plays `action` everywhere.
    pub fn constant(n_states: usize, action: usize) -> Self {
        Self {
            actions: vec![action; n_states],
        }
    }

    #[inline]
    pub fn action(&self, s: usize) -> usize {
        self.actions[s]
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn n_states(&self) -> usize {
        self.actions.len()
    }

    /// Stable 64-bit FNV-1a digest of the action table.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &a in &self.actions {
            for b in (a as u64).to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    pub fn check(&self, n_states: usize, n_actions: usize) -> Result<()> {
        if self.actions.len() != n_states {
            return Err(CmdpError::DimensionMismatch(format!(
                "policy over {} states, expected {}",
                self.actions.len(),
                n_states
            )));
        }
        if let Some((s, &a)) = self
            .actions
            .iter()
            .enumerate()
            .find(|(_, &a)| a >= n_actions)
        {
            return Err(CmdpError::DimensionMismatch(format!(
                "policy action {a} at state {s} out of range (n_actions = {n_actions})"
            )));
        }
        Ok(())
    }
}

/// One broken structural invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Dimension(String),
    RowSum {
        context: Option<usize>,
        state: usize,
        action: usize,
        sum: f64,
    },
    NegativeProbability {
        context: Option<usize>,
        state: usize,
        action: usize,
        next: usize,
        value: f64,
    },
    NonConsecutiveSupport {
        context: Option<usize>,
        state: usize,
        action: usize,
        next: usize,
    },
    RewardRange {
        context: usize,
        state: usize,
        action: usize,
        value: f64,
    },
    TerminalReward {
        context: usize,
        action: usize,
        value: f64,
    },
    ContextDistribution(String),
}

fn ctx_prefix(context: &Option<usize>) -> String {
    match context {
        Some(c) => format!("context {c}: "),
        None => String::new(),
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Dimension(msg) => write!(f, "dimension mismatch: {msg}"),
            Violation::RowSum {
                context,
                state,
                action,
                sum,
            } => write!(
                f,
                "{}row sum ≠ 1 at ({state},{action}): {sum}",
                ctx_prefix(context)
            ),
            Violation::NegativeProbability {
                context,
                state,
                action,
                next,
                value,
            } => write!(
                f,
                "{}invalid probability {value} at ({state},{action}) -> {next}",
                ctx_prefix(context)
            ),
            Violation::NonConsecutiveSupport {
                context,
                state,
                action,
                next,
            } => write!(
                f,
                "{}non-consecutive layer support at ({state},{action}) -> {next}",
                ctx_prefix(context)
            ),
            Violation::RewardRange {
                context,
                state,
                action,
                value,
            } => write!(
                f,
                "context {context}: reward {value} outside [0,1] at ({state},{action})"
            ),
            Violation::TerminalReward {
                context,
                action,
                value,
            } => write!(
                f,
                "context {context}: final state has nonzero reward {value} for action {action}"
            ),
            Violation::ContextDistribution(msg) => write!(f, "context distribution: {msg}"),
        }
    }
}

/// Outcome of [`validate_cmdp`]: empty means the instance is well formed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        writeln!(f, "{} violation(s):", self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

/// A finite contextual MDP sharing one layer partition across contexts.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredCmdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub partition: LayerPartition,
    pub context_dist: Vec<f64>,
    /// Per-context dynamics; identical entries in the context-independent case.
    pub dynamics: Vec<TabularDynamics>,
    /// Per-context mean rewards.
    pub rewards: Vec<RewardTable>,
}

impl LayeredCmdp {
    /// Builds an instance, checking only that the table shapes agree.
    /// Use [`validate_cmdp`] for the probabilistic invariants.
    pub fn new(
        partition: LayerPartition,
        n_actions: usize,
        context_dist: Vec<f64>,
        dynamics: Vec<TabularDynamics>,
        rewards: Vec<RewardTable>,
    ) -> Result<Self> {
        let n_states = partition.n_states();
        let n_contexts = context_dist.len();
        if n_contexts == 0 {
            return Err(CmdpError::DimensionMismatch("no contexts".into()));
        }
        if n_actions == 0 {
            return Err(CmdpError::DimensionMismatch("no actions".into()));
        }
        if dynamics.len() != n_contexts || rewards.len() != n_contexts {
            return Err(CmdpError::DimensionMismatch(format!(
                "{} contexts but {} dynamics and {} reward tables",
                n_contexts,
                dynamics.len(),
                rewards.len()
            )));
        }
        for d in &dynamics {
            if d.n_states() != n_states || d.n_actions() != n_actions {
                return Err(CmdpError::DimensionMismatch(
                    "dynamics table shape disagrees with partition/actions".into(),
                ));
            }
        }
        for r in &rewards {
            if r.n_states() != n_states || r.n_actions() != n_actions {
                return Err(CmdpError::DimensionMismatch(
                    "reward table shape disagrees with partition/actions".into(),
                ));
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            partition,
            context_dist,
            dynamics,
            rewards,
        })
    }

    pub fn n_contexts(&self) -> usize {
        self.context_dist.len()
    }

    pub fn horizon(&self) -> usize {
        self.partition.horizon()
    }

    pub fn dynamics(&self, context: usize) -> Result<&TabularDynamics> {
        self.dynamics
            .get(context)
            .ok_or(CmdpError::UnknownContext(context))
    }

    pub fn rewards(&self, context: usize) -> Result<&RewardTable> {
        self.rewards
            .get(context)
            .ok_or(CmdpError::UnknownContext(context))
    }

    /// True when every context shares the same transition table.
    pub fn has_shared_dynamics(&self) -> bool {
        self.dynamics.windows(2).all(|w| w[0] == w[1])
    }
}

/// Checks every structural invariant and reports all violations found.
pub fn validate_cmdp(cmdp: &LayeredCmdp) -> ValidationReport {
    let mut violations = Vec::new();
    let sum: f64 = cmdp.context_dist.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        violations.push(Violation::ContextDistribution(format!(
            "sums to {sum}, expected 1"
        )));
    }
    if let Some(p) = cmdp.context_dist.iter().find(|p| p.is_nan() || **p < 0.0) {
        violations.push(Violation::ContextDistribution(format!(
            "negative or NaN entry {p}"
        )));
    }
    let terminal = cmdp.partition.terminal();
    for (c, (dynamics, rewards)) in cmdp.dynamics.iter().zip(&cmdp.rewards).enumerate() {
        violations.extend(dynamics.violations(&cmdp.partition, Some(c)));
        for s in 0..cmdp.n_states {
            for a in 0..cmdp.n_actions {
                let v = rewards.get(s, a);
                if !(0.0..=1.0).contains(&v) {
                    violations.push(Violation::RewardRange {
                        context: c,
                        state: s,
                        action: a,
                        value: v,
                    });
                }
            }
        }
        for a in 0..cmdp.n_actions {
            let v = rewards.get(terminal, a);
            if v != 0.0 {
                violations.push(Violation::TerminalReward {
                    context: c,
                    action: a,
                    value: v,
                });
            }
        }
    }
    ValidationReport { violations }
}
