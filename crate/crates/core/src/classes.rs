//! Finite function classes for rewards and dynamics, with the least-squares
//! regression oracle kept as running squared-error totals per member.
//!
//! Members are dense tables, so a fit is an exact argmin over the class and an
//! update costs `O(|class|)` per sample. Ties resolve to the lowest index.

use crate::cmdp::{LayerPartition, RewardTable, TabularDynamics, PROB_TOL};
use crate::error::{CmdpError, Result};
use crate::trajectory::Trajectory;

/// `(c, s, a, r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardSample {
    pub context: usize,
    pub state: usize,
    pub action: usize,
    pub reward: f64,
}

/// `(c, s, a, s_next)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransitionSample {
    pub context: usize,
    pub state: usize,
    pub action: usize,
    pub next: usize,
}

/// Regression data extracted from trajectories.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleBatch {
    pub rewards: Vec<RewardSample>,
    pub transitions: Vec<TransitionSample>,
}

impl SampleBatch {
    /// `H` reward samples and `H` transition samples.
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        let mut batch = Self::default();
        batch.extend_from(traj);
        batch
    }

    pub fn extend_from(&mut self, traj: &Trajectory) {
        for (h, step) in traj.steps.iter().enumerate() {
            self.rewards.push(RewardSample {
                context: traj.context,
                state: step.state,
                action: step.action,
                reward: step.reward,
            });
            self.transitions.push(TransitionSample {
                context: traj.context,
                state: step.state,
                action: step.action,
                next: traj.next_state(h),
            });
        }
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty() && self.transitions.is_empty()
    }
}

fn argmin(sse: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in sse.iter().enumerate().skip(1) {
        if v < sse[best] {
            best = i;
        }
    }
    best
}

/// Candidate mean-reward functions `f(c, s, a) in [0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardFunctionClass {
    n_contexts: usize,
    n_states: usize,
    n_actions: usize,
    members: Vec<Vec<f64>>,
    sse: Vec<f64>,
    truth_index: Option<usize>,
}

impl RewardFunctionClass {
    /// Each member is a dense table indexed `[(c * S + s) * A + a]`.
    pub fn new(
        n_contexts: usize,
        n_states: usize,
        n_actions: usize,
        members: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(CmdpError::EmptyClass);
        }
        let len = n_contexts * n_states * n_actions;
        for (i, m) in members.iter().enumerate() {
            if m.len() != len {
                return Err(CmdpError::DimensionMismatch(format!(
                    "reward member {i} has {} entries, expected {len}",
                    m.len()
                )));
            }
            if let Some(v) = m.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(CmdpError::InvalidParameter(format!(
                    "reward member {i} has value {v} outside [0,1]"
                )));
            }
        }
        let n = members.len();
        Ok(Self {
            n_contexts,
            n_states,
            n_actions,
            members,
            sse: vec![0.0; n],
            truth_index: None,
        })
    }

    /// Builds a member table from per-context reward tables.
    pub fn member_from_tables(tables: &[RewardTable]) -> Vec<f64> {
        tables
            .iter()
            .flat_map(|t| t.as_slice().iter().copied())
            .collect()
    }

    pub fn with_truth(mut self, index: usize) -> Result<Self> {
        if index >= self.members.len() {
            return Err(CmdpError::InvalidParameter(format!(
                "truth index {index} out of range"
            )));
        }
        self.truth_index = Some(index);
        Ok(self)
    }

    /// Copy with the truth index removed, as handed to a learner.
    pub fn without_truth(&self) -> Self {
        Self {
            truth_index: None,
            ..self.clone()
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n_contexts, self.n_states, self.n_actions)
    }

    pub fn truth_index(&self) -> Option<usize> {
        self.truth_index
    }

    pub fn sse(&self) -> &[f64] {
        &self.sse
    }

    pub fn members(&self) -> &[Vec<f64>] {
        &self.members
    }

    #[inline]
    pub fn eval(&self, member: usize, context: usize, state: usize, action: usize) -> f64 {
        self.members[member][(context * self.n_states + state) * self.n_actions + action]
    }

    /// `f(c, ., .)` as a reward table.
    pub fn table(&self, member: usize, context: usize) -> RewardTable {
        let o = context * self.n_states * self.n_actions;
        let values = self.members[member][o..o + self.n_states * self.n_actions].to_vec();
        RewardTable::from_vec(self.n_states, self.n_actions, values)
            .expect("member slice has table shape")
    }

    fn check_sample(&self, s: &RewardSample) -> Result<()> {
        if s.reward != 0.0 && s.reward != 1.0 {
            return Err(CmdpError::NonBinaryReward(s.reward));
        }
        if s.context >= self.n_contexts || s.state >= self.n_states || s.action >= self.n_actions {
            return Err(CmdpError::DimensionMismatch(format!(
                "reward sample {s:?} out of range"
            )));
        }
        Ok(())
    }

    /// `sse[f] += sum (f(c, s, a) - r)^2`. The batch is validated before any
    /// accumulator changes.
    pub fn lsr_update(&mut self, samples: &[RewardSample]) -> Result<()> {
        samples.iter().try_for_each(|s| self.check_sample(s))?;
        for (m, sse) in self.sse.iter_mut().enumerate() {
            let member = &self.members[m];
            for s in samples {
                let f = member[(s.context * self.n_states + s.state) * self.n_actions + s.action];
                let e = f - s.reward;
                *sse += e * e;
            }
        }
        Ok(())
    }

    /// Argmin of the accumulated squared error; index 0 on an empty history.
    pub fn lsr_fit(&self) -> usize {
        argmin(&self.sse)
    }

    pub fn reset(&mut self) {
        self.sse.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Candidate context-dependent dynamics `P(s' | s, a, c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsClass {
    partition: LayerPartition,
    n_contexts: usize,
    n_actions: usize,
    members: Vec<Vec<TabularDynamics>>,
    sse: Vec<f64>,
    truth_index: Option<usize>,
}

impl DynamicsClass {
    /// Each member holds one dynamics table per context; every table must be
    /// row-normalized and layer-respecting.
    pub fn new(
        partition: LayerPartition,
        n_contexts: usize,
        n_actions: usize,
        members: Vec<Vec<TabularDynamics>>,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(CmdpError::EmptyClass);
        }
        for (i, m) in members.iter().enumerate() {
            if m.len() != n_contexts {
                return Err(CmdpError::DimensionMismatch(format!(
                    "dynamics member {i} covers {} contexts, expected {n_contexts}",
                    m.len()
                )));
            }
            for (c, d) in m.iter().enumerate() {
                if d.n_actions() != n_actions {
                    return Err(CmdpError::DimensionMismatch(format!(
                        "dynamics member {i} has {} actions",
                        d.n_actions()
                    )));
                }
                if let Some(v) = d.violations(&partition, Some(c)).first() {
                    return Err(CmdpError::InvalidParameter(format!(
                        "dynamics member {i}: {v}"
                    )));
                }
            }
        }
        let n = members.len();
        Ok(Self {
            partition,
            n_contexts,
            n_actions,
            members,
            sse: vec![0.0; n],
            truth_index: None,
        })
    }

    pub fn with_truth(mut self, index: usize) -> Result<Self> {
        if index >= self.members.len() {
            return Err(CmdpError::InvalidParameter(format!(
                "truth index {index} out of range"
            )));
        }
        self.truth_index = Some(index);
        Ok(self)
    }

    pub fn without_truth(&self) -> Self {
        Self {
            truth_index: None,
            ..self.clone()
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn n_contexts(&self) -> usize {
        self.n_contexts
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn partition(&self) -> &LayerPartition {
        &self.partition
    }

    pub fn truth_index(&self) -> Option<usize> {
        self.truth_index
    }

    pub fn sse(&self) -> &[f64] {
        &self.sse
    }

    pub fn member(&self, index: usize, context: usize) -> &TabularDynamics {
        &self.members[index][context]
    }

    pub fn members(&self) -> &[Vec<TabularDynamics>] {
        &self.members
    }

    fn check_sample(&self, t: &TransitionSample) -> Result<()> {
        let n_states = self.partition.n_states();
        if t.context >= self.n_contexts
            || t.state >= n_states
            || t.next >= n_states
            || t.action >= self.n_actions
        {
            return Err(CmdpError::DimensionMismatch(format!(
                "transition sample {t:?} out of range"
            )));
        }
        let h = self.partition.layer_of(t.state);
        if h >= self.partition.horizon() || self.partition.layer_of(t.next) != h + 1 {
            return Err(CmdpError::LayerViolation {
                state: t.state,
                next: t.next,
                layer: h + 1,
            });
        }
        Ok(())
    }

    /// `sse[P] += sum_{s' in S_{h+1}} (P(s' | s, a, c) - 1[s' = s_next])^2`.
    pub fn lsr_update(&mut self, samples: &[TransitionSample]) -> Result<()> {
        samples.iter().try_for_each(|t| self.check_sample(t))?;
        for (m, sse) in self.sse.iter_mut().enumerate() {
            for t in samples {
                let row = self.members[m][t.context].row(t.state, t.action);
                for &next in self.partition.successors(t.state) {
                    let target = if next == t.next { 1.0 } else { 0.0 };
                    let e = row[next] - target;
                    *sse += e * e;
                }
            }
        }
        Ok(())
    }

    pub fn lsr_fit(&self) -> usize {
        argmin(&self.sse)
    }

    pub fn reset(&mut self) {
        self.sse.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Every member mixed with the uniform distribution over the successor
    /// layer at rate `rho`. Accumulators of the result start at zero.
    pub fn mix_with_uniform(&self, rho: f64) -> Result<DynamicsClass> {
        if !(rho > 0.0 && rho < 0.5) {
            return Err(CmdpError::InvalidParameter(format!(
                "mixing rate {rho} outside (0, 0.5)"
            )));
        }
        let members = self
            .members
            .iter()
            .map(|m| {
                m.iter()
                    .map(|d| mix_dynamics(d, &self.partition, rho))
                    .collect()
            })
            .collect();
        Ok(Self {
            partition: self.partition.clone(),
            n_contexts: self.n_contexts,
            n_actions: self.n_actions,
            sse: vec![0.0; self.members.len()],
            members,
            truth_index: self.truth_index,
        })
    }
}

/// `(1 - rho) P(s' | s, a) + rho / |S_{h+1}|` on the successor layer.
pub fn mix_dynamics(d: &TabularDynamics, partition: &LayerPartition, rho: f64) -> TabularDynamics {
    let mut out = d.clone();
    for s in partition.decision_states() {
        let succ = partition.successors(s);
        let uniform = rho / succ.len() as f64;
        for a in 0..d.n_actions() {
            for &next in succ {
                out.set(s, a, next, (1.0 - rho) * d.prob(s, a, next) + uniform);
            }
        }
    }
    out
}

/// `|| P(. | s, a) - Q(. | s, a) ||_1`.
pub fn row_l1(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(x, y)| (x - y).abs()).sum()
}

/// True when every decision row of `d` sums to one within tolerance.
pub fn rows_normalized(d: &TabularDynamics, partition: &LayerPartition) -> bool {
    partition.decision_states().all(|s| {
        (0..d.n_actions()).all(|a| (d.row(s, a).iter().sum::<f64>() - 1.0).abs() <= PROB_TOL)
    })
}
