//! Episode sampling.

use std::cell::RefCell;

use rand::Rng;

use crate::cmdp::{DeterministicPolicy, LayeredCmdp};
use crate::error::{CmdpError, Result};

/// One decision step `(s_h, a_h, r_h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
}

/// `(c; s_0, a_0, r_0, ..., s_{H-1}, a_{H-1}, r_{H-1}, s_H)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub context: usize,
    pub steps: Vec<Step>,
    pub terminal: usize,
}

impl Trajectory {
    /// State reached after step `h`.
    pub fn next_state(&self, h: usize) -> usize {
        self.steps
            .get(h + 1)
            .map(|step| step.state)
            .unwrap_or(self.terminal)
    }

    /// `(s_h, a_h, s_{h+1})` for every step.
    pub fn transitions(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.steps
            .iter()
            .enumerate()
            .map(move |(h, step)| (step.state, step.action, self.next_state(h)))
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// Samples an episode using one random stream for both transitions and rewards.
pub fn sample_trajectory<R: Rng + ?Sized>(
    cmdp: &LayeredCmdp,
    context: usize,
    policy: &DeterministicPolicy,
    rng: &mut R,
) -> Result<Trajectory> {
    let cell = RefCell::new(rng);
    sample_with(
        cmdp,
        context,
        policy,
        || cell.borrow_mut().gen::<f64>(),
        || cell.borrow_mut().gen::<f64>(),
    )
}

/// Samples an episode with separate streams for transitions and rewards, so
/// that reward noise does not shift the transition draws.
pub fn sample_trajectory_split<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    cmdp: &LayeredCmdp,
    context: usize,
    policy: &DeterministicPolicy,
    transitions: &mut R1,
    rewards: &mut R2,
) -> Result<Trajectory> {
    sample_with(
        cmdp,
        context,
        policy,
        || transitions.gen::<f64>(),
        || rewards.gen::<f64>(),
    )
}

fn sample_with(
    cmdp: &LayeredCmdp,
    context: usize,
    policy: &DeterministicPolicy,
    mut next_transition: impl FnMut() -> f64,
    mut next_reward: impl FnMut() -> f64,
) -> Result<Trajectory> {
    let dynamics = cmdp.dynamics(context)?;
    let rewards = cmdp.rewards(context)?;
    policy.check(cmdp.n_states, cmdp.n_actions)?;
    let partition = &cmdp.partition;
    let mut s = partition.start();
    let mut steps = Vec::with_capacity(partition.horizon());
    for _ in 0..partition.horizon() {
        let a = policy.action(s);
        let reward = if next_reward() < rewards.get(s, a) {
            1.0
        } else {
            0.0
        };
        steps.push(Step {
            state: s,
            action: a,
            reward,
        });
        s = sample_categorical(
            dynamics.row(s, a),
            partition.successors(s),
            next_transition(),
        )
        .ok_or_else(|| CmdpError::InvalidInstance(format!("no successor mass at ({s},{a})")))?;
    }
    Ok(Trajectory {
        context,
        steps,
        terminal: s,
    })
}

/// Inverse-CDF draw from `row` restricted to `support`.
pub(crate) fn sample_categorical(row: &[f64], support: &[usize], u: f64) -> Option<usize> {
    let mut cum = 0.0;
    let mut last_positive = None;
    for &i in support {
        let p = row[i];
        if p > 0.0 {
            cum += p;
            last_positive = Some(i);
            if u < cum {
                return Some(i);
            }
        }
    }
    last_positive
}

/// Draws an index from a probability vector.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Option<usize> {
    let support: Vec<usize> = (0..probs.len()).collect();
    sample_categorical(probs, &support, rng.gen::<f64>())
}
