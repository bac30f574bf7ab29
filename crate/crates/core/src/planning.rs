//! Occupancy measures, backward-induction planning, policy evaluation and
//! minimum-reachability computation on layered MDPs.

use crate::cmdp::{DeterministicPolicy, LayerPartition, LayeredCmdp, RewardTable, TabularDynamics};
use crate::error::{CmdpError, Result};

/// Visitation probabilities `q_h(s, a | pi, P)`.
///
/// Each state belongs to exactly one layer, so tables are indexed by `(s, a)`
/// and the layer is implied. The terminal state carries the full final-layer
/// mass on its policy action.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyTable {
    partition: LayerPartition,
    n_actions: usize,
    q: Vec<f64>,
    q_state: Vec<f64>,
}

impl OccupancyTable {
    /// `q_h(s, a)` with `s` in layer `h`.
    #[inline]
    pub fn sa(&self, s: usize, a: usize) -> f64 {
        self.q[s * self.n_actions + a]
    }

    /// `q_h(s)` with `s` in layer `h`.
    #[inline]
    pub fn state(&self, s: usize) -> f64 {
        self.q_state[s]
    }

    /// `q_h(s, a)`, zero when `s` is not in layer `h`.
    pub fn at(&self, h: usize, s: usize, a: usize) -> f64 {
        if self.partition.layer_of(s) == h {
            self.sa(s, a)
        } else {
            0.0
        }
    }

    /// `sum_{s in S_h, a} q_h(s, a)`.
    pub fn layer_mass(&self, h: usize) -> f64 {
        self.partition
            .layer(h)
            .iter()
            .map(|&s| (0..self.n_actions).map(|a| self.sa(s, a)).sum::<f64>())
            .sum()
    }

    pub fn state_masses(&self) -> &[f64] {
        &self.q_state
    }

    pub fn partition(&self) -> &LayerPartition {
        &self.partition
    }
}

fn check_dims(
    policy: &DeterministicPolicy,
    dynamics: &TabularDynamics,
    partition: &LayerPartition,
) -> Result<()> {
    if dynamics.n_states() != partition.n_states() {
        return Err(CmdpError::DimensionMismatch(format!(
            "dynamics over {} states, partition over {}",
            dynamics.n_states(),
            partition.n_states()
        )));
    }
    policy.check(partition.n_states(), dynamics.n_actions())
}

fn check_rewards(rewards: &RewardTable, dynamics: &TabularDynamics) -> Result<()> {
    if rewards.n_states() != dynamics.n_states() || rewards.n_actions() != dynamics.n_actions() {
        return Err(CmdpError::DimensionMismatch(
            "reward table shape disagrees with dynamics".into(),
        ));
    }
    rewards.check_plannable()
}

/// Forward recursion for the occupancy measure of a deterministic policy.
pub fn compute_occupancy(
    policy: &DeterministicPolicy,
    dynamics: &TabularDynamics,
    partition: &LayerPartition,
) -> Result<OccupancyTable> {
    check_dims(policy, dynamics, partition)?;
    let n_states = partition.n_states();
    let n_actions = dynamics.n_actions();
    let mut q = vec![0.0; n_states * n_actions];
    let mut q_state = vec![0.0; n_states];
    q_state[partition.start()] = 1.0;
    for h in 0..=partition.horizon() {
        for &s in partition.layer(h) {
            let mass = q_state[s];
            let a = policy.action(s);
            q[s * n_actions + a] = mass;
            if mass == 0.0 {
                continue;
            }
            for &next in partition.successors(s) {
                q_state[next] += mass * dynamics.prob(s, a, next);
            }
        }
    }
    Ok(OccupancyTable {
        partition: partition.clone(),
        n_actions,
        q,
        q_state,
    })
}

/// `sum_h sum_{s, a} q_h(s, a | pi, P) r(s, a)` over decision layers.
pub fn value_of_policy(
    policy: &DeterministicPolicy,
    dynamics: &TabularDynamics,
    rewards: &RewardTable,
    partition: &LayerPartition,
) -> Result<f64> {
    check_rewards(rewards, dynamics)?;
    let occ = compute_occupancy(policy, dynamics, partition)?;
    Ok(partition
        .decision_states()
        .map(|s| {
            let a = policy.action(s);
            occ.sa(s, a) * rewards.get(s, a)
        })
        .sum())
}

/// Backward policy evaluation; returns `V^pi_h(s)` for every state.
pub fn evaluate_policy(
    policy: &DeterministicPolicy,
    dynamics: &TabularDynamics,
    rewards: &RewardTable,
    partition: &LayerPartition,
) -> Result<Vec<f64>> {
    check_dims(policy, dynamics, partition)?;
    check_rewards(rewards, dynamics)?;
    let mut v = vec![0.0; partition.n_states()];
    for h in (0..partition.horizon()).rev() {
        for &s in partition.layer(h) {
            let a = policy.action(s);
            v[s] = rewards.get(s, a) + expectation(dynamics.row(s, a), partition.successors(s), &v);
        }
    }
    Ok(v)
}

#[inline]
pub(crate) fn expectation(row: &[f64], support: &[usize], v: &[f64]) -> f64 {
    support.iter().map(|&next| row[next] * v[next]).sum()
}

/// Result of backward induction.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub policy: DeterministicPolicy,
    /// `V*_0(s_0)`.
    pub value: f64,
    /// `V*_h(s)` for every state.
    pub state_values: Vec<f64>,
}

/// Finite-horizon backward induction. Ties go to the lowest action index.
///
/// Rewards may exceed 1; NaN and negative infinity are rejected.
pub fn plan(
    dynamics: &TabularDynamics,
    rewards: &RewardTable,
    partition: &LayerPartition,
) -> Result<Plan> {
    if dynamics.n_states() != partition.n_states() {
        return Err(CmdpError::DimensionMismatch(format!(
            "dynamics over {} states, partition over {}",
            dynamics.n_states(),
            partition.n_states()
        )));
    }
    check_rewards(rewards, dynamics)?;
    let n_actions = dynamics.n_actions();
    let mut v = vec![0.0; partition.n_states()];
    let mut actions = vec![0; partition.n_states()];
    for h in (0..partition.horizon()).rev() {
        for &s in partition.layer(h) {
            let succ = partition.successors(s);
            let mut best = f64::NEG_INFINITY;
            let mut best_a = 0;
            for a in 0..n_actions {
                let qv = rewards.get(s, a) + expectation(dynamics.row(s, a), succ, &v);
                if qv > best {
                    best = qv;
                    best_a = a;
                }
            }
            v[s] = best;
            actions[s] = best_a;
        }
    }
    Ok(Plan {
        policy: DeterministicPolicy::new(actions),
        value: v[partition.start()],
        state_values: v,
    })
}

/// `min_pi q_h(s | pi, P)` for every state `s` under one dynamics table.
pub fn min_reach_by_state(dynamics: &TabularDynamics, partition: &LayerPartition) -> Vec<f64> {
    let n = partition.n_states();
    let mut out = vec![0.0; n];
    let mut r = vec![0.0; n];
    for target in 0..n {
        let ht = partition.layer_of(target);
        r.iter_mut().for_each(|x| *x = 0.0);
        r[target] = 1.0;
        for h in (0..ht).rev() {
            for &x in partition.layer(h) {
                let succ = partition.successors(x);
                r[x] = (0..dynamics.n_actions())
                    .map(|a| expectation(dynamics.row(x, a), succ, &r))
                    .fold(f64::INFINITY, f64::min);
            }
        }
        out[target] = r[partition.start()];
    }
    out
}

/// Smallest probability, over contexts, states and deterministic policies,
/// of reaching a state.
pub fn min_reach_probability(cmdp: &LayeredCmdp) -> f64 {
    cmdp.dynamics
        .iter()
        .flat_map(|d| min_reach_by_state(d, &cmdp.partition))
        .fold(f64::INFINITY, f64::min)
}

/// Optimal value `V*(s_0)` for every context of the true model.
pub fn optimal_values(cmdp: &LayeredCmdp) -> Result<Vec<f64>> {
    (0..cmdp.n_contexts())
        .map(|c| Ok(plan(&cmdp.dynamics[c], &cmdp.rewards[c], &cmdp.partition)?.value))
        .collect()
}

/// `E_c[V^{pi(c)}]` under the true context distribution.
pub fn exact_expected_value(cmdp: &LayeredCmdp, policies: &[DeterministicPolicy]) -> Result<f64> {
    if policies.len() < cmdp.n_contexts() {
        return Err(CmdpError::MissingPolicy(policies.len()));
    }
    let mut total = 0.0;
    for (c, weight) in cmdp.context_dist.iter().enumerate() {
        total += weight
            * value_of_policy(
                &policies[c],
                &cmdp.dynamics[c],
                &cmdp.rewards[c],
                &cmdp.partition,
            )?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmdp::{validate_cmdp, LayeredCmdp};

    fn chain(h: usize, n_actions: usize, reward: f64) -> LayeredCmdp {
        let partition = LayerPartition::contiguous(&vec![1; h + 1]).unwrap();
        let n = h + 1;
        let mut dynamics = TabularDynamics::zeros(n, n_actions);
        let mut rewards = RewardTable::zeros(n, n_actions);
        for s in 0..h {
            for a in 0..n_actions {
                dynamics.set(s, a, s + 1, 1.0);
                rewards.set(s, a, reward);
            }
        }
        LayeredCmdp::new(
            partition,
            n_actions,
            vec![1.0],
            vec![dynamics],
            vec![rewards],
        )
        .unwrap()
    }

    /// s0 -> {1, 2} -> sH with P(1 | s0, a) = 0.3 for every action.
    fn split(p: f64) -> (TabularDynamics, LayerPartition) {
        let partition = LayerPartition::contiguous(&[1, 2, 1]).unwrap();
        let mut d = TabularDynamics::zeros(4, 2);
        for a in 0..2 {
            d.set(0, a, 1, p);
            d.set(0, a, 2, 1.0 - p);
            d.set(1, a, 3, 1.0);
            d.set(2, a, 3, 1.0);
        }
        (d, partition)
    }

    #[test]
    fn single_step_occupancy() {
        let cmdp = chain(1, 3, 0.0);
        let pi = DeterministicPolicy::constant(2, 2);
        let occ = compute_occupancy(&pi, &cmdp.dynamics[0], &cmdp.partition).unwrap();
        assert_eq!(occ.sa(0, 2), 1.0);
        assert_eq!(occ.sa(0, 0), 0.0);
        assert_eq!(occ.layer_mass(0), 1.0);
    }

    #[test]
    fn split_occupancy_by_hand() {
        let (d, partition) = split(0.3);
        let occ = compute_occupancy(&DeterministicPolicy::constant(4, 1), &d, &partition).unwrap();
        assert_eq!(occ.state(1), 0.3);
        assert_eq!(occ.state(2), 0.7);
        assert_eq!(occ.at(1, 1, 1), 0.3);
        assert_eq!(occ.at(0, 1, 1), 0.0);
        assert!((occ.layer_mass(1) - 1.0).abs() <= 1e-12);
        assert_eq!(occ.state(3), 1.0);
    }

    #[test]
    fn chain_with_unit_rewards_plans_to_horizon() {
        let cmdp = chain(3, 2, 1.0);
        let p = plan(&cmdp.dynamics[0], &cmdp.rewards[0], &cmdp.partition).unwrap();
        assert_eq!(p.value, 3.0);
        assert!(p.policy.actions().iter().all(|&a| a == 0));
        let v = value_of_policy(
            &p.policy,
            &cmdp.dynamics[0],
            &cmdp.rewards[0],
            &cmdp.partition,
        )
        .unwrap();
        assert_eq!(v, 3.0);
    }

    #[test]
    fn zero_rewards_plan_to_zero() {
        let cmdp = chain(4, 3, 0.0);
        let p = plan(&cmdp.dynamics[0], &cmdp.rewards[0], &cmdp.partition).unwrap();
        assert_eq!(p.value, 0.0);
    }

    #[test]
    fn plan_rejects_nan_and_negative_infinity() {
        let cmdp = chain(2, 2, 0.5);
        let mut r = cmdp.rewards[0].clone();
        r.set(1, 1, f64::NAN);
        assert!(plan(&cmdp.dynamics[0], &r, &cmdp.partition).is_err());
        r.set(1, 1, f64::NEG_INFINITY);
        assert!(plan(&cmdp.dynamics[0], &r, &cmdp.partition).is_err());
        r.set(1, 1, 7.5);
        let p = plan(&cmdp.dynamics[0], &r, &cmdp.partition).unwrap();
        assert_eq!(p.value, 8.0);
        assert_eq!(p.policy.action(1), 1);
    }

    #[test]
    fn occupancy_rejects_mismatched_policy() {
        let (d, partition) = split(0.5);
        let short = DeterministicPolicy::constant(3, 0);
        assert!(compute_occupancy(&short, &d, &partition).is_err());
        let bad_action = DeterministicPolicy::constant(4, 5);
        assert!(compute_occupancy(&bad_action, &d, &partition).is_err());
    }

    #[test]
    fn deterministic_chain_is_always_reached() {
        let cmdp = chain(4, 2, 0.3);
        assert_eq!(min_reach_probability(&cmdp), 1.0);
    }

    #[test]
    fn reach_probability_is_minimized_over_actions() {
        let partition = LayerPartition::contiguous(&[1, 2, 1]).unwrap();
        let mut d = TabularDynamics::zeros(4, 2);
        d.set(0, 0, 1, 0.3);
        d.set(0, 0, 2, 0.7);
        d.set(0, 1, 1, 0.6);
        d.set(0, 1, 2, 0.4);
        for s in 1..3 {
            for a in 0..2 {
                d.set(s, a, 3, 1.0);
            }
        }
        let by_state = min_reach_by_state(&d, &partition);
        assert_eq!(by_state, vec![1.0, 0.3, 0.4, 1.0]);
    }

    #[test]
    fn expected_value_over_contexts() {
        let mut cmdp = chain(3, 1, 1.0 / 3.0);
        cmdp.context_dist = vec![0.5, 0.5];
        cmdp.dynamics.push(cmdp.dynamics[0].clone());
        let mut r = cmdp.rewards[0].clone();
        for s in 0..3 {
            r.set(s, 0, 1.0);
        }
        cmdp.rewards.push(r);
        assert!(validate_cmdp(&cmdp).is_ok());
        let pols = vec![DeterministicPolicy::constant(4, 0); 2];
        let v = exact_expected_value(&cmdp, &pols).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
        assert!(exact_expected_value(&cmdp, &pols[..1]).is_err());
    }

    #[test]
    fn single_context_expected_value_is_policy_value() {
        let cmdp = chain(3, 2, 0.4);
        let pi = DeterministicPolicy::constant(4, 1);
        let direct =
            value_of_policy(&pi, &cmdp.dynamics[0], &cmdp.rewards[0], &cmdp.partition).unwrap();
        assert_eq!(exact_expected_value(&cmdp, &[pi]).unwrap(), direct);
    }
}
