//! Random instances and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use cmdp_lab::cmdp::{
    DeterministicPolicy, LayerPartition, LayeredCmdp, RewardTable, TabularDynamics,
};
use rand::Rng;

/// Layer sizes `[1, n_1, ..., n_{H-1}, 1]` with at most `max_states` states.
pub fn random_partition<R: Rng>(
    rng: &mut R,
    max_h: usize,
    max_states: usize,
    max_width: usize,
) -> LayerPartition {
    loop {
        let h = rng.gen_range(1..=max_h);
        let mut sizes = vec![1];
        for _ in 1..h {
            sizes.push(rng.gen_range(1..=max_width));
        }
        sizes.push(1);
        if sizes.iter().sum::<usize>() <= max_states {
            return LayerPartition::contiguous(&sizes).unwrap();
        }
    }
}

pub fn random_row<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 1e-3).collect();
    let total: f64 = w.iter().sum();
    let mut row: Vec<f64> = w.iter().map(|x| x / total).collect();
    // Sparse rows now and then.
    if n > 1 && rng.gen_bool(0.2) {
        let k = rng.gen_range(0..n);
        row = vec![0.0; n];
        row[k] = 1.0;
    }
    row
}

pub fn random_dynamics<R: Rng>(
    rng: &mut R,
    partition: &LayerPartition,
    n_actions: usize,
) -> TabularDynamics {
    let mut d = TabularDynamics::zeros(partition.n_states(), n_actions);
    for s in partition.decision_states() {
        let succ = partition.successors(s);
        for a in 0..n_actions {
            for (&next, p) in succ.iter().zip(random_row(rng, succ.len())) {
                d.set(s, a, next, p);
            }
        }
    }
    d
}

pub fn random_rewards<R: Rng>(
    rng: &mut R,
    partition: &LayerPartition,
    n_actions: usize,
    top: f64,
) -> RewardTable {
    let mut r = RewardTable::zeros(partition.n_states(), n_actions);
    for s in partition.decision_states() {
        for a in 0..n_actions {
            r.set(s, a, rng.gen::<f64>() * top);
        }
    }
    r
}

pub fn random_policy<R: Rng>(
    rng: &mut R,
    n_states: usize,
    n_actions: usize,
) -> DeterministicPolicy {
    DeterministicPolicy::new((0..n_states).map(|_| rng.gen_range(0..n_actions)).collect())
}

pub fn random_cmdp<R: Rng>(
    rng: &mut R,
    n_contexts: usize,
    max_h: usize,
    max_states: usize,
    max_actions: usize,
) -> LayeredCmdp {
    let partition = random_partition(rng, max_h, max_states, 4);
    let n_actions = rng.gen_range(1..=max_actions);
    let dist = random_row(rng, n_contexts);
    let dynamics = (0..n_contexts)
        .map(|_| random_dynamics(rng, &partition, n_actions))
        .collect();
    let rewards = (0..n_contexts)
        .map(|_| random_rewards(rng, &partition, n_actions, 1.0))
        .collect();
    LayeredCmdp::new(partition, n_actions, dist, dynamics, rewards).unwrap()
}

/// Every deterministic policy over the decision states; the terminal state
/// always takes action 0.
pub fn all_policies(partition: &LayerPartition, n_actions: usize) -> Vec<DeterministicPolicy> {
    let decision: Vec<usize> = partition.decision_states().collect();
    let total = n_actions.pow(decision.len() as u32);
    (0..total)
        .map(|mut code| {
            let mut actions = vec![0; partition.n_states()];
            for &s in &decision {
                actions[s] = code % n_actions;
                code /= n_actions;
            }
            DeterministicPolicy::new(actions)
        })
        .collect()
}

/// Value of `policy` by forward simulation of the state distribution; no
/// occupancy tables involved.
pub fn forward_value(
    policy: &DeterministicPolicy,
    d: &TabularDynamics,
    r: &RewardTable,
    partition: &LayerPartition,
) -> f64 {
    let mut dist = vec![0.0; partition.n_states()];
    dist[partition.start()] = 1.0;
    let mut value = 0.0;
    for h in 0..partition.horizon() {
        let mut next = vec![0.0; partition.n_states()];
        for &s in partition.layer(h) {
            let a = policy.action(s);
            value += dist[s] * r.get(s, a);
            for (n, p) in d.row(s, a).iter().enumerate() {
                next[n] += dist[s] * p;
            }
        }
        dist = next;
    }
    value
}
