//! Optimistic planning over L1 confidence sets around empirical dynamics.
//!
//! The joint maximization over policies and dynamics inside per-(s, a) L1
//! balls is solved by backward induction: with next-layer values fixed, the
//! best transition row in the ball is found greedily by moving up to `xi / 2`
//! mass onto the highest-valued successor, taken from the lowest-valued
//! successors first. Rows chosen this way define `P_hat`, and the returned
//! deterministic policy is optimal for `(P_hat, r_hat)`.

use crate::cmdp::{DeterministicPolicy, LayerPartition, RewardTable, TabularDynamics};
use crate::error::{CmdpError, Result};
use crate::planning::expectation;

/// Optimistic model `(r_hat, P_hat)` and its optimal deterministic policy.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimisticModel {
    pub r_hat: RewardTable,
    pub p_hat: TabularDynamics,
    pub value: f64,
    pub policy: DeterministicPolicy,
}

/// Maximizes `sum_i p_i v_i` over `{p in simplex : ||p - base||_1 <= radius}`.
///
/// Ties: mass is added to the lowest index among maximal values and removed
/// from the lowest index among minimal values first.
pub fn inner_max(base: &[f64], values: &[f64], radius: f64) -> Vec<f64> {
    let n = base.len();
    let mut p = base.to_vec();
    if n == 0 {
        return p;
    }
    let mut best = 0;
    for i in 1..n {
        if values[i] > values[best] {
            best = i;
        }
    }
    let add = (radius / 2.0).min(1.0 - p[best]).max(0.0);
    p[best] += add;
    let mut ascending: Vec<usize> = (0..n).filter(|&i| i != best).collect();
    ascending.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
    let mut excess = add;
    for j in ascending {
        if excess <= 0.0 {
            break;
        }
        let take = excess.min(p[j]);
        p[j] -= take;
        excess -= take;
    }
    p
}

/// Empirical row restricted to `support`; all-zero rows become uniform.
fn base_row(p_bar: &TabularDynamics, s: usize, a: usize, support: &[usize]) -> Vec<f64> {
    let row = p_bar.row(s, a);
    let local: Vec<f64> = support.iter().map(|&i| row[i]).collect();
    let sum: f64 = local.iter().sum();
    if sum <= 0.0 {
        vec![1.0 / support.len() as f64; support.len()]
    } else {
        local
    }
}

/// Optimistic backward induction over `(policy, dynamics)` with
/// `||P(.|s,a) - P_bar(.|s,a)||_1 <= xi(s,a)`. `xi` is indexed `s * A + a`.
pub fn foa_optimistic_plan(
    r_hat: &RewardTable,
    p_bar: &TabularDynamics,
    xi: &[f64],
    partition: &LayerPartition,
) -> Result<OptimisticModel> {
    let n_states = partition.n_states();
    let n_actions = p_bar.n_actions();
    if p_bar.n_states() != n_states
        || r_hat.n_states() != n_states
        || r_hat.n_actions() != n_actions
        || xi.len() != n_states * n_actions
    {
        return Err(CmdpError::DimensionMismatch(
            "optimistic planning inputs disagree in shape".into(),
        ));
    }
    if let Some(x) = xi.iter().find(|x| x.is_nan() || **x < 0.0) {
        return Err(CmdpError::InvalidParameter(format!(
            "confidence width {x} must be nonnegative"
        )));
    }
    r_hat.check_plannable()?;

    let mut p_hat = TabularDynamics::zeros(n_states, n_actions);
    let mut v = vec![0.0; n_states];
    let mut actions = vec![0; n_states];
    for h in (0..partition.horizon()).rev() {
        let succ = partition.successors(partition.layer(h)[0]);
        let next_values: Vec<f64> = succ.iter().map(|&i| v[i]).collect();
        for &s in partition.layer(h) {
            let mut best = f64::NEG_INFINITY;
            let mut best_a = 0;
            for a in 0..n_actions {
                let base = base_row(p_bar, s, a, succ);
                let row = inner_max(&base, &next_values, xi[s * n_actions + a]);
                for (&next, &p) in succ.iter().zip(&row) {
                    p_hat.set(s, a, next, p);
                }
                let q = r_hat.get(s, a) + expectation(p_hat.row(s, a), succ, &v);
                if q > best {
                    best = q;
                    best_a = a;
                }
            }
            v[s] = best;
            actions[s] = best_a;
        }
    }
    Ok(OptimisticModel {
        r_hat: r_hat.clone(),
        p_hat,
        value: v[partition.start()],
        policy: DeterministicPolicy::new(actions),
    })
}
