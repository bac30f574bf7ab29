//! Instance generators.
//!
//! Every generator uses the layer shape `[1, M, ..., M, 1]` with `H - 1`
//! inner layers of `M` states, so `|S| = M (H - 1) + 2`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classes::{row_l1, DynamicsClass, RewardFunctionClass};
use crate::cmdp::{validate_cmdp, LayerPartition, LayeredCmdp, RewardTable, TabularDynamics};
use crate::error::{CmdpError, Result};
use crate::planning::min_reach_probability;
use crate::rng::{stream_rng, Stream};

/// Attempts allowed when a generator has to reject and redraw.
pub const REJECTION_BUDGET: usize = 1000;

/// Slack allowed when checking a reachability target against the DP value.
const REACH_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    DoublyStochastic,
    LowerBound,
    RandomRealizable,
}

fn one() -> usize {
    1
}

fn default_gap() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSpec {
    pub kind: EnvKind,
    /// States per inner layer.
    #[serde(rename = "M", alias = "m")]
    pub m: usize,
    /// Decision steps per episode.
    #[serde(rename = "H", alias = "h")]
    pub h: usize,
    pub n_actions: usize,
    #[serde(default = "one")]
    pub n_contexts: usize,
    #[serde(default = "one")]
    pub size_f: usize,
    #[serde(default = "one")]
    pub size_fp: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_min_target: Option<f64>,
    #[serde(default = "default_gap")]
    pub reward_gap: f64,
    /// One dynamics table for all contexts. The lower-bound instance is
    /// always context-independent.
    #[serde(default)]
    pub shared_dynamics: bool,
}

impl GenSpec {
    pub fn new(kind: EnvKind, m: usize, h: usize, n_actions: usize) -> Self {
        Self {
            kind,
            m,
            h,
            n_actions,
            n_contexts: 1,
            size_f: 1,
            size_fp: 1,
            seed: 0,
            p_min_target: None,
            reward_gap: default_gap(),
            shared_dynamics: false,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CmdpError::Config(e.to_string()))
    }

    pub fn n_states(&self) -> usize {
        self.m * (self.h - 1) + 2
    }

    pub fn check(&self) -> Result<()> {
        let bad = |msg: &str| Err(CmdpError::InvalidParameter(msg.to_string()));
        if self.m == 0 {
            return bad("M must be at least 1");
        }
        if self.h < 2 {
            return bad("H must be at least 2");
        }
        if self.n_actions == 0 || self.n_contexts == 0 {
            return bad("n_actions and n_contexts must be at least 1");
        }
        if self.size_f == 0 || self.size_fp == 0 {
            return bad("class sizes must be at least 1");
        }
        if !(self.reward_gap > 0.0 && self.reward_gap <= 1.0) {
            return bad("reward_gap must lie in (0, 1]");
        }
        if let Some(p) = self.p_min_target {
            if p.is_nan() || p <= 0.0 || self.m as f64 * p > 1.0 + REACH_SLACK {
                return Err(CmdpError::InvalidParameter(format!(
                    "p_min_target {p} infeasible for M = {}",
                    self.m
                )));
            }
        }
        Ok(())
    }

    fn partition(&self) -> LayerPartition {
        let mut sizes = vec![1];
        sizes.extend(std::iter::repeat_n(self.m, self.h - 1));
        sizes.push(1);
        LayerPartition::contiguous(&sizes).expect("generator layer sizes are valid")
    }
}

/// An instance with the function classes generated alongside it.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedEnv {
    pub cmdp: LayeredCmdp,
    pub reward_class: Option<RewardFunctionClass>,
    pub dynamics_class: Option<DynamicsClass>,
}

/// Runs the generator named by `spec.kind`, seeded from `spec.seed`.
///
/// `doubly_stochastic` instances also get realizable reward and dynamics
/// classes of sizes `size_f` and `size_fp`; `lower_bound` gets its best-arm
/// reward class.
pub fn generate(spec: &GenSpec) -> Result<GeneratedEnv> {
    spec.check()?;
    let mut rng = stream_rng(spec.seed, Stream::Generator, 0);
    match spec.kind {
        EnvKind::DoublyStochastic => {
            let cmdp = gen_doubly_stochastic(spec, &mut rng)?;
            let reward_class =
                realizable_reward_class(&cmdp, spec.size_f, spec.reward_gap, &mut rng)?;
            let dynamics_class =
                realizable_dynamics_class(&cmdp, spec.size_fp, spec.reward_gap, &mut rng)?;
            Ok(GeneratedEnv {
                cmdp,
                reward_class: Some(reward_class),
                dynamics_class: Some(dynamics_class),
            })
        }
        EnvKind::LowerBound => {
            let (cmdp, reward_class) = gen_lower_bound_instance(spec, &mut rng)?;
            Ok(GeneratedEnv {
                cmdp,
                reward_class: Some(reward_class),
                dynamics_class: None,
            })
        }
        EnvKind::RandomRealizable => {
            let (cmdp, f, fp) = gen_random_realizable(spec, &mut rng)?;
            Ok(GeneratedEnv {
                cmdp,
                reward_class: Some(f),
                dynamics_class: Some(fp),
            })
        }
    }
}

fn random_simplex<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    // Normalized exponentials: uniform on the simplex.
    let w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        w.iter().map(|x| x / total).collect()
    } else {
        vec![1.0 / n as f64; n]
    }
}

fn factorial_capped(m: usize, cap: usize) -> usize {
    let mut f = 1usize;
    for i in 2..=m {
        f = f.saturating_mul(i);
        if f >= cap {
            return cap;
        }
    }
    f.min(cap)
}

/// `floor * U + (1 - M floor) * sum_k w_k Perm_k` with `min(M!, 20)` random
/// permutations. Rows and columns sum to one and every entry is at least
/// `floor`.
pub fn doubly_stochastic_matrix<R: Rng + ?Sized>(
    m: usize,
    floor: f64,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let spread = m as f64 * floor;
    let n_perms = factorial_capped(m, 20);
    let weights = random_simplex(n_perms, rng);
    let mut mat = vec![vec![floor; m]; m];
    let mut perm: Vec<usize> = (0..m).collect();
    for w in weights {
        perm.shuffle(rng);
        for (i, &j) in perm.iter().enumerate() {
            mat[i][j] += (1.0 - spread) * w;
        }
    }
    mat
}

fn random_rewards<R: Rng + ?Sized>(
    partition: &LayerPartition,
    n_actions: usize,
    rng: &mut R,
) -> RewardTable {
    let mut r = RewardTable::zeros(partition.n_states(), n_actions);
    for s in partition.decision_states() {
        for a in 0..n_actions {
            r.set(s, a, rng.gen::<f64>());
        }
    }
    r
}

fn build(
    spec: &GenSpec,
    partition: LayerPartition,
    dynamics: Vec<TabularDynamics>,
    rewards: Vec<RewardTable>,
) -> Result<LayeredCmdp> {
    let n = spec.n_contexts;
    let cmdp = LayeredCmdp::new(
        partition,
        spec.n_actions,
        vec![1.0 / n as f64; n],
        dynamics,
        rewards,
    )?;
    let report = validate_cmdp(&cmdp);
    if !report.is_ok() {
        return Err(CmdpError::InvalidInstance(report.to_string()));
    }
    Ok(cmdp)
}

fn check_reach(cmdp: &LayeredCmdp, target: f64) -> Result<()> {
    let reach = min_reach_probability(cmdp);
    if reach + REACH_SLACK < target {
        return Err(CmdpError::InvalidInstance(format!(
            "minimum reachability {reach} below target {target}"
        )));
    }
    Ok(())
}

/// Layered dynamics whose first-step rows are bounded below by `p_min_target`
/// (default `1/(2M)`) and whose inner per-action matrices are doubly
/// stochastic with every entry at least `p_min_target`.
///
/// The entrywise floor on inner layers is what makes the reachability target
/// hold for state-dependent policies: a doubly stochastic matrix alone can be
/// a permutation, and two permutations can steer away from a state.
pub fn gen_doubly_stochastic<R: Rng + ?Sized>(spec: &GenSpec, rng: &mut R) -> Result<LayeredCmdp> {
    spec.check()?;
    let m = spec.m;
    let floor = spec.p_min_target.unwrap_or(1.0 / (2.0 * m as f64));
    let partition = spec.partition();
    let n_states = partition.n_states();
    let n_tables = if spec.shared_dynamics {
        1
    } else {
        spec.n_contexts
    };
    let mut tables = Vec::with_capacity(n_tables);
    for _ in 0..n_tables {
        let mut d = TabularDynamics::zeros(n_states, spec.n_actions);
        for a in 0..spec.n_actions {
            let first = random_simplex(m, rng);
            for (j, &next) in partition.layer(1).iter().enumerate() {
                d.set(0, a, next, floor + (1.0 - m as f64 * floor) * first[j]);
            }
            for h in 1..spec.h - 1 {
                let mat = doubly_stochastic_matrix(m, floor, rng);
                for (i, &s) in partition.layer(h).iter().enumerate() {
                    for (j, &next) in partition.layer(h + 1).iter().enumerate() {
                        d.set(s, a, next, mat[i][j]);
                    }
                }
            }
            for &s in partition.layer(spec.h - 1) {
                d.set(s, a, partition.terminal(), 1.0);
            }
        }
        tables.push(d);
    }
    let dynamics = (0..spec.n_contexts)
        .map(|c| tables[c % n_tables].clone())
        .collect();
    let rewards = (0..spec.n_contexts)
        .map(|_| random_rewards(&partition, spec.n_actions, rng))
        .collect();
    let cmdp = build(spec, partition, dynamics, rewards)?;
    check_reach(&cmdp, floor)?;
    Ok(cmdp)
}

/// Hard instance: uniform first transition onto `M` states, identity moves
/// between inner layers, and an independent best-arm problem at every inner
/// state. The reward class holds `size_f` distinct best-arm maps
/// `(c, s) -> a*` with means `0.5 + gap/2` on `a*` and `0.5 - gap/2` elsewhere.
pub fn gen_lower_bound_instance<R: Rng + ?Sized>(
    spec: &GenSpec,
    rng: &mut R,
) -> Result<(LayeredCmdp, RewardFunctionClass)> {
    spec.check()?;
    let m = spec.m;
    let partition = spec.partition();
    let n_states = partition.n_states();
    let n_actions = spec.n_actions;
    let mut d = TabularDynamics::zeros(n_states, n_actions);
    for a in 0..n_actions {
        for &next in partition.layer(1) {
            d.set(0, a, next, 1.0 / m as f64);
        }
        for h in 1..spec.h - 1 {
            for (&s, &next) in partition.layer(h).iter().zip(partition.layer(h + 1)) {
                d.set(s, a, next, 1.0);
            }
        }
        for &s in partition.layer(spec.h - 1) {
            d.set(s, a, partition.terminal(), 1.0);
        }
    }

    let inner: Vec<usize> = (1..spec.h)
        .flat_map(|h| partition.layer(h).to_vec())
        .collect();
    let n_maps = (inner.len() * spec.n_contexts) as f64 * (n_actions as f64).log2();
    if spec.size_f > 1 && n_maps < (spec.size_f as f64).log2() {
        return Err(CmdpError::InvalidParameter(format!(
            "only {}^{} distinct best-arm maps exist, size_f = {}",
            n_actions,
            inner.len() * spec.n_contexts,
            spec.size_f
        )));
    }
    let hi = 0.5 + spec.reward_gap / 2.0;
    let lo = 0.5 - spec.reward_gap / 2.0;
    let mut arms: Vec<Vec<usize>> = Vec::with_capacity(spec.size_f);
    let mut attempts = 0;
    while arms.len() < spec.size_f {
        attempts += 1;
        if attempts > REJECTION_BUDGET * spec.size_f.max(1) {
            return Err(CmdpError::RejectionBudget(
                "could not draw distinct best-arm maps".into(),
            ));
        }
        let map: Vec<usize> = (0..spec.n_contexts * inner.len())
            .map(|_| rng.gen_range(0..n_actions))
            .collect();
        if !arms.contains(&map) {
            arms.push(map);
        }
    }
    let members: Vec<Vec<f64>> = arms
        .iter()
        .map(|map| {
            let mut table = vec![0.0; spec.n_contexts * n_states * n_actions];
            for c in 0..spec.n_contexts {
                for (k, &s) in inner.iter().enumerate() {
                    let best = map[c * inner.len() + k];
                    for a in 0..n_actions {
                        table[(c * n_states + s) * n_actions + a] = if a == best { hi } else { lo };
                    }
                }
                // The start state has no arm structure.
                for a in 0..n_actions {
                    table[c * n_states * n_actions + a] = 0.5;
                }
            }
            table
        })
        .collect();
    let truth = rng.gen_range(0..spec.size_f);
    let rewards = (0..spec.n_contexts)
        .map(|c| {
            let o = c * n_states * n_actions;
            RewardTable::from_vec(
                n_states,
                n_actions,
                members[truth][o..o + n_states * n_actions].to_vec(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let class = RewardFunctionClass::new(spec.n_contexts, n_states, n_actions, members)?
        .with_truth(truth)?;
    let cmdp = build(spec, partition, vec![d; spec.n_contexts], rewards)?;
    Ok((cmdp, class))
}

/// Reward class of `size` members containing the instance's rewards at a
/// random index. Each decoy perturbs about half of the decision entries and
/// differs from the truth by at least `gap` in sup norm.
pub fn realizable_reward_class<R: Rng + ?Sized>(
    cmdp: &LayeredCmdp,
    size: usize,
    gap: f64,
    rng: &mut R,
) -> Result<RewardFunctionClass> {
    if size == 0 {
        return Err(CmdpError::EmptyClass);
    }
    let n_states = cmdp.n_states;
    let n_actions = cmdp.n_actions;
    let truth = RewardFunctionClass::member_from_tables(&cmdp.rewards);
    let slots: Vec<usize> = (0..cmdp.n_contexts())
        .flat_map(|c| {
            cmdp.partition
                .decision_states()
                .flat_map(move |s| (0..n_actions).map(move |a| (c * n_states + s) * n_actions + a))
        })
        .collect();
    let truth_index = rng.gen_range(0..size);
    let mut members = Vec::with_capacity(size);
    for i in 0..size {
        if i == truth_index {
            members.push(truth.clone());
            continue;
        }
        let mut decoy = truth.clone();
        for &k in &slots {
            if rng.gen::<bool>() {
                decoy[k] = (truth[k] + rng.gen_range(-0.5..0.5)).clamp(0.0, 1.0);
            }
        }
        // Pin one entry at distance at least `gap`.
        let k = slots[rng.gen_range(0..slots.len())];
        let up = truth[k] + gap;
        let down = truth[k] - gap;
        decoy[k] = match (up <= 1.0, down >= 0.0) {
            (true, true) => {
                if rng.gen::<bool>() {
                    rng.gen_range(up..=1.0)
                } else {
                    rng.gen_range(0.0..=down)
                }
            }
            (true, false) => rng.gen_range(up..=1.0),
            (false, true) => rng.gen_range(0.0..=down),
            (false, false) => {
                return Err(CmdpError::InvalidParameter(format!(
                    "reward gap {gap} too large"
                )))
            }
        };
        members.push(decoy);
    }
    RewardFunctionClass::new(cmdp.n_contexts(), n_states, n_actions, members)?
        .with_truth(truth_index)
}

fn max_row_l1(a: &[TabularDynamics], b: &[TabularDynamics], partition: &LayerPartition) -> f64 {
    let mut worst: f64 = 0.0;
    for (x, y) in a.iter().zip(b) {
        for s in partition.decision_states() {
            for act in 0..x.n_actions() {
                worst = worst.max(row_l1(x.row(s, act), y.row(s, act)));
            }
        }
    }
    worst
}

/// Dynamics class of `size` members containing the instance's dynamics at a
/// random index. Decoy rows are random mixtures of the true row with a random
/// successor distribution; each decoy's largest row L1 distance from the truth
/// is at least `gap`.
pub fn realizable_dynamics_class<R: Rng + ?Sized>(
    cmdp: &LayeredCmdp,
    size: usize,
    gap: f64,
    rng: &mut R,
) -> Result<DynamicsClass> {
    if size == 0 {
        return Err(CmdpError::EmptyClass);
    }
    let partition = &cmdp.partition;
    let truth_index = rng.gen_range(0..size);
    let mut members = Vec::with_capacity(size);
    let mut attempts = 0;
    while members.len() < size {
        if members.len() == truth_index {
            members.push(cmdp.dynamics.clone());
            continue;
        }
        attempts += 1;
        if attempts > REJECTION_BUDGET {
            return Err(CmdpError::RejectionBudget(format!(
                "no dynamics decoy at L1 distance {gap} after {REJECTION_BUDGET} attempts"
            )));
        }
        let decoy: Vec<TabularDynamics> = cmdp
            .dynamics
            .iter()
            .map(|d| {
                let mut out = d.clone();
                for s in partition.decision_states() {
                    let succ = partition.successors(s);
                    for a in 0..d.n_actions() {
                        let w = rng.gen::<f64>();
                        let noise = random_simplex(succ.len(), rng);
                        for (&next, &u) in succ.iter().zip(&noise) {
                            out.set(s, a, next, (1.0 - w) * d.prob(s, a, next) + w * u);
                        }
                    }
                }
                out
            })
            .collect();
        if max_row_l1(&decoy, &cmdp.dynamics, partition) >= gap {
            members.push(decoy);
        }
    }
    DynamicsClass::new(
        partition.clone(),
        cmdp.n_contexts(),
        cmdp.n_actions,
        members,
    )?
    .with_truth(truth_index)
}

/// Random dynamics and rewards with realizable classes embedding the truth.
/// With `p_min_target` set, every successor entry is at least the target, so
/// the reachability target holds.
pub fn gen_random_realizable<R: Rng + ?Sized>(
    spec: &GenSpec,
    rng: &mut R,
) -> Result<(LayeredCmdp, RewardFunctionClass, DynamicsClass)> {
    spec.check()?;
    let partition = spec.partition();
    let n_states = partition.n_states();
    let floor = spec.p_min_target.unwrap_or(0.0);
    for _ in 0..REJECTION_BUDGET {
        let n_tables = if spec.shared_dynamics {
            1
        } else {
            spec.n_contexts
        };
        let tables: Vec<TabularDynamics> = (0..n_tables)
            .map(|_| {
                let mut d = TabularDynamics::zeros(n_states, spec.n_actions);
                for s in partition.decision_states() {
                    let succ = partition.successors(s);
                    let spread = succ.len() as f64 * floor;
                    for a in 0..spec.n_actions {
                        let row = random_simplex(succ.len(), rng);
                        for (&next, &p) in succ.iter().zip(&row) {
                            d.set(s, a, next, floor + (1.0 - spread) * p);
                        }
                    }
                }
                d
            })
            .collect();
        let dynamics = (0..spec.n_contexts)
            .map(|c| tables[c % n_tables].clone())
            .collect();
        let rewards = (0..spec.n_contexts)
            .map(|_| random_rewards(&partition, spec.n_actions, rng))
            .collect();
        let cmdp = build(spec, partition.clone(), dynamics, rewards)?;
        if spec.p_min_target.is_some() && check_reach(&cmdp, floor).is_err() {
            continue;
        }
        let f = match realizable_reward_class(&cmdp, spec.size_f, spec.reward_gap, rng) {
            Ok(f) => f,
            Err(CmdpError::InvalidParameter(_)) => continue,
            Err(e) => return Err(e),
        };
        let fp = realizable_dynamics_class(&cmdp, spec.size_fp, spec.reward_gap, rng)?;
        return Ok((cmdp, f, fp));
    }
    Err(CmdpError::RejectionBudget(format!(
        "no instance met the constraints after {REJECTION_BUDGET} attempts"
    )))
}
