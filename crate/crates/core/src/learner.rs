//! Optimistic regret-minimizing learners for layered contextual MDPs.
//!
//! Three variants share one engine:
//!
//! * [`Learner::rm_kd`]: known per-context dynamics. Bonus denominators weight
//!   past action matches by the true visitation probability.
//! * [`Learner::rm_ucid`]: unknown context-independent dynamics. Transition
//!   counts feed an empirical model and [`foa_optimistic_plan`] picks the
//!   most favourable dynamics inside per-(s, a) L1 balls.
//! * [`Learner::rm_ucdd`]: unknown context-dependent dynamics, estimated by
//!   least squares over a finite [`DynamicsClass`].
//!
//! The first `|A|` rounds play the constant policies `pi_i(c; s) = a_i`. At a
//! later round `t` with context `c`, the learner needs `pi_k(c; .)` for every
//! `k = |A|+1..=t`, since each one feeds the bonus denominators of the next.
//! These recomputations are pure, so each context keeps a cursor that has
//! already materialized `pi_1(c; .), ..., pi_m(c; .)` and only extends it.

use crate::classes::{DynamicsClass, RewardFunctionClass, SampleBatch};
use crate::cmdp::{DeterministicPolicy, LayerPartition, LayeredCmdp, RewardTable, TabularDynamics};
use crate::error::{CmdpError, Result};
use crate::foa::foa_optimistic_plan;
use crate::planning::{compute_occupancy, plan};
use crate::schedules::{BonusMode, Schedules};
use crate::trajectory::Trajectory;

/// Floor applied to bonus denominators of unreachable (s, a) pairs.
const MIN_DENOMINATOR: f64 = 1e-12;

/// The part of an instance every learner may see: sizes and the layer
/// partition. The context distribution, true rewards, and truth indices are
/// not reachable from here.
///
/// ```compile_fail
/// # use cmdp_lab::learner::LearnerView;
/// fn peek(view: &LearnerView) -> &[f64] {
///     view.context_dist()
/// }
/// ```
///
/// ```compile_fail
/// # use cmdp_lab::learner::LearnerView;
/// fn peek(view: &LearnerView) {
///     let _ = view.dynamics(0);
/// }
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerView {
    n_states: usize,
    n_actions: usize,
    n_contexts: usize,
    partition: LayerPartition,
}

impl LearnerView {
    pub fn of(cmdp: &LayeredCmdp) -> Self {
        Self {
            n_states: cmdp.n_states,
            n_actions: cmdp.n_actions,
            n_contexts: cmdp.n_contexts(),
            partition: cmdp.partition.clone(),
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_contexts(&self) -> usize {
        self.n_contexts
    }

    pub fn partition(&self) -> &LayerPartition {
        &self.partition
    }
}

/// [`LearnerView`] plus read access to the true per-context dynamics.
///
/// ```compile_fail
/// # use cmdp_lab::learner::KnownDynamicsView;
/// fn peek(view: &KnownDynamicsView) {
///     let _ = view.rewards(0);
/// }
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct KnownDynamicsView {
    view: LearnerView,
    dynamics: Vec<TabularDynamics>,
}

impl KnownDynamicsView {
    pub fn of(cmdp: &LayeredCmdp) -> Self {
        Self {
            view: LearnerView::of(cmdp),
            dynamics: cmdp.dynamics.clone(),
        }
    }

    pub fn view(&self) -> &LearnerView {
        &self.view
    }

    pub fn dynamics(&self, context: usize) -> Option<&TabularDynamics> {
        self.dynamics.get(context)
    }
}

/// Visit counters `N(s, a)` and `N(s, a, s')`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionCounts {
    n_states: usize,
    n_actions: usize,
    sa: Vec<u64>,
    sas: Vec<u64>,
}

impl TransitionCounts {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            sa: vec![0; n_states * n_actions],
            sas: vec![0; n_states * n_actions * n_states],
        }
    }

    pub fn add(&mut self, s: usize, a: usize, next: usize) {
        let i = s * self.n_actions + a;
        self.sa[i] += 1;
        self.sas[i * self.n_states + next] += 1;
    }

    pub fn visits(&self, s: usize, a: usize) -> u64 {
        self.sa[s * self.n_actions + a]
    }

    pub fn transitions(&self, s: usize, a: usize, next: usize) -> u64 {
        self.sas[(s * self.n_actions + a) * self.n_states + next]
    }

    /// `P_bar(s' | s, a) = N(s, a, s') / max(1, N(s, a))`; unvisited rows are zero.
    pub fn empirical(&self) -> TabularDynamics {
        let mut d = TabularDynamics::zeros(self.n_states, self.n_actions);
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let n = self.visits(s, a).max(1) as f64;
                for next in 0..self.n_states {
                    let k = self.transitions(s, a, next);
                    if k > 0 {
                        d.set(s, a, next, k as f64 / n);
                    }
                }
            }
        }
        d
    }
}

/// Which of the three learners this is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    RmKd,
    RmUcid,
    RmUcdd,
}

enum Backend {
    Known {
        dynamics: Vec<TabularDynamics>,
    },
    Empirical {
        p_min: f64,
        counts: TransitionCounts,
        xi_override: Option<f64>,
    },
    Class {
        p_min: f64,
        class: DynamicsClass,
        /// `P_hat_k` for every round `k`; placeholders during initialization.
        fits: Vec<usize>,
    },
}

impl Backend {
    fn algorithm(&self) -> Algorithm {
        match self {
            Backend::Known { .. } => Algorithm::RmKd,
            Backend::Empirical { .. } => Algorithm::RmUcid,
            Backend::Class { .. } => Algorithm::RmUcdd,
        }
    }
}

/// Everything computed for `pi_k(c; .)` at one (round, context).
#[derive(Debug, Clone, PartialEq)]
pub struct RoundModel {
    pub round: usize,
    pub context: usize,
    pub policy: DeterministicPolicy,
    /// Optimistic rewards `r_hat_k^c`.
    pub r_hat: RewardTable,
    /// Dynamics planned on: true (KD), optimistic (UCID), fitted (UCDD).
    pub p_hat: TabularDynamics,
    /// Optimal value of `policy` on `(p_hat, r_hat)`.
    pub value: f64,
    /// This context's summand of the contextual potential at round `k`.
    pub potential_term: f64,
    /// Dynamics confidence widths used (UCID only), indexed `s * A + a`.
    pub xi: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
struct RoundRecord {
    policy: DeterministicPolicy,
    value: Option<f64>,
    potential_term: Option<f64>,
}

#[derive(Debug, Clone)]
struct Cursor {
    /// Next round index to materialize (rounds are 1-based).
    next_round: usize,
    /// `sum_{i < next_round} 1[a = pi_i(c; s)]`.
    matches: Vec<u32>,
    /// `sum_{i < next_round} 1[a = pi_i(c; s)] q(s | pi_i(c; .), P^c)` (KD only).
    weighted: Vec<f64>,
    /// Transition counts over rounds `1..=counted_rounds` (UCID only).
    counts: Option<TransitionCounts>,
    counted_rounds: usize,
    records: Vec<RoundRecord>,
    latest: Option<RoundModel>,
}

impl Cursor {
    fn new(n_states: usize, n_actions: usize, with_counts: bool) -> Self {
        Self {
            next_round: 1,
            matches: vec![0; n_states * n_actions],
            weighted: vec![0.0; n_states * n_actions],
            counts: with_counts.then(|| TransitionCounts::new(n_states, n_actions)),
            counted_rounds: 0,
            records: Vec::new(),
            latest: None,
        }
    }
}

/// Per-round output of [`Learner::select`].
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub round: usize,
    pub context: usize,
    pub policy: DeterministicPolicy,
    /// `None` during initialization rounds.
    pub optimistic_value: Option<f64>,
    pub beta: f64,
    /// `gamma_t` (UCDD only).
    pub gamma: Option<f64>,
    /// Mean dynamics confidence width over decision pairs (UCID only).
    pub xi_mean: Option<f64>,
}

type BonusFn = Box<dyn Fn(usize) -> f64 + Send + Sync>;

/// A stateful online learner; one round at a time.
pub struct Learner {
    view: LearnerView,
    schedules: Schedules,
    rewards: RewardFunctionClass,
    backend: Backend,
    rounds_played: usize,
    /// `f_hat_k` for every round `k`; placeholders during initialization.
    reward_fits: Vec<usize>,
    /// Observed `(s, a, s')` of every completed round.
    history: Vec<Vec<(usize, usize, usize)>>,
    cursors: Vec<Option<Cursor>>,
    memoize: bool,
    bonus_override: Option<BonusFn>,
}

impl std::fmt::Debug for Learner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Learner")
            .field("algorithm", &self.algorithm())
            .field("rounds_played", &self.rounds_played)
            .field("memoize", &self.memoize)
            .finish()
    }
}

fn check_p_min(p_min: f64) -> Result<()> {
    if !(p_min > 0.0 && p_min <= 1.0) {
        return Err(CmdpError::InvalidParameter(format!(
            "p_min {p_min} outside (0, 1]"
        )));
    }
    Ok(())
}

fn check_class_dims(view: &LearnerView, rewards: &RewardFunctionClass) -> Result<()> {
    if rewards.dims() != (view.n_contexts, view.n_states, view.n_actions) {
        return Err(CmdpError::DimensionMismatch(format!(
            "reward class dims {:?} disagree with instance ({}, {}, {})",
            rewards.dims(),
            view.n_contexts,
            view.n_states,
            view.n_actions
        )));
    }
    Ok(())
}

impl Learner {
    fn with_backend(
        view: LearnerView,
        rewards: &RewardFunctionClass,
        schedules: Schedules,
        backend: Backend,
    ) -> Result<Self> {
        check_class_dims(&view, rewards)?;
        let n_contexts = view.n_contexts;
        let n_actions = view.n_actions;
        Ok(Self {
            view,
            schedules,
            rewards: rewards.without_truth(),
            backend,
            rounds_played: 0,
            reward_fits: vec![0; n_actions + 1],
            history: Vec::new(),
            cursors: vec![None; n_contexts],
            memoize: true,
            bonus_override: None,
        })
    }

    /// Known-dynamics learner.
    pub fn rm_kd(
        env: KnownDynamicsView,
        rewards: &RewardFunctionClass,
        schedules: Schedules,
    ) -> Result<Self> {
        let KnownDynamicsView { view, dynamics } = env;
        Self::with_backend(view, rewards, schedules, Backend::Known { dynamics })
    }

    /// Unknown context-independent dynamics learner.
    pub fn rm_ucid(
        view: LearnerView,
        rewards: &RewardFunctionClass,
        schedules: Schedules,
        p_min: f64,
    ) -> Result<Self> {
        check_p_min(p_min)?;
        let counts = TransitionCounts::new(view.n_states, view.n_actions);
        Self::with_backend(
            view,
            rewards,
            schedules,
            Backend::Empirical {
                p_min,
                counts,
                xi_override: None,
            },
        )
    }

    /// Unknown context-dependent dynamics learner.
    pub fn rm_ucdd(
        view: LearnerView,
        rewards: &RewardFunctionClass,
        dynamics: &DynamicsClass,
        schedules: Schedules,
        p_min: f64,
    ) -> Result<Self> {
        check_p_min(p_min)?;
        if dynamics.partition() != &view.partition
            || dynamics.n_contexts() != view.n_contexts
            || dynamics.n_actions() != view.n_actions
        {
            return Err(CmdpError::DimensionMismatch(
                "dynamics class disagrees with instance".into(),
            ));
        }
        let n_actions = view.n_actions;
        Self::with_backend(
            view,
            rewards,
            schedules,
            Backend::Class {
                p_min,
                class: dynamics.without_truth(),
                fits: vec![0; n_actions + 1],
            },
        )
    }

    /// Recompute every `pi_k(c; .)` from scratch on each round instead of
    /// extending the per-context cursor. Results are identical.
    pub fn without_memoization(mut self) -> Self {
        self.memoize = false;
        self
    }

    /// Replaces the bonus numerator (`beta_k`, or `beta_k + H|S|gamma_k`) by `f(k)`.
    pub fn with_bonus_numerator(
        mut self,
        f: impl Fn(usize) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.bonus_override = Some(Box::new(f));
        self
    }

    /// Uses a fixed dynamics confidence width instead of `xi(N)` (UCID only).
    pub fn with_xi_override(mut self, xi: f64) -> Result<Self> {
        match &mut self.backend {
            Backend::Empirical { xi_override, .. } => {
                *xi_override = Some(xi);
                Ok(self)
            }
            _ => Err(CmdpError::Config(
                "xi override only applies to the context-independent learner".into(),
            )),
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        self.backend.algorithm()
    }

    pub fn view(&self) -> &LearnerView {
        &self.view
    }

    pub fn schedules(&self) -> &Schedules {
        &self.schedules
    }

    pub fn rounds_played(&self) -> usize {
        self.rounds_played
    }

    /// The round the next [`Learner::select`] call plays.
    pub fn current_round(&self) -> usize {
        self.rounds_played + 1
    }

    pub fn reward_class(&self) -> &RewardFunctionClass {
        &self.rewards
    }

    pub fn dynamics_class(&self) -> Option<&DynamicsClass> {
        match &self.backend {
            Backend::Class { class, .. } => Some(class),
            _ => None,
        }
    }

    /// Global visit counters (UCID only).
    pub fn transition_counts(&self) -> Option<&TransitionCounts> {
        match &self.backend {
            Backend::Empirical { counts, .. } => Some(counts),
            _ => None,
        }
    }

    /// `P_bar_t` from the counters of all completed rounds (UCID only).
    pub fn empirical_dynamics(&self) -> Option<TabularDynamics> {
        self.transition_counts().map(TransitionCounts::empirical)
    }

    /// `xi_t(s, a)` from the counters of all completed rounds (UCID only).
    pub fn confidence_widths(&self) -> Option<Vec<f64>> {
        match &self.backend {
            Backend::Empirical {
                counts,
                xi_override,
                ..
            } => Some(self.widths(counts, *xi_override)),
            _ => None,
        }
    }

    fn widths(&self, counts: &TransitionCounts, xi_override: Option<f64>) -> Vec<f64> {
        let n_actions = self.view.n_actions;
        (0..self.view.n_states * n_actions)
            .map(|i| {
                xi_override.unwrap_or_else(|| {
                    self.schedules
                        .xi(counts.visits(i / n_actions, i % n_actions))
                })
            })
            .collect()
    }

    fn bonus_mode(&self) -> BonusMode {
        match self.backend {
            Backend::Known { .. } => BonusMode::KnownDynamics,
            _ => BonusMode::UnknownDynamics,
        }
    }

    /// `beta_k`, or `beta_k + H|S|gamma_k` for UCDD.
    pub fn bonus_numerator(&self, k: usize) -> f64 {
        if let Some(f) = &self.bonus_override {
            return f(k);
        }
        let beta = self.schedules.beta(k, self.bonus_mode());
        match self.backend {
            Backend::Class { .. } => {
                let h = self.view.partition.horizon() as f64;
                beta + h * self.view.n_states as f64 * self.schedules.gamma(k)
            }
            _ => beta,
        }
    }

    /// Runs the least-squares fits for the current round if not yet done.
    fn ensure_fits(&mut self) {
        let t = self.current_round();
        if t <= self.view.n_actions {
            return;
        }
        if self.reward_fits.len() == t {
            self.reward_fits.push(self.rewards.lsr_fit());
        }
        if let Backend::Class { class, fits, .. } = &mut self.backend {
            if fits.len() == t {
                fits.push(class.lsr_fit());
            }
        }
    }

    /// Fitted reward member for round `k`, once that round has started.
    pub fn reward_fit(&self, k: usize) -> Option<usize> {
        (k > self.view.n_actions)
            .then(|| self.reward_fits.get(k).copied())
            .flatten()
    }

    /// Fitted dynamics member for round `k` (UCDD only).
    pub fn dynamics_fit(&self, k: usize) -> Option<usize> {
        match &self.backend {
            Backend::Class { fits, .. } if k > self.view.n_actions => fits.get(k).copied(),
            _ => None,
        }
    }

    fn check_context(&self, context: usize) -> Result<()> {
        if context >= self.view.n_contexts {
            return Err(CmdpError::UnknownContext(context));
        }
        Ok(())
    }

    /// Policy for the current round and context, including initialization rounds.
    pub fn select(&mut self, context: usize) -> Result<Decision> {
        self.check_context(context)?;
        let t = self.current_round();
        if t <= self.view.n_actions {
            return Ok(Decision {
                round: t,
                context,
                policy: DeterministicPolicy::constant(self.view.n_states, t - 1),
                optimistic_value: None,
                beta: self.schedules.beta(t, self.bonus_mode()),
                gamma: None,
                xi_mean: None,
            });
        }
        self.optimistic_round(context)
    }

    /// One optimistic round; only valid once initialization is over.
    pub fn optimistic_round(&mut self, context: usize) -> Result<Decision> {
        self.check_context(context)?;
        let t = self.current_round();
        if t <= self.view.n_actions {
            return Err(CmdpError::InitializationRound {
                round: t,
                n_actions: self.view.n_actions,
            });
        }
        let model = self.model_for(context)?.clone();
        let xi_mean = model.xi.as_ref().map(|xi| {
            let n_actions = self.view.n_actions;
            let (sum, n) = self
                .view
                .partition
                .decision_states()
                .flat_map(|s| (0..n_actions).map(move |a| s * n_actions + a))
                .fold((0.0, 0usize), |(sum, n), i| (sum + xi[i], n + 1));
            sum / n as f64
        });
        let gamma = matches!(self.backend, Backend::Class { .. }).then(|| self.schedules.gamma(t));
        Ok(Decision {
            round: t,
            context,
            policy: model.policy,
            optimistic_value: Some(model.value),
            beta: self.schedules.beta(t, self.bonus_mode()),
            gamma,
            xi_mean,
        })
    }

    /// Materializes `pi_t(c; .)` for the current round `t > |A|` and returns
    /// everything computed for it.
    pub fn model_for(&mut self, context: usize) -> Result<&RoundModel> {
        self.check_context(context)?;
        let t = self.current_round();
        if t <= self.view.n_actions {
            return Err(CmdpError::InitializationRound {
                round: t,
                n_actions: self.view.n_actions,
            });
        }
        self.ensure_fits();
        let mut cursor = match self.cursors[context].take() {
            Some(c) if self.memoize => c,
            _ => Cursor::new(
                self.view.n_states,
                self.view.n_actions,
                matches!(self.backend, Backend::Empirical { .. }),
            ),
        };
        let mut result = Ok(());
        while result.is_ok() && cursor.next_round <= t {
            result = self.advance(&mut cursor, context);
        }
        self.cursors[context] = Some(cursor);
        result?;
        Ok(self.cursors[context]
            .as_ref()
            .and_then(|c| c.latest.as_ref())
            .expect("cursor reached the current round"))
    }

    /// `pi_1(c; .), ..., pi_t(c; .)` as materialized so far.
    pub fn policy_history(&self, context: usize) -> Vec<DeterministicPolicy> {
        self.cursors
            .get(context)
            .and_then(Option::as_ref)
            .map(|c| c.records.iter().map(|r| r.policy.clone()).collect())
            .unwrap_or_default()
    }

    /// This context's potential summand at the current round.
    pub fn potential_term(&mut self, context: usize) -> Result<f64> {
        Ok(self.model_for(context)?.potential_term)
    }

    fn advance(&self, cursor: &mut Cursor, context: usize) -> Result<()> {
        let k = cursor.next_round;
        let n_states = self.view.n_states;
        let n_actions = self.view.n_actions;
        let partition = &self.view.partition;

        let record = if k <= n_actions {
            RoundRecord {
                policy: DeterministicPolicy::constant(n_states, k - 1),
                value: None,
                potential_term: None,
            }
        } else {
            let model = self.solve_round(cursor, context, k)?;
            let record = RoundRecord {
                policy: model.policy.clone(),
                value: Some(model.value),
                potential_term: Some(model.potential_term),
            };
            cursor.latest = Some(model);
            record
        };

        if let Backend::Known { dynamics } = &self.backend {
            let occ = compute_occupancy(&record.policy, &dynamics[context], partition)?;
            for s in partition.decision_states() {
                let a = record.policy.action(s);
                cursor.weighted[s * n_actions + a] += occ.state(s);
            }
        }
        for s in partition.decision_states() {
            cursor.matches[s * n_actions + record.policy.action(s)] += 1;
        }
        cursor.records.push(record);
        cursor.next_round += 1;
        Ok(())
    }

    fn solve_round(&self, cursor: &mut Cursor, context: usize, k: usize) -> Result<RoundModel> {
        let n_actions = self.view.n_actions;
        let partition = &self.view.partition;
        let numerator = self.bonus_numerator(k);
        let mut r_hat = self.rewards.table(self.reward_fits[k], context);
        let denominator = |i: usize| -> f64 {
            match &self.backend {
                Backend::Known { .. } => cursor.weighted[i],
                Backend::Empirical { p_min, .. } | Backend::Class { p_min, .. } => {
                    p_min * cursor.matches[i] as f64
                }
            }
        };
        for s in partition.decision_states() {
            for a in 0..n_actions {
                let i = s * n_actions + a;
                let bonus = if numerator == 0.0 {
                    0.0
                } else {
                    numerator / denominator(i).max(MIN_DENOMINATOR)
                };
                r_hat.set(s, a, r_hat.get(s, a) + bonus);
            }
        }

        let (policy, value, p_hat, xi) = match &self.backend {
            Backend::Known { dynamics } => {
                let p = plan(&dynamics[context], &r_hat, partition)?;
                (p.policy, p.value, dynamics[context].clone(), None)
            }
            Backend::Empirical { xi_override, .. } => {
                let counts = cursor.counts.as_mut().expect("empirical cursor has counts");
                for round in cursor.counted_rounds + 1..k {
                    for &(s, a, next) in &self.history[round - 1] {
                        counts.add(s, a, next);
                    }
                }
                cursor.counted_rounds = k - 1;
                let xi = self.widths(counts, *xi_override);
                let m = foa_optimistic_plan(&r_hat, &counts.empirical(), &xi, partition)?;
                (m.policy, m.value, m.p_hat, Some(xi))
            }
            Backend::Class { class, fits, .. } => {
                let d = class.member(fits[k], context);
                let p = plan(d, &r_hat, partition)?;
                (p.policy, p.value, d.clone(), None)
            }
        };

        let occ = compute_occupancy(&policy, &p_hat, partition)?;
        let potential_term = partition
            .decision_states()
            .map(|s| {
                let q = occ.state(s);
                if q == 0.0 {
                    0.0
                } else {
                    q / denominator(s * n_actions + policy.action(s))
                }
            })
            .sum();

        Ok(RoundModel {
            round: k,
            context,
            policy,
            r_hat,
            p_hat,
            value,
            potential_term,
            xi,
        })
    }

    /// Feeds the current round's trajectory to the oracles and counters.
    pub fn observe(&mut self, traj: &Trajectory) -> Result<()> {
        self.check_context(traj.context)?;
        if traj.steps.len() != self.view.partition.horizon() {
            return Err(CmdpError::DimensionMismatch(format!(
                "trajectory has {} steps, horizon is {}",
                traj.steps.len(),
                self.view.partition.horizon()
            )));
        }
        // Validate everything up front so a bad trajectory leaves no partial update.
        let partition = &self.view.partition;
        for (h, (s, a, next)) in traj.transitions().enumerate() {
            let reward = traj.steps[h].reward;
            if reward != 0.0 && reward != 1.0 {
                return Err(CmdpError::NonBinaryReward(reward));
            }
            if a >= self.view.n_actions || partition.layer_of(s) != h {
                return Err(CmdpError::DimensionMismatch(format!(
                    "step {h} has state {s}, action {a}"
                )));
            }
            if !partition.successors(s).contains(&next) {
                return Err(CmdpError::LayerViolation {
                    state: s,
                    next,
                    layer: h,
                });
            }
        }
        self.ensure_fits();
        let batch = SampleBatch::from_trajectory(traj);
        self.rewards.lsr_update(&batch.rewards)?;
        match &mut self.backend {
            Backend::Known { .. } => {}
            Backend::Empirical { counts, .. } => {
                for t in &batch.transitions {
                    counts.add(t.state, t.action, t.next);
                }
            }
            Backend::Class { class, .. } => class.lsr_update(&batch.transitions)?,
        }
        self.history.push(traj.transitions().collect());
        self.rounds_played += 1;
        Ok(())
    }
}
