//! Fixtures shared by the criterion benches.

use cmdp_lab::environments::{generate, EnvKind, GenSpec, GeneratedEnv};
use cmdp_lab::learner::{KnownDynamicsView, Learner, LearnerView};
use cmdp_lab::rng::{stream_rng, Stream};
use cmdp_lab::schedules::Schedules;
use cmdp_lab::trajectory::sample_trajectory;

/// Doubly stochastic instance with `m` states per inner layer.
pub fn instance(m: usize, h: usize, n_actions: usize, n_contexts: usize) -> GeneratedEnv {
    let mut spec = GenSpec::new(EnvKind::DoublyStochastic, m, h, n_actions);
    spec.n_contexts = n_contexts;
    spec.size_f = 16;
    spec.size_fp = 8;
    spec.shared_dynamics = true;
    spec.seed = 7;
    generate(&spec).expect("bench instance")
}

fn schedules(env: &GeneratedEnv, rounds: usize) -> Schedules {
    let fp = env.dynamics_class.as_ref().map_or(1, |d| d.len());
    Schedules::new(
        env.reward_class.as_ref().unwrap().len(),
        fp,
        0.1,
        env.cmdp.n_states,
        env.cmdp.n_actions,
        rounds,
    )
    .unwrap()
}

pub fn kd_learner(env: &GeneratedEnv, rounds: usize) -> Learner {
    Learner::rm_kd(
        KnownDynamicsView::of(&env.cmdp),
        env.reward_class.as_ref().unwrap(),
        schedules(env, rounds),
    )
    .unwrap()
}

pub fn ucid_learner(env: &GeneratedEnv, rounds: usize) -> Learner {
    Learner::rm_ucid(
        LearnerView::of(&env.cmdp),
        env.reward_class.as_ref().unwrap(),
        schedules(env, rounds),
        0.05,
    )
    .unwrap()
}

/// Plays `rounds` rounds so the learner carries realistic history.
pub fn warm_up(learner: &mut Learner, env: &GeneratedEnv, rounds: usize) {
    let mut rng = stream_rng(11, Stream::Transitions, 0);
    for t in 0..rounds {
        let c = t % env.cmdp.n_contexts();
        let decision = learner.select(c).unwrap();
        let traj = sample_trajectory(&env.cmdp, c, &decision.policy, &mut rng).unwrap();
        learner.observe(&traj).unwrap();
    }
}
