//! Experiment runner: plays the interaction protocol for a learner on an
//! instance and records exact per-round regret.

mod log;

use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classes::{row_l1, DynamicsClass, RewardFunctionClass};
use crate::cmdp::{validate_cmdp, DeterministicPolicy, LayeredCmdp};
use crate::environments::{generate, GenSpec, GeneratedEnv};
use crate::error::{CmdpError, Result};
use crate::io::read_env;
use crate::learner::{KnownDynamicsView, Learner, LearnerView};
use crate::planning::{min_reach_probability, plan, value_of_policy};
use crate::rng::{stream_rng, Stream};
use crate::schedules::Schedules;
use crate::trajectory::{sample_index, sample_trajectory_split};

pub use log::{
    csv_string, format_g12, parse_csv, read_csv, write_csv, OptimismStats, RegretLog, RegretRow,
    SeedSummary, CSV_HEADER,
};

/// Environment variable capping seed-level parallelism (0 = all cores).
pub const THREADS_ENV: &str = "CMDP_LAB_THREADS";

/// Slack for "regret is nonnegative" and the least-squares dominance check.
pub const REGRET_SLACK: f64 = 1e-10;
pub const LSR_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    RmKd,
    RmUcid,
    RmUcdd,
    UniformRandom,
    GreedyNoBonus,
}

/// Either a path to a serialized environment or an inline generator spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnvSource {
    File(PathBuf),
    Spec(GenSpec),
}

fn default_delta() -> f64 {
    0.1
}

fn default_scale() -> f64 {
    1.0
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvSource,
    pub algorithm: AlgorithmKind,
    /// Number of rounds.
    #[serde(rename = "T", alias = "t")]
    pub rounds: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Reachability handed to the unknown-dynamics learners.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_min_declared: Option<f64>,
    #[serde(default = "default_scale")]
    pub bonus_scale: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Track the contextual potential of the played policies.
    #[serde(default = "yes")]
    pub potentials: bool,
    /// Record the confidence event and optimism per round (context-independent learner only).
    #[serde(default)]
    pub check_optimism: bool,
}

impl ExperimentConfig {
    pub fn new(env: EnvSource, algorithm: AlgorithmKind, rounds: usize) -> Self {
        Self {
            env,
            algorithm,
            rounds,
            delta: default_delta(),
            p_min_declared: None,
            bonus_scale: default_scale(),
            seeds: default_seeds(),
            output: None,
            potentials: true,
            check_optimism: false,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CmdpError::Config(e.to_string()))
    }

    /// Loads a config file; relative `env` and `output` paths are resolved
    /// against the file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        if let EnvSource::File(p) = &mut cfg.env {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(out) = &mut cfg.output {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
        Ok(cfg)
    }
}

/// Instance, classes and derived constants shared by every seed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub env: GeneratedEnv,
    pub v_star: Vec<f64>,
    pub pi_star: Vec<DeterministicPolicy>,
    pub p_min_true: f64,
}

fn config_err(msg: impl Into<String>) -> CmdpError {
    CmdpError::Config(msg.into())
}

/// Loads or generates the environment and checks the config against it.
pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    let env = match &config.env {
        EnvSource::File(path) => read_env(path)?,
        EnvSource::Spec(spec) => generate(spec)?,
    };
    prepare_with_env(config, env)
}

pub fn prepare_with_env(config: &ExperimentConfig, env: GeneratedEnv) -> Result<Prepared> {
    let cmdp = &env.cmdp;
    let report = validate_cmdp(cmdp);
    if !report.is_ok() {
        return Err(CmdpError::InvalidInstance(report.to_string()));
    }
    if config.rounds <= cmdp.n_actions {
        return Err(config_err(format!(
            "T = {} must exceed the number of actions {}",
            config.rounds, cmdp.n_actions
        )));
    }
    if config.seeds.is_empty() {
        return Err(config_err("no seeds given"));
    }
    let learns = !matches!(config.algorithm, AlgorithmKind::UniformRandom);
    if learns && env.reward_class.is_none() {
        return Err(config_err(
            "this algorithm needs a reward class in the environment",
        ));
    }
    match config.algorithm {
        AlgorithmKind::RmUcid | AlgorithmKind::RmUcdd if config.p_min_declared.is_none() => {
            return Err(config_err(
                "p_min_declared is required for rm_ucid and rm_ucdd",
            ));
        }
        AlgorithmKind::RmUcid if !cmdp.has_shared_dynamics() => {
            return Err(config_err("rm_ucid needs context-independent dynamics"));
        }
        AlgorithmKind::RmUcdd if env.dynamics_class.is_none() => {
            return Err(config_err(
                "rm_ucdd needs a dynamics class in the environment",
            ));
        }
        _ => {}
    }
    if config.check_optimism && config.algorithm != AlgorithmKind::RmUcid {
        return Err(config_err("check_optimism applies to rm_ucid only"));
    }
    // Surface schedule errors before any seed starts.
    schedules_for(config, &env)?;

    let mut v_star = Vec::with_capacity(cmdp.n_contexts());
    let mut pi_star = Vec::with_capacity(cmdp.n_contexts());
    for c in 0..cmdp.n_contexts() {
        let p = plan(&cmdp.dynamics[c], &cmdp.rewards[c], &cmdp.partition)?;
        v_star.push(p.value);
        pi_star.push(p.policy);
    }
    let p_min_true = min_reach_probability(cmdp);
    Ok(Prepared {
        config: config.clone(),
        env,
        v_star,
        pi_star,
        p_min_true,
    })
}

fn schedules_for(config: &ExperimentConfig, env: &GeneratedEnv) -> Result<Schedules> {
    let scale = match config.algorithm {
        AlgorithmKind::GreedyNoBonus => 0.0,
        _ => config.bonus_scale,
    };
    Schedules::new(
        env.reward_class
            .as_ref()
            .map_or(1, RewardFunctionClass::len),
        env.dynamics_class.as_ref().map_or(1, DynamicsClass::len),
        config.delta,
        env.cmdp.n_states,
        env.cmdp.n_actions,
        config.rounds,
    )?
    .with_bonus_scale(scale)
}

fn build_learner(prep: &Prepared) -> Result<Option<Learner>> {
    let cfg = &prep.config;
    let env = &prep.env;
    let cmdp = &env.cmdp;
    let sched = schedules_for(cfg, env)?;
    let rewards = || {
        env.reward_class
            .as_ref()
            .ok_or_else(|| config_err("missing reward class"))
    };
    let p_min = || {
        cfg.p_min_declared
            .ok_or_else(|| config_err("missing p_min_declared"))
    };
    Ok(match cfg.algorithm {
        AlgorithmKind::UniformRandom => None,
        AlgorithmKind::RmKd | AlgorithmKind::GreedyNoBonus => Some(Learner::rm_kd(
            KnownDynamicsView::of(cmdp),
            rewards()?,
            sched,
        )?),
        AlgorithmKind::RmUcid => Some(Learner::rm_ucid(
            LearnerView::of(cmdp),
            rewards()?,
            sched,
            p_min()?,
        )?),
        AlgorithmKind::RmUcdd => {
            let fp = env
                .dynamics_class
                .as_ref()
                .ok_or_else(|| config_err("missing dynamics class"))?;
            Some(Learner::rm_ucdd(
                LearnerView::of(cmdp),
                rewards()?,
                fp,
                sched,
                p_min()?,
            )?)
        }
    })
}

fn random_policy(cmdp: &LayeredCmdp, seed: u64, t: usize) -> DeterministicPolicy {
    let mut rng = stream_rng(seed, Stream::Policy, t as u64);
    DeterministicPolicy::new(
        (0..cmdp.n_states)
            .map(|_| rng.gen_range(0..cmdp.n_actions))
            .collect(),
    )
}

/// Plays one seed and returns its rows and summary.
pub fn run_seed(prep: &Prepared, seed: u64) -> Result<(Vec<RegretRow>, SeedSummary)> {
    let cfg = &prep.config;
    let cmdp = &prep.env.cmdp;
    let n_actions = cmdp.n_actions;
    let mut learner = build_learner(prep)?;
    let reward_truth = prep
        .env
        .reward_class
        .as_ref()
        .and_then(RewardFunctionClass::truth_index);
    let dynamics_truth = prep
        .env
        .dynamics_class
        .as_ref()
        .and_then(DynamicsClass::truth_index);
    let track_potential = cfg.potentials && learner.is_some();

    let mut rows = Vec::with_capacity(cfg.rounds);
    let mut summary = SeedSummary {
        seed,
        ..SeedSummary::default()
    };
    if cfg.check_optimism {
        summary.optimism = Some(OptimismStats::default());
    }
    let mut cum = 0.0;
    for t in 1..=cfg.rounds {
        let context = sample_index(
            &cmdp.context_dist,
            &mut stream_rng(seed, Stream::Context, t as u64),
        )
        .ok_or_else(|| CmdpError::InvalidInstance("context distribution has no mass".into()))?;

        let mut potential = None;
        let (policy, beta, gamma, optimistic_value, xi_mean) = match learner.as_mut() {
            None => (random_policy(cmdp, seed, t), None, None, None, None),
            Some(l) => {
                let d = l.select(context)?;
                if t > n_actions {
                    if track_potential {
                        let mut phi = 0.0;
                        for (c, &w) in cmdp.context_dist.iter().enumerate() {
                            if w > 0.0 {
                                phi += w * l.potential_term(c)?;
                            }
                        }
                        potential = Some(phi);
                    }
                    if let Some(stats) = summary.optimism.as_mut() {
                        check_optimism(prep, l, context, stats)?;
                    }
                }
                (
                    d.policy,
                    Some(d.beta),
                    d.gamma,
                    d.optimistic_value,
                    d.xi_mean,
                )
            }
        };

        let traj = sample_trajectory_split(
            cmdp,
            context,
            &policy,
            &mut stream_rng(seed, Stream::Transitions, t as u64),
            &mut stream_rng(seed, Stream::Rewards, t as u64),
        )?;
        if let Some(l) = learner.as_mut() {
            l.observe(&traj)?;
            if let Some(truth) = reward_truth {
                let f = l.reward_class();
                let sse = f.sse();
                summary.lsr_checks += 1;
                if sse[f.lsr_fit()] > sse[truth] + LSR_SLACK {
                    summary.lsr_violations += 1;
                }
            }
            if let (Some(fp), Some(truth)) = (l.dynamics_class(), dynamics_truth) {
                let sse = fp.sse();
                summary.lsr_checks += 1;
                if sse[fp.lsr_fit()] > sse[truth] + LSR_SLACK {
                    summary.lsr_violations += 1;
                }
            }
        }

        let v_star = prep.v_star[context];
        let v_pi = value_of_policy(
            &policy,
            &cmdp.dynamics[context],
            &cmdp.rewards[context],
            &cmdp.partition,
        )?;
        let inst = v_star - v_pi;
        if inst < -REGRET_SLACK {
            return Err(CmdpError::InvalidInstance(format!(
                "negative regret {inst} at round {t}"
            )));
        }
        cum += inst;
        if let Some(p) = potential {
            summary.potential_sum += p;
        }
        rows.push(RegretRow {
            seed,
            t,
            context,
            v_star,
            v_pi,
            inst_regret: inst,
            cum_regret: cum,
            ret: traj.total_reward(),
            beta,
            gamma,
            potential,
            policy_digest: policy.digest(),
            optimistic_value,
            xi_mean,
        });
    }
    summary.cum_regret = cum;
    if track_potential {
        let p_min = match cfg.algorithm {
            AlgorithmKind::RmKd | AlgorithmKind::GreedyNoBonus => prep.p_min_true,
            _ => cfg.p_min_declared.unwrap_or(prep.p_min_true),
        };
        summary.potential_bound =
            Some(potential_bound(cmdp.n_states, n_actions, p_min, cfg.rounds));
    }
    Ok((rows, summary))
}

/// `(|S||A| / p_min) (1 + ln(T / |A|))`.
pub fn potential_bound(n_states: usize, n_actions: usize, p_min: f64, rounds: usize) -> f64 {
    (n_states * n_actions) as f64 / p_min * (1.0 + (rounds as f64 / n_actions as f64).ln())
}

fn check_optimism(
    prep: &Prepared,
    learner: &mut Learner,
    context: usize,
    stats: &mut OptimismStats,
) -> Result<()> {
    let cmdp = &prep.env.cmdp;
    let truth = &cmdp.dynamics[context];
    let p_bar = learner
        .empirical_dynamics()
        .expect("context-independent learner");
    let xi = learner
        .confidence_widths()
        .expect("context-independent learner");
    let n_actions = cmdp.n_actions;
    let event = cmdp.partition.decision_states().all(|s| {
        (0..n_actions).all(|a| row_l1(p_bar.row(s, a), truth.row(s, a)) <= xi[s * n_actions + a])
    });
    stats.rounds += 1;
    if event {
        stats.event_rounds += 1;
        let model = learner.model_for(context)?;
        let comparator =
            value_of_policy(&prep.pi_star[context], truth, &model.r_hat, &cmdp.partition)?;
        if model.value >= comparator - REGRET_SLACK {
            stats.optimistic_rounds += 1;
        }
    }
    Ok(())
}

fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(0)
}

/// Runs every seed (in parallel, capped by `CMDP_LAB_THREADS`) and returns
/// the rows in seed order.
pub fn run_prepared(prep: &Prepared) -> Result<RegretLog> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .map_err(|e| config_err(e.to_string()))?;
    let results: Vec<Result<(Vec<RegretRow>, SeedSummary)>> = pool.install(|| {
        prep.config
            .seeds
            .par_iter()
            .map(|&s| run_seed(prep, s))
            .collect()
    });
    let mut log = RegretLog::default();
    for r in results {
        let (rows, summary) = r?;
        log.rows.extend(rows);
        log.summaries.push(summary);
    }
    Ok(log)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RegretLog> {
    run_prepared(&prepare(config)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::EnvKind;

    fn spec() -> GenSpec {
        let mut s = GenSpec::new(EnvKind::DoublyStochastic, 2, 3, 2);
        s.n_contexts = 2;
        s.size_f = 4;
        s.size_fp = 3;
        s.shared_dynamics = true;
        s.seed = 1;
        s
    }

    #[test]
    fn config_parses_inline_spec_and_path() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            algorithm = "rm_ucid"
            T = 50
            p_min_declared = 0.25
            seeds = [1, 2]
            [env]
            kind = "doubly_stochastic"
            M = 2
            H = 3
            n_actions = 2
            "#,
        )
        .unwrap();
        assert!(matches!(cfg.env, EnvSource::Spec(_)));
        assert_eq!(cfg.algorithm, AlgorithmKind::RmUcid);
        assert_eq!(cfg.delta, 0.1);
        let cfg = ExperimentConfig::from_toml("env = \"x.toml\"\nalgorithm = \"rm_kd\"\nT = 5\n")
            .unwrap();
        assert_eq!(cfg.env, EnvSource::File("x.toml".into()));
        assert!(
            ExperimentConfig::from_toml("env = \"x.toml\"\nalgorithm = \"nope\"\nT = 5\n").is_err()
        );
    }

    #[test]
    fn mismatches_are_config_errors() {
        let env = EnvSource::Spec(spec());
        let short = ExperimentConfig::new(env.clone(), AlgorithmKind::RmKd, 2);
        assert!(matches!(prepare(&short), Err(CmdpError::Config(_))));
        let no_pmin = ExperimentConfig::new(env.clone(), AlgorithmKind::RmUcid, 10);
        assert!(matches!(prepare(&no_pmin), Err(CmdpError::Config(_))));
        let mut per_context = spec();
        per_context.shared_dynamics = false;
        let mut ucid =
            ExperimentConfig::new(EnvSource::Spec(per_context), AlgorithmKind::RmUcid, 10);
        ucid.p_min_declared = Some(0.25);
        assert!(matches!(prepare(&ucid), Err(CmdpError::Config(_))));
        let mut lb = GenSpec::new(EnvKind::LowerBound, 2, 2, 2);
        lb.size_f = 2;
        let mut ucdd = ExperimentConfig::new(EnvSource::Spec(lb), AlgorithmKind::RmUcdd, 10);
        ucdd.p_min_declared = Some(0.5);
        assert!(matches!(prepare(&ucdd), Err(CmdpError::Config(_))));
    }

    #[test]
    fn every_algorithm_runs_and_rows_are_consistent() {
        for alg in [
            AlgorithmKind::RmKd,
            AlgorithmKind::RmUcid,
            AlgorithmKind::RmUcdd,
            AlgorithmKind::UniformRandom,
            AlgorithmKind::GreedyNoBonus,
        ] {
            let mut cfg = ExperimentConfig::new(EnvSource::Spec(spec()), alg, 30);
            cfg.p_min_declared = Some(0.25);
            cfg.seeds = vec![3, 4];
            let log = run_experiment(&cfg).unwrap();
            assert_eq!(log.rows.len(), 60);
            for pair in log.rows.windows(2).filter(|w| w[0].seed == w[1].seed) {
                assert!(pair[1].cum_regret >= pair[0].cum_regret - REGRET_SLACK);
            }
            for r in &log.rows {
                assert!(r.v_pi <= r.v_star + REGRET_SLACK);
                assert_eq!(
                    r.potential.is_some(),
                    alg != AlgorithmKind::UniformRandom && r.t > 2
                );
            }
            for s in &log.summaries {
                assert_eq!(s.lsr_violations, 0);
            }
        }
    }

    #[test]
    fn runs_are_reproducible() {
        let mut cfg = ExperimentConfig::new(EnvSource::Spec(spec()), AlgorithmKind::RmKd, 40);
        cfg.seeds = vec![7, 8, 9];
        let a = csv_string(&run_experiment(&cfg).unwrap());
        let b = csv_string(&run_experiment(&cfg).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn environment_streams_do_not_depend_on_the_learner() {
        let mut kd = ExperimentConfig::new(EnvSource::Spec(spec()), AlgorithmKind::RmKd, 25);
        kd.seeds = vec![5];
        let mut uni = kd.clone();
        uni.algorithm = AlgorithmKind::UniformRandom;
        let a = run_experiment(&kd).unwrap();
        let b = run_experiment(&uni).unwrap();
        let ctx = |log: &RegretLog| log.rows.iter().map(|r| r.context).collect::<Vec<_>>();
        assert_eq!(ctx(&a), ctx(&b));
    }
}
