//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use cmdp_lab::classes::{row_l1, rows_normalized};
use cmdp_lab::cmdp::{LayerPartition, RewardTable, TabularDynamics};
use cmdp_lab::environments::{generate, EnvKind, GenSpec};
use cmdp_lab::foa::foa_optimistic_plan;
use cmdp_lab::harness::{
    prepare, run_prepared, AlgorithmKind, EnvSource, ExperimentConfig, RegretLog,
};
use cmdp_lab::planning::{
    compute_occupancy, evaluate_policy, min_reach_probability, plan, value_of_policy,
};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PROB_TOL: f64 = 1e-12;
const VALUE_TOL: f64 = 1e-10;
const FOA_ORACLE_TOL: f64 = 2e-3;
const FOA_GRID: f64 = 1e-3;
const OPTIMISM_EVENT_RATE: f64 = 0.9;
const SUBLINEAR_RATIO: f64 = 0.75;
const VS_UNIFORM_RATIO: f64 = 0.3;
const LSR_SLACK: f64 = 1e-9;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Learner runs reused by the dominance criterion.
#[derive(Default)]
struct Runs {
    logs: Vec<(String, RegretLog)>,
}

fn occupancy_value_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_mass: f64 = 0.0;
    let mut worst_value: f64 = 0.0;
    for _ in 0..1000 {
        let cmdp = random_cmdp(&mut rng, 1, 4, 12, 3);
        let partition = &cmdp.partition;
        let pi = random_policy(&mut rng, cmdp.n_states, cmdp.n_actions);
        let occ = compute_occupancy(&pi, &cmdp.dynamics[0], partition).unwrap();
        for h in 0..=partition.horizon() {
            worst_mass = worst_mass.max((occ.layer_mass(h) - 1.0).abs());
        }
        let v = value_of_policy(&pi, &cmdp.dynamics[0], &cmdp.rewards[0], partition).unwrap();
        let back = evaluate_policy(&pi, &cmdp.dynamics[0], &cmdp.rewards[0], partition).unwrap();
        worst_value = worst_value.max((v - back[partition.start()]).abs());
    }
    outcome(
        worst_mass <= PROB_TOL && worst_value <= VALUE_TOL,
        format!("max layer-mass error {worst_mass:.2e}, max value gap {worst_value:.2e}"),
    )
}

fn planner_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    let mut n = 0;
    while n < 200 {
        let cmdp = random_cmdp(&mut rng, 1, 4, 13, 3);
        let decision = cmdp.n_states - 1;
        if (cmdp.n_actions as f64).powi(decision as i32) > 4096.0 {
            continue;
        }
        n += 1;
        let (d, r, partition) = (&cmdp.dynamics[0], &cmdp.rewards[0], &cmdp.partition);
        let best = all_policies(partition, cmdp.n_actions)
            .iter()
            .map(|pi| value_of_policy(pi, d, r, partition).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        let p = plan(d, r, partition).unwrap();
        worst = worst.max((p.value - best).abs());
        let attained = value_of_policy(&p.policy, d, r, partition).unwrap();
        worst = worst.max((attained - p.value).abs());
    }
    outcome(
        worst <= VALUE_TOL,
        format!("200 instances, max gap {worst:.2e}"),
    )
}

/// Grid search over the first-successor probability of each row, composed
/// with brute-force policy enumeration. Layers have at most two successors.
fn foa_grid_oracle(
    r: &RewardTable,
    p_bar: &TabularDynamics,
    xi: &[f64],
    partition: &LayerPartition,
) -> f64 {
    let n_actions = p_bar.n_actions();
    let mut best = f64::NEG_INFINITY;
    for pi in all_policies(partition, n_actions) {
        let mut v = vec![0.0; partition.n_states()];
        for h in (0..partition.horizon()).rev() {
            for &s in partition.layer(h) {
                let a = pi.action(s);
                let succ = partition.successors(s);
                let cont = if succ.len() == 1 {
                    v[succ[0]]
                } else {
                    let row = p_bar.row(s, a);
                    let total = row[succ[0]] + row[succ[1]];
                    let centre = if total > 0.0 { row[succ[0]] } else { 0.5 };
                    let half = xi[s * n_actions + a] / 2.0;
                    let lo = (centre - half).max(0.0);
                    let hi = (centre + half).min(1.0);
                    let mut best_cont = f64::NEG_INFINITY;
                    let mut p = lo;
                    loop {
                        let p_eval = p.min(hi);
                        best_cont =
                            best_cont.max(p_eval * v[succ[0]] + (1.0 - p_eval) * v[succ[1]]);
                        if p >= hi {
                            break;
                        }
                        p += FOA_GRID;
                    }
                    best_cont
                };
                v[s] = r.get(s, a) + cont;
            }
        }
        best = best.max(v[partition.start()]);
    }
    best
}

fn count_based_rows<R: Rng>(
    rng: &mut R,
    partition: &LayerPartition,
    n_actions: usize,
) -> TabularDynamics {
    let mut d = TabularDynamics::zeros(partition.n_states(), n_actions);
    for s in partition.decision_states() {
        let succ = partition.successors(s);
        for a in 0..n_actions {
            let counts: Vec<u32> = succ.iter().map(|_| rng.gen_range(0..6)).collect();
            let n: u32 = counts.iter().sum();
            if n == 0 {
                continue;
            }
            for (&next, &k) in succ.iter().zip(&counts) {
                d.set(s, a, next, k as f64 / n as f64);
            }
        }
    }
    d
}

fn foa_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut notes = Vec::new();
    let mut pass = true;

    // (a) whole simplex: every pair jumps to its best successor.
    let partition = LayerPartition::contiguous(&[1, 2, 1]).unwrap();
    let mut d = TabularDynamics::zeros(4, 2);
    let mut r = RewardTable::zeros(4, 2);
    for a in 0..2 {
        d.set(0, a, 1, 0.5);
        d.set(0, a, 2, 0.5);
        d.set(1, a, 3, 1.0);
        d.set(2, a, 3, 1.0);
        r.set(1, a, 0.2);
        r.set(2, a, 0.9);
    }
    let hand = foa_optimistic_plan(&r, &d, &[2.0; 8], &partition)
        .unwrap()
        .value;
    let mut worst_a: f64 = (hand - 0.9).abs();
    for _ in 0..100 {
        let part = random_partition(&mut rng, 4, 12, 4);
        let n_actions = rng.gen_range(1..=3);
        let p_bar = count_based_rows(&mut rng, &part, n_actions);
        let r_hat = random_rewards(&mut rng, &part, n_actions, 3.0);
        let xi: Vec<f64> = (0..part.n_states() * n_actions)
            .map(|_| 2.0 + rng.gen::<f64>())
            .collect();
        let mut v = vec![0.0; part.n_states()];
        for h in (0..part.horizon()).rev() {
            for &s in part.layer(h) {
                let jump = part
                    .successors(s)
                    .iter()
                    .map(|&n| v[n])
                    .fold(f64::NEG_INFINITY, f64::max);
                v[s] = (0..n_actions)
                    .map(|a| r_hat.get(s, a) + jump)
                    .fold(f64::NEG_INFINITY, f64::max);
            }
        }
        let got = foa_optimistic_plan(&r_hat, &p_bar, &xi, &part)
            .unwrap()
            .value;
        worst_a = worst_a.max((got - v[part.start()]).abs());
    }
    pass &= worst_a <= VALUE_TOL;
    notes.push(format!("(a) hand value {hand}, max gap {worst_a:.2e}"));

    // (b) zero radius: plain planning on the empirical model.
    let mut worst_b: f64 = 0.0;
    for _ in 0..100 {
        let part = random_partition(&mut rng, 4, 12, 4);
        let n_actions = rng.gen_range(1..=3);
        let p_bar = random_dynamics(&mut rng, &part, n_actions);
        let r_hat = random_rewards(&mut rng, &part, n_actions, 3.0);
        let xi = vec![0.0; part.n_states() * n_actions];
        let m = foa_optimistic_plan(&r_hat, &p_bar, &xi, &part).unwrap();
        let p = plan(&p_bar, &r_hat, &part).unwrap();
        worst_b = worst_b.max((m.value - p.value).abs());
        if m.p_hat != p_bar {
            worst_b = f64::INFINITY;
        }
    }
    pass &= worst_b <= VALUE_TOL;
    notes.push(format!("(b) max gap {worst_b:.2e}"));

    // (c) grid oracle on layers of width at most two.
    let mut worst_c: f64 = 0.0;
    for _ in 0..200 {
        let part = random_partition(&mut rng, 4, 10, 2);
        let n_actions = rng.gen_range(1..=2);
        let p_bar = count_based_rows(&mut rng, &part, n_actions);
        let r_hat = random_rewards(&mut rng, &part, n_actions, 3.0);
        let xi: Vec<f64> = (0..part.n_states() * n_actions)
            .map(|_| rng.gen::<f64>() * 1.5)
            .collect();
        let got = foa_optimistic_plan(&r_hat, &p_bar, &xi, &part)
            .unwrap()
            .value;
        let oracle = foa_grid_oracle(&r_hat, &p_bar, &xi, &part);
        worst_c = worst_c.max((got - oracle).abs());
    }
    pass &= worst_c <= FOA_ORACLE_TOL;
    notes.push(format!("(c) 200 instances, max gap {worst_c:.2e}"));
    outcome(pass, notes.join("; "))
}

fn ds_spec(m: usize, n_contexts: usize, size_f: usize, shared: bool, seed: u64) -> GenSpec {
    let mut s = GenSpec::new(EnvKind::DoublyStochastic, m, 3, 2);
    s.n_contexts = n_contexts;
    s.size_f = size_f;
    s.shared_dynamics = shared;
    s.seed = seed;
    s
}

fn config(
    spec: &GenSpec,
    algorithm: AlgorithmKind,
    rounds: usize,
    seeds: std::ops::Range<u64>,
) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(EnvSource::Spec(spec.clone()), algorithm, rounds);
    cfg.delta = 0.1;
    cfg.seeds = seeds.collect();
    cfg
}

fn optimism_frequency(runs: &mut Runs) -> Outcome {
    let spec = ds_spec(2, 3, 8, true, 404);
    let p_min = min_reach_probability(&generate(&spec).unwrap().cmdp);
    let mut cfg = config(&spec, AlgorithmKind::RmUcid, 500, 0..50);
    cfg.p_min_declared = Some(p_min);
    cfg.check_optimism = true;
    cfg.potentials = false;
    let prep = prepare(&cfg).unwrap();
    let log = run_prepared(&prep).unwrap();
    let (mut rounds, mut events, mut optimistic) = (0, 0, 0);
    for s in &log.summaries {
        let o = s.optimism.unwrap();
        rounds += o.rounds;
        events += o.event_rounds;
        optimistic += o.optimistic_rounds;
    }
    runs.logs.push(("rm_ucid optimism".into(), log));
    let rate = events as f64 / rounds as f64;
    outcome(
        optimistic == events && rate >= OPTIMISM_EVENT_RATE,
        format!(
            "|S| = {}, p_min {p_min:.4}: event on {events}/{rounds} rounds ({:.1}%), optimistic on {optimistic}/{events}",
            prep.env.cmdp.n_states,
            100.0 * rate
        ),
    )
}

fn potential_bound(runs: &mut Runs) -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for (alg, shared, name) in [
        (AlgorithmKind::RmKd, false, "phi/rm_kd"),
        (AlgorithmKind::RmUcid, true, "psi/rm_ucid"),
    ] {
        let spec = ds_spec(3, 3, 8, shared, 505);
        let p_min = min_reach_probability(&generate(&spec).unwrap().cmdp);
        let mut cfg = config(&spec, alg, 2000, 0..10);
        cfg.bonus_scale = 1.0;
        cfg.p_min_declared = Some(p_min);
        let log = run_prepared(&prepare(&cfg).unwrap()).unwrap();
        let bound = log.summaries[0].potential_bound.unwrap();
        let worst = log
            .summaries
            .iter()
            .map(|s| s.potential_sum)
            .fold(0.0, f64::max);
        pass &= log.summaries.iter().all(|s| s.potential_sum <= bound);
        notes.push(format!(
            "{name}: max sum {worst:.2} <= bound {bound:.2} (p_min {p_min:.4})"
        ));
        runs.logs.push((name.into(), log));
    }
    outcome(pass, notes.join("; "))
}

fn mean_at(log: &RegretLog, t: usize) -> f64 {
    let seeds: Vec<u64> = log.summaries.iter().map(|s| s.seed).collect();
    seeds
        .iter()
        .map(|&s| log.cum_regret_at(s, t).unwrap())
        .sum::<f64>()
        / seeds.len() as f64
}

fn sublinear_regret(runs: &mut Runs) -> Outcome {
    let spec = ds_spec(2, 5, 16, false, 606);
    let mut kd = config(&spec, AlgorithmKind::RmKd, 4000, 0..10);
    kd.bonus_scale = 0.05;
    kd.potentials = false;
    let kd_log = run_prepared(&prepare(&kd).unwrap()).unwrap();
    let mut uni = kd.clone();
    uni.algorithm = AlgorithmKind::UniformRandom;
    let uni_log = run_prepared(&prepare(&uni).unwrap()).unwrap();
    let (r2, r4, u4) = (
        mean_at(&kd_log, 2000),
        mean_at(&kd_log, 4000),
        mean_at(&uni_log, 4000),
    );
    runs.logs.push(("rm_kd sublinear".into(), kd_log));
    let pass = r4 <= SUBLINEAR_RATIO * 2.0 * r2 && r4 <= VS_UNIFORM_RATIO * u4;
    outcome(
        pass,
        format!(
            "R(2000) {r2:.3}, R(4000) {r4:.3} (ratio {:.3}, limit {:.2}); uniform R(4000) {u4:.1} (fraction {:.4}, limit {VS_UNIFORM_RATIO})",
            r4 / r2,
            2.0 * SUBLINEAR_RATIO,
            r4 / u4
        ),
    )
}

fn lsr_dominance(runs: &mut Runs) -> Outcome {
    // Add a context-dependent-dynamics run so the dynamics oracle is covered.
    let mut spec = ds_spec(2, 3, 8, false, 707);
    spec.size_fp = 6;
    let p_min = min_reach_probability(&generate(&spec).unwrap().cmdp);
    let mut cfg = config(&spec, AlgorithmKind::RmUcdd, 500, 0..5);
    cfg.p_min_declared = Some(p_min);
    runs.logs.push((
        "rm_ucdd".into(),
        run_prepared(&prepare(&cfg).unwrap()).unwrap(),
    ));

    let mut checks = 0;
    let mut violations = 0;
    for (_, log) in &runs.logs {
        for s in &log.summaries {
            checks += s.lsr_checks;
            violations += s.lsr_violations;
        }
    }
    outcome(
        checks > 0 && violations == 0,
        format!(
            "{checks} updates over {} runs (slack {LSR_SLACK:e}), {violations} violations",
            runs.logs.len()
        ),
    )
}

fn lower_bound_instance() -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for m in [2, 3, 4] {
        for h in [2, 3] {
            let spec = GenSpec::new(EnvKind::LowerBound, m, h, 2);
            let cmdp = generate(&spec).unwrap().cmdp;
            let reach = min_reach_probability(&cmdp);
            let ok = cmdp.n_states == m * (h - 1) + 2 && reach == 1.0 / m as f64;
            pass &= ok;
            notes.push(format!("M={m},H={h}: |S|={} p_min={reach}", cmdp.n_states));
        }
    }
    outcome(pass, notes.join("; "))
}

fn mixing() -> Outcome {
    let mut worst_sum: f64 = 0.0;
    let mut worst_ratio: f64 = 0.0;
    let mut pass = true;
    for seed in 0..100 {
        let mut spec = GenSpec::new(
            EnvKind::RandomRealizable,
            1 + (seed as usize % 4),
            2 + (seed as usize % 3),
            2,
        );
        spec.n_contexts = 2;
        spec.size_fp = if spec.m > 1 { 3 } else { 1 };
        spec.seed = seed;
        let fp = generate(&spec).unwrap().dynamics_class.unwrap();
        for rho in [0.05, 0.2] {
            let mixed = fp.mix_with_uniform(rho).unwrap();
            let partition = fp.partition();
            for (orig, new) in fp.members().iter().zip(mixed.members()) {
                for (d, e) in orig.iter().zip(new) {
                    pass &= rows_normalized(e, partition);
                    for s in partition.decision_states() {
                        for a in 0..d.n_actions() {
                            let sum: f64 = e.row(s, a).iter().sum();
                            worst_sum = worst_sum.max((sum - 1.0).abs());
                            let shift = row_l1(d.row(s, a), e.row(s, a));
                            pass &= shift <= 2.0 * rho;
                            worst_ratio = worst_ratio.max(shift / (2.0 * rho));
                        }
                    }
                }
            }
        }
    }
    pass &= worst_sum <= PROB_TOL;
    outcome(
        pass,
        format!("max row-sum error {worst_sum:.2e}, max shift / 2rho {worst_ratio:.4}"),
    )
}

fn main() {
    let mut runs = Runs::default();
    type Check<'a> = Box<dyn FnMut(&mut Runs) -> Outcome + 'a>;
    let criteria: Vec<(&str, Option<Duration>, Check)> = vec![
        (
            "occupancy/value consistency",
            Some(Duration::from_secs(10)),
            Box::new(|_| occupancy_value_consistency()),
        ),
        (
            "planner optimality",
            Some(Duration::from_secs(30)),
            Box::new(|_| planner_optimality()),
        ),
        (
            "optimistic planner correctness",
            Some(Duration::from_secs(60)),
            Box::new(|_| foa_correctness()),
        ),
        ("optimism frequency", None, Box::new(optimism_frequency)),
        ("potential bound", None, Box::new(potential_bound)),
        (
            "sublinear regret",
            Some(Duration::from_secs(300)),
            Box::new(sublinear_regret),
        ),
        (
            "least-squares argmin dominance",
            None,
            Box::new(lsr_dominance),
        ),
        (
            "lower-bound instance",
            None,
            Box::new(|_| lower_bound_instance()),
        ),
        ("uniform mixing", None, Box::new(|_| mixing())),
    ];
    let mut failed = 0;
    for (name, limit, mut check) in criteria {
        let start = Instant::now();
        let out = check(&mut runs);
        let elapsed = start.elapsed();
        let in_time = limit.is_none_or(|l| elapsed <= l);
        let pass = out.pass && in_time;
        if !pass {
            failed += 1;
        }
        let budget = limit
            .map(|l| format!(" / {}s", l.as_secs()))
            .unwrap_or_default();
        println!(
            "{} {name}: {} [{:.2}s{budget}]",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
