//! Per-round regret records and their CSV form.

use std::io::Write;
use std::path::Path;

use crate::error::{CmdpError, Result};

pub const CSV_HEADER: &str =
    "seed,t,context,v_star,v_pi,inst_regret,cum_regret,return,beta,gamma_or_blank,phi_or_psi";

/// One played round.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretRow {
    pub seed: u64,
    pub t: usize,
    pub context: usize,
    pub v_star: f64,
    pub v_pi: f64,
    pub inst_regret: f64,
    pub cum_regret: f64,
    /// Realized return of the sampled trajectory.
    pub ret: f64,
    /// `None` for baselines without a bonus schedule.
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    /// Contextual potential of the played policy; `None` during initialization.
    pub potential: Option<f64>,
    /// Not part of the CSV.
    pub policy_digest: u64,
    pub optimistic_value: Option<f64>,
    pub xi_mean: Option<f64>,
}

/// Run-level checks for one seed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SeedSummary {
    pub seed: u64,
    pub cum_regret: f64,
    /// Sum of the potential over rounds `t > |A|`.
    pub potential_sum: f64,
    /// `(|S||A| / p_min) (1 + ln(T / |A|))`, when a potential was tracked.
    pub potential_bound: Option<f64>,
    /// Least-squares updates checked against the truth member.
    pub lsr_checks: usize,
    /// Updates where the fitted member's error exceeded the truth's.
    pub lsr_violations: usize,
    pub optimism: Option<OptimismStats>,
}

/// Confidence-event bookkeeping for the context-independent learner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OptimismStats {
    pub rounds: usize,
    /// Rounds where every empirical row lay inside its confidence ball.
    pub event_rounds: usize,
    /// Event rounds where the optimistic value dominated the comparator.
    pub optimistic_rounds: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegretLog {
    pub rows: Vec<RegretRow>,
    pub summaries: Vec<SeedSummary>,
}

impl RegretLog {
    /// Final cumulative regret of every seed, in log order.
    pub fn final_regrets(&self) -> Vec<f64> {
        self.summaries.iter().map(|s| s.cum_regret).collect()
    }

    /// Cumulative regret of `seed` after round `t`.
    pub fn cum_regret_at(&self, seed: u64, t: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.seed == seed && r.t == t)
            .map(|r| r.cum_regret)
    }
}

/// `%.12g`: 12 significant digits, trailing zeros dropped.
pub fn format_g12(x: f64) -> String {
    const DIGITS: i32 = 12;
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..DIGITS).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(format_g12).unwrap_or_default()
}

pub fn csv_string(log: &RegretLog) -> String {
    let mut out = String::with_capacity(64 * (log.rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &log.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.seed,
            r.t,
            r.context,
            format_g12(r.v_star),
            format_g12(r.v_pi),
            format_g12(r.inst_regret),
            format_g12(r.cum_regret),
            format_g12(r.ret),
            opt(r.beta),
            opt(r.gamma),
            opt(r.potential),
        ));
    }
    out
}

pub fn write_csv(log: &RegretLog, path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(csv_string(log).as_bytes())?;
    Ok(())
}

fn field<T: std::str::FromStr>(value: &str, name: &str, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| CmdpError::Parse(format!("line {line}: bad {name} {value:?}")))
}

fn opt_field(value: &str, name: &str, line: usize) -> Result<Option<f64>> {
    if value.is_empty() {
        Ok(None)
    } else {
        field(value, name, line).map(Some)
    }
}

/// Reads rows back from [`csv_string`] output. Columns outside the CSV come
/// back as defaults.
pub fn parse_csv(text: &str) -> Result<Vec<RegretRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        _ => return Err(CmdpError::Parse("missing or unexpected CSV header".into())),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 11 {
            return Err(CmdpError::Parse(format!(
                "line {n}: expected 11 columns, found {}",
                cols.len()
            )));
        }
        rows.push(RegretRow {
            seed: field(cols[0], "seed", n)?,
            t: field(cols[1], "t", n)?,
            context: field(cols[2], "context", n)?,
            v_star: field(cols[3], "v_star", n)?,
            v_pi: field(cols[4], "v_pi", n)?,
            inst_regret: field(cols[5], "inst_regret", n)?,
            cum_regret: field(cols[6], "cum_regret", n)?,
            ret: field(cols[7], "return", n)?,
            beta: opt_field(cols[8], "beta", n)?,
            gamma: opt_field(cols[9], "gamma", n)?,
            potential: opt_field(cols[10], "potential", n)?,
            policy_digest: 0,
            optimistic_value: None,
            xi_mean: None,
        });
    }
    Ok(rows)
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<RegretRow>> {
    parse_csv(&std::fs::read_to_string(path)?)
}
