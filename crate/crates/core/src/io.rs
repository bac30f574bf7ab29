//! TOML serialization of instances and their function classes.
//!
//! ```toml
//! n_states = 4
//! n_actions = 2
//! H = 2
//! layers = [[0], [1, 2], [3]]
//! contexts = [0]
//! context_dist = [1.0]
//!
//! [[blocks]]
//! context = 0
//! dynamics = [...]   # [s][a][s']
//! rewards = [...]    # [s][a]
//!
//! [reward_class]     # optional
//! truth_index = 0    # optional
//! members = [...]    # [member][c][s][a]
//!
//! [dynamics_class]   # optional
//! members = [...]    # [member][c][s][a][s']
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classes::{DynamicsClass, RewardFunctionClass};
use crate::cmdp::{LayerPartition, LayeredCmdp, RewardTable, TabularDynamics};
use crate::environments::GeneratedEnv;
use crate::error::{CmdpError, Result};

type Rows2 = Vec<Vec<f64>>;
type Rows3 = Vec<Vec<Vec<f64>>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContextBlock {
    context: usize,
    dynamics: Rows3,
    rewards: Rows2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RewardClassDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truth_index: Option<usize>,
    members: Vec<Rows3>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DynamicsClassDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truth_index: Option<usize>,
    members: Vec<Vec<Rows3>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvDoc {
    n_states: usize,
    n_actions: usize,
    #[serde(rename = "H")]
    horizon: usize,
    layers: Vec<Vec<usize>>,
    contexts: Vec<usize>,
    context_dist: Vec<f64>,
    blocks: Vec<ContextBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reward_class: Option<RewardClassDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dynamics_class: Option<DynamicsClassDoc>,
}

fn dynamics_rows(d: &TabularDynamics) -> Rows3 {
    (0..d.n_states())
        .map(|s| (0..d.n_actions()).map(|a| d.row(s, a).to_vec()).collect())
        .collect()
}

fn reward_rows(r: &RewardTable) -> Rows2 {
    (0..r.n_states())
        .map(|s| (0..r.n_actions()).map(|a| r.get(s, a)).collect())
        .collect()
}

fn shape_err(what: &str) -> CmdpError {
    CmdpError::Parse(format!("{what} has the wrong shape"))
}

fn dynamics_from_rows(rows: &Rows3, n_states: usize, n_actions: usize) -> Result<TabularDynamics> {
    if rows.len() != n_states {
        return Err(shape_err("dynamics"));
    }
    let mut flat = Vec::with_capacity(n_states * n_actions * n_states);
    for per_state in rows {
        if per_state.len() != n_actions {
            return Err(shape_err("dynamics"));
        }
        for row in per_state {
            if row.len() != n_states {
                return Err(shape_err("dynamics"));
            }
            flat.extend_from_slice(row);
        }
    }
    TabularDynamics::from_vec(n_states, n_actions, flat)
}

fn rewards_from_rows(rows: &Rows2, n_states: usize, n_actions: usize) -> Result<RewardTable> {
    if rows.len() != n_states || rows.iter().any(|r| r.len() != n_actions) {
        return Err(shape_err("rewards"));
    }
    RewardTable::from_vec(n_states, n_actions, rows.concat())
}

/// Serializes an instance and whichever classes are present.
pub fn env_to_toml(env: &GeneratedEnv) -> Result<String> {
    let cmdp = &env.cmdp;
    let n_states = cmdp.n_states;
    let n_actions = cmdp.n_actions;
    let blocks = (0..cmdp.n_contexts())
        .map(|c| ContextBlock {
            context: c,
            dynamics: dynamics_rows(&cmdp.dynamics[c]),
            rewards: reward_rows(&cmdp.rewards[c]),
        })
        .collect();
    let reward_class = env.reward_class.as_ref().map(|f| RewardClassDoc {
        truth_index: f.truth_index(),
        members: (0..f.len())
            .map(|i| {
                (0..cmdp.n_contexts())
                    .map(|c| reward_rows(&f.table(i, c)))
                    .collect()
            })
            .collect(),
    });
    let dynamics_class = env.dynamics_class.as_ref().map(|fp| DynamicsClassDoc {
        truth_index: fp.truth_index(),
        members: fp
            .members()
            .iter()
            .map(|m| m.iter().map(dynamics_rows).collect())
            .collect(),
    });
    let doc = EnvDoc {
        n_states,
        n_actions,
        horizon: cmdp.horizon(),
        layers: cmdp.partition.layers().to_vec(),
        contexts: (0..cmdp.n_contexts()).collect(),
        context_dist: cmdp.context_dist.clone(),
        blocks,
        reward_class,
        dynamics_class,
    };
    toml::to_string(&doc).map_err(|e| CmdpError::Parse(e.to_string()))
}

/// Parses a document written by [`env_to_toml`]. Structural checks happen
/// here; probabilistic validity is left to `validate_cmdp`.
pub fn env_from_toml(text: &str) -> Result<GeneratedEnv> {
    let doc: EnvDoc = toml::from_str(text).map_err(|e| CmdpError::Parse(e.to_string()))?;
    let n_states = doc.n_states;
    let n_actions = doc.n_actions;
    let partition = LayerPartition::new(doc.layers)?;
    if partition.horizon() != doc.horizon {
        return Err(CmdpError::Parse(format!(
            "H = {} but layers give horizon {}",
            doc.horizon,
            partition.horizon()
        )));
    }
    let n_contexts = doc.contexts.len();
    if doc.contexts != (0..n_contexts).collect::<Vec<_>>() {
        return Err(CmdpError::Parse("contexts must be 0, 1, ..., n-1".into()));
    }
    if doc.blocks.len() != n_contexts || doc.blocks.iter().enumerate().any(|(i, b)| b.context != i)
    {
        return Err(CmdpError::Parse(
            "need exactly one block per context, in context order".into(),
        ));
    }
    let mut dynamics = Vec::with_capacity(n_contexts);
    let mut rewards = Vec::with_capacity(n_contexts);
    for b in &doc.blocks {
        dynamics.push(dynamics_from_rows(&b.dynamics, n_states, n_actions)?);
        rewards.push(rewards_from_rows(&b.rewards, n_states, n_actions)?);
    }
    let cmdp = LayeredCmdp::new(
        partition.clone(),
        n_actions,
        doc.context_dist,
        dynamics,
        rewards,
    )?;

    let reward_class = doc
        .reward_class
        .map(|rc| -> Result<RewardFunctionClass> {
            let members = rc
                .members
                .iter()
                .map(|m| {
                    if m.len() != n_contexts {
                        return Err(shape_err("reward class member"));
                    }
                    let tables = m
                        .iter()
                        .map(|rows| rewards_from_rows(rows, n_states, n_actions))
                        .collect::<Result<Vec<_>>>()?;
                    Ok(RewardFunctionClass::member_from_tables(&tables))
                })
                .collect::<Result<Vec<_>>>()?;
            let f = RewardFunctionClass::new(n_contexts, n_states, n_actions, members)?;
            match rc.truth_index {
                Some(i) => f.with_truth(i),
                None => Ok(f),
            }
        })
        .transpose()?;
    let dynamics_class = doc
        .dynamics_class
        .map(|dc| -> Result<DynamicsClass> {
            let members = dc
                .members
                .iter()
                .map(|m| {
                    m.iter()
                        .map(|rows| dynamics_from_rows(rows, n_states, n_actions))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            let fp = DynamicsClass::new(partition.clone(), n_contexts, n_actions, members)?;
            match dc.truth_index {
                Some(i) => fp.with_truth(i),
                None => Ok(fp),
            }
        })
        .transpose()?;
    Ok(GeneratedEnv {
        cmdp,
        reward_class,
        dynamics_class,
    })
}

pub fn write_env(env: &GeneratedEnv, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, env_to_toml(env)?)?;
    Ok(())
}

pub fn read_env(path: impl AsRef<Path>) -> Result<GeneratedEnv> {
    env_from_toml(&std::fs::read_to_string(path)?)
}
