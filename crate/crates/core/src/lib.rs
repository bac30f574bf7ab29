//! Tabular layered contextual MDPs and optimistic regret-minimizing learners.
//!
//! The crate covers the instance model ([`cmdp`]), exact planning and
//! occupancy computations ([`planning`]), finite function classes with a
//! least-squares oracle ([`classes`]), the learners ([`learner`]) and an
//! experiment harness ([`harness`]) that measures exact regret.

pub mod classes;
pub mod cmdp;
pub mod environments;
pub mod error;
pub mod foa;
pub mod harness;
pub mod io;
pub mod learner;
pub mod planning;
pub mod rng;
pub mod schedules;
pub mod trajectory;

pub use classes::{
    DynamicsClass, RewardFunctionClass, RewardSample, SampleBatch, TransitionSample,
};
pub use cmdp::{
    validate_cmdp, DeterministicPolicy, LayerPartition, LayeredCmdp, RewardTable, TabularDynamics,
    ValidationReport, Violation,
};
pub use environments::{generate, EnvKind, GenSpec, GeneratedEnv};
pub use error::{CmdpError, Result};
pub use foa::{foa_optimistic_plan, OptimisticModel};
pub use harness::{
    run_experiment, write_csv, AlgorithmKind, EnvSource, ExperimentConfig, RegretLog, RegretRow,
};
pub use io::{read_env, write_env};
pub use learner::{Algorithm, Decision, KnownDynamicsView, Learner, LearnerView, RoundModel};
pub use planning::{
    compute_occupancy, evaluate_policy, exact_expected_value, min_reach_probability, plan,
    value_of_policy, OccupancyTable, Plan,
};
pub use schedules::{BonusMode, Schedules};
pub use trajectory::{sample_trajectory, Step, Trajectory};
