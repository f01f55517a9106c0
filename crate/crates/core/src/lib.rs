//! Deadline-aware, energy-minimizing scheduling of DNN kernels on
//! heterogeneous ultra-low-power platforms.
//!
//! Each kernel is given a processing element, a voltage-frequency point and
//! a tiling mode so that the workload finishes before its deadline with the
//! least active energy.

pub mod baselines;
pub mod cli;
pub mod error;
pub mod gen;
mod mckp;
pub mod optimizer;
pub mod perfmodel;
pub mod platform;
pub mod schedule;
pub mod tiling;
pub mod validator;
pub mod workload;

pub use baselines::{run_ablation, run_strategy, savings, Ablation, Strategy};
pub use error::{Error, Result};
pub use optimizer::{solve, Problem, SolverKind};
pub use perfmodel::{Configuration, ModelOptions};
pub use platform::{load_platform, load_profiles, max_frequency, PlatformSpec, Profiles};
pub use schedule::{EnergyReport, Schedule, ScheduleFile};
pub use validator::{validate, ValidationResult};
pub use workload::{load_workload, Kernel, KernelGroup, KernelType, Workload};
