//! Command-line front end: config file format, subcommands, artifact
//! layout, and the finite-difference gradient audit.

pub mod commands;
pub mod config;
pub mod gradcheck;

pub use commands::{
    default_checkpoint_path, execute, run, run_verify_corpus, write_log_csv, write_verify_csv,
    CommandError, Manifest, Subcommand, VerifyRow, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_NUMERIC,
    EXIT_OK, GRADCHECK_CASES_PER_FAMILY, VERIFY_DETERMINISTIC_INSTANCES, VERIFY_RANDOM_INSTANCES,
    VERIFY_SKILLS_PER_INSTANCE,
};
pub use config::{parse_config, ConfigError, ExperimentConfig, SCRIPTED_CHECKPOINT};
pub use gradcheck::{run_gradcheck, GradcheckCase, FAMILIES};
