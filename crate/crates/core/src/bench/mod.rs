//! Benchmark objectives, grid oracles, replicated studies and report files.

pub mod functions;
pub mod oracle;
pub mod report;
pub mod study;

pub use functions::{example1, example2, example3, BenchmarkFn, KnownMin};
pub use oracle::{brute_force_min, OracleResult};
pub use study::{replicate_study, RunRecord, StrategySpec, StudyConfig, StudyResult, Summary};
