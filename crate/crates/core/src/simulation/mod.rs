//! Synthetic doubly censored data, Monte Carlo studies and their metrics.

mod generate;
mod scenario;
mod study;

pub use generate::{generate_replication, AgeData, LatentRecord, Replication, INVERSE_AGE_CAP};
pub use scenario::{EventModel, Generator, ScenarioConfig, ScenarioId, ENTRY_GAP, V_SCALE};
pub use study::{
    empirical_av_difference, generator_comparison, metrics, profile_prediction, run_study, survival_comparison,
    AgeSummary, AvDiffRow, CensoringRateRow, FitRecord, GeneratorDiffRow, MetricsRow, MetricsTable, StudyOutput,
    StudyPlan, SurvivalRow, COEFFICIENT_NAMES, POPULATION_PROFILE,
};
