//! Coreset quality: exact transport on small instances, MMD, coreset
//! conditions, downstream tasks and baselines.

pub mod baselines;
pub mod conditions;
pub mod exact;
pub mod kmeans;
pub mod logreg;
pub mod mmd;
pub mod report;
pub mod svm;

pub use baselines::{herding_baseline, uniform_baseline, uniform_from_pool};
pub use conditions::{coreset_condition_check, ConditionVerdict, FunctionFamily};
pub use exact::{exact_wp, permutation_wp, transport, TransportPlan, PERMUTATION_GUARD, SIZE_GUARD};
pub use kmeans::{kmeans_cost, kmeans_relative, kmeans_task, lloyd, KMeansOutcome, KMeansReference, LloydParams};
pub use logreg::{
    gaussian_kl, laplace_posterior, laplace_posterior_outcomes, logreg_posterior_task,
    logreg_relative, signed_features, synthetic_logreg,
    GaussianPosterior, LaplaceParams,
};
pub use mmd::{median_bandwidth, mmd, mmd_unbiased, KernelSpec};
pub use report::{mean_std, CellSummary, ReportRow, SummaryMethod, Task, TaskReport};
pub use svm::{svm_relative, svm_task, train_svm, LinearSvm, SvmOutcome, SvmParams, SvmReference};
