//! Multi-label ranking SVM with privileged information (LUPI).
//!
//! During training every instance carries two feature views: the *available*
//! features `x` (present at both training and test time) and the *privileged*
//! features `x*` (training only). Two kernel classifiers are fit jointly:
//! ranking constraints force every present label to outscore every absent
//! label in both views, and per-label similarity constraints tie the two
//! score functions together so that the privileged view can shape the
//! available-view classifier. Prediction uses available features only:
//! scores are ranked and the top `psi` labels are emitted, where `psi` comes
//! from a ridge-regression label-count predictor.
//!
//! The joint max-margin problem is solved in its dual form, a box/triangle
//! constrained quadratic program, by a conditional-gradient (Frank-Wolfe)
//! method with a closed-form linear oracle and exact line search. Biases are
//! absorbed into the kernels (`K + 1`), which removes the dual's equality
//! constraints and keeps the feasible set a product of simple sets.
//!
//! Four solver configurations mirror the usual ablation:
//!
//! | variant            | ranking constraints | privileged coupling |
//! |--------------------|---------------------|---------------------|
//! | `binary_relevance` | per-label hinge     | no                  |
//! | `ranking_only`     | yes                 | no                  |
//! | `similarity_only`  | per-label hinge     | yes                 |
//! | `full`             | yes                 | yes                 |
//!
//! Entry points: [`data::load_dataset`], [`model::train`],
//! [`model::TrainedModel::predict`], [`metrics::evaluate`],
//! [`experiment::run_ablation`], [`synth::generate`].

pub mod data;
pub mod dual;
pub mod error;
pub mod experiment;
pub mod kernel;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod solver;
pub mod synth;

pub use data::{Instance, LabelSet, MultiLabelDataset, RankingPair};
pub use dual::{DualProblem, DualVariables, TrainConfig, Variant};
pub use error::{Error, Result};
pub use kernel::{GramPair, KernelKind, KernelSpec};
pub use metrics::EvaluationReport;
pub use model::{LabelSizePredictor, SlackReport, TrainedModel};
pub use solver::SolveReport;
