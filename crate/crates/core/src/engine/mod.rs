//! Evaluation, rollout and differentiation of compiled hybrid models.

mod data;
mod io;
mod loss;
mod model;
mod params;

pub use data::{DataError, Dataset, Split, Trajectory, TransitionSet};
pub use io::{
    csv_header, read_split_dir, read_trajectory_csv, write_trajectory_csv, BundleManifest, DataBundle, DataIoError,
    SplitManifest, SplitSummary,
};
pub use loss::ComponentLoss;
pub use model::{
    binary_grad, binary_value, unary_grad, unary_value, EngineError, Model, Workspace, GUARD_EPS,
};
pub use params::{mlp_init, Gradients, LayerLayout, LayerWeights, MlpLayout, ParamLayout, ParamVector};
