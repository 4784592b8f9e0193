//! Structured filter pruning for plain convolutional networks.
//!
//! Each convolutional filter is represented by pooled feature maps over the
//! training set; a partial least squares projection onto the class labels
//! scores every filter through its variable importance in projection (VIP);
//! the globally lowest-scoring filters are cut out, the network is
//! fine-tuned, and the loop repeats. L1-norm and APoZ criteria are available
//! as baselines through the same pipeline.
//!
//! Module map:
//!
//! * [`matrix`]: dense `f64` matrices.
//! * [`pls`]: NIPALS fit, projection and VIP scores.
//! * [`network`]: a small CNN engine (forward, backward, SGD, FLOPs, I/O).
//! * [`representation`]: the filter feature matrix.
//! * [`criteria`]: per-filter importance under PLS+VIP, L1-norm and APoZ.
//! * [`surgery`]: global filter selection and structural removal.
//! * [`pipeline`]: iterative and single-shot pruning runs, criterion comparison.
//! * [`data`]: IDX/CSV loading, synthetic data, splits and subsampling.
//! * [`report`]: pruning reports and their JSON/CSV forms.
//! * [`cli`]: the `plsprune` command line.

pub mod cli;
pub mod config;
pub mod criteria;
pub mod data;
pub mod error;
pub mod matrix;
pub mod network;
pub mod pipeline;
pub mod pls;
pub mod report;
pub mod representation;
pub mod seed;
pub mod surgery;

pub use criteria::{Criterion, FilterScore};
pub use data::{Dataset, ImageShape, Tensor};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use network::{Layer, Network, TrainConfig};
pub use pipeline::{PruneConfig, PruneMode};
pub use pls::{nipals_fit, vip, NipalsOptions, PlsModel, VipScores};
pub use report::PruningReport;
pub use representation::{FeatureMapIndex, FilterKey, PoolingMode};
pub use surgery::RemovalPlan;
