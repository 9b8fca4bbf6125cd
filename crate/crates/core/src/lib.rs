pub mod dbscan;
pub mod error;
pub mod forest;
pub mod geometry;
pub mod ght;
pub mod ingest;
pub mod metric;
pub mod pipeline;
pub mod planner;
pub mod synth;

pub use dbscan::{Clustering, DbscanParams, Partition};
pub use error::{Error, Result};
pub use forest::{forest_knn, recall_at_k, select_indexes, BuildMethod, Forest, QueryResult, SearchConfig};
pub use geometry::{Ball, OverlapMethod, OverlapRegime, OverlapReport, Region};
pub use ght::{GhTree, Hit, Pruning};
pub use metric::{centroid, distance, CostCounters, DataObject, Dataset, DistanceFn, Metric, ObjectId};
pub use pipeline::{build_forest, BuildConfig, BuildCost};
pub use planner::{IndexGroup, IndexKind, IndexPlan, Thresholds};
