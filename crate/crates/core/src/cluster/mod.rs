//! Density clustering of sampled clouds and template-guided instance counts.

mod count;
mod dbscan;
mod geometry;

pub use count::{
    align_to_template, count_instances, split_cluster, Alignment, ClusterLabel, ClusterReport, CountParams, CountResult,
    PartReport, Split, SplitConfig, Template, DEFAULT_TEMPLATE_POINTS,
};
pub use dbscan::{dbscan, Cluster, Clustering, DbscanParams};
pub use geometry::{cluster_volume, convex_hull_volume, hausdorff, voxel_volume, VolumeEstimate, VolumeMethod};
