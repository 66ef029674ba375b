//! Boolean-model clusters, critical radius, and the graph `G^beta` with its
//! origin cluster.

mod clusters;
mod crossing;
mod mott_graph;
mod splitting;

pub use clusters::{boolean_clusters, w_r, ClusterStructure, Region};
pub use crossing::{
    ball_component_sizes, bisect_half, crossing_probability, crossing_threshold, crossing_thresholds,
    empirical_crossing, estimate_rc, estimate_rc_with_thresholds, RcEstimate, RC_UNIT_D2, RC_UNIT_D2_CI,
};
pub use mott_graph::{
    admissible_lambda, cluster_moment, cluster_sizes, coarse_containment_violations, coarse_edge_length,
    coarse_graph_cluster, energy_scale, moment_of_sizes, mott_cluster_of, mott_exponent, mott_graph_cluster,
    MottGraphParams,
};
pub use splitting::{crossing_probability_splitting, SplittingEstimate};
