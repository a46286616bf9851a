//! Maximum bisection, sparse tensor PCA and community detection.

pub mod community;
pub mod maxbisect;
pub mod mpca;
pub mod tensor;

pub use community::{
    build_community, extract_communities, generate_sbm, misclassification_rate, run_community, CommunityRun,
};
pub use maxbisect::{
    brute_force_bisection, build_max_bisection, cut_value, greedy_balance, round_assignment, run_max_bisection,
    BisectionRun, CutSummary, WeightedGraph,
};
pub use mpca::{
    generate_mpca_data, mpca_lagrangian, mpca_metrics, mpca_step, run_mpca, MpcaData, MpcaDataSpec, MpcaMetrics,
    MpcaParams, MpcaRun, MpcaState,
};
pub use tensor::{mode_refold, mode_unfold, tucker_apply, DenseTensor};
