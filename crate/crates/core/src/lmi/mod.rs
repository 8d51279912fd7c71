//! Matrix inequalities for the observer network and their assembly.

mod assembly;
mod block;

pub(crate) use assembly::check_scalars;
pub use assembly::{
    analysis_lmi, bar_phi, difference_operator, initial_state_weight, park_block, psi_matrix,
    reciprocal_bound_check, recover_gains, synthesis_lmi, tilde_psi, AnalysisSlack, NeighborTerm,
    NetworkContext, NodeCertificate, NodeContext, NodeGains, SynthesisSlack, MAX_SLACK_CONDITION,
    WIRTINGER,
};
pub use block::{BlockMatrix, BlockSpec};
