//! Knowledge transfer between similar players: sliding-window and momentum
//! action losses, visit-distribution divergence, and the gated weight that
//! decides how strongly a pair is pulled together.

mod divergence;
mod loss;
mod plan;

pub use divergence::{
    alpha_from_divergence, alpha_tf, jsd, TransferWeight, VisitDistribution, VisitHistogram,
};
pub use loss::{modified_utility, mom_loss, sw_loss, MomState};
pub use plan::{PairSelection, TransferPlan, Variant};
