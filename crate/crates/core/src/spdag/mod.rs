//! Series-parallel structure recovered from a serial trace.
//!
//! [`build_spdag`] materializes the decomposition tree for offline analyses;
//! [`fold_trace`] streams the same structure through an [`Analyzer`] while
//! holding only a stack of open frames.

mod build;
mod fold;
mod stream;
mod summary;
mod tree;

pub use build::build_spdag;
pub use fold::{fold_pipelined, fold_trace, Analyzer, FoldStats, Folder};
pub use stream::{StreamAlgebra, StreamStats, StreamingAnalyzer};
pub use summary::{strand_accumulate, SiteBreakdown, StrandAccumulator, StrandSummary};
pub use tree::{NodeId, NodeView, Role, SpNode, SpTree, SpTreeBuilder};
