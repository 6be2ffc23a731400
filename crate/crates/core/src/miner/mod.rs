//! Recurring-task detection: MinHash prompt signatures, greedy clustering,
//! and template mining with slot extraction.

mod cluster;
mod signature;
mod task;
mod template;

pub use cluster::{assign_prompt, Assignment, ClusterSet, MinerConfig};
pub use signature::{estimated_similarity, PromptSignature, SignatureConfig};
pub use task::{is_recurring, InputType, LatencyStats, TaskId, TaskRecord, TaskSignals, TaskType, TokenStats};
pub use template::{mine_template, PromptTemplate, Segment};
