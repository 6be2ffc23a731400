use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::signature::{PromptSignature, SignatureConfig};
use super::task::TaskId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MinerConfig {
    pub signature: SignatureConfig,
    /// Minimum estimated similarity for joining an existing cluster.
    pub similarity_threshold: f64,
    /// Members required before a cluster counts as a recurring task.
    pub min_cluster_size: u64,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            signature: SignatureConfig::default(),
            similarity_threshold: 0.6,
            min_cluster_size: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Cluster {
    id: TaskId,
    /// Signature of the founding member.
    exemplar: PromptSignature,
    members: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assignment {
    pub task_id: TaskId,
    pub created: bool,
    /// Similarity to the chosen exemplar (1.0 for a new cluster).
    pub similarity: f64,
}

/// Greedy single-pass clustering of prompt signatures.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSet {
    clusters: Vec<Cluster>,
    next_id: u64,
    threshold: f64,
}

impl ClusterSet {
    pub fn new(threshold: f64) -> Self {
        ClusterSet { clusters: Vec::new(), next_id: 0, threshold }
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// Best existing cluster for `sig`: maximal exemplar similarity at or
    /// above the threshold, lowest id on ties.
    pub fn best_match(&self, sig: &PromptSignature) -> Option<(TaskId, f64)> {
        let mut best: Option<(TaskId, f64)> = None;
        for c in &self.clusters {
            let s = c.exemplar.similarity(sig);
            if s >= self.threshold && best.is_none_or(|(id, b)| s > b || (s == b && c.id < id)) {
                best = Some((c.id, s));
            }
        }
        best
    }

    /// Places `sig` in its best cluster, or founds a new one.
    pub fn assign(&mut self, sig: &PromptSignature) -> Assignment {
        if let Some((id, s)) = self.best_match(sig) {
            self.add_member(id);
            return Assignment { task_id: id, created: false, similarity: s };
        }
        let id = TaskId(self.next_id);
        self.insert(id, sig.clone());
        self.add_member(id);
        Assignment { task_id: id, created: true, similarity: 1.0 }
    }

    /// Registers a cluster with a known id (used when replaying a ledger or
    /// registering a task manually).
    pub fn insert(&mut self, id: TaskId, exemplar: PromptSignature) {
        if self.clusters.iter().any(|c| c.id == id) {
            return;
        }
        self.clusters.push(Cluster { id, exemplar, members: 0 });
        self.clusters.sort_by_key(|c| c.id);
        self.next_id = self.next_id.max(id.0 + 1);
    }

    pub fn add_member(&mut self, id: TaskId) {
        if let Some(c) = self.clusters.iter_mut().find(|c| c.id == id) {
            c.members += 1;
        }
    }

    pub fn members(&self, id: TaskId) -> Option<u64> {
        self.clusters.iter().find(|c| c.id == id).map(|c| c.members)
    }

    pub fn contains(&self, id: TaskId) -> bool {
        self.clusters.iter().any(|c| c.id == id)
    }

    pub fn next_id(&self) -> TaskId {
        TaskId(self.next_id)
    }
}

/// Convenience: signature + assignment in one step.
pub fn assign_prompt(set: &mut ClusterSet, prompt: &str, cfg: &SignatureConfig) -> Assignment {
    set.assign(&PromptSignature::compute(prompt, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_set_creates_cluster() {
        let cfg = SignatureConfig::default();
        let mut set = ClusterSet::new(0.6);
        let a = assign_prompt(&mut set, "Review: fine", &cfg);
        assert!(a.created);
        assert_eq!(a.task_id, TaskId(0));
        let b = assign_prompt(&mut set, "Review: fine", &cfg);
        assert!(!b.created);
        assert_eq!(b.task_id, TaskId(0));
        assert_eq!(set.members(TaskId(0)), Some(2));
    }

    #[test]
    fn dissimilar_prompt_founds_new_cluster() {
        let cfg = SignatureConfig::default();
        let mut set = ClusterSet::new(0.6);
        assign_prompt(&mut set, "Summarize the following meeting notes in three bullets", &cfg);
        let b = assign_prompt(&mut set, "What is the capital of Mongolia?", &cfg);
        assert!(b.created);
        assert_eq!(set.len(), 2);
    }

    #[test]
    fn ties_go_to_lowest_id() {
        let cfg = SignatureConfig::default();
        let mut set = ClusterSet::new(0.6);
        let sig = PromptSignature::compute("identical exemplar text", &cfg);
        set.insert(TaskId(5), sig.clone());
        set.insert(TaskId(2), sig.clone());
        assert_eq!(set.assign(&sig).task_id, TaskId(2));
        assert_eq!(set.next_id(), TaskId(6));
    }
}
