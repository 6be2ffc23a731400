//! Task lifecycle state machine.

use core::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LifecycleState {
    Detecting,
    Collecting,
    Searching,
    Training,
    Shadow,
    Offered,
    Deployed,
    Degraded,
    RolledBack,
    Abandoned,
}

impl LifecycleState {
    pub fn as_str(self) -> &'static str {
        match self {
            LifecycleState::Detecting => "DETECTING",
            LifecycleState::Collecting => "COLLECTING",
            LifecycleState::Searching => "SEARCHING",
            LifecycleState::Training => "TRAINING",
            LifecycleState::Shadow => "SHADOW",
            LifecycleState::Offered => "OFFERED",
            LifecycleState::Deployed => "DEPLOYED",
            LifecycleState::Degraded => "DEGRADED",
            LifecycleState::RolledBack => "ROLLED_BACK",
            LifecycleState::Abandoned => "ABANDONED",
        }
    }

    /// Whether requests of a task in this state go through the wrapper prompt.
    pub fn wraps_requests(self) -> bool {
        matches!(
            self,
            LifecycleState::Detecting
                | LifecycleState::Collecting
                | LifecycleState::Searching
                | LifecycleState::Training
        )
    }
}

impl fmt::Display for LifecycleState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LifecycleEvent {
    /// The task passed the recurrence test.
    Recurring,
    /// Enough labeled examples were collected.
    EnoughData,
    /// Model search produced a ranking.
    RankingReady,
    /// A trained surrogate was persisted.
    ArtifactPersisted,
    /// Shadow agreement met the threshold over a full window.
    AgreementMet,
    /// Shadow agreement fell short; collect more data.
    AgreementBelow,
    Accept,
    Reject,
    /// Drift probes fell below the drift threshold.
    Drift,
    /// Routing was switched back to the LLM.
    Rollback,
    /// Restart data collection after a rollback.
    Recollect,
}

impl LifecycleEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            LifecycleEvent::Recurring => "recurring",
            LifecycleEvent::EnoughData => "enough_data",
            LifecycleEvent::RankingReady => "ranking_ready",
            LifecycleEvent::ArtifactPersisted => "artifact_persisted",
            LifecycleEvent::AgreementMet => "agreement_met",
            LifecycleEvent::AgreementBelow => "agreement_below",
            LifecycleEvent::Accept => "accept",
            LifecycleEvent::Reject => "reject",
            LifecycleEvent::Drift => "drift",
            LifecycleEvent::Rollback => "rollback",
            LifecycleEvent::Recollect => "recollect",
        }
    }
}

impl fmt::Display for LifecycleEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Applies `event` to `state`, rejecting every edge not in the lifecycle.
pub fn advance(state: LifecycleState, event: LifecycleEvent) -> Result<LifecycleState> {
    use LifecycleEvent as E;
    use LifecycleState as S;
    let next = match (state, event) {
        (S::Detecting, E::Recurring) => S::Collecting,
        (S::Collecting, E::EnoughData) => S::Searching,
        (S::Searching, E::RankingReady) => S::Training,
        (S::Training, E::ArtifactPersisted) => S::Shadow,
        (S::Shadow, E::AgreementMet) => S::Offered,
        (S::Shadow, E::AgreementBelow) => S::Collecting,
        (S::Offered, E::Accept) => S::Deployed,
        (S::Offered, E::Reject) => S::Abandoned,
        (S::Deployed, E::Drift) => S::Degraded,
        (S::Degraded, E::Rollback) => S::RolledBack,
        (S::RolledBack, E::Recollect) => S::Collecting,
        _ => return Err(Error::IllegalTransition { state, event }),
    };
    Ok(next)
}
