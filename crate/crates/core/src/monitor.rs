//! Shadow validation, replacement offers and drift probing.
//!
//! Agreement is the fraction of requests on which surrogate and LLM produce
//! the same label. Because the LLM itself is only a noisy teacher, decisions
//! use *relative* agreement: live agreement divided by the teacher agreement
//! the surrogate reached on its held-out validation data. A surrogate that
//! keeps at least `tau` of its offline agreement on live traffic (and clears
//! an absolute floor) is offered; a deployed one whose probe agreement falls
//! under `tau_drift` of that baseline is degraded.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::cost::{CostModel, Money};
use crate::lifecycle::LifecycleEvent;
use crate::miner::{LatencyStats, TaskId};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonitorConfig {
    /// Shadow window and drift window, in observations.
    pub window: usize,
    /// Relative agreement required to offer a surrogate.
    pub tau: f64,
    /// Relative probe agreement below which a deployment is degraded.
    pub tau_drift: f64,
    /// Fraction of deployed requests also sent to the LLM.
    pub probe_fraction: f64,
    /// Absolute agreement floor for offers.
    pub min_agreement: f64,
    /// Accept offers without waiting for the user.
    pub auto_approve: bool,
    /// Task requests that must pass after a rollback before redeploying.
    pub min_dwell_requests: u64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            window: 500,
            tau: 0.95,
            tau_drift: 0.90,
            probe_fraction: 0.01,
            min_agreement: 0.80,
            auto_approve: false,
            min_dwell_requests: 0,
        }
    }
}

impl MonitorConfig {
    /// Errors for invalid settings; warnings for legal but inert ones.
    pub fn validate(&self) -> Result<Vec<String>> {
        if self.window == 0 {
            return Err(Error::EmptyWindow);
        }
        for (name, v) in [
            ("tau", self.tau),
            ("tau_drift", self.tau_drift),
            ("probe_fraction", self.probe_fraction),
            ("min_agreement", self.min_agreement),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        let mut warnings = Vec::new();
        if self.probe_fraction == 0.0 {
            warnings.push(String::from("probe_fraction is 0: drift detection is disabled"));
        }
        Ok(warnings)
    }
}

/// One request scored by both the LLM and the surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowObservation {
    pub llm_label: String,
    pub surrogate_label: String,
    pub llm_latency_ms: f64,
    pub surrogate_latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    /// Configured window size.
    pub window: usize,
    /// Observations aggregated (at most `window`).
    pub observed: usize,
    pub matches: usize,
    pub agreement: f64,
    /// False when fewer than `window` observations were available.
    pub complete: bool,
    pub surrogate_latency: LatencyStats,
    pub llm_latency: LatencyStats,
}

/// Aggregates the first `window` shadow observations.
pub fn shadow_compare(observations: &[ShadowObservation], window: usize) -> Result<AgreementReport> {
    if window == 0 {
        return Err(Error::EmptyWindow);
    }
    let used = &observations[..observations.len().min(window)];
    let mut surrogate_latency = LatencyStats::default();
    let mut llm_latency = LatencyStats::default();
    let mut matches = 0;
    for o in used {
        if o.llm_label == o.surrogate_label {
            matches += 1;
        }
        surrogate_latency.record(o.surrogate_latency_ms);
        llm_latency.record(o.llm_latency_ms);
    }
    Ok(AgreementReport {
        window,
        observed: used.len(),
        matches,
        agreement: if used.is_empty() { 0.0 } else { matches as f64 / used.len() as f64 },
        complete: used.len() == window,
        surrogate_latency,
        llm_latency,
    })
}

/// Live agreement over the surrogate's offline teacher agreement.
pub fn relative_agreement(agreement: f64, baseline: f64) -> f64 {
    if baseline <= 0.0 {
        return 0.0;
    }
    agreement / baseline
}

/// Whether a shadow report qualifies for an offer.
pub fn meets_offer_bar(report: &AgreementReport, baseline: f64, config: &MonitorConfig) -> bool {
    report.complete
        && report.agreement >= config.min_agreement
        && relative_agreement(report.agreement, baseline) >= config.tau
}

/// Lifecycle event for a full shadow window, `None` while it is still filling.
pub fn shadow_verdict(report: &AgreementReport, baseline: f64, config: &MonitorConfig) -> Option<LifecycleEvent> {
    if !report.complete {
        return None;
    }
    Some(if meets_offer_bar(report, baseline, config) {
        LifecycleEvent::AgreementMet
    } else {
        LifecycleEvent::AgreementBelow
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftStatus {
    /// Fewer than `window` probes so far.
    Warming,
    Ok,
    Degraded,
}

/// Sliding window over post-deployment probe outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftDetector {
    window: usize,
    baseline: f64,
    tau_drift: f64,
    outcomes: VecDeque<bool>,
    matches: usize,
    observed: u64,
}

impl DriftDetector {
    pub fn new(window: usize, baseline: f64, tau_drift: f64) -> Self {
        DriftDetector { window: window.max(1), baseline, tau_drift, outcomes: VecDeque::new(), matches: 0, observed: 0 }
    }

    pub fn observe(&mut self, agreed: bool) -> DriftStatus {
        self.observed += 1;
        self.outcomes.push_back(agreed);
        self.matches += usize::from(agreed);
        if self.outcomes.len() > self.window {
            let old = self.outcomes.pop_front().expect("non-empty");
            self.matches -= usize::from(old);
        }
        self.status()
    }

    pub fn status(&self) -> DriftStatus {
        if self.outcomes.len() < self.window {
            DriftStatus::Warming
        } else if relative_agreement(self.agreement(), self.baseline) < self.tau_drift {
            DriftStatus::Degraded
        } else {
            DriftStatus::Ok
        }
    }

    pub fn agreement(&self) -> f64 {
        if self.outcomes.is_empty() {
            0.0
        } else {
            self.matches as f64 / self.outcomes.len() as f64
        }
    }

    /// Total probes observed since creation.
    pub fn observed(&self) -> u64 {
        self.observed
    }
}

/// Deterministic probe selection: `key` is a uniformly distributed hash of
/// the request.
pub fn should_probe(key: u64, fraction: f64) -> bool {
    if fraction <= 0.0 {
        return false;
    }
    if fraction >= 1.0 {
        return true;
    }
    ((key >> 11) as f64 / (1u64 << 53) as f64) < fraction
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OfferStatus {
    Pending,
    Accepted,
    Rejected,
    Expired,
}

impl fmt::Display for OfferStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OfferStatus::Pending => "pending",
            OfferStatus::Accepted => "accepted",
            OfferStatus::Rejected => "rejected",
            OfferStatus::Expired => "expired",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Offer {
    pub offer_id: u64,
    pub task_id: TaskId,
    pub current_model: String,
    pub surrogate: String,
    pub savings_per_million: Money,
    pub agreement: f64,
    pub status: OfferStatus,
}

impl Offer {
    pub fn message(&self) -> String {
        format!(
            "{task} is served by {llm}. Accept offer {id} to route it to the custom {sur} surrogate \
             ({agree:.1}% agreement with {llm} in shadow mode), projected to save ${usd:.2} per 1M requests.",
            task = self.task_id,
            llm = self.current_model,
            id = self.offer_id,
            sur = self.surrogate,
            agree = self.agreement * 100.0,
            usd = self.savings_per_million.usd(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OfferOutcome {
    Issued(Offer),
    /// No traffic statistics to quote savings from yet.
    Deferred,
}

#[allow(clippy::too_many_arguments)]
pub fn make_offer(
    offer_id: u64,
    task_id: TaskId,
    report: &AgreementReport,
    baseline: f64,
    config: &MonitorConfig,
    cost: Option<&CostModel>,
    llm_model: &str,
    surrogate: &str,
) -> Result<OfferOutcome> {
    if !meets_offer_bar(report, baseline, config) {
        return Err(Error::Precondition(format!(
            "agreement {:.3} (relative {:.3}) does not meet the offer threshold",
            report.agreement,
            relative_agreement(report.agreement, baseline)
        )));
    }
    let Some(cost) = cost.filter(|c| c.profile.avg_input_tokens + c.profile.avg_output_tokens > 0) else {
        return Ok(OfferOutcome::Deferred);
    };
    Ok(OfferOutcome::Issued(Offer {
        offer_id,
        task_id,
        current_model: llm_model.into(),
        surrogate: surrogate.into(),
        savings_per_million: cost.savings_at(1_000_000),
        agreement: report.agreement,
        status: OfferStatus::Pending,
    }))
}
