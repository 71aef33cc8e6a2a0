//! Per-query routing and expert invocation with fallback.

use std::sync::{Arc, RwLock};
use std::time::Instant;

use coe_core::router::{route, route_via_leaderboard, RouterParams, SharedLeaderboard};
use coe_core::Leaderboard;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::client::ExpertClient;
use crate::error::GatewayError;
use crate::health::{probe_experts, Health, HealthCache};
use crate::registry::Registry;

/// How the gateway picks an expert for a query.
#[derive(Debug, Clone)]
pub enum RouterMode {
    /// Router labels are expert names.
    Direct(Arc<RouterParams>),
    /// Router labels are subjects; the leaderboard maps subject → expert.
    TwoStage {
        subject_params: Arc<RouterParams>,
        leaderboard: Arc<SharedLeaderboard>,
    },
}

impl RouterMode {
    pub fn direct(params: RouterParams) -> Self {
        RouterMode::Direct(Arc::new(params))
    }

    pub fn two_stage(subject_params: RouterParams, leaderboard: Leaderboard) -> Self {
        RouterMode::TwoStage {
            subject_params: Arc::new(subject_params),
            leaderboard: Arc::new(SharedLeaderboard::new(leaderboard)),
        }
    }
}

/// A routing decision before any expert is called.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    /// Candidate experts, most preferred first.
    pub ranked: Vec<String>,
    /// Router distribution over its labels.
    pub distribution: IndexMap<String, f64>,
}

impl Decision {
    pub fn model(&self) -> &str {
        &self.ranked[0]
    }
}

fn ranked_labels(labels: &[String], distribution: &[f64]) -> Vec<String> {
    let mut order: Vec<usize> = (0..labels.len()).collect();
    // stable: equal probabilities keep label order
    order.sort_by(|&a, &b| distribution[b].total_cmp(&distribution[a]));
    order.into_iter().map(|i| labels[i].clone()).collect()
}

pub fn decide(mode: &RouterMode, text: &str) -> Result<Decision, GatewayError> {
    match mode {
        RouterMode::Direct(params) => {
            let r = route(params, text);
            Ok(Decision {
                ranked: ranked_labels(&params.labels, &r.distribution),
                distribution: params.labels.iter().cloned().zip(r.distribution).collect(),
            })
        }
        RouterMode::TwoStage {
            subject_params,
            leaderboard,
        } => {
            let lb = leaderboard.snapshot();
            let r = route_via_leaderboard(subject_params, &lb, text)?;
            let row = &lb.table[&r.subject];
            let mut others: Vec<(&String, f64)> =
                row.iter().filter(|(m, _)| **m != r.model).map(|(m, s)| (m, *s)).collect();
            others.sort_by(|a, b| b.1.total_cmp(&a.1));
            let mut ranked = vec![r.model.clone()];
            ranked.extend(others.into_iter().map(|(m, _)| m.clone()));
            Ok(Decision {
                ranked,
                distribution: subject_params.labels.iter().cloned().zip(r.distribution).collect(),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutedResponse {
    pub model: String,
    pub output: String,
    pub distribution: IndexMap<String, f64>,
    pub latency_ms: u64,
    pub fallback_used: bool,
}

/// Registry plus router; replaced as a unit on reload.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub registry: Registry,
    pub mode: RouterMode,
}

#[derive(Debug)]
pub struct Gateway {
    snapshot: RwLock<Arc<Snapshot>>,
    client: ExpertClient,
    health: HealthCache,
}

impl Gateway {
    pub fn new(registry: Registry, mode: RouterMode, health: HealthCache) -> Self {
        if let RouterMode::Direct(params) = &mode {
            for label in &params.labels {
                if registry.get(label).is_none() {
                    tracing::warn!(label = %label, "router label has no registered expert");
                }
            }
        }
        Gateway {
            snapshot: RwLock::new(Arc::new(Snapshot { registry, mode })),
            client: ExpertClient::new(),
            health,
        }
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Swap registry and router atomically; in-flight requests finish on
    /// the snapshot they started with.
    pub fn reload(&self, registry: Registry, mode: RouterMode) {
        *self.snapshot.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(Snapshot { registry, mode });
    }

    pub fn health(&self) -> &HealthCache {
        &self.health
    }

    pub fn decide(&self, text: &str) -> Result<Decision, GatewayError> {
        decide(&self.snapshot().mode, text)
    }

    pub async fn probe(&self) -> IndexMap<String, Health> {
        probe_experts(&self.snapshot().registry, &self.client, &self.health).await
    }

    /// Route `text` and return the first successful expert answer.
    ///
    /// Candidates are tried in decreasing router preference. Experts the
    /// health cache has down are skipped, and only retried as a last resort.
    pub async fn dispatch(&self, text: &str) -> Result<RoutedResponse, GatewayError> {
        let start = Instant::now();
        let snap = self.snapshot();
        let decision = decide(&snap.mode, text)?;
        let primary = decision.model().to_string();

        let candidates: Vec<_> = decision
            .ranked
            .iter()
            .filter_map(|m| snap.registry.get(m))
            .collect();
        if candidates.is_empty() {
            return Err(GatewayError::NoExpertAvailable { label: primary });
        }

        let (healthy, marked_down): (Vec<_>, Vec<_>) =
            candidates.into_iter().partition(|e| !self.health.is_down(&e.name));
        let mut failures = Vec::new();
        for expert in healthy.into_iter().chain(marked_down) {
            match self.client.call(expert, text).await {
                Ok(output) => {
                    self.health.record(&expert.name, Health::Up);
                    return Ok(RoutedResponse {
                        fallback_used: expert.name != primary,
                        model: expert.name.clone(),
                        output,
                        distribution: decision.distribution,
                        latency_ms: start.elapsed().as_millis() as u64,
                    });
                }
                Err(e) => {
                    tracing::warn!(expert = %expert.name, error = %e, "expert failed");
                    self.health.record(&expert.name, Health::Down);
                    failures.push((expert.name.clone(), e));
                }
            }
        }
        Err(GatewayError::AllExpertsFailed { failures })
    }
}
