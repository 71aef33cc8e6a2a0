use std::collections::HashMap;
use std::sync::RwLock;
use std::time::{Duration, Instant};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::client::ExpertClient;
use crate::registry::Registry;

pub const DEFAULT_HEALTH_TTL: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Health {
    Up,
    Down,
}

/// Last observed health per expert, trusted for `ttl`.
///
/// Updated both by explicit probes and by the outcome of real calls.
#[derive(Debug)]
pub struct HealthCache {
    ttl: Duration,
    entries: RwLock<HashMap<String, (Health, Instant)>>,
}

impl Default for HealthCache {
    fn default() -> Self {
        HealthCache::new(DEFAULT_HEALTH_TTL)
    }
}

impl HealthCache {
    pub fn new(ttl: Duration) -> Self {
        HealthCache {
            ttl,
            entries: RwLock::new(HashMap::new()),
        }
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    /// Cached status, if it was observed within the TTL.
    pub fn fresh(&self, name: &str) -> Option<Health> {
        let entries = self.entries.read().unwrap_or_else(|e| e.into_inner());
        entries
            .get(name)
            .filter(|(_, at)| at.elapsed() < self.ttl)
            .map(|(h, _)| *h)
    }

    pub fn is_down(&self, name: &str) -> bool {
        self.fresh(name) == Some(Health::Down)
    }

    pub fn record(&self, name: &str, health: Health) {
        let mut entries = self.entries.write().unwrap_or_else(|e| e.into_inner());
        entries.insert(name.to_string(), (health, Instant::now()));
    }
}

/// Up/down for every registered expert, probing those without a fresh entry.
pub async fn probe_experts(
    registry: &Registry,
    client: &ExpertClient,
    cache: &HealthCache,
) -> IndexMap<String, Health> {
    let mut pending = Vec::new();
    for expert in &registry.experts {
        if cache.fresh(&expert.name).is_none() {
            let client = client.clone();
            let expert = expert.clone();
            pending.push(tokio::spawn(async move {
                let up = client.check_health(&expert).await;
                (expert.name, up)
            }));
        }
    }
    for task in pending {
        if let Ok((name, up)) = task.await {
            cache.record(&name, if up { Health::Up } else { Health::Down });
        }
    }
    registry
        .experts
        .iter()
        .map(|e| (e.name.clone(), cache.fresh(&e.name).unwrap_or(Health::Down)))
        .collect()
}
