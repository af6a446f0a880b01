use std::collections::{BTreeSet, HashMap};
use std::net::SocketAddr;
use std::time::Duration;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Sensor,
    Client,
}

/// Liveness and traffic record for one node the core has heard from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NodeRegistryEntry {
    pub node_id: String,
    pub kind: NodeKind,
    pub remote_addr: SocketAddr,
    /// Milliseconds since the Unix epoch.
    pub first_seen: i64,
    pub last_seen: i64,
    pub packets: u64,
    /// Sensor ids this client subscribes to; always empty for sensors.
    pub subscriptions: BTreeSet<String>,
}

/// Id under which a client is registered; clients are known by address.
pub fn client_node_id(addr: SocketAddr) -> String {
    format!("client@{addr}")
}

/// Node table plus a reverse index from sensor id to subscriber addresses.
#[derive(Debug, Default)]
pub struct NodeRegistry {
    entries: HashMap<String, NodeRegistryEntry>,
    subscribers: HashMap<String, BTreeSet<SocketAddr>>,
}

impl NodeRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, node_id: &str) -> Option<&NodeRegistryEntry> {
        self.entries.get(node_id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &NodeRegistryEntry> {
        self.entries.values()
    }

    fn touch(
        &mut self,
        node_id: &str,
        kind: NodeKind,
        addr: SocketAddr,
        now_ms: i64,
    ) -> &mut NodeRegistryEntry {
        let entry = self
            .entries
            .entry(node_id.to_owned())
            .or_insert_with(|| NodeRegistryEntry {
                node_id: node_id.to_owned(),
                kind,
                remote_addr: addr,
                first_seen: now_ms,
                last_seen: now_ms,
                packets: 0,
                subscriptions: BTreeSet::new(),
            });
        entry.remote_addr = addr;
        entry.last_seen = entry.last_seen.max(now_ms);
        entry.packets += 1;
        entry
    }

    /// Records a data packet from a sensor and returns its current
    /// subscribers.
    pub fn record_sensor(
        &mut self,
        sensor_id: &str,
        addr: SocketAddr,
        now_ms: i64,
    ) -> Vec<SocketAddr> {
        self.touch(sensor_id, NodeKind::Sensor, addr, now_ms);
        self.subscribers
            .get(sensor_id)
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default()
    }

    /// Registers a client subscription. Returns `true` if it was new.
    pub fn subscribe(&mut self, client: SocketAddr, sensor_id: &str, now_ms: i64) -> bool {
        let id = client_node_id(client);
        let entry = self.touch(&id, NodeKind::Client, client, now_ms);
        let added = entry.subscriptions.insert(sensor_id.to_owned());
        self.subscribers
            .entry(sensor_id.to_owned())
            .or_default()
            .insert(client);
        added
    }

    pub fn subscribers_of(&self, sensor_id: &str) -> usize {
        self.subscribers.get(sensor_id).map_or(0, BTreeSet::len)
    }

    /// Drops entries idle for longer than `ttl`. A sensor that still has a
    /// live subscriber is kept even when idle.
    pub fn expire_stale(&mut self, now_ms: i64, ttl: Duration) -> Vec<String> {
        let ttl_ms = ttl.as_millis() as i64;
        let stale = |e: &NodeRegistryEntry| now_ms - e.last_seen > ttl_ms;

        let mut removed: Vec<String> = self
            .entries
            .values()
            .filter(|e| e.kind == NodeKind::Client && stale(e))
            .map(|e| e.node_id.clone())
            .collect();
        for id in &removed {
            if let Some(client) = self.entries.remove(id) {
                for sensor in &client.subscriptions {
                    if let Some(set) = self.subscribers.get_mut(sensor) {
                        set.remove(&client.remote_addr);
                        if set.is_empty() {
                            self.subscribers.remove(sensor);
                        }
                    }
                }
            }
        }

        let sensors: Vec<String> = self
            .entries
            .values()
            .filter(|e| e.kind == NodeKind::Sensor && stale(e))
            .filter(|e| self.subscribers_of(&e.node_id) == 0)
            .map(|e| e.node_id.clone())
            .collect();
        for id in &sensors {
            self.entries.remove(id);
        }
        removed.extend(sensors);
        removed.sort();
        removed
    }

    pub fn snapshot(&self) -> Vec<NodeRegistryEntry> {
        let mut v: Vec<_> = self.entries.values().cloned().collect();
        v.sort_by(|a, b| a.node_id.cmp(&b.node_id));
        v
    }
}
