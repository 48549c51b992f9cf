//! Virtual stigmergy: a last-writer-wins replicated key-value store that
//! spreads over the radio by flooding and repairs stale replicas with
//! anti-entropy replies.

use crate::msg::{self, Envelope, Payload, RobotId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StigEntry {
    pub value: Vec<u8>,
    pub timestamp: u64,
    pub writer: RobotId,
}

impl StigEntry {
    /// Total order used for conflict resolution.
    pub fn stamp(&self) -> (u64, RobotId) {
        (self.timestamp, self.writer)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum StigMsg {
    Put { key: String, value: Vec<u8>, ts: u64, writer: RobotId },
    Query { key: String, ts: u64, writer: RobotId },
}

#[derive(Debug, Error, PartialEq)]
pub enum StigError {
    #[error("stigmergy key must not be empty")]
    EmptyKey,
    #[error("value for `{key}` encodes to {size} bytes, above the {mtu}-byte MTU")]
    TooLarge { key: String, size: usize, mtu: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stigmergy {
    owner: RobotId,
    clock: u64,
    entries: BTreeMap<String, StigEntry>,
    outbox: Vec<StigMsg>,
    last_query: BTreeMap<String, u64>,
    mtu: usize,
    /// Minimum ticks between two QUERY messages for the same key.
    query_interval: u64,
    dropped: u64,
}

impl Stigmergy {
    pub fn new(owner: RobotId) -> Self {
        Self::with_limits(owner, msg::DEFAULT_MTU, 10)
    }

    pub fn with_limits(owner: RobotId, mtu: usize, query_interval: u64) -> Self {
        Self {
            owner,
            clock: 0,
            entries: BTreeMap::new(),
            outbox: Vec::new(),
            last_query: BTreeMap::new(),
            mtu,
            query_interval,
            dropped: 0,
        }
    }

    pub fn owner(&self) -> RobotId {
        self.owner
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    /// Malformed messages dropped so far.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn put(&mut self, key: &str, value: Vec<u8>) -> Result<(), StigError> {
        if key.is_empty() {
            return Err(StigError::EmptyKey);
        }
        let prior = self.entries.get(key).map(|e| e.timestamp).unwrap_or(0);
        let ts = self.clock.max(prior) + 1;
        let msg = StigMsg::Put { key: key.to_string(), value, ts, writer: self.owner };
        let size = msg::encode(&Envelope { sender: self.owner, tick: 0, payload: Payload::Stig(msg.clone()) }).len();
        if size > self.mtu {
            return Err(StigError::TooLarge { key: key.to_string(), size, mtu: self.mtu });
        }
        self.clock = ts;
        if let StigMsg::Put { value, .. } = &msg {
            self.entries.insert(
                key.to_string(),
                StigEntry { value: value.clone(), timestamp: ts, writer: self.owner },
            );
        }
        self.outbox.push(msg);
        Ok(())
    }

    /// Reads the newest local value. Queues a QUERY (rate limited per key)
    /// so a neighbor holding something newer answers with it.
    pub fn get(&mut self, key: &str, now: u64) -> Option<&[u8]> {
        let due = self
            .last_query
            .get(key)
            .map(|t| now >= t + self.query_interval)
            .unwrap_or(true);
        if due && !key.is_empty() {
            self.last_query.insert(key.to_string(), now);
            let (ts, writer) = self.entries.get(key).map(|e| e.stamp()).unwrap_or((0, RobotId(0)));
            self.outbox.push(StigMsg::Query { key: key.to_string(), ts, writer });
        }
        self.entries.get(key).map(|e| e.value.as_slice())
    }

    /// Local read without any network side effect.
    pub fn peek(&self, key: &str) -> Option<&StigEntry> {
        self.entries.get(key)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &StigEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Entries whose key starts with `prefix`.
    pub fn scan<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, &'a StigEntry)> + 'a {
        self.entries
            .range(prefix.to_string()..)
            .take_while(move |(k, _)| k.starts_with(prefix))
            .map(|(k, v)| (k.as_str(), v))
    }

    pub fn on_message(&mut self, msg: &StigMsg) {
        match msg {
            StigMsg::Put { key, value, ts, writer } => {
                if key.is_empty() || *ts == 0 {
                    self.dropped += 1;
                    return;
                }
                self.clock = self.clock.max(*ts);
                let incoming = (*ts, *writer);
                match self.entries.get(key) {
                    Some(local) if local.stamp() == incoming => {}
                    Some(local) if local.stamp() > incoming => {
                        let reply = StigMsg::Put {
                            key: key.clone(),
                            value: local.value.clone(),
                            ts: local.timestamp,
                            writer: local.writer,
                        };
                        if !self.outbox.contains(&reply) {
                            self.outbox.push(reply);
                        }
                    }
                    _ => {
                        self.entries.insert(
                            key.clone(),
                            StigEntry { value: value.clone(), timestamp: *ts, writer: *writer },
                        );
                        self.outbox.push(msg.clone());
                    }
                }
            }
            StigMsg::Query { key, ts, writer } => {
                if key.is_empty() {
                    self.dropped += 1;
                    return;
                }
                if let Some(local) = self.entries.get(key) {
                    if local.stamp() > (*ts, *writer) {
                        let reply = StigMsg::Put {
                            key: key.clone(),
                            value: local.value.clone(),
                            ts: local.timestamp,
                            writer: local.writer,
                        };
                        if !self.outbox.contains(&reply) {
                            self.outbox.push(reply);
                        }
                    }
                }
            }
        }
    }

    pub fn drain_outbox(&mut self) -> Vec<StigMsg> {
        std::mem::take(&mut self.outbox)
    }

    pub fn pending(&self) -> &[StigMsg] {
        &self.outbox
    }

    /// One line per entry, for the debug dump.
    pub fn dump(&self) -> Vec<String> {
        self.entries
            .iter()
            .map(|(k, e)| format!("{k} ts={} writer={} bytes={}", e.timestamp, e.writer, e.value.len()))
            .collect()
    }
}
