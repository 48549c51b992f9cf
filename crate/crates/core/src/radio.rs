//! Range-limited broadcast radio: link quality, zone classification,
//! neighbor tables and per-tick delivery.

use crate::geom::Position;
use crate::msg::{Envelope, RobotId};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RadioConfigError {
    #[error("radio distances must satisfy 0 < near_field < safe < critical < break_away <= range, got near_field={near_field}, safe={safe}, critical={critical}, break_away={break_away}, range={range}")]
    Ordering {
        near_field: f64,
        safe: f64,
        critical: f64,
        break_away: f64,
        range: f64,
    },
    #[error("e_min must lie in (0, 1), got {0}")]
    EMin(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DeliveryMode {
    #[default]
    Deterministic,
    Probabilistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioConfig {
    /// Maximum range Z.
    pub range: f64,
    /// Below this distance links are perfect.
    pub near_field: f64,
    pub safe: f64,
    pub critical: f64,
    pub break_away: f64,
    #[serde(default = "default_e_min")]
    pub e_min: f64,
    #[serde(default)]
    pub delivery: DeliveryMode,
}

fn default_e_min() -> f64 {
    0.1
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            range: 2.5,
            near_field: 0.1,
            safe: 1.4,
            critical: 1.6,
            break_away: 1.8,
            e_min: default_e_min(),
            delivery: DeliveryMode::Deterministic,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<(), RadioConfigError> {
        let ok = self.near_field > 0.0
            && self.near_field < self.safe
            && self.safe < self.critical
            && self.critical < self.break_away
            && self.break_away <= self.range
            && self.range.is_finite();
        if !ok {
            return Err(RadioConfigError::Ordering {
                near_field: self.near_field,
                safe: self.safe,
                critical: self.critical,
                break_away: self.break_away,
                range: self.range,
            });
        }
        if !(self.e_min > 0.0 && self.e_min < 1.0) {
            return Err(RadioConfigError::EMin(self.e_min));
        }
        Ok(())
    }

    /// Critical tolerance `d_c - d_s`.
    pub fn critical_tolerance(&self) -> f64 {
        self.critical - self.safe
    }

    /// Break-away tolerance `d_b - d_c`.
    pub fn break_away_tolerance(&self) -> f64 {
        self.break_away - self.critical
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Zone {
    Safe,
    Critical,
    BreakAway,
    OutOfRange,
}

/// Probability of decoding a neighbor's packet at distance `d`. The range
/// boundary is closed: exactly `d = Z` gives zero.
pub fn link_quality(d: f64, cfg: &RadioConfig) -> f64 {
    if d >= cfg.range {
        0.0
    } else if d < cfg.near_field {
        1.0
    } else {
        (-5.0 * d / cfg.range).exp()
    }
}

pub fn classify_zone(d: f64, cfg: &RadioConfig) -> Zone {
    if d <= cfg.safe {
        Zone::Safe
    } else if d <= cfg.critical {
        Zone::Critical
    } else if d <= cfg.break_away {
        Zone::BreakAway
    } else {
        Zone::OutOfRange
    }
}

/// One row of a neighbor table.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor<T> {
    pub position: Position,
    pub distance: f64,
    pub quality: f64,
    pub zone: Zone,
    pub last_heard: u64,
    pub info: T,
}

/// Neighbors heard recently, keyed by id. Entries older than the forgetting
/// time are evicted.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborTable<T> {
    entries: BTreeMap<RobotId, Neighbor<T>>,
}

impl<T> Default for NeighborTable<T> {
    fn default() -> Self {
        Self { entries: BTreeMap::new() }
    }
}

impl<T> NeighborTable<T> {
    pub fn observe(&mut self, id: RobotId, own: Position, other: Position, tick: u64, cfg: &RadioConfig, info: T) {
        let distance = own.dist(other);
        self.entries.insert(
            id,
            Neighbor {
                position: other,
                distance,
                quality: link_quality(distance, cfg),
                zone: classify_zone(distance, cfg),
                last_heard: tick,
                info,
            },
        );
    }

    /// Recomputes distances after the owner moved.
    pub fn refresh(&mut self, own: Position, cfg: &RadioConfig) {
        for n in self.entries.values_mut() {
            n.distance = own.dist(n.position);
            n.quality = link_quality(n.distance, cfg);
            n.zone = classify_zone(n.distance, cfg);
        }
    }

    pub fn evict_older_than(&mut self, now: u64, forget_ticks: u64) {
        self.entries.retain(|_, n| now.saturating_sub(n.last_heard) <= forget_ticks);
    }

    pub fn get(&self, id: RobotId) -> Option<&Neighbor<T>> {
        self.entries.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (RobotId, &Neighbor<T>)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn in_zone(&self, zone: Zone) -> Vec<RobotId> {
        self.entries
            .iter()
            .filter(|(_, n)| n.zone == zone)
            .map(|(k, _)| *k)
            .collect()
    }

    /// (N^s, N^c, N^b): neighbors out of range belong to none of them.
    pub fn partition(&self) -> (Vec<RobotId>, Vec<RobotId>, Vec<RobotId>) {
        (self.in_zone(Zone::Safe), self.in_zone(Zone::Critical), self.in_zone(Zone::BreakAway))
    }
}

/// A robot's transmissions for one tick.
#[derive(Debug, Clone)]
pub struct Outbox {
    pub sender: RobotId,
    pub position: Position,
    pub envelopes: Vec<Envelope>,
}

/// Routes every outbox to the robots in range. Only live robots should be
/// passed in: absent robots neither send nor receive. Inboxes are ordered by
/// (sender, tick).
pub fn deliver<R: Rng>(outboxes: &[Outbox], cfg: &RadioConfig, rng: &mut R) -> BTreeMap<RobotId, Vec<Envelope>> {
    let mut order: Vec<&Outbox> = outboxes.iter().collect();
    order.sort_by_key(|o| o.sender);
    let mut inboxes: BTreeMap<RobotId, Vec<Envelope>> = order.iter().map(|o| (o.sender, Vec::new())).collect();
    for rx in &order {
        let inbox = inboxes.get_mut(&rx.sender).expect("inbox created above");
        for tx in &order {
            if tx.sender == rx.sender {
                continue;
            }
            let d = tx.position.dist(rx.position);
            match cfg.delivery {
                DeliveryMode::Deterministic => {
                    if d <= cfg.range {
                        inbox.extend(tx.envelopes.iter().cloned());
                    }
                }
                DeliveryMode::Probabilistic => {
                    let q = link_quality(d, cfg);
                    for env in &tx.envelopes {
                        // always draw so the stream does not depend on q
                        let u: f64 = rng.gen();
                        if u < q {
                            inbox.push(env.clone());
                        }
                    }
                }
            }
        }
        inbox.sort_by_key(|e| (e.sender, e.tick));
    }
    inboxes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;
    use crate::msg::Payload;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> RadioConfig {
        RadioConfig::default()
    }

    fn ping(id: u32, pos: Position) -> Outbox {
        Outbox {
            sender: RobotId(id),
            position: pos,
            envelopes: vec![Envelope { sender: RobotId(id), tick: 0, payload: Payload::Ping }],
        }
    }

    #[test]
    fn quality_examples() {
        let c = cfg();
        assert_eq!(link_quality(0.05, &c), 1.0);
        assert_eq!(link_quality(c.range, &c), 0.0);
        assert!((link_quality(c.range / 5.0, &c) - (-1.0f64).exp()).abs() < 1e-12);
        assert!((link_quality(c.range / 5.0, &c) - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn zone_examples() {
        let c = cfg();
        assert_eq!(classify_zone(c.safe, &c), Zone::Safe);
        assert_eq!(classify_zone(1.7, &c), Zone::BreakAway);
        assert_eq!(classify_zone(2.0, &c), Zone::OutOfRange);
        assert_eq!(classify_zone(1.5, &c), Zone::Critical);
    }

    #[test]
    fn validate_ordering() {
        let mut c = cfg();
        assert!(c.validate().is_ok());
        c.safe = 1.7;
        assert!(matches!(c.validate(), Err(RadioConfigError::Ordering { .. })));
        let mut c = cfg();
        c.break_away = 3.0;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.e_min = 1.0;
        assert_eq!(c.validate(), Err(RadioConfigError::EMin(1.0)));
    }

    #[test]
    fn out_of_range_pair() {
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let boxes = [ping(0, Vec3::ZERO), ping(1, Vec3::flat(c.range + 0.1, 0.0))];
        let inboxes = deliver(&boxes, &c, &mut rng);
        assert!(inboxes.values().all(|v| v.is_empty()));
    }

    #[test]
    fn near_field_probabilistic_always_delivers() {
        let c = RadioConfig { delivery: DeliveryMode::Probabilistic, ..cfg() };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let boxes = [ping(0, Vec3::ZERO), ping(1, Vec3::flat(0.05, 0.0))];
            let inboxes = deliver(&boxes, &c, &mut rng);
            assert_eq!(inboxes[&RobotId(0)].len(), 1);
            assert_eq!(inboxes[&RobotId(1)].len(), 1);
        }
    }

    #[test]
    fn line_of_three() {
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let boxes = [ping(0, Vec3::ZERO), ping(1, Vec3::flat(2.0, 0.0)), ping(2, Vec3::flat(4.0, 0.0))];
        let inboxes = deliver(&boxes, &c, &mut rng);
        let senders = |id: u32| inboxes[&RobotId(id)].iter().map(|e| e.sender.0).collect::<Vec<_>>();
        assert_eq!(senders(0), vec![1]);
        assert_eq!(senders(2), vec![1]);
        assert_eq!(senders(1), vec![0, 2]);
    }

    #[test]
    fn neighbor_partition() {
        let c = cfg();
        let mut t = NeighborTable::default();
        for (i, d) in [0.5, 1.5, 1.7, 2.2].iter().enumerate() {
            t.observe(RobotId(i as u32), Vec3::ZERO, Vec3::flat(*d, 0.0), 3, &c, ());
        }
        let (s, cr, b) = t.partition();
        assert_eq!(s, vec![RobotId(0)]);
        assert_eq!(cr, vec![RobotId(1)]);
        assert_eq!(b, vec![RobotId(2)]);
        t.evict_older_than(10, 3);
        assert!(t.is_empty());
    }
}
