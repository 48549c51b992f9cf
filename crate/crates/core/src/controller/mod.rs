//! Per-robot decentralized controller: roles, elections, chain building,
//! connectivity-preserving motion and self-healing.

mod motion;
mod tick;

pub use motion::{
    connectivity_bound, link_admissible, preferred_velocity, rvo_select, rvo_select_constrained, time_to_collision,
    u_path, LinkSense, PathFollower, RvoNeighbor,
};
pub use tick::robot_tick;

use crate::geom::{Position, Vec3};
use crate::msg::{ChainId, Envelope, RobotId, RobotKind, Role, StatusMsg};
use crate::planner::{PathTuple, PlannerConfig};
use crate::radio::{NeighborTable, RadioConfig};
use crate::stigmergy::Stigmergy;
use crate::world::GridMap;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ControlConfigError {
    #[error("v_max * dt = {step} must stay below break_away - critical = {margin}")]
    StepTooLarge { step: f64, margin: f64 },
    #[error("control parameter `{0}` must be positive and finite")]
    NonPositive(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    pub v_max: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// RVO collision-time weight α.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub r_col: f64,
    #[serde(default = "default_link_failure_time")]
    pub link_failure_time: f64,
    #[serde(default = "default_dt")]
    pub status_period: f64,
    #[serde(default = "default_forget_time")]
    pub forget_time: f64,
    #[serde(default = "default_bidding_time")]
    pub bidding_time: f64,
    /// Target tolerance δ_tol; defaults to half the safe distance.
    #[serde(default)]
    pub goal_tolerance: Option<f64>,
    #[serde(default)]
    pub wp_prediction: bool,
}

fn default_dt() -> f64 {
    0.1
}
fn default_alpha() -> f64 {
    1.0
}
fn default_link_failure_time() -> f64 {
    5.0
}
fn default_forget_time() -> f64 {
    3.0
}
fn default_bidding_time() -> f64 {
    10.0
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            v_max: 0.5,
            dt: default_dt(),
            alpha: default_alpha(),
            r_col: 0.25,
            link_failure_time: default_link_failure_time(),
            status_period: default_dt(),
            forget_time: default_forget_time(),
            bidding_time: default_bidding_time(),
            goal_tolerance: None,
            wp_prediction: false,
        }
    }
}

impl ControlConfig {
    pub fn validate(&self, radio: &RadioConfig) -> Result<(), ControlConfigError> {
        for (name, v) in [
            ("v_max", self.v_max),
            ("dt", self.dt),
            ("alpha", self.alpha),
            ("r_col", self.r_col),
            ("link_failure_time", self.link_failure_time),
            ("status_period", self.status_period),
            ("forget_time", self.forget_time),
            ("bidding_time", self.bidding_time),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ControlConfigError::NonPositive(name));
            }
        }
        if let Some(t) = self.goal_tolerance {
            if !(t.is_finite() && t > 0.0) {
                return Err(ControlConfigError::NonPositive("goal_tolerance"));
            }
        }
        let step = self.v_max * self.dt;
        let margin = radio.break_away - radio.critical;
        if step >= margin {
            return Err(ControlConfigError::StepTooLarge { step, margin });
        }
        Ok(())
    }

    /// Seconds to whole ticks (at least one).
    pub fn ticks(&self, seconds: f64) -> u64 {
        ((seconds / self.dt).round() as u64).max(1)
    }

    pub fn tolerance(&self, radio: &RadioConfig) -> f64 {
        self.goal_tolerance.unwrap_or(0.5 * radio.safe)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", deny_unknown_fields)]
pub enum RootMode {
    /// The ground station is a known robot.
    Fixed { id: u32 },
    /// Robots elect the one closest to the anchor.
    Elected { anchor: [f64; 3] },
}

/// Knowledge shared by every robot before the run starts.
#[derive(Debug, Clone, PartialEq)]
pub struct Mission {
    pub targets: Vec<Position>,
    /// Redundant chains per target (C_n).
    pub links: u32,
    pub root: RootMode,
}

impl Mission {
    pub fn chain_count(&self) -> u32 {
        self.targets.len() as u32 * self.links
    }

    pub fn chains(&self) -> impl Iterator<Item = ChainId> {
        (0..self.chain_count()).map(ChainId)
    }

    pub fn target_of(&self, chain: ChainId) -> Position {
        self.targets[(chain.0 / self.links) as usize]
    }
}

/// Everything a robot reads besides its own state and inbox.
pub struct TickContext<'a> {
    pub tick: u64,
    pub map: &'a GridMap,
    pub radio: &'a RadioConfig,
    pub control: &'a ControlConfig,
    pub planner: &'a PlannerConfig,
    pub mission: &'a Mission,
    /// Scenario seed; planner randomness is derived from it per robot/tick.
    pub seed: u64,
}

/// A role transition, heal or recruitment event for the decision log.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub tick: u64,
    pub robot: RobotId,
    pub event: &'static str,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct TickOutput {
    pub outbox: Vec<Envelope>,
    pub velocity: Vec3,
    pub decisions: Vec<Decision>,
}

/// Root-only bookkeeping.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RootDuty {
    pub children: BTreeMap<ChainId, Option<RobotId>>,
    pub(crate) child_heard: BTreeMap<ChainId, u64>,
    pub(crate) mismatch_since: BTreeMap<ChainId, u64>,
    pub(crate) election: Option<ElectRound>,
    pub(crate) election_attempt: u32,
    pub(crate) next_round: u64,
    /// Elected but not yet heard workers, with their confirmation deadline.
    pub(crate) awaiting: BTreeMap<ChainId, (RobotId, u64)>,
    pub(crate) vacant_since: BTreeMap<ChainId, u64>,
    pub(crate) queue: BTreeMap<ChainId, crate::msg::RecruitRequest>,
    pub(crate) served: BTreeSet<(RobotId, u32)>,
    pub(crate) summons: BTreeMap<ChainId, PendingSummon>,
    pub(crate) summon_serial: u32,
    /// Robot -> tick it timed out; cleared by a later availability heartbeat.
    pub(crate) blacklist: BTreeMap<RobotId, u64>,
    /// Newest request sequence seen per requester.
    pub(crate) latest: BTreeMap<RobotId, u32>,
    pub(crate) inserted: BTreeMap<ChainId, u32>,
    pub parked: u64,
    pub(crate) parked_keys: BTreeSet<(RobotId, u32)>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PendingSummon {
    pub robot: RobotId,
    pub serial: u32,
    pub issued: u64,
    pub deadline: u64,
    /// Latest tick for the robot's acceptance to arrive.
    pub accept_by: u64,
    pub request: crate::msg::RecruitRequest,
}

/// Worker-election round published by the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectRound {
    pub round: u64,
    pub start: u64,
    pub timeout: u64,
    pub chains: Vec<ChainId>,
}

/// Root-election progress, tracked identically by every robot.
#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct RootElection {
    pub round: u64,
    pub start: u64,
    pub bid_round: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub id: RobotId,
    pub kind: RobotKind,
    pub position: Position,
    /// Last command.
    pub velocity: Vec3,
    pub role: Role,
    pub chain: Option<ChainId>,
    pub depth: u32,
    pub parent: Option<RobotId>,
    pub child: Option<RobotId>,
    /// Chain ids by depth around this robot (k = 2 on each side).
    pub window: Vec<RobotId>,
    pub window_center: u8,
    pub plan_version: u64,
    /// Ticks since a chain link went silent; zero when all links are heard.
    pub heal_timer: u64,
    pub store: Stigmergy,
    pub neighbors: NeighborTable<StatusMsg>,
    /// Lost its parent: pulling its fragment back along the path.
    pub retracting: bool,
    pub at_target: bool,
    pub root_duty: Option<RootDuty>,
    pub(crate) root_id: Option<RobotId>,
    pub(crate) root_pos: Option<Position>,
    pub(crate) root_election: RootElection,
    pub(crate) parent_heard: u64,
    pub(crate) child_heard: u64,
    pub(crate) headless: bool,
    pub(crate) mismatch_parent: Option<u64>,
    pub(crate) mismatch_child: Option<u64>,
    pub(crate) follower: PathFollower,
    pub(crate) plan_cache: Option<(u64, RobotId, PathTuple)>,
    pub(crate) planned: BTreeSet<ChainId>,
    pub(crate) summon: Option<crate::msg::Summon>,
    pub(crate) summon_handled: BTreeMap<ChainId, u32>,
    pub(crate) pending_join: Option<crate::msg::JoinNotice>,
    pub(crate) pending_relink: Option<crate::msg::Relink>,
    pub(crate) bid_round: Option<u64>,
    pub(crate) decided_round: Option<u64>,
    pub(crate) free_announced: Option<(bool, Position, u64)>,
    pub(crate) stalled: bool,
    pub(crate) stall_seq: u32,
    /// Depth when the current stall episode began.
    pub(crate) stall_depth: u32,
    pub(crate) stuck: u32,
    pub(crate) detour_until: u64,
    pub(crate) detours: u32,
    pub(crate) edge_bad_since: Option<u64>,
    pub(crate) last_request: Option<u64>,
    pub(crate) done_published: bool,
    pub(crate) parked_requests: u64,
}

impl RobotState {
    pub fn new(id: RobotId, kind: RobotKind, position: Position, mtu: usize) -> Self {
        let position = if kind == RobotKind::Ground { position.with_z(0.0) } else { position };
        Self {
            id,
            kind,
            position,
            velocity: Vec3::ZERO,
            role: Role::Free,
            chain: None,
            depth: 0,
            parent: None,
            child: None,
            window: vec![id],
            window_center: 0,
            plan_version: 0,
            heal_timer: 0,
            store: Stigmergy::with_limits(id, mtu, 10),
            neighbors: NeighborTable::default(),
            retracting: false,
            at_target: false,
            root_duty: None,
            root_id: None,
            root_pos: None,
            root_election: RootElection::default(),
            parent_heard: 0,
            child_heard: 0,
            headless: false,
            mismatch_parent: None,
            mismatch_child: None,
            follower: PathFollower::default(),
            plan_cache: None,
            planned: BTreeSet::new(),
            summon: None,
            summon_handled: BTreeMap::new(),
            pending_join: None,
            pending_relink: None,
            bid_round: None,
            decided_round: None,
            free_announced: None,
            stalled: false,
            stall_seq: 0,
            stall_depth: 0,
            stuck: 0,
            detour_until: 0,
            detours: 0,
            edge_bad_since: None,
            last_request: None,
            done_published: false,
            parked_requests: 0,
        }
    }

    pub fn is_member(&self) -> bool {
        self.chain.is_some() && self.root_duty.is_none()
    }

    pub fn is_root(&self) -> bool {
        self.root_duty.is_some()
    }

    /// Role implied by the chain pointers.
    pub fn derived_role(&self) -> Role {
        if self.role == Role::Failed {
            Role::Failed
        } else if self.is_root() {
            Role::Root
        } else if self.chain.is_some() {
            if self.child.is_some() {
                Role::Networker
            } else {
                Role::Worker
            }
        } else {
            Role::Free
        }
    }

    /// Requests parked because no free robot was available (root only).
    pub fn parked_requests(&self) -> u64 {
        self.root_duty.as_ref().map(|r| r.parked).unwrap_or(self.parked_requests)
    }

    pub fn status(&self) -> StatusMsg {
        StatusMsg {
            id: self.id,
            kind: self.kind,
            position: self.position,
            velocity: self.velocity,
            role: self.role,
            chain: self.chain,
            depth: self.depth,
            parent: self.parent,
            child: self.child,
            root_children: self
                .root_duty
                .as_ref()
                .map(|r| r.children.iter().map(|(c, v)| (*c, *v)).collect())
                .unwrap_or_default(),
            plan_version: self.plan_version,
            window: self.window.clone(),
            window_center: self.window_center,
            retracting: self.retracting,
            at_target: self.at_target,
        }
    }
}

/// Winner of a gradient election: minimum (bid, id).
pub fn gradient_elect(bids: &[(RobotId, f64)]) -> Option<RobotId> {
    bids.iter()
        .filter(|(_, b)| b.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(id, _)| *id)
}

/// Role-gating factor of the preferred velocity: 1 while the child is
/// within safe range (or absent), 0 otherwise.
pub fn f_c(d_child: Option<f64>, d_s: f64) -> f64 {
    match d_child {
        Some(d) if d > d_s => 0.0,
        _ => 1.0,
    }
}
