//! Identifiers, roles and the message payloads robots broadcast, plus the
//! versioned length-prefixed wire encoding.

use crate::geom::{Position, Vec3};
use crate::stigmergy::StigMsg;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct RobotId(pub u32);

impl fmt::Display for RobotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One connectivity chain: `target * links + link`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChainId(pub u32);

impl fmt::Display for ChainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobotKind {
    Ground,
    Flying,
}

impl RobotKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RobotKind::Ground => "ground",
            RobotKind::Flying => "flying",
        }
    }
}

/// Locomotion constraint carried by a recruitment request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum KindRequirement {
    Any,
    Flying,
}

impl KindRequirement {
    pub fn admits(self, kind: RobotKind) -> bool {
        matches!(self, KindRequirement::Any) || kind == RobotKind::Flying
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    Root,
    Worker,
    Networker,
    Free,
    Failed,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Root => "root",
            Role::Worker => "worker",
            Role::Networker => "networker",
            Role::Free => "free",
            Role::Failed => "failed",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        Some(match s {
            "root" => Role::Root,
            "worker" => Role::Worker,
            "networker" => Role::Networker,
            "free" => Role::Free,
            "failed" => Role::Failed,
            _ => return None,
        })
    }
}

/// Periodic broadcast: position, role and chain linkage of the sender.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusMsg {
    pub id: RobotId,
    pub kind: RobotKind,
    /// Position after applying `velocity` for one step.
    pub position: Position,
    pub velocity: Vec3,
    pub role: Role,
    pub chain: Option<ChainId>,
    pub depth: u32,
    pub parent: Option<RobotId>,
    pub child: Option<RobotId>,
    /// Root only: current first member of every chain it anchors.
    pub root_children: Vec<(ChainId, Option<RobotId>)>,
    pub plan_version: u64,
    /// Consecutive chain members by depth around the sender.
    pub window: Vec<RobotId>,
    /// Index of the sender inside `window`.
    pub window_center: u8,
    /// Sender lost its parent and is pulling its fragment back.
    pub retracting: bool,
    /// Sender is a worker standing within tolerance of its target.
    pub at_target: bool,
}

/// Where a recruited robot is inserted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InsertEdge {
    /// Between the root and its current child in the chain.
    Root,
    /// Between `parent` and `child`; `child = None` appends below `parent`.
    Between { parent: RobotId, child: Option<RobotId> },
}

/// Chain extension request, relayed parent-ward until it reaches the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecruitRequest {
    pub chain: ChainId,
    pub requester: RobotId,
    /// Stall episode counter of the requester; with `requester` it
    /// identifies the request so it is served at most once.
    pub seq: u32,
    pub edge: InsertEdge,
    pub kind: KindRequirement,
    /// Next hop.
    pub to: RobotId,
}

/// Root's answer, published in the shared store: `robot` must join
/// between `parent` and `child`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summon {
    /// Root-wide counter, echoed back in the join acknowledgement.
    pub serial: u32,
    pub robot: RobotId,
    pub chain: ChainId,
    pub parent: RobotId,
    pub child: Option<RobotId>,
    pub requester: RobotId,
    pub seq: u32,
}

/// Announced by a summoned robot once it sits within safe range of both
/// ends of its edge; all three commit on the next tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinNotice {
    pub robot: RobotId,
    pub chain: ChainId,
    pub parent: RobotId,
    pub child: Option<RobotId>,
}

/// A headless fragment head attaching itself below `parent`, which must
/// currently have no child in `chain`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relink {
    pub robot: RobotId,
    pub chain: ChainId,
    pub parent: RobotId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    Ping,
    Status(StatusMsg),
    Stig(StigMsg),
    Recruit(RecruitRequest),
    Join(JoinNotice),
    Relink(Relink),
}

impl Payload {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Payload::Ping => "ping",
            Payload::Status(_) => "status",
            Payload::Stig(_) => "stigmergy",
            Payload::Recruit(_) => "recruit",
            Payload::Join(_) => "join",
            Payload::Relink(_) => "relink",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub sender: RobotId,
    pub tick: u64,
    pub payload: Payload,
}

pub const WIRE_VERSION: u8 = 1;
pub const DEFAULT_MTU: usize = 512;
const HEADER_LEN: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("encoded envelope is {size} bytes, above the {mtu}-byte MTU")]
    TooLarge { size: usize, mtu: usize },
    #[error("unsupported wire version {0}")]
    Version(u8),
    #[error("truncated frame: header says {declared} bytes, {available} available")]
    Truncated { declared: usize, available: usize },
    #[error("malformed payload: {0}")]
    Malformed(String),
}

/// Frame layout: `[version: u8][len: u32 LE][body: len bytes]`.
pub fn encode(env: &Envelope) -> Vec<u8> {
    let body = bincode::serialize(env).expect("envelope serialization is infallible");
    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.push(WIRE_VERSION);
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend_from_slice(&body);
    out
}

pub fn encode_checked(env: &Envelope, mtu: usize) -> Result<Vec<u8>, CodecError> {
    let bytes = encode(env);
    if bytes.len() > mtu {
        return Err(CodecError::TooLarge { size: bytes.len(), mtu });
    }
    Ok(bytes)
}

/// Decodes one frame, returning the envelope and the bytes consumed.
pub fn decode(bytes: &[u8]) -> Result<(Envelope, usize), CodecError> {
    if bytes.len() < HEADER_LEN {
        return Err(CodecError::Truncated { declared: HEADER_LEN, available: bytes.len() });
    }
    if bytes[0] != WIRE_VERSION {
        return Err(CodecError::Version(bytes[0]));
    }
    let len = u32::from_le_bytes([bytes[1], bytes[2], bytes[3], bytes[4]]) as usize;
    let available = bytes.len() - HEADER_LEN;
    if available < len {
        return Err(CodecError::Truncated { declared: len, available });
    }
    let env = bincode::deserialize(&bytes[HEADER_LEN..HEADER_LEN + len])
        .map_err(|e| CodecError::Malformed(e.to_string()))?;
    Ok((env, HEADER_LEN + len))
}

/// Human-readable dump used by the debug flag.
pub fn debug_line(env: &Envelope) -> String {
    format!("tick={} from={} {}: {:?}", env.tick, env.sender, env.payload.kind_name(), env.payload)
}
