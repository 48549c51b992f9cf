//! Deterministic simulation loop: delivery, robot ticks, kinematics,
//! failure injection, invariant audit and metrics.

mod output;

pub use output::{
    decisions_csv, metrics_csv_header, metrics_csv_row, parse_trajectory, render_svg, scene_from_trajectory, trajectory_header,
    SvgRobot, SvgScene, TrajectoryError, TrajectoryRow,
};

use crate::controller::{robot_tick, ControlConfig, Decision, Mission, RobotState, TickContext};
use crate::geom::{Position, Vec3};
use crate::msg::{ChainId, Envelope, RobotId, RobotKind, Role};
use crate::planner::{PathTuple, PlannerConfig};
use crate::radio::{deliver, Outbox, RadioConfig};
use crate::world::GridMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Radio(#[from] crate::radio::RadioConfigError),
    #[error(transparent)]
    Control(#[from] crate::controller::ControlConfigError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", deny_unknown_fields)]
pub enum FailurePlan {
    None,
    Scripted { events: Vec<ScriptedFailure> },
    /// Each alive non-root robot fails with probability `p` per tick, at
    /// most `floor(cap * N)` robots in total.
    Random { p: f64, cap: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedFailure {
    pub at: FailureTrigger,
    pub robots: FailureTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "when", deny_unknown_fields)]
pub enum FailureTrigger {
    Tick { tick: u64 },
    /// `delay` seconds after every chain first completes.
    AfterCompletion { delay: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "select", deny_unknown_fields)]
pub enum FailureTarget {
    Ids { ids: Vec<u32> },
    /// `count` consecutive members of `chain` starting at `from_depth`.
    ChainDepths { chain: u32, from_depth: u32, count: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spawn {
    pub kind: RobotKind,
    pub position: Position,
}

/// Fully resolved run description.
#[derive(Debug, Clone)]
pub struct SimSpec {
    pub name: String,
    pub map: GridMap,
    pub radio: RadioConfig,
    pub control: ControlConfig,
    pub planner: PlannerConfig,
    pub mission: Mission,
    pub roster: Vec<Spawn>,
    pub failures: FailurePlan,
    pub seed: u64,
    pub max_ticks: u64,
    pub strict_audit: bool,
    pub mtu: usize,
    pub record_trajectory: bool,
}

impl SimSpec {
    pub fn validate(&self) -> Result<(), EngineError> {
        self.radio.validate()?;
        self.control.validate(&self.radio)?;
        if self.roster.is_empty() {
            return Err(EngineError::Invalid("roster is empty".into()));
        }
        if self.mission.targets.is_empty() {
            return Err(EngineError::Invalid("no targets".into()));
        }
        if self.mission.links == 0 {
            return Err(EngineError::Invalid("links (C_n) must be at least 1".into()));
        }
        for (i, s) in self.roster.iter().enumerate() {
            let p = if s.kind == RobotKind::Ground { s.position.with_z(0.0) } else { s.position };
            if !p.is_finite() || !self.map.is_free(p) {
                return Err(EngineError::Invalid(format!("robot {i} spawns outside free space at {p:?}")));
            }
        }
        for (i, t) in self.mission.targets.iter().enumerate() {
            if !self.map.is_free(*t) {
                return Err(EngineError::Invalid(format!("target {i} lies outside free space at {t:?}")));
            }
        }
        if let crate::controller::RootMode::Fixed { id } = self.mission.root {
            if id as usize >= self.roster.len() {
                return Err(EngineError::Invalid(format!("root id {id} not in roster")));
            }
        }
        match &self.failures {
            FailurePlan::Random { p, cap } if !(0.0..=1.0).contains(p) || !(0.0..=1.0).contains(cap) => {
                return Err(EngineError::Invalid("random failures need 0 <= p <= 1 and 0 <= cap <= 1".into()));
            }
            _ => {}
        }
        if self.max_ticks == 0 {
            return Err(EngineError::Invalid("tick budget must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    /// A parent-child distance above break-away.
    LinkBreak { parent: RobotId, child: RobotId, distance: f64 },
    Cycle { chain: ChainId },
    GroundAltitude { robot: RobotId, z: f64 },
    InObstacle { robot: RobotId },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub tick: u64,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HealEvent {
    pub tick: u64,
    pub robots: Vec<RobotId>,
    pub recovered: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metrics {
    /// First completion tick of each chain.
    pub completion: BTreeMap<ChainId, u64>,
    /// Tick at which every chain was complete for the first time.
    pub all_complete: Option<u64>,
    pub path_length: BTreeMap<ChainId, f64>,
    pub heal_events: Vec<HealEvent>,
    pub max_link: Vec<f64>,
    pub messages: BTreeMap<&'static str, u64>,
    pub violations: usize,
    pub failed: Vec<RobotId>,
    pub parked_requests: u64,
    pub ticks: u64,
}

impl Metrics {
    pub fn traversal_time(&self, chain: ChainId, v_max: f64) -> Option<f64> {
        self.path_length.get(&chain).map(|l| l / v_max)
    }

    /// Completion time over the longest chain's traversal time.
    pub fn time_factor(&self, dt: f64, v_max: f64) -> Option<f64> {
        let done = self.all_complete? as f64 * dt;
        let longest = self.path_length.values().copied().fold(0.0, f64::max);
        if longest <= 0.0 {
            return None;
        }
        Some(done / (longest / v_max))
    }

    pub fn recovery_ticks(&self) -> Vec<u64> {
        self.heal_events.iter().filter_map(|h| h.recovered.map(|r| r - h.tick)).collect()
    }

    pub fn messages_total(&self) -> u64 {
        self.messages.values().sum()
    }

    pub fn max_link_distance(&self) -> f64 {
        self.max_link.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Complete,
    Incomplete,
    Aborted,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub metrics: Metrics,
    /// Diagnostic snapshot when strict audit aborted the run.
    pub abort: Option<String>,
}

/// Link tolerance of the completion predicate.
pub const COMPLETION_SLACK: f64 = 0.05;

pub struct Sim {
    spec: SimSpec,
    tick: u64,
    robots: Vec<RobotState>,
    pending: Vec<(RobotId, Vec<Envelope>)>,
    delivery_rng: ChaCha8Rng,
    failure_rng: ChaCha8Rng,
    metrics: Metrics,
    trajectory: String,
    trails: Vec<Vec<Position>>,
    decisions: Vec<Decision>,
    violations: Vec<Violation>,
    established: BTreeSet<(RobotId, RobotId)>,
    scripted_fired: Vec<bool>,
    random_failed: usize,
    was_complete: bool,
    abort: Option<String>,
}

fn substream(seed: u64, purpose: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(purpose);
    r
}

/// Moves `pos` by `u * dt`, cancelling each axis component whose motion
/// would enter a blocked cell.
pub fn integrate(map: &GridMap, pos: Position, u: Vec3, dt: f64) -> Position {
    map.clamp_step(pos, u, dt)
}

impl Sim {
    pub fn new(spec: SimSpec) -> Result<Self, EngineError> {
        spec.validate()?;
        let robots: Vec<RobotState> = spec
            .roster
            .iter()
            .enumerate()
            .map(|(i, s)| RobotState::new(RobotId(i as u32), s.kind, s.position, spec.mtu))
            .collect();
        let scripted = match &spec.failures {
            FailurePlan::Scripted { events } => events.len(),
            _ => 0,
        };
        let mut sim = Self {
            tick: 0,
            pending: Vec::new(),
            delivery_rng: substream(spec.seed, 1),
            failure_rng: substream(spec.seed, 2),
            metrics: Metrics::default(),
            trajectory: String::new(),
            trails: Vec::new(),
            decisions: Vec::new(),
            violations: Vec::new(),
            established: BTreeSet::new(),
            scripted_fired: vec![false; scripted],
            random_failed: 0,
            was_complete: false,
            abort: None,
            robots,
            spec,
        };
        if sim.spec.record_trajectory {
            sim.trajectory.push_str(trajectory_header());
            sim.trajectory.push('\n');
            sim.log_trajectory();
        }
        Ok(sim)
    }

    pub fn spec(&self) -> &SimSpec {
        &self.spec
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn robots(&self) -> &[RobotState] {
        &self.robots
    }

    pub fn robot(&self, id: RobotId) -> &RobotState {
        &self.robots[id.0 as usize]
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    pub fn decisions(&self) -> &[Decision] {
        &self.decisions
    }

    pub fn violations(&self) -> &[Violation] {
        &self.violations
    }

    pub fn trajectory_csv(&self) -> &str {
        &self.trajectory
    }

    pub fn is_alive(&self, id: RobotId) -> bool {
        self.robots[id.0 as usize].role != Role::Failed
    }

    pub fn alive_count(&self) -> usize {
        self.robots.iter().filter(|r| r.role != Role::Failed).count()
    }

    /// Marks a robot failed: it stops moving, sending and receiving.
    pub fn fail_robot(&mut self, id: RobotId) {
        let r = &mut self.robots[id.0 as usize];
        if r.role == Role::Failed {
            return;
        }
        r.role = Role::Failed;
        r.velocity = Vec3::ZERO;
        self.metrics.failed.push(id);
        self.pending.retain(|(s, _)| *s != id);
        self.decisions.push(Decision { tick: self.tick, robot: id, event: "failed", detail: String::new() });
    }

    /// Test hook: moves a robot without going through the controller.
    pub fn teleport(&mut self, id: RobotId, pos: Position) {
        self.robots[id.0 as usize].position = pos;
    }

    fn root_id(&self) -> Option<RobotId> {
        self.robots.iter().find(|r| r.is_root() && r.role != Role::Failed).map(|r| r.id)
    }

    /// Parent-child pairs both ends agree on, among alive robots.
    pub fn confirmed_edges(&self) -> Vec<(ChainId, RobotId, RobotId)> {
        let mut out = Vec::new();
        for r in &self.robots {
            if r.role == Role::Failed {
                continue;
            }
            if let Some(duty) = &r.root_duty {
                for (c, ch) in &duty.children {
                    if let Some(ch) = ch {
                        let k = &self.robots[ch.0 as usize];
                        if k.role != Role::Failed && k.chain == Some(*c) && k.parent == Some(r.id) {
                            out.push((*c, r.id, *ch));
                        }
                    }
                }
                continue;
            }
            let (Some(c), Some(ch)) = (r.chain, r.child) else { continue };
            let k = &self.robots[ch.0 as usize];
            if k.role != Role::Failed && k.chain == Some(c) && k.parent == Some(r.id) && !k.is_root() {
                out.push((c, r.id, ch));
            }
        }
        out
    }

    /// Members of `chain` reachable from the root over confirmed edges, in
    /// depth order (root excluded).
    pub fn chain_members(&self, chain: ChainId) -> Vec<RobotId> {
        let edges: BTreeMap<RobotId, RobotId> =
            self.confirmed_edges().into_iter().filter(|e| e.0 == chain).map(|e| (e.1, e.2)).collect();
        let mut out = Vec::new();
        let Some(mut cur) = self.root_id() else { return out };
        while let Some(&next) = edges.get(&cur) {
            if out.contains(&next) {
                break;
            }
            out.push(next);
            cur = next;
        }
        out
    }

    pub fn is_chain_complete(&self, chain: ChainId) -> bool {
        let Some(root) = self.root_id() else { return false };
        let members = self.chain_members(chain);
        let Some(&last) = members.last() else { return false };
        let tol = self.spec.control.tolerance(&self.spec.radio);
        let worker = &self.robots[last.0 as usize];
        if worker.child.is_some() || worker.position.dist(self.spec.mission.target_of(chain)) > tol {
            return false;
        }
        let limit = self.spec.radio.safe + COMPLETION_SLACK;
        let mut prev = self.robots[root.0 as usize].position;
        for m in &members {
            let r = &self.robots[m.0 as usize];
            if r.retracting || r.position.dist(prev) > limit {
                return false;
            }
            prev = r.position;
        }
        true
    }

    pub fn all_complete(&self) -> bool {
        self.spec.mission.chains().all(|c| self.is_chain_complete(c))
    }

    /// Invariant check over the omniscient state.
    pub fn audit(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        let t = self.tick;
        let edges = self.confirmed_edges();
        for (_, p, c) in &edges {
            if !self.established.contains(&(*p, *c)) {
                continue;
            }
            let d = self.robots[p.0 as usize].position.dist(self.robots[c.0 as usize].position);
            if d > self.spec.radio.break_away {
                v.push(Violation { tick: t, kind: ViolationKind::LinkBreak { parent: *p, child: *c, distance: d } });
            }
        }
        // with mutual pointers every node has at most one parent and child;
        // a node not reachable from a fragment head sits on a cycle
        let mut by_chain: BTreeMap<ChainId, BTreeMap<RobotId, RobotId>> = BTreeMap::new();
        for (c, p, ch) in &edges {
            by_chain.entry(*c).or_default().insert(*p, *ch);
        }
        for (c, next) in &by_chain {
            let children: BTreeSet<RobotId> = next.values().copied().collect();
            let mut seen = BTreeSet::new();
            for head in next.keys().filter(|k| !children.contains(k)) {
                let mut cur = *head;
                seen.insert(cur);
                while let Some(&n) = next.get(&cur) {
                    if !seen.insert(n) {
                        break;
                    }
                    cur = n;
                }
            }
            if next.keys().any(|k| !seen.contains(k)) {
                v.push(Violation { tick: t, kind: ViolationKind::Cycle { chain: *c } });
            }
        }
        for r in &self.robots {
            if r.kind == RobotKind::Ground && r.position.z != 0.0 {
                v.push(Violation { tick: t, kind: ViolationKind::GroundAltitude { robot: r.id, z: r.position.z } });
            }
            if !self.spec.map.is_free(r.position) {
                v.push(Violation { tick: t, kind: ViolationKind::InObstacle { robot: r.id } });
            }
        }
        v
    }

    fn apply_failures(&mut self) {
        let mut batch = Vec::new();
        if let FailurePlan::Scripted { events } = &self.spec.failures {
            let dt = self.spec.control.dt;
            for (i, e) in events.iter().enumerate() {
                if self.scripted_fired[i] {
                    continue;
                }
                let due = match e.at {
                    FailureTrigger::Tick { tick } => self.tick >= tick,
                    FailureTrigger::AfterCompletion { delay } => self
                        .metrics
                        .all_complete
                        .map(|t| self.tick >= t + (delay / dt).round() as u64)
                        .unwrap_or(false),
                };
                if !due {
                    continue;
                }
                self.scripted_fired[i] = true;
                match &e.robots {
                    FailureTarget::Ids { ids } => batch.extend(ids.iter().map(|i| RobotId(*i))),
                    FailureTarget::ChainDepths { chain, from_depth, count } => {
                        let members = self.chain_members(ChainId(*chain));
                        let lo = from_depth.saturating_sub(1) as usize;
                        let hi = (lo + *count as usize).min(members.len());
                        if lo < hi {
                            batch.extend_from_slice(&members[lo..hi]);
                        }
                    }
                }
            }
        }
        if let FailurePlan::Random { p, cap } = self.spec.failures {
            let limit = (cap * self.robots.len() as f64 + 1e-9).floor() as usize;
            for i in 0..self.robots.len() {
                let u: f64 = self.failure_rng.gen();
                let r = &self.robots[i];
                if r.role == Role::Failed || r.is_root() {
                    continue;
                }
                if u < p && self.random_failed < limit {
                    self.random_failed += 1;
                    batch.push(r.id);
                }
            }
        }
        batch.retain(|id| (id.0 as usize) < self.robots.len() && self.is_alive(*id));
        batch.sort();
        batch.dedup();
        if batch.is_empty() {
            return;
        }
        for id in &batch {
            self.fail_robot(*id);
        }
        if self.was_complete {
            self.metrics.heal_events.push(HealEvent { tick: self.tick, robots: batch, recovered: None });
        }
    }

    /// One synchronous round.
    pub fn step(&mut self) {
        self.tick += 1;
        let now = self.tick;
        self.apply_failures();

        let outboxes: Vec<Outbox> = std::mem::take(&mut self.pending)
            .into_iter()
            .filter(|(s, _)| self.is_alive(*s))
            .map(|(s, envs)| Outbox { sender: s, position: self.robots[s.0 as usize].position, envelopes: envs })
            .collect();
        let mut all: Vec<Outbox> = outboxes;
        for r in &self.robots {
            if r.role != Role::Failed && !all.iter().any(|o| o.sender == r.id) {
                all.push(Outbox { sender: r.id, position: r.position, envelopes: Vec::new() });
            }
        }
        let mut inboxes = deliver(&all, &self.spec.radio, &mut self.delivery_rng);

        let ctx = TickContext {
            tick: now,
            map: &self.spec.map,
            radio: &self.spec.radio,
            control: &self.spec.control,
            planner: &self.spec.planner,
            mission: &self.spec.mission,
            seed: self.spec.seed,
        };
        let mut velocities = vec![Vec3::ZERO; self.robots.len()];
        for (i, r) in self.robots.iter_mut().enumerate() {
            if r.role == Role::Failed {
                continue;
            }
            let inbox = inboxes.remove(&r.id).unwrap_or_default();
            let out = robot_tick(r, &inbox, &ctx);
            for e in &out.outbox {
                *self.metrics.messages.entry(e.payload.kind_name()).or_insert(0) += 1;
            }
            velocities[i] = out.velocity;
            self.decisions.extend(out.decisions);
            if !out.outbox.is_empty() {
                self.pending.push((r.id, out.outbox));
            }
        }
        for (i, r) in self.robots.iter_mut().enumerate() {
            if r.role == Role::Failed {
                continue;
            }
            r.position = integrate(&self.spec.map, r.position, velocities[i], self.spec.control.dt);
            if r.kind == RobotKind::Ground {
                r.position.z = 0.0;
            }
        }

        // links count once they have been inside safe range
        let edges = self.confirmed_edges();
        let mut max_link: f64 = 0.0;
        for (_, p, c) in &edges {
            let d = self.robots[p.0 as usize].position.dist(self.robots[c.0 as usize].position);
            max_link = max_link.max(d);
            if d <= self.spec.radio.safe {
                self.established.insert((*p, *c));
            }
        }
        self.metrics.max_link.push(max_link);
        let found = self.audit();
        if !found.is_empty() && self.spec.strict_audit && self.abort.is_none() {
            self.abort = Some(self.snapshot(&found));
        }
        self.metrics.violations += found.len();
        self.violations.extend(found);

        self.update_completion();
        self.metrics.ticks = now;
        if self.spec.record_trajectory {
            self.log_trajectory();
        }
    }

    fn update_completion(&mut self) {
        let now = self.tick;
        let chains: Vec<ChainId> = self.spec.mission.chains().collect();
        for c in &chains {
            if !self.metrics.path_length.contains_key(c) {
                if let Some(l) = self.plan_length(*c) {
                    self.metrics.path_length.insert(*c, l);
                }
            }
            if !self.metrics.completion.contains_key(c) && self.is_chain_complete(*c) {
                self.metrics.completion.insert(*c, now);
            }
        }
        let complete = chains.iter().all(|c| self.is_chain_complete(*c));
        if complete {
            if self.metrics.all_complete.is_none() {
                self.metrics.all_complete = Some(now);
            }
            for h in self.metrics.heal_events.iter_mut().filter(|h| h.recovered.is_none()) {
                h.recovered = Some(now);
            }
        }
        self.was_complete = complete;
        self.metrics.parked_requests = self.robots.iter().map(|r| r.parked_requests()).sum();
    }

    fn plan_length(&self, chain: ChainId) -> Option<f64> {
        let key = format!("path/{chain}");
        self.robots
            .iter()
            .find_map(|r| r.store.peek(&key))
            .and_then(|e| PathTuple::decode(&e.value).ok())
            .filter(|t| t.exists)
            .map(|t| t.path.length())
    }

    fn pending_scripted(&self) -> bool {
        self.scripted_fired.iter().any(|f| !f)
    }

    /// Runs until every chain is complete with no scheduled failures left,
    /// the tick budget is exhausted, or strict audit aborts.
    pub fn run(&mut self) -> RunOutcome {
        self.run_with(|_| {})
    }

    /// [`Sim::run`] calling `hook` after every step.
    pub fn run_with(&mut self, mut hook: impl FnMut(&Sim)) -> RunOutcome {
        loop {
            if let Some(status) = self.status() {
                return RunOutcome { status, metrics: self.metrics.clone(), abort: self.abort.clone() };
            }
            self.step();
            hook(self);
        }
    }

    /// Terminal state reached so far, if any: an audit abort, completion
    /// with no scripted failure pending and no heal open, or the tick budget.
    pub fn status(&self) -> Option<RunStatus> {
        let healing = self.metrics.heal_events.iter().any(|h| h.recovered.is_none());
        if self.abort.is_some() {
            Some(RunStatus::Aborted)
        } else if self.was_complete && !self.pending_scripted() && !healing {
            Some(RunStatus::Complete)
        } else if self.tick >= self.spec.max_ticks {
            Some(RunStatus::Incomplete)
        } else {
            None
        }
    }

    pub fn abort_report(&self) -> Option<&str> {
        self.abort.as_deref()
    }

    fn snapshot(&self, found: &[Violation]) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "audit violation at tick {}", self.tick);
        for v in found {
            let _ = writeln!(s, "  {:?}", v.kind);
        }
        for r in &self.robots {
            let _ = writeln!(
                s,
                "  robot {} {} {} pos=({:.6},{:.6},{:.6}) chain={:?} parent={:?} child={:?}",
                r.id,
                r.kind.as_str(),
                r.role.as_str(),
                r.position.x,
                r.position.y,
                r.position.z,
                r.chain.map(|c| c.0),
                r.parent.map(|p| p.0),
                r.child.map(|c| c.0)
            );
        }
        s
    }

    fn log_trajectory(&mut self) {
        self.trails.resize(self.robots.len(), Vec::new());
        for (r, trail) in self.robots.iter().zip(&mut self.trails) {
            trail.push(r.position);
            let _ = writeln!(
                self.trajectory,
                "{},{},{},{:.6},{:.6},{:.6},{},{},{},{},{:.6}",
                self.tick,
                r.id,
                r.kind.as_str(),
                r.position.x,
                r.position.y,
                r.position.z,
                r.role.as_str(),
                r.chain.map(|c| c.to_string()).unwrap_or_default(),
                r.parent.map(|c| c.to_string()).unwrap_or_default(),
                r.child.map(|c| c.to_string()).unwrap_or_default(),
                r.velocity.norm()
            );
        }
    }

    /// Inputs for the final-state SVG.
    pub fn svg_scene(&self) -> SvgScene {
        let robots = self
            .robots
            .iter()
            .map(|r| SvgRobot { id: r.id, kind: r.kind, role: r.role, position: r.position })
            .collect();
        let edges = self.confirmed_edges().into_iter().map(|(_, p, c)| (p, c)).collect();
        SvgScene { robots, edges, targets: self.spec.mission.targets.clone(), safe: self.spec.radio.safe, trails: self.trails.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_slides_along_wall() {
        let mut m = GridMap::open(4, 4, 1, 1.0).unwrap();
        m.set_cell(crate::world::Cell::new(2, 1, 0), false).unwrap();
        let p = integrate(&m, Vec3::flat(1.9, 1.5), Vec3::flat(1.0, 1.0), 0.2);
        assert!((p.x - 1.9).abs() < 1e-12);
        assert!((p.y - 1.7).abs() < 1e-12);
        assert!(m.is_free(p));
    }

    #[test]
    fn zero_command_keeps_position() {
        let m = GridMap::open(4, 4, 1, 1.0).unwrap();
        assert_eq!(integrate(&m, Vec3::flat(1.0, 1.0), Vec3::ZERO, 0.1), Vec3::flat(1.0, 1.0));
    }
}
