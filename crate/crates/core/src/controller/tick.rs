//! The per-robot transition function and the role-specific protocol steps.

use super::motion::{preferred_velocity, rvo_select_constrained, u_path, link_admissible, LinkSense, RvoNeighbor};
use super::{gradient_elect, Decision, ElectRound, PendingSummon, RobotState, RootDuty, RootMode, TickContext, TickOutput};
use crate::allocation::{auction, CostTable};
use crate::geom::{Position, Vec3};
use crate::msg::{
    ChainId, Envelope, InsertEdge, JoinNotice, KindRequirement, Payload, RecruitRequest, Relink, RobotId, RobotKind,
    Role, StatusMsg, Summon,
};
use crate::planner::{check_reachable, plan, required_robots, Path, PathTuple, PlanMode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RootInfo {
    id: RobotId,
    position: Position,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FreeInfo {
    kind: RobotKind,
    position: Position,
    available: bool,
    /// Tick of the announcement; stale entries belong to silent robots.
    tick: u64,
}

fn enc<T: Serialize>(v: &T) -> Vec<u8> {
    bincode::serialize(v).expect("stigmergy values serialize")
}

fn dec<T: DeserializeOwned>(b: &[u8]) -> Option<T> {
    bincode::deserialize(b).ok()
}

fn put(st: &mut RobotState, out: &mut TickOutput, now: u64, key: &str, value: Vec<u8>) {
    if let Err(e) = st.store.put(key, value) {
        log(out, now, st.id, "store_error", e.to_string());
    }
}

fn log(out: &mut TickOutput, tick: u64, robot: RobotId, event: &'static str, detail: String) {
    out.decisions.push(Decision { tick, robot, event, detail });
}

fn peek<T: DeserializeOwned>(st: &RobotState, key: &str) -> Option<T> {
    st.store.peek(key).and_then(|e| dec(&e.value))
}

/// Decorrelated planner seed per (scenario seed, robot, tick).
const PLAN_ATTEMPTS: usize = 4;

fn plan_seed(seed: u64, robot: RobotId, tick: u64) -> u64 {
    let mut z = seed ^ (u64::from(robot.0) << 32) ^ tick.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn status_of(st: &RobotState, id: RobotId) -> Option<&StatusMsg> {
    st.neighbors.get(id).map(|n| &n.info)
}

fn heard_now(st: &RobotState, id: RobotId, now: u64) -> bool {
    st.neighbors.get(id).map(|n| n.last_heard == now).unwrap_or(false)
}

fn position_of(st: &RobotState, id: RobotId) -> Option<Position> {
    if Some(id) == st.root_id && st.neighbors.get(id).is_none() {
        return st.root_pos;
    }
    st.neighbors.get(id).map(|n| n.position)
}

/// The chain's shared plan, decoded once per store update.
fn chain_plan(st: &mut RobotState, chain: ChainId) -> Option<(u64, PathTuple)> {
    let key = format!("path/{chain}");
    let entry = st.store.peek(&key)?;
    let stamp = (entry.timestamp, entry.writer);
    if let Some((ts, w, t)) = &st.plan_cache {
        if (*ts, *w) == stamp {
            return Some((*ts, t.clone()));
        }
    }
    let tuple = PathTuple::decode(&entry.value).ok()?;
    st.plan_cache = Some((stamp.0, stamp.1, tuple.clone()));
    Some((stamp.0, tuple))
}

fn own_path(kind: RobotKind, tuple: &PathTuple) -> &Path {
    match kind {
        RobotKind::Ground => &tuple.ground,
        RobotKind::Flying => &tuple.path,
    }
}

pub fn robot_tick(st: &mut RobotState, inbox: &[Envelope], ctx: &TickContext) -> TickOutput {
    let mut out = TickOutput::default();
    if st.role == Role::Failed {
        return out;
    }
    let now = ctx.tick;
    let forget = ctx.control.ticks(ctx.control.forget_time);
    let mut recruits = Vec::new();
    let mut joins = Vec::new();
    let mut relinks = Vec::new();
    for env in inbox {
        match &env.payload {
            Payload::Status(s) => {
                if s.id != st.id {
                    st.neighbors.observe(s.id, st.position, s.position, now, ctx.radio, s.clone());
                }
            }
            Payload::Stig(m) => st.store.on_message(m),
            Payload::Recruit(r) if r.to == st.id => recruits.push(r.clone()),
            Payload::Join(j) if j.robot != st.id => joins.push(j.clone()),
            Payload::Relink(r) if r.parent == st.id => relinks.push(r.clone()),
            _ => {}
        }
    }
    st.neighbors.evict_older_than(now, forget);
    let before = st.role;

    learn_root(st, ctx, &mut out);
    commit_own(st, ctx, &mut out);
    accept_links(st, ctx, &mut out, &joins, &relinks);

    let velocity = if st.is_root() {
        root_step(st, ctx, &mut out, recruits);
        Vec3::ZERO
    } else if st.chain.is_some() {
        relay(st, &mut out, now, recruits);
        member_step(st, ctx, &mut out)
    } else {
        free_step(st, ctx, &mut out)
    };

    let velocity = if st.kind == RobotKind::Ground { velocity.with_z(0.0) } else { velocity };
    // what the obstacles let through, so the broadcast prediction is exact
    let dt = ctx.control.dt;
    let velocity = (ctx.map.clamp_step(st.position, velocity, dt) - st.position) * (1.0 / dt);
    st.velocity = velocity;
    st.role = st.derived_role();
    if st.role != before {
        log(&mut out, now, st.id, "role", format!("{}->{}", before.as_str(), st.role.as_str()));
    }
    update_window(st);
    let period = ctx.control.ticks(ctx.control.status_period);
    if now % period == 0 {
        let mut s = st.status();
        s.position = st.position + velocity * ctx.control.dt;
        out.outbox.push(Envelope { sender: st.id, tick: now, payload: Payload::Status(s) });
    }
    for m in st.store.drain_outbox() {
        out.outbox.push(Envelope { sender: st.id, tick: now, payload: Payload::Stig(m) });
    }
    out.velocity = velocity;
    out
}

fn become_root(st: &mut RobotState, ctx: &TickContext, out: &mut TickOutput) {
    let now = ctx.tick;
    let mut duty = RootDuty::default();
    for c in ctx.mission.chains() {
        duty.children.insert(c, None);
    }
    st.root_duty = Some(duty);
    st.root_id = Some(st.id);
    st.root_pos = Some(st.position);
    st.chain = None;
    st.parent = None;
    st.child = None;
    st.depth = 0;
    st.summon = None;
    let info = RootInfo { id: st.id, position: st.position };
    put(st, out, now, "root", enc(&info));
    put(st, out, now, &format!("free/{}", st.id), enc(&FreeInfo { kind: st.kind, position: st.position, available: false, tick: now }));
    log(out, now, st.id, "root_elected", format!("{:.6},{:.6},{:.6}", st.position.x, st.position.y, st.position.z));
}

fn learn_root(st: &mut RobotState, ctx: &TickContext, out: &mut TickOutput) {
    if st.is_root() {
        return;
    }
    let now = ctx.tick;
    if let Some(info) = peek::<RootInfo>(st, "root") {
        st.root_id = Some(info.id);
        st.root_pos = Some(info.position);
    }
    match ctx.mission.root {
        RootMode::Fixed { id } => {
            st.root_id = Some(RobotId(id));
            if st.id == RobotId(id) {
                become_root(st, ctx, out);
            }
        }
        RootMode::Elected { anchor } => {
            if st.root_id.is_some() {
                return;
            }
            let anchor = Vec3::new(anchor[0], anchor[1], anchor[2]);
            let bidding = ctx.control.ticks(ctx.control.bidding_time);
            let confirm = ctx.control.ticks(ctx.control.forget_time);
            let re = &st.root_election;
            let (round, start) = (re.round, re.start);
            let timeout = bidding << round.min(6);
            if re.bid_round != Some(round) {
                let bid = st.position.dist(anchor);
                put(st, out, now, &format!("rootbid/{round}/{}", st.id), enc(&bid));
                st.root_election.bid_round = Some(round);
            }
            if now == start + timeout {
                let prefix = format!("rootbid/{round}/");
                let bids: Vec<(RobotId, f64)> = st
                    .store
                    .scan(&prefix)
                    .filter_map(|(k, e)| Some((RobotId(k[prefix.len()..].parse().ok()?), dec::<f64>(&e.value)?)))
                    .collect();
                if gradient_elect(&bids) == Some(st.id) {
                    become_root(st, ctx, out);
                }
            } else if now >= start + timeout + confirm {
                st.root_election.round += 1;
                st.root_election.start = now;
                log(out, now, st.id, "root_election_restart", format!("round {}", round + 1));
            }
        }
    }
}

/// Commits a join or relink this robot announced on the previous tick.
fn commit_own(st: &mut RobotState, ctx: &TickContext, out: &mut TickOutput) {
    let now = ctx.tick;
    if let Some(j) = st.pending_join.take() {
        let serial = st.summon.as_ref().map(|s| s.serial).unwrap_or(0);
        st.summon = None;
        st.summon_handled.insert(j.chain, serial);
        st.chain = Some(j.chain);
        st.parent = Some(j.parent);
        st.child = j.child;
        st.parent_heard = now;
        st.child_heard = now;
        st.headless = false;
        st.retracting = false;
        st.mismatch_parent = None;
        st.mismatch_child = None;
        st.stalled = false;
        st.depth = status_of(st, j.parent).map(|s| s.depth + 1).unwrap_or(1);
        st.follower.reset();
        put(st, out, now, &format!("join/{}", j.chain), enc(&serial));
        announce_free(st, out, now, false, true);
        log(out, now, st.id, "joined", format!("chain {} parent {} child {}", j.chain, j.parent, fmt_opt(j.child)));
    }
    st.pending_relink = None;
}

fn fmt_opt(id: Option<RobotId>) -> String {
    id.map(|i| i.to_string()).unwrap_or_else(|| "-".into())
}

/// Parent/child side of joins and relinks announced by neighbors.
fn accept_links(st: &mut RobotState, ctx: &TickContext, out: &mut TickOutput, joins: &[JoinNotice], relinks: &[Relink]) {
    let now = ctx.tick;
    for j in joins {
        if j.parent == st.id {
            if let Some(duty) = st.root_duty.as_mut() {
                if duty.children.get(&j.chain).copied().flatten() == j.child {
                    duty.children.insert(j.chain, Some(j.robot));
                    duty.child_heard.insert(j.chain, now);
                    duty.mismatch_since.remove(&j.chain);
                    log(out, now, st.id, "child_inserted", format!("chain {} child {}", j.chain, j.robot));
                }
            } else if st.chain == Some(j.chain) && st.child == j.child {
                st.child = Some(j.robot);
                st.child_heard = now;
                st.mismatch_child = None;
                log(out, now, st.id, "child_inserted", format!("chain {} child {}", j.chain, j.robot));
            }
        }
        if j.child == Some(st.id) && st.chain == Some(j.chain) && st.parent == Some(j.parent) {
            st.parent = Some(j.robot);
            st.parent_heard = now;
            st.mismatch_parent = None;
            log(out, now, st.id, "parent_inserted", format!("chain {} parent {}", j.chain, j.robot));
        }
    }
    for r in relinks {
        if let Some(duty) = st.root_duty.as_mut() {
            if duty.children.get(&r.chain) == Some(&None) {
                duty.children.insert(r.chain, Some(r.robot));
                duty.child_heard.insert(r.chain, now);
                duty.vacant_since.remove(&r.chain);
                log(out, now, st.id, "relinked_child", format!("chain {} child {}", r.chain, r.robot));
            }
        } else if st.chain == Some(r.chain) && st.child.is_none() && !st.retracting {
            st.child = Some(r.robot);
            st.child_heard = now;
            st.mismatch_child = None;
            log(out, now, st.id, "relinked_child", format!("chain {} child {}", r.chain, r.robot));
        }
    }
}

fn relay(st: &mut RobotState, out: &mut TickOutput, now: u64, recruits: Vec<RecruitRequest>) {
    let Some(p) = st.parent else { return };
    for mut r in recruits {
        r.to = p;
        out.outbox.push(Envelope { sender: st.id, tick: now, payload: Payload::Recruit(r) });
    }
}

fn update_window(st: &mut RobotState) {
    let mut w = Vec::new();
    if let Some(p) = st.parent {
        if let Some(ps) = status_of(st, p) {
            let c = ps.window_center as usize;
            if c >= 1 && c <= ps.window.len() {
                w.push(ps.window[c - 1]);
            }
        }
        w.push(p);
    }
    let center = w.len();
    w.push(st.id);
    if let Some(ch) = st.child {
        w.push(ch);
        if let Some(cs) = status_of(st, ch) {
            let c = cs.window_center as usize;
            if c + 1 < cs.window.len() {
                w.push(cs.window[c + 1]);
            }
        }
    }
    st.window = w;
    st.window_center = center as u8;
}

/// Ticks between availability heartbeats of a free robot.
const FREE_HEARTBEAT: u64 = 10;

fn announce_free(st: &mut RobotState, out: &mut TickOutput, now: u64, available: bool, force: bool) {
    let moved = st
        .free_announced
        .map(|(a, p, t)| a != available || p.dist(st.position) > 1.0 || (available && now >= t + FREE_HEARTBEAT))
        .unwrap_or(true);
    if moved || force {
        st.free_announced = Some((available, st.position, now));
        let info = FreeInfo { kind: st.kind, position: st.position, available, tick: now };
        put(st, out, now, &format!("free/{}", st.id), enc(&info));
    }
}

/// Velocity command: RVO over the fixed grid restricted to the
/// connectivity-admissible set of the given links.
fn select(st: &mut RobotState, ctx: &TickContext, u_pref: Vec3, links: &[LinkSense], hold: bool) -> Vec3 {
    if hold {
        st.stuck = 0;
        return Vec3::ZERO;
    }
    let c = ctx.control;
    let d_s = ctx.radio.safe;
    let mut u_pref = if st.kind == RobotKind::Ground { u_pref.with_z(0.0) } else { u_pref };
    // blocked by a robot rather than by a link: sidestep for a while
    let want = u_pref.norm() > 0.2 * c.v_max && link_admissible(u_pref.clamp_norm(0.2 * c.v_max), links, d_s, c.dt);
    if want && st.velocity.norm() < 0.05 * c.v_max {
        st.stuck += 1;
    } else {
        st.stuck = 0;
    }
    if st.stuck >= 5 {
        st.stuck = 0;
        st.detour_until = ctx.tick + ctx.control.ticks(1.0);
        st.detours += 1;
    }
    if ctx.tick < st.detour_until {
        let angle = if st.detours % 2 == 1 { DETOUR_ANGLE } else { -DETOUR_ANGLE };
        let (sn, cs) = angle.sin_cos();
        u_pref = Vec3::new(u_pref.x * cs - u_pref.y * sn, u_pref.x * sn + u_pref.y * cs, u_pref.z);
    }
    let near: Vec<RvoNeighbor> = st
        .neighbors
        .iter()
        .filter(|(_, n)| n.distance <= 2.0 * c.r_col)
        .map(|(_, n)| RvoNeighbor { offset: n.position - st.position, velocity: n.info.velocity })
        .collect();
    let pos = st.position;
    let ground = st.kind == RobotKind::Ground;
    rvo_select_constrained(u_pref, &near, st.velocity, c.v_max, c.alpha, c.r_col, |u| {
        // judge the step the obstacles will actually allow
        let u = if ground { u.with_z(0.0) } else { u };
        let u = (ctx.map.clamp_step(pos, u, c.dt) - pos) * (1.0 / c.dt);
        link_admissible(u, links, d_s, c.dt)
    })
}

const DETOUR_ANGLE: f64 = 70.0 * std::f64::consts::PI / 180.0;

fn lookahead(ctx: &TickContext) -> f64 {
    (0.25 * ctx.radio.safe).max(2.0 * ctx.control.v_max * ctx.control.dt)
}

fn root_step(st: &mut RobotState, ctx: &TickContext, out: &mut TickOutput, recruits: Vec<RecruitRequest>) {
    let now = ctx.tick;
    let declare = ctx.control.ticks(ctx.control.link_failure_time);
    let forget = ctx.control.ticks(ctx.control.forget_time);
    let one_s = ctx.control.ticks(1.0);
    let d_s = ctx.radio.safe;
    let mut duty = st.root_duty.take().expect("root step on root");
    let chains: Vec<ChainId> = duty.children.keys().copied().collect();

    // child liveness and consistency
    for &c in &chains {
        let Some(ch) = duty.children[&c] else {
            duty.vacant_since.entry(c).or_insert(now);
            continue;
        };
        duty.vacant_since.remove(&c);
        if heard_now(st, ch, now) {
            duty.child_heard.insert(c, now);
            let s = status_of(st, ch).expect("heard");
            if s.chain == Some(c) && s.parent == Some(st.id) {
                duty.mismatch_since.remove(&c);
                duty.awaiting.remove(&c);
            } else if duty.awaiting.get(&c).map(|a| a.0) != Some(ch) {
                let since = *duty.mismatch_since.entry(c).or_insert(now);
                if now - since > one_s {
                    duty.children.insert(c, None);
                    duty.mismatch_since.remove(&c);
                    log(out, now, st.id, "child_mismatch", format!("chain {c} child {ch}"));
                    continue;
                }
            }
        }
        let heard = duty.child_heard.get(&c).copied().unwrap_or(now);
        if now.saturating_sub(heard) > declare {
            duty.children.insert(c, None);
            duty.awaiting.remove(&c);
            duty.vacant_since.insert(c, now);
            log(out, now, st.id, "child_failed", format!("chain {c} child {ch}"));
        }
        if let Some(&(w, deadline)) = duty.awaiting.get(&c) {
            if now > deadline {
                duty.awaiting.remove(&c);
                duty.children.insert(c, None);
                duty.election_attempt += 1;
                log(out, now, st.id, "worker_unconfirmed", format!("chain {c} robot {w}"));
            }
        }
    }

    // worker election rounds
    let bidding = ctx.control.ticks(ctx.control.bidding_time);
    if let Some(e) = duty.election.clone() {
        if now >= e.start + e.timeout {
            let assignment = elect_assignment(st, &e);
            let mut missing = false;
            for (i, c) in e.chains.iter().enumerate() {
                match assignment.get(&i) {
                    Some(&w) if duty.children[c].is_none() => {
                        duty.children.insert(*c, Some(w));
                        duty.child_heard.insert(*c, now);
                        duty.awaiting.insert(*c, (w, now + 2 * forget));
                        log(out, now, st.id, "worker_elected", format!("chain {c} robot {w} round {}", e.round));
                    }
                    Some(_) => {}
                    None => missing = true,
                }
            }
            if missing {
                duty.election_attempt += 1;
            } else {
                duty.election_attempt = 0;
            }
            duty.election = None;
            duty.next_round = now + 1;
        }
    } else if now >= duty.next_round {
        let long_vacancy = 4 * declare;
        let needs: Vec<ChainId> = chains
            .iter()
            .copied()
            .filter(|c| duty.children[c].is_none() && !duty.awaiting.contains_key(c))
            .filter(|c| {
                let never_staffed = !duty.inserted.contains_key(c);
                let v = duty.vacant_since.get(c).copied().unwrap_or(now);
                never_staffed || now.saturating_sub(v) > long_vacancy
            })
            .collect();
        if !needs.is_empty() {
            let round = peek::<ElectRound>(st, "elect").map(|e| e.round + 1).unwrap_or(1);
            let e = ElectRound { round, start: now, timeout: bidding << duty.election_attempt.min(4), chains: needs };
            put(st, out, now, "elect", enc(&e));
            log(out, now, st.id, "election_round", format!("round {} chains {:?}", e.round, e.chains));
            duty.election = Some(e);
        }
    }
    for c in &chains {
        if duty.children[c].is_some() {
            duty.inserted.entry(*c).or_insert(0);
        }
    }

    // recruitment queue
    for r in recruits {
        let latest = duty.latest.entry(r.requester).or_insert(0);
        if r.seq < *latest {
            continue;
        }
        *latest = r.seq;
        if !duty.served.contains(&(r.requester, r.seq)) {
            duty.queue.insert(r.chain, r);
        }
    }
    for &c in &chains {
        let Some(p) = duty.summons.get(&c).cloned() else { continue };
        let acked = peek::<u32>(st, &format!("join/{c}")) == Some(p.serial);
        let declined = peek::<FreeInfo>(st, &format!("free/{}", p.robot)).map(|f| f.available && f.tick > p.issued).unwrap_or(false);
        if declined && !acked {
            duty.summons.remove(&c);
            if duty.queue.get(&c).map(|q| (q.requester, q.seq)) == Some((p.request.requester, p.request.seq)) {
                duty.queue.remove(&c);
            }
            log(out, now, st.id, "summon_declined", format!("chain {c} robot {}", p.robot));
        } else if acked {
            duty.summons.remove(&c);
            duty.served.insert((p.request.requester, p.request.seq));
            *duty.inserted.entry(c).or_insert(0) += 1;
            if duty.queue.get(&c).map(|q| (q.requester, q.seq)) == Some((p.request.requester, p.request.seq)) {
                duty.queue.remove(&c);
            }
            log(out, now, st.id, "summon_done", format!("chain {c} robot {}", p.robot));
        } else if now > p.deadline
            || (now > p.accept_by && peek::<u32>(st, &format!("accept/{c}")).map(|a| a < p.serial).unwrap_or(true))
        {
            duty.summons.remove(&c);
            duty.blacklist.insert(p.robot, now);
            duty.queue.entry(c).or_insert(p.request.clone());
            log(out, now, st.id, "summon_timeout", format!("chain {c} robot {}", p.robot));
        }
    }
    if ctx.control.wp_prediction {
        for &c in &chains {
            let Some(ch) = duty.children[&c] else { continue };
            if duty.summons.contains_key(&c) || duty.queue.contains_key(&c) || duty.awaiting.contains_key(&c) {
                continue;
            }
            let Some((_, tuple)) = chain_plan(st, c) else { continue };
            if !tuple.exists {
                continue;
            }
            let need = required_robots(tuple.path.length(), d_s) as u32;
            let members = 1 + duty.inserted.get(&c).copied().unwrap_or(0);
            let far = position_of(st, ch).map(|p| p.dist(st.position) >= 0.5 * d_s).unwrap_or(false);
            if members < need && far {
                let r = RecruitRequest {
                    chain: c,
                    requester: st.id,
                    seq: members,
                    edge: InsertEdge::Root,
                    kind: KindRequirement::Any,
                    to: st.id,
                };
                log(out, now, st.id, "predicted_recruit", format!("chain {c} members {members} of {need}"));
                duty.queue.insert(c, r);
            }
        }
    }
    let queued: Vec<(ChainId, RecruitRequest)> = duty.queue.iter().map(|(c, r)| (*c, r.clone())).collect();
    for (c, r) in queued {
        if duty.summons.contains_key(&c) || duty.awaiting.contains_key(&c) {
            continue;
        }
        let key = (r.requester, r.seq);
        if duty.served.contains(&key) || duty.latest.get(&r.requester).map(|l| r.seq < *l).unwrap_or(false) {
            duty.queue.remove(&c);
            continue;
        }
        let (parent, child) = match r.edge {
            InsertEdge::Root => {
                let Some(ch) = duty.children[&c] else { continue };
                let threshold = if r.requester == st.id { 0.5 * d_s } else { 0.9 * d_s };
                match position_of(st, ch) {
                    Some(p) if p.dist(st.position) >= threshold => {}
                    _ => continue,
                }
                (st.id, Some(ch))
            }
            InsertEdge::Between { parent, child } => (parent, child),
        };
        let busy: Vec<RobotId> = duty.summons.values().map(|p| p.robot).chain(duty.awaiting.values().map(|a| a.0)).collect();
        let mut cands: Vec<(bool, f64, RobotId)> = st
            .store
            .scan("free/")
            .filter_map(|(k, e)| Some((RobotId(k["free/".len()..].parse().ok()?), dec::<FreeInfo>(&e.value)?)))
            .filter(|(id, f)| {
                f.available
                    && now <= f.tick + forget
                    && r.kind.admits(f.kind)
                    && *id != st.id
                    && duty.blacklist.get(id).map(|t| f.tick > *t).unwrap_or(true)
                    && !busy.contains(id)
                    && status_of(st, *id).map(|s| s.chain.is_none() && s.role == Role::Free).unwrap_or(true)
            })
            .map(|(id, f)| (f.kind != RobotKind::Ground, f.position.dist(st.position), id))
            .collect();
        cands.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
        let Some(&(_, _, robot)) = cands.first() else {
            if duty.parked_keys.insert(key) {
                duty.parked += 1;
                log(out, now, st.id, "request_parked", format!("chain {c} requester {}", r.requester));
            }
            continue;
        };
        duty.summon_serial += 1;
        let s = Summon { serial: duty.summon_serial, robot, chain: c, parent, child, requester: r.requester, seq: r.seq };
        let path_len = chain_plan(st, c).map(|(_, t)| t.path.length()).unwrap_or(0.0);
        let deadline = now + ctx.control.ticks(20.0 + 2.0 * path_len / ctx.control.v_max);
        let accept_by = now + 2 * forget;
        duty.summons.insert(c, PendingSummon { robot, serial: s.serial, issued: now, deadline, accept_by, request: r.clone() });
        log(out, now, st.id, "summon", format!("chain {c} robot {robot} parent {parent} child {}", fmt_opt(child)));
        put(st, out, now, &format!("summon/{c}"), enc(&s));
    }
    st.root_duty = Some(duty);
}

/// Auction over the bids of a worker-election round, as every robot
/// computes it from its own replica.
fn elect_assignment(st: &RobotState, e: &ElectRound) -> BTreeMap<usize, RobotId> {
    let prefix = format!("bid/{}/", e.round);
    let costs: CostTable = st
        .store
        .scan(&prefix)
        .filter_map(|(k, v)| Some((RobotId(k[prefix.len()..].parse().ok()?), dec::<Vec<f64>>(&v.value)?)))
        .filter(|(_, row)| row.len() == e.chains.len())
        .collect();
    auction(&costs, e.chains.len()).unwrap_or_default()
}

fn free_step(st: &mut RobotState, ctx: &TickContext, out: &mut TickOutput) -> Vec3 {
    let now = ctx.tick;
    let d_s = ctx.radio.safe;
    let v_max = ctx.control.v_max;
    let dt = ctx.control.dt;
    announce_free(st, out, now, st.summon.is_none() && st.pending_join.is_none(), false);

    // worker election
    if let (Some(e), Some(root)) = (peek::<ElectRound>(st, "elect"), st.root_id) {
        if st.summon.is_none() && st.bid_round != Some(e.round) && now < e.start + e.timeout {
            let costs: Vec<f64> = e.chains.iter().map(|c| st.position.dist(ctx.mission.target_of(*c))).collect();
            put(st, out, now, &format!("bid/{}/{}", e.round, st.id), enc(&costs));
            st.bid_round = Some(e.round);
        }
        if now >= e.start + e.timeout && st.bid_round == Some(e.round) && st.decided_round != Some(e.round) {
            st.decided_round = Some(e.round);
            let assignment = elect_assignment(st, &e);
            if let Some((&i, _)) = assignment.iter().find(|(_, r)| **r == st.id) {
                let c = e.chains[i];
                st.chain = Some(c);
                st.parent = Some(root);
                st.child = None;
                st.depth = 1;
                st.parent_heard = now;
                st.headless = false;
                st.retracting = false;
                st.follower.reset();
                announce_free(st, out, now, false, true);
                log(out, now, st.id, "worker_elected", format!("chain {c} round {}", e.round));
                return Vec3::ZERO;
            }
        }
    }

    // summons addressed to this robot
    if st.summon.is_none() && st.pending_join.is_none() {
        let found: Vec<Summon> = st
            .store
            .scan("summon/")
            .filter_map(|(_, e)| dec::<Summon>(&e.value))
            .filter(|s| s.robot == st.id)
            .collect();
        for s in found {
            if st.summon_handled.get(&s.chain).map(|h| *h < s.serial).unwrap_or(true) {
                log(out, now, st.id, "summoned", format!("chain {} parent {} child {}", s.chain, s.parent, fmt_opt(s.child)));
                put(st, out, now, &format!("accept/{}", s.chain), enc(&s.serial));
                st.summon = Some(s);
                st.edge_bad_since = None;
                st.follower.reset();
                announce_free(st, out, now, false, true);
                break;
            }
        }
    }
    if let Some(s) = st.summon.clone() {
        // superseded by a newer summon for the same chain
        let current = peek::<Summon>(st, &format!("summon/{}", s.chain));
        if current.map(|c| c.serial != s.serial).unwrap_or(false) {
            st.summon_handled.insert(s.chain, s.serial);
            st.summon = None;
            log(out, now, st.id, "summon_dropped", format!("chain {}", s.chain));
            return Vec3::ZERO;
        }
        return joining_step(st, ctx, out, &s);
    }

    // loiter near the root
    let u_pref = match st.root_pos {
        Some(r) if st.position.dist(r) > 2.0 * d_s => {
            let d = r - st.position;
            d * (v_max.min(d.norm() / dt) / d.norm())
        }
        _ => Vec3::ZERO,
    };
    select(st, ctx, u_pref, &[], false)
}

fn joining_step(st: &mut RobotState, ctx: &TickContext, out: &mut TickOutput, s: &Summon) -> Vec3 {
    let now = ctx.tick;
    let d_s = ctx.radio.safe;
    let v_max = ctx.control.v_max;
    let dt = ctx.control.dt;
    if st.pending_join.is_some() {
        return Vec3::ZERO;
    }
    let p_pos = position_of(st, s.parent);
    let c_pos = s.child.map(|c| position_of(st, c));
    let known = p_pos.is_some() && c_pos.map(|c| c.is_some()).unwrap_or(true);
    let toward = |goal: Position, from: Position| {
        let d = goal - from;
        let n = d.norm();
        if n < 1e-9 {
            Vec3::ZERO
        } else {
            d * (v_max.min(n / dt) / n)
        }
    };
    if known {
        let p = p_pos.expect("known");
        let c = c_pos.flatten();
        let close = st.position.dist(p) <= 0.9 * d_s && c.map(|c| st.position.dist(c) <= 0.9 * d_s).unwrap_or(true);
        let edge_ok = match status_of(st, s.parent) {
            Some(ps) if ps.role == Role::Root => ps.root_children.iter().any(|(ch, v)| *ch == s.chain && *v == s.child),
            Some(ps) => ps.chain == Some(s.chain) && ps.child == s.child,
            None => false,
        };
        if edge_ok {
            st.edge_bad_since = None;
        } else if now - *st.edge_bad_since.get_or_insert(now) > ctx.control.ticks(ctx.control.forget_time) {
            // the edge no longer exists; become available again
            st.edge_bad_since = None;
            st.summon_handled.insert(s.chain, s.serial);
            st.summon = None;
            announce_free(st, out, now, true, true);
            log(out, now, st.id, "summon_abandoned", format!("chain {}", s.chain));
            return Vec3::ZERO;
        }
        if close && edge_ok {
            let notice = JoinNotice { robot: st.id, chain: s.chain, parent: s.parent, child: s.child };
            out.outbox.push(Envelope { sender: st.id, tick: now, payload: Payload::Join(notice.clone()) });
            st.pending_join = Some(notice);
            return Vec3::ZERO;
        }
        let goal = match c {
            Some(c) => p.lerp(c, 0.5),
            None => p,
        };
        // far away or no line of sight: stay on the chain's path
        if st.position.dist(goal) > 2.0 * d_s || !ctx.map.segment_free(st.position, goal) {
            if let Some(u) = follow_chain_path(st, ctx, s.chain, goal) {
                return select(st, ctx, u, &[], false);
            }
        }
        let u = toward(goal, st.position);
        return select(st, ctx, u, &[], false);
    }
    // endpoints out of earshot: advance along the path until they are heard
    let goal = ctx.mission.target_of(s.chain);
    let u = match follow_chain_path(st, ctx, s.chain, goal) {
        Some(u) => u,
        None => toward(st.root_pos.unwrap_or(st.position), st.position),
    };
    select(st, ctx, u, &[], false)
}

/// Forward along the chain's path, stopping at the arc length closest to
/// `goal`.
fn follow_chain_path(st: &mut RobotState, ctx: &TickContext, chain: ChainId, goal: Position) -> Option<Vec3> {
    let (stamp, tuple) = chain_plan(st, chain)?;
    let path = own_path(st.kind, &tuple).clone();
    if path.waypoints.len() < 2 {
        return None;
    }
    let la = lookahead(ctx);
    let s = st.follower.track((stamp, st.kind == RobotKind::Ground), &path, st.position, 2.0 * la);
    let (goal_s, _) = path.project(goal, 0.0, path.length())?;
    if s >= goal_s {
        return None;
    }
    Some(u_path(&path, s, st.position, true, la.min(goal_s - s), ctx.control.v_max, ctx.control.dt))
}

fn member_step(st: &mut RobotState, ctx: &TickContext, out: &mut TickOutput) -> Vec3 {
    let now = ctx.tick;
    let d_s = ctx.radio.safe;
    let declare = ctx.control.ticks(ctx.control.link_failure_time);
    let forget = ctx.control.ticks(ctx.control.forget_time);
    let one_s = ctx.control.ticks(1.0);
    let chain = st.chain.expect("member");

    // fault check
    if let Some(p) = st.parent {
        if heard_now(st, p, now) {
            st.parent_heard = now;
        }
        if now.saturating_sub(st.parent_heard) > declare {
            log(out, now, st.id, "parent_failed", format!("chain {chain} parent {p}"));
            st.parent = None;
            st.headless = true;
        }
    }
    if let Some(c) = st.child {
        if heard_now(st, c, now) {
            st.child_heard = now;
        }
        if now.saturating_sub(st.child_heard) > declare {
            log(out, now, st.id, "child_failed", format!("chain {chain} child {c}"));
            st.child = None;
        }
    }
    let silent_p = st.parent.map(|_| now.saturating_sub(st.parent_heard)).unwrap_or(0);
    let silent_c = st.child.map(|_| now.saturating_sub(st.child_heard)).unwrap_or(0);
    st.heal_timer = if silent_p > 1 || silent_c > 1 { silent_p.max(silent_c) } else { 0 };

    // pointer consistency with the neighbors' own view
    if let Some(p) = st.parent {
        if let Some(ps) = status_of(st, p).filter(|_| heard_now(st, p, now)).cloned() {
            let agrees = if ps.role == Role::Root {
                ps.root_children.iter().any(|(c, v)| *c == chain && *v == Some(st.id))
            } else {
                ps.chain == Some(chain) && ps.child == Some(st.id)
            };
            if agrees {
                st.mismatch_parent = None;
            } else {
                let since = *st.mismatch_parent.get_or_insert(now);
                if now - since > one_s {
                    st.mismatch_parent = None;
                    if ps.role == Role::Root && st.child.is_none() {
                        log(out, now, st.id, "left_chain", format!("chain {chain}"));
                        leave_chain(st);
                        return Vec3::ZERO;
                    }
                    log(out, now, st.id, "parent_mismatch", format!("chain {chain} parent {p}"));
                    st.parent = None;
                    st.headless = true;
                }
            }
        }
    }
    if let Some(c) = st.child {
        if let Some(cs) = status_of(st, c).filter(|_| heard_now(st, c, now)).cloned() {
            if cs.chain == Some(chain) && cs.parent == Some(st.id) {
                st.mismatch_child = None;
            } else {
                let since = *st.mismatch_child.get_or_insert(now);
                if now - since > one_s {
                    st.mismatch_child = None;
                    log(out, now, st.id, "child_mismatch", format!("chain {chain} child {c}"));
                    st.child = None;
                }
            }
        }
    }

    // depth and retract propagation
    let parent_status = st.parent.and_then(|p| status_of(st, p).cloned());
    if let Some(ps) = &parent_status {
        st.depth = ps.depth + 1;
    }
    st.retracting = st.headless
        || parent_status.as_ref().map(|s| s.retracting).unwrap_or(false)
        || silent_p > forget;

    // a headless fragment head re-attaches to any childless member of the
    // other fragment (or the root) within safe range
    if st.headless && st.parent.is_none() {
        let me = st.id;
        let window = st.window.clone();
        let mut best: Option<(f64, RobotId)> = None;
        for (id, n) in st.neighbors.iter() {
            if id == me || window.contains(&id) || n.distance > 0.98 * d_s {
                continue;
            }
            let s = &n.info;
            let ok = if s.role == Role::Root {
                s.root_children.iter().any(|(c, v)| *c == chain && v.is_none())
            } else {
                s.chain == Some(chain) && s.child.is_none() && !s.retracting && s.role != Role::Free
            };
            if ok && best.map(|b| (n.distance, id) < b).unwrap_or(true) {
                best = Some((n.distance, id));
            }
        }
        if let Some((_, x)) = best {
            let r = Relink { robot: me, chain, parent: x };
            out.outbox.push(Envelope { sender: me, tick: now, payload: Payload::Relink(r.clone()) });
            st.pending_relink = Some(r);
            st.parent = Some(x);
            st.parent_heard = now;
            st.headless = false;
            st.mismatch_parent = None;
            log(out, now, me, "relink", format!("chain {chain} parent {x}"));
        }
    }

    // late arrivals never saw the plan being written: ask for it
    let plan_key = format!("path/{chain}");
    if st.store.peek(&plan_key).is_none() {
        st.store.get(&plan_key, now);
    }
    let is_worker = st.child.is_none() && !st.retracting;
    let target = ctx.mission.target_of(chain);
    if is_worker && chain_plan(st, chain).is_none() && !st.planned.contains(&chain) {
        worker_plan(st, ctx, out, chain, target);
    }
    let tol = ctx.control.tolerance(ctx.radio);
    st.at_target = is_worker && st.position.dist(target) <= tol;
    if st.at_target && !st.done_published {
        st.done_published = true;
        put(st, out, now, &format!("done/{chain}"), enc(&now));
        log(out, now, st.id, "chain_complete", format!("chain {chain}"));
    }

    // motion
    let p_pos = st.parent.and_then(|p| position_of(st, p));
    let c_pos = st.child.and_then(|c| position_of(st, c));
    let hold = (st.parent.is_some() && p_pos.is_none()) || (st.child.is_some() && c_pos.is_none());
    let mut links = Vec::new();
    for q in [p_pos, c_pos].into_iter().flatten() {
        links.push(LinkSense { offset: st.position - q });
    }
    let d_p = p_pos.map(|q| q.dist(st.position));
    let d_c = c_pos.map(|q| q.dist(st.position));
    let Some((stamp, tuple)) = chain_plan(st, chain) else {
        return select(st, ctx, Vec3::ZERO, &links, hold);
    };
    let path = own_path(st.kind, &tuple).clone();
    if !tuple.exists || path.waypoints.is_empty() {
        return select(st, ctx, Vec3::ZERO, &links, hold);
    }
    let la = lookahead(ctx);
    let (v_max, dt) = (ctx.control.v_max, ctx.control.dt);
    let s = st.follower.track((stamp, st.kind == RobotKind::Ground), &path, st.position, 2.0 * la + v_max * dt);
    let fwd = u_path(&path, s, st.position, true, la, v_max, dt);
    let mut bwd = u_path(&path, s, st.position, false, la, v_max, dt);
    // a parent off this robot's path (ground parent under a flight path):
    // close the gap directly
    let other_kind = st.parent.and_then(|p| status_of(st, p)).map(|ps| ps.kind != st.kind).unwrap_or(false);
    if let (Some(p), true) = (p_pos, other_kind) {
        let to_p = p - st.position;
        if to_p.norm() > 1e-9 && bwd.dot(to_p) < 0.5 * bwd.norm() * to_p.norm() {
            bwd = to_p * (v_max / to_p.norm());
        }
    }
    let u_pref = if st.retracting {
        bwd
    } else if st.at_target {
        Vec3::ZERO
    } else {
        preferred_velocity(d_p, d_c, fwd, bwd, d_s)
    };
    if is_worker && !st.at_target && !hold {
        recruit(st, ctx, out, chain, &tuple, &path, s, d_p);
    } else {
        st.stalled = false;
    }
    select(st, ctx, u_pref, &links, hold)
}

fn leave_chain(st: &mut RobotState) {
    st.chain = None;
    st.parent = None;
    st.child = None;
    st.depth = 0;
    st.headless = false;
    st.retracting = false;
    st.at_target = false;
    st.stalled = false;
    st.free_announced = None;
}

fn worker_plan(st: &mut RobotState, ctx: &TickContext, out: &mut TickOutput, chain: ChainId, target: Position) {
    let now = ctx.tick;
    let Some(start) = st.root_pos else { return };
    st.planned.insert(chain);
    let reach = |map: &crate::world::GridMap, m: PlanMode| check_reachable(map, start, target, m).unwrap_or(false);
    let ground = reach(ctx.map, PlanMode::Ground2D);
    let full = !ground && ctx.map.layers() > 1 && reach(ctx.map, PlanMode::Full3D);
    let mode = if ground {
        Some(PlanMode::Ground2D)
    } else if full {
        Some(PlanMode::Full3D)
    } else {
        None
    };
    // keep clearance from obstacles where the inflated map still connects
    let inflated = ctx.map.inflated(ctx.control.r_col);
    let map = match mode {
        Some(m) if reach(&inflated, m) => &inflated,
        _ => ctx.map,
    };
    let version = st.plan_version + 1;
    let idx = chain.0 / ctx.mission.links;
    let mut rng = ChaCha8Rng::seed_from_u64(plan_seed(ctx.seed, st.id, now));
    // reachable but sampled unluckily: retry with the advanced stream
    let found = mode.and_then(|m| (0..PLAN_ATTEMPTS).find_map(|_| plan(map, start, target, m, ctx.planner, &mut rng)));
    let tuple = match found {
        Some(p) => PathTuple::new(p, map, version, idx).quantized(),
        None => PathTuple::none(mode.unwrap_or(PlanMode::Ground2D), version, idx),
    };
    st.plan_version = version;
    log(
        out,
        now,
        st.id,
        "plan",
        format!(
            "chain {chain} ground_reachable {ground} exists {} length {:.6} ground_length {:.6}",
            tuple.exists,
            tuple.path.length(),
            tuple.ground.length()
        ),
    );
    put(st, out, now, &format!("path/{chain}"), tuple.encode());
}

#[allow(clippy::too_many_arguments)]
fn recruit(
    st: &mut RobotState,
    ctx: &TickContext,
    out: &mut TickOutput,
    chain: ChainId,
    tuple: &PathTuple,
    path: &Path,
    s: f64,
    d_p: Option<f64>,
) {
    let now = ctx.tick;
    let d_s = ctx.radio.safe;
    let (Some(parent), Some(d_p)) = (st.parent, d_p) else {
        st.stalled = false;
        return;
    };
    let ground_short = tuple.ground.waypoints.len() < tuple.path.waypoints.len();
    let g_len = tuple.ground.length();
    let eps = (2.0 * ctx.control.v_max * ctx.control.dt).min(0.1 * d_s);
    let at_ground_end = st.kind == RobotKind::Ground && ground_short && s >= path.length() - 0.3 * d_s;
    let request = if at_ground_end {
        Some((InsertEdge::Between { parent: st.id, child: None }, KindRequirement::Flying))
    } else if d_p >= d_s - eps {
        if st.kind == RobotKind::Flying && ground_short && s >= g_len - 0.5 * d_s {
            Some((InsertEdge::Between { parent, child: Some(st.id) }, KindRequirement::Flying))
        } else {
            Some((InsertEdge::Root, KindRequirement::Any))
        }
    } else {
        None
    };
    let Some((edge, kind)) = request else {
        st.stalled = false;
        return;
    };
    // an upstream insertion answered the previous episode
    if st.stalled && st.depth != st.stall_depth {
        st.stalled = false;
    }
    if !st.stalled {
        st.stalled = true;
        st.stall_depth = st.depth;
        st.stall_seq += 1;
        st.last_request = None;
        log(out, now, st.id, "recruit", format!("chain {chain} seq {} edge {:?} kind {:?}", st.stall_seq, edge, kind));
    }
    let due = st.last_request.map(|t| now - t >= ctx.control.ticks(1.0)).unwrap_or(true);
    if due {
        st.last_request = Some(now);
        let r = RecruitRequest { chain, requester: st.id, seq: st.stall_seq, edge, kind, to: parent };
        out.outbox.push(Envelope { sender: st.id, tick: now, payload: Payload::Recruit(r) });
    }
}
