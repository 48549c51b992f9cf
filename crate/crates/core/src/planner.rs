//! Reachability checks, RRT* planning with a grid A* oracle, ground
//! projection of 3D paths and chain-size estimation.

use crate::geom::{Position, Vec3};
use crate::world::{Cell, GridMap};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMode {
    /// Ground plane only (layer 0, z = 0).
    Ground2D,
    Full3D,
}

#[derive(Debug, Error, PartialEq)]
pub enum PlannerError {
    #[error("start position {0:?} is not in free space")]
    StartBlocked(Position),
    #[error("path tuple encoding: {0}")]
    Encoding(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub waypoints: Vec<Position>,
    pub mode: PlanMode,
}

impl Path {
    pub fn empty(mode: PlanMode) -> Self {
        Self { waypoints: Vec::new(), mode }
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| w[0].dist(w[1])).sum()
    }

    /// Cumulative arc length at each waypoint.
    pub fn arc_lengths(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.waypoints.len());
        for (i, w) in self.waypoints.iter().enumerate() {
            if i > 0 {
                acc += self.waypoints[i - 1].dist(*w);
            }
            out.push(acc);
        }
        out
    }

    /// Point at arc length `s`, clamped to the path ends.
    pub fn point_at(&self, s: f64) -> Option<Position> {
        let first = *self.waypoints.first()?;
        if s <= 0.0 {
            return Some(first);
        }
        let mut acc = 0.0;
        for w in self.waypoints.windows(2) {
            let seg = w[0].dist(w[1]);
            if acc + seg >= s {
                let t = if seg > 0.0 { (s - acc) / seg } else { 0.0 };
                return Some(w[0].lerp(w[1], t));
            }
            acc += seg;
        }
        self.waypoints.last().copied()
    }

    /// Arc length of the closest point on the path to `p`, searched within
    /// `[lo, hi]` of arc length.
    pub fn project(&self, p: Position, lo: f64, hi: f64) -> Option<(f64, f64)> {
        if self.waypoints.is_empty() {
            return None;
        }
        if self.waypoints.len() == 1 {
            return Some((0.0, p.dist(self.waypoints[0])));
        }
        let mut best: Option<(f64, f64)> = None;
        let mut acc = 0.0;
        for w in self.waypoints.windows(2) {
            let seg = w[0].dist(w[1]);
            let (s0, s1) = (acc, acc + seg);
            acc = s1;
            if s1 < lo || s0 > hi {
                continue;
            }
            let t = if seg > 1e-12 { ((p - w[0]).dot(w[1] - w[0]) / (seg * seg)).clamp(0.0, 1.0) } else { 0.0 };
            let s = (s0 + t * seg).clamp(lo, hi);
            let q = self.point_at(s).expect("non-empty");
            let d = p.dist(q);
            if best.map(|(_, bd)| d < bd - 1e-12).unwrap_or(true) {
                best = Some((s, d));
            }
        }
        best.or_else(|| {
            let s = lo.clamp(0.0, self.length());
            Some((s, p.dist(self.point_at(s)?)))
        })
    }

    /// Inserts intermediate waypoints so that no segment exceeds `spacing`.
    pub fn densify(&self, spacing: f64) -> Path {
        let mut out = Vec::new();
        for (i, w) in self.waypoints.iter().enumerate() {
            if i > 0 {
                let prev = self.waypoints[i - 1];
                let n = (prev.dist(*w) / spacing).ceil() as usize;
                for k in 1..n {
                    out.push(prev.lerp(*w, k as f64 / n as f64));
                }
            }
            out.push(*w);
        }
        Path { waypoints: out, mode: self.mode }
    }

    pub fn is_collision_free(&self, map: &GridMap) -> bool {
        match self.waypoints.len() {
            0 => true,
            1 => map.is_free(self.waypoints[0]),
            _ => self.waypoints.windows(2).all(|w| map.segment_free(w[0], w[1])),
        }
    }
}

/// Planned path, path-exists flag and ground-traversable prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTuple {
    pub path: Path,
    pub exists: bool,
    pub ground: Path,
    pub version: u64,
    pub target: u32,
}

#[derive(Serialize, Deserialize)]
struct WirePathTuple {
    format: u8,
    version: u64,
    target: u32,
    exists: bool,
    mode: PlanMode,
    waypoints: Vec<[f32; 3]>,
    ground_prefix: u16,
    ground_tail: Option<[f32; 2]>,
}

fn to_wire(p: Position) -> [f32; 3] {
    [p.x as f32, p.y as f32, p.z as f32]
}

fn from_wire(w: [f32; 3]) -> Position {
    Vec3::new(w[0] as f64, w[1] as f64, w[2] as f64)
}

impl PathTuple {
    pub fn new(path: Path, map: &GridMap, version: u64, target: u32) -> Self {
        let ground = project_ground(&path, map);
        Self { exists: !path.is_empty(), path, ground, version, target }
    }

    pub fn none(mode: PlanMode, version: u64, target: u32) -> Self {
        Self { path: Path::empty(mode), exists: false, ground: Path::empty(PlanMode::Ground2D), version, target }
    }

    /// Versioned compact encoding: waypoints as f32 and the ground prefix as
    /// a waypoint count (the prefix shares π's x/y coordinates).
    pub fn encode(&self) -> Vec<u8> {
        let gp = self.ground.waypoints.len().min(self.path.waypoints.len());
        let wire = WirePathTuple {
            format: 1,
            version: self.version,
            target: self.target,
            exists: self.exists,
            mode: self.path.mode,
            waypoints: self.path.waypoints.iter().map(|p| to_wire(*p)).collect(),
            ground_prefix: gp as u16,
            ground_tail: None,
        };
        bincode::serialize(&wire).expect("path tuple serialization is infallible")
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, PlannerError> {
        let wire: WirePathTuple = bincode::deserialize(bytes).map_err(|e| PlannerError::Encoding(e.to_string()))?;
        if wire.format != 1 {
            return Err(PlannerError::Encoding(format!("unknown path tuple format {}", wire.format)));
        }
        let waypoints: Vec<Position> = wire.waypoints.iter().map(|w| from_wire(*w)).collect();
        let n = (wire.ground_prefix as usize).min(waypoints.len());
        let mut ground: Vec<Position> = waypoints[..n].iter().map(|p| p.with_z(0.0)).collect();
        if let Some([x, y]) = wire.ground_tail {
            ground.push(Vec3::flat(x as f64, y as f64));
        }
        Ok(Self {
            exists: wire.exists,
            path: Path { waypoints, mode: wire.mode },
            ground: Path { waypoints: ground, mode: PlanMode::Ground2D },
            version: wire.version,
            target: wire.target,
        })
    }

    /// Waypoints rounded to the wire precision, so the tuple equals its own
    /// decoded form.
    pub fn quantized(&self) -> Self {
        Self::decode(&self.encode()).expect("own encoding decodes")
    }
}

fn ground_cell(map: &GridMap, p: Position) -> Cell {
    let c = map.world_to_cell(p.with_z(0.0));
    Cell::new(c.x, c.y, 0)
}

fn neighbors4(c: Cell, mode: PlanMode) -> impl Iterator<Item = Cell> {
    let planar = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0)];
    let vertical = [(0, 0, 1), (0, 0, -1)];
    let n = if mode == PlanMode::Full3D { 6 } else { 4 };
    planar
        .into_iter()
        .chain(vertical)
        .take(n)
        .map(move |(dx, dy, dz)| Cell::new(c.x + dx, c.y + dy, c.layer + dz))
}

fn query_cell(map: &GridMap, p: Position, mode: PlanMode) -> Cell {
    match mode {
        PlanMode::Ground2D => ground_cell(map, p),
        PlanMode::Full3D => map.world_to_cell(p),
    }
}

/// Depth-first search over passable cells (4-connected on the ground,
/// 6-connected in 3D).
pub fn check_reachable(map: &GridMap, start: Position, target: Position, mode: PlanMode) -> Result<bool, PlannerError> {
    let s = query_cell(map, start, mode);
    if !map.cell_free(s) {
        return Err(PlannerError::StartBlocked(start));
    }
    let t = query_cell(map, target, mode);
    if !map.cell_free(t) {
        return Ok(false);
    }
    let mut seen = vec![false; map.width() * map.height() * map.layers()];
    let idx = |c: Cell| (c.layer as usize * map.height() + c.y as usize) * map.width() + c.x as usize;
    let mut stack = vec![s];
    seen[idx(s)] = true;
    while let Some(c) = stack.pop() {
        if c == t {
            return Ok(true);
        }
        for n in neighbors4(c, mode) {
            if map.cell_free(n) && !seen[idx(n)] {
                seen[idx(n)] = true;
                stack.push(n);
            }
        }
    }
    Ok(false)
}

/// `ceil(d_path / d_s)`.
pub fn required_robots(d_path: f64, d_s: f64) -> usize {
    assert!(d_s > 0.0 && d_path >= 0.0, "required_robots needs d_path >= 0 and d_s > 0");
    (d_path / d_s - 1e-9).ceil().max(0.0) as usize
}

/// Maximal ground-traversable prefix of `path`, flattened to z = 0.
pub fn project_ground(path: &Path, map: &GridMap) -> Path {
    let mut out = Vec::new();
    for (i, w) in path.waypoints.iter().enumerate() {
        let g = w.with_z(0.0);
        if i == 0 {
            if !map.is_free(g) {
                break;
            }
        } else if !map.segment_free(*out.last().expect("prefix is non-empty"), g) {
            break;
        }
        out.push(g);
    }
    Path { waypoints: out, mode: PlanMode::Ground2D }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    #[default]
    RrtStar,
    AStar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerConfig {
    #[serde(default)]
    pub algorithm: PlannerKind,
    /// RRT* iterations.
    pub budget: usize,
    /// Steering step; defaults to half the safe distance.
    pub step: f64,
    pub goal_bias: f64,
    /// Target tolerance δ_tol.
    pub goal_tolerance: f64,
    pub smoothing: bool,
}

impl PlannerConfig {
    pub fn for_safe_distance(d_s: f64) -> Self {
        Self {
            algorithm: PlannerKind::RrtStar,
            budget: 20_000,
            step: 0.5 * d_s,
            goal_bias: 0.05,
            goal_tolerance: 0.5 * d_s,
            smoothing: true,
        }
    }
}

#[derive(Clone, Copy)]
struct Node {
    p: Position,
    parent: usize,
    cost: f64,
}

struct SpatialHash {
    bucket: f64,
    cells: HashMap<(i64, i64, i64), Vec<usize>>,
}

impl SpatialHash {
    fn new(bucket: f64) -> Self {
        Self { bucket, cells: HashMap::new() }
    }

    fn key(&self, p: Position) -> (i64, i64, i64) {
        (
            (p.x / self.bucket).floor() as i64,
            (p.y / self.bucket).floor() as i64,
            (p.z / self.bucket).floor() as i64,
        )
    }

    fn insert(&mut self, p: Position, i: usize) {
        self.cells.entry(self.key(p)).or_default().push(i);
    }

    /// Ids of points within `r` of `p`, sorted.
    fn within(&self, nodes: &[Node], p: Position, r: f64) -> Vec<usize> {
        let (kx, ky, kz) = self.key(p);
        let span = (r / self.bucket).ceil() as i64;
        let mut out = Vec::new();
        for dx in -span..=span {
            for dy in -span..=span {
                for dz in -span..=span {
                    if let Some(v) = self.cells.get(&(kx + dx, ky + dy, kz + dz)) {
                        out.extend(v.iter().copied().filter(|&i| nodes[i].p.dist(p) <= r));
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    fn nearest(&self, nodes: &[Node], p: Position) -> usize {
        let (kx, ky, kz) = self.key(p);
        let mut best: Option<(f64, usize)> = None;
        let mut ring = 0i64;
        loop {
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    for dz in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        if let Some(v) = self.cells.get(&(kx + dx, ky + dy, kz + dz)) {
                            for &i in v {
                                let d = nodes[i].p.dist(p);
                                let better = match best {
                                    None => true,
                                    Some((bd, bi)) => d < bd || (d == bd && i < bi),
                                };
                                if better {
                                    best = Some((d, i));
                                }
                            }
                        }
                    }
                }
            }
            if let Some((bd, bi)) = best {
                // anything in a further ring is at least ring * bucket away
                if bd <= ring as f64 * self.bucket {
                    return bi;
                }
            }
            ring += 1;
            if ring > 100_000 {
                return best.map(|b| b.1).unwrap_or(0);
            }
        }
    }
}

fn sample_free<R: Rng>(map: &GridMap, mode: PlanMode, rng: &mut R) -> Position {
    let ext = map.extent();
    loop {
        let z = match mode {
            PlanMode::Ground2D => 0.0,
            PlanMode::Full3D => rng.gen::<f64>() * ext.z * 0.999_999,
        };
        let p = Vec3::new(rng.gen::<f64>() * ext.x, rng.gen::<f64>() * ext.y, z);
        if map.is_free(p) {
            return p;
        }
    }
}

fn flatten(p: Position, mode: PlanMode) -> Position {
    match mode {
        PlanMode::Ground2D => p.with_z(0.0),
        PlanMode::Full3D => p,
    }
}

/// RRT* from `start` to `target`. Returns `None` when the budget runs out
/// without reaching the goal tolerance.
pub fn rrt_star<R: Rng>(
    map: &GridMap,
    start: Position,
    target: Position,
    mode: PlanMode,
    cfg: &PlannerConfig,
    rng: &mut R,
) -> Option<Path> {
    let start = flatten(start, mode);
    let target = flatten(target, mode);
    if !map.is_free(start) || !map.is_free(target) {
        return None;
    }
    if start.dist(target) < 1e-9 {
        return Some(Path { waypoints: vec![start], mode });
    }
    let dim: f64 = if mode == PlanMode::Full3D { 3.0 } else { 2.0 };
    let r = map.resolution();
    let free_volume = match mode {
        PlanMode::Ground2D => map.free_cell_count(0) as f64 * r * r,
        PlanMode::Full3D => (0..map.layers()).map(|l| map.free_cell_count(l)).sum::<usize>() as f64 * r * r * r,
    };
    let unit_ball = if dim == 2.0 { std::f64::consts::PI } else { 4.0 / 3.0 * std::f64::consts::PI };
    let gamma = 2.0 * (1.0 + 1.0 / dim).powf(1.0 / dim) * (free_volume / unit_ball).powf(1.0 / dim);
    let step = cfg.step.max(1e-6);

    let mut nodes = vec![Node { p: start, parent: usize::MAX, cost: 0.0 }];
    let mut children: Vec<Vec<usize>> = vec![Vec::new()];
    let mut index = SpatialHash::new(step);
    index.insert(start, 0);
    for _ in 0..cfg.budget {
        let sample = if rng.gen::<f64>() < cfg.goal_bias { target } else { sample_free(map, mode, rng) };
        let near_i = index.nearest(&nodes, sample);
        let from = nodes[near_i].p;
        let d = from.dist(sample);
        if d < 1e-9 {
            continue;
        }
        let new_p = if d > step { from + (sample - from) * (step / d) } else { sample };
        if !map.segment_free(from, new_p) {
            continue;
        }
        let n = nodes.len() as f64 + 1.0;
        let radius = (gamma * (n.ln() / n).powf(1.0 / dim)).min(step).max(1e-9);
        let near = index.within(&nodes, new_p, radius);
        let mut parent = near_i;
        let mut cost = nodes[near_i].cost + d.min(step);
        for &j in &near {
            let c = nodes[j].cost + nodes[j].p.dist(new_p);
            if c < cost - 1e-12 && map.segment_free(nodes[j].p, new_p) {
                parent = j;
                cost = c;
            }
        }
        let id = nodes.len();
        nodes.push(Node { p: new_p, parent, cost });
        children.push(Vec::new());
        children[parent].push(id);
        index.insert(new_p, id);
        for &j in &near {
            if j == parent {
                continue;
            }
            let c = cost + new_p.dist(nodes[j].p);
            if c < nodes[j].cost - 1e-12 && map.segment_free(new_p, nodes[j].p) {
                let delta = nodes[j].cost - c;
                let old = nodes[j].parent;
                children[old].retain(|&k| k != j);
                children[id].push(j);
                nodes[j].parent = id;
                nodes[j].cost = c;
                // push the improvement down the subtree
                let mut stack = children[j].clone();
                while let Some(k) = stack.pop() {
                    nodes[k].cost -= delta;
                    stack.extend_from_slice(&children[k]);
                }
            }
        }
    }
    // best node that can see the target within one step
    let mut best: Option<(f64, usize)> = None;
    for i in index.within(&nodes, target, step.max(cfg.goal_tolerance)) {
        let c = nodes[i].cost + nodes[i].p.dist(target);
        if best.map(|(bc, _)| c < bc).unwrap_or(true) && map.segment_free(nodes[i].p, target) {
            best = Some((c, i));
        }
    }
    let (_, mut i) = best?;
    let mut rev = vec![target];
    loop {
        if nodes[i].p.dist(*rev.last().expect("non-empty")) > 1e-12 {
            rev.push(nodes[i].p);
        }
        if nodes[i].parent == usize::MAX {
            break;
        }
        i = nodes[i].parent;
    }
    rev.reverse();
    Some(Path { waypoints: rev, mode })
}

/// Greedy line-of-sight shortcutting.
pub fn shortcut(path: &Path, map: &GridMap) -> Path {
    let w = &path.waypoints;
    if w.len() <= 2 {
        return path.clone();
    }
    let mut out = vec![w[0]];
    let mut i = 0;
    while i < w.len() - 1 {
        let mut j = w.len() - 1;
        while j > i + 1 && !map.segment_free(w[i], w[j]) {
            j -= 1;
        }
        out.push(w[j]);
        i = j;
    }
    Path { waypoints: out, mode: path.mode }
}

/// Planner entry point used by workers: RRT* (or A*) followed by optional
/// shortcutting; 3D paths are densified so their ground projection stops
/// close to the first ground obstacle.
pub fn plan<R: Rng>(
    map: &GridMap,
    start: Position,
    target: Position,
    mode: PlanMode,
    cfg: &PlannerConfig,
    rng: &mut R,
) -> Option<Path> {
    let raw = match cfg.algorithm {
        PlannerKind::RrtStar => rrt_star(map, start, target, mode, cfg, rng)?,
        PlannerKind::AStar => {
            let mut p = astar_oracle(map, start, target, mode)?;
            // anchor the grid path to the exact query points
            let s = flatten(start, mode);
            let t = flatten(target, mode);
            if let Some(first) = p.waypoints.first_mut() {
                *first = s;
            }
            if let Some(last) = p.waypoints.last_mut() {
                *last = t;
            }
            if p.is_collision_free(map) {
                p
            } else {
                astar_oracle(map, start, target, mode)?
            }
        }
    };
    let smoothed = if cfg.smoothing { shortcut(&raw, map) } else { raw };
    Some(match mode {
        PlanMode::Full3D => center_layers(&smoothed.densify(cfg.step.max(map.resolution())), map),
        PlanMode::Ground2D => smoothed,
    })
}

/// Moves interior waypoints to the vertical middle of their layer where
/// that keeps both adjacent segments free, so followers keep clearance
/// from layer boundaries (window sills, ceilings).
fn center_layers(path: &Path, map: &GridMap) -> Path {
    let mut w = path.waypoints.clone();
    let r = map.resolution();
    for i in 1..w.len().saturating_sub(1) {
        let p = w[i];
        let c = p.with_z((p.z / r).floor() * r + 0.5 * r);
        if map.is_free(c) && map.segment_free(w[i - 1], c) && map.segment_free(c, w[i + 1]) {
            w[i] = c;
        }
    }
    Path { waypoints: w, mode: path.mode }
}

#[derive(Clone, Copy, PartialEq)]
struct Open {
    f: f64,
    cell: Cell,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, o: &Self) -> Ordering {
        o.f.total_cmp(&self.f).then_with(|| o.cell.cmp(&self.cell))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

fn moves(mode: PlanMode) -> Vec<(i64, i64, i64)> {
    let zr: &[i64] = if mode == PlanMode::Full3D { &[-1, 0, 1] } else { &[0] };
    let mut out = Vec::new();
    for &dz in zr {
        for dy in -1..=1 {
            for dx in -1..=1 {
                if (dx, dy, dz) != (0, 0, 0) {
                    out.push((dx, dy, dz));
                }
            }
        }
    }
    out
}

/// A move is allowed when every cell it brushes past is free (no corner
/// cutting).
fn move_clear(map: &GridMap, c: Cell, m: (i64, i64, i64)) -> bool {
    let comps = [m.0, m.1, m.2];
    for mask in 1u8..8 {
        let mut d = [0i64; 3];
        let mut nonzero = true;
        for k in 0..3 {
            if mask & (1 << k) != 0 {
                if comps[k] == 0 {
                    nonzero = false;
                }
                d[k] = comps[k];
            }
        }
        if nonzero && !map.cell_free(Cell::new(c.x + d[0], c.y + d[1], c.layer + d[2])) {
            return false;
        }
    }
    true
}

/// Shortest 8-connected (ground) / 26-connected (3D) grid path between
/// cell centers.
pub fn astar_oracle(map: &GridMap, start: Position, target: Position, mode: PlanMode) -> Option<Path> {
    let s = query_cell(map, start, mode);
    let t = query_cell(map, target, mode);
    if !map.cell_free(s) || !map.cell_free(t) {
        return None;
    }
    let r = map.resolution();
    let center = |c: Cell| match mode {
        PlanMode::Ground2D => map.cell_to_ground(c.x, c.y),
        PlanMode::Full3D => map.cell_to_world(c),
    };
    let h = |c: Cell| {
        let (dx, dy, dz) = ((c.x - t.x) as f64, (c.y - t.y) as f64, (c.layer - t.layer) as f64);
        (dx * dx + dy * dy + dz * dz).sqrt() * r
    };
    let n = map.width() * map.height() * map.layers();
    let idx = |c: Cell| (c.layer as usize * map.height() + c.y as usize) * map.width() + c.x as usize;
    let mut g = vec![f64::INFINITY; n];
    let mut came = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();
    g[idx(s)] = 0.0;
    heap.push(Open { f: h(s), cell: s });
    let mv = moves(mode);
    while let Some(Open { cell, .. }) = heap.pop() {
        let ci = idx(cell);
        if closed[ci] {
            continue;
        }
        closed[ci] = true;
        if cell == t {
            let mut cells = vec![cell];
            let mut k = ci;
            while came[k] != usize::MAX {
                k = came[k];
                let layer = k / (map.width() * map.height());
                let rem = k % (map.width() * map.height());
                cells.push(Cell::new((rem % map.width()) as i64, (rem / map.width()) as i64, layer as i64));
            }
            cells.reverse();
            return Some(Path { waypoints: cells.into_iter().map(center).collect(), mode });
        }
        for &m in &mv {
            let nc = Cell::new(cell.x + m.0, cell.y + m.1, cell.layer + m.2);
            if !map.cell_free(nc) || !move_clear(map, cell, m) {
                continue;
            }
            let ni = idx(nc);
            if closed[ni] {
                continue;
            }
            let step = ((m.0 * m.0 + m.1 * m.1 + m.2 * m.2) as f64).sqrt() * r;
            let cand = g[ci] + step;
            if cand < g[ni] - 1e-12 {
                g[ni] = cand;
                came[ni] = ci;
                heap.push(Open { f: cand + h(nc), cell: nc });
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{parse_map, CellRect};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn window_arena() -> GridMap {
        let mut m = GridMap::open(10, 10, 3, 1.0).unwrap();
        m.add_wall_with_window(CellRect { x0: 0, y0: 5, x1: 9, y1: 5 }, &[(4, 5), (5, 5)], 1).unwrap();
        m
    }

    #[test]
    fn reachable_open_map() {
        let m = GridMap::open(10, 10, 1, 1.0).unwrap();
        assert!(check_reachable(&m, Vec3::flat(0.5, 0.5), Vec3::flat(9.5, 9.5), PlanMode::Ground2D).unwrap());
    }

    #[test]
    fn reachable_window_arena() {
        let m = window_arena();
        let (s, t) = (Vec3::flat(1.5, 1.5), Vec3::flat(8.5, 8.5));
        assert!(!check_reachable(&m, s, t, PlanMode::Ground2D).unwrap());
        assert!(check_reachable(&m, s, t, PlanMode::Full3D).unwrap());
    }

    #[test]
    fn blocked_target_and_start() {
        let text = "type octile\nheight 3\nwidth 3\nmap\n...\n.@.\n...\n";
        let m = parse_map(text, 1.0, 1).unwrap();
        assert!(!check_reachable(&m, Vec3::flat(0.5, 0.5), Vec3::flat(1.5, 1.5), PlanMode::Ground2D).unwrap());
        assert!(matches!(
            check_reachable(&m, Vec3::flat(1.5, 1.5), Vec3::flat(0.5, 0.5), PlanMode::Ground2D),
            Err(PlannerError::StartBlocked(_))
        ));
    }

    #[test]
    fn required_robot_counts() {
        assert_eq!(required_robots(10.0, 1.4), 8);
        assert_eq!(required_robots(1.4, 1.4), 1);
        assert_eq!(required_robots(0.0, 1.4), 0);
    }

    #[test]
    fn astar_diagonal() {
        let m = GridMap::open(10, 10, 1, 1.0).unwrap();
        let p = astar_oracle(&m, Vec3::flat(0.5, 0.5), Vec3::flat(9.5, 9.5), PlanMode::Ground2D).unwrap();
        assert!((p.length() - 9.0 * 2f64.sqrt()).abs() < 1e-9);
        let q = astar_oracle(&m, Vec3::flat(0.5, 0.5), Vec3::flat(9.5, 9.5), PlanMode::Ground2D).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn astar_unreachable_agrees_with_dfs() {
        let m = window_arena();
        let (s, t) = (Vec3::flat(1.5, 1.5), Vec3::flat(8.5, 8.5));
        assert!(astar_oracle(&m, s, t, PlanMode::Ground2D).is_none());
        assert!(astar_oracle(&m, s, t, PlanMode::Full3D).is_some());
    }

    #[test]
    fn rrt_start_equals_target() {
        let m = GridMap::open(5, 5, 1, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = Vec3::flat(2.5, 2.5);
        let path = plan(&m, p, p, PlanMode::Ground2D, &PlannerConfig::for_safe_distance(1.4), &mut rng).unwrap();
        assert_eq!(path.waypoints, vec![p]);
        assert_eq!(path.length(), 0.0);
    }

    #[test]
    fn rrt_disconnected() {
        let m = window_arena();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut cfg = PlannerConfig::for_safe_distance(1.4);
        cfg.budget = 2000;
        let r = plan(&m, Vec3::flat(1.5, 1.5), Vec3::flat(8.5, 8.5), PlanMode::Ground2D, &cfg, &mut rng);
        assert!(r.is_none());
    }

    #[test]
    fn rrt_corridor_near_straight() {
        let text = "type octile\nheight 3\nwidth 20\nmap\n@@@@@@@@@@@@@@@@@@@@\n....................\n@@@@@@@@@@@@@@@@@@@@\n";
        let m = parse_map(text, 1.0, 1).unwrap();
        let (s, t) = (Vec3::flat(0.5, 1.5), Vec3::flat(19.5, 1.5));
        let oracle = astar_oracle(&m, s, t, PlanMode::Ground2D).unwrap().length();
        let mut cfg = PlannerConfig::for_safe_distance(1.4);
        cfg.smoothing = false;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = plan(&m, s, t, PlanMode::Ground2D, &cfg, &mut rng).unwrap();
        assert!(p.is_collision_free(&m));
        assert!(p.length() <= 1.1 * oracle, "{} vs {}", p.length(), oracle);
        assert_eq!(p.waypoints[0], s);
        assert!(p.waypoints.last().unwrap().dist(t) <= cfg.goal_tolerance);
    }

    #[test]
    fn rrt_is_deterministic() {
        let m = window_arena();
        let cfg = PlannerConfig { budget: 3000, ..PlannerConfig::for_safe_distance(1.4) };
        let a = plan(&m, Vec3::flat(1.5, 1.5), Vec3::flat(8.5, 8.5), PlanMode::Full3D, &cfg, &mut ChaCha8Rng::seed_from_u64(5));
        let b = plan(&m, Vec3::flat(1.5, 1.5), Vec3::flat(8.5, 8.5), PlanMode::Full3D, &cfg, &mut ChaCha8Rng::seed_from_u64(5));
        assert!(a.is_some());
        assert_eq!(a, b);
    }

    #[test]
    fn projection_identity_on_ground() {
        let m = GridMap::open(10, 10, 1, 1.0).unwrap();
        let p = Path { waypoints: vec![Vec3::flat(0.5, 0.5), Vec3::flat(5.5, 0.5), Vec3::flat(5.5, 7.5)], mode: PlanMode::Ground2D };
        assert_eq!(project_ground(&p, &m).waypoints, p.waypoints);
    }

    #[test]
    fn projection_stops_before_wall() {
        let m = window_arena();
        let p = Path {
            waypoints: vec![
                Vec3::new(4.5, 1.5, 0.0),
                Vec3::new(4.5, 3.5, 0.5),
                Vec3::new(4.5, 4.5, 1.5),
                Vec3::new(4.5, 5.5, 1.5),
                Vec3::new(4.5, 8.5, 0.5),
            ],
            mode: PlanMode::Full3D,
        };
        let g = project_ground(&p, &m);
        assert_eq!(g.waypoints, vec![Vec3::flat(4.5, 1.5), Vec3::flat(4.5, 3.5), Vec3::flat(4.5, 4.5)]);
    }

    #[test]
    fn projection_from_above_obstacle() {
        let text = "type octile\nheight 1\nwidth 3\nmap\n@..\n";
        let m = parse_map(text, 1.0, 2).unwrap();
        let p = Path { waypoints: vec![Vec3::new(0.5, 0.5, 1.5), Vec3::new(2.5, 0.5, 1.5)], mode: PlanMode::Full3D };
        assert!(project_ground(&p, &m).is_empty());
    }

    #[test]
    fn tuple_roundtrip() {
        let m = window_arena();
        let p = Path { waypoints: vec![Vec3::new(4.5, 1.5, 0.0), Vec3::new(4.5, 4.5, 1.5), Vec3::new(4.5, 5.5, 1.5)], mode: PlanMode::Full3D };
        let t = PathTuple::new(p, &m, 3, 0).quantized();
        assert!(t.exists);
        assert_eq!(t.ground.waypoints.len(), 2);
        assert_eq!(PathTuple::decode(&t.encode()).unwrap(), t);
    }

    #[test]
    fn path_geometry() {
        let p = Path { waypoints: vec![Vec3::flat(0.0, 0.0), Vec3::flat(3.0, 0.0), Vec3::flat(3.0, 4.0)], mode: PlanMode::Ground2D };
        assert_eq!(p.length(), 7.0);
        assert_eq!(p.point_at(5.0), Some(Vec3::flat(3.0, 2.0)));
        let (s, d) = p.project(Vec3::flat(4.0, 1.0), 0.0, 7.0).unwrap();
        assert!((s - 4.0).abs() < 1e-12 && (d - 1.0).abs() < 1e-12);
        assert_eq!(p.densify(1.0).waypoints.len(), 8);
    }
}
