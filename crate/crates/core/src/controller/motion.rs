//! Path following, connectivity bounds and sampled reciprocal velocity
//! obstacles.

use crate::geom::Vec3;
use crate::planner::Path;

/// Tracks the robot's arc length along its current path.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PathFollower {
    key: Option<(u64, bool)>,
    s: f64,
}

impl PathFollower {
    /// Updates and returns the arc length of `pos` on `path`. A new `key`
    /// (plan stamp, ground flag) forces a global projection; otherwise the
    /// search stays within `window` of the previous value.
    pub fn track(&mut self, key: (u64, bool), path: &Path, pos: Vec3, window: f64) -> f64 {
        let len = path.length();
        let (lo, hi) = if self.key == Some(key) { (self.s - window, self.s + window) } else { (0.0, len) };
        self.key = Some(key);
        if let Some((s, _)) = path.project(pos, lo.max(0.0), hi.min(len)) {
            self.s = s;
        }
        self.s
    }

    pub fn arc(&self) -> f64 {
        self.s
    }

    pub fn reset(&mut self) {
        self.key = None;
        self.s = 0.0;
    }
}

/// Velocity toward a carrot `lookahead` ahead of (or behind) arc length `s`,
/// at most `v_max` and never overshooting the carrot within one step.
pub fn u_path(path: &Path, s: f64, pos: Vec3, forward: bool, lookahead: f64, v_max: f64, dt: f64) -> Vec3 {
    let target = if forward { s + lookahead } else { s - lookahead };
    let Some(carrot) = path.point_at(target.clamp(0.0, path.length())) else {
        return Vec3::ZERO;
    };
    let d = carrot - pos;
    let n = d.norm();
    if n < 1e-9 {
        return Vec3::ZERO;
    }
    d * (v_max.min(n / dt) / n)
}

/// Preferred velocity of a chain member from its parent/child distances and
/// the forward/backward path velocities.
pub fn preferred_velocity(d_parent: Option<f64>, d_child: Option<f64>, forward: Vec3, backward: Vec3, d_s: f64) -> Vec3 {
    match d_parent {
        Some(d) if d > d_s => backward,
        _ => forward * super::f_c(d_child, d_s),
    }
}

/// Speed bound `min over links of max(0, (d_s - d) / (2 dt))`, or `v_max`
/// without links.
pub fn connectivity_bound(d_parent: Option<f64>, d_child: Option<f64>, d_s: f64, dt: f64, v_max: f64) -> f64 {
    let mut out: Option<f64> = None;
    for d in [d_parent, d_child].into_iter().flatten() {
        let b = ((d_s - d) / (2.0 * dt)).max(0.0);
        out = Some(out.map_or(b, |o: f64| o.min(b)));
    }
    out.unwrap_or(v_max)
}

/// A chain link seen from this robot: `offset = x_self - x_other`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSense {
    pub offset: Vec3,
}

/// A candidate velocity may stretch a link by at most half of its remaining
/// safe margin in one step; links already past `d_s` may not stretch.
pub fn link_admissible(u: Vec3, links: &[LinkSense], d_s: f64, dt: f64) -> bool {
    links.iter().all(|l| {
        let d = l.offset.norm();
        let next = (l.offset + u * dt).norm();
        let allowed = if d < d_s { d + 0.5 * (d_s - d) } else { d };
        next <= allowed + 1e-12
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RvoNeighbor {
    /// `x_other - x_self`.
    pub offset: Vec3,
    pub velocity: Vec3,
}

/// Time until `offset - v t` enters the ball of `radius`; infinite when the
/// paths never meet.
pub fn time_to_collision(offset: Vec3, v: Vec3, radius: f64) -> f64 {
    let a = v.norm_sq();
    let b = -2.0 * offset.dot(v);
    let c = offset.norm_sq() - radius * radius;
    if c <= 0.0 {
        return 0.0;
    }
    if a < 1e-18 {
        return f64::INFINITY;
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return f64::INFINITY;
    }
    let t = (-b - disc.sqrt()) / (2.0 * a);
    if t < 0.0 {
        f64::INFINITY
    } else {
        t
    }
}

const DIRECTIONS: usize = 32;
const MAGNITUDES: usize = 6;
const OVERLAP_PENALTY: f64 = 1e3;

fn basis(u_pref: Vec3) -> (Vec3, Vec3) {
    let u = if u_pref.norm() > 1e-9 { u_pref.normalized() } else { Vec3::new(1.0, 0.0, 0.0) };
    let h = Vec3::new(0.0, 0.0, 1.0).cross(u);
    let h = if h.norm() > 1e-9 { h.normalized() } else { Vec3::new(1.0, 0.0, 0.0) };
    (u, h)
}

/// Fixed sample grid: 32 directions in the plane of `u_pref` and its
/// horizontal normal, times magnitudes `i * max / 5`, index `dir * 6 + i`.
fn samples(u_pref: Vec3, max: f64) -> Vec<Vec3> {
    let (u, h) = basis(u_pref);
    let mut out = Vec::with_capacity(DIRECTIONS * MAGNITUDES);
    for k in 0..DIRECTIONS {
        let th = 2.0 * std::f64::consts::PI * k as f64 / DIRECTIONS as f64;
        let dir = u * th.cos() + h * th.sin();
        for i in 0..MAGNITUDES {
            out.push(dir * (max * i as f64 / (MAGNITUDES - 1) as f64));
        }
    }
    out
}

fn penalty(cand: Vec3, u_pref: Vec3, u_self: Vec3, neighbors: &[RvoNeighbor], alpha: f64, r_col: f64) -> f64 {
    let mut p = (u_pref - cand).norm();
    for n in neighbors {
        let v_rel = cand * 2.0 - u_self - n.velocity;
        if n.offset.norm() <= r_col {
            // overlapping: anything that does not separate counts as a hit
            if n.offset.dot(v_rel) >= 0.0 {
                p += alpha * OVERLAP_PENALTY;
            }
            continue;
        }
        let t = time_to_collision(n.offset, v_rel, r_col);
        if t.is_finite() {
            p += alpha / t.max(1e-3);
        }
    }
    p
}

fn argmin(cands: &[Vec3], u_pref: Vec3, u_self: Vec3, neighbors: &[RvoNeighbor], alpha: f64, r_col: f64) -> Option<Vec3> {
    let mut best: Option<(f64, f64, usize)> = None;
    for (i, c) in cands.iter().enumerate() {
        let key = (penalty(*c, u_pref, u_self, neighbors, alpha, r_col), (u_pref - *c).norm(), i);
        let better = match best {
            None => true,
            Some(b) => key.0.total_cmp(&b.0).then(key.1.total_cmp(&b.1)).then(key.2.cmp(&b.2)).is_lt(),
        };
        if better {
            best = Some(key);
        }
    }
    best.map(|(_, _, i)| cands[i])
}

/// Collision-aware velocity: the grid sample minimizing
/// `sum alpha / t_collision + |u_pref - u|` with magnitudes up to
/// `min(u_conn, v_max)`.
pub fn rvo_select(
    u_pref: Vec3,
    neighbors: &[RvoNeighbor],
    u_self: Vec3,
    u_conn: f64,
    v_max: f64,
    alpha: f64,
    r_col: f64,
) -> Vec3 {
    let max = u_conn.min(v_max);
    if max <= 0.0 {
        return Vec3::ZERO;
    }
    argmin(&samples(u_pref, max), u_pref, u_self, neighbors, alpha, r_col).unwrap_or(Vec3::ZERO)
}

/// Same selection over the full `v_max` grid filtered by a per-candidate
/// admissibility test, plus `u_pref` scaled down to the admissible limit.
#[allow(clippy::too_many_arguments)]
pub fn rvo_select_constrained(
    u_pref: Vec3,
    neighbors: &[RvoNeighbor],
    u_self: Vec3,
    v_max: f64,
    alpha: f64,
    r_col: f64,
    admissible: impl Fn(Vec3) -> bool,
) -> Vec3 {
    let u_pref = u_pref.clamp_norm(v_max);
    let mut cands: Vec<Vec3> = samples(u_pref, v_max).into_iter().filter(|c| admissible(*c)).collect();
    if u_pref.norm() > 1e-12 {
        let (mut lo, mut hi) = (0.0, 1.0);
        if admissible(u_pref) {
            lo = 1.0;
        } else {
            for _ in 0..30 {
                let mid = 0.5 * (lo + hi);
                if admissible(u_pref * mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
        if lo > 0.0 {
            cands.push(u_pref * lo);
        }
    }
    if cands.is_empty() {
        return Vec3::ZERO;
    }
    argmin(&cands, u_pref, u_self, neighbors, alpha, r_col).unwrap_or(Vec3::ZERO)
}
