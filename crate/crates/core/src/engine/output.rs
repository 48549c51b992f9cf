use super::{Metrics, RunStatus};
use crate::controller::Decision;
use crate::geom::{Position, Vec3};
use crate::msg::{RobotId, RobotKind, Role};
use std::fmt::Write as _;
use thiserror::Error;

const TRAJECTORY_COLUMNS: [&str; 11] = ["tick", "robot", "kind", "x", "y", "z", "role", "chain", "parent", "child", "speed"];

pub fn trajectory_header() -> &'static str {
    "tick,robot,kind,x,y,z,role,chain,parent,child,speed"
}

pub fn metrics_csv_header() -> &'static str {
    "scenario,seed,status,ticks,completion_tick,chain_completion,traversal_time,time_factor,heal_events,recovery_ticks,messages,max_link,violations,failed,parked"
}

fn joined<T: ToString>(items: impl Iterator<Item = T>) -> String {
    items.map(|t| t.to_string()).collect::<Vec<_>>().join(";")
}

pub fn metrics_csv_row(name: &str, seed: u64, status: RunStatus, m: &Metrics, dt: f64, v_max: f64) -> String {
    let status = match status {
        RunStatus::Complete => "complete",
        RunStatus::Incomplete => "incomplete",
        RunStatus::Aborted => "aborted",
    };
    let longest = m.path_length.values().copied().fold(0.0, f64::max);
    format!(
        "{},{},{},{},{},{},{:.6},{},{},{},{},{:.6},{},{},{}",
        name,
        seed,
        status,
        m.ticks,
        m.all_complete.map(|t| t.to_string()).unwrap_or_default(),
        joined(m.completion.iter().map(|(c, t)| format!("{c}:{t}"))),
        longest / v_max,
        m.time_factor(dt, v_max).map(|f| format!("{f:.6}")).unwrap_or_default(),
        m.heal_events.len(),
        joined(m.recovery_ticks().into_iter()),
        m.messages_total(),
        m.max_link_distance(),
        m.violations,
        joined(m.failed.iter()),
        m.parked_requests
    )
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn decisions_csv(decisions: &[Decision]) -> String {
    let mut s = String::from("tick,robot,event,detail\n");
    for d in decisions {
        let _ = writeln!(s, "{},{},{},{}", d.tick, d.robot, d.event, csv_field(&d.detail));
    }
    s
}

#[derive(Debug, Clone)]
pub struct SvgRobot {
    pub id: RobotId,
    pub kind: RobotKind,
    pub role: Role,
    pub position: Position,
}

#[derive(Debug, Clone, Default)]
pub struct SvgScene {
    pub robots: Vec<SvgRobot>,
    pub edges: Vec<(RobotId, RobotId)>,
    pub targets: Vec<Position>,
    pub safe: f64,
    /// Per-robot polylines drawn under the final state.
    pub trails: Vec<Vec<Position>>,
}

fn role_color(role: Role) -> &'static str {
    match role {
        Role::Root => "#1f4e99",
        Role::Worker => "#c23b22",
        Role::Networker => "#2e8b57",
        Role::Free => "#888888",
        Role::Failed => "#000000",
    }
}

/// Top-down view: obstacles, safe discs, faded trails with start
/// markers, chain edges, robots (end markers) and targets.
pub fn render_svg(map: &crate::world::GridMap, scene: &SvgScene) -> String {
    let px = 20.0;
    let (w, h) = (map.width() as f64 * map.resolution(), map.height() as f64 * map.resolution());
    let sy = |y: f64| (h - y) * px;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" viewBox=\"0 0 {:.0} {:.0}\">",
        w * px,
        h * px,
        w * px,
        h * px
    );
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let r = map.resolution() * px;
    for y in 0..map.height() {
        for x in 0..map.width() {
            if !map.cell_free(crate::world::Cell::new(x as i64, y as i64, 0)) {
                let _ = writeln!(
                    s,
                    "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{r:.2}\" height=\"{r:.2}\" fill=\"#444\"/>",
                    x as f64 * r,
                    sy((y + 1) as f64 * map.resolution())
                );
            }
        }
    }
    // safe communication discs around chain members
    for rb in scene.robots.iter().filter(|r| matches!(r.role, Role::Root | Role::Worker | Role::Networker)) {
        let _ = writeln!(
            s,
            "<circle class=\"safe\" cx=\"{:.2}\" cy=\"{:.2}\" r=\"{:.2}\" fill=\"#2e8b57\" fill-opacity=\"0.06\" stroke=\"#2e8b57\" stroke-opacity=\"0.3\"/>",
            rb.position.x * px,
            sy(rb.position.y),
            scene.safe * px
        );
    }
    for trail in &scene.trails {
        if trail.len() >= 2 {
            let pts: Vec<String> = trail.iter().map(|p| format!("{:.2},{:.2}", p.x * px, sy(p.y))).collect();
            let _ = writeln!(
                s,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"#999\" stroke-opacity=\"0.4\" stroke-width=\"1\"/>",
                pts.join(" ")
            );
        }
        if let Some(p) = trail.first() {
            let (x, y) = (p.x * px, sy(p.y));
            let _ = writeln!(
                s,
                "<path class=\"start\" d=\"M{:.2},{:.2} L{:.2},{:.2} M{:.2},{:.2} L{:.2},{:.2}\" stroke=\"#777\" stroke-width=\"1\"/>",
                x - 3.0,
                y - 3.0,
                x + 3.0,
                y + 3.0,
                x - 3.0,
                y + 3.0,
                x + 3.0,
                y - 3.0
            );
        }
    }
    let pos = |id: RobotId| scene.robots.iter().find(|r| r.id == id).map(|r| r.position);
    for (a, b) in &scene.edges {
        if let (Some(p), Some(q)) = (pos(*a), pos(*b)) {
            let _ = writeln!(
                s,
                "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#2e8b57\" stroke-width=\"2\"/>",
                p.x * px,
                sy(p.y),
                q.x * px,
                sy(q.y)
            );
        }
    }
    for t in &scene.targets {
        let _ = writeln!(
            s,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"6\" fill=\"none\" stroke=\"#c23b22\" stroke-width=\"2\"/>",
            t.x * px,
            sy(t.y)
        );
    }
    for rb in &scene.robots {
        let shape = match rb.kind {
            RobotKind::Ground => format!(
                "<rect class=\"end\" x=\"{:.2}\" y=\"{:.2}\" width=\"8\" height=\"8\" fill=\"{}\"/>",
                rb.position.x * px - 4.0,
                sy(rb.position.y) - 4.0,
                role_color(rb.role)
            ),
            RobotKind::Flying => format!(
                "<circle class=\"end\" cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{}\"/>",
                rb.position.x * px,
                sy(rb.position.y),
                role_color(rb.role)
            ),
        };
        let _ = writeln!(s, "{shape}");
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"8\">{}</text>",
            rb.position.x * px + 5.0,
            sy(rb.position.y) - 5.0,
            rb.id
        );
    }
    s.push_str("</svg>\n");
    s
}

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    #[error("trajectory header mismatch: missing column {0}")]
    Version(String),
    #[error("trajectory line {line}: {msg}")]
    Row { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub tick: u64,
    pub robot: RobotId,
    pub kind: RobotKind,
    pub position: Position,
    pub role: Role,
    pub chain: Option<u32>,
    pub parent: Option<RobotId>,
    pub child: Option<RobotId>,
    pub speed: f64,
}

pub fn parse_trajectory(text: &str) -> Result<Vec<TrajectoryRow>, TrajectoryError> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    for c in TRAJECTORY_COLUMNS {
        if !header.contains(&c) {
            return Err(TrajectoryError::Version(c.to_string()));
        }
    }
    let col = |name: &str| header.iter().position(|h| *h == name).expect("checked above");
    let idx: Vec<usize> = TRAJECTORY_COLUMNS.iter().map(|c| col(c)).collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let line_no = i + 2;
        let err = |msg: &str| TrajectoryError::Row { line: line_no, msg: msg.to_string() };
        let get = |k: usize| f.get(idx[k]).copied().ok_or_else(|| err("short row"));
        let num = |k: usize| get(k)?.parse::<f64>().map_err(|_| err("bad number"));
        let opt = |k: usize| -> Result<Option<u32>, TrajectoryError> {
            let v = get(k)?;
            if v.is_empty() {
                Ok(None)
            } else {
                v.parse().map(Some).map_err(|_| err("bad id"))
            }
        };
        let kind = match get(2)? {
            "ground" => RobotKind::Ground,
            "flying" => RobotKind::Flying,
            _ => return Err(err("bad kind")),
        };
        rows.push(TrajectoryRow {
            tick: get(0)?.parse().map_err(|_| err("bad tick"))?,
            robot: RobotId(get(1)?.parse().map_err(|_| err("bad robot"))?),
            kind,
            position: Vec3::new(num(3)?, num(4)?, num(5)?),
            role: Role::parse(get(6)?).ok_or_else(|| err("bad role"))?,
            chain: opt(7)?,
            parent: opt(8)?.map(RobotId),
            child: opt(9)?.map(RobotId),
            speed: num(10)?,
        });
    }
    Ok(rows)
}

/// Scene at `tick` (or the last tick) with trails up to it.
pub fn scene_from_trajectory(rows: &[TrajectoryRow], tick: Option<u64>, targets: Vec<Position>, safe: f64) -> SvgScene {
    let last = rows.iter().map(|r| r.tick).max().unwrap_or(0);
    let at = tick.unwrap_or(last).min(last);
    let mut trails: std::collections::BTreeMap<RobotId, Vec<Position>> = Default::default();
    for r in rows.iter().filter(|r| r.tick <= at) {
        trails.entry(r.robot).or_default().push(r.position);
    }
    let now: Vec<&TrajectoryRow> = rows.iter().filter(|r| r.tick == at).collect();
    let robots = now.iter().map(|r| SvgRobot { id: r.robot, kind: r.kind, role: r.role, position: r.position }).collect();
    let edges = now
        .iter()
        .filter_map(|r| {
            let c = r.child?;
            let k = now.iter().find(|k| k.robot == c)?;
            (k.parent == Some(r.robot)).then_some((r.robot, c))
        })
        .collect();
    SvgScene { robots, edges, targets, safe, trails: trails.into_values().collect() }
}
