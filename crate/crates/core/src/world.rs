//! Layered occupancy grid: layer 0 is the ground plane, layers above it are
//! slabs of height `resolution` that only flying robots can use.

use crate::geom::{Position, Vec3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("map parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("map configuration error: {0}")]
    Config(String),
}

/// Integer cell address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: i64,
    pub y: i64,
    pub layer: i64,
}

impl Cell {
    pub const fn new(x: i64, y: i64, layer: i64) -> Self {
        Self { x, y, layer }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    width: usize,
    height: usize,
    layers: usize,
    resolution: f64,
    passable: Vec<bool>,
}

/// Rectangular wall footprint in ground cells, inclusive bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl CellRect {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
}

impl GridMap {
    /// Fully passable map.
    pub fn open(width: usize, height: usize, layers: usize, resolution: f64) -> Result<Self, WorldError> {
        if width == 0 || height == 0 || layers == 0 {
            return Err(WorldError::Config("width, height and layers must be >= 1".into()));
        }
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(WorldError::Config(format!("resolution must be positive, got {resolution}")));
        }
        Ok(Self {
            width,
            height,
            layers,
            resolution,
            passable: vec![true; width * height * layers],
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    /// Metric extent (x, y, z).
    pub fn extent(&self) -> Vec3 {
        Vec3::new(
            self.width as f64 * self.resolution,
            self.height as f64 * self.resolution,
            self.layers as f64 * self.resolution,
        )
    }

    fn index(&self, c: Cell) -> Option<usize> {
        if c.x < 0 || c.y < 0 || c.layer < 0 {
            return None;
        }
        let (x, y, l) = (c.x as usize, c.y as usize, c.layer as usize);
        if x >= self.width || y >= self.height || l >= self.layers {
            return None;
        }
        Some((l * self.height + y) * self.width + x)
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        self.index(c).is_some()
    }

    pub fn cell_free(&self, c: Cell) -> bool {
        self.index(c).map(|i| self.passable[i]).unwrap_or(false)
    }

    pub fn set_cell(&mut self, c: Cell, free: bool) -> Result<(), WorldError> {
        let i = self
            .index(c)
            .ok_or_else(|| WorldError::Config(format!("cell {c:?} out of bounds")))?;
        self.passable[i] = free;
        Ok(())
    }

    pub fn world_to_cell(&self, p: Position) -> Cell {
        let r = self.resolution;
        Cell::new(
            (p.x / r).floor() as i64,
            (p.y / r).floor() as i64,
            (p.z / r).floor() as i64,
        )
    }

    /// Center of the cell.
    pub fn cell_to_world(&self, c: Cell) -> Position {
        let r = self.resolution;
        Vec3::new(
            (c.x as f64 + 0.5) * r,
            (c.y as f64 + 0.5) * r,
            (c.layer as f64 + 0.5) * r,
        )
    }

    /// Cell center on the ground plane (z = 0), the position a ground robot
    /// occupies when standing in that cell.
    pub fn cell_to_ground(&self, x: i64, y: i64) -> Position {
        let r = self.resolution;
        Vec3::flat((x as f64 + 0.5) * r, (y as f64 + 0.5) * r)
    }

    pub fn is_free(&self, p: Position) -> bool {
        p.is_finite() && self.cell_free(self.world_to_cell(p))
    }

    pub fn free_cell_count(&self, layer: usize) -> usize {
        let n = self.width * self.height;
        self.passable[layer * n..(layer + 1) * n].iter().filter(|b| **b).count()
    }

    /// Copies ground obstacles onto every aerial layer.
    pub fn extrude_ground_obstacles(&mut self) {
        let n = self.width * self.height;
        for l in 1..self.layers {
            for i in 0..n {
                if !self.passable[i] {
                    self.passable[l * n + i] = false;
                }
            }
        }
    }

    /// Keeps the rectangle `[x0, x0+w) x [y0, y0+h)`, all layers.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<GridMap, WorldError> {
        if w == 0 || h == 0 || x0 + w > self.width || y0 + h > self.height {
            return Err(WorldError::Config(format!(
                "crop {w}x{h}+{x0}+{y0} outside {}x{} map",
                self.width, self.height
            )));
        }
        let mut out = GridMap::open(w, h, self.layers, self.resolution)?;
        for l in 0..self.layers as i64 {
            for y in 0..h as i64 {
                for x in 0..w as i64 {
                    let free = self.cell_free(Cell::new(x + x0 as i64, y + y0 as i64, l));
                    out.set_cell(Cell::new(x, y, l), free)?;
                }
            }
        }
        Ok(out)
    }

    /// True when the straight segment only crosses passable cells. Uses an
    /// exact voxel traversal; a segment passing exactly through a cell corner
    /// must have both side cells free.
    /// Copy with every layer's obstacles grown by `radius` metres in the
    /// plane (square dilation).
    pub fn inflated(&self, radius: f64) -> GridMap {
        let k = (radius / self.resolution - 1e-9).ceil().max(0.0) as i64;
        let mut out = self.clone();
        if k == 0 {
            return out;
        }
        for l in 0..self.layers as i64 {
            for y in 0..self.height as i64 {
                for x in 0..self.width as i64 {
                    if self.cell_free(Cell::new(x, y, l)) {
                        continue;
                    }
                    for dy in -k..=k {
                        for dx in -k..=k {
                            let c = Cell::new(x + dx, y + dy, l);
                            if self.in_bounds(c) {
                                let _ = out.set_cell(c, false);
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// One integration step with per-axis clamping: an axis whose move
    /// would enter an obstacle (or leave the map) is dropped.
    pub fn clamp_step(&self, pos: Position, u: Vec3, dt: f64) -> Position {
        let mut p = pos;
        let d = u * dt;
        for axis in 0..3 {
            let mut q = p;
            match axis {
                0 => q.x += d.x,
                1 => q.y += d.y,
                _ => q.z += d.z,
            }
            if self.is_free(q) {
                p = q;
            }
        }
        p
    }

    pub fn segment_free(&self, a: Position, b: Position) -> bool {
        if !self.is_free(a) || !self.is_free(b) {
            return false;
        }
        let r = self.resolution;
        let mut cell = self.world_to_cell(a);
        let end = self.world_to_cell(b);
        let d = b - a;
        let comps = [(a.x, d.x), (a.y, d.y), (a.z, d.z)];
        let mut step = [0i64; 3];
        let mut t_max = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        let start = [cell.x, cell.y, cell.layer];
        for k in 0..3 {
            let (p0, dk) = comps[k];
            if dk > 0.0 {
                step[k] = 1;
                t_max[k] = (((start[k] + 1) as f64) * r - p0) / dk;
                t_delta[k] = r / dk;
            } else if dk < 0.0 {
                step[k] = -1;
                t_max[k] = ((start[k] as f64) * r - p0) / dk;
                t_delta[k] = -r / dk;
            }
        }
        let max_steps = 4 * (self.width + self.height + self.layers) + 8;
        for _ in 0..max_steps {
            if cell == end {
                return true;
            }
            let t_min = t_max.iter().cloned().fold(f64::INFINITY, f64::min);
            if t_min > 1.0 {
                // numerical slack: we are in the final cell's neighbourhood
                return self.cell_free(end);
            }
            let ties: Vec<usize> = (0..3).filter(|&k| (t_max[k] - t_min).abs() < 1e-12).collect();
            if ties.len() > 1 {
                // corner crossing: every intermediate cell must be free
                for &k in &ties {
                    let mut side = [cell.x, cell.y, cell.layer];
                    side[k] += step[k];
                    if !self.cell_free(Cell::new(side[0], side[1], side[2])) {
                        return false;
                    }
                }
            }
            let mut next = [cell.x, cell.y, cell.layer];
            for &k in &ties {
                next[k] += step[k];
                t_max[k] += t_delta[k];
            }
            cell = Cell::new(next[0], next[1], next[2]);
            if !self.cell_free(cell) {
                return false;
            }
        }
        false
    }

    /// Blocks `wall` on every layer, then reopens `window` cells on
    /// `window_layer` only.
    pub fn add_wall_with_window(
        &mut self,
        wall: CellRect,
        window: &[(usize, usize)],
        window_layer: usize,
    ) -> Result<(), WorldError> {
        if wall.x0 > wall.x1 || wall.y0 > wall.y1 || wall.x1 >= self.width || wall.y1 >= self.height {
            return Err(WorldError::Config(format!("wall {wall:?} outside map bounds")));
        }
        if window_layer == 0 {
            return Err(WorldError::Config("window layer must be above the ground (>= 1)".into()));
        }
        if window_layer >= self.layers {
            return Err(WorldError::Config(format!(
                "window layer {window_layer} does not exist (map has {} layers)",
                self.layers
            )));
        }
        if let Some(&(x, y)) = window.iter().find(|&&(x, y)| !wall.contains(x, y)) {
            return Err(WorldError::Config(format!("window cell ({x}, {y}) outside wall range")));
        }
        for l in 0..self.layers {
            for y in wall.y0..=wall.y1 {
                for x in wall.x0..=wall.x1 {
                    self.set_cell(Cell::new(x as i64, y as i64, l as i64), false)?;
                }
            }
        }
        for &(x, y) in window {
            self.set_cell(Cell::new(x as i64, y as i64, window_layer as i64), true)?;
        }
        Ok(())
    }
}

/// Builds a map from the grid benchmark text format. Layer 0 mirrors the
/// characters; layers above it start fully passable.
pub fn parse_map(text: &str, resolution: f64, layers: usize) -> Result<GridMap, WorldError> {
    let mut lines = text.lines().map(|l| l.trim_end()).enumerate();
    let mut height = None;
    let mut width = None;
    let mut saw_type = false;
    let mut map_line = None;
    for (i, line) in lines.by_ref() {
        let line_no = i + 1;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or("");
        let val = parts.next();
        match key {
            "type" => saw_type = true,
            "height" | "width" => {
                let v: usize = val
                    .and_then(|v| v.parse().ok())
                    .filter(|v| *v > 0)
                    .ok_or_else(|| WorldError::Parse {
                        line: line_no,
                        msg: format!("expected positive integer after `{key}`"),
                    })?;
                if key == "height" {
                    height = Some(v);
                } else {
                    width = Some(v);
                }
            }
            "map" => {
                map_line = Some(line_no);
                break;
            }
            other => {
                return Err(WorldError::Parse {
                    line: line_no,
                    msg: format!("unexpected header line `{other}`"),
                })
            }
        }
    }
    let map_line = map_line.ok_or(WorldError::Parse {
        line: text.lines().count().max(1),
        msg: "missing `map` header".into(),
    })?;
    if !saw_type {
        return Err(WorldError::Parse { line: 1, msg: "missing `type` header".into() });
    }
    let (height, width) = match (height, width) {
        (Some(h), Some(w)) => (h, w),
        _ => {
            return Err(WorldError::Parse {
                line: map_line,
                msg: "missing `height` or `width` header".into(),
            })
        }
    };
    let mut map = GridMap::open(width, height, layers, resolution)
        .map_err(|e| WorldError::Parse { line: map_line, msg: e.to_string() })?;
    let mut rows = 0usize;
    let mut last_line = map_line;
    for (i, line) in lines {
        let line_no = i + 1;
        if line.is_empty() {
            last_line = line_no;
            continue;
        }
        if rows == height {
            return Err(WorldError::Parse {
                line: line_no,
                msg: format!("more than {height} map rows"),
            });
        }
        let chars: Vec<char> = line.chars().collect();
        if chars.len() != width {
            return Err(WorldError::Parse {
                line: line_no,
                msg: format!("row has {} cells, expected {width}", chars.len()),
            });
        }
        for (x, ch) in chars.into_iter().enumerate() {
            let free = match ch {
                '.' | 'G' => true,
                '@' | 'O' | 'T' => false,
                other => {
                    return Err(WorldError::Parse {
                        line: line_no,
                        msg: format!("unknown cell character `{other}`"),
                    })
                }
            };
            map.set_cell(Cell::new(x as i64, rows as i64, 0), free)
                .expect("indices checked against header");
        }
        rows += 1;
        last_line = line_no;
    }
    if rows != height {
        return Err(WorldError::Parse {
            line: last_line,
            msg: format!("expected {height} map rows, found {rows}"),
        });
    }
    Ok(map)
}

/// Renders layer 0 back to the benchmark text format.
pub fn format_map(map: &GridMap) -> String {
    let mut out = format!("type octile\nheight {}\nwidth {}\nmap\n", map.height(), map.width());
    for y in 0..map.height() as i64 {
        for x in 0..map.width() as i64 {
            out.push(if map.cell_free(Cell::new(x, y, 0)) { '.' } else { '@' });
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: &[&str]) -> String {
        format!(
            "type octile\nheight {}\nwidth {}\nmap\n{}\n",
            rows.len(),
            rows[0].len(),
            rows.join("\n")
        )
    }

    #[test]
    fn all_free_map() {
        let m = parse_map(&grid(&["...", "...", "..."]), 1.0, 1).unwrap();
        assert_eq!(m.free_cell_count(0), 9);
        assert_eq!((m.width(), m.height(), m.layers()), (3, 3, 1));
    }

    #[test]
    fn single_obstacle() {
        let m = parse_map(&grid(&["...", ".@.", "..."]), 1.0, 1).unwrap();
        assert!(!m.is_free(Vec3::flat(1.5, 1.5)));
        assert!(m.is_free(Vec3::flat(0.5, 1.5)));
    }

    #[test]
    fn too_many_rows() {
        let text = "type octile\nheight 2\nwidth 3\nmap\n...\n...\n...\n";
        match parse_map(text, 1.0, 1) {
            Err(WorldError::Parse { line, .. }) => assert_eq!(line, 7),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn row_length_mismatch() {
        let text = "type octile\nheight 2\nwidth 3\nmap\n...\n..\n";
        assert!(matches!(parse_map(text, 1.0, 1), Err(WorldError::Parse { line: 6, .. })));
    }

    #[test]
    fn crlf_and_trailing_whitespace() {
        let text = "type octile\r\nheight 1\r\nwidth 3  \r\nmap\r\n.G@  \r\n";
        let m = parse_map(text, 1.0, 2).unwrap();
        assert!(m.cell_free(Cell::new(1, 0, 0)));
        assert!(!m.cell_free(Cell::new(2, 0, 0)));
        assert!(m.cell_free(Cell::new(2, 0, 1)));
    }

    #[test]
    fn bad_headers() {
        assert!(parse_map("height 1\nwidth 1\nmap\n.\n", 1.0, 1).is_err());
        assert!(parse_map("type x\nheight 0\nwidth 1\nmap\n.\n", 1.0, 1).is_err());
        assert!(parse_map("type x\nheight 1\nwidth 1\n", 1.0, 1).is_err());
        assert!(parse_map("type x\nheight 1\nwidth 1\nmap\nX\n", 1.0, 1).is_err());
    }

    #[test]
    fn out_of_bounds_is_blocked() {
        let m = GridMap::open(4, 4, 2, 0.5).unwrap();
        assert!(!m.is_free(Vec3::flat(-0.1, 1.0)));
        assert!(!m.is_free(Vec3::flat(2.0, 1.0)));
        assert!(!m.is_free(Vec3::new(1.0, 1.0, 1.0)));
        assert!(m.is_free(Vec3::new(1.0, 1.0, 0.9)));
    }

    #[test]
    fn wall_with_window() {
        let mut m = GridMap::open(6, 6, 3, 1.0).unwrap();
        let wall = CellRect { x0: 0, y0: 3, x1: 5, y1: 3 };
        m.add_wall_with_window(wall, &[(2, 3), (3, 3)], 1).unwrap();
        for l in 0..3 {
            for x in 0..6 {
                let window = l == 1 && (x == 2 || x == 3);
                assert_eq!(m.cell_free(Cell::new(x, 3, l)), window, "x={x} l={l}");
            }
        }
        // over the window at window-layer height
        assert!(m.is_free(Vec3::new(2.5, 3.5, 1.5)));
        assert!(!m.is_free(Vec3::new(2.5, 3.5, 0.0)));
        assert!(m.cell_free(Cell::new(0, 2, 0)));
    }

    #[test]
    fn wall_window_errors() {
        let mut m = GridMap::open(6, 6, 3, 1.0).unwrap();
        let wall = CellRect { x0: 0, y0: 3, x1: 5, y1: 3 };
        assert!(m.add_wall_with_window(wall, &[(2, 3)], 0).is_err());
        assert!(m.add_wall_with_window(wall, &[(2, 4)], 1).is_err());
        assert!(m.add_wall_with_window(wall, &[(2, 3)], 3).is_err());
        let bad = CellRect { x0: 0, y0: 3, x1: 6, y1: 3 };
        assert!(m.add_wall_with_window(bad, &[], 1).is_err());
    }

    #[test]
    fn segment_checks() {
        let m = parse_map(&grid(&["....", ".@..", "....", "...."]), 1.0, 1).unwrap();
        assert!(m.segment_free(Vec3::flat(0.5, 0.5), Vec3::flat(3.5, 0.5)));
        assert!(!m.segment_free(Vec3::flat(0.5, 1.5), Vec3::flat(3.5, 1.5)));
        // exact corner of the obstacle cell
        assert!(!m.segment_free(Vec3::flat(0.5, 2.5), Vec3::flat(2.5, 0.5)));
        assert!(!m.segment_free(Vec3::flat(0.5, 3.5), Vec3::flat(3.5, 0.5)));
        assert!(m.segment_free(Vec3::flat(2.5, 3.5), Vec3::flat(3.5, 0.5)));
    }

    #[test]
    fn format_roundtrip() {
        let text = grid(&["..@", "@..", "..."]);
        let m = parse_map(&text, 1.0, 1).unwrap();
        assert_eq!(parse_map(&format_map(&m), 1.0, 1).unwrap(), m);
    }

    #[test]
    fn inflated_grows_obstacles_in_plane_only() {
        let mut m = GridMap::open(7, 7, 2, 1.0).unwrap();
        m.set_cell(Cell::new(3, 3, 0), false).unwrap();
        let i = m.inflated(1.0);
        assert!(!i.cell_free(Cell::new(2, 2, 0)));
        assert!(!i.cell_free(Cell::new(4, 3, 0)));
        assert!(i.cell_free(Cell::new(1, 3, 0)));
        assert!(i.cell_free(Cell::new(3, 3, 1)));
        assert_eq!(m.inflated(0.0).free_cell_count(0), m.free_cell_count(0));
    }

    #[test]
    fn clamp_step_drops_blocked_axis() {
        let mut m = GridMap::open(4, 4, 1, 1.0).unwrap();
        m.set_cell(Cell::new(2, 1, 0), false).unwrap();
        let p = m.clamp_step(Vec3::flat(1.9, 1.5), Vec3::flat(1.0, -1.0), 0.2);
        assert_eq!(p, Vec3::flat(1.9, 1.3));
    }

    proptest::proptest! {
        #[test]
        fn clamp_step_stays_free(
            cells in proptest::collection::vec((0i64..8, 0i64..8), 0..20),
            x in 0.0f64..8.0, y in 0.0f64..8.0, ux in -3.0f64..3.0, uy in -3.0f64..3.0,
        ) {
            let mut m = GridMap::open(8, 8, 1, 1.0).unwrap();
            for (cx, cy) in cells {
                m.set_cell(Cell::new(cx, cy, 0), false).unwrap();
            }
            let p = Vec3::flat(x, y);
            proptest::prop_assume!(m.is_free(p));
            let q = m.clamp_step(p, Vec3::flat(ux, uy), 0.1);
            proptest::prop_assert!(m.is_free(q));
            proptest::prop_assert!(p.dist(q) <= Vec3::flat(ux, uy).norm() * 0.1 + 1e-12);
        }

        #[test]
        fn segment_free_is_symmetric_and_inflation_monotone(
            cells in proptest::collection::vec((0i64..10, 0i64..10), 0..25),
            a in (0.0f64..10.0, 0.0f64..10.0), b in (0.0f64..10.0, 0.0f64..10.0),
        ) {
            let mut m = GridMap::open(10, 10, 1, 1.0).unwrap();
            for (cx, cy) in cells {
                m.set_cell(Cell::new(cx, cy, 0), false).unwrap();
            }
            let (pa, pb) = (Vec3::flat(a.0, a.1), Vec3::flat(b.0, b.1));
            proptest::prop_assert_eq!(m.segment_free(pa, pb), m.segment_free(pb, pa));
            if m.inflated(1.0).segment_free(pa, pb) {
                proptest::prop_assert!(m.segment_free(pa, pb));
            }
        }
    }
}
