//! Room layouts and their text format.
//!
//! ```text
//! acrg-layout 1
//! id 3
//! size 10 8
//! categories 16
//! targets 1 3
//! object A 1 mid
//! object b 3 low
//! grid
//! ..........
//! .##...A...
//! ...
//! ```
//!
//! Grid characters: `.` floor, `#` wall, anything else is an object id from the
//! header table. Each object id appears exactly once in the grid.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Action, AgentPose, SimError};

pub const LAYOUT_MAGIC: &str = "acrg-layout";
pub const LAYOUT_VERSION: u32 = 1;
pub const MIN_GRID: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeightLevel {
    Low,
    Mid,
    High,
}

impl HeightLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            HeightLevel::Low => "low",
            HeightLevel::Mid => "mid",
            HeightLevel::High => "high",
        }
    }

    pub fn parse(s: &str) -> Option<HeightLevel> {
        match s {
            "low" => Some(HeightLevel::Low),
            "mid" => Some(HeightLevel::Mid),
            "high" => Some(HeightLevel::High),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacedObject {
    pub category: usize,
    pub x: i32,
    pub y: i32,
    pub level: HeightLevel,
}

/// Immutable room: wall mask, object placements and the designated target categories.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomLayout {
    pub id: u32,
    width: usize,
    height: usize,
    walls: Vec<bool>,
    objects: Vec<PlacedObject>,
    categories: usize,
    targets: Vec<usize>,
    /// Object index per cell, for O(1) lookups.
    #[serde(skip)]
    occupancy: Vec<Option<u16>>,
}

impl RoomLayout {
    pub fn new(
        id: u32,
        width: usize,
        height: usize,
        walls: Vec<bool>,
        objects: Vec<PlacedObject>,
        categories: usize,
        targets: Vec<usize>,
    ) -> Result<Self, SimError> {
        if walls.len() != width * height {
            return Err(SimError::InvalidLayout(format!(
                "wall mask has {} cells, expected {}",
                walls.len(),
                width * height
            )));
        }
        let mut layout = RoomLayout {
            id,
            width,
            height,
            walls,
            objects,
            categories,
            targets,
            occupancy: vec![None; width * height],
        };
        layout.validate()?;
        Ok(layout)
    }

    fn validate(&mut self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidLayout(m));
        if self.width < MIN_GRID || self.height < MIN_GRID {
            return bad(format!("grid {}x{} is smaller than {MIN_GRID}x{MIN_GRID}", self.width, self.height));
        }
        if self.categories == 0 {
            return bad("category count must be positive".into());
        }
        for i in 0..self.objects.len() {
            let o = self.objects[i];
            if !self.in_bounds(o.x, o.y) {
                return bad(format!("object {i} at ({}, {}) is out of bounds", o.x, o.y));
            }
            if o.category >= self.categories {
                return bad(format!("object {i} has category {} >= {}", o.category, self.categories));
            }
            let cell = self.cell_index(o.x, o.y);
            if self.walls[cell] {
                return bad(format!("object {i} at ({}, {}) sits on a wall", o.x, o.y));
            }
            if self.occupancy[cell].is_some() {
                return bad(format!("two objects share cell ({}, {})", o.x, o.y));
            }
            self.occupancy[cell] = Some(i as u16);
        }
        if self.targets.is_empty() {
            return bad("layout designates no target categories".into());
        }
        for &t in &self.targets {
            if t >= self.categories {
                return bad(format!("target category {t} >= {}", self.categories));
            }
            if !self.objects.iter().any(|o| o.category == t) {
                return bad(format!("target category {t} has no instance"));
            }
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn categories(&self) -> usize {
        self.categories
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn objects(&self) -> &[PlacedObject] {
        &self.objects
    }

    #[inline]
    pub fn in_bounds(&self, x: i32, y: i32) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    #[inline]
    fn cell_index(&self, x: i32, y: i32) -> usize {
        y as usize * self.width + x as usize
    }

    /// Walls and everything outside the grid.
    #[inline]
    pub fn is_wall(&self, x: i32, y: i32) -> bool {
        !self.in_bounds(x, y) || self.walls[self.cell_index(x, y)]
    }

    #[inline]
    pub fn object_at(&self, x: i32, y: i32) -> Option<usize> {
        if !self.in_bounds(x, y) {
            return None;
        }
        self.occupancy[self.cell_index(x, y)].map(usize::from)
    }

    /// Cells the agent cannot enter and rays cannot pass: walls, out-of-bounds, objects.
    #[inline]
    pub fn is_blocked(&self, x: i32, y: i32) -> bool {
        self.is_wall(x, y) || self.object_at(x, y).is_some()
    }

    /// In-bounds cells free of walls and objects.
    pub fn free_cells(&self) -> impl Iterator<Item = (i32, i32)> + '_ {
        (0..self.height as i32)
            .flat_map(move |y| (0..self.width as i32).map(move |x| (x, y)))
            .filter(move |&(x, y)| !self.is_blocked(x, y))
    }

    pub fn instances(&self, category: usize) -> impl Iterator<Item = &PlacedObject> + '_ {
        self.objects.iter().filter(move |o| o.category == category)
    }

    pub fn is_valid_pose(&self, pose: &AgentPose) -> bool {
        !self.is_blocked(pose.x, pose.y)
    }

    /// Kinematics of one action. MoveAhead into a blocked cell and Done leave the pose unchanged.
    pub fn apply(&self, pose: AgentPose, action: Action) -> AgentPose {
        let mut next = pose;
        match action {
            Action::MoveAhead => {
                let (dx, dy) = pose.heading.step();
                let (nx, ny) = (pose.x + dx, pose.y + dy);
                if !self.is_blocked(nx, ny) {
                    next.x = nx;
                    next.y = ny;
                }
            }
            Action::RotateLeft => next.heading = pose.heading.left(),
            Action::RotateRight => next.heading = pose.heading.right(),
            Action::LookUp => next.pitch = pose.pitch.up(),
            Action::LookDown => next.pitch = pose.pitch.down(),
            Action::Done => {}
        }
        next
    }

    /// Two layouts with the same wall mask and object placements describe the same room.
    pub fn same_room(&self, other: &RoomLayout) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.walls == other.walls
            && self.objects == other.objects
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{LAYOUT_MAGIC} {LAYOUT_VERSION}");
        let _ = writeln!(out, "id {}", self.id);
        let _ = writeln!(out, "size {} {}", self.width, self.height);
        let _ = writeln!(out, "categories {}", self.categories);
        let targets: Vec<String> = self.targets.iter().map(|t| t.to_string()).collect();
        let _ = writeln!(out, "targets {}", targets.join(" "));
        for (i, o) in self.objects.iter().enumerate() {
            let _ = writeln!(out, "object {} {} {}", object_char(i), o.category, o.level.as_str());
        }
        let _ = writeln!(out, "grid");
        for y in 0..self.height as i32 {
            for x in 0..self.width as i32 {
                let c = if self.walls[self.cell_index(x, y)] {
                    '#'
                } else if let Some(i) = self.object_at(x, y) {
                    object_char(i)
                } else {
                    '.'
                };
                out.push(c);
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, SimError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with("//"));
        let err = |line: usize, msg: String| SimError::Parse { line: line + 1, msg };

        let (n, header) = lines.next().ok_or_else(|| err(0, "empty layout file".into()))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(LAYOUT_MAGIC) {
            return Err(err(n, format!("expected '{LAYOUT_MAGIC}' header")));
        }
        match parts.next().and_then(|v| v.parse::<u32>().ok()) {
            Some(LAYOUT_VERSION) => {}
            other => return Err(err(n, format!("unsupported layout version {other:?}"))),
        }

        let mut id = None;
        let mut size = None;
        let mut categories = None;
        let mut targets = None;
        let mut table: Vec<(char, usize, HeightLevel)> = Vec::new();
        let mut grid_start = None;
        for (n, line) in lines.by_ref() {
            let mut f = line.split_whitespace();
            let key = f.next().unwrap_or_default();
            let rest: Vec<&str> = f.collect();
            let num = |s: &str| s.parse::<usize>().map_err(|_| err(n, format!("bad number '{s}'")));
            match key {
                "id" if rest.len() == 1 => id = Some(num(rest[0])? as u32),
                "size" if rest.len() == 2 => size = Some((num(rest[0])?, num(rest[1])?)),
                "categories" if rest.len() == 1 => categories = Some(num(rest[0])?),
                "targets" => targets = Some(rest.iter().map(|s| num(s)).collect::<Result<Vec<_>, _>>()?),
                "object" if rest.len() == 3 => {
                    let mut chars = rest[0].chars();
                    let c = chars
                        .next()
                        .filter(|_| chars.next().is_none())
                        .ok_or_else(|| err(n, format!("object id must be a single character, got '{}'", rest[0])))?;
                    if c == '.' || c == '#' {
                        return Err(err(n, format!("object id '{c}' is reserved")));
                    }
                    if table.iter().any(|(d, ..)| *d == c) {
                        return Err(err(n, format!("duplicate object id '{c}'")));
                    }
                    let level = HeightLevel::parse(rest[2])
                        .ok_or_else(|| err(n, format!("unknown height level '{}'", rest[2])))?;
                    table.push((c, num(rest[1])?, level));
                }
                "grid" if rest.is_empty() => {
                    grid_start = Some(n);
                    break;
                }
                _ => return Err(err(n, format!("unrecognized header line '{line}'"))),
            }
        }
        let grid_line = grid_start.ok_or_else(|| err(n, "missing 'grid' section".into()))?;
        let id = id.ok_or_else(|| err(grid_line, "missing 'id'".into()))?;
        let (width, height) = size.ok_or_else(|| err(grid_line, "missing 'size'".into()))?;
        let categories = categories.ok_or_else(|| err(grid_line, "missing 'categories'".into()))?;
        let targets = targets.ok_or_else(|| err(grid_line, "missing 'targets'".into()))?;

        let rows: Vec<(usize, &str)> = lines.collect();
        if rows.len() != height {
            return Err(err(grid_line, format!("grid has {} rows, header says {height}", rows.len())));
        }
        let mut walls = vec![false; width * height];
        let mut placed: Vec<Option<(i32, i32)>> = vec![None; table.len()];
        for (y, (n, row)) in rows.iter().enumerate() {
            let row = row.trim_end();
            if row.chars().count() != width {
                return Err(err(*n, format!("row has {} cells, header says {width}", row.chars().count())));
            }
            for (x, c) in row.chars().enumerate() {
                match c {
                    '.' => {}
                    '#' => walls[y * width + x] = true,
                    _ => {
                        let i = table
                            .iter()
                            .position(|(d, ..)| *d == c)
                            .ok_or_else(|| err(*n, format!("unknown object id '{c}'")))?;
                        if placed[i].is_some() {
                            return Err(err(*n, format!("object id '{c}' placed twice")));
                        }
                        placed[i] = Some((x as i32, y as i32));
                    }
                }
            }
        }
        let mut objects = Vec::with_capacity(table.len());
        for ((c, category, level), pos) in table.iter().zip(placed) {
            let (x, y) = pos.ok_or_else(|| err(grid_line, format!("object id '{c}' not placed in grid")))?;
            objects.push(PlacedObject { category: *category, x, y, level: *level });
        }
        RoomLayout::new(id, width, height, walls, objects, categories, targets)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        RoomLayout::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), SimError> {
        fs::write(path, self.to_text()).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))
    }
}

fn object_char(i: usize) -> char {
    const IDS: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";
    IDS.get(i).map_or('?', |&b| b as char)
}
