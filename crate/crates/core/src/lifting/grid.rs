use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::LiftError;

/// Labeled cell grid over the unit square. Columns are lettered from `A`,
/// rows numbered from `1`, so the top-left cell is `A1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    pub cols: u32,
    pub rows: u32,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { cols: 10, rows: 10 }
    }
}

impl GridSpec {
    pub const MAX_COLS: u32 = 26;

    pub fn new(cols: u32, rows: u32) -> Result<Self, LiftError> {
        if cols == 0 || rows == 0 || cols > Self::MAX_COLS {
            return Err(LiftError::BadGrid(format!("{cols}x{rows}")));
        }
        Ok(Self { cols, rows })
    }

    pub fn cell_count(&self) -> usize {
        (self.cols * self.rows) as usize
    }

    /// Cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = CellId> + '_ {
        (0..self.rows).flat_map(move |row| (0..self.cols).map(move |col| CellId { col, row }))
    }

    pub fn parse_cell(&self, text: &str) -> Result<CellId, LiftError> {
        let bad = || LiftError::BadCell {
            cell: text.to_string(),
            grid: *self,
        };
        let s = text.trim();
        let mut chars = s.chars();
        let letter = chars.next().filter(char::is_ascii_alphabetic).ok_or_else(bad)?;
        let digits = chars.as_str();
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let col = (letter.to_ascii_uppercase() as u8 - b'A') as u32;
        let row = digits.parse::<u32>().map_err(|_| bad())?;
        if col >= self.cols || row == 0 || row > self.rows {
            return Err(bad());
        }
        Ok(CellId { col, row: row - 1 })
    }

    /// Normalized `(x0, y0, x1, y1)` bounds of a cell.
    pub fn cell_bounds(&self, cell: CellId) -> (f64, f64, f64, f64) {
        let (c, r) = (cell.col as f64, cell.row as f64);
        let (w, h) = (self.cols as f64, self.rows as f64);
        (c / w, r / h, (c + 1.0) / w, (r + 1.0) / h)
    }

    pub fn centroid(&self, cell: CellId) -> (f64, f64) {
        (
            (cell.col as f64 + 0.5) / self.cols as f64,
            (cell.row as f64 + 0.5) / self.rows as f64,
        )
    }

    /// Cell containing a normalized point; points on the far edges belong to the last cell.
    pub fn cell_containing(&self, x: f64, y: f64) -> CellId {
        let col = ((x * self.cols as f64).floor().max(0.0) as u32).min(self.cols - 1);
        let row = ((y * self.rows as f64).floor().max(0.0) as u32).min(self.rows - 1);
        CellId { col, row }
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.cols, self.rows)
    }
}

impl FromStr for GridSpec {
    type Err = LiftError;

    /// Parses `CxR`, e.g. `10x10`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || LiftError::BadGrid(s.to_string());
        let (c, r) = s
            .trim()
            .split_once(['x', 'X'])
            .ok_or_else(bad)?;
        let cols = c.trim().parse().map_err(|_| bad())?;
        let rows = r.trim().parse().map_err(|_| bad())?;
        GridSpec::new(cols, rows)
    }
}

/// Zero-based cell coordinates. Displays as letter + 1-based row, e.g. `C4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellId {
    pub col: u32,
    pub row: u32,
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", (b'A' + self.col as u8) as char, self.row + 1)
    }
}

impl Serialize for CellId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Normalized center of the named cell.
pub fn cell_centroid(cell: &str, grid: &GridSpec) -> Result<(f64, f64), LiftError> {
    Ok(grid.centroid(grid.parse_cell(cell)?))
}

/// Eight-way compass heading, clockwise from image north (the top of the image).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Cardinal {
    N,
    NE,
    E,
    SE,
    S,
    SW,
    W,
    NW,
}

impl Cardinal {
    pub const ALL: [Cardinal; 8] = [
        Cardinal::N,
        Cardinal::NE,
        Cardinal::E,
        Cardinal::SE,
        Cardinal::S,
        Cardinal::SW,
        Cardinal::W,
        Cardinal::NW,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Cardinal::N => "N",
            Cardinal::NE => "NE",
            Cardinal::E => "E",
            Cardinal::SE => "SE",
            Cardinal::S => "S",
            Cardinal::SW => "SW",
            Cardinal::W => "W",
            Cardinal::NW => "NW",
        }
    }
}

impl fmt::Display for Cardinal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Cardinal {
    type Err = LiftError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .trim()
            .chars()
            .filter(|c| !matches!(c, '-' | ' ' | '_'))
            .collect::<String>()
            .to_ascii_uppercase();
        let dir = match key.as_str() {
            "N" | "NORTH" => Cardinal::N,
            "NE" | "NORTHEAST" => Cardinal::NE,
            "E" | "EAST" => Cardinal::E,
            "SE" | "SOUTHEAST" => Cardinal::SE,
            "S" | "SOUTH" => Cardinal::S,
            "SW" | "SOUTHWEST" => Cardinal::SW,
            "W" | "WEST" => Cardinal::W,
            "NW" | "NORTHWEST" => Cardinal::NW,
            _ => return Err(LiftError::BadCardinal(s.to_string())),
        };
        Ok(dir)
    }
}

pub fn cardinal_to_degrees(dir: Cardinal) -> f64 {
    Cardinal::ALL.iter().position(|&d| d == dir).expect("listed") as f64 * 45.0
}

/// Nearest heading under circular distance. An angle exactly halfway between
/// two headings resolves to the counter-clockwise one (22.5 -> N, 337.5 -> NW).
/// Non-finite input maps to N.
pub fn degrees_to_cardinal(deg: f64) -> Cardinal {
    let Ok(norm) = crate::scene::normalize_rotation(deg) else {
        return Cardinal::N;
    };
    let q = norm / 45.0;
    let base = q.floor();
    let idx = if q - base > 0.5 { base + 1.0 } else { base };
    Cardinal::ALL[(idx as usize) % 8]
}
