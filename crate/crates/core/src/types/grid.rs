use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::frame::Rgb;
use crate::error::{invalid, Error, Result};

/// Side length of the hint lattice.
pub const GRID_SIZE: usize = 16;
pub const GRID_CELLS: usize = GRID_SIZE * GRID_SIZE;

/// A cell of the 16×16 hint lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "(usize, usize)", into = "(usize, usize)")]
pub struct GridCell {
    row: u8,
    col: u8,
}

impl GridCell {
    pub fn new(row: usize, col: usize) -> Result<Self> {
        if row >= GRID_SIZE || col >= GRID_SIZE {
            return Err(invalid!(
                "grid cell ({row}, {col}) outside the {GRID_SIZE}x{GRID_SIZE} lattice"
            ));
        }
        Ok(Self {
            row: row as u8,
            col: col as u8,
        })
    }

    pub fn row(&self) -> usize {
        self.row as usize
    }

    pub fn col(&self) -> usize {
        self.col as usize
    }

    pub fn linear(&self) -> usize {
        self.row() * GRID_SIZE + self.col()
    }

    fn from_linear(i: usize) -> Self {
        Self {
            row: (i / GRID_SIZE) as u8,
            col: (i % GRID_SIZE) as u8,
        }
    }

    /// All 256 cells in row-major order.
    pub fn all() -> impl Iterator<Item = GridCell> {
        (0..GRID_CELLS).map(Self::from_linear)
    }
}

impl TryFrom<(usize, usize)> for GridCell {
    type Error = Error;

    fn try_from((row, col): (usize, usize)) -> Result<Self> {
        Self::new(row, col)
    }
}

impl From<GridCell> for (usize, usize) {
    fn from(c: GridCell) -> Self {
        (c.row(), c.col())
    }
}

impl fmt::Display for GridCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HintSource {
    /// Colours placed by the user.
    User,
    /// Colours derived from the frame's superpixels.
    Image,
    /// Mask-filtered mix of the two, ready for the colourizer.
    Refined,
}

/// An occupied cell. `origin` tracks where the colour came from, which
/// matters once user and image hints are mixed in one grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hint {
    pub rgb: Rgb,
    pub origin: HintSource,
}

/// 16×16 colour-hint lattice with per-cell occupancy. Unoccupied cells carry
/// no colour at all; accessors return `None` for them.
#[derive(Debug, Clone, PartialEq)]
pub struct HintGrid {
    cells: Box<[Option<Hint>; GRID_CELLS]>,
    source: HintSource,
}

impl HintGrid {
    pub fn empty(source: HintSource) -> Self {
        Self {
            cells: Box::new([None; GRID_CELLS]),
            source,
        }
    }

    pub fn source(&self) -> HintSource {
        self.source
    }

    pub fn with_source(mut self, source: HintSource) -> Self {
        self.source = source;
        self
    }

    pub fn get(&self, cell: GridCell) -> Option<&Hint> {
        self.cells[cell.linear()].as_ref()
    }

    pub fn colour(&self, cell: GridCell) -> Option<Rgb> {
        self.get(cell).map(|h| h.rgb)
    }

    pub fn is_occupied(&self, cell: GridCell) -> bool {
        self.cells[cell.linear()].is_some()
    }

    /// Places a hint whose origin is the grid's own source.
    pub fn set(&mut self, cell: GridCell, rgb: Rgb) -> Result<()> {
        self.insert(
            cell,
            Hint {
                rgb,
                origin: self.source,
            },
        )
    }

    pub fn insert(&mut self, cell: GridCell, hint: Hint) -> Result<()> {
        if hint.rgb.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid!("hint colour {:?} outside [0, 1]", hint.rgb));
        }
        self.cells[cell.linear()] = Some(hint);
        Ok(())
    }

    pub fn clear(&mut self, cell: GridCell) {
        self.cells[cell.linear()] = None;
    }

    pub fn occupied(&self) -> impl Iterator<Item = (GridCell, &Hint)> {
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(i, h)| h.as_ref().map(|h| (GridCell::from_linear(i), h)))
    }

    pub fn occupied_cells(&self) -> BTreeSet<GridCell> {
        self.occupied().map(|(c, _)| c).collect()
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|h| h.is_some()).count()
    }
}

#[derive(Serialize, Deserialize)]
struct WireCell {
    r: usize,
    c: usize,
    rgb: Rgb,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    origin: Option<HintSource>,
}

#[derive(Serialize, Deserialize)]
struct WireGrid {
    cells: Vec<WireCell>,
    source: HintSource,
}

impl Serialize for HintGrid {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let cells = self
            .occupied()
            .map(|(cell, h)| WireCell {
                r: cell.row(),
                c: cell.col(),
                rgb: h.rgb,
                origin: (h.origin != self.source).then_some(h.origin),
            })
            .collect();
        WireGrid {
            cells,
            source: self.source,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for HintGrid {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let wire = WireGrid::deserialize(d)?;
        let mut grid = HintGrid::empty(wire.source);
        for cell in wire.cells {
            let at = GridCell::new(cell.r, cell.c).map_err(D::Error::custom)?;
            if grid.is_occupied(at) {
                return Err(D::Error::custom(format!("cell {at} listed twice")));
            }
            let origin = cell.origin.unwrap_or(wire.source);
            grid.insert(at, Hint { rgb: cell.rgb, origin })
                .map_err(D::Error::custom)?;
        }
        Ok(grid)
    }
}
