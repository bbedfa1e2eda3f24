//! Image-derived hint grids and the grid ⇄ pixel mapping.

mod slic;

pub use slic::{
    compute_superpixels, segment_means, SuperpixelMap, DEFAULT_COMPACTNESS, DEFAULT_SEGMENTS,
};

use crate::error::{invalid, Result};
use crate::types::{GridCell, Hint, HintGrid, HintSource, Pixel, GRID_SIZE};

/// Integer centre of the pixel block covered by grid cell `(row, col)`.
pub fn grid_cell_center(row: usize, col: usize, height: usize, width: usize) -> Result<Pixel> {
    if row >= GRID_SIZE || col >= GRID_SIZE {
        return Err(invalid!("grid cell ({row}, {col}) outside the 16x16 lattice"));
    }
    if height == 0 || width == 0 {
        return Err(invalid!("empty frame {height}x{width}"));
    }
    Ok(cell_center(GridCell::new(row, col)?, height, width))
}

/// Same as [`grid_cell_center`] for an already validated cell.
pub fn cell_center(cell: GridCell, height: usize, width: usize) -> Pixel {
    let n = GRID_SIZE * 2;
    Pixel::new(
        (2 * cell.row() + 1) * height / n,
        (2 * cell.col() + 1) * width / n,
    )
}

/// Grid cell whose pixel block contains `p`.
pub fn cell_of_pixel(p: Pixel, height: usize, width: usize) -> Result<GridCell> {
    if p.row >= height || p.col >= width {
        return Err(invalid!("pixel ({}, {}) outside {height}x{width}", p.row, p.col));
    }
    GridCell::new(p.row * GRID_SIZE / height, p.col * GRID_SIZE / width)
}

/// Fully occupied IMAGE grid: each cell takes the mean colour of the
/// superpixel under its centre pixel.
pub fn superpixels_to_grid_hints(sp: &SuperpixelMap) -> HintGrid {
    let (h, w) = sp.dims();
    let mut grid = HintGrid::empty(HintSource::Image);
    for cell in GridCell::all() {
        let rgb = sp.colour_at(cell_center(cell, h, w));
        grid.set(cell, rgb).expect("segment means stay within [0, 1]");
    }
    grid
}

/// Overlays `user` on `image`: user hints win wherever present. The result
/// keeps IMAGE as its source while each cell records its own origin.
pub fn merge_hints(user: &HintGrid, image: &HintGrid) -> Result<HintGrid> {
    if user.source() != HintSource::User {
        return Err(invalid!("merge expects a USER grid, got {:?}", user.source()));
    }
    if image.source() != HintSource::Image {
        return Err(invalid!("merge expects an IMAGE grid, got {:?}", image.source()));
    }
    let mut out = HintGrid::empty(HintSource::Image);
    for cell in GridCell::all() {
        let hint = user
            .get(cell)
            .map(|h| Hint {
                rgb: h.rgb,
                origin: HintSource::User,
            })
            .or_else(|| image.get(cell).copied());
        if let Some(h) = hint {
            out.insert(cell, h)?;
        }
    }
    Ok(out)
}
