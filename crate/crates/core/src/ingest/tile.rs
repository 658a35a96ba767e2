use image::{GenericImage, RgbImage};

use super::IngestError;

pub const MAX_TILED_FRAMES: usize = 9;

/// (columns, rows) of the grid used for `n` frames.
pub fn grid_shape(n: usize) -> (usize, usize) {
    let mut cols = 1;
    while cols * cols < n {
        cols += 1;
    }
    (cols, n.div_ceil(cols))
}

/// Compose frames into one image in row-major order. Cells are sized to the
/// largest frame; smaller frames sit at the cell's top-left on black.
pub fn tile_frames(frames: &[RgbImage]) -> Result<RgbImage, IngestError> {
    match frames.len() {
        0 => return Err(IngestError::NoFrames("tile".into())),
        1 => return Ok(frames[0].clone()),
        n if n > MAX_TILED_FRAMES => return Err(IngestError::TooManyFrames(n)),
        _ => {}
    }
    let (cols, rows) = grid_shape(frames.len());
    let cell_w = frames.iter().map(RgbImage::width).max().unwrap_or(0);
    let cell_h = frames.iter().map(RgbImage::height).max().unwrap_or(0);
    let mut canvas = RgbImage::new(cell_w * cols as u32, cell_h * rows as u32);
    for (i, frame) in frames.iter().enumerate() {
        let x = (i % cols) as u32 * cell_w;
        let y = (i / cols) as u32 * cell_h;
        canvas
            .copy_from(frame, x, y)
            .map_err(|e| IngestError::Image(e.to_string()))?;
    }
    Ok(canvas)
}
