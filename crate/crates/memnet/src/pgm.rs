//! Binary PGM (P5) output and the recall image grid.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `round(clamp(v, 0, 1) * 255)`.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// `P5\n<w> <h>\n255\n` followed by one byte per pixel, row-major.
pub fn encode_pgm(pixels: &[u8], width: usize, height: usize) -> Result<Vec<u8>> {
    if pixels.len() != width * height {
        return Err(Error::Contract {
            op: "encode_pgm",
            msg: format!("{} pixels for {width}x{height}", pixels.len()),
        });
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    Ok(out)
}

pub fn write_pgm(path: &Path, pixels: &[u8], width: usize, height: usize) -> Result<()> {
    std::fs::write(path, encode_pgm(pixels, width, height)?).map_err(|e| Error::io(path, e))
}

/// Lays out `columns[c][r]` tiles (each `tile_h x tile_w`, flattened, values
/// in [0, 1]) into one image with 1-pixel black separators. Returns
/// `(pixels, width, height)`.
pub fn image_grid(
    columns: &[Vec<Tensor>],
    tile_w: usize,
    tile_h: usize,
) -> Result<(Vec<u8>, usize, usize)> {
    let cols = columns.len();
    let rows = columns.first().map(|c| c.len()).unwrap_or(0);
    if cols == 0 || rows == 0 {
        return Err(Error::Contract {
            op: "image_grid",
            msg: "grid needs at least one tile".into(),
        });
    }
    for column in columns {
        if column.len() != rows {
            return Err(Error::Contract {
                op: "image_grid",
                msg: "ragged grid columns".into(),
            });
        }
        for tile in column {
            if tile.numel() != tile_w * tile_h {
                return Err(Error::dimension(
                    "image_grid",
                    &[tile_h, tile_w],
                    tile.shape(),
                ));
            }
        }
    }
    let width = cols * tile_w + (cols - 1);
    let height = rows * tile_h + (rows - 1);
    let mut pixels = vec![0u8; width * height];
    for (c, column) in columns.iter().enumerate() {
        for (r, tile) in column.iter().enumerate() {
            let top = r * (tile_h + 1);
            let left = c * (tile_w + 1);
            for tr in 0..tile_h {
                for tc in 0..tile_w {
                    pixels[(top + tr) * width + left + tc] =
                        quantize(tile.data()[tr * tile_w + tc]);
                }
            }
        }
    }
    Ok((pixels, width, height))
}
