use std::path::Path;

use image::{Rgb, RgbImage};
use smis_tensor::Tensor;

use crate::error::{Result, SmisError};
use crate::toydata::{quantize, save_png, LabelMap};

/// Background pixels between tiles.
pub const PAD: usize = 2;

/// Split `[N, 3, H, W]` into `N` channel-major tiles.
pub fn tiles(images: &Tensor<f64>) -> Result<Vec<Vec<f64>>> {
    let (n, c, h, w) = images.dims4()?;
    let per = c * h * w;
    Ok((0..n).map(|i| images.data()[i * per..(i + 1) * per].to_vec()).collect())
}

/// Class colours on a fixed palette, as a `[3, H, W]` tile in `[-1, 1]`.
pub fn mask_tile(mask: &LabelMap) -> Vec<f64> {
    let hw = mask.height() * mask.width();
    let mut out = vec![0.0; 3 * hw];
    for (p, &id) in mask.ids().iter().enumerate() {
        let hue = (id as f64 * 0.618_034) % 1.0;
        for k in 0..3 {
            let phase = hue + k as f64 / 3.0;
            out[k * hw + p] = (phase * std::f64::consts::TAU).cos() * 0.8;
        }
    }
    out
}

/// Arrange `[3, h, w]` tiles row-major with `cols` columns on a white background.
pub fn compose(tiles: &[Vec<f64>], h: usize, w: usize, cols: usize) -> Result<RgbImage> {
    if tiles.is_empty() || cols == 0 {
        return Err(SmisError::invalid("grid needs at least one tile and one column"));
    }
    let rows = tiles.len().div_ceil(cols);
    let width = cols * w + (cols + 1) * PAD;
    let height = rows * h + (rows + 1) * PAD;
    let mut img = RgbImage::from_pixel(width as u32, height as u32, Rgb([255, 255, 255]));
    for (i, t) in tiles.iter().enumerate() {
        if t.len() != 3 * h * w {
            return Err(SmisError::invalid(format!("tile {i} has {} values, expected {}", t.len(), 3 * h * w)));
        }
        let (r, c) = (i / cols, i % cols);
        let (x0, y0) = (PAD + c * (w + PAD), PAD + r * (h + PAD));
        for y in 0..h {
            for x in 0..w {
                let px = |k: usize| quantize(t[k * h * w + y * w + x]);
                img.put_pixel((x0 + x) as u32, (y0 + y) as u32, Rgb([px(0), px(1), px(2)]));
            }
        }
    }
    Ok(img)
}

/// One row per sample: the mask, then the generated image.
pub fn sample_grid(images: &Tensor<f64>, masks: &[LabelMap]) -> Result<RgbImage> {
    let (_, _, h, w) = images.dims4()?;
    let mut all = Vec::new();
    for (t, m) in tiles(images)?.into_iter().zip(masks) {
        all.push(mask_tile(m));
        all.push(t);
    }
    compose(&all, h, w, 2)
}

pub fn save_grid(img: &RgbImage, path: &Path) -> Result<()> {
    save_png(img, path)
}
