//! On-disk dataset: `images/NNNNN.png` (RGB8), `masks/NNNNN.png` (8-bit
//! class ids) and `manifest.tsv` with one `image_path<TAB>mask_path` line per
//! scene, paths relative to the manifest. Pixel values map as
//! `q = round((x + 1) * 127.5)` and back as `x = q / 127.5 - 1`.

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, RgbImage};
use rayon::prelude::*;
use smis_tensor::{Float, Tensor};

use crate::error::{Result, SmisError};
use crate::toydata::{render, LabelMap, SceneSpec};

pub const MANIFEST: &str = "manifest.tsv";

pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of scene `index` under `master`.
pub fn scene_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

pub fn quantize(x: f64) -> u8 {
    ((x + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

pub fn dequantize(q: u8) -> f64 {
    q as f64 / 127.5 - 1.0
}

/// One loaded scene, kept in its 8-bit form.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// Interleaved RGB, row-major.
    pub rgb: Vec<u8>,
    pub mask: LabelMap,
}

impl Sample {
    pub fn from_render(image: &[f64], mask: LabelMap) -> Self {
        let hw = mask.height() * mask.width();
        let rgb = (0..hw * 3).map(|i| quantize(image[(i % 3) * hw + i / 3])).collect();
        Sample { rgb, mask }
    }

    /// `[3, H, W]` values in `[-1, 1]`.
    pub fn image<T: Float>(&self) -> Tensor<T> {
        let hw = self.mask.height() * self.mask.width();
        Tensor::from_fn(&[3, self.mask.height(), self.mask.width()], |i| {
            T::from_f64c(dequantize(self.rgb[(i % hw) * 3 + i / hw]))
        })
    }
}

pub fn image_from_tensor<T: Float>(t: &Tensor<T>) -> Result<RgbImage> {
    let (c, h, w) = match t.shape() {
        [c, h, w] => (*c, *h, *w),
        [1, c, h, w] => (*c, *h, *w),
        s => return Err(SmisError::invalid(format!("expected a [3, H, W] image, got {s:?}"))),
    };
    if c != 3 {
        return Err(SmisError::invalid(format!("expected 3 channels, got {c}")));
    }
    let hw = h * w;
    let raw = (0..hw * 3)
        .map(|i| quantize(t.data()[(i % 3) * hw + i / 3].to_f64c()))
        .collect();
    RgbImage::from_raw(w as u32, h as u32, raw).ok_or_else(|| SmisError::invalid("image buffer size"))
}

pub fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| SmisError::io(dir, e))?;
    }
    img.save(path).map_err(|source| SmisError::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_mask(mask: &LabelMap, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| SmisError::io(dir, e))?;
    }
    let img = GrayImage::from_raw(mask.width() as u32, mask.height() as u32, mask.ids().to_vec())
        .ok_or_else(|| SmisError::invalid("mask buffer size"))?;
    img.save(path).map_err(|source| SmisError::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_mask(path: &Path, classes: usize) -> Result<LabelMap> {
    let img = image::open(path)
        .map_err(|source| SmisError::Image {
            path: path.to_path_buf(),
            source,
        })?
        .into_luma8();
    let (w, h) = img.dimensions();
    LabelMap::new(h as usize, w as usize, classes, img.into_raw())
        .map_err(|e| SmisError::data(path, e.to_string()))
}

pub fn load_rgb(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let img = image::open(path)
        .map_err(|source| SmisError::Image {
            path: path.to_path_buf(),
            source,
        })?
        .into_rgb8();
    let (w, h) = img.dimensions();
    Ok((h as usize, w as usize, img.into_raw()))
}

/// Render `count` scenes and write them with a manifest under `out_dir`.
pub fn generate(count: usize, seed: u64, size: usize, out_dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(out_dir).map_err(|e| SmisError::io(out_dir, e))?;
    let names: Vec<(String, String)> = (0..count)
        .map(|i| (format!("images/{i:05}.png"), format!("masks/{i:05}.png")))
        .collect();
    names.par_iter().enumerate().try_for_each(|(i, (img_rel, mask_rel))| {
        let spec = SceneSpec::sample(scene_seed(seed, i as u64), size);
        let (img, mask) = render(&spec);
        let sample = Sample::from_render(&img, mask);
        let rgb = RgbImage::from_raw(size as u32, size as u32, sample.rgb).expect("buffer sized from mask");
        save_png(&rgb, &out_dir.join(img_rel))?;
        save_mask(&sample.mask, &out_dir.join(mask_rel))
    })?;
    let manifest: String = names.iter().map(|(a, b)| format!("{a}\t{b}\n")).collect();
    let path = out_dir.join(MANIFEST);
    fs::write(&path, manifest).map_err(|e| SmisError::io(&path, e))?;
    Ok(path)
}

/// `(image, mask)` path pairs from a manifest, resolved against its directory.
pub fn read_manifest(manifest: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    let text = fs::read_to_string(manifest).map_err(|e| SmisError::io(manifest, e))?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let mut cols = line.split('\t');
            match (cols.next(), cols.next(), cols.next()) {
                (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => Ok((base.join(a), base.join(b))),
                _ => Err(SmisError::data(
                    manifest,
                    format!("line {}: expected image_path<TAB>mask_path", n + 1),
                )),
            }
        })
        .collect()
}

pub fn load(manifest: &Path, classes: usize) -> Result<Vec<Sample>> {
    read_manifest(manifest)?
        .par_iter()
        .map(|(img_path, mask_path)| {
            let (h, w, rgb) = load_rgb(img_path)?;
            let mask = load_mask(mask_path, classes)?;
            if (mask.height(), mask.width()) != (h, w) {
                return Err(SmisError::data(img_path, "image and mask sizes differ"));
            }
            Ok(Sample { rgb, mask })
        })
        .collect()
}
