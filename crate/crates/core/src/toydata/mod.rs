//! Synthetic scenes with per-class ground-truth style.

mod dataset;
mod encode;
mod scene;

pub use dataset::{
    dequantize, generate, image_from_tensor, load, load_mask, load_rgb, quantize, read_manifest, save_mask,
    save_png, scene_seed, splitmix64, Sample, MANIFEST,
};
pub use encode::{argmax_masks, one_hot, repeat_for_classes, split_by_class};
pub use scene::{
    paint, render, shade, Blob, Circle, ClassStyle, LabelMap, Layout, SceneSpec, Square, Stripe, CLASS_NAMES,
    DEFAULT_SIZE, NUM_CLASSES,
};
