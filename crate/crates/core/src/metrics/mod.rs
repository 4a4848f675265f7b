//! Perceptual distances, per-class diversity and FID.

mod diversity;
mod extractor;
mod fid;
mod lpips;
mod model;
mod oracle;

pub use diversity::{diversity_report, mcsd_mocd, normal_tensor, overall_diversity, ClassDiversity, DiversityReport, MetricsConfig};
pub use extractor::{ExtractorConfig, FeatureExtractor, FeatureMap, Features};
pub use fid::fid;
pub use lpips::{lpips_distance, masked_layer_sums, masked_lpips, Region};
pub use model::SynthesisModel;
pub use oracle::RenderGenerator;
