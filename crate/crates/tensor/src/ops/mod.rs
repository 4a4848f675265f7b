pub mod conv;
pub mod elementwise;
pub mod norm;
pub mod spatial;

pub use conv::{conv2d, conv2d_with, ConvAlgo, ConvSpec};
pub use elementwise::{concat_batch, concat_channels};
pub use norm::{batch_norm, group_norm, instance_norm, RunningStats};
pub use spatial::{avg_pool, linear, resize_nearest, spatial_mean, upsample_nearest};
