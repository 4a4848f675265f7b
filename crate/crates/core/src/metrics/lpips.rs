use smis_tensor::ops::spatial::nearest_index;

use crate::metrics::extractor::Features;

/// Binary pixel mask at image resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub height: usize,
    pub width: usize,
    pub inside: Vec<bool>,
}

impl Region {
    pub fn new(height: usize, width: usize, inside: Vec<bool>) -> Self {
        assert_eq!(inside.len(), height * width);
        Region { height, width, inside }
    }

    pub fn full(height: usize, width: usize) -> Self {
        Region::new(height, width, vec![true; height * width])
    }

    pub fn complement(&self) -> Region {
        Region::new(self.height, self.width, self.inside.iter().map(|b| !b).collect())
    }

    pub fn area(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    /// Nearest-neighbor resampling to `h x w`.
    pub fn resize(&self, h: usize, w: usize) -> Vec<bool> {
        let mut out = Vec::with_capacity(h * w);
        for y in 0..h {
            let sy = nearest_index(y, self.height, h);
            for x in 0..w {
                out.push(self.inside[sy * self.width + nearest_index(x, self.width, w)]);
            }
        }
        out
    }
}

/// Sum over levels of the spatially averaged squared feature distance.
pub fn lpips_distance(a: &Features, b: &Features) -> f64 {
    a.layers
        .iter()
        .zip(&b.layers)
        .map(|(fa, fb)| {
            let d = fa.sq_distance(fb);
            d.iter().sum::<f64>() / d.len() as f64
        })
        .sum()
}

/// Per level: `(sum of per-pixel distances inside the region, pixel count)`.
pub fn masked_layer_sums(a: &Features, b: &Features, region: &Region) -> Vec<(f64, usize)> {
    a.layers
        .iter()
        .zip(&b.layers)
        .map(|(fa, fb)| {
            let inside = region.resize(fa.height, fa.width);
            let d = fa.sq_distance(fb);
            d.iter()
                .zip(&inside)
                .filter(|(_, &m)| m)
                .fold((0.0, 0), |(s, n), (v, _)| (s + v, n + 1))
        })
        .collect()
}

/// LPIPS averaged over the region only; `None` when the region is empty.
/// Levels where the downsampled region vanishes are skipped.
pub fn masked_lpips(a: &Features, b: &Features, region: &Region) -> Option<f64> {
    if region.is_empty() {
        return None;
    }
    Some(
        masked_layer_sums(a, b, region)
            .into_iter()
            .filter(|&(_, n)| n > 0)
            .map(|(s, n)| s / n as f64)
            .sum(),
    )
}
