use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use smis::metrics::{
    diversity_report, fid, lpips_distance, masked_layer_sums, masked_lpips, mcsd_mocd, overall_diversity,
    ExtractorConfig, FeatureExtractor, MetricsConfig, Region, RenderGenerator, SynthesisModel,
};
use smis::toydata::{render, LabelMap, SceneSpec};
use smis_tensor::Tensor;

fn images(n: usize, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(&[n, 3, 16, 16], |_| rng.random_range(-1.0..1.0))
}

fn scene_mask(seed: u64) -> LabelMap {
    render(&SceneSpec::sample(seed, 64)).1
}

/// Ignores its code entirely.
struct Constant;

impl SynthesisModel for Constant {
    fn classes(&self) -> usize {
        8
    }
    fn latent_shape(&self) -> (usize, usize) {
        (2, 1)
    }
    fn generate(&self, codes: &Tensor<f64>, masks: &[LabelMap]) -> smis::Result<Tensor<f64>> {
        let n = codes.shape()[0];
        let (h, w) = (masks[0].height(), masks[0].width());
        Ok(Tensor::from_fn(&[n, 3, h, w], |i| ((i % (h * w)) as f64 / (h * w) as f64) - 0.5))
    }
    fn encode(&self, images: &Tensor<f64>, _: &[LabelMap]) -> smis::Result<(Tensor<f64>, Tensor<f64>)> {
        let z = Tensor::zeros(&[images.shape()[0], 16, 1, 1]);
        Ok((z.clone(), z))
    }
}

#[test]
fn lpips_is_a_symmetric_non_negative_distance() {
    let ex = FeatureExtractor::<f64>::new(&ExtractorConfig::default()).unwrap();
    let f = ex.embed(&images(3, 1)).unwrap();
    assert_eq!(lpips_distance(&f[0], &f[0]), 0.0);
    assert_eq!(lpips_distance(&f[0], &f[1]), lpips_distance(&f[1], &f[0]));
    // a small perturbation still registers
    let mut b = images(1, 1);
    b.data_mut()[17] += 0.05;
    let g = ex.embed(&b).unwrap();
    assert!(lpips_distance(&f[0], &g[0]) > 0.0);
    assert!(lpips_distance(&f[0], &f[2]) > lpips_distance(&f[0], &g[0]));
}

#[test]
fn full_region_reduces_to_the_plain_distance() {
    let ex = FeatureExtractor::<f64>::new(&ExtractorConfig::default()).unwrap();
    let f = ex.embed(&images(2, 2)).unwrap();
    let m = masked_lpips(&f[0], &f[1], &Region::full(16, 16)).unwrap();
    assert!((m - lpips_distance(&f[0], &f[1])).abs() < 1e-6);
    assert!(masked_lpips(&f[0], &f[1], &Region::new(16, 16, vec![false; 256])).is_none());
}

#[test]
fn changes_outside_the_region_are_invisible_to_a_pointwise_extractor() {
    let ex = FeatureExtractor::<f64>::new(&ExtractorConfig::pointwise(5)).unwrap();
    let a = images(1, 3);
    let inside: Vec<bool> = (0..256).map(|p| (p / 16) < 7).collect();
    let mut b = a.clone();
    for c in 0..3 {
        for p in 0..256 {
            if !inside[p] {
                b.data_mut()[c * 256 + p] = -b.data()[c * 256 + p];
            }
        }
    }
    let (fa, fb) = (ex.embed(&a).unwrap(), ex.embed(&b).unwrap());
    let region = Region::new(16, 16, inside);
    let masked = masked_lpips(&fa[0], &fb[0], &region).unwrap();
    let full = lpips_distance(&fa[0], &fb[0]);
    assert!(full > 0.0);
    assert!(masked < 0.05 * full, "{masked} vs {full}");
}

#[test]
fn region_and_complement_partition_each_layer() {
    let ex = FeatureExtractor::<f64>::new(&ExtractorConfig::pointwise(6)).unwrap();
    let f = ex.embed(&images(2, 4)).unwrap();
    let mask = scene_mask(9);
    let small: Vec<bool> = (0..256).map(|p| mask.get((p / 16) * 4, (p % 16) * 4) == 0).collect();
    let region = Region::new(16, 16, small);
    let r = masked_layer_sums(&f[0], &f[1], &region);
    let rc = masked_layer_sums(&f[0], &f[1], &region.complement());
    let all = masked_layer_sums(&f[0], &f[1], &Region::full(16, 16));
    for l in 0..all.len() {
        let mean = |(s, n): (f64, usize)| if n == 0 { 0.0 } else { s / n as f64 };
        let recombined = mean(r[l]) * r[l].1 as f64 + mean(rc[l]) * rc[l].1 as f64;
        let whole = mean(all[l]) * all[l].1 as f64;
        assert!((recombined - whole).abs() <= 1e-6 * whole.max(1e-12), "layer {l}");
    }
}

fn cfg(n: usize, m: usize, seed: u64) -> MetricsConfig {
    MetricsConfig { n, m, seed, batch_size: 8, masks: 2, ..MetricsConfig::default() }
}

#[test]
fn code_blind_model_has_no_diversity() {
    let ex = FeatureExtractor::<f64>::new(&ExtractorConfig::default()).unwrap();
    let masks = [scene_mask(1), scene_mask(2)];
    let r = diversity_report(&Constant, &masks, &cfg(10, 5, 0), &ex).unwrap();
    assert_eq!((r.mcsd, r.mocd), (0.0, 0.0));
    assert_eq!(overall_diversity(&Constant, &masks, 3, &ex, 4, 0).unwrap(), 0.0);
}

#[test]
fn per_class_oracle_has_zero_other_class_diversity() {
    let ex = FeatureExtractor::<f64>::new(&ExtractorConfig::pointwise(3)).unwrap();
    let oracle = RenderGenerator::new(8);
    let masks = [scene_mask(1), scene_mask(2)];
    let r = diversity_report(&oracle, &masks, &cfg(20, 10, 7), &ex).unwrap();
    assert_eq!(r.mocd, 0.0);
    assert!(r.mcsd > 0.0);
    let again = diversity_report(&oracle, &masks, &cfg(20, 10, 7), &ex).unwrap();
    assert_eq!(r, again);
    let present: std::collections::BTreeSet<usize> =
        masks.iter().flat_map(|m| m.present_classes()).collect();
    assert_eq!(r.per_class.iter().map(|d| d.class).collect::<std::collections::BTreeSet<_>>(), present);
}

#[test]
fn oracle_overall_diversity_is_the_area_weighted_class_diversity() {
    let ex = FeatureExtractor::<f64>::new(&ExtractorConfig::pointwise(3)).unwrap();
    let oracle = RenderGenerator::new(8);
    let mask = scene_mask(4);
    let overall = overall_diversity(&oracle, &[mask.clone()], 300, &ex, 32, 1).unwrap();
    let per = mcsd_mocd(&oracle, &mask, &cfg(100, 300, 2), &ex, 2).unwrap();
    let hist = mask.histogram();
    let total = (mask.height() * mask.width()) as f64;
    let expect: f64 = per.iter().map(|d| d.class_specific * hist[d.class] as f64 / total).sum();
    assert!((overall - expect).abs() < 0.1 * expect, "{overall} vs {expect}");
    assert!(overall >= 0.0);
}

#[test]
fn fid_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let gauss = |n: usize, d: usize, shift: &[f64], rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..d).map(|j| Distribution::<f64>::sample(&StandardNormal, rng) + shift.get(j).copied().unwrap_or(0.0)).collect())
            .collect()
    };
    let a = gauss(500, 6, &[], &mut rng);
    assert!(fid(&a, &a).unwrap().abs() < 1e-6);
    assert!(fid(&a[..1], &a).is_err());

    let mu = [0.8, -0.5, 0.3, 0.0, 1.0, -0.2];
    let target: f64 = mu.iter().map(|v| v * v).sum();
    let x = gauss(10_000, 6, &[], &mut rng);
    let y = gauss(10_000, 6, &mu, &mut rng);
    let d = fid(&x, &y).unwrap();
    assert!((d - target).abs() < 0.05 * target, "{d} vs {target}");

    // a random orthogonal matrix from the QR of a Gaussian matrix
    let q = DMatrix::<f64>::from_fn(6, 6, |_, _| StandardNormal.sample(&mut rng)).qr().q();
    let rot = |s: &[Vec<f64>]| -> Vec<Vec<f64>> {
        s.iter()
            .map(|r: &Vec<f64>| {
                let v: nalgebra::DVector<f64> = &q * nalgebra::DVector::from_column_slice(r);
                v.iter().copied().collect()
            })
            .collect()
    };
    let (xs, ys) = (&x[..800], &y[..800]);
    let plain = fid(xs, ys).unwrap();
    let rotated = fid(&rot(xs), &rot(ys)).unwrap();
    assert!((plain - rotated).abs() < 1e-4, "{plain} vs {rotated}");
    assert!(plain >= 0.0);
}
