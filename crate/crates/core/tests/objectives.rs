use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smis::metrics::{ExtractorConfig, FeatureExtractor};
use smis::networks::{build_variant, GaussianMap, ModelConfig, Networks, VariantKind};
use smis::objectives::{
    discriminator_objective, feature_matching_loss, generator_objective, hinge_d_loss, hinge_g_loss, kl_loss,
    perceptual_loss, Batch, LossWeights,
};
use smis::toydata::{render, SceneSpec};
use smis_tensor::gradcheck::check_gradients;
use smis_tensor::{Mode, Tensor, Var};

fn full(shape: &[usize], v: f64) -> Var<f64> {
    Var::constant(Tensor::full(shape, v))
}

fn rand_var(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Var<f64> {
    Var::leaf(Tensor::from_fn(shape, |_| rng.random_range(lo..hi)))
}

fn small_extractor() -> FeatureExtractor<f64> {
    FeatureExtractor::new(&ExtractorConfig { channels: vec![4, 6], ..ExtractorConfig::default() }).unwrap()
}

#[test]
fn hinge_values() {
    let scales = |v: f64| vec![full(&[2, 1, 3, 3], v), full(&[2, 1, 2, 2], v)];
    assert_eq!(hinge_d_loss(&scales(2.0), &scales(-2.0)).unwrap().item(), 0.0);
    assert_eq!(hinge_d_loss(&scales(0.0), &scales(0.0)).unwrap().item(), 2.0);
    assert_eq!(hinge_g_loss(&scales(0.5)).unwrap().item(), -0.5);
}

#[test]
fn feature_matching_values() {
    let pyramid = |v: f64| vec![vec![full(&[1, 2, 4, 4], v), full(&[1, 3, 2, 2], v)], vec![full(&[1, 2, 2, 2], v)]];
    assert_eq!(feature_matching_loss(&pyramid(0.3), &pyramid(0.3)).unwrap().item(), 0.0);
    assert!((feature_matching_loss(&pyramid(0.3), &pyramid(1.3)).unwrap().item() - 1.0).abs() < 1e-12);
    let a = feature_matching_loss(&pyramid(0.0), &pyramid(0.8)).unwrap().item();
    let b = feature_matching_loss(&pyramid(0.0), &pyramid(0.4)).unwrap().item();
    assert!((a - 2.0 * b).abs() < 1e-12);
    let bad = vec![vec![full(&[1, 2, 4, 4], 0.0)]];
    assert!(feature_matching_loss(&pyramid(0.0), &bad).is_err());
}

#[test]
fn kl_values() {
    let g = |mu: f64, lv: f64| GaussianMap { mean: full(&[1, 2, 2, 2], mu), logvar: full(&[1, 2, 2, 2], lv) };
    assert_eq!(kl_loss(&g(0.0, 0.0)).unwrap().item(), 0.0);
    assert!((kl_loss(&g(1.0, 0.0)).unwrap().item() - 0.5).abs() < 1e-15);
    let expect = 0.5 * (2.0 - 2f64.ln() - 1.0);
    assert!((kl_loss(&g(0.0, 2f64.ln())).unwrap().item() - expect).abs() < 1e-12);
    assert!((expect - 0.1534).abs() < 1e-4);
}

#[test]
fn kl_matches_gaussian_closed_form() {
    // KL(N(mu, s^2) || N(0, 1)) = ln(1/s) + (s^2 + mu^2)/2 - 1/2, averaged over elements
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let mu: Tensor<f64> = Tensor::from_fn(&[1, 4, 3, 3], |_| rng.random_range(-3.0..3.0));
        let lv: Tensor<f64> = Tensor::from_fn(&[1, 4, 3, 3], |_| rng.random_range(-4.0..4.0));
        let oracle: f64 = mu
            .data()
            .iter()
            .zip(lv.data())
            .map(|(&m, &l): (&f64, &f64)| {
                let s = (l / 2.0).exp();
                (1.0 / s).ln() + (s * s + m * m) / 2.0 - 0.5
            })
            .sum::<f64>()
            / mu.numel() as f64;
        let got = kl_loss(&GaussianMap { mean: Var::constant(mu), logvar: Var::constant(lv) }).unwrap().item();
        assert!((got - oracle).abs() <= 1e-10, "{got} vs {oracle}");
    }
}

#[test]
fn perceptual_is_zero_on_equal_inputs_and_symmetric() {
    let ex = small_extractor();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = rand_var(&[2, 3, 8, 8], -1.0, 1.0, &mut rng);
    let b = rand_var(&[2, 3, 8, 8], -1.0, 1.0, &mut rng);
    assert_eq!(perceptual_loss(&a, &a, &ex).unwrap().item(), 0.0);
    let ab = perceptual_loss(&a, &b, &ex).unwrap().item();
    let ba = perceptual_loss(&b, &a, &ex).unwrap().item();
    assert!(ab > 0.0 && (ab - ba).abs() < 1e-15);
}

#[test]
fn loss_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let tol = 1e-4;

    let real = vec![rand_var(&[2, 1, 3, 3], -2.0, 2.0, &mut rng), rand_var(&[2, 1, 2, 2], -2.0, 2.0, &mut rng)];
    let fake = vec![rand_var(&[2, 1, 3, 3], -2.0, 2.0, &mut rng), rand_var(&[2, 1, 2, 2], -2.0, 2.0, &mut rng)];
    let leaves: Vec<Var<f64>> = real.iter().chain(&fake).cloned().collect();
    let rep = check_gradients(|| hinge_d_loss(&real, &fake), &leaves, 1e-5, 1).unwrap();
    assert!(rep.passes(tol), "hinge d {}", rep.max_rel_err());
    let rep = check_gradients(|| hinge_g_loss(&fake), &fake, 1e-5, 1).unwrap();
    assert!(rep.passes(tol), "hinge g {}", rep.max_rel_err());

    let fr = vec![vec![rand_var(&[1, 2, 3, 3], -1.0, 1.0, &mut rng)], vec![rand_var(&[1, 2, 2, 2], -1.0, 1.0, &mut rng)]];
    let ff = vec![vec![rand_var(&[1, 2, 3, 3], -1.0, 1.0, &mut rng)], vec![rand_var(&[1, 2, 2, 2], -1.0, 1.0, &mut rng)]];
    let leaves: Vec<Var<f64>> = ff.iter().flatten().cloned().collect();
    let rep = check_gradients(|| feature_matching_loss(&fr, &ff), &leaves, 1e-5, 1).unwrap();
    assert!(rep.passes(tol), "fm {}", rep.max_rel_err());

    let ex = small_extractor();
    let a = Var::constant(Tensor::from_fn(&[1, 3, 8, 8], |_| rng.random_range(-1.0..1.0)));
    let b = rand_var(&[1, 3, 8, 8], -1.0, 1.0, &mut rng);
    let rep = check_gradients(|| perceptual_loss(&a, &b, &ex), &[b.clone()], 1e-5, 1).unwrap();
    assert!(rep.passes(tol), "perceptual {}", rep.max_rel_err());

    let g = GaussianMap { mean: rand_var(&[1, 4, 2, 2], -2.0, 2.0, &mut rng), logvar: rand_var(&[1, 4, 2, 2], -2.0, 2.0, &mut rng) };
    let rep = check_gradients(|| kl_loss(&g), &[g.mean.clone(), g.logvar.clone()], 1e-5, 1).unwrap();
    assert!(rep.passes(tol), "kl {}", rep.max_rel_err());
}

fn toy_batch(nets: &Networks<f64>, n: usize, size: usize) -> Batch<f64> {
    let mut images = Vec::new();
    let mut masks = Vec::new();
    for i in 0..n {
        let (img, mask) = render(&SceneSpec::sample(i as u64, 64));
        // subsample to the micro resolution
        let step = 64 / size;
        for c in 0..3 {
            for y in 0..size {
                for x in 0..size {
                    images.push(img[c * 64 * 64 + y * step * 64 + x * step]);
                }
            }
        }
        let ids = (0..size * size).map(|p| mask.get((p / size) * step, (p % size) * step)).collect();
        masks.push(smis::toydata::LabelMap::new(size, size, mask.classes(), ids).unwrap());
    }
    Batch { images: Tensor::new(&[n, 3, size, size], images).unwrap(), onehot: nets.label_tensor(&masks).unwrap() }
}

fn micro_nets(seed: u64) -> Networks<f64> {
    let mut cfg = ModelConfig::micro(VariantKind::GroupDNet, 8);
    cfg.image_size = 16;
    cfg.z_size = 4;
    build_variant(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn grads_present(store: &smis_tensor::ParamStore<f64>) -> (usize, usize) {
    let ps = store.params();
    let nonzero = ps.iter().filter(|p| p.var().grad().map(|g| g.max_abs() > 0.0).unwrap_or(false)).count();
    (nonzero, ps.len())
}

#[test]
fn steps_only_reach_their_own_parameters() {
    let nets = micro_nets(4);
    let batch = toy_batch(&nets, 2, 16);
    let ex = FeatureExtractor::new(&ExtractorConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);

    let (loss, _) = discriminator_objective(&batch, &nets, Mode::TRAIN, &mut rng).unwrap();
    loss.backward().unwrap();
    assert_eq!(grads_present(&nets.gen_store).0, 0);
    assert!(grads_present(&nets.disc_store).0 > 0);
    nets.disc_store.zero_grad();

    nets.disc_store.set_requires_grad(false);
    let (loss, _) = generator_objective(&batch, &nets, &LossWeights::default(), &ex, Mode::TRAIN, &mut rng).unwrap();
    loss.backward().unwrap();
    nets.disc_store.set_requires_grad(true);
    assert_eq!(grads_present(&nets.disc_store).0, 0);
    let (nonzero, total) = grads_present(&nets.gen_store);
    assert!(nonzero * 2 > total, "{nonzero} of {total} generator parameters received gradient");
}

#[test]
fn report_reproduces_the_weighted_sum() {
    let nets = micro_nets(6);
    let batch = toy_batch(&nets, 2, 16);
    let ex = FeatureExtractor::new(&ExtractorConfig::default()).unwrap();
    let w = LossWeights::default();
    let (_, r) = generator_objective(&batch, &nets, &w, &ex, Mode::FROZEN_TRAIN, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let sum = r.gan_g + w.feature_matching * r.fm + w.perceptual * r.perceptual + w.kl * r.kl;
    assert!((r.total - sum).abs() <= 1e-6 * sum.abs().max(1.0), "{r:?}");
    assert!(r.fm > 0.0 && r.perceptual > 0.0 && r.kl > 0.0);
    let zero = LossWeights { feature_matching: 0.0, perceptual: 0.0, kl: 0.0 };
    let (_, r0) = generator_objective(&batch, &nets, &zero, &ex, Mode::FROZEN_TRAIN, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(r0.total, r0.gan_g);
    assert_eq!(r0.gan_g, r.gan_g);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn loss_terms_are_non_negative(seed in any::<u64>(), scale in 0.01f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = vec![rand_var(&[1, 1, 3, 3], -scale, scale, &mut rng)];
        let f = vec![rand_var(&[1, 1, 3, 3], -scale, scale, &mut rng)];
        prop_assert!(hinge_d_loss(&r, &f).unwrap().item() >= 0.0);
        prop_assert!(feature_matching_loss(&[r.clone()], &[f.clone()]).unwrap().item() >= 0.0);
        let g = GaussianMap { mean: r[0].clone(), logvar: f[0].clone() };
        prop_assert!(kl_loss(&g).unwrap().item() > 0.0);
    }
}
