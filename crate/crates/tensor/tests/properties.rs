use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smis_tensor::checkpoint::{self, Record};
use smis_tensor::init::glorot_uniform;
use smis_tensor::ops::{avg_pool, batch_norm, upsample_nearest};
use smis_tensor::param::ParamStore;
use smis_tensor::spectral::spectral_normalize;
use smis_tensor::{SpectralState, Tensor, Var};

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(-3.0..3.0))
}

fn normalized(w: Tensor<f64>, groups: usize, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let store = ParamStore::<f64>::new();
    let sn = SpectralState::init(w.shape(), groups, &mut rng).unwrap();
    let p = store.root().param_with("w", w, Some(sn)).unwrap();
    spectral_normalize(&p, 40).unwrap().value().clone()
}

fn max_diff(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn batch_norm_standardizes_each_channel(n in 1usize..4, d in 1usize..4, hw in 2usize..5, seed in any::<u64>()) {
        let x = Var::constant(random(&[n, d, hw, hw], seed));
        let out = batch_norm(&x, None, None, None, true, 1e-5).unwrap();
        let y = out.value();
        let m = (n * hw * hw) as f64;
        for c in 0..d {
            let vals: Vec<f64> = (0..n)
                .flat_map(|b| y.data()[(b * d + c) * hw * hw..][..hw * hw].to_vec())
                .collect();
            let mean = vals.iter().sum::<f64>() / m;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
            prop_assert!(mean.abs() < 1e-5);
            // var = s / (s + eps) for the raw biased variance s
            prop_assert!(var <= 1.0 + 1e-9 && var > 0.99, "var {var}");
        }
    }

    #[test]
    fn spectral_norm_is_scale_invariant_and_idempotent(rows in 1usize..5, cols in 1usize..6, k in 1.0f64..20.0, seed in any::<u64>()) {
        let w = random(&[rows * 2, cols], seed);
        let a = normalized(w.clone(), 2, seed ^ 1);
        let b = normalized(w.map(|v| v * k), 2, seed ^ 1);
        prop_assert!(max_diff(&a, &b) < 1e-2);
        let again = normalized(a.clone(), 2, seed ^ 2);
        prop_assert!(max_diff(&a, &again) < 1e-2);
    }

    #[test]
    fn upsample_then_pool_is_identity(factor in 1usize..4, seed in any::<u64>()) {
        let x = Var::constant(random(&[2, 2, 3, 2], seed));
        let back = avg_pool(&upsample_nearest(&x, factor).unwrap(), factor).unwrap();
        prop_assert!(max_diff(&back.value(), &x.value()) < 1e-12);
    }

    #[test]
    fn checkpoint_roundtrip_preserves_names_and_values(seed in any::<u64>(), count in 1usize..6) {
        let records: Vec<Record> = (0..count)
            .map(|i| Record::from_tensor(format!("net.layer{i}.weight"), &random(&[i + 1, 2], seed + i as u64)))
            .chain(std::iter::once(Record::bytes("__meta__", b"{\"k\":1}".to_vec())))
            .collect();
        let mut buf = Vec::new();
        checkpoint::write_records(&mut buf, &records).unwrap();
        prop_assert_eq!(checkpoint::read_records(buf.as_slice()).unwrap(), records);
    }
}

#[test]
fn orthogonal_weight_is_unchanged() {
    let (c, s) = (0.6f64, 0.8f64);
    let w = Tensor::new(&[3, 3], vec![c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0]).unwrap();
    let out = normalized(w.clone(), 1, 3);
    assert!(max_diff(&out, &w) < 1e-2);
}

#[test]
fn diag_three_one_has_unit_top_singular_value() {
    let w = Tensor::new(&[2, 2], vec![3.0, 0.0, 0.0, 1.0]).unwrap();
    let out = normalized(w, 1, 11);
    assert!((out.data()[0] - 1.0).abs() < 1e-2);
    assert!((out.data()[3] - 1.0 / 3.0).abs() < 1e-2);
}

#[test]
fn batch_norm_hand_values() {
    // channel values {1, 3}: mean 2, biased std 1
    let x = Var::constant(Tensor::new(&[2, 1, 1, 1], vec![1.0, 3.0]).unwrap());
    let y = batch_norm(&x, None, None, None, true, 1e-5).unwrap();
    let expect = 1.0 / (1.0f64 + 1e-5).sqrt();
    assert!((y.value().data()[0] + expect).abs() < 1e-12);
    assert!((y.value().data()[1] - expect).abs() < 1e-12);

    let g = Var::constant(Tensor::full(&[1], 2.0));
    let b = Var::constant(Tensor::full(&[1], 5.0));
    let z = batch_norm(&x, Some(&g), Some(&b), None, true, 1e-5).unwrap();
    for (zi, yi) in z.value().data().iter().zip(y.value().data()) {
        assert!((zi - (2.0 * yi + 5.0)).abs() < 1e-12);
    }

    let c = Var::constant(Tensor::full(&[3, 2, 2, 2], 4.0));
    let y = batch_norm(&c, None, None, None, true, 1e-5).unwrap();
    assert!(y.value().data().iter().all(|&v| v == 0.0));
}

#[test]
fn nearest_upsample_replicates_blocks() {
    let x = Var::constant(Tensor::new(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let up = upsample_nearest(&x, 2).unwrap();
    #[rustfmt::skip]
    let expect = [1.0, 1.0, 2.0, 2.0,
                  1.0, 1.0, 2.0, 2.0,
                  3.0, 3.0, 4.0, 4.0,
                  3.0, 3.0, 4.0, 4.0];
    assert_eq!(up.value().data(), &expect);
    assert_eq!(avg_pool(&up, 2).unwrap().value().data(), x.value().data());
    assert!(upsample_nearest(&x, 0).is_err());
    assert!(avg_pool(&up, 3).is_err());
}

#[test]
fn glorot_unit_fans_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let t: Tensor<f64> = glorot_uniform(&[1, 1], 1, &mut rng);
    assert!(t.data()[0].abs() <= 3f64.sqrt());
}
