use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smis::blocks::{CgBlock, CgNorm, CgNormOptions, LayerSpec, NormKind};
use smis::toydata::{one_hot, LabelMap};
use smis_tensor::gradcheck::check_gradients;
use smis_tensor::ops::batch_norm;
use smis_tensor::{Mode, ParamStore, Tensor, Var};

fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn random_label(n: usize, classes: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let masks: Vec<LabelMap> = (0..n)
        .map(|_| LabelMap::new(h, w, classes, (0..h * w).map(|_| rng.random_range(0..classes as u8)).collect()).unwrap())
        .collect();
    one_hot(&masks, classes).unwrap()
}

fn block_of(t: &Tensor<f64>, groups: usize, g: usize) -> Vec<f64> {
    let (n, d, h, w) = t.dims4().unwrap();
    let per = d / groups;
    (0..n)
        .flat_map(|b| t.data()[(b * d + g * per) * h * w..(b * d + (g + 1) * per) * h * w].to_vec())
        .collect()
}

/// Shift running statistics away from their defaults so eval mode is non-trivial.
fn warm_up_stats(store: &ParamStore<f64>, rng: &mut ChaCha8Rng) {
    for b in store.buffers() {
        let mut v = b.value.borrow_mut();
        let is_var = b.name().ends_with("running_var");
        v.data_mut().iter_mut().for_each(|x| {
            *x = if is_var { rng.random_range(0.5..2.0) } else { rng.random_range(-0.5..0.5) }
        });
    }
}

#[test]
fn cgnorm_with_neutral_modulation_is_batch_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let store = ParamStore::<f64>::new();
    let cg = CgNorm::new(&store.root().sub("n"), 8, 4, 4, CgNormOptions::default(), &mut rng).unwrap();
    for conv in [&cg.gamma, &cg.beta] {
        conv.weight.var().set_value(Tensor::zeros(&conv.weight.shape())).unwrap();
    }
    cg.beta.bias.as_ref().unwrap().var().set_value(Tensor::zeros(&[8])).unwrap();
    let x = Var::constant(rand_tensor(&[2, 8, 4, 4], &mut rng));
    let label = Var::constant(random_label(2, 4, 8, 8, &mut rng));
    let y = cg.forward(&x, &label, Mode::FROZEN_TRAIN).unwrap();
    let expect = batch_norm(&x, None, None, None, true, 1e-5).unwrap();
    let diff = y.value().zip_map(&expect.value(), |a, b| (a - b).abs()).unwrap().max_abs();
    assert!(diff < 1e-12, "{diff}");
}

#[test]
fn cgnorm_label_groups_only_touch_their_feature_groups() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let store = ParamStore::<f64>::new();
    let (classes, groups) = (8, 4);
    let cg = CgNorm::new(&store.root().sub("n"), 16, classes, groups, CgNormOptions::default(), &mut rng).unwrap();
    warm_up_stats(&store, &mut rng);
    let x = Var::constant(rand_tensor(&[2, 16, 4, 4], &mut rng));
    let label = random_label(2, classes, 8, 8, &mut rng);
    let base = cg.forward(&x, &Var::constant(label.clone()), Mode::EVAL).unwrap().value().clone();
    for g in 0..groups {
        let mut zeroed = label.clone();
        let hw = 64;
        for b in 0..2 {
            for c in g * 2..g * 2 + 2 {
                zeroed.data_mut()[(b * classes + c) * hw..(b * classes + c + 1) * hw].fill(0.0);
            }
        }
        let out = cg.forward(&x, &Var::constant(zeroed), Mode::EVAL).unwrap().value().clone();
        for k in 0..groups {
            let same = block_of(&base, groups, k) == block_of(&out, groups, k);
            assert_eq!(same, k != g, "zeroed label group {g}, feature group {k}");
        }
    }
}

#[test]
fn cgnorm_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let store = ParamStore::<f64>::new();
    let cg = CgNorm::new(&store.root().sub("n"), 4, 2, 2, CgNormOptions { label_hidden: 4, ..Default::default() }, &mut rng)
        .unwrap();
    let x = Var::leaf(rand_tensor(&[2, 4, 3, 3], &mut rng));
    let label = Var::leaf(rand_tensor(&[2, 2, 6, 6], &mut rng));
    let probe = Var::constant(rand_tensor(&[2, 4, 3, 3], &mut rng));
    let f = || -> smis::Result<Var<f64>> { Ok(cg.forward(&x, &label, Mode::FROZEN_TRAIN)?.mul(&probe)?.sum()) };
    let mut leaves = vec![x.clone(), label.clone()];
    leaves.extend(store.params().iter().map(|p| p.var().clone()));
    let rep = check_gradients(f, &leaves, 1e-5, 1).unwrap();
    assert!(rep.passes(1e-4), "{:?}", rep.leaves);
}

#[test]
fn cgnorm_rejects_group_mismatch() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let store = ParamStore::<f64>::new();
    let err = CgNorm::new(&store.root().sub("dec.n"), 16, 6, 4, CgNormOptions::default(), &mut rng).err().unwrap();
    let msg = err.to_string();
    assert!(msg.contains("configuration") && msg.contains("dec.n"), "{msg}");
}

#[test]
fn cgblock_with_zeroed_main_path_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let store = ParamStore::<f64>::new();
    let spec = LayerSpec { channels: 8, groups: 4 };
    let block = CgBlock::new(&store.root().sub("b"), spec, spec, 4, CgNormOptions::default(), true, &mut rng).unwrap();
    block.zero_main_output().unwrap();
    let x = Var::constant(rand_tensor(&[2, 8, 4, 4], &mut rng));
    let label = Var::constant(random_label(2, 4, 4, 4, &mut rng));
    let y = block.forward(&x, &label, Mode::TRAIN).unwrap();
    assert_eq!(*y.value(), *x.value());
}

#[test]
fn cgblock_eight_to_four_merges_adjacent_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let store = ParamStore::<f64>::new();
    let block = CgBlock::new(
        &store.root().sub("b"),
        LayerSpec { channels: 16, groups: 8 },
        LayerSpec { channels: 8, groups: 4 },
        8,
        CgNormOptions::default(),
        false,
        &mut rng,
    )
    .unwrap();
    warm_up_stats(&store, &mut rng);
    let x = rand_tensor(&[1, 16, 4, 4], &mut rng);
    let label = Var::constant(random_label(1, 8, 4, 4, &mut rng));
    let base = block.forward(&Var::constant(x.clone()), &label, Mode::EVAL).unwrap().value().clone();
    for k in 0..8 {
        let mut xk = x.clone();
        xk.data_mut()[k * 2 * 16..(k + 1) * 2 * 16].fill(0.0);
        let out = block.forward(&Var::constant(xk), &label, Mode::EVAL).unwrap().value().clone();
        for g2 in 0..4 {
            let moved = block_of(&base, 4, g2) != block_of(&out, 4, g2);
            assert_eq!(moved, g2 == k / 2, "input block {k}, output block {g2}");
        }
    }
}

#[test]
fn cgblock_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let store = ParamStore::<f64>::new();
    let opts = CgNormOptions { label_hidden: 4, norm: NormKind::Batch };
    let block = CgBlock::new(
        &store.root().sub("b"),
        LayerSpec { channels: 8, groups: 2 },
        LayerSpec { channels: 4, groups: 1 },
        2,
        opts,
        true,
        &mut rng,
    )
    .unwrap();
    // settle the power-iteration vectors, then differentiate with them frozen
    let x = Var::leaf(rand_tensor(&[2, 8, 3, 3], &mut rng));
    let label = Var::constant(random_label(2, 2, 3, 3, &mut rng));
    for _ in 0..30 {
        block.forward(&x, &label, Mode::TRAIN).unwrap();
    }
    let probe = Var::constant(rand_tensor(&[2, 4, 3, 3], &mut rng));
    let f = || -> smis::Result<Var<f64>> { Ok(block.forward(&x, &label, Mode::FROZEN_TRAIN)?.mul(&probe)?.sum()) };
    let mut leaves = vec![x.clone()];
    leaves.extend(store.params().iter().map(|p| p.var().clone()));
    let rep = check_gradients(f, &leaves, 1e-5, 1).unwrap();
    assert!(rep.passes(1e-4), "max {}: {:?}", rep.max_rel_err(), rep.leaves.iter().filter(|l| l.rel_err > 1e-4).collect::<Vec<_>>());
}

#[test]
fn cgblock_rejects_increasing_groups_naming_both_specs() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let store = ParamStore::<f64>::new();
    let err = CgBlock::new(
        &store.root().sub("b"),
        LayerSpec { channels: 8, groups: 2 },
        LayerSpec { channels: 8, groups: 4 },
        4,
        CgNormOptions::default(),
        false,
        &mut rng,
    )
    .err()
    .unwrap()
    .to_string();
    assert!(err.contains("(D=8, G=2)") && err.contains("(D=8, G=4)"), "{err}");
}

#[test]
fn cgblock_preserves_spatial_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let store = ParamStore::<f32>::new();
    let block = CgBlock::new(
        &store.root(),
        LayerSpec { channels: 8, groups: 4 },
        LayerSpec { channels: 12, groups: 2 },
        4,
        CgNormOptions::default(),
        true,
        &mut rng,
    )
    .unwrap();
    let x = Var::constant(Tensor::<f32>::ones(&[1, 8, 5, 7]));
    let label = Var::constant(Tensor::<f32>::ones(&[1, 4, 10, 14]));
    assert_eq!(block.forward(&x, &label, Mode::TRAIN).unwrap().shape(), vec![1, 12, 5, 7]);
}
