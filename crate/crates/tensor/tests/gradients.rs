//! Central finite differences against `backward()` for every primitive.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smis_tensor::gradcheck::check_gradients;
use smis_tensor::ops::{
    avg_pool, batch_norm, concat_batch, concat_channels, conv2d, group_norm, instance_norm, linear, resize_nearest,
    spatial_mean, upsample_nearest, ConvSpec, RunningStats,
};
use smis_tensor::param::ParamStore;
use smis_tensor::spectral::spectral_normalize;
use smis_tensor::{Result, SpectralState, Tensor, Var};

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn rand_leaf(shape: &[usize], rng: &mut ChaCha8Rng) -> Var<f64> {
    Var::leaf(Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0)))
}

/// Random fixed projection so the loss sees every output element differently.
fn project(y: &Var<f64>, seed: u64) -> Result<Var<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = Var::constant(Tensor::from_fn(&y.shape(), |_| rng.random_range(-1.0..1.0)));
    Ok(y.mul(&w)?.sum())
}

fn assert_grad(name: &str, f: impl Fn() -> Result<Var<f64>>, leaves: &[Var<f64>]) {
    let report = check_gradients(f, leaves, H, 1).unwrap();
    assert!(report.passes(TOL), "{name}: {:?}", report.leaves);
}

#[test]
fn conv2d_two_groups() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = rand_leaf(&[2, 4, 5, 5], &mut rng);
    let w = rand_leaf(&[6, 2, 3, 3], &mut rng);
    let b = rand_leaf(&[6], &mut rng);
    let f = || project(&conv2d(&x, &w, Some(&b), ConvSpec::new(2, 1, 2))?, 9);
    assert_grad("conv2d", f, &[x.clone(), w.clone(), b.clone()]);
}

#[test]
fn conv2d_pointwise_four_groups() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = rand_leaf(&[1, 8, 3, 4], &mut rng);
    let w = rand_leaf(&[4, 2, 1, 1], &mut rng);
    let f = || project(&conv2d(&x, &w, None, ConvSpec::new(1, 0, 4))?, 3);
    assert_grad("conv2d 1x1", f, &[x.clone(), w.clone()]);
}

#[test]
fn batch_norm_training_and_eval() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = rand_leaf(&[3, 2, 3, 3], &mut rng);
    let g = rand_leaf(&[2], &mut rng);
    let b = rand_leaf(&[2], &mut rng);
    let f = || project(&batch_norm(&x, Some(&g), Some(&b), None, true, 1e-5)?, 4);
    assert_grad("batch_norm train", f, &[x.clone(), g.clone(), b.clone()]);

    let f = || {
        let mut mean = vec![0.3, -0.2];
        let mut var = vec![1.5, 0.7];
        let rs = RunningStats { mean: &mut mean, var: &mut var, momentum: 0.0 };
        project(&batch_norm(&x, Some(&g), Some(&b), Some(rs), false, 1e-5)?, 5)
    };
    assert_grad("batch_norm eval", f, &[x.clone(), g.clone(), b.clone()]);
}

#[test]
fn group_and_instance_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = rand_leaf(&[2, 4, 3, 3], &mut rng);
    let g = rand_leaf(&[4], &mut rng);
    let b = rand_leaf(&[4], &mut rng);
    let f = || project(&group_norm(&x, 2, Some(&g), Some(&b), 1e-5)?, 6);
    assert_grad("group_norm", f, &[x.clone(), g.clone(), b.clone()]);
    let f = || project(&instance_norm(&x, 1e-5)?, 7);
    assert_grad("instance_norm", f, &[x.clone()]);
}

#[test]
fn elementwise_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // keep clear of kinks at zero and at the clamp bounds
    let x = Var::leaf(Tensor::from_fn(&[1, 2, 3, 3], |i| {
        let v: f64 = rng.random_range(0.1..0.9);
        if i % 2 == 0 { v } else { -v }
    }));
    let y = rand_leaf(&[1, 2, 3, 3], &mut rng);
    let s = rand_leaf(&[1], &mut rng);
    let cases: Vec<(&str, Box<dyn Fn() -> Result<Var<f64>>>)> = vec![
        ("relu", Box::new(|| project(&x.relu(), 1))),
        ("leaky_relu", Box::new(|| project(&x.leaky_relu(0.2), 2))),
        ("tanh", Box::new(|| project(&x.tanh(), 3))),
        ("exp", Box::new(|| project(&x.exp(), 4))),
        ("abs", Box::new(|| project(&x.abs(), 5))),
        ("square", Box::new(|| project(&x.square()?, 6))),
        ("clamp", Box::new(|| project(&x.clamp(-0.5, 0.5), 7))),
        ("mul", Box::new(|| project(&x.mul(&y)?, 8))),
        ("sub", Box::new(|| project(&x.sub(&y)?.scale(3.0).add_scalar(1.0).neg(), 9))),
        ("mul_scalar_var", Box::new(|| project(&x.mul_scalar_var(&s)?, 10))),
        ("mean", Box::new(|| Ok(x.add(&y)?.mean()))),
        ("reshape", Box::new(|| project(&x.reshape(&[2, 9])?, 11))),
        ("concat/slice batch", Box::new(|| {
            let c = concat_batch(&[x.clone(), y.clone()])?;
            project(&c.slice_batch(1, 1)?, 13)
        })),
        ("concat/slice", Box::new(|| {
            let c = concat_channels(&[x.clone(), y.clone()])?;
            project(&c.slice_channels(1, 2)?, 12)
        })),
    ];
    for (name, f) in &cases {
        assert_grad(name, f, &[x.clone(), y.clone(), s.clone()]);
    }
}

#[test]
fn spatial_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = rand_leaf(&[2, 3, 4, 4], &mut rng);
    assert_grad("upsample", || project(&upsample_nearest(&x, 2)?, 1), &[x.clone()]);
    assert_grad("resize down", || project(&resize_nearest(&x, 3, 2)?, 2), &[x.clone()]);
    assert_grad("resize up", || project(&resize_nearest(&x, 7, 5)?, 3), &[x.clone()]);
    assert_grad("avg_pool", || project(&avg_pool(&x, 2)?, 4), &[x.clone()]);
    assert_grad("spatial_mean", || project(&spatial_mean(&x)?, 5), &[x.clone()]);
}

#[test]
fn linear_layer() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = rand_leaf(&[3, 5], &mut rng);
    let w = rand_leaf(&[4, 5], &mut rng);
    let b = rand_leaf(&[4], &mut rng);
    let f = || project(&linear(&x, &w, Some(&b))?, 6);
    assert_grad("linear", f, &[x.clone(), w.clone(), b.clone()]);
}

#[test]
fn spectral_normalized_weight() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let store = ParamStore::<f64>::new();
    let init = Tensor::from_fn(&[4, 2, 3, 3], |_| rng.random_range(-1.0..1.0));
    let sn = SpectralState::init(&[4, 2, 3, 3], 2, &mut rng).unwrap();
    let p = store.root().param_with("w", init, Some(sn)).unwrap();
    // converge the vectors, then hold them fixed for differentiation
    spectral_normalize(&p, 50).unwrap();
    let f = || project(&spectral_normalize(&p, 0)?, 7);
    assert_grad("spectral_normalize", f, &[p.var().clone()]);
}
