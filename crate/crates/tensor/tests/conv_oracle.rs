//! The im2col kernel against the direct loop nest and against G independent
//! single-group convolutions over channel slices.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smis_tensor::ops::{concat_channels, conv2d_with, ConvAlgo, ConvSpec};
use smis_tensor::{Tensor, Var};

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn rel_diff(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    let scale = a.max_abs().max(b.max_abs()).max(1e-12);
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
        / scale
}

#[derive(Debug)]
struct Case {
    x: Tensor<f64>,
    w: Tensor<f64>,
    b: Tensor<f64>,
    gy_seed: u64,
    spec: ConvSpec,
}

/// Forward value and gradients (input, weight, bias) under a fixed random
/// upstream gradient.
fn run(case: &Case, algo: ConvAlgo) -> [Tensor<f64>; 4] {
    let x = Var::leaf(case.x.clone());
    let w = Var::leaf(case.w.clone());
    let b = Var::leaf(case.b.clone());
    let y = conv2d_with(&x, &w, Some(&b), case.spec, algo).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(case.gy_seed);
    let probe = Var::constant(random(&y.shape(), &mut rng));
    y.mul(&probe).unwrap().sum().backward().unwrap();
    let out = y.value().clone();
    [out, x.grad().unwrap(), w.grad().unwrap(), b.grad().unwrap()]
}

/// Same quantities computed as G separate single-group convolutions.
fn run_split(case: &Case) -> [Tensor<f64>; 4] {
    let g = case.spec.groups;
    let x = Var::leaf(case.x.clone());
    let dout = case.w.shape()[0];
    let cin = case.x.shape()[1] / g;
    let cout = dout / g;
    let per = case.w.numel() / g;
    let mut outs = Vec::new();
    let mut ws = Vec::new();
    let mut bs = Vec::new();
    for k in 0..g {
        let mut wshape = case.w.shape().to_vec();
        wshape[0] = cout;
        let wk = Var::leaf(Tensor::new(&wshape, case.w.data()[k * per..(k + 1) * per].to_vec()).unwrap());
        let bk = Var::leaf(Tensor::new(&[cout], case.b.data()[k * cout..(k + 1) * cout].to_vec()).unwrap());
        let xk = x.slice_channels(k * cin, cin).unwrap();
        let spec = ConvSpec::new(case.spec.stride, case.spec.padding, 1);
        outs.push(conv2d_with(&xk, &wk, Some(&bk), spec, ConvAlgo::Im2col).unwrap());
        ws.push(wk);
        bs.push(bk);
    }
    let y = concat_channels(&outs).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(case.gy_seed);
    let probe = Var::constant(random(&y.shape(), &mut rng));
    y.mul(&probe).unwrap().sum().backward().unwrap();
    let gw: Vec<f64> = ws.iter().flat_map(|w| w.grad().unwrap().into_data()).collect();
    let gb: Vec<f64> = bs.iter().flat_map(|b| b.grad().unwrap().into_data()).collect();
    let out = y.value().clone();
    [
        out,
        x.grad().unwrap(),
        Tensor::new(case.w.shape(), gw).unwrap(),
        Tensor::new(case.b.shape(), gb).unwrap(),
    ]
}

fn arb_case() -> impl Strategy<Value = Case> {
    (1usize..=4, 1usize..=3, 1usize..=3, 1usize..=2, 0usize..=2, 1usize..=2, 3usize..=7, any::<u64>())
        .prop_filter_map("kernel must fit", |(g, cin, cout, k, p, s, hw, seed)| {
            let kernel = [1, 3, 4][k.min(2)];
            if hw + 2 * p < kernel {
                return None;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 1 + (seed % 2) as usize;
            Some(Case {
                x: random(&[n, g * cin, hw, hw + 1], &mut rng),
                w: random(&[g * cout, cin, kernel, kernel], &mut rng),
                b: random(&[g * cout], &mut rng),
                gy_seed: seed ^ 0x5eed,
                spec: ConvSpec::new(s, p, g),
            })
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn im2col_matches_naive(case in arb_case()) {
        let fast = run(&case, ConvAlgo::Im2col);
        let slow = run(&case, ConvAlgo::Naive);
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!(rel_diff(a, b) < 1e-6);
        }
    }

    #[test]
    fn grouped_equals_split_single_group(case in arb_case()) {
        let grouped = run(&case, ConvAlgo::Im2col);
        let split = run_split(&case);
        for (a, b) in grouped.iter().zip(&split) {
            prop_assert!(rel_diff(a, b) < 1e-6);
        }
    }

    #[test]
    fn zeroing_one_input_group_only_moves_its_output_group(case in arb_case(), pick in 0usize..4) {
        let g = case.spec.groups;
        let target = pick % g;
        let base = run(&case, ConvAlgo::Im2col)[0].clone();
        let (n, din, h, w) = case.x.dims4().unwrap();
        let cin = din / g;
        let mut x = case.x.clone();
        for b in 0..n {
            for c in target * cin..(target + 1) * cin {
                x.data_mut()[(b * din + c) * h * w..][..h * w].iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let moved = run(&Case { x, w: case.w.clone(), b: case.b.clone(), gy_seed: case.gy_seed, spec: case.spec }, ConvAlgo::Im2col)[0].clone();
        let (_, dout, oh, ow) = base.dims4().unwrap();
        let cout = dout / g;
        for b in 0..n {
            for c in 0..dout {
                if c / cout == target {
                    continue;
                }
                let plane = (b * dout + c) * oh * ow;
                prop_assert_eq!(&base.data()[plane..plane + oh * ow], &moved.data()[plane..plane + oh * ow]);
            }
        }
    }
}
