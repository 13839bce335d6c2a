//! Autodiff gradients against central finite differences (h = 1e-3).
//!
//! Each check builds `out = op(inputs)` and the scalar `L = Σ out ⊙ R` for a fixed
//! random `R`. The analytic gradient comes from one backward pass; the numeric one
//! re-runs the forward pass with each input element nudged by ±h and reduces the
//! f32 outputs in f64.

use gbi_core::tape::{ConvParams, Tape, Var};
use gbi_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

const H: f32 = 1e-3;
const TOL: f64 = 1e-3;
/// Gradient magnitude below which the error is measured against this floor instead.
/// f32 forward passes resolve a ±h difference quotient only to ~1e-4 absolute, so
/// a pure relative error is meaningless for near-zero gradient entries.
const FLOOR: f64 = 1.0;
const SEEDS: u64 = 100;

type Build = dyn Fn(&mut Tape, &[Var]) -> Var;

fn weighted(out: &Tensor, r: &[f32]) -> f64 {
    out.data().iter().zip(r).map(|(&o, &w)| o as f64 * w as f64).sum()
}

fn forward(build: &Build, inputs: &[Tensor]) -> Tensor {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let out = build(&mut tape, &vars);
    tape.value(out).clone()
}

/// Returns the max relative error over every input element.
fn max_rel_error(build: &Build, inputs: &[Tensor], rng: &mut impl Rng) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.variable(t.clone())).collect();
    let out = build(&mut tape, &vars);
    let out_shape = tape.shape(out).to_vec();
    let r: Vec<f32> = (0..tape.value(out).numel()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let rv = tape.constant(Tensor::new(out_shape, r.clone()).unwrap());
    let prod = tape.mul(out, rv).unwrap();
    let loss = tape.sum(prod);
    let grads = tape.backward(loss).unwrap();

    let mut worst = 0.0f64;
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads.get_or_zeros(vars[k], input.shape());
        for i in 0..input.numel() {
            let mut plus = inputs.to_vec();
            let mut minus = inputs.to_vec();
            let mut pd = plus[k].data().to_vec();
            pd[i] += H;
            let mut md = minus[k].data().to_vec();
            md[i] -= H;
            // The representable step, not the nominal 2h.
            let step = (pd[i] - md[i]) as f64;
            plus[k] = Tensor::new(input.shape().to_vec(), pd).unwrap();
            minus[k] = Tensor::new(input.shape().to_vec(), md).unwrap();
            let numeric = (weighted(&forward(build, &plus), &r) - weighted(&forward(build, &minus), &r)) / step;
            let a = analytic.data()[i] as f64;
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
            worst = worst.max(err);
        }
    }
    worst
}

fn rand_tensor(rng: &mut impl Rng, shape: &[usize], lo: f32, hi: f32) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Values bounded away from zero so kinks (relu) sit outside the ±h stencil.
fn away_from_zero(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(0.05f32..1.0);
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn rand_shape(rng: &mut impl Rng, rank: usize) -> Vec<usize> {
    (0..rank).map(|_| rng.random_range(1..5)).collect()
}

fn run(name: &str, case: impl Fn(&mut Xoshiro256PlusPlus) -> (Box<Build>, Vec<Tensor>)) {
    let mut worst = 0.0f64;
    for seed in 0..SEEDS {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let (build, inputs) = case(&mut rng);
        let err = max_rel_error(&*build, &inputs, &mut rng);
        assert!(err < TOL, "{name}: seed {seed} rel err {err:.2e}");
        worst = worst.max(err);
    }
    println!("{name}: worst rel err {worst:.2e}");
}

#[test]
fn binary_elementwise() {
    run("add", |rng| {
        let s = rand_shape(rng, 2);
        (Box::new(|t: &mut Tape, v: &[Var]| t.add(v[0], v[1]).unwrap()), vec![rand_tensor(rng, &s, -1.0, 1.0), rand_tensor(rng, &s, -1.0, 1.0)])
    });
    run("sub", |rng| {
        let s = rand_shape(rng, 3);
        (Box::new(|t: &mut Tape, v: &[Var]| t.sub(v[0], v[1]).unwrap()), vec![rand_tensor(rng, &s, -1.0, 1.0), rand_tensor(rng, &s, -1.0, 1.0)])
    });
    run("mul", |rng| {
        let s = rand_shape(rng, 2);
        (Box::new(|t: &mut Tape, v: &[Var]| t.mul(v[0], v[1]).unwrap()), vec![rand_tensor(rng, &s, -1.0, 1.0), rand_tensor(rng, &s, -1.0, 1.0)])
    });
    run("div", |rng| {
        let s = rand_shape(rng, 2);
        (Box::new(|t: &mut Tape, v: &[Var]| t.div(v[0], v[1]).unwrap()), vec![rand_tensor(rng, &s, -1.0, 1.0), rand_tensor(rng, &s, 0.5, 2.0)])
    });
    run("mul scalar broadcast", |rng| {
        let s = rand_shape(rng, 2);
        (Box::new(|t: &mut Tape, v: &[Var]| t.mul(v[0], v[1]).unwrap()), vec![rand_tensor(rng, &s, -1.0, 1.0), rand_tensor(rng, &[1], -1.0, 1.0)])
    });
}

#[test]
fn unary_elementwise() {
    run("relu", |rng| {
        let s = rand_shape(rng, 2);
        (Box::new(|t: &mut Tape, v: &[Var]| t.relu(v[0])), vec![away_from_zero(rng, &s)])
    });
    run("sigmoid", |rng| {
        let s = rand_shape(rng, 2);
        (Box::new(|t: &mut Tape, v: &[Var]| t.sigmoid(v[0])), vec![rand_tensor(rng, &s, -3.0, 3.0)])
    });
    run("tanh", |rng| {
        let s = rand_shape(rng, 2);
        (Box::new(|t: &mut Tape, v: &[Var]| t.tanh(v[0])), vec![rand_tensor(rng, &s, -2.0, 2.0)])
    });
    run("exp", |rng| {
        let s = rand_shape(rng, 2);
        (Box::new(|t: &mut Tape, v: &[Var]| t.exp(v[0])), vec![rand_tensor(rng, &s, -1.0, 1.0)])
    });
    run("log", |rng| {
        let s = rand_shape(rng, 2);
        (Box::new(|t: &mut Tape, v: &[Var]| t.log(v[0])), vec![rand_tensor(rng, &s, 0.5, 2.0)])
    });
    run("softplus", |rng| {
        let s = rand_shape(rng, 2);
        (Box::new(|t: &mut Tape, v: &[Var]| t.softplus(v[0])), vec![rand_tensor(rng, &s, -3.0, 3.0)])
    });
    run("scale", |rng| {
        let s = rand_shape(rng, 2);
        let c = rng.random_range(-2.0f32..2.0);
        (Box::new(move |t: &mut Tape, v: &[Var]| t.scale(v[0], c)), vec![rand_tensor(rng, &s, -1.0, 1.0)])
    });
}

#[test]
fn matmul_and_bias() {
    run("matmul", |rng| {
        let (m, k, n) = (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..5));
        (
            Box::new(|t: &mut Tape, v: &[Var]| t.matmul(v[0], v[1]).unwrap()),
            vec![rand_tensor(rng, &[m, k], -1.0, 1.0), rand_tensor(rng, &[k, n], -1.0, 1.0)],
        )
    });
    run("add_row", |rng| {
        let (m, n) = (rng.random_range(1..5), rng.random_range(1..5));
        (
            Box::new(|t: &mut Tape, v: &[Var]| t.add_row(v[0], v[1]).unwrap()),
            vec![rand_tensor(rng, &[m, n], -1.0, 1.0), rand_tensor(rng, &[n], -1.0, 1.0)],
        )
    });
    run("add_channel", |rng| {
        let s = rand_shape(rng, 4);
        (
            Box::new(|t: &mut Tape, v: &[Var]| t.add_channel(v[0], v[1]).unwrap()),
            vec![rand_tensor(rng, &s, -1.0, 1.0), rand_tensor(rng, &[s[1]], -1.0, 1.0)],
        )
    });
}

#[test]
fn structural() {
    run("concat_cols", |rng| {
        let rows = rng.random_range(1..4);
        let (a, b) = (rng.random_range(1..4), rng.random_range(1..4));
        (
            Box::new(|t: &mut Tape, v: &[Var]| t.concat_cols(&[v[0], v[1]]).unwrap()),
            vec![rand_tensor(rng, &[rows, a], -1.0, 1.0), rand_tensor(rng, &[rows, b], -1.0, 1.0)],
        )
    });
    run("slice_cols", |rng| {
        let (rows, cols) = (rng.random_range(1..4), rng.random_range(2..6));
        let start = rng.random_range(0..cols - 1);
        let end = rng.random_range(start + 1..=cols);
        (
            Box::new(move |t: &mut Tape, v: &[Var]| t.slice_cols(v[0], start, end).unwrap()),
            vec![rand_tensor(rng, &[rows, cols], -1.0, 1.0)],
        )
    });
    run("reshape+mean", |rng| {
        let s = rand_shape(rng, 3);
        let n: usize = s.iter().product();
        (
            Box::new(move |t: &mut Tape, v: &[Var]| {
                let r = t.reshape(v[0], &[n]).unwrap();
                let sq = t.square(r);
                t.mean(sq)
            }),
            vec![rand_tensor(rng, &s, -1.0, 1.0)],
        )
    });
    run("mean", |rng| {
        let s = rand_shape(rng, 2);
        (
            Box::new(|t: &mut Tape, v: &[Var]| {
                let e = t.exp(v[0]);
                t.mean(e)
            }),
            vec![rand_tensor(rng, &s, -1.0, 1.0)],
        )
    });
}

#[test]
fn softmax_family() {
    run("softmax", |rng| {
        let s = rand_shape(rng, 3);
        let axis = rng.random_range(0..3);
        (Box::new(move |t: &mut Tape, v: &[Var]| t.softmax(v[0], axis).unwrap()), vec![rand_tensor(rng, &s, -2.0, 2.0)])
    });
    run("log_softmax", |rng| {
        let s = rand_shape(rng, 2);
        let axis = rng.random_range(0..2);
        (Box::new(move |t: &mut Tape, v: &[Var]| t.log_softmax(v[0], axis).unwrap()), vec![rand_tensor(rng, &s, -2.0, 2.0)])
    });
}

#[test]
fn convolutions() {
    run("conv2d", |rng| {
        let (n, c, o) = (rng.random_range(1..3), rng.random_range(1..3), rng.random_range(1..3));
        let k = rng.random_range(1..4);
        let stride = rng.random_range(1..3);
        let padding = rng.random_range(0..k);
        let p = ConvParams { stride, padding };
        (
            Box::new(move |t: &mut Tape, v: &[Var]| t.conv2d(v[0], v[1], p).unwrap()),
            vec![rand_tensor(rng, &[n, c, 4, 4], -1.0, 1.0), rand_tensor(rng, &[o, c, k, k], -1.0, 1.0)],
        )
    });
    run("conv2d_transpose", |rng| {
        let (n, c, o) = (rng.random_range(1..3), rng.random_range(1..3), rng.random_range(1..3));
        let k = rng.random_range(2..4);
        let stride = rng.random_range(1..3);
        let padding = rng.random_range(0..k - 1);
        let op = rng.random_range(0..stride);
        let p = ConvParams { stride, padding };
        (
            Box::new(move |t: &mut Tape, v: &[Var]| t.conv2d_transpose(v[0], v[1], p, op).unwrap()),
            vec![rand_tensor(rng, &[n, c, 3, 3], -1.0, 1.0), rand_tensor(rng, &[c, o, k, k], -1.0, 1.0)],
        )
    });
}

#[test]
fn losses() {
    run("mse", |rng| {
        let s = rand_shape(rng, 2);
        (Box::new(|t: &mut Tape, v: &[Var]| t.mse(v[0], v[1]).unwrap()), vec![rand_tensor(rng, &s, -1.0, 1.0), rand_tensor(rng, &s, -1.0, 1.0)])
    });
    run("gaussian_nll", |rng| {
        let s = rand_shape(rng, 2);
        (
            Box::new(|t: &mut Tape, v: &[Var]| t.gaussian_nll(v[0], v[1], v[2]).unwrap()),
            vec![rand_tensor(rng, &s, -1.0, 1.0), rand_tensor(rng, &s, -1.0, 1.0), rand_tensor(rng, &s, 0.5, 1.5)],
        )
    });
    run("cross_entropy", |rng| {
        let (b, k) = (rng.random_range(1..4), rng.random_range(2..5));
        let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..k)).collect();
        (
            Box::new(move |t: &mut Tape, v: &[Var]| t.cross_entropy(v[0], &labels).unwrap()),
            vec![rand_tensor(rng, &[b, k], -2.0, 2.0)],
        )
    });
}

#[test]
fn composed_graph() {
    // A small MLP-like chain touching most ops at once.
    run("mlp chain", |rng| {
        let (b, i, h) = (rng.random_range(1..3), rng.random_range(1..4), rng.random_range(1..4));
        (
            Box::new(|t: &mut Tape, v: &[Var]| {
                let z = t.matmul(v[0], v[1]).unwrap();
                let z = t.add_row(z, v[2]).unwrap();
                let a = t.tanh(z);
                let s = t.sigmoid(a);
                t.softmax(s, 1).unwrap()
            }),
            vec![rand_tensor(rng, &[b, i], -1.0, 1.0), rand_tensor(rng, &[i, h], -1.0, 1.0), rand_tensor(rng, &[h], -1.0, 1.0)],
        )
    });
}
