use hg_autodiff::conv::ConvGeom;
use hg_autodiff::numeric::{central_difference, relative_error};
use hg_autodiff::{Graph, Result, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-5;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Values bounded away from zero, for ops with a kink or pole there.
fn away_from_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let v: f64 = rng.random_range(0.2..1.0);
        if rng.random_bool(0.5) {
            v
        } else {
            -v
        }
    })
}

/// Checks `build` (returning a tensor node) by contracting with a fixed random
/// projection, so every output element influences the scalar.
fn check<F>(name: &str, inputs: &[Tensor], build: F)
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let proj = {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone()).unwrap()).collect();
        let out = build(&mut g, &vars).unwrap();
        random(g.shape(out), &mut rng)
    };
    let eval = |args: &[Tensor]| -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = args.iter().map(|t| g.leaf(t.clone()).unwrap()).collect();
        let out = build(&mut g, &vars).unwrap();
        g.value(out)
            .data()
            .iter()
            .zip(proj.data())
            .map(|(a, b)| a * b)
            .sum()
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone()).unwrap()).collect();
    let out = build(&mut g, &vars).unwrap();
    let p = g.constant(proj.clone()).unwrap();
    let prod = g.mul(out, p).unwrap();
    let root = g.sum(prod).unwrap();
    let grads = g.backward(root, &vars).unwrap();

    let reference = central_difference(eval, inputs, EPS);
    for (k, (gv, r)) in grads.iter().zip(&reference).enumerate() {
        let err = relative_error(g.value(*gv), r, 1e-3);
        assert!(err < TOL, "{name}: input {k} rel err {err:e}");
    }
}

#[test]
fn elementwise_primitives() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random(&[3, 4], &mut rng);
    let b = random(&[3, 4], &mut rng);
    check("add", &[a.clone(), b.clone()], |g, v| g.add(v[0], v[1]));
    check("sub", &[a.clone(), b.clone()], |g, v| g.sub(v[0], v[1]));
    check("mul", &[a.clone(), b.clone()], |g, v| g.mul(v[0], v[1]));
    check("scale", &[a.clone()], |g, v| g.scale(v[0], -2.5));
    check("square", &[a.clone()], |g, v| g.square(v[0]));
    let nz = away_from_zero(&[3, 4], &mut rng);
    check("relu", &[nz.clone()], |g, v| g.relu(v[0]));
    check("recip", &[nz.clone()], |g, v| g.recip(v[0]));
    let pos = nz.map(f64::abs);
    check("sqrt", &[pos], |g, v| g.sqrt(v[0]));
}

#[test]
fn reductions_and_broadcasts() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random(&[2, 3, 4], &mut rng);
    check("sum", &[a.clone()], |g, v| g.sum(v[0]));
    check("mean", &[a.clone()], |g, v| g.mean(v[0]));
    check("sum_leading", &[a.clone()], |g, v| g.sum_leading(v[0]));
    let s = random(&[], &mut rng);
    check("broadcast_scalar", &[s], |g, v| g.broadcast_scalar(v[0], &[2, 5]));
    let c = random(&[4], &mut rng);
    check("broadcast_last", &[c.clone()], |g, v| g.broadcast_last(v[0], &[3, 2, 4]));
    check("add_bias", &[a.clone(), c], |g, v| g.add_bias(v[0], v[1]));
}

#[test]
fn shape_primitives() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random(&[3, 4, 2], &mut rng);
    let b = random(&[3, 4, 3], &mut rng);
    check("reshape", &[a.clone()], |g, v| g.reshape(v[0], &[4, 6]));
    check("dim_expand", &[a.clone()], |g, v| g.dim_expand(v[0]));
    check("concat", &[a.clone(), b.clone()], |g, v| g.concat_last(&[v[0], v[1]]));
    check("slice", &[b.clone()], |g, v| g.slice_last(v[0], 1, 2));
    check("pad", &[a.clone()], |g, v| g.pad_last(v[0], 1, 5));
    let m = random(&[3, 5], &mut rng);
    let n = random(&[5, 2], &mut rng);
    check("matmul", &[m.clone(), n], |g, v| g.matmul(v[0], v[1]));
    check("transpose", &[m], |g, v| g.transpose(v[0]));
    let w = random(&[3, 4, 2], &mut rng);
    let bias = random(&[1], &mut rng);
    check("dense", &[a, w, bias], |g, v| g.dense(v[0], v[1], v[2]));
}

#[test]
fn convolutions() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for stride in [1, 2] {
        let x = random(&[7, 6, 2], &mut rng);
        let w = random(&[5, 5, 2, 3], &mut rng);
        check("conv2d", &[x, w], |g, v| g.conv(v[0], v[1], stride));
        let x = random(&[5, 4, 3, 2], &mut rng);
        let w = random(&[3, 3, 3, 2, 2], &mut rng);
        check("conv3d", &[x, w], |g, v| g.conv(v[0], v[1], stride));
    }
}

#[test]
fn convolution_adjoint_ops_are_differentiable() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let geom = ConvGeom::new(&[5, 4, 3, 2], &[3, 3, 3, 2, 2], 2).unwrap();
    let gy = random(&geom.output_shape(), &mut rng);
    let w = random(&geom.weight_shape(), &mut rng);
    let x = random(&geom.input_shape(), &mut rng);
    check("conv_input_grad", &[gy.clone(), w], move |g, v| {
        g.conv_input_grad(v[0], v[1], geom)
    });
    check("conv_weight_grad", &[x, gy], move |g, v| {
        g.conv_weight_grad(v[0], v[1], geom)
    });
}

#[test]
fn sum_of_squares_gradient() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::new(&[3], vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
    let sq = g.square(x).unwrap();
    let s = g.sum(sq).unwrap();
    let gx = g.backward(s, &[x]).unwrap()[0];
    assert_eq!(g.value(gx).data(), &[2.0, 4.0, 6.0]);
}

#[test]
fn second_order_through_norm() {
    // |d(x³)/dx| at x = 2 is 3x² = 12; its derivative is 6x = 12.
    let mut g = Graph::new();
    let x = g.leaf(Tensor::scalar(2.0)).unwrap();
    let x2 = g.square(x).unwrap();
    let x3 = g.mul(x2, x).unwrap();
    let d = g.backward(x3, &[x]).unwrap()[0];
    let d2 = g.square(d).unwrap();
    let norm = g.sqrt(d2).unwrap();
    assert!((g.value(norm).item() - 12.0).abs() < 1e-12);
    let dd = g.backward(norm, &[x]).unwrap()[0];
    assert!((g.value(dd).item() - 12.0).abs() < 1e-9);
}

#[test]
fn unreachable_input_gets_zero_gradient() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::filled(&[2], 1.0)).unwrap();
    let y = g.leaf(Tensor::filled(&[3], 1.0)).unwrap();
    let s = g.sum(x).unwrap();
    let gy = g.backward(s, &[y]).unwrap()[0];
    assert_eq!(g.value(gy), &Tensor::zeros(&[3]));
}

#[test]
fn backward_requires_scalar_root() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::filled(&[2], 1.0)).unwrap();
    assert!(g.backward(x, &[x]).is_err());
}

#[test]
fn dense_examples() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::new(&[2, 2], vec![3.0, 5.0, 7.0, 11.0]).unwrap()).unwrap();
    let w = g.leaf(Tensor::new(&[4], vec![0.0, 0.0, 1.0, 0.0]).unwrap()).unwrap();
    let b = g.leaf(Tensor::new(&[1], vec![0.5]).unwrap()).unwrap();
    let y = g.dense(x, w, b).unwrap();
    assert_eq!(g.value(y).data(), &[7.5]);
    assert_eq!(g.shape(y), &[1]);
    let gx = g.backward(y, &[x]).unwrap()[0];
    assert_eq!(g.value(gx).data(), &[0.0, 0.0, 1.0, 0.0]);
    assert_eq!(g.shape(gx), &[2, 2]);

    let mut g = Graph::new();
    let x = g.leaf(Tensor::zeros(&[6])).unwrap();
    let w = g.leaf(Tensor::filled(&[6], 3.0)).unwrap();
    let b = g.leaf(Tensor::new(&[1], vec![-1.25]).unwrap()).unwrap();
    let y = g.dense(x, w, b).unwrap();
    assert_eq!(g.value(y).item(), -1.25);
    let mut g = Graph::new();
    let x = g.leaf(Tensor::zeros(&[6])).unwrap();
    let w = g.leaf(Tensor::zeros(&[5])).unwrap();
    let b = g.leaf(Tensor::zeros(&[1])).unwrap();
    assert!(g.dense(x, w, b).is_err());
}

#[test]
fn dim_expand_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let t = random(&[16, 16, 12], &mut rng);
    let mut g = Graph::new();
    let x = g.leaf(t.clone()).unwrap();
    let y = g.dim_expand(x).unwrap();
    assert_eq!(g.shape(y), &[16, 16, 12, 1]);
    assert_eq!(g.value(y).data(), t.data());
    let s = g.sum(y).unwrap();
    let gx = g.backward(s, &[x]).unwrap()[0];
    assert_eq!(g.shape(gx), &[16, 16, 12]);

    let mut g = Graph::new();
    let x = g.leaf(Tensor::zeros(&[128, 128, 96])).unwrap();
    let y = g.dim_expand(x).unwrap();
    assert_eq!(g.shape(y), &[128, 128, 96, 1]);
}

#[test]
fn conv_examples() {
    // identity kernels
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x2 = random(&[6, 5, 2], &mut rng);
    let mut k2 = vec![0.0; 25 * 4];
    for c in 0..2 {
        k2[(2 * 5 + 2) * 4 + c * 2 + c] = 1.0;
    }
    let mut g = Graph::new();
    let x = g.leaf(x2.clone()).unwrap();
    let w = g.leaf(Tensor::new(&[5, 5, 2, 2], k2).unwrap()).unwrap();
    let y = g.conv(x, w, 1).unwrap();
    assert_eq!(g.value(y), &x2);

    let x3 = random(&[4, 5, 3, 1], &mut rng);
    let mut k3 = vec![0.0; 27];
    k3[13] = 1.0;
    let x = g.leaf(x3.clone()).unwrap();
    let w = g.leaf(Tensor::new(&[3, 3, 3, 1, 1], k3).unwrap()).unwrap();
    let y = g.conv(x, w, 1).unwrap();
    assert_eq!(g.value(y), &x3);

    // ones/ones: corner 9, interior of 4x4 = 16, centre of 5x5 = 25
    let x = g.leaf(Tensor::filled(&[4, 4, 1], 1.0)).unwrap();
    let w = g.leaf(Tensor::filled(&[5, 5, 1, 1], 1.0)).unwrap();
    let y = g.conv(x, w, 1).unwrap();
    assert_eq!(g.value(y).data()[0], 9.0);
    assert_eq!(g.value(y).data()[5], 16.0);
    let x = g.leaf(Tensor::filled(&[5, 5, 1], 1.0)).unwrap();
    let y = g.conv(x, w, 1).unwrap();
    assert_eq!(g.value(y).data()[12], 25.0);

    // channel mismatch
    let x = g.leaf(Tensor::zeros(&[4, 4, 3])).unwrap();
    assert!(g.conv(x, w, 1).is_err());

    // linearity
    let xv = random(&[5, 4, 3, 2], &mut rng);
    let wv = random(&[3, 3, 3, 2, 3], &mut rng);
    let x = g.leaf(xv.clone()).unwrap();
    let w = g.leaf(wv).unwrap();
    let y = g.conv(x, w, 2).unwrap();
    let xs = g.scale(x, -1.7).unwrap();
    let ys = g.conv(xs, w, 2).unwrap();
    let yref = g.scale(y, -1.7).unwrap();
    assert!(g.value(ys).max_abs_diff(g.value(yref)) < 1e-12);
}

#[test]
fn conv_shape_rules_at_full_size() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[1024, 1024, 1])).unwrap();
    let w = g.constant(Tensor::zeros(&[5, 5, 1, 1])).unwrap();
    let y = g.conv(x, w, 2).unwrap();
    assert_eq!(g.shape(y), &[512, 512, 1]);

    let x = g.constant(Tensor::zeros(&[128, 128, 96, 1])).unwrap();
    let w = g.constant(Tensor::zeros(&[3, 3, 3, 1, 1])).unwrap();
    let y = g.conv(x, w, 2).unwrap();
    assert_eq!(g.shape(y), &[64, 64, 48, 1]);
}

#[test]
fn non_finite_trips_numeric_fault() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::filled(&[2], 1e200)).unwrap();
    assert!(matches!(
        g.square(x),
        Err(hg_autodiff::AutodiffError::NumericFault("square"))
    ));
    assert!(g.leaf(Tensor::filled(&[1], f64::NAN)).is_err());
}

/// Two-layer toy critic `D(v) = w2 · relu(conv(v, w1))`; checks the gradient of
/// the penalty `(‖∇_v D‖ − 1)²` with respect to the weights.
#[test]
fn double_backprop_penalty_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let v = random(&[4, 4, 3, 2], &mut rng);
    let w1 = random(&[3, 3, 3, 2, 3], &mut rng);
    let w2 = random(&[2, 2, 2, 3], &mut rng);
    let b2 = random(&[1], &mut rng);

    let penalty = |g: &mut Graph, vv: Var, w1: Var, w2: Var, b2: Var| -> Var {
        let h = g.conv(vv, w1, 2).unwrap();
        let h = g.relu(h).unwrap();
        let d = g.dense(h, w2, b2).unwrap();
        let gv = g.backward(d, &[vv]).unwrap()[0];
        let sq = g.square(gv).unwrap();
        let s = g.sum(sq).unwrap();
        let norm = g.sqrt(s).unwrap();
        let one = g.constant(Tensor::scalar(1.0)).unwrap();
        let diff = g.sub(norm, one).unwrap();
        g.square(diff).unwrap()
    };

    let mut g = Graph::new();
    let vv = g.leaf(v.clone()).unwrap();
    let a = g.leaf(w1.clone()).unwrap();
    let b = g.leaf(w2.clone()).unwrap();
    let c = g.leaf(b2.clone()).unwrap();
    let p = penalty(&mut g, vv, a, b, c);
    let grads = g.backward(p, &[a, b]).unwrap();

    let eval = |args: &[Tensor]| {
        let mut g = Graph::new();
        let vv = g.leaf(v.clone()).unwrap();
        let a = g.leaf(args[0].clone()).unwrap();
        let b = g.leaf(args[1].clone()).unwrap();
        let c = g.leaf(b2.clone()).unwrap();
        let p = penalty(&mut g, vv, a, b, c);
        g.value(p).item()
    };
    let reference = central_difference(eval, &[w1, w2], EPS);
    for (gv, r) in grads.iter().zip(&reference) {
        let err = relative_error(g.value(*gv), r, 1e-3);
        assert!(err < 1e-4, "penalty grad rel err {err:e}");
    }
}

#[test]
fn identical_graphs_are_bitwise_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut g = Graph::new();
        let x = g.leaf(random(&[9, 9, 3], &mut rng)).unwrap();
        let w = g.leaf(random(&[5, 5, 3, 4], &mut rng)).unwrap();
        let y = g.conv(x, w, 2).unwrap();
        let y = g.relu(y).unwrap();
        let s = g.square(y).unwrap();
        let s = g.sum(s).unwrap();
        let gr = g.backward(s, &[x, w]).unwrap();
        (g.value(gr[0]).to_vec(), g.value(gr[1]).to_vec())
    };
    let (a, b) = run();
    let (c, d) = run();
    assert!(a.iter().zip(&c).all(|(p, q)| p.to_bits() == q.to_bits()));
    assert!(b.iter().zip(&d).all(|(p, q)| p.to_bits() == q.to_bits()));
}
