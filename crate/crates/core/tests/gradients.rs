//! Finite-difference checks of every hand-written backward pass, in f64.

use kdsr::diffops::gradcheck::{check_gradient, random_tensor};
use kdsr::diffops::{
    conv2d, conv2d_backward, global_avg_pool, global_avg_pool_backward, kd_l1_loss, kd_l2_loss,
    kl_loss, l1_loss, linear, linear_backward, relu, relu_backward, Loss, ParamSet, Tensor,
};
use kdsr::kd_ide::{IdeConfig, KdIde};
use kdsr::sr_net::{idr_ddc, idr_ddc_backward, SrConfig, SrNet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;
const OP_TOL: f64 = 1e-5;
const NET_TOL: f64 = 1e-3;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Checks every parameter gradient in `grads` against `f` evaluated with that
/// parameter replaced.
fn check_params(
    params: &ParamSet<f64>,
    grads: &ParamSet<f64>,
    tol: f64,
    f: impl Fn(&ParamSet<f64>) -> f64,
) {
    assert!(!grads.is_empty());
    for (name, g) in grads.iter() {
        let err = check_gradient(params.get(name).unwrap(), g, EPS, |t| {
            let mut q = params.clone();
            *q.get_mut(name).unwrap() = t.clone();
            f(&q)
        });
        assert!(err < tol, "{name}: relative error {err}");
    }
}

#[test]
fn conv2d_all_arguments() {
    let mut r = rng(1);
    let x = random_tensor::<f64>(&[2, 3, 5, 6], &mut r);
    let w = random_tensor::<f64>(&[4, 3, 3, 3], &mut r);
    let b = random_tensor::<f64>(&[4], &mut r);
    let probe = random_tensor::<f64>(&[2, 4, 5, 6], &mut r);
    let g = conv2d_backward(&x, &w, &probe, true).unwrap();
    let f =
        |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| dot(&conv2d(x, w, b).unwrap(), &probe);
    assert!(check_gradient(&x, g.input.as_ref().unwrap(), EPS, |t| f(t, &w, &b)) < OP_TOL);
    assert!(check_gradient(&w, &g.weight, EPS, |t| f(&x, t, &b)) < OP_TOL);
    assert!(check_gradient(&b, &g.bias, EPS, |t| f(&x, &w, t)) < OP_TOL);
}

#[test]
fn conv2d_pointwise_and_wide_kernels() {
    for k in [1, 5] {
        let mut r = rng(10 + k as u64);
        let x = random_tensor::<f64>(&[1, 2, 4, 4], &mut r);
        let w = random_tensor::<f64>(&[3, 2, k, k], &mut r);
        let b = random_tensor::<f64>(&[3], &mut r);
        let probe = random_tensor::<f64>(&[1, 3, 4, 4], &mut r);
        let g = conv2d_backward(&x, &w, &probe, true).unwrap();
        let f = |x: &Tensor<f64>, w: &Tensor<f64>| dot(&conv2d(x, w, &b).unwrap(), &probe);
        assert!(check_gradient(&x, g.input.as_ref().unwrap(), EPS, |t| f(t, &w)) < OP_TOL);
        assert!(check_gradient(&w, &g.weight, EPS, |t| f(&x, t)) < OP_TOL);
    }
}

#[test]
fn linear_all_arguments() {
    let mut r = rng(2);
    let x = random_tensor::<f64>(&[3, 5], &mut r);
    let w = random_tensor::<f64>(&[4, 5], &mut r);
    let b = random_tensor::<f64>(&[4], &mut r);
    let probe = random_tensor::<f64>(&[3, 4], &mut r);
    let g = linear_backward(&x, &w, &probe).unwrap();
    let f =
        |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| dot(&linear(x, w, b).unwrap(), &probe);
    assert!(check_gradient(&x, &g.input, EPS, |t| f(t, &w, &b)) < OP_TOL);
    assert!(check_gradient(&w, &g.weight, EPS, |t| f(&x, t, &b)) < OP_TOL);
    assert!(check_gradient(&b, &g.bias, EPS, |t| f(&x, &w, t)) < OP_TOL);
}

#[test]
fn global_avg_pool_input() {
    let mut r = rng(3);
    let x = random_tensor::<f64>(&[2, 3, 4, 5], &mut r);
    let probe = random_tensor::<f64>(&[2, 3], &mut r);
    let g = global_avg_pool_backward(x.shape(), &probe).unwrap();
    assert!(check_gradient(&x, &g, EPS, |t| dot(&global_avg_pool(t).unwrap(), &probe)) < OP_TOL);
}

#[test]
fn relu_away_from_the_kink() {
    let mut r = rng(4);
    // keep every entry at least 0.1 from zero so the difference quotient is clean
    let x = random_tensor::<f64>(&[40], &mut r).map(|v| {
        if v.abs() < 0.1 {
            v + 0.2f64.copysign(v)
        } else {
            v
        }
    });
    let probe = random_tensor::<f64>(&[40], &mut r);
    let g = relu_backward(&x, &probe).unwrap();
    assert!(check_gradient(&x, &g, EPS, |t| dot(&relu(t), &probe)) < OP_TOL);
}

fn ddc_params(c: usize, k: usize, r: &mut ChaCha8Rng) -> ParamSet<f64> {
    let mut p = ParamSet::new();
    p.insert("g.phi1.weight", random_tensor(&[2 * c, c], r))
        .unwrap();
    p.insert("g.phi1.bias", random_tensor(&[2 * c], r)).unwrap();
    p.insert("g.phi2.weight", random_tensor(&[c * k * k, 2 * c], r))
        .unwrap();
    p.insert("g.phi2.bias", random_tensor(&[c * k * k], r))
        .unwrap();
    p
}

#[test]
fn idr_ddc_features_guidance_and_generator() {
    for (c, k) in [(4, 3), (2, 5)] {
        let mut r = rng(5 + c as u64);
        let p = ddc_params(c, k, &mut r);
        let x = random_tensor::<f64>(&[2, c, 6, 5], &mut r);
        let d = random_tensor::<f64>(&[2, c], &mut r);
        let probe = random_tensor::<f64>(&[2, c, 6, 5], &mut r);
        let f = |p: &ParamSet<f64>, x: &Tensor<f64>, d: &Tensor<f64>| {
            dot(&idr_ddc(p, "g", x, d, k).unwrap().0, &probe)
        };
        let (_, trace) = idr_ddc(&p, "g", &x, &d, k).unwrap();
        let mut grads = p.zeros_like();
        let (gx, gd) = idr_ddc_backward(&p, "g", &trace, &probe, &mut grads).unwrap();
        assert!(check_gradient(&x, &gx, EPS, |t| f(&p, t, &d)) < OP_TOL);
        assert!(check_gradient(&d, &gd, EPS, |t| f(&p, &x, t)) < OP_TOL);
        check_params(&p, &grads, OP_TOL, |q| f(q, &x, &d));
    }
}

fn tiny_sr() -> (SrNet, ParamSet<f64>) {
    let net = SrNet::new(SrConfig {
        channels: 4,
        n_blocks: 2,
        kernel_size: 3,
        scale: 4,
    })
    .unwrap();
    let p = net.init_params(&mut rng(6));
    (net, p)
}

#[test]
fn residual_block() {
    let (net, p) = tiny_sr();
    let mut r = rng(7);
    let x = random_tensor::<f64>(&[1, 4, 5, 5], &mut r);
    let d = random_tensor::<f64>(&[1, 4], &mut r);
    let probe = random_tensor::<f64>(&[1, 4, 5, 5], &mut r);
    let f = |p: &ParamSet<f64>, x: &Tensor<f64>, d: &Tensor<f64>| {
        dot(&net.block_forward(p, 1, x, d).unwrap().0, &probe)
    };
    let (_, trace) = net.block_with_trace(&p, 1, &x, &d).unwrap();
    let mut grads = ParamSet::new();
    for (name, t) in p.iter().filter(|(n, _)| n.starts_with("blocks.1.")) {
        grads.insert(name, Tensor::zeros(t.shape())).unwrap();
    }
    let (gx, gd) = net
        .block_backward(&p, 1, &trace, &probe, &mut grads)
        .unwrap();
    assert!(check_gradient(&x, &gx, EPS, |t| f(&p, t, &d)) < NET_TOL);
    assert!(check_gradient(&d, &gd, EPS, |t| f(&p, &x, t)) < NET_TOL);
    check_params(&p, &grads, NET_TOL, |q| f(q, &x, &d));
}

#[test]
fn whole_sr_network() {
    let (net, p) = tiny_sr();
    let mut r = rng(8);
    let lr = random_tensor::<f64>(&[1, 3, 5, 6], &mut r);
    let d = random_tensor::<f64>(&[1, 4], &mut r);
    let probe = random_tensor::<f64>(&[1, 3, 20, 24], &mut r);
    let f = |p: &ParamSet<f64>, d: &Tensor<f64>| dot(&net.forward(p, &lr, d).unwrap().0, &probe);
    let (_, trace) = net.forward(&p, &lr, &d).unwrap();
    let mut grads = p.zeros_like();
    let gd = net.backward(&p, &trace, &probe, &mut grads).unwrap();
    assert!(check_gradient(&d, &gd, EPS, |t| f(&p, t)) < NET_TOL);
    check_params(&p, &grads, NET_TOL, |q| f(q, &d));
}

#[test]
fn whole_estimator_both_heads() {
    for config in [IdeConfig::teacher(4, 2), IdeConfig::student(4, 2)] {
        let ide = KdIde::new(config).unwrap();
        let p = ide.init_params::<f64>(&mut rng(9));
        let mut r = rng(10);
        let x = random_tensor::<f64>(&[2, config.in_channels, 4, 5], &mut r);
        let probe_d = random_tensor::<f64>(&[2, 4], &mut r);
        let probe_dp = random_tensor::<f64>(&[2, 16], &mut r);
        let f = |p: &ParamSet<f64>, x: &Tensor<f64>| {
            let (pair, _) = ide.forward(p, x).unwrap();
            dot(&pair.d, &probe_d) + dot(&pair.d_prime, &probe_dp)
        };
        let (_, trace) = ide.forward(&p, &x).unwrap();
        let mut grads = p.zeros_like();
        let gx = ide
            .backward(
                &p,
                &trace,
                Some(&probe_d),
                Some(&probe_dp),
                &mut grads,
                true,
            )
            .unwrap()
            .unwrap();
        assert!(check_gradient(&x, &gx, EPS, |t| f(&p, t)) < NET_TOL);
        check_params(&p, &grads, NET_TOL, |q| f(q, &x));
    }
}

fn check_loss(
    a: &Tensor<f64>,
    b: &Tensor<f64>,
    loss: impl Fn(&Tensor<f64>, &Tensor<f64>) -> kdsr::Result<Loss<f64>>,
    x_is_first: bool,
) -> f64 {
    // the gradient is with respect to the prediction / student argument
    if x_is_first {
        let g = loss(a, b).unwrap().grad;
        check_gradient(a, &g, EPS, |t| loss(t, b).unwrap().value)
    } else {
        let g = loss(a, b).unwrap().grad;
        check_gradient(b, &g, EPS, |t| loss(a, t).unwrap().value)
    }
}

#[test]
fn losses() {
    let mut r = rng(11);
    let teacher = random_tensor::<f64>(&[3, 8], &mut r).map(|v| 3.0 * v);
    let student = random_tensor::<f64>(&[3, 8], &mut r).map(|v| 3.0 * v);
    assert!(check_loss(&teacher, &student, kl_loss, false) < OP_TOL);
    assert!(check_loss(&teacher, &student, kd_l2_loss, false) < OP_TOL);
    // L1 terms are piecewise linear; inputs differ by far more than EPS
    assert!(check_loss(&teacher, &student, kd_l1_loss, false) < OP_TOL);
    let pred = random_tensor::<f64>(&[1, 3, 4, 4], &mut r);
    let target = random_tensor::<f64>(&[1, 3, 4, 4], &mut r);
    assert!(check_loss(&pred, &target, l1_loss, true) < OP_TOL);
}
