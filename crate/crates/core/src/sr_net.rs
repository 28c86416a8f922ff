//! The degradation-guided SR network.
//!
//! Each residual block filters its input with a depthwise kernel generated
//! from the guidance vector `d` ([`idr_ddc`]), applies ReLU and an ordinary
//! 3×3 convolution, and adds the skip. The network is
//! `head → blocks → body (+ head skip) → [conv, pixel shuffle ×2, ReLU]* → tail`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffops::named::{conv, conv_backward, dense, dense_backward};
use crate::diffops::{
    depthwise_conv2d, depthwise_conv2d_backward, init, relu, relu_backward, ParamSet, Real, Tensor,
};
use crate::error::{Error, Result};
use crate::imaging::{pixel_shuffle, pixel_unshuffle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SrConfig {
    pub channels: usize,
    pub n_blocks: usize,
    pub kernel_size: usize,
    pub scale: usize,
}

impl Default for SrConfig {
    fn default() -> Self {
        Self {
            channels: 16,
            n_blocks: 4,
            kernel_size: 3,
            scale: 4,
        }
    }
}

impl SrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernel_size.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "dynamic kernel size must be odd, got {}",
                self.kernel_size
            )));
        }
        if self.scale < 2 || !self.scale.is_power_of_two() {
            return Err(Error::invalid(format!(
                "scale must be a power of two >= 2, got {}",
                self.scale
            )));
        }
        if self.channels == 0 {
            return Err(Error::invalid("SR width must be positive"));
        }
        Ok(())
    }

    /// Number of ×2 upsampling stages.
    pub fn up_stages(&self) -> usize {
        self.scale.trailing_zeros() as usize
    }
}

/// Intermediate values of one [`idr_ddc`] call.
#[derive(Debug, Clone)]
pub struct DdcTrace<T> {
    input: Tensor<T>,
    d: Tensor<T>,
    hidden: Tensor<T>,
    hidden_act: Tensor<T>,
    kernels: Tensor<T>,
    /// Multiply-accumulates spent in the depthwise filtering.
    pub macs: u64,
}

impl<T: Real> DdcTrace<T> {
    /// The generated per-sample kernels, `[N, C, 1, K, K]`.
    pub fn kernels(&self) -> &Tensor<T> {
        &self.kernels
    }
}

/// Degradation-guided dynamic depthwise convolution. The two dense layers
/// `<prefix>.phi1` (C→2C) and `<prefix>.phi2` (2C→C·K²) map each sample's `d`
/// to a `C×1×K×K` kernel stack that filters that sample's channels.
pub fn idr_ddc<T: Real>(
    params: &ParamSet<T>,
    prefix: &str,
    f_in: &Tensor<T>,
    d: &Tensor<T>,
    kernel_size: usize,
) -> Result<(Tensor<T>, DdcTrace<T>)> {
    let (n, c, _, _) = f_in.dims4()?;
    let (dn, dc) = d.dims2()?;
    if dn != n || dc != c {
        return Err(Error::shape(format!(
            "guidance {:?} does not match features {:?}",
            d.shape(),
            f_in.shape()
        )));
    }
    let hidden = dense(params, &format!("{prefix}.phi1"), d)?;
    let hidden_act = relu(&hidden);
    let flat = dense(params, &format!("{prefix}.phi2"), &hidden_act)?;
    if flat.shape()[1] != c * kernel_size * kernel_size {
        return Err(Error::shape(format!(
            "kernel generator emits {} values, expected {}",
            flat.shape()[1],
            c * kernel_size * kernel_size
        )));
    }
    let kernels = flat.reshape(&[n, c, 1, kernel_size, kernel_size])?;
    let (out, macs) = depthwise_conv2d(f_in, &kernels)?;
    Ok((
        out,
        DdcTrace {
            input: f_in.clone(),
            d: d.clone(),
            hidden,
            hidden_act,
            kernels,
            macs,
        },
    ))
}

/// Backward of [`idr_ddc`]: accumulates generator gradients and returns
/// `(grad_f_in, grad_d)`.
pub fn idr_ddc_backward<T: Real>(
    params: &ParamSet<T>,
    prefix: &str,
    trace: &DdcTrace<T>,
    dy: &Tensor<T>,
    grads: &mut ParamSet<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let g = depthwise_conv2d_backward(&trace.input, &trace.kernels, dy)?;
    let n = trace.d.shape()[0];
    let per = trace.kernels.numel() / n;
    let g_flat = g.weight.reshape(&[n, per])?;
    let g_act = dense_backward(
        params,
        &format!("{prefix}.phi2"),
        &trace.hidden_act,
        &g_flat,
        grads,
    )?;
    let g_hidden = relu_backward(&trace.hidden, &g_act)?;
    let g_d = dense_backward(
        params,
        &format!("{prefix}.phi1"),
        &trace.d,
        &g_hidden,
        grads,
    )?;
    Ok((g.input, g_d))
}

/// Intermediate values of one residual block.
#[derive(Debug, Clone)]
pub struct BlockTrace<T> {
    ddc: DdcTrace<T>,
    ddc_out: Tensor<T>,
    act: Tensor<T>,
    /// Multiply-accumulates of the block's ordinary convolution.
    pub conv_macs: u64,
}

impl<T> BlockTrace<T> {
    pub fn ddc_macs(&self) -> u64 {
        self.ddc.macs
    }
}

#[derive(Debug, Clone)]
struct UpTrace<T> {
    input: Tensor<T>,
    shuffled: Tensor<T>,
}

/// Everything [`SrNet::backward`] needs.
#[derive(Debug, Clone)]
pub struct SrTrace<T> {
    lr: Tensor<T>,
    blocks: Vec<BlockTrace<T>>,
    body_in: Tensor<T>,
    ups: Vec<UpTrace<T>>,
    tail_in: Tensor<T>,
    /// Multiply-accumulates of the dynamic depthwise filters.
    pub ddc_macs: u64,
    /// Multiply-accumulates of all ordinary convolutions.
    pub conv_macs: u64,
}

fn add_conv<T: Real>(
    p: &mut ParamSet<T>,
    name: String,
    c_out: usize,
    c_in: usize,
    gain: f64,
    rng: &mut impl Rng,
) {
    p.insert(
        format!("{name}.weight"),
        init::conv_weight(c_out, c_in, 3, gain, rng),
    )
    .expect("unique parameter names");
    p.insert(format!("{name}.bias"), Tensor::zeros(&[c_out]))
        .expect("unique parameter names");
}

fn block_layer(i: usize, part: &str) -> String {
    format!("blocks.{i}.{part}")
}

#[derive(Debug, Clone, Copy)]
pub struct SrNet {
    pub config: SrConfig,
}

impl SrNet {
    pub fn new(config: SrConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    /// Fresh parameters: fan-in Kaiming convolutions (residual branch convs
    /// scaled by 0.1), zero conv biases, uniform `±1/sqrt(fan_in)` generators.
    pub fn init_params<T: Real>(&self, rng: &mut impl Rng) -> ParamSet<T> {
        let c = self.config.channels;
        let kk = self.config.kernel_size * self.config.kernel_size;
        let mut p = ParamSet::new();
        add_conv(&mut p, "head".into(), c, 3, 1.0, rng);
        for i in 0..self.config.n_blocks {
            for (part, fin, fout) in [("phi1", c, 2 * c), ("phi2", 2 * c, c * kk)] {
                let name = block_layer(i, part);
                p.insert(
                    format!("{name}.weight"),
                    init::uniform_fan_in(&[fout, fin], fin, rng),
                )
                .expect("unique parameter names");
                p.insert(
                    format!("{name}.bias"),
                    init::uniform_fan_in(&[fout], fin, rng),
                )
                .expect("unique parameter names");
            }
            add_conv(&mut p, block_layer(i, "conv"), c, c, 0.1, rng);
        }
        add_conv(&mut p, "body".into(), c, c, 1.0, rng);
        for j in 0..self.config.up_stages() {
            add_conv(&mut p, format!("up.{j}"), 4 * c, c, 1.0, rng);
        }
        add_conv(&mut p, "tail".into(), 3, c, 1.0, rng);
        p
    }

    /// One residual block: `x + conv(relu(idr_ddc(x, d)))`.
    pub fn block_forward<T: Real>(
        &self,
        params: &ParamSet<T>,
        index: usize,
        x: &Tensor<T>,
        d: &Tensor<T>,
    ) -> Result<(Tensor<T>, u64, u64)> {
        let (y, trace) = self.block_with_trace(params, index, x, d)?;
        Ok((y, trace.ddc.macs, trace.conv_macs))
    }

    /// [`Self::block_forward`] keeping what [`Self::block_backward`] needs.
    pub fn block_with_trace<T: Real>(
        &self,
        params: &ParamSet<T>,
        index: usize,
        x: &Tensor<T>,
        d: &Tensor<T>,
    ) -> Result<(Tensor<T>, BlockTrace<T>)> {
        let (ddc_out, ddc) = idr_ddc(
            params,
            &format!("blocks.{index}"),
            x,
            d,
            self.config.kernel_size,
        )?;
        let act = relu(&ddc_out);
        let (mut y, macs) = conv(params, &block_layer(index, "conv"), &act)?;
        y.add_assign(x)?;
        Ok((
            y,
            BlockTrace {
                ddc,
                ddc_out,
                act,
                conv_macs: macs,
            },
        ))
    }

    /// Accumulates the block's parameter gradients and returns
    /// `(grad_x, grad_d)`.
    pub fn block_backward<T: Real>(
        &self,
        params: &ParamSet<T>,
        index: usize,
        trace: &BlockTrace<T>,
        dy: &Tensor<T>,
        grads: &mut ParamSet<T>,
    ) -> Result<(Tensor<T>, Tensor<T>)> {
        let g_act = conv_backward(
            params,
            &block_layer(index, "conv"),
            &trace.act,
            dy,
            grads,
            true,
        )?
        .expect("input gradient requested");
        let g_ddc = relu_backward(&trace.ddc_out, &g_act)?;
        let (mut g_x, g_d) = idr_ddc_backward(
            params,
            &format!("blocks.{index}"),
            &trace.ddc,
            &g_ddc,
            grads,
        )?;
        g_x.add_assign(dy)?;
        Ok((g_x, g_d))
    }

    /// LR batch `[N, 3, H, W]` and guidance `[N, C]` to an unclamped
    /// `[N, 3, sH, sW]` reconstruction.
    pub fn forward<T: Real>(
        &self,
        params: &ParamSet<T>,
        lr: &Tensor<T>,
        d: &Tensor<T>,
    ) -> Result<(Tensor<T>, SrTrace<T>)> {
        let (_, c_in, _, _) = lr.dims4()?;
        if c_in != 3 {
            return Err(Error::shape(format!(
                "SR input must have 3 channels, got {c_in}"
            )));
        }
        let mut conv_macs = 0;
        let mut ddc_macs = 0;
        let (head, m) = conv(params, "head", lr)?;
        conv_macs += m;
        let mut x = head.clone();
        let mut blocks = Vec::with_capacity(self.config.n_blocks);
        for i in 0..self.config.n_blocks {
            let (y, bt) = self.block_with_trace(params, i, &x, d)?;
            conv_macs += bt.conv_macs;
            ddc_macs += bt.ddc.macs;
            blocks.push(bt);
            x = y;
        }
        let (mut feat, m) = conv(params, "body", &x)?;
        conv_macs += m;
        feat.add_assign(&head)?;
        let body_in = x;
        let mut ups = Vec::with_capacity(self.config.up_stages());
        for j in 0..self.config.up_stages() {
            let (y, m) = conv(params, &format!("up.{j}"), &feat)?;
            conv_macs += m;
            let shuffled = pixel_shuffle(&y, 2)?;
            let next = relu(&shuffled);
            ups.push(UpTrace {
                input: feat,
                shuffled,
            });
            feat = next;
        }
        let (out, m) = conv(params, "tail", &feat)?;
        conv_macs += m;
        Ok((
            out,
            SrTrace {
                lr: lr.clone(),
                blocks,
                body_in,
                ups,
                tail_in: feat,
                ddc_macs,
                conv_macs,
            },
        ))
    }

    /// Accumulates parameter gradients for output gradient `dy` and returns
    /// the gradient with respect to `d`.
    pub fn backward<T: Real>(
        &self,
        params: &ParamSet<T>,
        trace: &SrTrace<T>,
        dy: &Tensor<T>,
        grads: &mut ParamSet<T>,
    ) -> Result<Tensor<T>> {
        let mut g = conv_backward(params, "tail", &trace.tail_in, dy, grads, true)?
            .expect("input gradient requested");
        for (j, up) in trace.ups.iter().enumerate().rev() {
            let g_shuffled = relu_backward(&up.shuffled, &g)?;
            let g_conv = pixel_unshuffle(&g_shuffled, 2)?;
            g = conv_backward(params, &format!("up.{j}"), &up.input, &g_conv, grads, true)?
                .expect("input gradient requested");
        }
        // `g` is now the gradient of body output + head skip
        let g_skip = g.clone();
        let mut g_x = conv_backward(params, "body", &trace.body_in, &g, grads, true)?
            .expect("input gradient requested");
        let c = self.config.channels;
        let n = trace.lr.shape()[0];
        let mut g_d = Tensor::zeros(&[n, c]);
        for (i, bt) in trace.blocks.iter().enumerate().rev() {
            let (gx, gd) = self.block_backward(params, i, bt, &g_x, grads)?;
            g_d.add_assign(&gd)?;
            g_x = gx;
        }
        g_x.add_assign(&g_skip)?;
        conv_backward(params, "head", &trace.lr, &g_x, grads, false)?;
        Ok(g_d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffops::gradcheck::{check_gradient, random_tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ddc_params(c: usize, k: usize, rng: &mut ChaCha8Rng) -> ParamSet<f64> {
        let mut p = ParamSet::new();
        p.insert("b.phi1.weight", random_tensor(&[2 * c, c], rng))
            .unwrap();
        p.insert("b.phi1.bias", random_tensor(&[2 * c], rng))
            .unwrap();
        p.insert("b.phi2.weight", random_tensor(&[c * k * k, 2 * c], rng))
            .unwrap();
        p.insert("b.phi2.bias", random_tensor(&[c * k * k], rng))
            .unwrap();
        p
    }

    fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
        a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn delta_kernels_give_identity() {
        let (c, k) = (4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = ddc_params(c, k, &mut rng);
        // zero weights, biases spelling out a centred delta per channel
        *p.get_mut("b.phi2.weight").unwrap() = Tensor::zeros(&[c * k * k, 2 * c]);
        let mut bias = vec![0.0; c * k * k];
        for ch in 0..c {
            bias[ch * k * k + k * k / 2] = 1.0;
        }
        *p.get_mut("b.phi2.bias").unwrap() = Tensor::from_vec(&[c * k * k], bias).unwrap();
        let x = random_tensor::<f64>(&[2, c, 6, 5], &mut rng);
        let d = random_tensor::<f64>(&[2, c], &mut rng);
        let (y, trace) = idr_ddc(&p, "b", &x, &d, k).unwrap();
        assert_eq!(y, x);
        assert_eq!(trace.kernels().shape(), &[2, c, 1, k, k]);
    }

    #[test]
    fn generator_shape_at_default_width() {
        let net = SrNet::new(SrConfig::default()).unwrap();
        let p = net.init_params::<f32>(&mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(p.get("blocks.0.phi2.bias").unwrap().shape(), &[144]);
        let x = Tensor::zeros(&[1, 16, 4, 4]);
        let d = Tensor::zeros(&[1, 16]);
        let (_, t) = idr_ddc(&p, "blocks.0", &x, &d, 3).unwrap();
        assert_eq!(t.kernels().shape(), &[1, 16, 1, 3, 3]);
        assert!(idr_ddc(&p, "blocks.0", &x, &Tensor::zeros(&[1, 8]), 3).is_err());
    }

    #[test]
    fn ddc_matches_nested_loop_oracle() {
        let (n, c, h, w, k) = (2, 3, 5, 5, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = ddc_params(c, k, &mut rng);
        let x = random_tensor::<f64>(&[n, c, h, w], &mut rng);
        let d = random_tensor::<f64>(&[n, c], &mut rng);
        let (y, _) = idr_ddc(&p, "b", &x, &d, k).unwrap();
        for b in 0..n {
            // generator evaluated by hand
            let w1 = p.get("b.phi1.weight").unwrap().data();
            let b1 = p.get("b.phi1.bias").unwrap().data();
            let w2 = p.get("b.phi2.weight").unwrap().data();
            let b2 = p.get("b.phi2.bias").unwrap().data();
            let dv = &d.data()[b * c..(b + 1) * c];
            let hid: Vec<f64> = (0..2 * c)
                .map(|o| (b1[o] + (0..c).map(|i| w1[o * c + i] * dv[i]).sum::<f64>()).max(0.0))
                .collect();
            let ker: Vec<f64> = (0..c * k * k)
                .map(|o| b2[o] + (0..2 * c).map(|i| w2[o * 2 * c + i] * hid[i]).sum::<f64>())
                .collect();
            for ch in 0..c {
                for oy in 0..h {
                    for ox in 0..w {
                        let mut acc = 0.0;
                        for ky in 0..k {
                            for kx in 0..k {
                                let sy = oy as isize + ky as isize - 1;
                                let sx = ox as isize + kx as isize - 1;
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                    continue;
                                }
                                acc += ker[ch * k * k + ky * k + kx]
                                    * x.data()[((b * c + ch) * h + sy as usize) * w + sx as usize];
                            }
                        }
                        let got = y.data()[((b * c + ch) * h + oy) * w + ox];
                        assert!((got - acc).abs() < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn ddc_gradients() {
        let (c, k) = (3, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = ddc_params(c, k, &mut rng);
        let x = random_tensor::<f64>(&[2, c, 5, 5], &mut rng);
        let d = random_tensor::<f64>(&[2, c], &mut rng);
        let probe = random_tensor::<f64>(&[2, c, 5, 5], &mut rng);
        let f = |p: &ParamSet<f64>, x: &Tensor<f64>, d: &Tensor<f64>| {
            dot(&idr_ddc(p, "b", x, d, k).unwrap().0, &probe)
        };
        let (_, trace) = idr_ddc(&p, "b", &x, &d, k).unwrap();
        let mut grads = p.zeros_like();
        let (gx, gd) = idr_ddc_backward(&p, "b", &trace, &probe, &mut grads).unwrap();
        assert!(check_gradient(&x, &gx, 1e-4, |t| f(&p, t, &d)) < 1e-5);
        assert!(check_gradient(&d, &gd, 1e-4, |t| f(&p, &x, t)) < 1e-5);
        for (name, g) in grads.iter() {
            let err = check_gradient(p.get(name).unwrap(), g, 1e-4, |t| {
                let mut q = p.clone();
                *q.get_mut(name).unwrap() = t.clone();
                f(&q, &x, &d)
            });
            assert!(err < 1e-5, "{name}: {err}");
        }
    }

    fn tiny() -> (SrNet, ParamSet<f64>, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = SrNet::new(SrConfig {
            channels: 8,
            n_blocks: 1,
            kernel_size: 3,
            scale: 4,
        })
        .unwrap();
        let p = net.init_params(&mut rng);
        (net, p, rng)
    }

    #[test]
    fn zero_branch_block_is_identity() {
        let (net, mut p, mut rng) = tiny();
        *p.get_mut("blocks.0.conv.weight").unwrap() = Tensor::zeros(&[8, 8, 3, 3]);
        let x = random_tensor::<f64>(&[1, 8, 6, 6], &mut rng);
        let d = random_tensor::<f64>(&[1, 8], &mut rng);
        let (y, _, _) = net.block_forward(&p, 0, &x, &d).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn block_gradient() {
        let (net, p, mut rng) = tiny();
        let x = random_tensor::<f64>(&[1, 8, 5, 5], &mut rng);
        let d = random_tensor::<f64>(&[1, 8], &mut rng);
        let probe = random_tensor::<f64>(&[1, 8, 5, 5], &mut rng);
        let (y, bt) = net.block_with_trace(&p, 0, &x, &d).unwrap();
        assert_eq!(y.shape(), x.shape());
        let mut grads = p.zeros_like();
        let (gx, gd) = net.block_backward(&p, 0, &bt, &probe, &mut grads).unwrap();
        let f = |x: &Tensor<f64>, d: &Tensor<f64>| {
            dot(&net.block_forward(&p, 0, x, d).unwrap().0, &probe)
        };
        assert!(check_gradient(&x, &gx, 1e-5, |t| f(t, &d)) < 1e-4);
        assert!(check_gradient(&d, &gd, 1e-5, |t| f(&x, t)) < 1e-4);
    }

    #[test]
    fn output_is_four_times_larger() {
        let (net, p, mut rng) = tiny();
        let lr = random_tensor::<f64>(&[2, 3, 6, 7], &mut rng);
        let d = random_tensor::<f64>(&[2, 8], &mut rng);
        let (y, _) = net.forward(&p, &lr, &d).unwrap();
        assert_eq!(y.shape(), &[2, 3, 24, 28]);
        assert!(net
            .forward(&p, &lr, &random_tensor(&[2, 4], &mut rng))
            .is_err());
    }

    #[test]
    fn zero_network_outputs_tail_bias() {
        let (net, mut p, mut rng) = tiny();
        let names: Vec<String> = p.names().map(str::to_string).collect();
        for name in names {
            let t = p.get_mut(&name).unwrap();
            *t = Tensor::zeros(t.shape());
        }
        *p.get_mut("tail.bias").unwrap() = Tensor::from_vec(&[3], vec![0.1, 0.5, 0.9]).unwrap();
        let lr = random_tensor::<f64>(&[1, 3, 4, 4], &mut rng);
        let d = random_tensor::<f64>(&[1, 8], &mut rng);
        let (y, _) = net.forward(&p, &lr, &d).unwrap();
        for (c, v) in [0.1, 0.5, 0.9].into_iter().enumerate() {
            assert!(y.data()[c * 256..(c + 1) * 256].iter().all(|&u| u == v));
        }
    }

    #[test]
    fn full_network_gradient() {
        let (net, p, mut rng) = tiny();
        let lr = random_tensor::<f64>(&[1, 3, 8, 8], &mut rng);
        let d = random_tensor::<f64>(&[1, 8], &mut rng);
        let probe = random_tensor::<f64>(&[1, 3, 32, 32], &mut rng);
        let f =
            |p: &ParamSet<f64>, d: &Tensor<f64>| dot(&net.forward(p, &lr, d).unwrap().0, &probe);
        let (_, trace) = net.forward(&p, &lr, &d).unwrap();
        let mut grads = p.zeros_like();
        let gd = net.backward(&p, &trace, &probe, &mut grads).unwrap();
        assert!(check_gradient(&d, &gd, 1e-5, |t| f(&p, t)) < 1e-3);
        for (name, g) in grads.iter() {
            let err = check_gradient(p.get(name).unwrap(), g, 1e-5, |t| {
                let mut q = p.clone();
                *q.get_mut(name).unwrap() = t.clone();
                f(&q, &d)
            });
            assert!(err < 1e-3, "{name}: {err}");
        }
    }

    #[test]
    fn ddc_cost_is_linear_in_width() {
        let k = 3;
        let (h, w) = (16, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut ratios = Vec::new();
        for c in [4usize, 8, 16] {
            let mut p = ParamSet::<f32>::new();
            p.insert("b.phi1.weight", Tensor::zeros(&[2 * c, c]))
                .unwrap();
            p.insert("b.phi1.bias", Tensor::zeros(&[2 * c])).unwrap();
            p.insert("b.phi2.weight", Tensor::zeros(&[c * k * k, 2 * c]))
                .unwrap();
            p.insert("b.phi2.bias", Tensor::zeros(&[c * k * k]))
                .unwrap();
            let x = random_tensor::<f32>(&[1, c, h, w], &mut rng);
            let (_, t) = idr_ddc(&p, "b", &x, &Tensor::zeros(&[1, c]), k).unwrap();
            let (_, conv_macs) = crate::diffops::conv2d_counted(
                &x,
                &Tensor::zeros(&[c, c, k, k]),
                &Tensor::zeros(&[c]),
            )
            .unwrap();
            ratios.push((c, t.macs as f64 / conv_macs as f64));
            // interior taps only: (H−2)(W−2)·9 + edges
            let exact = c as u64 * ((h * w * 9) - 2 * 3 * (h + w) + 4) as u64;
            assert_eq!(t.macs, exact);
        }
        for (c, r) in ratios {
            assert!(r <= 1.0 / c as f64 + 1e-12, "C={c}: {r}");
        }
    }

    #[test]
    fn translation_covariant_on_interior() {
        let (net, p, mut rng) = tiny();
        let (n_big, n_win, shift) = (24, 20, 2);
        let big = random_tensor::<f64>(&[1, 3, n_big, n_big], &mut rng);
        let d = random_tensor::<f64>(&[1, 8], &mut rng);
        let window = |off: usize| {
            let mut v = vec![0.0; 3 * n_win * n_win];
            for c in 0..3 {
                for y in 0..n_win {
                    for x in 0..n_win {
                        v[(c * n_win + y) * n_win + x] =
                            big.data()[(c * n_big + y + off) * n_big + x + off];
                    }
                }
            }
            Tensor::from_vec(&[1, 3, n_win, n_win], v).unwrap()
        };
        let a = net.forward(&p, &window(0), &d).unwrap().0;
        let b = net.forward(&p, &window(shift), &d).unwrap().0;
        // receptive-field radius of the tiny net is under 6 LR pixels
        let hr = 4 * n_win;
        let margin = 4 * 6;
        let s = 4 * shift;
        for c in 0..3 {
            for y in margin..hr - margin - s {
                for x in margin..hr - margin - s {
                    let va = a.data()[(c * hr + y + s) * hr + x + s];
                    let vb = b.data()[(c * hr + y) * hr + x];
                    assert!((va - vb).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn guidance_changes_output() {
        let (net, p, mut rng) = tiny();
        let lr = random_tensor::<f64>(&[1, 3, 6, 6], &mut rng);
        let a = net
            .forward(&p, &lr, &Tensor::full(&[1, 8], -1.0))
            .unwrap()
            .0;
        let b = net.forward(&p, &lr, &Tensor::full(&[1, 8], 1.0)).unwrap().0;
        let diff: f64 = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            / a.numel() as f64;
        assert!(diff > 1e-6);
    }
}
