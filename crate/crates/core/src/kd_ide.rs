//! Implicit degradation estimators.
//!
//! The teacher sees the LR image concatenated with the pixel-unshuffled HR
//! image (3 + 48 = 51 channels); the student sees the LR image alone. Both run
//! `head conv → residual blocks → global average pool → fc1 → ReLU → fc2`,
//! producing the distillation vector `D′ ∈ R^{4C}`, then compress it with a
//! final linear layer to the guidance vector `D ∈ R^C`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffops::named::{conv, conv_backward, dense, dense_backward};
use crate::diffops::{
    global_avg_pool, global_avg_pool_backward, init, relu, relu_backward, ParamSet, Real, Tensor,
};
use crate::error::{Error, Result};
use crate::imaging::pixel_unshuffle;

/// Input channels of the student (LR only).
pub const STUDENT_IN_CHANNELS: usize = 3;
/// Input channels of the teacher (LR + unshuffled HR at ×4).
pub const TEACHER_IN_CHANNELS: usize = 51;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdeConfig {
    pub channels: usize,
    pub n_blocks: usize,
    pub in_channels: usize,
    pub scale: usize,
}

impl IdeConfig {
    pub fn student(channels: usize, n_blocks: usize) -> Self {
        Self {
            channels,
            n_blocks,
            in_channels: STUDENT_IN_CHANNELS,
            scale: 4,
        }
    }

    pub fn teacher(channels: usize, n_blocks: usize) -> Self {
        Self {
            in_channels: TEACHER_IN_CHANNELS,
            ..Self::student(channels, n_blocks)
        }
    }

    pub fn is_teacher(&self) -> bool {
        self.in_channels == TEACHER_IN_CHANNELS
    }

    /// The student counterpart of this configuration.
    pub fn as_student(&self) -> Self {
        Self {
            in_channels: STUDENT_IN_CHANNELS,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if ![STUDENT_IN_CHANNELS, TEACHER_IN_CHANNELS].contains(&self.in_channels) {
            return Err(Error::invalid(format!(
                "estimator input channels must be 3 or 51, got {}",
                self.in_channels
            )));
        }
        if self.channels < 4 {
            return Err(Error::invalid(format!(
                "estimator width must be >= 4, got {}",
                self.channels
            )));
        }
        if self.in_channels == TEACHER_IN_CHANNELS && self.scale != 4 {
            return Err(Error::invalid(
                "the 51-channel teacher input assumes scale 4",
            ));
        }
        Ok(())
    }

    /// Length of `D′`.
    pub fn dprime_len(&self) -> usize {
        4 * self.channels
    }
}

/// Guidance vector `d` (`[N, C]`) and distillation vector `d_prime` (`[N, 4C]`).
#[derive(Debug, Clone, PartialEq)]
pub struct IdrPair<T> {
    pub d: Tensor<T>,
    pub d_prime: Tensor<T>,
}

/// Concatenates LR (`[N, 3, H, W]`) with the ×`scale` pixel-unshuffled HR.
pub fn make_teacher_input<T: Real>(
    lr: &Tensor<T>,
    hr: &Tensor<T>,
    scale: usize,
) -> Result<Tensor<T>> {
    let (n, c, h, w) = lr.dims4()?;
    let (hn, hc, hh, hw) = hr.dims4()?;
    if n != hn || c != hc || hh != h * scale || hw != w * scale {
        return Err(Error::shape(format!(
            "HR {:?} is not the ×{scale} counterpart of LR {:?}",
            hr.shape(),
            lr.shape()
        )));
    }
    Tensor::concat_channels(lr, &pixel_unshuffle(hr, scale)?)
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct IdeTrace<T> {
    input: Tensor<T>,
    blocks: Vec<BlockTrace<T>>,
    pooled_from: Vec<usize>,
    pooled: Tensor<T>,
    fc1_out: Tensor<T>,
    fc1_act: Tensor<T>,
    d_prime: Tensor<T>,
}

#[derive(Debug, Clone)]
struct BlockTrace<T> {
    input: Tensor<T>,
    conv1_out: Tensor<T>,
    act: Tensor<T>,
}

fn block_name(i: usize, conv: &str) -> String {
    format!("blocks.{i}.{conv}")
}

/// The estimator network, parametrised by an [`IdeConfig`].
#[derive(Debug, Clone, Copy)]
pub struct KdIde {
    pub config: IdeConfig,
}

impl KdIde {
    pub fn new(config: IdeConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    /// Fresh parameters: fan-in Kaiming convolutions (residual output convs
    /// scaled by 0.1), zero conv biases, uniform `±1/sqrt(fan_in)` dense layers.
    pub fn init_params<T: Real>(&self, rng: &mut impl Rng) -> ParamSet<T> {
        let c = self.config.channels;
        let mut p = ParamSet::new();
        let mut add =
            |name: String, t: Tensor<T>| p.insert(name, t).expect("unique parameter names");
        add(
            "head.weight".into(),
            init::conv_weight(c, self.config.in_channels, 3, 1.0, rng),
        );
        add("head.bias".into(), Tensor::zeros(&[c]));
        for i in 0..self.config.n_blocks {
            add(
                format!("{}.weight", block_name(i, "conv1")),
                init::conv_weight(c, c, 3, 1.0, rng),
            );
            add(
                format!("{}.bias", block_name(i, "conv1")),
                Tensor::zeros(&[c]),
            );
            add(
                format!("{}.weight", block_name(i, "conv2")),
                init::conv_weight(c, c, 3, 0.1, rng),
            );
            add(
                format!("{}.bias", block_name(i, "conv2")),
                Tensor::zeros(&[c]),
            );
        }
        for (name, fin, fout) in [
            ("fc1", c, 4 * c),
            ("fc2", 4 * c, 4 * c),
            ("compress", 4 * c, c),
        ] {
            add(
                format!("{name}.weight"),
                init::uniform_fan_in(&[fout, fin], fin, rng),
            );
            add(
                format!("{name}.bias"),
                init::uniform_fan_in(&[fout], fin, rng),
            );
        }
        p
    }

    pub fn forward<T: Real>(
        &self,
        params: &ParamSet<T>,
        input: &Tensor<T>,
    ) -> Result<(IdrPair<T>, IdeTrace<T>)> {
        let (_, c_in, _, _) = input.dims4()?;
        if c_in != self.config.in_channels {
            return Err(Error::shape(format!(
                "estimator expects {} input channels, got {c_in}",
                self.config.in_channels
            )));
        }
        let (mut x, _) = conv(params, "head", input)?;
        let mut blocks = Vec::with_capacity(self.config.n_blocks);
        for i in 0..self.config.n_blocks {
            let (conv1_out, _) = conv(params, &block_name(i, "conv1"), &x)?;
            let act = relu(&conv1_out);
            let (mut y, _) = conv(params, &block_name(i, "conv2"), &act)?;
            y.add_assign(&x)?;
            blocks.push(BlockTrace {
                input: x,
                conv1_out,
                act,
            });
            x = y;
        }
        let pooled = global_avg_pool(&x)?;
        let fc1_out = dense(params, "fc1", &pooled)?;
        let fc1_act = relu(&fc1_out);
        let d_prime = dense(params, "fc2", &fc1_act)?;
        let d = dense(params, "compress", &d_prime)?;
        let trace = IdeTrace {
            input: input.clone(),
            blocks,
            pooled_from: x.shape().to_vec(),
            pooled,
            fc1_out,
            fc1_act,
            d_prime: d_prime.clone(),
        };
        Ok((IdrPair { d, d_prime }, trace))
    }

    /// Back-propagates gradients arriving at `D` and/or `D′` into `grads`.
    /// Returns the input gradient when `want_input_grad` is set.
    pub fn backward<T: Real>(
        &self,
        params: &ParamSet<T>,
        trace: &IdeTrace<T>,
        grad_d: Option<&Tensor<T>>,
        grad_d_prime: Option<&Tensor<T>>,
        grads: &mut ParamSet<T>,
        want_input_grad: bool,
    ) -> Result<Option<Tensor<T>>> {
        let mut g_dp = match grad_d_prime {
            Some(g) => {
                g.check_same_shape(&trace.d_prime, "grad of D′")?;
                g.clone()
            }
            None => Tensor::zeros(trace.d_prime.shape()),
        };
        if let Some(gd) = grad_d {
            let back = dense_backward(params, "compress", &trace.d_prime, gd, grads)?;
            g_dp.add_assign(&back)?;
        } else {
            // the compression layer still receives a (zero) gradient entry
            let zeros = Tensor::zeros(&[trace.d_prime.shape()[0], self.config.channels]);
            dense_backward(params, "compress", &trace.d_prime, &zeros, grads)?;
        }
        let g_act = dense_backward(params, "fc2", &trace.fc1_act, &g_dp, grads)?;
        let g_fc1 = relu_backward(&trace.fc1_out, &g_act)?;
        let g_pool = dense_backward(params, "fc1", &trace.pooled, &g_fc1, grads)?;
        let mut g = global_avg_pool_backward(&trace.pooled_from, &g_pool)?;
        for (i, b) in trace.blocks.iter().enumerate().rev() {
            let g_act = conv_backward(params, &block_name(i, "conv2"), &b.act, &g, grads, true)?
                .expect("input gradient requested");
            let g_c1 = relu_backward(&b.conv1_out, &g_act)?;
            let g_in = conv_backward(
                params,
                &block_name(i, "conv1"),
                &b.input,
                &g_c1,
                grads,
                true,
            )?
            .expect("input gradient requested");
            g.add_assign(&g_in)?;
        }
        conv_backward(params, "head", &trace.input, &g, grads, want_input_grad)
    }
}

/// Builds student parameters from a trained teacher: every tensor is copied
/// verbatim except the first convolution, whose weights are sliced to the
/// three LR input channels.
pub fn init_student_from_teacher<T: Real>(
    teacher: &ParamSet<T>,
    teacher_config: &IdeConfig,
    student_config: &IdeConfig,
) -> Result<ParamSet<T>> {
    if teacher_config.as_student() != *student_config {
        return Err(Error::invalid(format!(
            "teacher {teacher_config:?} and student {student_config:?} differ beyond input channels"
        )));
    }
    let expected = KdIde::new(*teacher_config)?.init_params::<T>(&mut ChaCha8Rng::seed_from_u64(0));
    expected.check_compatible(teacher)?;
    let mut out = ParamSet::new();
    for (name, t) in teacher.iter() {
        if name == "head.weight" {
            let (c_out, c_in, k, _) = t.dims4()?;
            let kk = k * k;
            let mut data = Vec::with_capacity(c_out * STUDENT_IN_CHANNELS * kk);
            for co in 0..c_out {
                data.extend_from_slice(
                    &t.data()[co * c_in * kk..co * c_in * kk + STUDENT_IN_CHANNELS * kk],
                );
            }
            out.insert(
                name,
                Tensor::from_vec(&[c_out, STUDENT_IN_CHANNELS, k, k], data)?,
            )?;
        } else {
            out.insert(name, t.clone())?;
        }
    }
    Ok(out)
}
