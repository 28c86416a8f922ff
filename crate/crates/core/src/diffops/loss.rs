//! Reconstruction and distillation losses. Each returns the scalar value and the
//! gradient with respect to its first differentiable argument.

use serde::{Deserialize, Serialize};

use super::tensor::{lit, Real, Tensor};
use crate::error::{Error, Result};

/// A scalar loss and its gradient.
#[derive(Debug, Clone)]
pub struct Loss<T> {
    pub value: T,
    pub grad: Tensor<T>,
}

fn sign<T: Real>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Mean absolute error; gradient with respect to `pred`. Ties get subgradient 0.
pub fn l1_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Loss<T>> {
    pred.check_same_shape(target, "l1_loss")?;
    let inv = T::one() / lit::<T>(pred.numel() as f64);
    let mut value = T::zero();
    let mut grad = Tensor::zeros(pred.shape());
    for ((g, &p), &t) in grad
        .data_mut()
        .iter_mut()
        .zip(pred.data())
        .zip(target.data())
    {
        let d = p - t;
        value = value + d.abs();
        *g = sign(d) * inv;
    }
    Ok(Loss {
        value: value * inv,
        grad,
    })
}

fn log_softmax<T: Real>(row: &[T], out: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = v - lse;
    }
}

/// `mean_b Σ_j p_j log(p_j / q_j)` with `p = softmax(teacher_b)` and
/// `q = softmax(student_b)`. Both are `[N, F]`; the gradient is with respect to
/// the student logits only.
pub fn kl_loss<T: Real>(teacher: &Tensor<T>, student: &Tensor<T>) -> Result<Loss<T>> {
    teacher.check_same_shape(student, "kl_loss")?;
    let (n, f) = teacher.dims2()?;
    let inv_n = T::one() / lit::<T>(n as f64);
    let mut value = T::zero();
    let mut grad = Tensor::zeros(student.shape());
    let mut log_p = vec![T::zero(); f];
    let mut log_q = vec![T::zero(); f];
    for b in 0..n {
        log_softmax(&teacher.data()[b * f..(b + 1) * f], &mut log_p);
        log_softmax(&student.data()[b * f..(b + 1) * f], &mut log_q);
        let g = &mut grad.data_mut()[b * f..(b + 1) * f];
        for j in 0..f {
            let p = log_p[j].exp();
            let q = log_q[j].exp();
            if p > T::zero() {
                value = value + p * (log_p[j] - log_q[j]);
            }
            g[j] = (q - p) * inv_n;
        }
    }
    Ok(Loss {
        value: value * inv_n,
        grad,
    })
}

/// Mean absolute difference between teacher and student vectors.
pub fn kd_l1_loss<T: Real>(teacher: &Tensor<T>, student: &Tensor<T>) -> Result<Loss<T>> {
    teacher.dims2()?;
    l1_loss(student, teacher)
}

/// Mean squared difference between teacher and student vectors.
pub fn kd_l2_loss<T: Real>(teacher: &Tensor<T>, student: &Tensor<T>) -> Result<Loss<T>> {
    teacher.check_same_shape(student, "kd_l2_loss")?;
    teacher.dims2()?;
    let inv = T::one() / lit::<T>(student.numel() as f64);
    let two = lit::<T>(2.0);
    let mut value = T::zero();
    let mut grad = Tensor::zeros(student.shape());
    for ((g, &s), &t) in grad
        .data_mut()
        .iter_mut()
        .zip(student.data())
        .zip(teacher.data())
    {
        let d = s - t;
        value = value + d * d;
        *g = two * d * inv;
    }
    Ok(Loss {
        value: value * inv,
        grad,
    })
}

/// Which distillation loss drives the student.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KdLossKind {
    #[default]
    Kl,
    L1,
    L2,
}

impl KdLossKind {
    pub const ALL: [KdLossKind; 3] = [KdLossKind::Kl, KdLossKind::L1, KdLossKind::L2];

    pub fn apply<T: Real>(self, teacher: &Tensor<T>, student: &Tensor<T>) -> Result<Loss<T>> {
        match self {
            KdLossKind::Kl => kl_loss(teacher, student),
            KdLossKind::L1 => kd_l1_loss(teacher, student),
            KdLossKind::L2 => kd_l2_loss(teacher, student),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KdLossKind::Kl => "kl",
            KdLossKind::L1 => "l1",
            KdLossKind::L2 => "l2",
        }
    }
}

impl std::str::FromStr for KdLossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kl" => Ok(KdLossKind::Kl),
            "l1" => Ok(KdLossKind::L1),
            "l2" => Ok(KdLossKind::L2),
            other => Err(Error::invalid(format!("unknown KD loss `{other}`"))),
        }
    }
}
