use super::{join, Module, Param};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient through a ReLU given its output; the subgradient at 0 is 0.
pub fn relu_backward<T: Real>(out: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
    out.check_same("relu_backward", grad)?;
    let data = out
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&o, &g)| if o > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(out.shape(), data)
}

pub fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// Global average pooling `[N, C, H, W] -> [N, C]`.
pub fn gap<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4()?;
    let hw = h * w;
    let inv = T::one() / T::lit(hw as f64);
    let data = x
        .data()
        .chunks(hw)
        .map(|plane| plane.iter().copied().sum::<T>() * inv)
        .collect();
    Tensor::from_vec(&[n, c], data)
}

pub fn gap_backward<T: Real>(grad: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
    let (n, c) = grad.dims2()?;
    let hw = h * w;
    let inv = T::one() / T::lit(hw as f64);
    let mut out = Tensor::zeros(&[n, c, h, w]);
    for (plane, &g) in out.data_mut().chunks_mut(hw).zip(grad.data()) {
        plane.iter_mut().for_each(|v| *v = g * inv);
    }
    Ok(out)
}

/// `x[n, c, :, :] * scale[n, c]`.
pub fn channel_scale<T: Real>(x: &Tensor<T>, scale: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4()?;
    if scale.shape() != [n, c] {
        return Err(Error::shape("channel_scale", format!("[{n}, {c}]"), format!("{:?}", scale.shape())));
    }
    let hw = h * w;
    let mut out = x.clone();
    for (plane, &s) in out.data_mut().chunks_mut(hw).zip(scale.data()) {
        plane.iter_mut().for_each(|v| *v *= s);
    }
    Ok(out)
}

/// Returns `(d_x, d_scale)` for [`channel_scale`].
pub fn channel_scale_backward<T: Real>(
    x: &Tensor<T>,
    scale: &Tensor<T>,
    grad: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    x.check_same("channel_scale_backward", grad)?;
    let (n, c, h, w) = x.dims4()?;
    let hw = h * w;
    let dx = channel_scale(grad, scale)?;
    let mut ds = Tensor::zeros(&[n, c]);
    for ((xp, gp), d) in x
        .data()
        .chunks(hw)
        .zip(grad.data().chunks(hw))
        .zip(ds.data_mut().iter_mut())
    {
        *d = xp.iter().zip(gp).map(|(&a, &b)| a * b).sum();
    }
    Ok((dx, ds))
}

/// Per-channel scale and shift, `y = x * gamma[c] + beta[c]`.
///
/// Stands in for batch normalization with frozen statistics inside the
/// embedding encoder, so both branches of a pair see the same function.
#[derive(Clone, Debug)]
pub struct ChannelAffine<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
}

impl<T: Real> ChannelAffine<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::new(Tensor::full(&[channels], T::one())),
            beta: Param::new(Tensor::zeros(&[channels])),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (_, c, h, w) = x.dims4()?;
        if c != self.gamma.len() {
            return Err(Error::shape("ChannelAffine", self.gamma.len(), c));
        }
        let hw = h * w;
        let mut out = x.clone();
        for (i, plane) in out.data_mut().chunks_mut(hw).enumerate() {
            let ch = i % c;
            let (g, b) = (self.gamma.value.data()[ch], self.beta.value.data()[ch]);
            plane.iter_mut().for_each(|v| *v = *v * g + b);
        }
        Ok(out)
    }

    pub fn backward(&mut self, x: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
        x.check_same("ChannelAffine::backward", grad)?;
        let (_, c, h, w) = x.dims4()?;
        let hw = h * w;
        let mut dx = grad.clone();
        for (i, (plane, xp)) in dx.data_mut().chunks_mut(hw).zip(x.data().chunks(hw)).enumerate() {
            let ch = i % c;
            let g = self.gamma.value.data()[ch];
            let mut dg = T::zero();
            let mut db = T::zero();
            for (d, &xv) in plane.iter_mut().zip(xp) {
                dg += *d * xv;
                db += *d;
                *d *= g;
            }
            self.gamma.grad.data_mut()[ch] += dg;
            self.beta.grad.data_mut()[ch] += db;
        }
        Ok(dx)
    }
}

impl<T: Real> Module<T> for ChannelAffine<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        f(&join(prefix, "gamma"), &self.gamma);
        f(&join(prefix, "beta"), &self.beta);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f(&join(prefix, "gamma"), &mut self.gamma);
        f(&join(prefix, "beta"), &mut self.beta);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_of_constant_planes_is_exact() {
        let x = Tensor::<f64>::from_vec(&[1, 2, 2, 2], vec![3.; 4].into_iter().chain(vec![-1.5; 4]).collect())
            .unwrap();
        assert_eq!(gap(&x).unwrap().data(), &[3.0, -1.5]);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!(sigmoid(-800.0f64) >= 0.0);
        assert!(sigmoid(800.0f64) <= 1.0);
    }

    #[test]
    fn relu_backward_masks_non_positive_outputs() {
        let out = Tensor::<f32>::from_vec(&[3], vec![0.0, 2.0, 0.0]).unwrap();
        let g = Tensor::from_vec(&[3], vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(relu_backward(&out, &g).unwrap().data(), &[0.0, 1.0, 0.0]);
    }
}
