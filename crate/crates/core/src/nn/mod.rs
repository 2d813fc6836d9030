//! Layers with explicit forward/backward passes.
//!
//! Forward passes borrow the layer immutably and return activations; callers
//! keep whatever the backward pass needs. Backward passes accumulate into
//! [`Param::grad`].

mod conv;
mod conv_transpose;
mod functional;
mod linear;
mod pool;
mod resize;

pub use conv::Conv2d;
pub use conv_transpose::ConvTranspose2d;
pub use functional::{
    channel_scale, channel_scale_backward, gap, gap_backward, relu, relu_backward, sigmoid,
    ChannelAffine,
};
pub use linear::Linear;
pub use pool::MaxPool2d;
pub use resize::BilinearResize;

use rand::Rng;

use crate::tensor::{Real, Tensor};

#[derive(Clone, Debug)]
pub struct Param<T> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Real> Param<T> {
    pub fn new(value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Anything owning named parameters.
pub trait Module<T: Real> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>));
    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>));

    fn zero_grad(&mut self) {
        self.visit_params_mut("", &mut |_, p| p.zero_grad());
    }

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit_params("", &mut |_, p| n += p.len());
        n
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit_params("", &mut |name, _| names.push(name.to_string()));
        names
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, the usual default for conv and linear layers.
pub(crate) fn uniform_init<T: Real, R: Rng + ?Sized>(
    shape: &[usize],
    fan_in: usize,
    rng: &mut R,
) -> Tensor<T> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| T::lit(rng.random_range(-bound..bound)))
        .collect();
    Tensor::from_vec(shape, data).expect("shape matches element count")
}
