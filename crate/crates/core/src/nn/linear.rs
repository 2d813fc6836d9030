use rand::Rng;

use super::{join, uniform_init, Module, Param};
use crate::error::{Error, Result};
use crate::tensor::{gemm, Real, Tensor};

/// Fully connected layer on `[N, in]` inputs; weight is `[out, in]`.
#[derive(Clone, Debug)]
pub struct Linear<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    in_features: usize,
    out_features: usize,
}

impl<T: Real> Linear<T> {
    pub fn new<R: Rng + ?Sized>(in_features: usize, out_features: usize, rng: &mut R) -> Self {
        Self {
            weight: Param::new(uniform_init(&[out_features, in_features], in_features, rng)),
            bias: Param::new(uniform_init(&[out_features], in_features, rng)),
            in_features,
            out_features,
        }
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<usize> {
        let (n, f) = x.dims2()?;
        if f != self.in_features {
            return Err(Error::shape("Linear", self.in_features, f));
        }
        Ok(n)
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let n = self.check_input(x)?;
        let mut out = Tensor::zeros(&[n, self.out_features]);
        for row in out.data_mut().chunks_mut(self.out_features) {
            row.copy_from_slice(self.bias.value.data());
        }
        gemm(
            false, true, n, self.out_features, self.in_features, T::one(), x.data(),
            self.weight.value.data(), T::one(), out.data_mut(),
        );
        Ok(out)
    }

    pub fn backward(&mut self, x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let n = self.check_input(x)?;
        if grad_out.shape() != [n, self.out_features] {
            return Err(Error::shape(
                "Linear::backward",
                format!("[{n}, {}]", self.out_features),
                format!("{:?}", grad_out.shape()),
            ));
        }
        gemm(
            true, false, self.out_features, self.in_features, n, T::one(), grad_out.data(),
            x.data(), T::one(), self.weight.grad.data_mut(),
        );
        for row in grad_out.data().chunks(self.out_features) {
            for (g, &v) in self.bias.grad.data_mut().iter_mut().zip(row) {
                *g += v;
            }
        }
        let mut dx = Tensor::zeros(x.shape());
        gemm(
            false, false, n, self.in_features, self.out_features, T::one(), grad_out.data(),
            self.weight.value.data(), T::zero(), dx.data_mut(),
        );
        Ok(dx)
    }

    pub fn macs(&self) -> (u64, u64) {
        let m = (self.in_features * self.out_features) as u64;
        (m, self.out_features as u64)
    }
}

impl<T: Real> Module<T> for Linear<T> {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        f(&join(prefix, "weight"), &self.weight);
        f(&join(prefix, "bias"), &self.bias);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn forward_is_affine_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut lin = Linear::<f64>::new(3, 2, &mut rng);
        lin.weight.value.data_mut().copy_from_slice(&[1., 2., 3., -1., 0., 1.]);
        lin.bias.value.data_mut().copy_from_slice(&[0.5, -0.5]);
        let x = Tensor::from_vec(&[1, 3], vec![1., 1., 2.]).unwrap();
        assert_eq!(lin.forward(&x).unwrap().data(), &[9.5, 0.5]);
    }

    #[test]
    fn backward_gives_transposed_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut lin = Linear::<f64>::new(2, 2, &mut rng);
        lin.weight.value.data_mut().copy_from_slice(&[1., 2., 3., 4.]);
        let x = Tensor::from_vec(&[1, 2], vec![5., 6.]).unwrap();
        let g = Tensor::from_vec(&[1, 2], vec![1., -1.]).unwrap();
        let dx = lin.backward(&x, &g).unwrap();
        assert_eq!(dx.data(), &[-2., -2.]);
        assert_eq!(lin.weight.grad.data(), &[5., 6., -5., -6.]);
        assert_eq!(lin.bias.grad.data(), &[1., -1.]);
    }
}
