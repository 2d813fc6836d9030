use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Max pooling with padding treated as `-inf`.
#[derive(Clone, Copy, Debug)]
pub struct MaxPool2d {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl MaxPool2d {
    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.padding - self.kernel) / self.stride + 1,
            (w + 2 * self.padding - self.kernel) / self.stride + 1,
        )
    }

    /// Returns the pooled tensor and, per output element, the flat index of the
    /// winning input element.
    pub fn forward<T: Real>(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
        let (n, c, h, w) = x.dims4()?;
        if h + 2 * self.padding < self.kernel || w + 2 * self.padding < self.kernel {
            return Err(Error::shape("MaxPool2d", "input at least kernel-sized", format!("{h}x{w}")));
        }
        let (oh, ow) = self.output_size(h, w);
        let mut out = Tensor::zeros(&[n, c, oh, ow]);
        let mut argmax = vec![0usize; n * c * oh * ow];
        let data = x.data();
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = T::neg_infinity();
                    let mut best_idx = base;
                    for ky in 0..self.kernel {
                        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..self.kernel {
                            let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let idx = base + iy as usize * w + ix as usize;
                            if data[idx] > best {
                                best = data[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let o = (plane * oh + oy) * ow + ox;
                    out.data_mut()[o] = best;
                    argmax[o] = best_idx;
                }
            }
        }
        Ok((out, argmax))
    }

    pub fn backward<T: Real>(
        &self,
        input_shape: &[usize],
        argmax: &[usize],
        grad: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        if grad.len() != argmax.len() {
            return Err(Error::shape("MaxPool2d::backward", argmax.len(), grad.len()));
        }
        let mut dx = Tensor::zeros(input_shape);
        for (&idx, &g) in argmax.iter().zip(grad.data()) {
            dx.data_mut()[idx] += g;
        }
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_window_maximum() {
        let pool = MaxPool2d { kernel: 3, stride: 2, padding: 1 };
        let x = Tensor::<f32>::from_vec(&[1, 1, 4, 4], (0..16).map(|v| v as f32).collect()).unwrap();
        let (y, idx) = pool.forward(&x).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(y.data(), &[5.0, 7.0, 13.0, 15.0]);
        let g = Tensor::full(&[1, 1, 2, 2], 1.0f32);
        let dx = pool.backward(x.shape(), &idx, &g).unwrap();
        assert_eq!(dx.sum(), 4.0);
        assert_eq!(dx.data()[15], 1.0);
    }
}
