use crate::error::Result;
use crate::tensor::{Real, Tensor};

#[derive(Clone, Debug)]
struct AxisTaps {
    lo: Vec<usize>,
    hi: Vec<usize>,
    frac: Vec<f64>,
}

impl AxisTaps {
    /// Half-pixel-centre sampling, edges clamped.
    fn new(src: usize, dst: usize) -> Self {
        let scale = src as f64 / dst as f64;
        let mut lo = Vec::with_capacity(dst);
        let mut hi = Vec::with_capacity(dst);
        let mut frac = Vec::with_capacity(dst);
        for i in 0..dst {
            let pos = ((i as f64 + 0.5) * scale - 0.5).max(0.0);
            let l = (pos.floor() as usize).min(src - 1);
            lo.push(l);
            hi.push((l + 1).min(src - 1));
            frac.push(pos - l as f64);
        }
        Self { lo, hi, frac }
    }
}

/// Differentiable bilinear resize of NCHW tensors to a fixed output size.
#[derive(Clone, Debug)]
pub struct BilinearResize {
    out_h: usize,
    out_w: usize,
}

impl BilinearResize {
    pub fn new(out_h: usize, out_w: usize) -> Self {
        Self { out_h, out_w }
    }

    pub fn forward<T: Real>(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, c, h, w) = x.dims4()?;
        if (h, w) == (self.out_h, self.out_w) {
            return Ok(x.clone());
        }
        let ty = AxisTaps::new(h, self.out_h);
        let tx = AxisTaps::new(w, self.out_w);
        let mut out = Tensor::zeros(&[n, c, self.out_h, self.out_w]);
        let src = x.data();
        for (p, dst) in out.data_mut().chunks_mut(self.out_h * self.out_w).enumerate() {
            let plane = &src[p * h * w..(p + 1) * h * w];
            for oy in 0..self.out_h {
                let fy = T::lit(ty.frac[oy]);
                let r0 = &plane[ty.lo[oy] * w..(ty.lo[oy] + 1) * w];
                let r1 = &plane[ty.hi[oy] * w..(ty.hi[oy] + 1) * w];
                for ox in 0..self.out_w {
                    let fx = T::lit(tx.frac[ox]);
                    let top = r0[tx.lo[ox]] * (T::one() - fx) + r0[tx.hi[ox]] * fx;
                    let bot = r1[tx.lo[ox]] * (T::one() - fx) + r1[tx.hi[ox]] * fx;
                    dst[oy * self.out_w + ox] = top * (T::one() - fy) + bot * fy;
                }
            }
        }
        Ok(out)
    }

    pub fn backward<T: Real>(&self, input_shape: &[usize], grad: &Tensor<T>) -> Result<Tensor<T>> {
        let mut dx = Tensor::zeros(input_shape);
        let (_, _, h, w) = dx.dims4()?;
        if (h, w) == (self.out_h, self.out_w) {
            return Ok(grad.clone());
        }
        let ty = AxisTaps::new(h, self.out_h);
        let tx = AxisTaps::new(w, self.out_w);
        let g = grad.data();
        for (p, plane) in dx.data_mut().chunks_mut(h * w).enumerate() {
            let gp = &g[p * self.out_h * self.out_w..(p + 1) * self.out_h * self.out_w];
            for oy in 0..self.out_h {
                let fy = T::lit(ty.frac[oy]);
                for ox in 0..self.out_w {
                    let fx = T::lit(tx.frac[ox]);
                    let v = gp[oy * self.out_w + ox];
                    let top = v * (T::one() - fy);
                    let bot = v * fy;
                    plane[ty.lo[oy] * w + tx.lo[ox]] += top * (T::one() - fx);
                    plane[ty.lo[oy] * w + tx.hi[ox]] += top * fx;
                    plane[ty.hi[oy] * w + tx.lo[ox]] += bot * (T::one() - fx);
                    plane[ty.hi[oy] * w + tx.hi[ox]] += bot * fx;
                }
            }
        }
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_constants_and_is_adjoint() {
        let r = BilinearResize::new(7, 9);
        let x = Tensor::<f64>::full(&[1, 2, 4, 5], 0.3);
        let y = r.forward(&x).unwrap();
        assert!(y.data().iter().all(|&v| (v - 0.3).abs() < 1e-15));

        let x = Tensor::<f64>::from_vec(&[1, 1, 4, 5], (0..20).map(|i| (i as f64).sin()).collect()).unwrap();
        let g = Tensor::<f64>::from_vec(&[1, 1, 7, 9], (0..63).map(|i| (i as f64 * 0.3).cos()).collect()).unwrap();
        let lhs: f64 = r.forward(&x).unwrap().data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(r.backward(x.shape(), &g).unwrap().data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
