//! 2D convolution with same zero-padding via im2col + GEMM.

use ndarray::{Array2, Array3, ArrayD, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Feat, Param};

/// Square-kernel convolution, zero-padded so that stride 1 preserves the
/// spatial size and stride 2 halves it (ceil division).
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Param, // (out, in, k, k)
    pub bias: Param,   // (out,)
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl Conv2d {
    /// He-uniform initialization from the given RNG stream.
    pub fn new(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(kernel % 2 == 1, "kernel must be odd");
        let fan_in = (in_ch * kernel * kernel) as f32;
        let bound = (6.0 / fan_in).sqrt();
        let n = out_ch * in_ch * kernel * kernel;
        let w: Vec<f32> = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
        let weight = Param::new(ArrayD::from_shape_vec(IxDyn(&[out_ch, in_ch, kernel, kernel]), w).unwrap());
        let bias = Param::new(ArrayD::zeros(IxDyn(&[out_ch])));
        Self { weight, bias, in_ch, out_ch, kernel, stride }
    }

    /// All-zero weights and biases (identity residual at initialization).
    pub fn zeroed(in_ch: usize, out_ch: usize, kernel: usize, stride: usize) -> Self {
        let weight = Param::new(ArrayD::zeros(IxDyn(&[out_ch, in_ch, kernel, kernel])));
        let bias = Param::new(ArrayD::zeros(IxDyn(&[out_ch])));
        Self { weight, bias, in_ch, out_ch, kernel, stride }
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        (h.div_ceil(self.stride), w.div_ceil(self.stride))
    }

    fn im2col(&self, input: &Feat) -> Array2<f32> {
        let (c, h, w) = input.dim();
        debug_assert_eq!(c, self.in_ch);
        let (oh, ow) = self.out_size(h, w);
        let k = self.kernel;
        let pad = (k / 2) as isize;
        let src = input.as_slice().expect("standard layout");
        let mut col = Array2::<f32>::zeros((c * k * k, oh * ow));
        let dst = col.as_slice_mut().unwrap();
        for ci in 0..c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let row_base = row * oh * ow;
                    for oy in 0..oh {
                        let iy = (oy * self.stride) as isize + ky as isize - pad;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src_row = (ci * h + iy as usize) * w;
                        let dst_row = row_base + oy * ow;
                        if self.stride == 1 {
                            // contiguous span of valid ox values
                            let off = kx as isize - pad;
                            let ox_start = (-off).max(0) as usize;
                            let ox_end = ow.min((w as isize - off).max(0) as usize);
                            if ox_start < ox_end {
                                let ix_start = (ox_start as isize + off) as usize;
                                dst[dst_row + ox_start..dst_row + ox_end].copy_from_slice(
                                    &src[src_row + ix_start..src_row + ix_start + (ox_end - ox_start)],
                                );
                            }
                        } else {
                            for ox in 0..ow {
                                let ix = (ox * self.stride) as isize + kx as isize - pad;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                dst[dst_row + ox] = src[src_row + ix as usize];
                            }
                        }
                    }
                }
            }
        }
        col
    }

    pub fn forward(&self, input: &Feat) -> Feat {
        let (_, h, w) = input.dim();
        let (oh, ow) = self.out_size(h, w);
        let col = self.im2col(input);
        let wmat = self
            .weight
            .value
            .view()
            .into_shape((self.out_ch, self.in_ch * self.kernel * self.kernel))
            .unwrap()
            .into_dimensionality::<ndarray::Ix2>()
            .unwrap()
            .to_owned();
        let mut out_mat = wmat.dot(&col);
        for (o, mut row) in out_mat.rows_mut().into_iter().enumerate() {
            let b = self.bias.value[[o]];
            row.mapv_inplace(|v| v + b);
        }
        out_mat.into_shape((self.out_ch, oh, ow)).unwrap()
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    pub fn backward(&mut self, input: &Feat, grad_out: &Feat) -> Feat {
        let (c, h, w) = input.dim();
        let (oh, ow) = self.out_size(h, w);
        let k = self.kernel;
        let pad = (k / 2) as isize;
        let col = self.im2col(input);
        let gmat = grad_out
            .view()
            .into_shape((self.out_ch, oh * ow))
            .unwrap()
            .to_owned();

        // dW = gOut . col^T
        let dw = gmat.dot(&col.t());
        {
            let mut gw = self
                .weight
                .grad
                .view_mut()
                .into_shape((self.out_ch, self.in_ch * k * k))
                .unwrap();
            gw += &dw;
        }
        for o in 0..self.out_ch {
            self.bias.grad[[o]] += gmat.row(o).sum();
        }

        // dCol = W^T . gOut, then scatter back (col2im)
        let wmat = self
            .weight
            .value
            .view()
            .into_shape((self.out_ch, self.in_ch * k * k))
            .unwrap()
            .into_dimensionality::<ndarray::Ix2>()
            .unwrap()
            .to_owned();
        let dcol = wmat.t().dot(&gmat);
        let dsrc = dcol.as_slice().unwrap();
        let mut gin = Array3::<f32>::zeros((c, h, w));
        let gdst = gin.as_slice_mut().unwrap();
        for ci in 0..c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let row_base = row * oh * ow;
                    for oy in 0..oh {
                        let iy = (oy * self.stride) as isize + ky as isize - pad;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst_row = (ci * h + iy as usize) * w;
                        let src_row = row_base + oy * ow;
                        if self.stride == 1 {
                            let off = kx as isize - pad;
                            let ox_start = (-off).max(0) as usize;
                            let ox_end = ow.min((w as isize - off).max(0) as usize);
                            if ox_start < ox_end {
                                let ix_start = (ox_start as isize + off) as usize;
                                let d = &dsrc[src_row + ox_start..src_row + ox_end];
                                let g = &mut gdst[dst_row + ix_start..dst_row + ix_start + d.len()];
                                for (gi, di) in g.iter_mut().zip(d) {
                                    *gi += di;
                                }
                            }
                        } else {
                            for ox in 0..ow {
                                let ix = (ox * self.stride) as isize + kx as isize - pad;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                gdst[dst_row + ix as usize] += dsrc[src_row + ox];
                            }
                        }
                    }
                }
            }
        }
        gin
    }

    pub fn zero_grad(&mut self) {
        self.weight.zero_grad();
        self.bias.zero_grad();
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::SeedableRng;

    fn numeric_grad_input(conv: &Conv2d, input: &Feat, loss_grad: &Feat, eps: f32) -> Feat {
        let mut g = Array3::<f32>::zeros(input.dim());
        let loss = |x: &Feat| -> f32 {
            let out = conv.forward(x);
            (&out * loss_grad).sum()
        };
        for idx in 0..input.len() {
            let mut plus = input.clone();
            let mut minus = input.clone();
            plus.as_slice_mut().unwrap()[idx] += eps;
            minus.as_slice_mut().unwrap()[idx] -= eps;
            g.as_slice_mut().unwrap()[idx] = (loss(&plus) - loss(&minus)) / (2.0 * eps);
        }
        g
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for stride in [1usize, 2] {
            let mut conv = Conv2d::new(2, 3, 3, stride, &mut rng);
            let input = Array3::from_shape_fn((2, 6, 5), |(c, y, x)| {
                ((c * 17 + y * 5 + x * 3) % 13) as f32 / 13.0 - 0.4
            });
            let (oh, ow) = conv.out_size(6, 5);
            let loss_grad = Array3::from_shape_fn((3, oh, ow), |(c, y, x)| {
                ((c + y * 2 + x) % 5) as f32 / 5.0 - 0.3
            });
            let gin = conv.backward(&input, &loss_grad);
            let gnum = numeric_grad_input(&conv, &input, &loss_grad, 1e-2);
            for (a, b) in gin.iter().zip(gnum.iter()) {
                assert!((a - b).abs() < 2e-3, "analytic {a} vs numeric {b} (stride {stride})");
            }
        }
    }

    #[test]
    fn conv_weight_grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut conv = Conv2d::new(1, 2, 3, 1, &mut rng);
        let input = Array3::from_shape_fn((1, 5, 5), |(_, y, x)| ((y * 7 + x) % 9) as f32 / 9.0);
        let loss_grad = Array3::from_shape_fn((2, 5, 5), |(c, y, x)| ((c + y + x) % 3) as f32 - 1.0);
        conv.zero_grad();
        conv.backward(&input, &loss_grad);
        let analytic = conv.weight.grad.clone();
        let eps = 1e-2;
        for idx in 0..conv.weight.value.len() {
            let orig = conv.weight.value.as_slice_mut().unwrap()[idx];
            conv.weight.value.as_slice_mut().unwrap()[idx] = orig + eps;
            let lp = (&conv.forward(&input) * &loss_grad).sum();
            conv.weight.value.as_slice_mut().unwrap()[idx] = orig - eps;
            let lm = (&conv.forward(&input) * &loss_grad).sum();
            conv.weight.value.as_slice_mut().unwrap()[idx] = orig;
            let num = (lp - lm) / (2.0 * eps);
            let ana = analytic.as_slice().unwrap()[idx];
            assert!((ana - num).abs() < 2e-3, "dW analytic {ana} vs numeric {num}");
        }
    }

    #[test]
    fn stride2_halves_spatial_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let conv = Conv2d::new(1, 1, 3, 2, &mut rng);
        let input = Array3::<f32>::zeros((1, 7, 8));
        let out = conv.forward(&input);
        assert_eq!(out.dim(), (1, 4, 4));
    }
}
