//! 2D convolution (cross-correlation, zero padding) with explicit forward and
//! backward passes.
//!
//! Layout: activations `[h, w, c]`, weights `[out_ch, kh, kw, in_ch]`. The
//! innermost loops run over the contiguous input-channel axis. Output rows
//! (forward / input gradient) and output channels (weight gradient) are
//! processed as disjoint chunks, so parallel and sequential builds produce
//! identical bits.

use crate::error::{CoreError, Result};
use crate::parallel::for_each_chunk_mut;
use crate::tensor::{Scalar, Tensor};
use rand::Rng;

#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub w: Tensor<T>,
    pub b: Tensor<T>,
    pub gw: Tensor<T>,
    pub gb: Tensor<T>,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl<T: Scalar> Conv2d<T> {
    /// Uniform init in +-1/sqrt(fan_in), zero bias.
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = (kernel * kernel * in_ch) as f64;
        let bound = 1.0 / fan_in.sqrt();
        let data = (0..out_ch * kernel * kernel * in_ch)
            .map(|_| T::from_f64(rng.gen_range(-bound..bound)))
            .collect();
        Conv2d {
            w: Tensor::from_vec(&[out_ch, kernel, kernel, in_ch], data),
            b: Tensor::zeros(&[out_ch]),
            gw: Tensor::zeros(&[out_ch, kernel, kernel, in_ch]),
            gb: Tensor::zeros(&[out_ch]),
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
        }
    }

    pub fn zero_grads(&mut self) {
        self.gw.fill(T::zero());
        self.gb.fill(T::zero());
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }

    pub fn out_dims(&self, h: usize, w: usize) -> (usize, usize) {
        let oh = (h + 2 * self.pad - self.kernel) / self.stride + 1;
        let ow = (w + 2 * self.pad - self.kernel) / self.stride + 1;
        (oh, ow)
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(usize, usize)> {
        let (h, w, c) = x.dims3();
        if c != self.in_ch {
            return Err(CoreError::Contract(format!(
                "conv expects {} input channels, got {c}",
                self.in_ch
            )));
        }
        if h + 2 * self.pad < self.kernel || w + 2 * self.pad < self.kernel {
            return Err(CoreError::Contract(format!(
                "input {h}x{w} smaller than kernel {}",
                self.kernel
            )));
        }
        Ok((h, w))
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (h, w) = self.check_input(x)?;
        let (oh, ow) = self.out_dims(h, w);
        let (k, s, p) = (self.kernel, self.stride, self.pad);
        let (ic, oc) = (self.in_ch, self.out_ch);
        let xd = x.data();
        let bd = self.b.data();

        // Weights transposed to [ky, kx, ic, oc] so the inner accumulation
        // runs over contiguous output channels.
        let wd = self.w.data();
        let mut wt = vec![T::zero(); k * k * ic * oc];
        for o in 0..oc {
            for ky in 0..k {
                for kx in 0..k {
                    for i in 0..ic {
                        wt[((ky * k + kx) * ic + i) * oc + o] = wd[((o * k + ky) * k + kx) * ic + i];
                    }
                }
            }
        }

        let mut out = Tensor::zeros(&[oh, ow, oc]);
        for_each_chunk_mut(out.data_mut(), ow * oc, |oy, row| {
            for ox in 0..ow {
                let acc = &mut row[ox * oc..(ox + 1) * oc];
                acc.copy_from_slice(bd);
                for ky in 0..k {
                    let iy = (oy * s + ky) as isize - p as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let iy = iy as usize;
                    for kx in 0..k {
                        let ix = (ox * s + kx) as isize - p as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let xin = &xd[(iy * w + ix as usize) * ic..][..ic];
                        let wbase = &wt[(ky * k + kx) * ic * oc..][..ic * oc];
                        for (i, &xv) in xin.iter().enumerate() {
                            if xv == T::zero() {
                                continue;
                            }
                            let wrow = &wbase[i * oc..][..oc];
                            for (a, &wv) in acc.iter_mut().zip(wrow) {
                                *a += xv * wv;
                            }
                        }
                    }
                }
            }
        });
        Ok(out)
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let (h, w) = self.check_input(x)?;
        let (oh, ow) = self.out_dims(h, w);
        let (goh, gow, goc) = grad_out.dims3();
        if (goh, gow, goc) != (oh, ow, self.out_ch) {
            return Err(CoreError::Contract(format!(
                "grad_out {goh}x{gow}x{goc} does not match conv output {oh}x{ow}x{}",
                self.out_ch
            )));
        }
        let (k, s, p) = (self.kernel, self.stride, self.pad);
        let (ic, oc) = (self.in_ch, self.out_ch);
        let xd = x.data();
        let god = grad_out.data();

        // d/dW: each output channel owns a disjoint slice of gw.
        for_each_chunk_mut(self.gw.data_mut(), k * k * ic, |o, gw_o| {
            for oy in 0..oh {
                for ox in 0..ow {
                    let g = god[(oy * ow + ox) * oc + o];
                    if g == T::zero() {
                        continue;
                    }
                    for ky in 0..k {
                        let iy = (oy * s + ky) as isize - p as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * s + kx) as isize - p as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let xin = &xd[((iy as usize) * w + ix as usize) * ic..][..ic];
                            let gslice = &mut gw_o[(ky * k + kx) * ic..][..ic];
                            for i in 0..ic {
                                gslice[i] += g * xin[i];
                            }
                        }
                    }
                }
            }
        });

        // d/db
        for (o, gb) in self.gb.data_mut().iter_mut().enumerate() {
            let mut sum = T::zero();
            for oy in 0..oh {
                for ox in 0..ow {
                    sum += god[(oy * ow + ox) * oc + o];
                }
            }
            *gb += sum;
        }

        // d/dx as a gather: for each input position, the output positions
        // whose window covers it.
        let wd = self.w.data();
        let mut grad_in = Tensor::zeros(&[h, w, ic]);
        for_each_chunk_mut(grad_in.data_mut(), w * ic, |iy, gin_row| {
            for ky in 0..k {
                let oy_num = iy as isize + p as isize - ky as isize;
                if oy_num < 0 || oy_num % s as isize != 0 {
                    continue;
                }
                let oy = (oy_num / s as isize) as usize;
                if oy >= oh {
                    continue;
                }
                for ix in 0..w {
                    for kx in 0..k {
                        let ox_num = ix as isize + p as isize - kx as isize;
                        if ox_num < 0 || ox_num % s as isize != 0 {
                            continue;
                        }
                        let ox = (ox_num / s as isize) as usize;
                        if ox >= ow {
                            continue;
                        }
                        let go = &god[(oy * ow + ox) * oc..][..oc];
                        let gin = &mut gin_row[ix * ic..][..ic];
                        for (o, &g) in go.iter().enumerate() {
                            if g == T::zero() {
                                continue;
                            }
                            let wrow = &wd[((o * k + ky) * k + kx) * ic..][..ic];
                            for i in 0..ic {
                                gin[i] += g * wrow[i];
                            }
                        }
                    }
                }
            }
        });
        Ok(grad_in)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Naive sliding-window convolution used as the oracle.
    fn conv_oracle(
        x: &Tensor<f64>,
        w: &Tensor<f64>,
        b: &Tensor<f64>,
        stride: usize,
        pad: usize,
    ) -> Tensor<f64> {
        let (h, wid, ic) = x.dims3();
        let oc = w.shape()[0];
        let k = w.shape()[1];
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (wid + 2 * pad - k) / stride + 1;
        let mut out = Tensor::zeros(&[oh, ow, oc]);
        for oy in 0..oh {
            for ox in 0..ow {
                for o in 0..oc {
                    let mut acc = b.data()[o];
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = oy as isize * stride as isize + ky as isize - pad as isize;
                            let ix = ox as isize * stride as isize + kx as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= wid as isize {
                                continue;
                            }
                            for i in 0..ic {
                                acc += x.at3(iy as usize, ix as usize, i)
                                    * w.data()[((o * k + ky) * k + kx) * ic + i];
                            }
                        }
                    }
                    *out.at3_mut(oy, ox, o) = acc;
                }
            }
        }
        out
    }

    #[test]
    fn identity_1x1_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut conv = Conv2d::<f32>::new(3, 3, 1, 1, 0, &mut rng);
        conv.w.fill(0.0);
        for o in 0..3 {
            conv.w.data_mut()[o * 3 + o] = 1.0;
        }
        let x = Tensor::from_vec(&[2, 2, 3], (0..12).map(|v| v as f32).collect());
        let y = conv.forward(&x).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn zero_input_gives_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut conv = Conv2d::<f32>::new(2, 4, 3, 1, 1, &mut rng);
        conv.b.data_mut().copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
        let x = Tensor::zeros(&[4, 5, 2]);
        let y = conv.forward(&x).unwrap();
        for oy in 0..4 {
            for ox in 0..5 {
                for o in 0..4 {
                    assert_eq!(y.at3(oy, ox, o), (o + 1) as f32);
                }
            }
        }
    }

    #[test]
    fn forward_matches_sliding_window_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(stride, pad) in &[(1usize, 1usize), (2, 1), (1, 0), (2, 0)] {
            let conv = Conv2d::<f64>::new(3, 5, 3, stride, pad, &mut rng);
            let x = Tensor::from_vec(
                &[5, 5, 3],
                (0..75).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            );
            let got = conv.forward(&x).unwrap();
            let want = conv_oracle(&x, &conv.w, &conv.b, stride, pad);
            assert_eq!(got.shape(), want.shape());
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for &(stride, pad) in &[(1usize, 1usize), (2, 1)] {
            let mut conv = Conv2d::<f64>::new(2, 3, 3, stride, pad, &mut rng);
            let x = Tensor::from_vec(
                &[4, 6, 2],
                (0..48).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            );
            // Loss = sum(output * cot) for a fixed random cotangent.
            let y = conv.forward(&x).unwrap();
            let cot = Tensor::from_vec(
                y.shape(),
                (0..y.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            );
            conv.zero_grads();
            let gin = conv.backward(&x, &cot).unwrap();

            let loss = |c: &Conv2d<f64>, x: &Tensor<f64>| -> f64 {
                c.forward(x)
                    .unwrap()
                    .data()
                    .iter()
                    .zip(cot.data())
                    .map(|(a, b)| a * b)
                    .sum()
            };
            let h = 1e-6;
            for i in (0..conv.w.len()).step_by(7) {
                let orig = conv.w.data()[i];
                conv.w.data_mut()[i] = orig + h;
                let up = loss(&conv, &x);
                conv.w.data_mut()[i] = orig - h;
                let dn = loss(&conv, &x);
                conv.w.data_mut()[i] = orig;
                let fd = (up - dn) / (2.0 * h);
                assert!(
                    (conv.gw.data()[i] - fd).abs() < 1e-6,
                    "gw[{i}] {} vs fd {fd}",
                    conv.gw.data()[i]
                );
            }
            for i in 0..conv.b.len() {
                let orig = conv.b.data()[i];
                conv.b.data_mut()[i] = orig + h;
                let up = loss(&conv, &x);
                conv.b.data_mut()[i] = orig - h;
                let dn = loss(&conv, &x);
                conv.b.data_mut()[i] = orig;
                let fd = (up - dn) / (2.0 * h);
                assert!((conv.gb.data()[i] - fd).abs() < 1e-6);
            }
            let mut x2 = x.clone();
            for i in (0..x.len()).step_by(5) {
                let orig = x.data()[i];
                x2.data_mut()[i] = orig + h;
                let up = loss(&conv, &x2);
                x2.data_mut()[i] = orig - h;
                let dn = loss(&conv, &x2);
                x2.data_mut()[i] = orig;
                let fd = (up - dn) / (2.0 * h);
                assert!((gin.data()[i] - fd).abs() < 1e-6);
            }
        }
    }
}
