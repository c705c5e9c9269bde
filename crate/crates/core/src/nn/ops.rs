//! Pointwise and shape ops used by the network: ReLU, nearest-neighbor
//! 2x upsampling, and channel concat/split. Each op has an exact backward.

use crate::tensor::{Scalar, Tensor};

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let data = x.data().iter().map(|&v| v.max(T::zero())).collect();
    Tensor::from_vec(x.shape(), data)
}

/// ReLU gradient using the forward *output* as the mask (out > 0 iff the
/// pre-activation was > 0; the subgradient at 0 is taken as 0).
pub fn relu_backward<T: Scalar>(out: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    debug_assert_eq!(out.shape(), grad_out.shape());
    let data = out
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&o, &g)| if o > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(out.shape(), data)
}

pub fn upsample2x<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (h, w, c) = x.dims3();
    let mut out = Tensor::zeros(&[2 * h, 2 * w, c]);
    for y in 0..2 * h {
        for xx in 0..2 * w {
            let src = &x.data()[((y / 2) * w + xx / 2) * c..][..c];
            out.data_mut()[(y * 2 * w + xx) * c..][..c].copy_from_slice(src);
        }
    }
    out
}

/// Each input cell collects its four children, in row-major child order.
pub fn upsample2x_backward<T: Scalar>(grad_out: &Tensor<T>, in_h: usize, in_w: usize) -> Tensor<T> {
    let (oh, ow, c) = grad_out.dims3();
    debug_assert_eq!((oh, ow), (2 * in_h, 2 * in_w));
    let mut gin = Tensor::zeros(&[in_h, in_w, c]);
    for y in 0..in_h {
        for xx in 0..in_w {
            let dst = (y * in_w + xx) * c;
            for dy in 0..2 {
                for dx in 0..2 {
                    let src = ((2 * y + dy) * ow + 2 * xx + dx) * c;
                    for k in 0..c {
                        gin.data_mut()[dst + k] += grad_out.data()[src + k];
                    }
                }
            }
        }
    }
    gin
}

pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (h, w, ca) = a.dims3();
    let (hb, wb, cb) = b.dims3();
    assert_eq!((h, w), (hb, wb), "concat spatial dims differ");
    let mut out = Tensor::zeros(&[h, w, ca + cb]);
    for p in 0..h * w {
        out.data_mut()[p * (ca + cb)..p * (ca + cb) + ca]
            .copy_from_slice(&a.data()[p * ca..(p + 1) * ca]);
        out.data_mut()[p * (ca + cb) + ca..(p + 1) * (ca + cb)]
            .copy_from_slice(&b.data()[p * cb..(p + 1) * cb]);
    }
    out
}

pub fn split_channels<T: Scalar>(x: &Tensor<T>, ca: usize) -> (Tensor<T>, Tensor<T>) {
    let (h, w, c) = x.dims3();
    assert!(ca <= c);
    let cb = c - ca;
    let mut a = Tensor::zeros(&[h, w, ca]);
    let mut b = Tensor::zeros(&[h, w, cb]);
    for p in 0..h * w {
        a.data_mut()[p * ca..(p + 1) * ca].copy_from_slice(&x.data()[p * c..p * c + ca]);
        b.data_mut()[p * cb..(p + 1) * cb].copy_from_slice(&x.data()[p * c + ca..(p + 1) * c]);
    }
    (a, b)
}

pub fn add_into<T: Scalar>(dst: &mut Tensor<T>, src: &Tensor<T>) {
    debug_assert_eq!(dst.shape(), src.shape());
    for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
        *d += *s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upsample_round_trip_shapes() {
        let x = Tensor::<f64>::from_vec(&[2, 3, 2], (0..12).map(|v| v as f64).collect());
        let up = upsample2x(&x);
        assert_eq!(up.shape(), &[4, 6, 2]);
        assert_eq!(up.at3(3, 5, 1), x.at3(1, 2, 1));
        // Backward of an all-ones cotangent counts the 4 children.
        let ones = Tensor::from_vec(&[4, 6, 2], vec![1.0; 48]);
        let g = upsample2x_backward(&ones, 2, 3);
        assert!(g.data().iter().all(|&v| v == 4.0));
    }

    #[test]
    fn concat_then_split_is_identity() {
        let a = Tensor::<f32>::from_vec(&[2, 2, 3], (0..12).map(|v| v as f32).collect());
        let b = Tensor::<f32>::from_vec(&[2, 2, 2], (100..108).map(|v| v as f32).collect());
        let cat = concat_channels(&a, &b);
        let (a2, b2) = split_channels(&cat, 3);
        assert_eq!(a, a2);
        assert_eq!(b, b2);
    }

    #[test]
    fn relu_masks_negative() {
        let x = Tensor::<f32>::from_vec(&[1, 1, 4], vec![-1.0, 0.0, 0.5, 2.0]);
        let y = relu(&x);
        assert_eq!(y.data(), &[0.0, 0.0, 0.5, 2.0]);
        let g = relu_backward(&y, &Tensor::from_vec(&[1, 1, 4], vec![1.0; 4]));
        assert_eq!(g.data(), &[0.0, 0.0, 1.0, 1.0]);
    }
}
