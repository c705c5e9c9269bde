//! Classification and box-regression losses over range-image cells.
//!
//! Focal loss: mean over contributing cells of
//! `-alpha_c (1 - p_t)^gamma ln(p_t)` with softmax probabilities. Cells with
//! no label (unoccupied, or occluded duplicates) do not contribute. The box
//! loss is a plain mean L1 over the six box parameters on cells whose ground
//! truth is an object class.

use super::model::{BOX_PARAMS, NUM_CLASSES};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone)]
pub struct FocalLossOut<T> {
    pub loss: T,
    pub grad: Tensor<T>,
    pub contributing: usize,
}

/// `labels[cell]`: `Some(class)` for cells that contribute, `None` otherwise.
pub fn focal_loss<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[Option<u8>],
    gamma: f64,
    class_weights: &[f64; NUM_CLASSES],
) -> FocalLossOut<T> {
    let (h, w, c) = logits.dims3();
    assert_eq!(c, NUM_CLASSES);
    assert_eq!(labels.len(), h * w);

    let mut grad = Tensor::zeros(logits.shape());
    let n = labels.iter().filter(|l| l.is_some()).count();
    if n == 0 {
        return FocalLossOut {
            loss: T::zero(),
            grad,
            contributing: 0,
        };
    }
    let inv_n = 1.0 / n as f64;
    let mut total = 0.0f64;
    let ld = logits.data();
    let gd = grad.data_mut();
    for (cell, label) in labels.iter().enumerate() {
        let Some(t) = label else { continue };
        let t = *t as usize;
        let z = &ld[cell * c..(cell + 1) * c];
        // stable softmax in f64
        let zmax = z.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v.into_f64()));
        let exps: Vec<f64> = z.iter().map(|&v| (v.into_f64() - zmax).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let p: Vec<f64> = exps.iter().map(|e| e / sum).collect();
        let pt = p[t].max(1e-12);
        let alpha = class_weights[t];
        let one_minus = 1.0 - pt;
        total += -alpha * one_minus.powf(gamma) * pt.ln();
        // dL/dz_j = alpha (delta_tj - p_j) (gamma pt (1-pt)^(gamma-1) ln pt - (1-pt)^gamma)
        let factor = if gamma == 0.0 {
            -1.0
        } else {
            gamma * pt * one_minus.powf(gamma - 1.0) * pt.ln() - one_minus.powf(gamma)
        };
        for j in 0..c {
            let delta = if j == t { 1.0 } else { 0.0 };
            gd[cell * c + j] = T::from_f64(alpha * (delta - p[j]) * factor * inv_n);
        }
    }
    FocalLossOut {
        loss: T::from_f64(total * inv_n),
        grad,
        contributing: n,
    }
}

#[derive(Debug, Clone)]
pub struct BoxLossOut<T> {
    pub loss: T,
    pub grad: Tensor<T>,
    pub contributing: usize,
}

/// Mean L1 over the six parameters of every cell with a box target.
pub fn box_loss<T: Scalar>(pred: &Tensor<T>, targets: &[Option<[f64; BOX_PARAMS]>]) -> BoxLossOut<T> {
    let (h, w, c) = pred.dims3();
    assert_eq!(c, BOX_PARAMS);
    assert_eq!(targets.len(), h * w);

    let mut grad = Tensor::zeros(pred.shape());
    let n = targets.iter().filter(|t| t.is_some()).count();
    if n == 0 {
        return BoxLossOut {
            loss: T::zero(),
            grad,
            contributing: 0,
        };
    }
    let scale = 1.0 / (n as f64 * BOX_PARAMS as f64);
    let mut total = 0.0f64;
    let pd = pred.data();
    let gd = grad.data_mut();
    for (cell, target) in targets.iter().enumerate() {
        let Some(t) = target else { continue };
        for j in 0..BOX_PARAMS {
            let diff = pd[cell * c + j].into_f64() - t[j];
            total += diff.abs() * scale;
            gd[cell * c + j] = T::from_f64(diff.signum() * scale);
        }
    }
    BoxLossOut {
        loss: T::from_f64(total),
        grad,
        contributing: n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_zero_reduces_to_cross_entropy() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let logits = Tensor::<f64>::from_vec(
            &[1, 3, 6],
            (0..18).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        );
        let labels = vec![Some(0u8), Some(2), Some(5)];
        let out = focal_loss(&logits, &labels, 0.0, &[1.0; 6]);
        // Direct cross-entropy computation.
        let mut want = 0.0;
        for (cell, lab) in labels.iter().enumerate() {
            let z = &logits.data()[cell * 6..cell * 6 + 6];
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = z.iter().map(|v| (v - m).exp()).sum();
            want += -(z[lab.unwrap() as usize] - m - s.ln());
        }
        want /= 3.0;
        assert!((out.loss - want).abs() < 1e-6, "{} vs {want}", out.loss);
    }

    #[test]
    fn perfect_logits_drive_loss_to_zero() {
        let mut logits = Tensor::<f64>::zeros(&[1, 2, 6]);
        *logits.at3_mut(0, 0, 3) = 50.0;
        *logits.at3_mut(0, 1, 1) = 50.0;
        let labels = vec![Some(3u8), Some(1)];
        let out = focal_loss(&logits, &labels, 2.0, &[1.0; 6]);
        assert!(out.loss < 1e-12);
    }

    #[test]
    fn focal_matches_per_cell_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let gamma = 2.0;
        let weights = [1.0, 0.5, 2.0, 1.0, 1.5, 0.75];
        let n = 40usize;
        let logits = Tensor::<f64>::from_vec(
            &[1, n, 6],
            (0..n * 6).map(|_| rng.gen_range(-3.0..3.0)).collect(),
        );
        let labels: Vec<Option<u8>> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.8) {
                    Some(rng.gen_range(0..6u8))
                } else {
                    None
                }
            })
            .collect();
        let out = focal_loss(&logits, &labels, gamma, &weights);
        // scalar-by-scalar oracle
        let mut want = 0.0;
        let mut cnt = 0usize;
        for (cell, lab) in labels.iter().enumerate() {
            let Some(t) = lab else { continue };
            cnt += 1;
            let z = &logits.data()[cell * 6..cell * 6 + 6];
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = z.iter().map(|v| (v - m).exp()).sum();
            let pt = ((z[*t as usize] - m).exp() / s).max(1e-12);
            want += -weights[*t as usize] * (1.0 - pt).powf(gamma) * pt.ln();
        }
        want /= cnt as f64;
        assert!((out.loss - want).abs() < 1e-6);
        assert_eq!(out.contributing, cnt);
    }

    #[test]
    fn focal_gradient_matches_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let gamma = 2.0;
        let weights = [1.0, 0.5, 2.0, 1.0, 1.5, 0.75];
        let mut logits = Tensor::<f64>::from_vec(
            &[1, 5, 6],
            (0..30).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        );
        let labels = vec![Some(0u8), None, Some(3), Some(5), Some(2)];
        let out = focal_loss(&logits, &labels, gamma, &weights);
        let h = 1e-6;
        for i in 0..logits.len() {
            let orig = logits.data()[i];
            logits.data_mut()[i] = orig + h;
            let up = focal_loss(&logits, &labels, gamma, &weights).loss;
            logits.data_mut()[i] = orig - h;
            let dn = focal_loss(&logits, &labels, gamma, &weights).loss;
            logits.data_mut()[i] = orig;
            let fd = (up - dn) / (2.0 * h);
            assert!(
                (out.grad.data()[i] - fd).abs() < 1e-7,
                "grad[{i}] = {} vs fd {fd}",
                out.grad.data()[i]
            );
        }
    }

    #[test]
    fn empty_contributing_set_is_zero_loss() {
        let logits = Tensor::<f32>::zeros(&[1, 4, 6]);
        let out = focal_loss(&logits, &[None; 4], 2.0, &[1.0; 6]);
        assert_eq!(out.loss, 0.0);
        assert_eq!(out.contributing, 0);
        assert!(out.grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn box_loss_examples() {
        // equal prediction and target -> 0
        let pred = Tensor::<f64>::from_vec(&[1, 1, 6], vec![0.5; 6]);
        let out = box_loss(&pred, &[Some([0.5; 6])]);
        assert_eq!(out.loss, 0.0);

        // one parameter off by 1 -> 1/6
        let pred = Tensor::<f64>::from_vec(&[1, 1, 6], vec![1.5, 0.5, 0.5, 0.5, 0.5, 0.5]);
        let out = box_loss(&pred, &[Some([0.5; 6])]);
        assert!((out.loss - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn box_loss_matches_per_cell_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        let n = 20;
        let pred = Tensor::<f64>::from_vec(
            &[1, n, 6],
            (0..n * 6).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        );
        let targets: Vec<Option<[f64; 6]>> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.5) {
                    Some(std::array::from_fn(|_| rng.gen_range(-2.0..2.0)))
                } else {
                    None
                }
            })
            .collect();
        let out = box_loss(&pred, &targets);
        let mut want = 0.0;
        let mut cnt = 0;
        for (cell, t) in targets.iter().enumerate() {
            let Some(t) = t else { continue };
            cnt += 1;
            for j in 0..6 {
                want += (pred.data()[cell * 6 + j] - t[j]).abs() / 6.0;
            }
        }
        want /= cnt as f64;
        assert!((out.loss - want).abs() < 1e-6);
    }
}
