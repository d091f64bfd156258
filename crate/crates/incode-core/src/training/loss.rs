//! Data loss and the soft constraint on the activation quadruple.

use crate::mat::Mat;
use crate::nn::EffectiveParams;
use crate::{Error, Result};

/// Penalty weights for the four activation-parameter constraints
/// `a >= 1, b >= 1, c >= 0, d >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossConfig {
    pub lambda: [f64; 4],
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda: [0.1993, 0.0196, 0.0588, 0.0269],
        }
    }
}

/// Mean squared error over all elements plus its gradient with respect to
/// the predictions.
pub fn mse_loss(pred: &Mat, target: &Mat) -> Result<(f64, Mat)> {
    if pred.rows() != target.rows() || pred.cols() != target.cols() {
        return Err(Error::shape(
            "mse operands",
            format!("{}x{}", target.rows(), target.cols()),
            format!("{}x{}", pred.rows(), pred.cols()),
        ));
    }
    let count = (pred.rows() * pred.cols()) as f64;
    let mut grad = Mat::zeros(pred.rows(), pred.cols());
    let mut sum = 0.0;
    for ((g, &p), &t) in grad
        .as_mut_slice()
        .iter_mut()
        .zip(pred.as_slice())
        .zip(target.as_slice())
    {
        let r = p - t;
        sum += r * r;
        *g = 2.0 * r / count;
    }
    Ok((sum / count, grad))
}

/// Squared-hinge penalty on the effective quadruple and its gradient with
/// respect to the effective values. Zero on and inside the feasible set,
/// with a continuous gradient at the boundary.
pub fn constraint_penalty(params: &EffectiveParams, cfg: &LossConfig) -> (f64, [f64; 4]) {
    let viol = [
        (1.0 - params.a).max(0.0),
        (1.0 - params.b).max(0.0),
        (-params.c).max(0.0),
        (-params.d).max(0.0),
    ];
    let value = cfg.lambda[0] * viol[0] * viol[0]
        + cfg.lambda[1] * viol[1] * viol[1]
        + cfg.lambda[2] * viol[2] * viol[2]
        + cfg.lambda[3] * viol[3] * viol[3];
    let grads = [
        -2.0 * cfg.lambda[0] * viol[0],
        -2.0 * cfg.lambda[1] * viol[1],
        -2.0 * cfg.lambda[2] * viol[2],
        -2.0 * cfg.lambda[3] * viol[3],
    ];
    (value, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_tensors_have_zero_loss() {
        let a = Mat::from_fn(3, 5, |r, c| (r + c) as f64 * 0.1);
        let (loss, grad) = mse_loss(&a, &a).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn constant_offset_squares() {
        let pred = Mat::from_fn(4, 4, |_, _| 0.6);
        let target = Mat::from_fn(4, 4, |_, _| 0.5);
        let (loss, _) = mse_loss(&pred, &target).unwrap();
        assert!((loss - 0.01).abs() < 1e-15);
    }

    #[test]
    fn random_pair_matches_two_pass_computation() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let pred = Mat::from_fn(7, 13, |_, _| rng.gen_range(-1.0..1.0));
        let target = Mat::from_fn(7, 13, |_, _| rng.gen_range(-1.0..1.0));
        let (loss, grad) = mse_loss(&pred, &target).unwrap();
        // Independent two-pass reference.
        let count = 7.0 * 13.0;
        let mut expected = 0.0;
        for r in 0..7 {
            for c in 0..13 {
                let d = pred.get(r, c) - target.get(r, c);
                expected += d * d;
            }
        }
        expected /= count;
        assert!((loss - expected).abs() < 1e-12);
        for r in 0..7 {
            for c in 0..13 {
                let d = 2.0 * (pred.get(r, c) - target.get(r, c)) / count;
                assert!((grad.get(r, c) - d).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = Mat::zeros(2, 3);
        let b = Mat::zeros(3, 2);
        assert!(mse_loss(&a, &b).is_err());
    }

    #[test]
    fn penalty_zero_inside_and_on_boundary() {
        let cfg = LossConfig::default();
        for (a, b, c, d) in [(2.0, 2.0, 1.0, 1.0), (1.0, 1.0, 0.0, 0.0)] {
            let (v, g) = constraint_penalty(&EffectiveParams { a, b, c, d }, &cfg);
            assert_eq!(v, 0.0);
            assert_eq!(g, [0.0; 4]);
        }
    }

    #[test]
    fn penalty_value_matches_hand_computation() {
        let cfg = LossConfig::default();
        let (v, _) = constraint_penalty(
            &EffectiveParams {
                a: 0.5,
                b: 1.0,
                c: -1.0,
                d: 0.0,
            },
            &cfg,
        );
        // 0.1993 * 0.25 + 0.0588 * 1.0
        assert!((v - 0.108625).abs() < 1e-12);
    }

    #[test]
    fn penalty_sign_structure_on_sampled_quadruples() {
        let cfg = LossConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..200 {
            let p = EffectiveParams {
                a: rng.gen_range(0.1..3.0),
                b: rng.gen_range(0.1..3.0),
                c: rng.gen_range(-2.0..2.0),
                d: rng.gen_range(-2.0..2.0),
            };
            let (v, _) = constraint_penalty(&p, &cfg);
            let feasible = p.a >= 1.0 && p.b >= 1.0 && p.c >= 0.0 && p.d >= 0.0;
            if feasible {
                assert_eq!(v, 0.0);
            } else {
                assert!(v > 0.0);
            }
        }
    }
}
