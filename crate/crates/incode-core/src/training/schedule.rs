//! Training-loop configuration and the learning-rate decay curve.

/// Loop-level knobs. `alpha` is the end-of-training multiplier: the learning
/// rate decays smoothly from `lr0` to `alpha * lr0` over the run.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr0: f64,
    pub alpha: f64,
    pub seed: u64,
    /// Upper bound on points evaluated per forward/backward batch.
    pub chunk: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            lr0: 9e-4,
            alpha: 0.1,
            seed: 0,
            chunk: 65_536,
        }
    }
}

/// `lr0 * alpha^(epoch/epochs)`: exponential interpolation reaching
/// `alpha * lr0` at the final epoch.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    if cfg.epochs == 0 {
        return cfg.lr0;
    }
    cfg.lr0 * cfg.alpha.powf(epoch as f64 / cfg.epochs as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(epochs: usize, lr0: f64, alpha: f64) -> TrainConfig {
        TrainConfig {
            epochs,
            lr0,
            alpha,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn endpoints() {
        let c = cfg(500, 9e-4, 0.1);
        assert_eq!(lr_at(0, &c), 9e-4);
        assert!((lr_at(500, &c) - 9e-5).abs() < 1e-18);
    }

    #[test]
    fn midpoint_is_geometric_mean() {
        let c = cfg(500, 1.0, 0.1);
        let lr = lr_at(250, &c);
        assert!((lr - 10f64.powf(-0.5)).abs() < 1e-12);
        assert!((lr - 0.31622776601683794).abs() < 1e-12);
    }

    #[test]
    fn alpha_one_is_constant() {
        let c = cfg(100, 5e-4, 1.0);
        for e in [0, 13, 50, 100] {
            assert_eq!(lr_at(e, &c), 5e-4);
        }
    }
}
