use serde::{Deserialize, Serialize};

use super::NnError;

/// Training hyper-parameters. The defaults are the reference settings:
/// learning rate 10⁻³ annealed by a cosine schedule to 10⁻⁵, batch 16,
/// 30 epochs, binary cross-entropy on logits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr_max: f64,
    pub lr_min: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_max: 1e-3,
            lr_min: 1e-5,
            batch_size: 16,
            epochs: 30,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.lr_min > 0.0 && self.lr_min <= self.lr_max) {
            return Err(NnError::InvalidArgument(format!(
                "need 0 < lr_min <= lr_max, got {} and {}",
                self.lr_min, self.lr_max
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(NnError::InvalidArgument(
                "batch_size and epochs must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// `lr_min + ½(lr_max − lr_min)(1 + cos(π·epoch/epochs))`, with `epoch`
/// clamped to `[0, epochs]`.
pub fn cosine_lr(epoch: usize, cfg: &TrainConfig) -> f64 {
    let t = epoch.min(cfg.epochs) as f64 / cfg.epochs.max(1) as f64;
    cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + (std::f64::consts::PI * t).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_midpoint() {
        let cfg = TrainConfig::default();
        assert!((cosine_lr(0, &cfg) - 1e-3).abs() < 1e-18);
        assert!((cosine_lr(30, &cfg) - 1e-5).abs() < 1e-18);
        assert!((cosine_lr(15, &cfg) - 5.05e-4).abs() < 1e-15);
    }

    #[test]
    fn monotone_and_bounded() {
        let cfg = TrainConfig::default();
        let lrs: Vec<f64> = (0..=cfg.epochs).map(|e| cosine_lr(e, &cfg)).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
        assert!(lrs.iter().all(|&l| (cfg.lr_min..=cfg.lr_max).contains(&l)));
    }

    #[test]
    fn validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig { lr_min: 1e-2, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { batch_size: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
