use super::TrainConfig;

/// Number of warmup steps: `floor(warmup_fraction · total)`, at least one
/// when warmup is enabled.
pub fn warmup_steps(total_steps: usize, warmup_fraction: f64) -> usize {
    if warmup_fraction <= 0.0 {
        0
    } else {
        ((warmup_fraction * total_steps as f64).floor() as usize).max(1)
    }
}

/// Linear warmup from 0 at step 0 to `lr_peak` at the end of warmup, then a
/// half cosine that reaches 0 on the last step.
pub fn lr_at(step: usize, total_steps: usize, cfg: &TrainConfig) -> f64 {
    let warmup = warmup_steps(total_steps, cfg.warmup_fraction);
    if step < warmup {
        return cfg.lr_peak * step as f64 / warmup as f64;
    }
    let span = total_steps.saturating_sub(1).saturating_sub(warmup);
    if span == 0 {
        return cfg.lr_peak;
    }
    let progress = ((step - warmup) as f64 / span as f64).min(1.0);
    cfg.lr_peak * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundaries() {
        let cfg = TrainConfig::default();
        let total = 1000;
        assert_eq!(lr_at(0, total, &cfg), 0.0);
        assert_eq!(lr_at(50, total, &cfg), 0.5e-4);
        assert_eq!(lr_at(100, total, &cfg), 1e-4);
        assert!(lr_at(total - 1, total, &cfg) < 1e-6);
        let mid = lr_at(100 + 899 / 2, total, &cfg);
        assert!(mid < 1e-4 && mid > 0.4e-4);
    }

    #[test]
    fn monotone_after_warmup() {
        let cfg = TrainConfig::default();
        let lrs: Vec<f64> = (0..200).map(|s| lr_at(s, 200, &cfg)).collect();
        assert!(lrs[..20].windows(2).all(|w| w[0] < w[1]));
        assert!(lrs[20..].windows(2).all(|w| w[0] >= w[1]));
    }
}
