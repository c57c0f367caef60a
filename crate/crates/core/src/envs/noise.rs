use crate::error::{LwailError, Result};

/// Gaussian perturbation levels for robustness runs.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NoiseSpec {
    /// Standard deviation of the initial-position perturbation.
    pub init_std: f64,
    /// Standard deviation added to every action before clipping.
    pub action_std: f64,
}

impl NoiseSpec {
    pub fn new(init_std: f64, action_std: f64) -> Result<Self> {
        for (name, v) in [("init_std", init_std), ("action_std", action_std)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(LwailError::InvalidInput(format!("{name} must be a non-negative number, got {v}")));
            }
        }
        Ok(Self { init_std, action_std })
    }

    pub fn none() -> Self {
        Self::default()
    }

    pub fn initial(init_std: f64) -> Result<Self> {
        Self::new(init_std, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_levels_are_rejected() {
        assert!(NoiseSpec::new(-0.1, 0.0).is_err());
        assert!(NoiseSpec::new(0.0, f64::NAN).is_err());
        assert_eq!(NoiseSpec::initial(0.5).unwrap().init_std, 0.5);
    }
}
