//! Scalar alignment objectives. Inputs are supplied by the caller; nothing
//! here trains or evaluates a model.

use crate::error::{GameError, Result};

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Preference loss `-ln σ(chosen - rejected) + kl_penalty * kl_value`.
pub fn dpo_loss(log_prob_chosen: f64, log_prob_rejected: f64, kl_penalty: f64, kl_value: f64) -> Result<f64> {
    if !(kl_penalty >= 0.0) || !(kl_value >= 0.0) {
        return Err(GameError::invalid(format!(
            "KL penalty and KL value must be non-negative, got {kl_penalty} and {kl_value}"
        )));
    }
    if !log_prob_chosen.is_finite() || !log_prob_rejected.is_finite() {
        return Err(GameError::invalid("log-probabilities must be finite"));
    }
    Ok(softplus(-(log_prob_chosen - log_prob_rejected)) + kl_penalty * kl_value)
}

/// Sum of log-likelihood terms minus the KL term.
pub fn elbo_value(log_likelihood_terms: &[f64], kl_term: f64) -> Result<f64> {
    if !(kl_term >= 0.0) {
        return Err(GameError::invalid(format!("KL term must be non-negative, got {kl_term}")));
    }
    Ok(log_likelihood_terms.iter().sum::<f64>() - kl_term)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dpo_values() {
        let ln2 = std::f64::consts::LN_2;
        assert!((dpo_loss(0.0, 0.0, 0.0, 3.0).unwrap() - ln2).abs() < 1e-12);
        assert!((dpo_loss(3f64.ln(), 0.0, 0.0, 0.0).unwrap() - (4.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!((dpo_loss(-1.0, -1.0, 2.0, 0.5).unwrap() - (ln2 + 1.0)).abs() < 1e-12);
        assert!(dpo_loss(0.0, 0.0, -1.0, 0.0).is_err());
        // large gaps stay finite
        assert!(dpo_loss(-800.0, 800.0, 0.0, 0.0).unwrap().is_finite());
        assert!(dpo_loss(800.0, -800.0, 0.0, 0.0).unwrap() >= 0.0);
    }

    #[test]
    fn elbo_values() {
        assert_eq!(elbo_value(&[-5.0], 0.0).unwrap(), -5.0);
        assert_eq!(elbo_value(&[], 1.5).unwrap(), -1.5);
        assert!((elbo_value(&[-1.0, -2.0, -3.0], 0.25).unwrap() + 6.25).abs() < 1e-12);
        assert!(elbo_value(&[], -0.1).is_err());
    }
}
