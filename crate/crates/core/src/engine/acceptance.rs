/// Log-scale ingredients of one Metropolis-Hastings ratio on `(θ, u)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioInputs {
    pub log_phat_proposed: f64,
    pub log_phat_current: f64,
    pub log_prior_proposed: f64,
    pub log_prior_current: f64,
    /// `log q(θ_p | θ_c)`.
    pub log_q_forward: f64,
    /// `log q(θ_c | θ_p)`.
    pub log_q_reverse: f64,
    /// `log p(u_p)` and `log p(u_c)` under the subsample design.
    pub log_pu_proposed: f64,
    pub log_pu_current: f64,
    pub omega: f64,
    pub same_subsample: bool,
}

/// `log p̂_p + log p(θ_p) + log q(θ_c|θ_p) - log p̂_c - log p(θ_c) - log q(θ_p|θ_c)`.
pub fn log_acceptance_ratio(inputs: &RatioInputs) -> f64 {
    (inputs.log_phat_proposed + inputs.log_prior_proposed + inputs.log_q_reverse)
        - (inputs.log_phat_current + inputs.log_prior_current + inputs.log_q_forward)
}

/// `log q(u_to | u_from)` under the refresh mixture
/// `ω p(u) + (1 - ω) δ_{u_from}(u)`.
fn log_refresh_density(log_p_to: f64, omega: f64, same: bool) -> f64 {
    if same {
        (omega * log_p_to.exp() + (1.0 - omega)).ln()
    } else {
        omega.ln() + log_p_to
    }
}

/// Evaluates the acceptance ratio on the augmented space with every
/// subsample density kept, alongside the simplified θ-only ratio. Both are
/// on the log scale.
pub fn acceptance_simplification_check(inputs: &RatioInputs) -> (f64, f64) {
    let simplified = log_acceptance_ratio(inputs);
    let same = inputs.same_subsample;
    let q_u_forward = log_refresh_density(inputs.log_pu_proposed, inputs.omega, same);
    let q_u_reverse = log_refresh_density(inputs.log_pu_current, inputs.omega, same);
    let subsample_terms =
        (inputs.log_pu_proposed - inputs.log_pu_current) + (q_u_reverse - q_u_forward);
    (simplified + subsample_terms, simplified)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> RatioInputs {
        RatioInputs {
            log_phat_proposed: -10.0,
            log_phat_current: -10.0,
            log_prior_proposed: -1.0,
            log_prior_current: -1.0,
            log_q_forward: 0.0,
            log_q_reverse: 0.0,
            log_pu_proposed: -5.0,
            log_pu_current: -7.0,
            omega: 0.2,
            same_subsample: false,
        }
    }

    #[test]
    fn equal_states_accept_surely() {
        assert_eq!(log_acceptance_ratio(&base()), 0.0);
    }

    #[test]
    fn halved_likelihood_gives_half() {
        let r = RatioInputs {
            log_phat_proposed: -10.0 - 2f64.ln(),
            ..base()
        };
        assert!((log_acceptance_ratio(&r).exp() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn same_subsample_reduces_to_theta_ratio() {
        let r = RatioInputs {
            log_pu_proposed: -6.0,
            log_pu_current: -6.0,
            same_subsample: true,
            log_phat_proposed: -9.0,
            ..base()
        };
        let (full, simplified) = acceptance_simplification_check(&r);
        assert_eq!(full, simplified);
        assert_eq!(simplified, 1.0);
    }
}
