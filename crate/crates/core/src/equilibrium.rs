//! Closed-form equilibrium quantities: β, extra excess returns, implied
//! excess returns, their sensitivities and the investor's utility.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::MarketScenario;
use crate::error::{Error, Result};

/// |β_k| at or below this is treated as zero when classifying regimes.
pub const BETA_ZERO_TOL: f64 = 1e-12;

/// `β = Σw / σ_M²`.
pub fn beta_vector(sigma: &DMatrix<f64>, weights: &DVector<f64>, sigma_m: f64) -> Result<DVector<f64>> {
    if !(sigma_m > 0.0) {
        return Err(Error::DegenerateMarket { sigma_m });
    }
    Ok(sigma * weights / (sigma_m * sigma_m))
}

/// `λ - λ_M·β`.
pub fn extra_excess_returns(lambda: &DVector<f64>, lambda_m: f64, beta: &DVector<f64>) -> DVector<f64> {
    lambda - beta * lambda_m
}

/// Extra excess returns as a function of `(λ, w)` alone, with `λ_M = wᵀλ`.
pub fn extra_excess_map(
    sigma: &DMatrix<f64>,
    sigma_m: f64,
    lambda: &DVector<f64>,
    weights: &DVector<f64>,
) -> Result<DVector<f64>> {
    let beta = beta_vector(sigma, weights, sigma_m)?;
    Ok(extra_excess_returns(lambda, weights.dot(lambda), &beta))
}

/// `π = (δ - λ_M/σ_M²)·Σw + λ` for the weights supplied.
pub fn implied_excess_returns(
    scenario: &MarketScenario,
    lambda: &DVector<f64>,
    weights: &DVector<f64>,
) -> DVector<f64> {
    let lambda_m = weights.dot(lambda);
    let scale = scenario.delta() - lambda_m / scenario.market_variance();
    scenario.sigma() * weights * scale + lambda
}

/// Own-derivative of the extra excess return to the shadow-cost: `1 - x_k β_k`.
pub fn sensitivity_to_shadow_costs(weights: &DVector<f64>, beta: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(weights.len(), |k, _| 1.0 - weights[k] * beta[k])
}

/// Own-derivative to the market weight: `-λ_k β_k - δ_λ σ_k²`.
pub fn sensitivity_to_weights(
    lambda: &DVector<f64>,
    beta: &DVector<f64>,
    delta_lambda: f64,
    sigma_diag: &DVector<f64>,
) -> DVector<f64> {
    DVector::from_fn(lambda.len(), |k, _| -lambda[k] * beta[k] - delta_lambda * sigma_diag[k])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    BetaNegative,
    BetaZero,
    /// `β_k > 0` and `x_k < 1/β_k`: extra return increases with λ_k.
    BetaPositiveLowWeight,
    /// `β_k > 0` and `x_k ≥ 1/β_k`.
    BetaPositiveHighWeight,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReport {
    pub grad_lambda: DVector<f64>,
    pub grad_weights: DVector<f64>,
    pub regimes: Vec<Regime>,
    /// For negative-β assets: whether `|β_k| > δ_λσ_k²/λ_k`, i.e. the extra
    /// return increases with the asset's weight. Always false otherwise.
    pub increasing_in_weight: Vec<bool>,
}

pub fn classify_sensitivity_regimes(
    lambda: &DVector<f64>,
    beta: &DVector<f64>,
    weights: &DVector<f64>,
    delta_lambda: f64,
    sigma_diag: &DVector<f64>,
) -> SensitivityReport {
    let n = lambda.len();
    let mut regimes = Vec::with_capacity(n);
    let mut increasing = Vec::with_capacity(n);
    for k in 0..n {
        let b = beta[k];
        let regime = if b.abs() <= BETA_ZERO_TOL {
            Regime::BetaZero
        } else if b < 0.0 {
            Regime::BetaNegative
        } else if weights[k] < 1.0 / b {
            Regime::BetaPositiveLowWeight
        } else {
            Regime::BetaPositiveHighWeight
        };
        let inc = regime == Regime::BetaNegative && lambda[k] * b.abs() > delta_lambda * sigma_diag[k];
        regimes.push(regime);
        increasing.push(inc);
    }
    SensitivityReport {
        grad_lambda: sensitivity_to_shadow_costs(weights, beta),
        grad_weights: sensitivity_to_weights(lambda, beta, delta_lambda, sigma_diag),
        regimes,
        increasing_in_weight: increasing,
    }
}

/// `wᵀ(π^c + λ) - ½(δ + 2δ_λ)·wᵀΣw`.
pub fn utility(
    weights: &DVector<f64>,
    pi_c: &DVector<f64>,
    lambda: &DVector<f64>,
    sigma: &DMatrix<f64>,
    delta: f64,
    delta_lambda: f64,
) -> f64 {
    weights.dot(&(pi_c + lambda)) - 0.5 * (delta + 2.0 * delta_lambda) * weights.dot(&(sigma * weights))
}

pub fn utility_gradient(
    weights: &DVector<f64>,
    pi_c: &DVector<f64>,
    lambda: &DVector<f64>,
    sigma: &DMatrix<f64>,
    delta: f64,
    delta_lambda: f64,
) -> DVector<f64> {
    pi_c + lambda - sigma * weights * (delta + 2.0 * delta_lambda)
}

/// `(wᵀ(μ + r_f·1), sqrt(wᵀΣw))`. Pass `r_f = 0` for excess return.
pub fn portfolio_metrics(
    weights: &DVector<f64>,
    excess_returns: &DVector<f64>,
    sigma: &DMatrix<f64>,
    r_f: f64,
) -> (f64, f64) {
    let ret = weights.dot(excess_returns) + r_f * weights.sum();
    let var = weights.dot(&(sigma * weights));
    (ret, var.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn published_w() -> DVector<f64> {
        DVector::from_vec(vec![-0.0394, -0.0004, 0.0025, 0.0605, 0.0063])
    }

    #[test]
    fn beta_of_second_asset_from_published_weights() {
        let (market, _, _) = fixtures::five_asset();
        let beta = beta_vector(market.sigma(), &published_w(), 0.05).unwrap();
        assert!((beta[1] - 0.2516).abs() < 5e-4, "{}", beta[1]);
    }

    #[test]
    fn beta_trivial_cases() {
        let (market, _, _) = fixtures::five_asset();
        assert_eq!(
            beta_vector(market.sigma(), &DVector::zeros(5), 0.05).unwrap(),
            DVector::zeros(5)
        );
        let sigma = DMatrix::identity(3, 3) * 0.04;
        let e1 = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        assert!((beta_vector(&sigma, &e1, 0.2).unwrap() - &e1).amax() < 1e-15);
        assert!(matches!(
            beta_vector(&sigma, &e1, 0.0),
            Err(Error::DegenerateMarket { .. })
        ));
    }

    #[test]
    fn extra_returns_reduce_to_lambda_or_zero() {
        let beta = DVector::from_vec(vec![0.3, -0.1]);
        assert_eq!(extra_excess_returns(&DVector::zeros(2), 0.0, &beta), DVector::zeros(2));
        let lambda = DVector::from_vec(vec![0.01, 0.02]);
        assert_eq!(extra_excess_returns(&lambda, 0.0, &beta), lambda);
    }

    #[test]
    fn single_asset_implied_return() {
        let market = MarketScenario::new(
            vec!["x".into()],
            DMatrix::from_element(1, 1, 0.09),
            DVector::from_element(1, 0.0),
            0.01,
            0.05,
            0.2,
        )
        .unwrap();
        let l = 0.015;
        let pi = implied_excess_returns(&market, &DVector::from_element(1, l), &DVector::from_element(1, 1.0));
        let expected = (market.delta() - l / 0.04) * 0.09 + l;
        assert!((pi[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_lambda_gives_capm_form() {
        let (market, _, _) = fixtures::five_asset();
        let w = published_w();
        let pi = implied_excess_returns(&market, &DVector::zeros(5), &w);
        assert_eq!(pi, market.sigma() * &w * market.delta());
    }

    #[test]
    fn sensitivity_thresholds() {
        let beta = DVector::from_vec(vec![2.0, 0.5]);
        let zero = sensitivity_to_shadow_costs(&DVector::zeros(2), &beta);
        assert_eq!(zero, DVector::from_element(2, 1.0));
        let at = sensitivity_to_shadow_costs(&DVector::from_vec(vec![0.5, 2.0]), &beta);
        assert_eq!(at, DVector::zeros(2));
        let w = sensitivity_to_weights(&DVector::zeros(2), &beta, 0.0, &DVector::from_element(2, 0.1));
        assert_eq!(w, DVector::zeros(2));
    }

    #[test]
    fn negative_beta_with_large_magnitude_raises_weight_sensitivity() {
        let lambda = DVector::from_element(1, 0.02);
        let beta = DVector::from_element(1, -1.0);
        let g = sensitivity_to_weights(&lambda, &beta, 0.01, &DVector::from_element(1, 1.0));
        assert!(g[0] > 0.0);
        let report =
            classify_sensitivity_regimes(&lambda, &beta, &DVector::zeros(1), 0.01, &DVector::from_element(1, 1.0));
        assert_eq!(report.regimes, vec![Regime::BetaNegative]);
        assert_eq!(report.increasing_in_weight, vec![true]);
    }

    #[test]
    fn regime_classification() {
        let lambda = DVector::from_vec(vec![0.01, 0.01, 0.01]);
        let beta = DVector::from_vec(vec![0.0, 2.0, 2.0]);
        let w = DVector::from_vec(vec![0.3, 0.4, 0.6]);
        let report = classify_sensitivity_regimes(&lambda, &beta, &w, 0.3, &DVector::from_element(3, 0.05));
        assert_eq!(
            report.regimes,
            vec![
                Regime::BetaZero,
                Regime::BetaPositiveLowWeight,
                Regime::BetaPositiveHighWeight
            ]
        );
        assert_eq!(extra_excess_returns(&lambda, 0.7, &beta)[0], lambda[0]);
    }

    #[test]
    fn utility_reductions() {
        let (market, shadow, _) = fixtures::five_asset();
        let w = published_w();
        assert_eq!(
            utility(
                &DVector::zeros(5),
                market.pi_c(),
                &shadow.lambda,
                market.sigma(),
                8.0,
                0.3
            ),
            0.0
        );
        let capm = w.dot(market.pi_c()) - 0.5 * 8.0 * w.dot(&(market.sigma() * &w));
        let u = utility(&w, market.pi_c(), &DVector::zeros(5), market.sigma(), 8.0, 0.0);
        assert!((u - capm).abs() < 1e-16);
    }

    #[test]
    fn utility_gradient_vanishes_at_published_investor_portfolio() {
        let (market, shadow, _) = fixtures::five_asset();
        let w = DVector::from_vec(vec![-0.0727, 0.0290, 0.0395, 0.0951, 0.0946]);
        let h = 1e-6;
        for k in 0..5 {
            let mut up = w.clone();
            let mut dn = w.clone();
            up[k] += h;
            dn[k] -= h;
            let f = |x: &DVector<f64>| utility(x, market.pi_c(), &shadow.lambda, market.sigma(), 8.0, 0.2967);
            let g = (f(&up) - f(&dn)) / (2.0 * h);
            assert!(g.abs() < 1e-3, "component {k}: {g}");
        }
    }

    #[test]
    fn metrics_of_empty_portfolio() {
        let (market, _, _) = fixtures::five_asset();
        assert_eq!(
            portfolio_metrics(&DVector::zeros(5), market.pi_c(), market.sigma(), 0.02),
            (0.0, 0.0)
        );
    }
}
