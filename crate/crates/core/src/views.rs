//! Investor views and the Bayesian update of the reference model.
//!
//! A [`ViewSet`] carries the pick-matrix `P`, the anticipated returns `q` and
//! the view-uncertainty `Ω` (either explicit or derived from a confidence
//! level). [`posterior`] combines a reference model with the views by adding
//! precisions and factoring the sum once.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::MarketScenario;
use crate::error::{Error, Result};
use crate::linalg;
use crate::reference::ReferenceModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewKind {
    /// A view on a portfolio whose weights sum to one.
    Absolute,
    /// A long/short view whose weights sum to zero.
    Relative,
}

impl ViewKind {
    pub fn row_sum(self) -> f64 {
        match self {
            ViewKind::Absolute => 1.0,
            ViewKind::Relative => 0.0,
        }
    }
}

impl fmt::Display for ViewKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViewKind::Absolute => "absolute",
            ViewKind::Relative => "relative",
        })
    }
}

/// Qualitative stance on a view portfolio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stance {
    VeryBearish,
    Bearish,
    Bullish,
    VeryBullish,
}

impl Stance {
    /// Number of view-portfolio standard deviations added to the prior view.
    pub fn eta(self) -> f64 {
        match self {
            Stance::VeryBearish => -2.0,
            Stance::Bearish => -1.0,
            Stance::Bullish => 1.0,
            Stance::VeryBullish => 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewSet {
    pick: DMatrix<f64>,
    q: DVector<f64>,
    kinds: Vec<ViewKind>,
    confidence: Option<f64>,
    omega: DMatrix<f64>,
}

impl ViewSet {
    /// Views whose uncertainty is `(1/c - 1)·PΣPᵀ`.
    pub fn from_confidence(
        pick: DMatrix<f64>,
        q: DVector<f64>,
        kinds: Vec<ViewKind>,
        confidence: f64,
        sigma: &DMatrix<f64>,
    ) -> Result<Self> {
        check_view_shapes(&pick, &q, &kinds)?;
        let omega = omega_from_confidence(confidence, &pick, sigma)?;
        Ok(Self {
            pick,
            q,
            kinds,
            confidence: Some(confidence),
            omega,
        })
    }

    pub fn with_omega(pick: DMatrix<f64>, q: DVector<f64>, kinds: Vec<ViewKind>, omega: DMatrix<f64>) -> Result<Self> {
        check_view_shapes(&pick, &q, &kinds)?;
        let v = q.len();
        linalg::check_shape("views.omega", &omega, v, v)?;
        Ok(Self {
            pick,
            q,
            kinds,
            confidence: None,
            omega,
        })
    }

    pub fn pick(&self) -> &DMatrix<f64> {
        &self.pick
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn kinds(&self) -> &[ViewKind] {
        &self.kinds
    }

    pub fn confidence(&self) -> Option<f64> {
        self.confidence
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn count(&self) -> usize {
        self.q.len()
    }

    pub fn with_q(&self, q: DVector<f64>) -> Result<Self> {
        linalg::check_len("views.q", &q, self.count())?;
        Ok(Self { q, ..self.clone() })
    }

    /// Same views with `Ω` multiplied by `factor`.
    pub fn scale_omega(&self, factor: f64) -> Self {
        Self {
            omega: &self.omega * factor,
            confidence: None,
            ..self.clone()
        }
    }

    /// Re-derives `Ω` for a new confidence level.
    pub fn with_confidence(&self, confidence: f64, sigma: &DMatrix<f64>) -> Result<Self> {
        Self::from_confidence(self.pick.clone(), self.q.clone(), self.kinds.clone(), confidence, sigma)
    }

    /// Reorders views; `order[i]` is the old index placed at position `i`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let v = self.count();
        let pick = DMatrix::from_fn(v, self.pick.ncols(), |i, j| self.pick[(order[i], j)]);
        let q = DVector::from_fn(v, |i, _| self.q[order[i]]);
        let omega = DMatrix::from_fn(v, v, |i, j| self.omega[(order[i], order[j])]);
        let kinds = order.iter().map(|&i| self.kinds[i]).collect();
        Self {
            pick,
            q,
            kinds,
            confidence: self.confidence,
            omega,
        }
    }
}

fn check_view_shapes(pick: &DMatrix<f64>, q: &DVector<f64>, kinds: &[ViewKind]) -> Result<()> {
    if pick.nrows() != q.len() {
        return Err(Error::dimension(
            "views.q",
            format!("length {}", pick.nrows()),
            format!("length {}", q.len()),
        ));
    }
    if kinds.len() != q.len() {
        return Err(Error::dimension(
            "views.kinds",
            format!("length {}", q.len()),
            format!("length {}", kinds.len()),
        ));
    }
    Ok(())
}

/// `Ω = (1/c - 1)·PΣPᵀ` for a confidence level `c ∈ (0, 1)`.
pub fn omega_from_confidence(c: f64, pick: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::invalid(
            "confidence",
            format!("must lie strictly inside (0, 1), got {c}"),
        ));
    }
    linalg::check_shape("market.sigma", sigma, pick.ncols(), pick.ncols())?;
    let pspt = pick * sigma * pick.transpose();
    Ok(linalg::symmetrize(&pspt) * (1.0 / c - 1.0))
}

/// Turns qualitative stances into anticipated returns:
/// `q_k = (Pπ)_k + η_k·sqrt((PΣPᵀ)_kk)`.
pub fn quantify_qualitative_views(
    pick: &DMatrix<f64>,
    pi: &DVector<f64>,
    sigma: &DMatrix<f64>,
    stances: &[Stance],
) -> Result<DVector<f64>> {
    let v = pick.nrows();
    if stances.len() != v {
        return Err(Error::dimension(
            "views.stances",
            format!("length {v}"),
            format!("length {}", stances.len()),
        ));
    }
    linalg::check_len("pi", pi, pick.ncols())?;
    let center = pick * pi;
    let spread = pick * sigma * pick.transpose();
    Ok(DVector::from_fn(v, |k, _| {
        center[k] + stances[k].eta() * spread[(k, k)].max(0.0).sqrt()
    }))
}

/// Gaussian law of excess returns after conditioning on views.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDistribution {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// Inverse of the reference covariance.
    pub precision_prior: DMatrix<f64>,
    /// `PᵀΩ⁻¹P`.
    pub precision_views: DMatrix<f64>,
}

impl PosteriorDistribution {
    pub fn n(&self) -> usize {
        self.mean.len()
    }

    /// `‖Pπ* - q‖₂`: how far the posterior mean sits from the stated views.
    pub fn view_gap(&self, views: &ViewSet) -> f64 {
        (views.pick() * &self.mean - views.q()).norm()
    }
}

/// Conditions a Gaussian reference model on a set of views.
///
/// `Σ* = [Σ_ref⁻¹ + PᵀΩ⁻¹P]⁻¹` and `π* = Σ*[Σ_ref⁻¹π + PᵀΩ⁻¹q]`, with the
/// summed precision factored once.
pub fn posterior(reference: &ReferenceModel, views: &ViewSet) -> Result<PosteriorDistribution> {
    let n = reference.mean.len();
    linalg::check_shape("views.pick", views.pick(), views.count(), n)?;
    let prior = linalg::cholesky(&reference.covariance, "reference covariance")?;
    let omega = linalg::cholesky(views.omega(), "view uncertainty")?;

    let precision_prior = linalg::symmetrize(&prior.inverse());
    let omega_inv_pick = omega.solve(views.pick());
    let precision_views = linalg::symmetrize(&(views.pick().transpose() * &omega_inv_pick));
    let rhs = prior.solve(&reference.mean) + views.pick().transpose() * omega.solve(views.q());

    let precision = &precision_prior + &precision_views;
    let combined = linalg::cholesky(&precision, "posterior precision")?;
    let mean = combined.solve(&rhs);
    let covariance = linalg::symmetrize(&combined.inverse());
    Ok(PosteriorDistribution {
        mean,
        covariance,
        precision_prior,
        precision_views,
    })
}

/// The complete-information update: prior `N(π^c, τΣ)`. Shadow-costs play
/// no part here.
pub fn bl_posterior(scenario: &MarketScenario, tau: f64, views: &ViewSet) -> Result<PosteriorDistribution> {
    if !(tau > 0.0) {
        return Err(Error::invalid("tau", format!("must be positive, got {tau}")));
    }
    let reference = ReferenceModel::capm(scenario, tau);
    posterior(&reference, views)
}

/// Marginal law of the views under the reference model:
/// mean `Pπ`, covariance `PΣ_refPᵀ + Ω`.
pub fn posterior_predictive_views(reference: &ReferenceModel, views: &ViewSet) -> Result<(DVector<f64>, DMatrix<f64>)> {
    linalg::check_shape("views.pick", views.pick(), views.count(), reference.mean.len())?;
    let p = views.pick();
    let mean = p * &reference.mean;
    let cov = linalg::symmetrize(&(p * &reference.covariance * p.transpose())) + views.omega();
    Ok((mean, cov))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn omega_for_half_confidence_matches_published_matrix() {
        let (market, _, views) = fixtures::five_asset();
        let omega = views.omega();
        let expected = [
            [0.0900, -0.0600, -0.0460, -0.0200],
            [-0.0600, 0.0800, 0.0150, 0.0300],
            [-0.0460, 0.0150, 0.0908, 0.0390],
            [-0.0200, 0.0300, 0.0390, 0.0600],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert!((omega[(i, j)] - expected[i][j]).abs() < 5e-4, "Ω[{i}][{j}]");
            }
        }
        // c = 0.5 leaves PΣPᵀ unscaled.
        let pspt = views.pick() * market.sigma() * views.pick().transpose();
        assert!((omega - pspt).amax() < 1e-15);
    }

    #[test]
    fn omega_rejects_boundary_confidence() {
        let (market, _, views) = fixtures::five_asset();
        for c in [0.0, 1.0, -0.2, 1.5, f64::NAN] {
            assert!(
                omega_from_confidence(c, views.pick(), market.sigma()).is_err(),
                "c = {c}"
            );
        }
    }

    #[test]
    fn zero_pick_gives_zero_omega_and_posterior_rejects_it() {
        let (market, _, _) = fixtures::five_asset();
        let pick = DMatrix::zeros(1, 5);
        let omega = omega_from_confidence(0.5, &pick, market.sigma()).unwrap();
        assert_eq!(omega.amax(), 0.0);
        let views = ViewSet::with_omega(pick, DVector::zeros(1), vec![ViewKind::Relative], omega).unwrap();
        let reference = ReferenceModel::capm(&market, 0.5);
        assert!(matches!(
            posterior(&reference, &views),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn bullish_single_asset_view_adds_one_standard_deviation() {
        let (market, _, _) = fixtures::five_asset();
        let pi = DVector::from_vec(vec![0.0200, 0.0548, 0.0352, 0.0541, 0.0648]);
        let pick = DMatrix::from_row_slice(1, 5, &[0.0, 1.0, 0.0, 0.0, 0.0]);
        let q = quantify_qualitative_views(&pick, &pi, market.sigma(), &[Stance::Bullish]).unwrap();
        assert!((q[0] - (0.0548 + 0.08_f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn stances_are_symmetric_around_prior_view() {
        let (market, _, views) = fixtures::five_asset();
        let pi = market.pi_c().clone();
        let up = quantify_qualitative_views(views.pick(), &pi, market.sigma(), &[Stance::VeryBullish; 4]).unwrap();
        let down = quantify_qualitative_views(views.pick(), &pi, market.sigma(), &[Stance::VeryBearish; 4]).unwrap();
        let center = views.pick() * &pi;
        assert!(((&up + &down) * 0.5 - center).amax() < 1e-15);
    }

    #[test]
    fn diagonal_single_asset_stance_uses_volatility() {
        let sigma = DMatrix::from_diagonal(&DVector::from_vec(vec![0.04, 0.09]));
        let pi = DVector::from_vec(vec![0.03, 0.05]);
        let pick = DMatrix::identity(2, 2);
        let q = quantify_qualitative_views(&pick, &pi, &sigma, &[Stance::Bearish, Stance::VeryBullish]).unwrap();
        assert!((q[0] - (0.03 - 0.2)).abs() < 1e-15);
        assert!((q[1] - (0.05 + 0.6)).abs() < 1e-15);
    }

    #[test]
    fn predictive_views_with_identity_pick_add_variances() {
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![0.01, 0.02]));
        let reference = ReferenceModel::new(DVector::from_vec(vec![0.1, 0.2]), cov);
        let omega = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.25]));
        let views = ViewSet::with_omega(
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            vec![ViewKind::Absolute; 2],
            omega,
        )
        .unwrap();
        let (mean, cov) = posterior_predictive_views(&reference, &views).unwrap();
        assert_eq!(mean, DVector::from_vec(vec![0.1, 0.2]));
        assert!((cov - DMatrix::from_diagonal(&DVector::from_vec(vec![0.51, 0.27]))).amax() < 1e-15);
    }

    #[test]
    fn posterior_invariants_hold_for_published_data() {
        let (market, _, views) = fixtures::five_asset();
        let post = bl_posterior(&market, 0.5, &views).unwrap();
        let recomposed = linalg::spd_inverse(&post.covariance, "Σ*").unwrap();
        assert!((recomposed - (&post.precision_prior + &post.precision_views)).amax() < 1e-8);
        assert!(linalg::max_asymmetry(&post.covariance) < 1e-14);
        let rhs = &post.precision_prior * market.pi_c()
            + views.pick().transpose() * linalg::solve_spd(views.omega(), views.q(), "Ω").unwrap();
        assert!((&post.covariance * rhs - &post.mean).amax() < 1e-12);
    }
}
