//! Core data types shared by every computation module, plus report-style
//! validation of a full scenario.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::views::ViewSet;

/// Symmetry tolerance applied to every covariance-like input.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Pick-matrix row-sum tolerance for absolute (1) and relative (0) views.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Market inputs: covariance of excess returns, CAPM-implied excess returns
/// and the market parameters from which the price of risk is derived.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketScenario {
    asset_labels: Vec<String>,
    sigma: DMatrix<f64>,
    pi_c: DVector<f64>,
    risk_free_rate: f64,
    expected_market_return: f64,
    sigma_m: f64,
    delta: f64,
}

impl MarketScenario {
    pub fn new(
        asset_labels: Vec<String>,
        sigma: DMatrix<f64>,
        pi_c: DVector<f64>,
        risk_free_rate: f64,
        expected_market_return: f64,
        sigma_m: f64,
    ) -> Result<Self> {
        let n = asset_labels.len();
        if n == 0 {
            return Err(Error::invalid("asset_labels", "at least one asset is required"));
        }
        linalg::check_shape("market.sigma", &sigma, n, n)?;
        linalg::check_len("market.pi_c", &pi_c, n)?;
        if !(sigma_m > 0.0) || !sigma_m.is_finite() {
            return Err(Error::DegenerateMarket { sigma_m });
        }
        let delta = (expected_market_return - risk_free_rate) / (sigma_m * sigma_m);
        if !delta.is_finite() {
            return Err(Error::invalid("delta", "market price of risk is not finite"));
        }
        Ok(Self {
            asset_labels,
            sigma,
            pi_c,
            risk_free_rate,
            expected_market_return,
            sigma_m,
            delta,
        })
    }

    pub fn n(&self) -> usize {
        self.asset_labels.len()
    }

    pub fn asset_labels(&self) -> &[String] {
        &self.asset_labels
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn pi_c(&self) -> &DVector<f64> {
        &self.pi_c
    }

    pub fn risk_free_rate(&self) -> f64 {
        self.risk_free_rate
    }

    pub fn expected_market_return(&self) -> f64 {
        self.expected_market_return
    }

    pub fn sigma_m(&self) -> f64 {
        self.sigma_m
    }

    pub fn market_variance(&self) -> f64 {
        self.sigma_m * self.sigma_m
    }

    /// Market price of risk `(E[R_M] - r_f) / σ_M²`.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Per-asset variances `Σ_kk`.
    pub fn variances(&self) -> DVector<f64> {
        self.sigma.diagonal()
    }

    /// Same market with different CAPM excess returns.
    pub fn with_pi_c(&self, pi_c: DVector<f64>) -> Result<Self> {
        linalg::check_len("market.pi_c", &pi_c, self.n())?;
        Ok(Self { pi_c, ..self.clone() })
    }
}

/// Random-mean variant of the shadow-cost distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomMean {
    pub lambda_1: DVector<f64>,
    pub tau_1: f64,
}

/// Shadow-costs of information and their joint law with returns.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowCostSpec {
    pub lambda: DVector<f64>,
    /// Covariance of the shadow-cost vector.
    pub lambda_cov: DMatrix<f64>,
    /// Cross-covariance between returns (rows) and shadow-costs (columns).
    pub cross_cov: DMatrix<f64>,
    pub tau: f64,
    pub random_mean: Option<RandomMean>,
}

impl ShadowCostSpec {
    /// Shadow-costs that are identically zero with no randomness; the
    /// complete-information special case.
    pub fn zero(n: usize, tau: f64) -> Self {
        Self {
            lambda: DVector::zeros(n),
            lambda_cov: DMatrix::identity(n, n),
            cross_cov: DMatrix::zeros(n, n),
            tau,
            random_mean: None,
        }
    }

    pub fn with_lambda(&self, lambda: DVector<f64>) -> Self {
        Self { lambda, ..self.clone() }
    }
}

/// The subset of assets an investor knows about, as zero-based indices in
/// scenario order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InformationSet {
    pub investor_id: String,
    known_assets: Vec<usize>,
}

impl InformationSet {
    pub fn new(investor_id: impl Into<String>, known_assets: Vec<usize>, n: usize) -> Result<Self> {
        if known_assets.is_empty() {
            return Err(Error::invalid("information set", "must contain at least one asset"));
        }
        let mut seen = vec![false; n];
        for &k in &known_assets {
            if k >= n {
                return Err(Error::invalid(
                    "information set",
                    format!("asset index {k} out of range for {n} assets"),
                ));
            }
            if std::mem::replace(&mut seen[k], true) {
                return Err(Error::invalid("information set", format!("duplicate asset index {k}")));
            }
        }
        Ok(Self {
            investor_id: investor_id.into(),
            known_assets,
        })
    }

    pub fn full(n: usize) -> Self {
        Self {
            investor_id: "market".to_string(),
            known_assets: (0..n).collect(),
        }
    }

    pub fn known_assets(&self) -> &[usize] {
        &self.known_assets
    }

    pub fn len(&self) -> usize {
        self.known_assets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.known_assets.is_empty()
    }

    pub fn contains(&self, k: usize) -> bool {
        self.known_assets.contains(&k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub residual_norm: f64,
    pub delta_lambda: f64,
}

/// An equilibrium: excess-return law, the portfolio it implies and that
/// portfolio's return and risk.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub weights: DVector<f64>,
    pub portfolio_return: f64,
    pub portfolio_risk: f64,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub severity: Severity,
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.errors().next().is_none()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Warning)
    }

    fn error(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.issues.push(Issue {
            severity: Severity::Error,
            field: field.into(),
            message: message.into(),
        });
    }

    fn warn(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.issues.push(Issue {
            severity: Severity::Warning,
            field: field.into(),
            message: message.into(),
        });
    }

    pub fn into_result(self) -> Result<Self> {
        if self.is_valid() {
            Ok(self)
        } else {
            Err(Error::Validation(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return write!(f, "no issues");
        }
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            let tag = match issue.severity {
                Severity::Error => "error",
                Severity::Warning => "warning",
            };
            write!(f, "{tag} {}: {}", issue.field, issue.message)?;
        }
        Ok(())
    }
}

/// Checks every scenario invariant and reports violations instead of failing.
///
/// A joint returns/shadow-cost covariance that is not PSD is a warning only.
pub fn validate_scenario(
    scenario: &MarketScenario,
    shadow: &ShadowCostSpec,
    views: Option<&ViewSet>,
) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = scenario.n();
    let sigma = scenario.sigma();

    let asym = linalg::max_asymmetry(sigma);
    if asym > SYMMETRY_TOL {
        report.error("market.sigma", format!("not symmetric (max |Σij - Σji| = {asym:e})"));
    } else if linalg::cholesky(sigma, "market.sigma").is_err() {
        report.error("market.sigma", "not positive definite");
    }
    if let Some(k) = scenario.pi_c().iter().position(|x| !x.is_finite()) {
        report.error(format!("market.pi_c[{k}]"), "not finite");
    }

    if shadow.lambda.len() != n {
        report.error(
            "shadow_costs.lambda",
            format!("expected length {n}, got {}", shadow.lambda.len()),
        );
    } else {
        for (k, &l) in shadow.lambda.iter().enumerate() {
            if !l.is_finite() || l < 0.0 {
                report.error(
                    format!("shadow_costs.lambda[{k}]"),
                    format!("must be finite and non-negative, got {l}"),
                );
            }
        }
    }
    let lambda_cov_ok = shape_ok(&mut report, "shadow_costs.lambda_cov", &shadow.lambda_cov, n, n);
    if lambda_cov_ok {
        let asym = linalg::max_asymmetry(&shadow.lambda_cov);
        if asym > SYMMETRY_TOL {
            report.error(
                "shadow_costs.lambda_cov",
                format!("not symmetric (max asymmetry {asym:e})"),
            );
        } else if !linalg::is_psd(&shadow.lambda_cov) {
            report.error("shadow_costs.lambda_cov", "not positive semidefinite");
        }
    }
    let cross_ok = shape_ok(&mut report, "shadow_costs.cross_cov", &shadow.cross_cov, n, n);
    if !(shadow.tau > 0.0) || !shadow.tau.is_finite() {
        report.error("shadow_costs.tau", format!("must be positive, got {}", shadow.tau));
    }
    if let Some(rm) = &shadow.random_mean {
        if rm.lambda_1.len() != n {
            report.error(
                "shadow_costs.random_mean.lambda_1",
                format!("expected length {n}, got {}", rm.lambda_1.len()),
            );
        } else if let Some(k) = rm.lambda_1.iter().position(|&l| !l.is_finite() || l < 0.0) {
            report.error(
                format!("shadow_costs.random_mean.lambda_1[{k}]"),
                "must be finite and non-negative",
            );
        }
        if !(rm.tau_1 > 0.0) || !rm.tau_1.is_finite() {
            report.error(
                "shadow_costs.random_mean.tau_1",
                format!("must be positive, got {}", rm.tau_1),
            );
        }
    }

    if lambda_cov_ok && cross_ok && shadow.tau > 0.0 && sigma.is_square() {
        let joint = joint_covariance(shadow.tau, sigma, &shadow.cross_cov, &shadow.lambda_cov);
        let (min, max) = linalg::eigen_range(&joint);
        if min < -linalg::PSD_RELATIVE_TOL * max.abs() {
            report.warn(
                "shadow_costs",
                format!("joint covariance [[τΣ, Σ_Rλ], [Σ_λR, Λ]] is not PSD (smallest eigenvalue {min:.6e})"),
            );
        }
    }

    if let Some(views) = views {
        validate_views(&mut report, views, n);
    }
    report
}

fn shape_ok(report: &mut ValidationReport, field: &str, m: &DMatrix<f64>, rows: usize, cols: usize) -> bool {
    if m.nrows() != rows || m.ncols() != cols {
        report.error(field, format!("expected {rows}x{cols}, got {}", linalg::shape(m)));
        false
    } else {
        true
    }
}

fn validate_views(report: &mut ValidationReport, views: &ViewSet, n: usize) {
    let pick = views.pick();
    let v = views.count();
    if !shape_ok(report, "views.pick", pick, v, n) {
        return;
    }
    for (l, kind) in views.kinds().iter().enumerate() {
        let row = pick.row(l);
        if let Some(k) = row.iter().position(|x| !(-1.0..=1.0).contains(x)) {
            report.error(
                format!("views.pick[{l}][{k}]"),
                format!("entry {} outside [-1, 1]", row[k]),
            );
        }
        let sum: f64 = row.iter().sum();
        let target = kind.row_sum();
        if (sum - target).abs() > ROW_SUM_TOL {
            report.error(
                format!("views.pick[{l}]"),
                format!("{kind} view must sum to {target}, sums to {sum}"),
            );
        }
    }
    if let Some(c) = views.confidence() {
        if !(c > 0.0 && c < 1.0) {
            report.error("views.confidence", format!("must lie in (0, 1), got {c}"));
        }
    }
    let omega = views.omega();
    if omega.nrows() != v || omega.ncols() != v {
        report.error("views.omega", format!("expected {v}x{v}, got {}", linalg::shape(omega)));
    } else if linalg::max_asymmetry(omega) > SYMMETRY_TOL {
        report.error("views.omega", "not symmetric");
    } else if linalg::cholesky(omega, "views.omega").is_err() {
        report.error("views.omega", "not positive definite");
    }
}

/// Checks that views only reference assets inside the information set.
pub fn validate_views_against(info: &InformationSet, views: &ViewSet) -> ValidationReport {
    let mut report = ValidationReport::default();
    let pick = views.pick();
    for k in 0..pick.ncols() {
        if !info.contains(k) && pick.column(k).iter().any(|&x| x != 0.0) {
            report.error(
                format!("views.pick[..][{k}]"),
                format!("asset {k} is outside the information set of `{}`", info.investor_id),
            );
        }
    }
    report
}

/// Block matrix `[[τΣ, Σ_Rλ], [Σ_λR, Λ]]`.
pub fn joint_covariance(
    tau: f64,
    sigma: &DMatrix<f64>,
    cross_cov: &DMatrix<f64>,
    lambda_cov: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = sigma.nrows();
    let mut joint = DMatrix::zeros(2 * n, 2 * n);
    joint.view_mut((0, 0), (n, n)).copy_from(&(sigma * tau));
    joint.view_mut((0, n), (n, n)).copy_from(cross_cov);
    joint.view_mut((n, 0), (n, n)).copy_from(&cross_cov.transpose());
    joint.view_mut((n, n), (n, n)).copy_from(lambda_cov);
    joint
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::views::{ViewKind, ViewSet};

    #[test]
    fn published_dataset_has_no_errors_and_one_psd_warning() {
        let (market, shadow, views) = fixtures::five_asset();
        let report = validate_scenario(&market, &shadow, Some(&views));
        assert!(report.is_valid(), "{report}");
        let warnings: Vec<_> = report.warnings().collect();
        assert_eq!(warnings.len(), 1);
        assert_eq!(warnings[0].field, "shadow_costs");
    }

    #[test]
    fn asymmetric_sigma_is_reported() {
        let (market, shadow, _) = fixtures::five_asset();
        let mut sigma = market.sigma().clone();
        sigma[(0, 1)] = 0.021;
        let bad = MarketScenario::new(
            market.asset_labels().to_vec(),
            sigma,
            market.pi_c().clone(),
            0.02,
            0.04,
            0.05,
        )
        .unwrap();
        let report = validate_scenario(&bad, &shadow, None);
        assert!(!report.is_valid());
        assert!(report
            .errors()
            .any(|i| i.field == "market.sigma" && i.message.contains("symmetric")));
    }

    #[test]
    fn relative_row_must_sum_to_zero() {
        let (market, shadow, _) = fixtures::five_asset();
        let pick = DMatrix::from_row_slice(1, 5, &[1.0, -0.5, 0.0, 0.0, 0.0]);
        let views = ViewSet::from_confidence(
            pick,
            DVector::from_vec(vec![0.01]),
            vec![ViewKind::Relative],
            0.5,
            market.sigma(),
        )
        .unwrap();
        let report = validate_scenario(&market, &shadow, Some(&views));
        let err = report.errors().find(|i| i.field == "views.pick[0]").unwrap();
        assert!(err.message.contains("sums to 0.5"), "{}", err.message);
    }

    #[test]
    fn validation_is_pure() {
        let (market, shadow, views) = fixtures::five_asset();
        let a = validate_scenario(&market, &shadow, Some(&views));
        let b = validate_scenario(&market, &shadow, Some(&views));
        assert_eq!(a, b);
    }

    #[test]
    fn negative_shadow_cost_is_an_error() {
        let (market, shadow, _) = fixtures::five_asset();
        let mut lambda = shadow.lambda.clone();
        lambda[2] = -0.01;
        let report = validate_scenario(&market, &shadow.with_lambda(lambda), None);
        assert!(report.errors().any(|i| i.field == "shadow_costs.lambda[2]"));
    }

    #[test]
    fn zero_market_volatility_is_rejected() {
        let err = MarketScenario::new(
            vec!["a".into()],
            DMatrix::from_element(1, 1, 0.04),
            DVector::from_element(1, 0.01),
            0.02,
            0.04,
            0.0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::DegenerateMarket { .. }));
    }

    #[test]
    fn delta_is_derived_from_market_parameters() {
        let (market, _, _) = fixtures::five_asset();
        assert!((market.delta() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn information_set_rejects_duplicates_and_out_of_range() {
        assert!(InformationSet::new("j", vec![], 3).is_err());
        assert!(InformationSet::new("j", vec![0, 0], 3).is_err());
        assert!(InformationSet::new("j", vec![3], 3).is_err());
        assert_eq!(InformationSet::new("j", vec![2, 0], 3).unwrap().len(), 2);
    }

    #[test]
    fn views_outside_information_set_are_flagged() {
        let (_, _, views) = fixtures::five_asset();
        let info = InformationSet::new("j", vec![0, 1, 2, 3], 5).unwrap();
        let report = validate_views_against(&info, &views);
        assert!(report.errors().any(|i| i.field == "views.pick[..][4]"));
        assert!(validate_views_against(&InformationSet::full(5), &views).is_valid());
    }
}
