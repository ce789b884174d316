//! Portfolios built from a posterior restricted to an investor's
//! information set.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::InformationSet;
use crate::error::{Error, Result};
use crate::linalg;
use crate::views::PosteriorDistribution;

/// Mean and covariance over the assets of an information set.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetBlock {
    /// Indices into the full asset list, in information-set order.
    pub assets: Vec<usize>,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl AssetBlock {
    pub fn full(mean: DVector<f64>, covariance: DMatrix<f64>) -> Self {
        Self {
            assets: (0..mean.len()).collect(),
            mean,
            covariance,
        }
    }

    pub fn len(&self) -> usize {
        self.assets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assets.is_empty()
    }

    /// Places block weights back into a length-`n` vector, zero elsewhere.
    pub fn expand(&self, weights: &DVector<f64>, n: usize) -> DVector<f64> {
        let mut full = DVector::zeros(n);
        for (i, &k) in self.assets.iter().enumerate() {
            full[k] = weights[i];
        }
        full
    }

    pub fn risk(&self, weights: &DVector<f64>) -> f64 {
        weights.dot(&(&self.covariance * weights)).max(0.0).sqrt()
    }
}

/// Sub-vector and principal sub-matrix of the posterior on the known assets.
pub fn restrict_to_information_set(posterior: &PosteriorDistribution, info: &InformationSet) -> Result<AssetBlock> {
    let idx = info.known_assets();
    if idx.is_empty() {
        return Err(Error::invalid("information set", "must contain at least one asset"));
    }
    let n = posterior.n();
    if let Some(&k) = idx.iter().find(|&&k| k >= n) {
        return Err(Error::invalid(
            "information set",
            format!("asset index {k} out of range for {n} assets"),
        ));
    }
    let m = idx.len();
    Ok(AssetBlock {
        assets: idx.to_vec(),
        mean: DVector::from_fn(m, |i, _| posterior.mean[idx[i]]),
        covariance: DMatrix::from_fn(m, m, |i, j| posterior.covariance[(idx[i], idx[j])]),
    })
}

/// `w = δ⁻¹Σ*⁻¹π*`.
pub fn unconstrained_allocation(block: &AssetBlock, delta: f64) -> Result<DVector<f64>> {
    if !(delta > 0.0) {
        return Err(Error::invalid("delta", format!("must be positive, got {delta}")));
    }
    Ok(linalg::solve_spd(&block.covariance, &block.mean, "posterior covariance")? / delta)
}

/// The unconstrained direction rescaled to risk `sigma_cap`.
pub fn risk_constrained_allocation(block: &AssetBlock, delta: f64, sigma_cap: f64) -> Result<DVector<f64>> {
    check_cap(sigma_cap)?;
    let wu = unconstrained_allocation(block, delta)?;
    let risk = block.risk(&wu);
    if risk == 0.0 {
        return Err(Error::DegenerateDirection("unconstrained allocation has zero risk"));
    }
    Ok(wu * (sigma_cap / risk))
}

/// `w = Σ*⁻¹1 / (1ᵀΣ*⁻¹1)`.
pub fn min_variance_allocation(block: &AssetBlock) -> Result<DVector<f64>> {
    let ones = DVector::from_element(block.len(), 1.0);
    let x = linalg::solve_spd(&block.covariance, &ones, "posterior covariance")?;
    let s = x.sum();
    if !(s > 0.0) {
        return Err(Error::DegenerateDirection(
            "minimum-variance normalizer is not positive",
        ));
    }
    Ok(x / s)
}

/// Two-fund portfolio `a·w_u + b·w_mv`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskBudget {
    pub weights: DVector<f64>,
    pub a: f64,
    pub b: f64,
}

/// Fully invested portfolio of risk at most `sigma_cap` on the line through
/// `w_mv` and `w_u`, taking the largest feasible `a`.
///
/// Writing `w = w_mv + a·d` with `d = w_u - (1ᵀw_u)·w_mv` makes the budget
/// hold for any `a` and kills the cross term, so
/// `wᵀΣw = w_mvᵀΣw_mv + a²·dᵀΣd`. Expected return grows with `a` because
/// `π*ᵀd = δ·dᵀΣd ≥ 0`.
pub fn risk_budget_allocation(block: &AssetBlock, delta: f64, sigma_cap: f64) -> Result<RiskBudget> {
    check_cap(sigma_cap)?;
    let wmv = min_variance_allocation(block)?;
    let wu = unconstrained_allocation(block, delta)?;
    let min_var = wmv.dot(&(&block.covariance * &wmv)).max(0.0);
    let min_risk = min_var.sqrt();
    if sigma_cap < min_risk * (1.0 - 1e-12) {
        return Err(Error::Infeasible { sigma_cap, min_risk });
    }
    let su = wu.sum();
    let n = wu.len() as f64;
    // `d` sums to zero in exact arithmetic; remove the rounding so large `a`
    // cannot break the budget.
    let mut d = &wu - &wmv * su;
    d.add_scalar_mut(-d.sum() / n);
    let dsd = d.dot(&(&block.covariance * &d));
    let a = if dsd > 0.0 {
        ((sigma_cap * sigma_cap - min_var).max(0.0) / dsd).sqrt()
    } else {
        0.0
    };
    let b = 1.0 - a * su;
    let weights = &wmv + &d * a;
    Ok(RiskBudget { weights, a, b })
}

fn check_cap(sigma_cap: f64) -> Result<()> {
    if sigma_cap > 0.0 && sigma_cap.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(
            "sigma_cap",
            format!("must be positive, got {sigma_cap}"),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    Unconstrained,
    RiskConstrained { sigma_cap: f64 },
    RiskBudgetConstrained { sigma_cap: f64 },
    MinVariance,
}

impl Objective {
    /// Parses `unconstrained`, `risk_constrained`, `risk_budget` or
    /// `min_variance`; the capped objectives need `sigma_cap`.
    pub fn from_name(name: &str, sigma_cap: Option<f64>) -> Result<Self> {
        let cap = || sigma_cap.ok_or(Error::Missing("sigma_cap"));
        match name.replace('-', "_").as_str() {
            "unconstrained" => Ok(Objective::Unconstrained),
            "risk_constrained" => Ok(Objective::RiskConstrained { sigma_cap: cap()? }),
            "risk_budget" | "risk_budget_constrained" => Ok(Objective::RiskBudgetConstrained { sigma_cap: cap()? }),
            "min_variance" => Ok(Objective::MinVariance),
            other => Err(Error::invalid("objective", format!("unknown objective `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationRequest {
    pub info_set: InformationSet,
    pub objective: Objective,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// Full-length weights; zero outside the information set.
    pub weights: DVector<f64>,
    /// Excess return `wᵀπ*`.
    pub expected_return: f64,
    pub risk: f64,
    /// Two-fund coefficients for the risk-and-budget objective.
    pub two_fund: Option<(f64, f64)>,
}

pub fn allocate(posterior: &PosteriorDistribution, request: &AllocationRequest) -> Result<Allocation> {
    let block = restrict_to_information_set(posterior, &request.info_set)?;
    let mut two_fund = None;
    let w = match request.objective {
        Objective::Unconstrained => unconstrained_allocation(&block, request.delta)?,
        Objective::RiskConstrained { sigma_cap } => risk_constrained_allocation(&block, request.delta, sigma_cap)?,
        Objective::RiskBudgetConstrained { sigma_cap } => {
            let rb = risk_budget_allocation(&block, request.delta, sigma_cap)?;
            two_fund = Some((rb.a, rb.b));
            rb.weights
        }
        Objective::MinVariance => min_variance_allocation(&block)?,
    };
    Ok(Allocation {
        expected_return: w.dot(&block.mean),
        risk: block.risk(&w),
        weights: block.expand(&w, posterior.n()),
        two_fund,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block() -> AssetBlock {
        let cov = DMatrix::from_row_slice(3, 3, &[0.04, 0.01, 0.0, 0.01, 0.09, 0.02, 0.0, 0.02, 0.16]);
        AssetBlock::full(DVector::from_vec(vec![0.05, 0.08, 0.1]), cov)
    }

    #[test]
    fn identity_covariance_min_variance_is_equal_weight() {
        let b = AssetBlock::full(DVector::zeros(4), DMatrix::identity(4, 4));
        let w = min_variance_allocation(&b).unwrap();
        assert!((w - DVector::from_element(4, 0.25)).amax() < 1e-15);
    }

    #[test]
    fn diagonal_min_variance_is_inverse_variance() {
        let b = AssetBlock::full(
            DVector::zeros(2),
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0])),
        );
        let w = min_variance_allocation(&b).unwrap();
        assert!((w[0] - 0.8).abs() < 1e-15 && (w[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn risk_constrained_scales_unconstrained() {
        let b = block();
        let wu = unconstrained_allocation(&b, 3.0).unwrap();
        let own = b.risk(&wu);
        assert!((risk_constrained_allocation(&b, 3.0, own).unwrap() - &wu).amax() < 1e-15);
        let half = risk_constrained_allocation(&b, 3.0, own / 2.0).unwrap();
        assert!((half * 2.0 - &wu).amax() < 1e-15);
    }

    #[test]
    fn risk_budget_at_min_risk_is_min_variance() {
        let b = block();
        let wmv = min_variance_allocation(&b).unwrap();
        let rb = risk_budget_allocation(&b, 3.0, b.risk(&wmv)).unwrap();
        assert!(rb.a.abs() < 1e-6);
        assert!((rb.weights - wmv).amax() < 1e-6);
    }

    #[test]
    fn risk_budget_below_min_risk_is_infeasible() {
        let b = block();
        let min_risk = b.risk(&min_variance_allocation(&b).unwrap());
        match risk_budget_allocation(&b, 3.0, min_risk * 0.9) {
            Err(Error::Infeasible { min_risk: r, .. }) => assert!((r - min_risk).abs() < 1e-15),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn risk_budget_return_rises_with_cap() {
        let b = block();
        let min_risk = b.risk(&min_variance_allocation(&b).unwrap());
        let mut last = f64::NEG_INFINITY;
        for i in 0..20 {
            let cap = min_risk * (1.0 + 0.1 * i as f64);
            let rb = risk_budget_allocation(&b, 3.0, cap).unwrap();
            assert!((rb.weights.sum() - 1.0).abs() < 1e-12);
            assert!(b.risk(&rb.weights).powi(2) <= cap * cap * (1.0 + 1e-10));
            let ret = rb.weights.dot(&b.mean);
            assert!(ret >= last - 1e-15);
            last = ret;
        }
    }

    #[test]
    fn allocation_expands_to_full_length() {
        let post = PosteriorDistribution {
            mean: DVector::from_vec(vec![0.05, 0.0, 0.08]),
            covariance: DMatrix::from_diagonal(&DVector::from_vec(vec![0.04, 1.0, 0.09])),
            precision_prior: DMatrix::identity(3, 3),
            precision_views: DMatrix::zeros(3, 3),
        };
        let req = AllocationRequest {
            info_set: InformationSet::new("j", vec![0, 2], 3).unwrap(),
            objective: Objective::Unconstrained,
            delta: 2.0,
        };
        let a = allocate(&post, &req).unwrap();
        assert_eq!(a.weights[1], 0.0);
        assert!((a.weights[0] - 0.05 / 0.08).abs() < 1e-15);
    }

    #[test]
    fn objective_names() {
        assert_eq!(
            Objective::from_name("min-variance", None).unwrap(),
            Objective::MinVariance
        );
        assert!(Objective::from_name("risk_budget", None).is_err());
        assert!(Objective::from_name("sharpe", Some(0.1)).is_err());
    }
}
