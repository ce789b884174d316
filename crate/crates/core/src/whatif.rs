//! Single what-if evaluation: pick a reference model, edit the views, and
//! allocate against the resulting posterior. Shared by the CLI and the
//! HTTP service.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::allocation::{self, Allocation, AllocationRequest, Objective};
use crate::domain::{self, InformationSet};
use crate::error::{Error, Result, StageExt};
use crate::linalg;
use crate::pipeline;
use crate::reference::{Gamma, ReferenceModel};
use crate::scenario::ScenarioInputs;
use crate::solver::SolverConfig;
use crate::views::{self, PosteriorDistribution, Stance, ViewKind, ViewSet};

/// Parameters of one what-if run. Every field is optional; the scenario
/// supplies the rest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIf {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// Reference model; `None` is the complete-information prior `(π^c, τΣ)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Gamma>,
    /// View confidence in `(0, 1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_overrides: Option<Vec<f64>>,
    #[serde(default, rename = "P_overrides", skip_serializing_if = "Option::is_none")]
    pub pick_overrides: Option<Vec<Vec<f64>>>,
    /// Qualitative stances; replace `q` with prior-centred values.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stances: Option<Vec<Stance>>,
    /// `unconstrained` (default), `risk_constrained`, `risk_budget` or
    /// `min_variance`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_cap: Option<f64>,
    /// Zero-based indices of the assets the investor knows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub info_set: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationSummary {
    pub weights: Vec<f64>,
    pub expected_return: f64,
    pub risk: f64,
    /// `(a, b)` in `w = a·w_u + b·w_mv` for the risk-budget objective.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub two_fund: Option<(f64, f64)>,
}

impl From<Allocation> for AllocationSummary {
    fn from(a: Allocation) -> Self {
        Self {
            weights: a.weights.iter().copied().collect(),
            expected_return: a.expected_return,
            risk: a.risk,
            two_fund: a.two_fund,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewSummary {
    pub pick: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    pub kinds: Vec<ViewKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    pub omega: Vec<Vec<f64>>,
    /// `‖Pπ* − q‖`.
    pub gap: f64,
    /// `‖Pπ − q‖` under the prior.
    pub prior_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfResult {
    pub assets: Vec<String>,
    pub tau: f64,
    pub gamma: Option<Gamma>,
    /// Prior mean: `π` for a reference model, `π^c` otherwise.
    pub prior_mean: Vec<f64>,
    /// `Σ_γ`, or `Σ` for the complete-information prior.
    pub reference_covariance: Vec<Vec<f64>>,
    pub posterior_mean: Vec<f64>,
    pub posterior_variance: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub views: Option<ViewSummary>,
    pub allocation: AllocationSummary,
    /// Same objective against the prior alone; absent when that problem is
    /// infeasible (a risk cap below the prior's minimum risk, say).
    pub baseline: Option<AllocationSummary>,
    pub mean_shift: Vec<f64>,
    pub weight_shift: Option<Vec<f64>>,
}

fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn finite(name: &'static str, x: Option<f64>) -> Result<()> {
    match x {
        Some(x) if !x.is_finite() => Err(Error::invalid(name, format!("must be finite, got {x}"))),
        _ => Ok(()),
    }
}

/// Applies the overrides to the scenario's views.
pub fn edited_views(inputs: &ScenarioInputs, params: &WhatIf, prior_mean: &DVector<f64>) -> Result<Option<ViewSet>> {
    let market = &inputs.market;
    let n = market.n();
    let base = inputs.views.as_ref();
    if base.is_none() && params.pick_overrides.is_none() {
        if params.q_overrides.is_some() || params.stances.is_some() || params.c.is_some() {
            return Err(Error::Missing("views"));
        }
        return Ok(None);
    }
    if params.q_overrides.is_some() && params.stances.is_some() {
        return Err(Error::invalid("stances", "cannot be combined with q_overrides"));
    }

    let (pick, kinds) = match &params.pick_overrides {
        Some(rows) => {
            if rows.is_empty() {
                return Err(Error::invalid("P_overrides", "must contain at least one row"));
            }
            if let Some((l, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
                return Err(Error::dimension(
                    format!("P_overrides[{l}]"),
                    format!("length {n}"),
                    format!("length {}", row.len()),
                ));
            }
            if rows.iter().flatten().any(|x| !x.is_finite()) {
                return Err(Error::invalid("P_overrides", "entries must be finite"));
            }
            let pick = linalg::matrix_from_rows(rows);
            let kinds = pick
                .row_iter()
                .enumerate()
                .map(|(l, row)| {
                    let s: f64 = row.sum();
                    if (s - 1.0).abs() <= domain::ROW_SUM_TOL {
                        Ok(ViewKind::Absolute)
                    } else if s.abs() <= domain::ROW_SUM_TOL {
                        Ok(ViewKind::Relative)
                    } else {
                        Err(Error::invalid(
                            "P_overrides",
                            format!("row {l} sums to {s}; expected 1 or 0"),
                        ))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            (pick, kinds)
        }
        None => {
            let b = base.expect("checked above");
            (b.pick().clone(), b.kinds().to_vec())
        }
    };
    let v = pick.nrows();

    let q = if let Some(q) = &params.q_overrides {
        if q.len() != v {
            return Err(Error::dimension(
                "q_overrides",
                format!("length {v}"),
                format!("length {}", q.len()),
            ));
        }
        if q.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("q_overrides", "entries must be finite"));
        }
        DVector::from_column_slice(q)
    } else if let Some(stances) = &params.stances {
        views::quantify_qualitative_views(&pick, prior_mean, market.sigma(), stances)?
    } else {
        match base {
            Some(b) if b.count() == v => b.q().clone(),
            _ => return Err(Error::Missing("q_overrides")),
        }
    };

    let confidence = params.c.or(base.and_then(|b| b.confidence()));
    let views = match (confidence, base) {
        (Some(c), _) => ViewSet::from_confidence(pick, q, kinds, c, market.sigma())?,
        (None, Some(b)) if params.pick_overrides.is_none() => ViewSet::with_omega(pick, q, kinds, b.omega().clone())?,
        _ => return Err(Error::Missing("c")),
    };
    Ok(Some(views))
}

struct Prepared {
    tau: f64,
    info_set: InformationSet,
    reference: ReferenceModel,
    prior: ReferenceModel,
    views: Option<ViewSet>,
    posterior: PosteriorDistribution,
}

fn prepare(inputs: &ScenarioInputs, params: &WhatIf, solver: &SolverConfig) -> Result<Prepared> {
    let market = &inputs.market;
    let shadow = &inputs.shadow;
    let n = market.n();
    finite("tau", params.tau)?;
    finite("c", params.c)?;
    finite("sigma_cap", params.sigma_cap)?;
    let tau = params.tau.unwrap_or(shadow.tau);
    if !(tau > 0.0) {
        return Err(Error::invalid("tau", format!("must be positive, got {tau}")));
    }
    let info_set = match &params.info_set {
        Some(assets) => InformationSet::new("what-if", assets.clone(), n)?,
        None => InformationSet::full(n),
    };

    let (reference, prior) = match params.gamma {
        Some(gamma) => {
            let (table4, _) = pipeline::market_tables(market, shadow, solver)?;
            let model = ReferenceModel::from_shadow(gamma, tau, table4.pi, market, shadow).stage("reference model")?;
            let prior = model.view_prior(tau)?;
            (model, prior)
        }
        None => {
            let model = ReferenceModel::new(market.pi_c().clone(), market.sigma().clone());
            (model, ReferenceModel::capm(market, tau))
        }
    };

    let views = edited_views(inputs, params, &prior.mean).stage("views")?;
    if let Some(v) = &views {
        domain::validate_views_against(&info_set, v)
            .into_result()
            .stage("views")?;
    }
    let posterior = match &views {
        Some(v) => views::posterior(&prior, v).stage("posterior")?,
        None => unconditioned(&prior),
    };
    Ok(Prepared {
        tau,
        info_set,
        reference,
        prior,
        views,
        posterior,
    })
}

/// Posterior for the what-if model and views, without allocating.
pub fn posterior(inputs: &ScenarioInputs, params: &WhatIf, solver: &SolverConfig) -> Result<PosteriorDistribution> {
    Ok(prepare(inputs, params, solver)?.posterior)
}

/// Runs one what-if evaluation. Deterministic in `(inputs, params)`.
pub fn evaluate(inputs: &ScenarioInputs, params: &WhatIf, solver: &SolverConfig) -> Result<WhatIfResult> {
    let market = &inputs.market;
    let objective = match &params.objective {
        Some(name) => Objective::from_name(name, params.sigma_cap)?,
        None => match params.sigma_cap {
            Some(sigma_cap) => Objective::RiskConstrained { sigma_cap },
            None => Objective::Unconstrained,
        },
    };
    let Prepared {
        tau,
        info_set,
        reference,
        prior,
        views,
        posterior,
    } = prepare(inputs, params, solver)?;

    let request = AllocationRequest {
        info_set,
        objective,
        delta: market.delta(),
    };
    let allocation = allocation::allocate(&posterior, &request).stage("allocation")?;
    let baseline = allocation::allocate(&unconditioned(&prior), &request).ok();

    let view_summary = views.as_ref().map(|v| ViewSummary {
        pick: linalg::matrix_to_rows(v.pick()),
        q: to_vec(v.q()),
        kinds: v.kinds().to_vec(),
        confidence: v.confidence(),
        omega: linalg::matrix_to_rows(v.omega()),
        gap: posterior.view_gap(v),
        prior_gap: (v.pick() * &prior.mean - v.q()).norm(),
    });

    Ok(WhatIfResult {
        assets: market.asset_labels().to_vec(),
        tau,
        gamma: params.gamma,
        prior_mean: to_vec(&prior.mean),
        reference_covariance: linalg::matrix_to_rows(&reference.covariance),
        mean_shift: to_vec(&(&posterior.mean - &prior.mean)),
        weight_shift: baseline.as_ref().map(|b| to_vec(&(&allocation.weights - &b.weights))),
        posterior_variance: posterior.covariance.diagonal().iter().copied().collect(),
        posterior_mean: to_vec(&posterior.mean),
        views: view_summary,
        allocation: allocation.into(),
        baseline: baseline.map(Into::into),
    })
}

fn unconditioned(prior: &ReferenceModel) -> PosteriorDistribution {
    let n = prior.n();
    PosteriorDistribution {
        mean: prior.mean.clone(),
        covariance: prior.covariance.clone(),
        precision_prior: DMatrix::zeros(n, n),
        precision_views: DMatrix::zeros(n, n),
    }
}
