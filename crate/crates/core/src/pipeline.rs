//! End-to-end computation for one scenario file: market equilibria,
//! reference models, view posteriors, allocations, sweeps and their text and
//! CSV renderings.

use std::fmt::{self, Write as _};

use nalgebra::{DMatrix, DVector};

use crate::allocation::{self, AssetBlock};
use crate::domain::{MarketScenario, ShadowCostSpec};
use crate::equilibrium::{self, Regime, SensitivityReport};
use crate::error::{Error, Result, StageExt};
use crate::par::{self, Execution};
use crate::reference::{Gamma, ReferenceModel};
use crate::scenario::{ScenarioFile, ScenarioInputs};
use crate::solver::{self, SolverConfig};
use crate::views::{self, PosteriorDistribution, ViewSet};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    /// Overrides the file's `τ`.
    pub tau: Option<f64>,
    /// Overrides the views' confidence; `Ω` is re-derived from it.
    pub confidence: Option<f64>,
    /// Reference models to evaluate; empty means the file's sweep list, or
    /// both models when the file has none.
    pub gammas: Vec<Gamma>,
    pub solver: SolverConfig,
    pub execution: Execution,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            tau: None,
            confidence: None,
            gammas: Vec::new(),
            solver: SolverConfig::default(),
            execution: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioRow {
    pub weights: DVector<f64>,
    pub expected_return: f64,
    pub risk: f64,
}

impl PortfolioRow {
    fn new(weights: DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>, r_f: f64) -> Self {
        let (expected_return, risk) = equilibrium::portfolio_metrics(&weights, mean, cov, r_f);
        Self {
            weights,
            expected_return,
            risk,
        }
    }
}

/// Excess returns and market portfolios. Returns include the risk-free rate.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketTable {
    pub pi_c: DVector<f64>,
    pub lambda: DVector<f64>,
    pub beta: DVector<f64>,
    pub extra: DVector<f64>,
    pub pi: DVector<f64>,
    pub capm: PortfolioRow,
    pub incomplete: PortfolioRow,
    pub investor: PortfolioRow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterTable {
    pub delta: f64,
    pub lambda_m: f64,
    pub delta_lambda: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRow {
    pub gamma: Gamma,
    pub covariance: DMatrix<f64>,
    pub portfolio: PortfolioRow,
}

/// Reference-model portfolios at one `τ`. Returns are excess returns.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTable {
    pub tau: f64,
    pub rows: Vec<ReferenceRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PosteriorModel {
    /// Complete-information prior `N(π^c, τΣ)`.
    BlackLitterman,
    Reference(Gamma),
}

impl fmt::Display for PosteriorModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PosteriorModel::BlackLitterman => f.write_str("BL"),
            PosteriorModel::Reference(g) => write!(f, "gamma={g}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorRow {
    pub model: PosteriorModel,
    pub posterior: PosteriorDistribution,
    pub portfolio: PortfolioRow,
    /// `‖Pπ* - q‖₂`.
    pub view_gap: f64,
}

/// View posteriors and allocations at one `(τ, c)`. Returns are excess returns.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewsTable {
    pub tau: f64,
    pub confidence: Option<f64>,
    pub omega: DMatrix<f64>,
    pub rows: Vec<PosteriorRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub asset_labels: Vec<String>,
    pub tau: f64,
    pub table4: MarketTable,
    pub table5: ParameterTable,
    pub sensitivities: SensitivityReport,
    pub table6: ReferenceTable,
    pub table7: Option<ViewsTable>,
    pub tau_sweep: Vec<ReferenceTable>,
    pub confidence_sweep: Vec<ViewsTable>,
}

/// Validates the file and runs every stage.
pub fn run_pipeline(file: &ScenarioFile, options: &PipelineOptions) -> Result<ReportBundle> {
    let inputs = file.inputs().stage("scenario")?;
    inputs.validate().into_result().stage("validation")?;
    run_inputs(&inputs, options)
}

/// Runs every stage on already-built inputs.
pub fn run_inputs(inputs: &ScenarioInputs, options: &PipelineOptions) -> Result<ReportBundle> {
    let market = &inputs.market;
    let shadow = &inputs.shadow;
    let tau = options.tau.unwrap_or(shadow.tau);
    if !(tau > 0.0) {
        return Err(Error::invalid("tau", format!("must be positive, got {tau}")));
    }
    let gammas = if !options.gammas.is_empty() {
        options.gammas.clone()
    } else if !inputs.sweeps.gamma.is_empty() {
        inputs.sweeps.gamma.clone()
    } else {
        Gamma::ALL.to_vec()
    };

    let (table4, table5) = market_tables(market, shadow, &options.solver)?;
    let sensitivities = equilibrium::classify_sensitivity_regimes(
        &table4.lambda,
        &table4.beta,
        &table4.incomplete.weights,
        table5.delta_lambda,
        &market.variances(),
    );

    let table6 = reference_table(market, shadow, &table4.pi, tau, &gammas).stage("reference models")?;
    let tau_sweep = par::map(options.execution, &inputs.sweeps.tau, |&t| {
        reference_table(market, shadow, &table4.pi, t, &gammas)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()
    .stage("tau sweep")?;

    let views = match (&inputs.views, options.confidence) {
        (Some(v), Some(c)) => Some(v.with_confidence(c, market.sigma()).stage("views")?),
        (Some(v), None) => Some(v.clone()),
        (None, _) => None,
    };
    let (table7, confidence_sweep) = match &views {
        Some(views) => {
            let t7 = views_table(market, shadow, &table4.pi, tau, views, &gammas).stage("posterior")?;
            let sweep = par::map(options.execution, &inputs.sweeps.confidence, |&c| {
                let v = views.with_confidence(c, market.sigma())?;
                views_table(market, shadow, &table4.pi, tau, &v, &gammas)
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()
            .stage("confidence sweep")?;
            (Some(t7), sweep)
        }
        None => (None, Vec::new()),
    };

    Ok(ReportBundle {
        asset_labels: market.asset_labels().to_vec(),
        tau,
        table4,
        table5,
        sensitivities,
        table6,
        table7,
        tau_sweep,
        confidence_sweep,
    })
}

/// CAPM, self-consistent incomplete-information and investor portfolios.
pub fn market_tables(
    market: &MarketScenario,
    shadow: &ShadowCostSpec,
    config: &SolverConfig,
) -> Result<(MarketTable, ParameterTable)> {
    let sigma = market.sigma();
    let r_f = market.risk_free_rate();
    let lambda = &shadow.lambda;

    let capm_w = solver::capm_weights(market).stage("capm")?;
    let solved = solver::solve_self_consistent(market, lambda, config)
        .and_then(|o| o.require_converged())
        .stage("self-consistent equilibrium")?;
    let w = solved.weights;
    let beta = equilibrium::beta_vector(sigma, &w, market.sigma_m()).stage("beta")?;
    let extra = equilibrium::extra_excess_returns(lambda, solved.lambda_m, &beta);
    let pi = market.pi_c() + &extra;
    let investor_w =
        solver::investor_optimal_portfolio(market, lambda, solved.delta_lambda).stage("investor portfolio")?;

    let table4 = MarketTable {
        capm: PortfolioRow::new(capm_w, market.pi_c(), sigma, r_f),
        incomplete: PortfolioRow::new(w, &pi, sigma, r_f),
        investor: PortfolioRow::new(investor_w, &pi, sigma, r_f),
        pi_c: market.pi_c().clone(),
        lambda: lambda.clone(),
        beta,
        extra,
        pi,
    };
    let table5 = ParameterTable {
        delta: market.delta(),
        lambda_m: solved.lambda_m,
        delta_lambda: solved.delta_lambda,
        residual: solved.residual_norm,
    };
    Ok((table4, table5))
}

/// `w_M^γ = (δΣ_γ)⁻¹π` for each requested model.
pub fn reference_table(
    market: &MarketScenario,
    shadow: &ShadowCostSpec,
    pi: &DVector<f64>,
    tau: f64,
    gammas: &[Gamma],
) -> Result<ReferenceTable> {
    let rows = gammas
        .iter()
        .map(|&gamma| {
            let model = ReferenceModel::from_shadow(gamma, tau, pi.clone(), market, shadow)?;
            let w = solver::reference_model_portfolio(pi, &model.covariance, market.delta())?;
            Ok(ReferenceRow {
                gamma,
                portfolio: PortfolioRow::new(w, pi, &model.covariance, 0.0),
                covariance: model.covariance,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReferenceTable { tau, rows })
}

/// Complete-information and reference-model posteriors with their
/// unconstrained allocations over all assets.
pub fn views_table(
    market: &MarketScenario,
    shadow: &ShadowCostSpec,
    pi: &DVector<f64>,
    tau: f64,
    views: &ViewSet,
    gammas: &[Gamma],
) -> Result<ViewsTable> {
    let mut priors = vec![(PosteriorModel::BlackLitterman, ReferenceModel::capm(market, tau))];
    for &gamma in gammas {
        let model = ReferenceModel::from_shadow(gamma, tau, pi.clone(), market, shadow)?.view_prior(tau)?;
        priors.push((PosteriorModel::Reference(gamma), model));
    }
    let rows = priors
        .into_iter()
        .map(|(model, prior)| {
            let posterior = views::posterior(&prior, views)?;
            let block = AssetBlock::full(posterior.mean.clone(), posterior.covariance.clone());
            let w = allocation::unconstrained_allocation(&block, market.delta())?;
            Ok(PosteriorRow {
                model,
                portfolio: PortfolioRow::new(w, &posterior.mean, &posterior.covariance, 0.0),
                view_gap: posterior.view_gap(views),
                posterior,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ViewsTable {
        tau,
        confidence: views.confidence(),
        omega: views.omega().clone(),
        rows,
    })
}

/// Number formatting for rendered tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    /// Four decimals.
    #[default]
    Table,
    /// Ten significant digits.
    Full,
}

impl Precision {
    pub fn fmt(self, x: f64) -> String {
        match self {
            Precision::Table => format!("{x:.4}"),
            Precision::Full => format!("{x:.9e}"),
        }
    }

    fn fmt_small(self, x: f64) -> String {
        match self {
            Precision::Table => format!("{x:.4e}"),
            Precision::Full => format!("{x:.9e}"),
        }
    }
}

fn vector_line(out: &mut String, label: &str, v: &DVector<f64>, p: Precision) {
    let cells: Vec<String> = v.iter().map(|&x| p.fmt(x)).collect();
    let _ = writeln!(out, "{label:<24}{}", cells.join("  "));
}

fn header_line(out: &mut String, title: &str, labels: &[String]) {
    let _ = writeln!(out, "{title}");
    let _ = writeln!(out, "{:<24}{}", "", labels.join("  "));
}

/// Renders table 4, 5, 6 or 7 as aligned text.
pub fn render_table(bundle: &ReportBundle, table: u8, precision: Precision) -> Result<String> {
    let p = precision;
    let mut out = String::new();
    let labels = &bundle.asset_labels;
    match table {
        4 => {
            let t = &bundle.table4;
            header_line(
                &mut out,
                "Table 4: excess returns, market portfolios and investor portfolio",
                labels,
            );
            vector_line(&mut out, "pi_c", &t.pi_c, p);
            vector_line(&mut out, "w_capm", &t.capm.weights, p);
            vector_line(&mut out, "lambda", &t.lambda, p);
            vector_line(&mut out, "beta", &t.beta, p);
            vector_line(&mut out, "extra", &t.extra, p);
            vector_line(&mut out, "pi", &t.pi, p);
            vector_line(&mut out, "w_incomplete", &t.incomplete.weights, p);
            vector_line(&mut out, "w_investor", &t.investor.weights, p);
            for (name, row) in [
                ("capm", &t.capm),
                ("incomplete", &t.incomplete),
                ("investor", &t.investor),
            ] {
                let _ = writeln!(
                    out,
                    "{:<24}return {}  risk {}",
                    name,
                    p.fmt(row.expected_return),
                    p.fmt(row.risk)
                );
            }
        }
        5 => {
            let t = &bundle.table5;
            let _ = writeln!(out, "Table 5: computed parameters");
            let _ = writeln!(out, "{:<24}{}", "delta", p.fmt(t.delta));
            let _ = writeln!(out, "{:<24}{}", "lambda_m", p.fmt_small(t.lambda_m));
            let _ = writeln!(out, "{:<24}{}", "delta_lambda", p.fmt(t.delta_lambda));
            let _ = writeln!(out, "{:<24}{:.3e}", "residual", t.residual);
        }
        6 => {
            let t = &bundle.table6;
            header_line(
                &mut out,
                &format!("Table 6: reference-model portfolios (tau = {})", t.tau),
                labels,
            );
            vector_line(&mut out, "pi", &bundle.table4.pi, p);
            for row in &t.rows {
                vector_line(&mut out, &format!("w gamma={}", row.gamma), &row.portfolio.weights, p);
            }
            let inc = &bundle.table4.incomplete;
            let _ = writeln!(
                out,
                "{:<24}return {}  risk {}",
                "incomplete",
                p.fmt(inc.expected_return),
                p.fmt(inc.risk)
            );
            for row in &t.rows {
                let _ = writeln!(
                    out,
                    "{:<24}return {}  risk {}",
                    format!("gamma={}", row.gamma),
                    p.fmt(row.portfolio.expected_return),
                    p.fmt(row.portfolio.risk)
                );
            }
        }
        7 => {
            let t = bundle.table7.as_ref().ok_or(Error::Missing("views"))?;
            let c = t
                .confidence
                .map_or("explicit omega".to_string(), |c| format!("c = {c}"));
            header_line(
                &mut out,
                &format!("Table 7: posterior with views (tau = {}, {c})", t.tau),
                labels,
            );
            for row in &t.rows {
                vector_line(&mut out, &format!("{} mean", row.model), &row.posterior.mean, p);
                vector_line(&mut out, &format!("{} weights", row.model), &row.portfolio.weights, p);
            }
            for row in &t.rows {
                let _ = writeln!(
                    out,
                    "{:<24}return {}  risk {}",
                    row.model.to_string(),
                    p.fmt(row.portfolio.expected_return),
                    p.fmt(row.portfolio.risk)
                );
            }
        }
        other => {
            return Err(Error::invalid(
                "table",
                format!("no table {other}; expected 4, 5, 6 or 7"),
            ))
        }
    }
    Ok(out)
}

fn sign_label(x: f64) -> &'static str {
    if x > 0.0 {
        "positive"
    } else if x < 0.0 {
        "negative"
    } else {
        "zero"
    }
}

fn regime_label(r: Regime) -> &'static str {
    match r {
        Regime::BetaNegative => "beta_negative",
        Regime::BetaZero => "beta_zero",
        Regime::BetaPositiveLowWeight => "beta_positive_low_weight",
        Regime::BetaPositiveHighWeight => "beta_positive_high_weight",
    }
}

fn num(x: f64) -> String {
    x.to_string()
}

/// CSV series behind figures 1 to 7.
///
/// 1: λ, π^c and π per asset. 2: market and investor portfolios.
/// 3: sensitivities with their signs. 4: reference covariances over the τ
/// sweep. 5: reference portfolios over the τ sweep. 6: posterior
/// covariances. 7: posterior portfolios over the confidence sweep.
/// Figures driven by an empty sweep export only the header.
pub fn export_figure_data(bundle: &ReportBundle, figure_id: &str) -> Result<String> {
    let labels = &bundle.asset_labels;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut write = |rec: Vec<String>| w.write_record(&rec).map_err(|e| Error::Io(e.into()));
    let with_assets = |prefix: &[&str], suffix: &[&str]| -> Vec<String> {
        prefix
            .iter()
            .map(|s| s.to_string())
            .chain(labels.iter().cloned())
            .chain(suffix.iter().map(|s| s.to_string()))
            .collect()
    };
    let t4 = &bundle.table4;

    match figure_id.trim() {
        "1" => {
            write(vec!["asset".into(), "lambda".into(), "pi_c".into(), "pi".into()])?;
            for (k, label) in labels.iter().enumerate() {
                write(vec![label.clone(), num(t4.lambda[k]), num(t4.pi_c[k]), num(t4.pi[k])])?;
            }
        }
        "2" => {
            write(with_assets(&["portfolio"], &["return", "risk"]))?;
            for (name, row) in [
                ("capm", &t4.capm),
                ("incomplete", &t4.incomplete),
                ("investor", &t4.investor),
            ] {
                write(portfolio_record(&[name], row))?;
            }
        }
        "3" => {
            write(
                [
                    "asset",
                    "lambda",
                    "grad_lambda",
                    "sign_lambda",
                    "weight",
                    "grad_weight",
                    "sign_weight",
                    "regime",
                ]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            )?;
            let s = &bundle.sensitivities;
            for (k, label) in labels.iter().enumerate() {
                write(vec![
                    label.clone(),
                    num(t4.lambda[k]),
                    num(s.grad_lambda[k]),
                    sign_label(s.grad_lambda[k]).into(),
                    num(t4.incomplete.weights[k]),
                    num(s.grad_weights[k]),
                    sign_label(s.grad_weights[k]).into(),
                    regime_label(s.regimes[k]).into(),
                ])?;
            }
        }
        "4" => {
            write(with_assets(&["tau", "gamma", "row"], &[]))?;
            for table in &bundle.tau_sweep {
                for row in &table.rows {
                    for (i, label) in labels.iter().enumerate() {
                        let mut rec = vec![num(table.tau), row.gamma.to_string(), label.clone()];
                        rec.extend(row.covariance.row(i).iter().map(|&x| num(x)));
                        write(rec)?;
                    }
                }
            }
        }
        "5" => {
            write(with_assets(&["tau", "gamma"], &["return", "risk"]))?;
            for table in &bundle.tau_sweep {
                for row in &table.rows {
                    write(portfolio_record(
                        &[&num(table.tau), &row.gamma.to_string()],
                        &row.portfolio,
                    ))?;
                }
            }
        }
        "6" => {
            write(with_assets(&["model", "row"], &[]))?;
            if let Some(t7) = &bundle.table7 {
                for row in &t7.rows {
                    for (i, label) in labels.iter().enumerate() {
                        let mut rec = vec![row.model.to_string(), label.clone()];
                        rec.extend(row.posterior.covariance.row(i).iter().map(|&x| num(x)));
                        write(rec)?;
                    }
                }
            }
        }
        "7" => {
            write(with_assets(&["confidence", "model"], &["return", "risk", "view_gap"]))?;
            for table in &bundle.confidence_sweep {
                let c = table.confidence.map(num).unwrap_or_default();
                for row in &table.rows {
                    let mut rec = portfolio_record(&[&c, &row.model.to_string()], &row.portfolio);
                    rec.push(num(row.view_gap));
                    write(rec)?;
                }
            }
        }
        other => return Err(Error::UnknownFigure(other.to_string())),
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn portfolio_record(prefix: &[&str], row: &PortfolioRow) -> Vec<String> {
    prefix
        .iter()
        .map(|s| s.to_string())
        .chain(row.weights.iter().map(|&x| num(x)))
        .chain([num(row.expected_return), num(row.risk)])
        .collect()
}
