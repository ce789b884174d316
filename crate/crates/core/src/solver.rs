//! The market-portfolio system `F(W) = 0`, its Newton iteration, the
//! self-consistent fixed point and the closed-form portfolios.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::MarketScenario;
use crate::error::{Error, Result};
use crate::linalg;
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMode {
    #[default]
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitialGuess {
    #[default]
    CapmWeights,
    Zeros,
    Custom(DVector<f64>),
}

/// How the weighted-average shadow-cost `λ_M` enters the self-consistent
/// fixed point `W = Σ⁻¹(π^c - λ) / (δ - λ_M/s)`.
///
/// `MarketVariance` uses `s = σ_M²`. `MarketVolatility` uses `s = σ_M`,
/// which is the convention under which the five-asset published tables
/// come out. Either way the reported `δ_λ` is `λ_M/σ_M²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PremiumScale {
    MarketVariance,
    #[default]
    MarketVolatility,
}

impl PremiumScale {
    pub fn divisor(self, sigma_m: f64) -> f64 {
        match self {
            PremiumScale::MarketVariance => sigma_m * sigma_m,
            PremiumScale::MarketVolatility => sigma_m,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub residual_tolerance: f64,
    pub step_tolerance: f64,
    pub jacobian_mode: JacobianMode,
    pub initial_guess: InitialGuess,
    pub premium_scale: PremiumScale,
    /// Weight on the new iterate in the fixed-point iteration, in `(0, 1]`.
    pub damping: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            residual_tolerance: 1e-12,
            step_tolerance: 1e-15,
            jacobian_mode: JacobianMode::Analytic,
            initial_guess: InitialGuess::CapmWeights,
            premium_scale: PremiumScale::default(),
            damping: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations", "must be at least 1"));
        }
        if !(self.residual_tolerance > 0.0) {
            return Err(Error::invalid("residual_tolerance", "must be positive"));
        }
        if !(self.step_tolerance > 0.0) {
            return Err(Error::invalid("step_tolerance", "must be positive"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::invalid("damping", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub weights: DVector<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
    pub converged: bool,
    /// `λ_M / σ_M²` at the returned weights.
    pub delta_lambda: f64,
    /// `Wᵀλ` at the returned weights.
    pub lambda_m: f64,
    /// `‖F‖∞` (or the fixed-point residual) before each step and at the end.
    pub history: Vec<f64>,
}

impl SolveOutcome {
    /// Turns a non-converged outcome into an error.
    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged {
                iterations: self.iterations,
                residual: self.residual_norm,
            })
        }
    }
}

fn check_lambda(scenario: &MarketScenario, lambda: &DVector<f64>) -> Result<()> {
    linalg::check_len("shadow_costs.lambda", lambda, scenario.n())
}

/// `(δΣ)⁻¹(π - λ)`, the constant term of `F`.
fn constant_term(scenario: &MarketScenario, lambda: &DVector<f64>, pi: &DVector<f64>) -> Result<DVector<f64>> {
    linalg::check_len("pi", pi, scenario.n())?;
    check_lambda(scenario, lambda)?;
    let delta = scenario.delta();
    if delta == 0.0 {
        return Err(Error::invalid("delta", "market price of risk is zero"));
    }
    Ok(linalg::solve_spd(scenario.sigma(), &(pi - lambda), "market.sigma")? / delta)
}

fn residual_with(scenario: &MarketScenario, lambda: &DVector<f64>, b: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
    let k = 1.0 / (scenario.delta() * scenario.market_variance());
    w - w * (w.dot(lambda) * k) - b
}

/// `F(W) = W - (Wᵀλ)·W/(δσ_M²) - (δΣ)⁻¹(π - λ)`.
pub fn residual_f(
    w: &DVector<f64>,
    scenario: &MarketScenario,
    lambda: &DVector<f64>,
    pi: &DVector<f64>,
) -> Result<DVector<f64>> {
    linalg::check_len("weights", w, scenario.n())?;
    let b = constant_term(scenario, lambda, pi)?;
    Ok(residual_with(scenario, lambda, &b, w))
}

/// `F` with the quadratic term written out as `D_λW² + D_W(M_λ - D_λ)W`,
/// where `M_λ = 1λᵀ`.
pub fn residual_f_expanded(
    w: &DVector<f64>,
    scenario: &MarketScenario,
    lambda: &DVector<f64>,
    pi: &DVector<f64>,
) -> Result<DVector<f64>> {
    linalg::check_len("weights", w, scenario.n())?;
    let b = constant_term(scenario, lambda, pi)?;
    let n = w.len();
    let d_lambda = DMatrix::from_diagonal(lambda);
    let d_w = DMatrix::from_diagonal(w);
    let m_lambda = DMatrix::from_fn(n, n, |_, j| lambda[j]);
    let w_sq = w.component_mul(w);
    let quad = &d_lambda * w_sq + d_w * ((m_lambda - &d_lambda) * w);
    let k = 1.0 / (scenario.delta() * scenario.market_variance());
    Ok(w - quad * k - b)
}

/// `J = (1 - Wᵀλ/(δσ_M²))·I - W·λᵀ/(δσ_M²)`.
pub fn jacobian_f(w: &DVector<f64>, scenario: &MarketScenario, lambda: &DVector<f64>) -> DMatrix<f64> {
    let n = w.len();
    let k = 1.0 / (scenario.delta() * scenario.market_variance());
    DMatrix::identity(n, n) * (1.0 - w.dot(lambda) * k) - w * lambda.transpose() * k
}

/// Central-difference Jacobian of `F` with step `1e-7·max(1, |W_i|)`.
pub fn jacobian_f_fd(
    w: &DVector<f64>,
    scenario: &MarketScenario,
    lambda: &DVector<f64>,
    pi: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let b = constant_term(scenario, lambda, pi)?;
    Ok(fd_jacobian(scenario, lambda, &b, w))
}

fn fd_jacobian(scenario: &MarketScenario, lambda: &DVector<f64>, b: &DVector<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let n = w.len();
    let mut jac = DMatrix::zeros(n, n);
    for i in 0..n {
        let h = 1e-7 * w[i].abs().max(1.0);
        let mut up = w.clone();
        let mut dn = w.clone();
        up[i] += h;
        dn[i] -= h;
        let col = (residual_with(scenario, lambda, b, &up) - residual_with(scenario, lambda, b, &dn)) / (2.0 * h);
        jac.set_column(i, &col);
    }
    jac
}

/// `(δΣ)⁻¹π^c`.
pub fn capm_weights(scenario: &MarketScenario) -> Result<DVector<f64>> {
    reference_model_portfolio(scenario.pi_c(), scenario.sigma(), scenario.delta())
}

fn initial_weights(scenario: &MarketScenario, guess: &InitialGuess) -> Result<DVector<f64>> {
    match guess {
        InitialGuess::CapmWeights => capm_weights(scenario),
        InitialGuess::Zeros => Ok(DVector::zeros(scenario.n())),
        InitialGuess::Custom(w) => {
            linalg::check_len("initial_guess", w, scenario.n())?;
            Ok(w.clone())
        }
    }
}

fn newton_step(jac: DMatrix<f64>, f: &DVector<f64>, iteration: usize) -> Result<DVector<f64>> {
    let n = f.len();
    if let Some(step) = jac.clone().lu().solve(f) {
        if step.iter().all(|x| x.is_finite()) {
            return Ok(step);
        }
    }
    let regularized = jac + DMatrix::identity(n, n) * 1e-10;
    regularized
        .lu()
        .solve(f)
        .filter(|s| s.iter().all(|x| x.is_finite()))
        .ok_or(Error::SingularJacobian { iteration })
}

/// Newton iteration on `F(W) = 0` for a given `π`.
///
/// Hitting `max_iterations` is not an error: the outcome comes back with
/// `converged = false`.
pub fn solve_given_pi(
    scenario: &MarketScenario,
    lambda: &DVector<f64>,
    pi: &DVector<f64>,
    config: &SolverConfig,
) -> Result<SolveOutcome> {
    config.validate()?;
    let b = constant_term(scenario, lambda, pi)?;
    let mut w = initial_weights(scenario, &config.initial_guess)?;
    let mut history = Vec::new();
    let mut iterations = 0;

    let mut f = residual_with(scenario, lambda, &b, &w);
    let mut norm = linalg::inf_norm(&f);
    history.push(norm);
    while norm > config.residual_tolerance && iterations < config.max_iterations {
        let jac = match config.jacobian_mode {
            JacobianMode::Analytic => jacobian_f(&w, scenario, lambda),
            JacobianMode::FiniteDifference => fd_jacobian(scenario, lambda, &b, &w),
        };
        let step = newton_step(jac, &f, iterations)?;
        w -= &step;
        iterations += 1;
        f = residual_with(scenario, lambda, &b, &w);
        norm = linalg::inf_norm(&f);
        history.push(norm);
        if !norm.is_finite() {
            break;
        }
        if linalg::inf_norm(&step) < config.step_tolerance {
            break;
        }
    }

    let lambda_m = w.dot(lambda);
    Ok(SolveOutcome {
        delta_lambda: lambda_m / scenario.market_variance(),
        lambda_m,
        converged: norm <= config.residual_tolerance,
        residual_norm: norm,
        iterations,
        history,
        weights: w,
    })
}

/// Residual of the self-consistent fixed point,
/// `W - Σ⁻¹(π^c - λ)/(δ - Wᵀλ/s)`.
pub fn fixed_point_residual(
    w: &DVector<f64>,
    u: &DVector<f64>,
    lambda: &DVector<f64>,
    delta: f64,
    divisor: f64,
) -> DVector<f64> {
    w - u / (delta - w.dot(lambda) / divisor)
}

fn self_consistent_parts(scenario: &MarketScenario, lambda: &DVector<f64>) -> Result<DVector<f64>> {
    check_lambda(scenario, lambda)?;
    if !(scenario.delta() > 0.0) {
        return Err(Error::invalid(
            "delta",
            "the self-consistent equilibrium needs a positive price of risk",
        ));
    }
    linalg::solve_spd(scenario.sigma(), &(scenario.pi_c() - lambda), "market.sigma")
}

/// Closed-form fixed point of `W = (δ - Wᵀλ/s)⁻¹·Σ⁻¹(π^c - λ)`.
///
/// With `u = Σ⁻¹(π^c - λ)` and `a = uᵀλ/s` the effective premium solves
/// `e² - δe + a = 0`; the smaller root is taken, computed as
/// `2a / (δ + sqrt(δ² - 4a))` to avoid cancellation.
pub fn solve_self_consistent(
    scenario: &MarketScenario,
    lambda: &DVector<f64>,
    config: &SolverConfig,
) -> Result<SolveOutcome> {
    let u = self_consistent_parts(scenario, lambda)?;
    let delta = scenario.delta();
    let divisor = config.premium_scale.divisor(scenario.sigma_m());
    let a = u.dot(lambda) / divisor;
    let disc = delta * delta - 4.0 * a;
    if disc < 0.0 {
        return Err(Error::NoRealEquilibrium { discriminant: disc });
    }
    let effective = 2.0 * a / (delta + disc.sqrt());
    let w = &u / (delta - effective);
    let residual = linalg::inf_norm(&fixed_point_residual(&w, &u, lambda, delta, divisor));
    let lambda_m = w.dot(lambda);
    Ok(SolveOutcome {
        delta_lambda: lambda_m / scenario.market_variance(),
        lambda_m,
        iterations: 0,
        residual_norm: residual,
        converged: true,
        history: vec![residual],
        weights: w,
    })
}

/// Damped iteration `W ← (1-θ)W + θ·u/(δ - Wᵀλ/s)` started from `δ_λ = 0`.
pub fn solve_self_consistent_iterative(
    scenario: &MarketScenario,
    lambda: &DVector<f64>,
    config: &SolverConfig,
) -> Result<SolveOutcome> {
    config.validate()?;
    let u = self_consistent_parts(scenario, lambda)?;
    let delta = scenario.delta();
    let divisor = config.premium_scale.divisor(scenario.sigma_m());
    let theta = config.damping;

    let mut w = &u / delta;
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut norm = linalg::inf_norm(&fixed_point_residual(&w, &u, lambda, delta, divisor));
    history.push(norm);
    while norm > config.residual_tolerance && iterations < config.max_iterations {
        let denom = delta - w.dot(lambda) / divisor;
        if !(denom > 0.0) {
            return Err(Error::NoRealEquilibrium { discriminant: denom });
        }
        let next = &w * (1.0 - theta) + &u * (theta / denom);
        let step = linalg::inf_norm(&(&next - &w));
        w = next;
        iterations += 1;
        norm = linalg::inf_norm(&fixed_point_residual(&w, &u, lambda, delta, divisor));
        history.push(norm);
        if step < config.step_tolerance {
            break;
        }
    }
    let lambda_m = w.dot(lambda);
    Ok(SolveOutcome {
        delta_lambda: lambda_m / scenario.market_variance(),
        lambda_m,
        converged: norm <= config.residual_tolerance,
        residual_norm: norm,
        iterations,
        history,
        weights: w,
    })
}

/// `w* = (δ + 2δ_λ)⁻¹Σ⁻¹(π^c + λ)`.
pub fn investor_optimal_portfolio(
    scenario: &MarketScenario,
    lambda: &DVector<f64>,
    delta_lambda: f64,
) -> Result<DVector<f64>> {
    check_lambda(scenario, lambda)?;
    let aversion = scenario.delta() + 2.0 * delta_lambda;
    if !(aversion > 0.0) {
        return Err(Error::invalid(
            "delta_lambda",
            format!("δ + 2δ_λ must be positive, got {aversion}"),
        ));
    }
    Ok(linalg::solve_spd(scenario.sigma(), &(scenario.pi_c() + lambda), "market.sigma")? / aversion)
}

/// `(δ·Σ_γ)⁻¹π`.
pub fn reference_model_portfolio(pi: &DVector<f64>, sigma_gamma: &DMatrix<f64>, delta: f64) -> Result<DVector<f64>> {
    if delta == 0.0 || !delta.is_finite() {
        return Err(Error::invalid(
            "delta",
            format!("must be finite and nonzero, got {delta}"),
        ));
    }
    Ok(linalg::solve_spd(sigma_gamma, pi, "reference covariance")? / delta)
}

/// One Newton problem for [`solve_many`].
#[derive(Debug, Clone)]
pub struct NewtonProblem {
    pub scenario: MarketScenario,
    pub lambda: DVector<f64>,
    pub pi: DVector<f64>,
}

/// Solves a batch of independent problems; results keep input order.
pub fn solve_many(exec: Execution, problems: &[NewtonProblem], config: &SolverConfig) -> Vec<Result<SolveOutcome>> {
    par::map(exec, problems, |p| {
        solve_given_pi(&p.scenario, &p.lambda, &p.pi, config)
    })
}
