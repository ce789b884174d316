//! Reference distributions of excess returns given shadow-costs, Gaussian
//! log-density and an exact seeded sampler.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{MarketScenario, ShadowCostSpec};
use crate::equilibrium;
use crate::error::{Error, Result};
use crate::linalg;
use crate::par::{self, Execution};

/// Rows drawn per independent RNG stream.
pub const SAMPLE_CHUNK: usize = 4096;

/// Which covariance the reference model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Gamma {
    /// Covariance explained by the shadow-costs, `Σ_Rλ Λ⁻¹ Σ_λR`.
    Zero,
    /// Scaled market covariance `τΣ`.
    One,
}

impl Gamma {
    pub const ALL: [Gamma; 2] = [Gamma::Zero, Gamma::One];

    pub fn as_u8(self) -> u8 {
        match self {
            Gamma::Zero => 0,
            Gamma::One => 1,
        }
    }
}

impl TryFrom<u8> for Gamma {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Gamma::Zero),
            1 => Ok(Gamma::One),
            other => Err(Error::invalid("gamma", format!("must be 0 or 1, got {other}"))),
        }
    }
}

impl From<Gamma> for u8 {
    fn from(g: Gamma) -> u8 {
        g.as_u8()
    }
}

impl fmt::Display for Gamma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("tau", format!("must be positive, got {tau}")))
    }
}

/// `Σ_Rλ Λ⁻¹ Σ_λR`, symmetrized.
pub fn explained_covariance(cross_cov: &DMatrix<f64>, lambda_cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = cross_cov.nrows();
    linalg::check_shape(
        "shadow_costs.lambda_cov",
        lambda_cov,
        cross_cov.ncols(),
        cross_cov.ncols(),
    )?;
    let chol = linalg::cholesky(lambda_cov, "shadow_costs.lambda_cov")?;
    let solved = chol.solve(&cross_cov.transpose());
    let m = cross_cov * solved;
    debug_assert_eq!(m.nrows(), n);
    Ok(linalg::symmetrize(&m))
}

/// `γ·τΣ + (1-γ)·Σ_Rλ Λ⁻¹ Σ_λR`.
pub fn sigma_gamma(
    gamma: Gamma,
    tau: f64,
    sigma: &DMatrix<f64>,
    cross_cov: &DMatrix<f64>,
    lambda_cov: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_tau(tau)?;
    match gamma {
        Gamma::One => Ok(linalg::symmetrize(&(sigma * tau))),
        Gamma::Zero => {
            linalg::check_shape("shadow_costs.cross_cov", cross_cov, sigma.nrows(), sigma.ncols())?;
            explained_covariance(cross_cov, lambda_cov)
        }
    }
}

/// Splits `τΣ` into the part explained by the shadow-costs and the rest.
/// The remainder may be indefinite.
pub fn total_variance_decomposition(
    tau: f64,
    sigma: &DMatrix<f64>,
    cross_cov: &DMatrix<f64>,
    lambda_cov: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_tau(tau)?;
    let explained = explained_covariance(cross_cov, lambda_cov)?;
    let unexplained = sigma * tau - &explained;
    Ok((explained, unexplained))
}

/// A Gaussian law for excess returns.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceModel {
    pub gamma: Option<Gamma>,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl ReferenceModel {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Self {
        Self {
            gamma: None,
            mean,
            covariance,
        }
    }

    /// Complete-information prior `N(π^c, τΣ)`.
    pub fn capm(scenario: &MarketScenario, tau: f64) -> Self {
        Self {
            gamma: Some(Gamma::One),
            mean: scenario.pi_c().clone(),
            covariance: linalg::symmetrize(&(scenario.sigma() * tau)),
        }
    }

    /// `N(π, Σ_γ)` with `Σ_γ` from the shadow-cost specification at `tau`.
    pub fn from_shadow(
        gamma: Gamma,
        tau: f64,
        pi: DVector<f64>,
        scenario: &MarketScenario,
        shadow: &ShadowCostSpec,
    ) -> Result<Self> {
        linalg::check_len("pi", &pi, scenario.n())?;
        let covariance = sigma_gamma(gamma, tau, scenario.sigma(), &shadow.cross_cov, &shadow.lambda_cov)?;
        Ok(Self {
            gamma: Some(gamma),
            mean: pi,
            covariance,
        })
    }

    /// The prior fed to the view update: covariance scaled by `tau`, so the
    /// γ = 1 model enters as `τ²Σ` and the γ = 0 model as `τΣ_0`.
    pub fn view_prior(&self, tau: f64) -> Result<Self> {
        check_tau(tau)?;
        Ok(Self {
            covariance: &self.covariance * tau,
            ..self.clone()
        })
    }

    pub fn n(&self) -> usize {
        self.mean.len()
    }
}

/// Reference model under a random shadow-cost mean `N(λ₁, τ₁Λ)`:
/// mean `(δ - λ_M/σ_M²)Σw + λ₁` with `λ_M = wᵀλ₁`, covariance from
/// [`sigma_gamma`] with `Λ` replaced by `τ₁Λ`.
pub fn random_mean_adjusted_model(
    gamma: Gamma,
    scenario: &MarketScenario,
    shadow: &ShadowCostSpec,
    weights: &DVector<f64>,
) -> Result<ReferenceModel> {
    let rm = shadow
        .random_mean
        .as_ref()
        .ok_or(Error::Missing("shadow_costs.random_mean"))?;
    linalg::check_len("shadow_costs.random_mean.lambda_1", &rm.lambda_1, scenario.n())?;
    linalg::check_len("weights", weights, scenario.n())?;
    if !(rm.tau_1 > 0.0) {
        return Err(Error::invalid("tau_1", format!("must be positive, got {}", rm.tau_1)));
    }
    let mean = equilibrium::implied_excess_returns(scenario, &rm.lambda_1, weights);
    let covariance = sigma_gamma(
        gamma,
        shadow.tau,
        scenario.sigma(),
        &shadow.cross_cov,
        &(&shadow.lambda_cov * rm.tau_1),
    )?;
    Ok(ReferenceModel {
        gamma: Some(gamma),
        mean,
        covariance,
    })
}

/// Log of the multivariate normal density.
pub fn gaussian_log_density(x: &DVector<f64>, mean: &DVector<f64>, covariance: &DMatrix<f64>) -> Result<f64> {
    let n = mean.len();
    linalg::check_len("x", x, n)?;
    let chol = linalg::cholesky(covariance, "covariance")?;
    let diff = x - mean;
    let quad = diff.dot(&chol.solve(&diff));
    let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(-0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + quad))
}

/// Draws `count` rows from `N(mean, covariance)`.
///
/// Rows are generated in chunks of [`SAMPLE_CHUNK`], each on its own ChaCha8
/// stream of `seed`, so the output is the same for either execution mode.
/// Semidefinite covariances are handled by a pivoted factor.
pub fn sample_posterior(
    mean: &DVector<f64>,
    covariance: &DMatrix<f64>,
    count: usize,
    seed: u64,
    exec: Execution,
) -> Result<DMatrix<f64>> {
    let n = mean.len();
    if count == 0 {
        return Err(Error::invalid("count", "must be at least 1"));
    }
    linalg::check_shape("covariance", covariance, n, n)?;
    let factor = linalg::psd_factor(covariance, "covariance")?;
    let chunks = count.div_ceil(SAMPLE_CHUNK);

    let blocks = par::map_range(exec, chunks, |c| {
        let rows = SAMPLE_CHUNK.min(count - c * SAMPLE_CHUNK);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let z = DMatrix::<f64>::from_fn(n, rows, |_, _| StandardNormal.sample(&mut rng));
        let mut draws = &factor * z;
        for mut col in draws.column_iter_mut() {
            col += mean;
        }
        draws
    });

    let mut out = DMatrix::zeros(count, n);
    let mut row = 0;
    for block in blocks {
        let rows = block.ncols();
        out.view_mut((row, 0), (rows, n)).copy_from(&block.transpose());
        row += rows;
    }
    Ok(out)
}

/// Column means and unbiased sample covariance of a draw matrix.
pub fn sample_moments(draws: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let m = draws.nrows() as f64;
    let mean = draws.row_mean().transpose();
    let mut centered = draws.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (m - 1.0);
    (mean, cov)
}
