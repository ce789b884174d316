//! The five-asset, four-view dataset used throughout the tests, docs and the
//! bundled scenario file.

use nalgebra::{DMatrix, DVector};

use crate::domain::{MarketScenario, ShadowCostSpec};
use crate::views::{ViewKind, ViewSet};

pub const SIGMA: [[f64; 5]; 5] = [
    [0.05, 0.02, 0.04, 0.03, 0.01],
    [0.02, 0.08, 0.02, 0.02, 0.03],
    [0.04, 0.02, 0.09, 0.01, 0.02],
    [0.03, 0.02, 0.01, 0.07, 0.01],
    [0.01, 0.03, 0.02, 0.01, 0.06],
];
pub const PI_C: [f64; 5] = [0.01, 0.03, 0.015, 0.04, 0.035];
pub const LAMBDA: [f64; 5] = [0.01, 0.025, 0.02, 0.015, 0.03];
pub const LAMBDA_VAR: [f64; 5] = [0.08, 0.012, 0.02, 0.05, 0.01];
pub const CROSS_COV: [[f64; 5]; 5] = [
    [0.01, 0.02, 0.04, 0.03, 0.05],
    [0.02, 0.02, 0.1, 0.024, 0.04],
    [0.04, 0.1, 0.05, 0.013, 0.06],
    [0.03, 0.024, 0.13, 0.06, 0.04],
    [0.05, 0.04, 0.06, 0.04, 0.09],
];
pub const PICK: [[f64; 5]; 4] = [
    [1.0, -1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0, 0.0],
    [-0.2, 0.1, -0.8, 0.0, 0.9],
    [0.0, 0.0, 0.0, 0.0, 1.0],
];
pub const Q: [f64; 4] = [0.05, 0.03, 0.08, 0.1];
pub const KINDS: [ViewKind; 4] = [
    ViewKind::Relative,
    ViewKind::Absolute,
    ViewKind::Relative,
    ViewKind::Absolute,
];
pub const RISK_FREE: f64 = 0.02;
pub const MARKET_RETURN: f64 = 0.04;
pub const MARKET_VOL: f64 = 0.05;
pub const TAU: f64 = 0.5;
pub const CONFIDENCE: f64 = 0.5;

fn square<const N: usize>(rows: &[[f64; N]]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), N, |i, j| rows[i][j])
}

/// Market, shadow-costs (τ = 0.5) and views (c = 0.5).
pub fn five_asset() -> (MarketScenario, ShadowCostSpec, ViewSet) {
    let labels = (1..=5).map(|k| format!("asset{k}")).collect();
    let sigma = square(&SIGMA);
    let market = MarketScenario::new(
        labels,
        sigma.clone(),
        DVector::from_row_slice(&PI_C),
        RISK_FREE,
        MARKET_RETURN,
        MARKET_VOL,
    )
    .expect("fixture market is valid");
    let shadow = ShadowCostSpec {
        lambda: DVector::from_row_slice(&LAMBDA),
        lambda_cov: DMatrix::from_diagonal(&DVector::from_row_slice(&LAMBDA_VAR)),
        cross_cov: square(&CROSS_COV),
        tau: TAU,
        random_mean: None,
    };
    let views = ViewSet::from_confidence(
        square(&PICK),
        DVector::from_row_slice(&Q),
        KINDS.to_vec(),
        CONFIDENCE,
        &sigma,
    )
    .expect("fixture views are valid");
    (market, shadow, views)
}
