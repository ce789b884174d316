//! The scenario file: TOML with matrices written as lists of rows.
//!
//! ```toml
//! schema_version = 1
//!
//! [market]
//! assets = ["a", "b"]
//! sigma = [[0.04, 0.01], [0.01, 0.09]]
//! pi_c = [0.02, 0.03]
//! risk_free_rate = 0.02
//! expected_market_return = 0.04
//! sigma_m = 0.05
//!
//! [shadow_costs]
//! lambda = [0.01, 0.02]
//! lambda_cov = [[0.05, 0.0], [0.0, 0.02]]
//! cross_cov = [[0.01, 0.0], [0.0, 0.01]]
//! tau = 0.5
//! ```
//!
//! Optional tables: `[shadow_costs.random_mean]` (`lambda_1`, `tau_1`),
//! `[views]` (`pick`, `q`, `kinds`, and exactly one of `confidence` or
//! `omega`) and `[sweeps]` (`tau`, `confidence`, `gamma`).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::{self, MarketScenario, RandomMean, ShadowCostSpec, ValidationReport};
use crate::error::{Error, Result};
use crate::reference::Gamma;
use crate::views::{ViewKind, ViewSet};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub market: MarketSection,
    pub shadow_costs: ShadowSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub views: Option<ViewsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweeps: Option<SweepSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSection {
    pub assets: Vec<String>,
    pub sigma: Vec<Vec<f64>>,
    pub pi_c: Vec<f64>,
    pub risk_free_rate: f64,
    pub expected_market_return: f64,
    pub sigma_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShadowSection {
    pub lambda: Vec<f64>,
    pub lambda_cov: Vec<Vec<f64>>,
    pub cross_cov: Vec<Vec<f64>>,
    pub tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_mean: Option<RandomMeanSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomMeanSection {
    pub lambda_1: Vec<f64>,
    pub tau_1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewsSection {
    pub pick: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    pub kinds: Vec<ViewKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tau: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub confidence: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gamma: Vec<Gamma>,
}

/// Domain objects built from a [`ScenarioFile`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioInputs {
    pub market: MarketScenario,
    pub shadow: ShadowCostSpec,
    pub views: Option<ViewSet>,
    pub sweeps: SweepSection,
}

impl ScenarioInputs {
    pub fn validate(&self) -> ValidationReport {
        domain::validate_scenario(&self.market, &self.shadow, self.views.as_ref())
    }
}

/// Parses without validating; syntax, unknown keys and type errors carry
/// the dotted path of the offending key.
pub fn parse_scenario_unchecked(text: &str) -> Result<ScenarioFile> {
    if text.trim().is_empty() {
        return Err(Error::Parse {
            path: "<root>".into(),
            message: "empty scenario file".into(),
        });
    }
    let de = toml::de::Deserializer::parse(text).map_err(|e| Error::Parse {
        path: "<root>".into(),
        message: e.to_string().trim().to_string(),
    })?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Parse {
            path: if path == "." { "<root>".into() } else { path },
            message: e.into_inner().message().to_string(),
        }
    })
}

/// Parses, checks shapes and validates every invariant. Warnings do not fail.
pub fn parse_scenario(text: &str) -> Result<ScenarioFile> {
    let file = parse_scenario_unchecked(text)?;
    file.inputs()?.validate().into_result()?;
    Ok(file)
}

/// Canonical text form; `parse_scenario(&to_canonical(f))` returns `f`.
pub fn to_canonical(file: &ScenarioFile) -> String {
    toml::to_string(file).expect("scenario files always serialize")
}

fn matrix(field: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<f64>> {
    if rows.len() != nrows {
        return Err(Error::dimension(
            field,
            format!("{nrows} rows"),
            format!("{} rows", rows.len()),
        ));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(Error::dimension(
                format!("{field}[{i}]"),
                format!("{ncols} columns"),
                format!("{} columns", row.len()),
            ));
        }
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn vector(field: &str, v: &[f64], n: usize) -> Result<DVector<f64>> {
    if v.len() != n {
        return Err(Error::dimension(
            field,
            format!("length {n}"),
            format!("length {}", v.len()),
        ));
    }
    Ok(DVector::from_row_slice(v))
}

impl ScenarioFile {
    /// Builds domain objects, reporting the first shape problem by field.
    pub fn inputs(&self) -> Result<ScenarioInputs> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse {
                path: "schema_version".into(),
                message: format!(
                    "unsupported schema version {}, expected {SCHEMA_VERSION}",
                    self.schema_version
                ),
            });
        }
        let m = &self.market;
        let n = m.assets.len();
        if n == 0 {
            return Err(Error::dimension("market.assets", "at least 1 asset", "0 assets"));
        }
        let sigma = matrix("market.sigma", &m.sigma, n, n)?;
        let pi_c = vector("market.pi_c", &m.pi_c, n)?;
        let market = MarketScenario::new(
            m.assets.clone(),
            sigma,
            pi_c,
            m.risk_free_rate,
            m.expected_market_return,
            m.sigma_m,
        )?;

        let s = &self.shadow_costs;
        let shadow = ShadowCostSpec {
            lambda: vector("shadow_costs.lambda", &s.lambda, n)?,
            lambda_cov: matrix("shadow_costs.lambda_cov", &s.lambda_cov, n, n)?,
            cross_cov: matrix("shadow_costs.cross_cov", &s.cross_cov, n, n)?,
            tau: s.tau,
            random_mean: match &s.random_mean {
                Some(rm) => Some(RandomMean {
                    lambda_1: vector("shadow_costs.random_mean.lambda_1", &rm.lambda_1, n)?,
                    tau_1: rm.tau_1,
                }),
                None => None,
            },
        };

        let views = match &self.views {
            Some(v) => Some(v.to_view_set(&market)?),
            None => None,
        };
        Ok(ScenarioInputs {
            market,
            shadow,
            views,
            sweeps: self.sweeps.clone().unwrap_or_default(),
        })
    }
}

impl ViewsSection {
    pub fn to_view_set(&self, market: &MarketScenario) -> Result<ViewSet> {
        let v = self.q.len();
        let pick = matrix("views.pick", &self.pick, v, market.n())?;
        let q = DVector::from_row_slice(&self.q);
        if self.kinds.len() != v {
            return Err(Error::dimension(
                "views.kinds",
                format!("length {v}"),
                format!("length {}", self.kinds.len()),
            ));
        }
        match (self.confidence, &self.omega) {
            (Some(c), None) => ViewSet::from_confidence(pick, q, self.kinds.clone(), c, market.sigma()),
            (None, Some(rows)) => {
                let omega = matrix("views.omega", rows, v, v)?;
                ViewSet::with_omega(pick, q, self.kinds.clone(), omega)
            }
            (Some(_), Some(_)) => Err(Error::Parse {
                path: "views".into(),
                message: "give either `confidence` or `omega`, not both".into(),
            }),
            (None, None) => Err(Error::Parse {
                path: "views".into(),
                message: "one of `confidence` or `omega` is required".into(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
schema_version = 1

[market]
assets = ["a", "b"]
sigma = [[0.04, 0.01], [0.01, 0.09]]
pi_c = [0.02, 0.03]
risk_free_rate = 0.02
expected_market_return = 0.04
sigma_m = 0.05

[shadow_costs]
lambda = [0.01, 0.02]
lambda_cov = [[0.05, 0.0], [0.0, 0.02]]
cross_cov = [[0.01, 0.0], [0.0, 0.01]]
tau = 0.5
"#;

    #[test]
    fn small_file_parses() {
        let f = parse_scenario(SMALL).unwrap();
        let inputs = f.inputs().unwrap();
        assert_eq!(inputs.market.n(), 2);
        assert!((inputs.market.delta() - 8.0).abs() < 1e-12);
        assert!(inputs.views.is_none());
    }

    #[test]
    fn empty_file_is_a_root_syntax_error() {
        match parse_scenario("  \n") {
            Err(Error::Parse { path, .. }) => assert_eq!(path, "<root>"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_names_its_path() {
        let text = SMALL.replace("tau = 0.5", "tau = 0.5\ntua = 1.0");
        match parse_scenario(&text) {
            Err(Error::Parse { path, message }) => {
                assert!(path.starts_with("shadow_costs"), "{path}");
                assert!(message.contains("tua"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn short_sigma_names_the_field() {
        let text = SMALL.replace("sigma = [[0.04, 0.01], [0.01, 0.09]]", "sigma = [[0.04, 0.01]]");
        match parse_scenario(&text) {
            Err(Error::Dimension { field, .. }) => assert_eq!(field, "market.sigma"),
            other => panic!("{other:?}"),
        }
        let ragged = SMALL.replace("[0.01, 0.09]]", "[0.01]]");
        match parse_scenario(&ragged) {
            Err(Error::Dimension { field, .. }) => assert_eq!(field, "market.sigma[1]"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_values_fail_validation() {
        let text = SMALL.replace("lambda = [0.01, 0.02]", "lambda = [0.01, -0.02]");
        assert!(matches!(parse_scenario(&text), Err(Error::Validation(_))));
        assert!(parse_scenario_unchecked(&text).is_ok());
    }

    #[test]
    fn canonical_form_round_trips() {
        let f = parse_scenario(SMALL).unwrap();
        let text = to_canonical(&f);
        assert_eq!(parse_scenario(&text).unwrap(), f);
        assert_eq!(to_canonical(&parse_scenario(&text).unwrap()), text);
    }

    #[test]
    fn views_need_exactly_one_uncertainty_source() {
        let base = format!("{SMALL}\n[views]\npick = [[1.0, -1.0]]\nq = [0.01]\nkinds = [\"relative\"]\n");
        assert!(matches!(parse_scenario(&base), Err(Error::Parse { .. })));
        let ok = format!("{base}confidence = 0.5\n");
        assert!(parse_scenario(&ok).unwrap().inputs().unwrap().views.is_some());
        let both = format!("{ok}omega = [[0.1]]\n");
        assert!(matches!(parse_scenario(&both), Err(Error::Parse { .. })));
    }
}
