use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use shadowcost::pipeline::{self, PipelineOptions, Precision, ReportBundle};
use shadowcost::reference;
use shadowcost::scenario::{self, ScenarioFile, ScenarioInputs};
use shadowcost::solver::SolverConfig;
use shadowcost::whatif::{self, AllocationSummary, WhatIf, WhatIfResult};
use shadowcost::{Execution, Gamma};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] shadowcost::Error),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use shadowcost::Error as E;
        match self {
            CliError::Io { .. } => 4,
            CliError::Usage(_) => 2,
            CliError::Json(_) | CliError::Csv(_) => 1,
            CliError::Core(e) => match e.root() {
                E::Io(_) => 4,
                E::NotConverged { .. } | E::NoRealEquilibrium { .. } | E::SingularJacobian { .. } => 3,
                E::Validation(_)
                | E::Parse { .. }
                | E::Dimension { .. }
                | E::InvalidParameter { .. }
                | E::Missing(_)
                | E::UnknownFigure(_)
                | E::Infeasible { .. }
                | E::NotPositiveDefinite { .. }
                | E::Indefinite { .. }
                | E::DegenerateMarket { .. } => 2,
                _ => 1,
            },
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Capital-market equilibria with shadow costs of information and
/// Bayesian views.
#[derive(Debug, Parser)]
#[command(name = "shadowcost", version)]
struct Cli {
    /// Print numbers with ten significant digits instead of four decimals.
    #[arg(long, global = true)]
    full_precision: bool,
    /// Run sweeps and sampling on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and validate a scenario file.
    Validate { file: PathBuf },
    /// Market equilibria; with --gamma also the reference-model portfolio.
    Equilibrium {
        file: PathBuf,
        #[arg(long, value_parser = parse_gamma)]
        gamma: Option<Gamma>,
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Posterior returns given the file's views.
    Posterior {
        file: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        /// Print the full result as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Allocation for one objective against the posterior.
    Allocate {
        file: PathBuf,
        /// unconstrained, risk_constrained, risk_budget or min_variance.
        #[arg(long)]
        objective: String,
        #[arg(long)]
        sigma_cap: Option<f64>,
        /// Known assets, as zero-based indices or labels: 0,2,4 or A,C,E.
        #[arg(long, value_delimiter = ',')]
        assets: Option<Vec<String>>,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        json: bool,
    },
    /// Render table 4, 5, 6 or 7.
    Report {
        file: PathBuf,
        #[arg(long)]
        table: u8,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        c: Option<f64>,
    },
    /// Write the CSV series behind figure 1 to 7.
    Figure {
        file: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw seeded samples from a posterior.
    Sample {
        file: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        draws: usize,
        /// Write every draw as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rewrite a scenario file in canonical form.
    Canonical { file: PathBuf },
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// View confidence in (0, 1).
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// Reference model; omit for the complete-information prior.
    #[arg(long, value_parser = parse_gamma)]
    gamma: Option<Gamma>,
}

impl ModelArgs {
    fn what_if(&self) -> WhatIf {
        WhatIf {
            tau: self.tau,
            gamma: self.gamma,
            c: self.c,
            ..Default::default()
        }
    }
}

fn parse_gamma(s: &str) -> std::result::Result<Gamma, String> {
    let v: u8 = s.parse().map_err(|_| format!("expected 0 or 1, got `{s}`"))?;
    Gamma::try_from(v).map_err(|e| e.to_string())
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn load(path: &Path) -> Result<(ScenarioFile, ScenarioInputs)> {
    let file = scenario::parse_scenario(&read(path)?)?;
    let inputs = file.inputs()?;
    Ok((file, inputs))
}

struct Ctx {
    precision: Precision,
    execution: Execution,
}

impl Ctx {
    fn options(&self) -> PipelineOptions {
        PipelineOptions {
            execution: self.execution,
            ..Default::default()
        }
    }

    fn bundle(
        &self,
        file: &ScenarioFile,
        tau: Option<f64>,
        c: Option<f64>,
        gammas: Vec<Gamma>,
    ) -> Result<ReportBundle> {
        let opts = PipelineOptions {
            tau,
            confidence: c,
            gammas,
            ..self.options()
        };
        Ok(pipeline::run_pipeline(file, &opts)?)
    }

    fn row(&self, out: &mut String, label: &str, values: &[f64]) {
        let cells: Vec<String> = values.iter().map(|&x| self.precision.fmt(x)).collect();
        let _ = writeln!(out, "{label:<24}{}", cells.join("  "));
    }

    fn allocation(&self, out: &mut String, label: &str, a: &AllocationSummary) {
        self.row(out, &format!("{label} weights"), &a.weights);
        let p = self.precision;
        let _ = writeln!(
            out,
            "{:<24}return {}  risk {}",
            label,
            p.fmt(a.expected_return),
            p.fmt(a.risk)
        );
        if let Some((a, b)) = a.two_fund {
            let _ = writeln!(out, "{:<24}a {}  b {}", "two-fund", p.fmt(a), p.fmt(b));
        }
    }

    fn what_if_text(&self, r: &WhatIfResult, with_allocation: bool) -> String {
        let mut out = String::new();
        let model = r.gamma.map_or("BL".to_string(), |g| format!("gamma={g}"));
        let _ = writeln!(out, "Posterior ({model}, tau = {})", r.tau);
        let _ = writeln!(out, "{:<24}{}", "", r.assets.join("  "));
        self.row(&mut out, "prior mean", &r.prior_mean);
        self.row(&mut out, "posterior mean", &r.posterior_mean);
        self.row(&mut out, "posterior variance", &r.posterior_variance);
        if let Some(v) = &r.views {
            let p = self.precision;
            let c = v
                .confidence
                .map_or("explicit omega".to_string(), |c| format!("c = {c}"));
            let _ = writeln!(out, "{:<24}{}  ({c})", "view gap", p.fmt(v.gap));
            let _ = writeln!(out, "{:<24}{}", "prior view gap", p.fmt(v.prior_gap));
        }
        if with_allocation {
            self.allocation(&mut out, "allocation", &r.allocation);
            match &r.baseline {
                Some(b) => self.allocation(&mut out, "no views", b),
                None => out.push_str("no views                infeasible\n"),
            }
        } else {
            self.allocation(&mut out, "unconstrained", &r.allocation);
        }
        out
    }
}

fn asset_indices(labels: &[String], assets: &[String]) -> Result<Vec<usize>> {
    assets
        .iter()
        .map(|a| {
            let a = a.trim();
            a.parse::<usize>()
                .ok()
                .or_else(|| labels.iter().position(|l| l == a))
                .ok_or_else(|| CliError::Usage(format!("unknown asset `{a}`")))
        })
        .collect()
}

fn run(cli: Cli) -> Result<String> {
    let ctx = Ctx {
        precision: if cli.full_precision {
            Precision::Full
        } else {
            Precision::Table
        },
        execution: if cli.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        },
    };
    let solver = SolverConfig::default();
    match cli.command {
        Command::Validate { file } => {
            let parsed = scenario::parse_scenario_unchecked(&read(&file)?)?;
            let inputs = parsed.inputs()?;
            let report = inputs.validate();
            if !report.is_valid() {
                return Err(shadowcost::Error::Validation(report).into());
            }
            let mut out = format!("{}: valid ({} assets", file.display(), inputs.market.n());
            if let Some(v) = &inputs.views {
                let _ = write!(out, ", {} views", v.count());
            }
            out.push_str(")\n");
            for w in report.warnings() {
                let _ = writeln!(out, "warning: {}: {}", w.field, w.message);
            }
            Ok(out)
        }
        Command::Equilibrium { file, gamma, tau } => {
            let (file, _) = load(&file)?;
            let bundle = ctx.bundle(&file, tau, None, gamma.into_iter().collect())?;
            let mut out = pipeline::render_table(&bundle, 4, ctx.precision)?;
            out.push('\n');
            out.push_str(&pipeline::render_table(&bundle, 5, ctx.precision)?);
            if gamma.is_some() {
                out.push('\n');
                out.push_str(&pipeline::render_table(&bundle, 6, ctx.precision)?);
            }
            Ok(out)
        }
        Command::Posterior { file, model, json } => {
            let (_, inputs) = load(&file)?;
            let r = whatif::evaluate(&inputs, &model.what_if(), &solver)?;
            if json {
                Ok(serde_json::to_string_pretty(&r)? + "\n")
            } else {
                Ok(ctx.what_if_text(&r, false))
            }
        }
        Command::Allocate {
            file,
            objective,
            sigma_cap,
            assets,
            model,
            json,
        } => {
            let (_, inputs) = load(&file)?;
            let info_set = match assets {
                Some(a) => Some(asset_indices(inputs.market.asset_labels(), &a)?),
                None => None,
            };
            let params = WhatIf {
                objective: Some(objective),
                sigma_cap,
                info_set,
                ..model.what_if()
            };
            let r = whatif::evaluate(&inputs, &params, &solver)?;
            if json {
                Ok(serde_json::to_string_pretty(&r)? + "\n")
            } else {
                Ok(ctx.what_if_text(&r, true))
            }
        }
        Command::Report { file, table, tau, c } => {
            let (file, _) = load(&file)?;
            let bundle = ctx.bundle(&file, tau, c, Vec::new())?;
            Ok(pipeline::render_table(&bundle, table, ctx.precision)?)
        }
        Command::Figure { file, id, out } => {
            let (file, _) = load(&file)?;
            let bundle = ctx.bundle(&file, None, None, Vec::new())?;
            let csv = pipeline::export_figure_data(&bundle, &id)?;
            write(&out, &csv)?;
            Ok(format!(
                "figure {id}: {} rows written to {}\n",
                csv.lines().count().saturating_sub(1),
                out.display()
            ))
        }
        Command::Sample {
            file,
            model,
            seed,
            draws,
            out,
        } => {
            let (_, inputs) = load(&file)?;
            let r = whatif::evaluate(&inputs, &model.what_if(), &solver)?;
            let posterior = whatif::posterior(&inputs, &model.what_if(), &solver)?;
            let samples =
                reference::sample_posterior(&posterior.mean, &posterior.covariance, draws, seed, ctx.execution)?;
            let (mean, cov) = reference::sample_moments(&samples);
            let mut text = String::new();
            let _ = writeln!(text, "{draws} draws, seed {seed}");
            let _ = writeln!(text, "{:<24}{}", "", r.assets.join("  "));
            ctx.row(&mut text, "target mean", &r.posterior_mean);
            ctx.row(&mut text, "sample mean", mean.as_slice());
            ctx.row(&mut text, "target variance", &r.posterior_variance);
            ctx.row(&mut text, "sample variance", cov.diagonal().as_slice());
            if let Some(path) = out {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&r.assets)?;
                for row in samples.row_iter() {
                    w.write_record(row.iter().map(|x| x.to_string()))?;
                }
                let bytes = w.into_inner().map_err(|e| CliError::Usage(e.to_string()))?;
                write(&path, &String::from_utf8_lossy(&bytes))?;
                let _ = writeln!(text, "draws written to {}", path.display());
            }
            Ok(text)
        }
        Command::Canonical { file } => {
            let parsed = scenario::parse_scenario(&read(&file)?)?;
            Ok(scenario::to_canonical(&parsed))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
