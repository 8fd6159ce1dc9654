//! `adacee` command-line front end: ask/tell campaigns, benchmark studies,
//! grid oracles and report regeneration.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adacee::bench::report::{read_runs, summaries_csv, summaries_json, write_study, write_trace};
use adacee::bench::study::{summarize, trace_campaign};
use adacee::bench::{brute_force_min, BenchmarkFn, StrategySpec, StudyConfig};
use adacee::bench::oracle::DEFAULT_MAX_EVALS;
use adacee::design::{InitialDesignSpec, QualitativePlan};
use adacee::{AcquisitionConfig, CampaignConfig, CampaignState, DomainSpec, Error, MixedPoint, Phase, Sense, Strategy};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "adacee", version, about = "Sequential design for mixed qualitative and quantitative experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create a campaign file and list its initial design.
    Init {
        /// JSON domain file with continuous bounds and level labels.
        #[arg(long)]
        domain: PathBuf,
        #[arg(long)]
        n_init: usize,
        /// Sequential points after the initial design.
        #[arg(long, default_value_t = 10)]
        n_seq: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "adaptive-cee")]
        strategy: String,
        #[arg(long, default_value_t = 2.0)]
        rho: f64,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, value_enum, default_value_t = SenseArg::Min)]
        sense: SenseArg,
        #[arg(long, value_enum, default_value_t = PlanArg::Auto)]
        plan: PlanArg,
        /// Fresh candidates per level combination in each pool.
        #[arg(long)]
        candidates: Option<usize>,
    },
    /// Propose the next point and mark it pending in the campaign file.
    Suggest {
        #[arg(long)]
        campaign: PathBuf,
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Record the response to the pending point.
    Tell {
        #[arg(long)]
        campaign: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        y: f64,
    },
    /// Show observations, the best point and the campaign phase.
    Status {
        #[arg(long)]
        campaign: PathBuf,
    },
    /// Replicated comparison of strategies on a benchmark function.
    RunBench {
        #[arg(long)]
        function: String,
        /// Comma-separated strategy names, e.g. adaptive-cee,ei,mu,si,ra.
        #[arg(long, default_value = "adaptive-cee,ei,mu,si,ra")]
        strategies: String,
        /// Sweep the adaptive strategy over these rho values instead.
        #[arg(long, value_delimiter = ',', conflicts_with = "strategies")]
        rho_sweep: Option<Vec<f64>>,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        /// Initial plus sequential runs, e.g. "3+6"; defaults per function.
        #[arg(long)]
        budget: Option<String>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        candidates: Option<usize>,
    },
    /// Exhaustive grid minimum of a benchmark function.
    Oracle {
        #[arg(long)]
        function: String,
        /// Grid step on the unit scale of each continuous input.
        #[arg(long)]
        density: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_EVALS)]
        max_evals: u64,
    },
    /// Recompute summaries from the runs file of a study directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Csv)]
        format: ReportFormat,
    },
    /// Single adaptive run with per-iteration region snapshots on a grid.
    Trace {
        #[arg(long, default_value = "example1")]
        function: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        budget: Option<String>,
        /// Grid points per continuous axis.
        #[arg(long, default_value_t = 512)]
        grid: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SenseArg {
    Min,
    Max,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlanArg {
    Auto,
    Full,
    Fractional,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Csv,
    Json,
}

type CliResult = Result<String, Error>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(out) => {
            // A closed pipe (e.g. `| head`) is not an error worth reporting.
            if !out.is_empty() {
                let _ = writeln!(std::io::stdout().lock(), "{out}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let doc = json!({"error": {"category": e.category(), "message": e.to_string()}});
            eprintln!("{doc}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Init {
            domain,
            n_init,
            n_seq,
            seed,
            out,
            strategy,
            rho,
            alpha,
            sense,
            plan,
            candidates,
        } => {
            let domain: DomainSpec = serde_json::from_str(&read(&domain)?)?;
            let acquisition = AcquisitionConfig {
                strategy: strategy.parse()?,
                rho,
                alpha,
                sense: match sense {
                    SenseArg::Min => Sense::Min,
                    SenseArg::Max => Sense::Max,
                },
            };
            let mut config = CampaignConfig::new(domain, acquisition, n_init, n_seq, seed)?;
            config.init = match plan {
                PlanArg::Auto => config.init,
                PlanArg::Full => with_plan(n_init, QualitativePlan::FullFactorial, seed),
                PlanArg::Fractional => with_plan(n_init, QualitativePlan::Fractional3Level, seed),
                PlanArg::Random => with_plan(n_init, QualitativePlan::Random, seed),
            };
            if let Some(nc) = candidates {
                config.candidates_per_combination = nc;
            }
            config.validate()?;
            let state = CampaignState::new(config)?;
            let design: Vec<Value> = if state.config().acquisition.strategy == Strategy::Ra {
                state.one_shot_design()
            } else {
                adacee::design::initial_design(&state.config().init, &state.config().domain)?
            }
            .iter()
            .map(|u| point_json(&state.config().domain.point_from_unit(u), &state.config().domain))
            .collect();
            state.save(&out)?;
            pretty(&json!({
                "campaign": out.display().to_string(),
                "budget": state.config().budget(),
                "initial_design": design,
            }))
        }
        Command::Suggest {
            campaign,
            strategy,
            rho,
            alpha,
        } => {
            let mut state = CampaignState::load(&campaign)?;
            if strategy.is_some() || rho.is_some() || alpha.is_some() {
                let mut acq = state.config().acquisition;
                if let Some(s) = strategy {
                    acq.strategy = s.parse()?;
                }
                acq.rho = rho.unwrap_or(acq.rho);
                acq.alpha = alpha.unwrap_or(acq.alpha);
                state.set_acquisition(acq)?;
            }
            // A repeated suggest re-prints the outstanding point.
            let repeated = state.phase() == Phase::AwaitingResponse;
            let point = match state.pending_point() {
                Some(p) if repeated => p.clone(),
                _ => state.ask()?,
            };
            state.save(&campaign)?;
            pretty(&json!({
                "observations": state.points().len(),
                "budget": state.config().budget(),
                "pending_already": repeated,
                "point": point_json(&point, &state.config().domain),
            }))
        }
        Command::Tell { campaign, y } => {
            let mut state = CampaignState::load(&campaign)?;
            state.tell(y)?;
            state.save(&campaign)?;
            pretty(&status_json(&state))
        }
        Command::Status { campaign } => pretty(&status_json(&CampaignState::load(&campaign)?)),
        Command::RunBench {
            function,
            strategies,
            rho_sweep,
            reps,
            budget,
            seed,
            out,
            candidates,
        } => {
            let mut config = match rho_sweep {
                Some(rhos) => StudyConfig::rho_sweep(&function, &rhos, reps, seed)?,
                None => {
                    let mut c = StudyConfig::new(&function, &[], reps, seed)?;
                    c.strategies = parse_strategies(&strategies)?;
                    c
                }
            };
            if let Some(b) = budget {
                (config.n_init, config.n_sequential) = parse_budget(&b)?;
            }
            if let Some(nc) = candidates {
                config.candidates_per_combination = nc;
            }
            let result = adacee::bench::replicate_study(&config)?;
            write_study(&result, &out)?;
            Ok(summaries_csv(&result.summaries)?.trim_end().to_string())
        }
        Command::Oracle {
            function,
            density,
            max_evals,
        } => {
            let f = BenchmarkFn::by_name(&function)?;
            let r = brute_force_min(&f, density, max_evals)?;
            pretty(&json!({
                "function": r.function,
                "value": r.value,
                "grid_value": r.grid_value,
                "argmin": point_json(&r.argmin, &f.domain),
                "grid_points_per_axis": r.grid_points_per_axis,
                "evaluations": r.evaluations,
                "claimed_min": f.claimed_min,
            }))
        }
        Command::Report { input, format } => {
            let runs = read_runs(&input)?;
            if runs.is_empty() {
                return Err(Error::InvalidArgument("runs file has no rows".into()));
            }
            let summaries = summarize(&runs);
            Ok(match format {
                ReportFormat::Csv => summaries_csv(&summaries)?.trim_end().to_string(),
                ReportFormat::Json => summaries_json(&summaries)?,
            })
        }
        Command::Trace {
            function,
            seed,
            budget,
            grid,
            out,
        } => {
            let f = BenchmarkFn::by_name(&function)?;
            let (n_init, n_seq) = match budget {
                Some(b) => parse_budget(&b)?,
                None => f.default_budget,
            };
            if grid < 2 {
                return Err(Error::InvalidArgument("grid needs at least 2 points per axis".into()));
            }
            let config = CampaignConfig::new(f.domain.clone(), AcquisitionConfig::default(), n_init, n_seq, seed)?;
            let trace = trace_campaign(&f, config, grid)?;
            write_trace(&trace, &out)?;
            let fractions: Vec<f64> = trace.regions.iter().map(|r| r.fraction()).collect();
            pretty(&json!({
                "best_value": trace.state.best_value(),
                "region_fractions": fractions,
                "out": out.display().to_string(),
            }))
        }
    }
}

fn with_plan(n_runs: usize, plan: QualitativePlan, seed: u64) -> InitialDesignSpec {
    InitialDesignSpec { n_runs, plan, seed }
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn pretty(v: &Value) -> CliResult {
    Ok(serde_json::to_string_pretty(v)?)
}

/// Named coordinates, in domain order.
fn point_json(w: &MixedPoint, domain: &DomainSpec) -> Value {
    let space = domain.qualitative();
    let continuous: Vec<Value> = domain
        .continuous_names()
        .iter()
        .zip(&w.x)
        .map(|(name, v)| json!({"name": name, "value": v}))
        .collect();
    let qualitative: Vec<Value> = domain
        .qualitative_names()
        .iter()
        .zip(&w.z)
        .enumerate()
        .map(|(j, (name, &l))| json!({"name": name, "level": space.label(j, l)}))
        .collect();
    json!({"continuous": continuous, "qualitative": qualitative})
}

fn status_json(state: &CampaignState) -> Value {
    let domain = &state.config().domain;
    json!({
        "observations": state.points().len(),
        "budget": state.config().budget(),
        "phase": state.phase(),
        "exhausted": state.is_exhausted(),
        "best_value": state.best_value(),
        "best_point": state.best_point().map(|w| point_json(w, domain)),
        "pending": state.pending_point().map(|w| point_json(w, domain)),
    })
}

fn parse_strategies(list: &str) -> Result<Vec<StrategySpec>, Error> {
    let specs = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.parse::<Strategy>().map(StrategySpec::new))
        .collect::<Result<Vec<_>, _>>()?;
    if specs.is_empty() {
        return Err(Error::InvalidArgument("no strategies given".into()));
    }
    Ok(specs)
}

/// Parses "I+S" into initial and sequential run counts.
fn parse_budget(text: &str) -> Result<(usize, usize), Error> {
    let bad = || Error::InvalidArgument(format!("budget must look like \"3+6\", got {text:?}"));
    let (i, s) = text.split_once('+').ok_or_else(bad)?;
    Ok((i.trim().parse().map_err(|_| bad())?, s.trim().parse().map_err(|_| bad())?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_parsing() {
        assert_eq!(parse_budget("3+6").unwrap(), (3, 6));
        assert_eq!(parse_budget(" 9 + 0 ").unwrap(), (9, 0));
        assert!(parse_budget("9").is_err());
        assert!(parse_budget("a+1").is_err());
    }

    #[test]
    fn strategy_lists() {
        let s = parse_strategies("adaptive-cee,ei,RA").unwrap();
        let labels: Vec<&str> = s.iter().map(|x| x.label.as_str()).collect();
        assert_eq!(labels, ["ADAPTIVE_CEE", "EI", "RA"]);
        assert!(parse_strategies("").is_err());
        assert!(parse_strategies("ucb").is_err());
    }
}
