use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use fountain_lab::analytics::Analytics;
use fountain_lab::scheme::DEFAULT_DELTA_P;
use fountain_lab::sim::{aggregate_csv, compare_curves, monte_carlo, summary, sweep_epsilon, SessionConfig};
use fountain_lab::wire::{transfer_file, TransferConfig};
use fountain_lab::{Error, FeedbackPolicy, SchemeConfig};
use serde_json::json;
use thiserror::Error;

use crate::args::{Format, PolicyArg, PredictArgs, SchemeArg, SimulateArgs, SweepArgs, TransferArgs};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    BudgetExhausted(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::BudgetExhausted(_) => 3,
            CliError::Io { .. } => 4,
            CliError::Core(Error::InvalidParameter(_)) => 2,
            CliError::Core(Error::TransferFailed { .. }) => 3,
            CliError::Core(_) => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(CliError::Usage(msg.into()))
}

fn scheme_config(scheme: SchemeArg, gamma0: Option<f64>, beta0: Option<f64>) -> Result<SchemeConfig> {
    let config = match (scheme, gamma0, beta0) {
        (SchemeArg::Ofc, None, beta0) => SchemeConfig::Ofc { beta0: beta0.unwrap_or(0.5) },
        (SchemeArg::Ofcnb, Some(gamma0), None) => SchemeConfig::Ofcnb { gamma0 },
        (SchemeArg::Ofcnb, None, _) => return usage("--scheme ofcnb requires --gamma0"),
        (SchemeArg::Sofc, None, None) => SchemeConfig::Sofc,
        (_, Some(_), _) => return usage("--gamma0 only applies to --scheme ofcnb"),
        (_, _, Some(_)) => return usage("--beta0 only applies to --scheme ofc"),
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(w) = config.warning() {
        eprintln!("warning: {w}");
    }
    Ok(config)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|source| CliError::Io { path: path.display().to_string(), source }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pretty(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json value serializes");
    s.push('\n');
    s
}

pub fn predict(args: &PredictArgs, format: Format) -> Result<()> {
    let a = &args.scheme;
    let scheme = scheme_config(a.scheme, a.gamma0, a.beta0)?;
    let points = Analytics::new(a.k)?.curve_points(&scheme, a.eps)?;
    let text = match format {
        Format::Csv => {
            let mut s = String::from("s,expected_n\n");
            for p in &points {
                let _ = writeln!(s, "{},{:.4}", p.s, p.expected_n);
            }
            s
        }
        Format::Json => pretty(&json!({
            "scheme": scheme.name(),
            "k": a.k,
            "eps": a.eps,
            "gamma0": scheme.gamma0(),
            "points": points,
        })),
    };
    emit(args.out.as_deref(), &text)
}

fn session_config(args: &SimulateArgs) -> Result<SessionConfig> {
    let a = &args.scheme;
    let scheme = scheme_config(a.scheme, a.gamma0, a.beta0)?;
    let policy = match (args.policy, args.delta_p) {
        (PolicyArg::Every, None) => FeedbackPolicy::EveryDegreeChange,
        (PolicyArg::Every, Some(_)) => return usage("--delta-p requires --policy threshold"),
        (PolicyArg::Threshold, d) => FeedbackPolicy::Threshold { delta_p: d.unwrap_or(DEFAULT_DELTA_P) },
    };
    if args.trials == 0 {
        return usage("--trials must be at least 1");
    }
    let mut cfg = SessionConfig::new(scheme, a.k, a.eps)
        .with_policy(policy)
        .with_seed(args.seed)
        .with_symbol_size(args.symbol_size);
    cfg.budget = args.budget;
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn check_budget(exceeded: usize, trials: usize) -> Result<()> {
    if exceeded * 2 > trials {
        return Err(CliError::BudgetExhausted(format!(
            "{exceeded} of {trials} trials exhausted the transmission budget"
        )));
    }
    if exceeded > 0 {
        eprintln!("warning: {exceeded} of {trials} trials exhausted the transmission budget");
    }
    Ok(())
}

pub fn simulate(args: &SimulateArgs, format: Format, jobs: usize) -> Result<()> {
    let cfg = session_config(args)?;
    let agg = monte_carlo(&cfg, args.trials, jobs)?;
    let text = match format {
        Format::Csv => aggregate_csv(&agg),
        Format::Json => pretty(&json!({ "summary": summary(&agg), "ber": agg.ber })),
    };
    emit(args.out.as_deref(), &text)?;
    check_budget(agg.budget_exceeded_count, agg.trials)
}

pub fn compare(args: &SimulateArgs, format: Format, jobs: usize) -> Result<()> {
    let cfg = session_config(args)?;
    let agg = monte_carlo(&cfg, args.trials, jobs)?;
    let analytics = Analytics::new(cfg.k)?;
    let report = compare_curves(&agg, &analytics)?;
    let text = match format {
        Format::Csv => {
            let mut s = format!(
                "# max_relative_error={:.6} mean_relative_error={:.6} worst_s={}\ns,analytic,empirical,relative_error\n",
                report.max_relative_error, report.mean_relative_error, report.worst_s
            );
            for r in &report.rows {
                let _ = writeln!(s, "{},{:.4},{:.4},{:.6}", r.s, r.analytic, r.empirical, r.relative_error);
            }
            s
        }
        Format::Json => pretty(&json!({
            "summary": summary(&agg),
            "max_relative_error": report.max_relative_error,
            "mean_relative_error": report.mean_relative_error,
            "worst_s": report.worst_s,
            "rows": report.rows,
        })),
    };
    emit(args.out.as_deref(), &text)?;
    check_budget(agg.budget_exceeded_count, agg.trials)
}

pub fn sweep(args: &SweepArgs, format: Format, jobs: usize) -> Result<()> {
    if args.trials == 0 {
        return usage("--trials must be at least 1");
    }
    if args.eps_list.is_empty() {
        return usage("--eps-list must not be empty");
    }
    let mut grid = args.eps_list.clone();
    grid.sort_by(f64::total_cmp);
    let report = sweep_epsilon(args.k, &grid, args.trials, args.seed, jobs)?;
    let text = match format {
        Format::Csv => {
            let crossover = report.crossover.map(|x| format!("{x:.4}")).unwrap_or_else(|| "none".into());
            let mut s = format!("# crossover={crossover} epsilon0={:.4}\neps,sofc_sent_mean,ofc_sent_mean,difference\n", report.epsilon0);
            for r in &report.rows {
                let _ = writeln!(s, "{},{:.4},{:.4},{:.4}", r.epsilon, r.sofc_sent_mean, r.ofc_sent_mean, r.difference);
            }
            s
        }
        Format::Json => pretty(&serde_json::to_value(&report).expect("report serializes")),
    };
    emit(args.out.as_deref(), &text)
}

pub fn transfer(args: &TransferArgs, format: Format) -> Result<()> {
    let scheme = scheme_config(args.scheme, args.gamma0, args.beta0)?;
    let input = fs::read(&args.input).map_err(|source| CliError::Io { path: args.input.display().to_string(), source })?;
    let cfg = TransferConfig::new(scheme, args.eps, args.seed, args.symbol_size);
    let out = transfer_file(&input, &cfg)?;
    fs::write(&args.out, &out.data).map_err(|source| CliError::Io { path: args.out.display().to_string(), source })?;
    let r = &out.report;
    let text = match format {
        Format::Csv => format!(
            "scheme,k,symbol_size,original_len,data_frames_sent,data_frames_delivered,feedback_frames,overhead,bytes_on_wire\n{},{},{},{},{},{},{},{:.6},{}\n",
            r.scheme, r.k, r.symbol_size, r.original_len, r.data_frames_sent, r.data_frames_delivered, r.feedback_frames, r.overhead, r.bytes_on_wire
        ),
        Format::Json => pretty(&serde_json::to_value(r).expect("report serializes")),
    };
    emit(args.report.as_deref(), &text)
}
