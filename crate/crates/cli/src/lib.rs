//! Command-line front end: parses arguments, loads market and claim files,
//! runs one computation and prints its report as JSON or as a table.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use amerhedge::{
    build_counterexample_claim, check_counterexample_conditions, check_null_strategy_property, dual_price,
    duality_gap_report, node_measure_to_randomized, strictly_positive_cps, superhedge_price, superhedge_price_along,
    theta_price, tighten_costs, z_to_node_measure, Claim, ClaimFile, ConeError, ConversionError, DualResult, IoError,
    LoadOptions, LpOptions, Market, MarketFile, Mode, PriceReport, PricingError, Scalar, TreeError, TwoAssetMarket,
    DEFAULT_STOPPING_TIME_CAP,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "amerhedge", version, about = "Super-hedging prices of American claims under transaction costs")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Market file (JSON).
    #[arg(long, global = true)]
    pub market: Option<PathBuf>,
    /// Claim file (JSON).
    #[arg(long, global = true)]
    pub claim: Option<PathBuf>,
    /// Arithmetic; overrides the market file's own `mode`.
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeArg>,
    /// Pivot and feasibility tolerance in float mode.
    #[arg(long, global = true, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, global = true, value_enum, default_value_t = Output::Table)]
    pub output: Output,
    /// Largest number of stopping times to enumerate.
    #[arg(long, global = true, default_value_t = DEFAULT_STOPPING_TIME_CAP)]
    pub theta_cap: usize,
    /// Replace cost matrices by their cheapest indirect routes on load.
    #[arg(long, global = true)]
    pub tighten: bool,
    /// More log output on stderr; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Super-hedging price and an optimal strategy.
    Price {
        /// Price in units of this portfolio instead of asset 1, e.g. `1,1/2`.
        #[arg(long)]
        direction: Option<String>,
    },
    /// Dual price and an optimal consistent dual process.
    Dual,
    /// Price under martingale dual processes maximized over stopping times.
    Theta,
    /// Primal, dual and stopping-time prices with their gap.
    Gap,
    /// Strictly positive consistent dual process, or an arbitrage note.
    NaCheck,
    /// Node-measure and randomized stopping time of the optimal dual process.
    Convert,
    /// Builds the claim `(c_0(x)·e_1, x, …, x)` and reports its gap.
    Counterexample {
        /// Portfolio `x`, e.g. `0,1`.
        #[arg(long)]
        x: String,
    },
    /// Shows which costs are replaced by cheaper indirect routes.
    Tighten,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Rational,
    Float,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Output {
    Json,
    Table,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Pricing(#[from] PricingError),
    #[error(transparent)]
    Conversion(#[from] ConversionError),
    #[error(transparent)]
    Cone(#[from] ConeError),
}

fn cone_is_solver(e: &ConeError) -> bool {
    matches!(e, ConeError::Lp(_) | ConeError::UnboundedBelow | ConeError::NotDominated)
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io(IoError::Io { .. }) => "io",
            CliError::Io(IoError::Schema { .. }) => "schema",
            CliError::Io(_) => "validation",
            CliError::Pricing(e) => match e {
                PricingError::DimensionMismatch(_) => "dimension_mismatch",
                PricingError::InfeasibleClaim => "infeasible_claim",
                PricingError::Arbitrage => "arbitrage",
                PricingError::DualityMismatch { .. } => "duality_mismatch",
                PricingError::NotMarketCone => "not_market_cone",
                PricingError::Lp(_) => "lp",
                PricingError::Tree(TreeError::EnumerationCapExceeded { .. }) => "theta_cap",
                PricingError::Tree(_) => "tree",
                PricingError::Cone(c) if cone_is_solver(c) => "lp",
                PricingError::Cone(_) => "cone",
            },
            CliError::Conversion(e) => match e {
                ConversionError::NotTwoAsset
                | ConversionError::NotMarketCone
                | ConversionError::DimensionMismatch(_)
                | ConversionError::InvalidMarket(_) => "not_two_asset",
                _ => "conversion",
            },
            CliError::Cone(c) if cone_is_solver(c) => "lp",
            CliError::Cone(_) => "cone",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "infeasible_claim" | "arbitrage" | "duality_mismatch" | "lp" | "conversion" => EXIT_SOLVER,
            _ => EXIT_VALIDATION,
        }
    }

    fn to_json(&self) -> Value {
        json!({"error": {"kind": self.kind(), "message": self.to_string(), "exit_code": self.exit_code()}})
    }
}

/// Runs one invocation and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return EXIT_OK;
            }
            if wants_json(&args) {
                let cli_err = CliError::Usage(e.kind().to_string());
                let _ = writeln!(out, "{}", pretty(&cli_err.to_json()));
            }
            let _ = write!(err, "{e}");
            return EXIT_VALIDATION;
        }
    };
    init_logging(cli.global.verbose);
    match execute(&cli) {
        Ok(value) => {
            let text = match cli.global.output {
                Output::Json => pretty(&value),
                Output::Table => table(&value),
            };
            let _ = writeln!(out, "{text}");
            EXIT_OK
        }
        Err(e) => {
            if cli.global.output == Output::Json {
                let _ = writeln!(out, "{}", pretty(&e.to_json()));
            }
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn wants_json(args: &[OsString]) -> bool {
    args.windows(2).any(|w| w[0] == "--output" && w[1] == "json") || args.iter().any(|a| a == "--output=json")
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    // Tests call `run` repeatedly in one process; only the first init wins.
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("values serialize")
}

/// Flattens a JSON value into `path  value` rows.
pub fn table(v: &Value) -> String {
    let mut rows = Vec::new();
    flatten(v, String::new(), &mut rows);
    let width = rows.iter().map(|(k, _)| k.chars().count()).max().unwrap_or(0);
    rows.iter()
        .map(|(k, v)| format!("{k:width$}  {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn flatten(v: &Value, path: String, rows: &mut Vec<(String, String)>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                flatten(child, p, rows);
            }
        }
        Value::Array(items) if items.iter().all(|i| !i.is_object() && !i.is_array()) => {
            let cells: Vec<String> = items.iter().map(cell).collect();
            rows.push((path, format!("[{}]", cells.join(", "))));
        }
        Value::Array(items) => {
            for (i, child) in items.iter().enumerate() {
                flatten(child, format!("{path}[{i}]"), rows);
            }
        }
        other => rows.push((path, cell(other))),
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn lp_options(global: &GlobalArgs) -> LpOptions {
    LpOptions {
        tol: global.tol,
        feasibility_tol: global.tol,
        ..LpOptions::default()
    }
}

pub fn execute(cli: &Cli) -> Result<Value, CliError> {
    let g = &cli.global;
    if !(g.tol.is_finite() && g.tol >= 0.0) {
        return Err(CliError::Usage(format!("--tol must be a non-negative number, got {}", g.tol)));
    }
    let path = g.market.as_ref().ok_or_else(|| CliError::Usage("--market is required".into()))?;
    let file = MarketFile::read(path)?;
    let mode = match g.mode {
        Some(ModeArg::Rational) => Mode::Rational,
        Some(ModeArg::Float) => Mode::Float,
        None => file.mode()?.unwrap_or_default(),
    };
    match mode {
        Mode::Rational => execute_in::<amerhedge::Rational>(cli, &file, mode),
        Mode::Float => execute_in::<f64>(cli, &file, mode),
    }
}

fn parse_vector<S: Scalar>(text: &str, dim: usize, flag: &str) -> Result<Vec<S>, CliError> {
    let v = text
        .split(',')
        .map(|t| S::parse_scalar(t.trim()).map_err(|e| CliError::Usage(format!("{flag}: {e}"))))
        .collect::<Result<Vec<S>, _>>()?;
    if v.len() != dim {
        return Err(CliError::Usage(format!("{flag} needs {dim} entries, got {}", v.len())));
    }
    Ok(v)
}

fn load_claim<S: Scalar>(g: &GlobalArgs, market: &Market<S>) -> Result<Claim<S>, CliError> {
    let path = g.claim.as_ref().ok_or_else(|| CliError::Usage("--claim is required".into()))?;
    Ok(ClaimFile::read(path)?.build(&market.tree, market.cones.dim())?)
}

fn to_value(report: &PriceReport) -> Value {
    serde_json::to_value(report).expect("reports serialize")
}

fn node_id<S: Scalar>(market: &Market<S>, n: usize) -> String {
    market.tree.node(n).id.clone()
}

/// Adds node-measure and randomized stopping time to `report`, or a
/// diagnostic when the market is not a two-asset bid/ask market.
fn add_conversion<S: Scalar>(
    report: &mut PriceReport,
    market: &Market<S>,
    dual: &DualResult<S>,
    tol: f64,
) -> Result<(), ConversionError> {
    let two = TwoAssetMarket::from_cones(&market.cones)?;
    let nm = z_to_node_measure(&market.tree, &two, &dual.process, tol)?;
    let rs = node_measure_to_randomized(&market.tree, &two, &nm, tol)?;
    report.set_conversion(&market.tree, &nm, &rs);
    Ok(())
}

fn execute_in<S: Scalar>(cli: &Cli, file: &MarketFile, mode: Mode) -> Result<Value, CliError> {
    let g = &cli.global;
    let opts = lp_options(g);
    let tol = if mode == Mode::Float { g.tol } else { 0.0 };
    let load = LoadOptions {
        tighten: g.tighten && !matches!(cli.command, Command::Tighten),
        lp: opts.clone(),
    };
    let market: Market<S> = file.build(&load)?;
    let (tree, cones) = (&market.tree, &market.cones);
    let mut report = PriceReport::new(mode);
    match &cli.command {
        Command::Price { direction } => {
            let claim = load_claim(g, &market)?;
            let res = match direction {
                Some(text) => {
                    let dir = parse_vector::<S>(text, cones.dim(), "--direction")?;
                    superhedge_price_along(tree, cones, &claim, &dir, &opts)?
                }
                None => superhedge_price(tree, cones, &claim, &opts)?,
            };
            report.set_primal(&market, &res);
            Ok(to_value(&report))
        }
        Command::Dual => {
            let claim = load_claim(g, &market)?;
            report.set_dual(tree, &dual_price(tree, cones, &claim, &opts)?);
            Ok(to_value(&report))
        }
        Command::Theta => {
            let claim = load_claim(g, &market)?;
            report.set_theta(tree, &theta_price(tree, cones, &claim, g.theta_cap, &opts)?);
            Ok(to_value(&report))
        }
        Command::Gap => {
            let claim = load_claim(g, &market)?;
            gap_value(&market, &claim, g, &opts, tol, report)
        }
        Command::NaCheck => {
            report.set_na(tree, &strictly_positive_cps(tree, cones, &opts)?);
            let null = check_null_strategy_property(tree, cones, &opts)?;
            let mut v = to_value(&report);
            let mut entry = Map::new();
            entry.insert("holds".into(), Value::Bool(null.holds));
            if let Some(violation) = &null.violation {
                entry.insert("node".into(), Value::String(node_id(&market, violation.node)));
            }
            v["null_strategy"] = Value::Object(entry);
            Ok(v)
        }
        Command::Convert => {
            let claim = load_claim(g, &market)?;
            let dual = dual_price(tree, cones, &claim, &opts)?;
            report.set_dual(tree, &dual);
            add_conversion(&mut report, &market, &dual, tol)?;
            Ok(to_value(&report))
        }
        Command::Counterexample { x } => {
            let x = parse_vector::<S>(x, cones.dim(), "--x")?;
            let claim = build_counterexample_claim(tree, cones, &x, &opts)?;
            let cond = check_counterexample_conditions(tree, cones, &x, &opts)?;
            let mut v = gap_value(&market, &claim, g, &opts, tol, report)?;
            v["counterexample"] = json!({
                "x": x.iter().map(Scalar::to_text).collect::<Vec<_>>(),
                "c0": cond.c0.to_text(),
                "cond_ii": cond.cond_ii,
                "cond_i_sufficient": cond.cond_i_sufficient,
            });
            Ok(v)
        }
        Command::Tighten => tighten_value(&market, mode),
    }
}

fn gap_value<S: Scalar>(
    market: &Market<S>,
    claim: &Claim<S>,
    g: &GlobalArgs,
    opts: &LpOptions,
    tol: f64,
    mut report: PriceReport,
) -> Result<Value, CliError> {
    let (tree, cones) = (&market.tree, &market.cones);
    let gap = duality_gap_report(tree, cones, claim, g.theta_cap, opts)?;
    report.set_gap(market, &gap);
    match strictly_positive_cps(tree, cones, opts) {
        Ok(cert) => {
            // The gap report already carries the optimal dual process.
            let dual_process = report.dual_process.take();
            report.set_na(tree, &cert);
            report.dual_process = dual_process;
        }
        Err(e) => report.diagnostics.push(format!("no-arbitrage check failed: {e}")),
    }
    if let Err(e) = add_conversion(&mut report, market, &gap.dual, tol) {
        report.diagnostics.push(format!("conversion skipped: {e}"));
    }
    Ok(to_value(&report))
}

fn tighten_value<S: Scalar>(market: &Market<S>, mode: Mode) -> Result<Value, CliError> {
    let mut nodes = Vec::new();
    for n in market.tree.indices() {
        let spec = market
            .cones
            .cone(n)
            .market()
            .ok_or(CliError::Pricing(PricingError::NotMarketCone))?;
        let tight = tighten_costs(&spec.costs, &spec.prices)?;
        if tight == spec.costs {
            continue;
        }
        let texts = |m: &[Vec<S>]| -> Vec<Vec<String>> {
            m.iter().map(|r| r.iter().map(Scalar::to_text).collect()).collect()
        };
        nodes.push(json!({
            "id": node_id(market, n),
            "before": texts(&spec.costs),
            "after": texts(&tight),
        }));
    }
    Ok(json!({"mode": mode.to_string(), "changed": nodes.len(), "nodes": nodes}))
}
