//! `lobforge`: order book dynamics from the command line.
//!
//! Verbs map one-to-one onto the library entry points: `clear` runs the
//! matching operator on a book plus an event batch, `simulate` runs seeded
//! Monte Carlo paths and estimators, `kbe` solves backward equations (single
//! origin, depth grids, or a self-convergence study), `calibrate` fits the
//! reference models from message data, `compare` produces the side-by-side
//! Monte Carlo/backward-equation table, `convergence` is the study as its
//! own verb and `validate-model` audits a model's rate tables.
//!
//! Every verb accepts `--config FILE` with the same JSON shape as the
//! manifest it writes next to its outputs; explicit flags override config
//! values, so a run is reproducible from its manifest alone.

use clap::{Args, Parser, Subcommand};
use lob_core::book::BookState;
use lob_core::centred::CentredState;
use lob_core::data;
use lob_core::event::parse_events_csv;
use lob_core::flow::{validate, Frame, IntensityModel};
use lob_core::kbe;
use lob_core::matching::clear_batch;
use lob_core::mc;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "lobforge", version, about = "Limit order book dynamics engine")]
struct Cli {
    /// Worker threads for Monte Carlo replications and backward-equation
    /// steps (default: machine parallelism, or LOBFORGE_THREADS). Results do
    /// not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clear a book against a batch of events.
    Clear(ClearArgs),
    /// Simulate seeded paths and estimate ask-move probabilities.
    Simulate(SimulateArgs),
    /// Solve the backward equation: single origin, depth grid, or
    /// convergence study.
    Kbe(KbeArgs),
    /// Calibrate a reference model from message data.
    Calibrate(CalibrateArgs),
    /// Monte Carlo and backward-equation estimates side by side on a depth
    /// grid.
    Compare(CompareArgs),
    /// Self-convergence study of the backward Euler step.
    Convergence(ConvergenceArgs),
    /// Audit a model's raw rates against the standing assumptions.
    ValidateModel(ValidateArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli
        .threads
        .or_else(|| std::env::var("LOBFORGE_THREADS").ok().and_then(|v| v.parse().ok()));
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("lobforge: could not configure {} threads: {}", n, e);
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Clear(a) => run_clear(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Kbe(a) => run_kbe(a),
        Command::Calibrate(a) => run_calibrate(a),
        Command::Compare(a) => run_compare(a),
        Command::Convergence(a) => run_convergence(a),
        Command::ValidateModel(a) => run_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lobforge: {}", e);
            ExitCode::from(1)
        }
    }
}

type AnyError = Box<dyn std::error::Error>;

// ---- config / manifest plumbing ----

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, AnyError> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {}", path.display(), e))?;
    Ok(serde_json::from_str(&text).map_err(|e| format!("{}: {}", path.display(), e))?)
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf, AnyError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| format!("{}: {}", path.display(), e))?;
    Ok(path)
}

#[derive(Serialize)]
struct Manifest<'a, P: Serialize> {
    verb: &'a str,
    version: &'a str,
    config: &'a P,
}

fn write_manifest<P: Serialize>(dir: &Path, verb: &str, params: &P) -> Result<(), AnyError> {
    let manifest = Manifest { verb, version: env!("CARGO_PKG_VERSION"), config: params };
    write_text(dir, "manifest.json", &serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

/// Resolve per-verb params: start from `--config` (reading either a bare
/// params object or a manifest with a `config` field), then let explicit
/// flags override.
fn load_config<P: DeserializeOwned + Default>(config: &Option<PathBuf>) -> Result<P, AnyError> {
    match config {
        None => Ok(P::default()),
        Some(path) => {
            let value: serde_json::Value = read_json(path)?;
            let inner = value.get("config").cloned().unwrap_or(value);
            Ok(serde_json::from_value(inner).map_err(|e| format!("{}: {}", path.display(), e))?)
        }
    }
}

fn load_book(path: &Path) -> Result<BookState, AnyError> {
    if path.extension().and_then(|e| e.to_str()) == Some("csv") {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {}", path.display(), e))?;
        Ok(BookState::from_csv(&text).map_err(|e| format!("{}: {}", path.display(), e))?)
    } else {
        read_json(path)
    }
}

fn load_model(path: &Path) -> Result<IntensityModel, AnyError> {
    read_json(path)
}

macro_rules! override_from_flags {
    ($params:expr, $args:expr, $($field:ident),+ $(,)?) => {
        $( if let Some(v) = $args.$field.clone() { $params.$field = v; } )+
    };
}

// ---- clear ----

#[derive(Args)]
struct ClearArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Book file (JSON or two-row CSV).
    #[arg(long)]
    book: Option<PathBuf>,
    /// Events CSV (`kind,price,size`); empty batch if omitted.
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
#[serde(default)]
struct ClearParams {
    book: PathBuf,
    events: Option<PathBuf>,
    out_dir: PathBuf,
}

impl Default for ClearParams {
    fn default() -> Self {
        Self { book: PathBuf::from("book.json"), events: None, out_dir: PathBuf::from(".") }
    }
}

fn run_clear(args: ClearArgs) -> Result<(), AnyError> {
    let mut p: ClearParams = load_config(&args.config)?;
    override_from_flags!(p, args, book, out_dir);
    if let Some(ev) = args.events {
        p.events = Some(ev);
    }
    let book = load_book(&p.book)?;
    let events = match &p.events {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {}", path.display(), e))?;
            parse_events_csv(&text)?
        }
        None => Vec::new(),
    };
    let result = clear_batch(&book, &events)?;
    write_text(&p.out_dir, "clearing.json", &serde_json::to_string_pretty(&result)?)?;
    write_manifest(&p.out_dir, "clear", &p)?;
    println!(
        "cleared book: ask {} bid {}, {} trades",
        result.cleared.ask(),
        result.cleared.bid(),
        result.trades.len()
    );
    Ok(())
}

// ---- simulate ----

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    book: Option<PathBuf>,
    /// Stop rule: `horizon:0.2`, `first-move`, or `events:100`.
    #[arg(long)]
    stop: Option<String>,
    #[arg(long)]
    reps: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// First-move reference price: `ask` or `mid`.
    #[arg(long)]
    move_ref: Option<String>,
    #[arg(long)]
    max_events: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
#[serde(default)]
struct SimulateParams {
    model: PathBuf,
    book: PathBuf,
    stop: String,
    reps: u32,
    seed: u64,
    move_ref: String,
    max_events: u64,
    out_dir: PathBuf,
}

impl Default for SimulateParams {
    fn default() -> Self {
        Self {
            model: PathBuf::from("model.json"),
            book: PathBuf::from("book.json"),
            stop: "horizon:0.2".into(),
            reps: 500,
            seed: 0,
            move_ref: "ask".into(),
            max_events: 1_000_000,
            out_dir: PathBuf::from("."),
        }
    }
}

fn parse_stop(s: &str) -> Result<mc::StopRule, AnyError> {
    if s == "first-move" {
        return Ok(mc::StopRule::FirstMove);
    }
    if let Some(t) = s.strip_prefix("horizon:") {
        return Ok(mc::StopRule::Horizon(t.parse()?));
    }
    if let Some(n) = s.strip_prefix("events:") {
        return Ok(mc::StopRule::MaxEvents(n.parse()?));
    }
    Err(format!("unknown stop rule {:?} (horizon:T, first-move, events:N)", s).into())
}

fn parse_move_ref(s: &str) -> Result<mc::MoveRef, AnyError> {
    match s {
        "ask" => Ok(mc::MoveRef::Ask),
        "mid" => Ok(mc::MoveRef::Mid),
        other => Err(format!("unknown move reference {:?} (ask or mid)", other).into()),
    }
}

fn run_simulate(args: SimulateArgs) -> Result<(), AnyError> {
    let mut p: SimulateParams = load_config(&args.config)?;
    override_from_flags!(p, args, model, book, stop, reps, seed, move_ref, max_events, out_dir);
    let model = load_model(&p.model)?;
    let book = load_book(&p.book)?;
    let stop = parse_stop(&p.stop)?;
    let move_ref = parse_move_ref(&p.move_ref)?;

    // one full path record from the first replication stream
    let mut rng = rand_chacha_seeded(p.seed, 0);
    let path = mc::simulate_path(&model, &book, stop, move_ref, &mut rng)?;
    write_text(&p.out_dir, "path.csv", &path.to_csv())?;

    let estimate = match stop {
        mc::StopRule::Horizon(t) => {
            Some(mc::estimate_horizon(&model, &book, t, p.reps, p.seed)?)
        }
        mc::StopRule::FirstMove => {
            Some(mc::estimate_first_move(&model, &book, p.reps, p.seed, move_ref, p.max_events)?)
        }
        mc::StopRule::MaxEvents(_) => None,
    };
    if let Some(report) = &estimate {
        write_text(&p.out_dir, "estimate.json", &serde_json::to_string_pretty(report)?)?;
        println!(
            "estimate: mean {} se {} over {} replications ({} timeouts)",
            report.estimate.mean, report.estimate.std_error, report.estimate.n, report.timeouts
        );
    }
    write_manifest(&p.out_dir, "simulate", &p)?;
    Ok(())
}

fn rand_chacha_seeded(seed: u64, stream: u64) -> rand_chacha::ChaCha8Rng {
    use rand_chacha::rand_core::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

// ---- kbe ----

#[derive(Args)]
struct KbeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Origin book; for `--grid`, its bid/ask depths are replaced by the
    /// grid coordinates.
    #[arg(long)]
    book: Option<PathBuf>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    pruning_eps: Option<f64>,
    #[arg(long)]
    max_states: Option<usize>,
    /// Depth grid `AxB`: ask depths 1..=A by bid depths 1..=B.
    #[arg(long)]
    grid: Option<String>,
    /// Run the self-convergence study instead of a single solve.
    #[arg(long)]
    convergence: bool,
    /// Comma-separated step sizes for the study.
    #[arg(long)]
    dts: Option<String>,
    #[arg(long)]
    dt_min: Option<f64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
#[serde(default)]
struct KbeParams {
    model: PathBuf,
    book: PathBuf,
    horizon: f64,
    dt: f64,
    pruning_eps: f64,
    max_states: usize,
    grid: Option<String>,
    convergence: bool,
    dts: String,
    dt_min: f64,
    out_dir: PathBuf,
}

impl Default for KbeParams {
    fn default() -> Self {
        Self {
            model: PathBuf::from("model.json"),
            book: PathBuf::from("book.json"),
            horizon: 0.2,
            dt: 5e-4,
            pruning_eps: 1e-8,
            max_states: 400_000,
            grid: None,
            convergence: false,
            dts: "2e-3,1e-3,5e-4,2.5e-4".into(),
            dt_min: 1.25e-4,
            out_dir: PathBuf::from("."),
        }
    }
}

fn parse_grid(s: &str) -> Result<(i64, i64), AnyError> {
    let (a, b) = s.split_once('x').ok_or_else(|| format!("grid must look like 6x6, got {:?}", s))?;
    Ok((a.parse()?, b.parse()?))
}

/// Replace the depths at the bid and ask levels of `base`.
fn with_depths(base: &BookState, bid_depth: i64, ask_depth: i64) -> Result<BookState, AnyError> {
    let (ask, bid) = base.ask_bid();
    if bid == 0 || ask > base.d() {
        return Err("grid mode needs a base book with both sides non-empty".into());
    }
    let mut buy = base.buy().to_vec();
    let mut sell = base.sell().to_vec();
    buy[bid as usize - 1] = bid_depth;
    sell[ask as usize - 1] = ask_depth;
    Ok(BookState::new(buy, sell)?)
}

fn parse_dts(s: &str) -> Result<Vec<f64>, AnyError> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("bad dt {:?}: {}", t, e).into()))
        .collect()
}

fn run_kbe(args: KbeArgs) -> Result<(), AnyError> {
    let mut p: KbeParams = load_config(&args.config)?;
    let convergence_flag = args.convergence;
    override_from_flags!(p, args, model, book, horizon, dt, pruning_eps, max_states, dt_min, out_dir);
    if let Some(g) = args.grid.clone() {
        p.grid = Some(g);
    }
    if let Some(d) = args.dts.clone() {
        p.dts = d;
    }
    if convergence_flag {
        p.convergence = true;
    }
    let model = load_model(&p.model)?;
    let book = load_book(&p.book)?;
    let make_problem = |origin: BookState| {
        let mut prob = kbe::KbeProblem::new(
            model.clone(),
            kbe::Terminal::AskAbove(origin.ask()),
            origin,
            p.horizon,
            p.dt,
        );
        prob.pruning_eps = p.pruning_eps;
        prob.max_states = p.max_states;
        prob
    };

    if p.convergence {
        let dts = parse_dts(&p.dts)?;
        let points = kbe::convergence_study(&make_problem(book), &dts, p.dt_min)?;
        let mut csv = String::from("dt,err\n");
        for (dt, err) in &points {
            csv.push_str(&format!("{},{}\n", dt, err));
        }
        write_text(&p.out_dir, "convergence.csv", &csv)?;
        println!("slope {}", kbe::log_log_slope(&points));
    } else if let Some(grid) = &p.grid {
        let (asks, bids) = parse_grid(grid)?;
        let mut csv = String::from("ask_depth,bid_depth,probability\n");
        for ask_depth in 1..=asks {
            for bid_depth in 1..=bids {
                let origin = with_depths(&book, bid_depth, ask_depth)?;
                let sol = kbe::ask_increase_probability(&make_problem(origin))?;
                csv.push_str(&format!("{},{},{}\n", ask_depth, bid_depth, sol.origin_value));
            }
        }
        write_text(&p.out_dir, "kbe_grid.csv", &csv)?;
    } else {
        let sol = kbe::ask_increase_probability(&make_problem(book))?;
        #[derive(Serialize)]
        struct Out {
            probability: f64,
            explored_states: usize,
            steps: u32,
            effective_horizon: f64,
            dropped_mass: f64,
            budget_hit: bool,
        }
        let out = Out {
            probability: sol.origin_value,
            explored_states: sol.report.explored_states,
            steps: sol.report.steps,
            effective_horizon: sol.report.effective_horizon,
            dropped_mass: sol.report.dropped_mass,
            budget_hit: sol.report.budget_hit,
        };
        write_text(&p.out_dir, "kbe.json", &serde_json::to_string_pretty(&out)?)?;
        println!("probability {}", sol.origin_value);
    }
    write_manifest(&p.out_dir, "kbe", &p)?;
    Ok(())
}

// ---- calibrate ----

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    messages: Option<PathBuf>,
    /// `model_a` or `model_b`.
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    d: Option<u32>,
    #[arg(long)]
    unit_size: Option<i64>,
    #[arg(long)]
    tick: Option<i64>,
    #[arg(long)]
    max_size: Option<i64>,
    #[arg(long)]
    cap: Option<i64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
#[serde(default)]
struct CalibrateParams {
    messages: PathBuf,
    scheme: String,
    d: u32,
    unit_size: i64,
    tick: i64,
    max_size: i64,
    cap: i64,
    out_dir: PathBuf,
}

impl Default for CalibrateParams {
    fn default() -> Self {
        Self {
            messages: PathBuf::from("messages.csv"),
            scheme: "model_b".into(),
            d: 6,
            unit_size: 100,
            tick: 100,
            max_size: 6,
            cap: 300,
            out_dir: PathBuf::from("."),
        }
    }
}

fn run_calibrate(args: CalibrateArgs) -> Result<(), AnyError> {
    let mut p: CalibrateParams = load_config(&args.config)?;
    override_from_flags!(p, args, messages, scheme, d, unit_size, tick, max_size, cap, out_dir);
    let scheme = match p.scheme.as_str() {
        "model_a" => data::CalibrationScheme::ModelA,
        "model_b" => data::CalibrationScheme::ModelB,
        other => return Err(format!("unknown scheme {:?} (model_a or model_b)", other).into()),
    };
    let records = data::parse_messages(&p.messages)?;
    let (report, model) = data::calibrate(&records, scheme, p.d, p.unit_size, p.tick, p.max_size, p.cap)?;
    write_text(&p.out_dir, "calibration.json", &serde_json::to_string_pretty(&report)?)?;
    write_text(&p.out_dir, "model.json", &serde_json::to_string_pretty(&model)?)?;
    write_manifest(&p.out_dir, "calibrate", &p)?;
    println!(
        "calibrated over {:.3} s: {} arrivals, {} cancellations, {} skipped",
        report.total_seconds,
        report.totals[0] + report.totals[1],
        report.totals[2] + report.totals[3],
        report.skipped_types
    );
    Ok(())
}

// ---- compare ----

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Base book whose bid/ask depths the grid sweeps; defaults to the
    /// built-in reference origin.
    #[arg(long)]
    book: Option<PathBuf>,
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, value_name = "T")]
    horizon: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    reps: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    pruning_eps: Option<f64>,
    #[arg(long)]
    max_states: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
#[serde(default)]
struct CompareParams {
    model: PathBuf,
    book: Option<PathBuf>,
    grid: String,
    horizon: f64,
    dt: f64,
    reps: u32,
    seed: u64,
    pruning_eps: f64,
    max_states: usize,
    out_dir: PathBuf,
}

impl Default for CompareParams {
    fn default() -> Self {
        Self {
            model: PathBuf::from("model.json"),
            book: None,
            grid: "6x6".into(),
            horizon: 0.2,
            dt: 5e-4,
            reps: 500,
            seed: 7,
            pruning_eps: 1e-8,
            max_states: 400_000,
            out_dir: PathBuf::from("."),
        }
    }
}

/// The reference experiment origin: two levels each side around a one-tick
/// spread, bid and ask depths to be swept.
fn reference_base_book() -> BookState {
    BookState::new(vec![2, 4, 1, 0, 0, 0], vec![0, 0, 0, 1, 4, 2]).unwrap()
}

fn run_compare(args: CompareArgs) -> Result<(), AnyError> {
    let mut p: CompareParams = load_config(&args.config)?;
    override_from_flags!(p, args, model, grid, horizon, dt, reps, seed, pruning_eps, max_states, out_dir);
    if let Some(b) = args.book {
        p.book = Some(b);
    }
    let model = load_model(&p.model)?;
    let base = match &p.book {
        Some(path) => load_book(path)?,
        None => reference_base_book(),
    };
    let (asks, bids) = parse_grid(&p.grid)?;
    let mut csv = String::from("ask_depth,bid_depth,mc_mean,mc_std_error,mc_n,mc_timeouts,kbe,kbe_states,kbe_dropped_mass\n");
    for ask_depth in 1..=asks {
        for bid_depth in 1..=bids {
            let origin = with_depths(&base, bid_depth, ask_depth)?;
            let report = mc::estimate_horizon(&model, &origin, p.horizon, p.reps, p.seed)?;
            let mut prob = kbe::KbeProblem::new(
                model.clone(),
                kbe::Terminal::AskAbove(origin.ask()),
                origin,
                p.horizon,
                p.dt,
            );
            prob.pruning_eps = p.pruning_eps;
            prob.max_states = p.max_states;
            let sol = kbe::ask_increase_probability(&prob)?;
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                ask_depth,
                bid_depth,
                report.estimate.mean,
                report.estimate.std_error,
                report.estimate.n,
                report.timeouts,
                sol.origin_value,
                sol.report.explored_states,
                sol.report.dropped_mass,
            ));
        }
    }
    write_text(&p.out_dir, "compare.csv", &csv)?;
    write_manifest(&p.out_dir, "compare", &p)?;
    Ok(())
}

// ---- convergence ----

#[derive(Args)]
struct ConvergenceArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    book: Option<PathBuf>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    dts: Option<String>,
    #[arg(long)]
    dt_min: Option<f64>,
    #[arg(long)]
    pruning_eps: Option<f64>,
    #[arg(long)]
    max_states: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn run_convergence(args: ConvergenceArgs) -> Result<(), AnyError> {
    run_kbe(KbeArgs {
        config: args.config,
        model: args.model,
        book: args.book,
        horizon: args.horizon,
        dt: None,
        pruning_eps: args.pruning_eps,
        max_states: args.max_states,
        grid: None,
        convergence: true,
        dts: args.dts,
        dt_min: args.dt_min,
        out_dir: args.out_dir,
    })
}

// ---- validate-model ----

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Random book states to audit against.
    #[arg(long)]
    samples: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
#[serde(default)]
struct ValidateParams {
    model: PathBuf,
    samples: u32,
    seed: u64,
    out_dir: PathBuf,
}

impl Default for ValidateParams {
    fn default() -> Self {
        Self { model: PathBuf::from("model.json"), samples: 200, seed: 0, out_dir: PathBuf::from(".") }
    }
}

fn run_validate(args: ValidateArgs) -> Result<(), AnyError> {
    let mut p: ValidateParams = load_config(&args.config)?;
    override_from_flags!(p, args, model, samples, seed, out_dir);
    let model = load_model(&p.model)?;
    let report = match model.frame() {
        Frame::Absolute => {
            let d = *model.price_range().end() as usize;
            let states = sample_books(d, p.samples, p.seed, model.max_size());
            validate(&model, &states, None)
        }
        Frame::Centred => {
            let dp = *model.price_range().end();
            let states = sample_centred(dp as u32, p.samples, p.seed, model.max_size());
            validate(&model, &states, None)
        }
    };
    write_text(&p.out_dir, "validation.json", &serde_json::to_string_pretty(&report)?)?;
    write_manifest(&p.out_dir, "validate-model", &p)?;
    println!(
        "checked {} rates on {} states: {} violations",
        report.rates_checked,
        report.states_checked,
        report.violations.len()
    );
    if report.is_clean() {
        Ok(())
    } else {
        Err("model violates the standing rate assumptions".into())
    }
}

fn sample_books(d: usize, samples: u32, seed: u64, max_size: i64) -> Vec<BookState> {
    use rand::Rng;
    let mut rng = rand_chacha_seeded(seed, 0);
    let mut out = Vec::new();
    for _ in 0..samples {
        // side totals above every audited size, so the oversized-order
        // clause audits the tables rather than the book
        let mut buy: Vec<i64> = (0..d).map(|_| rng.random_range(0..6)).collect();
        let mut sell: Vec<i64> = (0..d).map(|_| rng.random_range(0..6)).collect();
        buy[rng.random_range(0..d)] += max_size + 3;
        sell[rng.random_range(0..d)] += max_size + 3;
        out.push(BookState::new(buy, sell).expect("sampled depths are non-negative"));
    }
    out
}

fn sample_centred(d_prime: u32, samples: u32, seed: u64, max_size: i64) -> Vec<CentredState> {
    use lob_core::centred::CentredSides;
    use rand::Rng;
    let mut rng = rand_chacha_seeded(seed, 1);
    let mut out = Vec::new();
    while out.len() < samples as usize {
        let dp = d_prime as i32;
        let ask = rng.random_range(-dp + 1..=dp);
        let p: i64 = 2 * rng.random_range(100..200) + rng.random_range(0..2);
        let bid = -(ask as i64) - lob_core::centred::parity(p);
        if bid < -dp as i64 || bid >= ask as i64 {
            continue;
        }
        let mut sides = CentredSides::zero(d_prime);
        *sides.buy_mut(bid as i32) = rng.random_range(1..4) + max_size + 2;
        *sides.sell_mut(ask) = rng.random_range(1..4) + max_size + 2;
        for _ in 0..4 {
            let j = rng.random_range(-dp..=dp);
            if j < bid as i32 {
                *sides.buy_mut(j) += rng.random_range(0..3);
            }
            if j > ask {
                *sides.sell_mut(j) += rng.random_range(0..3);
            }
        }
        out.push(CentredState::new(sides, p).expect("sampled centred state is valid"));
    }
    out
}
