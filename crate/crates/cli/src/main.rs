use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use hybrid_reduce::balance::{reduce, GramianSource, ReductionOrders};
use hybrid_reduce::experiment::{self, at_rest, compare, QUADRATURE_BUDGET};
use hybrid_reduce::gramian::{check_gramians, solve_gramians, GramianKind, SolveOptions};
use hybrid_reduce::simulate::{output_l2, simulate, simulate_exact, write_trajectory_csv, SimConfig};
use hybrid_reduce::{example, io as hio, validate, Error, LinearHybridSystem};

#[derive(Parser)]
#[command(name = "hybrid-reduce", version, about = "Balanced truncation for linear hybrid systems")]
struct Cli {
    /// Seed for every randomized generator.
    #[arg(long, global = true, default_value_t = 20240601)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SimArgs {
    /// Input: `example`, `zero[:m]`, `const:v,...`, `damped:a,w,d,b,bd`, JSON or a JSON file.
    #[arg(long, default_value = "example")]
    input: String,
    /// Events: `example`, `T;e:dwell,...`, JSON or a JSON file.
    #[arg(long, default_value = "example")]
    schedule: String,
    /// Largest integration step.
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
}

impl SimArgs {
    fn config(&self) -> SimConfig {
        SimConfig {
            max_step: self.step,
            ..SimConfig::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check a model file for structural consistency.
    Validate { model: PathBuf },
    /// Search for a Gramian family and write it as JSON.
    Solve {
        model: PathBuf,
        /// observability, reachability or stability.
        #[arg(long, default_value = "observability")]
        kind: GramianKind,
        #[arg(long, default_value_t = 1e-4)]
        epsilon: f64,
        #[arg(long, default_value_t = 5000)]
        max_iters: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Report every LMI residual of a Gramian file.
    Check {
        model: PathBuf,
        gramians: PathBuf,
        /// Overrides the file's `epsilon`.
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Balance and truncate; writes the reduced model with provenance.
    Reduce {
        model: PathBuf,
        /// Kept orders: `2,1,2,1` in mode order, or `q1=2,q3=1`.
        #[arg(long)]
        orders: String,
        /// Observability Gramians file (solved when absent).
        #[arg(long, requires = "reach")]
        obs: Option<PathBuf>,
        /// Reachability Gramians file (solved when absent).
        #[arg(long, requires = "obs")]
        reach: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-4)]
        epsilon: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Simulate a model and write `time,mode,o,x..,y..` as CSV.
    Simulate {
        model: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
        /// Use exact matrix-exponential propagation (piecewise-constant inputs).
        #[arg(long)]
        exact: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Simulate a model and its reduction from rest and check the bound.
    Compare {
        model: PathBuf,
        reduced: PathBuf,
        #[command(flatten)]
        sim: SimArgs,
        /// Bound to check; read from the reduced file's provenance when absent.
        #[arg(long)]
        bound: Option<f64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the bundled four-mode example end to end.
    Example {
        /// Kept orders, comma separated; may be repeated.
        #[arg(long, value_delimiter = ';', default_values_t = ["2,2,2,2".to_string(), "2,1,2,1".to_string()])]
        orders: Vec<String>,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        /// Directory for model, Gramian, reduced-model and CSV files.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Reset scaling of the example.
        #[arg(long, default_value_t = example::DEFAULT_TAU)]
        tau: f64,
    },
    /// Write a random model, schedule and input drawn from `--seed`.
    Random {
        #[arg(long, default_value_t = 5.0)]
        horizon: f64,
        /// Directory receiving model.json, schedule.json and input.json.
        #[arg(long)]
        out_dir: PathBuf,
    },
}

/// Exit code 1: a check failed or the model is invalid. Exit code 2: unusable input.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.chain().find_map(|c| c.downcast_ref::<Error>()) {
            Some(
                Error::Io(_)
                | Error::Json(_)
                | Error::Format(_)
                | Error::UnknownId { .. }
                | Error::NotSquare { .. }
                | Error::DimensionMismatch(_)
                | Error::InvalidOrders(_)
                | Error::NotPiecewiseConstant,
            ) => 2,
            Some(_) => 1,
            None if error.chain().any(|c| c.is::<io::Error>() || c.is::<serde_json::Error>()) => 2,
            None => 1,
        };
        Failure { code, error }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn verdict(msg: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        error: anyhow::anyhow!(msg.into()),
    }
}

type CmdResult = Result<(), Failure>;

fn load_model(path: &Path) -> anyhow::Result<LinearHybridSystem> {
    hio::read_model(path).with_context(|| format!("reading model {}", path.display()))
}

fn sink(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn emit_json(path: Option<&Path>, value: &serde_json::Value) -> anyhow::Result<()> {
    match path {
        Some(p) => hio::write_json(p, value).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

fn parse_orders(model: &LinearHybridSystem, spec: &str) -> anyhow::Result<ReductionOrders> {
    let spec = spec.trim();
    if spec.contains('=') {
        let mut map = std::collections::BTreeMap::new();
        for item in spec.split(',') {
            let (q, r) = item
                .split_once('=')
                .with_context(|| format!("order `{item}` must read mode=r"))?;
            let r: usize = r.trim().parse().map_err(|_| Error::Format(format!("bad order `{r}`")))?;
            map.insert(q.trim().to_string(), r);
        }
        Ok(ReductionOrders::from_names(model, &map)?)
    } else {
        let r = spec
            .split(',')
            .map(|x| x.trim().parse::<usize>().map_err(|_| Error::Format(format!("bad order `{x}`"))))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ReductionOrders::new(model, r)?)
    }
}

fn cmd_validate(model: &Path) -> CmdResult {
    let m = load_model(model)?;
    let report = validate(&m);
    if report.is_ok() {
        println!(
            "OK: {} modes, {} events, {} outputs, {} inputs",
            m.num_modes(),
            m.num_events(),
            m.output_names.len(),
            m.input_dim()
        );
        Ok(())
    } else {
        print!("{report}");
        Err(verdict(format!("{} violation(s)", report.violations.len())))
    }
}

fn cmd_solve(model: &Path, kind: GramianKind, epsilon: f64, max_iters: usize, output: Option<&Path>) -> CmdResult {
    let m = load_model(model)?;
    let opts = SolveOptions {
        max_iters,
        ..SolveOptions::default()
    };
    let fam = solve_gramians(&m, kind, epsilon, &opts)?;
    emit_json(output, &hio::gramians_to_json(&m, &fam))?;
    eprint!("{}", check_gramians(&m, &fam)?.render(&m));
    Ok(())
}

fn cmd_check(model: &Path, gramians: &Path, epsilon: Option<f64>) -> CmdResult {
    let m = load_model(model)?;
    m.ensure_valid()?;
    let mut fam = hio::import_gramians(&m, gramians, None)
        .with_context(|| format!("reading Gramians {}", gramians.display()))?;
    if let Some(e) = epsilon {
        fam.epsilon = e;
    }
    let report = check_gramians(&m, &fam)?;
    print!("{}", report.render(&m));
    if report.is_ok() {
        Ok(())
    } else {
        Err(verdict(format!("{} Gramian check failed", fam.kind)))
    }
}

fn cmd_reduce(
    model: &Path,
    orders: &str,
    obs: Option<&Path>,
    reach: Option<&Path>,
    epsilon: f64,
    output: Option<&Path>,
) -> CmdResult {
    let m = load_model(model)?;
    m.ensure_valid()?;
    let orders = parse_orders(&m, orders)?;
    let source = match (obs, reach) {
        (Some(o), Some(r)) => GramianSource::Provided {
            observability: hio::import_gramians(&m, o, Some(GramianKind::Observability))
                .with_context(|| format!("reading {}", o.display()))?,
            reachability: hio::import_gramians(&m, r, Some(GramianKind::Reachability))
                .with_context(|| format!("reading {}", r.display()))?,
        },
        _ => GramianSource::Solve {
            epsilon,
            options: SolveOptions::default(),
        },
    };
    let red = reduce(&m, &orders, &source)?;
    emit_json(output, &hio::reduced_to_json(&red.reduced))?;
    for q in m.modes() {
        let s: Vec<String> = red.balanced.sigma(q).iter().map(|v| format!("{v:.6}")).collect();
        eprintln!("{:<8} r = {}  σ = [{}]", m.mode_name(q), orders.get(q), s.join(", "));
    }
    for w in &red.reduced.warnings {
        eprintln!("warning: {w}");
    }
    eprintln!("error bound {:.6}", red.reduced.bound);
    if red.reduced.is_verified() {
        Ok(())
    } else {
        Err(verdict("reduced Gramian check failed"))
    }
}

fn cmd_simulate(model: &Path, sim: &SimArgs, exact: bool, output: Option<&Path>) -> CmdResult {
    let m = load_model(model)?;
    let u = hio::parse_input_spec(&sim.input)?;
    let w = hio::parse_schedule_spec(&m, &sim.schedule)?;
    let traj = if exact {
        simulate_exact(&m, &u, &w, &sim.config())?
    } else {
        simulate(&m, &u, &w, &sim.config())?
    };
    let mut out = sink(output)?;
    write_trajectory_csv(&m, &traj, &mut out)?;
    out.flush().context("flushing CSV")?;
    eprintln!("{} samples, ‖y‖ = {:.6}", traj.num_samples(), output_l2(&traj).value());
    Ok(())
}

fn cmd_compare(model: &Path, reduced: &Path, sim: &SimArgs, bound: Option<f64>, output: Option<&Path>) -> CmdResult {
    let m = load_model(model)?;
    let text = fs::read_to_string(reduced).with_context(|| format!("reading {}", reduced.display()))?;
    let doc: serde_json::Value = serde_json::from_str(&text).context("parsing reduced model")?;
    let r = hio::model_from_json(&doc)?;
    let bound = match bound.or_else(|| doc["provenance"]["bound"].as_f64()) {
        Some(b) => b,
        None => return Err(Error::Format("no --bound given and no provenance bound in the reduced file".into()).into()),
    };
    let u = hio::parse_input_spec(&sim.input)?;
    let w = hio::parse_schedule_spec(&m, &sim.schedule)?;
    let c = compare(&at_rest(&m), &at_rest(&r), bound, &u, &w, &sim.config())?;
    let mut out = sink(output)?;
    hio::write_compare_csv(&m, &c.traj, &c.traj_hat, &mut out)?;
    out.flush().context("flushing CSV")?;
    eprintln!(
        "‖y−ŷ‖ = {:.6} (±{:.1e}), ‖u‖ = {:.6}, bound·‖u‖ = {:.6}, discrete outputs {}",
        c.error.value(),
        c.error.estimated_error(),
        c.input.value(),
        c.bound * c.input.value(),
        if c.outputs_match { "identical" } else { "DIFFER" }
    );
    if c.holds(QUADRATURE_BUDGET) {
        eprintln!("PASS bound holds");
        Ok(())
    } else {
        Err(verdict("output error exceeds bound"))
    }
}

fn cmd_example(orders: &[String], step: f64, out_dir: Option<&Path>, tau: f64) -> CmdResult {
    let cfg = SimConfig {
        max_step: step,
        ..SimConfig::default()
    };
    let model = example::model(tau);
    if tau != example::DEFAULT_TAU {
        // Only the Gramian search is meaningful away from the reference scaling.
        println!("τ = {tau}: searching for Gramians");
        let mut found = true;
        for kind in [GramianKind::Observability, GramianKind::Reachability] {
            match solve_gramians(&model, kind, 1e-4, &SolveOptions::default()) {
                Ok(_) => println!("{kind} Gramians found"),
                Err(e @ Error::Infeasible { .. }) => {
                    println!("{kind}: {e}");
                    found = false;
                }
                Err(e) => return Err(e.into()),
            }
        }
        return if found { Ok(()) } else { Err(verdict("no Gramians for this scaling")) };
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        hio::write_model(dir.join("model.json"), &model)?;
        hio::write_json(dir.join("observability.json"), &hio::gramians_to_json(&model, &example::reference_observability()))?;
        hio::write_json(dir.join("reachability.json"), &hio::gramians_to_json(&model, &example::reference_reachability()))?;
        hio::write_json(dir.join("schedule.json"), &hio::schedule_to_json(&model, &example::schedule()))?;
        hio::write_json(dir.join("input.json"), &hio::input_to_json(&example::input()))?;
    }
    let mut all = true;
    for spec in orders {
        let r = parse_orders(&model, spec)?;
        let rep = experiment::run_example(r.as_slice(), &cfg)?;
        print!("{rep}");
        all &= rep.passed();
        if let Some(dir) = out_dir {
            let tag = spec.replace(',', "");
            hio::write_json(dir.join(format!("reduced_{tag}.json")), &hio::reduced_to_json(&rep.reduced))?;
            let path = dir.join(format!("compare_{tag}.csv"));
            let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            hio::write_compare_csv(&model, &rep.comparison.traj, &rep.comparison.traj_hat, BufWriter::new(f))?;
        }
    }
    if all {
        Ok(())
    } else {
        Err(verdict("example checks failed"))
    }
}

fn cmd_random(seed: u64, horizon: f64, out_dir: &Path) -> CmdResult {
    if !(horizon > 0.0) {
        return Err(Error::Format("horizon must be positive".into()).into());
    }
    let (model, w, u) = experiment::random_case(seed, horizon);
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    hio::write_model(out_dir.join("model.json"), &model)?;
    hio::write_json(out_dir.join("schedule.json"), &hio::schedule_to_json(&model, &w))?;
    hio::write_json(out_dir.join("input.json"), &hio::input_to_json(&u))?;
    println!("{}", json!({ "seed": seed, "modes": model.num_modes(), "dir": out_dir }));
    Ok(())
}

fn run(cli: Cli) -> CmdResult {
    match &cli.command {
        Command::Validate { model } => cmd_validate(model),
        Command::Solve {
            model,
            kind,
            epsilon,
            max_iters,
            output,
        } => cmd_solve(model, *kind, *epsilon, *max_iters, output.as_deref()),
        Command::Check {
            model,
            gramians,
            epsilon,
        } => cmd_check(model, gramians, *epsilon),
        Command::Reduce {
            model,
            orders,
            obs,
            reach,
            epsilon,
            output,
        } => cmd_reduce(model, orders, obs.as_deref(), reach.as_deref(), *epsilon, output.as_deref()),
        Command::Simulate {
            model,
            sim,
            exact,
            output,
        } => cmd_simulate(model, sim, *exact, output.as_deref()),
        Command::Compare {
            model,
            reduced,
            sim,
            bound,
            output,
        } => cmd_compare(model, reduced, sim, *bound, output.as_deref()),
        Command::Example {
            orders,
            step,
            out_dir,
            tau,
        } => cmd_example(orders, *step, out_dir.as_deref(), *tau),
        Command::Random { horizon, out_dir } => cmd_random(cli.seed, *horizon, out_dir),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
