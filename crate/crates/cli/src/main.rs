use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use logdiff_core::experiment::{
    run_experiment, run_suite, run_trajectory, sweep, ExperimentSpec, Suite, SweepAxis, SweepSpec,
};
use logdiff_core::transport::{to_transport, transport_residual};
use logdiff_core::{lx_functional, Error, Field};

#[derive(Parser)]
#[command(
    name = "logdiff",
    version,
    about = "Numerical laboratory for ∂ₜu + (-Δ)^{1/2} log(1+u) = 0"
)]
struct Cli {
    /// Worker threads for parallel sweeps and suites.
    #[arg(long, global = true, env = "LOGDIFF_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML, or JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for the sampled families; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated suites; overrides the config.
    #[arg(long, value_delimiter = ',')]
    suite: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write snapshots, diagnostics and reports.
    Solve(Common),
    /// Run an experiment and write every recorded frame in transport variables.
    Transport(Common),
    /// Run verification suites; suites that need a solve require --config.
    Verify(Common),
    /// Run the config along one parameter axis and print the order table.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Axis: dt, n, amplitude or mass; overrides `[sweep]` in the config.
        #[arg(long)]
        axis: Option<String>,
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Summarize a field CSV, diagnostics CSV or JSON report.
    Inspect { path: PathBuf },
}

/// Failure classes with distinct exit codes.
enum Failure {
    /// Bad configuration or arguments; nothing was written.
    Config(Error),
    /// An enabled assertion failed.
    Assertion,
    /// The run itself failed.
    Runtime(Error),
}

type Outcome = std::result::Result<(), Failure>;

fn config_err(e: Error) -> Failure {
    Failure::Config(e)
}

fn runtime(e: impl Into<Error>) -> Failure {
    Failure::Runtime(e.into())
}

fn load(common: &Common) -> std::result::Result<ExperimentSpec, Failure> {
    let path = common
        .config
        .as_deref()
        .ok_or_else(|| Failure::Config(Error::Config("--config is required".into())))?;
    let mut spec = ExperimentSpec::load(path).map_err(config_err)?;
    if let Some(s) = common.seed {
        spec.seed = s;
    }
    if !common.suite.is_empty() {
        spec.suites = parse_suites(&common.suite)?;
    }
    spec.validate().map_err(config_err)?;
    Ok(spec)
}

fn parse_suites(names: &[String]) -> std::result::Result<Vec<Suite>, Failure> {
    names
        .iter()
        .map(|s| Suite::parse(s.trim()).map_err(config_err))
        .collect()
}

fn out_dir(common: &Common, spec: Option<&ExperimentSpec>) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| spec.and_then(|s| s.out.as_ref().map(|o| s.base_dir.join(o))))
        .unwrap_or_else(|| {
            PathBuf::from("out").join(spec.map(|s| s.name.as_str()).unwrap_or("verify"))
        })
}

fn print_suites(reports: &[logdiff_core::experiment::SuiteReport]) {
    for r in reports {
        println!(
            "{:<12} {}",
            r.suite.name(),
            if r.passed { "PASS" } else { "FAIL" }
        );
    }
}

fn solve(common: &Common) -> Outcome {
    let spec = load(common)?;
    let out = out_dir(common, Some(&spec));
    info!("running `{}` into {}", spec.name, out.display());
    let res = run_experiment(&spec, &out).map_err(runtime)?;
    print_suites(&res.suites);
    println!(
        "wrote {} artifacts to {}",
        res.artifacts.len(),
        out.display()
    );
    if res.passed {
        Ok(())
    } else {
        Err(Failure::Assertion)
    }
}

fn transport(common: &Common) -> Outcome {
    let spec = load(common)?;
    if spec.nonlinearity != logdiff_core::Nonlinearity::Log1p {
        return Err(Failure::Config(Error::Config(
            "transport needs the log1p nonlinearity".into(),
        )));
    }
    let out = out_dir(common, Some(&spec));
    let cfg = spec.run_config().map_err(config_err)?;
    let traj = run_trajectory(&cfg, spec.solver.integrator).map_err(runtime)?;
    let dir = out.join("transport");
    fs::create_dir_all(&dir).map_err(runtime)?;
    for (k, f) in traj.frames.iter().enumerate() {
        let tf = to_transport(&f.u, f.t, f.shift).map_err(runtime)?;
        tf.write_csv(BufWriter::new(
            File::create(dir.join(format!("frame_{k:05}.csv"))).map_err(runtime)?,
        ))
        .map_err(runtime)?;
    }
    let mut w = BufWriter::new(File::create(dir.join("frames.csv")).map_err(runtime)?);
    writeln!(w, "frame,t,shift").map_err(runtime)?;
    for (k, f) in traj.frames.iter().enumerate() {
        writeln!(w, "{k},{},{}", f.t, f.shift).map_err(runtime)?;
    }
    w.flush().map_err(runtime)?;
    if traj.frames.windows(2).all(|p| p[1].step == p[0].step + 1) && traj.frames.len() > 2 {
        let res = transport_residual(&traj).map_err(runtime)?;
        let mut w = BufWriter::new(File::create(dir.join("residual.csv")).map_err(runtime)?);
        writeln!(w, "t,residual").map_err(runtime)?;
        for (t, r) in &res {
            writeln!(w, "{t},{r}").map_err(runtime)?;
        }
        w.flush().map_err(runtime)?;
    } else {
        warn!("frames are not consecutive steps; set record_every = 1 for the residual");
    }
    println!(
        "wrote {} transport frames to {}",
        traj.frames.len(),
        dir.display()
    );
    Ok(())
}

fn verify(common: &Common) -> Outcome {
    let spec = match &common.config {
        Some(_) => Some(load(common)?),
        None => None,
    };
    let suites = match (&spec, common.suite.is_empty()) {
        (_, false) => parse_suites(&common.suite)?,
        (Some(s), true) => s.suites.clone(),
        (None, true) => vec![Suite::Operators, Suite::Inequality],
    };
    if spec.is_none() {
        if let Some(s) = suites.iter().find(|s| s.needs_run()) {
            return Err(Failure::Config(Error::Config(format!(
                "suite `{}` needs --config",
                s.name()
            ))));
        }
    }
    let out = out_dir(common, spec.as_ref());
    let mut spec = spec.unwrap_or_else(|| standalone_spec(common.seed.unwrap_or(0)));
    spec.suites = suites;
    if spec.suites.iter().any(|s| s.needs_run()) {
        let res = run_experiment(&spec, &out).map_err(runtime)?;
        print_suites(&res.suites);
        return if res.passed {
            Ok(())
        } else {
            Err(Failure::Assertion)
        };
    }
    fs::create_dir_all(&out).map_err(runtime)?;
    let mut reports = Vec::new();
    for s in &spec.suites {
        let rep = run_suite(*s, &spec, None).map_err(runtime)?;
        let f = File::create(out.join(format!("{}.json", s.name()))).map_err(runtime)?;
        serde_json::to_writer_pretty(BufWriter::new(f), &rep).map_err(runtime)?;
        reports.push(rep);
    }
    print_suites(&reports);
    if reports.iter().all(|r| r.passed) {
        Ok(())
    } else {
        Err(Failure::Assertion)
    }
}

/// Placeholder experiment for suites that do not solve anything.
fn standalone_spec(seed: u64) -> ExperimentSpec {
    let text = format!(
        "name = \"verify\"\nseed = {seed}\n[grid]\nn = 64\nL = 10.0\n[initial]\nkind = \"gaussian\"\namplitude = 0.0\nwidth = 1.0\n[time]\nt_end = 1.0\nschedule = {{ kind = \"fixed\", dt = 0.1 }}\n"
    );
    ExperimentSpec::parse(&text, "built-in").expect("built-in spec parses")
}

fn parse_axis(s: &str) -> std::result::Result<SweepAxis, Failure> {
    match s {
        "dt" => Ok(SweepAxis::Dt),
        "n" => Ok(SweepAxis::N),
        "amplitude" => Ok(SweepAxis::Amplitude),
        "mass" => Ok(SweepAxis::Mass),
        _ => Err(Failure::Config(Error::Config(format!(
            "unknown axis `{s}`, expected dt, n, amplitude or mass"
        )))),
    }
}

fn run_sweep(common: &Common, axis: Option<&str>, values: &[f64]) -> Outcome {
    let spec = load(common)?;
    let sw = match (axis, spec.sweep.clone()) {
        (Some(a), _) => SweepSpec {
            axis: parse_axis(a)?,
            values: values.to_vec(),
        },
        (None, Some(mut s)) => {
            if !values.is_empty() {
                s.values = values.to_vec();
            }
            s
        }
        (None, None) => return Err(Failure::Config(Error::Config("no sweep axis given".into()))),
    };
    let mut check = spec.clone();
    check.sweep = Some(sw.clone());
    check.validate().map_err(config_err)?;
    let out = out_dir(common, Some(&spec));
    let rep = sweep(&spec, &sw).map_err(runtime)?;
    fs::create_dir_all(&out).map_err(runtime)?;
    let f = File::create(out.join("sweep.json")).map_err(runtime)?;
    serde_json::to_writer_pretty(BufWriter::new(f), &rep).map_err(runtime)?;
    let mut w = BufWriter::new(File::create(out.join("orders.csv")).map_err(runtime)?);
    writeln!(w, "from,to,error_from,error_to,order").map_err(runtime)?;
    for r in &rep.orders {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.from, r.to, r.error_from, r.error_to, r.order
        )
        .map_err(runtime)?;
    }
    w.flush().map_err(runtime)?;
    for p in &rep.points {
        match &p.error {
            None => println!(
                "{:>12}  ok    linf = {}",
                p.value,
                p.final_linf.unwrap_or(f64::NAN)
            ),
            Some(e) => println!("{:>12}  FAIL  {e}", p.value),
        }
    }
    if !rep.orders.is_empty() {
        print!("{}", rep.order_table());
    }
    let mut ok = true;
    if let Some(sm) = &rep.smoothing {
        print!("{}", sm.to_table());
        ok = sm.passed;
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::Assertion)
    }
}

fn inspect(path: &Path) -> Outcome {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Config(Error::Config(format!("{}: {e}", path.display()))))?;
    if path.extension().is_some_and(|e| e == "json") {
        let v: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Failure::Config(e.into()))?;
        match &v {
            serde_json::Value::Object(m) => {
                for (k, x) in m {
                    let s = x.to_string();
                    let s = if s.chars().count() > 100 {
                        format!("{}...", s.chars().take(97).collect::<String>())
                    } else {
                        s
                    };
                    println!("{k}: {s}");
                }
            }
            serde_json::Value::Array(a) => println!("array of {} entries", a.len()),
            other => println!("{other}"),
        }
        return Ok(());
    }
    let header = text.lines().next().unwrap_or_default();
    if header.starts_with("t,mass") {
        let rows: Vec<Vec<f64>> = text
            .lines()
            .skip(1)
            .map(|l| {
                l.split(',')
                    .map(|v| v.parse().unwrap_or(f64::NAN))
                    .collect()
            })
            .collect();
        let (first, last) = match (rows.first(), rows.last()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Failure::Config(Error::Config("no rows".into()))),
        };
        let drift = rows
            .iter()
            .map(|r| (r[1] - first[1]).abs())
            .fold(0.0, f64::max);
        println!("frames: {}", rows.len());
        println!("t: {} .. {}", first[0], last[0]);
        println!("mass: {} (max drift {drift})", first[1]);
        println!("linf: {} -> {}", first[5], last[5]);
        println!("lx: {} -> {}", first[6], last[6]);
        return Ok(());
    }
    let f = Field::read_csv(text.as_bytes()).map_err(config_err)?;
    let g = f.grid();
    println!("n: {}  L: {}", g.n(), g.half_width());
    println!("mass: {}", f.mean() * g.length());
    println!("min: {}  max: {}", f.min(), f.max());
    match lx_functional(&f) {
        Ok(lx) => println!("L_X: {lx}"),
        Err(_) => println!("L_X: undefined (negative values)"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            warn!("could not size the thread pool: {e}");
        }
    }
    let res = match &cli.command {
        Command::Solve(c) => solve(c),
        Command::Transport(c) => transport(c),
        Command::Verify(c) => verify(c),
        Command::Sweep {
            common,
            axis,
            values,
        } => run_sweep(common, axis.as_deref(), values),
        Command::Inspect { path } => inspect(path),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Assertion) => {
            eprintln!("error: verification failed");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
    }
}
