use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use levykit::bounds::{run_suite, suites, SuiteOptions, SCHEMA_VERSION};
use levykit::density::{design_grid, design_grid_truncated, invert_exponent};
use levykit::exponent::{build_exponent, certify_lower_bound, default_xi_grid, stable_exponent_closed_form, Target};
use levykit::model::{log_grid, LevyModel};
use levykit::presets::{make_preset, parse_params, relativistic_ratio_table};
use levykit::simulate::{sample_increment, SimConfig};
use levykit::spec_file::{load_model, model_hash, save_model};

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(name = "levykit", version, about = "Transition densities, sampling and bound checks for jump Lévy processes")]
struct Cli {
    /// Cap on worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand, Debug)]
enum Verb {
    /// Evaluate Φ(ξ) at the given frequencies.
    Exponent(ExponentArgs),
    /// Transition density p_t on a lattice.
    Density(DensityArgs),
    /// Sample increments X_t.
    Simulate(SimulateArgs),
    /// Run bound-verification suites and write a JSON report.
    Verify(VerifyArgs),
    /// Write a ready-made model file.
    Preset(PresetArgs),
}

#[derive(Args, Debug, Serialize)]
struct ExponentArgs {
    #[arg(long)]
    model: PathBuf,
    /// Frequencies as `x,y;x,y;...`. Defaults to a logarithmic sweep.
    #[arg(long)]
    xi: Option<String>,
    /// Use the closed form (stable models only).
    #[arg(long)]
    closed_form: bool,
    #[arg(long, default_value = "auto")]
    strategy: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct DensityArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    t: f64,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Density of the law with jumps restricted to |y| < r.
    #[arg(long)]
    truncate: Option<f64>,
    /// Write the little-endian binary layout instead of CSV.
    #[arg(long)]
    binary: bool,
    #[arg(long, default_value = "auto")]
    strategy: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    t: f64,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = "gaussian")]
    scheme: String,
    /// Jump-size threshold r separating the compound Poisson part (default h(t)).
    #[arg(long)]
    threshold: Option<f64>,
    /// Inner radius for the `discard` scheme.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct VerifyArgs {
    #[arg(long)]
    model: PathBuf,
    /// theorem1, tails, convpow or all.
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct PresetArgs {
    #[arg(long)]
    name: String,
    /// Comma-separated `key=value` pairs.
    #[arg(long, default_value = "")]
    params: String,
    #[arg(long)]
    emit: PathBuf,
    /// Also write the relativistic kernel ratio table (CSV) here.
    #[arg(long)]
    ratio_table: Option<PathBuf>,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    schema_version: u32,
    verb: &'a str,
    model_hash: String,
    parameters: Value,
    tool_version: &'static str,
    outputs: Vec<String>,
    wall_time_seconds: f64,
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

struct Run {
    verb: &'static str,
    parameters: Value,
    model_hash: String,
    outputs: Vec<PathBuf>,
}

fn load(path: &Path) -> anyhow::Result<(LevyModel, String)> {
    let model = load_model(path).with_context(|| format!("reading model {}", path.display()))?;
    let hash = model_hash(&model)?;
    Ok((model, hash))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn parse_xi(text: &str, d: usize) -> anyhow::Result<Vec<Vec<f64>>> {
    text.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|v| {
            let xi = v
                .split(',')
                .map(|c| c.trim().parse::<f64>().with_context(|| format!("bad frequency component '{c}'")))
                .collect::<anyhow::Result<Vec<f64>>>()?;
            if xi.len() != d {
                bail!("frequency '{v}' has {} components, model dimension is {d}", xi.len());
            }
            Ok(xi)
        })
        .collect()
}

fn exponent(a: &ExponentArgs) -> anyhow::Result<Run> {
    let (model, hash) = load(&a.model)?;
    let d = model.dim();
    let xis = match &a.xi {
        Some(text) => parse_xi(text, d)?,
        None => default_xi_grid(d),
    };
    let exp = if a.closed_form {
        if !model.is_stable() {
            return Err(levykit::Error::Precondition("--closed-form needs a stable model".into()).into());
        }
        None
    } else {
        Some(build_exponent(&model, Target::Full, &a.strategy)?)
    };
    let mut out = create(&a.out)?;
    let header: Vec<String> = (1..=d).map(|i| format!("xi{i}")).collect();
    writeln!(out, "{},re,im", header.join(","))?;
    for xi in &xis {
        let v = match &exp {
            Some(e) => e.eval(xi)?,
            None => stable_exponent_closed_form(model.mu(), model.alpha(), xi)?,
        };
        for c in xi {
            write!(out, "{c:.17e},")?;
        }
        writeln!(out, "{:.17e},{:.17e}", v.re, v.im)?;
    }
    out.flush()?;
    Ok(Run {
        verb: "exponent",
        parameters: serde_json::to_value(a)?,
        model_hash: hash,
        outputs: vec![a.out.clone()],
    })
}

fn density(a: &DensityArgs) -> anyhow::Result<Run> {
    let (mut model, hash) = load(&a.model)?;
    certify_lower_bound(&mut model)?;
    let (target, params) = match a.truncate {
        None => (Target::Full, design_grid(&model, a.t, a.tol)?),
        Some(r) => (Target::Truncated(r), design_grid_truncated(&model, r, a.t, a.tol)?),
    };
    let exp = build_exponent(&model, target, &a.strategy)?;
    let grid = invert_exponent(exp.as_ref(), a.t, &params, a.tol)?;
    let out = create(&a.out)?;
    if a.binary {
        grid.write_binary(out)?;
    } else {
        grid.write_csv(out)?;
    }
    eprintln!("density: {} nodes per axis, dx {:.3e}, mass {:.12}", grid.n(), grid.dx(), grid.mass);
    Ok(Run {
        verb: "density",
        parameters: serde_json::to_value(a)?,
        model_hash: hash,
        outputs: vec![a.out.clone()],
    })
}

fn simulate(a: &SimulateArgs) -> anyhow::Result<Run> {
    let (model, hash) = load(&a.model)?;
    let mut cfg = SimConfig::new(&a.scheme, a.seed, a.n);
    if let Some(r) = a.threshold {
        cfg = cfg.with_threshold(r);
    }
    if let Some(rho) = a.rho {
        cfg = cfg.with_rho(rho);
    }
    let batch = sample_increment(&model, a.t, &cfg)?;
    let mut out = create(&a.out)?;
    let header: Vec<String> = (1..=batch.dim).map(|i| format!("x{i}")).collect();
    writeln!(out, "index,{},jumps", header.join(","))?;
    for i in 0..batch.len() {
        write!(out, "{i}")?;
        for x in batch.sample(i) {
            write!(out, ",{x:.17e}")?;
        }
        writeln!(out, ",{}", batch.large_jump_counts[i])?;
    }
    out.flush()?;
    if let Some(rep) = &batch.scheme {
        eprintln!("simulate: scheme {} small-jump variance {:.3e}", rep.scheme, rep.variance);
    }
    Ok(Run {
        verb: "simulate",
        parameters: serde_json::to_value(a)?,
        model_hash: hash,
        outputs: vec![a.out.clone()],
    })
}

fn verify(a: &VerifyArgs) -> anyhow::Result<Run> {
    let (model, hash) = load(&a.model)?;
    let opts = SuiteOptions {
        tol: a.tol,
        seed: a.seed,
        samples: a.samples,
        ..SuiteOptions::default()
    };
    let names: Vec<String> = if a.suite == "all" {
        suites().names().into_iter().map(String::from).collect()
    } else {
        vec![a.suite.clone()]
    };
    let mut reports = Vec::new();
    for name in &names {
        let report = run_suite(name, &model, &opts)?;
        eprintln!("verify: {name} {}", if report.pass { "pass" } else { "FAIL" });
        reports.push(report);
    }
    let body = if reports.len() == 1 {
        serde_json::to_value(&reports[0])?
    } else {
        json!({
            "schema_version": SCHEMA_VERSION,
            "suite": "all",
            "pass": reports.iter().all(|r| r.pass),
            "reports": reports,
        })
    };
    let mut out = create(&a.out)?;
    serde_json::to_writer_pretty(&mut out, &body)?;
    writeln!(out)?;
    out.flush()?;
    Ok(Run {
        verb: "verify",
        parameters: serde_json::to_value(a)?,
        model_hash: hash,
        outputs: vec![a.out.clone()],
    })
}

fn preset(a: &PresetArgs) -> anyhow::Result<Run> {
    let params = parse_params(&a.params)?;
    let model = make_preset(&a.name, &params)?;
    save_model(&model, &a.emit)?;
    let mut outputs = vec![a.emit.clone()];
    if let Some(path) = &a.ratio_table {
        if a.name != "relativistic" {
            return Err(levykit::Error::Precondition("--ratio-table applies to the relativistic preset".into()).into());
        }
        let d = model.dim();
        let alpha = model.alpha();
        let mut out = create(path)?;
        writeln!(out, "s,kernel,ratio")?;
        for row in relativistic_ratio_table(d, alpha, &log_grid(0.1, 30.0, 100))? {
            writeln!(out, "{:.17e},{:.17e},{:.17e}", row.s, row.kernel, row.ratio)?;
        }
        out.flush()?;
        outputs.push(path.clone());
    }
    Ok(Run {
        verb: "preset",
        parameters: serde_json::to_value(a)?,
        model_hash: model_hash(&model)?,
        outputs,
    })
}

fn write_manifest(run: &Run, wall: f64) -> anyhow::Result<()> {
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        verb: run.verb,
        model_hash: run.model_hash.clone(),
        parameters: run.parameters.clone(),
        tool_version: env!("CARGO_PKG_VERSION"),
        outputs: run.outputs.iter().map(|p| p.display().to_string()).collect(),
        wall_time_seconds: wall,
    };
    let path = manifest_path(&run.outputs[0]);
    let mut out = create(&path)?;
    serde_json::to_writer_pretty(&mut out, &manifest)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<levykit::Error>() {
        Some(e) if e.is_validation() => EXIT_VALIDATION,
        Some(_) => EXIT_NUMERICAL,
        None if err.downcast_ref::<std::io::Error>().is_some() => EXIT_NUMERICAL,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let start = Instant::now();
    let result = match &cli.verb {
        Verb::Exponent(a) => exponent(a),
        Verb::Density(a) => density(a),
        Verb::Simulate(a) => simulate(a),
        Verb::Verify(a) => verify(a),
        Verb::Preset(a) => preset(a),
    }
    .and_then(|run| write_manifest(&run, start.elapsed().as_secs_f64()));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
