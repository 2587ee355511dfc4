use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mtcl_core::config::{Mode, RunConfig};
use mtcl_core::engine::{Checkpoint, MetricsTable};
use mtcl_core::experiment::{evaluate_checkpoint, run_experiment};
use mtcl_core::taskstream::{generate_synthetic_stream, GeneratorParams, StreamManifest};
use mtcl_core::weights::{assemble_weights, Recompute, WeightConfig};
use mtcl_core::{Error, ErrorCategory, Exec};

#[derive(Parser)]
#[command(name = "mtcl", version, about = "Multi-teacher continual learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train over a task stream as described by a config file.
    Run(RunArgs),
    /// Write a synthetic task stream.
    Generate(GenerateArgs),
    /// Print the adaptive weight breakdown for given measurements.
    InspectWeights(InspectArgs),
    /// Score a checkpoint on the tasks of a manifest.
    Eval(EvalArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Root for a relative `output_dir`; defaults to the config's directory.
    #[arg(long, env = "MTCL_OUTPUT_ROOT")]
    output_root: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    /// Run per-sample work on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct GenerateArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// TOML file with generator parameters; flags override it.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, default_value_t = 17)]
    seed: u64,
    #[arg(long)]
    tasks: Option<usize>,
    #[arg(long)]
    classes_per_task: Option<usize>,
    #[arg(long)]
    overlap: Option<f64>,
    #[arg(long)]
    target_ir: Option<f64>,
    #[arg(long)]
    shift_magnitude: Option<f64>,
    #[arg(long)]
    samples_per_task: Option<usize>,
    #[arg(long)]
    feature_len: Option<usize>,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    acc_prev: f64,
    #[arg(long)]
    acc_llm: f64,
    #[arg(long, default_value_t = 1.0)]
    ir: f64,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 0.25)]
    theta_ds: f64,
    #[arg(long, default_value_t = 0.25)]
    theta_di: f64,
    /// Logarithm base; defaults to the class count.
    #[arg(long)]
    log_base: Option<f64>,
    #[arg(long, default_value_t = 2)]
    class_count: usize,
    /// Instead of one point, print a table over this many IR values from 1 to base².
    #[arg(long)]
    sweep: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Comma-separated task indices; defaults to every task up to the checkpoint's.
    #[arg(long, value_delimiter = ',')]
    tasks: Option<Vec<usize>>,
    /// Also write the metrics CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    match s {
        "ours" => Ok(Mode::Ours),
        "ft" => Ok(Mode::Ft),
        "lwf" => Ok(Mode::Lwf),
        _ => Err(format!("unknown mode {s:?} (expected ours, ft or lwf)")),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        ErrorCategory::Config => 2,
        ErrorCategory::Data => 3,
        ErrorCategory::Teacher => 4,
        ErrorCategory::Numeric => 5,
    }
}

fn cmd_run(a: RunArgs) -> mtcl_core::Result<()> {
    let mut cfg = RunConfig::load(&a.config, a.output_root.as_deref())?;
    if let Some(d) = a.output_dir {
        cfg.output_dir = match &a.output_root {
            Some(root) if d.is_relative() => root.join(d),
            _ => d,
        };
    }
    if let Some(m) = a.mode {
        cfg.mode = m;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.optimizer.epochs = e;
    }
    if let Some(t) = a.temperature {
        cfg.temperature = t;
    }
    if a.sequential {
        cfg.parallel = false;
    }
    let report = run_experiment(&cfg)?;
    print!("{}", report.outcome.table.render());
    println!("artifacts written to {}", report.run_dir.display());
    Ok(())
}

fn cmd_generate(a: GenerateArgs) -> mtcl_core::Result<()> {
    let mut p = match &a.params {
        Some(path) => GeneratorParams::load(path)?,
        None => GeneratorParams::default(),
    };
    macro_rules! set {
        ($($f:ident),*) => { $(if let Some(v) = a.$f { p.$f = v; })* };
    }
    set!(
        tasks,
        classes_per_task,
        overlap,
        target_ir,
        shift_magnitude,
        samples_per_task,
        feature_len
    );
    let g = generate_synthetic_stream(&p, a.seed, &a.out)?;
    for t in &g.sidecar.tasks {
        println!(
            "task {}: {} classes, {} samples",
            t.index,
            t.classes.len(),
            t.counts.values().sum::<usize>()
        );
    }
    println!("manifest: {}", g.manifest_path.display());
    Ok(())
}

fn cmd_inspect(a: InspectArgs) -> mtcl_core::Result<()> {
    let cfg = WeightConfig {
        alpha: a.alpha,
        theta_ds: a.theta_ds,
        theta_di: a.theta_di,
        log_base: a.log_base,
        recompute: Recompute::PerTask,
    };
    cfg.validate()?;
    let base = cfg.log_base_for(a.class_count);
    match a.sweep {
        None => {
            let (w, b) = assemble_weights(&cfg, a.acc_prev, a.acc_llm, a.ir, base)?;
            println!("acc_prev  {:.6}", b.acc_prev);
            println!("acc_llm   {:.6}", b.acc_llm);
            println!("ir        {:.6}", b.ir);
            println!("log_base  {:.6}", b.log_base);
            println!("beta_ds   {:.6}", b.beta_ds);
            println!("chi_ds    {:.6}", b.chi_ds);
            println!("beta_di   {:.6}", b.beta_di);
            println!("chi_di    {:.6}", b.chi_di);
            println!("alpha     {:.6}", w.alpha);
            println!("beta      {:.6}", w.beta);
            println!("chi       {:.6}", w.chi);
        }
        Some(n) => {
            if n < 2 {
                return Err(Error::InvalidArgument("--sweep needs at least 2 points".into()));
            }
            println!("ir,beta,chi");
            let top = base * base;
            for i in 0..n {
                let ir = 1.0 + (top - 1.0) * i as f64 / (n - 1) as f64;
                let (w, _) = assemble_weights(&cfg, a.acc_prev, a.acc_llm, ir, base)?;
                println!("{ir:.6},{:.6},{:.6}", w.beta, w.chi);
            }
        }
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> mtcl_core::Result<()> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let manifest = StreamManifest::load(&a.manifest)?;
    let row = evaluate_checkpoint(&ckpt, &manifest, a.tasks.as_deref(), Exec::default())?;
    let table = MetricsTable { rows: vec![row] };
    print!("{}", table.render());
    if let Some(out) = a.out {
        std::fs::write(&out, table.to_csv()).map_err(|e| Error::io(&out, e))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Generate(a) => cmd_generate(a),
        Command::InspectWeights(a) => cmd_inspect(a),
        Command::Eval(a) => cmd_eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
