use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stablesep::bench::table_text;
use stablesep::commands::{cmd_bench, cmd_fit, cmd_mix, cmd_separate, cmd_sketch};
use stablesep::config::{parse_override, ExperimentConfig};
use stablesep::Result;

/// Binary-mask stereo source separation with alpha-stable mixture models.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a mixture, its source images and mixspec.toml.
    Mix(Common),
    /// Separate a mixture (or a synthetic one) and write a report.
    Separate(Common),
    /// Compare methods over seeded synthetic trials.
    Bench(Common),
    /// Dump the sketch of one frequency bin.
    Sketch(Common),
    /// Fit a mixture to a dumped sketch.
    Fit(Common),
}

/// Flags override keys of the config file; `--set key=value` reaches any key.
#[derive(Args)]
struct Common {
    /// TOML config file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short = 'k', long)]
    sources: Option<usize>,
    /// em, sawada, cf-gmm, cf-alpha or oracle.
    #[arg(short, long)]
    method: Option<String>,
    /// Comma-separated methods for bench.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    mixture: Option<PathBuf>,
    /// True source images in order; repeat or separate with commas.
    #[arg(long, value_delimiter = ',')]
    truth: Vec<PathBuf>,
    #[arg(long)]
    mixspec: Option<PathBuf>,
    #[arg(long)]
    sketch: Option<PathBuf>,
    #[arg(long)]
    frequency: Option<usize>,
    /// Synthetic duration in seconds.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn path_value(p: &std::path::Path) -> toml::Value {
    toml::Value::String(p.to_string_lossy().into_owned())
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut t = toml::Table::new();
        for s in &self.set {
            let (k, v) = parse_override(s)?;
            t.insert(k, v);
        }
        let mut put = |k: &str, v: Option<toml::Value>| {
            if let Some(v) = v {
                t.insert(k.to_string(), v);
            }
        };
        put("output", self.output.as_deref().map(path_value));
        put("seed", self.seed.map(|s| toml::Value::Integer(s as i64)));
        put("sources", self.sources.map(|k| toml::Value::Integer(k as i64)));
        put("method", self.method.clone().map(toml::Value::String));
        put("trials", self.trials.map(|n| toml::Value::Integer(n as i64)));
        put("mixture", self.mixture.as_deref().map(path_value));
        put("mixspec", self.mixspec.as_deref().map(path_value));
        put("sketch", self.sketch.as_deref().map(path_value));
        put("frequency", self.frequency.map(|f| toml::Value::Integer(f as i64)));
        put("duration", self.duration.map(toml::Value::Float));
        if !self.methods.is_empty() {
            put("methods", Some(toml::Value::Array(self.methods.iter().cloned().map(toml::Value::String).collect())));
        }
        if !self.truth.is_empty() {
            put("truth", Some(toml::Value::Array(self.truth.iter().map(|p| path_value(p)).collect())));
        }
        ExperimentConfig::load(self.config.as_deref(), t)
    }
}

fn print_written(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Mix(c) => print_written(&cmd_mix(&c.load()?)?),
        Command::Separate(c) => {
            let (report, paths) = cmd_separate(&c.load()?)?;
            print_written(&paths);
            if let Some(scores) = &report.scores {
                for (k, s) in scores.iter().enumerate() {
                    println!("source {}: SDR {:.2} dB, SIR {:.2} dB", k + 1, s.sdr_db, s.sir_db);
                }
            }
        }
        Command::Bench(c) => {
            let config = c.load()?;
            let total = config.trials;
            let (report, paths) = cmd_bench(&config, |t| eprintln!("trial {}/{total} done", t.index + 1))?;
            print!("{}", table_text(&report.table));
            print_written(&paths);
        }
        Command::Sketch(c) => print_written(&cmd_sketch(&c.load()?)?),
        Command::Fit(c) => {
            let (report, paths) = cmd_fit(&c.load()?)?;
            print_written(&paths);
            println!("objective {:.6e}", report.objective);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
