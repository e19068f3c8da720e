use std::path::PathBuf;
use std::process::ExitCode;

use blockgs_core::harness::{run_bench, verify, BenchConfig, BenchReport, CellStatus, Distribution};
use blockgs_core::{IntraorthKind, Reduction, VariantId};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Block classical Gram-Schmidt QR on a simulated row-distributed machine.
#[derive(Parser, Debug)]
#[command(name = "blockgs", version)]
struct Cli {
    #[command(flatten)]
    cost: CostFlags,

    #[command(subcommand)]
    command: Command,
}

/// Overrides for the latency-bandwidth-compute cost model.
#[derive(Args, Debug)]
struct CostFlags {
    /// Seconds per synchronization.
    #[arg(long, global = true)]
    cost_alpha: Option<f64>,
    /// Seconds per reduced word.
    #[arg(long, global = true)]
    cost_beta: Option<f64>,
    /// Seconds per flop on one process.
    #[arg(long, global = true)]
    cost_gamma: Option<f64>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a benchmark sweep described by a config file.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        out: Format,
        /// Write the report here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Factor one generated matrix and report its metrics.
    Factor {
        #[arg(long)]
        variant: VariantId,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        s: usize,
        #[arg(long, default_value_t = 1e2)]
        kappa: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        procs: usize,
        #[arg(long, default_value_t = IntraorthKind::Tsqr)]
        intra: IntraorthKind,
        #[arg(long, default_value = "rank-ordered")]
        reduction: Reduction,
        #[arg(long, default_value_t = Distribution::Geometric)]
        dist: Distribution,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        out: Format,
    },
    /// Check the library's core invariants.
    Verify,
}

impl CostFlags {
    fn apply(&self, cfg: &mut BenchConfig) {
        if let Some(a) = self.cost_alpha {
            cfg.cost.alpha = a;
        }
        if let Some(b) = self.cost_beta {
            cfg.cost.beta = b;
        }
        if let Some(g) = self.cost_gamma {
            cfg.cost.gamma = g;
        }
    }
}

fn render(report: &BenchReport, out: Format) -> String {
    match out {
        Format::Csv => report.to_csv(),
        Format::Json => report.to_json(),
    }
}

fn finish(report: &BenchReport) -> ExitCode {
    let bad = report.unexpected_failures();
    if bad == 0 {
        return ExitCode::SUCCESS;
    }
    for r in report.rows.iter().filter(|r| r.status == CellStatus::UnexpectedFailure) {
        eprintln!(
            "unexpected failure: {} n={} m={} s={} P={} kappa={:e}: {}",
            r.variant,
            r.n,
            r.m,
            r.s,
            r.procs,
            r.kappa,
            r.message.as_deref().unwrap_or("")
        );
    }
    ExitCode::from(1)
}

fn bench(cost: &CostFlags, config: PathBuf, out: Format, output: Option<PathBuf>) -> ExitCode {
    let text = match std::fs::read_to_string(&config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config.display());
            return ExitCode::from(2);
        }
    };
    let mut cfg = match BenchConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", config.display());
            return ExitCode::from(2);
        }
    };
    cost.apply(&mut cfg);
    if let Err(e) = cfg.cost.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let report = match run_bench(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let text = render(&report, out);
    match output {
        Some(path) => {
            if let Err(e) = std::fs::write(&path, text) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return ExitCode::from(1);
            }
        }
        None => print!("{text}"),
    }
    finish(&report)
}

fn verify_all() -> ExitCode {
    let checks = verify::run_invariants();
    for c in &checks {
        let tag = if c.passed { "ok" } else { "FAILED" };
        println!("[{tag}] {}: {}", c.name, c.detail);
    }
    if checks.iter().all(|c| c.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Bench { config, out, output } => bench(&cli.cost, config, out, output),
        Command::Factor {
            variant,
            n,
            m,
            s,
            kappa,
            seed,
            procs,
            intra,
            reduction,
            dist,
            out,
        } => {
            let mut cfg = BenchConfig {
                variants: vec![variant],
                n: vec![n],
                m: vec![m],
                s: vec![s],
                procs: vec![procs],
                kappa: vec![kappa],
                seed,
                seeds: 1,
                distribution: dist,
                reduction,
                intra,
                ..BenchConfig::default()
            };
            cli.cost.apply(&mut cfg);
            if s == 0 || m % s != 0 || procs == 0 || kappa.is_nan() || kappa < 1.0 || cfg.cost.validate().is_err() {
                eprintln!("error: need s dividing m, procs >= 1, kappa >= 1 and a nonnegative cost model");
                return ExitCode::from(2);
            }
            match run_bench(&cfg) {
                Ok(report) => {
                    print!("{}", render(&report, out));
                    match report.rows[0].message.as_deref() {
                        Some(msg) => {
                            eprintln!("factorization failed: {msg}");
                            ExitCode::from(1)
                        }
                        None => ExitCode::SUCCESS,
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Command::Verify => verify_all(),
    }
}
