mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gvcplm::ErrorCategory;

use config::{validate, RunConfig};

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

/// Generalized varying-coefficient partially linear models: fitting,
/// penalized selection, GLR tests and simulation studies.
#[derive(Parser)]
#[command(name = "gvcplm", version)]
struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the model, optionally with a penalty.
    Fit(Flags),
    /// Select parametric covariates (SCAD/L1/Lq via GCV, or L0 best subset).
    Select(Flags),
    /// GLR test that some coefficient functions are zero.
    Test(Flags),
    /// Cross-validated bandwidth search.
    Bandwidth(Flags),
    /// Monte Carlo studies on the built-in scenarios.
    Simulate(Flags),
    /// Check a config file and print its resolved form.
    Validate {
        config: PathBuf,
    },
}

/// Flags override values from `--config`.
#[derive(Args, Default)]
struct Flags {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// CSV file with a header row.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Role map: `column = "u" | "x" | "z" | "y"` lines.
    #[arg(long)]
    roles: Option<PathBuf>,
    /// Do not prepend a constant column to X.
    #[arg(long)]
    no_intercept: bool,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    h: Option<f64>,
    /// Shrink `h` from the MSE-optimal order to `n^(-1/3)`.
    #[arg(long)]
    undersmooth: bool,
    /// Evaluate alpha by local fits at every observation instead of grid interpolation.
    #[arg(long)]
    exact_alpha: bool,
    /// scad, l1, lq, l0 or none.
    #[arg(long)]
    penalty: Option<String>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    /// gcv or fixed.
    #[arg(long)]
    lambda_policy: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    /// aic, bic or ric (L0 only).
    #[arg(long)]
    criterion: Option<String>,
    #[arg(long)]
    max_d: Option<usize>,
    /// One-based X columns set to zero under the null.
    #[arg(long, value_delimiter = ',')]
    null_x: Option<Vec<usize>>,
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    h_grid: Option<Vec<f64>>,
    #[arg(long)]
    folds: Option<usize>,
    /// selection, timing, power, calibration or rase.
    #[arg(long)]
    study: Option<String>,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    d_values: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    deltas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<f64>>,
    /// One-based X column tested in the power and calibration studies.
    #[arg(long)]
    tested: Option<usize>,
}

impl Flags {
    fn into_config(self, command: &str) -> RunConfig {
        RunConfig {
            command: Some(command.to_string()),
            seed: self.seed,
            output: self.output,
            data: self.data,
            roles: self.roles,
            intercept: self.no_intercept.then_some(false),
            family: self.family,
            kernel: self.kernel,
            h: self.h,
            undersmooth: self.undersmooth.then_some(true),
            exact_alpha: self.exact_alpha.then_some(true),
            penalty: self.penalty,
            a: self.a,
            q: self.q,
            lambda_policy: self.lambda_policy,
            lambda: self.lambda,
            lambda_grid: self.lambda_grid,
            criterion: self.criterion,
            max_d: self.max_d,
            null_x: self.null_x,
            bootstrap: self.bootstrap,
            h_grid: self.h_grid,
            folds: self.folds,
            study: self.study,
            scenario: self.scenario,
            n: self.n,
            methods: self.methods,
            reps: self.reps,
            d_values: self.d_values,
            deltas: self.deltas,
            levels: self.levels,
            tested: self.tested,
        }
    }
}

fn report_errors(errs: &[String]) -> ExitCode {
    eprintln!("configuration has {} problem(s):", errs.len());
    for e in errs {
        eprintln!("  - {e}");
    }
    ExitCode::from(EXIT_CONFIG)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 || rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            eprintln!("--threads must be a positive integer");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let (name, flags) = match cli.command {
        Command::Validate { config } => {
            return match RunConfig::read(&config).and_then(|c| validate(&c)) {
                Ok(resolved) => {
                    print!("{}", resolved.to_toml());
                    if resolved.command() == "simulate" {
                        let spec = resolved.scenario_spec();
                        println!("\n# resolved scenario");
                        print!("{}", toml::to_string(&spec).expect("scenario serializes"));
                    }
                    ExitCode::SUCCESS
                }
                Err(errs) => report_errors(&errs),
            };
        }
        Command::Fit(f) => ("fit", f),
        Command::Select(f) => ("select", f),
        Command::Test(f) => ("test", f),
        Command::Bandwidth(f) => ("bandwidth", f),
        Command::Simulate(f) => ("simulate", f),
    };
    let base = match &flags.config {
        Some(path) => match RunConfig::read(path) {
            Ok(c) => c,
            Err(errs) => return report_errors(&errs),
        },
        None => RunConfig::default(),
    };
    if let Some(cmd) = base.command.as_deref().filter(|c| *c != name) {
        return report_errors(&[format!("config file is for `{cmd}` but the `{name}` command was invoked")]);
    }
    let resolved = match validate(&base.overlay(flags.into_config(name))) {
        Ok(c) => c,
        Err(errs) => return report_errors(&errs),
    };
    let out_dir = resolved.output.clone().expect("validated");
    let outcome = run::run(&resolved).and_then(|art| {
        let report = art.report.clone();
        run::write_artifacts(&resolved, art, &out_dir).map(|files| (report, files))
    });
    match outcome {
        Ok((report, files)) => {
            print!("{report}");
            println!("\nwrote {} to {}", files.join(", "), out_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.category() {
                ErrorCategory::Input => EXIT_CONFIG,
                ErrorCategory::Data => EXIT_DATA,
                ErrorCategory::Numerical => EXIT_NUMERICAL,
            })
        }
    }
}
