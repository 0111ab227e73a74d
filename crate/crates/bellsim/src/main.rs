use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use bellsim::bell::SignVariant;
use bellsim::counts::{ingest_counts, AngleUnit};
use bellsim::measure::Method;
use bellsim::report::{emit_report, Report, ReportFormat};
use bellsim::run::{
    analyze_records, run_classify, run_crossover, run_simulation, run_variance, ExperimentConfig,
    StateSpec, DEFAULT_CLASSIFY_TOL,
};

#[derive(Parser)]
#[command(
    name = "bellsim",
    version,
    about = "Two-photon Bell-parameter simulation and analysis",
    long_about = "Simulates polarization-entangled photon pairs and estimates the Bell \
                  parameter with the four-setting CHSH scheme, a two-setting parallel-polarizer \
                  scheme, or a fringe-visibility scan; analyzes measured coincidence counts; \
                  and compares the statistical error of the estimators by Monte Carlo."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Chsh,
    Simplified,
    Fringe,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Chsh => Method::Chsh,
            MethodArg::Simplified => Method::Simplified,
            MethodArg::Fringe => Method::Fringe,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum SignArg {
    Plus,
    Minus,
    Both,
}

impl SignArg {
    fn expand(self) -> Vec<SignVariant> {
        match self {
            SignArg::Plus => vec![SignVariant::Plus],
            SignArg::Minus => vec![SignVariant::Minus],
            SignArg::Both => vec![SignVariant::Plus, SignVariant::Minus],
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum AngleUnitArg {
    Analysis,
    Waveplate,
}

impl From<AngleUnitArg> for AngleUnit {
    fn from(u: AngleUnitArg) -> Self {
        match u {
            AngleUnitArg::Analysis => AngleUnit::Analysis,
            AngleUnitArg::Waveplate => AngleUnit::Waveplate,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Table,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Table => ReportFormat::Table,
        }
    }
}

#[derive(Args)]
struct OutputArgs {
    /// Report format.
    #[arg(long, value_enum, default_value_t = FormatArg::Table)]
    format: FormatArg,
    /// Write the report to a file instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an experiment on a chosen state and estimate its Bell parameter.
    Simulate {
        /// Test state: phi+, phi-, psi+, psi-, werner:<p>, mixed, or matrix:<path>.
        #[arg(long, default_value = "phi+")]
        state: String,
        /// Estimation methods to run.
        #[arg(long = "method", value_enum, value_delimiter = ',', default_values_t = [MethodArg::Chsh, MethodArg::Simplified])]
        methods: Vec<MethodArg>,
        /// Sign variant of the Bell parameter.
        #[arg(long, value_enum, default_value_t = SignArg::Both)]
        sign: SignArg,
        /// Total photon-pair budget per method, split equally across its settings.
        #[arg(long, default_value_t = 10_000)]
        pairs: u64,
        /// Monte Carlo repetitions; above 1 a variance section is added.
        #[arg(long, default_value_t = 1)]
        trials: u64,
        /// Experiment seed; the only source of randomness.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Classification tolerance on the (S'+, S'-) signature.
        #[arg(long, default_value_t = DEFAULT_CLASSIFY_TOL)]
        tol: f64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Analyze a coincidence-count file measured elsewhere.
    Analyze {
        /// Counts file with header `alpha,beta,n_pp,n_pm,n_mp,n_mm`.
        #[arg(long)]
        input: PathBuf,
        /// Unit of the angle columns: analysis radians, or wave-plate degrees.
        #[arg(long, value_enum, default_value_t = AngleUnitArg::Analysis)]
        angle_unit: AngleUnitArg,
        #[arg(long = "method", value_enum, value_delimiter = ',', default_values_t = [MethodArg::Simplified])]
        methods: Vec<MethodArg>,
        #[arg(long, value_enum, default_value_t = SignArg::Both)]
        sign: SignArg,
        #[arg(long, default_value_t = DEFAULT_CLASSIFY_TOL)]
        tol: f64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Compare predicted and empirical estimator variances on one state.
    Variance {
        #[arg(long, default_value = "phi+")]
        state: String,
        #[arg(long = "method", value_enum, value_delimiter = ',', default_values_t = [MethodArg::Chsh, MethodArg::Simplified])]
        methods: Vec<MethodArg>,
        #[arg(long, value_enum, default_value_t = SignArg::Plus)]
        sign: SignArg,
        #[arg(long, default_value_t = 10_000)]
        pairs: u64,
        #[arg(long, default_value_t = 1_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Sweep Werner states through the estimator-variance crossover.
    Crossover {
        #[arg(long, default_value_t = 10_000)]
        pairs: u64,
        #[arg(long, default_value_t = 1_000)]
        trials: u64,
        /// Werner parameter grid as start:stop:step or a comma list.
        #[arg(long, default_value = "0.5:1.0:0.05")]
        grid: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Classify a (S'+, S'-) pair against the Bell-state signatures.
    Classify {
        #[arg(long, allow_negative_numbers = true)]
        s_plus: f64,
        #[arg(long, allow_negative_numbers = true)]
        s_minus: f64,
        #[arg(long, default_value_t = DEFAULT_CLASSIFY_TOL)]
        tol: f64,
        #[command(flatten)]
        out: OutputArgs,
    },
}

fn parse_grid(spec: &str) -> bellsim::Result<Vec<f64>> {
    let bad = |msg: String| bellsim::Error::Usage(msg);
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(bad(format!("grid `{spec}` must be start:stop:step")));
        }
        let nums: Vec<f64> = parts
            .iter()
            .map(|p| {
                p.parse::<f64>()
                    .map_err(|_| bad(format!("bad grid number `{p}`")))
            })
            .collect::<bellsim::Result<_>>()?;
        let (start, stop, step) = (nums[0], nums[1], nums[2]);
        if step.is_nan() || step <= 0.0 || stop < start {
            return Err(bad(format!("grid `{spec}` is empty or reversed")));
        }
        let count = ((stop - start) / step).round() as usize + 1;
        Ok((0..count)
            .map(|i| (start + i as f64 * step).min(stop))
            .collect())
    } else {
        spec.split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| bad(format!("bad grid number `{p}`")))
            })
            .collect()
    }
}

fn execute(cli: Cli) -> bellsim::Result<(Report, OutputArgs)> {
    match cli.command {
        Command::Simulate {
            state,
            methods,
            sign,
            pairs,
            trials,
            seed,
            tol,
            out,
        } => {
            let cfg = ExperimentConfig {
                state: state.parse::<StateSpec>()?,
                methods: methods.into_iter().map(Method::from).collect(),
                signs: sign.expand(),
                pairs,
                trials,
                seed,
                classify_tol: tol,
            };
            Ok((run_simulation(&cfg)?, out))
        }
        Command::Analyze {
            input,
            angle_unit,
            methods,
            sign,
            tol,
            out,
        } => {
            let records = ingest_counts(&input, angle_unit.into())?;
            let methods: Vec<Method> = methods.into_iter().map(Method::from).collect();
            Ok((
                analyze_records(&records, &methods, &sign.expand(), tol)?,
                out,
            ))
        }
        Command::Variance {
            state,
            methods,
            sign,
            pairs,
            trials,
            seed,
            out,
        } => {
            let cfg = ExperimentConfig {
                state: state.parse::<StateSpec>()?,
                methods: methods.into_iter().map(Method::from).collect(),
                signs: sign.expand(),
                pairs,
                trials,
                seed,
                classify_tol: DEFAULT_CLASSIFY_TOL,
            };
            Ok((run_variance(&cfg)?, out))
        }
        Command::Crossover {
            pairs,
            trials,
            grid,
            seed,
            out,
        } => {
            let p_grid = parse_grid(&grid)?;
            Ok((run_crossover(pairs, trials, &p_grid, seed)?, out))
        }
        Command::Classify {
            s_plus,
            s_minus,
            tol,
            out,
        } => Ok((run_classify(s_plus, s_minus, tol)?, out)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok((report, out)) => {
            if let Err(e) = emit_report(&report, out.format.into(), out.output.as_deref()) {
                eprintln!("error: {e}");
                return ExitCode::FAILURE;
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
