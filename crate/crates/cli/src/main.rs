use clap::{Args, Parser, Subcommand};
use keepout_cli::scenario::{Algorithm, LoadedScenario};
use keepout_cli::{
    cmd_compare, cmd_cover, cmd_fsr, cmd_occupancy_at, cmd_occupancy_grid, cmd_occupyset, cmd_oracle, cmd_run, parse_grid,
    CliError, Outcome, Overrides, EXIT_PARSE,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "keepout", version, about = "Probabilistic occupancy and keep-out sets for stochastic obstacles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reach-law mean and covariance (per mode sequence when switched).
    Fsr(Common),
    /// Occupancy at a point or on a grid.
    Occupancy {
        #[command(flatten)]
        common: Common,
        /// Query point, e.g. `2,2`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "grid")]
        at: Option<Vec<f64>>,
        /// Grid `xmin:xmax:nx,ymin:ymax:ny`; prints CSV `x,y,phi`.
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
    },
    /// Keep-out set approximations.
    Occupyset(Common),
    /// Cover of a switched obstacle, one record per mode sequence.
    Cover(Common),
    /// Monte-Carlo grid and containment verdicts.
    Oracle(Common),
    /// Algorithm and oracle wall times with verdicts.
    Compare(Common),
    /// Everything the scenario asks for, written to the output directory.
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file (JSON).
    scenario: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    #[arg(long)]
    tau: Option<usize>,
    /// Algorithm; repeat for several.
    #[arg(long = "alg")]
    alg: Vec<Algorithm>,
    /// Number of sphere samples for the projection method.
    #[arg(long = "K", alias = "k")]
    k: Option<usize>,
    /// Sampling radius for the projection method.
    #[arg(long)]
    r: Option<f64>,
    /// Number of support directions for the Minkowski method.
    #[arg(long)]
    ndes: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Monte-Carlo sample count.
    #[arg(long)]
    ns: Option<usize>,
    /// Monte-Carlo seed; defaults to the scenario, then KEEPOUT_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Oracle grid nodes per axis.
    #[arg(long = "grid-size")]
    grid_size: Option<usize>,
    /// Replace the model; only `unicycle` is known.
    #[arg(long)]
    model: Option<String>,
    /// Transition matrix for `--model unicycle`.
    #[arg(long, default_value = "M1")]
    transition: String,
    /// Output directory for plots, grids and result files.
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<LoadedScenario, CliError> {
        let base = LoadedScenario::from_path(&self.scenario)?;
        let unicycle = match self.model.as_deref() {
            None => None,
            Some("unicycle") => Some(self.transition.clone()),
            Some(other) => return Err(CliError::Parse(format!("--model: unknown model {other:?}"))),
        };
        Overrides {
            alpha: self.alpha,
            tau: self.tau,
            k: self.k,
            r: self.r,
            ndes: self.ndes,
            tol: self.tol,
            algorithms: (!self.alg.is_empty()).then(|| self.alg.clone()),
            ns: self.ns,
            seed: self.seed,
            grid: self.grid_size,
            unicycle,
        }
        .apply(&base)
    }

    fn out_dir(&self, s: &LoadedScenario) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| s.scenario.outputs.dir.clone().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out").join(&s.scenario.name))
    }
}

fn execute(cmd: Command) -> Result<i32, CliError> {
    let (common, outcome, records_to_stderr) = match cmd {
        Command::Fsr(c) => {
            let s = c.load()?;
            (c, cmd_fsr(&s)?, false)
        }
        Command::Occupancy { common, at, grid } => {
            let s = common.load()?;
            let out = match (at, grid) {
                (Some(y), _) => cmd_occupancy_at(&s, &y)?,
                (None, Some(g)) => cmd_occupancy_grid(&s, &parse_grid(&g)?)?,
                (None, None) => return Err(CliError::Parse("occupancy: give --at or --grid".into())),
            };
            let csv = !out.text.is_empty();
            (common, out, csv)
        }
        Command::Occupyset(c) => {
            let s = c.load()?;
            (c, cmd_occupyset(&s)?, false)
        }
        Command::Cover(c) => {
            let s = c.load()?;
            (c, cmd_cover(&s)?, false)
        }
        Command::Oracle(c) => {
            let s = c.load()?;
            (c, cmd_oracle(&s)?, false)
        }
        Command::Compare(c) => {
            let s = c.load()?;
            (c, cmd_compare(&s)?, true)
        }
        Command::Run(c) => {
            let s = c.load()?;
            (c, cmd_run(&s)?, false)
        }
    };
    emit(&common, &outcome, records_to_stderr)?;
    Ok(outcome.exit_code())
}

fn emit(common: &Common, out: &Outcome, records_to_stderr: bool) -> Result<(), CliError> {
    for r in &out.records {
        if records_to_stderr {
            eprintln!("{}", r.to_line());
        } else {
            println!("{}", r.to_line());
        }
    }
    for t in &out.text {
        print!("{t}");
        if !t.ends_with('\n') {
            println!();
        }
    }
    if !out.files.is_empty() {
        let s = LoadedScenario::from_path(&common.scenario)?;
        for p in out.write_files(&common.out_dir(&s))? {
            eprintln!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_PARSE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
