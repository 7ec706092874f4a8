use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sandnet::engine::{
    run_scenario, run_step, DissipationPolicy, InflowSchedule, RunReport, ScenarioSpec, StepTrace, Strategy,
};
use sandnet::io::{run_csv_rows, to_csv, to_json, write_atomic};
use sandnet::metrics::{compare, CsvRow, StrategyOutcome};
use sandnet::render::{render_grid, ColorMap, ImageFormat};
use sandnet::sandpile::Configuration;
use sandnet::scenario::{parse_document, OutputFormat, ScenarioError};
use sandnet::standard::TieBreak;
use sandnet::verify::verify_reference_cases;

#[derive(Parser)]
#[command(name = "sandnet", version, about = "Sandpile load balancing over a hospital network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply the first inflow and settle once, without dissipation.
    Stabilize(Common),
    /// Run one workflow iteration: inflow, redistribution, dissipation.
    Step(Common),
    /// Run every step of the scenario.
    Run(Common),
    /// Run one step under two strategies from the same start.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Second strategy; the first is --strategy (default: standard).
        #[arg(long, value_enum, default_value_t = StrategyArg::Srh)]
        against: StrategyArg,
    },
    /// Render a configuration of the scenario as an image.
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = StateArg::Final)]
        state: StateArg,
        #[arg(long, value_enum, default_value_t = ImageArg::Ppm)]
        image: ImageArg,
        /// Pixels per grid cell.
        #[arg(long, default_value_t = 16)]
        scale: usize,
    },
    /// Replay the built-in reference cases.
    Verify,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    /// Replaces every seed in the scenario and switches tie-breaking to random.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Srh,
    Standard,
    #[value(name = "asm_open", alias = "asm-open")]
    AsmOpen,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Srh => Strategy::Srh,
            StrategyArg::Standard => Strategy::Standard,
            StrategyArg::AsmOpen => Strategy::AsmOpen,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Report,
    Image,
}

#[derive(Clone, Copy, ValueEnum)]
enum StateArg {
    Ground,
    Initial,
    Final,
}

#[derive(Clone, Copy, ValueEnum)]
enum ImageArg {
    Ppm,
    Svg,
}

enum Failure {
    Validation(String),
    Verify(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Verify(_) => 3,
            Failure::Other(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Verify(m) | Failure::Other(m) => m,
        }
    }
}

fn other(e: impl std::fmt::Display) -> Failure {
    Failure::Other(e.to_string())
}

struct Loaded {
    spec: ScenarioSpec,
    format: FormatArg,
    out: Option<PathBuf>,
}

fn load(common: &Common, default_strategy: Option<Strategy>) -> Result<Loaded, Failure> {
    let text = std::fs::read_to_string(&common.scenario)
        .map_err(|e| other(format!("{}: {e}", common.scenario.display())))?;
    let doc = parse_document(&text).map_err(|e| Failure::Validation(e.to_string()))?;
    let output = doc.output.clone().unwrap_or(sandnet::scenario::OutputSection { format: None, path: None });
    let mut spec = doc
        .into_spec()
        .map_err(|e| Failure::Validation(ScenarioError::from(e).to_string()))?;
    if let Some(s) = common.strategy.map(Strategy::from).or(default_strategy) {
        spec.strategy = s;
    }
    if spec.strategy != Strategy::AsmOpen && spec.network.hub().is_none() {
        return Err(Failure::Validation(format!("strategy {} needs a hub", spec.strategy.name())));
    }
    if let Some(seed) = common.seed {
        spec.tiebreak = TieBreak::SeededRandom(seed);
        if let InflowSchedule::Generator { seed: s, .. } = &mut spec.inflow {
            *s = seed;
        }
        if let DissipationPolicy::RandomAdmissible { seed: s, .. } = &mut spec.dissipation {
            *s = seed;
        }
    }
    let format = common.format.unwrap_or(match output.format {
        Some(OutputFormat::Csv) => FormatArg::Csv,
        Some(OutputFormat::Image) => FormatArg::Image,
        Some(OutputFormat::Report) | None => FormatArg::Report,
    });
    let out = common.out.clone().or(output.path.map(PathBuf::from));
    Ok(Loaded { spec, format, out })
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match out {
        Some(path) => write_atomic(path, bytes).map_err(|e| other(format!("{}: {e}", path.display()))),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes).map_err(other)
        }
    }
}

fn image(spec: &ScenarioSpec, z: &Configuration, format: ImageFormat) -> Result<Vec<u8>, Failure> {
    render_grid(&spec.network, z, &ColorMap::default(), format).map_err(|e| Failure::Validation(e.to_string()))
}

const DEFAULT_IMAGE: ImageFormat = ImageFormat::Ppm { scale: 16 };

#[derive(Serialize)]
struct StabilizeReport<'a> {
    scenario: &'a str,
    strategy: Strategy,
    initial: &'a Configuration,
    final_state: &'a Configuration,
    trace: &'a StepTrace,
}

fn stabilize(common: &Common) -> Result<(), Failure> {
    let Loaded { mut spec, format, out } = load(common, None)?;
    spec.dissipation = DissipationPolicy::None;
    let report = run_step(&spec, &spec.ground_state, 0).map_err(other)?;
    let bytes = match format {
        FormatArg::Report => to_json(&StabilizeReport {
            scenario: &spec.name,
            strategy: spec.strategy,
            initial: &report.initial,
            final_state: &report.settled,
            trace: &report.trace,
        }),
        FormatArg::Csv => to_csv(&[CsvRow::new(&spec.name, &StrategyOutcome::from_report(&report))]).map_err(other)?,
        FormatArg::Image => image(&spec, &report.settled, DEFAULT_IMAGE)?,
    };
    emit(out.as_deref(), &bytes)
}

fn step(common: &Common) -> Result<(), Failure> {
    let Loaded { spec, format, out } = load(common, None)?;
    let report = run_step(&spec, &spec.ground_state, 0).map_err(other)?;
    let bytes = match format {
        FormatArg::Report => to_json(&report),
        FormatArg::Csv => to_csv(&[CsvRow::new(&spec.name, &StrategyOutcome::from_report(&report))]).map_err(other)?,
        FormatArg::Image => image(&spec, &report.final_state, DEFAULT_IMAGE)?,
    };
    emit(out.as_deref(), &bytes)
}

fn run_all(spec: &ScenarioSpec) -> Result<RunReport, Failure> {
    run_scenario(spec).map_err(other)
}

fn run(common: &Common) -> Result<(), Failure> {
    let Loaded { spec, format, out } = load(common, None)?;
    let report = run_all(&spec)?;
    let bytes = match format {
        FormatArg::Report => to_json(&report),
        FormatArg::Csv => to_csv(&run_csv_rows(&report)).map_err(other)?,
        FormatArg::Image => image(&spec, &report.final_state, DEFAULT_IMAGE)?,
    };
    emit(out.as_deref(), &bytes)
}

fn compare_cmd(common: &Common, against: StrategyArg) -> Result<(), Failure> {
    let Loaded { spec: first, format, out } = load(common, Some(Strategy::Standard))?;
    let mut second = first.clone();
    second.strategy = against.into();
    if second.strategy != Strategy::AsmOpen && second.network.hub().is_none() {
        return Err(Failure::Validation(format!("strategy {} needs a hub", second.strategy.name())));
    }
    let a = run_step(&first, &first.ground_state, 0).map_err(other)?;
    let b = run_step(&second, &second.ground_state, 0).map_err(other)?;
    let cmp = compare(&a, &b).map_err(other)?;
    let bytes = match format {
        FormatArg::Report => to_json(&cmp),
        FormatArg::Csv => to_csv(&cmp.csv_rows(&first.name)).map_err(other)?,
        FormatArg::Image => return Err(Failure::Validation("compare has no image output".into())),
    };
    emit(out.as_deref(), &bytes)
}

fn render(common: &Common, state: StateArg, image_arg: ImageArg, scale: usize) -> Result<(), Failure> {
    let Loaded { spec, out, .. } = load(common, None)?;
    let z = match state {
        StateArg::Ground => spec.ground_state.clone(),
        StateArg::Initial => run_step(&spec, &spec.ground_state, 0).map_err(other)?.initial,
        StateArg::Final => run_all(&spec)?.final_state,
    };
    let format = match image_arg {
        ImageArg::Ppm => ImageFormat::Ppm { scale },
        ImageArg::Svg => ImageFormat::Svg { scale },
    };
    let bytes = image(&spec, &z, format)?;
    emit(out.as_deref(), &bytes)
}

fn verify() -> Result<(), Failure> {
    let report = verify_reference_cases();
    println!("{report}");
    if report.all_passed() {
        Ok(())
    } else {
        Err(Failure::Verify(format!("{} reference checks failed", report.failures().count())))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Stabilize(c) => stabilize(c),
        Command::Step(c) => step(c),
        Command::Run(c) => run(c),
        Command::Compare { common, against } => compare_cmd(common, *against),
        Command::Render { common, state, image, scale } => render(common, *state, *image, *scale),
        Command::Verify => verify(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
