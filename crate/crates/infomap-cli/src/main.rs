//! `infomap` — batch tooling around Information Maps: estimate detection
//! maps from logs, convert between the native format and grayscale images,
//! query and bake map hierarchies, validate class priors, and run the
//! occlusion simulation.
//!
//! Exit codes: 0 success, 1 validation failure, 2 usage error, 3 I/O or
//! format error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use infomap::context::{ClassPriorSet, ContextError};
use infomap::format::{
    decode_pgm, encode_pgm, export_image, import_image, load_native_file, parse_sidecar,
    save_native_file, sidecar_text, FormatError,
};
use infomap::grid::{is_unknown, Frame, GridError, GridSpec, OobPolicy, WorldPosition};
use infomap::hierarchy::{Hierarchy, HierarchyError, ProviderRegistry};
use infomap::mapbuild::{accumulate, estimate_pd, BuildError, DetectionLog};
use infomap::phd::PhdError;
use infomap::sim::{generate, run_occlusion_experiment, ScenarioConfig, SimError};

#[derive(Parser)]
#[command(
    name = "infomap",
    version,
    about = "Build, convert, combine, and query position-dependent parameter maps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a detection-probability map from a detection log
    BuildPd(BuildPdArgs),
    /// Convert between the native map format and 8-bit PGM images
    Convert(ConvertArgs),
    /// Ask a hierarchy node for its combined value at a position
    Query(QueryArgs),
    /// Check that class prior maps sum to one everywhere they are known
    ValidatePriors(ValidatePriorsArgs),
    /// Sample a hierarchy node over a grid into a standalone map
    Bake(BakeArgs),
    /// Run a scenario: emit its detection log and the occlusion experiment
    Sim(SimArgs),
}

// ---------------------------------------------------------------------------
// Error-to-exit-code mapping
// ---------------------------------------------------------------------------

enum CliError {
    /// Exit 1: inputs parsed but failed a semantic check.
    Validation(String),
    /// Exit 2: bad flags or flag combinations.
    Usage(String),
    /// Exit 3: missing files, unreadable or malformed payloads.
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Usage(m) | CliError::Io(m) => m,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::DimensionMismatch { .. } | FormatError::NoFreePixel => {
                CliError::Validation(e.to_string())
            }
            FormatError::Grid(g) => CliError::Validation(g.to_string()),
            FormatError::Malformed { .. } | FormatError::Io(_) => CliError::Io(e.to_string()),
        }
    }
}

impl From<GridError> for CliError {
    fn from(e: GridError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<BuildError> for CliError {
    fn from(e: BuildError) -> Self {
        match e {
            BuildError::LogParse { .. }
            | BuildError::NonIncreasingTimestamp { .. }
            | BuildError::Io(_) => CliError::Io(e.to_string()),
            BuildError::InvalidMatchRadius(_) => CliError::Usage(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<HierarchyError> for CliError {
    fn from(e: HierarchyError) -> Self {
        match e {
            HierarchyError::Config { .. } => CliError::Io(e.to_string()),
            HierarchyError::Format(f) => f.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ContextError> for CliError {
    fn from(e: ContextError) -> Self {
        match e {
            ContextError::ManifestParse { .. } | ContextError::PaletteParse { .. } => {
                CliError::Io(e.to_string())
            }
            ContextError::Format(f) => f.into(),
            ContextError::Io(io) => CliError::Io(io.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<PhdError> for CliError {
    fn from(e: PhdError) -> Self {
        match e {
            PhdError::Config { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Io(io) => CliError::Io(io.to_string()),
            SimError::Format(f) => f.into(),
            SimError::Hierarchy(h) => h.into(),
            SimError::Phd(p) => p.into(),
            SimError::Build(b) => b.into(),
            SimError::Grid(g) => g.into(),
            SimError::InvalidConfig { .. } => CliError::Validation(e.to_string()),
        }
    }
}

/// Resolve an input path, trying `$INFOMAP_CONFIG_DIR` when the path does not
/// exist as given.
fn resolve_input(path: &Path) -> PathBuf {
    if path.exists() || path.is_absolute() {
        return path.to_path_buf();
    }
    if let Ok(dir) = std::env::var("INFOMAP_CONFIG_DIR") {
        let candidate = Path::new(&dir).join(path);
        if candidate.exists() {
            return candidate;
        }
    }
    path.to_path_buf()
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

// ---------------------------------------------------------------------------
// Shared flag groups
// ---------------------------------------------------------------------------

#[derive(Args)]
struct GridFlags {
    /// Grid dimensions as rows,cols
    #[arg(long)]
    grid: String,
    /// Resolution: meters per cell, or range,bearing bin sizes for polar
    #[arg(long)]
    res: String,
    /// Origin cell as row,col
    #[arg(long, default_value = "0,0")]
    origin: String,
    /// Coordinate frame
    #[arg(long, default_value = "cartesian", value_parser = ["cartesian", "polar"])]
    frame: String,
}

fn split_pair(raw: &str, what: &str) -> Result<(String, String), CliError> {
    raw.split_once(',')
        .map(|(a, b)| (a.trim().to_string(), b.trim().to_string()))
        .ok_or_else(|| CliError::Usage(format!("--{what} wants two comma-separated values")))
}

fn parse_num<T: std::str::FromStr>(raw: &str, what: &str) -> Result<T, CliError> {
    raw.parse()
        .map_err(|_| CliError::Usage(format!("--{what}: invalid value `{raw}`")))
}

impl GridFlags {
    fn to_spec(&self) -> Result<GridSpec, CliError> {
        let (rows, cols) = split_pair(&self.grid, "grid")?;
        let (rows, cols) = (parse_num::<usize>(&rows, "grid")?, parse_num::<usize>(&cols, "grid")?);
        let (origin_row, origin_col) = split_pair(&self.origin, "origin")?;
        let (origin_row, origin_col) = (
            parse_num::<i64>(&origin_row, "origin")?,
            parse_num::<i64>(&origin_col, "origin")?,
        );
        let frame = match self.frame.as_str() {
            "cartesian" => Frame::Cartesian {
                cell_size: parse_num(&self.res, "res")?,
            },
            _ => {
                let (range, bearing) = split_pair(&self.res, "res")?;
                Frame::Polar {
                    range_bin: parse_num(&range, "res")?,
                    bearing_bin: parse_num(&bearing, "res")?,
                }
            }
        };
        GridSpec::new(rows, cols, origin_row, origin_col, frame)
            .map_err(|e| CliError::Usage(e.to_string()))
    }
}

#[derive(Args)]
struct OobFlags {
    /// Out-of-bounds policy
    #[arg(long, default_value = "default", value_parser = ["default", "nearest", "error"])]
    oob: String,
    /// Value returned under the `default` policy (defaults to vmin)
    #[arg(long, allow_negative_numbers = true)]
    oob_default: Option<f64>,
}

impl OobFlags {
    fn to_policy(&self, vmin: f64) -> OobPolicy {
        match self.oob.as_str() {
            "nearest" => OobPolicy::NearestCell,
            "error" => OobPolicy::Error,
            _ => OobPolicy::DefaultValue(self.oob_default.unwrap_or(vmin)),
        }
    }
}

// ---------------------------------------------------------------------------
// build-pd
// ---------------------------------------------------------------------------

#[derive(Args)]
struct BuildPdArgs {
    /// Detection log file
    #[arg(long)]
    log: PathBuf,
    /// Output map (native format)
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    grid: GridFlags,
    /// Truth-to-detection gate in meters
    #[arg(long, default_value_t = 0.5)]
    match_radius: f64,
    /// Cells with fewer opportunities stay unknown
    #[arg(long, default_value_t = 20)]
    min_opportunities: u32,
}

fn cmd_build_pd(args: BuildPdArgs) -> Result<(), CliError> {
    let spec = args.grid.to_spec()?;
    let log = DetectionLog::load_file(resolve_input(&args.log))?;
    let counts = accumulate(&log, spec, args.match_radius)?;
    let map = estimate_pd(&counts, args.min_opportunities);
    save_native_file(&map, &args.out)?;
    println!(
        "wrote {} ({} of {} cells known)",
        args.out.display(),
        map.known_count(),
        map.values().len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// convert
// ---------------------------------------------------------------------------

#[derive(Args)]
struct ConvertArgs {
    /// Input file (native map or PGM image)
    #[arg(long = "in")]
    input: PathBuf,
    /// Output file
    #[arg(long)]
    out: PathBuf,
    /// Conversion target
    #[arg(long, value_parser = ["image", "native"])]
    to: String,
    /// Value range as vmin,vmax (image -> native)
    #[arg(long)]
    range: Option<String>,
    #[command(flatten)]
    grid: Option<GridFlagsOptional>,
    #[command(flatten)]
    oob: OobFlags,
}

/// Grid flags where everything is optional; `convert --to image` needs none.
#[derive(Args)]
struct GridFlagsOptional {
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    res: Option<String>,
    #[arg(long, default_value = "0,0")]
    origin: String,
    #[arg(long, default_value = "cartesian", value_parser = ["cartesian", "polar"])]
    frame: String,
}

fn cmd_convert(args: ConvertArgs) -> Result<(), CliError> {
    match args.to.as_str() {
        "image" => {
            let map = load_native_file(resolve_input(&args.input))?;
            let export = export_image(&map)?;
            std::fs::write(&args.out, encode_pgm(&export.raster))?;
            if let Some(sidecar) = sidecar_text(&export) {
                let sidecar_path = sidecar_path_for(&args.out);
                std::fs::write(&sidecar_path, sidecar)?;
                println!(
                    "wrote {} (unknown pixel {} recorded in {})",
                    args.out.display(),
                    export.unknown_pixel.unwrap(),
                    sidecar_path.display()
                );
            } else {
                println!("wrote {}", args.out.display());
            }
        }
        _ => {
            let flags = args.grid.ok_or_else(|| {
                CliError::Usage("--to native wants --grid and --res".into())
            })?;
            let (grid, res) = match (flags.grid, flags.res) {
                (Some(g), Some(r)) => (g, r),
                _ => return Err(CliError::Usage("--to native wants --grid and --res".into())),
            };
            let spec = GridFlags {
                grid,
                res,
                origin: flags.origin,
                frame: flags.frame,
            }
            .to_spec()?;
            let range = args
                .range
                .ok_or_else(|| CliError::Usage("--to native wants --range vmin,vmax".into()))?;
            let (vmin, vmax) = split_pair(&range, "range")?;
            let (vmin, vmax) = (
                parse_num::<f64>(&vmin, "range")?,
                parse_num::<f64>(&vmax, "range")?,
            );
            let input = resolve_input(&args.input);
            let raster = decode_pgm(&std::fs::read(&input)?)?;
            let sidecar = sidecar_path_for(&input);
            let unknown_pixel = if sidecar.exists() {
                parse_sidecar(&std::fs::read_to_string(&sidecar)?)?
            } else {
                None
            };
            let map = import_image(
                &raster,
                spec,
                vmin,
                vmax,
                args.oob.to_policy(vmin),
                unknown_pixel,
            )?;
            save_native_file(&map, &args.out)?;
            println!("wrote {}", args.out.display());
        }
    }
    Ok(())
}

fn sidecar_path_for(image: &Path) -> PathBuf {
    let mut os = image.as_os_str().to_os_string();
    os.push(".meta");
    PathBuf::from(os)
}

// ---------------------------------------------------------------------------
// query
// ---------------------------------------------------------------------------

#[derive(Args)]
struct QueryArgs {
    /// Hierarchy config file
    #[arg(long)]
    hierarchy: PathBuf,
    /// Node to ask
    #[arg(long)]
    node: String,
    #[arg(long, allow_negative_numbers = true)]
    x: f64,
    #[arg(long, allow_negative_numbers = true)]
    y: f64,
}

fn cmd_query(args: QueryArgs) -> Result<(), CliError> {
    let path = resolve_input(&args.hierarchy);
    let text = std::fs::read_to_string(&path)?;
    let hierarchy = Hierarchy::from_config(&text, base_dir(&path), &ProviderRegistry::new())?;
    let value = hierarchy.request_by_name(&args.node, WorldPosition::new(args.x, args.y))?;
    if is_unknown(value) {
        println!("unknown");
    } else {
        println!("{value}");
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// validate-priors
// ---------------------------------------------------------------------------

#[derive(Args)]
struct ValidatePriorsArgs {
    /// Manifest: one `label path` line per class
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
}

fn cmd_validate_priors(args: ValidatePriorsArgs) -> Result<(), CliError> {
    let path = resolve_input(&args.manifest);
    let text = std::fs::read_to_string(&path)?;
    let set = ClassPriorSet::load_manifest(&text, base_dir(&path))?;
    let violations = set.validate(args.tolerance);
    if violations.is_empty() {
        return Ok(());
    }
    for v in &violations {
        println!("cell {} {} sum {}", v.row, v.col, v.sum);
    }
    Err(CliError::Validation(format!(
        "{} cells violate the sum-to-one constraint",
        violations.len()
    )))
}

// ---------------------------------------------------------------------------
// bake
// ---------------------------------------------------------------------------

#[derive(Args)]
struct BakeArgs {
    /// Hierarchy config file
    #[arg(long)]
    hierarchy: PathBuf,
    /// Node to bake
    #[arg(long)]
    node: String,
    /// Output map (native format)
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    grid: GridFlags,
}

fn cmd_bake(args: BakeArgs) -> Result<(), CliError> {
    let spec = args.grid.to_spec()?;
    let path = resolve_input(&args.hierarchy);
    let text = std::fs::read_to_string(&path)?;
    let hierarchy = Hierarchy::from_config(&text, base_dir(&path), &ProviderRegistry::new())?;
    let node = hierarchy
        .node_id(&args.node)
        .ok_or_else(|| CliError::Validation(format!("no node named `{}`", args.node)))?;
    let baked = hierarchy.bake(node, spec)?;
    save_native_file(&baked, &args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// sim
// ---------------------------------------------------------------------------

#[derive(Args)]
struct SimArgs {
    /// Scenario config file
    #[arg(long)]
    scenario: PathBuf,
    /// Override the scenario seed
    #[arg(long)]
    seed: Option<u64>,
    /// Write the generated detection log here
    #[arg(long)]
    emit_log: Option<PathBuf>,
    /// Skip the occlusion experiment (just generate)
    #[arg(long, default_value_t = false)]
    no_experiment: bool,
    /// Write per-scan CSV reports as <prefix>-with.csv / <prefix>-without.csv
    #[arg(long)]
    report: Option<PathBuf>,
}

fn cmd_sim(args: SimArgs) -> Result<(), CliError> {
    let path = resolve_input(&args.scenario);
    let text = std::fs::read_to_string(&path)?;
    let mut config = ScenarioConfig::parse(&text, base_dir(&path))?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(log_path) = &args.emit_log {
        let log = generate(&config)?;
        log.save_file(log_path)?;
        println!("wrote {} ({} frames)", log_path.display(), log.frames().len());
    }
    if args.no_experiment {
        return Ok(());
    }
    for (label, with_map) in [("with_persistence_map", true), ("without_persistence_map", false)] {
        let report = run_occlusion_experiment(&config, with_map)?;
        println!("{label} survival {}", report.survival);
        if let Some(prefix) = &args.report {
            let suffix = if with_map { "with" } else { "without" };
            let mut os = prefix.as_os_str().to_os_string();
            os.push(format!("-{suffix}.csv"));
            std::fs::write(PathBuf::from(os), report.to_csv())?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::BuildPd(args) => cmd_build_pd(args),
        Command::Convert(args) => cmd_convert(args),
        Command::Query(args) => cmd_query(args),
        Command::ValidatePriors(args) => cmd_validate_priors(args),
        Command::Bake(args) => cmd_bake(args),
        Command::Sim(args) => cmd_sim(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
