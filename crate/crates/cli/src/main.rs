mod config;
mod evaluate;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};
use soilspec::features::{emit_signatures, SignatureGrouping};
use soilspec::pipeline::{Granularity, ModelKind, ScalerScope, Strategy};
use soilspec::preprocess::NormalizationParams;
use soilspec::synthgen::{self, EndmemberSpectra, NoiseModel, DEFAULT_ROI, MANIFEST_FILE};
use soilspec::table::{read_observations_file, write_observations_file};
use soilspec::triangle::{classify_composition, rule_manifest};
use soilspec::{validate_composition, Error, Result, Roi};

use config::{NoiseConfig, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "soilspec", version, about = "Multispectral soil texture pipeline")]
struct Cli {
    /// Worker threads for the whole run (default: all cores).
    #[arg(long, global = true, env = "SOILSPEC_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize the benchmark cubes, dark frame and manifest.
    Generate(GenerateArgs),
    /// Preprocess cubes into block-level observation tables.
    Extract(ExtractArgs),
    /// Cross-validate the three strategies and optionally run external validation.
    Evaluate(evaluate::EvaluateArgs),
    /// Per-group mean spectra for plotting.
    Signatures(SignatureArgs),
    /// Classify a composition or list the texture triangle rules.
    Triangle(TriangleArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Noise preset: clean, bench or stress.
    #[arg(long, default_value = "bench", value_parser = ["clean", "bench", "stress"])]
    preset: String,
    /// CSV with columns band_nm,clayrich,siltrich,sandrich replacing the built-in spectra.
    #[arg(long)]
    endmembers: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    /// Directory written by `generate`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = NormalizationParams::DEFAULT_KAPPA)]
    kappa: f64,
    #[arg(long, default_value_t = DEFAULT_ROI.x1)]
    roi_x: usize,
    #[arg(long, default_value_t = DEFAULT_ROI.y1)]
    roi_y: usize,
}

#[derive(Args, Debug)]
struct SignatureArgs {
    /// Observation CSV written by `extract`.
    #[arg(long)]
    table: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("mode").required(true).args(["dump_rules", "clay"])))]
struct TriangleArgs {
    #[arg(long)]
    dump_rules: bool,
    #[arg(long, requires_all = ["silt", "sand"], allow_negative_numbers = true)]
    clay: Option<f64>,
    #[arg(long, requires = "clay", allow_negative_numbers = true)]
    silt: Option<f64>,
    #[arg(long, requires = "clay", allow_negative_numbers = true)]
    sand: Option<f64>,
}

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| config::io_error(dir, e))
}

fn cmd_generate(args: &GenerateArgs, threads: Option<usize>) -> Result<()> {
    let noise = NoiseModel::preset(&args.preset, args.seed)?;
    let endmembers = match &args.endmembers {
        Some(p) => EndmemberSpectra::read_csv_file(p)?,
        None => EndmemberSpectra::default(),
    };
    create_dir(&args.out)?;
    let rows = synthgen::generate_dataset(&synthgen::default_benchmark(), &endmembers, &noise, &args.out)?;

    let em_path = args.out.join("endmembers.csv");
    let f = std::fs::File::create(&em_path).map_err(|e| config::io_error(&em_path, e))?;
    endmembers.write_csv(std::io::BufWriter::new(f))?;

    let mut cfg = RunConfig::new("generate").path("out", &args.out).path("endmembers", "endmembers.csv");
    cfg.seed = Some(args.seed);
    cfg.threads = threads;
    cfg.noise = Some(NoiseConfig::new(&args.preset, &noise));
    cfg.write_into(&args.out)?;
    println!("{} specimens, manifest {}", rows.len(), args.out.join(MANIFEST_FILE).display());
    Ok(())
}

fn cmd_extract(args: &ExtractArgs, threads: Option<usize>) -> Result<()> {
    let params = NormalizationParams::new(args.kappa)?;
    let roi = Roi::new(args.roi_x, args.roi_y);
    // reject an impossible ROI before touching any cube
    roi.check_fits(synthgen::CUBE_SIDE, synthgen::CUBE_SIDE)?;
    let (train, val) = synthgen::extract_dataset(&args.data, roi, params)?;
    create_dir(&args.out)?;
    write_observations_file(&train, args.out.join("train.csv"))?;
    write_observations_file(&val, args.out.join("validation.csv"))?;

    // carry the generation seed forward when it is known
    let seed = RunConfig::read_from(&args.data).ok().and_then(|c| c.seed);
    let mut cfg = RunConfig::new("extract")
        .path("data", &args.data)
        .path("train", "train.csv")
        .path("validation", "validation.csv");
    cfg.seed = seed;
    cfg.threads = threads;
    cfg.kappa = Some(args.kappa);
    cfg.roi = Some(roi.into());
    cfg.write_into(&args.out)?;
    println!(
        "{} training rows, {} validation rows in {}",
        train.len(),
        val.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_signatures(args: &SignatureArgs, threads: Option<usize>) -> Result<()> {
    let table = read_observations_file(&args.table)?;
    create_dir(&args.out)?;
    let by_class = emit_signatures(&table, SignatureGrouping::TextureClass, args.out.join("signatures_by_class.csv"))?;
    let by_level = emit_signatures(
        &table,
        SignatureGrouping::CompositionLevel,
        args.out.join("signatures_by_composition.csv"),
    )?;
    let mut cfg = RunConfig::new("signatures")
        .path("table", &args.table)
        .path("by_class", "signatures_by_class.csv")
        .path("by_composition", "signatures_by_composition.csv");
    cfg.threads = threads;
    cfg.write_into(&args.out)?;
    println!("{} class signatures, {} composition signatures", by_class.len(), by_level.len());
    Ok(())
}

fn cmd_triangle(args: &TriangleArgs) -> Result<()> {
    if args.dump_rules {
        print!("{}", rule_manifest());
        return Ok(());
    }
    let (Some(clay), Some(silt), Some(sand)) = (args.clay, args.silt, args.sand) else {
        unreachable!("clap enforces the argument group")
    };
    let c = validate_composition(clay, silt, sand)?;
    println!("{}", classify_composition(&c)?.name());
    Ok(())
}

#[cfg(feature = "parallel")]
fn configure_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::InvalidParameter("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn configure_threads(_threads: Option<usize>) -> Result<()> {
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a, cli.threads),
        Command::Extract(a) => cmd_extract(a, cli.threads),
        Command::Evaluate(a) => evaluate::cmd_evaluate(a, cli.threads),
        Command::Signatures(a) => cmd_signatures(a, cli.threads),
        Command::Triangle(a) => cmd_triangle(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Err(e) = configure_threads(cli.threads) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

pub(crate) fn parse_model(s: &str) -> std::result::Result<ModelKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

pub(crate) fn parse_strategy(s: &str) -> std::result::Result<Strategy, String> {
    s.parse::<u8>()
        .ok()
        .and_then(Strategy::from_id)
        .ok_or_else(|| format!("unknown strategy {s:?} (expected 1, 2 or 3)"))
}

pub(crate) fn parse_scope(s: &str) -> std::result::Result<ScalerScope, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum GranularityArg {
    One(Granularity),
    Both,
}

impl GranularityArg {
    pub fn expand(self) -> Vec<Granularity> {
        match self {
            GranularityArg::One(g) => vec![g],
            GranularityArg::Both => vec![Granularity::Block, Granularity::Specimen],
        }
    }
}

pub(crate) fn parse_granularity(s: &str) -> std::result::Result<GranularityArg, String> {
    if s == "both" {
        return Ok(GranularityArg::Both);
    }
    s.parse().map(GranularityArg::One).map_err(|e: Error| e.to_string())
}
