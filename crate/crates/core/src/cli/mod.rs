//! Batch front door: `fit`, `summary`, `outcome`, `contrast`, `mr`,
//! `simulate`.
//!
//! `fit` runs the sampler from a config file and writes a bundle directory
//! (draws, diagnostics, manifest, config copy); the table commands load a
//! bundle and print fixed-width posterior summaries. Exit codes: 0 ok,
//! 2 config error, 3 data error, 4 sampler failure, 5 diagnostics
//! threshold exceeded under `--strict`.

pub mod bundle;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::mrweight::{tau_weighting, wald_cace, BootstrapConfig, TargetStratum};
use crate::posterior::{
    contrast, outcome_means, strata_proportions, summarize, survival_outcome, ContrastSpec,
    EstimandCube, TimeSpec,
};
use crate::sampler::{diagnose, sample};
use crate::simgen::{generate, DesignId, SimDesign};

use bundle::{Bundle, Manifest};
use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "pstrat", version, about = "Principal-stratification analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit the model described by a config file and write a fit bundle.
    Fit(FitArgs),
    /// Posterior strata proportions of a fit bundle.
    Summary(SummaryArgs),
    /// Potential-outcome means (or survival curves) of a fit bundle.
    Outcome(OutcomeArgs),
    /// Nested contrasts of the potential outcomes.
    Contrast(ContrastArgs),
    /// Frequentist principal-score weighting estimates.
    Mr(MrArgs),
    /// Generate a built-in simulation design.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output bundle directory (overrides the config's `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Progress-line period on stderr.
    #[arg(long)]
    pub refresh: Option<usize>,
    /// Also export the draws as CSV.
    #[arg(long)]
    pub csv: bool,
    /// Exit 5 when R-hat exceeds 1.05 or divergences occur.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Args, Debug)]
pub struct SummaryArgs {
    /// Fit bundle directory.
    #[arg(long)]
    pub bundle: PathBuf,
    /// Also write the table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct OutcomeArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Survival time points, comma separated.
    #[arg(long)]
    pub times: Option<String>,
    /// Number of auto-spaced survival time points.
    #[arg(long)]
    pub times_n: Option<usize>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Long-format per-draw export for external plotting.
    #[arg(long)]
    pub draws_csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ContrastArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Axes to difference, e.g. "Z" or "Z,S".
    #[arg(long)]
    pub contrast: String,
    #[arg(long)]
    pub times: Option<String>,
    #[arg(long)]
    pub times_n: Option<usize>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MrArgs {
    /// TOML run configuration (only data and formulas are used).
    #[arg(long)]
    pub config: PathBuf,
    /// Target stratum (00, 01 or 11); all three when omitted.
    #[arg(long)]
    pub stratum: Option<String>,
    #[arg(long, default_value_t = 500)]
    pub replicates: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the one-row-per-stratum CSV here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// One of sim1, sim2, sim3, sim4, flu_analog.
    #[arg(long)]
    pub design: String,
    #[arg(long, default_value_t = 10000)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Data CSV destination.
    #[arg(long)]
    pub out: PathBuf,
    /// Truth-record JSON destination.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Override the complier assignment effect (sim1/sim4).
    #[arg(long)]
    pub effect: Option<f64>,
}

/// Outcome of one command: the stdout payload and the process exit code.
#[derive(Debug)]
pub struct CmdOutput {
    pub stdout: String,
    pub exit_code: i32,
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parse { .. } | Error::Config(_) | Error::Estimand(_) => 2,
        Error::Data(_) | Error::Io(_) => 3,
        Error::Sampler(_) => 4,
    }
}

/// Execute a parsed command, returning the stdout payload.
pub fn execute(command: Command) -> Result<CmdOutput> {
    match command {
        Command::Fit(args) => cmd_fit(args),
        Command::Summary(args) => cmd_summary(args),
        Command::Outcome(args) => cmd_outcome(args),
        Command::Contrast(args) => cmd_contrast(args),
        Command::Mr(args) => cmd_mr(args),
        Command::Simulate(args) => cmd_simulate(args),
    }
}

/// clap + execute + error printing; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(out) => {
            print!("{}", out.stdout);
            out.exit_code
        }
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}

pub fn cmd_fit(args: FitArgs) -> Result<CmdOutput> {
    let mut cfg = RunConfig::from_path(&args.config)?;
    for w in &cfg.strata_warnings {
        eprintln!("warning: {w}");
    }
    if let Some(seed) = args.seed {
        cfg.sampler.seed = seed;
    }
    if let Some(refresh) = args.refresh {
        cfg.sampler.refresh = refresh;
    }
    let out_dir = args
        .out
        .or(cfg.out_dir.clone())
        .ok_or_else(|| Error::config("no output directory: set `out` in the config or --out"))?;

    let data_bytes = std::fs::read(&cfg.data_path).map_err(|e| {
        Error::data(format!("cannot read data '{}': {e}", cfg.data_path.display()))
    })?;
    let data = crate::data::Dataset::from_csv_reader(data_bytes.as_slice())?;
    let model = cfg.build_model(&data)?;

    let draws = sample(&model, &cfg.sampler)?;
    let diagnostics = diagnose(&draws)?;

    let data_path_abs = cfg
        .data_path
        .canonicalize()
        .unwrap_or_else(|_| cfg.data_path.clone());
    let manifest = Manifest::compute(
        &cfg.source,
        &data_bytes,
        &data_path_abs,
        cfg.sampler.seed,
        cfg.sampler.chains,
        cfg.sampler.warmup,
        cfg.sampler.iter,
    );
    Bundle::write(&out_dir, &manifest, &cfg.source, &draws, &diagnostics, args.csv)?;

    let flagged = diagnostics.flagged();
    let mut stdout = format!(
        "fit written to {}\n{} chains x {} draws; max R-hat {}; {} divergences\nmanifest {}\n",
        out_dir.display(),
        draws.n_chains(),
        draws.draws_per_chain,
        diagnostics.max_rhat().map_or("--".to_string(), |r| format!("{r:.3}")),
        diagnostics.divergences,
        manifest.manifest_hash,
    );
    if flagged {
        stdout.push_str("warning: diagnostics flagged (R-hat > 1.05 or divergences)\n");
    }
    Ok(CmdOutput { stdout, exit_code: if flagged && args.strict { 5 } else { 0 } })
}

/// Rebuild the model a bundle was fitted with.
fn rebuild(bundle: &Bundle) -> Result<(RunConfig, crate::model::PsModel)> {
    let text = bundle.config_text()?;
    let mut cfg = RunConfig::from_toml_str(&text, &bundle.dir)?;
    cfg.data_path = bundle.manifest.data_path.clone();
    let data = bundle.load_data()?;
    let model = cfg.build_model(&data)?;
    Ok((cfg, model))
}

fn write_stamped(path: &PathBuf, hash: &str, body: &str) -> Result<()> {
    std::fs::write(path, format!("# manifest: {hash}\n{body}"))?;
    Ok(())
}

pub fn cmd_summary(args: SummaryArgs) -> Result<CmdOutput> {
    let bundle = Bundle::open(&args.bundle)?;
    let (_, model) = rebuild(&bundle)?;
    let draws = bundle.draws()?;
    let table = summarize(&strata_proportions(&draws, &model)?);
    if let Some(csv) = &args.csv {
        write_stamped(csv, &bundle.manifest.manifest_hash, &table.to_csv())?;
    }
    Ok(CmdOutput { stdout: table.render(), exit_code: 0 })
}

/// The outcome cube of a bundle, honoring CLI/config time grids for
/// survival families.
fn outcome_cube(
    bundle: &Bundle,
    times: &Option<String>,
    times_n: &Option<usize>,
) -> Result<EstimandCube> {
    let (cfg, model) = rebuild(bundle)?;
    let draws = bundle.draws()?;
    if model.family.is_survival() {
        let spec = if let Some(text) = times {
            let points: std::result::Result<Vec<f64>, _> =
                text.split(',').map(|t| t.trim().parse::<f64>()).collect();
            TimeSpec::Points(points.map_err(|_| Error::config("bad --times list"))?)
        } else if let Some(m) = times_n {
            TimeSpec::Count(*m)
        } else {
            cfg.survival_time_points.clone().unwrap_or(TimeSpec::Count(10))
        };
        survival_outcome(&draws, &model, &spec)
    } else {
        outcome_means(&draws, &model)
    }
}

pub fn cmd_outcome(args: OutcomeArgs) -> Result<CmdOutput> {
    let bundle = Bundle::open(&args.bundle)?;
    let cube = outcome_cube(&bundle, &args.times, &args.times_n)?;
    let table = summarize(&cube);
    if let Some(csv) = &args.csv {
        write_stamped(csv, &bundle.manifest.manifest_hash, &table.to_csv())?;
    }
    if let Some(path) = &args.draws_csv {
        write_stamped(path, &bundle.manifest.manifest_hash, &cube.to_long_csv())?;
    }
    Ok(CmdOutput { stdout: table.render(), exit_code: 0 })
}

pub fn cmd_contrast(args: ContrastArgs) -> Result<CmdOutput> {
    let bundle = Bundle::open(&args.bundle)?;
    let cube = outcome_cube(&bundle, &args.times, &args.times_n)?;
    let spec = ContrastSpec::parse(&args.contrast)?;
    let diffed = contrast(&cube, &spec)?;
    let table = summarize(&diffed);
    if let Some(csv) = &args.csv {
        write_stamped(csv, &bundle.manifest.manifest_hash, &table.to_csv())?;
    }
    Ok(CmdOutput { stdout: table.render(), exit_code: 0 })
}

pub fn cmd_mr(args: MrArgs) -> Result<CmdOutput> {
    let cfg = RunConfig::from_path(&args.config)?;
    let data_bytes = std::fs::read(&cfg.data_path).map_err(|e| {
        Error::data(format!("cannot read data '{}': {e}", cfg.data_path.display()))
    })?;
    let data = crate::data::Dataset::from_csv_reader(data_bytes.as_slice())?;
    let y_var = cfg.y_formula.lhs_vars[0].clone();
    let z_var = cfg.s_formula.lhs_vars[0].clone();
    let d_var = cfg.s_formula.lhs_vars[1].clone();

    let strata: Vec<TargetStratum> = match &args.stratum {
        Some(text) => vec![TargetStratum::parse(text)?],
        None => vec![
            TargetStratum::NeverTaker,
            TargetStratum::Complier,
            TargetStratum::AlwaysTaker,
        ],
    };
    let boot = BootstrapConfig {
        replicates: args.replicates,
        seed: args.seed.unwrap_or(cfg.sampler.seed),
    };

    let mut csv = String::from("stratum,estimate,ci_low,ci_high,ess_z0,ess_z1\n");
    for stratum in strata {
        let est = tau_weighting(&data, &cfg.s_formula, &y_var, stratum, &boot)?;
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            est.stratum.label(),
            est.estimate,
            est.ci_low,
            est.ci_high,
            est.ess[0],
            est.ess[1]
        ));
    }
    let wald = wald_cace(&data, &z_var, &d_var, &y_var)?;
    let stdout = format!("{csv}wald_cace,{wald}\n");
    if let Some(path) = &args.out {
        let hash = bundle::hex_digest(
            format!("{}{}", cfg.source, bundle::hex_digest(&data_bytes)).as_bytes(),
        );
        write_stamped(path, &hash, &csv)?;
    }
    Ok(CmdOutput { stdout, exit_code: 0 })
}

pub fn cmd_simulate(args: SimulateArgs) -> Result<CmdOutput> {
    let id = DesignId::parse(&args.design)?;
    let mut design = SimDesign::new(id, args.n, args.seed);
    design.complier_effect = args.effect;
    let (data, truth) = generate(&design)?;
    std::fs::write(&args.out, data.to_csv_string())?;
    if let Some(path) = &args.truth {
        std::fs::write(path, truth.to_json())?;
    }
    Ok(CmdOutput {
        stdout: format!(
            "wrote {} rows of design {} (seed {}) to {}\n",
            data.n_rows(),
            id.name(),
            args.seed,
            args.out.display()
        ),
        exit_code: 0,
    })
}
