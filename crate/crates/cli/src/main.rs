use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use coldscat::config::{Format, RunConfig};
use coldscat::report::{emit, Report};
use coldscat::sweep::{run, Options, Severity, SweepKind};
use coldscat_core::angmom::WignerCache;
use coldscat_core::monomer::CaseBState;
use coldscat_core::threshold::{critical_field, extrapolate_k0_from_high_t, ThresholdFit};
use serde_json::json;

/// Cold atom-molecule collisions in a magnetic field.
#[derive(Parser)]
#[command(version, args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    sweep: SweepArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "field")]
    sweep: SweepKind,
    /// Sum over every total projection M rather than only M = M_J.
    #[arg(long)]
    all_m: bool,
    /// Distorted-wave Born approximation instead of close coupling.
    #[arg(long)]
    dwba: bool,
    /// Worker threads (default: one per core).
    #[arg(long)]
    workers: Option<usize>,
    /// S-matrix cache directory.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Output formats; overrides the config.
    #[arg(long, value_enum, value_delimiter = ',')]
    format: Vec<Format>,
    /// Output directory; overrides the config.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Write a gnuplot script next to the CSV.
    #[arg(long)]
    plot: bool,
    /// Print the JSON schema of the config file and exit.
    #[arg(long)]
    print_schema: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Field where the release energy of a transition reaches the barrier E0.
    CriticalField {
        #[arg(long, value_parser = parse_state, default_value = "0,1,1")]
        initial: CaseBState,
        #[arg(long = "final", value_parser = parse_state, default_value = "0,1,-1")]
        final_state: CaseBState,
        /// Barrier height, K.
        #[arg(long, default_value_t = 0.59)]
        e0: f64,
        /// Upper end of the search, G.
        #[arg(long, default_value_t = 1e5)]
        b_max: f64,
        /// Take monomer constants from this config.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// K0 from a rate at high collision energy, pulled back along the threshold law.
    Extrapolate {
        /// Rate constant, cm³/s.
        #[arg(long)]
        rate: f64,
        /// Energy of that rate, K.
        #[arg(long)]
        energy: f64,
        #[arg(long, default_value_t = 0.59)]
        e0: f64,
        #[arg(long, default_value_t = 2)]
        l_f: u32,
    },
}

fn parse_state(s: &str) -> Result<CaseBState, String> {
    let v: Vec<i32> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("expected N,J,M_J, got {s:?}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [n, j, m_j] => {
            let st = CaseBState::new(n, j, m_j);
            if st.is_valid() {
                Ok(st)
            } else {
                Err(format!("{st} is not a valid state"))
            }
        }
        _ => Err(format!("expected N,J,M_J, got {s:?}")),
    }
}

fn load(path: &Option<PathBuf>) -> anyhow::Result<RunConfig> {
    match path {
        Some(p) => Ok(RunConfig::load(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn sweep(args: SweepArgs) -> anyhow::Result<ExitCode> {
    if args.print_schema {
        println!("{}", RunConfig::schema());
        return Ok(ExitCode::SUCCESS);
    }
    let mut config = load(&args.config)?;
    if let Some(dir) = args.output {
        config.output.directory = dir;
    }
    if !args.format.is_empty() {
        config.output.formats = args.format;
    }
    config.output.plot |= args.plot;
    let options = Options { all_m: args.all_m, dwba: args.dwba, workers: args.workers, cache: args.cache };
    let result = run(config.clone(), args.sweep, &options)?;
    let report = Report::new(&config, &result, args.dwba);
    let written = emit(&report, &config.output.directory, &config.output.formats, config.output.plot)
        .context("writing report")?;
    for path in written {
        println!("{}", path.display());
    }
    let errors = result.records.iter().filter(|r| r.severity == Severity::Error).count();
    let warnings = result.records.len() - errors;
    if errors + warnings > 0 {
        eprintln!("{errors} failed points, {warnings} warnings (see records)");
    }
    Ok(if errors > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        None => sweep(cli.sweep),
        Some(Command::CriticalField { initial, final_state, e0, b_max, config }) => (|| {
            let params = load(&config)?.monomer_params();
            let mut cache = WignerCache::new();
            let b = critical_field(&params, initial, final_state, e0, b_max, &mut cache)?;
            let linear = ThresholdFit::s_to_d(1.0, e0, initial.m_j - final_state.m_j, &params).linear_critical_field();
            let out = json!({
                "initial": initial.to_string(),
                "final": final_state.to_string(),
                "E0_K": e0,
                "critical_field_gauss": b,
                "linear_critical_field_gauss": linear,
                "validity": format!("E + ΔE_B <= {e0} K"),
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(ExitCode::SUCCESS)
        })(),
        Some(Command::Extrapolate { rate, energy, e0, l_f }) => (|| {
            anyhow::ensure!(energy >= e0 && e0 > 0.0 && rate > 0.0, "need rate > 0 and energy >= e0 > 0");
            let k0 = extrapolate_k0_from_high_t(rate, energy, e0, l_f);
            let out = json!({ "K0_cm3s": k0, "E0_K": e0, "L_f": l_f, "from_rate_cm3s": rate, "from_energy_K": energy });
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(ExitCode::SUCCESS)
        })(),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
