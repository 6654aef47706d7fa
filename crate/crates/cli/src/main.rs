use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Arg, ArgMatches, Args, Command, FromArgMatches, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hybridbf::cpps::{realize, write_triplets, Flow};
use hybridbf::harness::config::KEYS;
use hybridbf::harness::output::{bounds_to_csv, bounds_to_json, results_to_csv, results_to_json};
use hybridbf::harness::{
    bound_table, run_experiment, summarize, sweep, ExperimentConfig, Format, SweepAxis,
};
use hybridbf::hybrid::{factorize_ordered, AntennaOrder, DigitalStack};
use hybridbf::linalg::{complex_gaussian_matrix, relative_error};
use hybridbf::{ConfigError, Error};

/// Hybrid analog-digital beamforming experiments.
#[derive(Debug, Parser)]
#[command(name = "hybridbf", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    global: Global,
}

#[derive(Debug, Args)]
struct Global {
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo trials (overrides the config).
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long, global = true, default_value = "csv", value_parser = parse_format)]
    format: Format,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Run the Monte Carlo experiment described by a config file.
    Simulate { config: PathBuf },
    /// Repeat the experiment over values of one parameter with shared seeds.
    Sweep {
        config: PathBuf,
        /// snr, n_rf, n_antennas, k_total or cpps_pairs (0 = off).
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        values: Vec<f64>,
    },
    /// Average-rate bounds for every configured SNR.
    Bounds { config: PathBuf },
    /// Factorize a random precoder stack and print diagnostics.
    Decompose {
        #[arg(long)]
        n: usize,
        /// Users per sub-carrier.
        #[arg(long)]
        k: usize,
        #[arg(long)]
        nf: usize,
        /// Fixed-phase bank precision.
        #[arg(long)]
        cpps: Option<usize>,
        #[arg(long, default_value = "asym")]
        flow: Flow,
        /// Symmetric per-pair cap.
        #[arg(long)]
        cap: Option<usize>,
        /// Antennas holding the diagonal block: natural or sorted.
        #[arg(long, default_value = "natural")]
        antenna_order: AntennaOrder,
        /// Write the switch triplets of the fixed-phase realization here.
        #[arg(long)]
        switches: Option<PathBuf>,
    },
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse()
}

/// Config keys not already covered by a dedicated flag.
fn override_keys() -> impl Iterator<Item = &'static str> {
    KEYS.iter().copied().filter(|k| !matches!(*k, "seed" | "trials"))
}

fn command() -> Command {
    let mut cmd = <Cli as clap::CommandFactory>::command();
    for key in override_keys() {
        cmd = cmd.arg(
            Arg::new(key)
                .long(key)
                .global(true)
                .value_name("VALUE")
                .allow_hyphen_values(true)
                .help(format!("Override config key {key}")),
        );
    }
    cmd
}

/// Config-key overrides given on the command line. `decompose` takes no
/// config and reuses some key names for its own typed flags.
fn overrides(m: &ArgMatches) -> Vec<(&'static str, String)> {
    let sub = match m.subcommand() {
        Some(("decompose", _)) => return Vec::new(),
        Some((_, s)) => Some(s),
        None => None,
    };
    let text = |m: &ArgMatches, k: &str| m.try_get_one::<String>(k).ok().flatten().cloned();
    override_keys()
        .filter_map(|k| {
            sub.and_then(|s| text(s, k))
                .or_else(|| text(m, k))
                .map(|v| (k, v))
        })
        .collect()
}

fn load_config(
    path: &Path,
    global: &Global,
    sets: &[(&'static str, String)],
) -> Result<ExperimentConfig, Error> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut cfg = ExperimentConfig::from_text(&text)?;
    for (k, v) in sets {
        cfg.set(k, v)?;
    }
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = global.trials {
        cfg.trials = trials;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_output(
    out: Option<&Path>,
    write: impl FnOnce(&mut dyn Write) -> Result<(), String>,
) -> Result<(), Error> {
    let to_err = |path: &Path, message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    match out {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|source| Error::Io {
                path: path.to_path_buf(),
                source,
            })?;
            let mut w = std::io::BufWriter::new(file);
            write(&mut w).map_err(|m| to_err(path, m))?;
            w.flush().map_err(|source| Error::Io {
                path: path.to_path_buf(),
                source,
            })
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            write(&mut w).map_err(|m| to_err(Path::new("<stdout>"), m))
        }
    }
}

fn emit_rows(rows: &[hybridbf::harness::ResultRow], global: &Global) -> Result<(), Error> {
    write_output(global.out.as_deref(), |w| match global.format {
        Format::Csv => results_to_csv(rows, w).map_err(|e| e.to_string()),
        Format::Json => results_to_json(rows, &mut *w)
            .and_then(|_| writeln!(w).map_err(serde_json::Error::io))
            .map_err(|e| e.to_string()),
    })?;
    for s in summarize(rows) {
        let point = s.sweep_value.map(|v| format!("{v} ")).unwrap_or_default();
        let bound = s.bound.map(|b| format!(" bound {b:.3}")).unwrap_or_default();
        eprintln!(
            "{point}{} {} dB: mean {:.3} +- {:.3} bits/s/Hz over {} trials, {:.2} users/sub-carrier{bound}",
            s.mode, s.snr_db, s.mean_rate, s.std_err, s.trials, s.mean_served
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn decompose(
    n: usize,
    k: usize,
    nf: usize,
    cpps: Option<usize>,
    flow: Flow,
    cap: Option<usize>,
    order: AntennaOrder,
    switches: Option<&Path>,
    global: &Global,
) -> Result<(), Error> {
    if n == 0 || k == 0 || nf == 0 {
        return Err(ConfigError::new("decompose", "--n, --k and --nf must be positive").into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(global.seed.unwrap_or(1));
    let blocks: Vec<_> = (0..nf)
        .map(|_| complex_gaussian_matrix(&mut rng, n, k, 1.0))
        .collect();
    let stack = DigitalStack::new(&blocks)?;
    let fact = factorize_ordered(&stack, stack.default_tol(), order)?;
    let rt = fact.rank();
    let max_err = (0..nf)
        .map(|i| relative_error(&fact.precoder(i), &stack.block(i)))
        .fold(0.0, f64::max);
    let mut report = serde_json::Map::new();
    report.insert("n".into(), n.into());
    report.insert("k".into(), k.into());
    report.insert("nf".into(), nf.into());
    report.insert("rank".into(), rt.into());
    report.insert("pivoted".into(), fact.pivoted.into());
    report.insert("pair_count".into(), fact.structural_nonzeros().into());
    report.insert("pair_count_limit".into(), (rt * (n - rt + 1)).into());
    report.insert("max_reconstruction_error".into(), max_err.into());
    if let Some(p) = cpps {
        let real = realize(&fact.analog, p, flow, cap)?;
        report.insert("cpps_precision".into(), p.into());
        report.insert("cpps_flow".into(), flow.name().into());
        report.insert("cpps_pairs".into(), real.pair_count().into());
        report.insert("cpps_closed_switches".into(), real.switches.iter().map(|s| s.closed_count()).sum::<usize>().into());
        report.insert("cpps_max_error".into(), real.realized.max_component_error().into());
        report.insert(
            "cpps_max_row_degree".into(),
            real.switches.iter().map(|s| s.max_row_degree()).max().unwrap_or(0).into(),
        );
        report.insert(
            "cpps_max_column_degree".into(),
            real.switches.iter().map(|s| s.max_column_degree()).max().unwrap_or(0).into(),
        );
        if let Some(path) = switches {
            let io = |source| Error::Io {
                path: path.to_path_buf(),
                source,
            };
            let file = std::fs::File::create(path).map_err(io)?;
            let mut w = std::io::BufWriter::new(file);
            write_triplets(&real.switches, &mut w).map_err(io)?;
            w.flush().map_err(io)?;
        }
    } else if switches.is_some() {
        return Err(ConfigError::new("switches", "needs --cpps").into());
    }
    write_output(global.out.as_deref(), |w| {
        let res = match global.format {
            Format::Json => serde_json::to_writer_pretty(&mut *w, &report)
                .map_err(|e| e.to_string())
                .and_then(|_| writeln!(w).map_err(|e| e.to_string())),
            Format::Csv => report.iter().try_for_each(|(key, v)| {
                writeln!(w, "{key}: {v}").map_err(|e| e.to_string())
            }),
        };
        res
    })
}

fn run(cli: Cli, sets: &[(&'static str, String)]) -> Result<(), Error> {
    let g = &cli.global;
    match &cli.command {
        Cmd::Simulate { config } => {
            let cfg = load_config(config, g, sets)?;
            emit_rows(&run_experiment(&cfg)?, g)
        }
        Cmd::Sweep {
            config,
            axis,
            values,
        } => {
            let axis: SweepAxis = axis.parse().map_err(|e| ConfigError::new("axis", e))?;
            let cfg = load_config(config, g, sets)?;
            emit_rows(&sweep(&cfg, axis, values)?, g)
        }
        Cmd::Bounds { config } => {
            let cfg = load_config(config, g, sets)?;
            let table = bound_table(&cfg)?;
            write_output(g.out.as_deref(), |w| match g.format {
                Format::Csv => bounds_to_csv(&table, w).map_err(|e| e.to_string()),
                Format::Json => bounds_to_json(&table, &mut *w)
                    .map_err(|e| e.to_string())
                    .and_then(|_| writeln!(w).map_err(|e| e.to_string())),
            })
        }
        Cmd::Decompose {
            n,
            k,
            nf,
            cpps,
            flow,
            cap,
            antenna_order,
            switches,
        } => decompose(*n, *k, *nf, *cpps, *flow, *cap, *antenna_order, switches.as_deref(), g),
    }
}

fn main() -> ExitCode {
    let matches = command().get_matches();
    let sets = overrides(&matches);
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli, &sets) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
