use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use qnclab::bounds::{
    compare_loads, comparison_csv, qnc_load_bound, ratios_strictly_decreasing, KappaMode, LoadBound, LoadBoundInputs,
    SearchGrid,
};
use qnclab::concordance::render_concordance;
use qnclab::decode::{ist_sparse_decode, median_of_means_decode, DecoderReport, IstParams, MedianDecoderParams};
use qnclab::harness::run::{idealized_packets, stream};
use qnclab::harness::{
    emit, run_trials, trial_network, trial_seed, ExperimentConfig, ExperimentRecord, Format, Scheme,
};
use qnclab::network::NetworkGraph;
use qnclab::qnc::{
    assemble_measurement, draw_coefficients, encode_round, idealized_matrix, select_forwarders, Forwarding,
    MeasurementSystem,
};
use qnclab::rng::split_seed;
use qnclab::sources::{sample_messages, Basis, MessageEnsemble, Transform};
use qnclab::{Error, Result};

const EXIT_FAILURE: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_ASSERT: u8 = 3;

#[derive(Parser)]
#[command(name = "qnclab", version, about = "Quantized network coding experiments")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo trials.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Output file or directory; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Exit with status 3 when the run misses its target.
    #[arg(long = "assert", global = true)]
    check: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one network and one message ensemble to a directory.
    Generate(Overrides),
    /// Run one configuration and print its summary row.
    Simulate(RunArgs),
    /// Run one configuration per value of a single field.
    Sweep(SweepArgs),
    /// Analytic load table for a list of network sizes.
    Bounds(BoundsArgs),
    /// Run the forwarding baseline and network coding on the same settings.
    Compare(RunArgs),
    /// Decode an exported measurement system.
    Decode(DecodeArgs),
    /// Print the model-to-code concordance table.
    Concordance,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Csv,
    Jsonl,
}

impl From<OutputFormat> for Format {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Csv => Format::Csv,
            OutputFormat::Jsonl => Format::JsonLines,
        }
    }
}

/// Overrides applied on top of `--config` (or the built-in example).
#[derive(Args, Clone, Default)]
struct Overrides {
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    edges: Option<usize>,
    #[arg(long)]
    capacity: Option<f64>,
    /// 1-based gateway id.
    #[arg(long)]
    gateway: Option<usize>,
    #[arg(long)]
    require_connected: bool,
    #[arg(long)]
    sparsity: Option<usize>,
    #[arg(long)]
    q_max: Option<f64>,
    #[arg(long)]
    transform: Option<String>,
    #[arg(long)]
    transform_seed: Option<u64>,
    #[arg(long)]
    coefficients: Option<String>,
    #[arg(long)]
    packet_length: Option<u32>,
    #[arg(long)]
    target_distortion: Option<f64>,
    #[arg(long)]
    decoder: Option<String>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    m1: Option<usize>,
    #[arg(long)]
    m2: Option<usize>,
    #[arg(long)]
    measurements: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    q_prime_max: Option<f64>,
    /// Bernoulli forwarding probability.
    #[arg(long, conflicts_with = "forward_count")]
    forward_prob: Option<f64>,
    /// Exact number of forwarding nodes.
    #[arg(long)]
    forward_count: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// Report wall_ms = 0 so output is byte-identical across runs.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long, value_enum, default_value = "csv")]
    format: OutputFormat,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Field to vary, named like its flag (e.g. `nodes`, `target-distortion`).
    #[arg(long)]
    param: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
    #[arg(long, value_enum, default_value = "csv")]
    format: OutputFormat,
}

#[derive(Args)]
struct BoundsArgs {
    /// Network sizes.
    #[arg(long, value_delimiter = ',', default_values_t = [100, 1_000, 10_000, 100_000, 1_000_000])]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    sparsity: usize,
    #[arg(long, default_value_t = 1.0)]
    q_max: f64,
    #[arg(long, default_value_t = 1.0)]
    q_prime_max: f64,
    /// Fixed kappa^2 for every size.
    #[arg(long, default_value_t = 4.0, conflicts_with = "edges_per_node")]
    kappa_sq: f64,
    /// Derive kappa^2 from a graph with this many edges per node instead.
    #[arg(long)]
    edges_per_node: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    capacity: f64,
    #[arg(long, default_value_t = 0.3)]
    target_distortion: f64,
    /// Print the grid-minimized load instead of the comparison table.
    #[arg(long)]
    grid: bool,
}

#[derive(Args)]
struct DecodeArgs {
    /// Measurement system CSV.
    #[arg(long)]
    input: PathBuf,
    /// Message ensemble CSV used to score the estimate.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    q_max: f64,
    #[arg(long)]
    m1: Option<usize>,
    #[arg(long)]
    m2: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    /// Allow an even block count.
    #[arg(long)]
    no_strict_median: bool,
    /// Use soft thresholding (identity transform) instead of the median decoder.
    #[arg(long)]
    ist: bool,
}

enum Failure {
    Error(Error),
    Assertion(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Error(e.into())
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Assertion(message)) => {
            eprintln!("assertion failed: {message}");
            ExitCode::from(EXIT_ASSERT)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_configuration() {
                EXIT_INVALID
            } else {
                EXIT_FAILURE
            })
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Generate(overrides) => generate(cli, overrides),
        Command::Simulate(args) => {
            let config = load_config(cli, &args.overrides)?;
            let record = run_trials(&config)?;
            write_records(cli, std::slice::from_ref(&record), args.format.into())?;
            check_target(cli, &[record])
        }
        Command::Sweep(args) => sweep(cli, args),
        Command::Bounds(args) => bounds(cli, args),
        Command::Compare(args) => compare(cli, args),
        Command::Decode(args) => decode(cli, args),
        Command::Concordance => {
            let table = render_concordance()?;
            write_text(cli.out.as_deref(), &table)?;
            Ok(())
        }
    }
}

fn invalid(message: impl Into<String>) -> Error {
    Error::InvalidConfiguration(message.into())
}

fn load_config(cli: &Cli, o: &Overrides) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let scheme = o.scheme.as_deref().unwrap_or("qpf").parse()?;
            ExperimentConfig::example(scheme)
        }
    };
    if let Some(s) = &o.scheme {
        config.scheme = s.parse()?;
    }
    if let Some(v) = cli.seed {
        config.seed = v;
    }
    if let Some(v) = cli.trials {
        config.trials = v;
    }
    if let Some(v) = o.nodes {
        config.network.nodes = v;
    }
    if let Some(v) = o.edges {
        config.network.edges = v;
    }
    if let Some(v) = o.capacity {
        config.network.capacity = v;
    }
    if o.gateway.is_some() {
        config.network.gateway = o.gateway;
    }
    config.network.require_connected |= o.require_connected;
    if let Some(v) = o.sparsity {
        config.source.sparsity = v;
    }
    if let Some(v) = o.q_max {
        config.source.q_max = v;
    }
    if let Some(v) = &o.transform {
        config.source.transform = v.parse()?;
    }
    if let Some(v) = o.transform_seed {
        config.source.transform_seed = v;
    }
    if let Some(v) = &o.coefficients {
        config.source.coefficients = v.parse()?;
    }
    if let Some(v) = o.target_distortion {
        config.target_distortion = Some(v);
        if o.packet_length.is_none() {
            config.quantizer.packet_length = None;
        }
    }
    if o.packet_length.is_some() {
        config.quantizer.packet_length = o.packet_length;
    }
    if let Some(v) = &o.decoder {
        config.qnc.decoder = v.parse()?;
    }
    if o.kappa.is_some() {
        config.qnc.kappa = o.kappa;
    }
    if o.m1.is_some() {
        config.qnc.m1 = o.m1;
    }
    if o.m2.is_some() {
        config.qnc.m2 = o.m2;
    }
    if o.measurements.is_some() {
        config.qnc.measurements = o.measurements;
    }
    if let Some(v) = o.epsilon {
        config.qnc.epsilon = v;
    }
    if let Some(v) = o.gamma {
        config.qnc.gamma = v;
    }
    if o.q_prime_max.is_some() {
        config.qnc.q_prime_max = o.q_prime_max;
    }
    if let Some(p) = o.forward_prob {
        config.qnc.forwarding = Forwarding::Bernoulli { p };
    }
    if let Some(m) = o.forward_count {
        config.qnc.forwarding = Forwarding::Exact { m };
    }
    if let Some(v) = o.workers {
        config.workers = v;
    }
    if o.no_timing {
        config.timing = false;
    }
    if let Some(out) = &cli.out {
        config.output = Some(out.clone());
    }
    config.validate()?;
    Ok(config)
}

fn parse_value<T: std::str::FromStr>(param: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| invalid(format!("`{value}` is not a valid value for {param}")))
}

fn set_field(config: &mut ExperimentConfig, param: &str, value: &str) -> Result<()> {
    match param {
        "nodes" => config.network.nodes = parse_value(param, value)?,
        "edges" => config.network.edges = parse_value(param, value)?,
        "capacity" => config.network.capacity = parse_value(param, value)?,
        "sparsity" => config.source.sparsity = parse_value(param, value)?,
        "q-max" => config.source.q_max = parse_value(param, value)?,
        "packet-length" => config.quantizer.packet_length = Some(parse_value(param, value)?),
        "target-distortion" => {
            config.target_distortion = Some(parse_value(param, value)?);
            config.quantizer.packet_length = None;
        }
        "kappa" => config.qnc.kappa = Some(parse_value(param, value)?),
        "m1" => config.qnc.m1 = Some(parse_value(param, value)?),
        "m2" => config.qnc.m2 = Some(parse_value(param, value)?),
        "measurements" => config.qnc.measurements = Some(parse_value(param, value)?),
        "epsilon" => config.qnc.epsilon = parse_value(param, value)?,
        "gamma" => config.qnc.gamma = parse_value(param, value)?,
        "forward-prob" => {
            config.qnc.forwarding = Forwarding::Bernoulli {
                p: parse_value(param, value)?,
            }
        }
        "forward-count" => {
            config.qnc.forwarding = Forwarding::Exact {
                m: parse_value(param, value)?,
            }
        }
        "trials" => config.trials = parse_value(param, value)?,
        "seed" => config.seed = parse_value(param, value)?,
        other => return Err(invalid(format!("cannot sweep over `{other}`"))),
    }
    Ok(())
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            Box::new(BufWriter::new(File::create(p)?))
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    let mut out = open_output(path)?;
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn write_records(cli: &Cli, records: &[ExperimentRecord], format: Format) -> Result<()> {
    emit(records, format, open_output(cli.out.as_deref())?)
}

fn check_target(cli: &Cli, records: &[ExperimentRecord]) -> Outcome {
    if !cli.check {
        return Ok(());
    }
    for r in records {
        let target = r
            .config
            .target_distortion
            .ok_or_else(|| invalid("--assert needs target_distortion"))?;
        if r.distortion_max > target {
            return Err(Failure::Assertion(format!(
                "{} run: max per-node mean error {} exceeds {target}",
                r.config.scheme, r.distortion_max
            )));
        }
    }
    Ok(())
}

fn generate(cli: &Cli, overrides: &Overrides) -> Outcome {
    let config = load_config(cli, overrides)?;
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    let seed = trial_seed(config.seed, 0);
    let graph = trial_network(&config, seed)?;
    let basis = Basis::new(
        config.network.nodes,
        Transform::new(config.source.transform, config.source.transform_seed),
    );
    let ensemble = sample_messages(
        config.source.sparsity,
        config.source.q_max,
        &basis,
        config.source.coefficients,
        split_seed(seed, stream::MESSAGES),
    )?;
    graph.write_text(BufWriter::new(File::create(dir.join("network.txt"))?))?;
    ensemble.write_csv(BufWriter::new(File::create(dir.join("messages.csv"))?))?;
    std::fs::write(dir.join("config.toml"), config.to_toml_string())?;
    if config.scheme != Scheme::Qpf {
        let system = measurement_system(&config, &graph, &ensemble, seed)?;
        system.write_csv(BufWriter::new(File::create(dir.join("measurement.csv"))?))?;
    }
    Ok(())
}

/// Trial-0 measurement system, built the way `simulate` builds it.
fn measurement_system(
    config: &ExperimentConfig,
    graph: &NetworkGraph,
    ensemble: &MessageEnsemble,
    seed: u64,
) -> Result<MeasurementSystem> {
    let quantizer = config.quantizer_spec()?;
    if config.scheme == Scheme::QncIdealized {
        let rows = config.idealized_rows()?;
        let psi = idealized_matrix(
            rows,
            config.network.nodes,
            config.kappa(),
            split_seed(seed, stream::MATRIX),
        )?;
        let z = idealized_packets(&psi, &ensemble.x, quantizer.step(), split_seed(seed, stream::NOISE));
        let n_eff = z
            .iter()
            .enumerate()
            .map(|(i, z)| z - psi.row(i).iter().zip(&ensemble.x).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        return Ok(MeasurementSystem {
            n_eff,
            psi,
            z,
            row_source: vec![None; rows],
            clamped: vec![false; rows],
        });
    }
    let coeffs = draw_coefficients(graph, config.kappa(), split_seed(seed, stream::COEFFICIENTS));
    let round = encode_round(graph, &ensemble.x, &coeffs, &quantizer)?;
    let forwarders = select_forwarders(
        graph.node_count(),
        config.qnc.forwarding,
        split_seed(seed, stream::FORWARDERS),
    )?;
    Ok(assemble_measurement(graph, &coeffs, &forwarders, &round))
}

fn sweep(cli: &Cli, args: &SweepArgs) -> Outcome {
    let base = load_config(cli, &args.overrides)?;
    let mut records = Vec::with_capacity(args.values.len());
    for value in &args.values {
        let mut config = base.clone();
        set_field(&mut config, &args.param, value)?;
        config.validate()?;
        records.push(run_trials(&config)?);
    }
    write_records(cli, &records, args.format.into())?;
    check_target(cli, &records)
}

fn compare(cli: &Cli, args: &RunArgs) -> Outcome {
    let base = load_config(cli, &args.overrides)?;
    let mut baseline = base.clone();
    baseline.scheme = Scheme::Qpf;
    let mut coded = base;
    if coded.scheme == Scheme::Qpf {
        coded.scheme = Scheme::QncNetwork;
    }
    coded.validate()?;
    let records = vec![run_trials(&baseline)?, run_trials(&coded)?];
    write_records(cli, &records, args.format.into())?;
    check_target(cli, &records)
}

fn bounds(cli: &Cli, args: &BoundsArgs) -> Outcome {
    let shared = LoadBoundInputs {
        n: args.sizes.first().copied().unwrap_or(2),
        k: args.sparsity,
        q_max: args.q_max,
        q_prime_max: args.q_prime_max,
        kappa_sq: args.kappa_sq,
        capacity: args.capacity,
        target_distortion: args.target_distortion,
    };
    let kappa = match args.edges_per_node {
        Some(edges_per_node) => KappaMode::FromGraph { edges_per_node },
        None => KappaMode::Fixed {
            kappa_sq: args.kappa_sq,
        },
    };
    if args.grid {
        let mut text = String::from("n,kappa_sq,status,load,epsilon,gamma,packet_length\n");
        for &n in &args.sizes {
            let inputs = LoadBoundInputs {
                n,
                kappa_sq: kappa.kappa_sq(n),
                ..shared
            };
            let line = match qnc_load_bound(&inputs, &SearchGrid::default_for(&inputs))? {
                LoadBound::Feasible {
                    load,
                    epsilon,
                    gamma,
                    packet_length,
                } => format!(
                    "{n},{:.16e},feasible,{load:.16e},{epsilon:.16e},{gamma:.16e},{packet_length}\n",
                    inputs.kappa_sq
                ),
                LoadBound::Infeasible => format!("{n},{:.16e},infeasible,,,,\n", inputs.kappa_sq),
            };
            text.push_str(&line);
        }
        write_text(cli.out.as_deref(), &text)?;
        return Ok(());
    }
    let rows = compare_loads(&args.sizes, &shared, kappa)?;
    write_text(cli.out.as_deref(), &comparison_csv(&rows))?;
    if cli.check && !ratios_strictly_decreasing(&rows) {
        return Err(Failure::Assertion("load ratio is not strictly decreasing in n".into()));
    }
    Ok(())
}

fn decode(cli: &Cli, args: &DecodeArgs) -> Outcome {
    let system = MeasurementSystem::read_csv(BufReader::new(File::open(&args.input)?))?;
    let truth = match &args.truth {
        Some(path) => Some(MessageEnsemble::read_csv(BufReader::new(File::open(path)?))?),
        None => None,
    };
    let report: DecoderReport = if args.ist {
        let params = IstParams {
            q_max: args.q_max,
            ..IstParams::default()
        };
        let identity = Basis::new(system.cols(), Transform::identity()).matrix;
        ist_sparse_decode(&system.z, &system.psi, &identity, &params)?.report
    } else {
        let (m1, m2) = match (args.m1, args.m2) {
            (Some(m1), Some(m2)) => (m1, m2),
            _ => return Err(invalid("the median decoder needs --m1 and --m2").into()),
        };
        let params = MedianDecoderParams {
            m1,
            m2,
            epsilon: args.epsilon,
            gamma: args.gamma,
            q_max: args.q_max,
            strict_median: !args.no_strict_median,
        };
        median_of_means_decode(&system.z, &system.psi, &params)?
    };
    let report = match &truth {
        Some(t) => report.score(&t.x),
        None => report,
    };

    let mut text = format!(
        "# rows={}\n# clip_count={}\n# dropped_rows={}\n# converged={}\n# iterations={}\ncoordinate,x_hat,abs_error\n",
        system.rows(),
        report.clip_count,
        report.dropped_rows,
        report.converged,
        report.iterations
    );
    for (j, x) in report.x_hat.iter().enumerate() {
        let error = report
            .per_coord_abs_error
            .as_ref()
            .map(|e| format!("{:.16e}", e[j]))
            .unwrap_or_default();
        text.push_str(&format!("{},{x:.16e},{error}\n", j + 1));
    }
    write_text(cli.out.as_deref(), &text)?;
    if cli.check {
        let worst = report
            .per_coord_abs_error
            .as_ref()
            .ok_or_else(|| invalid("--assert needs --truth"))?
            .iter()
            .copied()
            .fold(0.0, f64::max);
        if worst >= args.epsilon {
            return Err(Failure::Assertion(format!(
                "worst coordinate error {worst} >= {}",
                args.epsilon
            )));
        }
    }
    Ok(())
}
