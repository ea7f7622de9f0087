//! `dna-inverse`: simulate pulse-chase reads, recover timing profiles, compare
//! solvers and export replication events.
//!
//! Exit codes: 0 on success, 1 when some reads failed to solve (their records
//! carry an `error` field), 2 on usage or input errors.

mod bench;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use dna_inverse::forward::{self, SimulationSpec};
use dna_inverse::io::{self, Method, ReadRecord, ReportRecord};
use dna_inverse::pdps::PdpsConfig;
use dna_inverse::preprocess;
use dna_inverse::solver;
use dna_inverse::{
    CrossingPolicy, Execution, NoiseKind, ProfileSpec, PulseModel, Read, Scoring, SolveParams,
};

#[derive(Parser)]
#[command(name = "dna-inverse", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic reads with ground truth.
    Simulate(SimulateArgs),
    /// Recover the timing profile of every read.
    Solve(SolveCmd),
    /// Run several solvers on the same reads and summarise their timings.
    Bench(BenchCmd),
    /// Export the events of a report as a tab-separated table.
    Events(EventsArgs),
    /// Print the effective pulse model as a `key = value` block.
    Model(ModelArgs),
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// Flat `key = value` file with pulse model parameters; flags override it.
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    /// End of the pulse, in minutes.
    #[arg(long)]
    tau0: Option<f64>,
    /// Peak signal, reached at the end of the pulse.
    #[arg(long)]
    psi_max: Option<f64>,
    /// Signal level long after the pulse.
    #[arg(long)]
    residual: Option<f64>,
    #[arg(long)]
    rise_rate: Option<f64>,
    #[arg(long)]
    decay_rate: Option<f64>,
}

impl ModelArgs {
    fn build(&self) -> Result<PulseModel> {
        let mut m = match &self.model {
            Some(path) => {
                let text = read_file(path)?;
                toml::from_str::<PulseModel>(&text)
                    .with_context(|| format!("{}: invalid model block", path.display()))?
            }
            None => PulseModel::default(),
        };
        let overrides = [
            (&mut m.tau0, self.tau0),
            (&mut m.psi_max, self.psi_max),
            (&mut m.residual, self.residual),
            (&mut m.rise_rate, self.rise_rate),
            (&mut m.decay_rate, self.decay_rate),
        ];
        for (field, value) in overrides {
            if let Some(v) = value {
                *field = v;
            }
        }
        m.validate()?;
        Ok(m)
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum PolicyArg {
    Free,
    NoCrossing,
    Single,
    VShape,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum NoiseArg {
    Gaussian,
    Binomial,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Samples per read.
    #[arg(long, default_value_t = 300)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Interior breakpoints per profile.
    #[arg(long = "C", visible_alias = "breakpoints", default_value_t = 2)]
    breakpoints: usize,
    /// Noise level; 0 gives exact observations.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, value_enum, default_value_t = NoiseArg::Binomial)]
    noise: NoiseArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sample spacing in kb.
    #[arg(long, default_value_t = forward::DEFAULT_DX)]
    dx: f64,
    /// How the profile may cross the end of the pulse.
    #[arg(long, value_enum, default_value_t = PolicyArg::Free)]
    policy: PolicyArg,
    /// Minimum number of samples between crossings of the pulse end.
    #[arg(long, default_value_t = 60)]
    crossing_gap: usize,
    /// Force a run of negative times (zero signal).
    #[arg(long)]
    zero_run: bool,
    #[command(flatten)]
    model: ModelArgs,
    /// Output file; standard output when omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum MethodArg {
    DnaInverse,
    #[value(alias = "pdps-adapted")]
    Pdps,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::DnaInverse => Method::DnaInverse,
            MethodArg::Pdps => Method::PdpsAdapted,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ScoringArg {
    Refit,
    Relaxed,
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    /// Oscillation window width in samples.
    #[arg(long = "s-a", default_value_t = preprocess::DEFAULT_WINDOW)]
    s_a: usize,
    /// Transition positions tried per window.
    #[arg(long = "m-a", default_value_t = preprocess::DEFAULT_SUBDIVISIONS)]
    m_a: usize,
    /// Regularisation weight of the generalized lasso. The data term is
    /// weighted by ψ′², so the useful range scales with psi_max²: with
    /// psi_max = 1 noiseless reads want about 1e-4 and noisy reads 1e-3.
    #[arg(long, default_value_t = dna_inverse::genlasso::DEFAULT_LAMBDA)]
    lambda: f64,
    /// Regularisation weight of PDPS. `gamma = 2 lambda` penalises the
    /// same linearised problem.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// PDPS iteration cap per start.
    #[arg(long, default_value_t = PdpsConfig::default().max_iter)]
    pdps_max_iter: usize,
    /// Invert the raw signal instead of its moving average.
    #[arg(long)]
    no_smoothing: bool,
    /// Solution the candidate fit is evaluated on.
    #[arg(long, value_enum, default_value_t = ScoringArg::Refit)]
    scoring: ScoringArg,
    /// Worker threads; 0 uses one per core.
    #[arg(long, env = "DNA_INVERSE_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(flatten)]
    model: ModelArgs,
}

impl SolverArgs {
    fn params(&self) -> Result<(SolveParams, PdpsConfig)> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            bail!("--lambda must be finite and >= 0");
        }
        let params = SolveParams {
            s_a: self.s_a,
            m_a: self.m_a,
            lambda: self.lambda,
            smoothing: !self.no_smoothing,
            scoring: match self.scoring {
                ScoringArg::Refit => Scoring::Refit,
                ScoringArg::Relaxed => Scoring::Relaxed,
            },
            execution: Execution::Parallel,
            ..SolveParams::default()
        };
        let cfg = PdpsConfig {
            gamma: self.gamma,
            max_iter: self.pdps_max_iter,
            ..PdpsConfig::default()
        };
        cfg.validate()?;
        Ok((params, cfg))
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .context("cannot start worker threads")
    }
}

#[derive(Args, Debug)]
struct SolveCmd {
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MethodArg::DnaInverse)]
    method: MethodArg,
    /// Also write branch inverses, weights, windows and candidate counts.
    #[arg(long, value_name = "FILE")]
    dump_preprocess: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug)]
struct BenchCmd {
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [MethodArg::DnaInverse, MethodArg::Pdps])]
    methods: Vec<MethodArg>,
    /// Summary table; standard output when omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Per-read table.
    #[arg(long, value_name = "FILE")]
    per_read: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug)]
struct EventsArgs {
    /// Report produced by `solve`.
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

/// Input, usage and output problems, as opposed to reads that failed to solve.
struct Failure(anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Solve(a) => solve(&a),
        Command::Bench(a) => bench::run(&a),
        Command::Events(a) => events(&a),
        Command::Model(a) => model(&a),
    };
    match outcome {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failed) => {
            eprintln!("dna-inverse: {failed} read(s) failed");
            ExitCode::from(1)
        }
        Err(Failure(e)) => {
            eprintln!("dna-inverse: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn load_reads(path: &Path) -> Result<Vec<Read>> {
    let text = read_file(path)?;
    let records = io::parse_reads(&text).with_context(|| path.display().to_string())?;
    records
        .iter()
        .map(|r| r.to_read().map_err(anyhow::Error::from))
        .collect()
}

fn simulate(a: &SimulateArgs) -> Result<usize, Failure> {
    let model = a.model.build()?;
    if !(a.sigma.is_finite() && a.sigma >= 0.0) {
        return Err(anyhow::anyhow!("--sigma must be finite and >= 0").into());
    }
    let mut profile = ProfileSpec::new(a.n, a.breakpoints)
        .policy(match a.policy {
            PolicyArg::Free => CrossingPolicy::Free,
            PolicyArg::NoCrossing => CrossingPolicy::NoCrossing,
            PolicyArg::Single => CrossingPolicy::Single,
            PolicyArg::VShape => CrossingPolicy::VShape,
        })
        .crossing_gap(a.crossing_gap);
    if a.zero_run {
        profile = profile.with_zero_run();
    }
    let spec = SimulationSpec {
        profile,
        dx: a.dx,
        sigma: a.sigma,
        noise: match a.noise {
            NoiseArg::Gaussian => NoiseKind::Gaussian,
            NoiseArg::Binomial => NoiseKind::Binomial,
        },
    };
    let reads = forward::simulate_batch(&model, &spec, a.count, a.seed)?;
    let records: Vec<ReadRecord> = reads.iter().map(ReadRecord::from_read).collect();
    write_output(a.out.as_deref(), &io::emit_reads(&records))?;
    Ok(0)
}

/// Solves every read in the pool; failed reads become error records.
fn solve_reads(
    model: &PulseModel,
    reads: &[Read],
    method: Method,
    args: &SolverArgs,
) -> Result<Vec<ReportRecord>> {
    let (params, cfg) = args.params()?;
    let pool = args.pool()?;
    let results = pool.install(|| {
        io::solve_batch(model, reads, method, &params, &cfg, Execution::Parallel)
    });
    Ok(reads
        .iter()
        .zip(results)
        .map(|(read, r)| match r {
            Ok(report) => ReportRecord::from_report(read, &report),
            Err(e) => ReportRecord::failed(read, method, &e),
        })
        .collect())
}

#[derive(Serialize)]
struct PreprocessDump<'a> {
    id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(flatten)]
    data: Option<preprocess::BranchData>,
    /// 1-based inclusive `[start, end, center]`.
    windows: Vec<[usize; 3]>,
    zero_set: Vec<usize>,
    candidates: usize,
    bound: Option<f64>,
}

fn dump_preprocess(model: &PulseModel, reads: &[Read], args: &SolverArgs, path: &Path) -> Result<()> {
    let (params, _) = args.params()?;
    let mut text = String::new();
    for read in reads {
        let dump = match solver::prepare(model, read, &params) {
            Ok((bd, cs)) => PreprocessDump {
                id: &read.id,
                error: None,
                data: Some(bd),
                windows: cs
                    .osc_windows
                    .iter()
                    .map(|w| [w.start + 1, w.end + 1, w.center + 1])
                    .collect(),
                zero_set: cs.zero_set.iter().map(|i| i + 1).collect(),
                candidates: cs.candidates.len(),
                bound: Some(cs.bound()),
            },
            Err(e) => PreprocessDump {
                id: &read.id,
                error: Some(e.to_string()),
                data: None,
                windows: Vec::new(),
                zero_set: Vec::new(),
                candidates: 0,
                bound: None,
            },
        };
        // Infinite inverses (empty preimages) are written as null.
        text.push_str(&serde_json::to_string(&dump)?);
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn solve(a: &SolveCmd) -> Result<usize, Failure> {
    let model = a.solver.model.build()?;
    let reads = load_reads(&a.input)?;
    if let Some(path) = &a.dump_preprocess {
        dump_preprocess(&model, &reads, &a.solver, path)?;
    }
    let records = solve_reads(&model, &reads, a.method.into(), &a.solver)?;
    write_output(a.out.as_deref(), &io::emit_reports(&records))?;
    Ok(records.iter().filter(|r| r.error.is_some()).count())
}

fn events(a: &EventsArgs) -> Result<usize, Failure> {
    let text = read_file(&a.input)?;
    let reports =
        io::parse_reports(&text).with_context(|| a.input.display().to_string())?;
    let mut w = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .from_writer(Vec::new());
    w.write_record([
        "read_id",
        "kind",
        "index",
        "position_kb",
        "end_kb",
        "time_min",
        "speed_kb_per_min",
        "direction",
    ])?;
    for r in &reports {
        let position = |i: usize| (i - 1) as f64 * r.dx;
        for e in &r.events {
            let kind = serde_json::to_value(e.kind)?;
            w.write_record([
                r.id.clone(),
                kind.as_str().unwrap_or_default().to_string(),
                e.index.to_string(),
                position(e.index).to_string(),
                e.end.map(|j| position(j).to_string()).unwrap_or_default(),
                e.time.to_string(),
                e.speed.map(|s| s.to_string()).unwrap_or_default(),
                e.direction.to_string(),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
    write_output(a.out.as_deref(), &String::from_utf8(bytes)?)?;
    Ok(0)
}

fn model(a: &ModelArgs) -> Result<usize, Failure> {
    let m = a.build()?;
    write_output(None, &toml::to_string(&m)?)?;
    Ok(0)
}
