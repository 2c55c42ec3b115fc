use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use smartmc_core::data_io::{
    load_covariates, load_dataset, load_events, load_fit, load_json, load_state_labels, reduce_sequence,
    save_covariates, save_fit, save_json, save_sequences, save_state_labels, simulate_dataset, standardize_dataset,
    SimConfig,
};
use smartmc_core::smart_mc::{bootstrap_se, fit, odds_ratios, Dataset, OddsKind};
use smartmc_core::{
    benchmark_config, optimize, random_point, BenchmarkFunction, BenchmarkKind, Error, ErrorClass, MscorConfig,
    SphereShape,
};

type Result<T> = std::result::Result<T, Error>;

#[derive(Parser)]
#[command(name = "smartmc", version, about = "Covariate-dependent sparse Markov chains fitted by multi-sphere pattern search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Threads {
    /// Worker threads [default: logical cores]
    #[arg(long, env = "SMARTMC_THREADS")]
    threads: Option<usize>,
}

impl Threads {
    fn resolve(&self) -> usize {
        self.threads
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

#[derive(clap::Args)]
struct DataArgs {
    #[arg(long)]
    sequences: PathBuf,
    #[arg(long)]
    covariates: PathBuf,
    /// Number of states (default: largest state in the file)
    #[arg(long)]
    n_states: Option<usize>,
    /// `state,label` CSV naming the states
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Use covariates as given instead of standardizing continuous columns
    #[arg(long)]
    no_standardize: bool,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let mut data = load_dataset(&self.sequences, &self.covariates, self.n_states)?;
        if let Some(path) = &self.labels {
            data = data.with_state_labels(load_state_labels(path)?)?;
        }
        if self.no_standardize {
            Ok(data)
        } else {
            standardize_dataset(&data)
        }
    }
}

#[derive(clap::Args)]
struct OptArgs {
    /// MSCOR settings as JSON
    #[arg(long)]
    mscor: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    threads: Threads,
}

impl OptArgs {
    fn config(&self, base: MscorConfig) -> Result<MscorConfig> {
        let mut config = match &self.mscor {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
                MscorConfig::from_json(&text)?
            }
            None => base,
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        config.threads = self.threads.resolve();
        config.validate()?;
        Ok(config)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    ProbabilityRatio,
    Odds,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its generator
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_seq: PathBuf,
        #[arg(long)]
        out_cov: PathBuf,
        #[arg(long)]
        out_truth: PathBuf,
    },
    /// Turn dated events into window-reduced state sequences
    Reduce {
        #[arg(long)]
        events: PathBuf,
        #[arg(long, default_value_t = 91)]
        window_days: u32,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the `state,label` mapping
        #[arg(long)]
        out_labels: Option<PathBuf>,
    },
    /// Fit the model
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        tol: u64,
        #[command(flatten)]
        opt: OptArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-subject probability matrices for new covariates
    Predict {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        covariates: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ratios of switching against staying for covariate profiles
    Odds {
        #[arg(long)]
        fit: PathBuf,
        /// Origin state (1-based)
        #[arg(long = "from")]
        from_state: usize,
        /// JSON object of covariate values, or a list of them
        #[arg(long)]
        profile: PathBuf,
        /// Target states (default: all)
        #[arg(long, value_delimiter = ',')]
        to: Vec<usize>,
        #[arg(long, value_enum, default_value = "probability-ratio")]
        kind: Kind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bootstrap standard errors of the coefficients
    Bootstrap {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        tol: u64,
        #[arg(long)]
        n_boot: usize,
        #[command(flatten)]
        opt: OptArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Minimize a test function from repeated random starts
    Benchmark {
        #[arg(long)]
        function: String,
        #[arg(long)]
        blocks: usize,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        /// Seconds allowed per start
        #[arg(long)]
        time_budget: Option<f64>,
        #[command(flatten)]
        opt: OptArgs,
        /// CSV output (default: stdout)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Usage => 1,
                ErrorClass::Data => 2,
                ErrorClass::Numerical => 3,
            })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate {
            config,
            out_seq,
            out_cov,
            out_truth,
        } => {
            let config: SimConfig = load_json(&config).map_err(as_config_error)?;
            let sim = simulate_dataset(&config)?;
            save_sequences(&sim.dataset, out_seq)?;
            save_covariates(&sim.dataset, out_cov)?;
            save_json(&sim.truth, out_truth)
        }
        Command::Reduce {
            events,
            window_days,
            out,
            out_labels,
        } => reduce(&events, window_days, &out, out_labels.as_deref()),
        Command::Fit { data, tol, opt, out } => {
            let data = data.load()?;
            let config = opt.config(MscorConfig::default())?;
            let f = fit(&data, tol, &config)?;
            eprintln!(
                "log-likelihood {:.6}, {} non-rare entries, {} runs",
                f.log_likelihood,
                f.mask.n_masked(),
                f.optimizer.runs
            );
            save_fit(&f, out)
        }
        Command::Predict { fit, covariates, out } => predict(&fit, &covariates, &out),
        Command::Odds {
            fit,
            from_state,
            profile,
            to,
            kind,
            out,
        } => odds(&fit, from_state, &profile, to, kind, &out),
        Command::Bootstrap {
            data,
            tol,
            n_boot,
            opt,
            out,
        } => {
            let data = data.load()?;
            let config = opt.config(MscorConfig::default())?;
            let b = bootstrap_se(&data, tol, &config, n_boot, config.seed)?;
            if b.failed > 0 {
                eprintln!("{} of {} replicates excluded", b.failed, b.n_boot);
            }
            save_json(&b, out)
        }
        Command::Benchmark {
            function,
            blocks,
            dim,
            repeats,
            time_budget,
            opt,
            out,
        } => benchmark(&function, blocks, dim, repeats, time_budget, &opt, out.as_deref()),
    }
}

/// Malformed configuration files are usage errors, not data errors.
fn as_config_error(e: Error) -> Error {
    match e {
        Error::SchemaMismatch(m) => Error::InvalidConfig(m),
        Error::Json(j) => Error::InvalidConfig(j.to_string()),
        other => other,
    }
}

fn reduce(events: &Path, window_days: u32, out: &Path, out_labels: Option<&Path>) -> Result<()> {
    let log = load_events(events)?;
    let mut reduced = Vec::with_capacity(log.len());
    for (id, ev) in &log {
        reduced.push((id.clone(), reduce_sequence(ev, window_days)?));
    }
    let mut labels: Vec<String> = reduced.iter().flat_map(|(_, s)| s.iter().cloned()).collect();
    labels.sort();
    labels.dedup();
    let state = |l: &String| labels.binary_search(l).expect("collected above") + 1;

    let mut w = csv::Writer::from_path(out)?;
    w.write_record(["subject_id", "t", "state"])?;
    for (id, seq) in &reduced {
        for (t, l) in seq.iter().enumerate() {
            w.write_record([id.clone(), (t + 1).to_string(), state(l).to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    if let Some(path) = out_labels {
        save_state_labels(&labels, path)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SubjectMatrix {
    subject_id: String,
    matrix: Vec<Vec<f64>>,
    inactive_rows: Vec<usize>,
}

#[derive(Serialize)]
struct Predictions {
    n_states: usize,
    state_labels: Vec<String>,
    subjects: Vec<SubjectMatrix>,
}

fn predict(fit_path: &Path, covariates: &Path, out: &Path) -> Result<()> {
    let f = load_fit(fit_path)?;
    let table = load_covariates(covariates)?;
    check_names(&f.standardization.columns.iter().map(|c| c.name.clone()).collect::<Vec<_>>(), &table.names)?;
    let mut subjects = Vec::with_capacity(table.rows.len());
    for (id, raw) in &table.rows {
        let m = f.patient_matrix(&f.standardization.apply(raw)?)?;
        subjects.push(SubjectMatrix {
            subject_id: id.clone(),
            inactive_rows: (0..m.inactive.len()).filter(|&u| m.inactive[u]).collect(),
            matrix: m.probs,
        });
    }
    save_json(
        &Predictions {
            n_states: f.n_states(),
            state_labels: f.state_labels.clone(),
            subjects,
        },
        out,
    )
}

fn check_names(expected: &[String], got: &[String]) -> Result<()> {
    if expected != got {
        return Err(Error::SchemaMismatch(format!(
            "covariates are [{}], the fit expects [{}]",
            got.join(","),
            expected.join(",")
        )));
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Profiles {
    One(serde_json::Map<String, serde_json::Value>),
    Many(Vec<serde_json::Map<String, serde_json::Value>>),
}

fn odds(fit_path: &Path, from: usize, profile: &Path, to: Vec<usize>, kind: Kind, out: &Path) -> Result<()> {
    let f = load_fit(fit_path)?;
    let profiles = match load_json::<Profiles>(profile).map_err(as_config_error)? {
        Profiles::One(p) => vec![p],
        Profiles::Many(p) => p,
    };
    let to = if to.is_empty() { (1..=f.n_states()).collect() } else { to };
    let kind = match kind {
        Kind::ProbabilityRatio => OddsKind::ProbabilityRatio,
        Kind::Odds => OddsKind::Odds,
    };
    let label = |s: usize| f.state_labels.get(s.wrapping_sub(1)).cloned().unwrap_or_default();

    let mut w = csv::Writer::from_path(out)?;
    w.write_record(["profile", "from", "from_label", "to", "to_label", "odds_ratio"])?;
    for (i, p) in profiles.iter().enumerate() {
        let raw = f
            .standardization
            .columns
            .iter()
            .map(|c| {
                p.get(&c.name)
                    .and_then(serde_json::Value::as_f64)
                    .ok_or_else(|| Error::InvalidConfig(format!("profile {} lacks numeric `{}`", i + 1, c.name)))
            })
            .collect::<Result<Vec<f64>>>()?;
        let ratios = odds_ratios(&f, &f.standardization.apply(&raw)?, from, &to, kind)?;
        for (&v, r) in to.iter().zip(ratios) {
            w.write_record([
                (i + 1).to_string(),
                from.to_string(),
                label(from),
                v.to_string(),
                label(v),
                r.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn benchmark(
    function: &str,
    blocks: usize,
    dim: usize,
    repeats: usize,
    time_budget: Option<f64>,
    opt: &OptArgs,
    out: Option<&Path>,
) -> Result<()> {
    let kind: BenchmarkKind = function.parse()?;
    if repeats == 0 {
        return Err(Error::InvalidConfig("repeats must be positive".into()));
    }
    let shape = SphereShape::uniform(blocks, dim).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let objective = BenchmarkFunction::new(kind, shape.clone());
    let mut config = opt.config(benchmark_config())?;
    if time_budget.is_some() {
        config.time_budget_seconds = time_budget;
        config.validate()?;
    }

    let mut values = Vec::with_capacity(repeats);
    let mut times = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let start = random_point(&shape, config.seed.wrapping_add(r as u64))?;
        let clock = Instant::now();
        let result = optimize(&objective, start, &config)?;
        times.push(clock.elapsed().as_secs_f64());
        values.push(result.objective_value);
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let (_, se_value) = mean_and_se(&values);
    let (mean_time, se_time) = mean_and_se(&times);

    let sink: Box<dyn Write> = match out {
        Some(path) => Box::new(std::fs::File::create(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record([
        "function",
        "blocks",
        "dim",
        "repeats",
        "min_value",
        "se_of_solution",
        "mean_time",
        "se_time",
    ])?;
    w.write_record([
        kind.name().to_string(),
        blocks.to_string(),
        dim.to_string(),
        repeats.to_string(),
        format!("{min:e}"),
        format!("{se_value:e}"),
        format!("{mean_time:.6}"),
        format!("{se_time:.6}"),
    ])?;
    w.flush().map_err(|e| Error::Io {
        path: out.map(Path::to_path_buf).unwrap_or_default(),
        source: e,
    })
}
