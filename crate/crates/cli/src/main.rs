use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nmq_puf::attacks::{
    cmaes_reliability_attack, fourier_low_degree_attack, train_logistic_regression, train_mlp,
    Activation, AttackReport, FourierConfig, LogisticConfig, MlpConfig, ReliabilityAttackConfig,
    ReliabilityRecord,
};
use nmq_puf::dataset::{
    generate_dataset, read_dataset, sample_challenges, seed_digest, write_dataset, CrpDataset,
    CrpRecord, DatasetHeader, EvalMeta,
};
use nmq_puf::entropy::{EnvironmentCondition, InstanceConfig, NoiseModel};
use nmq_puf::metrics::{
    all_pairs_uniqueness, auth_failure_probability, ber_sweep, margin_threshold, mean, std_dev,
    uniformity_of, ResponseSet, DEFAULT_BER_EVALS, DEFAULT_BER_TEMPERATURES,
};
use nmq_puf::plotdata;
use nmq_puf::puf::{ApufInstance, Architecture, NmqRoInstance, Puf};
use nmq_puf::sensitivity::{
    preset_surface, SensitivityPreset, DEFAULT_GRID_STEPS, DEFAULT_SURFACE_CHALLENGES,
};
use nmq_puf::{Error, Result};

const SEED_ENV: &str = "NMQPUF_SEED";

/// Writes to stdout; a closed pipe (`nmqpuf ... | head`) ends the process quietly.
fn write_stdout(args: std::fmt::Arguments<'_>) {
    use std::io::Write;
    if let Err(e) = std::io::stdout().lock().write_fmt(args) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        panic!("failed writing to stdout: {e}");
    }
}

macro_rules! out {
    ($($arg:tt)*) => { write_stdout(format_args!("{}\n", format_args!($($arg)*))) };
}

macro_rules! out_raw {
    ($($arg:tt)*) => { write_stdout(format_args!($($arg)*)) };
}

/// NMQ-RO / arbiter PUF simulation and attack workbench.
#[derive(Parser, Debug)]
#[command(name = "nmqpuf", version)]
struct Cli {
    /// Master seed. Defaults to $NMQPUF_SEED, then 1.
    #[arg(long, global = true, env = SEED_ENV)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Instance configuration files.
    #[command(subcommand)]
    Instance(InstanceCmd),
    /// Challenge-response datasets.
    #[command(subcommand)]
    Crp(CrpCmd),
    /// Quality metrics.
    #[command(subcommand)]
    Metrics(MetricsCmd),
    /// Authentication failure probability.
    #[command(subcommand)]
    Auth(AuthCmd),
    /// Uniqueness-sensitivity surfaces.
    #[command(subcommand)]
    Sensitivity(SensitivityCmd),
    /// Model-building attacks on a dataset.
    #[command(subcommand)]
    Attack(AttackCmd),
    /// CSV series for the reference figures.
    #[command(subcommand)]
    Plotdata(PlotCmd),
}

#[derive(Args, Debug, Clone)]
struct InstanceArgs {
    /// Instance config file; overrides the built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Challenge width when no config file is given.
    #[arg(long)]
    n: Option<usize>,
}

impl InstanceArgs {
    /// Resolves the config; an explicit --seed replaces the file's instance seed.
    fn resolve(&self, seed: Option<u64>) -> Result<InstanceConfig> {
        let mut cfg = match &self.config {
            Some(path) => InstanceConfig::load(path)?,
            None => InstanceConfig::default().with_seed(seed.unwrap_or(1)),
        };
        if let (Some(_), Some(s)) = (&self.config, seed) {
            cfg = cfg.with_seed(s);
        }
        if let Some(n) = self.n {
            cfg.n = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand, Debug)]
enum InstanceCmd {
    /// Write a fresh instance config.
    New {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        n: usize,
        /// Override the jitter level.
        #[arg(long)]
        sigma_rel: Option<f64>,
    },
}

#[derive(Subcommand, Debug)]
enum CrpCmd {
    /// Generate a dataset (binary unless the output ends in .csv).
    Generate {
        #[command(flatten)]
        instance: InstanceArgs,
        /// apuf | nmq-ro:<g> | xor-nmq-ro:<g>:<k> | xor-apuf:<k>
        #[arg(long)]
        arch: Architecture,
        #[arg(long)]
        count: u64,
        #[arg(long)]
        out: PathBuf,
        /// Seed for challenge sampling; defaults to the master seed.
        #[arg(long)]
        challenge_seed: Option<u64>,
        #[arg(long, default_value_t = 20.0)]
        temperature: f64,
        /// Evaluate with jitter instead of noiselessly.
        #[arg(long)]
        noisy: bool,
        /// Evaluations per challenge (draws 0..evals, noisy); >1 stores repeated records.
        #[arg(long, default_value_t = 1)]
        evals: u32,
    },
}

#[derive(Subcommand, Debug)]
enum MetricsCmd {
    /// Fraction of 1 responses in a dataset.
    Uniformity {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// All-pairs normalized Hamming distance between datasets over the same challenges.
    Uniqueness {
        #[arg(long = "dataset", required = true, num_args = 1..)]
        datasets: Vec<PathBuf>,
        #[arg(long, default_value_t = 32)]
        group_bits: usize,
    },
    /// Bit error rate against temperature.
    Ber {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long)]
        arch: Architecture,
        #[arg(long, default_value_t = 10_000)]
        crps: u64,
        #[arg(long, default_value_t = DEFAULT_BER_EVALS)]
        evals: usize,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_BER_TEMPERATURES)]
        temperatures: Vec<f64>,
    },
}

#[derive(Subcommand, Debug)]
enum AuthCmd {
    /// Exact and Monte Carlo failure probability of one authentication.
    Simulate {
        #[arg(long)]
        ber: f64,
        #[arg(long)]
        crps: u64,
        /// `paper`: threshold 5 % below the expected correct count.
        #[arg(
            long,
            conflicts_with = "threshold",
            required_unless_present = "threshold"
        )]
        threshold_rule: Option<ThresholdRule>,
        #[arg(long)]
        threshold: Option<u64>,
        #[arg(long, default_value_t = 1_000_000)]
        trials: u64,
    },
}

#[derive(clap::ValueEnum, Debug, Clone, Copy)]
enum ThresholdRule {
    Paper,
}

#[derive(Subcommand, Debug)]
enum SensitivityCmd {
    /// Contour grid for one of the six reference panels (a-f).
    Map {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long)]
        panel: char,
        #[arg(long, default_value_t = DEFAULT_GRID_STEPS)]
        steps: usize,
        #[arg(long, default_value_t = DEFAULT_SURFACE_CHALLENGES)]
        challenges: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct AttackData {
    #[arg(long)]
    dataset: PathBuf,
    /// Tail fraction of the dataset held out for testing.
    #[arg(long, default_value_t = 0.1)]
    test_fraction: f64,
    /// Append the report as a CSV row to this file.
    #[arg(long)]
    report_csv: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum AttackCmd {
    /// Logistic regression on parity features.
    Lr {
        #[command(flatten)]
        data: AttackData,
        #[arg(long, default_value_t = 0.1)]
        learning_rate: f64,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Multilayer perceptron.
    Mlp {
        #[command(flatten)]
        data: AttackData,
        #[arg(long, value_delimiter = ',', default_values_t = vec![128usize, 128, 128, 128])]
        hidden: Vec<usize>,
        #[arg(long, default_value_t = 1e-3)]
        learning_rate: f64,
        #[arg(long, default_value_t = 256)]
        batch_size: usize,
        #[arg(long, default_value_t = 40)]
        max_epochs: usize,
        #[arg(long, default_value_t = 5)]
        patience: usize,
        #[arg(long)]
        tanh: bool,
    },
    /// CMA-ES reliability attack; needs a dataset generated with --evals >= 11.
    Cmaes {
        #[command(flatten)]
        data: AttackData,
        #[arg(long, default_value_t = 2000)]
        generations: usize,
    },
    /// Low-degree Fourier approximation.
    Fourier {
        #[command(flatten)]
        data: AttackData,
        #[arg(long, default_value_t = 2)]
        degree: usize,
    },
}

#[derive(Subcommand, Debug)]
enum PlotCmd {
    /// Failure probability against CRP count.
    Fig2 {
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.1, 0.2, 0.3])]
        bers: Vec<f64>,
        #[arg(long, default_value_t = 600)]
        max_crps: u64,
        #[arg(long, default_value_t = 10)]
        step: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Quantizer transfer: NMQ-RO ratio/response, or arbiter difference with --apuf.
    Fig3 {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long, default_value_t = 400)]
        g: u32,
        #[arg(long, default_value_t = 1000)]
        crps: u64,
        #[arg(long)]
        apuf: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// BER against temperature per g, or per-instance uniformity with --uniformity.
    Fig5 {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long, value_delimiter = ',', default_values_t = vec![100u32, 200, 400])]
        gs: Vec<u32>,
        #[arg(long, default_value_t = 2000)]
        crps: u64,
        #[arg(long, default_value_t = 20)]
        evals: usize,
        #[arg(long)]
        uniformity: bool,
        #[arg(long, default_value_t = 20)]
        instances: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Toggle-gap histograms.
    Fig7 {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long, value_delimiter = ',', default_values_t = vec![100u32, 200, 400, 800])]
        gs: Vec<u32>,
        #[arg(long, default_value_t = 10_000)]
        crps: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sensitivity contour grid (same as `sensitivity map`).
    Fig10 {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long)]
        panel: char,
        #[arg(long, default_value_t = DEFAULT_GRID_STEPS)]
        steps: usize,
        #[arg(long, default_value_t = DEFAULT_SURFACE_CHALLENGES)]
        challenges: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            let first = e.to_string().lines().next().unwrap_or_default().to_string();
            eprintln!("error kind=usage message={first:?}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error kind={} message={:?}", e.kind(), e.to_string());
            ExitCode::FAILURE
        }
    }
}

fn resolved(pairs: &[(&str, String)]) {
    let line: Vec<String> = pairs.iter().map(|(k, v)| format!("{k}={v}")).collect();
    out!("resolved: {}", line.join(" "));
}

fn print_instance(cfg: &InstanceConfig) {
    for line in cfg.to_config_string().lines() {
        out!("config: {line}");
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, text).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            out!("wrote {}", path.display());
        }
        None => out_raw!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    let master = seed.unwrap_or(1);
    match cli.command {
        Command::Instance(InstanceCmd::New { out, n, sigma_rel }) => {
            let mut cfg = InstanceConfig {
                n,
                ..InstanceConfig::default()
            }
            .with_seed(master);
            if let Some(s) = sigma_rel {
                cfg.sigma_rel = s;
            }
            cfg.validate()?;
            resolved(&[("seed", master.to_string())]);
            print_instance(&cfg);
            cfg.save(&out)?;
            out!("wrote {}", out.display());
        }
        Command::Crp(CrpCmd::Generate {
            instance,
            arch,
            count,
            out,
            challenge_seed,
            temperature,
            noisy,
            evals,
        }) => {
            let cfg = instance.resolve(seed)?;
            let challenge_seed = challenge_seed.unwrap_or(master);
            let env = EnvironmentCondition::new(temperature)?;
            let noisy = noisy || evals > 1;
            let noise = if noisy {
                cfg.noise()
            } else {
                NoiseModel::none()
            };
            resolved(&[
                ("seed", cfg.seed.to_string()),
                ("arch", arch.to_string().replace(' ', "")),
                ("count", count.to_string()),
                ("challenge_seed", challenge_seed.to_string()),
                ("temperature", temperature.to_string()),
                ("noisy", noisy.to_string()),
                ("evals", evals.to_string()),
            ]);
            print_instance(&cfg);
            let dataset = if evals <= 1 {
                generate_dataset(&cfg, arch, count, challenge_seed, &env, &noise)?
            } else {
                repeated_dataset(&cfg, arch, count, challenge_seed, &env, &noise, evals)?
            };
            write_dataset(&out, &dataset)?;
            out!("wrote {} records to {}", dataset.len(), out.display());
        }
        Command::Metrics(MetricsCmd::Uniformity { dataset }) => {
            resolved(&[("dataset", dataset.display().to_string())]);
            let ds = read_dataset(&dataset)?;
            out!("uniformity: {:.6}", uniformity_of(&ds.responses())?);
        }
        Command::Metrics(MetricsCmd::Uniqueness {
            datasets,
            group_bits,
        }) => {
            if datasets.len() < 2 {
                return Err(Error::InvalidConfig(
                    "uniqueness needs at least two datasets".into(),
                ));
            }
            resolved(&[
                ("group_bits", group_bits.to_string()),
                ("datasets", datasets.len().to_string()),
            ]);
            let sets = datasets
                .iter()
                .map(|p| {
                    let ds = read_dataset(p)?;
                    ResponseSet::new(
                        p.display().to_string(),
                        ds.records.iter().map(|r| r.challenge).collect(),
                        ds.responses(),
                        EnvironmentCondition::enrollment(),
                        vec![0; ds.len()],
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let values = all_pairs_uniqueness(&sets, group_bits)?;
            out!("pairs: {}", sets.len() * (sets.len() - 1) / 2);
            out!("uniqueness mean: {:.6}", mean(&values));
            out!("uniqueness std: {:.6}", std_dev(&values));
        }
        Command::Metrics(MetricsCmd::Ber {
            instance,
            arch,
            crps,
            evals,
            temperatures,
        }) => {
            let cfg = instance.resolve(seed)?;
            resolved(&[
                ("seed", cfg.seed.to_string()),
                ("arch", arch.to_string().replace(' ', "")),
                ("crps", crps.to_string()),
                ("evals", evals.to_string()),
            ]);
            print_instance(&cfg);
            let puf = arch.build(&cfg)?;
            let challenges = sample_challenges(cfg.n, crps, master)?;
            let noise = cfg.noise();
            let enrolled = ResponseSet::enroll("target", &puf, &challenges, &noise)?;
            let report = ber_sweep(&puf, &enrolled, &temperatures, &noise, evals)?;
            out!("temperature,ber");
            for p in &report.points {
                out!("{},{:.6}", p.temperature, p.error_ratio());
            }
            if let Some(w) = report.worst() {
                out!("worst: {:.6} at {} C", w.error_ratio(), w.temperature);
            }
        }
        Command::Auth(AuthCmd::Simulate {
            ber,
            crps,
            threshold_rule,
            threshold,
            trials,
        }) => {
            let threshold = match (threshold_rule, threshold) {
                (Some(ThresholdRule::Paper), _) => margin_threshold(ber, crps),
                (None, Some(t)) => t,
                (None, None) => unreachable!("clap requires one of the two"),
            };
            resolved(&[
                ("seed", master.to_string()),
                ("ber", ber.to_string()),
                ("crps", crps.to_string()),
                ("threshold", threshold.to_string()),
                ("trials", trials.to_string()),
            ]);
            let r = auth_failure_probability(ber, crps, threshold, trials, master)?;
            out!("threshold: {}", r.threshold);
            out!("failure probability (exact): {:.6}", r.exact);
            out!(
                "failure probability (monte carlo): {:.6} +/- {:.6} ({} of {})",
                r.monte_carlo.probability,
                r.monte_carlo.std_error,
                r.monte_carlo.failures,
                r.monte_carlo.trials
            );
        }
        Command::Sensitivity(SensitivityCmd::Map {
            instance,
            panel,
            steps,
            challenges,
            out,
        })
        | Command::Plotdata(PlotCmd::Fig10 {
            instance,
            panel,
            steps,
            challenges,
            out,
        }) => {
            let cfg = instance.resolve(seed)?;
            let preset = SensitivityPreset::from_panel(panel)?;
            resolved(&[
                ("seed", master.to_string()),
                ("panel", panel.to_string()),
                ("arch", preset.architecture().to_string().replace(' ', "")),
                ("radius", preset.radius().to_string()),
                ("steps", steps.to_string()),
                ("challenges", challenges.to_string()),
            ]);
            print_instance(&cfg);
            let grid = preset_surface(preset, &cfg, master, steps, challenges)?;
            eprintln!(
                "f(0,0)={} ring_mean={:.4} below_0.45={:.4} clamped={}",
                grid.nearest(0.0, 0.0),
                grid.boundary_ring_mean(),
                grid.fraction_below(0.45),
                grid.clamped
            );
            emit(&out, &plotdata::fig10_csv(&grid))?;
        }
        Command::Attack(cmd) => run_attack(cmd, master)?,
        Command::Plotdata(PlotCmd::Fig2 {
            bers,
            max_crps,
            step,
            out,
        }) => {
            resolved(&[
                ("max_crps", max_crps.to_string()),
                ("step", step.to_string()),
            ]);
            emit(&out, &plotdata::fig2_csv(&bers, max_crps, step)?)?;
        }
        Command::Plotdata(PlotCmd::Fig3 {
            instance,
            g,
            crps,
            apuf,
            out,
        }) => {
            let cfg = instance.resolve(seed)?;
            resolved(&[
                ("seed", master.to_string()),
                ("g", g.to_string()),
                ("crps", crps.to_string()),
            ]);
            print_instance(&cfg);
            let challenges = sample_challenges(cfg.n, crps, master)?;
            let text = if apuf {
                plotdata::fig3_apuf_csv(&ApufInstance::new(cfg.instance()?), &challenges)?
            } else {
                plotdata::fig3_nmq_csv(&NmqRoInstance::new(cfg.instance()?, g)?, &challenges)?
            };
            emit(&out, &text)?;
        }
        Command::Plotdata(PlotCmd::Fig5 {
            instance,
            gs,
            crps,
            evals,
            uniformity,
            instances,
            out,
        }) => {
            let cfg = instance.resolve(seed)?;
            resolved(&[
                ("seed", master.to_string()),
                ("crps", crps.to_string()),
                ("evals", evals.to_string()),
            ]);
            print_instance(&cfg);
            let text = if uniformity {
                plotdata::fig5_uniformity_csv(&cfg, &gs, instances, crps, master)?
            } else {
                plotdata::fig5_ber_csv(&cfg, &gs, &DEFAULT_BER_TEMPERATURES, crps, evals, master)?
            };
            emit(&out, &text)?;
        }
        Command::Plotdata(PlotCmd::Fig7 {
            instance,
            gs,
            crps,
            out,
        }) => {
            let cfg = instance.resolve(seed)?;
            resolved(&[("seed", master.to_string()), ("crps", crps.to_string())]);
            print_instance(&cfg);
            emit(&out, &plotdata::fig7_csv(&cfg, &gs, crps, master)?)?;
        }
    }
    Ok(())
}

/// Every sampled challenge evaluated `evals` times (draws `0..evals`), stored
/// as consecutive records with their draw index.
fn repeated_dataset(
    cfg: &InstanceConfig,
    arch: Architecture,
    count: u64,
    challenge_seed: u64,
    env: &EnvironmentCondition,
    noise: &NoiseModel,
    evals: u32,
) -> Result<CrpDataset> {
    let puf = arch.build(cfg)?;
    let challenges = sample_challenges(cfg.n, count, challenge_seed)?;
    let mut per_draw = Vec::with_capacity(evals as usize);
    for draw in 0..u64::from(evals) {
        per_draw.push(puf.responses(&challenges, env, noise, draw)?);
    }
    let mut records = Vec::with_capacity(challenges.len() * evals as usize);
    for (i, &c) in challenges.iter().enumerate() {
        for (draw, responses) in per_draw.iter().enumerate() {
            records.push(CrpRecord {
                challenge: c,
                response: responses[i],
                meta: Some(EvalMeta {
                    temperature: env.temperature(),
                    draw: draw as u64,
                }),
            });
        }
    }
    let mut header = DatasetHeader::new(cfg.n, arch, seed_digest(cfg, arch, challenge_seed));
    header.enrollment_temperature = env.enrollment_temperature();
    CrpDataset::new(header, records)
}

fn target_label(ds: &CrpDataset, path: &Path) -> String {
    format!("{} [{}]", ds.header.architecture, path.display())
}

fn finish_report(report: &AttackReport, csv: &Option<PathBuf>) -> Result<()> {
    out_raw!("{}", report.to_record());
    out!("{}", report.table_row());
    if let Some(path) = csv {
        let mut text = if path.exists() {
            fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?
        } else {
            format!("{}\n", AttackReport::CSV_HEADER)
        };
        text.push_str(&report.csv_row());
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
    }
    Ok(())
}

fn run_attack(cmd: AttackCmd, seed: u64) -> Result<()> {
    match cmd {
        AttackCmd::Lr {
            data,
            learning_rate,
            epochs,
            batch_size,
        } => {
            let ds = read_dataset(&data.dataset)?;
            let (train, test) = ds.split(data.test_fraction)?;
            let cfg = LogisticConfig {
                learning_rate,
                epochs,
                batch_size,
                seed,
                ..LogisticConfig::default()
            };
            resolved(&[
                ("seed", seed.to_string()),
                ("learning_rate", learning_rate.to_string()),
                ("epochs", epochs.to_string()),
                ("train", train.len().to_string()),
                ("test", test.len().to_string()),
            ]);
            let (_, report) =
                train_logistic_regression(&train, &test, &cfg, &target_label(&ds, &data.dataset))?;
            finish_report(&report, &data.report_csv)
        }
        AttackCmd::Mlp {
            data,
            hidden,
            learning_rate,
            batch_size,
            max_epochs,
            patience,
            tanh,
        } => {
            let ds = read_dataset(&data.dataset)?;
            let (train, test) = ds.split(data.test_fraction)?;
            let cfg = MlpConfig {
                hidden,
                activation: if tanh {
                    Activation::Tanh
                } else {
                    Activation::Relu
                },
                learning_rate,
                batch_size,
                max_epochs,
                patience,
                seed,
                ..MlpConfig::default()
            };
            resolved(&[
                ("seed", seed.to_string()),
                ("hidden", format!("{:?}", cfg.hidden).replace(' ', "")),
                ("learning_rate", learning_rate.to_string()),
                ("batch_size", batch_size.to_string()),
                ("max_epochs", max_epochs.to_string()),
                ("train", train.len().to_string()),
                ("test", test.len().to_string()),
            ]);
            let (_, report) = train_mlp(&train, &test, &cfg, &target_label(&ds, &data.dataset))?;
            finish_report(&report, &data.report_csv)
        }
        AttackCmd::Cmaes { data, generations } => {
            let ds = read_dataset(&data.dataset)?;
            let grouped = group_repeated(&ds.records);
            let cut =
                grouped.len() - ((grouped.len() as f64) * data.test_fraction).round() as usize;
            let (train, test) = grouped.split_at(cut);
            let test: Vec<CrpRecord> = test
                .iter()
                .map(|r| CrpRecord::new(r.challenge, r.majority()))
                .collect();
            let mut cfg = ReliabilityAttackConfig {
                seed,
                ..ReliabilityAttackConfig::default()
            };
            cfg.cmaes.max_generations = generations;
            resolved(&[
                ("seed", seed.to_string()),
                ("generations", generations.to_string()),
                ("train", train.len().to_string()),
                ("test", test.len().to_string()),
            ]);
            let (_, report) =
                cmaes_reliability_attack(train, &test, &cfg, &target_label(&ds, &data.dataset))?;
            finish_report(&report, &data.report_csv)
        }
        AttackCmd::Fourier { data, degree } => {
            let ds = read_dataset(&data.dataset)?;
            let (train, test) = ds.split(data.test_fraction)?;
            let cfg = FourierConfig {
                degree,
                ..FourierConfig::default()
            };
            resolved(&[
                ("degree", degree.to_string()),
                ("train", train.len().to_string()),
                ("test", test.len().to_string()),
            ]);
            let (_, report) =
                fourier_low_degree_attack(&train, &test, &cfg, &target_label(&ds, &data.dataset))?;
            finish_report(&report, &data.report_csv)
        }
    }
}

/// Collapses repeated records per challenge, keeping first-seen order.
fn group_repeated(records: &[CrpRecord]) -> Vec<ReliabilityRecord> {
    let mut order = Vec::new();
    let mut counts: BTreeMap<u64, (u32, u32)> = BTreeMap::new();
    for r in records {
        let entry = counts.entry(r.challenge.bits()).or_insert_with(|| {
            order.push(r.challenge);
            (0, 0)
        });
        entry.0 += 1;
        entry.1 += u32::from(r.response);
    }
    order
        .into_iter()
        .map(|c| {
            let (evals, ones) = counts[&c.bits()];
            ReliabilityRecord {
                challenge: c,
                evals,
                ones,
            }
        })
        .collect()
}
