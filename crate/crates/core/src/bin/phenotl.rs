use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use phenotl::data::{load_csv, save_csv, split, CsvOptions, Domain, LabeledDataset};
use phenotl::error::{Error, Result};
use phenotl::evaluate::MetricReport;
use phenotl::experiment::{run_config_file, FinetuneSettings, MlpSettings};
use phenotl::mlp::{fine_tune, train, MlpArchitecture};
use phenotl::nngp::{default_noise_grid, NngpParams, NngpRegressor, NoiseChoice};
use phenotl::persist::{ModelFile, SavedModel};
use phenotl::plsr::{select_components, PlsrModel};
use phenotl::simulator::{generate, SimulatorConfig};
use phenotl::transfer::{
    default_lambda_grid, KernelApprox, LambdaChoice, NoiseSearch, TaskNoise, TransferGpRegressor, TransferOptions,
};

#[derive(Parser)]
#[command(name = "phenotl", version, about = "Leaf trait regression from hyperspectral reflectance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulated labeled reflectance CSV.
    Simulate {
        /// Simulator TOML, or "default" for the bundled config.
        #[arg(long, default_value = "default")]
        config: String,
        #[arg(long)]
        n: usize,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seeded train/test split of a CSV.
    Split {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        fraction: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out_train: PathBuf,
        #[arg(long)]
        out_test: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Fit a model and save it
    #[command(subcommand)]
    Train(TrainCommand),
    /// Fine-tune a saved MLP on target data.
    Finetune {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        train: PathBuf,
        /// TOML with freeze_layers, learning_rate, max_epochs, batch_size.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        model_out: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Score a saved model on a labeled CSV.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Metrics CSV; printed to stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Values for the report's fraction and seed columns.
        #[arg(long)]
        fraction: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Write predictions of a saved model for every row of a CSV.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Config-driven method comparisons
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Subcommand)]
enum TrainCommand {
    /// Partial least squares regression.
    Plsr {
        #[arg(long)]
        train: PathBuf,
        /// Component count, or "cv" for cross-validated selection.
        #[arg(long, default_value = "cv")]
        components: String,
        #[arg(long, default_value_t = 15)]
        max_components: usize,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        model_out: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Multi-layer perceptron.
    Mlp {
        #[arg(long)]
        train: PathBuf,
        /// TOML with hidden, learning_rate, batch_size, max_epochs, patience, validation_fraction.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        model_out: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Exact GP with the infinite-width ReLU network kernel.
    Nngp {
        #[arg(long)]
        train: PathBuf,
        #[command(flatten)]
        kernel: KernelArgs,
        /// Noise variance, or "grid" for evidence-based selection.
        #[arg(long, default_value = "grid")]
        noise: String,
        #[arg(long)]
        model_out: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Two-task GP with learned source/target relatedness.
    TransferGp {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Relatedness in [0, 1], or "auto".
        #[arg(long, default_value = "auto")]
        lambda: String,
        /// Golden-section refinement of the auto λ.
        #[arg(long)]
        refine: bool,
        /// Nyström landmark count, or "exact".
        #[arg(long, default_value = "exact")]
        landmarks: String,
        /// Landmark sampling seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        kernel: KernelArgs,
        /// "auto", or source and target noise variances as "s,t".
        #[arg(long, default_value = "auto")]
        noise: String,
        #[arg(long)]
        model_out: PathBuf,
        /// λ evidence curve CSV.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
    },
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Run a sweep described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Label column name (defaults to the only non-numeric header).
    #[arg(long = "trait")]
    trait_column: Option<String>,
}

impl DataArgs {
    fn load(&self, path: &Path, domain: Domain) -> Result<LabeledDataset> {
        load_csv(
            path,
            &CsvOptions {
                trait_column: self.trait_column.clone(),
                domain,
            },
        )
    }
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long, default_value_t = 3)]
    depth: usize,
    #[arg(long, default_value_t = 1.6)]
    sigw2: f64,
    #[arg(long, default_value_t = 0.1)]
    sigb2: f64,
}

impl KernelArgs {
    fn params(&self) -> Result<NngpParams> {
        NngpParams::new(self.depth, self.sigw2, self.sigb2)
    }
}

fn number_or<T: std::str::FromStr>(value: &str, keyword: &str, flag: &str) -> Result<Option<T>> {
    if value == keyword {
        return Ok(None);
    }
    value
        .parse()
        .map(Some)
        .map_err(|_| Error::Config(format!("--{flag}: expected a number or '{keyword}', got '{value}'")))
}

fn read_toml<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn save(ds: &LabeledDataset, model: SavedModel, out: &Path) -> Result<()> {
    ModelFile::new(ds.grid().clone(), ds.trait_name(), model).save(out)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run_train(cmd: TrainCommand) -> Result<()> {
    match cmd {
        TrainCommand::Plsr {
            train,
            components,
            max_components,
            folds,
            seed,
            model_out,
            data,
        } => {
            let ds = data.load(&train, Domain::Target)?;
            let k = match number_or::<usize>(&components, "cv", "components")? {
                Some(k) => k,
                None => {
                    let cap = max_components.min(ds.n_samples().saturating_sub(1)).min(ds.n_bands());
                    select_components(ds.x(), ds.y(), cap, folds, seed)?
                }
            };
            let model = PlsrModel::fit(ds.x(), ds.y(), k)?;
            eprintln!("plsr: {k} components");
            save(&ds, SavedModel::Plsr(model), &model_out)
        }
        TrainCommand::Mlp {
            train: path,
            config,
            seed,
            model_out,
            data,
        } => {
            let ds = data.load(&path, Domain::Target)?;
            let settings: MlpSettings = read_toml(config.as_deref())?;
            let arch = MlpArchitecture::with_hidden(ds.n_bands(), &settings.hidden)?;
            let model = train(ds.x(), ds.y(), &arch, &settings.train_config(seed))?;
            eprintln!("mlp: {} epochs", model.log.len());
            save(&ds, SavedModel::Mlp(model), &model_out)
        }
        TrainCommand::Nngp {
            train,
            kernel,
            noise,
            model_out,
            data,
        } => {
            let ds = data.load(&train, Domain::Target)?;
            let noise = match number_or::<f64>(&noise, "grid", "noise")? {
                Some(v) => NoiseChoice::Fixed(v),
                None => NoiseChoice::Grid(default_noise_grid()),
            };
            let gp = NngpRegressor::fit(ds.x(), ds.y(), &kernel.params()?, &noise)?;
            eprintln!("nngp: noise variance {}", gp.gp.noise);
            save(&ds, SavedModel::Nngp(gp), &model_out)
        }
        TrainCommand::TransferGp {
            source,
            target,
            lambda,
            refine,
            landmarks,
            seed,
            kernel,
            noise,
            model_out,
            report,
            data,
        } => {
            let src = data.load(&source, Domain::Source)?;
            let tgt = data.load(&target, Domain::Target)?;
            let noise = if noise == "auto" {
                NoiseSearch::default_grid()
            } else {
                let parts: Vec<f64> = noise
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Config(format!("--noise: expected 'auto' or 's,t', got '{noise}'")))?;
                match parts[..] {
                    [s, t] => NoiseSearch::Fixed(TaskNoise { source: s, target: t }),
                    _ => return Err(Error::Config("--noise needs two values 's,t'".into())),
                }
            };
            let opts = TransferOptions {
                params: kernel.params()?,
                lambda: match number_or::<f64>(&lambda, "auto", "lambda")? {
                    Some(l) => LambdaChoice::Fixed(l),
                    None => LambdaChoice::Auto {
                        grid: default_lambda_grid(),
                        refine,
                    },
                },
                noise,
                approx: match number_or::<usize>(&landmarks, "exact", "landmarks")? {
                    Some(m) => KernelApprox::Nystrom { landmarks: m, seed },
                    None => KernelApprox::Exact,
                },
            };
            let gp = TransferGpRegressor::fit(&src, &tgt, &opts)?;
            eprintln!(
                "transfer-gp: lambda {} noise {}/{}",
                gp.lambda(),
                gp.estimate.noise.source,
                gp.estimate.noise.target
            );
            if let Some(r) = report {
                write_text(&r, &gp.estimate.to_csv())?;
            }
            save(&tgt, SavedModel::TransferGp(gp), &model_out)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate { config, n, seed, out } => {
            let mut cfg = if config == "default" {
                SimulatorConfig::default_config()
            } else {
                SimulatorConfig::load(&config)?
            };
            if let Some(s) = seed {
                cfg = cfg.with_seed(s);
            }
            save_csv(&generate(&cfg, n)?, &out)?;
        }
        Command::Split {
            input,
            fraction,
            seed,
            out_train,
            out_test,
            data,
        } => {
            let ds = data.load(&input, Domain::Target)?;
            let parts = split(&ds, fraction, seed)?;
            save_csv(&parts.train, &out_train)?;
            save_csv(&parts.test, &out_test)?;
        }
        Command::Train(cmd) => run_train(cmd)?,
        Command::Finetune {
            model,
            train,
            config,
            seed,
            model_out,
            data,
        } => {
            let file = ModelFile::load(&model)?;
            let SavedModel::Mlp(base) = &file.model else {
                return Err(Error::invalid(format!("{} is a {} model, not an mlp", model.display(), file.model.kind())));
            };
            let ds = data.load(&train, Domain::Target)?;
            if ds.grid() != &file.grid {
                return Err(Error::invalid("training data grid differs from the model's"));
            }
            let settings: FinetuneSettings = read_toml(config.as_deref())?;
            let tuned = fine_tune(base, ds.x(), ds.y(), &settings.config(seed))?;
            save(&ds, SavedModel::Mlp(tuned), &model_out)?;
        }
        Command::Evaluate {
            model,
            test,
            report,
            fraction,
            seed,
            data,
        } => {
            let file = ModelFile::load(&model)?;
            let ds = data.load(&test, Domain::Target)?;
            let m = MetricReport::compute(ds.y(), &file.predict(&ds)?)?;
            let opt = |v: Option<String>| v.unwrap_or_default();
            let text = format!(
                "method,n_train_fraction,seed,rmse,r2\n{},{},{},{},{}\n",
                file.model.kind(),
                opt(fraction.map(|f| f.to_string())),
                opt(seed.map(|s| s.to_string())),
                m.rmse,
                m.r2
            );
            match report {
                Some(p) => write_text(&p, &text)?,
                None => print!("{text}"),
            }
        }
        Command::Predict { model, input, out, data } => {
            let file = ModelFile::load(&model)?;
            let ds = data.load(&input, Domain::Target)?;
            let pred = file.predict(&ds)?;
            let mut text = format!("index,{}\n", file.trait_name);
            for (i, p) in pred.iter().enumerate() {
                text.push_str(&format!("{i},{p}\n"));
            }
            write_text(&out, &text)?;
        }
        Command::Experiment(ExperimentCommand::Run { config }) => {
            let report = run_config_file(&config)?;
            print!("{}", phenotl::experiment::summarize(&report));
            if report.all_failed() {
                eprintln!("error: every experiment row failed");
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
