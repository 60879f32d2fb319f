//! Config-driven comparison sweeps.
//!
//! An experiment trains every configured method on a seeded split of the
//! target set for each `(fraction, seed)` pair and scores it on the held-out
//! rest. Rows run in parallel; the report is assembled in config order
//! (method, fraction, seed), so reruns write identical files.
//!
//! Output directory layout:
//!
//! - `report.csv`: `method,n_train_fraction,seed,rmse,r2,lambda,status`
//! - `summary.txt`: per (method, fraction) mean and population std
//! - `timings.csv`: wall time per row (not part of the deterministic output)
//! - `lambda_curve_<row>.csv`: evidence curve of each transfer-gp row, where
//!   `<row>` is the 0-based row index in `report.csv`
//! - `predictions_<row>.csv`: only with `save_predictions = true`

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use crate::data::{load_csv, split, CsvOptions, Domain, LabeledDataset};
use crate::error::{Error, Result};
use crate::evaluate::MetricReport;
use crate::mlp::{fine_tune, train, FineTuneConfig, MlpArchitecture, MlpModel, TrainConfig};
use crate::nngp::{default_noise_grid, NoiseChoice, NngpParams, NngpRegressor};
use crate::plsr::{select_components, PlsrModel};
use crate::simulator::{generate, shift_domain, SimulatorConfig};
use crate::transfer::{
    default_lambda_grid, KernelApprox, LambdaChoice, LambdaEstimate, NoiseSearch, TaskNoise, TransferGpRegressor, TransferOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Plsr,
    Mlp,
    Nngp,
    MlpFinetune,
    TransferGp,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Plsr => "plsr",
            Method::Mlp => "mlp",
            Method::Nngp => "nngp",
            Method::MlpFinetune => "mlp-finetune",
            Method::TransferGp => "transfer-gp",
        }
    }

    pub fn needs_source(self) -> bool {
        matches!(self, Method::MlpFinetune | Method::TransferGp)
    }
}

/// A number or a keyword such as `"auto"`, `"cv"`, `"grid"` or `"exact"`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Setting<T> {
    Value(T),
    Keyword(String),
}

impl<T: Copy> Setting<T> {
    fn resolve(&self, keyword: &str, field: &str) -> Result<Option<T>> {
        match self {
            Setting::Value(v) => Ok(Some(*v)),
            Setting::Keyword(k) if k == keyword => Ok(None),
            Setting::Keyword(k) => Err(Error::Config(format!("{field}: expected a number or \"{keyword}\", got \"{k}\""))),
        }
    }
}

/// Where a dataset comes from: a CSV file or the simulator.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub csv: Option<PathBuf>,
    pub trait_column: Option<String>,
    /// Simulator config path, or `"default"` for the bundled one.
    pub simulator: Option<PathBuf>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub geometry_shift: f64,
    #[serde(default)]
    pub plateau_shift: f64,
    /// Shuffle labels across rows, breaking any spectra/label relation.
    #[serde(default)]
    pub permute_labels: bool,
}

impl DatasetSpec {
    pub fn load(&self, base: &Path, domain: Domain) -> Result<LabeledDataset> {
        let ds = match (&self.csv, &self.simulator) {
            (Some(csv), None) => {
                if self.n.is_some() || self.geometry_shift != 0.0 || self.plateau_shift != 0.0 {
                    return Err(Error::Config("n and shifts only apply to simulated datasets".into()));
                }
                let opts = CsvOptions {
                    trait_column: self.trait_column.clone(),
                    domain,
                };
                load_csv(base.join(csv), &opts)?
            }
            (None, Some(sim)) => {
                let mut cfg = if sim.as_os_str() == "default" {
                    SimulatorConfig::default_config()
                } else {
                    SimulatorConfig::load(base.join(sim))?
                };
                if let Some(seed) = self.seed {
                    cfg = cfg.with_seed(seed);
                }
                let cfg = shift_domain(&cfg, self.geometry_shift, self.plateau_shift)?;
                let n = self.n.ok_or_else(|| Error::Config("simulated dataset needs n".into()))?;
                generate(&cfg, n)?.with_domain(domain)
            }
            _ => return Err(Error::Config("dataset needs exactly one of csv or simulator".into())),
        };
        if !self.permute_labels {
            return Ok(ds);
        }
        let mut idx: Vec<usize> = (0..ds.n_samples()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.unwrap_or(0));
        rng.set_stream(7);
        rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut rng);
        let y = DVector::from_iterator(idx.len(), idx.iter().map(|&i| ds.y()[i]));
        ds.with_labels(y)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlsrSettings {
    /// Fixed count or `"cv"`.
    pub components: Setting<usize>,
    pub max_components: usize,
    pub folds: usize,
}

impl Default for PlsrSettings {
    fn default() -> Self {
        Self {
            components: Setting::Keyword("cv".into()),
            max_components: 15,
            folds: 5,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpSettings {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
}

impl Default for MlpSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            hidden: vec![256, 256],
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            validation_fraction: t.validation_fraction,
        }
    }
}

impl MlpSettings {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            validation_fraction: self.validation_fraction,
            seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneSettings {
    pub freeze_layers: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Seed of the single source pretraining run.
    pub pretrain_seed: u64,
}

impl Default for FinetuneSettings {
    fn default() -> Self {
        let f = FineTuneConfig::default();
        Self {
            freeze_layers: f.freeze_layers,
            learning_rate: f.learning_rate,
            max_epochs: f.max_epochs,
            batch_size: f.batch_size,
            pretrain_seed: 0,
        }
    }
}

impl FinetuneSettings {
    pub fn config(&self, seed: u64) -> FineTuneConfig {
        FineTuneConfig {
            freeze_layers: self.freeze_layers,
            learning_rate: self.learning_rate,
            max_epochs: self.max_epochs,
            batch_size: self.batch_size,
            seed,
        }
    }
}

/// Kernel settings shared by `nngp` and `transfer-gp`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NngpSettings {
    pub depth: usize,
    pub sigma_w2: f64,
    pub sigma_b2: f64,
    /// Fixed noise variance or `"grid"`.
    pub noise: Setting<f64>,
}

impl Default for NngpSettings {
    fn default() -> Self {
        let p = NngpParams::default();
        Self {
            depth: p.depth,
            sigma_w2: p.sigma_w2,
            sigma_b2: p.sigma_b2,
            noise: Setting::Keyword("grid".into()),
        }
    }
}

impl NngpSettings {
    pub fn params(&self) -> Result<NngpParams> {
        NngpParams::new(self.depth, self.sigma_w2, self.sigma_b2)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransferSettings {
    /// Fixed λ or `"auto"`.
    pub lambda: Setting<f64>,
    /// Golden-section refinement around the best grid λ.
    pub refine: bool,
    /// `[source, target]` noise variances or `"auto"`.
    pub noise: Setting<[f64; 2]>,
    /// Landmark count or `"exact"`.
    pub landmarks: Setting<usize>,
    /// Source rows used per fit (seeded subsample when the source is larger).
    pub source_samples: usize,
}

impl Default for TransferSettings {
    fn default() -> Self {
        Self {
            lambda: Setting::Keyword("auto".into()),
            refine: false,
            noise: Setting::Keyword("auto".into()),
            landmarks: Setting::Keyword("exact".into()),
            source_samples: 200,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub methods: Vec<Method>,
    #[serde(default = "default_fractions")]
    pub fractions: Vec<f64>,
    pub seeds: Vec<u64>,
    pub target: DatasetSpec,
    pub source: Option<DatasetSpec>,
    #[serde(default)]
    pub save_predictions: bool,
    #[serde(default)]
    pub plsr: PlsrSettings,
    #[serde(default)]
    pub mlp: MlpSettings,
    #[serde(default)]
    pub finetune: FinetuneSettings,
    #[serde(default)]
    pub nngp: NngpSettings,
    #[serde(default)]
    pub transfer_gp: TransferSettings,
    /// Directory dataset paths resolve against (the config file's directory).
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_fractions() -> Vec<f64> {
    vec![0.05, 0.10]
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be nonempty".into()));
        }
        if self.fractions.is_empty() || self.fractions.iter().any(|&f| !(f > 0.0 && f < 1.0)) {
            return Err(Error::Config("fractions must be nonempty and inside (0, 1)".into()));
        }
        if self.methods.iter().any(|m| m.needs_source()) && self.source.is_none() {
            return Err(Error::Config("mlp-finetune and transfer-gp need a [source] dataset".into()));
        }
        self.plsr.components.resolve("cv", "plsr.components")?;
        self.nngp.noise.resolve("grid", "nngp.noise")?;
        self.nngp.params()?;
        self.transfer_gp.lambda.resolve("auto", "transfer_gp.lambda")?;
        self.transfer_gp.noise.resolve("auto", "transfer_gp.noise")?;
        self.transfer_gp.landmarks.resolve("exact", "transfer_gp.landmarks")?;
        self.finetune.config(0);
        Ok(())
    }

    /// Output directory; relative paths resolve against the working directory.
    pub fn output_path(&self) -> PathBuf {
        self.output_dir.clone()
    }

    fn transfer_options(&self, seed: u64) -> Result<TransferOptions> {
        let t = &self.transfer_gp;
        Ok(TransferOptions {
            params: self.nngp.params()?,
            lambda: match t.lambda.resolve("auto", "transfer_gp.lambda")? {
                Some(l) => LambdaChoice::Fixed(l),
                None => LambdaChoice::Auto {
                    grid: default_lambda_grid(),
                    refine: t.refine,
                },
            },
            noise: match t.noise.resolve("auto", "transfer_gp.noise")? {
                Some([s, tn]) => NoiseSearch::Fixed(TaskNoise { source: s, target: tn }),
                None => NoiseSearch::default_grid(),
            },
            approx: match t.landmarks.resolve("exact", "transfer_gp.landmarks")? {
                Some(m) => KernelApprox::Nystrom { landmarks: m, seed },
                None => KernelApprox::Exact,
            },
        })
    }
}

#[derive(Debug, Clone)]
pub struct ReportRow {
    pub method: Method,
    pub fraction: f64,
    pub seed: u64,
    pub metrics: Option<MetricReport>,
    pub lambda: Option<f64>,
    pub error: Option<String>,
    pub seconds: f64,
    pub lambda_curve: Option<LambdaEstimate>,
    /// `(target row index, prediction)` for every test row.
    pub predictions: Vec<(usize, f64)>,
}

impl ReportRow {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    pub fn all_failed(&self) -> bool {
        self.rows.iter().all(|r| !r.is_ok())
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        w.write_record(["method", "n_train_fraction", "seed", "rmse", "r2", "lambda", "status"])
            .expect("in-memory write");
        for r in &self.rows {
            let status = match &r.error {
                None => "ok".to_string(),
                Some(e) => format!("error: {e}"),
            };
            w.write_record([
                r.method.name().to_string(),
                r.fraction.to_string(),
                r.seed.to_string(),
                opt(r.metrics.map(|m| m.rmse)),
                opt(r.metrics.map(|m| m.r2)),
                opt(r.lambda),
                status,
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
    }

    pub fn timings_csv(&self) -> String {
        let mut s = String::from("row,method,n_train_fraction,seed,seconds\n");
        for (i, r) in self.rows.iter().enumerate() {
            let _ = writeln!(s, "{i},{},{},{},{:.3}", r.method.name(), r.fraction, r.seed, r.seconds);
        }
        s
    }

    /// Writes all output files into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: String, text: String| {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        put("report.csv".into(), self.to_csv())?;
        put("summary.txt".into(), summarize(self))?;
        put("timings.csv".into(), self.timings_csv())?;
        for (i, r) in self.rows.iter().enumerate() {
            if let Some(curve) = &r.lambda_curve {
                put(format!("lambda_curve_{i}.csv"), curve.to_csv())?;
            }
            if !r.predictions.is_empty() {
                let mut s = String::from("index,prediction\n");
                for (idx, p) in &r.predictions {
                    let _ = writeln!(s, "{idx},{p}");
                }
                put(format!("predictions_{i}.csv"), s)?;
            }
        }
        Ok(())
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per (method, fraction) table of mean and population std across seeds.
/// Failed rows are excluded from the statistics and counted.
pub fn summarize(report: &ExperimentReport) -> String {
    let mut groups: Vec<(Method, f64)> = Vec::new();
    for r in &report.rows {
        if !groups.iter().any(|&(m, f)| m == r.method && f == r.fraction) {
            groups.push((r.method, r.fraction));
        }
    }
    let mut s = format!(
        "{:<14} {:>8} {:>4} {:>6} {:>12} {:>12} {:>12} {:>12}\n",
        "method", "fraction", "n", "failed", "rmse_mean", "rmse_std", "r2_mean", "r2_std"
    );
    for (m, f) in groups {
        let rows: Vec<&ReportRow> = report.rows.iter().filter(|r| r.method == m && r.fraction == f).collect();
        let ok: Vec<MetricReport> = rows.iter().filter_map(|r| r.metrics).collect();
        let failed = rows.len() - ok.len();
        let stats = if ok.is_empty() {
            ["-".to_string(), "-".to_string(), "-".to_string(), "-".to_string()]
        } else {
            let (rm, rs) = mean_std(&ok.iter().map(|m| m.rmse).collect::<Vec<_>>());
            let (qm, qs) = mean_std(&ok.iter().map(|m| m.r2).collect::<Vec<_>>());
            [rm, rs, qm, qs].map(|v| format!("{v:.6}"))
        };
        let _ = writeln!(
            s,
            "{:<14} {:>8.6} {:>4} {:>6} {:>12} {:>12} {:>12} {:>12}",
            m.name(),
            f,
            ok.len(),
            failed,
            stats[0],
            stats[1],
            stats[2],
            stats[3]
        );
    }
    s
}

/// What a fitted method returns for the test features.
struct Fitted {
    predictions: DVector<f64>,
    lambda: Option<LambdaEstimate>,
}

/// Fits `method` on the training rows and predicts the test features. Test
/// labels never enter this function.
fn fit_and_predict(
    cfg: &ExperimentConfig,
    method: Method,
    train_set: &LabeledDataset,
    test_x: &DMatrix<f64>,
    source: Option<&LabeledDataset>,
    pretrained: Option<&MlpModel>,
    seed: u64,
) -> Result<Fitted> {
    let plain = |predictions| Fitted { predictions, lambda: None };
    match method {
        Method::Plsr => {
            let (x, y) = (train_set.x(), train_set.y());
            let k_cap = (x.nrows() - 1).min(x.ncols());
            let k = match cfg.plsr.components.resolve("cv", "plsr.components")? {
                Some(k) => k,
                None => select_components(x, y, cfg.plsr.max_components.min(k_cap), cfg.plsr.folds.min(x.nrows()), seed)?,
            };
            Ok(plain(PlsrModel::fit(x, y, k)?.predict(test_x)?))
        }
        Method::Mlp => {
            let arch = MlpArchitecture::with_hidden(train_set.n_bands(), &cfg.mlp.hidden)?;
            let model = train(train_set.x(), train_set.y(), &arch, &cfg.mlp.train_config(seed))?;
            Ok(plain(model.predict(test_x)?))
        }
        Method::MlpFinetune => {
            let base = pretrained.ok_or_else(|| Error::invalid("no pretrained model"))?;
            let model = fine_tune(base, train_set.x(), train_set.y(), &cfg.finetune.config(seed))?;
            Ok(plain(model.predict(test_x)?))
        }
        Method::Nngp => {
            let noise = match cfg.nngp.noise.resolve("grid", "nngp.noise")? {
                Some(v) => NoiseChoice::Fixed(v),
                None => NoiseChoice::Grid(default_noise_grid()),
            };
            let gp = NngpRegressor::fit(train_set.x(), train_set.y(), &cfg.nngp.params()?, &noise)?;
            Ok(plain(gp.predict(test_x)?.0))
        }
        Method::TransferGp => {
            let source = source.ok_or_else(|| Error::invalid("no source dataset"))?;
            let source = subsample(source, cfg.transfer_gp.source_samples, seed);
            let gp = TransferGpRegressor::fit(&source, train_set, &cfg.transfer_options(seed)?)?;
            Ok(Fitted {
                predictions: gp.predict(test_x)?.0,
                lambda: Some(gp.estimate),
            })
        }
    }
}

fn subsample(ds: &LabeledDataset, cap: usize, seed: u64) -> LabeledDataset {
    if ds.n_samples() <= cap {
        return ds.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    let mut idx = rand::seq::index::sample(&mut rng, ds.n_samples(), cap).into_vec();
    idx.sort_unstable();
    ds.select_rows(&idx)
}

struct RowSpec {
    method: Method,
    fraction: f64,
    seed: u64,
}

fn run_row(
    cfg: &ExperimentConfig,
    row: &RowSpec,
    target: &LabeledDataset,
    source: Option<&LabeledDataset>,
    pretrained: Option<&Result<MlpModel>>,
) -> Result<(MetricReport, Option<LambdaEstimate>, Vec<(usize, f64)>)> {
    let parts = split(target, row.fraction, row.seed)?;
    if parts.train_indices.iter().any(|i| parts.test_indices.binary_search(i).is_ok()) {
        return Err(Error::invalid("train and test rows overlap"));
    }
    let pretrained = match pretrained {
        Some(Ok(m)) => Some(m),
        Some(Err(e)) => return Err(Error::invalid(format!("pretraining failed: {e}"))),
        None => None,
    };
    let fitted = fit_and_predict(cfg, row.method, &parts.train, parts.test.x(), source, pretrained, row.seed)?;
    if fitted.predictions.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite predictions"));
    }
    let metrics = MetricReport::compute(parts.test.y(), &fitted.predictions)?;
    let preds = if cfg.save_predictions {
        parts.test_indices.iter().copied().zip(fitted.predictions.iter().copied()).collect()
    } else {
        Vec::new()
    };
    Ok((metrics, fitted.lambda, preds))
}

/// Runs every (method, fraction, seed) row. Dataset loading errors abort the
/// run; errors inside a row are recorded on that row only.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let target = cfg.target.load(&cfg.base_dir, Domain::Target)?;
    let source = match (&cfg.source, cfg.methods.iter().any(|m| m.needs_source())) {
        (Some(spec), true) => {
            let s = spec.load(&cfg.base_dir, Domain::Source)?;
            if s.grid() != target.grid() {
                return Err(Error::Config("source and target use different wavelength grids".into()));
            }
            Some(s)
        }
        _ => None,
    };

    // one source model shared by every fine-tuning row
    let pretrained: Option<Result<MlpModel>> = match (&source, cfg.methods.contains(&Method::MlpFinetune)) {
        (Some(src), true) => Some(
            MlpArchitecture::with_hidden(src.n_bands(), &cfg.mlp.hidden)
                .and_then(|arch| train(src.x(), src.y(), &arch, &cfg.mlp.train_config(cfg.finetune.pretrain_seed))),
        ),
        _ => None,
    };

    let specs: Vec<RowSpec> = cfg
        .methods
        .iter()
        .flat_map(|&method| {
            cfg.fractions
                .iter()
                .flat_map(move |&fraction| cfg.seeds.iter().map(move |&seed| RowSpec { method, fraction, seed }))
        })
        .collect();

    let rows = specs
        .par_iter()
        .map(|spec| {
            let start = Instant::now();
            let pre = pretrained.as_ref().filter(|_| spec.method == Method::MlpFinetune);
            let result = run_row(cfg, spec, &target, source.as_ref(), pre);
            let seconds = start.elapsed().as_secs_f64();
            let mut row = ReportRow {
                method: spec.method,
                fraction: spec.fraction,
                seed: spec.seed,
                metrics: None,
                lambda: None,
                error: None,
                seconds,
                lambda_curve: None,
                predictions: Vec::new(),
            };
            match result {
                Ok((metrics, curve, preds)) => {
                    row.metrics = Some(metrics);
                    row.lambda = curve.as_ref().map(|c| c.lambda);
                    row.lambda_curve = curve;
                    row.predictions = preds;
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            row
        })
        .collect();
    Ok(ExperimentReport { rows })
}

/// Loads `path`, runs it and writes the outputs. Returns the report.
pub fn run_config_file(path: impl AsRef<Path>) -> Result<ExperimentReport> {
    let cfg = ExperimentConfig::load(path)?;
    let report = run(&cfg)?;
    report.write(&cfg.output_path())?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: Method, fraction: f64, seed: u64, rmse: Option<f64>) -> ReportRow {
        ReportRow {
            method,
            fraction,
            seed,
            metrics: rmse.map(|rmse| MetricReport { rmse, r2: 0.5, n: 10 }),
            lambda: None,
            error: rmse.is_none().then(|| "boom".to_string()),
            seconds: 0.0,
            lambda_curve: None,
            predictions: Vec::new(),
        }
    }

    fn smoke_config(dir: &Path, methods: &str) -> ExperimentConfig {
        let text = format!(
            r#"
output_dir = "out"
methods = [{methods}]
fractions = [0.5]
seeds = [1]

[target]
simulator = "default"
n = 20
seed = 3

[source]
simulator = "default"
n = 30
seed = 4
geometry_shift = 0.05

[mlp]
hidden = [8]
max_epochs = 20

[finetune]
max_epochs = 10
"#
        );
        ExperimentConfig::from_toml_str(&text, dir).unwrap()
    }

    #[test]
    fn summary_statistics() {
        let report = ExperimentReport {
            rows: vec![
                row(Method::Plsr, 0.1, 1, Some(1.0)),
                row(Method::Plsr, 0.1, 2, Some(3.0)),
                row(Method::Plsr, 0.1, 3, None),
                row(Method::Mlp, 0.1, 1, Some(0.25)),
            ],
        };
        let s = summarize(&report);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 3);
        let plsr: Vec<&str> = lines[1].split_whitespace().collect();
        assert_eq!(plsr, ["plsr", "0.100000", "2", "1", "2.000000", "1.000000", "0.500000", "0.000000"]);
        let mlp: Vec<&str> = lines[2].split_whitespace().collect();
        assert_eq!(&mlp[4..6], ["0.250000", "0.000000"]);
    }

    #[test]
    fn single_plsr_row_smoke() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = smoke_config(dir.path(), r#""plsr""#);
        cfg.output_dir = dir.path().join("out");
        let report = run(&cfg).unwrap();
        assert_eq!(report.rows.len(), 1);
        let m = report.rows[0].metrics.unwrap();
        assert!(m.rmse.is_finite() && m.r2.is_finite());
        report.write(&cfg.output_path()).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
        assert!(csv.starts_with("method,n_train_fraction,seed,rmse,r2,lambda,status\nplsr,0.5,1,"));
    }

    #[test]
    fn all_methods_run_and_rerun_identically() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = smoke_config(dir.path(), r#""plsr", "mlp", "nngp", "mlp-finetune", "transfer-gp""#);
        let a = run(&cfg).unwrap();
        assert!(a.rows.iter().all(ReportRow::is_ok), "{}", a.to_csv());
        assert_eq!(a.rows.iter().map(|r| r.method).collect::<Vec<_>>(), cfg.methods);
        let t = &a.rows[4];
        assert!(t.lambda.is_some() && t.lambda_curve.is_some());
        let b = run(&cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn row_errors_are_isolated() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = smoke_config(dir.path(), r#""plsr", "nngp""#);
        cfg.nngp.noise = Setting::Value(-1.0);
        let report = run(&cfg).unwrap();
        assert!(report.rows[0].is_ok());
        assert!(!report.rows[1].is_ok());
        assert!(!report.all_failed());
        assert!(report.to_csv().contains("nngp,0.5,1,,,,error: "));
    }

    #[test]
    fn config_validation() {
        let dir = Path::new(".");
        let base = "output_dir = \"o\"\nseeds = [1]\n[target]\nsimulator = \"default\"\nn = 10\n";
        assert!(ExperimentConfig::from_toml_str(&format!("methods = []\n{base}"), dir).is_err());
        assert!(ExperimentConfig::from_toml_str(&format!("methods = [\"transfer-gp\"]\n{base}"), dir).is_err());
        assert!(ExperimentConfig::from_toml_str(&format!("methods = [\"svm\"]\n{base}"), dir).is_err());
        assert!(ExperimentConfig::from_toml_str(&format!("methods = [\"plsr\"]\nfractions = [1.0]\n{base}"), dir).is_err());
        let ok = ExperimentConfig::from_toml_str(&format!("methods = [\"plsr\"]\n{base}"), dir).unwrap();
        assert_eq!(ok.fractions, vec![0.05, 0.10]);
        let bad_kw = format!("methods = [\"plsr\"]\n{base}[plsr]\ncomponents = \"all\"\n");
        assert!(ExperimentConfig::from_toml_str(&bad_kw, dir).is_err());
    }
}
