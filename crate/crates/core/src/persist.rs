//! Plain-text model files.
//!
//! ```text
//! PHENOTL-MODEL 1
//! kind nngp
//! text trait chl
//! vector grid 3 4e2 4.2e2 4.4e2
//! scalar noise 1e-2
//! matrix x 2 3 ...
//! ```
//!
//! One entry per line: `scalar`, `text`, `vector <len>` or `matrix <rows> <cols>`
//! (row-major), then the values. Floats use the shortest exact round-trip
//! form, so a reloaded model predicts bit-for-bit what the saved one did.
//! GP factorizations are not stored; they are recomputed from the stored
//! training inputs on load.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::data::{LabeledDataset, Scaler, WavelengthGrid};
use crate::error::{Error, Result};
use crate::linalg::JitteredCholesky;
use crate::mlp::{Activation, DenseLayer, MlpArchitecture, MlpModel};
use crate::nngp::{kernel_matrix, GpModel, NngpParams, NngpRegressor};
use crate::plsr::PlsrModel;
use crate::transfer::{KernelApprox, LambdaEstimate, TaskNoise, TransferData, TransferGpModel, TransferGpRegressor};

pub const MAGIC: &str = "PHENOTL-MODEL 1";

#[derive(Debug, Clone)]
pub enum SavedModel {
    Plsr(PlsrModel),
    Mlp(MlpModel),
    Nngp(NngpRegressor),
    TransferGp(TransferGpRegressor),
}

impl SavedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            SavedModel::Plsr(_) => "plsr",
            SavedModel::Mlp(_) => "mlp",
            SavedModel::Nngp(_) => "nngp",
            SavedModel::TransferGp(_) => "transfer-gp",
        }
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        match self {
            SavedModel::Plsr(m) => m.predict(x),
            SavedModel::Mlp(m) => m.predict(x),
            SavedModel::Nngp(m) => Ok(m.predict(x)?.0),
            SavedModel::TransferGp(m) => Ok(m.predict(x)?.0),
        }
    }
}

/// A fitted model together with the grid and trait it was trained on.
#[derive(Debug, Clone)]
pub struct ModelFile {
    pub grid: WavelengthGrid,
    pub trait_name: String,
    pub model: SavedModel,
}

impl ModelFile {
    pub fn new(grid: WavelengthGrid, trait_name: impl Into<String>, model: SavedModel) -> Self {
        Self {
            grid,
            trait_name: trait_name.into(),
            model,
        }
    }

    /// Predictions for a dataset on the same wavelength grid.
    pub fn predict(&self, ds: &LabeledDataset) -> Result<DVector<f64>> {
        if ds.grid() != &self.grid {
            return Err(Error::invalid("dataset wavelength grid differs from the model's"));
        }
        self.model.predict(ds.x())
    }

    pub fn to_text(&self) -> String {
        let mut w = Writer::default();
        w.line(MAGIC);
        w.line(&format!("kind {}", self.model.kind()));
        w.text("trait", &self.trait_name);
        w.vector("grid", self.grid.as_slice());
        match &self.model {
            SavedModel::Plsr(m) => {
                w.matrix("weights", &m.weights);
                w.matrix("loadings", &m.loadings);
                w.vector("q", m.q.as_slice());
                w.scaler(&m.scaler);
            }
            SavedModel::Mlp(m) => {
                let widths: Vec<f64> = m.arch.widths.iter().map(|&v| v as f64).collect();
                w.vector("widths", &widths);
                w.text("activation", "relu");
                for (l, layer) in m.layers.iter().enumerate() {
                    w.matrix(&format!("w{l}"), &layer.weights);
                    w.vector(&format!("b{l}"), layer.bias.as_slice());
                }
                match &m.scaler {
                    Some(s) => w.scaler(s),
                    None => w.text("scaler", "none"),
                }
            }
            SavedModel::Nngp(m) => {
                w.params(&m.gp.kernel);
                w.scalar("noise", m.gp.noise);
                w.matrix("x", &m.gp.x);
                w.vector("alpha", m.gp.alpha.as_slice());
                w.scaler(&m.scaler);
            }
            SavedModel::TransferGp(m) => {
                let t = &m.model;
                w.params(&t.params);
                w.scalar("lambda", t.lambda);
                w.scalar("noise_source", t.noise.source);
                w.scalar("noise_target", t.noise.target);
                match nystrom_settings(m) {
                    Some((landmarks, seed)) => {
                        w.text("approx", "nystrom");
                        w.scalar("landmarks", landmarks as f64);
                        w.text("landmark_seed", &seed.to_string());
                    }
                    None => w.text("approx", "exact"),
                }
                w.matrix("xs", &t.data.xs);
                w.vector("ys", t.data.ys.as_slice());
                w.matrix("xt", &t.data.xt);
                w.vector("yt", t.data.yt.as_slice());
                w.vector("lambda_grid", &m.estimate.grid);
                w.vector("lambda_lml", &m.estimate.lml);
                w.scaler(&m.scaler);
            }
        }
        w.out
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim_end() == MAGIC => {}
            _ => return Err(Error::ModelFormat(format!("{origin}: missing '{MAGIC}' header"))),
        }
        let kind = match lines.next() {
            Some((_, l)) => l
                .strip_prefix("kind ")
                .map(str::trim)
                .ok_or_else(|| Error::ModelFormat(format!("{origin}:2: expected 'kind <name>'")))?
                .to_string(),
            None => return Err(Error::ModelFormat(format!("{origin}: missing kind line"))),
        };
        let mut e = Entries::default();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            e.read_line(line, i + 1, origin)?;
        }
        let e = Reader { entries: e, origin };

        let grid = WavelengthGrid::new(e.vector("grid")?)?;
        let trait_name = e.text("trait")?.to_string();
        let model = match kind.as_str() {
            "plsr" => SavedModel::Plsr(PlsrModel {
                weights: e.matrix("weights")?,
                loadings: e.matrix("loadings")?,
                q: DVector::from_vec(e.vector("q")?),
                scaler: e.scaler()?,
            }),
            "mlp" => {
                let widths = e.vector("widths")?.iter().map(|&v| v as usize).collect();
                if e.text("activation")? != "relu" {
                    return Err(e.err("unsupported activation"));
                }
                let arch = MlpArchitecture::new(widths)?;
                let layers = (0..arch.n_layers())
                    .map(|l| {
                        Ok(DenseLayer {
                            weights: e.matrix(&format!("w{l}"))?,
                            bias: DVector::from_vec(e.vector(&format!("b{l}"))?),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                for (layer, w) in layers.iter().zip(arch.widths.windows(2)) {
                    if layer.weights.shape() != (w[1], w[0]) || layer.bias.len() != w[1] {
                        return Err(e.err("layer shape does not match widths"));
                    }
                }
                let scaler = match e.entries.text.get("scaler").map(String::as_str) {
                    Some("none") => None,
                    _ => Some(e.scaler()?),
                };
                SavedModel::Mlp(MlpModel {
                    arch: MlpArchitecture {
                        activation: Activation::Relu,
                        ..arch
                    },
                    layers,
                    scaler,
                    log: Vec::new(),
                })
            }
            "nngp" => {
                let params = e.params()?;
                let noise = e.scalar("noise")?;
                let x = e.matrix("x")?;
                let alpha = DVector::from_vec(e.vector("alpha")?);
                if alpha.len() != x.nrows() {
                    return Err(e.err("alpha length does not match training rows"));
                }
                let k = kernel_matrix(&x, &x, &params)?;
                let chol = JitteredCholesky::factor(&k, &DVector::from_element(x.nrows(), noise))?;
                SavedModel::Nngp(NngpRegressor {
                    scaler: e.scaler()?,
                    gp: GpModel {
                        x,
                        kernel: params,
                        noise,
                        chol,
                        alpha,
                    },
                })
            }
            "transfer-gp" => {
                let params = e.params()?;
                let lambda = e.scalar("lambda")?;
                let noise = TaskNoise {
                    source: e.scalar("noise_source")?,
                    target: e.scalar("noise_target")?,
                };
                let data = TransferData::new(
                    e.matrix("xs")?,
                    DVector::from_vec(e.vector("ys")?),
                    e.matrix("xt")?,
                    DVector::from_vec(e.vector("yt")?),
                )?;
                let model = match e.text("approx")? {
                    "exact" => TransferGpModel::fit(data, lambda, params, noise)?,
                    "nystrom" => {
                        let m = e.scalar("landmarks")? as usize;
                        let seed = e.text("landmark_seed")?.parse().map_err(|_| e.err("bad landmark_seed"))?;
                        TransferGpModel::fit_nystrom(data, lambda, params, noise, m, seed)?
                    }
                    other => return Err(e.err(&format!("unknown approx '{other}'"))),
                };
                SavedModel::TransferGp(TransferGpRegressor {
                    scaler: e.scaler()?,
                    model,
                    estimate: LambdaEstimate {
                        lambda,
                        noise,
                        grid: e.vector("lambda_grid")?,
                        lml: e.vector("lambda_lml")?,
                    },
                })
            }
            other => return Err(Error::ModelFormat(format!("{origin}: unknown model kind '{other}'"))),
        };
        if let SavedModel::Mlp(m) = &model {
            if m.input_dim() != grid.len() {
                return Err(e.err("network input width does not match grid"));
            }
        }
        Ok(Self { grid, trait_name, model })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}

fn nystrom_settings(m: &TransferGpRegressor) -> Option<(usize, u64)> {
    match m.model.approx {
        KernelApprox::Exact => None,
        KernelApprox::Nystrom { landmarks, seed } => Some((landmarks, seed)),
    }
}

#[derive(Default)]
struct Writer {
    out: String,
}

impl Writer {
    fn line(&mut self, s: &str) {
        self.out.push_str(s);
        self.out.push('\n');
    }

    fn text(&mut self, name: &str, value: &str) {
        self.line(&format!("text {name} {value}"));
    }

    fn scalar(&mut self, name: &str, v: f64) {
        self.line(&format!("scalar {name} {v:e}"));
    }

    fn vector(&mut self, name: &str, v: &[f64]) {
        let mut s = format!("vector {name} {}", v.len());
        for x in v {
            let _ = write!(s, " {x:e}");
        }
        self.line(&s);
    }

    fn matrix(&mut self, name: &str, m: &DMatrix<f64>) {
        let mut s = format!("matrix {name} {} {}", m.nrows(), m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                let _ = write!(s, " {:e}", m[(r, c)]);
            }
        }
        self.line(&s);
    }

    fn scaler(&mut self, s: &Scaler) {
        self.vector("x_mean", s.x_mean.as_slice());
        self.vector("x_std", s.x_std.as_slice());
        self.scalar("y_mean", s.y_mean);
        self.scalar("y_std", s.y_std);
    }

    fn params(&mut self, p: &NngpParams) {
        self.scalar("depth", p.depth as f64);
        self.scalar("sigma_w2", p.sigma_w2);
        self.scalar("sigma_b2", p.sigma_b2);
        self.text("nonlinearity", "relu");
    }
}

#[derive(Default)]
struct Entries {
    scalar: BTreeMap<String, f64>,
    text: BTreeMap<String, String>,
    vector: BTreeMap<String, Vec<f64>>,
    matrix: BTreeMap<String, DMatrix<f64>>,
}

impl Entries {
    fn read_line(&mut self, line: &str, lineno: usize, origin: &str) -> Result<()> {
        let bad = |msg: &str| Error::ModelFormat(format!("{origin}:{lineno}: {msg}"));
        let (tag, rest) = line.split_once(' ').ok_or_else(|| bad("malformed entry"))?;
        let (name, rest) = rest.split_once(' ').unwrap_or((rest, ""));
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("'{s}' is not a number")));
        let count = |s: Option<&str>| -> Result<usize> {
            s.ok_or_else(|| bad("missing size"))?.parse::<usize>().map_err(|_| bad("bad size"))
        };
        match tag {
            "text" => {
                self.text.insert(name.into(), rest.to_string());
            }
            "scalar" => {
                self.scalar.insert(name.into(), num(rest.trim())?);
            }
            "vector" => {
                let mut it = rest.split_whitespace();
                let n = count(it.next())?;
                let v = it.map(num).collect::<Result<Vec<_>>>()?;
                if v.len() != n {
                    return Err(bad(&format!("vector {name} has {} values, expected {n}", v.len())));
                }
                self.vector.insert(name.into(), v);
            }
            "matrix" => {
                let mut it = rest.split_whitespace();
                let r = count(it.next())?;
                let c = count(it.next())?;
                let v = it.map(num).collect::<Result<Vec<_>>>()?;
                if v.len() != r * c {
                    return Err(bad(&format!("matrix {name} has {} values, expected {}", v.len(), r * c)));
                }
                self.matrix.insert(name.into(), DMatrix::from_row_slice(r, c, &v));
            }
            other => return Err(bad(&format!("unknown entry type '{other}'"))),
        }
        Ok(())
    }
}

struct Reader<'a> {
    entries: Entries,
    origin: &'a str,
}

impl Reader<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::ModelFormat(format!("{}: {msg}", self.origin))
    }

    fn missing(&self, name: &str) -> Error {
        self.err(&format!("missing entry '{name}'"))
    }

    fn scalar(&self, name: &str) -> Result<f64> {
        self.entries.scalar.get(name).copied().ok_or_else(|| self.missing(name))
    }

    fn text(&self, name: &str) -> Result<&str> {
        self.entries.text.get(name).map(String::as_str).ok_or_else(|| self.missing(name))
    }

    fn vector(&self, name: &str) -> Result<Vec<f64>> {
        self.entries.vector.get(name).cloned().ok_or_else(|| self.missing(name))
    }

    fn matrix(&self, name: &str) -> Result<DMatrix<f64>> {
        self.entries.matrix.get(name).cloned().ok_or_else(|| self.missing(name))
    }

    fn scaler(&self) -> Result<Scaler> {
        let x_mean = DVector::from_vec(self.vector("x_mean")?);
        let x_std = DVector::from_vec(self.vector("x_std")?);
        if x_mean.len() != x_std.len() {
            return Err(self.err("scaler mean/std lengths differ"));
        }
        Ok(Scaler {
            x_mean,
            x_std,
            y_mean: self.scalar("y_mean")?,
            y_std: self.scalar("y_std")?,
        })
    }

    fn params(&self) -> Result<NngpParams> {
        if self.text("nonlinearity")? != "relu" {
            return Err(self.err("unsupported nonlinearity"));
        }
        NngpParams::new(self.scalar("depth")? as usize, self.scalar("sigma_w2")?, self.scalar("sigma_b2")?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::{train, TrainConfig};
    use crate::nngp::NoiseChoice;
    use crate::simulator::{generate, SimulatorConfig};
    use crate::transfer::{LambdaChoice, NoiseSearch, TransferOptions};

    fn small() -> LabeledDataset {
        let mut cfg = SimulatorConfig::default_config().with_seed(4);
        cfg.grid = WavelengthGrid::regular(400.0, 2500.0, 100.0).unwrap();
        generate(&cfg, 30).unwrap()
    }

    fn round_trip(file: &ModelFile, ds: &LabeledDataset) {
        let text = file.to_text();
        let back = ModelFile::parse(&text, "mem").unwrap();
        assert_eq!(back.model.kind(), file.model.kind());
        assert_eq!(back.trait_name, file.trait_name);
        assert_eq!(back.predict(ds).unwrap(), file.predict(ds).unwrap());
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn every_kind_round_trips() {
        let ds = small();
        let grid = ds.grid().clone();
        let plsr = PlsrModel::fit(ds.x(), ds.y(), 3).unwrap();
        round_trip(&ModelFile::new(grid.clone(), "chl", SavedModel::Plsr(plsr)), &ds);

        let arch = MlpArchitecture::with_hidden(ds.n_bands(), &[8]).unwrap();
        let cfg = TrainConfig {
            max_epochs: 5,
            ..TrainConfig::default()
        };
        let mlp = train(ds.x(), ds.y(), &arch, &cfg).unwrap();
        round_trip(&ModelFile::new(grid.clone(), "chl", SavedModel::Mlp(mlp)), &ds);

        let gp = NngpRegressor::fit(ds.x(), ds.y(), &NngpParams::default(), &NoiseChoice::Fixed(0.01)).unwrap();
        round_trip(&ModelFile::new(grid.clone(), "chl", SavedModel::Nngp(gp)), &ds);

        let src = {
            let mut cfg = SimulatorConfig::default_config().with_seed(9);
            cfg.grid = grid.clone();
            generate(&cfg, 20).unwrap()
        };
        for approx in [KernelApprox::Exact, KernelApprox::Nystrom { landmarks: 10, seed: 3 }] {
            let opts = TransferOptions {
                lambda: LambdaChoice::Fixed(0.4),
                noise: NoiseSearch::Fixed(TaskNoise { source: 0.02, target: 0.01 }),
                approx,
                ..TransferOptions::default()
            };
            let t = TransferGpRegressor::fit(&src, &ds, &opts).unwrap();
            round_trip(&ModelFile::new(grid.clone(), "chl", SavedModel::TransferGp(t)), &ds);
        }
    }

    #[test]
    fn malformed_files() {
        assert!(matches!(ModelFile::parse("nope", "m"), Err(Error::ModelFormat(_))));
        let bad = format!("{MAGIC}\nkind plsr\nvector grid 2 400 x\n");
        let err = ModelFile::parse(&bad, "m").unwrap_err().to_string();
        assert!(err.contains("m:3"), "{err}");
        let missing = format!("{MAGIC}\nkind plsr\ntext trait chl\nvector grid 2 400 500\n");
        assert!(ModelFile::parse(&missing, "m").unwrap_err().to_string().contains("weights"));
        let unknown = format!("{MAGIC}\nkind forest\nvector grid 1 400\ntext trait chl\n");
        assert!(ModelFile::parse(&unknown, "m").unwrap_err().to_string().contains("forest"));
    }

    #[test]
    fn grid_mismatch_rejected() {
        let ds = small();
        let plsr = PlsrModel::fit(ds.x(), ds.y(), 2).unwrap();
        let other = WavelengthGrid::regular(400.0, 2500.0, 300.0).unwrap();
        let f = ModelFile::new(other, "chl", SavedModel::Plsr(plsr));
        assert!(f.predict(&ds).is_err());
    }
}
