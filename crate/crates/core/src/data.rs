//! Labeled spectra, CSV ingestion, seeded splitting and per-band standardization.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_WAVELENGTH_NM: f64 = 400.0;
pub const MAX_WAVELENGTH_NM: f64 = 2500.0;

/// Accepted reflectance range on ingestion; the slack absorbs sensor noise.
pub const REFLECTANCE_RANGE: (f64, f64) = (-0.05, 1.05);

pub const DEFAULT_TRAIT: &str = "chl";

/// Band centers in nm, strictly increasing and within the optical domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec")]
#[serde(into = "GridSpec")]
pub struct WavelengthGrid(Vec<f64>);

/// Serialized form of a grid: either an explicit list or a regular range.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    List { wavelengths: Vec<f64> },
    Range { start: f64, end: f64, step: f64 },
}

impl TryFrom<GridSpec> for WavelengthGrid {
    type Error = Error;

    fn try_from(spec: GridSpec) -> Result<Self> {
        match spec {
            GridSpec::List { wavelengths } => WavelengthGrid::new(wavelengths),
            GridSpec::Range { start, end, step } => WavelengthGrid::regular(start, end, step),
        }
    }
}

impl From<WavelengthGrid> for GridSpec {
    fn from(grid: WavelengthGrid) -> Self {
        GridSpec::List {
            wavelengths: grid.0,
        }
    }
}

impl WavelengthGrid {
    pub fn new(wavelengths: Vec<f64>) -> Result<Self> {
        if wavelengths.is_empty() {
            return Err(Error::invalid("wavelength grid is empty"));
        }
        for (i, &w) in wavelengths.iter().enumerate() {
            if !w.is_finite() || !(MIN_WAVELENGTH_NM..=MAX_WAVELENGTH_NM).contains(&w) {
                return Err(Error::invalid(format!(
                    "wavelength {w} at position {i} outside [{MIN_WAVELENGTH_NM}, {MAX_WAVELENGTH_NM}] nm"
                )));
            }
            if i > 0 && w <= wavelengths[i - 1] {
                return Err(Error::invalid(format!(
                    "non-increasing grid at position {i} ({} then {w})",
                    wavelengths[i - 1]
                )));
            }
        }
        Ok(Self(wavelengths))
    }

    /// `start, start+step, ...` up to and including `end` (within half a step).
    pub fn regular(start: f64, end: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || end < start {
            return Err(Error::invalid(format!(
                "bad grid range start={start} end={end} step={step}"
            )));
        }
        let count = ((end - start) / step + 0.5).floor() as usize + 1;
        Self::new((0..count).map(|i| start + step * i as f64).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn first(&self) -> f64 {
        self.0[0]
    }

    pub fn last(&self) -> f64 {
        self.0[self.0.len() - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

/// Reflectance spectra (one row per sample) with one scalar trait per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    grid: WavelengthGrid,
    x: DMatrix<f64>,
    y: DVector<f64>,
    domain: Domain,
    standardized: bool,
    trait_name: String,
}

impl LabeledDataset {
    pub fn new(grid: WavelengthGrid, x: DMatrix<f64>, y: DVector<f64>, domain: Domain) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                got: y.len(),
            });
        }
        if x.ncols() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: x.ncols(),
            });
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset contains NaN or infinite entries"));
        }
        Ok(Self {
            grid,
            x,
            y,
            domain,
            standardized: false,
            trait_name: DEFAULT_TRAIT.to_string(),
        })
    }

    pub fn with_trait_name(mut self, name: impl Into<String>) -> Self {
        self.trait_name = name.into();
        self
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    pub fn grid(&self) -> &WavelengthGrid {
        &self.grid
    }
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }
    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }
    pub fn domain(&self) -> Domain {
        self.domain
    }
    pub fn is_standardized(&self) -> bool {
        self.standardized
    }
    pub fn trait_name(&self) -> &str {
        &self.trait_name
    }
    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }
    pub fn n_bands(&self) -> usize {
        self.x.ncols()
    }

    /// Rows at `indices`, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> LabeledDataset {
        let x = self.x.select_rows(indices);
        let y = DVector::from_iterator(indices.len(), indices.iter().map(|&i| self.y[i]));
        LabeledDataset {
            grid: self.grid.clone(),
            x,
            y,
            domain: self.domain,
            standardized: self.standardized,
            trait_name: self.trait_name.clone(),
        }
    }

    /// Same spectra with labels replaced; used by experiments to build unrelated tasks.
    pub fn with_labels(&self, y: DVector<f64>) -> Result<LabeledDataset> {
        if y.len() != self.y.len() {
            return Err(Error::DimensionMismatch {
                expected: self.y.len(),
                got: y.len(),
            });
        }
        let mut out = self.clone();
        out.y = y;
        Ok(out)
    }
}

/// Options controlling how a CSV file is interpreted.
#[derive(Debug, Clone)]
pub struct CsvOptions {
    /// Trait column header. `None` picks the single non-numeric header cell.
    pub trait_column: Option<String>,
    pub domain: Domain,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            trait_column: None,
            domain: Domain::Target,
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, &path.display().to_string(), opts)
}

/// Parses CSV text; `origin` is only used in error messages.
pub fn parse_csv(text: &str, origin: &str, opts: &CsvOptions) -> Result<LabeledDataset> {
    let perr = |line: usize, column: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        column,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| perr(1, 0, e.to_string()))?
        .clone();

    let trait_idx = match &opts.trait_column {
        Some(name) => header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| perr(1, 0, format!("missing trait column \"{name}\"")))?,
        None => {
            let candidates: Vec<usize> = header
                .iter()
                .enumerate()
                .filter(|(_, h)| h.parse::<f64>().is_err())
                .map(|(i, _)| i)
                .collect();
            match candidates.as_slice() {
                [one] => *one,
                [] => return Err(perr(1, 0, "missing trait column".into())),
                _ => {
                    return Err(perr(
                        1,
                        candidates[1] + 1,
                        "more than one non-numeric header; name the trait column".into(),
                    ))
                }
            }
        }
    };

    let mut band_cols = Vec::new();
    let mut wavelengths = Vec::new();
    for (i, h) in header.iter().enumerate() {
        if i == trait_idx {
            continue;
        }
        let w: f64 = h
            .parse()
            .map_err(|_| perr(1, i + 1, format!("band header \"{h}\" is not a wavelength")))?;
        if let Some(&prev) = wavelengths.last() {
            if w <= prev {
                return Err(perr(1, i + 1, format!("non-increasing grid ({prev} then {w})")));
            }
        }
        band_cols.push(i);
        wavelengths.push(w);
    }
    let grid = WavelengthGrid::new(wavelengths).map_err(|e| perr(1, 0, e.to_string()))?;

    let d = grid.len();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let line = r + 2;
        let record = record.map_err(|e| perr(line, 0, e.to_string()))?;
        if record.len() != header.len() {
            return Err(perr(
                line,
                0,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        for (&c, &w) in band_cols.iter().zip(grid.as_slice()) {
            let cell = &record[c];
            let v: f64 = cell
                .parse()
                .map_err(|_| perr(line, c + 1, format!("non-numeric reflectance \"{cell}\"")))?;
            if !v.is_finite() || v < REFLECTANCE_RANGE.0 || v > REFLECTANCE_RANGE.1 {
                return Err(perr(
                    line,
                    c + 1,
                    format!("reflectance {v} at {w} nm outside [{}, {}]", REFLECTANCE_RANGE.0, REFLECTANCE_RANGE.1),
                ));
            }
            values.push(v);
        }
        let cell = &record[trait_idx];
        let y: f64 = cell
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| perr(line, trait_idx + 1, format!("non-numeric trait value \"{cell}\"")))?;
        labels.push(y);
    }
    let n = labels.len();
    let x = DMatrix::from_row_slice(n, d, &values);
    let trait_name = header[trait_idx].to_string();
    Ok(LabeledDataset::new(grid, x, DVector::from_vec(labels), opts.domain)?.with_trait_name(trait_name))
}

fn format_wavelength(w: f64) -> String {
    if w.fract() == 0.0 && w.abs() < 1e15 {
        format!("{}", w as i64)
    } else {
        format!("{w}")
    }
}

/// Serializes a dataset as CSV: band columns then the trait column.
///
/// Values use the shortest representation that parses back to the same `f64`.
pub fn to_csv_string(ds: &LabeledDataset) -> String {
    let mut out = String::new();
    let header: Vec<String> = ds
        .grid
        .as_slice()
        .iter()
        .map(|&w| format_wavelength(w))
        .chain(std::iter::once(ds.trait_name.clone()))
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..ds.n_samples() {
        for j in 0..ds.n_bands() {
            let _ = write!(out, "{},", ds.x[(i, j)]);
        }
        let _ = writeln!(out, "{}", ds.y[i]);
    }
    out
}

pub fn save_csv(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_csv_string(ds)).map_err(|e| Error::io(path, e))
}

/// A train/test partition with the row indices into the parent dataset.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Number of training rows `round(fraction * n)`, validated to leave both sides nonempty.
pub fn train_size(n: usize, fraction: f64) -> Result<usize> {
    if n < 2 {
        return Err(Error::invalid(format!("cannot split {n} samples")));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("fraction {fraction} outside (0, 1)")));
    }
    let k = (fraction * n as f64).round() as usize;
    if k < 1 || k > n - 1 {
        return Err(Error::invalid(format!(
            "fraction {fraction} of {n} samples yields an empty train or test set"
        )));
    }
    Ok(k)
}

/// Seeded uniform shuffle; the first `round(fraction·n)` shuffled rows form the training set.
///
/// Index lists are returned sorted so both subsets keep file order.
pub fn split(ds: &LabeledDataset, fraction: f64, seed: u64) -> Result<Split> {
    let n = ds.n_samples();
    let k = train_size(n, fraction)?;
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let mut train_indices = idx[..k].to_vec();
    let mut test_indices = idx[k..].to_vec();
    train_indices.sort_unstable();
    test_indices.sort_unstable();
    Ok(Split {
        train: ds.select_rows(&train_indices),
        test: ds.select_rows(&test_indices),
        train_indices,
        test_indices,
    })
}

/// Per-band and label standardization statistics (population convention).
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub x_mean: DVector<f64>,
    pub x_std: DVector<f64>,
    pub y_mean: f64,
    pub y_std: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    // flat bands (within rounding of the mean) standardize with unit scale
    if std <= 1e-12 * mean.abs().max(1.0) {
        (mean, 1.0)
    } else {
        (mean, std)
    }
}

impl Scaler {
    pub fn fit(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::invalid("cannot fit a scaler on zero samples"));
        }
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                got: y.len(),
            });
        }
        let d = x.ncols();
        let mut x_mean = DVector::zeros(d);
        let mut x_std = DVector::zeros(d);
        for j in 0..d {
            let (m, s) = mean_std(x.column(j).iter().copied());
            x_mean[j] = m;
            x_std[j] = s;
        }
        let (y_mean, y_std) = mean_std(y.iter().copied());
        Ok(Self {
            x_mean,
            x_std,
            y_mean,
            y_std,
        })
    }

    /// Identity transform for `d` bands.
    pub fn identity(d: usize) -> Self {
        Self {
            x_mean: DVector::zeros(d),
            x_std: DVector::from_element(d, 1.0),
            y_mean: 0.0,
            y_std: 1.0,
        }
    }

    pub fn n_bands(&self) -> usize {
        self.x_mean.len()
    }

    fn check_dim(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.ncols() != self.n_bands() {
            return Err(Error::DimensionMismatch {
                expected: self.n_bands(),
                got: x.ncols(),
            });
        }
        Ok(())
    }

    pub fn transform_x(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        let mut out = x.clone();
        for j in 0..out.ncols() {
            let (m, s) = (self.x_mean[j], self.x_std[j]);
            out.column_mut(j).apply(|v| *v = (*v - m) / s);
        }
        Ok(out)
    }

    pub fn inverse_x(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        let mut out = x.clone();
        for j in 0..out.ncols() {
            let (m, s) = (self.x_mean[j], self.x_std[j]);
            out.column_mut(j).apply(|v| *v = *v * s + m);
        }
        Ok(out)
    }

    pub fn transform_y(&self, y: &DVector<f64>) -> DVector<f64> {
        y.map(|v| (v - self.y_mean) / self.y_std)
    }

    pub fn inverse_y(&self, y: &DVector<f64>) -> DVector<f64> {
        y.map(|v| v * self.y_std + self.y_mean)
    }
}

pub fn fit_scaler(train: &LabeledDataset) -> Result<Scaler> {
    Scaler::fit(&train.x, &train.y)
}

pub fn apply_scaler(scaler: &Scaler, ds: &LabeledDataset, transform_labels: bool) -> Result<LabeledDataset> {
    let mut out = ds.clone();
    out.x = scaler.transform_x(&ds.x)?;
    if transform_labels {
        out.y = scaler.transform_y(&ds.y);
    }
    out.standardized = true;
    Ok(out)
}

/// Undoes [`apply_scaler`]; `labels_were_transformed` must match the forward call.
pub fn invert_scaler(scaler: &Scaler, ds: &LabeledDataset, labels_were_transformed: bool) -> Result<LabeledDataset> {
    let mut out = ds.clone();
    out.x = scaler.inverse_x(&ds.x)?;
    if labels_were_transformed {
        out.y = scaler.inverse_y(&ds.y);
    }
    out.standardized = false;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn csv3() -> &'static str {
        "400,410,420,chl\n0.1,0.2,0.3,40\n0.2,0.3,0.4,41.5\n0.3,0.4,0.5,30\n"
    }

    #[test]
    fn parses_simple_file() {
        let ds = parse_csv(csv3(), "t.csv", &CsvOptions::default()).unwrap();
        assert_eq!(ds.n_bands(), 3);
        assert_eq!(ds.n_samples(), 3);
        assert_eq!(ds.grid().as_slice(), &[400.0, 410.0, 420.0]);
        assert_eq!(ds.y()[1], 41.5);
        assert_eq!(ds.x()[(2, 0)], 0.3);
        assert_eq!(ds.trait_name(), "chl");
    }

    #[test]
    fn rejects_decreasing_grid() {
        let err = parse_csv("500,450,chl\n0.1,0.2,3\n", "t", &CsvOptions::default()).unwrap_err();
        assert!(err.to_string().contains("non-increasing grid"), "{err}");
    }

    #[test]
    fn bad_trait_cell_names_row() {
        let text = "400,410,chl\n0.1,0.2,3\n0.1,0.2,abc\n";
        let err = parse_csv(text, "t", &CsvOptions::default()).unwrap_err();
        match err {
            Error::Parse { line, column, .. } => {
                assert_eq!(line, 3);
                assert_eq!(column, 3);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn missing_named_trait_column() {
        let opts = CsvOptions {
            trait_column: Some("nitrogen".into()),
            ..Default::default()
        };
        let err = parse_csv(csv3(), "t", &opts).unwrap_err();
        assert!(err.to_string().contains("missing trait column"));
    }

    #[test]
    fn reflectance_out_of_range_is_located() {
        let err = parse_csv("400,410,chl\n0.1,1.2,3\n", "t", &CsvOptions::default()).unwrap_err();
        match err {
            Error::Parse { line, column, .. } => assert_eq!((line, column), (2, 2)),
            other => panic!("unexpected {other}"),
        }
        // within sensor-noise slack
        assert!(parse_csv("400,410,chl\n-0.04,1.04,3\n", "t", &CsvOptions::default()).is_ok());
    }

    fn toy(n: usize, d: usize) -> LabeledDataset {
        let grid = WavelengthGrid::regular(400.0, 400.0 + 10.0 * (d as f64 - 1.0), 10.0).unwrap();
        let x = DMatrix::from_fn(n, d, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0);
        let y = DVector::from_fn(n, |i, _| i as f64);
        LabeledDataset::new(grid, x, y, Domain::Target).unwrap()
    }

    #[test]
    fn split_sizes() {
        let ds = toy(100, 2);
        let s = split(&ds, 0.10, 3).unwrap();
        assert_eq!((s.train.n_samples(), s.test.n_samples()), (10, 90));
        let s = split(&ds, 0.05, 3).unwrap();
        assert_eq!((s.train.n_samples(), s.test.n_samples()), (5, 95));
    }

    #[test]
    fn split_is_deterministic() {
        let ds = toy(100, 2);
        let a = split(&ds, 0.1, 7).unwrap();
        let b = split(&ds, 0.1, 7).unwrap();
        assert_eq!(a.train_indices, b.train_indices);
        assert_eq!(a.test_indices, b.test_indices);
        let c = split(&ds, 0.1, 8).unwrap();
        assert_ne!(a.train_indices, c.train_indices);
    }

    #[test]
    fn split_rejects_empty_sides() {
        let ds = toy(10, 2);
        assert!(split(&ds, 0.01, 1).is_err());
        assert!(split(&ds, 0.99, 1).is_err());
        assert!(split(&toy(1, 2), 0.5, 1).is_err());
    }

    #[test]
    fn scaler_degenerate_and_population_rules() {
        let grid = WavelengthGrid::new(vec![500.0, 600.0]).unwrap();
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 2.0]);
        let y = DVector::from_vec(vec![2.0, 4.0]);
        let ds = LabeledDataset::new(grid, x, y, Domain::Target).unwrap();
        let s = fit_scaler(&ds).unwrap();
        assert_eq!((s.x_mean[0], s.x_std[0]), (1.0, 1.0));
        assert_eq!((s.x_mean[1], s.x_std[1]), (1.0, 1.0));
        assert_eq!((s.y_mean, s.y_std), (3.0, 1.0));

        let x3 = DMatrix::from_row_slice(3, 1, &[1.0, 1.0, 1.0]);
        let s3 = Scaler::fit(&x3, &DVector::from_vec(vec![0.0, 1.0, 2.0])).unwrap();
        assert_eq!((s3.x_mean[0], s3.x_std[0]), (1.0, 1.0));
    }

    #[test]
    fn self_standardization_gives_zero_mean_unit_std() {
        let ds = toy(40, 5);
        let s = fit_scaler(&ds).unwrap();
        let z = apply_scaler(&s, &ds, true).unwrap();
        assert!(z.is_standardized());
        let s2 = fit_scaler(&z).unwrap();
        for j in 0..5 {
            assert!(s2.x_mean[j].abs() < 1e-12);
            assert!((s2.x_std[j] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn labels_untouched_without_flag() {
        let ds = toy(10, 3);
        let s = fit_scaler(&ds).unwrap();
        let z = apply_scaler(&s, &ds, false).unwrap();
        assert_eq!(z.y(), ds.y());
    }

    #[test]
    fn apply_scaler_dimension_mismatch() {
        let s = fit_scaler(&toy(10, 3)).unwrap();
        assert!(matches!(
            apply_scaler(&s, &toy(10, 4), false),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn split_is_a_partition(n in 2usize..1000, fi in 0usize..3, seed in any::<u64>()) {
            let fraction = [0.05, 0.1, 0.5][fi];
            let k = (fraction * n as f64).round() as usize;
            let grid = WavelengthGrid::new(vec![500.0]).unwrap();
            let ds = LabeledDataset::new(grid, DMatrix::zeros(n, 1), DVector::from_fn(n, |i, _| i as f64), Domain::Target).unwrap();
            match split(&ds, fraction, seed) {
                Ok(s) => {
                    prop_assert_eq!(s.train_indices.len(), k);
                    let mut all: Vec<usize> = s.train_indices.iter().chain(&s.test_indices).copied().collect();
                    all.sort_unstable();
                    prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
                    // labels encode the original index
                    for (r, &i) in s.train_indices.iter().enumerate() {
                        prop_assert_eq!(s.train.y()[r], i as f64);
                    }
                }
                Err(_) => prop_assert!(k == 0 || k == n),
            }
        }

        #[test]
        fn scaler_round_trip(vals in proptest::collection::vec(-5.0f64..5.0, 24), labels in proptest::collection::vec(-100.0f64..100.0, 6)) {
            let grid = WavelengthGrid::regular(400.0, 430.0, 10.0).unwrap();
            let x = DMatrix::from_row_slice(6, 4, &vals);
            let ds = LabeledDataset::new(grid, x, DVector::from_vec(labels), Domain::Source).unwrap();
            let s = fit_scaler(&ds).unwrap();
            let back = invert_scaler(&s, &apply_scaler(&s, &ds, true).unwrap(), true).unwrap();
            for (a, b) in back.x().iter().zip(ds.x().iter()) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
            for (a, b) in back.y().iter().zip(ds.y().iter()) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn csv_round_trip(vals in proptest::collection::vec(0.0f64..1.0, 15), labels in proptest::collection::vec(0.0f64..100.0, 5)) {
            let grid = WavelengthGrid::new(vec![400.0, 655.5, 2500.0]).unwrap();
            let ds = LabeledDataset::new(grid, DMatrix::from_row_slice(5, 3, &vals), DVector::from_vec(labels), Domain::Target).unwrap();
            let back = parse_csv(&to_csv_string(&ds), "mem", &CsvOptions::default()).unwrap();
            prop_assert_eq!(back.grid(), ds.grid());
            for (a, b) in back.x().iter().zip(ds.x().iter()) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
            for (a, b) in back.y().iter().zip(ds.y().iter()) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }
    }
}
