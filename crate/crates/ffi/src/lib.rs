//! C ABI over `phenotl`.
//!
//! Datasets and models are opaque heap handles created by `pheno_*` functions
//! and released with the matching `*_free`. Every fallible call returns a
//! [`PhenoStatus`]; on failure `pheno_last_error` returns a message for the
//! calling thread that stays valid until the next failing call on that thread.
//! Matrices are row-major `n_samples × n_bands` arrays of `double`.

use std::cell::RefCell;
use std::ffi::{c_char, c_double, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use phenotl::data::{load_csv, CsvOptions, Domain, LabeledDataset, WavelengthGrid};
use phenotl::evaluate::{r2, rmse};
use phenotl::mlp::{train, MlpArchitecture, TrainConfig};
use phenotl::nngp::{default_noise_grid, kernel_entry, NngpParams, NngpRegressor, NoiseChoice};
use phenotl::persist::{ModelFile, SavedModel};
use phenotl::plsr::{select_components, PlsrModel};
use phenotl::simulator::{generate, SimulatorConfig};
use phenotl::transfer::{default_lambda_grid, KernelApprox, LambdaChoice, NoiseSearch, TransferGpRegressor, TransferOptions};
use phenotl::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhenoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Io = 3,
    Parse = 4,
    NotPsd = 5,
    Numerical = 6,
    ModelFormat = 7,
    Panic = 8,
}

/// Opaque labeled dataset.
pub struct PhenoDataset(LabeledDataset);

/// Opaque fitted model.
pub struct PhenoModel(ModelFile);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> PhenoStatus {
    match e {
        Error::Io { .. } => PhenoStatus::Io,
        Error::Parse { .. } => PhenoStatus::Parse,
        Error::NotPsd { .. } => PhenoStatus::NotPsd,
        Error::RankExhausted(_) | Error::Diverged { .. } | Error::ZeroVarianceTarget | Error::Singular(_) => PhenoStatus::Numerical,
        Error::ModelFormat(_) => PhenoStatus::ModelFormat,
        _ => PhenoStatus::InvalidInput,
    }
}

struct Fail(PhenoStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(PhenoStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PhenoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PhenoStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PhenoStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(PhenoStatus::InvalidInput, format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a>(p: *const c_double, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn dataset<'a>(p: *const PhenoDataset) -> Result<&'a LabeledDataset, Fail> {
    p.as_ref().map(|d| &d.0).ok_or_else(|| null("dataset"))
}

unsafe fn model<'a>(p: *const PhenoModel) -> Result<&'a ModelFile, Fail> {
    p.as_ref().map(|m| &m.0).ok_or_else(|| null("model"))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_value<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = value;
    Ok(())
}

fn store(ds: &LabeledDataset, m: SavedModel) -> PhenoModel {
    PhenoModel(ModelFile::new(ds.grid().clone(), ds.trait_name(), m))
}

/// Message of the last failed call on this thread (empty if none).
#[no_mangle]
pub extern "C" fn pheno_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pheno_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a labeled CSV. `trait_column` may be null when the header has exactly one
/// non-numeric cell.
///
/// # Safety
/// `path` and a non-null `trait_column` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pheno_dataset_load_csv(path: *const c_char, trait_column: *const c_char, out: *mut *mut PhenoDataset) -> PhenoStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        let trait_column = if trait_column.is_null() {
            None
        } else {
            Some(path_arg(trait_column, "trait_column")?.to_string_lossy().into_owned())
        };
        let ds = load_csv(&path, &CsvOptions { trait_column, domain: Domain::Target })?;
        put(out, PhenoDataset(ds))
    })
}

/// Builds a dataset from a wavelength grid, a row-major reflectance matrix and labels.
///
/// # Safety
/// `wavelengths` must hold `n_bands` values, `x` `n_samples * n_bands`, `y` `n_samples`.
#[no_mangle]
pub unsafe extern "C" fn pheno_dataset_from_arrays(
    wavelengths: *const c_double,
    n_bands: usize,
    x: *const c_double,
    y: *const c_double,
    n_samples: usize,
    out: *mut *mut PhenoDataset,
) -> PhenoStatus {
    guard(|| {
        let grid = WavelengthGrid::new(slice_arg(wavelengths, n_bands, "wavelengths")?.to_vec())?;
        let x = DMatrix::from_row_slice(n_samples, n_bands, slice_arg(x, n_samples * n_bands, "x")?);
        let y = DVector::from_column_slice(slice_arg(y, n_samples, "y")?);
        put(out, PhenoDataset(LabeledDataset::new(grid, x, y, Domain::Target)?))
    })
}

/// Simulates `n` labeled spectra. `config_path` may be null for the bundled config.
///
/// # Safety
/// A non-null `config_path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pheno_dataset_simulate(config_path: *const c_char, n: usize, seed: u64, out: *mut *mut PhenoDataset) -> PhenoStatus {
    guard(|| {
        let cfg = if config_path.is_null() {
            SimulatorConfig::default_config()
        } else {
            SimulatorConfig::load(path_arg(config_path, "config_path")?)?
        };
        put(out, PhenoDataset(generate(&cfg.with_seed(seed), n)?))
    })
}

/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn pheno_dataset_rows(ds: *const PhenoDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.n_samples())
}

/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn pheno_dataset_cols(ds: *const PhenoDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.n_bands())
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pheno_dataset_free(ds: *mut PhenoDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// PLSR with `components` latent components; 0 selects the count by 5-fold CV.
///
/// # Safety
/// `ds` must be a live dataset handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pheno_train_plsr(ds: *const PhenoDataset, components: usize, seed: u64, out: *mut *mut PhenoModel) -> PhenoStatus {
    guard(|| {
        let ds = dataset(ds)?;
        let k = if components == 0 {
            let cap = 15.min(ds.n_samples().saturating_sub(1)).min(ds.n_bands());
            select_components(ds.x(), ds.y(), cap, 5.min(ds.n_samples()), seed)?
        } else {
            components
        };
        let m = PlsrModel::fit(ds.x(), ds.y(), k)?;
        put(out, store(ds, SavedModel::Plsr(m)))
    })
}

/// MLP with the given hidden widths and default optimizer settings.
///
/// # Safety
/// `ds` must be a live dataset handle, `hidden` must hold `n_hidden` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pheno_train_mlp(
    ds: *const PhenoDataset,
    hidden: *const usize,
    n_hidden: usize,
    max_epochs: usize,
    seed: u64,
    out: *mut *mut PhenoModel,
) -> PhenoStatus {
    guard(|| {
        let ds = dataset(ds)?;
        if n_hidden > 0 && hidden.is_null() {
            return Err(null("hidden"));
        }
        let widths = if n_hidden == 0 { &[][..] } else { std::slice::from_raw_parts(hidden, n_hidden) };
        let arch = MlpArchitecture::with_hidden(ds.n_bands(), widths)?;
        let cfg = TrainConfig {
            max_epochs,
            seed,
            ..TrainConfig::default()
        };
        let m = train(ds.x(), ds.y(), &arch, &cfg)?;
        put(out, store(ds, SavedModel::Mlp(m)))
    })
}

/// NNGP regression. A negative `noise` selects the noise variance by evidence.
///
/// # Safety
/// `ds` must be a live dataset handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pheno_train_nngp(
    ds: *const PhenoDataset,
    depth: usize,
    sigma_w2: c_double,
    sigma_b2: c_double,
    noise: c_double,
    out: *mut *mut PhenoModel,
) -> PhenoStatus {
    guard(|| {
        let ds = dataset(ds)?;
        let params = NngpParams::new(depth, sigma_w2, sigma_b2)?;
        let noise = if noise < 0.0 {
            NoiseChoice::Grid(default_noise_grid())
        } else {
            NoiseChoice::Fixed(noise)
        };
        let m = NngpRegressor::fit(ds.x(), ds.y(), &params, &noise)?;
        put(out, store(ds, SavedModel::Nngp(m)))
    })
}

/// Transfer GP from `source` to `target`. A negative `lambda` selects it by
/// evidence; `landmarks == 0` uses the exact kernel. Noise is always selected.
///
/// # Safety
/// `source` and `target` must be live dataset handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pheno_train_transfer_gp(
    source: *const PhenoDataset,
    target: *const PhenoDataset,
    lambda: c_double,
    landmarks: usize,
    seed: u64,
    depth: usize,
    sigma_w2: c_double,
    sigma_b2: c_double,
    out: *mut *mut PhenoModel,
) -> PhenoStatus {
    guard(|| {
        let (src, tgt) = (dataset(source)?, dataset(target)?);
        let opts = TransferOptions {
            params: NngpParams::new(depth, sigma_w2, sigma_b2)?,
            lambda: if lambda < 0.0 {
                LambdaChoice::Auto {
                    grid: default_lambda_grid(),
                    refine: false,
                }
            } else {
                LambdaChoice::Fixed(lambda)
            },
            noise: NoiseSearch::default_grid(),
            approx: if landmarks == 0 {
                KernelApprox::Exact
            } else {
                KernelApprox::Nystrom { landmarks, seed }
            },
        };
        let m = TransferGpRegressor::fit(src, tgt, &opts)?;
        put(out, store(tgt, SavedModel::TransferGp(m)))
    })
}

/// Fitted relatedness of a transfer-gp model.
///
/// # Safety
/// `m` must be a live model handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pheno_model_lambda(m: *const PhenoModel, out: *mut c_double) -> PhenoStatus {
    guard(|| match &model(m)?.model {
        SavedModel::TransferGp(t) => put_value(out, t.lambda()),
        other => Err(Fail(PhenoStatus::InvalidInput, format!("{} model has no lambda", other.kind()))),
    })
}

/// Writes `n_samples` predictions for a row-major `n_samples × n_bands` matrix.
///
/// # Safety
/// `x` must hold `n_samples * n_bands` values and `out` room for `n_samples`.
#[no_mangle]
pub unsafe extern "C" fn pheno_model_predict(
    m: *const PhenoModel,
    x: *const c_double,
    n_samples: usize,
    n_bands: usize,
    out: *mut c_double,
) -> PhenoStatus {
    guard(|| {
        let m = model(m)?;
        if n_bands != m.grid.len() {
            return Err(Error::DimensionMismatch {
                expected: m.grid.len(),
                got: n_bands,
            }
            .into());
        }
        let x = DMatrix::from_row_slice(n_samples, n_bands, slice_arg(x, n_samples * n_bands, "x")?);
        let pred = m.model.predict(&x)?;
        if n_samples > 0 {
            if out.is_null() {
                return Err(null("out"));
            }
            std::slice::from_raw_parts_mut(out, n_samples).copy_from_slice(pred.as_slice());
        }
        Ok(())
    })
}

/// # Safety
/// `m` must be a live model handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pheno_model_save(m: *const PhenoModel, path: *const c_char) -> PhenoStatus {
    guard(|| {
        let m = model(m)?;
        Ok(m.save(path_arg(path, "path")?)?)
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pheno_model_load(path: *const c_char, out: *mut *mut PhenoModel) -> PhenoStatus {
    guard(|| {
        let m = ModelFile::load(path_arg(path, "path")?)?;
        put(out, PhenoModel(m))
    })
}

/// # Safety
/// `m` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pheno_model_free(m: *mut PhenoModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Infinite-width ReLU network kernel between two `d`-dimensional inputs.
///
/// # Safety
/// `x` and `x2` must hold `d` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pheno_kernel_entry(
    x: *const c_double,
    x2: *const c_double,
    d: usize,
    depth: usize,
    sigma_w2: c_double,
    sigma_b2: c_double,
    out: *mut c_double,
) -> PhenoStatus {
    guard(|| {
        if d == 0 {
            return Err(Fail(PhenoStatus::InvalidInput, "d must be > 0".into()));
        }
        let p = NngpParams::new(depth, sigma_w2, sigma_b2)?;
        let k = kernel_entry(slice_arg(x, d, "x")?, slice_arg(x2, d, "x2")?, &p);
        put_value(out, k)
    })
}

/// # Safety
/// `y` and `y_hat` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pheno_rmse(y: *const c_double, y_hat: *const c_double, n: usize, out: *mut c_double) -> PhenoStatus {
    guard(|| {
        let (a, b) = (slice_arg(y, n, "y")?, slice_arg(y_hat, n, "y_hat")?);
        put_value(out, rmse(&DVector::from_column_slice(a), &DVector::from_column_slice(b))?)
    })
}

/// # Safety
/// `y` and `y_hat` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pheno_r2(y: *const c_double, y_hat: *const c_double, n: usize, out: *mut c_double) -> PhenoStatus {
    guard(|| {
        let (a, b) = (slice_arg(y, n, "y")?, slice_arg(y_hat, n, "y_hat")?);
        put_value(out, r2(&DVector::from_column_slice(a), &DVector::from_column_slice(b))?)
    })
}

/// Number of bands the model expects, 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn pheno_model_n_bands(m: *const PhenoModel) -> usize {
    m.as_ref().map_or(0, |m| m.0.grid.len())
}
