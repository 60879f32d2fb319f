//! Parametric leaf-reflectance generator used as the simulated source task.
//!
//! Reflectance follows a baseline curve attenuated Beer–Lambert style by a set
//! of absorbers with Gaussian specific-absorption bands:
//!
//! ```text
//! R(λ) = baseline(λ) · exp(−g · Σᵢ cᵢ · kᵢ(λ) / scaleᵢ) + ε,   clipped to [0, 1]
//! ```
//!
//! The label is the chlorophyll concentration. A scalar path factor `g`
//! stands in for viewing geometry, and [`shift_domain`] perturbs `g` and the
//! baseline plateau to make a related but shifted target task.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Domain, LabeledDataset, WavelengthGrid};
use crate::error::{Error, Result};

pub const CHLOROPHYLL: &str = "chlorophyll";
pub const MAX_NOISE_STD: f64 = 0.1;

/// Bundled default configuration.
pub const DEFAULT_CONFIG_TOML: &str = include_str!("../configs/simulator.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorberSpec {
    pub name: String,
    pub centers: Vec<f64>,
    pub widths: Vec<f64>,
    pub amplitudes: Vec<f64>,
    /// Uniform concentration range `[low, high]`.
    pub range: [f64; 2],
    /// Normalizes concentrations so exponents stay in a benign range.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub plateau: f64,
    pub visible_level: f64,
    pub shoulder_nm: f64,
    pub steepness_nm: f64,
}

impl Baseline {
    pub fn at(&self, wavelength: f64) -> f64 {
        let s = 1.0 / (1.0 + (-(wavelength - self.shoulder_nm) / self.steepness_nm).exp());
        self.visible_level + (self.plateau - self.visible_level) * s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatorConfig {
    pub grid: WavelengthGrid,
    pub absorbers: Vec<AbsorberSpec>,
    pub baseline: Baseline,
    /// Optical path factor `g`.
    pub geometry: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl SimulatorConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimulatorConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn default_config() -> Self {
        Self::from_toml_str(DEFAULT_CONFIG_TOML).expect("bundled simulator config is valid")
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("simulator config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !self.absorbers.iter().any(|a| a.name == CHLOROPHYLL) {
            return bad("a \"chlorophyll\" absorber is required (it is the label)".into());
        }
        let (lo, hi) = (self.grid.first(), self.grid.last());
        for a in &self.absorbers {
            if a.centers.len() != a.widths.len() || a.centers.len() != a.amplitudes.len() {
                return bad(format!("absorber {}: centers/widths/amplitudes differ in length", a.name));
            }
            if a.centers.iter().any(|&c| c < lo || c > hi) {
                return bad(format!("absorber {}: band center outside grid [{lo}, {hi}]", a.name));
            }
            if a.widths.iter().any(|&w| !(w > 0.0)) || a.amplitudes.iter().any(|&v| !(v > 0.0)) {
                return bad(format!("absorber {}: widths and amplitudes must be positive", a.name));
            }
            if !(a.range[0] < a.range[1]) || !(a.scale > 0.0) {
                return bad(format!("absorber {}: need low < high and scale > 0", a.name));
            }
        }
        let b = &self.baseline;
        if !(b.plateau > 0.0 && b.plateau <= 1.0) {
            return bad(format!("plateau {} outside (0, 1]", b.plateau));
        }
        if !(b.visible_level >= 0.0 && b.visible_level <= b.plateau) {
            return bad(format!("visible_level {} outside [0, plateau]", b.visible_level));
        }
        if !(b.steepness_nm > 0.0) {
            return bad("steepness_nm must be positive".into());
        }
        if !(self.geometry > 0.0 && self.geometry <= 2.0) {
            return bad(format!("geometry factor {} outside (0, 2]", self.geometry));
        }
        if !(self.noise_std >= 0.0 && self.noise_std < MAX_NOISE_STD) {
            return bad(format!("noise_std {} outside [0, {MAX_NOISE_STD})", self.noise_std));
        }
        Ok(())
    }

    fn chlorophyll_index(&self) -> usize {
        self.absorbers
            .iter()
            .position(|a| a.name == CHLOROPHYLL)
            .expect("validated config has chlorophyll")
    }

    /// Noise-free reflectance for the given per-absorber concentrations.
    pub fn reflectance(&self, concentrations: &[f64]) -> Vec<f64> {
        let spectra: Vec<Vec<f64>> = self
            .absorbers
            .iter()
            .map(|a| specific_absorption(a, &self.grid))
            .collect();
        self.reflectance_with(&spectra, concentrations)
    }

    fn reflectance_with(&self, spectra: &[Vec<f64>], concentrations: &[f64]) -> Vec<f64> {
        self.grid
            .as_slice()
            .iter()
            .enumerate()
            .map(|(j, &w)| {
                let optical_depth: f64 = self
                    .absorbers
                    .iter()
                    .zip(spectra)
                    .zip(concentrations)
                    .map(|((a, k), &c)| c * k[j] / a.scale)
                    .sum();
                self.baseline.at(w) * (-self.geometry * optical_depth).exp()
            })
            .collect()
    }
}

/// `k(λ) = Σ amplitude · exp(−(λ − center)² / (2 · width²))` on the grid.
pub fn specific_absorption(spec: &AbsorberSpec, grid: &WavelengthGrid) -> Vec<f64> {
    grid.as_slice()
        .iter()
        .map(|&w| {
            spec.centers
                .iter()
                .zip(&spec.widths)
                .zip(&spec.amplitudes)
                .map(|((c, s), a)| a * (-(w - c) * (w - c) / (2.0 * s * s)).exp())
                .sum()
        })
        .collect()
}

/// Draws `n` labeled spectra. Row `i` uses its own ChaCha stream, so the
/// output does not depend on evaluation order.
pub fn generate(config: &SimulatorConfig, n: usize) -> Result<LabeledDataset> {
    config.validate()?;
    if n == 0 {
        return Err(Error::invalid("simulator needs n >= 1"));
    }
    let d = config.grid.len();
    let spectra: Vec<Vec<f64>> = config
        .absorbers
        .iter()
        .map(|a| specific_absorption(a, &config.grid))
        .collect();
    let chl = config.chlorophyll_index();
    let noise = Normal::new(0.0, config.noise_std).map_err(|e| Error::Config(e.to_string()))?;

    let rows: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|row| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(row as u64);
            let conc: Vec<f64> = config
                .absorbers
                .iter()
                .map(|a| rng.random_range(a.range[0]..a.range[1]))
                .collect();
            let mut r = config.reflectance_with(&spectra, &conc);
            if config.noise_std > 0.0 {
                for v in &mut r {
                    *v += noise.sample(&mut rng);
                }
            }
            for v in &mut r {
                *v = v.clamp(0.0, 1.0);
            }
            (r, conc[chl])
        })
        .collect();

    let x = DMatrix::from_fn(n, d, |i, j| rows[i].0[j]);
    let y = DVector::from_fn(n, |i, _| rows[i].1);
    LabeledDataset::new(config.grid.clone(), x, y, Domain::Source)
}

/// Copy of `config` with `geometry += geometry_delta` and `plateau += baseline_delta`.
pub fn shift_domain(config: &SimulatorConfig, geometry_delta: f64, baseline_delta: f64) -> Result<SimulatorConfig> {
    let mut out = config.clone();
    out.geometry += geometry_delta;
    out.baseline.plateau += baseline_delta;
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_band() -> AbsorberSpec {
        AbsorberSpec {
            name: CHLOROPHYLL.into(),
            centers: vec![660.0],
            widths: vec![20.0],
            amplitudes: vec![1.0],
            range: [10.0, 80.0],
            scale: 40.0,
        }
    }

    #[test]
    fn gaussian_band_values() {
        let grid = WavelengthGrid::new(vec![640.0, 660.0, 680.0]).unwrap();
        let k = specific_absorption(&single_band(), &grid);
        assert_eq!(k[1], 1.0);
        assert!((k[2] - (-0.5f64).exp()).abs() < 1e-15);
        assert!((k[2] - 0.6065).abs() < 1e-4);
        assert_eq!(k[0], k[2]);
    }

    #[test]
    fn empty_band_list_is_zero() {
        let mut spec = single_band();
        spec.centers.clear();
        spec.widths.clear();
        spec.amplitudes.clear();
        let grid = WavelengthGrid::regular(400.0, 500.0, 50.0).unwrap();
        assert_eq!(specific_absorption(&spec, &grid), vec![0.0; 3]);
    }

    #[test]
    fn default_config_is_valid() {
        let cfg = SimulatorConfig::default_config();
        assert_eq!(cfg.grid.first(), 400.0);
        assert_eq!(cfg.grid.last(), 2500.0);
        let again = SimulatorConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn shape_range_and_determinism() {
        let cfg = SimulatorConfig::default_config();
        let a = generate(&cfg, 5).unwrap();
        assert_eq!(a.n_samples(), 5);
        assert_eq!(a.n_bands(), cfg.grid.len());
        assert_eq!(a.domain(), Domain::Source);
        assert!(a.y().iter().all(|&c| (10.0..=80.0).contains(&c)));
        assert!(a.x().iter().all(|&r| (0.0..=1.0).contains(&r)));
        let b = generate(&cfg, 5).unwrap();
        assert_eq!(a, b);
        // a prefix of a larger draw is the same rows (per-row streams)
        let c = generate(&cfg, 8).unwrap();
        assert_eq!(c.select_rows(&[0, 1, 2, 3, 4]).x(), a.x());
    }

    #[test]
    fn more_chlorophyll_darkens_red_band() {
        let mut cfg = SimulatorConfig::default_config();
        cfg.noise_std = 0.0;
        let n_abs = cfg.absorbers.len();
        let chl = cfg.chlorophyll_index();
        let mut lo = vec![0.0; n_abs];
        for (i, a) in cfg.absorbers.iter().enumerate() {
            lo[i] = 0.5 * (a.range[0] + a.range[1]);
        }
        let mut hi = lo.clone();
        lo[chl] = cfg.absorbers[chl].range[0];
        hi[chl] = cfg.absorbers[chl].range[1];
        let red: Vec<usize> = cfg
            .grid
            .as_slice()
            .iter()
            .enumerate()
            .filter(|(_, &w)| (640.0..=680.0).contains(&w))
            .map(|(i, _)| i)
            .collect();
        assert!(!red.is_empty());
        let mean = |r: &[f64]| red.iter().map(|&i| r[i]).sum::<f64>() / red.len() as f64;
        assert!(mean(&cfg.reflectance(&hi)) < mean(&cfg.reflectance(&lo)));
    }

    #[test]
    fn reflectance_decreases_with_chlorophyll_by_finite_difference() {
        let cfg = SimulatorConfig::default_config();
        let chl = cfg.chlorophyll_index();
        let k = specific_absorption(&cfg.absorbers[chl], &cfg.grid);
        let base: Vec<f64> = cfg.absorbers.iter().map(|a| 0.5 * (a.range[0] + a.range[1])).collect();
        let mut up = base.clone();
        up[chl] += 1e-3;
        let (r0, r1) = (cfg.reflectance(&base), cfg.reflectance(&up));
        for j in 0..k.len() {
            let slope = (r1[j] - r0[j]) / 1e-3;
            if k[j] > 1e-12 && r0[j] > 1e-300 {
                assert!(slope < 0.0, "band {j} slope {slope}");
            }
        }
    }

    #[test]
    fn geometry_never_brightens() {
        let cfg = SimulatorConfig::default_config();
        let more = shift_domain(&cfg, 0.4, 0.0).unwrap();
        let c: Vec<f64> = cfg.absorbers.iter().map(|a| a.range[1]).collect();
        for (a, b) in cfg.reflectance(&c).iter().zip(more.reflectance(&c)) {
            assert!(b <= *a);
        }
    }

    #[test]
    fn shift_domain_contract() {
        let cfg = SimulatorConfig::default_config();
        assert_eq!(shift_domain(&cfg, 0.0, 0.0).unwrap(), cfg);
        let s = shift_domain(&cfg, 0.3, 0.0).unwrap();
        assert!((s.geometry - 1.3).abs() < 1e-15);
        let mut expect = cfg.clone();
        expect.geometry = s.geometry;
        assert_eq!(s, expect);
        assert!(shift_domain(&cfg, 0.0, 0.6).is_err());
        assert!(shift_domain(&cfg, 1.5, 0.0).is_err());
    }

    #[test]
    fn chlorophyll_is_mandatory() {
        let mut cfg = SimulatorConfig::default_config();
        cfg.absorbers.retain(|a| a.name != CHLOROPHYLL);
        assert!(cfg.validate().is_err());
    }
}
