//! Run configuration, read from and written to TOML.

use std::path::PathBuf;

use firecox::cox::SimOptions;
use firecox::estimate::{MomentMatch, VarianceDivisor};
use firecox::gaussfield::SamplerChoice;
use firecox::lattice::LatticeSpec;
use firecox::steinbound::AssocBoundParams;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub unit: f64,
    pub rows: usize,
    pub cols: usize,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self {
            origin_lat: 20.5,
            origin_lon: 97.3,
            unit: 0.01,
            rows: 30,
            cols: 30,
        }
    }
}

impl LatticeConfig {
    pub fn spec(&self) -> Result<LatticeSpec, CliError> {
        Ok(LatticeSpec::new(self.origin_lat, self.origin_lon, self.unit, self.rows, self.cols)?)
    }
}

/// Where the study region comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum MaskSource {
    /// Every cell of the lattice.
    Full,
    /// A `row,col` CSV with a `# grid: rows cols` comment.
    File { path: PathBuf },
    Rectangle {
        top: usize,
        left: usize,
        height: usize,
        width: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    /// Largest tolerated fraction of malformed rows.
    pub max_malformed_fraction: f64,
    /// Replicate years; empty means every year present in the input.
    pub years: Vec<i32>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            max_malformed_fraction: 0.01,
            years: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    pub variance_divisor: VarianceDivisor,
    pub moment_match: MomentMatch,
    pub l_cap: usize,
    pub grid_step: f64,
    pub max_lambda: f64,
    /// Decay rate to calibrate against; measured from the data when absent.
    pub target_rate: Option<f64>,
    pub calibration_replicates: usize,
    pub max_r: f64,
    pub bin_width: f64,
    pub pair_budget: usize,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            variance_divisor: VarianceDivisor::Unbiased,
            moment_match: MomentMatch::Intensity,
            l_cap: 64,
            grid_step: 0.005,
            max_lambda: 0.5,
            target_rate: None,
            calibration_replicates: 20,
            max_r: 10.0,
            bin_width: 1.0,
            pair_budget: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub replicates: usize,
    pub seed: u64,
    pub sampler: SamplerChoice,
    pub circulant_tolerance: f64,
    pub circulant_padding: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        let o = SimOptions::default();
        Self {
            replicates: 100,
            seed: 1,
            sampler: o.sampler,
            circulant_tolerance: o.circulant_tolerance,
            circulant_padding: o.circulant_padding,
        }
    }
}

impl SimulateConfig {
    pub fn options(&self) -> SimOptions {
        SimOptions {
            sampler: self.sampler,
            circulant_tolerance: self.circulant_tolerance,
            circulant_padding: self.circulant_padding,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseConfig {
    /// Block sides, strictly increasing.
    pub n_list: Vec<usize>,
    /// Top-left cell `[row, col]` of every block.
    pub anchor: [usize; 2],
    pub dimension: u32,
    /// Larger samples are subsampled (seeded) before the Shapiro–Wilk test.
    pub sw_max: usize,
    /// Decay-curve distance for the association check; 0 skips it.
    pub association_max_r: f64,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        Self {
            n_list: vec![4, 8, 12, 16, 24],
            anchor: [0, 0],
            dimension: 2,
            sw_max: 5000,
            association_max_r: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundConfig {
    pub d: u32,
    pub m: f64,
    pub kappa: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub k: f64,
    pub r_mu_nu: f64,
    pub n_min: f64,
    pub n_max: f64,
    pub n_points: usize,
}

impl Default for BoundConfig {
    fn default() -> Self {
        let p = AssocBoundParams::default();
        Self {
            d: p.d,
            m: p.m,
            kappa: p.kappa,
            lambda: p.lambda,
            gamma: p.gamma,
            k: p.k,
            r_mu_nu: p.r_mu_nu,
            n_min: 10.0,
            n_max: 1e6,
            n_points: 25,
        }
    }
}

impl BoundConfig {
    pub fn params(&self, n: f64) -> AssocBoundParams {
        AssocBoundParams {
            d: self.d,
            m: self.m,
            kappa: self.kappa,
            lambda: self.lambda,
            gamma: self.gamma,
            k: self.k,
            r_mu_nu: self.r_mu_nu,
            n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub l: usize,
    pub sigma2: f64,
    pub lambda_c: f64,
    pub years: usize,
    pub first_year: i32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            l: 4,
            sigma2: 0.5,
            lambda_c: 0.2,
            years: 20,
            first_year: 2001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub lattice: LatticeConfig,
    #[serde(default = "full_mask")]
    pub mask: MaskSource,
    #[serde(default)]
    pub ingest: IngestConfig,
    #[serde(default)]
    pub estimate: EstimateConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub diagnose: DiagnoseConfig,
    #[serde(default)]
    pub bound: BoundConfig,
    #[serde(default)]
    pub synth: SynthConfig,
}

fn full_mask() -> MaskSource {
    MaskSource::Full
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            lattice: LatticeConfig::default(),
            mask: MaskSource::Full,
            ingest: IngestConfig::default(),
            estimate: EstimateConfig::default(),
            simulate: SimulateConfig::default(),
            diagnose: DiagnoseConfig::default(),
            bound: BoundConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: Option<&std::path::Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Input(p.display().to_string(), e))?;
                Self::from_toml(&text)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = RunConfig::default();
        let text = c.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn edited_config_round_trips() {
        let mut c = RunConfig::default();
        c.mask = MaskSource::Rectangle {
            top: 1,
            left: 2,
            height: 3,
            width: 4,
        };
        c.estimate.target_rate = Some(0.15);
        c.estimate.moment_match = MomentMatch::PoissonCorrected;
        c.simulate.sampler = SamplerChoice::Circulant;
        c.diagnose.n_list = vec![8, 16, 32];
        c.ingest.years = vec![2001, 2002];
        let back = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_config_uses_defaults() {
        let c = RunConfig::from_toml("[simulate]\nreplicates = 7\n").unwrap();
        assert_eq!(c.simulate.replicates, 7);
        assert_eq!(c.estimate, EstimateConfig::default());
        assert!(RunConfig::from_toml("[simulate]\nreplicate = 7\n").is_err());
    }
}
