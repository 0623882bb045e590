//! TOML run configuration. Every key has a default and unknown keys are
//! rejected. Physical quantities carry their unit in the key name.

use std::f64::consts::TAU;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use tmsi_core::device::{CavityParams, JpcParams, OutputChainParams, PhaseMode};
use tmsi_core::interferometer::InterferometerConfig;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    NoiseSweep,
    QubitNoiseSweep,
    Bullseye,
    SnrSweep,
    SparamSweep,
    Backaction,
    Nvr,
    Calibrate,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::NoiseSweep,
        Experiment::QubitNoiseSweep,
        Experiment::Bullseye,
        Experiment::SnrSweep,
        Experiment::SparamSweep,
        Experiment::Backaction,
        Experiment::Nvr,
        Experiment::Calibrate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::NoiseSweep => "noise-sweep",
            Experiment::QubitNoiseSweep => "qubit-noise-sweep",
            Experiment::Bullseye => "bullseye",
            Experiment::SnrSweep => "snr-sweep",
            Experiment::SparamSweep => "sparam-sweep",
            Experiment::Backaction => "backaction",
            Experiment::Nvr => "nvr",
            Experiment::Calibrate => "calibrate",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown experiment '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    #[default]
    Csv,
    Json,
}

impl TableFormat {
    pub fn extension(self) -> &'static str {
        match self {
            TableFormat::Csv => "csv",
            TableFormat::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub shots: usize,
    /// Worker threads; 0 uses all available cores.
    pub workers: usize,
    pub format: TableFormat,
    pub output: PathBuf,
    pub device: DeviceConfig,
    pub grid: GridConfig,
    pub noise_sweep: NoiseSweepConfig,
    pub bullseye: BullseyeConfig,
    pub snr_sweep: SnrSweepConfig,
    pub sparam_sweep: SparamSweepConfig,
    pub backaction: BackactionConfig,
    pub nvr: NvrConfig,
    pub calibration: CalibrationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::NoiseSweep,
            seed: 1,
            shots: 50_000,
            workers: 0,
            format: TableFormat::Csv,
            output: PathBuf::from("out"),
            device: DeviceConfig::default(),
            grid: GridConfig::default(),
            noise_sweep: NoiseSweepConfig::default(),
            bullseye: BullseyeConfig::default(),
            snr_sweep: SnrSweepConfig::default(),
            sparam_sweep: SparamSweepConfig::default(),
            backaction: BackactionConfig::default(),
            nvr: NvrConfig::default(),
            calibration: CalibrationConfig::default(),
        }
    }
}

/// Interferometer description in lab units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceConfig {
    pub entangler_gain_db: f64,
    pub analyzer_gain_db: f64,
    pub entangler_pump_phase_deg: f64,
    pub delta_phi_deg: f64,
    pub eta_upper: f64,
    pub eta_lower: f64,
    pub eta_post_cavity: f64,
    pub analyzer_efficiency: f64,
    pub kappa_mhz: f64,
    pub chi_mhz: f64,
    pub drive_detuning_mhz: f64,
    pub phase_mode: PhaseMode,
    pub delta_theta_deg: f64,
    pub input_occupation: f64,
    /// `inf` gives a noiseless output chain.
    pub nvr_db: f64,
    pub heterodyne_penalty: bool,
    pub signal_scale: f64,
    pub drive_amplitude: f64,
    pub drive_phase_deg: f64,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        Self::from_interferometer(&InterferometerConfig::default())
    }
}

impl DeviceConfig {
    pub fn from_interferometer(c: &InterferometerConfig) -> Self {
        Self {
            entangler_gain_db: c.entangler.gain_db,
            analyzer_gain_db: c.analyzer.gain_db,
            entangler_pump_phase_deg: c.entangler.pump_phase.to_degrees(),
            delta_phi_deg: c.delta_phi().to_degrees(),
            eta_upper: c.eta_upper,
            eta_lower: c.eta_lower,
            eta_post_cavity: c.eta_post_cavity,
            analyzer_efficiency: c.analyzer_efficiency,
            kappa_mhz: c.cavity.kappa / TAU / 1e6,
            chi_mhz: c.cavity.chi / TAU / 1e6,
            drive_detuning_mhz: c.cavity.drive_detuning / TAU / 1e6,
            phase_mode: c.cavity.phase_mode,
            delta_theta_deg: c.cavity.calibrated_delta_theta.to_degrees(),
            input_occupation: c.input_occupation,
            nvr_db: c.chain.nvr_db,
            heterodyne_penalty: c.chain.include_heterodyne_penalty,
            signal_scale: c.signal_scale,
            drive_amplitude: 1.0,
            drive_phase_deg: 0.0,
        }
    }

    pub fn interferometer(&self) -> CliResult<InterferometerConfig> {
        let entangler_phase = self.entangler_pump_phase_deg.to_radians();
        let config = InterferometerConfig {
            entangler: JpcParams::new(self.entangler_gain_db, entangler_phase),
            analyzer: JpcParams::new(self.analyzer_gain_db, entangler_phase + self.delta_phi_deg.to_radians()),
            eta_upper: self.eta_upper,
            eta_lower: self.eta_lower,
            eta_post_cavity: self.eta_post_cavity,
            analyzer_efficiency: self.analyzer_efficiency,
            cavity: CavityParams {
                kappa: TAU * self.kappa_mhz * 1e6,
                chi: TAU * self.chi_mhz * 1e6,
                drive_detuning: TAU * self.drive_detuning_mhz * 1e6,
                phase_mode: self.phase_mode,
                calibrated_delta_theta: self.delta_theta_deg.to_radians(),
            },
            input_occupation: self.input_occupation,
            chain: OutputChainParams {
                nvr_db: self.nvr_db,
                include_heterodyne_penalty: self.heterodyne_penalty,
            },
            signal_scale: self.signal_scale,
        };
        config.validate().map_err(|e| CliError::Config(format!("[device]: {e}")))?;
        if !(self.drive_amplitude > 0.0) || !self.drive_amplitude.is_finite() {
            return Err(CliError::Config(format!(
                "[device] drive_amplitude must be > 0, got {}",
                self.drive_amplitude
            )));
        }
        Ok(config)
    }

    /// Keeps the drive settings and replaces everything the interferometer describes.
    pub fn with_interferometer(&self, c: &InterferometerConfig) -> Self {
        Self {
            drive_amplitude: self.drive_amplitude,
            drive_phase_deg: self.drive_phase_deg,
            ..Self::from_interferometer(c)
        }
    }
}

/// Relative pump phase grid: `points` values evenly spaced over one period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { points: 360 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSweepConfig {
    pub entangler_gains_db: Vec<f64>,
}

impl Default for NoiseSweepConfig {
    fn default() -> Self {
        Self {
            entangler_gains_db: (0..=8).map(|k| 0.5 * k as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BullseyeConfig {
    pub bins: usize,
    /// Half-width of the map in units of the entangler-off σ.
    pub half_width: f64,
}

impl Default for BullseyeConfig {
    fn default() -> Self {
        Self {
            bins: 51,
            half_width: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnrSweepConfig {
    /// Calibrate arm losses before sweeping.
    pub calibrate: bool,
    /// Baseline error rate used for the error-suppression summary.
    pub baseline_error_rate: f64,
}

impl Default for SnrSweepConfig {
    fn default() -> Self {
        Self {
            calibrate: true,
            baseline_error_rate: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SparamSweepConfig {
    pub analyzer_gain_db: f64,
    pub entangler_gains_db: Vec<f64>,
}

impl Default for SparamSweepConfig {
    fn default() -> Self {
        Self {
            analyzer_gain_db: 10.0,
            entangler_gains_db: vec![0.67, 9.15],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackactionConfig {
    pub strength: f64,
    /// Efficiency used for the coherent-state dataset.
    pub eta_cs: f64,
    pub t_window_ns: f64,
    pub t2_us: f64,
    /// Applies `exp(-t_window / T2)` to x and y during generation.
    pub dephasing: bool,
    /// Also writes the per-shot tomography records.
    pub write_records: bool,
}

impl Default for BackactionConfig {
    fn default() -> Self {
        Self {
            strength: 0.66,
            eta_cs: 0.46,
            t_window_ns: 660.0,
            t2_us: 4.4,
            dephasing: false,
            write_records: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NvrConfig {
    pub nvr_cs_db: f64,
    pub eta_overall_cs: f64,
    pub sigma_ratio_high: f64,
    pub sigma_ratio_low: f64,
    pub measured_eta_high: f64,
    pub measured_eta_low: f64,
    /// Largest |predicted − measured| still counted as explained.
    pub tolerance: f64,
    pub eta_amp_curves: Vec<f64>,
    pub nvr_db_min: f64,
    pub nvr_db_max: f64,
    pub nvr_db_points: usize,
}

impl Default for NvrConfig {
    fn default() -> Self {
        Self {
            nvr_cs_db: 7.0,
            eta_overall_cs: 0.46,
            sigma_ratio_high: 1.21,
            sigma_ratio_low: 0.86,
            measured_eta_high: 0.58,
            measured_eta_low: 0.29,
            tolerance: 0.03,
            eta_amp_curves: vec![0.35, 0.45, 0.55],
            nvr_db_min: 0.5,
            nvr_db_max: 20.0,
            nvr_db_points: 40,
        }
    }
}

/// Targets for the loss calibration. When the table is given, only the
/// listed targets are used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub sigma_ratio_high: Option<f64>,
    pub sigma_ratio_low: Option<f64>,
    pub snr_gain: Option<f64>,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self {
            sigma_ratio_high: Some(1.21),
            sigma_ratio_low: Some(0.86),
            snr_gain: Some(1.44),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub targets: TargetConfig,
    /// Fixed ratio `eta_upper / eta_lower`.
    pub arm_ratio: f64,
    pub free_entangler_gain: bool,
    pub max_relative_miss: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            targets: TargetConfig::default(),
            arm_ratio: 0.9,
            free_entangler_gain: false,
            max_relative_miss: 0.05,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        self.device.interferometer()?;
        if self.shots == 0 {
            return bad("shots must be >= 1".into());
        }
        if self.grid.points < 4 {
            return bad(format!("[grid] points must be >= 4, got {}", self.grid.points));
        }
        if self.noise_sweep.entangler_gains_db.is_empty() {
            return bad("[noise_sweep] entangler_gains_db is empty".into());
        }
        if self.sparam_sweep.entangler_gains_db.is_empty() {
            return bad("[sparam_sweep] entangler_gains_db is empty".into());
        }
        if self.bullseye.bins == 0 || !(self.bullseye.half_width > 0.0) {
            return bad("[bullseye] needs bins >= 1 and half_width > 0".into());
        }
        let b = &self.backaction;
        if !(b.strength > 0.0) || !(b.eta_cs > 0.0 && b.eta_cs <= 1.0) || !(b.t_window_ns >= 0.0) || !(b.t2_us > 0.0) {
            return bad(format!("[backaction] out of range: {b:?}"));
        }
        let n = &self.nvr;
        if n.nvr_db_points < 2 || !(n.nvr_db_min > 0.0) || !(n.nvr_db_max > n.nvr_db_min) {
            return bad("[nvr] needs nvr_db_points >= 2 and 0 < nvr_db_min < nvr_db_max".into());
        }
        let c = &self.calibration;
        if !(c.arm_ratio > 0.0) || !(c.max_relative_miss > 0.0) {
            return bad("[calibration] arm_ratio and max_relative_miss must be > 0".into());
        }
        let e = self.snr_sweep.baseline_error_rate;
        if !(e > 0.0 && e < 0.5) {
            return bad(format!("[snr_sweep] baseline_error_rate must lie in (0, 0.5), got {e}"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        let dev = c.device.interferometer().unwrap();
        let reference = InterferometerConfig::default();
        assert!((dev.cavity.kappa / reference.cavity.kappa - 1.0).abs() < 1e-14);
        assert_eq!(dev.eta_upper, reference.eta_upper);
        assert_eq!(dev.entangler, reference.entangler);
    }

    #[test]
    fn unknown_key_reports_location() {
        let err = ExperimentConfig::from_toml("[device]\nkappa_hz = 3.0\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("kappa_hz") && msg.contains("line 2"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn infinite_nvr_roundtrips() {
        let c = ExperimentConfig::from_toml("[device]\nnvr_db = inf\n").unwrap();
        assert!(c.device.nvr_db.is_infinite());
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_target_table_disables_the_rest() {
        let c = ExperimentConfig::from_toml("[calibration.targets]\nsnr_gain = 2.0\n").unwrap();
        assert_eq!(c.calibration.targets.snr_gain, Some(2.0));
        assert_eq!(c.calibration.targets.sigma_ratio_high, None);
        assert_eq!(ExperimentConfig::default().calibration.targets.sigma_ratio_low, Some(0.86));
    }

    #[test]
    fn device_roundtrip() {
        let dev = InterferometerConfig {
            eta_upper: 0.5,
            ..InterferometerConfig::default()
        }
        .with_delta_phi(1.0);
        let back = DeviceConfig::from_interferometer(&dev).interferometer().unwrap();
        assert!((back.delta_phi() - 1.0).abs() < 1e-12);
        assert!((back.cavity.kappa - dev.cavity.kappa).abs() < 1e-6);
        assert_eq!(back.eta_upper, 0.5);
    }

    #[test]
    fn experiment_names_parse() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
    }
}
