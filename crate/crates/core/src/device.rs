//! Device models: amplifier gain ↔ squeezing, dispersive cavity reflection
//! phase, weak-port drive displacement, and output-chain noise.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, invalid, Result};
use crate::gaussian::ComplexAmplitude;

/// Converts a power ratio in dB to linear.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Squeezing parameter `r = cosh⁻¹(√G)` of a phase-preserving amplifier with power gain `gain_db`.
pub fn gain_db_to_r(gain_db: f64) -> Result<f64> {
    ensure_finite("gain_db", gain_db)?;
    if gain_db < 0.0 {
        return invalid(format!("gain must be >= 0 dB, got {gain_db}"));
    }
    Ok(db_to_linear(gain_db).sqrt().acosh())
}

/// Inverse of [`gain_db_to_r`]: `10·log10(cosh² r)`.
pub fn r_to_gain_db(r: f64) -> f64 {
    linear_to_db(r.cosh().powi(2))
}

/// One Josephson parametric converter: power gain and pump phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JpcParams {
    pub gain_db: f64,
    pub pump_phase: f64,
}

impl JpcParams {
    pub fn new(gain_db: f64, pump_phase: f64) -> Self {
        Self { gain_db, pump_phase }
    }

    pub fn squeezing(&self) -> Result<f64> {
        ensure_finite("pump_phase", self.pump_phase)?;
        gain_db_to_r(self.gain_db)
    }

    pub fn gain_linear(&self) -> f64 {
        db_to_linear(self.gain_db)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QubitState {
    G,
    E,
}

impl QubitState {
    pub const BOTH: [QubitState; 2] = [QubitState::G, QubitState::E];

    /// Bloch z component: +1 for g, -1 for e.
    pub fn bloch_z(self) -> f64 {
        match self {
            QubitState::G => 1.0,
            QubitState::E => -1.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            QubitState::G => "g",
            QubitState::E => "e",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseMode {
    /// Steady-state single-port reflection off the dispersively shifted cavity.
    Physical,
    /// θ_g = 0 and θ_e = `calibrated_delta_theta`.
    Calibrated,
}

/// Dispersively coupled readout cavity seen from its strong port.
///
/// Frequencies are angular (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    pub kappa: f64,
    pub chi: f64,
    pub drive_detuning: f64,
    pub phase_mode: PhaseMode,
    pub calibrated_delta_theta: f64,
}

impl Default for CavityParams {
    fn default() -> Self {
        let sample = SampleParameters::default();
        Self {
            kappa: TAU * sample.kappa_hz,
            chi: TAU * sample.chi_hz,
            drive_detuning: 0.0,
            phase_mode: PhaseMode::Calibrated,
            calibrated_delta_theta: 40f64.to_radians(),
        }
    }
}

impl CavityParams {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("kappa", self.kappa)?;
        ensure_finite("chi", self.chi)?;
        ensure_finite("drive_detuning", self.drive_detuning)?;
        ensure_finite("calibrated_delta_theta", self.calibrated_delta_theta)?;
        if self.kappa <= 0.0 {
            return invalid(format!("kappa must be > 0, got {}", self.kappa));
        }
        Ok(())
    }

    /// `θ_e − θ_g`.
    pub fn delta_theta(&self) -> f64 {
        cavity_phase(self, QubitState::E) - cavity_phase(self, QubitState::G)
    }
}

/// Reflection phase picked up by light leaving the cavity's strong port.
///
/// Physical mode uses `θ = −2·atan2(2(Δ − s·χ), κ)` with `s = +1` for g.
pub fn cavity_phase(cavity: &CavityParams, qs: QubitState) -> f64 {
    match cavity.phase_mode {
        PhaseMode::Physical => {
            let shifted = cavity.drive_detuning - qs.bloch_z() * cavity.chi;
            -2.0 * (2.0 * shifted).atan2(cavity.kappa)
        }
        PhaseMode::Calibrated => match qs {
            QubitState::G => 0.0,
            QubitState::E => cavity.calibrated_delta_theta,
        },
    }
}

/// Output displacement produced by a weak-port drive of amplitude `amp`.
///
/// The reflection is lossless, so only the phase depends on the qubit state.
pub fn drive_displacement(amp: f64, drive_phase: f64, cavity: &CavityParams, qs: QubitState) -> Result<ComplexAmplitude> {
    ensure_finite("amp", amp)?;
    ensure_finite("drive_phase", drive_phase)?;
    if amp < 0.0 {
        return invalid(format!("drive amplitude must be >= 0, got {amp}"));
    }
    Ok(Complex64::from_polar(amp, drive_phase + cavity_phase(cavity, qs)))
}

/// Output chain after the analyzer, characterised by its noise-visibility ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputChainParams {
    /// NVR in dB at the coherent-state reference configuration. `+inf` means a noiseless chain.
    pub nvr_db: f64,
    /// Adds the half quantum of vacuum noise of an ideal heterodyne measurement.
    pub include_heterodyne_penalty: bool,
}

impl Default for OutputChainParams {
    fn default() -> Self {
        Self {
            nvr_db: 7.0,
            include_heterodyne_penalty: false,
        }
    }
}

impl OutputChainParams {
    pub fn noiseless() -> Self {
        Self {
            nvr_db: f64::INFINITY,
            include_heterodyne_penalty: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nvr_db.is_nan() || self.nvr_db <= 0.0 {
            return invalid(format!("NVR must be > 0 dB, got {}", self.nvr_db));
        }
        Ok(())
    }

    /// Chain noise referred to the analyzer output, given the analyzer's
    /// coherent-state output variance `reference_variance`: `N_out = N_CS / (NVR − 1)`.
    pub fn added_variance(&self, reference_variance: f64) -> Result<f64> {
        self.validate()?;
        if self.nvr_db.is_infinite() {
            return Ok(0.0);
        }
        Ok(reference_variance / (db_to_linear(self.nvr_db) - 1.0))
    }
}

/// Output-chain efficiency `1 − 1/NVR`.
pub fn nvr_to_eta_out(nvr_db: f64) -> Result<f64> {
    if nvr_db.is_nan() || nvr_db <= 0.0 {
        return invalid(format!("NVR must exceed 0 dB (linear > 1), got {nvr_db} dB"));
    }
    Ok(1.0 - 1.0 / db_to_linear(nvr_db))
}

/// Measured sample parameters of the reference device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleParameters {
    pub cavity_freq_hz: f64,
    pub kappa_hz: f64,
    pub chi_hz: f64,
    pub q_strong: f64,
    pub q_weak: f64,
    pub qubit_freq_hz: f64,
    pub anharmonicity_hz: f64,
    pub t1_s: f64,
    pub t2r_s: f64,
    pub t2e_s: f64,
    pub record_window_s: f64,
    pub nvr_db: f64,
}

impl Default for SampleParameters {
    fn default() -> Self {
        Self {
            cavity_freq_hz: 7.447e9,
            kappa_hz: 9.9e6,
            chi_hz: 2.2e6,
            q_strong: 752.0,
            q_weak: 1.0e6,
            qubit_freq_hz: 4.102e9,
            anharmonicity_hz: 180e6,
            t1_s: 18.2e-6,
            t2r_s: 4.4e-6,
            t2e_s: 4.6e-6,
            record_window_s: 660e-9,
            nvr_db: 7.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn gain_conversion_examples() {
        assert_eq!(gain_db_to_r(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(gain_db_to_r(20.0).unwrap(), 10f64.acosh(), epsilon = 1e-12);
        assert_abs_diff_eq!(gain_db_to_r(20.0).unwrap(), 2.9932, epsilon = 5e-5);
        assert_abs_diff_eq!(gain_db_to_r(1.5).unwrap(), 0.605, epsilon = 5e-4);
        assert!(gain_db_to_r(-1.0).is_err());
    }

    #[test]
    fn physical_phase_examples() {
        let mut cav = CavityParams {
            phase_mode: PhaseMode::Physical,
            ..CavityParams::default()
        };
        cav.drive_detuning = cav.chi;
        assert_abs_diff_eq!(cavity_phase(&cav, QubitState::G), 0.0, epsilon = 1e-15);

        cav.drive_detuning = 0.0;
        cav.chi = 0.22 * cav.kappa;
        let expected = 4.0 * 0.44f64.atan();
        assert_abs_diff_eq!(cav.delta_theta().abs(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 1.658, epsilon = 1e-3);
        assert_abs_diff_eq!(expected.to_degrees(), 95.5, epsilon = 0.6);
    }

    #[test]
    fn calibrated_phase_default() {
        let cav = CavityParams::default();
        assert_eq!(cav.phase_mode, PhaseMode::Calibrated);
        assert_eq!(cavity_phase(&cav, QubitState::G), 0.0);
        assert_eq!(cav.delta_theta(), 40f64.to_radians());
        assert_abs_diff_eq!(cav.delta_theta(), 0.698, epsilon = 1e-3);
    }

    #[test]
    fn eta_out_examples() {
        assert_abs_diff_eq!(nvr_to_eta_out(7.0).unwrap(), 0.8005, epsilon = 1e-4);
        assert_abs_diff_eq!(nvr_to_eta_out(f64::INFINITY).unwrap(), 1.0);
        assert!(nvr_to_eta_out(0.0).is_err());
        assert!(nvr_to_eta_out(-3.0).is_err());
    }

    #[test]
    fn drive_examples() {
        let cav = CavityParams::default();
        assert_eq!(drive_displacement(0.0, 0.3, &cav, QubitState::E).unwrap().norm(), 0.0);
        let g = drive_displacement(1.0, 0.0, &cav, QubitState::G).unwrap();
        assert_abs_diff_eq!(g.re, 1.0);
        assert_abs_diff_eq!(g.im, 0.0);
        let e = drive_displacement(1.0, 0.0, &cav, QubitState::E).unwrap();
        let expected = Complex64::from_polar(1.0, 40f64.to_radians());
        assert_abs_diff_eq!(e.re, expected.re, epsilon = 1e-15);
        assert_abs_diff_eq!(e.im, expected.im, epsilon = 1e-15);
        assert_abs_diff_eq!(e.arg(), 0.698, epsilon = 1e-3);
        assert!(drive_displacement(-1.0, 0.0, &cav, QubitState::G).is_err());
    }

    #[test]
    fn chain_noise_matches_nvr_definition() {
        let chain = OutputChainParams::default();
        let n_cs = 99.5;
        let n_out = chain.added_variance(n_cs).unwrap();
        assert_abs_diff_eq!((n_cs + n_out) / n_out, db_to_linear(7.0), epsilon = 1e-12);
        assert_eq!(OutputChainParams::noiseless().added_variance(n_cs).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn drive_magnitude_is_state_independent(
            amp in 0.0..10.0f64, phase in -7.0..7.0f64,
            chi_ratio in -1.0..1.0f64, det_ratio in -2.0..2.0f64, physical in any::<bool>(),
        ) {
            let kappa = 1.0e7;
            let cav = CavityParams {
                kappa,
                chi: chi_ratio * kappa,
                drive_detuning: det_ratio * kappa,
                phase_mode: if physical { PhaseMode::Physical } else { PhaseMode::Calibrated },
                calibrated_delta_theta: 0.7,
            };
            let g = drive_displacement(amp, phase, &cav, QubitState::G).unwrap();
            let e = drive_displacement(amp, phase, &cav, QubitState::E).unwrap();
            prop_assert!((g.norm() - e.norm()).abs() < 1e-12 * (1.0 + amp));
        }

        #[test]
        fn gain_round_trip(gain in 0.0..40.0f64, other in 0.0..40.0f64) {
            let r = gain_db_to_r(gain).unwrap();
            prop_assert!((r_to_gain_db(r) - gain).abs() < 1e-10);
            let r2 = gain_db_to_r(other).unwrap();
            if other > gain { prop_assert!(r2 > r); }
        }

        #[test]
        fn physical_phase_mirror_symmetry(chi_ratio in -1.0..1.0f64, det_ratio in -2.0..2.0f64) {
            // θ_e(Δ) = θ_g(−Δ) up to the overall sign of the reflection phase.
            let kappa = 1.0e7;
            let mk = |d: f64| CavityParams {
                kappa,
                chi: chi_ratio * kappa,
                drive_detuning: d * kappa,
                phase_mode: PhaseMode::Physical,
                calibrated_delta_theta: 0.0,
            };
            let te = cavity_phase(&mk(det_ratio), QubitState::E);
            let tg = cavity_phase(&mk(-det_ratio), QubitState::G);
            prop_assert!((te + tg).abs() < 1e-12);
        }
    }
}
