//! The two-JPC interferometer: entangler → lossy arms (cavity on the upper
//! arm) → analyzer, read out at the analyzer's signal port.
//!
//! Mode 0 is the upper (signal) arm and mode 1 the lower (idler) arm. The
//! analyzer pump phase is `entangler.pump_phase + Δφ`.

use std::f64::consts::TAU;

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::{cavity_phase, drive_displacement, CavityParams, JpcParams, OutputChainParams, QubitState};
use crate::error::{ensure_finite, invalid, Error, Result};
use crate::gaussian::{ComplexAmplitude, GaussianState};

const UPPER: usize = 0;
const LOWER: usize = 1;

/// Number of scan points used to bracket matched-noise roots.
pub const MATCH_SCAN_POINTS: usize = 720;
/// Root tolerance on `|σ_g − σ_e|` at a matched point.
pub const MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterferometerConfig {
    pub entangler: JpcParams,
    pub analyzer: JpcParams,
    /// Power transmission of the upper arm between entangler and cavity.
    pub eta_upper: f64,
    /// Power transmission of the lower arm.
    pub eta_lower: f64,
    /// Transmission between the cavity and the analyzer on the upper arm.
    pub eta_post_cavity: f64,
    /// Quantum efficiency of the analyzer, modelled as extra input-referred
    /// noise `(1/η − 1)/2` on both analyzer inputs.
    pub analyzer_efficiency: f64,
    pub cavity: CavityParams,
    /// Thermal photons at the entangler inputs.
    pub input_occupation: f64,
    pub chain: OutputChainParams,
    /// Static scale on the injected drive amplitude.
    pub signal_scale: f64,
}

impl Default for InterferometerConfig {
    fn default() -> Self {
        let eta_lower = 0.81;
        Self {
            entangler: JpcParams::new(0.5, 0.0),
            analyzer: JpcParams::new(20.0, 0.0),
            eta_upper: 0.9 * eta_lower,
            eta_lower,
            eta_post_cavity: 1.0,
            analyzer_efficiency: 1.0,
            cavity: CavityParams::default(),
            input_occupation: 0.0,
            chain: OutputChainParams::default(),
            signal_scale: 1.0,
        }
    }
}

impl InterferometerConfig {
    /// Lossless, noiseless-chain interferometer with the given gains.
    pub fn ideal(entangler_gain_db: f64, analyzer_gain_db: f64) -> Self {
        Self {
            entangler: JpcParams::new(entangler_gain_db, 0.0),
            analyzer: JpcParams::new(analyzer_gain_db, 0.0),
            eta_upper: 1.0,
            eta_lower: 1.0,
            chain: OutputChainParams::noiseless(),
            ..Self::default()
        }
    }

    /// Relative pump phase `φ_A − φ_E` reduced to `[0, 2π)`.
    pub fn delta_phi(&self) -> f64 {
        (self.analyzer.pump_phase - self.entangler.pump_phase).rem_euclid(TAU)
    }

    pub fn with_delta_phi(mut self, delta_phi: f64) -> Self {
        self.analyzer.pump_phase = self.entangler.pump_phase + delta_phi.rem_euclid(TAU);
        self
    }

    pub fn with_entangler_gain_db(mut self, gain_db: f64) -> Self {
        self.entangler.gain_db = gain_db;
        self
    }

    /// Same device with the entangler switched off (coherent state + phase-preserving amplifier).
    pub fn cs_baseline(&self) -> Self {
        self.with_entangler_gain_db(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        self.entangler.squeezing()?;
        self.analyzer.squeezing()?;
        for (name, eta) in [
            ("eta_upper", self.eta_upper),
            ("eta_lower", self.eta_lower),
            ("eta_post_cavity", self.eta_post_cavity),
        ] {
            ensure_finite(name, eta)?;
            if !(0.0..=1.0).contains(&eta) {
                return invalid(format!("{name} must lie in [0, 1], got {eta}"));
            }
        }
        ensure_finite("analyzer_efficiency", self.analyzer_efficiency)?;
        if !(self.analyzer_efficiency > 0.0 && self.analyzer_efficiency <= 1.0) {
            return invalid(format!(
                "analyzer_efficiency must lie in (0, 1], got {}",
                self.analyzer_efficiency
            ));
        }
        ensure_finite("input_occupation", self.input_occupation)?;
        if self.input_occupation < 0.0 {
            return invalid("input_occupation must be >= 0");
        }
        ensure_finite("signal_scale", self.signal_scale)?;
        if self.signal_scale <= 0.0 {
            return invalid("signal_scale must be > 0");
        }
        self.cavity.validate()?;
        self.chain.validate()
    }

    fn analyzer_added_noise(&self) -> f64 {
        0.5 * (1.0 / self.analyzer_efficiency - 1.0)
    }
}

/// Where output moments are referred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reference {
    /// Analyzer signal-port output mode.
    Amplifier,
    /// Digitized record: amplifier output plus output-chain noise.
    Record,
}

/// Mean and covariance of the analyzer signal-port output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputMoments {
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
}

impl OutputMoments {
    /// Average of the two quadrature standard deviations.
    pub fn sigma(&self) -> f64 {
        0.5 * (self.cov[(0, 0)].sqrt() + self.cov[(1, 1)].sqrt())
    }

    /// Mean of the two quadrature variances.
    pub fn mean_variance(&self) -> f64 {
        0.5 * (self.cov[(0, 0)] + self.cov[(1, 1)])
    }
}

/// Full two-mode output state after the analyzer (amplifier-referred).
///
/// `input` displaces the entangler signal input; `drive` is injected on the
/// upper arm after the arm loss and cavity phase.
pub fn output_state(
    config: &InterferometerConfig,
    qs: QubitState,
    input: ComplexAmplitude,
    drive: ComplexAmplitude,
) -> Result<GaussianState> {
    config.validate()?;
    let r_e = config.entangler.squeezing()?;
    let r_a = config.analyzer.squeezing()?;
    let theta = cavity_phase(&config.cavity, qs);
    let added = config.analyzer_added_noise();
    GaussianState::thermal(2, config.input_occupation)?
        .displace(UPPER, input)?
        .two_mode_squeeze(UPPER, LOWER, r_e, config.entangler.pump_phase)?
        .loss_channel(UPPER, config.eta_upper, 0.0)?
        .loss_channel(LOWER, config.eta_lower, 0.0)?
        .phase_shift(UPPER, theta)?
        .displace(UPPER, drive * config.signal_scale)?
        .loss_channel(UPPER, config.eta_post_cavity, 0.0)?
        .add_noise(UPPER, added)?
        .add_noise(LOWER, added)?
        .two_mode_squeeze(UPPER, LOWER, r_a, config.analyzer.pump_phase)?
        .require_physical("analyzer")
}

/// Variance added by the output chain (and heterodyne penalty) to each record quadrature.
pub fn record_added_variance(config: &InterferometerConfig) -> Result<f64> {
    let cs = output_state(&config.cs_baseline(), QubitState::G, Complex64::ZERO, Complex64::ZERO)?;
    let (_, cov) = cs.marginal(UPPER)?;
    let n_cs = 0.5 * (cov[(0, 0)] + cov[(1, 1)]);
    let penalty = if config.chain.include_heterodyne_penalty { 0.5 } else { 0.0 };
    Ok(config.chain.added_variance(n_cs)? + penalty)
}

fn moments_with_added(
    config: &InterferometerConfig,
    qs: QubitState,
    drive: ComplexAmplitude,
    added: f64,
) -> Result<OutputMoments> {
    let state = output_state(config, qs, Complex64::ZERO, drive)?;
    let (mean, cov) = state.marginal(UPPER)?;
    Ok(OutputMoments {
        mean,
        cov: cov + Matrix2::identity() * added,
    })
}

/// Signal-port output moments for qubit state `qs` under a weak-port drive.
pub fn propagate(
    config: &InterferometerConfig,
    qs: QubitState,
    drive_amp: f64,
    drive_phase: f64,
    reference: Reference,
) -> Result<OutputMoments> {
    let drive = drive_displacement(drive_amp, drive_phase, &config.cavity, qs)?;
    let added = match reference {
        Reference::Amplifier => 0.0,
        Reference::Record => record_added_variance(config)?,
    };
    moments_with_added(config, qs, drive, added)
}

/// Transmission amplitude from the entangler signal input to the analyzer signal output.
pub fn s_aa(config: &InterferometerConfig, qs: QubitState) -> Result<Complex64> {
    config.validate()?;
    let r_e = config.entangler.squeezing()?;
    let r_a = config.analyzer.squeezing()?;
    let theta = cavity_phase(&config.cavity, qs);
    let upper = (config.eta_upper * config.eta_post_cavity).sqrt() * r_e.cosh() * r_a.cosh();
    let lower = config.eta_lower.sqrt() * r_e.sinh() * r_a.sinh();
    Ok(Complex64::from_polar(upper, theta) + Complex64::from_polar(lower, config.delta_phi()))
}

/// One row of a noise-vs-phase sweep (record-referred, drive off).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSweepRow {
    pub delta_phi: f64,
    pub sigma_g: f64,
    pub sigma_e: f64,
    pub normalized_g: f64,
    pub normalized_e: f64,
}

/// Shared pieces for evaluating the noise of many phase settings of one device.
struct NoiseEvaluator {
    config: InterferometerConfig,
    added: f64,
}

impl NoiseEvaluator {
    fn new(config: &InterferometerConfig) -> Result<Self> {
        Ok(Self {
            config: *config,
            added: record_added_variance(config)?,
        })
    }

    fn moments(&self, delta_phi: f64, qs: QubitState) -> Result<OutputMoments> {
        moments_with_added(&self.config.with_delta_phi(delta_phi), qs, Complex64::ZERO, self.added)
    }

    fn sigma(&self, delta_phi: f64, qs: QubitState) -> Result<f64> {
        Ok(self.moments(delta_phi, qs)?.sigma())
    }

    fn baseline_sigma(&self) -> Result<f64> {
        Ok(moments_with_added(&self.config.cs_baseline(), QubitState::G, Complex64::ZERO, self.added)?.sigma())
    }
}

/// Record-referred σ of the coherent-state baseline (entangler off) of this device.
pub fn baseline_sigma(config: &InterferometerConfig) -> Result<f64> {
    NoiseEvaluator::new(config)?.baseline_sigma()
}

/// Output noise σ for both qubit states across `grid`, normalized to the entangler-off baseline.
pub fn phase_sweep(config: &InterferometerConfig, grid: &[f64]) -> Result<Vec<PhaseSweepRow>> {
    if grid.is_empty() {
        return invalid("phase grid is empty");
    }
    let eval = NoiseEvaluator::new(config)?;
    let base = eval.baseline_sigma()?;
    grid.par_iter()
        .map(|&dphi| {
            let sigma_g = eval.sigma(dphi, QubitState::G)?;
            let sigma_e = eval.sigma(dphi, QubitState::E)?;
            Ok(PhaseSweepRow {
                delta_phi: dphi,
                sigma_g,
                sigma_e,
                normalized_g: sigma_g / base,
                normalized_e: sigma_e / base,
            })
        })
        .collect()
}

/// The two relative pump phases where both qubit states give the same output noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPoints {
    pub delta_phi_high: f64,
    pub delta_phi_low: f64,
    pub sigma_high: f64,
    pub sigma_low: f64,
}

impl MatchedPoints {
    /// Separation `Δφ_low − Δφ_high` reduced to `[0, 2π)`.
    pub fn separation(&self) -> f64 {
        (self.delta_phi_low - self.delta_phi_high).rem_euclid(TAU)
    }
}

/// Locates the matched-noise points by scanning `σ_g − σ_e` over one period and bisecting.
pub fn find_matched_points(config: &InterferometerConfig) -> Result<MatchedPoints> {
    let dtheta = config.cavity.delta_theta();
    let wrapped = dtheta.rem_euclid(TAU);
    if wrapped.min(TAU - wrapped) < 1e-12 {
        return Err(Error::DegenerateConfig(
            "θ_e equals θ_g: all phases matched".to_string(),
        ));
    }
    let eval = NoiseEvaluator::new(config)?;
    let diff = |x: f64| -> Result<f64> { Ok(eval.sigma(x, QubitState::G)? - eval.sigma(x, QubitState::E)?) };

    let step = TAU / MATCH_SCAN_POINTS as f64;
    let samples = (0..MATCH_SCAN_POINTS)
        .into_par_iter()
        .map(|k| diff(k as f64 * step))
        .collect::<Result<Vec<_>>>()?;
    let mut brackets = Vec::new();
    for k in 0..MATCH_SCAN_POINTS {
        let (f0, f1) = (samples[k], samples[(k + 1) % MATCH_SCAN_POINTS]);
        if (f0 >= 0.0) != (f1 >= 0.0) {
            brackets.push((k as f64 * step, (k + 1) as f64 * step, f0));
        }
    }
    if brackets.len() != 2 {
        let max_abs = samples.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        return Err(Error::AmbiguousRoots {
            found: brackets.len(),
            diagnostics: format!(
                "scan of {MATCH_SCAN_POINTS} points, max |σ_g − σ_e| = {max_abs:.3e}, Δθ = {dtheta:.6} rad"
            ),
        });
    }

    let mut roots = Vec::with_capacity(2);
    for (mut lo, mut hi, mut f_lo) in brackets {
        let mut mid = 0.5 * (lo + hi);
        for _ in 0..200 {
            mid = 0.5 * (lo + hi);
            let f_mid = diff(mid)?;
            if f_mid.abs() < MATCH_TOL && hi - lo < 1e-12 {
                break;
            }
            if (f_mid >= 0.0) == (f_lo >= 0.0) {
                lo = mid;
                f_lo = f_mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * TAU {
                break;
            }
        }
        let residual = diff(mid)?;
        if residual.abs() >= MATCH_TOL {
            return Err(Error::Consistency(format!(
                "bisection stalled at Δφ = {mid}: |σ_g − σ_e| = {residual:.3e}"
            )));
        }
        let phi = mid.rem_euclid(TAU);
        roots.push((phi, eval.sigma(phi, QubitState::G)?));
    }
    roots.sort_by(|a, b| b.1.total_cmp(&a.1));
    let (high, low) = (roots[0], roots[1]);
    Ok(MatchedPoints {
        delta_phi_high: high.0,
        delta_phi_low: low.0,
        sigma_high: high.1,
        sigma_low: low.1,
    })
}

/// Evenly spaced grid over `[0, 2π)`.
pub fn uniform_phase_grid(points: usize) -> Vec<f64> {
    (0..points).map(|k| TAU * k as f64 / points as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{r_to_gain_db, PhaseMode};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn lossless(ge: f64, ga: f64) -> InterferometerConfig {
        InterferometerConfig::ideal(ge, ga)
    }

    #[test]
    fn cs_baseline_is_single_amplifier() {
        let cfg = lossless(0.0, 20.0);
        let m = propagate(&cfg, QubitState::G, 0.0, 0.0, Reference::Amplifier).unwrap();
        assert!((m.cov - Matrix2::identity() * (2.0 * 100.0 - 1.0) / 2.0).amax() < 1e-9);
        // arm losses do not matter with the entangler off
        let lossy = InterferometerConfig {
            eta_upper: 0.5,
            eta_lower: 0.3,
            chain: OutputChainParams::noiseless(),
            ..cfg
        };
        let m2 = propagate(&lossy.cs_baseline(), QubitState::E, 0.0, 0.0, Reference::Amplifier).unwrap();
        assert!((m2.cov - m.cov).amax() < 1e-9);
    }

    #[test]
    fn matched_gain_cancellation() {
        for gain in [1.5, 10.0, 20.0] {
            let mut cfg = lossless(gain, gain).with_delta_phi(PI);
            cfg.cavity.phase_mode = PhaseMode::Calibrated;
            let m = propagate(&cfg, QubitState::G, 0.0, 0.0, Reference::Amplifier).unwrap();
            assert!((m.cov - Matrix2::identity() * 0.5).amax() < 1e-9, "gain {gain}: {}", m.cov);
            let s = s_aa(&cfg, QubitState::G).unwrap();
            assert_abs_diff_eq!(s.norm(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn s_aa_examples() {
        let r = gain_db_to_r_unchecked(6.0);
        let cfg = lossless(6.0, 6.0).with_delta_phi(0.0);
        let g = r.cosh().powi(2);
        assert_abs_diff_eq!(s_aa(&cfg, QubitState::G).unwrap().re, 2.0 * g - 1.0, epsilon = 1e-9);

        let cfg = InterferometerConfig {
            eta_upper: 0.7,
            ..lossless(0.0, 20.0)
        };
        let s = s_aa(&cfg, QubitState::E).unwrap();
        let theta = cfg.cavity.delta_theta();
        let expected = Complex64::from_polar((0.7f64 * 100.0).sqrt(), theta);
        assert_abs_diff_eq!(s.re, expected.re, epsilon = 1e-9);
        assert_abs_diff_eq!(s.im, expected.im, epsilon = 1e-9);
    }

    fn gain_db_to_r_unchecked(db: f64) -> f64 {
        crate::device::gain_db_to_r(db).unwrap()
    }

    #[test]
    fn s_aa_matches_propagated_input_displacement() {
        let alpha = Complex64::new(0.37, -0.21);
        for (ge, ga, dphi, eu, el, epc) in [
            (1.5, 20.0, 0.3, 1.0, 1.0, 1.0),
            (0.67, 10.0, 2.0, 0.729, 0.81, 1.0),
            (9.15, 10.0, 4.4, 0.6, 0.9, 0.95),
            (3.0, 3.0, PI, 0.5, 0.5, 1.0),
        ] {
            let cfg = InterferometerConfig {
                eta_upper: eu,
                eta_lower: el,
                eta_post_cavity: epc,
                ..lossless(ge, ga).with_delta_phi(dphi)
            };
            for qs in QubitState::BOTH {
                let out = output_state(&cfg, qs, alpha, Complex64::ZERO).unwrap();
                let (mean, _) = out.marginal(0).unwrap();
                let ratio = mean.norm() / (std::f64::consts::SQRT_2 * alpha.norm());
                let s = s_aa(&cfg, qs).unwrap();
                assert_abs_diff_eq!(ratio, s.norm(), epsilon = 1e-9 * s.norm().max(1.0));
            }
        }
    }

    #[test]
    fn drive_magnitude_independent_of_phase_and_entangler() {
        let base = propagate(&lossless(0.0, 20.0), QubitState::G, 1.3, 0.2, Reference::Amplifier)
            .unwrap()
            .mean
            .norm();
        for ge in [0.5, 1.5, 4.0] {
            for k in 0..16 {
                let cfg = lossless(ge, 20.0).with_delta_phi(k as f64 * TAU / 16.0);
                let m = propagate(&cfg, QubitState::E, 1.3, 0.2, Reference::Amplifier).unwrap();
                assert!((m.mean.norm() - base).abs() < 1e-10 * base);
            }
        }
    }

    #[test]
    fn sweep_flat_without_entangler() {
        let rows = phase_sweep(&InterferometerConfig::default().cs_baseline(), &uniform_phase_grid(36)).unwrap();
        for row in rows {
            assert_abs_diff_eq!(row.normalized_g, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(row.normalized_e, 1.0, epsilon = 1e-12);
        }
        assert!(phase_sweep(&InterferometerConfig::default(), &[]).is_err());
    }

    #[test]
    fn lossless_sweep_dips_below_baseline() {
        // Covariance oracle: with amplitude coefficients A, B of a and b†,
        // the output variance is (|A|² + |B|²)/2, independent of the code path.
        let ge = 1.5;
        let ga = 20.0;
        let cfg = lossless(ge, ga);
        let grid = uniform_phase_grid(360);
        let rows = phase_sweep(&cfg, &grid).unwrap();
        let (re, ra) = (gain_db_to_r_unchecked(ge), gain_db_to_r_unchecked(ga));
        for row in &rows {
            let a = Complex64::from_polar(ra.cosh() * re.cosh(), 0.0)
                + Complex64::from_polar(ra.sinh() * re.sinh(), row.delta_phi);
            let b = Complex64::from_polar(ra.cosh() * re.sinh(), 0.0)
                + Complex64::from_polar(ra.sinh() * re.cosh(), row.delta_phi);
            let var = 0.5 * (a.norm_sqr() + b.norm_sqr());
            assert_abs_diff_eq!(row.sigma_g, var.sqrt(), epsilon = 1e-9 * var.sqrt());
        }
        let min = rows.iter().map(|r| r.normalized_g).fold(f64::INFINITY, f64::min);
        let max = rows.iter().map(|r| r.normalized_g).fold(0.0, f64::max);
        assert!(min < 1.0 && 1.0 < max, "min {min} max {max}");
    }

    #[test]
    fn excited_curve_is_translated_ground_curve() {
        let cfg = InterferometerConfig::default().with_entangler_gain_db(2.0);
        let dtheta = cfg.cavity.delta_theta();
        let grid = uniform_phase_grid(90);
        let shifted: Vec<f64> = grid.iter().map(|x| x - dtheta).collect();
        let a = phase_sweep(&cfg, &grid).unwrap();
        let b = phase_sweep(&cfg, &shifted).unwrap();
        for (ra, rb) in a.iter().zip(&b) {
            assert!((ra.sigma_e - rb.sigma_g).abs() < 1e-10 * ra.sigma_e);
        }
    }

    #[test]
    fn loss_keeps_minimum_above_vacuum() {
        let grid = uniform_phase_grid(720);
        let min_var = |cfg: &InterferometerConfig| {
            grid.iter()
                .map(|&x| {
                    propagate(&cfg.with_delta_phi(x), QubitState::G, 0.0, 0.0, Reference::Amplifier)
                        .unwrap()
                        .mean_variance()
                })
                .fold(f64::INFINITY, f64::min)
        };
        let mut cfg = lossless(10.0, 10.0);
        cfg.cavity.calibrated_delta_theta = 0.0;
        assert_abs_diff_eq!(min_var(&cfg), 0.5, epsilon = 1e-9);
        cfg.eta_upper = 0.99;
        assert!(min_var(&cfg) > 0.5 + 1e-6);
    }

    #[test]
    fn matched_points_degenerate_and_ordering() {
        let mut cfg = InterferometerConfig::default().with_entangler_gain_db(2.0);
        let m = find_matched_points(&cfg).unwrap();
        assert!(m.sigma_high > m.sigma_low);
        let g = propagate(&cfg.with_delta_phi(m.delta_phi_low), QubitState::G, 0.0, 0.0, Reference::Record).unwrap();
        let e = propagate(&cfg.with_delta_phi(m.delta_phi_low), QubitState::E, 0.0, 0.0, Reference::Record).unwrap();
        assert!((g.sigma() - e.sigma()).abs() < MATCH_TOL);

        cfg.cavity.calibrated_delta_theta = 0.0;
        assert!(matches!(find_matched_points(&cfg), Err(Error::DegenerateConfig(_))));
        cfg.cavity.calibrated_delta_theta = TAU;
        assert!(matches!(find_matched_points(&cfg), Err(Error::DegenerateConfig(_))));
    }

    #[test]
    fn matched_points_need_interference() {
        let cfg = InterferometerConfig::default().cs_baseline();
        assert!(matches!(find_matched_points(&cfg), Err(Error::AmbiguousRoots { .. })));
    }

    #[test]
    fn matched_points_sit_half_a_shift_from_extrema() {
        // Oracle: σ_g(x) has a unique maximum x_max on a fine grid; the
        // matched condition f(x) = f(x − Δθ) puts roots at x_max + Δθ/2 and
        // x_max + Δθ/2 + π.
        let cfg = InterferometerConfig::default().with_entangler_gain_db(1.0);
        let grid = uniform_phase_grid(200_000);
        let eval = NoiseEvaluator::new(&cfg).unwrap();
        let x_max = grid
            .iter()
            .copied()
            .max_by(|a, b| eval.sigma(*a, QubitState::G).unwrap().total_cmp(&eval.sigma(*b, QubitState::G).unwrap()))
            .unwrap();
        let dtheta = cfg.cavity.delta_theta();
        let m = find_matched_points(&cfg).unwrap();
        let expected_high = (x_max + dtheta / 2.0).rem_euclid(TAU);
        let expected_low = (x_max + dtheta / 2.0 + PI).rem_euclid(TAU);
        let circ = |a: f64, b: f64| {
            let d = (a - b).rem_euclid(TAU);
            d.min(TAU - d)
        };
        assert!(circ(m.delta_phi_high, expected_high) < 1e-4);
        assert!(circ(m.delta_phi_low, expected_low) < 1e-4);
        assert_abs_diff_eq!(m.separation(), PI, epsilon = 1e-6);
    }

    #[test]
    fn delta_phi_wraps() {
        let cfg = InterferometerConfig::default().with_delta_phi(-0.5);
        assert_abs_diff_eq!(cfg.delta_phi(), TAU - 0.5, epsilon = 1e-12);
        assert!(r_to_gain_db(0.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = InterferometerConfig::default();
        cfg.eta_upper = 1.2;
        assert!(propagate(&cfg, QubitState::G, 0.0, 0.0, Reference::Record).is_err());
        let mut cfg = InterferometerConfig::default();
        cfg.entangler.gain_db = f64::NAN;
        assert!(matches!(
            propagate(&cfg, QubitState::G, 0.0, 0.0, Reference::Record),
            Err(Error::InvalidArgument(_))
        ));
        let mut cfg = InterferometerConfig::default();
        cfg.analyzer_efficiency = 0.0;
        assert!(cfg.validate().is_err());
    }
}
