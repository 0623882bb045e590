//! Weak-measurement back-action of a dispersive record on the qubit Bloch
//! vector, synthetic conditional tomography, strength and efficiency fits, and
//! the noise-visibility-ratio efficiency budget.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::device::{db_to_linear, linear_to_db, nvr_to_eta_out};
use crate::error::{ensure_finite, invalid, Error, Result};
use crate::optim::gauss_newton;
use crate::readout::{chunked, write_shots_csv, Shot, TomoAxis};

/// Reference values reported for the measured device.
pub mod measured {
    pub const STRENGTH: f64 = 0.66;
    pub const ETA_CS: f64 = 0.46;
    pub const ETA_CS_CORRECTED: f64 = 0.52;
    pub const ETA_TMS_HIGH: f64 = 0.58;
    pub const ETA_TMS_LOW: f64 = 0.29;
    pub const SIGMA_RATIO_HIGH: f64 = 1.21;
    pub const SIGMA_RATIO_LOW: f64 = 0.86;
    pub const NVR_CS_DB: f64 = 7.0;
}

/// Geometry of the weak-measurement outcome distribution and the efficiency
/// of the channel that carried it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackactionParams {
    /// Half-separation of the two state centers along I.
    pub i_bar: f64,
    pub q_bar: f64,
    /// Per-quadrature standard deviation of each state's outcome distribution.
    pub sigma: f64,
    pub eta: f64,
}

impl BackactionParams {
    /// Parameters with unit σ, centers at `(±strength, 0)`.
    pub fn from_strength(strength: f64, eta: f64) -> Self {
        Self {
            i_bar: strength,
            q_bar: 0.0,
            sigma: 1.0,
            eta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("i_bar", self.i_bar)?;
        ensure_finite("q_bar", self.q_bar)?;
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return invalid(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return invalid(format!("eta must lie in (0, 1], got {}", self.eta));
        }
        if self.i_bar < 0.0 {
            return invalid(format!("i_bar must be non-negative, got {}", self.i_bar));
        }
        Ok(())
    }

    /// Dimensionless measurement strength `i_bar / sigma`.
    pub fn strength(&self) -> f64 {
        self.i_bar / self.sigma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub fn norm_sqr(&self) -> f64 {
        self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn component(&self, axis: TomoAxis) -> f64 {
        match axis {
            TomoAxis::X => self.x,
            TomoAxis::Y => self.y,
            TomoAxis::Z => self.z,
        }
    }
}

/// Informational part of the back-action; depends only on `I_m`.
pub fn z_component(i_m: f64, i_bar: f64, sigma: f64) -> f64 {
    (i_m * i_bar / (sigma * sigma)).tanh()
}

/// Conditional Bloch vector after observing `(i_m, q_m)`, starting from the
/// equator state with `y = 1`.
pub fn backaction_xyz(i_m: f64, q_m: f64, p: &BackactionParams) -> Result<BlochVector> {
    p.validate()?;
    let var = p.sigma * p.sigma;
    let k = p.i_bar / var;
    let lost = (1.0 - p.eta) / p.eta;
    let envelope = (i_m * k).cosh().recip() * (-(p.i_bar * p.i_bar / var) * lost).exp();
    let phase = q_m * k + p.q_bar * k * lost;
    Ok(BlochVector {
        x: envelope * phase.sin(),
        y: envelope * phase.cos(),
        z: z_component(i_m, p.i_bar, p.sigma),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyDataset {
    /// Every record carries an axis and a ±1 outcome.
    pub records: Vec<Shot>,
    pub seed: u64,
    pub params: BackactionParams,
    /// Factor applied to x and y before drawing outcomes (1 = no dephasing).
    pub coherence: f64,
}

impl TomographyDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_shots_csv(&self.records, writer)
    }

    fn on_axis(&self, axis: TomoAxis) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.records.iter().filter_map(move |s| match s.tomo {
            Some((a, out)) if a == axis => Some((s.i, s.q, f64::from(out))),
            _ => None,
        })
    }

    /// Sample standard deviation of `Q_m`, which is the per-state σ since both
    /// states share the same Q center.
    pub fn sigma_estimate(&self) -> Result<f64> {
        let n = self.records.len();
        if n < 2 {
            return Err(Error::InsufficientData(format!("need >= 2 records, got {n}")));
        }
        let mean = self.records.iter().map(|s| s.q).sum::<f64>() / n as f64;
        let var = self.records.iter().map(|s| (s.q - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Ok(var.sqrt())
    }

    fn q_mean(&self) -> f64 {
        self.records.iter().map(|s| s.q).sum::<f64>() / self.records.len().max(1) as f64
    }
}

/// Synthetic conditional tomography without extra dephasing.
pub fn generate_tomography(p: &BackactionParams, n_shots: usize, seed: u64) -> Result<TomographyDataset> {
    generate_tomography_dephased(p, n_shots, seed, 1.0)
}

/// Synthetic conditional tomography with x and y scaled by `coherence`,
/// e.g. `exp(-t_window / T2)`.
pub fn generate_tomography_dephased(p: &BackactionParams, n_shots: usize, seed: u64, coherence: f64) -> Result<TomographyDataset> {
    p.validate()?;
    if n_shots == 0 {
        return invalid("need at least one shot");
    }
    if !(0.0..=1.0).contains(&coherence) {
        return invalid(format!("coherence factor must lie in [0, 1], got {coherence}"));
    }
    let params = *p;
    let records = chunked(n_shots, seed, |rng, first, len| {
        let mut out = Vec::with_capacity(len);
        for k in first..first + len {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let z0: f64 = rng.sample(StandardNormal);
            let z1: f64 = rng.sample(StandardNormal);
            let i = sign * params.i_bar + params.sigma * z0;
            let q = params.q_bar + params.sigma * z1;
            let axis = TomoAxis::ALL[k % 3];
            let bloch = backaction_xyz(i, q, &params)?;
            let component = match axis {
                TomoAxis::Z => bloch.z,
                _ => coherence * bloch.component(axis),
            };
            let p_plus = 0.5 * (1.0 + component);
            if !(-1e-12..=1.0 + 1e-12).contains(&p_plus) {
                return Err(Error::Consistency(format!(
                    "outcome probability {p_plus} outside [0, 1] at ({i}, {q})"
                )));
            }
            let outcome = if rng.random::<f64>() < p_plus { 1 } else { -1 };
            out.push(Shot {
                i,
                q,
                tomo: Some((axis, outcome)),
            });
        }
        Ok(out)
    })?;
    Ok(TomographyDataset {
        records,
        seed,
        params,
        coherence,
    })
}

/// One bin of a conditional line cut.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutBin {
    /// Mean abscissa of the shots in the bin, in units of σ.
    pub coord: f64,
    pub mean: f64,
    /// Binomial standard error of `mean`.
    pub std_error: f64,
    pub count: usize,
    pub model: f64,
}

#[derive(Default, Clone, Copy)]
struct Acc {
    n: usize,
    coord: f64,
    value: f64,
    aux: f64,
}

fn bin_index(x: f64, lo: f64, hi: f64, bins: usize) -> Option<usize> {
    if !(x >= lo && x < hi) {
        return None;
    }
    Some((((x - lo) / (hi - lo)) * bins as f64) as usize).map(|b| b.min(bins - 1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrengthFit {
    /// Fitted `i_bar / sigma`.
    pub strength: f64,
    pub std_error: f64,
    /// σ estimated from the spread of `Q_m`.
    pub sigma: f64,
    /// Strength indistinguishable from zero.
    pub no_measurement: bool,
    pub cut: Vec<CutBin>,
}

const Z_BINS: usize = 100;
const Z_RANGE: f64 = 5.0;
const MIN_BIN_COUNT: usize = 10;

/// Weighted least-squares fit of the binned `<z>` versus `I_m / σ` to
/// `tanh(a · I_m / σ)`.
pub fn fit_strength_z(ds: &TomographyDataset) -> Result<StrengthFit> {
    let n_z = ds.on_axis(TomoAxis::Z).count();
    if n_z < 100 {
        return Err(Error::InsufficientData(format!("strength fit needs >= 100 z shots, got {n_z}")));
    }
    let sigma = ds.sigma_estimate()?;
    let mut acc = vec![Acc::default(); Z_BINS];
    for (i, _, out) in ds.on_axis(TomoAxis::Z) {
        let u = i / sigma;
        if let Some(b) = bin_index(u, -Z_RANGE, Z_RANGE, Z_BINS) {
            acc[b].n += 1;
            acc[b].coord += u;
            acc[b].value += out;
        }
    }
    let used: Vec<(f64, f64, usize)> = acc
        .iter()
        .filter(|a| a.n >= MIN_BIN_COUNT)
        .map(|a| (a.coord / a.n as f64, a.value / a.n as f64, a.n))
        .collect();
    if used.len() < 2 {
        return Err(Error::InsufficientData("too few populated z bins".into()));
    }
    let xs: Vec<f64> = used.iter().map(|b| b.0).collect();
    let ys: Vec<f64> = used.iter().map(|b| b.1).collect();
    let ws: Vec<f64> = used.iter().map(|b| b.2 as f64).collect();
    let model = |p: &[f64]| xs.iter().map(|x| (p[0] * x).tanh()).collect::<Vec<_>>();
    let rss_at = |a: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .zip(&ws)
            .map(|((x, y), w)| w * (y - (a * x).tanh()).powi(2))
            .sum()
    };
    let start = (0..=80)
        .map(|k| k as f64 * 0.05)
        .min_by(|a, b| rss_at(*a).total_cmp(&rss_at(*b)))
        .unwrap_or(0.0);
    let fit = gauss_newton(model, &ys, &ws, &[start], 100)?;
    let strength = fit.params[0];
    let dof = (ys.len() - 1).max(1) as f64;
    let scale = (fit.rss / dof).max(f64::MIN_POSITIVE);
    let std_error = fit
        .normal_inverse
        .as_ref()
        .map(|inv| (scale * inv[(0, 0)]).sqrt())
        .unwrap_or(f64::INFINITY);
    let no_measurement = strength.abs() < 3.0 * std_error || strength.abs() < 1e-3;
    let cut = used
        .iter()
        .map(|&(coord, mean, count)| CutBin {
            coord,
            mean,
            std_error: ((1.0 - mean * mean).max(0.0) / count as f64).sqrt(),
            count,
            model: (strength * coord).tanh(),
        })
        .collect();
    Ok(StrengthFit {
        strength,
        std_error,
        sigma,
        no_measurement,
        cut,
    })
}

/// One Q bin of the x/y cut along `I_m ≈ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XyCutBin {
    pub axis: TomoAxis,
    /// Mean `Q_m / σ` of the shots in the bin.
    pub coord: f64,
    pub mean: f64,
    pub std_error: f64,
    pub count: usize,
    /// Mean `sech(I_m · strength / σ)` over the bin.
    pub sech: f64,
    pub model: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyFit {
    pub strength_fit: f64,
    pub eta_fit: f64,
    /// Fitted Q center, in units of σ.
    pub q_bar_fit: f64,
    /// Weighted residual sum of squares per degree of freedom.
    pub residual: f64,
    pub eta_half_width: f64,
    pub q_bar_half_width: f64,
    /// The unconstrained optimum had η > 1.
    pub clipped: bool,
    pub band_shots: usize,
    pub cut: Vec<XyCutBin>,
}

/// Half-width of the `I_m ≈ 0` band, in units of σ.
pub const BAND_HALF_WIDTH: f64 = 0.25;
const XY_BINS: usize = 40;
const XY_RANGE: f64 = 4.0;

fn xy_model(axis: TomoAxis, coord: f64, sech: f64, strength: f64, eta: f64, q_bar: f64) -> f64 {
    if !(eta > 0.0) {
        return f64::NAN;
    }
    let lost = (1.0 - eta) / eta;
    let phase = strength * (coord + q_bar * lost);
    let env = sech * (-strength * strength * lost).exp();
    match axis {
        TomoAxis::X => env * phase.sin(),
        _ => env * phase.cos(),
    }
}

/// Joint fit of the binned `<x>` and `<y>` along the `I_m ≈ 0` band with free
/// η and Q center and fixed strength.
pub fn fit_efficiency(ds: &TomographyDataset, strength: f64) -> Result<EfficiencyFit> {
    if !(strength > 0.0) || !strength.is_finite() {
        return invalid(format!("strength must be positive, got {strength}"));
    }
    let sigma = ds.sigma_estimate()?;
    let q0 = ds.q_mean() / sigma;
    let mut acc = vec![[Acc::default(); XY_BINS]; 2];
    let mut band_shots = 0;
    for (a, axis) in [TomoAxis::X, TomoAxis::Y].into_iter().enumerate() {
        for (i, q, out) in ds.on_axis(axis) {
            let u = i / sigma;
            if u.abs() >= BAND_HALF_WIDTH {
                continue;
            }
            let v = q / sigma;
            if let Some(b) = bin_index(v - q0, -XY_RANGE, XY_RANGE, XY_BINS) {
                let cell = &mut acc[a][b];
                cell.n += 1;
                cell.coord += v;
                cell.value += out;
                cell.aux += (u * strength).cosh().recip();
                band_shots += 1;
            }
        }
    }
    let mut bins = Vec::new();
    for (a, axis) in [TomoAxis::X, TomoAxis::Y].into_iter().enumerate() {
        for cell in acc[a].iter().filter(|c| c.n >= MIN_BIN_COUNT) {
            let nf = cell.n as f64;
            let mean = cell.value / nf;
            bins.push(XyCutBin {
                axis,
                coord: cell.coord / nf,
                mean,
                std_error: ((1.0 - mean * mean).max(0.0) / nf).sqrt(),
                count: cell.n,
                sech: cell.aux / nf,
                model: 0.0,
            });
        }
    }
    let has = |axis| bins.iter().any(|b| b.axis == axis);
    if !has(TomoAxis::X) || !has(TomoAxis::Y) || bins.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "efficiency fit needs populated x and y bins near I_m = 0, got {} bins",
            bins.len()
        )));
    }
    let ys: Vec<f64> = bins.iter().map(|b| b.mean).collect();
    let ws: Vec<f64> = bins.iter().map(|b| b.count as f64).collect();
    let predict = |eta: f64, q_bar: f64| -> Vec<f64> {
        bins.iter()
            .map(|b| xy_model(b.axis, b.coord, b.sech, strength, eta, q_bar))
            .collect()
    };
    let rss = |p: &[f64]| -> f64 {
        predict(p[0], p[1])
            .iter()
            .zip(&ys)
            .zip(&ws)
            .map(|((f, y), w)| w * (y - f).powi(2))
            .sum()
    };
    let eta_start = (1..=40)
        .map(|k| k as f64 * 0.025)
        .min_by(|a, b| rss(&[*a, 0.0]).total_cmp(&rss(&[*b, 0.0])))
        .unwrap_or(1.0);
    let fit = gauss_newton(|p: &[f64]| predict(p[0], p[1]), &ys, &ws, &[eta_start, 0.0], 200)?;
    let (mut eta, mut q_bar) = (fit.params[0], fit.params[1]);
    let mut clipped = false;
    let mut final_rss = fit.rss;
    if eta > 1.0 {
        clipped = true;
        eta = 1.0;
        // The Q center drops out of the model at η = 1.
        q_bar = 0.0;
        final_rss = rss(&[eta, q_bar]);
    }
    if !(eta > 0.0) || !final_rss.is_finite() {
        return Err(Error::Consistency(format!("efficiency fit diverged (eta = {eta})")));
    }
    let dof = (ys.len() - 2).max(1) as f64;
    let scale = final_rss / dof;
    let half = |k: usize| {
        fit.normal_inverse
            .as_ref()
            .map(|inv| 1.96 * (scale * inv[(k, k)]).abs().sqrt())
            .filter(|h| h.is_finite())
            .unwrap_or(f64::INFINITY)
    };
    let model = predict(eta, q_bar);
    for (b, m) in bins.iter_mut().zip(model) {
        b.model = m;
    }
    Ok(EfficiencyFit {
        strength_fit: strength,
        eta_fit: eta,
        q_bar_fit: q_bar,
        residual: scale,
        eta_half_width: half(0),
        q_bar_half_width: half(1),
        clipped,
        band_shots,
        cut: bins,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct T2Correction {
    pub eta_raw: f64,
    pub eta_corrected: f64,
    /// Dephasing accounts for all of the decay; efficiency set to 1.
    pub saturated: bool,
}

/// Removes an `exp(-t_window / t2)` dephasing factor from the fitted envelope
/// and re-solves for η.
pub fn t2_corrected_eta(eta_fit: f64, strength: f64, t_window: f64, t2: f64) -> Result<T2Correction> {
    if !(eta_fit > 0.0 && eta_fit <= 1.0) {
        return invalid(format!("eta_fit must lie in (0, 1], got {eta_fit}"));
    }
    if !(strength > 0.0) || !strength.is_finite() {
        return invalid(format!("strength must be positive, got {strength}"));
    }
    if !(t_window >= 0.0) || !t_window.is_finite() {
        return invalid(format!("t_window must be non-negative, got {t_window}"));
    }
    if !(t2 > 0.0) {
        return invalid(format!("T2 must be positive, got {t2}"));
    }
    let lost = (1.0 / eta_fit - 1.0) - t_window / (t2 * strength * strength);
    if lost < 0.0 {
        return Ok(T2Correction {
            eta_raw: eta_fit,
            eta_corrected: 1.0,
            saturated: true,
        });
    }
    Ok(T2Correction {
        eta_raw: eta_fit,
        eta_corrected: 1.0 / (1.0 + lost),
        saturated: false,
    })
}

/// Efficiency budget implied by the output-chain noise-visibility ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NvrAnalysis {
    pub nvr_cs_db: f64,
    pub eta_overall_cs: f64,
    pub eta_out_cs: f64,
    pub eta_amp: f64,
    pub sigma_ratio_high: f64,
    pub sigma_ratio_low: f64,
    /// Linear noise-visibility ratios at the two matched points.
    pub nvr_high: f64,
    pub nvr_low: f64,
    pub eta_out_high: f64,
    pub eta_out_low: f64,
    pub eta_high: f64,
    pub eta_low: f64,
}

impl NvrAnalysis {
    pub fn nvr_high_db(&self) -> f64 {
        linear_to_db(self.nvr_high)
    }

    pub fn nvr_low_db(&self) -> f64 {
        linear_to_db(self.nvr_low)
    }

    /// Whether the predicted efficiencies reproduce measured ones within `tol`.
    pub fn assess(&self, measured_high: f64, measured_low: f64, tol: f64) -> NvrAssessment {
        NvrAssessment {
            measured_high,
            measured_low,
            required_eta_amp_high: measured_high / self.eta_out_high,
            required_eta_amp_low: measured_low / self.eta_out_low,
            explained: (self.eta_high - measured_high).abs() <= tol && (self.eta_low - measured_low).abs() <= tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NvrAssessment {
    pub measured_high: f64,
    pub measured_low: f64,
    /// Amplifier efficiency each measured value would need with its own NVR.
    pub required_eta_amp_high: f64,
    pub required_eta_amp_low: f64,
    pub explained: bool,
}

fn unit_interval(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        invalid(format!("{name} = {v} lies outside (0, 1)"))
    }
}

pub fn nvr_analysis(nvr_cs_db: f64, eta_overall_cs: f64, sigma_ratio_high: f64, sigma_ratio_low: f64) -> Result<NvrAnalysis> {
    for (name, v) in [
        ("nvr_cs_db", nvr_cs_db),
        ("eta_overall_cs", eta_overall_cs),
        ("sigma_ratio_high", sigma_ratio_high),
        ("sigma_ratio_low", sigma_ratio_low),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return invalid(format!("{name} must be positive and finite, got {v}"));
        }
    }
    let eta_out_cs = unit_interval("eta_out", nvr_to_eta_out(nvr_cs_db)?)?;
    let eta_amp = unit_interval("eta_amp", eta_overall_cs / eta_out_cs)?;
    let nvr_cs = db_to_linear(nvr_cs_db);
    let nvr_high = 1.0 + (nvr_cs - 1.0) * sigma_ratio_high.powi(2);
    let nvr_low = 1.0 + (nvr_cs - 1.0) * sigma_ratio_low.powi(2);
    let eta_out_high = unit_interval("eta_out_high", 1.0 - 1.0 / nvr_high)?;
    let eta_out_low = unit_interval("eta_out_low", 1.0 - 1.0 / nvr_low)?;
    Ok(NvrAnalysis {
        nvr_cs_db,
        eta_overall_cs,
        eta_out_cs,
        eta_amp,
        sigma_ratio_high,
        sigma_ratio_low,
        nvr_high,
        nvr_low,
        eta_out_high,
        eta_out_low,
        eta_high: unit_interval("eta_high", eta_amp * eta_out_high)?,
        eta_low: unit_interval("eta_low", eta_amp * eta_out_low)?,
    })
}

/// Overall efficiency `eta_amp · (1 − 1/NVR)` over a grid of NVR values in dB.
pub fn efficiency_curve(eta_amp: f64, nvr_db: &[f64]) -> Result<Vec<(f64, f64)>> {
    if !(eta_amp > 0.0 && eta_amp <= 1.0) {
        return invalid(format!("eta_amp must lie in (0, 1], got {eta_amp}"));
    }
    nvr_db
        .iter()
        .map(|&db| Ok((db, eta_amp * nvr_to_eta_out(db)?)))
        .collect()
}
