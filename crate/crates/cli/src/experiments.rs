//! One runner per figure-style experiment, plus the shared run/rerun driver.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};
use tmsi_core::backaction::{
    efficiency_curve, fit_efficiency, fit_strength_z, generate_tomography_dephased, nvr_analysis, t2_corrected_eta,
    BackactionParams,
};
use tmsi_core::device::QubitState;
use tmsi_core::interferometer::{
    baseline_sigma, find_matched_points, phase_sweep, propagate, s_aa, uniform_phase_grid, InterferometerConfig,
    OutputMoments, Reference,
};
use tmsi_core::readout::{
    bullseye_map, error_rate, fit_moments, posterior_z, sample_shots, sample_superposition, snr, snr_for_error_rate,
    BinGrid, ConditionalMap, TomoAxis,
};

use crate::calibrate::{calibrate, snr_at, CalibrationReport};
use crate::config::{DeviceConfig, Experiment, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::{RunManifest, MANIFEST_FILE};
use crate::output::{summary_bytes, write_file, Artifacts, Cell, Table};

pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub summary: Value,
    pub manifest: RunManifest,
}

/// Runs the configured experiment on a pool of `config.workers` threads and
/// writes tables, `summary.json` and the manifest into `config.output`.
pub fn run(config: &ExperimentConfig) -> CliResult<RunOutcome> {
    config.validate()?;
    let started = chrono::Utc::now();
    let clock = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {} workers: {e}", config.workers)))?;
    let (artifacts, failure) = pool.install(|| execute(config))?;

    let dir = config.output.clone();
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut outputs = Vec::new();
    for table in &artifacts.tables {
        let name = format!("{}.{}", table.name, config.format.extension());
        outputs.push(write_file(&dir, &name, &table.to_bytes(config.format)?)?);
    }
    outputs.push(write_file(&dir, SUMMARY_FILE, &summary_bytes(&artifacts.summary)?)?);
    if let Some(msg) = failure {
        return Err(CliError::Calibration(msg));
    }
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        experiment: config.experiment,
        seed: config.seed,
        workers: config.workers,
        config_toml: config.to_toml()?,
        started_at: started.to_rfc3339(),
        wall_clock_s: clock.elapsed().as_secs_f64(),
        outputs,
    };
    manifest.write(&dir)?;
    Ok(RunOutcome {
        dir,
        summary: artifacts.summary,
        manifest,
    })
}

/// Repeats the run recorded in `manifest_path` into `out` and checks that
/// every output file is byte-identical.
pub fn rerun(manifest_path: &Path, out: &Path, workers: Option<usize>) -> CliResult<RunOutcome> {
    let recorded = RunManifest::load(manifest_path)?;
    let mut config = recorded.config()?;
    config.output = out.to_path_buf();
    if let Some(w) = workers {
        config.workers = w;
    }
    if out.join(MANIFEST_FILE) == manifest_path {
        return Err(CliError::Config("rerun output directory must differ from the original".into()));
    }
    let outcome = run(&config)?;
    let differing = recorded.differing_outputs(&outcome.manifest.outputs);
    if !differing.is_empty() {
        return Err(CliError::Mismatch(format!("outputs differ: {}", differing.join(", "))));
    }
    Ok(outcome)
}

type Execution = (Artifacts, Option<String>);

fn execute(config: &ExperimentConfig) -> CliResult<Execution> {
    let ok = |a: Artifacts| Ok((a, None));
    match config.experiment {
        Experiment::NoiseSweep => ok(noise_sweep(config)?),
        Experiment::QubitNoiseSweep => ok(qubit_noise_sweep(config)?),
        Experiment::Bullseye => ok(bullseye(config)?),
        Experiment::SnrSweep => snr_sweep(config),
        Experiment::SparamSweep => ok(sparam_sweep(config)?),
        Experiment::Backaction => ok(backaction(config)?),
        Experiment::Nvr => ok(nvr(config)?),
        Experiment::Calibrate => calibration(config),
    }
}

fn deg(rad: f64) -> f64 {
    rad.to_degrees()
}

fn header(config: &ExperimentConfig) -> Value {
    json!({
        "experiment": config.experiment.name(),
        "seed": config.seed,
        "shots": config.shots,
    })
}

fn grid(config: &ExperimentConfig) -> Vec<f64> {
    uniform_phase_grid(config.grid.points)
}

fn noise_sweep(config: &ExperimentConfig) -> CliResult<Artifacts> {
    let device = config.device.interferometer()?;
    let phases = grid(config);
    let mut table = Table::new("noise_sweep", &["entangler_gain_db", "delta_phi_deg", "sigma", "normalized_sigma"]);
    let mut per_gain = Vec::new();
    for &gain in &config.noise_sweep.entangler_gains_db {
        let rows = phase_sweep(&device.with_entangler_gain_db(gain), &phases)?;
        for r in &rows {
            table.push(vec![gain.into(), deg(r.delta_phi).into(), r.sigma_g.into(), r.normalized_g.into()]);
        }
        let min = rows.iter().min_by(|a, b| a.normalized_g.total_cmp(&b.normalized_g)).expect("non-empty grid");
        let max = rows.iter().map(|r| r.normalized_g).fold(f64::NEG_INFINITY, f64::max);
        per_gain.push(json!({
            "entangler_gain_db": gain,
            "min_normalized_sigma": min.normalized_g,
            "delta_phi_at_min_deg": deg(min.delta_phi),
            "max_normalized_sigma": max,
        }));
    }
    let mut summary = header(config);
    summary["curves"] = Value::Array(per_gain);
    Ok(Artifacts {
        tables: vec![table],
        summary,
    })
}

fn qubit_noise_sweep(config: &ExperimentConfig) -> CliResult<Artifacts> {
    let device = config.device.interferometer()?;
    let rows = phase_sweep(&device, &grid(config))?;
    let mut table = Table::new(
        "qubit_noise_sweep",
        &["delta_phi_deg", "sigma_g", "sigma_e", "normalized_g", "normalized_e"],
    );
    for r in &rows {
        table.push(vec![
            deg(r.delta_phi).into(),
            r.sigma_g.into(),
            r.sigma_e.into(),
            r.normalized_g.into(),
            r.normalized_e.into(),
        ]);
    }
    let base = baseline_sigma(&device)?;
    let m = find_matched_points(&device)?;
    let mut summary = header(config);
    summary["delta_theta_deg"] = json!(deg(device.cavity.delta_theta()));
    summary["baseline_sigma"] = json!(base);
    summary["matched_points"] = json!({
        "delta_phi_high_deg": deg(m.delta_phi_high),
        "delta_phi_low_deg": deg(m.delta_phi_low),
        "separation_deg": deg(m.separation()),
        "sigma_ratio_high": m.sigma_high / base,
        "sigma_ratio_low": m.sigma_low / base,
    });
    Ok(Artifacts {
        tables: vec![table],
        summary,
    })
}

fn map_table(name: &str, map: &ConditionalMap) -> Table {
    let mut t = Table::new(
        name,
        &["i_bin", "q_bin", "i_scaled", "q_scaled", "z_posterior", "z_empirical", "count"],
    );
    let nb = map.grid.bins;
    for qb in 0..nb {
        for ib in 0..nb {
            let k = qb * nb + ib;
            t.push(vec![
                ib.into(),
                qb.into(),
                map.grid.center(ib).into(),
                map.grid.center(qb).into(),
                map.values[k].into(),
                map.empirical[k].into(),
                Cell::Int(map.counts[k] as i64),
            ]);
        }
    }
    t
}

/// Posterior ⟨z⟩ along rays from the origin out to `radius`.
fn radial_profile(g: &OutputMoments, e: &OutputMoments, radius: f64, steps: usize) -> CliResult<Vec<Vec<f64>>> {
    (0..8)
        .map(|k| {
            let angle = k as f64 * std::f64::consts::FRAC_PI_4;
            (0..=steps)
                .map(|s| {
                    let r = radius * s as f64 / steps as f64;
                    Ok(posterior_z(g, e, r * angle.cos(), r * angle.sin())?)
                })
                .collect()
        })
        .collect()
}

fn bullseye(config: &ExperimentConfig) -> CliResult<Artifacts> {
    let device = config.device.interferometer()?;
    let base = baseline_sigma(&device)?;
    let rows = phase_sweep(&device, &grid(config))?;
    let widest = rows
        .iter()
        .max_by(|a, b| (a.sigma_e - a.sigma_g).total_cmp(&(b.sigma_e - b.sigma_g)))
        .expect("non-empty grid");
    let m = find_matched_points(&device)?;
    let panels = [
        ("max_difference", widest.delta_phi),
        ("high", m.delta_phi_high),
        ("low", m.delta_phi_low),
    ];
    let bins = BinGrid {
        bins: config.bullseye.bins,
        half_width: config.bullseye.half_width,
        sigma_scale: base,
    };
    let mut tables = Vec::new();
    let mut reports = Vec::new();
    for (k, (label, phi)) in panels.into_iter().enumerate() {
        let cfg = device.with_delta_phi(phi);
        let g = propagate(&cfg, QubitState::G, 0.0, 0.0, Reference::Record)?;
        let e = propagate(&cfg, QubitState::E, 0.0, 0.0, Reference::Record)?;
        let shots = sample_superposition(&g, &e, config.shots, config.seed.wrapping_add(k as u64))?;
        let map = bullseye_map(&g, &e, &shots, bins)?;
        let max_abs = map.values.iter().flatten().fold(0.0_f64, |a, v| a.max(v.abs()));
        let profile = radial_profile(&g, &e, bins.half_width * base, 100)?;
        let monotone = profile.iter().all(|ray| ray.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        let edge = profile.iter().map(|ray| *ray.last().unwrap_or(&0.0)).fold(f64::NEG_INFINITY, f64::max);
        let far = posterior_z(&g, &e, 50.0 * base, 0.0)?;
        tables.push(map_table(&format!("bullseye_{label}"), &map));
        reports.push(json!({
            "panel": label,
            "delta_phi_deg": deg(phi),
            "sigma_g": g.sigma(),
            "sigma_e": e.sigma(),
            "max_abs_z_posterior": max_abs,
            "radially_nonincreasing": monotone,
            "z_posterior_at_edge": edge,
            "z_posterior_far": far,
            "binned_shots": map.counts.iter().sum::<u64>(),
            "overflow_shots": map.overflow,
        }));
    }
    let mut summary = header(config);
    summary["baseline_sigma"] = json!(base);
    summary["panels"] = Value::Array(reports);
    Ok(Artifacts { tables, summary })
}

fn calibration_json(report: &CalibrationReport, drive: &DeviceConfig) -> Value {
    json!({
        "success": report.success,
        "objective": report.objective,
        "evaluations": report.evaluations,
        "converged": report.converged,
        "eta_upper": report.config.eta_upper,
        "eta_lower": report.config.eta_lower,
        "analyzer_efficiency": report.config.analyzer_efficiency,
        "entangler_gain_db": report.config.entangler.gain_db,
        "misses": report.misses,
        "metrics": report.metrics.map(|m| json!({
            "delta_phi_high_deg": deg(m.matched.delta_phi_high),
            "delta_phi_low_deg": deg(m.matched.delta_phi_low),
            "separation_deg": deg(m.matched.separation()),
            "sigma_ratio_high": m.sigma_ratio_high,
            "sigma_ratio_low": m.sigma_ratio_low,
            "snr_gain": m.snr_gain,
        })),
        "device": drive.with_interferometer(&report.config),
    })
}

fn snr_sweep(config: &ExperimentConfig) -> CliResult<Execution> {
    let mut device = config.device.interferometer()?;
    let mut summary = header(config);
    if config.snr_sweep.calibrate {
        let report = calibrate(&device, &config.calibration)?;
        summary["calibration"] = calibration_json(&report, &config.device);
        if !report.success {
            let msg = report.describe_misses();
            return Ok((Artifacts { tables: vec![], summary }, Some(msg)));
        }
        device = report.config;
    }
    let (amp, phase) = (config.device.drive_amplitude, config.device.drive_phase_deg.to_radians());
    let baseline = device.cs_baseline();
    let base_snr = snr_at(&baseline, 0.0, amp, phase)?;

    let phases = grid(config);
    let mut table = Table::new(
        "snr_sweep",
        &["delta_phi_deg", "snr", "normalized_snr", "signal_magnitude", "sigma_g", "sigma_e"],
    );
    let mut normalized = Vec::with_capacity(phases.len());
    let mut magnitudes = Vec::with_capacity(phases.len());
    for &phi in &phases {
        let cfg = device.with_delta_phi(phi);
        let g = propagate(&cfg, QubitState::G, amp, phase, Reference::Record)?;
        let e = propagate(&cfg, QubitState::E, amp, phase, Reference::Record)?;
        let s = snr(&tmsi_core::readout::MomentFit::exact(&g), &tmsi_core::readout::MomentFit::exact(&e), Some(base_snr))?;
        let n = s.normalized.unwrap_or(f64::NAN);
        normalized.push(n);
        magnitudes.push(g.mean.norm());
        table.push(vec![
            deg(phi).into(),
            s.snr.into(),
            n.into(),
            g.mean.norm().into(),
            g.sigma().into(),
            e.sigma().into(),
        ]);
    }
    let (k_max, max_norm) = normalized
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty grid");
    let mag_max = magnitudes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mag_min = magnitudes.iter().copied().fold(f64::INFINITY, f64::min);

    let m = find_matched_points(&device)?;
    let gain_low = snr_at(&device, m.delta_phi_low, amp, phase)? / base_snr;
    let gain_high = snr_at(&device, m.delta_phi_high, amp, phase)? / base_snr;

    let mc_snr = |cfg: &InterferometerConfig, seed: u64| -> CliResult<f64> {
        let g = propagate(cfg, QubitState::G, amp, phase, Reference::Record)?;
        let e = propagate(cfg, QubitState::E, amp, phase, Reference::Record)?;
        let fg = fit_moments(&sample_shots(&g, config.shots, seed, QubitState::G)?)?;
        let fe = fit_moments(&sample_shots(&e, config.shots, seed.wrapping_add(1), QubitState::E)?)?;
        Ok(snr(&fg, &fe, None)?.snr)
    };
    let mc_base = mc_snr(&baseline, config.seed)?;
    let mc_low = mc_snr(&device.with_delta_phi(m.delta_phi_low), config.seed.wrapping_add(2))?;
    let mc_high = mc_snr(&device.with_delta_phi(m.delta_phi_high), config.seed.wrapping_add(4))?;

    let eps0 = config.snr_sweep.baseline_error_rate;
    let snr0 = snr_for_error_rate(eps0)?;
    let eps1 = error_rate(snr0 * gain_low);

    summary["baseline_snr"] = json!(base_snr);
    summary["max_normalized_snr"] = json!(max_norm);
    summary["delta_phi_at_max_deg"] = json!(deg(phases[k_max]));
    summary["matched_points"] = json!({
        "delta_phi_high_deg": deg(m.delta_phi_high),
        "delta_phi_low_deg": deg(m.delta_phi_low),
        "separation_deg": deg(m.separation()),
        "normalized_snr_high": gain_high,
        "normalized_snr_low": gain_low,
    });
    summary["monte_carlo"] = json!({
        "baseline_snr": mc_base,
        "normalized_snr_low": mc_low / mc_base,
        "normalized_snr_high": mc_high / mc_base,
    });
    summary["signal_magnitude_variation"] = json!((mag_max - mag_min) / mag_max);
    summary["error_rate"] = json!({
        "baseline": eps0,
        "baseline_snr": snr0,
        "improved": eps1,
        "suppression_factor": eps0 / eps1,
    });
    Ok((
        Artifacts {
            tables: vec![table],
            summary,
        },
        None,
    ))
}

fn sparam_sweep(config: &ExperimentConfig) -> CliResult<Artifacts> {
    let mut device = config.device.interferometer()?;
    device.analyzer.gain_db = config.sparam_sweep.analyzer_gain_db;
    let phases = grid(config);
    let mut table = Table::new(
        "sparam_sweep",
        &["entangler_gain_db", "delta_phi_deg", "s_aa_re", "s_aa_im", "gain_db"],
    );
    let mut curves = Vec::new();
    for &gain in &config.sparam_sweep.entangler_gains_db {
        let cfg = device.with_entangler_gain_db(gain);
        let mut lo = (f64::INFINITY, 0.0);
        let mut hi = (f64::NEG_INFINITY, 0.0);
        for &phi in &phases {
            let s = s_aa(&cfg.with_delta_phi(phi), QubitState::G)?;
            let db = 10.0 * s.norm_sqr().log10();
            if db < lo.0 {
                lo = (db, phi);
            }
            if db > hi.0 {
                hi = (db, phi);
            }
            table.push(vec![gain.into(), deg(phi).into(), s.re.into(), s.im.into(), db.into()]);
        }
        curves.push(json!({
            "entangler_gain_db": gain,
            "min_gain_db": lo.0,
            "delta_phi_at_min_deg": deg(lo.1),
            "max_gain_db": hi.0,
            "delta_phi_at_max_deg": deg(hi.1),
        }));
    }
    let mut summary = header(config);
    summary["analyzer_gain_db"] = json!(config.sparam_sweep.analyzer_gain_db);
    summary["curves"] = Value::Array(curves);
    Ok(Artifacts {
        tables: vec![table],
        summary,
    })
}

fn backaction(config: &ExperimentConfig) -> CliResult<Artifacts> {
    let b = &config.backaction;
    let n = &config.nvr;
    let budget = nvr_analysis(n.nvr_cs_db, n.eta_overall_cs, n.sigma_ratio_high, n.sigma_ratio_low)?;
    let (t_window, t2) = (b.t_window_ns * 1e-9, b.t2_us * 1e-6);
    let coherence = if b.dephasing { (-t_window / t2).exp() } else { 1.0 };
    let sets = [
        ("cs", b.eta_cs, n.eta_overall_cs),
        ("tms_high", budget.eta_high, n.measured_eta_high),
        ("tms_low", budget.eta_low, n.measured_eta_low),
    ];
    let mut tables = Vec::new();
    let mut reports = Vec::new();
    for (k, (label, eta, measured)) in sets.into_iter().enumerate() {
        let params = BackactionParams::from_strength(b.strength, eta);
        let ds = generate_tomography_dephased(&params, config.shots, config.seed.wrapping_add(k as u64), coherence)?;
        let sf = fit_strength_z(&ds)?;
        let ef = fit_efficiency(&ds, sf.strength)?;
        let cor = t2_corrected_eta(ef.eta_fit, sf.strength, t_window, t2)?;

        let mut z = Table::new(format!("backaction_{label}_z"), &["i_scaled", "z_mean", "std_error", "count", "z_model"]);
        for c in &sf.cut {
            z.push(vec![c.coord.into(), c.mean.into(), c.std_error.into(), c.count.into(), c.model.into()]);
        }
        let mut xy = Table::new(
            format!("backaction_{label}_xy"),
            &["axis", "q_scaled", "mean", "std_error", "count", "sech_weight", "model"],
        );
        for c in &ef.cut {
            xy.push(vec![
                c.axis.label().into(),
                c.coord.into(),
                c.mean.into(),
                c.std_error.into(),
                c.count.into(),
                c.sech.into(),
                c.model.into(),
            ]);
        }
        tables.push(z);
        tables.push(xy);
        if b.write_records {
            let mut rec = Table::new(format!("backaction_{label}_records"), &["I_m", "Q_m", "tomo_axis", "tomo_outcome"]);
            for s in &ds.records {
                let (axis, out) = s.tomo.unwrap_or((TomoAxis::Z, 0));
                rec.push(vec![s.i.into(), s.q.into(), axis.label().into(), Cell::Int(out.into())]);
            }
            tables.push(rec);
        }
        reports.push(json!({
            "dataset": label,
            "fit_model": "coherent-light",
            "eta_generated": eta,
            "coherence_factor": coherence,
            "strength_fit": sf.strength,
            "strength_std_error": sf.std_error,
            "sigma_estimate": sf.sigma,
            "no_measurement": sf.no_measurement,
            "eta_fit": ef.eta_fit,
            "eta_half_width": ef.eta_half_width,
            "q_bar_fit": ef.q_bar_fit,
            "q_bar_half_width": ef.q_bar_half_width,
            "residual": ef.residual,
            "clipped": ef.clipped,
            "band_shots": ef.band_shots,
            "eta_t2_corrected": cor.eta_corrected,
            "t2_correction_saturated": cor.saturated,
            "reference_eta": measured,
        }));
    }
    let mut summary = header(config);
    summary["strength"] = json!(b.strength);
    summary["t_window_ns"] = json!(b.t_window_ns);
    summary["t2_us"] = json!(b.t2_us);
    summary["datasets"] = Value::Array(reports);
    Ok(Artifacts { tables, summary })
}

fn nvr(config: &ExperimentConfig) -> CliResult<Artifacts> {
    let n = &config.nvr;
    let a = nvr_analysis(n.nvr_cs_db, n.eta_overall_cs, n.sigma_ratio_high, n.sigma_ratio_low)?;
    let steps = n.nvr_db_points - 1;
    let nvr_grid: Vec<f64> = (0..=steps)
        .map(|k| n.nvr_db_min + (n.nvr_db_max - n.nvr_db_min) * k as f64 / steps as f64)
        .collect();
    let mut table = Table::new("nvr_curves", &["eta_amp", "nvr_db", "eta_overall"]);
    let mut amps = n.eta_amp_curves.clone();
    amps.push(a.eta_amp);
    for amp in amps {
        for (db, eta) in efficiency_curve(amp, &nvr_grid)? {
            table.push(vec![amp.into(), db.into(), eta.into()]);
        }
    }
    let verdict = a.assess(n.measured_eta_high, n.measured_eta_low, n.tolerance);
    let conclusion = if verdict.explained {
        "the measured TMS efficiencies are consistent with the NVR change alone".to_string()
    } else {
        format!(
            "the measured TMS efficiencies {:.2}/{:.2} cannot be explained by NVR changes alone (predicted {:.2}/{:.2})",
            n.measured_eta_high, n.measured_eta_low, a.eta_high, a.eta_low
        )
    };
    let mut summary = header(config);
    summary["analysis"] = json!(a);
    summary["nvr_high_db"] = json!(a.nvr_high_db());
    summary["nvr_low_db"] = json!(a.nvr_low_db());
    summary["assessment"] = json!(verdict);
    summary["conclusion"] = json!(conclusion);
    Ok(Artifacts {
        tables: vec![table],
        summary,
    })
}

fn calibration(config: &ExperimentConfig) -> CliResult<Execution> {
    let device = config.device.interferometer()?;
    let report = calibrate(&device, &config.calibration)?;
    let mut table = Table::new("calibration_targets", &["target", "value", "achieved", "relative_miss"]);
    for m in &report.misses {
        table.push(vec![m.name.into(), m.target.into(), Cell::from(Some(m.achieved).filter(|v| v.is_finite())), Cell::from(Some(m.relative_miss).filter(|v| v.is_finite()))]);
    }
    let mut summary = header(config);
    summary["calibration"] = calibration_json(&report, &config.device);
    let failure = (!report.success).then(|| report.describe_misses());
    Ok((
        Artifacts {
            tables: vec![table],
            summary,
        },
        failure,
    ))
}
