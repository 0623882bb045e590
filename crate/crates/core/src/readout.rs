//! Monte Carlo heterodyne records, moment estimation, SNR and conditional maps.
//!
//! Sampling is split into fixed-size chunks, each driven by its own ChaCha
//! stream derived from `(seed, chunk index)`. Output is therefore identical
//! for any rayon pool size.

use std::io::Write;

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::QubitState;
use crate::error::{invalid, Error, Result};
use crate::interferometer::OutputMoments;

/// Shots per independently seeded chunk.
pub const CHUNK_SIZE: usize = 4096;

pub(crate) fn chunk_rng(seed: u64, chunk: usize) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

/// Runs `f(chunk_rng, first_index, chunk_len)` for each chunk of `n` items in parallel and
/// concatenates the results in chunk order.
pub(crate) fn chunked<T, F>(n: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut ChaCha12Rng, usize, usize) -> Result<Vec<T>> + Sync,
{
    let n_chunks = n.div_ceil(CHUNK_SIZE);
    let parts = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let len = CHUNK_SIZE.min(n - c * CHUNK_SIZE);
            f(&mut chunk_rng(seed, c), c * CHUNK_SIZE, len)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.into_iter().flatten().collect())
}

/// Tomography axis of a final projective measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TomoAxis {
    X,
    Y,
    Z,
}

impl TomoAxis {
    pub const ALL: [TomoAxis; 3] = [TomoAxis::X, TomoAxis::Y, TomoAxis::Z];

    pub fn label(self) -> &'static str {
        match self {
            TomoAxis::X => "x",
            TomoAxis::Y => "y",
            TomoAxis::Z => "z",
        }
    }
}

/// One heterodyne outcome `(I_m, Q_m)`, optionally with a tomography result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shot {
    pub i: f64,
    pub q: f64,
    pub tomo: Option<(TomoAxis, i8)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShotLabel {
    Qubit(QubitState),
    /// Equal superposition of g and e; each shot carries its z outcome.
    Superposition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotSet {
    pub shots: Vec<Shot>,
    pub seed: u64,
    pub label: ShotLabel,
}

impl ShotSet {
    pub fn len(&self) -> usize {
        self.shots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shots.is_empty()
    }

    /// Writes `I_m,Q_m[,tomo_axis,tomo_outcome]` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_shots_csv(&self.shots, writer)
    }
}

pub(crate) fn write_shots_csv<W: Write>(shots: &[Shot], writer: W) -> Result<()> {
    let with_tomo = shots.iter().any(|s| s.tomo.is_some());
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Consistency(format!("csv write failed: {e}"));
    if with_tomo {
        w.write_record(["I_m", "Q_m", "tomo_axis", "tomo_outcome"]).map_err(io)?;
    } else {
        w.write_record(["I_m", "Q_m"]).map_err(io)?;
    }
    for s in shots {
        let (i, q) = (s.i.to_string(), s.q.to_string());
        match (with_tomo, s.tomo) {
            (false, _) => w.write_record([i, q]).map_err(io)?,
            (true, Some((axis, out))) => w
                .write_record([i, q, axis.label().to_string(), out.to_string()])
                .map_err(io)?,
            (true, None) => w.write_record([i, q, String::new(), String::new()]).map_err(io)?,
        }
    }
    w.flush().map_err(|e| Error::Consistency(format!("csv flush failed: {e}")))
}

/// Lower-triangular Cholesky factor of a 2×2 covariance.
fn cholesky2(cov: &Matrix2<f64>) -> Result<(f64, f64, f64)> {
    let (a, b, d) = (cov[(0, 0)], 0.5 * (cov[(0, 1)] + cov[(1, 0)]), cov[(1, 1)]);
    if !(a > 0.0) {
        return invalid(format!("covariance is not positive definite: {cov}"));
    }
    let l11 = a.sqrt();
    let l21 = b / l11;
    let rest = d - l21 * l21;
    if !(rest > 0.0) || !rest.is_finite() {
        return invalid(format!("covariance is singular or not positive definite: {cov}"));
    }
    Ok((l11, l21, rest.sqrt()))
}

fn draw(rng: &mut ChaCha12Rng, mean: &Vector2<f64>, l: (f64, f64, f64)) -> (f64, f64) {
    let z0: f64 = rng.sample(StandardNormal);
    let z1: f64 = rng.sample(StandardNormal);
    (mean[0] + l.0 * z0, mean[1] + l.1 * z0 + l.2 * z1)
}

/// `n` i.i.d. draws from `N(mean, cov)`.
pub fn sample_shots(moments: &OutputMoments, n: usize, seed: u64, qs: QubitState) -> Result<ShotSet> {
    if n == 0 {
        return invalid("need at least one shot");
    }
    let l = cholesky2(&moments.cov)?;
    let shots = chunked(n, seed, |rng, _, len| {
        Ok((0..len)
            .map(|_| {
                let (i, q) = draw(rng, &moments.mean, l);
                Shot { i, q, tomo: None }
            })
            .collect())
    })?;
    Ok(ShotSet {
        shots,
        seed,
        label: ShotLabel::Qubit(qs),
    })
}

/// Draws from the equal mixture of the g and e distributions, recording the
/// final z outcome (+1 for g) of each shot.
pub fn sample_superposition(g: &OutputMoments, e: &OutputMoments, n: usize, seed: u64) -> Result<ShotSet> {
    if n == 0 {
        return invalid("need at least one shot");
    }
    let lg = cholesky2(&g.cov)?;
    let le = cholesky2(&e.cov)?;
    let shots = chunked(n, seed, |rng, _, len| {
        Ok((0..len)
            .map(|_| {
                let ground = rng.random::<bool>();
                let (i, q) = if ground { draw(rng, &g.mean, lg) } else { draw(rng, &e.mean, le) };
                Shot {
                    i,
                    q,
                    tomo: Some((TomoAxis::Z, if ground { 1 } else { -1 })),
                }
            })
            .collect())
    })?;
    Ok(ShotSet {
        shots,
        seed,
        label: ShotLabel::Superposition,
    })
}

/// Sample mean and unbiased covariance of a shot set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentFit {
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
    /// Number of shots; 0 marks moments taken directly from a model.
    pub n: usize,
    /// Zero variance in some direction.
    pub degenerate: bool,
}

impl MomentFit {
    pub fn exact(moments: &OutputMoments) -> Self {
        Self {
            mean: moments.mean,
            cov: moments.cov,
            n: 0,
            degenerate: moments.cov.determinant() <= 0.0,
        }
    }

    /// Mean of the two quadrature variances.
    pub fn mean_variance(&self) -> f64 {
        0.5 * (self.cov[(0, 0)] + self.cov[(1, 1)])
    }
}

pub fn fit_moments(shots: &ShotSet) -> Result<MomentFit> {
    let n = shots.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("moment fit needs >= 2 shots, got {n}")));
    }
    let nf = n as f64;
    let (si, sq) = shots.shots.iter().fold((0.0, 0.0), |(a, b), s| (a + s.i, b + s.q));
    let mean = Vector2::new(si / nf, sq / nf);
    let (mut vii, mut viq, mut vqq) = (0.0, 0.0, 0.0);
    for s in &shots.shots {
        let (di, dq) = (s.i - mean[0], s.q - mean[1]);
        vii += di * di;
        viq += di * dq;
        vqq += dq * dq;
    }
    let denom = nf - 1.0;
    let cov = Matrix2::new(vii / denom, viq / denom, viq / denom, vqq / denom);
    let scale = cov[(0, 0)].max(cov[(1, 1)]);
    let degenerate = scale == 0.0 || cov.determinant() <= 1e-14 * scale * scale;
    Ok(MomentFit { mean, cov, n, degenerate })
}

/// Power SNR of two outcome distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrResult {
    pub snr: f64,
    /// `snr / baseline` when a baseline was supplied.
    pub normalized: Option<f64>,
    pub center_g: Vector2<f64>,
    pub center_e: Vector2<f64>,
    pub sigma_g: f64,
    pub sigma_e: f64,
}

impl SnrResult {
    /// Recomputes the SNR from the stored centers and widths.
    pub fn recompute(&self) -> f64 {
        (self.center_g - self.center_e).norm_squared() / (self.sigma_g.powi(2) + self.sigma_e.powi(2))
    }

    /// Distance between the two centers.
    pub fn separation(&self) -> f64 {
        (self.center_g - self.center_e).norm()
    }
}

/// `((I_g − I_e)² + (Q_g − Q_e)²) / (σ_g² + σ_e²)` with σ² the mean quadrature variance.
pub fn snr(fit_g: &MomentFit, fit_e: &MomentFit, baseline: Option<f64>) -> Result<SnrResult> {
    let sigma_g = fit_g.mean_variance().sqrt();
    let sigma_e = fit_e.mean_variance().sqrt();
    let total = sigma_g.powi(2) + sigma_e.powi(2);
    if !(total > 0.0) {
        return invalid("total variance is zero");
    }
    let mut out = SnrResult {
        snr: 0.0,
        normalized: None,
        center_g: fit_g.mean,
        center_e: fit_e.mean,
        sigma_g,
        sigma_e,
    };
    out.snr = out.recompute();
    if let Some(b) = baseline {
        if !(b > 0.0) {
            return invalid(format!("baseline SNR must be > 0, got {b}"));
        }
        out.normalized = Some(out.snr / b);
    }
    Ok(out)
}

/// Optimal-threshold overlap error `½·erfc(√snr / 2)` of two equal-width Gaussians.
pub fn error_rate(snr: f64) -> f64 {
    0.5 * libm::erfc(snr.max(0.0).sqrt() / 2.0)
}

/// Inverts [`error_rate`] by bisection; `eps` must lie in `(0, 0.5)`.
pub fn snr_for_error_rate(eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 0.5) {
        return invalid(format!("error rate must lie in (0, 0.5), got {eps}"));
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while error_rate(hi) > eps {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if error_rate(mid) > eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Square bin grid over `(I_m/σ, Q_m/σ)` with `σ = sigma_scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinGrid {
    pub bins: usize,
    /// Half-width of the grid in units of `sigma_scale`.
    pub half_width: f64,
    pub sigma_scale: f64,
}

impl BinGrid {
    pub fn new(sigma_scale: f64) -> Self {
        Self {
            bins: 51,
            half_width: 5.0,
            sigma_scale,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.bins == 0 || !(self.half_width > 0.0) || !(self.sigma_scale > 0.0) {
            return invalid(format!("bad bin grid {self:?}"));
        }
        Ok(())
    }

    fn width(&self) -> f64 {
        2.0 * self.half_width / self.bins as f64
    }

    /// Bin center in scaled units.
    pub fn center(&self, k: usize) -> f64 {
        -self.half_width + (k as f64 + 0.5) * self.width()
    }

    fn index(&self, v: f64) -> Option<usize> {
        let x = v / self.sigma_scale + self.half_width;
        if x < 0.0 {
            return None;
        }
        let k = (x / self.width()).floor() as usize;
        (k < self.bins).then_some(k)
    }
}

/// Conditional ⟨z⟩ over a 2D grid; row-major with the Q index outermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalMap {
    pub grid: BinGrid,
    /// Bayes posterior ⟨z⟩ at each bin center; `None` for bins without shots.
    pub values: Vec<Option<f64>>,
    /// Mean recorded z outcome of the shots in each bin.
    pub empirical: Vec<Option<f64>>,
    pub counts: Vec<u64>,
    /// Shots outside the grid.
    pub overflow: u64,
}

impl ConditionalMap {
    pub fn value(&self, i_bin: usize, q_bin: usize) -> Option<f64> {
        self.values[q_bin * self.grid.bins + i_bin]
    }

    pub fn count(&self, i_bin: usize, q_bin: usize) -> u64 {
        self.counts[q_bin * self.grid.bins + i_bin]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.overflow
    }

    /// Writes `i_bin,q_bin,i_scaled,q_scaled,z_posterior,z_empirical,count`; empty cells are blank.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Consistency(format!("csv write failed: {e}"));
        w.write_record(["i_bin", "q_bin", "i_scaled", "q_scaled", "z_posterior", "z_empirical", "count"])
            .map_err(io)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for qb in 0..self.grid.bins {
            for ib in 0..self.grid.bins {
                let k = qb * self.grid.bins + ib;
                w.write_record([
                    ib.to_string(),
                    qb.to_string(),
                    self.grid.center(ib).to_string(),
                    self.grid.center(qb).to_string(),
                    opt(self.values[k]),
                    opt(self.empirical[k]),
                    self.counts[k].to_string(),
                ])
                .map_err(io)?;
            }
        }
        w.flush().map_err(|e| Error::Consistency(format!("csv flush failed: {e}")))
    }
}

fn log_density(x: &Vector2<f64>, m: &OutputMoments, inv: &Matrix2<f64>, log_det: f64) -> f64 {
    let d = x - m.mean;
    -0.5 * (d.dot(&(inv * d)) + log_det)
}

/// Posterior ⟨z⟩ with equal priors: `(N_g − N_e)/(N_g + N_e)`, evaluated at `(i, q)`.
pub fn posterior_z(g: &OutputMoments, e: &OutputMoments, i: f64, q: f64) -> Result<f64> {
    let inv_g = g.cov.try_inverse().ok_or_else(|| Error::InvalidArgument("singular g covariance".into()))?;
    let inv_e = e.cov.try_inverse().ok_or_else(|| Error::InvalidArgument("singular e covariance".into()))?;
    let x = Vector2::new(i, q);
    let lg = log_density(&x, g, &inv_g, g.cov.determinant().ln());
    let le = log_density(&x, e, &inv_e, e.cov.determinant().ln());
    // (1 − e^{le−lg}) / (1 + e^{le−lg}) = tanh((lg − le)/2)
    Ok(((lg - le) / 2.0).tanh())
}

/// Bullseye map: posterior ⟨z⟩ at bin centers, with shot counts and empirical
/// z averages taken from `shots`.
pub fn bullseye_map(g: &OutputMoments, e: &OutputMoments, shots: &ShotSet, grid: BinGrid) -> Result<ConditionalMap> {
    grid.validate()?;
    let nb = grid.bins;
    let cells = nb * nb;
    let (counts, zsum, overflow) = shots
        .shots
        .par_chunks(CHUNK_SIZE)
        .map(|chunk| {
            let mut counts = vec![0u64; cells];
            let mut zsum = vec![0i64; cells];
            let mut overflow = 0u64;
            for s in chunk {
                match (grid.index(s.i), grid.index(s.q)) {
                    (Some(ib), Some(qb)) => {
                        let k = qb * nb + ib;
                        counts[k] += 1;
                        if let Some((TomoAxis::Z, out)) = s.tomo {
                            zsum[k] += out as i64;
                        }
                    }
                    _ => overflow += 1,
                }
            }
            (counts, zsum, overflow)
        })
        .reduce(
            || (vec![0u64; cells], vec![0i64; cells], 0u64),
            |mut a, b| {
                a.0.iter_mut().zip(&b.0).for_each(|(x, y)| *x += y);
                a.1.iter_mut().zip(&b.1).for_each(|(x, y)| *x += y);
                (a.0, a.1, a.2 + b.2)
            },
        );
    let has_z = shots.shots.iter().any(|s| matches!(s.tomo, Some((TomoAxis::Z, _))));
    let mut values = Vec::with_capacity(cells);
    let mut empirical = Vec::with_capacity(cells);
    for qb in 0..nb {
        for ib in 0..nb {
            let k = qb * nb + ib;
            if counts[k] == 0 {
                values.push(None);
                empirical.push(None);
                continue;
            }
            let (i, q) = (grid.center(ib) * grid.sigma_scale, grid.center(qb) * grid.sigma_scale);
            values.push(Some(posterior_z(g, e, i, q)?));
            empirical.push(has_z.then(|| zsum[k] as f64 / counts[k] as f64));
        }
    }
    Ok(ConditionalMap {
        grid,
        values,
        empirical,
        counts,
        overflow,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn moments(mi: f64, mq: f64, var: f64) -> OutputMoments {
        OutputMoments {
            mean: Vector2::new(mi, mq),
            cov: Matrix2::identity() * var,
        }
    }

    #[test]
    fn tiny_width_collapses_to_mean() {
        let m = moments(1.5, -2.0, 1e-20);
        let s = sample_shots(&m, 1000, 3, QubitState::G).unwrap();
        assert!(s.shots.iter().all(|x| (x.i - 1.5).abs() < 1e-8 && (x.q + 2.0).abs() < 1e-8));
    }

    #[test]
    fn singular_covariance_rejected() {
        let m = OutputMoments {
            mean: Vector2::zeros(),
            cov: Matrix2::new(1.0, 1.0, 1.0, 1.0),
        };
        assert!(sample_shots(&m, 10, 0, QubitState::G).is_err());
        assert!(sample_shots(&moments(0.0, 0.0, 1.0), 0, 0, QubitState::G).is_err());
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let m = moments(0.1, 0.2, 0.5);
        let a = sample_shots(&m, 10_000, 42, QubitState::E).unwrap();
        let b = sample_shots(&m, 10_000, 42, QubitState::E).unwrap();
        assert_eq!(a, b);
        let c = sample_shots(&m, 10_000, 43, QubitState::E).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sampling_independent_of_pool_size() {
        let m = moments(0.0, 0.0, 2.0);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| sample_shots(&m, 3 * CHUNK_SIZE + 17, 9, QubitState::G).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn vacuum_sample_moments_within_statistical_bound() {
        let n = 50_000;
        let s = sample_shots(&moments(0.0, 0.0, 0.5), n, 11, QubitState::G).unwrap();
        let f = fit_moments(&s).unwrap();
        let bound = 3.0 / (n as f64).sqrt();
        assert!((f.cov[(0, 0)] / 0.5 - 1.0).abs() < 2f64.sqrt() * bound);
        assert!((f.cov[(1, 1)] / 0.5 - 1.0).abs() < 2f64.sqrt() * bound);
        assert!(f.mean[0].abs() < bound * 0.5f64.sqrt());
    }

    #[test]
    fn fit_two_points_by_hand() {
        let s = ShotSet {
            shots: vec![
                Shot { i: 0.0, q: 0.0, tomo: None },
                Shot { i: 2.0, q: 0.0, tomo: None },
            ],
            seed: 0,
            label: ShotLabel::Qubit(QubitState::G),
        };
        let f = fit_moments(&s).unwrap();
        assert_eq!(f.mean, Vector2::new(1.0, 0.0));
        assert_eq!(f.cov[(0, 0)], 2.0);
        assert!(f.degenerate);
    }

    #[test]
    fn fit_needs_two_shots() {
        let s = ShotSet {
            shots: vec![Shot { i: 0.0, q: 0.0, tomo: None }],
            seed: 0,
            label: ShotLabel::Qubit(QubitState::G),
        };
        assert!(matches!(fit_moments(&s), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn constant_samples_are_degenerate() {
        let s = ShotSet {
            shots: vec![Shot { i: 1.0, q: 1.0, tomo: None }; 10],
            seed: 0,
            label: ShotLabel::Qubit(QubitState::G),
        };
        let f = fit_moments(&s).unwrap();
        assert_eq!(f.cov, Matrix2::zeros());
        assert!(f.degenerate);
    }

    #[test]
    fn recovers_correlated_gaussian() {
        let truth = OutputMoments {
            mean: Vector2::new(1.0, -0.5),
            cov: Matrix2::new(2.0, 0.6, 0.6, 1.0),
        };
        let n = 1_000_000;
        let f = fit_moments(&sample_shots(&truth, n, 5, QubitState::G).unwrap()).unwrap();
        let nf = n as f64;
        assert!((f.mean[0] - 1.0).abs() < 5.0 * (2.0 / nf).sqrt());
        assert!((f.mean[1] + 0.5).abs() < 5.0 * (1.0 / nf).sqrt());
        // var of sample variance ≈ 2σ⁴/n; of covariance ≈ (σ_i²σ_q² + c²)/n
        assert!((f.cov[(0, 0)] - 2.0).abs() < 5.0 * (2.0 * 4.0 / nf).sqrt());
        assert!((f.cov[(1, 1)] - 1.0).abs() < 5.0 * (2.0 / nf).sqrt());
        assert!((f.cov[(0, 1)] - 0.6).abs() < 5.0 * ((2.0 + 0.36) / nf).sqrt());
    }

    #[test]
    fn snr_examples() {
        let a = MomentFit::exact(&moments(1.0, 0.0, 1.0));
        let b = MomentFit::exact(&moments(-1.0, 0.0, 1.0));
        assert_eq!(snr(&a, &a, None).unwrap().snr, 0.0);
        let r = snr(&a, &b, Some(0.5)).unwrap();
        assert_abs_diff_eq!(r.snr, 2.0);
        assert_abs_diff_eq!(r.normalized.unwrap(), 4.0);
        assert_eq!(r.snr, r.recompute());
        let z = MomentFit::exact(&moments(0.0, 0.0, 0.0));
        assert!(snr(&z, &z, None).is_err());
    }

    #[test]
    fn error_rate_examples() {
        assert_eq!(error_rate(0.0), 0.5);
        assert_abs_diff_eq!(error_rate(10.83), 0.01, epsilon = 5e-5);
        let s1 = snr_for_error_rate(0.01).unwrap();
        assert_abs_diff_eq!(s1, 10.83, epsilon = 0.01);
        let improved = error_rate(s1 * 1.44);
        assert_abs_diff_eq!(improved, 0.0026, epsilon = 1e-4);
        let factor = 0.01 / improved;
        assert!(factor > 3.7 && factor < 3.9, "factor {factor}");
        assert!(snr_for_error_rate(0.6).is_err());
    }

    #[test]
    fn bullseye_examples() {
        let g = moments(0.0, 0.0, 1.0);
        let e = moments(0.0, 0.0, 2.0);
        let shots = sample_superposition(&g, &e, 20_000, 1).unwrap();
        let grid = BinGrid::new(1.0);
        let same = bullseye_map(&g, &g, &shots, grid).unwrap();
        assert!(same.values.iter().flatten().all(|v| v.abs() < 1e-12));
        assert_eq!(same.total(), 20_000);

        let map = bullseye_map(&g, &e, &shots, grid).unwrap();
        let center = grid.bins / 2;
        let far = posterior_z(&g, &e, 20.0, 0.0).unwrap();
        assert!(far < -0.999999);
        assert!(map.value(center, center).unwrap() > 0.0);
        for k in center..grid.bins - 1 {
            if let (Some(a), Some(b)) = (map.value(k, center), map.value(k + 1, center)) {
                assert!(b < a);
            }
        }
        // empty bins carry no value
        for (v, c) in map.values.iter().zip(&map.counts) {
            assert_eq!(v.is_none(), *c == 0);
        }
    }

    #[test]
    fn bullseye_antisymmetric_under_state_swap() {
        let g = moments(0.3, 0.0, 1.0);
        let e = moments(-0.2, 0.1, 1.7);
        let shots = sample_superposition(&g, &e, 5000, 2).unwrap();
        let a = bullseye_map(&g, &e, &shots, BinGrid::new(1.0)).unwrap();
        let b = bullseye_map(&e, &g, &shots, BinGrid::new(1.0)).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            if let (Some(x), Some(y)) = (x, y) {
                assert!((x + y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn csv_schema() {
        let s = sample_superposition(&moments(0.0, 0.0, 1.0), &moments(1.0, 0.0, 1.0), 3, 0).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "I_m,Q_m,tomo_axis,tomo_outcome");
        assert_eq!(lines.count(), 3);

        let plain = sample_shots(&moments(0.0, 0.0, 1.0), 2, 0, QubitState::G).unwrap();
        let mut buf = Vec::new();
        plain.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("I_m,Q_m\n"));
    }

    proptest! {
        #[test]
        fn snr_invariant_under_rigid_motion(
            gx in -5.0..5.0f64, gy in -5.0..5.0f64, ex in -5.0..5.0f64, ey in -5.0..5.0f64,
            vg in 0.1..4.0f64, ve in 0.1..4.0f64, angle in 0.0..6.3f64, tx in -3.0..3.0f64, ty in -3.0..3.0f64,
        ) {
            let rot = nalgebra::Rotation2::new(angle);
            let t = Vector2::new(tx, ty);
            let mk = |m: Vector2<f64>, v: f64| MomentFit::exact(&OutputMoments { mean: m, cov: Matrix2::identity() * v });
            let a = snr(&mk(Vector2::new(gx, gy), vg), &mk(Vector2::new(ex, ey), ve), None).unwrap().snr;
            let b = snr(
                &mk(rot * Vector2::new(gx, gy) + t, vg),
                &mk(rot * Vector2::new(ex, ey) + t, ve),
                None,
            ).unwrap().snr;
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
        }

        #[test]
        fn error_rate_strictly_decreasing(a in 0.0..200.0f64, d in 0.01..10.0f64) {
            prop_assert!(error_rate(a + d) < error_rate(a));
            prop_assert!(error_rate(a) <= 0.5 && error_rate(a) > 0.0);
        }
    }
}
