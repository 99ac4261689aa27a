//! Monte Carlo campaigns for the first-order eigenvalue error.
//!
//! Each trial draws a uniformly random attitude and two reference directions,
//! corrupts the two body observations with Gaussian angular noise, and records
//! the error parameter `λ_m − λ₁` between the q-Method eigenvalue and the
//! first-order estimate. Trials are seeded individually from the campaign seed
//! and the trial index, so results do not depend on how trials are scheduled
//! across threads.
//!
//! Noise model: each body vector is rotated about a uniformly random axis
//! orthogonal to it, by an angle drawn from `Normal(0, σ)`. The angular
//! deviation is therefore half-normal with mean `σ·√(2/π)`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::davenport::{build_system, Measurement, MeasurementSet};
use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::quat::Quaternion;
use crate::solvers::{first_order, q_method};

/// Upper sanity bound on per-vector noise, degrees.
pub const MAX_SIGMA_DEG: f64 = 30.0;
/// Allowed separation of the two reference directions, degrees.
pub const SEPARATION_DEG: (f64, f64) = (30.0, 150.0);
/// Bins always span at least `[0, MIN_RANGE]`, so a noiseless campaign puts
/// all of its mass in the first bin.
pub const MIN_RANGE: f64 = 1e-12;

/// The σ pairs, in degrees, studied in the first-order performance campaign.
pub const STUDY_SIGMA_PAIRS: [(f64, f64); 6] =
    [(0.1, 0.1), (0.1, 0.5), (0.1, 1.0), (0.5, 0.5), (0.5, 1.0), (1.0, 1.0)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma1_deg: f64,
    pub sigma2_deg: f64,
}

impl NoiseSpec {
    pub fn new(sigma1_deg: f64, sigma2_deg: f64) -> Result<Self> {
        let spec = NoiseSpec { sigma1_deg, sigma2_deg };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for s in [self.sigma1_deg, self.sigma2_deg] {
            if !(0.0..=MAX_SIGMA_DEG).contains(&s) {
                return Err(Error::ConfigError(format!(
                    "noise sigma must lie in [0, {MAX_SIGMA_DEG}] degrees, got {s}"
                )));
            }
        }
        Ok(())
    }

    /// Mean squared angular noise in rad², `(σ₁² + σ₂²)/2`.
    pub fn mean_variance_rad(&self) -> f64 {
        let (a, b) = (self.sigma1_deg.to_radians(), self.sigma2_deg.to_radians());
        0.5 * (a * a + b * b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub n_trials: u64,
    pub noise: NoiseSpec,
    /// Histogram density: samples per bin.
    pub rho_h: u64,
    pub seed: u64,
    pub weights: (f64, f64),
    /// Reject trials whose TASTE exceeds `gate·λ₀·σ̄²`; `None` keeps all.
    pub taste_gate: Option<f64>,
}

impl CampaignConfig {
    pub fn new(n_trials: u64, noise: NoiseSpec, rho_h: u64, seed: u64) -> Self {
        CampaignConfig { n_trials, noise, rho_h, seed, weights: (1.0, 1.0), taste_gate: None }
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        if self.rho_h == 0 {
            return Err(Error::ConfigError("rho_h must be positive".into()));
        }
        if self.n_trials < self.rho_h {
            return Err(Error::ConfigError(format!(
                "n_trials ({}) must be at least rho_h ({})",
                self.n_trials, self.rho_h
            )));
        }
        let (w1, w2) = self.weights;
        if !(w1 > 0.0 && w2 > 0.0 && w1.is_finite() && w2.is_finite()) {
            return Err(Error::ConfigError(format!("weights must be positive, got ({w1}, {w2})")));
        }
        if let Some(g) = self.taste_gate {
            if !(g > 0.0) {
                return Err(Error::ConfigError(format!("taste gate must be positive, got {g}")));
            }
        }
        Ok(())
    }

    /// `round(n_trials / rho_h)`, at least one.
    pub fn n_bins(&self) -> usize {
        ((self.n_trials as f64 / self.rho_h as f64).round() as usize).max(1)
    }

    /// The generator for trial `index`: the campaign seed selects the key and
    /// the trial index selects an independent ChaCha stream.
    pub fn trial_rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }
}

/// Uniform attitude: four standard normals, normalized, then sign-normalized.
pub fn random_unit_quaternion<R: Rng + ?Sized>(rng: &mut R) -> Quaternion {
    random_unit_quaternion_raw(rng).canonical()
}

/// Uniform point on the unit 3-sphere without sign normalization.
pub fn random_unit_quaternion_raw<R: Rng + ?Sized>(rng: &mut R) -> Quaternion {
    loop {
        let q = Quaternion::new(normal(rng), normal(rng), normal(rng), normal(rng));
        if let Some(u) = q.normalized().filter(|_| q.norm() > 1e-6) {
            return u;
        }
    }
}

/// Uniform direction on the unit 2-sphere.
pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(normal(rng), normal(rng), normal(rng));
        if v.norm() > 1e-6 {
            return v.normalized().expect("nonzero");
        }
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Rotates the unit vector `v` about a uniformly random axis orthogonal to it
/// by an angle drawn from `Normal(0, sigma_deg)`.
pub fn perturb_direction<R: Rng + ?Sized>(v: &Vec3, sigma_deg: f64, rng: &mut R) -> Vec3 {
    let (e1, e2) = orthonormal_complement(v);
    let phi = rng.gen_range(0.0..std::f64::consts::TAU);
    let axis = e1 * phi.cos() + e2 * phi.sin();
    let theta = normal(rng) * sigma_deg.to_radians();
    if theta == 0.0 {
        return *v;
    }
    // Rodrigues rotation with axis ⟂ v: the axis·v term vanishes
    *v * theta.cos() + axis.cross(v) * theta.sin()
}

/// Two unit vectors completing `v` to an orthonormal basis.
fn orthonormal_complement(v: &Vec3) -> (Vec3, Vec3) {
    let [x, y, z] = v.0.map(f64::abs);
    let helper = if x <= y && x <= z {
        Vec3::new(1.0, 0.0, 0.0)
    } else if y <= z {
        Vec3::new(0.0, 1.0, 0.0)
    } else {
        Vec3::new(0.0, 0.0, 1.0)
    };
    let e1 = v.cross(&helper).normalized().expect("helper is not parallel to v");
    let e2 = v.cross(&e1);
    (e1, e2)
}

/// Two-observation measurement set for the attitude `q_true`.
///
/// Reference directions are uniform on the sphere, redrawn until their
/// separation lies within [`SEPARATION_DEG`]. Body directions are
/// `A(q_true)·r` perturbed per [`perturb_direction`].
pub fn synth_trial<R: Rng + ?Sized>(
    q_true: &Quaternion,
    noise: &NoiseSpec,
    weights: (f64, f64),
    rng: &mut R,
) -> Result<MeasurementSet> {
    let a = q_true.attitude_matrix()?;
    let (lo, hi) = (SEPARATION_DEG.0.to_radians(), SEPARATION_DEG.1.to_radians());
    let r1 = random_unit_vector(rng);
    let r2 = loop {
        let r2 = random_unit_vector(rng);
        let sep = r1.angle_to(&r2);
        if (lo..=hi).contains(&sep) {
            break r2;
        }
    };
    let b1 = perturb_direction(&(a * r1), noise.sigma1_deg, rng);
    let b2 = perturb_direction(&(a * r2), noise.sigma2_deg, rng);
    // A(q)·r and its perturbation are unit only to rounding; re-validate with
    // explicit normalization so measurement validation never trips on 1e-16.
    MeasurementSet::renormalized(vec![Measurement::new(b1, r1, weights.0), Measurement::new(b2, r2, weights.1)])
}

/// Result of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    /// `λ_m − λ₁`.
    pub error_parameter: f64,
    /// `λ₀ − λ_m` from the q-Method.
    pub taste: f64,
    pub lambda0: f64,
}

/// Synthesizes one trial and compares the q-Method eigenvalue with the
/// first-order estimate.
pub fn run_trial<R: Rng + ?Sized>(config: &CampaignConfig, rng: &mut R) -> Result<TrialOutcome> {
    let q_true = random_unit_quaternion(rng);
    let meas = synth_trial(&q_true, &config.noise, config.weights, rng)?;
    let sys = build_system(&meas);
    let oracle = q_method(&sys)?;
    let estimate = first_order(&sys)?;
    Ok(TrialOutcome {
        error_parameter: oracle.lambda - estimate.lambda,
        taste: oracle.taste,
        lambda0: sys.lambda0,
    })
}

/// Per-trial error parameters in trial order; `None` marks a rejected trial
/// (numerical failure or TASTE gate).
pub fn run_campaign_samples(config: &CampaignConfig) -> Result<Vec<Option<f64>>> {
    config.validate()?;
    let gate = config.taste_gate.map(|g| g * config.noise.mean_variance_rad());
    Ok((0..config.n_trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = config.trial_rng(i);
            let outcome = run_trial(config, &mut rng).ok()?;
            match gate {
                Some(g) if outcome.taste > g * outcome.lambda0 => None,
                _ => Some(outcome.error_parameter),
            }
        })
        .collect())
}

/// Runs the campaign on the current rayon pool and bins the result.
pub fn run_campaign(config: &CampaignConfig) -> Result<Histogram> {
    let samples = run_campaign_samples(config)?;
    Ok(Histogram::from_samples(&samples, config.n_bins()))
}

/// Runs the campaign on a dedicated pool of `workers` threads. The result is
/// identical for every worker count.
pub fn run_campaign_with_workers(config: &CampaignConfig, workers: usize) -> Result<Histogram> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::ConfigError(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run_campaign(config))
}

/// Equal-width histogram of accepted error parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub n_total: u64,
    pub n_rejected: u64,
}

impl Histogram {
    /// Bins `n_bins` equal-width bins over `[0, max(max sample, MIN_RANGE)]`.
    /// Samples below zero (rounding around an exact fit) land in the first bin.
    pub fn from_samples(samples: &[Option<f64>], n_bins: usize) -> Histogram {
        let n_bins = n_bins.max(1);
        let hi = samples.iter().flatten().fold(MIN_RANGE, |acc, x| acc.max(*x));
        let width = hi / n_bins as f64;
        let bin_edges: Vec<f64> = (0..=n_bins).map(|i| if i == n_bins { hi } else { i as f64 * width }).collect();
        let mut counts = vec![0u64; n_bins];
        let mut n_rejected = 0;
        for s in samples {
            match s {
                Some(x) => {
                    let idx = ((x.max(0.0) / width).floor() as usize).min(n_bins - 1);
                    counts[idx] += 1;
                }
                None => n_rejected += 1,
            }
        }
        Histogram { bin_edges, counts, n_total: samples.len() as u64, n_rejected }
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn n_accepted(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// CSV with header `bin_lo,bin_hi,count`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["bin_lo", "bin_hi", "count"]).expect("in-memory csv write");
        for (i, c) in self.counts.iter().enumerate() {
            w.write_record([
                format!("{:e}", self.bin_edges[i]),
                format!("{:e}", self.bin_edges[i + 1]),
                c.to_string(),
            ])
            .expect("in-memory csv write");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
    }

    pub fn from_csv(text: &str, n_rejected: u64) -> std::result::Result<Histogram, csv::Error> {
        #[derive(Deserialize)]
        struct Row {
            bin_lo: f64,
            bin_hi: f64,
            count: u64,
        }
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut bin_edges = Vec::new();
        let mut counts = Vec::new();
        for row in rdr.deserialize::<Row>() {
            let row = row?;
            if bin_edges.is_empty() {
                bin_edges.push(row.bin_lo);
            }
            bin_edges.push(row.bin_hi);
            counts.push(row.count);
        }
        let n_total = counts.iter().sum::<u64>() + n_rejected;
        Ok(Histogram { bin_edges, counts, n_total, n_rejected })
    }
}

/// JSON output of a campaign: the histogram plus the configuration that
/// produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignRecord {
    pub seed: u64,
    pub sigma1_deg: f64,
    pub sigma2_deg: f64,
    pub rho_h: u64,
    pub n_trials: u64,
    pub n_rejected: u64,
    pub weights: (f64, f64),
    pub taste_gate: Option<f64>,
    pub histogram: Histogram,
}

impl CampaignRecord {
    pub fn new(config: &CampaignConfig, histogram: Histogram) -> Self {
        CampaignRecord {
            seed: config.seed,
            sigma1_deg: config.noise.sigma1_deg,
            sigma2_deg: config.noise.sigma2_deg,
            rho_h: config.rho_h,
            n_trials: config.n_trials,
            n_rejected: histogram.n_rejected,
            weights: config.weights,
            taste_gate: config.taste_gate,
            histogram,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quaternion_sampling_is_deterministic_and_unit() {
        let a = random_unit_quaternion(&mut ChaCha8Rng::seed_from_u64(42));
        let b = random_unit_quaternion(&mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a, b);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let q = random_unit_quaternion(&mut rng);
            assert!((q.norm() - 1.0).abs() <= 1e-14);
            assert!(q.s >= 0.0);
        }
    }

    #[test]
    fn raw_quaternion_components_are_centered() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mut sum = [0.0; 4];
        for _ in 0..n {
            let q = random_unit_quaternion_raw(&mut rng).to_array();
            for i in 0..4 {
                sum[i] += q[i];
            }
        }
        let bound = 4.0 * 0.5 / (n as f64).sqrt();
        for s in sum {
            assert!((s / n as f64).abs() < bound, "{}", s / n as f64);
        }
    }

    #[test]
    fn zero_sigma_keeps_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = random_unit_vector(&mut rng);
        for _ in 0..100 {
            assert_eq!(perturb_direction(&v, 0.0, &mut rng), v);
        }
    }

    #[test]
    fn perturbation_about_z_keeps_cosine() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z = Vec3::new(0.0, 0.0, 1.0);
        for _ in 0..1000 {
            let mut probe = rng.clone();
            let out = perturb_direction(&z, 5.0, &mut rng);
            let _phi: f64 = probe.gen_range(0.0..std::f64::consts::TAU);
            let theta = normal(&mut probe) * 5f64.to_radians();
            assert_eq!(out[2], theta.cos());
            assert!((out.norm() - 1.0).abs() <= 1e-14);
        }
    }

    #[test]
    fn perturbation_angle_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let sigma = 1f64.to_radians();
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..n {
            let v = random_unit_vector(&mut rng);
            let out = perturb_direction(&v, 1.0, &mut rng);
            assert!((out.norm() - 1.0).abs() <= 1e-14);
            let angle = v.angle_to(&out);
            sum += angle;
            sum_sq += angle * angle;
        }
        let rms = (sum_sq / n as f64).sqrt();
        let mean = sum / n as f64;
        assert!((rms / sigma - 1.0).abs() < 0.02, "rms {rms}");
        let half_normal_mean = sigma * (2.0 / std::f64::consts::PI).sqrt();
        assert!((mean / half_normal_mean - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn noiseless_identity_trial_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let noise = NoiseSpec::new(0.0, 0.0).unwrap();
        let meas = synth_trial(&Quaternion::IDENTITY, &noise, (1.0, 1.0), &mut rng).unwrap();
        for m in meas.entries() {
            assert!((m.b - m.r).norm() <= 1e-15);
        }
        let sep = meas.entries()[0].r.angle_to(&meas.entries()[1].r).to_degrees();
        assert!((30.0..=150.0).contains(&sep));
        let sys = build_system(&meas);
        assert!((q_method(&sys).unwrap().lambda - sys.lambda0).abs() <= 1e-14);
    }

    #[test]
    fn noiseless_trials_recover_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let noise = NoiseSpec::new(0.0, 0.0).unwrap();
        for _ in 0..1000 {
            let q = random_unit_quaternion(&mut rng);
            let sys = build_system(&synth_trial(&q, &noise, (1.0, 1.0), &mut rng).unwrap());
            let rep = q_method(&sys).unwrap();
            assert!(rep.q.sign_blind_distance(&q) <= 1e-10);
        }
    }

    #[test]
    fn small_noise_taste_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let noise = NoiseSpec::new(0.1, 0.1).unwrap();
        let s2 = noise.mean_variance_rad();
        let mut mean = 0.0;
        let n = 2000;
        for _ in 0..n {
            let q = random_unit_quaternion(&mut rng);
            let sys = build_system(&synth_trial(&q, &noise, (1.0, 1.0), &mut rng).unwrap());
            let t = q_method(&sys).unwrap().taste;
            assert!(t > -1e-12);
            assert!(t < 50.0 * sys.lambda0 * s2);
            mean += t / n as f64;
        }
        // one residual degree of freedom per pair: E[J] ≈ ½·w·σ²
        assert!(mean > 0.1 * s2 && mean < 10.0 * s2, "mean TASTE {mean}, σ² {s2}");
    }

    #[test]
    fn zero_noise_trial_error_is_zero() {
        let cfg = CampaignConfig::new(100, NoiseSpec::new(0.0, 0.0).unwrap(), 10, 1);
        let mut rng = cfg.trial_rng(0);
        for _ in 0..100 {
            let out = run_trial(&cfg, &mut rng).unwrap();
            assert!(out.error_parameter.abs() <= 1e-12);
        }
    }

    #[test]
    fn campaign_bookkeeping() {
        let cfg = CampaignConfig::new(10_000, NoiseSpec::new(0.5, 0.5).unwrap(), 100, 3);
        let h = run_campaign(&cfg).unwrap();
        assert_eq!(h.n_bins(), 100);
        assert_eq!(h.bin_edges.len(), 101);
        assert_eq!(h.n_accepted() + h.n_rejected, 10_000);
        assert_eq!(h.n_total, 10_000);
        assert!(h.bin_edges.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn zero_noise_campaign_fills_first_bin() {
        let cfg = CampaignConfig::new(1000, NoiseSpec::new(0.0, 0.0).unwrap(), 10, 5);
        let h = run_campaign(&cfg).unwrap();
        assert_eq!(h.counts[0], 1000);
    }

    #[test]
    fn config_errors() {
        let noise = NoiseSpec::new(1.0, 1.0).unwrap();
        assert!(matches!(run_campaign(&CampaignConfig::new(10, noise, 100, 0)), Err(Error::ConfigError(_))));
        assert!(NoiseSpec::new(-1.0, 1.0).is_err());
        assert!(NoiseSpec::new(1.0, 31.0).is_err());
        let mut cfg = CampaignConfig::new(100, noise, 10, 0);
        cfg.weights = (0.0, 1.0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn taste_gate_rejects_but_counts() {
        let noise = NoiseSpec::new(1.0, 1.0).unwrap();
        let mut cfg = CampaignConfig::new(2000, noise, 20, 11);
        cfg.taste_gate = Some(0.05);
        let h = run_campaign(&cfg).unwrap();
        assert!(h.n_rejected > 0);
        assert_eq!(h.n_accepted() + h.n_rejected, 2000);
    }

    #[test]
    fn worker_count_does_not_change_result() {
        let cfg = CampaignConfig::new(3000, NoiseSpec::new(1.0, 0.5).unwrap(), 30, 99);
        let one = run_campaign_with_workers(&cfg, 1).unwrap();
        let eight = run_campaign_with_workers(&cfg, 8).unwrap();
        assert_eq!(one, eight);
    }

    #[test]
    fn csv_round_trip() {
        let samples = [Some(0.0), Some(0.5), None, Some(1.0), Some(0.26)];
        let h = Histogram::from_samples(&samples, 4);
        assert_eq!(h.counts, vec![1, 1, 1, 1]);
        assert_eq!(h.n_rejected, 1);
        let csv = h.to_csv();
        assert!(csv.starts_with("bin_lo,bin_hi,count\n"));
        assert_eq!(Histogram::from_csv(&csv, 1).unwrap(), h);
    }
}
