//! Clinical performance extrapolation: log-normal tissue sampling with
//! device-noise inflation, linear SVM classifiers trained by batch
//! subgradient descent, sensitivity/specificity reports against screening
//! thresholds, and the Poisson usable-frame timing estimator.

use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Screening guideline thresholds: a device must reach 90% sensitivity and
/// 80% specificity to substitute for biopsy sampling.
pub const GUIDELINE_SENSITIVITY: f64 = 0.90;
pub const GUIDELINE_SPECIFICITY: f64 = 0.80;

/// Per-class optical-property statistics in the linear domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TissueClassStats {
    pub name: String,
    pub mean_mu_a: f64,
    pub std_mu_a: f64,
    pub mean_mu_s: f64,
    pub std_mu_s: f64,
    pub wavelength_nm: f64,
}

impl TissueClassStats {
    fn validate(&self) -> Result<()> {
        if !(self.mean_mu_a > 0.0 && self.mean_mu_s > 0.0) {
            return Err(Error::invalid(format!("class '{}' means must be > 0", self.name)));
        }
        if self.std_mu_a < 0.0 || self.std_mu_s < 0.0 {
            return Err(Error::invalid(format!("class '{}' stds must be >= 0", self.name)));
        }
        Ok(())
    }
}

/// Fractional measurement error of the device, added to each feature's
/// variance in quadrature as `(rel_err * mean)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceNoiseModel {
    pub rel_err_mu_a: f64,
    pub rel_err_mu_s: f64,
}

impl DeviceNoiseModel {
    pub const NONE: DeviceNoiseModel = DeviceNoiseModel { rel_err_mu_a: 0.0, rel_err_mu_s: 0.0 };

    fn validate(&self) -> Result<()> {
        if self.rel_err_mu_a < 0.0 || self.rel_err_mu_s < 0.0 {
            return Err(Error::invalid("device noise fractions must be >= 0"));
        }
        Ok(())
    }
}

/// Log-normal parameters that reproduce a linear-domain mean and variance:
/// `sigma_ln^2 = ln(1 + v / mu^2)`, `mu_ln = ln(mu) - sigma_ln^2 / 2`.
pub fn log_normal_params(linear_mean: f64, linear_variance: f64) -> Result<(f64, f64)> {
    if !(linear_mean > 0.0) {
        return Err(Error::invalid("log-normal mean must be > 0"));
    }
    if linear_variance < 0.0 {
        return Err(Error::invalid("variance must be >= 0"));
    }
    let sigma_sq = (1.0 + linear_variance / (linear_mean * linear_mean)).ln();
    let mu_ln = linear_mean.ln() - sigma_sq / 2.0;
    Ok((mu_ln, sigma_sq.sqrt()))
}

/// Draw `n` (mu_a, mu_s') samples for a tissue class. Each feature is
/// log-normal with linear mean equal to the class mean and linear variance
/// `std^2 + (rel_err * mean)^2`. Deterministic per seed.
pub fn sample_class(
    stats: &TissueClassStats,
    noise: &DeviceNoiseModel,
    n: usize,
    seed: u64,
) -> Result<Vec<[f64; 2]>> {
    stats.validate()?;
    noise.validate()?;
    if n == 0 {
        return Err(Error::invalid("sample count must be >= 1"));
    }
    let var_a = stats.std_mu_a.powi(2) + (noise.rel_err_mu_a * stats.mean_mu_a).powi(2);
    let var_s = stats.std_mu_s.powi(2) + (noise.rel_err_mu_s * stats.mean_mu_s).powi(2);
    let (mu_a_ln, sd_a_ln) = log_normal_params(stats.mean_mu_a, var_a)?;
    let (mu_s_ln, sd_s_ln) = log_normal_params(stats.mean_mu_s, var_s)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let out = (0..n)
        .map(|_| {
            let za = normal.sample(&mut rng);
            let zs = normal.sample(&mut rng);
            [(mu_a_ln + sd_a_ln * za).exp(), (mu_s_ln + sd_s_ln * zs).exp()]
        })
        .collect();
    Ok(out)
}

/// Feature standardization fitted on training data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardization {
    pub mean: [f64; 2],
    pub std: [f64; 2],
}

impl Standardization {
    fn fit(data: &[[f64; 2]]) -> Self {
        let n = data.len() as f64;
        let mut mean = [0.0; 2];
        for x in data {
            mean[0] += x[0];
            mean[1] += x[1];
        }
        mean[0] /= n;
        mean[1] /= n;
        let mut var = [0.0; 2];
        for x in data {
            var[0] += (x[0] - mean[0]).powi(2);
            var[1] += (x[1] - mean[1]).powi(2);
        }
        let std = [
            (var[0] / n).sqrt().max(f64::MIN_POSITIVE),
            (var[1] / n).sqrt().max(f64::MIN_POSITIVE),
        ];
        Standardization { mean, std }
    }

    fn apply(&self, x: [f64; 2]) -> [f64; 2] {
        [(x[0] - self.mean[0]) / self.std[0], (x[1] - self.mean[1]) / self.std[1]]
    }
}

/// Linear SVM hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmHyperParams {
    pub c: f64,
    pub max_iters: usize,
    pub grad_tolerance: f64,
}

impl Default for SvmHyperParams {
    fn default() -> Self {
        Self { c: 1.0, max_iters: 10_000, grad_tolerance: 1e-6 }
    }
}

/// Trained linear decision function over standardized (mu_a, mu_s').
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierModel {
    pub weights: [f64; 2],
    pub bias: f64,
    pub standardization: Standardization,
    /// Set when the two training classes were indistinguishable; the model
    /// then always predicts the majority class.
    pub degenerate: bool,
    majority_positive: bool,
}

impl ClassifierModel {
    /// Signed decision value; positive predicts the positive (disease) class.
    pub fn decision(&self, x: [f64; 2]) -> f64 {
        if self.degenerate {
            return if self.majority_positive { 1.0 } else { -1.0 };
        }
        let z = self.standardization.apply(x);
        self.weights[0] * z[0] + self.weights[1] * z[1] + self.bias
    }

    pub fn predict_positive(&self, x: [f64; 2]) -> bool {
        self.decision(x) > 0.0
    }
}

fn classes_indistinguishable(positives: &[[f64; 2]], negatives: &[[f64; 2]]) -> bool {
    let stat = |d: &[[f64; 2]]| {
        let n = d.len() as f64;
        let mut m = [0.0f64; 2];
        let mut v = [0.0f64; 2];
        for x in d {
            m[0] += x[0];
            m[1] += x[1];
        }
        m[0] /= n;
        m[1] /= n;
        for x in d {
            v[0] += (x[0] - m[0]).powi(2);
            v[1] += (x[1] - m[1]).powi(2);
        }
        (m, [v[0] / n, v[1] / n])
    };
    let (mp, vp) = stat(positives);
    let (mn, vn) = stat(negatives);
    let scale = mp[0].abs().max(mn[0].abs()).max(1e-300);
    let scale2 = mp[1].abs().max(mn[1].abs()).max(1e-300);
    (mp[0] - mn[0]).abs() < 1e-12 * scale
        && (mp[1] - mn[1]).abs() < 1e-12 * scale2
        && (vp[0] - vn[0]).abs() < 1e-12 * scale * scale
        && (vp[1] - vn[1]).abs() < 1e-12 * scale2 * scale2
}

/// Train a binary linear SVM (hinge loss, L2 regularization) by
/// deterministic batch subgradient descent with a decaying step size. The
/// returned model standardizes features internally.
pub fn train_svm(
    positives: &[[f64; 2]],
    negatives: &[[f64; 2]],
    hp: &SvmHyperParams,
) -> Result<ClassifierModel> {
    if positives.len() < 2 || negatives.len() < 2 {
        return Err(Error::invalid("each class needs at least 2 training samples"));
    }
    if !(hp.c > 0.0) {
        return Err(Error::invalid("C must be > 0"));
    }
    let mut all: Vec<[f64; 2]> = Vec::with_capacity(positives.len() + negatives.len());
    all.extend_from_slice(positives);
    all.extend_from_slice(negatives);
    let standardization = Standardization::fit(&all);

    if classes_indistinguishable(positives, negatives) {
        return Ok(ClassifierModel {
            weights: [0.0, 0.0],
            bias: 0.0,
            standardization,
            degenerate: true,
            majority_positive: positives.len() >= negatives.len(),
        });
    }

    let data: Vec<([f64; 2], f64)> = positives
        .iter()
        .map(|&x| (standardization.apply(x), 1.0))
        .chain(negatives.iter().map(|&x| (standardization.apply(x), -1.0)))
        .collect();
    let n = data.len() as f64;
    // primal C-SVM scaled by 1/(C n): lambda/2 |w|^2 + mean hinge
    let lambda = 1.0 / (hp.c * n);

    let objective = |w: &[f64; 2], b: f64| -> f64 {
        let hinge: f64 = data
            .iter()
            .map(|(x, y)| (1.0 - y * (w[0] * x[0] + w[1] * x[1] + b)).max(0.0))
            .sum::<f64>()
            / n;
        0.5 * lambda * (w[0] * w[0] + w[1] * w[1]) + hinge
    };

    let mut w = [0.0f64; 2];
    let mut b = 0.0f64;
    let mut best = (w, b, objective(&w, b));
    let step0 = 1.0;
    for t in 0..hp.max_iters {
        let mut gw = [lambda * w[0], lambda * w[1]];
        let mut gb = 0.0;
        for (x, y) in &data {
            let margin = y * (w[0] * x[0] + w[1] * x[1] + b);
            if margin < 1.0 {
                gw[0] -= y * x[0] / n;
                gw[1] -= y * x[1] / n;
                gb -= y / n;
            }
        }
        let gnorm = (gw[0] * gw[0] + gw[1] * gw[1] + gb * gb).sqrt();
        if gnorm < hp.grad_tolerance {
            break;
        }
        let step = step0 / (1.0 + t as f64).sqrt();
        w[0] -= step * gw[0];
        w[1] -= step * gw[1];
        b -= step * gb;
        let obj = objective(&w, b);
        if obj < best.2 {
            best = (w, b, obj);
        }
    }
    Ok(ClassifierModel {
        weights: best.0,
        bias: best.1,
        standardization,
        degenerate: false,
        majority_positive: positives.len() >= negatives.len(),
    })
}

/// Confusion-matrix counts of a validation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub fp: usize,
}

/// Sensitivity/specificity of a classifier on validation sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    pub sensitivity: f64,
    pub specificity: f64,
    pub n_train: usize,
    pub n_validation: usize,
    pub seed: u64,
    pub confusion: ConfusionCounts,
}

/// Evaluate a trained model: sensitivity on the disease set, specificity on
/// the healthy set.
pub fn evaluate(
    model: &ClassifierModel,
    disease_validation: &[[f64; 2]],
    healthy_validation: &[[f64; 2]],
    n_train: usize,
    seed: u64,
) -> Result<PerformanceReport> {
    if disease_validation.is_empty() || healthy_validation.is_empty() {
        return Err(Error::invalid("validation sets must be nonempty"));
    }
    let tp = disease_validation.iter().filter(|&&x| model.predict_positive(x)).count();
    let fn_ = disease_validation.len() - tp;
    let tn = healthy_validation.iter().filter(|&&x| !model.predict_positive(x)).count();
    let fp = healthy_validation.len() - tn;
    Ok(PerformanceReport {
        sensitivity: tp as f64 / (tp + fn_) as f64,
        specificity: tn as f64 / (tn + fp) as f64,
        n_train,
        n_validation: disease_validation.len() + healthy_validation.len(),
        seed,
        confusion: ConfusionCounts { tp, fn_, tn, fp },
    })
}

/// Outcome of a guideline check, with margins over the thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidelineCheck {
    pub pass: bool,
    pub sensitivity_margin: f64,
    pub specificity_margin: f64,
}

/// Pass/fail against the 90% sensitivity / 80% specificity guideline
/// thresholds (inclusive).
pub fn asge_check(report: &PerformanceReport) -> GuidelineCheck {
    let sensitivity_margin = report.sensitivity - GUIDELINE_SENSITIVITY;
    let specificity_margin = report.specificity - GUIDELINE_SPECIFICITY;
    GuidelineCheck {
        pass: sensitivity_margin >= 0.0 && specificity_margin >= 0.0,
        sensitivity_margin,
        specificity_margin,
    }
}

/// Smallest time t such that a Poisson process of the given usable-frame
/// rate yields at least 3 frames with probability `prob`, solved to 1e-6 s.
/// Exactly scale-invariant: doubling the rate halves the result.
pub fn time_to_three_frames(usable_rate_per_s: f64, prob: f64) -> Result<f64> {
    if !(usable_rate_per_s.is_finite() && usable_rate_per_s > 0.0) {
        return Err(Error::invalid(format!("usable rate must be > 0, got {usable_rate_per_s}")));
    }
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::invalid(format!("probability must be in (0, 1), got {prob}")));
    }
    // P(N >= 3) = 1 - exp(-m)(1 + m + m^2/2); solve for the mean count m
    // first so that t = m / rate scales exactly with the rate.
    let target = 1.0 - prob; // exp(-m)(1 + m + m^2/2) = 1 - prob
    let f = |m: f64| (-m).exp() * (1.0 + m + m * m / 2.0) - target;
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while f(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e9 {
            return Err(Error::Numerical("Poisson inversion bracket overflow".into()));
        }
    }
    // bisect m to far below the 1e-6 s tolerance for any practical rate
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(0.5 * (lo + hi) / usable_rate_per_s)
}

/// Result of one disease-vs-healthy protocol run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassOutcome {
    pub disease: String,
    pub report: PerformanceReport,
    pub guideline: GuidelineCheck,
}

fn protocol_seed(seed: u64, class_index: u64, role: u64) -> u64 {
    // splitmix64 finalizer to decorrelate per-class, per-role streams
    let mut z = seed
        .wrapping_add(class_index.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(role.wrapping_mul(0xd1b5_4a32_d192_ed03));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Full protocol: for each disease class, draw training and validation
/// samples for it and for healthy tissue, train a binary linear SVM, and
/// report sensitivity/specificity with the guideline verdict.
pub fn run_protocol(
    healthy: &TissueClassStats,
    diseases: &[TissueClassStats],
    noise: &DeviceNoiseModel,
    n_train: usize,
    n_validation: usize,
    seed: u64,
) -> Result<Vec<ClassOutcome>> {
    if diseases.is_empty() {
        return Err(Error::invalid("at least one disease class is required"));
    }
    let mut outcomes = Vec::with_capacity(diseases.len());
    for (ci, disease) in diseases.iter().enumerate() {
        let ci = ci as u64;
        let train_h = sample_class(healthy, noise, n_train, protocol_seed(seed, ci, 0))?;
        let train_d = sample_class(disease, noise, n_train, protocol_seed(seed, ci, 1))?;
        let val_h = sample_class(healthy, noise, n_validation, protocol_seed(seed, ci, 2))?;
        let val_d = sample_class(disease, noise, n_validation, protocol_seed(seed, ci, 3))?;
        let model = train_svm(&train_d, &train_h, &SvmHyperParams::default())?;
        let report = evaluate(&model, &val_d, &val_h, 2 * n_train, seed)?;
        let guideline = asge_check(&report);
        outcomes.push(ClassOutcome { disease: disease.name.clone(), report, guideline });
    }
    Ok(outcomes)
}

/// Protocol results as CSV.
pub fn outcomes_csv(outcomes: &[ClassOutcome]) -> String {
    let mut out = String::from(
        "disease,sensitivity,specificity,n_train,n_validation,seed,pass,sens_margin,spec_margin\n",
    );
    for o in outcomes {
        out.push_str(&format!(
            "{},{:.6},{:.6},{},{},{},{},{:.6},{:.6}\n",
            o.disease,
            o.report.sensitivity,
            o.report.specificity,
            o.report.n_train,
            o.report.n_validation,
            o.report.seed,
            u8::from(o.guideline.pass),
            o.guideline.sensitivity_margin,
            o.guideline.specificity_margin,
        ));
    }
    out
}
