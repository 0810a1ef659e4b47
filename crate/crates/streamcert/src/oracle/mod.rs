//! Independent verification oracles.
//!
//! The heart of this module is exact enumeration on small discrete instances:
//! streams over a finite alphabet with an explicit smoothing kernel, where
//! the smoothed performance is a finite sum and the per-step and overall
//! performance bounds can be checked with no sampling error. Alongside it
//! live the quadrature oracles ([`quad`]) and the finite-difference gradient
//! check ([`gradcheck`]); everything here deliberately avoids the closed-form
//! code paths it is meant to verify.

pub mod gradcheck;
pub mod quad;

pub use gradcheck::finite_diff_check;
pub use quad::numeric_tv;

use crate::error::{Error, Result};
use crate::model::Architecture;
use crate::rng::{substream, tag};
use crate::smoothing::{concave_upper_envelope, special, PsiEnvelope};
use rand::Rng;

const MAX_ENUMERATION: usize = 100_000;
const SLACK: f64 = 1e-9;

/// A finite-alphabet stream instance with an explicit smoothing kernel,
/// distance matrix and per-step performance tables, small enough that the
/// smoothed performance is computable by exact summation.
#[derive(Debug, Clone)]
pub struct DiscreteInstance {
    /// Alphabet size `m`; items are integers `0..m`.
    pub alphabet: usize,
    /// Window size.
    pub window: usize,
    /// Row-stochastic smoothing kernel: `kernel[x][y] = P(y | x)`.
    pub kernel: Vec<Vec<f64>>,
    /// Symmetric nonnegative distances with zero diagonal.
    pub distances: Vec<Vec<f64>>,
    /// Per-step performance tables in `[0, 1]`; `perf_tables[i-1]` has
    /// `m^min(i, w)` entries indexed by [`tuple_code`] (oldest digit first).
    pub perf_tables: Vec<Vec<f64>>,
    /// The clean stream.
    pub clean: Vec<usize>,
}

/// Adversarial data for an instance, one variant per threat model.
#[derive(Debug, Clone)]
pub enum AdversarialData {
    /// One perturbed item per step.
    Once(Vec<usize>),
    /// `per_window[i-1][k-1]` is the `k`-th perturbation of item `i`,
    /// for `k` up to the number of windows item `i` actually appears in.
    PerWindow(Vec<Vec<usize>>),
}

/// Encodes a window tuple (oldest first) as a table index.
pub fn tuple_code(items: &[usize], alphabet: usize) -> usize {
    items.iter().fold(0, |code, &x| code * alphabet + x)
}

impl DiscreteInstance {
    pub fn t(&self) -> usize {
        self.clean.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.alphabet;
        if m == 0 || self.window == 0 || self.clean.is_empty() {
            return Err(Error::domain("instance needs m >= 1, w >= 1, t >= 1"));
        }
        if self.kernel.len() != m || self.distances.len() != m {
            return Err(Error::domain("kernel and distance matrices must be m x m"));
        }
        for row in &self.kernel {
            if row.len() != m {
                return Err(Error::domain("kernel rows must have length m"));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 || row.iter().any(|&p| p < 0.0) {
                return Err(Error::domain(format!("kernel row sums to {sum}, not 1")));
            }
        }
        for a in 0..m {
            if self.distances[a].len() != m || self.distances[a][a] != 0.0 {
                return Err(Error::domain("distance matrix needs zero diagonal"));
            }
            for b in 0..m {
                let d = self.distances[a][b];
                if d < 0.0 || (self.distances[b][a] - d).abs() > 1e-12 {
                    return Err(Error::domain("distance matrix must be symmetric nonnegative"));
                }
            }
        }
        if self.perf_tables.len() != self.t() {
            return Err(Error::domain("need one performance table per step"));
        }
        for (i, table) in self.perf_tables.iter().enumerate() {
            let s = (i + 1).min(self.window);
            if table.len() != m.pow(s as u32) {
                return Err(Error::domain(format!(
                    "performance table {} has {} entries, expected m^{s}",
                    i + 1,
                    table.len()
                )));
            }
            if table.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::domain("performance values must lie in [0, 1]"));
            }
        }
        if self.clean.iter().any(|&x| x >= m) {
            return Err(Error::domain("stream items must lie in the alphabet"));
        }
        Ok(())
    }

    fn check_size(&self) -> Result<()> {
        let per_step = (self.alphabet as u64).pow(self.window as u32);
        if per_step > MAX_ENUMERATION as u64 {
            return Err(Error::TooLarge(format!(
                "m^w = {per_step} exceeds the enumeration limit {MAX_ENUMERATION}"
            )));
        }
        Ok(())
    }

    /// The clean window (oldest first) ending at 1-based step `i`.
    fn clean_window(&self, i: usize) -> Vec<usize> {
        let s = i.min(self.window);
        self.clean[i - s..i].to_vec()
    }

    /// The adversarial window ending at step `i` under the given data: for
    /// the once model the perturbed items simply replace the originals; for
    /// the per-window model the slot holding item `idx` uses its
    /// `(i + 1 - idx)`-th perturbation.
    fn adversarial_window(&self, i: usize, adv: &AdversarialData) -> Vec<usize> {
        let s = i.min(self.window);
        (i - s + 1..=i)
            .map(|idx| match adv {
                AdversarialData::Once(stream) => stream[idx - 1],
                AdversarialData::PerWindow(per) => {
                    let k = i + 1 - idx;
                    per[idx - 1].get(k - 1).copied().unwrap_or(self.clean[idx - 1])
                }
            })
            .collect()
    }

    /// Exact smoothed performance of one window: the expectation of the
    /// step's performance table over independent kernel noise per slot.
    pub fn exact_smoothed_window_perf(&self, i: usize, window_items: &[usize]) -> f64 {
        let m = self.alphabet;
        let s = window_items.len();
        let table = &self.perf_tables[i - 1];
        let total = m.pow(s as u32);
        let mut acc = 0.0;
        for code in 0..total {
            // Decode noisy tuple digits, newest last.
            let mut weight = 1.0;
            let mut rem = code;
            for pos in (0..s).rev() {
                let digit = rem % m;
                rem /= m;
                weight *= self.kernel[window_items[pos]][digit];
            }
            if weight > 0.0 {
                acc += weight * table[code];
            }
        }
        acc
    }

    /// Realized average budget of adversarial data under its own threat
    /// model's normalization.
    pub fn realized_epsilon(&self, adv: &AdversarialData) -> f64 {
        match adv {
            AdversarialData::Once(stream) => {
                let total: f64 = self
                    .clean
                    .iter()
                    .zip(stream)
                    .map(|(&a, &b)| self.distances[a][b])
                    .sum();
                total / self.t() as f64
            }
            AdversarialData::PerWindow(per) => {
                let total: f64 = self
                    .clean
                    .iter()
                    .zip(per)
                    .map(|(&a, ks)| ks.iter().map(|&b| self.distances[a][b]).sum::<f64>())
                    .sum();
                total / (self.window * self.t()) as f64
            }
        }
    }
}

/// Exact `Z~` and per-step smoothed performances of the clean stream.
pub fn exact_smoothed_stream_perf(instance: &DiscreteInstance) -> Result<(f64, Vec<f64>)> {
    instance.validate()?;
    instance.check_size()?;
    let per_step: Vec<f64> = (1..=instance.t())
        .map(|i| instance.exact_smoothed_window_perf(i, &instance.clean_window(i)))
        .collect();
    let z = per_step.iter().sum::<f64>() / instance.t() as f64;
    Ok((z, per_step))
}

/// The tightest valid concave TV bound for a discrete kernel: all pairwise
/// total variations plotted against their distances, then the concave upper
/// envelope.
pub fn tightest_psi(instance: &DiscreteInstance) -> Result<PsiEnvelope> {
    let m = instance.alphabet;
    let mut samples = Vec::with_capacity(m * (m + 1) / 2);
    for a in 0..m {
        for b in a..m {
            samples.push((
                instance.distances[a][b],
                quad::discrete_tv(&instance.kernel[a], &instance.kernel[b]),
            ));
        }
    }
    concave_upper_envelope(&samples)
}

/// One per-step bound check: `lhs = |f~_i(clean) - f~_i(adv)|` against the
/// sum-of-psi bound over the window's perturbation distances.
#[derive(Debug, Clone)]
pub struct StepCheck {
    pub step: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Result of checking the per-step and overall bounds on one instance.
#[derive(Debug, Clone)]
pub struct LemmaCheck {
    pub per_step: Vec<StepCheck>,
    pub clean_z: f64,
    pub adversarial_z: f64,
    pub overall_lhs: f64,
    pub overall_rhs: f64,
    pub realized_epsilon: f64,
    pub holds: bool,
}

/// Verifies the per-step bound (sum of `psi` over perturbed window slots) and
/// the overall bound `|Z~ - Z~'| <= w psi(eps)` by exact enumeration.
///
/// `psi_env` must dominate the kernel's pairwise TVs — use [`tightest_psi`].
/// Concavity and monotonicity are structural invariants of [`PsiEnvelope`],
/// so any supplied envelope is a valid bound shape by construction.
pub fn verify_lemma_bounds(
    instance: &DiscreteInstance,
    adv: &AdversarialData,
    psi_env: &PsiEnvelope,
) -> Result<LemmaCheck> {
    instance.validate()?;
    instance.check_size()?;
    let t = instance.t();
    match adv {
        AdversarialData::Once(stream) => {
            if stream.len() != t || stream.iter().any(|&x| x >= instance.alphabet) {
                return Err(Error::domain("once-mode data needs one valid item per step"));
            }
        }
        AdversarialData::PerWindow(per) => {
            if per.len() != t {
                return Err(Error::domain("per-window data needs one entry per step"));
            }
            for (idx0, ks) in per.iter().enumerate() {
                let realized = instance.window.min(t - idx0);
                if ks.len() > realized || ks.iter().any(|&x| x >= instance.alphabet) {
                    return Err(Error::domain(format!(
                        "item {} has {} perturbations but appears in {realized} windows",
                        idx0 + 1,
                        ks.len()
                    )));
                }
            }
        }
    }

    let mut per_step = Vec::with_capacity(t);
    let mut clean_total = 0.0;
    let mut adv_total = 0.0;
    for i in 1..=t {
        let clean_window = instance.clean_window(i);
        let adv_window = instance.adversarial_window(i, adv);
        let clean_perf = instance.exact_smoothed_window_perf(i, &clean_window);
        let adv_perf = instance.exact_smoothed_window_perf(i, &adv_window);
        clean_total += clean_perf;
        adv_total += adv_perf;

        let s = i.min(instance.window);
        let mut rhs = 0.0;
        for (pos, idx) in (i - s + 1..=i).enumerate() {
            let original = instance.clean[idx - 1];
            let perturbed = adv_window[pos];
            rhs += psi_env.value_at(instance.distances[original][perturbed])?;
        }
        let lhs = (clean_perf - adv_perf).abs();
        per_step.push(StepCheck {
            step: i,
            lhs,
            rhs,
            holds: lhs <= rhs + SLACK,
        });
    }

    let clean_z = clean_total / t as f64;
    let adversarial_z = adv_total / t as f64;
    let overall_lhs = (clean_z - adversarial_z).abs();
    let realized_epsilon = instance.realized_epsilon(adv);
    let overall_rhs =
        (instance.window as f64 * psi_env.value_at(realized_epsilon)?).min(1.0);
    let holds = per_step.iter().all(|c| c.holds) && overall_lhs <= overall_rhs + SLACK;
    Ok(LemmaCheck {
        per_step,
        clean_z,
        adversarial_z,
        overall_lhs,
        overall_rhs,
        realized_epsilon,
        holds,
    })
}

/// Draws a random instance plus adversarial data (mode alternating with the
/// index), deterministic per `(seed, index)`.
pub fn random_instance(seed: u64, index: u64) -> (DiscreteInstance, AdversarialData) {
    let mut rng = substream(seed, &[tag::ORACLE_INSTANCE, index]);
    let m = rng.random_range(2..=5usize);
    let t = rng.random_range(1..=6usize);
    let w = rng.random_range(1..=3usize);

    let kernel: Vec<Vec<f64>> = match rng.random_range(0..10u32) {
        0 => (0..m)
            .map(|a| (0..m).map(|b| if a == b { 1.0 } else { 0.0 }).collect())
            .collect(),
        1 => vec![vec![1.0 / m as f64; m]; m],
        _ => (0..m)
            .map(|_| {
                let raw: Vec<f64> = (0..m).map(|_| -rng.random::<f64>().max(1e-12).ln()).collect();
                let sum: f64 = raw.iter().sum();
                raw.into_iter().map(|x| x / sum).collect()
            })
            .collect(),
    };

    let mut distances = vec![vec![0.0; m]; m];
    for a in 0..m {
        for b in a + 1..m {
            let d = 0.1 + 1.9 * rng.random::<f64>();
            distances[a][b] = d;
            distances[b][a] = d;
        }
    }

    let perf_tables: Vec<Vec<f64>> = (1..=t)
        .map(|i| {
            let s = i.min(w);
            let sharp = rng.random::<f64>() < 0.3;
            (0..m.pow(s as u32))
                .map(|_| {
                    let v = rng.random::<f64>();
                    if sharp {
                        v.round()
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect();

    let clean: Vec<usize> = (0..t).map(|_| rng.random_range(0..m)).collect();

    let adv = if index % 2 == 0 {
        AdversarialData::Once((0..t).map(|_| rng.random_range(0..m)).collect())
    } else {
        AdversarialData::PerWindow(
            (1..=t)
                .map(|idx| {
                    let realized = w.min(t - idx + 1);
                    (0..realized).map(|_| rng.random_range(0..m)).collect()
                })
                .collect(),
        )
    };

    (
        DiscreteInstance {
            alphabet: m,
            window: w,
            kernel,
            distances,
            perf_tables,
            clean,
        },
        adv,
    )
}

/// Outcome of one named verification section.
#[derive(Debug, Clone)]
pub struct SectionResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl SectionResult {
    fn pass(name: &str, detail: String) -> Self {
        SectionResult {
            name: name.into(),
            passed: true,
            detail,
        }
    }

    fn fail(name: &str, detail: String) -> Self {
        SectionResult {
            name: name.into(),
            passed: false,
            detail,
        }
    }
}

/// Full verification report; `passed` is the conjunction of all sections.
#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub sections: Vec<SectionResult>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.sections.iter().all(|s| s.passed)
    }
}

/// Special functions against the quadrature oracles: erf and the normal CDF
/// at 50 points within 1e-6, quantile round trip within 1e-5.
pub fn check_special_functions() -> SectionResult {
    let name = "special-functions";
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let x = -5.0 + 10.0 * i as f64 / 49.0;
        let erf_err = (special::erf_approx(x).unwrap() - quad::erf_by_quadrature(x)).abs();
        let cdf_err =
            (special::std_normal_cdf(x).unwrap() - quad::std_normal_cdf_by_quadrature(x)).abs();
        worst = worst.max(erf_err).max(cdf_err);
        if erf_err > 1e-6 || cdf_err > 1e-6 {
            return SectionResult::fail(
                name,
                format!("x={x}: erf error {erf_err:.2e}, cdf error {cdf_err:.2e}"),
            );
        }
    }
    let mut worst_rt: f64 = 0.0;
    for i in 1..50 {
        let p = i as f64 / 50.0;
        let rt = (special::std_normal_cdf(special::std_normal_quantile(p).unwrap()).unwrap() - p)
            .abs();
        worst_rt = worst_rt.max(rt);
        if rt > 1e-5 {
            return SectionResult::fail(name, format!("quantile round trip at p={p}: {rt:.2e}"));
        }
    }
    SectionResult::pass(
        name,
        format!("max error {worst:.2e}, max round-trip error {worst_rt:.2e}"),
    )
}

/// Closed-form Gaussian psi against numerically integrated total variation
/// for sigma in {0.5, 1, 2} over 25 distances in [0, 6 sigma], within 1e-3.
pub fn check_psi_tv_agreement() -> SectionResult {
    let name = "psi-tv-agreement";
    let mut worst: f64 = 0.0;
    for sigma in [0.5, 1.0, 2.0] {
        let spec = match crate::smoothing::SmoothingSpec::gaussian_iso(sigma) {
            Ok(s) => s,
            Err(e) => return SectionResult::fail(name, e.to_string()),
        };
        for i in 0..25 {
            let d = 6.0 * sigma * i as f64 / 24.0;
            let a = crate::smoothing::psi(&spec, d).unwrap();
            let b = quad::univariate_normal_tv(sigma, d).unwrap();
            let err = (a - b).abs();
            worst = worst.max(err);
            if err > 1e-3 {
                return SectionResult::fail(
                    name,
                    format!("sigma={sigma}, d={d}: psi={a}, tv={b}, error {err:.2e}"),
                );
            }
        }
    }
    SectionResult::pass(name, format!("max |psi - tv| = {worst:.2e}"))
}

/// Per-step and overall bounds on `count` random instances; any violation
/// fails the section with a dump of the offending instance.
pub fn check_lemma_bounds(count: u64, seed: u64) -> SectionResult {
    let name = "lemma-theorem-bounds";
    for index in 0..count {
        let (instance, adv) = random_instance(seed, index);
        let psi_env = match tightest_psi(&instance) {
            Ok(env) => env,
            Err(e) => return SectionResult::fail(name, format!("instance {index}: {e}")),
        };
        match verify_lemma_bounds(&instance, &adv, &psi_env) {
            Ok(check) if check.holds => {}
            Ok(check) => {
                return SectionResult::fail(
                    name,
                    format!(
                        "instance {index} violates the bound:\n{instance:#?}\n{adv:#?}\n{check:#?}"
                    ),
                )
            }
            Err(e) => return SectionResult::fail(name, format!("instance {index}: {e}")),
        }
    }
    SectionResult::pass(name, format!("{count} instances, zero violations"))
}

/// Analytic input gradients against central finite differences over `count`
/// random (model, window) pairs per architecture, within 1e-4.
pub fn check_gradients(count: u64, seed: u64) -> SectionResult {
    let name = "gradient-checks";
    let mut worst: f64 = 0.0;
    for (arch_idx, arch) in [Architecture::Linear, Architecture::Mlp1 { hidden: 6 }]
        .into_iter()
        .enumerate()
    {
        for k in 0..count {
            let pair_seed = seed ^ ((arch_idx as u64) << 32) ^ k;
            let mut rng = substream(pair_seed, &[0xF0, 3]);
            let w = rng.random_range(1..=3usize);
            let dim = rng.random_range(1..=4usize);
            let classes = rng.random_range(2..=4usize);
            let s = rng.random_range(1..=w);
            let model = match gradcheck::random_model(arch, w, dim, classes, pair_seed) {
                Ok(m) => m,
                Err(e) => return SectionResult::fail(name, e.to_string()),
            };
            let window = gradcheck::random_window(s, dim, w, pair_seed ^ 0xABCD);
            let target = rng.random_range(0..classes);
            match finite_diff_check(&model, &window, target) {
                Ok(err) => {
                    worst = worst.max(err);
                    if err > 1e-4 {
                        return SectionResult::fail(
                            name,
                            format!("{arch:?} pair {k}: relative error {err:.2e}"),
                        );
                    }
                }
                Err(e) => return SectionResult::fail(name, e.to_string()),
            }
        }
    }
    SectionResult::pass(name, format!("max relative error {worst:.2e}"))
}

/// Runs every oracle section; used by the `verify` CLI subcommand.
pub fn run_verification_suite(instances: u64, seed: u64) -> VerificationReport {
    VerificationReport {
        sections: vec![
            check_special_functions(),
            check_psi_tv_agreement(),
            check_lemma_bounds(instances, seed),
            check_gradients(100, seed),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_kernel(m: usize) -> Vec<Vec<f64>> {
        (0..m)
            .map(|a| (0..m).map(|b| if a == b { 1.0 } else { 0.0 }).collect())
            .collect()
    }

    fn line_distances(m: usize) -> Vec<Vec<f64>> {
        (0..m)
            .map(|a| (0..m).map(|b| (a as f64 - b as f64).abs()).collect())
            .collect()
    }

    #[test]
    fn identity_kernel_reproduces_clean_performance() {
        let (instance, _) = random_instance(1, 4);
        let instance = DiscreteInstance {
            kernel: identity_kernel(instance.alphabet),
            ..instance
        };
        let (_, per_step) = exact_smoothed_stream_perf(&instance).unwrap();
        for (i, smoothed) in per_step.iter().enumerate() {
            let window = instance.clean_window(i + 1);
            let clean = instance.perf_tables[i][tuple_code(&window, instance.alphabet)];
            assert!((smoothed - clean).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_kernel_ignores_the_stream() {
        let (instance, _) = random_instance(2, 6);
        let m = instance.alphabet;
        let uniform = DiscreteInstance {
            kernel: vec![vec![1.0 / m as f64; m]; m],
            ..instance
        };
        let (_, original) = exact_smoothed_stream_perf(&uniform).unwrap();
        let shifted = DiscreteInstance {
            clean: uniform.clean.iter().map(|&x| (x + 1) % m).collect(),
            ..uniform
        };
        let (_, moved) = exact_smoothed_stream_perf(&shifted).unwrap();
        for (a, b) in original.iter().zip(&moved) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn enumeration_matches_monte_carlo() {
        let (instance, _) = random_instance(3, 8);
        let (z_exact, _) = exact_smoothed_stream_perf(&instance).unwrap();
        // Monte Carlo cross-check with 1e5 stream draws.
        let mut rng = substream(99, &[0x55]);
        let reps = 100_000;
        let mut samples = Vec::with_capacity(reps);
        for _ in 0..reps {
            let mut total = 0.0;
            for i in 1..=instance.t() {
                let window = instance.clean_window(i);
                let noisy: Vec<usize> = window
                    .iter()
                    .map(|&x| {
                        let u: f64 = rng.random();
                        let mut acc = 0.0;
                        let row = &instance.kernel[x];
                        for (y, &p) in row.iter().enumerate() {
                            acc += p;
                            if u < acc {
                                return y;
                            }
                        }
                        row.len() - 1
                    })
                    .collect();
                total += instance.perf_tables[i - 1][tuple_code(&noisy, instance.alphabet)];
            }
            samples.push(total / instance.t() as f64);
        }
        let (mean, stderr) = crate::vecops::mean_stderr(&samples);
        assert!(
            (mean - z_exact).abs() <= 3.0 * stderr.max(1e-6),
            "MC {mean} vs exact {z_exact} (stderr {stderr})"
        );
    }

    #[test]
    fn size_guard_rejects_large_instances() {
        let m = 50;
        let instance = DiscreteInstance {
            alphabet: m,
            window: 3,
            kernel: vec![vec![1.0 / m as f64; m]; m],
            distances: vec![vec![0.0; m]; m],
            perf_tables: vec![vec![0.0; m]],
            clean: vec![0],
        };
        assert!(matches!(
            exact_smoothed_stream_perf(&instance),
            Err(Error::TooLarge(_))
        ));
    }

    #[test]
    fn clean_adversary_has_zero_lhs() {
        let (instance, _) = random_instance(5, 10);
        let adv = AdversarialData::Once(instance.clean.clone());
        let psi_env = tightest_psi(&instance).unwrap();
        let check = verify_lemma_bounds(&instance, &adv, &psi_env).unwrap();
        assert!(check.holds);
        assert!(check.overall_lhs < 1e-15);
        for step in &check.per_step {
            assert!(step.lhs < 1e-15);
        }
    }

    #[test]
    fn bound_is_tight_for_the_tv_maximizing_event() {
        // Single step, w = 1, f = indicator of the set where the clean row
        // exceeds the adversarial row: the performance drop equals the TV.
        let kernel = [vec![0.6, 0.3, 0.1], vec![0.1, 0.2, 0.7]];
        let f: Vec<f64> = (0..3)
            .map(|y| if kernel[0][y] > kernel[1][y] { 1.0 } else { 0.0 })
            .collect();
        // Pad the kernel to a square alphabet of 3 by adding a dummy row.
        let kernel = vec![kernel[0].clone(), kernel[1].clone(), vec![1.0, 0.0, 0.0]];
        let instance = DiscreteInstance {
            alphabet: 3,
            window: 1,
            kernel: kernel.clone(),
            distances: line_distances(3),
            perf_tables: vec![f],
            clean: vec![0],
        };
        let adv = AdversarialData::Once(vec![1]);
        let psi_env = tightest_psi(&instance).unwrap();
        let check = verify_lemma_bounds(&instance, &adv, &psi_env).unwrap();
        let tv = quad::discrete_tv(&kernel[0], &kernel[1]);
        assert!((check.per_step[0].lhs - tv).abs() < 1e-12);
        assert!(check.holds);
    }

    #[test]
    fn random_instances_have_no_violations() {
        let section = check_lemma_bounds(60, 7);
        assert!(section.passed, "{}", section.detail);
    }

    #[test]
    fn verifier_detects_a_psi_that_is_too_small() {
        // Same construction as the tightness test: lhs equals the pairwise
        // TV exactly, so any envelope scaled below the TV must be flagged.
        let kernel = vec![
            vec![0.6, 0.3, 0.1],
            vec![0.1, 0.2, 0.7],
            vec![1.0, 0.0, 0.0],
        ];
        let f: Vec<f64> = (0..3)
            .map(|y| if kernel[0][y] > kernel[1][y] { 1.0 } else { 0.0 })
            .collect();
        let instance = DiscreteInstance {
            alphabet: 3,
            window: 1,
            kernel,
            distances: line_distances(3),
            perf_tables: vec![f],
            clean: vec![0],
        };
        let adv = AdversarialData::Once(vec![1]);
        let tight = tightest_psi(&instance).unwrap();
        let weakened = crate::smoothing::PsiEnvelope::from_knots(
            tight
                .knots()
                .iter()
                .map(|&(d, v)| (d, 0.5 * v))
                .collect(),
        )
        .unwrap();
        let check = verify_lemma_bounds(&instance, &adv, &weakened).unwrap();
        assert!(!check.holds, "weakened psi should violate the bound");
    }

    #[test]
    fn per_window_data_shapes_are_validated() {
        let (instance, _) = random_instance(11, 1);
        let t = instance.t();
        let bad = AdversarialData::PerWindow(vec![vec![0; instance.window + 4]; t]);
        let psi_env = tightest_psi(&instance).unwrap();
        assert!(verify_lemma_bounds(&instance, &bad, &psi_env).is_err());
    }

    #[test]
    fn verification_suite_smoke() {
        let report = run_verification_suite(10, 3);
        assert!(report.passed(), "{:#?}", report.sections);
    }
}
