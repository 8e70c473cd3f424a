//! Smoothness scoring and policy-smoothness diagnostics.
//!
//! The score `Sm = (2 / (n f_s)) * sum_i M_i f_i` is a frequency-weighted
//! average of the action signal's one-sided amplitude spectrum: higher values
//! indicate more high-frequency content, so lower is smoother. Spectra come
//! from an iterative radix-2 FFT on the signal zero-padded to the next power
//! of two; frequencies use the padded length, the DC bin is excluded, raw
//! magnitudes are used (no window, no 2/N rescaling — the front factor above
//! carries all normalization), and `n` is the number of one-sided bins.
//! Note that zero-padding a non-zero constant signal of non-power-of-two
//! length introduces a genuine step edge, so its score is slightly positive;
//! constant-zero signals and power-of-two constants score exactly zero.
//!
//! Two probes back the transition-noise analysis: `check_similar_state_bound`
//! verifies empirically that any two next states reachable from the same
//! state-action pair stay within `2 * K_xi * sigma_xi` of each other, and
//! `probe_composite_lipschitz` measures the policy-through-dynamics ratio
//! `d_A(pi(T(s,a,xi1)), pi(T(s,a,xi2))) / d_Xi(xi1, xi2)`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::env::{l2_distance, Env, EnvRng};
use crate::error::{Error, Result};

/// Smallest power of two >= n (n >= 1).
pub fn next_pow2(n: usize) -> usize {
    n.next_power_of_two()
}

/// In-place iterative radix-2 Cooley-Tukey transform. `re` and `im` must
/// have equal power-of-two length. Twiddles are computed directly per
/// butterfly (no recurrence drift).
pub fn fft_inplace(re: &mut [f64], im: &mut [f64]) -> Result<()> {
    let n = re.len();
    if n != im.len() {
        return Err(Error::contract(format!("fft buffers differ: {} vs {}", n, im.len())));
    }
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::contract(format!("fft length {n} is not a power of two")));
    }
    // Bit-reversal permutation.
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let base = -2.0 * std::f64::consts::PI / len as f64;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let ang = base * k as f64;
                let (wr, wi) = (ang.cos(), ang.sin());
                let (ur, ui) = (re[start + k], im[start + k]);
                let (xr, xi) = (re[start + k + half], im[start + k + half]);
                let vr = xr * wr - xi * wi;
                let vi = xr * wi + xi * wr;
                re[start + k] = ur + vr;
                im[start + k] = ui + vi;
                re[start + k + half] = ur - vr;
                im[start + k + half] = ui - vi;
            }
        }
        len <<= 1;
    }
    Ok(())
}

/// One-sided amplitude spectrum: bins `i = 1 ..= N/2` of the padded length
/// `N`, with `magnitudes[i-1] = |X_i|` and `frequencies[i-1] = i * f_s / N`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub magnitudes: Vec<f64>,
    pub frequencies: Vec<f64>,
    /// Padded transform length.
    pub n_fft: usize,
}

fn check_signal(signal: &[f64], f_s: f64) -> Result<()> {
    if signal.len() < 2 {
        return Err(Error::contract(format!("spectrum needs length >= 2, got {}", signal.len())));
    }
    if !(f_s > 0.0) {
        return Err(Error::contract(format!("sampling frequency must be positive, got {f_s}")));
    }
    if signal.iter().any(|x| !x.is_finite()) {
        return Err(Error::numeric("non-finite sample in signal"));
    }
    Ok(())
}

fn one_sided(re: &[f64], im: &[f64], f_s: f64) -> Spectrum {
    let n = re.len();
    let half = n / 2;
    let mut magnitudes = Vec::with_capacity(half);
    let mut frequencies = Vec::with_capacity(half);
    for i in 1..=half {
        magnitudes.push((re[i] * re[i] + im[i] * im[i]).sqrt());
        frequencies.push(i as f64 * f_s / n as f64);
    }
    Spectrum { magnitudes, frequencies, n_fft: n }
}

/// FFT-backed one-sided amplitude spectrum of a raw (untrended, unwindowed)
/// signal, zero-padded to the next power of two.
pub fn dft_magnitudes(signal: &[f64], f_s: f64) -> Result<Spectrum> {
    check_signal(signal, f_s)?;
    let n = next_pow2(signal.len());
    let mut re = vec![0.0; n];
    re[..signal.len()].copy_from_slice(signal);
    let mut im = vec![0.0; n];
    fft_inplace(&mut re, &mut im)?;
    Ok(one_sided(&re, &im, f_s))
}

/// Direct O(n^2) summation with identical padding and bin conventions;
/// reference implementation for validating the FFT path.
pub fn dft_magnitudes_reference(signal: &[f64], f_s: f64) -> Result<Spectrum> {
    check_signal(signal, f_s)?;
    let n = next_pow2(signal.len());
    let mut re = vec![0.0; n];
    let mut im = vec![0.0; n];
    for (k, (rk, ik)) in re.iter_mut().zip(im.iter_mut()).enumerate() {
        for (t, &x) in signal.iter().enumerate() {
            let ang = -2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
            *rk += x * ang.cos();
            *ik += x * ang.sin();
        }
    }
    Ok(one_sided(&re, &im, f_s))
}

fn sm_from_spectrum(spectrum: &Spectrum, f_s: f64) -> f64 {
    let n_bins = spectrum.magnitudes.len();
    if n_bins == 0 {
        return 0.0;
    }
    let weighted: f64 = spectrum
        .magnitudes
        .iter()
        .zip(&spectrum.frequencies)
        .map(|(m, f)| m * f)
        .sum();
    2.0 / (n_bins as f64 * f_s) * weighted
}

/// Smoothness score of a single one-dimensional signal via the FFT path.
pub fn smoothness_of_signal(signal: &[f64], f_s: f64) -> Result<f64> {
    Ok(sm_from_spectrum(&dft_magnitudes(signal, f_s)?, f_s))
}

/// Smoothness score via the O(n^2) reference spectrum.
pub fn smoothness_of_signal_reference(signal: &[f64], f_s: f64) -> Result<f64> {
    Ok(sm_from_spectrum(&dft_magnitudes_reference(signal, f_s)?, f_s))
}

/// Executed actions of one evaluation episode, `steps x action_dim`, sampled
/// at `f_s` Hz.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ActionTrace {
    pub episode: usize,
    pub f_s: f64,
    pub actions: Vec<Vec<f64>>,
}

impl ActionTrace {
    pub fn new(episode: usize, f_s: f64, actions: Vec<Vec<f64>>) -> Result<Self> {
        let trace = ActionTrace { episode, f_s, actions };
        trace.validate()?;
        Ok(trace)
    }

    pub fn action_dim(&self) -> usize {
        self.actions.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_s > 0.0) {
            return Err(Error::contract(format!("f_s must be positive, got {}", self.f_s)));
        }
        if self.actions.len() < 8 {
            return Err(Error::contract(format!(
                "trace needs >= 8 steps for scoring, got {}",
                self.actions.len()
            )));
        }
        let d = self.action_dim();
        if d == 0 {
            return Err(Error::contract("trace has zero action dimensions"));
        }
        for (t, row) in self.actions.iter().enumerate() {
            if row.len() != d {
                return Err(Error::contract(format!(
                    "trace row {t} has {} entries, expected {d}",
                    row.len()
                )));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::numeric(format!("non-finite action at step {t}")));
            }
        }
        Ok(())
    }

    /// One action dimension as a contiguous signal.
    pub fn column(&self, dim: usize) -> Vec<f64> {
        self.actions.iter().map(|row| row[dim]).collect()
    }
}

/// Aggregated smoothness over a set of evaluation episodes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SmoothnessReport {
    /// Per-dimension Sm, averaged over episodes.
    pub per_dim: Vec<f64>,
    /// Mean across dimensions, then across episodes.
    pub aggregate: f64,
    pub episodes: usize,
    pub return_mean: f64,
    pub return_std: f64,
}

/// Per-dimension smoothness of one trace (FFT path).
pub fn score_trace(trace: &ActionTrace) -> Result<Vec<f64>> {
    trace.validate()?;
    (0..trace.action_dim())
        .map(|d| smoothness_of_signal(&trace.column(d), trace.f_s))
        .collect()
}

/// Scores every trace and aggregates: per-dimension means over episodes, a
/// single aggregate (mean over dims then episodes), and return statistics
/// (population std). `returns[i]` is the undiscounted return of `traces[i]`.
pub fn smoothness_score(traces: &[ActionTrace], returns: &[f64]) -> Result<SmoothnessReport> {
    if traces.is_empty() {
        return Err(Error::contract("smoothness_score needs at least one trace"));
    }
    if returns.len() != traces.len() {
        return Err(Error::contract(format!(
            "{} returns for {} traces",
            returns.len(),
            traces.len()
        )));
    }
    let d = traces[0].action_dim();
    let mut per_dim = vec![0.0; d];
    let mut per_episode = Vec::with_capacity(traces.len());
    for trace in traces {
        let scores = score_trace(trace)?;
        if scores.len() != d {
            return Err(Error::contract(format!(
                "trace {} has {} dims, expected {d}",
                trace.episode,
                scores.len()
            )));
        }
        per_episode.push(scores.iter().sum::<f64>() / d as f64);
        for (acc, s) in per_dim.iter_mut().zip(&scores) {
            *acc += s;
        }
    }
    let k = traces.len() as f64;
    for v in per_dim.iter_mut() {
        *v /= k;
    }
    let aggregate = per_episode.iter().sum::<f64>() / k;
    let return_mean = returns.iter().sum::<f64>() / k;
    let return_var = returns.iter().map(|r| (r - return_mean) * (r - return_mean)).sum::<f64>() / k;
    Ok(SmoothnessReport {
        per_dim,
        aggregate,
        episodes: traces.len(),
        return_mean,
        return_std: return_var.sqrt(),
    })
}

/// Outcome of the similar-state spread check at one environment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimilarStateReport {
    pub n_anchors: usize,
    pub n_samples: usize,
    /// `2 * K_xi * sigma_xi` from the environment's declared constants.
    pub bound: f64,
    /// Largest pairwise distance observed across all anchors.
    pub max_distance: f64,
    pub worst_anchor: usize,
    pub passed: bool,
}

/// Exact max pairwise squared distance between `n` points stored row-major.
fn max_pairwise_sq(flat: &[f64], d: usize) -> f64 {
    let n = flat.len() / d;
    let mut best = 0.0f64;
    if d == 2 {
        for i in 0..n {
            let xi = flat[2 * i];
            let yi = flat[2 * i + 1];
            for j in (i + 1)..n {
                let dx = flat[2 * j] - xi;
                let dy = flat[2 * j + 1] - yi;
                best = best.max(dx * dx + dy * dy);
            }
        }
    } else {
        for i in 0..n {
            let a = &flat[i * d..(i + 1) * d];
            for j in (i + 1)..n {
                let b = &flat[j * d..(j + 1) * d];
                let mut s = 0.0;
                for (x, y) in a.iter().zip(b) {
                    let diff = y - x;
                    s += diff * diff;
                }
                best = best.max(s);
            }
        }
    }
    best
}

const ANCHOR_ACTION_SALT: u64 = 0x51ED_2700_93A3_11C7;

/// Draws `n_anchors` state-action anchors, samples `n_samples` noisy next
/// states at each, and checks the exact max pairwise distance against the
/// declared bound `2 * K_xi * sigma_xi`. Deterministic given `seed`.
pub fn check_similar_state_bound(
    env: &mut Env,
    n_anchors: usize,
    n_samples: usize,
    seed: u64,
) -> Result<SimilarStateReport> {
    if n_anchors == 0 {
        return Err(Error::contract("need at least one anchor"));
    }
    let spec = env.spec().clone();
    let bound = 2.0 * spec.noise_sensitivity * spec.noise_bound;
    let mut action_rng = EnvRng::seed_from_u64(seed ^ ANCHOR_ACTION_SALT);
    let mut max_sq = 0.0f64;
    let mut worst = 0usize;
    for k in 0..n_anchors {
        env.reset(seed.wrapping_add(k as u64));
        let s_prev = env.state().to_vec();
        let a_prev: Vec<f64> = (0..spec.action_dim)
            .map(|d| action_rng.gen_range(spec.action_low[d]..=spec.action_high[d]))
            .collect();
        let states = env.sample_similar_states(&s_prev, &a_prev, n_samples)?;
        let flat: Vec<f64> = states.into_iter().flatten().collect();
        let m = max_pairwise_sq(&flat, spec.state_dim);
        if m > max_sq {
            max_sq = m;
            worst = k;
        }
    }
    let max_distance = max_sq.sqrt();
    Ok(SimilarStateReport {
        n_anchors,
        n_samples,
        bound,
        max_distance,
        worst_anchor: worst,
        passed: max_distance <= bound * (1.0 + 1e-9),
    })
}

/// Distribution of empirical composite-Lipschitz ratios.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub n_pairs: usize,
    /// Pairs actually scored (noise pairs closer than 1e-12 are skipped).
    pub n_used: usize,
    pub max: f64,
    pub median: f64,
    pub q90: f64,
    pub mean: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

const PROBE_ACTION_SALT: u64 = 0xB7E1_5162_8AED_2A6B;

/// Samples anchor `(s, a)` pairs and two noise draws each, then measures how
/// far the policy's actions move relative to the noise separation:
/// `d_A(pi(T(s,a,xi1)), pi(T(s,a,xi2))) / d_Xi(xi1, xi2)`. The policy maps an
/// observation to an action. Deterministic given `seed`, so two policies can
/// be probed on identical anchors.
pub fn probe_composite_lipschitz(
    policy: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    env: &mut Env,
    n_pairs: usize,
    seed: u64,
) -> Result<LipschitzReport> {
    if n_pairs == 0 {
        return Err(Error::contract("need at least one probe pair"));
    }
    let spec = env.spec().clone();
    let mut action_rng = EnvRng::seed_from_u64(seed ^ PROBE_ACTION_SALT);
    let mut ratios = Vec::with_capacity(n_pairs);
    for k in 0..n_pairs {
        env.reset(seed.wrapping_add(k as u64));
        let s = env.state().to_vec();
        let a: Vec<f64> = (0..spec.action_dim)
            .map(|d| action_rng.gen_range(spec.action_low[d]..=spec.action_high[d]))
            .collect();
        let xi1 = env.sample_noise();
        let xi2 = env.sample_noise();
        let d_xi = l2_distance(&xi1, &xi2);
        if d_xi < 1e-12 {
            continue;
        }
        env.set_state(&s);
        let r1 = env.step_with_noise(&a, &xi1)?;
        env.set_state(&s);
        let r2 = env.step_with_noise(&a, &xi2)?;
        let a1 = policy(&r1.obs)?;
        let a2 = policy(&r2.obs)?;
        ratios.push(l2_distance(&a1, &a2) / d_xi);
    }
    let n_used = ratios.len();
    ratios.sort_by(|a, b| a.partial_cmp(b).expect("finite ratios"));
    let mean = if n_used == 0 { 0.0 } else { ratios.iter().sum::<f64>() / n_used as f64 };
    Ok(LipschitzReport {
        n_pairs,
        n_used,
        max: ratios.last().copied().unwrap_or(0.0),
        median: quantile(&ratios, 0.5),
        q90: quantile(&ratios, 0.9),
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Env;

    fn env(name: &str, params: &[(String, f64)], seed: u64) -> Env {
        Env::from_name(name, params, seed).unwrap()
    }

    fn param(name: &str, v: f64) -> (String, f64) {
        (name.to_string(), v)
    }

    #[test]
    fn constant_signal_has_silent_spectrum() {
        let s = dft_magnitudes(&[1.0, 1.0, 1.0, 1.0], 10.0).unwrap();
        assert_eq!(s.n_fft, 4);
        assert_eq!(s.magnitudes.len(), 2);
        for m in &s.magnitudes {
            assert!(m.abs() < 1e-12, "magnitude {m}");
        }
    }

    #[test]
    fn four_point_example_matches_hand_dft() {
        let s = dft_magnitudes(&[0.0, 1.0, 0.0, -1.0], 1.0).unwrap();
        assert!((s.magnitudes[0] - 2.0).abs() < 1e-12, "bin 1: {}", s.magnitudes[0]);
        assert!(s.magnitudes[1].abs() < 1e-12, "nyquist: {}", s.magnitudes[1]);
        assert!((s.frequencies[0] - 0.25).abs() < 1e-15);
        assert!((s.frequencies[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn parseval_identity_holds() {
        let mut rng = EnvRng::seed_from_u64(11);
        for &len in &[2usize, 5, 16, 100, 128] {
            let signal: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n = next_pow2(len);
            let mut re = vec![0.0; n];
            re[..len].copy_from_slice(&signal);
            let mut im = vec![0.0; n];
            fft_inplace(&mut re, &mut im).unwrap();
            let time_energy: f64 = signal.iter().map(|x| x * x).sum();
            let freq_energy: f64 =
                re.iter().zip(&im).map(|(r, i)| r * r + i * i).sum::<f64>() / n as f64;
            assert!(
                (time_energy - freq_energy).abs() < 1e-9,
                "len {len}: {time_energy} vs {freq_energy}"
            );
        }
    }

    #[test]
    fn fft_matches_reference_dft() {
        let mut rng = EnvRng::seed_from_u64(5);
        for len in 2..=64usize {
            let signal: Vec<f64> = (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let fast = dft_magnitudes(&signal, 50.0).unwrap();
            let slow = dft_magnitudes_reference(&signal, 50.0).unwrap();
            assert_eq!(fast.magnitudes.len(), slow.magnitudes.len());
            for (i, (a, b)) in fast.magnitudes.iter().zip(&slow.magnitudes).enumerate() {
                assert!((a - b).abs() < 1e-9, "len {len} bin {}: {a} vs {b}", i + 1);
            }
            assert_eq!(fast.frequencies, slow.frequencies);
        }
    }

    #[test]
    fn spectrum_rejects_bad_input() {
        assert!(dft_magnitudes(&[1.0], 10.0).is_err());
        assert!(dft_magnitudes(&[1.0, 2.0], 0.0).is_err());
        assert!(dft_magnitudes(&[1.0, f64::NAN], 10.0).is_err());
        assert!(fft_inplace(&mut [0.0; 3], &mut [0.0; 3]).is_err());
        assert!(fft_inplace(&mut [0.0; 4], &mut [0.0; 2]).is_err());
    }

    #[test]
    fn constant_trace_scores_zero() {
        // Power-of-two length: no padding, all energy in the DC bin.
        let trace = ActionTrace::new(0, 20.0, vec![vec![0.7, -0.3]; 32]).unwrap();
        let report = smoothness_score(&[trace], &[-1.5]).unwrap();
        assert_eq!(report.per_dim.len(), 2);
        for v in &report.per_dim {
            assert!(v.abs() < 1e-12);
        }
        assert!(report.aggregate.abs() < 1e-12);
        assert_eq!(report.episodes, 1);
        assert_eq!(report.return_mean, -1.5);
        assert_eq!(report.return_std, 0.0);

        // All-zero trace: padding adds nothing, score is zero at any length.
        let zero = ActionTrace::new(1, 20.0, vec![vec![0.0, 0.0]; 25]).unwrap();
        let report = smoothness_score(&[zero], &[0.0]).unwrap();
        assert_eq!(report.aggregate, 0.0);
    }

    fn tone(n: usize, bin: usize) -> Vec<f64> {
        (0..n)
            .map(|t| (2.0 * std::f64::consts::PI * (bin * t) as f64 / n as f64).sin())
            .collect()
    }

    #[test]
    fn tone_frequency_scaling_and_monotonicity() {
        let f_s = 100.0;
        let low = smoothness_of_signal(&tone(64, 2), f_s).unwrap();
        let high = smoothness_of_signal(&tone(64, 8), f_s).unwrap();
        assert!((high / low - 4.0).abs() < 0.04, "ratio {}", high / low);

        let mut prev = 0.0;
        for bin in [1usize, 2, 4, 8, 16, 31] {
            let sm = smoothness_of_signal(&tone(64, bin), f_s).unwrap();
            assert!(sm > prev, "bin {bin}: {sm} not > {prev}");
            prev = sm;
        }
    }

    #[test]
    fn alternating_signal_matches_reference_and_closed_form() {
        let signal: Vec<f64> = (0..64).map(|t| if t % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let fast = smoothness_of_signal(&signal, 100.0).unwrap();
        let slow = smoothness_of_signal_reference(&signal, 100.0).unwrap();
        assert!((fast - slow).abs() < 1e-9, "{fast} vs {slow}");
        // Pure Nyquist tone: one bin with magnitude 64 at 50 Hz, 32 bins.
        assert!((fast - 2.0).abs() < 1e-9, "sm {fast}");
    }

    #[test]
    fn smoothness_scales_with_amplitude() {
        let mut rng = EnvRng::seed_from_u64(9);
        let signal: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let scaled: Vec<f64> = signal.iter().map(|x| -3.5 * x).collect();
        let a = smoothness_of_signal(&signal, 20.0).unwrap();
        let b = smoothness_of_signal(&scaled, 20.0).unwrap();
        assert!((b - 3.5 * a).abs() < 1e-9 * a.max(1.0), "{b} vs {}", 3.5 * a);
    }

    #[test]
    fn trace_and_report_contracts() {
        assert!(ActionTrace::new(0, 10.0, vec![vec![0.0]; 7]).is_err());
        assert!(ActionTrace::new(0, 0.0, vec![vec![0.0]; 10]).is_err());
        assert!(ActionTrace::new(0, 10.0, vec![vec![f64::INFINITY]; 10]).is_err());
        let ragged = ActionTrace { episode: 0, f_s: 10.0, actions: vec![vec![0.0], vec![0.0, 1.0]] };
        assert!(ragged.validate().is_err());

        let good = ActionTrace::new(0, 10.0, vec![vec![0.0]; 10]).unwrap();
        assert!(smoothness_score(&[], &[]).is_err());
        assert!(smoothness_score(&[good], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn similar_states_with_zero_noise_coincide() {
        let mut e = env("pointmass", &[param("noise_bound", 0.0)], 3);
        let report = check_similar_state_bound(&mut e, 4, 32, 17).unwrap();
        assert_eq!(report.max_distance, 0.0);
        assert_eq!(report.bound, 0.0);
        assert!(report.passed);
    }

    #[test]
    fn similar_state_bound_holds_on_default_envs() {
        for name in ["pointmass", "pendulum", "reacher"] {
            let mut e = env(name, &[], 0);
            let report = check_similar_state_bound(&mut e, 5, 300, 99).unwrap();
            assert!(report.passed, "{name}: max {} > bound {}", report.max_distance, report.bound);
            assert!(report.max_distance > 0.0, "{name}: degenerate spread");
            assert!(report.max_distance <= report.bound * (1.0 + 1e-9));
        }
    }

    #[test]
    fn understated_sensitivity_is_flagged() {
        let mut e = env("pointmass", &[param("noise_sensitivity", 0.1)], 0);
        let report = check_similar_state_bound(&mut e, 5, 300, 99).unwrap();
        assert!(!report.passed, "max {} vs bound {}", report.max_distance, report.bound);
    }

    #[test]
    fn constant_policy_has_zero_ratios() {
        let mut e = env("pointmass", &[], 1);
        let policy = |_obs: &[f64]| Ok(vec![0.3, -0.2]);
        let report = probe_composite_lipschitz(&policy, &mut e, 64, 5).unwrap();
        assert!(report.n_used > 0);
        assert_eq!(report.max, 0.0);
        assert_eq!(report.median, 0.0);
        assert_eq!(report.mean, 0.0);
    }

    #[test]
    fn linear_policy_respects_operator_norm_bound() {
        // y = W x with W = [[0.4, -0.3], [0.2, 0.1]].
        let w = [[0.4, -0.3], [0.2, 0.1]];
        let policy = move |obs: &[f64]| {
            Ok(vec![
                w[0][0] * obs[0] + w[0][1] * obs[1],
                w[1][0] * obs[0] + w[1][1] * obs[1],
            ])
        };
        // Operator norm from the eigenvalues of W^T W.
        let (a, b, c) = (
            w[0][0] * w[0][0] + w[1][0] * w[1][0],
            w[0][0] * w[0][1] + w[1][0] * w[1][1],
            w[0][1] * w[0][1] + w[1][1] * w[1][1],
        );
        let half_tr = 0.5 * (a + c);
        let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
        let op_norm = (half_tr + disc).sqrt();

        // The point-mass transition is purely additive, so state separation
        // equals noise separation and the ratio is bounded by the norm.
        let mut e = env("pointmass", &[], 2);
        let report = probe_composite_lipschitz(&policy, &mut e, 256, 7).unwrap();
        assert!(report.n_used > 200);
        assert!(
            report.max <= op_norm * (1.0 + 1e-9),
            "max ratio {} exceeds |W| = {op_norm}",
            report.max
        );
        assert!(report.median <= report.q90 + 1e-15);
        assert!(report.q90 <= report.max + 1e-15);
        assert!(report.median > 0.0);
    }

    #[test]
    fn probe_is_deterministic_per_seed() {
        let policy = |obs: &[f64]| Ok(vec![obs[0].tanh(), obs[1].sin()]);
        let mut e = env("pointmass", &[], 0);
        let a = probe_composite_lipschitz(&policy, &mut e, 50, 21).unwrap();
        let b = probe_composite_lipschitz(&policy, &mut e, 50, 21).unwrap();
        assert_eq!(a.max.to_bits(), b.max.to_bits());
        assert_eq!(a.median.to_bits(), b.median.to_bits());
        assert_eq!(a.n_used, b.n_used);
    }

    #[test]
    fn probe_rejects_empty_request() {
        let mut e = env("pointmass", &[], 0);
        let policy = |_: &[f64]| Ok(vec![0.0, 0.0]);
        assert!(probe_composite_lipschitz(&policy, &mut e, 0, 0).is_err());
        assert!(check_similar_state_bound(&mut e, 0, 10, 0).is_err());
    }
}
