use std::f64::consts::PI;

use gazelab::pupil::{
    highpass_butterworth, lf_hf_ratio, welch_psd, BandPowerResult, ButterworthHighpass, Taper,
    WelchParams,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Published mean LF / HF densities and the ratio printed next to them.
const MEAN_PSD_TABLE: [(f64, f64, f64); 5] = [
    (0.012435, 0.007911, 1.571761),
    (0.014166, 0.004847, 2.922806),
    (0.002078, 0.001196, 1.737664),
    (0.009006, 0.005037, 1.787988),
    (0.008478, 0.005566, 1.523068),
];

#[test]
fn published_band_ratios_reproduce() {
    for (lf, hf, ratio) in MEAN_PSD_TABLE {
        let r = BandPowerResult::from_means(lf, hf).unwrap();
        assert!((r.ratio - ratio).abs() < 1e-3, "{lf}/{hf}: {} vs {ratio}", r.ratio);
    }
}

/// Welch density computed straight from its definition with an O(n^2) DFT.
fn naive_welch(x: &[f64], fs: f64, n: usize, step: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect();
    let energy: f64 = w.iter().map(|v| v * v).sum();
    let mut acc = vec![0.0; n / 2 + 1];
    let mut segs = 0;
    let mut s = 0;
    while s + n <= x.len() {
        let seg = &x[s..s + n];
        let m = seg.iter().sum::<f64>() / n as f64;
        for (k, a) in acc.iter_mut().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, (&v, &wj)) in seg.iter().zip(&w).enumerate() {
                let ph = -2.0 * PI * (k * j) as f64 / n as f64;
                re += (v - m) * wj * ph.cos();
                im += (v - m) * wj * ph.sin();
            }
            *a += re * re + im * im;
        }
        segs += 1;
        s += step;
    }
    acc.iter()
        .enumerate()
        .map(|(k, &p)| {
            let two = if k == 0 || k == n / 2 { 1.0 } else { 2.0 };
            two * p / (fs * energy * segs as f64)
        })
        .collect()
}

fn tone(freq: f64) -> Vec<f64> {
    (0..1200).map(|i| 1.0 + 0.1 * (2.0 * PI * freq * i as f64 / 2.0).sin()).collect()
}

fn band_mean(freqs: &[f64], psd: &[f64], lo: f64, hi: f64) -> f64 {
    let v: Vec<f64> = freqs
        .iter()
        .zip(psd)
        .filter(|(f, _)| **f >= lo - 1e-12 && **f <= hi + 1e-12)
        .map(|(_, p)| *p)
        .collect();
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn tone_placement_matches_direct_dft() {
    for (freq, check) in [(0.10, 0), (0.30, 1)] {
        let x = tone(freq);
        let spec = welch_psd(&x, 2.0, WelchParams::default()).unwrap();
        let oracle = naive_welch(&x, 2.0, 256, 128);
        let peak = oracle.iter().cloned().fold(0.0, f64::max);
        for (a, b) in spec.psd.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-9 * peak, "{a} vs {b}");
        }
        let r = lf_hf_ratio(&spec).unwrap();
        let oracle_ratio = band_mean(&spec.freqs_hz, &oracle, 0.05, 0.15) / band_mean(&spec.freqs_hz, &oracle, 0.15, 0.45);
        assert!((r.ratio - oracle_ratio).abs() <= 1e-9 * oracle_ratio);
        if check == 0 {
            assert!(r.ratio > 5.0, "0.1 Hz tone ratio {}", r.ratio);
        } else {
            assert!(r.ratio < 0.2, "0.3 Hz tone ratio {}", r.ratio);
        }
    }
}

#[test]
fn welch_matches_oracle_for_other_tapers_and_overlaps() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<f64> = (0..700).map(|_| StandardNormal.sample(&mut rng)).collect();
    let spec = welch_psd(&x, 10.0, WelchParams { seg_len: 64, overlap_frac: 0.25, taper: Taper::Hann }).unwrap();
    let oracle = naive_welch(&x, 10.0, 64, 48);
    for (a, b) in spec.psd.iter().zip(&oracle) {
        assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-6));
    }
}

#[test]
fn welch_parseval_on_white_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let x: Vec<f64> = (0..4096).map(|_| StandardNormal.sample(&mut rng)).collect();
    let m = x.iter().sum::<f64>() / x.len() as f64;
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64;
    let spec = welch_psd(&x, 2.0, WelchParams::default()).unwrap();
    let power = spec.total_power();
    assert!((power - var).abs() <= 0.2 * var, "{power} vs {var}");
}

/// Squared magnitude of an order-`n` bilinear Butterworth high-pass with the
/// cutoff pre-warped.
fn analytic_hp_mag(f: f64, fc: f64, fs: f64, n: i32) -> f64 {
    let r = (PI * fc / fs).tan() / (PI * f / fs).tan();
    (1.0 / (1.0 + r.powi(2 * n))).sqrt()
}

#[test]
fn butterworth_response_matches_analytic_magnitude() {
    let hp = ButterworthHighpass::design(2.0, 0.03, 4).unwrap();
    for i in 1..200 {
        let f = i as f64 * 0.005;
        let got = hp.magnitude_at(f);
        let want = analytic_hp_mag(f, 0.03, 2.0, 4);
        assert!((got - want).abs() <= 1e-9 * want.max(1e-6), "{f}: {got} vs {want}");
    }
    let stop_db = -20.0 * hp.magnitude_at(0.01).log10();
    let pass_db = (20.0 * hp.magnitude_at(0.1).log10()).abs();
    assert!(stop_db >= 38.0, "stopband {stop_db} dB");
    assert!(pass_db <= 0.01, "passband {pass_db} dB");
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

#[test]
fn butterworth_measured_tone_attenuation() {
    let fs = 2.0;
    let n = 20_000;
    let hp = ButterworthHighpass::design(fs, 0.03, 4).unwrap();
    for (f, max_db, min_db) in [(0.01, f64::INFINITY, 38.0), (0.1, 0.01, -0.01)] {
        let x: Vec<f64> = (0..n).map(|i| (2.0 * PI * f * i as f64 / fs).sin()).collect();
        let y = hp.filter(&x);
        // Skip the start-up transient.
        let tail = n / 2;
        let db = 20.0 * (rms(&x[tail..]) / rms(&y[tail..])).log10();
        assert!(db >= min_db && db <= max_db, "{f} Hz single pass: {db} dB");
        let analytic = -20.0 * analytic_hp_mag(f, 0.03, fs, 4).log10();
        assert!((db - analytic).abs() < 0.05, "{f} Hz: measured {db} vs analytic {analytic}");
    }
}

#[test]
fn zero_phase_filter_has_no_lag() {
    let fs = 2.0;
    let x: Vec<f64> = (0..2000).map(|i| (2.0 * PI * 0.2 * i as f64 / fs).sin()).collect();
    let y = highpass_butterworth(&x, fs, 0.03, 4).unwrap();
    let xc = |lag: i64| -> f64 {
        (200..1800).map(|i| x[i] * y[(i as i64 + lag) as usize]).sum()
    };
    let best = (-5..=5).max_by(|&a, &b| xc(a).total_cmp(&xc(b))).unwrap();
    assert_eq!(best, 0);
}
