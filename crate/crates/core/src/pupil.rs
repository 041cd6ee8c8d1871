//! Pupil preprocessing and spectral workload / fatigue measures.
//!
//! Stages are generic over the scalar type. The two pipelines at the
//! bottom compose them:
//!
//! * workload: fence, normalize, resample, Welch PSD, LF/HF band means;
//! * fatigue: fence, normalize, smooth, resample, zero-phase Butterworth
//!   high-pass, Welch PSD, mean density over the fluctuation band.

use num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::ingest::{outer_fence_filter, resample_uniform, IngestError};
use crate::scalar::{median_interval_ms, Real};

pub const LF_BAND_HZ: (f64, f64) = (0.05, 0.15);
pub const HF_BAND_HZ: (f64, f64) = (0.15, 0.45);
pub const FATIGUE_BAND_HZ: (f64, f64) = (0.03, 0.4);
/// Coarsest spectral resolution that still leaves four bins in the LF band.
pub const MAX_BAND_RESOLUTION_HZ: f64 = 0.025;
pub const FATIGUE_MIN_DURATION_MS: u64 = 300_000;

#[derive(Debug, Error)]
pub enum PupilError {
    #[error("empty series")]
    Empty,
    #[error("series has no present values")]
    AllAbsent,
    #[error("normalization basis is not positive")]
    NonPositiveBasis,
    #[error("window length must be odd and >= 1, got {0}")]
    BadWindow(usize),
    #[error("series of {got} samples is shorter than {need}")]
    TooShort { need: usize, got: usize },
    #[error("sampling rate must be positive")]
    BadRate,
    #[error("overlap fraction must be in [0, 1)")]
    BadOverlap,
    #[error("no spectral bins in [{lo}, {hi}] Hz")]
    EmptyBand { lo: f64, hi: f64 },
    #[error("HF band mean is zero; LF/HF ratio undefined")]
    ZeroHf,
    #[error("spectral resolution {0} Hz is coarser than 0.025 Hz")]
    Resolution(f64),
    #[error("cutoff must satisfy 0 < cutoff < fs/2")]
    BadCutoff,
    #[error("filter order must be 2, 4, 6 or 8, got {0}")]
    BadOrder(usize),
    #[error("series must cover at least {need_ms} ms, covers {got_ms} ms")]
    InsufficientDuration { need_ms: u64, got_ms: u64 },
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// What a normalized pupil value is relative to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormalizationBasis {
    /// Series maximum: the largest value maps to 1.
    Max,
    /// Mean of the first `n` present values.
    Baseline { n: usize },
}

/// Divides every present value by the basis (the series maximum by
/// default). Absent values stay absent.
pub fn normalize_pupil_with<T: Real>(
    series: &[Option<T>],
    basis: NormalizationBasis,
) -> Result<Vec<Option<T>>, PupilError> {
    if series.is_empty() {
        return Err(PupilError::Empty);
    }
    let present: Vec<T> = series.iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(PupilError::AllAbsent);
    }
    let denom = match basis {
        NormalizationBasis::Max => present.iter().copied().fold(T::neg_infinity(), T::max),
        NormalizationBasis::Baseline { n } => {
            let k = n.clamp(1, present.len());
            present[..k].iter().copied().sum::<T>() / T::from_count(k)
        }
    };
    if !(denom > T::zero()) {
        return Err(PupilError::NonPositiveBasis);
    }
    Ok(series.iter().map(|v| v.map(|x| x / denom)).collect())
}

pub fn normalize_pupil<T: Real>(series: &[Option<T>]) -> Result<Vec<Option<T>>, PupilError> {
    normalize_pupil_with(series, NormalizationBasis::Max)
}

/// Centred moving mean; near the ends the window is truncated to the
/// samples available.
pub fn sliding_average<T: Real>(series: &[T], window_n: usize) -> Result<Vec<T>, PupilError> {
    if window_n == 0 || window_n % 2 == 0 {
        return Err(PupilError::BadWindow(window_n));
    }
    let half = window_n / 2;
    let n = series.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(T::zero());
    for &x in series {
        let last = *prefix.last().unwrap();
        prefix.push(last + x);
    }
    Ok((0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(half), (i + half + 1).min(n));
            (prefix[b] - prefix[a]) / T::from_count(b - a)
        })
        .collect())
}

/// Data taper applied to each Welch segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Taper {
    /// Periodic raised-cosine window.
    Hann,
    Hamming,
    Rectangular,
}

impl Taper {
    pub fn name(self) -> &'static str {
        match self {
            Taper::Hann => "hann",
            Taper::Hamming => "hamming",
            Taper::Rectangular => "rectangular",
        }
    }

    pub fn coefficients<T: Real>(self, n: usize) -> Vec<T> {
        let two_pi = T::lit(2.0) * T::PI();
        (0..n)
            .map(|i| {
                let phase = two_pi * T::from_count(i) / T::from_count(n);
                match self {
                    Taper::Hann => T::lit(0.5) - T::lit(0.5) * phase.cos(),
                    Taper::Hamming => T::lit(0.54) - T::lit(0.46) * phase.cos(),
                    Taper::Rectangular => T::one(),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchParams<T> {
    pub seg_len: usize,
    pub overlap_frac: T,
    pub taper: Taper,
}

impl<T: Real> Default for WelchParams<T> {
    fn default() -> Self {
        Self {
            seg_len: 256,
            overlap_frac: T::lit(0.5),
            taper: Taper::Hann,
        }
    }
}

/// One-sided power spectral density.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<T> {
    pub freqs_hz: Vec<T>,
    /// Density, amplitude^2 / Hz.
    pub psd: Vec<T>,
    pub resolution_hz: T,
    pub params: WelchParams<T>,
    pub segments_averaged: usize,
}

impl<T: Real> Spectrum<T> {
    /// Rectangle-rule integral of the density over all bins.
    pub fn total_power(&self) -> T {
        self.psd.iter().copied().sum::<T>() * self.resolution_hz
    }

    /// Index of the largest density bin.
    pub fn peak_bin(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.psd.iter().enumerate() {
            if p > self.psd[best] {
                best = i;
            }
        }
        best
    }

    /// Two-column CSV `freq_hz,psd`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("freq_hz,psd\n");
        for (f, p) in self.freqs_hz.iter().zip(&self.psd) {
            s.push_str(&format!("{f},{p}\n"));
        }
        s
    }
}

/// Welch's averaged modified periodogram with density scaling.
///
/// Each segment has its mean removed and is tapered before the FFT; the
/// result integrates to the signal variance.
pub fn welch_psd<T: Real>(
    series: &[T],
    fs_hz: T,
    params: WelchParams<T>,
) -> Result<Spectrum<T>, PupilError> {
    if !(fs_hz > T::zero()) || !fs_hz.is_finite() {
        return Err(PupilError::BadRate);
    }
    if !(params.overlap_frac >= T::zero() && params.overlap_frac < T::one()) {
        return Err(PupilError::BadOverlap);
    }
    let n = params.seg_len;
    if n < 2 || series.len() < n {
        return Err(PupilError::TooShort {
            need: n.max(2),
            got: series.len(),
        });
    }
    let overlap = (params.overlap_frac * T::from_count(n))
        .round()
        .to_usize()
        .unwrap_or(0);
    let step = (n - overlap.min(n - 1)).max(1);
    let taper: Vec<T> = params.taper.coefficients(n);
    let taper_energy: T = taper.iter().map(|&w| w * w).sum();
    let fft = FftPlanner::<T>::new().plan_fft_forward(n);

    let bins = n / 2 + 1;
    let mut acc = vec![T::zero(); bins];
    let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
    let mut segments = 0usize;
    let mut start = 0;
    while start + n <= series.len() {
        let seg = &series[start..start + n];
        let m = seg.iter().copied().sum::<T>() / T::from_count(n);
        for (b, (&x, &w)) in buf.iter_mut().zip(seg.iter().zip(&taper)) {
            *b = Complex::new((x - m) * w, T::zero());
        }
        fft.process(&mut buf);
        for (a, c) in acc.iter_mut().zip(&buf) {
            *a = *a + c.norm_sqr();
        }
        segments += 1;
        start += step;
    }
    let scale = T::one() / (fs_hz * taper_energy * T::from_count(segments));
    let two = T::lit(2.0);
    let psd: Vec<T> = acc
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let one_sided = k != 0 && !(n % 2 == 0 && k == n / 2);
            p * scale * if one_sided { two } else { T::one() }
        })
        .collect();
    let resolution = fs_hz / T::from_count(n);
    Ok(Spectrum {
        freqs_hz: (0..bins).map(|k| T::from_count(k) * resolution).collect(),
        psd,
        resolution_hz: resolution,
        params,
        segments_averaged: segments,
    })
}

/// Arithmetic mean of the density over bins with `lo <= f <= hi`.
pub fn band_mean<T: Real>(spec: &Spectrum<T>, lo_hz: T, hi_hz: T) -> Result<T, PupilError> {
    let eps = spec.resolution_hz * T::lit(1e-9);
    let vals: Vec<T> = spec
        .freqs_hz
        .iter()
        .zip(&spec.psd)
        .filter(|(&f, _)| f >= lo_hz - eps && f <= hi_hz + eps)
        .map(|(_, &p)| p)
        .collect();
    if !(lo_hz < hi_hz) || vals.is_empty() {
        return Err(PupilError::EmptyBand {
            lo: lo_hz.to_f64_lossy(),
            hi: hi_hz.to_f64_lossy(),
        });
    }
    Ok(vals.iter().copied().sum::<T>() / T::from_count(vals.len()))
}

/// Mean LF and HF pupil-fluctuation densities and their ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPowerResult<T> {
    pub lf_mean: T,
    pub hf_mean: T,
    pub ratio: T,
}

impl<T: Real> BandPowerResult<T> {
    pub fn from_means(lf_mean: T, hf_mean: T) -> Result<Self, PupilError> {
        if !(hf_mean > T::zero()) {
            return Err(PupilError::ZeroHf);
        }
        Ok(Self {
            lf_mean,
            hf_mean,
            ratio: lf_mean / hf_mean,
        })
    }
}

/// LF [0.05, 0.15] Hz over HF [0.15, 0.45] Hz band means.
pub fn lf_hf_ratio<T: Real>(spec: &Spectrum<T>) -> Result<BandPowerResult<T>, PupilError> {
    let res = spec.resolution_hz;
    if res > T::lit(MAX_BAND_RESOLUTION_HZ) * T::lit(1.0 + 1e-9) {
        return Err(PupilError::Resolution(res.to_f64_lossy()));
    }
    let lf = band_mean(spec, T::lit(LF_BAND_HZ.0), T::lit(LF_BAND_HZ.1))?;
    let hf = band_mean(spec, T::lit(HF_BAND_HZ.0), T::lit(HF_BAND_HZ.1))?;
    BandPowerResult::from_means(lf, hf)
}

/// Second-order section in transposed direct form II, `a0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad<T> {
    pub b: [T; 3],
    pub a: [T; 3],
}

impl<T: Real> Biquad<T> {
    fn dc_gain(&self) -> T {
        (self.b[0] + self.b[1] + self.b[2]) / (self.a[0] + self.a[1] + self.a[2])
    }

    /// State that holds the output steady for a constant input `x0`.
    fn steady_state(&self, x0: T) -> [T; 2] {
        let g = self.dc_gain();
        let z2 = (self.b[2] - self.a[2] * g) * x0;
        let z1 = (self.b[1] - self.a[1] * g) * x0 + z2;
        [z1, z2]
    }

    fn run(&self, xs: &mut [T], mut z: [T; 2]) {
        for x in xs.iter_mut() {
            let input = *x;
            let y = self.b[0] * input + z[0];
            z[0] = self.b[1] * input - self.a[1] * y + z[1];
            z[1] = self.b[2] * input - self.a[2] * y;
            *x = y;
        }
    }

    fn response(&self, w: T) -> Complex<T> {
        let z1 = Complex::new(w.cos(), -w.sin());
        let z2 = z1 * z1;
        let num = Complex::new(self.b[0], T::zero()) + z1 * self.b[1] + z2 * self.b[2];
        let den = Complex::new(self.a[0], T::zero()) + z1 * self.a[1] + z2 * self.a[2];
        num / den
    }
}

/// Digital Butterworth high-pass as a cascade of biquads.
#[derive(Debug, Clone, PartialEq)]
pub struct ButterworthHighpass<T> {
    pub fs_hz: T,
    pub cutoff_hz: T,
    pub order: usize,
    pub sections: Vec<Biquad<T>>,
}

impl<T: Real> ButterworthHighpass<T> {
    /// Bilinear-transform design with the cutoff pre-warped so the -3 dB
    /// point lands exactly on `cutoff_hz`.
    pub fn design(fs_hz: T, cutoff_hz: T, order: usize) -> Result<Self, PupilError> {
        if !matches!(order, 2 | 4 | 6 | 8) {
            return Err(PupilError::BadOrder(order));
        }
        if !(fs_hz > T::zero()) {
            return Err(PupilError::BadRate);
        }
        if !(cutoff_hz > T::zero() && cutoff_hz < fs_hz / T::lit(2.0)) {
            return Err(PupilError::BadCutoff);
        }
        let k = T::lit(2.0) * fs_hz;
        let wc = k * (T::PI() * cutoff_hz / fs_hz).tan();
        let n = T::from_count(order);
        let mut sections = Vec::with_capacity(order / 2);
        for i in 0..order / 2 {
            // Low-pass prototype pole in the upper half plane.
            let theta = T::PI() * T::from_count(2 * i + 1 + order) / (T::lit(2.0) * n);
            let p = Complex::new(theta.cos(), theta.sin());
            // s -> wc / s maps it to the high-pass pole q = wc / p.
            let q = Complex::new(wc, T::zero()) / p;
            let (re, mag2) = (q.re, q.norm_sqr());
            let a0 = k * k - T::lit(2.0) * re * k + mag2;
            let a1 = T::lit(2.0) * (mag2 - k * k);
            let a2 = k * k + T::lit(2.0) * re * k + mag2;
            let g = k * k / a0;
            sections.push(Biquad {
                b: [g, -T::lit(2.0) * g, g],
                a: [T::one(), a1 / a0, a2 / a0],
            });
        }
        Ok(Self {
            fs_hz,
            cutoff_hz,
            order,
            sections,
        })
    }

    /// Magnitude of the single-pass frequency response at `f_hz`.
    pub fn magnitude_at(&self, f_hz: T) -> T {
        let w = T::lit(2.0) * T::PI() * f_hz / self.fs_hz;
        self.sections
            .iter()
            .fold(Complex::new(T::one(), T::zero()), |acc, s| acc * s.response(w))
            .norm()
    }

    /// Causal single pass from rest.
    pub fn filter(&self, xs: &[T]) -> Vec<T> {
        let mut y = xs.to_vec();
        for s in &self.sections {
            s.run(&mut y, [T::zero(); 2]);
        }
        y
    }

    fn filter_steady(&self, xs: &mut [T]) {
        let mut level = match xs.first() {
            Some(&x) => x,
            None => return,
        };
        for s in &self.sections {
            let z = s.steady_state(level);
            s.run(xs, z);
            level = level * s.dc_gain();
        }
    }

    pub fn padding(&self) -> usize {
        3 * self.order
    }

    /// Zero-phase application: forward pass, then a pass over the reversed
    /// output. Ends are extended by odd reflection of `3 * order` samples
    /// and each pass starts from the steady state of its first sample.
    pub fn filtfilt(&self, xs: &[T]) -> Result<Vec<T>, PupilError> {
        let pad = self.padding();
        let n = xs.len();
        if n <= pad {
            return Err(PupilError::TooShort { need: pad + 1, got: n });
        }
        let two = T::lit(2.0);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| two * xs[0] - xs[i]));
        ext.extend_from_slice(xs);
        ext.extend((1..=pad).map(|i| two * xs[n - 1] - xs[n - 1 - i]));
        self.filter_steady(&mut ext);
        ext.reverse();
        self.filter_steady(&mut ext);
        ext.reverse();
        Ok(ext[pad..pad + n].to_vec())
    }
}

/// Zero-phase Butterworth high-pass of a uniformly sampled series.
pub fn highpass_butterworth<T: Real>(
    series: &[T],
    fs_hz: T,
    cutoff_hz: T,
    order: usize,
) -> Result<Vec<T>, PupilError> {
    ButterworthHighpass::design(fs_hz, cutoff_hz, order)?.filtfilt(series)
}

/// Time-weighted fraction of `(t_ms, eyelid_open)` samples at or below
/// `1 - closed_threshold` opening. Each sample weighs the interval to the
/// next one; the last weighs the median interval.
pub fn eye_closure_fraction<T: Real>(
    eyelid: &[(u64, T)],
    closed_threshold: T,
) -> Result<T, PupilError> {
    if eyelid.is_empty() {
        return Err(PupilError::Empty);
    }
    let ts: Vec<u64> = eyelid.iter().map(|p| p.0).collect();
    let tail = median_interval_ms(&ts).max(1);
    let limit = T::one() - closed_threshold + T::lit(1e-12);
    let mut closed = 0u64;
    let mut total = 0u64;
    for (k, &(t, open)) in eyelid.iter().enumerate() {
        let w = eyelid.get(k + 1).map_or(tail, |n| n.0 - t);
        total += w;
        if open <= limit {
            closed += w;
        }
    }
    Ok(T::from_u64(closed).unwrap() / T::from_u64(total).unwrap())
}

/// Parameters shared by the workload and fatigue pipelines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PupilPipelineParams<T> {
    pub basis: NormalizationBasis,
    pub resample_hz: T,
    /// Gaps longer than this are marked absent before being bridged by
    /// linear interpolation.
    pub max_gap_ms: u64,
    pub smooth_window: usize,
    pub welch: WelchParams<T>,
    pub highpass_cutoff_hz: T,
    pub highpass_order: usize,
}

impl<T: Real> Default for PupilPipelineParams<T> {
    fn default() -> Self {
        Self {
            basis: NormalizationBasis::Max,
            resample_hz: T::lit(2.0),
            max_gap_ms: 1000,
            smooth_window: 5,
            welch: WelchParams::default(),
            highpass_cutoff_hz: T::lit(0.03),
            highpass_order: 4,
        }
    }
}

fn fenced_normalized<T: Real>(
    pupil: &[(u64, T)],
    basis: NormalizationBasis,
) -> Result<Vec<(u64, T)>, PupilError> {
    if pupil.is_empty() {
        return Err(PupilError::Empty);
    }
    let (kept, _) = outer_fence_filter(pupil)?;
    let vals: Vec<Option<T>> = kept.iter().map(|p| Some(p.1)).collect();
    let norm = normalize_pupil_with(&vals, basis)?;
    Ok(kept
        .iter()
        .zip(norm)
        .map(|(p, v)| (p.0, v.expect("all present")))
        .collect())
}

fn to_uniform<T: Real>(
    series: &[(u64, T)],
    params: &PupilPipelineParams<T>,
) -> Result<Vec<T>, PupilError> {
    let u = resample_uniform(series, params.resample_hz, params.max_gap_ms)?;
    u.filled().ok_or(PupilError::AllAbsent)
}

/// Workload pipeline over a blink-filtered `(t_ms, pupil_mm)` series.
pub fn workload_bands<T: Real>(
    pupil: &[(u64, T)],
    params: &PupilPipelineParams<T>,
) -> Result<(Spectrum<T>, BandPowerResult<T>), PupilError> {
    let norm = fenced_normalized(pupil, params.basis)?;
    let uniform = to_uniform(&norm, params)?;
    let spec = welch_psd(&uniform, params.resample_hz, params.welch)?;
    let bands = lf_hf_ratio(&spec)?;
    Ok((spec, bands))
}

/// Spectrum of the smoothed, high-passed pupil signal and its mean density
/// over 0.03..0.4 Hz (the fluctuation index).
#[derive(Debug, Clone, PartialEq)]
pub struct FatigueSpectrum<T> {
    pub spectrum: Spectrum<T>,
    pub fluctuation_index: T,
}

/// Fatigue pipeline over a blink-filtered `(t_ms, pupil_mm)` series
/// covering at least 300 s.
pub fn fatigue_spectrum<T: Real>(
    pupil: &[(u64, T)],
    params: &PupilPipelineParams<T>,
) -> Result<FatigueSpectrum<T>, PupilError> {
    let (first, last) = match (pupil.first(), pupil.last()) {
        (Some(a), Some(b)) => (a.0, b.0),
        _ => return Err(PupilError::Empty),
    };
    if last - first < FATIGUE_MIN_DURATION_MS {
        return Err(PupilError::InsufficientDuration {
            need_ms: FATIGUE_MIN_DURATION_MS,
            got_ms: last - first,
        });
    }
    let norm = fenced_normalized(pupil, params.basis)?;
    let values: Vec<T> = norm.iter().map(|p| p.1).collect();
    let smooth = sliding_average(&values, params.smooth_window)?;
    let smoothed: Vec<(u64, T)> = norm.iter().map(|p| p.0).zip(smooth).collect();
    let uniform = to_uniform(&smoothed, params)?;
    let filtered = highpass_butterworth(
        &uniform,
        params.resample_hz,
        params.highpass_cutoff_hz,
        params.highpass_order,
    )?;
    let spectrum = welch_psd(&filtered, params.resample_hz, params.welch)?;
    let fluctuation_index = band_mean(
        &spectrum,
        T::lit(FATIGUE_BAND_HZ.0),
        T::lit(FATIGUE_BAND_HZ.1),
    )?;
    Ok(FatigueSpectrum {
        spectrum,
        fluctuation_index,
    })
}
