//! Offline seasonality analysis of a bootstrap series: a normalized
//! magnitude spectrum for dominant periods and an à-trous wavelet
//! decomposition whose detail energies confirm them.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

/// A spectral peak must exceed this multiple of the median magnitude.
pub const NOISE_FACTOR: f64 = 5.0;

/// ... and this fraction of the largest magnitude, which keeps the taper's
/// sidelobes (below 0.03) out of clean spectra.
pub const MIN_PEAK: f64 = 0.05;

/// Low-pass B3 spline taps.
pub const B3: [f64; 5] = [1.0 / 16.0, 1.0 / 4.0, 3.0 / 8.0, 1.0 / 4.0, 1.0 / 16.0];

/// Period (in samples) at the centre of scale `j`'s detail band, per unit
/// of `2^j`.
const SCALE_CENTRE: f64 = 1.9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeasonalityError {
    #[error("series too short: need more than {needed} samples, got {got}")]
    SeriesTooShort { needed: usize, got: usize },
    #[error("series is constant; it has no spectrum")]
    DegenerateSeries,
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}

/// Magnitudes at frequencies `k / n` for `k = 1..=n/2`, scaled so the
/// largest is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub len: usize,
    pub frequencies: Vec<f64>,
    pub magnitudes: Vec<f64>,
}

impl Spectrum {
    /// Magnitude at the bin closest to `freq`, or at a neighbouring bin if
    /// that is larger (the peak of an off-bin tone leaks into both).
    pub fn magnitude_near(&self, freq: f64) -> f64 {
        let k = (freq * self.len as f64).round() as isize;
        (k - 1..=k + 1)
            .filter(|&b| b >= 1 && (b as usize) <= self.magnitudes.len())
            .map(|b| self.magnitudes[b as usize - 1])
            .fold(0.0, f64::max)
    }

    pub fn median(&self) -> f64 {
        let mut m = self.magnitudes.clone();
        m.sort_by(f64::total_cmp);
        match m.len() {
            0 => 0.0,
            n if n % 2 == 1 => m[n / 2],
            n => (m[n / 2 - 1] + m[n / 2]) / 2.0,
        }
    }

    /// Level a peak must exceed to count as seasonal.
    pub fn noise_floor(&self) -> f64 {
        (NOISE_FACTOR * self.median()).max(MIN_PEAK)
    }
}

fn hann(n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![1.0; n];
    }
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Normalized magnitude spectrum of `series` after mean removal and a
/// Hann taper.
pub fn dft_magnitude(series: &[f64]) -> Result<Spectrum, SeasonalityError> {
    let n = series.len();
    if n < 2 {
        return Err(SeasonalityError::SeriesTooShort { needed: 1, got: n });
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    if series.iter().all(|x| (x - mean).abs() <= 1e-12 * mean.abs().max(1.0)) {
        return Err(SeasonalityError::DegenerateSeries);
    }
    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .zip(hann(n))
        .map(|(x, w)| Complex::new((x - mean) * w, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    let raw: Vec<f64> = buf[1..=half].iter().map(|c| c.norm()).collect();
    let max = raw.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(SeasonalityError::DegenerateSeries);
    }
    Ok(Spectrum {
        len: n,
        frequencies: (1..=half).map(|k| k as f64 / n as f64).collect(),
        magnitudes: raw.iter().map(|m| m / max).collect(),
    })
}

/// A local maximum of the spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    /// Period in samples, refined between bins.
    pub period: f64,
    pub magnitude: f64,
}

/// Local maxima above the noise floor, strongest first.
pub fn spectral_peaks(spectrum: &Spectrum) -> Vec<Peak> {
    let m = &spectrum.magnitudes;
    let floor = spectrum.noise_floor();
    let mut peaks: Vec<Peak> = (0..m.len())
        .filter(|&i| {
            m[i] > floor && (i == 0 || m[i] > m[i - 1]) && (i + 1 == m.len() || m[i] >= m[i + 1])
        })
        .map(|i| {
            // Parabolic refinement on log magnitudes; exact for a Gaussian
            // lobe and close for the Hann main lobe.
            let offset = if i > 0 && i + 1 < m.len() && m[i - 1] > 0.0 && m[i + 1] > 0.0 {
                let (a, b, c) = (m[i - 1].ln(), m[i].ln(), m[i + 1].ln());
                let den = a - 2.0 * b + c;
                if den < 0.0 {
                    (0.5 * (a - c) / den).clamp(-0.5, 0.5)
                } else {
                    0.0
                }
            } else {
                0.0
            };
            let bin = (i + 1) as f64 + offset;
            Peak {
                period: spectrum.len as f64 / bin,
                magnitude: m[i],
            }
        })
        .collect();
    peaks.sort_by(|a, b| b.magnitude.total_cmp(&a.magnitude));
    peaks
}

/// Periods of the `k` strongest peaks, strongest first.
pub fn dominant_periods(spectrum: &Spectrum, k: usize) -> Vec<f64> {
    spectral_peaks(spectrum).into_iter().take(k).map(|p| p.period).collect()
}

/// Undecimated decomposition: `approximations[j - 1]` is `c_j` and
/// `details[j - 1]` is `d_j = c_{j-1} - c_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletDecomposition {
    pub approximations: Vec<Vec<f64>>,
    pub details: Vec<Vec<f64>>,
    pub energies: Vec<f64>,
}

impl WaveletDecomposition {
    pub fn scales(&self) -> usize {
        self.details.len()
    }

    /// 1-based scale with the largest detail energy.
    pub fn peak_scale(&self) -> usize {
        self.energies
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i + 1)
            .unwrap_or(0)
    }
}

/// Period at the centre of scale `j`'s detail band.
pub fn scale_period(j: usize) -> f64 {
    SCALE_CENTRE * (1u64 << j) as f64
}

/// Scale whose detail band is centred closest to `period`.
pub fn nearest_scale(period: f64) -> usize {
    (period / SCALE_CENTRE).log2().round().max(1.0) as usize
}

fn reflect(mut i: isize, n: isize) -> usize {
    if n == 1 {
        return 0;
    }
    let span = 2 * (n - 1);
    i = i.rem_euclid(span);
    if i >= n {
        i = span - i;
    }
    i as usize
}

/// À-trous decomposition over `levels` scales with mirrored boundaries.
pub fn atrous_decompose(series: &[f64], levels: usize) -> Result<WaveletDecomposition, SeasonalityError> {
    if levels == 0 {
        return Err(SeasonalityError::InvalidArgument("levels must be at least 1"));
    }
    let needed = if levels < 48 { 4usize << levels } else { usize::MAX };
    if series.len() <= needed {
        return Err(SeasonalityError::SeriesTooShort {
            needed,
            got: series.len(),
        });
    }
    let n = series.len() as isize;
    let mut prev = series.to_vec();
    let mut out = WaveletDecomposition {
        approximations: Vec::with_capacity(levels),
        details: Vec::with_capacity(levels),
        energies: Vec::with_capacity(levels),
    };
    for j in 1..=levels {
        let step = 1isize << (j - 1);
        let next: Vec<f64> = (0..n)
            .map(|t| {
                B3.iter()
                    .enumerate()
                    .map(|(k, w)| w * prev[reflect(t + (k as isize - 2) * step, n)])
                    .sum()
            })
            .collect();
        let detail: Vec<f64> = prev.iter().zip(&next).map(|(a, b)| a - b).collect();
        out.energies.push(detail.iter().map(|d| d * d).sum());
        out.details.push(detail);
        out.approximations.push(next.clone());
        prev = next;
    }
    Ok(out)
}

/// Mixing weight of the daily factor: `m_day / (m_day + m_week)`, or 1
/// when the weekly peak does not clear the noise floor.
pub fn seasonal_weight(spectrum: &Spectrum, period_day: f64, period_week: f64) -> f64 {
    let m_day = spectrum.magnitude_near(1.0 / period_day);
    let m_week = spectrum.magnitude_near(1.0 / period_week);
    if m_week <= spectrum.noise_floor() || m_week <= 0.0 {
        return 1.0;
    }
    let xi = m_day / (m_day + m_week);
    if xi <= 0.0 {
        f64::MIN_POSITIVE
    } else {
        xi.min(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn sine(n: usize, period: f64, amp: f64) -> Vec<f64> {
        (0..n).map(|t| amp * (2.0 * PI * t as f64 / period).sin()).collect()
    }

    /// Direct O(n^2) transform of the same tapered, mean-removed input.
    fn naive_magnitudes(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let mean = x.iter().sum::<f64>() / n as f64;
        let w = hann(n);
        let raw: Vec<f64> = (1..=n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (t, v) in x.iter().enumerate() {
                    let a = -2.0 * PI * (k * t) as f64 / n as f64;
                    re += (v - mean) * w[t] * a.cos();
                    im += (v - mean) * w[t] * a.sin();
                }
                (re * re + im * im).sqrt()
            })
            .collect();
        let max = raw.iter().copied().fold(0.0, f64::max);
        raw.iter().map(|r| r / max).collect()
    }

    #[test]
    fn fft_matches_naive_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..150).map(|_| rng.random::<f64>()).collect();
        let s = dft_magnitude(&x).unwrap();
        for (a, b) in s.magnitudes.iter().zip(naive_magnitudes(&x)) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn sinusoid_peak_on_bin() {
        let s = dft_magnitude(&sine(960, 96.0, 3.0)).unwrap();
        let top = s.magnitudes.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(s.frequencies[top], 1.0 / 96.0);
        assert_eq!(dominant_periods(&s, 5), vec![96.0]);
    }

    #[test]
    fn two_tones_keep_amplitude_ratio() {
        let n = 6720;
        let x: Vec<f64> = sine(n, 96.0, 1.0)
            .iter()
            .zip(sine(n, 672.0, 0.4))
            .map(|(a, b)| a + b)
            .collect();
        let s = dft_magnitude(&x).unwrap();
        let ratio = s.magnitude_near(1.0 / 672.0) / s.magnitude_near(1.0 / 96.0);
        assert!((ratio - 0.4).abs() < 1e-9, "{ratio}");
        assert_eq!(dominant_periods(&s, 2), vec![96.0, 672.0]);
        assert_eq!(dominant_periods(&s, 10).len(), 2);
    }

    #[test]
    fn off_bin_period_is_refined() {
        let x = sine(10_000, 672.0, 1.0);
        let p = dominant_periods(&dft_magnitude(&x).unwrap(), 1)[0];
        assert!((p - 672.0).abs() < 672.0 * 0.01, "{p}");
    }

    #[test]
    fn constant_and_short_inputs() {
        assert_eq!(dft_magnitude(&[5.0; 64]), Err(SeasonalityError::DegenerateSeries));
        assert!(matches!(dft_magnitude(&[1.0]), Err(SeasonalityError::SeriesTooShort { .. })));
    }

    #[test]
    fn white_noise_stays_under_floor() {
        // Calibration of NOISE_FACTOR: over 200 seeds, Gaussian noise of
        // length 2048 must almost never produce a peak above it.
        let mut exceed = 0;
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..2048)
                .map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng))
                .collect();
            let s = dft_magnitude(&x).unwrap();
            if s.magnitudes.iter().any(|&m| m > s.noise_floor()) {
                exceed += 1;
            }
        }
        assert!(exceed <= 2, "{exceed} of 200 seeds exceeded the floor");
    }

    #[test]
    fn scaling_does_not_move_periods() {
        let x: Vec<f64> = sine(4800, 96.0, 1.0).iter().zip(sine(4800, 480.0, 0.5)).map(|(a, b)| a + b).collect();
        let y: Vec<f64> = x.iter().map(|v| v * 37.5).collect();
        let p = |v: &[f64]| dominant_periods(&dft_magnitude(v).unwrap(), 3);
        assert_eq!(p(&x), p(&y));
    }

    #[test]
    fn impulse_gives_kernel() {
        let mut x = vec![0.0; 41];
        x[20] = 1.0;
        let d = atrous_decompose(&x, 1).unwrap();
        assert_eq!(&d.approximations[0][18..23], &B3);
        assert!(d.approximations[0][..18].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn second_scale_uses_holes() {
        let mut x = vec![0.0; 41];
        x[20] = 1.0;
        let c1 = atrous_decompose(&x, 1).unwrap().approximations[0].clone();
        let c2 = &atrous_decompose(&x, 2).unwrap().approximations[1];
        for t in 0..41isize {
            let want: f64 = B3
                .iter()
                .enumerate()
                .map(|(k, w)| w * c1[reflect(t + (k as isize - 2) * 2, 41)])
                .sum();
            assert!((c2[t as usize] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_series_has_no_detail() {
        let d = atrous_decompose(&[4.0; 100], 3).unwrap();
        assert!(d.energies.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn reconstruction_and_telescoping() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..300).map(|_| rng.random_range(0.0..10.0)).collect();
        let d = atrous_decompose(&x, 4).unwrap();
        for t in 0..x.len() {
            let sum: f64 = d.approximations[3][t] + d.details.iter().map(|dj| dj[t]).sum::<f64>();
            assert!((sum - x[t]).abs() < 1e-9);
        }
        for j in 1..4 {
            for t in 0..x.len() {
                let diff = d.approximations[j - 1][t] - d.approximations[j][t];
                assert!((diff - d.details[j][t]).abs() < 1e-12);
            }
        }
        assert!(d.energies.iter().all(|&e| e > 0.0));
    }

    #[test]
    fn short_series_rejected() {
        assert!(matches!(
            atrous_decompose(&[1.0; 16], 2),
            Err(SeasonalityError::SeriesTooShort { needed: 16, got: 16 })
        ));
        assert!(atrous_decompose(&[1.0; 17], 2).is_ok());
    }

    #[test]
    fn daily_tone_peaks_at_matching_scale() {
        let d = atrous_decompose(&sine(4000, 96.0, 1.0), 9).unwrap();
        assert_eq!(d.peak_scale(), nearest_scale(96.0));
        assert_eq!(nearest_scale(96.0), 6);
    }

    #[test]
    fn weight_examples() {
        let n = 6720;
        let two = |wk: f64| {
            let x: Vec<f64> = sine(n, 96.0, 1.0).iter().zip(sine(n, 672.0, wk)).map(|(a, b)| a + b).collect();
            dft_magnitude(&x).unwrap()
        };
        // m_day / m_week = 3.17 gives 0.76.
        let xi = seasonal_weight(&two(1.0 / 3.1667), 96.0, 672.0);
        assert!((xi - 0.76).abs() < 1e-3, "{xi}");
        assert!((seasonal_weight(&two(1.0), 96.0, 672.0) - 0.5).abs() < 1e-9);
        assert_eq!(seasonal_weight(&dft_magnitude(&sine(n, 96.0, 1.0)).unwrap(), 96.0, 672.0), 1.0);
    }
}
