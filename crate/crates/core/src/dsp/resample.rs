//! Offline band-limited resampling with a Kaiser-windowed sinc kernel.
//!
//! The rate ratio is reduced to `up/down`; every output sample then falls on
//! one of `up` fractional phases, whose kernels are computed once.

use super::AudioBuffer;

const KAISER_BETA: f64 = 8.0;
/// Zero crossings of the sinc on each side of the centre tap.
const ZERO_CROSSINGS: f64 = 32.0;
/// Passband edge as a fraction of the lower Nyquist frequency.
const ROLLOFF: f64 = 0.95;
const MAX_TABLE: usize = 1 << 23;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

struct Kernel {
    cutoff: f64,
    half_width: f64,
    norm: f64,
}

impl Kernel {
    fn new(cutoff: f64) -> Self {
        Kernel {
            cutoff,
            half_width: ZERO_CROSSINGS / cutoff,
            norm: 1.0 / bessel_i0(KAISER_BETA),
        }
    }

    fn weight(&self, x: f64) -> f64 {
        if x.abs() >= self.half_width {
            return 0.0;
        }
        let arg = self.cutoff * x;
        let sinc = if arg == 0.0 {
            1.0
        } else {
            let p = std::f64::consts::PI * arg;
            p.sin() / p
        };
        let u = x / self.half_width;
        let window = bessel_i0(KAISER_BETA * (1.0 - u * u).sqrt()) * self.norm;
        self.cutoff * sinc * window
    }

    /// Normalized weights for input offsets `-reach..=reach+1` around `floor(t)`.
    fn taps(&self, frac: f64, reach: i64) -> Vec<f64> {
        let mut w: Vec<f64> = (-reach..=reach + 1)
            .map(|m| self.weight(frac - m as f64))
            .collect();
        let sum: f64 = w.iter().sum();
        if sum != 0.0 {
            w.iter_mut().for_each(|v| *v /= sum);
        }
        w
    }
}

/// Resamples to `target_hz`. Output length is `round(len * target / source)`;
/// equal rates return an identical copy.
pub fn resample(a: &AudioBuffer, target_hz: u32) -> AudioBuffer {
    assert!(target_hz > 0, "target rate must be positive");
    let source_hz = a.sample_rate();
    if source_hz == target_hz {
        return a.clone();
    }
    let g = gcd(source_hz as u64, target_hz as u64);
    let up = target_hz as u64 / g;
    let down = source_hz as u64 / g;
    let n = a.len() as u64;
    let out_len = ((n * up + down / 2) / down) as usize;

    let cutoff = ROLLOFF * (up as f64 / down as f64).min(1.0);
    let kernel = Kernel::new(cutoff);
    let reach = kernel.half_width.ceil() as i64;
    let width = (2 * reach + 2) as usize;
    let table: Option<Vec<Vec<f64>>> = (up as usize * width <= MAX_TABLE).then(|| {
        (0..up)
            .map(|p| kernel.taps(p as f64 / up as f64, reach))
            .collect()
    });

    let input = a.samples();
    let samples = (0..out_len as u64)
        .map(|k| {
            let pos = k * down;
            let base = (pos / up) as i64;
            let phase = pos % up;
            let owned;
            let taps: &[f64] = match &table {
                Some(t) => &t[phase as usize],
                None => {
                    owned = kernel.taps(phase as f64 / up as f64, reach);
                    &owned
                }
            };
            let mut acc = 0.0;
            for (i, w) in taps.iter().enumerate() {
                let j = base - reach + i as i64;
                if j >= 0 && (j as u64) < n {
                    acc += w * input[j as usize] as f64;
                }
            }
            acc as f32
        })
        .collect();
    AudioBuffer::new(samples, target_hz).expect("finite input yields finite output")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::{num_complex::Complex, FftPlanner};

    fn tone(freq: f64, sr: u32, n: usize, amp: f64) -> Vec<f32> {
        (0..n)
            .map(|i| (amp * (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin()) as f32)
            .collect()
    }

    fn peak_bin(samples: &[f32]) -> usize {
        let mut buf: Vec<Complex<f64>> =
            samples.iter().map(|&s| Complex::new(s as f64, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
        (1..buf.len() / 2)
            .max_by(|&a, &b| buf[a].norm().partial_cmp(&buf[b].norm()).unwrap())
            .unwrap()
    }

    #[test]
    fn bessel_matches_reference_values() {
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-12);
        assert!((bessel_i0(8.0) - 427.564_115_721_804_74).abs() < 1e-8);
    }

    #[test]
    fn length_follows_ratio() {
        let a = AudioBuffer::new(vec![0.0; 48000], 48000).unwrap();
        assert_eq!(resample(&a, 16000).len(), 16000);
        let b = AudioBuffer::new(vec![0.0; 1001], 44100).unwrap();
        // round(1001 * 160 / 441) = round(363.17)
        assert_eq!(resample(&b, 16000).len(), 363);
        let c = AudioBuffer::new(vec![0.0; 1001], 16000).unwrap();
        assert_eq!(resample(&c, 24000).len(), 1502);
    }

    #[test]
    fn same_rate_is_identity() {
        let a = AudioBuffer::new(tone(440.0, 16000, 1000, 0.3), 16000).unwrap();
        assert_eq!(resample(&a, 16000), a);
    }

    #[test]
    fn tone_peak_survives_downsampling() {
        let a = AudioBuffer::new(tone(1000.0, 48000, 48000, 0.5), 48000).unwrap();
        let out = resample(&a, 16000);
        // 16000-point FFT at 16 kHz: 1 Hz bins, so 1 kHz is bin 1000.
        let bin = peak_bin(out.samples());
        assert!((bin as i64 - 1000).abs() <= 1, "peak at bin {bin}");
    }

    #[test]
    fn content_above_new_nyquist_is_removed() {
        let a = AudioBuffer::new(tone(12000.0, 48000, 48000, 0.5), 48000).unwrap();
        let out = resample(&a, 16000);
        let interior = &out.samples()[500..out.len() - 500];
        let rms = (interior.iter().map(|&s| (s as f64).powi(2)).sum::<f64>() / interior.len() as f64).sqrt();
        assert!(rms < 1e-3, "alias rms {rms}");
    }

    #[test]
    fn round_trip_snr_above_40_db() {
        let n = 16000;
        let x: Vec<f32> = tone(440.0, 16000, n, 0.3)
            .iter()
            .zip(tone(3100.0, 16000, n, 0.2))
            .map(|(a, b)| a + b)
            .collect();
        let a = AudioBuffer::new(x.clone(), 16000).unwrap();
        let back = resample(&resample(&a, 48000), 16000);
        assert_eq!(back.len(), n);
        // Skip one kernel span at each edge, where the signal starts abruptly.
        let edge = 200;
        let (mut sig, mut err) = (0.0, 0.0);
        for (&a, &b) in x[edge..n - edge].iter().zip(&back.samples()[edge..n - edge]) {
            sig += (a as f64).powi(2);
            err += (a as f64 - b as f64).powi(2);
        }
        let snr = 10.0 * (sig / err).log10();
        assert!(snr > 40.0, "snr {snr}");
    }

    #[test]
    fn phase_taps_sum_to_one() {
        let k = Kernel::new(0.5);
        let sum: f64 = k.taps(0.25, 70).iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }
}
