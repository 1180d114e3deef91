use std::f32::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex32;
use rustfft::{Fft, FftPlanner};

/// One STFT column: `n_fft / 2 + 1` complex bins.
pub type StftFrame = Vec<Complex32>;

/// Center-padded short-time Fourier transform with a periodic Hann window
/// and reflect padding.
///
/// Frame `t` is centered on sample `t * hop`; a signal of `n` samples yields
/// `ceil(n / hop)` frames, one for every hop position inside the signal.
pub struct Stft {
    n_fft: usize,
    hop: usize,
    window: Vec<f32>,
    forward: Arc<dyn Fft<f32>>,
    inverse: Arc<dyn Fft<f32>>,
}

impl Stft {
    pub fn new(n_fft: usize, hop: usize) -> Self {
        let mut planner = FftPlanner::new();
        let window = (0..n_fft)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f32 / n_fft as f32).cos())
            .collect();
        Self {
            n_fft,
            hop,
            window,
            forward: planner.plan_fft_forward(n_fft),
            inverse: planner.plan_fft_inverse(n_fft),
        }
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn n_frames(&self, n_samples: usize) -> usize {
        n_samples.div_ceil(self.hop)
    }

    pub fn forward(&self, samples: &[f32]) -> Vec<StftFrame> {
        let n = samples.len();
        let half = (self.n_fft / 2) as isize;
        let mut buf = vec![Complex32::new(0.0, 0.0); self.n_fft];
        (0..self.n_frames(n))
            .map(|t| {
                let start = (t * self.hop) as isize - half;
                for (k, slot) in buf.iter_mut().enumerate() {
                    let s = samples[reflect_index(start + k as isize, n)];
                    *slot = Complex32::new(s * self.window[k], 0.0);
                }
                self.forward.process(&mut buf);
                buf[..self.n_bins()].to_vec()
            })
            .collect()
    }

    /// Weighted overlap-add inverse, producing exactly `length` samples.
    pub fn inverse(&self, frames: &[StftFrame], length: usize) -> Vec<f32> {
        let half = self.n_fft / 2;
        let padded = length + 2 * half + self.n_fft;
        let mut out = vec![0.0f32; padded];
        let mut norm = vec![0.0f32; padded];
        let mut buf = vec![Complex32::new(0.0, 0.0); self.n_fft];
        let scale = 1.0 / self.n_fft as f32;
        for (t, frame) in frames.iter().enumerate() {
            buf[..self.n_bins()].copy_from_slice(frame);
            for k in 1..self.n_fft - self.n_bins() + 1 {
                buf[self.n_fft - k] = frame[k].conj();
            }
            self.inverse.process(&mut buf);
            let start = t * self.hop;
            if start + self.n_fft > padded {
                break;
            }
            for k in 0..self.n_fft {
                let w = self.window[k];
                out[start + k] += buf[k].re * scale * w;
                norm[start + k] += w * w;
            }
        }
        (0..length)
            .map(|i| {
                let j = i + half;
                if norm[j] > 1e-8 {
                    out[j] / norm[j]
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Mirror an out-of-range index back into `0..n` (reflect without repeating
/// the edge sample), bouncing as often as needed for very short signals.
fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_matches_numpy_reflect_mode() {
        // np.pad([0,1,2,3], 3, mode="reflect") -> [3,2,1,0,1,2,3,2,1,0]
        let got: Vec<usize> = (-3..7).map(|i| reflect_index(i, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
        assert_eq!(reflect_index(-5, 1), 0);
    }

    #[test]
    fn frame_count_is_ceil_of_hops() {
        let s = Stft::new(1024, 256);
        assert_eq!(s.n_frames(22050), 87);
        assert_eq!(s.n_frames(1), 1);
        assert_eq!(s.n_frames(256), 1);
        assert_eq!(s.n_frames(257), 2);
    }

    #[test]
    fn inverse_of_forward_reconstructs_signal() {
        let s = Stft::new(1024, 256);
        let x: Vec<f32> = (0..5000)
            .map(|i| ((i as f32) * 0.031).sin() + 0.3 * ((i as f32) * 0.17).cos())
            .collect();
        let spec = s.forward(&x);
        let y = s.inverse(&spec, x.len());
        let err = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(err < 1e-3, "max error {err}");
    }

    #[test]
    fn pure_tone_peaks_at_its_bin() {
        let s = Stft::new(1024, 256);
        // Bin 64 of a 1024-point FFT.
        let x: Vec<f32> = (0..4096)
            .map(|i| (2.0 * PI * 64.0 * i as f32 / 1024.0).sin())
            .collect();
        let spec = s.forward(&x);
        let col = &spec[8];
        let peak = (0..col.len())
            .max_by(|&a, &b| col[a].norm().total_cmp(&col[b].norm()))
            .unwrap();
        assert_eq!(peak, 64);
    }
}
