use std::f64::consts::PI;

/// Zero crossings of the sinc kernel on each side, at the output cutoff.
const ZERO_CROSSINGS: f64 = 24.0;

/// Band-limited resampling with a Hann-windowed sinc kernel.
///
/// The output has `round(len * to / from)` samples. Equal rates return the
/// input unchanged.
pub fn resample(samples: &[f32], from: u32, to: u32) -> Vec<f32> {
    if from == to || samples.is_empty() {
        return samples.to_vec();
    }
    let n_in = samples.len();
    let n_out = ((n_in as u64 * to as u64 + from as u64 / 2) / from as u64) as usize;
    let step = from as f64 / to as f64;
    // Anti-aliasing cutoff relative to the input Nyquist frequency.
    let cutoff = (to as f64 / from as f64).min(1.0);
    let half = (ZERO_CROSSINGS / cutoff).ceil() as isize;

    (0..n_out)
        .map(|j| {
            let t = j as f64 * step;
            let center = t.floor() as isize;
            let mut acc = 0.0f64;
            for i in (center - half + 1)..=(center + half) {
                if i < 0 || i as usize >= n_in {
                    continue;
                }
                let x = t - i as f64;
                let arg = cutoff * x;
                let sinc = if arg.abs() < 1e-12 {
                    1.0
                } else {
                    (PI * arg).sin() / (PI * arg)
                };
                let window = 0.5 * (1.0 + (PI * x / half as f64).cos());
                acc += samples[i as usize] as f64 * cutoff * sinc * window;
            }
            acc as f32
        })
        .collect()
}
