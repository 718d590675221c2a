//! Rational-ratio windowed-sinc resampler used to export clips for external
//! quality tools (PEAQ at 48 kHz, PLCMOS at 16 kHz).

use super::Waveform;

/// Zero crossings of the sinc kernel on each side of the center.
const ZERO_CROSSINGS: usize = 64;
/// Kaiser beta for roughly 90 dB stopband attenuation.
const KAISER_BETA: f64 = 0.1102 * (90.0 - 8.7);
/// Largest interpolation factor for which per-phase tables are precomputed.
const MAX_TABLE_PHASES: usize = 2048;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > sum * 1e-17 {
        term *= (half / k) * (half / k);
        sum += term;
        k += 1.0;
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

struct Kernel {
    /// Lowpass cutoff in cycles per input sample.
    cutoff: f64,
    /// Kernel half-width in input samples.
    half_width: f64,
    /// Taps on each side of the interpolation point.
    reach: usize,
    i0_beta: f64,
}

impl Kernel {
    fn new(source: u32, target: u32) -> Self {
        let ratio = (target as f64 / source as f64).min(1.0);
        // Kaiser transition width for a window spanning 2 * ZERO_CROSSINGS
        // sinc lobes, placed so the stopband starts at the new Nyquist.
        let transition = (90.0 - 7.95) / (14.36 * 2.0 * ZERO_CROSSINGS as f64);
        let cutoff = ratio * (0.5 - transition / 2.0);
        let half_width = ZERO_CROSSINGS as f64 / (2.0 * cutoff);
        Self {
            cutoff,
            half_width,
            reach: half_width.ceil() as usize,
            i0_beta: bessel_i0(KAISER_BETA),
        }
    }

    fn eval(&self, tau: f64) -> f64 {
        let x = tau / self.half_width;
        if x.abs() >= 1.0 {
            return 0.0;
        }
        let window = bessel_i0(KAISER_BETA * (1.0 - x * x).sqrt()) / self.i0_beta;
        2.0 * self.cutoff * sinc(2.0 * self.cutoff * tau) * window
    }

    /// Taps for an output point `frac` input samples past an integer index,
    /// normalized to unit DC gain. Tap `i` multiplies input `base + i - (reach - 1)`.
    fn taps(&self, frac: f64) -> Vec<f64> {
        let lead = self.reach as f64 - 1.0;
        let mut taps: Vec<f64> = (0..2 * self.reach)
            .map(|i| self.eval(frac + lead - i as f64))
            .collect();
        let sum: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= sum);
        taps
    }
}

/// Converts `w` to `target_rate` with a Kaiser-windowed sinc interpolator.
///
/// The output holds `round(N * target / source)` samples and is time-aligned
/// with the input (zero group delay); samples beyond the input edges are
/// treated as zero.
///
/// # Panics
///
/// Panics if `target_rate` is zero.
pub fn resample(w: &Waveform, target_rate: u32) -> Waveform {
    assert!(target_rate > 0, "target rate must be positive");
    let source = w.sample_rate;
    if source == target_rate || w.is_empty() {
        let len = ((w.len() as u128 * target_rate as u128 + source as u128 / 2) / source as u128)
            as usize;
        let mut out = w.clone();
        out.samples.resize(len, 0.0);
        out.sample_rate = target_rate;
        return out;
    }

    let g = gcd(source as u64, target_rate as u64);
    let up = target_rate as u64 / g;
    let down = source as u64 / g;
    let out_len =
        ((w.len() as u128 * target_rate as u128 + source as u128 / 2) / source as u128) as usize;

    let kernel = Kernel::new(source, target_rate);
    let table: Option<Vec<Vec<f64>>> = (up as usize <= MAX_TABLE_PHASES)
        .then(|| (0..up).map(|p| kernel.taps(p as f64 / up as f64)).collect());

    let input = &w.samples;
    let n_in = input.len() as isize;
    let lead = kernel.reach as isize - 1;
    let samples = (0..out_len as u64)
        .map(|j| {
            let pos = j * down;
            let base = (pos / up) as isize;
            let phase = pos % up;
            let owned;
            let taps: &[f64] = match &table {
                Some(t) => &t[phase as usize],
                None => {
                    owned = kernel.taps(phase as f64 / up as f64);
                    &owned
                }
            };
            let first = base - lead;
            let lo = (-first).max(0) as usize;
            let hi = ((n_in - first).max(0) as usize).min(taps.len());
            (lo..hi)
                .map(|i| taps[i] * input[(first + i as isize) as usize])
                .sum()
        })
        .collect();
    Waveform::new(samples, target_rate)
}
