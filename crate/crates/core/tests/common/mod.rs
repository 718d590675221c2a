//! Test-only oracles written straight from the metric definitions, sharing no
//! code with the library, plus synthetic corpus generators.
#![allow(dead_code)]

use std::f64::consts::PI;

use plc_lab::rng::SeededRng;
use plc_lab::trace_model::PacketTrace;

pub const SR: f64 = 44_100.0;

/// In-place iterative radix-2 FFT on (re, im) pairs.
pub fn fft(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    assert!(n.is_power_of_two());
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let ang = -2.0 * PI * k as f64 / len as f64;
                let (wr, wi) = (ang.cos(), ang.sin());
                let (a, b) = (start + k, start + k + half);
                let tr = re[b] * wr - im[b] * wi;
                let ti = re[b] * wi + im[b] * wr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
            }
        }
        len *= 2;
    }
}

/// Direct O(N^2) DFT power, used to check [`fft`].
pub fn dft_power(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, v) in x.iter().enumerate() {
                let ang = -2.0 * PI * ((k * t) % n) as f64 / n as f64;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            re * re + im * im
        })
        .collect()
}

/// Power spectrum (bins 0..=N/2) of one periodic-Hann-windowed frame.
pub fn frame_power(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    let mut re: Vec<f64> = frame
        .iter()
        .enumerate()
        .map(|(t, v)| v * (PI * t as f64 / n as f64).sin().powi(2))
        .collect();
    let mut im = vec![0.0; n];
    fft(&mut re, &mut im);
    (0..=n / 2).map(|k| re[k] * re[k] + im[k] * im[k]).collect()
}

fn frames(x: &[f64], len: usize, hop: usize) -> Vec<&[f64]> {
    let mut out = Vec::new();
    let mut s = 0;
    while s + len <= x.len() {
        out.push(&x[s..s + len]);
        s += hop;
    }
    out
}

pub fn mse(y: &[f64], e: &[f64]) -> f64 {
    y.iter().zip(e).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64
}

pub fn sdr(y: &[f64], e: &[f64]) -> f64 {
    let num: f64 = y.iter().map(|a| a * a).sum();
    let den: f64 = y.iter().zip(e).map(|(a, b)| (a - b).powi(2)).sum();
    10.0 * (num / den).log10()
}

pub fn si_sdr(y: &[f64], e: &[f64]) -> f64 {
    let alpha =
        e.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / y.iter().map(|a| a * a).sum::<f64>();
    let num: f64 = y.iter().map(|a| (alpha * a).powi(2)).sum();
    let den: f64 = y.iter().zip(e).map(|(a, b)| (alpha * a - b).powi(2)).sum();
    10.0 * (num / den).log10()
}

pub fn lsd(y: &[f64], e: &[f64]) -> f64 {
    let fy = frames(y, 2048, 512);
    let fe = frames(e, 2048, 512);
    let m = fy.len() as f64;
    fy.iter()
        .zip(&fe)
        .map(|(a, b)| {
            let pa = frame_power(a);
            let pb = frame_power(b);
            let k1 = pa.len() as f64;
            let s: f64 = pa
                .iter()
                .zip(&pb)
                .map(|(p, q)| (p.max(1e-20).log10() - q.max(1e-20).log10()).powi(2))
                .sum();
            (s / k1).sqrt()
        })
        .sum::<f64>()
        / m
}

fn mel(f: f64) -> f64 {
    1127.0 * (1.0 + f / 700.0).ln()
}

fn inv_mel(m: f64) -> f64 {
    700.0 * ((m / 1127.0).exp() - 1.0)
}

/// MFCCs 1..=16 of one 1024-sample frame (20 triangular bands, 0 Hz to Nyquist).
pub fn mfcc(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    let power = frame_power(frame);
    let bands = 20;
    let top = mel(SR / 2.0);
    let pts: Vec<f64> = (0..bands + 2)
        .map(|i| inv_mel(top * i as f64 / (bands + 1) as f64))
        .collect();
    let log_e: Vec<f64> = (0..bands)
        .map(|b| {
            let mut e = 0.0;
            for (k, p) in power.iter().enumerate() {
                let f = k as f64 * SR / n as f64;
                let w = if f > pts[b] && f <= pts[b + 1] {
                    (f - pts[b]) / (pts[b + 1] - pts[b])
                } else if f > pts[b + 1] && f < pts[b + 2] {
                    (pts[b + 2] - f) / (pts[b + 2] - pts[b + 1])
                } else {
                    0.0
                };
                e += w * p;
            }
            e.max(1e-10).ln()
        })
        .collect();
    (1..=16)
        .map(|i| {
            let s: f64 = log_e
                .iter()
                .enumerate()
                .map(|(j, v)| v * (PI / bands as f64 * (j as f64 + 0.5) * i as f64).cos())
                .sum();
            s * (2.0 / bands as f64).sqrt()
        })
        .collect()
}

pub fn mcd(y: &[f64], e: &[f64]) -> f64 {
    let fy = frames(y, 1024, 512);
    let fe = frames(e, 1024, 512);
    let m = fy.len() as f64;
    fy.iter()
        .zip(&fe)
        .map(|(a, b)| {
            mfcc(a)
                .iter()
                .zip(mfcc(b))
                .map(|(c, d)| (c - d).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .sum::<f64>()
        / m
}

/// Synthetic music: harmonic notes with attack/decay envelopes. `style` 0
/// holds one note; 1 adds note changes; 2 adds vibrato; 3 adds a noise floor.
pub fn tonal_clip(rng: &mut SeededRng, seconds: f64, style: u32) -> Vec<f64> {
    let len = (seconds * SR) as usize;
    let mut out = vec![0.0; len];
    let note_len = if style == 0 { len } else { (SR / 2.0) as usize };
    let mut start = 0;
    while start < len {
        let f0 = 110.0 * 2f64.powf(3.0 * rng.unit_f64());
        let nh = 1 + rng.below(6) as usize;
        let amps: Vec<f64> = (0..nh).map(|h| rng.unit_f64() / (h + 1) as f64).collect();
        let phases: Vec<f64> = (0..nh).map(|_| 2.0 * PI * rng.unit_f64()).collect();
        let norm = 0.7 / amps.iter().sum::<f64>();
        let depth = if style >= 2 { 0.004 } else { 0.0 };
        let rate = 4.0 + 2.0 * rng.unit_f64();
        let mut phase = vec![0.0; nh];
        for n in 0..note_len.min(len - start) {
            let t = n as f64 / SR;
            let f = f0 * (1.0 + depth * (2.0 * PI * rate * t).sin());
            let env = if style >= 1 {
                (1.0 - (-40.0 * t).exp()) * (-1.5 * t).exp()
            } else {
                1.0
            };
            let mut s = 0.0;
            for h in 0..nh {
                phase[h] += 2.0 * PI * f * (h + 1) as f64 / SR;
                s += amps[h] * norm * (phase[h] + phases[h]).sin();
            }
            out[start + n] += env * s;
        }
        start += note_len;
    }
    if style >= 3 {
        for s in &mut out {
            *s += 0.003 * rng.gaussian();
        }
    }
    out
}

/// Two-state (good/bad) loss process; bursts are capped at `max_burst`.
pub fn burst_trace(
    rng: &mut SeededRng,
    packets: usize,
    p_start: f64,
    max_burst: usize,
) -> PacketTrace {
    let mut flags = vec![false; packets];
    let mut i = 0;
    while i < packets {
        if rng.unit_f64() < p_start {
            let b = 1 + rng.below(max_burst as u64) as usize;
            for f in flags.iter_mut().skip(i).take(b) {
                *f = true;
            }
            i += b + 1;
        } else {
            i += 1;
        }
    }
    PacketTrace::new(flags)
}

/// A trace whose longest burst is exactly `burst`.
pub fn trace_with_burst(burst: usize, packets: usize) -> PacketTrace {
    let mut flags = vec![false; packets.max(burst + 2)];
    for f in flags.iter_mut().skip(1).take(burst) {
        *f = true;
    }
    PacketTrace::new(flags)
}
