//! Gaussian minimum shift keying on a real intensity subcarrier.
//!
//! Every symbol advances the carrier phase by +-pi/2, spread over a 4-symbol
//! Gaussian-filtered frequency pulse. The phase rides on a subcarrier at
//! `fs / 4`, so `m[n] = cos(pi/2 * n + theta[n])`. Detection forms the
//! analytic signal, differentiates its phase and integrates the result over
//! each symbol.

use num_complex::Complex64;
use statrs::function::erf::erf;
use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

pub const DEFAULT_BT: f64 = 0.35;
/// Length of the truncated frequency pulse, in symbols.
pub const PULSE_SPAN: usize = 4;
/// Shortest block whose DC level is estimated well enough for every symbol,
/// edges included, to decode correctly without noise.
pub const MIN_BLOCK_SYMBOLS: usize = 64;

/// Continuous Gaussian-filtered rectangular frequency pulse with unit area.
///
/// `t` is in symbol periods, centered on the symbol.
pub fn frequency_pulse(t: f64, bt: f64) -> f64 {
    let sigma = (2f64.ln()).sqrt() / (2.0 * PI * bt);
    let scale = SQRT_2 * sigma;
    0.5 * (erf((t + 0.5) / scale) - erf((t - 0.5) / scale))
}

/// Sampled frequency pulse for one oversampling factor.
#[derive(Debug, Clone)]
pub struct Shaper {
    sps: usize,
    /// `(sample offset from the start of the symbol, weight)`; weights sum to 1.
    taps: Vec<(isize, f64)>,
}

impl Shaper {
    pub fn new(bt: f64, sps: usize) -> Self {
        let half_span = PULSE_SPAN as f64 / 2.0;
        let s = sps as isize;
        let mut taps: Vec<(isize, f64)> = (-(PULSE_SPAN as isize) * s..=(PULSE_SPAN as isize) * s)
            .filter_map(|j| {
                // midpoint of sample j relative to the symbol center
                let t = (j as f64 + 0.5) / sps as f64 - 0.5;
                (t >= -half_span && t < half_span).then(|| (j, frequency_pulse(t, bt)))
            })
            .collect();
        let total: f64 = taps.iter().map(|&(_, w)| w).sum();
        taps.iter_mut().for_each(|(_, w)| *w /= total);
        Shaper { sps, taps }
    }

    pub fn taps(&self) -> &[(isize, f64)] {
        &self.taps
    }

    /// Symbols on either side of a window whose pulses reach into it.
    pub fn guard_symbols(&self) -> usize {
        PULSE_SPAN / 2 + 1
    }

    /// Per-sample phase increments (radians) for the samples of
    /// `symbols[lead..lead + count]`, plus the phase accumulated before them
    /// by the pulses of `symbols` that started earlier.
    pub fn phase_increments(&self, symbols: &[f64], lead: usize, count: usize) -> (Vec<f64>, f64) {
        let sps = self.sps as isize;
        let start = lead as isize * sps;
        let len = (count * self.sps) as isize;
        let mut inc = vec![0.0; len as usize];
        let mut before = 0.0;
        for (k, &a) in symbols.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let origin = k as isize * sps - start;
            for &(j, w) in &self.taps {
                let pos = origin + j;
                if pos < 0 {
                    before += a * w * FRAC_PI_2;
                } else if pos < len {
                    inc[pos as usize] += a * w * FRAC_PI_2;
                }
            }
        }
        (inc, before)
    }

    /// Unit-amplitude subcarrier waveform `m[n]` in `[-1, 1]` for real-valued symbols.
    pub fn render(&self, symbols: &[f64], lead: usize, count: usize, base_phase: f64, first_sample: u64) -> Vec<f64> {
        let (inc, before) = self.phase_increments(symbols, lead, count);
        let mut theta = base_phase + before;
        inc.iter()
            .enumerate()
            .map(|(n, d)| {
                theta += d;
                let carrier = FRAC_PI_2 * ((first_sample + n as u64) % 4) as f64;
                (carrier + theta).cos()
            })
            .collect()
    }

    /// Waveform for bits mapped 1 -> +1, 0 -> -1.
    pub fn waveform(&self, bits: &[u8], lead: usize, count: usize, base_phase: f64, first_sample: u64) -> Vec<f64> {
        let symbols: Vec<f64> = bits.iter().map(|&b| crate::bits::bipolar(b) as f64).collect();
        self.render(&symbols, lead, count, base_phase, first_sample)
    }
}

/// Analytic signal of a real block around the `fs / 4` subcarrier.
///
/// Interior samples take the quadrature component `(x[n-1] - x[n+1]) / 2`,
/// which is exact at `fs / 4`. The two edge samples lack a neighbour; there
/// the in-phase part is the sample itself and the quadrature magnitude
/// follows from the envelope, with its sign taken from the one-sided
/// neighbour. The block mean is removed first.
pub fn analytic_signal(samples: &[f64]) -> Vec<Complex64> {
    let n = samples.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let x: Vec<f64> = samples.iter().map(|v| v - mean).collect();
    if n < 3 {
        return x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    }
    let mut z: Vec<Complex64> = (0..n)
        .map(|i| {
            let q = if i == 0 {
                -x[1]
            } else if i == n - 1 {
                x[n - 2]
            } else {
                (x[i - 1] - x[i + 1]) / 2.0
            };
            Complex64::new(x[i], q)
        })
        .collect();
    let envelope = z[1..n - 1].iter().map(|v| v.norm_sqr()).sum::<f64>() / (n - 2) as f64;
    for i in [0, n - 1] {
        let q = (envelope - x[i] * x[i]).max(0.0).sqrt();
        z[i].im = q.copysign(z[i].im);
    }
    z
}

/// Instantaneous frequency relative to the subcarrier, in radians per sample.
/// The first sample has no predecessor and repeats the second sample's value.
pub fn discriminate(samples: &[f64]) -> Vec<f64> {
    let z = analytic_signal(samples);
    let mut out = Vec::with_capacity(z.len());
    for pair in z.windows(2) {
        out.push(wrap((pair[1] * pair[0].conj()).arg() - FRAC_PI_2));
    }
    if let Some(&first) = out.first() {
        out.insert(0, first);
    } else if !z.is_empty() {
        out.push(0.0);
    }
    out
}

/// Unwrapped carrier-relative phase trajectory, starting at 0.
pub fn instantaneous_phase(samples: &[f64]) -> Vec<f64> {
    let mut phase = 0.0;
    discriminate(samples)
        .into_iter()
        .map(|d| {
            phase += d;
            phase
        })
        .collect()
}

fn wrap(x: f64) -> f64 {
    let mut y = x % (2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    } else if y <= -PI {
        y += 2.0 * PI;
    }
    y
}
