use std::f64::consts::PI;

use super::SampleBuffer;

/// Zero crossings of the low-pass sinc kept on each side of the kernel centre.
pub const KERNEL_HALF_WIDTH: usize = 32;

const KAISER_BETA: f64 = 8.0;

/// Phase tables larger than this are computed per output sample instead.
const MAX_TABLE_ENTRIES: usize = 1 << 22;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

struct Kernel {
    /// Low-pass cutoff as a fraction of the input Nyquist frequency.
    cutoff: f64,
    /// Support in input samples on each side.
    support: f64,
    i0_beta: f64,
}

impl Kernel {
    fn new(cutoff: f64) -> Self {
        Self {
            cutoff,
            support: KERNEL_HALF_WIDTH as f64 / cutoff,
            i0_beta: bessel_i0(KAISER_BETA),
        }
    }

    fn eval(&self, x: f64) -> f64 {
        let u = x / self.support;
        if u.abs() >= 1.0 {
            return 0.0;
        }
        let arg = self.cutoff * x;
        let sinc = if arg == 0.0 {
            1.0
        } else {
            (PI * arg).sin() / (PI * arg)
        };
        let window = bessel_i0(KAISER_BETA * (1.0 - u * u).sqrt()) / self.i0_beta;
        self.cutoff * sinc * window
    }

    /// Coefficients for taps `i - (span - 1) ..= i + span` at fractional offset `frac`,
    /// normalized to unit DC gain.
    fn fill_phase(&self, frac: f64, span: usize, out: &mut [f64]) {
        let mut sum = 0.0;
        for (slot, j) in out.iter_mut().zip(-(span as i64 - 1)..=span as i64) {
            *slot = self.eval(frac - j as f64);
            sum += *slot;
        }
        if sum != 0.0 {
            for c in out.iter_mut() {
                *c /= sum;
            }
        }
    }
}

/// Resamples `buf` to `target_rate` with a Kaiser-windowed sinc kernel
/// (polyphase when the rate ratio reduces to a manageable number of phases).
///
/// The low-pass cutoff sits at the smaller of the two Nyquist frequencies.
/// Output length is `round(len * target_rate / sample_rate)`; equal rates
/// return the input untouched.
///
/// # Panics
/// If `target_rate` is zero.
pub fn resample(buf: SampleBuffer, target_rate: u32) -> SampleBuffer {
    assert!(target_rate > 0, "target_rate must be positive");
    if buf.sample_rate == target_rate {
        return buf;
    }
    let in_rate = u64::from(buf.sample_rate);
    let out_rate = u64::from(target_rate);
    let in_len = buf.samples.len();
    let out_len = ((in_len as u128 * out_rate as u128 + in_rate as u128 / 2) / in_rate as u128)
        as usize;

    let g = gcd(in_rate, out_rate);
    let up = (out_rate / g) as usize;
    let down = (in_rate / g) as usize;

    let kernel = Kernel::new((out_rate as f64 / in_rate as f64).min(1.0));
    let span = kernel.support.ceil() as usize;
    let taps = 2 * span;

    let table: Option<Vec<f64>> = (up * taps <= MAX_TABLE_ENTRIES).then(|| {
        let mut t = vec![0.0; up * taps];
        for (p, row) in t.chunks_exact_mut(taps).enumerate() {
            kernel.fill_phase(p as f64 / up as f64, span, row);
        }
        t
    });

    let src = &buf.samples;
    let mut scratch = vec![0.0; taps];
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len {
        let num = n as u128 * down as u128;
        let i = (num / up as u128) as i64;
        let phase = (num % up as u128) as usize;
        let coeffs: &[f64] = match &table {
            Some(t) => &t[phase * taps..(phase + 1) * taps],
            None => {
                kernel.fill_phase(phase as f64 / up as f64, span, &mut scratch);
                &scratch
            }
        };
        let first = i - (span as i64 - 1);
        let mut acc = 0.0;
        for (j, c) in coeffs.iter().enumerate() {
            let k = first + j as i64;
            if k >= 0 && (k as usize) < in_len {
                acc += c * f64::from(src[k as usize]);
            }
        }
        out.push(acc.clamp(-1.0, 1.0) as f32);
    }

    SampleBuffer::new(out, target_rate)
}
