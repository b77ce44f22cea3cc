use super::{AudioClip, AudioError};

/// Taps touched per output sample.
pub const TAPS_PER_PHASE: usize = 64;
pub const KAISER_BETA: f64 = 8.6;
const ROLLOFF: f64 = 0.94;
/// Above this many phases the kernel is evaluated per output sample instead
/// of being tabulated.
const MAX_TABLE_PHASES: usize = 4096;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zeroth-order modified Bessel function of the first kind (power series).
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
    cutoff: f64,
    half_width: f64,
    i0_beta: f64,
}

impl Kernel {
    fn new(cutoff: f64) -> Self {
        Self {
            cutoff,
            half_width: TAPS_PER_PHASE as f64 / 2.0,
            i0_beta: bessel_i0(KAISER_BETA),
        }
    }

    fn eval(&self, tau: f64) -> f64 {
        let r = tau / self.half_width;
        if r.abs() >= 1.0 {
            return 0.0;
        }
        let arg = 2.0 * self.cutoff * tau;
        let sinc = if arg.abs() < 1e-12 {
            1.0
        } else {
            (std::f64::consts::PI * arg).sin() / (std::f64::consts::PI * arg)
        };
        let window = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / self.i0_beta;
        2.0 * self.cutoff * sinc * window
    }

    /// Unit-DC-gain taps for an output sample at fractional offset `frac`
    /// past input index `base`; tap `j` multiplies input `base + j - (TAPS/2 - 1)`.
    fn taps(&self, frac: f64, out: &mut [f64; TAPS_PER_PHASE]) {
        let left = (TAPS_PER_PHASE / 2 - 1) as f64;
        let mut sum = 0.0;
        for (j, slot) in out.iter_mut().enumerate() {
            let tau = frac + left - j as f64;
            *slot = self.eval(tau);
            sum += *slot;
        }
        if sum.abs() > 0.0 {
            for slot in out.iter_mut() {
                *slot /= sum;
            }
        }
    }
}

/// Converts a clip to `target_rate` with a polyphase Kaiser-windowed sinc
/// filter. Equal rates return the clip unchanged.
///
/// The output length is `round(len * target / source)` (at least one
/// sample), so duration is preserved within half an output sample.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip, AudioError> {
    if target_rate == 0 {
        return Err(AudioError::InvalidRate(0));
    }
    let src_rate = clip.sample_rate();
    if src_rate == target_rate {
        return Ok(clip.clone());
    }
    let g = gcd(u64::from(src_rate), u64::from(target_rate));
    let up = u64::from(target_rate) / g;
    let down = u64::from(src_rate) / g;
    let input = clip.samples();
    let n_in = input.len() as u64;
    let n_out = ((n_in * u64::from(target_rate) + u64::from(src_rate) / 2)
        / u64::from(src_rate))
    .max(1) as usize;

    let ratio = f64::from(target_rate) / f64::from(src_rate);
    let kernel = Kernel::new(0.5 * ratio.min(1.0) * ROLLOFF);
    let table: Option<Vec<[f64; TAPS_PER_PHASE]>> = (up as usize <= MAX_TABLE_PHASES).then(|| {
        (0..up)
            .map(|p| {
                let mut taps = [0.0; TAPS_PER_PHASE];
                kernel.taps(p as f64 / up as f64, &mut taps);
                taps
            })
            .collect()
    });

    let left = (TAPS_PER_PHASE / 2 - 1) as i64;
    let mut scratch = [0.0; TAPS_PER_PHASE];
    let mut out = Vec::with_capacity(n_out);
    for n in 0..n_out as u64 {
        let pos = n * down;
        let base = (pos / up) as i64;
        let phase = pos % up;
        let taps = match &table {
            Some(t) => &t[phase as usize],
            None => {
                kernel.taps(phase as f64 / up as f64, &mut scratch);
                &scratch
            }
        };
        let start = base - left;
        let mut acc = 0.0;
        for (j, &w) in taps.iter().enumerate() {
            let idx = start + j as i64;
            if idx >= 0 && (idx as u64) < n_in {
                acc += w * f64::from(input[idx as usize]);
            }
        }
        out.push(acc as f32);
    }
    AudioClip::new(out, target_rate, clip.source_id())
}
