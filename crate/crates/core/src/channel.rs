//! Synthetic NRZ link: symbol-spaced FIR, first-order low-pass and AWGN.
//!
//! Stands in for recorded CPU-to-DRAM write waveforms. Bits are rendered onto
//! the 10 ps grid with a zero-order hold; the channel response is applied in
//! the symbol domain before rendering, the low-pass and noise on the sample
//! grid after it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eye::EyeGeometry;
use crate::signal::{
    extract_segments, label_validity, EyeMask, Segment, Validity, Waveform, DEFAULT_DT_PS, DEFAULT_UI_PS,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub seed: u64,
    /// Half-amplitude of the NRZ levels (mV).
    pub swing: f64,
    /// Weight of the current symbol.
    #[serde(default = "one")]
    pub main_cursor: f64,
    /// Post-cursor weights, symbol-spaced.
    pub isi_taps: Vec<f64>,
    /// Low-pass pole (GHz); `None` disables the filter.
    pub lp_pole_ghz: Option<f64>,
    /// Additive Gaussian noise (mV).
    pub noise_sigma: f64,
    pub n_bits: usize,
    /// Bulk flight time of the link (ps); shifts the output against the
    /// nominal symbol grid the receiver folds and slices on.
    #[serde(default)]
    pub delay_ps: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_ui")]
    pub ui: f64,
}

/// Flight time of the stressed link. Places the centred 80 mV x 35 ps mask
/// on the marginal part of the eye so both labels occur.
pub const STRESSED_DELAY_PS: f64 = 140.0;

fn one() -> f64 {
    1.0
}
fn default_dt() -> f64 {
    DEFAULT_DT_PS
}
fn default_ui() -> f64 {
    DEFAULT_UI_PS
}

impl ChannelConfig {
    /// Distortion-free link: output equals input.
    pub fn identity(seed: u64, n_bits: usize) -> Self {
        Self {
            seed,
            swing: 400.0,
            main_cursor: 1.0,
            isi_taps: vec![],
            lp_pole_ghz: None,
            noise_sigma: 0.0,
            n_bits,
            delay_ps: 0.0,
            dt: DEFAULT_DT_PS,
            ui: DEFAULT_UI_PS,
        }
    }

    /// Default lossy link used for training and evaluation.
    pub fn stressed(seed: u64, n_bits: usize) -> Self {
        Self {
            seed,
            swing: 400.0,
            main_cursor: 1.0,
            isi_taps: vec![0.35, 0.18, 0.08],
            lp_pole_ghz: Some(4.0),
            noise_sigma: 8.0,
            n_bits,
            delay_ps: STRESSED_DELAY_PS,
            dt: DEFAULT_DT_PS,
            ui: DEFAULT_UI_PS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.swing > 0.0 && self.swing.is_finite()) {
            return Err(Error::Config(format!("swing must be positive, got {}", self.swing)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!("noise sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if !self.main_cursor.is_finite() || self.isi_taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("channel taps must be finite".into()));
        }
        if let Some(p) = self.lp_pole_ghz {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::Config(format!("low-pass pole must be positive, got {p}")));
            }
        }
        if self.n_bits == 0 {
            return Err(Error::Config("n_bits must be at least 1".into()));
        }
        if !(self.delay_ps >= 0.0 && self.delay_ps.is_finite()) {
            return Err(Error::Config(format!("delay must be >= 0, got {}", self.delay_ps)));
        }
        if !(self.dt > 0.0 && self.ui > 0.0) {
            return Err(Error::Config("dt and ui must be positive".into()));
        }
        Ok(())
    }

    /// Samples produced for `n_bits` symbols.
    pub fn n_samples(&self) -> usize {
        ((self.n_bits as f64 * self.ui) / self.dt).floor().max(1.0) as usize
    }

    /// Symbols needed so the output holds at least `n` samples.
    pub fn bits_for_samples(&self, n: usize) -> usize {
        ((n as f64 * self.dt) / self.ui).ceil() as usize + 1
    }

    /// Transmitted bit seen at the centre of received symbol `m` is
    /// `bits[m + symbol_offset()]`.
    pub fn symbol_offset(&self) -> i64 {
        (0.5 - self.delay_ps / self.ui).floor() as i64
    }

    pub fn eye_geometry(&self) -> EyeGeometry {
        EyeGeometry::for_swing(self.swing)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPair {
    pub input: Waveform,
    pub output: Waveform,
    /// Ideal input delayed by the channel flight time, aligned with `output`.
    pub reference: Waveform,
    pub bits: Vec<u8>,
}

/// Seeded, balanced pseudo-random bits.
pub fn generate_bits(n: usize, seed: u64) -> Result<Vec<u8>> {
    if n == 0 {
        return Err(Error::Parameter("bit count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| rng.random::<bool>() as u8).collect())
}

fn symbol(b: u8) -> f64 {
    if b == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Channel output at the symbol rate: `swing * (main*b[n] + sum h_i b[n-i])`,
/// with symbols before the first bit taken as zero.
pub fn symbol_response(bits: &[u8], cfg: &ChannelConfig) -> Vec<f64> {
    (0..bits.len())
        .map(|n| {
            let post: f64 = cfg
                .isi_taps
                .iter()
                .enumerate()
                .filter(|(i, _)| n > *i)
                .map(|(i, h)| h * symbol(bits[n - i - 1]))
                .sum();
            cfg.swing * (cfg.main_cursor * symbol(bits[n]) + post)
        })
        .collect()
}

/// Zero-order hold onto the sample grid, delayed by `delay` ps. Samples
/// before the first symbol arrives hold its level.
fn render(levels: &[f64], cfg: &ChannelConfig, delay: f64) -> Vec<f64> {
    (0..cfg.n_samples())
        .map(|k| {
            let n = ((k as f64 * cfg.dt - delay) / cfg.ui).floor().max(0.0) as usize;
            levels[n.min(levels.len() - 1)]
        })
        .collect()
}

/// First-order low-pass, discretized exactly for a piecewise-constant input.
fn low_pass(x: &mut [f64], pole_ghz: f64, dt: f64) {
    let omega = 2.0 * std::f64::consts::PI * pole_ghz * 1e-3; // rad/ps
    let alpha = 1.0 - (-omega * dt).exp();
    let mut y = x[0];
    for v in x.iter_mut() {
        y += alpha * (*v - y);
        *v = y;
    }
}

pub fn synthesize_pair(cfg: &ChannelConfig) -> Result<DataPair> {
    cfg.validate()?;
    let bits = generate_bits(cfg.n_bits, cfg.seed)?;
    let ideal: Vec<f64> = bits.iter().map(|&b| cfg.swing * symbol(b)).collect();
    let input = render(&ideal, cfg, 0.0);
    let reference = render(&ideal, cfg, cfg.delay_ps);
    let mut output = render(&symbol_response(&bits, cfg), cfg, cfg.delay_ps);
    if let Some(pole) = cfg.lp_pole_ghz {
        low_pass(&mut output, pole, cfg.dt);
    }
    if cfg.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        let normal = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
        for v in output.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(DataPair {
        input: Waveform::new(input, cfg.dt, cfg.ui)?,
        output: Waveform::new(output, cfg.dt, cfg.ui)?,
        reference: Waveform::new(reference, cfg.dt, cfg.ui)?,
        bits,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSegment {
    pub output: Segment,
    pub ideal: Segment,
    pub label: Validity,
}

/// Segments of one synthesized link, each labeled against the mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub config: ChannelConfig,
    pub bits: Vec<u8>,
    pub segments: Vec<LabeledSegment>,
}

impl Dataset {
    pub fn valid_count(&self) -> usize {
        self.segments.iter().filter(|s| s.label.is_valid()).count()
    }

    pub fn invalid_count(&self) -> usize {
        self.segments.len() - self.valid_count()
    }
}

pub fn build_dataset(cfg: &ChannelConfig, n_x: usize, stride: usize, mask: &EyeMask) -> Result<Dataset> {
    mask.validate(cfg.ui)?;
    let pair = synthesize_pair(cfg)?;
    let outputs = extract_segments(&pair.output, n_x, stride)?;
    let inputs = extract_segments(&pair.reference, n_x, stride)?;
    let segments = outputs
        .into_iter()
        .zip(inputs)
        .map(|(output, ideal)| {
            let label = label_validity(&output, mask)?;
            Ok(LabeledSegment { output, ideal, label })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        config: cfg.clone(),
        bits: pair.bits,
        segments,
    })
}

/// Bits needed for `count` segments of `n_x` samples at `stride`.
pub fn bits_for_segments(cfg: &ChannelConfig, n_x: usize, stride: usize, count: usize) -> usize {
    cfg.bits_for_samples(n_x + count.saturating_sub(1) * stride)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bits_are_deterministic_and_balanced() {
        assert_eq!(generate_bits(8, 1).unwrap(), generate_bits(8, 1).unwrap());
        let b = generate_bits(100_000, 7).unwrap();
        let frac = b.iter().map(|&x| x as f64).sum::<f64>() / b.len() as f64;
        assert!((0.49..=0.51).contains(&frac), "{frac}");
        let one = generate_bits(1, 3).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one[0] <= 1);
        assert!(matches!(generate_bits(0, 1), Err(Error::Parameter(_))));
    }

    #[test]
    fn identity_channel_passes_input() {
        let pair = synthesize_pair(&ChannelConfig::identity(5, 200)).unwrap();
        assert_eq!(pair.input.samples(), pair.output.samples());
    }

    #[test]
    fn half_cursor_halves_output() {
        let mut cfg = ChannelConfig::identity(5, 200);
        cfg.main_cursor = 0.5;
        let pair = synthesize_pair(&cfg).unwrap();
        for (a, b) in pair.input.samples().iter().zip(pair.output.samples()) {
            assert_eq!(0.5 * a, *b);
        }
    }

    #[test]
    fn post_cursors_match_symbol_convolution() {
        let mut cfg = ChannelConfig::identity(11, 300);
        cfg.isi_taps = vec![0.4, 0.2];
        let pair = synthesize_pair(&cfg).unwrap();
        let s = |b: u8| if b == 1 { 1.0 } else { -1.0 };
        for n in 2..cfg.n_bits - 1 {
            let idx = pair.output.ui_center_index(n as i64).unwrap();
            let b = &pair.bits;
            let expect = cfg.swing * (s(b[n]) + 0.4 * s(b[n - 1]) + 0.2 * s(b[n - 2]));
            assert!((pair.output.samples()[idx] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_in_swing_without_noise() {
        let mut cfg = ChannelConfig::stressed(3, 400);
        cfg.noise_sigma = 0.0;
        let a = synthesize_pair(&cfg).unwrap();
        cfg.swing *= 2.0;
        let b = synthesize_pair(&cfg).unwrap();
        for (x, y) in a.output.samples().iter().zip(b.output.samples()) {
            assert!((2.0 * x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn delay_shifts_output_and_offset_tracks_it() {
        let mut cfg = ChannelConfig::identity(8, 100);
        cfg.delay_ps = STRESSED_DELAY_PS;
        let pair = synthesize_pair(&cfg).unwrap();
        assert_eq!(cfg.symbol_offset(), -1);
        for m in 2..90i64 {
            let idx = pair.output.ui_center_index(m).unwrap();
            let bit = pair.bits[(m + cfg.symbol_offset()) as usize];
            assert_eq!(pair.output.samples()[idx] > 0.0, bit == 1);
        }
        assert_eq!(ChannelConfig::identity(8, 100).symbol_offset(), 0);
    }

    #[test]
    fn clean_dataset_is_all_valid() {
        let cfg = ChannelConfig::identity(2, 200);
        let mask = EyeMask::standard(cfg.ui);
        let ds = build_dataset(&cfg, 500, 100, &mask).unwrap();
        assert!(!ds.segments.is_empty());
        assert_eq!(ds.invalid_count(), 0);
    }

    #[test]
    fn heavy_noise_closes_the_eye() {
        let mut cfg = ChannelConfig::stressed(9, 0);
        cfg.noise_sigma = cfg.swing;
        cfg.n_bits = bits_for_segments(&cfg, 500, 50, 100);
        let ds = build_dataset(&cfg, 500, 50, &EyeMask::standard(cfg.ui)).unwrap();
        assert!(ds.segments.len() >= 100);
        let invalid = ds.segments[..100].iter().filter(|s| !s.label.is_valid()).count();
        assert!(invalid >= 90, "{invalid}");
    }

    #[test]
    fn dataset_is_deterministic() {
        let cfg = ChannelConfig::stressed(4, 300);
        let mask = EyeMask::standard(cfg.ui);
        let a = build_dataset(&cfg, 400, 60, &mask).unwrap();
        let b = build_dataset(&cfg, 400, 60, &mask).unwrap();
        assert_eq!(a, b);
    }
}
