//! CTLE and DFE models, their cascade, and the action-to-parameter map.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Waveform;

pub const DFE_TAPS: usize = 4;
/// Lowest zero/pole frequency accepted by the CTLE (GHz).
pub const CTLE_FREQ_FLOOR_GHZ: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EqualizerKind {
    Dfe,
    CtleDfe,
}

impl EqualizerKind {
    pub fn dim(self) -> usize {
        match self {
            EqualizerKind::Dfe => DFE_TAPS,
            EqualizerKind::CtleDfe => DFE_TAPS + 4,
        }
    }

    pub fn ranges(self) -> ParamRanges {
        match self {
            EqualizerKind::Dfe => ParamRanges::dfe(),
            EqualizerKind::CtleDfe => ParamRanges::ctle_dfe(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EqualizerKind::Dfe => "dfe",
            EqualizerKind::CtleDfe => "ctle-dfe",
        }
    }

    /// Action that leaves a signal untouched: zero taps and, for the
    /// cascade, a unity all-pass CTLE (`G_dc = 1`, `f_z = f_p`, `G_p = 0`).
    pub fn identity_action(self) -> Vec<f64> {
        match self {
            EqualizerKind::Dfe => vec![0.0; DFE_TAPS],
            EqualizerKind::CtleDfe => {
                let mut a = vec![0.1, 1.0, 0.1, 0.0];
                a.extend([0.0; DFE_TAPS]);
                a
            }
        }
    }
}

impl std::str::FromStr for EqualizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dfe" => Ok(EqualizerKind::Dfe),
            "ctle-dfe" | "ctle+dfe" => Ok(EqualizerKind::CtleDfe),
            other => Err(Error::Config(format!("unknown equalizer kind `{other}`"))),
        }
    }
}

/// Physical bounds of each action dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRanges {
    pub bounds: Vec<(f64, f64)>,
}

impl ParamRanges {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if let Some((lo, hi)) = bounds.iter().find(|(lo, hi)| !(lo < hi)) {
            return Err(Error::Parameter(format!("empty range [{lo}, {hi}]")));
        }
        Ok(Self { bounds })
    }

    pub fn dfe() -> Self {
        Self {
            bounds: vec![(0.0, 1.0); DFE_TAPS],
        }
    }

    /// `G_dc` in [0,10], `f_z` in [0,1] GHz, `f_p` in [0,10] GHz,
    /// `G_p` in [0,20] dB, then the four taps.
    pub fn ctle_dfe() -> Self {
        let mut bounds = vec![(0.0, 10.0), (0.0, 1.0), (0.0, 10.0), (0.0, 20.0)];
        bounds.extend([(0.0, 1.0); DFE_TAPS]);
        Self { bounds }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappedParams {
    pub values: Vec<f64>,
    /// Some action component was outside [0,1] and got clipped.
    pub clipped: bool,
}

/// `p_i = lo_i + a_i (hi_i - lo_i)` after clipping `a` into the unit box.
pub fn map_action(a: &[f64], r: &ParamRanges) -> Result<MappedParams> {
    if a.len() != r.dim() {
        return Err(Error::Shape(format!(
            "action has {} components, ranges have {}",
            a.len(),
            r.dim()
        )));
    }
    let mut clipped = false;
    let values = a
        .iter()
        .zip(&r.bounds)
        .map(|(&x, &(lo, hi))| {
            if x.is_nan() {
                clipped = true;
                return lo;
            }
            let c = x.clamp(0.0, 1.0);
            clipped |= c != x;
            lo + c * (hi - lo)
        })
        .collect();
    Ok(MappedParams { values, clipped })
}

/// Inverse of [`map_action`] on the box.
pub fn unmap_params(p: &[f64], r: &ParamRanges) -> Result<Vec<f64>> {
    if p.len() != r.dim() {
        return Err(Error::Shape(format!("{} params for {} ranges", p.len(), r.dim())));
    }
    Ok(p.iter().zip(&r.bounds).map(|(&v, &(lo, hi))| (v - lo) / (hi - lo)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SwingEstimate {
    /// Mean |x| over the UI-centre samples of the signal being equalized.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DfeParams {
    pub taps: [f64; DFE_TAPS],
    pub swing: SwingEstimate,
}

impl DfeParams {
    /// Taps are clipped to [0,1].
    pub fn new(taps: [f64; DFE_TAPS]) -> Self {
        Self {
            taps: taps.map(|t| t.clamp(0.0, 1.0)),
            swing: SwingEstimate::Auto,
        }
    }

    pub fn zero() -> Self {
        Self::new([0.0; DFE_TAPS])
    }

    pub fn with_swing(mut self, swing: SwingEstimate) -> Self {
        self.swing = swing;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CtleParams {
    pub g_dc: f64,
    /// GHz
    pub f_z: f64,
    /// GHz
    pub f_p: f64,
    /// dB
    pub g_p: f64,
}

impl CtleParams {
    pub fn unity() -> Self {
        Self {
            g_dc: 1.0,
            f_z: 1.0,
            f_p: 1.0,
            g_p: 0.0,
        }
    }
}

/// Normalized first-order section: `H(z) = (b0 + b1 z^-1) / (1 + a1 z^-1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CtleCoeffs {
    pub b0: f64,
    pub b1: f64,
    pub a1: f64,
    /// `f_z` or `f_p` was raised to the frequency floor.
    pub clamped: bool,
}

impl CtleCoeffs {
    pub fn dc_gain(&self) -> f64 {
        (self.b0 + self.b1) / (1.0 + self.a1)
    }

    /// `|H(e^{j 2 pi f T})|` for `f` in GHz and `dt` in ps.
    pub fn magnitude(&self, f_ghz: f64, dt: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * f_ghz * 1e-3 * dt;
        let (c, s) = (w.cos(), w.sin());
        let num = ((self.b0 + self.b1 * c).powi(2) + (self.b1 * s).powi(2)).sqrt();
        let den = ((1.0 + self.a1 * c).powi(2) + (self.a1 * s).powi(2)).sqrt();
        num / den
    }
}

fn rad_per_ps(f_ghz: f64) -> f64 {
    2.0 * std::f64::consts::PI * f_ghz * 1e-3
}

/// Bilinear discretization of
/// `G_dc (s + wz') / (s + wp) * (wp / wz')` with `wz' = wz 10^(-G_p/20)`.
pub fn ctle_coeffs(p: &CtleParams, dt: f64) -> Result<CtleCoeffs> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Parameter(format!("sample period must be positive, got {dt}")));
    }
    if ![p.g_dc, p.f_z, p.f_p, p.g_p].iter().all(|v| v.is_finite()) {
        return Err(Error::Parameter("CTLE parameters must be finite".into()));
    }
    let clamped = p.f_z < CTLE_FREQ_FLOOR_GHZ || p.f_p < CTLE_FREQ_FLOOR_GHZ;
    let wz = rad_per_ps(p.f_z.max(CTLE_FREQ_FLOOR_GHZ)) * 10f64.powf(-p.g_p / 20.0);
    let wp = rad_per_ps(p.f_p.max(CTLE_FREQ_FLOOR_GHZ));
    let k = 2.0 / dt;
    let g = p.g_dc * wp / wz;
    let den = k + wp;
    Ok(CtleCoeffs {
        b0: g * (k + wz) / den,
        b1: g * (wz - k) / den,
        a1: (wp - k) / den,
        clamped,
    })
}

fn check_finite(sig: &Waveform) -> Result<()> {
    match sig.samples().iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Signal(format!("non-finite sample at index {i}"))),
        None => Ok(()),
    }
}

pub fn filter_first_order(x: &[f64], c: &CtleCoeffs) -> Vec<f64> {
    let (mut xp, mut yp) = (0.0, 0.0);
    x.iter()
        .map(|&xn| {
            let y = c.b0 * xn + c.b1 * xp - c.a1 * yp;
            xp = xn;
            yp = y;
            y
        })
        .collect()
}

pub fn apply_ctle(sig: &Waveform, p: &CtleParams) -> Result<Waveform> {
    check_finite(sig)?;
    let c = ctle_coeffs(p, sig.dt())?;
    let y = filter_first_order(sig.samples(), &c);
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Signal("CTLE output diverged".into()));
    }
    Ok(Waveform::from_parts(y, sig.dt(), sig.ui(), sig.t0()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DfeReport {
    pub output: Waveform,
    /// Amplitude multiplying each decision in the feedback (mV).
    pub swing_est: f64,
    /// `(symbol index, decision)` for every symbol with a centre sample.
    pub decisions: Vec<(i64, i8)>,
}

/// Mean |x| over the UI-centre samples, falling back to all samples.
pub fn estimate_swing(sig: &Waveform) -> f64 {
    let (first, last) = sig.symbol_span();
    let centers: Vec<f64> = (first..=last)
        .filter_map(|n| sig.ui_center_index(n))
        .map(|i| sig.samples()[i].abs())
        .collect();
    if centers.is_empty() {
        sig.samples().iter().map(|v| v.abs()).sum::<f64>() / sig.len() as f64
    } else {
        centers.iter().sum::<f64>() / centers.len() as f64
    }
}

/// Symbol-spaced decision feedback: every sample of symbol `n` is corrected
/// by `sum_i t_i * swing_est * s[n-i]`, where `s` are sign decisions taken at
/// the UI-centre sample of the corrected signal. History starts at +1.
pub fn apply_dfe_report(sig: &Waveform, p: &DfeParams) -> Result<DfeReport> {
    check_finite(sig)?;
    let swing_est = match p.swing {
        SwingEstimate::Auto => estimate_swing(sig),
        SwingEstimate::Fixed(s) => s,
    };
    let x = sig.samples();
    let mut out = x.to_vec();
    let mut decisions = Vec::new();
    if p.taps.iter().all(|&t| t == 0.0) {
        return Ok(DfeReport {
            output: Waveform::from_parts(out, sig.dt(), sig.ui(), sig.t0()),
            swing_est,
            decisions,
        });
    }
    let mut history = [1.0f64; DFE_TAPS];
    let (first, last) = sig.symbol_span();
    let mut idx = 0;
    for n in first..=last {
        let feedback: f64 = p.taps.iter().zip(&history).map(|(t, s)| t * s).sum::<f64>() * swing_est;
        while idx < x.len() && (sig.time_of(idx) / sig.ui()).floor() as i64 == n {
            out[idx] = x[idx] - feedback;
            idx += 1;
        }
        if let Some(c) = sig.ui_center_index(n) {
            let d: i8 = if out[c] >= 0.0 { 1 } else { -1 };
            history.rotate_right(1);
            history[0] = d as f64;
            decisions.push((n, d));
        }
    }
    Ok(DfeReport {
        output: Waveform::from_parts(out, sig.dt(), sig.ui(), sig.t0()),
        swing_est,
        decisions,
    })
}

pub fn apply_dfe(sig: &Waveform, p: &DfeParams) -> Result<Waveform> {
    apply_dfe_report(sig, p).map(|r| r.output)
}

/// Optional CTLE followed by the DFE.
pub fn apply_chain(sig: &Waveform, ctle: Option<&CtleParams>, dfe: &DfeParams) -> Result<Waveform> {
    match ctle {
        Some(c) => apply_dfe(&apply_ctle(sig, c)?, dfe),
        None => apply_dfe(sig, dfe),
    }
}

/// Complete parameter set for one equalizer configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EqualizerSetting {
    pub ctle: Option<CtleParams>,
    pub dfe: DfeParams,
}

impl EqualizerSetting {
    /// From a physical vector laid out as in [`ParamRanges`].
    pub fn from_physical(kind: EqualizerKind, p: &[f64]) -> Result<Self> {
        if p.len() != kind.dim() {
            return Err(Error::Shape(format!(
                "{} expects {} parameters, got {}",
                kind.name(),
                kind.dim(),
                p.len()
            )));
        }
        let taps_at = |o: usize| [p[o], p[o + 1], p[o + 2], p[o + 3]];
        Ok(match kind {
            EqualizerKind::Dfe => Self {
                ctle: None,
                dfe: DfeParams::new(taps_at(0)),
            },
            EqualizerKind::CtleDfe => Self {
                ctle: Some(CtleParams {
                    g_dc: p[0],
                    f_z: p[1],
                    f_p: p[2],
                    g_p: p[3],
                }),
                dfe: DfeParams::new(taps_at(4)),
            },
        })
    }

    pub fn from_action(kind: EqualizerKind, a: &[f64]) -> Result<Self> {
        let mapped = map_action(a, &kind.ranges())?;
        Self::from_physical(kind, &mapped.values)
    }

    pub fn apply(&self, sig: &Waveform) -> Result<Waveform> {
        apply_chain(sig, self.ctle.as_ref(), &self.dfe)
    }
}
