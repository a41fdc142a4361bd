//! Sampled waveforms, fixed-length segments and eye-mask validity labels.
//!
//! All times are in picoseconds and all voltages in millivolts. A waveform
//! carries the absolute time of its first sample (`t0`) so that folding at the
//! unit interval stays phase-locked to the transmitted symbols even for
//! segments cut from the middle of a recording.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eye::{fold_eye, EyeGeometry};

/// Sample period of the recorded waveforms (ps).
pub const DEFAULT_DT_PS: f64 = 10.0;
/// Unit interval at 6400 Mbps (ps).
pub const DEFAULT_UI_PS: f64 = 156.3;
/// Resolution used for eye analysis (ps).
pub const EYE_DT_PS: f64 = 1.0;
pub const DEFAULT_SEGMENT_LEN: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    samples: Vec<f64>,
    dt: f64,
    ui: f64,
    t0: f64,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, dt: f64, ui: f64) -> Result<Self> {
        Self::with_start(samples, dt, ui, 0.0)
    }

    pub fn with_start(samples: Vec<f64>, dt: f64, ui: f64, t0: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Parameter(format!("sample period must be positive, got {dt}")));
        }
        if !(ui > 0.0 && ui.is_finite()) {
            return Err(Error::Parameter(format!("unit interval must be positive, got {ui}")));
        }
        if !t0.is_finite() {
            return Err(Error::Parameter("start time must be finite".into()));
        }
        if samples.is_empty() {
            return Err(Error::Segmentation("waveform has no samples".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Signal(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, dt, ui, t0 })
    }

    /// Builds a waveform without validation. Callers guarantee the invariants.
    pub(crate) fn from_parts(samples: Vec<f64>, dt: f64, ui: f64, t0: f64) -> Self {
        Self { samples, dt, ui, t0 }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn ui(&self) -> f64 {
        self.ui
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Absolute time of sample `i`.
    pub fn time_of(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    /// Same timing, new samples.
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        Self::with_start(samples, self.dt, self.ui, self.t0)
    }

    /// Index of the sample closest to the centre of symbol `n`, if it falls
    /// inside the waveform and inside that symbol.
    pub fn ui_center_index(&self, n: i64) -> Option<usize> {
        let t_center = (n as f64 + 0.5) * self.ui;
        let idx = ((t_center - self.t0) / self.dt).round();
        if idx < 0.0 || idx >= self.samples.len() as f64 {
            return None;
        }
        let idx = idx as usize;
        let sym = (self.time_of(idx) / self.ui).floor() as i64;
        (sym == n).then_some(idx)
    }

    /// Range of symbol indices overlapping this waveform.
    pub fn symbol_span(&self) -> (i64, i64) {
        let first = (self.t0 / self.ui).floor() as i64;
        let last = (self.time_of(self.samples.len() - 1) / self.ui).floor() as i64;
        (first, last)
    }
}

/// Fixed-length slice of a waveform, addressed by its start index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub data: Vec<f64>,
    pub origin: usize,
    pub dt: f64,
    pub ui: f64,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn start_time(&self) -> f64 {
        self.origin as f64 * self.dt
    }

    pub fn to_waveform(&self) -> Result<Waveform> {
        Waveform::with_start(self.data.clone(), self.dt, self.ui, self.start_time())
    }

    /// Re-wraps equalized samples with this segment's addressing.
    pub fn with_data(&self, data: Vec<f64>) -> Segment {
        Segment {
            data,
            origin: self.origin,
            dt: self.dt,
            ui: self.ui,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EyeMask {
    /// ps
    pub width: f64,
    /// mV
    pub height: f64,
    /// Offset inside the unit interval (ps).
    pub center_t: f64,
    /// mV
    pub center_v: f64,
}

impl EyeMask {
    /// 80 mV x 35 ps window centred in the eye.
    pub fn standard(ui: f64) -> Self {
        Self {
            width: 35.0,
            height: 80.0,
            center_t: ui / 2.0,
            center_v: 0.0,
        }
    }

    pub fn validate(&self, ui: f64) -> Result<()> {
        if !(self.width > 0.0 && self.width <= ui) {
            return Err(Error::Parameter(format!(
                "mask width {} must lie in (0, {ui}]",
                self.width
            )));
        }
        if !(self.height > 0.0 && self.height.is_finite()) {
            return Err(Error::Parameter(format!("mask height {} must be positive", self.height)));
        }
        if !(self.center_t.is_finite() && self.center_v.is_finite()) {
            return Err(Error::Parameter("mask centre must be finite".into()));
        }
        Ok(())
    }

    pub fn t_bounds(&self) -> (f64, f64) {
        (self.center_t - self.width / 2.0, self.center_t + self.width / 2.0)
    }

    pub fn v_bounds(&self) -> (f64, f64) {
        (self.center_v - self.height / 2.0, self.center_v + self.height / 2.0)
    }

    /// True if `other` lies inside this mask's rectangle.
    pub fn contains(&self, other: &EyeMask) -> bool {
        let (t0, t1) = self.t_bounds();
        let (v0, v1) = self.v_bounds();
        let (u0, u1) = other.t_bounds();
        let (w0, w1) = other.v_bounds();
        t0 <= u0 && u1 <= t1 && v0 <= w0 && w1 <= v1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Validity {
    Invalid = 0,
    Valid = 1,
}

impl Validity {
    pub fn y(self) -> u8 {
        self as u8
    }

    pub fn is_valid(self) -> bool {
        self == Validity::Valid
    }
}

impl From<Validity> for u8 {
    fn from(v: Validity) -> u8 {
        v as u8
    }
}

impl TryFrom<u8> for Validity {
    type Error = String;
    fn try_from(y: u8) -> std::result::Result<Self, String> {
        match y {
            0 => Ok(Validity::Invalid),
            1 => Ok(Validity::Valid),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

/// Rolling-window segmentation. Segment `k` starts at sample `k * stride`.
pub fn extract_segments(w: &Waveform, n_x: usize, stride: usize) -> Result<Vec<Segment>> {
    if n_x == 0 || stride == 0 {
        return Err(Error::Parameter("segment length and stride must be at least 1".into()));
    }
    if w.t0 != 0.0 {
        return Err(Error::Segmentation(
            "segments are addressed by sample index; waveform must start at t = 0".into(),
        ));
    }
    if w.len() < n_x {
        return Err(Error::Segmentation(format!(
            "waveform of {} samples is shorter than segment length {n_x}",
            w.len()
        )));
    }
    let count = (w.len() - n_x) / stride + 1;
    Ok((0..count)
        .map(|k| {
            let start = k * stride;
            Segment {
                data: w.samples[start..start + n_x].to_vec(),
                origin: start,
                dt: w.dt,
                ui: w.ui,
            }
        })
        .collect())
}

/// Linear interpolation onto a finer grid starting at the same instant.
pub fn interpolate(w: &Waveform, target_dt: f64) -> Result<Waveform> {
    if !(target_dt > 0.0 && target_dt.is_finite()) {
        return Err(Error::Parameter(format!("target sample period must be positive, got {target_dt}")));
    }
    if target_dt > w.dt {
        return Err(Error::Parameter(format!(
            "target period {target_dt} ps exceeds source period {} ps",
            w.dt
        )));
    }
    let n = w.samples.len();
    if n == 1 || target_dt == w.dt {
        return Ok(Waveform::from_parts(w.samples.clone(), target_dt, w.ui, w.t0));
    }
    let span = (n - 1) as f64 * w.dt;
    let n_out = (span / target_dt + 1e-9).floor() as usize + 1;
    let ratio = target_dt / w.dt;
    let out = (0..n_out)
        .map(|j| {
            let pos = j as f64 * ratio;
            let i = (pos.floor() as usize).min(n - 2);
            let frac = pos - i as f64;
            let (a, b) = (w.samples[i], w.samples[i + 1]);
            a + frac * (b - a)
        })
        .collect();
    Ok(Waveform::from_parts(out, target_dt, w.ui, w.t0))
}

/// Phase of absolute time `t` inside the unit interval, in `[0, ui)`.
pub fn fold_phase(t: f64, ui: f64) -> f64 {
    let p = t.rem_euclid(ui);
    if p >= ui {
        0.0
    } else {
        p
    }
}

/// Labels a segment against the eye mask at 1 ps x 1 mV resolution.
///
/// The segment is interpolated to 1 ps and folded at the UI on the same
/// integer cell lattice as [`fold_eye`]; the segment is invalid iff some
/// occupied cell overlaps the open mask rectangle.
pub fn label_validity(s: &Segment, mask: &EyeMask) -> Result<Validity> {
    if s.is_empty() {
        return Err(Error::Segmentation("empty segment".into()));
    }
    mask.validate(s.ui)?;
    // Only the mask cells matter; traces beyond the margin clamp onto it.
    let (v0, v1) = mask.v_bounds();
    let geom = EyeGeometry::new(v0.floor() as i64 - 2, v1.ceil() as i64 + 2)?;
    let eye = fold_eye(&s.to_waveform()?, &geom)?;
    Ok(if eye.mask_clear(mask) {
        Validity::Valid
    } else {
        Validity::Invalid
    })
}
