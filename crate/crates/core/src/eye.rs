//! Eye-diagram rasterization and the largest eye-opening window.
//!
//! The eye lives on an absolute integer lattice: column `c` covers phases
//! `[c, c+1)` ps inside the unit interval and row `r` covers voltages
//! `[v_min + r, v_min + r + 1)` mV.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{fold_phase, interpolate, EyeMask, Segment, Waveform, EYE_DT_PS};

/// Voltage extent of the eye grid (mV, integer-aligned).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EyeGeometry {
    pub v_min: i64,
    pub v_max: i64,
}

impl EyeGeometry {
    pub fn new(v_min: i64, v_max: i64) -> Result<Self> {
        if v_max <= v_min {
            return Err(Error::Parameter(format!("empty voltage extent [{v_min}, {v_max}]")));
        }
        Ok(Self { v_min, v_max })
    }

    /// `[-1.25 swing, +1.25 swing]`, rounded outward to whole millivolts.
    pub fn for_swing(swing: f64) -> Self {
        let half = (1.25 * swing).ceil().max(1.0) as i64;
        Self {
            v_min: -half,
            v_max: half,
        }
    }

    pub fn rows(&self) -> usize {
        (self.v_max - self.v_min) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EyeDiagram {
    grid: Vec<bool>,
    rows: usize,
    cols: usize,
    v_min: i64,
    ui: f64,
}

impl EyeDiagram {
    pub fn empty(geom: &EyeGeometry, ui: f64) -> Self {
        let rows = geom.rows();
        let cols = ui.ceil() as usize;
        Self {
            grid: vec![false; rows * cols],
            rows,
            cols,
            v_min: geom.v_min,
            ui,
        }
    }

    /// Grid from explicit occupancy, row-major with row 0 at `v_min`.
    pub fn from_cells(cells: Vec<bool>, rows: usize, cols: usize, v_min: i64, ui: f64) -> Result<Self> {
        if cells.len() != rows * cols || rows == 0 || cols == 0 {
            return Err(Error::Shape(format!(
                "{} cells do not form a {rows}x{cols} grid",
                cells.len()
            )));
        }
        if cols != ui.ceil() as usize {
            return Err(Error::Shape(format!("{cols} columns do not cover a UI of {ui} ps")));
        }
        Ok(Self {
            grid: cells,
            rows,
            cols,
            v_min,
            ui,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn v_min(&self) -> i64 {
        self.v_min
    }

    pub fn v_max(&self) -> i64 {
        self.v_min + self.rows as i64
    }

    pub fn ui(&self) -> f64 {
        self.ui
    }

    pub fn occupied(&self, row: usize, col: usize) -> bool {
        self.grid[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize) {
        self.grid[row * self.cols + col] = true;
    }

    pub fn occupied_count(&self) -> usize {
        self.grid.iter().filter(|&&c| c).count()
    }

    /// Cell holding `(ui/2, 0 mV)`, clamped into the grid.
    pub fn center_cell(&self) -> (usize, usize) {
        (self.row_of(0.0), self.col_of(self.ui / 2.0))
    }

    fn row_of(&self, v: f64) -> usize {
        let r = (v - self.v_min as f64).floor();
        r.clamp(0.0, (self.rows - 1) as f64) as usize
    }

    fn col_of(&self, phase: f64) -> usize {
        (phase.floor().max(0.0) as usize).min(self.cols - 1)
    }

    fn mark_run(&mut self, col: usize, r0: usize, r1: usize) {
        let (lo, hi) = if r0 <= r1 { (r0, r1) } else { (r1, r0) };
        for r in lo..=hi {
            self.set(r, col);
        }
    }

    /// Cells overlapping the open mask rectangle: `(row range, col range)`.
    fn mask_footprint(&self, mask: &EyeMask) -> Option<((usize, usize), (usize, usize))> {
        let (t0, t1) = mask.t_bounds();
        let (v0, v1) = mask.v_bounds();
        let c_lo = t0.floor().max(0.0);
        let c_hi = (t1.ceil() - 1.0).min((self.cols - 1) as f64);
        let r_lo = (v0 - self.v_min as f64).floor().max(0.0);
        let r_hi = ((v1 - self.v_min as f64).ceil() - 1.0).min((self.rows - 1) as f64);
        if c_lo > c_hi || r_lo > r_hi {
            return None;
        }
        Some(((r_lo as usize, r_hi as usize), (c_lo as usize, c_hi as usize)))
    }

    /// True if no occupied cell overlaps the mask.
    pub fn mask_clear(&self, mask: &EyeMask) -> bool {
        let Some(((r0, r1), (c0, c1))) = self.mask_footprint(mask) else {
            return true;
        };
        (r0..=r1).all(|r| (c0..=c1).all(|c| !self.occupied(r, c)))
    }

    /// Occupancy as CSV: one line per voltage bin, one column per ps bin.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("v_mV");
        for c in 0..self.cols {
            let _ = write!(out, ",t{c}");
        }
        out.push('\n');
        for r in 0..self.rows {
            let _ = write!(out, "{}", self.v_min + r as i64);
            for c in 0..self.cols {
                out.push_str(if self.occupied(r, c) { ",1" } else { ",0" });
            }
            out.push('\n');
        }
        out
    }

    /// SVG rendering with the window (green) and mask (red) overlaid.
    pub fn to_svg(&self, window: Option<&EyeWindow>, mask: Option<&EyeMask>) -> String {
        let (w, h) = (self.cols as f64, self.rows as f64);
        let y_of = |v: f64| h - (v - self.v_min as f64);
        let mut out = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {w} {h}\" width=\"{}\" height=\"{}\" preserveAspectRatio=\"none\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"#0b0d12\"/>\n<g fill=\"#7fb3ff\">\n",
            self.cols * 4,
            (self.rows as f64 * 0.8).round()
        );
        for c in 0..self.cols {
            let mut r = 0;
            while r < self.rows {
                if !self.occupied(r, c) {
                    r += 1;
                    continue;
                }
                let start = r;
                while r < self.rows && self.occupied(r, c) {
                    r += 1;
                }
                let _ = writeln!(
                    out,
                    "<rect x=\"{c}\" y=\"{}\" width=\"1\" height=\"{}\"/>",
                    h - r as f64,
                    r - start
                );
            }
        }
        out.push_str("</g>\n");
        if let Some(win) = window.filter(|w| w.area > 0.0) {
            let _ = writeln!(
                out,
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#3ddc84\" stroke-width=\"1\"/>",
                win.t0,
                y_of(win.v1),
                win.t1 - win.t0,
                win.v1 - win.v0
            );
        }
        if let Some(m) = mask {
            let (t0, t1) = m.t_bounds();
            let (v0, v1) = m.v_bounds();
            let _ = writeln!(
                out,
                "<rect x=\"{t0}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#ff4d4d\" stroke-width=\"1\"/>",
                y_of(v1),
                t1 - t0,
                v1 - v0
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

/// Folds a waveform at its UI onto the eye grid.
///
/// The trace is interpolated to 1 ps; between consecutive points the column
/// of each endpoint is filled up to the midpoint voltage so fast edges leave
/// a connected path instead of isolated dots.
pub fn fold_eye(w: &Waveform, geom: &EyeGeometry) -> Result<EyeDiagram> {
    let fine = interpolate(w, EYE_DT_PS.min(w.dt()))?;
    let mut eye = EyeDiagram::empty(geom, w.ui());
    let mut prev: Option<(usize, f64)> = None;
    for (j, &v) in fine.samples().iter().enumerate() {
        let col = eye.col_of(fold_phase(fine.time_of(j), w.ui()));
        match prev {
            None => {
                let r = eye.row_of(v);
                eye.set(r, col);
            }
            Some((pc, pv)) => {
                let mid = eye.row_of(0.5 * (pv + v));
                let (rp, rv) = (eye.row_of(pv), eye.row_of(v));
                eye.mark_run(pc, rp, mid);
                eye.mark_run(col, mid, rv);
            }
        }
        prev = Some((col, v));
    }
    Ok(eye)
}

pub fn fold_segment(s: &Segment, geom: &EyeGeometry) -> Result<EyeDiagram> {
    if s.is_empty() {
        return Err(Error::Segmentation("empty segment".into()));
    }
    fold_eye(&s.to_waveform()?, geom)
}

/// Axis-aligned empty rectangle around the eye centre (ps x mV).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EyeWindow {
    pub t0: f64,
    pub t1: f64,
    pub v0: f64,
    pub v1: f64,
    pub area: f64,
}

impl EyeWindow {
    pub fn closed() -> Self {
        Self {
            t0: 0.0,
            t1: 0.0,
            v0: 0.0,
            v1: 0.0,
            area: 0.0,
        }
    }

    pub fn width(&self) -> f64 {
        self.t1 - self.t0
    }

    pub fn height(&self) -> f64 {
        self.v1 - self.v0
    }

    /// Grid cell bounds `(row_lo, row_hi, col_lo, col_hi)`, inclusive.
    pub fn cells(&self, eye: &EyeDiagram) -> Option<(usize, usize, usize, usize)> {
        if self.area <= 0.0 {
            return None;
        }
        let r0 = (self.v0 - eye.v_min as f64) as usize;
        let r1 = (self.v1 - eye.v_min as f64) as usize - 1;
        let c0 = self.t0 as usize;
        let c1 = self.t1.ceil() as usize - 1;
        Some((r0, r1, c0, c1))
    }

    pub(crate) fn from_cells(eye: &EyeDiagram, r0: usize, r1: usize, c0: usize, c1: usize) -> Self {
        let t0 = c0 as f64;
        let t1 = ((c1 + 1) as f64).min(eye.ui);
        let v0 = (eye.v_min + r0 as i64) as f64;
        let v1 = (eye.v_min + r1 as i64 + 1) as f64;
        Self {
            t0,
            t1,
            v0,
            v1,
            area: (t1 - t0) * (v1 - v0),
        }
    }

    /// Ordering used to pick among equal-area windows: larger width, then
    /// lower `t0`, then lower `v0`.
    pub(crate) fn beats(&self, other: &EyeWindow) -> bool {
        if self.area != other.area {
            return self.area > other.area;
        }
        if self.width() != other.width() {
            return self.width() > other.width();
        }
        if self.t0 != other.t0 {
            return self.t0 < other.t0;
        }
        self.v0 < other.v0
    }
}

/// Largest empty rectangle containing the eye-centre cell.
///
/// For every lower row at or below the centre and every upper row at or
/// above it, the maximal run of empty columns through the centre column is
/// taken. The sweep stops early once the centre column itself is blocked.
pub fn largest_window(eye: &EyeDiagram) -> EyeWindow {
    let (cr, cc) = eye.center_cell();
    if eye.occupied(cr, cc) {
        return EyeWindow::closed();
    }
    let cols = eye.cols;
    // base[c]: column c empty over rows [lo, cr]
    let mut base = vec![true; cols];
    let mut ok = vec![false; cols];
    let mut best = EyeWindow::closed();
    for lo in (0..=cr).rev() {
        for (c, b) in base.iter_mut().enumerate() {
            *b &= !eye.occupied(lo, c);
        }
        if !base[cc] {
            break;
        }
        ok.copy_from_slice(&base);
        for hi in cr..eye.rows {
            if hi > cr {
                for (c, o) in ok.iter_mut().enumerate() {
                    *o &= !eye.occupied(hi, c);
                }
            }
            if !ok[cc] {
                break;
            }
            let mut c0 = cc;
            while c0 > 0 && ok[c0 - 1] {
                c0 -= 1;
            }
            let mut c1 = cc;
            while c1 + 1 < cols && ok[c1 + 1] {
                c1 += 1;
            }
            let cand = EyeWindow::from_cells(eye, lo, hi, c0, c1);
            if cand.beats(&best) {
                best = cand;
            }
        }
    }
    best
}

/// Percentage change of the window area relative to `before`.
pub fn window_improvement(before: f64, after: f64) -> Result<f64> {
    if !(before > 0.0) {
        return Err(Error::MetricUndefined(format!(
            "reference eye is closed (area {before})"
        )));
    }
    Ok(100.0 * (after - before) / before)
}

/// Fold-then-measure convenience used by the optimizers.
pub fn window_area(w: &Waveform, geom: &EyeGeometry) -> Result<f64> {
    Ok(largest_window(&fold_eye(w, geom)?).area)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{DEFAULT_DT_PS, DEFAULT_UI_PS};

    fn nrz(bits: &[u8], swing: f64) -> Waveform {
        let n = (bits.len() as f64 * DEFAULT_UI_PS / DEFAULT_DT_PS).floor() as usize;
        let samples = (0..n)
            .map(|k| {
                let sym = ((k as f64 * DEFAULT_DT_PS) / DEFAULT_UI_PS).floor() as usize;
                if bits[sym.min(bits.len() - 1)] == 1 {
                    swing
                } else {
                    -swing
                }
            })
            .collect();
        Waveform::new(samples, DEFAULT_DT_PS, DEFAULT_UI_PS).unwrap()
    }

    #[test]
    fn constant_trace_occupies_one_row() {
        let w = Waveform::new(vec![100.0; 60], DEFAULT_DT_PS, DEFAULT_UI_PS).unwrap();
        let eye = fold_eye(&w, &EyeGeometry::for_swing(400.0)).unwrap();
        let rows: Vec<usize> = (0..eye.rows())
            .filter(|&r| (0..eye.cols()).any(|c| eye.occupied(r, c)))
            .collect();
        assert_eq!(rows, vec![600]);
    }

    #[test]
    fn alternating_nrz_has_rails_and_open_center() {
        let bits: Vec<u8> = (0..20).map(|i| (i % 2) as u8).collect();
        let w = nrz(&bits, 400.0);
        let geom = EyeGeometry::for_swing(400.0);
        let eye = fold_eye(&w, &geom).unwrap();
        let (cr, cc) = eye.center_cell();
        assert!(!eye.occupied(cr, cc));
        // Rails: rows of +-400 mV are hit at every mid-symbol column.
        let top = (400 - geom.v_min) as usize;
        let bottom = (-400 - geom.v_min) as usize;
        assert!(eye.occupied(top, cc));
        assert!(eye.occupied(bottom, cc));
        // Independent raster: every interpolated point's own cell is set.
        let fine = interpolate(&w, 1.0).unwrap();
        for (j, &v) in fine.samples().iter().enumerate() {
            let c = fold_phase(fine.time_of(j), DEFAULT_UI_PS).floor() as usize;
            let r = (v - geom.v_min as f64).floor() as usize;
            assert!(eye.occupied(r.min(eye.rows() - 1), c));
        }
        // Transitions fill the whole voltage range somewhere.
        assert!((0..eye.cols()).any(|c| eye.occupied(cr, c)));
    }

    #[test]
    fn one_ui_visits_each_column_once() {
        let n = (DEFAULT_UI_PS / DEFAULT_DT_PS).floor() as usize;
        let w = Waveform::new((0..n).map(|i| i as f64 * 3.0).collect(), DEFAULT_DT_PS, DEFAULT_UI_PS).unwrap();
        let fine = interpolate(&w, 1.0).unwrap();
        let mut seen = vec![0usize; DEFAULT_UI_PS.ceil() as usize];
        for j in 0..fine.len() {
            seen[fold_phase(fine.time_of(j), DEFAULT_UI_PS).floor() as usize] += 1;
        }
        assert!(seen.iter().all(|&k| k <= 1));
    }

    #[test]
    fn empty_and_full_grids() {
        let geom = EyeGeometry::new(-50, 50).unwrap();
        let eye = EyeDiagram::empty(&geom, DEFAULT_UI_PS);
        let win = largest_window(&eye);
        assert_eq!(win.area, 100.0 * DEFAULT_UI_PS);

        let cols = DEFAULT_UI_PS.ceil() as usize;
        let full = EyeDiagram::from_cells(vec![true; 100 * cols], 100, cols, -50, DEFAULT_UI_PS).unwrap();
        assert_eq!(largest_window(&full).area, 0.0);
    }

    #[test]
    fn improvement_arithmetic() {
        assert_eq!(window_improvement(100.0, 100.0).unwrap(), 0.0);
        assert_eq!(window_improvement(100.0, 150.0).unwrap(), 50.0);
        assert!(matches!(window_improvement(0.0, 50.0), Err(Error::MetricUndefined(_))));
    }

    #[test]
    fn clean_eye_is_wide_open() {
        let bits = crate::channel::generate_bits(64, 21).unwrap();
        let w = nrz(&bits, 400.0);
        let win = largest_window(&fold_eye(&w, &EyeGeometry::for_swing(400.0)).unwrap());
        assert!(win.area >= 0.5 * DEFAULT_UI_PS * 1.5 * 400.0, "{win:?}");
    }

    #[test]
    fn mask_footprint_edges() {
        let geom = EyeGeometry::new(-100, 100).unwrap();
        let mut eye = EyeDiagram::empty(&geom, 40.0);
        let mask = EyeMask {
            width: 10.0,
            height: 20.0,
            center_t: 20.0,
            center_v: 0.0,
        };
        // open rectangle (15, 25) x (-10, 10): cols 15..=24, rows 90..=109
        eye.set(110, 20);
        eye.set(89, 20);
        eye.set(100, 25);
        assert!(eye.mask_clear(&mask));
        eye.set(109, 24);
        assert!(!eye.mask_clear(&mask));
    }
}
