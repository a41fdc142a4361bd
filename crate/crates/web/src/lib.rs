//! Browser bindings: simulate a link, equalize it and look at the eye, and
//! plot the CTLE magnitude response.

use lateq::channel::{synthesize_pair, ChannelConfig};
use lateq::equalizer::{ctle_coeffs, CtleParams, EqualizerKind, EqualizerSetting};
use lateq::eye::{fold_eye, largest_window};
use lateq::signal::{EyeMask, Waveform};
use wasm_bindgen::prelude::*;

/// Symbols simulated per view; enough for a dense eye, small enough to
/// redraw while a slider moves.
const VIEW_BITS: usize = 400;

fn js_err(e: lateq::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Result of one equalization: eye renderings and window areas (ps x mV).
#[wasm_bindgen]
pub struct EyeView {
    before_svg: String,
    after_svg: String,
    area_before: f64,
    area_after: f64,
}

#[wasm_bindgen]
impl EyeView {
    #[wasm_bindgen(getter)]
    pub fn before_svg(&self) -> String {
        self.before_svg.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn after_svg(&self) -> String {
        self.after_svg.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn area_before(&self) -> f64 {
        self.area_before
    }
    #[wasm_bindgen(getter)]
    pub fn area_after(&self) -> f64 {
        self.area_after
    }
}

fn link(seed: u64, isi_scale: f64, noise_mv: f64) -> ChannelConfig {
    let mut c = ChannelConfig::stressed(seed, VIEW_BITS);
    c.isi_taps.iter_mut().for_each(|t| *t *= isi_scale);
    c.noise_sigma = noise_mv;
    c
}

fn render(w: &Waveform, cfg: &ChannelConfig) -> lateq::Result<(String, f64)> {
    let eye = fold_eye(w, &cfg.eye_geometry())?;
    let win = largest_window(&eye);
    Ok((eye.to_svg(Some(&win), Some(&EyeMask::standard(cfg.ui))), win.area))
}

/// Simulate the stressed link (post-cursors scaled by `isi_scale`) and
/// equalize it with the physical parameters `params`: four DFE taps, or
/// `G_dc, f_z, f_p, G_p` followed by four taps when `ctle` is set.
pub fn equalize_view(seed: u64, isi_scale: f64, noise_mv: f64, ctle: bool, params: &[f64]) -> lateq::Result<EyeView> {
    let cfg = link(seed, isi_scale, noise_mv);
    let kind = if ctle { EqualizerKind::CtleDfe } else { EqualizerKind::Dfe };
    let pair = synthesize_pair(&cfg)?;
    let eq = EqualizerSetting::from_physical(kind, params)?.apply(&pair.output)?;
    let (before_svg, area_before) = render(&pair.output, &cfg)?;
    let (after_svg, area_after) = render(&eq, &cfg)?;
    Ok(EyeView {
        before_svg,
        after_svg,
        area_before,
        area_after,
    })
}

#[wasm_bindgen(js_name = equalize)]
pub fn equalize_js(seed: u32, isi_scale: f64, noise_mv: f64, ctle: bool, params: Vec<f64>) -> Result<EyeView, JsError> {
    equalize_view(seed as u64, isi_scale, noise_mv, ctle, &params).map_err(js_err)
}

/// CTLE magnitude in dB at `points` log-spaced frequencies from 10 MHz to
/// Nyquist of the 10 ps grid. Returns `[f0, db0, f1, db1, ...]`.
pub fn ctle_response(g_dc: f64, f_z: f64, f_p: f64, g_p: f64, points: usize) -> lateq::Result<Vec<f64>> {
    let dt = lateq::signal::DEFAULT_DT_PS;
    let c = ctle_coeffs(&CtleParams { g_dc, f_z, f_p, g_p }, dt)?;
    let (lo, hi) = (0.01f64, 0.5e3 / dt);
    let n = points.max(2);
    Ok((0..n)
        .flat_map(|i| {
            let f = lo * (hi / lo).powf(i as f64 / (n - 1) as f64);
            [f, 20.0 * c.magnitude(f, dt).max(1e-12).log10()]
        })
        .collect())
}

#[wasm_bindgen(js_name = ctleResponse)]
pub fn ctle_response_js(g_dc: f64, f_z: f64, f_p: f64, g_p: f64, points: usize) -> Result<Vec<f64>, JsError> {
    ctle_response(g_dc, f_z, f_p, g_p, points).map_err(js_err)
}

/// Window area as the first DFE tap sweeps `steps` values over [0,1], the
/// other taps held at `rest`. Returns `[t1_0, area_0, ...]`.
pub fn tap_sweep(seed: u64, isi_scale: f64, noise_mv: f64, rest: &[f64], steps: usize) -> lateq::Result<Vec<f64>> {
    let cfg = link(seed, isi_scale, noise_mv);
    let pair = synthesize_pair(&cfg)?;
    let geom = cfg.eye_geometry();
    let n = steps.max(2);
    let mut out = Vec::with_capacity(2 * n);
    for i in 0..n {
        let t1 = i as f64 / (n - 1) as f64;
        let mut p = vec![t1];
        p.extend(rest.iter().take(3));
        p.resize(4, 0.0);
        let eq = EqualizerSetting::from_physical(EqualizerKind::Dfe, &p)?.apply(&pair.output)?;
        out.push(t1);
        out.push(largest_window(&fold_eye(&eq, &geom)?).area);
    }
    Ok(out)
}

#[wasm_bindgen(js_name = tapSweep)]
pub fn tap_sweep_js(seed: u32, isi_scale: f64, noise_mv: f64, rest: Vec<f64>, steps: usize) -> Result<Vec<f64>, JsError> {
    tap_sweep(seed as u64, isi_scale, noise_mv, &rest, steps).map_err(js_err)
}
