//! Classifier-augmented autoencoder and the latent signal-integrity score.
//!
//! The encoder maps a segment (normalised by the decoder scale) to an
//! `l`-dimensional latent; the decoder reconstructs the segment in mV and a
//! sigmoid classifier predicts validity from the latent. The classification
//! term only contributes for valid samples unless `invalid_term` is set.
//! The score of a segment is minus its latent distance to the anchor, the
//! medoid of the valid latents.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{Activation, Adam, AdamConfig, DenseNet, Grads};

pub type LatentVector = Vec<f64>;

/// Classifier output is clamped to `[P_CLAMP, 1 - P_CLAMP]` before the log.
pub const P_CLAMP: f64 = 1e-7;
/// Largest set the anchor search runs on exactly before subsampling.
pub const ANCHOR_EXACT_LIMIT: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeConfig {
    pub latent_dim: usize,
    /// Encoder hidden widths; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Also penalise `-log(1 - y_hat)` on invalid samples.
    #[serde(default)]
    pub invalid_term: bool,
    /// Weight of the classification term relative to reconstruction.
    #[serde(default = "one")]
    pub classification_weight: f64,
    pub val_fraction: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for AeConfig {
    fn default() -> Self {
        Self {
            latent_dim: 11,
            hidden: vec![256, 64],
            lr: 1e-3,
            weight_decay: 1e-5,
            batch: 256,
            epochs: 200,
            seed: 0,
            invalid_term: false,
            classification_weight: 1.0,
            val_fraction: 0.1,
        }
    }
}

impl AeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::Config("autoencoder widths must be positive".into()));
        }
        if self.batch == 0 || self.epochs == 0 {
            return Err(Error::Config("batch and epochs must be positive".into()));
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("learning rate must be positive, weight decay >= 0".into()));
        }
        if !(self.classification_weight >= 0.0 && self.classification_weight.is_finite()) {
            return Err(Error::Config("classification weight must be finite and >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config("validation fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderBundle {
    pub n_x: usize,
    /// Decoder output scale (mV); inputs are divided by it before encoding.
    pub scale: f64,
    pub encoder: DenseNet,
    pub decoder: DenseNet,
    pub classifier: DenseNet,
}

impl AutoencoderBundle {
    pub fn init(n_x: usize, swing: f64, cfg: &AeConfig) -> Result<Self> {
        cfg.validate()?;
        if n_x == 0 || !(swing > 0.0) {
            return Err(Error::Config("segment length and swing must be positive".into()));
        }
        let scale = 1.25 * swing;
        let mut enc_dims = vec![n_x];
        enc_dims.extend(&cfg.hidden);
        enc_dims.push(cfg.latent_dim);
        let mut enc_act = vec![Activation::Relu; cfg.hidden.len()];
        enc_act.push(Activation::Linear);
        let dec_dims: Vec<usize> = enc_dims.iter().rev().copied().collect();
        let mut dec_act = vec![Activation::Relu; cfg.hidden.len()];
        dec_act.push(Activation::TanhScaled { k: scale });
        Ok(Self {
            n_x,
            scale,
            encoder: DenseNet::init(&enc_dims, &enc_act, cfg.seed)?,
            decoder: DenseNet::init(&dec_dims, &dec_act, cfg.seed.wrapping_add(1))?,
            classifier: DenseNet::init(&[cfg.latent_dim, 1], &[Activation::Sigmoid], cfg.seed.wrapping_add(2))?,
        })
    }

    pub fn from_nets(n_x: usize, scale: f64, encoder: DenseNet, decoder: DenseNet, classifier: DenseNet) -> Result<Self> {
        let l = encoder.output_dim();
        if encoder.input_dim() != n_x
            || decoder.input_dim() != l
            || decoder.output_dim() != n_x
            || classifier.input_dim() != l
            || classifier.output_dim() != 1
        {
            return Err(Error::Shape("autoencoder parts do not chain".into()));
        }
        Ok(Self {
            n_x,
            scale,
            encoder,
            decoder,
            classifier,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    fn normalise(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| v / self.scale).collect()
    }

    pub fn encode(&self, x: &[f64]) -> Result<LatentVector> {
        if x.len() != self.n_x {
            return Err(Error::Shape(format!("segment has {} samples, encoder expects {}", x.len(), self.n_x)));
        }
        self.encoder.predict(&self.normalise(x))
    }

    /// Encodes several segments in one batched pass.
    pub fn encode_many(&self, xs: &[&[f64]]) -> Result<Vec<LatentVector>> {
        if xs.is_empty() {
            return Ok(vec![]);
        }
        let mut flat = Vec::with_capacity(xs.len() * self.n_x);
        for x in xs {
            if x.len() != self.n_x {
                return Err(Error::Shape(format!("segment has {} samples, encoder expects {}", x.len(), self.n_x)));
            }
            flat.extend(x.iter().map(|v| v / self.scale));
        }
        let tape = self.encoder.forward_batch(&flat, xs.len())?;
        let l = self.latent_dim();
        Ok(tape.output().chunks(l).map(<[f64]>::to_vec).collect())
    }

    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.decoder.predict(&self.encode(x)?)
    }

    pub fn classify(&self, z: &[f64]) -> Result<f64> {
        Ok(self.classifier.predict(z)?[0])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let b: AutoencoderBundle = serde_json::from_str(s)?;
        let (e, d, c) = (
            DenseNet::from_layers(b.encoder.layers().to_vec())?,
            DenseNet::from_layers(b.decoder.layers().to_vec())?,
            DenseNet::from_layers(b.classifier.layers().to_vec())?,
        );
        Self::from_nets(b.n_x, b.scale, e, d, c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BundleGrads {
    pub encoder: Grads,
    pub decoder: Grads,
    pub classifier: Grads,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub reconstruction: f64,
    pub classification: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.reconstruction + self.classification
    }
}

/// Per-sample combined loss from precomputed outputs. Reconstruction is the
/// mean squared error in units of `scale`.
pub fn combined_loss(x: &[f64], x_hat: &[f64], scale: f64, y: u8, y_hat: f64, terms: &ClassTerms) -> LossParts {
    let rec = x
        .iter()
        .zip(x_hat)
        .map(|(a, b)| {
            let d = (b - a) / scale;
            d * d
        })
        .sum::<f64>()
        / x.len().max(1) as f64;
    let p = y_hat.clamp(P_CLAMP, 1.0 - P_CLAMP);
    let cls = if y == 1 {
        -p.ln()
    } else if terms.invalid_term {
        -(1.0 - p).ln()
    } else {
        0.0
    };
    LossParts {
        reconstruction: rec,
        classification: terms.weight * cls,
    }
}

/// How the classification term enters the loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassTerms {
    pub weight: f64,
    pub invalid_term: bool,
}

impl Default for ClassTerms {
    fn default() -> Self {
        Self {
            weight: 1.0,
            invalid_term: false,
        }
    }
}

impl From<&AeConfig> for ClassTerms {
    fn from(c: &AeConfig) -> Self {
        Self {
            weight: c.classification_weight,
            invalid_term: c.invalid_term,
        }
    }
}

/// Mean combined loss over a batch and its exact gradient with respect to
/// every parameter of the bundle.
pub fn batch_loss_and_grads(
    bundle: &AutoencoderBundle,
    xs: &[&[f64]],
    ys: &[u8],
    terms: &ClassTerms,
) -> Result<(LossParts, BundleGrads)> {
    let b = xs.len();
    if b == 0 || ys.len() != b {
        return Err(Error::Data("batch is empty or labels do not match".into()));
    }
    let n_x = bundle.n_x;
    let l = bundle.latent_dim();
    let mut flat = Vec::with_capacity(b * n_x);
    for x in xs {
        if x.len() != n_x {
            return Err(Error::Shape(format!("segment has {} samples, expected {n_x}", x.len())));
        }
        flat.extend(x.iter().map(|v| v / bundle.scale));
    }
    let enc = bundle.encoder.forward_batch(&flat, b)?;
    let z = enc.output().to_vec();
    let dec = bundle.decoder.forward_batch(&z, b)?;
    let cls = bundle.classifier.forward_batch(&z, b)?;
    let x_hat = dec.output();
    let y_hat = cls.output();

    let inv_b = 1.0 / b as f64;
    let mut parts = LossParts::default();
    let mut d_xhat = vec![0.0; b * n_x];
    let mut d_yhat = vec![0.0; b];
    let k2 = bundle.scale * bundle.scale;
    for i in 0..b {
        let xi = xs[i];
        let xh = &x_hat[i * n_x..(i + 1) * n_x];
        let p = combined_loss(xi, xh, bundle.scale, ys[i], y_hat[i], terms);
        parts.reconstruction += p.reconstruction * inv_b;
        parts.classification += p.classification * inv_b;
        let c = 2.0 * inv_b / (n_x as f64 * k2);
        for j in 0..n_x {
            d_xhat[i * n_x + j] = c * (xh[j] - xi[j]);
        }
        let yh = y_hat[i];
        let inside = yh > P_CLAMP && yh < 1.0 - P_CLAMP;
        d_yhat[i] = if !inside {
            0.0
        } else if ys[i] == 1 {
            -terms.weight * inv_b / yh
        } else if terms.invalid_term {
            terms.weight * inv_b / (1.0 - yh)
        } else {
            0.0
        };
    }
    let (g_dec, dz_dec) = bundle.decoder.backward(&dec, &d_xhat)?;
    let (g_cls, dz_cls) = bundle.classifier.backward(&cls, &d_yhat)?;
    let dz: Vec<f64> = dz_dec.iter().zip(&dz_cls).map(|(a, c)| a + c).collect();
    debug_assert_eq!(dz.len(), b * l);
    let (g_enc, _) = bundle.encoder.backward(&enc, &dz)?;
    Ok((
        parts,
        BundleGrads {
            encoder: g_enc,
            decoder: g_dec,
            classifier: g_cls,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub reconstruction: f64,
    pub classification: f64,
    pub val_total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedAutoencoder {
    pub bundle: AutoencoderBundle,
    pub trace: Vec<EpochLoss>,
    /// Indices of the samples held out for validation.
    pub val_indices: Vec<usize>,
}

fn mean_loss(bundle: &AutoencoderBundle, xs: &[&[f64]], ys: &[u8], terms: &ClassTerms) -> Result<f64> {
    if xs.is_empty() {
        return Ok(0.0);
    }
    let lat = bundle.encode_many(xs)?;
    let mut total = 0.0;
    for ((x, y), z) in xs.iter().zip(ys).zip(&lat) {
        let xh = bundle.decoder.predict(z)?;
        let yh = bundle.classify(z)?;
        total += combined_loss(x, &xh, bundle.scale, *y, yh, terms).total();
    }
    Ok(total / xs.len() as f64)
}

/// Trains the bundle on labelled segments (`y = 1` valid).
pub fn train_autoencoder(xs: &[&[f64]], ys: &[u8], swing: f64, cfg: &AeConfig) -> Result<TrainedAutoencoder> {
    cfg.validate()?;
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::Data("no training segments, or labels do not match".into()));
    }
    let valid = ys.iter().filter(|&&y| y == 1).count();
    if valid == 0 || valid == ys.len() {
        return Err(Error::Data(format!(
            "training data must contain both labels ({valid} valid of {})",
            ys.len()
        )));
    }
    let n_x = xs[0].len();
    let mut bundle = AutoencoderBundle::init(n_x, swing, cfg)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((xs.len() as f64) * cfg.val_fraction).floor() as usize;
    let n_val = n_val.min(xs.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut val_indices = val_idx.to_vec();
    val_indices.sort_unstable();
    let mut train_idx = train_idx.to_vec();
    let val_x: Vec<&[f64]> = val_indices.iter().map(|&i| xs[i]).collect();
    let val_y: Vec<u8> = val_indices.iter().map(|&i| ys[i]).collect();

    let adam = AdamConfig {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..AdamConfig::default()
    };
    let (mut oe, mut od, mut oc) = (Adam::new(adam), Adam::new(adam), Adam::new(adam));
    let terms = ClassTerms::from(cfg);
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut sum = LossParts::default();
        let mut seen = 0usize;
        for chunk in train_idx.chunks(cfg.batch) {
            let bx: Vec<&[f64]> = chunk.iter().map(|&i| xs[i]).collect();
            let by: Vec<u8> = chunk.iter().map(|&i| ys[i]).collect();
            let (parts, g) = batch_loss_and_grads(&bundle, &bx, &by, &terms)?;
            if !parts.total().is_finite() {
                return Err(Error::Optim(format!("loss diverged at epoch {epoch}")));
            }
            bundle.encoder.adam_step(&mut oe, &g.encoder)?;
            bundle.decoder.adam_step(&mut od, &g.decoder)?;
            bundle.classifier.adam_step(&mut oc, &g.classifier)?;
            let w = chunk.len() as f64;
            sum.reconstruction += parts.reconstruction * w;
            sum.classification += parts.classification * w;
            seen += chunk.len();
        }
        trace.push(EpochLoss {
            epoch,
            reconstruction: sum.reconstruction / seen as f64,
            classification: sum.classification / seen as f64,
            val_total: mean_loss(&bundle, &val_x, &val_y, &terms)?,
        });
    }
    Ok(TrainedAutoencoder {
        bundle,
        trace,
        val_indices,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorPoint {
    pub c: LatentVector,
    /// Index of the chosen latent in the set it was computed from.
    pub source_index: usize,
}

impl AnchorPoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let a: AnchorPoint = serde_json::from_str(s)?;
        if a.c.is_empty() || a.c.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("anchor must be a non-empty finite vector".into()));
        }
        Ok(a)
    }
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Summed distance from `set[i]` to every member of `set`.
pub fn distance_sums(set: &[LatentVector]) -> Vec<f64> {
    set.iter()
        .map(|p| set.iter().map(|q| distance(p, q)).sum())
        .collect()
}

/// Exact medoid: the member minimising summed distance, lowest index on ties.
pub fn compute_anchor(set: &[LatentVector]) -> Result<AnchorPoint> {
    if set.is_empty() {
        return Err(Error::Data("anchor needs at least one valid latent".into()));
    }
    let dim = set[0].len();
    if set.iter().any(|z| z.len() != dim) {
        return Err(Error::Shape("latents differ in dimension".into()));
    }
    let sums = distance_sums(set);
    let mut best = 0;
    for (i, &s) in sums.iter().enumerate() {
        if s < sums[best] {
            best = i;
        }
    }
    Ok(AnchorPoint {
        c: set[best].clone(),
        source_index: best,
    })
}

/// Medoid over a seeded subsample of at most `limit` members when the set is
/// larger; `source_index` still refers to the full set.
pub fn compute_anchor_sampled(set: &[LatentVector], limit: usize, seed: u64) -> Result<AnchorPoint> {
    if set.len() <= limit.max(1) {
        return compute_anchor(set);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..set.len()).collect();
    idx.shuffle(&mut rng);
    idx.truncate(limit.max(1));
    idx.sort_unstable();
    let sub: Vec<LatentVector> = idx.iter().map(|&i| set[i].clone()).collect();
    let a = compute_anchor(&sub)?;
    Ok(AnchorPoint {
        c: a.c,
        source_index: idx[a.source_index],
    })
}

/// Latent score of one segment: `-|c - encode(x)|`, at most zero.
pub fn latent_si(bundle: &AutoencoderBundle, anchor: &AnchorPoint, x: &[f64]) -> Result<f64> {
    let z = bundle.encode(x)?;
    if z.len() != anchor.c.len() {
        return Err(Error::Shape("anchor and latent dimensions differ".into()));
    }
    Ok(-distance(&anchor.c, &z))
}

/// One CSV row per segment: origin, label, latent components.
pub fn latents_csv(rows: &[(usize, u8, LatentVector)]) -> String {
    let l = rows.first().map_or(0, |r| r.2.len());
    let mut out = String::from("origin,y");
    for i in 1..=l {
        out.push_str(&format!(",z{i}"));
    }
    out.push('\n');
    for (origin, y, z) in rows {
        out.push_str(&format!("{origin},{y}"));
        for v in z {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}
