//! Cross-reference scoring network.
//!
//! A small ViT encoder turns every image into patch tokens. Transformer
//! decoder layers let the query tokens attend to the concatenated tokens
//! of all reference images, and a per-token perceptron regresses a P×P
//! block of scores for each patch.

mod checkpoint;
mod layers;
mod params;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};
use std::sync::Arc;

use ndarray::{Array2, ArrayView2, LinalgScalar, ScalarOperand};
use num_traits::Float;
use serde::{Deserialize, Serialize};

pub use checkpoint::{
    load_checkpoint, load_model, save_checkpoint, Checkpoint, OptimState, RngState,
    CHECKPOINT_VERSION,
};
pub use params::ParamSet;

use crate::error::{Error, Result};
use crate::image::{ImageGrid, ScoreMap};
use layers::{
    DecoderLayer, DecoderLayerCache, EncoderBlock, EncoderBlockCache, LayerNorm, Linear, LnCache,
    Mlp, MlpCache,
};
use params::Init;

/// ImageNet channel statistics; channels past the third reuse them cyclically.
const PIXEL_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
const PIXEL_STD: [f64; 3] = [0.229, 0.224, 0.225];

/// Scalar type the network can run in: `f32` for training and inference,
/// `f64` for gradient checking.
pub trait Real:
    Float
    + LinalgScalar
    + ScalarOperand
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    fn c(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn c(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn c(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EncoderMode {
    /// Encoder weights are learned together with the rest of the network.
    #[default]
    Trainable,
    /// Encoder receives no updates. Tokens come from an attached
    /// [`TokenBackbone`] when one is set, otherwise from the frozen
    /// built-in encoder.
    FrozenExternal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub patch_size: usize,
    pub embed_dim: usize,
    pub encoder_depth: usize,
    pub decoder_layers: usize,
    pub attention_heads: usize,
    pub mlp_hidden: usize,
    /// Side of the positional table, in patches. Inputs may not exceed
    /// `max_grid · patch_size` on either side.
    pub max_grid: usize,
    pub n_ref: usize,
    pub channels: usize,
    pub encoder_mode: EncoderMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            patch_size: 14,
            embed_dim: 64,
            encoder_depth: 2,
            decoder_layers: 2,
            attention_heads: 4,
            mlp_hidden: 256,
            max_grid: 10,
            n_ref: 5,
            channels: 3,
            encoder_mode: EncoderMode::Trainable,
        }
    }
}

impl ModelConfig {
    /// Full-scale widths (384-channel tokens, 518 px crops).
    pub fn full() -> Self {
        Self {
            embed_dim: 384,
            attention_heads: 6,
            mlp_hidden: 4 * 384,
            encoder_depth: 12,
            max_grid: 37,
            ..Self::default()
        }
    }

    /// Minimal configuration for gradient checks and fast tests.
    pub fn tiny() -> Self {
        Self {
            patch_size: 4,
            embed_dim: 8,
            encoder_depth: 1,
            decoder_layers: 1,
            attention_heads: 2,
            mlp_hidden: 32,
            max_grid: 2,
            n_ref: 2,
            channels: 3,
            encoder_mode: EncoderMode::Trainable,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("embed_dim", self.embed_dim),
            ("encoder_depth", self.encoder_depth),
            ("decoder_layers", self.decoder_layers),
            ("attention_heads", self.attention_heads),
            ("mlp_hidden", self.mlp_hidden),
            ("max_grid", self.max_grid),
            ("n_ref", self.n_ref),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Validation(format!("model.{name} must be at least 1")));
            }
        }
        if self.patch_size < 2 {
            return Err(Error::Validation("model.patch_size must be at least 2".into()));
        }
        if self.embed_dim % self.attention_heads != 0 {
            return Err(Error::Validation(format!(
                "model.embed_dim {} is not divisible by attention_heads {}",
                self.embed_dim, self.attention_heads
            )));
        }
        if !matches!(self.channels, 1 | 3) {
            return Err(Error::Validation("model.channels must be 1 or 3".into()));
        }
        Ok(())
    }

    /// Largest input side, in pixels.
    pub fn max_side(&self) -> usize {
        self.max_grid * self.patch_size
    }

    /// Closed-form number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        let (p, d, h) = (self.patch_size, self.embed_dim, self.mlp_hidden);
        let linear = |i: usize, o: usize| i * o + o;
        let ln = 2 * d;
        let attn = 4 * linear(d, d);
        let mlp = linear(d, h) + linear(h, d);
        let enc = linear(p * p * self.channels, d)
            + self.max_grid * self.max_grid * d
            + self.encoder_depth * (2 * ln + attn + mlp)
            + ln;
        let dec = self.decoder_layers * (3 * ln + 2 * attn + mlp) + ln;
        let head = linear(d, d) + linear(d, p * p);
        enc + dec + head
    }
}

/// Patch-grid token matrix for one image.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchTokens<F> {
    pub rows: usize,
    pub cols: usize,
    /// (rows·cols) × D, row-major over the patch grid.
    pub tokens: Array2<F>,
}

impl<F: Real> PatchTokens<F> {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Imported token producer used in `frozen_external` mode.
pub trait TokenBackbone: Send + Sync {
    /// Returns a (rows·cols) × D token matrix for an image whose sides are
    /// multiples of `patch_size`.
    fn encode(&self, img: &ImageGrid, patch_size: usize) -> Result<Array2<f64>>;
}

/// Cross-attention weights captured during a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionRecord {
    pub query_grid: (usize, usize),
    pub ref_grids: Vec<(usize, usize)>,
    /// `[layer][head]`, each (query tokens × all reference tokens).
    pub layers: Vec<Vec<Array2<f64>>>,
}

impl AttentionRecord {
    /// Attention of one layer (default: last) reduced to one head, or
    /// averaged over heads when `head` is `None`.
    pub fn reduce(&self, layer: Option<usize>, head: Option<usize>) -> Result<Array2<f64>> {
        let li = layer.unwrap_or(self.layers.len().saturating_sub(1));
        let heads = self
            .layers
            .get(li)
            .ok_or_else(|| Error::Validation(format!("no attention layer {li}")))?;
        match head {
            Some(h) => heads
                .get(h)
                .cloned()
                .ok_or_else(|| Error::Validation(format!("no attention head {h}"))),
            None => {
                let mut acc = heads[0].clone();
                for m in &heads[1..] {
                    acc += m;
                }
                Ok(acc / heads.len() as f64)
            }
        }
    }

    /// Token offset of each reference inside the key axis.
    pub fn ref_offsets(&self) -> Vec<usize> {
        let mut off = 0;
        self.ref_grids
            .iter()
            .map(|(r, c)| {
                let o = off;
                off += r * c;
                o
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
struct Arch {
    patch_embed: Linear,
    pos: usize,
    blocks: Vec<EncoderBlock>,
    enc_norm: LayerNorm,
    decoder: Vec<DecoderLayer>,
    dec_norm: LayerNorm,
    head: Mlp,
}

impl Arch {
    fn build<F: Real>(cfg: &ModelConfig, p: &mut ParamSet<F>, rng: &mut impl rand::Rng) -> Self {
        let d = cfg.embed_dim;
        let patch_dim = cfg.patch_size * cfg.patch_size * cfg.channels;
        let patch_embed = Linear::new(p, "encoder.patch_embed", patch_dim, d, rng);
        let pos = p.add(
            "encoder.pos_embed".into(),
            vec![cfg.max_grid * cfg.max_grid, d],
            Init::Normal(0.02),
            rng,
        );
        let blocks = (0..cfg.encoder_depth)
            .map(|i| {
                EncoderBlock::new(
                    p,
                    &format!("encoder.blocks.{i}"),
                    d,
                    cfg.attention_heads,
                    cfg.mlp_hidden,
                    rng,
                )
            })
            .collect();
        let enc_norm = LayerNorm::new(p, "encoder.norm", d, rng);
        let decoder = (0..cfg.decoder_layers)
            .map(|i| {
                DecoderLayer::new(
                    p,
                    &format!("decoder.layers.{i}"),
                    d,
                    cfg.attention_heads,
                    cfg.mlp_hidden,
                    rng,
                )
            })
            .collect();
        let dec_norm = LayerNorm::new(p, "decoder.norm", d, rng);
        let head = Mlp::new(p, "head", d, d, cfg.patch_size * cfg.patch_size, rng);
        Self {
            patch_embed,
            pos,
            blocks,
            enc_norm,
            decoder,
            dec_norm,
            head,
        }
    }
}

struct EncodeCache<F> {
    patches: Array2<F>,
    pos_rows: Vec<usize>,
    blocks: Vec<EncoderBlockCache<F>>,
    norm: LnCache<F>,
}

/// Intermediate values kept by [`CrossRefModel::forward_train`] for the
/// backward pass.
pub struct ForwardCache<F> {
    query: Option<EncodeCache<F>>,
    refs: Vec<Option<EncodeCache<F>>>,
    ref_lens: Vec<usize>,
    decoder: Vec<DecoderLayerCache<F>>,
    dec_norm: LnCache<F>,
    head: MlpCache<F>,
    scores: Array2<F>,
    grid: (usize, usize),
}

/// The full network with its parameters.
#[derive(Clone)]
pub struct CrossRefModel<F> {
    config: ModelConfig,
    params: ParamSet<F>,
    arch: Arch,
    backbone: Option<Arc<dyn TokenBackbone>>,
}

impl<F: Real> Debug for CrossRefModel<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CrossRefModel")
            .field("config", &self.config)
            .field("parameters", &self.params.scalar_count())
            .field("backbone", &self.backbone.is_some())
            .finish()
    }
}

impl<F: Real> CrossRefModel<F> {
    /// Randomly initialised model; identical seeds give identical weights.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = crate::seed::rng(crate::seed::derive_seed(seed, &[b"model_init"]));
        let mut params = ParamSet::new();
        let arch = Arch::build(&config, &mut params, &mut rng);
        Ok(Self {
            config,
            params,
            arch,
            backbone: None,
        })
    }

    /// Rebuilds a model around existing parameters, checking names and shapes.
    pub fn from_params(config: ModelConfig, params: ParamSet<F>) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        if params.len() != model.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                model.params.len(),
                params.len()
            )));
        }
        for i in 0..params.len() {
            if params.names()[i] != model.params.names()[i]
                || params.shapes()[i] != model.params.shapes()[i]
            {
                return Err(Error::Checkpoint(format!(
                    "parameter {} has shape {:?}, expected {} with shape {:?}",
                    params.names()[i],
                    params.shapes()[i],
                    model.params.names()[i],
                    model.params.shapes()[i]
                )));
            }
        }
        model.params = params;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<F> {
        &mut self.params
    }

    /// Attaches an imported backbone. Requires `frozen_external` mode and
    /// tokens of width `embed_dim`.
    pub fn set_backbone(&mut self, backbone: Arc<dyn TokenBackbone>) -> Result<()> {
        if self.config.encoder_mode != EncoderMode::FrozenExternal {
            return Err(Error::Validation(
                "an external backbone needs encoder_mode frozen_external".into(),
            ));
        }
        self.backbone = Some(backbone);
        Ok(())
    }

    pub fn encoder_trainable(&self) -> bool {
        self.config.encoder_mode == EncoderMode::Trainable
    }

    /// Same model with every parameter converted to another scalar type.
    pub fn cast<G: Real>(&self) -> CrossRefModel<G> {
        CrossRefModel {
            config: self.config.clone(),
            params: self.params.cast(),
            arch: self.arch.clone(),
            backbone: self.backbone.clone(),
        }
    }

    fn grid_of(&self, img: &ImageGrid) -> Result<(usize, usize)> {
        let p = self.config.patch_size;
        if img.channels() != self.config.channels {
            return Err(Error::Shape(format!(
                "image has {} channels, model expects {}",
                img.channels(),
                self.config.channels
            )));
        }
        if img.height() % p != 0 || img.width() % p != 0 || img.height() == 0 || img.width() == 0 {
            return Err(Error::Shape(format!(
                "image is {}x{}, which is not a multiple of the patch size {p}; crop it first",
                img.height(),
                img.width()
            )));
        }
        let (rows, cols) = (img.height() / p, img.width() / p);
        if rows > self.config.max_grid || cols > self.config.max_grid {
            return Err(Error::Shape(format!(
                "image is {}x{}, larger than the model limit of {} px per side; crop it first",
                img.height(),
                img.width(),
                self.config.max_side()
            )));
        }
        Ok((rows, cols))
    }

    /// Patches in (py, px, ch) order, standardized per channel.
    fn patchify(&self, img: &ImageGrid, rows: usize, cols: usize) -> Array2<F> {
        let (p, ch) = (self.config.patch_size, img.channels());
        let w = img.width();
        let data = img.data();
        let mut out = Array2::zeros((rows * cols, p * p * ch));
        for r in 0..rows {
            for c in 0..cols {
                let mut row = out.row_mut(r * cols + c);
                let mut k = 0;
                for py in 0..p {
                    let start = ((r * p + py) * w + c * p) * ch;
                    for (j, v) in data[start..start + p * ch].iter().enumerate() {
                        let c = j % ch % 3;
                        row[k] = F::c((f64::from(*v) - PIXEL_MEAN[c]) / PIXEL_STD[c]);
                        k += 1;
                    }
                }
            }
        }
        out
    }

    fn pos_rows(&self, rows: usize, cols: usize) -> Vec<usize> {
        let g = self.config.max_grid;
        (0..rows)
            .flat_map(|r| (0..cols).map(move |c| r * g + c))
            .collect()
    }

    /// Positional vectors of a `rows × cols` grid.
    pub fn positional_table(&self, rows: usize, cols: usize) -> Array2<F> {
        let table = self.params.mat(self.arch.pos);
        let idx = self.pos_rows(rows, cols);
        let mut out = Array2::zeros((idx.len(), self.config.embed_dim));
        for (mut o, i) in out.rows_mut().into_iter().zip(idx) {
            o.assign(&table.row(i));
        }
        out
    }

    fn encode_inner(&self, img: &ImageGrid, keep: bool) -> Result<(PatchTokens<F>, Option<EncodeCache<F>>)> {
        let (rows, cols) = self.grid_of(img)?;
        if let Some(bb) = &self.backbone {
            let t = bb.encode(img, self.config.patch_size)?;
            if t.dim() != (rows * cols, self.config.embed_dim) {
                return Err(Error::Shape(format!(
                    "backbone returned {:?} tokens, expected {:?}",
                    t.dim(),
                    (rows * cols, self.config.embed_dim)
                )));
            }
            let tokens = t.mapv(F::c);
            return Ok((PatchTokens { rows, cols, tokens }, None));
        }
        let p = &self.params;
        let patches = self.patchify(img, rows, cols);
        let mut x = self.arch.patch_embed.forward(p, patches.view());
        x += &self.positional_table(rows, cols);
        let mut blocks = Vec::with_capacity(self.arch.blocks.len());
        for b in &self.arch.blocks {
            let (y, c) = b.forward(p, x);
            x = y;
            if keep {
                blocks.push(c);
            }
        }
        let (tokens, norm) = self.arch.enc_norm.forward(p, x.view());
        let cache = keep.then(|| EncodeCache {
            patches,
            pos_rows: self.pos_rows(rows, cols),
            blocks,
            norm,
        });
        Ok((PatchTokens { rows, cols, tokens }, cache))
    }

    /// Patchify, embed, add grid positional vectors and run the encoder
    /// blocks. The same function serves query and reference images.
    pub fn encode_patches(&self, img: &ImageGrid) -> Result<PatchTokens<F>> {
        Ok(self.encode_inner(img, false)?.0)
    }

    fn memory(&self, refs: &[PatchTokens<F>]) -> Result<Array2<F>> {
        if refs.is_empty() {
            return Err(Error::Validation(
                "at least one reference image is required (use zeroed images to ablate)".into(),
            ));
        }
        let d = self.config.embed_dim;
        let views: Vec<ArrayView2<F>> = refs.iter().map(|r| r.tokens.view()).collect();
        if views.iter().any(|v| v.ncols() != d) {
            return Err(Error::Shape("reference tokens do not match embed_dim".into()));
        }
        Ok(ndarray::concatenate(ndarray::Axis(0), &views).expect("equal widths"))
    }

    /// Decoder layers with the query tokens as queries and the concatenated
    /// reference tokens as keys and values, followed by the final norm.
    pub fn cross_reference(
        &self,
        query: &PatchTokens<F>,
        refs: &[PatchTokens<F>],
        capture: bool,
    ) -> Result<(PatchTokens<F>, Option<AttentionRecord>)> {
        let mem = self.memory(refs)?;
        let p = &self.params;
        let mut x = query.tokens.clone();
        let mut layers = Vec::new();
        for l in &self.arch.decoder {
            let (y, c) = l.forward(p, x, mem.view());
            x = y;
            if capture {
                layers.push(
                    c.cross_attn
                        .probs
                        .iter()
                        .map(|a| a.mapv(|v| v.as_f64()))
                        .collect(),
                );
            }
        }
        let (tokens, _) = self.arch.dec_norm.forward(p, x.view());
        let record = capture.then(|| AttentionRecord {
            query_grid: (query.rows, query.cols),
            ref_grids: refs.iter().map(|r| (r.rows, r.cols)).collect(),
            layers,
        });
        Ok((
            PatchTokens {
                rows: query.rows,
                cols: query.cols,
                tokens,
            },
            record,
        ))
    }

    fn head_logits(&self, latent: &PatchTokens<F>) -> (Array2<F>, MlpCache<F>) {
        self.arch.head.forward(&self.params, latent.tokens.view())
    }

    fn tile(&self, scores: &Array2<F>, rows: usize, cols: usize) -> Array2<F> {
        let p = self.config.patch_size;
        let mut out = Array2::zeros((rows * p, cols * p));
        for r in 0..rows {
            for c in 0..cols {
                let t = scores.row(r * cols + c);
                for py in 0..p {
                    for px in 0..p {
                        out[[r * p + py, c * p + px]] = t[py * p + px];
                    }
                }
            }
        }
        out
    }

    fn untile(&self, map: &Array2<F>, rows: usize, cols: usize) -> Array2<F> {
        let p = self.config.patch_size;
        let mut out = Array2::zeros((rows * cols, p * p));
        for r in 0..rows {
            for c in 0..cols {
                let mut t = out.row_mut(r * cols + c);
                for py in 0..p {
                    for px in 0..p {
                        t[py * p + px] = map[[r * p + py, c * p + px]];
                    }
                }
            }
        }
        out
    }

    /// Per-token perceptron with logistic output, each token's P² values
    /// reshaped row-major into its P×P block.
    pub fn regress_scores(&self, latent: &PatchTokens<F>) -> Result<ScoreMap> {
        if latent.tokens.dim() != (latent.rows * latent.cols, self.config.embed_dim) {
            return Err(Error::Shape("latent token matrix does not match its grid".into()));
        }
        let (logits, _) = self.head_logits(latent);
        let scores = logits.mapv(sigmoid);
        Ok(to_score_map(&self.tile(&scores, latent.rows, latent.cols)))
    }

    fn check_ref_count(&self, n: usize) -> Result<()> {
        if n != self.config.n_ref {
            return Err(Error::Validation(format!(
                "expected {} reference images, got {n}",
                self.config.n_ref
            )));
        }
        Ok(())
    }

    /// Scores `query` against exactly `n_ref` references. All images must be
    /// crop-aligned to multiples of the patch size.
    pub fn forward(
        &self,
        query: &ImageGrid,
        refs: &[ImageGrid],
        capture: bool,
    ) -> Result<(ScoreMap, Option<AttentionRecord>)> {
        self.check_ref_count(refs.len())?;
        let q = self.encode_patches(query)?;
        let r = refs
            .iter()
            .map(|img| self.encode_patches(img))
            .collect::<Result<Vec<_>>>()?;
        let (latent, record) = self.cross_reference(&q, &r, capture)?;
        Ok((self.regress_scores(&latent)?, record))
    }

    /// Forward pass that keeps every intermediate needed by
    /// [`CrossRefModel::backward`]. Returns the score map in `F`.
    pub fn forward_train(
        &self,
        query: &ImageGrid,
        refs: &[ImageGrid],
    ) -> Result<(Array2<F>, ForwardCache<F>)> {
        self.check_ref_count(refs.len())?;
        let keep = self.encoder_trainable();
        let (q, qc) = self.encode_inner(query, keep)?;
        let mut r = Vec::with_capacity(refs.len());
        let mut rc = Vec::with_capacity(refs.len());
        for img in refs {
            let (t, c) = self.encode_inner(img, keep)?;
            r.push(t);
            rc.push(c);
        }
        let mem = self.memory(&r)?;
        let p = &self.params;
        let mut x = q.tokens.clone();
        let mut decoder = Vec::with_capacity(self.arch.decoder.len());
        for l in &self.arch.decoder {
            let (y, c) = l.forward(p, x, mem.view());
            x = y;
            decoder.push(c);
        }
        let (latent, dec_norm) = self.arch.dec_norm.forward(p, x.view());
        let (logits, head) = self.arch.head.forward(p, latent.view());
        let scores = logits.mapv(sigmoid);
        let map = self.tile(&scores, q.rows, q.cols);
        Ok((
            map,
            ForwardCache {
                query: qc,
                refs: rc,
                ref_lens: r.iter().map(|t| t.len()).collect(),
                decoder,
                dec_norm,
                head,
                scores,
                grid: (q.rows, q.cols),
            },
        ))
    }

    fn encode_backward(&self, cache: &EncodeCache<F>, dy: &Array2<F>, g: &mut ParamSet<F>) {
        let p = &self.params;
        let mut dx = self.arch.enc_norm.backward(p, g, &cache.norm, dy.view());
        for (b, c) in self.arch.blocks.iter().zip(&cache.blocks).rev() {
            dx = b.backward(p, g, c, dx);
        }
        {
            let mut dpos = g.mat_mut(self.arch.pos);
            for (row, &i) in dx.rows().into_iter().zip(&cache.pos_rows) {
                let mut t = dpos.row_mut(i);
                t += &row;
            }
        }
        self.arch
            .patch_embed
            .backward(p, g, cache.patches.view(), dx.view(), false);
    }

    /// Accumulates into `grads` the gradient of `Σ dmap ⊙ map`, where `map`
    /// is the output of the matching `forward_train` call.
    pub fn backward(&self, cache: &ForwardCache<F>, dmap: &Array2<F>, grads: &mut ParamSet<F>) {
        let p = &self.params;
        let (rows, cols) = cache.grid;
        let mut dlogits = self.untile(dmap, rows, cols);
        ndarray::Zip::from(&mut dlogits)
            .and(&cache.scores)
            .for_each(|d, &s| *d = *d * s * (F::one() - s));
        let dlatent = self.arch.head.backward(p, grads, &cache.head, dlogits.view());
        let mut dx = self
            .arch
            .dec_norm
            .backward(p, grads, &cache.dec_norm, dlatent.view());
        let total: usize = cache.ref_lens.iter().sum();
        let mut dmem = Array2::zeros((total, self.config.embed_dim));
        for (l, c) in self.arch.decoder.iter().zip(&cache.decoder).rev() {
            let (dxi, dm) = l.backward(p, grads, c, dx);
            dx = dxi;
            dmem += &dm;
        }
        if let Some(qc) = &cache.query {
            self.encode_backward(qc, &dx, grads);
        }
        let mut off = 0;
        for (rc, &n) in cache.refs.iter().zip(&cache.ref_lens) {
            if let Some(rc) = rc {
                let slice = dmem.slice(ndarray::s![off..off + n, ..]).to_owned();
                self.encode_backward(rc, &slice, grads);
            }
            off += n;
        }
    }
}

fn sigmoid<F: Real>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

fn to_score_map<F: Real>(m: &Array2<F>) -> ScoreMap {
    let (h, w) = m.dim();
    ScoreMap::from_raw(h, w, m.iter().map(|v| v.as_f64() as f32).collect())
}

/// Converts an `F` map to a [`ScoreMap`].
pub fn score_map_from<F: Real>(m: &Array2<F>) -> ScoreMap {
    to_score_map(m)
}
