use rand::Rng;

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::data::PixelImage;
use crate::error::{Error, Result};
use crate::rng::{rng_for, stream};

use super::config::{EncoderConfig, Variant};
use super::params::{full, trunc_normal, BoundParams, ParamMap};

const INIT_STD: f64 = 0.02;
/// Initial softmax temperature for the contrastive head.
pub const TEMPERATURE_INIT: f64 = 0.07;

/// A finite, unit-norm embedding row. Construction checks the invariant,
/// so dot products between embeddings are cosines by definition.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingVec {
    values: Vec<f64>,
}

impl EmbeddingVec {
    pub fn from_unit(values: Vec<f64>) -> Result<EmbeddingVec> {
        if values.is_empty() {
            return Err(Error::input("embedding", "empty vector"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("embedding values"));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::input("embedding", format!("norm {norm} is not 1")));
        }
        Ok(EmbeddingVec { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Cosine similarity (both sides are unit norm).
    pub fn dot(&self, other: &EmbeddingVec) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }
}

// ── parameter specs ─────────────────────────────────────────────────────

enum InitKind {
    TruncNormal,
    Zeros,
    Ones,
    Value(f64),
}

pub(crate) struct ParamSpec {
    name: String,
    rows: usize,
    cols: usize,
    init: InitKind,
}

fn spec(name: String, rows: usize, cols: usize, init: InitKind) -> ParamSpec {
    ParamSpec { name, rows, cols, init }
}

/// Shared shape of one transformer stack, independent of what feeds it.
#[derive(Clone, Copy)]
pub(crate) struct TowerDims {
    pub embed_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub mlp_ratio: usize,
}

impl TowerDims {
    fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }

    fn mlp_dim(&self) -> usize {
        self.embed_dim * self.mlp_ratio
    }
}

impl From<&EncoderConfig> for TowerDims {
    fn from(c: &EncoderConfig) -> TowerDims {
        TowerDims {
            embed_dim: c.embed_dim,
            num_layers: c.num_layers,
            num_heads: c.num_heads,
            mlp_ratio: c.mlp_ratio,
        }
    }
}

fn block_specs(prefix: &str, dims: &TowerDims, out: &mut Vec<ParamSpec>) {
    let d = dims.embed_dim;
    let m = dims.mlp_dim();
    for i in 0..dims.num_layers {
        let p = format!("{prefix}.block{i}");
        out.push(spec(format!("{p}.attn_ln.gain"), 1, d, InitKind::Ones));
        out.push(spec(format!("{p}.attn_ln.bias"), 1, d, InitKind::Zeros));
        for w in ["wq", "wk", "wv", "wo"] {
            out.push(spec(format!("{p}.attn.{w}"), d, d, InitKind::TruncNormal));
        }
        for b in ["bq", "bk", "bv", "bo"] {
            out.push(spec(format!("{p}.attn.{b}"), 1, d, InitKind::Zeros));
        }
        out.push(spec(format!("{p}.mlp_ln.gain"), 1, d, InitKind::Ones));
        out.push(spec(format!("{p}.mlp_ln.bias"), 1, d, InitKind::Zeros));
        out.push(spec(format!("{p}.mlp.w1"), d, m, InitKind::TruncNormal));
        out.push(spec(format!("{p}.mlp.b1"), 1, m, InitKind::Zeros));
        out.push(spec(format!("{p}.mlp.w2"), m, d, InitKind::TruncNormal));
        out.push(spec(format!("{p}.mlp.b2"), 1, d, InitKind::Zeros));
    }
    out.push(spec(format!("{prefix}.final_ln.gain"), 1, d, InitKind::Ones));
    out.push(spec(format!("{prefix}.final_ln.bias"), 1, d, InitKind::Zeros));
    out.push(spec(format!("{prefix}.proj"), d, d, InitKind::TruncNormal));
}

/// Specs for a token-input tower: embeddings, blocks, output head.
pub(crate) fn text_tower_specs(
    prefix: &str,
    dims: &TowerDims,
    vocab_size: usize,
    max_seq_len: usize,
) -> Vec<ParamSpec> {
    let d = dims.embed_dim;
    let mut out = vec![
        spec(format!("{prefix}.tok_embed"), vocab_size, d, InitKind::TruncNormal),
        spec(format!("{prefix}.pos_embed"), max_seq_len, d, InitKind::TruncNormal),
    ];
    block_specs(prefix, dims, &mut out);
    out
}

pub(crate) fn init_params(
    specs: &[ParamSpec],
    rng: &mut impl Rng,
    std: f64,
    trainable: bool,
) -> Result<ParamMap> {
    let mut params = ParamMap::new();
    for s in specs {
        let tensor = match s.init {
            InitKind::TruncNormal => trunc_normal(rng, s.rows, s.cols, std, trainable),
            InitKind::Zeros => full(s.rows, s.cols, 0.0, trainable),
            InitKind::Ones => full(s.rows, s.cols, 1.0, trainable),
            InitKind::Value(v) => full(s.rows, s.cols, v, trainable),
        };
        params.insert(&s.name, tensor)?;
    }
    Ok(params)
}

/// Verify a loaded parameter set matches the expected names and shapes.
pub(crate) fn check_params(specs: &[ParamSpec], params: &ParamMap) -> Result<()> {
    if params.len() != specs.len() {
        return Err(Error::format(
            "params",
            format!("expected {} tensors, found {}", specs.len(), params.len()),
        ));
    }
    for s in specs {
        let t = params
            .get(&s.name)
            .ok_or_else(|| Error::format("params", format!("missing tensor {:?}", s.name)))?;
        if t.matrix_dims() != Some((s.rows, s.cols)) {
            return Err(Error::format(
                "params",
                format!("tensor {:?} has shape {:?}, expected {}x{}", s.name, t.shape(), s.rows, s.cols),
            ));
        }
    }
    Ok(())
}

// ── graph builders ──────────────────────────────────────────────────────

fn attention_graph(
    tape: &mut Tape,
    bound: &BoundParams,
    prefix: &str,
    dims: &TowerDims,
    x: NodeId,
    causal: bool,
) -> Result<NodeId> {
    let (t, _) = tape.dims(x);
    let dh = dims.head_dim();
    let h = tape.layer_norm(x, bound.id(&format!("{prefix}.attn_ln.gain"))?, bound.id(&format!("{prefix}.attn_ln.bias"))?)?;
    let mut qkv = Vec::with_capacity(3);
    for (w, b) in [("wq", "bq"), ("wk", "bk"), ("wv", "bv")] {
        let lin = tape.matmul(h, bound.id(&format!("{prefix}.attn.{w}"))?)?;
        qkv.push(tape.add(lin, bound.id(&format!("{prefix}.attn.{b}"))?)?);
    }
    let mask: Option<Vec<bool>> =
        causal.then(|| (0..t * t).map(|k| k % t <= k / t).collect());
    let mut heads = Vec::with_capacity(dims.num_heads);
    for i in 0..dims.num_heads {
        let (lo, hi) = (i * dh, (i + 1) * dh);
        let q = tape.slice_cols(qkv[0], lo, hi)?;
        let k = tape.slice_cols(qkv[1], lo, hi)?;
        let v = tape.slice_cols(qkv[2], lo, hi)?;
        let scores = tape.matmul_nt(q, k)?;
        let attn = match &mask {
            Some(m) => tape.softmax_rows_masked(scores, (dh as f64).sqrt(), m.clone())?,
            None => tape.softmax_rows(scores, (dh as f64).sqrt())?,
        };
        heads.push(tape.matmul(attn, v)?);
    }
    let cat = tape.concat_cols(&heads)?;
    let out = tape.matmul(cat, bound.id(&format!("{prefix}.attn.wo"))?)?;
    tape.add(out, bound.id(&format!("{prefix}.attn.bo"))?)
}

fn mlp_graph(
    tape: &mut Tape,
    bound: &BoundParams,
    prefix: &str,
    x: NodeId,
) -> Result<NodeId> {
    let h = tape.layer_norm(x, bound.id(&format!("{prefix}.mlp_ln.gain"))?, bound.id(&format!("{prefix}.mlp_ln.bias"))?)?;
    let u = tape.matmul(h, bound.id(&format!("{prefix}.mlp.w1"))?)?;
    let u = tape.add(u, bound.id(&format!("{prefix}.mlp.b1"))?)?;
    let g = tape.gelu(u)?;
    let m = tape.matmul(g, bound.id(&format!("{prefix}.mlp.w2"))?)?;
    tape.add(m, bound.id(&format!("{prefix}.mlp.b2"))?)
}

/// Pre-norm transformer blocks followed by the final layer norm.
pub(crate) fn blocks_graph(
    tape: &mut Tape,
    bound: &BoundParams,
    prefix: &str,
    dims: &TowerDims,
    mut x: NodeId,
    causal: bool,
) -> Result<NodeId> {
    for i in 0..dims.num_layers {
        let p = format!("{prefix}.block{i}");
        let attn = attention_graph(tape, bound, &p, dims, x, causal)?;
        x = tape.add(x, attn)?;
        let mlp = mlp_graph(tape, bound, &p, x)?;
        x = tape.add(x, mlp)?;
    }
    tape.layer_norm(
        x,
        bound.id(&format!("{prefix}.final_ln.gain"))?,
        bound.id(&format!("{prefix}.final_ln.bias"))?,
    )
}

/// Output head: linear projection then L2 normalization.
pub(crate) fn head_graph(
    tape: &mut Tape,
    bound: &BoundParams,
    prefix: &str,
    row: NodeId,
) -> Result<NodeId> {
    let p = tape.matmul(row, bound.id(&format!("{prefix}.proj"))?)?;
    tape.l2_normalize_rows(p)
}

/// Token-input tower: embed tokens with positions, run the blocks, mean
/// pool, project, normalize.
pub(crate) fn text_tower_graph(
    tape: &mut Tape,
    bound: &BoundParams,
    prefix: &str,
    dims: &TowerDims,
    max_seq_len: usize,
    tokens: &[u32],
) -> Result<NodeId> {
    if tokens.is_empty() {
        return Err(Error::input("text_tower", "empty token sequence"));
    }
    if tokens.len() > max_seq_len {
        return Err(Error::input(
            "text_tower",
            format!("{} tokens exceed max_seq_len {}", tokens.len(), max_seq_len),
        ));
    }
    let ids: Vec<usize> = tokens.iter().map(|&t| t as usize).collect();
    let tok = tape.embedding(bound.id(&format!("{prefix}.tok_embed"))?, &ids)?;
    let pos_table = bound.id(&format!("{prefix}.pos_embed"))?;
    let pos = tape.slice_rows(pos_table, 0, ids.len())?;
    let x = tape.add(tok, pos)?;
    let out = blocks_graph(tape, bound, prefix, dims, x, false)?;
    let pooled = tape.mean_rows(out)?;
    head_graph(tape, bound, prefix, pooled)
}

/// Flatten an image into `n_patches x patch_dim` rows: patches in
/// row-major grid order, each patch row-major by pixel with interleaved
/// channels.
pub(crate) fn patchify(image: &PixelImage, config: &EncoderConfig) -> Result<Vec<f64>> {
    if image.width != config.image_width || image.height != config.image_height {
        return Err(Error::input(
            "patchify",
            format!(
                "image is {}x{}, encoder expects {}x{}",
                image.width, image.height, config.image_width, config.image_height
            ),
        ));
    }
    let p = config.patch_size;
    let grid_w = config.image_width / p;
    let grid_h = config.image_height / p;
    let mut data = Vec::with_capacity(config.n_patches() * config.patch_dim());
    for py in 0..grid_h {
        for px in 0..grid_w {
            for r in 0..p {
                let y = py * p + r;
                for c in 0..p {
                    let x = px * p + c;
                    let off = (y * image.width + x) * 3;
                    data.extend_from_slice(&image.data[off..off + 3]);
                }
            }
        }
    }
    Ok(data)
}

// ── the trainable encoder ───────────────────────────────────────────────

/// Trainable condition-aware image encoder: all parameters for the chosen
/// variant plus the learnable contrastive temperature.
#[derive(Clone, Debug)]
pub struct Encoder {
    config: EncoderConfig,
    params: ParamMap,
}

impl Encoder {
    fn param_specs(config: &EncoderConfig) -> Vec<ParamSpec> {
        let dims = TowerDims::from(config);
        let d = config.embed_dim;
        let mut specs = Vec::new();
        match config.variant {
            Variant::Clip => {
                specs.extend(text_tower_specs("cond", &dims, config.vocab_size, config.max_seq_len));
                specs.push(spec("img.patch_proj".into(), config.patch_dim(), d, InitKind::TruncNormal));
                specs.push(spec("img.patch_bias".into(), 1, d, InitKind::Zeros));
                specs.push(spec("img.cls".into(), 1, d, InitKind::TruncNormal));
                specs.push(spec("img.pos_embed".into(), config.clip_seq_len(), d, InitKind::TruncNormal));
                block_specs("img", &dims, &mut specs);
            }
            Variant::Mllm => {
                specs.push(spec("lm.tok_embed".into(), config.vocab_size, d, InitKind::TruncNormal));
                specs.push(spec("lm.patch_proj".into(), config.patch_dim(), d, InitKind::TruncNormal));
                specs.push(spec("lm.patch_bias".into(), 1, d, InitKind::Zeros));
                specs.push(spec("lm.pos_embed".into(), config.max_seq_len, d, InitKind::TruncNormal));
                block_specs("lm", &dims, &mut specs);
            }
        }
        specs.push(spec("log_temp".into(), 1, 1, InitKind::Value(TEMPERATURE_INIT.ln())));
        specs
    }

    /// Fresh random initialization (truncated normal weights, zero
    /// biases, unit gains, temperature 0.07).
    pub fn init(config: EncoderConfig, seed: u64) -> Result<Encoder> {
        config.validate()?;
        let mut rng = rng_for(seed, stream::MODEL_INIT, 0);
        let params = init_params(&Self::param_specs(&config), &mut rng, INIT_STD, true)?;
        Ok(Encoder { config, params })
    }

    /// Rebuild from stored parameters, checking names and shapes.
    pub fn from_parts(config: EncoderConfig, params: ParamMap) -> Result<Encoder> {
        config.validate()?;
        check_params(&Self::param_specs(&config), &params)?;
        Ok(Encoder { config, params })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamMap {
        &self.params
    }

    pub fn log_temp(&self) -> &Tensor {
        self.params.get("log_temp").expect("log_temp always present")
    }

    /// Current contrastive temperature.
    pub fn temperature(&self) -> f64 {
        self.log_temp().with_data(|d| d[0].exp())
    }

    pub fn bind(&self, tape: &mut Tape) -> Result<BoundParams> {
        self.params.bind(tape)
    }

    /// Condition tower (clip variant only): instruction tokens to a unit
    /// embedding row.
    pub fn condition_graph(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        instruction: &[u32],
    ) -> Result<NodeId> {
        if self.config.variant != Variant::Clip {
            return Err(Error::input(
                "encoder",
                "the mllm variant has no separate condition tower",
            ));
        }
        let dims = TowerDims::from(&self.config);
        text_tower_graph(tape, bound, "cond", &dims, self.config.max_seq_len, instruction)
    }

    /// Clip image tower: class token, patch tokens, and the condition
    /// embedding as the trailing token; reads out the class position.
    pub fn clip_image_graph(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        image: &PixelImage,
        condition: NodeId,
    ) -> Result<NodeId> {
        if self.config.variant != Variant::Clip {
            return Err(Error::input("encoder", "clip_image_graph on a non-clip encoder"));
        }
        let (cr, cc) = tape.dims(condition);
        if (cr, cc) != (1, self.config.embed_dim) {
            return Err(Error::shape(
                "encoder",
                format!("condition is {cr}x{cc}, expected 1x{}", self.config.embed_dim),
            ));
        }
        let dims = TowerDims::from(&self.config);
        let patches = tape.constant(
            self.config.n_patches(),
            self.config.patch_dim(),
            patchify(image, &self.config)?,
        )?;
        let p = tape.matmul(patches, bound.id("img.patch_proj")?)?;
        let p = tape.add(p, bound.id("img.patch_bias")?)?;
        let seq = tape.concat_rows(&[bound.id("img.cls")?, p, condition])?;
        let x = tape.add(seq, bound.id("img.pos_embed")?)?;
        let out = blocks_graph(tape, bound, "img", &dims, x, false)?;
        let cls = tape.slice_rows(out, 0, 1)?;
        head_graph(tape, bound, "img", cls)
    }

    /// Mllm tower: patch tokens, instruction tokens, and a trailing
    /// end-of-sequence token under causal attention; reads out the last
    /// position.
    pub fn mllm_image_graph(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        image: &PixelImage,
        instruction: &[u32],
    ) -> Result<NodeId> {
        if self.config.variant != Variant::Mllm {
            return Err(Error::input("encoder", "mllm_image_graph on a non-mllm encoder"));
        }
        if instruction.is_empty() {
            return Err(Error::input("encoder", "empty instruction"));
        }
        let n = self.config.n_patches();
        let total = n + instruction.len() + 1;
        if total > self.config.max_seq_len {
            return Err(Error::input(
                "encoder",
                format!(
                    "sequence of {total} tokens ({} instruction) exceeds max_seq_len {}",
                    instruction.len(),
                    self.config.max_seq_len
                ),
            ));
        }
        let dims = TowerDims::from(&self.config);
        let patches =
            tape.constant(n, self.config.patch_dim(), patchify(image, &self.config)?)?;
        let p = tape.matmul(patches, bound.id("lm.patch_proj")?)?;
        let p = tape.add(p, bound.id("lm.patch_bias")?)?;
        let table = bound.id("lm.tok_embed")?;
        let mut ids: Vec<usize> = instruction.iter().map(|&t| t as usize).collect();
        ids.push(crate::data::EOS_ID as usize);
        let toks = tape.embedding(table, &ids)?;
        let seq = tape.concat_rows(&[p, toks])?;
        let pos = tape.slice_rows(bound.id("lm.pos_embed")?, 0, total)?;
        let x = tape.add(seq, pos)?;
        let out = blocks_graph(tape, bound, "lm", &dims, x, true)?;
        let last = tape.slice_rows(out, total - 1, total)?;
        head_graph(tape, bound, "lm", last)
    }

    /// End-to-end conditioned image embedding graph for either variant.
    pub fn embedding_graph(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        image: &PixelImage,
        instruction: &[u32],
    ) -> Result<NodeId> {
        match self.config.variant {
            Variant::Clip => {
                let cond = self.condition_graph(tape, bound, instruction)?;
                self.clip_image_graph(tape, bound, image, cond)
            }
            Variant::Mllm => self.mllm_image_graph(tape, bound, image, instruction),
        }
    }

    /// Convenience single-input forward pass on a private tape.
    pub fn embed_image(&self, image: &PixelImage, instruction: &[u32]) -> Result<EmbeddingVec> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape)?;
        let node = self.embedding_graph(&mut tape, &bound, image, instruction)?;
        EmbeddingVec::from_unit(tape.value(node).to_vec())
    }

    /// Convenience condition embedding (clip variant) on a private tape.
    pub fn embed_condition(&self, instruction: &[u32]) -> Result<EmbeddingVec> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape)?;
        let node = self.condition_graph(&mut tape, &bound, instruction)?;
        EmbeddingVec::from_unit(tape.value(node).to_vec())
    }
}
