//! Compact reference encoder: hashed token embeddings, sinusoidal positions,
//! post-norm self-attention blocks and begin-marker pooling, with an explicit
//! backward pass in `f64`.

use ndarray::{s, Array1, Array2, ArrayView1, Axis, Zip};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tokenizer::{HashingTokenizer, TokenSequence};
use super::{EmbeddingMatrix, EncoderContract, EncoderOutput, TrainableEncoder, DEFAULT_MAX_LEN};
use crate::error::{Error, Result};
use crate::lexicon_prefix::{ComposedInput, DEFAULT_MAX_PREFIX_TOKENS};
use crate::seed::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactConfig {
    pub vocab_size: u32,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub ffn_size: usize,
    pub max_len: usize,
    pub max_prefix_tokens: usize,
    pub dropout: f64,
    pub layer_norm_eps: f64,
    pub seed: u64,
}

impl Default for CompactConfig {
    fn default() -> Self {
        CompactConfig {
            vocab_size: 32_768,
            hidden_size: 64,
            num_layers: 2,
            num_heads: 4,
            ffn_size: 128,
            max_len: DEFAULT_MAX_LEN,
            max_prefix_tokens: DEFAULT_MAX_PREFIX_TOKENS,
            dropout: 0.2,
            layer_norm_eps: 1e-5,
            seed: 0,
        }
    }
}

impl CompactConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.hidden_size == 0 || self.num_heads == 0 || self.hidden_size % self.num_heads != 0 {
            return bad("hidden_size must be a positive multiple of num_heads");
        }
        if self.num_layers == 0 || self.ffn_size == 0 {
            return bad("num_layers and ffn_size must be positive");
        }
        if self.vocab_size <= super::RESERVED_IDS {
            return bad("vocab_size too small");
        }
        if self.max_len < 4 {
            return bad("max_len must be at least 4");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Block {
    wq: Array2<f64>,
    bq: Array1<f64>,
    wk: Array2<f64>,
    bk: Array1<f64>,
    wv: Array2<f64>,
    bv: Array1<f64>,
    wo: Array2<f64>,
    bo: Array1<f64>,
    ln1_g: Array1<f64>,
    ln1_b: Array1<f64>,
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
    ln2_g: Array1<f64>,
    ln2_b: Array1<f64>,
}

macro_rules! block_fields {
    ($m:ident) => {
        $m!(wq, bq, wk, bk, wv, bv, wo, bo, ln1_g, ln1_b, w1, b1, w2, b2, ln2_g, ln2_b)
    };
}

impl Block {
    fn init(d: usize, f: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut mat = |rows: usize, cols: usize| {
            let normal = Normal::new(0.0, 1.0 / (rows as f64).sqrt()).unwrap();
            Array2::from_shape_fn((rows, cols), |_| normal.sample(rng))
        };
        Block {
            wq: mat(d, d),
            wk: mat(d, d),
            wv: mat(d, d),
            wo: mat(d, d),
            w1: mat(d, f),
            w2: mat(f, d),
            bq: Array1::zeros(d),
            bk: Array1::zeros(d),
            bv: Array1::zeros(d),
            bo: Array1::zeros(d),
            ln1_g: Array1::ones(d),
            ln1_b: Array1::zeros(d),
            b1: Array1::zeros(f),
            b2: Array1::zeros(d),
            ln2_g: Array1::ones(d),
            ln2_b: Array1::zeros(d),
        }
    }

    fn zeros_like(&self) -> Self {
        macro_rules! z {
            ($($f:ident),*) => { Block { $($f: ndarray::Array::zeros(self.$f.raw_dim())),* } };
        }
        block_fields!(z)
    }

    fn fill_zero(&mut self) {
        macro_rules! z {
            ($($f:ident),*) => {{ $(self.$f.fill(0.0);)* }};
        }
        block_fields!(z)
    }

    fn named_slices(&self, prefix: &str) -> Vec<(String, Vec<usize>, &[f64])> {
        macro_rules! n {
            ($($f:ident),*) => {
                vec![$((format!("{prefix}.{}", stringify!($f)), self.$f.shape().to_vec(), self.$f.as_slice().unwrap())),*]
            };
        }
        block_fields!(n)
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        macro_rules! n {
            ($($f:ident),*) => { vec![$(self.$f.as_slice_mut().unwrap()),*] };
        }
        block_fields!(n)
    }

    fn slices(&self) -> Vec<&[f64]> {
        macro_rules! n {
            ($($f:ident),*) => { vec![$(self.$f.as_slice().unwrap()),*] };
        }
        block_fields!(n)
    }
}

struct LayerNormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, gamma: &Array1<f64>, beta: &Array1<f64>, eps: f64) -> (Array2<f64>, LayerNormCache) {
    let d = x.ncols() as f64;
    let mean = x.sum_axis(Axis(1)) / d;
    let centered = x - &mean.view().insert_axis(Axis(1));
    let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / d;
    let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
    let xhat = centered * &inv_std.view().insert_axis(Axis(1));
    let y = &xhat * gamma + beta;
    (y, LayerNormCache { xhat, inv_std })
}

fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &LayerNormCache,
    gamma: &Array1<f64>,
    d_gamma: &mut Array1<f64>,
    d_beta: &mut Array1<f64>,
) -> Array2<f64> {
    *d_gamma += &(dy * &cache.xhat).sum_axis(Axis(0));
    *d_beta += &dy.sum_axis(Axis(0));
    let dxhat = dy * gamma;
    let d = dy.ncols() as f64;
    let mean_dxhat = dxhat.sum_axis(Axis(1)) / d;
    let mean_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(1)) / d;
    let mut dx = dxhat;
    Zip::from(dx.rows_mut())
        .and(cache.xhat.rows())
        .and(&mean_dxhat)
        .and(&mean_dxhat_xhat)
        .and(&cache.inv_std)
        .for_each(|mut row, xhat, &m1, &m2, &inv| {
            Zip::from(&mut row).and(&xhat).for_each(|v, &xh| *v = inv * (*v - m1 - xh * m2));
        });
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044_715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044_715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044_715 * x * x)
}

/// Inverted-dropout mask; `None` in evaluation mode or when `p == 0`.
fn dropout_mask(shape: (usize, usize), p: f64, rng: Option<&mut ChaCha8Rng>) -> Option<Array2<f64>> {
    match rng {
        Some(rng) if p > 0.0 => {
            let keep = 1.0 / (1.0 - p);
            Some(Array2::from_shape_fn(shape, |_| if rng.gen::<f64>() < p { 0.0 } else { keep }))
        }
        _ => None,
    }
}

fn apply_mask(x: Array2<f64>, mask: &Option<Array2<f64>>) -> Array2<f64> {
    match mask {
        Some(m) => x * m,
        None => x,
    }
}

fn sinusoidal_positions(max_len: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((max_len, d), |(pos, i)| {
        let angle = pos as f64 / 10_000f64.powf((2 * (i / 2)) as f64 / d as f64);
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

struct BlockCache {
    input: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    ctx: Array2<f64>,
    attn_drop: Option<Array2<f64>>,
    ln1: LayerNormCache,
    x1: Array2<f64>,
    pre_act: Array2<f64>,
    act: Array2<f64>,
    ffn_drop: Option<Array2<f64>>,
    ln2: LayerNormCache,
}

pub struct CompactCache {
    input_drop: Option<Array2<f64>>,
    blocks: Vec<BlockCache>,
    len: usize,
}

/// Gradients for [`CompactEncoder`]. The token-embedding gradient is dense.
#[derive(Debug, Clone)]
pub struct CompactGrads {
    token_embedding: Array2<f64>,
    blocks: Vec<Block>,
}

impl CompactGrads {
    pub fn token_embedding(&self) -> &Array2<f64> {
        &self.token_embedding
    }

    /// All gradient values, in parameter order.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = self.token_embedding.as_slice().unwrap().to_vec();
        for b in &self.blocks {
            for s in b.slices() {
                out.extend_from_slice(s);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompactEncoder {
    config: CompactConfig,
    tokenizer: HashingTokenizer,
    token_embedding: Array2<f64>,
    blocks: Vec<Block>,
    positions: Array2<f64>,
}

impl CompactEncoder {
    pub fn new(config: CompactConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_for(config.seed, "encoder-init", 0);
        let d = config.hidden_size;
        let normal = Normal::new(0.0, 1.0).unwrap();
        let token_embedding = Array2::from_shape_fn((config.vocab_size as usize, d), |_| normal.sample(&mut rng));
        let blocks = (0..config.num_layers).map(|_| Block::init(d, config.ffn_size, &mut rng)).collect();
        let tokenizer = HashingTokenizer { vocab_size: config.vocab_size, max_prefix_tokens: config.max_prefix_tokens };
        let positions = sinusoidal_positions(config.max_len, d);
        Ok(CompactEncoder { config, tokenizer, token_embedding, blocks, positions })
    }

    pub fn config(&self) -> &CompactConfig {
        &self.config
    }

    pub fn tokenizer(&self) -> &HashingTokenizer {
        &self.tokenizer
    }

    pub fn token_embedding(&self) -> &Array2<f64> {
        &self.token_embedding
    }

    /// Every parameter tensor with its name and shape, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = vec![(
            "token_embedding".to_string(),
            self.token_embedding.shape().to_vec(),
            self.token_embedding.as_slice().unwrap(),
        )];
        for (i, b) in self.blocks.iter().enumerate() {
            out.extend(b.named_slices(&format!("block{i}")));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.token_embedding.as_slice_mut().unwrap()];
        for b in &mut self.blocks {
            out.extend(b.slices_mut());
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|t| t.2.len()).sum()
    }

    fn check_input(&self, emb: &EmbeddingMatrix, mask: &[u8]) -> Result<()> {
        let (len, d) = emb.0.dim();
        if d != self.config.hidden_size {
            return Err(Error::Shape(format!("embedding width {d}, expected {}", self.config.hidden_size)));
        }
        if len == 0 || len > self.config.max_len || mask.len() != len {
            return Err(Error::Shape(format!(
                "sequence length {len} with mask length {} (max {})",
                mask.len(),
                self.config.max_len
            )));
        }
        if mask[0] != 1 {
            return Err(Error::Shape("begin marker must not be masked".into()));
        }
        emb.check_finite("embedding matrix")
    }

    fn block_forward(
        &self,
        block: &Block,
        x: Array2<f64>,
        mask: &[u8],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> (Array2<f64>, BlockCache) {
        let (len, d) = x.dim();
        let heads = self.config.num_heads;
        let dk = d / heads;
        let scale = 1.0 / (dk as f64).sqrt();
        let q = x.dot(&block.wq) + &block.bq;
        let k = x.dot(&block.wk) + &block.bk;
        let v = x.dot(&block.wv) + &block.bv;

        let mut ctx = Array2::zeros((len, d));
        let mut probs = Vec::with_capacity(heads);
        for h in 0..heads {
            let cols = s![.., h * dk..(h + 1) * dk];
            let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            for mut row in scores.rows_mut() {
                let max = row
                    .iter()
                    .zip(mask)
                    .filter(|(_, &m)| m == 1)
                    .map(|(v, _)| *v)
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for (v, &m) in row.iter_mut().zip(mask) {
                    *v = if m == 1 { (*v - max).exp() } else { 0.0 };
                    total += *v;
                }
                row /= total;
            }
            ctx.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
            probs.push(scores);
        }

        let attn = ctx.dot(&block.wo) + &block.bo;
        let attn_drop = dropout_mask((len, d), self.config.dropout, rng.as_deref_mut());
        let u = &x + &apply_mask(attn, &attn_drop);
        let (x1, ln1) = layer_norm(&u, &block.ln1_g, &block.ln1_b, self.config.layer_norm_eps);

        let pre_act = x1.dot(&block.w1) + &block.b1;
        let act = pre_act.mapv(gelu);
        let ffn = act.dot(&block.w2) + &block.b2;
        let ffn_drop = dropout_mask((len, d), self.config.dropout, rng);
        let w = &x1 + &apply_mask(ffn, &ffn_drop);
        let (out, ln2) = layer_norm(&w, &block.ln2_g, &block.ln2_b, self.config.layer_norm_eps);

        let cache = BlockCache { input: x, q, k, v, probs, ctx, attn_drop, ln1, x1, pre_act, act, ffn_drop, ln2 };
        (out, cache)
    }

    fn block_backward(&self, block: &Block, cache: &BlockCache, d_out: &Array2<f64>, g: &mut Block) -> Array2<f64> {
        let d = block.wq.nrows();
        let heads = self.config.num_heads;
        let dk = d / heads;
        let scale = 1.0 / (dk as f64).sqrt();

        let dw = layer_norm_backward(d_out, &cache.ln2, &block.ln2_g, &mut g.ln2_g, &mut g.ln2_b);
        let mut dx1 = dw.clone();
        let dffn = apply_mask(dw, &cache.ffn_drop);
        g.w2 += &cache.act.t().dot(&dffn);
        g.b2 += &dffn.sum_axis(Axis(0));
        let mut dpre = dffn.dot(&block.w2.t());
        Zip::from(&mut dpre).and(&cache.pre_act).for_each(|dv, &x| *dv *= gelu_grad(x));
        g.w1 += &cache.x1.t().dot(&dpre);
        g.b1 += &dpre.sum_axis(Axis(0));
        dx1 += &dpre.dot(&block.w1.t());

        let du = layer_norm_backward(&dx1, &cache.ln1, &block.ln1_g, &mut g.ln1_g, &mut g.ln1_b);
        let mut dx = du.clone();
        let dattn = apply_mask(du, &cache.attn_drop);
        g.wo += &cache.ctx.t().dot(&dattn);
        g.bo += &dattn.sum_axis(Axis(0));
        let dctx = dattn.dot(&block.wo.t());

        let len = dctx.nrows();
        let mut dq = Array2::zeros((len, d));
        let mut dkm = Array2::zeros((len, d));
        let mut dv = Array2::zeros((len, d));
        for (h, p) in cache.probs.iter().enumerate() {
            let cols = s![.., h * dk..(h + 1) * dk];
            let dctx_h = dctx.slice(cols);
            let dp = dctx_h.dot(&cache.v.slice(cols).t());
            dv.slice_mut(cols).assign(&p.t().dot(&dctx_h));
            let mut ds = &dp * p;
            let row_sums = ds.sum_axis(Axis(1));
            Zip::from(ds.rows_mut()).and(p.rows()).and(&row_sums).for_each(|mut row, prow, &rs| {
                Zip::from(&mut row).and(&prow).for_each(|v, &pv| *v = (*v - pv * rs) * scale);
            });
            dq.slice_mut(cols).assign(&ds.dot(&cache.k.slice(cols)));
            dkm.slice_mut(cols).assign(&ds.t().dot(&cache.q.slice(cols)));
        }
        let xt = cache.input.t();
        g.wq += &xt.dot(&dq);
        g.bq += &dq.sum_axis(Axis(0));
        g.wk += &xt.dot(&dkm);
        g.bk += &dkm.sum_axis(Axis(0));
        g.wv += &xt.dot(&dv);
        g.bv += &dv.sum_axis(Axis(0));
        dx += &dq.dot(&block.wq.t());
        dx += &dkm.dot(&block.wk.t());
        dx += &dv.dot(&block.wv.t());
        dx
    }
}

impl EncoderContract for CompactEncoder {
    fn hidden_size(&self) -> usize {
        self.config.hidden_size
    }

    fn tokenize(&self, input: &ComposedInput, max_len: usize) -> TokenSequence {
        self.tokenizer.tokenize(input, max_len.min(self.config.max_len))
    }

    fn embed(&self, tokens: &TokenSequence) -> Result<EmbeddingMatrix> {
        let vocab = self.config.vocab_size;
        if let Some(&bad) = tokens.ids().iter().find(|&&id| id >= vocab) {
            return Err(Error::InvalidArgument(format!("token id {bad} outside vocabulary of {vocab}")));
        }
        let rows: Vec<usize> = tokens.ids().iter().map(|&id| id as usize).collect();
        Ok(EmbeddingMatrix(self.token_embedding.select(Axis(0), &rows)))
    }

    fn encode_from_embeddings(&self, emb: &EmbeddingMatrix, mask: &[u8]) -> Result<EncoderOutput> {
        self.forward_train(emb, mask, None).map(|(out, _)| out)
    }
}

impl TrainableEncoder for CompactEncoder {
    type Cache = CompactCache;
    type Grads = CompactGrads;

    fn forward_train(
        &self,
        emb: &EmbeddingMatrix,
        mask: &[u8],
        mut dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<(EncoderOutput, CompactCache)> {
        self.check_input(emb, mask)?;
        let len = emb.rows();
        let x = &emb.0 + &self.positions.slice(s![..len, ..]);
        let input_drop = dropout_mask(x.dim(), self.config.dropout, dropout.as_deref_mut());
        let mut x = apply_mask(x, &input_drop);
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (out, cache) = self.block_forward(block, x, mask, dropout.as_deref_mut());
            blocks.push(cache);
            x = out;
        }
        let pooled = x.row(0).to_owned();
        Ok((EncoderOutput { pooled }, CompactCache { input_drop, blocks, len }))
    }

    fn backward(&self, cache: &CompactCache, d_pooled: ArrayView1<f64>, grads: &mut CompactGrads) -> EmbeddingMatrix {
        let mut d = Array2::zeros((cache.len, self.config.hidden_size));
        d.row_mut(0).assign(&d_pooled);
        for ((block, bc), g) in self.blocks.iter().zip(&cache.blocks).zip(&mut grads.blocks).rev() {
            d = self.block_backward(block, bc, &d, g);
        }
        EmbeddingMatrix(apply_mask(d, &cache.input_drop))
    }

    fn add_embedding_grad(&self, grads: &mut CompactGrads, tokens: &TokenSequence, d_emb: &EmbeddingMatrix) {
        for (&id, row) in tokens.ids().iter().zip(d_emb.0.rows()) {
            let mut target = grads.token_embedding.row_mut(id as usize);
            target += &row;
        }
    }

    fn zero_grads(&self) -> CompactGrads {
        CompactGrads {
            token_embedding: Array2::zeros(self.token_embedding.raw_dim()),
            blocks: self.blocks.iter().map(Block::zeros_like).collect(),
        }
    }

    fn reset_grads(&self, grads: &mut CompactGrads) {
        grads.token_embedding.fill(0.0);
        grads.blocks.iter_mut().for_each(Block::fill_zero);
    }

    fn grad_norm(&self, grads: &CompactGrads) -> f64 {
        let blocks = grads.blocks.iter().flat_map(Block::slices).flatten();
        grads.token_embedding.iter().chain(blocks).map(|v| v * v).sum::<f64>().sqrt()
    }

    fn params_and_grads<'a>(&'a mut self, grads: &'a CompactGrads) -> Vec<(&'a mut [f64], &'a [f64])> {
        let mut out = vec![(self.token_embedding.as_slice_mut().unwrap(), grads.token_embedding.as_slice().unwrap())];
        for (b, g) in self.blocks.iter_mut().zip(&grads.blocks) {
            out.extend(b.slices_mut().into_iter().zip(g.slices()));
        }
        out
    }
}
