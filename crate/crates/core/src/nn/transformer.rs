//! Tiny decoder-only transformer with residual-stream tap points.
//!
//! Pre-norm blocks: `x = x + attn(ln1(x))`, then `x = x + mlp(ln2(x))`, with
//! learned positional embeddings, causal attention, and a linear output head
//! after a final layer norm.
//!
//! Tap indexing: tap 0 is the embedding output (token plus position), tap
//! `l` for `l in 1..=layers` is the residual stream at the output of block
//! `l`. Steering replaces each token's residual vector at exactly one tap
//! before the remaining blocks run. Every forward variant funnels through a
//! single compute path, so identity hooks reproduce plain forwards bitwise.

use crate::engine::steering::ResolvedSteering;
use crate::error::{Error, Result};
use crate::nn::params::{param_add, param_get, param_len, Adam, FlatTensors};
use crate::tensor::{argmax, dot, matmul, matmul_nt, matmul_tn, SeededRng};
use crate::{Matrix, Vector};

const LN_EPS: f64 = 1e-5;

/// Architecture of a [`TinyTransformer`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TransformerConfig {
    pub vocab_size: usize,
    pub model_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub context_len: usize,
}

impl TransformerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0
            || self.model_dim == 0
            || self.layers == 0
            || self.heads == 0
            || self.context_len == 0
        {
            return Err(Error::Config("transformer dims must be positive".into()));
        }
        if self.model_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "model_dim {} not divisible by heads {}",
                self.model_dim, self.heads
            )));
        }
        Ok(())
    }
}

/// Training configuration for [`train_tiny_transformer`].
#[derive(Debug, Clone)]
pub struct TransformerTrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TransformerTrainConfig {
    fn default() -> Self {
        Self {
            steps: 2500,
            batch_size: 8,
            learning_rate: 3e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
struct LayerNorm {
    gain: Vector,
    bias: Vector,
}

struct NormTrace {
    xhat: Matrix,
    rstd: Vec<f64>,
    out: Matrix,
}

impl LayerNorm {
    fn unit(dim: usize) -> Self {
        Self {
            gain: Vector::new(vec![1.0; dim]),
            bias: Vector::zeros(dim),
        }
    }

    fn forward(&self, x: &Matrix) -> NormTrace {
        let (t_len, d) = (x.rows(), x.cols());
        let mut xhat = Matrix::zeros(t_len, d);
        let mut out = Matrix::zeros(t_len, d);
        let mut rstd = vec![0.0; t_len];
        for t in 0..t_len {
            let row = x.row(t);
            let mu = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / d as f64;
            let r = 1.0 / (var + LN_EPS).sqrt();
            rstd[t] = r;
            let xh = xhat.row_mut(t);
            for (j, &v) in row.iter().enumerate() {
                xh[j] = (v - mu) * r;
            }
            let o = out.row_mut(t);
            for j in 0..d {
                o[j] = self.gain.values()[j] * xhat.get(t, j) + self.bias.values()[j];
            }
        }
        NormTrace { xhat, rstd, out }
    }

    /// Returns dx; accumulates gain and bias grads into the given parts.
    fn backward(
        &self,
        dy: &Matrix,
        trace: &NormTrace,
        dgain: &mut [f64],
        dbias: &mut [f64],
    ) -> Matrix {
        let (t_len, d) = (dy.rows(), dy.cols());
        let mut dx = Matrix::zeros(t_len, d);
        for t in 0..t_len {
            let dyr = dy.row(t);
            let xhr = trace.xhat.row(t);
            let mut mean_g = 0.0;
            let mut mean_gx = 0.0;
            for j in 0..d {
                let g = dyr[j] * self.gain.values()[j];
                mean_g += g;
                mean_gx += g * xhr[j];
                dgain[j] += dyr[j] * xhr[j];
                dbias[j] += dyr[j];
            }
            mean_g /= d as f64;
            mean_gx /= d as f64;
            let r = trace.rstd[t];
            let dxr = dx.row_mut(t);
            for j in 0..d {
                let g = dyr[j] * self.gain.values()[j];
                dxr[j] = r * (g - mean_g - xhr[j] * mean_gx);
            }
        }
        dx
    }
}

#[derive(Debug, Clone)]
struct Block {
    ln1: LayerNorm,
    wq: Matrix,
    bq: Vector,
    wk: Matrix,
    bk: Vector,
    wv: Matrix,
    bv: Vector,
    wo: Matrix,
    bo: Vector,
    ln2: LayerNorm,
    w1: Matrix,
    b1: Vector,
    w2: Matrix,
    b2: Vector,
}

struct BlockTrace {
    ln1: NormTrace,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    att: Vec<Matrix>,
    ctx: Matrix,
    ln2: NormTrace,
    mlp_pre: Matrix,
    mlp_hidden: Matrix,
}

fn add_bias_rows(m: &mut Matrix, b: &Vector) {
    for t in 0..m.rows() {
        for (x, &bv) in m.row_mut(t).iter_mut().zip(b.values()) {
            *x += bv;
        }
    }
}

fn add_assign(a: &mut Matrix, b: &Matrix) {
    for (x, &y) in a.values_mut().iter_mut().zip(b.values()) {
        *x += y;
    }
}

fn add_colsum(dst: &mut [f64], m: &Matrix) {
    for t in 0..m.rows() {
        for (d, &x) in dst.iter_mut().zip(m.row(t)) {
            *d += x;
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

impl Block {
    fn new(d: usize) -> Self {
        Self {
            ln1: LayerNorm::unit(d),
            wq: Matrix::zeros(d, d),
            bq: Vector::zeros(d),
            wk: Matrix::zeros(d, d),
            bk: Vector::zeros(d),
            wv: Matrix::zeros(d, d),
            bv: Vector::zeros(d),
            wo: Matrix::zeros(d, d),
            bo: Vector::zeros(d),
            ln2: LayerNorm::unit(d),
            w1: Matrix::zeros(d, 4 * d),
            b1: Vector::zeros(4 * d),
            w2: Matrix::zeros(4 * d, d),
            b2: Vector::zeros(d),
        }
    }

    fn forward(&self, x: &Matrix, heads: usize) -> Result<(Matrix, BlockTrace)> {
        let (t_len, d) = (x.rows(), x.cols());
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();

        let ln1 = self.ln1.forward(x);
        let mut q = matmul(&ln1.out, &self.wq)?;
        add_bias_rows(&mut q, &self.bq);
        let mut k = matmul(&ln1.out, &self.wk)?;
        add_bias_rows(&mut k, &self.bk);
        let mut v = matmul(&ln1.out, &self.wv)?;
        add_bias_rows(&mut v, &self.bv);

        // Causal attention: position t attends to u <= t only, so logits at
        // t never read later tokens.
        let mut att: Vec<Matrix> = (0..heads).map(|_| Matrix::zeros(t_len, t_len)).collect();
        let mut ctx = Matrix::zeros(t_len, d);
        for h in 0..heads {
            let lo = h * dh;
            let hi = lo + dh;
            for t in 0..t_len {
                let qrow = &q.row(t)[lo..hi];
                let mut scores = vec![0.0; t + 1];
                let mut max = f64::NEG_INFINITY;
                for (u, slot) in scores.iter_mut().enumerate() {
                    *slot = dot(qrow, &k.row(u)[lo..hi]) * scale;
                    max = max.max(*slot);
                }
                let mut total = 0.0;
                for s in scores.iter_mut() {
                    *s = (*s - max).exp();
                    total += *s;
                }
                for s in scores.iter_mut() {
                    *s /= total;
                }
                att[h].row_mut(t)[..=t].copy_from_slice(&scores);
                let crow = &mut ctx.row_mut(t)[lo..hi];
                for (u, &w) in scores.iter().enumerate() {
                    for (c, &vv) in crow.iter_mut().zip(&v.row(u)[lo..hi]) {
                        *c += w * vv;
                    }
                }
            }
        }

        let mut attn_out = matmul(&ctx, &self.wo)?;
        add_bias_rows(&mut attn_out, &self.bo);
        let mut res1 = x.clone();
        add_assign(&mut res1, &attn_out);

        let ln2 = self.ln2.forward(&res1);
        let mut mlp_pre = matmul(&ln2.out, &self.w1)?;
        add_bias_rows(&mut mlp_pre, &self.b1);
        let mut mlp_hidden = mlp_pre.clone();
        for x in mlp_hidden.values_mut() {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        let mut mlp_out = matmul(&mlp_hidden, &self.w2)?;
        add_bias_rows(&mut mlp_out, &self.b2);
        let mut res2 = res1;
        add_assign(&mut res2, &mlp_out);

        Ok((
            res2,
            BlockTrace {
                ln1,
                q,
                k,
                v,
                att,
                ctx,
                ln2,
                mlp_pre,
                mlp_hidden,
            },
        ))
    }

    /// Backward through the block. `dres2` is the gradient at the block
    /// output; returns the gradient at the block input. Parameter grads go
    /// into `grads` starting at part index `base` (16 parts per block, in
    /// `param_slices` order).
    #[allow(clippy::too_many_arguments)]
    fn backward(
        &self,
        trace: &BlockTrace,
        dres2: &Matrix,
        heads: usize,
        grads: &mut FlatTensors,
        base: usize,
    ) -> Result<Matrix> {
        let (t_len, d) = (dres2.rows(), dres2.cols());
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();

        // MLP branch: res2 = res1 + mlp(ln2(res1)).
        let dmlp_out = dres2;
        add_into(grads.part_mut(base + 14), matmul_tn(&trace.mlp_hidden, dmlp_out)?.values());
        add_colsum(grads.part_mut(base + 15), dmlp_out);
        let mut dmlp_pre = matmul_nt(dmlp_out, &self.w2)?;
        for (g, &pre) in dmlp_pre.values_mut().iter_mut().zip(trace.mlp_pre.values()) {
            if pre <= 0.0 {
                *g = 0.0;
            }
        }
        add_into(grads.part_mut(base + 12), matmul_tn(&trace.ln2.out, &dmlp_pre)?.values());
        add_colsum(grads.part_mut(base + 13), &dmlp_pre);
        let dln2_out = matmul_nt(&dmlp_pre, &self.w1)?;
        let mut dres1 = {
            let (dgain, dbias) = grads.two_parts_mut(base + 10, base + 11);
            self.ln2.backward(&dln2_out, &trace.ln2, dgain, dbias)
        };
        add_assign(&mut dres1, dres2);

        // Attention branch: res1 = x + attn(ln1(x)).
        let dattn_out = &dres1;
        add_into(grads.part_mut(base + 8), matmul_tn(&trace.ctx, dattn_out)?.values());
        add_colsum(grads.part_mut(base + 9), dattn_out);
        let dctx = matmul_nt(dattn_out, &self.wo)?;

        let mut dq = Matrix::zeros(t_len, d);
        let mut dk = Matrix::zeros(t_len, d);
        let mut dv = Matrix::zeros(t_len, d);
        for h in 0..heads {
            let lo = h * dh;
            let hi = lo + dh;
            for t in 0..t_len {
                let att_row = &trace.att[h].row(t)[..=t];
                let dctx_row = &dctx.row(t)[lo..hi];
                let mut datt = vec![0.0; t + 1];
                for (u, slot) in datt.iter_mut().enumerate() {
                    *slot = dot(dctx_row, &trace.v.row(u)[lo..hi]);
                    let dvr = &mut dv.row_mut(u)[lo..hi];
                    for (dvx, &dcx) in dvr.iter_mut().zip(dctx_row) {
                        *dvx += att_row[u] * dcx;
                    }
                }
                let s: f64 = att_row.iter().zip(&datt).map(|(&a, &da)| a * da).sum();
                for u in 0..=t {
                    let dscore = att_row[u] * (datt[u] - s) * scale;
                    let krow = &trace.k.row(u)[lo..hi];
                    let dqr = &mut dq.row_mut(t)[lo..hi];
                    for (dqx, &kx) in dqr.iter_mut().zip(krow) {
                        *dqx += dscore * kx;
                    }
                    let qrow = &trace.q.row(t)[lo..hi];
                    let dkr = &mut dk.row_mut(u)[lo..hi];
                    for (dkx, &qx) in dkr.iter_mut().zip(qrow) {
                        *dkx += dscore * qx;
                    }
                }
            }
        }

        add_into(grads.part_mut(base + 2), matmul_tn(&trace.ln1.out, &dq)?.values());
        add_colsum(grads.part_mut(base + 3), &dq);
        add_into(grads.part_mut(base + 4), matmul_tn(&trace.ln1.out, &dk)?.values());
        add_colsum(grads.part_mut(base + 5), &dk);
        add_into(grads.part_mut(base + 6), matmul_tn(&trace.ln1.out, &dv)?.values());
        add_colsum(grads.part_mut(base + 7), &dv);

        let mut dln1_out = matmul_nt(&dq, &self.wq)?;
        add_assign(&mut dln1_out, &matmul_nt(&dk, &self.wk)?);
        add_assign(&mut dln1_out, &matmul_nt(&dv, &self.wv)?);

        let mut dx = {
            let (dgain, dbias) = grads.two_parts_mut(base, base + 1);
            self.ln1.backward(&dln1_out, &trace.ln1, dgain, dbias)
        };
        add_assign(&mut dx, &dres1);
        Ok(dx)
    }
}

enum TapHook<'a> {
    None,
    Steer(&'a ResolvedSteering),
    Transform {
        tap: usize,
        f: &'a dyn Fn(&Matrix) -> Matrix,
    },
}

struct RunOutput {
    logits: Matrix,
    captured: Option<Matrix>,
    trace: Option<ModelTrace>,
}

struct ModelTrace {
    blocks: Vec<BlockTrace>,
    lnf: NormTrace,
}

/// Decoder-only transformer with greedy decoding.
#[derive(Debug, Clone)]
pub struct TinyTransformer {
    cfg: TransformerConfig,
    tok_emb: Matrix,
    pos_emb: Matrix,
    blocks: Vec<Block>,
    final_norm: LayerNorm,
    out_w: Matrix,
    out_b: Vector,
    final_train_loss: Option<f64>,
}

impl TinyTransformer {
    pub fn zeros(cfg: TransformerConfig) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.model_dim;
        Ok(Self {
            tok_emb: Matrix::zeros(cfg.vocab_size, d),
            pos_emb: Matrix::zeros(cfg.context_len, d),
            blocks: (0..cfg.layers).map(|_| Block::new(d)).collect(),
            final_norm: LayerNorm::unit(d),
            out_w: Matrix::zeros(d, cfg.vocab_size),
            out_b: Vector::zeros(cfg.vocab_size),
            cfg,
            final_train_loss: None,
        })
    }

    /// Random initialization: embeddings N(0, 0.02^2), weight matrices
    /// N(0, 1/fan_in), zero biases, unit layer norms.
    pub fn init(cfg: TransformerConfig, rng: &mut SeededRng) -> Result<Self> {
        let mut model = Self::zeros(cfg)?;
        for x in model.tok_emb.values_mut() {
            *x = rng.normal() * 0.02;
        }
        for x in model.pos_emb.values_mut() {
            *x = rng.normal() * 0.02;
        }
        for blk in &mut model.blocks {
            for w in [&mut blk.wq, &mut blk.wk, &mut blk.wv, &mut blk.wo, &mut blk.w1, &mut blk.w2]
            {
                let std = 1.0 / (w.rows() as f64).sqrt();
                for x in w.values_mut() {
                    *x = rng.normal() * std;
                }
            }
        }
        let std = 1.0 / (model.out_w.rows() as f64).sqrt();
        for x in model.out_w.values_mut() {
            *x = rng.normal() * std;
        }
        Ok(model)
    }

    pub fn config(&self) -> &TransformerConfig {
        &self.cfg
    }

    /// Largest valid tap index (tap 0 is the embedding output).
    pub fn max_tap(&self) -> usize {
        self.cfg.layers
    }

    pub fn final_train_loss(&self) -> Option<f64> {
        self.final_train_loss
    }

    fn check_tokens(&self, tokens: &[u32]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::Data("empty token sequence".into()));
        }
        if tokens.len() > self.cfg.context_len {
            return Err(Error::ContextLength {
                len: tokens.len(),
                max: self.cfg.context_len,
            });
        }
        for &t in tokens {
            if t as usize >= self.cfg.vocab_size {
                return Err(Error::Vocab {
                    token: t,
                    vocab_size: self.cfg.vocab_size,
                });
            }
        }
        Ok(())
    }

    fn run(&self, tokens: &[u32], hook: &TapHook, want_trace: bool) -> Result<RunOutput> {
        self.check_tokens(tokens)?;
        let (t_len, d) = (tokens.len(), self.cfg.model_dim);
        let mut x = Matrix::zeros(t_len, d);
        for (t, &tok) in tokens.iter().enumerate() {
            let row = x.row_mut(t);
            for (j, slot) in row.iter_mut().enumerate() {
                *slot = self.tok_emb.get(tok as usize, j) + self.pos_emb.get(t, j);
            }
        }

        let mut captured = None;
        let mut traces = Vec::new();
        x = self.apply_hook(x, 0, hook, &mut captured)?;
        for (bi, block) in self.blocks.iter().enumerate() {
            let (out, trace) = block.forward(&x, self.cfg.heads)?;
            x = self.apply_hook(out, bi + 1, hook, &mut captured)?;
            if want_trace {
                traces.push(trace);
            }
        }
        let lnf = self.final_norm.forward(&x);
        let mut logits = matmul(&lnf.out, &self.out_w)?;
        add_bias_rows(&mut logits, &self.out_b);
        Ok(RunOutput {
            logits,
            captured,
            trace: if want_trace {
                Some(ModelTrace { blocks: traces, lnf })
            } else {
                None
            },
        })
    }

    fn apply_hook(
        &self,
        x: Matrix,
        tap: usize,
        hook: &TapHook,
        captured: &mut Option<Matrix>,
    ) -> Result<Matrix> {
        match hook {
            TapHook::None => Ok(x),
            TapHook::Steer(steer) => {
                if steer.layer == tap {
                    steer.apply_rows(&x)
                } else {
                    Ok(x)
                }
            }
            TapHook::Transform { tap: want, f } => {
                if *want == tap {
                    *captured = Some(x.clone());
                    let out = f(&x);
                    if out.rows() != x.rows() || out.cols() != x.cols() {
                        return Err(Error::Dimension {
                            context: "transformer tap transform",
                            expected: x.rows() * x.cols(),
                            got: out.rows() * out.cols(),
                        });
                    }
                    Ok(out)
                } else {
                    Ok(x)
                }
            }
        }
    }

    /// Logits for every position, shape (len, vocab).
    pub fn logits(&self, tokens: &[u32]) -> Result<Matrix> {
        Ok(self.run(tokens, &TapHook::None, false)?.logits)
    }

    /// Logits with optional steering applied at the steering spec's tap.
    pub fn logits_steered(
        &self,
        tokens: &[u32],
        steer: Option<&ResolvedSteering>,
    ) -> Result<Matrix> {
        let hook = match steer {
            Some(s) => {
                if s.layer > self.max_tap() {
                    return Err(Error::Tap {
                        tap: s.layer,
                        max: self.max_tap(),
                    });
                }
                TapHook::Steer(s)
            }
            None => TapHook::None,
        };
        Ok(self.run(tokens, &hook, false)?.logits)
    }

    /// Forward pass with the residual stream at `tap` passed through
    /// `transform`. Returns the logits and the pre-transform activation
    /// matrix (positions x width).
    pub fn forward_with_tap(
        &self,
        tokens: &[u32],
        tap: usize,
        transform: &dyn Fn(&Matrix) -> Matrix,
    ) -> Result<(Matrix, Matrix)> {
        if tap > self.max_tap() {
            return Err(Error::Tap {
                tap,
                max: self.max_tap(),
            });
        }
        let out = self.run(tokens, &TapHook::Transform { tap, f: transform }, false)?;
        Ok((out.logits, out.captured.expect("tap was validated")))
    }

    /// Greedy autoregressive decoding. Returns the full sequence (prompt
    /// plus generated tokens). Generation stops at `stop`, at `max_new`
    /// tokens, or when the context window fills.
    pub fn generate(
        &self,
        prompt: &[u32],
        steer: Option<&ResolvedSteering>,
        max_new: usize,
        stop: Option<u32>,
    ) -> Result<Vec<u32>> {
        if prompt.is_empty() {
            return Err(Error::Data("empty prompt".into()));
        }
        if prompt.len() >= self.cfg.context_len {
            return Err(Error::ContextLength {
                len: prompt.len(),
                max: self.cfg.context_len - 1,
            });
        }
        let mut tokens = prompt.to_vec();
        for _ in 0..max_new {
            if tokens.len() >= self.cfg.context_len {
                break;
            }
            let logits = self.logits_steered(&tokens, steer)?;
            let next = argmax(logits.row(tokens.len() - 1)) as u32;
            tokens.push(next);
            if Some(next) == stop {
                break;
            }
        }
        Ok(tokens)
    }

    /// Ordered parameter views; see `Block` field order for the per-block
    /// layout.
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        out.push(self.tok_emb.values());
        out.push(self.pos_emb.values());
        for blk in &self.blocks {
            out.push(blk.ln1.gain.values());
            out.push(blk.ln1.bias.values());
            out.push(blk.wq.values());
            out.push(blk.bq.values());
            out.push(blk.wk.values());
            out.push(blk.bk.values());
            out.push(blk.wv.values());
            out.push(blk.bv.values());
            out.push(blk.wo.values());
            out.push(blk.bo.values());
            out.push(blk.ln2.gain.values());
            out.push(blk.ln2.bias.values());
            out.push(blk.w1.values());
            out.push(blk.b1.values());
            out.push(blk.w2.values());
            out.push(blk.b2.values());
        }
        out.push(self.final_norm.gain.values());
        out.push(self.final_norm.bias.values());
        out.push(self.out_w.values());
        out.push(self.out_b.values());
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        out.push(self.tok_emb.values_mut());
        out.push(self.pos_emb.values_mut());
        for blk in self.blocks.iter_mut() {
            out.push(blk.ln1.gain.values_mut());
            out.push(blk.ln1.bias.values_mut());
            out.push(blk.wq.values_mut());
            out.push(blk.bq.values_mut());
            out.push(blk.wk.values_mut());
            out.push(blk.bk.values_mut());
            out.push(blk.wv.values_mut());
            out.push(blk.bv.values_mut());
            out.push(blk.wo.values_mut());
            out.push(blk.bo.values_mut());
            out.push(blk.ln2.gain.values_mut());
            out.push(blk.ln2.bias.values_mut());
            out.push(blk.w1.values_mut());
            out.push(blk.b1.values_mut());
            out.push(blk.w2.values_mut());
            out.push(blk.b2.values_mut());
        }
        out.push(self.final_norm.gain.values_mut());
        out.push(self.final_norm.bias.values_mut());
        out.push(self.out_w.values_mut());
        out.push(self.out_b.values_mut());
        out
    }

    pub fn param_count(&self) -> usize {
        param_len(&self.param_slices())
    }

    pub fn param(&self, flat_idx: usize) -> f64 {
        param_get(&self.param_slices(), flat_idx)
    }

    pub fn param_add(&mut self, flat_idx: usize, delta: f64) {
        param_add(&mut self.param_slices_mut(), flat_idx, delta);
    }

    /// Mean next-token cross-entropy over all predicted positions.
    pub fn loss(&self, seqs: &[&[u32]]) -> Result<f64> {
        let total_positions: usize = seqs.iter().map(|s| s.len().saturating_sub(1)).sum();
        if total_positions == 0 {
            return Err(Error::Data("no predicted positions in batch".into()));
        }
        let mut sum = 0.0;
        for seq in seqs {
            let logits = self.logits(seq)?;
            for t in 0..seq.len() - 1 {
                sum += cross_entropy_row(logits.row(t), seq[t + 1] as usize);
            }
        }
        Ok(sum / total_positions as f64)
    }

    /// Mean next-token cross-entropy and its gradient.
    pub fn loss_and_grad(&self, seqs: &[&[u32]]) -> Result<(f64, FlatTensors)> {
        let shape = self.param_slices();
        let mut grads = FlatTensors::zeros_like(&shape);
        let total_positions: usize = seqs.iter().map(|s| s.len().saturating_sub(1)).sum();
        if total_positions == 0 {
            return Err(Error::Data("no predicted positions in batch".into()));
        }
        let w = 1.0 / total_positions as f64;
        let mut sum = 0.0;

        for seq in seqs {
            let out = self.run(seq, &TapHook::None, true)?;
            let trace = out.trace.unwrap();
            let t_len = seq.len();
            let mut dlogits = Matrix::zeros(t_len, self.cfg.vocab_size);
            for t in 0..t_len - 1 {
                let target = seq[t + 1] as usize;
                sum += cross_entropy_row(out.logits.row(t), target);
                let probs = softmax_row(out.logits.row(t));
                let drow = dlogits.row_mut(t);
                for (slot, p) in drow.iter_mut().zip(probs) {
                    *slot = p * w;
                }
                drow[target] -= w;
            }

            // Output head.
            let n_blocks = self.blocks.len();
            let head_base = 2 + 16 * n_blocks;
            add_into(
                grads.part_mut(head_base + 2),
                matmul_tn(&trace.lnf.out, &dlogits)?.values(),
            );
            add_colsum(grads.part_mut(head_base + 3), &dlogits);
            let df = matmul_nt(&dlogits, &self.out_w)?;
            let mut dx = {
                let (dgain, dbias) = grads.two_parts_mut(head_base, head_base + 1);
                self.final_norm.backward(&df, &trace.lnf, dgain, dbias)
            };

            for bi in (0..n_blocks).rev() {
                dx = self.blocks[bi].backward(
                    &trace.blocks[bi],
                    &dx,
                    self.cfg.heads,
                    &mut grads,
                    2 + 16 * bi,
                )?;
            }

            // Embeddings.
            for (t, &tok) in seq.iter().enumerate() {
                let dxr = dx.row(t).to_vec();
                {
                    let gtok = grads.part_mut(0);
                    let d = self.cfg.model_dim;
                    let row = &mut gtok[tok as usize * d..(tok as usize + 1) * d];
                    add_into(row, &dxr);
                }
                {
                    let gpos = grads.part_mut(1);
                    let d = self.cfg.model_dim;
                    let row = &mut gpos[t * d..(t + 1) * d];
                    add_into(row, &dxr);
                }
            }
        }
        Ok((sum * w, grads))
    }
}

fn cross_entropy_row(logits: &[f64], target: usize) -> f64 {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let log_sum: f64 = logits.iter().map(|&x| (x - max).exp()).sum::<f64>().ln() + max;
    log_sum - logits[target]
}

fn softmax_row(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let mut exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    for e in exps.iter_mut() {
        *e /= total;
    }
    exps
}

/// Trains the transformer with Adam over shuffled minibatches of whole
/// sequences. Deterministic given the seed.
pub fn train_tiny_transformer(
    cfg: &TransformerConfig,
    sequences: &[Vec<u32>],
    tcfg: &TransformerTrainConfig,
) -> Result<TinyTransformer> {
    cfg.validate()?;
    if sequences.is_empty() {
        return Err(Error::Data("training corpus is empty".into()));
    }
    for seq in sequences {
        if seq.len() < 2 {
            return Err(Error::Data("training sequences need at least two tokens".into()));
        }
        if seq.len() > cfg.context_len {
            return Err(Error::ContextLength {
                len: seq.len(),
                max: cfg.context_len,
            });
        }
        for &t in seq {
            if t as usize >= cfg.vocab_size {
                return Err(Error::Vocab {
                    token: t,
                    vocab_size: cfg.vocab_size,
                });
            }
        }
    }
    if tcfg.batch_size == 0 || tcfg.steps == 0 {
        return Err(Error::Config("steps and batch size must be positive".into()));
    }

    let root = SeededRng::new(tcfg.seed);
    let mut model = TinyTransformer::init(cfg.clone(), &mut root.substream("init"))?;
    let mut batch_rng = root.substream("batches");

    let shape = model.param_slices();
    let mut adam = Adam::new(&shape, tcfg.learning_rate);
    drop(shape);

    let mut order: Vec<usize> = (0..sequences.len()).collect();
    batch_rng.shuffle(&mut order);
    let mut cursor = 0usize;
    let mut last_loss = f64::NAN;
    for _ in 0..tcfg.steps {
        let mut batch: Vec<&[u32]> = Vec::with_capacity(tcfg.batch_size);
        for _ in 0..tcfg.batch_size.min(sequences.len()) {
            if cursor >= order.len() {
                batch_rng.shuffle(&mut order);
                cursor = 0;
            }
            batch.push(sequences[order[cursor]].as_slice());
            cursor += 1;
        }
        let (loss, grads) = model.loss_and_grad(&batch)?;
        adam.step(&mut model.param_slices_mut(), &grads);
        last_loss = loss;
    }
    model.final_train_loss = Some(last_loss);
    Ok(model)
}
