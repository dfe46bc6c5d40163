//! Utterance encoder: word encoder, two-level context attention, BiGRU over
//! `[pre-context, tokens, post-context]`, token attention and a final linear
//! projection to the embedding space.

pub mod attention;
pub mod config;

#[cfg(test)]
mod tests;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

pub use attention::{
    content_aware_attention, current_projection, time_decay_var, time_decay_weights, ContentAttentionVars,
    TimeDecayParams, DECAY_EPS,
};
pub use config::EncoderConfig;

use crate::corpus::MeetingFeatures;
use crate::error::{Error, Result};
use crate::nn::layers::dropout_var;
use crate::nn::{bigru, glorot_uniform, uniform, GruParams, Graph, ParamId, ParamStore, Tensor, Var};

/// Context side.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Pre,
    Post,
}

impl Side {
    pub fn prefix(self) -> &'static str {
        match self {
            Side::Pre => "decay.pre",
            Side::Post => "decay.post",
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct EncoderIds {
    word_w: ParamId,
    word_b: ParamId,
    ctx_w_tokens: ParamId,
    ctx_w_current: ParamId,
    ctx_bias: ParamId,
    ctx_query: ParamId,
    decay_pre: [ParamId; 9],
    decay_post: [ParamId; 9],
    gru_fwd: GruParams,
    gru_bwd: GruParams,
    att_w: ParamId,
    att_b: ParamId,
    att_query: ParamId,
    out_w: ParamId,
    out_b: ParamId,
}

/// Encoder architecture bound to the parameter names of a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Encoder {
    config: EncoderConfig,
    ids: EncoderIds,
}

impl Encoder {
    /// Fresh parameters: Glorot-uniform weights, zero biases, attention
    /// queries from U(−0.05, 0.05), time-decay scalars at
    /// [`TimeDecayParams::initial`].
    pub fn init<R: Rng + ?Sized>(config: EncoderConfig, rng: &mut R) -> Result<(Self, ParamStore)> {
        config.validate()?;
        let (f, d, df) = (config.feature_dim, config.token_dim, config.embedding_dim);
        let mut s = ParamStore::new();
        s.insert("word.weight", glorot_uniform(&[f, d], rng))?;
        s.insert("word.bias", Tensor::zeros(&[d]))?;
        s.insert("context.w_tokens", glorot_uniform(&[d, d], rng))?;
        s.insert("context.w_current", glorot_uniform(&[d, d], rng))?;
        s.insert("context.bias", Tensor::zeros(&[d]))?;
        s.insert("context.query", uniform(&[d], -0.05, 0.05, rng))?;
        let init = TimeDecayParams::initial().to_array();
        for side in [Side::Pre, Side::Post] {
            for (name, v) in TimeDecayParams::NAMES.iter().zip(init) {
                s.insert(&format!("{}.{name}", side.prefix()), Tensor::vector(vec![v]))?;
            }
        }
        GruParams::register(&mut s, "gru.fwd", d, d, |shape| glorot_uniform(shape, rng))?;
        GruParams::register(&mut s, "gru.bwd", d, d, |shape| glorot_uniform(shape, rng))?;
        s.insert("attention.weight", glorot_uniform(&[2 * d, 2 * d], rng))?;
        s.insert("attention.bias", Tensor::zeros(&[2 * d]))?;
        s.insert("attention.query", uniform(&[2 * d], -0.05, 0.05, rng))?;
        s.insert("output.weight", glorot_uniform(&[2 * d, df], rng))?;
        s.insert("output.bias", Tensor::zeros(&[df]))?;
        let enc = Self::bind(config, &s)?;
        Ok((enc, s))
    }

    /// Looks up every parameter by name and checks its shape against `config`.
    pub fn bind(config: EncoderConfig, store: &ParamStore) -> Result<Self> {
        config.validate()?;
        let (f, d, df) = (config.feature_dim, config.token_dim, config.embedding_dim);
        let expect = |name: &str, shape: &[usize]| -> Result<ParamId> {
            let id = store.require(name)?;
            let got = store.value(id).shape();
            if got != shape {
                return Err(Error::Shape {
                    op: "encoder parameters",
                    detail: format!("{name} has shape {got:?}, expected {shape:?}"),
                });
            }
            Ok(id)
        };
        let word_w = store.require("word.weight")?;
        let rows = store.value(word_w).shape()[0];
        if rows != f {
            return Err(Error::FeatureDim {
                checkpoint: rows,
                corpus: f,
            });
        }
        let decay = |side: Side| -> Result<[ParamId; 9]> {
            let mut ids = [word_w; 9];
            for (slot, name) in ids.iter_mut().zip(TimeDecayParams::NAMES) {
                *slot = expect(&format!("{}.{name}", side.prefix()), &[1])?;
            }
            Ok(ids)
        };
        let ids = EncoderIds {
            word_w: expect("word.weight", &[f, d])?,
            word_b: expect("word.bias", &[d])?,
            ctx_w_tokens: expect("context.w_tokens", &[d, d])?,
            ctx_w_current: expect("context.w_current", &[d, d])?,
            ctx_bias: expect("context.bias", &[d])?,
            ctx_query: expect("context.query", &[d])?,
            decay_pre: decay(Side::Pre)?,
            decay_post: decay(Side::Post)?,
            gru_fwd: GruParams::lookup(store, "gru.fwd")?,
            gru_bwd: GruParams::lookup(store, "gru.bwd")?,
            att_w: expect("attention.weight", &[2 * d, 2 * d])?,
            att_b: expect("attention.bias", &[2 * d])?,
            att_query: expect("attention.query", &[2 * d])?,
            out_w: expect("output.weight", &[2 * d, df])?,
            out_b: expect("output.bias", &[df])?,
        };
        if ids.gru_fwd.hidden(store) != d || ids.gru_bwd.hidden(store) != d {
            return Err(Error::Shape {
                op: "encoder parameters",
                detail: format!("GRU hidden size must equal token_dim {d}"),
            });
        }
        Ok(Self { config, ids })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    /// Current (raw) time-decay scalars of one side.
    pub fn time_decay(&self, store: &ParamStore, side: Side) -> TimeDecayParams {
        let ids = match side {
            Side::Pre => &self.ids.decay_pre,
            Side::Post => &self.ids.decay_post,
        };
        let mut v = [0.0; 9];
        for (slot, id) in v.iter_mut().zip(ids) {
            *slot = store.value(*id).data()[0];
        }
        TimeDecayParams::from_array(v)
    }

    /// Starts a forward pass. `dropout` is applied to the word-encoder output
    /// only when `training` is set.
    pub fn pass<'a>(&'a self, store: &'a ParamStore, dropout: f64, training: bool) -> Result<Pass<'a>> {
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Config(format!("dropout rate {dropout} must lie in [0, 1)")));
        }
        let mut g = Graph::new();
        let ids = &self.ids;
        let p = |g: &mut Graph, id| g.param(store, id);
        let decay_pre: [Var; 9] = core::array::from_fn(|i| p(&mut g, ids.decay_pre[i]));
        let decay_post: [Var; 9] = core::array::from_fn(|i| p(&mut g, ids.decay_post[i]));
        let vars = PassVars {
            word_w: p(&mut g, ids.word_w),
            word_b: p(&mut g, ids.word_b),
            content: ContentAttentionVars {
                w_tokens: p(&mut g, ids.ctx_w_tokens),
                w_current: p(&mut g, ids.ctx_w_current),
                bias: p(&mut g, ids.ctx_bias),
                query: p(&mut g, ids.ctx_query),
            },
            decay_pre,
            decay_post,
            att_w: p(&mut g, ids.att_w),
            att_b: p(&mut g, ids.att_b),
            att_query: p(&mut g, ids.att_query),
            out_w: p(&mut g, ids.out_w),
            out_b: p(&mut g, ids.out_b),
        };
        // Bind the GRU weights up front so every parameter is on the tape.
        for gp in [&ids.gru_fwd, &ids.gru_bwd] {
            for id in [
                gp.w_update,
                gp.w_reset,
                gp.w_candidate,
                gp.u_update,
                gp.u_reset,
                gp.u_candidate,
                gp.b_update,
                gp.b_reset,
                gp.b_candidate,
            ] {
                g.param(store, id);
            }
        }
        Ok(Pass {
            encoder: self,
            store,
            graph: g,
            vars,
            dropout,
            training,
            words: BTreeMap::new(),
        })
    }

    /// Inference embedding of one utterance (no dropout).
    pub fn embed(&self, store: &ParamStore, features: &MeetingFeatures, t: usize) -> Result<Vec<f64>> {
        let mut pass = self.pass(store, 0.0, false)?;
        let mut rng = NoRng;
        let v = pass.encode(0, features, t, &mut rng)?;
        Ok(pass.graph.value(v).data().to_vec())
    }

    /// Inference embeddings of the given utterances of one meeting.
    pub fn embed_meeting(
        &self,
        store: &ParamStore,
        features: &MeetingFeatures,
        indices: &[usize],
    ) -> Result<Vec<Vec<f64>>> {
        indices.iter().map(|&t| self.embed(store, features, t)).collect()
    }

    /// Embedding plus every attention distribution involved in producing it.
    pub fn trace(&self, store: &ParamStore, features: &MeetingFeatures, t: usize) -> Result<AttentionTrace> {
        let mut pass = self.pass(store, 0.0, false)?;
        let mut rng = NoRng;
        let mut trace = AttentionTrace::default();
        let v = pass.encode_inner(0, features, t, &mut rng, Some(&mut trace))?;
        trace.utterance = t;
        trace.embedding = pass.graph.value(v).data().to_vec();
        Ok(trace)
    }
}

#[derive(Clone, Copy, Debug)]
struct PassVars {
    word_w: Var,
    word_b: Var,
    content: ContentAttentionVars,
    decay_pre: [Var; 9],
    decay_post: [Var; 9],
    att_w: Var,
    att_b: Var,
    att_query: Var,
    out_w: Var,
    out_b: Var,
}

/// Attention weights of one context utterance.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ContextTrace {
    pub utterance: usize,
    pub offset: usize,
    pub alpha: Vec<f64>,
    pub beta: f64,
}

/// Everything `--dump-attention` reports for one utterance.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AttentionTrace {
    pub utterance: usize,
    pub pre: Vec<ContextTrace>,
    pub post: Vec<ContextTrace>,
    /// Labels of the BiGRU positions: `PRE`, token indices, `POST`.
    pub positions: Vec<String>,
    pub gamma: Vec<f64>,
    pub embedding: Vec<f64>,
}

/// One tape shared by every utterance encoded in it. Word-encoder outputs
/// are cached per `(meeting slot, utterance)`.
pub struct Pass<'a> {
    encoder: &'a Encoder,
    store: &'a ParamStore,
    pub graph: Graph,
    vars: PassVars,
    dropout: f64,
    training: bool,
    words: BTreeMap<(usize, usize), Var>,
}

impl Pass<'_> {
    /// Releases the borrow of the parameter store, keeping the tape.
    pub fn into_graph(self) -> Graph {
        self.graph
    }

    /// `[N, d]` word-encoder output of utterance `t`, with dropout in training.
    pub fn word_tokens<R: Rng + ?Sized>(
        &mut self,
        meeting: usize,
        features: &MeetingFeatures,
        t: usize,
        rng: &mut R,
    ) -> Result<Var> {
        if let Some(&v) = self.words.get(&(meeting, t)) {
            return Ok(v);
        }
        let x = features.utterances.get(t).ok_or_else(|| Error::Shape {
            op: "encode",
            detail: format!("utterance {t} out of range ({} in meeting)", features.len()),
        })?;
        let cfg = self.encoder.config;
        if x.rank() != 2 || x.cols() != cfg.feature_dim {
            return Err(Error::FeatureDim {
                checkpoint: cfg.feature_dim,
                corpus: if x.rank() == 2 { x.cols() } else { x.len() },
            });
        }
        let x = match cfg.max_tokens {
            Some(max) if x.rows() > max => {
                Tensor::matrix(max, x.cols(), x.data()[..max * x.cols()].to_vec())?
            }
            _ => x.clone(),
        };
        let xv = self.graph.constant(x);
        let h = self.graph.matmul(xv, self.vars.word_w);
        let h = self.graph.add_row(h, self.vars.word_b);
        let h = dropout_var(&mut self.graph, h, self.dropout, rng, self.training)?;
        self.words.insert((meeting, t), h);
        Ok(h)
    }

    /// Embedding `[d_f]` of utterance `t` of the meeting in slot `meeting`.
    pub fn encode<R: Rng + ?Sized>(
        &mut self,
        meeting: usize,
        features: &MeetingFeatures,
        t: usize,
        rng: &mut R,
    ) -> Result<Var> {
        self.encode_inner(meeting, features, t, rng, None)
    }

    fn context_vector<R: Rng + ?Sized>(
        &mut self,
        meeting: usize,
        features: &MeetingFeatures,
        t: usize,
        side: Side,
        current_proj: Var,
        rng: &mut R,
        trace: Option<&mut Vec<ContextTrace>>,
    ) -> Result<Var> {
        let cfg = self.encoder.config;
        let neighbours: Vec<(usize, usize)> = match side {
            Side::Pre => (1..=cfg.context_pre.min(t)).map(|o| (t - o, o)).collect(),
            Side::Post => (1..=cfg.context_post)
                .take_while(|o| t + o < features.len())
                .map(|o| (t + o, o))
                .collect(),
        };
        if neighbours.is_empty() {
            return Ok(self.graph.constant(Tensor::zeros(&[cfg.token_dim])));
        }
        let mut pooled = Vec::with_capacity(neighbours.len());
        let mut alphas = Vec::with_capacity(neighbours.len());
        for &(j, _) in &neighbours {
            let tokens = self.word_tokens(meeting, features, j, rng)?;
            let (alpha, p) = content_aware_attention(&mut self.graph, &self.vars.content, tokens, current_proj)?;
            pooled.push(p);
            alphas.push(alpha);
        }
        let offsets: Vec<usize> = neighbours.iter().map(|&(_, o)| o).collect();
        let raw = match side {
            Side::Pre => self.vars.decay_pre,
            Side::Post => self.vars.decay_post,
        };
        let beta = time_decay_var(&mut self.graph, &offsets, &raw);
        let stacked = self.graph.stack_rows(&pooled);
        let ctx = self.graph.matmul(beta, stacked);
        if let Some(out) = trace {
            let b = self.graph.value(beta).data().to_vec();
            for (i, &(j, o)) in neighbours.iter().enumerate() {
                out.push(ContextTrace {
                    utterance: j,
                    offset: o,
                    alpha: self.graph.value(alphas[i]).data().to_vec(),
                    beta: b[i],
                });
            }
        }
        Ok(ctx)
    }

    fn encode_inner<R: Rng + ?Sized>(
        &mut self,
        meeting: usize,
        features: &MeetingFeatures,
        t: usize,
        rng: &mut R,
        mut trace: Option<&mut AttentionTrace>,
    ) -> Result<Var> {
        let cfg = self.encoder.config;
        let current = self.word_tokens(meeting, features, t, rng)?;
        let current_proj = current_projection(&mut self.graph, &self.vars.content, current);
        let pre = self.context_vector(
            meeting,
            features,
            t,
            Side::Pre,
            current_proj,
            rng,
            trace.as_deref_mut().map(|tr| &mut tr.pre),
        )?;
        let post = self.context_vector(
            meeting,
            features,
            t,
            Side::Post,
            current_proj,
            rng,
            trace.as_deref_mut().map(|tr| &mut tr.post),
        )?;

        let n = self.graph.value(current).rows();
        let mut rows = Vec::with_capacity(n + 2);
        rows.push(pre);
        for i in 0..n {
            rows.push(self.graph.row(current, i));
        }
        rows.push(post);
        let mut mask = vec![true; n + 2];
        if let Some(max) = cfg.max_tokens {
            if n < max {
                let zero = self.graph.constant(Tensor::zeros(&[cfg.token_dim]));
                for _ in n..max {
                    rows.push(zero);
                    mask.push(false);
                }
            }
        }
        let seq = self.graph.stack_rows(&rows);
        let padded = mask.iter().any(|m| !m);
        let mask_ref = if padded { Some(mask.as_slice()) } else { None };
        let ids = &self.encoder.ids;
        let h = bigru(&mut self.graph, self.store, seq, &ids.gru_fwd, &ids.gru_bwd, mask_ref)?;

        let proj = self.graph.matmul(h, self.vars.att_w);
        let proj = self.graph.add_row(proj, self.vars.att_b);
        let hidden = self.graph.tanh(proj);
        let scores = self.graph.matmul(hidden, self.vars.att_query);
        let gamma = self.graph.softmax(scores, mask_ref)?;
        let pooled = self.graph.matmul(gamma, h);
        let out = self.graph.matmul(pooled, self.vars.out_w);
        let out = self.graph.add(out, self.vars.out_b);

        if let Some(tr) = trace {
            tr.positions.push("PRE".into());
            for i in 0..n {
                tr.positions.push(format!("{i}"));
            }
            tr.positions.push("POST".into());
            for _ in n + 2..mask.len() {
                tr.positions.push("PAD".into());
            }
            tr.gamma = self.graph.value(gamma).data().to_vec();
        }
        Ok(out)
    }
}

/// Stand-in rng for inference passes, where dropout never draws.
struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("inference passes draw no randomness")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("inference passes draw no randomness")
    }
    fn fill_bytes(&mut self, _: &mut [u8]) {
        unreachable!("inference passes draw no randomness")
    }
    fn try_fill_bytes(&mut self, _: &mut [u8]) -> core::result::Result<(), rand::Error> {
        unreachable!("inference passes draw no randomness")
    }
}
