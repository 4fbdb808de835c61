use std::collections::HashMap;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::{Init, ModelSpec, VariantKind};
use crate::error::{Error, Result};
use crate::tensor::{
    add, batchnorm2d, bilinear_resize, concat_channels, conv2d, conv_transpose2d, dropout,
    flatten_spatial, layernorm_lastdim, linear, matmul, maxpool2x2, mul_scalar, permute, relu,
    reshape, sigmoid, softmax_lastdim, transpose_last2, unflatten_spatial, BatchNormStats,
    Parameter, Tensor,
};

/// Per-call state of a forward pass: mode, dropout stream and an optional
/// record of the stages that ran.
pub struct ForwardCtx {
    training: bool,
    rng: ChaCha8Rng,
    trace: Option<Vec<String>>,
}

impl ForwardCtx {
    /// Batch statistics and active dropout, drawn from a stream seeded by `seed`.
    pub fn train(seed: u64) -> Self {
        Self {
            training: true,
            rng: ChaCha8Rng::seed_from_u64(seed),
            trace: None,
        }
    }

    /// Running statistics, no dropout.
    pub fn eval() -> Self {
        Self {
            training: false,
            rng: ChaCha8Rng::seed_from_u64(0),
            trace: None,
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn trace(&self) -> &[String] {
        self.trace.as_deref().unwrap_or(&[])
    }

    fn record(&mut self, stage: impl Into<String>) {
        if let Some(t) = &mut self.trace {
            t.push(stage.into());
        }
    }
}

/// Output of the edge branch.
pub struct EdgePrior {
    /// `B×1×H×W`, strictly inside (0, 1).
    pub map: Tensor,
    /// `B×C×H'×W'` at the bottleneck resolution.
    pub projected: Tensor,
}

/// Output of one attention block on a token sequence.
pub struct AttentionOutput {
    /// `B×N×C`.
    pub output: Tensor,
    /// `B×heads×N×N`, rows sum to one.
    pub weights: Tensor,
}

/// A built network: parameters in layout order plus batch-norm buffers.
pub struct Model {
    spec: ModelSpec,
    params: Vec<Parameter>,
    index: HashMap<String, usize>,
    bn: Vec<(String, Mutex<BatchNormStats>)>,
    bn_index: HashMap<String, usize>,
}

impl Model {
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for slot in spec.layout() {
            let n = slot.numel();
            let data = match slot.init {
                Init::Zeros => vec![0.0; n],
                Init::Ones => vec![1.0; n],
                Init::KaimingUniform { fan_in } => uniform(&mut rng, n, (6.0 / fan_in as f64).sqrt()),
                Init::XavierUniform { fan_in, fan_out } => {
                    uniform(&mut rng, n, (6.0 / (fan_in + fan_out) as f64).sqrt())
                }
            };
            params.push(Parameter::new(slot.name, data, &slot.shape)?);
        }
        let index = params
            .iter()
            .enumerate()
            .map(|(i, p)| (p.name().to_string(), i))
            .collect();
        let bn: Vec<(String, Mutex<BatchNormStats>)> = spec
            .batchnorm_layers()
            .into_iter()
            .map(|(name, c)| {
                let mut stats = BatchNormStats::new(c);
                stats.eps = spec.bn_eps;
                stats.momentum = spec.bn_momentum;
                (name, Mutex::new(stats))
            })
            .collect();
        let bn_index = bn.iter().enumerate().map(|(i, (n, _))| (n.clone(), i)).collect();
        Ok(Self {
            spec,
            params,
            index,
            bn,
            bn_index,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.params.iter_mut().collect()
    }

    pub fn param(&self, name: &str) -> Result<&Parameter> {
        self.index
            .get(name)
            .map(|&i| &self.params[i])
            .ok_or_else(|| Error::invalid(format!("no parameter named {name:?}")))
    }

    pub fn param_mut(&mut self, name: &str) -> Result<&mut Parameter> {
        match self.index.get(name) {
            Some(&i) => Ok(&mut self.params[i]),
            None => Err(Error::invalid(format!("no parameter named {name:?}"))),
        }
    }

    /// Trainable scalar count of the built model.
    pub fn num_params(&self) -> u64 {
        self.params.iter().map(|p| p.numel() as u64).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(Parameter::zero_grad);
    }

    /// Names and current running statistics of every batch-norm layer.
    pub fn batchnorm_stats(&self) -> Vec<(String, BatchNormStats)> {
        self.bn
            .iter()
            .map(|(n, s)| (n.clone(), lock(s).clone()))
            .collect()
    }

    pub fn set_batchnorm_stats(&self, name: &str, stats: BatchNormStats) -> Result<()> {
        let &i = self
            .bn_index
            .get(name)
            .ok_or_else(|| Error::invalid(format!("no batch-norm layer named {name:?}")))?;
        let mut cur = lock(&self.bn[i].1);
        if cur.mean.len() != stats.mean.len() || cur.var.len() != stats.var.len() {
            return Err(Error::shape(format!("batch-norm {name}: channel count mismatch")));
        }
        *cur = stats;
        Ok(())
    }

    /// Snapshot of every parameter and buffer.
    pub fn state(&self) -> ModelState {
        ModelState {
            params: self.params.iter().map(|p| p.data().to_vec()).collect(),
            batchnorm: self.bn.iter().map(|(_, s)| lock(s).clone()).collect(),
        }
    }

    pub fn load_state(&mut self, state: &ModelState) -> Result<()> {
        if state.params.len() != self.params.len() || state.batchnorm.len() != self.bn.len() {
            return Err(Error::invalid("state does not match model layout"));
        }
        for (p, d) in self.params.iter_mut().zip(&state.params) {
            p.set_data(d.clone())?;
        }
        for (i, stats) in state.batchnorm.iter().enumerate() {
            let name = self.bn[i].0.clone();
            self.set_batchnorm_stats(&name, stats.clone())?;
        }
        Ok(())
    }

    fn p(&self, name: &str) -> &Tensor {
        match self.index.get(name) {
            Some(&i) => self.params[i].tensor(),
            None => panic!("layout is missing {name}"),
        }
    }

    fn conv(&self, prefix: &str, x: &Tensor, padding: usize) -> Result<Tensor> {
        conv2d(
            x,
            self.p(&format!("{prefix}.weight")),
            self.p(&format!("{prefix}.bias")),
            1,
            padding,
        )
    }

    fn batchnorm(&self, prefix: &str, x: &Tensor, ctx: &ForwardCtx) -> Result<Tensor> {
        let i = self.bn_index[prefix];
        let mut stats = lock(&self.bn[i].1);
        batchnorm2d(
            x,
            self.p(&format!("{prefix}.gamma")),
            self.p(&format!("{prefix}.beta")),
            &mut stats,
            ctx.training,
        )
    }

    fn double_conv(&self, prefix: &str, x: &Tensor, ctx: &ForwardCtx) -> Result<Tensor> {
        let mut h = x.clone();
        for k in 1..=2 {
            h = self.conv(&format!("{prefix}.conv{k}"), &h, 1)?;
            h = self.batchnorm(&format!("{prefix}.bn{k}"), &h, ctx)?;
            h = relu(&h);
        }
        Ok(h)
    }

    /// `B×1×H×W` input to `B×1×H×W` logits.
    pub fn forward(&self, x: &Tensor, ctx: &mut ForwardCtx) -> Result<Tensor> {
        self.check_input(x)?;
        let mut skips = Vec::with_capacity(self.spec.depth());
        let mut h = x.clone();
        for i in 0..self.spec.depth() {
            let prefix = format!("enc{i}");
            ctx.record(&prefix);
            h = self.double_conv(&prefix, &h, ctx)?;
            skips.push(h.clone());
            h = maxpool2x2(&h)?;
        }
        ctx.record("bottleneck");
        h = self.double_conv("bottleneck", &h, ctx)?;
        if self.spec.variant.has_attention() {
            h = self.attention_stage(x, &h, ctx)?;
        }
        for i in (0..self.spec.depth()).rev() {
            let prefix = format!("dec{i}");
            ctx.record(&prefix);
            let up = conv_transpose2d(
                &h,
                self.p(&format!("{prefix}.up.weight")),
                self.p(&format!("{prefix}.up.bias")),
            )?;
            let cat = concat_channels(&skips[i], &up)?;
            h = self.double_conv(&prefix, &cat, ctx)?;
        }
        ctx.record("head");
        self.conv("head", &h, 0)
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let s = x.shape();
        let f = self.spec.downsample_factor();
        if s.len() != 4 || s[1] != self.spec.in_channels || s[2] % f != 0 || s[3] % f != 0 || s[2] == 0 || s[3] == 0 {
            return Err(Error::shape(format!(
                "input {s:?} must be B×{}×H×W with H, W positive multiples of {f}",
                self.spec.in_channels
            )));
        }
        if self.spec.variant == VariantKind::MhsaPe
            && (s[2] != self.spec.input_height || s[3] != self.spec.input_width)
        {
            return Err(Error::shape(format!(
                "positional table is sized for {}x{} input, got {}x{}",
                self.spec.input_height, self.spec.input_width, s[2], s[3]
            )));
        }
        Ok(())
    }

    fn attention_stage(&self, input: &Tensor, z: &Tensor, ctx: &mut ForwardCtx) -> Result<Tensor> {
        let (hh, ww) = (z.shape()[2], z.shape()[3]);
        let mut feat = z.clone();
        if self.spec.needs_attention_adapter() {
            feat = self.conv("attn.reduce", &feat, 0)?;
        }
        let mut tokens = flatten_spatial(&feat)?;
        if self.spec.variant == VariantKind::MhsaPe {
            ctx.record("pos_embedding");
            tokens = add(&tokens, self.p("attn.pos_embedding"))?;
        }
        let bias = if self.spec.variant == VariantKind::Edgeattnet {
            ctx.record("edge_prior");
            let prior = self.edge_prior(input)?;
            Some(flatten_spatial(&prior.projected)?)
        } else {
            None
        };
        for j in 0..self.spec.n_attention_blocks {
            tokens = self.attention_block(j, &tokens, bias.as_ref(), ctx)?.output;
        }
        feat = unflatten_spatial(&tokens, hh, ww)?;
        if self.spec.needs_attention_adapter() {
            feat = self.conv("attn.expand", &feat, 0)?;
        }
        Ok(feat)
    }

    /// Edge map of the raw input and its projection to the bottleneck grid.
    pub fn edge_prior(&self, x: &Tensor) -> Result<EdgePrior> {
        if self.spec.variant != VariantKind::Edgeattnet {
            return Err(Error::invalid(format!("{} has no edge branch", self.spec.variant)));
        }
        let s = x.shape();
        if s.len() != 4 {
            return Err(Error::shape(format!("edge_prior needs rank 4, got {s:?}")));
        }
        let f = self.spec.downsample_factor();
        let map = sigmoid(&self.conv("edge.conv", x, 1)?);
        let small = bilinear_resize(&map, s[2] / f, s[3] / f)?;
        let projected = self.conv("edge.proj", &small, 0)?;
        Ok(EdgePrior { map, projected })
    }

    /// One attention block on `B×N×C` tokens. `edge_bias`, when given, is
    /// added to the query and key inputs only.
    pub fn attention_block(
        &self,
        block: usize,
        tokens: &Tensor,
        edge_bias: Option<&Tensor>,
        ctx: &mut ForwardCtx,
    ) -> Result<AttentionOutput> {
        if block >= self.spec.n_attention_blocks || !self.spec.variant.has_attention() {
            return Err(Error::invalid(format!("no attention block {block}")));
        }
        let s = tokens.shape();
        let (heads, dk, width) = (self.spec.heads, self.spec.head_dim, self.spec.attention_width());
        if s.len() != 3 || s[2] != width {
            return Err(Error::shape(format!("attention tokens {s:?}, expected B×N×{width}")));
        }
        let (b, n) = (s[0], s[1]);
        ctx.record(format!("attention{block}"));
        let pre = format!("attn.block{block}");
        let proj = |name: &str, x: &Tensor| {
            linear(
                x,
                self.p(&format!("{pre}.{name}.weight")),
                self.p(&format!("{pre}.{name}.bias")),
            )
        };
        let qk_in = match edge_bias {
            Some(e) => add(tokens, e)?,
            None => tokens.clone(),
        };
        let split = |t: Tensor| -> Result<Tensor> {
            permute(&reshape(&t, &[b, n, heads, dk])?, &[0, 2, 1, 3])
        };
        let q = split(proj("q", &qk_in)?)?;
        let k = split(proj("k", &qk_in)?)?;
        let v = split(proj("v", tokens)?)?;
        let scores = mul_scalar(&matmul(&q, &transpose_last2(&k)?)?, 1.0 / (dk as f64).sqrt());
        let weights = softmax_lastdim(&scores);
        let heads_out = matmul(&weights, &v)?;
        let merged = reshape(&permute(&heads_out, &[0, 2, 1, 3])?, &[b, n, width])?;
        let attended = proj("out", &merged)?;
        let normed = layernorm_lastdim(
            &add(tokens, &attended)?,
            self.p(&format!("{pre}.norm.gamma")),
            self.p(&format!("{pre}.norm.beta")),
            self.spec.ln_eps,
        )?;
        let output = dropout(&normed, self.spec.dropout_p, ctx.training, &mut ctx.rng)?;
        Ok(AttentionOutput { output, weights })
    }

    /// One attention block on a `B×C×H'×W'` feature map, optionally biased by
    /// an edge prior.
    pub fn eg_mhsa(
        &self,
        block: usize,
        x: &Tensor,
        prior: Option<&EdgePrior>,
        ctx: &mut ForwardCtx,
    ) -> Result<Tensor> {
        let s = x.shape();
        if s.len() != 4 {
            return Err(Error::shape(format!("eg_mhsa needs rank 4, got {s:?}")));
        }
        let tokens = flatten_spatial(x)?;
        let bias = match prior {
            Some(p) => {
                if p.projected.shape() != s {
                    return Err(Error::shape(format!(
                        "edge prior {:?} does not match features {s:?}",
                        p.projected.shape()
                    )));
                }
                Some(flatten_spatial(&p.projected)?)
            }
            None => None,
        };
        let out = self.attention_block(block, &tokens, bias.as_ref(), ctx)?.output;
        unflatten_spatial(&out, s[2], s[3])
    }
}

/// Copy of every parameter and batch-norm buffer, in layout order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub params: Vec<Vec<f64>>,
    pub batchnorm: Vec<BatchNormStats>,
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

fn lock(m: &Mutex<BatchNormStats>) -> std::sync::MutexGuard<'_, BatchNormStats> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}
