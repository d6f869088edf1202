//! The assembled toy model and its JSON configuration.
//!
//! Forward pass, with `T` text states and `V` visual tokens:
//!
//! ```text
//! V' = V, or V followed by pooled mask tokens when integration is on
//! a  = T + CrossAttention(T, V')
//! y  = lm.out(tanh(lm.in(a)))
//! L  = mean((y - target)^2)
//! ```
//!
//! `lm.in` and `lm.out` are frozen `d × d` maps that may carry LoRA
//! adapters. Trainable state is the cross-attention projections (when
//! flagged), the adapters, and the integration projection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::attention::CrossAttentionBlock;
use super::gradcheck::{Objective, ParamView};
use super::integrate::{mask_tokens, pool_mask, projection_grad, IntegrationConfig};
use super::lora::{AdaptedLinear, LoraAdapter};
use super::tensor::Tensor;
use super::ToyError;
use crate::imageops::MaskBuffer;

pub const LM_IN: &str = "lm.in";
pub const LM_OUT: &str = "lm.out";
const TARGETS: [&str; 2] = [LM_IN, LM_OUT];

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraConfig {
    pub rank: usize,
    pub alpha: f64,
    /// Subset of `"lm.in"`, `"lm.out"`.
    pub targets: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridConfig {
    pub gh: usize,
    pub gw: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub d: usize,
    pub heads: usize,
    pub n_vit: usize,
    /// Text states per synthetic batch.
    #[serde(default = "default_n_text")]
    pub n_text: usize,
    pub lora: LoraConfig,
    pub cross_attention_trainable: bool,
    #[serde(default)]
    pub integration: Option<GridConfig>,
}

fn default_n_text() -> usize {
    2
}

impl Default for ToyConfig {
    /// d=8, one head, 2 text states over 4 ViT tokens, rank-2 adapters on
    /// both language-head maps, trainable cross-attention, no integration.
    fn default() -> Self {
        Self {
            d: 8,
            heads: 1,
            n_vit: 4,
            n_text: 2,
            lora: LoraConfig {
                rank: 2,
                alpha: 4.0,
                targets: TARGETS.iter().map(|s| s.to_string()).collect(),
            },
            cross_attention_trainable: true,
            integration: None,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<(), ToyError> {
        if self.d == 0 || self.n_vit == 0 || self.n_text == 0 {
            return Err(ToyError::InvalidParam("d, n_vit and n_text must be positive".into()));
        }
        if self.heads == 0 || self.d % self.heads != 0 {
            return Err(ToyError::InvalidParam(format!(
                "heads {} must divide d {}",
                self.heads, self.d
            )));
        }
        if !self.lora.alpha.is_finite() {
            return Err(ToyError::InvalidParam("lora alpha must be finite".into()));
        }
        for t in &self.lora.targets {
            if !TARGETS.contains(&t.as_str()) {
                return Err(ToyError::InvalidParam(format!("unknown LoRA target {t:?}; expected one of {TARGETS:?}")));
            }
        }
        if let Some(g) = self.integration {
            if g.gh == 0 || g.gw == 0 {
                return Err(ToyError::InvalidParam("integration grid must be non-empty".into()));
            }
        }
        Ok(())
    }

    fn targets(&self, name: &str) -> bool {
        self.lora.targets.iter().any(|t| t == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub cross_attention: CrossAttentionBlock,
    pub lm_in: AdaptedLinear,
    pub lm_out: AdaptedLinear,
    pub integration: Option<IntegrationConfig>,
}

impl ToyModel {
    pub fn init(cfg: &ToyConfig, rng: &mut impl Rng) -> Result<Self, ToyError> {
        cfg.validate()?;
        let d = cfg.d;
        let cross_attention = CrossAttentionBlock::random(d, cfg.heads, cfg.cross_attention_trainable, rng)?;
        let lm_in = adapted_linear(cfg, LM_IN, rng)?;
        let lm_out = adapted_linear(cfg, LM_OUT, rng)?;
        let integration = cfg
            .integration
            .map(|g| IntegrationConfig::random(g.gh, g.gw, d, rng))
            .transpose()?;
        Ok(Self {
            cross_attention,
            lm_in,
            lm_out,
            integration,
        })
    }

    pub fn from_seed(cfg: &ToyConfig, seed: u64) -> Result<Self, ToyError> {
        Self::init(cfg, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn dim(&self) -> usize {
        self.cross_attention.dim()
    }

    /// Replaces every enabled `B` factor with `U(-scale, scale)` draws, so
    /// gradients reach the `A` factors. Fresh adapters have `B = 0`.
    pub fn randomize_adapter_outputs(&mut self, scale: f64, rng: &mut impl Rng) {
        for layer in [&mut self.lm_in, &mut self.lm_out] {
            if let Some(b) = layer.adapter.b.as_mut() {
                *b = Tensor::uniform(b.shape(), scale, rng);
            }
        }
    }

    /// Every parameter container in a fixed order, with its trainable flag.
    pub fn parameters(&self) -> Vec<ParamView<'_>> {
        let ca = &self.cross_attention;
        let mut out = vec![
            ParamView::new("cross_attention.wq", &ca.wq, ca.trainable),
            ParamView::new("cross_attention.wk", &ca.wk, ca.trainable),
            ParamView::new("cross_attention.wv", &ca.wv, ca.trainable),
            ParamView::new("cross_attention.wo", &ca.wo, ca.trainable),
        ];
        for (name, layer) in [(LM_IN, &self.lm_in), (LM_OUT, &self.lm_out)] {
            out.push(ParamView::new(format!("{name}.base"), &layer.base, false));
            if let (Some(a), Some(b)) = (&layer.adapter.a, &layer.adapter.b) {
                out.push(ParamView::new(format!("{name}.lora_a"), a, true));
                out.push(ParamView::new(format!("{name}.lora_b"), b, true));
            }
        }
        if let Some(integ) = &self.integration {
            out.push(ParamView::new("integration.proj", &integ.proj, true));
        }
        out
    }

    /// Same order as [`ToyModel::parameters`].
    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let ca = &mut self.cross_attention;
        let mut out = vec![&mut ca.wq, &mut ca.wk, &mut ca.wv, &mut ca.wo];
        for layer in [&mut self.lm_in, &mut self.lm_out] {
            out.push(&mut layer.base);
            if let (Some(a), Some(b)) = (layer.adapter.a.as_mut(), layer.adapter.b.as_mut()) {
                out.push(a);
                out.push(b);
            }
        }
        if let Some(integ) = self.integration.as_mut() {
            out.push(&mut integ.proj);
        }
        out
    }

    fn visual_tokens(&self, batch: &Batch) -> Result<(Tensor, Option<Vec<f64>>), ToyError> {
        match (&self.integration, &batch.mask) {
            (None, _) => Ok((batch.vit.clone(), None)),
            (Some(integ), Some(mask)) => {
                let pooled = pool_mask(mask, integ.grid_h, integ.grid_w)?;
                let tokens = batch.vit.vstack(&mask_tokens(&pooled, integ))?;
                Ok((tokens, Some(pooled)))
            }
            (Some(_), None) => Err(ToyError::InvalidParam("model integrates mask features but the batch has no mask".into())),
        }
    }

    pub fn forward(&self, batch: &Batch) -> Result<Tensor, ToyError> {
        let (visual, _) = self.visual_tokens(batch)?;
        let attended = self.cross_attention.forward(&batch.text, &visual)?;
        let a = batch.text.add(&attended)?;
        let h = self.lm_in.forward(&a)?.map(f64::tanh);
        self.lm_out.forward(&h)
    }

    pub fn loss(&self, batch: &Batch) -> Result<f64, ToyError> {
        let y = self.forward(batch)?;
        let loss = mse(&y, &batch.target)?;
        finite(loss)
    }

    /// Loss and gradients aligned with [`ToyModel::parameters`]; frozen
    /// entries are `None`.
    pub fn loss_and_grad(&self, batch: &Batch) -> Result<(f64, Vec<Option<Tensor>>), ToyError> {
        let (visual, pooled) = self.visual_tokens(batch)?;
        let (attended, ca_cache) = self.cross_attention.forward_cached(&batch.text, &visual)?;
        let a = batch.text.add(&attended)?;
        let (z, in_cache) = self.lm_in.forward_cached(&a)?;
        let h = z.map(f64::tanh);
        let (y, out_cache) = self.lm_out.forward_cached(&h)?;
        let loss = finite(mse(&y, &batch.target)?)?;

        let n = y.len() as f64;
        let dy = y.sub(&batch.target)?.scale(2.0 / n);
        let g_out = self.lm_out.backward(&out_cache, &dy)?;
        let mut dz = g_out.input.clone();
        for (g, hv) in dz.data_mut().iter_mut().zip(h.data()) {
            *g *= 1.0 - hv * hv;
        }
        let g_in = self.lm_in.backward(&in_cache, &dz)?;
        let g_ca = self.cross_attention.backward(&ca_cache, &g_in.input)?;

        let ca_trainable = self.cross_attention.trainable;
        let keep = |t: Tensor| if ca_trainable { Some(t) } else { None };
        let mut grads = vec![keep(g_ca.wq), keep(g_ca.wk), keep(g_ca.wv), keep(g_ca.wo)];
        for (layer, g) in [(&self.lm_in, g_in), (&self.lm_out, g_out)] {
            grads.push(None);
            if layer.adapter.a.is_some() {
                grads.push(g.a);
                grads.push(g.b);
            }
        }
        if let Some(pooled) = pooled {
            let n_vit = batch.vit.rows();
            let mut d_tokens = Tensor::zeros(&[pooled.len(), self.dim()]);
            for j in 0..pooled.len() {
                for i in 0..self.dim() {
                    d_tokens.set(j, i, g_ca.visual.get(n_vit + j, i));
                }
            }
            grads.push(Some(projection_grad(&pooled, &d_tokens)));
        }
        Ok((loss, grads))
    }
}

/// Frozen `d × d` base from `U(-1/√d, 1/√d)`, adapter only when targeted.
fn adapted_linear(cfg: &ToyConfig, name: &str, rng: &mut impl Rng) -> Result<AdaptedLinear, ToyError> {
    let d = cfg.d;
    let base = Tensor::uniform(&[d, d], 1.0 / (d as f64).sqrt(), rng);
    let rank = if cfg.targets(name) { cfg.lora.rank } else { 0 };
    AdaptedLinear::new(base, LoraAdapter::init(d, d, rank, cfg.lora.alpha, rng))
}

fn mse(y: &Tensor, target: &Tensor) -> Result<f64, ToyError> {
    let diff = y.sub(target)?;
    Ok(diff.data().iter().map(|v| v * v).sum::<f64>() / diff.len() as f64)
}

fn finite(loss: f64) -> Result<f64, ToyError> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(ToyError::NonFiniteLoss(loss))
    }
}

/// One synthetic regression problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub text: Tensor,
    pub vit: Tensor,
    pub mask: Option<MaskBuffer>,
    pub target: Tensor,
}

impl Batch {
    /// Text, ViT tokens and targets from `U(-1, 1)`; when the config
    /// integrates masks, a random `4gh × 4gw` mask as well.
    pub fn synthetic(cfg: &ToyConfig, rng: &mut impl Rng) -> Result<Self, ToyError> {
        cfg.validate()?;
        let text = Tensor::uniform(&[cfg.n_text, cfg.d], 1.0, rng);
        let vit = Tensor::uniform(&[cfg.n_vit, cfg.d], 1.0, rng);
        let mask = match cfg.integration {
            Some(g) => {
                let (w, h) = (4 * g.gw, 4 * g.gh);
                let values = (0..w * h).map(|_| rng.gen::<u8>()).collect();
                Some(MaskBuffer::new(w, h, values).map_err(|e| ToyError::InvalidParam(e.to_string()))?)
            }
            None => None,
        };
        let target = Tensor::uniform(&[cfg.n_text, cfg.d], 1.0, rng);
        Ok(Self { text, vit, mask, target })
    }
}

/// Model then batch, drawn in that order from one ChaCha8 stream.
pub fn seeded_fixture(cfg: &ToyConfig, seed: u64) -> Result<(ToyModel, Batch), ToyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = ToyModel::init(cfg, &mut rng)?;
    let batch = Batch::synthetic(cfg, &mut rng)?;
    Ok((model, batch))
}

/// [`seeded_fixture`], after which the same stream redraws every adapter `B`
/// from `U(-0.5, 0.5)` so the check also exercises the `A` gradients.
pub fn grad_check_fixture(cfg: &ToyConfig, seed: u64) -> Result<(ToyModel, Batch), ToyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = ToyModel::init(cfg, &mut rng)?;
    let batch = Batch::synthetic(cfg, &mut rng)?;
    model.randomize_adapter_outputs(0.5, &mut rng);
    Ok((model, batch))
}

/// A model bound to the batch it is scored on.
pub struct ToyProblem<'a> {
    pub model: &'a mut ToyModel,
    pub batch: &'a Batch,
}

impl Objective for ToyProblem<'_> {
    fn params(&self) -> Vec<ParamView<'_>> {
        self.model.parameters()
    }

    fn param_mut(&mut self, index: usize) -> &mut Tensor {
        self.model.parameters_mut().swap_remove(index)
    }

    fn loss(&self) -> Result<f64, ToyError> {
        self.model.loss(self.batch)
    }

    fn loss_and_grad(&self) -> Result<(f64, Vec<Option<Tensor>>), ToyError> {
        self.model.loss_and_grad(self.batch)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParamGroup {
    pub name: String,
    pub count: usize,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParamReport {
    pub total: usize,
    pub trainable: usize,
    pub frozen: usize,
    pub groups: Vec<ParamGroup>,
}

/// Parameter accounting from layer dimensions: `4d²` per cross-attention
/// block, `d_out·d_in` per frozen base, `r·(d_in + d_out)` per adapter and
/// `d` for the integration projection.
pub fn count_params(model: &ToyModel) -> ParamReport {
    let ca = &model.cross_attention;
    let d = ca.dim();
    let mut groups = vec![ParamGroup {
        name: "cross_attention".into(),
        count: 4 * d * d,
        trainable: ca.trainable,
    }];
    for (name, layer) in [(LM_IN, &model.lm_in), (LM_OUT, &model.lm_out)] {
        groups.push(ParamGroup {
            name: format!("{name}.base"),
            count: layer.d_out() * layer.d_in(),
            trainable: false,
        });
        groups.push(ParamGroup {
            name: format!("{name}.lora"),
            count: layer.adapter.rank() * (layer.d_in() + layer.d_out()),
            trainable: true,
        });
    }
    if let Some(integ) = &model.integration {
        groups.push(ParamGroup {
            name: "integration.proj".into(),
            count: integ.dim(),
            trainable: true,
        });
    }
    let trainable = groups.iter().filter(|g| g.trainable).map(|g| g.count).sum();
    let frozen = groups.iter().filter(|g| !g.trainable).map(|g| g.count).sum();
    ParamReport {
        total: trainable + frozen,
        trainable,
        frozen,
        groups,
    }
}
