//! Low-rank adapters on frozen linear maps.
//!
//! An adapted layer computes `x·Wᵀ + (α/r)·(x·Aᵀ)·Bᵀ`. `A` starts small and
//! random, `B` starts at zero, so a fresh adapter leaves the base map as is.
//! Rank zero disables the adapter entirely.

use rand::Rng;

use super::tensor::Tensor;
use super::ToyError;

#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter {
    rank: usize,
    pub alpha: f64,
    /// `r × d_in`; `None` when rank is zero.
    pub a: Option<Tensor>,
    /// `d_out × r`; `None` when rank is zero.
    pub b: Option<Tensor>,
}

impl LoraAdapter {
    pub fn disabled() -> Self {
        Self {
            rank: 0,
            alpha: 0.0,
            a: None,
            b: None,
        }
    }

    /// `A ~ U(-1/√d_in, 1/√d_in)`, `B = 0`.
    pub fn init(d_in: usize, d_out: usize, rank: usize, alpha: f64, rng: &mut impl Rng) -> Self {
        if rank == 0 {
            return Self::disabled();
        }
        let bound = 1.0 / (d_in as f64).sqrt();
        Self {
            rank,
            alpha,
            a: Some(Tensor::uniform(&[rank, d_in], bound, rng)),
            b: Some(Tensor::zeros(&[d_out, rank])),
        }
    }

    pub fn from_factors(alpha: f64, a: Tensor, b: Tensor) -> Result<Self, ToyError> {
        let (rank, rank_b) = (a.rows(), b.cols());
        if a.shape().len() != 2 || b.shape().len() != 2 || rank != rank_b {
            return Err(ToyError::ShapeMismatch(format!("A {:?} and B {:?}", a.shape(), b.shape())));
        }
        Ok(Self {
            rank,
            alpha,
            a: Some(a),
            b: Some(b),
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn scaling(&self) -> f64 {
        if self.rank == 0 {
            0.0
        } else {
            self.alpha / self.rank as f64
        }
    }

    pub fn param_count(&self) -> usize {
        self.a.as_ref().map_or(0, Tensor::len) + self.b.as_ref().map_or(0, Tensor::len)
    }
}

/// A frozen base matrix with a trainable adapter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedLinear {
    /// `d_out × d_in`, never updated by training.
    pub base: Tensor,
    pub adapter: LoraAdapter,
}

#[derive(Debug, Clone)]
pub struct LoraCache {
    input: Tensor,
    /// `x·Aᵀ`, present when the adapter is enabled.
    down: Option<Tensor>,
}

#[derive(Debug, Clone)]
pub struct LoraGrads {
    pub a: Option<Tensor>,
    pub b: Option<Tensor>,
    pub input: Tensor,
}

impl AdaptedLinear {
    pub fn new(base: Tensor, adapter: LoraAdapter) -> Result<Self, ToyError> {
        if base.shape().len() != 2 {
            return Err(ToyError::ShapeMismatch(format!("base must be 2-D, got {:?}", base.shape())));
        }
        if let (Some(a), Some(b)) = (&adapter.a, &adapter.b) {
            if a.cols() != base.cols() || b.rows() != base.rows() {
                return Err(ToyError::ShapeMismatch(format!(
                    "adapter A {:?} / B {:?} do not fit base {:?}",
                    a.shape(),
                    b.shape(),
                    base.shape()
                )));
            }
        }
        Ok(Self { base, adapter })
    }

    pub fn d_in(&self) -> usize {
        self.base.cols()
    }

    pub fn d_out(&self) -> usize {
        self.base.rows()
    }

    /// Accepts `[.., d_in]` and returns `[.., d_out]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor, ToyError> {
        let mut shape = x.shape().to_vec();
        let (out, _) = self.forward_cached(&x.flatten_rows())?;
        *shape.last_mut().expect("non-empty shape") = self.d_out();
        out.reshape(&shape)
    }

    pub fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, LoraCache), ToyError> {
        if x.shape().len() != 2 || x.cols() != self.d_in() {
            return Err(ToyError::ShapeMismatch(format!(
                "input must be n×{}, got {:?}",
                self.d_in(),
                x.shape()
            )));
        }
        let mut out = x.matmul_t(&self.base)?;
        let down = match (&self.adapter.a, &self.adapter.b) {
            (Some(a), Some(b)) => {
                let down = x.matmul_t(a)?;
                out.add_assign(&down.matmul_t(b)?.scale(self.adapter.scaling()))?;
                Some(down)
            }
            _ => None,
        };
        Ok((
            out,
            LoraCache {
                input: x.clone(),
                down,
            },
        ))
    }

    pub fn backward(&self, cache: &LoraCache, d_out: &Tensor) -> Result<LoraGrads, ToyError> {
        let mut d_input = d_out.matmul(&self.base)?;
        let (mut da, mut db) = (None, None);
        if let (Some(a), Some(b), Some(down)) = (&self.adapter.a, &self.adapter.b, &cache.down) {
            let s = self.adapter.scaling();
            let d_down = d_out.matmul(b)?.scale(s);
            db = Some(d_out.t_matmul(down)?.scale(s));
            da = Some(d_down.t_matmul(&cache.input)?);
            d_input.add_assign(&d_down.matmul(a)?)?;
        }
        Ok(LoraGrads {
            a: da,
            b: db,
            input: d_input,
        })
    }
}

/// Free-function form of [`AdaptedLinear::forward`].
pub fn lora_forward(x: &Tensor, layer: &AdaptedLinear) -> Result<Tensor, ToyError> {
    layer.forward(x)
}
