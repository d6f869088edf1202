//! ViT ⊕ segmentation feature integration.
//!
//! The mask is mean-pooled over a `gh × gw` grid, each cell's mean weight `s`
//! is embedded as `s·P` for a trainable `d × 1` projection `P`, and the
//! resulting tokens are appended after the ViT tokens. This token-append
//! operator is a modelling choice for the toy core; it makes no claim about
//! how a production backbone fuses the two feature streams.

use rand::Rng;

use super::tensor::Tensor;
use super::ToyError;
use crate::imageops::MaskBuffer;

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationConfig {
    pub grid_h: usize,
    pub grid_w: usize,
    /// `d × 1`.
    pub proj: Tensor,
}

impl IntegrationConfig {
    pub fn new(grid_h: usize, grid_w: usize, proj: Tensor) -> Result<Self, ToyError> {
        if grid_h == 0 || grid_w == 0 {
            return Err(ToyError::InvalidParam(format!("grid must be non-empty, got {grid_h}x{grid_w}")));
        }
        if proj.shape().len() != 2 || proj.cols() != 1 {
            return Err(ToyError::ShapeMismatch(format!("projection must be d×1, got {:?}", proj.shape())));
        }
        Ok(Self { grid_h, grid_w, proj })
    }

    pub fn random(grid_h: usize, grid_w: usize, d: usize, rng: &mut impl Rng) -> Result<Self, ToyError> {
        Self::new(grid_h, grid_w, Tensor::uniform(&[d, 1], 1.0, rng))
    }

    pub fn cells(&self) -> usize {
        self.grid_h * self.grid_w
    }

    pub fn dim(&self) -> usize {
        self.proj.rows()
    }
}

/// Half-open pixel ranges of the grid cells along one axis. The remainder of
/// an uneven split is folded into the last cell.
fn cell_bounds(len: usize, cells: usize) -> Vec<(usize, usize)> {
    let step = len / cells;
    (0..cells)
        .map(|i| {
            let end = if i + 1 == cells { len } else { (i + 1) * step };
            (i * step, end)
        })
        .collect()
}

/// Mean mask weight (`value / 255`) per grid cell, row-major.
pub fn pool_mask(mask: &MaskBuffer, grid_h: usize, grid_w: usize) -> Result<Vec<f64>, ToyError> {
    if grid_h == 0 || grid_w == 0 {
        return Err(ToyError::InvalidParam(format!("grid must be non-empty, got {grid_h}x{grid_w}")));
    }
    if mask.height() < grid_h || mask.width() < grid_w {
        return Err(ToyError::ShapeMismatch(format!(
            "{}x{} mask cannot fill a {grid_h}x{grid_w} grid",
            mask.width(),
            mask.height()
        )));
    }
    let rows = cell_bounds(mask.height(), grid_h);
    let cols = cell_bounds(mask.width(), grid_w);
    let mut pooled = Vec::with_capacity(grid_h * grid_w);
    for &(y0, y1) in &rows {
        for &(x0, x1) in &cols {
            let mut sum = 0u64;
            for y in y0..y1 {
                for x in x0..x1 {
                    sum += u64::from(mask.value(x, y));
                }
            }
            let n = ((y1 - y0) * (x1 - x0)) as f64;
            pooled.push(sum as f64 / (255.0 * n));
        }
    }
    Ok(pooled)
}

/// The appended tokens alone, `(gh·gw) × d`.
pub fn mask_tokens(pooled: &[f64], cfg: &IntegrationConfig) -> Tensor {
    let d = cfg.dim();
    let mut out = Tensor::zeros(&[pooled.len(), d]);
    for (j, s) in pooled.iter().enumerate() {
        for i in 0..d {
            out.set(j, i, s * cfg.proj.get(i, 0));
        }
    }
    out
}

/// ViT tokens followed by one embedded token per grid cell.
pub fn integrate_features(vit_tokens: &Tensor, mask: &MaskBuffer, cfg: &IntegrationConfig) -> Result<Tensor, ToyError> {
    if vit_tokens.shape().len() != 2 || vit_tokens.cols() != cfg.dim() {
        return Err(ToyError::ShapeMismatch(format!(
            "ViT tokens must be n×{}, got {:?}",
            cfg.dim(),
            vit_tokens.shape()
        )));
    }
    let pooled = pool_mask(mask, cfg.grid_h, cfg.grid_w)?;
    vit_tokens.vstack(&mask_tokens(&pooled, cfg))
}

/// `∂L/∂P` from the gradient w.r.t. the appended tokens.
pub fn projection_grad(pooled: &[f64], d_tokens: &Tensor) -> Tensor {
    let d = d_tokens.cols();
    let mut grad = Tensor::zeros(&[d, 1]);
    for (j, s) in pooled.iter().enumerate() {
        for i in 0..d {
            let g = grad.get(i, 0) + s * d_tokens.get(j, i);
            grad.set(i, 0, g);
        }
    }
    grad
}
