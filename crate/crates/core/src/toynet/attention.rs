//! Multi-head scaled dot-product cross-attention: queries from text states,
//! keys and values from visual states. Linear maps act on row vectors as
//! `x · Wᵀ`, with `W` stored `d_out × d_in`; there are no biases.

use rand::Rng;

use super::tensor::{softmax_rows, Tensor};
use super::ToyError;

#[derive(Debug, Clone, PartialEq)]
pub struct CrossAttentionBlock {
    d: usize,
    heads: usize,
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub wo: Tensor,
    pub trainable: bool,
}

/// Intermediates kept from the forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct AttentionCache {
    text: Tensor,
    visual: Tensor,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    /// Per-head attention weights, `n_t × n_v` each.
    weights: Vec<Tensor>,
    concat: Tensor,
}

impl AttentionCache {
    pub fn weights(&self) -> &[Tensor] {
        &self.weights
    }
}

#[derive(Debug, Clone)]
pub struct AttentionGrads {
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub wo: Tensor,
    pub text: Tensor,
    pub visual: Tensor,
}

impl CrossAttentionBlock {
    pub fn new(d: usize, heads: usize, wq: Tensor, wk: Tensor, wv: Tensor, wo: Tensor, trainable: bool) -> Result<Self, ToyError> {
        check_heads(d, heads)?;
        for (name, w) in [("Wq", &wq), ("Wk", &wk), ("Wv", &wv), ("Wo", &wo)] {
            if w.shape() != [d, d] {
                return Err(ToyError::ShapeMismatch(format!("{name} must be {d}x{d}, got {:?}", w.shape())));
            }
        }
        Ok(Self {
            d,
            heads,
            wq,
            wk,
            wv,
            wo,
            trainable,
        })
    }

    /// Projections drawn from `U(-1/√d, 1/√d)`.
    pub fn random(d: usize, heads: usize, trainable: bool, rng: &mut impl Rng) -> Result<Self, ToyError> {
        check_heads(d, heads)?;
        let bound = 1.0 / (d as f64).sqrt();
        let mut w = || Tensor::uniform(&[d, d], bound, rng);
        let (wq, wk, wv, wo) = (w(), w(), w(), w());
        Self::new(d, heads, wq, wk, wv, wo, trainable)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn head_dim(&self) -> usize {
        self.d / self.heads
    }

    pub fn param_count(&self) -> usize {
        4 * self.d * self.d
    }

    fn check_input(&self, name: &str, x: &Tensor) -> Result<(), ToyError> {
        if x.shape().len() != 2 || x.cols() != self.d {
            return Err(ToyError::ShapeMismatch(format!(
                "{name} must be n×{}, got {:?}",
                self.d,
                x.shape()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, text: &Tensor, visual: &Tensor) -> Result<Tensor, ToyError> {
        self.forward_cached(text, visual).map(|(out, _)| out)
    }

    pub fn forward_cached(&self, text: &Tensor, visual: &Tensor) -> Result<(Tensor, AttentionCache), ToyError> {
        self.check_input("text states", text)?;
        self.check_input("visual states", visual)?;
        let q = text.matmul_t(&self.wq)?;
        let k = visual.matmul_t(&self.wk)?;
        let v = visual.matmul_t(&self.wv)?;

        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut concat = Tensor::zeros(&[text.rows(), self.d]);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = q.column_block(h * dh, dh);
            let kh = k.column_block(h * dh, dh);
            let vh = v.column_block(h * dh, dh);
            let attn = softmax_rows(&qh.matmul_t(&kh)?.scale(scale));
            concat.set_column_block(h * dh, &attn.matmul(&vh)?);
            weights.push(attn);
        }
        let out = concat.matmul_t(&self.wo)?;
        let cache = AttentionCache {
            text: text.clone(),
            visual: visual.clone(),
            q,
            k,
            v,
            weights,
            concat,
        };
        Ok((out, cache))
    }

    /// Gradients of a scalar loss given `d_out = ∂L/∂output`.
    pub fn backward(&self, cache: &AttentionCache, d_out: &Tensor) -> Result<AttentionGrads, ToyError> {
        let n_t = cache.text.rows();
        if d_out.shape() != [n_t, self.d] {
            return Err(ToyError::ShapeMismatch(format!("upstream gradient {:?}", d_out.shape())));
        }
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();

        let d_wo = d_out.t_matmul(&cache.concat)?;
        let d_concat = d_out.matmul(&self.wo)?;

        let n_v = cache.visual.rows();
        let mut dq = Tensor::zeros(&[n_t, self.d]);
        let mut dk = Tensor::zeros(&[n_v, self.d]);
        let mut dv = Tensor::zeros(&[n_v, self.d]);
        for (h, attn) in cache.weights.iter().enumerate() {
            let qh = cache.q.column_block(h * dh, dh);
            let kh = cache.k.column_block(h * dh, dh);
            let vh = cache.v.column_block(h * dh, dh);
            let d_head = d_concat.column_block(h * dh, dh);

            let d_attn = d_head.matmul_t(&vh)?;
            dv.set_column_block(h * dh, &attn.t_matmul(&d_head)?);

            // Softmax backward, row by row: dS = A ⊙ (dA − Σ_j dA·A).
            let mut d_logits = d_attn.clone();
            for r in 0..n_t {
                let dot: f64 = attn.row(r).iter().zip(d_attn.row(r)).map(|(a, g)| a * g).sum();
                for c in 0..n_v {
                    d_logits.set(r, c, attn.get(r, c) * (d_attn.get(r, c) - dot) * scale);
                }
            }
            dq.set_column_block(h * dh, &d_logits.matmul(&kh)?);
            dk.set_column_block(h * dh, &d_logits.t_matmul(&qh)?);
        }

        let mut d_visual = dk.matmul(&self.wk)?;
        d_visual.add_assign(&dv.matmul(&self.wv)?)?;
        Ok(AttentionGrads {
            wq: dq.t_matmul(&cache.text)?,
            wk: dk.t_matmul(&cache.visual)?,
            wv: dv.t_matmul(&cache.visual)?,
            wo: d_wo,
            text: dq.matmul(&self.wq)?,
            visual: d_visual,
        })
    }
}

fn check_heads(d: usize, heads: usize) -> Result<(), ToyError> {
    if d == 0 || heads == 0 || d % heads != 0 {
        return Err(ToyError::InvalidParam(format!("head count {heads} must divide model dim {d}")));
    }
    Ok(())
}

/// Free-function form of [`CrossAttentionBlock::forward`].
pub fn cross_attention_forward(text: &Tensor, visual: &Tensor, block: &CrossAttentionBlock) -> Result<Tensor, ToyError> {
    block.forward(text, visual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Dense loops written directly from the definition.
    fn oracle(text: &Tensor, visual: &Tensor, b: &CrossAttentionBlock) -> Vec<Vec<f64>> {
        let d = b.dim();
        let dh = b.head_dim();
        let lin = |w: &Tensor, x: &[f64]| -> Vec<f64> {
            (0..d).map(|i| (0..d).map(|j| w.get(i, j) * x[j]).sum()).collect()
        };
        let qs: Vec<Vec<f64>> = (0..text.rows()).map(|t| lin(&b.wq, text.row(t))).collect();
        let ks: Vec<Vec<f64>> = (0..visual.rows()).map(|s| lin(&b.wk, visual.row(s))).collect();
        let vs: Vec<Vec<f64>> = (0..visual.rows()).map(|s| lin(&b.wv, visual.row(s))).collect();
        let mut out = Vec::new();
        for q in &qs {
            let mut concat = vec![0.0; d];
            for h in 0..b.heads() {
                let range = h * dh..(h + 1) * dh;
                let logits: Vec<f64> = ks
                    .iter()
                    .map(|k| range.clone().map(|i| q[i] * k[i]).sum::<f64>() / (dh as f64).sqrt())
                    .collect();
                let max = logits.iter().cloned().fold(f64::MIN, f64::max);
                let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
                let z: f64 = exps.iter().sum();
                for (e, v) in exps.iter().zip(&vs) {
                    for i in range.clone() {
                        concat[i] += e / z * v[i];
                    }
                }
            }
            out.push(lin(&b.wo, &concat));
        }
        out
    }

    #[test]
    fn matches_dense_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for heads in [1, 2, 4] {
            let block = CrossAttentionBlock::random(8, heads, true, &mut rng).unwrap();
            let text = Tensor::uniform(&[3, 8], 1.0, &mut rng);
            let visual = Tensor::uniform(&[5, 8], 1.0, &mut rng);
            let got = cross_attention_forward(&text, &visual, &block).unwrap();
            let want = oracle(&text, &visual, &block);
            for (r, row) in want.iter().enumerate() {
                for (c, w) in row.iter().enumerate() {
                    assert!((got.get(r, c) - w).abs() < 1e-12, "heads={heads} ({r},{c})");
                }
            }
        }
    }

    #[test]
    fn single_key_returns_projected_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut block = CrossAttentionBlock::random(4, 2, true, &mut rng).unwrap();
        block.wo = Tensor::identity(4);
        let text = Tensor::uniform(&[3, 4], 1.0, &mut rng);
        let visual = Tensor::uniform(&[1, 4], 1.0, &mut rng);
        let out = block.forward(&text, &visual).unwrap();
        let value = visual.matmul_t(&block.wv).unwrap();
        for r in 0..3 {
            for c in 0..4 {
                assert!((out.get(r, c) - value.get(0, c)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn identical_keys_average_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut block = CrossAttentionBlock::random(4, 1, true, &mut rng).unwrap();
        block.wo = Tensor::identity(4);
        // Keys depend only on Wk·x; zero the rows of Wk so both keys vanish.
        block.wk = Tensor::zeros(&[4, 4]);
        let text = Tensor::uniform(&[2, 4], 1.0, &mut rng);
        let visual = Tensor::uniform(&[2, 4], 1.0, &mut rng);
        let out = block.forward(&text, &visual).unwrap();
        let v = visual.matmul_t(&block.wv).unwrap();
        for r in 0..2 {
            for c in 0..4 {
                assert!((out.get(r, c) - 0.5 * (v.get(0, c) + v.get(1, c))).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let block = CrossAttentionBlock::random(8, 2, true, &mut rng).unwrap();
        let text = Tensor::uniform(&[3, 8], 2.0, &mut rng);
        let visual = Tensor::uniform(&[6, 8], 2.0, &mut rng);
        let (_, cache) = block.forward_cached(&text, &visual).unwrap();
        for w in cache.weights() {
            for r in 0..w.rows() {
                assert!((w.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(w.row(r).iter().all(|&p| p >= 0.0));
            }
        }
    }

    #[test]
    fn logit_shift_per_row_is_invisible() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let logits = Tensor::uniform(&[3, 5], 3.0, &mut rng);
        let mut shifted = logits.clone();
        for (r, shift) in [-40.0, 0.5, 17.0].iter().enumerate() {
            for c in 0..5 {
                shifted.set(r, c, logits.get(r, c) + shift);
            }
        }
        let (a, b) = (softmax_rows(&logits), softmax_rows(&shifted));
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn shape_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        assert!(CrossAttentionBlock::random(8, 3, true, &mut rng).is_err());
        let block = CrossAttentionBlock::random(8, 2, true, &mut rng).unwrap();
        let ok = Tensor::zeros(&[2, 8]);
        assert!(block.forward(&Tensor::zeros(&[2, 7]), &ok).is_err());
        assert!(block.forward(&ok, &Tensor::zeros(&[2, 4])).is_err());
        assert!(CrossAttentionBlock::new(
            2,
            1,
            Tensor::zeros(&[2, 2]),
            Tensor::zeros(&[2, 2]),
            Tensor::zeros(&[2, 2]),
            Tensor::zeros(&[2, 3]),
            true
        )
        .is_err());
    }
}
