use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::RetrieverError;
use crate::math::{dot, matvec, matvec_t_acc, outer_acc, tanh};

/// Shape of a multi-head graph attention layer.
///
/// Parameters live in a flat slice laid out as
/// `[W (heads × d_out × d_in) | a_src (heads × d_out) | a_dst (heads × d_out)]`,
/// `a_src ‖ a_dst` being the per-head attention vector. For node `i` and
/// head `h`:
///
/// ```text
/// g_j   = W_h x_j
/// e_ij  = LeakyReLU(a_src · g_i + a_dst · g_j)      j ∈ N(i)
/// α_ij  = softmax_j e_ij
/// out_i = tanh(Σ_j α_ij g_j)
/// ```
///
/// and head outputs are concatenated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GatLayer {
    pub d_in: usize,
    pub d_out: usize,
    pub heads: usize,
    pub slope: f64,
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct GatCache {
    pub n: usize,
    /// `heads × n × d_out`
    g: Vec<f64>,
    /// Per `(head, node)`: attention weights aligned with the neighbour list.
    pub alpha: Vec<Vec<f64>>,
    /// Per `(head, node)`: pre-activation attention logits.
    logits: Vec<Vec<f64>>,
    /// `n × (heads · d_out)` layer output.
    pub out: Vec<f64>,
}

impl GatLayer {
    pub fn new(d_in: usize, d_out: usize, heads: usize, slope: f64) -> Self {
        Self { d_in, d_out, heads, slope }
    }

    pub fn out_dim(&self) -> usize {
        self.heads * self.d_out
    }

    pub fn n_params(&self) -> usize {
        self.heads * self.d_out * self.d_in + 2 * self.heads * self.d_out
    }

    fn w<'a>(&self, p: &'a [f64], h: usize) -> &'a [f64] {
        let sz = self.d_out * self.d_in;
        &p[h * sz..(h + 1) * sz]
    }

    fn a_src<'a>(&self, p: &'a [f64], h: usize) -> &'a [f64] {
        let base = self.heads * self.d_out * self.d_in;
        &p[base + h * self.d_out..base + (h + 1) * self.d_out]
    }

    fn a_dst<'a>(&self, p: &'a [f64], h: usize) -> &'a [f64] {
        let base = self.heads * self.d_out * self.d_in + self.heads * self.d_out;
        &p[base + h * self.d_out..base + (h + 1) * self.d_out]
    }

    fn leaky(&self, x: f64) -> f64 {
        if x > 0.0 {
            x
        } else {
            self.slope * x
        }
    }

    /// Forward pass over `x` (`n × d_in`, row-major) with the given adjacency.
    pub fn forward(&self, params: &[f64], x: &[f64], neighbors: &[Vec<usize>]) -> Result<GatCache, RetrieverError> {
        if params.len() != self.n_params() {
            return Err(RetrieverError::DimensionMismatch {
                expected: self.n_params(),
                got: params.len(),
            });
        }
        let n = neighbors.len();
        if x.len() != n * self.d_in {
            return Err(RetrieverError::DimensionMismatch {
                expected: n * self.d_in,
                got: x.len(),
            });
        }
        let (d_in, d_out, od) = (self.d_in, self.d_out, self.out_dim());
        let mut g = vec![0.0; self.heads * n * d_out];
        let mut alpha = Vec::with_capacity(self.heads * n);
        let mut logits = Vec::with_capacity(self.heads * n);
        let mut out = vec![0.0; n * od];
        for h in 0..self.heads {
            let w = self.w(params, h);
            let gh = &mut g[h * n * d_out..(h + 1) * n * d_out];
            for i in 0..n {
                matvec(w, d_out, &x[i * d_in..(i + 1) * d_in], &mut gh[i * d_out..(i + 1) * d_out]);
            }
            let (a_src, a_dst) = (self.a_src(params, h), self.a_dst(params, h));
            let src: Vec<f64> = (0..n).map(|i| dot(a_src, &gh[i * d_out..(i + 1) * d_out])).collect();
            let dst: Vec<f64> = (0..n).map(|i| dot(a_dst, &gh[i * d_out..(i + 1) * d_out])).collect();
            for i in 0..n {
                let u: Vec<f64> = neighbors[i].iter().map(|&j| src[i] + dst[j]).collect();
                let e: Vec<f64> = u.iter().map(|&v| self.leaky(v)).collect();
                let m = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut a: Vec<f64> = e.iter().map(|v| crate::math::exp(v - m)).collect();
                let z: f64 = a.iter().sum();
                a.iter_mut().for_each(|v| *v /= z);
                let row = &mut out[i * od + h * d_out..i * od + (h + 1) * d_out];
                for (&j, &aij) in neighbors[i].iter().zip(&a) {
                    for (o, gv) in row.iter_mut().zip(&gh[j * d_out..(j + 1) * d_out]) {
                        *o += aij * gv;
                    }
                }
                alpha.push(a);
                logits.push(u);
            }
        }
        out.iter_mut().for_each(|v| *v = tanh(*v));
        Ok(GatCache { n, g, alpha, logits, out })
    }

    /// Backward pass: accumulates parameter gradients into `grad` and
    /// returns the gradient with respect to the input `x`.
    pub fn backward(
        &self,
        params: &[f64],
        x: &[f64],
        neighbors: &[Vec<usize>],
        cache: &GatCache,
        d_out_grad: &[f64],
        grad: &mut [f64],
    ) -> Vec<f64> {
        let n = cache.n;
        let (d_in, d_out, od) = (self.d_in, self.d_out, self.out_dim());
        let mut dx = vec![0.0; n * d_in];
        let w_size = d_out * d_in;
        let src_base = self.heads * w_size;
        let dst_base = src_base + self.heads * d_out;
        for h in 0..self.heads {
            let gh = &cache.g[h * n * d_out..(h + 1) * n * d_out];
            let (a_src, a_dst) = (self.a_src(params, h), self.a_dst(params, h));
            let mut dg = vec![0.0; n * d_out];
            let mut da_src = vec![0.0; d_out];
            let mut da_dst = vec![0.0; d_out];
            for i in 0..n {
                // ds_i = dOut_i ⊙ (1 - out_i²)
                let ds: Vec<f64> = (0..d_out)
                    .map(|k| {
                        let o = cache.out[i * od + h * d_out + k];
                        d_out_grad[i * od + h * d_out + k] * (1.0 - o * o)
                    })
                    .collect();
                let a = &cache.alpha[h * n + i];
                let u = &cache.logits[h * n + i];
                let nb = &neighbors[i];
                let dalpha: Vec<f64> = nb.iter().map(|&j| dot(&ds, &gh[j * d_out..(j + 1) * d_out])).collect();
                let mean: f64 = a.iter().zip(&dalpha).map(|(x, y)| x * y).sum();
                for (idx, &j) in nb.iter().enumerate() {
                    let row = &mut dg[j * d_out..(j + 1) * d_out];
                    for (r, s) in row.iter_mut().zip(&ds) {
                        *r += a[idx] * s;
                    }
                    let de = a[idx] * (dalpha[idx] - mean);
                    let du = de * if u[idx] > 0.0 { 1.0 } else { self.slope };
                    if du == 0.0 {
                        continue;
                    }
                    for k in 0..d_out {
                        da_src[k] += du * gh[i * d_out + k];
                        da_dst[k] += du * gh[j * d_out + k];
                        dg[i * d_out + k] += du * a_src[k];
                        dg[j * d_out + k] += du * a_dst[k];
                    }
                }
            }
            let w = self.w(params, h);
            let gw = &mut grad[h * w_size..(h + 1) * w_size];
            for i in 0..n {
                let dgi = &dg[i * d_out..(i + 1) * d_out];
                outer_acc(gw, dgi, &x[i * d_in..(i + 1) * d_in]);
                matvec_t_acc(w, dgi, &mut dx[i * d_in..(i + 1) * d_in]);
            }
            for k in 0..d_out {
                grad[src_base + h * d_out + k] += da_src[k];
                grad[dst_base + h * d_out + k] += da_dst[k];
            }
        }
        dx
    }
}
