use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{build_graph, EmbeddingProvider, GatCache, GatLayer, RetrieverError, TokenGraph, TrainedChannel};
use crate::corpus::Document;
use crate::math::{dot, fnv1a, matvec, norm, outer_acc, sqrt};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub window: usize,
    pub slope: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 32,
            heads: 2,
            head_dim: 16,
            window: super::DEFAULT_WINDOW,
            slope: 0.2,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Width of every encoded vector (projection width = GAT output width).
    pub fn hidden(&self) -> usize {
        self.heads * self.head_dim
    }
}

/// Three unit vectors describing one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedExample {
    pub doc_id: String,
    pub h_lig: Vec<f64>,
    pub h_sen: Vec<f64>,
    pub h_avg: Vec<f64>,
}

/// Shared linear projection followed by two parallel GAT layers.
///
/// `params = [proj_w (hidden × embed) | proj_b (hidden) | lig GAT | sen GAT]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrieverModel {
    pub config: ModelConfig,
    pub params: Vec<f64>,
}

/// Forward state of one document, retained for backpropagation.
#[derive(Debug, Clone)]
pub struct DocForward {
    /// Projected node features, `n × hidden`.
    pub z: Vec<f64>,
    pub lig: GatCache,
    pub sen: GatCache,
    /// Mean-pooled, pre-normalization channel vectors.
    pub pooled_lig: Vec<f64>,
    pub pooled_sen: Vec<f64>,
    pub pooled_avg: Vec<f64>,
    pub h_lig: Vec<f64>,
    pub h_sen: Vec<f64>,
    pub h_avg: Vec<f64>,
}

impl DocForward {
    pub fn unit(&self, c: TrainedChannel) -> &[f64] {
        match c {
            TrainedChannel::Linguistic => &self.h_lig,
            TrainedChannel::Sentiment => &self.h_sen,
        }
    }
}

fn unit_or_zero(p: &[f64]) -> Vec<f64> {
    let n = norm(p);
    if n > 0.0 {
        p.iter().map(|v| v / n).collect()
    } else {
        vec![0.0; p.len()]
    }
}

/// Gradient through `u = p / |p|`.
fn normalize_backward(p: &[f64], u: &[f64], du: &[f64]) -> Vec<f64> {
    let n = norm(p);
    if n == 0.0 {
        return vec![0.0; p.len()];
    }
    let proj = dot(u, du);
    du.iter().zip(u).map(|(d, uu)| (d - uu * proj) / n).collect()
}

fn mean_rows(x: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d];
    for i in 0..n {
        for (a, b) in m.iter_mut().zip(&x[i * d..(i + 1) * d]) {
            *a += b;
        }
    }
    m.iter_mut().for_each(|v| *v /= n as f64);
    m
}

impl RetrieverModel {
    /// Xavier-uniform weights, zero bias.
    pub fn new(config: ModelConfig) -> Self {
        let h = config.hidden();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = Vec::with_capacity(Self::n_params_for(&config));
        let lim = sqrt(6.0 / (config.embed_dim + h) as f64);
        params.extend((0..h * config.embed_dim).map(|_| rng.random_range(-lim..lim)));
        params.extend(core::iter::repeat_n(0.0, h));
        for _ in 0..2 {
            let layer = Self::gat_shape(&config);
            let wl = sqrt(6.0 / (layer.d_in + layer.d_out) as f64);
            params.extend((0..layer.heads * layer.d_out * layer.d_in).map(|_| rng.random_range(-wl..wl)));
            let al = sqrt(6.0 / (2 * layer.d_out + 1) as f64);
            params.extend((0..2 * layer.heads * layer.d_out).map(|_| rng.random_range(-al..al)));
        }
        Self { config, params }
    }

    fn gat_shape(c: &ModelConfig) -> GatLayer {
        GatLayer::new(c.hidden(), c.head_dim, c.heads, c.slope)
    }

    pub fn gat(&self) -> GatLayer {
        Self::gat_shape(&self.config)
    }

    fn n_params_for(c: &ModelConfig) -> usize {
        let h = c.hidden();
        h * c.embed_dim + h + 2 * Self::gat_shape(c).n_params()
    }

    pub fn n_params(&self) -> usize {
        Self::n_params_for(&self.config)
    }

    /// Offsets of `[proj_w, proj_b, lig, sen, end]`.
    fn offsets(&self) -> [usize; 5] {
        let h = self.config.hidden();
        let pw = h * self.config.embed_dim;
        let g = self.gat().n_params();
        [0, pw, pw + h, pw + h + g, pw + h + 2 * g]
    }

    /// Content hash of the parameters; indexes record it to detect staleness.
    pub fn version(&self) -> String {
        let mut bytes = Vec::with_capacity(self.params.len() * 8 + 48);
        for v in [
            self.config.embed_dim as u64,
            self.config.heads as u64,
            self.config.head_dim as u64,
            self.config.window as u64,
            self.config.slope.to_bits(),
            self.config.seed,
        ] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        for p in &self.params {
            bytes.extend_from_slice(&p.to_bits().to_le_bytes());
        }
        format!("{:016x}", fnv1a(&bytes))
    }

    pub fn check(&self) -> Result<(), RetrieverError> {
        if self.params.len() != self.n_params() {
            return Err(RetrieverError::DimensionMismatch {
                expected: self.n_params(),
                got: self.params.len(),
            });
        }
        Ok(())
    }

    pub fn graph(&self, doc: &Document, provider: &dyn EmbeddingProvider) -> Result<TokenGraph, RetrieverError> {
        if provider.dim() != self.config.embed_dim {
            return Err(RetrieverError::DimensionMismatch {
                expected: self.config.embed_dim,
                got: provider.dim(),
            });
        }
        build_graph(doc, provider, self.config.window)
    }

    pub fn forward_graph(&self, graph: &TokenGraph) -> Result<DocForward, RetrieverError> {
        self.forward_with(&self.params, graph)
    }

    /// Forward pass with an explicit parameter vector (used by gradient checks).
    pub fn forward_with(&self, params: &[f64], graph: &TokenGraph) -> Result<DocForward, RetrieverError> {
        if graph.dim != self.config.embed_dim {
            return Err(RetrieverError::DimensionMismatch {
                expected: self.config.embed_dim,
                got: graph.dim,
            });
        }
        let [_, pb, lg, sg, end] = self.offsets();
        if params.len() != end {
            return Err(RetrieverError::DimensionMismatch { expected: end, got: params.len() });
        }
        let h = self.config.hidden();
        let n = graph.n_nodes();
        let (w, b) = (&params[..pb], &params[pb..lg]);
        let mut z = vec![0.0; n * h];
        for i in 0..n {
            let row = &mut z[i * h..(i + 1) * h];
            matvec(w, h, graph.node(i), row);
            row.iter_mut().zip(b).for_each(|(r, bb)| *r += bb);
        }
        let layer = self.gat();
        let lig = layer.forward(&params[lg..sg], &z, &graph.neighbors)?;
        let sen = layer.forward(&params[sg..end], &z, &graph.neighbors)?;
        let pooled_lig = mean_rows(&lig.out, n, h);
        let pooled_sen = mean_rows(&sen.out, n, h);
        let pooled_avg = mean_rows(&z, n, h);
        Ok(DocForward {
            h_lig: unit_or_zero(&pooled_lig),
            h_sen: unit_or_zero(&pooled_sen),
            h_avg: unit_or_zero(&pooled_avg),
            z,
            lig,
            sen,
            pooled_lig,
            pooled_sen,
            pooled_avg,
        })
    }

    /// Accumulates into `grad` the parameter gradient given upstream
    /// gradients on the two unit channel vectors.
    pub fn backward(
        &self,
        params: &[f64],
        graph: &TokenGraph,
        fwd: &DocForward,
        d_lig: &[f64],
        d_sen: &[f64],
        grad: &mut [f64],
    ) {
        let [_, pb, lg, sg, end] = self.offsets();
        let h = self.config.hidden();
        let n = graph.n_nodes();
        let layer = self.gat();
        let mut dz = vec![0.0; n * h];
        for (p, u, du, cache, range) in [
            (&fwd.pooled_lig, &fwd.h_lig, d_lig, &fwd.lig, lg..sg),
            (&fwd.pooled_sen, &fwd.h_sen, d_sen, &fwd.sen, sg..end),
        ] {
            if du.iter().all(|v| *v == 0.0) {
                continue;
            }
            let dp = normalize_backward(p, u, du);
            let per_node: Vec<f64> = dp.iter().map(|v| v / n as f64).collect();
            let mut dout = Vec::with_capacity(n * h);
            for _ in 0..n {
                dout.extend_from_slice(&per_node);
            }
            let dzc = layer.backward(&params[range.clone()], &fwd.z, &graph.neighbors, cache, &dout, &mut grad[range]);
            dz.iter_mut().zip(&dzc).for_each(|(a, b)| *a += b);
        }
        let (gw, gb) = grad[..lg].split_at_mut(pb);
        for i in 0..n {
            let dzi = &dz[i * h..(i + 1) * h];
            outer_acc(gw, dzi, graph.node(i));
            gb.iter_mut().zip(dzi).for_each(|(a, b)| *a += b);
        }
    }

    pub fn encode(&self, doc: &Document, provider: &dyn EmbeddingProvider) -> Result<EncodedExample, RetrieverError> {
        let g = self.graph(doc, provider)?;
        let f = self.forward_graph(&g)?;
        Ok(EncodedExample {
            doc_id: doc.id.clone(),
            h_lig: f.h_lig,
            h_sen: f.h_sen,
            h_avg: f.h_avg,
        })
    }
}
