//! The embedding network: grouped embedding lookup with pooling, one ReLU
//! hidden layer and a softmax output layer.
//!
//! Parameters are stored as `f32`; all arithmetic accumulates in `f64`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::features::{FeatureVector, GroupHits, GroupLayout, Pooling};
use crate::quantize::{quantize_row, QuantizedRow};

#[derive(Clone, Debug, PartialEq)]
pub enum EmbeddingStorage {
    Dense(Vec<f32>),
    Quantized(Vec<QuantizedRow>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    cols: usize,
    storage: EmbeddingStorage,
}

impl EmbeddingMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        EmbeddingMatrix { rows, cols, storage: EmbeddingStorage::Dense(vec![0.0; rows * cols]) }
    }

    pub fn from_dense(rows: usize, cols: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Format(format!(
                "embedding payload has {} values, expected {rows}x{cols}",
                values.len()
            )));
        }
        Ok(EmbeddingMatrix { rows, cols, storage: EmbeddingStorage::Dense(values) })
    }

    pub fn from_quantized(rows: usize, cols: usize, qrows: Vec<QuantizedRow>) -> Result<Self> {
        if qrows.len() != rows || qrows.iter().any(|r| r.codes.len() != cols) {
            return Err(Error::Format(format!("quantized payload does not match {rows}x{cols}")));
        }
        Ok(EmbeddingMatrix { rows, cols, storage: EmbeddingStorage::Quantized(qrows) })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn storage(&self) -> &EmbeddingStorage {
        &self.storage
    }

    pub fn is_quantized(&self) -> bool {
        matches!(self.storage, EmbeddingStorage::Quantized(_))
    }

    /// Row `id` as f32 (dequantized on the fly when quantized).
    pub fn row(&self, id: usize) -> Vec<f32> {
        let mut out = vec![0.0f64; self.cols];
        self.add_row(id, 1.0, &mut out);
        out.into_iter().map(|v| v as f32).collect()
    }

    #[inline]
    fn add_row(&self, id: usize, weight: f64, out: &mut [f64]) {
        match &self.storage {
            EmbeddingStorage::Dense(v) => {
                let row = &v[id * self.cols..(id + 1) * self.cols];
                for (o, &x) in out.iter_mut().zip(row) {
                    *o += weight * f64::from(x);
                }
            }
            EmbeddingStorage::Quantized(rows) => {
                let q = &rows[id];
                for (j, o) in out.iter_mut().enumerate() {
                    *o += weight * q.value(j);
                }
            }
        }
    }

    pub fn quantized(&self) -> Result<Self> {
        match &self.storage {
            EmbeddingStorage::Quantized(_) => Ok(self.clone()),
            EmbeddingStorage::Dense(v) => {
                let rows = v.chunks(self.cols.max(1)).take(self.rows).map(quantize_row).collect::<Result<Vec<_>>>()?;
                EmbeddingMatrix::from_quantized(self.rows, self.cols, rows)
            }
        }
    }

    pub fn dequantized(&self) -> Self {
        match &self.storage {
            EmbeddingStorage::Dense(_) => self.clone(),
            EmbeddingStorage::Quantized(rows) => EmbeddingMatrix {
                rows: self.rows,
                cols: self.cols,
                storage: EmbeddingStorage::Dense(rows.iter().flat_map(|r| r.dequantize()).collect()),
            },
        }
    }
}

/// A complete network. Hidden weights are `M x H0` row-major; output weights
/// are `K x M` row-major (one `beta_y` per class).
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkModel {
    groups: Vec<GroupLayout>,
    embeddings: Vec<EmbeddingMatrix>,
    hidden_dim: usize,
    hidden_weights: Vec<f32>,
    hidden_bias: Vec<f32>,
    output_weights: Vec<f32>,
    output_bias: Vec<f32>,
    labels: Vec<String>,
    offsets: Vec<usize>,
    canonical: Vec<usize>,
    input_dim: usize,
}

/// Raw parameter tensors, used when loading a model.
pub struct NetworkParts {
    pub groups: Vec<GroupLayout>,
    pub embeddings: Vec<EmbeddingMatrix>,
    pub hidden_dim: usize,
    pub hidden_weights: Vec<f32>,
    pub hidden_bias: Vec<f32>,
    pub output_weights: Vec<f32>,
    pub output_bias: Vec<f32>,
    pub labels: Vec<String>,
}

impl NetworkModel {
    /// All-zero model with the given layout.
    pub fn new(groups: Vec<GroupLayout>, hidden_dim: usize, labels: Vec<String>) -> Result<Self> {
        let embeddings =
            groups.iter().map(|g| EmbeddingMatrix::zeros(g.group.vocab_size as usize, g.group.embedding_dim)).collect();
        let input_dim: usize = groups.iter().map(GroupLayout::width).sum();
        let k = labels.len();
        NetworkModel::from_parts(NetworkParts {
            groups,
            embeddings,
            hidden_dim,
            hidden_weights: vec![0.0; hidden_dim * input_dim],
            hidden_bias: vec![0.0; hidden_dim],
            output_weights: vec![0.0; k * hidden_dim],
            output_bias: vec![0.0; k],
            labels,
        })
    }

    pub fn from_parts(p: NetworkParts) -> Result<Self> {
        if p.groups.len() != p.embeddings.len() {
            return Err(Error::Format("group and embedding counts differ".into()));
        }
        for (g, e) in p.groups.iter().zip(&p.embeddings) {
            if g.group.vocab_size == 0 || g.group.embedding_dim == 0 {
                return Err(Error::config(format!("group `{}` has an empty vocabulary or dimension", g.group.name)));
            }
            if e.rows != g.group.vocab_size as usize || e.cols != g.group.embedding_dim {
                return Err(Error::Format(format!("embedding shape mismatch for group `{}`", g.group.name)));
            }
        }
        let mut names: Vec<&str> = p.groups.iter().map(|g| g.group.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("duplicate group names"));
        }
        let input_dim: usize = p.groups.iter().map(GroupLayout::width).sum();
        let (m, k) = (p.hidden_dim, p.labels.len());
        if p.hidden_weights.len() != m * input_dim
            || p.hidden_bias.len() != m
            || p.output_weights.len() != k * m
            || p.output_bias.len() != k
        {
            return Err(Error::Format("dense tensor shapes do not match the layout".into()));
        }
        let offsets = p
            .groups
            .iter()
            .scan(0, |acc, g| {
                let o = *acc;
                *acc += g.width();
                Some(o)
            })
            .collect();
        let mut canonical: Vec<usize> = (0..p.groups.len()).collect();
        canonical.sort_by(|&a, &b| p.groups[a].group.name.cmp(&p.groups[b].group.name));
        Ok(NetworkModel {
            groups: p.groups,
            embeddings: p.embeddings,
            hidden_dim: m,
            hidden_weights: p.hidden_weights,
            hidden_bias: p.hidden_bias,
            output_weights: p.output_weights,
            output_bias: p.output_bias,
            labels: p.labels,
            offsets,
            canonical,
            input_dim,
        })
    }

    /// Random initialization: uniform embeddings, Glorot-style dense layers
    /// and a small positive hidden bias.
    pub fn init_random(&mut self, rng: &mut impl Rng) {
        for e in &mut self.embeddings {
            let a = (1.0 / e.cols as f32).sqrt();
            if let EmbeddingStorage::Dense(v) = &mut e.storage {
                v.iter_mut().for_each(|x| *x = rng.gen_range(-a..=a));
            }
        }
        let a1 = (6.0 / (self.input_dim + self.hidden_dim).max(1) as f32).sqrt();
        self.hidden_weights.iter_mut().for_each(|x| *x = rng.gen_range(-a1..=a1));
        self.hidden_bias.iter_mut().for_each(|x| *x = 0.1);
        let a2 = (6.0 / (self.hidden_dim + self.labels.len()).max(1) as f32).sqrt();
        self.output_weights.iter_mut().for_each(|x| *x = rng.gen_range(-a2..=a2));
        self.output_bias.iter_mut().for_each(|x| *x = 0.0);
    }

    pub fn groups(&self) -> &[GroupLayout] {
        &self.groups
    }

    pub fn embeddings(&self) -> &[EmbeddingMatrix] {
        &self.embeddings
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    /// Width of the embedding layer output `h0`.
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn hidden_weights(&self) -> &[f32] {
        &self.hidden_weights
    }

    pub fn hidden_bias(&self) -> &[f32] {
        &self.hidden_bias
    }

    pub fn output_weights(&self) -> &[f32] {
        &self.output_weights
    }

    pub fn output_bias(&self) -> &[f32] {
        &self.output_bias
    }

    pub fn is_quantized(&self) -> bool {
        self.embeddings.iter().any(EmbeddingMatrix::is_quantized)
    }

    /// Copy with every embedding matrix quantized to 8 bits.
    pub fn quantized(&self) -> Result<Self> {
        let mut out = self.clone();
        out.embeddings = self.embeddings.iter().map(EmbeddingMatrix::quantized).collect::<Result<_>>()?;
        Ok(out)
    }

    /// Copy with dense (dequantized) embeddings.
    pub fn dequantized(&self) -> Self {
        let mut out = self.clone();
        out.embeddings = self.embeddings.iter().map(EmbeddingMatrix::dequantized).collect();
        out
    }

    /// Mutable views of every trainable tensor, in the order
    /// embeddings (per group), hidden weights, hidden bias, output weights,
    /// output bias.
    pub fn tensors_mut(&mut self) -> Result<Vec<&mut [f32]>> {
        let mut out: Vec<&mut [f32]> = Vec::with_capacity(self.embeddings.len() + 4);
        for e in &mut self.embeddings {
            match &mut e.storage {
                EmbeddingStorage::Dense(v) => out.push(v.as_mut_slice()),
                EmbeddingStorage::Quantized(_) => return Err(Error::config("quantized models cannot be trained")),
            }
        }
        out.push(&mut self.hidden_weights);
        out.push(&mut self.hidden_bias);
        out.push(&mut self.output_weights);
        out.push(&mut self.output_bias);
        Ok(out)
    }

    /// Shapes (lengths) matching [`NetworkModel::tensors_mut`].
    pub fn tensor_lens(&self) -> Vec<usize> {
        let mut lens: Vec<usize> = self.embeddings.iter().map(|e| e.rows * e.cols).collect();
        lens.extend([
            self.hidden_weights.len(),
            self.hidden_bias.len(),
            self.output_weights.len(),
            self.output_bias.len(),
        ]);
        lens
    }

    pub fn parameter_count(&self) -> usize {
        self.tensor_lens().iter().sum()
    }

    fn check(&self, fv: &FeatureVector) -> Result<()> {
        if fv.groups.len() != self.groups.len() {
            return Err(Error::internal(format!(
                "feature vector has {} groups, model has {}",
                fv.groups.len(),
                self.groups.len()
            )));
        }
        for (hits, layout) in fv.groups.iter().zip(&self.groups) {
            let v = layout.group.vocab_size;
            let ok_ids = |ids: &[u32]| ids.iter().all(|&id| id < v);
            let ok = match (hits, layout.group.pooling) {
                (GroupHits::Slots(slots), Pooling::Concat) => {
                    slots.len() == layout.slots && slots.iter().all(|s| !s.is_empty() && ok_ids(s))
                }
                (GroupHits::Bag(ids), Pooling::Average | Pooling::Sum) => ok_ids(ids),
                _ => false,
            };
            if !ok {
                return Err(Error::internal(format!("malformed features for group `{}`", layout.group.name)));
            }
        }
        Ok(())
    }

    /// The embedding layer output `h0`.
    pub fn embed(&self, fv: &FeatureVector) -> Result<Vec<f64>> {
        self.check(fv)?;
        let mut h0 = vec![0.0f64; self.input_dim];
        for (g, hits) in fv.groups.iter().enumerate() {
            let d = self.groups[g].group.embedding_dim;
            let base = self.offsets[g];
            let e = &self.embeddings[g];
            match hits {
                GroupHits::Slots(slots) => {
                    for (s, ids) in slots.iter().enumerate() {
                        let w = 1.0 / ids.len() as f64;
                        let out = &mut h0[base + s * d..base + (s + 1) * d];
                        for &id in ids {
                            e.add_row(id as usize, w, out);
                        }
                    }
                }
                GroupHits::Bag(ids) => {
                    let w = match self.groups[g].group.pooling {
                        Pooling::Average if !ids.is_empty() => 1.0 / ids.len() as f64,
                        _ => 1.0,
                    };
                    let out = &mut h0[base..base + d];
                    for &id in ids {
                        e.add_row(id as usize, w, out);
                    }
                }
            }
        }
        Ok(h0)
    }

    /// Hidden pre-activations. Each group's columns are summed separately and
    /// the partial sums are added in name order, so the result does not depend
    /// on the order in which groups were declared.
    fn hidden_pre(&self, h0: &[f64]) -> Vec<f64> {
        let n = self.input_dim;
        (0..self.hidden_dim)
            .map(|m| {
                let row = &self.hidden_weights[m * n..(m + 1) * n];
                let mut acc = f64::from(self.hidden_bias[m]);
                for &g in &self.canonical {
                    let (a, b) = (self.offsets[g], self.offsets[g] + self.groups[g].width());
                    let partial: f64 = row[a..b].iter().zip(&h0[a..b]).map(|(&w, &x)| f64::from(w) * x).sum();
                    acc += partial;
                }
                acc
            })
            .collect()
    }

    fn logits(&self, h1: &[f64]) -> Vec<f64> {
        let m = self.hidden_dim;
        (0..self.labels.len())
            .map(|k| {
                let row = &self.output_weights[k * m..(k + 1) * m];
                f64::from(self.output_bias[k]) + row.iter().zip(h1).map(|(&w, &h)| f64::from(w) * h).sum::<f64>()
            })
            .collect()
    }

    /// Unnormalized class scores `beta_y . h1 + b_y`.
    pub fn scores(&self, fv: &FeatureVector) -> Result<Vec<f64>> {
        let h0 = self.embed(fv)?;
        let h1: Vec<f64> = self.hidden_pre(&h0).into_iter().map(|x| x.max(0.0)).collect();
        Ok(self.logits(&h1))
    }

    /// Class probabilities.
    pub fn forward(&self, fv: &FeatureVector) -> Result<Vec<f64>> {
        Ok(softmax(&self.scores(fv)?))
    }

    /// Most probable label index and its probability; ties go to the first label.
    pub fn predict(&self, fv: &FeatureVector) -> Result<(usize, f64)> {
        let probs = self.forward(fv)?;
        argmax(&probs).map(|i| (i, probs[i])).ok_or_else(|| Error::config("model has no labels"))
    }

    /// Cross-entropy of one example; adds its gradient into `grads` when given.
    ///
    /// `dropout` is an optional multiplicative mask over `h0` (already scaled
    /// by `1/(1-p)` for kept units).
    pub fn example_loss(
        &self,
        fv: &FeatureVector,
        gold: usize,
        dropout: Option<&[f64]>,
        grads: Option<&mut Gradients>,
    ) -> Result<f64> {
        if gold >= self.labels.len() {
            return Err(Error::data(format!("gold label #{gold} not in the label table")));
        }
        let mut h0 = self.embed(fv)?;
        if let Some(mask) = dropout {
            h0.iter_mut().zip(mask).for_each(|(x, &m)| *x *= m);
        }
        let pre = self.hidden_pre(&h0);
        let h1: Vec<f64> = pre.iter().map(|&x| x.max(0.0)).collect();
        let z = self.logits(&h1);
        let lse = log_sum_exp(&z);
        let loss = lse - z[gold];
        let Some(grads) = grads else { return Ok(loss) };

        let (m, n, k) = (self.hidden_dim, self.input_dim, self.labels.len());
        let ne = self.embeddings.len();
        let dz: Vec<f64> =
            z.iter().enumerate().map(|(c, &zc)| (zc - lse).exp() - if c == gold { 1.0 } else { 0.0 }).collect();
        let mut dh1 = vec![0.0f64; m];
        {
            let (dw2, db2) = grads.tensors[ne + 2..].split_at_mut(1);
            for c in 0..k {
                db2[0][c] += dz[c];
                let row = &self.output_weights[c * m..(c + 1) * m];
                let grow = &mut dw2[0][c * m..(c + 1) * m];
                for j in 0..m {
                    grow[j] += dz[c] * h1[j];
                    dh1[j] += dz[c] * f64::from(row[j]);
                }
            }
        }
        let dpre: Vec<f64> = dh1.iter().zip(&pre).map(|(&d, &p)| if p > 0.0 { d } else { 0.0 }).collect();
        let mut dh0 = vec![0.0f64; n];
        {
            let (head, tail) = grads.tensors.split_at_mut(ne + 1);
            let dw1 = &mut head[ne];
            let db1 = &mut tail[0];
            for j in 0..m {
                if dpre[j] == 0.0 {
                    continue;
                }
                db1[j] += dpre[j];
                let row = &self.hidden_weights[j * n..(j + 1) * n];
                let grow = &mut dw1[j * n..(j + 1) * n];
                for c in 0..n {
                    grow[c] += dpre[j] * h0[c];
                    dh0[c] += dpre[j] * f64::from(row[c]);
                }
            }
        }
        if let Some(mask) = dropout {
            dh0.iter_mut().zip(mask).for_each(|(x, &mk)| *x *= mk);
        }
        for (g, hits) in fv.groups.iter().enumerate() {
            let d = self.groups[g].group.embedding_dim;
            let base = self.offsets[g];
            let de = &mut grads.tensors[g];
            let mut scatter = |id: u32, w: f64, src: &[f64]| {
                let row = &mut de[id as usize * d..(id as usize + 1) * d];
                row.iter_mut().zip(src).for_each(|(r, &s)| *r += w * s);
            };
            match hits {
                GroupHits::Slots(slots) => {
                    for (s, ids) in slots.iter().enumerate() {
                        let w = 1.0 / ids.len() as f64;
                        let src = &dh0[base + s * d..base + (s + 1) * d];
                        ids.iter().for_each(|&id| scatter(id, w, src));
                    }
                }
                GroupHits::Bag(ids) => {
                    let w = match self.groups[g].group.pooling {
                        Pooling::Average if !ids.is_empty() => 1.0 / ids.len() as f64,
                        _ => 1.0,
                    };
                    let src = &dh0[base..base + d];
                    ids.iter().for_each(|&id| scatter(id, w, src));
                }
            }
        }
        Ok(loss)
    }

    /// Squared L2 norm of the regularized tensors: hidden weights, hidden
    /// bias and output bias.
    pub fn l2_norm_sq(&self) -> f64 {
        [&self.hidden_weights[..], &self.hidden_bias[..], &self.output_bias[..]]
            .iter()
            .flat_map(|t| t.iter())
            .map(|&x| f64::from(x) * f64::from(x))
            .sum()
    }

    /// Indices (into [`NetworkModel::tensors_mut`]) of the L2-regularized tensors.
    pub fn regularized_tensors(&self) -> [usize; 3] {
        let ne = self.embeddings.len();
        [ne, ne + 1, ne + 3]
    }

    /// Mean cross-entropy over `batch` plus `l2 * (|W1|^2 + |b1|^2 + |b2|^2)`.
    pub fn loss(&self, batch: &[(FeatureVector, usize)], l2: f64) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::data("loss over an empty batch"));
        }
        let mut total = 0.0;
        for (fv, gold) in batch {
            total += self.example_loss(fv, *gold, None, None)?;
        }
        Ok(total / batch.len() as f64 + l2 * self.l2_norm_sq())
    }

    /// Gradient of [`NetworkModel::loss`].
    pub fn loss_gradient(&self, batch: &[(FeatureVector, usize)], l2: f64) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::data("loss over an empty batch"));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut total = 0.0;
        for (fv, gold) in batch {
            total += self.example_loss(fv, *gold, None, Some(&mut grads))?;
        }
        let inv = 1.0 / batch.len() as f64;
        grads.scale(inv);
        self.add_l2_gradient(&mut grads, l2);
        Ok((total * inv + l2 * self.l2_norm_sq(), grads))
    }

    pub fn add_l2_gradient(&self, grads: &mut Gradients, l2: f64) {
        if l2 == 0.0 {
            return;
        }
        let ne = self.embeddings.len();
        let sources: [(usize, &[f32]); 3] =
            [(ne, &self.hidden_weights), (ne + 1, &self.hidden_bias), (ne + 3, &self.output_bias)];
        for (t, src) in sources {
            grads.tensors[t].iter_mut().zip(src).for_each(|(g, &w)| *g += 2.0 * l2 * f64::from(w));
        }
    }
}

/// Gradient buffers laid out like [`NetworkModel::tensors_mut`].
#[derive(Clone, Debug)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &NetworkModel) -> Self {
        Gradients { tensors: model.tensor_lens().into_iter().map(|n| vec![0.0; n]).collect() }
    }

    pub fn clear(&mut self) {
        self.tensors.iter_mut().for_each(|t| t.iter_mut().for_each(|x| *x = 0.0));
    }

    pub fn scale(&mut self, s: f64) {
        self.tensors.iter_mut().for_each(|t| t.iter_mut().for_each(|x| *x *= s));
    }
}

pub fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + z.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// Softmax with max subtraction.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest value, first one on ties.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}
