//! Model size and per-inference FLOPs accounting.

use std::fmt::Write as _;

use crate::model_file::SavedModel;
use crate::network::NetworkModel;

pub const KB: f64 = 1024.0;

/// FLOPs of a `P x Q` matrix times a `Q`-vector: `P(2Q - 1)`, zero when `Q = 0`.
pub fn matvec_flops(p: u64, q: u64) -> u64 {
    if q == 0 {
        0
    } else {
        p * (2 * q - 1)
    }
}

/// Hidden-layer plus logit FLOPs for a network of the given shape.
pub fn flops_for_dims(h0: u64, m: u64, k: u64) -> u64 {
    matvec_flops(m, h0) + matvec_flops(k, m)
}

/// Per-inference (per-timestep) FLOPs of `model`.
pub fn flops(model: &NetworkModel) -> u64 {
    flops_for_dims(model.input_dim() as u64, model.hidden_dim() as u64, model.num_classes() as u64)
}

/// Lower bound for one timestep of the 4-layer LSTM baseline: four layers of
/// eight `320 x 320` products each.
pub fn reference_flops_bts() -> u64 {
    4 * 8 * matvec_flops(320, 320)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostReport {
    pub name: String,
    pub size_bytes: u64,
    pub flops: u64,
    /// Serialized size per file section; sums to `size_bytes`.
    pub components: Vec<(String, u64)>,
    pub layer_flops: Vec<(String, u64)>,
}

impl CostReport {
    pub fn size_kb(&self) -> f64 {
        self.size_bytes as f64 / KB
    }

    pub fn component(&self, name: &str) -> u64 {
        self.components.iter().filter(|(n, _)| n == name).map(|(_, b)| b).sum()
    }

    /// Bytes of parameters only (embeddings, hidden and output tensors,
    /// without their shape headers).
    pub fn parameter_bytes(model: &NetworkModel) -> u64 {
        let emb: u64 = model
            .embeddings()
            .iter()
            .map(|e| {
                let (v, d) = (e.rows() as u64, e.cols() as u64);
                if e.is_quantized() {
                    v * d + 4 * v
                } else {
                    4 * v * d
                }
            })
            .sum();
        let dense = model.hidden_weights().len()
            + model.hidden_bias().len()
            + model.output_weights().len()
            + model.output_bias().len();
        emb + 4 * dense as u64
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("model\tkind\tcomponent\tvalue\n");
        for (c, b) in &self.components {
            let _ = writeln!(s, "{}\tbytes\t{c}\t{b}", self.name);
        }
        let _ = writeln!(s, "{}\tbytes\ttotal\t{}", self.name, self.size_bytes);
        for (l, f) in &self.layer_flops {
            let _ = writeln!(s, "{}\tflops\t{l}\t{f}", self.name);
        }
        let _ = writeln!(s, "{}\tflops\ttotal\t{}", self.name, self.flops);
        s
    }

    pub fn summary(&self) -> String {
        format!(
            "{}: {} bytes ({:.1} KB), {} FLOPs per inference ({:.2}m)",
            self.name,
            self.size_bytes,
            self.size_kb(),
            self.flops,
            self.flops as f64 / 1e6
        )
    }
}

/// Exact size of the serialized model and its FLOPs.
pub fn model_size(model: &SavedModel, name: &str) -> CostReport {
    let components: Vec<(String, u64)> =
        model.sections().into_iter().map(|(s, b)| (s.name().to_string(), b.len() as u64)).collect();
    let size_bytes = components.iter().map(|(_, b)| b).sum();
    let net = &model.network;
    let (h0, m, k) = (net.input_dim() as u64, net.hidden_dim() as u64, net.num_classes() as u64);
    CostReport {
        name: name.to_string(),
        size_bytes,
        flops: flops(net),
        components,
        layer_flops: vec![("hidden".into(), matvec_flops(m, h0)), ("output".into(), matvec_flops(k, m))],
    }
}

/// Pipeline accounting: sizes add; FLOPs are per-model per-timestep costs
/// times the number of timesteps each model runs.
pub fn pipeline_report(name: &str, parts: &[(&CostReport, u64)]) -> CostReport {
    let mut components = Vec::new();
    let mut layer_flops = Vec::new();
    for (r, steps) in parts {
        components.extend(r.components.iter().map(|(c, b)| (format!("{}.{c}", r.name), *b)));
        layer_flops.push((format!("{} x{steps}", r.name), r.flops * steps));
    }
    CostReport {
        name: name.to_string(),
        size_bytes: parts.iter().map(|(r, _)| r.size_bytes).sum(),
        flops: parts.iter().map(|(r, s)| r.flops * s).sum(),
        components,
        layer_flops,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flops_formula() {
        assert_eq!(flops_for_dims(1, 1, 1), 2);
        assert_eq!(flops_for_dims(408, 320, 17), 271_663);
        assert_eq!(flops_for_dims(464, 320, 17), 307_503);
        assert_eq!(flops_for_dims(260, 320, 17), 176_943);
        assert_eq!(matvec_flops(320, 320), 204_480);
        assert_eq!(matvec_flops(5, 0), 0);
    }

    #[test]
    fn bts_reference() {
        assert_eq!(reference_flops_bts(), 6_543_360);
        let ratio = reference_flops_bts() as f64 / 271_663.0;
        assert!(ratio >= 24.0);
    }

    #[test]
    fn pipeline_sums() {
        let a = CostReport { name: "a".into(), size_bytes: 10, flops: 3, components: vec![], layer_flops: vec![] };
        let b = CostReport { name: "b".into(), size_bytes: 5, flops: 7, components: vec![], layer_flops: vec![] };
        let p = pipeline_report("p", &[(&a, 4), (&b, 2)]);
        assert_eq!(p.size_bytes, 15);
        assert_eq!(p.flops, 26);
    }
}
