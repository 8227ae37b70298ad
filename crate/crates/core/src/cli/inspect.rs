use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::model::{expected_tags, f32_megabytes, read_weight_header, WeightHeader};

#[derive(Debug, Clone, PartialEq)]
pub struct InspectReport {
    pub header: WeightHeader,
    pub total_params: usize,
    pub memory_params: usize,
    /// Memory parameters as a fraction of the total.
    pub memory_share: f64,
    pub f32_megabytes: f64,
    pub text: String,
}

/// Reads only the header of a weight file and summarises it.
pub fn inspect(path: &Path) -> Result<InspectReport> {
    let header = read_weight_header(path)?;
    let total = header.trainable_params();
    let memory = header.memory_params();
    let share = if total == 0 { 0.0 } else { memory as f64 / total as f64 };
    let cfg = &header.config;
    let mut text = String::new();
    let tags: String = expected_tags(cfg).iter().map(|t| t.to_string()).collect();
    writeln!(text, "model: {}  layers: {}", cfg.kind, tags).unwrap();
    writeln!(text, "memory: {} N={}", cfg.memory_variant, cfg.memory_n).unwrap();
    writeln!(text, "{:<40} {:>12} {:>12}", "tensor", "shape", "params").unwrap();
    let mut per_layer: BTreeMap<String, usize> = BTreeMap::new();
    for t in &header.tensors {
        writeln!(text, "{:<40} {:>12} {:>12}", t.name, format!("{}x{}", t.rows, t.cols), t.len()).unwrap();
        if t.is_trainable() {
            let group: Vec<&str> = t.name.split('.').collect();
            let key = match group.as_slice() {
                ["layers", i, kind, ..] => format!("layers.{i:0>3} ({kind})"),
                [first, ..] => first.to_string(),
                [] => String::new(),
            };
            *per_layer.entry(key).or_default() += t.len();
        }
    }
    writeln!(text, "per-layer totals:").unwrap();
    for (k, v) in &per_layer {
        writeln!(text, "  {k:<28} {v:>12}").unwrap();
    }
    writeln!(text, "total parameters: {total}").unwrap();
    writeln!(text, "memory parameters: {memory} ({:.4}% of total)", 100.0 * share).unwrap();
    writeln!(text, "size as f32: {:.2} MB", f32_megabytes(total)).unwrap();
    Ok(InspectReport {
        total_params: total,
        memory_params: memory,
        memory_share: share,
        f32_megabytes: f32_megabytes(total),
        header,
        text,
    })
}
