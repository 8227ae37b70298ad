use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::layers::MemoryKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// DFSMN blocks with one attention layer after every `san_insert_every` blocks.
    DfsmnSan,
    Dfsmn,
    San,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::DfsmnSan => "dfsmn_san",
            ModelKind::Dfsmn => "dfsmn",
            ModelKind::San => "san",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "dfsmn_san" => Ok(ModelKind::DfsmnSan),
            "dfsmn" => Ok(ModelKind::Dfsmn),
            "san" => Ok(ModelKind::San),
            other => Err(format!("unknown model kind `{other}` (dfsmn_san|dfsmn|san)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub input_dim: usize,
    /// Attention width `d`.
    pub model_dim: usize,
    pub heads: usize,
    pub dfsmn_blocks_total: usize,
    pub san_insert_every: usize,
    pub san_layers_pure: usize,
    pub lookback_order: usize,
    pub lookahead_order: usize,
    pub hidden_units: usize,
    pub projection_dim: usize,
    pub memory_variant: MemoryKind,
    pub memory_n: usize,
    /// Output alphabet including the blank.
    pub output_labels: usize,
    pub d_ff: usize,
    pub dropout: f64,
    /// Whether attention layers carry the position-wise feed-forward sublayer.
    pub ffn_in_san: bool,
    /// DFSMN-SAN only: add positional encoding to each attention layer's input.
    pub pe_before_san: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::toy()
    }
}

impl ModelConfig {
    /// Small DFSMN-SAN used for desk-scale runs.
    pub fn toy() -> Self {
        Self {
            kind: ModelKind::DfsmnSan,
            input_dim: 16,
            model_dim: 32,
            heads: 4,
            dfsmn_blocks_total: 4,
            san_insert_every: 4,
            san_layers_pure: 2,
            lookback_order: 4,
            lookahead_order: 4,
            hidden_units: 64,
            projection_dim: 32,
            memory_variant: MemoryKind::None,
            memory_n: 0,
            output_labels: 5,
            d_ff: 128,
            dropout: 0.1,
            ffn_in_san: true,
            pe_before_san: true,
        }
    }

    /// Full-size DFSMN-SAN: 120-dim filterbanks stacked ×8, 30 DFSMN blocks of
    /// 1024 hidden / 512 projection units, one 8-head attention layer after
    /// every 10 blocks, 1434 output symbols. The inserted attention layers
    /// carry no feed-forward sublayer.
    pub fn full_dfsmn_san() -> Self {
        Self {
            kind: ModelKind::DfsmnSan,
            input_dim: 960,
            model_dim: 512,
            heads: 8,
            dfsmn_blocks_total: 30,
            san_insert_every: 10,
            san_layers_pure: 10,
            lookback_order: 10,
            lookahead_order: 10,
            hidden_units: 1024,
            projection_dim: 512,
            memory_variant: MemoryKind::None,
            memory_n: 0,
            output_labels: 1434,
            d_ff: 2048,
            dropout: 0.1,
            ffn_in_san: false,
            pe_before_san: true,
        }
    }

    pub fn full_dfsmn() -> Self {
        Self {
            kind: ModelKind::Dfsmn,
            ..Self::full_dfsmn_san()
        }
    }

    pub fn full_san() -> Self {
        Self {
            kind: ModelKind::San,
            ffn_in_san: true,
            ..Self::full_dfsmn_san()
        }
    }

    pub fn with_memory(mut self, kind: MemoryKind, n: usize) -> Self {
        self.memory_variant = kind;
        self.memory_n = n;
        self
    }

    pub fn has_attention(&self) -> bool {
        self.kind != ModelKind::Dfsmn
    }

    pub fn num_san_layers(&self) -> usize {
        match self.kind {
            ModelKind::DfsmnSan => self.dfsmn_blocks_total / self.san_insert_every.max(1),
            ModelKind::Dfsmn => 0,
            ModelKind::San => self.san_layers_pure,
        }
    }

    pub fn num_dfsmn_blocks(&self) -> usize {
        match self.kind {
            ModelKind::San => 0,
            _ => self.dfsmn_blocks_total,
        }
    }

    /// Width of the representation fed to the output projection.
    pub fn top_dim(&self) -> usize {
        match self.kind {
            ModelKind::San => self.model_dim,
            _ => self.projection_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: String| Err(Error::config(format!("model.{key}"), reason));
        if self.input_dim == 0 {
            return bad("input_dim", "must be positive".into());
        }
        if self.output_labels < 2 {
            return bad("output_labels", "needs the blank plus at least one label".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout", format!("{} is outside [0, 1)", self.dropout));
        }
        if self.kind != ModelKind::San {
            if self.dfsmn_blocks_total == 0 {
                return bad("dfsmn_blocks_total", "must be positive".into());
            }
            if self.hidden_units == 0 || self.projection_dim == 0 {
                return bad("hidden_units", "hidden and projection widths must be positive".into());
            }
        }
        if self.has_attention() {
            if self.model_dim == 0 || self.heads == 0 {
                return bad("heads", "model_dim and heads must be positive".into());
            }
            if self.model_dim % self.heads != 0 {
                return bad("heads", format!("model_dim {} is not divisible by {} heads", self.model_dim, self.heads));
            }
            if self.ffn_in_san && self.d_ff == 0 {
                return bad("d_ff", "must be positive when ffn_in_san is set".into());
            }
        }
        match self.kind {
            ModelKind::DfsmnSan => {
                if self.san_insert_every == 0 || self.dfsmn_blocks_total % self.san_insert_every != 0 {
                    return bad(
                        "san_insert_every",
                        format!("{} does not divide dfsmn_blocks_total {}", self.san_insert_every, self.dfsmn_blocks_total),
                    );
                }
                if self.model_dim != self.projection_dim {
                    return bad(
                        "model_dim",
                        format!("{} must equal projection_dim {}", self.model_dim, self.projection_dim),
                    );
                }
            }
            ModelKind::San if self.san_layers_pure == 0 => {
                return bad("san_layers_pure", "a SAN-only model needs at least one layer".into());
            }
            _ => {}
        }
        Ok(())
    }

    /// Every field as `(key, value)` in a fixed order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("kind", self.kind.to_string()),
            ("input_dim", self.input_dim.to_string()),
            ("model_dim", self.model_dim.to_string()),
            ("heads", self.heads.to_string()),
            ("dfsmn_blocks_total", self.dfsmn_blocks_total.to_string()),
            ("san_insert_every", self.san_insert_every.to_string()),
            ("san_layers_pure", self.san_layers_pure.to_string()),
            ("lookback_order", self.lookback_order.to_string()),
            ("lookahead_order", self.lookahead_order.to_string()),
            ("hidden_units", self.hidden_units.to_string()),
            ("projection_dim", self.projection_dim.to_string()),
            ("memory_variant", self.memory_variant.to_string()),
            ("memory_n", self.memory_n.to_string()),
            ("output_labels", self.output_labels.to_string()),
            ("d_ff", self.d_ff.to_string()),
            ("dropout", format!("{:?}", self.dropout)),
            ("ffn_in_san", self.ffn_in_san.to_string()),
            ("pe_before_san", self.pe_before_san.to_string()),
        ]
    }

    /// Sets one field by key (without the `model.` prefix). `n1`/`n2` are
    /// accepted as aliases of the FIR orders.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
        where
            T::Err: fmt::Display,
        {
            value
                .parse::<T>()
                .map_err(|e| Error::config(format!("model.{key}"), format!("cannot parse `{value}`: {e}")))
        }
        match key {
            "kind" => self.kind = parse(key, value)?,
            "input_dim" => self.input_dim = parse(key, value)?,
            "model_dim" => self.model_dim = parse(key, value)?,
            "heads" => self.heads = parse(key, value)?,
            "dfsmn_blocks_total" => self.dfsmn_blocks_total = parse(key, value)?,
            "san_insert_every" => self.san_insert_every = parse(key, value)?,
            "san_layers_pure" => self.san_layers_pure = parse(key, value)?,
            "lookback_order" | "n1" => self.lookback_order = parse(key, value)?,
            "lookahead_order" | "n2" => self.lookahead_order = parse(key, value)?,
            "hidden_units" => self.hidden_units = parse(key, value)?,
            "projection_dim" => self.projection_dim = parse(key, value)?,
            "memory_variant" => self.memory_variant = parse(key, value)?,
            "memory_n" => self.memory_n = parse(key, value)?,
            "output_labels" => self.output_labels = parse(key, value)?,
            "d_ff" => self.d_ff = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "ffn_in_san" => self.ffn_in_san = parse(key, value)?,
            "pe_before_san" => self.pe_before_san = parse(key, value)?,
            _ => return Err(Error::config(format!("model.{key}"), "unknown key")),
        }
        Ok(())
    }
}

fn dfsmn_block_params(input: usize, cfg: &ModelConfig) -> usize {
    let (h, p) = (cfg.hidden_units, cfg.projection_dim);
    input * h + h + h * p + (cfg.lookback_order + 1 + cfg.lookahead_order) * p
}

fn san_layer_params(cfg: &ModelConfig) -> usize {
    let d = cfg.model_dim;
    let ffn = if cfg.ffn_in_san {
        2 * d * cfg.d_ff + cfg.d_ff + d + 2 * d
    } else {
        0
    };
    4 * d * d + 2 * d + ffn + cfg.memory_variant.param_count(cfg.memory_n, d)
}

/// Memory parameters contributed by all attention layers together.
pub fn memory_param_count(cfg: &ModelConfig) -> usize {
    cfg.num_san_layers() * cfg.memory_variant.param_count(cfg.memory_n, cfg.model_dim)
}

/// Exact trainable-parameter total of the model `cfg` builds.
pub fn param_count(cfg: &ModelConfig) -> usize {
    let output = cfg.top_dim() * cfg.output_labels + cfg.output_labels;
    let san = cfg.num_san_layers() * san_layer_params(cfg);
    let body = match cfg.kind {
        ModelKind::San => cfg.input_dim * cfg.model_dim + cfg.model_dim + san,
        _ => {
            let first = dfsmn_block_params(cfg.input_dim, cfg);
            let rest = (cfg.dfsmn_blocks_total.saturating_sub(1)) * dfsmn_block_params(cfg.projection_dim, cfg);
            first + rest + san
        }
    };
    body + output
}

/// Size of the trainable weights stored as 32-bit floats, in units of 10⁶ bytes.
pub fn f32_megabytes(params: usize) -> f64 {
    params as f64 * 4.0 / 1e6
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_size_counts_by_hand() {
        // first block 960·1024 + 1024 + 1024·512 + 21·512
        let first = 960 * 1024 + 1024 + 1024 * 512 + 21 * 512;
        let rest = 1024 * 512 + 1024 + 1024 * 512 + 21 * 512;
        let attn = 4 * 512 * 512 + 2 * 512;
        let out = 512 * 1434 + 1434;
        assert_eq!(first, 1_519_104);
        assert_eq!(rest, 1_060_352);
        assert_eq!(param_count(&ModelConfig::full_dfsmn_san()), first + 29 * rest + 3 * attn + out);
        assert_eq!(param_count(&ModelConfig::full_dfsmn()), first + 29 * rest + out);
    }

    #[test]
    fn memory_increments_are_closed_form() {
        let base = ModelConfig::full_dfsmn_san();
        let none = param_count(&base);
        let kv = param_count(&base.clone().with_memory(MemoryKind::KeyValue, 128));
        let ie = param_count(&base.clone().with_memory(MemoryKind::InputEmbedding, 128));
        assert_eq!(ie - none, 3 * 128 * 512);
        assert_eq!(kv - none, 3 * 2 * 128 * 512);
        assert_eq!(param_count(&base.clone().with_memory(MemoryKind::KeyValue, 0)), none);
    }

    /// The size column of the reference results table (143/131/141, then
    /// 144/145/146 and 143/144/145 for the memory variants at N = 64/128/256)
    /// tracks 32-bit megabytes of these configurations, anchored at 143.
    #[test]
    fn reference_table_sizes_read_as_f32_megabytes() {
        let base = ModelConfig::full_dfsmn_san();
        let mb = |cfg: &ModelConfig| f32_megabytes(param_count(cfg));
        assert!((mb(&base) - 143.0).abs() / 143.0 < 0.02);
        assert!((mb(&ModelConfig::full_dfsmn()) - 131.0).abs() / 131.0 < 0.02);
        assert!((mb(&ModelConfig::full_san()) - 141.0).abs() / 141.0 < 0.10);
        for (n, kv, ie) in [(64, 144.0, 143.0), (128, 145.0, 144.0), (256, 146.0, 145.0)] {
            let dk = mb(&base.clone().with_memory(MemoryKind::KeyValue, n)) - mb(&base);
            let di = mb(&base.clone().with_memory(MemoryKind::InputEmbedding, n)) - mb(&base);
            assert_eq!((143.0 + dk).round(), kv);
            assert_eq!((143.0 + di).round(), ie);
        }
    }

    #[test]
    fn key_value_round_trip() {
        let cfg = ModelConfig::full_san().with_memory(MemoryKind::InputEmbedding, 7);
        let mut back = ModelConfig::toy();
        for (k, v) in cfg.to_pairs() {
            back.set(k, &v).unwrap();
        }
        assert_eq!(back, cfg);
        assert!(matches!(back.set("bogus", "1"), Err(Error::Config { key, .. }) if key == "model.bogus"));
    }

    #[test]
    fn invariants_are_enforced() {
        let mut c = ModelConfig::toy();
        c.san_insert_every = 3;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::toy();
        c.heads = 5;
        assert!(c.validate().is_err());
        let mut c = ModelConfig { kind: ModelKind::San, ..ModelConfig::toy() };
        c.san_layers_pure = 0;
        assert!(c.validate().is_err());
        ModelConfig::full_dfsmn_san().validate().unwrap();
    }
}
