//! Layer stacks (DFSMN-SAN, DFSMN-only, SAN-only), parameter accounting,
//! batched forward/backward and the weight container.

mod config;
mod network;
mod weights;

pub use config::{f32_megabytes, memory_param_count, param_count, ModelConfig, ModelKind};
pub use network::{build_dfsmn_san, build_pure, expected_tags, LayerTag, Model, ModelCache, ModelLayer};
pub use weights::{load_weights, read_weight_header, save_weights, TensorInfo, WeightHeader, WEIGHT_MAGIC};
