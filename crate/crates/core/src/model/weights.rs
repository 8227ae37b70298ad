//! Weight container: an ASCII header (magic, `key = value` config lines,
//! one `tensor <name> <dtype> <rows> <cols>` line per tensor, `end`) followed
//! by the raw row-major little-endian payloads in header order.

use std::path::Path;

use super::config::ModelConfig;
use super::network::Model;
use crate::binio::{self, Cursor};
use crate::datapipe::{CmvnStats, Frontend};
use crate::error::Result;
use crate::layers::Parameters;
use crate::numerics::Matrix;

pub const WEIGHT_MAGIC: &str = "DFSMN-SAN-WEIGHTS 1";
const DTYPE: &str = "f64";
const CMVN_MEAN: &str = "cmvn.mean";
const CMVN_VARIANCE: &str = "cmvn.variance";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: String,
    pub dtype: String,
    pub rows: usize,
    pub cols: usize,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Normalisation statistics are stored but not trained.
    pub fn is_trainable(&self) -> bool {
        !self.name.starts_with("cmvn.")
    }

    pub fn is_memory(&self) -> bool {
        self.name.contains(".mem_")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightHeader {
    pub config: ModelConfig,
    pub frontend_stack: usize,
    pub frontend_stride: usize,
    pub cmvn_frames: Option<usize>,
    pub tensors: Vec<TensorInfo>,
}

impl WeightHeader {
    pub fn trainable_params(&self) -> usize {
        self.tensors.iter().filter(|t| t.is_trainable()).map(TensorInfo::len).sum()
    }

    pub fn memory_params(&self) -> usize {
        self.tensors.iter().filter(|t| t.is_memory()).map(TensorInfo::len).sum()
    }
}

pub fn save_weights(model: &Model, path: &Path) -> Result<()> {
    let mut header = String::new();
    header.push_str(WEIGHT_MAGIC);
    header.push('\n');
    for (k, v) in model.config().to_pairs() {
        header.push_str(&format!("config.{k} = {v}\n"));
    }
    let fe = &model.frontend;
    header.push_str(&format!("frontend.stack = {}\nfrontend.stride = {}\n", fe.stack, fe.stride));
    let cmvn_rows: Vec<(String, Matrix)> = match &fe.cmvn {
        Some(s) => {
            header.push_str(&format!("frontend.cmvn_frames = {}\n", s.frame_count));
            vec![
                (CMVN_MEAN.to_string(), Matrix::row_vector(&s.mean)),
                (CMVN_VARIANCE.to_string(), Matrix::row_vector(&s.variance)),
            ]
        }
        None => vec![],
    };
    let mut tensors = model.params();
    tensors.extend(cmvn_rows.iter().map(|(n, m)| (n.clone(), m)));
    for (name, m) in &tensors {
        header.push_str(&format!("tensor {name} {DTYPE} {} {}\n", m.rows(), m.cols()));
    }
    header.push_str("end\n");
    let mut bytes = header.into_bytes();
    for (_, m) in &tensors {
        binio::push_f64s(&mut bytes, m.data());
    }
    binio::write_file(path, &bytes)
}

fn parse_header(cur: &mut Cursor<'_>) -> Result<WeightHeader> {
    let magic = cur.line("magic")?;
    if magic != WEIGHT_MAGIC {
        return Err(cur.error("magic", format!("expected `{WEIGHT_MAGIC}`, found `{magic}`")));
    }
    let mut config = ModelConfig::toy();
    let (mut stack, mut stride, mut cmvn_frames) = (1, 1, None);
    let mut tensors = Vec::new();
    loop {
        let line = cur.line("header")?;
        if line == "end" {
            break;
        }
        if let Some(rest) = line.strip_prefix("tensor ") {
            let field = format!("tensor[{}]", tensors.len());
            let parts: Vec<&str> = rest.split_whitespace().collect();
            if parts.len() != 4 {
                return Err(cur.error(field, format!("expected `name dtype rows cols`, found `{rest}`")));
            }
            let dims = binio::parse_counts(cur, &parts[2..].join(" "), &format!("{}.shape", parts[0]), 2)?;
            tensors.push(TensorInfo {
                name: parts[0].to_string(),
                dtype: parts[1].to_string(),
                rows: dims[0],
                cols: dims[1],
            });
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| cur.error("header", format!("unrecognised line `{line}`")))?;
        let count = |v: &str| v.parse::<usize>().map_err(|_| cur.error(key, format!("`{v}` is not a count")));
        match key {
            "frontend.stack" => stack = count(value)?,
            "frontend.stride" => stride = count(value)?,
            "frontend.cmvn_frames" => cmvn_frames = Some(count(value)?),
            _ => match key.strip_prefix("config.") {
                Some(k) => config.set(k, value).map_err(|e| cur.error(key, e.to_string()))?,
                None => return Err(cur.error(key, "unknown header key")),
            },
        }
    }
    config.validate().map_err(|e| cur.error("config", e.to_string()))?;
    Ok(WeightHeader {
        config,
        frontend_stack: stack,
        frontend_stride: stride,
        cmvn_frames,
        tensors,
    })
}

/// Header only; payloads are not decoded.
pub fn read_weight_header(path: &Path) -> Result<WeightHeader> {
    let bytes = binio::read_file(path)?;
    parse_header(&mut Cursor::new(path, &bytes))
}

pub fn load_weights(path: &Path) -> Result<Model> {
    let bytes = binio::read_file(path)?;
    let mut cur = Cursor::new(path, &bytes);
    let header = parse_header(&mut cur)?;
    let mut model = Model::build(&header.config, 0)?;
    let expected: Vec<(String, usize, usize)> = model
        .params()
        .into_iter()
        .map(|(n, m)| (n, m.rows(), m.cols()))
        .collect();
    let trainable: Vec<&TensorInfo> = header.tensors.iter().filter(|t| t.is_trainable()).collect();
    for (i, info) in header.tensors.iter().enumerate() {
        if info.dtype != DTYPE {
            return Err(cur.error(format!("{}.dtype", info.name), format!("unsupported dtype `{}`", info.dtype)));
        }
        if info.is_trainable() && i >= expected.len() {
            return Err(cur.error(info.name.clone(), "tensor not present in the configured model"));
        }
    }
    for (i, (name, rows, cols)) in expected.iter().enumerate() {
        let info = trainable
            .get(i)
            .ok_or_else(|| cur.error(name.clone(), "tensor missing from file"))?;
        if &info.name != name {
            return Err(cur.error(format!("tensor[{i}]"), format!("expected `{name}`, found `{}`", info.name)));
        }
        if (info.rows, info.cols) != (*rows, *cols) {
            return Err(cur.error(
                format!("{name}.shape"),
                format!("file has {}×{}, config implies {rows}×{cols}", info.rows, info.cols),
            ));
        }
    }
    for (m, info) in model.params_mut().into_iter().zip(&trainable) {
        let data = cur.f64s(info.len(), &format!("{}.payload", info.name))?;
        m.data_mut().copy_from_slice(&data);
    }
    let mut frontend = Frontend {
        stack: header.frontend_stack,
        stride: header.frontend_stride,
        cmvn: None,
    };
    if let Some(frames) = header.cmvn_frames {
        let find = |name: &str| {
            header
                .tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| cur.error(name, "missing although frontend.cmvn_frames is set"))
                .cloned()
        };
        let (mean_info, var_info) = (find(CMVN_MEAN)?, find(CMVN_VARIANCE)?);
        let mean = cur.f64s(mean_info.len(), "cmvn.mean.payload")?;
        let variance = cur.f64s(var_info.len(), "cmvn.variance.payload")?;
        frontend.cmvn = Some(CmvnStats {
            mean,
            variance,
            frame_count: frames,
            floored_dims: vec![],
        });
    }
    if !cur.at_end() {
        return Err(cur.error("payload", "trailing bytes after the last tensor"));
    }
    model.frontend = frontend;
    Ok(model)
}

impl Model {
    pub fn save(&self, path: &Path) -> Result<()> {
        save_weights(self, path)
    }

    pub fn load(path: &Path) -> Result<Model> {
        load_weights(path)
    }
}
