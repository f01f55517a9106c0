//! Sequential kernel workloads.
//!
//! A workload is an ordered list of kernels executed strictly one after the
//! other. Each kernel carries its operator kind, its dimension list and the
//! element width in bits.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Operator kind of a kernel.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KernelType {
    Matmul,
    Conv2d,
    Norm,
    Add,
    Transpose,
    Scale,
    Softmax,
    Gelu,
    Fft,
    ClassConcat,
    Custom(String),
}

impl KernelType {
    pub const BUILTIN: [KernelType; 10] = [
        KernelType::Matmul,
        KernelType::Conv2d,
        KernelType::Norm,
        KernelType::Add,
        KernelType::Transpose,
        KernelType::Scale,
        KernelType::Softmax,
        KernelType::Gelu,
        KernelType::Fft,
        KernelType::ClassConcat,
    ];

    pub fn name(&self) -> &str {
        match self {
            KernelType::Matmul => "matmul",
            KernelType::Conv2d => "conv2d",
            KernelType::Norm => "norm",
            KernelType::Add => "add",
            KernelType::Transpose => "transpose",
            KernelType::Scale => "scale",
            KernelType::Softmax => "softmax",
            KernelType::Gelu => "gelu",
            KernelType::Fft => "fft",
            KernelType::ClassConcat => "classconcat",
            KernelType::Custom(name) => name,
        }
    }

    /// Shape-preserving kinds: their size list is an arbitrary tensor shape.
    pub fn is_elementwise(&self) -> bool {
        !matches!(
            self,
            KernelType::Matmul | KernelType::Conv2d | KernelType::Fft
        )
    }

    fn check_arity(&self, len: usize) -> std::result::Result<(), String> {
        let ok = match self {
            KernelType::Matmul => len == 3,
            KernelType::Conv2d => len == 7,
            KernelType::Fft => len == 1,
            _ => len >= 1,
        };
        if ok {
            Ok(())
        } else {
            let expected = match self {
                KernelType::Matmul => "3 ([M, K, N])",
                KernelType::Conv2d => "7 ([H, W, C_in, C_out, K_h, K_w, stride])",
                KernelType::Fft => "1 ([n])",
                _ => ">= 1",
            };
            Err(format!(
                "arity: `{}` expects {expected} dimensions, got {len}",
                self.name()
            ))
        }
    }

    fn check_name(&self) -> std::result::Result<(), String> {
        if let KernelType::Custom(name) = self {
            if name.is_empty() {
                return Err("custom kernel kind must have a non-empty name".into());
            }
            if name.chars().any(|c| c.is_uppercase() || c.is_whitespace()) {
                return Err(format!("custom kernel kind `{name}` must be lowercase without spaces"));
            }
            if KernelType::BUILTIN.iter().any(|b| b.name() == name) {
                return Err(format!("custom kernel kind `{name}` shadows a built-in kind"));
            }
        }
        Ok(())
    }
}

impl fmt::Display for KernelType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(b) = KernelType::BUILTIN.iter().find(|b| b.name() == s) {
            return Ok(b.clone());
        }
        let custom = KernelType::Custom(s.to_string());
        custom
            .check_name()
            .map_err(|m| Error::validation(None, m))?;
        Ok(custom)
    }
}

impl Serialize for KernelType {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for KernelType {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One operator instance of the workload.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Kernel {
    /// 1-based position in the workload.
    #[serde(default)]
    pub id: usize,
    pub kind: KernelType,
    pub size: Vec<u64>,
    /// Bits per element: 8, 16 or 32.
    pub data_width: u32,
}

/// Exact operation count as a rational `num / den`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpCount {
    pub num: u128,
    pub den: u128,
}

impl OpCount {
    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl Kernel {
    pub fn new(kind: KernelType, size: Vec<u64>, data_width: u32) -> Self {
        Kernel {
            id: 0,
            kind,
            size,
            data_width,
        }
    }

    pub fn bytes_per_element(&self) -> u64 {
        u64::from(self.data_width / 8)
    }

    /// Operation count used to scale profiled cycle counts.
    ///
    /// matmul: M·K·N; conv2d: H·W·C_in·C_out·K_h·K_w / stride²; all other
    /// kinds: the product of their dimensions.
    pub fn op_count(&self) -> OpCount {
        let prod = |dims: &[u64]| {
            dims.iter()
                .fold(1u128, |acc, &d| acc.saturating_mul(u128::from(d)))
        };
        match self.kind {
            KernelType::Conv2d if self.size.len() == 7 => {
                let stride = u128::from(self.size[6]);
                OpCount {
                    num: prod(&self.size[..6]),
                    den: stride * stride,
                }
            }
            _ => OpCount {
                num: prod(&self.size),
                den: 1,
            },
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        self.kind.check_name()?;
        self.kind.check_arity(self.size.len())?;
        if let Some(pos) = self.size.iter().position(|&d| d == 0) {
            return Err(format!("dimension {pos} is zero"));
        }
        if !matches!(self.data_width, 8 | 16 | 32) {
            return Err(format!(
                "data_width {} is not one of 8, 16, 32",
                self.data_width
            ));
        }
        let fp = crate::tiling::footprint_wide(self);
        let limit = 1u128 << 63;
        if fp.0 + fp.1 > limit {
            return Err("operand footprint exceeds 2^63 bytes".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workload {
    pub name: String,
    pub kernels: Vec<Kernel>,
}

impl Workload {
    /// Builds a workload, renumbering kernel ids to list order and
    /// validating every kernel.
    pub fn new(name: impl Into<String>, mut kernels: Vec<Kernel>) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::validation(None, "workload has no kernels"));
        }
        for (i, k) in kernels.iter_mut().enumerate() {
            k.id = i + 1;
            k.validate().map_err(|m| Error::validation(Some(i + 1), m))?;
        }
        Ok(Workload {
            name: name.into(),
            kernels,
        })
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: Workload = serde_json::from_str(s).map_err(|e| Error::parse("workload", e))?;
        Workload::new(raw.name, raw.kernels)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("workload serializes")
    }
}

pub fn load_workload(path: impl AsRef<Path>) -> Result<Workload> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Workload::from_json_str(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionDims {
    pub seq_len: u64,
    pub d_model: u64,
    pub n_heads: u64,
}

/// Lowers a multi-head self-attention block into its kernel chain.
///
/// Per head: Q, K and V projections, QKᵀ, scale, softmax and the
/// attention-times-V product. The heads are followed by one concatenation
/// and the output projection. Returned kernels carry id 0; ids are assigned
/// when they are placed into a [`Workload`].
pub fn expand_attention_block(dims: AttentionDims, data_width: u32) -> Result<Vec<Kernel>> {
    let AttentionDims {
        seq_len,
        d_model,
        n_heads,
    } = dims;
    if seq_len == 0 || d_model == 0 || n_heads == 0 {
        return Err(Error::validation(None, "attention dimensions must be positive"));
    }
    if d_model % n_heads != 0 {
        return Err(Error::validation(
            None,
            format!("d_model {d_model} is not divisible by n_heads {n_heads}"),
        ));
    }
    let head_dim = d_model / n_heads;
    let mut out = Vec::with_capacity((7 * n_heads + 2) as usize);
    for _ in 0..n_heads {
        out.extend(attention_head(seq_len, d_model, head_dim, data_width));
    }
    out.push(Kernel::new(
        KernelType::ClassConcat,
        vec![seq_len, d_model],
        data_width,
    ));
    out.push(Kernel::new(
        KernelType::Matmul,
        vec![seq_len, d_model, d_model],
        data_width,
    ));
    Ok(out)
}

fn attention_head(seq_len: u64, d_model: u64, head_dim: u64, dw: u32) -> [Kernel; 7] {
    let proj = || Kernel::new(KernelType::Matmul, vec![seq_len, d_model, head_dim], dw);
    [
        proj(),
        proj(),
        proj(),
        Kernel::new(KernelType::Matmul, vec![seq_len, head_dim, seq_len], dw),
        Kernel::new(KernelType::Scale, vec![seq_len, seq_len], dw),
        Kernel::new(KernelType::Softmax, vec![seq_len, seq_len], dw),
        Kernel::new(KernelType::Matmul, vec![seq_len, seq_len, head_dim], dw),
    ]
}

/// Shape of a ViT-style encoder stack used for the bundled demo workload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransformerDims {
    /// Raw input samples per token before the FFT front end.
    pub fft_points: u64,
    /// Tokens, excluding the class token.
    pub patches: u64,
    pub d_model: u64,
    pub n_heads: u64,
    pub ffn_dim: u64,
    pub n_classes: u64,
    pub encoders: u64,
    pub data_width: u32,
}

impl Default for TransformerDims {
    fn default() -> Self {
        TransformerDims {
            fft_points: 256,
            patches: 120,
            d_model: 16,
            n_heads: 4,
            ffn_dim: 64,
            n_classes: 2,
            encoders: 4,
            data_width: 8,
        }
    }
}

/// A contiguous, named run of kernels (1-based, inclusive).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelGroup {
    pub name: String,
    pub first_kernel: usize,
    pub last_kernel: usize,
}

impl KernelGroup {
    pub fn kernel_ids(&self) -> std::ops::RangeInclusive<usize> {
        self.first_kernel..=self.last_kernel
    }
}

/// Builds the encoder-stack workload together with its logical kernel groups:
/// the embedding, then per encoder the norm, each attention head, the
/// attention output with its residual add, and the feed-forward network with
/// its residual add; finally the classifier.
pub fn transformer_workload(
    name: &str,
    dims: TransformerDims,
) -> Result<(Workload, Vec<KernelGroup>)> {
    let dw = dims.data_width;
    let seq = dims.patches + 1;
    let mut kernels = Vec::new();
    let mut groups = Vec::new();
    let mut push_group = |name: String, ks: Vec<Kernel>, kernels: &mut Vec<Kernel>| {
        let first = kernels.len() + 1;
        kernels.extend(ks);
        groups.push(KernelGroup {
            name,
            first_kernel: first,
            last_kernel: kernels.len(),
        });
    };

    push_group(
        "embedding".into(),
        vec![
            Kernel::new(KernelType::Fft, vec![dims.fft_points], dw),
            Kernel::new(
                KernelType::Matmul,
                vec![dims.patches, dims.fft_points / 2, dims.d_model],
                dw,
            ),
            Kernel::new(KernelType::ClassConcat, vec![seq, dims.d_model], dw),
            Kernel::new(KernelType::Add, vec![seq, dims.d_model], dw),
        ],
        &mut kernels,
    );

    let attn = AttentionDims {
        seq_len: seq,
        d_model: dims.d_model,
        n_heads: dims.n_heads,
    };
    for e in 1..=dims.encoders {
        push_group(
            format!("enc{e}.norm"),
            vec![Kernel::new(KernelType::Norm, vec![seq, dims.d_model], dw)],
            &mut kernels,
        );
        let mut block = expand_attention_block(attn, dw)?;
        let tail = block.split_off(block.len() - 2);
        for (h, head) in block.chunks(7).enumerate() {
            push_group(format!("enc{e}.head{}", h + 1), head.to_vec(), &mut kernels);
        }
        let mut residual = tail;
        residual.push(Kernel::new(KernelType::Add, vec![seq, dims.d_model], dw));
        push_group(format!("enc{e}.attn_residual"), residual, &mut kernels);
        push_group(
            format!("enc{e}.ffn"),
            vec![
                Kernel::new(KernelType::Norm, vec![seq, dims.d_model], dw),
                Kernel::new(KernelType::Matmul, vec![seq, dims.d_model, dims.ffn_dim], dw),
                Kernel::new(KernelType::Gelu, vec![seq, dims.ffn_dim], dw),
                Kernel::new(KernelType::Matmul, vec![seq, dims.ffn_dim, dims.d_model], dw),
            ],
            &mut kernels,
        );
        push_group(
            format!("enc{e}.ffn_residual"),
            vec![Kernel::new(KernelType::Add, vec![seq, dims.d_model], dw)],
            &mut kernels,
        );
    }

    push_group(
        "classifier".into(),
        vec![
            Kernel::new(KernelType::Norm, vec![1, dims.d_model], dw),
            Kernel::new(KernelType::Matmul, vec![1, dims.d_model, dims.n_classes], dw),
        ],
        &mut kernels,
    );

    Ok((Workload::new(name, kernels)?, groups))
}
