//! Experiment configuration and trained-model persistence.
//!
//! Models are stored as a single JSON document whose matrices are
//! base64-encoded little-endian f64 payloads in row-major order: a diffable
//! header with exact floats, so identical training runs produce byte-identical
//! archives.

use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::blocks::BlockPartition;
use crate::error::{Error, Result};
use crate::kernels::{GramStats, Kernel, KernelKind};
use crate::reconstruct::AdmmConfig;

/// Embedding method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Block-wise SSIM-distance embedding, input space.
    Llise,
    /// Block-wise SSIM-distance embedding, kernel feature space.
    Kllise,
    /// Whole-image closed-form baseline.
    Lle,
    /// Whole-image closed-form baseline in kernel feature space.
    Klle,
}

impl Method {
    pub fn is_blockwise(self) -> bool {
        matches!(self, Method::Llise | Method::Kllise)
    }

    pub fn uses_kernel(self) -> bool {
        matches!(self, Method::Kllise | Method::Klle)
    }

    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "llise" => Method::Llise,
            "kllise" => Method::Kllise,
            "lle" => Method::Lle,
            "klle" => Method::Klle,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown method '{other}' (expected llise|kllise|lle|klle)"
                )))
            }
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Llise => "llise",
            Method::Kllise => "kllise",
            Method::Lle => "lle",
            Method::Klle => "klle",
        }
    }
}

/// Full experiment configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub method: Method,
    pub kernel_kind: KernelKind,
    /// Kernel scale; if `None`, defaults to 1/q (block-wise) or 1/d (whole image).
    pub gamma: Option<f64>,
    pub q: usize,
    pub p: usize,
    pub k: usize,
    pub recon: AdmmConfig,
    pub embed: AdmmConfig,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Stage defaults for a method: reconstruction rho/eta are 0.1/0.1 in
    /// input space and 0.01/0.1 in kernel space; the embedding stage uses
    /// 0.01/0.01.
    pub fn for_method(method: Method, q: usize, p: usize, k: usize, seed: u64) -> Self {
        let recon = match method {
            Method::Kllise | Method::Klle => AdmmConfig {
                rho: 0.01,
                eta: 0.1,
                seed,
                ..AdmmConfig::default()
            },
            _ => AdmmConfig {
                seed,
                ..AdmmConfig::default()
            },
        };
        let embed = AdmmConfig {
            rho: 0.01,
            eta: 0.01,
            max_iter: 5000,
            tol: 1e-5,
            seed,
        };
        Self {
            method,
            kernel_kind: KernelKind::Rbf,
            gamma: None,
            q,
            p,
            k,
            recon,
            embed,
            seed,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.p == 0 || self.p > self.q {
            return Err(Error::InvalidParameter(format!(
                "embedding dimension p={} must satisfy 1 <= p <= q={}",
                self.p, self.q
            )));
        }
        if self.k == 0 || self.k >= n {
            return Err(Error::InvalidParameter(format!(
                "neighbor count k={} must satisfy 1 <= k < n={n}",
                self.k
            )));
        }
        if self.p >= n {
            return Err(Error::InvalidParameter(format!(
                "embedding dimension p={} must be below the sample count n={n}",
                self.p
            )));
        }
        self.recon.validate()?;
        self.embed.validate()
    }

    /// The kernel for feature vectors of length `len`.
    pub fn kernel(&self, len: usize) -> Result<Kernel> {
        match self.gamma {
            Some(g) => Kernel::new(self.kernel_kind, g),
            None => Kernel::with_default_gamma(self.kernel_kind, len),
        }
    }
}

/// Matrix payload: dimensions plus base64 little-endian f64 data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixPayload {
    pub rows: usize,
    pub cols: usize,
    pub data: String,
}

impl MatrixPayload {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut bytes = Vec::with_capacity(m.len() * 8);
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                bytes.extend_from_slice(&m[(r, c)].to_le_bytes());
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: B64.encode(bytes),
        }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        let bytes = B64
            .decode(&self.data)
            .map_err(|e| Error::Format(format!("matrix payload base64: {e}")))?;
        if bytes.len() != self.rows * self.cols * 8 {
            return Err(Error::Format(format!(
                "matrix payload holds {} bytes, expected {}",
                bytes.len(),
                self.rows * self.cols * 8
            )));
        }
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                let off = (r * self.cols + c) * 8;
                m[(r, c)] = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
            }
        }
        Ok(m)
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        Self::from_matrix(&DMatrix::from_column_slice(v.len(), 1, v.as_slice()))
    }

    pub fn to_vector(&self) -> Result<DVector<f64>> {
        let m = self.to_matrix()?;
        if m.ncols() != 1 {
            return Err(Error::Format(format!(
                "expected a column vector payload, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(DVector::from_column_slice(m.as_slice()))
    }
}

/// Kernel normalization/centering statistics in archive form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GramStatsPayload {
    pub raw_diag: MatrixPayload,
    pub row_means: MatrixPayload,
    pub grand_mean: f64,
}

impl GramStatsPayload {
    pub fn from_stats(stats: &GramStats) -> Self {
        Self {
            raw_diag: MatrixPayload::from_vector(&stats.raw_diag),
            row_means: MatrixPayload::from_vector(&stats.row_means),
            grand_mean: stats.grand_mean,
        }
    }

    pub fn to_stats(&self) -> Result<GramStats> {
        Ok(GramStats {
            raw_diag: self.raw_diag.to_vector()?,
            row_means: self.row_means.to_vector()?,
            grand_mean: self.grand_mean,
        })
    }
}

/// Geometry of the training images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageShape {
    pub width: usize,
    pub height: usize,
}

/// Trained state for block-wise methods: per block index, the centered
/// training blocks (`n x q`), the embedding (`n x p`), and for kernel methods
/// the frozen gram statistics.
#[derive(Debug, Clone)]
pub struct BlockwiseModel {
    pub partition: BlockPartition,
    pub shape: ImageShape,
    pub blocks: Vec<DMatrix<f64>>,
    pub embeddings: Vec<DMatrix<f64>>,
    pub gram_stats: Option<Vec<GramStats>>,
}

/// Trained state for whole-image baselines.
#[derive(Debug, Clone)]
pub struct WholeImageModel {
    pub shape: ImageShape,
    /// `n x d` training vectors.
    pub train: DMatrix<f64>,
    /// `n x p` embedding.
    pub embedding: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub enum ModelData {
    Blockwise(BlockwiseModel),
    WholeImage(WholeImageModel),
}

/// A trained model: configuration, training labels, and method-specific state.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub config: ExperimentConfig,
    pub labels: Vec<u8>,
    pub data: ModelData,
}

const FORMAT_TAG: &str = "ssimm-model-v1";

#[derive(Serialize, Deserialize)]
struct BlockwiseArchive {
    partition: BlockPartition,
    shape: ImageShape,
    blocks: Vec<MatrixPayload>,
    embeddings: Vec<MatrixPayload>,
    gram_stats: Option<Vec<GramStatsPayload>>,
}

#[derive(Serialize, Deserialize)]
struct WholeImageArchive {
    shape: ImageShape,
    train: MatrixPayload,
    embedding: MatrixPayload,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum DataArchive {
    Blockwise(BlockwiseArchive),
    Wholeimage(WholeImageArchive),
}

#[derive(Serialize, Deserialize)]
struct ModelArchive {
    format: String,
    config: ExperimentConfig,
    labels: Vec<u8>,
    data: DataArchive,
}

impl TrainedModel {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn to_json(&self) -> Result<String> {
        let data = match &self.data {
            ModelData::Blockwise(b) => DataArchive::Blockwise(BlockwiseArchive {
                partition: b.partition,
                shape: b.shape,
                blocks: b.blocks.iter().map(MatrixPayload::from_matrix).collect(),
                embeddings: b.embeddings.iter().map(MatrixPayload::from_matrix).collect(),
                gram_stats: b
                    .gram_stats
                    .as_ref()
                    .map(|s| s.iter().map(GramStatsPayload::from_stats).collect()),
            }),
            ModelData::WholeImage(w) => DataArchive::Wholeimage(WholeImageArchive {
                shape: w.shape,
                train: MatrixPayload::from_matrix(&w.train),
                embedding: MatrixPayload::from_matrix(&w.embedding),
            }),
        };
        let archive = ModelArchive {
            format: FORMAT_TAG.to_string(),
            config: self.config,
            labels: self.labels.clone(),
            data,
        };
        serde_json::to_string(&archive).map_err(|e| Error::Format(format!("model to JSON: {e}")))
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let archive: ModelArchive =
            serde_json::from_str(json).map_err(|e| Error::Format(format!("model JSON: {e}")))?;
        if archive.format != FORMAT_TAG {
            return Err(Error::Format(format!(
                "unsupported model format '{}'",
                archive.format
            )));
        }
        let data = match archive.data {
            DataArchive::Blockwise(b) => {
                let blocks = b
                    .blocks
                    .iter()
                    .map(MatrixPayload::to_matrix)
                    .collect::<Result<Vec<_>>>()?;
                let embeddings = b
                    .embeddings
                    .iter()
                    .map(MatrixPayload::to_matrix)
                    .collect::<Result<Vec<_>>>()?;
                if blocks.len() != b.partition.block_count()
                    || embeddings.len() != b.partition.block_count()
                {
                    return Err(Error::Format(format!(
                        "archive holds {} block matrices and {} embeddings for {} blocks",
                        blocks.len(),
                        embeddings.len(),
                        b.partition.block_count()
                    )));
                }
                let gram_stats = match b.gram_stats {
                    Some(s) => Some(
                        s.iter()
                            .map(GramStatsPayload::to_stats)
                            .collect::<Result<Vec<_>>>()?,
                    ),
                    None => None,
                };
                ModelData::Blockwise(BlockwiseModel {
                    partition: b.partition,
                    shape: b.shape,
                    blocks,
                    embeddings,
                    gram_stats,
                })
            }
            DataArchive::Wholeimage(w) => ModelData::WholeImage(WholeImageModel {
                shape: w.shape,
                train: w.train.to_matrix()?,
                embedding: w.embedding.to_matrix()?,
            }),
        };
        Ok(Self {
            config: archive.config,
            labels: archive.labels,
            data,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
