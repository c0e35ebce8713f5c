//! End-to-end orchestration: dataset loading, training for all four methods,
//! out-of-sample embedding, and distortion-recognition evaluation.
//!
//! Per-block solves are independent; training and embedding parallelize over
//! block indices (or images) with results collected in index order, so output
//! is identical regardless of thread count.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::blocks::{center_blocks, partition, CenteredBlockSet};
use crate::distortion::{LabeledImage, ManifestEntry};
use crate::embed::{embed_oos, solve_embedding, SparseWeightRow};
use crate::error::{Error, Result};
use crate::eval::{classify_block_1nn, vote_image, ConfusionMatrix};
use crate::image::GrayImage;
use crate::kernels::{cross_kernel_oos, gram_from_rows, KernelGram};
use crate::lle::{klle_weights, lle_embed, lle_weights};
use crate::model::{
    BlockwiseModel, ExperimentConfig, ImageShape, ModelData, TrainedModel, WholeImageModel,
};
use crate::neighbors::{knn_euclidean, knn_kernel, knn_oos_euclidean, knn_oos_kernel};
use crate::reconstruct::{solve_weights, solve_weights_kernel, AdmmConfig};
use crate::ssim::SsimConstants;

/// Images with class labels, as produced by synthesis or loaded from disk.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub images: Vec<GrayImage>,
    pub labels: Vec<u8>,
    pub names: Vec<String>,
}

impl LabeledDataset {
    pub fn from_labeled_images(entries: &[LabeledImage]) -> Self {
        Self {
            images: entries.iter().map(|e| e.image.clone()).collect(),
            labels: entries.iter().map(|e| e.label).collect(),
            names: entries.iter().map(|e| e.name.clone()).collect(),
        }
    }

    /// Loads a synthesized corpus directory (`manifest.json` plus PGM files),
    /// in manifest order.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest_path = dir.join("manifest.json");
        let manifest: Vec<ManifestEntry> =
            serde_json::from_str(&std::fs::read_to_string(&manifest_path).map_err(|e| {
                Error::Format(format!("cannot read {}: {e}", manifest_path.display()))
            })?)
            .map_err(|e| Error::Format(format!("manifest: {e}")))?;
        let mut images = Vec::with_capacity(manifest.len());
        let mut labels = Vec::with_capacity(manifest.len());
        let mut names = Vec::with_capacity(manifest.len());
        for entry in &manifest {
            images.push(GrayImage::read_pgm(dir.join(&entry.file))?);
            labels.push(entry.label);
            names.push(entry.file.clone());
        }
        Ok(Self {
            images,
            labels,
            names,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    fn shape(&self) -> Result<ImageShape> {
        let first = self
            .images
            .first()
            .ok_or_else(|| Error::InvalidInput("empty dataset".into()))?;
        let shape = ImageShape {
            width: first.width(),
            height: first.height(),
        };
        for (idx, img) in self.images.iter().enumerate() {
            if img.width() != shape.width || img.height() != shape.height {
                return Err(Error::DimensionMismatch(format!(
                    "image {idx} is {}x{}, expected {}x{}",
                    img.width(),
                    img.height(),
                    shape.width,
                    shape.height
                )));
            }
        }
        Ok(shape)
    }

    /// `n x d` matrix of raw pixel vectors.
    fn pixel_matrix(&self) -> DMatrix<f64> {
        let n = self.images.len();
        let d = self.images[0].len();
        DMatrix::from_fn(n, d, |r, c| self.images[r].pixels()[c])
    }
}

fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z ^ (z >> 31)
}

/// Trains a model on the dataset with the given configuration.
pub fn train(dataset: &LabeledDataset, config: &ExperimentConfig) -> Result<TrainedModel> {
    let n = dataset.len();
    config.validate(n)?;
    let shape = dataset.shape()?;
    let data = if config.method.is_blockwise() {
        ModelData::Blockwise(train_blockwise(dataset, config, shape)?)
    } else {
        ModelData::WholeImage(train_whole_image(dataset, config, shape)?)
    };
    Ok(TrainedModel {
        config: *config,
        labels: dataset.labels.clone(),
        data,
    })
}

/// Per-block-index training state produced by one parallel task.
struct BlockTrainResult {
    rows: DMatrix<f64>,
    embedding: DMatrix<f64>,
    stats: Option<crate::kernels::GramStats>,
}

fn train_blockwise(
    dataset: &LabeledDataset,
    config: &ExperimentConfig,
    shape: ImageShape,
) -> Result<BlockwiseModel> {
    let n = dataset.len();
    let part = partition(&dataset.images[0], config.q)?;
    let consts = SsimConstants::unit_range(config.q)?;
    let sets: Vec<CenteredBlockSet> = dataset
        .images
        .iter()
        .map(|img| center_blocks(img, &part))
        .collect::<Result<Vec<_>>>()?;
    let kernel = config.kernel(config.q)?;
    let use_kernel = config.method.uses_kernel();

    let results: Vec<BlockTrainResult> = (0..part.block_count())
        .into_par_iter()
        .map(|i| -> Result<BlockTrainResult> {
            let rows = DMatrix::from_fn(n, config.q, |j, c| sets[j].blocks()[(i, c)]);
            let (weight_rows, stats) = if use_kernel {
                let gram = gram_from_rows(&kernel, &rows)?;
                let graph = knn_kernel(&gram, config.k)?;
                let mut weight_rows = Vec::with_capacity(n);
                for j in 0..n {
                    let nbs = graph.neighbors(j);
                    let (kxx, kvec, kmat) = gram.neighborhood(j, nbs)?;
                    let solved =
                        solve_weights_kernel(kxx, &kvec, &kmat, consts.c, &config.recon)?;
                    weight_rows.push(SparseWeightRow::from_neighbors(
                        j,
                        nbs,
                        solved.weights(),
                    )?);
                }
                (weight_rows, Some(gram.stats().clone()))
            } else {
                let graph = knn_euclidean(&rows, config.k)?;
                let mut weight_rows = Vec::with_capacity(n);
                for j in 0..n {
                    let nbs = graph.neighbors(j);
                    let x = rows.row(j).transpose();
                    let xmat = neighbor_columns(&rows, nbs);
                    let solved = solve_weights(&x, &xmat, consts.c, &config.recon)?;
                    weight_rows.push(SparseWeightRow::from_neighbors(
                        j,
                        nbs,
                        solved.weights(),
                    )?);
                }
                (weight_rows, None)
            };
            let embed_cfg = AdmmConfig {
                seed: mix_seed(config.embed.seed, i as u64),
                ..config.embed
            };
            let solved = solve_embedding(&weight_rows, config.p, consts.c, &embed_cfg)?;
            Ok(BlockTrainResult {
                rows,
                embedding: solved.embedding().clone(),
                stats,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut blocks = Vec::with_capacity(results.len());
    let mut embeddings = Vec::with_capacity(results.len());
    let mut gram_stats = Vec::with_capacity(results.len());
    for r in results {
        blocks.push(r.rows);
        embeddings.push(r.embedding);
        if let Some(s) = r.stats {
            gram_stats.push(s);
        }
    }
    Ok(BlockwiseModel {
        partition: part,
        shape,
        blocks,
        embeddings,
        gram_stats: if use_kernel { Some(gram_stats) } else { None },
    })
}

/// Columns of the neighbors of one sample (`q x k`).
fn neighbor_columns(rows: &DMatrix<f64>, neighbors: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.ncols(), neighbors.len(), |r, c| rows[(neighbors[c], r)])
}

fn train_whole_image(
    dataset: &LabeledDataset,
    config: &ExperimentConfig,
    shape: ImageShape,
) -> Result<WholeImageModel> {
    let n = dataset.len();
    let rows = dataset.pixel_matrix();
    let d = rows.ncols();
    let mut w = DMatrix::zeros(n, n);
    if config.method.uses_kernel() {
        let kernel = config.kernel(d)?;
        let raw = kernel.gram_matrix(&rows);
        let graph = knn_kernel(&KernelGram::from_raw(raw.clone()), config.k)?;
        for j in 0..n {
            let nbs = graph.neighbors(j);
            let kxx = raw[(j, j)];
            let kvec = DVector::from_iterator(nbs.len(), nbs.iter().map(|&r| raw[(r, j)]));
            let kmat = DMatrix::from_fn(nbs.len(), nbs.len(), |a, b| raw[(nbs[a], nbs[b])]);
            let lw = klle_weights(kxx, &kvec, &kmat)?;
            for (c, &r) in nbs.iter().enumerate() {
                w[(j, r)] = lw.weights[c];
            }
        }
    } else {
        let graph = knn_euclidean(&rows, config.k)?;
        for j in 0..n {
            let nbs = graph.neighbors(j);
            let x = rows.row(j).transpose();
            let xmat = neighbor_columns(&rows, nbs);
            let lw = lle_weights(&x, &xmat)?;
            for (c, &r) in nbs.iter().enumerate() {
                w[(j, r)] = lw.weights[c];
            }
        }
    }
    let emb = lle_embed(&w, config.p)?;
    Ok(WholeImageModel {
        shape,
        train: rows,
        embedding: emb.y,
    })
}

/// Embeddings of a set of (usually out-of-sample) images.
#[derive(Debug, Clone)]
pub struct EmbeddedSet {
    /// Per image: `b x p` block embeddings (block-wise) or `1 x p`.
    pub entries: Vec<DMatrix<f64>>,
    pub names: Vec<String>,
    pub labels: Option<Vec<u8>>,
}

const EMBEDDINGS_FORMAT_TAG: &str = "ssimm-embeddings-v1";

#[derive(serde::Serialize, serde::Deserialize)]
struct EmbeddedSetArchive {
    format: String,
    names: Vec<String>,
    labels: Option<Vec<u8>>,
    entries: Vec<crate::model::MatrixPayload>,
}

impl EmbeddedSet {
    pub fn to_json(&self) -> Result<String> {
        let archive = EmbeddedSetArchive {
            format: EMBEDDINGS_FORMAT_TAG.to_string(),
            names: self.names.clone(),
            labels: self.labels.clone(),
            entries: self
                .entries
                .iter()
                .map(crate::model::MatrixPayload::from_matrix)
                .collect(),
        };
        serde_json::to_string(&archive).map_err(|e| Error::Format(format!("embeddings: {e}")))
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let archive: EmbeddedSetArchive =
            serde_json::from_str(json).map_err(|e| Error::Format(format!("embeddings: {e}")))?;
        if archive.format != EMBEDDINGS_FORMAT_TAG {
            return Err(Error::Format(format!(
                "unsupported embeddings format '{}'",
                archive.format
            )));
        }
        Ok(Self {
            entries: archive
                .entries
                .iter()
                .map(crate::model::MatrixPayload::to_matrix)
                .collect::<Result<Vec<_>>>()?,
            names: archive.names,
            labels: archive.labels,
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

/// Embeds every image of `dataset` into the model's space via neighbor
/// reconstruction from the training set.
pub fn embed_images(model: &TrainedModel, dataset: &LabeledDataset) -> Result<EmbeddedSet> {
    let shape = dataset.shape()?;
    let entries: Vec<DMatrix<f64>> = match &model.data {
        ModelData::Blockwise(bm) => {
            if shape != bm.shape {
                return Err(Error::DimensionMismatch(format!(
                    "query images are {}x{}, model was trained on {}x{}",
                    shape.width, shape.height, bm.shape.width, bm.shape.height
                )));
            }
            dataset
                .images
                .par_iter()
                .map(|img| embed_one_blockwise(model, bm, img))
                .collect::<Result<Vec<_>>>()?
        }
        ModelData::WholeImage(wm) => {
            if shape != wm.shape {
                return Err(Error::DimensionMismatch(format!(
                    "query images are {}x{}, model was trained on {}x{}",
                    shape.width, shape.height, wm.shape.width, wm.shape.height
                )));
            }
            dataset
                .images
                .par_iter()
                .map(|img| embed_one_whole(model, wm, img))
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(EmbeddedSet {
        entries,
        names: dataset.names.clone(),
        labels: Some(dataset.labels.clone()),
    })
}

fn embed_one_blockwise(
    model: &TrainedModel,
    bm: &BlockwiseModel,
    img: &GrayImage,
) -> Result<DMatrix<f64>> {
    let config = &model.config;
    let consts = SsimConstants::unit_range(config.q)?;
    let set = center_blocks(img, &bm.partition)?;
    let b = bm.partition.block_count();
    let mut out = DMatrix::zeros(b, config.p);
    let kernel = config.kernel(config.q)?;
    for i in 0..b {
        let query = set.block(i);
        let train_rows = &bm.blocks[i];
        let (nbs, weights) = if config.method.uses_kernel() {
            let stats = &bm.gram_stats.as_ref().ok_or_else(|| {
                Error::Format("kernel model is missing gram statistics".into())
            })?[i];
            let (kxx, kvec_full) = cross_kernel_oos(&kernel, query.as_view(), train_rows, stats)?;
            let diag = stats.centered_diag();
            let nbs = knn_oos_kernel(kxx, &kvec_full, &diag, config.k)?;
            let kvec = DVector::from_iterator(nbs.len(), nbs.iter().map(|&r| kvec_full[r]));
            let kmat = DMatrix::from_fn(nbs.len(), nbs.len(), |a, b2| {
                stats.centered_entry(&kernel, train_rows, nbs[a], nbs[b2])
            });
            let solved = solve_weights_kernel(kxx, &kvec, &kmat, consts.c, &config.recon)?;
            (nbs, solved.weights().clone())
        } else {
            let query_mat = DMatrix::from_fn(1, config.q, |_, c| query[c]);
            let graph = knn_oos_euclidean(&query_mat, train_rows, config.k)?;
            let nbs = graph.neighbors(0).to_vec();
            let xmat = neighbor_columns(train_rows, &nbs);
            let solved = solve_weights(&query, &xmat, consts.c, &config.recon)?;
            (nbs, solved.weights().clone())
        };
        let nb_embeddings = DMatrix::from_fn(nbs.len(), config.p, |r, c| {
            bm.embeddings[i][(nbs[r], c)]
        });
        let y = embed_oos(&weights, &nb_embeddings)?;
        for c in 0..config.p {
            out[(i, c)] = y[c];
        }
    }
    Ok(out)
}

fn embed_one_whole(
    model: &TrainedModel,
    wm: &WholeImageModel,
    img: &GrayImage,
) -> Result<DMatrix<f64>> {
    let config = &model.config;
    let query = DVector::from_column_slice(img.pixels());
    let d = wm.train.ncols();
    let nbs: Vec<usize> = if config.method.uses_kernel() {
        let kernel = config.kernel(d)?;
        let self_k = kernel.eval(query.as_view(), query.as_view());
        let cross = DVector::from_fn(wm.train.nrows(), |r, _| {
            kernel.eval(query.as_view(), wm.train.row(r).transpose().as_view())
        });
        let diag = DVector::from_fn(wm.train.nrows(), |r, _| {
            kernel.eval(
                wm.train.row(r).transpose().as_view(),
                wm.train.row(r).transpose().as_view(),
            )
        });
        knn_oos_kernel(self_k, &cross, &diag, config.k)?
    } else {
        let query_mat = DMatrix::from_fn(1, d, |_, c| query[c]);
        knn_oos_euclidean(&query_mat, &wm.train, config.k)?
            .neighbors(0)
            .to_vec()
    };
    let nb_embeddings = DMatrix::from_fn(nbs.len(), config.p, |r, c| {
        wm.embedding[(nbs[r], c)]
    });
    let y = if config.method.uses_kernel() {
        let kernel = config.kernel(d)?;
        let kxx = kernel.eval(query.as_view(), query.as_view());
        let kvec = DVector::from_fn(nbs.len(), |r, _| {
            kernel.eval(query.as_view(), wm.train.row(nbs[r]).transpose().as_view())
        });
        let kmat = DMatrix::from_fn(nbs.len(), nbs.len(), |a, b| {
            kernel.eval(
                wm.train.row(nbs[a]).transpose().as_view(),
                wm.train.row(nbs[b]).transpose().as_view(),
            )
        });
        crate::lle::klle_oos(kxx, &kvec, &kmat, &nb_embeddings)?
    } else {
        let xmat = neighbor_columns(&wm.train, &nbs);
        crate::lle::lle_oos(&query, &xmat, &nb_embeddings)?
    };
    Ok(DMatrix::from_fn(1, config.p, |_, c| y[c]))
}

/// Ranked block votes of one image.
#[derive(Debug, Clone, Serialize)]
pub struct ImageVotes {
    pub name: String,
    pub true_label: Option<u8>,
    /// (label, block fraction), descending.
    pub ranked: Vec<(u8, f64)>,
}

/// Recognition results at image level, plus block level for block-wise models.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub image_confusion: ConfusionMatrix,
    pub block_confusion: Option<ConfusionMatrix>,
    pub votes: Vec<ImageVotes>,
    pub image_predictions: Vec<u8>,
    pub image_accuracy: f64,
}

/// Leave-one-out evaluation on the training embeddings: every block is
/// classified against all other images' blocks at the same index.
pub fn evaluate_training(model: &TrainedModel) -> Result<EvalReport> {
    let labels = &model.labels;
    let n = labels.len();
    match &model.data {
        ModelData::Blockwise(bm) => {
            let per_image_block_labels: Vec<Vec<u8>> = (0..n)
                .into_par_iter()
                .map(|j| -> Result<Vec<u8>> {
                    let mut preds = Vec::with_capacity(bm.embeddings.len());
                    for emb in &bm.embeddings {
                        let query = emb.row(j).transpose();
                        preds.push(classify_block_1nn(
                            query.as_view(),
                            emb,
                            labels,
                            Some(j),
                        )?);
                    }
                    Ok(preds)
                })
                .collect::<Result<Vec<_>>>()?;
            finish_blockwise_report(
                labels,
                &model_names(model, n),
                &per_image_block_labels,
            )
        }
        ModelData::WholeImage(wm) => {
            let mut preds = Vec::with_capacity(n);
            for j in 0..n {
                let query = wm.embedding.row(j).transpose();
                preds.push(classify_block_1nn(
                    query.as_view(),
                    &wm.embedding,
                    labels,
                    Some(j),
                )?);
            }
            finish_whole_report(labels, &model_names(model, n), preds)
        }
    }
}

/// Evaluates out-of-sample embeddings against all training blocks.
pub fn evaluate_oos(model: &TrainedModel, set: &EmbeddedSet) -> Result<EvalReport> {
    let train_labels = &model.labels;
    let truth = set.labels.as_deref();
    match &model.data {
        ModelData::Blockwise(bm) => {
            let per_image_block_labels: Vec<Vec<u8>> = set
                .entries
                .par_iter()
                .map(|entry| -> Result<Vec<u8>> {
                    if entry.nrows() != bm.embeddings.len() {
                        return Err(Error::DimensionMismatch(format!(
                            "embedded image has {} blocks, model has {}",
                            entry.nrows(),
                            bm.embeddings.len()
                        )));
                    }
                    let mut preds = Vec::with_capacity(entry.nrows());
                    for (i, emb) in bm.embeddings.iter().enumerate() {
                        let query = entry.row(i).transpose();
                        preds.push(classify_block_1nn(query.as_view(), emb, train_labels, None)?);
                    }
                    Ok(preds)
                })
                .collect::<Result<Vec<_>>>()?;
            report_from_block_labels(&set.names, truth, &per_image_block_labels)
        }
        ModelData::WholeImage(wm) => {
            let mut preds = Vec::with_capacity(set.entries.len());
            for entry in &set.entries {
                let query = entry.row(0).transpose();
                preds.push(classify_block_1nn(
                    query.as_view(),
                    &wm.embedding,
                    train_labels,
                    None,
                )?);
            }
            let names = set.names.clone();
            let truth_vec = truth.map(|t| t.to_vec());
            whole_report(&names, truth_vec.as_deref(), preds)
        }
    }
}

fn model_names(model: &TrainedModel, n: usize) -> Vec<String> {
    (0..n)
        .map(|j| format!("train_{j:03}_label{}", model.labels[j]))
        .collect()
}

fn finish_blockwise_report(
    labels: &[u8],
    names: &[String],
    per_image_block_labels: &[Vec<u8>],
) -> Result<EvalReport> {
    report_from_block_labels(names, Some(labels), per_image_block_labels)
}

fn report_from_block_labels(
    names: &[String],
    truth: Option<&[u8]>,
    per_image_block_labels: &[Vec<u8>],
) -> Result<EvalReport> {
    let mut votes = Vec::with_capacity(per_image_block_labels.len());
    let mut image_predictions = Vec::with_capacity(per_image_block_labels.len());
    let mut all_block_truth = Vec::new();
    let mut all_block_pred = Vec::new();
    for (j, block_labels) in per_image_block_labels.iter().enumerate() {
        let ranked = vote_image(block_labels)?;
        image_predictions.push(ranked[0].0);
        let true_label = truth.map(|t| t[j]);
        if let Some(t) = true_label {
            all_block_truth.extend(std::iter::repeat_n(t, block_labels.len()));
            all_block_pred.extend_from_slice(block_labels);
        }
        votes.push(ImageVotes {
            name: names[j].to_string(),
            true_label,
            ranked,
        });
    }
    let (image_confusion, image_accuracy, block_confusion) = match truth {
        Some(t) => {
            let cm = ConfusionMatrix::from_pairs(t, &image_predictions)?;
            let acc = cm.accuracy();
            let bc = ConfusionMatrix::from_pairs(&all_block_truth, &all_block_pred)?;
            (cm, acc, Some(bc))
        }
        None => (ConfusionMatrix::from_pairs(&[], &[])?, f64::NAN, None),
    };
    Ok(EvalReport {
        image_confusion,
        block_confusion,
        votes,
        image_predictions,
        image_accuracy,
    })
}

fn finish_whole_report(labels: &[u8], names: &[String], preds: Vec<u8>) -> Result<EvalReport> {
    whole_report(names, Some(labels), preds)
}

fn whole_report(names: &[String], truth: Option<&[u8]>, preds: Vec<u8>) -> Result<EvalReport> {
    let votes = preds
        .iter()
        .enumerate()
        .map(|(j, &p)| ImageVotes {
            name: names[j].clone(),
            true_label: truth.map(|t| t[j]),
            ranked: vec![(p, 1.0)],
        })
        .collect();
    let (image_confusion, image_accuracy) = match truth {
        Some(t) => {
            let cm = ConfusionMatrix::from_pairs(t, &preds)?;
            let acc = cm.accuracy();
            (cm, acc)
        }
        None => (ConfusionMatrix::from_pairs(&[], &[])?, f64::NAN),
    };
    Ok(EvalReport {
        image_confusion,
        block_confusion: None,
        votes,
        image_predictions: preds,
        image_accuracy,
    })
}

/// Writes confusion matrices and the vote table as CSV plus a JSON summary.
pub fn write_report(dir: impl AsRef<Path>, report: &EvalReport) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    std::fs::write(
        dir.join("confusion_image.csv"),
        report.image_confusion.to_csv(),
    )?;
    if let Some(bc) = &report.block_confusion {
        std::fs::write(dir.join("confusion_block.csv"), bc.to_csv())?;
    }
    let mut votes_csv = String::from("image,true_label,top1,top1_frac,top2,top2_frac\n");
    for v in &report.votes {
        let (l1, f1) = v.ranked.first().copied().unwrap_or((0, 0.0));
        let (l2, f2) = v.ranked.get(1).copied().unwrap_or((l1, 0.0));
        votes_csv.push_str(&format!(
            "{},{},{},{:.4},{},{:.4}\n",
            v.name,
            v.true_label.map(|t| t.to_string()).unwrap_or_default(),
            l1,
            f1,
            l2,
            f2
        ));
    }
    std::fs::write(dir.join("votes.csv"), votes_csv)?;
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Format(format!("report serialization: {e}")))?;
    std::fs::write(dir.join("report.json"), json)?;
    Ok(())
}
