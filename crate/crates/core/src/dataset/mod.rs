//! Activation dumps, token corpora, annotations and word alignments.
//!
//! A dataset directory holds a `manifest.json`, a token file with one
//! sentence per line and one raw little-endian `f32` file per model
//! (row-major, one row per token). Everything is validated at load time and
//! immutable afterwards.

mod alignment;
mod annotation;
mod matrix;

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use alignment::{load_alignments, parse_alignments, AlignmentSet};
pub use annotation::{load_annotation, parse_annotation, PropertyAnnotation, Side};
pub use matrix::ActivationMatrix;

use crate::error::{Error, Result};

/// Sentences of the shared analysis corpus plus the cumulative offsets that
/// map `(sentence, index)` onto a global token row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenCorpus {
    sentences: Vec<Vec<String>>,
    offsets: Vec<usize>,
}

impl TokenCorpus {
    pub fn new(sentences: Vec<Vec<String>>) -> Result<Self> {
        if sentences.is_empty() {
            return Err(Error::Corpus("corpus has no sentences".into()));
        }
        let mut offsets = Vec::with_capacity(sentences.len() + 1);
        offsets.push(0);
        for (s, sentence) in sentences.iter().enumerate() {
            if sentence.is_empty() {
                return Err(Error::Corpus(format!("sentence {s} is empty")));
            }
            offsets.push(offsets[s] + sentence.len());
        }
        Ok(TokenCorpus { sentences, offsets })
    }

    /// Parses the token file format: UTF-8, one sentence per line, tokens
    /// separated by spaces.
    pub fn from_text(text: &str) -> Result<Self> {
        let sentences = text
            .lines()
            .enumerate()
            .map(|(i, line)| {
                let tokens: Vec<String> = line.split_whitespace().map(str::to_owned).collect();
                if tokens.is_empty() {
                    Err(Error::Corpus(format!("line {}: empty sentence", i + 1)))
                } else {
                    Ok(tokens)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(sentences)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text).map_err(|e| match e {
            Error::Corpus(msg) => Error::Corpus(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for sentence in &self.sentences {
            out.push_str(&sentence.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn num_sentences(&self) -> usize {
        self.sentences.len()
    }

    pub fn num_tokens(&self) -> usize {
        *self.offsets.last().expect("offsets never empty")
    }

    pub fn sentences(&self) -> &[Vec<String>] {
        &self.sentences
    }

    pub fn sentence(&self, s: usize) -> &[String] {
        &self.sentences[s]
    }

    pub fn sentence_len(&self, s: usize) -> usize {
        self.sentences[s].len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Global row of token `k` in sentence `s`.
    pub fn row(&self, s: usize, k: usize) -> Result<usize> {
        if s >= self.sentences.len() {
            return Err(Error::OutOfBounds(format!(
                "sentence {s} (corpus has {})",
                self.sentences.len()
            )));
        }
        if k >= self.sentences[s].len() {
            return Err(Error::OutOfBounds(format!(
                "token {k} of sentence {s} (length {})",
                self.sentences[s].len()
            )));
        }
        Ok(self.offsets[s] + k)
    }

    /// Inverse of [`TokenCorpus::row`].
    pub fn locate(&self, row: usize) -> Result<(usize, usize)> {
        if row >= self.num_tokens() {
            return Err(Error::OutOfBounds(format!(
                "row {row} (corpus has {} tokens)",
                self.num_tokens()
            )));
        }
        // offsets[s] <= row < offsets[s + 1]
        let s = self.offsets.partition_point(|&o| o <= row) - 1;
        Ok((s, row - self.offsets[s]))
    }

    pub fn token(&self, row: usize) -> Result<&str> {
        let (s, k) = self.locate(row)?;
        Ok(&self.sentences[s][k])
    }

    /// Within-sentence index of every row, in row order.
    pub fn positions(&self) -> Vec<usize> {
        self.sentences
            .iter()
            .flat_map(|s| 0..s.len())
            .collect()
    }

    /// Surface string of every row, in row order.
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().flatten().map(String::as_str)
    }

    /// Short content hash identifying the corpus in reports.
    pub fn identity(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelRecord {
    pub model_id: String,
    pub activations: ActivationMatrix,
    /// Zero-variance neuron columns; correlations against them are 0.
    pub constant_columns: Vec<usize>,
}

impl ModelRecord {
    pub fn new(model_id: impl Into<String>, activations: ActivationMatrix) -> Self {
        let constant_columns = activations.constant_columns();
        ModelRecord {
            model_id: model_id.into(),
            activations,
            constant_columns,
        }
    }

    pub fn num_neurons(&self) -> usize {
        self.activations.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationDataset {
    models: Vec<ModelRecord>,
    corpus: TokenCorpus,
    corpus_id: String,
}

impl ActivationDataset {
    /// Assembles a dataset, checking the cross-model invariants.
    pub fn new(corpus: TokenCorpus, models: Vec<ModelRecord>) -> Result<Self> {
        let t = corpus.num_tokens();
        let mut seen = HashSet::new();
        for model in &models {
            if model.model_id.trim().is_empty() {
                return Err(Error::InvalidModelId("empty model id".into()));
            }
            if !seen.insert(model.model_id.as_str()) {
                return Err(Error::InvalidModelId(format!(
                    "duplicate model id `{}`",
                    model.model_id
                )));
            }
            if model.activations.rows() != t {
                return Err(Error::TokenCountMismatch {
                    context: format!("model `{}`", model.model_id),
                    declared: model.activations.rows(),
                    actual: t,
                });
            }
            if model.activations.cols() == 0 {
                return Err(Error::InvalidArgument(format!(
                    "model `{}` has no neurons",
                    model.model_id
                )));
            }
            if let Some((row, col)) = model.activations.first_non_finite() {
                return Err(Error::NonFinite {
                    model: model.model_id.clone(),
                    row,
                    col,
                });
            }
        }
        let corpus_id = corpus.identity();
        Ok(ActivationDataset {
            models,
            corpus,
            corpus_id,
        })
    }

    pub fn corpus(&self) -> &TokenCorpus {
        &self.corpus
    }

    pub fn corpus_id(&self) -> &str {
        &self.corpus_id
    }

    pub fn models(&self) -> &[ModelRecord] {
        &self.models
    }

    pub fn num_models(&self) -> usize {
        self.models.len()
    }

    pub fn num_tokens(&self) -> usize {
        self.corpus.num_tokens()
    }

    pub fn model_ids(&self) -> Vec<&str> {
        self.models.iter().map(|m| m.model_id.as_str()).collect()
    }

    pub fn model_index(&self, id: &str) -> Result<usize> {
        self.models
            .iter()
            .position(|m| m.model_id == id)
            .ok_or_else(|| Error::UnknownModel(id.to_owned()))
    }

    pub fn model(&self, id: &str) -> Result<&ModelRecord> {
        Ok(&self.models[self.model_index(id)?])
    }

    pub fn others<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a ModelRecord> + 'a {
        self.models.iter().filter(move |m| m.model_id != id)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub corpus: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<usize>,
    pub models: Vec<ManifestModel>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ManifestModel {
    pub id: String,
    pub neurons: usize,
    pub file: String,
    /// Only accepted when it names the dataset corpus.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<String>,
}

/// Accepts either a manifest file or a directory containing `manifest.json`.
pub fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join("manifest.json")
    } else {
        path.to_path_buf()
    }
}

fn read_manifest(path: &Path) -> Result<(PathBuf, PathBuf, Manifest)> {
    let manifest = manifest_path(path);
    let dir = manifest.parent().unwrap_or(Path::new(".")).to_path_buf();
    let text = fs::read(&manifest).map_err(|e| Error::io(&manifest, e))?;
    let parsed: Manifest = serde_json::from_slice(&text).map_err(|e| Error::Manifest {
        path: manifest.clone(),
        message: e.to_string(),
    })?;
    Ok((manifest, dir, parsed))
}

/// The dataset's token corpus, without reading any activations.
pub fn load_corpus(manifest: &Path) -> Result<TokenCorpus> {
    let (_, dir, parsed) = read_manifest(manifest)?;
    TokenCorpus::load(&dir.join(&parsed.corpus))
}

pub fn load_dataset(manifest: &Path) -> Result<ActivationDataset> {
    let (manifest, dir, parsed) = read_manifest(manifest)?;
    let corpus = TokenCorpus::load(&dir.join(&parsed.corpus))?;
    let t = corpus.num_tokens();
    if let Some(declared) = parsed.tokens {
        if declared != t {
            return Err(Error::TokenCountMismatch {
                context: "manifest".into(),
                declared,
                actual: t,
            });
        }
    }
    if parsed.models.is_empty() {
        return Err(Error::Manifest {
            path: manifest,
            message: "no models listed".into(),
        });
    }

    let mut models = Vec::with_capacity(parsed.models.len());
    for entry in &parsed.models {
        if entry.id.trim().is_empty() {
            return Err(Error::InvalidModelId("empty model id".into()));
        }
        if let Some(c) = &entry.corpus {
            if c != &parsed.corpus {
                return Err(Error::CorpusMismatch {
                    model: entry.id.clone(),
                    corpus: c.clone(),
                    expected: parsed.corpus.clone(),
                });
            }
        }
        if entry.neurons == 0 {
            return Err(Error::Manifest {
                path: manifest.clone(),
                message: format!("model `{}` declares 0 neurons", entry.id),
            });
        }
        let activations = ActivationMatrix::read_f32(&dir.join(&entry.file), t, entry.neurons, &entry.id)?;
        let record = ModelRecord::new(entry.id.clone(), activations);
        if !record.constant_columns.is_empty() {
            log::warn!(
                "model `{}`: {} constant neuron column(s) {:?}",
                record.model_id,
                record.constant_columns.len(),
                record.constant_columns
            );
        }
        models.push(record);
    }
    ActivationDataset::new(corpus, models)
}

/// Writes `manifest.json`, `tokens.txt` and one `<id>.f32` per model.
pub fn write_dataset(dir: &Path, ds: &ActivationDataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let corpus_file = "tokens.txt";
    write_file(&dir.join(corpus_file), ds.corpus().to_text().as_bytes())?;
    let mut entries = Vec::new();
    for model in ds.models() {
        if model.model_id.contains(['/', '\\']) {
            return Err(Error::InvalidModelId(format!(
                "`{}` cannot be used as a file name",
                model.model_id
            )));
        }
        let file = format!("{}.f32", model.model_id);
        model.activations.write_f32(&dir.join(&file))?;
        entries.push(ManifestModel {
            id: model.model_id.clone(),
            neurons: model.num_neurons(),
            file,
            corpus: None,
        });
    }
    let manifest = Manifest {
        corpus: corpus_file.into(),
        tokens: Some(ds.num_tokens()),
        models: entries,
    };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    write_file(&dir.join("manifest.json"), json.as_bytes())
}

/// Writes `bytes` to a temporary file next to `path`, then renames it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    use std::io::Write;

    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic(path, bytes)
}
