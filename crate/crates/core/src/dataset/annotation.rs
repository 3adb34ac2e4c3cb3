use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::TokenCorpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Source,
    Target,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Source => "source",
            Side::Target => "target",
        })
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source" | "src" => Ok(Side::Source),
            "target" | "tgt" => Ok(Side::Target),
            other => Err(Error::InvalidArgument(format!("unknown side `{other}`"))),
        }
    }
}

/// Sparse per-token labels for one property. Tokens without a label are
/// simply absent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropertyAnnotation {
    pub property: String,
    pub side: Side,
    labels: BTreeMap<(usize, usize), String>,
}

impl PropertyAnnotation {
    pub fn new(property: impl Into<String>, side: Side) -> Self {
        PropertyAnnotation {
            property: property.into(),
            side,
            labels: BTreeMap::new(),
        }
    }

    /// Adds a label, rejecting a different label for an already labelled token.
    pub fn insert(&mut self, sentence: usize, token: usize, label: impl Into<String>) -> Result<()> {
        let label = label.into();
        match self.labels.get(&(sentence, token)) {
            Some(existing) if *existing != label => Err(Error::LabelConflict {
                sentence,
                token,
                first: existing.clone(),
                second: label,
            }),
            Some(_) => Ok(()),
            None => {
                self.labels.insert((sentence, token), label);
                Ok(())
            }
        }
    }

    pub fn get(&self, sentence: usize, token: usize) -> Option<&str> {
        self.labels.get(&(sentence, token)).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), &str)> {
        self.labels.iter().map(|(&k, v)| (k, v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn vocabulary(&self) -> BTreeSet<&str> {
        self.labels.values().map(String::as_str).collect()
    }

    /// Labels keyed by global token row of `corpus`.
    pub fn by_row(&self, corpus: &TokenCorpus) -> Result<BTreeMap<usize, &str>> {
        self.labels
            .iter()
            .map(|(&(s, k), v)| Ok((corpus.row(s, k)?, v.as_str())))
            .collect()
    }

    pub fn check_bounds(&self, corpus: &TokenCorpus) -> Result<()> {
        for &(s, k) in self.labels.keys() {
            corpus.row(s, k)?;
        }
        Ok(())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("sentence_index\ttoken_index\tlabel\n");
        for ((s, k), label) in &self.labels {
            out.push_str(&format!("{s}\t{k}\t{label}\n"));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        super::write_file(path, self.to_tsv().as_bytes())
    }
}

/// Reads a TSV annotation file; the property name is the file stem.
pub fn load_annotation(path: &Path, corpus: &TokenCorpus, side: Side) -> Result<PropertyAnnotation> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "property".into());
    parse_annotation(&text, &name, path, corpus, side)
}

pub fn parse_annotation(
    text: &str,
    property: &str,
    path: &Path,
    corpus: &TokenCorpus,
    side: Side,
) -> Result<PropertyAnnotation> {
    let mut ann = PropertyAnnotation::new(property, side);
    let mut first_record = true;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let parsed = (
            fields.first().and_then(|f| f.trim().parse::<usize>().ok()),
            fields.get(1).and_then(|f| f.trim().parse::<usize>().ok()),
        );
        let is_first = std::mem::replace(&mut first_record, false);
        let (Some(s), Some(k)) = parsed else {
            if is_first {
                continue; // header
            }
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("expected `sentence<TAB>token<TAB>label`, got `{line}`"),
            });
        };
        let label = fields.get(2).map(|f| f.trim()).unwrap_or("");
        if label.is_empty() || fields.len() > 3 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: "expected exactly three tab-separated columns".into(),
            });
        }
        corpus.row(s, k).map_err(|e| Error::OutOfBounds(format!("{}:{line_no}: {e}", path.display())))?;
        ann.insert(s, k, label)?;
    }
    Ok(ann)
}
