use std::collections::HashSet;
use std::fs;
use std::path::Path;

use super::TokenCorpus;
use crate::error::{Error, Result};

/// Word alignments in Pharaoh format: one line per sentence pair holding
/// `src-tgt` index pairs. Links may be many-to-many.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AlignmentSet {
    links: Vec<Vec<(usize, usize)>>,
}

impl AlignmentSet {
    pub fn new(links: Vec<Vec<(usize, usize)>>) -> Result<Self> {
        for (s, pairs) in links.iter().enumerate() {
            let mut seen = HashSet::new();
            for p in pairs {
                if !seen.insert(*p) {
                    return Err(Error::InvalidArgument(format!(
                        "duplicate link {}-{} in sentence {s}",
                        p.0, p.1
                    )));
                }
            }
        }
        Ok(AlignmentSet { links })
    }

    /// One-to-one alignment of every token with itself.
    pub fn identity(corpus: &TokenCorpus) -> Self {
        AlignmentSet {
            links: corpus
                .sentences()
                .iter()
                .map(|s| (0..s.len()).map(|i| (i, i)).collect())
                .collect(),
        }
    }

    pub fn num_sentences(&self) -> usize {
        self.links.len()
    }

    pub fn sentence(&self, s: usize) -> Option<&[(usize, usize)]> {
        self.links.get(s).map(Vec::as_slice)
    }

    /// Target indices linked to source token `src` of sentence `s`.
    pub fn targets_of(&self, s: usize, src: usize) -> impl Iterator<Item = usize> + '_ {
        self.links
            .get(s)
            .into_iter()
            .flatten()
            .filter(move |(i, _)| *i == src)
            .map(|&(_, j)| j)
    }

    pub fn check_bounds(&self, src: &TokenCorpus, tgt: &TokenCorpus) -> Result<()> {
        for (s, pairs) in self.links.iter().enumerate() {
            for &(i, j) in pairs {
                src.row(s, i)?;
                tgt.row(s, j)?;
            }
        }
        Ok(())
    }

    pub fn to_pharaoh(&self) -> String {
        let mut out = String::new();
        for pairs in &self.links {
            let line: Vec<String> = pairs.iter().map(|(i, j)| format!("{i}-{j}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        super::write_file(path, self.to_pharaoh().as_bytes())
    }
}

pub fn load_alignments(path: &Path, src: &TokenCorpus, tgt: &TokenCorpus) -> Result<AlignmentSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_alignments(&text, path, src, tgt)
}

pub fn parse_alignments(text: &str, path: &Path, src: &TokenCorpus, tgt: &TokenCorpus) -> Result<AlignmentSet> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    if src.num_sentences() != tgt.num_sentences() {
        return Err(Error::Corpus(format!(
            "source has {} sentences, target has {}",
            src.num_sentences(),
            tgt.num_sentences()
        )));
    }
    let mut links = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let s = i;
        if s >= src.num_sentences() {
            return Err(parse_err(
                line_no,
                format!("more alignment lines than the {} sentence pairs", src.num_sentences()),
            ));
        }
        let mut pairs = Vec::new();
        let mut seen = HashSet::new();
        for tok in raw.split_whitespace() {
            let (a, b) = tok
                .split_once('-')
                .ok_or_else(|| parse_err(line_no, format!("malformed link `{tok}`")))?;
            let (Ok(a), Ok(b)) = (a.parse::<usize>(), b.parse::<usize>()) else {
                return Err(parse_err(line_no, format!("malformed link `{tok}`")));
            };
            if a >= src.sentence_len(s) || b >= tgt.sentence_len(s) {
                return Err(Error::OutOfBounds(format!(
                    "{}:{line_no}: link {a}-{b} outside sentence lengths {}/{}",
                    path.display(),
                    src.sentence_len(s),
                    tgt.sentence_len(s)
                )));
            }
            if !seen.insert((a, b)) {
                return Err(parse_err(line_no, format!("duplicate link `{tok}`")));
            }
            pairs.push((a, b));
        }
        links.push(pairs);
    }
    if links.len() != src.num_sentences() {
        return Err(parse_err(
            links.len(),
            format!(
                "{} alignment lines for {} sentence pairs",
                links.len(),
                src.num_sentences()
            ),
        ));
    }
    Ok(AlignmentSet { links })
}
