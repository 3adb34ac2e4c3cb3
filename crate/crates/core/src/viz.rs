//! Token heatmaps of a single neuron, as standalone HTML or 24-bit ANSI.

use serde::{Deserialize, Serialize};

use crate::dataset::ActivationDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapToken {
    pub text: String,
    pub activation: f32,
    /// `activation / max |activation|` over the rendered span.
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapDoc {
    pub model: String,
    pub neuron: usize,
    pub first_sentence: usize,
    /// Largest absolute activation in the span; 0 when all are zero.
    pub scale: f64,
    pub positive_color: [u8; 3],
    pub negative_color: [u8; 3],
    pub neutral_color: [u8; 3],
    pub sentences: Vec<Vec<HeatmapToken>>,
}

const RED: [u8; 3] = [255, 0, 0];
const BLUE: [u8; 3] = [0, 0, 255];
const NEUTRAL: [u8; 3] = [255, 255, 255];

/// Linear blend from neutral (intensity 0) to red (+1) or blue (-1).
pub fn color(intensity: f64) -> [u8; 3] {
    let i = intensity.clamp(-1.0, 1.0);
    let end = if i >= 0.0 { RED } else { BLUE };
    let t = i.abs();
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] = (NEUTRAL[c] as f64 + t * (end[c] as f64 - NEUTRAL[c] as f64)).round() as u8;
    }
    out
}

/// Heatmap of `neuron` over sentences `start..end`.
pub fn heatmap(ds: &ActivationDataset, m: &str, neuron: usize, start: usize, end: usize) -> Result<HeatmapDoc> {
    let x = &ds.model(m)?.activations;
    let corpus = ds.corpus();
    if neuron >= x.cols() {
        return Err(Error::InvalidArgument(format!("neuron {neuron} outside model `{m}` ({} neurons)", x.cols())));
    }
    if start >= end {
        return Err(Error::InvalidArgument(format!("empty sentence range {start}..{end}")));
    }
    if end > corpus.num_sentences() {
        return Err(Error::OutOfBounds(format!(
            "sentence range {start}..{end} exceeds {} sentences",
            corpus.num_sentences()
        )));
    }
    let mut raw = Vec::new();
    for s in start..end {
        let mut row = Vec::new();
        for (k, text) in corpus.sentence(s).iter().enumerate() {
            row.push((text.clone(), x.get(corpus.row(s, k)?, neuron)));
        }
        raw.push(row);
    }
    let scale = raw
        .iter()
        .flatten()
        .map(|(_, a)| (*a as f64).abs())
        .fold(0.0, f64::max);
    let sentences = raw
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|(text, activation)| HeatmapToken {
                    text,
                    activation,
                    intensity: if scale > 0.0 { activation as f64 / scale } else { 0.0 },
                })
                .collect()
        })
        .collect();
    Ok(HeatmapDoc {
        model: m.to_owned(),
        neuron,
        first_sentence: start,
        scale,
        positive_color: RED,
        negative_color: BLUE,
        neutral_color: NEUTRAL,
        sentences,
    })
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

impl HeatmapDoc {
    pub fn to_html(&self) -> String {
        let title = escape(&format!("{} neuron {}", self.model, self.neuron));
        let mut out = format!(
            "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>{title}</title>\n</head>\n\
             <body style=\"font-family: monospace; line-height: 2;\">\n<h1 style=\"font-size: 1.1em;\">{title}</h1>\n\
             <p style=\"font-size: 0.9em;\">scale: max |activation| = {}; red positive, blue negative</p>\n",
            self.scale
        );
        for (i, sentence) in self.sentences.iter().enumerate() {
            out.push_str(&format!("<div data-sentence=\"{}\">", self.first_sentence + i));
            for (k, tok) in sentence.iter().enumerate() {
                if k > 0 {
                    out.push(' ');
                }
                let [r, g, b] = color(tok.intensity);
                out.push_str(&format!(
                    "<span style=\"background-color: rgb({r}, {g}, {b}); padding: 0 2px;\" title=\"{}\">{}</span>",
                    tok.activation,
                    escape(&tok.text)
                ));
            }
            out.push_str("</div>\n");
        }
        out.push_str("</body>\n</html>\n");
        out
    }

    /// One line per sentence, each token on a 24-bit background colour.
    pub fn to_ansi(&self) -> String {
        let mut out = String::new();
        for sentence in &self.sentences {
            for (k, tok) in sentence.iter().enumerate() {
                if k > 0 {
                    out.push(' ');
                }
                let [r, g, b] = color(tok.intensity);
                out.push_str(&format!("\x1b[48;2;{r};{g};{b}m\x1b[38;2;0;0;0m{}\x1b[0m", tok.text));
            }
            out.push('\n');
        }
        out
    }
}
