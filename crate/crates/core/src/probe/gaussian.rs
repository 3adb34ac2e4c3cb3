use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::variance;

const LN_2PI: f64 = 1.837_877_066_409_345_3;
const EM_MAX_ITERATIONS: usize = 200;
const EM_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmOptions {
    /// Diagonal Gaussian components per class; more than one uses EM.
    pub components: usize,
    /// Classes with fewer fit examples are dropped.
    pub min_examples: usize,
    /// Variance floor as a fraction of each feature's total variance.
    pub floor_fraction: f64,
}

impl Default for GmmOptions {
    fn default() -> Self {
        GmmOptions {
            components: 1,
            min_examples: 2,
            floor_fraction: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassGaussian {
    pub label: String,
    pub prior: f64,
    pub count: usize,
    pub components: Vec<Component>,
}

/// Class-conditional diagonal Gaussians over a subset of neurons.
/// Classes are kept in lexicographic label order, which is also the
/// tie-break order when predicting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianClassModel {
    pub neurons: Vec<usize>,
    pub classes: Vec<ClassGaussian>,
    pub variance_floor: Vec<f64>,
    /// Classes dropped for having too few fit examples.
    pub dropped: Vec<String>,
}

fn log_density(x: &[f64], c: &Component) -> f64 {
    x.iter()
        .zip(&c.mean)
        .zip(&c.variance)
        .map(|((v, m), s)| -0.5 * (LN_2PI + s.ln() + (v - m) * (v - m) / s))
        .sum()
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn moments(rows: &[&[f64]], weights: Option<&[f64]>, floor: &[f64]) -> Component {
    let d = floor.len();
    let mut mean = vec![0.0; d];
    let mut var = vec![0.0; d];
    let total: f64 = weights.map_or(rows.len() as f64, |w| w.iter().sum());
    for j in 0..d {
        let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        match weights {
            None => {
                mean[j] = crate::numerics::mean(&col);
                var[j] = variance(&col);
            }
            Some(w) => {
                let m = col.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() / total;
                mean[j] = m;
                var[j] = col.iter().zip(w).map(|(x, w)| w * (x - m) * (x - m)).sum::<f64>() / total;
            }
        }
        var[j] = var[j].max(floor[j]);
    }
    Component {
        weight: 1.0,
        mean,
        variance: var,
    }
}

fn fit_mixture(rows: &[&[f64]], k: usize, floor: &[f64]) -> Vec<Component> {
    let k = k.min(rows.len()).max(1);
    if k == 1 {
        return vec![moments(rows, None, floor)];
    }
    // Initial responsibilities: contiguous quantile blocks along the first feature.
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| rows[a][0].total_cmp(&rows[b][0]).then(a.cmp(&b)));
    let mut resp = vec![vec![0.0; rows.len()]; k];
    for (rank, &i) in order.iter().enumerate() {
        resp[rank * k / rows.len()][i] = 1.0;
    }
    let mut comps = Vec::new();
    let mut previous = f64::NEG_INFINITY;
    for _ in 0..EM_MAX_ITERATIONS {
        comps = resp
            .iter()
            .map(|w| {
                let mass: f64 = w.iter().sum();
                let mut c = if mass > 0.0 {
                    moments(rows, Some(w), floor)
                } else {
                    moments(rows, None, floor)
                };
                c.weight = mass / rows.len() as f64;
                c
            })
            .collect::<Vec<_>>();
        let mut loglik = 0.0;
        for (i, x) in rows.iter().enumerate() {
            let logs: Vec<f64> = comps.iter().map(|c| c.weight.ln() + log_density(x, c)).collect();
            let norm = log_sum_exp(&logs);
            loglik += norm;
            for (c, l) in logs.iter().enumerate() {
                resp[c][i] = (l - norm).exp();
            }
        }
        if (loglik - previous).abs() <= EM_TOLERANCE * loglik.abs().max(1.0) {
            break;
        }
        previous = loglik;
    }
    comps
}

impl GaussianClassModel {
    /// Fits one mixture per class on feature rows (`rows[i]` has one value
    /// per neuron in `neurons`).
    pub fn fit(neurons: Vec<usize>, rows: &[Vec<f64>], labels: &[String], opts: &GmmOptions) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::Dimension(format!("{} rows but {} labels", rows.len(), labels.len())));
        }
        if opts.components == 0 {
            return Err(Error::InvalidArgument("components per class must be at least 1".into()));
        }
        let d = neurons.len();
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::Dimension(format!("feature row of length {}, expected {d}", r.len())));
        }
        let variance_floor: Vec<f64> = (0..d)
            .map(|j| {
                let total = variance(&rows.iter().map(|r| r[j]).collect::<Vec<_>>());
                if total > 0.0 {
                    opts.floor_fraction * total
                } else {
                    1.0
                }
            })
            .collect();
        let mut groups: BTreeMap<&str, Vec<&[f64]>> = BTreeMap::new();
        for (r, l) in rows.iter().zip(labels) {
            groups.entry(l.as_str()).or_default().push(r);
        }
        let min = opts.min_examples.max(2);
        let dropped: Vec<String> = groups
            .iter()
            .filter(|(_, v)| v.len() < min)
            .map(|(k, _)| k.to_string())
            .collect();
        groups.retain(|_, v| v.len() >= min);
        if groups.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 classes with {min}+ examples, found {}",
                groups.len()
            )));
        }
        let kept: usize = groups.values().map(Vec::len).sum();
        let classes = groups
            .into_iter()
            .map(|(label, members)| ClassGaussian {
                label: label.to_owned(),
                prior: members.len() as f64 / kept as f64,
                count: members.len(),
                components: fit_mixture(&members, opts.components, &variance_floor),
            })
            .collect();
        Ok(GaussianClassModel {
            neurons,
            classes,
            variance_floor,
            dropped,
        })
    }

    pub fn labels(&self) -> Vec<&str> {
        self.classes.iter().map(|c| c.label.as_str()).collect()
    }

    /// Unnormalised log posterior per class.
    pub fn log_posteriors(&self, x: &[f64]) -> Vec<f64> {
        self.classes
            .iter()
            .map(|c| {
                let logs: Vec<f64> = c.components.iter().map(|k| k.weight.ln() + log_density(x, k)).collect();
                c.prior.ln() + log_sum_exp(&logs)
            })
            .collect()
    }

    /// Index of the most probable class; ties go to the lower index.
    pub fn predict_index(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (i, s) in self.log_posteriors(x).into_iter().enumerate() {
            if s > best_score {
                best = i;
                best_score = s;
            }
        }
        best
    }

    pub fn predict(&self, x: &[f64]) -> &str {
        &self.classes[self.predict_index(x)].label
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    /// Gold count.
    pub support: usize,
    pub predicted: usize,
    pub true_positive: usize,
    /// `None` when the class is absent from the gold labels.
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    /// Union of model classes and gold labels, sorted.
    pub labels: Vec<String>,
    /// `confusion[gold][predicted]`, indexed like `labels`.
    pub confusion: Vec<Vec<usize>>,
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub total: usize,
}

impl ClassificationReport {
    /// Mean F1 over classes present in the gold labels.
    pub fn macro_f1(&self) -> f64 {
        let f: Vec<f64> = self.per_class.iter().filter_map(|c| c.f1).collect();
        if f.is_empty() {
            0.0
        } else {
            f.iter().sum::<f64>() / f.len() as f64
        }
    }

    pub fn f1(&self, label: &str) -> Option<f64> {
        self.per_class.iter().find(|c| c.label == label).and_then(|c| c.f1)
    }
}

/// Confusion matrix, per-class precision/recall/F1 and micro accuracy of
/// `model` on held-out rows.
pub fn gmm_score(model: &GaussianClassModel, rows: &[Vec<f64>], gold: &[String]) -> Result<ClassificationReport> {
    if rows.len() != gold.len() {
        return Err(Error::Dimension(format!("{} rows but {} gold labels", rows.len(), gold.len())));
    }
    if rows.is_empty() {
        return Err(Error::InsufficientData("no evaluation rows".into()));
    }
    let mut labels: Vec<String> = model.classes.iter().map(|c| c.label.clone()).collect();
    labels.extend(gold.iter().cloned());
    labels.sort();
    labels.dedup();
    let index: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let n = labels.len();
    let mut confusion = vec![vec![0usize; n]; n];
    for (x, g) in rows.iter().zip(gold) {
        let p = index[model.predict(x)];
        confusion[index[g.as_str()]][p] += 1;
    }
    let correct: usize = (0..n).map(|i| confusion[i][i]).sum();
    let per_class = labels
        .iter()
        .enumerate()
        .map(|(i, label)| {
            let support: usize = confusion[i].iter().sum();
            let predicted: usize = confusion.iter().map(|row| row[i]).sum();
            let tp = confusion[i][i];
            let (precision, recall, f1) = if support == 0 {
                (None, None, None)
            } else {
                let p = if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
                let r = tp as f64 / support as f64;
                let f = if tp == 0 { 0.0 } else { 2.0 * p * r / (p + r) };
                (Some(p), Some(r), Some(f))
            };
            ClassMetrics {
                label: label.clone(),
                support,
                predicted,
                true_positive: tp,
                precision,
                recall,
                f1,
            }
        })
        .collect();
    Ok(ClassificationReport {
        labels,
        confusion,
        per_class,
        accuracy: correct as f64 / rows.len() as f64,
        total: rows.len(),
    })
}
