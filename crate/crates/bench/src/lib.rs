//! Deterministic fixtures for the benchmarks.

use nalgebra::DMatrix;
use neuron_cartographer::synth::Rng;
use neuron_cartographer::{ActivationDataset, ActivationMatrix, ModelRecord, TokenCorpus};

/// Standard normal `rows x cols` matrix.
pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = Rng::new(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.normal())
}

/// `models` models of `neurons` neurons over `tokens` tokens in sentences of
/// 20. Every model carries a shared latent in its first five neurons.
pub fn random_dataset(models: usize, neurons: usize, tokens: usize, seed: u64) -> ActivationDataset {
    let mut rng = Rng::new(seed);
    let latent: Vec<f64> = (0..tokens).map(|_| rng.normal()).collect();
    let sentences = (0..tokens)
        .collect::<Vec<_>>()
        .chunks(20)
        .map(|c| c.iter().map(|i| format!("w{}", i % 97)).collect())
        .collect();
    let corpus = TokenCorpus::new(sentences).expect("corpus");
    let records = (0..models)
        .map(|m| {
            let mut x = ActivationMatrix::zeros(tokens, neurons);
            for (t, &z) in latent.iter().enumerate() {
                for n in 0..neurons {
                    let noise = rng.normal();
                    let v = if n < 5 { z + 0.1 * noise } else { noise };
                    x.set(t, n, v as f32);
                }
            }
            ModelRecord::new(format!("m{m}"), x)
        })
        .collect();
    ActivationDataset::new(corpus, records).expect("dataset")
}
