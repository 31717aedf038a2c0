//! Inputs shared by the benchmarks in `benches/`.

use mfcf::gaussian::{pre_shrink, sample_correlation};
use mfcf::{rng, synth, CliqueForest, CorrelationMatrix, SimilarityInput};

/// Pre-shrunk sample correlation of `n` draws from a random covariance.
pub fn correlation(p: usize, n: usize, seed: u64) -> CorrelationMatrix {
    let gt = synth::random_pd_matrix(p, (0.1, 10.0), &mut rng::stream(seed, &[0])).unwrap();
    let x = synth::mvn_sample(&gt.sigma_true, n, &mut rng::stream(seed, &[1])).unwrap();
    pre_shrink(&sample_correlation(&x, None).unwrap(), 0.05)
}

pub fn input(corr: &CorrelationMatrix) -> SimilarityInput {
    SimilarityInput::Similarity { matrix: corr.values().clone(), n_obs: corr.n_obs() }
}

pub fn forest(p: usize, seed: u64) -> CliqueForest {
    synth::random_clique_forest(p, Default::default(), &mut rng::from_seed(seed))
}
