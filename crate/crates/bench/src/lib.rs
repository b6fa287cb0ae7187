//! Fixtures shared by the benches.

use motionhmm::hmm::{self, HmmSpec, TrainConfig};
use motionhmm::{FhmmParams, HmmParams, ObservationSequence, Topology};

/// A left-to-right model with `k` states over `d` dimensions and `n`
/// sequences of length `t` sampled from it.
pub fn left_to_right(k: usize, d: usize, n: usize, t: usize) -> (HmmParams, Vec<ObservationSequence>) {
    let spec = HmmSpec::new(k, Topology::left_to_right(1));
    let seed_data: Vec<ObservationSequence> = (0..n as u64)
        .map(|i| {
            let mut rng = motionhmm::rng::Rng::new(i);
            let data = ndarray::Array2::from_shape_fn((t, d), |(r, _)| (r * k / t) as f64 + 0.3 * rng.normal());
            ObservationSequence::new(data, 0.01)
        })
        .collect();
    let model = hmm::initialize(&seed_data, &spec, &TrainConfig::default()).expect("valid fixture");
    let data = (0..n as u64).map(|i| hmm::sample(&model, t, 100 + i)).collect();
    (model, data)
}

/// An FHMM of `m` copies of the same chain.
pub fn fhmm(k: usize, m: usize, d: usize, t: usize) -> (FhmmParams, ObservationSequence) {
    let (chain, data) = left_to_right(k, d, 1, t);
    let model = FhmmParams::new(vec![chain; m]).expect("valid fixture");
    (model, data.into_iter().next().expect("one sequence"))
}
