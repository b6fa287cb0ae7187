use ndarray::Array2;

use super::HmmParams;
use crate::dataset::DEFAULT_SAMPLE_RATE_HZ;
use crate::features::ObservationSequence;
use crate::rng::Rng;

/// Draws a length-`t` sequence together with its hidden state path.
pub fn sample_with_states(model: &HmmParams, t: usize, seed: u64) -> (ObservationSequence, Vec<usize>) {
    let mut rng = Rng::new(seed);
    let d = model.dim();
    let mut data = Array2::zeros((t, d));
    let mut states = Vec::with_capacity(t);
    let mut state = rng.categorical(model.pi.as_slice().expect("standard layout"));
    for i in 0..t {
        if i > 0 {
            state = rng.categorical(model.transitions.row(state).as_slice().expect("standard layout"));
        }
        states.push(state);
        for j in 0..d {
            data[[i, j]] = model.means[[state, j]] + model.covariances[[state, j]].sqrt() * rng.normal();
        }
    }
    (ObservationSequence::new(data, 1.0 / DEFAULT_SAMPLE_RATE_HZ), states)
}

pub fn sample(model: &HmmParams, t: usize, seed: u64) -> ObservationSequence {
    sample_with_states(model, t, seed).0
}
