//! Monte-Carlo shot generation from a detector error model.
//!
//! Every mechanism fires independently with its probability; a detector or
//! observable bit is the parity of the fired mechanisms that touch it. Shot
//! `i` draws from its own ChaCha stream (`stream = i`), so a shot's content
//! depends only on the seed and its index, never on how many shots are
//! requested.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::formats::{DetectorModel, ShotTable};

/// Detection events for one shot and the observable flips that go with them.
pub fn sample_shot(model: &DetectorModel, seed: u64, shot: u64) -> (Vec<u8>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shot);
    let mut dets = vec![0u8; model.n_detectors];
    let mut obs = vec![0u8; model.n_observables];
    for m in &model.mechanisms {
        let u: f64 = rng.gen();
        if u < m.probability {
            m.detectors.iter().for_each(|&d| dets[d] ^= 1);
            m.observables.iter().for_each(|&o| obs[o] ^= 1);
        }
    }
    (dets, obs)
}

/// Samples `n_shots` shots: `(detections, observables)`.
pub fn sample(model: &DetectorModel, n_shots: usize, seed: u64) -> Result<(ShotTable, ShotTable)> {
    model.validate()?;
    let shots: Vec<(Vec<u8>, Vec<u8>)> = (0..n_shots as u64)
        .into_par_iter()
        .map(|s| sample_shot(model, seed, s))
        .collect();
    let mut dets = Vec::with_capacity(n_shots * model.n_detectors);
    let mut obs = Vec::with_capacity(n_shots * model.n_observables);
    for (d, o) in shots {
        dets.extend(d);
        obs.extend(o);
    }
    Ok((
        ShotTable::from_bits(model.n_detectors, dets)?,
        ShotTable::from_bits(model.n_observables, obs)?,
    ))
}
