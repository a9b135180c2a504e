use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DatasetError, RawSequence, Result, ScenarioSequence, TARGET_HZ};
use crate::evaluation::segmentize;

const MAX_CONTEXT: usize = 8;

/// Cuts one sequence per maximal run of a non-zero label, padded with
/// 0..=8 frames of context on each side (clipped at the sequence ends).
/// Output ids are `"{id}#{k}"` in order of occurrence.
pub fn extract_scenarios(seq: &RawSequence, seed: u64) -> Result<Vec<ScenarioSequence>> {
    if (seq.hz - TARGET_HZ).abs() > 1e-9 {
        return Err(DatasetError::Invalid {
            id: seq.id.clone(),
            reason: format!("extraction needs 4 Hz input, got {} Hz", seq.hz),
        });
    }
    seq.validate()?;
    let Some(labels) = seq.labels() else {
        return Err(DatasetError::Invalid {
            id: seq.id.clone(),
            reason: "extraction needs every frame labeled".into(),
        });
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (k, s) in segmentize(&labels)
        .into_iter()
        .filter(|s| s.class != 0)
        .enumerate()
    {
        let left = rng.random_range(0..=MAX_CONTEXT);
        let right = rng.random_range(0..=MAX_CONTEXT);
        let start = s.start.saturating_sub(left);
        let end = (s.end + 1 + right).min(labels.len());
        out.push(ScenarioSequence::new(RawSequence {
            id: format!("{}#{k}", seq.id),
            source: seq.source.clone(),
            hz: seq.hz,
            frames: seq.frames[start..end].to_vec(),
            lanes: seq.lanes.clone(),
        })?);
    }
    Ok(out)
}
