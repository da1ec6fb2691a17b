use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DatasetManifest, Split};
use crate::error::{Result, TribeError};

/// Reassigns non-test sessions to train/val by sampling whole videos until at
/// least `holdout_fraction` of those sessions are held out. Every session of a
/// held-out video goes to val, for every subject.
pub fn make_split(
    manifest: &DatasetManifest,
    holdout_fraction: f64,
    seed: u64,
) -> Result<DatasetManifest> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(TribeError::InvalidConfig(format!(
            "holdout fraction must lie in (0, 1), got {holdout_fraction}"
        )));
    }
    let mut per_video: BTreeMap<&str, usize> = BTreeMap::new();
    for s in manifest.sessions.iter().filter(|s| s.split != Split::Test) {
        *per_video.entry(&s.video_id).or_default() += 1;
    }
    if per_video.len() < 2 {
        return Err(TribeError::InvalidConfig(format!(
            "splitting needs at least 2 distinct videos, found {}",
            per_video.len()
        )));
    }
    let total: usize = per_video.values().sum();
    let target = holdout_fraction * total as f64;

    let mut videos: Vec<&str> = per_video.keys().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    videos.shuffle(&mut rng);

    let mut held_out = BTreeSet::new();
    let mut held_sessions = 0usize;
    for video in videos.iter().take(videos.len() - 1) {
        if held_sessions as f64 >= target - 1e-9 {
            break;
        }
        held_out.insert(video.to_string());
        held_sessions += per_video[video];
    }

    let mut out = manifest.clone();
    for s in out.sessions.iter_mut().filter(|s| s.split != Split::Test) {
        s.split = if held_out.contains(&s.video_id) {
            Split::Val
        } else {
            Split::Train
        };
    }
    Ok(out)
}
