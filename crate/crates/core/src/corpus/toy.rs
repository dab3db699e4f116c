//! A small compositional German→English corpus for desk-scale experiments.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::pair::SentencePair;

const SUBJECTS: &[(&str, &str)] = &[
    ("der Hund", "the dog"),
    ("die Katze", "the cat"),
    ("der Mann", "the man"),
    ("die Frau", "the woman"),
    ("das Kind", "the child"),
    ("der Vogel", "the bird"),
    ("die Maus", "the mouse"),
    ("der Bär", "the bear"),
];

const VERBS: &[(&str, &str)] = &[
    ("läuft", "runs"),
    ("schläft", "sleeps"),
    ("singt", "sings"),
    ("isst", "eats"),
    ("spielt", "plays"),
    ("lacht", "laughs"),
    ("schwimmt", "swims"),
    ("wartet", "waits"),
];

const ADVERBS: &[(&str, &str)] = &[
    ("", ""),
    ("heute", "today"),
    ("hier", "here"),
    ("oft", "often"),
    ("nie", "never"),
    ("morgen", "tomorrow"),
];

/// Number of distinct sentences the generator can produce.
pub fn toy_corpus_size() -> usize {
    SUBJECTS.len() * VERBS.len() * ADVERBS.len()
}

/// `n` distinct pairs drawn without replacement in a seed-determined order.
///
/// Panics if `n` exceeds [`toy_corpus_size`].
pub fn toy_corpus(n: usize, seed: u64) -> Vec<SentencePair> {
    assert!(n <= toy_corpus_size(), "toy corpus has only {} sentences", toy_corpus_size());
    let mut all = Vec::with_capacity(toy_corpus_size());
    for &(sd, se) in SUBJECTS {
        for &(vd, ve) in VERBS {
            for &(ad, ae) in ADVERBS {
                let (source, target) = if ad.is_empty() {
                    (format!("{sd} {vd}"), format!("{se} {ve}"))
                } else {
                    (format!("{sd} {vd} {ad}"), format!("{se} {ve} {ae}"))
                };
                all.push((source, target));
            }
        }
    }
    all.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    all.into_iter()
        .take(n)
        .enumerate()
        .map(|(id, (source, target))| SentencePair { id, source, target })
        .collect()
}

/// Splits off the last `ceil(fraction * len)` pairs as a held-out set.
/// Ids are left untouched.
pub fn split_holdout(pairs: &[SentencePair], fraction: f64) -> (Vec<SentencePair>, Vec<SentencePair>) {
    let held = ((pairs.len() as f64) * fraction).ceil() as usize;
    let held = held.min(pairs.len());
    let cut = pairs.len() - held;
    (pairs[..cut].to_vec(), pairs[cut..].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{fits, FrameSpec};
    use std::collections::HashSet;

    #[test]
    fn deterministic_distinct_and_renderable() {
        let a = toy_corpus(40, 7);
        assert_eq!(a, toy_corpus(40, 7));
        assert_ne!(a, toy_corpus(40, 8));
        let sources: HashSet<_> = a.iter().map(|p| p.source.clone()).collect();
        assert_eq!(sources.len(), 40);
        let frame = FrameSpec::desk();
        for p in toy_corpus(toy_corpus_size(), 0) {
            assert!(fits(&p.source, &frame) && fits(&p.target, &frame), "{p:?}");
            assert_eq!(p.source.split(' ').count(), p.target.split(' ').count());
        }
    }

    #[test]
    fn holdout_split() {
        let pairs = toy_corpus(36, 1);
        let (train, dev) = split_holdout(&pairs, 0.1);
        assert_eq!((train.len(), dev.len()), (32, 4));
        assert_eq!(dev[0].id, 32);
        let (train, dev) = split_holdout(&pairs[..1], 0.1);
        assert_eq!((train.len(), dev.len()), (0, 1));
    }
}
