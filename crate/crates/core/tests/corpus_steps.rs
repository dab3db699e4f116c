use pixmt::corpus::{make_subexamples, split_pieces, toy_corpus, PieceMode, SentencePair};
use pixmt::raster::{FrameSpec, GlyphAtlas};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Counts word pieces by scanning for a non-space following a space.
fn count_word_pieces(s: &str) -> usize {
    let bytes: Vec<char> = s.chars().collect();
    if bytes.is_empty() {
        return 0;
    }
    1 + bytes.windows(2).filter(|w| w[0] == ' ' && w[1] != ' ').count()
}

fn random_pairs(n: usize, seed: u64) -> Vec<SentencePair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alphabet: Vec<char> = "abcdefghijklmnopqrstuvwxyzäöüß .,".chars().collect();
    (0..n)
        .map(|id| {
            let len = rng.random_range(1..=30);
            let mut target: String = (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect();
            if target.trim().is_empty() {
                target = "x".into();
            }
            SentencePair { id, source: "quelle".into(), target }
        })
        .collect()
}

#[test]
fn step_count_is_piece_count_plus_one() {
    let frame = FrameSpec::desk();
    let atlas = GlyphAtlas::builtin();
    let mut pairs = toy_corpus(50, 3);
    pairs.extend(random_pairs(50, 4));
    assert_eq!(pairs.len(), 100);
    for pair in &pairs {
        let words = make_subexamples(pair, &frame, &atlas, PieceMode::Word).unwrap();
        assert_eq!(words.len(), count_word_pieces(&pair.target) + 1, "{:?}", pair.target);
        let chars = make_subexamples(pair, &frame, &atlas, PieceMode::Char).unwrap();
        assert_eq!(chars.len(), pair.target.chars().count() + 1);
    }
}

#[test]
fn steps_are_prefix_monotone_and_end_in_a_fixed_point() {
    let frame = FrameSpec::desk();
    let atlas = GlyphAtlas::builtin();
    for pair in random_pairs(40, 5).iter().chain(toy_corpus(20, 6).iter()) {
        for mode in [PieceMode::Word, PieceMode::Char] {
            let steps = make_subexamples(pair, &frame, &atlas, mode).unwrap();
            assert!(steps[0].partial_input.is_blank());
            for s in &steps {
                assert!(s.partial_input.ink_subset_of(&s.target));
            }
            for w in steps.windows(2) {
                assert_eq!(w[0].target, w[1].partial_input);
            }
            let last = steps.last().unwrap();
            assert!(last.is_terminal && last.partial_input == last.target);
            assert_eq!(steps.iter().filter(|s| s.is_terminal).count(), 1);
        }
    }
}

#[test]
fn split_agrees_with_independent_counter() {
    for pair in random_pairs(200, 9) {
        assert_eq!(split_pieces(&pair.target, PieceMode::Word).len(), count_word_pieces(&pair.target));
    }
}
