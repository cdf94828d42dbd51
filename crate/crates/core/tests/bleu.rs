use nmtx_core::bleu::{bleu, BleuStats};
use proptest::prelude::*;

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

fn corpus(lines: &[&str]) -> Vec<Vec<String>> {
    lines.iter().map(|l| toks(l)).collect()
}

/// `100 · bp · (Π p)^(1/k)` written out by hand for each fixture.
fn hand(precisions: &[f64], bp: f64) -> f64 {
    100.0 * bp * precisions.iter().product::<f64>().powf(1.0 / precisions.len() as f64)
}

/// Hand-counted fixtures: (hypotheses, references, expected BLEU).
fn fixtures() -> Vec<(Vec<&'static str>, Vec<&'static str>, f64)> {
    vec![
        (vec!["the cat sat on the mat"], vec!["the cat sat on the mat"], 100.0),
        (vec!["dogs run far away"], vec!["the cat sat on"], 0.0),
        // no 4-grams in the hypothesis: p1 = p2 = p3 = 1, BP = e^(1 - 4/3)
        (vec!["the cat sat"], vec!["the cat sat down"], hand(&[1.0, 1.0, 1.0], (1.0f64 - 4.0 / 3.0).exp())),
        (vec!["The Cat SAT on the MAT"], vec!["the cat sat on the mat"], 100.0),
        // p2 = 0 after clipping
        (vec!["the the the the"], vec!["the cat"], 0.0),
        (vec!["a b c d e"], vec!["a b c d f"], hand(&[4.0 / 5.0, 3.0 / 4.0, 2.0 / 3.0, 1.0 / 2.0], 1.0)),
        // longer hypothesis: no brevity penalty
        (vec!["a b c d e f"], vec!["a b c d"], hand(&[4.0 / 6.0, 3.0 / 5.0, 2.0 / 4.0, 1.0 / 3.0], 1.0)),
        (vec!["a b c d"], vec!["a b c d e f g h"], hand(&[1.0; 4], (1.0f64 - 2.0).exp())),
        // corpus-level pooling of counts
        (
            vec!["a b c d", "x y z w"],
            vec!["a b c d", "x y q w"],
            hand(&[7.0 / 8.0, 4.0 / 6.0, 2.0 / 4.0, 1.0 / 2.0], 1.0),
        ),
        (vec!["a b c a"], vec!["a b c a b"], hand(&[1.0; 4], (1.0f64 - 5.0 / 4.0).exp())),
    ]
}

#[test]
fn hand_computed_fixtures() {
    for (i, (h, r, expected)) in fixtures().into_iter().enumerate() {
        let got = bleu(&corpus(&h), &corpus(&r)).unwrap();
        assert!((got - expected).abs() < 0.01, "fixture {i}: {got} vs {expected}");
    }
}

#[test]
fn length_mismatch_is_an_error() {
    assert!(bleu(&corpus(&["a"]), &corpus(&["a", "b"])).is_err());
}

fn sentence_strategy() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec("[a-eA-E]{1,2}", 1..9)
}

proptest! {
    #[test]
    fn self_bleu_is_hundred(c in prop::collection::vec(sentence_strategy(), 1..5)) {
        let score = bleu(&c, &c).unwrap();
        prop_assert!((score - 100.0).abs() < 1e-9, "{}", score);
    }

    #[test]
    fn case_changes_do_not_matter(h in sentence_strategy(), r in sentence_strategy()) {
        let upper: Vec<String> = h.iter().map(|t| t.to_uppercase()).collect();
        let lower: Vec<String> = r.iter().map(|t| t.to_lowercase()).collect();
        let a = bleu(std::slice::from_ref(&h), std::slice::from_ref(&r)).unwrap();
        let b = bleu(&[upper], &[lower]).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn single_sentence_corpus_equals_sentence_score(h in sentence_strategy(), r in sentence_strategy()) {
        let corpus_score = bleu(std::slice::from_ref(&h), std::slice::from_ref(&r)).unwrap();
        prop_assert_eq!(corpus_score, BleuStats::sentence(&h, &r).score());
        prop_assert!((0.0..=100.0 + 1e-9).contains(&corpus_score));
    }
}
