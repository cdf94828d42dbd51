mod common;

use std::collections::BTreeMap;

use common::tiny_model;
use nmtx_core::bleu::bleu;
use nmtx_core::lm::{lm_sentence_logprob, LanguageModel, LmConfig};
use nmtx_core::rescore::{
    add_feature, rerank, rerank_indices, simplex_grid, tune_weights, tune_weights_on, NBestEntry, NBestList,
    NBestSentence, EXTERNAL,
};
use nmtx_core::{seeded_rng, Error, Seq2Seq};
use proptest::prelude::*;
use rand::Rng;

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

fn entry(tokens: &str, total: f64, rank: usize, feats: &[(&str, f64)]) -> NBestEntry {
    NBestEntry {
        tokens: toks(tokens),
        features: feats.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        total,
        rank,
        line: 0,
    }
}

/// Random n-best list with features `a`, `b` and random totals.
fn random_nbest(rng: &mut impl Rng, sentences: usize, per: usize) -> (NBestList, Vec<Vec<String>>) {
    let words = ["w0", "w1", "w2", "w3", "w4", "w5"];
    let mut sents = Vec::new();
    let mut refs = Vec::new();
    let sentence = |rng: &mut dyn rand::RngCore| -> Vec<String> {
        let len = rng.gen_range(2..7);
        (0..len).map(|_| words[rng.gen_range(0..words.len())].to_string()).collect()
    };
    for id in 0..sentences {
        refs.push(sentence(rng));
        let entries = (0..per)
            .map(|r| NBestEntry {
                tokens: sentence(rng),
                features: BTreeMap::from([
                    ("a".to_string(), rng.gen_range(-5.0..0.0)),
                    ("b".to_string(), rng.gen_range(-5.0..0.0)),
                ]),
                total: rng.gen_range(-10.0..0.0),
                rank: r + 1,
                line: 0,
            })
            .collect();
        sents.push(NBestSentence { id, entries });
    }
    (NBestList { sentences: sents }, refs)
}

/// Straightforward reranker: sort each sentence's entries by (−score, rank).
fn brute_rerank(nb: &NBestList, names: &[&str], w: &[f64]) -> Vec<usize> {
    nb.sentences
        .iter()
        .map(|s| {
            let mut scored: Vec<(f64, usize, usize)> = s
                .entries
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    let v: f64 = names.iter().zip(w).map(|(n, w)| w * e.feature(n).unwrap()).sum();
                    (v, e.rank, i)
                })
                .collect();
            scored.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap().then(x.1.cmp(&y.1)));
            scored[0].2
        })
        .collect()
}

#[test]
fn rerank_matches_sorting_oracle() {
    let mut rng = seeded_rng(200);
    for _ in 0..50 {
        let (nb, _) = random_nbest(&mut rng, 6, 5);
        let w = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
        let names = [EXTERNAL, "a", "b"];
        assert_eq!(rerank_indices(&nb, &names, &w).unwrap(), brute_rerank(&nb, &names, &w));
    }
}

#[test]
fn ties_fall_back_to_origin_rank() {
    let nb = NBestList {
        sentences: vec![NBestSentence {
            id: 0,
            entries: vec![
                entry("late", -1.0, 3, &[("f", 0.5)]),
                entry("first", -1.0, 1, &[("f", 0.5)]),
                entry("second", -1.0, 2, &[("f", 0.5)]),
            ],
        }],
    };
    assert_eq!(rerank(&nb, &["f"], &[1.0]).unwrap(), [toks("first")]);
}

#[test]
fn two_feature_grid_matches_eleven_point_oracle() {
    let mut rng = seeded_rng(201);
    for _ in 0..30 {
        let (nb, refs) = random_nbest(&mut rng, 8, 6);
        let names = [EXTERNAL, "a"];
        // oracle: evaluate each of the 11 points, prefer larger external weight on ties
        let mut best: Option<(f64, f64)> = None;
        for k in 0..=10 {
            let we = k as f64 / 10.0;
            let picks = brute_rerank(&nb, &names, &[we, 1.0 - we]);
            let hyps: Vec<Vec<String>> =
                nb.sentences.iter().zip(&picks).map(|(s, &i)| s.entries[i].tokens.clone()).collect();
            let score = bleu(&hyps, &refs).unwrap();
            if best.is_none_or(|(bs, bw)| score > bs || (score == bs && we > bw)) {
                best = Some((score, we));
            }
        }
        let tuned = tune_weights(&nb, &refs, &names, 0.1).unwrap();
        let (score, we) = best.unwrap();
        assert!((tuned[0] - we).abs() < 1e-12, "tuned {tuned:?}, oracle external weight {we}");
        let got = rerank(&nb, &names, &tuned).unwrap();
        assert!((bleu(&got, &refs).unwrap() - score).abs() < 1e-9);
    }
}

#[test]
fn tuned_weights_are_never_worse_than_any_grid_point() {
    let mut rng = seeded_rng(202);
    let (nb, refs) = random_nbest(&mut rng, 10, 8);
    let names = [EXTERNAL, "a", "b"];
    let grid = simplex_grid(3, 0.1).unwrap();
    let (w, score) = tune_weights_on(&nb, &refs, &names, &grid).unwrap();
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    for g in &grid {
        let s = bleu(&rerank(&nb, &names, g).unwrap(), &refs).unwrap();
        assert!(s <= score + 1e-9);
    }
}

#[test]
fn empty_grid_and_missing_features_are_errors() {
    let mut rng = seeded_rng(203);
    let (nb, refs) = random_nbest(&mut rng, 3, 3);
    assert!(matches!(tune_weights_on(&nb, &refs, &["a"], &[]), Err(Error::Empty(_))));
    assert!(matches!(
        tune_weights(&nb, &refs, &["a", "nmt"], 0.1),
        Err(Error::MissingFeature(n)) if n == "nmt"
    ));
}

#[test]
fn seq2seq_feature_is_length_normalised_logprob() {
    let model: Seq2Seq<f64> = tiny_model(4, 5, 5, 0.5, 7);
    let mut nb = NBestList::parse("0 ||| t1 t2 ||| ||| -2\n0 ||| t3 ||| ||| -3\n1 ||| t0 t0 t4 ||| ||| -1\n").unwrap();
    let sources = vec![toks("s1 s2"), toks("s3")];
    add_feature(&mut nb, Some(&sources), &model, "nmt").unwrap();
    for (s, src) in nb.sentences.iter().zip(&sources) {
        for e in &s.entries {
            let sid = model.src_vocab.encode(src);
            let tid = model.tgt_vocab.encode(&e.tokens);
            let manual: f64 = model.target_logprobs(&sid, &tid).unwrap().iter().sum();
            let expected = manual / (e.tokens.len() + 1) as f64;
            assert!((e.features["nmt"] - expected).abs() < 1e-12);
        }
    }
    // re-adding overwrites rather than duplicating
    let before = nb.clone();
    add_feature(&mut nb, Some(&sources), &model, "nmt").unwrap();
    assert_eq!(nb, before);
}

#[test]
fn lm_feature_ignores_the_source() {
    let vocab = common::vocab(6, "t");
    let lm = LanguageModel::<f64>::new(vocab, &LmConfig { hidden_size: 4, init_range: 0.5 }, &mut seeded_rng(9)).unwrap();
    let mut nb = NBestList::parse("0 ||| t1 t2 ||| ||| -2\n").unwrap();
    add_feature(&mut nb, None, &lm, "lm").unwrap();
    let ids = lm.vocab().encode(&toks("t1 t2"));
    let expected = lm_sentence_logprob(&lm, &ids).unwrap() / 3.0;
    assert!((nb.sentences[0].entries[0].features["lm"] - expected).abs() < 1e-12);
}

#[test]
fn empty_hypothesis_reports_its_line() {
    let model: Seq2Seq<f32> = tiny_model(4, 5, 5, 0.5, 7);
    let mut nb = NBestList::parse("0 ||| t1 ||| ||| -2\n0 |||  ||| ||| -3\n").unwrap();
    let err = add_feature(&mut nb, Some(&[toks("s1")]), &model, "nmt").unwrap_err();
    assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
}

#[test]
fn misaligned_sources_are_rejected() {
    let model: Seq2Seq<f32> = tiny_model(4, 5, 5, 0.5, 7);
    let mut nb = NBestList::parse("0 ||| t1 ||| ||| -2\n").unwrap();
    assert!(add_feature(&mut nb, Some(&[]), &model, "nmt").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reranking_is_scale_invariant(seed in any::<u64>(), c in 0.01f64..100.0, w0 in 0.0f64..1.0, w1 in 0.0f64..1.0) {
        let mut rng = seeded_rng(seed);
        let (nb, _) = random_nbest(&mut rng, 5, 6);
        let names = [EXTERNAL, "a"];
        let a = rerank_indices(&nb, &names, &[w0, w1]).unwrap();
        let b = rerank_indices(&nb, &names, &[c * w0, c * w1]).unwrap();
        // exact-float ties can be broken differently only if scaling rounds; compare scores instead
        for ((s, i), j) in nb.sentences.iter().zip(&a).zip(&b) {
            let score = |k: usize| w0 * s.entries[k].total + w1 * s.entries[k].features["a"];
            prop_assert!((score(*i) - score(*j)).abs() < 1e-9);
        }
    }

    #[test]
    fn format_roundtrips(seed in any::<u64>()) {
        let mut rng = seeded_rng(seed);
        let (nb, _) = random_nbest(&mut rng, 4, 3);
        prop_assert_eq!(NBestList::parse(&nb.to_text()).map(|p| p.to_text()).unwrap(), nb.to_text());
    }
}

#[test]
fn sentences_without_entries_count_as_empty_output() {
    // sentence 1 has no hypotheses at all
    let nb = NBestList::parse("0 ||| a b ||| f=0 ||| -1\n0 ||| a c ||| f=1 ||| -2\n2 ||| x y ||| f=0 ||| -1\n").unwrap();
    let refs = vec![toks("a c"), toks("p q r"), toks("x y")];
    let aligned = nmtx_core::rescore::align_by_id(&nb, rerank(&nb, &["f"], &[1.0]).unwrap(), 3).unwrap();
    assert_eq!(aligned, [toks("a c"), vec![], toks("x y")]);
    let (w, score) = tune_weights_on(&nb, &refs, &[EXTERNAL, "f"], &simplex_grid(2, 0.5).unwrap()).unwrap();
    let hyps = nmtx_core::rescore::align_by_id(&nb, rerank(&nb, &[EXTERNAL, "f"], &w).unwrap(), 3).unwrap();
    assert!((bleu(&hyps, &refs).unwrap() - score).abs() < 1e-12);
    // an id past the reference file is an error
    assert!(tune_weights_on(&nb, &refs[..2], &[EXTERNAL], &[vec![1.0]]).is_err());
}
