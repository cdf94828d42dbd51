use std::collections::BTreeMap;

use nmtx_core::bleu::bleu;
use nmtx_core::decoder::beam_search;
use nmtx_core::model::ModelConfig;
use nmtx_core::synth::{
    apply_map, gen_toy_bitext, invert_map, make_copy_corpus, make_perm_corpus, permute_vocabulary, GrammarSpec,
    Reorder, Sentence, ToyGrammar,
};
use nmtx_core::trainer::{train, Pair, TrainConfig};
use nmtx_core::transfer::FreezeMask;
use nmtx_core::{seeded_rng, Seq2Seq, Vocabulary};
use proptest::prelude::*;

#[test]
fn oracle_decoder_recovers_the_target() {
    for reorder in [Reorder::Monotone, Reorder::LocalSwap, Reorder::Reverse] {
        let spec = GrammarSpec {
            reorder,
            ..GrammarSpec::desk()
        };
        let g = ToyGrammar::new(spec.clone()).unwrap();
        let pairs = gen_toy_bitext(&spec, 5, 300).unwrap();
        let hyps: Vec<Sentence> = pairs.iter().map(|(src, _)| g.oracle_decode(src)).collect();
        let refs: Vec<Sentence> = pairs.iter().map(|(_, tgt)| tgt.clone()).collect();
        let score = bleu(&hyps, &refs).unwrap();
        assert!(score > 90.0, "{reorder:?}: {score}");
    }
}

#[test]
fn copy_model_reproduces_its_input() {
    let spec = GrammarSpec {
        tgt_types: 20,
        ..GrammarSpec::desk()
    };
    let g = ToyGrammar::new(spec).unwrap();
    let mut rng = seeded_rng(12);
    let mono: Vec<Sentence> = (0..1600)
        .map(|_| g.sample_target(&mut rng).iter().map(|&t| g.tgt_word(t)).collect())
        .collect();
    let copy = make_copy_corpus(&mono);
    let vocab = Vocabulary::build(mono.iter(), None);
    let to_pair = |(s, t): &(Sentence, Sentence)| Pair::new(vocab.encode(s), vocab.encode(t));
    let train_set: Vec<Pair> = copy[..1500].iter().map(to_pair).collect();
    let test_set: Vec<Pair> = copy[1500..].iter().map(to_pair).collect();

    let mut cfg = ModelConfig::desk(vocab.len(), vocab.len());
    cfg.hidden_size = 32;
    let model: Seq2Seq<f32> = Seq2Seq::new(cfg, vocab.clone(), vocab.clone(), &mut seeded_rng(13)).unwrap();
    let tc = TrainConfig {
        epochs: 30,
        minibatch_size: 8,
        dropout_p: 0.0,
        seed: 14,
        ..TrainConfig::desk()
    };
    let (model, _) = train(model, &train_set, &test_set[..50], &tc, &FreezeMask::none()).unwrap();
    let correct = test_set
        .iter()
        .filter(|p| beam_search(&model, &p.source, 1, p.source.len() + 5).unwrap()[0].tokens == p.target)
        .count();
    let accuracy = correct as f64 / test_set.len() as f64;
    assert!(accuracy >= 0.95, "greedy exact-match accuracy {accuracy}");
}

fn counts(c: &[Sentence]) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for s in c {
        for w in s {
            *m.entry(w.clone()).or_insert(0) += 1;
        }
    }
    m
}

fn corpus_strategy() -> impl Strategy<Value = Vec<Sentence>> {
    prop::collection::vec(prop::collection::vec("[a-h]", 1..7), 1..8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn permutation_is_a_bijection_on_types(corpus in corpus_strategy(), seed in any::<u64>()) {
        let (perm, map) = permute_vocabulary(&corpus, seed);
        let mut before: Vec<usize> = counts(&corpus).into_values().collect();
        let mut after: Vec<usize> = counts(&perm).into_values().collect();
        before.sort_unstable();
        after.sort_unstable();
        prop_assert_eq!(before, after);
        prop_assert_eq!(apply_map(&perm, &invert_map(&map)), corpus.clone());
        prop_assert_eq!(apply_map(&corpus, &map), perm);
    }

    #[test]
    fn perm_corpus_pairs_line_up(corpus in corpus_strategy(), seed in any::<u64>()) {
        for ((src, tgt), orig) in make_perm_corpus(&corpus, seed).iter().zip(&corpus) {
            prop_assert_eq!(tgt, orig);
            prop_assert_eq!(src.len(), orig.len());
        }
    }

    #[test]
    fn grammar_samples_respect_the_spec(seed in any::<u64>(), target_seed in 0u64..50, reorder in 0usize..3) {
        let spec = GrammarSpec {
            target_seed,
            reorder: [Reorder::Monotone, Reorder::LocalSwap, Reorder::Reverse][reorder],
            ..GrammarSpec::desk()
        };
        let g = ToyGrammar::new(spec.clone()).unwrap();
        let mut rng = seeded_rng(seed);
        for _ in 0..20 {
            let t = g.sample_target(&mut rng);
            prop_assert!((spec.min_len..=spec.max_len).contains(&t.len()));
            prop_assert!(g.target_logprob(&t).is_finite());
            let s = g.translate(&t);
            prop_assert_eq!(s.len(), t.len());
            let src_words: Vec<String> = s.iter().map(|&i| g.src_word(i)).collect();
            let back = g.oracle_decode(&src_words);
            let tgt_words: Vec<String> = t.iter().map(|&i| g.tgt_word(i)).collect();
            prop_assert_eq!(back, tgt_words);
        }
    }
}
