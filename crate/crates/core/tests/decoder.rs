mod common;

use common::{sentence, tiny_model};
use nmtx_core::decoder::{beam_search, Ensemble, Hypothesis, StepModel};
use nmtx_core::tensor::log_softmax;
use nmtx_core::vocab::{BOS, EOS, PAD};
use nmtx_core::{seeded_rng, Seq2Seq};
use proptest::prelude::*;

/// Every emittable continuation of every prefix, scored by direct
/// decode_step calls. Returns the best (tokens, finished) by normalised score.
fn exhaustive_best(model: &Seq2Seq<f64>, source: &[usize], max_len: usize) -> (Vec<usize>, bool) {
    let enc = model.encode(source).unwrap();
    let state = model.initial_state(&enc);
    let mut best: Option<(f64, Vec<usize>, bool)> = None;
    let mut stack = vec![(Vec::<usize>::new(), 0.0f64, BOS, state)];
    while let Some((prefix, lp, prev, st)) = stack.pop() {
        let (out, next) = model.decode_step(prev, &st, &enc).unwrap();
        let dist = log_softmax(&out.logits).unwrap();
        for (w, &l) in dist.iter().enumerate() {
            if w == PAD || w == BOS {
                continue;
            }
            let total = lp + l;
            let mut seq = prefix.clone();
            let (finished, terminal) = if w == EOS {
                (true, true)
            } else {
                seq.push(w);
                (false, seq.len() == max_len)
            };
            if terminal {
                let len = seq.len() + usize::from(finished);
                let score = total / len as f64;
                if best.as_ref().is_none_or(|b| score > b.0) {
                    best = Some((score, seq, finished));
                }
            } else {
                stack.push((seq, total, w, next.clone()));
            }
        }
    }
    let (_, seq, finished) = best.unwrap();
    (seq, finished)
}

#[test]
fn beam_matches_exhaustive_enumeration() {
    let mut rng = seeded_rng(100);
    for seed in 0..100 {
        // three ordinary target types; with <unk> and </s> five ids are emittable
        let model: Seq2Seq<f64> = tiny_model(4, 3, 3, 1.0, seed);
        let src = sentence(&mut rng, 7, 1, 4);
        let emittable = model.tgt_vocab.len() - 2;
        let beam = emittable.pow(3);
        let top = &beam_search(&model, &src, beam, 3).unwrap()[0];
        let (tokens, finished) = exhaustive_best(&model, &src, 3);
        assert_eq!((&top.tokens, top.finished), (&tokens, finished), "seed {seed}");
    }
}

fn greedy(model: &Seq2Seq<f32>, source: &[usize], max_len: usize) -> Vec<usize> {
    let enc = model.encode(source).unwrap();
    let mut state = model.initial_state(&enc);
    let mut prev = BOS;
    let mut out = Vec::new();
    for _ in 0..max_len {
        let (step, next) = model.decode_step(prev, &state, &enc).unwrap();
        let mut best = None;
        for (w, &l) in step.logits.iter().enumerate() {
            if w == PAD || w == BOS {
                continue;
            }
            if best.is_none_or(|(_, bl)| l > bl) {
                best = Some((w, l));
            }
        }
        let w = best.unwrap().0;
        if w == EOS {
            break;
        }
        out.push(w);
        state = next;
        prev = w;
    }
    out
}

#[test]
fn beam_one_is_greedy() {
    let mut rng = seeded_rng(101);
    for seed in 0..20 {
        let model: Seq2Seq<f32> = tiny_model(6, 8, 8, 0.5, seed);
        let src = sentence(&mut rng, 12, 1, 5);
        let hyps = beam_search(&model, &src, 1, 8).unwrap();
        assert_eq!(hyps.len(), 1);
        assert_eq!(hyps[0].tokens, greedy(&model, &src, 8));
    }
}

#[test]
fn beam_search_errors() {
    let model: Seq2Seq<f32> = tiny_model(4, 3, 3, 0.1, 1);
    assert!(beam_search(&model, &[], 2, 5).is_err());
    assert!(beam_search(&model, &[4], 0, 5).is_err());
}

#[test]
fn identical_members_decode_like_one_model() {
    let mut rng = seeded_rng(102);
    for seed in 0..10 {
        let model: Seq2Seq<f32> = tiny_model(6, 8, 8, 0.5, seed);
        let src = sentence(&mut rng, 12, 1, 5);
        let single = beam_search(&model, &src, 3, 8).unwrap();
        let one = Ensemble::new(vec![&model]).unwrap();
        assert_eq!(beam_search(&one, &src, 3, 8).unwrap(), single);
        let two = Ensemble::new(vec![&model, &model]).unwrap();
        let pair = beam_search(&two, &src, 3, 8).unwrap();
        let tokens = |h: &[Hypothesis]| h.iter().map(|x| x.tokens.clone()).collect::<Vec<_>>();
        assert_eq!(tokens(&pair), tokens(&single));
    }
}

#[test]
fn opposite_members_average_to_half() {
    let mut a: Seq2Seq<f64> = tiny_model(3, 2, 2, 0.0, 1);
    let mut b = a.clone();
    // only the output bias is non-zero: each member is sure of one word
    let v = a.tgt_vocab.len();
    for j in 0..v {
        a.params.target_output_embeddings.b.set(0, j, if j == 4 { 0.0 } else { -60.0 });
        b.params.target_output_embeddings.b.set(0, j, if j == 5 { 0.0 } else { -60.0 });
    }
    let ens = Ensemble::new(vec![&a, &b]).unwrap();
    let (ctx, st) = ens.start(&[4]).unwrap();
    let step = ens.step(&ctx, BOS, &st).unwrap();
    let p: Vec<f64> = step.logprobs.iter().map(|l| l.exp()).collect();
    assert!((p[4] - 0.5).abs() < 1e-12 && (p[5] - 0.5).abs() < 1e-12, "{p:?}");
}

#[test]
fn ensemble_sequence_logprob_matches_manual_average() {
    let a: Seq2Seq<f64> = tiny_model(4, 5, 5, 0.4, 3);
    let b: Seq2Seq<f64> = tiny_model(4, 5, 5, 0.4, 4);
    let src = vec![4, 6, 8];
    let tgt = vec![5, 7];
    let la = a.target_logprobs(&src, &tgt).unwrap();
    let lb = b.target_logprobs(&src, &tgt).unwrap();
    let manual: f64 = la.iter().zip(&lb).map(|(x, y)| ((x.exp() + y.exp()) / 2.0).ln()).sum();
    let ens = Ensemble::new(vec![&a, &b]).unwrap();
    assert!((ens.sequence_logprob(&src, &tgt).unwrap() - manual).abs() < 1e-12);

    let geo = ens.clone().log_space(true).sequence_logprob(&src, &tgt).unwrap();
    assert!(geo.is_finite() && geo <= 0.0);
}

#[test]
fn ensemble_rejects_mismatched_vocabularies() {
    let a: Seq2Seq<f32> = tiny_model(4, 5, 5, 0.1, 3);
    let b: Seq2Seq<f32> = tiny_model(4, 5, 6, 0.1, 4);
    assert!(Ensemble::new(vec![&a, &b]).is_err());
    assert!(Ensemble::<f32>::new(vec![]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ensemble_steps_are_distributions(seed in any::<u64>(), log_space in any::<bool>()) {
        let a: Seq2Seq<f64> = tiny_model(4, 5, 6, 0.8, seed);
        let b: Seq2Seq<f64> = tiny_model(4, 5, 6, 0.8, seed.wrapping_add(1));
        let ens = Ensemble::new(vec![&a, &b]).unwrap().log_space(log_space);
        let (ctx, mut st) = ens.start(&[4, 5, 6]).unwrap();
        let mut prev = BOS;
        for w in [4, 7, 9] {
            let step = ens.step(&ctx, prev, &st).unwrap();
            let total: f64 = step.logprobs.iter().map(|l| l.exp()).sum();
            prop_assert!((total - 1.0).abs() < 1e-6);
            st = step.state;
            prev = w;
        }
    }

    #[test]
    fn wider_beam_never_scores_worse(seed in any::<u64>(), narrow in 1usize..4, extra in 1usize..4) {
        let model: Seq2Seq<f64> = tiny_model(4, 4, 4, 0.8, seed);
        let mut rng = seeded_rng(seed);
        let src = sentence(&mut rng, 8, 1, 4);
        let a = beam_search(&model, &src, narrow, 6).unwrap()[0].score();
        let b = beam_search(&model, &src, narrow + extra, 6).unwrap()[0].score();
        prop_assert!(b >= a - 1e-12, "beam {} gives {} but beam {} gives {}", narrow, a, narrow + extra, b);
    }

    #[test]
    fn hypotheses_are_well_formed(seed in any::<u64>(), beam in 1usize..5) {
        let model: Seq2Seq<f32> = tiny_model(4, 4, 4, 0.8, seed);
        let mut rng = seeded_rng(seed);
        let src = sentence(&mut rng, 8, 1, 5);
        for h in beam_search(&model, &src, beam, 6).unwrap() {
            prop_assert!(h.logprob <= 0.0);
            prop_assert_eq!(h.attention.len(), h.tokens.len());
            prop_assert!(h.attention.iter().all(|&p| p < src.len()));
            prop_assert!(h.tokens.iter().all(|&w| w != PAD && w != BOS && w != EOS));
        }
    }
}
