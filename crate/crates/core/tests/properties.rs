use std::collections::BTreeMap;

use proptest::prelude::*;

use rsimplify::align::{candidate_pairs, split_dataset, AlignedPair, AlignmentProblem, Split};
use rsimplify::corpus::{load_pairs, store_pairs, DocumentPair};
use rsimplify::mask::{mask, split_sentences, MaskedSentence};
use rsimplify::metrics::{
    cosine_distance, krippendorff_alpha, sentence_bleu, BleuWeights, DifferenceMetric, RatingTable, TfidfModel,
};
use rsimplify::nn::{forward, row_losses, Batch, ModelConfig, Parameters};
use rsimplify::pipeline::annotation::export_annotation_batch;
use rsimplify::train::{adam_step, AdamState};
use rsimplify::wordpiece::{self, normalize};

fn word() -> impl Strategy<Value = String> {
    prop::sample::select(vec![
        "the", "parser", "reads", "config", "files", "quickly", "install", "with", "cargo", "then", "run", "tests",
    ])
    .prop_map(String::from)
}

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(word(), 1..12).prop_map(|w| w.join(" "))
}

fn markdown_line() -> impl Strategy<Value = String> {
    prop_oneof![
        4 => sentence().prop_map(|s| format!("{s}.")),
        1 => (sentence(), word()).prop_map(|(s, w)| format!("{s} https://example.com/{w} now.")),
        1 => (sentence(), word()).prop_map(|(s, w)| format!("{s} `{w}()` works.")),
        1 => (word(), word()).prop_map(|(a, b)| format!("See [{a}](http://x.org/{b}) for more.")),
        1 => word().prop_map(|w| format!("Edit src/{w}.rs first.")),
        1 => Just("| a | b |\n|---|---|\n| 1 | 2 |".to_string()),
        1 => word().prop_map(|w| format!("```\n{w} --flag\n```")),
    ]
}

fn markdown() -> impl Strategy<Value = String> {
    prop::collection::vec(markdown_line(), 1..8).prop_map(|l| l.join("\n\n"))
}

fn tiny_model() -> ModelConfig {
    ModelConfig {
        vocab_size: 24,
        d_model: 8,
        heads: 2,
        encoder_layers: 1,
        decoder_layers: 1,
        d_ff: 16,
        dropout: 0.0,
        max_len: 12,
    }
}

fn token_rows() -> impl Strategy<Value = Vec<Vec<usize>>> {
    prop::collection::vec(prop::collection::vec(3usize..24, 1..10), 2..5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn masking_reconstructs_and_is_idempotent(md in markdown()) {
        let once = mask(&md);
        prop_assert_eq!(once.reconstruct(), md);
        prop_assert_eq!(mask(&once.text).text, once.text.clone());
        prop_assert!(!once.text.contains("http://") && !once.text.contains("https://"));
    }

    #[test]
    fn sentences_come_in_document_order(md in markdown()) {
        let doc = mask(&md);
        let sents = split_sentences(&doc);
        prop_assert!(sents.windows(2).all(|w| w[0].doc_position < w[1].doc_position));
        prop_assert!(sents.iter().all(|s| !s.text.trim().is_empty()));
    }

    #[test]
    fn bleu_is_a_fraction(a in prop::collection::vec(0u8..6, 0..20), b in prop::collection::vec(0u8..6, 0..20)) {
        let w = BleuWeights::new([0.25; 4]).unwrap();
        let s = sentence_bleu(&a, &b, w);
        prop_assert!((0.0..=1.0).contains(&s));
        if !a.is_empty() {
            prop_assert!((sentence_bleu(&a, &a, w) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cosine_distance_is_symmetric(corpus in prop::collection::vec(sentence(), 2..10), i in 0usize..10, j in 0usize..10) {
        let model = TfidfModel::fit(&corpus).unwrap();
        let (a, b) = (&corpus[i % corpus.len()], &corpus[j % corpus.len()]);
        let (u, v) = (model.vectorize(a), model.vectorize(b));
        let d = cosine_distance(&u, &v);
        prop_assert!((d - cosine_distance(&v, &u)).abs() < 1e-12);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&d));
        prop_assert!(cosine_distance(&u, &u) < 1e-9 || u.is_zero());
    }

    #[test]
    fn rarer_words_weigh_more(corpus in prop::collection::vec(sentence(), 2..12)) {
        let model = TfidfModel::fit(&corpus).unwrap();
        let df = |w: &str| corpus.iter().filter(|s| s.split(' ').any(|x| x == w)).count();
        let words: Vec<&str> = corpus.iter().flat_map(|s| s.split(' ')).collect();
        for a in &words {
            for b in &words {
                if df(a) < df(b) {
                    prop_assert!(model.document_frequency_idf(a) > model.document_frequency_idf(b));
                }
            }
        }
    }

    #[test]
    fn alpha_never_exceeds_one(rows in prop::collection::vec(prop::collection::vec(prop::option::weighted(0.85, 1u8..=5), 6), 2..5)) {
        let t = RatingTable::new(rows).unwrap();
        for m in [DifferenceMetric::Interval, DifferenceMetric::Ordinal] {
            if let Ok(a) = krippendorff_alpha(&t, m) {
                prop_assert!(a <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn candidates_stay_in_window(
        simple in prop::collection::vec(0usize..200, 0..15),
        regular in prop::collection::vec(0usize..200, 0..15),
        window in 0usize..60,
    ) {
        let ms = |p: &[usize]| p.iter().map(|&d| MaskedSentence { text: "x".into(), doc_position: d }).collect();
        let problem = AlignmentProblem { simple: ms(&simple), regular: ms(&regular) };
        let cands = candidate_pairs(&problem, window);
        prop_assert!(cands.len() <= simple.len() * regular.len());
        let expected = simple.iter().flat_map(|a| regular.iter().map(move |b| a.abs_diff(*b))).filter(|d| *d <= window).count();
        prop_assert_eq!(cands.len(), expected);
    }

    #[test]
    fn split_is_a_partition(n in 0usize..60, train in 0usize..40, valid in 0usize..20, seed in any::<u64>()) {
        let mut pairs: Vec<AlignedPair> = (0..n)
            .map(|i| AlignedPair { pair_id: format!("p{i}"), regular: vec!["r".into()], simple: "s".into(), tfidf_distance: 0.1, bleu: 0.5, split: Split::Unassigned })
            .collect();
        let result = split_dataset(&mut pairs, train, valid, seed);
        if train + valid > n {
            prop_assert!(result.is_err());
        } else {
            prop_assert!(result.is_ok());
            let count = |s: Split| pairs.iter().filter(|p| p.split == s).count();
            prop_assert_eq!(count(Split::Train), train);
            prop_assert_eq!(count(Split::Valid), valid);
            prop_assert_eq!(count(Split::Test), n - train - valid);
        }
    }

    #[test]
    fn stored_pairs_load_back(msgs in prop::collection::vec(sentence(), 1..6), stars in 0u64..1000) {
        let pairs: Vec<DocumentPair> = msgs
            .iter()
            .enumerate()
            .map(|(i, m)| DocumentPair {
                repo_id: format!("repo{i}"),
                sha: format!("{i:040x}"),
                matched_keywords: ["simplify".to_string()].into(),
                commit_message: format!("Simplify {m}\n\nbody \"quoted\" \u{1F600}"),
                language: (i % 2 == 0).then(|| "Rust".into()),
                forks: i as u64,
                stars,
                difficult_doc: format!("# Title\n\n{m} with extra words."),
                simple_doc: format!("# Title\n\n{m}."),
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.jsonl");
        store_pairs(&pairs, &path).unwrap();
        prop_assert_eq!(load_pairs(&path).unwrap(), pairs);
    }

    #[test]
    fn annotation_key_recovers_every_model(outs in prop::collection::vec((sentence(), sentence(), sentence()), 1..8), seed in any::<u64>()) {
        let originals: Vec<String> = (0..outs.len()).map(|i| format!("original {i}")).collect();
        let mut models = BTreeMap::new();
        models.insert("a".to_string(), outs.iter().map(|o| o.0.clone()).collect::<Vec<_>>());
        models.insert("b".to_string(), outs.iter().map(|o| o.1.clone()).collect::<Vec<_>>());
        models.insert("c".to_string(), outs.iter().map(|o| o.0.clone()).collect::<Vec<_>>());
        models.insert("d".to_string(), outs.iter().map(|o| o.2.clone()).collect::<Vec<_>>());
        let batch = export_annotation_batch(&originals, &models, seed).unwrap();
        prop_assert_eq!(batch.key.len(), originals.len() + 1);
        prop_assert_eq!(batch.key.iter().filter(|k| k.is_gate).count(), 1);
        for (item, shown) in batch.key.iter().zip(&batch.blinded) {
            prop_assert_eq!(&item.variants, &shown.variants);
            let Some(src) = item.source_index else { continue };
            for (model, list) in &models {
                let k = item.models.iter().position(|m| m.contains(model)).unwrap();
                prop_assert_eq!(&item.variants[k], &list[src]);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn wordpiece_round_trips(corpus in prop::collection::vec(sentence(), 3..20), pick in prop::collection::vec(0usize..1000, 1..8)) {
        let tok = wordpiece::train(&corpus, 120).unwrap();
        prop_assert_eq!(&tok, &wordpiece::train(&corpus, 120).unwrap());
        let text = pick.iter().map(|i| corpus[i % corpus.len()].as_str()).collect::<Vec<_>>().join("  ");
        let ids = tok.encode(&text, true);
        prop_assert!(ids.iter().all(|&i| i < tok.len()));
        prop_assert_eq!(tok.decode(&ids).unwrap(), normalize(&text));
    }

    #[test]
    fn forward_is_row_independent(rows in token_rows(), seed in 0u64..1000) {
        let cfg = tiny_model();
        let params = Parameters::<f64>::init(&cfg, seed).unwrap();
        let refs: Vec<&[usize]> = rows.iter().map(Vec::as_slice).collect();
        let batch = Batch::new(&refs, &refs).unwrap();
        let (logits, _) = forward(&cfg, &params, &batch, None).unwrap();
        prop_assert!(logits.all_finite());
        let (again, _) = forward(&cfg, &params, &batch, None).unwrap();
        prop_assert_eq!(&logits.data, &again.data);
        let losses = row_losses(&logits, &batch);
        let order: Vec<usize> = (0..rows.len()).rev().collect();
        let flipped = batch.select_rows(&order);
        let (fl, _) = forward(&cfg, &params, &flipped, None).unwrap();
        let fl_losses = row_losses(&fl, &flipped);
        for (i, &j) in order.iter().enumerate() {
            prop_assert!((fl_losses[i] - losses[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn adam_ignores_zero_gradients(seed in 0u64..1000, steps in 1usize..5) {
        let cfg = tiny_model();
        let mut params = Parameters::<f64>::init(&cfg, seed).unwrap();
        let before = params.clone();
        let grads = params.zeros_like();
        let mut state = AdamState::new(&params);
        for _ in 0..steps {
            adam_step(&mut params, &grads, &mut state, 1e-3, 0.0).unwrap();
        }
        prop_assert_eq!(params, before);
        prop_assert_eq!(state.step, steps as u64);
    }
}
