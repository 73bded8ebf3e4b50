use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sffn::config::TaskConfig;
use sffn::io::{PreorderExample, TaggedSentence};
use sffn::metrics::corpus_frs;
use sffn::model_file::SavedModel;
use sffn::pipelines::{classify, langid, preorder, preorderer, segmenter, skeleton, tagger};
use sffn::transition::{pre_oracle, replay_preorder, seg_oracle, Action, OracleStrategy, PreAction};

fn config(name: &str, steps: u64) -> TaskConfig {
    let mut cfg = TaskConfig::builtin(name).unwrap();
    cfg.set("max_steps", &steps.to_string()).unwrap();
    cfg.set("eval_interval", "200").unwrap();
    cfg
}

fn words(rng: &mut ChaCha8Rng, letters: &[char]) -> String {
    (0..rng.gen_range(2..6))
        .map(|_| (0..rng.gen_range(2..7)).map(|_| *letters.choose(rng).unwrap()).collect::<String>())
        .collect::<Vec<_>>()
        .join(" ")
}

fn two_languages(rng: &mut ChaCha8Rng, n: usize) -> Vec<(String, String)> {
    let a: Vec<char> = ('a'..='m').collect();
    let b: Vec<char> = ('n'..='z').collect();
    (0..n).flat_map(|_| [("A".to_string(), words(rng, &a)), ("B".to_string(), words(rng, &b))]).collect()
}

fn trained_langid() -> SavedModel {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (train, dev) = (two_languages(&mut rng, 100), two_languages(&mut rng, 20));
    langid::train_langid(&config("langid-6", 2000), &train, &dev, 7).unwrap().model
}

#[test]
fn separable_languages_are_confident() {
    let model = trained_langid();
    let (label, p) = classify(model.view(), "abc def glm").unwrap();
    assert_eq!(label, "A");
    assert!(p > 0.99, "p = {p}");
    let (label, p) = classify(model.view(), "nop qrs tuvwx").unwrap();
    assert_eq!(label, "B");
    assert!(p > 0.99, "p = {p}");
}

#[test]
fn quantization_rarely_changes_predictions() {
    let model = trained_langid();
    let mut quantized = model.clone();
    quantized.network = model.network.quantized().unwrap();
    let dense = quantized.network.dequantized();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let all: Vec<char> = ('a'..='z').collect();
    let docs: Vec<String> = (0..1000).map(|_| words(&mut rng, &all)).collect();
    let mut changed = 0;
    for d in &docs {
        let fv = langid::document_features(model.view(), d).unwrap();
        let before = model.network.predict(&fv).unwrap().0;
        let after = quantized.network.predict(&fv).unwrap().0;
        assert_eq!(after, dense.predict(&fv).unwrap().0);
        changed += usize::from(before != after);
    }
    assert!(changed < 20, "{changed} of 1000 predictions changed");
}

fn pos_toy(n: usize) -> Vec<TaggedSentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let lexicon = [("the", "DET"), ("a", "DET"), ("dog", "NOUN"), ("park", "NOUN"), ("runs", "VERB"), ("in", "ADP")];
    (0..n)
        .map(|_| {
            let mut s = TaggedSentence::default();
            for _ in 0..rng.gen_range(2..8) {
                let (w, t) = lexicon.choose(&mut rng).unwrap();
                s.words.push(w.to_string());
                s.tags.push(t.to_string());
            }
            s
        })
        .collect()
}

#[test]
fn tagger_overfits_fifty_sentences() {
    let train = pos_toy(50);
    let t = tagger::train_tagger(&config("pos", 1000), &train, &train, None, 1).unwrap();
    assert_eq!(tagger::evaluate(t.model.view(), &train).unwrap(), 1.0);
}

#[test]
fn segmenter_reproduces_oracle_actions() {
    // Every word is a consonant followed by one or two vowels.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let corpus: Vec<Vec<String>> = (0..120)
        .map(|_| {
            (0..rng.gen_range(1..8))
                .map(|_| {
                    let mut w = String::from(*['k', 't', 'p'].choose(&mut rng).unwrap());
                    (0..rng.gen_range(1..3)).for_each(|_| w.push(*['a', 'o'].choose(&mut rng).unwrap()));
                    w
                })
                .collect()
        })
        .collect();
    let t = segmenter::train_segmenter(&config("seg-c64", 1500), &corpus, &corpus, 1).unwrap();
    for words in &corpus {
        let chars = segmenter::sentence_chars(words);
        let (_, actions) = segmenter::decode(t.model.view(), &chars).unwrap();
        let lengths: Vec<usize> = words.iter().map(|w| w.chars().count()).collect();
        assert_eq!(actions, seg_oracle(&lengths).unwrap());
    }
}

#[test]
fn shift_then_append_model_keeps_order() {
    let mut model = skeleton(&TaskConfig::builtin("preorder").unwrap()).unwrap();
    let shift = model.network.label_index(PreAction::Shift.name()).unwrap();
    let append = model.network.label_index(PreAction::Append.name()).unwrap();
    let mut tensors = model.network.tensors_mut().unwrap();
    let bias = tensors.last_mut().unwrap();
    bias[shift] = 2.0;
    bias[append] = 1.0;
    let sentence: Vec<String> = "one two three four five".split(' ').map(String::from).collect();
    let (order, actions) = preorder(model.view(), None, &sentence).unwrap();
    assert_eq!(order, vec![0, 1, 2, 3, 4]);
    assert!(!actions.contains(&PreAction::Swap));
}

#[test]
fn identity_corpus_gives_identity_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let vocab = ["x", "y", "z", "w"];
    let corpus: Vec<PreorderExample> = (0..60)
        .map(|_| {
            let n = rng.gen_range(1..7);
            PreorderExample {
                words: (0..n).map(|_| vocab.choose(&mut rng).unwrap().to_string()).collect(),
                target: (0..n).collect(),
            }
        })
        .collect();
    let t = preorderer::train_preorderer(&config("preorder", 400), &corpus, &corpus, None, 1).unwrap();
    assert_eq!(preorderer::evaluate(t.model.view(), None, &corpus).unwrap(), 1.0);
}

#[test]
fn oracle_replay_scores_perfectly() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut gold = Vec::new();
    let mut replayed = Vec::new();
    for _ in 0..200 {
        let mut p: Vec<usize> = (0..rng.gen_range(1..9)).collect();
        p.shuffle(&mut rng);
        for strategy in [OracleStrategy::EagerAppend, OracleStrategy::BubbleSort] {
            let seq = pre_oracle(&p, strategy).unwrap();
            replayed.push(replay_preorder(p.len(), &seq).unwrap().reading_order());
            gold.push(p.clone());
        }
    }
    assert_eq!(corpus_frs(&gold, &replayed).unwrap(), 1.0);
}

#[test]
fn saved_pipelines_round_trip_through_disk() {
    let model = trained_langid();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lid.model");
    model.save(&path).unwrap();
    let back = SavedModel::load(&path).unwrap();
    let doc = "abc def";
    assert_eq!(classify(back.view(), doc).unwrap(), classify(model.view(), doc).unwrap());
}
