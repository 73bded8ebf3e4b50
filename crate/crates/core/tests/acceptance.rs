//! Acceptance checks: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Expected values come from closed forms and brute-force oracles
//! written here, independently of the library code under test.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sffn::bloom::BloomMapBuilder;
use sffn::config::{PreorderMode, TaskConfig};
use sffn::cost::{flops, model_size, reference_flops_bts, CostReport};
use sffn::features::{FeatureGroup, FeatureVector, GroupHits, GroupLayout, Pooling, VocabSource};
use sffn::io::{PreorderExample, TaggedSentence};
use sffn::model_file::{SavedModel, Section};
use sffn::network::NetworkModel;
use sffn::pipelines::{langid, preorderer, segment, segmenter, skeleton, tagger};
use sffn::quantize::{dequantize, quantize_row};
use sffn::transition::{
    fuzzy_reordering_score, pre_oracle, replay_preorder, seg_oracle, OracleStrategy, SegState, SpanState,
    TransitionState,
};

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

// 1. Size accounting -------------------------------------------------------

/// Closed-form parameter bytes: float embeddings, W1 + b1, W2 + b2.
fn param_bytes_oracle(cfg: &TaskConfig, k: u64, quantized: bool) -> (u64, u64) {
    let mut emb = 0u64;
    let mut h0 = 0u64;
    let mut slots: HashMap<usize, u64> = HashMap::new();
    for t in cfg.templates.templates() {
        *slots.entry(t.group).or_default() += t.positions.len() as u64;
    }
    for (i, g) in cfg.templates.groups().iter().enumerate() {
        let (v, d) = (u64::from(g.vocab_size), g.embedding_dim as u64);
        emb += if quantized { v * d + 4 * v } else { 4 * v * d };
        h0 += match g.pooling {
            Pooling::Concat => slots[&i] * d,
            _ => d,
        };
    }
    let m = cfg.hidden_dim as u64;
    (emb, emb + 4 * (m * h0 + m) + 4 * (k * m + k))
}

fn criterion_1() -> Check {
    let mut notes = Vec::new();
    for (name, target_kb) in [("langid-6", 334.0), ("langid-16", 800.0)] {
        let cfg = TaskConfig::builtin(name).map_err(e2s)?;
        let model = skeleton(&cfg).map_err(e2s)?;
        let report = model_size(&model, name);
        let (emb, params) = param_bytes_oracle(&cfg, 66, false);
        ensure(CostReport::parameter_bytes(&model.network) == params, || {
            format!("{name}: parameter bytes {} != closed form {params}", CostReport::parameter_bytes(&model.network))
        })?;
        ensure(report.component("embeddings") == emb, || format!("{name}: embedding section != 4·ΣV·D"))?;
        let sum: u64 = report.components.iter().map(|(_, b)| b).sum();
        let file = model.to_bytes().len() as u64;
        ensure(sum == report.size_bytes && file == sum, || {
            format!("{name}: components {sum}, report {}, file {file}", report.size_bytes)
        })?;
        let kb = report.size_kb();
        ensure(rel(kb, target_kb) <= 0.02, || format!("{name}: {kb:.1} KB vs {target_kb} KB"))?;
        notes.push(format!("{name} {kb:.1} KB"));
    }
    let dense = model_size(&skeleton(&TaskConfig::builtin("langid-16").map_err(e2s)?).map_err(e2s)?, "d");
    let qcfg = TaskConfig::builtin("langid-16q").map_err(e2s)?;
    let q = model_size(&skeleton(&qcfg).map_err(e2s)?, "q");
    let (qemb, _) = param_bytes_oracle(&qcfg, 66, true);
    let rows: u64 = qcfg.templates.groups().iter().map(|g| u64::from(g.vocab_size)).sum();
    ensure(q.component("embeddings") == qemb, || {
        format!("quantized embeddings {} != V·D + 4V", q.component("embeddings"))
    })?;
    ensure(dense.component("embeddings") == 4 * (qemb - 4 * rows), || "payload shrink is not 4x".into())?;
    let delta = (q.size_kb() - 302.0) / 302.0 * 100.0;
    notes.push(format!("16-dim quantized {:.1} KB ({delta:+.1}% vs 302 KB)", q.size_kb()));
    Ok(notes.join(", "))
}

// 2. FLOPs accounting ------------------------------------------------------

fn criterion_2() -> Check {
    let fl = |m: u64, h0: u64, k: u64| m * (2 * h0 - 1) + k * (2 * m - 1);
    // BTS lower bound: 4 LSTM layers, 8 matrix-vector products of 320x320 each.
    let bts = 4 * 8 * 320 * (2 * 320 - 1);
    ensure(reference_flops_bts() == bts, || format!("BTS {} != {bts}", reference_flops_bts()))?;
    ensure(rel(bts as f64, 6.63e6) <= 0.05, || format!("BTS {bts} not near 6.63m"))?;
    let mut notes = vec![format!("BTS {:.2}m", bts as f64 / 1e6)];
    let mut ratios = Vec::new();
    for (name, h0, published) in [("pos", 408, 0.27e6), ("pos-clusters", 464, 0.31e6), ("pos-half", 260, 0.18e6)] {
        let cfg = TaskConfig::builtin(name).map_err(e2s)?;
        let model = skeleton(&cfg).map_err(e2s)?;
        let net = &model.network;
        ensure(net.input_dim() == h0 && net.num_classes() == 17, || {
            format!("{name}: H0 {} K {}", net.input_dim(), net.num_classes())
        })?;
        let expect = fl(cfg.hidden_dim as u64, h0 as u64, 17);
        ensure(flops(net) == expect, || format!("{name}: {} != {expect}", flops(net)))?;
        ensure(rel(expect as f64, published) <= 0.05, || format!("{name}: {expect} vs {published}"))?;
        ratios.push(bts as f64 / expect as f64);
        notes.push(format!("{name} {:.3}m", expect as f64 / 1e6));
    }
    ensure(ratios[0] >= 24.0, || format!("vanilla ratio {:.1}", ratios[0]))?;
    ensure(rel(ratios[2], 36.0) <= 0.05, || format!("half-dim ratio {:.1}", ratios[2]))?;
    notes.push(format!("ratios {:.1}x / {:.1}x", ratios[0], ratios[2]));
    Ok(notes.join(", "))
}

// 3. Quantization ----------------------------------------------------------

fn criterion_3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for i in 0..10_000 {
        let d = rng.gen_range(1..=64);
        let mag = 10f32.powi(rng.gen_range(-4..=3));
        let row: Vec<f32> = match i % 50 {
            0 => vec![0.0; d],
            1 => vec![mag; d],
            _ => (0..d).map(|_| rng.gen_range(-mag..=mag)).collect(),
        };
        let q = quantize_row(&row).map_err(e2s)?;
        let s = f64::from(q.scale);
        let deq = dequantize(&q);
        for (j, (&x, &y)) in row.iter().zip(&deq).enumerate() {
            // Half a step, plus one f32 rounding of the dequantized value.
            let err = (f64::from(x) - f64::from(y)).abs();
            let bound = s / 2.0 + f64::from(y.abs()) * f64::from(f32::EPSILON);
            ensure(err <= bound, || format!("row {i} col {j}: error {err} > s/2 = {}", s / 2.0))?;
            if s > 0.0 {
                worst = worst.max(err / s);
            }
        }
        let again = quantize_row(&deq).map_err(e2s)?;
        ensure(again.codes == q.codes, || format!("row {i}: re-quantization changed codes"))?;
    }
    // Serialized quantized matrix size.
    for (v, d) in [(7usize, 3usize), (100, 16), (1000, 6)] {
        let layout = vec![GroupLayout {
            group: FeatureGroup {
                name: "g".into(),
                vocab_size: v as u32,
                embedding_dim: d,
                pooling: Pooling::Average,
                source: VocabSource::Hashed,
            },
            slots: 1,
        }];
        let mut net = NetworkModel::new(layout, 4, vec!["a".into(), "b".into()]).map_err(e2s)?;
        net.init_random(&mut rng);
        let mut model = skeleton(&TaskConfig::builtin("langid-6").map_err(e2s)?).map_err(e2s)?;
        model.network = net.quantized().map_err(e2s)?;
        let emb = model
            .sections()
            .into_iter()
            .find(|(s, _)| *s == Section::Embeddings)
            .map(|(_, b)| b.len())
            .ok_or("no embeddings section")?;
        ensure(emb == v * d + 4 * v, || format!("{v}x{d}: {emb} bytes != V·D + 4V"))?;
    }
    Ok(format!("10000 rows, worst error {worst:.3}·s"))
}

// 4. Bloom map -------------------------------------------------------------

fn criterion_4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 250_000;
    let pairs: Vec<(String, u32)> = (0..n).map(|i| (format!("word{i:06}"), rng.gen_range(0..256))).collect();
    let map =
        BloomMapBuilder { error_bits: 0, num_values: 256, seed: 4, ..Default::default() }.build(&pairs).map_err(e2s)?;
    let bytes = map.serialized_len();
    let kb = bytes as f64 / 1024.0;
    ensure(rel(kb, 300.0) <= 0.05, || format!("{kb:.1} KB"))?;
    let missing = pairs.iter().filter(|(k, v)| map.lookup(k) != Some(*v)).count();
    ensure(missing == 0, || format!("{missing} false negatives"))?;
    Ok(format!("{kb:.1} KB, {:.2} bits/entry, 0 false negatives", bytes as f64 * 8.0 / n as f64))
}

// 5. Preordering transition system ------------------------------------------

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// Every permutation a legal derivation can end in, by exhaustive search.
fn reachable(n: usize) -> std::result::Result<HashSet<Vec<usize>>, String> {
    let mut seen: HashSet<SpanState> = HashSet::new();
    let mut stack = vec![SpanState::new(n)];
    let mut finals = HashSet::new();
    while let Some(s) = stack.pop() {
        if !seen.insert(s.clone()) {
            continue;
        }
        if s.is_terminal() {
            finals.insert(s.permutation().ok_or("terminal state without a permutation")?);
            continue;
        }
        for a in s.legal_actions() {
            let mut t = s.clone();
            t.apply(a).map_err(e2s)?;
            stack.push(t);
        }
    }
    Ok(finals)
}

fn criterion_5() -> Check {
    let mut total = 0;
    for n in 1..=6 {
        let all = permutations(n);
        let expected: HashSet<Vec<usize>> = all.iter().cloned().collect();
        ensure(reachable(n)? == expected, || format!("n={n}: reachable set differs from all n! permutations"))?;
        for p in &all {
            for strategy in [OracleStrategy::EagerAppend, OracleStrategy::BubbleSort] {
                let seq = pre_oracle(p, strategy).map_err(e2s)?;
                let state = replay_preorder(n, &seq).map_err(e2s)?;
                ensure(state.permutation().as_deref() == Some(&p[..]), || format!("oracle fails on {p:?}"))?;
            }
        }
        total += all.len();
    }
    ensure(total == 873, || format!("{total} permutations"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut longest = 0.0f64;
    for _ in 0..10_000 {
        let n = rng.gen_range(1..=12);
        let mut s = SpanState::new(n);
        let mut steps = 0;
        while !s.is_terminal() {
            let legal = s.legal_actions();
            ensure(!legal.is_empty(), || format!("dead end at n={n} after {steps} steps"))?;
            s.apply(*legal.choose(&mut rng).unwrap()).map_err(e2s)?;
            steps += 1;
            ensure(steps <= 4 * n * n, || format!("n={n}: more than 4n² steps"))?;
        }
        longest = longest.max(steps as f64 / (n * n) as f64);
        let covered = s.stack().len() == 1 && s.buffer().is_empty() && {
            let mut w = s.stack()[0].words().to_vec();
            w.sort_unstable();
            w == (0..n).collect::<Vec<_>>()
        };
        ensure(covered, || format!("n={n}: terminal state is not one full-coverage span"))?;
    }
    Ok(format!("{total} permutations reachable and oracle-derived; 10000 random walks, max steps {longest:.2}·n²"))
}

// 6. Segmentation system ---------------------------------------------------

const ALPHABET: &[char] = &['a', 'b', 'c', 'x', 'é', '中', '文', '字', ' ', '1', '.', 'ß'];

fn random_text(rng: &mut ChaCha8Rng, len: usize) -> String {
    (0..len).map(|_| *ALPHABET.choose(rng).unwrap()).collect()
}

fn criterion_6() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..10_000 {
        let words: Vec<String> = (0..rng.gen_range(0..12))
            .map(|_| {
                let len = rng.gen_range(1..6);
                random_text(&mut rng, len)
            })
            .collect();
        let chars: Vec<char> = words.iter().flat_map(|w| w.chars()).collect();
        let lengths: Vec<usize> = words.iter().map(|w| w.chars().count()).collect();
        let mut state = SegState::new(chars.len());
        for a in seg_oracle(&lengths).map_err(e2s)? {
            state.apply(a).map_err(e2s)?;
        }
        ensure(state.is_terminal() && state.words(&chars) == words, || {
            format!("segmentation {i} does not round-trip")
        })?;
    }
    let cfg = TaskConfig::builtin("seg-c64-b04").map_err(e2s)?;
    for m in 0..10 {
        let mut model = skeleton(&cfg).map_err(e2s)?;
        model.network.init_random(&mut rng);
        for _ in 0..100 {
            let len = rng.gen_range(0..40);
            let text = random_text(&mut rng, len);
            let words = segment(model.view(), &text).map_err(e2s)?;
            ensure(words.concat() == text && words.iter().all(|w| !w.is_empty()), || {
                format!("model {m}: `{text}` decoded to {words:?}")
            })?;
        }
    }
    Ok("10000 oracle round trips, 1000 lossless decodes".into())
}

// 7. Gradient correctness --------------------------------------------------

fn random_model(
    rng: &mut ChaCha8Rng,
    index: usize,
) -> std::result::Result<(NetworkModel, Vec<(FeatureVector, usize)>), String> {
    let poolings = [Pooling::Concat, Pooling::Average, Pooling::Sum];
    let ngroups = rng.gen_range(1..=3);
    let mut layout = Vec::new();
    for g in 0..ngroups {
        // Every pooling mode appears in the first three models.
        let pooling = if index < 3 && g == 0 { poolings[index] } else { *poolings.choose(rng).unwrap() };
        let slots = if pooling == Pooling::Concat { rng.gen_range(1..=3) } else { 1 };
        layout.push(GroupLayout {
            group: FeatureGroup {
                name: format!("g{g}"),
                vocab_size: rng.gen_range(3..=8),
                embedding_dim: rng.gen_range(1..=4),
                pooling,
                source: VocabSource::Hashed,
            },
            slots,
        });
    }
    let k = rng.gen_range(2..=4);
    let labels = (0..k).map(|c| format!("c{c}")).collect();
    let mut net = NetworkModel::new(layout.clone(), rng.gen_range(3..=6), labels).map_err(e2s)?;
    net.init_random(rng);
    let mut batch = Vec::new();
    for _ in 0..4 {
        let groups = layout
            .iter()
            .map(|l| {
                let v = l.group.vocab_size;
                let bag = |rng: &mut ChaCha8Rng, min: usize, max: usize| -> Vec<u32> {
                    (0..rng.gen_range(min..=max)).map(|_| rng.gen_range(0..v)).collect()
                };
                // Concat slots always hold at least one id; pooled bags may be empty.
                match l.group.pooling {
                    Pooling::Concat => GroupHits::Slots((0..l.slots).map(|_| bag(rng, 1, 3)).collect()),
                    _ => GroupHits::Bag(bag(rng, 0, 4)),
                }
            })
            .collect();
        batch.push((FeatureVector { groups }, rng.gen_range(0..k)));
    }
    Ok((net, batch))
}

fn criterion_7() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let l2 = 1e-3;
    let h = 1e-4f32;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for index in 0..20 {
        let (mut net, batch) = random_model(&mut rng, index)?;
        let (_, grads) = net.loss_gradient(&batch, l2).map_err(e2s)?;
        let lens = net.tensor_lens();
        for (t, &len) in lens.iter().enumerate() {
            for i in 0..len {
                let x = net.tensors_mut().map_err(e2s)?[t][i];
                let (up, down) = (x + h, x - h);
                net.tensors_mut().map_err(e2s)?[t][i] = up;
                let lu = net.loss(&batch, l2).map_err(e2s)?;
                net.tensors_mut().map_err(e2s)?[t][i] = down;
                let ld = net.loss(&batch, l2).map_err(e2s)?;
                net.tensors_mut().map_err(e2s)?[t][i] = x;
                // Divide by the step actually taken after f32 rounding.
                let numeric = (lu - ld) / (f64::from(up) - f64::from(down));
                let analytic = grads.tensors[t][i];
                let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3);
                worst = worst.max(err);
                checked += 1;
                ensure(err <= 1e-4, || {
                    format!("model {index} tensor {t}[{i}]: analytic {analytic} numeric {numeric}")
                })?;
            }
        }
    }
    Ok(format!("{checked} coordinates over 20 models, worst relative error {worst:.1e}"))
}

// 8. End-to-end learning sanity --------------------------------------------

fn with_steps(name: &str, steps: u64) -> std::result::Result<TaskConfig, String> {
    let mut cfg = TaskConfig::builtin(name).map_err(e2s)?;
    cfg.set("max_steps", &steps.to_string()).map_err(e2s)?;
    cfg.set("eval_interval", "250").map_err(e2s)?;
    Ok(cfg)
}

fn langid_corpus(rng: &mut ChaCha8Rng, per_lang: usize) -> Vec<(String, String)> {
    let alphabets: [(&str, std::ops::RangeInclusive<char>); 4] =
        [("latn", 'a'..='z'), ("grek", 'α'..='ω'), ("cyrl", 'а'..='я'), ("hira", 'ぁ'..='ゖ')];
    let mut out = Vec::new();
    for _ in 0..per_lang {
        for (label, range) in &alphabets {
            let letters: Vec<char> = range.clone().collect();
            let words: Vec<String> = (0..rng.gen_range(2..8))
                .map(|_| (0..rng.gen_range(2..8)).map(|_| *letters.choose(rng).unwrap()).collect())
                .collect();
            out.push((label.to_string(), words.join(" ")));
        }
    }
    out
}

/// Words are runs of a/b/c closed by `d`, so a boundary follows every `d`.
fn seg_corpus(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<String>> {
    (0..n)
        .map(|_| {
            (0..rng.gen_range(1..10))
                .map(|_| {
                    let mut w: String =
                        (0..rng.gen_range(0..4)).map(|_| *['a', 'b', 'c'].choose(rng).unwrap()).collect();
                    w.push('d');
                    w
                })
                .collect()
        })
        .collect()
}

/// DET (ADJ) NOUN VERB DET NOUN, with `run` a noun after DET and a verb elsewhere.
fn pos_corpus(rng: &mut ChaCha8Rng, n: usize) -> Vec<TaggedSentence> {
    let det = ["the", "a", "every"];
    let adj = ["big", "red", "quick", "old"];
    let noun = ["cat", "dog", "run", "tree", "idea"];
    let verb = ["sees", "run", "likes", "eats"];
    (0..n)
        .map(|_| {
            let mut s = TaggedSentence::default();
            let mut push = |w: &str, t: &str| {
                s.words.push(w.to_string());
                s.tags.push(t.to_string());
            };
            push(det.choose(rng).unwrap(), "DET");
            if rng.gen_bool(0.5) {
                push(adj.choose(rng).unwrap(), "ADJ");
            }
            push(noun.choose(rng).unwrap(), "NOUN");
            push(verb.choose(rng).unwrap(), "VERB");
            push(det.choose(rng).unwrap(), "DET");
            push(noun.choose(rng).unwrap(), "NOUN");
            s
        })
        .collect()
}

/// Nouns (`nK`) followed by an adjective (`aK`) are reordered adjective first.
fn preorder_corpus(rng: &mut ChaCha8Rng, n: usize) -> Vec<PreorderExample> {
    (0..n)
        .map(|_| {
            let len = rng.gen_range(2..10);
            let words: Vec<String> = (0..len)
                .map(|_| {
                    let class = *['n', 'a', 'v'].choose(rng).unwrap();
                    format!("{class}{}", rng.gen_range(0..30))
                })
                .collect();
            let mut target: Vec<usize> = (0..len).collect();
            let mut i = 0;
            while i + 1 < len {
                if words[i].starts_with('n') && words[i + 1].starts_with('a') {
                    target.swap(i, i + 1);
                    i += 2;
                } else {
                    i += 1;
                }
            }
            PreorderExample { words, target }
        })
        .collect()
}

fn criterion_8() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut notes = Vec::new();

    let (train, dev) = (langid_corpus(&mut rng, 150), langid_corpus(&mut rng, 50));
    let t = langid::train_langid(&with_steps("langid-6", 1500)?, &train, &dev, 1).map_err(e2s)?;
    let f1 = langid::evaluate(t.model.view(), &dev).map_err(e2s)?;
    ensure(f1 > 0.99, || format!("(a) langid dev micro-F1 {f1:.4}"))?;
    notes.push(format!("(a) F1 {f1:.4}"));

    let (train, dev) = (seg_corpus(&mut rng, 200), seg_corpus(&mut rng, 100));
    let t = segmenter::train_segmenter(&with_steps("seg-c64", 1500)?, &train, &dev, 1).map_err(e2s)?;
    let f1 = segmenter::evaluate(t.model.view(), &dev).map_err(e2s)?;
    ensure(f1 == 1.0, || format!("(b) segmentation word F1 {f1:.4}"))?;
    notes.push(format!("(b) F1 {f1:.4}"));

    let train = pos_corpus(&mut rng, 200);
    let t = tagger::train_tagger(&with_steps("pos", 1500)?, &train, &train, None, 1).map_err(e2s)?;
    let acc = tagger::evaluate(t.model.view(), &train).map_err(e2s)?;
    ensure(acc == 1.0, || format!("(c) POS train accuracy {acc:.4}"))?;
    notes.push(format!("(c) acc {acc:.4}"));

    let (train, dev, test) =
        (preorder_corpus(&mut rng, 400), preorder_corpus(&mut rng, 100), preorder_corpus(&mut rng, 200));
    let cfg = with_steps("preorder", 2500)?;
    assert_eq!(cfg.mode, PreorderMode::Vanilla);
    let t = preorderer::train_preorderer(&cfg, &train, &dev, None, 1).map_err(e2s)?;
    let frs = preorderer::evaluate(t.model.view(), None, &test).map_err(e2s)?;
    ensure(frs > 0.95, || format!("(d) held-out FRS {frs:.4}"))?;
    notes.push(format!("(d) FRS {frs:.4}"));
    Ok(notes.join(", "))
}

// 9. FRS -------------------------------------------------------------------

/// Fewest pieces a predicted order splits into such that each piece is a
/// contiguous, in-order run of the reference; by trying every cut set.
fn brute_force_chunks(pred: &[usize], reference: &[usize]) -> usize {
    let n = pred.len();
    let pos: BTreeMap<usize, usize> = reference.iter().enumerate().map(|(i, &w)| (w, i)).collect();
    let mut best = usize::MAX;
    for cuts in 0u32..(1 << (n - 1)) {
        let mut ok = true;
        for i in 0..n - 1 {
            let cut = cuts >> i & 1 == 1;
            if !cut && pos[&pred[i + 1]] != pos[&pred[i]] + 1 {
                ok = false;
                break;
            }
        }
        if ok {
            best = best.min(cuts.count_ones() as usize + 1);
        }
    }
    best
}

fn criterion_9() -> Check {
    let frs = |p: &[usize], r: &[usize]| fuzzy_reordering_score(p, r).map_err(e2s);
    let id: Vec<usize> = (0..4).collect();
    ensure(frs(&id, &id)? == 1.0, || "identity".into())?;
    ensure(frs(&[3, 2, 1, 0], &id)? == 0.0, || "reversal".into())?;
    ensure((frs(&[1, 0, 2, 3], &id)? - 1.0 / 3.0).abs() < 1e-12, || "worked example".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..1000 {
        let n = rng.gen_range(1..=10);
        let mut r: Vec<usize> = (0..n).collect();
        let mut p = r.clone();
        r.shuffle(&mut rng);
        p.shuffle(&mut rng);
        let c = brute_force_chunks(&p, &r);
        let expect = if n == 1 { 1.0 } else { 1.0 - (c as f64 - 1.0) / (n as f64 - 1.0) };
        let got = frs(&p, &r)?;
        ensure((got - expect).abs() < 1e-12, || format!("{p:?} vs {r:?}: {got} != {expect}"))?;
    }
    Ok("identity 1, reversal 0, worked example 1/3, 1000 brute-force pairs".into())
}

// 10. Determinism ----------------------------------------------------------

fn cli(args: &[&str]) -> std::result::Result<(), String> {
    let args: Vec<String> = std::iter::once("sffn").chain(args.iter().copied()).map(String::from).collect();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    match sffn::cli::run(&args, &mut out, &mut err) {
        0 => Ok(()),
        code => Err(format!("{args:?} exited {code}: {}", String::from_utf8_lossy(&err))),
    }
}

fn criterion_10() -> Check {
    let dir = tempfile::tempdir().map_err(e2s)?;
    let path = |name: &str| dir.path().join(name).display().to_string();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let lid: String = langid_corpus(&mut rng, 20).iter().map(|(l, d)| format!("{l}\t{d}\n")).collect();
    let seg: String = seg_corpus(&mut rng, 40).iter().map(|w| w.join(" ") + "\n").collect();
    let pos: String = pos_corpus(&mut rng, 40)
        .iter()
        .map(|s| {
            let rows: String = s
                .words
                .iter()
                .zip(&s.tags)
                .enumerate()
                .map(|(i, (w, t))| format!("{}\t{w}\t_\t{t}\n", i + 1))
                .collect();
            rows + "\n"
        })
        .collect();
    let pre: String = preorder_corpus(&mut rng, 40)
        .iter()
        .map(|e| {
            let order: Vec<String> = e.target.iter().map(|i| (i + 1).to_string()).collect();
            format!("{}\t{}\n", e.words.join(" "), order.join(" "))
        })
        .collect();
    let mut tasks = Vec::new();
    for (task, data) in [("langid", &lid), ("segment", &seg), ("pos", &pos), ("preorder", &pre)] {
        let file = path(&format!("{task}.txt"));
        std::fs::write(&file, data).map_err(e2s)?;
        let mut outputs = Vec::new();
        for run in 0..2 {
            let model = path(&format!("{task}-{run}.model"));
            cli(&[
                "train",
                "--task",
                task,
                "--train-file",
                &file,
                "--dev-file",
                &file,
                "--model",
                &model,
                "--seed",
                "42",
                "--set",
                "max_steps=200",
                "--set",
                "eval_interval=50",
            ])?;
            outputs.push(std::fs::read(&model).map_err(e2s)?);
        }
        ensure(outputs[0] == outputs[1], || format!("{task}: model files differ between runs"))?;
        SavedModel::from_bytes(&outputs[0]).map_err(e2s)?;
        tasks.push(task);
    }
    Ok(format!("byte-identical models for {}", tasks.join(", ")))
}

fn main() {
    type Criterion = (&'static str, u64, fn() -> Check);
    let criteria: [Criterion; 10] = [
        ("size accounting", 1, criterion_1),
        ("FLOPs accounting", 1, criterion_2),
        ("quantization", 5, criterion_3),
        ("Bloom map", 30, criterion_4),
        ("preordering transition system", 60, criterion_5),
        ("segmentation system", 30, criterion_6),
        ("gradient correctness", 30, criterion_7),
        ("end-to-end learning", 600, criterion_8),
        ("FRS metric", 5, criterion_9),
        ("determinism", 600, criterion_10),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let id = format!("{}", i + 1);
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = run();
        let took = start.elapsed();
        let verdict = match result {
            Ok(detail) if took <= Duration::from_secs(*budget) => ("PASS", detail),
            Ok(detail) => ("FAIL", format!("{detail}; over the {budget} s budget")),
            Err(e) => ("FAIL", e),
        };
        if verdict.0 == "FAIL" {
            failed += 1;
        }
        println!("{} criterion {:>2} ({name}) [{:.2}s]: {}", verdict.0, i + 1, took.as_secs_f64(), verdict.1);
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
