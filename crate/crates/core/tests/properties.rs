use std::collections::HashSet;

use kpgan::checkpoint::Checkpoint;
use kpgan::config::RunConfig;
use kpgan::corpus::{encode_sample, split_present_absent, CorpusLimits, KeyphraseSequence, Sample, Vocabulary, NUM_SPECIALS};
use kpgan::evaluation::{alpha_ndcg_at_k, f1_at_k, f1_at_m};
use kpgan::gru::{gru_cell, GruSpec};
use kpgan::rng::seeded;
use kpgan::tensor::{matmul, softmax};
use kpgan::training::{adagrad_update, Accumulators};
use kpgan::{Graph, ParamSet, Tensor};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-2.0f64..2.0, rows * cols).prop_map(move |d| Tensor::matrix(rows, cols, d).unwrap())
}

fn phrase_ids() -> impl Strategy<Value = Vec<Vec<usize>>> {
    prop::collection::vec(prop::collection::vec(NUM_SPECIALS..40usize, 1..5), 0..6)
}

fn words() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["graph", "graphs", "neural", "network", "networks", "search", "model"]), 0..10)
        .prop_map(|v| v.into_iter().map(str::to_string).collect())
}

fn labels() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e"]), 0..7)
        .prop_map(|v| v.into_iter().map(str::to_string).collect())
}

proptest! {
    #[test]
    fn softmax_is_a_shift_invariant_distribution(v in prop::collection::vec(-30.0f64..30.0, 1..12), c in -50.0f64..50.0) {
        let p = softmax(&v, None).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        let q = softmax(&shifted, None).unwrap();
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn masked_entries_get_zero(v in prop::collection::vec(-5.0f64..5.0, 2..8), seed in any::<u64>()) {
        let mask: Vec<bool> = (0..v.len()).map(|i| i == 0 || (seed >> (i % 64)) & 1 == 1).collect();
        let p = softmax(&v, Some(&mask)).unwrap();
        for (x, m) in p.iter().zip(&mask) {
            if !m { prop_assert_eq!(*x, 0.0); }
        }
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn matmul_is_associative(a in matrix(2, 3), b in matrix(3, 4), c in matrix(4, 2)) {
        let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
        let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
        prop_assert!(left.max_abs_diff(&right) < 1e-9);
    }

    #[test]
    fn gru_output_stays_in_the_unit_box(x in prop::collection::vec(-3.0f64..3.0, 3), h in prop::collection::vec(-0.99f64..0.99, 4), seed in any::<u64>()) {
        let spec = GruSpec::new("g", 3, 4);
        let mut set = ParamSet::new();
        spec.init(&mut set, &mut seeded(seed));
        let out = gru_cell(&Tensor::vector(x), &Tensor::vector(h), &set, "g").unwrap();
        prop_assert!(out.data().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn flatten_round_trips(phrases in phrase_ids()) {
        let seq = KeyphraseSequence::new(phrases.clone());
        let flat = seq.flatten();
        let total: usize = phrases.iter().map(Vec::len).sum();
        // m - 1 separators plus EOS; an empty sequence is just EOS.
        prop_assert_eq!(flat.len(), total + phrases.len().max(1));
        prop_assert_eq!(KeyphraseSequence::from_flat(&flat), seq);
    }

    #[test]
    fn encoded_ids_stay_in_the_extended_range(title in words(), abs in words(), kp in words()) {
        let vocab = Vocabulary::build(["graph", "neural", "model"], 8).unwrap();
        let title = if title.is_empty() { "t".to_string() } else { title.join(" ") };
        let abs = if abs.is_empty() { "a".to_string() } else { abs.join(" ") };
        let phrases: Vec<String> = kp.chunks(2).map(|c| c.join(" ")).collect();
        let refs: Vec<&str> = phrases.iter().map(String::as_str).collect();
        let s = encode_sample(&Sample::new(&title, &abs, &refs), &vocab, &CorpusLimits::default());
        let bound = vocab.len() + s.doc.oov_list.len();
        prop_assert!(s.doc.extended_ids.iter().all(|&i| i < bound));
        prop_assert!(s.target.iter().all(|&i| i < bound));
        prop_assert_eq!(s.doc.ids.len(), s.doc.tokens.len());
        for (id, ext) in s.doc.ids.iter().zip(&s.doc.extended_ids) {
            prop_assert_eq!(*ext >= vocab.len(), *id == kpgan::corpus::UNK);
        }
    }

    #[test]
    fn present_and_absent_partition_the_gold_set(doc in words(), kp in prop::collection::vec(words(), 0..5)) {
        let (present, absent) = split_present_absent(&kp, &doc);
        let p: HashSet<_> = present.iter().collect();
        prop_assert!(absent.iter().all(|a| !p.contains(a)));
        let deduped = kpgan::corpus::dedup_phrases(&kp);
        prop_assert_eq!(present.len() + absent.len(), deduped.len());
    }

    #[test]
    fn metrics_lie_in_the_unit_interval(preds in labels(), gold in labels(), alpha in 0.0f64..0.99) {
        for v in [f1_at_k(&preds, &gold, 5), f1_at_m(&preds, &gold)].into_iter().flatten() {
            for x in [v.precision, v.recall, v.f1] {
                prop_assert!((0.0..=1.0).contains(&x));
            }
        }
        let n = alpha_ndcg_at_k(&preds, &gold, alpha, 5).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&n));
    }

    #[test]
    fn f1_at_m_ignores_order(preds in labels(), gold in labels(), seed in any::<u64>()) {
        let mut shuffled = preds.clone();
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut seeded(seed));
        prop_assert_eq!(f1_at_m(&preds, &gold), f1_at_m(&shuffled, &gold));
    }

    #[test]
    fn f1_at_k_only_sees_the_first_k_distinct(preds in labels(), extra in labels(), gold in labels()) {
        let mut distinct = Vec::new();
        for p in &preds {
            if !distinct.contains(p) { distinct.push(p.clone()); }
        }
        distinct.truncate(3);
        let mut longer = distinct.clone();
        if distinct.len() == 3 { longer.extend(extra); }
        prop_assert_eq!(f1_at_k(&distinct, &gold, 3), f1_at_k(&longer, &gold, 3));
    }

    #[test]
    fn adagrad_accumulators_never_shrink(g in prop::collection::vec(-5.0f64..5.0, 3), steps in 1usize..5) {
        let mut params = ParamSet::new();
        params.insert("w", Tensor::vector(vec![0.1, -0.2, 0.3]));
        let mut acc = Accumulators::new(0.1);
        let mut previous = vec![0.1; 3];
        for _ in 0..steps {
            let mut graph = Graph::new();
            let w = params.bind(&mut graph, "w").unwrap();
            let c = graph.input(Tensor::vector(g.clone()));
            let loss = graph.dot(w, c).unwrap();
            let grads = graph.backward(loss).unwrap();
            adagrad_update(&mut params, &grads, &mut acc, 0.1).unwrap();
            let now = acc.get("w").unwrap().data().to_vec();
            prop_assert!(now.iter().zip(&previous).all(|(a, b)| a >= b));
            previous = now;
        }
    }

    #[test]
    fn checkpoint_round_trip(values in prop::collection::vec(-10.0f64..10.0, 6), seed in any::<u64>()) {
        let vocab = Vocabulary::build(["x", "y"], 7).unwrap();
        let mut ckpt = Checkpoint::new(format!("[train]\nseed = {seed}\n"), vocab, None, None);
        ckpt.tensors.insert("gen.w", Tensor::matrix(2, 3, values.iter().map(|&v| v as f32 as f64).collect()).unwrap());
        let bytes = ckpt.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn config_text_round_trips(lr in 1e-6f64..1.0, seed in any::<u64>(), e in 1usize..300, alpha in 0.0f64..0.999) {
        let mut c = RunConfig::default();
        c.train.learning_rate = lr;
        c.train.seed = seed;
        c.embed_dim = e;
        c.alpha = alpha;
        prop_assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }
}
