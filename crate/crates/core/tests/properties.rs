use proptest::collection::vec;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use infopursuit::answers::synth_generate;
use infopursuit::corpus::{split_dataset, AnswerMatrix, EmbeddingTable, LabelSet, Split};
use infopursuit::exactip::{ip_run, TabularJoint};
use infopursuit::history::encode_history;
use infopursuit::nn::{masked_softmax, straight_through_select, weighted_bce, Mlp, SelectMode};
use infopursuit::pursuit::{pursue, queries_needed_curve, traces_from_jsonl, trace_to_jsonl, StopRule};
use infopursuit::querybank::{
    build_query_bank, cosine_similarity, dedup_by_cosine, kmeans_cluster, select_representatives, BankConfig,
};
use infopursuit::{average_precision, f1_score, Answer, History, PursuitModel, RowProvider, SyntheticSpec};

fn answer() -> impl Strategy<Value = Answer> {
    prop_oneof![Just(Answer::Negative), Just(Answer::Unknown), Just(Answer::Positive)]
}

fn matrix() -> impl Strategy<Value = AnswerMatrix> {
    (0usize..12, 1usize..8).prop_flat_map(|(r, c)| {
        vec(answer(), r * c).prop_map(move |v| AnswerMatrix::new(r, c, v).unwrap())
    })
}

fn embeddings(max_rows: usize) -> impl Strategy<Value = EmbeddingTable> {
    (1usize..=max_rows, 2usize..5).prop_flat_map(|(n, d)| {
        vec(vec(-3i8..=3, d), n).prop_map(|rows| {
            let rows: Vec<Vec<f32>> = rows
                .into_iter()
                .map(|mut r| {
                    if r.iter().all(|&v| v == 0) {
                        r[0] = 1;
                    }
                    r.into_iter().map(f32::from).collect()
                })
                .collect();
            EmbeddingTable::from_rows(&rows).unwrap()
        })
    })
}

fn random_model(n: usize, seed: u64) -> PursuitModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = Mlp::<f32>::five_layer(2 * n, 8, n, &mut rng).unwrap();
    let c = Mlp::<f32>::five_layer(2 * n, 8, 1, &mut rng).unwrap();
    PursuitModel::new(q, c, vec!["t".into()]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn answer_matrix_roundtrips(m in matrix()) {
        prop_assert_eq!(AnswerMatrix::from_bytes(&m.to_bytes()).unwrap(), m.clone());
        if m.n_reports() > 0 {
            prop_assert_eq!(AnswerMatrix::from_csv(&m.to_csv()).unwrap(), m);
        }
    }

    #[test]
    fn labels_roundtrip(rows in 1usize..10, tasks in 1usize..4, seed in any::<u64>()) {
        let values: Vec<u8> = (0..rows * tasks).map(|i| ((seed >> (i % 64)) & 1) as u8).collect();
        let l = LabelSet::new(rows, tasks, values).unwrap();
        prop_assert_eq!(LabelSet::from_bytes(&l.to_bytes()).unwrap(), l.clone());
        prop_assert_eq!(LabelSet::from_csv(&l.to_csv()).unwrap(), l);
    }

    #[test]
    fn embeddings_roundtrip(t in embeddings(10)) {
        prop_assert_eq!(EmbeddingTable::from_bytes(&t.to_bytes()).unwrap(), t);
    }

    #[test]
    fn split_is_a_pure_partition(n in 1usize..500, a in 0.0f64..5.0, b in 0.0f64..5.0, c in 0.01f64..5.0, seed in any::<u64>()) {
        let s = split_dataset(n, [a, b, c], seed).unwrap();
        prop_assert_eq!(s.sizes().iter().sum::<usize>(), n);
        prop_assert_eq!(s.splits.len(), n);
        prop_assert_eq!(&split_dataset(n, [a, b, c], seed).unwrap(), &s);
        let mut all: Vec<usize> = [Split::Train, Split::Val, Split::Test].iter().flat_map(|&x| s.indices(x)).collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn dedup_leaves_no_close_pair(t in embeddings(16), threshold in -0.9f64..1.0) {
        let candidates: Vec<usize> = (0..t.len()).collect();
        let priority: Vec<usize> = (0..t.len()).map(|i| i % 3).collect();
        let kept = dedup_by_cosine(&candidates, &t, threshold, &priority).unwrap();
        prop_assert!(!kept.is_empty());
        for (i, &a) in kept.iter().enumerate() {
            for &b in &kept[i + 1..] {
                prop_assert!(cosine_similarity(t.row(a), t.row(b)) <= threshold);
            }
        }
        // every dropped candidate is close to some kept one
        for c in candidates.iter().filter(|c| !kept.contains(c)) {
            prop_assert!(kept.iter().any(|&k| cosine_similarity(t.row(*c), t.row(k)) > threshold));
        }
    }

    #[test]
    fn kmeans_inertia_never_increases(t in embeddings(30), k in 1usize..6, seed in any::<u64>()) {
        let k = k.min(t.len());
        let r = kmeans_cluster(&t, k, seed, 50, 0.0).unwrap();
        for w in r.inertia_history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "{:?}", r.inertia_history);
        }
        prop_assert_eq!(kmeans_cluster(&t, k, seed, 50, 0.0).unwrap(), r);
    }

    #[test]
    fn representatives_minimise_centroid_distance(t in embeddings(30), k in 1usize..6, seed in any::<u64>()) {
        let k = k.min(t.len());
        let r = kmeans_cluster(&t, k, seed, 20, 1e-9).unwrap();
        let reps = select_representatives(&r, &t).unwrap();
        let dist = |i: usize, c: usize| -> f64 {
            t.row(i).iter().zip(r.centroid(c)).map(|(&x, &m)| (x as f64 - m).powi(2)).sum()
        };
        for &rep in &reps {
            let c = r.assignments[rep];
            for i in (0..t.len()).filter(|&i| r.assignments[i] == c) {
                let (di, dr) = (dist(i, c), dist(rep, c));
                prop_assert!(dr < di || (dr == di && rep <= i));
            }
        }
        let non_empty = r.cluster_sizes().iter().filter(|&&s| s > 0).count();
        prop_assert_eq!(reps.len(), non_empty);
    }

    #[test]
    fn query_bank_build_is_deterministic(t in embeddings(20), seed in any::<u64>()) {
        let texts: Vec<String> = (0..t.len()).map(|i| format!("f{i}")).collect();
        let cfg = BankConfig { k: (t.len() / 2).max(1), seed, ..BankConfig::default() };
        let a = build_query_bank(&t, &texts, &cfg).unwrap();
        prop_assert!(a.len() <= cfg.k);
        prop_assert_eq!(a.clone(), build_query_bank(&t, &texts, &cfg).unwrap());
        for (i, q) in a.queries().iter().enumerate() {
            prop_assert_eq!(q.query_id, i);
        }
    }

    #[test]
    fn synthetic_data_is_reproducible(n_q in 1usize..6, prior in 0.05f64..0.95, seed in any::<u64>()) {
        let spec = SyntheticSpec::random(n_q, prior, seed);
        let a = synth_generate(&spec, 50).unwrap();
        prop_assert_eq!(a, synth_generate(&spec, 50).unwrap());
    }

    #[test]
    fn conditional_mi_is_non_negative(seed in any::<u64>(), alpha in 0.0f64..2.0, hist_len in 0usize..4) {
        let spec = SyntheticSpec::random(5, 0.4, seed);
        let (m, l) = synth_generate(&spec, 200).unwrap();
        let joint = TabularJoint::new(&m, &l, 0, alpha).unwrap();
        let h = History::from_entries(m.row(0).iter().copied().enumerate().take(hist_len)).unwrap();
        for q in 0..5 {
            prop_assert!(joint.conditional_mutual_information(q, &h).unwrap() >= -1e-12);
        }
        let p = joint.posterior(&h);
        prop_assert!((0.0..=1.0).contains(&p));
        let run = ip_run(&joint, m.row(1), 1e-3, 5).unwrap();
        prop_assert_eq!(run.clone(), ip_run(&joint, m.row(1), 1e-3, 5).unwrap());
    }

    #[test]
    fn forward_is_pure(seed in any::<u64>(), x in vec(-2.0f64..2.0, 4)) {
        let m = Mlp::<f64>::five_layer(4, 6, 3, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(m.predict(&x).unwrap(), m.predict(&x).unwrap());
    }

    #[test]
    fn bce_is_finite(logit in -1e4f64..1e4, label in 0u8..2, w in 0.01f64..100.0) {
        let (l, g) = weighted_bce(logit, label, w);
        prop_assert!(l.is_finite() && g.is_finite() && l >= 0.0);
    }

    #[test]
    fn eval_selection_is_shift_invariant(
        logits in vec(-5.0f64..5.0, 2..10),
        shift in -100.0f64..100.0,
        mask_seed in any::<u64>(),
    ) {
        let mut blocked: Vec<bool> = (0..logits.len()).map(|i| (mask_seed >> i) & 1 == 1).collect();
        blocked[0] = false;
        let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
        let a = straight_through_select(&logits, &blocked, 1.0, SelectMode::Eval).unwrap();
        let b = straight_through_select(&shifted, &blocked, 1.0, SelectMode::Eval).unwrap();
        // a shift can only merge near-ties in floating point
        let gap = (logits[a.index] - logits[b.index]).abs();
        prop_assert!(a.index == b.index || gap < 1e-12);
        prop_assert!(!blocked[a.index]);
        let s = masked_softmax(&logits, &blocked, 0.5);
        prop_assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(s.iter().zip(&blocked).all(|(&p, &b)| !b || p == 0.0));
    }

    #[test]
    fn history_encoding_ignores_order(entries in vec((0usize..10, answer()), 0..10)) {
        let mut seen = std::collections::BTreeMap::new();
        for (q, a) in entries {
            seen.entry(q).or_insert(a);
        }
        let forward = History::from_entries(seen.iter().map(|(&q, &a)| (q, a))).unwrap();
        let backward = History::from_entries(seen.iter().rev().map(|(&q, &a)| (q, a))).unwrap();
        prop_assert_eq!(encode_history(&forward, 10).unwrap(), encode_history(&backward, 10).unwrap());
    }

    #[test]
    fn ap_and_f1_stay_in_range(pairs in vec((0u8..20, 0u8..2), 1..40)) {
        let scores: Vec<f64> = pairs.iter().map(|p| p.0 as f64 / 20.0).collect();
        let labels: Vec<u8> = pairs.iter().map(|p| p.1).collect();
        let preds: Vec<u8> = scores.iter().map(|&s| (s >= 0.5) as u8).collect();
        let (p, r, f1) = f1_score(&preds, &labels).unwrap();
        for v in [p, r, f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        if labels.contains(&1) {
            let ap = average_precision(&scores, &labels).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&ap));
            // strictly increasing transforms keep ties and order
            let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
            prop_assert!((average_precision(&warped, &labels).unwrap() - ap).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pursuit_traces_are_well_formed(seed in any::<u64>(), answers in vec(answer(), 12)) {
        let model = random_model(12, seed);
        let provider = RowProvider::new(&answers);
        let trace = pursue(&model, &provider, 0, &StopRule::new(0.9, 12).unwrap()).unwrap();
        let mut ids: Vec<usize> = trace.steps.iter().map(|s| s.query_id).collect();
        for (k, s) in trace.steps.iter().enumerate() {
            prop_assert_eq!(s.step, k + 1);
            prop_assert_eq!(s.answer, answers[s.query_id]);
            prop_assert!((0.0..=1.0).contains(&s.posterior));
        }
        ids.sort_unstable();
        ids.dedup();
        prop_assert_eq!(ids.len(), trace.steps.len());
        prop_assert_eq!(traces_from_jsonl(&trace_to_jsonl(&trace)).unwrap(), vec![trace.clone()]);

        // a smaller budget yields a prefix
        let short = pursue(&model, &provider, 0, &StopRule::new(0.9, 3).unwrap()).unwrap();
        prop_assert_eq!(&short.steps[..], &trace.steps[..short.steps.len()]);
    }

    #[test]
    fn steps_to_stop_grow_with_threshold(seed in any::<u64>(), answers in vec(answer(), 10)) {
        let model = random_model(10, seed);
        let provider = RowProvider::new(&answers);
        let thresholds = [0.5, 0.6, 0.7, 0.8, 0.85, 0.9, 0.95, 0.99, 1.0];
        let curve = queries_needed_curve(&model, &provider, &[0], &thresholds, 0).unwrap();
        for w in curve.windows(2) {
            prop_assert!(w[0].steps[0] <= w[1].steps[0]);
        }
    }
}
