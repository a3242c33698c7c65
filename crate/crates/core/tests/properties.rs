mod common;

use common::gen;
use fieldnotes::backend::{Message, ModelRequest, RoleTag};
use fieldnotes::canon::{
    canonicalize, format_visual_id, parse_triadic_observation, parse_visual_id, sample_frame_indices, RawAsset,
    VisualId,
};
use fieldnotes::harness::{extract_answer, RunReport};
use fieldnotes::notes::{error_rate, prune_eligible, KnowledgeBase, NodeStats, PruneConfig, TaskNode};
use fieldnotes::reflect::{stem, EligibilityReport, KeywordFilter};
use fieldnotes::select::{cosine, normalize_node_name, Embedder, HashingEmbedder};
use proptest::prelude::*;

proptest! {
    #[test]
    fn visual_id_round_trip(id in gen::visual_id()) {
        prop_assert_eq!(parse_visual_id(&format_visual_id(id)).unwrap(), id);
    }

    #[test]
    fn visual_id_rejects_leading_zero(asset in 0u32..1000) {
        let padded = format!("[#0{asset}image]");
        prop_assert!(parse_visual_id(&padded).is_err());
    }

    #[test]
    fn sampling_matches_oracle(n in 1u32..2000, k in 1u32..32) {
        let got = sample_frame_indices(n, k);
        prop_assert_eq!(&got, &gen::sample_oracle(n, k));
        prop_assert_eq!(got.len() as u32, n.min(k));
        prop_assert_eq!(got[0], 0);
        if k > 1 || n == 1 {
            prop_assert_eq!(*got.last().unwrap(), if k > 1 { n - 1 } else { 0 });
        }
        prop_assert!(got.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn accepted_observations_resolve(
        frames in 1u32..40,
        k in 1u32..8,
        asset in 0u32..3,
        frame in 0u32..45,
        image in any::<bool>(),
        entity in "[a-z ]{0,8}",
        desc in "[a-z |()]{0,12}",
    ) {
        let input = canonicalize("q", &[RawAsset::image("a.png"), RawAsset::video("v.mp4", frames)], k, 512).unwrap();
        let id = if image { VisualId::Image { asset } } else { VisualId::VideoFrame { asset, frame } };
        let line = format!("({id} | {entity} | {desc})");
        if let Ok(obs) = parse_triadic_observation(&line, &input) {
            prop_assert!(input.resolves(&obs.visual));
            prop_assert!(input.visual_ids().contains(&obs.visual));
            if let Some(f) = obs.visual.frame_index() {
                prop_assert!(input.assets[1].sampled_frame_indices.contains(&f));
            }
        }
    }

    #[test]
    fn prune_rule_matches_integer_oracle(plus in 0u64..40, minus in 0u64..40) {
        let act = plus + minus;
        let expected = act >= 8 && 10 * minus > 7 * act;
        prop_assert_eq!(prune_eligible(NodeStats::new(plus, minus), PruneConfig::default()), expected);
        let e = error_rate(NodeStats::new(plus, minus));
        prop_assert!((0.0..=1.0).contains(&e));
    }

    #[test]
    fn node_dies_exactly_when_oracle_says(outcomes in prop::collection::vec(any::<bool>(), 0..40)) {
        let mut kb = KnowledgeBase::new();
        kb.add_task_node(TaskNode::new("n", "d")).unwrap();
        let mut died = None;
        for (i, ok) in outcomes.iter().enumerate() {
            if kb.record_outcome("n", *ok, PruneConfig::default()).unwrap().pruned {
                died = Some(i);
                break;
            }
        }
        prop_assert_eq!(died, gen::prune_step_oracle(&outcomes));
    }

    #[test]
    fn revision_is_monotone(ops in gen::kb_ops()) {
        let mut last = 0;
        for n in 0..=ops.len() {
            let rev = gen::build_kb(&ops[..n]).revision();
            prop_assert!(rev >= last);
            last = rev;
        }
    }

    #[test]
    fn persistence_round_trip(ops in gen::kb_ops()) {
        let kb = gen::build_kb(&ops);
        let json = kb.to_json();
        let back = KnowledgeBase::from_json(&json).unwrap();
        prop_assert_eq!(&back, &kb);
        prop_assert_eq!(back.to_json(), json);
    }

    #[test]
    fn report_reconciles(items in gen::item_results()) {
        let r = RunReport::from_items(items.clone(), vec![]);
        prop_assert_eq!(r.overall.total, r.per_domain.values().map(|t| t.total).sum::<u64>());
        prop_assert_eq!(r.overall.correct, r.per_domain.values().map(|t| t.correct).sum::<u64>());
        prop_assert_eq!(r.overall.total, items.iter().filter(|i| i.correct.is_some()).count() as u64);
        for t in r.per_domain.values().chain([&r.overall]) {
            prop_assert!((0.0..=1.0).contains(&t.accuracy));
            prop_assert!(t.correct <= t.total);
        }
        prop_assert_eq!(r.degenerative_count, items.iter().filter(|i| i.flags.degenerative).count() as u64);
    }

    #[test]
    fn embedding_ignores_word_order(words in prop::collection::vec("[a-z]{1,8}", 0..12), seed in any::<u64>()) {
        let e = HashingEmbedder::default();
        let mut shuffled = words.clone();
        // deterministic rotation stands in for a permutation
        if !shuffled.is_empty() {
            let k = (seed % shuffled.len() as u64) as usize;
            shuffled.rotate_left(k);
        }
        let a = e.embed(&words.join(" ")).unwrap();
        let b = e.embed(&shuffled.join(", ")).unwrap();
        prop_assert_eq!(&a, &b);
        let norm: f64 = a.values().iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(a.is_zero() || (norm - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cosine_is_bounded(a in "[a-z ]{0,40}", b in "[a-z ]{0,40}") {
        let e = HashingEmbedder::default();
        let c = cosine(&e.embed(&a).unwrap(), &e.embed(&b).unwrap()).unwrap();
        prop_assert!((-1.0..=1.0).contains(&c));
    }

    #[test]
    fn node_names_normalize_idempotently(raw in "[A-Za-z _]{0,30}") {
        let once = normalize_node_name(&raw);
        prop_assert_eq!(normalize_node_name(&once), once.clone());
        prop_assert!(!once.contains(' '));
    }

    #[test]
    fn final_answer_tier_wins(noise in "[a-z .,]{0,60}", label in 0usize..4, loose in 0usize..4) {
        let labels: Vec<String> = ["A", "B", "C", "D"].map(String::from).to_vec();
        let text = format!("{noise} {} {noise}\nFinal Answer: {}\n{}", labels[loose], labels[label], labels[loose]);
        prop_assert_eq!(extract_answer(&text, &labels).unwrap(), labels[label].clone());
    }

    #[test]
    fn stemming_never_grows(token in "[a-z]{0,12}") {
        let s = stem(&token);
        prop_assert!(token.starts_with(s));
        prop_assert!(!s.is_empty() || token.is_empty());
    }

    #[test]
    fn digest_ignores_line_endings(text in "[a-z\n ]{0,40}") {
        let unix = ModelRequest::new(RoleTag::Gatherer, vec![Message::user(text.clone())]);
        let dos = ModelRequest::new(RoleTag::Gatherer, vec![Message::user(text.replace('\n', "\r\n"))]);
        prop_assert_eq!(unix.digest(), dos.digest());
    }
}

#[test]
fn phi_is_a_conjunction() {
    for bits in 0u8..16 {
        let (c, f, a, d) = (bits & 8 != 0, bits & 4 != 0, bits & 2 != 0, bits & 1 != 0);
        assert_eq!(EligibilityReport::from_flags(c, f, a, d).eligible, c && !f && !a && d);
    }
}

#[test]
fn keyword_filter_is_fifteen_primitives() {
    assert_eq!(KeywordFilter::default().primitives().count(), 15);
}
