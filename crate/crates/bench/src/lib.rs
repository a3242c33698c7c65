//! Fixtures shared by the criterion benches.

use fieldnotes::agent::{Hypothesis, IterationRecord, QuerySet, ReasoningTrace, ValidationVerdict};
use fieldnotes::canon::{canonicalize, parse_triadic_observation, CanonicalInput, RawAsset};
use fieldnotes::notes::{KnowledgeBase, TaskNode, TipOrigin, TipTarget};

const WORDS: [&str; 16] = [
    "ball", "ramp", "cart", "glass", "water", "shadow", "tower", "block", "rope", "spring", "wheel", "slope", "mirror",
    "magnet", "sand", "ice",
];

/// One image and one 240-frame video sampled at `k`.
pub fn input(k: u32) -> CanonicalInput {
    canonicalize(
        "Which ball rolls farther down the ramp?\nA. red\nB. blue\nC. green",
        &[RawAsset::image("scene.png"), RawAsset::video("clip.mp4", 240)],
        k,
        512,
    )
    .expect("fixture canonicalizes")
}

/// `n` task nodes with three detail tips each, deterministic vocabulary.
pub fn knowledge_base(n: usize) -> KnowledgeBase {
    let mut kb = KnowledgeBase::new();
    for i in 0..n {
        let w = |j: usize| WORDS[(i * 7 + j * 3) % WORDS.len()];
        let name = format!("{}_{}_{i}", w(0), w(1));
        kb.add_task_node(TaskNode::new(&name, format!("which {} moves the {} near the {}", w(0), w(1), w(2))))
            .expect("unique names");
        for t in 0..3 {
            kb.append_tip(
                TipTarget::Node(&name),
                format!("watch the {} against the {}", w(t + 3), w(t + 4)),
                TipOrigin::Seed,
            )
            .expect("non-empty tip");
        }
    }
    kb
}

/// Observation lines against [`input`] with k = 4; every third one is malformed.
pub fn observation_lines(n: usize) -> Vec<String> {
    let frames = [0, 79, 159, 239];
    (0..n)
        .map(|i| match i % 3 {
            0 => format!("([#1videoframe{}] | ball {i} | trajectory bends after contact)", frames[i % 4]),
            1 => format!("([#0image] | cart {i} | shadow is sharp)"),
            _ => format!("([#1videoframe{}] | ghost | unsampled frame)", 1 + i % 7),
        })
        .collect()
}

/// A three-iteration trace with `facts_per_iter` facts per iteration.
pub fn trace(facts_per_iter: usize) -> ReasoningTrace {
    let input = input(4);
    let facts: Vec<_> = (0..facts_per_iter)
        .map(|i| {
            parse_triadic_observation(&format!("([#0image] | object {i} | painted surface number {i})"), &input)
                .unwrap()
        })
        .collect();
    ReasoningTrace {
        iterations: (1..=3)
            .map(|index| IterationRecord {
                index,
                hypothesis: Hypothesis { explanation: "compare".into(), candidate_answer: "A".into() },
                queries: QuerySet::default(),
                facts: facts.clone(),
                verdict: ValidationVerdict { sufficient: index == 3, missing_evidence: vec![] },
                rejected_fact_lines: vec![],
            })
            .collect(),
        final_answer: Some("A".into()),
        final_reply: "Final Answer: A".into(),
        degenerative_used: false,
        assumption_used: false,
        context_node: None,
        general_tips_used: vec![],
    }
}
