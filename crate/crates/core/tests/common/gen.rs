//! Strategies and brute-force oracles.

use fieldnotes::canon::VisualId;
use fieldnotes::harness::{Domain, ItemFlags, ItemResult};
use fieldnotes::notes::{KnowledgeBase, PruneConfig, TaskNode, TipOrigin, TipTarget};
use proptest::prelude::*;

pub fn visual_id() -> impl Strategy<Value = VisualId> {
    prop_oneof![
        any::<u32>().prop_map(|asset| VisualId::Image { asset }),
        (any::<u32>(), any::<u32>()).prop_map(|(asset, frame)| VisualId::VideoFrame { asset, frame }),
        (0u32..20).prop_map(|asset| VisualId::Image { asset }),
        (0u32..20, 0u32..50).prop_map(|(asset, frame)| VisualId::VideoFrame { asset, frame }),
    ]
}

/// Largest `i` with `i * (k-1) <= j * (n-1)`, found by scanning.
pub fn sample_oracle(n: u32, k: u32) -> Vec<u32> {
    if n <= k {
        return (0..n).collect();
    }
    if k == 1 {
        return vec![0];
    }
    (0..k)
        .map(|j| {
            let target = u64::from(j) * u64::from(n - 1);
            (0..n).rev().find(|&i| u64::from(i) * u64::from(k - 1) <= target).unwrap()
        })
        .collect()
}

/// Integer-only pruning oracle: fires once activations reach `n_min` and
/// `10 * n_minus > 7 * activations` (tau = 0.7). Returns the step index at
/// which the node dies, if it does.
pub fn prune_step_oracle(outcomes: &[bool]) -> Option<usize> {
    let (mut plus, mut minus) = (0u64, 0u64);
    for (i, &ok) in outcomes.iter().enumerate() {
        if ok {
            plus += 1;
        } else {
            minus += 1;
        }
        let act = plus + minus;
        if act >= 8 && 10 * minus > 7 * act {
            return Some(i);
        }
    }
    None
}

#[derive(Debug, Clone)]
pub enum KbOp {
    Node(u8, String),
    Tip(Option<u8>, String, u8),
    Outcome(u8, bool),
}

fn tip_text() -> impl Strategy<Value = String> {
    prop_oneof!["[a-z ]{0,24}", "\\PC{1,16}", Just("quote \" backslash \\ newline\n tab\t".to_string())]
}

pub fn kb_ops() -> impl Strategy<Value = Vec<KbOp>> {
    let op = prop_oneof![
        (0u8..6, "[a-z ]{1,30}").prop_map(|(n, d)| KbOp::Node(n, d)),
        (prop::option::of(0u8..6), tip_text(), 0u8..3).prop_map(|(n, t, o)| KbOp::Tip(n, t, o)),
        (0u8..6, any::<bool>()).prop_map(|(n, ok)| KbOp::Outcome(n, ok)),
    ];
    prop::collection::vec(op, 0..40)
}

/// Applies ops through the public API, ignoring rejected ones.
pub fn build_kb(ops: &[KbOp]) -> KnowledgeBase {
    let mut kb = KnowledgeBase::new();
    let name = |i: u8| format!("node_{i}");
    for op in ops {
        match op {
            KbOp::Node(i, d) => {
                let _ = kb.add_task_node(TaskNode::new(name(*i), d.clone()));
            }
            KbOp::Tip(target, text, origin) => {
                let origin = [TipOrigin::Seed, TipOrigin::Reflection, TipOrigin::TipDiscovery][*origin as usize];
                let n = target.map(name);
                let target = match &n {
                    Some(n) => TipTarget::Node(n),
                    None => TipTarget::General,
                };
                let _ = kb.append_tip(target, text.clone(), origin);
            }
            KbOp::Outcome(i, ok) => {
                let _ = kb.record_outcome(&name(*i), *ok, PruneConfig::default());
            }
        }
    }
    kb
}

pub fn item_results() -> impl Strategy<Value = Vec<ItemResult>> {
    let domain = prop_oneof![Just(Domain::S1), Just(Domain::S2), Just(Domain::S3), Just(Domain::S4)];
    let item = (domain, prop::option::of(any::<bool>()), any::<bool>(), any::<bool>()).prop_map(
        |(domain, correct, degenerative, eligible)| ItemResult {
            id: String::new(),
            domain,
            answer: None,
            correct,
            node: None,
            flags: ItemFlags { degenerative, eligible, ..ItemFlags::default() },
            error: None,
        },
    );
    prop::collection::vec(item, 0..60).prop_map(|mut v| {
        for (i, r) in v.iter_mut().enumerate() {
            r.id = format!("i{i}");
        }
        v
    })
}
