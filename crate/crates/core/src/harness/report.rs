use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::items::Domain;
use crate::reflect::UpdateKind;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub total: u64,
    pub correct: u64,
    pub accuracy: f64,
}

impl Tally {
    fn add(&mut self, correct: bool) {
        self.total += 1;
        self.correct += u64::from(correct);
    }

    fn finish(&mut self) {
        self.accuracy = if self.total == 0 { 0.0 } else { self.correct as f64 / self.total as f64 };
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemFlags {
    pub degenerative: bool,
    pub assumption: bool,
    pub eligible: bool,
    pub discovered_node: bool,
    pub pruned: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub update: Option<UpdateKind>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemResult {
    pub id: String,
    pub domain: Domain,
    pub answer: Option<String>,
    /// `None` when the item carries no ground truth.
    pub correct: Option<bool>,
    pub node: Option<String>,
    pub flags: ItemFlags,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub per_domain: BTreeMap<Domain, Tally>,
    pub overall: Tally,
    pub degenerative_count: u64,
    pub eligible_count: u64,
    pub pruned_nodes: Vec<String>,
    pub per_item: Vec<ItemResult>,
}

impl RunReport {
    /// Aggregates item results. Unlabelled items appear in `per_item` but are
    /// not scored.
    pub fn from_items(per_item: Vec<ItemResult>, pruned_nodes: Vec<String>) -> Self {
        let mut per_domain: BTreeMap<Domain, Tally> = Domain::ALL.iter().map(|d| (*d, Tally::default())).collect();
        let mut overall = Tally::default();
        for item in &per_item {
            if let Some(correct) = item.correct {
                per_domain.entry(item.domain).or_default().add(correct);
                overall.add(correct);
            }
        }
        per_domain.values_mut().for_each(Tally::finish);
        overall.finish();
        Self {
            per_domain,
            overall,
            degenerative_count: per_item.iter().filter(|i| i.flags.degenerative).count() as u64,
            eligible_count: per_item.iter().filter(|i| i.flags.eligible).count() as u64,
            pruned_nodes,
            per_item,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<8} {:>6} {:>8} {:>9}", "domain", "total", "correct", "accuracy")?;
        let row = |f: &mut fmt::Formatter<'_>, name: &str, t: &Tally| {
            writeln!(f, "{:<8} {:>6} {:>8} {:>8.2}%", name, t.total, t.correct, t.accuracy * 100.0)
        };
        for (domain, tally) in &self.per_domain {
            row(f, &domain.to_string(), tally)?;
        }
        row(f, "overall", &self.overall)?;
        writeln!(f, "degenerative: {}  eligible: {}", self.degenerative_count, self.eligible_count)?;
        let errors = self.per_item.iter().filter(|i| i.error.is_some()).count();
        if errors > 0 {
            writeln!(f, "item errors: {errors}")?;
        }
        if !self.pruned_nodes.is_empty() {
            writeln!(f, "pruned: {}", self.pruned_nodes.join(", "))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(id: &str, domain: Domain, correct: Option<bool>) -> ItemResult {
        ItemResult {
            id: id.into(),
            domain,
            answer: None,
            correct,
            node: None,
            flags: ItemFlags::default(),
            error: None,
        }
    }

    #[test]
    fn three_of_four() {
        let r = RunReport::from_items(
            vec![
                item("a", Domain::S1, Some(true)),
                item("b", Domain::S1, Some(false)),
                item("c", Domain::S3, Some(true)),
                item("d", Domain::S4, Some(true)),
            ],
            vec![],
        );
        assert_eq!(r.overall.total, 4);
        assert_eq!(r.overall.accuracy, 0.75);
        assert_eq!(r.per_domain[&Domain::S1].accuracy, 0.5);
        assert_eq!(r.per_domain[&Domain::S2].accuracy, 0.0);
    }

    #[test]
    fn unlabelled_items_not_scored() {
        let r = RunReport::from_items(vec![item("a", Domain::S2, None)], vec![]);
        assert_eq!(r.overall.total, 0);
        assert_eq!(r.per_item.len(), 1);
        assert!(r.to_string().contains("overall"));
    }
}
