//! Sample-count summary of a finished run.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use augforge_core::corpus::AnswerCategory;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::Result;
use crate::formats::{read_json, write_json, write_text};
use crate::records::{ComposeSummary, DatasetHeader};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySplit {
    pub original: usize,
    pub augmented: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub original_samples: usize,
    pub augmented_samples: usize,
    pub total_samples: usize,
    pub empty_augmentation: bool,
    /// Keyed by answer category; every row sums across to `total`.
    pub per_category: BTreeMap<String, CategorySplit>,
    pub per_origin: BTreeMap<String, usize>,
    pub per_mode: BTreeMap<String, usize>,
    pub yesno_groups: usize,
    pub yesno_fraction: f64,
    pub pruned_questions: usize,
    pub prune_fraction: f64,
    pub alpha_percent: f64,
    pub delta_percent: f64,
    pub mode: String,
    pub seed: u64,
    pub vocab_size: usize,
}

impl StatsReport {
    pub fn new(compose: &ComposeSummary, header: &DatasetHeader) -> Self {
        let mut per_category = BTreeMap::new();
        for c in AnswerCategory::ALL {
            let key = c.as_str().to_string();
            let original = compose.original_per_category.get(&key).copied().unwrap_or(0);
            let augmented = header.counts.answer_category.get(&key).copied().unwrap_or(0);
            per_category.insert(key, CategorySplit { original, augmented, total: original + augmented });
        }
        Self {
            original_samples: compose.original_questions,
            augmented_samples: header.samples,
            total_samples: compose.original_questions + header.samples,
            empty_augmentation: header.samples == 0,
            per_category,
            per_origin: header.counts.origin.clone(),
            per_mode: header.counts.mode.clone(),
            yesno_groups: compose.yesno_groups,
            yesno_fraction: compose.yesno_fraction,
            pruned_questions: compose.pruned_questions,
            prune_fraction: compose.prune_fraction,
            alpha_percent: header.alpha_percent,
            delta_percent: header.delta_percent,
            mode: header.mode.clone(),
            seed: header.seed,
            vocab_size: header.vocab_size,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "samples      original {:>10}  augmented {:>10}  total {:>10}",
            self.original_samples, self.augmented_samples, self.total_samples
        );
        if self.empty_augmentation {
            let _ = writeln!(s, "WARNING      empty augmentation: no pairs were emitted");
        }
        let _ = writeln!(
            s,
            "settings     alpha {}%  delta {}%  mode {}  seed {}",
            self.alpha_percent, self.delta_percent, self.mode, self.seed
        );
        let _ = writeln!(s, "yes/no       groups {}  fraction {:.4}", self.yesno_groups, self.yesno_fraction);
        let _ = writeln!(s, "pruned       {} questions ({:.4})", self.pruned_questions, self.prune_fraction);
        let _ = writeln!(s, "vocabulary   {}", self.vocab_size);
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<10} {:>10} {:>10} {:>10}", "category", "original", "augmented", "total");
        for (c, v) in &self.per_category {
            let _ = writeln!(s, "{:<10} {:>10} {:>10} {:>10}", c, v.original, v.augmented, v.total);
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<20} {:>10}", "origin", "samples");
        for (o, n) in &self.per_origin {
            let _ = writeln!(s, "{:<20} {:>10}", o, n);
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<20} {:>10}", "label mode", "samples");
        for (m, n) in &self.per_mode {
            let _ = writeln!(s, "{:<20} {:>10}", m, n);
        }
        s
    }
}

/// `stats` stage: reads the compose summary and dataset header.
pub fn stats(cfg: &RunConfig) -> Result<StatsReport> {
    let layout = cfg.layout();
    let compose: ComposeSummary = read_json(&layout.compose_summary())?;
    let header: DatasetHeader = read_json(&layout.header())?;
    let report = StatsReport::new(&compose, &header);
    write_json(&layout.stats_json(), &report)?;
    write_text(&layout.stats_txt(), &report.to_text())?;
    if report.empty_augmentation {
        log::warn!("empty augmentation");
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::Counts;

    fn header(samples: usize, per_cat: &[(&str, usize)]) -> DatasetHeader {
        DatasetHeader {
            engine_version: "0".into(),
            config_digest: String::new(),
            seed: 0,
            alpha_percent: 10.0,
            delta_percent: 100.0,
            mode: "extra".into(),
            samples,
            question_id_offset: 0,
            vocab_size: 3,
            teachers: BTreeMap::new(),
            counts: Counts {
                origin: [("composed".to_string(), samples)].into_iter().collect(),
                answer_category: per_cat.iter().map(|(c, n)| (c.to_string(), *n)).collect(),
                mode: BTreeMap::new(),
                rule: BTreeMap::new(),
            },
        }
    }

    #[test]
    fn totals_and_category_split() {
        let compose = ComposeSummary {
            original_questions: 438,
            original_per_category: [
                ("yes/no".to_string(), 184),
                ("number".to_string(), 50),
                ("other".to_string(), 204),
            ]
            .into_iter()
            .collect(),
            ..Default::default()
        };
        let r = StatsReport::new(&compose, &header(4088, &[("yes/no", 1000), ("number", 88), ("other", 3000)]));
        assert_eq!(r.total_samples, 4526);
        assert!(!r.empty_augmentation);
        assert_eq!(r.per_category.values().map(|c| c.total).sum::<usize>(), r.total_samples);
        assert_eq!(r.per_category["other"].total, 3204);
    }

    #[test]
    fn empty_augmentation_flag() {
        let compose = ComposeSummary { original_questions: 5, ..Default::default() };
        let r = StatsReport::new(&compose, &header(0, &[]));
        assert!(r.empty_augmentation);
        assert!(r.to_text().contains("empty augmentation"));
    }
}
