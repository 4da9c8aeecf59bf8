//! Comparison tables from run records.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use sbrtune::evaluation::MetricsReport;
use sbrtune::filters::FilterName;
use sbrtune::learners::LearnerKind;

use crate::config::Mode;
use crate::run::RunRecord;
use crate::CliError;

pub fn load_record(path: &Path) -> Result<RunRecord, CliError> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Which test metrics a table shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Metric {
    #[default]
    Single,
    Median10,
}

type RowKey = (String, FilterName, LearnerKind);

/// One row per (project, filter, learner), one "pd / pf" column per mode.
/// The cell with the highest pd of each (project, filter) dataset carries
/// a trailing `*`.
pub fn render_table(records: &[RunRecord], metric: Metric) -> String {
    let mut cells: BTreeMap<RowKey, BTreeMap<Mode, MetricsReport>> = BTreeMap::new();
    for rec in records {
        for d in &rec.datasets {
            for l in &d.learners {
                let m = match metric {
                    Metric::Single => l.test_single,
                    Metric::Median10 => l.test_median10,
                };
                cells
                    .entry((d.project.clone(), d.filter, l.learner))
                    .or_default()
                    .insert(l.mode, m);
            }
        }
    }
    let modes: Vec<Mode> = Mode::ALL
        .into_iter()
        .filter(|m| cells.values().any(|row| row.contains_key(m)))
        .collect();

    let mut best: BTreeMap<(String, FilterName), f64> = BTreeMap::new();
    for ((project, filter, _), row) in &cells {
        for m in row.values() {
            let e = best.entry((project.clone(), *filter)).or_insert(f64::NEG_INFINITY);
            *e = e.max(m.pd);
        }
    }

    let mut table: Vec<Vec<String>> = vec![["project", "filter", "learner"]
        .iter()
        .map(|s| s.to_string())
        .chain(modes.iter().map(|m| m.to_string()))
        .collect()];
    for ((project, filter, learner), row) in &cells {
        let top = best[&(project.clone(), *filter)];
        let mut line = vec![project.clone(), filter.to_string(), learner.to_string()];
        for mode in &modes {
            line.push(match row.get(mode) {
                Some(m) if m.pd == top => format!("{}*", m.pd_pf_display()),
                Some(m) => m.pd_pf_display(),
                None => "-".into(),
            });
        }
        table.push(line);
    }

    let widths: Vec<usize> = (0..table[0].len())
        .map(|c| table.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in table.iter().enumerate() {
        let cols: Vec<String> = row.iter().zip(&widths).map(|(v, w)| format!("{v:<w$}")).collect();
        writeln!(out, "{}", cols.join("  ").trim_end()).unwrap();
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            writeln!(out, "{}", rule.join("  ")).unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use crate::run::{DatasetRecord, LearnerRecord};
    use sbrtune::dataset::ClassSummary;
    use sbrtune::learners::LearnerParams;

    fn record(mode: Mode, cells: &[(FilterName, LearnerKind, f64, f64)]) -> RunRecord {
        let config = ExperimentConfig::from_toml_str(
            "project = \"chromium\"\nseed = 0\nmode = \"default\"\n[data]\ntrain = \"a\"\ntest = \"b\"\n",
        )
        .unwrap();
        let summary = ClassSummary { n_total: 1, n_sbr: 0, sbr_pct: 0.0 };
        let mut datasets: Vec<DatasetRecord> = Vec::new();
        for &(filter, learner, pd, pf) in cells {
            let m = MetricsReport { pd, pf, ..MetricsReport::default() };
            let l = LearnerRecord {
                learner,
                mode,
                params: LearnerParams::untuned(learner),
                cv_median_g: 0.0,
                test_single: m,
                test_median10: m,
                tuning_minutes: 0.0,
                de: None,
                smote: None,
                smotuned: None,
            };
            match datasets.iter_mut().find(|d| d.filter == filter) {
                Some(d) => d.learners.push(l),
                None => datasets.push(DatasetRecord {
                    project: "chromium".into(),
                    filter,
                    train_summary: summary,
                    test_summary: summary,
                    learners: vec![l],
                    winner: learner,
                }),
            }
        }
        RunRecord {
            tool_version: "0".into(),
            seed: 0,
            config_hash: config.hash(),
            config,
            datasets,
            failures: vec![],
            wall_minutes: 0.0,
        }
    }

    #[test]
    fn one_record_one_row() {
        let t = render_table(
            &[record(Mode::Default, &[(FilterName::Train, LearnerKind::LogisticRegression, 0.157, 0.002)])],
            Metric::Single,
        );
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[2].ends_with("15.7 / 0.2*"), "{t}");
    }

    #[test]
    fn highlights_max_pd_per_dataset_across_modes() {
        let nb = LearnerKind::NaiveBayes;
        let rf = LearnerKind::RandomForest;
        let a = record(Mode::Default, &[(FilterName::Train, nb, 0.2, 0.1), (FilterName::Train, rf, 0.3, 0.1), (FilterName::Clni, nb, 0.9, 0.5)]);
        let b = record(Mode::Smote, &[(FilterName::Train, nb, 0.6, 0.2), (FilterName::Clni, nb, 0.4, 0.1)]);
        let t = render_table(&[a, b], Metric::Single);
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[0].contains("default") && lines[0].contains("smote"));
        assert_eq!(lines.len(), 5);
        assert_eq!(t.matches('*').count(), 2, "{t}");
        let train_nb = lines.iter().find(|l| l.contains("train") && l.contains("NB")).unwrap();
        assert!(train_nb.contains("20.0 / 10.0 ") && train_nb.ends_with("60.0 / 20.0*"));
        let train_rf = lines.iter().find(|l| l.contains("train") && l.contains("RF")).unwrap();
        assert!(train_rf.ends_with('-'));
        let clni = lines.iter().find(|l| l.contains("clni")).unwrap();
        assert!(clni.contains("90.0 / 50.0*"));
    }
}
