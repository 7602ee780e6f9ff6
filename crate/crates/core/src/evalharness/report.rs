//! Evaluation reports: an aligned text table and a JSON-lines record form
//! that parses back to the same report.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{horizontal_coverage, io_err, jaccard, EvalError};
use crate::backends::BackendMode;
use crate::ragflow::{RiskLevel, Role};

pub const REPORT_FILE: &str = "report.txt";
pub const RECORDS_FILE: &str = "report.records";

const EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioOutcome {
    pub name: String,
    pub description: String,
    pub role: Role,
    pub backend: BackendMode,
    pub embedding_model: String,
    pub generation_model: String,
    pub expected_risk: RiskLevel,
    /// `None` when the scenario failed.
    pub predicted_risk: Option<RiskLevel>,
    pub level_match: bool,
    /// Sorted.
    pub expected_articles: Vec<u32>,
    /// In citation order.
    pub predicted_articles: Vec<u32>,
    pub jaccard: f64,
    pub horizontal_coverage: bool,
    pub error: Option<String>,
}

impl ScenarioOutcome {
    pub fn predicted_set(&self) -> BTreeSet<u32> {
        self.predicted_articles.iter().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportHeader {
    gate_bypassed: bool,
    prompt_version: String,
    generated_at: Option<DateTime<Utc>>,
    scenario_count: usize,
    matches: usize,
    accuracy: Option<f64>,
    mean_jaccard: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum Record {
    Header(ReportHeader),
    Scenario(ScenarioOutcome),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Always true: evaluation runs skip the pre-screening gate.
    pub gate_bypassed: bool,
    pub prompt_version: String,
    /// Set for runs that used live backends; replay runs carry no clock.
    pub generated_at: Option<DateTime<Utc>>,
    pub scenarios: Vec<ScenarioOutcome>,
    /// `matches / scenarios`; `None` for an empty run.
    pub accuracy: Option<f64>,
    pub mean_jaccard: Option<f64>,
}

impl EvalReport {
    pub fn new(
        scenarios: Vec<ScenarioOutcome>,
        prompt_version: String,
        generated_at: Option<DateTime<Utc>>,
    ) -> Self {
        let (accuracy, mean_jaccard) = aggregates(&scenarios);
        Self {
            gate_bypassed: true,
            prompt_version,
            generated_at,
            scenarios,
            accuracy,
            mean_jaccard,
        }
    }

    pub fn matches(&self) -> usize {
        self.scenarios.iter().filter(|s| s.level_match).count()
    }

    /// Recomputes every derived field from the raw per-scenario data and
    /// reports the first disagreement.
    pub fn check_consistency(&self) -> Result<(), String> {
        for s in &self.scenarios {
            let predicted = s.predicted_set();
            let expected: BTreeSet<u32> = s.expected_articles.iter().copied().collect();
            if s.level_match != (s.predicted_risk == Some(s.expected_risk)) {
                return Err(format!("{}: level_match disagrees with levels", s.name));
            }
            if s.error.is_none() {
                if (s.jaccard - jaccard(&expected, &predicted)).abs() > EPSILON {
                    return Err(format!("{}: jaccard disagrees with article sets", s.name));
                }
                if s.horizontal_coverage != horizontal_coverage(&predicted) {
                    return Err(format!("{}: horizontal coverage flag is wrong", s.name));
                }
            }
            if !(0.0..=1.0).contains(&s.jaccard) {
                return Err(format!("{}: jaccard out of range", s.name));
            }
        }
        let (accuracy, mean_jaccard) = aggregates(&self.scenarios);
        let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(x), Some(y)) => (x - y).abs() <= EPSILON,
            (None, None) => true,
            _ => false,
        };
        if !close(accuracy, self.accuracy) {
            return Err("accuracy disagrees with scenario outcomes".into());
        }
        if !close(mean_jaccard, self.mean_jaccard) {
            return Err("mean Jaccard disagrees with scenario outcomes".into());
        }
        Ok(())
    }
}

fn aggregates(scenarios: &[ScenarioOutcome]) -> (Option<f64>, Option<f64>) {
    if scenarios.is_empty() {
        return (None, None);
    }
    let n = scenarios.len() as f64;
    let matches = scenarios.iter().filter(|s| s.level_match).count() as f64;
    let jaccard: f64 = scenarios.iter().map(|s| s.jaccard).sum();
    (Some(matches / n), Some(jaccard / n))
}

fn list(values: &[u32]) -> String {
    let items: Vec<String> = values.iter().map(u32::to_string).collect();
    format!("[{}]", items.join(", "))
}

/// Aligned table with the reference columns, followed by a summary.
pub fn render_table(report: &EvalReport) -> String {
    let header = ["Risk-Level", "Scenario", "Predicted", "Articles"];
    let rows: Vec<[String; 4]> = report
        .scenarios
        .iter()
        .map(|s| {
            let predicted = match (&s.predicted_risk, &s.error) {
                (Some(level), _) => level.label().to_string(),
                (None, Some(_)) => "error".to_string(),
                (None, None) => "-".to_string(),
            };
            let scenario = if s.description.is_empty() {
                s.name.clone()
            } else {
                s.description.clone()
            };
            [
                format!("{} ({})", s.expected_risk.label(), s.role),
                scenario,
                predicted,
                list(&s.predicted_articles),
            ]
        })
        .collect();

    let mut widths = header.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: [&str; 4]| -> String {
        let padded: Vec<String> = cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        padded.join(" | ").trim_end().to_string()
    };

    let mut out = String::new();
    out.push_str(&line(header));
    out.push('\n');
    out.push_str(&widths.map(|w| "-".repeat(w)).join("-+-"));
    out.push('\n');
    for row in &rows {
        out.push_str(&line([&row[0], &row[1], &row[2], &row[3]]));
        out.push('\n');
    }
    out.push('\n');
    match (report.accuracy, report.mean_jaccard) {
        (Some(acc), Some(j)) => out.push_str(&format!(
            "accuracy: {}/{} ({acc:.3})  mean Jaccard: {j:.3}\n",
            report.matches(),
            report.scenarios.len()
        )),
        _ => out.push_str("accuracy: n/a  mean Jaccard: n/a\n"),
    }
    for s in report.scenarios.iter().filter(|s| s.error.is_some()) {
        out.push_str(&format!("failed {}: {}\n", s.name, s.error.as_deref().unwrap_or("")));
    }
    if report.gate_bypassed {
        out.push_str("pre-screening gate: bypassed (evaluation mode)\n");
    }
    out.push_str(&format!("prompt version: {}\n", report.prompt_version));
    if let Some(t) = report.generated_at {
        out.push_str(&format!("generated at: {}\n", t.to_rfc3339()));
    }
    out
}

/// JSON lines: one header record, then one record per scenario.
pub fn render_records(report: &EvalReport) -> String {
    let header = Record::Header(ReportHeader {
        gate_bypassed: report.gate_bypassed,
        prompt_version: report.prompt_version.clone(),
        generated_at: report.generated_at,
        scenario_count: report.scenarios.len(),
        matches: report.matches(),
        accuracy: report.accuracy,
        mean_jaccard: report.mean_jaccard,
    });
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for s in &report.scenarios {
        out.push_str(&serde_json::to_string(&Record::Scenario(s.clone())).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_records(text: &str) -> Result<EvalReport, EvalError> {
    let bad = |m: String| EvalError::Records(m);
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let header = match lines.next() {
        Some((_, l)) => match serde_json::from_str::<Record>(l).map_err(|e| bad(format!("line 1: {e}")))? {
            Record::Header(h) => h,
            Record::Scenario(_) => return Err(bad("first record must be the header".into())),
        },
        None => return Err(bad("no records".into())),
    };
    let mut scenarios = Vec::new();
    for (i, line) in lines {
        match serde_json::from_str::<Record>(line).map_err(|e| bad(format!("line {}: {e}", i + 1)))? {
            Record::Scenario(s) => scenarios.push(s),
            Record::Header(_) => return Err(bad(format!("line {}: second header", i + 1))),
        }
    }
    if scenarios.len() != header.scenario_count {
        return Err(bad(format!(
            "header announces {} scenarios, found {}",
            header.scenario_count,
            scenarios.len()
        )));
    }
    let report = EvalReport {
        gate_bypassed: header.gate_bypassed,
        prompt_version: header.prompt_version,
        generated_at: header.generated_at,
        scenarios,
        accuracy: header.accuracy,
        mean_jaccard: header.mean_jaccard,
    };
    report.check_consistency().map_err(bad)?;
    Ok(report)
}

/// Writes `report.txt` and `report.records` into `dir`; returns both paths.
pub fn emit_report(report: &EvalReport, dir: &Path) -> Result<(PathBuf, PathBuf), EvalError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let table = dir.join(REPORT_FILE);
    std::fs::write(&table, render_table(report)).map_err(io_err(&table))?;
    let records = dir.join(RECORDS_FILE);
    std::fs::write(&records, render_records(report)).map_err(io_err(&records))?;
    Ok((table, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(name: &str, expected: RiskLevel, predicted: RiskLevel, articles: &[u32]) -> ScenarioOutcome {
        let expected_articles = vec![9, 12, 13, 14];
        let p: BTreeSet<u32> = articles.iter().copied().collect();
        let e: BTreeSet<u32> = expected_articles.iter().copied().collect();
        ScenarioOutcome {
            name: name.into(),
            description: format!("{name} system"),
            role: Role::Provider,
            backend: BackendMode::Replay,
            embedding_model: "e".into(),
            generation_model: "g".into(),
            expected_risk: expected,
            predicted_risk: Some(predicted),
            level_match: expected == predicted,
            expected_articles,
            predicted_articles: articles.to_vec(),
            jaccard: jaccard(&e, &p),
            horizontal_coverage: horizontal_coverage(&p),
            error: None,
        }
    }

    fn sample() -> EvalReport {
        EvalReport::new(
            vec![
                outcome("a", RiskLevel::HighRisk, RiskLevel::HighRisk, &[14, 13, 12, 9]),
                outcome("b", RiskLevel::LowRisk, RiskLevel::MediumRisk, &[13, 50, 9]),
                outcome("c", RiskLevel::Prohibited, RiskLevel::Prohibited, &[5, 9, 12, 13, 14, 6, 27]),
            ],
            "v1".into(),
            None,
        )
    }

    #[test]
    fn aggregates_and_consistency() {
        let r = sample();
        assert_eq!(r.matches(), 2);
        assert!((r.accuracy.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        r.check_consistency().unwrap();
        let mut broken = r.clone();
        broken.accuracy = Some(1.0);
        assert!(broken.check_consistency().is_err());
        let mut broken = r;
        broken.scenarios[1].jaccard = 0.9;
        assert!(broken.check_consistency().is_err());
    }

    #[test]
    fn records_round_trip() {
        let r = sample();
        assert_eq!(parse_records(&render_records(&r)).unwrap(), r);
        let empty = EvalReport::new(vec![], "v1".into(), Some(Utc::now()));
        assert_eq!(parse_records(&render_records(&empty)).unwrap(), empty);
        assert!(parse_records("").is_err());
        let text = render_records(&r);
        let truncated: Vec<&str> = text.lines().take(2).collect();
        assert!(parse_records(&truncated.join("\n")).is_err());
    }

    #[test]
    fn table_layout() {
        let table = render_table(&sample());
        let first = table.lines().next().unwrap();
        assert!(first.starts_with("Risk-Level"));
        for col in ["Scenario", "Predicted", "Articles"] {
            assert!(first.contains(col));
        }
        assert!(table.contains("High-Risk (Provider)"));
        assert!(table.contains("[14, 13, 12, 9]"));
        assert!(table.contains("pre-screening gate: bypassed"));
        // column separators line up
        let bars: Vec<Vec<usize>> = table
            .lines()
            .take(5)
            .filter(|l| !l.starts_with('-'))
            .map(|l| l.match_indices(" | ").map(|(i, _)| i).collect())
            .collect();
        assert!(bars.windows(2).all(|w| w[0] == w[1]));

        let empty = render_table(&EvalReport::new(vec![], "v1".into(), None));
        let table_lines: Vec<&str> = empty.lines().take_while(|l| !l.is_empty()).collect();
        assert_eq!(table_lines.len(), 2);
        assert!(empty.contains("accuracy: n/a"));
    }
}
