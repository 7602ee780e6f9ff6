//! Pre-screening questionnaire: checkbox answers in, classification, risk
//! tier, GPAI flag and the proceed/block gate out.
//!
//! The rule engine is a pure function of the answers and the option
//! catalog. Which triggers an exemption can downgrade is catalog data.

mod catalog;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use catalog::{Catalog, CatalogGroup, CatalogOption, GpaiQuestion, GroupId, GroupRole};

#[derive(Debug, Error)]
pub enum PrescreenError {
    #[error("invalid option catalog: {0}")]
    InvalidCatalog(String),
    #[error("invalid answers: {}", format_field_errors(.0))]
    InvalidAnswers(Vec<FieldError>),
}

fn format_field_errors(errors: &[FieldError]) -> String {
    errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldErrorCode {
    UnknownOptionId,
    MalformedPayload,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub code: FieldErrorCode,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Checked options per question group.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrescreenAnswers {
    #[serde(default)]
    pub ai_criteria_checked: BTreeSet<String>,
    #[serde(default)]
    pub prohibited_checked: BTreeSet<String>,
    #[serde(default)]
    pub harmonisation_checked: BTreeSet<String>,
    #[serde(default)]
    pub highrisk_app_checked: BTreeSet<String>,
    #[serde(default)]
    pub exemption_checked: BTreeSet<String>,
    #[serde(default)]
    pub gpai_checked: bool,
}

impl PrescreenAnswers {
    pub fn checked(&self, group: GroupId) -> &BTreeSet<String> {
        match group {
            GroupId::AiCriteria => &self.ai_criteria_checked,
            GroupId::Prohibited => &self.prohibited_checked,
            GroupId::Harmonisation => &self.harmonisation_checked,
            GroupId::HighriskApp => &self.highrisk_app_checked,
            GroupId::Exemption => &self.exemption_checked,
        }
    }

    pub fn checked_mut(&mut self, group: GroupId) -> &mut BTreeSet<String> {
        match group {
            GroupId::AiCriteria => &mut self.ai_criteria_checked,
            GroupId::Prohibited => &mut self.prohibited_checked,
            GroupId::Harmonisation => &mut self.harmonisation_checked,
            GroupId::HighriskApp => &mut self.highrisk_app_checked,
            GroupId::Exemption => &mut self.exemption_checked,
        }
    }

    /// Payload key carrying a group's checked ids.
    pub fn field_name(group: GroupId) -> &'static str {
        match group {
            GroupId::AiCriteria => "ai_criteria_checked",
            GroupId::Prohibited => "prohibited_checked",
            GroupId::Harmonisation => "harmonisation_checked",
            GroupId::HighriskApp => "highrisk_app_checked",
            GroupId::Exemption => "exemption_checked",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Classification {
    #[serde(rename = "AISystemUnderAIAct")]
    AiSystemUnderAiAct,
    #[serde(rename = "NotAISystemUnderAIAct")]
    NotAiSystemUnderAiAct,
}

impl Classification {
    pub fn label(self) -> &'static str {
        match self {
            Classification::AiSystemUnderAiAct => "AI System under the AI Act",
            Classification::NotAiSystemUnderAiAct => "Not an AI system under the AI Act",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PrescreenRisk {
    Prohibited,
    HighRisk,
    NotHighRisk,
}

impl PrescreenRisk {
    pub fn label(self) -> &'static str {
        match self {
            PrescreenRisk::Prohibited => "Prohibited AI system -- can not be deployed",
            PrescreenRisk::HighRisk => "High-Risk -- strict requirements apply",
            PrescreenRisk::NotHighRisk => "Not High-Risk",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GpaiStatus {
    FurtherAssessmentNeeded,
    NotApplicable,
}

impl GpaiStatus {
    pub fn label(self) -> &'static str {
        match self {
            GpaiStatus::FurtherAssessmentNeeded => "Yes -- further assessment needed",
            GpaiStatus::NotApplicable => "No -- not applicable",
        }
    }
}

pub mod rules {
    pub const CRITERIA_COMPLETE: &str = "classification.criteria_complete";
    pub const CRITERIA_INCOMPLETE: &str = "classification.criteria_incomplete";
    pub const PROHIBITED: &str = "risk.prohibited";
    pub const HIGH_RISK_UNEXEMPTIBLE: &str = "risk.high_risk_unexemptible";
    pub const HIGH_RISK: &str = "risk.high_risk";
    pub const EXEMPTED: &str = "risk.exempted";
    pub const GPAI: &str = "gpai.further_assessment";
}

/// A rule that fired, with the options that made it fire. For
/// `classification.criteria_incomplete` the ids are the unchecked criteria.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggeredRule {
    pub rule: String,
    pub option_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrescreenOutcome {
    pub classification: Classification,
    pub risk: PrescreenRisk,
    pub gpai: GpaiStatus,
    pub may_proceed: bool,
    pub triggered_rules: Vec<TriggeredRule>,
}

impl PrescreenOutcome {
    pub fn rule(&self, id: &str) -> Option<&TriggeredRule> {
        self.triggered_rules.iter().find(|r| r.rule == id)
    }

    /// Human-readable explanation, one line per outcome field plus the
    /// options that blocked proceeding.
    pub fn explain(&self) -> String {
        let mut out = format!(
            "Classification: {}\nRisk Level: {}\nGPAI: {}\n",
            self.classification.label(),
            self.risk.label(),
            self.gpai.label()
        );
        if self.may_proceed {
            out.push_str("Pre-screening passed: the assessment may proceed.\n");
        } else {
            out.push_str("Pre-screening blocked the assessment:\n");
            for rule in &self.triggered_rules {
                let blocking = matches!(
                    rule.rule.as_str(),
                    rules::CRITERIA_INCOMPLETE
                        | rules::PROHIBITED
                        | rules::HIGH_RISK
                        | rules::HIGH_RISK_UNEXEMPTIBLE
                );
                if blocking {
                    out.push_str(&format!("  {}: {}\n", rule.rule, rule.option_ids.join(", ")));
                }
            }
        }
        out
    }
}

/// Parse and check a raw answer payload against the catalog. An empty object
/// is valid and yields all-empty answers.
pub fn validate_answers(
    catalog: &Catalog,
    raw: &serde_json::Value,
) -> Result<PrescreenAnswers, PrescreenError> {
    let malformed = |field: &str, message: String| FieldError {
        field: field.to_string(),
        code: FieldErrorCode::MalformedPayload,
        message,
    };
    let Some(object) = raw.as_object() else {
        return Err(PrescreenError::InvalidAnswers(vec![malformed(
            "$",
            "answer payload must be a JSON object".into(),
        )]));
    };

    let mut answers = PrescreenAnswers::default();
    let mut errors = Vec::new();
    for (key, value) in object {
        if key == "gpai_checked" {
            match value {
                serde_json::Value::Bool(b) => answers.gpai_checked = *b,
                serde_json::Value::Null => {}
                _ => errors.push(malformed(key, "expected a boolean".into())),
            }
            continue;
        }
        let Some(group_id) = GroupId::ALL
            .into_iter()
            .find(|g| PrescreenAnswers::field_name(*g) == key)
        else {
            errors.push(malformed(key, "unknown field".into()));
            continue;
        };
        let group = catalog.group(group_id);
        let items = match value {
            serde_json::Value::Array(items) => items,
            serde_json::Value::Null => continue,
            _ => {
                errors.push(malformed(key, "expected a list of option ids".into()));
                continue;
            }
        };
        for (i, item) in items.iter().enumerate() {
            let field = format!("{key}[{i}]");
            match item.as_str() {
                None => errors.push(malformed(&field, "option id must be a string".into())),
                Some(id) if group.option(id).is_none() => errors.push(FieldError {
                    field,
                    code: FieldErrorCode::UnknownOptionId,
                    message: format!("unknown option id {id:?} for {}", group_id.field()),
                }),
                Some(id) => {
                    answers.checked_mut(group_id).insert(id.to_string());
                }
            }
        }
    }
    if errors.is_empty() {
        Ok(answers)
    } else {
        Err(PrescreenError::InvalidAnswers(errors))
    }
}

/// Evaluate answers that already passed [`validate_answers`].
///
/// Risk precedence is Prohibited > HighRisk > NotHighRisk and is computed
/// independently of the classification; GPAI never blocks.
pub fn evaluate(catalog: &Catalog, answers: &PrescreenAnswers) -> PrescreenOutcome {
    let mut fired = Vec::new();
    let mut fire = |rule: &str, ids: Vec<String>| {
        fired.push(TriggeredRule {
            rule: rule.to_string(),
            option_ids: ids,
        })
    };

    let criteria = catalog.group(GroupId::AiCriteria);
    let missing: Vec<String> = criteria
        .options
        .iter()
        .filter(|o| !answers.ai_criteria_checked.contains(&o.id))
        .map(|o| o.id.clone())
        .collect();
    let classification = if missing.is_empty() {
        fire(rules::CRITERIA_COMPLETE, criteria.options.iter().map(|o| o.id.clone()).collect());
        Classification::AiSystemUnderAiAct
    } else {
        fire(rules::CRITERIA_INCOMPLETE, missing);
        Classification::NotAiSystemUnderAiAct
    };

    let prohibited: Vec<String> = answers.prohibited_checked.iter().cloned().collect();
    let is_prohibited = !prohibited.is_empty();
    if is_prohibited {
        fire(rules::PROHIBITED, prohibited);
    }

    let exemptions: Vec<String> = answers.exemption_checked.iter().cloned().collect();
    let mut unexemptible = Vec::new();
    let mut exemptible = Vec::new();
    for group_id in GroupId::ALL {
        let group = catalog.group(group_id);
        if group.role != GroupRole::HighRiskTrigger {
            continue;
        }
        for id in answers.checked(group_id) {
            if group.is_exemptible(id) {
                exemptible.push(id.clone());
            } else {
                unexemptible.push(id.clone());
            }
        }
    }
    let mut high_risk = false;
    if !unexemptible.is_empty() {
        high_risk = true;
        fire(rules::HIGH_RISK_UNEXEMPTIBLE, unexemptible);
    }
    if !exemptible.is_empty() {
        if exemptions.is_empty() {
            high_risk = true;
            fire(rules::HIGH_RISK, exemptible);
        } else {
            let mut ids = exemptible;
            ids.extend(exemptions);
            fire(rules::EXEMPTED, ids);
        }
    }

    let risk = if is_prohibited {
        PrescreenRisk::Prohibited
    } else if high_risk {
        PrescreenRisk::HighRisk
    } else {
        PrescreenRisk::NotHighRisk
    };

    let gpai = if answers.gpai_checked {
        fire(rules::GPAI, vec!["gpai".to_string()]);
        GpaiStatus::FurtherAssessmentNeeded
    } else {
        GpaiStatus::NotApplicable
    };

    PrescreenOutcome {
        classification,
        risk,
        gpai,
        may_proceed: classification == Classification::AiSystemUnderAiAct
            && risk == PrescreenRisk::NotHighRisk,
        triggered_rules: fired,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn all_criteria(c: &Catalog) -> PrescreenAnswers {
        PrescreenAnswers {
            ai_criteria_checked: c
                .group(GroupId::AiCriteria)
                .options
                .iter()
                .map(|o| o.id.clone())
                .collect(),
            ..PrescreenAnswers::default()
        }
    }

    #[test]
    fn only_criteria_checked_may_proceed() {
        let c = Catalog::bundled();
        let out = evaluate(&c, &all_criteria(&c));
        assert_eq!(out.classification, Classification::AiSystemUnderAiAct);
        assert_eq!(out.risk, PrescreenRisk::NotHighRisk);
        assert_eq!(out.gpai, GpaiStatus::NotApplicable);
        assert!(out.may_proceed);
    }

    #[test]
    fn prohibited_blocks_regardless() {
        let c = Catalog::bundled();
        let mut a = all_criteria(&c);
        a.prohibited_checked.insert("prohibited.social_scoring".into());
        a.exemption_checked.insert("exemption.preparatory_task".into());
        let out = evaluate(&c, &a);
        assert_eq!(out.risk, PrescreenRisk::Prohibited);
        assert!(!out.may_proceed);
        assert_eq!(
            out.rule(rules::PROHIBITED).unwrap().option_ids,
            vec!["prohibited.social_scoring"]
        );
        assert!(out.explain().contains("prohibited.social_scoring"));
    }

    #[test]
    fn exemption_downgrades_annex_iii_only() {
        let c = Catalog::bundled();
        let mut a = all_criteria(&c);
        a.highrisk_app_checked.insert("highrisk.education".into());
        a.exemption_checked.insert("exemption.narrow_procedural_task".into());
        let out = evaluate(&c, &a);
        assert_eq!(out.risk, PrescreenRisk::NotHighRisk);
        assert!(out.may_proceed);
        assert!(out.rule(rules::EXEMPTED).is_some());

        let mut b = a.clone();
        b.harmonisation_checked.insert("harmonisation.toys".into());
        assert_eq!(evaluate(&c, &b).risk, PrescreenRisk::HighRisk);

        let mut p = a;
        p.highrisk_app_checked.insert("highrisk.profiling".into());
        let out = evaluate(&c, &p);
        assert_eq!(out.risk, PrescreenRisk::HighRisk);
        assert_eq!(
            out.rule(rules::HIGH_RISK_UNEXEMPTIBLE).unwrap().option_ids,
            vec!["highrisk.profiling"]
        );
    }

    #[test]
    fn incomplete_criteria_never_proceeds() {
        let c = Catalog::bundled();
        let mut a = all_criteria(&c);
        a.ai_criteria_checked.remove("criteria.autonomy");
        let out = evaluate(&c, &a);
        assert_eq!(out.classification, Classification::NotAiSystemUnderAiAct);
        assert!(!out.may_proceed);
        assert_eq!(
            out.rule(rules::CRITERIA_INCOMPLETE).unwrap().option_ids,
            vec!["criteria.autonomy"]
        );
    }

    #[test]
    fn gpai_is_orthogonal() {
        let c = Catalog::bundled();
        let mut a = all_criteria(&c);
        a.gpai_checked = true;
        let out = evaluate(&c, &a);
        assert_eq!(out.gpai, GpaiStatus::FurtherAssessmentNeeded);
        assert!(out.may_proceed);
    }

    #[test]
    fn validate_accepts_catalog_ids_and_empty() {
        let c = Catalog::bundled();
        let a = validate_answers(&c, &json!({"prohibited_checked": ["prohibited.social_scoring"]}))
            .unwrap();
        assert!(a.prohibited_checked.contains("prohibited.social_scoring"));
        assert_eq!(validate_answers(&c, &json!({})).unwrap(), PrescreenAnswers::default());
    }

    #[test]
    fn validate_reports_field_errors() {
        let c = Catalog::bundled();
        let err = validate_answers(
            &c,
            &json!({
                "prohibited_checked": ["prohibited.nonexistent", "criteria.autonomy"],
                "gpai_checked": "yes",
                "colour": [],
            }),
        )
        .unwrap_err();
        let PrescreenError::InvalidAnswers(errors) = err else { panic!() };
        let codes: Vec<_> = errors.iter().map(|e| (e.field.as_str(), e.code)).collect();
        assert!(codes.contains(&("prohibited_checked[0]", FieldErrorCode::UnknownOptionId)));
        // ids from another group do not belong here
        assert!(codes.contains(&("prohibited_checked[1]", FieldErrorCode::UnknownOptionId)));
        assert!(codes.contains(&("gpai_checked", FieldErrorCode::MalformedPayload)));
        assert!(codes.contains(&("colour", FieldErrorCode::MalformedPayload)));
        assert!(validate_answers(&c, &json!([1])).is_err());
        assert!(validate_answers(&c, &json!({"exemption_checked": "x"})).is_err());
    }

    #[test]
    fn outcome_wire_names() {
        let c = Catalog::bundled();
        let v = serde_json::to_value(evaluate(&c, &all_criteria(&c))).unwrap();
        assert_eq!(v["classification"], "AISystemUnderAIAct");
        assert_eq!(v["risk"], "NotHighRisk");
        assert_eq!(v["gpai"], "NotApplicable");
        assert_eq!(v["may_proceed"], true);
    }
}
