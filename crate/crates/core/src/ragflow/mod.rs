//! Retrieval-augmented assessment: compose the query from the five input
//! fields, rewrite it with the generation model, retrieve AI Act units from
//! the ANN index, prompt for a fenced answer block, then parse, validate and
//! group the cited references.

mod output;
mod pipeline;
mod template;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annindex::AnnError;
use crate::backends::BackendError;
use crate::corpus::{UnitKind, UnitRef};

pub use output::{
    article_numbers, parse_assessment, parse_block, render_block, AnswerBlock, ParsedAssessment,
    BLOCK_TAG,
};
pub use pipeline::{
    build_index, compose_query, render_context, retrieve, rewrite_query, GenerationParams, Pipeline,
    RetrievalSettings, RetrievedUnit, Rewrite, DEFAULT_K,
};
pub use template::{PromptTemplate, Template, ANSWER_FILE, REWRITE_FILE};

#[derive(Debug, Error)]
pub enum RagError {
    #[error("invalid assessment input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("index query failed: {0}")]
    Index(#[from] AnnError),
    #[error("index item {0} is not in the corpus (index and corpus out of sync)")]
    UnknownRef(UnitRef),
    #[error("generation output has no usable answer block: {0}")]
    MalformedOutput(String),
    #[error("unknown risk level {0:?}")]
    UnknownRiskLevel(String),
    #[error("prompt template: {0}")]
    Template(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    #[serde(alias = "provider")]
    Provider,
    #[serde(alias = "deployer")]
    Deployer,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Provider => "Provider",
            Role::Deployer => "Deployer",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = RagError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "provider" => Ok(Role::Provider),
            "deployer" => Ok(Role::Deployer),
            _ => Err(RagError::InvalidInput(format!(
                "role must be Provider or Deployer, got {s:?}"
            ))),
        }
    }
}

/// The five assessment form fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssessmentInput {
    pub role: Role,
    pub domain: String,
    pub system_type: String,
    pub input_data: String,
    pub intended_use: String,
}

impl AssessmentInput {
    pub fn new(
        role: Role,
        domain: impl Into<String>,
        system_type: impl Into<String>,
        input_data: impl Into<String>,
        intended_use: impl Into<String>,
    ) -> Result<Self, RagError> {
        let input = Self {
            role,
            domain: domain.into(),
            system_type: system_type.into(),
            input_data: input_data.into(),
            intended_use: intended_use.into(),
        };
        input.validate()?;
        Ok(input)
    }

    /// The free-text fields with their form labels, in form order.
    pub fn text_fields(&self) -> [(&'static str, &str); 4] {
        [
            ("domain", &self.domain),
            ("system_type", &self.system_type),
            ("input_data", &self.input_data),
            ("intended_use", &self.intended_use),
        ]
    }

    pub fn validate(&self) -> Result<(), RagError> {
        let empty: Vec<&str> = self
            .text_fields()
            .iter()
            .filter(|(_, v)| v.trim().is_empty())
            .map(|(k, _)| *k)
            .collect();
        if empty.is_empty() {
            Ok(())
        } else {
            Err(RagError::InvalidInput(format!("empty field(s): {}", empty.join(", "))))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RiskLevel {
    LowRisk,
    MediumRisk,
    HighRisk,
    Prohibited,
}

impl RiskLevel {
    pub const ALL: [RiskLevel; 4] = [
        RiskLevel::LowRisk,
        RiskLevel::MediumRisk,
        RiskLevel::HighRisk,
        RiskLevel::Prohibited,
    ];

    /// Spelling used in prompts, answer blocks and reports.
    pub fn label(self) -> &'static str {
        match self {
            RiskLevel::LowRisk => "Low-Risk",
            RiskLevel::MediumRisk => "Medium-Risk",
            RiskLevel::HighRisk => "High-Risk",
            RiskLevel::Prohibited => "Prohibited",
        }
    }
}

impl fmt::Display for RiskLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for RiskLevel {
    type Err = RagError;

    /// Accepts "High-Risk", "high risk", "HighRisk", "HIGH" and the like.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(char::is_ascii_alphabetic)
            .collect::<String>()
            .to_ascii_lowercase();
        let key = key.strip_suffix("risk").unwrap_or(&key);
        match key {
            "low" | "minimal" => Ok(RiskLevel::LowRisk),
            "medium" | "limited" => Ok(RiskLevel::MediumRisk),
            "high" => Ok(RiskLevel::HighRisk),
            "prohibited" | "unacceptable" => Ok(RiskLevel::Prohibited),
            _ => Err(RagError::UnknownRiskLevel(s.trim().to_string())),
        }
    }
}

/// The three groups relevant articles fall into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ArticleGroup {
    HorizontalObligation,
    ClassificationResource,
    ScenarioSpecificObligation,
}

impl ArticleGroup {
    pub const ALL: [ArticleGroup; 3] = [
        ArticleGroup::HorizontalObligation,
        ArticleGroup::ClassificationResource,
        ArticleGroup::ScenarioSpecificObligation,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ArticleGroup::HorizontalObligation => "Horizontal obligations",
            ArticleGroup::ClassificationResource => "Classification resources",
            ArticleGroup::ScenarioSpecificObligation => "Scenario-specific obligations",
        }
    }
}

/// Risk management, record-keeping, transparency, human oversight.
pub const HORIZONTAL_ARTICLES: [u32; 4] = [9, 12, 13, 14];
/// Prohibited practices and high-risk classification rules.
pub const CLASSIFICATION_ARTICLES: [u32; 2] = [5, 6];

pub fn article_group(article: u32) -> ArticleGroup {
    if HORIZONTAL_ARTICLES.contains(&article) {
        ArticleGroup::HorizontalObligation
    } else if CLASSIFICATION_ARTICLES.contains(&article) {
        ArticleGroup::ClassificationResource
    } else {
        ArticleGroup::ScenarioSpecificObligation
    }
}

/// Static grouping of every article in `articles`; non-article refs are
/// ignored.
pub fn classify_reference_groups<'a>(
    articles: impl IntoIterator<Item = &'a UnitRef>,
) -> BTreeMap<UnitRef, ArticleGroup> {
    articles
        .into_iter()
        .filter(|r| r.kind() == UnitKind::Article)
        .map(|r| (r.clone(), article_group(r.ordinal())))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentResult {
    pub risk_level: RiskLevel,
    /// Cited articles in the order the model gave them, without duplicates.
    pub articles: Vec<UnitRef>,
    pub recitals: Vec<UnitRef>,
    pub annexes: Vec<UnitRef>,
    pub article_groups: BTreeMap<UnitRef, ArticleGroup>,
    pub retrieved_context: Vec<RetrievedUnit>,
    pub query: String,
    pub rewritten_query: String,
    /// Set when the rewrite came back empty and the raw query was used.
    pub rewrite_fallback: bool,
    pub raw_generation: String,
    pub prompt_version: String,
    /// References the model cited that are not in the corpus.
    pub warnings: Vec<String>,
}

impl AssessmentResult {
    /// Articles of one group, in citation order.
    pub fn articles_in(&self, group: ArticleGroup) -> Vec<&UnitRef> {
        self.articles
            .iter()
            .filter(|r| self.article_groups.get(*r) == Some(&group))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn risk_level_parsing() {
        for level in RiskLevel::ALL {
            assert_eq!(level.label().parse::<RiskLevel>().unwrap(), level);
            assert_eq!(format!("{level:?}").parse::<RiskLevel>().unwrap(), level);
        }
        assert_eq!(" high risk ".parse::<RiskLevel>().unwrap(), RiskLevel::HighRisk);
        assert_eq!("PROHIBITED".parse::<RiskLevel>().unwrap(), RiskLevel::Prohibited);
        assert!(matches!("severe".parse::<RiskLevel>(), Err(RagError::UnknownRiskLevel(_))));
        assert!("".parse::<RiskLevel>().is_err());
    }

    #[test]
    fn groups_for_prohibited_row() {
        let refs: Vec<UnitRef> = [14, 13, 26, 12, 49, 16, 9, 6, 5, 27]
            .into_iter()
            .map(UnitRef::article)
            .collect();
        let groups = classify_reference_groups(&refs);
        assert_eq!(groups.len(), 10);
        for (r, g) in &groups {
            let expected = match r.ordinal() {
                9 | 12 | 13 | 14 => ArticleGroup::HorizontalObligation,
                5 | 6 => ArticleGroup::ClassificationResource,
                _ => ArticleGroup::ScenarioSpecificObligation,
            };
            assert_eq!(*g, expected, "{r}");
        }
        assert!(classify_reference_groups(&[]).is_empty());
        assert_eq!(
            classify_reference_groups(&[UnitRef::article(15)])[&UnitRef::article(15)],
            ArticleGroup::ScenarioSpecificObligation
        );
    }

    #[test]
    fn input_validation() {
        assert!(AssessmentInput::new(Role::Provider, "a", "b", "c", "d").is_ok());
        let err = AssessmentInput::new(Role::Deployer, "a", "  ", "c", "").unwrap_err();
        assert!(err.to_string().contains("system_type, intended_use"));
        let v: AssessmentInput = serde_json::from_value(serde_json::json!({
            "role": "deployer", "domain": "x", "system_type": "y",
            "input_data": "z", "intended_use": "w"
        }))
        .unwrap();
        assert_eq!(v.role, Role::Deployer);
        assert_eq!("Provider".parse::<Role>().unwrap(), Role::Provider);
        assert!("user".parse::<Role>().is_err());
    }

    #[test]
    fn result_group_map_serializes_with_string_keys() {
        let groups = classify_reference_groups(&[UnitRef::article(9), UnitRef::article(42)]);
        let v = serde_json::to_value(&groups).unwrap();
        assert_eq!(v["article:9"], "HorizontalObligation");
        let back: BTreeMap<UnitRef, ArticleGroup> = serde_json::from_value(v).unwrap();
        assert_eq!(back, groups);
    }
}
