use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PrescreenError;
use crate::corpus::{Corpus, UnitRef};

const BUNDLED: &str = include_str!("../../assets/prescreen_catalog.toml");

/// The five checkbox groups of the questionnaire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupId {
    AiCriteria,
    Prohibited,
    Harmonisation,
    HighriskApp,
    Exemption,
}

impl GroupId {
    pub const ALL: [GroupId; 5] = [
        GroupId::AiCriteria,
        GroupId::Prohibited,
        GroupId::Harmonisation,
        GroupId::HighriskApp,
        GroupId::Exemption,
    ];

    /// Field name used in answer payloads.
    pub fn field(self) -> &'static str {
        match self {
            GroupId::AiCriteria => "ai_criteria",
            GroupId::Prohibited => "prohibited",
            GroupId::Harmonisation => "harmonisation",
            GroupId::HighriskApp => "highrisk_app",
            GroupId::Exemption => "exemption",
        }
    }

    pub fn from_field(field: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.field() == field)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupRole {
    Definition,
    Prohibition,
    HighRiskTrigger,
    Exemption,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogOption {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub cites: Vec<UnitRef>,
    /// Overrides the group's `exemptible` flag for this option.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exemptible: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogGroup {
    pub id: GroupId,
    pub role: GroupRole,
    pub question: String,
    #[serde(default)]
    pub cites: Vec<UnitRef>,
    #[serde(default)]
    pub exemptible: bool,
    pub options: Vec<CatalogOption>,
}

impl CatalogGroup {
    pub fn option(&self, id: &str) -> Option<&CatalogOption> {
        self.options.iter().find(|o| o.id == id)
    }

    /// Whether a checked exemption downgrades this option's high-risk trigger.
    pub fn is_exemptible(&self, option_id: &str) -> bool {
        self.option(option_id)
            .and_then(|o| o.exemptible)
            .unwrap_or(self.exemptible)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpaiQuestion {
    pub question: String,
    pub text: String,
    #[serde(default)]
    pub cites: Vec<UnitRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Catalog {
    pub version: String,
    pub gpai: GpaiQuestion,
    pub groups: Vec<CatalogGroup>,
}

impl Catalog {
    /// Catalog shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_toml(BUNDLED).expect("bundled catalog is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self, PrescreenError> {
        let catalog: Catalog =
            toml::from_str(text).map_err(|e| PrescreenError::InvalidCatalog(e.to_string()))?;
        catalog.check()?;
        Ok(catalog)
    }

    pub fn load(path: &Path) -> Result<Self, PrescreenError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PrescreenError::InvalidCatalog(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    fn check(&self) -> Result<(), PrescreenError> {
        let invalid = |m: String| Err(PrescreenError::InvalidCatalog(m));
        let mut seen_groups = HashSet::new();
        let mut seen_options = HashSet::new();
        for group in &self.groups {
            if !seen_groups.insert(group.id) {
                return invalid(format!("group {} listed twice", group.id.field()));
            }
            let expected = match group.id {
                GroupId::AiCriteria => GroupRole::Definition,
                GroupId::Prohibited => GroupRole::Prohibition,
                GroupId::Harmonisation | GroupId::HighriskApp => GroupRole::HighRiskTrigger,
                GroupId::Exemption => GroupRole::Exemption,
            };
            if group.role != expected {
                return invalid(format!("group {} must have role {expected:?}", group.id.field()));
            }
            if group.options.is_empty() {
                return invalid(format!("group {} has no options", group.id.field()));
            }
            for option in &group.options {
                if !seen_options.insert(option.id.as_str()) {
                    return invalid(format!("option id {} listed twice", option.id));
                }
            }
        }
        if let Some(missing) = GroupId::ALL.iter().find(|g| !seen_groups.contains(*g)) {
            return invalid(format!("group {} is missing", missing.field()));
        }
        Ok(())
    }

    pub fn group(&self, id: GroupId) -> &CatalogGroup {
        self.groups
            .iter()
            .find(|g| g.id == id)
            .expect("catalog has every group (checked on load)")
    }

    /// Citations that do not resolve in `corpus`, keyed by option or group id.
    pub fn dangling_citations(&self, corpus: &Corpus) -> BTreeMap<String, Vec<UnitRef>> {
        let mut out: BTreeMap<String, Vec<UnitRef>> = BTreeMap::new();
        let mut check = |owner: &str, cites: &[UnitRef]| {
            for c in cites {
                if !corpus.contains(c) {
                    out.entry(owner.to_string()).or_default().push(c.clone());
                }
            }
        };
        check("gpai", &self.gpai.cites);
        for group in &self.groups {
            check(group.id.field(), &group.cites);
            for option in &group.options {
                check(&option.id, &option.cites);
            }
        }
        out
    }
}
