use std::fmt;

use serde::{Deserialize, Serialize};

use super::DataError;

/// Classification tier a label set belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "stage1")]
    StageI,
    #[serde(rename = "stage2")]
    StageII,
    #[serde(rename = "stage3")]
    StageIII,
    #[serde(rename = "custom")]
    Custom,
}

impl Stage {
    pub const PIPELINE: [Stage; 3] = [Stage::StageI, Stage::StageII, Stage::StageIII];

    /// Zero-based position in the three-stage pipeline, `None` for custom label sets.
    pub fn index(self) -> Option<usize> {
        match self {
            Stage::StageI => Some(0),
            Stage::StageII => Some(1),
            Stage::StageIII => Some(2),
            Stage::Custom => None,
        }
    }

    /// Short machine name (`stage1`, `stage2`, ...).
    pub fn key(self) -> &'static str {
        match self {
            Stage::StageI => "stage1",
            Stage::StageII => "stage2",
            Stage::StageIII => "stage3",
            Stage::Custom => "custom",
        }
    }

    /// Report label in the `DTC n` style used by the comparison tables.
    pub fn report_label(self) -> &'static str {
        match self {
            Stage::StageI => "DTC 1",
            Stage::StageII => "DTC 2",
            Stage::StageIII => "DTC 3",
            Stage::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        match s.trim().to_ascii_lowercase().as_str() {
            "stage1" | "1" | "i" => Some(Stage::StageI),
            "stage2" | "2" | "ii" => Some(Stage::StageII),
            "stage3" | "3" | "iii" => Some(Stage::StageIII),
            "custom" => Some(Stage::Custom),
            _ => None,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

const STAGE_I: [&str; 2] = ["Benign", "Malicious"];
const STAGE_II: [&str; 4] = ["Tor", "Non-Tor", "VPN", "Non-VPN"];
const STAGE_III: [&str; 8] = [
    "File transfer",
    "Audio stream",
    "P2P",
    "Browsing",
    "Video stream",
    "Chat",
    "Email",
    "VoIP",
];

/// Closed, ordered set of class names. Class indices are positions in `names`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTaxonomy {
    stage: Stage,
    names: Vec<String>,
}

impl ClassTaxonomy {
    pub fn for_stage(stage: Stage) -> Option<Self> {
        let names: &[&str] = match stage {
            Stage::StageI => &STAGE_I,
            Stage::StageII => &STAGE_II,
            Stage::StageIII => &STAGE_III,
            Stage::Custom => return None,
        };
        Some(Self {
            stage,
            names: names.iter().map(|s| s.to_string()).collect(),
        })
    }

    pub fn stage_one() -> Self {
        Self::for_stage(Stage::StageI).unwrap()
    }

    pub fn stage_two() -> Self {
        Self::for_stage(Stage::StageII).unwrap()
    }

    pub fn stage_three() -> Self {
        Self::for_stage(Stage::StageIII).unwrap()
    }

    /// A user-defined label set. Names must be non-empty and unique (case-insensitively).
    pub fn custom<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self, DataError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(DataError::InvalidTaxonomy("no class names".into()));
        }
        for (i, a) in names.iter().enumerate() {
            if names[..i].iter().any(|b| b.eq_ignore_ascii_case(a)) {
                return Err(DataError::InvalidTaxonomy(format!("duplicate class name {a:?}")));
            }
        }
        Ok(Self {
            stage: Stage::Custom,
            names,
        })
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    /// Case-insensitive lookup of a class name.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        let name = name.trim();
        self.names.iter().position(|n| n.eq_ignore_ascii_case(name))
    }

    /// Checks the fixed-size contract of the pipeline stages.
    pub fn validate(&self) -> Result<(), DataError> {
        if let Some(expected) = Self::for_stage(self.stage) {
            if expected.names != self.names {
                return Err(DataError::InvalidTaxonomy(format!(
                    "{} must have classes {:?}",
                    self.stage, expected.names
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_sizes() {
        assert_eq!(ClassTaxonomy::stage_one().len(), 2);
        assert_eq!(ClassTaxonomy::stage_two().len(), 4);
        assert_eq!(ClassTaxonomy::stage_three().len(), 8);
        assert!(ClassTaxonomy::for_stage(Stage::Custom).is_none());
    }

    #[test]
    fn lookup_is_case_insensitive() {
        let t = ClassTaxonomy::stage_two();
        assert_eq!(t.index_of("non-tor"), Some(1));
        assert_eq!(t.index_of(" VPN "), Some(2));
        assert_eq!(t.index_of("torrent"), None);
    }

    #[test]
    fn custom_rejects_duplicates() {
        assert!(ClassTaxonomy::custom(["a", "A"]).is_err());
        assert!(ClassTaxonomy::custom(Vec::<String>::new()).is_err());
        assert_eq!(ClassTaxonomy::custom(["x", "y"]).unwrap().len(), 2);
    }

    #[test]
    fn tampered_stage_taxonomy_fails_validation() {
        let json = r#"{"stage":"stage1","names":["Benign","Bad"]}"#;
        let t: ClassTaxonomy = serde_json::from_str(json).unwrap();
        assert!(t.validate().is_err());
        assert!(ClassTaxonomy::stage_three().validate().is_ok());
    }
}
