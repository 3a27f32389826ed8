use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// How much context the LLM prompt carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PromptCategory {
    Simple,
    Medium,
    Detailed,
}

impl PromptCategory {
    pub const ALL: [PromptCategory; 3] = [Self::Simple, Self::Medium, Self::Detailed];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptCategory::Simple => "simple",
            PromptCategory::Medium => "medium",
            PromptCategory::Detailed => "detailed",
        }
    }
}

impl fmt::Display for PromptCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "simple" => Ok(Self::Simple),
            "medium" => Ok(Self::Medium),
            "detailed" => Ok(Self::Detailed),
            _ => Err(format!("unknown prompt category `{s}`")),
        }
    }
}

/// The distribution an edit is drawn from. Order is the row order of the
/// report tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OperatorFamily {
    /// Delete, copy, replace and swap, drawn uniformly.
    Statement,
    /// Insert `break`, `continue` or `return`, drawn uniformly.
    Insert,
    Llm(PromptCategory),
}

impl OperatorFamily {
    pub const ALL: [OperatorFamily; 5] = [
        Self::Statement,
        Self::Insert,
        Self::Llm(PromptCategory::Simple),
        Self::Llm(PromptCategory::Medium),
        Self::Llm(PromptCategory::Detailed),
    ];

    /// Row label used in report tables and run logs.
    pub fn label(self) -> &'static str {
        match self {
            OperatorFamily::Statement => "Statement",
            OperatorFamily::Insert => "Insert",
            OperatorFamily::Llm(PromptCategory::Simple) => "Simple",
            OperatorFamily::Llm(PromptCategory::Medium) => "Medium",
            OperatorFamily::Llm(PromptCategory::Detailed) => "Detailed",
        }
    }

    pub fn is_llm(self) -> bool {
        matches!(self, OperatorFamily::Llm(_))
    }

    /// Stable small integer used when deriving per-family seeds.
    pub fn tag(self) -> u64 {
        Self::ALL.iter().position(|f| *f == self).unwrap() as u64
    }
}

impl fmt::Display for OperatorFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for OperatorFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "statement" => Ok(Self::Statement),
            "insert" => Ok(Self::Insert),
            other => other
                .parse::<PromptCategory>()
                .map(Self::Llm)
                .map_err(|_| format!("unknown operator family `{s}`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip() {
        for f in OperatorFamily::ALL {
            assert_eq!(f.label().parse::<OperatorFamily>().unwrap(), f);
        }
        assert!("crossover".parse::<OperatorFamily>().is_err());
    }
}
