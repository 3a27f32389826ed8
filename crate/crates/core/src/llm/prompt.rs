//! Prompt construction. Templates are plain text with `<name>` placeholders:
//!
//! | placeholder      | replaced by                                  |
//! |------------------|----------------------------------------------|
//! | `<code>`         | canonical printing of the selected block     |
//! | `<projectname>`  | project name                                 |
//! | `<language>`     | language name, e.g. `MiniLang`               |
//! | `<languagetag>`  | fence label the model is asked to use        |
//! | `<variants>`     | number of variants requested                 |
//! | `<example>`      | the example-change section                   |
//!
//! Substitution is a single left-to-right pass, so placeholder-like text
//! inside the substituted values (`i <code> j` in a comparison, say) is left
//! alone. Anything else in angle brackets is copied through.

use std::io;
use std::path::Path;

use crate::family::PromptCategory;

pub const SIMPLE_TEMPLATE: &str = include_str!("../../prompts/simple.txt");
pub const MEDIUM_TEMPLATE: &str = include_str!("../../prompts/medium.txt");
pub const DETAILED_TEMPLATE: &str = include_str!("../../prompts/detailed.txt");
pub const EXAMPLE_CHANGE: &str = include_str!("../../prompts/example_change.txt");

pub const DEFAULT_LANGUAGE: &str = "MiniLang";
pub const DEFAULT_LANGUAGE_TAG: &str = "minilang";
pub const DEFAULT_VARIANTS: usize = 5;

const PLACEHOLDERS: [&str; 6] = [
    "<code>",
    "<projectname>",
    "<languagetag>",
    "<language>",
    "<variants>",
    "<example>",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub category: PromptCategory,
    pub project_name: String,
    pub language: String,
    pub language_tag: String,
    pub variants: usize,
    /// Only read by the detailed template.
    pub example_change: String,
    /// Template text; defaults to the shipped file for `category`.
    pub text: String,
}

impl PromptTemplate {
    pub fn new(category: PromptCategory, project_name: impl Into<String>) -> Self {
        PromptTemplate {
            category,
            project_name: project_name.into(),
            language: DEFAULT_LANGUAGE.into(),
            language_tag: DEFAULT_LANGUAGE_TAG.into(),
            variants: DEFAULT_VARIANTS,
            example_change: strip_newline(EXAMPLE_CHANGE).into(),
            text: strip_newline(default_text(category)).into(),
        }
    }

    pub fn with_language(mut self, language: impl Into<String>, tag: impl Into<String>) -> Self {
        self.language = language.into();
        self.language_tag = tag.into();
        self
    }

    /// Loads `<category>.txt` (and `example_change.txt` if present) from
    /// `dir`, keeping the shipped text for any file that is missing.
    pub fn load_overrides(mut self, dir: &Path) -> io::Result<Self> {
        let read = |name: &str| -> io::Result<Option<String>> {
            match std::fs::read_to_string(dir.join(name)) {
                Ok(s) => Ok(Some(strip_newline(&s).to_string())),
                Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
                Err(e) => Err(e),
            }
        };
        if let Some(text) = read(&format!("{}.txt", self.category))? {
            self.text = text;
        }
        if let Some(example) = read("example_change.txt")? {
            self.example_change = example;
        }
        Ok(self)
    }
}

fn default_text(category: PromptCategory) -> &'static str {
    match category {
        PromptCategory::Simple => SIMPLE_TEMPLATE,
        PromptCategory::Medium => MEDIUM_TEMPLATE,
        PromptCategory::Detailed => DETAILED_TEMPLATE,
    }
}

fn strip_newline(s: &str) -> &str {
    s.strip_suffix('\n').unwrap_or(s)
}

pub fn build_prompt(t: &PromptTemplate, code: &str) -> String {
    let variants = t.variants.to_string();
    let value = |p: &str| -> &str {
        match p {
            "<code>" => code,
            "<projectname>" => &t.project_name,
            "<languagetag>" => &t.language_tag,
            "<language>" => &t.language,
            "<variants>" => &variants,
            "<example>" => &t.example_change,
            _ => unreachable!(),
        }
    };
    let mut out = String::with_capacity(t.text.len() + code.len());
    let mut rest = t.text.as_str();
    while let Some(i) = rest.find('<') {
        out.push_str(&rest[..i]);
        rest = &rest[i..];
        match PLACEHOLDERS.iter().find(|p| rest.starts_with(**p)) {
            Some(p) => {
                out.push_str(value(p));
                rest = &rest[p.len()..];
            }
            None => {
                out.push('<');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placeholders_inside_values_are_not_expanded() {
        let t = PromptTemplate::new(PromptCategory::Medium, "<code>");
        let p = build_prompt(&t, "{ if (a <projectname> b) { } }");
        assert!(p.contains("{ if (a <projectname> b) { } }"));
        assert!(p.contains("project <code>."));
    }

    #[test]
    fn unknown_angle_text_is_copied() {
        let mut t = PromptTemplate::new(PromptCategory::Simple, "p");
        t.text = "a < b <x> <code>".into();
        assert_eq!(build_prompt(&t, "c"), "a < b <x> c");
    }

    #[test]
    fn overrides_fall_back_per_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("simple.txt"), "Rewrite: <code>\n").unwrap();
        let simple = PromptTemplate::new(PromptCategory::Simple, "p")
            .load_overrides(dir.path())
            .unwrap();
        assert_eq!(build_prompt(&simple, "{}"), "Rewrite: {}");
        let medium = PromptTemplate::new(PromptCategory::Medium, "p")
            .load_overrides(dir.path())
            .unwrap();
        assert_eq!(medium.text, strip_newline(MEDIUM_TEMPLATE));
    }
}
