use std::collections::BTreeMap;
use std::path::Path;

use super::{Fields, PromptError};

/// Every template the forge renders, by file stem.
pub const TEMPLATE_NAMES: [&str; 16] = [
    "system",
    "profile",
    "history",
    "no_history",
    "top1_background",
    "request",
    "topk",
    "rating",
    "preference_summary",
    "explanation",
    "detail",
    "crossdomain",
    "coldstart",
    "classify",
    "consistency",
    "chitchat",
];

macro_rules! builtin {
    ($($name:literal),* $(,)?) => {
        [$(($name, include_str!(concat!("../../templates/", $name, ".txt")))),*]
    };
}

const BUILTIN: [(&str, &str); 16] = builtin!(
    "system",
    "profile",
    "history",
    "no_history",
    "top1_background",
    "request",
    "topk",
    "rating",
    "preference_summary",
    "explanation",
    "detail",
    "crossdomain",
    "coldstart",
    "classify",
    "consistency",
    "chitchat",
);

/// The template texts in use.
#[derive(Debug, Clone, PartialEq)]
pub struct Templates {
    texts: BTreeMap<String, String>,
}

impl Default for Templates {
    fn default() -> Self {
        Self { texts: BUILTIN.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect() }
    }
}

impl Templates {
    /// The built-in set with any `<name>.txt` found in `dir` swapped in.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, PromptError> {
        let dir = dir.as_ref();
        let mut t = Self::default();
        for name in TEMPLATE_NAMES {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                let text =
                    std::fs::read_to_string(&path).map_err(|e| PromptError::Io { path: path.display().to_string(), msg: e.to_string() })?;
                t.texts.insert(name.to_string(), text);
            }
        }
        Ok(t)
    }

    pub fn set(&mut self, name: &str, text: impl Into<String>) -> Result<(), PromptError> {
        if !TEMPLATE_NAMES.contains(&name) {
            return Err(PromptError::UnknownTemplate(name.to_string()));
        }
        self.texts.insert(name.to_string(), text.into());
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.texts.get(name).map(String::as_str)
    }

    /// Substitutes every `{{field}}`, then trims the result and squeezes
    /// runs of blank lines left by empty blocks down to one.
    pub fn render(&self, name: &str, fields: &Fields<'_>) -> Result<String, PromptError> {
        let text = self.get(name).ok_or_else(|| PromptError::UnknownTemplate(name.to_string()))?;
        let mut out = String::with_capacity(text.len() + 256);
        let mut rest = text;
        while let Some(start) = rest.find("{{") {
            out.push_str(&rest[..start]);
            let after = &rest[start + 2..];
            let end = after.find("}}").ok_or_else(|| PromptError::Unterminated { template: name.to_string() })?;
            let field = after[..end].trim();
            let value =
                fields.get(field).ok_or_else(|| PromptError::MissingField { template: name.to_string(), field: field.to_string() })?;
            out.push_str(value);
            rest = &after[end + 2..];
        }
        out.push_str(rest);
        Ok(squeeze_blank_lines(out.trim()))
    }
}

fn squeeze_blank_lines(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut blank_run = 0;
    for line in s.lines() {
        if line.trim().is_empty() {
            blank_run += 1;
            if blank_run > 1 {
                continue;
            }
        } else {
            blank_run = 0;
        }
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(line.trim_end());
    }
    out
}
