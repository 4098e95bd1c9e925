use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;

pub const EXTRACTOR_VERSION: &str = "tiered/1";

fn answer_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i:answer)(?:\s+(?i:is))?\s*[:：]\s*[(\[]?([A-Z]{1,2})\b").expect("valid regex")
    })
}

fn token_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b[A-Z]{1,2}\b").expect("valid regex"))
}

/// Lowercase words that may follow a bare `A` or `I` used as an option letter.
const LETTER_VERBS: &[&str] = &[
    "is", "was", "seems", "looks", "matches", "appears", "corresponds", "has", "and", "or", "because", "since",
];

/// Whether the token at `start..end` reads as an English word rather than a label:
/// `A`/`I` followed by a lowercase word that is not a linking verb, or any
/// token glued to an apostrophe or hyphen.
fn reads_as_word(text: &str, start: usize, end: usize) -> bool {
    let before = text[..start].chars().next_back();
    let rest = &text[end..];
    if matches!(before, Some('-' | '\'' | '’')) || rest.starts_with(['-', '\'', '’']) {
        return true;
    }
    let token = &text[start..end];
    if token != "A" && token != "I" {
        return false;
    }
    let Some(after) = rest.strip_prefix(' ') else {
        return false;
    };
    let word: String = after.chars().take_while(|c| c.is_alphabetic()).collect();
    word.chars().next().is_some_and(|c| c.is_lowercase()) && !LETTER_VERBS.contains(&word.as_str())
}

fn single(found: BTreeSet<String>) -> Tier {
    match found.len() {
        0 => Tier::Nothing,
        1 => Tier::Found(found.into_iter().next().expect("one element")),
        _ => Tier::Ambiguous,
    }
}

enum Tier {
    Nothing,
    Found(String),
    Ambiguous,
}

fn answer_tier(text: &str, labels: &[String]) -> Tier {
    single(
        answer_pattern()
            .captures_iter(text)
            .map(|c| c[1].to_string())
            .filter(|l| labels.contains(l))
            .collect(),
    )
}

fn letter_tier(text: &str, labels: &[String]) -> Tier {
    single(
        token_pattern()
            .find_iter(text)
            .filter(|m| labels.iter().any(|l| l == m.as_str()))
            .filter(|m| !reads_as_word(text, m.start(), m.end()))
            .map(|m| m.as_str().to_string())
            .collect(),
    )
}

fn content_tier(text: &str, labels: &[String], options: &[String]) -> Tier {
    let hay = text.to_lowercase();
    let mut found = BTreeSet::new();
    for (label, content) in labels.iter().zip(options) {
        let needle = content.trim().to_lowercase();
        if needle.is_empty() {
            continue;
        }
        let hit = hay.match_indices(&needle).any(|(i, _)| {
            let before = hay[..i].chars().next_back();
            let after = hay[i + needle.len()..].chars().next();
            !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
        });
        if hit {
            found.insert(label.clone());
        }
    }
    single(found)
}

/// The option letter a free-text response commits to, or `None`.
///
/// Tiers are tried in order and the first tier that finds anything decides:
/// an explicit `Answer: X`, then standalone capital letters that are labels,
/// then option content quoted in the text. More than one distinct letter in the
/// deciding tier yields `None`.
pub fn extract_choice(text: &str, labels: &[String]) -> Option<String> {
    extract_choice_with_options(text, labels, &[])
}

/// As [`extract_choice`], with option contents (aligned with `labels`) enabling the
/// substring tier.
pub fn extract_choice_with_options(text: &str, labels: &[String], options: &[String]) -> Option<String> {
    let text = text.replace(['*', '`'], "");
    for tier in [answer_tier(&text, labels), letter_tier(&text, labels), content_tier(&text, labels, options)] {
        match tier {
            Tier::Found(l) => return Some(l),
            Tier::Ambiguous => return None,
            Tier::Nothing => {}
        }
    }
    None
}
