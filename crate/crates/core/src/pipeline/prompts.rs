use std::sync::LazyLock;

use regex::Regex;

/// Named, versioned prompt wording. Changing any string means a new set name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptTemplates {
    pub name: &'static str,
    keyword: &'static str,
    caption_prefix: &'static str,
    answer: &'static str,
}

pub const V1: PromptTemplates = PromptTemplates {
    name: "v1",
    keyword: "Extract 2 to 4 keywords from the question below. Each keyword must be 1-2 words. \
              Reply with the keywords only, separated by commas.\nQuestion: {question}",
    caption_prefix: "Provide a detailed caption for the image using keywords: ",
    answer: "Caption: {caption}\n\nBased only on the caption above, answer the question.\nQuestion: {question}\nAnswer concisely.",
};

pub const TEMPLATE_SETS: [PromptTemplates; 1] = [V1];

impl PromptTemplates {
    pub fn by_name(name: &str) -> Option<Self> {
        TEMPLATE_SETS.iter().copied().find(|t| t.name == name)
    }

    pub fn keyword_prompt(&self, question: &str) -> String {
        self.keyword.replace("{question}", question)
    }

    pub fn caption_prompt(&self, keywords: &[String]) -> String {
        format!("{}{}.", self.caption_prefix, keywords.join(", "))
    }

    pub fn answer_prompt(&self, caption: &str, question: &str) -> String {
        // question goes in first, so a caption containing "{question}" stays literal
        self.answer
            .replacen("{question}", question, 1)
            .replacen("{caption}", caption, 1)
    }
}

pub const MAX_KEYWORDS: usize = 4;
const MAX_KEYWORD_WORDS: usize = 2;

static LABEL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^\s*keywords?\s*:").unwrap());
static BULLET: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(?:[-*•]+|\d+[.)])\s*").unwrap());

/// Keywords from a model reply: split on commas, semicolons and newlines,
/// strip list markers and quotes, lowercase, keep the first two words of each,
/// drop duplicates, keep at most four. Empty means nothing usable.
pub fn parse_keywords(reply: &str) -> Vec<String> {
    let body = LABEL.replace(reply, "");
    let mut out: Vec<String> = Vec::new();
    for raw in body.split([',', ';', '\n']) {
        let item = BULLET.replace(raw.trim(), "");
        let cleaned: String = item
            .chars()
            .filter(|c| !matches!(c, '"' | '\'' | '`' | '“' | '”' | '‘' | '’'))
            .collect::<String>()
            .to_lowercase();
        let words: Vec<&str> = cleaned
            .split_whitespace()
            .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
            .filter(|w| !w.is_empty())
            .take(MAX_KEYWORD_WORDS)
            .collect();
        if words.is_empty() {
            continue;
        }
        let kw = words.join(" ");
        if !out.contains(&kw) {
            out.push(kw);
        }
        if out.len() == MAX_KEYWORDS {
            break;
        }
    }
    out
}

const STOPWORDS: &[&str] = &[
    "a", "all", "an", "and", "answer", "are", "as", "at", "be", "by", "can", "do", "does", "for",
    "from", "how", "in", "is", "it", "many", "much", "no", "of", "on", "one", "or", "that", "the",
    "their", "there", "these", "they", "this", "those", "to", "two", "what", "which", "with",
    "yes",
];

/// First two content words of the question, lowercased.
pub fn fallback_keywords(question: &str) -> Vec<String> {
    question
        .split(|c: char| !c.is_alphanumeric())
        .map(str::to_lowercase)
        .filter(|w| !w.is_empty() && !STOPWORDS.contains(&w.as_str()))
        .take(2)
        .collect()
}
