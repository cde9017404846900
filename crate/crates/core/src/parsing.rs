//! Turns free-text model replies into typed answers.
//!
//! Counts take the last numeric mention, yes/no the first commitment, letters
//! and grid sizes go through a fixed priority list. Every parser is total.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::tasks::{AnswerShape, AnswerValue, TaskError, TaskId};

/// Stamped into run metadata so scores can be traced to the rules that produced them.
pub const PARSER_VERSION: &str = "parse-v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ParseOutcome {
    Parsed { answer: AnswerValue },
    NoAnswerFound { reason: String },
    Ambiguous { candidates: Vec<AnswerValue> },
}

impl ParseOutcome {
    pub fn answer(&self) -> Option<AnswerValue> {
        match self {
            ParseOutcome::Parsed { answer } => Some(*answer),
            _ => None,
        }
    }

    pub fn is_failure(&self) -> bool {
        !matches!(self, ParseOutcome::Parsed { .. })
    }

    fn none(reason: &str) -> Self {
        ParseOutcome::NoAnswerFound {
            reason: reason.into(),
        }
    }
}

impl From<AnswerValue> for ParseOutcome {
    fn from(answer: AnswerValue) -> Self {
        ParseOutcome::Parsed { answer }
    }
}

const NUMBER_WORDS: [&str; 21] = [
    "zero",
    "one",
    "two",
    "three",
    "four",
    "five",
    "six",
    "seven",
    "eight",
    "nine",
    "ten",
    "eleven",
    "twelve",
    "thirteen",
    "fourteen",
    "fifteen",
    "sixteen",
    "seventeen",
    "eighteen",
    "nineteen",
    "twenty",
];

/// Value of a digit string or number word in 0..=20.
fn number(token: &str) -> Option<u32> {
    if !token.is_empty() && token.bytes().all(|b| b.is_ascii_digit()) {
        return token
            .parse::<u32>()
            .ok()
            .filter(|n| *n <= AnswerValue::MAX_COUNT);
    }
    NUMBER_WORDS
        .iter()
        .position(|w| *w == token)
        .map(|n| n as u32)
}

static CONTRACTION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(\w)['’](\w)").unwrap());

/// Lowercased word tokens; apostrophes inside words are dropped ("don't" -> "dont").
fn tokens(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let joined = CONTRACTION.replace_all(&lower, "$1$2");
    joined
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn parse_count(text: &str) -> ParseOutcome {
    match tokens(text).iter().rev().find_map(|t| number(t)) {
        Some(n) => AnswerValue::Count(n).into(),
        None => ParseOutcome::none("no number between zero and twenty"),
    }
}

const YES_WORDS: [&str; 5] = ["yes", "yeah", "yep", "correct", "true"];
const NO_WORDS: [&str; 10] = [
    "no",
    "nope",
    "not",
    "never",
    "false",
    "incorrect",
    "dont",
    "doesnt",
    "didnt",
    "cannot",
];
const NEGATIONS: [&str; 5] = ["not", "dont", "doesnt", "didnt", "never"];
const AFFIRMING: [&str; 4] = ["do", "does", "did", "they"];
const NEGATION_WINDOW: usize = 3;

fn is_intersect(t: &str) -> bool {
    matches!(
        t,
        "intersect" | "intersects" | "intersecting" | "intersected"
    )
}

pub fn parse_yesno(text: &str) -> ParseOutcome {
    let toks = tokens(text);
    for (i, t) in toks.iter().enumerate() {
        let t = t.as_str();
        if YES_WORDS.contains(&t) {
            return AnswerValue::YesNo(true).into();
        }
        if NO_WORDS.contains(&t) {
            return AnswerValue::YesNo(false).into();
        }
        if is_intersect(t) {
            let window = &toks[i.saturating_sub(NEGATION_WINDOW)..i];
            if window.iter().any(|w| NEGATIONS.contains(&w.as_str())) {
                return AnswerValue::YesNo(false).into();
            }
            if i > 0 && AFFIRMING.contains(&toks[i - 1].as_str()) {
                return AnswerValue::YesNo(true).into();
            }
        }
    }
    ParseOutcome::none("no yes/no commitment")
}

static QUOTED_LETTER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"['"‘’“”`]([a-z])['"‘’“”`]"#).unwrap());
static LETTER_PHRASE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\bletter\s+(?:is\s+)?([a-z])\b").unwrap());

/// One candidate, or `Ambiguous` over the distinct ones; `None` when empty.
fn decide(mut found: Vec<AnswerValue>) -> Option<ParseOutcome> {
    let mut distinct = Vec::new();
    for v in found.drain(..) {
        if !distinct.contains(&v) {
            distinct.push(v);
        }
    }
    match distinct.len() {
        0 => None,
        1 => Some(distinct[0].into()),
        _ => Some(ParseOutcome::Ambiguous {
            candidates: distinct,
        }),
    }
}

fn letters_from(re: &Regex, text: &str) -> Vec<AnswerValue> {
    re.captures_iter(text)
        .filter_map(|c| c[1].chars().next())
        .map(AnswerValue::Letter)
        .collect()
}

pub fn parse_letter(text: &str) -> ParseOutcome {
    let lower = text.to_lowercase();
    for re in [&*QUOTED_LETTER, &*LETTER_PHRASE] {
        if let Some(outcome) = decide(letters_from(re, &lower)) {
            return outcome;
        }
    }
    let mut lone: Vec<AnswerValue> = tokens(text)
        .iter()
        .filter(|t| t.len() == 1 && t.chars().all(|c| c.is_ascii_lowercase()))
        .filter_map(|t| t.chars().next())
        .map(AnswerValue::Letter)
        .collect();
    // the pronoun "I" is not a candidate when any other letter is present
    if lone.iter().any(|v| *v != AnswerValue::Letter('i')) {
        lone.retain(|v| *v != AnswerValue::Letter('i'));
    }
    decide(lone).unwrap_or_else(|| ParseOutcome::none("no single letter"))
}

const NUM: &str = r"(\d{1,2}|twenty|nineteen|eighteen|seventeen|sixteen|fifteen|fourteen|thirteen|twelve|eleven|ten|nine|eight|seven|six|five|four|three|two|one|zero)";

static GRID_PAIR: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"\b{NUM}\s*(?:x|×|\*|,|by)\s*{NUM}\b")).unwrap());
static ROWS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"\b{NUM}\s+rows?\b")).unwrap());
static COLS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"\b{NUM}\s+(?:columns?|cols?)\b")).unwrap());

fn dim(s: &str) -> Option<u32> {
    number(s).filter(|n| *n >= 1)
}

pub fn parse_grid_dims(text: &str) -> ParseOutcome {
    let lower = text.to_lowercase();
    let pair = GRID_PAIR
        .captures_iter(&lower)
        .filter_map(|c| {
            Some(AnswerValue::GridDims {
                rows: dim(&c[1])?,
                cols: dim(&c[2])?,
            })
        })
        .last();
    if let Some(v) = pair {
        return v.into();
    }
    let last = |re: &Regex| re.captures_iter(&lower).filter_map(|c| dim(&c[1])).last();
    match (last(&ROWS), last(&COLS)) {
        (Some(rows), Some(cols)) => AnswerValue::GridDims { rows, cols }.into(),
        (Some(_), None) => ParseOutcome::none("row count without column count"),
        (None, Some(_)) => ParseOutcome::none("column count without row count"),
        (None, None) => ParseOutcome::none("no grid dimensions"),
    }
}

pub fn parse_for_shape(shape: AnswerShape, text: &str) -> ParseOutcome {
    match shape {
        AnswerShape::Count => parse_count(text),
        AnswerShape::YesNo => parse_yesno(text),
        AnswerShape::Letter => parse_letter(text),
        AnswerShape::GridDims => parse_grid_dims(text),
    }
}

pub fn parse_for_task(task_id: u32, text: &str) -> Result<ParseOutcome, TaskError> {
    Ok(parse_for_shape(TaskId::new(task_id)?.answer_shape(), text))
}
