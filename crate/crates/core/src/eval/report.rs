use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Direction, EvalRow, EvalTable, PairedComparison};
use crate::pipeline::Mode;
use crate::tasks::TaskId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Markdown,
    Json,
    Csv,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Markdown => "md",
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
        }
    }
}

const MODES: [(Mode, &str); 2] = [(Mode::Direct, "QnA"), (Mode::Captioned, "QnA+Captions")];

/// Renders the table and any comparisons. Output depends only on the inputs.
pub fn render_report(
    table: &EvalTable,
    comparisons: &[PairedComparison],
    format: ReportFormat,
) -> String {
    match format {
        ReportFormat::Markdown => markdown(table, comparisons),
        ReportFormat::Json => json(table, comparisons),
        ReportFormat::Csv => csv(table, comparisons),
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))
}

fn p_value(p: f64) -> String {
    if p < 1e-4 {
        format!("{p:.2e}")
    } else {
        format!("{p:.4}")
    }
}

fn direction(d: Direction) -> &'static str {
    match d {
        Direction::CaptionedBetter => "captioned better",
        Direction::DirectBetter => "direct better",
        Direction::Tie => "tie",
    }
}

/// Cell values of one row in column order: per task both modes, then averages.
fn row_values(row: &EvalRow) -> Vec<Option<f64>> {
    let mut out = Vec::with_capacity(18);
    for t in TaskId::ALL {
        for (mode, _) in MODES {
            out.push(
                row.tasks
                    .get(&t)
                    .and_then(|c| c.get(mode))
                    .map(|c| c.accuracy),
            );
        }
    }
    for (mode, _) in MODES {
        out.push(row.average(mode));
    }
    out
}

fn markdown(table: &EvalTable, comparisons: &[PairedComparison]) -> String {
    let mut s = String::from("## Accuracy (%)\n\n| Model |");
    for t in TaskId::ALL {
        for (_, name) in MODES {
            write!(s, " Task {t} {name} |").unwrap();
        }
    }
    s.push_str(" Average QnA | Average QnA+Captions |\n| --- |");
    s.push_str(&" ---: |".repeat(18));
    s.push('\n');

    let values: Vec<Vec<Option<f64>>> = table.rows.iter().map(row_values).collect();
    // best per column, compared as printed
    let best: Vec<Option<String>> = (0..18)
        .map(|col| {
            if table.rows.len() < 2 {
                return None;
            }
            values
                .iter()
                .filter_map(|r| r[col])
                .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
                .map(|v| pct(Some(v)))
        })
        .collect();
    for (row, vals) in table.rows.iter().zip(&values) {
        write!(s, "| {} |", row.model).unwrap();
        for (v, best) in vals.iter().zip(&best) {
            let text = pct(*v);
            if v.is_some() && best.as_ref() == Some(&text) {
                write!(s, " **{text}** |").unwrap();
            } else {
                write!(s, " {text} |").unwrap();
            }
        }
        s.push('\n');
    }

    let counted: Vec<(&EvalRow, Mode, &str)> = table
        .rows
        .iter()
        .flat_map(|r| MODES.iter().map(move |&(m, name)| (r, m, name)))
        .filter(|(r, m, _)| {
            r.tasks
                .values()
                .any(|c| c.get(*m).is_some_and(|c| c.counts.is_some()))
        })
        .collect();
    if !counted.is_empty() {
        s.push_str("\n## Parse failures and stage errors\n\n");
        s.push_str(
            "| Model | Mode | Traces | Parse failures | Parse failure rate (%) | Stage errors |\n",
        );
        s.push_str("| --- | --- | ---: | ---: | ---: | ---: |\n");
        for (row, mode, name) in counted {
            let (mut total, mut failures, mut errors) = (0, 0, 0);
            for c in row
                .tasks
                .values()
                .filter_map(|c| c.get(mode))
                .filter_map(|c| c.counts)
            {
                total += c.total;
                failures += c.parse_failures;
                errors += c.errors;
            }
            let rate = if total == 0 {
                0.0
            } else {
                100.0 * failures as f64 / total as f64
            };
            writeln!(
                s,
                "| {} | {name} | {total} | {failures} | {rate:.2} | {errors} |",
                row.model
            )
            .unwrap();
        }
    }

    if !comparisons.is_empty() {
        s.push_str("\n## Significance: direct vs captioned (exact McNemar)\n\n");
        s.push_str("b counts instances only direct answered correctly; c those only captioned answered correctly.\n\n");
        s.push_str("| Model | Task | n | b | c | p-value | Direction |\n");
        s.push_str("| --- | --- | ---: | ---: | ---: | ---: | --- |\n");
        for c in comparisons {
            writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} | {} |",
                c.model,
                c.task,
                c.n,
                c.b,
                c.c,
                p_value(c.p_value),
                direction(c.direction)
            )
            .unwrap();
        }
    }
    s
}

#[derive(Serialize)]
struct JsonReport<'a> {
    rows: &'a [EvalRow],
    significance: &'a [PairedComparison],
}

fn json(table: &EvalTable, comparisons: &[PairedComparison]) -> String {
    let mut s = serde_json::to_string_pretty(&JsonReport {
        rows: &table.rows,
        significance: comparisons,
    })
    .expect("report serializes");
    s.push('\n');
    s
}

/// One flat record per accuracy cell, average, or comparison.
#[derive(Serialize)]
struct CsvRecord<'a> {
    record: &'a str,
    model: &'a str,
    task: String,
    mode: &'a str,
    accuracy: Option<f64>,
    correct: Option<u32>,
    total: Option<u32>,
    parse_failures: Option<u32>,
    errors: Option<u32>,
    n: Option<u64>,
    b: Option<u64>,
    c: Option<u64>,
    p_value: Option<f64>,
    direction: Option<Direction>,
}

impl<'a> CsvRecord<'a> {
    fn blank(record: &'a str, model: &'a str, task: String, mode: &'a str) -> Self {
        Self {
            record,
            model,
            task,
            mode,
            accuracy: None,
            correct: None,
            total: None,
            parse_failures: None,
            errors: None,
            n: None,
            b: None,
            c: None,
            p_value: None,
            direction: None,
        }
    }
}

fn csv(table: &EvalTable, comparisons: &[PairedComparison]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &table.rows {
        for (t, cells) in &row.tasks {
            for (mode, _) in MODES {
                let Some(cell) = cells.get(mode) else {
                    continue;
                };
                let mode = if mode == Mode::Direct {
                    "direct"
                } else {
                    "captioned"
                };
                let counts = cell.counts;
                w.serialize(CsvRecord {
                    accuracy: Some(cell.accuracy),
                    correct: counts.map(|c| c.correct),
                    total: counts.map(|c| c.total),
                    parse_failures: counts.map(|c| c.parse_failures),
                    errors: counts.map(|c| c.errors),
                    ..CsvRecord::blank("accuracy", &row.model, t.to_string(), mode)
                })
                .expect("csv record");
            }
        }
        for (mode, avg) in [
            ("direct", row.average_direct),
            ("captioned", row.average_captioned),
        ] {
            if avg.is_some() {
                w.serialize(CsvRecord {
                    accuracy: avg,
                    ..CsvRecord::blank("average", &row.model, "average".into(), mode)
                })
                .expect("csv record");
            }
        }
    }
    for c in comparisons {
        w.serialize(CsvRecord {
            n: Some(c.n),
            b: Some(c.b),
            c: Some(c.c),
            p_value: Some(c.p_value),
            direction: Some(c.direction),
            ..CsvRecord::blank("significance", &c.model, c.task.clone(), "")
        })
        .expect("csv record");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{compare_modes, PairedComparison};

    fn gemini() -> EvalRow {
        EvalRow::from_accuracies(
            "Gemini",
            [40.0, 78.0, 49.0, 24.0, 33.0, 15.0, 13.0, 65.0],
            [43.0, 88.0, 51.0, 26.0, 41.0, 14.0, 15.0, 74.0],
        )
    }

    #[test]
    fn markdown_layout() {
        let table = EvalTable {
            rows: vec![gemini()],
        };
        let md = render_report(&table, &[], ReportFormat::Markdown);
        let header = md.lines().nth(2).unwrap();
        assert!(header.starts_with("| Model | Task 1 QnA | Task 1 QnA+Captions | Task 2 QnA |"));
        assert!(header.ends_with("| Task 8 QnA+Captions | Average QnA | Average QnA+Captions |"));
        assert_eq!(header.matches("QnA+Captions").count(), 9);
        let row = md.lines().nth(4).unwrap();
        assert!(row.ends_with("| 39.63 | 44.00 |"), "{row}");
        assert!(!md.contains("**"), "one row: nothing to mark");
        assert!(!md.contains("Significance") && !md.contains("Parse failures"));
    }

    #[test]
    fn best_in_column_is_bold() {
        let mut other = EvalRow::from_accuracies("Other", [50.0; 8], [10.0; 8]);
        other.model = "Other".into();
        let table = EvalTable {
            rows: vec![gemini(), other],
        };
        let md = render_report(&table, &[], ReportFormat::Markdown);
        let rows: Vec<&str> = md.lines().skip(4).take(2).collect();
        assert!(
            rows[0].starts_with("| Gemini | 40.00 | **43.00** | **78.00** |"),
            "{}",
            rows[0]
        );
        assert!(
            rows[1].starts_with("| Other | **50.00** | 10.00 | 50.00 |"),
            "{}",
            rows[1]
        );
    }

    #[test]
    fn json_round_trips() {
        let table = EvalTable {
            rows: vec![gemini()],
        };
        let cmp = vec![PairedComparison::new("Gemini", "all".into(), 10, 2, 5)];
        let text = render_report(&table, &cmp, ReportFormat::Json);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let back: EvalTable =
            serde_json::from_value(serde_json::json!({"rows": v["rows"]})).unwrap();
        assert_eq!(back, table);
        let sig: Vec<PairedComparison> = serde_json::from_value(v["significance"].clone()).unwrap();
        assert_eq!(sig, cmp);
    }

    #[test]
    fn csv_is_flat() {
        let table = EvalTable {
            rows: vec![gemini()],
        };
        let cmp = compare_modes(&[], "Gemini").unwrap();
        let text = render_report(&table, &cmp, ReportFormat::Csv);
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "record,model,task,mode,accuracy,correct,total,parse_failures,errors,n,b,c,p_value,direction"
        );
        assert_eq!(
            lines.next().unwrap(),
            "accuracy,Gemini,1,direct,40.0,,,,,,,,,"
        );
        assert!(text.contains("average,Gemini,average,captioned,44.0,"));
        assert!(text.contains("significance,Gemini,all,,,,,,,0,0,0,1.0,tie"));
        assert_eq!(text.lines().count(), 1 + 16 + 2 + 9);
    }
}
