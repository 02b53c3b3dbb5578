//! Text, JSON and TSV renderings of evaluation results.

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::SkippedEvent;
use crate::metrics::{EvalReport, PredictionRecord, SoftmatchPoint};
use crate::paraphrase::{ChiSquare, ProbeSummary};

/// Everything `report.json` carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub model: String,
    pub k: usize,
    #[serde(flatten)]
    pub report: EvalReport,
    pub aborted: Vec<SkippedEvent>,
    pub unsegmentable: Vec<SkippedEvent>,
}

/// Table with the headline columns followed by the per-bin breakdown.
pub fn render_table(file: &ReportFile) -> String {
    let r = &file.report;
    let k = file.k;
    let mut s = String::new();
    let head = format!("top1 (top{k})");
    let types = format!("T1 (T{k})");
    let _ = writeln!(s, "{:<16} {:<18} {:<18} {:>10}", "model", head, types, "ppx");
    let _ = writeln!(
        s,
        "{:<16} {:<18} {:<18} {:>10.2}",
        file.model,
        format!("{:.2} ({:.2})", r.top1.percent, r.topk.percent),
        format!("{:.2} ({:.2})", r.t1.percent, r.tk.percent),
        r.ppx
    );
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "events {}  attempted types {}  aborted {}  unsegmentable {}  unit ppx {:.2}",
        r.events,
        r.t1.total,
        file.aborted.len(),
        file.unsegmentable.len(),
        r.unit_ppx
    );
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:<9} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
        "bin",
        "tokens",
        "top1%",
        format!("top{k}%"),
        "n",
        "T1%",
        format!("T{k}%")
    );
    for c in &r.coverage {
        let _ = writeln!(
            s,
            "{:<9} {:>8} {:>8.2} {:>8.2} {:>8} {:>8.2} {:>8.2}",
            c.bin.as_str(),
            c.tokens.total,
            c.tokens.percent,
            c.tokens_topk.percent,
            c.types.total,
            c.types.percent,
            c.types_topk.percent
        );
    }
    s
}

pub fn write_coverage_tsv<W: Write>(report: &EvalReport, mut out: W) -> io::Result<()> {
    writeln!(
        out,
        "bin\tevents\ttoken_hits\ttoken_pct\ttoken_topk_hits\ttoken_topk_pct\tpopulation\ttype_hits\ttype_pct\ttype_topk_hits\ttype_topk_pct"
    )?;
    for c in &report.coverage {
        writeln!(
            out,
            "{}\t{}\t{}\t{:.4}\t{}\t{:.4}\t{}\t{}\t{:.4}\t{}\t{:.4}",
            c.bin,
            c.tokens.total,
            c.tokens.hits,
            c.tokens.percent,
            c.tokens_topk.hits,
            c.tokens_topk.percent,
            c.types.total,
            c.types.hits,
            c.types.percent,
            c.types_topk.hits,
            c.types_topk.percent
        )?;
    }
    Ok(())
}

pub fn write_softmatch_tsv<W: Write>(points: &[SoftmatchPoint], mut out: W) -> io::Result<()> {
    writeln!(out, "depth\taccuracy_pct\ttypes_pct\thits\ttype_hits")?;
    for p in points {
        writeln!(
            out,
            "{}\t{:.4}\t{:.4}\t{}\t{}",
            p.depth, p.accuracy.percent, p.types.percent, p.accuracy.hits, p.types.hits
        )?;
    }
    Ok(())
}

pub fn write_records<W: Write>(records: &[PredictionRecord], mut out: W) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        writeln!(out)?;
    }
    Ok(())
}

/// Reads a JSON-lines record log. `source` names the input in errors.
pub fn read_records<R: BufRead>(input: R, source: &std::path::Path) -> Result<Vec<PredictionRecord>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: PredictionRecord =
            serde_json::from_str(&line).map_err(|e| Error::format(source, i + 1, e.to_string()))?;
        out.push(r);
    }
    if out.is_empty() {
        return Err(Error::EmptyInput(format!("{} holds no records", source.display())));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParaphraseFile {
    #[serde(flatten)]
    pub summary: ProbeSummary,
    /// Absent when the table is degenerate.
    pub chi_square: Option<ChiSquare>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi_square_error: Option<String>,
}

/// Rows laid out as condition, hits, misses, total.
pub fn write_contingency_tsv<W: Write>(summary: &ProbeSummary, mut out: W) -> io::Result<()> {
    writeln!(out, "condition\thits\tmisses\ttotal")?;
    for (name, c) in [("rare", summary.rare), ("common", summary.common)] {
        writeln!(out, "{name}\t{}\t{}\t{}", c.hits, c.misses, c.total)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{assign_bins, Bin, FrequencyTable};

    fn record(target: &str, hit: bool) -> PredictionRecord {
        PredictionRecord {
            sentence: 3,
            position: 1,
            target: target.into(),
            target_bin: Bin::Unbinned,
            greedy_hit: hit,
            topk_hit: hit,
            greedy_word: "x".into(),
            word_logprob: (1.0f64 / 7.0).ln(),
            target_units: 2,
            units_consumed: 1,
            exhausted: false,
        }
    }

    #[test]
    fn records_round_trip_exactly() {
        let records = vec![record("a", true), record("b", false)];
        let mut buf = Vec::new();
        write_records(&records, &mut buf).unwrap();
        let back = read_records(&buf[..], std::path::Path::new("r.jsonl")).unwrap();
        assert_eq!(back, records);
    }

    #[test]
    fn bad_record_line_is_reported() {
        let text = b"{\"sentence\":0}\n";
        match read_records(&text[..], std::path::Path::new("r.jsonl")) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn table_has_headline_columns() {
        let records = vec![record("a", true), record("b", false)];
        let bins = assign_bins(&FrequencyTable::default(), ["a", "b"]);
        let file = ReportFile {
            model: "toy".into(),
            k: 10,
            report: EvalReport::from_records(&records, &bins).unwrap(),
            aborted: vec![],
            unsegmentable: vec![],
        };
        let t = render_table(&file);
        assert!(t.lines().next().unwrap().contains("top1 (top10)"));
        assert!(t.contains("50.00 (50.00)"));
        assert!(t.contains("unbinned"));
        let json = serde_json::to_string(&file).unwrap();
        let back: ReportFile = serde_json::from_str(&json).unwrap();
        assert_eq!(back, file);
    }
}
