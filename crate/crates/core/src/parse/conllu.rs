//! CoNLL-U reader/writer for single-sentence dependency parses.
//!
//! Multiword-token ranges (`1-2`) and empty nodes (`1.1`) are skipped; only
//! the basic tree in columns 7/8 is used.

use std::fmt::Write;

use super::{DepGraph, DepToken, ParseError};

pub fn parse_conllu(input: &str) -> Result<DepGraph, ParseError> {
    let mut tokens = Vec::new();
    let mut body_done = false;

    for (lineno, line) in input.lines().enumerate() {
        let line_no = lineno + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !tokens.is_empty() {
                body_done = true;
            }
            continue;
        }
        if body_done {
            return Err(ParseError::Conllu {
                line: line_no,
                message: "more than one sentence in input".into(),
            });
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(ParseError::Conllu {
                line: line_no,
                message: format!("expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let id: usize = cols[0].parse().map_err(|_| ParseError::Conllu {
            line: line_no,
            message: format!("bad token id `{}`", cols[0]),
        })?;
        if id != tokens.len() + 1 {
            return Err(ParseError::Conllu {
                line: line_no,
                message: format!("token id {id} out of sequence"),
            });
        }
        let head: usize = cols[6].parse().map_err(|_| ParseError::Conllu {
            line: line_no,
            message: format!("bad head `{}`", cols[6]),
        })?;
        let field = |c: &str| {
            if c == "_" {
                String::new()
            } else {
                c.to_string()
            }
        };
        let space_after = !cols[9].split('|').any(|m| m == "SpaceAfter=No");
        tokens.push(DepToken {
            form: cols[1].to_string(),
            lemma: field(cols[2]),
            upos: field(cols[3]),
            xpos: field(cols[4]),
            head: head.checked_sub(1),
            deprel: field(cols[7]),
            space_after,
        });
    }
    DepGraph::new(tokens)
}

pub fn write_conllu(graph: &DepGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# text = {}", graph.text());
    for (i, t) in graph.tokens().iter().enumerate() {
        let field = |s: &str| {
            if s.is_empty() {
                "_".to_string()
            } else {
                s.to_string()
            }
        };
        let head = t.head.map_or(0, |h| h + 1);
        let misc = if t.space_after { "_" } else { "SpaceAfter=No" };
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t_\t{}\t{}\t_\t{}",
            i + 1,
            t.form,
            field(&t.lemma),
            field(&t.upos),
            field(&t.xpos),
            head,
            field(&t.deprel),
            misc
        );
    }
    out
}
