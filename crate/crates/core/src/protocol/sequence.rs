use serde::{Deserialize, Serialize};

use super::{GridSpec, LocPair};

pub const SEQ_OPEN: &str = "<s>";
pub const SEQ_CLOSE: &str = "</s>";
pub const IMG_OPEN: &str = "<img>";
pub const IMG_CLOSE: &str = "</img>";
pub const GROUNDING: &str = "<grounding>";
pub const PHRASE_OPEN: &str = "<p>";
pub const PHRASE_CLOSE: &str = "</p>";
pub const BOX_OPEN: &str = "<b>";
pub const BOX_CLOSE: &str = "</b>";

pub const SEE_CLAUSE: &str = "We can see in the image:";
pub const LOCATE_CLAUSE: &str = ". Based on that, we can locate:";

/// A phrase with an optional box.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundedSpan {
    pub text: String,
    pub loc: Option<LocPair>,
}

impl GroundedSpan {
    pub fn render(&self) -> String {
        let mut out = format!("{PHRASE_OPEN}{}{PHRASE_CLOSE}", self.text);
        if let Some(l) = &self.loc {
            out.push_str(&l.render());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Text(String),
    Span(GroundedSpan),
}

/// `<s><img>{image}</img><grounding>` + segments + `</s>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundedSequence {
    pub image: String,
    pub segments: Vec<Segment>,
}

impl GroundedSequence {
    pub fn spans(&self) -> impl Iterator<Item = &GroundedSpan> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Span(g) => Some(g),
            Segment::Text(_) => None,
        })
    }
}

pub fn render_sequence(seq: &GroundedSequence) -> String {
    let mut out = format!("{SEQ_OPEN}{IMG_OPEN}{}{IMG_CLOSE}{GROUNDING}", seq.image);
    for s in &seq.segments {
        match s {
            Segment::Text(t) => out.push_str(t),
            Segment::Span(g) => out.push_str(&g.render()),
        }
    }
    out.push_str(SEQ_CLOSE);
    out
}

/// One clue: a lower-level expression and the box found for it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClueItem {
    pub text: String,
    pub loc: LocPair,
}

pub(crate) fn sequence_head(image: &str) -> String {
    format!("{SEQ_OPEN}{IMG_OPEN}{image}{IMG_CLOSE}{GROUNDING}")
}

pub(crate) fn clue_clause(clues: &[ClueItem]) -> String {
    let items: Vec<String> = clues
        .iter()
        .map(|c| format!("{PHRASE_OPEN}{}{PHRASE_CLOSE}{}", c.text, c.loc.render()))
        .collect();
    format!("{SEE_CLAUSE}{}{LOCATE_CLAUSE}", items.join(", "))
}

/// Prompt asking for the box of `target`, ending right after its `</p>`.
/// Without clues this is the plain single-phrase grounding prompt.
pub fn render_prompt(image: &str, clues: &[ClueItem], target: &str) -> String {
    render_level_prompt(image, clues, &[target])
}

/// Prompt for several same-level targets, comma-joined.
pub fn render_level_prompt(image: &str, clues: &[ClueItem], targets: &[&str]) -> String {
    let mut out = sequence_head(image);
    if !clues.is_empty() {
        out.push_str(&clue_clause(clues));
    }
    let items: Vec<String> = targets
        .iter()
        .map(|t| format!("{PHRASE_OPEN}{t}{PHRASE_CLOSE}"))
        .collect();
    out.push_str(&items.join(", "));
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParsedResponse {
    pub spans: Vec<GroundedSpan>,
    /// Malformed or out-of-range groups that were dropped.
    pub warnings: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok<'a> {
    Text(&'a str),
    POpen,
    PClose,
    BOpen,
    BClose,
    Loc(u64),
    Other,
}

fn lex(raw: &str) -> Vec<Tok<'_>> {
    let mut out = Vec::new();
    let mut rest = raw;
    while !rest.is_empty() {
        let Some(lt) = rest.find('<') else {
            out.push(Tok::Text(rest));
            break;
        };
        if lt > 0 {
            out.push(Tok::Text(&rest[..lt]));
            rest = &rest[lt..];
        }
        let Some(gt) = rest.find('>') else {
            out.push(Tok::Text(rest));
            break;
        };
        let tag = &rest[1..gt];
        let tok = match tag {
            "p" => Tok::POpen,
            "/p" => Tok::PClose,
            "b" => Tok::BOpen,
            "/b" => Tok::BClose,
            "s" | "/s" | "img" | "/img" | "grounding" => Tok::Other,
            _ => match tag.strip_prefix("loc_").map(str::parse::<u64>) {
                Some(Ok(k)) => Tok::Loc(k),
                _ => Tok::Text(&rest[..=gt]),
            },
        };
        out.push(tok);
        rest = &rest[gt + 1..];
    }
    out
}

/// Parses `<b><loc_a><loc_b></b>` starting at `toks[i]` (an opening `<b>`).
/// Returns the pair (if valid) and the index after the group.
fn loc_group(toks: &[Tok<'_>], i: usize, grid: GridSpec) -> (Option<LocPair>, usize) {
    match toks.get(i + 1..i + 4) {
        Some([Tok::Loc(a), Tok::Loc(b), Tok::BClose]) => {
            let limit = u64::from(grid.tokens());
            if *a < limit && *b < limit {
                (Some(LocPair::new(*a as u32, *b as u32)), i + 4)
            } else {
                (None, i + 4)
            }
        }
        _ => {
            let end = toks[i + 1..]
                .iter()
                .position(|t| matches!(t, Tok::BClose | Tok::POpen | Tok::BOpen))
                .map_or(toks.len(), |p| {
                    let j = i + 1 + p;
                    if toks[j] == Tok::BClose {
                        j + 1
                    } else {
                        j
                    }
                });
            (None, end)
        }
    }
}

/// Extracts every `<p>…</p>` phrase with its optional following
/// `<b>…</b>` group, plus bare `<b>…</b>` groups (empty text). Location
/// indices must be below `P²`; groups failing that, and unterminated
/// fragments, are dropped and counted.
pub fn parse_response(raw: &str, grid: GridSpec) -> ParsedResponse {
    let toks = lex(raw);
    let mut out = ParsedResponse::default();
    let mut i = 0;
    while i < toks.len() {
        match toks[i] {
            Tok::POpen => {
                let mut text = String::new();
                let mut j = i + 1;
                while let Some(Tok::Text(t)) = toks.get(j) {
                    text.push_str(t);
                    j += 1;
                }
                if toks.get(j) != Some(&Tok::PClose) {
                    out.warnings += 1;
                    i = j;
                    continue;
                }
                j += 1;
                let mut k = j;
                while let Some(Tok::Text(t)) = toks.get(k) {
                    if !t.trim().is_empty() {
                        break;
                    }
                    k += 1;
                }
                if toks.get(k) == Some(&Tok::BOpen) {
                    let (loc, next) = loc_group(&toks, k, grid);
                    match loc {
                        Some(l) => out.spans.push(GroundedSpan { text, loc: Some(l) }),
                        None => out.warnings += 1,
                    }
                    i = next;
                } else {
                    out.spans.push(GroundedSpan { text, loc: None });
                    i = j;
                }
            }
            Tok::BOpen => {
                let (loc, next) = loc_group(&toks, i, grid);
                match loc {
                    Some(l) => out.spans.push(GroundedSpan {
                        text: String::new(),
                        loc: Some(l),
                    }),
                    None => out.warnings += 1,
                }
                i = next;
            }
            Tok::PClose | Tok::BClose | Tok::Loc(_) => {
                out.warnings += 1;
                i += 1;
            }
            Tok::Text(_) | Tok::Other => i += 1,
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const G: GridSpec = GridSpec { size: 32 };

    const EXAMPLE: &str = "<s><img>Image Embedding</img> <grounding> <p>The woman</p> <b><loc_78><loc_1022></b> with <p>a blue hat</p> <b><loc_52><loc_195></b> </s>";

    #[test]
    fn example_string() {
        let r = parse_response(EXAMPLE, G);
        assert_eq!(
            r.spans,
            vec![
                GroundedSpan {
                    text: "The woman".into(),
                    loc: Some(LocPair::new(78, 1022))
                },
                GroundedSpan {
                    text: "a blue hat".into(),
                    loc: Some(LocPair::new(52, 195))
                },
            ]
        );
        assert_eq!(r.warnings, 0);
    }

    #[test]
    fn plain_text_has_no_spans() {
        let r = parse_response("a man on a horse", G);
        assert!(r.spans.is_empty());
        assert_eq!(r.warnings, 0);
    }

    #[test]
    fn out_of_range_loc_is_dropped() {
        let r = parse_response(
            "<p>x</p><b><loc_1><loc_4096></b><p>y</p><b><loc_1><loc_2></b>",
            G,
        );
        assert_eq!(r.spans.len(), 1);
        assert_eq!(r.spans[0].text, "y");
        assert_eq!(r.warnings, 1);
    }

    #[test]
    fn malformed_fragments_are_counted() {
        let r = parse_response("<b><loc_3><loc_40></b><p>cut off", G);
        assert_eq!(
            r.spans,
            vec![GroundedSpan {
                text: String::new(),
                loc: Some(LocPair::new(3, 40))
            }]
        );
        assert_eq!(r.warnings, 1);
        let r = parse_response("<p>a</p><b><loc_3></b>", G);
        assert!(r.spans.is_empty());
        assert_eq!(r.warnings, 1);
    }

    #[test]
    fn prompt_shapes() {
        assert_eq!(
            render_prompt("img.jpg", &[], "a horse"),
            "<s><img>img.jpg</img><grounding><p>a horse</p>"
        );
        let clues = [
            ClueItem {
                text: "the woman".into(),
                loc: LocPair::new(1, 2),
            },
            ClueItem {
                text: "a horse".into(),
                loc: LocPair::new(3, 4),
            },
        ];
        assert_eq!(
            render_prompt("v", &clues, "the woman riding a horse"),
            "<s><img>v</img><grounding>We can see in the image:<p>the woman</p><b><loc_1><loc_2></b>, <p>a horse</p><b><loc_3><loc_4></b>. Based on that, we can locate:<p>the woman riding a horse</p>"
        );
    }
}
