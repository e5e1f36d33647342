//! Deterministic template composition.
//!
//! A chain `e0 -p1- e1 -p2- ... ek` is rendered right-branching: `e0` is
//! described through `p1` by the description of `e1`, and so on down to the
//! terminal entity, which is a bare indefinite noun phrase. Every
//! intermediate description is a contiguous substring of the one above it.
//!
//! Alongside the text the template emits the constituency tree and the
//! dependency parse of what it produced, so template outputs can be
//! decomposed without an external parser.
//!
//! | link                  | top position                      | nested position                     |
//! |-----------------------|-----------------------------------|-------------------------------------|
//! | forward participle    | `the woman riding a horse`        | same                                |
//! | forward preposition   | `the man is behind <desc>`        | `the man behind <desc>`             |
//! | forward finite verb   | `the man has <desc>`              | `the man that has <desc>`           |
//! | backward (any)        | `the horse that <desc> is riding` | same (`is` omitted for finite verbs) |

use crate::lexicon::{self, RelationKind};
use crate::parse::{parse_bracketed, DepGraph, DepToken, ParseBundle};
use crate::scene_graph::{EntityId, SceneGraph};

use super::chains::{LinkDirection, PredicateChain};

/// One described entity inside a rendering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DescribedSpan {
    pub entity: EntityId,
    /// Position of the entity in the chain walk (0 = head).
    pub walk_pos: usize,
    /// Token span `[start, end)`.
    pub start: usize,
    pub end: usize,
    pub level: u32,
    /// True for the bare noun phrase of the entity (level 1).
    pub is_base: bool,
}

#[derive(Debug, Clone)]
pub struct TemplateRendering {
    tokens: Vec<DepToken>,
    bracketed: String,
    /// Head-noun token of each walk entity, by walk position.
    entity_heads: Vec<usize>,
    spans: Vec<DescribedSpan>,
}

impl TemplateRendering {
    pub fn text(&self) -> String {
        self.span_text(0, self.tokens.len())
    }

    pub fn span_text(&self, start: usize, end: usize) -> String {
        self.tokens[start..end]
            .iter()
            .map(|t| t.form.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn bracketed(&self) -> &str {
        &self.bracketed
    }

    pub fn dep(&self) -> DepGraph {
        DepGraph::new(self.tokens.clone()).expect("template emits a well-formed tree")
    }

    pub fn bundle(&self) -> ParseBundle {
        let tree = parse_bracketed(&self.bracketed).expect("template emits balanced brackets");
        ParseBundle::new(tree, self.dep()).expect("template parses share tokens")
    }

    pub fn entity_heads(&self) -> &[usize] {
        &self.entity_heads
    }

    /// Base noun phrases and descriptions, each entity's base first.
    pub fn spans(&self) -> &[DescribedSpan] {
        &self.spans
    }

    /// The entity whose head noun sits at token `index`.
    pub fn entity_at(&self, chain: &PredicateChain, index: usize) -> Option<EntityId> {
        self.entity_heads
            .iter()
            .position(|&t| t == index)
            .map(|pos| chain.walk()[pos])
    }
}

struct Part {
    bracket: String,
    head: usize,
    start: usize,
}

struct Builder<'a> {
    graph: &'a SceneGraph,
    chain: &'a PredicateChain,
    directions: Vec<LinkDirection>,
    tokens: Vec<DepToken>,
    entity_heads: Vec<Option<usize>>,
    spans: Vec<DescribedSpan>,
}

impl Builder<'_> {
    fn leaf(&mut self, form: &str, lemma: &str, upos: &str, xpos: &str) -> (usize, String) {
        let i = self.tokens.len();
        self.tokens.push(DepToken {
            form: form.to_string(),
            lemma: lemma.to_string(),
            upos: upos.to_string(),
            xpos: xpos.to_string(),
            head: None,
            deprel: "root".to_string(),
            space_after: true,
        });
        (i, format!("({xpos} {form})"))
    }

    fn attach(&mut self, child: usize, head: usize, rel: &str) {
        self.tokens[child].head = Some(head);
        self.tokens[child].deprel = rel.to_string();
    }

    fn name_of(&self, pos: usize) -> String {
        let id = self.chain.walk()[pos];
        let name = &self
            .graph
            .entity(id)
            .expect("chain validated against graph")
            .name;
        lexicon::bare_name(name)
    }

    /// `(NP (DT the) (JJ blue) (NN hat))`
    fn base_np(&mut self, pos: usize) -> Part {
        let name = self.name_of(pos);
        let terminal = pos + 1 == self.chain.walk().len();
        let article = if terminal {
            lexicon::indefinite_article(&name)
        } else {
            "the"
        };
        let start = self.tokens.len();
        let (det, det_b) = self.leaf(article, if terminal { "a" } else { "the" }, "DET", "DT");
        let words: Vec<&str> = name.split_whitespace().collect();
        let mut pieces = vec![det_b];
        let mut modifiers = Vec::new();
        for w in &words[..words.len() - 1] {
            let (i, b) = if lexicon::is_adjective(w) {
                self.leaf(w, w, "ADJ", "JJ")
            } else {
                self.leaf(w, w, "NOUN", "NN")
            };
            modifiers.push(i);
            pieces.push(b);
        }
        let last = words[words.len() - 1];
        let (head, head_b) = self.leaf(last, last, "NOUN", "NN");
        pieces.push(head_b);
        self.attach(det, head, "det");
        for m in modifiers {
            let rel = if self.tokens[m].upos == "ADJ" {
                "amod"
            } else {
                "compound"
            };
            self.attach(m, head, rel);
        }
        self.entity_heads[pos] = Some(head);
        self.spans.push(DescribedSpan {
            entity: self.chain.walk()[pos],
            walk_pos: pos,
            start,
            end: self.tokens.len(),
            level: 1,
            is_base: true,
        });
        Part {
            bracket: format!("(NP {})", pieces.join(" ")),
            head,
            start,
        }
    }

    /// Relation words as leaves. Returns (first token, all tokens, brackets).
    fn relation_leaves(
        &mut self,
        words: &[String],
        first_tag: (&str, &str),
    ) -> (usize, Vec<usize>, Vec<String>) {
        let mut ids = Vec::new();
        let mut brackets = Vec::new();
        for (k, w) in words.iter().enumerate() {
            let (upos, xpos) = if k == 0 {
                first_tag
            } else if w == "to" {
                ("ADP", "TO")
            } else {
                ("ADP", "IN")
            };
            let lemma = if upos == "VERB" {
                verb_lemma(w)
            } else {
                w.clone()
            };
            let (i, b) = self.leaf(w, &lemma, upos, xpos);
            ids.push(i);
            brackets.push(b);
        }
        (ids[0], ids, brackets)
    }

    fn fix_multiword(&mut self, tokens: &[usize]) {
        for &t in &tokens[1..] {
            self.attach(t, tokens[0], "fixed");
        }
    }

    fn describe(&mut self, pos: usize) -> Part {
        let last = self.chain.walk().len() - 1;
        if pos == last {
            return self.base_np(pos);
        }
        let top = pos == 0;
        let predicate = self.chain.predicates[pos].clone();
        let words = lexicon::relation_words(&predicate.relation);
        let kind = lexicon::classify_relation(&predicate.relation);
        let part = match self.directions[pos] {
            LinkDirection::Forward => self.forward(pos, top, kind, &words),
            LinkDirection::Backward => self.backward(pos, kind, &words),
        };
        let level = (last - pos) as u32 + 1;
        self.spans.push(DescribedSpan {
            entity: self.chain.walk()[pos],
            walk_pos: pos,
            start: part.start,
            end: self.tokens.len(),
            level,
            is_base: false,
        });
        part
    }

    fn forward(&mut self, pos: usize, top: bool, kind: RelationKind, words: &[String]) -> Part {
        let base = self.base_np(pos);
        match kind {
            RelationKind::Participle => {
                let (verb, _, rel_b) = self.relation_leaves(words, ("VERB", "VBG"));
                self.attach(verb, base.head, "acl");
                let (tail, preps) = rel_b.split_first().unwrap();
                let sub = self.describe(pos + 1);
                let vp = if preps.is_empty() {
                    self.attach(sub.head, verb, "obj");
                    format!("(VP {tail} {})", sub.bracket)
                } else {
                    self.case_marking(verb + 1, words.len() - 1, sub.head);
                    self.attach(sub.head, verb, "obl");
                    format!("(VP {tail} (PP {} {}))", preps.join(" "), sub.bracket)
                };
                Part {
                    bracket: format!("(NP {} {vp})", base.bracket),
                    head: base.head,
                    start: base.start,
                }
            }
            RelationKind::Preposition if top => {
                let (cop, cop_b) = self.leaf("is", "be", "AUX", "VBZ");
                let (first, ids, rel_b) = self.relation_leaves(words, ("ADP", "IN"));
                let sub = self.describe(pos + 1);
                self.attach(base.head, sub.head, "nsubj");
                self.attach(cop, sub.head, "cop");
                self.attach(first, sub.head, "case");
                self.fix_multiword(&ids);
                Part {
                    bracket: format!(
                        "(S {} (VP {cop_b} (PP {} {})))",
                        base.bracket,
                        rel_b.join(" "),
                        sub.bracket
                    ),
                    head: sub.head,
                    start: base.start,
                }
            }
            RelationKind::Preposition => {
                let (first, ids, rel_b) = self.relation_leaves(words, ("ADP", "IN"));
                let sub = self.describe(pos + 1);
                self.attach(first, sub.head, "case");
                self.fix_multiword(&ids);
                self.attach(sub.head, base.head, "nmod");
                Part {
                    bracket: format!(
                        "(NP {} (PP {} {}))",
                        base.bracket,
                        rel_b.join(" "),
                        sub.bracket
                    ),
                    head: base.head,
                    start: base.start,
                }
            }
            RelationKind::FiniteVerb => {
                let that = if top {
                    None
                } else {
                    Some(self.leaf("that", "that", "PRON", "WDT"))
                };
                let (verb, _, rel_b) = self.relation_leaves(words, ("VERB", "VBZ"));
                let (tail, preps) = rel_b.split_first().unwrap();
                let sub = self.describe(pos + 1);
                let vp = if preps.is_empty() {
                    self.attach(sub.head, verb, "obj");
                    format!("(VP {tail} {})", sub.bracket)
                } else {
                    self.case_marking(verb + 1, words.len() - 1, sub.head);
                    self.attach(sub.head, verb, "obl");
                    format!("(VP {tail} (PP {} {}))", preps.join(" "), sub.bracket)
                };
                match that {
                    None => {
                        self.attach(base.head, verb, "nsubj");
                        Part {
                            bracket: format!("(S {} {vp})", base.bracket),
                            head: verb,
                            start: base.start,
                        }
                    }
                    Some((that, that_b)) => {
                        self.attach(that, verb, "nsubj");
                        self.attach(verb, base.head, "acl:relcl");
                        Part {
                            bracket: format!(
                                "(NP {} (SBAR (WHNP {that_b}) (S {vp})))",
                                base.bracket
                            ),
                            head: base.head,
                            start: base.start,
                        }
                    }
                }
            }
        }
    }

    fn backward(&mut self, pos: usize, kind: RelationKind, words: &[String]) -> Part {
        let base = self.base_np(pos);
        let (that, that_b) = self.leaf("that", "that", "PRON", "WDT");
        let sub = self.describe(pos + 1);
        let vp = match kind {
            RelationKind::Participle => {
                let (aux, aux_b) = self.leaf("is", "be", "AUX", "VBZ");
                let (verb, _, rel_b) = self.relation_leaves(words, ("VERB", "VBG"));
                self.attach(aux, verb, "aux");
                self.attach(sub.head, verb, "nsubj");
                self.attach(verb, base.head, "acl:relcl");
                self.stranded(that, verb, words.len() - 1);
                let (tail, preps) = rel_b.split_first().unwrap();
                if preps.is_empty() {
                    format!("(VP {aux_b} (VP {tail}))")
                } else {
                    format!("(VP {aux_b} (VP {tail} (PP {})))", preps.join(" "))
                }
            }
            RelationKind::Preposition => {
                let (cop, cop_b) = self.leaf("is", "be", "AUX", "VBZ");
                let (first, ids, rel_b) = self.relation_leaves(words, ("ADP", "IN"));
                self.attach(cop, first, "cop");
                self.attach(sub.head, first, "nsubj");
                self.attach(first, base.head, "acl:relcl");
                self.attach(that, first, "obl");
                self.fix_multiword(&ids);
                format!("(VP {cop_b} (PP {}))", rel_b.join(" "))
            }
            RelationKind::FiniteVerb => {
                let (verb, _, rel_b) = self.relation_leaves(words, ("VERB", "VBZ"));
                self.attach(sub.head, verb, "nsubj");
                self.attach(verb, base.head, "acl:relcl");
                self.stranded(that, verb, words.len() - 1);
                let (tail, preps) = rel_b.split_first().unwrap();
                if preps.is_empty() {
                    format!("(VP {tail})")
                } else {
                    format!("(VP {tail} (PP {}))", preps.join(" "))
                }
            }
        };
        Part {
            bracket: format!(
                "(NP {} (SBAR (WHNP {that_b}) (S {} {vp})))",
                base.bracket, sub.bracket
            ),
            head: base.head,
            start: base.start,
        }
    }

    /// Prepositions `first..first+count` mark `object`.
    fn case_marking(&mut self, first: usize, count: usize, object: usize) {
        if count == 0 {
            return;
        }
        self.attach(first, object, "case");
        let ids: Vec<usize> = (first..first + count).collect();
        self.fix_multiword(&ids);
    }

    /// Relative pronoun of a backward verbal link, with any stranded
    /// prepositions (the hat that the man is sitting on).
    fn stranded(&mut self, that: usize, verb: usize, preps: usize) {
        if preps == 0 {
            self.attach(that, verb, "obj");
        } else {
            self.attach(that, verb, "obl");
            self.case_marking(verb + 1, preps, that);
        }
    }
}

fn verb_lemma(form: &str) -> String {
    lexicon::lemma_key(form)
}

/// Renders `chain` (in its own orientation) with the template grammar.
pub fn render_chain(graph: &SceneGraph, chain: &PredicateChain) -> TemplateRendering {
    let mut b = Builder {
        graph,
        chain,
        directions: chain.directions(),
        tokens: Vec::new(),
        entity_heads: vec![None; chain.walk().len()],
        spans: Vec::new(),
    };
    let top = b.describe(0);
    TemplateRendering {
        tokens: b.tokens,
        bracketed: top.bracket,
        entity_heads: b.entity_heads.into_iter().map(|h| h.unwrap()).collect(),
        spans: b.spans,
    }
}

/// Renders the bare noun phrase a level-one expression uses for `entity`,
/// with the article it takes inside `chain`.
pub fn base_phrase(graph: &SceneGraph, chain: &PredicateChain, pos: usize) -> String {
    let name = lexicon::bare_name(&graph.entity(chain.walk()[pos]).unwrap().name);
    if pos + 1 == chain.walk().len() {
        format!("{} {name}", lexicon::indefinite_article(&name))
    } else {
        format!("the {name}")
    }
}
