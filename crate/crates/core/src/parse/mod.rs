//! Constituency trees, dependency graphs and the bundle pairing them.
//!
//! Parses are produced outside this crate (golden fixtures, the parsing
//! sidecar, or the template composer) and ingested from labeled brackets and
//! CoNLL-U.

mod bracket;
mod conllu;

pub use bracket::{parse_bracketed, write_bracketed};
pub use conllu::{parse_conllu, write_conllu};

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("bracketed tree, offset {offset}: {message}")]
    Bracket { offset: usize, message: String },
    #[error("CoNLL-U line {line}: {message}")]
    Conllu { line: usize, message: String },
    #[error("dependency parse has no tokens")]
    Empty,
    #[error("dependency parse must have exactly one root, found {0}")]
    RootCount(usize),
    #[error("token {token} has head {head} outside the sentence")]
    HeadOutOfRange { token: usize, head: usize },
    #[error("dependency heads form a cycle through token {0}")]
    Cycle(usize),
    #[error("inconsistent parses: constituency tokens {constituency:?} vs dependency tokens {dependency:?}")]
    InconsistentTokens {
        constituency: Vec<String>,
        dependency: Vec<String>,
    },
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    /// Category (NP, PP, ...) for phrases, POS tag for leaves.
    pub label: String,
    pub children: Vec<usize>,
    /// Token span `[start, end)`.
    pub start: usize,
    pub end: usize,
    pub depth: usize,
    /// Present iff the node is a leaf.
    pub word: Option<String>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.word.is_some()
    }

    /// Category with function tags and indices stripped (`NP-SBJ-1` → `NP`).
    pub fn category(&self) -> &str {
        let l = self.label.as_str();
        if l.starts_with('-') {
            return l;
        }
        l.split(['-', '=']).next().unwrap_or(l)
    }
}

/// Labeled ordered tree; node 0..n arena with token spans precomputed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstituencyTree {
    nodes: Vec<TreeNode>,
    root: usize,
    tokens: Vec<String>,
}

impl ConstituencyTree {
    pub fn root(&self) -> usize {
        self.root
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Pre-order traversal of node ids.
    pub fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            out.push(id);
            stack.extend(self.nodes[id].children.iter().rev());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DepToken {
    pub form: String,
    pub lemma: String,
    pub upos: String,
    pub xpos: String,
    /// Zero-based head index; `None` for the root.
    pub head: Option<usize>,
    pub deprel: String,
    pub space_after: bool,
}

impl DepToken {
    pub fn is_noun(&self) -> bool {
        match self.upos.as_str() {
            "NOUN" | "PROPN" => true,
            "" => self.xpos.starts_with("NN"),
            _ => false,
        }
    }

    /// Relation label without subtype (`nsubj:pass` → `nsubj`).
    pub fn base_deprel(&self) -> &str {
        self.deprel.split(':').next().unwrap_or("")
    }

    pub fn lemma_or_form(&self) -> &str {
        if self.lemma.is_empty() {
            &self.form
        } else {
            &self.lemma
        }
    }
}

/// Dependency tree over a tokenized sentence: exactly one root, no cycles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepGraph {
    tokens: Vec<DepToken>,
    children: Vec<Vec<usize>>,
    root: usize,
}

impl DepGraph {
    pub fn new(tokens: Vec<DepToken>) -> Result<Self, ParseError> {
        if tokens.is_empty() {
            return Err(ParseError::Empty);
        }
        let n = tokens.len();
        let roots: Vec<usize> = (0..n).filter(|&i| tokens[i].head.is_none()).collect();
        if roots.len() != 1 {
            return Err(ParseError::RootCount(roots.len()));
        }
        let mut children = vec![Vec::new(); n];
        for (i, t) in tokens.iter().enumerate() {
            if let Some(h) = t.head {
                if h >= n {
                    return Err(ParseError::HeadOutOfRange { token: i, head: h });
                }
                children[h].push(i);
            }
        }
        for start in 0..n {
            let mut cur = start;
            let mut steps = 0;
            while let Some(h) = tokens[cur].head {
                cur = h;
                steps += 1;
                if steps > n {
                    return Err(ParseError::Cycle(start));
                }
            }
        }
        Ok(Self {
            tokens,
            children,
            root: roots[0],
        })
    }

    pub fn tokens(&self) -> &[DepToken] {
        &self.tokens
    }

    pub fn token(&self, i: usize) -> &DepToken {
        &self.tokens[i]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn forms(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.form.clone()).collect()
    }

    /// Distance from the root (root = 0).
    pub fn depth(&self, mut i: usize) -> usize {
        let mut d = 0;
        while let Some(h) = self.tokens[i].head {
            i = h;
            d += 1;
        }
        d
    }

    /// Detokenized text of `[start, end)`, honoring `SpaceAfter=No`.
    pub fn span_text(&self, start: usize, end: usize) -> String {
        let mut out = String::new();
        for i in start..end {
            out.push_str(&self.tokens[i].form);
            if i + 1 < end && self.tokens[i].space_after {
                out.push(' ');
            }
        }
        out
    }

    pub fn text(&self) -> String {
        self.span_text(0, self.tokens.len())
    }
}

/// Both parses of one expression, with matching tokenization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseBundle {
    pub text: String,
    pub tree: ConstituencyTree,
    pub dep: DepGraph,
}

impl ParseBundle {
    pub fn new(tree: ConstituencyTree, dep: DepGraph) -> Result<Self, ParseError> {
        let dep_forms = dep.forms();
        if tree.tokens() != dep_forms.as_slice() {
            return Err(ParseError::InconsistentTokens {
                constituency: tree.tokens().to_vec(),
                dependency: dep_forms,
            });
        }
        Ok(Self {
            text: dep.text(),
            tree,
            dep,
        })
    }

    pub fn from_strings(bracketed: &str, conllu: &str) -> Result<Self, ParseError> {
        Self::new(parse_bracketed(bracketed)?, parse_conllu(conllu)?)
    }
}

fn read(path: &Path) -> Result<String, ParseError> {
    fs::read_to_string(path).map_err(|e| ParseError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Reads a labeled-bracket constituency file and a CoNLL-U file and checks
/// that they tokenize the same way.
pub fn parse_bundle_ingest(const_path: &Path, dep_path: &Path) -> Result<ParseBundle, ParseError> {
    ParseBundle::from_strings(&read(const_path)?, &read(dep_path)?)
}
