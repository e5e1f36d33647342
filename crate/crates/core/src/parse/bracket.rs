//! Penn-Treebank style labeled bracket reader and writer.

use super::{ConstituencyTree, ParseError, TreeNode};

#[derive(Debug, PartialEq)]
enum Tok<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn lex(input: &str) -> Vec<(usize, Tok<'_>)> {
    let mut out = Vec::new();
    let bytes = input.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'(' => {
                out.push((i, Tok::Open));
                i += 1;
            }
            b')' => {
                out.push((i, Tok::Close));
                i += 1;
            }
            c if c.is_ascii_whitespace() => i += 1,
            _ => {
                let start = i;
                while i < bytes.len()
                    && !bytes[i].is_ascii_whitespace()
                    && bytes[i] != b'('
                    && bytes[i] != b')'
                {
                    i += 1;
                }
                out.push((start, Tok::Atom(&input[start..i])));
            }
        }
    }
    out
}

pub(crate) fn unescape(word: &str) -> String {
    match word {
        "-LRB-" => "(".into(),
        "-RRB-" => ")".into(),
        "-LSB-" => "[".into(),
        "-RSB-" => "]".into(),
        "-LCB-" => "{".into(),
        "-RCB-" => "}".into(),
        w => w.to_string(),
    }
}

fn escape(word: &str) -> &str {
    match word {
        "(" => "-LRB-",
        ")" => "-RRB-",
        w => w,
    }
}

enum Raw {
    Node(String, Vec<Raw>),
    Word(String),
}

struct Parser<'a> {
    toks: Vec<(usize, Tok<'a>)>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, message: &str) -> ParseError {
        let offset = self.toks.get(self.pos).map(|t| t.0).unwrap_or(usize::MAX);
        ParseError::Bracket {
            offset,
            message: message.to_string(),
        }
    }

    fn tree(&mut self) -> Result<Raw, ParseError> {
        match self.toks.get(self.pos) {
            Some((_, Tok::Open)) => self.pos += 1,
            _ => return Err(self.err("expected `(`")),
        }
        let label = match self.toks.get(self.pos) {
            Some((_, Tok::Atom(a))) => {
                self.pos += 1;
                a.to_string()
            }
            _ => String::new(),
        };
        let mut children = Vec::new();
        loop {
            match self.toks.get(self.pos) {
                Some((_, Tok::Close)) => {
                    self.pos += 1;
                    break;
                }
                Some((_, Tok::Open)) => children.push(self.tree()?),
                Some((_, Tok::Atom(a))) => {
                    children.push(Raw::Word(unescape(a)));
                    self.pos += 1;
                }
                None => return Err(self.err("unbalanced brackets: missing `)`")),
            }
        }
        if children.is_empty() {
            return Err(self.err("empty constituent"));
        }
        Ok(Raw::Node(label, children))
    }
}

pub fn parse_bracketed(input: &str) -> Result<ConstituencyTree, ParseError> {
    let mut parser = Parser {
        toks: lex(input),
        pos: 0,
    };
    let mut raw = parser.tree()?;
    if parser.pos != parser.toks.len() {
        return Err(parser.err("trailing input after tree"));
    }
    // `( (S ...) )` wrapper used by many treebanks.
    loop {
        match raw {
            Raw::Node(ref label, ref mut children)
                if label.is_empty()
                    && children.len() == 1
                    && matches!(children[0], Raw::Node(..)) =>
            {
                raw = children.pop().unwrap();
            }
            _ => break,
        }
    }

    let mut nodes = Vec::new();
    let mut tokens = Vec::new();
    let root = build(&raw, 0, &mut nodes, &mut tokens);
    Ok(ConstituencyTree {
        nodes,
        root,
        tokens,
    })
}

fn build(raw: &Raw, depth: usize, nodes: &mut Vec<TreeNode>, tokens: &mut Vec<String>) -> usize {
    match raw {
        // `(TAG word)` collapses into one leaf carrying the tag.
        Raw::Node(label, children)
            if children.len() == 1 && matches!(children[0], Raw::Word(_)) =>
        {
            let Raw::Word(w) = &children[0] else {
                unreachable!()
            };
            push_leaf(label, w, depth, nodes, tokens)
        }
        Raw::Word(w) => push_leaf("", w, depth, nodes, tokens),
        Raw::Node(label, children) => {
            let id = nodes.len();
            nodes.push(TreeNode {
                label: label.clone(),
                children: Vec::new(),
                start: tokens.len(),
                end: tokens.len(),
                depth,
                word: None,
            });
            let kids: Vec<usize> = children
                .iter()
                .map(|c| build(c, depth + 1, nodes, tokens))
                .collect();
            nodes[id].children = kids;
            nodes[id].end = tokens.len();
            id
        }
    }
}

fn push_leaf(
    tag: &str,
    word: &str,
    depth: usize,
    nodes: &mut Vec<TreeNode>,
    tokens: &mut Vec<String>,
) -> usize {
    let id = nodes.len();
    let index = tokens.len();
    tokens.push(word.to_string());
    nodes.push(TreeNode {
        label: tag.to_string(),
        children: Vec::new(),
        start: index,
        end: index + 1,
        depth,
        word: Some(word.to_string()),
    });
    id
}

pub fn write_bracketed(tree: &ConstituencyTree) -> String {
    let mut out = String::new();
    write_node(tree, tree.root, &mut out);
    out
}

fn write_node(tree: &ConstituencyTree, id: usize, out: &mut String) {
    let node = &tree.nodes[id];
    if let Some(word) = &node.word {
        if node.label.is_empty() {
            out.push_str(escape(word));
        } else {
            out.push('(');
            out.push_str(&node.label);
            out.push(' ');
            out.push_str(escape(word));
            out.push(')');
        }
        return;
    }
    out.push('(');
    out.push_str(&node.label);
    for &c in &node.children {
        out.push(' ');
        write_node(tree, c, out);
    }
    out.push(')');
}
