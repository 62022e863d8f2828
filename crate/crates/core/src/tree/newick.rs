//! Newick reading and canonical writing.
//!
//! The reader accepts rooted syntax and returns an unrooted tree: a root of
//! degree 2 (and any other unlabelled degree-2 vertex) is suppressed, and
//! the two branch values meeting there are merged with a [`Composition`].
//! Internal node names are ignored.
//!
//! The writer is byte-deterministic. The output hangs the tree from the
//! edge joining the smallest label's neighbour `u` to the child of `u`
//! whose smallest descendant label is largest, and orders every child list
//! by smallest descendant label.

use std::fmt::Display;

use super::{EdgeId, Skeleton, Tree, VertexId};
use crate::error::{Error, Result};

/// How branch values merge when a degree-2 vertex is suppressed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Composition {
    /// Probability scale for the two-state symmetric channel:
    /// `½(1 − (1−2a)(1−2b))`.
    #[default]
    Disagreement,
    /// Length scale: `a + b`.
    Additive,
}

impl Composition {
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            Composition::Disagreement => 0.5 * (1.0 - (1.0 - 2.0 * a) * (1.0 - 2.0 * b)),
            Composition::Additive => a + b,
        }
    }

    fn merge(self, a: &Option<f64>, b: &Option<f64>) -> Option<f64> {
        match (a, b) {
            (Some(x), Some(y)) => Some(self.apply(*x, *y)),
            (Some(x), None) | (None, Some(x)) => Some(*x),
            (None, None) => None,
        }
    }
}

/// Parses Newick text, merging root-adjacent branch values as branch
/// probabilities.
pub fn parse_newick(text: &str) -> Result<Tree> {
    parse_newick_with(text, Composition::default())
}

pub fn parse_newick_with(text: &str, composition: Composition) -> Result<Tree> {
    let mut p = Parser { s: text.as_bytes(), pos: 0, sk: Skeleton::new() };
    p.skip_ws()?;
    let (_root, _root_len) = p.node()?;
    p.skip_ws()?;
    if p.peek() != Some(b';') {
        return Err(p.err("expected `;`"));
    }
    p.pos += 1;
    p.skip_ws()?;
    if p.pos != p.s.len() {
        return Err(p.err("trailing characters after `;`"));
    }
    let mut sk = p.sk;
    let leaves = sk.num_labelled();
    if leaves < 2 {
        return Err(Error::TooFewLeaves { needed: 2, got: leaves });
    }
    sk.suppress_degree_two(|a, b| composition.merge(a, b));
    let (tree, annotations) = sk.finish()?;
    Ok(tree.with_annotations(annotations))
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    sk: Skeleton<Option<f64>>,
}

const DELIMITERS: &[u8] = b"(),:;[]' \t\r\n";

impl Parser<'_> {
    fn err(&self, message: &str) -> Error {
        Error::Syntax { position: self.pos, message: message.to_string() }
    }

    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    /// Skips whitespace and `[...]` comments.
    fn skip_ws(&mut self) -> Result<()> {
        loop {
            match self.peek() {
                Some(c) if c.is_ascii_whitespace() => self.pos += 1,
                Some(b'[') => {
                    let start = self.pos;
                    while self.peek().is_some_and(|c| c != b']') {
                        self.pos += 1;
                    }
                    if self.peek().is_none() {
                        self.pos = start;
                        return Err(self.err("unterminated comment"));
                    }
                    self.pos += 1;
                }
                _ => return Ok(()),
            }
        }
    }

    fn node(&mut self) -> Result<(VertexId, Option<f64>)> {
        self.skip_ws()?;
        let v = if self.peek() == Some(b'(') {
            self.pos += 1;
            let v = self.sk.add_vertex(None);
            loop {
                let (child, len) = self.node()?;
                self.sk.add_edge(v, child, len);
                self.skip_ws()?;
                match self.peek() {
                    Some(b',') => self.pos += 1,
                    Some(b')') => {
                        self.pos += 1;
                        break;
                    }
                    _ => return Err(self.err("expected `,` or `)`")),
                }
            }
            self.skip_ws()?;
            // internal node names (support values etc.) are dropped
            let _ = self.label()?;
            v
        } else {
            match self.label()? {
                Some(name) => self.sk.add_vertex(Some(name)),
                None => return Err(self.err("expected leaf label")),
            }
        };
        self.skip_ws()?;
        let len = if self.peek() == Some(b':') {
            self.pos += 1;
            self.skip_ws()?;
            Some(self.number()?)
        } else {
            None
        };
        Ok((v, len))
    }

    fn label(&mut self) -> Result<Option<String>> {
        if self.peek() == Some(b'\'') {
            let start = self.pos;
            self.pos += 1;
            let mut out = Vec::new();
            loop {
                match self.peek() {
                    None => {
                        self.pos = start;
                        return Err(self.err("unterminated quoted label"));
                    }
                    Some(b'\'') if self.s.get(self.pos + 1) == Some(&b'\'') => {
                        out.push(b'\'');
                        self.pos += 2;
                    }
                    Some(b'\'') => {
                        self.pos += 1;
                        break;
                    }
                    Some(c) => {
                        out.push(c);
                        self.pos += 1;
                    }
                }
            }
            return String::from_utf8(out).map(Some).map_err(|_| self.err("invalid utf-8 in label"));
        }
        let start = self.pos;
        while self.peek().is_some_and(|c| !DELIMITERS.contains(&c)) {
            self.pos += 1;
        }
        if start == self.pos {
            return Ok(None);
        }
        std::str::from_utf8(&self.s[start..self.pos])
            .map(|s| Some(s.to_string()))
            .map_err(|_| self.err("invalid utf-8 in label"))
    }

    fn number(&mut self) -> Result<f64> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit() || b"+-.eE".contains(&c)) {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.s[start..self.pos]).unwrap();
        text.parse::<f64>().map_err(|_| {
            let mut e = self.err("malformed branch value");
            if let Error::Syntax { position, .. } = &mut e {
                *position = start;
            }
            e
        })
    }
}

/// Canonical Newick without branch values.
pub fn write_newick(tree: &Tree) -> String {
    Writer::<f64> { tree, values: None }.write()
}

/// Canonical Newick with `:value` on every edge. The hanging edge's value is
/// written on its lower side only, so reading the output back restores it.
pub fn write_newick_with_values<R: Display>(tree: &Tree, values: &[R]) -> String {
    assert_eq!(values.len(), tree.n_edges(), "one value per edge");
    Writer { tree, values: Some(values) }.write()
}

struct Writer<'a, R> {
    tree: &'a Tree,
    values: Option<&'a [R]>,
}

impl<R: Display> Writer<'_, R> {
    fn write(&self) -> String {
        let t = self.tree;
        let a = t.leaves()[0];
        let (u, ea) = t.neighbors(a)[0];
        let mut out = String::from("(");
        if t.is_leaf(u) {
            out.push_str(&quote(t.label(a).unwrap()));
            out.push(',');
            self.leaf(u, ea, &mut out);
            out.push_str(");");
            return out;
        }
        let mut children: Vec<(usize, VertexId, EdgeId)> = t
            .neighbors(u)
            .iter()
            .filter(|&&(w, _)| w != a)
            .map(|&(w, e)| (self.min_rank(w, u), w, e))
            .collect();
        children.sort_unstable();
        let (_, top, top_edge) = children.pop().unwrap();
        out.push('(');
        self.leaf(a, ea, &mut out);
        for &(_, w, e) in &children {
            out.push(',');
            self.subtree(w, u, e, &mut out);
        }
        out.push_str("),");
        self.subtree(top, u, top_edge, &mut out);
        out.push_str(");");
        out
    }

    fn min_rank(&self, v: VertexId, from: VertexId) -> usize {
        let t = self.tree;
        let mut best = usize::MAX;
        let mut stack = vec![(v, from)];
        while let Some((x, p)) = stack.pop() {
            if let Some(r) = t.leaf_rank(x) {
                best = best.min(r);
            }
            for &(y, _) in t.neighbors(x) {
                if y != p {
                    stack.push((y, x));
                }
            }
        }
        best
    }

    fn value(&self, e: EdgeId, out: &mut String) {
        if let Some(v) = self.values {
            out.push(':');
            out.push_str(&v[e].to_string());
        }
    }

    fn leaf(&self, v: VertexId, e: EdgeId, out: &mut String) {
        out.push_str(&quote(self.tree.label(v).unwrap()));
        self.value(e, out);
    }

    fn subtree(&self, v: VertexId, from: VertexId, e: EdgeId, out: &mut String) {
        let t = self.tree;
        if t.is_leaf(v) {
            self.leaf(v, e, out);
            return;
        }
        let mut children: Vec<(usize, VertexId, EdgeId)> = t
            .neighbors(v)
            .iter()
            .filter(|&&(w, _)| w != from)
            .map(|&(w, ce)| (self.min_rank(w, v), w, ce))
            .collect();
        children.sort_unstable();
        out.push('(');
        for (i, &(_, w, ce)) in children.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            self.subtree(w, v, ce, out);
        }
        out.push(')');
        self.value(e, out);
    }
}

fn quote(label: &str) -> String {
    if label.bytes().any(|c| DELIMITERS.contains(&c)) {
        format!("'{}'", label.replace('\'', "''"))
    } else {
        label.to_string()
    }
}
