//! SMILES subset parser producing connected molecular graphs.
//!
//! Supported: organic-subset atoms (`B C N O P S F Cl Br I` and aromatic
//! `b c n o p s`), bracket atoms with optional hydrogen count and formal
//! charge, branches, ring closures (`1`..`9`, `%nn`) and the bond symbols
//! `- = # :`. Stereo markers, isotopes, wildcards, atom classes and
//! multi-fragment input are rejected with [`MolParseError::UnsupportedFeature`].

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::Fnv1a;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MolParseError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("ring closure {label} was never closed")]
    RingUnclosed { label: u32 },
    #[error("unbalanced parenthesis at byte {pos}")]
    UnbalancedParen { pos: usize },
    #[error("unsupported SMILES feature at byte {pos}: {feature}")]
    UnsupportedFeature { pos: usize, feature: String },
}

/// Structural violations when assembling a graph by hand.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("molecule has no atoms")]
    Empty,
    #[error("bond {0}-{1} references a missing atom")]
    BadEndpoint(usize, usize),
    #[error("bond {0}-{0} is a self-loop")]
    SelfLoop(usize),
    #[error("duplicate bond between atoms {0} and {1}")]
    DuplicateBond(usize, usize),
    #[error("molecule is not connected")]
    Disconnected,
    #[error("atom index {found} at position {expected}")]
    BadIndex { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Element {
    B,
    C,
    N,
    O,
    P,
    S,
    F,
    Cl,
    Br,
    I,
}

impl Element {
    pub const ALL: [Element; 10] = [
        Element::B,
        Element::C,
        Element::N,
        Element::O,
        Element::P,
        Element::S,
        Element::F,
        Element::Cl,
        Element::Br,
        Element::I,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Element::B => "B",
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::P => "P",
            Element::S => "S",
            Element::F => "F",
            Element::Cl => "Cl",
            Element::Br => "Br",
            Element::I => "I",
        }
    }

    pub fn from_symbol(sym: &str) -> Option<Element> {
        Element::ALL.iter().copied().find(|e| e.symbol() == sym)
    }

    /// Position in [`Element::ALL`]; used for one-hot atom features.
    pub fn ordinal(self) -> usize {
        self as usize
    }

    /// Elements that may be written in lowercase aromatic form.
    fn aromatic_capable(self) -> bool {
        matches!(
            self,
            Element::B | Element::C | Element::N | Element::O | Element::P | Element::S
        )
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    pub const ALL: [BondOrder; 4] = [
        BondOrder::Single,
        BondOrder::Double,
        BondOrder::Triple,
        BondOrder::Aromatic,
    ];

    pub fn ordinal(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Atom {
    pub element: Element,
    pub formal_charge: i8,
    pub aromatic: bool,
    pub index: usize,
}

/// Undirected bond; `a < b` always holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

impl Bond {
    pub fn new(x: usize, y: usize, order: BondOrder) -> Self {
        let (a, b) = if x < y { (x, y) } else { (y, x) };
        Bond { a, b, order }
    }
}

/// A connected molecular graph with a precomputed neighbor index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MolecularGraph {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    adjacency: Vec<Vec<(usize, BondOrder)>>,
}

impl MolecularGraph {
    pub fn new(atoms: Vec<Atom>, bonds: Vec<Bond>) -> Result<Self, GraphError> {
        if atoms.is_empty() {
            return Err(GraphError::Empty);
        }
        for (i, atom) in atoms.iter().enumerate() {
            if atom.index != i {
                return Err(GraphError::BadIndex {
                    expected: i,
                    found: atom.index,
                });
            }
        }
        let n = atoms.len();
        let mut adjacency = vec![Vec::new(); n];
        let mut seen = std::collections::HashSet::new();
        for bond in &bonds {
            if bond.a == bond.b {
                return Err(GraphError::SelfLoop(bond.a));
            }
            if bond.a >= n || bond.b >= n {
                return Err(GraphError::BadEndpoint(bond.a, bond.b));
            }
            let key = (bond.a.min(bond.b), bond.a.max(bond.b));
            if !seen.insert(key) {
                return Err(GraphError::DuplicateBond(key.0, key.1));
            }
            adjacency[bond.a].push((bond.b, bond.order));
            adjacency[bond.b].push((bond.a, bond.order));
        }
        let bonds = bonds
            .into_iter()
            .map(|b| Bond::new(b.a, b.b, b.order))
            .collect();
        let g = MolecularGraph {
            atoms,
            bonds,
            adjacency,
        };
        if !g.is_connected() {
            return Err(GraphError::Disconnected);
        }
        Ok(g)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    pub fn neighbors(&self, atom: usize) -> &[(usize, BondOrder)] {
        &self.adjacency[atom]
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.adjacency[atom].len()
    }

    fn is_connected(&self) -> bool {
        let n = self.atoms.len();
        let mut visited = vec![false; n];
        let mut stack = vec![0usize];
        visited[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &(u, _) in &self.adjacency[v] {
                if !visited[u] {
                    visited[u] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
        count == n
    }

    /// Relabels atoms so that old atom `i` becomes new atom `perm[i]`.
    ///
    /// Panics if `perm` is not a permutation of `0..atom_count()`.
    pub fn permuted(&self, perm: &[usize]) -> MolecularGraph {
        let n = self.atoms.len();
        assert_eq!(perm.len(), n, "permutation length mismatch");
        let mut atoms: Vec<Option<Atom>> = vec![None; n];
        for (old, atom) in self.atoms.iter().enumerate() {
            let new = perm[old];
            assert!(atoms[new].is_none(), "not a permutation");
            atoms[new] = Some(Atom {
                index: new,
                ..atom.clone()
            });
        }
        let atoms = atoms.into_iter().map(|a| a.expect("not a permutation")).collect();
        let mut bonds: Vec<Bond> = self
            .bonds
            .iter()
            .map(|b| Bond::new(perm[b.a], perm[b.b], b.order))
            .collect();
        bonds.sort();
        MolecularGraph::new(atoms, bonds).expect("permutation preserves validity")
    }
}

/// Parses one SMILES string of the supported subset.
pub fn parse_smiles(input: &str) -> Result<MolecularGraph, MolParseError> {
    Parser::new(input)?.run()
}

/// Reads SMILES lines, skipping blanks and `#` comments. Returns `(line_no, smiles)` pairs.
pub fn smiles_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

struct RingOpen {
    atom: usize,
    bond: Option<BondOrder>,
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    rings: BTreeMap<u32, RingOpen>,
}

impl<'a> Parser<'a> {
    fn new(input: &'a str) -> Result<Self, MolParseError> {
        if input.is_empty() {
            return Err(MolParseError::Syntax {
                pos: 0,
                msg: "empty input".into(),
            });
        }
        if let Some(pos) = input.bytes().position(|b| !b.is_ascii_graphic()) {
            return Err(MolParseError::Syntax {
                pos,
                msg: "non-printable or non-ASCII byte".into(),
            });
        }
        Ok(Parser {
            bytes: input.as_bytes(),
            pos: 0,
            atoms: Vec::new(),
            bonds: Vec::new(),
            rings: BTreeMap::new(),
        })
    }

    fn syntax<T>(&self, pos: usize, msg: &str) -> Result<T, MolParseError> {
        Err(MolParseError::Syntax {
            pos,
            msg: msg.to_string(),
        })
    }

    fn unsupported<T>(&self, pos: usize, feature: &str) -> Result<T, MolParseError> {
        Err(MolParseError::UnsupportedFeature {
            pos,
            feature: feature.to_string(),
        })
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn run(mut self) -> Result<MolecularGraph, MolParseError> {
        // Previous atom on the current chain; one entry per open branch level.
        let mut stack: Vec<(usize, usize)> = Vec::new();
        let mut prev: Option<usize> = None;
        let mut pending_bond: Option<(BondOrder, usize)> = None;
        // True right after '(' until the first atom of the branch.
        let mut branch_empty = false;

        while let Some(c) = self.peek() {
            let start = self.pos;
            match c {
                b'(' => {
                    let Some(p) = prev else {
                        return self.syntax(start, "branch without preceding atom");
                    };
                    if pending_bond.is_some() {
                        return self.syntax(start, "bond symbol before '('");
                    }
                    if branch_empty {
                        return self.syntax(start, "empty branch");
                    }
                    stack.push((p, start));
                    branch_empty = true;
                    self.pos += 1;
                }
                b')' => {
                    if stack.is_empty() {
                        return Err(MolParseError::UnbalancedParen { pos: start });
                    }
                    if branch_empty {
                        return self.syntax(start, "empty branch");
                    }
                    if pending_bond.is_some() {
                        return self.syntax(start, "dangling bond before ')'");
                    }
                    let (p, _) = stack.pop().expect("checked non-empty");
                    prev = Some(p);
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' => {
                    if prev.is_none() {
                        return self.syntax(start, "bond without preceding atom");
                    }
                    if pending_bond.is_some() {
                        return self.syntax(start, "consecutive bond symbols");
                    }
                    let order = match c {
                        b'-' => BondOrder::Single,
                        b'=' => BondOrder::Double,
                        b'#' => BondOrder::Triple,
                        _ => BondOrder::Aromatic,
                    };
                    pending_bond = Some((order, start));
                    self.pos += 1;
                }
                b'/' | b'\\' => return self.unsupported(start, "directional (stereo) bond"),
                b'$' => return self.unsupported(start, "quadruple bond"),
                b'.' => return self.unsupported(start, "multi-fragment '.'"),
                b'*' => return self.unsupported(start, "wildcard atom"),
                b'@' => return self.unsupported(start, "chirality marker"),
                b'0'..=b'9' | b'%' => {
                    let Some(p) = prev else {
                        return self.syntax(start, "ring closure without preceding atom");
                    };
                    if branch_empty {
                        return self.syntax(start, "ring closure at branch start");
                    }
                    let label = self.ring_label()?;
                    let bond = pending_bond.take().map(|(o, _)| o);
                    self.ring_closure(p, label, bond, start)?;
                }
                b'[' | b'A'..=b'Z' | b'a'..=b'z' => {
                    let idx = if c == b'[' {
                        self.bracket_atom()?
                    } else {
                        self.organic_atom()?
                    };
                    if let Some(p) = prev {
                        let explicit = pending_bond.take().map(|(o, _)| o);
                        let order = explicit.unwrap_or_else(|| self.implicit_order(p, idx));
                        self.add_bond(p, idx, order, start)?;
                    } else if let Some((_, bpos)) = pending_bond {
                        return self.syntax(bpos, "bond without preceding atom");
                    }
                    prev = Some(idx);
                    branch_empty = false;
                }
                _ => return self.syntax(start, "unexpected character"),
            }
        }

        if let Some((_, pos)) = pending_bond {
            return self.syntax(pos, "trailing bond symbol");
        }
        if let Some(&(_, pos)) = stack.last() {
            return Err(MolParseError::UnbalancedParen { pos });
        }
        if let Some((&label, _)) = self.rings.iter().next() {
            return Err(MolParseError::RingUnclosed { label });
        }
        if self.atoms.is_empty() {
            return self.syntax(0, "no atoms");
        }
        let atoms = std::mem::take(&mut self.atoms);
        let bonds = std::mem::take(&mut self.bonds);
        MolecularGraph::new(atoms, bonds).map_err(|e| MolParseError::Syntax {
            pos: self.bytes.len(),
            msg: e.to_string(),
        })
    }

    fn implicit_order(&self, a: usize, b: usize) -> BondOrder {
        if self.atoms[a].aromatic && self.atoms[b].aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        }
    }

    fn add_bond(
        &mut self,
        a: usize,
        b: usize,
        order: BondOrder,
        pos: usize,
    ) -> Result<(), MolParseError> {
        if a == b {
            return self.syntax(pos, "ring closure onto the same atom");
        }
        let dup = self
            .bonds
            .iter()
            .any(|x| (x.a == a.min(b)) && (x.b == a.max(b)));
        if dup {
            return self.syntax(pos, "duplicate bond");
        }
        self.bonds.push(Bond::new(a, b, order));
        Ok(())
    }

    fn ring_label(&mut self) -> Result<u32, MolParseError> {
        let start = self.pos;
        match self.peek() {
            Some(b'%') => {
                let d1 = self.bytes.get(self.pos + 1).copied();
                let d2 = self.bytes.get(self.pos + 2).copied();
                match (d1, d2) {
                    (Some(a), Some(b)) if a.is_ascii_digit() && b.is_ascii_digit() => {
                        self.pos += 3;
                        Ok(u32::from(a - b'0') * 10 + u32::from(b - b'0'))
                    }
                    _ => self.syntax(start, "'%' must be followed by two digits"),
                }
            }
            Some(d) if d.is_ascii_digit() => {
                self.pos += 1;
                Ok(u32::from(d - b'0'))
            }
            _ => self.syntax(start, "expected ring label"),
        }
    }

    fn ring_closure(
        &mut self,
        atom: usize,
        label: u32,
        bond: Option<BondOrder>,
        pos: usize,
    ) -> Result<(), MolParseError> {
        match self.rings.remove(&label) {
            None => {
                self.rings.insert(label, RingOpen { atom, bond });
                Ok(())
            }
            Some(open) => {
                let order = match (open.bond, bond) {
                    (Some(x), Some(y)) if x != y => {
                        return self.syntax(pos, "conflicting ring-closure bond orders")
                    }
                    (Some(x), _) | (None, Some(x)) => x,
                    (None, None) => self.implicit_order(open.atom, atom),
                };
                self.add_bond(open.atom, atom, order, pos)
            }
        }
    }

    fn push_atom(&mut self, element: Element, aromatic: bool, charge: i8) -> usize {
        let index = self.atoms.len();
        self.atoms.push(Atom {
            element,
            formal_charge: charge,
            aromatic,
            index,
        });
        index
    }

    fn organic_atom(&mut self) -> Result<usize, MolParseError> {
        let start = self.pos;
        let c = self.bytes[start];
        let next = self.bytes.get(start + 1).copied();
        let (element, aromatic, len) = match (c, next) {
            (b'C', Some(b'l')) => (Element::Cl, false, 2),
            (b'B', Some(b'r')) => (Element::Br, false, 2),
            (b'B', _) => (Element::B, false, 1),
            (b'C', _) => (Element::C, false, 1),
            (b'N', _) => (Element::N, false, 1),
            (b'O', _) => (Element::O, false, 1),
            (b'P', _) => (Element::P, false, 1),
            (b'S', _) => (Element::S, false, 1),
            (b'F', _) => (Element::F, false, 1),
            (b'I', _) => (Element::I, false, 1),
            (b'b', _) => (Element::B, true, 1),
            (b'c', _) => (Element::C, true, 1),
            (b'n', _) => (Element::N, true, 1),
            (b'o', _) => (Element::O, true, 1),
            (b'p', _) => (Element::P, true, 1),
            (b's', _) => (Element::S, true, 1),
            _ => return self.syntax(start, "unknown organic-subset atom (use brackets)"),
        };
        self.pos += len;
        Ok(self.push_atom(element, aromatic, 0))
    }

    fn bracket_atom(&mut self) -> Result<usize, MolParseError> {
        let open = self.pos;
        let Some(rel_close) = self.bytes[open..].iter().position(|&b| b == b']') else {
            return self.syntax(open, "unterminated bracket atom");
        };
        let close = open + rel_close;
        let body = &self.bytes[open + 1..close];
        let mut i = 0usize;
        let at = |i: usize| open + 1 + i;

        if body.first().is_some_and(|b| b.is_ascii_digit()) {
            return self.unsupported(at(0), "isotope");
        }
        // Element symbol: uppercase + optional lowercase, or aromatic lowercase.
        let (element, aromatic) = match body.first() {
            Some(b'*') => return self.unsupported(at(0), "wildcard atom"),
            Some(&u) if u.is_ascii_uppercase() => {
                // Inside brackets a lowercase letter after the capital always
                // belongs to the element symbol.
                let len = if body.get(1).is_some_and(|l| l.is_ascii_lowercase()) { 2 } else { 1 };
                let sym = std::str::from_utf8(&body[..len]).unwrap_or_default();
                match Element::from_symbol(sym) {
                    Some(e) => {
                        i += len;
                        (e, false)
                    }
                    None => return self.unsupported(at(0), &format!("element {sym}")),
                }
            }
            Some(&l) if l.is_ascii_lowercase() => {
                let s = (l.to_ascii_uppercase() as char).to_string();
                match Element::from_symbol(&s) {
                    Some(e) if e.aromatic_capable() => {
                        i += 1;
                        (e, true)
                    }
                    _ => return self.unsupported(at(0), "aromatic element outside subset"),
                }
            }
            _ => return self.syntax(at(0), "bracket atom without element"),
        };
        if body.get(i) == Some(&b'@') {
            return self.unsupported(at(i), "chirality marker");
        }
        // Hydrogen count (implicit in the graph, accepted and ignored).
        if body.get(i) == Some(&b'H') {
            i += 1;
            while body.get(i).is_some_and(|b| b.is_ascii_digit()) {
                i += 1;
            }
        }
        let mut charge: i32 = 0;
        if let Some(&sign @ (b'+' | b'-')) = body.get(i) {
            let unit = if sign == b'+' { 1 } else { -1 };
            i += 1;
            if body.get(i).is_some_and(|b| b.is_ascii_digit()) {
                let mut mag = 0i32;
                while let Some(d) = body.get(i).filter(|b| b.is_ascii_digit()) {
                    mag = mag * 10 + i32::from(d - b'0');
                    if mag > 15 {
                        return self.syntax(at(i), "formal charge out of range");
                    }
                    i += 1;
                }
                charge = unit * mag;
            } else {
                charge = unit;
                while body.get(i) == Some(&sign) {
                    charge += unit;
                    i += 1;
                    if charge.abs() > 15 {
                        return self.syntax(at(i), "formal charge out of range");
                    }
                }
            }
        }
        match body.get(i) {
            None => {}
            Some(b':') => return self.unsupported(at(i), "atom class"),
            Some(_) => return self.syntax(at(i), "unexpected character in bracket atom"),
        }
        self.pos = close + 1;
        // Range-checked above.
        Ok(self.push_atom(element, aromatic, charge as i8))
    }
}

/// Canonical text key used to deduplicate molecules.
///
/// Colors are refined Weisfeiler-Leman style until the partition stops
/// growing; the key hashes the sorted color multiset together with the
/// sorted multiset of bond (color, color, order) triples.
pub fn graph_signature(g: &MolecularGraph) -> String {
    let n = g.atom_count();
    let mut colors: Vec<u64> = g
        .atoms()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let mut h = Fnv1a::new();
            h.write_u8(a.element.ordinal() as u8);
            h.write_i8(a.formal_charge);
            h.write_u8(u8::from(a.aromatic));
            h.write_u64(g.degree(i) as u64);
            h.finish()
        })
        .collect();
    let mut classes = distinct(&colors);
    for _ in 0..n {
        let next: Vec<u64> = (0..n)
            .map(|v| {
                let mut nbrs: Vec<(u8, u64)> = g
                    .neighbors(v)
                    .iter()
                    .map(|&(u, o)| (o.ordinal() as u8, colors[u]))
                    .collect();
                nbrs.sort_unstable();
                let mut h = Fnv1a::new();
                h.write_u64(colors[v]);
                for (o, c) in nbrs {
                    h.write_u8(o);
                    h.write_u64(c);
                }
                h.finish()
            })
            .collect();
        let next_classes = distinct(&next);
        colors = next;
        if next_classes == classes {
            break;
        }
        classes = next_classes;
    }
    let mut atom_colors = colors.clone();
    atom_colors.sort_unstable();
    let mut bond_keys: Vec<(u64, u64, u8)> = g
        .bonds()
        .iter()
        .map(|b| {
            let (x, y) = (colors[b.a], colors[b.b]);
            (x.min(y), x.max(y), b.order.ordinal() as u8)
        })
        .collect();
    bond_keys.sort_unstable();
    let mut h = Fnv1a::new();
    for c in atom_colors {
        h.write_u64(c);
    }
    h.write_u8(0xff);
    for (x, y, o) in bond_keys {
        h.write_u64(x);
        h.write_u64(y);
        h.write_u8(o);
    }
    format!("a{}b{}-{:016x}", n, g.bond_count(), h.finish())
}

fn distinct(colors: &[u64]) -> usize {
    let mut v = colors.to_vec();
    v.sort_unstable();
    v.dedup();
    v.len()
}
