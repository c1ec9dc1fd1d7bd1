//! Vertex addresses, ordered trees and their depth-limited prefixes.
//!
//! A vertex is addressed by the sequence of child numbers on the path from
//! the root, e.g. `(2, 1)` is the first child of the root's second child. A
//! tree belongs to the class handled here when it contains the root and is
//! closed under taking parents and elder siblings; such a tree is fully
//! described by the child count of each vertex listed in depth-first
//! preorder, which is the stored form.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Largest size `enumerate_trees` accepts unless told otherwise.
pub const DEFAULT_ENUMERATION_CAP: u64 = 12;

/// Path of child numbers from the root; the empty path is the root.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VertexAddress(Vec<u32>);

impl VertexAddress {
    pub fn root() -> Self {
        VertexAddress(Vec::new())
    }

    pub fn new(path: Vec<u32>) -> Result<Self> {
        if path.contains(&0) {
            return Err(domain("address components start at 1"));
        }
        Ok(VertexAddress(path))
    }

    pub fn path(&self) -> &[u32] {
        &self.0
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn parent(&self) -> Result<VertexAddress> {
        match self.0.split_last() {
            Some((_, rest)) => Ok(VertexAddress(rest.to_vec())),
            None => Err(domain("the root has no parent")),
        }
    }

    /// The next older sibling, or `None` for a first child.
    pub fn elder_sibling(&self) -> Result<Option<VertexAddress>> {
        match self.0.split_last() {
            None => Err(domain("the root has no siblings")),
            Some((&1, _)) => Ok(None),
            Some((&last, rest)) => {
                let mut path = rest.to_vec();
                path.push(last - 1);
                Ok(Some(VertexAddress(path)))
            }
        }
    }

    pub fn child(&self, i: u32) -> VertexAddress {
        assert!(i >= 1);
        let mut path = self.0.clone();
        path.push(i);
        VertexAddress(path)
    }

    /// Concatenation `(u, v)`; the root is neutral on both sides.
    pub fn concat(&self, other: &VertexAddress) -> VertexAddress {
        let mut path = self.0.clone();
        path.extend_from_slice(&other.0);
        VertexAddress(path)
    }
}

impl fmt::Display for VertexAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("o");
        }
        f.write_char('(')?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_char(',')?;
            }
            write!(f, "{c}")?;
        }
        f.write_char(')')
    }
}

/// Checks that a preorder child-count sequence describes exactly one tree.
fn validate_degrees(degrees: &[u32]) -> Result<()> {
    if degrees.is_empty() {
        return Err(domain("a tree has at least the root"));
    }
    let mut open: i64 = 1;
    for (i, &d) in degrees.iter().enumerate() {
        open += d as i64 - 1;
        if open == 0 && i + 1 != degrees.len() {
            return Err(domain(format!("child counts close the tree early at position {i}")));
        }
    }
    if open != 0 {
        return Err(domain("child counts leave unfilled child slots"));
    }
    Ok(())
}

/// `ends[i]` is one past the last preorder index in the subtree of `i`.
pub(crate) fn subtree_ends(degrees: &[u32]) -> Vec<usize> {
    let n = degrees.len();
    let mut ends = vec![0usize; n];
    for i in (0..n).rev() {
        let mut c = i + 1;
        for _ in 0..degrees[i] {
            c = ends[c];
        }
        ends[i] = c;
    }
    ends
}

/// Visits vertices in preorder with their address path.
pub(crate) fn for_each_vertex(degrees: &[u32], mut f: impl FnMut(usize, &[u32])) {
    let mut path: Vec<u32> = Vec::new();
    let mut remaining: Vec<u32> = Vec::new();
    for (i, &d) in degrees.iter().enumerate() {
        f(i, &path);
        if d > 0 {
            path.push(1);
            remaining.push(d - 1);
            continue;
        }
        while let Some(r) = remaining.last_mut() {
            if *r > 0 {
                *r -= 1;
                *path.last_mut().expect("path tracks stack") += 1;
                break;
            }
            remaining.pop();
            path.pop();
        }
    }
}

pub(crate) fn depths(degrees: &[u32]) -> Vec<u32> {
    let mut out = vec![0; degrees.len()];
    for_each_vertex(degrees, |i, path| out[i] = path.len() as u32);
    out
}

/// Preorder index of the vertex at `addr`, if present.
fn locate(degrees: &[u32], ends: &[usize], addr: &VertexAddress) -> Option<usize> {
    let mut idx = 0usize;
    for &c in addr.path() {
        if c > degrees[idx] {
            return None;
        }
        let mut child = idx + 1;
        for _ in 1..c {
            child = ends[child];
        }
        idx = child;
    }
    Some(idx)
}

fn encode_into(degrees: &[u32], frontier: Option<&[bool]>, out: &mut String) {
    // stack of children still to close per open node
    let mut stack: Vec<(u32, usize)> = Vec::new();
    for (i, &d) in degrees.iter().enumerate() {
        if let Some((left, _)) = stack.last() {
            if *left > 0 && out.ends_with(']') || out.ends_with('*') {
                out.push(',');
            }
        }
        out.push('[');
        stack.push((d, i));
        while let Some(&(left, idx)) = stack.last() {
            if left > 0 {
                break;
            }
            out.push(']');
            if frontier.is_some_and(|f| f[idx]) {
                out.push('*');
            }
            stack.pop();
            if let Some(top) = stack.last_mut() {
                top.0 -= 1;
            }
        }
    }
}

/// Parses nested brackets; returns child counts and frontier markers.
fn decode_brackets(text: &str) -> Result<(Vec<u32>, Vec<bool>)> {
    let bytes = text.as_bytes();
    let mut pos = 0usize;
    let skip_ws = |pos: &mut usize| {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
    };
    let err = |position: usize, message: &str| Error::Parse {
        position,
        message: message.to_string(),
    };
    let mut degrees = Vec::new();
    let mut frontier = Vec::new();
    // indices of currently open nodes
    let mut open: Vec<usize> = Vec::new();
    skip_ws(&mut pos);
    loop {
        if pos >= bytes.len() {
            return Err(err(pos, "unexpected end of input"));
        }
        if bytes[pos] != b'[' {
            return Err(err(pos, "expected '['"));
        }
        if let Some(&parent) = open.last() {
            degrees[parent] += 1;
        }
        degrees.push(0);
        frontier.push(false);
        open.push(degrees.len() - 1);
        pos += 1;
        skip_ws(&mut pos);
        // close as many nodes as the input says, then expect ',' or finish
        loop {
            if pos < bytes.len() && bytes[pos] == b'[' {
                break;
            }
            if pos >= bytes.len() {
                return Err(err(pos, "unexpected end of input"));
            }
            if bytes[pos] != b']' {
                return Err(err(pos, "expected '[' or ']'"));
            }
            let node = open.pop().ok_or_else(|| err(pos, "unbalanced ']'"))?;
            pos += 1;
            if pos < bytes.len() && bytes[pos] == b'*' {
                frontier[node] = true;
                pos += 1;
            }
            skip_ws(&mut pos);
            if open.is_empty() {
                if pos != bytes.len() {
                    return Err(err(pos, "trailing characters after tree"));
                }
                return Ok((degrees, frontier));
            }
            if pos < bytes.len() && bytes[pos] == b',' {
                pos += 1;
                skip_ws(&mut pos);
                if pos >= bytes.len() || bytes[pos] != b'[' {
                    return Err(err(pos, "expected '[' after ','"));
                }
                break;
            }
        }
    }
}

fn dot_from(degrees: &[u32], frontier: Option<&[bool]>) -> String {
    let mut labels = Vec::with_capacity(degrees.len());
    for_each_vertex(degrees, |_, path| labels.push(VertexAddress(path.to_vec()).to_string()));
    let mut out = String::from("digraph tree {\n");
    for (i, label) in labels.iter().enumerate() {
        let shape = if frontier.is_some_and(|f| f[i]) { ", shape=doublecircle" } else { "" };
        let _ = writeln!(out, "  v{i} [label=\"{label}\"{shape}];");
    }
    let ends = subtree_ends(degrees);
    for (i, &d) in degrees.iter().enumerate() {
        let mut c = i + 1;
        for _ in 0..d {
            let _ = writeln!(out, "  v{i} -> v{c};");
            c = ends[c];
        }
    }
    out.push_str("}\n");
    out
}

/// A finite tree of the class, stored as preorder child counts.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OrderedTree {
    degrees: Vec<u32>,
}

impl OrderedTree {
    pub fn singleton() -> Self {
        OrderedTree { degrees: vec![0] }
    }

    pub fn from_degrees(degrees: Vec<u32>) -> Result<Self> {
        validate_degrees(&degrees)?;
        Ok(OrderedTree { degrees })
    }

    pub(crate) fn from_degrees_unchecked(degrees: Vec<u32>) -> Self {
        debug_assert!(validate_degrees(&degrees).is_ok());
        OrderedTree { degrees }
    }

    /// Builds a tree from its vertex set, checking membership in the class.
    pub fn from_vertices<I: IntoIterator<Item = VertexAddress>>(vertices: I) -> Result<Self> {
        let set: std::collections::BTreeSet<VertexAddress> = vertices.into_iter().collect();
        if !set.contains(&VertexAddress::root()) {
            return Err(domain("vertex set lacks the root"));
        }
        let mut child_count: BTreeMap<&VertexAddress, u32> = BTreeMap::new();
        let mut parents = Vec::new();
        for v in &set {
            if v.is_root() {
                continue;
            }
            let parent = v.parent()?;
            if !set.contains(&parent) {
                return Err(domain(format!("{v} present without its parent")));
            }
            if let Some(elder) = v.elder_sibling()? {
                if !set.contains(&elder) {
                    return Err(domain(format!("{v} present without its elder sibling")));
                }
            }
            parents.push(parent);
        }
        for p in &parents {
            let v = set.get(p).expect("checked above");
            *child_count.entry(v).or_insert(0) += 1;
        }
        // BTreeSet order on paths is exactly preorder
        let degrees = set.iter().map(|v| child_count.get(v).copied().unwrap_or(0)).collect();
        Ok(OrderedTree { degrees })
    }

    pub fn degrees(&self) -> &[u32] {
        &self.degrees
    }

    pub fn size(&self) -> usize {
        self.degrees.len()
    }

    pub fn root_degree(&self) -> u32 {
        self.degrees[0]
    }

    /// All vertex addresses in preorder.
    pub fn vertices(&self) -> Vec<VertexAddress> {
        let mut out = Vec::with_capacity(self.degrees.len());
        for_each_vertex(&self.degrees, |_, path| out.push(VertexAddress(path.to_vec())));
        out
    }

    pub fn has_vertex(&self, v: &VertexAddress) -> bool {
        locate(&self.degrees, &subtree_ends(&self.degrees), v).is_some()
    }

    pub fn height(&self) -> u32 {
        depths(&self.degrees).into_iter().max().unwrap_or(0)
    }

    /// Descendants of `v` (including `v`) shifted so that `v` becomes the
    /// root; `None` when `v` is not a vertex.
    pub fn subtree(&self, v: &VertexAddress) -> Option<OrderedTree> {
        let ends = subtree_ends(&self.degrees);
        let idx = locate(&self.degrees, &ends, v)?;
        Some(OrderedTree {
            degrees: self.degrees[idx..ends[idx]].to_vec(),
        })
    }

    /// Preorder indices of leaves that are last children; removing any one
    /// of them leaves a tree of the class.
    pub fn removable_leaves(&self) -> Vec<usize> {
        let ends = subtree_ends(&self.degrees);
        let mut out = Vec::new();
        for (i, &d) in self.degrees.iter().enumerate() {
            let mut c = i + 1;
            for j in 0..d {
                if j + 1 == d && self.degrees[c] == 0 {
                    out.push(c);
                }
                c = ends[c];
            }
        }
        out
    }

    /// Removes the removable leaf at preorder index `idx`.
    pub fn remove_leaf(&self, idx: usize) -> OrderedTree {
        assert!(idx > 0 && self.degrees[idx] == 0, "not a leaf");
        let parent = self.parent_index(idx);
        let mut degrees = self.degrees.clone();
        degrees[parent] -= 1;
        degrees.remove(idx);
        OrderedTree::from_degrees_unchecked(degrees)
    }

    /// Appends a new last child below the vertex at preorder index `idx`.
    pub fn append_child(&self, idx: usize) -> OrderedTree {
        let ends = subtree_ends(&self.degrees);
        let mut degrees = self.degrees.clone();
        degrees[idx] += 1;
        degrees.insert(ends[idx], 0);
        OrderedTree::from_degrees_unchecked(degrees)
    }

    fn parent_index(&self, idx: usize) -> usize {
        let ends = subtree_ends(&self.degrees);
        let mut j = idx;
        while j > 0 {
            j -= 1;
            if ends[j] > idx && self.degrees[j] > 0 {
                // deepest ancestor: the first one found scanning left whose
                // subtree covers idx and whose children include idx
                let mut c = j + 1;
                for _ in 0..self.degrees[j] {
                    if c == idx {
                        return j;
                    }
                    c = ends[c];
                }
            }
        }
        panic!("root has no parent")
    }

    /// The depth-`horizon` prefix as a truncated tree with no frontier.
    pub fn truncate(&self, horizon: u32) -> TruncatedTree {
        let mut degrees = Vec::new();
        for_each_vertex(&self.degrees, |i, path| {
            let depth = path.len() as u32;
            if depth < horizon {
                degrees.push(self.degrees[i]);
            } else if depth == horizon {
                degrees.push(0);
            }
        });
        let n = degrees.len();
        TruncatedTree {
            degrees,
            frontier: vec![false; n],
            horizon,
            status: TruncationStatus::Clean,
        }
    }

    /// Canonical bracket text, e.g. `[[],[[]]]`.
    pub fn encode(&self) -> String {
        let mut s = String::with_capacity(self.degrees.len() * 3);
        encode_into(&self.degrees, None, &mut s);
        s
    }

    pub fn decode(text: &str) -> Result<OrderedTree> {
        let (degrees, frontier) = decode_brackets(text)?;
        if frontier.iter().any(|&f| f) {
            return Err(Error::Parse {
                position: text.find('*').unwrap_or(0),
                message: "frontier markers are only valid for truncated trees".into(),
            });
        }
        Ok(OrderedTree { degrees })
    }

    pub fn to_dot(&self) -> String {
        dot_from(&self.degrees, None)
    }
}

impl fmt::Display for OrderedTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode())
    }
}

/// Why a truncated tree cannot be trusted as an exact prefix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TruncationReason {
    /// A plain tree still had living vertices at the depth cap.
    DepthCap,
    /// The total-size cap was reached.
    SizeCap,
    /// More children than the breadth cap allows.
    BreadthCap,
    /// A finite subtree size beyond the representable range.
    OversizeSubtree,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum TruncationStatus {
    #[default]
    Clean,
    Compromised(Vec<TruncationReason>),
}

impl TruncationStatus {
    pub fn is_clean(&self) -> bool {
        matches!(self, TruncationStatus::Clean)
    }

    pub fn add(&mut self, reason: TruncationReason) {
        match self {
            TruncationStatus::Clean => *self = TruncationStatus::Compromised(vec![reason]),
            TruncationStatus::Compromised(rs) => {
                if !rs.contains(&reason) {
                    rs.push(reason);
                    rs.sort();
                }
            }
        }
    }

    pub fn merge(&mut self, other: &TruncationStatus) {
        if let TruncationStatus::Compromised(rs) = other {
            for &r in rs {
                self.add(r);
            }
        }
    }
}

/// A depth-limited view of a possibly infinite tree.
///
/// Vertices deeper than `horizon` are dropped. A vertex at depth `horizon`
/// is a frontier vertex when it roots an infinite subtree that was not
/// explored.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TruncatedTree {
    degrees: Vec<u32>,
    frontier: Vec<bool>,
    horizon: u32,
    status: TruncationStatus,
}

impl std::hash::Hash for TruncationStatus {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        match self {
            TruncationStatus::Clean => 0u8.hash(state),
            TruncationStatus::Compromised(rs) => rs.hash(state),
        }
    }
}

impl TruncatedTree {
    /// A lone root at horizon 0 marked as unexplored-infinite.
    pub fn frontier_leaf() -> Self {
        TruncatedTree {
            degrees: vec![0],
            frontier: vec![true],
            horizon: 0,
            status: TruncationStatus::Clean,
        }
    }

    /// A lone root at horizon 0 that is not infinite.
    pub fn point() -> Self {
        TruncatedTree {
            degrees: vec![0],
            frontier: vec![false],
            horizon: 0,
            status: TruncationStatus::Clean,
        }
    }

    /// Root at horizon `horizon` whose children are the given prefixes of
    /// horizon `horizon - 1`, in order.
    pub fn from_children(horizon: u32, children: &[TruncatedTree]) -> Self {
        assert!(horizon >= 1 || children.is_empty());
        let n = 1 + children.iter().map(|c| c.size()).sum::<usize>();
        let mut degrees = Vec::with_capacity(n);
        let mut frontier = Vec::with_capacity(n);
        let mut status = TruncationStatus::Clean;
        degrees.push(children.len() as u32);
        frontier.push(false);
        for c in children {
            assert_eq!(c.horizon + 1, horizon, "child prefixes must be one level shallower");
            degrees.extend_from_slice(&c.degrees);
            frontier.extend_from_slice(&c.frontier);
            status.merge(&c.status);
        }
        TruncatedTree {
            degrees,
            frontier,
            horizon,
            status,
        }
    }

    pub fn from_parts(degrees: Vec<u32>, frontier: Vec<bool>, horizon: u32) -> Result<Self> {
        validate_degrees(&degrees)?;
        if frontier.len() != degrees.len() {
            return Err(domain("frontier flags must match vertex count"));
        }
        let d = depths(&degrees);
        for (i, &depth) in d.iter().enumerate() {
            if depth > horizon {
                return Err(domain(format!("vertex deeper than horizon {horizon}")));
            }
            if depth == horizon && degrees[i] != 0 {
                return Err(domain("vertices at the horizon cannot have children"));
            }
            if frontier[i] && depth != horizon {
                return Err(domain("frontier vertices must sit at the horizon"));
            }
        }
        Ok(TruncatedTree {
            degrees,
            frontier,
            horizon,
            status: TruncationStatus::Clean,
        })
    }

    pub(crate) fn from_raw(degrees: Vec<u32>, frontier: Vec<bool>, horizon: u32, status: TruncationStatus) -> Self {
        debug_assert!(validate_degrees(&degrees).is_ok() && frontier.len() == degrees.len());
        TruncatedTree {
            degrees,
            frontier,
            horizon,
            status,
        }
    }

    pub fn degrees(&self) -> &[u32] {
        &self.degrees
    }

    pub fn frontier(&self) -> &[bool] {
        &self.frontier
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn status(&self) -> &TruncationStatus {
        &self.status
    }

    pub fn is_clean(&self) -> bool {
        self.status.is_clean()
    }

    pub fn status_mut(&mut self) -> &mut TruncationStatus {
        &mut self.status
    }

    pub fn mark(&mut self, reason: TruncationReason) {
        self.status.add(reason);
    }

    pub fn size(&self) -> usize {
        self.degrees.len()
    }

    pub fn root_degree(&self) -> u32 {
        self.degrees[0]
    }

    pub fn frontier_count(&self) -> usize {
        self.frontier.iter().filter(|&&f| f).count()
    }

    /// Vertex addresses in preorder.
    pub fn vertices(&self) -> Vec<VertexAddress> {
        let mut out = Vec::with_capacity(self.degrees.len());
        for_each_vertex(&self.degrees, |_, path| out.push(VertexAddress(path.to_vec())));
        out
    }

    /// Frontier vertex addresses.
    pub fn frontier_vertices(&self) -> Vec<VertexAddress> {
        let mut out = Vec::new();
        for_each_vertex(&self.degrees, |i, path| {
            if self.frontier[i] {
                out.push(VertexAddress(path.to_vec()));
            }
        });
        out
    }

    /// Prefix of the `i`-th root child (1-based), one level shallower.
    pub fn child_prefix(&self, i: u32) -> Option<TruncatedTree> {
        if i == 0 || i > self.degrees[0] {
            return None;
        }
        let ends = subtree_ends(&self.degrees);
        let mut c = 1;
        for _ in 1..i {
            c = ends[c];
        }
        Some(TruncatedTree {
            degrees: self.degrees[c..ends[c]].to_vec(),
            frontier: self.frontier[c..ends[c]].to_vec(),
            horizon: self.horizon - 1,
            status: self.status.clone(),
        })
    }

    /// For each root child, whether its prefix reaches a frontier vertex.
    pub fn root_children_infinite(&self) -> Vec<bool> {
        let ends = subtree_ends(&self.degrees);
        let mut out = Vec::with_capacity(self.degrees[0] as usize);
        let mut c = 1;
        for _ in 0..self.degrees[0] {
            out.push(self.frontier[c..ends[c]].iter().any(|&f| f));
            c = ends[c];
        }
        out
    }

    /// Cuts this prefix down to a shallower horizon; vertices that still
    /// lead to the frontier become frontier vertices themselves.
    pub fn truncate(&self, horizon: u32) -> TruncatedTree {
        if horizon >= self.horizon {
            return self.clone();
        }
        let ends = subtree_ends(&self.degrees);
        let mut degrees = Vec::new();
        let mut frontier = Vec::new();
        for_each_vertex(&self.degrees, |i, path| {
            let depth = path.len() as u32;
            if depth < horizon {
                degrees.push(self.degrees[i]);
                frontier.push(false);
            } else if depth == horizon {
                degrees.push(0);
                frontier.push(self.frontier[i..ends[i]].iter().any(|&f| f));
            }
        });
        TruncatedTree {
            degrees,
            frontier,
            horizon,
            status: self.status.clone(),
        }
    }

    /// Vertex-set union of two prefixes with the same horizon; a vertex is
    /// frontier if it is frontier in either input.
    pub fn union(&self, other: &TruncatedTree) -> TruncatedTree {
        assert_eq!(self.horizon, other.horizon, "union needs a common horizon");
        let ea = subtree_ends(&self.degrees);
        let eb = subtree_ends(&other.degrees);
        let mut degrees = Vec::with_capacity(self.size().max(other.size()));
        let mut frontier = Vec::with_capacity(degrees.capacity());
        union_rec(self, &ea, Some(0), other, &eb, Some(0), &mut degrees, &mut frontier);
        let mut status = self.status.clone();
        status.merge(&other.status);
        TruncatedTree {
            degrees,
            frontier,
            horizon: self.horizon,
            status,
        }
    }

    /// Canonical bracket text; frontier vertices carry a `*` suffix.
    pub fn encode(&self) -> String {
        let mut s = String::with_capacity(self.degrees.len() * 3);
        encode_into(&self.degrees, Some(&self.frontier), &mut s);
        s
    }

    /// Parses bracket text at the given horizon.
    pub fn decode(text: &str, horizon: u32) -> Result<TruncatedTree> {
        let (degrees, frontier) = decode_brackets(text)?;
        TruncatedTree::from_parts(degrees, frontier, horizon)
    }

    pub fn to_dot(&self) -> String {
        dot_from(&self.degrees, Some(&self.frontier))
    }
}

#[allow(clippy::too_many_arguments)]
fn union_rec(
    a: &TruncatedTree,
    ea: &[usize],
    ia: Option<usize>,
    b: &TruncatedTree,
    eb: &[usize],
    ib: Option<usize>,
    degrees: &mut Vec<u32>,
    frontier: &mut Vec<bool>,
) {
    let da = ia.map_or(0, |i| a.degrees[i]);
    let db = ib.map_or(0, |i| b.degrees[i]);
    degrees.push(da.max(db));
    frontier.push(ia.is_some_and(|i| a.frontier[i]) || ib.is_some_and(|i| b.frontier[i]));
    let mut ca = ia.map(|i| i + 1);
    let mut cb = ib.map(|i| i + 1);
    for j in 0..da.max(db) {
        let xa = if j < da { ca } else { None };
        let xb = if j < db { cb } else { None };
        union_rec(a, ea, xa, b, eb, xb, degrees, frontier);
        if let Some(x) = xa {
            ca = Some(ea[x]);
        }
        if let Some(x) = xb {
            cb = Some(eb[x]);
        }
    }
}

/// Anything with a preorder child-count form and an optional depth horizon.
pub trait TreeShape {
    fn shape_degrees(&self) -> &[u32];
    fn shape_horizon(&self) -> Option<u32>;
}

impl TreeShape for OrderedTree {
    fn shape_degrees(&self) -> &[u32] {
        &self.degrees
    }
    fn shape_horizon(&self) -> Option<u32> {
        None
    }
}

impl TreeShape for TruncatedTree {
    fn shape_degrees(&self) -> &[u32] {
        &self.degrees
    }
    fn shape_horizon(&self) -> Option<u32> {
        Some(self.horizon)
    }
}

/// `V(a) ⊆ V(b)`, compared up to the smaller horizon of the two.
pub fn contains<A: TreeShape + ?Sized, B: TreeShape + ?Sized>(a: &A, b: &B) -> bool {
    first_missing(a, b).is_none()
}

/// First vertex (in preorder of `a`) present in `a` but not in `b`, up to
/// the common horizon.
pub fn first_missing<A: TreeShape + ?Sized, B: TreeShape + ?Sized>(a: &A, b: &B) -> Option<VertexAddress> {
    let horizon = match (a.shape_horizon(), b.shape_horizon()) {
        (Some(x), Some(y)) => x.min(y),
        (Some(x), None) | (None, Some(x)) => x,
        (None, None) => u32::MAX,
    };
    let da = a.shape_degrees();
    let db = b.shape_degrees();
    let ea = subtree_ends(da);
    let eb = subtree_ends(db);

    struct Frame {
        ai: usize,
        next: u32,
        ca: usize,
        cb: usize,
    }
    let mut path: Vec<u32> = Vec::new();
    let check = |ai: usize, bi: usize, depth: usize, path: &[u32]| -> Option<VertexAddress> {
        if depth as u32 >= horizon {
            return None;
        }
        if da[ai] > db[bi] {
            let mut p = path.to_vec();
            p.push(db[bi] + 1);
            return Some(VertexAddress(p));
        }
        None
    };
    if let Some(w) = check(0, 0, 0, &path) {
        return Some(w);
    }
    if horizon == 0 {
        return None;
    }
    let mut stack = vec![Frame {
        ai: 0,
        next: 0,
        ca: 1,
        cb: 1,
    }];
    loop {
        let depth = stack.len() as u32;
        let Some(top) = stack.last_mut() else { break };
        if top.next == da[top.ai] || depth > horizon {
            stack.pop();
            path.pop();
            continue;
        }
        let (ca, cb) = (top.ca, top.cb);
        top.next += 1;
        let label = top.next;
        top.ca = ea[ca];
        top.cb = eb[cb];
        path.push(label);
        if let Some(w) = check(ca, cb, path.len(), &path) {
            return Some(w);
        }
        if path.len() as u32 >= horizon {
            path.pop();
            continue;
        }
        stack.push(Frame {
            ai: ca,
            next: 0,
            ca: ca + 1,
            cb: cb + 1,
        });
    }
    None
}

/// Every tree of the class with exactly `k` vertices, ordered
/// lexicographically by preorder child counts.
pub fn enumerate_trees(k: u64, cap: u64) -> Result<Vec<OrderedTree>> {
    if k == 0 {
        return Err(domain("tree sizes start at 1"));
    }
    if k > cap {
        return Err(Error::Resource(format!("enumeration of size {k} exceeds cap {cap}")));
    }
    let k = k as usize;
    let mut out = Vec::new();
    let mut word = Vec::with_capacity(k);
    fn rec(word: &mut Vec<u32>, open: usize, k: usize, out: &mut Vec<OrderedTree>) {
        let left = k - word.len();
        if left == 0 {
            out.push(OrderedTree { degrees: word.clone() });
            return;
        }
        // after this vertex `left - 1` vertices remain to fill open + d - 1 slots
        for d in 0..left {
            let next_open = open + d - 1;
            let ok = if left == 1 { next_open == 0 } else { next_open >= 1 && next_open < left };
            if next_open > left - 1 {
                break;
            }
            if ok {
                word.push(d as u32);
                rec(word, next_open, k, out);
                word.pop();
            }
        }
    }
    rec(&mut word, 1, k, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::catalan;
    use std::collections::BTreeSet;

    fn addr(p: &[u32]) -> VertexAddress {
        VertexAddress::new(p.to_vec()).unwrap()
    }

    fn tree(vs: &[&[u32]]) -> OrderedTree {
        OrderedTree::from_vertices(vs.iter().map(|p| addr(p))).unwrap()
    }

    #[test]
    fn parent_examples() {
        assert_eq!(addr(&[3, 1]).parent().unwrap(), addr(&[3]));
        assert_eq!(addr(&[1]).parent().unwrap(), VertexAddress::root());
        assert_eq!(addr(&[2, 5, 1]).parent().unwrap(), addr(&[2, 5]));
        assert!(VertexAddress::root().parent().is_err());
    }

    #[test]
    fn elder_sibling_examples() {
        assert_eq!(addr(&[3]).elder_sibling().unwrap(), Some(addr(&[2])));
        assert_eq!(addr(&[2, 1]).elder_sibling().unwrap(), None);
        assert_eq!(addr(&[1, 4]).elder_sibling().unwrap(), Some(addr(&[1, 3])));
        assert!(VertexAddress::root().elder_sibling().is_err());
        assert!(VertexAddress::new(vec![1, 0]).is_err());
    }

    #[test]
    fn concat_treats_root_as_neutral() {
        let u = addr(&[2, 1]);
        assert_eq!(u.concat(&VertexAddress::root()), u);
        assert_eq!(VertexAddress::root().concat(&u), u);
        assert_eq!(u.concat(&addr(&[3])), addr(&[2, 1, 3]));
        assert_eq!(u.to_string(), "(2,1)");
        assert_eq!(VertexAddress::root().to_string(), "o");
    }

    #[test]
    fn class_membership_is_enforced() {
        assert!(OrderedTree::from_vertices([addr(&[1])]).is_err());
        assert!(OrderedTree::from_vertices([VertexAddress::root(), addr(&[2])]).is_err());
        assert!(OrderedTree::from_vertices([VertexAddress::root(), addr(&[1, 1])]).is_err());
        assert!(OrderedTree::from_degrees(vec![1, 0, 0]).is_err());
        assert!(OrderedTree::from_degrees(vec![2, 0]).is_err());
        assert!(OrderedTree::from_degrees(vec![]).is_err());
    }

    #[test]
    fn contains_examples() {
        let a = tree(&[&[], &[1]]);
        let b = tree(&[&[], &[1], &[2]]);
        let c = tree(&[&[], &[1], &[1, 1]]);
        assert!(contains(&a, &b));
        assert!(!contains(&b, &c));
        assert_eq!(first_missing(&b, &c), Some(addr(&[2])));
        assert!(contains(&b, &b));
        assert!(!contains(&c, &b));
        assert_eq!(first_missing(&c, &b), Some(addr(&[1, 1])));
    }

    #[test]
    fn contains_respects_horizons() {
        let deep = tree(&[&[], &[1], &[1, 1], &[1, 1, 1]]);
        let shallow = tree(&[&[], &[1]]);
        assert!(!contains(&deep, &shallow));
        assert!(contains(&deep.truncate(1), &shallow));
        assert!(contains(&deep, &shallow.truncate(1)));
        assert!(!contains(&deep, &shallow.truncate(2)));
        assert!(contains(&deep.truncate(0), &OrderedTree::singleton()));
    }

    #[test]
    fn subtree_examples() {
        let t = tree(&[&[], &[1], &[1, 1]]);
        assert_eq!(t.subtree(&addr(&[1])).unwrap(), tree(&[&[], &[1]]));
        assert_eq!(tree(&[&[], &[1]]).subtree(&addr(&[2])), None);
        assert_eq!(t.subtree(&VertexAddress::root()).unwrap(), t);
    }

    #[test]
    fn enumerate_examples() {
        let t3 = enumerate_trees(3, 12).unwrap();
        assert_eq!(t3, vec![tree(&[&[], &[1], &[1, 1]]), tree(&[&[], &[1], &[2]])]);
        assert_eq!(enumerate_trees(1, 12).unwrap(), vec![OrderedTree::singleton()]);
        assert_eq!(enumerate_trees(4, 12).unwrap().len(), 5);
        assert!(matches!(enumerate_trees(13, 12), Err(Error::Resource(_))));
    }

    #[test]
    fn enumeration_counts_are_catalan_and_distinct() {
        for k in 1..=10u64 {
            let all = enumerate_trees(k, 12).unwrap();
            assert_eq!(num_bigint::BigUint::from(all.len()), catalan(k), "k = {k}");
            let set: BTreeSet<_> = all.iter().collect();
            assert_eq!(set.len(), all.len());
            assert!(all.windows(2).all(|w| w[0] < w[1]), "canonical order");
            for t in &all {
                let rebuilt = OrderedTree::from_vertices(t.vertices()).unwrap();
                assert_eq!(&rebuilt, t);
            }
        }
    }

    #[test]
    fn every_tree_has_a_removable_leaf() {
        for k in 2..=10u64 {
            let smaller: BTreeSet<OrderedTree> = enumerate_trees(k - 1, 12).unwrap().into_iter().collect();
            for t in enumerate_trees(k, 12).unwrap() {
                let leaves = t.removable_leaves();
                assert!(!leaves.is_empty());
                for idx in leaves {
                    let s = t.remove_leaf(idx);
                    assert!(smaller.contains(&s));
                    assert!(contains(&s, &t));
                }
            }
        }
    }

    #[test]
    fn containment_is_a_partial_order() {
        let all: Vec<OrderedTree> = (1..=6).flat_map(|k| enumerate_trees(k, 12).unwrap()).collect();
        let sets: Vec<BTreeSet<VertexAddress>> = all.iter().map(|t| t.vertices().into_iter().collect()).collect();
        for (i, a) in all.iter().enumerate() {
            assert!(contains(a, a));
            for (j, b) in all.iter().enumerate() {
                let ab = contains(a, b);
                assert_eq!(ab, sets[i].is_subset(&sets[j]), "{a} vs {b}");
                if ab && contains(b, a) {
                    assert_eq!(i, j);
                }
            }
        }
        for a in &all {
            for b in all.iter().filter(|b| contains(a, *b)) {
                for c in all.iter().filter(|c| contains(b, *c)) {
                    assert!(contains(a, c));
                }
            }
        }
    }

    #[test]
    fn text_form_examples() {
        assert_eq!(OrderedTree::singleton().encode(), "[]");
        assert_eq!(tree(&[&[], &[1], &[2]]).encode(), "[[],[]]");
        assert_eq!(OrderedTree::decode("[[[]]]").unwrap(), tree(&[&[], &[1], &[1, 1]]));
        assert_eq!(OrderedTree::decode("[[],[[]]]").unwrap().degrees(), &[2, 0, 1, 0]);
        assert_eq!(OrderedTree::decode(" [ [ ] , [ ] ] ").unwrap().encode(), "[[],[]]");
    }

    #[test]
    fn malformed_text_reports_position() {
        for (text, pos) in [("[", 1), ("[]]", 2), ("[[],]", 4), ("x", 0), ("[[]", 3), ("[][]", 2)] {
            match OrderedTree::decode(text) {
                Err(Error::Parse { position, .. }) => assert_eq!(position, pos, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
        assert!(OrderedTree::decode("[[]*]").is_err());
    }

    #[test]
    fn round_trip_all_small_trees() {
        for k in 1..=10u64 {
            for t in enumerate_trees(k, 12).unwrap() {
                assert_eq!(OrderedTree::decode(&t.encode()).unwrap(), t);
            }
        }
    }

    #[test]
    fn truncated_text_and_union() {
        let t = TruncatedTree::decode("[[]*,[[]]]", 2).unwrap_err();
        assert!(matches!(t, Error::Domain(_)));
        let a = TruncatedTree::decode("[[[]*],[]]", 2).unwrap();
        assert_eq!(a.encode(), "[[[]*],[]]");
        assert_eq!(a.frontier_vertices(), vec![addr(&[1, 1])]);
        assert_eq!(a.root_children_infinite(), vec![true, false]);
        let b = TruncatedTree::decode("[[],[[],[]],[]]", 2).unwrap();
        let u = a.union(&b);
        assert_eq!(u.encode(), "[[[]*],[[],[]],[]]");
        assert!(contains(&a, &u) && contains(&b, &u));
        assert_eq!(a.truncate(1).encode(), "[[]*,[]]");
        assert_eq!(a.child_prefix(1).unwrap().encode(), "[[]*]");
    }

    #[test]
    fn from_children_concatenates() {
        let kids = [TruncatedTree::frontier_leaf(), TruncatedTree::point()];
        let t = TruncatedTree::from_children(1, &kids);
        assert_eq!(t.encode(), "[[]*,[]]");
        let deeper = TruncatedTree::from_children(2, std::slice::from_ref(&t));
        assert_eq!(deeper.encode(), "[[[]*,[]]]");
    }

    #[test]
    fn append_and_remove_are_inverse() {
        let t = OrderedTree::decode("[[[]],[]]").unwrap();
        for idx in 0..t.size() {
            let bigger = t.append_child(idx);
            assert!(contains(&t, &bigger));
            assert_eq!(bigger.size(), t.size() + 1);
            let leaf = bigger
                .removable_leaves()
                .into_iter()
                .find(|&l| bigger.remove_leaf(l) == t)
                .expect("appended leaf is removable");
            assert_eq!(bigger.remove_leaf(leaf), t);
        }
    }

    #[test]
    fn dot_lists_parent_edges() {
        let dot = OrderedTree::decode("[[],[]]").unwrap().to_dot();
        assert!(dot.contains("label=\"(2)\""));
        assert_eq!(dot.matches("->").count(), 2);
    }

    proptest::proptest! {
        #[test]
        fn truncated_round_trip(bits in proptest::collection::vec(0u32..3, 1..40)) {
            // build an arbitrary valid child-count word by clamping
            let mut degrees = Vec::new();
            let mut open = 1i64;
            for b in bits {
                if open == 0 { break; }
                let d = if open == 1 && degrees.len() > 30 { 0 } else { b };
                degrees.push(d);
                open += d as i64 - 1;
            }
            while open > 0 { degrees.push(0); open -= 1; }
            let t = OrderedTree::from_degrees(degrees).unwrap();
            proptest::prop_assert_eq!(OrderedTree::decode(&t.encode()).unwrap(), t.clone());
            let h = t.height().min(3);
            let tr = t.truncate(h);
            proptest::prop_assert_eq!(TruncatedTree::decode(&tr.encode(), h).unwrap(), tr.clone());
            proptest::prop_assert!(contains(&tr, &t) && contains(&t, &tr));
        }
    }
}
