//! Generalized hypertree decompositions: enumeration at minimum fractional
//! width, heuristic tie-breaking, and selection push-down.

mod lp;

use std::cmp::Reverse;
use std::collections::HashMap;
use std::rc::Rc;

use num_rational::BigRational;
use num_traits::{One, Zero};

pub use lp::{node_width, MAX_EDGES};

use crate::error::{Error, Result};
use crate::ir::Hypergraph;

const CANDIDATE_CAP: usize = 2048;

#[derive(Clone, Debug, PartialEq)]
pub struct GhdNode {
    /// χ(t), sorted vertex ids.
    pub vertices: Vec<usize>,
    /// Edges evaluated in this node.
    pub edges: Vec<usize>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub width: BigRational,
    /// Node holding one selected edge pushed below its original node.
    pub selection_child: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ghd {
    /// Node 0 is the root.
    pub nodes: Vec<GhdNode>,
    pub width: BigRational,
}

impl Ghd {
    pub fn root(&self) -> usize {
        0
    }

    pub fn depth(&self, mut n: usize) -> usize {
        let mut d = 0;
        while let Some(p) = self.nodes[n].parent {
            n = p;
            d += 1;
        }
        d
    }

    /// Longest root-to-leaf path, counted in tree edges.
    pub fn height(&self) -> usize {
        (0..self.nodes.len()).map(|n| self.depth(n)).max().unwrap_or(0)
    }

    /// Nodes in depth-first preorder.
    pub fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![0];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(self.nodes[n].children.iter().rev());
        }
        out
    }

    /// Nodes ordered so that children precede their parents.
    pub fn postorder(&self) -> Vec<usize> {
        let mut out = self.preorder();
        out.reverse();
        out
    }

    pub fn subtree(&self, n: usize) -> Vec<usize> {
        let mut out = vec![n];
        let mut i = 0;
        while i < out.len() {
            out.extend(self.nodes[out[i]].children.iter().copied());
            i += 1;
        }
        out
    }

    /// Vertices shared by each adjacent pair, summed over tree edges.
    pub fn shared_vertices(&self) -> usize {
        self.nodes.iter().filter_map(|t| t.parent.map(|p| (t, &self.nodes[p]))).map(|(c, p)| c.vertices.iter().filter(|v| p.vertices.contains(v)).count()).sum()
    }

    /// Depth summed over the nodes holding selected edges.
    pub fn selection_depth(&self, hg: &Hypergraph) -> usize {
        (0..self.nodes.len())
            .map(|n| self.nodes[n].edges.iter().filter(|&&e| hg.edges[e].has_selection(hg, e) && !hg.edges[e].is_nullary()).count() * self.depth(n))
            .sum()
    }

    /// Checks edge coverage, tree shape, and the running intersection
    /// property.
    pub fn validate(&self, hg: &Hypergraph) -> Result<()> {
        let fail = |m: String| Err(Error::Internal(format!("invalid decomposition: {m}")));
        if self.nodes.is_empty() || self.nodes[0].parent.is_some() {
            return fail("missing root".into());
        }
        for (i, t) in self.nodes.iter().enumerate() {
            for &c in &t.children {
                if self.nodes.get(c).and_then(|n| n.parent) != Some(i) {
                    return fail(format!("node {c} does not point back to {i}"));
                }
            }
            if i > 0 && t.parent.is_none_or(|p| !self.nodes[p].children.contains(&i)) {
                return fail(format!("node {i} is detached"));
            }
        }
        if self.preorder().len() != self.nodes.len() {
            return fail("nodes unreachable from the root".into());
        }
        for (e, edge) in hg.edges.iter().enumerate() {
            let homes: Vec<usize> = (0..self.nodes.len()).filter(|&n| self.nodes[n].edges.contains(&e)).collect();
            if homes.len() != 1 {
                return fail(format!("edge {} is placed {} times", edge.name, homes.len()));
            }
            if edge.is_nullary() && homes[0] != 0 {
                return fail(format!("nullary edge {} is not at the root", edge.name));
            }
            if !edge.vertices.iter().all(|v| self.nodes[homes[0]].vertices.contains(v)) {
                return fail(format!("edge {} is not covered by its node", edge.name));
            }
        }
        for v in 0..hg.vertices.len() {
            let tops = (0..self.nodes.len())
                .filter(|&n| self.nodes[n].vertices.contains(&v))
                .filter(|&n| self.nodes[n].parent.is_none_or(|p| !self.nodes[p].vertices.contains(&v)))
                .count();
            if tops != 1 {
                return fail(format!("vertex {} violates running intersection", hg.vertices[v].name));
            }
        }
        let width = self.nodes.iter().map(|n| n.width.clone()).max().unwrap_or_else(BigRational::zero);
        if width != self.width {
            return fail("plan width differs from the node maximum".into());
        }
        Ok(())
    }
}

#[derive(Debug)]
struct Tree {
    bag: u64,
    assigned: u32,
    children: Vec<Rc<Tree>>,
}

struct Enumerator<'a> {
    hg: &'a Hypergraph,
    /// Global ids of the edges with vertices.
    ids: Vec<usize>,
    masks: Vec<u64>,
    colocate: Vec<u32>,
    widths: HashMap<u64, BigRational>,
    min_memo: HashMap<(u32, u64), Option<BigRational>>,
    all_memo: HashMap<(u32, u64), Rc<Vec<Rc<Tree>>>>,
    bound: BigRational,
}

fn bits(mask: u64) -> impl Iterator<Item = usize> {
    (0..64).filter(move |&i| mask >> i & 1 == 1)
}

impl<'a> Enumerator<'a> {
    fn new(hg: &'a Hypergraph) -> Result<Enumerator<'a>> {
        if hg.vertices.len() > 64 {
            return Err(Error::Plan(format!("at most 64 join attributes are supported, got {}", hg.vertices.len())));
        }
        let ids: Vec<usize> = (0..hg.edges.len()).filter(|&e| !hg.edges[e].is_nullary()).collect();
        if ids.len() > MAX_EDGES {
            return Err(Error::Plan(format!("at most {MAX_EDGES} joined relations are supported, got {}", ids.len())));
        }
        let masks = ids.iter().map(|&e| hg.edges[e].vertices.iter().fold(0u64, |m, &v| m | 1 << v)).collect();
        let colocate = hg.colocate.iter().map(|g| g.iter().filter_map(|e| ids.iter().position(|x| x == e)).fold(0u32, |m, i| m | 1 << i)).collect();
        Ok(Enumerator { hg, ids, masks, colocate, widths: HashMap::new(), min_memo: HashMap::new(), all_memo: HashMap::new(), bound: BigRational::zero() })
    }

    fn all_edges(&self) -> u32 {
        ((1u64 << self.ids.len()) - 1) as u32
    }

    fn vars(&self, edges: u32) -> u64 {
        bits(edges as u64).fold(0, |m, i| m | self.masks[i])
    }

    fn width(&mut self, bag: u64) -> BigRational {
        if let Some(w) = self.widths.get(&bag) {
            return w.clone();
        }
        let vertices: Vec<usize> = bits(bag).collect();
        let edges: Vec<Vec<usize>> = self.masks.iter().map(|&m| bits(m).collect()).collect();
        let w = node_width(&vertices, &edges).expect("bags are unions of edges");
        self.widths.insert(bag, w.clone());
        w
    }

    /// Candidate root bags for component `c` with interface `iface`, with
    /// the edges they absorb and the child components left over.
    fn bags(&self, c: u32, iface: u64) -> Vec<(u64, u32, Vec<(u32, u64)>)> {
        let mut seen: Vec<u64> = Vec::new();
        let mut s = c;
        while s != 0 {
            let bag = self.vars(s);
            if bag & iface == iface && !seen.contains(&bag) {
                seen.push(bag);
            }
            s = (s - 1) & c;
        }
        seen.sort_unstable();
        let mut out = Vec::new();
        for bag in seen {
            let assigned = bits(c as u64).filter(|&i| self.masks[i] & !bag == 0).fold(0u32, |m, i| m | 1 << i);
            if self.colocate.iter().any(|&g| assigned & g != 0 && assigned & g != g) {
                continue;
            }
            let mut rest = c & !assigned;
            let mut parts = Vec::new();
            while rest != 0 {
                let mut comp = 1u32 << rest.trailing_zeros();
                loop {
                    let reach = self.vars(comp) & !bag;
                    let grown = bits(rest as u64).filter(|&i| comp >> i & 1 == 1 || self.masks[i] & reach != 0).fold(0u32, |m, i| m | 1 << i);
                    if grown == comp {
                        break;
                    }
                    comp = grown;
                }
                rest &= !comp;
                parts.push((comp, self.vars(comp) & bag));
            }
            out.push((bag, assigned, parts));
        }
        out
    }

    fn min_width(&mut self, c: u32, iface: u64) -> Option<BigRational> {
        if let Some(w) = self.min_memo.get(&(c, iface)) {
            return w.clone();
        }
        let mut best: Option<BigRational> = None;
        for (bag, _, parts) in self.bags(c, iface) {
            let mut w = self.width(bag);
            let mut ok = true;
            for (k, i) in parts {
                match self.min_width(k, i) {
                    Some(kw) => w = w.max(kw),
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok && best.as_ref().is_none_or(|b| w < *b) {
                best = Some(w);
            }
        }
        self.min_memo.insert((c, iface), best.clone());
        best
    }

    fn all(&mut self, c: u32, iface: u64) -> Rc<Vec<Rc<Tree>>> {
        if let Some(v) = self.all_memo.get(&(c, iface)) {
            return v.clone();
        }
        let mut out: Vec<Rc<Tree>> = Vec::new();
        for (bag, assigned, parts) in self.bags(c, iface) {
            if self.width(bag) > self.bound {
                continue;
            }
            if parts.iter().any(|&(k, i)| self.min_width(k, i).is_none_or(|w| w > self.bound)) {
                continue;
            }
            let options: Vec<Rc<Vec<Rc<Tree>>>> = parts.iter().map(|&(k, i)| self.all(k, i)).collect();
            let mut combos: Vec<Vec<Rc<Tree>>> = vec![Vec::new()];
            for opts in &options {
                let mut next = Vec::new();
                'outer: for combo in &combos {
                    for o in opts.iter() {
                        let mut v = combo.clone();
                        v.push(o.clone());
                        next.push(v);
                        if next.len() >= CANDIDATE_CAP {
                            break 'outer;
                        }
                    }
                }
                combos = next;
            }
            for children in combos {
                out.push(Rc::new(Tree { bag, assigned, children }));
                if out.len() >= CANDIDATE_CAP {
                    break;
                }
            }
            if out.len() >= CANDIDATE_CAP {
                break;
            }
        }
        let out = Rc::new(out);
        self.all_memo.insert((c, iface), out.clone());
        out
    }

    fn to_ghd(&mut self, tree: &Tree) -> Ghd {
        let mut nodes = Vec::new();
        self.push_tree(tree, None, &mut nodes);
        let nullary: Vec<usize> = (0..self.hg.edges.len()).filter(|&e| self.hg.edges[e].is_nullary()).collect();
        nodes[0].edges.extend(nullary);
        let width = nodes.iter().map(|n: &GhdNode| n.width.clone()).max().unwrap();
        let mut ghd = Ghd { nodes, width };
        move_selections(&mut ghd, self.hg);
        ghd
    }

    fn push_tree(&mut self, tree: &Tree, parent: Option<usize>, nodes: &mut Vec<GhdNode>) -> usize {
        let id = nodes.len();
        let width = self.width(tree.bag);
        nodes.push(GhdNode {
            vertices: bits(tree.bag).collect(),
            edges: bits(tree.assigned as u64).map(|i| self.ids[i]).collect(),
            parent,
            children: Vec::new(),
            width,
            selection_child: false,
        });
        for c in &tree.children {
            let cid = self.push_tree(c, Some(id), nodes);
            nodes[id].children.push(cid);
        }
        id
    }
}

/// Moves each selected edge to the deepest node of its subtree that still
/// covers it.
fn move_selections(ghd: &mut Ghd, hg: &Hypergraph) {
    let colocated = |e: usize| hg.colocate.iter().any(|g| g.contains(&e));
    for n in ghd.preorder() {
        let selected: Vec<usize> =
            ghd.nodes[n].edges.iter().copied().filter(|&e| !hg.edges[e].is_nullary() && hg.edges[e].has_selection(hg, e) && !colocated(e)).collect();
        for e in selected {
            let target = ghd
                .subtree(n)
                .into_iter()
                .filter(|&t| hg.edges[e].vertices.iter().all(|v| ghd.nodes[t].vertices.contains(v)))
                .max_by_key(|&t| (ghd.depth(t), Reverse(t)))
                .unwrap();
            if target != n {
                ghd.nodes[n].edges.retain(|&x| x != e);
                ghd.nodes[target].edges.push(e);
                ghd.nodes[target].edges.sort_unstable();
            }
        }
    }
}

/// Structural signature used for the final deterministic tie-break.
fn canonical(ghd: &Ghd, hg: &Hypergraph, n: usize) -> String {
    let mut names: Vec<&str> = ghd.nodes[n].vertices.iter().map(|&v| hg.vertices[v].name.as_str()).collect();
    names.sort_unstable();
    let mut kids: Vec<String> = ghd.nodes[n].children.iter().map(|&c| canonical(ghd, hg, c)).collect();
    kids.sort();
    format!("{{{}}}{}", names.join(","), kids.iter().map(|k| format!("({k})")).collect::<String>())
}

/// All decompositions of minimum width, before selection push-down.
pub fn enumerate(hg: &Hypergraph) -> Result<Vec<Ghd>> {
    let mut en = Enumerator::new(hg)?;
    if en.ids.is_empty() {
        return Ok(vec![single_node(hg)]);
    }
    let all = en.all_edges();
    let best = en.min_width(all, 0).ok_or_else(|| Error::Plan("relations that must share a node cannot be co-located in any decomposition".into()))?;
    en.bound = best;
    let trees = en.all(all, 0);
    Ok(trees.iter().map(|t| en.to_ghd(t)).collect())
}

fn single_node(hg: &Hypergraph) -> Ghd {
    let vertices: Vec<usize> = (0..hg.vertices.len()).collect();
    let width = if vertices.is_empty() { BigRational::zero() } else { BigRational::one() };
    Ghd {
        nodes: vec![GhdNode {
            vertices,
            edges: (0..hg.edges.len()).collect(),
            parent: None,
            children: Vec::new(),
            width: width.clone(),
            selection_child: false,
        }],
        width,
    }
}

/// Picks the minimum-width decomposition, breaking ties by fewest nodes,
/// least height, fewest shared vertices, deepest selections, and finally a
/// canonical structural order. Width-one plans collapse into one node.
pub fn select(hg: &Hypergraph) -> Result<Ghd> {
    let mut candidates = enumerate(hg)?;
    let width = candidates[0].nodes.iter().map(|n| n.width.clone()).max().unwrap();
    if width <= BigRational::one() {
        return Ok(single_node(hg));
    }
    candidates.sort_by_cached_key(|g| {
        let key = canonical(g, hg, 0);
        (g.nodes.len(), g.height(), g.shared_vertices(), Reverse(g.selection_depth(hg)), Reverse(g.nodes[0].vertices.len()), key)
    });
    Ok(candidates.swap_remove(0))
}

/// Gives every selected edge that shares its node with other edges a child
/// node of its own.
pub fn push_down_selections(mut ghd: Ghd, hg: &Hypergraph) -> Ghd {
    let colocated = |e: usize| hg.colocate.iter().any(|g| g.contains(&e));
    for n in 0..ghd.nodes.len() {
        let base = ghd.nodes[n].edges.iter().filter(|&&e| !hg.edges[e].is_nullary()).count();
        if base <= 1 {
            continue;
        }
        let selected: Vec<usize> =
            ghd.nodes[n].edges.iter().copied().filter(|&e| !hg.edges[e].is_nullary() && hg.edges[e].has_selection(hg, e) && !colocated(e)).collect();
        for e in selected {
            ghd.nodes[n].edges.retain(|&x| x != e);
            let mut vertices = hg.edges[e].vertices.clone();
            vertices.sort_unstable();
            let id = ghd.nodes.len();
            ghd.nodes.push(GhdNode { vertices, edges: vec![e], parent: Some(n), children: Vec::new(), width: BigRational::one(), selection_child: true });
            ghd.nodes[n].children.push(id);
        }
    }
    ghd
}

/// Full planning pipeline: select, push selections down, validate.
pub fn plan(hg: &Hypergraph) -> Result<Ghd> {
    let ghd = push_down_selections(select(hg)?, hg);
    ghd.validate(hg)?;
    Ok(ghd)
}
