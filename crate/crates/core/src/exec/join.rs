//! Generic worst-case optimal join over the inputs of one plan node.

use std::ops::Range;

use rayon::prelude::*;
use rustc_hash::FxHashMap;

use super::groupby::{finish_groups, AnnotationCodes, GroupKey, GroupSink, GroupVals, SharedTable};
use super::input::{BagEval, JoinInput, NodeRows};
use crate::plan::{Emit, GroupStrategy};
use crate::semiring::Semiring;
use crate::set::{gallop_to, intersect_many, Id, IntersectScratch, KeyUnionStrategy, SetConfig, SetView, UnionAccumulator};

pub(crate) struct DepthInfo {
    /// `(input, level)` pairs binding this depth's vertex.
    pub parts: Vec<(usize, usize)>,
    /// Inputs whose last level is bound here.
    pub complete: Vec<usize>,
    /// Bags whose last member completes here.
    pub bags: Vec<usize>,
    /// Key selection: `Some(None)` when the literal is absent from the data.
    pub fixed: Option<Option<Id>>,
    /// The single input iterated here when it also completes here and no
    /// bag needs the binding, so leaf values can be read directly.
    pub leaf_only: Option<usize>,
}

pub(crate) struct BagSlot<'a> {
    pub pass: usize,
    pub eval: BagEval<'a>,
    /// `(FROM index, input)` of each member.
    pub members: Vec<(usize, usize)>,
}

pub(crate) enum GroupPart {
    Key(usize),
    Code(AnnotationCodes),
}

pub(crate) struct NodeCtx<'a> {
    pub inputs: Vec<JoinInput>,
    pub order: Vec<usize>,
    pub depths: Vec<DepthInfo>,
    pub semirings: Vec<Semiring>,
    pub bags: Vec<BagSlot<'a>>,
    pub emit: Emit,
    /// Product of scalar factors applied before the first depth.
    pub init: Vec<f64>,
    pub union: KeyUnionStrategy,
    pub group: Vec<GroupPart>,
    pub config: SetConfig,
}

impl<'a> NodeCtx<'a> {
    /// Derives per-depth participants from the inputs' level vertices.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        inputs: Vec<JoinInput>,
        order: Vec<usize>,
        fixed: Vec<Option<Option<Id>>>,
        semirings: Vec<Semiring>,
        bags: Vec<BagSlot<'a>>,
        emit: Emit,
        init: Vec<f64>,
        union: KeyUnionStrategy,
        group: Vec<GroupPart>,
        config: SetConfig,
    ) -> NodeCtx<'a> {
        let n = order.len();
        let mut depths: Vec<DepthInfo> =
            fixed.into_iter().map(|f| DepthInfo { parts: Vec::new(), complete: Vec::new(), bags: Vec::new(), fixed: f, leaf_only: None }).collect();
        let depth_of = |v: usize| order.iter().position(|&x| x == v).expect("input vertex in order");
        let mut completes_at = vec![0usize; inputs.len()];
        for (i, input) in inputs.iter().enumerate() {
            for (l, &v) in input.vertices.iter().enumerate() {
                depths[depth_of(v)].parts.push((i, l));
            }
            let last = input.vertices.last().map_or(0, |&v| depth_of(v));
            completes_at[i] = last;
            if !input.vertices.is_empty() {
                depths[last].complete.push(i);
            }
        }
        for (b, slot) in bags.iter().enumerate() {
            let d = slot.members.iter().map(|&(_, i)| completes_at[i]).max().unwrap_or(0);
            if n > 0 {
                depths[d].bags.push(b);
            }
        }
        for info in &mut depths {
            if info.parts.len() == 1 && info.complete == [info.parts[0].0] && info.bags.is_empty() && info.fixed.is_none() {
                info.leaf_only = Some(info.parts[0].0);
            }
        }
        NodeCtx { inputs, order, depths, semirings, bags, emit, init, union, group, config }
    }

    fn passes(&self) -> usize {
        self.semirings.len()
    }

    fn emit_width(&self) -> usize {
        match self.emit {
            Emit::Prefix(m) => m,
            Emit::Relaxed => self.order.len() - 1,
            Emit::Grouped(_) => 0,
        }
    }

    /// Vertices of emitted rows, in column order.
    pub fn row_vertices(&self) -> Vec<usize> {
        match self.emit {
            Emit::Prefix(m) => self.order[..m].to_vec(),
            Emit::Relaxed => {
                let n = self.order.len();
                let mut v = self.order[..n - 2].to_vec();
                v.push(self.order[n - 1]);
                v
            }
            Emit::Grouped(_) => Vec::new(),
        }
    }

    fn relaxed_universe(&self) -> Range<Id> {
        let d = self.order.len() - 1;
        let mut lo = Id::MAX;
        let mut hi = 0;
        for &(i, l) in &self.depths[d].parts {
            let (a, b) = self.inputs[i].trie.level(l).universe();
            lo = lo.min(a);
            hi = hi.max(b);
        }
        if lo > hi {
            0..0
        } else {
            lo..hi
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct JoinStats {
    pub intersections: u64,
    pub intermediate_tuples: u64,
    pub emitted_rows: u64,
}

impl JoinStats {
    fn add(&mut self, o: &JoinStats) {
        self.intersections += o.intersections;
        self.intermediate_tuples += o.intermediate_tuples;
        self.emitted_rows += o.emitted_rows;
    }
}

pub(crate) enum NodeOutput {
    Rows(NodeRows),
    Groups(Vec<(GroupKey, GroupVals)>),
}

enum Cands<'c> {
    /// Members of a single set; position is `start + index`.
    Direct(&'c [Id], u32),
    Buf(Vec<Id>),
}

enum Sink<'s> {
    Rows { keys: Vec<Id>, vals: Vec<f64> },
    Group(GroupSink<'s>),
    Local(FxHashMap<GroupKey, GroupVals>),
    Flushed,
}

struct Worker<'c, 'a, 's> {
    ctx: &'c NodeCtx<'a>,
    n: usize,
    np: usize,
    pos: Vec<Vec<u32>>,
    bound: Vec<Id>,
    views: Vec<Vec<SetView<'c>>>,
    starts: Vec<Vec<u32>>,
    cursors: Vec<Vec<usize>>,
    bufs: Vec<Vec<Id>>,
    prefix: Vec<f64>,
    acc: Vec<f64>,
    scratch: IntersectScratch,
    stats: JoinStats,
    sink: Sink<'s>,
    top: Option<(&'c [Id], Option<u32>)>,
    union: Option<UnionAccumulator>,
    drain_keys: Vec<Id>,
    drain_vals: Vec<f64>,
}

impl<'c, 'a, 's> Worker<'c, 'a, 's> {
    fn new(ctx: &'c NodeCtx<'a>, sink: Sink<'s>) -> Self {
        let n = ctx.order.len();
        let np = ctx.passes();
        let mut prefix = vec![0.0; (n + 1) * np];
        prefix[..np].copy_from_slice(&ctx.init);
        let union = matches!(ctx.emit, Emit::Relaxed).then(|| UnionAccumulator::new(ctx.relaxed_universe(), ctx.semirings[0], ctx.union));
        Worker {
            ctx,
            n,
            np,
            pos: ctx.inputs.iter().map(|i| vec![0; i.vertices.len()]).collect(),
            bound: vec![0; n],
            views: (0..n).map(|_| Vec::new()).collect(),
            starts: (0..n).map(|_| Vec::new()).collect(),
            cursors: (0..n).map(|_| Vec::new()).collect(),
            bufs: (0..n).map(|_| Vec::new()).collect(),
            prefix,
            acc: vec![0.0; (n + 1) * np],
            scratch: IntersectScratch::default(),
            stats: JoinStats::default(),
            sink,
            top: None,
            union,
            drain_keys: Vec::new(),
            drain_vals: Vec::new(),
        }
    }

    fn enter(&mut self, d: usize) -> Cands<'c> {
        let ctx: &'c NodeCtx<'a> = self.ctx;
        let info = &ctx.depths[d];
        self.views[d].clear();
        self.starts[d].clear();
        self.cursors[d].clear();
        for &(i, l) in &info.parts {
            let set = if l == 0 { 0 } else { self.pos[i][l - 1] };
            let level = ctx.inputs[i].trie.level(l);
            self.views[d].push(level.set(set));
            self.starts[d].push(level.range(set).0);
            self.cursors[d].push(0);
        }
        if d == 0 {
            if let Some((ids, start)) = self.top {
                return match start {
                    Some(s) => Cands::Direct(ids, s),
                    None => {
                        let mut buf = std::mem::take(&mut self.bufs[0]);
                        buf.clear();
                        buf.extend_from_slice(ids);
                        Cands::Buf(buf)
                    }
                };
            }
        }
        let mut buf = std::mem::take(&mut self.bufs[d]);
        buf.clear();
        match info.fixed {
            Some(None) => {}
            Some(Some(x)) => {
                if self.views[d].iter().all(|v| v.contains(x)) {
                    buf.push(x);
                }
            }
            None if self.views[d].len() == 1 => {
                let v = self.views[d][0];
                self.bufs[d] = buf;
                return Cands::Direct(v.ids.expect("trie levels keep ids"), self.starts[d][0]);
            }
            None => {
                intersect_many(&self.views[d], &ctx.config, &mut self.scratch, &mut buf);
                self.stats.intersections += 1;
                self.stats.intermediate_tuples += buf.len() as u64;
            }
        }
        Cands::Buf(buf)
    }

    fn leave(&mut self, d: usize, c: Cands<'c>) {
        if let Cands::Buf(b) = c {
            self.bufs[d] = b;
        }
    }

    #[inline]
    fn bind(&mut self, d: usize, x: Id, direct: Option<u32>) {
        let ctx: &'c NodeCtx<'a> = self.ctx;
        let info = &ctx.depths[d];
        self.bound[d] = x;
        for (k, &(i, l)) in info.parts.iter().enumerate() {
            let p = match direct {
                Some(p) => p,
                None => {
                    let v = &self.views[d][k];
                    let r = match &v.bits {
                        Some(b) => b.rank(x),
                        None => {
                            let ids = v.ids.expect("trie levels keep ids");
                            let c = &mut self.cursors[d][k];
                            *c += gallop_to(&ids[*c..], x);
                            *c as u32
                        }
                    };
                    self.starts[d][k] + r
                }
            };
            self.pos[i][l] = p;
        }
        let np = self.np;
        let (lo, hi) = self.prefix.split_at_mut((d + 1) * np);
        let dst = &mut hi[..np];
        dst.copy_from_slice(&lo[d * np..]);
        for &i in &info.complete {
            let input = &ctx.inputs[i];
            let leaf = self.pos[i][input.vertices.len() - 1] as usize;
            for (p, vals) in input.values.iter().enumerate() {
                if let Some(v) = vals {
                    dst[p] = ctx.semirings[p].times(dst[p], v[leaf]);
                }
            }
        }
        for &b in &info.bags {
            let slot = &ctx.bags[b];
            let pos = &self.pos;
            let val = slot.eval.eval(&|rel| {
                let &(_, i) = slot.members.iter().find(|m| m.0 == rel).expect("bag member");
                let input = &ctx.inputs[i];
                let leaf = pos[i][input.vertices.len() - 1] as usize;
                input.leaf_rows.as_ref().expect("bag inputs keep rows")[leaf] as usize
            });
            dst[slot.pass] = ctx.semirings[slot.pass].times(dst[slot.pass], val);
        }
    }

    /// `⊕` over all bindings of depths `d..n` into `acc[d]`; false when there
    /// are none.
    fn fold(&mut self, d: usize) -> bool {
        let np = self.np;
        if d == self.n {
            self.acc[d * np..(d + 1) * np].copy_from_slice(&self.prefix[d * np..(d + 1) * np]);
            return true;
        }
        let c = self.enter(d);
        let (ids, start): (&[Id], Option<u32>) = match &c {
            Cands::Direct(ids, s) => (ids, Some(*s)),
            Cands::Buf(b) => (b, None),
        };
        let last = d + 1 == self.n;
        let semirings = &self.ctx.semirings;
        let mut found = false;
        if let (true, Some(i), Some(start)) = (last, self.ctx.depths[d].leaf_only, start) {
            let values = &self.ctx.inputs[i].values;
            let (prefix, acc) = (&self.prefix[d * np..(d + 1) * np], &mut self.acc[d * np..(d + 1) * np]);
            if !ids.is_empty() {
                for p in 0..np {
                    let s = semirings[p];
                    let total = match &values[p] {
                        Some(v) => v[start as usize..start as usize + ids.len()].iter().fold(s.zero(), |a, &x| s.plus(a, x)),
                        None => s.plus_n(s.one(), ids.len()),
                    };
                    acc[p] = s.times(prefix[p], total);
                }
                found = true;
            }
            self.leave(d, c);
            return found;
        }
        for (idx, &x) in ids.iter().enumerate() {
            self.bind(d, x, start.map(|s| s + idx as u32));
            if last {
                let src = &self.prefix[(d + 1) * np..(d + 2) * np];
                combine(&mut self.acc[d * np..(d + 1) * np], src, semirings, &mut found);
            } else if self.fold(d + 1) {
                let (head, tail) = self.acc.split_at_mut((d + 1) * np);
                combine(&mut head[d * np..], &tail[..np], semirings, &mut found);
            }
        }
        self.leave(d, c);
        found
    }

    /// Binds depths `d..m` and emits at the emit depth.
    fn descend(&mut self, d: usize, m: usize) {
        if d == m {
            self.emit(m);
            return;
        }
        let c = self.enter(d);
        let (ids, start): (&[Id], Option<u32>) = match &c {
            Cands::Direct(ids, s) => (ids, Some(*s)),
            Cands::Buf(b) => (b, None),
        };
        for (idx, &x) in ids.iter().enumerate() {
            self.bind(d, x, start.map(|s| s + idx as u32));
            self.descend(d + 1, m);
        }
        self.leave(d, c);
    }

    fn emit(&mut self, m: usize) {
        let np = self.np;
        match self.ctx.emit {
            Emit::Relaxed => return self.relaxed(m),
            Emit::Prefix(_) | Emit::Grouped(_) => {}
        }
        if !self.fold(m) {
            return;
        }
        let vals = &self.acc[m * np..(m + 1) * np];
        match &mut self.sink {
            Sink::Rows { keys, vals: out } => {
                keys.extend_from_slice(&self.bound[..m]);
                out.extend_from_slice(vals);
                self.stats.emitted_rows += 1;
            }
            Sink::Group(g) => {
                let key: GroupKey = self
                    .ctx
                    .group
                    .iter()
                    .map(|part| match part {
                        GroupPart::Key(d) => self.bound[*d],
                        GroupPart::Code(c) => c.code(&self.bound),
                    })
                    .collect();
                g.upsert(key, vals, &self.ctx.semirings);
            }
            Sink::Local(_) | Sink::Flushed => unreachable!("worker sinks finish after the join"),
        }
    }

    /// Depths `m` (projected) and `m + 1` (kept) are unioned per binding of
    /// the first `m` depths.
    fn relaxed(&mut self, m: usize) {
        let np = self.np;
        let mut acc = self.union.take().expect("relaxed accumulator");
        let c = self.enter(m);
        let (ids, start): (&[Id], Option<u32>) = match &c {
            Cands::Direct(ids, s) => (ids, Some(*s)),
            Cands::Buf(b) => (b, None),
        };
        for (idx, &x) in ids.iter().enumerate() {
            self.bind(m, x, start.map(|s| s + idx as u32));
            let inner = self.enter(m + 1);
            let (jids, jstart): (&[Id], Option<u32>) = match &inner {
                Cands::Direct(ids, s) => (ids, Some(*s)),
                Cands::Buf(b) => (b, None),
            };
            if let (Some(i), Some(s0)) = (self.ctx.depths[m + 1].leaf_only, jstart) {
                let base = self.prefix[(m + 1) * np];
                let sr = self.ctx.semirings[0];
                match &self.ctx.inputs[i].values[0] {
                    Some(v) => {
                        for (&y, &x) in jids.iter().zip(&v[s0 as usize..]) {
                            acc.add_unchecked(y, sr.times(base, x));
                        }
                    }
                    None => {
                        for &y in jids {
                            acc.add_unchecked(y, base);
                        }
                    }
                }
                self.leave(m + 1, inner);
                continue;
            }
            for (jdx, &y) in jids.iter().enumerate() {
                self.bind(m + 1, y, jstart.map(|s| s + jdx as u32));
                acc.add_unchecked(y, self.prefix[(m + 2) * np]);
            }
            self.leave(m + 1, inner);
        }
        self.leave(m, c);
        self.drain_keys.clear();
        self.drain_vals.clear();
        acc.drain(&mut self.drain_keys, &mut self.drain_vals);
        if let Sink::Rows { keys, vals } = &mut self.sink {
            for (&y, &v) in self.drain_keys.iter().zip(&self.drain_vals) {
                keys.extend_from_slice(&self.bound[..m]);
                keys.push(y);
                vals.push(v);
            }
            self.stats.emitted_rows += self.drain_keys.len() as u64;
        }
        self.union = Some(acc);
    }

    /// Flushes group upserts, leaving rows or a worker-local table.
    fn finish(self) -> Sink<'s> {
        match self.sink {
            Sink::Group(g) => match g.finish() {
                Some(m) => Sink::Local(m),
                None => Sink::Flushed,
            },
            rows => rows,
        }
    }

    fn run(&mut self) {
        let m = match self.ctx.emit {
            Emit::Prefix(m) | Emit::Grouped(m) => m,
            Emit::Relaxed => self.n - 2,
        };
        self.descend(0, m);
    }
}

#[inline]
fn combine(dst: &mut [f64], src: &[f64], semirings: &[Semiring], found: &mut bool) {
    if *found {
        for ((a, &b), s) in dst.iter_mut().zip(src).zip(semirings) {
            *a = s.plus(*a, b);
        }
    } else {
        dst.copy_from_slice(src);
        *found = true;
    }
}

/// Runs the node's join on `threads` workers, splitting the first depth's
/// candidates into contiguous chunks.
pub(crate) fn run_node(ctx: &NodeCtx<'_>, threads: usize, group: Option<GroupStrategy>) -> (NodeOutput, JoinStats) {
    let shared = matches!(group, Some(GroupStrategy::SharedConcurrentTable)).then(|| SharedTable::with_hasher(Default::default()));
    let make_sink = || match (group, &shared) {
        (None, _) => Sink::Rows { keys: Vec::new(), vals: Vec::new() },
        (Some(_), Some(t)) => Sink::Group(GroupSink::Shared(t)),
        (Some(_), None) => Sink::Group(GroupSink::Local(FxHashMap::default())),
    };
    let mut stats = JoinStats::default();
    let mut sinks = Vec::new();
    if ctx.order.is_empty() || threads <= 1 {
        let mut w = Worker::new(ctx, make_sink());
        w.run();
        stats.add(&w.stats);
        sinks.push(w.finish());
    } else {
        let mut w = Worker::new(ctx, Sink::Rows { keys: Vec::new(), vals: Vec::new() });
        let c = w.enter(0);
        stats.add(&w.stats);
        let (ids, start): (Vec<Id>, Option<u32>) = match c {
            Cands::Direct(ids, s) => (ids.to_vec(), Some(s)),
            Cands::Buf(b) => (b, None),
        };
        let chunk = ids.len().div_ceil(threads).max(1);
        let chunks: Vec<(usize, &[Id])> = ids.chunks(chunk).enumerate().map(|(k, c)| (k * chunk, c)).collect();
        let pool = super::pool(threads);
        let results: Vec<(Sink<'_>, JoinStats)> = pool.install(|| {
            chunks
                .par_iter()
                .map(|&(off, part)| {
                    let mut w = Worker::new(ctx, make_sink());
                    w.top = Some((part, start.map(|s| s + off as u32)));
                    w.run();
                    let stats = w.stats;
                    (w.finish(), stats)
                })
                .collect()
        });
        for (s, st) in results {
            stats.add(&st);
            sinks.push(s);
        }
    }
    let np = ctx.passes();
    match group {
        None => {
            let width = ctx.emit_width();
            let mut keys = Vec::new();
            let mut vals = Vec::new();
            for s in sinks {
                if let Sink::Rows { keys: k, vals: v } = s {
                    keys.extend(k);
                    vals.extend(v);
                }
            }
            let rows = normalize(width, np, keys, vals, &ctx.semirings);
            (NodeOutput::Rows(NodeRows { vertices: ctx.row_vertices(), keys: rows.0, vals: rows.1, passes: np }), stats)
        }
        Some(_) => {
            let locals: Vec<FxHashMap<GroupKey, GroupVals>> = sinks
                .into_iter()
                .filter_map(|s| match s {
                    Sink::Local(m) => Some(m),
                    _ => None,
                })
                .collect();
            let groups = finish_groups(locals, shared, &ctx.semirings);
            stats.emitted_rows += groups.len() as u64;
            (NodeOutput::Groups(groups), stats)
        }
    }
}

/// Sorts rows by key and merges duplicates with `⊕`, skipping the work
/// when rows are already strictly increasing.
fn normalize(width: usize, np: usize, keys: Vec<Id>, vals: Vec<f64>, semirings: &[Semiring]) -> (Vec<Id>, Vec<f64>) {
    let n = if np == 0 { 0 } else { vals.len() / np };
    let key = |r: usize| &keys[r * width..(r + 1) * width];
    if (1..n).all(|r| key(r - 1) < key(r)) {
        return (keys, vals);
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| key(a).cmp(key(b)));
    let mut out_k: Vec<Id> = Vec::with_capacity(keys.len());
    let mut out_v: Vec<f64> = Vec::with_capacity(vals.len());
    let mut prev: Option<usize> = None;
    for r in idx {
        if prev.is_some_and(|p| key(p) == key(r)) {
            let base = out_v.len() - np;
            for p in 0..np {
                out_v[base + p] = semirings[p].plus(out_v[base + p], vals[r * np + p]);
            }
        } else {
            out_k.extend_from_slice(key(r));
            out_v.extend_from_slice(&vals[r * np..(r + 1) * np]);
        }
        prev = Some(r);
    }
    (out_k, out_v)
}
