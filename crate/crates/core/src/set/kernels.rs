//! Intersection kernels, dispatched by operand layout.

use super::{Bits, Id, SetConfig, SetView};

/// Reusable buffers for multi-way intersections.
#[derive(Default, Debug)]
pub struct IntersectScratch {
    words: Vec<u64>,
    tmp: Vec<Id>,
    uints: Vec<usize>,
    bitsets: Vec<usize>,
}

/// `a ∩ b` for two sorted id lists. Merges when the sizes are comparable and
/// gallops through the larger list otherwise.
pub fn intersect_uint_uint(a: &[Id], b: &[Id], gallop_ratio: usize, out: &mut Vec<Id>) {
    out.clear();
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if small.is_empty() {
        return;
    }
    if large.len() / small.len() > gallop_ratio {
        gallop(small, large, out);
    } else {
        merge(small, large, out);
    }
}

fn merge(a: &[Id], b: &[Id], out: &mut Vec<Id>) {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        let (x, y) = (a[i], b[j]);
        if x == y {
            out.push(x);
            i += 1;
            j += 1;
        } else if x < y {
            i += 1;
        } else {
            j += 1;
        }
    }
}

fn gallop(small: &[Id], large: &[Id], out: &mut Vec<Id>) {
    let mut lo = 0usize;
    for &x in small {
        lo += gallop_to(&large[lo..], x);
        if lo >= large.len() {
            break;
        }
        if large[lo] == x {
            out.push(x);
            lo += 1;
        }
    }
}

/// Index of the first element `>= x` in a sorted slice, found by exponential
/// probing from the front.
#[inline]
pub(crate) fn gallop_to(s: &[Id], x: Id) -> usize {
    if s.first().is_none_or(|&f| f >= x) {
        return 0;
    }
    let mut step = 1usize;
    let mut prev = 0usize;
    while step < s.len() && s[step] < x {
        prev = step;
        step *= 2;
    }
    let end = step.min(s.len());
    prev + 1 + s[prev + 1..end].partition_point(|&v| v < x)
}

/// Probes each id of a sorted list into a bitset.
pub fn intersect_uint_bits(a: &[Id], bits: &Bits<'_>, out: &mut Vec<Id>) {
    out.clear();
    out.extend(a.iter().copied().filter(|&x| bits.contains(x)));
}

/// Word-wise AND of two bitsets into `out`, returning the base id of `out[0]`.
pub(crate) fn and_bits(a: &Bits<'_>, b: &Bits<'_>, out: &mut Vec<u64>) -> Id {
    out.clear();
    let start = a.base.max(b.base);
    let end = a.end().min(b.end());
    if (start as u64) >= end {
        return 0;
    }
    let n = ((end - start as u64) / 64) as usize;
    let (oa, ob) = (((start - a.base) / 64) as usize, ((start - b.base) / 64) as usize);
    out.extend(a.words[oa..oa + n].iter().zip(&b.words[ob..ob + n]).map(|(x, y)| x & y));
    start
}

/// Intersects any number of sets into `out` (sorted). Bitset operands are
/// combined first by word-wise AND; `uint` operands are then merged starting
/// from the smallest and finally probed against the combined bitset.
pub fn intersect_many(ops: &[SetView<'_>], config: &SetConfig, scratch: &mut IntersectScratch, out: &mut Vec<Id>) {
    out.clear();
    if ops.is_empty() || ops.iter().any(|s| s.card == 0) {
        return;
    }
    if ops.len() == 1 {
        ops[0].for_each(|x| out.push(x));
        return;
    }
    scratch.uints.clear();
    scratch.bitsets.clear();
    for (i, op) in ops.iter().enumerate() {
        if op.bits.is_some() {
            scratch.bitsets.push(i);
        } else {
            scratch.uints.push(i);
        }
    }
    let combined: Option<Bits<'_>> = match scratch.bitsets.len() {
        0 => None,
        1 => ops[scratch.bitsets[0]].bits,
        _ => {
            let mut words = std::mem::take(&mut scratch.words);
            let mut next = Vec::new();
            let first = ops[scratch.bitsets[0]].bits.unwrap();
            let mut base = and_bits(&first, &ops[scratch.bitsets[1]].bits.unwrap(), &mut words);
            for &bi in &scratch.bitsets[2..] {
                let cur = Bits { base, words: &words, ranks: &[] };
                base = and_bits(&cur, &ops[bi].bits.unwrap(), &mut next);
                std::mem::swap(&mut words, &mut next);
            }
            scratch.words = words;
            Some(Bits { base, words: &scratch.words, ranks: &[] })
        }
    };

    if scratch.uints.is_empty() {
        if let Some(bits) = combined {
            out.extend(bits.iter());
        }
        return;
    }
    let mut uints = std::mem::take(&mut scratch.uints);
    uints.sort_by_key(|&i| ops[i].card);
    let first = ops[uints[0]].ids.expect("uint set without ids");
    match &combined {
        Some(bits) => intersect_uint_bits(first, bits, out),
        None => out.extend_from_slice(first),
    }
    let mut tmp = std::mem::take(&mut scratch.tmp);
    for &ui in &uints[1..] {
        if out.is_empty() {
            break;
        }
        let other = ops[ui].ids.expect("uint set without ids");
        intersect_uint_uint(out, other, config.gallop_ratio, &mut tmp);
        std::mem::swap(out, &mut tmp);
    }
    scratch.tmp = tmp;
    scratch.uints = uints;
}
