//! Dense linear-algebra kernels for fully dense matrix inputs.

use rayon::prelude::*;

/// Row-major dense products. `a` is `n x k`, `b` is `k x m` (or a length-`k`
/// vector); `out` is zeroed by the caller.
pub trait DenseKernel: Send + Sync {
    fn name(&self) -> &str;
    fn matmul(&self, a: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64], threads: usize);
    fn matvec(&self, a: &[f64], x: &[f64], n: usize, k: usize, out: &mut [f64], threads: usize);
}

/// Cache-blocked product with i-k-j loops inside each block.
#[derive(Clone, Copy, Debug)]
pub struct BlockedKernel {
    pub block: usize,
}

impl Default for BlockedKernel {
    fn default() -> Self {
        BlockedKernel { block: 64 }
    }
}

impl DenseKernel for BlockedKernel {
    fn name(&self) -> &str {
        "blocked"
    }

    fn matmul(&self, a: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64], threads: usize) {
        let bs = self.block.max(1);
        if n == 0 || m == 0 {
            return;
        }
        let body = |(bi, rows): (usize, &mut [f64])| {
            let i0 = bi * bs;
            let ni = rows.len() / m;
            for k0 in (0..k).step_by(bs) {
                let k1 = (k0 + bs).min(k);
                for j0 in (0..m).step_by(bs) {
                    let j1 = (j0 + bs).min(m);
                    for di in 0..ni {
                        let arow = &a[(i0 + di) * k..(i0 + di + 1) * k];
                        let orow = &mut rows[di * m + j0..di * m + j1];
                        for kk in k0..k1 {
                            let av = arow[kk];
                            if av == 0.0 {
                                continue;
                            }
                            let brow = &b[kk * m + j0..kk * m + j1];
                            for (o, &bv) in orow.iter_mut().zip(brow) {
                                *o += av * bv;
                            }
                        }
                    }
                }
            }
        };
        if threads > 1 {
            super::pool(threads).install(|| out.par_chunks_mut(bs * m).enumerate().for_each(body));
        } else {
            out.chunks_mut(bs * m).enumerate().for_each(body);
        }
    }

    fn matvec(&self, a: &[f64], x: &[f64], n: usize, k: usize, out: &mut [f64], threads: usize) {
        let body = |(i, o): (usize, &mut f64)| {
            *o = a[i * k..(i + 1) * k].iter().zip(x).map(|(p, q)| p * q).sum();
        };
        if threads > 1 {
            super::pool(threads).install(|| out[..n].par_iter_mut().enumerate().for_each(body));
        } else {
            out[..n].iter_mut().enumerate().for_each(body);
        }
    }
}
