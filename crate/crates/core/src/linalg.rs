//! Sharded parallel kernels.
//!
//! Every vector dimension is cut into contiguous shards. Kernels that write a
//! vector give each shard ownership of its slice of the output, so there are
//! no atomics and no scatter. Reductions compute one partial per shard and fold
//! the partials in ascending shard order on the calling thread, which makes the
//! result depend only on the plan and never on scheduling.

use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;
use rayon::ThreadPool;
use smallvec::SmallVec;

use crate::problem::PrimalDualIterate;
use crate::sparse::{CompressedRows, SparseMatrix};

/// Default number of shards per worker thread.
pub const DEFAULT_SHARDS_PER_THREAD: usize = 4;

type Partials<T> = SmallVec<[T; 32]>;

/// Contiguous partition of `[0, dim)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardPlan {
    boundaries: Vec<usize>,
}

impl ShardPlan {
    /// Splits `dim` into `threads * shards_per_thread` shards, as evenly as
    /// possible, with earlier shards larger by at most one.
    pub fn new(dim: usize, threads: usize, shards_per_thread: usize) -> Self {
        assert!(threads >= 1, "at least one thread");
        assert!(shards_per_thread >= 1, "at least one shard per thread");
        Self::with_shards(dim, threads * shards_per_thread)
    }

    pub fn with_shards(dim: usize, num_shards: usize) -> Self {
        assert!(num_shards >= 1);
        let base = dim / num_shards;
        let extra = dim % num_shards;
        let mut boundaries = Vec::with_capacity(num_shards + 1);
        boundaries.push(0);
        let mut at = 0;
        for s in 0..num_shards {
            at += base + usize::from(s < extra);
            boundaries.push(at);
        }
        Self { boundaries }
    }

    pub fn num_shards(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn dim(&self) -> usize {
        *self.boundaries.last().expect("nonempty boundaries")
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    #[inline]
    pub fn shard(&self, s: usize) -> Range<usize> {
        self.boundaries[s]..self.boundaries[s + 1]
    }

    pub fn sizes(&self) -> Vec<usize> {
        (0..self.num_shards()).map(|s| self.shard(s).len()).collect()
    }
}

/// Raw output pointer shared between shards that write disjoint ranges.
#[derive(Clone, Copy)]
struct SharedOut(*mut f64);

// SAFETY: shards of one plan write non-overlapping index ranges.
unsafe impl Send for SharedOut {}
unsafe impl Sync for SharedOut {}

/// Thread pool plus row (length m) and column (length n) shard plans.
#[derive(Clone)]
pub struct Sharder {
    pool: Option<Arc<ThreadPool>>,
    rows: ShardPlan,
    cols: ShardPlan,
}

impl std::fmt::Debug for Sharder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Sharder")
            .field("threads", &self.threads())
            .field("row_shards", &self.rows.num_shards())
            .field("col_shards", &self.cols.num_shards())
            .finish()
    }
}

impl Sharder {
    /// Creates the pool once. With `threads == 1` shards run on the caller.
    pub fn new(num_rows: usize, num_cols: usize, threads: usize, shards_per_thread: usize) -> Self {
        let pool = if threads > 1 {
            Some(Arc::new(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .expect("failed to build thread pool"),
            ))
        } else {
            None
        };
        Self {
            pool,
            rows: ShardPlan::new(num_rows, threads, shards_per_thread),
            cols: ShardPlan::new(num_cols, threads, shards_per_thread),
        }
    }

    /// Reuses this sharder's pool with explicit plans.
    pub fn with_plans(&self, rows: ShardPlan, cols: ShardPlan) -> Self {
        Self { pool: self.pool.clone(), rows, cols }
    }

    /// A sharder for the transposed dimensions sharing the same pool.
    pub fn transposed(&self) -> Self {
        Self { pool: self.pool.clone(), rows: self.cols.clone(), cols: self.rows.clone() }
    }

    /// Plans for different dimensions sharing the same pool, with the same
    /// shard counts.
    pub fn resized(&self, num_rows: usize, num_cols: usize) -> Self {
        Self {
            pool: self.pool.clone(),
            rows: ShardPlan::with_shards(num_rows, self.rows.num_shards()),
            cols: ShardPlan::with_shards(num_cols, self.cols.num_shards()),
        }
    }

    pub fn threads(&self) -> usize {
        self.pool.as_ref().map_or(1, |p| p.current_num_threads())
    }

    pub fn row_plan(&self) -> &ShardPlan {
        &self.rows
    }

    pub fn col_plan(&self) -> &ShardPlan {
        &self.cols
    }

    /// Plan whose dimension is `dim`: the row plan first, then the column plan.
    fn plan_for(&self, dim: usize) -> &ShardPlan {
        if self.rows.dim() == dim {
            &self.rows
        } else if self.cols.dim() == dim {
            &self.cols
        } else {
            panic!("no shard plan of dimension {dim}")
        }
    }

    /// Runs `f(range, out[range])` for every shard of `plan`.
    pub fn for_each_shard<F>(&self, plan: &ShardPlan, out: &mut [f64], f: F)
    where
        F: Fn(Range<usize>, &mut [f64]) + Sync,
    {
        assert_eq!(out.len(), plan.dim());
        match &self.pool {
            None => {
                for s in 0..plan.num_shards() {
                    let r = plan.shard(s);
                    f(r.clone(), &mut out[r]);
                }
            }
            Some(pool) => {
                let ptr = SharedOut(out.as_mut_ptr());
                pool.install(|| {
                    (0..plan.num_shards()).into_par_iter().for_each(|s| {
                        let r = plan.shard(s);
                        let ptr = ptr;
                        // SAFETY: shard ranges are disjoint and within `out`,
                        // which stays mutably borrowed for the whole call.
                        let chunk = unsafe {
                            std::slice::from_raw_parts_mut(ptr.0.add(r.start), r.len())
                        };
                        f(r, chunk);
                    });
                });
            }
        }
    }

    /// Computes `f(range)` for every shard and returns the partials in shard
    /// order.
    fn partials<T, F>(&self, plan: &ShardPlan, f: F) -> Partials<T>
    where
        T: Send + Default + Clone,
        F: Fn(Range<usize>) -> T + Sync,
    {
        let k = plan.num_shards();
        let mut out: Partials<T> = SmallVec::from_elem(T::default(), k);
        match &self.pool {
            None => {
                for (s, slot) in out.iter_mut().enumerate() {
                    *slot = f(plan.shard(s));
                }
            }
            Some(pool) => {
                pool.install(|| {
                    out.par_iter_mut().enumerate().for_each(|(s, slot)| *slot = f(plan.shard(s)));
                });
            }
        }
        out
    }

    /// Sum of per-shard partials, combined in ascending shard order.
    pub fn sum_by_shard<F>(&self, dim: usize, f: F) -> f64
    where
        F: Fn(Range<usize>) -> f64 + Sync,
    {
        let plan = self.plan_for(dim);
        self.partials(plan, f).iter().fold(0.0, |acc, p| acc + p)
    }

    /// Max of per-shard partials.
    pub fn max_by_shard<F>(&self, dim: usize, f: F) -> f64
    where
        F: Fn(Range<usize>) -> f64 + Sync,
    {
        let plan = self.plan_for(dim);
        self.partials(plan, f).iter().fold(0.0, |acc: f64, p| acc.max(*p))
    }

    /// Applies `f(range, out[range])` over the plan matching `out.len()`.
    pub fn map_into<F>(&self, out: &mut [f64], f: F)
    where
        F: Fn(Range<usize>, &mut [f64]) + Sync,
    {
        let plan = self.plan_for(out.len());
        self.for_each_shard(plan, out, f);
    }

    /// Like [`Sharder::map_into`], where each shard also returns a partial sum;
    /// partials are added in ascending shard order.
    pub fn map_reduce_into<F>(&self, out: &mut [f64], f: F) -> f64
    where
        F: Fn(Range<usize>, &mut [f64]) -> f64 + Sync,
    {
        let (a, _) = self.map_reduce_pair_into(out, |r, chunk| (f(r, chunk), 0.0));
        a
    }

    /// Two partial sums per shard, combined in ascending shard order.
    pub fn map_reduce_pair_into<F>(&self, out: &mut [f64], f: F) -> (f64, f64)
    where
        F: Fn(Range<usize>, &mut [f64]) -> (f64, f64) + Sync,
    {
        let plan = self.plan_for(out.len());
        let k = plan.num_shards();
        let mut parts: Partials<(f64, f64)> = SmallVec::from_elem((0.0, 0.0), k);
        match &self.pool {
            None => {
                for (s, slot) in parts.iter_mut().enumerate() {
                    let r = plan.shard(s);
                    *slot = f(r.clone(), &mut out[r]);
                }
            }
            Some(pool) => {
                let ptr = SharedOut(out.as_mut_ptr());
                pool.install(|| {
                    parts.par_iter_mut().enumerate().for_each(|(s, slot)| {
                        let r = plan.shard(s);
                        let ptr = ptr;
                        // SAFETY: shard ranges are disjoint and within `out`.
                        let chunk = unsafe {
                            std::slice::from_raw_parts_mut(ptr.0.add(r.start), r.len())
                        };
                        *slot = f(r, chunk);
                    });
                });
            }
        }
        parts.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1))
    }

    /// `out = A x`, rows sharded by the row plan.
    pub fn spmv(&self, a: &SparseMatrix, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), a.ncols());
        assert_eq!(out.len(), a.nrows());
        self.rows_times(a.rows(), x, out, &self.rows);
    }

    /// `out = A^T y`, columns sharded by the column plan.
    pub fn spmv_transpose(&self, a: &SparseMatrix, y: &[f64], out: &mut [f64]) {
        assert_eq!(y.len(), a.nrows());
        assert_eq!(out.len(), a.ncols());
        self.rows_times(a.cols(), y, out, &self.cols);
    }

    fn rows_times(&self, layout: &CompressedRows, v: &[f64], out: &mut [f64], plan: &ShardPlan) {
        assert_eq!(plan.dim(), out.len());
        self.for_each_shard(plan, out, |range, chunk| {
            for (slot, row) in chunk.iter_mut().zip(range) {
                *slot = layout.row_dot(row, v);
            }
        });
    }

    pub fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        assert_eq!(a.len(), b.len());
        self.sum_by_shard(a.len(), |r| {
            let mut acc = 0.0;
            for i in r {
                acc += a[i] * b[i];
            }
            acc
        })
    }

    pub fn norm_squared(&self, v: &[f64]) -> f64 {
        self.dot(v, v)
    }

    pub fn norm2(&self, v: &[f64]) -> f64 {
        self.norm_squared(v).sqrt()
    }

    pub fn norm_inf(&self, v: &[f64]) -> f64 {
        self.max_by_shard(v.len(), |r| v[r].iter().fold(0.0, |m: f64, x| m.max(x.abs())))
    }

    /// `||a - b||_2^2`.
    pub fn distance_squared(&self, a: &[f64], b: &[f64]) -> f64 {
        assert_eq!(a.len(), b.len());
        self.sum_by_shard(a.len(), |r| {
            let mut acc = 0.0;
            for i in r {
                let d = a[i] - b[i];
                acc += d * d;
            }
            acc
        })
    }

    /// `out_i = min(max(v_i, lower_i), upper_i)`.
    pub fn project_box(&self, v: &[f64], lower: &[f64], upper: &[f64], out: &mut [f64]) {
        assert_eq!(v.len(), out.len());
        self.map_into(out, |r, chunk| {
            for (slot, i) in chunk.iter_mut().zip(r) {
                *slot = v[i].max(lower[i]).min(upper[i]);
            }
        });
    }

    /// `sqrt(omega ||x||^2 + ||y||^2 / omega)`.
    pub fn weighted_norm(&self, z: &PrimalDualIterate, omega: f64) -> f64 {
        (omega * self.norm_squared(&z.x) + self.norm_squared(&z.y) / omega).sqrt()
    }

    /// `||a - b||_omega`.
    pub fn weighted_distance(&self, a: &PrimalDualIterate, b: &PrimalDualIterate, omega: f64) -> f64 {
        (omega * self.distance_squared(&a.x, &b.x) + self.distance_squared(&a.y, &b.y) / omega).sqrt()
    }
}

/// Sequential box projection.
pub fn project_box(v: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
    v.iter().zip(lower).zip(upper).map(|((v, l), u)| v.max(*l).min(*u)).collect()
}

/// Sequential omega-norm.
pub fn weighted_norm(z: &PrimalDualIterate, omega: f64) -> f64 {
    let xs: f64 = z.x.iter().map(|v| v * v).sum();
    let ys: f64 = z.y.iter().map(|v| v * v).sum();
    (omega * xs + ys / omega).sqrt()
}
