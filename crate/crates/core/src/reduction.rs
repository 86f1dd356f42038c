//! Deterministic two-level reductions (max, sum, LogSumExp).
//!
//! A reduction over `len` values is evaluated as a fixed tree:
//!
//! 1. `group_size` lanes; lane `t` accumulates elements `t, t + group_size,
//!    t + 2 * group_size, ...` sequentially.
//! 2. Lanes are partitioned into chunks of `chunk_width`; each chunk is folded
//!    by a pairwise halving tree.
//! 3. The per-chunk results are folded by the same halving tree.
//!
//! The tree depends only on `(len, chunk_width, group_size)`, so a given plan
//! produces bit-identical results no matter how many workers the caller uses
//! to process independent rows. `group_size = chunk_width = 1` degenerates to
//! a plain sequential scan.

use crate::error::{Error, Result};
use crate::real::Real;

/// Upper bound on lanes per group.
pub const MAX_GROUP_SIZE: usize = 1024;

/// Approximate number of operands generated per fill call.
const FILL_TARGET: usize = 1024;

/// Shape of the reduction tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ReductionPlan {
    chunk_width: usize,
    group_size: usize,
}

impl Default for ReductionPlan {
    fn default() -> Self {
        Self::hierarchical()
    }
}

impl ReductionPlan {
    pub fn new(chunk_width: usize, group_size: usize) -> Result<Self> {
        if chunk_width == 0 || group_size == 0 {
            return Err(Error::InvalidConfig(
                "chunk_width and group_size must be positive".into(),
            ));
        }
        if !group_size.is_multiple_of(chunk_width) {
            return Err(Error::InvalidConfig(format!(
                "group_size {group_size} is not a multiple of chunk_width {chunk_width}"
            )));
        }
        if group_size > MAX_GROUP_SIZE {
            return Err(Error::InvalidConfig(format!(
                "group_size {group_size} exceeds {MAX_GROUP_SIZE}"
            )));
        }
        Ok(Self {
            chunk_width,
            group_size,
        })
    }

    /// 32-wide chunks inside 256-lane groups.
    pub const fn hierarchical() -> Self {
        Self {
            chunk_width: 32,
            group_size: 256,
        }
    }

    /// Single accumulator, sequential order.
    pub const fn flat() -> Self {
        Self {
            chunk_width: 1,
            group_size: 1,
        }
    }

    pub fn chunk_width(&self) -> usize {
        self.chunk_width
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    /// Elements produced per call of a block fill closure.
    pub fn block_len(&self) -> usize {
        self.group_size * (FILL_TARGET / self.group_size).max(1)
    }

    pub fn scratch<T: Real>(&self) -> ReductionScratch<T> {
        ReductionScratch {
            lanes: vec![T::zero(); self.group_size],
            block: vec![T::zero(); self.block_len()],
        }
    }

    /// Visits the `len` operands block by block: `fill(start, out)` writes
    /// operands `start..start + out.len()` into `out`, then `absorb(lanes,
    /// group)` folds each group-sized slice of the block lane-wise.
    #[inline(always)]
    fn accumulate<T: Real>(
        &self,
        scratch: &mut ReductionScratch<T>,
        len: usize,
        identity: T,
        mut fill: impl FnMut(usize, &mut [T]),
        mut absorb: impl FnMut(&mut [T], &[T]),
    ) {
        debug_assert!(len > 0);
        debug_assert_eq!(scratch.lanes.len(), self.group_size);
        scratch.lanes.fill(identity);
        let block_len = scratch.block.len();
        let mut start = 0;
        while start < len {
            let width = block_len.min(len - start);
            let block = &mut scratch.block[..width];
            fill(start, block);
            for group in block.chunks(self.group_size) {
                absorb(&mut scratch.lanes[..group.len()], group);
            }
            start += width;
        }
    }

    /// Folds the lanes: a halving tree inside each chunk, then across chunks.
    fn finish<T: Real>(&self, lanes: &mut [T], op: impl Fn(T, T) -> T + Copy) -> T {
        if self.group_size == 1 {
            return lanes[0];
        }
        for chunk in lanes.chunks_mut(self.chunk_width) {
            halving_tree(chunk, op);
        }
        let chunks = self.group_size / self.chunk_width;
        for c in 1..chunks {
            lanes[c] = lanes[c * self.chunk_width];
        }
        halving_tree(&mut lanes[..chunks], op)
    }

    /// Maximum over operands produced by `fill`.
    #[inline]
    pub fn max_with<T: Real>(
        &self,
        scratch: &mut ReductionScratch<T>,
        len: usize,
        fill: impl FnMut(usize, &mut [T]),
    ) -> T {
        self.accumulate(scratch, len, T::neg_infinity(), fill, |lanes, group| {
            for (l, &x) in lanes.iter_mut().zip(group) {
                *l = l.max(x);
            }
        });
        self.finish(&mut scratch.lanes, |a, b| a.max(b))
    }

    /// Sum over operands produced by `fill`, along the fixed tree.
    #[inline]
    pub fn sum_with<T: Real>(
        &self,
        scratch: &mut ReductionScratch<T>,
        len: usize,
        fill: impl FnMut(usize, &mut [T]),
    ) -> T {
        self.accumulate(scratch, len, T::zero(), fill, |lanes, group| {
            for (l, &x) in lanes.iter_mut().zip(group) {
                *l = *l + x;
            }
        });
        self.finish(&mut scratch.lanes, |a, b| a + b)
    }

    /// Two-pass stabilized `ln sum exp(x_j)`: pass one finds `M = max x_j`,
    /// pass two regenerates the operands and sums `exp(x_j - M)`. The sum is
    /// floored at `1e-30` before the log. Returns `-inf` when every operand
    /// is `-inf`; a NaN operand or `+inf` maximum propagates.
    #[inline]
    pub fn log_sum_exp_with<T: Real>(
        &self,
        scratch: &mut ReductionScratch<T>,
        len: usize,
        mut fill: impl FnMut(usize, &mut [T]),
    ) -> T {
        let max = self.max_with(scratch, len, &mut fill);
        if !max.is_finite() {
            return max;
        }
        self.accumulate(scratch, len, T::zero(), fill, |lanes, group| {
            for (l, &x) in lanes.iter_mut().zip(group) {
                *l = *l + (x - max).exp_kernel();
            }
        });
        let sum = self.finish(&mut scratch.lanes, |a, b| a + b);
        max + sum.max(T::SUM_FLOOR).ln()
    }

    /// [`Self::max_with`] over `f(0), ..., f(len - 1)`.
    pub fn max_by<T: Real>(&self, len: usize, f: impl Fn(usize) -> T) -> T {
        self.max_with(&mut self.scratch(), len, elementwise(f))
    }

    /// [`Self::sum_with`] over `f(0), ..., f(len - 1)`.
    pub fn sum_by<T: Real>(&self, len: usize, f: impl Fn(usize) -> T) -> T {
        self.sum_with(&mut self.scratch(), len, elementwise(f))
    }

    /// [`Self::log_sum_exp_with`] over `f(0), ..., f(len - 1)`.
    pub fn log_sum_exp_by<T: Real>(&self, len: usize, f: impl Fn(usize) -> T) -> T {
        self.log_sum_exp_with(&mut self.scratch(), len, elementwise(f))
    }
}

/// Reusable lane and block buffers for one worker.
#[derive(Debug, Clone)]
pub struct ReductionScratch<T> {
    lanes: Vec<T>,
    block: Vec<T>,
}

fn elementwise<T>(f: impl Fn(usize) -> T) -> impl FnMut(usize, &mut [T]) {
    move |start, out| {
        for (t, o) in out.iter_mut().enumerate() {
            *o = f(start + t);
        }
    }
}

/// Folds `values` pairwise (`v[i] op v[i + half]`) until one value remains.
fn halving_tree<T: Copy>(values: &mut [T], op: impl Fn(T, T) -> T) -> T {
    let mut len = values.len();
    while len > 1 {
        let half = len.div_ceil(2);
        for i in 0..len / 2 {
            values[i] = op(values[i], values[i + half]);
        }
        len = half;
    }
    values[0]
}

/// Read-only view of `len` elements starting at `offset`, spaced `stride` apart.
#[derive(Debug, Clone, Copy)]
pub struct StridedView<'a, T> {
    data: &'a [T],
    offset: usize,
    len: usize,
    stride: usize,
}

impl<'a, T: Copy> StridedView<'a, T> {
    pub fn new(data: &'a [T], offset: usize, len: usize, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidArgument("stride must be positive".into()));
        }
        if len > 0 && offset + (len - 1) * stride >= data.len() {
            return Err(Error::InvalidArgument(format!(
                "view of {len} elements with stride {stride} from {offset} exceeds {} elements",
                data.len()
            )));
        }
        Ok(Self {
            data,
            offset,
            len,
            stride,
        })
    }

    pub fn contiguous(data: &'a [T]) -> Self {
        Self {
            data,
            offset: 0,
            len: data.len(),
            stride: 1,
        }
    }

    /// Column `col` of a row-major `rows x cols` matrix.
    pub fn column(data: &'a [T], rows: usize, cols: usize, col: usize) -> Result<Self> {
        if col >= cols {
            return Err(Error::InvalidArgument(format!("column {col} out of {cols}")));
        }
        Self::new(data, col, rows, cols)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline(always)]
    pub fn get(&self, k: usize) -> T {
        self.data[self.offset + k * self.stride]
    }

    pub fn iter(&self) -> impl Iterator<Item = T> + '_ {
        (0..self.len).map(move |k| self.get(k))
    }
}

pub fn reduce_max<T: Real>(view: StridedView<'_, T>, plan: &ReductionPlan) -> Result<T> {
    if view.is_empty() {
        return Err(Error::EmptyView);
    }
    Ok(plan.max_by(view.len(), |k| view.get(k)))
}

pub fn reduce_sum<T: Real>(view: StridedView<'_, T>, plan: &ReductionPlan) -> Result<T> {
    if view.is_empty() {
        return Err(Error::EmptyView);
    }
    Ok(plan.sum_by(view.len(), |k| view.get(k)))
}

/// Stabilized LogSumExp over a view. `-inf` entries contribute nothing; a view
/// made only of `-inf` yields [`Error::AllNegativeInfinity`].
pub fn log_sum_exp<T: Real>(view: StridedView<'_, T>, plan: &ReductionPlan) -> Result<T> {
    if view.is_empty() {
        return Err(Error::EmptyView);
    }
    let value = plan.log_sum_exp_by(view.len(), |k| view.get(k));
    if value == T::neg_infinity() {
        return Err(Error::AllNegativeInfinity);
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plans() -> Vec<ReductionPlan> {
        vec![
            ReductionPlan::hierarchical(),
            ReductionPlan::flat(),
            ReductionPlan::new(4, 12).unwrap(),
            ReductionPlan::new(32, 64).unwrap(),
            ReductionPlan::new(32, 512).unwrap(),
        ]
    }

    /// Neumaier-compensated sequential sum.
    fn compensated_sum(values: &[f64]) -> f64 {
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for &v in values {
            let t = sum + v;
            if sum.abs() >= v.abs() {
                comp += (sum - t) + v;
            } else {
                comp += (v - t) + sum;
            }
            sum = t;
        }
        sum + comp
    }

    #[test]
    fn plan_validation() {
        assert!(ReductionPlan::new(0, 32).is_err());
        assert!(ReductionPlan::new(32, 48).is_err());
        assert!(ReductionPlan::new(32, 2048).is_err());
        assert!(ReductionPlan::new(3, 9).is_ok());
    }

    #[test]
    fn max_examples() {
        let plan = ReductionPlan::hierarchical();
        let v = [3.0f64, 1.0, 2.0];
        assert_eq!(reduce_max(StridedView::contiguous(&v), &plan).unwrap(), 3.0);
        let v = [f64::NEG_INFINITY, 5.0];
        assert_eq!(reduce_max(StridedView::contiguous(&v), &plan).unwrap(), 5.0);
        let empty: [f64; 0] = [];
        assert_eq!(
            reduce_max(StridedView::contiguous(&empty), &plan),
            Err(Error::EmptyView)
        );
    }

    #[test]
    fn max_matches_sequential_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v: Vec<f32> = (0..1000).map(|_| rng.random_range(-1e3f32..1e3)).collect();
        let scan = v.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b));
        for plan in plans() {
            let got = reduce_max(StridedView::contiguous(&v), &plan).unwrap();
            assert_eq!(got.to_bits(), scan.to_bits());
        }
    }

    #[test]
    fn sum_examples() {
        let plan = ReductionPlan::hierarchical();
        let v = [1.0f32, 2.0, 3.0];
        assert_eq!(reduce_sum(StridedView::contiguous(&v), &plan).unwrap(), 6.0);
        for n in [1usize, 255, 256, 257, 10_000, 1 << 20] {
            let ones = vec![1.0f32; n];
            for plan in plans() {
                let s = reduce_sum(StridedView::contiguous(&ones), &plan).unwrap();
                assert_eq!(s, n as f32);
            }
        }
    }

    #[test]
    fn sum_matches_compensated_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v: Vec<f64> = (0..4096).map(|_| rng.random::<f64>()).collect();
        let oracle = compensated_sum(&v);
        let single: Vec<f32> = v.iter().map(|&x| x as f32).collect();
        let oracle_single = compensated_sum(&single.iter().map(|&x| x as f64).collect::<Vec<_>>());
        for plan in plans() {
            let d = reduce_sum(StridedView::contiguous(&v), &plan).unwrap();
            assert!(((d - oracle) / oracle).abs() <= 1e-12);
            let s = reduce_sum(StridedView::contiguous(&single), &plan).unwrap() as f64;
            assert!(((s - oracle_single) / oracle_single).abs() <= 1e-5);
        }
    }

    #[test]
    fn strided_column_view() {
        // 3 x 4 row-major
        let m: Vec<f64> = (0..12).map(|k| k as f64).collect();
        let col = StridedView::column(&m, 3, 4, 2).unwrap();
        assert_eq!(col.iter().collect::<Vec<_>>(), vec![2.0, 6.0, 10.0]);
        let plan = ReductionPlan::hierarchical();
        assert_eq!(reduce_sum(col, &plan).unwrap(), 18.0);
        assert!(StridedView::column(&m, 3, 4, 4).is_err());
        assert!(StridedView::new(&m, 1, 4, 4).is_err());
    }

    #[test]
    fn lse_examples() {
        let plan = ReductionPlan::hierarchical();
        for x in [-1e4f64, -3.5, 0.0, 17.25, 1e4] {
            assert_eq!(log_sum_exp(StridedView::contiguous(&[x]), &plan).unwrap(), x);
        }
        let two = log_sum_exp(StridedView::contiguous(&[0.0f32, 0.0]), &plan).unwrap();
        assert!((two - std::f32::consts::LN_2).abs() <= f32::EPSILON);
        let dominated = log_sum_exp(StridedView::contiguous(&[-1000.0f32, 0.0]), &plan).unwrap();
        assert_eq!(dominated, 0.0);
        let dominated = log_sum_exp(StridedView::contiguous(&[-1000.0f64, 0.0]), &plan).unwrap();
        assert_eq!(dominated, 0.0);
    }

    #[test]
    fn lse_negative_infinity_handling() {
        let plan = ReductionPlan::hierarchical();
        let v = [f64::NEG_INFINITY, 1.0, f64::NEG_INFINITY];
        assert_eq!(log_sum_exp(StridedView::contiguous(&v), &plan).unwrap(), 1.0);
        let all = [f64::NEG_INFINITY; 3];
        assert_eq!(
            log_sum_exp(StridedView::contiguous(&all), &plan),
            Err(Error::AllNegativeInfinity)
        );
        assert_eq!(plan.log_sum_exp_by(3, |k| all[k]), f64::NEG_INFINITY);
    }

    #[test]
    fn large_inputs_do_not_overflow() {
        let plan = ReductionPlan::hierarchical();
        let v = [100.0f32, 99.0, 98.0];
        let got = log_sum_exp(StridedView::contiguous(&v), &plan).unwrap();
        let want = 100.0 + (1.0 + (-1.0f64).exp() + (-2.0f64).exp()).ln();
        assert!((got as f64 - want).abs() < 1e-5);
    }

    fn plan_strategy() -> impl Strategy<Value = ReductionPlan> {
        prop::sample::select(plans())
    }

    fn lse_f64(values: &[f64]) -> f64 {
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let shifted: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
        max + compensated_sum(&shifted).ln()
    }

    /// Slack for comparing single-precision LSE results of magnitude `scale`.
    fn slack(scale: f64, len: usize) -> f64 {
        8.0 * f32::EPSILON as f64 * (scale + (len as f64).ln() + 1.0)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn lse_is_shift_invariant(
            v in prop::collection::vec(-50.0f32..50.0, 1..200),
            c in -100.0f32..100.0,
            plan in plan_strategy(),
        ) {
            let shifted: Vec<f32> = v.iter().map(|x| x + c).collect();
            let a = log_sum_exp(StridedView::contiguous(&v), &plan).unwrap() as f64;
            let b = log_sum_exp(StridedView::contiguous(&shifted), &plan).unwrap() as f64;
            prop_assert!((b - a - c as f64).abs() <= slack(150.0, v.len()));
        }

        #[test]
        fn lse_is_bounded_by_max(
            v in prop::collection::vec(-1e3f64..1e3, 1..300),
            plan in plan_strategy(),
        ) {
            let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let got = log_sum_exp(StridedView::contiguous(&v), &plan).unwrap();
            let tol = 4.0 * f64::EPSILON * max.abs().max(1.0);
            prop_assert!(got >= max - tol);
            prop_assert!(got <= max + (v.len() as f64).ln() + tol);
        }

        #[test]
        fn lse_single_is_finite_on_wide_inputs(
            v in prop::collection::vec(-1e6f32..=0.0, 1..500),
            plan in plan_strategy(),
        ) {
            let got = log_sum_exp(StridedView::contiguous(&v), &plan).unwrap();
            prop_assert!(got.is_finite());
        }

        #[test]
        fn lse_matches_oracle(
            v in prop::collection::vec(-80.0f32..80.0, 1..=64),
            plan in plan_strategy(),
        ) {
            let wide: Vec<f64> = v.iter().map(|&x| x as f64).collect();
            let want = lse_f64(&wide);
            let got = log_sum_exp(StridedView::contiguous(&v), &plan).unwrap() as f64;
            prop_assert!((got - want).abs() <= slack(want.abs(), v.len()));

            let got = log_sum_exp(StridedView::contiguous(&wide), &plan).unwrap();
            prop_assert!((got - want).abs() <= 1e-13 * (want.abs() + 1.0));
        }

        #[test]
        fn reductions_match_across_strides(
            v in prop::collection::vec(-10.0f64..10.0, 1..400),
            plan in plan_strategy(),
        ) {
            let spread: Vec<f64> = v.iter().flat_map(|&x| [x, f64::NAN, f64::NAN]).collect();
            let strided = StridedView::new(&spread, 0, v.len(), 3).unwrap();
            let dense = StridedView::contiguous(&v);
            prop_assert_eq!(
                reduce_sum(strided, &plan).unwrap().to_bits(),
                reduce_sum(dense, &plan).unwrap().to_bits()
            );
            prop_assert_eq!(
                log_sum_exp(strided, &plan).unwrap().to_bits(),
                log_sum_exp(dense, &plan).unwrap().to_bits()
            );
        }
    }
}
