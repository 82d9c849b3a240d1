// SPDX-License-Identifier: Apache-2.0

//! Bandwidth functions.
//!
//! A bandwidth function (BF) maps a dimensionless *fair share* to a bandwidth
//! in bits per second. It is stored as a list of breakpoints; between
//! breakpoints it is linear and beyond the last breakpoint it stays constant.
//! Every operation here is a pure function of immutable values.
//!
//! Flow BFs start as `B(s) = min((srcWeight + dstWeight) * unit * s, limit)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance for pointwise BF identities.
pub const REL_TOL: f64 = 1e-6;
/// Absolute floor used together with [`REL_TOL`].
pub const ABS_TOL: f64 = 1e-9;

/// Default bandwidth of one fair-share unit: 1 Gbps.
pub const DEFAULT_FAIR_SHARE_UNIT: f64 = 1e9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BfError {
    #[error("bandwidth function has no breakpoints")]
    Empty,
    #[error("first breakpoint must be at fair share 0, got {0}")]
    FirstNotAtZero(f64),
    #[error("breakpoint {index}: fair share {share} is not strictly increasing")]
    ShareNotIncreasing { index: usize, share: f64 },
    #[error("breakpoint {index}: bandwidth {bandwidth} decreases")]
    BandwidthDecreasing { index: usize, bandwidth: f64 },
    #[error("breakpoint {index} is not a finite, non-negative pair")]
    InvalidValue { index: usize },
    #[error("demand exceeds BF range: {demand} bps > max {max} bps")]
    DemandExceedsRange { demand: f64, max: f64 },
    #[error("zero-weight flow")]
    ZeroWeight,
    #[error("invalid rate limit {0}")]
    InvalidRateLimit(f64),
    #[error("empty list of bandwidth functions")]
    EmptyList,
    #[error("invalid interval [{0}, {1}]")]
    InvalidInterval(f64, f64),
}

/// `a == b` up to [`REL_TOL`] relative error with an [`ABS_TOL`] floor.
pub fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= (REL_TOL * a.abs().max(b.abs())).max(ABS_TOL)
}

/// Piecewise-linear, non-decreasing map from fair share to bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BfFile", into = "BfFile")]
pub struct BandwidthFunction {
    points: Vec<(f64, f64)>,
}

/// On-disk form: `{"breakpoints": [[s, bps], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BfFile {
    pub breakpoints: Vec<(f64, f64)>,
}

impl TryFrom<BfFile> for BandwidthFunction {
    type Error = BfError;

    fn try_from(file: BfFile) -> Result<Self, Self::Error> {
        BandwidthFunction::new(file.breakpoints)
    }
}

impl From<BandwidthFunction> for BfFile {
    fn from(bf: BandwidthFunction) -> Self {
        BfFile {
            breakpoints: bf.points,
        }
    }
}

impl BandwidthFunction {
    /// Validates and wraps a breakpoint list.
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, BfError> {
        if points.is_empty() {
            return Err(BfError::Empty);
        }
        for (index, &(s, b)) in points.iter().enumerate() {
            if !s.is_finite() || !b.is_finite() || s < 0.0 || b < 0.0 {
                return Err(BfError::InvalidValue { index });
            }
        }
        if points[0].0 != 0.0 {
            return Err(BfError::FirstNotAtZero(points[0].0));
        }
        for (index, pair) in points.windows(2).enumerate() {
            if pair[1].0 <= pair[0].0 {
                return Err(BfError::ShareNotIncreasing {
                    index: index + 1,
                    share: pair[1].0,
                });
            }
            if pair[1].1 < pair[0].1 {
                return Err(BfError::BandwidthDecreasing {
                    index: index + 1,
                    bandwidth: pair[1].1,
                });
            }
        }
        Ok(Self { points })
    }

    /// Builds a BF from points that are sorted but may contain near-duplicate
    /// shares or tiny negative wiggles from floating-point rounding.
    fn from_sorted_lossy(raw: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut points: Vec<(f64, f64)> = Vec::new();
        for (s, b) in raw {
            let b = b.max(0.0);
            match points.last_mut() {
                Some(last) if s <= last.0 || approx_eq(s, last.0) => {
                    last.1 = last.1.max(b);
                }
                Some(last) => {
                    let b = b.max(last.1);
                    points.push((s, b));
                }
                None => points.push((s.max(0.0), b)),
            }
        }
        if points.is_empty() {
            points.push((0.0, 0.0));
        }
        points[0].0 = 0.0;
        Self { points }
    }

    /// Function that is constant at `bandwidth` for every fair share.
    pub fn constant(bandwidth: f64) -> Self {
        Self {
            points: vec![(0.0, bandwidth.max(0.0))],
        }
    }

    /// Linear BF through the origin with the given slope (bps per share unit),
    /// capped at `cap`.
    pub fn linear(slope: f64, cap: f64) -> Result<Self, BfError> {
        if !(slope > 0.0) || !slope.is_finite() {
            return Err(BfError::ZeroWeight);
        }
        if !(cap > 0.0) || !cap.is_finite() {
            return Err(BfError::InvalidRateLimit(cap));
        }
        Self::new(vec![(0.0, 0.0), (cap / slope, cap)])
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Bandwidth at the last breakpoint.
    pub fn max_bandwidth(&self) -> f64 {
        self.points.last().map(|p| p.1).unwrap_or(0.0)
    }

    /// Fair share of the last breakpoint (`sMax`).
    pub fn max_share(&self) -> f64 {
        self.points.last().map(|p| p.0).unwrap_or(0.0)
    }

    /// Bandwidth at fair share `s`; negative shares evaluate as 0.
    pub fn eval(&self, s: f64) -> f64 {
        let pts = &self.points;
        if s <= 0.0 {
            return pts[0].1;
        }
        // First breakpoint strictly beyond s.
        let idx = pts.partition_point(|p| p.0 <= s);
        if idx == pts.len() {
            return pts[idx - 1].1;
        }
        let (s0, b0) = pts[idx - 1];
        let (s1, b1) = pts[idx];
        b0 + (b1 - b0) * (s - s0) / (s1 - s0)
    }

    /// Smallest fair share whose bandwidth reaches `bw`.
    pub fn inverse(&self, bw: f64) -> Result<f64, BfError> {
        let max = self.max_bandwidth();
        if bw > max && !approx_eq(bw, max) {
            return Err(BfError::DemandExceedsRange { demand: bw, max });
        }
        Ok(self.inverse_clamped(bw))
    }

    /// Like [`inverse`](Self::inverse) but saturates at [`max_share`](Self::max_share)
    /// for demands above the range.
    pub fn inverse_clamped(&self, bw: f64) -> f64 {
        let pts = &self.points;
        if bw <= pts[0].1 {
            return 0.0;
        }
        // First breakpoint whose bandwidth reaches bw.
        let idx = pts.partition_point(|p| p.1 < bw);
        if idx == pts.len() {
            return self.max_share();
        }
        let (s0, b0) = pts[idx - 1];
        let (s1, b1) = pts[idx];
        s0 + (s1 - s0) * (bw - b0) / (b1 - b0)
    }

    /// Largest fair share whose bandwidth does not exceed `bw`, saturating at
    /// `sMax`. Differs from [`inverse_clamped`](Self::inverse_clamped) only on
    /// flat segments.
    fn inverse_right(&self, bw: f64) -> f64 {
        let pts = &self.points;
        if bw >= self.max_bandwidth() {
            return self.max_share();
        }
        // First breakpoint with bandwidth strictly above bw.
        let idx = pts.partition_point(|p| p.1 <= bw);
        if idx == 0 {
            return 0.0;
        }
        let (s0, b0) = pts[idx - 1];
        let (s1, b1) = pts[idx];
        s0 + (s1 - s0) * (bw - b0) / (b1 - b0)
    }

    /// Exact area under the curve over `[s0, s1]`.
    pub fn integral(&self, s0: f64, s1: f64) -> Result<f64, BfError> {
        if !(s0 >= 0.0) || !(s1 >= s0) || !s1.is_finite() {
            return Err(BfError::InvalidInterval(s0, s1));
        }
        Ok(self.primitive(s1) - self.primitive(s0))
    }

    /// Area under the curve over `[0, s]`.
    fn primitive(&self, s: f64) -> f64 {
        let mut area = 0.0;
        for pair in self.points.windows(2) {
            let (a, fa) = pair[0];
            let (b, fb) = pair[1];
            if s <= a {
                return area;
            }
            if s < b {
                let fs = fa + (fb - fa) * (s - a) / (b - a);
                return area + 0.5 * (fa + fs) * (s - a);
            }
            area += 0.5 * (fa + fb) * (b - a);
        }
        let last = *self.points.last().expect("non-empty");
        area + last.1 * (s - last.0).max(0.0)
    }

    /// Same shape with every bandwidth multiplied by `factor`.
    pub fn scale_bandwidth(&self, factor: f64) -> Self {
        Self::from_sorted_lossy(self.points.iter().map(|&(s, b)| (s, b * factor)))
    }

    /// Lifts the whole curve by `guarantee`.
    pub fn with_guarantee(&self, guarantee: f64) -> Self {
        Self::from_sorted_lossy(self.points.iter().map(|&(s, b)| (s, b + guarantee.max(0.0))))
    }
}

/// Initial flow BF: `srcWeight + dstWeight` fair-share units per unit of
/// share, each worth `unit` bps, capped at the device rate limit.
pub fn init_flow(
    src_weight: f64,
    dst_weight: f64,
    device_rate_limit: f64,
    unit: f64,
) -> Result<BandwidthFunction, BfError> {
    if !(src_weight >= 0.0) || !(dst_weight >= 0.0) {
        return Err(BfError::ZeroWeight);
    }
    let weight = src_weight + dst_weight;
    if weight <= 0.0 {
        return Err(BfError::ZeroWeight);
    }
    BandwidthFunction::linear(weight * unit, device_rate_limit)
}

/// [`init_flow`] with a minimum guarantee encoded as the value at share 0.
pub fn init_flow_with_guarantee(
    src_weight: f64,
    dst_weight: f64,
    device_rate_limit: f64,
    unit: f64,
    guarantee: f64,
) -> Result<BandwidthFunction, BfError> {
    init_flow(src_weight, dst_weight, device_rate_limit, unit)?;
    let guarantee = guarantee.clamp(0.0, device_rate_limit);
    let slope = (src_weight + dst_weight) * unit;
    let top = (device_rate_limit - guarantee) / slope;
    if top <= 0.0 {
        return Ok(BandwidthFunction::constant(guarantee));
    }
    BandwidthFunction::new(vec![(0.0, guarantee), (top, device_rate_limit)])
}

/// Pointwise sum over the merged breakpoint grid.
pub fn bf_sum(bfs: &[BandwidthFunction]) -> Result<BandwidthFunction, BfError> {
    if bfs.is_empty() {
        return Err(BfError::EmptyList);
    }
    let grid = merged_grid(bfs.iter().flat_map(|bf| bf.points.iter().map(|p| p.0)));
    let points = grid
        .into_iter()
        .map(|s| (s, bfs.iter().map(|bf| bf.eval(s)).sum()))
        .collect::<Vec<_>>();
    Ok(BandwidthFunction::from_sorted_lossy(points))
}

fn merged_grid(shares: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut grid: Vec<f64> = shares.collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Piecewise-linear non-decreasing map between fair-share domains. Two
/// consecutive points may share a source share, which encodes a jump; the map
/// evaluates to the left (smaller) value at the jump.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformMap {
    points: Vec<(f64, f64)>,
}

impl TransformMap {
    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn eval(&self, s: f64) -> f64 {
        let pts = &self.points;
        if s <= pts[0].0 {
            return pts[0].1;
        }
        let idx = pts.partition_point(|p| p.0 < s);
        if idx == pts.len() {
            return pts[idx - 1].1;
        }
        let (s0, t0) = pts[idx - 1];
        let (s1, t1) = pts[idx];
        if s1 == s0 {
            return t0;
        }
        t0 + (t1 - t0) * (s - s0) / (s1 - s0)
    }

    /// Upper end of the domain.
    pub fn domain_max(&self) -> f64 {
        self.points.last().map(|p| p.0).unwrap_or(0.0)
    }
}

/// The transform `T(s) = s' | addup(s) = tenant(s')`, choosing the smallest
/// `s'` on flat tenant segments and saturating at the tenant's `sMax` when the
/// add-up bandwidth exceeds the tenant's maximum.
pub fn bf_transform(addup: &BandwidthFunction, tenant: &BandwidthFunction) -> TransformMap {
    // Grid over the add-up domain: its own breakpoints plus the preimages of
    // the tenant's breakpoint bandwidths.
    let mut grid: Vec<f64> = addup.points.iter().map(|p| p.0).collect();
    for &(_, b) in &tenant.points {
        if b >= addup.points[0].1 && b <= addup.max_bandwidth() {
            grid.push(addup.inverse_clamped(b));
        }
    }
    let grid = merged_grid(grid.into_iter());

    let mut points = Vec::with_capacity(grid.len() * 2);
    for (i, &s) in grid.iter().enumerate() {
        let bw = addup.eval(s);
        let left = tenant.inverse_clamped(bw);
        points.push((s, left));
        // On a tenant plateau the smallest-share rule jumps to the far end of
        // the plateau as soon as the add-up bandwidth moves past it.
        let rising = grid
            .get(i + 1)
            .map(|&next| addup.eval(next) > bw)
            .unwrap_or(false);
        if rising {
            let right = tenant.inverse_right(bw);
            if right > left {
                points.push((s, right));
            }
        }
    }
    TransformMap { points }
}

/// Aggregates member-flow BFs with their tenant's BF so that the aggregated
/// BFs always add up to the tenant BF.
///
/// For every tenant share `s'` on the merged grid, each flow receives
/// `flow(σ(s'))` where `σ(s') = addup⁻¹(tenant(s'))`; the grid holds the
/// tenant's breakpoints and the transform images of the add-up breakpoints, so
/// each aggregated BF is exact between grid points.
pub fn bf_aggregate(
    flow_bfs: &[BandwidthFunction],
    tenant: &BandwidthFunction,
) -> Result<Vec<BandwidthFunction>, BfError> {
    let addup = bf_sum(flow_bfs)?;
    let transform = bf_transform(&addup, tenant);

    let s_max = tenant.max_share();
    let mut grid: Vec<f64> = tenant.points.iter().map(|p| p.0).collect();
    grid.extend(transform.points.iter().map(|p| p.1).filter(|&s| s <= s_max));
    let grid = merged_grid(grid.into_iter());

    let sigma: Vec<f64> = grid
        .iter()
        .map(|&s| addup.inverse_clamped(tenant.eval(s)))
        .collect();

    Ok(flow_bfs
        .iter()
        .map(|flow| {
            BandwidthFunction::from_sorted_lossy(
                grid.iter().zip(&sigma).map(|(&s, &x)| (s, flow.eval(x))),
            )
        })
        .collect())
}

/// Largest relative deviation of `Σ aggregated(s')` from `tenant(s')` over
/// `samples` evenly spaced shares in `[0, tenant sMax]` plus the tenant's
/// breakpoints. Deviations within [`ABS_TOL`] count as zero.
pub fn aggregation_residual(
    aggregated: &[BandwidthFunction],
    tenant: &BandwidthFunction,
    samples: usize,
) -> f64 {
    let s_max = tenant.max_share();
    let mut shares: Vec<f64> = (0..samples.max(1))
        .map(|i| s_max * i as f64 / (samples.max(2) - 1) as f64)
        .collect();
    shares.extend(tenant.points.iter().map(|p| p.0));
    shares
        .into_iter()
        .map(|s| {
            let want = tenant.eval(s);
            let got: f64 = aggregated.iter().map(|bf| bf.eval(s)).sum();
            let err = (got - want).abs();
            if err <= ABS_TOL {
                0.0
            } else {
                err / want.abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Signed fair-share compensation `nFS` with
/// `∫[old, old+nFS] bf = ∫[old, target] bf`, of minimal magnitude.
///
/// A BF is non-negative and non-decreasing, so it can only vanish on an
/// initial interval. Outside that interval the integrand is positive and the
/// unique solution is `target - old`; inside it both integrals are zero and
/// the minimal solution is 0.
pub fn solve_compensation(bf: &BandwidthFunction, old_fs: f64, target_fs: f64) -> f64 {
    let old_fs = old_fs.max(0.0);
    let target_fs = target_fs.max(0.0);
    let (lo, hi) = if old_fs <= target_fs {
        (old_fs, target_fs)
    } else {
        (target_fs, old_fs)
    };
    let area = bf.integral(lo, hi).unwrap_or(0.0);
    if area <= 0.0 {
        0.0
    } else {
        target_fs - old_fs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GBPS: f64 = 1e9;

    fn bf(points: &[(f64, f64)]) -> BandwidthFunction {
        BandwidthFunction::new(points.to_vec()).unwrap()
    }

    /// Dense-sampling oracle: smallest grid share whose value reaches `bw`.
    fn scan_inverse(f: &BandwidthFunction, bw: f64, hi: f64, steps: usize) -> f64 {
        (0..=steps)
            .map(|i| hi * i as f64 / steps as f64)
            .find(|&s| f.eval(s) >= bw * (1.0 - 1e-12))
            .unwrap()
    }

    /// Midpoint Riemann sum.
    fn riemann(f: &BandwidthFunction, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        (0..n).map(|i| f.eval(a + (i as f64 + 0.5) * h)).sum::<f64>() * h
    }

    #[test]
    fn validation_rejects_malformed_breakpoints() {
        assert_eq!(BandwidthFunction::new(vec![]), Err(BfError::Empty));
        assert_eq!(
            BandwidthFunction::new(vec![(1.0, 0.0)]),
            Err(BfError::FirstNotAtZero(1.0))
        );
        assert!(matches!(
            BandwidthFunction::new(vec![(0.0, 0.0), (1.0, 2.0), (1.0, 3.0)]),
            Err(BfError::ShareNotIncreasing { index: 2, .. })
        ));
        assert!(matches!(
            BandwidthFunction::new(vec![(0.0, 5.0), (1.0, 2.0)]),
            Err(BfError::BandwidthDecreasing { index: 1, .. })
        ));
        assert!(matches!(
            BandwidthFunction::new(vec![(0.0, f64::NAN)]),
            Err(BfError::InvalidValue { index: 0 })
        ));
    }

    #[test]
    fn eval_linear_midpoint_and_boundary() {
        let f = bf(&[(0.0, 0.0), (10.0, 30.0 * GBPS)]);
        assert_eq!(f.eval(5.0), 15.0 * GBPS);
        assert_eq!(f.eval(0.0), 0.0);
        assert_eq!(f.eval(25.0), 30.0 * GBPS);
        let g = bf(&[(0.0, 3.0), (1.0, 4.0)]);
        assert_eq!(g.eval(0.0), 3.0);
    }

    #[test]
    fn eval_init_flow_matches_closed_form_and_sampling() {
        let f = init_flow(1.0, 1.0, 40.0 * GBPS, GBPS).unwrap();
        // Closed form min(2 * 1 Gbps * s, 40 Gbps) at s = 10.
        assert_eq!(f.eval(10.0), 20.0 * GBPS);
        for i in 0..=4000 {
            let s = i as f64 * 0.01;
            let want = (2.0 * GBPS * s).min(40.0 * GBPS);
            assert!(approx_eq(f.eval(s), want), "s={s}");
        }
    }

    #[test]
    fn inverse_linear_and_zero() {
        let f = bf(&[(0.0, 0.0), (10.0, 30.0 * GBPS)]);
        assert_eq!(f.inverse(15.0 * GBPS).unwrap(), 5.0);
        assert_eq!(f.inverse(0.0).unwrap(), 0.0);
        assert!(matches!(
            f.inverse(31.0 * GBPS),
            Err(BfError::DemandExceedsRange { .. })
        ));
    }

    #[test]
    fn inverse_on_plateau_returns_left_edge() {
        let f = bf(&[(0.0, 0.0), (4.0, 8.0 * GBPS), (20.0, 8.0 * GBPS), (30.0, 12.0 * GBPS)]);
        let oracle = scan_inverse(&f, 8.0 * GBPS, 30.0, 300_000);
        assert!((oracle - 4.0).abs() < 1e-4);
        assert_eq!(f.inverse(8.0 * GBPS).unwrap(), 4.0);
        // Just above the plateau the inverse jumps past it.
        assert!(f.inverse(8.0 * GBPS + 1.0).unwrap() > 20.0);
    }

    #[test]
    fn sum_identity_and_doubling() {
        let f = bf(&[(0.0, 0.0), (10.0, 10.0)]);
        assert_eq!(bf_sum(std::slice::from_ref(&f)).unwrap(), f);
        assert_eq!(
            bf_sum(&[f.clone(), f.clone()]).unwrap(),
            bf(&[(0.0, 0.0), (10.0, 20.0)])
        );
        assert_eq!(bf_sum(&[]), Err(BfError::EmptyList));
    }

    #[test]
    fn sum_of_three_matches_pointwise_addition() {
        use rand::{Rng, SeedableRng};
        let fs = [
            bf(&[(0.0, 0.0), (1.0, 3.0), (4.0, 5.0)]),
            bf(&[(0.0, 1.0), (2.5, 2.0), (3.0, 9.0), (7.0, 9.5)]),
            bf(&[(0.0, 0.0), (0.5, 0.5), (6.0, 0.5)]),
        ];
        let total = bf_sum(&fs).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let s: f64 = rng.gen_range(0.0..10.0);
            let want: f64 = fs.iter().map(|f| f.eval(s)).sum();
            assert!(approx_eq(total.eval(s), want), "s={s}");
        }
    }

    #[test]
    fn transform_identity_and_doubling() {
        let t = bf(&[(0.0, 0.0), (10.0, 10.0)]);
        let id = bf_transform(&t, &t);
        for i in 0..=100 {
            let s = i as f64 * 0.1;
            assert!(approx_eq(id.eval(s), s));
        }
        // addup = 2 * tenant on the addup domain [0, 10].
        let addup = bf(&[(0.0, 0.0), (10.0, 40.0)]);
        let tenant = bf(&[(0.0, 0.0), (20.0, 40.0)]);
        let map = bf_transform(&addup, &tenant);
        for i in 0..=100 {
            let s = i as f64 * 0.1;
            assert!(approx_eq(map.eval(s), 2.0 * s), "s={s}");
            assert!(approx_eq(tenant.eval(map.eval(s)), addup.eval(s)));
        }
    }

    #[test]
    fn transform_saturates_at_tenant_smax() {
        let addup = bf(&[(0.0, 0.0), (10.0, 100.0)]);
        let tenant = bf(&[(0.0, 0.0), (4.0, 40.0)]);
        let map = bf_transform(&addup, &tenant);
        // Crossing at s = 4; identity below, flat at sMax = 4 above.
        for i in 0..=100 {
            let s = i as f64 * 0.1;
            let want = s.min(4.0);
            assert!(approx_eq(map.eval(s), want), "s={s}");
        }
        // Below the crossing the aggregated BFs still add up to the tenant.
        let flows = [bf(&[(0.0, 0.0), (10.0, 60.0)]), bf(&[(0.0, 0.0), (10.0, 40.0)])];
        let agg = bf_aggregate(&flows, &tenant).unwrap();
        for i in 0..=40 {
            let s = i as f64 * 0.1;
            let sum: f64 = agg.iter().map(|f| f.eval(s)).sum();
            assert!(approx_eq(sum, tenant.eval(s)));
        }
    }

    #[test]
    fn transform_jumps_across_tenant_plateau() {
        let addup = bf(&[(0.0, 0.0), (10.0, 100.0)]);
        let tenant = bf(&[(0.0, 0.0), (2.0, 20.0), (6.0, 20.0), (10.0, 100.0)]);
        let map = bf_transform(&addup, &tenant);
        assert!(approx_eq(map.eval(2.0), 2.0));
        assert!(map.eval(2.0 + 1e-9) > 6.0 - 1e-6);
        for i in 0..=100 {
            let s = i as f64 * 0.1;
            assert!(approx_eq(tenant.eval(map.eval(s)), addup.eval(s)), "s={s}");
        }
    }

    #[test]
    fn aggregate_single_flow_equals_tenant() {
        let flow = bf(&[(0.0, 0.0), (3.0, 12.0)]);
        let tenant = bf(&[(0.0, 0.0), (1.0, 1.0), (5.0, 1.0), (8.0, 10.0)]);
        let agg = bf_aggregate(std::slice::from_ref(&flow), &tenant).unwrap();
        assert_eq!(agg.len(), 1);
        for i in 0..=800 {
            let s = i as f64 * 0.01;
            assert!(approx_eq(agg[0].eval(s), tenant.eval(s)), "s={s}");
        }
    }

    #[test]
    fn aggregate_two_equal_flows_halves_tenant() {
        let flow = bf(&[(0.0, 0.0), (5.0, 10.0)]);
        let tenant = bf(&[(0.0, 0.0), (10.0, 15.0)]);
        let agg = bf_aggregate(&[flow.clone(), flow], &tenant).unwrap();
        for i in 0..=1000 {
            let s = i as f64 * 0.01;
            let half = tenant.eval(s) / 2.0;
            assert!(approx_eq(agg[0].eval(s), half), "s={s}");
            assert!(approx_eq(agg[1].eval(s), half), "s={s}");
        }
    }

    #[test]
    fn aggregate_unequal_flows_take_tenant_plateau() {
        // Two flows with different shapes, a tenant with a plateau.
        let flows = [
            bf(&[(0.0, 0.0), (2.0, 10.0 * GBPS), (10.0, 10.0 * GBPS)]),
            bf(&[(0.0, 0.0), (10.0, 20.0 * GBPS)]),
        ];
        let tenant = bf(&[(0.0, 0.0), (5.0, 10.0 * GBPS), (12.0, 10.0 * GBPS), (20.0, 25.0 * GBPS)]);
        let agg = bf_aggregate(&flows, &tenant).unwrap();
        assert!(aggregation_residual(&agg, &tenant, 1000) < REL_TOL);
        // Each aggregated BF is flat over the tenant plateau.
        for f in &agg {
            assert!(approx_eq(f.eval(5.0), f.eval(12.0)));
        }
    }

    #[test]
    fn aggregate_with_tenant_guarantee() {
        let flows = [init_flow(1.0, 1.0, 10.0, 1.0).unwrap(), init_flow(1.0, 0.0, 10.0, 1.0).unwrap()];
        let tenant = bf(&[(0.0, 2.0), (4.0, 10.0)]);
        let agg = bf_aggregate(&flows, &tenant).unwrap();
        assert!(aggregation_residual(&agg, &tenant, 1000) < REL_TOL);
        let at_zero: f64 = agg.iter().map(|f| f.eval(0.0)).sum();
        assert!(approx_eq(at_zero, 2.0));
    }

    #[test]
    fn init_flow_closed_forms() {
        let f = init_flow(1.0, 1.0, 40.0 * GBPS, GBPS).unwrap();
        assert_eq!(f.breakpoints(), &[(0.0, 0.0), (20.0, 40.0 * GBPS)]);
        let g = init_flow(1.0, 0.0, 10.0 * GBPS, GBPS).unwrap();
        assert_eq!(g.breakpoints(), &[(0.0, 0.0), (10.0, 10.0 * GBPS)]);
        assert_eq!(init_flow(0.0, 0.0, 1.0, 1.0), Err(BfError::ZeroWeight));
        let h = init_flow_with_guarantee(1.0, 1.0, 10.0 * GBPS, GBPS, 2.0 * GBPS).unwrap();
        assert_eq!(h.eval(0.0), 2.0 * GBPS);
        assert_eq!(h.max_bandwidth(), 10.0 * GBPS);
        assert!(approx_eq(h.eval(1.0), 4.0 * GBPS));
    }

    #[test]
    fn integral_closed_forms_and_errors() {
        let c = BandwidthFunction::constant(3.0);
        assert_eq!(c.integral(2.0, 7.0).unwrap(), 15.0);
        let f = bf(&[(0.0, 0.0), (10.0, 10.0)]);
        assert_eq!(f.integral(0.0, 10.0).unwrap(), 50.0);
        assert!(matches!(f.integral(3.0, 1.0), Err(BfError::InvalidInterval(..))));
    }

    #[test]
    fn integral_matches_riemann_oracle() {
        let f = bf(&[(0.0, 1.0), (1.5, 4.0), (2.0, 4.0), (6.0, 9.0)]);
        for &(a, b) in &[(0.0, 8.0), (0.3, 1.7), (1.9, 2.1), (5.0, 11.0)] {
            let exact = f.integral(a, b).unwrap();
            let approx = riemann(&f, a, b, 200_000);
            assert!((exact - approx).abs() / exact < 1e-6, "[{a},{b}]");
        }
    }

    /// Bisection oracle on the integral equality, searching the side of `old`
    /// that contains `target`.
    fn bisect_compensation(f: &BandwidthFunction, old: f64, target: f64) -> f64 {
        let want = if target >= old {
            f.integral(old, target).unwrap()
        } else {
            -f.integral(target, old).unwrap()
        };
        let signed = |x: f64| {
            if x >= old {
                f.integral(old, x).unwrap()
            } else {
                -f.integral(x, old).unwrap()
            }
        };
        let (mut lo, mut hi) = if target >= old { (old, old + 100.0) } else { (0.0, old) };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if signed(mid) < want {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi - old
    }

    #[test]
    fn compensation_examples() {
        let f = bf(&[(0.0, 0.0), (10.0, 10.0)]);
        assert_eq!(solve_compensation(&f, 4.0, 4.0), 0.0);
        let oracle = bisect_compensation(&f, 2.0, 5.0);
        assert!((oracle - 3.0).abs() < 1e-9);
        assert_eq!(solve_compensation(&f, 2.0, 5.0), 3.0);
        assert_eq!(solve_compensation(&f, 5.0, 2.0), -3.0);
        // Zero-bandwidth region: any nFS keeping the interval inside it works.
        let g = bf(&[(0.0, 0.0), (3.0, 0.0), (5.0, 4.0)]);
        assert_eq!(solve_compensation(&g, 1.0, 2.5), 0.0);
        assert_eq!(solve_compensation(&g, 2.5, 1.0), 0.0);
        assert!((solve_compensation(&g, 1.0, 4.0) - 3.0).abs() < 1e-12);
        let oracle = bisect_compensation(&g, 1.0, 4.0);
        assert!((oracle - 3.0).abs() < 1e-6);
    }

    #[test]
    fn serde_round_trip_uses_breakpoint_pairs() {
        let f = bf(&[(0.0, 0.0), (10.0, 1e10)]);
        let text = serde_json::to_string(&f).unwrap();
        assert_eq!(text, r#"{"breakpoints":[[0.0,0.0],[10.0,10000000000.0]]}"#);
        let back: BandwidthFunction = serde_json::from_str(&text).unwrap();
        assert_eq!(back, f);
        assert!(serde_json::from_str::<BandwidthFunction>(r#"{"breakpoints":[[1,0]]}"#).is_err());
    }
}
