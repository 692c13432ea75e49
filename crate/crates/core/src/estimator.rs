//! Community recovery from an observed trajectory.
//!
//! The statistic is the column sum of the empirical lag-one covariance,
//! `σ̂ⱼ = Σᵢ [ (T-1)⁻¹ Σ_{t≥2} X_{i,t} X_{j,t-1} - (Zᵢ/T)(Zⱼ/T) ]`.
//! Summing over i first gives the O(NT) form
//! `σ̂ⱼ = (T-1)⁻¹ Σ_{t≥2} S_t X_{j,t-1} - Z_tot Zⱼ / T²`, with `S_t` the
//! number of active components at time t. Both sums are integers and are
//! accumulated exactly, so the only rounding happens in the final division.
//!
//! Components are split in two with 2-means on the scalar values of σ̂,
//! started from (min, max); the cluster with the higher centroid is declared
//! excitatory.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::environment::CommunityLayout;
use crate::error::{Error, Result};
use crate::simulator::Trajectory;

/// Exact integer sufficient statistics for σ̂.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LagStatistics {
    pub t: usize,
    pub n: usize,
    /// `Σ_{t=2}^T S_t X_{j,t-1}` per component j.
    pub cross: Vec<u64>,
    /// `Zⱼ`.
    pub counts: Vec<u64>,
    /// `Σⱼ Zⱼ`.
    pub total: u64,
}

fn active_indices(words: &[u64], mut f: impl FnMut(usize)) {
    for (w, &word) in words.iter().enumerate() {
        let mut bits = word;
        while bits != 0 {
            f(w * 64 + bits.trailing_zeros() as usize);
            bits &= bits - 1;
        }
    }
}

impl LagStatistics {
    pub fn from_trajectory(traj: &Trajectory) -> Result<Self> {
        Self::from_trajectory_chunked(traj, usize::MAX)
    }

    /// Accumulate over time blocks of `chunk` steps in parallel.
    pub fn from_trajectory_chunked(traj: &Trajectory, chunk: usize) -> Result<Self> {
        let (t_len, n) = (traj.t(), traj.n());
        if t_len < 2 {
            return Err(Error::TooFewSteps { needed: 2, got: t_len });
        }
        let chunk = chunk.clamp(1, t_len);
        let states = traj.states();
        let block = |start: usize| {
            let end = (start + chunk).min(t_len);
            let mut cross = vec![0u64; n];
            let mut counts = vec![0u64; n];
            for t in start..end {
                let row = states.row_words(t);
                active_indices(row, |j| counts[j] += 1);
                if t > 0 {
                    let s_t: u64 = row.iter().map(|w| w.count_ones() as u64).sum();
                    if s_t > 0 {
                        active_indices(states.row_words(t - 1), |j| cross[j] += s_t);
                    }
                }
            }
            (cross, counts)
        };
        let starts: Vec<usize> = (0..t_len).step_by(chunk).collect();
        let (cross, counts) = if starts.len() == 1 {
            block(0)
        } else {
            starts.into_par_iter().map(block).reduce(
                || (vec![0; n], vec![0; n]),
                |(mut c1, mut z1), (c2, z2)| {
                    c1.iter_mut().zip(c2).for_each(|(a, b)| *a += b);
                    z1.iter_mut().zip(z2).for_each(|(a, b)| *a += b);
                    (c1, z1)
                },
            )
        };
        let total = counts.iter().sum();
        Ok(LagStatistics { t: t_len, n, cross, counts, total })
    }

    pub fn sigma_hat(&self) -> Vec<f64> {
        let t = self.t as f64;
        let t2 = (self.t as u128) * (self.t as u128);
        self.cross
            .iter()
            .zip(&self.counts)
            .map(|(&c, &z)| c as f64 / (t - 1.0) - ((self.total as u128 * z as u128) as f64) / t2 as f64)
            .collect()
    }
}

/// σ̂ᴺ of a trajectory (needs T ≥ 2).
pub fn sigma_hat(traj: &Trajectory) -> Result<Vec<f64>> {
    Ok(LagStatistics::from_trajectory(traj)?.sigma_hat())
}

/// Empirical lag-0 and lag-1 covariance matrices, centred with the
/// whole-sample means. Lag-1 entry (i, j) pairs `X_{i,t}` with `X_{j,t-1}`.
pub fn empirical_covariances(traj: &Trajectory) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (t_len, n) = (traj.t(), traj.n());
    if t_len < 2 {
        return Err(Error::TooFewSteps { needed: 2, got: t_len });
    }
    let mut same = vec![0u64; n * n];
    let mut lag = vec![0u64; n * n];
    let mut counts = vec![0u64; n];
    let mut cur = Vec::with_capacity(n);
    let mut prev: Vec<usize> = Vec::with_capacity(n);
    for t in 0..t_len {
        cur.clear();
        active_indices(traj.states().row_words(t), |i| cur.push(i));
        for &i in &cur {
            counts[i] += 1;
            for &j in &cur {
                same[i * n + j] += 1;
            }
            for &j in &prev {
                lag[i * n + j] += 1;
            }
        }
        std::mem::swap(&mut cur, &mut prev);
    }
    let t = t_len as f64;
    let means: Vec<f64> = counts.iter().map(|&c| c as f64 / t).collect();
    let s0 = DMatrix::from_fn(n, n, |i, j| same[i * n + j] as f64 / t - means[i] * means[j]);
    let s1 = DMatrix::from_fn(n, n, |i, j| lag[i * n + j] as f64 / (t - 1.0) - means[i] * means[j]);
    Ok((s0, s1))
}

/// Output of [`kmeans2`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KMeans2 {
    /// `(low, high)` centroids.
    pub centroids: (f64, f64),
    /// `+1` for the high-centroid cluster.
    pub labels: Vec<i8>,
    /// Lloyd updates that changed the partition.
    pub iters: usize,
    /// Whether Lloyd's fixed point was replaced by the exact optimum.
    pub refined: bool,
}

fn assign(values: &[f64], lo: f64, hi: f64) -> Vec<bool> {
    // equidistant points join the low cluster
    values.iter().map(|&v| (v - hi).abs() < (v - lo).abs()).collect()
}

fn centroids_of(values: &[f64], high: &[bool]) -> (Option<f64>, Option<f64>) {
    let (mut sl, mut nl, mut sh, mut nh) = (0.0, 0usize, 0.0, 0usize);
    for (&v, &h) in values.iter().zip(high) {
        if h {
            sh += v;
            nh += 1;
        } else {
            sl += v;
            nl += 1;
        }
    }
    ((nl > 0).then(|| sl / nl as f64), (nh > 0).then(|| sh / nh as f64))
}

/// Within-cluster sum of squares of a two-way split.
pub fn within_ss(values: &[f64], high: &[bool]) -> f64 {
    let (lo, hi) = centroids_of(values, high);
    values
        .iter()
        .zip(high)
        .map(|(&v, &h)| {
            let c = if h { hi } else { lo }.unwrap_or(v);
            (v - c) * (v - c)
        })
        .sum()
}

/// Best split of the sorted values into a lower and an upper block, by
/// within-cluster sum of squares. Returns the high-side indicator.
fn best_threshold_split(values: &[f64]) -> Vec<bool> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let mean = sorted.iter().sum::<f64>() / n as f64;
    // centred prefix sums for stability
    let mut prefix = vec![(0.0, 0.0); n + 1];
    for (k, &v) in sorted.iter().enumerate() {
        let d = v - mean;
        prefix[k + 1] = (prefix[k].0 + d, prefix[k].1 + d * d);
    }
    let (tot, tot2) = prefix[n];
    let mut best = (f64::INFINITY, 0usize);
    for k in 1..n {
        if sorted[k - 1] == sorted[k] {
            continue;
        }
        let (s, s2) = prefix[k];
        let (r, r2) = (tot - s, tot2 - s2);
        let cost = (s2 - s * s / k as f64) + (r2 - r * r / (n - k) as f64);
        if cost < best.0 {
            best = (cost, k);
        }
    }
    let mut high = vec![false; n];
    for &i in &order[best.1..] {
        high[i] = true;
    }
    high
}

/// Two-cluster k-means on scalars.
///
/// Runs Lloyd's iteration from centroids `(min, max)` until the partition
/// stops changing or `max_iter` updates have been made. Lloyd's fixed point
/// can be a non-optimal threshold; if the best threshold split has a strictly
/// smaller within-cluster sum of squares it is returned instead (that split is
/// itself Lloyd-stable) and `refined` is set.
pub fn kmeans2(values: &[f64], max_iter: usize) -> Result<KMeans2> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParam { field: "values", reason: "non-finite entry".into() });
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if values.len() < 2 || min == max {
        return Err(Error::Degenerate);
    }

    let (mut lo, mut hi) = (min, max);
    let mut high: Vec<bool> = Vec::new();
    let mut iters = 0;
    while iters < max_iter.max(1) {
        let next = assign(values, lo, hi);
        if next == high {
            break;
        }
        high = next;
        iters += 1;
        let (l, h) = centroids_of(values, &high);
        lo = l.unwrap_or(lo);
        hi = h.unwrap_or(hi);
    }

    let mut refined = false;
    let lloyd_ss = within_ss(values, &high);
    let candidate = best_threshold_split(values);
    let candidate_ss = within_ss(values, &candidate);
    let scale: f64 = values.iter().map(|v| v * v).sum::<f64>() + 1.0;
    if candidate_ss < lloyd_ss - 1e-12 * scale {
        high = candidate;
        let (l, h) = centroids_of(values, &high);
        lo = l.unwrap_or(lo);
        hi = h.unwrap_or(hi);
        refined = true;
    }

    Ok(KMeans2 { centroids: (lo, hi), labels: high.iter().map(|&h| if h { 1 } else { -1 }).collect(), iters, refined })
}

pub const DEFAULT_KMEANS_ITERS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryResult {
    pub sigma_hat: Vec<f64>,
    pub centroids: (f64, f64),
    pub labels_hat: Vec<i8>,
    pub kmeans_iters: usize,
    pub refined: bool,
}

/// σ̂ followed by 2-means.
pub fn recover(traj: &Trajectory) -> Result<RecoveryResult> {
    let sigma_hat = sigma_hat(traj)?;
    let km = kmeans2(&sigma_hat, DEFAULT_KMEANS_ITERS)?;
    Ok(RecoveryResult {
        sigma_hat,
        centroids: km.centroids,
        labels_hat: km.labels,
        kmeans_iters: km.iters,
        refined: km.refined,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecoveryScore {
    pub exact: bool,
    /// `|P̂₊ Δ P₊| / N`.
    pub misclassified_fraction: f64,
}

impl RecoveryScore {
    /// Score assigned when clustering is impossible (all σ̂ equal).
    pub fn failed(layout: &CommunityLayout) -> Self {
        let n = layout.n().max(1);
        RecoveryScore {
            exact: false,
            misclassified_fraction: layout.plus_count().min(layout.minus_count()) as f64 / n as f64,
        }
    }
}

/// Labeled comparison: no label permutation is tried.
pub fn score(labels_hat: &[i8], layout: &CommunityLayout) -> Result<RecoveryScore> {
    if labels_hat.len() != layout.n() {
        return Err(Error::DimensionMismatch { expected: layout.n(), got: labels_hat.len() });
    }
    let wrong = labels_hat.iter().zip(layout.labels()).filter(|(a, b)| a != b).count();
    Ok(RecoveryScore { exact: wrong == 0, misclassified_fraction: wrong as f64 / layout.n().max(1) as f64 })
}

/// `(max same-community gap, min cross-community gap)`.
pub fn separation_stats(values: &[f64], layout: &CommunityLayout) -> Result<(f64, f64)> {
    if values.len() != layout.n() {
        return Err(Error::DimensionMismatch { expected: layout.n(), got: values.len() });
    }
    let range = |plus: bool| {
        let vs = values.iter().enumerate().filter(|(j, _)| layout.is_plus(*j) == plus).map(|(_, &v)| v);
        vs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let (plo, phi) = range(true);
    let (mlo, mhi) = range(false);
    let spread = |lo: f64, hi: f64| if lo <= hi { hi - lo } else { 0.0 };
    let max_intra = spread(plo, phi).max(spread(mlo, mhi));

    let mut plus: Vec<f64> = (0..values.len()).filter(|&j| layout.is_plus(j)).map(|j| values[j]).collect();
    plus.sort_by(f64::total_cmp);
    let min_inter = (0..values.len())
        .filter(|&j| !layout.is_plus(j))
        .map(|j| {
            let v = values[j];
            let k = plus.partition_point(|&x| x < v);
            let left = k.checked_sub(1).map_or(f64::INFINITY, |k| v - plus[k]);
            let right = plus.get(k).map_or(f64::INFINITY, |&x| x - v);
            left.min(right)
        })
        .fold(f64::INFINITY, f64::min);
    Ok((max_intra, min_inter))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ModelParams;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn layout_of(labels: &[i8]) -> CommunityLayout {
        CommunityLayout::from_labels(labels.to_vec()).unwrap()
    }

    #[test]
    fn constant_trajectories_give_zero() {
        for bit in [0u8, 1] {
            let traj = Trajectory::from_rows(&vec![vec![bit; 5]; 7]).unwrap();
            assert!(sigma_hat(&traj).unwrap().iter().all(|&s| s == 0.0));
        }
    }

    #[test]
    fn sigma_hat_needs_two_steps() {
        let traj = Trajectory::from_rows(&[vec![1, 0]]).unwrap();
        assert!(matches!(sigma_hat(&traj), Err(Error::TooFewSteps { .. })));
    }

    #[test]
    fn sigma_hat_matches_float_double_sum() {
        let mut rng = rng_from_seed(1);
        let rows: Vec<Vec<u8>> = (0..40).map(|_| (0..7).map(|_| rng.gen_bool(0.4) as u8).collect()).collect();
        let traj = Trajectory::from_rows(&rows).unwrap();
        let t = rows.len() as f64;
        let z: Vec<f64> = (0..7).map(|i| rows.iter().map(|r| r[i] as f64).sum()).collect();
        for j in 0..7 {
            let mut direct = 0.0;
            for i in 0..7 {
                let lagged: f64 = (1..rows.len()).map(|s| (rows[s][i] * rows[s - 1][j]) as f64).sum();
                direct += lagged / (t - 1.0) - (z[i] / t) * (z[j] / t);
            }
            assert!((direct - sigma_hat(&traj).unwrap()[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn chunked_accumulation_is_identical() {
        let mut rng = rng_from_seed(2);
        let rows: Vec<Vec<u8>> = (0..1001).map(|_| (0..70).map(|_| rng.gen_bool(0.3) as u8).collect()).collect();
        let traj = Trajectory::from_rows(&rows).unwrap();
        let whole = LagStatistics::from_trajectory(&traj).unwrap();
        for chunk in [1, 7, 100, 1000, 5000] {
            assert_eq!(LagStatistics::from_trajectory_chunked(&traj, chunk).unwrap(), whole);
        }
    }

    #[test]
    fn empirical_covariance_small_case() {
        let traj = Trajectory::from_rows(&[vec![1, 0], vec![0, 1], vec![1, 1], vec![0, 0]]).unwrap();
        let (s0, s1) = empirical_covariances(&traj).unwrap();
        assert!((s0[(0, 0)] - 0.25).abs() < 1e-15);
        assert!((s0[(0, 1)] - (0.25 - 0.25)).abs() < 1e-15);
        // pairs (t, t-1): X_0,t X_1,t-1 over t=2..4: 0*0 + 1*1 + 0*1 = 1
        assert!((s1[(0, 1)] - (1.0 / 3.0 - 0.25)).abs() < 1e-15);
    }

    #[test]
    fn kmeans_obvious_split() {
        let km = kmeans2(&[1.0, 0.9, -1.0], 100).unwrap();
        assert_eq!(km.labels, vec![1, 1, -1]);
        assert!((km.centroids.1 - 0.95).abs() < 1e-15);
        assert_eq!(km.centroids.0, -1.0);
        assert!(!km.refined);
    }

    #[test]
    fn kmeans_singleton_max() {
        let km = kmeans2(&[0.2, 0.2, 0.2, 0.2, 0.7], 100).unwrap();
        assert_eq!(km.labels, vec![-1, -1, -1, -1, 1]);
    }

    #[test]
    fn kmeans_degenerate() {
        assert!(matches!(kmeans2(&[0.3; 6], 100), Err(Error::Degenerate)));
        assert!(matches!(kmeans2(&[0.3], 100), Err(Error::Degenerate)));
        assert!(kmeans2(&[0.3, f64::NAN], 100).is_err());
    }

    #[test]
    fn kmeans_ties_join_low() {
        // 0.5 is equidistant from the initial centroids 0 and 1
        let km = kmeans2(&[0.0, 0.5, 1.0], 1).unwrap();
        assert_eq!(km.iters, 1);
        assert_eq!(&km.labels, &[-1, -1, 1]);
    }

    #[test]
    fn kmeans_planted_split_one_iteration() {
        let (sp, sm) = (0.05859375, -0.05859375);
        let mut rng = rng_from_seed(3);
        for _ in 0..50 {
            let truth: Vec<i8> = (0..10).map(|j| if j < 5 { 1 } else { -1 }).collect();
            let values: Vec<f64> =
                truth.iter().map(|&l| if l == 1 { sp } else { sm } + rng.gen_range(-0.01..0.01)).collect();
            let km = kmeans2(&values, 100).unwrap();
            assert_eq!(km.labels, truth);
            assert_eq!(km.iters, 1);
            // exhaustive 2-partition check
            let best = (1u32..(1 << 10) - 1)
                .map(|mask| {
                    let high: Vec<bool> = (0..10).map(|j| mask >> j & 1 == 1).collect();
                    (within_ss(&values, &high), high)
                })
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .unwrap();
            let got: Vec<bool> = km.labels.iter().map(|&l| l == 1).collect();
            let flipped: Vec<bool> = best.1.iter().map(|b| !b).collect();
            assert!(got == best.1 || got == flipped);
        }
    }

    #[test]
    fn lloyd_local_optimum_is_refined() {
        // Lloyd from (min, max) stops at a non-optimal threshold on this input
        let values = [
            0.13509651, 0.31024188, 0.38892142, 0.48583536, 0.52535432, 0.65045928, 0.68554198, 0.68844673, 0.72148834,
            0.88948783,
        ];
        let km = kmeans2(&values, 100).unwrap();
        let high: Vec<bool> = km.labels.iter().map(|&l| l == 1).collect();
        assert_eq!(high, best_threshold_split(&values));
        assert!(km.refined);
    }

    proptest! {
        #[test]
        fn kmeans_permutation_invariant(values in prop::collection::vec(-1.0f64..1.0, 2..30), seed in 0u64..1000) {
            prop_assume!(values.iter().any(|&v| v != values[0]));
            let base = kmeans2(&values, 100).unwrap();
            let mut perm: Vec<usize> = (0..values.len()).collect();
            perm.shuffle(&mut rng_from_seed(seed));
            let shuffled: Vec<f64> = perm.iter().map(|&i| values[i]).collect();
            let km = kmeans2(&shuffled, 100).unwrap();
            for (k, &i) in perm.iter().enumerate() {
                prop_assert_eq!(km.labels[k], base.labels[i]);
            }
        }

        #[test]
        fn kmeans_nearest_centroid(values in prop::collection::vec(-1.0f64..1.0, 2..30)) {
            prop_assume!(values.iter().any(|&v| v != values[0]));
            let km = kmeans2(&values, 100).unwrap();
            let (lo, hi) = km.centroids;
            prop_assert!(lo <= hi);
            for (&v, &l) in values.iter().zip(&km.labels) {
                if (v - hi).abs() < (v - lo).abs() { prop_assert_eq!(l, 1); }
                if (v - hi).abs() > (v - lo).abs() { prop_assert_eq!(l, -1); }
            }
        }

        #[test]
        fn score_triangle_inequality(n in 1usize..40, seed in 0u64..10_000) {
            let mut rng = rng_from_seed(seed);
            let mut draw = || -> Vec<i8> { (0..n).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect() };
            let (a, b, c) = (draw(), draw(), draw());
            let d = |x: &[i8], y: &[i8]| score(x, &layout_of(y)).unwrap().misclassified_fraction;
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
            let s = score(&a, &layout_of(&b)).unwrap();
            prop_assert_eq!(s.exact, s.misclassified_fraction == 0.0);
        }
    }

    #[test]
    fn score_examples() {
        let layout = CommunityLayout::canonical(&ModelParams::defaults());
        let truth = layout.labels().to_vec();
        let s = score(&truth, &layout).unwrap();
        assert!(s.exact && s.misclassified_fraction == 0.0);
        let mut one = truth.clone();
        one[3] = -1;
        let s = score(&one, &layout).unwrap();
        assert!(!s.exact && (s.misclassified_fraction - 0.02).abs() < 1e-15);
        let all: Vec<i8> = truth.iter().map(|l| -l).collect();
        assert_eq!(score(&all, &layout).unwrap().misclassified_fraction, 1.0);
        assert!(score(&truth[..10], &layout).is_err());
        assert_eq!(RecoveryScore::failed(&layout).misclassified_fraction, 0.5);
    }

    #[test]
    fn separation_examples() {
        let labels = [1i8, 1, -1, -1, 1];
        let layout = layout_of(&labels);
        let values: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
        assert_eq!(separation_stats(&values, &layout).unwrap(), (0.0, 2.0));
        assert_eq!(separation_stats(&[0.3; 5], &layout).unwrap(), (0.0, 0.0));
        let (intra, inter) = separation_stats(&[0.1, 0.4, -0.2, 0.0, 0.2], &layout).unwrap();
        assert!((intra - 0.3).abs() < 1e-15);
        assert!((inter - 0.1).abs() < 1e-15);
    }
}
