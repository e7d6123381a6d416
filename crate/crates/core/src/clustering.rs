//! Suspect-event clustering in (P, Q, THD) space and dominant-cluster
//! selection.
//!
//! Two interchangeable methods group suspects so that the appliance's own
//! events — assumed to outnumber everything else that slipped through
//! filtration — surface as the largest cluster:
//!
//! * Mean-shift with a flat kernel over features min-max scaled to
//!   `[1, 100]`. Non-parametric: the cluster count is discovered, not given.
//! * Weight-based clustering driven by a per-category weighted similarity
//!   index. Each feature contributes `1 - |x_e - x_c| / |x_c|` (floored at
//!   zero once the relative deviation exceeds one), and the weighted sum is
//!   compared against a similarity threshold. Runs in original units; the
//!   index is scale-free by construction.
//!
//! Both methods are deterministic: events are swept in input order and the
//! weight-based seed is the first event (rotatable via `seed_index`).

use crate::error::ClusteringError;
use crate::meterdata::LoadEvent;

/// Clustering method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMethod {
    MeanShift,
    WeightBased,
}

/// Parameters shared by both clustering methods.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ClusterParams {
    pub method: ClusterMethod,
    /// Flat-kernel radius in normalized units (mean-shift).
    pub bandwidth: f64,
    /// Merge threshold on the similarity index (weight-based).
    pub similarity_threshold: f64,
    /// Lower bound of the normalized feature range.
    pub norm_lo: f64,
    /// Upper bound of the normalized feature range.
    pub norm_hi: f64,
    pub max_iter: usize,
    /// Mean-shift convergence tolerance in normalized units.
    pub convergence_eps: f64,
    /// Which event (in input order) seeds the first weight-based cluster.
    pub seed_index: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            method: ClusterMethod::WeightBased,
            bandwidth: 10.0,
            similarity_threshold: 0.8,
            norm_lo: 1.0,
            norm_hi: 100.0,
            max_iter: 500,
            convergence_eps: 1e-3,
            seed_index: 0,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<(), ClusteringError> {
        if !(5.0..=20.0).contains(&self.bandwidth) {
            return Err(ClusteringError::InvalidParams(format!(
                "bandwidth {} outside the calibrated 5..20 range",
                self.bandwidth
            )));
        }
        if !(self.similarity_threshold > 0.0 && self.similarity_threshold < 1.0) {
            return Err(ClusteringError::InvalidParams(format!(
                "similarity_threshold {} must be in (0, 1)",
                self.similarity_threshold
            )));
        }
        if self.max_iter == 0 {
            return Err(ClusteringError::InvalidParams("max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Feature triple of an event: (dP watts, dQ vars, THD fraction).
/// Unknown THD enters clustering as zero.
pub fn event_features(e: &LoadEvent) -> [f64; 3] {
    [e.dp_w, e.dq_var, e.thd.unwrap_or(0.0)]
}

/// Min-max scaling record, retained to invert the transform.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScaling {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    /// Per feature: true when the inputs had no spread (all values mapped to
    /// the range midpoint).
    pub degenerate: [bool; 3],
    pub norm_lo: f64,
    pub norm_hi: f64,
}

impl FeatureScaling {
    pub fn apply(&self, x: &[f64; 3]) -> [f64; 3] {
        let mid = (self.norm_lo + self.norm_hi) / 2.0;
        std::array::from_fn(|d| {
            if self.degenerate[d] {
                mid
            } else {
                self.norm_lo
                    + (self.norm_hi - self.norm_lo) * (x[d] - self.lo[d])
                        / (self.hi[d] - self.lo[d])
            }
        })
    }

    pub fn invert(&self, scaled: &[f64; 3]) -> [f64; 3] {
        std::array::from_fn(|d| {
            if self.degenerate[d] {
                self.lo[d]
            } else {
                self.lo[d]
                    + (scaled[d] - self.norm_lo) * (self.hi[d] - self.lo[d])
                        / (self.norm_hi - self.norm_lo)
            }
        })
    }
}

/// Min-max scales each feature independently to `[norm_lo, norm_hi]`
/// (1..100 by default). A feature with no spread maps to the midpoint and
/// is flagged degenerate.
pub fn normalize_features(events: &[LoadEvent]) -> (Vec<[f64; 3]>, FeatureScaling) {
    normalize_features_to(events, 1.0, 100.0)
}

pub fn normalize_features_to(
    events: &[LoadEvent],
    norm_lo: f64,
    norm_hi: f64,
) -> (Vec<[f64; 3]>, FeatureScaling) {
    let features: Vec<[f64; 3]> = events.iter().map(event_features).collect();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for f in &features {
        for d in 0..3 {
            lo[d] = lo[d].min(f[d]);
            hi[d] = hi[d].max(f[d]);
        }
    }
    let degenerate = std::array::from_fn(|d| !(hi[d] > lo[d]));
    let scaling = FeatureScaling {
        lo,
        hi,
        degenerate,
        norm_lo,
        norm_hi,
    };
    let scaled = features.iter().map(|f| scaling.apply(f)).collect();
    (scaled, scaling)
}

/// A cluster of events with arithmetic-mean signature in original units.
#[derive(Debug, Clone, PartialEq)]
pub struct EventCluster {
    pub members: Vec<LoadEvent>,
    pub mean_p: f64,
    pub mean_q: f64,
    /// Fraction, not percent.
    pub mean_thd: f64,
}

impl EventCluster {
    pub fn from_member_indices(events: &[LoadEvent], indices: &[usize]) -> Self {
        let members: Vec<LoadEvent> = indices.iter().map(|&i| events[i].clone()).collect();
        let n = members.len().max(1) as f64;
        let mean_p = members.iter().map(|e| e.dp_w).sum::<f64>() / n;
        let mean_q = members.iter().map(|e| e.dq_var).sum::<f64>() / n;
        let mean_thd = members.iter().map(|e| e.thd.unwrap_or(0.0)).sum::<f64>() / n;
        Self {
            members,
            mean_p,
            mean_q,
            mean_thd,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let mut sum = 0.0;
    for d in 0..3 {
        let delta = a[d] - b[d];
        sum += delta * delta;
    }
    sum.sqrt()
}

/// Flat-kernel mean-shift over already-normalized features. Returns the
/// partition as member-index lists ordered by first member.
pub fn mean_shift_partition(
    features: &[[f64; 3]],
    params: &ClusterParams,
) -> Result<Vec<Vec<usize>>, ClusteringError> {
    if features.is_empty() {
        return Ok(Vec::new());
    }
    let bw = params.bandwidth;
    let mut modes: Vec<[f64; 3]> = Vec::with_capacity(features.len());
    for start in features {
        let mut pos = *start;
        let mut converged = false;
        for _ in 0..params.max_iter {
            let mut mean = [0.0; 3];
            let mut count = 0usize;
            for f in features {
                if dist(&pos, f) <= bw {
                    for d in 0..3 {
                        mean[d] += f[d];
                    }
                    count += 1;
                }
            }
            // The seed itself is always within the kernel, so count >= 1.
            for d in &mut mean {
                *d /= count as f64;
            }
            if dist(&mean, &pos) < params.convergence_eps {
                pos = mean;
                converged = true;
                break;
            }
            pos = mean;
        }
        if !converged {
            return Err(ClusteringError::NoConvergence {
                max_iter: params.max_iter,
                partial: assign_to_modes(features, &modes),
            });
        }
        modes.push(pos);
    }

    // Merge modes closer than half a bandwidth, keeping the first of each
    // group as the representative.
    let mut merged: Vec<[f64; 3]> = Vec::new();
    for mode in &modes {
        if !merged.iter().any(|m| dist(m, mode) < bw / 2.0) {
            merged.push(*mode);
        }
    }
    Ok(assign_to_modes(features, &merged))
}

fn assign_to_modes(features: &[[f64; 3]], modes: &[[f64; 3]]) -> Vec<Vec<usize>> {
    if modes.is_empty() {
        return Vec::new();
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); modes.len()];
    for (i, f) in features.iter().enumerate() {
        let nearest = modes
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| dist(f, a).partial_cmp(&dist(f, b)).unwrap())
            .map(|(j, _)| j)
            .unwrap();
        groups[nearest].push(i);
    }
    groups.retain(|g| !g.is_empty());
    groups.sort_by_key(|g| g[0]);
    groups
}

/// Mean-shift clustering of events: normalize, find modes, assign, and
/// report cluster means in original units.
pub fn mean_shift_cluster(
    events: &[LoadEvent],
    params: &ClusterParams,
) -> Result<Vec<EventCluster>, ClusteringError> {
    let (features, _) = normalize_features_to(events, params.norm_lo, params.norm_hi);
    let partition = mean_shift_partition(&features, params)?;
    Ok(partition
        .iter()
        .map(|idx| EventCluster::from_member_indices(events, idx))
        .collect())
}

/// Meter noise floors per feature (watts, vars, THD fraction). The
/// relative deviation against a cluster-mean feature is measured against
/// at least the floor: readings that small are noise-dominated, and
/// dividing by them would make same-class events look dissimilar (a zero
/// denominator is outright undefined). An exactly-zero feature still
/// matches only features within the floor.
pub const SIMILARITY_NOISE_FLOOR: [f64; 3] = [10.0, 20.0, 0.02];

/// Per-feature similarity: `1 - |e - c| / max(|c|, floor)`, clipped to zero
/// once the deviation exceeds the denominator.
fn feature_similarity(e: f64, c: f64, floor: f64) -> f64 {
    let denom = c.abs().max(floor);
    let dev = (e - c).abs() / denom;
    if dev <= 1.0 {
        1.0 - dev
    } else {
        0.0
    }
}

/// Weighted similarity index between an event and a cluster mean, both as
/// (P, Q, THD) triples in original units.
pub fn similarity(event: &[f64; 3], cluster_mean: &[f64; 3], weights: (f64, f64, f64)) -> f64 {
    weights.0 * feature_similarity(event[0], cluster_mean[0], SIMILARITY_NOISE_FLOOR[0])
        + weights.1 * feature_similarity(event[1], cluster_mean[1], SIMILARITY_NOISE_FLOOR[1])
        + weights.2 * feature_similarity(event[2], cluster_mean[2], SIMILARITY_NOISE_FLOOR[2])
}

struct WbCluster {
    mean: [f64; 3],
    members: Vec<usize>,
}

impl WbCluster {
    fn absorb_point(&mut self, f: &[f64; 3]) {
        let n = self.members.len() as f64;
        for d in 0..3 {
            self.mean[d] = (self.mean[d] * n + f[d]) / (n + 1.0);
        }
    }

    fn absorb_cluster(&mut self, other: &WbCluster) {
        let n = self.members.len() as f64;
        let m = other.members.len() as f64;
        for d in 0..3 {
            self.mean[d] = (self.mean[d] * n + other.mean[d] * m) / (n + m);
        }
        self.members.extend_from_slice(&other.members);
    }
}

/// Weight-based clustering over original-unit features.
///
/// Sweep one: events are scanned in input order (starting at `seed_index`);
/// each joins the most similar existing cluster when the index clears the
/// threshold, else opens a new one-element cluster, and cluster means are
/// updated as running arithmetic means. Sweep two repeats with whole
/// clusters: a cluster mean similar enough to an earlier cluster's mean
/// merges the two. Passes repeat until no cluster is updated.
pub fn weight_based_partition(
    features: &[[f64; 3]],
    weights: (f64, f64, f64),
    params: &ClusterParams,
) -> Result<Vec<Vec<usize>>, ClusteringError> {
    if features.is_empty() {
        return Ok(Vec::new());
    }
    let n = features.len();
    let threshold = params.similarity_threshold;
    let mut clusters: Vec<WbCluster> = Vec::new();
    for step in 0..n {
        let i = (params.seed_index + step) % n;
        let f = &features[i];
        let best = clusters
            .iter_mut()
            .map(|c| (similarity(f, &c.mean, weights), c))
            .max_by(|(sa, _), (sb, _)| sa.partial_cmp(sb).unwrap());
        match best {
            Some((s, c)) if s >= threshold => {
                c.absorb_point(f);
                c.members.push(i);
            }
            _ => clusters.push(WbCluster {
                mean: *f,
                members: vec![i],
            }),
        }
    }

    // Treat cluster means as events and keep merging until stable.
    let mut stable = false;
    for _ in 0..params.max_iter {
        let mut accepted: Vec<WbCluster> = Vec::new();
        let mut merged_any = false;
        for c in clusters.drain(..) {
            let best = accepted
                .iter_mut()
                .map(|a| (similarity(&c.mean, &a.mean, weights), a))
                .max_by(|(sa, _), (sb, _)| sa.partial_cmp(sb).unwrap());
            match best {
                Some((s, a)) if s >= threshold => {
                    a.absorb_cluster(&c);
                    merged_any = true;
                }
                _ => accepted.push(c),
            }
        }
        clusters = accepted;
        if !merged_any {
            stable = true;
            break;
        }
    }
    if !stable {
        return Err(ClusteringError::Oscillation {
            max_iter: params.max_iter,
            partial: clusters.into_iter().map(|c| c.members).collect(),
        });
    }
    let mut partition: Vec<Vec<usize>> = clusters
        .into_iter()
        .map(|mut c| {
            c.members.sort_unstable();
            c.members
        })
        .collect();
    partition.sort_by_key(|g| g[0]);
    Ok(partition)
}

/// Weight-based clustering of events, weights taken from the appliance's
/// condition row.
pub fn weight_based_cluster(
    events: &[LoadEvent],
    weights: (f64, f64, f64),
    params: &ClusterParams,
) -> Result<Vec<EventCluster>, ClusteringError> {
    let features: Vec<[f64; 3]> = events.iter().map(event_features).collect();
    let partition = weight_based_partition(&features, weights, params)?;
    Ok(partition
        .iter()
        .map(|idx| EventCluster::from_member_indices(events, idx))
        .collect())
}

/// Clusters with the configured method.
pub fn cluster_events(
    events: &[LoadEvent],
    weights: (f64, f64, f64),
    params: &ClusterParams,
) -> Result<Vec<EventCluster>, ClusteringError> {
    match params.method {
        ClusterMethod::MeanShift => mean_shift_cluster(events, params),
        ClusterMethod::WeightBased => weight_based_cluster(events, weights, params),
    }
}

/// Picks the dominant cluster: most members, ties broken by larger total
/// |dP| mass, then by earliest first-event time. Errors when the winner is
/// smaller than `min_size`.
pub fn select_dominant(
    clusters: &[EventCluster],
    min_size: usize,
) -> Result<usize, ClusteringError> {
    if clusters.is_empty() {
        return Err(ClusteringError::NoClusters);
    }
    let mass = |c: &EventCluster| c.members.iter().map(|e| e.dp_w.abs()).sum::<f64>();
    let first_t = |c: &EventCluster| c.members.iter().map(|e| e.timestamp).min().unwrap_or(u64::MAX);
    let mut best = 0;
    for i in 1..clusters.len() {
        let (a, b) = (&clusters[i], &clusters[best]);
        let better = match a.len().cmp(&b.len()) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => match mass(a).partial_cmp(&mass(b)).unwrap() {
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Less => false,
                std::cmp::Ordering::Equal => first_t(a) < first_t(b),
            },
        };
        if better {
            best = i;
        }
    }
    if clusters[best].len() < min_size {
        return Err(ClusteringError::InsufficientAuthentic {
            size: clusters[best].len(),
            min_size,
        });
    }
    Ok(best)
}
