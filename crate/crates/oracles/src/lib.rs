//! Reference implementations used to check `ghforest`.
//!
//! Nothing here links against the index crate. Distances, ball volumes and
//! lens volumes are recomputed from textbook formulas or by sampling, so a
//! bug in the production geometry cannot hide behind a shared helper.

use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleConfig {
    pub mc_samples: u64,
    pub rng_seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            mc_samples: 1_000_000,
            rng_seed: 0,
        }
    }
}

impl OracleConfig {
    /// Smallest sample count accepted for acceptance-grade estimates.
    pub const MIN_ACCEPTANCE_SAMPLES: u64 = 10_000;
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleBall {
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnsupportedDimension(pub usize);

impl fmt::Display for UnsupportedDimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "closed-form lens only exists for 2 or 3 dimensions, got {}", self.0)
    }
}

impl std::error::Error for UnsupportedDimension {}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        let t = a[i] - b[i];
        acc += t * t;
    }
    acc.sqrt()
}

/// Exact k nearest neighbours by full scan, sorted by `(distance, id)`.
pub fn brute_knn<'a, I>(points: I, q: &[f64], k: usize) -> Vec<(usize, f64)>
where
    I: IntoIterator<Item = (usize, &'a [f64])>,
{
    let mut all: Vec<(usize, f64)> = points.into_iter().map(|(id, p)| (id, euclidean(p, q))).collect();
    let by_dist_then_id = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
    if k < all.len() {
        all.select_nth_unstable_by(k, by_dist_then_id);
        all.truncate(k);
    }
    all.sort_by(by_dist_then_id);
    all
}

/// Uniform samples in a box around the intersection, counting hits inside
/// both balls. Returns the volume estimate and its binomial standard error.
///
/// For a partial overlap the box is set in a frame whose first axis runs
/// from `b1` to `b2`: it spans `[d - r2, r1]` along that axis and the widest
/// cross-section of the intersection across it. Otherwise it is the
/// bounding box of the smaller ball.
pub fn mc_lens_volume(b1: &OracleBall, b2: &OracleBall, cfg: &OracleConfig) -> (f64, f64) {
    let d = euclidean(&b1.center, &b2.center);
    let (r1, r2) = (b1.radius, b2.radius);
    if d >= r1 + r2 {
        return (0.0, 0.0);
    }
    let n = b1.center.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut p = vec![0.0; n];
    let mut hits = 0u64;
    let inside = |p: &[f64]| euclidean(p, &b1.center) <= r1 && euclidean(p, &b2.center) <= r2;

    if d <= (r1 - r2).abs() || d == 0.0 {
        let small = if r1 <= r2 { b1 } else { b2 };
        for _ in 0..cfg.mc_samples {
            for (x, c) in p.iter_mut().zip(&small.center) {
                *x = c + rng.random_range(-small.radius..small.radius);
            }
            hits += u64::from(inside(&p));
        }
        return binomial_estimate(hits, cfg.mc_samples, (2.0 * small.radius).powi(n as i32));
    }

    let axis: Vec<f64> = b1.center.iter().zip(&b2.center).map(|(a, b)| (b - a) / d).collect();
    let frame = orthonormal_complement(&axis);
    // Signed offsets of the radical plane from each center.
    let x1 = (d * d + r1 * r1 - r2 * r2) / (2.0 * d);
    let x2 = d - x1;
    let a = (r1 * r1 - x1 * x1).max(0.0).sqrt();
    let half_width = [(x1, r1), (x2, r2)]
        .iter()
        .map(|&(x, r)| if x >= 0.0 { a } else { r })
        .fold(0.0, f64::max);
    let (t_lo, t_hi) = (d - r2, r1);
    for _ in 0..cfg.mc_samples {
        let t = rng.random_range(t_lo..t_hi);
        p.iter_mut()
            .zip(&b1.center)
            .zip(&axis)
            .for_each(|((x, c), u)| *x = c + t * u);
        for e in &frame {
            let s = rng.random_range(-half_width..half_width);
            p.iter_mut().zip(e).for_each(|(x, v)| *x += s * v);
        }
        hits += u64::from(inside(&p));
    }
    let box_volume = (t_hi - t_lo) * (2.0 * half_width).powi(n as i32 - 1);
    binomial_estimate(hits, cfg.mc_samples, box_volume)
}

/// `n - 1` orthonormal vectors perpendicular to the unit vector `u`, by
/// Gram-Schmidt over the standard basis.
fn orthonormal_complement(u: &[f64]) -> Vec<Vec<f64>> {
    let n = u.len();
    let mut basis = vec![u.to_vec()];
    for j in 0..n {
        let mut v = vec![0.0; n];
        v[j] = 1.0;
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
        if basis.len() == n {
            break;
        }
    }
    basis.remove(0);
    basis
}

/// Box sampling estimate of the volume of an `n`-ball.
pub fn mc_ball_volume(n: usize, radius: f64, cfg: &OracleConfig) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let r2 = radius * radius;
    let mut hits = 0u64;
    for _ in 0..cfg.mc_samples {
        let mut acc = 0.0;
        for _ in 0..n {
            let x: f64 = rng.random_range(-radius..radius);
            acc += x * x;
        }
        if acc <= r2 {
            hits += 1;
        }
    }
    binomial_estimate(hits, cfg.mc_samples, (2.0 * radius).powi(n as i32))
}

fn binomial_estimate(hits: u64, samples: u64, box_volume: f64) -> (f64, f64) {
    let p = hits as f64 / samples as f64;
    let stderr = (p * (1.0 - p) / samples as f64).sqrt() * box_volume;
    (p * box_volume, stderr)
}

/// Intersection volume of two discs or two 3-balls.
///
/// 2-D: sum of the circular segments `r² acos(x/r) − x √(r² − x²)`.
/// 3-D: sum of spherical caps `π h² (3r − h) / 3`. In both, `x` is the signed
/// distance from a center to the radical plane and `h = r − x`.
pub fn closed_form_lens(b1: &OracleBall, b2: &OracleBall) -> Result<f64, UnsupportedDimension> {
    let n = b1.center.len();
    if n != 2 && n != 3 {
        return Err(UnsupportedDimension(n));
    }
    let (r1, r2) = (b1.radius, b2.radius);
    let d = euclidean(&b1.center, &b2.center);
    if d >= r1 + r2 {
        return Ok(0.0);
    }
    if d <= (r1 - r2).abs() {
        let r = r1.min(r2);
        return Ok(if n == 2 { PI * r * r } else { 4.0 / 3.0 * PI * r * r * r });
    }
    // Heights in product form: h1 = (r2 − r1 + d)(r1 + r2 − d) / 2d.
    let h1 = (r2 - r1 + d) * (r1 + r2 - d) / (2.0 * d);
    let h2 = (r1 - r2 + d) * (r1 + r2 - d) / (2.0 * d);
    let piece = |r: f64, h: f64| {
        if n == 3 {
            PI * h * h * (3.0 * r - h) / 3.0
        } else {
            let x = r - h;
            r * r * (x / r).clamp(-1.0, 1.0).acos() - x * (h * (2.0 * r - h)).max(0.0).sqrt()
        }
    };
    Ok(piece(r1, h1) + piece(r2, h2))
}

/// `∫₀^φ sinⁿ θ dθ` by adaptive Simpson quadrature.
pub fn integrate_sin_power(n: usize, phi: f64, tol: f64) -> f64 {
    let f = |t: f64| t.sin().powi(n as i32);
    adaptive_simpson(&f, 0.0, phi, tol, 50)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Density clustering by connected components of the core-point graph.
///
/// A point is core when at least `min_pts` points (itself included) lie
/// within `eps`. Core points within `eps` of each other share a cluster;
/// a non-core point joins the cluster of its lowest-index core neighbour,
/// otherwise it is noise (`None`). Labels are numbered by first appearance.
pub fn reference_dbscan(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| euclidean(&points[i], &points[j]) <= eps).collect())
        .collect();
    let core: Vec<bool> = neighbours.iter().map(|nb| nb.len() >= min_pts).collect();

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        if !core[i] {
            continue;
        }
        for &j in &neighbours[i] {
            if core[j] {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }

    let mut root_of = vec![None; n];
    for i in 0..n {
        if core[i] {
            root_of[i] = Some(find(&mut parent, i));
        } else if let Some(&c) = neighbours[i].iter().find(|&&j| core[j]) {
            root_of[i] = Some(find(&mut parent, c));
        }
    }
    let mut label_of_root = std::collections::HashMap::new();
    root_of
        .into_iter()
        .map(|root| {
            root.map(|r| {
                let next = label_of_root.len();
                *label_of_root.entry(r).or_insert(next)
            })
        })
        .collect()
}

/// Canonical form of a labelling: clusters as sorted member lists, sorted,
/// plus the sorted noise list. Two labellings are equal up to renaming iff
/// their canonical forms are equal.
pub fn canonical_clusters(labels: &[Option<usize>]) -> (Vec<Vec<usize>>, Vec<usize>) {
    let mut by_label: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    let mut noise = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        match l {
            Some(l) => by_label.entry(*l).or_default().push(i),
            None => noise.push(i),
        }
    }
    let mut clusters: Vec<Vec<usize>> = by_label.into_values().collect();
    clusters.sort();
    (clusters, noise)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(n: usize, r1: f64, r2: f64, d: f64) -> (OracleBall, OracleBall) {
        let mut c = vec![0.0; n];
        c[0] = d;
        (
            OracleBall {
                center: vec![0.0; n],
                radius: r1,
            },
            OracleBall { center: c, radius: r2 },
        )
    }

    #[test]
    fn brute_knn_examples() {
        let pts = [vec![0.0], vec![10.0]];
        let it = || pts.iter().enumerate().map(|(i, p)| (i, p.as_slice()));
        assert_eq!(brute_knn(it(), &[1.0], 1), vec![(0, 1.0)]);
        assert_eq!(brute_knn(it(), &[1.0], 5), vec![(0, 1.0), (1, 9.0)]);
        // Ties resolve by id.
        let tied = [vec![1.0], vec![-1.0], vec![1.0]];
        let it = tied.iter().enumerate().map(|(i, p)| (i, p.as_slice()));
        assert_eq!(brute_knn(it, &[0.0], 2), vec![(0, 1.0), (1, 1.0)]);
    }

    #[test]
    fn lens_examples() {
        let (a, b) = pair(2, 1.0, 1.0, 1.0);
        let want = 2.0 * PI / 3.0 - 3f64.sqrt() / 2.0;
        assert!((closed_form_lens(&a, &b).unwrap() - want).abs() < 1e-14);
        // The same lens via 2 acos(d/2) − (d/2) √(4 − d²).
        assert!((want - (2.0 * 0.5f64.acos() - 0.5 * 3f64.sqrt())).abs() < 1e-14);

        let (a, b) = pair(3, 1.0, 1.0, 1.0);
        let want = 2.0 * PI * 0.25 * 2.5 / 3.0;
        assert!((closed_form_lens(&a, &b).unwrap() - want).abs() < 1e-14);
        assert!((want - 1.3090).abs() < 1e-4);

        let (a, b) = pair(3, 1.0, 1.0, 2.0 - 1e-12);
        assert!(closed_form_lens(&a, &b).unwrap() < 1e-20);
        let (a, b) = pair(4, 1.0, 1.0, 1.0);
        assert_eq!(closed_form_lens(&a, &b), Err(UnsupportedDimension(4)));
    }

    #[test]
    fn monte_carlo_lens_tracks_closed_forms() {
        let cfg = OracleConfig {
            mc_samples: 400_000,
            rng_seed: 3,
        };
        for (n, r1, r2, d) in [(2, 1.0, 1.0, 1.0), (3, 1.0, 1.4, 1.2), (3, 2.0, 0.7, 1.8)] {
            let (a, b) = pair(n, r1, r2, d);
            let (est, se) = mc_lens_volume(&a, &b, &cfg);
            let want = closed_form_lens(&a, &b).unwrap();
            assert!((est - want).abs() < 3.0 * se, "n={n}: {est} ± {se} vs {want}");
        }
        let (a, b) = pair(5, 1.0, 1.0, 2.5);
        assert_eq!(mc_lens_volume(&a, &b, &cfg), (0.0, 0.0));

        // Off-axis centers, a cap larger than a hemisphere, and containment.
        let a = OracleBall {
            center: vec![0.3, -1.0, 2.0],
            radius: 1.5,
        };
        let b = OracleBall {
            center: vec![0.9, -0.6, 2.4],
            radius: 0.9,
        };
        let (est, se) = mc_lens_volume(&a, &b, &cfg);
        let want = closed_form_lens(&a, &b).unwrap();
        assert!((est - want).abs() < 3.0 * se, "{est} ± {se} vs {want}");
        let (a, b) = pair(2, 2.0, 0.5, 0.5);
        let (est, se) = mc_lens_volume(&a, &b, &cfg);
        assert!((est - PI * 0.25).abs() < 3.0 * se);
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let cfg = OracleConfig {
            mc_samples: 10_000,
            rng_seed: 9,
        };
        let (a, b) = pair(3, 1.0, 1.0, 1.0);
        assert_eq!(mc_lens_volume(&a, &b, &cfg), mc_lens_volume(&a, &b, &cfg));
    }

    #[test]
    fn quadrature_examples() {
        assert!((integrate_sin_power(1, PI / 2.0, 1e-12) - 1.0).abs() < 1e-12);
        assert!((integrate_sin_power(2, PI, 1e-12) - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn reference_dbscan_chain_and_noise() {
        let pts: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).chain([vec![100.0]]).collect();
        let labels = reference_dbscan(&pts, 1.5, 2);
        assert_eq!(labels, vec![Some(0), Some(0), Some(0), Some(0), Some(0), None]);
        let (clusters, noise) = canonical_clusters(&labels);
        assert_eq!(clusters, vec![vec![0, 1, 2, 3, 4]]);
        assert_eq!(noise, vec![5]);
    }
}
