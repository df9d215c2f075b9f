use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeans {
    pub assignments: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after the initial assignment and after every Lloyd step.
    pub inertia_history: Vec<f64>,
}

const MAX_ITER: usize = 300;
const TOL: f64 = 1e-4;

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn assign(points: &[Vec<f64>], centers: &[Vec<f64>], out: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (p, a) in points.iter().zip(out.iter_mut()) {
        let mut best = (f64::INFINITY, 0);
        for (c, center) in centers.iter().enumerate() {
            let d = dist2(p, center);
            if d < best.0 {
                best = (d, c);
            }
        }
        *a = best.1;
        inertia += best.0;
    }
    inertia
}

fn plus_plus(points: &[Vec<f64>], k: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng::index(rng, n);
    chosen[first] = true;
    let mut centers = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &points[first])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng::unit(rng) * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if d <= 0.0 {
                    continue;
                }
                acc += d;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            (0..n).find(|&i| !chosen[i]).expect("k <= n")
        };
        chosen[pick] = true;
        for (di, p) in d2.iter_mut().zip(points) {
            *di = di.min(dist2(p, &points[pick]));
        }
        centers.push(points[pick].clone());
    }
    centers
}

/// Lloyd's algorithm from a seeded k-means++ start.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeans> {
    kmeans_with(points, k, &mut rng::seeded(seed))
}

pub fn kmeans_with(points: &[Vec<f64>], k: usize, rng: &mut Rng) -> Result<KMeans> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} clusters for {n} points")));
    }
    let d = points[0].len();
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::shape("points differ in dimension"));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("k-means input"));
    }

    let mut centers = plus_plus(points, k, rng);
    let mut assignments = vec![0usize; n];
    let mut inertia = assign(points, &centers, &mut assignments);
    let mut history = vec![inertia];

    for _ in 0..MAX_ITER {
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut next: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(&counts)
            .zip(&centers)
            .map(|((s, &c), old)| {
                if c == 0 {
                    old.clone()
                } else {
                    s.into_iter().map(|v| v / c as f64).collect()
                }
            })
            .collect();
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| counts[assignments[i]] > 1)
                .map(|i| (dist2(&points[i], &next[assignments[i]]), i))
                .fold(None, |best: Option<(f64, usize)>, cand| match best {
                    Some(b) if b.0 >= cand.0 => Some(b),
                    _ => Some(cand),
                })
                .map(|(_, i)| i)
                .expect("an empty cluster implies a cluster with two points");
            counts[assignments[far]] -= 1;
            assignments[far] = c;
            counts[c] = 1;
            next[c] = points[far].clone();
        }
        let movement = next
            .iter()
            .zip(&centers)
            .map(|(a, b)| dist2(a, b).sqrt())
            .fold(0.0, f64::max);
        centers = next;
        let prev = inertia;
        inertia = assign(points, &centers, &mut assignments);
        debug_assert!(
            inertia <= prev + 1e-9 * prev.max(1.0),
            "inertia rose from {prev} to {inertia}"
        );
        history.push(inertia);
        if movement < TOL {
            break;
        }
    }
    Ok(KMeans {
        assignments,
        centers,
        inertia,
        inertia_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};

    fn normal(g: &mut Rng) -> f64 {
        StandardNormal.sample(g)
    }

    #[test]
    fn separated_blobs_are_pure() {
        let mut g = rng::seeded(5);
        let pts: Vec<Vec<f64>> = (0..100)
            .map(|i| {
                let c = if i < 50 { 0.0 } else { 10.0 };
                vec![c + 0.1 * normal(&mut g), 0.1 * normal(&mut g)]
            })
            .collect();
        let km = kmeans(&pts, 2, 111).unwrap();
        let a = km.assignments[0];
        assert!(km.assignments[..50].iter().all(|&x| x == a));
        assert!(km.assignments[50..].iter().all(|&x| x != a));
    }

    #[test]
    fn k_equals_n_and_one() {
        let mut g = rng::seeded(1);
        let pts: Vec<Vec<f64>> = (0..12)
            .map(|_| vec![g.gen::<f64>(), g.gen::<f64>()])
            .collect();
        let km = kmeans(&pts, 12, 3).unwrap();
        assert_eq!(km.inertia, 0.0);
        let mut seen = km.assignments.clone();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 12);

        let one = kmeans(&pts, 1, 3).unwrap();
        let mean_x = pts.iter().map(|p| p[0]).sum::<f64>() / 12.0;
        assert!((one.centers[0][0] - mean_x).abs() < 1e-12);
        assert!(kmeans(&pts, 13, 3).is_err());
    }

    #[test]
    fn duplicates_and_determinism() {
        let pts = vec![vec![1.0]; 6];
        let km = kmeans(&pts, 3, 9).unwrap();
        assert_eq!(km.inertia, 0.0);
        let pts: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i * 7 % 13) as f64, (i % 5) as f64])
            .collect();
        assert_eq!(kmeans(&pts, 4, 2).unwrap(), kmeans(&pts, 4, 2).unwrap());
    }
}
