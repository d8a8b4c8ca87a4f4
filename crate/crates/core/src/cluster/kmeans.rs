//! Lloyd's k-means with independent random restarts.
//!
//! Each restart starts from `k` distinct data points drawn uniformly and
//! stops when an assignment pass changes nothing or after `max_iter`
//! passes. A cluster left empty by an update is re-seeded at the point
//! farthest from its current centroid. The restart with the lowest inertia
//! wins; ties go to the lowest restart index.

use rand::seq::index;
use rand::RngCore;

use super::Matrix;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const DEFAULT_MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub assignments: Vec<usize>,
    pub centroids: Matrix,
    pub inertia: f64,
    pub restarts_run: usize,
    pub best_restart: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KmeansOptions {
    pub k: usize,
    pub n_init: usize,
    pub max_iter: usize,
    /// Run restarts on all available cores. Results do not depend on it.
    pub parallel: bool,
}

impl KmeansOptions {
    pub fn new(k: usize, n_init: usize) -> Self {
        Self {
            k,
            n_init,
            max_iter: DEFAULT_MAX_ITER,
            parallel: false,
        }
    }
}

struct Restart {
    assignments: Vec<usize>,
    centroids: Vec<f64>,
    inertia: f64,
    trace: Vec<f64>,
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Assign every point to its nearest centroid; returns the inertia.
fn assign(x: &Matrix, centroids: &[f64], k: usize, out: &mut [usize], dist: &mut [f64]) -> f64 {
    let d = x.cols();
    let mut inertia = 0.0;
    for (i, p) in x.iter_rows().enumerate() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for c in 0..k {
            let dc = sq_dist(p, &centroids[c * d..(c + 1) * d]);
            if dc < best_d {
                best_d = dc;
                best = c;
            }
        }
        out[i] = best;
        dist[i] = best_d;
        inertia += best_d;
    }
    inertia
}

/// Move centroids to member means and re-seed empty clusters.
fn update(x: &Matrix, assignments: &[usize], dist: &mut [f64], k: usize, centroids: &mut [f64]) {
    let d = x.cols();
    let mut sums = vec![0.0; k * d];
    let mut counts = vec![0usize; k];
    for (p, &a) in x.iter_rows().zip(assignments) {
        counts[a] += 1;
        for (s, &v) in sums[a * d..(a + 1) * d].iter_mut().zip(p) {
            *s += v;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            let inv = 1.0 / counts[c] as f64;
            for (dst, &s) in centroids[c * d..(c + 1) * d].iter_mut().zip(&sums[c * d..]) {
                *dst = s * inv;
            }
        } else {
            let far = dist
                .iter()
                .enumerate()
                .fold(0, |b, (i, &v)| if v > dist[b] { i } else { b });
            centroids[c * d..(c + 1) * d].copy_from_slice(x.row(far));
            dist[far] = 0.0;
        }
    }
}

fn run_restart(x: &Matrix, k: usize, max_iter: usize, rng: &mut SeededRng) -> Restart {
    let n = x.rows();
    let d = x.cols();
    let mut centroids = Vec::with_capacity(k * d);
    for i in index::sample(rng, n, k).into_iter() {
        centroids.extend_from_slice(x.row(i));
    }
    let mut assignments = vec![usize::MAX; n];
    let mut next = vec![0usize; n];
    let mut dist = vec![0.0; n];
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..max_iter.max(1) {
        let inertia = assign(x, &centroids, k, &mut next, &mut dist);
        trace.push(inertia);
        if next == assignments {
            converged = true;
            break;
        }
        std::mem::swap(&mut assignments, &mut next);
        update(x, &assignments, &mut dist, k, &mut centroids);
    }
    let inertia = if converged {
        *trace.last().expect("at least one pass")
    } else {
        // Out of iterations: centroids already match the final assignment.
        x.iter_rows()
            .zip(&assignments)
            .map(|(p, &a)| sq_dist(p, &centroids[a * d..(a + 1) * d]))
            .sum()
    };
    Restart {
        assignments,
        centroids,
        inertia,
        trace,
    }
}

fn validate(x: &Matrix, k: usize, n_init: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k > x.rows() {
        return Err(Error::invalid(format!("k = {k} exceeds {} points", x.rows())));
    }
    if n_init == 0 {
        return Err(Error::invalid("n_init must be at least 1"));
    }
    Ok(())
}

/// Best-of-`n_init` k-means plus, per restart, the inertia after every
/// assignment pass.
pub fn kmeans_traced(
    x: &Matrix,
    opts: &KmeansOptions,
    rng: &mut SeededRng,
) -> Result<(ClusterResult, Vec<Vec<f64>>)> {
    validate(x, opts.k, opts.n_init)?;
    let seeds: Vec<u64> = (0..opts.n_init).map(|_| rng.next_u64()).collect();
    let one = |s: u64| run_restart(x, opts.k, opts.max_iter, &mut SeededRng::new(s));
    let threads = if opts.parallel {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        1
    };
    let restarts: Vec<Restart> = if threads > 1 && seeds.len() > 1 {
        let chunk = seeds.len().div_ceil(threads);
        std::thread::scope(|scope| {
            let handles: Vec<_> = seeds
                .chunks(chunk)
                .map(|part| scope.spawn(move || part.iter().map(|&s| one(s)).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("k-means worker panicked"))
                .collect()
        })
    } else {
        seeds.iter().map(|&s| one(s)).collect()
    };
    let mut best = 0;
    for (i, r) in restarts.iter().enumerate() {
        if r.inertia < restarts[best].inertia {
            best = i;
        }
    }
    let traces = restarts.iter().map(|r| r.trace.clone()).collect();
    let winner = restarts.into_iter().nth(best).expect("n_init >= 1");
    let result = ClusterResult {
        assignments: winner.assignments,
        centroids: Matrix::new(opts.k, x.cols(), winner.centroids)?,
        inertia: winner.inertia,
        restarts_run: opts.n_init,
        best_restart: best,
    };
    Ok((result, traces))
}

pub fn kmeans(
    x: &Matrix,
    k: usize,
    n_init: usize,
    max_iter: usize,
    rng: &mut SeededRng,
) -> Result<ClusterResult> {
    let opts = KmeansOptions {
        k,
        n_init,
        max_iter,
        parallel: false,
    };
    kmeans_traced(x, &opts, rng).map(|(r, _)| r)
}
