use std::collections::HashMap;

use mcdc_core::analysis::{class_pca_profile, project_2d};
use mcdc_core::cluster::{
    hungarian_accuracy, kmeans, kmeans_traced, nmi, pca_fit, pca_whiten, KmeansOptions, Matrix, DEFAULT_MAX_ITER,
};
use mcdc_core::data::{bilinear_resize, synthetic_blobs, IdxArray};
use mcdc_core::nn::Tensor;
use mcdc_core::SeededRng;
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

/// Best accuracy over every bijection between cluster and class ids.
fn brute_force_acc(y: &[usize], c: &[usize]) -> f64 {
    let k = y.iter().chain(c).max().map_or(0, |m| m + 1);
    let best = permutations(k)
        .iter()
        .map(|perm| y.iter().zip(c).filter(|(&yi, &ci)| perm[ci] == yi).count())
        .max()
        .unwrap();
    best as f64 / y.len() as f64
}

/// NMI from a hash-map joint histogram, evaluated term by term.
fn nmi_oracle(y: &[usize], c: &[usize]) -> f64 {
    let n = y.len() as f64;
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    let mut py: HashMap<usize, f64> = HashMap::new();
    let mut pc: HashMap<usize, f64> = HashMap::new();
    for (&a, &b) in y.iter().zip(c) {
        *joint.entry((a, b)).or_default() += 1.0 / n;
        *py.entry(a).or_default() += 1.0 / n;
        *pc.entry(b).or_default() += 1.0 / n;
    }
    let mi: f64 = joint.iter().map(|(&(a, b), &p)| p * (p / (py[&a] * pc[&b])).ln()).sum();
    let h = |m: &HashMap<usize, f64>| -m.values().map(|p| p * p.ln()).sum::<f64>();
    let denom = 0.5 * (h(&py) + h(&pc));
    if denom == 0.0 {
        1.0
    } else {
        mi / denom
    }
}

fn labels(max: usize, len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..max, len)
}

fn paired(max: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1usize..40).prop_flat_map(move |n| (labels(max, n..n + 1), labels(max, n..n + 1)))
}

fn gaussian_matrix(n: usize, d: usize, seed: u64) -> Matrix {
    let mut rng = SeededRng::new(seed);
    Matrix::new(n, d, (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn hungarian_matches_brute_force((y, c) in paired(5)) {
        prop_assert_eq!(hungarian_accuracy(&y, &c).unwrap(), brute_force_acc(&y, &c));
    }

    #[test]
    fn nmi_matches_oracle_and_is_symmetric((y, c) in paired(5)) {
        let s = nmi(&y, &c).unwrap();
        prop_assert!((s.nmi - nmi_oracle(&y, &c)).abs() < 1e-9);
        prop_assert_eq!(s.nmi, nmi(&c, &y).unwrap().nmi);
        prop_assert!((0.0..=1.0).contains(&s.nmi));
    }

    #[test]
    fn metrics_invariant_under_relabeling((y, c) in paired(5), shift in 1usize..7, perm_seed in any::<u64>()) {
        let perms = permutations(5);
        let p = &perms[(perm_seed % perms.len() as u64) as usize];
        let y2: Vec<usize> = y.iter().map(|&v| p[v] + shift).collect();
        let c2: Vec<usize> = c.iter().map(|&v| (v + shift) * 3).collect();
        prop_assert_eq!(hungarian_accuracy(&y, &c).unwrap(), hungarian_accuracy(&y2, &c2).unwrap());
        prop_assert!((nmi(&y, &c).unwrap().nmi - nmi(&y2, &c2).unwrap().nmi).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn kmeans_inertia_never_increases(n in 3usize..40, d in 1usize..4, k in 1usize..4, seed in any::<u64>()) {
        let x = gaussian_matrix(n, d, seed);
        let k = k.min(n);
        let (best, traces) = kmeans_traced(&x, &KmeansOptions::new(k, 5), &mut SeededRng::new(seed)).unwrap();
        for t in &traces {
            for w in t.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0));
            }
            for &v in t {
                prop_assert!(best.inertia <= v + 1e-9 * v.abs().max(1.0));
            }
        }
        prop_assert!(best.assignments.iter().all(|&a| a < k));
    }

    #[test]
    fn whitening_round_trip(n in 20usize..60, d in 1usize..5, seed in any::<u64>()) {
        let mut x = gaussian_matrix(n, d, seed);
        for i in 0..n {
            for j in 0..d {
                let v = x.get(i, j) * (j + 1) as f64 + 3.0;
                x.set(i, j, v);
            }
        }
        let w = pca_whiten(&x, &pca_fit(&x).unwrap(), 0.0).unwrap();
        for l in pca_fit(&w).unwrap().eigenvalues {
            prop_assert!((l - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn components_orthonormal(n in 3usize..30, d in 1usize..6, seed in any::<u64>()) {
        let b = pca_fit(&gaussian_matrix(n, d, seed)).unwrap();
        for i in 0..d {
            for j in 0..d {
                let dot: f64 = b.components.row(i).iter().zip(b.components.row(j)).map(|(a, c)| a * c).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot - want).abs() < 1e-8);
            }
        }
        prop_assert!(b.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn projection_translation_invariant(n in 3usize..30, d in 2usize..5, seed in any::<u64>(), shift in -50.0f64..50.0) {
        let x = gaussian_matrix(n, d, seed);
        let mut moved = x.clone();
        for i in 0..n {
            for j in 0..d {
                let v = moved.get(i, j) + shift * (j as f64 - 1.5);
                moved.set(i, j, v);
            }
        }
        let a = project_2d(&x).unwrap();
        let b = project_2d(&moved).unwrap();
        for (u, v) in a.data().iter().zip(b.data()) {
            prop_assert!((u - v).abs() < 1e-8);
        }
    }

    #[test]
    fn resize_stays_in_range(c in 1usize..3, h in 1usize..7, w in 1usize..7, oh in 1usize..12, ow in 1usize..12, seed in any::<u64>()) {
        let img = Tensor::<f64>::randn(vec![c, h, w], 1.0, &mut SeededRng::new(seed));
        let lo = img.data().iter().copied().fold(f64::INFINITY, f64::min);
        let hi = img.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let out = bilinear_resize(&img, oh, ow).unwrap();
        prop_assert!(out.data().iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
    }

    #[test]
    fn idx_bytes_round_trip(dims in prop::collection::vec(0u32..5, 1..4), fill in any::<u8>()) {
        let n: usize = dims.iter().map(|&d| d as usize).product();
        let arr = IdxArray { dims, data: (0..n).map(|i| fill.wrapping_add(i as u8)).collect() };
        let bytes = arr.to_bytes();
        prop_assert_eq!(IdxArray::parse(&bytes).unwrap().to_bytes(), bytes);
    }
}

#[test]
fn four_point_optimum_agrees_with_brute_force() {
    let x = Matrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0], vec![10.0, 0.0], vec![10.0, 1.0]]).unwrap();
    let mut best = f64::INFINITY;
    for mask in 0u32..16 {
        let groups: Vec<Vec<usize>> = (0..2).map(|g| (0..4).filter(|&i| (mask >> i & 1) as usize == g).collect()).collect();
        if groups.iter().any(Vec::is_empty) {
            continue;
        }
        let cost: f64 = groups
            .iter()
            .map(|g| {
                let mean: Vec<f64> = (0..2).map(|d| g.iter().map(|&i| x.get(i, d)).sum::<f64>() / g.len() as f64).collect();
                g.iter().map(|&i| (0..2).map(|d| (x.get(i, d) - mean[d]).powi(2)).sum::<f64>()).sum::<f64>()
            })
            .sum();
        best = best.min(cost);
    }
    assert_eq!(best, 1.0);
    let r = kmeans(&x, 2, 1000, DEFAULT_MAX_ITER, &mut SeededRng::new(0)).unwrap();
    assert!((r.inertia - best).abs() < 1e-9);
}

#[test]
fn repeated_class_points_cluster_perfectly() {
    let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![(i % 3) as f64, ((i % 3) * (i % 3)) as f64]).collect();
    let y: Vec<usize> = (0..30).map(|i| i % 3).collect();
    let x = Matrix::from_rows(&rows).unwrap();
    let w = pca_whiten(&x, &pca_fit(&x).unwrap(), 1e-8).unwrap();
    let r = kmeans(&w, 3, 50, DEFAULT_MAX_ITER, &mut SeededRng::new(1)).unwrap();
    assert_eq!(hungarian_accuracy(&y, &r.assignments).unwrap(), 1.0);
    assert!((nmi(&y, &r.assignments).unwrap().nmi - 1.0).abs() < 1e-12);
}

fn blob_acc(separation: f64, seed: u64) -> f64 {
    let ds = synthetic_blobs(300, 4, 2, separation, &mut SeededRng::new(seed)).unwrap();
    let x = Matrix::from_tensor(&ds.images);
    let r = kmeans(&x, 4, 10, DEFAULT_MAX_ITER, &mut SeededRng::new(seed + 100)).unwrap();
    hungarian_accuracy(&ds.labels, &r.assignments).unwrap()
}

#[test]
fn separated_blobs_are_recovered() {
    assert_eq!(blob_acc(20.0, 3), 1.0);
}

#[test]
fn overlapping_blobs_are_at_chance() {
    let mean = (0..5).map(|s| blob_acc(0.0, s)).sum::<f64>() / 5.0;
    assert!((mean - 0.25).abs() < 0.1, "mean ACC {mean}");
}

#[test]
fn per_class_whitened_profile_is_flat() {
    let cutoff = 6;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for class in 0..3 {
        let raw = gaussian_matrix(200, cutoff, 40 + class as u64);
        let w = pca_whiten(&raw, &pca_fit(&raw).unwrap(), 1e-12).unwrap();
        rows.extend(w.iter_rows().map(<[f64]>::to_vec));
        labels.extend(std::iter::repeat_n(class, 200));
    }
    let p = class_pca_profile(&Matrix::from_rows(&rows).unwrap(), &labels, cutoff).unwrap();
    for s in p.mean_share {
        assert!((s * cutoff as f64 - 1.0).abs() < 0.25);
    }
}
