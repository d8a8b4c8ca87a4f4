//! Normalized mutual information and the combined clustering report.

use super::assign::{check_lengths, densify, hungarian_accuracy};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmiScores {
    pub nmi: f64,
    /// In nats, like both entropies.
    pub mutual_information: f64,
    pub entropy_y: f64,
    pub entropy_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterMetrics {
    pub acc: f64,
    pub nmi: f64,
    pub mutual_information: f64,
    pub entropy_y: f64,
    pub entropy_c: f64,
}

fn entropy(counts: &[usize], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// NMI as I(Y,C) over the mean of H(Y) and H(C).
///
/// When both entropies vanish, both partitions are a single block and are
/// therefore identical, which scores 1.
pub fn nmi(y: &[usize], c: &[usize]) -> Result<NmiScores> {
    check_lengths(y, c)?;
    let n = y.len() as f64;
    let (y, ky) = densify(y);
    let (c, kc) = densify(c);
    let mut joint = vec![0usize; ky * kc];
    let mut py = vec![0usize; ky];
    let mut pc = vec![0usize; kc];
    for (&a, &b) in y.iter().zip(&c) {
        joint[a * kc + b] += 1;
        py[a] += 1;
        pc[b] += 1;
    }
    let mut terms = Vec::new();
    for a in 0..ky {
        for b in 0..kc {
            let nab = joint[a * kc + b];
            if nab > 0 {
                let nab = nab as f64;
                terms.push(nab / n * (n * nab / (py[a] as f64 * pc[b] as f64)).ln());
            }
        }
    }
    // A fixed summation order makes the score exactly symmetric in (y, c).
    terms.sort_by(f64::total_cmp);
    let mi: f64 = terms.iter().sum();
    let hy = entropy(&py, n);
    let hc = entropy(&pc, n);
    let denom = 0.5 * (hy + hc);
    let nmi = if denom > 0.0 {
        (mi / denom).clamp(0.0, 1.0)
    } else if ky == kc {
        1.0
    } else {
        0.0
    };
    Ok(NmiScores {
        nmi,
        mutual_information: mi.max(0.0),
        entropy_y: hy,
        entropy_c: hc,
    })
}

pub fn cluster_metrics(y: &[usize], c: &[usize]) -> Result<ClusterMetrics> {
    let acc = hungarian_accuracy(y, c)?;
    let s = nmi(y, c)?;
    Ok(ClusterMetrics {
        acc,
        nmi: s.nmi,
        mutual_information: s.mutual_information,
        entropy_y: s.entropy_y,
        entropy_c: s.entropy_c,
    })
}
