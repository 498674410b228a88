//! Cluster-separation and text-alignment diagnostics over pooled tokens.

use std::collections::BTreeMap;

use crate::error::{MetricError, Result};

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// `1 - cos(a, b)`; zero vectors count as orthogonal.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    1.0 - dot / (na * nb)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Silhouette {
    pub score: f64,
    pub points: usize,
    /// Classes dropped for having a single point.
    pub excluded: Vec<usize>,
}

/// Mean silhouette coefficient under Euclidean distance. Singleton classes
/// are dropped with a warning; at least two classes of two or more points
/// must remain.
pub fn cluster_separation(points: &[Vec<f64>], labels: &[usize]) -> Result<Silhouette> {
    if points.len() != labels.len() {
        return Err(MetricError::Length(points.len(), labels.len()));
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    let excluded: Vec<usize> = groups.iter().filter(|(_, v)| v.len() < 2).map(|(&k, _)| k).collect();
    if !excluded.is_empty() {
        log::warn!("silhouette: excluding singleton classes {excluded:?}");
    }
    groups.retain(|_, v| v.len() >= 2);
    if groups.len() < 2 {
        return Err(MetricError::Invalid(
            "silhouette needs two classes with at least two points".into(),
        ));
    }
    let dim = points[groups.values().next().expect("non-empty")[0]].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(MetricError::Dimension(dim, p.len()));
    }
    let mut total = 0.0;
    let mut n = 0;
    for (&label, members) in &groups {
        for &i in members {
            let mean_to = |idx: &[usize]| -> f64 {
                let (s, c) = idx
                    .iter()
                    .filter(|&&j| j != i)
                    .fold((0.0, 0usize), |(s, c), &j| (s + euclid(&points[i], &points[j]), c + 1));
                s / c as f64
            };
            let a = mean_to(members);
            let b = groups
                .iter()
                .filter(|(&k, _)| k != label)
                .map(|(_, idx)| mean_to(idx))
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            total += if denom > 0.0 { (b - a) / denom } else { 0.0 };
            n += 1;
        }
    }
    Ok(Silhouette {
        score: total / n as f64,
        points: n,
        excluded,
    })
}

/// Mean over samples of the cosine distance to the sample's own class
/// anchor minus its mean cosine distance to every other class anchor.
/// Lower is better aligned.
pub fn alignment_gap(tokens: &[Vec<f64>], labels: &[usize], anchors: &[Vec<f64>]) -> Result<f64> {
    if tokens.len() != labels.len() {
        return Err(MetricError::Length(tokens.len(), labels.len()));
    }
    if tokens.is_empty() {
        return Err(MetricError::Empty);
    }
    if anchors.len() < 2 {
        return Err(MetricError::Invalid(
            "alignment gap needs at least two class anchors".into(),
        ));
    }
    let dim = anchors[0].len();
    for v in anchors.iter().chain(tokens) {
        if v.len() != dim {
            return Err(MetricError::Dimension(dim, v.len()));
        }
    }
    let mut total = 0.0;
    for (t, &y) in tokens.iter().zip(labels) {
        if y >= anchors.len() {
            return Err(MetricError::Invalid(format!("label {y} has no anchor")));
        }
        let own = cosine_distance(t, &anchors[y]);
        let others: f64 = anchors
            .iter()
            .enumerate()
            .filter(|(c, _)| *c != y)
            .map(|(_, a)| cosine_distance(t, a))
            .sum::<f64>()
            / (anchors.len() - 1) as f64;
        total += own - others;
    }
    Ok(total / tokens.len() as f64)
}
