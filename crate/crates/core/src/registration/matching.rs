//! Nearest-neighbour descriptor matching with ratio test and mutual check.

use serde::{Deserialize, Serialize};

use super::keypoints::Descriptor;
use super::RegistrationError;
use crate::par;

pub const DEFAULT_RATIO: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub index_a: usize,
    pub index_b: usize,
    pub distance: f64,
}

pub fn hamming(a: &[u8], b: &[u8]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

pub fn euclidean(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| ((x - y) as f64).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Distance between two descriptors of the same kind.
pub fn descriptor_distance(a: &Descriptor, b: &Descriptor) -> Result<f64, RegistrationError> {
    match (a, b) {
        (Descriptor::Binary { data: x, .. }, Descriptor::Binary { data: y, .. }) if x.len() == y.len() => {
            Ok(hamming(x, y) as f64)
        }
        (Descriptor::Real(x), Descriptor::Real(y)) if x.len() == y.len() => Ok(euclidean(x, y)),
        _ => Err(RegistrationError::MixedDescriptorKinds),
    }
}

/// Best and second-best neighbour of `q` in `set`. Ties keep the lower index.
fn two_nearest(q: &Descriptor, set: &[Descriptor]) -> Option<(usize, f64, f64)> {
    let mut best: Option<(usize, f64)> = None;
    let mut second = f64::INFINITY;
    for (j, d) in set.iter().enumerate() {
        let dist = descriptor_distance(q, d).ok()?;
        match best {
            Some((_, b)) if dist >= b => second = second.min(dist),
            Some((_, b)) => {
                second = b;
                best = Some((j, dist));
            }
            None => best = Some((j, dist)),
        }
    }
    best.map(|(j, d)| (j, d, second))
}

/// Ratio-tested, mutually-best matches from `a` into `b`, ordered by `index_a`.
pub fn match_descriptors(
    a: &[Descriptor],
    b: &[Descriptor],
    ratio: f64,
) -> Result<Vec<Match>, RegistrationError> {
    let kinds = a.iter().chain(b).map(Descriptor::is_binary);
    let mut kinds = kinds.peekable();
    if let Some(&first) = kinds.peek() {
        if kinds.any(|k| k != first) {
            return Err(RegistrationError::MixedDescriptorKinds);
        }
    }
    if a.is_empty() || b.is_empty() {
        return Ok(Vec::new());
    }
    // Reject length mismatches up front so the parallel scans cannot fail.
    descriptor_distance(&a[0], &b[0])?;
    let forward = par::map_indexed(a, |_, q| two_nearest(q, b));
    let backward = par::map_indexed(b, |_, q| two_nearest(q, a).map(|(i, _, _)| i));
    Ok(forward
        .into_iter()
        .enumerate()
        .filter_map(|(i, r)| {
            let (j, d1, d2) = r?;
            // A zero best distance always passes; otherwise require the ratio.
            let passes = d1 == 0.0 || d1 < ratio * d2;
            (passes && backward[j] == Some(i)).then_some(Match {
                index_a: i,
                index_b: j,
                distance: d1,
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bin(data: Vec<u8>) -> Descriptor {
        Descriptor::Binary {
            bits: data.len() * 8,
            data,
        }
    }

    #[test]
    fn complement_has_full_distance() {
        let a: Vec<u8> = (0..32).map(|i| (i * 37) as u8).collect();
        let b: Vec<u8> = a.iter().map(|v| !v).collect();
        assert_eq!(hamming(&a, &b), 256);
        assert_eq!(hamming(&a, &a), 0);
    }

    #[test]
    fn self_match_has_zero_distance() {
        let set: Vec<_> = (0..5u8).map(|i| bin(vec![i * 50; 32])).collect();
        let m = match_descriptors(&set[2..3], &set, DEFAULT_RATIO).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].index_b, m[0].distance), (2, 0.0));
    }

    #[test]
    fn mixed_kinds_rejected() {
        let a = vec![bin(vec![0; 32])];
        let b = vec![Descriptor::Real(vec![0.0; 128])];
        assert!(matches!(
            match_descriptors(&a, &b, 0.75),
            Err(RegistrationError::MixedDescriptorKinds)
        ));
    }

    #[test]
    fn ambiguous_match_fails_ratio() {
        let q = vec![Descriptor::Real(vec![0.0, 0.0])];
        let set = vec![Descriptor::Real(vec![1.0, 0.0]), Descriptor::Real(vec![0.0, 1.0])];
        assert!(match_descriptors(&q, &set, 0.75).unwrap().is_empty());
    }
}
