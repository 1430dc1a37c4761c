use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::bits::{BitString, LengthMismatch};

/// Responses required before a Shannon entropy estimate is reported.
pub const MIN_ENTROPY_RESPONSES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl Summary {
    pub const ZERO: Summary = Summary {
        min: 0.0,
        mean: 0.0,
        max: 0.0,
    };

    /// Summarises a non-empty sample; `None` when empty.
    pub fn of(values: &[f64]) -> Option<Self> {
        let first = *values.first()?;
        let (mut min, mut max, mut sum) = (first, first, 0.0);
        for &v in values {
            min = min.min(v);
            max = max.max(v);
            sum += v;
        }
        Some(Self {
            min,
            mean: (sum / values.len() as f64).clamp(min, max),
            max,
        })
    }
}

fn check_lengths(responses: &[BitString]) -> Result<usize, MetricsError> {
    let n = responses.first().map_or(0, BitString::len);
    if let Some(bad) = responses.iter().find(|r| r.len() != n) {
        return Err(LengthMismatch {
            left: n,
            right: bad.len(),
        }
        .into());
    }
    Ok(n)
}

/// Fractional Hamming distance over all unordered pairs.
pub fn inter_hd(responses: &[BitString]) -> Result<Summary, MetricsError> {
    if responses.len() < 2 {
        return Err(MetricsError::TooFew {
            needed: 2,
            got: responses.len(),
        });
    }
    let n = check_lengths(responses)?.max(1) as f64;
    let mut fractions = Vec::with_capacity(responses.len() * (responses.len() - 1) / 2);
    for (i, a) in responses.iter().enumerate() {
        for b in &responses[i + 1..] {
            fractions.push(a.hamming_distance(b)? as f64 / n);
        }
    }
    Ok(Summary::of(&fractions).expect("at least one pair"))
}

/// Per-trial bit error rate against `reference`.
pub fn reliability(reference: &BitString, trials: &[BitString]) -> Result<Summary, MetricsError> {
    if trials.is_empty() {
        return Err(MetricsError::TooFew { needed: 1, got: 0 });
    }
    let n = reference.len().max(1) as f64;
    let rates = trials
        .iter()
        .map(|t| Ok(reference.hamming_distance(t)? as f64 / n))
        .collect::<Result<Vec<_>, MetricsError>>()?;
    Ok(Summary::of(&rates).expect("non-empty"))
}

fn ones_fractions(responses: &[BitString]) -> Result<Vec<f64>, MetricsError> {
    let n = check_lengths(responses)?;
    let mut ones = vec![0usize; n];
    for r in responses {
        for (i, bit) in r.iter().enumerate() {
            ones[i] += usize::from(bit);
        }
    }
    let m = responses.len() as f64;
    Ok(ones.into_iter().map(|c| c as f64 / m).collect())
}

fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}

/// Mean plug-in Shannon entropy per bit position, without a sample-size guard.
pub fn plugin_entropy(responses: &[BitString]) -> Result<f64, MetricsError> {
    if responses.is_empty() {
        return Err(MetricsError::TooFew { needed: 1, got: 0 });
    }
    let p = ones_fractions(responses)?;
    if p.is_empty() {
        return Ok(0.0);
    }
    Ok(p.iter().map(|&p| binary_entropy(p)).sum::<f64>() / p.len() as f64)
}

/// Mean plug-in Shannon entropy per bit position over at least
/// [`MIN_ENTROPY_RESPONSES`] responses.
pub fn shannon_entropy(responses: &[BitString]) -> Result<f64, MetricsError> {
    if responses.len() < MIN_ENTROPY_RESPONSES {
        return Err(MetricsError::TooFew {
            needed: MIN_ENTROPY_RESPONSES,
            got: responses.len(),
        });
    }
    plugin_entropy(responses)
}

/// Mean per-position min-entropy, `-log2 max(p, 1 - p)`.
pub fn min_entropy(responses: &[BitString]) -> Result<f64, MetricsError> {
    if responses.is_empty() {
        return Err(MetricsError::TooFew { needed: 1, got: 0 });
    }
    let p = ones_fractions(responses)?;
    if p.is_empty() {
        return Ok(0.0);
    }
    Ok(p.iter().map(|&p| -p.max(1.0 - p).log2()).sum::<f64>() / p.len() as f64)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn bits(s: &str) -> BitString {
        BitString::from_bits(s.chars().map(|c| c == '1'))
    }

    // Brute-force versions working on plain bool vectors.
    fn oracle_hd(rs: &[Vec<bool>]) -> (f64, f64, f64) {
        let mut v = Vec::new();
        for i in 0..rs.len() {
            for j in 0..rs.len() {
                if i < j {
                    let d = (0..rs[i].len()).filter(|&k| rs[i][k] != rs[j][k]).count();
                    v.push(d as f64 / rs[i].len() as f64);
                }
            }
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        (
            v.iter().cloned().fold(f64::INFINITY, f64::min),
            mean,
            v.iter().cloned().fold(0.0, f64::max),
        )
    }

    fn oracle_entropy(rs: &[Vec<bool>]) -> (f64, f64) {
        let n = rs[0].len();
        let (mut h, mut hmin) = (0.0, 0.0);
        for k in 0..n {
            let ones = rs.iter().filter(|r| r[k]).count() as f64;
            let p = ones / rs.len() as f64;
            let q = 1.0 - p;
            let mut hk = 0.0;
            if p > 0.0 {
                hk -= p * p.log2();
            }
            if q > 0.0 {
                hk -= q * q.log2();
            }
            h += hk;
            hmin += -(if p > q { p } else { q }).log2();
        }
        (h / n as f64, hmin / n as f64)
    }

    fn corpus() -> impl Strategy<Value = Vec<Vec<bool>>> {
        (1usize..=16, 2usize..=8).prop_flat_map(|(n, m)| {
            proptest::collection::vec(proptest::collection::vec(any::<bool>(), n), m)
        })
    }

    fn to_bits(rs: &[Vec<bool>]) -> Vec<BitString> {
        rs.iter()
            .map(|r| BitString::from_bits(r.iter().copied()))
            .collect()
    }

    #[test]
    fn worked_values() {
        let a = bits("10110010");
        assert_eq!(inter_hd(&[a.clone(), a.clone()]).unwrap(), Summary::ZERO);
        let c = inter_hd(&[a.clone(), a.complement()]).unwrap();
        assert_eq!((c.min, c.mean, c.max), (1.0, 1.0, 1.0));

        let reference = BitString::zeros(512);
        assert_eq!(
            reliability(&reference, std::slice::from_ref(&reference)).unwrap(),
            Summary::ZERO
        );
        let mut one = reference.clone();
        one.set(100, true);
        let r = reliability(&reference, &[one]).unwrap();
        assert_eq!(r.mean, 1.0 / 512.0);

        let zeros = vec![BitString::zeros(16); 30];
        assert_eq!(shannon_entropy(&zeros).unwrap(), 0.0);
        let balanced: Vec<BitString> = (0..30)
            .map(|i| {
                if i % 2 == 0 {
                    zeros[0].clone()
                } else {
                    zeros[0].complement()
                }
            })
            .collect();
        assert_eq!(shannon_entropy(&balanced).unwrap(), 1.0);
        assert_eq!(min_entropy(&balanced).unwrap(), 1.0);
        assert!(matches!(
            shannon_entropy(&balanced[..29]),
            Err(MetricsError::TooFew { needed: 30, .. })
        ));
    }

    #[test]
    fn guards() {
        assert!(inter_hd(&[bits("1")]).is_err());
        assert!(inter_hd(&[bits("1"), bits("10")]).is_err());
        assert!(reliability(&bits("1"), &[]).is_err());
        assert!(reliability(&bits("1"), &[bits("11")]).is_err());
    }

    proptest! {
        #[test]
        fn agrees_with_brute_force(rs in corpus()) {
            let b = to_bits(&rs);
            let s = inter_hd(&b).unwrap();
            let (min, mean, max) = oracle_hd(&rs);
            prop_assert!((s.min - min).abs() < 1e-12 && (s.mean - mean).abs() < 1e-12 && (s.max - max).abs() < 1e-12);
            let (h, hmin) = oracle_entropy(&rs);
            prop_assert!((plugin_entropy(&b).unwrap() - h).abs() < 1e-12);
            prop_assert!((min_entropy(&b).unwrap() - hmin).abs() < 1e-12);
            let rel = reliability(&b[0], &b[1..]).unwrap();
            let rates: Vec<f64> = rs[1..].iter().map(|r| (0..r.len()).filter(|&k| r[k] != rs[0][k]).count() as f64 / r.len() as f64).collect();
            prop_assert!((rel.mean - rates.iter().sum::<f64>() / rates.len() as f64).abs() < 1e-12);
            prop_assert!(rel.min <= rel.mean && rel.mean <= rel.max);
        }

        #[test]
        fn hd_is_complement_invariant(rs in corpus()) {
            let b = to_bits(&rs);
            let flipped: Vec<BitString> = b.iter().map(BitString::complement).collect();
            prop_assert_eq!(inter_hd(&b).unwrap(), inter_hd(&flipped).unwrap());
            let mut reversed = b.clone();
            reversed.reverse();
            let s = inter_hd(&reversed).unwrap();
            let t = inter_hd(&b).unwrap();
            prop_assert!((s.mean - t.mean).abs() < 1e-12 && s.min == t.min && s.max == t.max);
        }

        #[test]
        fn entropy_is_permutation_invariant(rs in corpus(), rot in 0usize..16) {
            let b = to_bits(&rs);
            let mut shuffled: Vec<Vec<bool>> = rs.iter().rev().cloned().collect();
            for r in &mut shuffled {
                let k = rot % r.len();
                r.rotate_left(k);
            }
            let h = plugin_entropy(&b).unwrap();
            let h2 = plugin_entropy(&to_bits(&shuffled)).unwrap();
            prop_assert!((h - h2).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&h));
        }
    }
}
