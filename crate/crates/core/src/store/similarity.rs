use thiserror::Error;

use crate::embedding::EmbeddingVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SimilarityError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("cosine is undefined for a zero vector")]
    ZeroVector,
}

/// `dot(a, b) / (|a| |b|)`, clamped to `[-1, 1]` against rounding.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, SimilarityError> {
    if a.dim() != b.dim() {
        return Err(SimilarityError::DimMismatch(a.dim(), b.dim()));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.values().iter().zip(b.values()) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(SimilarityError::ZeroVector);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(values: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn identity_and_orthogonality() {
        let a = v(&[0.6, 0.8]);
        assert!((cosine(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&v(&[1.0, 0.0, 0.0]), &v(&[0.0, 1.0, 0.0])).unwrap(), 0.0);
        assert_eq!(cosine(&v(&[1.0, 0.0]), &v(&[-2.0, 0.0])).unwrap(), -1.0);
    }

    #[test]
    fn errors() {
        assert_eq!(cosine(&v(&[1.0]), &v(&[1.0, 2.0])), Err(SimilarityError::DimMismatch(1, 2)));
        assert_eq!(cosine(&v(&[0.0, 0.0]), &v(&[1.0, 2.0])), Err(SimilarityError::ZeroVector));
    }

    // independent two-pass formulation
    fn naive(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / na / nb
    }

    proptest! {
        #[test]
        fn matches_naive_dot_product(
            a in prop::collection::vec(-1.0f64..1.0, 64),
            b in prop::collection::vec(-1.0f64..1.0, 64),
        ) {
            prop_assume!(a.iter().any(|x| *x != 0.0) && b.iter().any(|x| *x != 0.0));
            let got = cosine(&v(&a), &v(&b)).unwrap();
            prop_assert!((got - naive(&a, &b)).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&got));
        }
    }
}
