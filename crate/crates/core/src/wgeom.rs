//! Weighted inner-product geometry on the data space.
//!
//! Data vectors live in an M-dimensional real space equipped with a
//! per-coordinate measure `mu_i >= 0`; the inner product is
//! `<f|g> = sum_i f_i g_i mu_i`. With `mu_i = 1/sigma_i^2` the induced
//! squared distance is the chi-square misfit, the maximum-likelihood metric
//! for Gaussian errors. Coordinates with `mu_i = 0` contribute nothing.

use ndarray::Array1;

use crate::{Error, Result};

/// A vector of M data-space components.
pub type DataVector = Array1<f64>;

/// Per-datum non-negative weights defining the data-space inner product.
///
/// Invariants (enforced at construction): every weight is finite and
/// non-negative, and at least one weight is strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure {
    weights: Array1<f64>,
}

impl Measure {
    pub fn new(weights: Array1<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidMeasure("empty weight vector".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidMeasure(
                "weights must be finite and non-negative".into(),
            ));
        }
        if weights.iter().all(|w| *w == 0.0) {
            return Err(Error::InvalidMeasure(
                "at least one weight must be positive".into(),
            ));
        }
        Ok(Self { weights })
    }

    /// The uniform measure `mu_i = 1` on `m` coordinates.
    pub fn uniform(m: usize) -> Self {
        Self {
            weights: Array1::ones(m),
        }
    }

    /// Inverse-variance weights `mu_i = 1/sigma_i^2` from standard deviations.
    pub fn from_sigma(sigma: &Array1<f64>) -> Result<Self> {
        if sigma.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::InvalidMeasure(
                "standard deviations must be finite and positive".into(),
            ));
        }
        Self::new(sigma.mapv(|s| s.powi(-2)))
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub(crate) fn as_slice(&self) -> &[f64] {
        self.weights.as_slice().expect("measure is contiguous")
    }

    fn check_len(&self, v: &DataVector) -> Result<()> {
        if v.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: v.len(),
            });
        }
        Ok(())
    }
}

/// Weighted inner product `sum_i f_i g_i mu_i`.
///
/// Symmetric in `f` and `g` (vectors are real).
pub fn inner(f: &DataVector, g: &DataVector, mu: &Measure) -> Result<f64> {
    mu.check_len(f)?;
    mu.check_len(g)?;
    Ok(dot_w(as_slice(f), as_slice(g), mu.as_slice()))
}

/// Weighted squared norm `<f|f>`. Always non-negative.
pub fn norm2(f: &DataVector, mu: &Measure) -> Result<f64> {
    mu.check_len(f)?;
    Ok(norm2_w(as_slice(f), mu.as_slice()))
}

/// Weighted squared distance `<f-g|f-g>`.
pub fn dist2(f: &DataVector, g: &DataVector, mu: &Measure) -> Result<f64> {
    mu.check_len(f)?;
    mu.check_len(g)?;
    Ok(dist2_w(as_slice(f), as_slice(g), mu.as_slice()))
}

pub(crate) fn as_slice(v: &DataVector) -> &[f64] {
    v.as_slice().expect("data vector is contiguous")
}

// Unchecked kernels for internal hot paths; lengths are guaranteed by
// construction at the call sites.

pub(crate) fn dot_w(f: &[f64], g: &[f64], w: &[f64]) -> f64 {
    debug_assert!(f.len() == g.len() && g.len() == w.len());
    f.iter().zip(g).zip(w).map(|((a, b), c)| a * b * c).sum()
}

pub(crate) fn norm2_w(f: &[f64], w: &[f64]) -> f64 {
    debug_assert_eq!(f.len(), w.len());
    f.iter().zip(w).map(|(a, c)| a * a * c).sum()
}

pub(crate) fn dist2_w(f: &[f64], g: &[f64], w: &[f64]) -> f64 {
    debug_assert!(f.len() == g.len() && g.len() == w.len());
    f.iter()
        .zip(g)
        .zip(w)
        .map(|((a, b), c)| {
            let d = a - b;
            d * d * c
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn inner_uniform_reduces_to_dot_product() {
        let mu = Measure::uniform(2);
        let v = inner(&array![1.0, 2.0], &array![3.0, 4.0], &mu).unwrap();
        assert_eq!(v, 11.0);
    }

    #[test]
    fn inner_zero_weight_annihilates_coordinate() {
        let mu = Measure::new(array![0.0, 5.0]).unwrap();
        let v = inner(&array![1.0, 0.0], &array![1.0, 0.0], &mu).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn inner_of_worked_instance_ftilde() {
        // f~ = (0.5, -0.5) for the 2x2 identity instance: 0.25 + 0.25.
        let ft = array![0.5, -0.5];
        let mu = Measure::uniform(2);
        assert_eq!(inner(&ft, &ft, &mu).unwrap(), 0.5);
    }

    #[test]
    fn norm2_examples() {
        let mu = Measure::uniform(2);
        assert_eq!(norm2(&array![0.0, 0.0], &mu).unwrap(), 0.0);
        assert_eq!(norm2(&array![3.0, 4.0], &mu).unwrap(), 25.0);
        let mu = Measure::new(array![4.0, 9.0]).unwrap();
        assert_eq!(norm2(&array![1.0, 1.0], &mu).unwrap(), 13.0);
    }

    #[test]
    fn dist2_examples() {
        let mu = Measure::uniform(2);
        let f = array![1.0, 0.0];
        assert_eq!(dist2(&f, &f, &mu).unwrap(), 0.0);
        assert_eq!(dist2(&f, &array![0.0, 1.0], &mu).unwrap(), 2.0);
        let mu = Measure::new(array![4.0, 1.0]).unwrap();
        assert_eq!(
            dist2(&array![2.0, 2.0], &array![1.0, 1.0], &mu).unwrap(),
            5.0
        );
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let mu = Measure::uniform(2);
        let e = inner(&array![1.0], &array![1.0, 2.0], &mu);
        assert!(matches!(e, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn measure_rejects_bad_weights() {
        assert!(Measure::new(array![1.0, -1.0]).is_err());
        assert!(Measure::new(array![0.0, 0.0]).is_err());
        assert!(Measure::new(array![f64::NAN, 1.0]).is_err());
        assert!(Measure::from_sigma(&array![1.0, 0.0]).is_err());
    }

    #[test]
    fn from_sigma_is_inverse_variance() {
        let mu = Measure::from_sigma(&array![0.5, 2.0]).unwrap();
        assert_eq!(mu.weights()[0], 4.0);
        assert_eq!(mu.weights()[1], 0.25);
    }

    fn vec_strategy(m: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-100.0..100.0f64, m)
    }

    proptest! {
        #[test]
        fn bilinearity(
            f in vec_strategy(7),
            h in vec_strategy(7),
            g in vec_strategy(7),
            w in proptest::collection::vec(0.0..10.0f64, 7),
            a in -10.0..10.0f64,
        ) {
            prop_assume!(w.iter().any(|x| *x > 0.0));
            let mu = Measure::new(Array1::from(w)).unwrap();
            let f = Array1::from(f);
            let h = Array1::from(h);
            let g = Array1::from(g);
            let lhs = inner(&(&f * a + &h), &g, &mu).unwrap();
            let rhs = a * inner(&f, &g, &mu).unwrap() + inner(&h, &g, &mu).unwrap();
            let scale = lhs.abs().max(rhs.abs()).max(1e-30);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale.max(1.0));
        }

        #[test]
        fn positivity(
            f in vec_strategy(7),
            w in proptest::collection::vec(0.0..10.0f64, 7),
        ) {
            prop_assume!(w.iter().any(|x| *x > 0.0));
            // Keep components away from the squaring-underflow region so the
            // iff below is exact.
            prop_assume!(f.iter().all(|x| *x == 0.0 || x.abs() > 1e-100));
            prop_assume!(w.iter().all(|x| *x == 0.0 || *x > 1e-100));
            let mu = Measure::new(Array1::from(w.clone())).unwrap();
            let f = Array1::from(f);
            let n2 = norm2(&f, &mu).unwrap();
            prop_assert!(n2 >= 0.0);
            let zero_on_support = f.iter().zip(&w).all(|(x, wi)| *wi == 0.0 || *x == 0.0);
            prop_assert_eq!(n2 == 0.0, zero_on_support);
        }

        #[test]
        fn uniform_measure_matches_plain_dot(f in vec_strategy(9), g in vec_strategy(9)) {
            let mu = Measure::uniform(9);
            let fa = Array1::from(f);
            let ga = Array1::from(g);
            let expected: f64 = fa.iter().zip(ga.iter()).map(|(a, b)| a * b).sum();
            prop_assert_eq!(inner(&fa, &ga, &mu).unwrap(), expected);
        }
    }
}
