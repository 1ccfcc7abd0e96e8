//! Expectation / standard deviation / combo ratio of a sequence, and Pearson
//! correlation.

use crate::error::{Error, Result};

/// Below this standard deviation the combo ratio is reported as 0.
pub const COMBO_EPSILON: f64 = 1e-12;

/// The three statistical indicators of a sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripleStat {
    pub mean: f64,
    /// Population standard deviation (divides by the sequence length).
    pub std: f64,
    pub combo: f64,
}

impl TripleStat {
    /// True when the combo ratio hit the zero-deviation guard.
    pub fn combo_guarded(&self) -> bool {
        self.std <= COMBO_EPSILON
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.mean, self.std, self.combo]
    }
}

pub fn triple_stat(xs: &[f64]) -> Result<TripleStat> {
    if xs.is_empty() {
        return Err(Error::EmptyStatistic);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    // Two-pass form of sqrt(E[x^2] - E[x]^2); equal in exact arithmetic.
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.max(0.0).sqrt();
    let combo = if std > COMBO_EPSILON { mean / std } else { 0.0 };
    Ok(TripleStat { mean, std, combo })
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::DegenerateCorrelation);
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 || !sxx.is_finite() || !syy.is_finite() {
        return Err(Error::DegenerateCorrelation);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn abs_pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    pearson(xs, ys).map(f64::abs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn triple_stat_examples() {
        let t = triple_stat(&[-1.0, -2.0, -3.0]).unwrap();
        assert!((t.mean + 2.0).abs() < 1e-15);
        assert!((t.std - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((t.std - 0.816_496_580_927_726).abs() < 1e-12);
        assert!((t.combo + 2.449_489_742_783_178).abs() < 1e-12);

        let c = triple_stat(&[-2.0, -2.0, -2.0]).unwrap();
        assert_eq!((c.mean, c.std, c.combo), (-2.0, 0.0, 0.0));
        assert!(c.combo_guarded());

        let s = triple_stat(&[-5.0]).unwrap();
        assert_eq!((s.mean, s.std, s.combo), (-5.0, 0.0, 0.0));

        assert!(matches!(triple_stat(&[]), Err(Error::EmptyStatistic)));
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&x, &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!((abs_pearson(&x, &[3.0, 2.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            pearson(&x, &[1.0, 1.0, 1.0]),
            Err(Error::DegenerateCorrelation)
        ));
        assert!(matches!(
            pearson(&x, &[1.0, 2.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn triple_stat_permutation_invariant(mut xs in prop::collection::vec(-10.0f64..0.0, 1..30)) {
            let a = triple_stat(&xs).unwrap();
            xs.reverse();
            let mid = xs.len() / 2;
            xs.rotate_left(mid);
            let b = triple_stat(&xs).unwrap();
            prop_assert!((a.mean - b.mean).abs() < 1e-12);
            prop_assert!((a.std - b.std).abs() < 1e-12);
        }

        #[test]
        fn triple_stat_affine(xs in prop::collection::vec(-10.0f64..0.0, 1..30),
                              a in -5.0f64..5.0, b in -5.0f64..5.0) {
            let base = triple_stat(&xs).unwrap();
            let moved: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            let t = triple_stat(&moved).unwrap();
            prop_assert!((t.std - a.abs() * base.std).abs() < 1e-9);
            prop_assert!((t.mean - (a * base.mean + b)).abs() < 1e-9);
        }

        #[test]
        fn pearson_positive_affine_invariant(
            xs in prop::collection::vec(-10.0f64..10.0, 5..40),
            a in 0.1f64..10.0, b in -5.0f64..5.0, c in 0.1f64..10.0, d in -5.0f64..5.0,
        ) {
            let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| x.sin() + i as f64 * 0.1).collect();
            if let Ok(r) = pearson(&xs, &ys) {
                let xs2: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
                let ys2: Vec<f64> = ys.iter().map(|y| c * y + d).collect();
                let r2 = pearson(&xs2, &ys2).unwrap();
                prop_assert!((r - r2).abs() < 1e-12);
            }
        }
    }
}
