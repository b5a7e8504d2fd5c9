//! Scores for holdout assessment.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum R2Kind {
    /// Squared Pearson correlation between predictions and reference.
    #[default]
    SquaredPearson,
    /// `1 - SS_res / SS_tot`.
    Determination,
}

fn check_pair(pred: &[f64], reference: &[f64]) -> Result<()> {
    if pred.len() != reference.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions for {} reference values",
            pred.len(),
            reference.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("no values to score"));
    }
    Ok(())
}

/// Pearson correlation, `None` when either side has zero variance.
pub(crate) fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

pub fn rmse(pred: &[f64], reference: &[f64]) -> Result<f64> {
    check_pair(pred, reference)?;
    let ss: f64 = pred.iter().zip(reference).map(|(p, r)| (p - r).powi(2)).sum();
    Ok((ss / pred.len() as f64).sqrt())
}

/// Squared Pearson correlation. Constant predictions score 0.
pub fn r2_pearson(pred: &[f64], reference: &[f64]) -> Result<f64> {
    check_pair(pred, reference)?;
    if pred.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: pred.len() });
    }
    if reference.iter().all(|&r| r == reference[0]) {
        return Err(Error::ConstantReference);
    }
    Ok(pearson(pred, reference).map_or(0.0, |r| r * r))
}

pub fn coefficient_of_determination(pred: &[f64], reference: &[f64]) -> Result<f64> {
    check_pair(pred, reference)?;
    if pred.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: pred.len() });
    }
    let n = reference.len() as f64;
    let mean = reference.iter().sum::<f64>() / n;
    let ss_tot: f64 = reference.iter().map(|r| (r - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::ConstantReference);
    }
    let ss_res: f64 = pred.iter().zip(reference).map(|(p, r)| (p - r).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn r2(kind: R2Kind, pred: &[f64], reference: &[f64]) -> Result<f64> {
    match kind {
        R2Kind::SquaredPearson => r2_pearson(pred, reference),
        R2Kind::Determination => coefficient_of_determination(pred, reference),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_values() {
        // r = 2.5 / sqrt(2 * 4.6667) = 0.98198
        let r2 = r2_pearson(&[1.0, 2.0, 4.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((r2 - 0.9643).abs() < 1e-4);
        assert!((r2 - 0.981_980_506_061_965_7f64.powi(2)).abs() < 1e-12);
        assert_eq!(r2_pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert!((rmse(&[1.0, 2.0, 4.0], &[1.0, 2.0, 3.0]).unwrap() - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((coefficient_of_determination(&[1.0, 2.0, 4.0], &[1.0, 2.0, 3.0]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(matches!(r2_pearson(&[1.0, 2.0], &[3.0, 3.0]), Err(Error::ConstantReference)));
        assert!(matches!(r2_pearson(&[1.0], &[3.0]), Err(Error::TooFewSamples { .. })));
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
        assert_eq!(r2_pearson(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn r2_affine_invariant_rmse_not(
            pred in proptest::collection::vec(-10.0f64..10.0, 3..20),
            alpha in 0.1f64..10.0, beta in -5.0f64..5.0,
        ) {
            let reference: Vec<f64> = pred.iter().enumerate().map(|(i, p)| p + (i as f64 * 0.7).sin()).collect();
            prop_assume!(pred.iter().any(|&p| (p - pred[0]).abs() > 1e-3));
            let moved: Vec<f64> = pred.iter().map(|p| alpha * p + beta).collect();
            let a = r2_pearson(&pred, &reference).unwrap();
            let b = r2_pearson(&moved, &reference).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&a));
            if (alpha - 1.0).abs() > 0.05 || beta.abs() > 0.05 {
                prop_assert!(rmse(&pred, &reference).unwrap() != rmse(&moved, &reference).unwrap());
            }
        }
    }
}
