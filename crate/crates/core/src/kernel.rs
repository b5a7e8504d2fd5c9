//! Stationary covariance functions over scalar time inputs.
//!
//! Kernel variance is fixed to one; output scale lives in the
//! coregionalization vectors.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const SQRT_3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelKind {
    #[default]
    Matern32,
    SquaredExponential,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Matern32 => "matern32",
            KernelKind::SquaredExponential => "squared_exponential",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "matern32" => Some(KernelKind::Matern32),
            "squared_exponential" | "se" => Some(KernelKind::SquaredExponential),
            _ => None,
        }
    }
}

/// A unit-variance stationary kernel with a lengthscale in days.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub kind: KernelKind,
    lengthscale: f64,
}

impl KernelParams {
    pub fn new(kind: KernelKind, lengthscale: f64) -> Result<Self> {
        if !(lengthscale.is_finite() && lengthscale > 0.0) {
            return Err(Error::InvalidInput(format!(
                "lengthscale must be positive and finite, got {lengthscale}"
            )));
        }
        Ok(KernelParams { kind, lengthscale })
    }

    pub fn matern32(lengthscale: f64) -> Result<Self> {
        Self::new(KernelKind::Matern32, lengthscale)
    }

    pub fn squared_exponential(lengthscale: f64) -> Result<Self> {
        Self::new(KernelKind::SquaredExponential, lengthscale)
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    /// Covariance as a function of the absolute time separation.
    #[inline]
    pub fn eval_distance(&self, r: f64) -> f64 {
        let r = r.abs();
        match self.kind {
            KernelKind::Matern32 => {
                let s = SQRT_3 * r / self.lengthscale;
                (1.0 + s) * (-s).exp()
            }
            KernelKind::SquaredExponential => {
                let s = r / self.lengthscale;
                (-0.5 * s * s).exp()
            }
        }
    }

    /// d k / d lengthscale at separation `r`.
    #[inline]
    pub fn grad_distance(&self, r: f64) -> f64 {
        let r = r.abs();
        let l = self.lengthscale;
        match self.kind {
            KernelKind::Matern32 => {
                let s = SQRT_3 * r / l;
                s * s * (-s).exp() / l
            }
            KernelKind::SquaredExponential => {
                let s = r / l;
                s * s * (-0.5 * s * s).exp() / l
            }
        }
    }

    pub fn eval(&self, t1: f64, t2: f64) -> f64 {
        self.eval_distance(t1 - t2)
    }
}

fn check_nonempty(rows: &[f64], cols: &[f64]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("kernel matrix rows"));
    }
    if cols.is_empty() {
        return Err(Error::EmptyInput("kernel matrix cols"));
    }
    Ok(())
}

pub fn kernel_matrix(params: &KernelParams, rows: &[f64], cols: &[f64]) -> Result<DMatrix<f64>> {
    check_nonempty(rows, cols)?;
    Ok(DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
        params.eval(rows[i], cols[j])
    }))
}

/// Element-wise derivative of [`kernel_matrix`] with respect to the lengthscale.
pub fn kernel_grad_lengthscale(
    params: &KernelParams,
    rows: &[f64],
    cols: &[f64],
) -> Result<DMatrix<f64>> {
    check_nonempty(rows, cols)?;
    Ok(DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
        params.grad_distance(rows[i] - cols[j])
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn central_diff(kind: KernelKind, l: f64, r: f64) -> f64 {
        let h = 1e-5 * l;
        let hi = KernelParams::new(kind, l + h).unwrap().eval_distance(r);
        let lo = KernelParams::new(kind, l - h).unwrap().eval_distance(r);
        (hi - lo) / (2.0 * h)
    }

    #[test]
    fn unit_at_zero_distance() {
        let k = KernelParams::matern32(76.44).unwrap();
        assert_eq!(k.eval(0.0, 0.0), 1.0);
        assert_eq!(k.eval(123.5, 123.5), 1.0);
    }

    #[test]
    fn closed_form_values() {
        // (1 + sqrt 3) exp(-sqrt 3) and exp(-1/2)
        let m = (1.0 + 3f64.sqrt()) * (-(3f64.sqrt())).exp();
        let k = KernelParams::matern32(10.0).unwrap();
        assert!((k.eval(0.0, 10.0) - m).abs() < 1e-15);
        assert!((k.eval(0.0, 10.0) - 0.48335).abs() < 1e-5);
        let se = KernelParams::squared_exponential(10.0).unwrap();
        assert!((se.eval(0.0, 10.0) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((se.eval(0.0, 10.0) - 0.60653).abs() < 1e-5);
    }

    #[test]
    fn rejects_bad_lengthscale() {
        assert!(KernelParams::matern32(0.0).is_err());
        assert!(KernelParams::matern32(-1.0).is_err());
        assert!(KernelParams::matern32(f64::NAN).is_err());
    }

    #[test]
    fn matrix_shapes_and_values() {
        let k = KernelParams::matern32(10.0).unwrap();
        let m = kernel_matrix(&k, &[0.0], &[0.0]).unwrap();
        assert_eq!(m, DMatrix::from_element(1, 1, 1.0));

        let m = kernel_matrix(&k, &[0.0, 10.0], &[0.0, 10.0]).unwrap();
        assert_eq!(m[(0, 0)], 1.0);
        assert_eq!(m[(1, 1)], 1.0);
        assert!((m[(0, 1)] - 0.48335).abs() < 1e-5);
        assert_eq!(m[(0, 1)], m[(1, 0)]);

        let m = kernel_matrix(&k, &[0.0], &[0.0, 5.0, 10.0]).unwrap();
        assert_eq!(m.shape(), (1, 3));
        assert!(kernel_matrix(&k, &[], &[1.0]).is_err());
        assert!(kernel_grad_lengthscale(&k, &[1.0], &[]).is_err());
    }

    #[test]
    fn gradient_reference_values() {
        // frozen from the central-difference oracle, h = 1e-5 * l
        let fd_m = central_diff(KernelKind::Matern32, 10.0, 10.0);
        let fd_se = central_diff(KernelKind::SquaredExponential, 10.0, 10.0);
        assert!((fd_m - 0.053_076_3).abs() < 1e-6, "{fd_m}");
        assert!((fd_se - 0.060_653_1).abs() < 1e-6, "{fd_se}");

        let m = KernelParams::matern32(10.0).unwrap();
        let g = kernel_grad_lengthscale(&m, &[0.0, 3.0], &[10.0, 3.0]).unwrap();
        assert!((g[(0, 0)] - 0.053_076_3).abs() < 1e-6);
        assert_eq!(g[(1, 1)], 0.0);
        let se = KernelParams::squared_exponential(10.0).unwrap();
        assert!((se.grad_distance(10.0) - 0.060_653_1).abs() < 1e-6);
    }

    #[test]
    fn psd_on_distinct_times() {
        let times: Vec<f64> = (0..50).map(|i| i as f64 * 7.3 + (i as f64).sin()).collect();
        for kind in [KernelKind::Matern32, KernelKind::SquaredExponential] {
            let k = KernelParams::new(kind, 12.0).unwrap();
            let m = kernel_matrix(&k, &times, &times).unwrap();
            let min = m.symmetric_eigenvalues().min();
            assert!(min >= -1e-10, "{kind:?}: {min}");
        }
    }

    fn kind_strategy() -> impl Strategy<Value = KernelKind> {
        prop_oneof![Just(KernelKind::Matern32), Just(KernelKind::SquaredExponential)]
    }

    proptest! {
        #[test]
        fn symmetric_and_stationary(kind in kind_strategy(), l in 1.0f64..200.0,
                                    a in -500.0f64..500.0, b in -500.0f64..500.0,
                                    shift in -1000.0f64..1000.0) {
            let k = KernelParams::new(kind, l).unwrap();
            prop_assert_eq!(k.eval(a, b), k.eval(b, a));
            let d = a - b;
            prop_assert_eq!(k.eval(a, b), k.eval_distance(d));
            // shifting both inputs by an exactly representable amount
            let s = shift.round();
            if (a + s) - (b + s) == d {
                prop_assert_eq!(k.eval(a + s, b + s), k.eval(a, b));
            }
            let v = k.eval(a, b);
            prop_assert!(v > 0.0 || d.abs() > 35.0 * l);
            prop_assert!(v <= 1.0);
        }

        #[test]
        fn monotone_decay(kind in kind_strategy(), l in 1.0f64..200.0,
                          r1 in 0.0f64..500.0, r2 in 0.0f64..500.0) {
            let k = KernelParams::new(kind, l).unwrap();
            let (near, far) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            prop_assert!(k.eval_distance(far) <= k.eval_distance(near));
        }

        #[test]
        fn gradient_matches_finite_differences(kind in kind_strategy(), l in 1.0f64..200.0,
                                               r in 0.0f64..500.0) {
            let k = KernelParams::new(kind, l).unwrap();
            let g = k.grad_distance(r);
            let fd = central_diff(kind, l, r);
            let scale = g.abs().max(fd.abs());
            // both vanish far in the tail; compare absolutely there
            if scale > 1e-12 {
                prop_assert!((g - fd).abs() / scale < 1e-5, "g={g} fd={fd}");
            } else {
                prop_assert!((g - fd).abs() < 1e-15);
            }
        }
    }
}
