//! Full covariance of the two-output latent factor model over heterotopic
//! inputs, plus a Cholesky factorization with a jitter fallback.
//!
//! Block `(d, d')` of the assembled matrix is `sum_q B_q[d, d'] K_q(T_d, T_d')`,
//! with `B_q = a_q a_q^T`. Per-output noise variances are added on the
//! diagonal blocks only.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Matrix2};

use crate::error::{Error, Result};
use crate::kernel::KernelParams;

/// Mixing weights of one latent process into the two outputs.
///
/// Stored in canonical sign: the first nonzero component is nonnegative,
/// since `a` and `-a` give the same coregionalization matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoregVector([f64; 2]);

impl CoregVector {
    pub fn new(a: [f64; 2]) -> Self {
        let flip = if a[0] != 0.0 { a[0] < 0.0 } else { a[1] < 0.0 };
        if flip {
            CoregVector([-a[0], -a[1]])
        } else {
            CoregVector([a[0] + 0.0, a[1] + 0.0])
        }
    }

    /// Build without canonicalizing, as the optimizer does mid-run.
    pub(crate) fn raw(a: [f64; 2]) -> Self {
        CoregVector(a)
    }

    pub fn components(&self) -> [f64; 2] {
        self.0
    }

    pub fn canonical(&self) -> Self {
        CoregVector::new(self.0)
    }

    /// Off-diagonal element of `a a^T`.
    pub fn b12(&self) -> f64 {
        self.0[0] * self.0[1]
    }
}

pub fn coreg_matrix(v: &CoregVector) -> Matrix2<f64> {
    let [a1, a2] = v.0;
    Matrix2::new(a1 * a1, a1 * a2, a2 * a1, a2 * a2)
}

/// Sample times of both outputs. Each vector is strictly ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiInput {
    times: [Vec<f64>; 2],
}

impl MultiInput {
    pub fn new(times_1: Vec<f64>, times_2: Vec<f64>) -> Result<Self> {
        for (d, t) in [&times_1, &times_2].into_iter().enumerate() {
            if t.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(format!("output {} has non-finite times", d + 1)));
            }
            if t.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidInput(format!(
                    "output {} times must be strictly ascending",
                    d + 1
                )));
            }
        }
        if times_1.is_empty() && times_2.is_empty() {
            return Err(Error::EmptyInput("both outputs have no samples"));
        }
        Ok(MultiInput {
            times: [times_1, times_2],
        })
    }

    pub fn times(&self, output: usize) -> &[f64] {
        &self.times[output]
    }

    pub fn len(&self, output: usize) -> usize {
        self.times[output].len()
    }

    pub fn total(&self) -> usize {
        self.times[0].len() + self.times[1].len()
    }

    /// Concatenated times `[T_1; T_2]` with the output index of each entry.
    pub(crate) fn stacked(&self) -> (Vec<f64>, Vec<usize>) {
        let mut t = Vec::with_capacity(self.total());
        let mut owner = Vec::with_capacity(self.total());
        for d in 0..2 {
            t.extend_from_slice(&self.times[d]);
            owner.extend(std::iter::repeat_n(d, self.times[d].len()));
        }
        (t, owner)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseVariances(pub [f64; 2]);

impl NoiseVariances {
    pub fn new(sigma2: [f64; 2]) -> Result<Self> {
        if sigma2.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "noise variances must be nonnegative, got {sigma2:?}"
            )));
        }
        Ok(NoiseVariances(sigma2))
    }
}

pub fn assemble_full_covariance(
    kernels: &[KernelParams; 2],
    coregs: &[CoregVector; 2],
    inputs: &MultiInput,
    noise: &NoiseVariances,
) -> DMatrix<f64> {
    let (t, owner) = inputs.stacked();
    let b = [coreg_matrix(&coregs[0]), coreg_matrix(&coregs[1])];
    let n = t.len();
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let r = t[i] - t[j];
            let (di, dj) = (owner[i], owner[j]);
            let v = b[0][(di, dj)] * kernels[0].eval_distance(r)
                + b[1][(di, dj)] * kernels[1].eval_distance(r);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(j, j)] += noise.0[owner[j]];
    }
    k
}

/// Cross covariance between both outputs at `t_star` and every training sample.
/// Row `d` holds `sum_q B_q[d, d'] K_q(t_star, T_d')`.
pub fn assemble_cross_covariance(
    kernels: &[KernelParams; 2],
    coregs: &[CoregVector; 2],
    inputs: &MultiInput,
    t_star: f64,
) -> DMatrix<f64> {
    let (t, owner) = inputs.stacked();
    let b = [coreg_matrix(&coregs[0]), coreg_matrix(&coregs[1])];
    DMatrix::from_fn(2, t.len(), |d, j| {
        let r = t_star - t[j];
        b[0][(d, owner[j])] * kernels[0].eval_distance(r)
            + b[1][(d, owner[j])] * kernels[1].eval_distance(r)
    })
}

/// Relative jitter levels tried after a plain factorization fails.
pub const JITTER_LADDER: [f64; 3] = [1e-8, 1e-6, 1e-4];

/// Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Factor {
    chol: Cholesky<f64, Dyn>,
    jitter_level: f64,
    jitter: f64,
}

impl Factor {
    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    /// Relative jitter level used (0 when none was needed).
    pub fn jitter_level(&self) -> f64 {
        self.jitter_level
    }

    /// Absolute amount added to the diagonal.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    /// Solves `L x = b` for the lower factor `L`.
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol
            .l_dirty()
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal")
    }

    pub fn solve_lower_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol
            .l_dirty()
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal")
    }

    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    pub fn lower(&self) -> DMatrix<f64> {
        self.chol.l()
    }
}

pub fn stable_factorize(matrix: &DMatrix<f64>) -> Result<Factor> {
    if !matrix.is_square() || matrix.nrows() == 0 {
        return Err(Error::InvalidInput("factorization needs a nonempty square matrix".into()));
    }
    if matrix.iter().any(|x| !x.is_finite()) {
        return Err(Error::NotPositiveDefinite);
    }
    if let Some(chol) = Cholesky::new(matrix.clone()) {
        return Ok(Factor {
            chol,
            jitter_level: 0.0,
            jitter: 0.0,
        });
    }
    let n = matrix.nrows();
    let mean_diag = matrix.diagonal().sum() / n as f64;
    let scale = if mean_diag > 0.0 { mean_diag } else { 1.0 };
    for level in JITTER_LADDER {
        let jitter = level * scale;
        let mut m = matrix.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok(Factor {
                chol,
                jitter_level: level,
                jitter,
            });
        }
    }
    Err(Error::NotPositiveDefinite)
}
