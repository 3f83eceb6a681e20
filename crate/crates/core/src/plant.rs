//! FIR plant `y = HΦ + w`, its regressor shift dynamics and bounded
//! disturbances.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};

/// Regressor ordered channel by channel, newest sample first:
/// `[u₁(t−1) … u₁(t−m), …, u_{n_u}(t−1) … u_{n_u}(t−m)]`.
pub type Regressor = DVector<f64>;

/// Impulse-response matrix with at most `sparsity_index` nonzeros per row.
#[derive(Clone, Debug, PartialEq)]
pub struct ImpulseResponse {
    coefficients: DMatrix<f64>,
    sparsity_index: usize,
}

impl ImpulseResponse {
    pub fn new(coefficients: DMatrix<f64>, sparsity_index: usize) -> Result<Self> {
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(
                "impulse response has non-finite entries".into(),
            ));
        }
        for (i, row) in coefficients.row_iter().enumerate() {
            let nnz = row.iter().filter(|c| **c != 0.0).count();
            if nnz > sparsity_index {
                return Err(Error::InvalidArgument(format!(
                    "row {i} has {nnz} nonzeros, more than the sparsity index {sparsity_index}"
                )));
            }
        }
        Ok(Self {
            coefficients,
            sparsity_index,
        })
    }

    /// Wraps an estimate that need not be sparse (sparsity index = width).
    pub fn dense(coefficients: DMatrix<f64>) -> Self {
        let sparsity_index = coefficients.ncols();
        Self {
            coefficients,
            sparsity_index,
        }
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    pub fn sparsity_index(&self) -> usize {
        self.sparsity_index
    }

    pub fn n_outputs(&self) -> usize {
        self.coefficients.nrows()
    }

    /// Regressor length `n_u·m`.
    pub fn regressor_len(&self) -> usize {
        self.coefficients.ncols()
    }

    /// Row-major vectorization, the layout used by the estimator.
    pub fn vectorize(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.coefficients.len(),
            self.coefficients.transpose().iter().copied(),
        )
    }
}

/// Plant output `HΦ + w`.
pub fn step(truth: &ImpulseResponse, regressor: &Regressor, w: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim("plant regressor", truth.regressor_len(), regressor.len())?;
    check_dim("plant disturbance", truth.n_outputs(), w.len())?;
    Ok(truth.coefficients() * regressor + w)
}

/// Block-diagonal delay `W` (one subdiagonal shift per input channel) and
/// injection `Z` (unit vector into the newest slot of each channel).
#[derive(Clone, Debug)]
pub struct ShiftOperators {
    n_inputs: usize,
    memory: usize,
    delay: DMatrix<f64>,
    injection: DMatrix<f64>,
}

impl ShiftOperators {
    pub fn new(n_inputs: usize, memory: usize) -> Result<Self> {
        if n_inputs == 0 || memory == 0 {
            return Err(Error::InvalidArgument(
                "shift operators need at least one input and one delay".into(),
            ));
        }
        let dim = n_inputs * memory;
        let mut delay = DMatrix::zeros(dim, dim);
        let mut injection = DMatrix::zeros(dim, n_inputs);
        for c in 0..n_inputs {
            let base = c * memory;
            injection[(base, c)] = 1.0;
            for j in 1..memory {
                delay[(base + j, base + j - 1)] = 1.0;
            }
        }
        Ok(Self {
            n_inputs,
            memory,
            delay,
            injection,
        })
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn regressor_len(&self) -> usize {
        self.n_inputs * self.memory
    }

    pub fn delay(&self) -> &DMatrix<f64> {
        &self.delay
    }

    pub fn injection(&self) -> &DMatrix<f64> {
        &self.injection
    }

    /// `WΦ + Zu`.
    pub fn shift(&self, regressor: &Regressor, input: &DVector<f64>) -> Result<Regressor> {
        check_dim("shifted regressor", self.regressor_len(), regressor.len())?;
        check_dim("shift input", self.n_inputs, input.len())?;
        let mut next = DVector::zeros(regressor.len());
        for c in 0..self.n_inputs {
            let base = c * self.memory;
            next[base] = input[c];
            for j in 1..self.memory {
                next[base + j] = regressor[base + j - 1];
            }
        }
        Ok(next)
    }

    /// Fixed point `(I − W)⁻¹Zu` of the shift under constant input `u`.
    pub fn steady_state(&self, input: &DVector<f64>) -> Result<Regressor> {
        check_dim("steady-state input", self.n_inputs, input.len())?;
        Ok(DVector::from_fn(self.regressor_len(), |i, _| input[i / self.memory]))
    }
}

/// Disturbance family. Only the symmetric uniform law is instantiated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Distribution {
    UniformSymmetric,
}

#[derive(Clone, Debug)]
pub struct DisturbanceModel {
    bounds: DVector<f64>,
    distribution: Distribution,
}

impl DisturbanceModel {
    pub fn uniform(bounds: DVector<f64>) -> Result<Self> {
        if bounds.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(Error::InvalidArgument(
                "disturbance bounds must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            bounds,
            distribution: Distribution::UniformSymmetric,
        })
    }

    pub fn bounds(&self) -> &DVector<f64> {
        &self.bounds
    }

    pub fn distribution(&self) -> Distribution {
        self.distribution
    }

    /// Analytic covariance; `w̄²/3` per component for the uniform law.
    pub fn variance(&self) -> DMatrix<f64> {
        match self.distribution {
            Distribution::UniformSymmetric => {
                DMatrix::from_diagonal(&self.bounds.map(|b| b * b / 3.0))
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        self.bounds.map(|b| {
            if b == 0.0 {
                0.0
            } else {
                rng.random_range(-b..=b)
            }
        })
    }
}

/// Independent, reproducible generator for `(seed, stream)`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
