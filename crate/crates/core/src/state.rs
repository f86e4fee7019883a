// SPDX-License-Identifier: Apache-2.0
use serde::Serialize;

use crate::chain::{C64, ZERO};
use crate::error::{Result, ScarError};
use crate::operator::{BasisTag, SparseOperator};

/// Complex amplitudes over an explicit basis.
#[derive(Clone, Debug, Serialize)]
pub struct StateVector {
    amplitudes: Vec<C64>,
    basis: BasisTag,
}

impl StateVector {
    pub fn new(basis: BasisTag, amplitudes: Vec<C64>) -> Self {
        Self { amplitudes, basis }
    }

    pub fn basis_state(basis: BasisTag, dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(ScarError::DimensionMismatch { expected: dim, got: index + 1 });
        }
        let mut amplitudes = vec![ZERO; dim];
        amplitudes[index] = C64::new(1.0, 0.0);
        Ok(Self { amplitudes, basis })
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub fn basis(&self) -> &BasisTag {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.amplitudes)
    }

    pub fn normalize(&mut self) -> Result<f64> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(ScarError::NotNormalized(n));
        }
        self.amplitudes.iter_mut().for_each(|a| *a /= n);
        Ok(n)
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    /// Error unless ‖v‖ is within `tol` of 1.
    pub fn require_normalized(&self, tol: f64) -> Result<()> {
        let n = self.norm();
        if (n - 1.0).abs() > tol {
            return Err(ScarError::NotNormalized(n));
        }
        Ok(())
    }

    fn conform(&self, basis: &BasisTag, dim: usize) -> Result<()> {
        if &self.basis != basis {
            return Err(ScarError::BasisMismatch { left: self.basis.to_string(), right: basis.to_string() });
        }
        if self.dim() != dim {
            return Err(ScarError::DimensionMismatch { expected: dim, got: self.dim() });
        }
        Ok(())
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        self.conform(&other.basis, other.dim())?;
        Ok(dot(&self.amplitudes, &other.amplitudes))
    }

    pub fn apply(&self, op: &SparseOperator) -> Result<StateVector> {
        self.conform(op.basis(), op.dim())?;
        Ok(StateVector { amplitudes: op.matvec(&self.amplitudes)?, basis: self.basis.clone() })
    }

    pub fn expectation(&self, op: &SparseOperator) -> Result<C64> {
        self.conform(op.basis(), op.dim())?;
        op.expectation(&self.amplitudes)
    }
}

/// ⟨x|y⟩.
#[inline]
pub fn dot(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

#[inline]
pub fn norm(x: &[C64]) -> f64 {
    x.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}
