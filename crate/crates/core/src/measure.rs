//! Discrete probability measures on the torus.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{distance, GridSpec, TorusPoint};

/// Tolerance on the total mass of a probability measure.
pub const MASS_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    atoms: Vec<TorusPoint>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<TorusPoint>, weights: Vec<f64>) -> Result<Self> {
        Self::validate_shape(&atoms, &weights)?;
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidInput(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(DiscreteMeasure { atoms, weights })
    }

    /// Rescale non-negative weights to unit mass.
    pub fn normalized(atoms: Vec<TorusPoint>, weights: Vec<f64>) -> Result<Self> {
        Self::validate_shape(&atoms, &weights)?;
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidInput("measure has zero total mass".into()));
        }
        let weights = weights.iter().map(|w| w / total).collect();
        Ok(DiscreteMeasure { atoms, weights })
    }

    fn validate_shape(atoms: &[TorusPoint], weights: &[f64]) -> Result<()> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(Error::InvalidInput(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        let d = atoms[0].dim();
        if atoms.iter().any(|a| a.dim() != d) {
            return Err(Error::InvalidInput("atoms of mixed dimension".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidInput("weights must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn dirac(p: TorusPoint) -> Self {
        DiscreteMeasure {
            atoms: vec![p],
            weights: vec![1.0],
        }
    }

    pub fn uniform(atoms: Vec<TorusPoint>) -> Result<Self> {
        let n = atoms.len();
        Self::normalized(atoms, vec![1.0; n])
    }

    /// Uniform measure on all nodes of a grid.
    pub fn uniform_on_grid(grid: &GridSpec) -> Self {
        Self::uniform(grid.nodes()).expect("grid is nonempty")
    }

    pub fn atoms(&self) -> &[TorusPoint] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].dim()
    }

    /// Merge atoms closer than `tol` (first occurrence keeps its position).
    pub fn merged(&self, tol: f64) -> Self {
        let mut atoms: Vec<TorusPoint> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for (a, &w) in self.atoms.iter().zip(&self.weights) {
            match atoms.iter().position(|b| distance(a, b) <= tol) {
                Some(i) => weights[i] += w,
                None => {
                    atoms.push(a.clone());
                    weights.push(w);
                }
            }
        }
        DiscreteMeasure { atoms, weights }
    }

    /// `∫ f dμ`.
    pub fn integrate(&self, f: impl Fn(&TorusPoint) -> f64) -> f64 {
        self.atoms.iter().zip(&self.weights).map(|(a, w)| w * f(a)).sum()
    }
}
