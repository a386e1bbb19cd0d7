//! Flat-torus geometry on `T^d = R^d / Z^d` for `d` in {1, 2}.
//!
//! Points are stored reduced into the unit cube; tangent vectors and covectors
//! are unconstrained. Curves on the torus are handled through lifts to the
//! universal cover, indexed by an integer winding vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported torus dimension.
pub const MAX_DIM: usize = 2;

fn check_dim(d: usize) -> Result<()> {
    if d == 0 || d > MAX_DIM {
        return Err(Error::InvalidInput(format!(
            "torus dimension must be 1 or 2, got {d}"
        )));
    }
    Ok(())
}

/// Reduce a single coordinate into `[0, 1)`.
#[inline]
pub fn wrap_coord(c: f64) -> f64 {
    let r = c - c.floor();
    // c = -1e-17 gives r = 1.0 after rounding
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// A point on the flat torus; every coordinate lies in `[0, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint(Vec<f64>);

impl TorusPoint {
    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Build a point without wrapping. Panics in debug builds if a
    /// coordinate lies outside `[0, 1)`.
    pub(crate) fn from_wrapped(coords: Vec<f64>) -> Self {
        debug_assert!(coords.iter().all(|c| (0.0..1.0).contains(c)));
        TorusPoint(coords)
    }

    /// Convenience constructor for the circle.
    pub fn on_circle(x: f64) -> Result<Self> {
        wrap(&[x])
    }
}

/// A velocity in the tangent space (components are unbounded).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangentVec(pub Vec<f64>);

/// A momentum in the cotangent space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Covec(pub Vec<f64>);

impl TangentVec {
    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

impl Covec {
    pub fn components(&self) -> &[f64] {
        &self.0
    }
}

/// Reduce raw coordinates mod 1 into a [`TorusPoint`].
pub fn wrap(raw: &[f64]) -> Result<TorusPoint> {
    check_dim(raw.len())?;
    if raw.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "non-finite coordinate in {raw:?}"
        )));
    }
    Ok(TorusPoint(raw.iter().map(|&c| wrap_coord(c)).collect()))
}

/// `(y + winding) - x` in the universal cover.
pub fn displacement(x: &TorusPoint, y: &TorusPoint, winding: &[i32]) -> TangentVec {
    debug_assert_eq!(x.dim(), y.dim());
    debug_assert_eq!(x.dim(), winding.len());
    TangentVec(
        x.0.iter()
            .zip(&y.0)
            .zip(winding)
            .map(|((a, b), &k)| b + k as f64 - a)
            .collect(),
    )
}

/// Flat distance: the shortest lift, taken per axis.
pub fn distance(x: &TorusPoint, y: &TorusPoint) -> f64 {
    x.0.iter()
        .zip(&y.0)
        .map(|(a, b)| {
            let d = (a - b).abs();
            let d = d.min(1.0 - d);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Signed per-axis shortest displacement from `x` to `y`, each component in `[-1/2, 1/2]`.
pub fn shortest_displacement(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let d = b - a;
            d - d.round()
        })
        .collect()
}

/// All winding vectors in `[-range, range]^d`, in lexicographic order.
pub fn windings(dim: usize, range: u32) -> Vec<Vec<i32>> {
    let r = range as i32;
    let mut out: Vec<Vec<i32>> = vec![vec![]];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (-r..=r).map(move |k| {
                    let mut w = prefix.clone();
                    w.push(k);
                    w
                })
            })
            .collect();
    }
    out
}

/// Uniform grid with `n_per_axis` nodes per axis at coordinates `i / n_per_axis`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    n_per_axis: usize,
    dim: usize,
}

impl GridSpec {
    pub fn new(n_per_axis: usize, dim: usize) -> Result<Self> {
        check_dim(dim)?;
        if n_per_axis < 2 {
            return Err(Error::InvalidInput(format!(
                "grid needs at least 2 nodes per axis, got {n_per_axis}"
            )));
        }
        Ok(GridSpec { n_per_axis, dim })
    }

    pub fn n_per_axis(&self) -> usize {
        self.n_per_axis
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n_per_axis as f64
    }

    pub fn len(&self) -> usize {
        self.n_per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Per-axis integer index of a node; axis 0 varies slowest.
    pub fn multi_index(&self, node: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim];
        let mut rem = node;
        for a in (0..self.dim).rev() {
            idx[a] = rem % self.n_per_axis;
            rem /= self.n_per_axis;
        }
        idx
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .fold(0, |acc, &i| acc * self.n_per_axis + i % self.n_per_axis)
    }

    pub fn node(&self, node: usize) -> TorusPoint {
        let h = self.spacing();
        TorusPoint::from_wrapped(
            self.multi_index(node)
                .into_iter()
                .map(|i| i as f64 * h)
                .collect(),
        )
    }

    pub fn nodes(&self) -> Vec<TorusPoint> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    /// Neighbor of `node` shifted by `step` (±1) along `axis`, periodically.
    pub fn neighbor(&self, node: usize, axis: usize, step: isize) -> usize {
        let mut idx = self.multi_index(node);
        let n = self.n_per_axis as isize;
        idx[axis] = ((idx[axis] as isize + step).rem_euclid(n)) as usize;
        self.flat_index(&idx)
    }

    /// Index of the grid node nearest to `p` (ties round half up).
    pub fn nearest_node(&self, p: &TorusPoint) -> usize {
        let n = self.n_per_axis as f64;
        let idx: Vec<usize> = p
            .coords()
            .iter()
            .map(|c| ((c * n).round() as usize) % self.n_per_axis)
            .collect();
        self.flat_index(&idx)
    }
}
