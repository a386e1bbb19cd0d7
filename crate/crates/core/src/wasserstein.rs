//! Wasserstein-1 distances between discrete measures.

use ndarray::Array2;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kantorovich::network_simplex;
use crate::manifold::distance;
use crate::measure::DiscreteMeasure;

/// Atom count above which measures are subsampled before the exact LP.
pub const MAX_LP_ATOMS: usize = 256;

/// W1 on the unit circle: `min_c ∫ |F_μ − F_ν − c|` over the fundamental
/// domain, `c` taken at a weighted median.
pub fn w1_circle(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    if mu.dim() != 1 || nu.dim() != 1 {
        return Err(Error::InvalidInput("circle W1 needs 1-D measures".into()));
    }
    let mut events: Vec<(f64, f64)> = mu
        .atoms()
        .iter()
        .zip(mu.weights())
        .map(|(a, &w)| (a.coords()[0], w))
        .chain(nu.atoms().iter().zip(nu.weights()).map(|(a, &w)| (a.coords()[0], -w)))
        .collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    // (length, F_μ − F_ν) on each gap; the wrap gap carries 0
    let mut pieces = Vec::with_capacity(events.len());
    let mut level = 0.0;
    for k in 0..events.len() {
        level += events[k].1;
        let next = if k + 1 < events.len() {
            events[k + 1].0
        } else {
            events[0].0 + 1.0
        };
        let len = next - events[k].0;
        let value = if k + 1 < events.len() { level } else { 0.0 };
        if len > 0.0 {
            pieces.push((len, value));
        }
    }
    let mut sorted = pieces.clone();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1));
    let total: f64 = sorted.iter().map(|p| p.0).sum();
    let mut acc = 0.0;
    let mut median = 0.0;
    for &(len, value) in &sorted {
        acc += len;
        median = value;
        if acc >= 0.5 * total {
            break;
        }
    }
    Ok(pieces.iter().map(|(len, v)| len * (v - median).abs()).sum())
}

/// Exact W1 for an arbitrary ground cost matrix.
pub fn w1_with_cost(a: &[f64], b: &[f64], cost: &Array2<f64>) -> Result<f64> {
    let flat: Vec<f64> = cost.iter().copied().collect();
    let sol = network_simplex::solve(&flat, a, b)?;
    Ok(sol.flow.iter().zip(&flat).map(|(f, c)| f * c).sum())
}

fn subsample(mu: &DiscreteMeasure, rng: &mut ChaCha8Rng) -> Result<DiscreteMeasure> {
    if mu.len() <= MAX_LP_ATOMS {
        return Ok(mu.clone());
    }
    let mut idx = sample(rng, mu.len(), MAX_LP_ATOMS).into_vec();
    idx.sort_unstable();
    DiscreteMeasure::normalized(
        idx.iter().map(|&i| mu.atoms()[i].clone()).collect(),
        idx.iter().map(|&i| mu.weights()[i]).collect(),
    )
}

/// W1 under the flat torus metric by exact LP, subsampling (seeded) above
/// [`MAX_LP_ATOMS`] atoms.
pub fn w1_lp(mu: &DiscreteMeasure, nu: &DiscreteMeasure, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mu, nu) = (subsample(mu, &mut rng)?, subsample(nu, &mut rng)?);
    let cost = Array2::from_shape_fn((mu.len(), nu.len()), |(i, j)| {
        distance(&mu.atoms()[i], &nu.atoms()[j])
    });
    w1_with_cost(mu.weights(), nu.weights(), &cost)
}

/// CDF matching on the circle, LP on the 2-torus.
pub fn w1(mu: &DiscreteMeasure, nu: &DiscreteMeasure, seed: u64) -> Result<f64> {
    if mu.dim() != nu.dim() {
        return Err(Error::InvalidInput("measures of different dimension".into()));
    }
    if mu.dim() == 1 {
        w1_circle(mu, nu)
    } else {
        w1_lp(mu, nu, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::TorusPoint;
    use proptest::prelude::*;

    fn circle_measure(xs: &[f64], ws: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::normalized(
            xs.iter().map(|&x| TorusPoint::on_circle(x).unwrap()).collect(),
            ws.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn dirac_distances() {
        let a = circle_measure(&[0.1], &[1.0]);
        let b = circle_measure(&[0.95], &[1.0]);
        assert!((w1_circle(&a, &b).unwrap() - 0.15).abs() < 1e-15);
        assert_eq!(w1_circle(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn uniform_shift() {
        let xs: Vec<f64> = (0..8).map(|k| k as f64 / 8.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x + 0.01).collect();
        let w = vec![1.0; 8];
        let d = w1_circle(&circle_measure(&xs, &w), &circle_measure(&ys, &w)).unwrap();
        assert!((d - 0.01).abs() < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn cdf_matching_agrees_with_lp(
            xs in prop::collection::vec(0.0f64..1.0, 1..12),
            ys in prop::collection::vec(0.0f64..1.0, 1..12),
            seed in 0u64..1000,
        ) {
            let wx: Vec<f64> = (0..xs.len()).map(|k| 1.0 + ((seed + k as u64) % 5) as f64).collect();
            let wy: Vec<f64> = (0..ys.len()).map(|k| 1.0 + ((seed * 3 + k as u64) % 7) as f64).collect();
            let (a, b) = (circle_measure(&xs, &wx), circle_measure(&ys, &wy));
            let cdf = w1_circle(&a, &b).unwrap();
            let lp = w1_lp(&a, &b, 0).unwrap();
            prop_assert!((cdf - lp).abs() < 1e-12, "{} vs {}", cdf, lp);
        }
    }

    #[test]
    fn torus_lp_and_subsampling() {
        let p = |x: f64, y: f64| crate::manifold::wrap(&[x, y]).unwrap();
        let a = DiscreteMeasure::dirac(p(0.1, 0.1));
        let b = DiscreteMeasure::dirac(p(0.9, 0.4));
        assert!((w1(&a, &b, 0).unwrap() - (0.04f64 + 0.09).sqrt()).abs() < 1e-15);

        let many: Vec<TorusPoint> = (0..400).map(|k| p(k as f64 / 400.0, 0.5)).collect();
        let mu = DiscreteMeasure::uniform(many).unwrap();
        let d1 = w1(&mu, &a, 7).unwrap();
        let d2 = w1(&mu, &a, 7).unwrap();
        assert_eq!(d1, d2);
    }
}
