//! Probability simplex geometry: validated simplex vectors, Euclidean
//! projections (plain and interior-floored), and seeded uniform sampling.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{seeded_rng, streams};

/// Tolerance on |sum - 1| maintained by every constructor.
pub const SIMPLEX_SUM_TOL: f64 = 1e-12;

/// Neumaier compensated summation, so the normalization and the invariant
/// check stay accurate for vectors with thousands of entries.
fn compensated_sum(xs: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// A probability distribution: nonnegative entries summing to one within
/// [`SIMPLEX_SUM_TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexVec {
    weights: Vec<f64>,
}

impl SimplexVec {
    /// Builds a distribution from nonnegative weights, normalizing by their
    /// total mass. Rejects empty, non-finite, negative, and zero-mass input.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Domain("simplex vector needs at least one entry".into()));
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(Error::Domain(format!("weight {i} is not finite: {w}")));
            }
            if w < 0.0 {
                return Err(Error::Domain(format!("weight {i} is negative: {w}")));
            }
        }
        let total = compensated_sum(&weights);
        if total <= 0.0 {
            return Err(Error::Domain("weights have zero total mass".into()));
        }
        let weights = weights.iter().map(|w| w / total).collect::<Vec<_>>();
        Ok(SimplexVec { weights })
    }

    /// The uniform distribution over `n` outcomes.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("uniform distribution needs n >= 1".into()));
        }
        Ok(SimplexVec {
            weights: vec![1.0 / n as f64; n],
        })
    }

    /// Wraps the output of a projection, which already sums to the target
    /// mass up to rounding; renormalizes to keep the invariant tight.
    pub(crate) fn from_projection(weights: Vec<f64>) -> Self {
        debug_assert!(!weights.is_empty());
        debug_assert!(weights.iter().all(|w| *w >= 0.0));
        let total = compensated_sum(&weights);
        debug_assert!((total - 1.0).abs() < 1e-9, "projection mass drifted: {total}");
        let weights = weights.iter().map(|w| w / total).collect::<Vec<_>>();
        SimplexVec { weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    /// Euclidean distance to another distribution of the same dimension.
    pub fn l2_distance(&self, other: &SimplexVec) -> f64 {
        assert_eq!(self.len(), other.len(), "l2_distance length mismatch");
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl std::ops::Deref for SimplexVec {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.weights
    }
}

/// A lower bound `delta` kept on every simplex coordinate by the interior
/// projection, so that boundary-singular regularizers stay differentiable
/// along the solve path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteriorFloor {
    delta: f64,
}

impl InteriorFloor {
    pub const ZERO: InteriorFloor = InteriorFloor { delta: 0.0 };

    pub fn new(delta: f64) -> Result<Self> {
        if !delta.is_finite() || delta < 0.0 || delta >= 1.0 {
            return Err(Error::Config(format!(
                "interior floor must satisfy 0 <= delta < 1, got {delta}"
            )));
        }
        Ok(InteriorFloor { delta })
    }

    pub fn delta(self) -> f64 {
        self.delta
    }

    /// The floored simplex `{p : p_a >= delta}` is nonempty only while
    /// `n * delta < 1`.
    pub fn check_dim(self, n: usize) -> Result<()> {
        if self.delta * n as f64 >= 1.0 {
            return Err(Error::Config(format!(
                "interior floor delta = {} leaves no feasible point in dimension {n}",
                self.delta
            )));
        }
        Ok(())
    }
}

fn check_finite_nonempty(x: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::Domain("projection input needs at least one entry".into()));
    }
    for (i, &v) in x.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::Domain(format!("entry {i} is not finite: {v}")));
        }
    }
    Ok(())
}

/// Projection of `x` onto the scaled simplex `{p >= 0, sum p = mass}` by the
/// sort-and-threshold rule: with entries sorted descending, the threshold is
/// `theta = (sum_{i<=rho} u_i - mass) / rho` for the largest feasible prefix
/// `rho`, and the projection is `(x - theta)_+`.
fn project_scaled(x: &[f64], mass: f64) -> Vec<f64> {
    let mut u = x.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).expect("non-finite entry in projection"));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumulative += uj;
        let t = (cumulative - mass) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    x.iter().map(|&xi| (xi - theta).max(0.0)).collect()
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(x: &[f64]) -> Result<SimplexVec> {
    check_finite_nonempty(x)?;
    Ok(SimplexVec::from_projection(project_scaled(x, 1.0)))
}

/// Euclidean projection onto `{p in simplex : p_a >= delta for all a}`.
///
/// Shifting by `delta`, projecting onto the simplex of mass `1 - n*delta`,
/// and shifting back is exact: the feasible set is an offset of the scaled
/// simplex and Euclidean projection commutes with translation.
pub fn project_interior(x: &[f64], floor: InteriorFloor) -> Result<SimplexVec> {
    check_finite_nonempty(x)?;
    floor.check_dim(x.len())?;
    let delta = floor.delta();
    if delta == 0.0 {
        return project_simplex(x);
    }
    let n = x.len() as f64;
    let shifted: Vec<f64> = x.iter().map(|&xi| xi - delta).collect();
    let mut projected = project_scaled(&shifted, 1.0 - n * delta);
    for p in &mut projected {
        *p += delta;
    }
    Ok(SimplexVec::from_projection(projected))
}

/// Draws a uniform sample from the simplex using the current state of `rng`
/// (normalized i.i.d. exponentials).
pub fn sample_simplex<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Result<SimplexVec> {
    if n == 0 {
        return Err(Error::Domain("simplex sample needs n >= 1".into()));
    }
    if n == 1 {
        return SimplexVec::new(vec![1.0]);
    }
    let draws: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            -(1.0 - u).ln()
        })
        .collect();
    if compensated_sum(&draws) <= 0.0 {
        return SimplexVec::uniform(n);
    }
    SimplexVec::new(draws)
}

/// Deterministic uniform sample from the simplex for a given seed.
pub fn random_simplex(n: usize, seed: u64) -> Result<SimplexVec> {
    sample_simplex(&mut seeded_rng(seed, streams::DEFAULT), n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force projection oracle on the 2-simplex: scan p = [t, 1-t]
    /// over a grid and keep the closest feasible point.
    fn grid_project_2d(x: &[f64; 2], delta: f64) -> [f64; 2] {
        let steps = 200_000usize;
        let lo = delta;
        let hi = 1.0 - delta;
        let mut best = [0.5, 0.5];
        let mut best_d = f64::INFINITY;
        for k in 0..=steps {
            let t = lo + (hi - lo) * k as f64 / steps as f64;
            let d = (t - x[0]).powi(2) + ((1.0 - t) - x[1]).powi(2);
            if d < best_d {
                best_d = d;
                best = [t, 1.0 - t];
            }
        }
        best
    }

    #[test]
    fn projects_points_already_on_simplex_to_themselves() {
        let p = project_simplex(&[0.2, 0.3, 0.5]).unwrap();
        for (a, b) in p.iter().zip([0.2, 0.3, 0.5]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn projection_matches_grid_oracle_on_triangle() {
        let cases: [[f64; 2]; 5] = [
            [2.0, -1.0],
            [0.3, 0.3],
            [-0.5, -0.75],
            [1.0, 1.0],
            [0.9, 0.2],
        ];
        for x in cases {
            let p = project_simplex(&x).unwrap();
            let oracle = grid_project_2d(&x, 0.0);
            for (a, b) in p.iter().zip(oracle) {
                assert!((a - b).abs() <= 2e-5, "projection {p:?} vs oracle {oracle:?}");
            }
        }
    }

    #[test]
    fn projection_clamps_exterior_point_to_vertex() {
        let p = project_simplex(&[2.0, -1.0]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1].abs() < 1e-12);
    }

    #[test]
    fn interior_projection_respects_floor() {
        let floor = InteriorFloor::new(0.1).unwrap();
        let p = project_interior(&[1.0, 0.0], floor).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-12 && (p[1] - 0.1).abs() < 1e-12);

        let oracle = grid_project_2d(&[1.0, 0.0], 0.1);
        for (a, b) in p.iter().zip(oracle) {
            assert!((a - b).abs() <= 2e-5);
        }
    }

    #[test]
    fn interior_projection_matches_plain_projection_for_interior_result() {
        let floor = InteriorFloor::new(1e-9).unwrap();
        let x = [0.4, 0.1, 0.2];
        let a = project_interior(&x, floor).unwrap();
        let b = project_simplex(&x).unwrap();
        for (u, v) in a.iter().zip(b.iter()) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn infeasible_floor_is_a_config_error() {
        let floor = InteriorFloor::new(0.4).unwrap();
        assert!(matches!(
            project_interior(&[0.2, 0.3, 0.5], floor),
            Err(crate::Error::Config(_))
        ));
    }

    #[test]
    fn constructor_normalizes_and_validates() {
        let p = SimplexVec::new(vec![2.0, 6.0]).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
        assert!(SimplexVec::new(vec![]).is_err());
        assert!(SimplexVec::new(vec![1.0, -0.1]).is_err());
        assert!(SimplexVec::new(vec![0.0, 0.0]).is_err());
        assert!(SimplexVec::new(vec![f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn random_simplex_is_deterministic_per_seed() {
        let a = random_simplex(5, 42).unwrap();
        let b = random_simplex(5, 42).unwrap();
        let c = random_simplex(5, 43).unwrap();
        assert_eq!(a.weights(), b.weights());
        assert_ne!(a.weights(), c.weights());
    }

    #[test]
    fn random_simplex_handles_dimension_one_and_rejects_zero() {
        assert_eq!(random_simplex(1, 0).unwrap().weights(), &[1.0]);
        assert!(random_simplex(0, 0).is_err());
    }

    #[test]
    fn random_simplex_first_coordinate_is_unbiased() {
        let mut rng = seeded_rng(9, streams::DEFAULT);
        let trials = 100_000;
        let mut mean = 0.0;
        for _ in 0..trials {
            mean += sample_simplex(&mut rng, 2).unwrap()[0];
        }
        mean /= trials as f64;
        assert!(
            (mean - 0.5).abs() < 0.01,
            "first-coordinate mean {mean} drifted from 0.5"
        );
    }

    proptest! {
        #[test]
        fn projection_lands_on_simplex(x in proptest::collection::vec(-10.0f64..10.0, 1..12)) {
            let p = project_simplex(&x).unwrap();
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() <= SIMPLEX_SUM_TOL);
            prop_assert!(p.iter().all(|v| *v >= 0.0));
        }

        #[test]
        fn projection_is_idempotent(x in proptest::collection::vec(-10.0f64..10.0, 1..12)) {
            let p = project_simplex(&x).unwrap();
            let q = project_simplex(p.weights()).unwrap();
            for (a, b) in p.iter().zip(q.iter()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn projection_is_nonexpansive(
            x in proptest::collection::vec(-10.0f64..10.0, 2..8),
            shift in proptest::collection::vec(-1.0f64..1.0, 2..8)
        ) {
            let n = x.len().min(shift.len());
            let x = &x[..n];
            let y: Vec<f64> = x.iter().zip(&shift[..n]).map(|(a, s)| a + s).collect();
            let px = project_simplex(x).unwrap();
            let py = project_simplex(&y).unwrap();
            let din: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let dout = px.l2_distance(&py);
            prop_assert!(dout <= din + 1e-12);
        }

        #[test]
        fn interior_projection_keeps_floor(
            x in proptest::collection::vec(-5.0f64..5.0, 2..8),
            delta in 0.0f64..0.05
        ) {
            let floor = InteriorFloor::new(delta).unwrap();
            let p = project_interior(&x, floor).unwrap();
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() <= SIMPLEX_SUM_TOL);
            prop_assert!(p.iter().all(|v| *v >= delta - 1e-15));
        }
    }
}
