//! Ground-truth solutions used to check the trainer.
//!
//! The quadratic KKT solver and the grid search evaluate the landscape from the
//! spec fields directly and share no code with the model or trainer.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::models::QuadraticRDSpec;

/// Constrained optimum `min R s.t. D <= c_D`.
///
/// `lambda` uses the normalized convention `R + λ (D / c_D - 1)`, so the
/// stationarity condition reads `∇R + (λ / c_D) ∇D = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct KktSolution {
    pub theta: Vec<f64>,
    pub lambda: f64,
    pub rate: f64,
    pub distortion: f64,
    pub active: bool,
}

fn q_rate(spec: &QuadraticRDSpec, theta: &[f64]) -> f64 {
    (0..theta.len())
        .map(|i| spec.rate_curvature[i] * (theta[i] - spec.rate_center[i]).powi(2))
        .sum()
}

fn q_dist(spec: &QuadraticRDSpec, theta: &[f64]) -> f64 {
    spec.dist_floor
        + (0..theta.len())
            .map(|i| spec.dist_curvature[i] * (theta[i] - spec.dist_center[i]).powi(2))
            .sum::<f64>()
}

/// Minimizer of `R + ν D`, separable in each coordinate.
fn theta_at(spec: &QuadraticRDSpec, nu: f64) -> Vec<f64> {
    (0..spec.dim())
        .map(|i| {
            let (a, r) = (spec.rate_curvature[i], spec.rate_center[i]);
            let (b, d) = (spec.dist_curvature[i], spec.dist_center[i]);
            (a * r + nu * b * d) / (a + nu * b)
        })
        .collect()
}

/// `∇R + (λ / c_D) ∇D` at a solution.
pub fn kkt_stationarity_residual(spec: &QuadraticRDSpec, sol: &KktSolution, target: f64) -> f64 {
    if !sol.active {
        return (0..spec.dim())
            .map(|i| (2.0 * spec.rate_curvature[i] * (sol.theta[i] - spec.rate_center[i])).abs())
            .fold(0.0, f64::max);
    }
    let nu = sol.lambda / target;
    (0..spec.dim())
        .map(|i| {
            let gr = 2.0 * spec.rate_curvature[i] * (sol.theta[i] - spec.rate_center[i]);
            let gd = 2.0 * spec.dist_curvature[i] * (sol.theta[i] - spec.dist_center[i]);
            (gr + nu * gd).abs()
        })
        .fold(0.0, f64::max)
}

/// Closed-form KKT solve by bisection on `ν = λ / c_D`.
///
/// When `c_D` equals the distortion floor exactly, the optimum is the distortion
/// minimizer and the multiplier is unbounded; it is reported as `+inf`.
pub fn solve_quadratic_kkt(spec: &QuadraticRDSpec, target: f64) -> Result<KktSolution> {
    spec.validate()?;
    if !(target >= 0.0 && target.is_finite()) {
        return Err(Error::invalid("target", format!("must be >= 0, got {target}")));
    }
    if target < spec.dist_floor {
        return Err(Error::Infeasible(format!(
            "target {target} is below the distortion floor {}",
            spec.dist_floor
        )));
    }
    let unconstrained = spec.rate_center.clone();
    let d0 = q_dist(spec, &unconstrained);
    if d0 <= target {
        return Ok(KktSolution {
            rate: 0.0,
            distortion: d0,
            theta: unconstrained,
            lambda: 0.0,
            active: false,
        });
    }
    if target == spec.dist_floor {
        let theta = spec.dist_center.clone();
        return Ok(KktSolution {
            rate: q_rate(spec, &theta),
            distortion: q_dist(spec, &theta),
            theta,
            lambda: f64::INFINITY,
            active: true,
        });
    }

    // D(θ(ν)) decreases strictly from d0 towards the floor as ν grows.
    let mut hi = 1.0;
    while q_dist(spec, &theta_at(spec, hi)) > target {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Infeasible("multiplier bracket overflowed".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let d = q_dist(spec, &theta_at(spec, mid));
        if d > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // `hi` is always feasible.
    let nu = hi;
    let theta = theta_at(spec, nu);
    Ok(KktSolution {
        rate: q_rate(spec, &theta),
        distortion: q_dist(spec, &theta),
        theta,
        lambda: nu * target,
        active: true,
    })
}

/// Minimizer of `D + β R` on a quadratic spec.
pub fn beta_optimum(spec: &QuadraticRDSpec, beta: f64) -> Result<(Vec<f64>, f64, f64)> {
    spec.validate()?;
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::invalid("beta", format!("must be > 0, got {beta}")));
    }
    let theta = theta_at(spec, 1.0 / beta);
    let (r, d) = (q_rate(spec, &theta), q_dist(spec, &theta));
    Ok((theta, r, d))
}

/// The Gaussian rate-distortion function `max(0, ½ log2(σ² / D))`, in bits.
pub fn shannon_rd_gaussian(variance: f64, distortion: f64) -> Result<f64> {
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::invalid("variance", format!("must be > 0, got {variance}")));
    }
    if !(distortion > 0.0) {
        return Err(Error::invalid("distortion", format!("must be > 0, got {distortion}")));
    }
    Ok((0.5 * (variance / distortion).log2()).max(0.0))
}

/// A low-dimensional constrained problem for grid search.
pub struct GridProblem<'a> {
    pub rate: Box<dyn Fn(&[f64]) -> f64 + Sync + 'a>,
    pub distortion: Box<dyn Fn(&[f64]) -> f64 + Sync + 'a>,
    /// Search box per coordinate.
    pub bounds: Vec<(f64, f64)>,
}

impl<'a> GridProblem<'a> {
    /// Box spanning the rate and distortion centers, where the optimum lies.
    pub fn from_quadratic(spec: &'a QuadraticRDSpec) -> Self {
        let bounds = (0..spec.dim())
            .map(|i| {
                let (r, d) = (spec.rate_center[i], spec.dist_center[i]);
                let pad = 0.05 * (r - d).abs() + 0.1;
                (r.min(d) - pad, r.max(d) + pad)
            })
            .collect();
        Self {
            rate: Box::new(move |t| q_rate(spec, t)),
            distortion: Box::new(move |t| q_dist(spec, t)),
            bounds,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSolution {
    pub theta: Vec<f64>,
    pub rate: f64,
    pub distortion: f64,
    /// Final grid spacing per coordinate.
    pub cell: Vec<f64>,
}

const GRID_POINTS: usize = 101;
const MAX_LEVELS: usize = 80;

/// Minimum rate over grid points with `D <= target`.
///
/// Each level scans a regular grid, then shrinks the box to the feasible
/// points whose rate is within a few cells' worth of rate change of the best
/// one, which keeps every region that may still hold the optimum. Refinement
/// stops once the spacing is at most `resolution` and the best rate changed by
/// less than `resolution / 100` relative over each of the last two levels.
pub fn brute_force_min(problem: &GridProblem<'_>, target: f64, resolution: f64) -> Result<GridSolution> {
    let dim = problem.bounds.len();
    if dim == 0 || dim > 2 {
        return Err(Error::invalid("dimension", format!("grid search supports 1 or 2, got {dim}")));
    }
    if !(resolution > 0.0) {
        return Err(Error::invalid("resolution", "must be > 0"));
    }
    let mut bounds = problem.bounds.clone();
    let mut previous: Option<f64> = None;
    let mut settled_levels = 0;
    for _ in 0..MAX_LEVELS {
        let cell: Vec<f64> = bounds
            .iter()
            .map(|(lo, hi)| (hi - lo) / (GRID_POINTS - 1) as f64)
            .collect();
        let mut feasible: Vec<(f64, Vec<f64>, f64)> = Vec::new();
        let mut point = vec![0.0; dim];
        for flat in 0..GRID_POINTS.pow(dim as u32) {
            let mut k = flat;
            for j in 0..dim {
                point[j] = bounds[j].0 + (k % GRID_POINTS) as f64 * cell[j];
                k /= GRID_POINTS;
            }
            let d = (problem.distortion)(&point);
            if d <= target {
                feasible.push(((problem.rate)(&point), point.clone(), d));
            }
        }
        let (rate, theta, distortion) = feasible
            .iter()
            .min_by(|x, y| x.0.total_cmp(&y.0))
            .cloned()
            .ok_or_else(|| Error::Infeasible(format!("no grid point satisfies D <= {target}")))?;

        if previous.is_some_and(|p| (p - rate).abs() <= 0.01 * resolution * rate.abs().max(1e-300)) {
            settled_levels += 1;
        } else {
            settled_levels = 0;
        }
        let fine = cell.iter().all(|c| *c <= resolution);
        let exhausted = cell.iter().all(|c| *c <= 1e-13);
        if (fine && settled_levels >= 2) || exhausted {
            return Ok(GridSolution {
                theta,
                rate,
                distortion,
                cell,
            });
        }
        previous = Some(rate);

        // Rate change across a few cells at the incumbent bounds how much
        // better any unresolved neighbour can be.
        let mut margin = 0.0;
        for j in 0..dim {
            let mut probe = theta.clone();
            probe[j] += cell[j];
            let up = (problem.rate)(&probe);
            probe[j] -= 2.0 * cell[j];
            let down = (problem.rate)(&probe);
            margin += (up - rate).abs().max((down - rate).abs());
        }
        let margin = 3.0 * margin;
        let mut next: Vec<(f64, f64)> = theta.iter().map(|t| (*t, *t)).collect();
        for (r, p, _) in &feasible {
            if *r <= rate + margin {
                for j in 0..dim {
                    next[j].0 = next[j].0.min(p[j]);
                    next[j].1 = next[j].1.max(p[j]);
                }
            }
        }
        for j in 0..dim {
            let (lo0, hi0) = problem.bounds[j];
            // One extra cell each side plus a non-integer pad so successive
            // grids do not share points.
            let pad = 1.37 * cell[j];
            let (mut lo, mut hi) = ((next[j].0 - pad).max(lo0), (next[j].1 + pad).min(hi0));
            // Shrink by at least a factor of two per level.
            let max_half = 0.25 * (bounds[j].1 - bounds[j].0);
            if hi - lo > 2.0 * max_half {
                lo = (theta[j] - max_half).max(lo0);
                hi = (theta[j] + max_half).min(hi0);
            }
            bounds[j] = (lo, hi);
        }
    }
    Err(Error::Infeasible("grid refinement did not settle".into()))
}

/// Multiplier estimate `λ ≈ -c_D dR*/dc_D` from central differences of the
/// grid-traced frontier at `c_D (1 ± rel_step)`.
pub fn frontier_slope_lambda(
    problem: &GridProblem<'_>,
    target: f64,
    rel_step: f64,
    resolution: f64,
) -> Result<f64> {
    let h = target * rel_step;
    let hi = brute_force_min(problem, target + h, resolution)?;
    let lo = brute_force_min(problem, target - h, resolution)?;
    Ok(-target * (hi.rate - lo.rate) / (2.0 * h))
}

/// `dD/dR` along the frontier at distortion `target`, from the KKT oracle.
pub fn frontier_dd_dr(spec: &QuadraticRDSpec, target: f64, rel_step: f64) -> Result<f64> {
    let h = target * rel_step;
    let hi = solve_quadratic_kkt(spec, target + h)?;
    let lo = solve_quadratic_kkt(spec, target - h)?;
    Ok((hi.distortion - lo.distortion) / (hi.rate - lo.rate))
}

pub const ORACLE_CSV_HEADER: &str = "target,rate,distortion,lambda,active,shannon_rate";

/// KKT frontier of a quadratic spec at each target, with the Gaussian bound
/// for `variance` alongside.
pub fn oracle_frontier_csv(spec: &QuadraticRDSpec, targets: &[f64], variance: f64) -> Result<String> {
    let mut out = format!("{ORACLE_CSV_HEADER}\n");
    for &c in targets {
        let s = solve_quadratic_kkt(spec, c)?;
        let shannon = shannon_rd_gaussian(variance, c.max(f64::MIN_POSITIVE))?;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            c, s.rate, s.distortion, s.lambda, s.active, shannon
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::SeededRng;
    use proptest::prelude::*;

    fn hand() -> QuadraticRDSpec {
        QuadraticRDSpec::new(vec![0.0], vec![1.0], vec![2.0], vec![1.0]).unwrap()
    }

    pub(crate) fn random_spec(rng: &mut SeededRng, dim: usize) -> QuadraticRDSpec {
        let mut v = |lo: f64, hi: f64| (0..dim).map(|_| rng.uniform_range(lo, hi)).collect::<Vec<_>>();
        let r = v(-2.0, 2.0);
        let a = v(0.5, 2.0);
        let d = v(-2.0, 2.0);
        let b = v(0.5, 2.0);
        QuadraticRDSpec::new(r, a, d, b).unwrap()
    }

    #[test]
    fn hand_example_active() {
        let s = solve_quadratic_kkt(&hand(), 1.0).unwrap();
        assert!(s.active);
        assert!((s.theta[0] - 1.0).abs() < 1e-10);
        assert!((s.rate - 1.0).abs() < 1e-10);
        assert!((s.distortion - 1.0).abs() <= 1e-12);
        assert!((s.lambda - 1.0).abs() < 1e-10);
    }

    #[test]
    fn inactive_constraint() {
        let s = solve_quadratic_kkt(&hand(), 5.0).unwrap();
        assert!(!s.active);
        assert_eq!(s.lambda, 0.0);
        assert_eq!(s.theta, vec![0.0]);
        assert_eq!(s.rate, 0.0);
    }

    #[test]
    fn boundary_target_at_floor() {
        let s = solve_quadratic_kkt(&hand(), 0.0).unwrap();
        assert!(s.active);
        assert_eq!(s.theta, vec![2.0]);
        assert_eq!(s.rate, 4.0);
        assert_eq!(s.distortion, 0.0);
    }

    #[test]
    fn infeasible_below_floor() {
        let spec = hand().with_floor(0.5).unwrap();
        assert!(matches!(solve_quadratic_kkt(&spec, 0.4), Err(Error::Infeasible(_))));
        let p = GridProblem::from_quadratic(&spec);
        assert!(matches!(brute_force_min(&p, 0.4, 1e-3), Err(Error::Infeasible(_))));
    }

    #[test]
    fn kkt_conditions_on_random_specs() {
        let mut rng = SeededRng::new(42);
        for _ in 0..200 {
            let dim = 1 + rng.index(5);
            let spec = random_spec(&mut rng, dim);
            let d0 = q_dist(&spec, &spec.rate_center);
            let c = d0 * rng.uniform_range(0.05, 1.2);
            let s = solve_quadratic_kkt(&spec, c).unwrap();
            assert!(kkt_stationarity_residual(&spec, &s, c) <= 1e-10);
            assert!((s.lambda * (s.distortion / c - 1.0)).abs() <= 1e-10);
            assert!(s.distortion <= c + 1e-12);
            if s.active {
                assert!((s.distortion - c).abs() <= 1e-12 * c.max(1.0));
            }
        }
    }

    #[test]
    fn grid_matches_closed_form_hand() {
        let spec = hand();
        let p = GridProblem::from_quadratic(&spec);
        let g = brute_force_min(&p, 1.0, 1e-4).unwrap();
        assert!((g.theta[0] - 1.0).abs() <= g.cell[0] + 1e-12);
        let lam = frontier_slope_lambda(&p, 1.0, 1e-2, 1e-6).unwrap();
        assert!((lam - 1.0).abs() < 0.05, "{lam}");
    }

    #[test]
    fn grid_agrees_with_kkt_on_random_specs() {
        let mut rng = SeededRng::new(7);
        for _ in 0..50 {
            let dim = 1 + rng.index(2);
            let spec = random_spec(&mut rng, dim);
            let d0 = q_dist(&spec, &spec.rate_center);
            let c = d0 * rng.uniform_range(0.05, 0.95);
            let exact = solve_quadratic_kkt(&spec, c).unwrap();
            let grid = brute_force_min(&GridProblem::from_quadratic(&spec), c, 1e-3).unwrap();
            let rel = (grid.rate - exact.rate).abs() / exact.rate.max(1e-12);
            assert!(rel <= 1e-3, "grid {} exact {}", grid.rate, exact.rate);
            assert!(grid.cell.iter().all(|c| *c <= 1e-3));
        }
    }

    #[test]
    fn shannon_examples() {
        assert_eq!(shannon_rd_gaussian(1.0, 1.0).unwrap(), 0.0);
        assert!((shannon_rd_gaussian(1.0, 0.25).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(shannon_rd_gaussian(1.0, 2.0).unwrap(), 0.0);
        assert!(shannon_rd_gaussian(1.0, 0.0).is_err());
    }

    #[test]
    fn beta_slope_identity() {
        let spec = QuadraticRDSpec::new(vec![0.0, 1.0], vec![1.0, 2.0], vec![2.0, -1.0], vec![1.0, 0.5]).unwrap();
        for beta in [0.2, 1.0, 5.0] {
            let (_, _, d) = beta_optimum(&spec, beta).unwrap();
            let slope = frontier_dd_dr(&spec, d, 1e-4).unwrap();
            assert!((slope + beta).abs() / beta < 1e-3, "beta {beta} slope {slope}");
        }
    }

    #[test]
    fn oracle_csv_schema() {
        let csv = oracle_frontier_csv(&hand(), &[0.5, 1.0, 5.0], 1.0).unwrap();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], ORACLE_CSV_HEADER);
        assert_eq!(lines.len(), 4);
        assert!(lines[3].contains(",false,"));
    }

    proptest! {
        #[test]
        fn optimum_rate_monotone_in_target(seed in 0u64..1000, f1 in 0.05f64..1.0, f2 in 0.05f64..1.0) {
            let mut rng = SeededRng::new(seed);
            let spec = random_spec(&mut rng, 3);
            let d0 = q_dist(&spec, &spec.rate_center);
            let (lo, hi) = if f1 < f2 { (f1, f2) } else { (f2, f1) };
            let a = solve_quadratic_kkt(&spec, lo * d0).unwrap();
            let b = solve_quadratic_kkt(&spec, hi * d0).unwrap();
            prop_assert!(b.rate <= a.rate + 1e-12);
            prop_assert!(b.lambda / (hi * d0) <= a.lambda / (lo * d0) * (1.0 + 1e-9));
        }
    }
}
