//! Full-information equilibrium solvers used as ground truth.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Parallelism};
use crate::game::GameSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    ProjectedGradient,
    Extragradient,
}

#[derive(Debug, Clone, Serialize)]
pub struct NeSolution {
    pub x_star: Vec<f64>,
    /// Natural-map residual `max_i |x_i − T_i(x_i − F_i(x))|`.
    pub residual: f64,
    pub iterations: usize,
    pub method: SolveMethod,
    pub converged: bool,
    pub tolerance: f64,
}

/// Iterations without a 1% improvement of the best residual before the
/// solver switches to extragradient.
const STALL_WINDOW: usize = 2_000;
const MIN_STEP: f64 = 1e-14;

fn projected_step(game: &GameSpec, x: &[f64], f: &[f64], eta: f64) -> Vec<f64> {
    x.iter()
        .zip(f)
        .zip(game.intervals())
        .map(|((&xi, &fi), iv)| iv.project(xi - eta * fi))
        .collect()
}

fn pseudo_gradient(game: &GameSpec, x: &[f64], iteration: usize) -> Result<Vec<f64>> {
    let f = game.pseudo_gradient(x)?;
    if let Some(i) = f.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteGradient {
            player: i + 1,
            iteration: iteration as u64,
        });
    }
    Ok(f)
}

/// Simultaneous projected pseudo-gradient iteration from the interval
/// midpoints, halving the step whenever the residual fails to drop, with an
/// extragradient fallback on stall. On `max_iters` the best iterate is
/// returned with `converged = false`.
pub fn solve_ne(game: &GameSpec, tol: f64, max_iters: usize) -> Result<NeSolution> {
    if !(tol > 0.0) {
        return Err(Error::Input("tolerance must be positive".into()));
    }
    let min_width = game
        .intervals()
        .iter()
        .map(|iv| iv.width())
        .fold(f64::INFINITY, f64::min);
    let mut eta = if min_width > 0.0 {
        0.1 * min_width
    } else {
        0.1
    };
    let mut x = game.midpoint();
    let mut res = game.natural_residual(&x);
    let mut best = (x.clone(), res);
    let mut method = SolveMethod::ProjectedGradient;
    let mut last_progress = 0usize;
    let mut progress_mark = res;

    let mut it = 0;
    while it < max_iters && best.1 >= tol {
        it += 1;
        let f = pseudo_gradient(game, &x, it)?;
        let next = match method {
            SolveMethod::ProjectedGradient => projected_step(game, &x, &f, eta),
            SolveMethod::Extragradient => {
                let y = projected_step(game, &x, &f, eta);
                let fy = pseudo_gradient(game, &y, it)?;
                projected_step(game, &x, &fy, eta)
            }
        };
        let next_res = game.natural_residual(&next);
        if next_res >= res {
            eta = (eta * 0.5).max(MIN_STEP);
        }
        x = next;
        res = next_res;
        if res < best.1 {
            best = (x.clone(), res);
        }
        if best.1 < 0.99 * progress_mark {
            progress_mark = best.1;
            last_progress = it;
        } else if it - last_progress > STALL_WINDOW && method == SolveMethod::ProjectedGradient {
            method = SolveMethod::Extragradient;
            x = best.0.clone();
            res = best.1;
            last_progress = it;
        }
    }
    Ok(NeSolution {
        converged: best.1 < tol,
        x_star: best.0,
        residual: best.1,
        iterations: it,
        method,
        tolerance: tol,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BruteForceNe {
    /// `false` when no grid point is a mutual (within one step) best response.
    pub found: bool,
    pub x: Vec<f64>,
    pub grid_step: f64,
    pub points_per_player: usize,
    /// Largest distance, in grid steps, from an action to its grid best
    /// response (0 or 1 when found).
    pub max_gap_steps: usize,
}

/// Largest grid size accepted by [`brute_force_ne`].
pub const MAX_GRID_POINTS: f64 = 1e7;

/// Grid search for a point where every player's action is within one grid
/// step of its best response on the grid. Only for `n ≤ 3`.
pub fn brute_force_ne(game: &GameSpec, grid_step: f64, mode: Parallelism) -> Result<BruteForceNe> {
    let n = game.n();
    if n == 0 || n > 3 {
        return Err(Error::TooLarge(format!(
            "grid search needs 1 ≤ n ≤ 3, got {n}"
        )));
    }
    if !(grid_step > 0.0) {
        return Err(Error::Input("grid step must be positive".into()));
    }
    let grids: Vec<Vec<f64>> = game
        .intervals()
        .iter()
        .map(|iv| {
            let count = (iv.width() / grid_step + 1e-9).floor() as usize + 1;
            (0..count)
                .map(|k| (iv.lo + k as f64 * grid_step).min(iv.hi))
                .collect()
        })
        .collect();
    let total: f64 = grids.iter().map(|g| g.len() as f64).product();
    if total > MAX_GRID_POINTS {
        return Err(Error::TooLarge(format!(
            "{total:.0} grid points > {MAX_GRID_POINTS:.0}"
        )));
    }
    let sizes: Vec<usize> = grids.iter().map(Vec::len).collect();
    let total = total as usize;

    let decode = |mut flat: usize| -> Vec<usize> {
        let mut idx = vec![0; n];
        for p in (0..n).rev() {
            idx[p] = flat % sizes[p];
            flat /= sizes[p];
        }
        idx
    };
    let point =
        |idx: &[usize]| -> Vec<f64> { idx.iter().enumerate().map(|(p, &k)| grids[p][k]).collect() };

    // others index of a full grid index with player i removed
    let others = |i: usize, idx: &[usize]| -> usize {
        (0..n)
            .filter(|&p| p != i)
            .fold(0, |acc, p| acc * sizes[p] + idx[p])
    };
    // best[i][others] = grid best response of player i
    let mut best: Vec<Vec<usize>> = Vec::with_capacity(n);
    for i in 0..n {
        let count = total / sizes[i];
        let table = map_indexed(count, mode, |mut r| {
            let mut idx = vec![0; n];
            for p in (0..n).rev().filter(|&p| p != i) {
                idx[p] = r % sizes[p];
                r /= sizes[p];
            }
            let mut x = point(&idx);
            let mut arg = 0;
            let mut val = f64::INFINITY;
            for (k, &v) in grids[i].iter().enumerate() {
                x[i] = v;
                let c = game.cost_at(i, &x);
                if c < val {
                    val = c;
                    arg = k;
                }
            }
            arg
        });
        best.push(table);
    }

    let gaps = map_indexed(total, mode, |flat| {
        let idx = decode(flat);
        (0..n)
            .map(|i| idx[i].abs_diff(best[i][others(i, &idx)]))
            .max()
            .unwrap_or(0)
    });
    let (arg, &gap) = gaps
        .iter()
        .enumerate()
        .min_by_key(|&(k, g)| (*g, k))
        .expect("grid is nonempty");
    Ok(BruteForceNe {
        found: gap <= 1,
        x: point(&decode(arg)),
        grid_step,
        points_per_player: sizes.iter().copied().max().unwrap_or(0),
        max_gap_steps: gap,
    })
}

/// `max_i (J_i(x) − min_y J_i(y, x_{−i}))` with the minimum taken over
/// `points` evenly spaced deviations in player `i`'s interval. Zero (up to
/// the grid) at an equilibrium.
pub fn unilateral_gap(game: &GameSpec, x: &[f64], points: usize) -> Result<f64> {
    game.check_bounds(x)?;
    let points = points.max(2);
    let mut worst = 0.0f64;
    let mut y = x.to_vec();
    for i in 0..game.n() {
        let iv = game.intervals()[i];
        let here = game.cost_at(i, x);
        let mut lowest = here;
        for k in 0..points {
            y[i] = iv.lo + iv.width() * k as f64 / (points - 1) as f64;
            lowest = lowest.min(game.cost_at(i, &y));
        }
        y[i] = x[i];
        worst = worst.max(here - lowest);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{quadratic_game, ActionInterval};

    fn quad(a: &[f64], c: Vec<Vec<f64>>) -> GameSpec {
        quadratic_game(a, &c, ActionInterval::new(0.0, 10.0).unwrap(), None).unwrap()
    }

    #[test]
    fn decoupled_interior() {
        let g = quad(&[1.0, 2.0, 3.0], vec![vec![0.0; 3]; 3]);
        let s = solve_ne(&g, 1e-10, 100_000).unwrap();
        assert!(s.converged);
        assert!(s.residual < 1e-10);
        for (a, b) in s.x_star.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn decoupled_boundary() {
        let g = quad(&[-1.0, 2.0], vec![vec![0.0; 2]; 2]);
        let s = solve_ne(&g, 1e-10, 100_000).unwrap();
        assert!(s.converged);
        assert!(s.x_star[0].abs() < 1e-12);
        assert!((s.x_star[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn iteration_cap_reports_failure() {
        let g = quad(&[1.0, 2.0, 3.0], vec![vec![0.0; 3]; 3]);
        let s = solve_ne(&g, 1e-14, 1).unwrap();
        assert!(!s.converged);
        assert_eq!(s.iterations, 1);
        assert!(solve_ne(&g, 0.0, 10).is_err());
    }

    #[test]
    fn brute_force_decoupled() {
        let g = quad(&[1.25, 3.5], vec![vec![0.0; 2]; 2]);
        let b = brute_force_ne(&g, 0.01, Parallelism::Sequential).unwrap();
        assert!(b.found);
        assert!((b.x[0] - 1.25).abs() <= 0.01 && (b.x[1] - 3.5).abs() <= 0.01);
    }

    #[test]
    fn brute_force_guardrails() {
        let g4 = quad(&[1.0; 4], vec![vec![0.0; 4]; 4]);
        assert!(brute_force_ne(&g4, 1.0, Parallelism::Sequential).is_err());
        let g3 = quad(&[1.0; 3], vec![vec![0.0; 3]; 3]);
        assert!(matches!(
            brute_force_ne(&g3, 1e-3, Parallelism::Sequential),
            Err(Error::TooLarge(_))
        ));
    }
}
