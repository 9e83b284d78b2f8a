//! Derivative-free simplex minimization.

use crate::error::{Error, Result};

/// Stopping rules for [`nelder_mead`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmOptions {
    pub max_eval: usize,
    /// Relative spread of simplex values below which the search stops.
    pub tol_f: f64,
}

impl Default for NmOptions {
    fn default() -> Self {
        NmOptions {
            max_eval: 2000,
            tol_f: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

/// Minimizes `f` from `x0`. Infinite values mark infeasible points and are
/// never accepted over finite ones. The result is never worse than `x0`.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], opts: &NmOptions) -> Result<NmResult>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let f0 = f(x0);
    let mut evals = 1;
    if !f0.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    if n == 0 {
        return Ok(NmResult { x: Vec::new(), f: f0, evals });
    }
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.to_vec(), f0)];
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] = if x[i] != 0.0 { x[i] * 1.05 } else { 0.00025 };
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }

    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if evals >= opts.max_eval || worst - best <= opts.tol_f * (1.0 + best.abs()) {
            break;
        }

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let along = |t: f64, from: &[f64]| -> Vec<f64> {
            centroid.iter().zip(from).map(|(c, w)| c + t * (c - w)).collect()
        };
        let xw = simplex[n].0.clone();
        let xr = along(REFLECT, &xw);
        let fr = eval(&xr, &mut evals);

        if fr < best {
            let xe = along(REFLECT * EXPAND, &xw);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let accepted = if fr < worst {
            let xc = along(REFLECT * CONTRACT, &xw);
            let fc = eval(&xc, &mut evals);
            (fc <= fr).then_some((xc, fc))
        } else {
            let xc = along(-CONTRACT, &xw);
            let fc = eval(&xc, &mut evals);
            (fc < worst).then_some((xc, fc))
        };
        match accepted {
            Some(v) => simplex[n] = v,
            None => {
                let x_best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = x_best
                        .iter()
                        .zip(&vertex.0)
                        .map(|(b, v)| b + SHRINK * (v - b))
                        .collect();
                    let v = eval(&x, &mut evals);
                    *vertex = (x, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, fx) = simplex.swap_remove(0);
    Ok(NmResult { x, f: fx, evals })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convex_quadratic() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + (x[1] - 2.0).powi(2);
        // the default stall tolerance bounds f, so x is accurate to ~sqrt(tol_f)
        let r = nelder_mead(f, &[0.0, 0.0], &NmOptions::default()).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 2.0).abs() < 1e-4, "{:?}", r.x);
        let tight = NmOptions {
            tol_f: 1e-14,
            ..NmOptions::default()
        };
        let r = nelder_mead(f, &[0.0, 0.0], &tight).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 2.0).abs() < 1e-6, "{:?}", r.x);
    }

    #[test]
    fn rosenbrock() {
        let r = nelder_mead(
            |x| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2),
            &[-1.2, 1.0],
            &NmOptions::default(),
        )
        .unwrap();
        assert!(r.evals <= 2000 + 3);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn optimum_start_is_kept() {
        let f = |x: &[f64]| x[0] * x[0] + x[1] * x[1] + 3.0;
        let r = nelder_mead(f, &[0.0, 0.0], &NmOptions::default()).unwrap();
        assert!(r.f <= 3.0);
        assert_eq!(r.x, vec![0.0, 0.0]);
    }

    #[test]
    fn infeasible_region_rejected() {
        let f = |x: &[f64]| {
            if x[0] < 0.5 {
                f64::INFINITY
            } else {
                x[0] * x[0]
            }
        };
        let r = nelder_mead(f, &[2.0], &NmOptions::default()).unwrap();
        assert!((r.x[0] - 0.5).abs() < 1e-3);
        assert!(matches!(
            nelder_mead(f, &[0.0], &NmOptions::default()),
            Err(Error::NonFiniteObjective)
        ));
    }
}
