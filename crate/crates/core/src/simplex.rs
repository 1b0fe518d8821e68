//! Nelder-Mead simplex minimisation in the style of MATLAB's `fminsearch`.

use nalgebra::SVector;

pub const DEFAULT_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_MAX_ITERATIONS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimplexStatus {
    Converged,
    /// All initial vertices had the same value; `x0` is returned unchanged.
    ConvergedFlat,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexResult<const N: usize> {
    pub x: SVector<f64, N>,
    pub f: f64,
    pub iterations: usize,
    pub status: SimplexStatus,
}

/// Minimise `f` from `x0`. Stops when the largest vertex distance from the
/// best vertex falls below `tol`, or after `max_iter` iterations.
pub fn simplex_minimize<const N: usize, F>(
    mut f: F,
    x0: SVector<f64, N>,
    tol: f64,
    max_iter: usize,
) -> SimplexResult<N>
where
    F: FnMut(&SVector<f64, N>) -> f64,
{
    let mut pts: Vec<SVector<f64, N>> = Vec::with_capacity(N + 1);
    pts.push(x0);
    for i in 0..N {
        let mut p = x0;
        p[i] = if p[i] != 0.0 { 1.05 * p[i] } else { 0.00025 };
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(&mut f).collect();
    if vals.iter().all(|v| *v == vals[0]) {
        return SimplexResult {
            x: x0,
            f: vals[0],
            iterations: 0,
            status: SimplexStatus::ConvergedFlat,
        };
    }

    let mut order: Vec<usize> = (0..=N).collect();
    let mut iterations = 0;
    loop {
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)));
        let best = order[0];
        let diameter = order[1..]
            .iter()
            .map(|&i| (pts[i] - pts[best]).amax())
            .fold(0.0, f64::max);
        if diameter < tol {
            return SimplexResult {
                x: pts[best],
                f: vals[best],
                iterations,
                status: SimplexStatus::Converged,
            };
        }
        if iterations >= max_iter {
            return SimplexResult {
                x: pts[best],
                f: vals[best],
                iterations,
                status: SimplexStatus::MaxIterations,
            };
        }
        iterations += 1;

        let worst = order[N];
        let second = order[N - 1];
        let centroid = order[..N].iter().map(|&i| pts[i]).sum::<SVector<f64, N>>() / N as f64;
        let reflected = centroid + (centroid - pts[worst]);
        let fr = f(&reflected);
        if fr < vals[best] {
            let expanded = centroid + 2.0 * (centroid - pts[worst]);
            let fe = f(&expanded);
            if fe < fr {
                pts[worst] = expanded;
                vals[worst] = fe;
            } else {
                pts[worst] = reflected;
                vals[worst] = fr;
            }
            continue;
        }
        if fr < vals[second] {
            pts[worst] = reflected;
            vals[worst] = fr;
            continue;
        }
        let (candidate, fc) = if fr < vals[worst] {
            let c = centroid + 0.5 * (reflected - centroid);
            let fc = f(&c);
            (c, if fc <= fr { Some(fc) } else { None })
        } else {
            let c = centroid + 0.5 * (pts[worst] - centroid);
            let fc = f(&c);
            (c, if fc < vals[worst] { Some(fc) } else { None })
        };
        if let Some(fc) = fc {
            pts[worst] = candidate;
            vals[worst] = fc;
            continue;
        }
        let anchor = pts[best];
        for &i in &order[1..] {
            pts[i] = anchor + 0.5 * (pts[i] - anchor);
            vals[i] = f(&pts[i]);
        }
    }
}
