//! Dense primal simplex for packing LPs:
//! maximize `c·x` subject to `A x ≤ b`, `x ≥ 0`, with `b ≥ 0`.
//!
//! The origin is feasible, so no phase one is needed. Bland's rule keeps the
//! method from cycling on the degenerate vertices these LPs have plenty of.
//! Duals are read off the final objective row so callers can check the
//! optimality gap independently.

const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    /// One dual price per row.
    pub y: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal(LpSolution),
    /// Column `j` can grow without bound.
    Unbounded(usize),
}

pub fn maximize_packing(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> LpOutcome {
    let n = c.len();
    let m = b.len();
    assert_eq!(a.len(), m);
    debug_assert!(b.iter().all(|&v| v >= 0.0));

    let scale = c.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return LpOutcome::Optimal(LpSolution {
            x: vec![0.0; n],
            y: vec![0.0; m],
            objective: 0.0,
        });
    }

    let width = n + m;
    // Row i: [A_i | I_i | b_i].
    let mut tab: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut row = vec![0.0; width + 1];
            row[..n].copy_from_slice(&a[i]);
            row[n + i] = 1.0;
            row[width] = b[i];
            row
        })
        .collect();
    // Reduced costs, normalised by the largest objective coefficient.
    let mut reduced: Vec<f64> = c
        .iter()
        .map(|v| v / scale)
        .chain(std::iter::repeat_n(0.0, m))
        .collect();
    let mut obj = 0.0;
    let mut basis: Vec<usize> = (n..width).collect();

    while let Some(enter) = (0..width).find(|&j| reduced[j] > PIVOT_TOL) {
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for (i, row) in tab.iter().enumerate() {
            let coef = row[enter];
            if coef > PIVOT_TOL {
                let ratio = row[width] / coef;
                let better = match leave {
                    None => true,
                    Some(l) => {
                        ratio < best - PIVOT_TOL
                            || (ratio <= best + PIVOT_TOL && basis[i] < basis[l])
                    }
                };
                if better {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        let Some(pr) = leave else {
            return LpOutcome::Unbounded(enter);
        };

        let pivot = tab[pr][enter];
        for v in tab[pr].iter_mut() {
            *v /= pivot;
        }
        let pivot_row = tab[pr].clone();
        for (i, row) in tab.iter_mut().enumerate() {
            if i == pr {
                continue;
            }
            let f = row[enter];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
                row[enter] = 0.0;
            }
        }
        let f = reduced[enter];
        for (v, p) in reduced.iter_mut().zip(&pivot_row[..width]) {
            *v -= f * p;
        }
        reduced[enter] = 0.0;
        obj += f * pivot_row[width];
        basis[pr] = enter;
    }

    let mut x = vec![0.0; n];
    for (i, &j) in basis.iter().enumerate() {
        if j < n {
            x[j] = tab[i][width].max(0.0);
        }
    }
    let y: Vec<f64> = (0..m).map(|i| (-reduced[n + i]).max(0.0) * scale).collect();
    let objective: f64 = c.iter().zip(&x).map(|(c, x)| c * x).sum();
    debug_assert!(
        (objective - obj * scale).abs() <= 1e-7 * objective.abs().max(1.0),
        "objective drift: {objective} vs {}",
        obj * scale
    );
    LpOutcome::Optimal(LpSolution { x, y, objective })
}
