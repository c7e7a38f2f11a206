//! Exact primal active-set method for
//!
//! ```text
//!     minimize   ½ xᵀQx − rᵀx + τ‖x − p‖₁
//!     subject to 1ᵀx = 1, x ≥ 0
//! ```
//!
//! The turnover term is handled through the split x = p + u⁺ − u⁻: every
//! coordinate lives on one linear piece of its cost at a time (below `p_i`,
//! above `p_i`, or pinned at `p_i` / `0`), so each working set is an
//! equality-constrained QP with a piece-dependent linear term. With `Q ≻ 0`
//! the usual primal active-set argument applies unchanged.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{mat_vec, norm_inf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Piece {
    /// pinned at 0
    Zero,
    /// pinned at p_i
    Prev,
    /// x_i ∈ [0, ∞), no turnover charge
    Free,
    /// x_i ∈ [0, p_i], reward r_i + τ
    Below,
    /// x_i ∈ [p_i, ∞), reward r_i − τ
    Above,
}

impl Piece {
    fn is_fixed(self) -> bool {
        matches!(self, Piece::Zero | Piece::Prev)
    }
}

pub(crate) struct TurnoverQp<'a> {
    pub q: &'a DMatrix<f64>,
    pub reward: &'a [f64],
    pub tau: f64,
    pub prev: &'a [f64],
}

const PIN_TOL: f64 = 1e-12;

impl TurnoverQp<'_> {
    fn n(&self) -> usize {
        self.reward.len()
    }

    fn has_turnover(&self) -> bool {
        self.tau > 0.0
    }

    fn piece_reward(&self, i: usize, piece: Piece) -> f64 {
        match piece {
            Piece::Below => self.reward[i] + self.tau,
            Piece::Above => self.reward[i] - self.tau,
            _ => self.reward[i],
        }
    }

    fn bounds(&self, i: usize, piece: Piece) -> (f64, f64) {
        match piece {
            Piece::Zero => (0.0, 0.0),
            Piece::Prev => (self.prev[i], self.prev[i]),
            Piece::Free => (0.0, f64::INFINITY),
            Piece::Below => (0.0, self.prev[i]),
            Piece::Above => (self.prev[i], f64::INFINITY),
        }
    }

    /// Piece entered when mass is added to a coordinate pinned at zero.
    fn upward_piece(&self, i: usize) -> Piece {
        if !self.has_turnover() {
            Piece::Free
        } else if self.prev[i] > 0.0 {
            Piece::Below
        } else {
            Piece::Above
        }
    }

    /// Solve the problem, optionally warm-started from a feasible point.
    /// Returns the optimal weights and the number of working-set iterations.
    pub fn solve(&self, start: Option<&[f64]>) -> Result<(Vec<f64>, usize)> {
        let n = self.n();
        let (mut x, mut pieces) = match start.and_then(|s| self.warm_start(s)) {
            Some(ws) => ws,
            None => self.cold_start(),
        };
        let scale = 1.0
            + self.reward.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
            + self.tau
            + self.q.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mult_tol = 1e-13 * scale;
        let max_iter = 1000 + 50 * n;

        for iter in 1..=max_iter {
            let (y, lambda) = self.equality_qp(&x, &pieces)?;
            let d: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();

            if norm_inf(&d) <= 1e-15 {
                x = y;
                // At the working-set minimizer: release the worst pinned coordinate.
                let g = mat_vec(self.q, &x);
                let mut worst: Option<(usize, Piece, f64)> = None;
                for i in 0..n {
                    let candidates: &[(Piece, f64)] = match pieces[i] {
                        Piece::Zero => {
                            let up = self.upward_piece(i);
                            &[(up, g[i] - self.piece_reward(i, up) + lambda)]
                        }
                        Piece::Prev => &[
                            (Piece::Above, g[i] - (self.reward[i] - self.tau) + lambda),
                            (Piece::Below, (self.reward[i] + self.tau) - g[i] - lambda),
                        ],
                        _ => &[],
                    };
                    for &(piece, slack) in candidates {
                        if slack < -mult_tol && worst.is_none_or(|(_, _, s)| slack < s) {
                            worst = Some((i, piece, slack));
                        }
                    }
                }
                match worst {
                    None => return Ok((x, iter)),
                    Some((i, piece, _)) => pieces[i] = piece,
                }
                continue;
            }

            // Ratio test along d.
            let mut alpha = 1.0;
            let mut block: Option<(usize, Piece)> = None;
            for i in 0..n {
                if pieces[i].is_fixed() || d[i] == 0.0 {
                    continue;
                }
                let (lo, hi) = self.bounds(i, pieces[i]);
                let (ratio, target) = if d[i] < 0.0 {
                    let target = if lo == 0.0 { Piece::Zero } else { Piece::Prev };
                    ((x[i] - lo).max(0.0) / -d[i], target)
                } else if hi.is_finite() {
                    ((hi - x[i]).max(0.0) / d[i], Piece::Prev)
                } else {
                    continue;
                };
                if ratio < alpha {
                    alpha = ratio;
                    block = Some((i, target));
                }
            }
            // The last free coordinate only absorbs budget rounding; never pin it.
            let free = pieces.iter().filter(|p| !p.is_fixed()).count();
            match block.filter(|_| free > 1) {
                Some((j, target)) => {
                    for i in 0..n {
                        x[i] += alpha * d[i];
                    }
                    x[j] = if target == Piece::Zero { 0.0 } else { self.prev[j] };
                    pieces[j] = target;
                }
                None => x = y,
            }
        }
        Err(Error::NonConvergence {
            iterations: max_iter,
            residual: f64::NAN,
        })
    }

    fn cold_start(&self) -> (Vec<f64>, Vec<Piece>) {
        let n = self.n();
        if self.has_turnover() {
            let x = self.prev.to_vec();
            let mut pieces: Vec<Piece> = self
                .prev
                .iter()
                .map(|&p| if p > 0.0 { Piece::Prev } else { Piece::Zero })
                .collect();
            // Leave the steepest upward coordinate free.
            let g = mat_vec(self.q, &x);
            let j = argmax((0..n).map(|i| self.reward[i] - self.tau - g[i]));
            pieces[j] = Piece::Above;
            (x, pieces)
        } else {
            let j = argmax(self.reward.iter().cloned());
            let mut x = vec![0.0; n];
            x[j] = 1.0;
            let mut pieces = vec![Piece::Zero; n];
            pieces[j] = Piece::Free;
            (x, pieces)
        }
    }

    fn warm_start(&self, start: &[f64]) -> Option<(Vec<f64>, Vec<Piece>)> {
        let n = self.n();
        if start.len() != n {
            return None;
        }
        let mut x = start.to_vec();
        let mut pieces = Vec::with_capacity(n);
        for i in 0..n {
            let p = self.prev[i];
            let piece = if x[i] <= PIN_TOL {
                Piece::Zero
            } else if !self.has_turnover() {
                Piece::Free
            } else if p > 0.0 && (x[i] - p).abs() <= PIN_TOL {
                Piece::Prev
            } else if x[i] < p {
                Piece::Below
            } else {
                Piece::Above
            };
            match piece {
                Piece::Zero => x[i] = 0.0,
                Piece::Prev => x[i] = p,
                _ => {}
            }
            pieces.push(piece);
        }
        if pieces.iter().all(|p| p.is_fixed()) {
            let j = argmax(x.iter().cloned());
            pieces[j] = match pieces[j] {
                Piece::Prev => Piece::Above,
                _ => self.upward_piece(j),
            };
        }
        // Absorb the budget residual into the largest free coordinate.
        let residual = 1.0 - x.iter().sum::<f64>();
        let j = argmax((0..n).map(|i| if pieces[i].is_fixed() { f64::NEG_INFINITY } else { x[i] }));
        x[j] += residual;
        let (lo, hi) = self.bounds(j, pieces[j]);
        if x[j] < lo || x[j] > hi || residual.abs() > 1e-6 {
            return None;
        }
        Some((x, pieces))
    }

    /// Minimizer of the working-set subproblem and its budget multiplier.
    fn equality_qp(&self, x: &[f64], pieces: &[Piece]) -> Result<(Vec<f64>, f64)> {
        let n = self.n();
        let free: Vec<usize> = (0..n).filter(|&i| !pieces[i].is_fixed()).collect();
        let m = free.len();
        debug_assert!(m > 0);
        let mut y = x.to_vec();
        let fixed_sum: f64 = (0..n).filter(|&i| pieces[i].is_fixed()).map(|i| x[i]).sum();

        let qff = DMatrix::from_fn(m, m, |a, b| self.q[(free[a], free[b])]);
        let rhs = DVector::from_fn(m, |a, _| {
            let i = free[a];
            let coupling: f64 = (0..n)
                .filter(|&j| pieces[j].is_fixed() && x[j] != 0.0)
                .map(|j| self.q[(i, j)] * x[j])
                .sum();
            self.piece_reward(i, pieces[i]) - coupling
        });
        let ones = DVector::from_element(m, 1.0);

        let (a, b) = match qff.clone().cholesky() {
            Some(ch) => (ch.solve(&rhs), ch.solve(&ones)),
            None => {
                let lu = qff.lu();
                match (lu.solve(&rhs), lu.solve(&ones)) {
                    (Some(a), Some(b)) => (a, b),
                    _ => {
                        return Err(Error::NonConvergence {
                            iterations: 0,
                            residual: f64::INFINITY,
                        })
                    }
                }
            }
        };
        let lambda = (a.sum() - (1.0 - fixed_sum)) / b.sum();
        for (k, &i) in free.iter().enumerate() {
            y[i] = a[k] - lambda * b[k];
        }
        Ok((y, lambda))
    }
}

/// Exact solution when Q = 0: a separable concave piecewise-linear program on
/// the simplex, solved greedily by marginal slope (ties to the lowest index).
pub(crate) fn solve_linear(reward: &[f64], tau: f64, prev: &[f64]) -> Vec<f64> {
    let n = reward.len();
    // (slope, asset, capacity)
    let mut segments: Vec<(f64, usize, f64)> = Vec::with_capacity(2 * n);
    for i in 0..n {
        if tau > 0.0 {
            if prev[i] > 0.0 {
                segments.push((reward[i] + tau, i, prev[i]));
            }
            segments.push((reward[i] - tau, i, f64::INFINITY));
        } else {
            segments.push((reward[i], i, f64::INFINITY));
        }
    }
    segments.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut x = vec![0.0; n];
    let mut remaining = 1.0;
    for (_, i, cap) in segments {
        if remaining <= 0.0 {
            break;
        }
        let take = cap.min(remaining);
        x[i] += take;
        remaining -= take;
    }
    x
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_prefers_lowest_index_on_ties() {
        let x = solve_linear(&[0.1, 0.1, 0.05], 0.0, &[0.0; 3]);
        assert_eq!(x, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn greedy_keeps_previous_holdings_under_turnover() {
        // Moving from asset 0 to asset 1 gains 0.05 but costs 2τ = 0.2.
        let x = solve_linear(&[0.1, 0.15], 0.1, &[1.0, 0.0]);
        assert_eq!(x, vec![1.0, 0.0]);
    }

    #[test]
    fn active_set_identity_two_assets() {
        let q = DMatrix::identity(2, 2) * 2.0;
        let qp = TurnoverQp {
            q: &q,
            reward: &[0.3, 0.1],
            tau: 0.0,
            prev: &[0.5, 0.5],
        };
        let (x, _) = qp.solve(None).unwrap();
        assert!((x[0] - 0.55).abs() < 1e-14 && (x[1] - 0.45).abs() < 1e-14);
    }

    #[test]
    fn active_set_hits_vertex_for_flat_curvature() {
        let q = DMatrix::identity(2, 2) * 0.1;
        let qp = TurnoverQp {
            q: &q,
            reward: &[0.3, 0.1],
            tau: 0.0,
            prev: &[0.5, 0.5],
        };
        let (x, _) = qp.solve(None).unwrap();
        assert_eq!(x, vec![1.0, 0.0]);
    }

    #[test]
    fn turnover_pins_at_previous_weights() {
        // Unconstrained move would be small relative to 2τ: stay put.
        let q = DMatrix::identity(2, 2);
        let qp = TurnoverQp {
            q: &q,
            reward: &[0.11, 0.1],
            tau: 0.5,
            prev: &[0.5, 0.5],
        };
        let (x, _) = qp.solve(None).unwrap();
        assert_eq!(x, vec![0.5, 0.5]);
    }

    #[test]
    fn budget_rounding_in_previous_weights_keeps_a_free_coordinate() {
        let q = DMatrix::identity(2, 2);
        let qp = TurnoverQp {
            q: &q,
            reward: &[0.11, 0.1],
            tau: 0.5,
            prev: &[0.3, 0.7 + 1e-13],
        };
        let (x, _) = qp.solve(None).unwrap();
        assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((x[0] - 0.3).abs() < 1e-12 && (x[1] - 0.7).abs() < 1e-12);
    }
}
