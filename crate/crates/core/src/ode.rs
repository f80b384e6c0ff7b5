//! Dormand–Prince 5(4) integration with stored nodes for dense re-stepping.

use crate::error::{Error, Result};

pub trait Rhs<const N: usize> {
    fn eval(&self, t: f64, y: &[f64; N]) -> [f64; N];
}

#[derive(Clone, Copy, Debug)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    /// When set, every step has this length (no error control).
    pub fixed_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            rtol: 1e-10,
            atol: 1e-10,
            max_step: 0.25,
            fixed_step: None,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory<const N: usize> {
    pub t: Vec<f64>,
    pub y: Vec<[f64; N]>,
    pub rejected: usize,
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Single Dormand–Prince step; returns (5th-order solution, error estimate).
pub fn dopri_step<const N: usize, R: Rhs<N>>(
    rhs: &R,
    t: f64,
    y: &[f64; N],
    h: f64,
) -> ([f64; N], [f64; N]) {
    let mut k = [[0.0; N]; 7];
    k[0] = rhs.eval(t, y);
    for s in 1..7 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s) {
            let a = A[s][j];
            if a != 0.0 {
                for i in 0..N {
                    ys[i] += h * a * kj[i];
                }
            }
        }
        k[s] = rhs.eval(t + C[s] * h, &ys);
    }
    let mut out = *y;
    let mut err = [0.0; N];
    for s in 0..7 {
        for i in 0..N {
            out[i] += h * B5[s] * k[s][i];
            err[i] += h * E[s] * k[s][i];
        }
    }
    (out, err)
}

/// Integrates from `t0` to `t1` (either direction). `stop` is consulted after
/// every accepted step and may end the integration early.
pub fn integrate<const N: usize, R: Rhs<N>>(
    rhs: &R,
    t0: f64,
    y0: [f64; N],
    t1: f64,
    ctl: &StepControl,
    mut stop: impl FnMut(f64, &[f64; N]) -> bool,
) -> Result<Trajectory<N>> {
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let span = (t1 - t0).abs();
    let mut traj = Trajectory {
        t: vec![t0],
        y: vec![y0],
        rejected: 0,
    };
    if span == 0.0 {
        return Ok(traj);
    }
    let mut t = t0;
    let mut y = y0;
    let mut h = match ctl.fixed_step {
        Some(step) => step.min(span),
        None => (1e-3 * span).min(ctl.max_step),
    };
    let mut steps = 0usize;
    while (t1 - t) * dir > 1e-14 * span.max(1.0) {
        steps += 1;
        if steps > ctl.max_steps {
            return Err(Error::SolverDiverged {
                reason: format!("step budget exhausted at t = {t}"),
                bracket: (t0, t1),
            });
        }
        let remaining = (t1 - t).abs();
        let last = h >= remaining;
        let hh = if last { remaining } else { h };
        let (ynew, err) = dopri_step(rhs, t, &y, dir * hh);
        if ynew.iter().any(|v| !v.is_finite()) {
            if ctl.fixed_step.is_some() || hh < 1e-14 * span {
                return Err(Error::SolverDiverged {
                    reason: format!("non-finite state at t = {t}"),
                    bracket: (t0, t1),
                });
            }
            h = 0.25 * hh;
            traj.rejected += 1;
            continue;
        }
        if ctl.fixed_step.is_some() {
            t = if last { t1 } else { t + dir * hh };
            y = ynew;
            traj.t.push(t);
            traj.y.push(y);
            if stop(t, &y) {
                break;
            }
            continue;
        }
        let mut norm = 0.0;
        for i in 0..N {
            let sc = ctl.atol + ctl.rtol * y[i].abs().max(ynew[i].abs());
            norm += (err[i] / sc).powi(2);
        }
        let norm = (norm / N as f64).sqrt();
        if norm <= 1.0 {
            t = if last { t1 } else { t + dir * hh };
            y = ynew;
            traj.t.push(t);
            traj.y.push(y);
            if stop(t, &y) {
                break;
            }
            let factor = if norm == 0.0 {
                5.0
            } else {
                (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0)
            };
            h = (hh * factor).min(ctl.max_step);
        } else {
            traj.rejected += 1;
            h = hh * (0.9 * norm.powf(-0.2)).clamp(0.1, 0.9);
            if h < 1e-14 * span {
                return Err(Error::SolverDiverged {
                    reason: format!("step size underflow at t = {t}"),
                    bracket: (t0, t1),
                });
            }
        }
    }
    Ok(traj)
}

impl<const N: usize> Trajectory<N> {
    pub fn end(&self) -> (f64, [f64; N]) {
        (*self.t.last().unwrap(), *self.y.last().unwrap())
    }

    /// Index of the stored node from which `t` is reached by a partial step.
    pub fn node_for(&self, t: f64) -> usize {
        let increasing = self.t.len() < 2 || self.t[1] >= self.t[0];
        let pos = if increasing {
            self.t.partition_point(|&s| s <= t)
        } else {
            self.t.partition_point(|&s| s >= t)
        };
        pos.saturating_sub(1).min(self.t.len().saturating_sub(2))
    }

    /// Re-steps from node `k` to `t` with one Dormand–Prince step.
    pub fn eval_from<R: Rhs<N>>(&self, rhs: &R, k: usize, t: f64) -> [f64; N] {
        let h = t - self.t[k];
        if h == 0.0 {
            return self.y[k];
        }
        dopri_step(rhs, self.t[k], &self.y[k], h).0
    }

    pub fn eval<R: Rhs<N>>(&self, rhs: &R, t: f64) -> [f64; N] {
        let k = self.node_for(t);
        self.eval_from(rhs, k, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Oscillator;
    impl Rhs<2> for Oscillator {
        fn eval(&self, _t: f64, y: &[f64; 2]) -> [f64; 2] {
            [y[1], -y[0]]
        }
    }

    #[test]
    fn harmonic_oscillator_to_tolerance() {
        let traj = integrate(
            &Oscillator,
            0.0,
            [1.0, 0.0],
            10.0,
            &StepControl::default(),
            |_, _| false,
        )
        .unwrap();
        let (t, y) = traj.end();
        assert_eq!(t, 10.0);
        assert!((y[0] - 10f64.cos()).abs() < 1e-8);
        // dense evaluation between nodes
        let mid = traj.eval(&Oscillator, 3.3);
        assert!((mid[0] - 3.3f64.cos()).abs() < 1e-8);
    }

    #[test]
    fn fixed_step_fifth_order_convergence() {
        let err = |h: f64| {
            let ctl = StepControl {
                fixed_step: Some(h),
                ..Default::default()
            };
            let traj = integrate(&Oscillator, 0.0, [1.0, 0.0], 2.0, &ctl, |_, _| false).unwrap();
            (traj.end().1[0] - 2f64.cos()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!(ratio > 24.0 && ratio < 40.0, "ratio {ratio}");
    }

    #[test]
    fn backward_integration_and_early_stop() {
        let traj = integrate(
            &Oscillator,
            1.0,
            [1f64.cos(), -1f64.sin()],
            0.0,
            &StepControl::default(),
            |_, _| false,
        )
        .unwrap();
        assert!((traj.end().1[0] - 1.0).abs() < 1e-9);
        let stopped = integrate(
            &Oscillator,
            0.0,
            [1.0, 0.0],
            10.0,
            &StepControl::default(),
            |t, _| t > 2.0,
        )
        .unwrap();
        assert!(stopped.end().0 < 10.0 && stopped.end().0 > 2.0);
    }
}
