//! Dormand–Prince 5(4) with adaptive steps that land exactly on the
//! requested output times.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },
    #[error("step budget of {0} exhausted")]
    TooManySteps(usize),
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("output times must be nondecreasing and start at or after t0")]
    BadOutputTimes,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            max_steps: 1_000_000,
        }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
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
// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `y' = f(t, y)` from `(t0, y0)` and returns the state at each
/// time in `outputs`.
pub fn dopri5<F>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    outputs: &[f64],
    opts: &OdeOptions,
) -> Result<Vec<Vec<f64>>, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if outputs.first().is_some_and(|&t| t < t0) || outputs.windows(2).any(|w| w[1] < w[0]) {
        return Err(OdeError::BadOutputTimes);
    }
    let n = y0.len();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    f(t, &y, &mut k[0]);

    let t_last = outputs.last().copied().unwrap_or(t0);
    let mut h = initial_step(&y, &k[0], t_last - t0, opts);
    let mut out = Vec::with_capacity(outputs.len());
    let mut steps = 0usize;

    for &target in outputs {
        while target - t > 1e-14 * (1.0 + t.abs()) {
            if steps >= opts.max_steps {
                return Err(OdeError::TooManySteps(opts.max_steps));
            }
            let remaining = target - t;
            let landing = h >= remaining;
            let h_try = if landing { remaining } else { h };
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = 0.0;
                    for (j, kj) in k.iter().enumerate().take(s) {
                        acc += A[s][j] * kj[i];
                    }
                    stage[i] = y[i] + h_try * acc;
                }
                f(t + C[s] * h_try, &stage, &mut k[s]);
            }
            // Row 6 of A holds the fifth-order weights, so `stage` is the new state.
            y_new.copy_from_slice(&stage);

            let mut err_sq = 0.0;
            for i in 0..n {
                let mut e = 0.0;
                for (j, kj) in k.iter().enumerate() {
                    e += E[j] * kj[i];
                }
                let scale = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
                let ratio = h_try * e / scale;
                err_sq += ratio * ratio;
            }
            let err = if n == 0 {
                0.0
            } else {
                (err_sq / n as f64).sqrt()
            };
            if !err.is_finite() {
                h = 0.1 * h_try;
                if h < 1e-14 * (1.0 + t.abs()) {
                    return Err(OdeError::NonFinite { t });
                }
                continue;
            }
            steps += 1;
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if err <= 1.0 {
                t = if landing { target } else { t + h_try };
                std::mem::swap(&mut y, &mut y_new);
                // First-same-as-last: the last stage is f at the new state.
                k.swap(0, 6);
                if !landing || factor < 1.0 {
                    h = h_try * factor;
                }
            } else {
                h = h_try * factor.min(1.0);
            }
            if h < 1e-14 * (1.0 + t.abs()) {
                return Err(OdeError::StepSizeUnderflow { t });
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

fn initial_step(y: &[f64], dy: &[f64], span: f64, opts: &OdeOptions) -> f64 {
    let scale = |i: usize| opts.atol + opts.rtol * y[i].abs();
    let n = y.len().max(1) as f64;
    let d0 = (y
        .iter()
        .enumerate()
        .map(|(i, v)| (v / scale(i)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let d1 = (dy
        .iter()
        .enumerate()
        .map(|(i, v)| (v / scale(i)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let cap = if span > 0.0 { span } else { 1.0 };
    h.min(cap).max(1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let outputs: Vec<f64> = (0..=10).map(|k| 0.1 * k as f64).collect();
        let ys = dopri5(
            |_, y, dy| dy[0] = -y[0],
            0.0,
            &[1.0],
            &outputs,
            &OdeOptions::with_tol(1e-12),
        )
        .unwrap();
        for (t, y) in outputs.iter().zip(&ys) {
            assert!((y[0] - (-t).exp()).abs() < 1e-11, "t={t}");
        }
    }

    #[test]
    fn harmonic_oscillator() {
        let ys = dopri5(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            0.0,
            &[1.0, 0.0],
            &[std::f64::consts::PI],
            &OdeOptions::with_tol(1e-11),
        )
        .unwrap();
        assert!((ys[0][0] + 1.0).abs() < 1e-9);
        assert!(ys[0][1].abs() < 1e-9);
    }

    #[test]
    fn output_at_start_returns_initial_state() {
        let ys = dopri5(
            |_, _, dy| dy[0] = 1.0,
            0.0,
            &[3.0],
            &[0.0, 0.0],
            &OdeOptions::with_tol(1e-8),
        )
        .unwrap();
        assert_eq!(ys, vec![vec![3.0], vec![3.0]]);
    }

    #[test]
    fn rejects_decreasing_outputs() {
        let res = dopri5(
            |_, _, dy| dy[0] = 1.0,
            0.0,
            &[0.0],
            &[0.5, 0.2],
            &OdeOptions::with_tol(1e-8),
        );
        assert_eq!(res, Err(OdeError::BadOutputTimes));
    }
}
