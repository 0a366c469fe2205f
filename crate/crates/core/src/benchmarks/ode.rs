//! Adaptive Dormand–Prince 5(4) integration of complex ODE systems.

use crate::{Error, Result, C64};

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
  [0.0; 6],
  [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
  [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
  [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
  [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
  [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
  [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
  71.0 / 57600.0,
  0.0,
  -71.0 / 16695.0,
  71.0 / 1920.0,
  -17253.0 / 339200.0,
  22.0 / 525.0,
  -1.0 / 40.0,
];

/// Tolerances and limits of the integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeTolerance {
  pub rtol: f64,
  pub atol: f64,
  pub max_steps: usize,
}

impl Default for OdeTolerance {
  fn default() -> Self {
    Self { rtol: 1e-10, atol: 1e-12, max_steps: 100_000 }
  }
}

/// Integrates `y' = f(t, y)` from `t0` through each of the increasing
/// `targets`, landing exactly on every target. Returns the state at each.
pub fn dopri5<const N: usize, F>(mut f: F, y0: [C64; N], t0: f64, targets: &[f64], tol: &OdeTolerance) -> Result<Vec<[C64; N]>>
where
  F: FnMut(f64, &[C64; N]) -> Result<[C64; N]>,
{
  let mut out = Vec::with_capacity(targets.len());
  let Some(&t_end) = targets.last() else { return Ok(out) };
  let span = t_end - t0;
  if !(span >= 0.0) {
    return Err(Error::InvalidInput("integration targets must follow the start time".into()));
  }
  let mut t = t0;
  let mut y = y0;
  let mut k1 = f(t, &y)?;
  let mut h = (span / 100.0).max(f64::MIN_POSITIVE);
  let h_min = 1e-14 * span.max(1e-300);
  let mut steps = 0usize;
  for &target in targets {
    while t < target {
      steps += 1;
      if steps > tol.max_steps {
        return Err(Error::Explosion { t, reason: "step budget exhausted".into() });
      }
      let last = h >= target - t;
      let hs = if last { target - t } else { h };
      let mut k = [[C64::new(0.0, 0.0); N]; 7];
      k[0] = k1;
      for s in 1..7 {
        let mut ys = y;
        for (i, yi) in ys.iter_mut().enumerate() {
          let mut acc = C64::new(0.0, 0.0);
          for j in 0..s {
            acc += k[j][i] * A[s][j];
          }
          *yi += acc * hs;
        }
        k[s] = f(t + C[s] * hs, &ys)?;
      }
      let mut y_new = y;
      let mut err = 0.0f64;
      for i in 0..N {
        let mut acc = C64::new(0.0, 0.0);
        let mut e = C64::new(0.0, 0.0);
        for s in 0..7 {
          acc += k[s][i] * A[6].get(s).copied().unwrap_or(0.0);
          e += k[s][i] * E[s];
        }
        y_new[i] = y[i] + acc * hs;
        let scale = tol.atol + tol.rtol * y[i].norm().max(y_new[i].norm());
        err = err.max((e * hs).norm() / scale);
      }
      if !err.is_finite() || y_new.iter().any(|v| !(v.re.is_finite() && v.im.is_finite()) || v.norm() > 1e100) {
        if hs <= h_min {
          return Err(Error::Explosion { t, reason: "solution is not finite".into() });
        }
        h = 0.25 * hs;
        continue;
      }
      if err <= 1.0 {
        t = if last { target } else { t + hs };
        y = y_new;
        k1 = k[6];
        let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        if !last {
          h = hs * grow;
        } else {
          h = h.max(hs * grow);
        }
      } else {
        h = hs * (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
        if h < h_min {
          return Err(Error::Explosion { t, reason: "step size underflow".into() });
        }
      }
    }
    out.push(y);
  }
  Ok(out)
}
