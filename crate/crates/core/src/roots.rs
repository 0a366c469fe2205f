//! Scalar root finding.

/// Brent's method on a bracketing interval `[a, b]` with `f(a)·f(b) ≤ 0`.
///
/// Returns `None` when the bracket does not change sign.
pub(crate) fn brent<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, xtol: f64, max_iter: usize) -> Option<f64> {
  let mut fa = f(a);
  let mut fb = f(b);
  if fa == 0.0 {
    return Some(a);
  }
  if fb == 0.0 {
    return Some(b);
  }
  if fa.signum() == fb.signum() {
    return None;
  }
  let mut c = a;
  let mut fc = fa;
  let mut d = b - a;
  let mut e = d;
  for _ in 0..max_iter {
    if fb.signum() == fc.signum() {
      c = a;
      fc = fa;
      d = b - a;
      e = d;
    }
    if fc.abs() < fb.abs() {
      a = b;
      b = c;
      c = a;
      fa = fb;
      fb = fc;
      fc = fa;
    }
    let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
    let m = 0.5 * (c - b);
    if m.abs() <= tol || fb == 0.0 {
      return Some(b);
    }
    if e.abs() >= tol && fa.abs() > fb.abs() {
      let s = fb / fa;
      let (mut p, mut q);
      if a == c {
        p = 2.0 * m * s;
        q = 1.0 - s;
      } else {
        let qq = fa / fc;
        let r = fb / fc;
        p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0));
        q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
      }
      if p > 0.0 {
        q = -q;
      } else {
        p = -p;
      }
      if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
        e = d;
        d = p / q;
      } else {
        d = m;
        e = m;
      }
    } else {
      d = m;
      e = m;
    }
    a = b;
    fa = fb;
    b += if d.abs() > tol { d } else { tol.copysign(m) };
    fb = f(b);
  }
  Some(b)
}
