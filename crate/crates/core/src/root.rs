//! Root of `f(θ) = 1` for an increasing function that may diverge to `+∞`
//! at a finite abscissa.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Eval {
    Finite(f64),
    Divergent,
}

impl Eval {
    fn exceeds_one(self) -> bool {
        match self {
            Eval::Finite(v) => v > 1.0,
            Eval::Divergent => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub theta: f64,
    /// `f(theta)`.
    pub value: f64,
    pub iterations: usize,
    /// The bracket shrank to adjacent floats before `|f - 1| <= tol`.
    pub collapsed: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RootError {
    /// `f` stays below one up to its divergence point (or the search cap).
    #[error("transform never reaches one (supremum observed {sup_value})")]
    NoCrossing { sup_value: f64 },
    /// `f` stays above one however far `θ` is decreased.
    #[error("transform never falls below one")]
    NoLowerBracket,
}

const MAX_EXPANSIONS: usize = 64;
const MAX_BISECTIONS: usize = 400;
/// `e^θ` overflows beyond this.
const THETA_CEILING: f64 = 700.0;
/// Residual above which a collapsed bracket means the root does not exist.
const COLLAPSE_ACCEPT: f64 = 1e-6;

/// Bisection for `f(θ) = 1`, `f` strictly increasing, starting at `start`.
pub fn solve_increasing<F>(mut f: F, start: f64, tol: f64) -> Result<Root, RootError>
where
    F: FnMut(f64) -> Eval,
{
    let mut iterations = 0;
    let mut eval = |t: f64, iterations: &mut usize| {
        *iterations += 1;
        f(t)
    };

    let first = eval(start, &mut iterations);
    if let Eval::Finite(v) = first {
        if (v - 1.0).abs() <= tol {
            return Ok(Root {
                theta: start,
                value: v,
                iterations,
                collapsed: false,
            });
        }
    }

    let (mut lo, mut lo_val, mut hi, mut hi_eval);
    if first.exceeds_one() {
        hi = start;
        hi_eval = first;
        let mut step = 1.0;
        loop {
            let t = hi - step;
            let e = eval(t, &mut iterations);
            match e {
                Eval::Finite(v) if (v - 1.0).abs() <= tol => {
                    return Ok(Root {
                        theta: t,
                        value: v,
                        iterations,
                        collapsed: false,
                    })
                }
                Eval::Finite(v) if v < 1.0 => {
                    lo = t;
                    lo_val = v;
                    break;
                }
                _ => {
                    hi = t;
                    hi_eval = e;
                }
            }
            step *= 2.0;
            if iterations > MAX_EXPANSIONS {
                return Err(RootError::NoLowerBracket);
            }
        }
    } else {
        lo = start;
        lo_val = match first {
            Eval::Finite(v) => v,
            Eval::Divergent => unreachable!(),
        };
        let mut step = 1.0;
        loop {
            let t = lo + step;
            if t > THETA_CEILING {
                return Err(RootError::NoCrossing { sup_value: lo_val });
            }
            let e = eval(t, &mut iterations);
            match e {
                Eval::Finite(v) if (v - 1.0).abs() <= tol => {
                    return Ok(Root {
                        theta: t,
                        value: v,
                        iterations,
                        collapsed: false,
                    })
                }
                Eval::Finite(v) if v < 1.0 => {
                    lo = t;
                    lo_val = v;
                }
                _ => {
                    hi = t;
                    hi_eval = e;
                    break;
                }
            }
            step *= 2.0;
        }
    }

    for _ in 0..MAX_BISECTIONS {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        let e = eval(mid, &mut iterations);
        if let Eval::Finite(v) = e {
            if (v - 1.0).abs() <= tol {
                return Ok(Root {
                    theta: mid,
                    value: v,
                    iterations,
                    collapsed: false,
                });
            }
        }
        if e.exceeds_one() {
            hi = mid;
            hi_eval = e;
        } else if let Eval::Finite(v) = e {
            lo = mid;
            lo_val = v;
        }
    }

    // bracket collapsed at floating-point resolution
    let lo_res = (lo_val - 1.0).abs();
    let (theta, value) = match hi_eval {
        Eval::Finite(v) if (v - 1.0).abs() < lo_res => (hi, v),
        _ => (lo, lo_val),
    };
    if (value - 1.0).abs() > COLLAPSE_ACCEPT {
        return Err(RootError::NoCrossing { sup_value: lo_val });
    }
    Ok(Root {
        theta,
        value,
        iterations,
        collapsed: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_root() {
        // f = 0.7 e^θ, root at -ln 0.7
        let r = solve_increasing(|t| Eval::Finite(0.7 * t.exp()), 0.0, 1e-14).unwrap();
        assert!((r.theta + 0.7_f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn root_below_start() {
        let r = solve_increasing(|t| Eval::Finite(3.0 * t.exp()), 0.0, 1e-14).unwrap();
        assert!((r.theta + 3.0_f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn divergence_counts_as_above_one() {
        // f = e^θ / (2 - e^θ) diverges at ln 2, root at 0... use a shifted one
        let f = |t: f64| {
            let s = t.exp();
            if s >= 2.0 {
                Eval::Divergent
            } else {
                Eval::Finite(0.25 * s / (2.0 - s))
            }
        };
        let r = solve_increasing(f, 0.0, 1e-13).unwrap();
        // 0.25 s = 2 - s -> s = 1.6
        assert!((r.theta - 1.6_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bounded_transform_reports_no_crossing() {
        let f = |t: f64| {
            if t >= 1.0 {
                Eval::Divergent
            } else {
                Eval::Finite(0.5 * t.exp() / 1.0_f64.exp())
            }
        };
        assert!(matches!(
            solve_increasing(f, 0.0, 1e-12),
            Err(RootError::NoCrossing { .. })
        ));
    }

    #[test]
    fn exact_start_returns_immediately() {
        let r = solve_increasing(|t| Eval::Finite((t).exp()), 0.0, 1e-12).unwrap();
        assert_eq!(r.theta, 0.0);
        assert_eq!(r.iterations, 1);
    }
}
