//! Max-tradeoff functions bounding the conditional entropy per round in
//! terms of the winning frequency, and their tangent linearization.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::mabk::p_bounds;
use crate::qmath::h2;

const CLAMP_SLACK: f64 = 1e-12;

/// Below `p_min` the formula is continued until its argument reaches ½,
/// and held at `h2(½) = 1` after that. Arguments within `CLAMP_SLACK` of an
/// endpoint snap to it.
fn clamp_arg(x: f64) -> f64 {
    if x < CLAMP_SLACK {
        0.0
    } else if x > 0.5 - CLAMP_SLACK {
        0.5
    } else {
        x
    }
}

fn even_arg(omega: f64) -> f64 {
    clamp_arg(0.5 - (2.0 * omega - 1.0) / SQRT_2)
}

fn odd_arg(omega: f64) -> f64 {
    clamp_arg(0.5 - (4.0 * omega - 1.0) / 2.0)
}

fn check_omega(omega: f64, parties: usize) -> Result<()> {
    let (lo, hi) = p_bounds(parties);
    check_range("omega", omega, lo - CLAMP_SLACK, hi + CLAMP_SLACK)
}

/// `2·h2(½ − (2ω−1)/√2) − 1` on `[3/4, (2+√2)/4]`.
pub fn g_even(omega: f64) -> Result<f64> {
    check_omega(omega, 2)?;
    Ok(g_raw(omega, 2))
}

/// `2·h2(½ − (4ω−1)/2) − 1` on `[(2+√2)/8, 1/2]`.
pub fn g_odd(omega: f64) -> Result<f64> {
    check_omega(omega, 3)?;
    Ok(g_raw(omega, 3))
}

/// `g` for the parity of `parties`, evaluated wherever its argument stays
/// in `[0, ½]` after clamping.
fn g_raw(omega: f64, parties: usize) -> f64 {
    let x = if parties.is_multiple_of(2) {
        even_arg(omega)
    } else {
        odd_arg(omega)
    };
    2.0 * h2(x) - 1.0
}

/// `dg/dω`; infinite at the Tsirelson endpoint.
fn g_derivative(omega: f64, parties: usize) -> f64 {
    let (x, k) = if parties.is_multiple_of(2) {
        (even_arg(omega), 2.0 * SQRT_2)
    } else {
        (odd_arg(omega), 4.0)
    };
    if x >= 0.5 {
        return 0.0;
    }
    -k * ((1.0 - x) / x).log2()
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name: "gamma",
            value: gamma,
            expected: "(0, 1)".into(),
        })
    }
}

fn check_parties(parties: usize) -> Result<()> {
    if parties < 2 {
        return Err(Error::OutOfRange {
            name: "M",
            value: parties as f64,
            expected: "≥ 2".into(),
        });
    }
    Ok(())
}

/// `(1−γ)·g(p1/γ)` up to the knee at `p1/γ = p_max`, `γ − 1` beyond it.
pub fn f_piecewise(p1: f64, gamma: f64, parties: usize) -> Result<f64> {
    check_gamma(gamma)?;
    check_parties(parties)?;
    let omega = p1 / gamma;
    check_range("p1/gamma", omega, 0.0, 1.0)?;
    let (_, p_max) = p_bounds(parties);
    Ok(if omega <= p_max {
        (1.0 - gamma) * g_raw(omega, parties)
    } else {
        gamma - 1.0
    })
}

/// Tangent line `a·p1 + b` to `f` at `p_t(1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangentCoeffs {
    pub a: f64,
    pub b: f64,
}

impl TangentCoeffs {
    pub fn at(&self, p1: f64) -> f64 {
        self.a * p1 + self.b
    }
}

fn check_tangent_point(pt1: f64, gamma: f64, parties: usize) -> Result<()> {
    let (p_min, p_max) = p_bounds(parties);
    let w = pt1 / gamma;
    if !(w > p_min && w < p_max) {
        return Err(Error::OutOfRange {
            name: "pt1/gamma",
            value: w,
            expected: format!("({p_min}, {p_max})"),
        });
    }
    Ok(())
}

pub fn tangent_coeffs(pt1: f64, gamma: f64, parties: usize) -> Result<TangentCoeffs> {
    check_gamma(gamma)?;
    check_parties(parties)?;
    check_tangent_point(pt1, gamma, parties)?;
    let a = (1.0 - gamma) / gamma * g_derivative(pt1 / gamma, parties);
    if !a.is_finite() {
        return Err(Error::OutOfRange {
            name: "pt1/gamma",
            value: pt1 / gamma,
            expected: "a point with finite slope".into(),
        });
    }
    let b = f_piecewise(pt1, gamma, parties)? - a * pt1;
    Ok(TangentCoeffs { a, b })
}

/// `f` up to `p_t(1)` and its tangent line beyond.
pub fn f_max_linearized(p1: f64, pt1: f64, gamma: f64, parties: usize) -> Result<f64> {
    let t = tangent_coeffs(pt1, gamma, parties)?;
    if p1 <= pt1 {
        f_piecewise(p1, gamma, parties)
    } else {
        check_range("p1/gamma", p1 / gamma, 0.0, 1.0)?;
        Ok(t.at(p1))
    }
}

/// Parameters of one tradeoff evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffSpec {
    #[serde(rename = "M")]
    pub parties: usize,
    #[serde(rename = "M_prime")]
    pub cut: usize,
    pub gamma: f64,
    pub p1: f64,
    pub pt1: f64,
}

impl TradeoffSpec {
    pub fn validate(&self) -> Result<()> {
        check_parties(self.parties)?;
        if self.cut < 1 || self.cut > self.parties - 1 {
            return Err(Error::OutOfRange {
                name: "M_prime",
                value: self.cut as f64,
                expected: format!("[1, {}]", self.parties - 1),
            });
        }
        check_gamma(self.gamma)?;
        check_range("p1", self.p1, 0.0, self.gamma)?;
        check_tangent_point(self.pt1, self.gamma, self.parties)
    }

    pub fn f(&self) -> Result<f64> {
        self.validate()?;
        f_piecewise(self.p1, self.gamma, self.parties)
    }

    pub fn f_max(&self) -> Result<f64> {
        self.validate()?;
        f_max_linearized(self.p1, self.pt1, self.gamma, self.parties)
    }

    pub fn tangent(&self) -> Result<TangentCoeffs> {
        self.validate()?;
        tangent_coeffs(self.pt1, self.gamma, self.parties)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const P_E_MAX: f64 = 0.853_553_390_593_273_8;
    const P_O_MIN: f64 = 0.426_776_695_296_636_9;

    #[test]
    fn g_even_examples() {
        assert!((g_even(P_E_MAX).unwrap() + 1.0).abs() < 1e-12);
        assert!((g_even(0.75).unwrap() - 0.201_752_073_385_712_2).abs() < 1e-12);
        assert!(g_even(0.7).is_err());
        assert!(g_even(0.9).is_err());
    }

    #[test]
    fn g_even_zero_crossing() {
        let (mut lo, mut hi) = (0.75, P_E_MAX);
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if g_even(mid).unwrap() > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((lo - 0.775_751_941_529_435_5).abs() < 1e-9);
    }

    #[test]
    fn g_odd_examples() {
        assert!((g_odd(0.5).unwrap() + 1.0).abs() < 1e-12);
        assert!((g_odd(P_O_MIN).unwrap() - 0.201_752_073_385_712_2).abs() < 1e-12);
        let n = 1000;
        let mut prev = f64::INFINITY;
        for k in 0..=n {
            let w = P_O_MIN + (0.5 - P_O_MIN) * k as f64 / n as f64;
            let g = g_odd(w).unwrap();
            assert!(g < prev);
            prev = g;
        }
    }

    #[test]
    fn parity_endpoints_agree() {
        use crate::mabk::omega_from_beta;
        for beta in [2.0, 2.4, 2.0 * SQRT_2] {
            let e = g_even(omega_from_beta(beta, 4).unwrap()).unwrap();
            let o = g_odd(omega_from_beta(beta, 3).unwrap()).unwrap();
            assert!((e - o).abs() < 1e-12);
        }
    }

    #[test]
    fn piecewise_examples() {
        let at_knee = f_piecewise(0.5 * P_E_MAX, 0.5, 4).unwrap();
        assert!((at_knee + 0.5).abs() < 1e-12);
        assert!((f_piecewise(0.5 * (P_E_MAX + 1e-12), 0.5, 4).unwrap() + 0.5).abs() < 1e-12);
        assert!((f_piecewise(0.45, 0.5, 4).unwrap() + 0.5).abs() < 1e-15);
        assert!((f_piecewise(0.1, 0.2, 3).unwrap() + 0.8).abs() < 1e-12);
        assert!(f_piecewise(0.1, 0.0, 4).is_err());
        assert!(f_piecewise(0.6, 0.5, 4).is_err());
    }

    #[test]
    fn tangent_examples() {
        let (gamma, pt1) = (0.5, 0.4);
        let t = tangent_coeffs(pt1, gamma, 4).unwrap();
        assert_eq!(
            f_max_linearized(pt1, pt1, gamma, 4).unwrap(),
            f_piecewise(pt1, gamma, 4).unwrap()
        );
        assert!((t.at(pt1) - f_piecewise(pt1, gamma, 4).unwrap()).abs() < 1e-12);
        let p1 = 0.85 * gamma;
        assert!(f_max_linearized(p1, pt1, gamma, 4).unwrap() >= f_piecewise(p1, gamma, 4).unwrap());
        assert!(tangent_coeffs(0.85 * gamma, gamma, 4).unwrap().a.is_finite());
        assert!(tangent_coeffs(P_E_MAX * gamma, gamma, 4).is_err());
        assert!(tangent_coeffs(0.7 * gamma, gamma, 4).is_err());
    }

    fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn slope_matches_finite_difference() {
        for (m, gamma) in [(4, 0.5), (2, 0.1), (3, 0.3), (5, 0.9)] {
            let (p_min, p_max) = p_bounds(m);
            for k in 1..20 {
                let w = p_min + (p_max - p_min) * k as f64 / 20.0;
                let pt1 = gamma * w;
                let t = tangent_coeffs(pt1, gamma, m).unwrap();
                let fd = central_difference(|p| f_piecewise(p, gamma, m).unwrap(), pt1, 1e-7 * gamma);
                assert!(((fd - t.a) / t.a).abs() < 1e-6, "M={m} w={w}: {fd} vs {}", t.a);
            }
        }
    }

    #[test]
    fn domination_up_to_knee() {
        for (m, gamma) in [(4, 0.5), (3, 0.2), (6, 0.05), (5, 0.7)] {
            let (p_min, p_max) = p_bounds(m);
            for j in 1..40 {
                let pt1 = gamma * (p_min + (p_max - p_min) * j as f64 / 40.0);
                for k in 0..=400 {
                    let p1 = gamma * p_max * k as f64 / 400.0;
                    let fm = f_max_linearized(p1, pt1, gamma, m).unwrap();
                    let f = f_piecewise(p1, gamma, m).unwrap();
                    assert!(fm >= f - 1e-12, "M={m} pt1={pt1} p1={p1}");
                }
            }
        }
    }

    #[test]
    fn tangent_drops_below_flat_branch_past_the_knee() {
        // Beyond p_max the flat branch γ − 1 is not concave-continued, so the
        // tangent eventually falls below it.
        let (gamma, m) = (0.5, 4);
        let pt1 = gamma * 0.84;
        let p1 = gamma;
        assert!(f_max_linearized(p1, pt1, gamma, m).unwrap() < f_piecewise(p1, gamma, m).unwrap());
    }

    #[test]
    fn differentiable_at_tangent_point() {
        for (m, gamma, w) in [(4, 0.5, 0.8), (3, 0.8, 0.45), (2, 0.9, 0.76)] {
            let pt1 = gamma * w;
            let h = 1e-7;
            let f = |p: f64| f_max_linearized(p, pt1, gamma, m).unwrap();
            let left = (f(pt1) - f(pt1 - h)) / h;
            let right = (f(pt1 + h) - f(pt1)) / h;
            assert!((left - right).abs() < 1e-5, "{left} vs {right}");
        }
    }

    #[test]
    fn one_sided_quotients_converge_at_steep_tangent_points() {
        // Near the knee f'' is large, so the gap at a fixed step is ½|f''|h;
        // it must still vanish linearly in h.
        let (m, gamma, w) = (3, 0.2, 0.47);
        let pt1 = gamma * w;
        let f = |p: f64| f_max_linearized(p, pt1, gamma, m).unwrap();
        let gap = |h: f64| ((f(pt1) - f(pt1 - h)) / h - (f(pt1 + h) - f(pt1)) / h).abs();
        let (g1, g2) = (gap(1e-6), gap(1e-7));
        assert!((g1 / g2 - 10.0).abs() < 0.5, "{g1} {g2}");
        assert!(gap(1e-9) < 1e-5);
    }

    #[test]
    fn gradient_bounded_by_tangent_slope() {
        for (m, gamma, w) in [(4, 0.5, 0.8), (3, 0.2, 0.47), (6, 0.1, 0.85)] {
            let pt1 = gamma * w;
            let a = tangent_coeffs(pt1, gamma, m).unwrap().a;
            let h = 1e-6 * gamma;
            let mut k = 0;
            while (k as f64 + 1.0) * h < gamma {
                let (p, q) = (k as f64 * h * 97.0, (k as f64 * 97.0 + 1.0) * h);
                if q > gamma {
                    break;
                }
                let slope = (f_max_linearized(q, pt1, gamma, m).unwrap()
                    - f_max_linearized(p, pt1, gamma, m).unwrap())
                    / h;
                assert!(slope.abs() <= a.abs() + 1e-6, "p1={p}: {slope} vs {a}");
                k += 1;
            }
        }
    }

    #[test]
    fn tsirelson_endpoints_are_exact() {
        assert_eq!(g_even((2.0 + SQRT_2) / 4.0).unwrap(), -1.0);
        assert_eq!(g_odd(0.5).unwrap(), -1.0);
    }

    #[test]
    fn spec_validation() {
        let spec = TradeoffSpec {
            parties: 4,
            cut: 2,
            gamma: 0.5,
            p1: 0.3,
            pt1: 0.4,
        };
        assert!(spec.f_max().unwrap() >= spec.f().unwrap());
        assert!(TradeoffSpec { cut: 4, ..spec }.validate().is_err());
        assert!(TradeoffSpec { p1: 0.6, ..spec }.validate().is_err());
    }
}
