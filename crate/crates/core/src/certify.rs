//! Finite-size certification: completeness bound, the second-order term of
//! entropy accumulation, η and its optimization over tangent points, the
//! certified distillation rate, and device-dependent rate formulas.

use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::mabk::p_bounds;
use crate::qmath::{coherent_information, max_entropy_conditional, DensityMatrix};
use crate::tradeoff::{f_max_linearized, f_piecewise, tangent_coeffs};

/// How the output-alphabet size entering the second-order term is read.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DimensionReading {
    /// `d_O = 2M′`.
    #[default]
    Printed,
    /// `d_O = 2^{M′}`.
    Hilbert,
}

impl DimensionReading {
    /// `log2(1 + d_O)`.
    pub fn log_term(self, cut: usize) -> f64 {
        match self {
            Self::Printed => (1.0 + 2.0 * cut as f64).log2(),
            Self::Hilbert => (1.0 + 2f64.powi(cut as i32)).log2(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificationParams {
    pub n: u64,
    pub gamma: f64,
    pub omega_exp: f64,
    pub delta_est: f64,
    pub eps_smo: f64,
    pub eps_snd: f64,
    #[serde(rename = "M")]
    pub parties: usize,
    #[serde(rename = "M_prime")]
    pub cut: usize,
    #[serde(default)]
    pub dimension_reading: DimensionReading,
}

impl CertificationParams {
    /// Parameters with `M′ = M − 1` and the printed dimension reading.
    pub fn new(
        parties: usize,
        n: u64,
        gamma: f64,
        omega_exp: f64,
        delta_est: f64,
        eps_smo: f64,
        eps_snd: f64,
    ) -> Result<Self> {
        let p = Self {
            n,
            gamma,
            omega_exp,
            delta_est,
            eps_smo,
            eps_snd,
            parties,
            cut: parties.saturating_sub(1),
            dimension_reading: DimensionReading::Printed,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.parties < 2 {
            return Err(Error::OutOfRange {
                name: "M",
                value: self.parties as f64,
                expected: "≥ 2".into(),
            });
        }
        if self.cut < 1 || self.cut > self.parties - 1 {
            return Err(Error::OutOfRange {
                name: "M_prime",
                value: self.cut as f64,
                expected: format!("[1, {}]", self.parties - 1),
            });
        }
        if self.n == 0 {
            return Err(Error::OutOfRange {
                name: "n",
                value: 0.0,
                expected: "≥ 1".into(),
            });
        }
        check_range("gamma", self.gamma, 0.0, 1.0)?;
        check_open_unit("eps_smo", self.eps_smo)?;
        check_open_unit("eps_snd", self.eps_snd)?;
        if !(self.delta_est >= 0.0 && self.delta_est < 1.0) {
            return Err(Error::OutOfRange {
                name: "delta_est",
                value: self.delta_est,
                expected: "[0, 1)".into(),
            });
        }
        let (lo, hi) = p_bounds(self.parties);
        check_range("omega_exp", self.omega_exp, lo - 1e-12, hi + 1e-12)
    }

    /// `ε = 8·3^{M/2}·√ε_smo`.
    pub fn epsilon(&self) -> f64 {
        8.0 * 3f64.powf(self.parties as f64 / 2.0) * self.eps_smo.sqrt()
    }

    /// Abort threshold `(ω_exp·γ − δ_est)·n` on the number of test wins.
    pub fn abort_threshold(&self) -> f64 {
        (self.omega_exp * self.gamma - self.delta_est) * self.n as f64
    }

    /// Argument `ω_exp·γ − δ_est` at which the tradeoff is evaluated.
    pub fn p1(&self) -> f64 {
        self.omega_exp * self.gamma - self.delta_est
    }
}

fn check_open_unit(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            value,
            expected: "(0, 1)".into(),
        })
    }
}

/// `exp(−2nδ²)`.
pub fn completeness_bound(n: u64, delta_est: f64) -> f64 {
    (-2.0 * n as f64 * delta_est * delta_est).exp()
}

/// `2·(log2(1 + 2M′) + a)·√(1 − 2·log2(ε_smo·ε_snd))`.
pub fn v_term(cut: usize, a_ceil: f64, eps_smo: f64, eps_snd: f64) -> Result<f64> {
    v_term_with(cut, a_ceil, eps_smo, eps_snd, DimensionReading::Printed)
}

pub fn v_term_with(
    cut: usize,
    a_ceil: f64,
    eps_smo: f64,
    eps_snd: f64,
    reading: DimensionReading,
) -> Result<f64> {
    check_open_unit("eps_smo", eps_smo)?;
    check_open_unit("eps_snd", eps_snd)?;
    if !(a_ceil >= 0.0 && a_ceil.is_finite()) {
        return Err(Error::OutOfRange {
            name: "a_ceil",
            value: a_ceil,
            expected: "[0, ∞)".into(),
        });
    }
    let product = eps_smo * eps_snd;
    if product == 0.0 {
        return Err(Error::InvalidParams(format!(
            "ε_smo·ε_snd underflows ({eps_smo:e}·{eps_snd:e})"
        )));
    }
    Ok(2.0 * (reading.log_term(cut) + a_ceil) * (1.0 - 2.0 * product.log2()).sqrt())
}

/// `n·f_max(ω_exp γ − δ_est, p_t) + √n·v(M′, ⌈|a(p_t)|⌉)`.
pub fn eta(params: &CertificationParams, pt1: f64) -> Result<f64> {
    params.validate()?;
    let (m, g) = (params.parties, params.gamma);
    let slope = tangent_coeffs(pt1, g, m)?.a;
    let n = params.n as f64;
    let first = n * f_max_linearized(params.p1(), pt1, g, m)?;
    let v = v_term_with(
        params.cut,
        slope.abs().ceil(),
        params.eps_smo,
        params.eps_snd,
        params.dimension_reading,
    )?;
    Ok(first + n.sqrt() * v)
}

/// Number of interior grid points scanned by [`eta_opt`].
pub const ETA_GRID: usize = 512;
const GOLDEN_TOL: f64 = 1e-10;

/// The tangent points scanned before refinement:
/// `γ·(p_min + (k+1)(p_max − p_min)/(N+1))`, `k = 0..N`.
pub fn eta_grid(params: &CertificationParams) -> Vec<f64> {
    let (lo, hi) = p_bounds(params.parties);
    (0..ETA_GRID)
        .map(|k| params.gamma * (lo + (k + 1) as f64 * (hi - lo) / (ETA_GRID + 1) as f64))
        .collect()
}

/// Minimum of a function on `[a, b]` by golden-section search.
pub fn golden_section(
    f: impl Fn(f64) -> Result<f64>,
    mut a: f64,
    mut b: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc <= fd { (c, fc) } else { (d, fd) })
}

/// `min_{p_t} η` over the open tangent-point interval; returns
/// `(η_opt, p_t*)`.
pub fn eta_opt(params: &CertificationParams) -> Result<(f64, f64)> {
    params.validate()?;
    if !(params.gamma > 0.0 && params.gamma < 1.0) {
        return Err(Error::InvalidParams(format!(
            "tangent interval is empty for γ = {}",
            params.gamma
        )));
    }
    let grid = eta_grid(params);
    let values = grid
        .iter()
        .map(|&pt| eta(params, pt))
        .collect::<Result<Vec<f64>>>()?;
    let (k, &best) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty grid");
    let lo = if k == 0 { grid[0] } else { grid[k - 1] };
    let hi = if k + 1 == grid.len() { grid[k] } else { grid[k + 1] };
    let (pt, refined) = golden_section(|pt| eta(params, pt), lo, hi, GOLDEN_TOL)?;
    Ok(if refined < best {
        (refined, pt)
    } else {
        (best, grid[k])
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateCertificate {
    pub eta_opt: f64,
    /// Certified lower bound on the ε-distillable GHZ entanglement, in bits.
    pub rate_total: f64,
    pub rate_per_round: f64,
    pub pt_star: f64,
    /// Bits per round with the √n term dropped.
    pub leading_order_rate: f64,
    /// `8·3^{M/2}·√ε_smo`.
    pub epsilon: f64,
    pub completeness: f64,
}

/// Certified rate with `M′ = M − 1`. Requires `ε = 8·3^{M/2}√ε_smo < 1`.
pub fn certified_rate(params: &CertificationParams) -> Result<RateCertificate> {
    let params = CertificationParams {
        cut: params.parties.saturating_sub(1),
        ..*params
    };
    params.validate()?;
    let epsilon = params.epsilon();
    if epsilon >= 1.0 {
        return Err(Error::OutOfRange {
            name: "eps_smo",
            value: params.eps_smo,
            expected: format!("8·3^(M/2)·√eps_smo < 1 (got {epsilon})"),
        });
    }
    let (eta_opt, pt_star) = eta_opt(&params)?;
    let k = (params.parties - 1) as f64;
    let rate_total = (-eta_opt + 2.0 * params.eps_smo.log2()) / k;
    Ok(RateCertificate {
        eta_opt,
        rate_total,
        rate_per_round: rate_total / params.n as f64,
        pt_star,
        leading_order_rate: leading_order_rate(&params)?,
        epsilon,
        completeness: completeness_bound(params.n, params.delta_est),
    })
}

/// `−f(ω_exp γ − δ_est)/(M − 1)` bits per round.
pub fn leading_order_rate(params: &CertificationParams) -> Result<f64> {
    params.validate()?;
    Ok(-f_piecewise(params.p1(), params.gamma, params.parties)? / (params.parties - 1) as f64)
}

fn nonempty_subsets_without(parties: usize, k: usize) -> impl Iterator<Item = Vec<usize>> {
    (1usize..1 << parties)
        .filter(move |mask| mask & (1 << k) == 0)
        .map(move |mask| (0..parties).filter(|i| mask & (1 << i) != 0).collect())
}

fn check_parties(rho: &DensityMatrix, parties: usize, max: usize) -> Result<()> {
    if rho.num_subsystems() != parties || !(2..=max).contains(&parties) {
        return Err(Error::DimensionMismatch(format!(
            "state with {} subsystems for M = {parties} (supported M ≤ {max})",
            rho.num_subsystems()
        )));
    }
    Ok(())
}

/// `max_k min_{∅≠K⊆[M]∖{k}} I(A_K⟩A_{[M]∖K})/|K|`.
pub fn asymptotic_distill_rate(rho: &DensityMatrix, parties: usize) -> Result<f64> {
    check_parties(rho, parties, 6)?;
    // I(K⟩rest) depends on K alone; evaluate each subset once.
    let mut ratio = vec![f64::NAN; 1 << parties];
    for mask in 1usize..(1 << parties) - 1 {
        let k: Vec<usize> = (0..parties).filter(|i| mask & (1 << i) != 0).collect();
        ratio[mask] = coherent_information(rho, &k)? / k.len() as f64;
    }
    Ok((0..parties)
        .map(|k| {
            (1usize..1 << parties)
                .filter(|mask| mask & (1 << k) == 0)
                .map(|mask| ratio[mask])
                .fold(f64::INFINITY, f64::min)
        })
        .fold(f64::NEG_INFINITY, f64::max))
}

/// `2·log2(ε′)/(M − 1)`.
pub fn one_shot_penalty(eps_prime: f64, parties: usize) -> f64 {
    2.0 * eps_prime.log2() / (parties - 1) as f64
}

/// `max_k min_K [−H_max(A_K|A_{[M]∖K})]/|K| + 2·log2(ε′)/(M − 1)` with the
/// non-smooth max-entropy, which lower-bounds the smoothed expression.
pub fn one_shot_distill_bound(rho: &DensityMatrix, parties: usize, eps_prime: f64) -> Result<f64> {
    check_parties(rho, parties, 4)?;
    let eps = 8.0 * 3f64.powf(parties as f64 / 2.0) * eps_prime.sqrt();
    if !(eps_prime > 0.0 && eps < 1.0) {
        return Err(Error::OutOfRange {
            name: "eps_prime",
            value: eps_prime,
            expected: "8·3^(M/2)·√eps' < 1".into(),
        });
    }
    let mut best = f64::NEG_INFINITY;
    let mut cache = vec![None; 1 << parties];
    for k in 0..parties {
        let mut worst = f64::INFINITY;
        for subset in nonempty_subsets_without(parties, k) {
            let mask: usize = subset.iter().map(|i| 1 << i).sum();
            let value = match cache[mask] {
                Some(v) => v,
                None => {
                    let h = max_entropy_conditional(rho, &subset)?.bits;
                    let v = -h / subset.len() as f64;
                    cache[mask] = Some(v);
                    v
                }
            };
            worst = worst.min(value);
        }
        best = best.max(worst);
    }
    Ok(best + one_shot_penalty(eps_prime, parties))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ghz::ghz_state;
    use crate::qmath::{partial_trace, von_neumann_entropy};
    use std::f64::consts::SQRT_2;

    const P_E_MAX: f64 = 0.853_553_390_593_273_8;

    fn fig1(omega: f64, n: u64) -> CertificationParams {
        CertificationParams::new(4, n, 0.5, omega, 0.0, 1e-2, 1e-2).unwrap()
    }

    #[test]
    fn completeness_examples() {
        assert!((completeness_bound(1000, 0.05) - 0.006_737_946_999_085_467).abs() < 1e-15);
        assert_eq!(completeness_bound(1000, 0.0), 1.0);
        let (a, b) = (completeness_bound(700, 0.03), completeness_bound(1400, 0.03));
        assert!((b - a * a).abs() < 1e-15);
    }

    #[test]
    fn v_term_examples() {
        assert!((v_term(3, 10.0, 1e-2, 1e-2).unwrap() - 134.508_752_886_570_36).abs() < 1e-9);
        let mut prev = 0.0;
        for a in 0..20 {
            let v = v_term(3, a as f64, 1e-3, 1e-2).unwrap();
            assert!(v > prev);
            prev = v;
        }
        let near_one = 1.0 - 1e-15;
        let v = v_term(2, 3.0, near_one, near_one).unwrap();
        assert!((v - 2.0 * (5f64.log2() + 3.0)).abs() < 1e-6);
        assert!(v_term(2, 3.0, 1e-200, 1e-200).is_err());
        assert!(v_term(2, 3.0, 0.0, 0.5).is_err());
        let hilbert = v_term_with(3, 0.0, 0.5, 0.5, DimensionReading::Hilbert).unwrap();
        let printed = v_term(3, 0.0, 0.5, 0.5).unwrap();
        assert!((hilbert / printed - 9f64.log2() / 7f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn params_validation() {
        assert!(CertificationParams::new(4, 100, 0.5, 0.9, 0.0, 1e-2, 1e-2).is_err());
        assert!(CertificationParams::new(4, 0, 0.5, 0.8, 0.0, 1e-2, 1e-2).is_err());
        assert!(CertificationParams::new(3, 100, 0.5, 0.45, 1.0, 1e-2, 1e-2).is_err());
        let mut p = fig1(0.8, 100);
        p.cut = 4;
        assert!(p.validate().is_err());
        let json = serde_json::to_string(&fig1(0.8, 100)).unwrap();
        let back: CertificationParams = serde_json::from_str(&json).unwrap();
        assert_eq!(back, fig1(0.8, 100));
    }

    #[test]
    fn eta_recomputation() {
        let p = fig1(P_E_MAX, 1_000_000);
        let pt1 = 0.5 * 0.85;
        // Independent evaluation of the closed forms.
        let x = |w: f64| 0.5 - (2.0 * w - 1.0) / SQRT_2;
        let h2 = |q: f64| -q * q.log2() - (1.0 - q) * (1.0 - q).log2();
        let f = |p1: f64| 0.5 * (2.0 * h2(x(p1 / 0.5)) - 1.0);
        let slope = 0.5 / 0.5 * (-2.0 * SQRT_2) * ((1.0 - x(0.85)) / x(0.85)).log2();
        let p1 = 0.5 * P_E_MAX;
        let fmax = f(pt1) + slope * (p1 - pt1);
        let v = 2.0 * (7f64.log2() + slope.abs().ceil()) * (1.0 - 2.0 * (1e-4f64).log2()).sqrt();
        let expected = 1e6 * fmax + 1e3 * v;
        let got = eta(&p, pt1).unwrap();
        assert!(((got - expected) / expected).abs() < 1e-9, "{got} vs {expected}");

        for k in 0..10 {
            let delta = 0.01 * k as f64;
            let q = CertificationParams { delta_est: delta, ..p };
            let first = 1e6 * f_max_linearized(q.p1(), pt1, 0.5, 4).unwrap();
            let second = eta(&CertificationParams { delta_est: 0.0, omega_exp: 0.8, ..p }, pt1).unwrap()
                - 1e6 * f_max_linearized(0.4, pt1, 0.5, 4).unwrap();
            assert!((eta(&q, pt1).unwrap() - first - second).abs() < 1e-6);
        }
    }

    #[test]
    fn eta_opt_is_a_grid_lower_bound() {
        for omega in [0.78, 0.8, 0.84, P_E_MAX] {
            let p = fig1(omega, 1_000_000);
            let (best, pt) = eta_opt(&p).unwrap();
            for g in eta_grid(&p) {
                assert!(best <= eta(&p, g).unwrap());
            }
            assert!(pt > 0.5 * 0.75 && pt < 0.5 * P_E_MAX);
        }
    }

    #[test]
    fn eta_opt_minimizer_is_interior() {
        let p = fig1(0.84, 1_000_000);
        let (best, pt) = eta_opt(&p).unwrap();
        let grid = eta_grid(&p);
        assert!(pt > grid[0] && pt < grid[grid.len() - 1]);
        assert!(eta(&p, grid[0]).unwrap() > best);
        assert!(eta(&p, grid[grid.len() - 1]).unwrap() > best);
    }

    #[test]
    fn eta_opt_per_round_decreases_with_n() {
        let mut n = 1_000u64;
        while n <= 1_000_000_000 {
            let (a, _) = eta_opt(&fig1(0.84, n)).unwrap();
            let (b, _) = eta_opt(&fig1(0.84, 2 * n)).unwrap();
            assert!(b / (2 * n) as f64 <= a / n as f64 + 1e-12);
            n *= 10;
        }
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let (x, fx) = golden_section(|x| Ok((x - 0.3) * (x - 0.3) + 1.0), 0.0, 1.0, 1e-12).unwrap();
        assert!((x - 0.3).abs() < 1e-6 && (fx - 1.0).abs() < 1e-12);
    }

    #[test]
    fn certified_rate_examples() {
        let p = CertificationParams::new(4, 1_000_000, 0.5, P_E_MAX, 0.0, 1e-6, 1e-2).unwrap();
        let cert = certified_rate(&p).unwrap();
        assert!((cert.leading_order_rate - 1.0 / 6.0).abs() < 1e-12);
        assert!(cert.rate_per_round < cert.leading_order_rate);
        let expected_total = (-cert.eta_opt + 2.0 * 1e-6f64.log2()) / 3.0;
        assert!((cert.rate_total - expected_total).abs() < 1e-9);
        assert!((cert.rate_per_round - cert.rate_total / 1e6).abs() < 1e-15);
        assert!(certified_rate(&fig1(0.8, 1000)).is_err());

        let (mut lo, mut hi) = (0.76, 0.8);
        while hi - lo > 1e-10 {
            let mid = 0.5 * (lo + hi);
            if leading_order_rate(&fig1(mid, 1)).unwrap() < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((lo - 0.7758).abs() < 1e-4);
    }

    #[test]
    fn leading_order_monotone_in_delta_and_omega() {
        let mut prev = f64::INFINITY;
        for k in 0..20 {
            let p = CertificationParams { delta_est: 0.005 * k as f64, ..fig1(0.84, 1) };
            let r = leading_order_rate(&p).unwrap();
            assert!(r <= prev + 1e-12);
            prev = r;
        }
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=20 {
            let w = 0.75 + (P_E_MAX - 0.75) * k as f64 / 20.0;
            let r = leading_order_rate(&fig1(w, 1)).unwrap();
            assert!(r >= prev - 1e-12);
            prev = r;
        }
    }

    #[test]
    fn asymptotic_rate_examples() {
        let ghz = ghz_state(3).unwrap().density();
        assert!((asymptotic_distill_rate(&ghz, 3).unwrap() - 0.5).abs() < 1e-10);
        let mixed = DensityMatrix::maximally_mixed(vec![2; 3]);
        assert!((asymptotic_distill_rate(&mixed, 3).unwrap() + 1.0).abs() < 1e-10);
        let product = crate::ghz::make_source(&crate::ghz::SourceModel::ClassicalDeterministic {
            bits: vec![0, 1, 0],
        })
        .unwrap();
        assert!(asymptotic_distill_rate(&product, 3).unwrap() <= 1e-12);
        assert!(asymptotic_distill_rate(&ghz, 4).is_err());
    }

    #[test]
    fn asymptotic_rate_matches_pairwise_enumeration() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for m in 2..=5 {
            let rho = crate::qmath::random::density_matrix(&mut rng, &vec![2; m]);
            let ghz = ghz_state(m).unwrap().density();
            let mixed = ghz.mix(&rho, 0.3).unwrap();
            for state in [rho, ghz, mixed] {
                let mut best = f64::NEG_INFINITY;
                for k in 0..m {
                    let mut worst = f64::INFINITY;
                    for mask in 1usize..1 << m {
                        if mask & (1 << k) != 0 {
                            continue;
                        }
                        let kset: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
                        let rest: Vec<usize> = (0..m).filter(|i| mask & (1 << i) == 0).collect();
                        let h_rest = von_neumann_entropy(&partial_trace(&state, &rest).unwrap());
                        let ci = h_rest - von_neumann_entropy(&state);
                        worst = worst.min(ci / kset.len() as f64);
                    }
                    best = best.max(worst);
                }
                assert!((asymptotic_distill_rate(&state, m).unwrap() - best).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn one_shot_examples() {
        let ghz = ghz_state(3).unwrap().density();
        let v = one_shot_distill_bound(&ghz, 3, 1e-4).unwrap();
        assert!((v + 12.787_712_379_549_449).abs() < 1e-4, "{v}");
        assert!(one_shot_penalty(1.0 - 1e-15, 3).abs() < 1e-12);
        let mixed = DensityMatrix::maximally_mixed(vec![2; 3]);
        assert!(one_shot_distill_bound(&mixed, 3, 1e-4).unwrap() < v);
        assert!(one_shot_distill_bound(&ghz, 3, 0.5).is_err());
    }
}
