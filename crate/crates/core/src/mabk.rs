//! MABK operators, their unrolled coefficient tables, the associated
//! nonlocal game and optimal honest measurement settings.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::SQRT_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ghz::{bit_string, ghz_state, index_bits, parse_bit_string};
use crate::qmath::{
    apply_local_left, c64, hermitian_eigen, hermiticity_defect, identity, kron, max_abs, pauli_x,
    pauli_y, random, CMatrix, DensityMatrix,
};

/// Tolerance on `O = O†` and `O² = I`.
pub const OBSERVABLE_TOL: f64 = 1e-10;

/// Hermitian operator squaring to the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryObservable {
    matrix: CMatrix,
}

impl BinaryObservable {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::NotSquare {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
            });
        }
        let herm = hermiticity_defect(&matrix);
        if herm > OBSERVABLE_TOL {
            return Err(Error::InvalidObservable(format!("not Hermitian (defect {herm:e})")));
        }
        let sq = max_abs(&(&matrix * &matrix - identity(matrix.nrows())));
        if sq > OBSERVABLE_TOL {
            return Err(Error::InvalidObservable(format!("O² ≠ I (defect {sq:e})")));
        }
        Ok(Self { matrix })
    }

    /// `cos θ σ_x + sin θ σ_y`.
    pub fn equatorial(theta: f64) -> Self {
        let matrix = pauli_x() * c64(theta.cos(), 0.0) + pauli_y() * c64(theta.sin(), 0.0);
        Self { matrix }
    }

    /// `U·diag(±1)·U†` with Haar `U` and independent fair signs.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Self {
        let u = random::unitary(rng, d);
        let signs = CMatrix::from_fn(d, d, |i, j| {
            if i == j {
                c64(if rng.random::<bool>() { 1.0 } else { -1.0 }, 0.0)
            } else {
                c64(0.0, 0.0)
            }
        });
        let matrix = &u * signs * u.adjoint();
        Self { matrix: (&matrix + matrix.adjoint()) * c64(0.5, 0.0) }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Projector onto eigenvalue `(−1)^outcome`.
    pub fn projector(&self, outcome: u8) -> CMatrix {
        let sign = if outcome == 0 { 1.0 } else { -1.0 };
        (identity(self.dim()) + &self.matrix * c64(sign, 0.0)) * c64(0.5, 0.0)
    }

    /// Eigenbasis as columns, and for each column the outcome bit.
    fn eigenbasis(&self) -> (CMatrix, Vec<u8>) {
        let (vals, vecs) = hermitian_eigen(&self.matrix);
        let bits = vals.iter().map(|&v| if v > 0.0 { 0 } else { 1 }).collect();
        (vecs, bits)
    }
}

/// Two-setting measurement of one party.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservablePair {
    pub o0: BinaryObservable,
    pub o1: BinaryObservable,
}

impl ObservablePair {
    pub fn new(o0: BinaryObservable, o1: BinaryObservable) -> Result<Self> {
        if o0.dim() != o1.dim() {
            return Err(Error::DimensionMismatch(format!(
                "observable pair of dimensions {} and {}",
                o0.dim(),
                o1.dim()
            )));
        }
        Ok(Self { o0, o1 })
    }

    pub fn equatorial(theta0: f64, theta1: f64) -> Self {
        Self {
            o0: BinaryObservable::equatorial(theta0),
            o1: BinaryObservable::equatorial(theta1),
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Self {
        Self {
            o0: BinaryObservable::random(rng, d),
            o1: BinaryObservable::random(rng, d),
        }
    }

    pub fn get(&self, input: u8) -> &BinaryObservable {
        if input == 0 {
            &self.o0
        } else {
            &self.o1
        }
    }

    pub fn dim(&self) -> usize {
        self.o0.dim()
    }
}

fn party_dims(parties: &[ObservablePair]) -> Vec<usize> {
    parties.iter().map(ObservablePair::dim).collect()
}

/// `½𝓕(B0, B1, C0, C1) = ½[B0⊗(C0+C1) + B1⊗(C0−C1)]`.
fn half_f(b0: &CMatrix, b1: &CMatrix, c0: &CMatrix, c1: &CMatrix) -> CMatrix {
    (b0.kronecker(&(c0 + c1)) + b1.kronecker(&(c0 - c1))) * c64(0.5, 0.0)
}

/// `(K_M, K̄_M)` for any `M ≥ 1`.
fn operator_pair(parties: &[ObservablePair]) -> (CMatrix, CMatrix) {
    let mut k = parties[0].o0.matrix().clone();
    let mut kbar = parties[0].o1.matrix().clone();
    for pair in &parties[1..] {
        let (c0, c1) = (pair.o0.matrix(), pair.o1.matrix());
        let next = half_f(&k, &kbar, c0, c1);
        let next_bar = half_f(&kbar, &k, c1, c0);
        k = next;
        kbar = next_bar;
    }
    (k, kbar)
}

fn require_parties(parties: &[ObservablePair], min: usize) -> Result<()> {
    if parties.len() < min {
        return Err(Error::InvalidParams(format!(
            "need at least {min} parties, got {}",
            parties.len()
        )));
    }
    Ok(())
}

/// The MABK operator `K_M` built recursively.
pub fn mabk_operator(parties: &[ObservablePair]) -> Result<CMatrix> {
    require_parties(parties, 2)?;
    Ok(operator_pair(parties).0)
}

/// The companion operator `K̄_M` of the recursion.
pub fn mabk_companion(parties: &[ObservablePair]) -> Result<CMatrix> {
    require_parties(parties, 2)?;
    Ok(operator_pair(parties).1)
}

/// Value of `f(x)`; `Perp` marks inputs absent from the operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Coefficient {
    Zero,
    One,
    Perp,
}

impl Coefficient {
    /// `(−1)^f` with `(−1)^⊥ = 0`.
    pub fn sign(self) -> f64 {
        match self {
            Self::Zero => 1.0,
            Self::One => -1.0,
            Self::Perp => 0.0,
        }
    }

    pub fn bit(self) -> Option<u8> {
        match self {
            Self::Zero => Some(0),
            Self::One => Some(1),
            Self::Perp => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CoefficientRepr {
    Bit(u8),
    Word(String),
}

impl Serialize for Coefficient {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Zero => CoefficientRepr::Bit(0),
            Self::One => CoefficientRepr::Bit(1),
            Self::Perp => CoefficientRepr::Word("perp".into()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Coefficient {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match CoefficientRepr::deserialize(d)? {
            CoefficientRepr::Bit(0) => Ok(Self::Zero),
            CoefficientRepr::Bit(1) => Ok(Self::One),
            CoefficientRepr::Word(w) if w == "perp" => Ok(Self::Perp),
            _ => Err(serde::de::Error::custom("expected 0, 1 or \"perp\"")),
        }
    }
}

/// `K_M = scale · Σ_x (−1)^{f(x)} ⊗_i O^i_{x_i}`, indexed by `x` with
/// party 1 as the most significant bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableRepr", into = "TableRepr")]
pub struct CoefficientTable {
    parties: usize,
    scale: f64,
    values: Vec<Coefficient>,
}

#[derive(Serialize, Deserialize)]
struct TableRepr {
    #[serde(rename = "M")]
    parties: usize,
    scale: f64,
    values: BTreeMap<String, Coefficient>,
}

impl From<CoefficientTable> for TableRepr {
    fn from(t: CoefficientTable) -> Self {
        let values = t
            .values
            .iter()
            .enumerate()
            .map(|(x, &c)| (bit_string(&index_bits(x, t.parties)), c))
            .collect();
        Self {
            parties: t.parties,
            scale: t.scale,
            values,
        }
    }
}

impl TryFrom<TableRepr> for CoefficientTable {
    type Error = Error;

    fn try_from(r: TableRepr) -> Result<Self> {
        if !(1..=16).contains(&r.parties) || r.values.len() != 1 << r.parties {
            return Err(Error::InvalidParams(format!(
                "table for M={} must list all {} inputs",
                r.parties,
                1usize << r.parties.min(16)
            )));
        }
        let mut values = vec![Coefficient::Perp; 1 << r.parties];
        for (key, c) in r.values {
            let bits = parse_bit_string(&key)?;
            if bits.len() != r.parties {
                return Err(Error::InvalidParams(format!("input '{key}' has wrong length")));
            }
            values[crate::ghz::basis_index(&bits)] = c;
        }
        Ok(Self {
            parties: r.parties,
            scale: r.scale,
            values,
        })
    }
}

impl CoefficientTable {
    pub fn parties(&self) -> usize {
        self.parties
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn get(&self, x: &[u8]) -> Coefficient {
        self.values[crate::ghz::basis_index(x)]
    }

    pub fn by_index(&self, x: usize) -> Coefficient {
        self.values[x]
    }

    pub fn values(&self) -> &[Coefficient] {
        &self.values
    }

    /// Number of inputs with `f(x) ≠ ⊥`.
    pub fn support_size(&self) -> usize {
        self.values.iter().filter(|c| **c != Coefficient::Perp).count()
    }
}

/// Expands the recursion symbolically and reads off `f(x)` and the common
/// magnitude of the surviving terms.
pub fn unroll_coefficients(parties: usize) -> Result<CoefficientTable> {
    if !(2..=10).contains(&parties) {
        return Err(Error::OutOfRange {
            name: "M",
            value: parties as f64,
            expected: "[2, 10]".into(),
        });
    }
    // Coefficients are dyadic rationals, so f64 arithmetic here is exact.
    let mut k: HashMap<usize, f64> = HashMap::from([(0, 1.0)]);
    let mut kbar: HashMap<usize, f64> = HashMap::from([(1, 1.0)]);
    for _ in 1..parties {
        let mut next: HashMap<usize, f64> = HashMap::new();
        let mut next_bar: HashMap<usize, f64> = HashMap::new();
        for (&x, &c) in &k {
            *next.entry(x << 1).or_default() += 0.5 * c;
            *next.entry(x << 1 | 1).or_default() += 0.5 * c;
            *next_bar.entry(x << 1).or_default() -= 0.5 * c;
            *next_bar.entry(x << 1 | 1).or_default() += 0.5 * c;
        }
        for (&x, &c) in &kbar {
            *next.entry(x << 1).or_default() += 0.5 * c;
            *next.entry(x << 1 | 1).or_default() -= 0.5 * c;
            *next_bar.entry(x << 1).or_default() += 0.5 * c;
            *next_bar.entry(x << 1 | 1).or_default() += 0.5 * c;
        }
        k = next;
        kbar = next_bar;
    }
    let mut scale = 0.0;
    let mut values = vec![Coefficient::Perp; 1 << parties];
    for (x, &c) in &k {
        if c == 0.0 {
            continue;
        }
        if scale == 0.0 {
            scale = c.abs();
        } else if c.abs() != scale {
            return Err(Error::InvalidParams(format!(
                "unequal coefficient magnitudes {scale} and {} for M={parties}",
                c.abs()
            )));
        }
        values[*x] = if c > 0.0 { Coefficient::Zero } else { Coefficient::One };
    }
    Ok(CoefficientTable {
        parties,
        scale,
        values,
    })
}

/// `scale · Σ_x (−1)^{f(x)} ⊗_i O^i_{x_i}`.
pub fn assemble_operator(table: &CoefficientTable, parties: &[ObservablePair]) -> Result<CMatrix> {
    if parties.len() != table.parties {
        return Err(Error::DimensionMismatch(format!(
            "table for {} parties, {} observables given",
            table.parties,
            parties.len()
        )));
    }
    let d: usize = party_dims(parties).iter().product();
    let mut out = CMatrix::zeros(d, d);
    for (x, c) in table.values.iter().enumerate() {
        if *c == Coefficient::Perp {
            continue;
        }
        let bits = index_bits(x, table.parties);
        let factors: Vec<&CMatrix> = parties
            .iter()
            .zip(&bits)
            .map(|(p, &b)| p.get(b).matrix())
            .collect();
        out += kron(&factors)? * c64(c.sign() * table.scale, 0.0);
    }
    Ok(out)
}

/// Expected size of the non-⊥ support.
pub fn expected_support(parties: usize) -> usize {
    if parties.is_multiple_of(2) {
        1 << parties
    } else {
        1 << (parties - 1)
    }
}

/// Measurement settings together with the unrolled winning condition.
#[derive(Debug, Clone)]
pub struct MabkGame {
    parties: Vec<ObservablePair>,
    coeffs: CoefficientTable,
    operator: CMatrix,
}

impl MabkGame {
    pub fn new(parties: Vec<ObservablePair>) -> Result<Self> {
        let coeffs = unroll_coefficients(parties.len())?;
        let operator = mabk_operator(&parties)?;
        let support = coeffs.support_size();
        if support != expected_support(parties.len()) {
            return Err(Error::InvalidParams(format!(
                "support {support} ≠ {} for M={}",
                expected_support(parties.len()),
                parties.len()
            )));
        }
        let gap = (assemble_operator(&coeffs, &parties)? - &operator).norm();
        if gap > 1e-10 {
            return Err(Error::InvalidParams(format!(
                "unrolled operator differs from the recursion by {gap:e}"
            )));
        }
        Ok(Self {
            parties,
            coeffs,
            operator,
        })
    }

    pub fn num_parties(&self) -> usize {
        self.parties.len()
    }

    pub fn parties(&self) -> &[ObservablePair] {
        &self.parties
    }

    pub fn coeffs(&self) -> &CoefficientTable {
        &self.coeffs
    }

    pub fn operator(&self) -> &CMatrix {
        &self.operator
    }

    pub fn local_dims(&self) -> Vec<usize> {
        party_dims(&self.parties)
    }

    fn check_state(&self, rho: &DensityMatrix) -> Result<()> {
        if rho.dims() != self.local_dims().as_slice() {
            return Err(Error::DimensionMismatch(format!(
                "state dims {:?} vs observable dims {:?}",
                rho.dims(),
                self.local_dims()
            )));
        }
        Ok(())
    }
}

/// `2^{(4−M)/2}·Re Tr[K_M ρ]`.
pub fn mabk_value_signed(rho: &DensityMatrix, game: &MabkGame) -> Result<f64> {
    game.check_state(rho)?;
    let m = game.num_parties() as f64;
    Ok(2f64.powf((4.0 - m) / 2.0) * rho.expectation(&game.operator)?.re)
}

/// `β_M = 2^{(4−M)/2}|Tr[K_M ρ]|`.
pub fn mabk_value(rho: &DensityMatrix, game: &MabkGame) -> Result<f64> {
    Ok(mabk_value_signed(rho, game)?.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WinOutcome {
    Won,
    Lost,
    NotPlayed,
}

pub fn parity(bits: &[u8]) -> u8 {
    bits.iter().fold(0, |acc, b| acc ^ (b & 1))
}

pub fn win_predicate(x: &[u8], a: &[u8], game: &MabkGame) -> Result<WinOutcome> {
    let m = game.num_parties();
    if x.len() != m || a.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "inputs {} and outputs {} for M={m}",
            x.len(),
            a.len()
        )));
    }
    Ok(match game.coeffs.get(x).bit() {
        None => WinOutcome::NotPlayed,
        Some(f) if parity(a) == f => WinOutcome::Won,
        Some(_) => WinOutcome::Lost,
    })
}

/// `P(a|x)` indexed by the output string `a` (party 1 most significant);
/// outcome 0 is eigenvalue `+1`.
pub fn outcome_distribution(
    rho: &DensityMatrix,
    parties: &[ObservablePair],
    x: &[u8],
) -> Result<Vec<f64>> {
    let dims = party_dims(parties);
    if rho.dims() != dims.as_slice() || x.len() != parties.len() {
        return Err(Error::DimensionMismatch(format!(
            "state dims {:?}, observable dims {dims:?}, {} inputs",
            rho.dims(),
            x.len()
        )));
    }
    let bases: Vec<(CMatrix, Vec<u8>)> = parties
        .iter()
        .zip(x)
        .map(|(p, &b)| p.get(b).eigenbasis())
        .collect();
    // U†ρU with U = ⊗ V_i, one factor at a time on each side.
    let mut half = rho.data().clone();
    for (k, (v, _)) in bases.iter().enumerate() {
        half = apply_local_left(&half, &dims, k, &v.adjoint());
    }
    let mut full = half.adjoint();
    for (k, (v, _)) in bases.iter().enumerate() {
        full = apply_local_left(&full, &dims, k, &v.adjoint());
    }
    let m = parties.len();
    let mut probs = vec![0.0; 1 << m];
    let mut digits = vec![0usize; m];
    for i in 0..full.nrows() {
        let a = digits
            .iter()
            .zip(&bases)
            .fold(0, |acc, (&dgt, (_, bits))| (acc << 1) | bits[dgt] as usize);
        probs[a] += full[(i, i)].re;
        for k in (0..m).rev() {
            digits[k] += 1;
            if digits[k] < dims[k] {
                break;
            }
            digits[k] = 0;
        }
    }
    for p in &mut probs {
        *p = p.max(0.0);
    }
    Ok(probs)
}

/// Exact winning probability with `x` uniform over all `2^M` inputs and
/// inputs outside the support counted as losses.
pub fn winning_probability_exact(rho: &DensityMatrix, game: &MabkGame) -> Result<f64> {
    game.check_state(rho)?;
    let m = game.num_parties();
    let mut total = 0.0;
    for x in 0..1usize << m {
        let Some(f) = game.coeffs.by_index(x).bit() else {
            continue;
        };
        let probs = outcome_distribution(rho, &game.parties, &index_bits(x, m))?;
        total += probs
            .iter()
            .enumerate()
            .filter(|(a, _)| (a.count_ones() as u8 & 1) == f)
            .map(|(_, p)| p)
            .sum::<f64>();
    }
    Ok(total / (1u64 << m) as f64)
}

/// `(p_min, p_max)`: winning probabilities at `β = 2` and `β = 2√2`.
pub fn p_bounds(parties: usize) -> (f64, f64) {
    let m = parties as f64;
    let fl = (parties / 2) as f64;
    let base = 2f64.powf(2.0 * fl - m - 1.0);
    (
        base + 2f64.powf(fl - m / 2.0 - 2.0),
        base + 2f64.powf(fl - m / 2.0 - 1.5),
    )
}

/// Affine β(ω) without range checks; negative values correspond to
/// `Tr[K_M ρ] < 0`.
pub fn beta_from_omega_signed(omega: f64, parties: usize) -> f64 {
    if parties.is_multiple_of(2) {
        8.0 * omega - 4.0
    } else {
        8.0 * SQRT_2 * omega - 2.0 * SQRT_2
    }
}

const RANGE_SLACK: f64 = 1e-12;

pub fn beta_from_omega(omega: f64, parties: usize) -> Result<f64> {
    let (lo, hi) = p_bounds(parties);
    if !(omega >= lo - RANGE_SLACK && omega <= hi + RANGE_SLACK) {
        return Err(Error::OutOfRange {
            name: "omega",
            value: omega,
            expected: format!("[{lo}, {hi}]"),
        });
    }
    Ok(beta_from_omega_signed(omega, parties))
}

pub fn omega_from_beta(beta: f64, parties: usize) -> Result<f64> {
    if !(2.0 - RANGE_SLACK..=2.0 * SQRT_2 + RANGE_SLACK).contains(&beta) {
        return Err(Error::OutOfRange {
            name: "beta",
            value: beta,
            expected: format!("[2, {}]", 2.0 * SQRT_2),
        });
    }
    Ok(if parties.is_multiple_of(2) {
        (beta + 4.0) / 8.0
    } else {
        (beta + 2.0 * SQRT_2) / (8.0 * SQRT_2)
    })
}

/// Winning probability and MABK value of one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameStats {
    pub omega: f64,
    pub beta: f64,
    #[serde(rename = "M")]
    pub parties: usize,
}

impl GameStats {
    pub fn new(omega: f64, beta: f64, parties: usize) -> Result<Self> {
        let implied = beta_from_omega_signed(omega, parties).abs();
        if (implied - beta).abs() > 1e-9 || !(0.0..=1.0).contains(&omega) {
            return Err(Error::InvalidParams(format!(
                "ω = {omega} implies β = {implied}, got {beta}"
            )));
        }
        Ok(Self {
            omega,
            beta,
            parties,
        })
    }

    pub fn measure(rho: &DensityMatrix, game: &MabkGame) -> Result<Self> {
        let omega = winning_probability_exact(rho, game)?;
        let beta = mabk_value(rho, game)?;
        Self::new(omega, beta, game.num_parties())
    }
}

const RESTARTS: u64 = 16;
const MAX_SWEEPS: usize = 10_000;
const SWEEP_TOL: f64 = 1e-10;

/// `Σ_x (−1)^{f(x)} cos(Σ_i θ_{i,x_i})`, the unscaled GHZ correlator sum
/// for equatorial settings.
fn ghz_objective(signed: &[(usize, f64)], angles: &[f64], m: usize) -> f64 {
    signed
        .iter()
        .map(|&(x, s)| s * phase_sum(x, angles, m).cos())
        .sum()
}

fn phase_sum(x: usize, angles: &[f64], m: usize) -> f64 {
    (0..m).map(|i| angles[2 * i + ((x >> (m - 1 - i)) & 1)]).sum()
}

/// Equatorial angles `(θ_0^i, θ_1^i)` maximizing `β_M` on the GHZ state,
/// with the number of coordinate sweeps used by the best restart.
pub fn optimal_angles(parties: usize) -> Result<(Vec<(f64, f64)>, usize)> {
    if !(2..=8).contains(&parties) {
        return Err(Error::OutOfRange {
            name: "M",
            value: parties as f64,
            expected: "[2, 8]".into(),
        });
    }
    let table = unroll_coefficients(parties)?;
    let signed: Vec<(usize, f64)> = table
        .values()
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != Coefficient::Perp)
        .map(|(x, c)| (x, c.sign()))
        .collect();
    let m = parties;
    let mut best: Option<(f64, Vec<f64>, usize)> = None;
    for seed in 0..RESTARTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut angles: Vec<f64> = (0..2 * m)
            .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
            .collect();
        let mut value = ghz_objective(&signed, &angles, m);
        let mut sweeps = 0;
        while sweeps < MAX_SWEEPS {
            sweeps += 1;
            for coord in 0..2 * m {
                let (party, setting) = (coord / 2, coord % 2);
                let (mut a, mut b) = (0.0, 0.0);
                for &(x, s) in &signed {
                    if (x >> (m - 1 - party)) & 1 != setting {
                        continue;
                    }
                    let rest = phase_sum(x, &angles, m) - angles[coord];
                    a += s * rest.cos();
                    b -= s * rest.sin();
                }
                angles[coord] = b.atan2(a);
            }
            let next = ghz_objective(&signed, &angles, m);
            let gain = next - value;
            value = next;
            if gain.abs() < SWEEP_TOL {
                break;
            }
        }
        if best.as_ref().is_none_or(|(v, _, _)| value > *v) {
            best = Some((value, angles, sweeps));
        }
    }
    let (_, angles, sweeps) = best.expect("at least one restart");
    let pairs = angles.chunks(2).map(|c| (c[0], c[1])).collect();
    Ok((pairs, sweeps))
}

/// Equatorial qubit settings reaching `β_M = 2√2` on the GHZ state.
pub fn optimal_observables(parties: usize) -> Result<Vec<ObservablePair>> {
    let (angles, sweeps) = optimal_angles(parties)?;
    let pairs: Vec<ObservablePair> = angles
        .iter()
        .map(|&(t0, t1)| ObservablePair::equatorial(t0, t1))
        .collect();
    let game = MabkGame::new(pairs.clone())?;
    let beta = mabk_value(&ghz_state(parties)?.density(), &game)?;
    let target = 2.0 * SQRT_2;
    if beta < target - 1e-6 {
        return Err(Error::NonConvergence {
            iterations: sweeps,
            best: beta,
            residual: target - beta,
        });
    }
    Ok(pairs)
}

/// Frobenius distance between `K_M` and `½𝓕(K_{M−m}, K̄_{M−m}, T_0, T_1)`,
/// where `T_0, T_1` are the composite observables of the last `m` parties.
pub fn verify_bipartition_factorization(cut: usize, parties: &[ObservablePair]) -> Result<f64> {
    let m_total = parties.len();
    require_parties(parties, 2)?;
    if cut < 1 || cut > m_total - 1 {
        return Err(Error::OutOfRange {
            name: "m",
            value: cut as f64,
            expected: format!("[1, {}]", m_total - 1),
        });
    }
    let split = m_total - cut;
    let (k, kbar) = operator_pair(&parties[..split]);
    let last = &parties[m_total - 1];
    let mut t0 = last.o0.matrix().clone();
    let mut t1 = last.o1.matrix().clone();
    for pair in parties[split..m_total - 1].iter().rev() {
        let (b0, b1) = (pair.o0.matrix(), pair.o1.matrix());
        let next0 = half_f(b0, b1, &t0, &t1);
        let next1 = (b0.kronecker(&(&t1 - &t0)) + b1.kronecker(&(&t0 + &t1))) * c64(0.5, 0.0);
        t0 = next0;
        t1 = next1;
    }
    let full = operator_pair(parties).0;
    Ok((full - half_f(&k, &kbar, &t0, &t1)).norm())
}
