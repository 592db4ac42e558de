//! Dense complex linear algebra and entropy primitives for small multi-qubit
//! systems (total dimension up to 2^8).
//!
//! Subsystems are indexed from 0, with subsystem 0 the leftmost tensor factor
//! (most significant digit of a flat basis index). All entropies are in bits.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_range, Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Tolerance used for the Hermiticity, trace and positivity checks.
pub const STATE_TOL: f64 = 1e-10;

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c64(0., 0.), c64(1., 0.), c64(1., 0.), c64(0., 0.)])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c64(0., 0.), c64(0., -1.), c64(0., 1.), c64(0., 0.)])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c64(1., 0.), c64(0., 0.), c64(0., 0.), c64(-1., 0.)])
}

/// Kronecker product of square factors in list order.
pub fn kron(factors: &[&CMatrix]) -> Result<CMatrix> {
    let (first, rest) = factors.split_first().ok_or(Error::EmptyFactors)?;
    for f in factors {
        if !f.is_square() {
            return Err(Error::NotSquare {
                rows: f.nrows(),
                cols: f.ncols(),
            });
        }
    }
    Ok(rest.iter().fold((*first).clone(), |acc, f| acc.kronecker(*f)))
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let herm = (m + m.adjoint()) * c64(0.5, 0.0);
    let eig = SymmetricEigen::new(herm);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(m.nrows(), m.ncols(), |r, k| eig.eigenvectors[(r, order[k])]);
    (values, vectors)
}

/// Applies a real function to the spectrum of a Hermitian matrix.
pub fn hermitian_map(m: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let (values, vectors) = hermitian_eigen(m);
    let scaled = CMatrix::from_fn(vectors.nrows(), vectors.ncols(), |r, k| {
        vectors[(r, k)] * f(values[k])
    });
    &scaled * vectors.adjoint()
}

pub(crate) fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entry of `m - m†` in absolute value.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

fn validate_dims(dims: &[usize], side: usize) -> Result<()> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::DimensionMismatch(format!("bad subsystem dims {dims:?}")));
    }
    let prod: usize = dims.iter().product();
    if prod != side {
        return Err(Error::DimensionMismatch(format!(
            "dims {dims:?} multiply to {prod}, matrix side is {side}"
        )));
    }
    Ok(())
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

/// Trace-one positive semidefinite matrix with a tensor-factor layout.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    data: CMatrix,
    dims: Vec<usize>,
}

impl DensityMatrix {
    pub fn new(data: CMatrix, dims: Vec<usize>) -> Result<Self> {
        if !data.is_square() {
            return Err(Error::NotSquare {
                rows: data.nrows(),
                cols: data.ncols(),
            });
        }
        validate_dims(&dims, data.nrows())?;
        let defect = hermiticity_defect(&data);
        if defect > STATE_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (defect {defect:e})")));
        }
        let tr = data.trace();
        if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} is not 1")));
        }
        let (values, _) = hermitian_eigen(&data);
        if values[0] < -STATE_TOL {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {:e}",
                values[0]
            )));
        }
        Ok(Self { data, dims })
    }

    /// Internal constructor for results of invariant-preserving maps.
    pub(crate) fn from_parts(data: CMatrix, dims: Vec<usize>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.nrows());
        let data = (&data + data.adjoint()) * c64(0.5, 0.0);
        Self { data, dims }
    }

    pub fn from_pure(psi: &PureState) -> Self {
        let a = psi.amplitudes();
        Self::from_parts(a * a.adjoint(), psi.dims().to_vec())
    }

    pub fn maximally_mixed(dims: Vec<usize>) -> Self {
        let d: usize = dims.iter().product();
        Self::from_parts(identity(d) * c64(1.0 / d as f64, 0.0), dims)
    }

    pub fn qubits(n: usize) -> Vec<usize> {
        vec![2; n]
    }

    pub fn data(&self) -> &CMatrix {
        &self.data
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn num_subsystems(&self) -> usize {
        self.dims.len()
    }

    /// Spectrum, ascending, with tiny negative values clamped to zero.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let (values, _) = hermitian_eigen(&self.data);
        values
            .into_iter()
            .map(|v| if (-STATE_TOL..0.0).contains(&v) { 0.0 } else { v })
            .collect()
    }

    /// `Tr[op ρ]`.
    pub fn expectation(&self, op: &CMatrix) -> Result<C64> {
        if op.shape() != self.data.shape() {
            return Err(Error::DimensionMismatch(format!(
                "operator {:?} vs state {:?}",
                op.shape(),
                self.data.shape()
            )));
        }
        // Tr[AB] = sum_ij A_ij B_ji
        let mut acc = c64(0.0, 0.0);
        for i in 0..op.nrows() {
            for j in 0..op.ncols() {
                acc += op[(i, j)] * self.data[(j, i)];
            }
        }
        Ok(acc)
    }

    /// `(1 - λ) self + λ other`.
    pub fn mix(&self, other: &Self, lambda: f64) -> Result<Self> {
        check_range("lambda", lambda, 0.0, 1.0)?;
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch(format!(
                "{:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        let data = &self.data * c64(1.0 - lambda, 0.0) + &other.data * c64(lambda, 0.0);
        Ok(Self::from_parts(data, self.dims.clone()))
    }

    pub fn tensor(&self, other: &Self) -> Self {
        let dims = self.dims.iter().chain(&other.dims).copied().collect();
        Self::from_parts(self.data.kronecker(&other.data), dims)
    }
}

/// Normalized state vector with a tensor-factor layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: CVector,
    dims: Vec<usize>,
}

impl PureState {
    pub fn new(amplitudes: CVector, dims: Vec<usize>) -> Result<Self> {
        validate_dims(&dims, amplitudes.len())?;
        let norm2 = amplitudes.norm_squared();
        if (norm2 - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidState(format!("squared norm {norm2}")));
        }
        Ok(Self { amplitudes, dims })
    }

    pub(crate) fn from_parts(amplitudes: CVector, dims: Vec<usize>) -> Self {
        Self { amplitudes, dims }
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    pub fn density(&self) -> DensityMatrix {
        DensityMatrix::from_pure(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryMatrix {
    data: CMatrix,
}

impl UnitaryMatrix {
    pub fn new(data: CMatrix) -> Result<Self> {
        if !data.is_square() {
            return Err(Error::NotSquare {
                rows: data.nrows(),
                cols: data.ncols(),
            });
        }
        let defect = (&data * data.adjoint() - identity(data.nrows())).norm();
        if defect > STATE_TOL {
            return Err(Error::InvalidState(format!("not unitary (defect {defect:e})")));
        }
        Ok(Self { data })
    }

    pub fn data(&self) -> &CMatrix {
        &self.data
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn apply(&self, psi: &PureState) -> Result<PureState> {
        if psi.amplitudes.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "unitary {} vs state {}",
                self.dim(),
                psi.amplitudes.len()
            )));
        }
        Ok(PureState::from_parts(&self.data * &psi.amplitudes, psi.dims.clone()))
    }

    /// `U ρ U†`.
    pub fn conjugate(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.dim() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "unitary {} vs state {}",
                self.dim(),
                rho.dim()
            )));
        }
        let data = &self.data * &rho.data * self.data.adjoint();
        Ok(DensityMatrix::from_parts(data, rho.dims.clone()))
    }
}

fn check_subsystems(set: &[usize], n: usize, what: &str) -> Result<()> {
    let mut seen = vec![false; n];
    for &k in set {
        if k >= n {
            return Err(Error::InvalidSubsystems(format!(
                "{what}: index {k} out of range for {n} subsystems"
            )));
        }
        if seen[k] {
            return Err(Error::InvalidSubsystems(format!("{what}: duplicate index {k}")));
        }
        seen[k] = true;
    }
    Ok(())
}

/// Flat-index offsets contributed by each multi-index over `subset`.
fn subset_offsets(dims: &[usize], subset: &[usize]) -> Vec<usize> {
    let st = strides(dims);
    let mut offsets = vec![0usize];
    for &k in subset {
        let mut next = Vec::with_capacity(offsets.len() * dims[k]);
        for &o in &offsets {
            for i in 0..dims[k] {
                next.push(o + i * st[k]);
            }
        }
        offsets = next;
    }
    offsets
}

/// Reduced state on `keep`; kept factors stay in ascending index order.
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    if keep.is_empty() {
        return Err(Error::InvalidSubsystems("empty keep set".into()));
    }
    let n = rho.num_subsystems();
    check_subsystems(keep, n, "keep")?;
    let mut keep: Vec<usize> = keep.to_vec();
    keep.sort_unstable();
    let traced: Vec<usize> = (0..n).filter(|k| !keep.contains(k)).collect();
    let kept_off = subset_offsets(&rho.dims, &keep);
    let traced_off = subset_offsets(&rho.dims, &traced);
    let dk = kept_off.len();
    let mut out = CMatrix::zeros(dk, dk);
    for (r, &or) in kept_off.iter().enumerate() {
        for (c, &oc) in kept_off.iter().enumerate() {
            let mut acc = c64(0.0, 0.0);
            for &t in &traced_off {
                acc += rho.data[(or + t, oc + t)];
            }
            out[(r, c)] = acc;
        }
    }
    let dims = keep.iter().map(|&k| rho.dims[k]).collect();
    Ok(DensityMatrix::from_parts(out, dims))
}

/// Reorders tensor factors: new factor `k` is old factor `order[k]`.
pub fn permute_subsystems(rho: &DensityMatrix, order: &[usize]) -> Result<DensityMatrix> {
    let n = rho.num_subsystems();
    if order.len() != n {
        return Err(Error::InvalidSubsystems(format!(
            "permutation of length {} for {n} subsystems",
            order.len()
        )));
    }
    check_subsystems(order, n, "order")?;
    // Flat new index -> flat old index.
    let map = subset_offsets(&rho.dims, order);
    let d = rho.dim();
    let data = CMatrix::from_fn(d, d, |r, c| rho.data[(map[r], map[c])]);
    let dims = order.iter().map(|&k| rho.dims[k]).collect();
    Ok(DensityMatrix::from_parts(data, dims))
}

fn entropy_of_spectrum(values: &[f64]) -> f64 {
    values
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| -v * v.log2())
        .sum::<f64>()
        .max(0.0)
}

pub fn von_neumann_entropy(rho: &DensityMatrix) -> f64 {
    let h = entropy_of_spectrum(&rho.eigenvalues());
    h.min((rho.dim() as f64).log2())
}

fn complement(n: usize, set: &[usize]) -> Vec<usize> {
    (0..n).filter(|k| !set.contains(k)).collect()
}

/// `H(A|B) = H(AB) − H(B)` for a partition `(a, b)` of all subsystems.
pub fn conditional_entropy(rho: &DensityMatrix, a: &[usize], b: &[usize]) -> Result<f64> {
    let n = rho.num_subsystems();
    check_subsystems(a, n, "A")?;
    check_subsystems(b, n, "B")?;
    if a.is_empty() {
        return Err(Error::InvalidSubsystems("A is empty".into()));
    }
    if a.iter().any(|k| b.contains(k)) {
        return Err(Error::InvalidSubsystems("A and B overlap".into()));
    }
    if a.len() + b.len() != n {
        return Err(Error::InvalidSubsystems("A ∪ B does not cover all subsystems".into()));
    }
    let h_ab = von_neumann_entropy(rho);
    let h_b = if b.is_empty() {
        0.0
    } else {
        von_neumann_entropy(&partial_trace(rho, b)?)
    };
    Ok(h_ab - h_b)
}

/// `I(A⟩B) = H(B) − H(AB)` with `B` the complement of `a`.
pub fn coherent_information(rho: &DensityMatrix, a: &[usize]) -> Result<f64> {
    let b = complement(rho.num_subsystems(), a);
    Ok(-conditional_entropy(rho, a, &b)?)
}

/// `F(ρ,σ) = ‖√ρ √σ‖₁²`.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} vs {}",
            rho.dim(),
            sigma.dim()
        )));
    }
    Ok(fidelity_unnormalized(rho.data(), sigma.data()).clamp(0.0, 1.0))
}

/// `‖√P √Q‖₁²` for positive semidefinite `P`, `Q` of any trace.
pub(crate) fn fidelity_unnormalized(p: &CMatrix, q: &CMatrix) -> f64 {
    let sp = hermitian_map(p, |v| v.max(0.0).sqrt());
    let inner = &sp * q * &sp;
    let (values, _) = hermitian_eigen(&inner);
    let root: f64 = values.iter().map(|v| v.max(0.0).sqrt()).sum();
    root * root
}

pub(crate) fn h2(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}

pub fn binary_entropy(p: f64) -> Result<f64> {
    check_range("p", p, 0.0, 1.0)?;
    Ok(h2(p))
}

#[derive(Debug, Clone, Copy)]
pub struct MaxEntropyOptions {
    pub max_iterations: usize,
    pub rel_tol: f64,
}

impl Default for MaxEntropyOptions {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            rel_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MaxEntropyEstimate {
    /// `H_max(A|B)` in bits.
    pub bits: f64,
    pub iterations: usize,
    /// Relative optimality gap of the final iterate (concavity bound).
    pub residual: f64,
    /// `log2 F` after each accepted iterate; nondecreasing.
    pub history: Vec<f64>,
}

/// Non-smooth conditional max-entropy
/// `H_max(A|B) = sup_σ log2 F(ρ_AB, I_A ⊗ σ_B)`, `B` the complement of `a`.
pub fn max_entropy_conditional(rho: &DensityMatrix, a: &[usize]) -> Result<MaxEntropyEstimate> {
    max_entropy_conditional_with(rho, a, MaxEntropyOptions::default())
}

/// Fidelity ascent over σ_B.
///
/// The root fidelity `G(σ) = Tr√(√ρ (I⊗σ) √ρ)` is concave in σ and
/// homogeneous of degree ½, so `Tr[σ ∇G] = G/2`. Each step moves towards
/// `σ^½ ∇G σ^½ / (G/2)` (an ascent direction) with backtracking on the
/// segment, which keeps the iterates monotone. The gap
/// `λ_max(∇G) − G/2` bounds the distance to the optimum.
pub fn max_entropy_conditional_with(
    rho: &DensityMatrix,
    a: &[usize],
    opts: MaxEntropyOptions,
) -> Result<MaxEntropyEstimate> {
    let n = rho.num_subsystems();
    if rho.dim() > 256 {
        return Err(Error::DimensionMismatch(format!(
            "dimension {} exceeds the 256 limit",
            rho.dim()
        )));
    }
    check_subsystems(a, n, "A")?;
    if a.is_empty() {
        return Err(Error::InvalidSubsystems("A is empty".into()));
    }
    let mut a_sorted = a.to_vec();
    a_sorted.sort_unstable();
    let b = complement(n, &a_sorted);
    let order: Vec<usize> = a_sorted.iter().chain(&b).copied().collect();
    let rho = permute_subsystems(rho, &order)?;
    let d_a: usize = rho.dims()[..a_sorted.len()].iter().product();
    let d_b = rho.dim() / d_a;
    let sqrt_rho = hermitian_map(rho.data(), |v| v.max(0.0).sqrt());

    if b.is_empty() {
        let g: f64 = rho.eigenvalues().iter().map(|v| v.max(0.0).sqrt()).sum();
        let bits = 2.0 * g.log2();
        return Ok(MaxEntropyEstimate {
            bits,
            iterations: 0,
            residual: 0.0,
            history: vec![bits],
        });
    }

    let eye_a = identity(d_a);
    let root_fidelity = |sigma: &CMatrix| -> f64 {
        let x = &sqrt_rho * eye_a.kronecker(sigma) * &sqrt_rho;
        hermitian_eigen(&x).0.iter().map(|v| v.max(0.0).sqrt()).sum()
    };
    let gradient = |sigma: &CMatrix| -> (f64, CMatrix) {
        let x = &sqrt_rho * eye_a.kronecker(sigma) * &sqrt_rho;
        let (values, vectors) = hermitian_eigen(&x);
        let top = values.last().copied().unwrap_or(0.0).max(0.0);
        let g: f64 = values.iter().map(|v| v.max(0.0).sqrt()).sum();
        let cut = top * 1e-13;
        let scaled = CMatrix::from_fn(vectors.nrows(), vectors.ncols(), |r, k| {
            if values[k] > cut {
                vectors[(r, k)] / values[k].sqrt()
            } else {
                c64(0.0, 0.0)
            }
        });
        let x_inv_half = &scaled * vectors.adjoint();
        let y = &sqrt_rho * x_inv_half * &sqrt_rho;
        let mut grad = CMatrix::zeros(d_b, d_b);
        for i in 0..d_a {
            grad += y.view((i * d_b, i * d_b), (d_b, d_b));
        }
        (g, grad * c64(0.5, 0.0))
    };

    let mut sigma = identity(d_b) * c64(1.0 / d_b as f64, 0.0);
    let mut history = Vec::new();
    let mut residual = f64::INFINITY;
    let mut best = 0.0;
    for iter in 0..opts.max_iterations {
        let (g, grad) = gradient(&sigma);
        best = 2.0 * g.log2();
        history.push(best);
        let top = hermitian_eigen(&grad).0.last().copied().unwrap_or(0.0);
        residual = ((top - g / 2.0) / g).max(0.0);
        if residual <= opts.rel_tol {
            return Ok(MaxEntropyEstimate {
                bits: best,
                iterations: iter,
                residual,
                history,
            });
        }
        let half = hermitian_map(&sigma, |v| v.max(0.0).sqrt());
        let mut target = &half * &grad * &half;
        target = (&target + target.adjoint()) * c64(0.5, 0.0);
        let tr = target.trace().re;
        target /= c64(tr, 0.0);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..50 {
            let cand = &sigma * c64(1.0 - step, 0.0) + &target * c64(step, 0.0);
            if root_fidelity(&cand) >= g {
                sigma = cand;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Err(Error::NonConvergence {
        iterations: history.len(),
        best,
        residual,
    })
}

/// `(I ⊗ op ⊗ I)·m` with `op` acting on subsystem `party` of `dims`.
pub(crate) fn apply_local_left(m: &CMatrix, dims: &[usize], party: usize, op: &CMatrix) -> CMatrix {
    let dk = dims[party];
    let post: usize = dims[party + 1..].iter().product();
    let pre: usize = dims[..party].iter().product();
    let mut out = CMatrix::zeros(m.nrows(), m.ncols());
    for col in 0..m.ncols() {
        for a in 0..pre {
            for b in 0..post {
                let base = a * dk * post + b;
                for i in 0..dk {
                    let mut acc = C64::new(0.0, 0.0);
                    for j in 0..dk {
                        acc += op[(i, j)] * m[(base + j * post, col)];
                    }
                    out[(base + i * post, col)] = acc;
                }
            }
        }
    }
    out
}

/// Random-instance generators used by property checks and the verifier.
pub mod random {
    use super::*;

    fn ginibre<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
        CMatrix::from_fn(rows, cols, |_, _| {
            c64(rng.sample(StandardNormal), rng.sample(StandardNormal))
        })
    }

    /// Full-rank density matrix from the induced (Hilbert–Schmidt) measure.
    pub fn density_matrix<R: Rng + ?Sized>(rng: &mut R, dims: &[usize]) -> DensityMatrix {
        let d: usize = dims.iter().product();
        let g = ginibre(rng, d, d);
        let m = &g * g.adjoint();
        let tr = m.trace();
        DensityMatrix::from_parts(m / tr, dims.to_vec())
    }

    pub fn pure_state<R: Rng + ?Sized>(rng: &mut R, dims: &[usize]) -> PureState {
        let d: usize = dims.iter().product();
        let v = ginibre(rng, d, 1).column(0).into_owned();
        let norm = v.norm();
        PureState::from_parts(v / c64(norm, 0.0), dims.to_vec())
    }

    /// Haar-random unitary (QR of a Ginibre matrix with phase correction).
    pub fn unitary<R: Rng + ?Sized>(rng: &mut R, d: usize) -> CMatrix {
        let qr = ginibre(rng, d, d).qr();
        let (q, r) = (qr.q(), qr.r());
        CMatrix::from_fn(d, d, |i, j| {
            let phase = r[(j, j)] / r[(j, j)].norm();
            q[(i, j)] * phase
        })
    }
}
