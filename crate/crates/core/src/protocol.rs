//! Monte Carlo engine for the test-or-store round protocol, with and
//! without the Jordan-block projection, plus abort-rate estimation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::{certified_rate, CertificationParams, RateCertificate};
use crate::error::{Error, Result};
use crate::ghz::{index_bits, make_source, SourceModel};
use crate::jordan::{
    apply_block_projection, block_distribution, jordan_decompose, JordanDecomposition,
    MIN_OUTCOME_PROBABILITY,
};
use crate::mabk::{
    optimal_observables, outcome_distribution, parity, unroll_coefficients, CoefficientTable,
    ObservablePair,
};
use crate::qmath::DensityMatrix;

/// Stored states are kept only up to these sizes.
pub const STORE_MAX_ROUNDS: u64 = 1000;
pub const STORE_MAX_PARTIES: usize = 4;

/// Salt separating the block-label stream from the round stream.
const BLOCK_STREAM_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// One round; `None` plays the role of ⊥.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub j: u64,
    #[serde(rename = "T")]
    pub t: u8,
    #[serde(rename = "X")]
    pub x: Option<Vec<u8>>,
    #[serde(rename = "A")]
    pub a: Option<Vec<u8>>,
    #[serde(rename = "D")]
    pub d: Option<Vec<usize>>,
    #[serde(rename = "W")]
    pub w: Option<u8>,
}

impl RoundRecord {
    /// `T=0 ⟹ X=A=W=⊥`, `T=1 ⟹ D=⊥`, `W ≠ ⊥ iff T=1`.
    pub fn is_well_formed(&self) -> bool {
        match self.t {
            0 => self.x.is_none() && self.a.is_none() && self.w.is_none(),
            1 => self.d.is_none() && self.x.is_some() && self.a.is_some() && self.w.is_some(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProtocolKind {
    /// Test-or-store rounds.
    #[serde(rename = "1")]
    Plain,
    /// Additionally projects every round onto Jordan blocks.
    #[serde(rename = "2")]
    Projected,
}

#[derive(Debug, Clone)]
pub struct Transcript {
    pub rounds: Vec<RoundRecord>,
    pub w_total: u64,
    pub tests: u64,
    pub aborted: bool,
    pub params: CertificationParams,
    pub seed: u64,
    pub kind: ProtocolKind,
    /// `(j, state)` for storage rounds when the run is small enough.
    pub stored_states: Vec<(u64, DensityMatrix)>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptSummary {
    pub n: u64,
    pub tests: u64,
    #[serde(rename = "W_total")]
    pub w_total: u64,
    pub empirical_omega: Option<f64>,
    pub abort_threshold: f64,
    pub aborted: bool,
    pub seed: u64,
    pub protocol: ProtocolKind,
    pub params: CertificationParams,
}

impl Transcript {
    pub fn summary(&self) -> TranscriptSummary {
        TranscriptSummary {
            n: self.params.n,
            tests: self.tests,
            w_total: self.w_total,
            empirical_omega: (self.tests > 0).then(|| self.w_total as f64 / self.tests as f64),
            abort_threshold: self.params.abort_threshold(),
            aborted: self.aborted,
            seed: self.seed,
            protocol: self.kind,
            params: self.params,
        }
    }

    /// One JSON object per round followed by `{"summary": …}`.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.rounds {
            out.push_str(&serde_json::to_string(r).expect("serializable record"));
            out.push('\n');
        }
        let summary = serde_json::json!({ "summary": self.summary() });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }
}

/// The rate certificate for a transcript that passed the abort test, or
/// `None` when the protocol aborted.
pub fn certify_transcript(transcript: &Transcript) -> Result<Option<RateCertificate>> {
    if transcript.aborted {
        return Ok(None);
    }
    certified_rate(&transcript.params).map(Some)
}

/// Untrusted measurement device.
#[derive(Debug, Clone, PartialEq)]
pub enum DeviceModel {
    /// Equatorial settings maximizing the MABK value on GHZ.
    HonestOptimal,
    /// Fixed per-party observables (any local dimension).
    FixedAngles(Vec<ObservablePair>),
    /// Output string for every input string, indexed with party 1 as the
    /// most significant bit.
    ClassicalDeterministic(Vec<Vec<u8>>),
}

impl DeviceModel {
    pub fn fixed_angles(angles: &[(f64, f64)]) -> Self {
        Self::FixedAngles(
            angles
                .iter()
                .map(|&(a, b)| ObservablePair::equatorial(a, b))
                .collect(),
        )
    }

    /// The same output string whatever the inputs.
    pub fn constant_outputs(bits: &[u8]) -> Self {
        Self::ClassicalDeterministic(vec![bits.to_vec(); 1 << bits.len()])
    }
}

/// Precomputed `P(a|x)` cumulative tables for one effective qubit state.
#[derive(Debug, Clone)]
struct Sampler {
    cumulative: Vec<Vec<f64>>,
}

impl Sampler {
    fn quantum(rho: &DensityMatrix, parties: &[ObservablePair]) -> Result<Self> {
        let m = parties.len();
        let cumulative = (0..1usize << m)
            .map(|x| {
                outcome_distribution(rho, parties, &index_bits(x, m)).map(|p| cumulate(&p))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { cumulative })
    }

    fn classical(table: &[Vec<u8>], m: usize) -> Result<Self> {
        if table.len() != 1 << m || table.iter().any(|a| a.len() != m || a.iter().any(|&b| b > 1)) {
            return Err(Error::InvalidParams(format!(
                "strategy table must map all {} inputs to {m} output bits",
                1usize << m
            )));
        }
        let cumulative = table
            .iter()
            .map(|a| {
                let mut p = vec![0.0; 1 << m];
                p[crate::ghz::basis_index(a)] = 1.0;
                cumulate(&p)
            })
            .collect();
        Ok(Self { cumulative })
    }

    fn sample<R: Rng>(&self, x: usize, rng: &mut R) -> usize {
        draw(&self.cumulative[x], rng)
    }
}

fn cumulate(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    p.iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

/// Index of the first cumulative weight exceeding a uniform draw scaled to
/// the table's total; zero-weight entries are never returned.
fn draw<R: Rng>(cumulative: &[f64], rng: &mut R) -> usize {
    let total = *cumulative.last().expect("non-empty table");
    let u = rng.random::<f64>() * total;
    let mut prev = 0.0;
    let mut last_positive = 0;
    for (i, &c) in cumulative.iter().enumerate() {
        if c > prev {
            if u < c {
                return i;
            }
            last_positive = i;
        }
        prev = c;
    }
    last_positive
}

struct BlockBranch {
    labels: Vec<usize>,
    state: DensityMatrix,
    sampler: Sampler,
}

struct Engine {
    parties: usize,
    coeffs: CoefficientTable,
    params: CertificationParams,
    kind: ProtocolKind,
    plain: Sampler,
    source: DensityMatrix,
    blocks: Option<(Vec<f64>, Vec<BlockBranch>)>,
}

impl Engine {
    fn new(
        source: &SourceModel,
        device: &DeviceModel,
        params: &CertificationParams,
        kind: ProtocolKind,
    ) -> Result<Self> {
        params.validate()?;
        let rho = make_source(source)?;
        let m = rho.num_subsystems();
        if m != params.parties {
            return Err(Error::DimensionMismatch(format!(
                "source has {m} parties, parameters say {}",
                params.parties
            )));
        }
        let coeffs = unroll_coefficients(m)?;
        let observables = match device {
            DeviceModel::HonestOptimal => Some(optimal_observables(m)?),
            DeviceModel::FixedAngles(pairs) => Some(pairs.clone()),
            DeviceModel::ClassicalDeterministic(_) => None,
        };
        let plain = match (&observables, device) {
            (Some(obs), _) => {
                if obs.len() != m {
                    return Err(Error::DimensionMismatch(format!(
                        "{} observable pairs for {m} parties",
                        obs.len()
                    )));
                }
                Sampler::quantum(&rho, obs)?
            }
            (None, DeviceModel::ClassicalDeterministic(table)) => Sampler::classical(table, m)?,
            (None, _) => unreachable!("quantum devices carry observables"),
        };
        let blocks = match (kind, &observables) {
            (ProtocolKind::Projected, Some(obs)) => Some(Self::block_branches(&rho, obs)?),
            _ => None,
        };
        Ok(Self {
            parties: m,
            coeffs,
            params: *params,
            kind,
            plain,
            source: rho,
            blocks,
        })
    }

    fn block_branches(
        rho: &DensityMatrix,
        obs: &[ObservablePair],
    ) -> Result<(Vec<f64>, Vec<BlockBranch>)> {
        let decomps: Vec<JordanDecomposition> =
            obs.iter().map(jordan_decompose).collect::<Result<_>>()?;
        let probs = block_distribution(rho, &decomps)?;
        let counts: Vec<usize> = decomps.iter().map(|d| d.registers.len()).collect();
        let mut weights = Vec::new();
        let mut branches = Vec::new();
        for (idx, &p) in probs.iter().enumerate() {
            if p <= MIN_OUTCOME_PROBABILITY {
                continue;
            }
            let mut labels = vec![0; counts.len()];
            let mut rest = idx;
            for k in (0..counts.len()).rev() {
                labels[k] = rest % counts[k];
                rest /= counts[k];
            }
            let (state, _) = apply_block_projection(rho, &decomps, &labels)?;
            let local: Vec<ObservablePair> = decomps
                .iter()
                .zip(&labels)
                .map(|(d, &r)| d.registers[r].observables().clone())
                .collect();
            let sampler = Sampler::quantum(&state, &local)?;
            weights.push(p);
            branches.push(BlockBranch {
                labels,
                state,
                sampler,
            });
        }
        Ok((cumulate(&weights), branches))
    }

    fn round(&self, seed: u64, j: u64) -> RoundRecord {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j);
        let test = rng.random::<f64>() < self.params.gamma;
        let branch = self.blocks.as_ref().map(|(cum, branches)| {
            let mut block_rng = ChaCha8Rng::seed_from_u64(seed ^ BLOCK_STREAM_SALT);
            block_rng.set_stream(j);
            &branches[draw(cum, &mut block_rng)]
        });
        if test {
            let m = self.parties;
            let x = rng.random_range(0..1usize << m);
            let sampler = branch.map_or(&self.plain, |b| &b.sampler);
            let a = index_bits(sampler.sample(x, &mut rng), m);
            let won = match self.coeffs.by_index(x).bit() {
                Some(f) => parity(&a) == f,
                None => false,
            };
            RoundRecord {
                j,
                t: 1,
                x: Some(index_bits(x, m)),
                a: Some(a),
                d: None,
                w: Some(won as u8),
            }
        } else {
            RoundRecord {
                j,
                t: 0,
                x: None,
                a: None,
                d: branch.map(|b| b.labels.clone()),
                w: None,
            }
        }
    }

    fn run(&self, seed: u64, keep_records: bool) -> Transcript {
        let n = self.params.n;
        let rounds: Vec<RoundRecord> = (0..n).into_par_iter().map(|j| self.round(seed, j)).collect();
        let tests = rounds.iter().filter(|r| r.t == 1).count() as u64;
        let w_total = rounds.iter().filter(|r| r.w == Some(1)).count() as u64;
        let aborted = (w_total as f64) < self.params.abort_threshold();
        let keep_states =
            keep_records && n <= STORE_MAX_ROUNDS && self.parties <= STORE_MAX_PARTIES;
        let stored_states = if keep_states {
            rounds
                .iter()
                .filter(|r| r.t == 0)
                .map(|r| {
                    let state = match (&self.blocks, &r.d) {
                        (Some((_, branches)), Some(labels)) => branches
                            .iter()
                            .find(|b| &b.labels == labels)
                            .map(|b| b.state.clone())
                            .expect("sampled branch"),
                        _ => self.source.clone(),
                    };
                    (r.j, state)
                })
                .collect()
        } else {
            Vec::new()
        };
        Transcript {
            rounds: if keep_records { rounds } else { Vec::new() },
            w_total,
            tests,
            aborted,
            params: self.params,
            seed,
            kind: self.kind,
            stored_states,
            warnings: Vec::new(),
        }
    }
}

/// Runs the test-or-store protocol. Identical inputs give identical
/// transcripts.
pub fn run_protocol(
    source: &SourceModel,
    device: &DeviceModel,
    params: &CertificationParams,
    seed: u64,
) -> Result<Transcript> {
    Ok(Engine::new(source, device, params, ProtocolKind::Plain)?.run(seed, true))
}

/// As [`run_protocol`], with every round first projected onto a Jordan
/// block of each party's observables. Storage rounds record the labels;
/// test rounds measure the projected qubit state.
pub fn run_protocol_with_projection(
    source: &SourceModel,
    device: &DeviceModel,
    params: &CertificationParams,
    seed: u64,
) -> Result<Transcript> {
    if matches!(device, DeviceModel::ClassicalDeterministic(_)) {
        return Err(Error::InvalidParams(
            "block projection needs quantum observables".into(),
        ));
    }
    Ok(Engine::new(source, device, params, ProtocolKind::Projected)?.run(seed, true))
}

/// `z` for a two-sided 95% interval.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbortEstimate {
    pub rate: f64,
    pub lower: f64,
    pub upper: f64,
    pub aborts: u64,
    pub trials: u64,
}

/// Seed of trial `t` derived from the root seed (SplitMix64 finalizer).
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    let mut z = seed ^ trial.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Monte Carlo abort frequency of the plain protocol with a 95% Wilson
/// interval.
pub fn estimate_abort_probability(
    source: &SourceModel,
    device: &DeviceModel,
    params: &CertificationParams,
    trials: u64,
    seed: u64,
) -> Result<AbortEstimate> {
    if trials < 100 {
        return Err(Error::OutOfRange {
            name: "trials",
            value: trials as f64,
            expected: "≥ 100".into(),
        });
    }
    let engine = Engine::new(source, device, params, ProtocolKind::Plain)?;
    let aborts = (0..trials)
        .into_par_iter()
        .filter(|&t| engine.run(trial_seed(seed, t), false).aborted)
        .count() as u64;
    let (lower, upper) = wilson_interval(aborts, trials, Z_95);
    Ok(AbortEstimate {
        rate: aborts as f64 / trials as f64,
        lower,
        upper,
        aborts,
        trials,
    })
}
