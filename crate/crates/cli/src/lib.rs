//! Command-line experiments over the `ghzcert` library.
//!
//! Every subcommand is a pure function of its flags and seed; artifacts are
//! written to `--out-dir` (default taken from `GHZCERT_OUT_DIR`).

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use ghzcert::certify::{
    asymptotic_distill_rate, certified_rate, leading_order_rate, one_shot_distill_bound,
    CertificationParams,
};
use ghzcert::ghz::{ghz_diagonal_state, GhzDiagonalSpec, SourceModel};
use ghzcert::mabk::{
    assemble_operator, mabk_operator, omega_from_beta, p_bounds, unroll_coefficients,
    verify_bipartition_factorization, CoefficientTable, ObservablePair,
};
use ghzcert::protocol::{
    certify_transcript, estimate_abort_probability, run_protocol, run_protocol_with_projection,
    AbortEstimate, DeviceModel, TranscriptSummary,
};
use ghzcert::qmath::{coherent_information, hermitian_eigen, partial_trace, von_neumann_entropy};
use ghzcert::tradeoff::{f_max_linearized, f_piecewise, tangent_coeffs};

pub mod svg;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "GHZCERT_OUT_DIR";

/// Residual tolerance of `verify`.
pub const VERIFY_TOL: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("numerical non-convergence: {0}")]
    NonConvergence(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Verification(_) => 3,
            Self::NonConvergence(_) => 4,
            Self::Io(_) => 1,
        }
    }
}

impl From<ghzcert::Error> for CliError {
    fn from(e: ghzcert::Error) -> Self {
        match e {
            ghzcert::Error::NonConvergence { .. } => Self::NonConvergence(e.to_string()),
            other => Self::Config(other.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Io(std::io::Error::other(e))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "ghzcert", version, about = "Device-independent GHZ distillation certification experiments")]
pub struct Cli {
    /// Directory receiving the artifacts
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Certified rate against the expected winning probability (rate_curve.csv, rate_curve.svg)
    RateCurve(RateCurveArgs),
    /// Monte Carlo run of the protocol (transcript.jsonl, simulate_summary.json)
    Simulate(SimulateArgs),
    /// MABK operator identities on random settings (verify_report.json)
    Verify(VerifyArgs),
    /// Tradeoff function and its tangent on a grid (tradeoff.csv)
    Tradeoff(TradeoffArgs),
    /// Entropies of a GHZ-diagonal state read from JSON (entropy.csv)
    Entropy(EntropyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RateCurveArgs {
    /// Number of parties M
    #[arg(long, default_value_t = 4)]
    pub m: usize,
    /// Test probability γ per round [probability]
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    /// Number of rounds n [rounds]
    #[arg(long, default_value_t = 10_000_000_000)]
    pub n: u64,
    /// Estimation slack δ_est [win probability]
    #[arg(long, default_value_t = 0.0)]
    pub delta_est: f64,
    /// Smoothing parameter ε_smo [probability]
    #[arg(long, default_value_t = 1e-5)]
    pub eps_smo: f64,
    /// Soundness parameter ε_snd [probability]
    #[arg(long, default_value_t = 1e-2)]
    pub eps_snd: f64,
    /// Number of ω_exp grid points
    #[arg(long, default_value_t = 201)]
    pub points: usize,
    /// Lower end of the ω_exp grid [win probability; default p_min]
    #[arg(long)]
    pub omega_min: Option<f64>,
    /// Upper end of the ω_exp grid [win probability; default p_max]
    #[arg(long)]
    pub omega_max: Option<f64>,
    /// Also write an SVG plot of the leading-order curve
    #[arg(long)]
    pub svg: bool,
}

impl Default for RateCurveArgs {
    fn default() -> Self {
        Self {
            m: 4,
            gamma: 0.5,
            n: 10_000_000_000,
            delta_est: 0.0,
            eps_smo: 1e-5,
            eps_snd: 1e-2,
            points: 201,
            omega_min: None,
            omega_max: None,
            svg: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateRow {
    pub omega_exp: f64,
    /// Bits per round.
    pub leading_order_rate: f64,
    /// Bits per round including the finite-size term.
    pub rate_per_round: f64,
    pub pt_star: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeviceKind {
    /// Optimal equatorial settings
    Honest,
    /// Classical device answering all zeros
    ZeroOutputs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Number of parties M
    #[arg(long, default_value_t = 4)]
    pub m: usize,
    /// Number of rounds n [rounds]
    #[arg(long, default_value_t = 10_000)]
    pub n: u64,
    /// Test probability γ per round [probability]
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    /// Werner visibility of the GHZ source [0, 1]
    #[arg(long, default_value_t = 1.0)]
    pub visibility: f64,
    /// Estimation slack δ_est [win probability]
    #[arg(long, default_value_t = 0.02)]
    pub delta_est: f64,
    /// Expected winning probability ω_exp [win probability; default: honest value at the visibility]
    #[arg(long)]
    pub omega_exp: Option<f64>,
    /// Smoothing parameter ε_smo [probability]
    #[arg(long, default_value_t = 1e-5)]
    pub eps_smo: f64,
    /// Soundness parameter ε_snd [probability]
    #[arg(long, default_value_t = 1e-2)]
    pub eps_snd: f64,
    /// Monte Carlo trials for the abort-rate estimate (0 disables, otherwise ≥ 100)
    #[arg(long, default_value_t = 0)]
    pub trials: u64,
    /// Root seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Protocol variant: 1 plain, 2 with block projection
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub protocol: u8,
    /// Measurement device
    #[arg(long, value_enum, default_value_t = DeviceKind::Honest)]
    pub device: DeviceKind,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub summary: TranscriptSummary,
    pub device: DeviceKind,
    pub visibility: f64,
    pub certified_rate_bits: Option<f64>,
    pub certificate_note: Option<String>,
    pub abort_estimate: Option<AbortEstimate>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Number of parties M (2..=8)
    #[arg(long, default_value_t = 4)]
    pub m: usize,
    /// Random equatorial observable sets
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    /// Root seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Flip one coefficient of the unrolled table before comparing
    #[arg(long)]
    pub inject_sign_flip: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyInstance {
    pub recursion_residual: f64,
    pub factorization_residuals: Vec<f64>,
    /// Spectral radius of `2^{(4−M)/2}·K_M`.
    pub normalized_spectral_radius: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    #[serde(rename = "M")]
    pub parties: usize,
    pub trials: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub sign_flip_injected: bool,
    pub cuts: Vec<usize>,
    pub max_recursion_residual: f64,
    pub max_factorization_residual: f64,
    pub max_tsirelson_excess: f64,
    pub passed: bool,
    pub instances: Vec<VerifyInstance>,
}

#[derive(Debug, Clone, Args)]
pub struct TradeoffArgs {
    /// Number of parties M
    #[arg(long, default_value_t = 4)]
    pub m: usize,
    /// Test probability γ per round [probability]
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    /// Tangent point p_t(1) [win-and-test probability; default γ·(p_min+p_max)/2]
    #[arg(long)]
    pub pt1: Option<f64>,
    /// Number of p1 grid points on [0, γ]
    #[arg(long, default_value_t = 101)]
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TradeoffRow {
    pub p1: f64,
    pub f: f64,
    pub f_max: f64,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Args)]
pub struct EntropyArgs {
    /// JSON file with keys "M", "lambda0", "lambda1" and optional "s"
    #[arg(long)]
    pub spec: PathBuf,
    /// Smoothing ε′ for the one-shot bound (M ≤ 4) [probability]
    #[arg(long)]
    pub eps_prime: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyRow {
    pub quantity: String,
    /// 1-based party labels joined by `;`.
    pub subsystems: String,
    /// Bits.
    pub value: f64,
}

fn config<T: std::fmt::Display>(msg: T) -> CliError {
    CliError::Config(msg.to_string())
}

fn grid(lo: f64, hi: f64, points: usize) -> CliResult<Vec<f64>> {
    match points {
        0 => Err(config("grid must contain at least one point")),
        1 => Ok(vec![lo]),
        _ => Ok((0..points)
            .map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64)
            .collect()),
    }
}

pub fn rate_curve(args: &RateCurveArgs) -> CliResult<Vec<RateRow>> {
    if args.m < 2 {
        return Err(config("M must be at least 2"));
    }
    let (p_min, p_max) = p_bounds(args.m);
    let lo = args.omega_min.unwrap_or(p_min);
    let hi = args.omega_max.unwrap_or(p_max);
    if !(lo <= hi) {
        return Err(config(format!("empty ω_exp range [{lo}, {hi}]")));
    }
    grid(lo, hi, args.points)?
        .into_par_iter()
        .map(|omega| {
            let params = CertificationParams::new(
                args.m,
                args.n,
                args.gamma,
                omega,
                args.delta_est,
                args.eps_smo,
                args.eps_snd,
            )?;
            let cert = certified_rate(&params)?;
            Ok(RateRow {
                omega_exp: omega,
                leading_order_rate: leading_order_rate(&params)?,
                rate_per_round: cert.rate_per_round,
                pt_star: cert.pt_star,
            })
        })
        .collect()
}

pub fn tradeoff_table(args: &TradeoffArgs) -> CliResult<Vec<TradeoffRow>> {
    let (p_min, p_max) = p_bounds(args.m);
    let pt1 = args.pt1.unwrap_or(args.gamma * (p_min + p_max) / 2.0);
    let t = tangent_coeffs(pt1, args.gamma, args.m)?;
    grid(0.0, args.gamma, args.points)?
        .into_iter()
        .map(|p1| {
            Ok(TradeoffRow {
                p1,
                f: f_piecewise(p1, args.gamma, args.m)?,
                f_max: f_max_linearized(p1, pt1, args.gamma, args.m)?,
                a: t.a,
                b: t.b,
            })
        })
        .collect()
}

fn honest_omega(parties: usize, visibility: f64) -> CliResult<f64> {
    let (p_min, p_max) = p_bounds(parties);
    let beta = 2.0 * std::f64::consts::SQRT_2 * visibility;
    if beta >= 2.0 {
        Ok(omega_from_beta(beta, parties)?)
    } else {
        Err(config(format!(
            "visibility {visibility} gives a winning probability below p_min = {p_min} \
             (p_max = {p_max}); pass --omega-exp explicitly"
        )))
    }
}

pub fn simulate(args: &SimulateArgs) -> CliResult<(SimulateReport, String)> {
    if !(0.0..=1.0).contains(&args.visibility) {
        return Err(config("visibility must lie in [0, 1]"));
    }
    let omega = match args.omega_exp {
        Some(w) => w,
        None => honest_omega(args.m, args.visibility)?,
    };
    let params = CertificationParams::new(
        args.m,
        args.n,
        args.gamma,
        omega,
        args.delta_est,
        args.eps_smo,
        args.eps_snd,
    )?;
    let source = SourceModel::HonestWerner {
        parties: args.m,
        visibility: args.visibility,
    };
    let device = match args.device {
        DeviceKind::Honest => DeviceModel::HonestOptimal,
        DeviceKind::ZeroOutputs => DeviceModel::constant_outputs(&vec![0; args.m]),
    };
    let transcript = if args.protocol == 2 {
        run_protocol_with_projection(&source, &device, &params, args.seed)?
    } else {
        run_protocol(&source, &device, &params, args.seed)?
    };
    let (certified_rate_bits, certificate_note) = match certify_transcript(&transcript) {
        Ok(Some(c)) => (Some(c.rate_total), None),
        Ok(None) => (None, Some("aborted".to_string())),
        Err(e) => (None, Some(e.to_string())),
    };
    let abort_estimate = match args.trials {
        0 => None,
        t => Some(estimate_abort_probability(&source, &device, &params, t, args.seed)?),
    };
    let report = SimulateReport {
        summary: transcript.summary(),
        device: args.device,
        visibility: args.visibility,
        certified_rate_bits,
        certificate_note,
        abort_estimate,
    };
    Ok((report, transcript.to_json_lines()))
}

/// Flips the first `f(x) ∈ {0, 1}` entry of a coefficient table.
fn flip_one_coefficient(table: &CoefficientTable) -> CliResult<CoefficientTable> {
    let mut json = serde_json::to_value(table).map_err(config)?;
    let values = json["values"]
        .as_object_mut()
        .ok_or_else(|| config("unexpected coefficient table layout"))?;
    let entry = values
        .values_mut()
        .find(|v| v.is_u64())
        .ok_or_else(|| config("coefficient table has no support"))?;
    *entry = serde_json::json!(1 - entry.as_u64().unwrap_or(0));
    serde_json::from_value(json).map_err(config)
}

pub fn verify(args: &VerifyArgs) -> CliResult<VerifyReport> {
    if !(2..=8).contains(&args.m) {
        return Err(config("verify supports 2 ≤ M ≤ 8"));
    }
    if args.trials == 0 {
        return Err(config("trials must be positive"));
    }
    let mut table = unroll_coefficients(args.m)?;
    if args.inject_sign_flip {
        table = flip_one_coefficient(&table)?;
    }
    // The single cut of M = 2 is the recursion itself.
    let cuts: Vec<usize> = if args.m > 2 { (1..args.m).collect() } else { Vec::new() };
    let norm = 2f64.powf((4.0 - args.m as f64) / 2.0);
    let instances = (0..args.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            rng.set_stream(t as u64);
            let tau = std::f64::consts::TAU;
            let parties: Vec<ObservablePair> = (0..args.m)
                .map(|_| ObservablePair::equatorial(rng.random::<f64>() * tau, rng.random::<f64>() * tau))
                .collect();
            let k = mabk_operator(&parties)?;
            let recursion_residual = (&k - assemble_operator(&table, &parties)?).norm();
            let factorization_residuals = cuts
                .iter()
                .map(|&c| verify_bipartition_factorization(c, &parties))
                .collect::<ghzcert::Result<Vec<_>>>()?;
            let (eig, _) = hermitian_eigen(&k);
            let radius = eig.iter().fold(0.0f64, |r, v| r.max(v.abs())) * norm;
            Ok(VerifyInstance {
                recursion_residual,
                factorization_residuals,
                normalized_spectral_radius: radius,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let max_recursion_residual = instances.iter().map(|i| i.recursion_residual).fold(0.0, f64::max);
    let max_factorization_residual = instances
        .iter()
        .flat_map(|i| i.factorization_residuals.iter().copied())
        .fold(0.0, f64::max);
    let cap = 2.0 * std::f64::consts::SQRT_2;
    let max_tsirelson_excess = instances
        .iter()
        .map(|i| i.normalized_spectral_radius - cap)
        .fold(f64::NEG_INFINITY, f64::max);
    let passed = max_recursion_residual < VERIFY_TOL
        && max_factorization_residual < VERIFY_TOL
        && max_tsirelson_excess < VERIFY_TOL;
    Ok(VerifyReport {
        parties: args.m,
        trials: args.trials,
        seed: args.seed,
        tolerance: VERIFY_TOL,
        sign_flip_injected: args.inject_sign_flip,
        cuts,
        max_recursion_residual,
        max_factorization_residual,
        max_tsirelson_excess,
        passed,
        instances,
    })
}

fn labels(parties: &[usize]) -> String {
    parties
        .iter()
        .map(|p| (p + 1).to_string())
        .collect::<Vec<_>>()
        .join(";")
}

pub fn entropy_table(spec: &GhzDiagonalSpec, eps_prime: Option<f64>) -> CliResult<Vec<EntropyRow>> {
    if !(2..=6).contains(&spec.parties) {
        return Err(config("entropy supports 2 ≤ M ≤ 6"));
    }
    let rho = ghz_diagonal_state(spec)?;
    let m = spec.parties;
    let mut rows = Vec::new();
    for mask in 1usize..1 << m {
        let subset: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let reduced = partial_trace(&rho, &subset)?;
        rows.push(EntropyRow {
            quantity: "entropy".into(),
            subsystems: labels(&subset),
            value: von_neumann_entropy(&reduced),
        });
    }
    for mask in 1usize..(1 << m) - 1 {
        let subset: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        rows.push(EntropyRow {
            quantity: "coherent_information".into(),
            subsystems: labels(&subset),
            value: coherent_information(&rho, &subset)?,
        });
    }
    rows.push(EntropyRow {
        quantity: "asymptotic_distill_rate".into(),
        subsystems: labels(&(0..m).collect::<Vec<_>>()),
        value: asymptotic_distill_rate(&rho, m)?,
    });
    if let Some(eps) = eps_prime {
        rows.push(EntropyRow {
            quantity: "one_shot_distill_bound".into(),
            subsystems: labels(&(0..m).collect::<Vec<_>>()),
            value: one_shot_distill_bound(&rho, m, eps)?,
        });
    }
    Ok(rows)
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(config)
}

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(config)?;
    s.push('\n');
    Ok(s)
}

fn write(dir: &Path, name: &str, contents: &str) -> CliResult<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

/// Runs one subcommand and returns the text destined for stdout.
pub fn run(cli: &Cli) -> CliResult<String> {
    let dir = &cli.out_dir;
    let mut out = String::new();
    let mut note = |p: PathBuf| out.push_str(&format!("wrote {}\n", p.display()));
    match &cli.command {
        Command::RateCurve(args) => {
            let rows = rate_curve(args)?;
            note(write(dir, "rate_curve.csv", &to_csv(&rows)?)?);
            if args.svg {
                let (p_min, p_max) = p_bounds(args.m);
                let points: Vec<(f64, f64)> =
                    rows.iter().map(|r| (r.omega_exp, r.leading_order_rate)).collect();
                note(write(dir, "rate_curve.svg", &svg::rate_curve_svg(&points, (p_min, p_max)))?);
            }
        }
        Command::Simulate(args) => {
            let (report, lines) = simulate(args)?;
            note(write(dir, "transcript.jsonl", &lines)?);
            let json = to_json(&report)?;
            note(write(dir, "simulate_summary.json", &json)?);
            out.push_str(&json);
        }
        Command::Verify(args) => {
            let report = verify(args)?;
            note(write(dir, "verify_report.json", &to_json(&report)?)?);
            out.push_str(&format!(
                "max residuals: recursion {:e}, factorization {:e}; Tsirelson excess {:e}\n",
                report.max_recursion_residual,
                report.max_factorization_residual,
                report.max_tsirelson_excess
            ));
            if !report.passed {
                print!("{out}");
                return Err(CliError::Verification(format!(
                    "a residual exceeds {VERIFY_TOL:e}"
                )));
            }
        }
        Command::Tradeoff(args) => {
            let rows = tradeoff_table(args)?;
            note(write(dir, "tradeoff.csv", &to_csv(&rows)?)?);
        }
        Command::Entropy(args) => {
            let text = fs::read_to_string(&args.spec)?;
            let spec: GhzDiagonalSpec = serde_json::from_str(&text).map_err(config)?;
            let rows = entropy_table(&spec, args.eps_prime)?;
            let csv = to_csv(&rows)?;
            note(write(dir, "entropy.csv", &csv)?);
            out.push_str(&csv);
        }
    }
    Ok(out)
}
