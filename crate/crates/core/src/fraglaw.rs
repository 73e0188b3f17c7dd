//! Fragmentation laws: random probability sequences (P_k) summing to one,
//! materialized lazily as finite prefixes plus a tail bucket.
//!
//! Three families are supported:
//!
//! * **Stick breaking** (residual allocation): `P_k = U_1⋯U_{k-1}(1-U_k)`.
//!   The tail after `k` boxes has mass `U_1⋯U_k` and, for iid factors, is
//!   distributed as that mass times a fresh copy of the law. Expansion of
//!   the tail is therefore exact.
//! * **Poisson–Kingman**: ranked atoms `L_i = ν̄⁻¹(Γ_i)` of a Poisson random
//!   measure with mean measure ν (Γ_i unit-rate arrival times), normalized
//!   by their sum. Generation stops once the expected unsampled mass
//!   `∫₀^{L_last} x ν(dx)` falls below `threshold × Σ L_i`; that ratio is
//!   kept as `mass_deficit`.
//! * **Multiplicative subordinator**: boxes are the jumps
//!   `e^{-X(t-)}(1 - e^{-ΔX(t)})` of `F = 1 - e^{-X}`. Jumps of size below a
//!   cutoff ε are replaced by their mean drift; the mass they would have
//!   carried ("dust") is folded into the regenerative tail and reported as
//!   `mass_deficit`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Beta, Distribution, Exp1, Open01};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limits::{BaseProcess, LimitSpec};
use crate::quad::{integrate, Tolerance};
use crate::special::{digamma, exp_integral_e1, exp_integral_e1_inv, trigamma};

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

pub const DEFAULT_PREFIX_CAP: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawKind {
    StickBreaking,
    PoissonKingman,
    MultiplicativeSubordinator,
}

/// Distribution of the stick factors U_i.
#[derive(Clone)]
pub enum StickParams {
    /// U ~ beta(θ, 1): the GEM(θ) law.
    BetaTheta1 { theta: f64 },
    GeneralBeta { alpha: f64, beta: f64 },
    /// U = quantile(V) for V uniform on (0, 1). The log-moments
    /// μ = E|log U| and σ² = Var log U are needed for the limit theorem.
    Custom {
        label: String,
        quantile: RealFn,
        log_mean: Option<f64>,
        log_var: Option<f64>,
    },
    /// U_i ~ beta(θ + αi, 1 - α): two-parameter (non-homogeneous) stick.
    PitmanYor { alpha: f64, theta: f64 },
}

impl fmt::Debug for StickParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StickParams::BetaTheta1 { theta } => write!(f, "BetaTheta1(theta={theta})"),
            StickParams::GeneralBeta { alpha, beta } => {
                write!(f, "GeneralBeta(alpha={alpha}, beta={beta})")
            }
            StickParams::Custom {
                label,
                log_mean,
                log_var,
                ..
            } => write!(f, "Custom({label}, mu={log_mean:?}, sigma2={log_var:?})"),
            StickParams::PitmanYor { alpha, theta } => {
                write!(f, "PitmanYor(alpha={alpha}, theta={theta})")
            }
        }
    }
}

/// A Lévy measure ν on (0, ∞) given through its right tail ν̄(x) = ν([x, ∞)).
#[derive(Clone)]
pub struct LevyParams {
    pub label: String,
    pub tail: RealFn,
    pub tail_inverse: Option<RealFn>,
    /// x ↦ ∫_{(0,x)} y ν(dy); computed by quadrature of the tail when absent.
    pub small_mass: Option<RealFn>,
    /// m = ∫ x ν(dx)
    pub mean_m: Option<f64>,
    /// s² = ∫ x² ν(dx)
    pub var_s2: Option<f64>,
    /// Exponent and constant of ν̄(x) ≈ c₀ |log x|^q as x → 0.
    pub q: Option<f64>,
    pub c0: Option<f64>,
}

impl fmt::Debug for LevyParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LevyParams")
            .field("label", &self.label)
            .field("has_tail_inverse", &self.tail_inverse.is_some())
            .field("mean_m", &self.mean_m)
            .field("var_s2", &self.var_s2)
            .field("q", &self.q)
            .field("c0", &self.c0)
            .finish()
    }
}

impl LevyParams {
    /// ν(dx) = θ x⁻¹ e^{-λx} dx: ν̄(x) = θ E₁(λx).
    pub fn gamma(theta: f64, lambda: f64) -> Result<Self> {
        if !(theta > 0.0) || !(lambda > 0.0) {
            return Err(Error::param(
                "law.theta/lambda",
                format!("gamma Lévy measure needs theta, lambda > 0 (got {theta}, {lambda})"),
            ));
        }
        Ok(LevyParams {
            label: format!("gamma(theta={theta}, lambda={lambda})"),
            tail: Arc::new(move |x| theta * exp_integral_e1(lambda * x)),
            tail_inverse: Some(Arc::new(move |y| {
                exp_integral_e1_inv(y / theta).unwrap_or(0.0) / lambda
            })),
            small_mass: Some(Arc::new(move |x| -theta * (-lambda * x).exp_m1() / lambda)),
            mean_m: Some(theta / lambda),
            var_s2: Some(theta / (lambda * lambda)),
            q: Some(1.0),
            c0: Some(theta),
        })
    }

    pub fn small_jump_mass(&self, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(0.0);
        }
        if let Some(f) = &self.small_mass {
            return Ok(f(x));
        }
        // ∫₀ˣ y ν(dy) = ∫₀ˣ (ν̄(y) - ν̄(x)) dy
        let tail_x = (self.tail)(x);
        let tol = Tolerance {
            abs: 1e-14 * x,
            rel: 1e-10,
            max_evals: 1 << 16,
        };
        Ok(integrate(|y| Ok((self.tail)(y) - tail_x), 0.0, x, tol)?.value)
    }

    fn inverse(&self) -> Result<&RealFn> {
        self.tail_inverse.as_ref().ok_or(Error::MissingTailInverse)
    }
}

#[derive(Debug, Clone)]
pub enum LawParams {
    StickBreaking(StickParams),
    PoissonKingman(LevyParams),
    MultiplicativeSubordinator(LevyParams),
}

/// A random fragmentation law (P_k), with optional declared limit constants.
#[derive(Debug, Clone)]
pub struct FragmentationLaw {
    pub params: LawParams,
    pub declared_limit: Option<LimitSpec>,
    pub prefix_cap: usize,
}

impl FragmentationLaw {
    pub fn new(params: LawParams) -> Result<Self> {
        let law = FragmentationLaw {
            params,
            declared_limit: None,
            prefix_cap: DEFAULT_PREFIX_CAP,
        };
        law.validate()?;
        Ok(law)
    }

    pub fn gem(theta: f64) -> Result<Self> {
        Self::new(LawParams::StickBreaking(StickParams::BetaTheta1 { theta }))
    }

    pub fn beta_stick(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(LawParams::StickBreaking(StickParams::GeneralBeta { alpha, beta }))
    }

    /// Deterministic stick U ≡ u, so P_k = u^{k-1}(1-u).
    pub fn constant_stick(u: f64) -> Result<Self> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::param("law.u", format!("must lie in (0, 1), got {u}")));
        }
        Self::new(LawParams::StickBreaking(StickParams::Custom {
            label: format!("constant({u})"),
            quantile: Arc::new(move |_| u),
            log_mean: Some(-u.ln()),
            log_var: Some(0.0),
        }))
    }

    pub fn pitman_yor(alpha: f64, theta: f64) -> Result<Self> {
        Self::new(LawParams::StickBreaking(StickParams::PitmanYor { alpha, theta }))
    }

    /// Poisson–Kingman law of the gamma subordinator, i.e. PD(θ).
    pub fn gamma_poisson_kingman(theta: f64) -> Result<Self> {
        Self::new(LawParams::PoissonKingman(LevyParams::gamma(theta, 1.0)?))
    }

    /// Multiplicative gamma subordinator with ν(dx) = x⁻¹e^{-λx}dx. The
    /// Lévy measure is normalized to scale factor 1, which does not change
    /// the derived fragmentation law.
    pub fn gamma_subordinator(lambda: f64) -> Result<Self> {
        Self::new(LawParams::MultiplicativeSubordinator(LevyParams::gamma(1.0, lambda)?))
    }

    pub fn with_declared_limit(mut self, spec: LimitSpec) -> Self {
        self.declared_limit = Some(spec);
        self
    }

    pub fn with_prefix_cap(mut self, cap: usize) -> Self {
        self.prefix_cap = cap;
        self
    }

    pub fn kind(&self) -> LawKind {
        match self.params {
            LawParams::StickBreaking(_) => LawKind::StickBreaking,
            LawParams::PoissonKingman(_) => LawKind::PoissonKingman,
            LawParams::MultiplicativeSubordinator(_) => LawKind::MultiplicativeSubordinator,
        }
    }

    /// Stick laws with declared zero log-variance: the environment is not random.
    pub fn is_deterministic(&self) -> bool {
        matches!(
            &self.params,
            LawParams::StickBreaking(StickParams::Custom { log_var: Some(v), .. }) if *v == 0.0
        )
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(field, format!("must be positive, got {v}")))
            }
        };
        match &self.params {
            LawParams::StickBreaking(StickParams::BetaTheta1 { theta }) => {
                positive("law.theta", *theta)
            }
            LawParams::StickBreaking(StickParams::GeneralBeta { alpha, beta }) => {
                positive("law.alpha", *alpha)?;
                positive("law.beta", *beta)
            }
            LawParams::StickBreaking(StickParams::Custom { .. }) => Ok(()),
            LawParams::StickBreaking(StickParams::PitmanYor { alpha, theta }) => {
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return Err(Error::param("law.alpha", format!("must lie in (0, 1), got {alpha}")));
                }
                if !(*theta > -alpha) {
                    return Err(Error::param("law.theta", format!("must exceed -alpha, got {theta}")));
                }
                Ok(())
            }
            LawParams::PoissonKingman(levy) | LawParams::MultiplicativeSubordinator(levy) => {
                for (field, v) in [
                    ("law.mean_m", levy.mean_m),
                    ("law.var_s2", levy.var_s2),
                    ("law.q", levy.q),
                    ("law.c0", levy.c0),
                ] {
                    if let Some(v) = v {
                        positive(field, v)?;
                    }
                }
                Ok(())
            }
        }
    }
}

/// Continuation record for a prefix tail.
#[derive(Debug, Clone, PartialEq)]
pub enum TailState {
    /// Next stick factor index (1-based).
    Stick { next_index: u64 },
    /// Ranked atom generation: last arrival time, last atom, raw atom sum.
    Ranked { arrival: f64, last_atom: f64, raw_total: f64 },
    /// Remainder of mass `tail_mass` distributed as a fresh copy of the law.
    Regenerative,
}

/// Finite materialization of (P_k): `probs` followed by a tail bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct Prefix {
    pub probs: Vec<f64>,
    pub tail_mass: f64,
    /// Mass that may receive balls from the wrong box because of truncation
    /// (zero for stick-breaking laws).
    pub mass_deficit: f64,
    pub tail_state: TailState,
}

impl Prefix {
    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum::<f64>() + self.tail_mass
    }
}

fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(Error::ThresholdOutOfRange(threshold))
    }
}

/// Returns (U, 1 - U) for stick index `index` (1-based).
fn stick_factor<R: Rng + ?Sized>(params: &StickParams, index: u64, rng: &mut R) -> Result<(f64, f64)> {
    match params {
        StickParams::BetaTheta1 { theta } => {
            let v: f64 = rng.sample(Open01);
            let log_u = v.ln() / theta;
            Ok((log_u.exp(), -log_u.exp_m1()))
        }
        StickParams::GeneralBeta { alpha, beta } => {
            let d = Beta::new(*alpha, *beta).map_err(|e| Error::param("law.alpha/beta", e.to_string()))?;
            let u: f64 = d.sample(rng);
            Ok((u, 1.0 - u))
        }
        StickParams::Custom { quantile, label, .. } => {
            let v: f64 = rng.sample(Open01);
            let u = quantile(v);
            if !(u > 0.0 && u < 1.0) {
                return Err(Error::param(
                    "law.quantile",
                    format!("{label}: quantile({v}) = {u} is outside (0, 1)"),
                ));
            }
            Ok((u, 1.0 - u))
        }
        StickParams::PitmanYor { alpha, theta } => {
            let d = Beta::new(theta + alpha * index as f64, 1.0 - alpha)
                .map_err(|e| Error::param("law.alpha/theta", e.to_string()))?;
            let u: f64 = d.sample(rng);
            Ok((u, 1.0 - u))
        }
    }
}

/// Appends stick boxes carved from `residual` until the residual drops
/// below `threshold`.
fn extend_stick<R: Rng + ?Sized>(
    params: &StickParams,
    probs: &mut Vec<f64>,
    mut residual: f64,
    mut index: u64,
    threshold: f64,
    cap: usize,
    rng: &mut R,
) -> Result<(f64, u64)> {
    while residual >= threshold {
        if probs.len() >= cap {
            return Err(Error::PrefixCapExceeded { cap });
        }
        let (u, one_minus_u) = stick_factor(params, index, rng)?;
        probs.push(residual * one_minus_u);
        residual *= u;
        index += 1;
    }
    Ok((residual, index))
}

/// Ranked atoms below the current state until the stopping rule holds.
/// Returns the new raw atoms and the updated state.
fn extend_ranked<R: Rng + ?Sized>(
    levy: &LevyParams,
    mut arrival: f64,
    mut last_atom: f64,
    mut raw_total: f64,
    threshold: f64,
    already: usize,
    cap: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, f64, f64, f64)> {
    let inverse = levy.inverse()?;
    let mut atoms = Vec::new();
    loop {
        let done = raw_total > 0.0
            && (last_atom == 0.0
                || (last_atom < threshold * raw_total
                    && levy.small_jump_mass(last_atom)? < threshold * raw_total));
        if done {
            break;
        }
        if already + atoms.len() >= cap {
            return Err(Error::PrefixCapExceeded { cap });
        }
        let e: f64 = rng.sample(Exp1);
        arrival += e;
        let atom = inverse(arrival);
        if !(atom >= 0.0) || !atom.is_finite() {
            return Err(Error::Range(format!("tail inverse returned {atom} at {arrival}")));
        }
        last_atom = atom;
        if atom > 0.0 {
            atoms.push(atom);
            raw_total += atom;
        }
    }
    Ok((atoms, arrival, last_atom, raw_total))
}

/// Boxes from the jumps of `1 - e^{-X}` until `e^{-X} < threshold`.
/// Returns (boxes, remainder e^{-X}, dust).
fn subordinator_boxes<R: Rng + ?Sized>(
    levy: &LevyParams,
    threshold: f64,
    cap: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, f64, f64)> {
    let inverse = levy.inverse()?;
    let cutoff = 0.25 * threshold;
    let rate = (levy.tail)(cutoff);
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::Range(format!("Lévy tail at cutoff {cutoff:e} is {rate}")));
    }
    let drift = levy.small_jump_mass(cutoff)?;
    let mut boxes = Vec::new();
    let mut x = 0.0_f64;
    let mut dust = 0.0;
    loop {
        let remainder = (-x).exp();
        if remainder < threshold {
            return Ok((boxes, remainder, dust));
        }
        if boxes.len() >= cap {
            return Err(Error::PrefixCapExceeded { cap });
        }
        let wait: f64 = rng.sample::<f64, _>(Exp1) / rate;
        let creep = drift * wait;
        dust += remainder * -(-creep).exp_m1();
        x += creep;
        let v: f64 = rng.sample(Open01);
        let jump = inverse(rate * v).max(cutoff);
        boxes.push((-x).exp() * -(-jump).exp_m1());
        x += jump;
    }
}

/// Samples a prefix of the law with the given truncation threshold.
pub fn sample_prefix<R: Rng + ?Sized>(law: &FragmentationLaw, threshold: f64, rng: &mut R) -> Result<Prefix> {
    check_threshold(threshold)?;
    match &law.params {
        LawParams::StickBreaking(params) => {
            let mut probs = Vec::new();
            let (residual, next_index) =
                extend_stick(params, &mut probs, 1.0, 1, threshold, law.prefix_cap, rng)?;
            Ok(Prefix {
                probs,
                tail_mass: residual,
                mass_deficit: 0.0,
                tail_state: TailState::Stick { next_index },
            })
        }
        LawParams::PoissonKingman(levy) => {
            let (atoms, arrival, last_atom, raw_total) =
                extend_ranked(levy, 0.0, f64::INFINITY, 0.0, threshold, 0, law.prefix_cap, rng)?;
            let deficit = levy.small_jump_mass(last_atom)? / raw_total;
            Ok(Prefix {
                probs: atoms.iter().map(|a| a / raw_total).collect(),
                tail_mass: 0.0,
                mass_deficit: deficit,
                tail_state: TailState::Ranked {
                    arrival,
                    last_atom,
                    raw_total,
                },
            })
        }
        LawParams::MultiplicativeSubordinator(levy) => {
            let (boxes, remainder, dust) = subordinator_boxes(levy, threshold, law.prefix_cap, rng)?;
            Ok(Prefix {
                probs: boxes,
                tail_mass: remainder + dust,
                mass_deficit: dust,
                tail_state: TailState::Regenerative,
            })
        }
    }
}

/// Refines the tail bucket of `prefix` into further boxes, leaving a
/// smaller tail. `threshold` is absolute, in units of the prefix's total
/// mass. For Poisson–Kingman prefixes the ranked generation is resumed and
/// all probabilities are renormalized by the enlarged atom sum.
pub fn expand_tail<R: Rng + ?Sized>(
    law: &FragmentationLaw,
    prefix: &Prefix,
    threshold: f64,
    rng: &mut R,
) -> Result<Prefix> {
    if !(threshold > 0.0) {
        return Err(Error::ThresholdOutOfRange(threshold));
    }
    match (&law.params, &prefix.tail_state) {
        (LawParams::StickBreaking(params), TailState::Stick { next_index }) => {
            if !(prefix.tail_mass > 0.0) {
                return Err(Error::TailNotResumable("tail mass is zero"));
            }
            let mut probs = prefix.probs.clone();
            let (residual, next_index) = extend_stick(
                params,
                &mut probs,
                prefix.tail_mass,
                *next_index,
                threshold,
                law.prefix_cap,
                rng,
            )?;
            Ok(Prefix {
                probs,
                tail_mass: residual,
                mass_deficit: prefix.mass_deficit,
                tail_state: TailState::Stick { next_index },
            })
        }
        (LawParams::MultiplicativeSubordinator(levy), TailState::Regenerative) => {
            if !(prefix.tail_mass > 0.0) {
                return Err(Error::TailNotResumable("tail mass is zero"));
            }
            let scale = prefix.tail_mass;
            let relative = threshold / scale;
            let mut probs = prefix.probs.clone();
            if relative >= 1.0 {
                return Ok(prefix.clone());
            }
            let (boxes, remainder, dust) = subordinator_boxes(levy, relative, law.prefix_cap, rng)?;
            probs.extend(boxes.iter().map(|b| b * scale));
            Ok(Prefix {
                probs,
                tail_mass: (remainder + dust) * scale,
                mass_deficit: prefix.mass_deficit + dust * scale,
                tail_state: TailState::Regenerative,
            })
        }
        (
            LawParams::PoissonKingman(levy),
            TailState::Ranked {
                arrival,
                last_atom,
                raw_total,
            },
        ) => {
            if threshold >= 1.0 {
                return Err(Error::ThresholdOutOfRange(threshold));
            }
            let (atoms, arrival, last_atom, new_total) = extend_ranked(
                levy,
                *arrival,
                *last_atom,
                *raw_total,
                threshold,
                prefix.probs.len(),
                law.prefix_cap,
                rng,
            )?;
            let rescale = raw_total / new_total;
            let mut probs: Vec<f64> = prefix.probs.iter().map(|p| p * rescale).collect();
            probs.extend(atoms.iter().map(|a| a / new_total));
            Ok(Prefix {
                probs,
                tail_mass: 0.0,
                mass_deficit: levy.small_jump_mass(last_atom)? / new_total,
                tail_state: TailState::Ranked {
                    arrival,
                    last_atom,
                    raw_total: new_total,
                },
            })
        }
        _ => Err(Error::TailNotResumable("tail state does not belong to this law")),
    }
}

/// Limit-theorem constants for the law: declared constants win, otherwise
/// they are derived from the law parameters.
pub fn limit_spec_for(law: &FragmentationLaw) -> Result<LimitSpec> {
    let kind = law.kind();
    if let Some(spec) = law.declared_limit {
        spec.validate()?;
        return Ok(spec.with_source(kind));
    }
    let spec = match &law.params {
        LawParams::StickBreaking(params) => {
            let (mu, sigma2) = match params {
                StickParams::BetaTheta1 { theta } => (1.0 / theta, 1.0 / (theta * theta)),
                StickParams::GeneralBeta { alpha, beta } => (
                    digamma(alpha + beta) - digamma(*alpha),
                    trigamma(*alpha) - trigamma(alpha + beta),
                ),
                StickParams::Custom {
                    log_mean, log_var, ..
                } => match (log_mean, log_var) {
                    (Some(m), Some(v)) => (*m, *v),
                    _ => {
                        return Err(Error::MissingParameters(
                            "custom stick law needs declared log_mean and log_var".into(),
                        ))
                    }
                },
                StickParams::PitmanYor { .. } => {
                    return Err(Error::NoLimitTheorem(
                        "two-parameter stick factors are not identically distributed".into(),
                    ))
                }
            };
            if !(sigma2 > 0.0) {
                return Err(Error::NoLimitTheorem(format!(
                    "degenerate stick factors (Var log U = {sigma2})"
                )));
            }
            LimitSpec::new(
                1.0,
                0.5,
                1.0 / mu,
                (sigma2 / mu.powi(3)).sqrt(),
                BaseProcess::BrownianMotion,
            )?
        }
        LawParams::MultiplicativeSubordinator(levy) => {
            let (m, s2, q, c0) = match (levy.mean_m, levy.var_s2, levy.q, levy.c0) {
                (Some(m), Some(s2), Some(q), Some(c0)) => (m, s2, q, c0),
                _ => {
                    return Err(Error::MissingParameters(
                        "subordinator law needs mean_m, var_s2, q and c0".into(),
                    ))
                }
            };
            if q < 1.0 {
                return Err(Error::NoLimitTheorem(format!(
                    "subordinator limit needs q >= 1, got {q}"
                )));
            }
            LimitSpec::new(
                q + 1.0,
                q + 0.5,
                c0 / (m * (q + 1.0)),
                s2.sqrt() * m.powf(-1.5),
                BaseProcess::RiemannLiouville { q },
            )?
        }
        LawParams::PoissonKingman(levy) => {
            let (q, c0) = match (levy.q, levy.c0) {
                (Some(q), Some(c0)) => (q, c0),
                _ => {
                    return Err(Error::MissingParameters(
                        "Poisson–Kingman law needs q and c0".into(),
                    ))
                }
            };
            if !(q > 0.0 && q < 2.0) {
                return Err(Error::NoLimitTheorem(format!(
                    "Poisson–Kingman limit needs q in (0, 2), got {q}"
                )));
            }
            let base = if q == 1.0 {
                BaseProcess::BrownianMotion
            } else {
                BaseProcess::TimeChangedBm { q }
            };
            LimitSpec::new(q, q / 2.0, c0, c0.sqrt(), base)?
        }
    };
    Ok(spec.with_source(kind))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn geometric_stick_prefix() {
        let law = FragmentationLaw::constant_stick(0.5).unwrap();
        let p = sample_prefix(&law, 0.1, &mut seeded(0)).unwrap();
        assert_eq!(p.probs, vec![0.5, 0.25, 0.125, 0.0625]);
        assert_eq!(p.tail_mass, 0.0625);
    }

    #[test]
    fn geometric_stick_expansion() {
        let law = FragmentationLaw::constant_stick(0.5).unwrap();
        let p = sample_prefix(&law, 0.1, &mut seeded(0)).unwrap();
        // residual rule: stop once the residual is below the threshold
        let e = expand_tail(&law, &p, 0.01, &mut seeded(1)).unwrap();
        assert_eq!(&e.probs[4..], &[1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0]);
        assert_eq!(e.tail_mass, 1.0 / 128.0);
        let e = expand_tail(&law, &p, 0.005, &mut seeded(1)).unwrap();
        assert_eq!(&e.probs[4..], &[1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0]);
        assert_eq!(e.tail_mass, 1.0 / 256.0);
    }

    #[test]
    fn threshold_validation() {
        let law = FragmentationLaw::gem(1.0).unwrap();
        assert!(matches!(sample_prefix(&law, 0.0, &mut seeded(0)), Err(Error::ThresholdOutOfRange(_))));
        assert!(matches!(sample_prefix(&law, 1.0, &mut seeded(0)), Err(Error::ThresholdOutOfRange(_))));
        let p = sample_prefix(&law, 0.1, &mut seeded(0)).unwrap();
        assert!(expand_tail(&law, &p, -1.0, &mut seeded(0)).is_err());
    }

    #[test]
    fn empty_tail_cannot_expand() {
        let law = FragmentationLaw::gem(1.0).unwrap();
        let p = Prefix {
            probs: vec![1.0],
            tail_mass: 0.0,
            mass_deficit: 0.0,
            tail_state: TailState::Stick { next_index: 2 },
        };
        assert!(matches!(expand_tail(&law, &p, 0.1, &mut seeded(0)), Err(Error::TailNotResumable(_))));
    }

    #[test]
    fn prefix_cap_is_enforced() {
        let law = FragmentationLaw::constant_stick(0.999).unwrap().with_prefix_cap(100);
        assert!(matches!(
            sample_prefix(&law, 1e-6, &mut seeded(0)),
            Err(Error::PrefixCapExceeded { cap: 100 })
        ));
    }

    #[test]
    fn missing_tail_inverse() {
        let mut levy = LevyParams::gamma(1.0, 1.0).unwrap();
        levy.tail_inverse = None;
        let law = FragmentationLaw::new(LawParams::PoissonKingman(levy)).unwrap();
        assert!(matches!(sample_prefix(&law, 0.1, &mut seeded(0)), Err(Error::MissingTailInverse)));
    }

    #[test]
    fn gamma_tail_inverse_roundtrip() {
        let levy = LevyParams::gamma(1.0, 1.0).unwrap();
        let inv = levy.tail_inverse.clone().unwrap();
        for &x in &[1e-12, 1e-6, 1e-3, 0.05, 0.5, 1.0, 2.0, 8.0, 20.0] {
            let back = inv((levy.tail)(x));
            assert!((back / x - 1.0).abs() < 1e-9, "{x} -> {back}");
        }
    }

    #[test]
    fn small_mass_quadrature_matches_closed_form() {
        let mut levy = LevyParams::gamma(1.0, 1.0).unwrap();
        let exact = levy.small_jump_mass(0.3).unwrap();
        levy.small_mass = None;
        let quad = levy.small_jump_mass(0.3).unwrap();
        assert!((exact - quad).abs() < 1e-9, "{exact} vs {quad}");
    }

    #[test]
    fn subordinator_prefix_mass_balance() {
        let law = FragmentationLaw::gamma_subordinator(1.0).unwrap();
        let mut rng = seeded(3);
        let p = sample_prefix(&law, 1e-6, &mut rng).unwrap();
        assert!((p.total_mass() - 1.0).abs() < 1e-12);
        assert!(p.mass_deficit < 1e-5);
        let e = expand_tail(&law, &p, 1e-9, &mut rng).unwrap();
        assert!((e.total_mass() - 1.0).abs() < 1e-12);
        assert!(e.tail_mass < p.tail_mass);
    }

    #[test]
    fn limit_spec_examples() {
        let gem = limit_spec_for(&FragmentationLaw::gem(2.5).unwrap()).unwrap();
        assert_eq!((gem.omega, gem.gamma_exp), (1.0, 0.5));
        assert!((gem.c - 2.5).abs() < 1e-14);
        assert!((gem.a - 2.5f64.sqrt()).abs() < 1e-14);
        assert_eq!(gem.base, BaseProcess::BrownianMotion);

        let pk = limit_spec_for(&FragmentationLaw::gamma_poisson_kingman(1.0).unwrap()).unwrap();
        assert_eq!((pk.omega, pk.gamma_exp, pk.c, pk.a), (1.0, 0.5, 1.0, 1.0));
        assert_eq!(pk.base, BaseProcess::BrownianMotion);

        let sub = limit_spec_for(&FragmentationLaw::gamma_subordinator(1.0).unwrap()).unwrap();
        assert_eq!((sub.omega, sub.gamma_exp), (2.0, 1.5));
        assert_eq!(sub.base, BaseProcess::RiemannLiouville { q: 1.0 });
        assert!((sub.c - 0.5).abs() < 1e-15 && (sub.a - 1.0).abs() < 1e-15);
    }

    #[test]
    fn limit_spec_rejections() {
        assert!(matches!(
            limit_spec_for(&FragmentationLaw::pitman_yor(0.5, 1.0).unwrap()),
            Err(Error::NoLimitTheorem(_))
        ));
        assert!(matches!(
            limit_spec_for(&FragmentationLaw::constant_stick(0.5).unwrap()),
            Err(Error::NoLimitTheorem(_))
        ));
        let custom = FragmentationLaw::new(LawParams::StickBreaking(StickParams::Custom {
            label: "half".into(),
            quantile: Arc::new(|v| 0.25 + 0.5 * v),
            log_mean: None,
            log_var: None,
        }))
        .unwrap();
        assert!(matches!(limit_spec_for(&custom), Err(Error::MissingParameters(_))));
    }

    #[test]
    fn general_beta_reduces_to_gem() {
        let a = limit_spec_for(&FragmentationLaw::beta_stick(3.0, 1.0).unwrap()).unwrap();
        let b = limit_spec_for(&FragmentationLaw::gem(3.0).unwrap()).unwrap();
        assert!((a.c - b.c).abs() < 1e-12 && (a.a - b.a).abs() < 1e-12);
    }

    #[test]
    fn invalid_parameters() {
        assert!(FragmentationLaw::gem(-1.0).is_err());
        assert!(FragmentationLaw::beta_stick(1.0, 0.0).is_err());
        assert!(FragmentationLaw::pitman_yor(1.5, 1.0).is_err());
        assert!(FragmentationLaw::constant_stick(1.0).is_err());
    }
}
