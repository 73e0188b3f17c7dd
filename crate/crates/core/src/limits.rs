//! Limit-theorem constants, centering/scaling of occupancy curves, and the
//! Gaussian limit processes `R_j(s) = ∫₀ˢ (s-y)^{ω(j-1)} dW(y)`.
//!
//! Covariances of the limit processes are evaluated by quadrature of
//!
//! ```text
//! E[R_k(s) R_j(u)] = ∫₀ˢ∫₀ᵘ r(s-y, u-z) d(y^{ω(k-1)}) d(z^{ω(j-1)})
//! ```
//!
//! after substituting `a = y^{ω(k-1)}`, `b = z^{ω(j-1)}`, which removes
//! the endpoint singularity of the measure when `ω(k-1) < 1`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::fraglaw::LawKind;
use crate::occupancy::OccupancyResult;
use crate::quad::{integrate, Tolerance};
use crate::special::{beta, gamma, ln_gamma};

/// The Gaussian process `W` driving the first level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseProcess {
    /// Standard Brownian motion, r(x, y) = min(x, y).
    BrownianMotion,
    /// Riemann–Liouville process ∫₀ˢ (s-y)^q dB(y).
    RiemannLiouville { q: f64 },
    /// Time-changed Brownian motion B(s^q), r(x, y) = min(x, y)^q.
    TimeChangedBm { q: f64 },
}

impl BaseProcess {
    /// r(x, y) = E[W(x) W(y)].
    pub fn covariance(&self, x: f64, y: f64) -> Result<f64> {
        let m = x.min(y);
        if m <= 0.0 {
            return Ok(0.0);
        }
        match *self {
            BaseProcess::BrownianMotion => Ok(m),
            BaseProcess::TimeChangedBm { q } => Ok(m.powf(q)),
            BaseProcess::RiemannLiouville { q } => {
                let d = x.max(y) - m;
                // ∫₀ᵐ v^q (d+v)^q dv with w = v^{q+1}
                let top = m.powf(q + 1.0);
                let inv = 1.0 / (q + 1.0);
                let tol = Tolerance {
                    abs: 1e-15,
                    rel: 1e-11,
                    max_evals: 1 << 20,
                };
                let est = integrate(|w| Ok((d + w.powf(inv)).powf(q) * inv), 0.0, top, tol)?;
                Ok(est.value)
            }
        }
    }
}

/// The quadruple (ω, γ, c, a) and base covariance identifying a limit theorem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitSpec {
    pub omega: f64,
    pub gamma_exp: f64,
    pub c: f64,
    pub a: f64,
    pub base: BaseProcess,
    /// Law family the spec was derived for, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<LawKind>,
}

impl LimitSpec {
    pub fn new(omega: f64, gamma_exp: f64, c: f64, a: f64, base: BaseProcess) -> Result<Self> {
        let spec = LimitSpec {
            omega,
            gamma_exp,
            c,
            a,
            base,
            source: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_source(mut self, kind: LawKind) -> Self {
        self.source = Some(kind);
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("omega", self.omega),
            ("gamma", self.gamma_exp),
            ("c", self.c),
            ("a", self.a),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::param(field, format!("must be positive and finite, got {v}")));
            }
        }
        if !(self.gamma_exp < self.omega && self.gamma_exp > self.omega - 1.0) {
            return Err(Error::param(
                "gamma",
                format!(
                    "must lie in (omega - 1, omega) = ({}, {}), got {}",
                    self.omega - 1.0,
                    self.omega,
                    self.gamma_exp
                ),
            ));
        }
        match self.base {
            BaseProcess::BrownianMotion => {}
            BaseProcess::RiemannLiouville { q } | BaseProcess::TimeChangedBm { q } => {
                if !(q > 0.0) || !q.is_finite() {
                    return Err(Error::param("base.q", format!("must be positive, got {q}")));
                }
            }
        }
        Ok(())
    }

    /// Exponent of the level-`j` integration kernel, ω(j-1).
    pub fn kernel_exponent(&self, level: usize) -> f64 {
        self.omega * (level as f64 - 1.0)
    }
}

/// Values of a function family indexed by (level, grid point).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMatrix {
    pub s_grid: Vec<f64>,
    pub levels: Vec<usize>,
    /// `values[level_index][grid_index]`
    pub values: Vec<Vec<f64>>,
}

impl CurveMatrix {
    pub fn zeros(levels: Vec<usize>, s_grid: Vec<f64>) -> Self {
        let values = vec![vec![0.0; s_grid.len()]; levels.len()];
        CurveMatrix {
            s_grid,
            levels,
            values,
        }
    }

    pub fn get(&self, level_idx: usize, grid_idx: usize) -> f64 {
        self.values[level_idx][grid_idx]
    }

    pub fn level_index(&self, level: usize) -> Option<usize> {
        self.levels.iter().position(|&l| l == level)
    }

    pub fn grid_index(&self, s: f64) -> Option<usize> {
        self.s_grid.iter().position(|&g| (g - s).abs() < 1e-12)
    }

    pub fn is_consistent(&self) -> bool {
        self.values.len() == self.levels.len()
            && self.values.iter().all(|row| row.len() == self.s_grid.len())
    }
}

/// c_j = (c Γ(ω+1))^j / Γ(ωj+1), evaluated in log space.
pub fn c_coeff(spec: &LimitSpec, j: usize) -> Result<f64> {
    if j == 0 {
        return Ok(1.0);
    }
    let jf = j as f64;
    let ln = jf * (spec.c.ln() + ln_gamma(spec.omega + 1.0)) - ln_gamma(spec.omega * jf + 1.0);
    if !ln.is_finite() || ln > f64::MAX.ln() || ln < f64::MIN_POSITIVE.ln() {
        return Err(Error::Range(format!(
            "c_{j} out of range for omega = {}, c = {} (log value {ln})",
            spec.omega, spec.c
        )));
    }
    Ok(ln.exp())
}

/// Level constant of the multiplicative-subordinator limit:
/// (c₀Γ(q+2)/(m(q+1)))^j / Γ((q+1)j+1), i.e. c_j for ω = q+1 and
/// c = c₀/(m(q+1)). Evaluated directly in linear space.
pub fn cstar_coeff(c0: f64, m: f64, q: f64, j: usize) -> Result<f64> {
    for (field, v) in [("c0", c0), ("m", m), ("q", q)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::param(field, format!("must be positive, got {v}")));
        }
    }
    if j == 0 {
        return Err(Error::param("j", "must be a positive integer"));
    }
    let base = c0 * gamma(q + 2.0) / (m * (q + 1.0));
    let value = base.powi(j as i32) / gamma((q + 1.0) * j as f64 + 1.0);
    if !value.is_finite() || value <= 0.0 {
        return Err(Error::Range(format!("c*_{j} out of range (q = {q})")));
    }
    Ok(value)
}

/// Centers and scales the cumulative curves K_{n,j}(s):
///
/// `(K_{n,j}(s) - c_j (s log n)^{ωj}) / (a c_{j-1} (log n)^{γ+ω(j-1)})`.
///
/// When ω = 1 and γ = 1/2 the residual-allocation form with μ = 1/c and
/// σ² = a²/c³ is evaluated alongside and both must agree to 1e-9.
pub fn normalize_curves(result: &OccupancyResult, spec: &LimitSpec, n: u64) -> Result<CurveMatrix> {
    if n < 3 {
        return Err(Error::param("n", format!("normalization needs n >= 3, got {n}")));
    }
    if let Some(src) = spec.source {
        if src != result.law_kind {
            return Err(Error::SpecMismatch(format!(
                "spec derived for {src:?}, result produced by {:?}",
                result.law_kind
            )));
        }
    }
    normalize_with_log_n(&result.cumulative, spec, (n as f64).ln())
}

pub fn normalize_with_log_n(curves: &CurveMatrix, spec: &LimitSpec, log_n: f64) -> Result<CurveMatrix> {
    let mut out = CurveMatrix::zeros(curves.levels.clone(), curves.s_grid.clone());
    let check_specialized = spec.omega == 1.0 && spec.gamma_exp == 0.5;
    let mu = 1.0 / spec.c;
    let sigma2 = spec.a * spec.a * mu.powi(3);
    for (li, &j) in curves.levels.iter().enumerate() {
        let cj = c_coeff(spec, j)?;
        let cj1 = c_coeff(spec, j - 1)?;
        let wj = spec.omega * j as f64;
        let scale = spec.a * cj1 * log_n.powf(spec.gamma_exp + spec.omega * (j as f64 - 1.0));
        for (si, &s) in curves.s_grid.iter().enumerate() {
            let k = curves.values[li][si];
            let centering = cj * (s * log_n).powf(wj);
            let generic = (k - centering) / scale;
            if check_specialized {
                let jf = j as f64;
                let fact_jm1 = gamma(jf);
                let fact_j = gamma(jf + 1.0);
                let num = fact_jm1 * (k - (s * log_n / mu).powi(j as i32) / fact_j);
                let den = (sigma2 * mu.powf(-2.0 * jf - 1.0) * log_n.powf(2.0 * jf - 1.0)).sqrt();
                let specialized = num / den;
                let magnitude = (k.abs() + centering.abs()) / scale;
                if (generic - specialized).abs() > 1e-9 * magnitude.max(generic.abs()).max(1e-300) {
                    return Err(Error::NormalizationMismatch(format!(
                        "level {j}, s = {s}: {generic} vs {specialized}"
                    )));
                }
            }
            out.values[li][si] = generic;
        }
    }
    Ok(out)
}

fn nested_tolerance(length: f64, abs: f64) -> Tolerance {
    Tolerance {
        abs: abs / length.max(1.0),
        rel: 1e-13,
        max_evals: 1 << 20,
    }
}

/// Covariance of `∫₀ˢ (s-y)^p dW(y)` and `∫₀ᵘ (u-z)^{p2} dW(z)`; an
/// exponent of 0 stands for `W` itself.
pub fn kernel_covariance(base: &BaseProcess, p: f64, s: f64, p2: f64, u: f64) -> Result<f64> {
    if s <= 0.0 || u <= 0.0 {
        return Ok(0.0);
    }
    let outer_abs = 1e-10;
    match (p > 0.0, p2 > 0.0) {
        (false, false) => base.covariance(s, u),
        (false, true) => one_sided(base, s, p2, u, outer_abs),
        (true, false) => one_sided(base, u, p, s, outer_abs),
        (true, true) => {
            let top_a = s.powf(p);
            let top_b = u.powf(p2);
            let inv_p = 1.0 / p;
            let inv_p2 = 1.0 / p2;
            let inner_tol = nested_tolerance(top_a, 0.1 * outer_abs);
            let outer_tol = nested_tolerance(1.0, outer_abs);
            let est = integrate(
                |a| {
                    let x = (s - a.powf(inv_p)).max(0.0);
                    if x == 0.0 {
                        return Ok(0.0);
                    }
                    integrate_split(
                        |b| base.covariance(x, (u - b.powf(inv_p2)).max(0.0)),
                        top_b,
                        (u - x).max(0.0).powf(p2),
                        inner_tol,
                    )
                },
                0.0,
                top_a,
                outer_tol,
            )?;
            Ok(est.value)
        }
    }
}

fn one_sided(base: &BaseProcess, s: f64, p2: f64, u: f64, abs: f64) -> Result<f64> {
    let top = u.powf(p2);
    let inv = 1.0 / p2;
    integrate_split(
        |b| base.covariance(s, (u - b.powf(inv)).max(0.0)),
        top,
        (u - s).max(0.0).powf(p2),
        nested_tolerance(1.0, abs),
    )
}

/// Integrates over `[0, top]` split at the kernel's diagonal kink `kink`;
/// an unsplit kink sitting on a Kronrod node can fake convergence.
fn integrate_split<F>(mut f: F, top: f64, kink: f64, tol: Tolerance) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if kink <= 0.0 || kink >= top {
        return Ok(integrate(f, 0.0, top, tol)?.value);
    }
    let half = Tolerance {
        abs: 0.5 * tol.abs,
        ..tol
    };
    let left = integrate(&mut f, 0.0, kink, half)?;
    let right = integrate(&mut f, kink, top, half)?;
    Ok(left.value + right.value)
}

/// E[R_k(s) R_j(u)] for the limit processes of `spec`.
pub fn cov_limit(spec: &LimitSpec, k: usize, s: f64, j: usize, u: f64) -> Result<f64> {
    if k == 0 || j == 0 {
        return Err(Error::param("level", "levels start at 1"));
    }
    if s < 0.0 || u < 0.0 {
        return Err(Error::param("grid", "grid points must be nonnegative"));
    }
    let (p, p2) = (spec.kernel_exponent(k), spec.kernel_exponent(j));
    match spec.base {
        // ∫(s-y)^p dB_q = q B(q, p+1) ∫(s-y)^{q+p} dB reduces the triple
        // integral to a Brownian one
        BaseProcess::RiemannLiouville { q } => {
            let factor = q * q * beta(q, p + 1.0) * beta(q, p2 + 1.0);
            Ok(factor * kernel_covariance(&BaseProcess::BrownianMotion, q + p, s, q + p2, u)?)
        }
        _ => kernel_covariance(&spec.base, p, s, p2, u),
    }
}

/// Variances of both sides of the Riemann–Liouville identity
/// `∫₀ᵘ (u-y)^α dB_q(y) = q B(q, α+1) ∫₀ᵘ (u-y)^{q+α} dB(y)`.
/// Returns `(lhs_var, rhs_var)`; α = 0 reads the left side as B_q(u).
pub fn rl_identity_check(q: f64, alpha: f64, u: f64) -> Result<(f64, f64)> {
    if !(q > 0.0) || alpha < 0.0 {
        return Err(Error::param("q/alpha", "need q > 0 and alpha >= 0"));
    }
    if u <= 0.0 {
        return Ok((0.0, 0.0));
    }
    let lhs = kernel_covariance(&BaseProcess::RiemannLiouville { q }, alpha, u, alpha, u)?;
    let factor = q * beta(q, alpha + 1.0);
    let rhs = factor
        * factor
        * kernel_covariance(&BaseProcess::BrownianMotion, q + alpha, u, q + alpha, u)?;
    Ok((lhs, rhs))
}

/// Joint covariance of (R_j(s)) over levels 1..=J and a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitCovariance {
    /// `(level, s)` for each row/column.
    pub labels: Vec<(usize, f64)>,
    pub matrix: DMatrix<f64>,
}

impl LimitCovariance {
    pub fn index_of(&self, level: usize, s: f64) -> Option<usize> {
        self.labels
            .iter()
            .position(|&(l, g)| l == level && (g - s).abs() < 1e-12)
    }
}

pub fn limit_covariance(
    spec: &LimitSpec,
    s_grid: &[f64],
    levels: &[usize],
    exec: &Executor,
) -> Result<LimitCovariance> {
    let labels: Vec<(usize, f64)> = levels
        .iter()
        .flat_map(|&j| s_grid.iter().map(move |&s| (j, s)))
        .collect();
    let dim = labels.len();
    let pairs: Vec<(usize, usize)> = (0..dim)
        .flat_map(|a| (a..dim).map(move |b| (a, b)))
        .collect();
    let idx: Vec<u64> = (0..pairs.len() as u64).collect();
    let values = exec.map(&idx, |i| {
        let (a, b) = pairs[i as usize];
        let (k, s) = labels[a];
        let (j, u) = labels[b];
        cov_limit(spec, k, s, j, u)
    })?;
    let mut matrix = DMatrix::zeros(dim, dim);
    for (&(a, b), v) in pairs.iter().zip(values) {
        matrix[(a, b)] = v;
        matrix[(b, a)] = v;
    }
    Ok(LimitCovariance { labels, matrix })
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Draws `count` joint samples of (R_1, …, R_J) on `s_grid` from the exact
/// covariance. Grid points at 0 are pinned to 0.
pub fn sample_limit_paths<R: Rng + ?Sized>(
    spec: &LimitSpec,
    s_grid: &[f64],
    max_level: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<CurveMatrix>> {
    if max_level == 0 {
        return Err(Error::param("J", "must be at least 1"));
    }
    if s_grid.iter().any(|&s| !(0.0..=1.0).contains(&s)) {
        return Err(Error::param("s_grid", "grid points must lie in [0, 1]"));
    }
    let levels: Vec<usize> = (1..=max_level).collect();
    let positive: Vec<f64> = s_grid.iter().cloned().filter(|&s| s > 0.0).collect();
    let cov = limit_covariance(spec, &positive, &levels, &Executor::Sequential)?;
    let dim = cov.labels.len();
    let factor = if dim > 0 {
        let trace = cov.matrix.trace();
        let min_eig = min_eigenvalue(&cov.matrix);
        if min_eig < -1e-8 * trace {
            return Err(Error::NotPositiveSemidefinite {
                min_eigenvalue: min_eig,
            });
        }
        let jitter = 1e-12 * trace / dim as f64;
        let mut m = cov.matrix.clone();
        for i in 0..dim {
            m[(i, i)] += jitter;
        }
        Some(
            m.cholesky()
                .ok_or(Error::NotPositiveSemidefinite {
                    min_eigenvalue: min_eig,
                })?
                .l(),
        )
    } else {
        None
    };
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut curves = CurveMatrix::zeros(levels.clone(), s_grid.to_vec());
        if let Some(l) = &factor {
            let z = DVector::from_iterator(dim, (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let x = l * z;
            for (idx, &(level, s)) in cov.labels.iter().enumerate() {
                let si = curves.grid_index(s).expect("label grid point comes from s_grid");
                curves.values[level - 1][si] = x[idx];
            }
        }
        out.push(curves);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bm(omega: f64, c: f64) -> LimitSpec {
        LimitSpec {
            omega,
            gamma_exp: omega - 0.5,
            c,
            a: 1.0,
            base: BaseProcess::BrownianMotion,
            source: None,
        }
    }

    #[test]
    fn c_coeff_examples() {
        assert_eq!(c_coeff(&bm(1.0, 1.0), 0).unwrap(), 1.0);
        assert!((c_coeff(&bm(1.0, 1.0), 3).unwrap() - 1.0 / 6.0).abs() < 1e-14);
        // Γ(3)²/Γ(5) = 4/24
        assert!((c_coeff(&bm(2.0, 1.0), 2).unwrap() - 1.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn c_coeff_overflow_is_range_error() {
        assert!(matches!(c_coeff(&bm(1.0, 1e300), 400), Err(Error::Range(_))));
    }

    #[test]
    fn cstar_examples() {
        assert!((cstar_coeff(1.0, 1.0, 1.0, 1).unwrap() - 0.5).abs() < 1e-14);
        assert!((cstar_coeff(2.0, 2.0, 1.0, 1).unwrap() - 0.5).abs() < 1e-14);
        assert!((cstar_coeff(1.0, 1.0, 1.0, 2).unwrap() - 1.0 / 24.0).abs() < 1e-15);
        let spec = LimitSpec {
            omega: 2.0,
            gamma_exp: 1.5,
            c: 0.5,
            a: 1.0,
            base: BaseProcess::RiemannLiouville { q: 1.0 },
            source: None,
        };
        assert!((c_coeff(&spec, 2).unwrap() - 1.0 / 24.0).abs() < 1e-15);
    }

    #[test]
    fn spec_rejects_gamma_outside_interval() {
        assert!(LimitSpec::new(1.0, 1.0, 1.0, 1.0, BaseProcess::BrownianMotion).is_err());
        assert!(LimitSpec::new(2.0, 0.5, 1.0, 1.0, BaseProcess::BrownianMotion).is_err());
        assert!(LimitSpec::new(1.0, 0.5, -1.0, 1.0, BaseProcess::BrownianMotion).is_err());
    }

    #[test]
    fn cov_limit_examples() {
        let spec = bm(1.0, 1.0);
        assert_eq!(cov_limit(&spec, 1, 1.0, 1, 1.0).unwrap(), 1.0);
        assert!((cov_limit(&spec, 2, 1.0, 2, 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-8);
        assert!((cov_limit(&spec, 1, 1.0, 2, 1.0).unwrap() - 0.5).abs() < 1e-8);
        let tc = LimitSpec {
            omega: 2.0,
            gamma_exp: 1.0,
            c: 1.0,
            a: 1.0,
            base: BaseProcess::TimeChangedBm { q: 2.0 },
            source: None,
        };
        assert!((cov_limit(&tc, 1, 0.5, 1, 0.7).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rl_identity_examples() {
        let (l, r) = rl_identity_check(1.0, 0.0, 2.0).unwrap();
        assert!((l - 8.0 / 3.0).abs() < 1e-9 && (r - 8.0 / 3.0).abs() < 1e-9);
        let (l, r) = rl_identity_check(1.0, 1.0, 1.0).unwrap();
        assert!((r - 0.05).abs() < 1e-9, "rhs {r}");
        assert!((l / r - 1.0).abs() < 1e-6, "lhs {l} rhs {r}");
        assert_eq!(rl_identity_check(1.0, 1.0, 0.0).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn normalization_examples() {
        let spec = bm(1.0, 1.0);
        let log_n = 10.0;
        let curves = CurveMatrix {
            s_grid: vec![0.5, 1.0],
            levels: vec![1, 2],
            values: vec![vec![5.0, 10.0], vec![0.5 * 25.0, 10.0]],
        };
        let out = normalize_with_log_n(&curves, &spec, log_n).unwrap();
        assert!(out.values[0][0].abs() < 1e-15);
        assert!(out.values[1][0].abs() < 1e-13);
        assert!((out.values[1][1] - (-40.0 / 1000f64.sqrt())).abs() < 1e-12);
        assert!((out.values[0][1] - 0.0).abs() < 1e-15);
    }

    #[test]
    fn zero_grid_paths_are_zero() {
        let mut rng = crate::rng::seeded(1);
        let paths = sample_limit_paths(&bm(1.0, 1.0), &[0.0], 2, 10, &mut rng).unwrap();
        assert!(paths.iter().all(|p| p.values.iter().flatten().all(|&v| v == 0.0)));
    }
}
