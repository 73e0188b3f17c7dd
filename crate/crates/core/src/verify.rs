//! Replicated experiments comparing normalized occupancy curves with the
//! Gaussian limits.
//!
//! Replicate `i` always draws from [`replicate_rng`]`(seed, i)`, and every
//! summary is computed from replicates sorted by index, so results do not
//! depend on worker count or on how replicates were split into batches.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::fraglaw::{FragmentationLaw, LawKind, LawParams, StickParams};
use crate::limits::{cov_limit, normalize_curves, CurveMatrix, LimitSpec};
use crate::occupancy::{simulate, CountMode, OccupancyConfig, OccupancyResult};
use crate::rng::replicate_rng;
use crate::special::digamma;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToleranceProfile {
    /// Largest accepted |empirical − limit| correlation.
    pub correlation: f64,
    /// Family-wise KS significance, split over the tested marginals.
    pub ks_alpha: f64,
    /// Standard-error multiplier for mean checks against exact oracles.
    pub se_multiplier: f64,
    pub variance_ratio_low: f64,
    pub variance_ratio_high: f64,
    /// Share of cross-level pairs whose correlation error must not grow
    /// from the first to the last n of the schedule.
    pub trend_fraction: f64,
}

impl Default for ToleranceProfile {
    fn default() -> Self {
        ToleranceProfile {
            correlation: 0.15,
            ks_alpha: 0.01,
            se_multiplier: 3.0,
            variance_ratio_low: 0.8,
            variance_ratio_high: 1.2,
            trend_fraction: 0.75,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub law: FragmentationLaw,
    /// Depth, grid, mode and error-budget cap; `n` is replaced by each
    /// entry of `n_schedule`.
    pub occupancy: OccupancyConfig,
    pub spec: LimitSpec,
    pub replicates: usize,
    pub n_schedule: Vec<u64>,
    pub seed: u64,
    pub tolerance: ToleranceProfile,
    /// (level, s) points whose pairwise correlations are checked.
    pub cells: Vec<(usize, f64)>,
    /// (level, s) points whose variance ratio and KS fit are checked.
    pub marginals: Vec<(usize, f64)>,
    pub executor: Executor,
}

impl ExperimentConfig {
    /// Cells default to every level at s ∈ {0.5, 1} (those on the grid).
    pub fn new(law: FragmentationLaw, spec: LimitSpec, occupancy: OccupancyConfig, n_schedule: Vec<u64>, replicates: usize, seed: u64) -> Self {
        let cells = default_cells(&occupancy);
        ExperimentConfig {
            marginals: cells.clone(),
            law,
            occupancy,
            spec,
            replicates,
            n_schedule,
            seed,
            tolerance: ToleranceProfile::default(),
            cells,
            executor: Executor::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.law.validate()?;
        self.occupancy.validate()?;
        self.spec.validate()?;
        if self.replicates < 2 {
            return Err(Error::param("experiment.replicates", "need at least 2 replicates"));
        }
        if self.n_schedule.is_empty() {
            return Err(Error::param("experiment.n_schedule", "must not be empty"));
        }
        if self.n_schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("experiment.n_schedule", "must be strictly increasing"));
        }
        if self.n_schedule[0] < 3 {
            return Err(Error::param("experiment.n_schedule", "ball counts must be at least 3"));
        }
        if let Some(source) = self.spec.source {
            if source != self.law.kind() {
                return Err(Error::SpecMismatch(format!(
                    "spec derived for {source:?}, law is {:?}",
                    self.law.kind()
                )));
            }
        }
        for &(j, s) in self.cells.iter().chain(&self.marginals) {
            if j == 0 || j > self.occupancy.depth {
                return Err(Error::param("experiment.cells", format!("level {j} outside 1..={}", self.occupancy.depth)));
            }
            if !self.occupancy.s_grid.iter().any(|&g| (g - s).abs() < 1e-12) {
                return Err(Error::param("experiment.cells", format!("s = {s} is not a grid point")));
            }
        }
        let t = &self.tolerance;
        if !(t.ks_alpha > 0.0 && t.ks_alpha < 1.0) {
            return Err(Error::param("tolerance.ks_alpha", "must lie in (0, 1)"));
        }
        if !(t.variance_ratio_low <= t.variance_ratio_high) {
            return Err(Error::param("tolerance.variance_ratio", "low bound exceeds high bound"));
        }
        Ok(())
    }
}

pub fn default_cells(occupancy: &OccupancyConfig) -> Vec<(usize, f64)> {
    (1..=occupancy.depth)
        .flat_map(|j| {
            [0.5, 1.0]
                .into_iter()
                .filter(|s| occupancy.s_grid.iter().any(|g| (g - s).abs() < 1e-12))
                .map(move |s| (j, s))
        })
        .collect()
}

/// One simulated replicate at one ball count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    pub index: u64,
    pub cumulative: CurveMatrix,
    pub threshold_counts: CurveMatrix,
    pub normalized: CurveMatrix,
    pub error_budget: f64,
    /// First violated structural invariant, if any.
    pub violation: Option<String>,
}

fn run_one(law: &FragmentationLaw, spec: &LimitSpec, occupancy: &OccupancyConfig, seed: u64, index: u64) -> Result<(Replicate, OccupancyResult)> {
    let mut rng = replicate_rng(seed, index);
    let result = simulate(law, occupancy, &mut rng)?;
    let normalized = normalize_curves(&result, spec, occupancy.n)?;
    let replicate = Replicate {
        index,
        cumulative: result.cumulative.clone(),
        threshold_counts: result.threshold_counts.clone(),
        normalized,
        error_budget: result.error_budget,
        violation: result.check_invariants().err(),
    };
    Ok((replicate, result))
}

/// Simulates the replicates with the given indices at ball count `n`.
pub fn simulate_batch(cfg: &ExperimentConfig, n: u64, indices: &[u64]) -> Result<Vec<Replicate>> {
    let occupancy = OccupancyConfig {
        n,
        ..cfg.occupancy.clone()
    };
    cfg.executor
        .map(indices, |i| Ok(run_one(&cfg.law, &cfg.spec, &occupancy, cfg.seed, i)?.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub n: u64,
    pub level: usize,
    pub s: f64,
    /// Mean of the raw count K_{n,j}(s).
    pub raw_mean: f64,
    pub raw_variance: f64,
    pub mean: f64,
    pub variance: f64,
    pub theory_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub n: u64,
    pub level: usize,
    pub s: f64,
    pub level2: usize,
    pub s2: f64,
    pub covariance: f64,
    pub correlation: f64,
    pub theory_covariance: f64,
    pub theory_correlation: f64,
}

impl PairRow {
    pub fn deviation(&self) -> f64 {
        (self.correlation - self.theory_correlation).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsRow {
    pub n: u64,
    pub level: usize,
    pub s: f64,
    pub statistic: f64,
    pub p_value: f64,
    /// Set when the marginal has no random limit to test against.
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub n: u64,
    pub level: usize,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    /// Advisory verdicts are reported but do not decide the run.
    pub advisory: bool,
    pub detail: String,
}

/// Moment summary of one ball count, computed from index-sorted replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: u64,
    pub moments: Vec<MomentRow>,
    pub pairs: Vec<PairRow>,
    pub ks: Vec<KsRow>,
    pub consistency: Vec<ConsistencyRow>,
    pub max_error_budget: f64,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub law: LawKind,
    pub spec: LimitSpec,
    pub replicates: usize,
    pub seed: u64,
    pub n_schedule: Vec<u64>,
    pub s_grid: Vec<f64>,
    pub depth: usize,
    pub cells: Vec<(usize, f64)>,
    pub marginals: Vec<(usize, f64)>,
    pub summaries: Vec<Summary>,
    pub verdicts: Vec<Verdict>,
    /// Normalized curves per schedule entry and replicate; written to CSV
    /// rather than the JSON summary.
    #[serde(skip)]
    pub normalized: Vec<(u64, Vec<CurveMatrix>)>,
}

impl ExperimentReport {
    /// True iff every non-advisory verdict passed.
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.advisory || v.passed)
    }

    pub fn summary(&self, n: u64) -> Option<&Summary> {
        self.summaries.iter().find(|s| s.n == n)
    }
}

/// Limit covariances needed by the summaries: the full (j, s) grid
/// diagonal plus every pair of cells.
type Cell = (usize, f64);

struct Targets {
    diag: Vec<Vec<f64>>,
    pairs: Vec<(Cell, Cell, f64)>,
}

fn targets(cfg: &ExperimentConfig) -> Result<Targets> {
    let levels: Vec<usize> = (1..=cfg.occupancy.depth).collect();
    let grid = &cfg.occupancy.s_grid;
    let cells: Vec<(usize, f64)> = levels
        .iter()
        .flat_map(|&j| grid.iter().map(move |&s| (j, s)))
        .collect();
    let idx: Vec<u64> = (0..cells.len() as u64).collect();
    let flat = cfg.executor.map(&idx, |i| {
        let (j, s) = cells[i as usize];
        cov_limit(&cfg.spec, j, s, j, s)
    })?;
    let diag = flat.chunks(grid.len()).map(|c| c.to_vec()).collect();
    let mut pair_cells = Vec::new();
    for a in 0..cfg.cells.len() {
        for b in a + 1..cfg.cells.len() {
            pair_cells.push((cfg.cells[a], cfg.cells[b]));
        }
    }
    let idx: Vec<u64> = (0..pair_cells.len() as u64).collect();
    let values = cfg.executor.map(&idx, |i| {
        let ((k, s), (j, u)) = pair_cells[i as usize];
        cov_limit(&cfg.spec, k, s, j, u)
    })?;
    Ok(Targets {
        diag,
        pairs: pair_cells
            .into_iter()
            .zip(values)
            .map(|((a, b), v)| (a, b, v))
            .collect(),
    })
}

/// Summarizes replicates of ball count `n`; the input order is irrelevant.
pub fn summarize(cfg: &ExperimentConfig, n: u64, mut replicates: Vec<Replicate>) -> Result<Summary> {
    let t = targets(cfg)?;
    summarize_with(cfg, n, &mut replicates, &t)
}

fn summarize_with(cfg: &ExperimentConfig, n: u64, replicates: &mut [Replicate], t: &Targets) -> Result<Summary> {
    replicates.sort_by_key(|r| r.index);
    let grid = &cfg.occupancy.s_grid;
    let column = |li: usize, si: usize| -> Vec<f64> { replicates.iter().map(|r| r.normalized.values[li][si]).collect() };
    let mut moments = Vec::new();
    for li in 0..cfg.occupancy.depth {
        for (si, &s) in grid.iter().enumerate() {
            let xs = column(li, si);
            let raw: Vec<f64> = replicates.iter().map(|r| r.cumulative.values[li][si]).collect();
            moments.push(MomentRow {
                n,
                level: li + 1,
                s,
                raw_mean: stats::mean(&raw),
                raw_variance: stats::variance(&raw),
                mean: stats::mean(&xs),
                variance: stats::variance(&xs),
                theory_variance: t.diag[li][si],
            });
        }
    }
    let grid_index = |s: f64| grid.iter().position(|&g| (g - s).abs() < 1e-12).expect("cell on grid");
    let mut ks = Vec::new();
    for &(j, s) in &cfg.marginals {
        let si = grid_index(s);
        let xs = column(j - 1, si);
        let var = t.diag[j - 1][si];
        let skipped = cfg.law.is_deterministic() || !(var > 0.0);
        let result = if skipped {
            stats::KsResult {
                statistic: 0.0,
                p_value: 1.0,
            }
        } else {
            let sd = var.sqrt();
            stats::ks_one_sample(&xs, |x| stats::normal_cdf(x / sd))
        };
        ks.push(KsRow {
            n,
            level: j,
            s,
            statistic: result.statistic,
            p_value: result.p_value,
            skipped,
        });
    }
    let mut pairs = Vec::new();
    for &((k, s), (j, u), cov) in &t.pairs {
        let xs = column(k - 1, grid_index(s));
        let ys = column(j - 1, grid_index(u));
        let vk = t.diag[k - 1][grid_index(s)];
        let vj = t.diag[j - 1][grid_index(u)];
        pairs.push(PairRow {
            n,
            level: k,
            s,
            level2: j,
            s2: u,
            covariance: stats::covariance(&xs, &ys),
            correlation: stats::correlation(&xs, &ys),
            theory_covariance: cov,
            theory_correlation: cov / (vk * vj).sqrt(),
        });
    }
    let consistency = if consistency_capable(cfg) {
        (1..=cfg.occupancy.depth)
            .map(|j| ConsistencyRow {
                n,
                level: j,
                median: stats::median(
                    &replicates
                        .iter()
                        .map(|r| sup_gap(&r.cumulative, &r.threshold_counts, &cfg.spec, j, n))
                        .collect::<Vec<_>>(),
                ),
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(Summary {
        n,
        moments,
        pairs,
        ks,
        consistency,
        max_error_budget: replicates.iter().map(|r| r.error_budget).fold(0.0, f64::max),
        violations: replicates
            .iter()
            .filter_map(|r| r.violation.as_ref().map(|v| format!("replicate {}: {v}", r.index)))
            .collect(),
    })
}

fn consistency_capable(cfg: &ExperimentConfig) -> bool {
    cfg.law.kind() == LawKind::StickBreaking && cfg.occupancy.mode == CountMode::Exact
}

/// sup over the grid of |K_{n,j}(s) − ρ_j(n^s)| / (log n)^{γ+ω(j−1)}.
fn sup_gap(cumulative: &CurveMatrix, thresholds: &CurveMatrix, spec: &LimitSpec, j: usize, n: u64) -> f64 {
    let li = j - 1;
    let sup = cumulative.values[li]
        .iter()
        .zip(&thresholds.values[li])
        .map(|(k, rho)| (k - rho).abs())
        .fold(0.0, f64::max);
    sup / (n as f64).ln().powf(spec.gamma_exp + spec.kernel_exponent(j))
}

/// θ of a GEM(θ) law, whose level-1 count has the exact Ewens mean.
fn ewens_theta(law: &FragmentationLaw) -> Option<f64> {
    match &law.params {
        LawParams::StickBreaking(StickParams::BetaTheta1 { theta }) => Some(*theta),
        _ => None,
    }
}

/// E K_n for the Ewens partition: Σ_{i<n} θ/(θ+i) = θ(ψ(θ+n) − ψ(θ)).
pub fn ewens_mean(theta: f64, n: u64) -> f64 {
    theta * (digamma(theta + n as f64) - digamma(theta))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let t = targets(cfg)?;
    let indices: Vec<u64> = (0..cfg.replicates as u64).collect();
    let mut summaries = Vec::new();
    let mut normalized = Vec::new();
    for &n in &cfg.n_schedule {
        let mut reps = simulate_batch(cfg, n, &indices)?;
        summaries.push(summarize_with(cfg, n, &mut reps, &t)?);
        normalized.push((n, reps.into_iter().map(|r| r.normalized).collect()));
    }
    let verdicts = verdicts(cfg, &summaries);
    Ok(ExperimentReport {
        law: cfg.law.kind(),
        spec: cfg.spec,
        replicates: cfg.replicates,
        seed: cfg.seed,
        n_schedule: cfg.n_schedule.clone(),
        s_grid: cfg.occupancy.s_grid.clone(),
        depth: cfg.occupancy.depth,
        cells: cfg.cells.clone(),
        marginals: cfg.marginals.clone(),
        summaries,
        verdicts,
        normalized,
    })
}

fn verdict(name: &str, passed: bool, advisory: bool, detail: String) -> Verdict {
    Verdict {
        name: name.to_string(),
        passed,
        advisory,
        detail,
    }
}

fn verdicts(cfg: &ExperimentConfig, summaries: &[Summary]) -> Vec<Verdict> {
    let tol = &cfg.tolerance;
    let last = summaries.last().expect("schedule is non-empty");
    // without a random environment the limit theorem does not apply
    let advisory = cfg.law.is_deterministic();
    let mut out = Vec::new();

    let violations: Vec<&String> = summaries.iter().flat_map(|s| &s.violations).collect();
    out.push(verdict(
        "structural_invariants",
        violations.is_empty(),
        false,
        match violations.first() {
            Some(v) => format!("{} violations, first: {v}", violations.len()),
            None => format!("{} replicates × {} ball counts clean", cfg.replicates, summaries.len()),
        },
    ));

    let budget = summaries.iter().map(|s| s.max_error_budget).fold(0.0, f64::max);
    out.push(verdict(
        "error_budget",
        budget <= cfg.occupancy.error_budget_cap,
        false,
        format!("max {budget:e} vs cap {:e}", cfg.occupancy.error_budget_cap),
    ));

    if let Some(theta) = ewens_theta(&cfg.law) {
        let m = cfg.replicates as f64;
        let s1 = cfg.occupancy.s_grid.iter().position(|&s| s == 1.0);
        if let Some(si) = s1 {
            let mut ok = true;
            let mut detail = Vec::new();
            for s in summaries {
                let row = &s.moments[si];
                let exact = ewens_mean(theta, s.n);
                let se = (row.raw_variance / m).sqrt();
                let z = (row.raw_mean - exact) / se;
                ok &= z.abs() <= tol.se_multiplier;
                detail.push(format!("n={}: mean {:.4} exact {:.4} ({z:+.2} SE)", s.n, row.raw_mean, exact));
            }
            out.push(verdict("exact_mean", ok, false, detail.join("; ")));
        }
    }

    let grid = &cfg.occupancy.s_grid;
    let cell_moment = |s: &Summary, j: usize, x: f64| -> MomentRow {
        let si = grid.iter().position(|&g| (g - x).abs() < 1e-12).expect("cell on grid");
        s.moments[(j - 1) * grid.len() + si].clone()
    };
    let mut ok = true;
    let mut detail = Vec::new();
    for &(j, s) in &cfg.marginals {
        let row = cell_moment(last, j, s);
        if !(row.theory_variance > 0.0) {
            continue;
        }
        let ratio = row.variance / row.theory_variance;
        ok &= ratio >= tol.variance_ratio_low && ratio <= tol.variance_ratio_high;
        detail.push(format!("(j={j}, s={s}): {ratio:.4}"));
    }
    out.push(verdict(
        "variance_ratio",
        ok,
        advisory,
        format!("n={}: {}", last.n, detail.join(", ")),
    ));

    let tested: Vec<&KsRow> = last.ks.iter().filter(|k| !k.skipped).collect();
    if tested.is_empty() {
        out.push(verdict("ks_marginal", true, true, "skipped: no random limit marginal".into()));
    } else {
        let level = tol.ks_alpha / tested.len() as f64;
        let worst = tested
            .iter()
            .min_by(|a, b| a.p_value.total_cmp(&b.p_value))
            .expect("non-empty");
        out.push(verdict(
            "ks_marginal",
            worst.p_value > level,
            advisory,
            format!(
                "n={}: min p = {:.3e} at (j={}, s={}), D = {:.4}, level {:.2e}",
                last.n, worst.p_value, worst.level, worst.s, worst.statistic, level
            ),
        ));
    }

    if !last.pairs.is_empty() {
        let bad: Vec<String> = last
            .pairs
            .iter()
            .filter(|p| !(p.deviation() <= tol.correlation))
            .map(|p| {
                format!(
                    "(j={},s={};j={},s={}) {:.4} vs {:.4}",
                    p.level, p.s, p.level2, p.s2, p.correlation, p.theory_correlation
                )
            })
            .collect();
        out.push(verdict(
            "correlation",
            bad.is_empty(),
            advisory,
            if bad.is_empty() {
                format!("n={}: {} pairs within ±{}", last.n, last.pairs.len(), tol.correlation)
            } else {
                format!("n={}: {}", last.n, bad.join("; "))
            },
        ));
    }

    if summaries.len() >= 2 {
        let first = &summaries[0];
        let cross: Vec<(f64, f64)> = first
            .pairs
            .iter()
            .zip(&last.pairs)
            .filter(|(p, _)| p.level != p.level2)
            .map(|(p, q)| (p.deviation(), q.deviation()))
            .collect();
        if !cross.is_empty() {
            let improved = cross.iter().filter(|(a, b)| b <= a).count();
            let needed = (tol.trend_fraction * cross.len() as f64).ceil() as usize;
            out.push(verdict(
                "correlation_trend",
                improved >= needed,
                advisory,
                format!(
                    "{improved}/{} cross-level pairs no worse at n={} than at n={} (need {needed})",
                    cross.len(),
                    last.n,
                    first.n
                ),
            ));
        }
        if !last.consistency.is_empty() {
            let mut ok = true;
            let mut detail = Vec::new();
            for j in 1..=cfg.occupancy.depth {
                let series: Vec<f64> = summaries.iter().map(|s| s.consistency[j - 1].median).collect();
                ok &= series.windows(2).all(|w| w[1] <= w[0]);
                detail.push(format!("j={j}: {series:.4?}"));
            }
            out.push(verdict("consistency_trend", ok, false, detail.join("; ")));
        }
    }
    out
}

/// Median over `m` replicates of sup_s |K_{n,j}(s) − ρ_j(n^s)| / (log n)^{γ+ω(j−1)},
/// for each n of the schedule.
pub fn consistency_series(
    law: &FragmentationLaw,
    spec: &LimitSpec,
    j: usize,
    n_schedule: &[u64],
    m: usize,
    seed: u64,
    s_grid: &[f64],
    exec: &Executor,
) -> Result<Vec<f64>> {
    if law.kind() != LawKind::StickBreaking {
        return Err(Error::param("law", "consistency needs a stick-breaking law"));
    }
    if j == 0 || m == 0 {
        return Err(Error::param("j/M", "must be positive"));
    }
    let indices: Vec<u64> = (0..m as u64).collect();
    n_schedule
        .iter()
        .map(|&n| {
            let occupancy = OccupancyConfig::new(n, j).with_grid(s_grid.to_vec());
            let gaps = exec.map(&indices, |i| {
                let mut rng = replicate_rng(seed, i);
                let r = simulate(law, &occupancy, &mut rng)?;
                Ok(sup_gap(&r.cumulative, &r.threshold_counts, spec, j, n))
            })?;
            Ok(stats::median(&gaps))
        })
        .collect()
}

/// Monte Carlo E sup_{s≤t}(N(s) − V̂(s))² / t^{2γ} for each t, with N the
/// level-1 counting function and V̂ its replicate mean on a 1/64 grid.
pub fn sup_moment_diagnostic(
    law: &FragmentationLaw,
    spec: &LimitSpec,
    t_grid: &[f64],
    m: usize,
    seed: u64,
    exec: &Executor,
) -> Result<Vec<f64>> {
    if law.kind() != LawKind::StickBreaking {
        return Err(Error::param("law", "diagnostic needs a stick-breaking law"));
    }
    if m < 2 {
        return Err(Error::param("M", "need at least 2 replicates"));
    }
    if t_grid.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::param("t_grid", "points must be positive"));
    }
    let t_max = t_grid.iter().cloned().fold(0.0, f64::max);
    let n = t_max.exp().ceil();
    if n > u64::MAX as f64 / 2.0 {
        return Err(Error::Range(format!("t = {t_max} is too large")));
    }
    let occupancy = OccupancyConfig::new(n as u64, 1).with_grid(vec![1.0]);
    let steps = (t_max * 64.0).ceil() as usize;
    let points: Vec<f64> = (0..=steps).map(|k| k as f64 / 64.0).collect();
    let indices: Vec<u64> = (0..m as u64).collect();
    let paths = exec.map(&indices, |i| {
        let mut rng = replicate_rng(seed, i);
        let r = simulate(law, &occupancy, &mut rng)?;
        let mut probs: Vec<f64> = r.levels[0].boxes.iter().map(|b| b.prob).collect();
        probs.sort_by(|a, b| b.total_cmp(a));
        Ok(points
            .iter()
            .map(|&t| {
                let cut = (-t).exp() * (1.0 - 1e-12);
                probs.partition_point(|&p| p >= cut) as f64
            })
            .collect::<Vec<f64>>())
    })?;
    let v_hat: Vec<f64> = (0..points.len())
        .map(|k| paths.iter().map(|p| p[k]).sum::<f64>() / m as f64)
        .collect();
    Ok(t_grid
        .iter()
        .map(|&t| {
            let upto = points.partition_point(|&x| x <= t + 1e-12);
            let mean_sup = paths
                .iter()
                .map(|p| {
                    (0..upto)
                        .map(|k| (p[k] - v_hat[k]).powi(2))
                        .fold(0.0, f64::max)
                })
                .sum::<f64>()
                / m as f64;
            mean_sup / t.powf(2.0 * spec.gamma_exp)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fraglaw::limit_spec_for;
    use crate::limits::BaseProcess;

    fn halves_spec() -> LimitSpec {
        LimitSpec::new(1.0, 0.5, 1.0 / 2f64.ln(), 1.0, BaseProcess::BrownianMotion).unwrap()
    }

    #[test]
    fn smoke_deterministic_environment() {
        let law = FragmentationLaw::constant_stick(0.5).unwrap();
        let cfg = ExperimentConfig::new(law, halves_spec(), OccupancyConfig::new(100, 2), vec![100], 2, 3);
        let report = run_experiment(&cfg).unwrap();
        assert!(report.summaries[0].moments.iter().all(|m| m.variance.is_finite()));
        assert!(report.summaries[0].ks.iter().all(|k| k.skipped));
        assert!(report.verdicts.iter().filter(|v| v.name != "structural_invariants" && v.name != "error_budget").all(|v| v.advisory));
    }

    #[test]
    fn config_validation() {
        let law = FragmentationLaw::gem(1.0).unwrap();
        let spec = limit_spec_for(&law).unwrap();
        let base = ExperimentConfig::new(law.clone(), spec, OccupancyConfig::new(10, 1), vec![100, 1000], 2, 0);
        assert!(base.validate().is_ok());
        let mut c = base.clone();
        c.replicates = 1;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.n_schedule = vec![1000, 100];
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.cells = vec![(2, 1.0)];
        assert!(c.validate().is_err());
        let mut c = base;
        c.spec = c.spec.with_source(LawKind::PoissonKingman);
        assert!(matches!(c.validate(), Err(Error::SpecMismatch(_))));
    }

    #[test]
    fn ewens_mean_matches_harmonic_sum() {
        let direct: f64 = (0..1000).map(|i| 2.0 / (2.0 + i as f64)).sum();
        assert!((ewens_mean(2.0, 1000) - direct).abs() < 1e-10);
    }

    #[test]
    fn consistency_rejects_poisson_kingman() {
        let law = FragmentationLaw::gamma_poisson_kingman(1.0).unwrap();
        let spec = limit_spec_for(&law).unwrap();
        assert!(consistency_series(&law, &spec, 1, &[100], 2, 0, &[0.0, 1.0], &Executor::Sequential).is_err());
    }
}
