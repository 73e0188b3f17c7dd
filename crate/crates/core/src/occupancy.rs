//! Nested occupancy scheme: n balls descend a hierarchy of boxes whose
//! probabilities are products of independent fragmentation-law copies.
//!
//! Balls are moved by counts, never one by one. A node with `c` balls
//! splits them among its children with a cascade of conditional binomials,
//! so the work per level is proportional to the number of materialized
//! boxes, not to `n`.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fraglaw::{expand_tail, sample_prefix, FragmentationLaw, LawKind, Prefix};
use crate::limits::CurveMatrix;

/// Relative slack when comparing floating box probabilities to thresholds.
const PROB_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    /// Materialize every box with P(v) >= 1/n, occupied or not; threshold
    /// counts ρ_j(n^s) are then exact on [0, 1].
    #[default]
    Exact,
    /// Materialize occupied boxes only.
    OccupiedOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyConfig {
    pub n: u64,
    pub depth: usize,
    pub s_grid: Vec<f64>,
    pub mode: CountMode,
    /// Largest tolerated probability that some ball was misallocated
    /// because of law truncation.
    pub error_budget_cap: f64,
}

pub fn default_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

impl OccupancyConfig {
    pub fn new(n: u64, depth: usize) -> Self {
        OccupancyConfig {
            n,
            depth,
            s_grid: default_grid(),
            mode: CountMode::Exact,
            error_budget_cap: 1e-3,
        }
    }

    pub fn with_grid(mut self, s_grid: Vec<f64>) -> Self {
        self.s_grid = s_grid;
        self
    }

    pub fn with_mode(mut self, mode: CountMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::param("occupancy.n", "must be at least 1"));
        }
        if self.depth == 0 {
            return Err(Error::param("occupancy.depth", "must be at least 1"));
        }
        validate_grid(&self.s_grid)?;
        if !(self.error_budget_cap > 0.0) {
            return Err(Error::param("occupancy.error_budget_cap", "must be positive"));
        }
        Ok(())
    }
}

pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::param("s_grid", "must not be empty"));
    }
    if grid.iter().any(|s| !(0.0..=1.0).contains(s)) {
        return Err(Error::param("s_grid", "points must lie in [0, 1]"));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param("s_grid", "must be strictly increasing"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxRecord {
    pub prob: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelOccupancy {
    pub level: usize,
    /// r ↦ K_{n,j,r}, occupied boxes only.
    pub histogram: BTreeMap<u64, u64>,
    pub boxes: Vec<BoxRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyResult {
    pub n: u64,
    pub law_kind: LawKind,
    pub mode: CountMode,
    pub levels: Vec<LevelOccupancy>,
    /// K_{n,j}(s) = #{level-j boxes with at least ⌈n^{1-s}⌉ balls}.
    pub cumulative: CurveMatrix,
    /// ρ_j(n^s) = #{level-j boxes with P(v) >= n^{-s}} among materialized boxes.
    pub threshold_counts: CurveMatrix,
    pub error_budget: f64,
}

impl OccupancyResult {
    /// Checks ball conservation and the monotonicity relations; returns a
    /// description of the first violation.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let n = self.n;
        let grid = &self.cumulative.s_grid;
        let mut prev_occupied = 0u64;
        for (li, level) in self.levels.iter().enumerate() {
            let j = level.level;
            let balls: u128 = level
                .histogram
                .iter()
                .map(|(&r, &k)| r as u128 * k as u128)
                .sum();
            if balls != n as u128 {
                return Err(format!("level {j}: {balls} balls accounted for, expected {n}"));
            }
            let row = &self.cumulative.values[li];
            if row.windows(2).any(|w| w[0] > w[1]) {
                return Err(format!("level {j}: K(s) decreases in s"));
            }
            let occupied: u64 = level.histogram.values().sum();
            if grid.last() == Some(&1.0) && *row.last().unwrap() as u64 != occupied {
                return Err(format!("level {j}: K(1) differs from the occupied-box count"));
            }
            if occupied > n {
                return Err(format!("level {j}: {occupied} occupied boxes exceed n"));
            }
            if occupied < prev_occupied {
                return Err(format!("level {j}: fewer occupied boxes than level {}", j - 1));
            }
            prev_occupied = occupied;
            for (si, &s) in grid.iter().enumerate() {
                let rho = self.threshold_counts.values[li][si];
                if rho > (n as f64).powf(s) * (1.0 + 1e-9) {
                    return Err(format!("level {j}: rho(n^{s}) = {rho} exceeds n^s"));
                }
            }
        }
        Ok(())
    }

    pub fn level(&self, j: usize) -> Option<&LevelOccupancy> {
        self.levels.iter().find(|l| l.level == j)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation {
    pub counts: Vec<u64>,
    pub tail: u64,
}

/// Splits `count` balls multinomially over `prefix.probs` and its tail.
pub fn allocate_children<R: Rng + ?Sized>(count: u64, prefix: &Prefix, rng: &mut R) -> Result<Allocation> {
    allocate_counts(count, &prefix.probs, prefix.tail_mass, rng)
}

/// Sequential conditional binomials: box k receives Bin(left, p_k / rest_k)
/// where rest_k is the mass of box k and everything after it, summed from
/// the far end to keep small residuals accurate.
pub(crate) fn allocate_counts<R: Rng + ?Sized>(
    count: u64,
    probs: &[f64],
    tail_mass: f64,
    rng: &mut R,
) -> Result<Allocation> {
    let mut counts = vec![0u64; probs.len()];
    if count == 0 {
        return Ok(Allocation { counts, tail: 0 });
    }
    let mut suffix = vec![0.0; probs.len() + 1];
    suffix[probs.len()] = tail_mass;
    for k in (0..probs.len()).rev() {
        suffix[k] = suffix[k + 1] + probs[k];
    }
    let mut left = count;
    for (k, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        let rest = suffix[k];
        if p < 0.0 || rest <= 0.0 {
            return Err(Error::NegativeResidual(rest.min(p)));
        }
        let ratio = p / rest;
        if ratio > 1.0 + 1e-9 {
            return Err(Error::NegativeResidual(rest - p));
        }
        let taken = if ratio >= 1.0 {
            left
        } else if ratio <= 0.0 {
            0
        } else {
            Binomial::new(left, ratio)
                .map_err(|e| Error::Range(e.to_string()))?
                .sample(rng)
        };
        counts[k] = taken;
        left -= taken;
    }
    if left > 0 && !(tail_mass > 0.0) {
        return Err(Error::NegativeResidual(tail_mass));
    }
    Ok(Allocation { counts, tail: left })
}

/// ⌈n^{1-s}⌉, exact for grid points whose 1-s is a rational with small
/// denominator.
pub fn ceil_root(n: u64, s: f64) -> u64 {
    if n <= 1 || s >= 1.0 {
        return 1;
    }
    if s <= 0.0 {
        return n;
    }
    let exponent = 1.0 - s;
    let log_target = exponent * (n as f64).ln();
    let rational = rational_approx(exponent);
    // m >= n^{1-s}
    let reaches = |m: u64| -> bool {
        let lm = (m as f64).ln();
        if (lm - log_target).abs() > 1e-9 * log_target.abs().max(1.0) {
            return lm > log_target;
        }
        match rational {
            Some((a, b)) => BigUint::from(m).pow(b) >= BigUint::from(n).pow(a),
            None => lm >= log_target,
        }
    };
    let mut m = (log_target.exp().ceil() as u64).clamp(1, n);
    while m > 1 && reaches(m - 1) {
        m -= 1;
    }
    while !reaches(m) {
        m += 1;
    }
    m
}

fn rational_approx(x: f64) -> Option<(u32, u32)> {
    (1..=1000u32).find_map(|b| {
        let a = (x * b as f64).round();
        ((x - a / b as f64).abs() < 1e-13).then_some((a as u32, b))
    })
}

#[derive(Debug, Clone, Copy)]
struct Node {
    mass: f64,
    count: u64,
}

struct Splitter<'a> {
    law: &'a FragmentationLaw,
    n: f64,
    exact: bool,
    /// Per-ball truncation allowance for laws without exact tails.
    per_ball: Option<f64>,
}

impl Splitter<'_> {
    fn keep(&self, mass: f64, count: u64) -> bool {
        count > 0 || (self.exact && mass * self.n >= 1.0 - PROB_SLACK)
    }

    fn threshold(&self, node: &Node, scale: f64, balls: u64) -> f64 {
        let mut tau = (scale / (balls as f64 + 1.0)).min(0.5 * scale);
        if self.exact {
            tau = tau.min(1.0 / (self.n * node.mass));
        }
        // truncation only misplaces balls; empty nodes need exactness alone
        if let (Some(per_ball), true) = (self.per_ball, balls > 0) {
            tau = tau.min(scale * per_ball);
        }
        tau.max(f64::MIN_POSITIVE)
    }

    /// Splits one node; pushes kept children and returns the misallocation
    /// probability bound incurred.
    fn split<R: Rng + ?Sized>(&self, node: Node, out: &mut Vec<Node>, rng: &mut R) -> Result<f64> {
        let mut budget = 0.0;
        let mut prefix = sample_prefix(self.law, self.threshold(&node, 1.0, node.count), rng)?;
        budget += node.count as f64 * prefix.mass_deficit;
        let alloc = allocate_children(node.count, &prefix, rng)?;
        for (&p, &c) in prefix.probs.iter().zip(&alloc.counts) {
            let mass = node.mass * p;
            if self.keep(mass, c) {
                out.push(Node { mass, count: c });
            }
        }
        let mut tail_balls = alloc.tail;
        let mut consumed = prefix.probs.len();
        loop {
            let tail = prefix.tail_mass;
            let needed = tail_balls > 0 || (self.exact && tail * node.mass * self.n >= 1.0);
            if !needed || !(tail > 0.0) {
                break;
            }
            let old_deficit = prefix.mass_deficit;
            prefix = expand_tail(self.law, &prefix, self.threshold(&node, tail, tail_balls), rng)?;
            budget += tail_balls as f64 * (prefix.mass_deficit - old_deficit) / tail;
            let alloc = allocate_counts(tail_balls, &prefix.probs[consumed..], prefix.tail_mass, rng)?;
            for (&p, &c) in prefix.probs[consumed..].iter().zip(&alloc.counts) {
                let mass = node.mass * p;
                if self.keep(mass, c) {
                    out.push(Node { mass, count: c });
                }
            }
            tail_balls = alloc.tail;
            consumed = prefix.probs.len();
        }
        Ok(budget)
    }
}

/// Throws `cfg.n` balls into the nested hierarchy down to `cfg.depth`.
pub fn simulate<R: Rng + ?Sized>(law: &FragmentationLaw, cfg: &OccupancyConfig, rng: &mut R) -> Result<OccupancyResult> {
    cfg.validate()?;
    let n = cfg.n as f64;
    let exact = cfg.mode == CountMode::Exact;
    let per_ball = match law.kind() {
        LawKind::StickBreaking => None,
        // Σ over a level of count × deficit stays below cap/(10 J)
        _ => Some(0.1 * cfg.error_budget_cap / (cfg.depth as f64 * n)),
    };
    let splitter = Splitter {
        law,
        n,
        exact,
        per_ball,
    };
    let levels_idx: Vec<usize> = (1..=cfg.depth).collect();
    let mut cumulative = CurveMatrix::zeros(levels_idx.clone(), cfg.s_grid.clone());
    let mut threshold_counts = CurveMatrix::zeros(levels_idx, cfg.s_grid.clone());
    let thresholds: Vec<u64> = cfg.s_grid.iter().map(|&s| ceil_root(cfg.n, s)).collect();
    let prob_cut: Vec<f64> = cfg
        .s_grid
        .iter()
        .map(|&s| n.powf(-s) * (1.0 - PROB_SLACK))
        .collect();

    let mut frontier = vec![Node {
        mass: 1.0,
        count: cfg.n,
    }];
    let mut levels = Vec::with_capacity(cfg.depth);
    let mut budget = 0.0;
    for j in 1..=cfg.depth {
        let mut children = Vec::new();
        for &node in &frontier {
            budget += splitter.split(node, &mut children, rng)?;
        }
        let mut histogram = BTreeMap::new();
        for child in children.iter().filter(|c| c.count > 0) {
            *histogram.entry(child.count).or_insert(0u64) += 1;
        }
        for (si, &r_min) in thresholds.iter().enumerate() {
            cumulative.values[j - 1][si] = histogram.range(r_min..).map(|(_, &k)| k).sum::<u64>() as f64;
            threshold_counts.values[j - 1][si] =
                children.iter().filter(|c| c.mass >= prob_cut[si]).count() as f64;
        }
        levels.push(LevelOccupancy {
            level: j,
            histogram,
            boxes: children
                .iter()
                .map(|c| BoxRecord {
                    prob: c.mass,
                    count: c.count,
                })
                .collect(),
        });
        frontier = children;
    }
    if budget > cfg.error_budget_cap {
        return Err(Error::ErrorBudgetExceeded {
            budget,
            cap: cfg.error_budget_cap,
        });
    }
    Ok(OccupancyResult {
        n: cfg.n,
        law_kind: law.kind(),
        mode: cfg.mode,
        levels,
        cumulative,
        threshold_counts,
        error_budget: budget,
    })
}

/// N_j(t) = #{level-j boxes with P(v) >= e^{-t}}, exact when e^t <= n.
pub fn counting_function(result: &OccupancyResult, j: usize, t: f64) -> Result<u64> {
    if result.mode != CountMode::Exact {
        return Err(Error::param("mode", "counting function needs an Exact-mode result"));
    }
    let level = result
        .level(j)
        .ok_or_else(|| Error::param("level", format!("level {j} was not simulated")))?;
    let exp_t = t.exp();
    if exp_t > result.n as f64 * (1.0 + PROB_SLACK) {
        return Err(Error::ExactnessLoss {
            exp_t,
            n: result.n,
        });
    }
    let cut = (-t).exp() * (1.0 - PROB_SLACK);
    Ok(level.boxes.iter().filter(|b| b.prob >= cut).count() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fraglaw::TailState;
    use crate::rng::seeded;

    fn prefix(probs: Vec<f64>, tail: f64) -> Prefix {
        Prefix {
            probs,
            tail_mass: tail,
            mass_deficit: 0.0,
            tail_state: TailState::Stick { next_index: 1 },
        }
    }

    #[test]
    fn zero_balls() {
        let p = prefix(vec![0.5, 0.25], 0.25);
        let a = allocate_children(0, &p, &mut seeded(0)).unwrap();
        assert_eq!(a.counts, vec![0, 0]);
        assert_eq!(a.tail, 0);
    }

    #[test]
    fn single_box_takes_everything() {
        let p = prefix(vec![1.0], 0.0);
        let a = allocate_children(7, &p, &mut seeded(0)).unwrap();
        assert_eq!(a.counts, vec![7]);
        assert_eq!(a.tail, 0);
    }

    #[test]
    fn inconsistent_prefix_is_rejected() {
        let p = prefix(vec![0.5, -0.1], 0.0);
        assert!(matches!(allocate_children(5, &p, &mut seeded(0)), Err(Error::NegativeResidual(_))));
    }

    #[test]
    fn ceil_root_exact_boundaries() {
        assert_eq!(ceil_root(1_000_000, 0.5), 1000);
        assert_eq!(ceil_root(1024, 0.5), 32);
        assert_eq!(ceil_root(1024, 0.7), 8);
        assert_eq!(ceil_root(1000, 1.0 / 3.0), 100);
        assert_eq!(ceil_root(1000, 0.0), 1000);
        assert_eq!(ceil_root(1000, 1.0), 1);
        assert_eq!(ceil_root(10, 0.5), 4);
        for n in [2u64, 3, 10, 99, 1000, 12345] {
            for s in default_grid() {
                let m = ceil_root(n, s);
                let target = (n as f64).powf(1.0 - s);
                assert!(m as f64 >= target * (1.0 - 1e-12) && ((m - 1) as f64) < target * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn grid_validation() {
        assert!(validate_grid(&[0.0, 0.5, 1.0]).is_ok());
        assert!(validate_grid(&[0.5, 0.5]).is_err());
        assert!(validate_grid(&[1.0, 0.5]).is_err());
        assert!(validate_grid(&[0.0, 1.5]).is_err());
    }

    #[test]
    fn one_ball_occupies_one_chain() {
        for law in [
            FragmentationLaw::gem(1.0).unwrap(),
            FragmentationLaw::gamma_poisson_kingman(1.0).unwrap(),
            FragmentationLaw::gamma_subordinator(1.0).unwrap(),
        ] {
            let cfg = OccupancyConfig::new(1, 3);
            let r = simulate(&law, &cfg, &mut seeded(9)).unwrap();
            assert!(r.cumulative.values.iter().flatten().all(|&k| k == 1.0));
        }
    }

    #[test]
    fn counting_function_geometric() {
        let law = FragmentationLaw::constant_stick(0.5).unwrap();
        let r = simulate(&law, &OccupancyConfig::new(64, 2), &mut seeded(1)).unwrap();
        assert_eq!(counting_function(&r, 1, 5f64.ln()).unwrap(), 2);
        assert_eq!(counting_function(&r, 1, -0.5).unwrap(), 0);
        // level 2 boxes 2^{-a-b}, a, b >= 1, with a + b <= 3
        assert_eq!(counting_function(&r, 2, 8f64.ln()).unwrap(), 3);
        assert!(matches!(counting_function(&r, 1, 65f64.ln()), Err(Error::ExactnessLoss { .. })));
    }

    #[test]
    fn counting_function_needs_exact_mode() {
        let law = FragmentationLaw::gem(1.0).unwrap();
        let cfg = OccupancyConfig::new(100, 1).with_mode(CountMode::OccupiedOnly);
        let r = simulate(&law, &cfg, &mut seeded(1)).unwrap();
        assert!(counting_function(&r, 1, 1.0).is_err());
    }
}
