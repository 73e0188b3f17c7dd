//! CSV serialization of occupancy statistics, limit objects and reports.
//!
//! Statistic files share the header `replicate,level,grid_point,value`;
//! `grid_point` is the s value, or the ball count r for histograms. Rows
//! are ordered by replicate, level, then grid point. Floats use Rust's
//! shortest round-trip decimal form, which is locale independent.

use std::fmt::Display;
use std::io::{self, Write};

use crate::limits::{CurveMatrix, LimitCovariance};
use crate::occupancy::OccupancyResult;
use crate::verify::ExperimentReport;

pub const STATISTIC_HEADER: &str = "replicate,level,grid_point,value";
pub const COVARIANCE_HEADER: &str = "level,grid_point,level2,grid_point2,value";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    /// K_{n,j,r} by ball count r.
    Histogram,
    /// K_{n,j}(s).
    Cumulative,
    /// ρ_j(n^s).
    ThresholdCounts,
}

impl Statistic {
    pub const ALL: [Statistic; 3] = [Statistic::Histogram, Statistic::Cumulative, Statistic::ThresholdCounts];

    pub fn file_name(self) -> &'static str {
        match self {
            Statistic::Histogram => "histogram.csv",
            Statistic::Cumulative => "cumulative.csv",
            Statistic::ThresholdCounts => "threshold_counts.csv",
        }
    }
}

fn row<W: Write>(w: &mut W, fields: &[&dyn Display]) -> io::Result<()> {
    for (i, f) in fields.iter().enumerate() {
        if i > 0 {
            w.write_all(b",")?;
        }
        write!(w, "{f}")?;
    }
    w.write_all(b"\n")
}

/// Writes one statistic of a list of replicates; replicate ids are list positions.
pub fn write_statistic<W: Write>(w: &mut W, stat: Statistic, results: &[OccupancyResult]) -> io::Result<()> {
    writeln!(w, "{STATISTIC_HEADER}")?;
    for (rep, result) in results.iter().enumerate() {
        match stat {
            Statistic::Histogram => {
                for level in &result.levels {
                    for (r, k) in &level.histogram {
                        row(w, &[&rep, &level.level, r, k])?;
                    }
                }
            }
            Statistic::Cumulative => write_matrix_rows(w, rep, &result.cumulative)?,
            Statistic::ThresholdCounts => write_matrix_rows(w, rep, &result.threshold_counts)?,
        }
    }
    Ok(())
}

fn write_matrix_rows<W: Write>(w: &mut W, rep: usize, m: &CurveMatrix) -> io::Result<()> {
    for (li, level) in m.levels.iter().enumerate() {
        for (si, s) in m.s_grid.iter().enumerate() {
            row(w, &[&rep, level, s, &m.values[li][si]])?;
        }
    }
    Ok(())
}

/// Curves (normalized replicates or sampled limit paths) in the statistic schema.
pub fn write_curves<W: Write>(w: &mut W, curves: &[CurveMatrix]) -> io::Result<()> {
    writeln!(w, "{STATISTIC_HEADER}")?;
    for (rep, m) in curves.iter().enumerate() {
        write_matrix_rows(w, rep, m)?;
    }
    Ok(())
}

/// The covariance matrix in long form, one row per entry, row-major.
pub fn write_covariance<W: Write>(w: &mut W, cov: &LimitCovariance) -> io::Result<()> {
    writeln!(w, "{COVARIANCE_HEADER}")?;
    for (a, (k, s)) in cov.labels.iter().enumerate() {
        for (b, (j, u)) in cov.labels.iter().enumerate() {
            row(w, &[k, s, j, u, &cov.matrix[(a, b)]])?;
        }
    }
    Ok(())
}

pub fn write_moments<W: Write>(w: &mut W, report: &ExperimentReport) -> io::Result<()> {
    writeln!(w, "n,level,grid_point,raw_mean,raw_variance,mean,variance,theory_variance")?;
    for m in report.summaries.iter().flat_map(|s| &s.moments) {
        row(w, &[&m.n, &m.level, &m.s, &m.raw_mean, &m.raw_variance, &m.mean, &m.variance, &m.theory_variance])?;
    }
    Ok(())
}

/// Empirical against limit covariance/correlation for every checked pair.
pub fn write_pairs<W: Write>(w: &mut W, report: &ExperimentReport) -> io::Result<()> {
    writeln!(
        w,
        "n,level,grid_point,level2,grid_point2,covariance,correlation,theory_covariance,theory_correlation"
    )?;
    for p in report.summaries.iter().flat_map(|s| &s.pairs) {
        row(
            w,
            &[
                &p.n,
                &p.level,
                &p.s,
                &p.level2,
                &p.s2,
                &p.covariance,
                &p.correlation,
                &p.theory_covariance,
                &p.theory_correlation,
            ],
        )?;
    }
    Ok(())
}

pub fn write_ks<W: Write>(w: &mut W, report: &ExperimentReport) -> io::Result<()> {
    writeln!(w, "n,level,grid_point,statistic,p_value,skipped")?;
    for k in report.summaries.iter().flat_map(|s| &s.ks) {
        row(w, &[&k.n, &k.level, &k.s, &k.statistic, &k.p_value, &k.skipped])?;
    }
    Ok(())
}

pub fn write_consistency<W: Write>(w: &mut W, report: &ExperimentReport) -> io::Result<()> {
    writeln!(w, "n,level,median")?;
    for c in report.summaries.iter().flat_map(|s| &s.consistency) {
        row(w, &[&c.n, &c.level, &c.median])?;
    }
    Ok(())
}
