//! Error-vs-computation sweep harness.
//!
//! Runs grids of approximation configurations over a fixed cloud and support,
//! seed-averages the measured errors, extracts per-scheme Pareto frontiers
//! under FLOP budgets, and emits plotting-ready CSV.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx::{run_config, ApproxParams, ApproxReport, LshFamily, Scheme, SupportDistances};
use crate::error::{Error, Result};
use crate::geometry::{PointCloud, SupportSet};
use crate::seeding::derive_seed;

/// Search grid for the sweep. LSH cells are the cross product of
/// `r_values x m1_values x m2_values`; RFF cells come from `rff_features`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub schemes: Vec<Scheme>,
    pub r_values: Vec<f64>,
    pub m1_values: Vec<usize>,
    pub m2_values: Vec<usize>,
    pub rff_features: Vec<usize>,
    pub budgets: Vec<u64>,
    pub seeds_per_cell: usize,
}

impl SweepGrid {
    /// The full search ranges of the numerical study: bucket widths from 0.01
    /// to 5 in steps of 0.05, table and function counts from 1 to 20.
    pub fn paper_default() -> Self {
        SweepGrid {
            schemes: vec![Scheme::Rff, Scheme::OrOnly, Scheme::OrAnd],
            r_values: (0..100).map(|i| 0.01 + 0.05 * i as f64).collect(),
            m1_values: (1..=20).collect(),
            m2_values: (1..=20).collect(),
            rff_features: (4..=12).map(|p| 1usize << p).collect(),
            budgets: Vec::new(),
            seeds_per_cell: 20,
        }
    }

    /// Trimmed grid that keeps the sweep within interactive budgets at a few
    /// thousand points while spanning the same parameter ranges.
    pub fn desk_default() -> Self {
        SweepGrid {
            schemes: vec![Scheme::Rff, Scheme::OrOnly, Scheme::OrAnd],
            r_values: (0..50).map(|i| 0.01 + 0.10 * i as f64).collect(),
            m1_values: (1..=20).collect(),
            m2_values: vec![1, 2, 3, 4, 6, 8],
            rff_features: vec![2, 4, 8, 16, 32, 64, 128, 256],
            budgets: Vec::new(),
            seeds_per_cell: 20,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() {
            return Err(Error::invalid("sweep grid has no schemes"));
        }
        if self.seeds_per_cell == 0 {
            return Err(Error::invalid("sweep grid needs at least one seed per cell"));
        }
        let lsh = self.schemes.iter().any(|s| *s != Scheme::Rff);
        if lsh && (self.r_values.is_empty() || self.m1_values.is_empty()) {
            return Err(Error::invalid("LSH sweep needs r and m1 values"));
        }
        if self.schemes.contains(&Scheme::OrAnd) && self.m2_values.is_empty() {
            return Err(Error::invalid("OR & AND sweep needs m2 values"));
        }
        if self.schemes.contains(&Scheme::Rff) && self.rff_features.is_empty() {
            return Err(Error::invalid("RFF sweep needs feature counts"));
        }
        if self.r_values.iter().any(|&r| !(r > 0.0)) {
            return Err(Error::invalid("bucket widths must be positive"));
        }
        if self.m1_values.iter().any(|&m| m == 0) || self.m2_values.iter().any(|&m| m == 0) {
            return Err(Error::invalid("table and function counts must be at least 1"));
        }
        if !self.budgets.windows(2).all(|w| w[0] <= w[1]) {
            return Err(Error::invalid("budgets must be sorted ascending"));
        }
        Ok(())
    }

    // m2 values actually hashed: the OR-only slice is m2 = 1, the OR & AND
    // search includes every configured value.
    fn effective_m2(&self) -> Vec<usize> {
        let mut m2: Vec<usize> = Vec::new();
        if self.schemes.contains(&Scheme::OrOnly) {
            m2.push(1);
        }
        if self.schemes.contains(&Scheme::OrAnd) {
            m2.extend(self.m2_values.iter().copied());
        }
        m2.sort_unstable();
        m2.dedup();
        m2
    }
}

/// Default budget ladder: multiples of `n * d` FLOPs, spanning near-linear
/// up to a tenth of the quadratic kernel-evaluation cost.
pub fn default_budgets(n: usize, dim: usize) -> Vec<u64> {
    let nd = (n * dim) as u64;
    let ceiling = (n as u64) * (n as u64) * (4 * dim as u64) / 10;
    let mut budgets: Vec<u64> = [10, 25, 50, 100, 200, 400, 600, 1200]
        .iter()
        .map(|m| m * nd)
        .filter(|&b| b <= ceiling)
        .collect();
    if budgets.is_empty() {
        budgets.push(ceiling.max(nd));
    }
    budgets
}

/// Run every `(scheme, cell, seed)` combination of the grid. Reports are
/// returned in canonical order (scheme, config, seed), independent of the
/// execution schedule.
pub fn run_sweep(
    cloud: &PointCloud,
    support: &SupportSet,
    grid: &SweepGrid,
    master_seed: u64,
) -> Result<Vec<ApproxReport>> {
    grid.validate()?;
    if support.is_empty() {
        return Err(Error::invalid("support set is empty"));
    }
    let sd = SupportDistances::new(cloud, support);
    let mut reports: Vec<ApproxReport> = Vec::new();

    let m2_list = grid.effective_m2();
    if !m2_list.is_empty() {
        let m1_max = *grid.m1_values.iter().max().expect("validated nonempty");
        let mut jobs: Vec<(usize, usize, usize)> = Vec::new();
        for (r_idx, _) in grid.r_values.iter().enumerate() {
            for &m2 in &m2_list {
                for trial in 0..grid.seeds_per_cell {
                    jobs.push((r_idx, m2, trial));
                }
            }
        }
        let families: Vec<Result<Vec<ApproxReport>>> = jobs
            .par_iter()
            .map(|&(r_idx, m2, trial)| {
                let r = grid.r_values[r_idx];
                let key = ((m2 as u64) << 40) | ((r_idx as u64) << 20) | trial as u64;
                let seed = derive_seed(master_seed, "sweep-lsh", key);
                let family = LshFamily::run(cloud, &sd, m1_max, m2, r, seed)?;
                Ok(grid.m1_values.iter().map(|&m1| family.report(m1)).collect())
            })
            .collect();
        for family in families {
            reports.extend(family?);
        }
    }

    if grid.schemes.contains(&Scheme::Rff) {
        let mut jobs: Vec<(usize, usize)> = Vec::new();
        for (d_idx, _) in grid.rff_features.iter().enumerate() {
            for trial in 0..grid.seeds_per_cell {
                jobs.push((d_idx, trial));
            }
        }
        let cells: Vec<Result<ApproxReport>> = jobs
            .par_iter()
            .map(|&(d_idx, trial)| {
                let n_features = grid.rff_features[d_idx];
                let key = ((d_idx as u64) << 20) | trial as u64;
                let seed = derive_seed(master_seed, "sweep-rff", key);
                run_config(cloud, &sd, &ApproxParams::Rff { n_features }, seed)
            })
            .collect();
        for cell in cells {
            reports.push(cell?);
        }
    }

    reports.sort_by(report_order);
    Ok(reports)
}

fn report_order(a: &ApproxReport, b: &ApproxReport) -> std::cmp::Ordering {
    config_key(a).cmp(&config_key(b)).then(a.seed.cmp(&b.seed))
}

type ConfigKey = (u8, usize, usize, usize, u64);

fn config_key(r: &ApproxReport) -> ConfigKey {
    let scheme_rank = match r.scheme {
        Scheme::Rff => 0u8,
        Scheme::OrOnly => 1,
        Scheme::OrAnd => 2,
    };
    (
        scheme_rank,
        r.n_features.unwrap_or(0),
        r.m1.unwrap_or(0),
        r.m2.unwrap_or(0),
        // Positive floats order correctly by their bit patterns.
        r.r.map_or(0, f64::to_bits),
    )
}

/// Seed-averaged statistics of one configuration cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub scheme: Scheme,
    pub m1: Option<usize>,
    pub m2: Option<usize>,
    pub r: Option<f64>,
    pub n_features: Option<usize>,
    pub mean_epsilon: f64,
    pub epsilon_stderr: f64,
    pub mean_flops: u64,
    pub trials: usize,
}

/// Group per-seed reports into per-cell means with standard errors.
pub fn aggregate(reports: &[ApproxReport]) -> Vec<CellStats> {
    let mut cells: BTreeMap<ConfigKey, Vec<&ApproxReport>> = BTreeMap::new();
    for report in reports {
        cells.entry(config_key(report)).or_default().push(report);
    }
    cells
        .into_values()
        .map(|group| {
            let t = group.len() as f64;
            let mean_eps = group.iter().map(|r| r.epsilon).sum::<f64>() / t;
            let var = if group.len() > 1 {
                group.iter().map(|r| (r.epsilon - mean_eps).powi(2)).sum::<f64>() / (t - 1.0)
            } else {
                0.0
            };
            let stderr = (var / t).sqrt();
            let flops_sum: u128 = group.iter().map(|r| r.flops as u128).sum();
            let mean_flops = ((flops_sum + group.len() as u128 / 2) / group.len() as u128) as u64;
            let first = group[0];
            CellStats {
                scheme: first.scheme,
                m1: first.m1,
                m2: first.m2,
                r: first.r,
                n_features: first.n_features,
                mean_epsilon: mean_eps,
                epsilon_stderr: stderr,
                mean_flops,
                trials: group.len(),
            }
        })
        .collect()
}

/// Best configuration of one scheme under one FLOP budget. `best` is `None`
/// when no configuration fits the budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub scheme: Scheme,
    pub budget: u64,
    pub best: Option<CellStats>,
}

/// Per scheme and budget, the minimum seed-averaged error among
/// configurations whose mean FLOPs fit the budget.
///
/// The OR & AND search space includes the one-function-per-table slice, so
/// its frontier draws from every LSH cell; when that slice is all there is,
/// the curve is reported as OR-only.
pub fn pareto(cells: &[CellStats], budgets: &[u64], schemes: &[Scheme]) -> Vec<ParetoPoint> {
    let mut out = Vec::new();
    let mut emitted: Vec<Scheme> = Vec::new();
    for &scheme in &[Scheme::Rff, Scheme::OrOnly, Scheme::OrAnd] {
        if !schemes.contains(&scheme) {
            continue;
        }
        let candidates: Vec<&CellStats> = match scheme {
            Scheme::Rff => cells.iter().filter(|c| c.scheme == Scheme::Rff).collect(),
            Scheme::OrOnly => cells.iter().filter(|c| c.m2 == Some(1)).collect(),
            Scheme::OrAnd => cells.iter().filter(|c| c.scheme != Scheme::Rff).collect(),
        };
        let label = if scheme == Scheme::OrAnd
            && !candidates.iter().any(|c| c.m2.is_some_and(|m| m > 1))
        {
            Scheme::OrOnly
        } else {
            scheme
        };
        if emitted.contains(&label) {
            continue;
        }
        emitted.push(label);
        for &budget in budgets {
            let mut best: Option<&CellStats> = None;
            for cell in &candidates {
                if cell.mean_flops > budget {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some(b) => {
                        cell.mean_epsilon < b.mean_epsilon
                            || (cell.mean_epsilon == b.mean_epsilon && cell.mean_flops < b.mean_flops)
                    }
                };
                if better {
                    best = Some(cell);
                }
            }
            out.push(ParetoPoint { scheme: label, budget, best: best.cloned() });
        }
    }
    out
}

pub const CURVES_HEADER: &str = "scheme,budget_flops,epsilon,epsilon_stderr,m1,m2,r,D";

/// Write the frontier as CSV. Budgets with no feasible configuration are
/// omitted; callers can inspect `ParetoPoint::best` to report them.
pub fn emit_curves<W: Write>(frontier: &[ParetoPoint], mut writer: W) -> Result<()> {
    fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
        v.as_ref().map_or(String::new(), |x| x.to_string())
    }
    writeln!(writer, "{CURVES_HEADER}")?;
    for point in frontier {
        let Some(best) = &point.best else { continue };
        writeln!(
            writer,
            "{},{},{},{},{},{},{},{}",
            point.scheme,
            point.budget,
            best.mean_epsilon,
            best.epsilon_stderr,
            opt(&best.m1),
            opt(&best.m2),
            opt(&best.r),
            opt(&best.n_features)
        )?;
    }
    Ok(())
}

/// Parse the CSV produced by [`emit_curves`].
pub fn read_curves<R: std::io::Read>(reader: R) -> Result<Vec<ParetoPoint>> {
    let mut rd = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for record in rd.records() {
        let record = record?;
        if record.len() != 8 {
            return Err(Error::invalid(format!("curve row has {} fields", record.len())));
        }
        let parse_opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                Ok(Some(s.parse::<f64>().map_err(|e| Error::invalid(e.to_string()))?))
            }
        };
        let scheme: Scheme = record[0].parse()?;
        let budget: u64 = record[1].parse().map_err(|e| Error::invalid(format!("{e}")))?;
        let mean_epsilon: f64 = record[2].parse().map_err(|e| Error::invalid(format!("{e}")))?;
        let epsilon_stderr: f64 = record[3].parse().map_err(|e| Error::invalid(format!("{e}")))?;
        let m1 = parse_opt(&record[4])?.map(|v| v as usize);
        let m2 = parse_opt(&record[5])?.map(|v| v as usize);
        let r = parse_opt(&record[6])?;
        let n_features = parse_opt(&record[7])?.map(|v| v as usize);
        out.push(ParetoPoint {
            scheme,
            budget,
            best: Some(CellStats {
                scheme,
                m1,
                m2,
                r,
                n_features,
                mean_epsilon,
                epsilon_stderr,
                mean_flops: 0,
                trials: 0,
            }),
        });
    }
    Ok(out)
}

/// Write per-seed reports as CSV.
pub fn write_reports_csv<W: Write>(reports: &[ApproxReport], mut writer: W) -> Result<()> {
    writeln!(writer, "{}", ApproxReport::CSV_HEADER)?;
    for report in reports {
        writeln!(writer, "{}", report.csv_row())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{gen_uniform_square, knn_support};

    fn tiny_grid() -> SweepGrid {
        SweepGrid {
            schemes: vec![Scheme::Rff, Scheme::OrOnly, Scheme::OrAnd],
            r_values: vec![0.3, 0.8],
            m1_values: vec![1, 2, 4],
            m2_values: vec![1, 2],
            rff_features: vec![8, 16],
            budgets: vec![5_000, 20_000, 100_000, 1_000_000],
            seeds_per_cell: 3,
        }
    }

    #[test]
    fn default_grids_are_valid() {
        let paper = SweepGrid::paper_default();
        paper.validate().unwrap();
        assert_eq!(paper.r_values.len(), 100);
        assert!((paper.r_values[0] - 0.01).abs() < 1e-12);
        assert!((paper.r_values[99] - 4.96).abs() < 1e-12);
        assert_eq!(paper.m1_values.len(), 20);
        assert_eq!(paper.m2_values.len(), 20);
        SweepGrid::desk_default().validate().unwrap();
    }

    #[test]
    fn sweep_report_count_and_determinism() {
        let cloud = gen_uniform_square(120, 0.7, 1).unwrap();
        let support = knn_support(&cloud, 8).unwrap();
        let grid = tiny_grid();
        let reports = run_sweep(&cloud, &support, &grid, 7).unwrap();
        // LSH: 2 r x 2 m2 x 3 m1 x 3 seeds; RFF: 2 D x 3 seeds.
        assert_eq!(reports.len(), 2 * 2 * 3 * 3 + 2 * 3);
        let again = run_sweep(&cloud, &support, &grid, 7).unwrap();
        assert_eq!(reports, again);
        let other_seed = run_sweep(&cloud, &support, &grid, 8).unwrap();
        assert_ne!(reports, other_seed);
    }

    #[test]
    fn one_cell_grid_yields_one_report_per_scheme() {
        let cloud = gen_uniform_square(40, 0.4, 6).unwrap();
        let support = knn_support(&cloud, 3).unwrap();
        let grid = SweepGrid {
            schemes: vec![Scheme::Rff, Scheme::OrOnly, Scheme::OrAnd],
            r_values: vec![0.5],
            m1_values: vec![2],
            m2_values: vec![2],
            rff_features: vec![8],
            budgets: vec![1_000_000],
            seeds_per_cell: 1,
        };
        let reports = run_sweep(&cloud, &support, &grid, 3).unwrap();
        assert_eq!(reports.len(), 3);
        let schemes: Vec<Scheme> = reports.iter().map(|r| r.scheme).collect();
        assert!(schemes.contains(&Scheme::Rff));
        assert!(schemes.contains(&Scheme::OrOnly));
        assert!(schemes.contains(&Scheme::OrAnd));
    }

    #[test]
    fn or_only_is_the_m2_one_slice() {
        let cloud = gen_uniform_square(90, 0.6, 3).unwrap();
        let support = knn_support(&cloud, 6).unwrap();
        let mut grid = tiny_grid();
        grid.schemes = vec![Scheme::OrOnly];
        let or_only = run_sweep(&cloud, &support, &grid, 11).unwrap();
        grid.schemes = vec![Scheme::OrAnd];
        grid.m2_values = vec![1];
        let or_and_slice = run_sweep(&cloud, &support, &grid, 11).unwrap();
        assert_eq!(or_only, or_and_slice);
        // Frontier output is identical too, including the scheme label.
        let budgets = [50_000u64, 500_000];
        let f1 = pareto(&aggregate(&or_only), &budgets, &[Scheme::OrOnly]);
        let f2 = pareto(&aggregate(&or_and_slice), &budgets, &[Scheme::OrAnd]);
        let mut a = Vec::new();
        emit_curves(&f1, &mut a).unwrap();
        let mut b = Vec::new();
        emit_curves(&f2, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn aggregate_collapses_seeds() {
        let cloud = gen_uniform_square(60, 0.5, 2).unwrap();
        let support = knn_support(&cloud, 4).unwrap();
        let grid = tiny_grid();
        let reports = run_sweep(&cloud, &support, &grid, 5).unwrap();
        let cells = aggregate(&reports);
        assert_eq!(cells.len(), 2 * 2 * 3 + 2);
        for cell in &cells {
            assert_eq!(cell.trials, 3);
            assert!(cell.mean_epsilon >= 0.0);
        }
    }

    #[test]
    fn pareto_single_report_is_frontier() {
        let cloud = gen_uniform_square(50, 0.5, 9).unwrap();
        let support = knn_support(&cloud, 4).unwrap();
        let sd = SupportDistances::new(&cloud, &support);
        let report =
            run_config(&cloud, &sd, &ApproxParams::Rff { n_features: 8 }, 3).unwrap();
        let cells = aggregate(std::slice::from_ref(&report));
        let frontier = pareto(&cells, &[report.flops + 1], &[Scheme::Rff]);
        assert_eq!(frontier.len(), 1);
        let best = frontier[0].best.as_ref().unwrap();
        assert_eq!(best.mean_epsilon, report.epsilon);
    }

    #[test]
    fn pareto_ignores_dominated_and_is_monotone() {
        let mk = |eps: f64, flops: u64| CellStats {
            scheme: Scheme::Rff,
            m1: None,
            m2: None,
            r: None,
            n_features: Some(8),
            mean_epsilon: eps,
            epsilon_stderr: 0.0,
            mean_flops: flops,
            trials: 1,
        };
        let cells = vec![mk(0.5, 100), mk(0.1, 1000), mk(0.9, 500)];
        let budgets = [100, 500, 1000, 2000];
        let frontier = pareto(&cells, &budgets, &[Scheme::Rff]);
        let eps: Vec<f64> =
            frontier.iter().map(|p| p.best.as_ref().unwrap().mean_epsilon).collect();
        assert_eq!(eps, vec![0.5, 0.5, 0.1, 0.1]);
        // Adding a dominated cell changes nothing.
        let mut with_dominated = cells.clone();
        with_dominated.push(mk(0.7, 800));
        let frontier2 = pareto(&with_dominated, &budgets, &[Scheme::Rff]);
        assert_eq!(frontier, frontier2);
        // Infeasible smallest budget is flagged as None.
        let frontier3 = pareto(&cells, &[50], &[Scheme::Rff]);
        assert!(frontier3[0].best.is_none());
    }

    #[test]
    fn curves_round_trip() {
        let cloud = gen_uniform_square(80, 0.6, 4).unwrap();
        let support = knn_support(&cloud, 5).unwrap();
        let grid = tiny_grid();
        let reports = run_sweep(&cloud, &support, &grid, 2).unwrap();
        let cells = aggregate(&reports);
        let frontier = pareto(&cells, &grid.budgets, &grid.schemes);
        let mut buf = Vec::new();
        emit_curves(&frontier, &mut buf).unwrap();
        let parsed = read_curves(buf.as_slice()).unwrap();
        let mut buf2 = Vec::new();
        emit_curves(&parsed, &mut buf2).unwrap();
        assert_eq!(buf, buf2);
        // Row count: schemes x budgets minus flagged empties.
        let emitted = frontier.iter().filter(|p| p.best.is_some()).count();
        assert_eq!(parsed.len(), emitted);
    }

    #[test]
    fn empty_frontier_emits_header_only() {
        let mut buf = Vec::new();
        emit_curves(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{CURVES_HEADER}\n"));
    }

    #[test]
    fn default_budget_ladder_is_sorted_and_capped() {
        let budgets = default_budgets(3000, 2);
        assert!(budgets.windows(2).all(|w| w[0] < w[1]));
        let ceiling = 3000u64 * 3000 * 8 / 10;
        assert!(budgets.iter().all(|&b| b <= ceiling));
        assert!(budgets.contains(&(600 * 6000)));
    }
}
