//! Monte Carlo estimation and parameter sweeps.
//!
//! Run `r` of grid point `i` uses seed `mix_seed(base_seed, [i, r])`, so
//! every replica is independent of how many threads execute it. Replicas
//! are gathered in index order before anything is summed.
//!
//! A `deadline` axis is special: it only moves the threshold applied to a
//! run's completion time, so all deadline values of one scenario point
//! share the same runs (common random numbers). The seed index of such a
//! row is the index of its point in the grid with the deadline axis
//! removed, which makes p̂ non-decreasing along the deadline axis by
//! construction.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::CartographyError;
use crate::kernel::random::mix_seed;
use crate::kernel::trace::Trace;
use crate::scenario::Scenario;
use crate::sim::simulate;
use crate::time::SimTime;
use crate::verify::{check_exclusive_access, completion_times, Property};

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Name of the deadline pseudo-axis.
pub const DEADLINE_AXIS: &str = "deadline";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub successes: u64,
    pub runs: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Estimate {
    pub fn from_counts(successes: u64, runs: u64) -> Self {
        assert!(runs > 0 && successes <= runs);
        let (ci_low, ci_high) = wilson(successes, runs, Z95);
        Estimate {
            successes,
            runs,
            p_hat: successes as f64 / runs as f64,
            ci_low,
            ci_high,
        }
    }
}

/// Wilson score interval.
pub fn wilson(successes: u64, runs: u64, z: f64) -> (f64, f64) {
    let n = runs as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let lo = if successes == 0 {
        0.0
    } else {
        (centre - half).max(0.0)
    };
    let hi = if successes == runs {
        1.0
    } else {
        (centre + half).min(1.0)
    };
    (lo, hi)
}

/// What one run contributes to any property.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunSummary {
    /// When the last job finished, if all did.
    pub all_done_at: Option<SimTime>,
    pub exclusive: bool,
}

impl RunSummary {
    pub fn of(trace: &Trace, n_clients: usize) -> Self {
        let done = completion_times(trace, n_clients)
            .expect("simulator traces name only scenario clients");
        let all_done_at = done
            .iter()
            .try_fold(SimTime::ZERO, |acc, t| t.map(|t| acc.max(t)));
        RunSummary {
            all_done_at,
            exclusive: check_exclusive_access(trace).holds,
        }
    }

    /// Panics on `NoDeadTransitions`, which is not a per-run property.
    pub fn holds(&self, property: Property) -> bool {
        match property {
            Property::ExclusiveAccess => self.exclusive,
            Property::AllJobsComplete => self.all_done_at.is_some(),
            Property::DeadlineMet(d) => self.all_done_at.is_some_and(|t| t <= d),
            Property::NoDeadTransitions => panic!("edge coverage is a batch property"),
        }
    }
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
}

/// Summaries of `runs` seeded runs of one scenario point, in run order.
pub fn run_point(scenario: &Scenario, point: u64, runs: u64) -> Vec<RunSummary> {
    let n = scenario.clients.len();
    (0..runs)
        .into_par_iter()
        .map(|r| {
            let trace = simulate(scenario, mix_seed(scenario.seed, &[point, r]));
            RunSummary::of(&trace, n)
        })
        .collect()
}

/// Estimates the probability that `property` holds, with a Wilson 95%
/// interval. `threads = 0` lets the runtime choose.
pub fn estimate(scenario: &Scenario, property: Property, runs: u64, threads: usize) -> Estimate {
    assert!(runs >= 1, "at least one run");
    let summaries = pool(threads).install(|| run_point(scenario, 0, runs));
    let successes = summaries.iter().filter(|s| s.holds(property)).count() as u64;
    Estimate::from_counts(successes, runs)
}

#[derive(Clone, Debug)]
pub struct ParameterGrid {
    pub base: Scenario,
    pub axes: Vec<(String, Vec<String>)>,
    pub runs_per_point: u64,
    pub property: Property,
}

struct Point {
    /// Position in the full odometer order.
    index: u64,
    values: Vec<String>,
    /// Index among the points with the deadline axis removed.
    seed_index: u64,
    property: Property,
}

impl ParameterGrid {
    pub fn new(
        base: Scenario,
        axes: Vec<(String, Vec<String>)>,
        runs_per_point: u64,
        property: Property,
    ) -> Result<Self, CartographyError> {
        let grid = ParameterGrid {
            base,
            axes,
            runs_per_point,
            property,
        };
        grid.validate()?;
        Ok(grid)
    }

    fn validate(&self) -> Result<(), CartographyError> {
        if self.runs_per_point == 0 {
            return Err(CartographyError::NoRuns);
        }
        if self.property == Property::NoDeadTransitions {
            return Err(CartographyError::BatchProperty);
        }
        for (i, (name, values)) in self.axes.iter().enumerate() {
            if self.axes[..i].iter().any(|(n, _)| n == name) {
                return Err(CartographyError::DuplicateAxis(name.clone()));
            }
            if values.is_empty() {
                return Err(CartographyError::EmptyAxis(name.clone()));
            }
            if name == DEADLINE_AXIS {
                if !matches!(
                    self.property,
                    Property::DeadlineMet(_) | Property::AllJobsComplete
                ) {
                    return Err(CartographyError::DeadlineAxisWithoutDeadline);
                }
                for v in values {
                    v.parse::<SimTime>()
                        .map_err(|_| crate::error::ScenarioError::BadValue {
                            key: DEADLINE_AXIS.into(),
                            value: v.clone(),
                            expected: "duration",
                        })?;
                }
            } else if !Scenario::is_parameter(name) {
                return Err(CartographyError::UnknownAxis(name.clone()));
            } else {
                for v in values {
                    self.base.with_override(name, v)?;
                }
            }
        }
        Ok(())
    }

    fn scenario_axes(&self) -> impl Iterator<Item = &(String, Vec<String>)> {
        self.axes.iter().filter(|(n, _)| n != DEADLINE_AXIS)
    }

    /// Number of grid points.
    pub fn len(&self) -> u64 {
        self.axes.iter().map(|(_, v)| v.len() as u64).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Points in odometer order (last axis fastest).
    fn points(&self) -> Vec<Point> {
        let radices: Vec<usize> = self.axes.iter().map(|(_, v)| v.len()).collect();
        let scenario_radices: Vec<usize> = self.scenario_axes().map(|(_, v)| v.len()).collect();
        let mut out = Vec::new();
        let mut digits = vec![0usize; radices.len()];
        for index in 0..self.len() {
            let values: Vec<String> = digits
                .iter()
                .zip(&self.axes)
                .map(|(&d, (_, vals))| vals[d].clone())
                .collect();
            let mut seed_index = 0u64;
            let mut k = 0;
            let mut property = self.property;
            for ((d, (name, _)), value) in digits.iter().zip(&self.axes).zip(&values) {
                if name == DEADLINE_AXIS {
                    property = Property::DeadlineMet(value.parse().expect("validated"));
                } else {
                    seed_index = seed_index * scenario_radices[k] as u64 + *d as u64;
                    k += 1;
                }
            }
            out.push(Point {
                index,
                values,
                seed_index,
                property,
            });
            for pos in (0..digits.len()).rev() {
                digits[pos] += 1;
                if digits[pos] < radices[pos] {
                    break;
                }
                digits[pos] = 0;
            }
        }
        out
    }

    /// The scenario for each seed index, in seed-index order.
    fn scenarios(&self) -> Vec<Scenario> {
        let axes: Vec<_> = self.scenario_axes().collect();
        let count: usize = axes.iter().map(|(_, v)| v.len()).product();
        let mut out = Vec::with_capacity(count);
        let mut digits = vec![0usize; axes.len()];
        for _ in 0..count {
            let mut s = self.base.clone();
            for (d, (name, vals)) in digits.iter().zip(&axes) {
                s = s.with_override(name, &vals[*d]).expect("validated");
            }
            out.push(s);
            for pos in (0..digits.len()).rev() {
                digits[pos] += 1;
                if digits[pos] < axes[pos].1.len() {
                    break;
                }
                digits[pos] = 0;
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CartographyRow {
    pub point_index: u64,
    pub values: Vec<String>,
    pub estimate: Estimate,
}

/// Estimates every grid point. The result does not depend on `threads`.
pub fn run_grid(grid: &ParameterGrid, threads: usize) -> Vec<CartographyRow> {
    let scenarios = grid.scenarios();
    let summaries: Vec<Vec<RunSummary>> = pool(threads).install(|| {
        scenarios
            .iter()
            .enumerate()
            .map(|(i, s)| run_point(s, i as u64, grid.runs_per_point))
            .collect()
    });
    grid.points()
        .into_iter()
        .map(|p| {
            let runs = &summaries[p.seed_index as usize];
            let successes = runs.iter().filter(|s| s.holds(p.property)).count() as u64;
            CartographyRow {
                point_index: p.index,
                values: p.values,
                estimate: Estimate::from_counts(successes, grid.runs_per_point),
            }
        })
        .collect()
}

/// CSV map: `point_index,<axes>,p_hat,ci_low,ci_high,runs`.
pub fn run_cartography(grid: &ParameterGrid, threads: usize) -> String {
    let rows = run_grid(grid, threads);
    let mut out = String::from("point_index");
    for (name, _) in &grid.axes {
        out.push(',');
        out.push_str(name);
    }
    out.push_str(",p_hat,ci_low,ci_high,runs\n");
    for row in rows {
        write!(out, "{}", row.point_index).unwrap();
        for v in &row.values {
            write!(out, ",{v}").unwrap();
        }
        let e = row.estimate;
        writeln!(
            out,
            ",{:.6},{:.6},{:.6},{}",
            e.p_hat, e.ci_low, e.ci_high, e.runs
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_known_values() {
        let (lo, hi) = wilson(50, 100, Z95);
        assert!((lo - 0.403_831).abs() < 1e-5, "{lo}");
        assert!((hi - 0.596_169).abs() < 1e-5, "{hi}");
        let (lo, hi) = wilson(0, 10, Z95);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.277_533).abs() < 1e-5, "{hi}");
        let (lo, hi) = wilson(10, 10, Z95);
        assert!((lo - 0.722_467).abs() < 1e-5, "{lo}");
        assert_eq!(hi, 1.0);
    }

    fn base() -> Scenario {
        Scenario::parse("n_machines = 1\nclient.0.nb_nodes = 1\nhorizon = 200\n").unwrap()
    }

    #[test]
    fn odometer_order() {
        let g = ParameterGrid::new(
            base(),
            vec![
                ("machine.lambda".into(), vec!["0".into(), "0.5".into()]),
                (
                    "n_machines".into(),
                    vec!["1".into(), "2".into(), "3".into()],
                ),
            ],
            1,
            Property::AllJobsComplete,
        )
        .unwrap();
        let rows = run_grid(&g, 1);
        let got: Vec<Vec<&str>> = rows
            .iter()
            .map(|r| r.values.iter().map(String::as_str).collect())
            .collect();
        assert_eq!(
            got,
            [
                ["0", "1"],
                ["0", "2"],
                ["0", "3"],
                ["0.5", "1"],
                ["0.5", "2"],
                ["0.5", "3"]
            ]
        );
    }

    #[test]
    fn grid_validation() {
        let bad = |axes: Vec<(&str, Vec<&str>)>, runs, prop| {
            let axes = axes
                .into_iter()
                .map(|(n, v)| (n.to_string(), v.into_iter().map(String::from).collect()))
                .collect();
            ParameterGrid::new(base(), axes, runs, prop).unwrap_err()
        };
        assert!(matches!(
            bad(
                vec![("machine.colour", vec!["1"])],
                1,
                Property::AllJobsComplete
            ),
            CartographyError::UnknownAxis(_)
        ));
        assert!(matches!(
            bad(vec![("n_machines", vec![])], 1, Property::AllJobsComplete),
            CartographyError::EmptyAxis(_)
        ));
        assert!(matches!(
            bad(
                vec![("n_machines", vec!["1"]), ("n_machines", vec!["2"])],
                1,
                Property::AllJobsComplete
            ),
            CartographyError::DuplicateAxis(_)
        ));
        assert!(matches!(
            bad(vec![], 0, Property::AllJobsComplete),
            CartographyError::NoRuns
        ));
        assert!(matches!(
            bad(vec![("deadline", vec!["10"])], 1, Property::ExclusiveAccess),
            CartographyError::DeadlineAxisWithoutDeadline
        ));
        assert!(matches!(
            bad(
                vec![("machine.lambda", vec!["2"])],
                1,
                Property::AllJobsComplete
            ),
            CartographyError::Scenario(_)
        ));
    }

    #[test]
    fn empty_grid_is_one_row_equal_to_estimate() {
        let mut s = base();
        s.machine.lambda = "0.5".parse().unwrap();
        let g = ParameterGrid::new(s.clone(), vec![], 200, Property::AllJobsComplete).unwrap();
        let rows = run_grid(&g, 2);
        assert_eq!(rows.len(), 1);
        assert_eq!(
            rows[0].estimate,
            estimate(&s, Property::AllJobsComplete, 200, 3)
        );
    }
}
