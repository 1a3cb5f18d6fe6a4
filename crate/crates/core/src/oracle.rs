//! Exact probabilities for tiny scenarios by exhaustive branch enumeration.
//!
//! The simulator itself serves as the semantics: every branching Bernoulli
//! draw becomes a fork, explored depth-first by re-running the simulation
//! under a scripted randomness source. Draws with probability 0 or 1 do not
//! fork. Continuous draws are not enumerated: for time-insensitive
//! properties they collapse to the interval midpoint, and for deadline
//! queries each one is discretised on a grid of equal cells and evaluated
//! twice, once at every cell's early end and once at its late end. The two
//! passes bracket the exact value whenever job completion time is monotone
//! in the continuous draws (true of the single-job scenarios this oracle is
//! meant for), so a deadline query reports a lower and upper bound.

use std::cell::RefCell;
use std::rc::Rc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::OracleError;
use crate::kernel::message::ActorId;
use crate::kernel::random::{Probability, Randomness};
use crate::kernel::trace::Trace;
use crate::scenario::Scenario;
use crate::sim::Simulation;
use crate::time::SimTime;
use crate::verify::{check, Property};

/// Maximum number of enumerated leaves.
pub const BRANCH_BUDGET: u64 = 1 << 20;

/// Cells per continuous draw in deadline queries.
pub const DEADLINE_GRID: u32 = 8;

/// How continuous draws are resolved.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Continuous {
    Midpoint,
    /// Enumerate `cells` cells, each represented by its early end.
    Early {
        cells: u32,
    },
    /// Enumerate `cells` cells, each represented by its late end.
    Late {
        cells: u32,
    },
}

#[derive(Clone, Debug)]
struct Decision {
    arity: u32,
    taken: u32,
    weight: BigRational,
}

#[derive(Debug)]
struct Script {
    prefix: Vec<u32>,
    decisions: Vec<Decision>,
    continuous: Continuous,
}

impl Script {
    fn choose(&mut self, arity: u32, weight_of: impl Fn(u32) -> BigRational) -> u32 {
        let idx = self.decisions.len();
        let taken = self.prefix.get(idx).copied().unwrap_or(0);
        assert!(taken < arity, "scripted choice {taken} out of {arity}");
        self.decisions.push(Decision {
            arity,
            taken,
            weight: weight_of(taken),
        });
        taken
    }

    fn cell(&mut self, cells: u32, lo: SimTime, hi: SimTime) -> (SimTime, SimTime) {
        let span = hi.ticks() - lo.ticks();
        let cells = cells.min(u32::try_from(span).unwrap_or(u32::MAX)).max(1);
        let w = BigRational::new(BigInt::one(), BigInt::from(cells));
        let i = self.choose(cells, |_| w.clone());
        let width = span / u64::from(cells);
        let a = lo.ticks() + width * u64::from(i);
        let b = if i + 1 == cells {
            hi.ticks()
        } else {
            a + width
        };
        (SimTime::from_ticks(a), SimTime::from_ticks(b))
    }
}

/// Randomness that follows a scripted path through the branch tree and
/// takes the first alternative past the end of the script.
#[derive(Clone, Debug)]
pub struct ForcedChoices {
    script: Rc<RefCell<Script>>,
}

impl ForcedChoices {
    pub fn new(prefix: Vec<u32>, continuous: Continuous) -> Self {
        ForcedChoices {
            script: Rc::new(RefCell::new(Script {
                prefix,
                decisions: Vec::new(),
                continuous,
            })),
        }
    }

    /// Alternatives taken so far, one per forking draw.
    pub fn path(&self) -> Vec<u32> {
        self.script
            .borrow()
            .decisions
            .iter()
            .map(|d| d.taken)
            .collect()
    }

    /// Probability of the path taken so far.
    pub fn weight(&self) -> BigRational {
        self.script
            .borrow()
            .decisions
            .iter()
            .fold(BigRational::one(), |acc, d| acc * &d.weight)
    }

    /// The path to explore after this one in depth-first order, if any.
    fn next_path(&self) -> Option<Vec<u32>> {
        let s = self.script.borrow();
        let mut path: Vec<u32> = s.decisions.iter().map(|d| d.taken).collect();
        while let Some(last) = path.pop() {
            let arity = s.decisions[path.len()].arity;
            if last + 1 < arity {
                path.push(last + 1);
                return Some(path);
            }
        }
        None
    }
}

impl Randomness for ForcedChoices {
    /// Alternative 0 is `false`, alternative 1 is `true`.
    fn bernoulli(&mut self, _actor: ActorId, p: Probability) -> bool {
        if !p.is_branching() {
            return p.is_one();
        }
        let taken = self.script.borrow_mut().choose(2, |i| {
            if i == 1 {
                p.as_ratio()
            } else {
                p.complement_ratio()
            }
        });
        taken == 1
    }

    fn uniform_open(&mut self, _actor: ActorId, lo: SimTime, hi: SimTime) -> SimTime {
        let mut s = self.script.borrow_mut();
        let tick = SimTime::from_ticks(1);
        match s.continuous {
            _ if hi.ticks() <= lo.ticks() + 2 => lo.midpoint(hi),
            Continuous::Midpoint => lo.midpoint(hi),
            Continuous::Early { cells } => s.cell(cells, lo, hi).0.max(lo + tick),
            Continuous::Late { cells } => s.cell(cells, lo, hi).1.min(hi - tick),
        }
    }

    fn uniform_closed(&mut self, _actor: ActorId, lo: SimTime, hi: SimTime) -> SimTime {
        let mut s = self.script.borrow_mut();
        match s.continuous {
            _ if hi <= lo => lo,
            Continuous::Midpoint => lo.midpoint(hi),
            Continuous::Early { cells } => s.cell(cells, lo, hi).0,
            Continuous::Late { cells } => s.cell(cells, lo, hi).1,
        }
    }
}

/// Runs `scenario` once along a scripted branch path. Branching draws past
/// the end of `choices` take alternative 0 (`false`). Returns the trace and
/// the probability of the path actually taken.
pub fn run_forced(
    scenario: &Scenario,
    choices: &[u32],
    continuous: Continuous,
) -> (Trace, BigRational, Vec<u32>) {
    let random = ForcedChoices::new(choices.to_vec(), continuous);
    let handle = random.clone();
    let trace = Simulation::new(scenario, Box::new(random)).run();
    (trace, handle.weight(), handle.path())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleResult {
    /// Exact probability, or the lower bound for deadline queries.
    pub probability: BigRational,
    /// Equal to `probability` except for deadline queries.
    pub upper: BigRational,
    pub query: Property,
    /// Number of enumerated leaves.
    pub state_count: u64,
}

impl OracleResult {
    pub fn is_exact(&self) -> bool {
        self.probability == self.upper
    }
}

fn enumerate(
    scenario: &Scenario,
    property: Property,
    continuous: Continuous,
    budget: u64,
) -> Result<(BigRational, u64), OracleError> {
    let n_clients = scenario.clients.len();
    let mut total = BigRational::zero();
    let mut leaves = 0u64;
    let mut prefix = Some(Vec::new());
    while let Some(p) = prefix {
        leaves += 1;
        if leaves > budget {
            return Err(OracleError::BranchBudgetExceeded { budget });
        }
        let random = ForcedChoices::new(p, continuous);
        let handle = random.clone();
        let trace = Simulation::new(scenario, Box::new(random)).run();
        let holds = check(&trace, property, n_clients)
            .expect("simulator traces name only scenario clients")
            .holds;
        if holds {
            total += handle.weight();
        }
        prefix = handle.next_path();
    }
    Ok((total, leaves))
}

/// Exact probability that `property` holds on a run of `scenario` to its
/// horizon.
pub fn oracle_probability(
    scenario: &Scenario,
    property: Property,
) -> Result<OracleResult, OracleError> {
    oracle_with_budget(scenario, property, BRANCH_BUDGET)
}

pub fn oracle_with_budget(
    scenario: &Scenario,
    property: Property,
    budget: u64,
) -> Result<OracleResult, OracleError> {
    match property {
        Property::DeadlineMet(_) => {
            let (early, n1) = enumerate(
                scenario,
                property,
                Continuous::Early {
                    cells: DEADLINE_GRID,
                },
                budget,
            )?;
            let (late, n2) = enumerate(
                scenario,
                property,
                Continuous::Late {
                    cells: DEADLINE_GRID,
                },
                budget,
            )?;
            let (lo, hi) = if early <= late {
                (early, late)
            } else {
                (late, early)
            };
            Ok(OracleResult {
                probability: lo,
                upper: hi,
                query: property,
                state_count: n1 + n2,
            })
        }
        _ => {
            let (p, n) = enumerate(scenario, property, Continuous::Midpoint, budget)?;
            Ok(OracleResult {
                probability: p.clone(),
                upper: p,
                query: property,
                state_count: n,
            })
        }
    }
}

/// Rational rendered as a decimal with `digits` places, rounded down.
pub fn ratio_to_decimal(r: &BigRational, digits: u32) -> String {
    let scale = BigInt::from(10u32).pow(digits);
    let scaled = (r * BigRational::from_integer(scale.clone()))
        .floor()
        .to_integer();
    let int = &scaled / &scale;
    let frac = &scaled % &scale;
    format!(
        "{int}.{:0>width$}",
        frac.to_string(),
        width = digits as usize
    )
}
