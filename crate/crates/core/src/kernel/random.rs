//! Seeded per-actor random streams and exact decimal probabilities.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kernel::message::ActorId;
use crate::time::SimTime;

/// A probability written as a finite decimal, kept exact so the oracle can
/// do rational arithmetic on it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Probability {
    numer: u64,
    denom: u64,
}

const MAX_PROB_DIGITS: usize = 18;

impl Probability {
    pub const ZERO: Probability = Probability { numer: 0, denom: 1 };
    pub const ONE: Probability = Probability { numer: 1, denom: 1 };

    pub fn as_f64(self) -> f64 {
        self.numer as f64 / self.denom as f64
    }

    pub fn as_ratio(self) -> BigRational {
        BigRational::new(BigInt::from(self.numer), BigInt::from(self.denom))
    }

    pub fn complement_ratio(self) -> BigRational {
        BigRational::new(
            BigInt::from(self.denom - self.numer),
            BigInt::from(self.denom),
        )
    }

    pub fn is_zero(self) -> bool {
        self.numer == 0
    }

    pub fn is_one(self) -> bool {
        self.numer == self.denom
    }

    /// True when a draw against this probability can go either way.
    pub fn is_branching(self) -> bool {
        !self.is_zero() && !self.is_one()
    }

    /// `p * 2^64`, the acceptance threshold for a uniform `u64` draw.
    fn threshold(self) -> u128 {
        ((self.numer as u128) << 64) / self.denom as u128
    }
}

impl fmt::Display for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("0");
        }
        if self.is_one() {
            return f.write_str("1");
        }
        let digits = self.denom.ilog10() as usize;
        let frac = format!("{:0width$}", self.numer, width = digits);
        write!(f, "0.{}", frac.trim_end_matches('0'))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseProbabilityError;

impl FromStr for Probability {
    type Err = ParseProbabilityError;

    /// Accepts decimals in `[0, 1]` such as `0`, `1`, `1.0`, `0.25`, `.5`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (whole, frac) = s.split_once('.').unwrap_or((s, ""));
        let all_digits = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
        if (whole.is_empty() && frac.is_empty()) || !all_digits(whole) || !all_digits(frac) {
            return Err(ParseProbabilityError);
        }
        let frac = frac.trim_end_matches('0');
        if frac.len() > MAX_PROB_DIGITS {
            return Err(ParseProbabilityError);
        }
        let whole: u64 = if whole.is_empty() {
            0
        } else {
            whole.parse().map_err(|_| ParseProbabilityError)?
        };
        match (whole, frac.is_empty()) {
            (0, true) => Ok(Probability::ZERO),
            (1, true) => Ok(Probability::ONE),
            (0, false) => {
                let denom = 10u64.pow(frac.len() as u32);
                let numer = frac.parse().map_err(|_| ParseProbabilityError)?;
                Ok(Probability { numer, denom })
            }
            _ => Err(ParseProbabilityError),
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministically combines seed material. Used for per-actor streams and
/// for deriving replica seeds.
pub fn mix_seed(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

fn stream_id(actor: ActorId) -> u64 {
    match actor {
        ActorId::Machine(m) => (1 << 32) | u64::from(m.0),
        ActorId::Client(c) => (2 << 32) | u64::from(c.0),
        ActorId::Bus => 3 << 32,
    }
}

/// One actor's private random stream.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
    draws: u64,
}

impl Rng {
    pub fn new(seed: u64, stream: u64) -> Self {
        Rng {
            seed,
            stream,
            inner: ChaCha8Rng::seed_from_u64(mix_seed(seed, &[stream])),
            draws: 0,
        }
    }

    pub fn for_actor(seed: u64, actor: ActorId) -> Self {
        Rng::new(seed, stream_id(actor))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of draws taken from this stream so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    /// Always consumes exactly one draw, even for `p` of 0 or 1.
    pub fn bernoulli(&mut self, p: Probability) -> bool {
        self.draws += 1;
        let x = self.inner.next_u64();
        u128::from(x) < p.threshold()
    }

    /// Uniform over the open interval `(lo, hi)`. When the interval holds no
    /// tick, the midpoint is returned.
    pub fn uniform_open(&mut self, lo: SimTime, hi: SimTime) -> SimTime {
        self.draws += 1;
        if hi.ticks() <= lo.ticks() + 1 {
            self.inner.next_u64();
            return lo.midpoint(hi);
        }
        SimTime::from_ticks(self.inner.gen_range(lo.ticks() + 1..hi.ticks()))
    }

    /// Uniform over the closed interval `[lo, hi]`.
    pub fn uniform_closed(&mut self, lo: SimTime, hi: SimTime) -> SimTime {
        self.draws += 1;
        if hi <= lo {
            self.inner.next_u64();
            return lo;
        }
        SimTime::from_ticks(self.inner.gen_range(lo.ticks()..=hi.ticks()))
    }
}

/// Source of every random choice an actor makes. The simulator is
/// deterministic given the answers this trait returns.
pub trait Randomness {
    fn bernoulli(&mut self, actor: ActorId, p: Probability) -> bool;
    fn uniform_open(&mut self, actor: ActorId, lo: SimTime, hi: SimTime) -> SimTime;
    fn uniform_closed(&mut self, actor: ActorId, lo: SimTime, hi: SimTime) -> SimTime;
}

/// Production randomness: one independent stream per actor, derived from
/// `(seed, actor)`.
#[derive(Debug, Clone)]
pub struct SeededStreams {
    seed: u64,
    streams: BTreeMap<ActorId, Rng>,
}

impl SeededStreams {
    pub fn new(seed: u64) -> Self {
        SeededStreams {
            seed,
            streams: BTreeMap::new(),
        }
    }

    fn stream(&mut self, actor: ActorId) -> &mut Rng {
        let seed = self.seed;
        self.streams
            .entry(actor)
            .or_insert_with(|| Rng::for_actor(seed, actor))
    }
}

impl Randomness for SeededStreams {
    fn bernoulli(&mut self, actor: ActorId, p: Probability) -> bool {
        self.stream(actor).bernoulli(p)
    }

    fn uniform_open(&mut self, actor: ActorId, lo: SimTime, hi: SimTime) -> SimTime {
        self.stream(actor).uniform_open(lo, hi)
    }

    fn uniform_closed(&mut self, actor: ActorId, lo: SimTime, hi: SimTime) -> SimTime {
        self.stream(actor).uniform_closed(lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::message::{ClientId, MachineId};
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};

    fn p(s: &str) -> Probability {
        s.parse().unwrap()
    }

    #[test]
    fn probability_parsing() {
        assert_eq!(p("0"), Probability::ZERO);
        assert_eq!(p("1.000"), Probability::ONE);
        assert_eq!(p("0.250"), p(".25"));
        assert_eq!(p("0.25").to_string(), "0.25");
        assert!((p("0.3").as_f64() - 0.3).abs() < 1e-15);
        for bad in ["1.5", "-0.1", "2", "", ".", "abc", "0.1.2"] {
            assert!(bad.parse::<Probability>().is_err(), "{bad}");
        }
    }

    #[test]
    fn degenerate_probabilities() {
        let mut rng = Rng::new(7, 0);
        assert!((0..1000).all(|_| !rng.bernoulli(Probability::ZERO)));
        assert!((0..1000).all(|_| rng.bernoulli(Probability::ONE)));
        assert_eq!(rng.draws(), 2000);
    }

    #[test]
    fn fair_coin_within_three_sigma() {
        let n = 10_000u32;
        let mut rng = Rng::new(42, 1);
        let hits = (0..n).filter(|_| rng.bernoulli(p("0.5"))).count() as f64;
        // binomial sd = sqrt(n/4) = 50
        assert!((hits - 5000.0).abs() <= 150.0, "hits = {hits}");
    }

    #[test]
    fn streams_do_not_interfere() {
        let a = ActorId::Machine(MachineId(0));
        let b = ActorId::Client(ClientId(0));
        let mut alone = SeededStreams::new(9);
        let solo: Vec<bool> = (0..50).map(|_| alone.bernoulli(a, p("0.5"))).collect();

        let mut mixed = SeededStreams::new(9);
        let mut interleaved = Vec::new();
        for _ in 0..50 {
            mixed.bernoulli(b, p("0.5"));
            interleaved.push(mixed.bernoulli(a, p("0.5")));
        }
        assert_eq!(solo, interleaved);
    }

    proptest! {
        #[test]
        fn same_seed_same_sequence(seed in any::<u64>(), stream in any::<u64>()) {
            let mut x = Rng::new(seed, stream);
            let mut y = Rng::new(seed, stream);
            for _ in 0..16 {
                prop_assert_eq!(x.bernoulli(p("0.37")), y.bernoulli(p("0.37")));
            }
        }

        #[test]
        fn open_uniform_stays_inside(lo in 0u64..1_000_000, width in 2u64..1_000_000, seed in any::<u64>()) {
            let mut rng = Rng::new(seed, 0);
            let (lo, hi) = (SimTime::from_ticks(lo), SimTime::from_ticks(lo + width));
            let x = rng.uniform_open(lo, hi);
            prop_assert!(lo < x && x < hi);
        }
    }
}
