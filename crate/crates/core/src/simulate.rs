//! Monte-Carlo delay simulation on the slot-synchronous collision channel.
//!
//! Each sample is one session: every user becomes active with probability
//! `p_a` (redrawn if nobody is active), active users pick independent
//! offsets, and the channel is observed from a uniformly random start slot.
//! A slot delivers a packet for user `i` iff `i` is the only transmitter.
//! By default the individual delay of `i` counts slots up to and including
//! its first success; the group delay is the largest individual delay in the
//! session.
//!
//! Sample `n` draws from ChaCha8 seeded with `master_seed` on stream `n`, and
//! samples are folded in index order over fixed-size chunks, so results are
//! bit-identical for any worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::crtm_period;
use crate::error::{Error, Result};
use crate::seqcore::SequenceSet;

/// Samples per deterministic work unit.
const CHUNK: u64 = 4096;

pub const RNG_NAME: &str = "ChaCha8Rng (rand_chacha 0.9), seed_from_u64(master_seed), stream = sample index";

#[derive(Debug, Clone, PartialEq)]
pub enum Scheme {
    /// The first `M` members transmit according to their sequences.
    Protocol(SequenceSet),
    /// Each active user transmits in every slot with probability `p_s`.
    RandomAccess { p_s: f64 },
}

/// How per-user delays are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Every active user in every sample weighs the same.
    #[default]
    Population,
    /// Average within each sample, then across samples.
    PerSample,
}

/// Off-by-one convention for reported delays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayConvention {
    /// Success in the first observed slot is delay 1.
    #[default]
    Inclusive,
    /// Slots waited before the successful one; first-slot success is 0.
    Exclusive,
}

impl DelayConvention {
    fn offset(self) -> u64 {
        match self {
            DelayConvention::Inclusive => 0,
            DelayConvention::Exclusive => 1,
        }
    }
}

impl std::str::FromStr for DelayConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inclusive" => Ok(DelayConvention::Inclusive),
            "exclusive" => Ok(DelayConvention::Exclusive),
            other => Err(Error::InvalidArgument(format!("unknown delay convention {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub scheme: Scheme,
    pub m: usize,
    pub p_a: f64,
    pub samples: u64,
    pub master_seed: u64,
    /// Slots observed per sample; `None` picks the scheme default.
    pub horizon: Option<u64>,
    pub averaging: Averaging,
    pub convention: DelayConvention,
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
}

impl SimConfig {
    pub fn new(scheme: Scheme, m: usize, p_a: f64, samples: u64, master_seed: u64) -> Self {
        SimConfig {
            scheme,
            m,
            p_a,
            samples,
            master_seed,
            horizon: None,
            averaging: Averaging::Population,
            convention: DelayConvention::Inclusive,
            workers: 0,
        }
    }

    pub fn with_horizon(mut self, horizon: u64) -> Self {
        self.horizon = Some(horizon);
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_averaging(mut self, averaging: Averaging) -> Self {
        self.averaging = averaging;
        self
    }

    pub fn with_convention(mut self, convention: DelayConvention) -> Self {
        self.convention = convention;
        self
    }

    /// `2L` for protocol sequences; `max(4 L_crtm(M), 10^5)` for random access.
    pub fn effective_horizon(&self) -> u64 {
        self.horizon.unwrap_or_else(|| match &self.scheme {
            Scheme::Protocol(set) => 2 * set.period(),
            Scheme::RandomAccess { .. } => {
                let l = if self.m >= 4 { crtm_period(self.m as u64) } else { 0 };
                (4 * l).max(100_000)
            }
        })
    }

    fn validate(&self) -> Result<()> {
        if !(self.p_a > 0.0 && self.p_a <= 1.0) {
            return Err(Error::InvalidProbability { name: "p_a", value: self.p_a });
        }
        if self.samples == 0 {
            return Err(Error::InvalidArgument("samples must be positive".into()));
        }
        if self.m == 0 {
            return Err(Error::InvalidArgument("M must be positive".into()));
        }
        if self.horizon == Some(0) {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        match &self.scheme {
            Scheme::Protocol(set) => set.require_users(self.m)?,
            Scheme::RandomAccess { p_s } => {
                if !(*p_s > 0.0 && *p_s < 1.0) {
                    return Err(Error::InvalidProbability { name: "p_s", value: *p_s });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayStats {
    pub mean_individual: f64,
    pub mean_group: f64,
    pub min_group: u64,
    pub max_group: u64,
    pub min_individual: u64,
    pub max_individual: u64,
    /// Sample standard deviations (population of users / of samples).
    pub sd_individual: f64,
    pub sd_group: f64,
    pub samples_used: u64,
    pub truncated_samples: u64,
    /// Active users summed over the used samples.
    pub active_users: u64,
    pub averaging: Averaging,
    pub convention: DelayConvention,
    pub horizon: u64,
    pub master_seed: u64,
    pub rng: &'static str,
}

impl DelayStats {
    /// Standard error of `mean_individual` under the population average.
    pub fn se_individual(&self) -> f64 {
        self.sd_individual / (self.active_users as f64).sqrt()
    }

    pub fn se_group(&self) -> f64 {
        self.sd_group / (self.samples_used as f64).sqrt()
    }
}

/// Exact running sums; combining is associative so chunk order alone fixes
/// the result.
#[derive(Debug, Clone, Default)]
struct Accumulator {
    indiv_sum: u128,
    indiv_sq: u128,
    indiv_n: u64,
    indiv_min: u64,
    indiv_max: u64,
    group_sum: u128,
    group_sq: u128,
    group_min: u64,
    group_max: u64,
    per_sample_mean_sum: f64,
    used: u64,
    truncated: u64,
}

impl Accumulator {
    fn new() -> Self {
        Accumulator { indiv_min: u64::MAX, group_min: u64::MAX, ..Default::default() }
    }

    fn push(&mut self, delays: &[u64]) {
        let group = *delays.iter().max().expect("at least one active user");
        let mut s: u128 = 0;
        for &d in delays {
            s += d as u128;
            self.indiv_sq += (d as u128) * (d as u128);
            self.indiv_min = self.indiv_min.min(d);
            self.indiv_max = self.indiv_max.max(d);
        }
        self.indiv_sum += s;
        self.indiv_n += delays.len() as u64;
        self.per_sample_mean_sum += s as f64 / delays.len() as f64;
        self.group_sum += group as u128;
        self.group_sq += (group as u128) * (group as u128);
        self.group_min = self.group_min.min(group);
        self.group_max = self.group_max.max(group);
        self.used += 1;
    }

    fn merge(mut self, o: Accumulator) -> Accumulator {
        self.indiv_sum += o.indiv_sum;
        self.indiv_sq += o.indiv_sq;
        self.indiv_n += o.indiv_n;
        self.indiv_min = self.indiv_min.min(o.indiv_min);
        self.indiv_max = self.indiv_max.max(o.indiv_max);
        self.group_sum += o.group_sum;
        self.group_sq += o.group_sq;
        self.group_min = self.group_min.min(o.group_min);
        self.group_max = self.group_max.max(o.group_max);
        self.per_sample_mean_sum += o.per_sample_mean_sum;
        self.used += o.used;
        self.truncated += o.truncated;
        self
    }
}

fn sample_sd(sum: u128, sq: u128, n: u64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let n_f = n as f64;
    let mean = sum as f64 / n_f;
    let var = (sq as f64 - n_f * mean * mean) / (n_f - 1.0);
    var.max(0.0).sqrt()
}

fn sample_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Indices of active users; at least one.
fn draw_active(rng: &mut ChaCha8Rng, m: usize, p_a: f64, out: &mut Vec<usize>) {
    out.clear();
    if p_a >= 1.0 {
        out.extend(0..m);
        return;
    }
    while out.is_empty() {
        out.extend((0..m).filter(|_| rng.random::<f64>() < p_a));
    }
}

/// Per-chunk scratch space for the protocol scheme.
struct SlotBoard {
    count: Vec<u8>,
    owner: Vec<u32>,
}

/// Delays of the active users, or `None` if some user misses the horizon.
fn protocol_sample(
    set: &SequenceSet,
    m: usize,
    p_a: f64,
    horizon: u64,
    rng: &mut ChaCha8Rng,
    board: &mut SlotBoard,
    active: &mut Vec<usize>,
    delays: &mut Vec<u64>,
) -> bool {
    let l = set.period();
    draw_active(rng, m, p_a, active);
    let offsets: Vec<u64> = active.iter().map(|_| rng.random_range(0..l)).collect();
    let start = rng.random_range(0..l);

    let members = set.members();
    for (slot, (&u, &tau)) in active.iter().zip(&offsets).enumerate() {
        for &e in members[u].elements() {
            let s = ((e + tau) % l) as usize;
            board.count[s] = board.count[s].saturating_add(1);
            board.owner[s] = slot as u32;
        }
    }

    delays.clear();
    delays.resize(active.len(), 0);
    let mut remaining = active.len();
    // The pattern repeats with period L, so scanning past L finds nothing new.
    let scan = horizon.min(l);
    let mut s = start as usize;
    for d in 0..scan {
        if board.count[s] == 1 {
            let who = board.owner[s] as usize;
            if delays[who] == 0 {
                delays[who] = d + 1;
                remaining -= 1;
                if remaining == 0 {
                    break;
                }
            }
        }
        s += 1;
        if s == l as usize {
            s = 0;
        }
    }

    for (&u, &tau) in active.iter().zip(&offsets) {
        for &e in members[u].elements() {
            board.count[((e + tau) % l) as usize] = 0;
        }
    }
    remaining == 0
}

fn random_access_sample(
    m: usize,
    p_a: f64,
    p_s: f64,
    horizon: u64,
    rng: &mut ChaCha8Rng,
    active: &mut Vec<usize>,
    delays: &mut Vec<u64>,
) -> bool {
    draw_active(rng, m, p_a, active);
    let n = active.len();
    // A slot succeeds iff exactly one of the n active users transmits; the
    // winner is then uniform among them. Gaps between successes are
    // geometric in this success probability.
    let success = n as f64 * p_s * (1.0 - p_s).powi(n as i32 - 1);
    let log_fail = (-success).ln_1p();
    delays.clear();
    delays.resize(n, 0);
    let mut remaining = n;
    let mut t: u64 = 0;
    while remaining > 0 {
        let u: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
        let gap = if success >= 1.0 { 1 } else { (u.ln() / log_fail).floor() as u64 + 1 };
        t = t.saturating_add(gap);
        if t > horizon {
            return false;
        }
        let who = rng.random_range(0..n);
        if delays[who] == 0 {
            delays[who] = t;
            remaining -= 1;
        }
    }
    true
}

/// Scratch space reused across the samples of one chunk.
struct Scratch {
    board: Option<SlotBoard>,
    active: Vec<usize>,
    delays: Vec<u64>,
}

impl Scratch {
    fn new(config: &SimConfig) -> Self {
        let board = match &config.scheme {
            Scheme::Protocol(set) => Some(SlotBoard {
                count: vec![0; set.period() as usize],
                owner: vec![0; set.period() as usize],
            }),
            Scheme::RandomAccess { .. } => None,
        };
        Scratch { board, active: Vec::with_capacity(config.m), delays: Vec::with_capacity(config.m) }
    }
}

/// Runs sample `index`; on success `scratch.delays` holds the delays of
/// `scratch.active` under the configured convention.
fn run_one(config: &SimConfig, horizon: u64, index: u64, scratch: &mut Scratch) -> bool {
    let mut rng = sample_rng(config.master_seed, index);
    let Scratch { board, active, delays } = scratch;
    let ok = match &config.scheme {
        Scheme::Protocol(set) => protocol_sample(
            set,
            config.m,
            config.p_a,
            horizon,
            &mut rng,
            board.as_mut().expect("protocol board"),
            active,
            delays,
        ),
        Scheme::RandomAccess { p_s } => random_access_sample(config.m, config.p_a, *p_s, horizon, &mut rng, active, delays),
    };
    if ok {
        let shift = config.convention.offset();
        delays.iter_mut().for_each(|d| *d -= shift);
    }
    ok
}

fn run_chunk(config: &SimConfig, horizon: u64, range: std::ops::Range<u64>) -> Accumulator {
    let mut acc = Accumulator::new();
    let mut scratch = Scratch::new(config);
    for index in range {
        if run_one(config, horizon, index, &mut scratch) {
            acc.push(&scratch.delays);
        } else {
            acc.truncated += 1;
        }
    }
    acc
}

/// One session of a simulation run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SampleOutcome {
    /// Active user indices, ascending.
    pub active: Vec<usize>,
    /// Delay of each active user, or `None` if the horizon ran out.
    pub delays: Option<Vec<u64>>,
}

impl SampleOutcome {
    pub fn group_delay(&self) -> Option<u64> {
        self.delays.as_ref().and_then(|d| d.iter().copied().max())
    }
}

/// Replays sample `index` of the run described by `config`, exactly as the
/// aggregate functions see it.
pub fn sample(config: &SimConfig, index: u64) -> Result<SampleOutcome> {
    config.validate()?;
    if index >= config.samples {
        return Err(Error::IndexOutOfRange { index: index as usize, len: config.samples as usize });
    }
    let mut scratch = Scratch::new(config);
    let ok = run_one(config, config.effective_horizon(), index, &mut scratch);
    Ok(SampleOutcome { active: scratch.active, delays: ok.then_some(scratch.delays) })
}

fn run_all(config: &SimConfig) -> Result<DelayStats> {
    config.validate()?;
    let horizon = config.effective_horizon();
    let chunks: Vec<std::ops::Range<u64>> = (0..config.samples.div_ceil(CHUNK))
        .map(|c| c * CHUNK..((c + 1) * CHUNK).min(config.samples))
        .collect();
    let work = || -> Vec<Accumulator> {
        chunks.par_iter().map(|r| run_chunk(config, horizon, r.clone())).collect()
    };
    let parts = if config.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(work)
    } else {
        work()
    };
    let acc = parts.into_iter().fold(Accumulator::new(), Accumulator::merge);
    if acc.used == 0 {
        return Err(Error::AllSamplesTruncated(horizon));
    }
    let mean_individual = match config.averaging {
        Averaging::Population => acc.indiv_sum as f64 / acc.indiv_n as f64,
        Averaging::PerSample => acc.per_sample_mean_sum / acc.used as f64,
    };
    Ok(DelayStats {
        mean_individual,
        mean_group: acc.group_sum as f64 / acc.used as f64,
        min_group: acc.group_min,
        max_group: acc.group_max,
        min_individual: acc.indiv_min,
        max_individual: acc.indiv_max,
        sd_individual: sample_sd(acc.indiv_sum, acc.indiv_sq, acc.indiv_n),
        sd_group: sample_sd(acc.group_sum, acc.group_sq, acc.used),
        samples_used: acc.used,
        truncated_samples: acc.truncated,
        active_users: acc.indiv_n,
        averaging: config.averaging,
        convention: config.convention,
        horizon,
        master_seed: config.master_seed,
        rng: RNG_NAME,
    })
}

/// Delay statistics for a protocol-sequence configuration.
pub fn run_protocol_sim(config: &SimConfig) -> Result<DelayStats> {
    if !matches!(config.scheme, Scheme::Protocol(_)) {
        return Err(Error::InvalidArgument("expected a protocol-sequence scheme".into()));
    }
    run_all(config)
}

/// Delay statistics for Bernoulli random access.
pub fn run_random_access_sim(config: &SimConfig) -> Result<DelayStats> {
    if !matches!(config.scheme, Scheme::RandomAccess { .. }) {
        return Err(Error::InvalidArgument("expected a random-access scheme".into()));
    }
    run_all(config)
}

/// Either scheme.
pub fn run_sim(config: &SimConfig) -> Result<DelayStats> {
    run_all(config)
}

/// Per-slot probability that a given user is silent or collides.
pub fn beta(m: u64, p_s: f64) -> f64 {
    1.0 - p_s * (1.0 - p_s).powi(m as i32 - 1)
}

/// Below this value of `-ln β` the series is evaluated in integral form.
const SMOOTH_RATE: f64 = 1e-3;

/// `Σ_{i>=0} 1 - (1 - β^i)^{M-1}` with `β = 1 - p_s(1-p_s)^{M-1}`.
///
/// Summed term by term until a term drops below `tolerance`. When `β` is
/// so close to 1 that this would take more than about `1/(1-β)` terms, the
/// sum is replaced by `H_{M-1}/a + 1/2` with `a = -ln β`, the integral of
/// the summand plus the Euler-Maclaurin end correction (error `O(a^3)`).
pub fn expected_delay_random(m: u64, p_s: f64, tolerance: f64) -> Result<f64> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!("expected delay needs M >= 2, got {m}")));
    }
    if !(p_s > 0.0 && p_s < 1.0) {
        return Err(Error::InvalidProbability { name: "p_s", value: p_s });
    }
    if !(tolerance > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tolerance}")));
    }
    let n = m - 1;
    let success = p_s * (1.0 - p_s).powi(n as i32);
    if n == 1 {
        return Ok(1.0 / success);
    }
    let rate = -(-success).ln_1p();
    if rate < SMOOTH_RATE {
        let harmonic: f64 = (1..=n).map(|k| 1.0 / k as f64).sum();
        return Ok(harmonic / rate + 0.5);
    }
    let b = 1.0 - success;
    let mut sum = 0.0;
    let mut power: f64 = 1.0; // β^i
    loop {
        let term = 1.0 - (1.0 - power).powi(n as i32);
        sum += term;
        if term < tolerance {
            return Ok(sum);
        }
        power *= b;
    }
}

/// Grid point `k / (10M)` minimizing the expected delay, with its value.
pub fn argmin_expected_delay(m: u64, tolerance: f64) -> Result<(f64, f64)> {
    let steps = 10 * m;
    let mut best = (f64::NAN, f64::INFINITY);
    for k in 1..steps {
        let p = k as f64 / steps as f64;
        let v = expected_delay_random(m, p, tolerance)?;
        if v < best.1 {
            best = (p, v);
        }
    }
    Ok(best)
}

/// `1 / (M p_a)`, the transmission probability minimizing expected delay
/// with `M p_a` active users on average.
pub fn optimal_ps(m: u64, p_a: f64) -> Result<f64> {
    if !(p_a > 0.0 && p_a <= 1.0) {
        return Err(Error::InvalidProbability { name: "p_a", value: p_a });
    }
    let load = m as f64 * p_a;
    if load < 1.0 {
        return Err(Error::InfeasibleTransmissionProbability(load));
    }
    Ok(1.0 / load)
}
