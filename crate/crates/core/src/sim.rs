//! Session driver and Monte Carlo aggregation.
//!
//! A session loops encoder -> channel -> decoder -> feedback until the
//! encoder receives `Complete` or the transmission budget runs out. Trials
//! are independent and seeded from `(master seed, trial id)`; aggregation
//! always walks trials in id order, so results do not depend on the number
//! of worker threads.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;

use crate::analytics::Analytics;
use crate::channel::{stream_rng, Channel, ChannelParams, Stream};
use crate::degree::DegreeTable;
use crate::error::{invalid, Error, Result};
use crate::graph::Update;
use crate::scheme::{EncoderState, FeedbackMsg, FeedbackPolicy, Phase, Receiver, SchemeConfig, SchemeKind};
use crate::symbol::{Payload, SourceBlock};

/// Default budget, in multiples of k.
pub const DEFAULT_BUDGET_FACTOR: u64 = 50;

/// Recovery fraction at which the intermediate feedback count is taken.
pub const FEEDBACK_CHECKPOINT: f64 = 0.8;

/// Largest k for which every recovered count is a milestone.
pub const DENSE_MILESTONE_LIMIT: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionConfig {
    pub scheme: SchemeConfig,
    pub k: usize,
    pub epsilon: f64,
    pub policy: FeedbackPolicy,
    pub seed: u64,
    /// Maximum number of transmitted symbols; `None` means `50 * k`.
    pub budget: Option<u64>,
    /// Payload bytes per symbol; 0 runs in counting-only mode.
    pub symbol_size: usize,
    /// Feedback latency in symbol slots.
    pub feedback_delay: u64,
}

impl SessionConfig {
    pub fn new(scheme: SchemeConfig, k: usize, epsilon: f64) -> Self {
        Self {
            scheme,
            k,
            epsilon,
            policy: FeedbackPolicy::EveryDegreeChange,
            seed: 0,
            budget: None,
            symbol_size: 0,
            feedback_delay: 0,
        }
    }

    pub fn with_policy(mut self, policy: FeedbackPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_symbol_size(mut self, symbol_size: usize) -> Self {
        self.symbol_size = symbol_size;
        self
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = Some(budget);
        self
    }

    pub fn budget(&self) -> u64 {
        self.budget.unwrap_or(DEFAULT_BUDGET_FACTOR * self.k as u64)
    }

    pub fn validate(&self) -> Result<()> {
        self.scheme.validate()?;
        self.policy.validate()?;
        if self.k < 2 {
            return invalid(format!("k must be at least 2, got {}", self.k));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return invalid(format!("erasure rate must be in [0, 1), got {}", self.epsilon));
        }
        if self.budget() < self.k as u64 {
            return invalid("budget must be at least k");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub sent: u64,
    pub received: u64,
    pub recovered: usize,
    pub event: Option<FeedbackMsg>,
}

/// Symbols emitted in each encoder phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PhaseCounts {
    pub build_up: u64,
    pub seeding: u64,
    pub systematic: u64,
    pub completion: u64,
}

impl PhaseCounts {
    fn bump(&mut self, phase: Phase) {
        match phase {
            Phase::BuildUp => self.build_up += 1,
            Phase::Degree1Seeding => self.seeding += 1,
            Phase::Systematic { .. } => self.systematic += 1,
            Phase::Completion => self.completion += 1,
            Phase::Terminated => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionResult {
    pub k: usize,
    pub trial_id: u64,
    pub trace: Vec<TracePoint>,
    /// Transmissions until every source symbol was recovered.
    pub full_recovery_sent: Option<u64>,
    pub budget_exceeded: bool,
    pub sent_total: u64,
    pub feedback_total: usize,
    pub feedback_at_beta08: usize,
    pub phase_counts: PhaseCounts,
}

impl SessionResult {
    pub fn overhead(&self) -> Option<f64> {
        self.full_recovery_sent.map(|n| n as f64 / self.k as f64)
    }

    /// Recovered count after `sent` transmissions.
    pub fn recovered_at(&self, sent: u64) -> usize {
        let idx = self.trace.partition_point(|p| p.sent <= sent);
        if idx == 0 {
            0
        } else {
            self.trace[idx - 1].recovered
        }
    }

    /// First transmission count at which at least `s` symbols were
    /// recovered, for every `s` in `0..=k`.
    pub fn first_passage(&self) -> Vec<Option<u64>> {
        let mut out = vec![None; self.k + 1];
        out[0] = Some(0);
        let mut reached = 0;
        for p in &self.trace {
            while reached < p.recovered {
                reached += 1;
                out[reached] = Some(p.sent);
            }
        }
        out
    }
}

/// Number of feedback messages recorded in a trace.
pub fn feedback_count(trace: &[TracePoint]) -> usize {
    trace.iter().filter(|p| p.event.is_some()).count()
}

fn random_block(k: usize, symbol_size: usize, seed: u64, trial_id: u64) -> Result<SourceBlock> {
    if symbol_size == 0 {
        return SourceBlock::counting(k);
    }
    let mut rng = stream_rng(seed, trial_id, Stream::Payload);
    let symbols = (0..k)
        .map(|_| {
            let mut v = vec![0u8; symbol_size];
            rng.fill_bytes(&mut v);
            Payload(v)
        })
        .collect();
    SourceBlock::new(symbols)
}

/// Runs one session with a freshly built degree table.
pub fn run_session(cfg: &SessionConfig, trial_id: u64) -> Result<SessionResult> {
    cfg.validate()?;
    let table = Arc::new(DegreeTable::new(cfg.k)?);
    run_session_with(cfg, trial_id, &table)
}

/// Runs one session sharing a precomputed degree table for `cfg.k`.
pub fn run_session_with(cfg: &SessionConfig, trial_id: u64, table: &Arc<DegreeTable>) -> Result<SessionResult> {
    cfg.validate()?;
    if table.k() != cfg.k {
        return invalid("degree table was built for a different k");
    }
    let k = cfg.k;
    let src = random_block(k, cfg.symbol_size, cfg.seed, trial_id)?;
    let mut encoder = EncoderState::new(cfg.scheme, k, stream_rng(cfg.seed, trial_id, Stream::Encoder))?;
    let mut receiver = Receiver::new(cfg.scheme, cfg.policy, Arc::clone(table))?;
    let mut channel = Channel::new(ChannelParams::new(cfg.epsilon, cfg.seed, trial_id)?);

    let budget = cfg.budget();
    let checkpoint = ((FEEDBACK_CHECKPOINT * k as f64) - 1e-9).ceil() as usize;
    let mut trace = vec![TracePoint { sent: 0, received: 0, recovered: 0, event: None }];
    let mut pending: VecDeque<(u64, FeedbackMsg)> = VecDeque::new();
    let mut phase_counts = PhaseCounts::default();
    let (mut sent, mut received) = (0u64, 0u64);
    let mut feedback_total = 0;
    let mut feedback_at_beta08 = 0;
    let mut full_recovery_sent = None;
    let mut budget_exceeded = false;

    while encoder.phase() != Phase::Terminated {
        if sent >= budget {
            budget_exceeded = true;
            break;
        }
        let slot = sent;
        let phase_before = encoder.phase();
        let symbol = encoder.next_symbol(&src)?;
        phase_counts.bump(match (phase_before, encoder.phase()) {
            (Phase::Systematic { next_index }, p) if next_index >= k => p,
            (p, _) => p,
        });
        sent += 1;
        let below_checkpoint = receiver.graph().recovered_count() < checkpoint;

        let mut msgs = Vec::new();
        if channel.deliver(slot) {
            received += 1;
            let before = receiver.graph().recovered_count();
            let (update, out) = receiver.receive(&symbol)?;
            if let Update::Recovered(items) = &update {
                if cfg.symbol_size > 0 {
                    for (id, value) in items {
                        if value != src.get(*id) {
                            return Err(Error::ContractViolation(format!(
                                "recovered symbol {} does not match the source",
                                id.0
                            )));
                        }
                    }
                }
                let recovered = receiver.graph().recovered_count();
                debug_assert!(recovered > before);
                trace.push(TracePoint { sent, received, recovered, event: None });
                if recovered == k {
                    full_recovery_sent = Some(sent);
                }
            }
            msgs = out;
        }
        if cfg.scheme.kind() == SchemeKind::Sofc && slot + 1 == k as u64 {
            msgs.extend(receiver.end_of_systematic());
        }
        let recovered = receiver.graph().recovered_count();
        for msg in msgs {
            feedback_total += 1;
            if below_checkpoint {
                feedback_at_beta08 += 1;
            }
            trace.push(TracePoint { sent, received, recovered, event: Some(msg) });
            pending.push_back((slot + cfg.feedback_delay, msg));
        }
        while let Some(&(due, msg)) = pending.front() {
            if due > slot {
                break;
            }
            pending.pop_front();
            encoder.on_feedback(msg)?;
        }
    }

    Ok(SessionResult {
        k,
        trial_id,
        trace,
        full_recovery_sent,
        budget_exceeded,
        sent_total: sent,
        feedback_total,
        feedback_at_beta08,
        phase_counts,
    })
}

/// Recovered counts at which aggregate curves are sampled.
pub fn milestone_grid(k: usize) -> Vec<usize> {
    if k <= DENSE_MILESTONE_LIMIT {
        (1..=k).collect()
    } else {
        let mut v: Vec<usize> = (1..=1000).map(|i| ((i * k) as f64 / 1000.0).round() as usize).collect();
        v.dedup();
        v
    }
}

/// Default overhead grid for BER curves: 0, 0.05, ..., 2.0.
pub fn default_overhead_grid() -> Vec<f64> {
    (0..=40).map(|i| i as f64 * 0.05).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MilestoneStat {
    pub s: usize,
    pub sent_mean: f64,
    pub sent_std: f64,
    /// Trials that reached `s` recovered symbols.
    pub reached: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BerPoint {
    pub overhead: f64,
    pub ber: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateResult {
    pub config: SessionConfig,
    pub trials: usize,
    pub milestones: Vec<MilestoneStat>,
    /// Mean full-recovery transmissions over k, excluding budget-exceeded trials.
    pub overhead_mean: f64,
    pub overhead_std: f64,
    pub feedback_mean_full: f64,
    pub feedback_mean_beta08: f64,
    pub budget_exceeded_count: usize,
    pub ber: Vec<BerPoint>,
}

impl AggregateResult {
    pub fn sent_mean_at(&self, s: usize) -> Option<f64> {
        self.milestones
            .binary_search_by_key(&s, |m| m.s)
            .ok()
            .map(|i| self.milestones[i].sent_mean)
    }

    pub fn full_recovery_sent_mean(&self) -> f64 {
        self.overhead_mean * self.config.k as f64
    }
}

/// Compact per-trial data kept for aggregation.
#[derive(Debug, Clone)]
struct TrialSummary {
    passage: Vec<Option<u64>>,
    full: Option<u64>,
    feedback_total: usize,
    feedback_at_beta08: usize,
    ber_recovered: Vec<usize>,
}

#[derive(Default)]
struct Moments {
    n: usize,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.sum / self.n as f64
        }
    }

    fn std(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0).sqrt()
    }
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if jobs == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs `trials` sessions and returns the raw results in trial order.
/// `jobs = 0` uses the global thread pool.
pub fn run_trials(cfg: &SessionConfig, trials: usize, jobs: usize) -> Result<Vec<SessionResult>> {
    cfg.validate()?;
    let table = Arc::new(DegreeTable::new(cfg.k)?);
    with_pool(jobs, || {
        (0..trials as u64)
            .into_par_iter()
            .map(|t| run_session_with(cfg, t, &table))
            .collect::<Result<Vec<_>>>()
    })?
}

fn aggregate_with_grid(cfg: &SessionConfig, trials: usize, jobs: usize, grid: &[f64]) -> Result<AggregateResult> {
    if trials == 0 {
        return invalid("at least one trial is required");
    }
    cfg.validate()?;
    let k = cfg.k;
    let milestones = milestone_grid(k);
    let table = Arc::new(DegreeTable::new(k)?);
    let summaries: Vec<TrialSummary> = with_pool(jobs, || {
        (0..trials as u64)
            .into_par_iter()
            .map(|t| {
                let r = run_session_with(cfg, t, &table)?;
                let passage = r.first_passage();
                Ok(TrialSummary {
                    passage: milestones.iter().map(|&s| passage[s]).collect(),
                    full: r.full_recovery_sent,
                    feedback_total: r.feedback_total,
                    feedback_at_beta08: r.feedback_at_beta08,
                    ber_recovered: grid
                        .iter()
                        .map(|o| r.recovered_at((o * k as f64).floor() as u64))
                        .collect(),
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let mut per_s: Vec<Moments> = milestones.iter().map(|_| Moments::default()).collect();
    let mut overhead = Moments::default();
    let mut fb_full = Moments::default();
    let mut fb_08 = Moments::default();
    let mut ber_sum = vec![0.0; grid.len()];
    let mut exceeded = 0;
    for t in &summaries {
        for (m, p) in per_s.iter_mut().zip(&t.passage) {
            if let Some(sent) = p {
                m.push(*sent as f64);
            }
        }
        match t.full {
            Some(n) => {
                overhead.push(n as f64 / k as f64);
                fb_full.push(t.feedback_total as f64);
                fb_08.push(t.feedback_at_beta08 as f64);
            }
            None => exceeded += 1,
        }
        for (acc, r) in ber_sum.iter_mut().zip(&t.ber_recovered) {
            *acc += (k - r) as f64 / k as f64;
        }
    }

    Ok(AggregateResult {
        config: cfg.clone(),
        trials,
        milestones: milestones
            .iter()
            .zip(&per_s)
            .map(|(&s, m)| MilestoneStat { s, sent_mean: m.mean(), sent_std: m.std(), reached: m.n })
            .collect(),
        overhead_mean: overhead.mean(),
        overhead_std: overhead.std(),
        feedback_mean_full: fb_full.mean(),
        feedback_mean_beta08: fb_08.mean(),
        budget_exceeded_count: exceeded,
        ber: grid
            .iter()
            .zip(&ber_sum)
            .map(|(&overhead, s)| BerPoint { overhead, ber: s / trials as f64 })
            .collect(),
    })
}

/// Aggregates `trials` sessions of `cfg` using `jobs` worker threads.
pub fn monte_carlo(cfg: &SessionConfig, trials: usize, jobs: usize) -> Result<AggregateResult> {
    aggregate_with_grid(cfg, trials, jobs, &default_overhead_grid())
}

/// Mean fraction of unrecovered symbols after `floor(o * k)` transmissions,
/// for each overhead `o` in `grid`.
pub fn ber_curve(cfg: &SessionConfig, trials: usize, grid: &[f64], jobs: usize) -> Result<Vec<BerPoint>> {
    if grid.iter().any(|o| *o < 0.0 || (o * cfg.k as f64) as u64 > cfg.budget()) {
        return invalid("overhead grid must be non-negative and within the budget");
    }
    Ok(aggregate_with_grid(cfg, trials, jobs, grid)?.ber)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub sofc_sent_mean: f64,
    pub ofc_sent_mean: f64,
    /// `sofc_sent_mean - ofc_sent_mean`.
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub k: usize,
    pub trials: usize,
    pub rows: Vec<SweepRow>,
    /// Erasure rate where the SOFC - OFC difference first changes sign,
    /// by linear interpolation between grid points.
    pub crossover: Option<f64>,
    pub epsilon0: f64,
}

/// Full-recovery comparison of SOFC against OFC (`beta0 = 0.5`) across
/// erasure rates.
pub fn sweep_epsilon(k: usize, eps_grid: &[f64], trials: usize, seed: u64, jobs: usize) -> Result<SweepReport> {
    let mut rows = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let sofc = monte_carlo(&SessionConfig::new(SchemeConfig::Sofc, k, eps).with_seed(seed), trials, jobs)?;
        let ofc = monte_carlo(&SessionConfig::new(SchemeConfig::ofc(), k, eps).with_seed(seed), trials, jobs)?;
        let (a, b) = (sofc.full_recovery_sent_mean(), ofc.full_recovery_sent_mean());
        rows.push(SweepRow { epsilon: eps, sofc_sent_mean: a, ofc_sent_mean: b, difference: a - b });
    }
    let crossover = rows.windows(2).find_map(|w| {
        let (l, r) = (w[0], w[1]);
        if l.difference <= 0.0 && r.difference > 0.0 {
            let t = -l.difference / (r.difference - l.difference);
            Some(l.epsilon + t * (r.epsilon - l.epsilon))
        } else {
            None
        }
    });
    Ok(SweepReport { k, trials, rows, crossover, epsilon0: crate::analytics::epsilon_threshold() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompareRow {
    pub s: usize,
    pub analytic: f64,
    pub empirical: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
    pub max_relative_error: f64,
    pub mean_relative_error: f64,
    /// Recovered count at which the maximum error occurs.
    pub worst_s: usize,
}

/// Lower and upper recovery fractions of the comparison window.
pub const COMPARE_WINDOW: (f64, f64) = (0.05, 0.98);

/// Relative error `|empirical - analytic| / analytic` of the mean curve
/// against its closed-form expectation over the comparison window.
pub fn compare_curves(agg: &AggregateResult, analytics: &Analytics) -> Result<CompareReport> {
    let cfg = &agg.config;
    let k = cfg.k as f64;
    let rows: Vec<CompareRow> = agg
        .milestones
        .iter()
        .filter(|m| {
            let f = m.s as f64 / k;
            f >= COMPARE_WINDOW.0 - 1e-12 && f <= COMPARE_WINDOW.1 + 1e-12 && m.reached > 0
        })
        .map(|m| {
            let analytic = analytics.expected_for(&cfg.scheme, cfg.epsilon, m.s)?;
            Ok(CompareRow {
                s: m.s,
                analytic,
                empirical: m.sent_mean,
                relative_error: (m.sent_mean - analytic).abs() / analytic,
            })
        })
        .collect::<Result<_>>()?;
    if rows.is_empty() {
        return invalid("no milestones inside the comparison window");
    }
    let (worst_s, max_relative_error) = rows
        .iter()
        .map(|r| (r.s, r.relative_error))
        .fold((0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
    let mean_relative_error = rows.iter().map(|r| r.relative_error).sum::<f64>() / rows.len() as f64;
    Ok(CompareReport { rows, max_relative_error, mean_relative_error, worst_s })
}

/// Header of the aggregate curve CSV.
pub const CURVE_CSV_HEADER: &str = "scheme,k,eps,gamma0,policy,trial_or_agg,s,sent_mean,sent_std";

/// Aggregate curve as CSV, one row per milestone.
pub fn aggregate_csv(agg: &AggregateResult) -> String {
    let cfg = &agg.config;
    let gamma0 = cfg.scheme.gamma0().map(|g| g.to_string()).unwrap_or_default();
    let mut out = String::new();
    out.push_str(CURVE_CSV_HEADER);
    out.push('\n');
    for m in &agg.milestones {
        if m.reached == 0 {
            continue;
        }
        let _ = writeln!(
            out,
            "{},{},{},{},{},agg,{},{:.4},{:.4}",
            cfg.scheme.name(),
            cfg.k,
            cfg.epsilon,
            gamma0,
            cfg.policy.name(),
            m.s,
            m.sent_mean,
            m.sent_std
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub scheme: &'static str,
    pub k: usize,
    pub eps: f64,
    pub gamma0: Option<f64>,
    pub policy: &'static str,
    pub trials: usize,
    pub seed: u64,
    pub overhead_mean: f64,
    pub overhead_std: f64,
    pub feedback_mean_beta08: f64,
    pub feedback_mean_full: f64,
    pub budget_exceeded_count: usize,
}

pub fn summary(agg: &AggregateResult) -> Summary {
    let cfg = &agg.config;
    Summary {
        scheme: cfg.scheme.name(),
        k: cfg.k,
        eps: cfg.epsilon,
        gamma0: cfg.scheme.gamma0(),
        policy: cfg.policy.name(),
        trials: agg.trials,
        seed: cfg.seed,
        overhead_mean: agg.overhead_mean,
        overhead_std: agg.overhead_std,
        feedback_mean_beta08: agg.feedback_mean_beta08,
        feedback_mean_full: agg.feedback_mean_full,
        budget_exceeded_count: agg.budget_exceeded_count,
    }
}

/// JSON summary of an aggregate run.
pub fn summary_json(agg: &AggregateResult) -> String {
    serde_json::to_string_pretty(&summary(agg)).expect("summary serializes")
}
