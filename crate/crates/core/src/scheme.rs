//! Encoder state machines and receiver feedback logic for the three online
//! schemes.
//!
//! * `Ofc`: degree-2 build-up until the largest white component reaches
//!   `ceil(beta0 * k)`, random degree-1 seeding until that component turns
//!   black, then the feedback-driven completion phase.
//! * `Ofcnb`: random degree-1 symbols until `ceil(gamma0 * k)` symbols are
//!   recovered, then completion.
//! * `Sofc`: every source symbol once, in index order, then completion.
//!
//! During completion the encoder draws `m` distinct uniform indices, where
//! `m` is the optimal degree for the last recovery fraction fed back.

use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::degree::{optimal_degree_capped, useful_probability, DegreeTable};
use crate::error::{invalid, Error, Result};
use crate::graph::{DecodeGraph, Update};
use crate::symbol::{CodedSymbol, SourceBlock, SymbolId};

pub const DEFAULT_BETA0: f64 = 0.5;
pub const DEFAULT_DELTA_P: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "lowercase")]
pub enum SchemeConfig {
    Ofc { beta0: f64 },
    Ofcnb { gamma0: f64 },
    Sofc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Ofc,
    Ofcnb,
    Sofc,
}

impl SchemeKind {
    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Ofc => "ofc",
            SchemeKind::Ofcnb => "ofcnb",
            SchemeKind::Sofc => "sofc",
        }
    }
}

impl SchemeConfig {
    pub fn ofc() -> Self {
        SchemeConfig::Ofc { beta0: DEFAULT_BETA0 }
    }

    pub fn kind(&self) -> SchemeKind {
        match self {
            SchemeConfig::Ofc { .. } => SchemeKind::Ofc,
            SchemeConfig::Ofcnb { .. } => SchemeKind::Ofcnb,
            SchemeConfig::Sofc => SchemeKind::Sofc,
        }
    }

    pub fn name(&self) -> &'static str {
        self.kind().name()
    }

    pub fn gamma0(&self) -> Option<f64> {
        match self {
            SchemeConfig::Ofcnb { gamma0 } => Some(*gamma0),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SchemeConfig::Ofc { beta0 } if !(beta0 > 0.0 && beta0 < 1.0) => {
                invalid(format!("beta0 must be in (0, 1), got {beta0}"))
            }
            SchemeConfig::Ofcnb { gamma0 } if !(gamma0 > 0.0 && gamma0 <= 1.0) => {
                invalid(format!("gamma0 must be in (0, 1], got {gamma0}"))
            }
            _ => Ok(()),
        }
    }

    /// Advisory message for legal but poor parameter choices.
    pub fn warning(&self) -> Option<String> {
        match *self {
            SchemeConfig::Ofcnb { gamma0 } if gamma0 > 0.5 => Some(format!(
                "gamma0 = {gamma0} > 0.5 costs full-recovery overhead without improving \
                 intermediate recovery"
            )),
            _ => None,
        }
    }

    /// `ceil(fraction * k)`, the count at which the scheme's first phase ends.
    fn threshold(fraction: f64, k: usize) -> usize {
        ((fraction * k as f64) - 1e-9).ceil().max(0.0) as usize
    }
}

/// Receiver-to-sender control message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum FeedbackMsg {
    /// OFC: the largest white component reached `ceil(beta0 * k)`.
    LargestComponentReached,
    /// OFC: the component that triggered the build-up signal turned black.
    ComponentBlack,
    BetaUpdate { recovered: usize },
    Complete,
}

impl FeedbackMsg {
    pub fn tag(&self) -> &'static str {
        match self {
            FeedbackMsg::LargestComponentReached => "largest_component",
            FeedbackMsg::ComponentBlack => "component_black",
            FeedbackMsg::BetaUpdate { .. } => "beta_update",
            FeedbackMsg::Complete => "complete",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum FeedbackPolicy {
    /// Feed back whenever the optimal degree changes.
    EveryDegreeChange,
    /// Feed back only when the new degree beats the current one by more than
    /// `delta_p` in `p1 + p2`.
    Threshold { delta_p: f64 },
}

impl FeedbackPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            FeedbackPolicy::Threshold { delta_p } if !(delta_p > 0.0 && delta_p < 1.0) => {
                invalid(format!("delta_p must be in (0, 1), got {delta_p}"))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FeedbackPolicy::EveryDegreeChange => "every",
            FeedbackPolicy::Threshold { .. } => "threshold",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Phase {
    BuildUp,
    Degree1Seeding,
    Systematic { next_index: usize },
    Completion,
    Terminated,
}

impl Phase {
    pub fn name(&self) -> &'static str {
        match self {
            Phase::BuildUp => "build_up",
            Phase::Degree1Seeding => "seeding",
            Phase::Systematic { .. } => "systematic",
            Phase::Completion => "completion",
            Phase::Terminated => "terminated",
        }
    }
}

/// Sender side of one session.
#[derive(Debug, Clone)]
pub struct EncoderState {
    config: SchemeConfig,
    k: usize,
    phase: Phase,
    known_beta: f64,
    current_m: usize,
    sent: u64,
    rng: ChaCha8Rng,
}

impl EncoderState {
    pub fn new(config: SchemeConfig, k: usize, rng: ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        if k < 2 {
            return invalid(format!("k must be at least 2, got {k}"));
        }
        let phase = match config {
            SchemeConfig::Ofc { .. } => Phase::BuildUp,
            SchemeConfig::Ofcnb { .. } => Phase::Degree1Seeding,
            SchemeConfig::Sofc => Phase::Systematic { next_index: 0 },
        };
        Ok(Self { config, k, phase, known_beta: 0.0, current_m: 2, sent: 0, rng })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn known_beta(&self) -> f64 {
        self.known_beta
    }

    pub fn current_degree(&self) -> usize {
        self.current_m
    }

    pub fn sent_count(&self) -> u64 {
        self.sent
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.config
    }

    fn enter_completion(&mut self, beta: f64) -> Result<()> {
        self.known_beta = beta;
        self.current_m = optimal_degree_capped(beta, self.k)?;
        self.phase = Phase::Completion;
        Ok(())
    }

    fn random_indices(&mut self, m: usize) -> Vec<SymbolId> {
        if m == 1 {
            return vec![SymbolId(self.rng.gen_range(0..self.k) as u32)];
        }
        let mut v: Vec<SymbolId> = index::sample(&mut self.rng, self.k, m)
            .into_iter()
            .map(SymbolId::from)
            .collect();
        v.sort_unstable();
        v
    }

    /// Chooses the constituents of the next coded symbol.
    pub fn next_indices(&mut self) -> Result<Vec<SymbolId>> {
        if let Phase::Systematic { next_index } = self.phase {
            if next_index >= self.k {
                // systematic pass done; run on the last fed-back estimate
                // until the receiver reports
                let beta = self.known_beta;
                self.enter_completion(beta)?;
            }
        }
        let indices = match self.phase {
            Phase::BuildUp => self.random_indices(2),
            Phase::Degree1Seeding => self.random_indices(1),
            Phase::Systematic { next_index } => {
                self.phase = Phase::Systematic { next_index: next_index + 1 };
                vec![SymbolId(next_index as u32)]
            }
            Phase::Completion => self.random_indices(self.current_m),
            Phase::Terminated => {
                return Err(Error::ContractViolation(
                    "next_symbol called after the session completed".into(),
                ))
            }
        };
        self.sent += 1;
        Ok(indices)
    }

    pub fn next_symbol(&mut self, src: &SourceBlock) -> Result<CodedSymbol> {
        if src.k() != self.k {
            return invalid(format!("source block has k = {}, encoder expects {}", src.k(), self.k));
        }
        let indices = self.next_indices()?;
        src.encode(indices)
    }

    pub fn on_feedback(&mut self, msg: FeedbackMsg) -> Result<()> {
        let out_of_order = |phase: Phase| {
            Err(Error::ProtocolError(format!(
                "{} is not valid for {} in phase {}",
                msg.tag(),
                self.config.name(),
                phase.name()
            )))
        };
        match (msg, self.phase) {
            (_, Phase::Terminated) => out_of_order(self.phase),
            (FeedbackMsg::Complete, _) => {
                self.phase = Phase::Terminated;
                Ok(())
            }
            (FeedbackMsg::LargestComponentReached, Phase::BuildUp) => {
                self.phase = Phase::Degree1Seeding;
                Ok(())
            }
            (FeedbackMsg::ComponentBlack, Phase::Degree1Seeding)
                if self.config.kind() == SchemeKind::Ofc =>
            {
                let beta0 = match self.config {
                    SchemeConfig::Ofc { beta0 } => beta0,
                    _ => unreachable!(),
                };
                let reached = SchemeConfig::threshold(beta0, self.k);
                self.enter_completion(reached as f64 / self.k as f64)
            }
            (FeedbackMsg::BetaUpdate { recovered }, phase) => {
                if recovered >= self.k {
                    return Err(Error::ProtocolError(format!(
                        "beta update reports {recovered} recovered of {}",
                        self.k
                    )));
                }
                let beta = recovered as f64 / self.k as f64;
                match (self.config, phase) {
                    (_, Phase::Completion) => self.enter_completion(beta),
                    (SchemeConfig::Ofcnb { gamma0 }, Phase::Degree1Seeding)
                        if recovered >= SchemeConfig::threshold(gamma0, self.k) =>
                    {
                        self.enter_completion(beta)
                    }
                    (SchemeConfig::Sofc, Phase::Systematic { next_index }) if next_index >= self.k => {
                        self.enter_completion(beta)
                    }
                    _ => out_of_order(phase),
                }
            }
            (_, phase) => out_of_order(phase),
        }
    }
}

/// Completion-phase decision rule: whether the receiver should report its
/// recovery state, given the degree the encoder currently uses.
pub fn receiver_feedback_decision(
    announced_m: usize,
    graph: &DecodeGraph,
    policy: FeedbackPolicy,
    table: &DegreeTable,
) -> Option<FeedbackMsg> {
    let recovered = graph.recovered_count();
    if recovered >= graph.k() {
        return Some(FeedbackMsg::Complete);
    }
    let m_new = table.degree(recovered);
    let send = match policy {
        FeedbackPolicy::EveryDegreeChange => m_new != announced_m,
        FeedbackPolicy::Threshold { delta_p } => {
            let beta = graph.beta();
            table.p_m(recovered) > useful_probability(announced_m, beta) + delta_p
        }
    };
    send.then_some(FeedbackMsg::BetaUpdate { recovered })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RxStage {
    BuildUp,
    Seeding,
    Systematic,
    Completion,
    Done,
}

/// Receiver side of one session: the decoding graph plus the logic deciding
/// which feedback to send after every update.
#[derive(Debug, Clone)]
pub struct Receiver {
    graph: DecodeGraph,
    config: SchemeConfig,
    policy: FeedbackPolicy,
    table: Arc<DegreeTable>,
    stage: RxStage,
    announced_m: usize,
    target: Option<SymbolId>,
    systematic_ended: bool,
}

impl Receiver {
    pub fn new(config: SchemeConfig, policy: FeedbackPolicy, table: Arc<DegreeTable>) -> Result<Self> {
        config.validate()?;
        policy.validate()?;
        let graph = DecodeGraph::new(table.k())?;
        let stage = match config {
            SchemeConfig::Ofc { .. } => RxStage::BuildUp,
            SchemeConfig::Ofcnb { .. } => RxStage::Seeding,
            SchemeConfig::Sofc => RxStage::Systematic,
        };
        Ok(Self {
            graph,
            config,
            policy,
            table,
            stage,
            announced_m: 2,
            target: None,
            systematic_ended: false,
        })
    }

    pub fn graph(&self) -> &DecodeGraph {
        &self.graph
    }

    pub fn into_graph(self) -> DecodeGraph {
        self.graph
    }

    pub fn is_done(&self) -> bool {
        self.stage == RxStage::Done
    }

    /// Degree the receiver believes the encoder is using.
    pub fn announced_degree(&self) -> usize {
        self.announced_m
    }

    fn k(&self) -> usize {
        self.graph.k()
    }

    /// Feeds one delivered coded symbol through the decoder and returns the
    /// feedback to send, in order.
    pub fn receive(&mut self, c: &CodedSymbol) -> Result<(Update, Vec<FeedbackMsg>)> {
        let update = self.graph.receive(c)?;
        let msgs = self.decide(Some(&update));
        Ok((update, msgs))
    }

    /// SOFC: the `k` systematic slots have elapsed (whether or not they were
    /// delivered). Idempotent.
    pub fn end_of_systematic(&mut self) -> Vec<FeedbackMsg> {
        if self.stage != RxStage::Systematic || self.systematic_ended {
            return Vec::new();
        }
        self.systematic_ended = true;
        let recovered = self.graph.recovered_count();
        if recovered >= self.k() {
            self.stage = RxStage::Done;
            return vec![FeedbackMsg::Complete];
        }
        self.enter_completion(recovered);
        vec![FeedbackMsg::BetaUpdate { recovered }]
    }

    fn enter_completion(&mut self, recovered: usize) {
        self.announced_m = self.table.degree(recovered);
        self.stage = RxStage::Completion;
    }

    fn decide(&mut self, update: Option<&Update>) -> Vec<FeedbackMsg> {
        if self.stage == RxStage::Done {
            return Vec::new();
        }
        if self.graph.is_complete() {
            self.stage = RxStage::Done;
            return vec![FeedbackMsg::Complete];
        }
        let k = self.k();
        let recovered = self.graph.recovered_count();
        let mut out = Vec::new();
        match (self.stage, self.config) {
            (RxStage::BuildUp, SchemeConfig::Ofc { beta0 }) => {
                let need = SchemeConfig::threshold(beta0, k).max(2);
                if let Some(Update::Merged { a, size }) = update {
                    if *size >= need {
                        self.target = Some(*a);
                        self.stage = RxStage::Seeding;
                        out.push(FeedbackMsg::LargestComponentReached);
                    }
                }
            }
            (RxStage::Seeding, SchemeConfig::Ofc { beta0 }) => {
                let target = self.target.expect("seeding without a build-up target");
                if self.graph.is_black(target) {
                    out.push(FeedbackMsg::ComponentBlack);
                    // the encoder only knows the component reached ceil(beta0 k)
                    self.enter_completion(SchemeConfig::threshold(beta0, k));
                    out.extend(self.completion_rule());
                }
            }
            (RxStage::Seeding, SchemeConfig::Ofcnb { gamma0 }) => {
                if recovered >= SchemeConfig::threshold(gamma0, k) {
                    self.enter_completion(recovered);
                    out.push(FeedbackMsg::BetaUpdate { recovered });
                }
            }
            (RxStage::Completion, _) => out.extend(self.completion_rule()),
            _ => {}
        }
        out
    }

    fn completion_rule(&mut self) -> Option<FeedbackMsg> {
        let msg = receiver_feedback_decision(self.announced_m, &self.graph, self.policy, &self.table);
        match msg {
            Some(FeedbackMsg::BetaUpdate { recovered }) => {
                self.announced_m = self.table.degree(recovered);
            }
            Some(FeedbackMsg::Complete) => self.stage = RxStage::Done,
            _ => {}
        }
        msg
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{stream_rng, Stream};
    use crate::degree::optimal_degree;

    fn rng() -> ChaCha8Rng {
        stream_rng(1, 0, Stream::Encoder)
    }

    fn src(k: usize) -> SourceBlock {
        SourceBlock::counting(k).unwrap()
    }

    #[test]
    fn sofc_emits_indices_in_order_then_completes() {
        let mut e = EncoderState::new(SchemeConfig::Sofc, 5, rng()).unwrap();
        let b = src(5);
        for i in 0..5u32 {
            let c = e.next_symbol(&b).unwrap();
            assert_eq!(c.indices(), &[SymbolId(i)]);
        }
        assert_eq!(e.phase(), Phase::Systematic { next_index: 5 });
        let c = e.next_symbol(&b).unwrap();
        assert_eq!(e.phase(), Phase::Completion);
        assert_eq!(c.degree(), 2);
    }

    #[test]
    fn ofcnb_seeding_is_degree_one() {
        let mut e = EncoderState::new(SchemeConfig::Ofcnb { gamma0: 0.5 }, 100, rng()).unwrap();
        let b = src(100);
        for _ in 0..200 {
            assert_eq!(e.next_symbol(&b).unwrap().degree(), 1);
        }
    }

    #[test]
    fn ofc_completion_uses_optimal_degree() {
        let mut e = EncoderState::new(SchemeConfig::ofc(), 1000, rng()).unwrap();
        e.on_feedback(FeedbackMsg::LargestComponentReached).unwrap();
        e.on_feedback(FeedbackMsg::ComponentBlack).unwrap();
        e.on_feedback(FeedbackMsg::BetaUpdate { recovered: 600 }).unwrap();
        let b = src(1000);
        for _ in 0..50 {
            assert_eq!(e.next_symbol(&b).unwrap().degree(), 3);
        }
    }

    #[test]
    fn ofcnb_threshold_flip() {
        let mut e = EncoderState::new(SchemeConfig::Ofcnb { gamma0: 0.01 }, 1000, rng()).unwrap();
        assert!(e.on_feedback(FeedbackMsg::BetaUpdate { recovered: 9 }).is_err());
        e.on_feedback(FeedbackMsg::BetaUpdate { recovered: 10 }).unwrap();
        assert_eq!(e.phase(), Phase::Completion);
        assert_eq!(e.current_degree(), optimal_degree(0.01).unwrap());
        assert_eq!(e.current_degree(), 2);
    }

    #[test]
    fn ofc_phase_events_are_one_way() {
        let mut e = EncoderState::new(SchemeConfig::ofc(), 1000, rng()).unwrap();
        assert!(matches!(e.on_feedback(FeedbackMsg::ComponentBlack), Err(Error::ProtocolError(_))));
        e.on_feedback(FeedbackMsg::LargestComponentReached).unwrap();
        assert!(matches!(
            e.on_feedback(FeedbackMsg::LargestComponentReached),
            Err(Error::ProtocolError(_))
        ));
    }

    #[test]
    fn sofc_end_of_systematic_sets_degree() {
        let mut e = EncoderState::new(SchemeConfig::Sofc, 512, rng()).unwrap();
        let b = src(512);
        assert!(e.on_feedback(FeedbackMsg::BetaUpdate { recovered: 3 }).is_err());
        for _ in 0..512 {
            e.next_symbol(&b).unwrap();
        }
        e.on_feedback(FeedbackMsg::BetaUpdate { recovered: 461 }).unwrap();
        assert_eq!(e.current_degree(), optimal_degree_capped(461.0 / 512.0, 512).unwrap());
    }

    #[test]
    fn terminated_encoder_refuses_to_send() {
        let mut e = EncoderState::new(SchemeConfig::Sofc, 4, rng()).unwrap();
        e.on_feedback(FeedbackMsg::Complete).unwrap();
        assert!(matches!(e.next_symbol(&src(4)), Err(Error::ContractViolation(_))));
        assert!(matches!(e.on_feedback(FeedbackMsg::Complete), Err(Error::ProtocolError(_))));
    }

    #[test]
    fn decision_rule_every_change_and_threshold() {
        let k = 100;
        let table = DegreeTable::new(k).unwrap();
        let mut g = DecodeGraph::new(k).unwrap();
        for i in 0..51 {
            g.apply_case1(SymbolId(i), Default::default()).unwrap();
        }
        // beta = 0.51: the degree moves from 2 to 3
        assert_eq!(
            receiver_feedback_decision(2, &g, FeedbackPolicy::EveryDegreeChange, &table),
            Some(FeedbackMsg::BetaUpdate { recovered: 51 })
        );
        assert_eq!(receiver_feedback_decision(3, &g, FeedbackPolicy::EveryDegreeChange, &table), None);
        // gain of degree 3 over 2 at 0.51 is far below 0.01
        let th = FeedbackPolicy::Threshold { delta_p: 0.01 };
        assert_eq!(receiver_feedback_decision(2, &g, th, &table), None);
        for i in 51..k {
            g.apply_case1(SymbolId(i as u32), Default::default()).unwrap();
        }
        assert_eq!(receiver_feedback_decision(7, &g, th, &table), Some(FeedbackMsg::Complete));
    }

    #[test]
    fn gamma0_warning() {
        assert!(SchemeConfig::Ofcnb { gamma0: 0.7 }.warning().is_some());
        assert!(SchemeConfig::Ofcnb { gamma0: 0.3 }.warning().is_none());
        assert!(SchemeConfig::Ofcnb { gamma0: 0.0 }.validate().is_err());
        assert!(SchemeConfig::Ofc { beta0: 1.0 }.validate().is_err());
    }

    #[test]
    fn thresholds_use_ceiling() {
        assert_eq!(SchemeConfig::threshold(0.5, 1000), 500);
        assert_eq!(SchemeConfig::threshold(0.01, 1000), 10);
        assert_eq!(SchemeConfig::threshold(0.3, 1001), 301);
    }
}
