//! Byte-exact frame format and a framed file transfer over an in-process
//! lossy link.
//!
//! All multi-byte integers are big-endian. Every frame starts with
//!
//! ```text
//! magic 0x4F 0x46 | version 0x01 | frame_type
//! ```
//!
//! and ends with a CRC-32 (IEEE) over all preceding bytes.
//!
//! | type | body |
//! |------|------|
//! | 0 data | session u64, seq u64, degree u16, degree × index u32, payload_len u16, payload |
//! | 1 feedback | session u64, kind u8 (0 largest, 1 black, 2 beta, 3 complete), recovered u32 |
//! | 2 header | session u64, k u32, symbol_size u16, original_len u64 |

use std::collections::VecDeque;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::channel::{stream_rng, trial_seed, Channel, ChannelParams, Stream};
use crate::degree::DegreeTable;
use crate::error::{invalid, Error, Result};
use crate::scheme::{EncoderState, FeedbackMsg, FeedbackPolicy, Phase, Receiver, SchemeConfig, SchemeKind};
use crate::sim::{PhaseCounts, DEFAULT_BUDGET_FACTOR};
use crate::symbol::{CodedSymbol, Payload, SourceBlock, SymbolId};

pub const MAGIC: [u8; 2] = [0x4F, 0x46];
pub const VERSION: u8 = 1;
pub const FRAME_DATA: u8 = 0;
pub const FRAME_FEEDBACK: u8 = 1;
pub const FRAME_HEADER: u8 = 2;

const PREFIX_LEN: usize = 4;
const CRC_LEN: usize = 4;
const FEEDBACK_LEN: usize = PREFIX_LEN + 8 + 1 + 4 + CRC_LEN;
const HEADER_LEN: usize = PREFIX_LEN + 8 + 4 + 2 + 8 + CRC_LEN;

/// Reasons a byte string is rejected. Each variant has a distinct code.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum FrameError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("unknown or unexpected frame type {0}")]
    BadFrameType(u8),
    #[error("frame truncated")]
    Truncated,
    #[error("trailing bytes after frame")]
    TrailingBytes,
    #[error("crc mismatch")]
    CrcMismatch,
    #[error("indices empty or not strictly increasing")]
    MalformedIndices,
    #[error("unknown feedback kind {0}")]
    BadFeedbackKind(u8),
    #[error("recovered count set on a feedback kind that carries none")]
    UnexpectedRecovered,
    #[error("inconsistent session header")]
    BadHeader,
}

impl FrameError {
    pub fn code(&self) -> u8 {
        match self {
            FrameError::BadMagic => 1,
            FrameError::BadVersion(_) => 2,
            FrameError::BadFrameType(_) => 3,
            FrameError::Truncated => 4,
            FrameError::TrailingBytes => 5,
            FrameError::CrcMismatch => 6,
            FrameError::MalformedIndices => 7,
            FrameError::BadFeedbackKind(_) => 8,
            FrameError::UnexpectedRecovered => 9,
            FrameError::BadHeader => 10,
        }
    }
}

type FrameResult<T> = std::result::Result<T, FrameError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataFrame {
    pub session_id: u64,
    /// Transmission slot of this frame.
    pub seq_no: u64,
    pub symbol: CodedSymbol,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeedbackFrame {
    pub session_id: u64,
    pub msg: FeedbackMsg,
    /// Recovered count; zero for the two build-up messages.
    pub recovered: u32,
}

impl FeedbackFrame {
    /// Fills `recovered` from the message; `Complete` reports `k`.
    pub fn new(session_id: u64, msg: FeedbackMsg, k: usize) -> Self {
        let recovered = match msg {
            FeedbackMsg::BetaUpdate { recovered } => recovered as u32,
            FeedbackMsg::Complete => k as u32,
            _ => 0,
        };
        Self { session_id, msg, recovered }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeaderFrame {
    pub session_id: u64,
    pub k: u32,
    pub symbol_size: u16,
    pub original_len: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Frame {
    Data(DataFrame),
    Feedback(FeedbackFrame),
    Header(HeaderFrame),
}

fn prefix(frame_type: u8, capacity: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(capacity);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(frame_type);
    out
}

fn seal(mut out: Vec<u8>) -> Vec<u8> {
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_be_bytes());
    out
}

/// Serializes a coded symbol. Fails if the degree or payload length does
/// not fit its 16-bit field.
pub fn encode_data(symbol: &CodedSymbol, session_id: u64, seq_no: u64) -> Result<Vec<u8>> {
    let degree = u16::try_from(symbol.degree())
        .map_err(|_| Error::InvalidParameter(format!("degree {} exceeds the frame limit", symbol.degree())))?;
    let payload = symbol.payload().as_bytes();
    let payload_len = u16::try_from(payload.len())
        .map_err(|_| Error::InvalidParameter(format!("payload of {} bytes exceeds the frame limit", payload.len())))?;
    let mut out = prefix(FRAME_DATA, PREFIX_LEN + 20 + 4 * symbol.degree() + payload.len() + CRC_LEN);
    out.extend_from_slice(&session_id.to_be_bytes());
    out.extend_from_slice(&seq_no.to_be_bytes());
    out.extend_from_slice(&degree.to_be_bytes());
    for id in symbol.indices() {
        out.extend_from_slice(&id.0.to_be_bytes());
    }
    out.extend_from_slice(&payload_len.to_be_bytes());
    out.extend_from_slice(payload);
    Ok(seal(out))
}

pub fn encode_feedback(frame: &FeedbackFrame) -> Vec<u8> {
    let kind = match frame.msg {
        FeedbackMsg::LargestComponentReached => 0u8,
        FeedbackMsg::ComponentBlack => 1,
        FeedbackMsg::BetaUpdate { .. } => 2,
        FeedbackMsg::Complete => 3,
    };
    let recovered = match frame.msg {
        FeedbackMsg::BetaUpdate { recovered } => recovered as u32,
        FeedbackMsg::Complete => frame.recovered,
        _ => 0,
    };
    let mut out = prefix(FRAME_FEEDBACK, FEEDBACK_LEN);
    out.extend_from_slice(&frame.session_id.to_be_bytes());
    out.push(kind);
    out.extend_from_slice(&recovered.to_be_bytes());
    seal(out)
}

pub fn encode_header(frame: &HeaderFrame) -> Vec<u8> {
    let mut out = prefix(FRAME_HEADER, HEADER_LEN);
    out.extend_from_slice(&frame.session_id.to_be_bytes());
    out.extend_from_slice(&frame.k.to_be_bytes());
    out.extend_from_slice(&frame.symbol_size.to_be_bytes());
    out.extend_from_slice(&frame.original_len.to_be_bytes());
    seal(out)
}

fn be_u16(b: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([b[at], b[at + 1]])
}

fn be_u32(b: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(b[at..at + 4].try_into().unwrap())
}

fn be_u64(b: &[u8], at: usize) -> u64 {
    u64::from_be_bytes(b[at..at + 8].try_into().unwrap())
}

/// Total frame length implied by the length fields, or `Truncated` if the
/// fields themselves are cut off.
fn expected_len(bytes: &[u8], frame_type: u8) -> FrameResult<usize> {
    match frame_type {
        FRAME_DATA => {
            let deg_at = PREFIX_LEN + 16;
            if bytes.len() < deg_at + 2 {
                return Err(FrameError::Truncated);
            }
            let degree = be_u16(bytes, deg_at) as usize;
            let len_at = deg_at + 2 + 4 * degree;
            if bytes.len() < len_at + 2 {
                return Err(FrameError::Truncated);
            }
            Ok(len_at + 2 + be_u16(bytes, len_at) as usize + CRC_LEN)
        }
        FRAME_FEEDBACK => Ok(FEEDBACK_LEN),
        FRAME_HEADER => Ok(HEADER_LEN),
        t => Err(FrameError::BadFrameType(t)),
    }
}

/// Decodes any frame. Checks run in a fixed order (length, magic, version,
/// type, declared length, crc, field semantics) so every input maps to
/// exactly one outcome.
pub fn decode_frame(bytes: &[u8]) -> FrameResult<Frame> {
    if bytes.len() < PREFIX_LEN {
        return Err(FrameError::Truncated);
    }
    if bytes[..2] != MAGIC {
        return Err(FrameError::BadMagic);
    }
    if bytes[2] != VERSION {
        return Err(FrameError::BadVersion(bytes[2]));
    }
    let frame_type = bytes[3];
    let total = expected_len(bytes, frame_type)?;
    if bytes.len() < total {
        return Err(FrameError::Truncated);
    }
    if bytes.len() > total {
        return Err(FrameError::TrailingBytes);
    }
    let body_end = total - CRC_LEN;
    if crc32fast::hash(&bytes[..body_end]) != be_u32(bytes, body_end) {
        return Err(FrameError::CrcMismatch);
    }
    let session_id = be_u64(bytes, PREFIX_LEN);
    match frame_type {
        FRAME_DATA => {
            let seq_no = be_u64(bytes, PREFIX_LEN + 8);
            let degree = be_u16(bytes, PREFIX_LEN + 16) as usize;
            let idx_at = PREFIX_LEN + 18;
            let indices: Vec<SymbolId> = (0..degree).map(|i| SymbolId(be_u32(bytes, idx_at + 4 * i))).collect();
            let pay_at = idx_at + 4 * degree + 2;
            let payload = Payload(bytes[pay_at..body_end].to_vec());
            let symbol = CodedSymbol::new(indices, payload).map_err(|_| FrameError::MalformedIndices)?;
            Ok(Frame::Data(DataFrame { session_id, seq_no, symbol }))
        }
        FRAME_FEEDBACK => {
            let kind = bytes[PREFIX_LEN + 8];
            let recovered = be_u32(bytes, PREFIX_LEN + 9);
            let msg = match kind {
                0 | 1 if recovered != 0 => return Err(FrameError::UnexpectedRecovered),
                0 => FeedbackMsg::LargestComponentReached,
                1 => FeedbackMsg::ComponentBlack,
                2 => FeedbackMsg::BetaUpdate { recovered: recovered as usize },
                3 => FeedbackMsg::Complete,
                other => return Err(FrameError::BadFeedbackKind(other)),
            };
            Ok(Frame::Feedback(FeedbackFrame { session_id, msg, recovered }))
        }
        _ => {
            let k = be_u32(bytes, PREFIX_LEN + 8);
            let symbol_size = be_u16(bytes, PREFIX_LEN + 12);
            let original_len = be_u64(bytes, PREFIX_LEN + 14);
            if k < 2 || symbol_size == 0 || original_len == 0 || original_len > k as u64 * symbol_size as u64 {
                return Err(FrameError::BadHeader);
            }
            Ok(Frame::Header(HeaderFrame { session_id, k, symbol_size, original_len }))
        }
    }
}

pub fn decode_data(bytes: &[u8]) -> FrameResult<DataFrame> {
    match decode_frame(bytes)? {
        Frame::Data(f) => Ok(f),
        _ => Err(FrameError::BadFrameType(bytes[3])),
    }
}

pub fn decode_feedback(bytes: &[u8]) -> FrameResult<FeedbackFrame> {
    match decode_frame(bytes)? {
        Frame::Feedback(f) => Ok(f),
        _ => Err(FrameError::BadFrameType(bytes[3])),
    }
}

pub fn decode_header(bytes: &[u8]) -> FrameResult<HeaderFrame> {
    match decode_frame(bytes)? {
        Frame::Header(f) => Ok(f),
        _ => Err(FrameError::BadFrameType(bytes[3])),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferConfig {
    pub scheme: SchemeConfig,
    pub epsilon: f64,
    pub seed: u64,
    pub symbol_size: usize,
    pub policy: FeedbackPolicy,
    /// Maximum data frames; `None` means `50 * k`.
    pub budget: Option<u64>,
}

impl TransferConfig {
    pub fn new(scheme: SchemeConfig, epsilon: f64, seed: u64, symbol_size: usize) -> Self {
        Self { scheme, epsilon, seed, symbol_size, policy: FeedbackPolicy::EveryDegreeChange, budget: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferReport {
    pub scheme: &'static str,
    pub k: usize,
    pub symbol_size: usize,
    pub original_len: u64,
    pub data_frames_sent: u64,
    pub data_frames_delivered: u64,
    pub feedback_frames: usize,
    /// Data frames sent until the receiver reported completion, over k.
    pub overhead: f64,
    pub bytes_on_wire: u64,
    pub phase_counts: PhaseCounts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferOutput {
    pub data: Vec<u8>,
    pub report: TransferReport,
}

/// Sender task: owns the source block and the encoder.
struct Sender {
    session_id: u64,
    src: SourceBlock,
    encoder: EncoderState,
    seq: u64,
    phases: PhaseCounts,
}

impl Sender {
    fn next_frame(&mut self) -> Result<Vec<u8>> {
        let before = self.encoder.phase();
        let symbol = self.encoder.next_symbol(&self.src)?;
        let phase = match before {
            Phase::Systematic { next_index } if next_index >= self.src.k() => self.encoder.phase(),
            p => p,
        };
        match phase {
            Phase::BuildUp => self.phases.build_up += 1,
            Phase::Degree1Seeding => self.phases.seeding += 1,
            Phase::Systematic { .. } => self.phases.systematic += 1,
            Phase::Completion => self.phases.completion += 1,
            Phase::Terminated => {}
        }
        let frame = encode_data(&symbol, self.session_id, self.seq)?;
        self.seq += 1;
        Ok(frame)
    }

    fn on_frame(&mut self, bytes: &[u8]) -> Result<()> {
        let fb = decode_feedback(bytes)?;
        if fb.session_id != self.session_id {
            return Err(Error::ProtocolError("feedback for another session".into()));
        }
        self.encoder.on_feedback(fb.msg)
    }
}

/// Receiver task: learns the block geometry from the header frame, then
/// decodes data frames and answers with feedback frames.
struct Sink {
    session_id: u64,
    header: Option<HeaderFrame>,
    receiver: Option<Receiver>,
    scheme: SchemeConfig,
    policy: FeedbackPolicy,
}

impl Sink {
    fn on_frame(&mut self, bytes: &[u8]) -> Result<Vec<Vec<u8>>> {
        let mut replies = Vec::new();
        match decode_frame(bytes)? {
            Frame::Header(h) => {
                let table = Arc::new(DegreeTable::new(h.k as usize)?);
                self.session_id = h.session_id;
                self.receiver = Some(Receiver::new(self.scheme, self.policy, table)?);
                self.header = Some(h);
            }
            Frame::Data(d) => {
                let rx = self
                    .receiver
                    .as_mut()
                    .ok_or_else(|| Error::ProtocolError("data frame before session header".into()))?;
                if d.session_id != self.session_id {
                    return Err(Error::ProtocolError("data frame for another session".into()));
                }
                let k = rx.graph().k();
                if d.symbol.indices().last().is_some_and(|id| id.index() >= k) {
                    return Err(Error::MalformedSymbol("index out of range".into()));
                }
                let mut msgs = Vec::new();
                if self.scheme.kind() == SchemeKind::Sofc && d.seq_no >= k as u64 {
                    msgs.extend(rx.end_of_systematic());
                }
                let (_, out) = rx.receive(&d.symbol)?;
                msgs.extend(out);
                if self.scheme.kind() == SchemeKind::Sofc && d.seq_no + 1 == k as u64 {
                    msgs.extend(rx.end_of_systematic());
                }
                for msg in msgs {
                    replies.push(encode_feedback(&FeedbackFrame::new(self.session_id, msg, k)));
                }
            }
            Frame::Feedback(_) => return Err(Error::ProtocolError("receiver got a feedback frame".into())),
        }
        Ok(replies)
    }

    fn output(&self) -> Option<Vec<u8>> {
        let h = self.header?;
        let rx = self.receiver.as_ref()?;
        if !rx.graph().is_complete() {
            return None;
        }
        let mut out = Vec::with_capacity(h.k as usize * h.symbol_size as usize);
        for v in rx.graph().values() {
            out.extend_from_slice(v.as_ref()?.as_bytes());
        }
        out.truncate(h.original_len as usize);
        Some(out)
    }
}

/// Sends `input` through the framed lossy link and returns what the
/// receiver reconstructed. The header frame and feedback frames travel
/// reliably; data frames are erased with probability `epsilon`.
pub fn transfer_file(input: &[u8], cfg: &TransferConfig) -> Result<TransferOutput> {
    if input.is_empty() {
        return invalid("input is empty");
    }
    if cfg.symbol_size == 0 || cfg.symbol_size > u16::MAX as usize {
        return invalid(format!("symbol size must be in 1..=65535, got {}", cfg.symbol_size));
    }
    cfg.scheme.validate()?;
    cfg.policy.validate()?;
    let src = SourceBlock::from_bytes(input, cfg.symbol_size)?;
    let k = src.k();
    if k > u32::MAX as usize {
        return invalid("input too large for 32-bit symbol indices");
    }
    let trial = 0;
    let session_id = trial_seed(cfg.seed, u64::MAX);
    let mut channel = Channel::new(ChannelParams::new(cfg.epsilon, cfg.seed, trial)?);
    let encoder = EncoderState::new(cfg.scheme, k, stream_rng(cfg.seed, trial, Stream::Encoder))?;
    let mut sender = Sender { session_id, src, encoder, seq: 0, phases: PhaseCounts::default() };
    let mut sink = Sink { session_id: 0, header: None, receiver: None, scheme: cfg.scheme, policy: cfg.policy };

    let mut forward: VecDeque<Vec<u8>> = VecDeque::new();
    let mut backward: VecDeque<Vec<u8>> = VecDeque::new();
    let mut bytes_on_wire = 0u64;

    let header = encode_header(&HeaderFrame {
        session_id,
        k: k as u32,
        symbol_size: cfg.symbol_size as u16,
        original_len: input.len() as u64,
    });
    bytes_on_wire += header.len() as u64;
    forward.push_back(header);

    let budget = cfg.budget.unwrap_or(DEFAULT_BUDGET_FACTOR * k as u64);
    let (mut delivered, mut feedback_frames) = (0u64, 0usize);
    let mut completed_at = None;
    loop {
        // receiver drains its inbound queue
        while let Some(frame) = forward.pop_front() {
            for reply in sink.on_frame(&frame)? {
                bytes_on_wire += reply.len() as u64;
                feedback_frames += 1;
                backward.push_back(reply);
            }
        }
        // sender drains feedback
        while let Some(frame) = backward.pop_front() {
            sender.on_frame(&frame)?;
            if sender.encoder.phase() == Phase::Terminated && completed_at.is_none() {
                completed_at = Some(sender.seq);
            }
        }
        if sender.encoder.phase() == Phase::Terminated {
            break;
        }
        if sender.seq >= budget {
            return Err(Error::TransferFailed {
                sent: sender.seq,
                recovered: sink.receiver.as_ref().map_or(0, |r| r.graph().recovered_count()),
                k,
            });
        }
        let slot = sender.seq;
        let frame = sender.next_frame()?;
        bytes_on_wire += frame.len() as u64;
        if channel.deliver(slot) {
            delivered += 1;
            forward.push_back(frame);
        }
    }

    let data = sink
        .output()
        .ok_or_else(|| Error::ContractViolation("sender terminated before the receiver finished".into()))?;
    let sent = completed_at.unwrap_or(sender.seq);
    Ok(TransferOutput {
        data,
        report: TransferReport {
            scheme: cfg.scheme.name(),
            k,
            symbol_size: cfg.symbol_size,
            original_len: input.len() as u64,
            data_frames_sent: sent,
            data_frames_delivered: delivered,
            feedback_frames,
            overhead: sent as f64 / k as f64,
            bytes_on_wire,
            phase_counts: sender.phases,
        },
    })
}
