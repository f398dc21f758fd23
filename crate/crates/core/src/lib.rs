//! Online fountain codes with feedback: decoding graph, encoder state
//! machines, closed-form expectation curves, a Monte Carlo harness and a
//! framed transfer over a lossy link.

pub mod analytics;
pub mod channel;
pub mod degree;
pub mod error;
pub mod graph;
pub mod scheme;
pub mod sim;
pub mod symbol;
pub mod wire;

pub use analytics::{Analytics, Curve};
pub use channel::{Channel, ChannelParams};
pub use degree::{optimal_degree, DegreeTable};
pub use error::{Error, Result};
pub use graph::{Classification, DecodeGraph, Update};
pub use scheme::{EncoderState, FeedbackMsg, FeedbackPolicy, Phase, Receiver, SchemeConfig, SchemeKind};
pub use sim::{monte_carlo, run_session, AggregateResult, SessionConfig, SessionResult};
pub use symbol::{CodedSymbol, Payload, SourceBlock, SymbolId};
pub use wire::{transfer_file, FrameError, TransferConfig, TransferReport};
