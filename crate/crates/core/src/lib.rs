//! Forward erasure correction for live UDP flows using systematic block
//! random linear network coding over GF(2^8).
//!
//! The pieces, bottom up:
//!
//! * [`gf256`]: field arithmetic and region operations.
//! * [`codec`]: block encoder and incremental Gaussian-elimination decoder.
//! * [`wire`]: the datagram format spoken between the two proxies.
//! * [`channel`]: seeded erasure channel emulator.
//! * [`relay`]: encoder proxy, decoder proxy and passthrough.
//! * [`traffic`]: paced UDP generator and measuring sink.
//! * [`metrics`]: throughput, loss and interarrival jitter, plus result CSVs.
//! * [`models`]: HARQ/ARQ versus network-coding transmission cost.
//! * [`lab`]: end-to-end experiment campaigns over loopback.

pub mod channel;
pub mod codec;
pub mod config;
pub mod gf256;
pub mod lab;
pub mod metrics;
pub mod models;
pub mod net;
pub mod relay;
pub mod traffic;
pub mod wire;

pub use codec::{BlockDecoder, BlockEncoder, CodedSymbol, CodingParams, SymbolKind};
pub use gf256::Gf256;
