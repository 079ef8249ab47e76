//! Link-level simulator for hybrid digital-analog semantic image transmission.
//!
//! An image is split into patches. Patches that a learned token represents
//! poorly are encoded by a small neural semantic encoder and sent as analog
//! complex symbols; the remaining patches are replaced by tokens at the
//! receiver. A digital branch sends only LDPC parity bits of a DCT-quantized
//! copy of the whole image, and the receiver corrects the analog reconstruction
//! with them (distributed source coding with side information).
//!
//! Modules, bottom up:
//! - [`source`]: images, patches and per-patch statistics
//! - [`codec`]: the semantic encoder/decoder, tokens and training
//! - [`crlb`]: distortion terms and their Cramér-Rao lower bound
//! - [`alloc`]: power/bandwidth planning and its audit
//! - [`channel`]: Rayleigh block fading, AWGN and frame multiplexing
//! - [`digital`]: DCT bit mapping, LDPC, QPSK and side-information decoding
//! - [`metrics`]: MSE, PSNR, SSIM and MS-SSIM
//! - [`harness`]: end-to-end link runs, sweeps and output files

// Negated comparisons such as `!(x > 0.0)` are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alloc;
pub mod channel;
pub mod codec;
pub mod crlb;
pub mod digital;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod source;

pub use error::{Error, Result};
