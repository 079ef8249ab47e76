//! Digital branch: DCT bit mapping, parity-only LDPC encoding, QPSK and
//! belief-propagation decoding against side information.

pub mod bits;
pub mod dct;
pub mod dsc;
pub mod ldpc;
pub mod qpsk;
pub mod quant;

pub use dct::{dct2, idct2, zigzag};
pub use dsc::{dsc_decode, estimate_side_flip_prob, side_llr, DscOutput, SideInfoLlr};
pub use ldpc::{BpOutput, LdpcCode};
pub use qpsk::{hard_decisions, qpsk_demodulate_llr, qpsk_modulate};
pub use quant::{bit_map, bit_unmap, bit_unmap_patch_with_side, QuantizerSpec};
