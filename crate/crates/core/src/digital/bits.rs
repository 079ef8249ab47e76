//! Packed bit streams: most significant bit first within each byte, bytes in
//! stream order, the final byte zero-padded.

pub fn pack_bits(bits: &[u8]) -> Vec<u8> {
    bits.chunks(8)
        .map(|chunk| {
            chunk
                .iter()
                .enumerate()
                .fold(0u8, |acc, (i, &b)| acc | ((b & 1) << (7 - i)))
        })
        .collect()
}

/// First `count` bits of a packed stream.
pub fn unpack_bits(bytes: &[u8], count: usize) -> Vec<u8> {
    (0..count.min(bytes.len() * 8))
        .map(|i| (bytes[i / 8] >> (7 - i % 8)) & 1)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn msb_first() {
        assert_eq!(pack_bits(&[1, 0, 0, 0, 0, 0, 0, 1, 1]), vec![0x81, 0x80]);
        assert_eq!(unpack_bits(&[0x81, 0x80], 9), vec![1, 0, 0, 0, 0, 0, 0, 1, 1]);
    }

    #[test]
    fn round_trip() {
        let bits: Vec<u8> = (0..77).map(|i| ((i * 7) % 3 == 0) as u8).collect();
        assert_eq!(unpack_bits(&pack_bits(&bits), bits.len()), bits);
    }
}
