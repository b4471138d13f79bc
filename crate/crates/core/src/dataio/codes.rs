//! `SDCB` packed code files.
//!
//! Layout: `"SDCB"`, version `u32 = 1`, `n: u32`, `k_bits: u32`, then
//! `n·⌈K/64⌉` little-endian `u64` words. Padding bits must be zero.

use std::path::Path;

use super::bytes::{dim_u32, put_u32, read_file, write_file, ByteReader};
use super::FORMAT_VERSION;
use crate::error::{Error, Result};
use crate::hash_model::{words_per_code, PackedCodes};

pub const CODE_MAGIC: &[u8; 4] = b"SDCB";

pub fn encode_codes(codes: &PackedCodes) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + codes.words().len() * 8);
    out.extend_from_slice(CODE_MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_u32(&mut out, dim_u32(codes.len(), "n")?);
    put_u32(&mut out, dim_u32(codes.k_bits(), "k_bits")?);
    for w in codes.words() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_codes(buf: &[u8]) -> Result<PackedCodes> {
    let mut r = ByteReader::new(buf);
    r.magic(CODE_MAGIC)?;
    r.version(FORMAT_VERSION)?;
    let n = r.u32("n")? as usize;
    let k_at = r.offset();
    let k = r.u32("k_bits")? as usize;
    if k == 0 {
        return Err(Error::Format {
            offset: k_at,
            msg: "k_bits must be positive".into(),
        });
    }
    let count = n
        .checked_mul(words_per_code(k))
        .ok_or_else(|| r.fail("code payload size overflows"))?;
    let payload_at = r.offset();
    let words = r.u64s(count, "code payload")?;
    r.finish()?;
    PackedCodes::from_words(n, k, words).map_err(|e| Error::Format {
        offset: payload_at,
        msg: e.to_string(),
    })
}

pub fn write_codes(path: impl AsRef<Path>, codes: &PackedCodes) -> Result<()> {
    write_file(path.as_ref(), &encode_codes(codes)?)
}

pub fn read_codes(path: impl AsRef<Path>) -> Result<PackedCodes> {
    decode_codes(&read_file(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn roundtrip(n in 0usize..20, k in 1usize..150, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut codes = PackedCodes::zeros(n, k);
            for i in 0..n {
                for j in 0..k {
                    codes.set_bit(i, j, rng.random());
                }
            }
            let bytes = encode_codes(&codes).unwrap();
            prop_assert_eq!(bytes.len(), 16 + n * words_per_code(k) * 8);
            prop_assert_eq!(decode_codes(&bytes).unwrap(), codes);
        }

        #[test]
        fn fuzzed_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..80)) {
            let _ = decode_codes(&bytes);
        }
    }

    #[test]
    fn rejects_dirty_padding() {
        let codes = PackedCodes::zeros(1, 3);
        let mut bytes = encode_codes(&codes).unwrap();
        bytes[16] = 0b1000;
        assert!(matches!(decode_codes(&bytes), Err(Error::Format { offset: 16, .. })));
    }
}
