//! Stable 64-bit mixing used for fingerprints and kernel features. Unlike
//! `std`'s hasher the output is fixed across builds and platforms.

const SEED: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-sensitive combination of a sequence of words.
pub fn hash_words<I: IntoIterator<Item = u64>>(words: I) -> u64 {
    let mut h = SEED;
    for w in words {
        h = mix64(h ^ mix64(w.wrapping_add(SEED)));
    }
    h
}

pub fn hash_bytes(bytes: &[u8]) -> u64 {
    let mut h = hash_words([bytes.len() as u64]);
    for chunk in bytes.chunks(8) {
        let mut buf = [0u8; 8];
        buf[..chunk.len()].copy_from_slice(chunk);
        h = mix64(h ^ mix64(u64::from_le_bytes(buf).wrapping_add(SEED)));
    }
    h
}
