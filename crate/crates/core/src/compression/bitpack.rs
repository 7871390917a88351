//! Fixed-width index packing, least significant bit first within each byte.

/// Bits needed to address `count` centroids: `⌈log₂ count⌉`, 0 for a single centroid.
pub fn bits_per_index(count: usize) -> u32 {
    if count <= 1 {
        0
    } else {
        usize::BITS - (count - 1).leading_zeros()
    }
}

pub fn packed_len(count: usize, bits: u32) -> usize {
    (count * bits as usize).div_ceil(8)
}

pub fn pack(indices: &[u32], bits: u32) -> Vec<u8> {
    debug_assert!(bits <= 32);
    let mut out = vec![0u8; packed_len(indices.len(), bits)];
    if bits == 0 {
        return out;
    }
    let mut pos = 0usize;
    for &idx in indices {
        let mut v = u64::from(idx);
        let mut remaining = bits as usize;
        while remaining > 0 {
            let byte = pos / 8;
            let off = pos % 8;
            let take = remaining.min(8 - off);
            let mask = (1u64 << take) - 1;
            out[byte] |= ((v & mask) as u8) << off;
            v >>= take;
            pos += take;
            remaining -= take;
        }
    }
    out
}

/// Inverse of [`pack`]. Returns `None` if `bytes` has the wrong length or a
/// padding bit is set.
pub fn unpack(bytes: &[u8], count: usize, bits: u32) -> Option<Vec<u32>> {
    if bytes.len() != packed_len(count, bits) {
        return None;
    }
    if bits == 0 {
        return Some(vec![0; count]);
    }
    let mut out = Vec::with_capacity(count);
    let mut pos = 0usize;
    for _ in 0..count {
        let mut v = 0u64;
        let mut got = 0usize;
        while got < bits as usize {
            let byte = pos / 8;
            let off = pos % 8;
            let take = (bits as usize - got).min(8 - off);
            let mask = (1u64 << take) - 1;
            v |= ((u64::from(bytes[byte]) >> off) & mask) << got;
            got += take;
            pos += take;
        }
        out.push(v as u32);
    }
    let used = pos % 8;
    if used != 0 && bytes[bytes.len() - 1] >> used != 0 {
        return None;
    }
    Some(out)
}
