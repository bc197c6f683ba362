//! Order-invariant ECMP hashing. The forward tuple `(src, dst, sport, dport)`
//! and its mirror `(dst, src, dport, sport)` produce the same key, so both ends
//! of a link pick the same member of a parallel-link group.

use super::NodeId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FlowTuple {
    pub src: NodeId,
    pub dst: NodeId,
    pub sport: u16,
    pub dport: u16,
}

impl FlowTuple {
    pub fn mirrored(&self) -> FlowTuple {
        FlowTuple {
            src: self.dst,
            dst: self.src,
            sport: self.dport,
            dport: self.sport,
        }
    }

    /// Sorted endpoint pair; identical for a tuple and its mirror.
    pub fn canonical_key(&self) -> (u64, u64) {
        let a = ((self.src as u64) << 16) | self.sport as u64;
        let b = ((self.dst as u64) << 16) | self.dport as u64;
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

pub fn symmetric_hash(tuple: &FlowTuple, salt: u64) -> u64 {
    let (lo, hi) = tuple.canonical_key();
    splitmix64(splitmix64(splitmix64(lo) ^ hi) ^ salt)
}

/// Picks one of `n_candidates` equal-cost choices. Callers must list candidates in
/// an order both ends agree on (link id order) and pass a salt that is the same
/// from both ends (e.g. the sorted switch pair).
pub fn symmetric_ecmp_select(tuple: &FlowTuple, n_candidates: usize, salt: u64) -> Result<usize> {
    if n_candidates == 0 {
        return Err(Error::Routing("no ECMP candidates".into()));
    }
    if n_candidates == 1 {
        return Ok(0);
    }
    Ok((symmetric_hash(tuple, salt) % n_candidates as u64) as usize)
}

/// Salt shared by both switches on a link group.
pub fn pair_salt(a: NodeId, b: NodeId) -> u64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    ((lo as u64) << 32) | hi as u64 | (1 << 63)
}
