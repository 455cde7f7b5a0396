//! Helpers shared by the integration tests.
//!
//! Each test binary compiles this module and uses its own subset.
#![allow(dead_code)]

use std::collections::HashSet;

use mimicache::reuse::ReuseDistance;
use mimicache::trace::LineAddress;

/// Reference implementation of reuse distance: for each access, scan
/// backwards to the previous access of the same line and count the distinct
/// lines in between. Quadratic, but independent of the production code path.
pub fn naive_reuse_distances(lines: &[LineAddress]) -> Vec<ReuseDistance> {
    let mut out = Vec::with_capacity(lines.len());
    for (t, &line) in lines.iter().enumerate() {
        let mut found = None;
        for p in (0..t).rev() {
            if lines[p] == line {
                found = Some(p);
                break;
            }
        }
        match found {
            Some(p) => {
                let seen: HashSet<LineAddress> = lines[p + 1..t].iter().copied().collect();
                out.push(ReuseDistance::Finite(seen.len() as u64));
            }
            None => out.push(ReuseDistance::Infinite),
        }
    }
    out
}

/// Maps `a` to line 0, `b` to line 1, and so on.
pub fn letters(s: &str) -> Vec<LineAddress> {
    s.chars()
        .map(|c| LineAddress(c as u64 - 'a' as u64))
        .collect()
}
