use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};

/// Exhaustive partition search up to this many cities, greedy above.
pub const EXHAUSTIVE_CITIES: usize = 12;

/// Splits clips into two sides by city, balancing clip counts.
///
/// Returns index lists `(sub_train, sub_test)`. Among equally balanced
/// partitions one is drawn from `rng`, as is which side trains.
pub fn city_split(cities: &[usize], rng: &mut impl Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &c in cities {
        *counts.entry(c).or_default() += 1;
    }
    if counts.len() < 2 {
        return Err(Error::Split(format!("need at least two cities, got {}", counts.len())));
    }
    let ids: Vec<usize> = counts.keys().copied().collect();
    let sizes: Vec<usize> = counts.values().copied().collect();
    let side = if ids.len() <= EXHAUSTIVE_CITIES {
        let options = best_partitions(&sizes);
        options[rng.gen_range(0..options.len())]
    } else {
        greedy_partition(&sizes)
    };
    let flip = rng.gen_bool(0.5);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (i, c) in cities.iter().enumerate() {
        let pos = ids.binary_search(c).expect("city listed");
        if ((side >> pos) & 1 == 1) != flip {
            a.push(i);
        } else {
            b.push(i);
        }
    }
    Ok((a, b))
}

/// |left − right| clip counts of a bit-mask partition.
pub fn imbalance(sizes: &[usize], mask: u64) -> usize {
    let (mut l, mut r) = (0usize, 0usize);
    for (i, &s) in sizes.iter().enumerate() {
        if (mask >> i) & 1 == 1 {
            l += s;
        } else {
            r += s;
        }
    }
    l.abs_diff(r)
}

/// Every most-balanced partition, each listed once (city 0 always on side 1).
fn best_partitions(sizes: &[usize]) -> Vec<u64> {
    let n = sizes.len();
    let full = (1u64 << n) - 1;
    let mut best = usize::MAX;
    let mut out = Vec::new();
    for mask in (1..full).filter(|m| m & 1 == 1) {
        let d = imbalance(sizes, mask);
        if d < best {
            best = d;
            out.clear();
        }
        if d == best {
            out.push(mask);
        }
    }
    out
}

/// Largest city first onto the lighter side.
fn greedy_partition(sizes: &[usize]) -> u64 {
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(sizes[i]), i));
    let (mut mask, mut l, mut r) = (0u64, 0usize, 0usize);
    for i in order {
        if l <= r {
            mask |= 1 << i;
            l += sizes[i];
        } else {
            r += sizes[i];
        }
    }
    mask
}
