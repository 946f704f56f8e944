//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use walkcollide::environment::{DisorderFunction, EnvironmentField};
use walkcollide::walks::enumerate_paths;

/// `𝔷_N(A)` by summing over all `2^N` paths.
pub fn partition_by_enumeration(horizon: usize, a: &DisorderFunction, field: &EnvironmentField) -> f64 {
    enumerate_paths(horizon)
        .unwrap()
        .iter()
        .map(|(path, p)| {
            let weight: f64 = (1..=horizon)
                .map(|n| {
                    let z = i64::from(path.at(n));
                    1.0 + a.at(n, z) * field.omega_f64(n, z)
                })
                .product();
            p * weight
        })
        .sum()
}

/// `E[∏_n ∏_z ((1+θ)^{m_z} + (1−θ)^{m_z})/2]` over `k` independent walks,
/// computed by a forward recursion over the joint position of all walks.
/// Equals `E_ω[𝔷_N(θ)^k]`.
pub fn exact_joint_moment(horizon: usize, k: usize, theta: &dyn Fn(usize, i64) -> f64) -> f64 {
    let width = 2 * horizon + 1;
    let n0 = horizon as i64;
    let total = width.pow(k as u32);
    let decode = |mut s: usize| {
        let mut zs = vec![0i64; k];
        for z in zs.iter_mut().rev() {
            *z = (s % width) as i64 - n0;
            s /= width;
        }
        zs
    };
    let encode = |zs: &[i64]| zs.iter().fold(0usize, |acc, &z| acc * width + (z + n0) as usize);
    let mut w = vec![0.0f64; total];
    w[encode(&vec![0; k])] = 1.0;
    let share = 0.5f64.powi(k as i32);
    for n in 1..=horizon {
        let mut next = vec![0.0f64; total];
        for (s, &ws) in w.iter().enumerate() {
            if ws == 0.0 {
                continue;
            }
            let zs = decode(s);
            for moves in 0..(1usize << k) {
                let nz: Vec<i64> = (0..k).map(|i| zs[i] + if moves >> i & 1 == 1 { 1 } else { -1 }).collect();
                let mut sorted = nz.clone();
                sorted.sort_unstable();
                let mut factor = 1.0;
                let mut i = 0;
                while i < k {
                    let mut j = i + 1;
                    while j < k && sorted[j] == sorted[i] {
                        j += 1;
                    }
                    let t = theta(n, sorted[i]);
                    let m = (j - i) as i32;
                    factor *= ((1.0 + t).powi(m) + (1.0 - t).powi(m)) / 2.0;
                    i = j;
                }
                next[encode(&nz)] += ws * factor * share;
            }
        }
        w = next;
    }
    w.iter().sum()
}
