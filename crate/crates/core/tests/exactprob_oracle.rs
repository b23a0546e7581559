//! Binomial machinery against exact big-integer sums and exhaustive sweeps.

use num_bigint::BigUint;
use ptlab::exactprob::{
    binom_tail, critical_ell, default_q_star, log_binom_tail, q_mb_exact, q_sb_exact,
    tail_decay_check, uspensky_holds,
};

/// `2^{−(n−1)} Σ_{j<k} C(n−1, j)` from exact integers, rounded once.
fn exact_tail(k: u64, n: u64) -> f64 {
    let top = n - 1;
    let mut c = BigUint::from(1u32);
    let mut sum = BigUint::from(0u32);
    for j in 0..k {
        sum += &c;
        c = c * BigUint::from(top - j) / BigUint::from(j + 1);
    }
    big_ratio(&sum, top)
}

/// `num / 2^shift` as f64, keeping 80 significant bits before rounding.
fn big_ratio(num: &BigUint, shift: u64) -> f64 {
    let bits = num.bits();
    if bits == 0 {
        return 0.0;
    }
    let drop = bits.saturating_sub(80);
    let head: BigUint = num >> drop;
    let head_f = head.to_string().parse::<f64>().unwrap();
    head_f * 2f64.powi(drop as i32 - shift as i32)
}

#[test]
fn tail_matches_big_integer_sums() {
    let mut worst: f64 = 0.0;
    for n in [1u64, 2, 3, 7, 16, 63, 64, 128, 255, 512, 1000] {
        for k in 0..=n {
            let want = exact_tail(k, n);
            let got = binom_tail(k, n).unwrap();
            if want > 1e-300 {
                let rel = ((got - want) / want).abs();
                worst = worst.max(rel);
                assert!(rel < 1e-13, "k={k} n={n}: {got} vs {want}");
            }
        }
    }
    eprintln!("worst relative error {worst:e}");
}

#[test]
fn tail_accuracy_near_upper_size_limit() {
    let n = 4096;
    for k in [1u64, 10, 100, 1000, 1900, 2000, 2047, 2048, 2049, 3000] {
        let want = exact_tail(k, n);
        let got = binom_tail(k, n).unwrap();
        if want > 1e-300 {
            assert!(((got - want) / want).abs() < 1e-13, "k={k}");
        }
        let lw = if want > 0.0 { want.ln() } else { f64::NEG_INFINITY };
        if lw.is_finite() {
            assert!((log_binom_tail(k, n).unwrap() - lw).abs() < 1e-12 * lw.abs().max(1.0));
        }
    }
}

#[test]
fn q_sb_monotone_in_ell_and_m() {
    for big_m in 1..=64u64 {
        for m in 1..=big_m {
            let mut prev = f64::INFINITY;
            for ell in 0..=big_m {
                let q = q_sb_exact(ell, m, big_m).unwrap();
                assert!(q <= prev + 1e-15, "ell ({ell},{m},{big_m})");
                prev = q;
                if m < big_m {
                    assert!(q <= q_sb_exact(ell, m + 1, big_m).unwrap() + 1e-15, "m ({ell},{m},{big_m})");
                }
            }
        }
    }
}

#[test]
fn product_rule_composes() {
    for (ell, m, big_m) in [(3u64, 10u64, 16u64), (20, 36, 48), (1, 5, 9)] {
        for (b1, b2) in [(2u64, 3u64), (4, 12), (7, 5)] {
            let lhs = q_mb_exact(ell, m, big_m, b1 * b2).unwrap();
            let rhs = q_mb_exact(ell, m, big_m, b1).unwrap().powi(b2 as i32);
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}

#[test]
fn critical_ell_agrees_with_scan() {
    for big_m in [8u64, 16, 33, 48, 64, 96] {
        for m in (1..=big_m).step_by(3) {
            for blocks in [1u64, 2, big_m] {
                let q_star = default_q_star(blocks);
                let scan = (0..=big_m)
                    .filter(|&l| q_mb_exact(l, m, big_m, blocks).unwrap() >= q_star)
                    .max();
                match critical_ell(m, big_m, blocks, q_star) {
                    Ok(c) => assert_eq!(Some(c.ell_star), scan, "m={m} M={big_m} B={blocks}"),
                    Err(_) => assert_eq!(scan, None),
                }
            }
        }
    }
}

#[test]
fn uspensky_with_convention_shift() {
    for n in 16..=256u64 {
        for k in 1..n.div_ceil(2) {
            if 2 * k < n {
                assert!(uspensky_holds(k, n).unwrap(), "k={k} n={n}");
            }
        }
    }
}

#[test]
fn tail_decay_sweep() {
    for n in 3..=128u64 {
        for k in 1..n.div_ceil(2) {
            if 2 * k >= n {
                continue;
            }
            for h in 1..=16 {
                assert!(tail_decay_check(k, n, h).unwrap(), "k={k} n={n} h={h}");
            }
        }
    }
}

#[test]
fn offset_ratio_approaches_lemma_limit() {
    // δ = 3/4 and B = M: offset/γ_M falls toward √(2(1−δ)).
    let limit = 0.5f64.sqrt();
    let ratios: Vec<f64> = [48u64, 96, 192, 384, 768]
        .iter()
        .map(|&big_m| {
            let m = 3 * big_m / 4;
            let c = critical_ell(m, big_m, big_m, default_q_star(big_m)).unwrap();
            let gamma = (2.0 * (big_m as f64).ln() / big_m as f64).sqrt();
            (0.5 - c.eps_star) / gamma
        })
        .collect();
    assert!(ratios.windows(2).all(|w| w[1] <= w[0]), "{ratios:?}");
    let last = *ratios.last().unwrap();
    assert!((last - limit).abs() / limit < 0.15);
    assert!((last - limit).abs() < (ratios[0] - limit).abs());
}
