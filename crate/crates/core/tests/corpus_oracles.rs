//! Each corpus program against an independent model of what it computes.

mod common;

use common::{displays, run};
use fpgavirt_core::corpus::{self, MIPS32_LEN, MIPS32_SEED};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn file_words(c: &fpgavirt_core::bisim::Case) -> Vec<u32> {
    c.files[0]
        .1
        .chunks(4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .collect()
}

#[test]
fn fig1_shows_the_nonblocking_value_one_tick_late() {
    let o = run(&corpus::fig1_case());
    let d = displays(&o);
    assert_eq!(d[0], "r = 0 q = 5");
    assert_eq!(d[1], "r = 1 q = 0");
    assert_eq!(d[2], "r = 4 q = 3");
    assert!(d[3..].iter().all(|l| l == "r = 4 q = 3" || l.starts_with("y = ")));
    // The sub-module accumulates q as it stood before each tick: 5, 0, 3, 3, ...
    // and the display shows the accumulator before this tick's update.
    let mut acc = 0u32;
    let mut expect = vec![];
    for q in [5u32, 0].into_iter().chain(std::iter::repeat(3)).take(12) {
        if acc > 20 {
            expect.push(format!("y = {acc}"));
        }
        acc += q;
    }
    let ys: Vec<String> = d.iter().filter(|l| l.starts_with("y = ")).cloned().collect();
    assert_eq!(ys, expect);
}

#[test]
fn fig2_sums_a_hundred_random_files() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let n = rng.gen_range(0..120);
        let words = corpus::sum_words(&mut rng, n);
        let o = run(&corpus::fig2_case(&words));
        let sum = words.iter().fold(0u32, |a, w| a.wrapping_add(*w));
        assert_eq!(displays(&o), vec![format!("res = {sum}")]);
        assert_eq!(o.ticks, n as u64 + 1);
        assert!(o.finished);
    }
}

#[test]
fn regex_counts_match_ends() {
    for seed in 0..3 {
        let c = corpus::case("regex", seed).unwrap();
        let s: Vec<u8> = file_words(&c).iter().map(|w| *w as u8).collect();
        let mut expect = 0;
        for j in 0..s.len() {
            if s[j] != b'd' {
                continue;
            }
            let mut i = j;
            while i > 0 && matches!(s[i - 1], b'b' | b'c') {
                i -= 1;
            }
            if i > 0 && s[i - 1] == b'a' {
                expect += 1;
            }
        }
        let o = run(&c);
        assert_eq!(displays(&o), vec![format!("matches {expect} chars {}", s.len())]);
    }
}

fn nw_score(a: u16, b: u16) -> i64 {
    let base = |x: u16, i: usize| (x >> (2 * i)) & 3;
    let mut h = [[0i64; 9]; 9];
    for i in 0..9 {
        h[i][0] = -(i as i64);
        h[0][i] = -(i as i64);
    }
    for i in 1..9 {
        for j in 1..9 {
            let s = if base(a, i - 1) == base(b, j - 1) { 1 } else { -1 };
            h[i][j] = (h[i - 1][j - 1] + s).max(h[i - 1][j] - 1).max(h[i][j - 1] - 1);
        }
    }
    h[8][8]
}

#[test]
fn nw_scores_every_pair() {
    let c = corpus::case("nw", 5).unwrap();
    let words = file_words(&c);
    let mut expect = vec![];
    let mut total = 0i64;
    for (k, w) in words.iter().enumerate() {
        let s = nw_score(*w as u16, (*w >> 16) as u16) + 64;
        total += s;
        expect.push(format!("pair {k} score {s}"));
    }
    expect.push(format!("pairs {} total {total}", words.len()));
    assert_eq!(displays(&run(&c)), expect);
}

const IMA_STEPS: [i32; 89] = [
    7, 8, 9, 10, 11, 12, 13, 14, 16, 17, 19, 21, 23, 25, 28, 31, 34, 37, 41, 45, 50, 55, 60, 66,
    73, 80, 88, 97, 107, 118, 130, 143, 157, 173, 190, 209, 230, 253, 279, 307, 337, 371, 408,
    449, 494, 544, 598, 658, 724, 796, 876, 963, 1060, 1166, 1282, 1411, 1552, 1707, 1878, 2066,
    2272, 2499, 2749, 3024, 3327, 3660, 4026, 4428, 4871, 5358, 5894, 6484, 7132, 7845, 8630,
    9493, 10442, 11487, 12635, 13899, 15289, 16818, 18500, 20350, 22385, 24623, 27086, 29794,
    32767,
];
const IMA_INDEX: [i32; 8] = [-1, -1, -1, -1, 2, 4, 6, 8];

#[test]
fn adpcm_matches_a_signed_codec() {
    let c = corpus::case("adpcm", 9).unwrap();
    let samples: Vec<i32> = file_words(&c).iter().map(|w| *w as i32 - 32768).collect();
    let (mut pred, mut index) = (0i32, 0i32);
    let mut codes = 0u32;
    let mut err = 0u32;
    let mut expect = vec![];
    for (n, &s) in samples.iter().enumerate() {
        let step = IMA_STEPS[index as usize];
        let mut diff = s - pred;
        let mut code = 0;
        if diff < 0 {
            code = 8;
            diff = -diff;
        }
        let mut vp = step >> 3;
        if diff >= step {
            code |= 4;
            diff -= step;
            vp += step;
        }
        if diff >= step >> 1 {
            code |= 2;
            diff -= step >> 1;
            vp += step >> 1;
        }
        if diff >= step >> 2 {
            code |= 1;
            vp += step >> 2;
        }
        pred = if code & 8 != 0 { pred - vp } else { pred + vp }.clamp(-32768, 32767);
        index = (index + IMA_INDEX[(code & 7) as usize]).clamp(0, 88);
        err = err.wrapping_add((pred - s).unsigned_abs());
        codes = (codes << 4) | code as u32;
        if n % 8 == 7 {
            expect.push(format!("codes {codes:x}"));
        }
    }
    expect.push(format!("samples {} err {err} drift 0", samples.len()));
    assert_eq!(displays(&run(&c)), expect);
}

#[test]
fn df_agrees_with_host_floating_point() {
    for seed in [3, 4] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ops = corpus::df_operands(&mut rng, 48);
        let mut c = corpus::case("df", 0).unwrap();
        c.files[0].1 = corpus::words_to_bytes(&corpus::df_words(&ops));
        let mut acc = 0f64;
        let mut expect = vec![];
        for (i, (a, b)) in ops.iter().enumerate() {
            acc += a * b;
            if i % 16 == 15 {
                expect.push(format!("partial {}", i + 1));
            }
        }
        expect.push(format!("products {} acc {:x}", ops.len(), acc.to_bits()));
        assert_eq!(displays(&run(&c)), expect);
    }
}

fn xorshift_values() -> Vec<u32> {
    let mut x = MIPS32_SEED;
    (0..MIPS32_LEN)
        .map(|_| {
            x ^= x << 13;
            x ^= x >> 17;
            x ^= x << 5;
            x & 0xffff
        })
        .collect()
}

#[test]
fn mips32_prints_then_sorts_its_array() {
    let o = run(&corpus::case("mips32", 0).unwrap());
    let vals = xorshift_values();
    let mut sorted = vals.clone();
    sorted.sort();
    let mut expect: Vec<String> = vals.iter().map(|v| format!("rand {v}")).collect();
    expect.extend(sorted.iter().map(|v| format!("sorted {v}")));
    let d = displays(&o);
    assert_eq!(d[..d.len() - 1], expect[..]);
    assert!(d.last().unwrap().starts_with("halt after "));
    assert!(o.finished);
}

const K: [u32; 64] = [
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4, 0xab1c5ed5,
    0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174,
    0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
    0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967,
    0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85,
    0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
    0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
    0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2,
];
const IV: [u32; 8] = [
    0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a, 0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19,
];

fn first_hash_word(block: &[u32; 16]) -> u32 {
    let mut w = [0u32; 64];
    w[..16].copy_from_slice(block);
    for t in 16..64 {
        let s0 = w[t - 15].rotate_right(7) ^ w[t - 15].rotate_right(18) ^ (w[t - 15] >> 3);
        let s1 = w[t - 2].rotate_right(17) ^ w[t - 2].rotate_right(19) ^ (w[t - 2] >> 10);
        w[t] = w[t - 16].wrapping_add(s0).wrapping_add(w[t - 7]).wrapping_add(s1);
    }
    let mut s = IV;
    for t in 0..64 {
        let [a, b, c, d, e, f, g, h] = s;
        let t1 = h
            .wrapping_add(e.rotate_right(6) ^ e.rotate_right(11) ^ e.rotate_right(25))
            .wrapping_add((e & f) ^ (!e & g))
            .wrapping_add(K[t])
            .wrapping_add(w[t]);
        let t2 = (a.rotate_right(2) ^ a.rotate_right(13) ^ a.rotate_right(22))
            .wrapping_add((a & b) ^ (a & c) ^ (b & c));
        s = [t1.wrapping_add(t2), a, b, c, d.wrapping_add(t1), e, f, g];
    }
    s[0].wrapping_add(IV[0])
}

#[test]
fn bitcoin_finds_the_first_nonce_under_target() {
    let header: Vec<u32> = (0..15u32).map(|i| 0x0100_0000u32.wrapping_add(i.wrapping_mul(0x9e37_79b9))).collect();
    let start = 0x104a;
    let target = 0x0400_0000;
    let mut block = [0u32; 16];
    block[..15].copy_from_slice(&header);
    let (nonce, hash) = (start..)
        .map(|n| {
            block[15] = n;
            (n, first_hash_word(&block))
        })
        .find(|(_, h)| *h < target)
        .unwrap();
    let o = run(&corpus::case("bitcoin", 0).unwrap());
    assert_eq!(displays(&o), vec![format!("nonce {nonce:x} hash {hash:x}")]);
    // one load tick, 64 round ticks and one check tick per attempt
    assert_eq!(o.ticks, (nonce - start + 1) as u64 * 66);
}
