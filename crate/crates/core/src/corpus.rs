//! Benchmark corpus: the two introductory examples plus six analogs of the
//! evaluation workloads, each with a deterministic input generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bisim::Case;
use crate::stimulus::{Action, Stimulus};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Batch,
    Streaming,
}

#[derive(Debug, Clone, Copy)]
pub struct Benchmark {
    pub name: &'static str,
    pub source: &'static str,
    pub style: Style,
    /// Name the program passes to `$fopen`, if it reads a file.
    pub input: Option<&'static str>,
}

pub const FIG1: &str = include_str!("../corpus/fig1.v");
pub const FIG2: &str = include_str!("../corpus/fig2.v");
pub const ADPCM: &str = include_str!("../corpus/adpcm.v");
pub const BITCOIN: &str = include_str!("../corpus/bitcoin.v");
pub const DF: &str = include_str!("../corpus/df.v");
pub const MIPS32: &str = include_str!("../corpus/mips32.v");
pub const NW: &str = include_str!("../corpus/nw.v");
pub const REGEX: &str = include_str!("../corpus/regex.v");

/// Seed of the xorshift32 generator built into the mips32 ROM.
pub const MIPS32_SEED: u32 = 0x2545_f491;
/// Length of the array the mips32 program sorts.
pub const MIPS32_LEN: usize = 20;

pub const SUITE: [Benchmark; 6] = [
    Benchmark {
        name: "adpcm",
        source: ADPCM,
        style: Style::Streaming,
        input: Some("pcm"),
    },
    Benchmark {
        name: "bitcoin",
        source: BITCOIN,
        style: Style::Batch,
        input: None,
    },
    Benchmark {
        name: "df",
        source: DF,
        style: Style::Batch,
        input: Some("operands"),
    },
    Benchmark {
        name: "mips32",
        source: MIPS32,
        style: Style::Batch,
        input: None,
    },
    Benchmark {
        name: "nw",
        source: NW,
        style: Style::Streaming,
        input: Some("pairs"),
    },
    Benchmark {
        name: "regex",
        source: REGEX,
        style: Style::Streaming,
        input: Some("text"),
    },
];

pub fn benchmark(name: &str) -> Option<&'static Benchmark> {
    SUITE.iter().find(|b| b.name == name)
}

pub fn words_to_bytes(words: &[u32]) -> Vec<u8> {
    words.iter().flat_map(|w| w.to_le_bytes()).collect()
}

/// Random words for the file-sum program.
pub fn sum_words(rng: &mut impl Rng, n: usize) -> Vec<u32> {
    (0..n).map(|_| rng.gen()).collect()
}

/// Characters over `abcde` with runs that often form `a[bc]*d`, one per word.
pub fn regex_text(rng: &mut impl Rng, n: usize) -> Vec<u32> {
    (0..n)
        .map(|_| {
            let c = match rng.gen_range(0..10) {
                0 | 1 => b'a',
                2..=4 => b'b',
                5 | 6 => b'c',
                7 | 8 => b'd',
                _ => b'e',
            };
            c as u32
        })
        .collect()
}

/// Sequence pairs for the aligner: bases a in bits 15:0, b in bits 31:16,
/// base i in bits 2i+1:2i of its half.
pub fn nw_pairs(rng: &mut impl Rng, n: usize) -> Vec<u32> {
    (0..n).map(|_| rng.gen()).collect()
}

/// A noisy two-tone signal in offset binary.
pub fn adpcm_samples(rng: &mut impl Rng, n: usize) -> Vec<u32> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as i64;
        let tri = |period: i64, amp: i64| {
            let p = t.rem_euclid(period);
            let half = period / 2;
            let up = if p < half { p } else { period - p };
            up * 2 * amp / half - amp
        };
        let s = tri(64, 12000) + tri(22, 3000) + rng.gen_range(-400..=400);
        out.push((s.clamp(-32768, 32767) + 32768) as u32);
    }
    out
}

/// Operand pairs for the multiply-accumulate, as IEEE-754 bit patterns:
/// moderate exponents keep every product and partial sum normal.
pub fn df_operands(rng: &mut impl Rng, n: usize) -> Vec<(f64, f64)> {
    (0..n).map(|_| (df_value(rng), df_value(rng))).collect()
}

fn df_value(rng: &mut impl Rng) -> f64 {
    let m = 1.0 + rng.gen::<f64>();
    let s = if rng.gen_bool(0.5) { -1.0 } else { 1.0 };
    s * m * 2f64.powi(rng.gen_range(-20..=20))
}

pub fn df_words(ops: &[(f64, f64)]) -> Vec<u32> {
    let mut w = Vec::new();
    for (a, b) in ops {
        for x in [a, b] {
            let bits = x.to_bits();
            w.push(bits as u32);
            w.push((bits >> 32) as u32);
        }
    }
    w
}

fn with_file(mut c: Case, name: &str, words: &[u32]) -> Case {
    c.files.push((name.to_string(), words_to_bytes(words)));
    c
}

pub fn fig1_case() -> Case {
    let stim = Stimulus::with_ticks(12)
        .at(0, Action::Set("res".into(), 1))
        .at(1, Action::Set("res".into(), 0));
    Case::new("fig1", FIG1, stim)
}

pub fn fig2_case(words: &[u32]) -> Case {
    with_file(Case::new("fig2", FIG2, Stimulus::default()), "data", words)
}

/// A corpus program with inputs drawn from `seed`.
pub fn case(name: &str, seed: u64) -> Option<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = match name {
        "fig1" => fig1_case(),
        "fig2" => fig2_case(&sum_words(&mut rng, 64)),
        "adpcm" => with_file(
            Case::new(name, ADPCM, Stimulus::default()),
            "pcm",
            &adpcm_samples(&mut rng, 400),
        ),
        "bitcoin" => Case::new(name, BITCOIN, Stimulus::default()),
        "df" => with_file(
            Case::new(name, DF, Stimulus::default()),
            "operands",
            &df_words(&df_operands(&mut rng, 64)),
        ),
        "mips32" => Case::new(name, MIPS32, Stimulus::default()),
        "nw" => with_file(
            Case::new(name, NW, Stimulus::default()),
            "pairs",
            &nw_pairs(&mut rng, 40),
        ),
        "regex" => with_file(
            Case::new(name, REGEX, Stimulus::default()),
            "text",
            &regex_text(&mut rng, 2000),
        ),
        _ => return None,
    };
    Some(c)
}

/// Every corpus program: the two examples, then the suite.
pub fn all_cases(seed: u64) -> Vec<Case> {
    ["fig1", "fig2"]
        .into_iter()
        .chain(SUITE.iter().map(|b| b.name))
        .map(|n| case(n, seed).unwrap())
        .collect()
}

/// `source` with every `$yield;` removed: the same program without the
/// quiescence annotation, so all of its state is non-volatile.
pub fn without_yield(source: &str) -> String {
    source
        .lines()
        .filter(|l| l.trim() != "$yield;")
        .map(|l| format!("{l}\n"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::compile_source;

    #[test]
    fn every_program_compiles() {
        for c in all_cases(1) {
            compile_source(&c.source, None).unwrap_or_else(|d| panic!("{}: {d}", c.name));
        }
    }

    #[test]
    fn yield_strip_only_touches_bitcoin() {
        assert_ne!(without_yield(BITCOIN), BITCOIN);
        assert!(!without_yield(BITCOIN).contains("$yield"));
        assert_eq!(without_yield(MIPS32), MIPS32);
    }
}
