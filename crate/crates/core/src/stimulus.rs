//! Line-oriented stimulus scripts.
//!
//! ```text
//! # comment
//! ticks 100        # or `ticks auto`: run until $finish
//! tick 3           # following actions happen at the start of tick 3
//! set rst 1
//! save ckpt.bin
//! restart ckpt.bin
//! migrate 127.0.0.1:7000
//! ```

use crate::program::Program;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Set(String, u64),
    Save(String),
    Restart(String),
    Migrate(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stimulus {
    /// `None` runs until `$finish` (bounded by the caller).
    pub ticks: Option<u64>,
    /// Sorted by tick; actions of one tick keep script order.
    pub actions: Vec<(u64, Action)>,
}

impl Stimulus {
    pub fn with_ticks(ticks: u64) -> Self {
        Stimulus {
            ticks: Some(ticks),
            actions: vec![],
        }
    }

    pub fn at(mut self, tick: u64, a: Action) -> Self {
        self.push(tick, a);
        self
    }

    pub fn push(&mut self, tick: u64, a: Action) {
        let pos = self.actions.partition_point(|(t, _)| *t <= tick);
        self.actions.insert(pos, (tick, a));
    }

    pub fn parse(text: &str) -> Result<Stimulus, String> {
        let mut s = Stimulus::default();
        let mut cursor = 0u64;
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: &str| format!("stimulus line {}: {m}: '{line}'", ln + 1);
            let words: Vec<&str> = line.split_whitespace().collect();
            let num = |w: &str| parse_number(w).ok_or_else(|| err("bad number"));
            match words.as_slice() {
                ["ticks", "auto"] => s.ticks = None,
                ["ticks", n] => s.ticks = Some(num(n)?),
                ["tick", n] => cursor = num(n)?,
                ["set", name, v] => s.push(cursor, Action::Set(name.to_string(), num(v)?)),
                ["save", p] => s.push(cursor, Action::Save(p.to_string())),
                ["restart", p] => s.push(cursor, Action::Restart(p.to_string())),
                ["migrate", e] => s.push(cursor, Action::Migrate(e.to_string())),
                _ => return Err(err("unrecognized command")),
            }
        }
        Ok(s)
    }

    pub fn actions_at(&self, tick: u64) -> impl Iterator<Item = &Action> {
        let lo = self.actions.partition_point(|(t, _)| *t < tick);
        self.actions[lo..]
            .iter()
            .take_while(move |(t, _)| *t == tick)
            .map(|(_, a)| a)
    }

    /// Input values in force after the sets of ticks `0..=tick`.
    pub fn inputs_as_of(&self, tick: u64) -> Vec<(String, u64)> {
        let mut out: Vec<(String, u64)> = Vec::new();
        for (t, a) in &self.actions {
            if *t > tick {
                break;
            }
            if let Action::Set(n, v) = a {
                match out.iter_mut().find(|(m, _)| m == n) {
                    Some(e) => e.1 = *v,
                    None => out.push((n.clone(), *v)),
                }
            }
        }
        out
    }
}

/// Decimal, `0x` hex or `0b` binary.
pub fn parse_number(w: &str) -> Option<u64> {
    let w = w.replace('_', "");
    if let Some(h) = w.strip_prefix("0x") {
        u64::from_str_radix(h, 16).ok()
    } else if let Some(b) = w.strip_prefix("0b") {
        u64::from_str_radix(b, 2).ok()
    } else {
        w.parse().ok()
    }
}

/// The program input toggled as the virtual clock: `preferred` if given,
/// otherwise an input named `clock` or `clk`.
pub fn clock_input(p: &Program, preferred: Option<&str>) -> Option<String> {
    match preferred {
        Some(n) => p.inputs.iter().find(|i| *i == n).cloned(),
        None => ["clock", "clk"]
            .into_iter()
            .find(|c| p.inputs.iter().any(|i| i == c))
            .map(str::to_string),
    }
}
