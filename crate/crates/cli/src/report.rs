//! Score tables: parsing, rendering, and per-metric maxima.

use voxrnn::{Error, Result};

pub const METRICS: [&str; 4] = [
    "production_quality",
    "production_complexity",
    "content_enjoyment",
    "content_usefulness",
];

/// The score file shipped with the tool.
pub const BUNDLED_SCORES: &str = include_str!("../data/scores.txt");

const FLAG: char = '*';

#[derive(Clone, Debug, PartialEq)]
pub struct SystemScores {
    pub name: String,
    /// In [`METRICS`] order.
    pub scores: [f64; 4],
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTable {
    pub systems: Vec<SystemScores>,
}

impl ScoreTable {
    /// Parses one system per line: a name (may contain spaces) followed by
    /// four reals in `[0, 10]`. Text after `#` is ignored, as is a trailing
    /// max flag on a score, so rendered tables parse back.
    pub fn parse(text: &str) -> Result<Self> {
        let mut systems: Vec<SystemScores> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() < 5 {
                return Err(Error::Data(format!(
                    "line {}: expected a system name and {} scores, got {} fields",
                    n + 1,
                    METRICS.len(),
                    fields.len()
                )));
            }
            let (name, values) = fields.split_at(fields.len() - 4);
            let name = name.join(" ");
            let mut scores = [0f64; 4];
            for ((slot, value), metric) in scores.iter_mut().zip(values).zip(METRICS) {
                let value = value.trim_end_matches(FLAG);
                *slot = value.parse().map_err(|_| {
                    Error::Data(format!(
                        "line {} ({name}): {metric}: {value:?} is not a number",
                        n + 1
                    ))
                })?;
                if !(0.0..=10.0).contains(slot) {
                    return Err(Error::Data(format!(
                        "line {} ({name}): {metric}: {value} is outside [0, 10]",
                        n + 1
                    )));
                }
            }
            if systems.iter().any(|s| s.name == name) {
                return Err(Error::Data(format!("line {}: system {name:?} listed twice", n + 1)));
            }
            systems.push(SystemScores { name, scores });
        }
        if systems.is_empty() {
            return Err(Error::Data("score file lists no systems".into()));
        }
        Ok(Self { systems })
    }

    /// Highest score per metric.
    pub fn maxima(&self) -> [f64; 4] {
        let mut out = [f64::NEG_INFINITY; 4];
        for s in &self.systems {
            for (m, &v) in out.iter_mut().zip(&s.scores) {
                *m = m.max(v);
            }
        }
        out
    }

    /// `flags()[i][j]`: system `i` attains the maximum of metric `j`.
    pub fn flags(&self) -> Vec<[bool; 4]> {
        let max = self.maxima();
        self.systems
            .iter()
            .map(|s| std::array::from_fn(|j| s.scores[j] == max[j]))
            .collect()
    }

    /// Fixed-width table; maxima carry a trailing `*`. Scores print with two
    /// decimals unless that would lose information.
    pub fn render(&self) -> String {
        let name_w = self.systems.iter().map(|s| s.name.chars().count()).max().unwrap_or(0);
        let name_w = name_w.max("# system".len());
        let mut out = format!("{:<name_w$}", "# system");
        for m in METRICS {
            out += &format!("  {m:>w$}", w = m.len());
        }
        out.push('\n');
        for (s, flags) in self.systems.iter().zip(self.flags()) {
            out += &format!("{:<name_w$}", s.name);
            for ((m, &v), flag) in METRICS.iter().zip(&s.scores).zip(flags) {
                let cell = format!("{}{}", format_score(v), if flag { "*" } else { "" });
                out += &format!("  {cell:>w$}", w = m.len());
            }
            out.push('\n');
        }
        out
    }
}

fn format_score(v: f64) -> String {
    let short = format!("{v:.2}");
    if short.parse::<f64>() == Ok(v) {
        short
    } else {
        format!("{v}")
    }
}
