//! Line-oriented run configuration.
//!
//! ```text
//! # comment
//! [grid]
//! N = 8192
//! sigma = default          # or a width in torus units
//!
//! [dynamics]
//! K = 10.09, 50.09, 200.09
//!
//! [ensemble]
//! members = 200
//! n_max = 12
//! seed = 1
//!
//! [displacements]
//! m = 10                   # integer multiples of 2π/N
//! np_over_2pi = 0.5, 1.0   # real N·P/2π
//!
//! [analysis]
//! fit_start = 0            # optional; both or neither
//! fit_end = 4
//! tail_start = 20
//! tail_end = 50
//! theory_rate = fitted     # fitted | lyapunov | <number>
//! alpha = 1
//!
//! [output]
//! tag = fig2
//! ```
//!
//! Unknown sections or keys, duplicate keys and malformed values are errors
//! carrying the offending line number.

use std::f64::consts::TAU;
use std::fmt;

use crate::analysis::FitWindow;
use crate::echo::{EnsembleConfig, SigmaPolicy};
use crate::state::{CoherentParams, TorusGrid};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// 1-based line, `None` for problems not tied to a line (missing keys).
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            message: message.into(),
        }
    }

    fn global(message: impl Into<String>) -> Self {
        Self {
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Decay rate used for the theory overlay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateChoice {
    /// Rate fitted to the simulated series (falls back to `ln(K/2)` when no
    /// data are available).
    Fitted,
    /// `ln(K/2)`.
    Lyapunov,
    Fixed(f64),
}

/// Parsed and validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dim: usize,
    pub sigma: SigmaPolicy,
    pub kicks: Vec<f64>,
    /// Rescaled displacements `N·P/2π`, in file order.
    pub np_over_2pi: Vec<f64>,
    pub members: usize,
    pub n_max: usize,
    pub seed: u64,
    pub fit_window: Option<FitWindow>,
    pub tail_window: Option<FitWindow>,
    pub theory_rate: RateChoice,
    pub alpha: f64,
    pub tag: String,
    /// Verbatim config text, copied into the run directory.
    pub source: String,
}

impl RunConfig {
    pub fn grid(&self) -> TorusGrid {
        TorusGrid::new(self.dim).expect("validated at parse time")
    }

    /// Displacements in radians per site.
    pub fn displacements(&self) -> Vec<f64> {
        self.np_over_2pi
            .iter()
            .map(|v| v * TAU / self.dim as f64)
            .collect()
    }

    pub fn ensemble(&self, k: f64) -> EnsembleConfig {
        EnsembleConfig {
            dim: self.dim,
            k,
            displacements: self.displacements(),
            n_max: self.n_max,
            ensemble_size: self.members,
            sigma: self.sigma,
            seed: self.seed,
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Parser::default().parse(text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Grid,
    Dynamics,
    Ensemble,
    Displacements,
    Analysis,
    Output,
}

impl Section {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "grid" => Self::Grid,
            "dynamics" => Self::Dynamics,
            "ensemble" => Self::Ensemble,
            "displacements" => Self::Displacements,
            "analysis" => Self::Analysis,
            "output" => Self::Output,
            _ => return None,
        })
    }

    fn keys(self) -> &'static [&'static str] {
        match self {
            Self::Grid => &["N", "sigma"],
            Self::Dynamics => &["K"],
            Self::Ensemble => &["members", "n_max", "seed"],
            Self::Displacements => &["m", "np_over_2pi"],
            Self::Analysis => &[
                "fit_start",
                "fit_end",
                "tail_start",
                "tail_end",
                "theory_rate",
                "alpha",
            ],
            Self::Output => &["tag"],
        }
    }
}

#[derive(Default)]
struct Parser {
    entries: Vec<(Section, &'static str, String, usize)>,
}

impl Parser {
    fn parse(mut self, text: &str) -> Result<RunConfig, ConfigError> {
        let mut section: Option<Section> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::at(line_no, "unterminated section header"))?
                    .trim();
                section = Some(Section::from_name(name).ok_or_else(|| {
                    ConfigError::at(line_no, format!("unknown section [{name}]"))
                })?);
                continue;
            }
            let sec =
                section.ok_or_else(|| ConfigError::at(line_no, "key outside of any section"))?;
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::at(line_no, "expected `key = value`"))?;
            let key = key.trim();
            let value = value.trim();
            let known = sec.keys().iter().find(|k| **k == key).ok_or_else(|| {
                ConfigError::at(line_no, format!("unknown key `{key}` in section {sec:?}"))
            })?;
            if value.is_empty() {
                return Err(ConfigError::at(line_no, format!("empty value for `{key}`")));
            }
            if let Some((_, _, _, first)) = self
                .entries
                .iter()
                .find(|(s, k, _, _)| *s == sec && k == known)
            {
                return Err(ConfigError::at(
                    line_no,
                    format!("duplicate key `{key}` (first set on line {first})"),
                ));
            }
            self.entries.push((sec, known, value.to_string(), line_no));
        }
        self.build(text)
    }

    fn get(&self, sec: Section, key: &str) -> Option<(&str, usize)> {
        self.entries
            .iter()
            .find(|(s, k, _, _)| *s == sec && *k == key)
            .map(|(_, _, v, l)| (v.as_str(), *l))
    }

    fn require(&self, sec: Section, key: &str) -> Result<(&str, usize), ConfigError> {
        self.get(sec, key).ok_or_else(|| {
            ConfigError::global(format!("missing required key `{key}` in section {sec:?}"))
        })
    }

    fn build(&self, text: &str) -> Result<RunConfig, ConfigError> {
        let (v, l) = self.require(Section::Grid, "N")?;
        let dim: usize = parse_num(v, l)?;
        let grid = TorusGrid::new(dim).map_err(|e| ConfigError::at(l, e.to_string()))?;

        let sigma = match self.get(Section::Grid, "sigma") {
            None => SigmaPolicy::Default,
            Some(("default", _)) => SigmaPolicy::Default,
            Some((v, l)) => {
                let s: f64 = parse_num(v, l)?;
                CoherentParams::new(0.0, 0.0, s).map_err(|e| ConfigError::at(l, e.to_string()))?;
                SigmaPolicy::Explicit(s)
            }
        };
        // default width must also be admissible (tiny N gives a wide packet)
        CoherentParams::new(0.0, 0.0, sigma.resolve(grid))
            .map_err(|e| ConfigError::global(format!("wavepacket width for N={dim}: {e}")))?;

        let (v, l) = self.require(Section::Dynamics, "K")?;
        let kicks: Vec<f64> = parse_list(v, l)?;
        if let Some(k) = kicks.iter().find(|k| !(k.is_finite() && **k > 0.0)) {
            return Err(ConfigError::at(l, format!("K must be positive, got {k}")));
        }

        let (v, l) = self.require(Section::Ensemble, "members")?;
        let members: usize = parse_num(v, l)?;
        if members == 0 {
            return Err(ConfigError::at(l, "members must be >= 1"));
        }
        let (v, l) = self.require(Section::Ensemble, "n_max")?;
        let n_max: usize = parse_num(v, l)?;
        if n_max == 0 {
            return Err(ConfigError::at(l, "n_max must be >= 1"));
        }
        let seed = match self.get(Section::Ensemble, "seed") {
            Some((v, l)) => parse_num(v, l)?,
            None => 0,
        };

        let mut np_over_2pi = Vec::new();
        if let Some((v, l)) = self.get(Section::Displacements, "m") {
            for m in parse_list::<i64>(v, l)? {
                np_over_2pi.push(m as f64);
            }
        }
        if let Some((v, l)) = self.get(Section::Displacements, "np_over_2pi") {
            let vals: Vec<f64> = parse_list(v, l)?;
            if let Some(x) = vals.iter().find(|x| !x.is_finite()) {
                return Err(ConfigError::at(
                    l,
                    format!("np_over_2pi must be finite, got {x}"),
                ));
            }
            np_over_2pi.extend(vals);
        }
        if np_over_2pi.is_empty() {
            return Err(ConfigError::global(
                "section [displacements] needs `m` or `np_over_2pi`",
            ));
        }

        let fit_window = self.window(Section::Analysis, "fit_start", "fit_end", n_max)?;
        let tail_window = self.window(Section::Analysis, "tail_start", "tail_end", n_max)?;

        let theory_rate = match self.get(Section::Analysis, "theory_rate") {
            None | Some(("fitted", _)) => RateChoice::Fitted,
            Some(("lyapunov", _)) => RateChoice::Lyapunov,
            Some((v, l)) => RateChoice::Fixed(parse_num(v, l)?),
        };
        let alpha = match self.get(Section::Analysis, "alpha") {
            Some((v, l)) => parse_num(v, l)?,
            None => 1.0,
        };
        let tag = match self.get(Section::Output, "tag") {
            Some((v, l)) => {
                if !v
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
                {
                    return Err(ConfigError::at(l, "tag may only contain [A-Za-z0-9_-]"));
                }
                v.to_string()
            }
            None => "run".to_string(),
        };

        Ok(RunConfig {
            dim,
            sigma,
            kicks,
            np_over_2pi,
            members,
            n_max,
            seed,
            fit_window,
            tail_window,
            theory_rate,
            alpha,
            tag,
            source: text.to_string(),
        })
    }

    fn window(
        &self,
        sec: Section,
        start_key: &str,
        end_key: &str,
        n_max: usize,
    ) -> Result<Option<FitWindow>, ConfigError> {
        match (self.get(sec, start_key), self.get(sec, end_key)) {
            (None, None) => Ok(None),
            (Some((s, ls)), Some((e, le))) => {
                let start: usize = parse_num(s, ls)?;
                let end: usize = parse_num(e, le)?;
                if start >= end || end > n_max {
                    return Err(ConfigError::at(
                        le,
                        format!(
                            "window [{start}, {end}] must satisfy start < end <= n_max = {n_max}"
                        ),
                    ));
                }
                Ok(Some(FitWindow::new(start, end)))
            }
            (Some((_, l)), None) | (None, Some((_, l))) => Err(ConfigError::at(
                l,
                format!("`{start_key}` and `{end_key}` must be given together"),
            )),
        }
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find(['#', ';']) {
        Some(i) => &line[..i],
        None => line,
    }
}

fn parse_num<T: std::str::FromStr>(v: &str, line: usize) -> Result<T, ConfigError> {
    v.trim()
        .parse()
        .map_err(|_| ConfigError::at(line, format!("cannot parse `{}`", v.trim())))
}

fn parse_list<T: std::str::FromStr>(v: &str, line: usize) -> Result<Vec<T>, ConfigError> {
    v.split(',').map(|item| parse_num(item, line)).collect()
}
