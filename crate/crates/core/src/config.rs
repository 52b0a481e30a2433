//! Plain-text run configuration.
//!
//! ```text
//! # comments run to end of line
//! metric {
//!   variant = rotational            # flat_norm | conformal | rotational
//!   constant = 2
//!   fourier = [(0, 1, 1.0, 0.0)]    # (k1, k2, cos, sin) on cos/sin(2π k·x)
//!   matrix = [[1, 0], [0, 1]]       # flat_norm only
//!   drift = [0.5, 0]                # flat_norm only
//! }
//! run {
//!   Q = 7
//!   seed = 1
//!   directions = [(1, 0), (0.618034, 1)]
//! }
//! ```
//!
//! Statements end at a newline or `;`. Rotational factors depend on `x₂`
//! only, so their wave vectors must have `k1 = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{FourierSeries, MetricSpec, Vec2};

#[derive(Clone, Debug, PartialEq)]
enum Value {
    Num(f64),
    Ident(String),
    List(Vec<Value>),
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Sym(char),
    End,
}

struct Lexer {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

fn err<T>(line: usize, msg: impl Into<String>) -> Result<T> {
    Err(Error::Config { line, msg: msg.into() })
}

impl Lexer {
    fn new(src: &str) -> Result<Self> {
        let mut toks = Vec::new();
        for (i, raw) in src.lines().enumerate() {
            let line = i + 1;
            let text = raw.split('#').next().unwrap_or("");
            let chars: Vec<char> = text.chars().collect();
            let mut j = 0;
            while j < chars.len() {
                let c = chars[j];
                if c.is_whitespace() {
                    j += 1;
                } else if "{}[](),=;".contains(c) {
                    toks.push((Tok::Sym(c), line));
                    j += 1;
                } else if c.is_ascii_alphabetic() || c == '_' {
                    let s: String = chars[j..].iter().take_while(|c| c.is_ascii_alphanumeric() || **c == '_').collect();
                    j += s.len();
                    toks.push((Tok::Ident(s), line));
                } else if c.is_ascii_digit() || "+-.".contains(c) {
                    let s: String = chars[j..]
                        .iter()
                        .enumerate()
                        .take_while(|(k, c)| {
                            c.is_ascii_digit()
                                || **c == '.'
                                || "eE".contains(**c)
                                || ("+-".contains(**c) && (*k == 0 || "eE".contains(chars[j + k - 1])))
                        })
                        .map(|(_, c)| *c)
                        .collect();
                    j += s.len();
                    let v: f64 = s.parse().or_else(|_| err(line, format!("bad number `{s}`")))?;
                    toks.push((Tok::Num(v), line));
                } else {
                    return err(line, format!("unexpected character `{c}`"));
                }
            }
            toks.push((Tok::End, line));
        }
        Ok(Lexer { toks, pos: 0 })
    }

    fn peek(&self) -> Option<&(Tok, usize)> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<(Tok, usize)> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn line(&self) -> usize {
        self.toks.get(self.pos.min(self.toks.len().saturating_sub(1))).map_or(0, |t| t.1)
    }

    fn skip_ends(&mut self) {
        while matches!(self.peek(), Some((Tok::End | Tok::Sym(';'), _))) {
            self.pos += 1;
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        self.skip_newlines_in_value();
        match self.next() {
            Some((Tok::Sym(s), _)) if s == c => Ok(()),
            Some((t, line)) => err(line, format!("expected `{c}`, found {t:?}")),
            None => err(self.line(), format!("expected `{c}` at end of input")),
        }
    }

    fn skip_newlines_in_value(&mut self) {
        while matches!(self.peek(), Some((Tok::End, _))) {
            self.pos += 1;
        }
    }

    fn value(&mut self) -> Result<Value> {
        self.skip_newlines_in_value();
        match self.next() {
            Some((Tok::Num(v), _)) => Ok(Value::Num(v)),
            Some((Tok::Ident(s), _)) => Ok(Value::Ident(s)),
            Some((Tok::Sym(open @ ('[' | '(')), _)) => {
                let close = if open == '[' { ']' } else { ')' };
                let mut items = Vec::new();
                loop {
                    self.skip_newlines_in_value();
                    if let Some((Tok::Sym(c), _)) = self.peek() {
                        if *c == close {
                            self.pos += 1;
                            break;
                        }
                    }
                    items.push(self.value()?);
                    self.skip_newlines_in_value();
                    match self.next() {
                        Some((Tok::Sym(','), _)) => {}
                        Some((Tok::Sym(c), _)) if c == close => break,
                        Some((t, line)) => return err(line, format!("expected `,` or `{close}`, found {t:?}")),
                        None => return err(self.line(), "unterminated list"),
                    }
                }
                Ok(Value::List(items))
            }
            Some((t, line)) => err(line, format!("expected a value, found {t:?}")),
            None => err(self.line(), "expected a value at end of input"),
        }
    }

    /// `name { key = value ... }` blocks until end of input.
    fn blocks(&mut self) -> Result<Vec<(String, usize, Vec<(String, usize, Value)>)>> {
        let mut out = Vec::new();
        loop {
            self.skip_ends();
            let Some((tok, line)) = self.next() else { break };
            let Tok::Ident(name) = tok else {
                return err(line, format!("expected a block name, found {tok:?}"));
            };
            self.expect('{')?;
            let mut entries = Vec::new();
            loop {
                self.skip_ends();
                match self.next() {
                    Some((Tok::Sym('}'), _)) => break,
                    Some((Tok::Ident(key), kline)) => {
                        self.expect('=')?;
                        let v = self.value()?;
                        entries.push((key, kline, v));
                        match self.peek() {
                            Some((Tok::End | Tok::Sym(';') | Tok::Sym('}'), _)) => {}
                            Some((t, l)) => return err(*l, format!("expected end of statement, found {t:?}")),
                            None => {}
                        }
                    }
                    Some((t, l)) => return err(l, format!("expected a key or `}}`, found {t:?}")),
                    None => return err(line, format!("block `{name}` is not closed")),
                }
            }
            out.push((name, line, entries));
        }
        Ok(out)
    }
}

fn num(v: &Value, line: usize, what: &str) -> Result<f64> {
    match v {
        Value::Num(x) => Ok(*x),
        _ => err(line, format!("{what} must be a number")),
    }
}

fn int(v: &Value, line: usize, what: &str) -> Result<i64> {
    let x = num(v, line, what)?;
    if x.fract() != 0.0 || x.abs() > 2f64.powi(53) {
        return err(line, format!("{what} must be an integer"));
    }
    Ok(x as i64)
}

fn list<'a>(v: &'a Value, line: usize, what: &str) -> Result<&'a [Value]> {
    match v {
        Value::List(xs) => Ok(xs),
        _ => err(line, format!("{what} must be a list")),
    }
}

fn nums<const N: usize>(v: &Value, line: usize, what: &str) -> Result<[f64; N]> {
    let xs = list(v, line, what)?;
    if xs.len() != N {
        return err(line, format!("{what} needs {N} entries, got {}", xs.len()));
    }
    let mut out = [0.0; N];
    for (o, x) in out.iter_mut().zip(xs) {
        *o = num(x, line, what)?;
    }
    Ok(out)
}

/// Command parameters; every field is optional and CLI flags take priority.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunParams {
    #[serde(rename = "Q")]
    pub q: Option<f64>,
    pub seed: Option<u64>,
    pub restarts: Option<usize>,
    pub directions: Vec<Vec2>,
    pub t0: Option<f64>,
    pub t_ratio: Option<f64>,
    pub t_count: Option<usize>,
    pub n_list: Vec<i64>,
    pub samples: Option<usize>,
    pub duration: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub metric: MetricSpec,
    pub run: RunParams,
}

fn parse_metric(line: usize, entries: &[(String, usize, Value)]) -> Result<MetricSpec> {
    let mut variant = None;
    let mut constant = None;
    let mut fourier: Vec<(usize, [f64; 4])> = Vec::new();
    let mut matrix = None;
    let mut drift = None;
    for (key, l, v) in entries {
        match key.as_str() {
            "variant" => match v {
                Value::Ident(s) => variant = Some((s.clone(), *l)),
                _ => return err(*l, "variant must be a name"),
            },
            "constant" => constant = Some(num(v, *l, "constant")?),
            "fourier" => {
                for t in list(v, *l, "fourier")? {
                    fourier.push((*l, nums::<4>(t, *l, "fourier term (k1, k2, cos, sin)")?));
                }
            }
            "matrix" => {
                let rows = list(v, *l, "matrix")?;
                if rows.len() != 2 {
                    return err(*l, "matrix needs two rows");
                }
                matrix = Some([nums::<2>(&rows[0], *l, "matrix row")?, nums::<2>(&rows[1], *l, "matrix row")?]);
            }
            "drift" => drift = Some(nums::<2>(v, *l, "drift")?),
            other => return err(*l, format!("unknown metric key `{other}`")),
        }
    }
    let (variant, vline) = variant.ok_or(Error::Config { line, msg: "metric block needs a variant".into() })?;
    let wave = |(l, t): &(usize, [f64; 4])| -> Result<([i32; 2], f64, f64)> {
        let k1 = int(&Value::Num(t[0]), *l, "k1")?;
        let k2 = int(&Value::Num(t[1]), *l, "k2")?;
        if k1.abs() > 4096 || k2.abs() > 4096 {
            return err(*l, "wave numbers must stay below 4096");
        }
        Ok(([k1 as i32, k2 as i32], t[2], t[3]))
    };
    let spec = match variant.as_str() {
        "flat_norm" | "flat" => {
            if !fourier.is_empty() || constant.is_some() {
                return err(vline, "flat_norm takes matrix and drift, not a factor");
            }
            MetricSpec::flat(matrix.unwrap_or([[1.0, 0.0], [0.0, 1.0]]), drift.unwrap_or([0.0, 0.0]))
        }
        "conformal" | "rotational" => {
            if matrix.is_some() || drift.is_some() {
                return err(vline, format!("{variant} takes constant and fourier, not matrix or drift"));
            }
            let c = constant.ok_or(Error::Config { line: vline, msg: format!("{variant} needs a constant term") })?;
            let terms: Vec<([i32; 2], f64, f64)> = fourier.iter().map(wave).collect::<Result<_>>()?;
            if variant == "conformal" {
                MetricSpec::conformal(FourierSeries::two_dim(c, &terms))
            } else {
                let mut one = Vec::new();
                for ((k, a, b), (l, _)) in terms.iter().zip(&fourier) {
                    if k[0] != 0 {
                        return err(*l, "rotational factors depend on x2 only; use (0, k, cos, sin)");
                    }
                    one.push((k[1], *a, *b));
                }
                MetricSpec::rotational(FourierSeries::one_dim(c, &one))
            }
        }
        other => return err(vline, format!("unknown variant `{other}`")),
    };
    Ok(spec)
}

fn parse_run(entries: &[(String, usize, Value)]) -> Result<RunParams> {
    let mut p = RunParams::default();
    let positive = |v: &Value, l: usize, what: &str| -> Result<usize> {
        let x = int(v, l, what)?;
        if x < 1 {
            return err(l, format!("{what} must be positive"));
        }
        Ok(x as usize)
    };
    for (key, l, v) in entries {
        let l = *l;
        match key.as_str() {
            "Q" | "q" => p.q = Some(num(v, l, "Q")?),
            "seed" => {
                let s = int(v, l, "seed")?;
                if s < 0 {
                    return err(l, "seed must be nonnegative");
                }
                p.seed = Some(s as u64);
            }
            "restarts" => p.restarts = Some(positive(v, l, "restarts")?),
            "directions" => {
                for d in list(v, l, "directions")? {
                    let [a, b] = nums::<2>(d, l, "direction")?;
                    p.directions.push(Vec2::new(a, b));
                }
            }
            "t0" => p.t0 = Some(num(v, l, "t0")?),
            "t_ratio" => p.t_ratio = Some(num(v, l, "t_ratio")?),
            "t_count" => p.t_count = Some(positive(v, l, "t_count")?),
            "n_list" => {
                for n in list(v, l, "n_list")? {
                    p.n_list.push(int(n, l, "n_list entry")?);
                }
                if p.n_list.is_empty() || p.n_list[0] < 1 || p.n_list.windows(2).any(|w| w[1] <= w[0]) {
                    return err(l, "n_list must be positive and increasing");
                }
            }
            "samples" => p.samples = Some(positive(v, l, "samples")?),
            "duration" => p.duration = Some(num(v, l, "duration")?),
            other => return err(l, format!("unknown run key `{other}`")),
        }
    }
    Ok(p)
}

impl RunConfig {
    pub fn parse(src: &str) -> Result<Self> {
        let blocks = Lexer::new(src)?.blocks()?;
        let mut metric = None;
        let mut run = None;
        for (name, line, entries) in &blocks {
            match name.as_str() {
                "metric" if metric.is_none() => metric = Some(parse_metric(*line, entries)?),
                "run" if run.is_none() => run = Some(parse_run(entries)?),
                "metric" | "run" => return err(*line, format!("duplicate `{name}` block")),
                other => return err(*line, format!("unknown block `{other}`")),
            }
        }
        let metric = metric.ok_or(Error::Config { line: 0, msg: "no metric block".into() })?;
        Ok(RunConfig { metric, run: run.unwrap_or_default() })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotational_block() {
        let c = RunConfig::parse(
            "# standard test metric\nmetric {\n  variant = rotational\n  constant = 2\n  fourier = [(0, 1, 1, 0)]\n}\nrun { Q = 5; seed = 3; directions = [(1, 0), (0.5, -1e-1)] }\n",
        )
        .unwrap();
        assert_eq!(c.metric, MetricSpec::standard_rotational());
        assert_eq!(c.run.q, Some(5.0));
        assert_eq!(c.run.seed, Some(3));
        assert_eq!(c.run.directions[1], Vec2::new(0.5, -0.1));
    }

    #[test]
    fn flat_and_conformal() {
        let f = RunConfig::parse("metric {\n variant = flat_norm\n matrix = [[2, 0],\n   [0, 1]]\n drift = [0.5, 0]\n}").unwrap();
        assert_eq!(f.metric, MetricSpec::flat([[2.0, 0.0], [0.0, 1.0]], [0.5, 0.0]));
        let c = RunConfig::parse("metric { variant = conformal; constant = 3; fourier = [(1, 1, 0.5, 0.25)] }").unwrap();
        assert!(matches!(c.metric, MetricSpec::Conformal { .. }));
    }

    #[test]
    fn errors_carry_lines() {
        let e = RunConfig::parse("metric {\n variant = rotational\n constant = 2\n fourier = [(1, 0, 1, 0)]\n}").unwrap_err();
        assert!(matches!(e, Error::Config { line: 4, .. }), "{e}");
        let e = RunConfig::parse("metric {\n variant = spline\n}").unwrap_err();
        assert!(matches!(e, Error::Config { line: 2, .. }));
        assert!(RunConfig::parse("run { Q = 3 }").is_err());
        assert!(RunConfig::parse("metric { variant = flat_norm ").is_err());
        assert!(RunConfig::parse("metric { variant = flat_norm; bogus = 1 }").is_err());
        let e = RunConfig::parse("metric { variant = flat_norm }\nrun { n_list = [4, 2] }").unwrap_err();
        assert!(matches!(e, Error::Config { line: 2, .. }), "{e}");
        let ok = RunConfig::parse("metric { variant = flat_norm }\nrun { n_list = [1, 3, 9] }").unwrap();
        assert_eq!(ok.run.n_list, vec![1, 3, 9]);
    }
}
