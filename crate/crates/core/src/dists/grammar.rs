//! Text form of forecast distributions.
//!
//! ```text
//! dist     := name '(' args ')'
//! normal(mu=0, sigma=1)             gamma(shape=4, scale=0.25)
//! ensemble(1.2, 3.4, 5)             mixture(0.5, normal(mu=0, sigma=1), 0.5, uniform(lower=0, upper=1))
//! shifted(D, by=a)                  scaled(D, by=c)
//! censored_below(D, at=c)           piecewise(A, B, at=k)
//! ```
//!
//! Numbers are printed with the shortest representation that parses back to
//! the same `f64`, so printing then parsing is bit-exact.

use std::fmt;

use thiserror::Error;

use super::{DistError, ForecastDistribution};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("at byte {position}: {message}")]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

/// Shortest round-tripping decimal, switching to exponent notation when the
/// positional form gets long (e.g. `1e-300`).
pub(crate) struct Num(pub f64);

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let plain = format!("{}", self.0);
        if plain.len() > 20 {
            write!(f, "{:e}", self.0)
        } else {
            f.write_str(&plain)
        }
    }
}

pub(crate) fn parse(text: &str) -> Result<ForecastDistribution, DistError> {
    let mut parser = Parser { text, pos: 0 };
    let dist = parser.dist()?;
    parser.skip_ws();
    if parser.pos != text.len() {
        return Err(parser.error("unexpected trailing input").into());
    }
    Ok(dist)
}

enum Arg {
    Number(f64),
    Named(String, f64),
    Dist(ForecastDistribution),
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            position: self.pos,
            message: message.into(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.text.len() - trimmed.len();
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.rest().chars().next()
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            Ok(())
        } else {
            Err(self.error(format!("expected '{c}'")))
        }
    }

    fn ident(&mut self) -> Result<&'a str, ParseError> {
        self.skip_ws();
        let rest = self.rest();
        let len = rest
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(rest.len());
        if len == 0 || !rest.starts_with(|c: char| c.is_ascii_alphabetic()) {
            return Err(self.error("expected a name"));
        }
        self.pos += len;
        Ok(&rest[..len])
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        self.skip_ws();
        let rest = self.rest();
        let len = rest
            .find(|c: char| !(c.is_ascii_digit() || matches!(c, '+' | '-' | '.' | 'e' | 'E')))
            .unwrap_or(rest.len());
        let token = &rest[..len];
        match token.parse::<f64>() {
            Ok(value) if len > 0 => {
                self.pos += len;
                Ok(value)
            }
            _ => Err(self.error(format!("invalid number '{token}'"))),
        }
    }

    fn arg(&mut self) -> Result<Arg, ParseError> {
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                let name = self.ident()?;
                match self.peek() {
                    Some('=') => {
                        self.pos += 1;
                        Ok(Arg::Named(name.to_string(), self.number()?))
                    }
                    Some('(') => {
                        self.pos = start;
                        Ok(Arg::Dist(self.dist()?))
                    }
                    _ => Err(self.error("expected '=' or '('")),
                }
            }
            _ => Ok(Arg::Number(self.number()?)),
        }
    }

    fn dist(&mut self) -> Result<ForecastDistribution, ParseError> {
        let start = {
            self.skip_ws();
            self.pos
        };
        let name = self.ident()?;
        self.expect('(')?;
        let mut args = Vec::new();
        if self.peek() != Some(')') {
            loop {
                args.push(self.arg()?);
                if self.peek() == Some(',') {
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        self.expect(')')?;
        build(name, args).map_err(|e| ParseError {
            position: start,
            message: match e {
                DistError::Parse(p) => p.message,
                other => other.to_string(),
            },
        })
    }
}

fn shape_error(message: impl Into<String>) -> DistError {
    DistError::Parse(ParseError {
        position: 0,
        message: message.into(),
    })
}

/// Named numeric parameters in a fixed order; every key must appear once.
fn named(family: &str, args: &[Arg], keys: &[&str]) -> Result<Vec<f64>, DistError> {
    let mut values = vec![None; keys.len()];
    for arg in args {
        let Arg::Named(key, value) = arg else {
            return Err(shape_error(format!(
                "{family} takes named parameters {}",
                keys.join(", ")
            )));
        };
        let Some(slot) = keys.iter().position(|k| k == key) else {
            return Err(shape_error(format!("{family} has no parameter '{key}'")));
        };
        if values[slot].replace(*value).is_some() {
            return Err(shape_error(format!("parameter '{key}' given twice")));
        }
    }
    values
        .into_iter()
        .zip(keys)
        .map(|(v, k)| v.ok_or_else(|| shape_error(format!("{family} is missing '{k}'"))))
        .collect()
}

/// `wrapper(D, key=value)` style arguments.
fn wrapped(family: &str, mut args: Vec<Arg>, key: &str) -> Result<(ForecastDistribution, f64), DistError> {
    if args.len() == 2 {
        if let (Arg::Named(k, v), Arg::Dist(_)) = (&args[1], &args[0]) {
            if k == key {
                let v = *v;
                let Some(Arg::Dist(d)) = args.drain(..1).next() else { unreachable!() };
                return Ok((d, v));
            }
        }
    }
    Err(shape_error(format!("{family} expects (D, {key}=value)")))
}

fn build(name: &str, args: Vec<Arg>) -> Result<ForecastDistribution, DistError> {
    match name {
        "normal" => {
            let p = named(name, &args, &["mu", "sigma"])?;
            ForecastDistribution::normal(p[0], p[1])
        }
        "uniform" => {
            let p = named(name, &args, &["lower", "upper"])?;
            ForecastDistribution::uniform(p[0], p[1])
        }
        "exponential" => {
            let p = named(name, &args, &["rate"])?;
            ForecastDistribution::exponential(p[0])
        }
        "gamma" => {
            let p = named(name, &args, &["shape", "scale"])?;
            ForecastDistribution::gamma(p[0], p[1])
        }
        "logistic" => {
            let p = named(name, &args, &["mu", "s"])?;
            ForecastDistribution::logistic(p[0], p[1])
        }
        "gpd" => {
            let p = named(name, &args, &["sigma", "xi"])?;
            ForecastDistribution::gpd(p[0], p[1])
        }
        "gev" => {
            let p = named(name, &args, &["mu", "sigma", "xi"])?;
            ForecastDistribution::gev(p[0], p[1], p[2])
        }
        "ensemble" => {
            let members = args
                .into_iter()
                .map(|a| match a {
                    Arg::Number(x) => Ok(x),
                    _ => Err(shape_error("ensemble members must be plain numbers")),
                })
                .collect::<Result<Vec<_>, _>>()?;
            ForecastDistribution::ensemble(members)
        }
        "mixture" => {
            if args.is_empty() || !args.len().is_multiple_of(2) {
                return Err(shape_error("mixture expects weight, distribution pairs"));
            }
            let mut components = Vec::with_capacity(args.len() / 2);
            let mut iter = args.into_iter();
            while let (Some(w), Some(d)) = (iter.next(), iter.next()) {
                match (w, d) {
                    (Arg::Number(w), Arg::Dist(d)) => components.push((w, d)),
                    _ => return Err(shape_error("mixture expects weight, distribution pairs")),
                }
            }
            ForecastDistribution::mixture(components)
        }
        "shifted" => {
            let (d, by) = wrapped(name, args, "by")?;
            ForecastDistribution::shifted(d, by)
        }
        "scaled" => {
            let (d, by) = wrapped(name, args, "by")?;
            ForecastDistribution::scaled(d, by)
        }
        "censored_below" => {
            let (d, at) = wrapped(name, args, "at")?;
            ForecastDistribution::censored_below(d, at)
        }
        "piecewise" => {
            let mut iter = args.into_iter();
            match (iter.next(), iter.next(), iter.next(), iter.next()) {
                (Some(Arg::Dist(a)), Some(Arg::Dist(b)), Some(Arg::Named(k, at)), None) if k == "at" => {
                    ForecastDistribution::piecewise(a, b, at)
                }
                _ => Err(shape_error("piecewise expects (A, B, at=value)")),
            }
        }
        other => Err(shape_error(format!("unknown distribution family '{other}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn round_trip(text: &str) -> String {
        ForecastDistribution::parse(text).unwrap().to_string()
    }

    #[test]
    fn canonical_forms_round_trip() {
        for text in [
            "normal(mu=0, sigma=1)",
            "censored_below(logistic(mu=1.2, s=0.8), at=0)",
            "ensemble(1.2, 3.4, 5)",
            "mixture(0.5, uniform(lower=0, upper=1), 0.5, shifted(uniform(lower=0, upper=1), by=-1))",
            "piecewise(shifted(gpd(sigma=0.8, xi=0.25), by=1), gpd(sigma=1, xi=0.25), at=5)",
            "scaled(gev(mu=0, sigma=2, xi=-0.1), by=3)",
            "gamma(shape=4, scale=0.25)",
            "exponential(rate=1e-300)",
        ] {
            assert_eq!(round_trip(text), text);
        }
    }

    #[test]
    fn lenient_input_is_normalized() {
        assert_eq!(round_trip(" normal( sigma = 2 ,mu=-1.50 ) "), "normal(mu=-1.5, sigma=2)");
        assert_eq!(round_trip("ensemble(3, 1, 2)"), "ensemble(1, 2, 3)");
    }

    #[test]
    fn errors_carry_positions() {
        let err = |text: &str| match ForecastDistribution::parse(text) {
            Err(DistError::Parse(p)) => p,
            other => panic!("expected parse error for {text}, got {other:?}"),
        };
        assert_eq!(err("normal(mu=0, sigma=1").position, 20);
        assert_eq!(err("normal(mu=x, sigma=1)").position, 10);
        assert!(err("normal(mu=0)").message.contains("sigma"));
        assert!(err("cauchy(x=1)").message.contains("cauchy"));
        assert!(err("normal(mu=0, sigma=-1)").message.contains("sigma"));
        assert!(err("normal(mu=0, sigma=1) extra").message.contains("trailing"));
        assert!(err("ensemble()").message.contains("member"));
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![
            -1e6..1e6f64,
            any::<f64>().prop_filter("finite", |x| x.is_finite()),
            Just(-0.0),
        ]
    }

    fn positive() -> impl Strategy<Value = f64> {
        prop_oneof![1e-6..1e6f64, any::<f64>().prop_filter("positive", |x| x.is_finite() && *x > 0.0)]
    }

    fn arbitrary_dist() -> impl Strategy<Value = ForecastDistribution> {
        let leaf = prop_oneof![
            (finite(), positive()).prop_map(|(m, s)| ForecastDistribution::normal(m, s).unwrap()),
            (positive(), positive()).prop_map(|(a, s)| ForecastDistribution::gamma(a, s).unwrap()),
            (positive(), finite()).prop_map(|(s, x)| ForecastDistribution::gpd(s, x).unwrap()),
            (finite(), positive(), finite())
                .prop_map(|(m, s, x)| ForecastDistribution::gev(m, s, x).unwrap()),
            prop::collection::vec(finite(), 1..8).prop_map(|m| ForecastDistribution::ensemble(m).unwrap()),
        ];
        leaf.prop_recursive(2, 8, 2, |inner| {
            prop_oneof![
                (inner.clone(), finite()).prop_map(|(d, by)| ForecastDistribution::shifted(d, by).unwrap()),
                (inner.clone(), finite())
                    .prop_map(|(d, at)| ForecastDistribution::censored_below(d, at).unwrap()),
                (0.0..1.0f64, inner.clone(), inner)
                    .prop_map(|(w, a, b)| ForecastDistribution::mixture2(w, a, b).unwrap()),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_is_bit_exact(d in arbitrary_dist()) {
            let text = d.to_string();
            let back = ForecastDistribution::parse(&text).unwrap();
            prop_assert_eq!(&back, &d);
            prop_assert_eq!(back.to_string(), text);
        }

        #[test]
        fn numbers_round_trip(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
            let text = Num(x).to_string();
            prop_assert_eq!(text.parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }
}
