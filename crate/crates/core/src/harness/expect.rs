// SPDX-License-Identifier: Apache-2.0

//! Expectation expressions of the form
//! `metric(arg, ...) in [lo, hi] over [t0, t1]`.
//!
//! The `over` clause is optional and defaults to the whole run.
//!
//! | metric | value |
//! |---|---|
//! | `tenantThroughput(t)` | mean tenant throughput, bps |
//! | `minTenantThroughput(t, width)` | smallest mean over consecutive windows, bps |
//! | `tenantRatio(a, b)` | mean(a) / mean(b) |
//! | `surplusRatio(a, b, g)` | (mean(a) - g) / (mean(b) - g) |
//! | `tenantCov(t, ...)` | CoV of tenant means; all tenants if no argument |
//! | `weightedCov(t:w, ...)` | CoV of mean(t) / w |
//! | `flowCov(t)` | CoV of the means of tenant t's flows |
//! | `flowShare(f, link)` | mean(f) / capacity(link) |
//! | `linkUtil(link)` | mean(link) / capacity(link) |
//! | `minLinkUtil(link, width)` | smallest windowed utilization |
//! | `settleTime(a, b, lo, hi)` | seconds after t0 until mean(a)/mean(b) per sample first lies in [lo, hi] |

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::sim::metrics::{coefficient_of_variation, MetricsError, Scope};
use crate::sim::RunOutput;

#[derive(Debug, Error, PartialEq)]
pub enum ExpectError {
    #[error("expectation {text:?}: {message} (at column {column})")]
    Syntax { text: String, column: usize, message: String },
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
    #[error("{metric}: expected {expected}, got {got} argument(s)")]
    Arity { metric: String, expected: &'static str, got: usize },
    #[error("{metric}: bad argument {arg:?}")]
    BadArgument { metric: String, arg: String },
    #[error("unknown link {0:?}")]
    UnknownLink(String),
    #[error("{0}")]
    Metrics(String),
    #[error("{metric}: value never entered the range")]
    NeverSettled { metric: String },
}

impl From<MetricsError> for ExpectError {
    fn from(e: MetricsError) -> Self {
        ExpectError::Metrics(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expectation {
    pub text: String,
    pub metric: String,
    pub args: Vec<String>,
    pub lo: f64,
    pub hi: f64,
    pub over: Option<(f64, f64)>,
}

impl fmt::Display for Expectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

/// Result of checking one expectation against a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub expectation: String,
    pub pass: bool,
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: impl Into<String>) -> ExpectError {
        ExpectError::Syntax {
            text: self.text.to_string(),
            column: self.pos + 1,
            message: message.into(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn skip_ws(&mut self) {
        let r = self.rest();
        self.pos += r.len() - r.trim_start().len();
    }

    fn eat(&mut self, token: &str) -> Result<(), ExpectError> {
        self.skip_ws();
        if self.rest().starts_with(token) {
            self.pos += token.len();
            Ok(())
        } else {
            Err(self.err(format!("expected `{token}`")))
        }
    }

    fn try_eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn word(&mut self, stop: &[char]) -> Result<&'a str, ExpectError> {
        self.skip_ws();
        let r = self.rest();
        let end = r.find(|c: char| stop.contains(&c) || c.is_whitespace()).unwrap_or(r.len());
        if end == 0 {
            return Err(self.err("expected a value"));
        }
        self.pos += end;
        Ok(&r[..end])
    }

    fn number(&mut self, stop: &[char]) -> Result<f64, ExpectError> {
        let at = self.pos;
        let w = self.word(stop)?;
        w.parse().map_err(|_| {
            self.pos = at;
            self.err(format!("`{w}` is not a number"))
        })
    }

    fn range(&mut self) -> Result<(f64, f64), ExpectError> {
        self.eat("[")?;
        let lo = self.number(&[','])?;
        self.eat(",")?;
        let hi = self.number(&[']'])?;
        self.eat("]")?;
        Ok((lo, hi))
    }
}

pub fn parse(text: &str) -> Result<Expectation, ExpectError> {
    let mut c = Cursor { text, pos: 0 };
    let metric = c.word(&['('])?.to_string();
    c.eat("(")?;
    let mut args = Vec::new();
    if !c.try_eat(")") {
        loop {
            args.push(c.word(&[',', ')'])?.to_string());
            if c.try_eat(")") {
                break;
            }
            c.eat(",")?;
        }
    }
    c.eat("in")?;
    let (lo, hi) = c.range()?;
    let over = if c.try_eat("over") { Some(c.range()?) } else { None };
    c.skip_ws();
    if !c.rest().is_empty() {
        return Err(c.err("trailing input"));
    }
    if lo > hi {
        return Err(c.err("empty range"));
    }
    Ok(Expectation {
        text: text.trim().to_string(),
        metric,
        args,
        lo,
        hi,
        over,
    })
}

fn arity(e: &Expectation, n: usize, expected: &'static str) -> Result<(), ExpectError> {
    if e.args.len() == n {
        Ok(())
    } else {
        Err(ExpectError::Arity {
            metric: e.metric.clone(),
            expected,
            got: e.args.len(),
        })
    }
}

fn num(e: &Expectation, i: usize) -> Result<f64, ExpectError> {
    e.args[i].parse().map_err(|_| ExpectError::BadArgument {
        metric: e.metric.clone(),
        arg: e.args[i].clone(),
    })
}

fn capacity(out: &RunOutput, link: &str) -> Result<f64, ExpectError> {
    out.link_capacity
        .get(link)
        .copied()
        .ok_or_else(|| ExpectError::UnknownLink(link.to_string()))
}

/// Computes the metric named by `e` over `[t0, t1]`.
pub fn measure(e: &Expectation, out: &RunOutput, t0: f64, t1: f64) -> Result<f64, ExpectError> {
    let log = &out.log;
    let tenant = |id: &str| log.mean_throughput(Scope::Tenant, id, t0, t1);
    let v = match e.metric.as_str() {
        "tenantThroughput" => {
            arity(e, 1, "1")?;
            tenant(&e.args[0])?
        }
        "minTenantThroughput" => {
            arity(e, 2, "2")?;
            let width = num(e, 1)?;
            let w = log.windowed(Scope::Tenant, &e.args[0], t0, t1, width);
            w.iter()
                .map(|x| x.1)
                .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.min(x))))
                .ok_or_else(|| MetricsError::NoSamples(format!("tenant {}", e.args[0])))?
        }
        "tenantRatio" => {
            arity(e, 2, "2")?;
            tenant(&e.args[0])? / tenant(&e.args[1])?
        }
        "surplusRatio" => {
            arity(e, 3, "3")?;
            let g = num(e, 2)?;
            (tenant(&e.args[0])? - g) / (tenant(&e.args[1])? - g)
        }
        "tenantCov" => {
            let ids = if e.args.is_empty() {
                log.ids(Scope::Tenant)
            } else {
                e.args.clone()
            };
            log.compute_fairness(Scope::Tenant, &ids, t0, t1)?
        }
        "weightedCov" => {
            let mut values = Vec::new();
            for a in &e.args {
                let (id, w) = a.split_once(':').ok_or_else(|| ExpectError::BadArgument {
                    metric: e.metric.clone(),
                    arg: a.clone(),
                })?;
                let w: f64 = w.parse().map_err(|_| ExpectError::BadArgument {
                    metric: e.metric.clone(),
                    arg: a.clone(),
                })?;
                values.push(tenant(id)? / w);
            }
            coefficient_of_variation(&values)?
        }
        "flowCov" => {
            arity(e, 1, "1")?;
            let t: u32 = num(e, 0)? as u32;
            let ids: Vec<String> = out
                .flows
                .iter()
                .enumerate()
                .filter(|(_, f)| f.tenant == t)
                .map(|(i, _)| i.to_string())
                .collect();
            log.compute_fairness(Scope::Flow, &ids, t0, t1)?
        }
        "flowShare" => {
            arity(e, 2, "2")?;
            log.mean_throughput(Scope::Flow, &e.args[0], t0, t1)? / capacity(out, &e.args[1])?
        }
        "linkUtil" => {
            arity(e, 1, "1")?;
            log.mean_throughput(Scope::Link, &e.args[0], t0, t1)? / capacity(out, &e.args[0])?
        }
        "minLinkUtil" => {
            arity(e, 2, "2")?;
            let cap = capacity(out, &e.args[0])?;
            let width = num(e, 1)?;
            let w = log.windowed(Scope::Link, &e.args[0], t0, t1, width);
            w.iter()
                .map(|x| x.1 / cap)
                .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.min(x))))
                .ok_or_else(|| MetricsError::NoSamples(format!("link {}", e.args[0])))?
        }
        "settleTime" => {
            arity(e, 4, "4")?;
            let (lo, hi) = (num(e, 2)?, num(e, 3)?);
            let a = log.series(Scope::Tenant, &e.args[0]);
            let b = log.series(Scope::Tenant, &e.args[1]);
            a.iter()
                .zip(&b)
                .filter(|(x, _)| x.0 > t0 + 1e-9 && x.0 <= t1 + 1e-9)
                .find(|(x, y)| y.1 > 0.0 && (lo..=hi).contains(&(x.1 / y.1)))
                .map(|(x, _)| x.0 - t0)
                .ok_or_else(|| ExpectError::NeverSettled {
                    metric: e.text.clone(),
                })?
        }
        other => return Err(ExpectError::UnknownMetric(other.to_string())),
    };
    Ok(v)
}

/// Evaluates an expectation against a finished run of `duration` seconds.
pub fn check(e: &Expectation, out: &RunOutput, duration: f64) -> CheckResult {
    let (t0, t1) = e.over.unwrap_or((0.0, duration));
    match measure(e, out, t0, t1) {
        Ok(v) => CheckResult {
            expectation: e.text.clone(),
            pass: v >= e.lo && v <= e.hi,
            value: Some(v),
            error: None,
        },
        Err(err) => CheckResult {
            expectation: e.text.clone(),
            pass: false,
            value: None,
            error: Some(err.to_string()),
        },
    }
}
