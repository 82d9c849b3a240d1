// SPDX-License-Identifier: Apache-2.0

//! Scenario runs checked against expectations, and the bundled
//! figure-reproduction suite.

pub mod expect;
pub mod figures;
pub mod summary;

use std::path::PathBuf;

use thiserror::Error;

pub use expect::{CheckResult, Expectation};
pub use summary::{execute, Measurements, RunSummary};

use crate::scenario::ScenarioError;
use crate::sim::metrics::MetricsError;
use crate::sim::SimError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Expect(#[from] expect::ExpectError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown figure {0:?} (known: {known})", known = figures::FIGURES.join(", "))]
    UnknownFigure(String),
}
