use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

use super::metrics::Summary;

/// Named parameter axes; the grid is their Cartesian product with the first
/// axis varying slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub axes: Vec<Axis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub values: Vec<Value>,
}

pub type Combination = BTreeMap<String, Value>;

impl Grid {
    pub fn size(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() || self.axes.iter().any(|a| a.values.is_empty()) {
            return Err(Error::Validation("grid axes must be non-empty".into()));
        }
        let mut names: Vec<&str> = self.axes.iter().map(|a| a.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation("grid axis names must be unique".into()));
        }
        Ok(())
    }

    pub fn combination(&self, mut index: usize) -> Combination {
        let mut out = Combination::new();
        for axis in self.axes.iter().rev() {
            out.insert(axis.name.clone(), axis.values[index % axis.values.len()].clone());
            index /= axis.values.len();
        }
        out
    }

    pub fn combinations(&self) -> Vec<Combination> {
        (0..self.size()).map(|i| self.combination(i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankMetric {
    F1,
    Precision,
    Recall,
    Accuracy,
    TotalAccuracy,
}

impl RankMetric {
    pub fn of(self, s: &Summary) -> f64 {
        match self {
            RankMetric::F1 => s.f1,
            RankMetric::Precision => s.precision,
            RankMetric::Recall => s.recall,
            RankMetric::Accuracy => s.accuracy,
            RankMetric::TotalAccuracy => s.total_accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub index: usize,
    pub params: Combination,
    pub score: f64,
    pub summary: Option<Summary>,
    pub error: Option<String>,
}

/// Scores every combination in parallel. Failures become NaN rows, which
/// sort last; equal scores keep combination order.
pub fn grid_search<F>(grid: &Grid, metric: RankMetric, scorer: F) -> Result<Vec<GridRow>>
where
    F: Fn(&Combination) -> Result<Summary> + Sync,
{
    grid.validate()?;
    let mut rows: Vec<GridRow> = (0..grid.size())
        .into_par_iter()
        .map(|index| {
            let params = grid.combination(index);
            match scorer(&params) {
                Ok(summary) => GridRow {
                    index,
                    score: metric.of(&summary),
                    params,
                    summary: Some(summary),
                    error: None,
                },
                Err(e) => GridRow {
                    index,
                    params,
                    score: f64::NAN,
                    summary: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    rows.sort_by(|a, b| match (a.score.is_nan(), b.score.is_nan()) {
        (false, false) => b.score.total_cmp(&a.score).then(a.index.cmp(&b.index)),
        (x, y) => x.cmp(&y).then(a.index.cmp(&b.index)),
    });
    Ok(rows)
}
