//! Linear decision makers: L1/L2 regularized logistic regression and squared
//! hinge SVMs, minimizing `C·Σ loss + penalty(w)` with an unpenalized
//! intercept by monotone proximal gradient descent.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GRADIENT_TOLERANCE: f64 = 1e-6;
pub const MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Logistic,
    SquaredHinge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub penalty: Penalty,
    #[serde(rename = "C")]
    pub c: f64,
    pub loss: Loss,
}

impl LinearModel {
    pub fn decision_value(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.intercept
    }

    pub fn nonzero_weights(&self) -> usize {
        self.weights.iter().filter(|w| **w != 0.0).count()
    }
}

/// Result of a fit together with the per-iteration objective values.
#[derive(Debug, Clone)]
pub struct LinearFit {
    pub model: LinearModel,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

/// 1 iff `wᵀx + b > 0`.
pub fn predict_linear(model: &LinearModel, x: &[f64]) -> Result<bool> {
    if x.len() != model.weights.len() {
        return Err(Error::DimensionMismatch {
            expected: model.weights.len(),
            found: x.len(),
        });
    }
    Ok(model.decision_value(x) > 0.0)
}

fn sign(y: bool) -> f64 {
    if y {
        1.0
    } else {
        -1.0
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Per-sample loss and its derivative with respect to the margin input `m`.
fn point_loss(loss: Loss, y: f64, m: f64) -> (f64, f64) {
    match loss {
        Loss::Logistic => (softplus(-y * m), -y * sigmoid(-y * m)),
        Loss::SquaredHinge => {
            let slack = (1.0 - y * m).max(0.0);
            (slack * slack, -2.0 * y * slack)
        }
    }
}

/// Unscaled data loss `Σ loss(y_i, wᵀx_i + b)` with gradients in `w` and `b`.
pub fn smooth_loss_and_grad(loss: Loss, w: &[f64], b: f64, x: ArrayView2<'_, f64>, y: &[bool]) -> (f64, Vec<f64>, f64) {
    let mut value = 0.0;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for (row, &label) in x.rows().into_iter().zip(y) {
        let m = row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b;
        let (l, d) = point_loss(loss, sign(label), m);
        value += l;
        gb += d;
        for (g, v) in gw.iter_mut().zip(row.iter()) {
            *g += d * v;
        }
    }
    (value, gw, gb)
}

/// Problem in standardized coordinates; `inv_scale` carries the penalty
/// weights that make it an exact reparametrization.
struct Scaled {
    z: Array2<f64>,
    y: Vec<f64>,
    inv_scale: Vec<f64>,
    c: f64,
    penalty: Penalty,
    loss: Loss,
}

impl Scaled {
    fn smooth(&self, v: &[f64], b: f64) -> (f64, Vec<f64>, f64) {
        let mut value = 0.0;
        let mut gv = vec![0.0; v.len()];
        let mut gb = 0.0;
        for (row, &y) in self.z.rows().into_iter().zip(&self.y) {
            let m = row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() + b;
            let (l, d) = point_loss(self.loss, y, m);
            value += l;
            gb += d;
            for (g, zv) in gv.iter_mut().zip(row.iter()) {
                *g += d * zv;
            }
        }
        value *= self.c;
        gb *= self.c;
        for g in gv.iter_mut() {
            *g *= self.c;
        }
        if self.penalty == Penalty::L2 {
            for ((g, vj), s) in gv.iter_mut().zip(v).zip(&self.inv_scale) {
                value += 0.5 * vj * vj * s * s;
                *g += vj * s * s;
            }
        }
        (value, gv, gb)
    }

    fn nonsmooth(&self, v: &[f64]) -> f64 {
        match self.penalty {
            Penalty::L1 => v.iter().zip(&self.inv_scale).map(|(a, s)| a.abs() * s).sum(),
            Penalty::L2 => 0.0,
        }
    }

    fn prox(&self, v: &mut [f64], step: f64) {
        if self.penalty == Penalty::L1 {
            for (a, s) in v.iter_mut().zip(&self.inv_scale) {
                let t = step * s;
                *a = if *a > t {
                    *a - t
                } else if *a < -t {
                    *a + t
                } else {
                    0.0
                };
            }
        }
    }
}

fn fit_linear_traced(x: ArrayView2<'_, f64>, y: &[bool], penalty: Penalty, c: f64, loss: Loss) -> Result<LinearFit> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("C must be positive, got {c}")));
    }
    let (n, m) = x.dim();
    if n == 0 || y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n.max(1),
            found: y.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("linear fit needs finite inputs".into()));
    }
    let positives = y.iter().filter(|b| **b).count();
    if positives == 0 || positives == n {
        return Ok(LinearFit {
            model: LinearModel {
                weights: vec![0.0; m],
                intercept: if positives == n { 1.0 } else { -1.0 },
                penalty,
                c,
                loss,
            },
            objective_trace: Vec::new(),
            converged: true,
        });
    }

    let mean = x.mean_axis(Axis(0)).expect("n > 0");
    let std = x.std_axis(Axis(0), 0.0);
    let active: Vec<usize> = (0..m).filter(|&j| std[j] > 0.0).collect();
    let mut z = Array2::zeros((n, active.len()));
    for (k, &j) in active.iter().enumerate() {
        let col = x.column(j).mapv(|v| (v - mean[j]) / std[j]);
        z.column_mut(k).assign(&col);
    }
    let problem = Scaled {
        z,
        y: y.iter().map(|&b| sign(b)).collect(),
        inv_scale: active.iter().map(|&j| 1.0 / std[j]).collect(),
        c,
        penalty,
        loss,
    };

    let p = active.len();
    let mut v = vec![0.0; p];
    let mut b = 0.0;
    let (mut f, mut gv, mut gb) = problem.smooth(&v, b);
    let mut objective = f + problem.nonsmooth(&v);
    let mut trace = vec![objective];
    let mut step = 1.0;
    let mut converged = false;
    for _ in 0..MAX_ITERATIONS {
        let mut accepted = None;
        for _ in 0..200 {
            let mut nv: Vec<f64> = v.iter().zip(&gv).map(|(a, g)| a - step * g).collect();
            problem.prox(&mut nv, step);
            let nb = b - step * gb;
            let (nf, ngv, ngb) = problem.smooth(&nv, nb);
            let mut lin = (nb - b) * gb;
            let mut sq = (nb - b) * (nb - b);
            for ((a, o), g) in nv.iter().zip(&v).zip(&gv) {
                lin += (a - o) * g;
                sq += (a - o) * (a - o);
            }
            if nf <= f + lin + sq / (2.0 * step) {
                accepted = Some((nv, nb, nf, ngv, ngb, sq.sqrt() / step));
                break;
            }
            step *= 0.5;
        }
        let Some((nv, nb, nf, ngv, ngb, mapping)) = accepted else {
            break;
        };
        let next = nf + problem.nonsmooth(&nv);
        if next > objective {
            // rounding noise at the optimum
            converged = mapping <= GRADIENT_TOLERANCE * objective.abs().max(1.0);
            break;
        }
        v = nv;
        b = nb;
        f = nf;
        gv = ngv;
        gb = ngb;
        objective = next;
        trace.push(objective);
        if mapping <= GRADIENT_TOLERANCE {
            converged = true;
            break;
        }
        step *= 2.0;
    }

    let mut weights = vec![0.0; m];
    let mut intercept = b;
    for (k, &j) in active.iter().enumerate() {
        weights[j] = v[k] / std[j];
        intercept -= weights[j] * mean[j];
    }
    Ok(LinearFit {
        model: LinearModel {
            weights,
            intercept,
            penalty,
            c,
            loss,
        },
        objective_trace: trace,
        converged,
    })
}

/// Fit with the objective trace exposed.
pub fn fit_traced(x: ArrayView2<'_, f64>, y: &[bool], penalty: Penalty, c: f64, loss: Loss) -> Result<LinearFit> {
    fit_linear_traced(x, y, penalty, c, loss)
}

pub fn fit_logistic(x: ArrayView2<'_, f64>, y: &[bool], penalty: Penalty, c: f64) -> Result<LinearModel> {
    Ok(fit_linear_traced(x, y, penalty, c, Loss::Logistic)?.model)
}

pub fn fit_linear_svm(x: ArrayView2<'_, f64>, y: &[bool], penalty: Penalty, c: f64) -> Result<LinearModel> {
    Ok(fit_linear_traced(x, y, penalty, c, Loss::SquaredHinge)?.model)
}

/// Objective `C·Σ loss + penalty` in the original coordinates.
pub fn objective(model: &LinearModel, x: ArrayView2<'_, f64>, y: &[bool]) -> f64 {
    let (l, _, _) = smooth_loss_and_grad(model.loss, &model.weights, model.intercept, x, y);
    let w = Array1::from(model.weights.clone());
    let pen = match model.penalty {
        Penalty::L1 => w.mapv(f64::abs).sum(),
        Penalty::L2 => 0.5 * w.dot(&w),
    };
    model.c * l + pen
}
