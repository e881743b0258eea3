//! The per-unit Gaussian time gate `k(t) = exp(-(t - mu)^2 / sigma^2)`, its
//! analytic parameter derivatives, and openness statistics/export.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::math::Matrix;

/// Lower clamp for sigma; keeps the gate well-defined after optimizer steps.
pub const SIGMA_MIN: f64 = 0.01;

/// Per-hidden-unit gate parameters, in units of the time axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl GateParams {
    /// Builds gate parameters; sigma entries are clamped to [`SIGMA_MIN`].
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Self {
        assert_eq!(mu.len(), sigma.len(), "gate mu/sigma length mismatch");
        assert!(
            mu.iter().chain(sigma.iter()).all(|v| v.is_finite()),
            "gate parameters must be finite"
        );
        let mut g = GateParams { mu, sigma };
        g.clamp_sigma();
        g
    }

    /// All units share one (mu, sigma).
    pub fn constant(units: usize, mu: f64, sigma: f64) -> Self {
        Self::new(vec![mu; units], vec![sigma; units])
    }

    pub fn units(&self) -> usize {
        self.mu.len()
    }

    /// Re-establishes the sigma >= SIGMA_MIN invariant after a raw update.
    pub fn clamp_sigma(&mut self) {
        for s in &mut self.sigma {
            if *s < SIGMA_MIN {
                *s = SIGMA_MIN;
            }
        }
    }
}

/// Discrete time inputs t_1 < t_2 < ... < t_N; defaults to the sequence
/// indices 1..=N.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeAxis {
    values: Vec<f64>,
}

impl TimeAxis {
    pub fn new(values: Vec<f64>) -> Self {
        assert!(
            values.windows(2).all(|w| w[0] < w[1]),
            "time axis must be strictly increasing"
        );
        TimeAxis { values }
    }

    /// The default axis t_n = n for n = 1..=len.
    pub fn indices(len: usize) -> Self {
        TimeAxis {
            values: (1..=len).map(|n| n as f64).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at(&self, n: usize) -> f64 {
        self.values[n]
    }
}

/// Gate openness of every unit at time `t`; entries in (0, 1].
pub fn gate_value(g: &GateParams, t: f64) -> Vec<f64> {
    let mut out = vec![0.0; g.units()];
    gate_value_into(g, t, &mut out);
    out
}

pub fn gate_value_into(g: &GateParams, t: f64, out: &mut [f64]) {
    for ((o, &mu), &sigma) in out.iter_mut().zip(&g.mu).zip(&g.sigma) {
        let d = t - mu;
        *o = (-(d * d) / (sigma * sigma)).exp();
    }
}

/// Analytic derivatives of the gate value with respect to mu and sigma:
/// dk/dmu = k * 2(t - mu) / sigma^2,  dk/dsigma = k * 2(t - mu)^2 / sigma^3.
pub fn gate_grad(g: &GateParams, t: f64) -> (Vec<f64>, Vec<f64>) {
    let h = g.units();
    let mut dk_dmu = vec![0.0; h];
    let mut dk_dsigma = vec![0.0; h];
    for j in 0..h {
        let mu = g.mu[j];
        let sigma = g.sigma[j];
        let d = t - mu;
        let k = (-(d * d) / (sigma * sigma)).exp();
        dk_dmu[j] = k * 2.0 * d / (sigma * sigma);
        dk_dsigma[j] = k * 2.0 * d * d / (sigma * sigma * sigma);
    }
    (dk_dmu, dk_dsigma)
}

/// Openness of every unit at every time step: entry (j, n) is unit j's gate
/// at t_n. Rows are units.
pub fn openness_matrix(g: &GateParams, axis: &TimeAxis) -> Matrix {
    let h = g.units();
    let n = axis.len();
    let mut m = Matrix::zeros(h, n);
    for j in 0..h {
        let mu = g.mu[j];
        let sigma = g.sigma[j];
        for (col, &t) in m.row_mut(j).iter_mut().zip(axis.values()) {
            let d = t - mu;
            *col = (-(d * d) / (sigma * sigma)).exp();
        }
    }
    m
}

/// Mean of all H*N openness values.
pub fn mean_openness(g: &GateParams, axis: &TimeAxis) -> f64 {
    let m = openness_matrix(g, axis);
    m.data().iter().sum::<f64>() / m.data().len() as f64
}

/// Fraction of (unit, step) pairs with openness strictly above `v_t`.
pub fn fraction_above_threshold(g: &GateParams, axis: &TimeAxis, v_t: f64) -> f64 {
    assert!((0.0..1.0).contains(&v_t), "threshold must be in [0, 1)");
    let m = openness_matrix(g, axis);
    let open = m.data().iter().filter(|&&k| k > v_t).count();
    open as f64 / m.data().len() as f64
}

/// Writes the openness map as CSV: header `unit,t=1,...,t=N`, one row per
/// hidden unit, floats at 17 significant digits.
pub fn write_openness_csv<W: Write>(g: &GateParams, axis: &TimeAxis, mut w: W) -> io::Result<()> {
    write!(w, "unit")?;
    for n in 1..=axis.len() {
        write!(w, ",t={n}")?;
    }
    writeln!(w)?;
    let m = openness_matrix(g, axis);
    for j in 0..m.rows() {
        write!(w, "{j}")?;
        for v in m.row(j) {
            write!(w, ",{v:.16e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
