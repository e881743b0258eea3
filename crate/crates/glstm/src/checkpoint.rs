//! Versioned JSON checkpoint format for a model.
//!
//! Layout: `{version, d, h, c, candidate_tanh, params: {name -> {rows,
//! cols, data[]}}, gate: {mu[], sigma[]}, head: {w_out, b_out}}`. Floats
//! are serialized in shortest round-trip decimal form (at most 17
//! significant digits), so load(save(m)) reproduces every bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::lstm::{GlstmModel, LstmParams, OutputHead};
use crate::math::Matrix;
use crate::timegate::GateParams;
use crate::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct MatrixData {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl MatrixData {
    fn from_matrix(m: &Matrix) -> Self {
        MatrixData {
            rows: m.rows(),
            cols: m.cols(),
            data: m.data().to_vec(),
        }
    }

    fn from_bias(b: &[f64]) -> Self {
        MatrixData {
            rows: 1,
            cols: b.len(),
            data: b.to_vec(),
        }
    }

    fn into_matrix(self, name: &str, rows: usize, cols: usize) -> Result<Matrix> {
        if self.rows != rows || self.cols != cols {
            return Err(Error::Format(format!(
                "checkpoint matrix {name}: expected {rows}x{cols}, found {}x{}",
                self.rows, self.cols
            )));
        }
        if self.data.len() != rows * cols {
            return Err(Error::Format(format!(
                "checkpoint matrix {name}: data length {} does not match {rows}x{cols}",
                self.data.len()
            )));
        }
        Ok(Matrix::from_vec(rows, cols, self.data))
    }

    fn into_bias(self, name: &str, len: usize) -> Result<Vec<f64>> {
        if self.rows != 1 || self.cols != len || self.data.len() != len {
            return Err(Error::Format(format!(
                "checkpoint bias {name}: expected length {len}"
            )));
        }
        Ok(self.data)
    }
}

#[derive(Serialize, Deserialize)]
struct GateData {
    mu: Vec<f64>,
    sigma: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct HeadData {
    w_out: MatrixData,
    b_out: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    d: usize,
    h: usize,
    c: usize,
    candidate_tanh: bool,
    params: BTreeMap<String, MatrixData>,
    gate: GateData,
    head: HeadData,
}

pub fn to_json(model: &GlstmModel) -> String {
    let p = &model.params;
    let mut params = BTreeMap::new();
    params.insert("w_xi".to_string(), MatrixData::from_matrix(&p.w_xi));
    params.insert("w_hi".to_string(), MatrixData::from_matrix(&p.w_hi));
    params.insert("b_i".to_string(), MatrixData::from_bias(&p.b_i));
    params.insert("w_xf".to_string(), MatrixData::from_matrix(&p.w_xf));
    params.insert("w_hf".to_string(), MatrixData::from_matrix(&p.w_hf));
    params.insert("b_f".to_string(), MatrixData::from_bias(&p.b_f));
    params.insert("w_xg".to_string(), MatrixData::from_matrix(&p.w_xg));
    params.insert("w_hg".to_string(), MatrixData::from_matrix(&p.w_hg));
    params.insert("b_g".to_string(), MatrixData::from_bias(&p.b_g));
    params.insert("w_xo".to_string(), MatrixData::from_matrix(&p.w_xo));
    params.insert("w_ho".to_string(), MatrixData::from_matrix(&p.w_ho));
    params.insert("b_o".to_string(), MatrixData::from_bias(&p.b_o));
    let cp = Checkpoint {
        version: CHECKPOINT_VERSION,
        d: model.input_dim(),
        h: model.hidden_dim(),
        c: model.output_dim(),
        candidate_tanh: model.candidate_tanh,
        params,
        gate: GateData {
            mu: model.gate.mu.clone(),
            sigma: model.gate.sigma.clone(),
        },
        head: HeadData {
            w_out: MatrixData::from_matrix(&model.head.w_out),
            b_out: model.head.b_out.clone(),
        },
    };
    serde_json::to_string_pretty(&cp).expect("checkpoint serialization cannot fail")
}

pub fn from_json(text: &str) -> Result<GlstmModel> {
    let cp: Checkpoint =
        serde_json::from_str(text).map_err(|e| Error::Format(format!("checkpoint JSON: {e}")))?;
    if cp.version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
            cp.version
        )));
    }
    let (d, h, c) = (cp.d, cp.h, cp.c);
    let mut params = cp.params;
    let mut take = |name: &str| -> Result<MatrixData> {
        params
            .remove(name)
            .ok_or_else(|| Error::Format(format!("checkpoint missing matrix {name}")))
    };
    let lstm = LstmParams {
        w_xi: take("w_xi")?.into_matrix("w_xi", d, h)?,
        w_hi: take("w_hi")?.into_matrix("w_hi", h, h)?,
        b_i: take("b_i")?.into_bias("b_i", h)?,
        w_xf: take("w_xf")?.into_matrix("w_xf", d, h)?,
        w_hf: take("w_hf")?.into_matrix("w_hf", h, h)?,
        b_f: take("b_f")?.into_bias("b_f", h)?,
        w_xg: take("w_xg")?.into_matrix("w_xg", d, h)?,
        w_hg: take("w_hg")?.into_matrix("w_hg", h, h)?,
        b_g: take("b_g")?.into_bias("b_g", h)?,
        w_xo: take("w_xo")?.into_matrix("w_xo", d, h)?,
        w_ho: take("w_ho")?.into_matrix("w_ho", h, h)?,
        b_o: take("b_o")?.into_bias("b_o", h)?,
    };
    if cp.gate.mu.len() != h || cp.gate.sigma.len() != h {
        return Err(Error::Format("checkpoint gate length mismatch".into()));
    }
    if cp.head.b_out.len() != c {
        return Err(Error::Format("checkpoint head bias length mismatch".into()));
    }
    Ok(GlstmModel {
        params: lstm,
        gate: GateParams::new(cp.gate.mu, cp.gate.sigma),
        head: OutputHead {
            w_out: cp.head.w_out.into_matrix("w_out", h, c)?,
            b_out: cp.head.b_out,
        },
        candidate_tanh: cp.candidate_tanh,
    })
}

pub fn save(model: &GlstmModel, path: &Path) -> Result<()> {
    crate::write_atomic(path, to_json(model).as_bytes())
}

pub fn load(path: &Path) -> Result<GlstmModel> {
    let text = fs::read_to_string(path)?;
    from_json(&text)
}
