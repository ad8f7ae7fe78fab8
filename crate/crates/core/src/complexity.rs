//! Parameter and multiply-accumulate counting.
//!
//! Conventions (documented, deliberately simple):
//! - parameters = trainable scalars only (conv weights, biases, BN scale
//!   and shift, band edges); BN running statistics are excluded;
//! - conv MACs = Cout · (Cin/groups) · Kh · Kw · Hout · Wout; dense maps
//!   analogously; bias adds, BN, ReLU, pooling, and means count as zero.
//!
//! The analyzer never runs the network — it traces shapes layer by layer
//! for a given input length, so it is cheap even for full-length input.

use crate::model::Model;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerRow {
    pub name: String,
    pub params: u64,
    pub macs: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComplexityReport {
    pub rows: Vec<LayerRow>,
    pub total_params: u64,
    pub total_macs: u64,
    pub input_length: usize,
}

/// Walk the model layer by layer at the given input length, collecting
/// parameter and MAC counts per layer.
pub fn analyze(model: &Model, input_length: usize) -> Result<ComplexityReport> {
    let ps = &model.ps;
    let mut rows = Vec::new();

    let t = model.sinc.out_len(input_length)?;
    rows.push(LayerRow {
        name: "sinc".into(),
        params: model.sinc.param_count(ps),
        macs: model.sinc.macs(input_length)?,
    });
    let t = model.sinc_pool.out_len(t)?;
    let (mut h, mut w) = (model.cfg.sinc_filters, t);

    rows.push(LayerRow {
        name: "stem".into(),
        params: model.stem.param_count(ps),
        macs: model.stem.macs(h, w)?,
    });
    (h, w) = model.stem.out_dims(h, w)?;

    for (i, block) in model.se_blocks.iter().enumerate() {
        rows.push(LayerRow {
            name: format!("se_res2_{}", i + 1),
            params: block.param_count(ps),
            macs: block.macs(h, w)?,
        });
        (h, w) = block.out_dims(h, w)?;
    }

    for (i, block) in model.tf_blocks.iter().enumerate() {
        rows.push(LayerRow {
            name: format!("tf_{}", i + 1),
            params: block.param_count(ps),
            macs: block.macs(h, w)?,
        });
        if let Some(pool) = &model.tf_pools[i] {
            (h, w) = pool.out_dims(h, w)?;
        }
    }

    // frequency mean → [width, w] → 1D conv over time → time mean
    rows.push(LayerRow {
        name: "classifier".into(),
        params: model.classifier.param_count(ps),
        macs: model.classifier.spec().macs(1, w)?,
    });

    let total_params: u64 = rows.iter().map(|r| r.params).sum();
    let total_macs: u64 = rows.iter().map(|r| r.macs).sum();
    debug_assert_eq!(
        total_params,
        ps.n_trainable_scalars(),
        "analyzer row sum must equal the number of trainable scalars"
    );
    Ok(ComplexityReport {
        rows,
        total_params,
        total_macs,
        input_length,
    })
}

impl ComplexityReport {
    /// Human-readable fixed-width table with a totals line.
    pub fn render_table(&self) -> String {
        let name_w = self
            .rows
            .iter()
            .map(|r| r.name.len())
            .chain(["layer".len(), "total".len()])
            .max()
            .unwrap_or(5);
        let mut out = String::new();
        out.push_str(&format!(
            "input length: {} samples\n{:<name_w$}  {:>12}  {:>14}\n",
            self.input_length, "layer", "params", "macs"
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "{:<name_w$}  {:>12}  {:>14}\n",
                r.name, r.params, r.macs
            ));
        }
        out.push_str(&format!(
            "{:<name_w$}  {:>12}  {:>14}\n",
            "total", self.total_params, self.total_macs
        ));
        out.push_str(&format!(
            "          ≈ {:.4}M params, {:.4}G MACs\n",
            self.total_params as f64 / 1e6,
            self.total_macs as f64 / 1e9
        ));
        out
    }

    /// Machine-readable lines: `layer<TAB>params<TAB>macs`, one per layer,
    /// then a final `total` row.
    pub fn render_machine(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            out.push_str(&format!("{}\t{}\t{}\n", r.name, r.params, r.macs));
        }
        out.push_str(&format!(
            "total\t{}\t{}\n",
            self.total_params, self.total_macs
        ));
        out
    }
}
