//! Spatial, information-type and memory gating.
//!
//! Every gate multiplies its input by a learned mask. Closing a gate swaps
//! that mask for its neutral constant (ones, or `1/n` for a softmax
//! partition) without touching any parameter, so an ablation needs no
//! retraining and is undone by reopening the gate.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::params::ParamScope;
use crate::tensor::{PoolKind, Tensor};

/// Open/closed switch per gate family. `true` means open.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    #[serde(rename = "spag")]
    pub spag_open: bool,
    /// MO-InfoG on the recurrent state plus the temporal-uncertainty masks.
    #[serde(rename = "memog")]
    pub memog_open: bool,
    #[serde(rename = "mu_infog")]
    pub mu_infog_open: bool,
    /// Cross-frame weighting inside MemoG (the "w-TU" variant).
    pub temporal_uncertainty: bool,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self::all_open()
    }
}

impl GateConfig {
    pub fn all_open() -> Self {
        Self {
            spag_open: true,
            memog_open: true,
            mu_infog_open: true,
            temporal_uncertainty: true,
        }
    }

    /// Every gate closed; `temporal_uncertainty` is left as given because it
    /// selects a model variant rather than a gate.
    pub fn all_closed(temporal_uncertainty: bool) -> Self {
        Self {
            spag_open: false,
            memog_open: false,
            mu_infog_open: false,
            temporal_uncertainty,
        }
    }

    /// The eight open/closed combinations of (SpaG, MemoG, MU-InfoG), in the
    /// row order of the gating ablation table: all closed first, all open last.
    pub fn ablation_grid(temporal_uncertainty: bool) -> Vec<GateConfig> {
        let rows = [
            (false, false, false),
            (true, false, false),
            (false, true, false),
            (false, false, true),
            (true, true, false),
            (true, false, true),
            (false, true, true),
            (true, true, true),
        ];
        rows.iter()
            .map(|&(s, m, u)| GateConfig {
                spag_open: s,
                memog_open: m,
                mu_infog_open: u,
                temporal_uncertainty,
            })
            .collect()
    }

    /// Parse `name=on|off` overrides (`spag`, `memog`, `mu_infog`, `tu`).
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (key, value) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("gate override `{spec}` is not name=on|off")))?;
        let on = match value.trim() {
            "on" | "open" | "true" => true,
            "off" | "closed" | "false" => false,
            other => return Err(Error::Config(format!("gate value `{other}` is not on/off"))),
        };
        match key.trim() {
            "spag" => self.spag_open = on,
            "memog" => self.memog_open = on,
            "mu_infog" => self.mu_infog_open = on,
            "tu" | "temporal_uncertainty" => self.temporal_uncertainty = on,
            other => return Err(Error::Config(format!("unknown gate `{other}`"))),
        }
        Ok(())
    }
}

fn check_chw(t: &Tensor, what: &str) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(shape_err!("{} must be C×H×W, got {:?}", what, t.shape())),
    }
}

// ---------------------------------------------------------------------------
// SpaG

#[derive(Debug, Clone)]
pub struct SpagParams {
    /// `1×2×k×k`, input channels ordered (avg, max).
    pub kernel: Tensor,
    pub bias: Tensor,
}

impl SpagParams {
    pub fn bind(scope: &ParamScope, prefix: &str) -> Result<Self> {
        Ok(Self {
            kernel: scope.get(&format!("{prefix}.w"))?,
            bias: scope.get(&format!("{prefix}.b"))?,
        })
    }
}

pub struct GateOutput {
    pub output: Tensor,
    /// The multiplicative mask actually applied (`None` when closed).
    pub mask: Option<Tensor>,
}

/// `S' = σ(W_s * [avg_c(S); max_c(S)]) ⊙ S`, the mask broadcast over channels.
pub fn spag_forward(s: &Tensor, p: &SpagParams, open: bool) -> Result<GateOutput> {
    let (_, h, w) = check_chw(s, "SpaG input")?;
    if !open {
        return Ok(GateOutput {
            output: s.clone(),
            mask: None,
        });
    }
    let k = p.kernel.shape();
    if k.len() != 4 || k[0] != 1 || k[1] != 2 || k[2] != k[3] {
        return Err(shape_err!("SpaG kernel must be 1×2×k×k, got {:?}", k));
    }
    let pooled = Tensor::concat(&[s.pool_channel(PoolKind::Avg)?, s.pool_channel(PoolKind::Max)?], 0)?;
    let mask = pooled.conv2d(&p.kernel, Some(&p.bias), (k[2] - 1) / 2)?.sigmoid();
    debug_assert_eq!(mask.shape(), &[1, h, w]);
    Ok(GateOutput {
        output: s.mul(&mask)?,
        mask: Some(mask.reshape(&[h, w])?),
    })
}

// ---------------------------------------------------------------------------
// MO-InfoG

#[derive(Debug, Clone)]
pub struct MoInfogParams {
    /// Feature branch, `C×C×1×1`.
    pub wf: Tensor,
    pub bf: Tensor,
    /// Gate branch, `C×C×1×1`.
    pub wg: Tensor,
    pub bg: Tensor,
}

impl MoInfogParams {
    pub fn bind(scope: &ParamScope, prefix: &str) -> Result<Self> {
        Ok(Self {
            wf: scope.get(&format!("{prefix}.wf"))?,
            bf: scope.get(&format!("{prefix}.bf"))?,
            wg: scope.get(&format!("{prefix}.wg"))?,
            bg: scope.get(&format!("{prefix}.bg"))?,
        })
    }
}

/// `M' = ELU(W_f·M) ⊙ σ(W_g·M)` with 1×1 convolutions.
pub fn mo_infog_forward(m: &Tensor, p: &MoInfogParams) -> Result<Tensor> {
    check_chw(m, "MO-InfoG input")?;
    let features = m.conv2d(&p.wf, Some(&p.bf), 0)?.elu();
    let gate = m.conv2d(&p.wg, Some(&p.bg), 0)?.sigmoid();
    features.mul(&gate)
}

// ---------------------------------------------------------------------------
// MU-InfoG

/// Per-input 1×1 reductions `C → 1`. A single entry is shared by all inputs.
#[derive(Debug, Clone)]
pub struct MuInfogParams {
    pub reducers: Vec<(Tensor, Tensor)>,
}

impl MuInfogParams {
    pub fn bind(scope: &ParamScope, prefixes: &[String]) -> Result<Self> {
        let reducers = prefixes
            .iter()
            .map(|p| Ok((scope.get(&format!("{p}.w"))?, scope.get(&format!("{p}.b"))?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { reducers })
    }

    fn reducer(&self, i: usize) -> &(Tensor, Tensor) {
        if self.reducers.len() == 1 {
            &self.reducers[0]
        } else {
            &self.reducers[i]
        }
    }
}

/// How the softmax partition is formed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MuControl {
    pub open: bool,
    /// Inputs forced to a zero mask and left out of the partition. Used to
    /// instrument "this stream carries no information" experiments.
    pub suppressed: Vec<usize>,
}

impl MuControl {
    pub fn open() -> Self {
        Self {
            open: true,
            suppressed: Vec::new(),
        }
    }

    pub fn closed() -> Self {
        Self::default()
    }

    pub fn with_open(open: bool) -> Self {
        Self {
            open,
            suppressed: Vec::new(),
        }
    }
}

pub struct MuOutput {
    pub outputs: Vec<Tensor>,
    /// One `H×W` mask per input; active masks sum to 1 at every location.
    pub masks: Vec<Tensor>,
}

/// Softmax partition of unity across inputs, each input reduced to one
/// channel first; output `i` is `mask_i ⊙ M_i`.
pub fn mu_infog_forward(inputs: &[Tensor], p: &MuInfogParams, control: &MuControl) -> Result<MuOutput> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::Usage("MU-InfoG needs at least one input".into()))?;
    let (_, h, w) = check_chw(first, "MU-InfoG input")?;
    if inputs.iter().any(|m| m.shape() != first.shape()) {
        return Err(shape_err!("MU-InfoG inputs must share one shape"));
    }
    if p.reducers.len() != 1 && p.reducers.len() != inputs.len() {
        return Err(shape_err!(
            "{} reducers for {} MU-InfoG inputs",
            p.reducers.len(),
            inputs.len()
        ));
    }
    let n = inputs.len();
    let active: Vec<usize> = (0..n).filter(|i| !control.suppressed.contains(i)).collect();
    let mut masks: Vec<Option<Tensor>> = vec![None; n];

    if control.open && !active.is_empty() {
        let reduced = active
            .iter()
            .map(|&i| {
                let (wk, b) = p.reducer(i);
                inputs[i].conv2d(wk, Some(b), 0)
            })
            .collect::<Result<Vec<_>>>()?;
        let soft = Tensor::concat(&reduced, 0)?.softmax(0)?;
        for (j, &i) in active.iter().enumerate() {
            masks[i] = Some(soft.slice(0, j, 1)?);
        }
    } else if !active.is_empty() {
        let uniform = Tensor::full(&[1, h, w], 1.0 / active.len() as f64);
        for &i in &active {
            masks[i] = Some(uniform.clone());
        }
    }

    let mut outputs = Vec::with_capacity(n);
    let mut flat_masks = Vec::with_capacity(n);
    for (m, mask) in inputs.iter().zip(masks) {
        match mask {
            Some(mask) => {
                outputs.push(m.mul(&mask)?);
                flat_masks.push(mask.reshape(&[h, w])?);
            }
            None => {
                outputs.push(Tensor::zeros(m.shape()));
                flat_masks.push(Tensor::zeros(&[h, w]));
            }
        }
    }
    Ok(MuOutput {
        outputs,
        masks: flat_masks,
    })
}

// ---------------------------------------------------------------------------
// GRU

#[derive(Debug, Clone)]
pub struct GruParams {
    /// `(d_h + d_x) × d_h` each; rows ordered `[hidden; input]`.
    pub wz: Tensor,
    pub bz: Tensor,
    pub wr: Tensor,
    pub br: Tensor,
    pub wh: Tensor,
    pub bh: Tensor,
}

impl GruParams {
    pub fn bind(scope: &ParamScope, prefix: &str) -> Result<Self> {
        let g = |n: &str| scope.get(&format!("{prefix}.{n}"));
        Ok(Self {
            wz: g("wz")?,
            bz: g("bz")?,
            wr: g("wr")?,
            br: g("br")?,
            wh: g("wh")?,
            bh: g("bh")?,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        let d_h = self.wz.shape()[1];
        (d_h, self.wz.shape()[0] - d_h)
    }
}

/// ```text
/// z  = σ(W_z [h; x] + b_z)
/// r  = σ(W_r [h; x] + b_r)
/// h̃  = tanh(W_h [r ⊙ h; x] + b_h)
/// h' = (1 − z) ⊙ h + z ⊙ h̃
/// ```
pub fn gru_cell(h_prev: &Tensor, x: &Tensor, p: &GruParams) -> Result<Tensor> {
    let (d_h, d_x) = p.dims();
    if h_prev.shape() != [d_h] || x.shape() != [d_x] {
        return Err(shape_err!(
            "GRU expects hidden [{}] and input [{}], got {:?} and {:?}",
            d_h,
            d_x,
            h_prev.shape(),
            x.shape()
        ));
    }
    let h = h_prev.reshape(&[1, d_h])?;
    let xr = x.reshape(&[1, d_x])?;
    let hx = Tensor::concat(&[h.clone(), xr.clone()], 1)?;
    let z = hx.linear(&p.wz, Some(&p.bz))?.sigmoid();
    let r = hx.linear(&p.wr, Some(&p.br))?.sigmoid();
    let rhx = Tensor::concat(&[r.mul(&h)?, xr], 1)?;
    let cand = rhx.linear(&p.wh, Some(&p.bh))?.tanh();
    let keep = z.neg().add_scalar(1.0).mul(&h)?;
    keep.add(&z.mul(&cand)?)?.reshape(&[d_h])
}

// ---------------------------------------------------------------------------
// MemoG

#[derive(Debug, Clone)]
pub struct MemogParams {
    /// Gate on the `d_h×1×1` hidden state.
    pub mo: MoInfogParams,
    /// One reduction shared by every frame of the window.
    pub tu: MuInfogParams,
    /// Flattened gated frame → GRU input, `F × d_x`.
    pub input_w: Tensor,
    pub input_b: Tensor,
    pub gru: GruParams,
}

pub struct MemogOutput {
    pub hidden: Tensor,
    /// Temporal-uncertainty masks over the window, oldest first; empty when
    /// TU is off.
    pub tu_masks: Vec<Tensor>,
}

/// One recurrent step: gate the previous state (long-term memory), weight the
/// current frame against the window (short-term memory), then a GRU update.
/// `window` is ordered oldest first; its last entry is the current frame.
pub fn memog_forward(h_prev: &Tensor, window: &[Tensor], gate: &GateConfig, p: &MemogParams) -> Result<MemogOutput> {
    let current = window
        .last()
        .ok_or_else(|| Error::Usage("MemoG window is empty".into()))?;
    let d_h = h_prev.numel();

    let h_gated = if gate.memog_open {
        mo_infog_forward(&h_prev.reshape(&[d_h, 1, 1])?, &p.mo)?.reshape(&[d_h])?
    } else {
        h_prev.clone()
    };

    let (x_gated, tu_masks) = if gate.temporal_uncertainty {
        let mu = mu_infog_forward(window, &p.tu, &MuControl::with_open(gate.memog_open))?;
        let x = mu.outputs.last().cloned().expect("non-empty window");
        (x, mu.masks)
    } else {
        (current.clone(), Vec::new())
    };

    let flat = x_gated.reshape(&[1, x_gated.numel()])?;
    let x_in = flat.linear(&p.input_w, Some(&p.input_b))?;
    let d_x = x_in.numel();
    let hidden = gru_cell(&h_gated, &x_in.reshape(&[d_x])?, &p.gru)?;
    Ok(MemogOutput { hidden, tu_masks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::unary::sigmoid;

    fn t(shape: &[usize], data: Vec<f64>) -> Tensor {
        Tensor::new(shape.to_vec(), data).unwrap()
    }

    fn zeros_spag(k: usize) -> SpagParams {
        SpagParams {
            kernel: Tensor::zeros(&[1, 2, k, k]),
            bias: Tensor::zeros(&[1]),
        }
    }

    #[test]
    fn spag_zero_weights_halves_input() {
        let s = t(&[2, 3, 3], (0..18).map(|v| v as f64 - 9.0).collect());
        let out = spag_forward(&s, &zeros_spag(7), true).unwrap();
        assert!(out.mask.unwrap().data().iter().all(|&v| v == 0.5));
        for (o, i) in out.output.data().iter().zip(s.data()) {
            assert_eq!(*o, 0.5 * i);
        }
    }

    #[test]
    fn spag_avg_branch_example() {
        let s = t(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let p = SpagParams {
            kernel: t(&[1, 2, 1, 1], vec![1.0, 0.0]),
            bias: Tensor::zeros(&[1]),
        };
        let out = spag_forward(&s, &p, true).unwrap();
        for (o, v) in out.output.data().iter().zip(s.data()) {
            assert_eq!(*o, sigmoid(*v) * v);
        }
        assert!((out.output.data()[0] - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn spag_closed_is_identity() {
        let s = t(&[2, 2, 2], vec![1.0, -2.0, 3.0, 0.5, 7.0, 1.0, 0.0, -1.0]);
        let out = spag_forward(&s, &zeros_spag(3), false).unwrap();
        assert!(out.output.ptr_eq(&s));
        assert!(out.mask.is_none());
    }

    #[test]
    fn mo_infog_examples() {
        let m = t(&[2, 1, 2], vec![-1.0, 0.5, 2.0, -3.0]);
        let eye = t(&[2, 2, 1, 1], vec![1.0, 0.0, 0.0, 1.0]);
        let p = MoInfogParams {
            wf: eye,
            bf: Tensor::zeros(&[2]),
            wg: Tensor::zeros(&[2, 2, 1, 1]),
            bg: Tensor::zeros(&[2]),
        };
        let out = mo_infog_forward(&m, &p).unwrap();
        for (o, v) in out.data().iter().zip(m.data()) {
            assert_eq!(*o, 0.5 * crate::tensor::unary::elu(*v));
        }
        let zero_in = mo_infog_forward(&Tensor::zeros(&[2, 1, 2]), &p).unwrap();
        assert!(zero_in.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mu_infog_examples() {
        let m = t(&[2, 2, 2], (0..8).map(|v| v as f64 * 0.3).collect());
        let shared = MuInfogParams {
            reducers: vec![(t(&[1, 2, 1, 1], vec![0.4, -0.2]), t(&[1], vec![0.1]))],
        };
        let out = mu_infog_forward(&[m.clone(), m.clone()], &shared, &MuControl::open()).unwrap();
        for mask in &out.masks {
            assert!(mask.data().iter().all(|&v| v == 0.5));
        }
        let single = mu_infog_forward(std::slice::from_ref(&m), &shared, &MuControl::open()).unwrap();
        assert!(single.masks[0].data().iter().all(|&v| v == 1.0));
        assert_eq!(single.outputs[0].data(), m.data());

        // reduced values (1, 0) at every location
        let ones = Tensor::full(&[1, 1, 1], 1.0);
        let zero = Tensor::zeros(&[1, 1, 1]);
        let ident = MuInfogParams {
            reducers: vec![(t(&[1, 1, 1, 1], vec![1.0]), Tensor::zeros(&[1]))],
        };
        let out = mu_infog_forward(&[ones, zero], &ident, &MuControl::open()).unwrap();
        assert!((out.masks[0].item() - 0.7311).abs() < 1e-4);
        assert!((out.masks[1].item() - 0.2689).abs() < 1e-4);
        assert!(mu_infog_forward(&[], &ident, &MuControl::open()).is_err());
    }

    #[test]
    fn mu_infog_closed_and_suppressed() {
        let m = t(&[1, 1, 2], vec![1.0, 2.0]);
        let p = MuInfogParams {
            reducers: vec![(t(&[1, 1, 1, 1], vec![3.0]), Tensor::zeros(&[1]))],
        };
        let inputs = vec![m.clone(), m.scale(2.0), m.scale(-1.0), m.scale(0.5)];
        let closed = mu_infog_forward(&inputs, &p, &MuControl::closed()).unwrap();
        assert!(closed.masks.iter().all(|k| k.data().iter().all(|&v| v == 0.25)));
        let ctl = MuControl {
            open: true,
            suppressed: vec![1],
        };
        let sup = mu_infog_forward(&inputs, &p, &ctl).unwrap();
        assert!(sup.masks[1].data().iter().all(|&v| v == 0.0));
        assert!(sup.outputs[1].data().iter().all(|&v| v == 0.0));
        for loc in 0..2 {
            let s: f64 = sup.masks.iter().map(|k| k.data()[loc]).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    fn zero_gru(d_h: usize, d_x: usize) -> GruParams {
        let w = || Tensor::zeros(&[d_h + d_x, d_h]);
        let b = || Tensor::zeros(&[d_h]);
        GruParams {
            wz: w(),
            bz: b(),
            wr: w(),
            br: b(),
            wh: w(),
            bh: b(),
        }
    }

    #[test]
    fn gru_zero_weights() {
        let p = zero_gru(3, 2);
        let h = Tensor::from_vec(vec![1.0, -2.0, 4.0]);
        let x = Tensor::from_vec(vec![5.0, 6.0]);
        let out = gru_cell(&h, &x, &p).unwrap();
        assert_eq!(out.data(), &[0.5, -1.0, 2.0]);
        let out0 = gru_cell(&Tensor::zeros(&[3]), &x, &p).unwrap();
        assert!(out0.data().iter().all(|&v| v == 0.0));
        assert!(gru_cell(&h, &Tensor::zeros(&[3]), &p).is_err());
    }

    #[test]
    fn gate_overrides() {
        let mut g = GateConfig::all_open();
        g.apply_override("spag=off").unwrap();
        g.apply_override("tu=off").unwrap();
        assert!(!g.spag_open && !g.temporal_uncertainty && g.memog_open);
        assert!(g.apply_override("bogus=on").is_err());
        assert!(g.apply_override("spag").is_err());
        assert_eq!(GateConfig::ablation_grid(true).len(), 8);
    }

    #[test]
    fn gate_config_serializes_as_four_booleans() {
        let s = serde_json::to_value(GateConfig::all_open()).unwrap();
        let keys: Vec<_> = s.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys.len(), 4);
        for k in ["spag", "memog", "mu_infog", "temporal_uncertainty"] {
            assert!(keys.contains(&k.to_string()));
        }
    }
}
