//! Named gradient checks for every differentiable op and module.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{grad_check_multi, grad_check_store, CheckInput, GradCheckReport};
use crate::decoder;
use crate::encoder::{self, tokens_to_grid, vit_block, BlockParams, EncoderConfig, PatchEmbedParams};
use crate::error::{Error, Result};
use crate::gating::{
    gru_cell, memog_forward, mo_infog_forward, mu_infog_forward, spag_forward, GateConfig, GruParams, MemogParams,
    MoInfogParams, MuControl, MuInfogParams, SpagParams,
};
use crate::loss::{joint_loss, LossConfig};
use crate::model::{self, forward_clip, ClipInputs, ForwardOptions, InfoType, ModelConfig};
use crate::params::ParamStore;
use crate::tensor::{NormMode, PoolKind, ReduceOp, Tensor};

const H: f64 = 1e-5;
/// Step for checks through ReLU networks, small enough that perturbations
/// rarely cross a kink.
const H_NET: f64 = 1e-7;
const SMOOTH: f64 = 1e-6;
const DEFAULT: f64 = 1e-4;

pub struct GradCase {
    pub name: &'static str,
    /// Default tolerance on the max relative error.
    pub tol: f64,
    run: fn(f64) -> Result<GradCheckReport>,
}

impl GradCase {
    pub fn run(&self, tol: Option<f64>) -> Result<GradCheckReport> {
        let mut r = (self.run)(tol.unwrap_or(self.tol))?;
        r.name = self.name.to_string();
        Ok(r)
    }
}

impl std::fmt::Debug for GradCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "GradCase({}, tol {:e})", self.name, self.tol)
    }
}

fn rng_for(name: &str) -> ChaCha8Rng {
    let h = name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    });
    ChaCha8Rng::seed_from_u64(h)
}

#[derive(Clone, Copy)]
enum Domain {
    Any,
    Positive,
    /// |x| ∈ [0.1, 2], for ops with a kink or pole at zero.
    AwayFromZero,
    /// A shuffled grid with spacing 0.05, so max has a unique winner.
    Distinct,
}

fn values(rng: &mut ChaCha8Rng, n: usize, d: Domain) -> Vec<f64> {
    match d {
        Domain::Any => (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
        Domain::Positive => (0..n).map(|_| rng.random_range(0.5..2.0)).collect(),
        Domain::AwayFromZero => (0..n)
            .map(|_| {
                let m = rng.random_range(0.1..2.0);
                if rng.random_bool(0.5) {
                    m
                } else {
                    -m
                }
            })
            .collect(),
        Domain::Distinct => {
            let mut v: Vec<f64> = (0..n).map(|i| 0.05 * i as f64 - 0.025 * n as f64).collect();
            v.shuffle(rng);
            v
        }
    }
}

fn input(rng: &mut ChaCha8Rng, shape: &[usize], d: Domain) -> CheckInput {
    CheckInput::new(shape, values(rng, shape.iter().product(), d))
}

/// Weighted sum with fixed pseudo-random weights, so that ops whose plain
/// sum is constant (softmax, normalization) still get a useful check.
fn probe(y: &Tensor) -> Result<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(y.numel() as u64);
    let w: Vec<f64> = (0..y.numel()).map(|_| rng.random_range(-1.0..1.0)).collect();
    Ok(y.mul(&Tensor::new(y.shape().to_vec(), w)?)?.sum_all())
}

fn merge(tol: f64, reports: Vec<GradCheckReport>) -> GradCheckReport {
    let max = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    GradCheckReport {
        name: String::new(),
        max_rel_error: max,
        tol,
        coordinates: reports.iter().map(|r| r.coordinates).sum(),
        passed: max < tol,
    }
}

const ELEMENTWISE_SHAPES: [&[usize]; 3] = [&[5], &[2, 3], &[2, 3, 4]];

fn unary(name: &str, tol: f64, d: Domain, op: fn(&Tensor) -> Result<Tensor>) -> Result<GradCheckReport> {
    let mut rng = rng_for(name);
    let reports = ELEMENTWISE_SHAPES
        .iter()
        .map(|s| {
            let x = input(&mut rng, s, d);
            grad_check_multi(name, |t| probe(&op(&t[0])?), &[x], H, tol)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(merge(tol, reports))
}

fn binary(name: &str, tol: f64, db: Domain, op: fn(&Tensor, &Tensor) -> Result<Tensor>) -> Result<GradCheckReport> {
    let mut rng = rng_for(name);
    let pairs: [(&[usize], &[usize]); 3] = [(&[2, 3], &[2, 3]), (&[3, 2, 2], &[2, 2]), (&[2, 1, 3], &[4, 1])];
    let reports = pairs
        .iter()
        .map(|(sa, sb)| {
            let a = input(&mut rng, sa, Domain::Any);
            let b = input(&mut rng, sb, db);
            grad_check_multi(name, |t| probe(&op(&t[0], &t[1])?), &[a, b], H, tol)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(merge(tol, reports))
}

/// Check `op` over several input sets; each set is a list of (shape, domain).
fn multi(
    name: &str,
    tol: f64,
    sets: &[&[(&[usize], Domain)]],
    op: &dyn Fn(usize, &[Tensor]) -> Result<Tensor>,
) -> Result<GradCheckReport> {
    let mut rng = rng_for(name);
    let reports = sets
        .iter()
        .enumerate()
        .map(|(k, set)| {
            let inputs: Vec<CheckInput> = set.iter().map(|(s, d)| input(&mut rng, s, *d)).collect();
            grad_check_multi(name, |t| probe(&op(k, t)?), &inputs, H, tol)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(merge(tol, reports))
}

use Domain::{Any, AwayFromZero, Distinct, Positive};

fn conv2d(tol: f64) -> Result<GradCheckReport> {
    // (c_in, size, c_out, k, padding)
    let cases = [(2, 5, 3, 3, 0), (1, 4, 2, 1, 0), (3, 6, 2, 5, 2), (2, 5, 1, 3, 1)];
    let mut rng = rng_for("conv2d");
    let reports = cases
        .iter()
        .map(|&(ci, n, co, k, pad)| {
            let x = input(&mut rng, &[ci, n, n], Any);
            let w = input(&mut rng, &[co, ci, k, k], Any);
            let b = input(&mut rng, &[co], Any);
            grad_check_multi(
                "conv2d",
                |t| probe(&t[0].conv2d(&t[1], Some(&t[2]), pad)?),
                &[x, w, b],
                H,
                tol,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(merge(tol, reports))
}

fn batchnorm(name: &str, tol: f64, mode: NormMode) -> Result<GradCheckReport> {
    let mut rng = rng_for(name);
    let shapes = [[2, 3, 3], [3, 2, 4], [1, 4, 4]];
    let reports = shapes
        .iter()
        .map(|s| {
            let c = s[0];
            let x = input(&mut rng, s, Any);
            let g = input(&mut rng, &[c], Positive);
            let b = input(&mut rng, &[c], Any);
            let mean = values(&mut rng, c, Any);
            let var = values(&mut rng, c, Positive);
            grad_check_multi(
                name,
                |t| probe(&t[0].batchnorm2d(&t[1], &t[2], &mean, &var, mode, 0.1)?.output),
                &[x, g, b],
                H,
                tol,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(merge(tol, reports))
}

fn spag(tol: f64) -> Result<GradCheckReport> {
    let mut rng = rng_for("spag");
    let reports = [(3, 4, 3), (2, 5, 5), (1, 3, 7)]
        .iter()
        .map(|&(c, n, k)| {
            let s = input(&mut rng, &[c, n, n], Distinct);
            let w = input(&mut rng, &[1, 2, k, k], Any);
            let b = input(&mut rng, &[1], Any);
            grad_check_multi(
                "spag",
                |t| {
                    let p = SpagParams {
                        kernel: t[1].clone(),
                        bias: t[2].clone(),
                    };
                    probe(&spag_forward(&t[0], &p, true)?.output)
                },
                &[s, w, b],
                H,
                tol,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(merge(tol, reports))
}

fn mo_params(t: &[Tensor]) -> MoInfogParams {
    MoInfogParams {
        wf: t[0].clone(),
        bf: t[1].clone(),
        wg: t[2].clone(),
        bg: t[3].clone(),
    }
}

fn mo_inputs(rng: &mut ChaCha8Rng, c: usize) -> Vec<CheckInput> {
    vec![
        input(rng, &[c, c, 1, 1], Any),
        input(rng, &[c], Any),
        input(rng, &[c, c, 1, 1], Any),
        input(rng, &[c], Any),
    ]
}

fn mo_infog(tol: f64) -> Result<GradCheckReport> {
    let mut rng = rng_for("mo_infog");
    let reports = [(3, 2), (1, 3), (4, 1)]
        .iter()
        .map(|&(c, n)| {
            let mut inputs = vec![input(&mut rng, &[c, n, n], Any)];
            inputs.extend(mo_inputs(&mut rng, c));
            grad_check_multi(
                "mo_infog",
                |t| probe(&mo_infog_forward(&t[0], &mo_params(&t[1..]))?),
                &inputs,
                H,
                tol,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(merge(tol, reports))
}

fn mu_infog(tol: f64) -> Result<GradCheckReport> {
    let mut rng = rng_for("mu_infog");
    // (streams, channels, size, shared reducer)
    let reports = [(3, 2, 3, false), (2, 1, 4, false), (4, 3, 2, true)]
        .iter()
        .map(|&(n, c, s, shared)| {
            let reducers = if shared { 1 } else { n };
            let mut inputs: Vec<CheckInput> = (0..n).map(|_| input(&mut rng, &[c, s, s], Any)).collect();
            for _ in 0..reducers {
                inputs.push(input(&mut rng, &[1, c, 1, 1], Any));
                inputs.push(input(&mut rng, &[1], Any));
            }
            grad_check_multi(
                "mu_infog",
                |t| {
                    let p = MuInfogParams {
                        reducers: t[n..].chunks(2).map(|r| (r[0].clone(), r[1].clone())).collect(),
                    };
                    let out = mu_infog_forward(&t[..n], &p, &MuControl::open())?;
                    probe(&Tensor::stack(&out.outputs)?)
                },
                &inputs,
                H,
                tol,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(merge(tol, reports))
}

fn gru_params(t: &[Tensor]) -> GruParams {
    GruParams {
        wz: t[0].clone(),
        bz: t[1].clone(),
        wr: t[2].clone(),
        br: t[3].clone(),
        wh: t[4].clone(),
        bh: t[5].clone(),
    }
}

fn gru_inputs(rng: &mut ChaCha8Rng, d_h: usize, d_x: usize) -> Vec<CheckInput> {
    let mut v = Vec::new();
    for _ in 0..3 {
        v.push(input(rng, &[d_h + d_x, d_h], Any));
        v.push(input(rng, &[d_h], Any));
    }
    v
}

fn gru(tol: f64) -> Result<GradCheckReport> {
    let mut rng = rng_for("gru");
    let reports = [(4, 3), (1, 1), (3, 5)]
        .iter()
        .map(|&(d_h, d_x)| {
            let mut inputs = vec![input(&mut rng, &[d_h], Any), input(&mut rng, &[d_x], Any)];
            inputs.extend(gru_inputs(&mut rng, d_h, d_x));
            grad_check_multi(
                "gru",
                |t| probe(&gru_cell(&t[0], &t[1], &gru_params(&t[2..]))?),
                &inputs,
                H,
                tol,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(merge(tol, reports))
}

fn memog(tol: f64) -> Result<GradCheckReport> {
    let mut rng = rng_for("memog");
    let (d_h, d_x, c, s) = (4, 3, 2, 2);
    let reports = [(3, true), (1, true), (2, false)]
        .iter()
        .map(|&(window, tu)| {
            let mut inputs = vec![input(&mut rng, &[d_h], Any)];
            inputs.extend((0..window).map(|_| input(&mut rng, &[c, s, s], Any)));
            inputs.extend(mo_inputs(&mut rng, d_h));
            inputs.push(input(&mut rng, &[1, c, 1, 1], Any));
            inputs.push(input(&mut rng, &[1], Any));
            inputs.push(input(&mut rng, &[c * s * s, d_x], Any));
            inputs.push(input(&mut rng, &[d_x], Any));
            inputs.extend(gru_inputs(&mut rng, d_h, d_x));
            let gate = GateConfig {
                temporal_uncertainty: tu,
                ..GateConfig::all_open()
            };
            grad_check_multi(
                "memog",
                |t| {
                    let p = &t[1 + window..];
                    let params = MemogParams {
                        mo: mo_params(&p[..4]),
                        tu: MuInfogParams {
                            reducers: vec![(p[4].clone(), p[5].clone())],
                        },
                        input_w: p[6].clone(),
                        input_b: p[7].clone(),
                        gru: gru_params(&p[8..]),
                    };
                    probe(&memog_forward(&t[0], &t[1..1 + window], &gate, &params)?.hidden)
                },
                &inputs,
                H,
                tol,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(merge(tol, reports))
}

fn patch_embed(tol: f64) -> Result<GradCheckReport> {
    let mut rng = rng_for("patch_embed");
    // (channels, size, patch, embed dim)
    let reports = [(2, 4, 2, 3), (3, 6, 3, 2), (1, 4, 4, 5)]
        .iter()
        .map(|&(c, n, p, d)| {
            let tokens = (n / p) * (n / p);
            let inputs = [
                input(&mut rng, &[c, n, n], Any),
                input(&mut rng, &[c * p * p, d], Any),
                input(&mut rng, &[d], Any),
                input(&mut rng, &[tokens, d], Any),
            ];
            grad_check_multi(
                "patch_embed",
                |t| {
                    let params = PatchEmbedParams {
                        weight: t[1].clone(),
                        bias: t[2].clone(),
                        pos: t[3].clone(),
                    };
                    probe(&encoder::patch_embed(&t[0], p, &params)?)
                },
                &inputs,
                H,
                tol,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(merge(tol, reports))
}

fn encoder_block(tol: f64) -> Result<GradCheckReport> {
    let mut rng = rng_for("encoder_block");
    // (tokens, dim, heads, mlp hidden)
    let reports = [(4, 4, 2, 8), (3, 6, 3, 4), (2, 2, 1, 3)]
        .iter()
        .map(|&(n, d, heads, m)| {
            let shapes: Vec<Vec<usize>> = vec![
                vec![n, d],
                vec![d],
                vec![d],
                vec![d, d],
                vec![d],
                vec![d, d],
                vec![d],
                vec![d, d],
                vec![d],
                vec![d, d],
                vec![d],
                vec![d],
                vec![d],
                vec![d, m],
                vec![m],
                vec![m, d],
                vec![d],
            ];
            let inputs: Vec<CheckInput> = shapes.iter().map(|s| input(&mut rng, s, Any)).collect();
            grad_check_multi(
                "encoder_block",
                |t| {
                    let p = BlockParams {
                        ln1_g: t[1].clone(),
                        ln1_b: t[2].clone(),
                        wq: t[3].clone(),
                        bq: t[4].clone(),
                        wk: t[5].clone(),
                        bk: t[6].clone(),
                        wv: t[7].clone(),
                        bv: t[8].clone(),
                        wo: t[9].clone(),
                        bo: t[10].clone(),
                        ln2_g: t[11].clone(),
                        ln2_b: t[12].clone(),
                        w1: t[13].clone(),
                        b1: t[14].clone(),
                        w2: t[15].clone(),
                        b2: t[16].clone(),
                    };
                    probe(&vit_block(&t[0], &p, heads)?)
                },
                &inputs,
                H,
                tol,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(merge(tol, reports))
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], d: Domain) -> Result<Tensor> {
    Tensor::new(shape.to_vec(), values(rng, shape.iter().product(), d))
}

fn decoder_case(tol: f64) -> Result<GradCheckReport> {
    let mut rng = rng_for("decoder");
    let reports = [(3, 4, 4, 2), (2, 3, 2, 3)]
        .iter()
        .map(|&(cin, width, patch, grid)| {
            let mut store = ParamStore::new(11);
            decoder::init_params(&mut store, cin, width, patch)?;
            let blocks = decoder::num_blocks(patch)?;
            let features = random_tensor(&mut rng, &[cin, grid, grid], Any)?;
            grad_check_store(
                "decoder",
                &store,
                |scope| {
                    probe(&decoder::decode_attention_map(
                        &features,
                        blocks,
                        scope,
                        NormMode::Train,
                    )?)
                },
                H_NET,
                tol,
                usize::MAX,
                0,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(merge(tol, reports))
}

/// Encoder and decoder at the desk configuration, on a seeded sample of
/// the parameters.
fn encoder_decoder(tol: f64) -> Result<GradCheckReport> {
    let mut rng = rng_for("encoder_decoder");
    let enc = EncoderConfig::desk();
    let mut store = ParamStore::new(12);
    encoder::init_params(&mut store, &enc)?;
    decoder::init_params(&mut store, enc.embed_dim, 32, enc.patch_size)?;
    let frame = random_tensor(&mut rng, &[enc.in_channels, enc.image_size, enc.image_size], Positive)?;
    let blocks = decoder::num_blocks(enc.patch_size)?;
    grad_check_store(
        "encoder_decoder",
        &store,
        |scope| {
            let grid = tokens_to_grid(&encoder::encode_frame(&frame, &enc, scope)?)?;
            probe(&decoder::decode_attention_map(&grid, blocks, scope, NormMode::Train)?)
        },
        H_NET,
        tol,
        64,
        3,
    )
}

fn tiny_model() -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            image_size: 8,
            patch_size: 4,
            in_channels: 3,
            embed_dim: 4,
            depth: 1,
            num_heads: 2,
            mlp_ratio: 2.0,
        },
        gate: GateConfig::all_open(),
        clip_len: 3,
        info_types: InfoType::ALL.to_vec(),
        gru_hidden: 8,
        gru_input: 3,
        decoder_width: 3,
        spag_kernel: 3,
        share_memog_mo: false,
    }
}

fn full_model(tol: f64) -> Result<GradCheckReport> {
    let mut rng = rng_for("full_model");
    let cfg = tiny_model();
    let store = model::init_params(&cfg, 13)?;
    let s = cfg.encoder.image_size;
    let mut streams = BTreeMap::new();
    for &t in &cfg.info_types {
        let frames = (0..cfg.clip_len)
            .map(|_| random_tensor(&mut rng, &[t.channels(), s, s], Any))
            .collect::<Result<Vec<_>>>()?;
        streams.insert(t, frames);
    }
    let inputs = ClipInputs { streams };
    grad_check_store(
        "full_model",
        &store,
        |scope| probe(&forward_clip(&inputs, &cfg, scope, &ForwardOptions::default())?.prediction),
        H_NET,
        tol,
        200,
        4,
    )
}

fn joint_loss_case(tol: f64) -> Result<GradCheckReport> {
    let mut rng = rng_for("joint_loss");
    let reports = [(5, 2), (4, 1), (6, 0)]
        .iter()
        .map(|&(n, fixations)| {
            let raw = values(&mut rng, n * n, Positive);
            let total: f64 = raw.iter().sum();
            let y = Tensor::new(vec![n, n], raw.iter().map(|v| v / total).collect())?;
            let mut p = vec![0.0; n * n];
            for i in 0..fixations {
                p[(i * 7 + 3) % (n * n)] = 1.0;
            }
            let p = Tensor::new(vec![n, n], p)?;
            let y_hat = CheckInput::new(&[n, n], (0..n * n).map(|_| rng.random_range(0.05..0.95)).collect());
            let cfg = LossConfig::default();
            grad_check_multi(
                "joint_loss",
                |t| Ok(joint_loss(&t[0], &y, &p, &cfg)?.total),
                &[y_hat],
                H,
                tol,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(merge(tol, reports))
}

macro_rules! case {
    ($name:expr, $tol:expr, $run:expr) => {
        GradCase {
            name: $name,
            tol: $tol,
            run: $run,
        }
    };
}

/// Every registered check, tensor ops first, then modules.
pub fn registry() -> Vec<GradCase> {
    vec![
        case!("sigmoid", SMOOTH, |tol| unary("sigmoid", tol, Any, |t| Ok(t.sigmoid()))),
        case!("elu", SMOOTH, |tol| unary("elu", tol, AwayFromZero, |t| Ok(t.elu()))),
        case!("relu", SMOOTH, |tol| unary("relu", tol, AwayFromZero, |t| Ok(t.relu()))),
        case!("tanh", SMOOTH, |tol| unary("tanh", tol, Any, |t| Ok(t.tanh()))),
        case!("log", SMOOTH, |tol| unary("log", tol, Positive, |t| t.log())),
        case!("negate", SMOOTH, |tol| unary("negate", tol, Any, |t| Ok(t.neg()))),
        case!("exp", SMOOTH, |tol| unary("exp", tol, Any, |t| Ok(t.exp()))),
        case!("sqrt", SMOOTH, |tol| unary("sqrt", tol, Positive, |t| t.sqrt())),
        case!("square", SMOOTH, |tol| unary("square", tol, Any, |t| Ok(t.square()))),
        case!("gelu", SMOOTH, |tol| unary("gelu", tol, Any, |t| Ok(t.gelu()))),
        case!("scale", SMOOTH, |tol| unary("scale", tol, Any, |t| Ok(t.scale(-1.7)))),
        case!("add_scalar", SMOOTH, |tol| unary("add_scalar", tol, Any, |t| Ok(
            t.add_scalar(0.3)
        ))),
        case!("add", SMOOTH, |tol| binary("add", tol, Any, |a, b| a.add(b))),
        case!("sub", SMOOTH, |tol| binary("sub", tol, Any, |a, b| a.sub(b))),
        case!("hadamard", SMOOTH, |tol| binary("hadamard", tol, Any, |a, b| a.mul(b))),
        case!("div", SMOOTH, |tol| binary("div", tol, AwayFromZero, |a, b| a.div(b))),
        case!("matmul", SMOOTH, |tol| multi(
            "matmul",
            tol,
            &[
                &[(&[3, 4], Any), (&[4, 2], Any)],
                &[(&[1, 5], Any), (&[5, 3], Any)],
                &[(&[4, 4], Any), (&[4, 4], Any)],
            ],
            &|_, t| t[0].matmul(&t[1])
        )),
        case!("transpose", SMOOTH, |tol| multi(
            "transpose",
            tol,
            &[&[(&[2, 3], Any)], &[(&[4, 1], Any)], &[(&[3, 3], Any)]],
            &|_, t| t[0].transpose()
        )),
        case!("linear", SMOOTH, |tol| multi(
            "linear",
            tol,
            &[
                &[(&[2, 3], Any), (&[3, 4], Any), (&[4], Any)],
                &[(&[1, 2], Any), (&[2, 2], Any), (&[2], Any)],
                &[(&[5, 1], Any), (&[1, 3], Any), (&[3], Any)],
            ],
            &|_, t| t[0].linear(&t[1], Some(&t[2]))
        )),
        case!("conv2d", SMOOTH, conv2d),
        case!("softmax", SMOOTH, |tol| multi(
            "softmax",
            tol,
            &[&[(&[4], Any)], &[(&[2, 3], Any)], &[(&[3, 2, 2], Any)]],
            &|k, t| t[0].softmax([0, 1, 0][k])
        )),
        case!("reduce_sum", SMOOTH, |tol| multi(
            "reduce_sum",
            tol,
            &[&[(&[5], Any)], &[(&[2, 3], Any)], &[(&[2, 3, 4], Any)]],
            &|k, t| t[0].reduce(ReduceOp::Sum, [None, Some(0), Some(2)][k])
        )),
        case!("reduce_mean", SMOOTH, |tol| multi(
            "reduce_mean",
            tol,
            &[&[(&[5], Any)], &[(&[2, 3], Any)], &[(&[2, 3, 4], Any)]],
            &|k, t| t[0].reduce(ReduceOp::Mean, [None, Some(1), Some(0)][k])
        )),
        case!("reduce_max", SMOOTH, |tol| multi(
            "reduce_max",
            tol,
            &[&[(&[5], Distinct)], &[(&[2, 3], Distinct)], &[(&[2, 3, 4], Distinct)]],
            &|k, t| t[0].reduce(ReduceOp::Max, [None, Some(0), Some(1)][k])
        )),
        case!("pool_avg", SMOOTH, |tol| multi(
            "pool_avg",
            tol,
            &[&[(&[1, 3, 3], Any)], &[(&[3, 2, 2], Any)], &[(&[4, 3, 3], Any)]],
            &|_, t| t[0].pool_channel(PoolKind::Avg)
        )),
        case!("pool_max", SMOOTH, |tol| multi(
            "pool_max",
            tol,
            &[
                &[(&[1, 3, 3], Distinct)],
                &[(&[3, 2, 2], Distinct)],
                &[(&[4, 3, 3], Distinct)]
            ],
            &|_, t| t[0].pool_channel(PoolKind::Max)
        )),
        case!("concat", SMOOTH, |tol| multi(
            "concat",
            tol,
            &[
                &[(&[2, 3], Any), (&[1, 3], Any)],
                &[(&[2, 2, 2], Any), (&[2, 1, 2], Any)],
                &[(&[3], Any), (&[2], Any)],
            ],
            &|k, t| Tensor::concat(t, [0, 1, 0][k])
        )),
        case!("stack", SMOOTH, |tol| multi(
            "stack",
            tol,
            &[
                &[(&[2, 2], Any), (&[2, 2], Any), (&[2, 2], Any)],
                &[(&[3], Any), (&[3], Any)],
                &[(&[1, 2, 2][..], Any); 4],
            ],
            &|_, t| Tensor::stack(t)
        )),
        case!("reshape", SMOOTH, |tol| multi(
            "reshape",
            tol,
            &[&[(&[2, 3], Any)], &[(&[2, 3, 4], Any)], &[(&[4], Any)]],
            &|k, t| t[0].reshape([&[3, 2][..], &[6, 4], &[2, 2]][k])
        )),
        case!("slice", SMOOTH, |tol| multi(
            "slice",
            tol,
            &[&[(&[5], Any)], &[(&[3, 4], Any)], &[(&[2, 3, 4], Any)]],
            &|k, t| {
                let (axis, start, len) = [(0, 1, 2), (1, 1, 2), (2, 0, 3)][k];
                t[0].slice(axis, start, len)
            }
        )),
        case!("gather", SMOOTH, |tol| multi(
            "gather",
            tol,
            &[&[(&[6], Any)], &[(&[2, 3], Any)], &[(&[2, 2, 2], Any)]],
            &|k, t| match k {
                0 => t[0].gather(&[4], vec![0, 2, 2, 5]),
                1 => t[0].gather(&[5], vec![5, 0, 1, 1, 3]),
                _ => t[0].gather(&[2, 4], (0..8).rev().collect()),
            }
        )),
        case!("upsample", SMOOTH, |tol| multi(
            "upsample",
            tol,
            &[&[(&[1, 1, 1], Any)], &[(&[2, 2, 3], Any)], &[(&[3, 3, 2], Any)]],
            &|_, t| t[0].upsample_nearest_2x()
        )),
        case!("batchnorm_train", SMOOTH, |tol| batchnorm(
            "batchnorm_train",
            tol,
            NormMode::Train
        )),
        case!("batchnorm_eval", SMOOTH, |tol| batchnorm(
            "batchnorm_eval",
            tol,
            NormMode::Eval
        )),
        case!("layernorm", SMOOTH, |tol| multi(
            "layernorm",
            tol,
            &[
                &[(&[3, 4], Any), (&[4], Positive), (&[4], Any)],
                &[(&[1, 5], Any), (&[5], Positive), (&[5], Any)],
                &[(&[4, 2], Any), (&[2], Positive), (&[2], Any)],
            ],
            &|_, t| t[0].layernorm(&t[1], &t[2])
        )),
        case!("spag", DEFAULT, spag),
        case!("mo_infog", DEFAULT, mo_infog),
        case!("mu_infog", DEFAULT, mu_infog),
        case!("gru", DEFAULT, gru),
        case!("memog", DEFAULT, memog),
        case!("patch_embed", DEFAULT, patch_embed),
        case!("encoder_block", DEFAULT, encoder_block),
        case!("decoder", DEFAULT, decoder_case),
        case!("encoder_decoder", DEFAULT, encoder_decoder),
        case!("joint_loss", DEFAULT, joint_loss_case),
        case!("full_model", DEFAULT, full_model),
    ]
}

/// A deliberately wrong backward pass (`x²` claiming `3x`), for testing
/// that the harness reports failures.
pub fn fault_injection_case() -> GradCase {
    case!("injected_fault", DEFAULT, |tol| {
        let bad = |t: &[Tensor]| -> Result<Tensor> {
            let x = t[0].clone();
            let y = Tensor::from_op(
                x.shape().to_vec(),
                x.data().iter().map(|v| v * v).collect(),
                vec![x.clone()],
                move |g| vec![Some(g.iter().zip(x.data()).map(|(g, v)| 3.0 * g * v).collect())],
            );
            Ok(y.sum_all())
        };
        grad_check_multi(
            "injected_fault",
            bad,
            &[CheckInput::new(&[3], vec![0.5, 1.0, -2.0])],
            H,
            tol,
        )
    })
}

/// `"all"` or a comma-separated list of case names.
pub fn select(spec: &str) -> Result<Vec<GradCase>> {
    let mut all = registry();
    if spec.trim() == "all" {
        return Ok(all);
    }
    let mut out = Vec::new();
    for name in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let i = all.iter().position(|c| c.name == name).ok_or_else(|| {
            let known: Vec<&str> = registry().iter().map(|c| c.name).collect();
            Error::Usage(format!("unknown gradient check '{name}'; known: {}", known.join(", ")))
        })?;
        out.push(all.remove(i));
    }
    if out.is_empty() {
        return Err(Error::Usage("no gradient checks selected".into()));
    }
    Ok(out)
}

pub fn run_cases(cases: &[GradCase], tol: Option<f64>) -> Result<Vec<GradCheckReport>> {
    cases.iter().map(|c| c.run(tol)).collect()
}
