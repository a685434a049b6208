mod common;

use gatedap::gating::{
    memog_forward, mu_infog_forward, spag_forward, GateConfig, GruParams, MemogParams, MoInfogParams, MuControl,
    MuInfogParams, SpagParams,
};
use gatedap::model::{apply_gate_closing, forward_clip, init_params, ForwardOptions, ModelConfig};
use gatedap::train::PreparedClip;
use gatedap::{ParamScope, Tensor};
use proptest::prelude::*;

use common::pipeline::hand_composed;
use common::{small_clips, small_model};

fn tensor(shape: &[usize], data: Vec<f64>) -> Tensor {
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn values(n: usize, scale: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-scale..scale, n)
}

/// `n` inputs of `c×h×w` with either one shared or `n` separate reducers.
fn mu_case() -> impl Strategy<Value = (Vec<Tensor>, MuInfogParams, Vec<usize>)> {
    (1usize..6, 1usize..4, 1usize..6, 1usize..6, any::<bool>()).prop_flat_map(|(n, c, h, w, shared)| {
        let r = if shared { 1 } else { n };
        (
            prop::collection::vec(values(c * h * w, 4.0), n),
            prop::collection::vec((values(c, 3.0), -2.0..2.0f64), r),
            prop::collection::vec(0..n, 0..n),
        )
            .prop_map(move |(xs, reducers, suppressed)| {
                let inputs = xs.into_iter().map(|d| tensor(&[c, h, w], d)).collect();
                let reducers = reducers
                    .into_iter()
                    .map(|(wk, b)| (tensor(&[1, c, 1, 1], wk), tensor(&[1], vec![b])))
                    .collect();
                (inputs, MuInfogParams { reducers }, suppressed)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn mu_masks_partition_unity((inputs, params, _) in mu_case(), open in any::<bool>()) {
        let out = mu_infog_forward(&inputs, &params, &MuControl::with_open(open)).unwrap();
        let hw = out.masks[0].numel();
        for k in 0..hw {
            let s: f64 = out.masks.iter().map(|m| m.data()[k]).sum();
            prop_assert!((s - 1.0).abs() < 1e-9, "sum {s} at {k}");
        }
        for (o, (m, x)) in out.outputs.iter().zip(out.masks.iter().zip(&inputs)) {
            let c = x.shape()[0];
            for (i, v) in o.data().iter().enumerate() {
                prop_assert_eq!(*v, x.data()[i] * m.data()[i % hw]);
                let _ = c;
            }
        }
    }

    #[test]
    fn suppressed_inputs_get_zero_mask((inputs, params, suppressed) in mu_case(), open in any::<bool>()) {
        let control = MuControl { open, suppressed: suppressed.clone() };
        let out = mu_infog_forward(&inputs, &params, &control).unwrap();
        let active = (0..inputs.len()).filter(|i| !suppressed.contains(i)).count();
        let hw = out.masks[0].numel();
        for k in 0..hw {
            let s: f64 = out.masks.iter().map(|m| m.data()[k]).sum();
            let want = if active == 0 { 0.0 } else { 1.0 };
            prop_assert!((s - want).abs() < 1e-9);
        }
        for &i in &suppressed {
            prop_assert!(out.masks[i].data().iter().all(|&v| v == 0.0));
            prop_assert!(out.outputs[i].data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn closed_mu_is_uniform((inputs, params, _) in mu_case()) {
        let out = mu_infog_forward(&inputs, &params, &MuControl::closed()).unwrap();
        let n = inputs.len() as f64;
        for m in &out.masks {
            prop_assert!(m.data().iter().all(|&v| v == 1.0 / n));
        }
    }

    /// Permuting the inputs together with their reducers permutes the masks.
    #[test]
    fn mu_relabeling_equivariance((inputs, params, _) in mu_case(), rot in 0usize..5) {
        let n = inputs.len();
        let rot = rot % n;
        let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
        let p_inputs: Vec<Tensor> = perm.iter().map(|&i| inputs[i].clone()).collect();
        let p_params = MuInfogParams {
            reducers: if params.reducers.len() == 1 {
                params.reducers.clone()
            } else {
                perm.iter().map(|&i| params.reducers[i].clone()).collect()
            },
        };
        let a = mu_infog_forward(&inputs, &params, &MuControl::open()).unwrap();
        let b = mu_infog_forward(&p_inputs, &p_params, &MuControl::open()).unwrap();
        for (j, &i) in perm.iter().enumerate() {
            for (x, y) in a.masks[i].data().iter().zip(b.masks[j].data()) {
                prop_assert!((x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn spag_mask_strictly_inside_unit_interval(
        (c, h, w, k) in (1usize..4, 1usize..8, 1usize..8, prop::sample::select(vec![1usize, 3, 5, 7])),
        seed in any::<u64>(),
    ) {
        let mut state = seed | 1;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        let s = tensor(&[c, h, w], (0..c * h * w).map(|_| 3.0 * next()).collect());
        // Bounded pre-activations keep σ away from exact 0 and 1 in f64.
        let scale = 1.0 / (2 * k * k) as f64;
        let p = SpagParams {
            kernel: tensor(&[1, 2, k, k], (0..2 * k * k).map(|_| scale * next()).collect()),
            bias: tensor(&[1], vec![next()]),
        };
        let out = spag_forward(&s, &p, true).unwrap();
        let mask = out.mask.unwrap();
        prop_assert!(mask.data().iter().all(|&v| v > 0.0 && v < 1.0));
        prop_assert_eq!(mask.shape(), &[h, w]);
    }
}

fn memog_params(d_h: usize, d_x: usize, c: usize, hw: usize, salt: f64) -> MemogParams {
    let f = |n: usize, k: f64| {
        (0..n)
            .map(|i| ((i as f64 + k) * 0.61 + salt).sin() * 0.3)
            .collect::<Vec<_>>()
    };
    MemogParams {
        mo: MoInfogParams {
            wf: tensor(&[d_h, d_h, 1, 1], f(d_h * d_h, 1.0)),
            bf: tensor(&[d_h], f(d_h, 2.0)),
            wg: tensor(&[d_h, d_h, 1, 1], f(d_h * d_h, 3.0)),
            bg: tensor(&[d_h], f(d_h, 4.0)),
        },
        tu: MuInfogParams {
            reducers: vec![(tensor(&[1, c, 1, 1], f(c, 5.0)), tensor(&[1], f(1, 6.0)))],
        },
        input_w: tensor(&[c * hw, d_x], f(c * hw * d_x, 7.0)),
        input_b: tensor(&[d_x], f(d_x, 8.0)),
        gru: GruParams {
            wz: tensor(&[d_h + d_x, d_h], f((d_h + d_x) * d_h, 9.0)),
            bz: tensor(&[d_h], f(d_h, 10.0)),
            wr: tensor(&[d_h + d_x, d_h], f((d_h + d_x) * d_h, 11.0)),
            br: tensor(&[d_h], f(d_h, 12.0)),
            wh: tensor(&[d_h + d_x, d_h], f((d_h + d_x) * d_h, 13.0)),
            bh: tensor(&[d_h], f(d_h, 14.0)),
        },
    }
}

#[test]
fn memog_window_of_one_ignores_temporal_uncertainty() {
    let (d_h, d_x, c, h, w) = (6, 4, 3, 2, 3);
    for salt in [0.0, 0.4, 1.3] {
        let p = memog_params(d_h, d_x, c, h * w, salt);
        let h0 = tensor(&[d_h], (0..d_h).map(|i| (i as f64 * 0.9 + salt).cos()).collect());
        let x = tensor(
            &[c, h, w],
            (0..c * h * w).map(|i| (i as f64 * 0.37 - salt).sin()).collect(),
        );
        for memog_open in [true, false] {
            let with = GateConfig {
                memog_open,
                temporal_uncertainty: true,
                ..GateConfig::all_open()
            };
            let without = GateConfig {
                temporal_uncertainty: false,
                ..with
            };
            let a = memog_forward(&h0, std::slice::from_ref(&x), &with, &p).unwrap();
            let b = memog_forward(&h0, std::slice::from_ref(&x), &without, &p).unwrap();
            assert_eq!(a.hidden.data(), b.hidden.data());
            assert_eq!(a.tu_masks.len(), 1);
        }
    }
}

#[test]
fn model_with_one_frame_ignores_temporal_uncertainty() {
    let cfg = ModelConfig {
        clip_len: 1,
        ..small_model()
    };
    let store = init_params(&cfg, 4).unwrap();
    let clip = PreparedClip::new(&small_clips(&cfg, 1, 2)[0], &cfg).unwrap();
    let run = |tu: bool| {
        let model = apply_gate_closing(
            &cfg,
            GateConfig {
                temporal_uncertainty: tu,
                ..GateConfig::all_open()
            },
        );
        let scope = ParamScope::new(&store, false);
        forward_clip(&clip.inputs, &model, &scope, &ForwardOptions::eval())
            .unwrap()
            .prediction
            .into_vec()
    };
    assert_eq!(run(true), run(false));
}

#[test]
fn closed_gates_match_hand_composed_pipeline_bitwise() {
    let cfg = apply_gate_closing(&small_model(), GateConfig::all_closed(false));
    for seed in [1, 2, 3] {
        let store = init_params(&cfg, seed).unwrap();
        for sample in small_clips(&cfg, 2, seed) {
            let clip = PreparedClip::new(&sample, &cfg).unwrap();
            let scope = ParamScope::new(&store, false);
            let model = forward_clip(&clip.inputs, &cfg, &scope, &ForwardOptions::eval())
                .unwrap()
                .prediction
                .into_vec();
            let scope = ParamScope::new(&store, false);
            assert_eq!(model, hand_composed(&cfg, &clip, &scope));
        }
    }
}
