//! Finite-difference checks of every tape primitive, the samplers, the
//! decoders, and the full objective.

mod common;

use common::{contract, objective_suite, primitive_suite, GRAD_STEP, GRAD_TOL};
use lnmask::autodiff::{grad_check, grad_check_many, Tensor};
use lnmask::distributions::StretchConfig;
use lnmask::model::{init_decoder, DecoderKind};
use lnmask::rng::{seeded, uniform_tensor};
use lnmask::samplers::{init_sampler, SamplerKind};

#[test]
fn every_primitive() {
    for (name, err) in primitive_suite() {
        assert!(err < GRAD_TOL, "{name}: relative error {err}");
    }
}

#[test]
fn full_objective_all_samplers_and_decoders() {
    for (name, err) in objective_suite() {
        assert!(err < GRAD_TOL, "{name}: relative error {err}");
    }
}

#[test]
fn sampler_mean_stretched_mask() {
    for kind in SamplerKind::ALL {
        let sampler = init_sampler(kind, 5, 3, 4, 8).unwrap();
        let noise = sampler.draw_noise(&mut seeded(9, 1), 3);
        let cfg = StretchConfig { lambda_temp: kind.default_temperature(), ..StretchConfig::default() };
        let params: Vec<Tensor> = sampler.params().into_iter().cloned().collect();
        let err = grad_check_many(
            |t, v| {
                let out = sampler.forward(t, v, &noise, &cfg)?;
                t.mean(out.stretched)
            },
            &params,
            GRAD_STEP,
        )
        .unwrap();
        assert!(err < GRAD_TOL, "{kind}: relative error {err}");
    }
}

#[test]
fn decoder_mean_output() {
    for dkind in [DecoderKind::Mlp, DecoderKind::ConvResnet] {
        let mut dec = init_decoder(dkind, 6, 4, &mut seeded(3, 0)).unwrap();
        for (i, p) in dec.params_mut().into_iter().enumerate() {
            if i % 2 == 1 {
                *p = uniform_tensor(&mut seeded(100 + i as u64, 0), p.shape(), 0.2);
            }
        }
        let x = uniform_tensor(&mut seeded(4, 0), &[2, 6, 6], 1.0);
        let params: Vec<Tensor> = dec.params().into_iter().cloned().collect();
        let err = grad_check_many(
            |t, v| {
                let xv = t.leaf(x.clone());
                let y = dec.forward(t, v, xv)?;
                t.mean(y)
            },
            &params,
            GRAD_STEP,
        )
        .unwrap();
        assert!(err < GRAD_TOL, "{dkind}: relative error {err}");
        // and with respect to the observed input
        let err = grad_check(
            |t, xv| {
                let vars = dec.bind(t);
                let y = dec.forward(t, &vars, xv)?;
                contract(t, y, 5)
            },
            &x,
            GRAD_STEP,
        )
        .unwrap();
        assert!(err < GRAD_TOL, "{dkind} input: relative error {err}");
    }
}
