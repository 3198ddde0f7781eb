mod common;

use hmd_channel::denoise::{delay_eigen_profile, denoise, denoise_with_threshold, DenoiseParams};
use hmd_channel::eigengain::{compute_grids, EigenGainGrid};
use hmd_channel::geometry::{
    orientation_at, rows_for_config, ArrayLayout, MobilityPattern, Orientation, PanelConfig, PanelSet,
};
use hmd_channel::linalg::dominant_sq_singular_value;
use hmd_channel::metrics::{
    capacity_tradeoff, gain_tradeoff, minimal_service_tradeoff, rear_headband_profit, series_volatility,
    Autocorrelation, StdConvention,
};
use hmd_channel::stats::percentile;
use hmd_channel::synth::{band_limited_pulse, synthesize_snapshot, RenderSettings, SceneGenerator};
use hmd_channel::tensor::{CirSnapshot, ComplexTensor3, Dims3, MeasurementKey, Scenario};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{cgauss, random_cmatrix, rel_err, sorted_percentile};

fn key(i: u32) -> MeasurementKey {
    MeasurementKey::new(0, Scenario::Los, i)
}

fn random_cir(rng: &mut ChaCha8Rng, dims: Dims3, i: u32) -> CirSnapshot {
    let data = (0..dims.len()).map(|_| cgauss(rng)).collect();
    CirSnapshot::new(ComplexTensor3::from_vec(dims, data).unwrap(), 1.3e-9, key(i)).unwrap()
}

fn panel_set() -> impl Strategy<Value = PanelSet> {
    (1u8..=255).prop_map(PanelSet::from_mask)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn row_subset_never_exceeds_full(seed: u64, r in 1usize..12, c in 1usize..8, mask in 1u32..4096) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_cmatrix(&mut rng, r, c);
        let rows: Vec<usize> = (0..r).filter(|i| mask >> i & 1 == 1).collect();
        prop_assume!(!rows.is_empty());
        let full = dominant_sq_singular_value(&h).unwrap();
        let sub = dominant_sq_singular_value(&h.select_rows(&rows)).unwrap();
        prop_assert!(sub <= full * (1.0 + 1e-12));
    }

    #[test]
    fn scaling_by_c_scales_by_abs_c_squared(seed: u64, r in 1usize..12, c in 1usize..8, re in -5.0f64..5.0, im in -5.0f64..5.0) {
        prop_assume!(re.hypot(im) > 1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_cmatrix(&mut rng, r, c);
        let s = Complex64::new(re, im);
        let a = dominant_sq_singular_value(&h.scaled(s)).unwrap();
        let b = s.norm_sqr() * dominant_sq_singular_value(&h).unwrap();
        prop_assert!(rel_err(a, b) <= 1e-10);
    }

    #[test]
    fn percentile_is_the_nearest_rank(v in prop::collection::vec(-1e6f64..1e6, 1..300), q in 0.01f64..=100.0) {
        prop_assert_eq!(percentile(&v, q).unwrap(), sorted_percentile(&v, q));
    }

    #[test]
    fn fft_keeps_energy(seed: u64, taps in 1usize..64, pad in 0usize..32) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cir = random_cir(&mut rng, Dims3::new(2, 2, taps), 0);
        let ctf = cir.clone().into_ctf(taps + pad).unwrap();
        for rx in 0..2 {
            for tx in 0..2 {
                let t: f64 = cir.tensor.pair(rx, tx).iter().map(|z| z.norm_sqr()).sum();
                let f: f64 = ctf.tensor.pair(rx, tx).iter().map(|z| z.norm_sqr()).sum::<f64>() / (taps + pad) as f64;
                prop_assert!(rel_err(t, f) <= 1e-12);
            }
        }
    }

    #[test]
    fn rotations_are_orthonormal(yaw in -720.0f64..720.0, pitch in -90.0f64..90.0, initial in 0.0f64..360.0) {
        let r = Orientation::new(yaw, pitch).rotation(initial).into_inner();
        let e = r.transpose() * r - nalgebra::Matrix3::identity();
        prop_assert!(e.amax() <= 1e-12);
    }

    #[test]
    fn orientation_is_continuous(t in 0.0f64..32.999) {
        let p = MobilityPattern::default();
        let a = orientation_at(t, &p).unwrap();
        let b = orientation_at(t + 1e-3, &p).unwrap();
        prop_assert!((a.yaw_deg - b.yaw_deg).abs() <= 0.02);
        prop_assert!((a.pitch_deg - b.pitch_deg).abs() <= 0.02);
    }

    #[test]
    fn disjoint_panel_sets_have_disjoint_rows(a in panel_set(), b in panel_set()) {
        let layout = ArrayLayout::default();
        let ra = rows_for_config(&PanelConfig::custom(a).unwrap(), &layout).unwrap();
        let rb = rows_for_config(&PanelConfig::custom(b).unwrap(), &layout).unwrap();
        prop_assert_eq!(ra.len(), 32 * a.len());
        prop_assert!(ra.windows(2).all(|w| w[0] < w[1]));
        if a.mask() & b.mask() == 0 {
            prop_assert!(ra.iter().all(|r| !rb.contains(r)));
        }
    }

    #[test]
    fn pulse_has_unit_energy(delay in 0.0f64..300e-9) {
        let p = band_limited_pulse(delay, 1.3e-9, 256);
        let e: f64 = p.coeffs.iter().map(|c| c * c).sum();
        prop_assert!((e - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn autocorrelation_is_bounded(v in prop::collection::vec(-1e3f64..1e3, 2..50)) {
        match series_volatility(&v, StdConvention::Population).unwrap().2 {
            Autocorrelation::Defined(r) => prop_assert!(r.abs() <= 1.0),
            Autocorrelation::Undefined => {}
        }
    }

    #[test]
    fn constant_series_has_undefined_autocorrelation(c in -1e9f64..1e9, n in 2usize..60) {
        let (_, sd, r) = series_volatility(&vec![c; n], StdConvention::Population).unwrap();
        prop_assert_eq!(r, Autocorrelation::Undefined);
        prop_assert!(sd <= 1e-6 * c.abs().max(1.0));
    }
}

fn random_grid(rng: &mut ChaCha8Rng, config: PanelConfig, base: &[f64], spread: (f64, f64)) -> EigenGainGrid {
    let v = base.iter().map(|b| b * rng.random_range(spread.0..=spread.1)).collect();
    EigenGainGrid::new(config, vec![(0, Scenario::Los), (1, Scenario::Nlos)], 5, 16, v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn metrics_ignore_a_common_cell_scale(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base: Vec<f64> = (0..2 * 5 * 16).map(|_| rng.random_range(0.1..10.0)).collect();
        let g8 = random_grid(&mut rng, PanelConfig::full(), &base, (1.0, 1.0));
        let gp = random_grid(&mut rng, PanelConfig::forward(2).unwrap(), &base, (0.05, 1.0));
        let gb = random_grid(&mut rng, PanelConfig::backward(2).unwrap(), &base, (0.05, 1.0));
        let field: Vec<f64> = (0..base.len()).map(|_| rng.random_range(0.01..100.0)).collect();
        let scale = |g: &EigenGainGrid| {
            g.map_cells(|m, i, k, v| v * field[(m * 5 + i) * 16 + k]).unwrap()
        };
        let (s8, sp, sb) = (scale(&g8), scale(&gp), scale(&gb));
        let pairs = [
            (gain_tradeoff(&gp, &g8).unwrap(), gain_tradeoff(&sp, &s8).unwrap()),
            (capacity_tradeoff(&gp, &g8).unwrap(), capacity_tradeoff(&sp, &s8).unwrap()),
            (rear_headband_profit(&gb, &gp).unwrap(), rear_headband_profit(&sb, &sp).unwrap()),
        ];
        for (a, b) in &pairs {
            for (x, y) in a.values.iter().zip(&b.values) {
                // the capacity gap can sit near zero, so the bound is absolute below 1
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn minimal_service_ignores_a_uniform_scale(v in prop::collection::vec(0.01f64..100.0, 4..80), s in 0.001f64..1000.0) {
        let w: Vec<f64> = v.iter().map(|x| x * 0.5).collect();
        let a = minimal_service_tradeoff(&w, &v).unwrap();
        let sv: Vec<f64> = v.iter().map(|x| x * s).collect();
        let sw: Vec<f64> = w.iter().map(|x| x * s).collect();
        prop_assert!((minimal_service_tradeoff(&sw, &sv).unwrap() - a).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn nested_configs_are_monotone(seed: u64, a in panel_set(), extra in panel_set()) {
        let small = PanelConfig::custom(a).unwrap();
        let big = PanelConfig::custom(PanelSet::from_mask(a.mask() | extra.mask())).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = Dims3::new(64, 8, 256);
        let cirs: Vec<CirSnapshot> = (0..2)
            .map(|i| {
                // a strong early tap keeps pure-noise draws from de-noising to zero
                let mut c = random_cir(&mut rng, dims, i);
                for (rx, tx) in (0..64).flat_map(|r| (0..8).map(move |t| (r, t))) {
                    let z = c.tensor.get(rx, tx, 3) + cgauss(&mut rng) * 6.0;
                    c.tensor.set(rx, tx, 3, z);
                }
                c
            })
            .collect();
        let (g, _) = compute_grids(&cirs, &[small, big, PanelConfig::full()], &DenoiseParams::desk()).unwrap();
        let e_small = gain_tradeoff(&g[0], &g[2]).unwrap();
        let e_big = gain_tradeoff(&g[1], &g[2]).unwrap();
        for (s, b) in e_small.values.iter().zip(&e_big.values) {
            prop_assert!(*s > 0.0 && *s <= *b * (1.0 + 1e-12) && *b <= 1.0 + 1e-12);
        }
        for (x, y) in g[0].values().iter().zip(g[1].values()) {
            prop_assert!(*x <= *y * (1.0 + 1e-12));
        }
    }

    #[test]
    fn denoising_shrinks_support_and_is_stable(seed: u64, n_strong in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = Dims3::new(8, 4, 256);
        let mut cir = random_cir(&mut rng, dims, 0);
        for _ in 0..n_strong {
            let tap = rng.random_range(0..100);
            for rx in 0..8 {
                for tx in 0..4 {
                    let z = cir.tensor.get(rx, tx, tap) + cgauss(&mut rng) * 4.0;
                    cir.tensor.set(rx, tx, tap, z);
                }
            }
        }
        let p = DenoiseParams::desk();
        let (out, rep) = denoise(&cir, &p).unwrap();
        prop_assert!(rep.taps_kept <= 80);
        let before = delay_eigen_profile(&cir).unwrap();
        let after = delay_eigen_profile(&out).unwrap();
        for n in 0..256 {
            prop_assert!(!out.tensor.tap_is_nonzero(n) || cir.tensor.tap_is_nonzero(n));
            prop_assert!(after[n] <= before[n]);
        }
        prop_assert_eq!(&denoise_with_threshold(&out, &p, rep.threshold).unwrap().0, &out);
        prop_assert_eq!(&denoise(&out, &p).unwrap().0, &out);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn rendering_is_linear_in_the_path_list(seed: u64, split in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scene = SceneGenerator::default().generate(&mut rng, 0);
        let cut = split.min(scene.mpcs.len() - 1);
        let mut a = scene.clone();
        a.mpcs.truncate(cut);
        let mut b = scene.clone();
        b.mpcs.drain(..cut);
        let s = RenderSettings::desk();
        let p = MobilityPattern::default();
        let all = synthesize_snapshot(&scene, &p, &s, 0.0, 1, 17).unwrap();
        let ya = synthesize_snapshot(&a, &p, &s, 0.0, 1, 17).unwrap();
        let yb = synthesize_snapshot(&b, &p, &s, 0.0, 1, 17).unwrap();
        let scale = all.tensor.as_slice().iter().fold(0.0f64, |m, z| m.max(z.norm()));
        for ((z, x), y) in all.tensor.as_slice().iter().zip(ya.tensor.as_slice()).zip(yb.tensor.as_slice()) {
            prop_assert!((z - (x + y)).norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn path_gain_scale_carries_through_to_the_grid(seed: u64, re in 0.1f64..3.0, im in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scene = SceneGenerator::default().generate(&mut rng, 0);
        let c = Complex64::new(re, im);
        let mut scaled = scene.clone();
        scaled.mpcs.iter_mut().for_each(|m| m.gain *= c);
        let s = RenderSettings::desk();
        let p = MobilityPattern::default();
        let render = |sc| synthesize_snapshot(sc, &p, &s, 0.0, 3, 0).unwrap();
        let configs = [PanelConfig::forward(3).unwrap(), PanelConfig::full()];
        // Λ scales with |c|² as well, so the same taps survive
        let (g1, r1) = compute_grids(&[render(&scene)], &configs, &DenoiseParams::desk()).unwrap();
        let (g2, r2) = compute_grids(&[render(&scaled)], &configs, &DenoiseParams::desk()).unwrap();
        prop_assert_eq!(r1[0].taps_kept, r2[0].taps_kept);
        for (a, b) in g1.iter().zip(&g2) {
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!(rel_err(*y, c.norm_sqr() * x) <= 1e-9);
            }
        }
    }
}
