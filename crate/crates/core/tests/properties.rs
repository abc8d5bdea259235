use num_complex::Complex64;
use proptest::prelude::*;

use randscat::domain::{fourier_transform_real, weighted_norm, FieldOnGrid, GridSpec, WeightedNormSpec};
use randscat::forward::{DatasetConfig, FarFieldDataset, FarFieldRecord, Mode, SolverSettings};
use randscat::greens::{ResolventMethod, ResolventOperator, WaveNumber};
use randscat::inverse::{invert_polar, make_direction_triple, BandSchedule, PolarGrid, PolarSamples};
use randscat::noise::{draw_noise, voxel_normal};

fn grid8() -> GridSpec {
    GridSpec::cube(0.5, 8).unwrap()
}

fn vec3(lim: f64) -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(-lim..lim)
}

fn unit() -> impl Strategy<Value = [f64; 3]> {
    vec3(1.0).prop_filter("nonzero", |v| v.iter().map(|c| c * c).sum::<f64>() > 1e-4).prop_map(|v| {
        let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        v.map(|c| c / n)
    })
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn transform_of_real_field_is_conjugate_symmetric(values in prop::collection::vec(-1.0f64..1.0, 512), p in vec3(20.0)) {
        let g = grid8();
        let a = fourier_transform_real(&g, &values, p).unwrap();
        let b = fourier_transform_real(&g, &values, p.map(|c| -c)).unwrap();
        prop_assert!((a - b.conj()).norm() <= 1e-12 * (1.0 + a.norm()));
    }

    #[test]
    fn resolvent_is_linear_and_its_kernel_symmetric(
        k in 0.5f64..10.0,
        re in prop::collection::vec(-1.0f64..1.0, 1024),
        alpha in (-2.0f64..2.0, -2.0f64..2.0),
        i in 0usize..512,
        j in 0usize..512,
    ) {
        let g = grid8();
        let r = ResolventOperator::new(g, WaveNumber::new(k).unwrap(), ResolventMethod::FastConvolution);
        let phi: Vec<Complex64> = re[..512].iter().zip(&re[512..]).map(|(a, b)| Complex64::new(*a, *b)).collect();
        let psi: Vec<Complex64> = re[512..].iter().map(|a| Complex64::new(0.0, *a)).collect();
        let alpha = Complex64::new(alpha.0, alpha.1);
        let mixed: Vec<Complex64> = phi.iter().zip(&psi).map(|(a, b)| alpha * a + b).collect();
        let lhs = r.apply_values(&mixed);
        let (rp, rq) = (r.apply_values(&phi), r.apply_values(&psi));
        let diff: Vec<Complex64> = lhs.iter().zip(rp.iter().zip(&rq)).map(|(l, (a, b))| l - alpha * a - b).collect();
        prop_assert!(norm(&diff) <= 1e-10 * (1.0 + norm(&lhs)));
        prop_assert_eq!(r.weight(i, j), r.weight(j, i));
    }

    #[test]
    fn direction_triples_are_unit_and_hit_the_frequency(p in vec3(10.0), excess in 0.01f64..50.0) {
        let pn = p.iter().map(|c| c * c).sum::<f64>().sqrt();
        let k = pn / 2.0 + excess;
        let t = make_direction_triple(p, WaveNumber::new(k).unwrap()).unwrap();
        for v in [t.xhat, t.d1, t.d2] {
            prop_assert!((v.iter().map(|c| c * c).sum::<f64>().sqrt() - 1.0).abs() < 1e-12);
        }
        for c in 0..3 {
            prop_assert!((k * (t.xhat[c] - t.d1[c]) - p[c]).abs() < 1e-9 * (1.0 + k));
        }
        if pn > 1e-9 {
            for c in 0..3 {
                prop_assert!((t.d2[c] - p[c] / pn).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn weighted_norm_grows_with_the_exponent(values in prop::collection::vec(-1.0f64..1.0, 512), s in -3.0f64..3.0, ds in 0.0f64..2.0) {
        let g = GridSpec::cube(4.0, 8).unwrap();
        let f = FieldOnGrid::from_real(g, &values).unwrap();
        let lo = weighted_norm(&f, &WeightedNormSpec::new(s, 0.1).unwrap());
        let hi = weighted_norm(&f, &WeightedNormSpec::new(s + ds, 0.1).unwrap());
        prop_assert!(lo <= hi * (1.0 + 1e-12));
    }

    #[test]
    fn noise_draws_depend_only_on_seed_and_voxel(seed in any::<u64>(), i in 0usize..512, h in 0.05f64..0.5) {
        let a = draw_noise(&grid8(), seed);
        let b = draw_noise(&GridSpec::cube_with_spacing(h, 8).unwrap(), seed);
        let ha = grid8().voxel_volume().sqrt();
        prop_assert!((a.values()[i] - ha * voxel_normal(seed, i)).abs() < 1e-12);
        prop_assert!((b.values()[i] / h.powf(1.5) - a.values()[i] / ha).abs() < 1e-9);
    }

    #[test]
    fn dataset_files_round_trip(raw in prop::collection::btree_map((1u32..1000, 0u64..4), (unit(), any::<bool>(), -5.0f64..5.0, -5.0f64..5.0), 1..40)) {
        let records: Vec<FarFieldRecord> = raw
            .iter()
            .map(|(&(k, seed), &(xhat, noisy, re, im))| FarFieldRecord {
                xhat,
                k: k as f64 * 0.25,
                d: None,
                seed: noisy.then_some(seed),
                value: Complex64::new(re, im),
            })
            .collect();
        let config = DatasetConfig { mode: Mode::Passive, settings: SolverSettings::default() };
        let Ok(ds) = FarFieldDataset::new(records, "scene", config) else {
            // Two keys collapsed onto the same (k, x̂, seed) tuple.
            return Ok(());
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        ds.write(&path).unwrap();
        let back = FarFieldDataset::read(&path).unwrap();
        prop_assert_eq!(back.records(), ds.records());
        prop_assert_eq!(back.to_bytes().unwrap(), ds.to_bytes().unwrap());
    }

    #[test]
    fn schedule_wave_numbers_are_sorted_and_complete(
        bands in prop::collection::btree_set(1u32..60, 1..4),
        taus in prop::collection::vec(0.0f64..5.0, 0..4),
        n_k in 8usize..16,
    ) {
        let bands: Vec<f64> = bands.into_iter().map(|b| b as f64).collect();
        let schedule = BandSchedule::from_bands(0.1, &bands, n_k).unwrap();
        let ks = schedule.wavenumbers(&taus);
        prop_assert!(ks.windows(2).all(|w| w[0] < w[1]));
        for &b in &bands {
            for node in randscat::inverse::band_nodes(b, n_k) {
                for shift in std::iter::once(0.0).chain(taus.iter().copied()) {
                    let want = node + shift;
                    prop_assert!(ks.iter().any(|k| (k - want).abs() <= 1e-9 * want.max(1.0)));
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn polar_inversion_is_real_linear(
        a in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 64),
        b in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 64),
        scale in -3.0f64..3.0,
    ) {
        let g = GridSpec::cube(0.5, 8).unwrap();
        let polar = PolarGrid::uniform(20.0, 4, 16).unwrap();
        let to_c = |v: &[(f64, f64)]| v.iter().map(|&(r, i)| Complex64::new(r, i)).collect::<Vec<_>>();
        let (ca, cb) = (to_c(&a), to_c(&b));
        let mix: Vec<Complex64> = ca.iter().zip(&cb).map(|(x, y)| x * scale + y).collect();
        let inv = |v: Vec<Complex64>| invert_polar(&PolarSamples::new(polar.clone(), v).unwrap(), &g).unwrap().field;
        let (fa, fb, fm) = (inv(ca), inv(cb), inv(mix));
        for ((x, y), m) in fa.values().iter().zip(fb.values()).zip(fm.values()) {
            prop_assert!(x.im == 0.0 && y.im == 0.0 && m.im == 0.0);
            prop_assert!((m - (x * scale + y)).norm() <= 1e-9 * (1.0 + m.norm()));
        }
    }
}
