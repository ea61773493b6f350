use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use proptest::prelude::*;

use revqc::circuits::{build_forward, build_qcnn, build_reversed};
use revqc::data::{fit_pca, ClassPair, PcaModel, RawDataset, Split, PIXELS};
use revqc::eval::{
    accuracy_from_expectations, aggregate, analytic_sampling_accuracy, distance_from_expectations,
};
use revqc::{AnsatzConfig, ConvKind, Direction, StateVector};

fn conv_kind() -> impl Strategy<Value = ConvKind> {
    prop_oneof![
        Just(ConvKind::Cnn7),
        Just(ConvKind::Cnn8),
        Just(ConvKind::Cnn9)
    ]
}

fn params(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0 * PI..2.0 * PI, n)
}

fn features() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..PI, 16)
}

fn labelled_expectations() -> impl Strategy<Value = Vec<(f64, u8)>> {
    prop::collection::vec((-1.0..1.0f64, 0u8..2), 1..60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn qcnn_preserves_norm(kind in conv_kind(), seed in params(51), x in features()) {
        let config = AnsatzConfig::new(kind, Direction::Forward);
        let p = &seed[..config.param_count()];
        let state = build_forward(&config, &x).unwrap().run(p).unwrap();
        prop_assert!((state.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reversed_readout_is_bounded(kind in conv_kind(), seed in params(51), x in features(), label in 0u8..2) {
        let config = AnsatzConfig::new(kind, Direction::Reversed);
        let p = &seed[..config.param_count()];
        let state = build_reversed(&config, &x, label).unwrap().run(p).unwrap();
        let z = state.z_expectations();
        prop_assert_eq!(z.len(), 8);
        for e in &z {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(e));
        }
        let d = distance_from_expectations(&z);
        prop_assert!((0.0..=PI * 8f64.sqrt() + 1e-9).contains(&d));
    }

    #[test]
    fn qcnn_then_adjoint_is_identity(kind in conv_kind(), seed in params(51), x in features()) {
        let config = AnsatzConfig::new(kind, Direction::Forward);
        let p = &seed[..config.param_count()];
        let embedded = build_forward(&config, &x).unwrap();
        let embedded = embedded.run(p).unwrap();
        let qcnn = build_qcnn(&config).unwrap();
        let mut back = embedded.clone();
        qcnn.adjoint().apply(&mut back, p).unwrap();
        qcnn.apply(&mut back, p).unwrap();
        prop_assert!((back.inner(&embedded).norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn accuracy_ignores_positive_rescaling(values in labelled_expectations(), scale in 0.01..1.0f64) {
        let (e, labels): (Vec<f64>, Vec<u8>) = values.into_iter().unzip();
        let scaled: Vec<f64> = e.iter().map(|v| v * scale).collect();
        prop_assert_eq!(
            accuracy_from_expectations(&e, &labels),
            accuracy_from_expectations(&scaled, &labels)
        );
        let a = analytic_sampling_accuracy(&e, &labels);
        prop_assert!((0.0..=1.0).contains(&a));
        // shrinking towards zero pulls the sampling accuracy towards chance
        let b = analytic_sampling_accuracy(&scaled, &labels);
        prop_assert!((b - 0.5).abs() <= (a - 0.5).abs() + 1e-12);
    }

    #[test]
    fn distance_is_phase_invariant(re in prop::collection::vec(-1.0..1.0f64, 16), im in prop::collection::vec(-1.0..1.0f64, 16), phase in 0.0..2.0 * PI) {
        let raw: Vec<Complex64> = re.iter().zip(&im).map(|(&a, &b)| Complex64::new(a, b)).collect();
        let norm = raw.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        prop_assume!(norm > 1e-3);
        let amps: Vec<Complex64> = raw.iter().map(|c| c / norm).collect();
        let rotated: Vec<Complex64> = amps.iter().map(|c| c * Complex64::from_polar(1.0, phase)).collect();
        let a = StateVector::from_amplitudes(amps).unwrap();
        let b = StateVector::from_amplitudes(rotated).unwrap();
        let (za, zb) = (a.z_expectations(), b.z_expectations());
        prop_assert!((distance_from_expectations(&za) - distance_from_expectations(&zb)).abs() < 1e-9);
    }

    #[test]
    fn aggregate_is_shift_equivariant(values in prop::collection::vec(0.0..1.0f64, 2..20), shift in -0.5..0.5f64) {
        let s = aggregate(&values).unwrap();
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(s.mean >= lo - 1e-12 && s.mean <= hi + 1e-12);
        prop_assert!(s.std >= 0.0);
        let moved: Vec<f64> = values.iter().map(|v| v + shift).collect();
        let t = aggregate(&moved).unwrap();
        prop_assert!((t.mean - s.mean - shift).abs() < 1e-12);
        prop_assert!((t.std - s.std).abs() < 1e-9);
    }
}

fn pca_fixture() -> &'static PcaModel {
    static MODEL: OnceLock<PcaModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let mut pixels = Vec::with_capacity(40 * PIXELS);
        let mut labels = Vec::new();
        for i in 0..40u32 {
            for p in 0..PIXELS as u32 {
                pixels.push(((p * (i % 7 + 1) + i * 31) % 251) as u8);
            }
            labels.push(if i % 2 == 0 { 2 } else { 5 });
        }
        let ds = RawDataset::new(pixels, labels, Split::Train).unwrap();
        fit_pca(&ds, ClassPair::new(2, 5).unwrap(), 16).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn features_stay_in_angle_range(image in prop::collection::vec(any::<u8>(), PIXELS)) {
        let model = pca_fixture();
        let f = model.normalize(&model.project(&image));
        prop_assert_eq!(f.len(), 16);
        for v in f {
            prop_assert!((0.0..=PI).contains(&v), "{}", v);
        }
    }
}
