use proptest::prelude::*;
use xpe_core::metrics::{
    complexity, gpc_from_changes, pearson, roar_s, shift_faithfulness, FaithConfig, FaithInstance, RoarConfig, DEFAULT_TAU,
};
use xpe_core::pipeline::MonitorConfig;
use xpe_core::shapley::{Estimator, PlayerKind};
use xpe_core::shiftgen::{apply_corruption, make_blobs, Corruption};
use xpe_core::{Attribution, Classifier, FeatureGrouping, Method, ModelKind, Result, Sequential, TrainConfig};

/// Two-class model with `-ln p_0(x) = a . x`, so class-0 cross-entropy is
/// exactly additive over features (inputs are kept positive).
struct Additive {
    a: Vec<f64>,
}

impl Classifier for Additive {
    fn input_dim(&self) -> usize {
        self.a.len()
    }

    fn class_count(&self) -> usize {
        2
    }

    fn predict_proba_batch(&self, rows: &[f64]) -> Result<Vec<f64>> {
        let d = self.a.len();
        Ok(rows
            .chunks_exact(d)
            .flat_map(|x| {
                let p0 = (-x.iter().zip(&self.a).map(|(u, w)| u * w).sum::<f64>()).exp();
                [p0, 1.0 - p0]
            })
            .collect())
    }
}

fn att(values: Vec<f64>) -> Attribution {
    Attribution {
        values,
        player_kind: PlayerKind::Features,
        method: Method::Xpe,
        estimator: Estimator::Exact,
        v_empty: 0.0,
        v_full: 1.0,
        degenerate: false,
    }
}

fn additive_case(a: &[f64], x_t: &[f64], pre: &[f64]) -> Vec<f64> {
    a.iter().zip(x_t.iter().zip(pre)).map(|(w, (t, s))| w * (t - s)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn perfectly_additive_attribution_is_faithful(
        a in prop::collection::vec(0.05f64..0.5, 6),
        x_t in prop::collection::vec(0.1f64..2.0, 6),
        pre in prop::collection::vec(0.1f64..2.0, 6),
        seed in any::<u64>(),
    ) {
        let phi = att(additive_case(&a, &x_t, &pre));
        prop_assume!(phi.values.iter().any(|v| v.abs() > 1e-3));
        let model = Additive { a };
        let cfg = FaithConfig::for_players(6);
        let inst = FaithInstance { x_t: &x_t, y_t: 0, pre_shift: &pre, y_s: 0 };
        let r = shift_faithfulness(&phi, &model, inst, &FeatureGrouping::identity(6), &cfg, seed).unwrap();
        prop_assume!(r.is_some());
        prop_assert!((r.unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn faithfulness_scales_and_flips(
        a in prop::collection::vec(0.05f64..0.5, 5),
        x_t in prop::collection::vec(0.1f64..2.0, 5),
        pre in prop::collection::vec(0.1f64..2.0, 5),
        noise in prop::collection::vec(-0.3f64..0.3, 5),
        scale in 0.01f64..100.0,
    ) {
        let base: Vec<f64> = additive_case(&a, &x_t, &pre).iter().zip(&noise).map(|(v, e)| v + e).collect();
        let model = Additive { a };
        let cfg = FaithConfig::for_players(5);
        let g = FeatureGrouping::identity(5);
        let inst = FaithInstance { x_t: &x_t, y_t: 0, pre_shift: &pre, y_s: 0 };
        let r = shift_faithfulness(&att(base.clone()), &model, inst, &g, &cfg, 3).unwrap();
        let scaled = shift_faithfulness(&att(base.iter().map(|v| v * scale).collect()), &model, inst, &g, &cfg, 3).unwrap();
        let negated = shift_faithfulness(&att(base.iter().map(|v| -v).collect()), &model, inst, &g, &cfg, 3).unwrap();
        match r {
            Some(r) => {
                prop_assert!((scaled.unwrap() - r).abs() < 1e-9);
                prop_assert!((negated.unwrap() + r).abs() < 1e-9);
            }
            None => prop_assert!(scaled.is_none() && negated.is_none()),
        }
    }

    #[test]
    fn complexity_is_bounded_and_order_free(values in prop::collection::vec(-5.0f64..5.0, 1..12), rot in 0usize..12) {
        prop_assume!(values.iter().any(|v| *v != 0.0));
        let c = complexity(&att(values.clone())).unwrap();
        prop_assert!(c >= 0.0 && c <= (values.len() as f64).ln() + 1e-12);
        let mut r = values.clone();
        let len = r.len();
        r.rotate_left(rot % len);
        r.reverse();
        prop_assert!((complexity(&att(r)).unwrap() - c).abs() < 1e-12);
    }

    #[test]
    fn gpc_is_one_under_exact_linear_agreement(
        d in prop::collection::vec(-3.0f64..3.0, 3..30),
        k in 0.1f64..10.0,
        c in -5.0f64..5.0,
    ) {
        let phi: Vec<f64> = d.iter().map(|v| k * v + c).collect();
        if let Some(r) = gpc_from_changes(&phi, &d).unwrap() {
            prop_assert!((r - 1.0).abs() < 1e-9);
            prop_assert_eq!(Some(r), pearson(&phi, &d));
        }
    }
}

fn roar_scenario() -> xpe_core::metrics::ShiftScenario {
    let ds = make_blobs(120, 4, 2, 3.0, 1.0, 21).unwrap();
    let mut sc = apply_corruption(&ds, Corruption::Brightness { offset: Some(3.0) }, &[0, 1], 5).unwrap();
    sc.n_train = Some(60);
    sc
}

fn roar_config(fraction: f64, method: Method) -> RoarConfig {
    let mut monitor = MonitorConfig::new(method, FeatureGrouping::identity(4), 2);
    monitor.estimator.exact_cap = 12;
    RoarConfig {
        model_kind: ModelKind::LogisticRegression,
        train: TrainConfig { seed: 4, ..TrainConfig::default() },
        removal_fraction: fraction,
        monitor,
        tau: DEFAULT_TAU,
    }
}

#[test]
fn roar_without_removal_keeps_the_gap() {
    let sc = roar_scenario();
    let (tr, te) = sc.split_default().unwrap();
    let out = roar_s(&tr, &te, &roar_config(0.0, Method::Xpe), &Sequential).unwrap();
    assert!(out.l_t > out.l_s);
    assert!((out.roar_s - 1.0).abs() < 1e-12, "{out:?}");
}

#[test]
fn roar_is_deterministic_and_nonnegative() {
    let sc = roar_scenario();
    let (tr, te) = sc.split_default().unwrap();
    for method in [Method::Xpe, Method::Random] {
        let a = roar_s(&tr, &te, &roar_config(0.25, method), &Sequential).unwrap();
        let b = roar_s(&tr, &te, &roar_config(0.25, method), &Sequential).unwrap();
        assert_eq!(a, b);
        assert!(a.roar_s >= 0.0);
    }
}

#[test]
fn roar_rejects_null_shift() {
    let ds = make_blobs(80, 3, 2, 3.0, 1.0, 2).unwrap();
    let sc = apply_corruption(&ds, Corruption::Brightness { offset: Some(0.0) }, &[0], 5).unwrap();
    let (tr, te) = sc.split(40).unwrap();
    let err = roar_s(&tr, &te, &roar_config(0.1, Method::Xpe), &Sequential).unwrap_err();
    assert!(err.to_string().contains("shift has no measurable effect"), "{err}");
}
