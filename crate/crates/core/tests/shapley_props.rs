use proptest::prelude::*;
use xpe_core::shapley::{exact_shapley, kernel_shapley, FnGame, ShiftMethod, ValueFunctionSpec, ValueKind};
use xpe_core::{Coalition, CoalitionGame, FeatureGrouping, GroupingKind, LossKind, ModelKind, TrainConfig, TrainedModel};

fn mask_of(c: &Coalition) -> usize {
    c.members().map(|i| 1usize << i).sum()
}

fn table_game(g: usize, table: Vec<f64>) -> FnGame<impl Fn(&Coalition) -> f64> {
    FnGame::new(g, move |c: &Coalition| table[mask_of(c)])
}

fn games() -> impl Strategy<Value = (usize, Vec<f64>)> {
    (2usize..=8).prop_flat_map(|g| (Just(g), prop::collection::vec(-5.0f64..5.0, 1 << g)))
}

/// Direct permutation-free formula: sum over coalitions not containing i.
fn oracle(g: usize, table: &[f64]) -> Vec<f64> {
    let fact = |k: usize| (1..=k).map(|x| x as f64).product::<f64>();
    (0..g)
        .map(|i| {
            (0..1usize << g)
                .filter(|m| m & (1 << i) == 0)
                .map(|m| {
                    let s = m.count_ones() as usize;
                    fact(s) * fact(g - s - 1) / fact(g) * (table[m | (1 << i)] - table[m])
                })
                .sum()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_matches_formula_and_is_efficient((g, table) in games()) {
        let phi = exact_shapley(&table_game(g, table.clone())).unwrap();
        let want = oracle(g, &table);
        for i in 0..g {
            prop_assert!((phi.values[i] - want[i]).abs() <= 1e-9);
        }
        prop_assert!((phi.sum() - (table[(1 << g) - 1] - table[0])).abs() <= 1e-9);
    }

    #[test]
    fn dummy_player_gets_zero((g, table) in games(), dummy in 0usize..8) {
        let dummy = dummy % g;
        let t = table.clone();
        let game = FnGame::new(g, move |c: &Coalition| t[mask_of(c) & !(1 << dummy)]);
        let phi = exact_shapley(&game).unwrap();
        prop_assert!(phi.values[dummy].abs() <= 1e-9);
    }

    #[test]
    fn interchangeable_players_share((g, table) in games()) {
        let swap = |m: usize| {
            let (a, b) = (m & 1, (m >> 1) & 1);
            (m & !3) | (a << 1) | b
        };
        let t = table.clone();
        let game = FnGame::new(g, move |c: &Coalition| {
            let m = mask_of(c);
            t[m] + t[swap(m)]
        });
        let phi = exact_shapley(&game).unwrap();
        prop_assert!((phi.values[0] - phi.values[1]).abs() <= 1e-9);
    }

    #[test]
    fn linearity((g, a) in games(), b in prop::collection::vec(-5.0f64..5.0, 256)) {
        let b: Vec<f64> = b[..1 << g].to_vec();
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let pa = exact_shapley(&table_game(g, a)).unwrap();
        let pb = exact_shapley(&table_game(g, b)).unwrap();
        let ps = exact_shapley(&table_game(g, sum)).unwrap();
        for i in 0..g {
            prop_assert!((ps.values[i] - pa.values[i] - pb.values[i]).abs() <= 1e-9);
        }
    }

    #[test]
    fn kernel_is_efficient((g, table) in games(), seed in any::<u64>()) {
        let phi = kernel_shapley(&table_game(g, table.clone()), 40, seed).unwrap();
        prop_assert!((phi.sum() - (table[(1 << g) - 1] - table[0])).abs() <= 1e-9);
    }

    #[test]
    fn null_shift_attributions_are_exactly_zero(
        x in prop::collection::vec(-3.0f64..3.0, 4),
        w in prop::collection::vec(-2.0f64..2.0, 12),
        label in 0usize..3,
    ) {
        let mut m = TrainedModel::initialize(ModelKind::LogisticRegression, 4, 3, &TrainConfig::default());
        m.layers[0].weights = w;
        let grouping = FeatureGrouping::identity(4);
        for kind in [
            ValueKind::XpeLoss { x_t: &x, x_s: &x, label, loss: LossKind::CrossEntropy },
            ValueKind::XppeEntropy { x_t: &x, x_s: &x },
        ] {
            let phi = exact_shapley(&ValueFunctionSpec::new(&m, &grouping, kind).unwrap()).unwrap();
            prop_assert!(phi.values.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn singleton_groups_equal_features(
        x_t in prop::collection::vec(-3.0f64..3.0, 5),
        x_s in prop::collection::vec(-3.0f64..3.0, 5),
        w in prop::collection::vec(-2.0f64..2.0, 10),
    ) {
        let mut m = TrainedModel::initialize(ModelKind::LogisticRegression, 5, 2, &TrainConfig::default());
        m.layers[0].weights = w;
        let ident = FeatureGrouping::identity(5);
        let blocks = FeatureGrouping::new(5, GroupingKind::ContiguousBlocks(1)).unwrap();
        let kind = ValueKind::XppeEntropy { x_t: &x_t, x_s: &x_s };
        let a = exact_shapley(&ValueFunctionSpec::new(&m, &ident, kind).unwrap()).unwrap();
        let b = exact_shapley(&ValueFunctionSpec::new(&m, &blocks, kind).unwrap()).unwrap();
        prop_assert_eq!(a.values, b.values);
    }
}

#[test]
fn kernel_error_shrinks_with_budget() {
    use rand::{Rng, SeedableRng};
    let g = 10;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    let tables: Vec<Vec<f64>> = (0..5)
        .map(|_| {
            // mildly non-additive games: additive part plus pairwise interactions
            let w: Vec<f64> = (0..g).map(|_| rng.random_range(-1.0..1.0)).collect();
            let pair: Vec<f64> = (0..g * g).map(|_| rng.random_range(-0.3..0.3)).collect();
            (0..1usize << g)
                .map(|m| {
                    let mut v = 0.0;
                    for i in 0..g {
                        if m >> i & 1 == 1 {
                            v += w[i];
                            for j in i + 1..g {
                                if m >> j & 1 == 1 {
                                    v += pair[i * g + j];
                                }
                            }
                        }
                    }
                    v
                })
                .collect()
        })
        .collect();
    let mut errors = Vec::new();
    for k in 4..=10 {
        let budget = 1usize << k;
        let mut total = 0.0;
        for table in &tables {
            let exact = exact_shapley(&table_game(g, table.clone())).unwrap();
            for seed in 0..20u64 {
                let est = kernel_shapley(&table_game(g, table.clone()), budget, seed).unwrap();
                total += est.values.iter().zip(&exact.values).map(|(a, b)| (a - b).abs()).sum::<f64>() / g as f64;
            }
        }
        errors.push(total / (20.0 * tables.len() as f64));
    }
    for w in errors.windows(2) {
        assert!(w[1] < w[0], "error did not decrease: {errors:?}");
    }
    assert!(errors.last().unwrap() < &1e-9, "full design should be exact: {errors:?}");
}

#[test]
fn shift_methods_are_distinct() {
    assert_ne!(ShiftMethod::Xpe, ShiftMethod::Xppe);
    let g = FnGame::new(3, |c: &Coalition| c.len() as f64);
    assert_eq!(g.players(), 3);
}
