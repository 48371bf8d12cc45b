use proptest::prelude::*;

use tda_lab::airrep::{ranking_loss, step_objective, AirRepModel, AirRepSpec, EncoderKind, Pooling, RankLossConfig};
use tda_lab::data::{sample_subsets, Dataset, DatasetKind, Example, Label};
use tda_lab::matrix::Matrix;
use tda_lab::oracle::{CrossValInstance, NormalizeMode};
use tda_lab::rng::RngSeed;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy_instance(seed: u64, d: usize) -> CrossValInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mk = |n: usize| {
        let ex: Vec<Example> = (0..n)
            .map(|i| Example::new(i, (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(), Label::Class(i % 2)))
            .collect();
        Dataset::new(ex, d, DatasetKind::Classification { num_classes: 2 }).unwrap()
    };
    let train_pool = mk(12);
    let valid = mk(4);
    let subsets = sample_subsets(&train_pool, "toy", 5, 4, RngSeed(seed)).unwrap();
    let labels = Matrix::from_vec(5, 4, (0..20).map(|k| ((k * 7 % 11) as f64 - 5.0) * 0.4).collect()).unwrap();
    CrossValInstance {
        valid,
        train_pool,
        subsets,
        losses: labels.map(|v| -v),
        labels,
        degenerate: vec![false; 4],
        normalize: NormalizeMode::Variance,
    }
}

fn fd_check(model: &AirRepModel, inst: &CrossValInstance) {
    let cfg = RankLossConfig::default();
    let targets = [0usize, 1, 2, 3];
    let subsets = [0usize, 1, 2, 3, 4];
    let (_, grad) = step_objective(model, inst, &targets, &subsets, &cfg, false).unwrap();
    let h = 1e-6;
    for k in 0..model.num_weights() {
        let mut plus = model.clone();
        plus.weights[k] += h;
        let mut minus = model.clone();
        minus.weights[k] -= h;
        let lp = step_objective(&plus, inst, &targets, &subsets, &cfg, false).unwrap().0;
        let lm = step_objective(&minus, inst, &targets, &subsets, &cfg, false).unwrap().0;
        let fd = (lp - lm) / (2.0 * h);
        let err = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-3);
        assert!(err <= 1e-4, "weight {k}: analytic {} vs fd {fd}", grad[k]);
    }
}

#[test]
fn encoder_gradients_match_finite_differences() {
    let inst = toy_instance(1, 3);
    for (encoder, pooling, normalize) in [
        (EncoderKind::Affine, Pooling::Attention, false),
        (EncoderKind::Affine, Pooling::Mean, false),
        (EncoderKind::Mlp { hidden: 4 }, Pooling::Attention, false),
        (EncoderKind::Affine, Pooling::Attention, true),
        (EncoderKind::Mlp { hidden: 3 }, Pooling::Mean, true),
    ] {
        let spec = AirRepSpec { e: 5, encoder, pooling, bias: true, normalize };
        let model = AirRepModel::init(3, &spec, RngSeed(4)).unwrap();
        fd_check(&model, &inst);
    }
}

#[test]
fn loss_gradient_matches_finite_differences() {
    let cfg = RankLossConfig::default();
    let f = [0.3, -1.2, 2.0, 0.05];
    let r = [1.0, -0.5, 0.4, 7.0];
    let (_, g) = ranking_loss(&f, &r, &cfg).unwrap();
    for k in 0..f.len() {
        let h = 1e-6;
        let mut p = f;
        p[k] += h;
        let mut m = f;
        m[k] -= h;
        let fd = (ranking_loss(&p, &r, &cfg).unwrap().0 - ranking_loss(&m, &r, &cfg).unwrap().0) / (2.0 * h);
        assert!((fd - g[k]).abs() <= 1e-6 * fd.abs().max(1.0));
    }
}

proptest! {
    #[test]
    fn attention_weights_are_a_permutation_equivariant_distribution(
        feats in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 1..7),
        x in prop::collection::vec(-2.0f64..2.0, 3),
        rot in 0usize..7,
    ) {
        let model = AirRepModel::init(3, &AirRepSpec { e: 4, ..Default::default() }, RngSeed(2)).unwrap();
        let xe = Example::new(0, x, Label::Class(0));
        let s: Vec<Example> = feats.into_iter().enumerate().map(|(i, f)| Example::new(i + 1, f, Label::Class(0))).collect();
        let refs: Vec<&Example> = s.iter().collect();
        let (_, w) = model.attention_pool(&xe, &refs).unwrap();
        prop_assert!(w.alpha.iter().all(|&a| a >= 0.0));
        prop_assert!((w.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let k = rot % refs.len();
        let mut rotated = refs.clone();
        rotated.rotate_left(k);
        let (_, wr) = model.attention_pool(&xe, &rotated).unwrap();
        for i in 0..refs.len() {
            prop_assert!((wr.alpha[i] - w.alpha[(i + k) % refs.len()]).abs() < 1e-15);
        }
        let a = model.score_group(&xe, &refs).unwrap();
        let b = model.score_group(&xe, &rotated).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn raising_t_min_never_adds_pairs(r in prop::collection::vec(-3.0f64..3.0, 2..10), lo in 0.0f64..2.0, extra in 0.0f64..2.0) {
        let a = RankLossConfig { t_min: lo, t_max: 5.0 };
        let b = RankLossConfig { t_min: lo + extra, t_max: 5.0 };
        prop_assert!(tda_lab::airrep::active_pairs(&r, &b) <= tda_lab::airrep::active_pairs(&r, &a));
    }
}
