use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tda_lab::attr::{
    expansion_terms, group_constants, group_influence, group_influence_terms, score_dot, CurvatureScale, Correction, Embedder, GradientEmbedding,
    GroupInfluenceConfig,
};
use tda_lab::data::{Example, Label};
use tda_lab::models::{hessian, HessianMode, ModelSpec, TrainedModel};

fn raw(id: usize, phi: Vec<f64>) -> GradientEmbedding {
    GradientEmbedding { example_id: id, phi, normalized: false }
}

/// Whitened recursion `w_1 = −u/(n−m)`, `w_s = ρ(I − κF)w_{s−1}` with dense matrices.
fn matrix_oracle(cfg: &GroupInfluenceConfig, phis: &[Vec<f64>], x: &[f64]) -> f64 {
    let q = x.len();
    let mut f = DMatrix::<f64>::zeros(q, q);
    let mut u = DVector::<f64>::zeros(q);
    for p in phis {
        let v = DVector::from_column_slice(p);
        f += &v * v.transpose();
        u += v;
    }
    let rho = cfg.m as f64 / (cfg.n - cfg.m) as f64;
    let kappa = match cfg.scale {
        CurvatureScale::Mean => 1.0 / cfg.m as f64,
        CurvatureScale::Sum => 1.0,
    };
    let step = (DMatrix::identity(q, q) - f * kappa) * rho;
    let mut w = u * (-1.0 / (cfg.n - cfg.m) as f64);
    let mut total = DVector::zeros(q);
    for s in 0..cfg.order {
        if s > 0 {
            w = &step * w;
        }
        total += &w;
    }
    DVector::from_column_slice(x).dot(&total)
}

fn random_instance(rng: &mut ChaCha8Rng) -> (GroupInfluenceConfig, Vec<Vec<f64>>, Vec<f64>) {
    let q = rng.random_range(1..=8);
    let m = rng.random_range(1..=6);
    let n = m + rng.random_range(1..=40);
    let phis = (0..m).map(|_| (0..q).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let x = (0..q).map(|_| rng.random_range(-1.0..1.0)).collect();
    (GroupInfluenceConfig::new(2, n, m), phis, x)
}

#[test]
fn alignment_recursion_matches_matrix_expansion() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..100 {
        let (base, phis, x) = random_instance(&mut rng);
        for order in [2, 3, 5] {
            for scale in [CurvatureScale::Mean, CurvatureScale::Sum] {
                let cfg = GroupInfluenceConfig { order, scale, ..base.clone() };
                let es: Vec<_> = phis.iter().enumerate().map(|(i, p)| raw(i, p.clone())).collect();
                let got = group_influence(&cfg, &es, &raw(99, x.clone())).unwrap();
                let want = matrix_oracle(&cfg, &phis, &x);
                assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0), "trial {trial} k={order}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn first_order_is_scaled_sum_of_pairwise_scores() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let (base, phis, x) = random_instance(&mut rng);
        let cfg = GroupInfluenceConfig { order: 1, ..base };
        let es: Vec<_> = phis.iter().enumerate().map(|(i, p)| raw(i, p.clone())).collect();
        let xe = raw(99, x);
        let c1 = group_constants(&cfg).unwrap()[0];
        let pairwise: f64 = es.iter().map(|e| score_dot(&xe, e).unwrap()).sum();
        assert_eq!(group_influence(&cfg, &es, &xe).unwrap().to_bits(), (c1 * pairwise).to_bits());
    }
}

struct Regression {
    pool: Vec<Example>,
    l2: f64,
}

impl Regression {
    fn new(seed: u64, n: usize, d: usize, l2: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool = (0..n)
            .map(|i| {
                let f: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let y = f.iter().enumerate().map(|(k, v)| (k as f64 - 1.0) * v).sum::<f64>() + rng.random_range(-0.3..0.3);
                Example::new(i, f, Label::Real(y))
            })
            .collect();
        Regression { pool, l2 }
    }

    /// Minimizer of `Σ w_i ½(θ·x_i − y_i)² + ½λ‖θ‖²` (no bias) via normal equations.
    fn solve(&self, weights: &[f64]) -> DVector<f64> {
        let d = self.pool[0].features.len();
        let mut a = DMatrix::<f64>::identity(d, d) * self.l2;
        let mut b = DVector::<f64>::zeros(d);
        for (z, &w) in self.pool.iter().zip(weights) {
            let x = DVector::from_column_slice(&z.features);
            a += &x * x.transpose() * w;
            b += x * (w * z.label.as_f64());
        }
        a.lu().solve(&b).unwrap()
    }

    fn weights(&self, subset: &[usize], m: usize, eps: f64) -> Vec<f64> {
        let n = self.pool.len();
        let rho = m as f64 / (n - m) as f64;
        (0..n)
            .map(|i| (1.0 - eps * rho) / n as f64 + if subset.contains(&i) { eps * rho / m as f64 } else { 0.0 })
            .collect()
    }
}

#[test]
fn expansion_resums_to_exact_reweighted_optimum() {
    let r = Regression::new(3, 30, 3, 0.05);
    let subset = [2usize, 7, 19];
    let theta_star = r.solve(&r.weights(&subset, 3, 0.0));
    let spec = ModelSpec::linear_regression(3).with_bias(false).with_l2(r.l2);
    let model = TrainedModel::from_params(spec, theta_star.as_slice().to_vec()).unwrap();
    let members: Vec<&Example> = subset.iter().map(|&i| &r.pool[i]).collect();
    let cfg = GroupInfluenceConfig { hessian_mode: HessianMode::Exact, ..GroupInfluenceConfig::new(40, 30, 3) };
    let terms = expansion_terms(&model, &r.pool, &members, &cfg).unwrap();
    for eps in [-1.0, -0.3, 0.5] {
        let exact = r.solve(&r.weights(&subset, 3, eps)) - &theta_star;
        let approx = terms.shift(eps);
        for k in 0..3 {
            assert!((exact[k] - approx[k]).abs() < 1e-10, "eps {eps}: {} vs {}", exact[k], approx[k]);
        }
    }
    // ε = −1 is removal: the same optimum as fitting the complement alone.
    let complement: Vec<f64> = (0..30).map(|i| if subset.contains(&i) { 0.0 } else { 1.0 / 27.0 }).collect();
    let removed = r.solve(&complement) - &theta_star;
    let shift = terms.shift(-1.0);
    assert!((0..3).all(|k| (removed[k] - shift[k]).abs() < 1e-10));
}

#[test]
fn subset_hessian_equal_to_full_kills_second_term() {
    // Unit features in 1-D: H_S = H for every S.
    let pool: Vec<Example> = (0..6).map(|i| Example::new(i, vec![1.0], Label::Real(i as f64))).collect();
    let model = TrainedModel::from_params(ModelSpec::linear_regression(1).with_bias(false), vec![2.5]).unwrap();
    let cfg = GroupInfluenceConfig { hessian_mode: HessianMode::Exact, ..GroupInfluenceConfig::new(3, 6, 2) };
    let t = expansion_terms(&model, &pool, &[&pool[0], &pool[4]], &cfg).unwrap();
    assert_eq!(t.delta.len(), 3);
    assert_eq!(t.delta[1], vec![0.0]);
    assert_eq!(t.delta[2], vec![0.0]);
}

#[test]
fn first_order_parameter_path_matches_embedding_path() {
    let r = Regression::new(8, 25, 4, 0.0);
    let theta = r.solve(&vec![1.0 / 25.0; 25]);
    let spec = ModelSpec::linear_regression(4).with_bias(false);
    let model = TrainedModel::from_params(spec, theta.as_slice().to_vec()).unwrap();
    let subset = [0usize, 3, 4, 11];
    let members: Vec<&Example> = subset.iter().map(|&i| &r.pool[i]).collect();
    let damping = 0.01;
    let cfg = GroupInfluenceConfig { hessian_mode: HessianMode::Exact, damping, ..GroupInfluenceConfig::new(1, 25, 4) };
    let terms = expansion_terms(&model, &r.pool, &members, &cfg).unwrap();
    let embed = Embedder::new(&model, &r.pool, Correction::Exact, damping, None, false).unwrap();
    let phis: Vec<_> = members.iter().map(|z| embed.embed(z).unwrap()).collect();
    let x = Example::new(99, vec![0.3, -0.2, 0.9, 0.1], Label::Real(1.0));
    let via_embeddings = group_influence(&cfg, &phis, &embed.embed(&x).unwrap()).unwrap();
    let via_delta = terms.influence_on(&model.grad(&x).unwrap(), 1.0);
    assert!((via_embeddings - via_delta).abs() < 1e-10 * via_delta.abs().max(1.0), "{via_embeddings} vs {via_delta}");
}

#[test]
fn fim_and_hessian_agree_for_a_well_specified_logistic_model() {
    // At the data-generating parameters E[∇ℓ∇ℓᵀ] = E[∇²ℓ].
    let spec = ModelSpec::logistic_regression(2, 2);
    let truth = vec![0.8, -0.5, -0.8, 0.5, 0.2, -0.2];
    let model = TrainedModel::from_params(spec, truth).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let pool: Vec<Example> = (0..6000)
        .map(|i| {
            let f = vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let z = model.predict(&f).unwrap();
            let p0 = 1.0 / (1.0 + (z[1] - z[0]).exp());
            let y = usize::from(rng.random::<f64>() >= p0);
            Example::new(i, f, Label::Class(y))
        })
        .collect();
    let h = hessian(&model, &pool, HessianMode::Exact, 0.0).unwrap();
    let fim = hessian(&model, &pool, HessianMode::Fim, 0.0).unwrap();
    let rel = (&h - &fim).norm() / h.norm();
    assert!(rel < 0.1, "relative gap {rel}");
}

proptest! {
    #[test]
    fn order_t_term_scales_as_s_to_the_2t(
        phis in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 1..5),
        x in prop::collection::vec(-1.0f64..1.0, 3),
        s in 0.2f64..3.0,
        t in 1usize..=2,
    ) {
        let m = phis.len();
        let term = |scale: f64| {
            let es: Vec<_> = phis.iter().enumerate().map(|(i, p)| raw(i, p.iter().map(|v| v * scale).collect())).collect();
            let xe = raw(99, x.iter().map(|v| v * scale).collect());
            group_influence_terms(&GroupInfluenceConfig::new(2, m + 10, m), &es, &xe).unwrap()[t - 1]
        };
        let base = term(1.0);
        let scaled = term(s);
        let want = base * s.powi(2 * t as i32);
        prop_assert!((scaled - want).abs() <= 1e-9 * want.abs().max(1e-6));
    }

    #[test]
    fn normalized_scores_are_bounded(a in prop::collection::vec(-5.0f64..5.0, 4), b in prop::collection::vec(-5.0f64..5.0, 4)) {
        let unit = |v: &Vec<f64>| {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            GradientEmbedding { example_id: 0, phi: v.iter().map(|x| if n > 0.0 { x / n } else { 0.0 }).collect(), normalized: true }
        };
        let s = score_dot(&unit(&a), &unit(&b)).unwrap();
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&s));
        let plain: f64 = unit(&a).phi.iter().zip(&unit(&b).phi).map(|(x, y)| x * y).sum();
        prop_assert!((s - plain).abs() < 1e-15);
    }
}
