use super::gradcheck::{run_gradcheck, GRADCHECK_TOL};
use super::*;
use crate::model::{
    extract_identity, forward_samples, sample_view_codes, weigh_trace, Architecture, Parameters,
    Tensors, TrainingPair, ViewLabel,
};
use crate::numerics::Rng;

fn pair(label: ViewLabel, dim: usize, seed: u64) -> TrainingPair {
    let mut rng = Rng::new(seed);
    TrainingPair {
        x: rng.uniform(1, dim).map(|v| v - 0.5).into_vec(),
        target: rng.uniform(1, dim).map(|v| v - 0.5).into_vec(),
        label,
        identity: 0,
        illumination: 0,
        input_view: 0,
        output_view: 0,
    }
}

fn max_diff(a: &Tensors, b: &Tensors) -> f64 {
    a.tensors()
        .iter()
        .zip(b.tensors())
        .map(|(x, y)| x.sub(y).unwrap().max_abs())
        .fold(0.0, f64::max)
}

#[test]
fn gradient_gate_passes_for_every_objective() {
    let report = run_gradcheck(7).unwrap();
    // 2 heads × 2 estimators × 15 tensors + 15 label-free
    assert_eq!(report.entries.len(), 75);
    for e in &report.entries {
        assert!(
            e.max_rel_error < GRADCHECK_TOL,
            "{} {} {}: {:e}",
            e.objective,
            e.head,
            e.tensor,
            e.max_rel_error
        );
    }
}

#[test]
fn single_sample_modes_agree() {
    let arch: Architecture = "6-5-4(2)-5(2)-6[3]".parse().unwrap();
    let p = Parameters::init(&arch, 2).unwrap();
    let pr = pair(ViewLabel::Class(2), 6, 1);
    let a = loss_and_grad_one_sample(&pr, &p, 1, &mut Rng::new(5)).unwrap();
    let b = loss_and_grad_weighted(&pr, &p, 1, &mut Rng::new(5)).unwrap();
    assert_eq!(a.grads, b.grads);
    assert_eq!(a.loss, b.loss);
    assert_eq!(a.weights.weights, vec![1.0]);
}

#[test]
fn zero_point_output_bias_gradient_is_negative_residual() {
    let arch: Architecture = "6-5-4(2)-5(2)-6[3]".parse().unwrap();
    let p = Parameters::zeros(&arch).unwrap();
    let pr = pair(ViewLabel::Class(0), 6, 3);
    // all samples identical: y = 0, weights uniform 1/S
    for s in [1usize, 4] {
        let g = loss_and_grad_one_sample(&pr, &p, s, &mut Rng::new(1)).unwrap();
        for (gb, t) in g.grads.output.bias.as_slice().iter().zip(&pr.target) {
            assert!((gb + t / s as f64).abs() < 1e-15);
        }
    }
}

#[test]
fn equal_weights_average_the_per_sample_gradients() {
    // two identical draws have equal weights 1/2 each
    let arch: Architecture = "6-5-4(2)-5(2)-6[3]".parse().unwrap();
    let p = Parameters::init(&arch, 8).unwrap();
    let pr = pair(ViewLabel::Class(1), 6, 4);
    let one = sample_view_codes(&arch, 1, &mut Rng::new(2)).unwrap();
    let twice = crate::model::ViewSamples::from_samples(&arch, &[one.get(0), one.get(0)]).unwrap();
    let w = loss_and_grad_with_samples(&pr, &p, &twice, GradMode::WeightedAverage).unwrap();
    assert_eq!(w.weights.weights, vec![0.5, 0.5]);
    let single = loss_and_grad_with_samples(&pr, &p, &one, GradMode::WeightedAverage).unwrap();
    assert!(max_diff(&w.grads, &single.grads) < 1e-15);
}

#[test]
fn output_bias_objective_is_quadratic_so_differences_are_exact() {
    let arch: Architecture = "6-5-4(2)-5(2)-6[c]".parse().unwrap();
    let p = Parameters::init(&arch, 8).unwrap();
    let pr = pair(ViewLabel::Yaw(0.1), 6, 4);
    let samples = sample_view_codes(&arch, 3, &mut Rng::new(2)).unwrap();
    let id = extract_identity(&pr.x, &p).unwrap();
    let set = weigh_trace(&forward_samples(&id, &samples, &p).unwrap(), &pr.target, pr.label, &p).unwrap();
    let terms = terms_for(GradMode::WeightedAverage, &set, pr.label);
    let a = objective_gradient(&pr, &p, &samples, &terms).unwrap();
    let n = finite_diff_gradient(&pr, &p, &samples, &terms, 1e-3).unwrap();
    let err = a.output.bias.sub(&n.output.bias).unwrap().max_abs();
    assert!(err < 1e-9, "quadratic in b_out; err {err:e}");
}

#[test]
fn halving_the_step_quarters_the_error() {
    let arch: Architecture = "6-5-4(2)-5(2)-6[3]".parse().unwrap();
    let p = Parameters::init(&arch, 9).unwrap();
    let pr = pair(ViewLabel::Class(1), 6, 6);
    let samples = sample_view_codes(&arch, 2, &mut Rng::new(3)).unwrap();
    let id = extract_identity(&pr.x, &p).unwrap();
    let set = weigh_trace(&forward_samples(&id, &samples, &p).unwrap(), &pr.target, pr.label, &p).unwrap();
    let terms = terms_for(GradMode::OneSample, &set, pr.label);
    let a = objective_gradient(&pr, &p, &samples, &terms).unwrap();
    let e1 = finite_diff_gradient(&pr, &p, &samples, &terms, 1e-3).unwrap();
    let e2 = finite_diff_gradient(&pr, &p, &samples, &terms, 5e-4).unwrap();
    let err = |n: &Tensors| -> f64 {
        a.tensors()
            .iter()
            .zip(n.tensors())
            .map(|(x, y)| x.sub(y).unwrap().frobenius_sq())
            .sum::<f64>()
            .sqrt()
    };
    let ratio = err(&e1) / err(&e2);
    assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
    assert!(finite_diff_gradient(&pr, &p, &samples, &terms, 1e-2).is_err());
}

#[test]
fn unsupervised_prior_term_when_view_equals_draw() {
    let arch: Architecture = "6-5-4(2)-5(2)-6[c]".parse().unwrap();
    let p = Parameters::init(&arch, 1).unwrap();
    let pr = pair(ViewLabel::Yaw(0.0), 6, 2);
    let draws = draw_unsupervised(&pr, &p, 1, &mut Rng::new(3)).unwrap();
    let v = draws.views[0];
    let g = unsupervised_with_draws(&pr, v, 0.4, &p, &draws).unwrap();
    assert_eq!(g.selected, 0);
    // loss = −(log p(ṽ|v_s) + …) and log p(ṽ|v_s) = −log 0.4 when ṽ = v_s
    let id = extract_identity(&pr.x, &p).unwrap();
    let trace = forward_samples(&id, &draws.samples, &p).unwrap();
    let r = crate::model::recon_loglik(&pr.target, trace.y.row(0), 1.0).unwrap();
    let vl = crate::model::view_loglik(ViewLabel::Yaw(v), trace.view_out.row(0), &p).unwrap();
    assert!((g.loss - (0.4f64.ln() - vl - r)).abs() < 1e-12);
}

#[test]
fn unsupervised_rejects_discrete_head() {
    let arch: Architecture = "6-5-4(2)-5(2)-6[3]".parse().unwrap();
    let p = Parameters::init(&arch, 1).unwrap();
    let pr = pair(ViewLabel::Class(0), 6, 2);
    assert!(train_step_unsupervised(&pr, 0.0, 0.3, &p, 3, &mut Rng::new(1)).is_err());
}

fn toy_pairs() -> Vec<TrainingPair> {
    (0..12)
        .map(|i| {
            let mut p = pair(ViewLabel::Class(i % 3), 8, 100 + (i / 3) as u64);
            p.identity = i / 3;
            p
        })
        .collect()
}

#[test]
fn zero_learning_rate_leaves_parameters_but_reports() {
    let arch: Architecture = "8-6-6(2)-6(2)-8[3]".parse().unwrap();
    let p0 = Parameters::init(&arch, 1).unwrap();
    let mut p = p0.clone();
    let mut st = OptimizerState::new(&p);
    let cfg = TrainConfig {
        learning_rate: 0.0,
        samples: 4,
        ..TrainConfig::default()
    };
    let m = train_epoch(&toy_pairs(), &mut p, &mut st, &cfg, None, 1, &mut Rng::new(1)).unwrap();
    assert_eq!(p, p0);
    assert!(m.mean_loss.is_finite() && m.max_weight_median > 0.0);
    assert!(train_epoch(&[], &mut p, &mut st, &cfg, None, 1, &mut Rng::new(1)).is_err());
}

#[test]
fn seeded_training_is_bit_reproducible_and_decreases_loss() {
    let arch: Architecture = "8-6-6(2)-6(2)-8[3]".parse().unwrap();
    let cfg = TrainConfig {
        samples: 5,
        epochs: 50,
        batch_size: 4,
        learning_rate: 0.05,
        seed: 11,
        ..TrainConfig::default()
    };
    let run = || {
        let mut t = Trainer::new(Parameters::init(&arch, 3).unwrap(), cfg.clone()).unwrap();
        let m = t.run(&toy_pairs(), None, |_, _| Ok(())).unwrap();
        (t.params, m)
    };
    let (a, ma) = run();
    let (b, _) = run();
    assert_eq!(a, b);
    assert!(ma.last().unwrap().mean_loss < ma[0].mean_loss);
}

#[test]
fn single_sample_sparsity_metrics() {
    let arch: Architecture = "8-6-6(2)-6(2)-8[3]".parse().unwrap();
    let mut p = Parameters::init(&arch, 1).unwrap();
    let mut st = OptimizerState::new(&p);
    let cfg = TrainConfig {
        samples: 1,
        ..TrainConfig::default()
    };
    let m = train_epoch(&toy_pairs(), &mut p, &mut st, &cfg, None, 1, &mut Rng::new(1)).unwrap();
    assert_eq!(m.max_weight_median, 1.0);
    assert_eq!(m.weight_sparsity_fraction, 1.0);
}

#[test]
fn batched_passes_match_per_input_passes() {
    for arch in ["6-5-4(2)-5(2)-6[3]", "6-5-4(2)-5(2)-6[c]"] {
        let arch: Architecture = arch.parse().unwrap();
        let p = Parameters::init(&arch, 4).unwrap();
        let label = |k: usize| match arch.view_head {
            crate::model::ViewHeadKind::Discrete(_) => ViewLabel::Class(k % 3),
            crate::model::ViewHeadKind::Continuous => ViewLabel::Yaw(0.2 * k as f64 - 0.3),
        };
        let pairs: Vec<TrainingPair> = (0..4).map(|k| pair(label(k), 6, 10 + k as u64)).collect();
        let mut rng = Rng::new(9);
        // uneven sample counts exercise the grouping
        let draws: Vec<_> = (0..4).map(|k| sample_view_codes(&arch, 2 + k, &mut rng).unwrap()).collect();
        let xs: Vec<&[f64]> = pairs.iter().map(|q| q.x.as_slice()).collect();
        let ids = crate::model::extract_identity_batch(&xs, &p).unwrap();
        let traces = crate::model::forward_samples_batch(
            &ids.iter().collect::<Vec<_>>(),
            &draws.iter().collect::<Vec<_>>(),
            &p,
        )
        .unwrap();

        let mut separate = p.tensors.zeros_like();
        let mut all_terms = Vec::new();
        for (k, q) in pairs.iter().enumerate() {
            let id = extract_identity(&q.x, &p).unwrap();
            let t = forward_samples(&id, &draws[k], &p).unwrap();
            assert!(t.y.sub(&traces[k].y).unwrap().max_abs() < 1e-12);
            assert!(t.view_out.sub(&traces[k].view_out).unwrap().max_abs() < 1e-12);
            let set = weigh_trace(&t, &q.target, q.label, &p).unwrap();
            let mode = if k % 2 == 0 { GradMode::OneSample } else { GradMode::WeightedAverage };
            let terms = terms_for(mode, &set, q.label);
            backprop_into(&p, &t, &q.target, &terms, 0.25, &mut separate).unwrap();
            all_terms.push(terms);
        }
        let items: Vec<BackpropItem> = traces
            .iter()
            .zip(&pairs)
            .zip(&all_terms)
            .map(|((trace, q), terms)| BackpropItem { trace, target: &q.target, terms })
            .collect();
        let mut batched = p.tensors.zeros_like();
        backprop_batch(&p, &items, 0.25, &mut batched).unwrap();
        assert!(max_diff(&separate, &batched) < 1e-12);
    }
}
