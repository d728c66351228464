use hdtwin::baselines::{
    apply_threshold, builtin_baseline_spec, default_baseline_for, finite_difference_derivatives, polynomial_library,
    sindy_fit, BaselineError, SindyConfig, BASELINE_IDS,
};
use hdtwin::dsl::{parse_model_spec, validate, SystemSchema, VarSpec};
use hdtwin::engine::{Dataset, Model, Split, Trajectory};
use hdtwin::systems::{builtin_system, generate_dataset, GenConfig, SYSTEM_IDS};
use proptest::prelude::*;

fn one_dim() -> SystemSchema {
    SystemSchema::new(vec![VarSpec::new("x", 0.0, 10.0)], vec![], "days", 1.0).unwrap()
}

fn traj(xs: &[f64]) -> Trajectory {
    Trajectory {
        times: (0..xs.len()).map(|i| i as f64).collect(),
        states: xs.iter().map(|x| vec![*x]).collect(),
        actions: vec![vec![]; xs.len()],
    }
}

fn binomial(n: usize, k: usize) -> usize {
    (1..=k).fold(1, |acc, i| acc * (n + 1 - i) / i)
}

#[test]
fn forward_differences() {
    assert_eq!(finite_difference_derivatives(&traj(&[0.0, 1.0, 2.0]), 1.0).unwrap(), vec![vec![1.0], vec![1.0]]);
    assert_eq!(finite_difference_derivatives(&traj(&[3.0; 5]), 0.1).unwrap(), vec![vec![0.0]; 4]);
    assert!(matches!(
        finite_difference_derivatives(&traj(&[1.0]), 1.0),
        Err(BaselineError::TooShort(1))
    ));
    let s = SystemSchema::new(vec![VarSpec::new("x", 0.0, 10.0)], vec![], "days", 0.1).unwrap();
    let m = Model::compile(&parse_model_spec("d(x)/dt = -0.5 * x").unwrap(), &s).unwrap();
    let t = m.rollout(&m.init_params(0), &[4.0], 0.0, 0.1, &vec![vec![]; 30]).unwrap();
    for (d, x) in finite_difference_derivatives(&t, 0.1).unwrap().iter().zip(&t.states) {
        assert!((d[0] + 0.5 * x[0]).abs() < 1e-12);
    }
}

#[test]
fn library_sizes() {
    for n in 1..6 {
        for d in 1..4 {
            assert_eq!(polynomial_library(n, d).len(), binomial(n + d, d));
        }
    }
    let names: Vec<String> = ["x", "y"].iter().map(|s| s.to_string()).collect();
    let labels: Vec<_> = polynomial_library(2, 2).iter().map(|m| m.label(&names)).collect();
    assert_eq!(labels, ["1", "x", "y", "x^2", "x*y", "y^2"]);
}

fn decay_dataset() -> Dataset {
    let s = one_dim();
    let m = Model::compile(&parse_model_spec("d(x)/dt = -0.5 * x").unwrap(), &s).unwrap();
    let p = m.init_params(0);
    let trajs = [0.5, 1.0, 2.0, 4.0, 8.0]
        .iter()
        .map(|x0| m.rollout(&p, &[*x0], 0.0, 1.0, &vec![vec![]; 10]).unwrap())
        .collect();
    Dataset::new(s, Split::Train, trajs)
}

#[test]
fn recovers_linear_decay() {
    let fit = sindy_fit(&decay_dataset(), &SindyConfig::default()).unwrap();
    assert_eq!(fit.labels, ["1", "x", "x^2"]);
    assert_eq!(fit.support(0), vec![1]);
    assert!((fit.coefficients[0][1] + 0.5).abs() < 1e-6);
    assert!(fit.condition_number.is_finite() && fit.condition_number >= 1.0);
    assert!(validate(&fit.spec, &one_dim()).is_empty());
    let m = Model::compile(&fit.spec, &one_dim()).unwrap();
    assert!(m.one_step_mse(&m.init_params(0), &decay_dataset().transitions()).unwrap() < 1e-12);
}

#[test]
fn zero_derivatives_give_zero_model() {
    let ds = Dataset::new(one_dim(), Split::Train, vec![traj(&[2.0; 10]), traj(&[5.0; 10])]);
    let fit = sindy_fit(&ds, &SindyConfig::default()).unwrap();
    assert!(fit.coefficients[0].iter().all(|c| *c == 0.0));
    assert!(fit.spec.params.is_empty());
}

fn support_labels(fit: &hdtwin::baselines::SindyFit, j: usize) -> Vec<String> {
    fit.support(j).iter().map(|k| fit.labels[*k].clone()).collect()
}

#[test]
fn recovers_lotka_volterra_support() {
    let sys = builtin_system("lv2").unwrap();
    let data = generate_dataset(&sys, &GenConfig::default()).unwrap();
    let fit = sindy_fit(&data.train, &SindyConfig::default()).unwrap();
    assert_eq!(support_labels(&fit, 0), ["hare_population", "hare_population*lynx_population"]);
    assert_eq!(support_labels(&fit, 1), ["lynx_population", "hare_population*lynx_population"]);
    let c = &fit.coefficients;
    for (got, want) in [(c[0][1], 0.8), (c[0][4], -0.4), (c[1][2], -0.6), (c[1][4], 0.3)] {
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }

    let sys = builtin_system("lv3-plankton").unwrap();
    let data = generate_dataset(&sys, &GenConfig::default()).unwrap();
    let fit = sindy_fit(&data.train, &SindyConfig::default()).unwrap();
    let (x, y, z) = ("prey_population", "intermediate_population", "top_predators_population");
    assert_eq!(support_labels(&fit, 0), [x.to_string(), format!("{x}*{y}"), format!("{x}*{z}")]);
    assert_eq!(support_labels(&fit, 1), [y.to_string(), format!("{x}*{y}")]);
    assert_eq!(support_labels(&fit, 2), [z.to_string(), format!("{x}*{z}")]);
}

#[test]
fn epidemic_fit_predicts_its_data() {
    // The four fractions sum to one, so the library is collinear and the
    // support is not unique; only the fitted dynamics are checked.
    let sys = builtin_system("seir-covid").unwrap();
    let data = generate_dataset(&sys, &GenConfig::default()).unwrap();
    let fit = sindy_fit(&data.train, &SindyConfig::covid()).unwrap();
    let m = Model::compile(&fit.spec, &sys.schema).unwrap();
    let mse = m.one_step_mse(&m.init_params(0), &data.test.transitions()).unwrap();
    assert!(mse < 1e-8, "{mse}");
}

#[test]
fn cancer_fit_is_a_valid_spec() {
    let sys = builtin_system("cancer-chemo-radio").unwrap();
    let data = generate_dataset(
        &sys,
        &GenConfig {
            trajectories: Some(100),
            ..Default::default()
        },
    )
    .unwrap();
    let fit = sindy_fit(&data.train, &SindyConfig::default()).unwrap();
    assert_eq!(fit.labels.len(), binomial(6, 2));
    let m = Model::compile(&fit.spec, &sys.schema).unwrap();
    let mse = m.one_step_mse(&m.init_params(0), &data.test.transitions()).unwrap();
    assert!(mse.is_finite());
    for c in &fit.coefficients {
        assert_eq!(&apply_threshold(c, 0.02), c);
    }
}

#[test]
fn baseline_specs_validate() {
    for sys_id in SYSTEM_IDS {
        let sys = builtin_system(sys_id).unwrap();
        let id = default_baseline_for(sys_id).unwrap();
        builtin_baseline_spec(id, &sys.schema).unwrap();
        builtin_baseline_spec("mlp-twin", &sys.schema).unwrap();
    }
    let cancer = builtin_system("cancer").unwrap().schema;
    assert!(matches!(
        builtin_baseline_spec("seir", &cancer),
        Err(BaselineError::Invalid(_))
    ));
    assert!(matches!(
        builtin_baseline_spec("nope", &cancer),
        Err(BaselineError::Unknown(_))
    ));
    assert_eq!(BASELINE_IDS.len(), 7);
}

#[test]
fn seir_baseline_shape() {
    let sys = builtin_system("seir-covid").unwrap();
    let spec = builtin_baseline_spec("seir", &sys.schema).unwrap();
    assert_eq!(spec.components.len(), 4);
    let mut names: Vec<_> = spec.params.iter().map(|p| p.name.as_str()).collect();
    names.sort();
    assert_eq!(names, ["beta", "delta", "gamma", "sigma"]);
}

#[test]
fn mlp_twin_parameter_count() {
    for id in ["cancer", "cancer-chemo-radio", "seir-covid", "lv3-plankton"] {
        let s = builtin_system(id).unwrap().schema;
        let (dx, du) = (s.state_dim(), s.action_dim());
        let spec = builtin_baseline_spec("mlp-twin", &s).unwrap();
        let expected = (dx + du) * 128 + 128 + 2 * (128 * 128 + 128) + 128 * dx + dx;
        assert_eq!(spec.optimizable_param_count(), expected);
        assert!(spec.components.iter().all(|c| c.residual.is_some()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn thresholding_is_idempotent(a in -2.0f64..2.0, b in -2.0f64..2.0, c in -0.5f64..0.5) {
        // Noiseless quadratic dynamics x' = a + b x + c x^2 on a short horizon.
        let src = format!("d(x)/dt = {a:?} + {b:?} * x + {c:?} * x ^ 2");
        let s = SystemSchema::new(vec![VarSpec::new("x", -10.0, 10.0)], vec![], "days", 0.01).unwrap();
        let m = Model::compile(&parse_model_spec(&src).unwrap(), &s).unwrap();
        let p = m.init_params(0);
        let trajs = [-1.0, -0.5, 0.25, 0.75, 1.0]
            .iter()
            .map(|x0| m.rollout(&p, &[*x0], 0.0, 0.01, &vec![vec![]; 20]).unwrap())
            .collect();
        let ds = Dataset::new(s, Split::Train, trajs);
        let cfg = SindyConfig::default();
        let fit = sindy_fit(&ds, &cfg).unwrap();
        prop_assert_eq!(&apply_threshold(&fit.coefficients[0], cfg.threshold), &fit.coefficients[0]);
    }
}
