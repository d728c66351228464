mod common;

use hdtwin::dsl::{parse_model_spec, SystemSchema, VarSpec};
use hdtwin::engine::{
    read_trajectory_csv, write_trajectory_csv, DataBundle, DataIoError, Dataset, EngineError,
    Model, Split, Trajectory, TransitionSet,
};
use rand::Rng;

fn schema(states: &[&str], actions: &[&str], dt: f64) -> SystemSchema {
    SystemSchema::new(
        states.iter().map(|s| VarSpec::new(*s, -1e4, 1e4)).collect(),
        actions.iter().map(|s| VarSpec::new(*s, -1e4, 1e4)).collect(),
        "days",
        dt,
    )
    .unwrap()
}

fn model(src: &str, s: &SystemSchema) -> Model {
    Model::compile(&parse_model_spec(src).unwrap(), s).unwrap()
}

fn single(x: &[f64], u: &[f64], y: &[f64], dt: f64) -> TransitionSet {
    TransitionSet {
        dx: x.len(),
        du: u.len(),
        dt,
        len: 1,
        x: x.to_vec(),
        u: u.to_vec(),
        t: vec![0.0],
        y: y.to_vec(),
    }
}

#[test]
fn cancer_growth_term_at_hand_evaluated_point() {
    let s = schema(&["tumor_volume"], &[], 1.0);
    let m = model(
        "param rho = 7e-5\nparam K = 30\nd(tumor_volume)/dt = rho * log(K / tumor_volume) * tumor_volume",
        &s,
    );
    let p = m.init_params(0);
    let f = m.eval_derivative(&p, &[100.0], &[], 0.0).unwrap();
    let expected = 7e-5 * (30.0f64 / 100.0).ln() * 100.0;
    assert!((f[0] - expected).abs() < 1e-15);
    assert!((f[0] - -8.428e-3).abs() < 1e-6);
}

#[test]
fn chemo_decay_and_lotka_volterra_fixed_point() {
    let s = schema(&["c"], &[], 1.0);
    let m = model("d(c)/dt = -0.5 * c", &s);
    let p = m.init_params(0);
    assert_eq!(m.eval_derivative(&p, &[10.0], &[], 0.0).unwrap(), vec![-5.0]);

    let s = schema(&["x", "y"], &[], 0.05);
    let m = model(
        "param alpha = 0.8\nparam beta = 0.4\nparam delta = 0.3\nparam gamma = 0.6\n\
         d(x)/dt = alpha * x - beta * x * y\nd(y)/dt = delta * x * y - gamma * y",
        &s,
    );
    let p = m.init_params(0);
    assert_eq!(m.eval_derivative(&p, &[0.0, 0.0], &[], 0.0).unwrap(), vec![0.0, 0.0]);
}

#[test]
fn rollout_steps() {
    let s = schema(&["c"], &[], 1.0);
    let m = model("d(c)/dt = -0.5 * c", &s);
    let p = m.init_params(0);
    let traj = m.rollout(&p, &[10.0], 0.0, 1.0, &[vec![], vec![]]).unwrap();
    assert_eq!(traj.states, vec![vec![10.0], vec![5.0]]);
    assert_eq!(traj.times, vec![0.0, 1.0]);

    let s = schema(&["x", "y"], &["u"], 0.5);
    let m = model("d(x)/dt = 0\nd(y)/dt = 0.0 * u", &s);
    let p = m.init_params(0);
    let acts: Vec<Vec<f64>> = (0..5).map(|k| vec![k as f64]).collect();
    let traj = m.rollout(&p, &[1.5, -2.0], 3.0, 0.5, &acts).unwrap();
    assert!(traj.states.iter().all(|r| r == &vec![1.5, -2.0]));
    assert_eq!(traj.times, vec![3.0, 3.5, 4.0, 4.5, 5.0]);
}

#[test]
fn euler_step_is_linear_in_dt_for_linear_dynamics() {
    let s = schema(&["x"], &[], 1.0);
    let m = model("param a = -0.37\nd(x)/dt = a * x", &s);
    let p = m.init_params(0);
    for &(x, dt) in &[(2.0, 0.1), (-3.5, 1.0), (7.25, 0.03125)] {
        let traj = m.rollout(&p, &[x], 0.0, dt, &[vec![], vec![]]).unwrap();
        assert_eq!(traj.states[1][0], x + (-0.37 * x) * dt);
    }
}

#[test]
fn rollout_fault_reports_step() {
    let s = schema(&["x"], &[], 1.0);
    let m = model("d(x)/dt = exp(x)", &s);
    let p = m.init_params(0);
    let err = m.rollout(&p, &[1.0], 0.0, 1.0, &vec![vec![]; 10]).unwrap_err();
    assert!(matches!(err, EngineError::RolloutFault { component: 0, .. }), "{err}");
    let err = m.eval_derivative(&p, &[1000.0], &[], 0.0).unwrap_err();
    assert_eq!(
        err,
        EngineError::EvalFault {
            component: 0,
            target: "x".into()
        }
    );
}

#[test]
fn trivial_losses() {
    let s = schema(&["x"], &[], 1.0);
    let m = model("d(x)/dt = 0.0", &s);
    let p = m.init_params(0);
    assert_eq!(m.one_step_mse(&p, &single(&[1.0], &[], &[2.0], 1.0)).unwrap(), 1.0);

    let s = schema(&["x", "y"], &[], 1.0);
    let m = model("d(x)/dt = 0.0\nd(y)/dt = 0.0", &s);
    let p = m.init_params(0);
    let l = m.per_component_mse(&p, &single(&[0.0, 5.0], &[], &[2.0, 5.0], 1.0)).unwrap();
    assert_eq!(l.delta, vec![4.0, 0.0]);
    assert_eq!(l.upsilon, 2.0);
}

#[test]
fn gradient_hand_example_and_unreachable_param() {
    let s = schema(&["x"], &[], 1.0);
    let m = model("param a = 0.5\nparam unused = 3\nd(x)/dt = a * x", &s);
    let p = m.init_params(0);
    let (loss, g) = m.loss_gradient(&p, &single(&[2.0], &[], &[2.0], 1.0), &[0]).unwrap();
    assert_eq!(loss, 1.0);
    assert_eq!(g.scalar("a"), Some(4.0));
    assert_eq!(g.scalar("unused"), Some(0.0));
}

#[test]
fn gradients_match_central_differences() {
    let s = common::two_state_schema();
    let mut r = common::rng(11);
    let mut cases = 0;
    while cases < 120 {
        let spec = common::random_spec(&mut r);
        let m = Model::compile(&spec, &s).unwrap();
        let mut p = m.init_params(r.random());
        for v in p.values.iter_mut() {
            *v += r.random_range(-0.1..0.1);
        }
        let set = common::random_transitions(&mut r, 12);
        let batch: Vec<usize> = (0..r.random_range(1..12)).map(|_| r.random_range(0..12)).collect();
        let Ok((loss, _)) = m.loss_gradient(&p, &set, &batch) else {
            continue;
        };
        if !(loss.is_finite() && loss < 1e6) {
            continue;
        }
        let worst = common::gradient_check(&m, &p, &set, &batch);
        assert!(
            worst <= 1e-4,
            "case {cases}: relative error {worst:e}\n{}",
            hdtwin::dsl::canonicalize(&spec)
        );
        cases += 1;
    }
}

#[test]
fn upsilon_is_mean_of_delta_and_evaluation_is_pure() {
    let s = common::two_state_schema();
    let mut r = common::rng(5);
    for _ in 0..20 {
        let spec = common::random_spec(&mut r);
        let m = Model::compile(&spec, &s).unwrap();
        let p = m.init_params(1);
        let set = common::random_transitions(&mut r, 30);
        let Ok(l) = m.per_component_mse(&p, &set) else {
            continue;
        };
        let mean = l.delta.iter().sum::<f64>() / l.delta.len() as f64;
        assert!((l.upsilon - mean).abs() <= 1e-12 * mean.abs().max(1.0));
        let total = m.one_step_mse(&p, &set).unwrap();
        assert!((total - 2.0 * l.upsilon).abs() <= 1e-12 * total.abs().max(1.0));
        let again = m.per_component_mse(&p, &set).unwrap();
        assert_eq!(l, again);
        let all: Vec<usize> = (0..set.len).collect();
        let brute = common::brute_force_batch_loss(&m, &p, &set, &all);
        assert!((brute - total).abs() <= 1e-12 * total.abs().max(1.0));
    }
}

#[test]
fn self_generated_data_has_zero_loss() {
    let s = schema(&["x", "y"], &["u"], 0.05);
    let m = model(
        "param alpha = 0.8\nparam beta = 0.4\nd(x)/dt = alpha * x - beta * x * y + u\nd(y)/dt = 0.3 * x * y - 0.6 * y",
        &s,
    );
    let p = m.init_params(0);
    let acts: Vec<Vec<f64>> = (0..50).map(|k| vec![(k % 3) as f64 * 0.1]).collect();
    let traj = m.rollout(&p, &[2.0, 1.0], 0.0, 0.05, &acts).unwrap();
    let ds = Dataset::new(s.clone(), Split::Train, vec![traj]);
    assert_eq!(m.one_step_mse(&p, &ds.transitions()).unwrap(), 0.0);
    assert_eq!(m.rollout_mse(&p, &ds).unwrap().upsilon, 0.0);
}

#[test]
fn mismatched_inputs_are_rejected() {
    let s = schema(&["x"], &[], 1.0);
    let m = model("param a = 1\nd(x)/dt = a * x", &s);
    let other = model("param b = 1\nd(x)/dt = b * x", &s);
    let err = m.one_step_mse(&other.init_params(0), &single(&[1.0], &[], &[1.0], 1.0));
    assert_eq!(err, Err(EngineError::LayoutMismatch));
    let err = m.one_step_mse(&m.init_params(0), &single(&[1.0, 2.0], &[], &[1.0, 2.0], 1.0));
    assert_eq!(err, Err(EngineError::SchemaMismatch));
    let err = Model::compile(&parse_model_spec("d(x)/dt = zeta").unwrap(), &s).unwrap_err();
    assert!(matches!(err, EngineError::Invalid(ref v) if v[0].code == "unresolved-symbol"));
}

fn sample_traj(r: &mut impl Rng, s: &SystemSchema, len: usize) -> Trajectory {
    let times = (0..len).map(|k| k as f64 * s.dt).collect();
    let states = (0..len)
        .map(|_| (0..s.state_dim()).map(|_| r.random_range(-1e3..1e3) / 7.0).collect())
        .collect();
    let actions = (0..len)
        .map(|_| (0..s.action_dim()).map(|_| r.random::<f64>() * 1e-7).collect())
        .collect();
    Trajectory::new(times, states, actions, s).unwrap()
}

#[test]
fn csv_round_trip_is_bit_exact() {
    let s = schema(&["x", "y"], &["u"], 1.0 / 24.0);
    let mut r = common::rng(3);
    let traj = sample_traj(&mut r, &s, 40);
    let mut buf = Vec::new();
    write_trajectory_csv(&mut buf, &traj, &s).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("t,x,y,u\n"));
    let back = read_trajectory_csv(&buf[..], &s).unwrap();
    for (a, b) in traj.states.iter().flatten().zip(back.states.iter().flatten()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    assert_eq!(back, traj);
}

#[test]
fn csv_errors() {
    let s = schema(&["x"], &[], 1.0);
    let bad_header = read_trajectory_csv("time,x\n0,1\n".as_bytes(), &s).unwrap_err();
    assert!(matches!(bad_header, DataIoError::Header { .. }));
    let malformed = read_trajectory_csv("t,x\n0,1\n1,oops\n".as_bytes(), &s).unwrap_err();
    assert!(matches!(malformed, DataIoError::MalformedRow { row: 3, .. }), "{malformed}");
    let short = read_trajectory_csv("t,x\n0,1\n1\n".as_bytes(), &s).unwrap_err();
    assert!(matches!(short, DataIoError::MalformedRow { row: 3, .. }));
    let shuffled = read_trajectory_csv("t,x\n0,1\n2,1\n1,1\n".as_bytes(), &s).unwrap_err();
    assert!(matches!(shuffled, DataIoError::NonMonotoneTime { row: 4 }));
}

#[test]
fn bundle_round_trip() {
    let s = schema(&["x", "y"], &["u"], 0.5);
    let mut r = common::rng(9);
    let mk = |split, r: &mut rand_chacha::ChaCha8Rng| {
        Dataset::new(s.clone(), split, (0..3).map(|_| sample_traj(r, &s, 6)).collect())
    };
    let bundle = DataBundle {
        system: "toy".into(),
        seed: Some(17),
        notes: vec!["dropped 2 trailing rows".into()],
        train: mk(Split::Train, &mut r),
        val: mk(Split::Val, &mut r),
        test: mk(Split::Test, &mut r),
    };
    let dir = tempfile::tempdir().unwrap();
    bundle.write(dir.path()).unwrap();
    let back = DataBundle::read(dir.path()).unwrap();
    assert_eq!(back, bundle);
    assert!(dir.path().join("val/traj-00002.csv").exists());
}
