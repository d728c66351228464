//! Built-in benchmark systems, their seeded data generators, and a loader
//! for single-trajectory real-data CSV files.

mod catalog;
mod load;

pub use load::{load_csv_dataset, load_csv_reader, SplitRule};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{ModelSpec, SystemSchema};
use crate::engine::{DataBundle, Dataset, EngineError, Model, ParamVector, Split, Trajectory};

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("unknown system `{0}` (known: {known})", known = SYSTEM_IDS.join(", "))]
    Unknown(String),
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("simulation failed: {0}")]
    Simulation(#[from] EngineError),
    #[error("could not draw an out-of-distribution test trajectory after {0} attempts")]
    OodExhausted(usize),
}

pub const SYSTEM_IDS: [&str; 11] = [
    "cancer",
    "cancer-chemo",
    "cancer-chemo-radio",
    "seir-covid",
    "lv2",
    "lv3-plankton",
    "synthetic-1",
    "synthetic-2",
    "synthetic-3",
    "synthetic-4",
    "synthetic-5",
];

/// Dosing rule: treatment probability rises with tumour diameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CancerPolicy {
    /// Largest tumour diameter, in cm.
    pub d_max: f64,
    pub theta_c: f64,
    pub theta_r: f64,
    pub gamma_c: f64,
    pub gamma_r: f64,
    pub chemo_dose: f64,
    pub radio_dose: f64,
    pub chemo: bool,
    pub radio: bool,
}

impl CancerPolicy {
    pub fn new(chemo: bool, radio: bool) -> Self {
        CancerPolicy {
            d_max: 13.0,
            theta_c: 6.5,
            theta_r: 6.5,
            gamma_c: 2.0,
            gamma_r: 2.0,
            chemo_dose: 5.0,
            radio_dose: 2.0,
            chemo,
            radio,
        }
    }

    /// Action row for this policy's treatments, in schema order.
    fn actions(&self, volume: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let (c, r) = sample_cancer_actions(volume, self, rng);
        let mut out = Vec::with_capacity(2);
        if self.chemo {
            out.push(c);
        }
        if self.radio {
            out.push(r);
        }
        out
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Diameter of a sphere of volume `v`.
pub fn volume_to_diameter(v: f64) -> f64 {
    (6.0 * v.max(0.0) / std::f64::consts::PI).cbrt()
}

/// Treatment probabilities `(p_chemo, p_radio)` at a tumour volume.
pub fn treatment_probabilities(volume: f64, policy: &CancerPolicy) -> (f64, f64) {
    let d = volume_to_diameter(volume);
    (
        sigmoid(policy.gamma_c / policy.d_max * (d - policy.theta_c)),
        sigmoid(policy.gamma_r / policy.d_max * (d - policy.theta_r)),
    )
}

/// Draws both doses; chemotherapy is drawn first, then radiotherapy.
pub fn sample_cancer_actions(volume: f64, policy: &CancerPolicy, rng: &mut impl Rng) -> (f64, f64) {
    let (pc, pr) = treatment_probabilities(volume, policy);
    let c = if rng.random_bool(pc) { policy.chemo_dose } else { 0.0 };
    let r = if rng.random_bool(pr) { policy.radio_dose } else { 0.0 };
    (c, r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitSampler {
    /// Tumour volume uniform on `[low, high)`, drug concentration 0.
    TumorVolume { low: f64, high: f64 },
    /// Infected fraction uniform on `[low, high)`, the rest susceptible.
    Epidemic { low: f64, high: f64 },
    /// Independent uniform ranges per state.
    Box(Vec<(f64, f64)>),
}

impl InitSampler {
    fn sample(&self, dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            InitSampler::TumorVolume { low, high } => {
                let mut x = vec![0.0; dim];
                x[0] = rng.random_range(*low..*high);
                x
            }
            InitSampler::Epidemic { low, high } => {
                let i = rng.random_range(*low..*high);
                vec![1.0 - i, 0.0, i, 0.0]
            }
            InitSampler::Box(r) => r.iter().map(|(lo, hi)| rng.random_range(*lo..*hi)).collect(),
        }
    }

    fn with_range(&self, low: f64, high: f64) -> InitSampler {
        match self {
            InitSampler::TumorVolume { .. } => InitSampler::TumorVolume { low, high },
            InitSampler::Epidemic { .. } => InitSampler::Epidemic { low, high },
            InitSampler::Box(r) => {
                let mut r = r.clone();
                r[0] = (low, high);
                InitSampler::Box(r)
            }
        }
    }
}

/// A fully parameterized ground-truth system.
#[derive(Debug, Clone)]
pub struct SystemDef {
    pub id: String,
    pub schema: SystemSchema,
    /// True dynamics as a spec with its true values as inits.
    pub truth: ModelSpec,
    pub policy: Option<CancerPolicy>,
    pub init: InitSampler,
    /// Euler steps per trajectory (rows = steps + 1).
    pub steps: usize,
    /// Default trajectories per split.
    pub trajectories: usize,
    /// Text describing the system to a modeling agent.
    pub description: String,
    pub requirements: String,
}

pub fn builtin_system(id: &str) -> Result<SystemDef, SystemError> {
    let unknown = || SystemError::Unknown(id.to_string());
    let schema = catalog::schema(id).ok_or_else(unknown)?;
    let truth = catalog::truth_spec(id).ok_or_else(unknown)?;
    let tumor = InitSampler::TumorVolume {
        low: 0.0,
        high: 1149.0,
    };
    let (policy, init, steps, n) = match id {
        "cancer" => (None, tumor, 60, 1000),
        "cancer-chemo" => (Some(CancerPolicy::new(true, false)), tumor, 60, 1000),
        _ if catalog::CANCER_IDS.contains(&id) || catalog::SYNTHETIC_IDS.contains(&id) => {
            (Some(CancerPolicy::new(true, true)), tumor, 60, 1000)
        }
        "seir-covid" => (
            None,
            InitSampler::Epidemic {
                low: 0.01,
                high: 0.1,
            },
            60,
            24,
        ),
        "lv2" => (None, InitSampler::Box(vec![(1.0, 3.0), (0.5, 1.5)]), 100, 100),
        "lv3-plankton" => (None, InitSampler::Box(vec![(0.5, 1.5); 3]), 100, 100),
        _ => return Err(unknown()),
    };
    let description = catalog::description(id, &schema, n, steps).ok_or_else(unknown)?;
    Ok(SystemDef {
        id: id.to_string(),
        schema,
        truth,
        policy,
        init,
        steps,
        trajectories: n,
        description,
        requirements: catalog::requirements(id),
    })
}

/// Change of one true parameter partway through a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intervention {
    /// Time from which the scaled value applies.
    pub day: f64,
    pub param: String,
    pub factor: f64,
}

impl Default for Intervention {
    fn default() -> Self {
        Intervention {
            day: 19.0,
            param: "beta".into(),
            factor: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    /// Trajectories per split; `None` uses the system default.
    pub trajectories: Option<usize>,
    pub seed: u64,
    /// Out-of-distribution recipe: train/val start in `ood_train_range`,
    /// test in `ood_test_range`, at step `ood_dt`, with no overlap of
    /// visited first-state values.
    pub ood: bool,
    pub ood_train_range: (f64, f64),
    pub ood_test_range: (f64, f64),
    pub ood_dt: f64,
    /// Applied to the test split only.
    pub intervention: Option<Intervention>,
    /// Overrides of the time step and first-state initial range for all splits.
    pub dt: Option<f64>,
    pub init_range: Option<(f64, f64)>,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            trajectories: None,
            seed: 0,
            ood: false,
            ood_train_range: (0.0, 574.0),
            ood_test_range: (804.0, 1149.0),
            ood_dt: 1.0 / 24.0,
            intervention: None,
            dt: None,
            init_range: None,
        }
    }
}

/// Attempts per test trajectory before the OOD recipe gives up.
const OOD_MAX_ATTEMPTS: usize = 10_000;

struct Simulator<'a> {
    sys: &'a SystemDef,
    model: Model,
    params: ParamVector,
    intervened: Option<(f64, ParamVector)>,
    dt: f64,
}

impl Simulator<'_> {
    fn trajectory(&self, init: &InitSampler, rng: &mut ChaCha8Rng) -> Result<Trajectory, EngineError> {
        let dim = self.sys.schema.state_dim();
        let mut x = init.sample(dim, rng);
        let mut ws = self.model.workspace();
        let rows = self.sys.steps + 1;
        let mut times = Vec::with_capacity(rows);
        let mut states = Vec::with_capacity(rows);
        let mut actions = Vec::with_capacity(rows);
        for k in 0..rows {
            let t = k as f64 * self.dt;
            let u = match &self.sys.policy {
                Some(p) => p.actions(x[0], rng),
                None => Vec::new(),
            };
            times.push(t);
            states.push(x.clone());
            if k + 1 < rows {
                let params = match &self.intervened {
                    Some((day, p)) if t >= *day => p,
                    _ => &self.params,
                };
                let mut next = vec![0.0; dim];
                self.model
                    .euler_step_into(params, &x, &u, t, self.dt, &mut ws, &mut next)
                    .map_err(|e| match e {
                        EngineError::EvalFault { component, target } => EngineError::RolloutFault {
                            step: k,
                            component,
                            target,
                        },
                        other => other,
                    })?;
                x = next;
            }
            actions.push(u);
        }
        Ok(Trajectory {
            times,
            states,
            actions,
        })
    }
}

fn split_rng(seed: u64, split: Split) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(match split {
        Split::Train => 1,
        Split::Val => 2,
        Split::Test => 3,
    });
    rng
}

fn first_state_range(ds: &Dataset) -> (f64, f64) {
    ds.trajectories
        .iter()
        .flat_map(|t| t.states.iter().map(|s| s[0]))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Generates train/val/test datasets from independent seeded streams.
pub fn generate_dataset(sys: &SystemDef, cfg: &GenConfig) -> Result<DataBundle, SystemError> {
    let n = cfg.trajectories.unwrap_or(sys.trajectories);
    if n == 0 {
        return Err(SystemError::Config("trajectories must be at least 1".into()));
    }
    let mut dt = cfg.dt.unwrap_or(sys.schema.dt);
    let mut train_init = sys.init.clone();
    if let Some((lo, hi)) = cfg.init_range {
        if !(lo < hi) {
            return Err(SystemError::Config("init_range must have low < high".into()));
        }
        train_init = train_init.with_range(lo, hi);
    }
    let mut test_init = train_init.clone();
    let mut notes = Vec::new();
    if cfg.ood {
        let (a, b) = cfg.ood_train_range;
        let (c, d) = cfg.ood_test_range;
        if !(a < b && c < d && b <= c) {
            return Err(SystemError::Config(
                "ood ranges must be ordered and disjoint (train below test)".into(),
            ));
        }
        dt = cfg.ood_dt;
        train_init = sys.init.with_range(a, b);
        test_init = sys.init.with_range(c, d);
        notes.push(format!(
            "ood: train/val initial range [{a}, {b}), test [{c}, {d}), dt {dt}"
        ));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SystemError::Config(format!("time step must be positive, got {dt}")));
    }
    let schema = sys.schema.with_dt(dt);
    let model = Model::compile(&sys.truth, &schema)?;
    let params = model.init_params(0);
    let base = Simulator {
        sys,
        model,
        params,
        intervened: None,
        dt,
    };

    let mut datasets = Vec::with_capacity(3);
    for split in [Split::Train, Split::Val] {
        let mut rng = split_rng(cfg.seed, split);
        let trajs = (0..n)
            .map(|_| base.trajectory(&train_init, &mut rng))
            .collect::<Result<Vec<_>, _>>()?;
        datasets.push(Dataset::new(schema.clone(), split, trajs));
    }

    let mut test_sim = base;
    if let Some(iv) = &cfg.intervention {
        let mut p = test_sim.params.clone();
        let Some(v) = p.scalar(&iv.param) else {
            return Err(SystemError::Config(format!(
                "system `{}` has no parameter `{}`",
                sys.id, iv.param
            )));
        };
        p.set_scalar(&iv.param, v * iv.factor);
        test_sim.intervened = Some((iv.day, p));
        notes.push(format!(
            "intervention: {} scaled by {} from t = {} (test split only)",
            iv.param, iv.factor, iv.day
        ));
    }
    let mut rng = split_rng(cfg.seed, Split::Test);
    let mut test = Vec::with_capacity(n);
    let seen_max = if cfg.ood {
        datasets.iter().map(first_state_range).map(|r| r.1).fold(f64::NEG_INFINITY, f64::max)
    } else {
        f64::NEG_INFINITY
    };
    let mut rejected = 0usize;
    for _ in 0..n {
        let mut attempts = 0;
        loop {
            let traj = test_sim.trajectory(&test_init, &mut rng)?;
            let min = traj.states.iter().map(|s| s[0]).fold(f64::INFINITY, f64::min);
            if !cfg.ood || min > seen_max {
                test.push(traj);
                break;
            }
            attempts += 1;
            rejected += 1;
            if attempts >= OOD_MAX_ATTEMPTS {
                return Err(SystemError::OodExhausted(attempts));
            }
        }
    }
    if cfg.ood {
        notes.push(format!(
            "ood: {rejected} test trajectories redrawn because they entered the train/val range (max {seen_max:?})"
        ));
    }
    datasets.push(Dataset::new(schema, Split::Test, test));
    let test = datasets.pop().expect("three splits");
    let val = datasets.pop().expect("three splits");
    let train = datasets.pop().expect("three splits");
    Ok(DataBundle {
        system: sys.id.clone(),
        seed: Some(cfg.seed),
        notes,
        train,
        val,
        test,
    })
}
