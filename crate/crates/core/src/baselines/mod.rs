//! Non-agentic reference models, all expressed as model specs.

mod sindy;

pub use sindy::{
    apply_threshold, finite_difference_derivatives, library_variables, polynomial_library, polynomial_spec,
    sindy_fit, Monomial, SindyConfig, SindyFit,
};

use thiserror::Error;

use crate::dsl::{
    format_violations, parse_model_spec, validate, Activation, ComponentDef, Expr, InputRef, MlpDecl, MlpRef,
    ModelSpec, SystemSchema, Violation,
};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("unknown baseline `{0}` (known: {known})", known = BASELINE_IDS.join(", "))]
    Unknown(String),
    #[error("invalid baseline config: {0}")]
    Config(String),
    #[error("dataset has no transitions")]
    Empty,
    #[error("trajectory needs at least 2 rows, has {0}")]
    TooShort(usize),
    #[error("regression failed: {0}")]
    Singular(String),
    #[error("baseline does not fit the schema:\n{}", format_violations(.0))]
    Invalid(Vec<Violation>),
}

pub const BASELINE_IDS: [&str; 7] = [
    "logistic-tumor",
    "logistic-tumor-chemo",
    "logistic-tumor-chemo-radio",
    "lv2",
    "lv3",
    "seir",
    "mlp-twin",
];

pub const MLP_TWIN_HIDDEN: [usize; 3] = [128, 128, 128];

const LOGISTIC_TUMOR: &str = "describe Logistic growth of tumour volume.
param r = 0.01
param K = 1000
d(tumor_volume)/dt = r * tumor_volume * (1 - tumor_volume / K)
";

const LOGISTIC_TUMOR_CHEMO: &str = "describe Logistic tumour growth with a linear chemotherapy kill term and first-order drug clearance.
param r = 0.01
param K = 1000
param b_c = 0.01
param k_c = 0.1
d(tumor_volume)/dt = r * tumor_volume * (1 - tumor_volume / K) - b_c * chemotherapy_drug_concentration * tumor_volume
d(chemotherapy_drug_concentration)/dt = -k_c * chemotherapy_drug_concentration + chemotherapy_dosage
";

const LOGISTIC_TUMOR_CHEMO_RADIO: &str = "describe Logistic tumour growth with linear chemotherapy and radiotherapy kill terms and first-order drug clearance.
param r = 0.01
param K = 1000
param b_c = 0.01
param b_r = 0.01
param k_c = 0.1
d(tumor_volume)/dt = r * tumor_volume * (1 - tumor_volume / K) - b_c * chemotherapy_drug_concentration * tumor_volume - b_r * radiotherapy_dosage * tumor_volume
d(chemotherapy_drug_concentration)/dt = -k_c * chemotherapy_drug_concentration + chemotherapy_dosage
";

const LV2: &str = "describe Two-species Lotka-Volterra predator-prey model.
param alpha = 0.5
param beta = 0.5
param delta = 0.5
param gamma = 0.5
d(hare_population)/dt = alpha * hare_population - beta * hare_population * lynx_population
d(lynx_population)/dt = delta * hare_population * lynx_population - gamma * lynx_population
";

const LV3: &str = "describe Three-species Lotka-Volterra model with one prey and two predators.
param alpha = 0.5
param beta = 0.5
param delta = 0.5
param gamma = 0.5
param epsilon = 0.5
param mu = 0.5
param nu = 0.5
d(prey_population)/dt = prey_population * (alpha - beta * intermediate_population - delta * top_predators_population)
d(intermediate_population)/dt = intermediate_population * (-gamma + epsilon * prey_population)
d(top_predators_population)/dt = top_predators_population * (-mu + nu * prey_population)
";

const SEIR: &str = "describe SEIR compartmental model on population fractions.
param beta = 0.5
param sigma = 0.5
param gamma = 0.5
param delta = 0.01
d(susceptible)/dt = -beta * susceptible * infected
d(exposed)/dt = beta * susceptible * infected - sigma * exposed
d(infected)/dt = sigma * exposed - (gamma + delta) * infected
d(recovered)/dt = (gamma + delta) * infected
";

/// Single network over every state and action, one output per state.
pub fn mlp_twin(schema: &SystemSchema) -> ModelSpec {
    let inputs = schema
        .state_names()
        .map(|n| InputRef::State(n.to_string()))
        .chain(schema.action_names().map(|n| InputRef::Action(n.to_string())))
        .collect();
    let mlp = MlpDecl {
        name: "twin".into(),
        inputs,
        hidden: MLP_TWIN_HIDDEN.to_vec(),
        activation: Activation::Tanh,
        outputs: schema.state_dim(),
    };
    let components = schema
        .state_names()
        .enumerate()
        .map(|(j, n)| ComponentDef {
            target: n.to_string(),
            expr: Expr::Const(0.0),
            residual: Some(MlpRef {
                mlp: "twin".into(),
                index: j,
            }),
        })
        .collect();
    ModelSpec {
        components,
        params: Vec::new(),
        mlps: vec![mlp],
        metadata: "Black-box neural network over states and actions.".into(),
    }
}

/// Reference spec `id`, checked against `schema`.
pub fn builtin_baseline_spec(id: &str, schema: &SystemSchema) -> Result<ModelSpec, BaselineError> {
    let spec = match id {
        "mlp-twin" => mlp_twin(schema),
        _ => {
            let src = match id {
                "logistic-tumor" => LOGISTIC_TUMOR,
                "logistic-tumor-chemo" => LOGISTIC_TUMOR_CHEMO,
                "logistic-tumor-chemo-radio" => LOGISTIC_TUMOR_CHEMO_RADIO,
                "lv2" => LV2,
                "lv3" => LV3,
                "seir" => SEIR,
                _ => return Err(BaselineError::Unknown(id.to_string())),
            };
            parse_model_spec(src).expect("built-in baselines parse")
        }
    };
    let violations = validate(&spec, schema);
    if !violations.is_empty() {
        return Err(BaselineError::Invalid(violations));
    }
    Ok(spec)
}

/// Default baseline for a built-in system id.
pub fn default_baseline_for(system: &str) -> Option<&'static str> {
    Some(match system {
        "cancer" => "logistic-tumor",
        "cancer-chemo" => "logistic-tumor-chemo",
        "cancer-chemo-radio" | "synthetic-1" | "synthetic-2" | "synthetic-3" | "synthetic-4" | "synthetic-5" => {
            "logistic-tumor-chemo-radio"
        }
        "lv2" => "lv2",
        "lv3-plankton" => "lv3",
        "seir-covid" => "seir",
        _ => return None,
    })
}
