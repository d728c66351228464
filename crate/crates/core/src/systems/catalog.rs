//! Ground-truth dynamics and prompt descriptions of the built-in systems.

use crate::dsl::{parse_model_spec, ModelSpec, SystemSchema, VarSpec};

/// Tumour growth with both treatments; the narrower variants drop terms.
const CANCER_TUMOR_CHEMO_RADIO: &str = "d(tumor_volume)/dt = (rho * log(K / tumor_volume) - beta_c * chemotherapy_drug_concentration - (alpha_r * radiotherapy_dosage + beta_r * radiotherapy_dosage ^ 2)) * tumor_volume";
const CANCER_TUMOR_CHEMO: &str = "d(tumor_volume)/dt = (rho * log(K / tumor_volume) - beta_c * chemotherapy_drug_concentration) * tumor_volume";
const CANCER_TUMOR: &str = "d(tumor_volume)/dt = rho * log(K / tumor_volume) * tumor_volume";
const CANCER_DRUG: &str = "d(chemotherapy_drug_concentration)/dt = -0.5 * chemotherapy_drug_concentration + chemotherapy_dosage";

const CANCER_PARAMS: &str = "param rho = 7e-5\nparam K = 30\nparam beta_c = 0.028\nparam alpha_r = 0.0398\nparam beta_r = 0.00398\n";

pub(super) const CANCER_IDS: [&str; 3] = ["cancer", "cancer-chemo", "cancer-chemo-radio"];
pub(super) const SYNTHETIC_IDS: [&str; 5] = [
    "synthetic-1",
    "synthetic-2",
    "synthetic-3",
    "synthetic-4",
    "synthetic-5",
];

pub(super) fn truth_source(id: &str) -> Option<String> {
    let synthetic = |params: &str, x: &str, extra: &str| {
        format!(
            "{CANCER_PARAMS}{params}d(tumor_volume)/dt = (rho * log(K / {x}) - beta_c * chemotherapy_drug_concentration - (alpha_r * radiotherapy_dosage + beta_r * radiotherapy_dosage ^ 2){extra}) * tumor_volume\n{CANCER_DRUG}\n"
        )
    };
    Some(match id {
        "cancer" => format!("param rho = 7e-5\nparam K = 30\n{CANCER_TUMOR}\n"),
        "cancer-chemo" => format!("param rho = 7e-5\nparam K = 30\nparam beta_c = 0.028\n{CANCER_TUMOR_CHEMO}\n{CANCER_DRUG}\n"),
        "cancer-chemo-radio" => format!("{CANCER_PARAMS}{CANCER_TUMOR_CHEMO_RADIO}\n{CANCER_DRUG}\n"),
        "synthetic-1" => synthetic(
            "param gamma = 0.02\nparam omega = 0.3\n",
            "tumor_volume",
            " + gamma * sin(omega * t)",
        ),
        "synthetic-2" => synthetic("param delta = 0.005\nparam I = 10\n", "tumor_volume", " - delta * I"),
        "synthetic-3" => synthetic("param N = 10\n", "(tumor_volume + N)", ""),
        "synthetic-4" => synthetic(
            "param epsilon = 0.02\nparam phi = 0.3\n",
            "tumor_volume",
            " + epsilon * cos(phi * t)",
        ),
        "synthetic-5" => synthetic(
            "param theta = 0.01\n",
            "tumor_volume",
            " - theta * chemotherapy_drug_concentration * radiotherapy_dosage",
        ),
        "seir-covid" => "param beta = 0.3\nparam sigma = 0.2\nparam gamma = 0.1\nparam delta = 0\n\
            d(susceptible)/dt = -beta * susceptible * infected\n\
            d(exposed)/dt = beta * susceptible * infected - sigma * exposed\n\
            d(infected)/dt = sigma * exposed - (gamma + delta) * infected\n\
            d(recovered)/dt = (gamma + delta) * infected\n"
            .to_string(),
        "lv2" => "param alpha = 0.8\nparam beta = 0.4\nparam delta = 0.3\nparam gamma = 0.6\n\
            d(hare_population)/dt = alpha * hare_population - beta * hare_population * lynx_population\n\
            d(lynx_population)/dt = delta * hare_population * lynx_population - gamma * lynx_population\n"
            .to_string(),
        "lv3-plankton" => "param alpha = 1\nparam beta = 0.5\nparam delta = 0.3\nparam gamma = 0.6\nparam epsilon = 0.4\nparam mu = 0.4\nparam nu = 0.3\n\
            d(prey_population)/dt = prey_population * (alpha - beta * intermediate_population - delta * top_predators_population)\n\
            d(intermediate_population)/dt = intermediate_population * (-gamma + epsilon * prey_population)\n\
            d(top_predators_population)/dt = top_predators_population * (-mu + nu * prey_population)\n"
            .to_string(),
        _ => return None,
    })
}

pub(super) fn truth_spec(id: &str) -> Option<ModelSpec> {
    let src = truth_source(id)?;
    Some(parse_model_spec(&src).expect("built-in truth specs parse"))
}

fn v(name: &str, low: f64, high: f64) -> VarSpec {
    VarSpec::new(name, low, high)
}

pub(super) fn schema(id: &str) -> Option<SystemSchema> {
    let conc = v("chemotherapy_drug_concentration", 0.0, 9.9975);
    let chemo = v("chemotherapy_dosage", 0.0, 5.0);
    let radio = v("radiotherapy_dosage", 0.0, 2.0);
    let (states, actions, units, dt) = match id {
        "cancer" => (vec![v("tumor_volume", 0.64196031, 4852.45734281)], vec![], "days", 1.0),
        "cancer-chemo" => (
            vec![v("tumor_volume", 0.64196031, 1260.60290569), conc],
            vec![chemo],
            "days",
            1.0,
        ),
        "cancer-chemo-radio" | "synthetic-1" | "synthetic-2" | "synthetic-3" | "synthetic-4"
        | "synthetic-5" => (
            vec![v("tumor_volume", 0.01433, 1170.861), conc],
            vec![chemo, radio],
            "days",
            1.0,
        ),
        "seir-covid" => (
            ["susceptible", "exposed", "infected", "recovered"]
                .iter()
                .map(|n| v(n, 0.0, 1.0))
                .collect(),
            vec![],
            "days",
            1.0,
        ),
        "lv2" => (
            vec![v("hare_population", 0.0, 10.0), v("lynx_population", 0.0, 10.0)],
            vec![],
            "years",
            0.05,
        ),
        "lv3-plankton" => (
            vec![
                v("prey_population", 0.0, 5.0),
                v("intermediate_population", 0.0, 5.0),
                v("top_predators_population", 0.0, 5.0),
            ],
            vec![],
            "days",
            0.05,
        ),
        _ => return None,
    };
    Some(SystemSchema::new(states, actions, units, dt).expect("built-in schemas are valid"))
}

fn ranges(schema: &SystemSchema) -> String {
    schema
        .states
        .iter()
        .chain(&schema.actions)
        .map(|v| format!("* {}: [{}, {}]", v.name, v.low, v.high))
        .collect::<Vec<_>>()
        .join("\n")
}

const CANCER_TITLE: &str = "Prediction of Treatment Response for Combined Chemo and Radiation Therapy for Non-Small Cell Lung Cancer Patients Using a Bio-Mathematical Model";

/// Free-text system description placed in the modeling prompt.
pub(super) fn description(id: &str, schema: &SystemSchema, n: usize, steps: usize) -> Option<String> {
    let r = ranges(schema);
    let cancer_vars = "* tumor_volume: Volume of the tumor with units cm^3";
    let conc_var = "* chemotherapy_drug_concentration: Concentration of the chemotherapy drug vinblastine with units mg/m^3";
    let chemo_var = "* chemotherapy_dosage: Dosage of the chemotherapy drug vinblastine with units mg/m^3";
    let radio_var = "* radiotherapy_dosage: Dosage of the radiotherapy with units Gy";
    let patients = format!("The training dataset consists of {n} patients, where each patient is observed for {steps} days.");
    Some(match id {
        "cancer" => format!(
            "{CANCER_TITLE}\n\nHere you must model the state differential of tumor_volume. There are not treatments applied.\n\nDescription of the variables:\n{cancer_vars}\n\nThe time units is in days.\n\nAdditionally these variables have the ranges of:\n{r}\n\n{patients}"
        ),
        "cancer-chemo" => format!(
            "{CANCER_TITLE}\n\nHere you must model the state differential of tumor_volume, and chemotherapy_drug_concentration; with the input actions of chemotherapy_dosage.\n\nDescription of the variables:\n{cancer_vars}\n{conc_var}\n{chemo_var}\n\nThe time units is in days.\n\nAdditionally these variables have the ranges of:\n{r}\n\n{patients}"
        ),
        "cancer-chemo-radio" | "synthetic-1" | "synthetic-2" | "synthetic-3" | "synthetic-4"
        | "synthetic-5" => format!(
            "{CANCER_TITLE}\n\nHere you must model the state differential of tumor_volume, and chemotherapy_drug_concentration; with the input actions of chemotherapy_dosage, and radiotherapy_dosage.\n\nDescription of the variables:\n{cancer_vars}\n{conc_var}\n{chemo_var}\n{radio_var}\n\nThe time units is in days.\n\nAdditionally these variables have the ranges of:\n{r}\n\n{patients}"
        ),
        "seir-covid" => format!(
            "Prediction model of COVID-19 Epidemic Dynamics\n\nHere you must model the state differential of susceptible, exposed, infected and recovered. There are no interventions applied. Here the states are normalized ratios of the total fixed population.\n\nDescription of the variables:\n* susceptible: Ratio of the population that is susceptible to the virus. \n* exposed: Ratio of the population that is exposed to the virus, not yet infectious.\n* infected: Ratio of the population that is actively carrying and transmitting the virus.\n* recovered: Ratio of the population that have recovered from the virus, including those who are deceased.\n\nThe time units is in days.\n\nAdditionally these variables have the ranges of:\n{r}\n\nThe training dataset consists of {n} countries, where each country is observed for {steps} days."
        ),
        "lv2" => format!(
            "Modeling Di-Trophic Prey-Predator Dynamics in a Hare and Lynx Ecological System\n\nHere you must model the state differential of hare_population, and lynx_population; with no input actions. This aims to simulate the population dynamics within a simplified di-trophic ecological system comprising prey (hares), and predators (lynxes). The interactions include direct predation and competition for resources, mirroring natural predator-prey mechanisms.\n\nDescription of the variables:\n* hare_population: Size of the hare population, in tens of thousands.\n* lynx_population: Size of the lynx population, in tens of thousands.\n\nThe time units is in years, sampled every {dt} years.\n\nAdditionally these variables have the ranges of:\n{r}\n\nThe training dataset consists of {n} trajectories, each observed for {steps} time steps.",
            dt = schema.dt
        ),
        "lv3-plankton" => format!(
            "Modeling Artificial Tri-Trophic Prey-Predator Oscillations in a Simplified Ecological System\n\nHere you must model the state differential of prey_population, intermediate_population, and top_predators_population; with no input actions. This aims to simulate the population dynamics within a simplified tri-trophic ecological system comprising prey (algae), intermediate predators (flagellates), and top predators (rotifers). The interactions include direct predation and competition for resources, mirroring natural intraguild predation mechanisms.\n\nDescription of the variables:\n* prey_population: Total count of algae, serving as the primary prey\n* intermediate_population: Total count of flagellates, acting as intermediate predators and prey\n* top_predators_population: Total count of rotifers, representing top predators\n\nThe time units is in days, sampled every {dt} days.\n\nAdditionally these variables have the ranges of:\n{r}\n\nThe training dataset consists of {n} trajectories, each observed for {steps} time steps.",
            dt = schema.dt
        ),
        _ => return None,
    })
}

/// Requirement text; the epidemic data is fit to a tighter target.
pub(super) fn requirements(id: &str) -> String {
    let target = if id == "seir-covid" { "1e-10" } else { "1e-6" };
    format!(
        "* The code generated should achieve the lowest possible validation loss, of {target} or less.\n* The code generated should be interpretable, and fit the dataset as accurately as possible."
    )
}
