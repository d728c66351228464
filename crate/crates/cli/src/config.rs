//! Run config file read by `evolve --config`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use hdtwin::agents::{parse_replay, EndpointConfig, ReplayEntry};
use hdtwin::baselines::SindyConfig;
use hdtwin::engine::DataBundle;
use hdtwin::orchestrator::{EvolveConfig, Method};
use hdtwin::systems::{GenConfig, SYSTEM_IDS};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ClientMode {
    Http,
    Replay(PathBuf),
}

impl FromStr for ClientMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            _ if s == "http" => Ok(ClientMode::Http),
            Some(("replay", path)) if !path.is_empty() => Ok(ClientMode::Replay(PathBuf::from(path))),
            _ => Err(format!("unknown client `{s}` (expected http or replay:<path>)")),
        }
    }
}

impl TryFrom<String> for ClientMode {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl fmt::Display for ClientMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClientMode::Http => f.write_str("http"),
            ClientMode::Replay(p) => write!(f, "replay:{}", p.display()),
        }
    }
}

impl From<ClientMode> for String {
    fn from(c: ClientMode) -> String {
        c.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfigFile {
    pub system: String,
    pub method: Method,
    pub seeds: Vec<u64>,
    pub client: ClientMode,
    pub out: PathBuf,
    /// Data bundle shared by every seed; generated per seed when absent.
    pub data: Option<PathBuf>,
    pub evolve: EvolveConfig,
    pub generator: GenConfig,
    pub sindy: SindyConfig,
    pub endpoint: EndpointConfig,
}

impl Default for RunConfigFile {
    fn default() -> Self {
        RunConfigFile {
            system: "cancer".into(),
            method: Method::Evolve,
            seeds: vec![0],
            client: ClientMode::Http,
            out: PathBuf::from("runs"),
            data: None,
            evolve: EvolveConfig::default(),
            generator: GenConfig::default(),
            sindy: SindyConfig::default(),
            endpoint: EndpointConfig::default(),
        }
    }
}

/// Help text listing every config file key with its default.
pub fn config_help() -> String {
    let defaults = toml::to_string(&RunConfigFile::default()).unwrap_or_default();
    format!(
        "Run config file (evolve --config FILE). Relative paths resolve against the file's directory.\n\
         Every key is optional; defaults:\n\n{defaults}\n\
         Keys unset by default:\n  \
         data = \"DIR\"                       shared data bundle\n  \
         evolve.human_feedback_dir = \"DIR\"  gen-XXX.txt notes for generation XXX\n  \
         generator.trajectories = N\n  \
         generator.dt = F\n  \
         generator.init_range = [LO, HI]\n  \
         [generator.intervention]           day = 19.0, param = \"beta\", factor = 0.25\n\n\
         method: evolve | zero-shot | zero-optim | baseline:<id> | sindy\n\
         client: http | replay:<path>\n\
         Only the API key comes from the environment (endpoint.api_key_env).\n"
    )
}

/// A config file with its paths resolved and checked.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub file: RunConfigFile,
    pub replay: Option<Vec<ReplayEntry>>,
    pub data: Option<DataBundle>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn load(path: &Path, out_override: Option<&Path>) -> anyhow::Result<LoadedConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut file: RunConfigFile = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));

    if !SYSTEM_IDS.contains(&file.system.as_str()) {
        bail!("unknown system `{}` (known: {})", file.system, SYSTEM_IDS.join(", "));
    }
    if file.seeds.is_empty() {
        bail!("seeds must list at least one seed");
    }
    file.out = match out_override {
        Some(o) => o.to_path_buf(),
        None => resolve(base, &file.out),
    };
    file.evolve.check()?;
    file.sindy.check()?;

    if let Some(dir) = &file.evolve.human_feedback_dir {
        let dir = resolve(base, dir);
        if !dir.is_dir() {
            bail!("human feedback directory {} does not exist", dir.display());
        }
        file.evolve.human_feedback_dir = Some(dir);
    }

    let replay = match &file.client {
        ClientMode::Replay(p) if file.method.uses_client() => {
            let p = resolve(base, p);
            let text = fs::read_to_string(&p).with_context(|| format!("reading replay file {}", p.display()))?;
            let entries = parse_replay(&text).with_context(|| format!("parsing replay file {}", p.display()))?;
            file.client = ClientMode::Replay(p);
            Some(entries)
        }
        _ => None,
    };

    let data = match &file.data {
        Some(p) => {
            let p = resolve(base, p);
            let bundle = DataBundle::read(&p).with_context(|| format!("reading data bundle {}", p.display()))?;
            if bundle.system != file.system {
                bail!(
                    "data bundle {} holds system `{}`, config names `{}`",
                    p.display(),
                    bundle.system,
                    file.system
                );
            }
            file.data = Some(p);
            Some(bundle)
        }
        None => None,
    };

    Ok(LoadedConfig { file, replay, data })
}
