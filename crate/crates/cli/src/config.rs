//! Run configuration: one JSON file plus per-flag overrides, flags win.
//! Every section is validated before any work starts; unknown keys are
//! rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use flsa_core::eval::EvalConfig;
use flsa_core::flsa::FlsaConfig;
use flsa_core::gateway::{
    Gateway, HttpBackend, ResponseCache, RetryPolicy, ScriptedBackend,
};
use flsa_core::hiersample::SampleConfig;
use flsa_core::prompts::PromptSet;

use crate::CliError;

pub const API_KEY_ENV: &str = "FLSA_API_KEY";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "kind")]
pub enum BackendSpec {
    Http { endpoint: String, model: String },
    Scripted { rules: PathBuf },
}

/// The config file shape. Every field is optional; module defaults apply
/// underneath.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub backend: Option<BackendSpec>,
    pub cache: Option<PathBuf>,
    pub seed: Option<u64>,
    pub parallel: Option<usize>,
    pub budget: Option<u64>,
    pub rate_limit: Option<f64>,
    pub templates: Option<PathBuf>,
    pub flsa: Option<FlsaConfig>,
    pub eval: Option<EvalConfig>,
    pub sample: Option<SampleConfig>,
    pub bigram_smoothing: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let data = std::fs::read_to_string(path)
            .map_err(|e| CliError::validation(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&data)
            .map_err(|e| CliError::validation(format!("invalid config {}: {e}", path.display())))
    }

    pub fn load_opt(path: Option<&PathBuf>) -> Result<Self, CliError> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(RunConfig::default()),
        }
    }
}

/// Gateway-facing flags shared by every subcommand that issues model
/// calls. Flags override the config file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct GatewayArgs {
    /// Backend: "scripted:<rules.jsonl>" or "http"
    #[arg(long)]
    pub backend: Option<String>,
    /// OpenAI-compatible API base URL (http backend)
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Model name sent to the http backend
    #[arg(long)]
    pub model: Option<String>,
    /// Response cache file (JSONL, append-only)
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Maximum concurrent gateway calls
    #[arg(long)]
    pub parallel: Option<usize>,
    /// Abort (with checkpoint) after this many backend calls
    #[arg(long)]
    pub budget: Option<u64>,
    /// Maximum backend requests per second
    #[arg(long)]
    pub rate_limit: Option<f64>,
    /// Directory of prompt template overrides
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Render and print the prompts that would be sent, calling nothing
    #[arg(long)]
    pub dry_run: bool,
}

/// Everything a command needs to talk to the model.
pub struct GatewaySetup {
    pub gateway: Gateway,
    pub prompts: PromptSet,
    pub parallel: usize,
}

fn parse_backend_flag(flag: &str, endpoint: Option<&str>, model: Option<&str>) -> Result<BackendSpec, CliError> {
    if let Some(rules) = flag.strip_prefix("scripted:") {
        if rules.is_empty() {
            return Err(CliError::validation("scripted backend needs a rule file: scripted:<path>"));
        }
        return Ok(BackendSpec::Scripted {
            rules: PathBuf::from(rules),
        });
    }
    if flag == "http" {
        return Ok(BackendSpec::Http {
            endpoint: endpoint
                .ok_or_else(|| CliError::validation("http backend needs --endpoint"))?
                .to_string(),
            model: model
                .ok_or_else(|| CliError::validation("http backend needs --model"))?
                .to_string(),
        });
    }
    Err(CliError::validation(format!(
        "unknown backend {flag:?}; expected \"http\" or \"scripted:<path>\""
    )))
}

pub fn build_gateway(args: &GatewayArgs, config: &RunConfig) -> Result<GatewaySetup, CliError> {
    let spec = match &args.backend {
        Some(flag) => Some(parse_backend_flag(
            flag,
            args.endpoint.as_deref(),
            args.model.as_deref(),
        )?),
        None => match (&args.endpoint, &args.model) {
            // Endpoint+model flags alone imply the http backend.
            (Some(endpoint), Some(model)) => Some(BackendSpec::Http {
                endpoint: endpoint.clone(),
                model: model.clone(),
            }),
            _ => config.backend.clone(),
        },
    };
    let spec = spec.ok_or_else(|| {
        CliError::validation("no backend configured; pass --backend or set one in the config file")
    })?;

    let backend: Box<dyn flsa_core::gateway::Backend> = match &spec {
        BackendSpec::Scripted { rules } => Box::new(
            ScriptedBackend::from_file(rules).map_err(|e| CliError::validation(e.to_string()))?,
        ),
        BackendSpec::Http { endpoint, model } => {
            let key = std::env::var(API_KEY_ENV).unwrap_or_default();
            Box::new(
                HttpBackend::new(endpoint, &key, model, RetryPolicy::default())
                    .map_err(|e| CliError::validation(e.to_string()))?,
            )
        }
    };
    let mut gateway = Gateway::new(backend);
    if let Some(path) = args.cache.as_ref().or(config.cache.as_ref()) {
        let cache = ResponseCache::open(path).map_err(|e| CliError::validation(e.to_string()))?;
        gateway = gateway.with_cache(cache);
    }
    if let Some(rps) = args.rate_limit.or(config.rate_limit) {
        if rps <= 0.0 {
            return Err(CliError::validation("--rate-limit must be positive"));
        }
        gateway = gateway.with_rate_limit(rps);
    }
    if let Some(budget) = args.budget.or(config.budget) {
        gateway = gateway.with_budget(budget);
    }
    let prompts = match args.templates.as_ref().or(config.templates.as_ref()) {
        Some(dir) => {
            PromptSet::from_dir(dir).map_err(|e| CliError::validation(e.to_string()))?
        }
        None => PromptSet::default(),
    };
    Ok(GatewaySetup {
        gateway,
        prompts,
        parallel: args.parallel.or(config.parallel).unwrap_or(1).max(1),
    })
}
