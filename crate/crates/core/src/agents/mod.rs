//! Modeling and evaluation agents: prompts, transport, reply parsing and
//! the top-K population.

mod client;
mod format;
mod population;
mod prompts;
mod reply;

pub use client::{
    extract_reply_text, format_replay, parse_replay, ClientError, DecodingConfig, EndpointConfig, HttpClient,
    LlmClient, Message, ReplayEntry, Role, ScriptedClient, API_KEY_ENV, REPLAY_MAGIC,
};
pub use format::{format_g, format_repr};
pub use population::{HistoryItem, InsertOutcome, Population, PopulationEntry, DEFAULT_CAPACITY};
pub use prompts::{
    dsl_skeleton, first_task_prompt, function_schema, optimized_parameters_line, reflection_prompt, render_completions,
    render_entry, render_history, retry_prompt, subsequent_prompt, system_message, val_loss_line, DEFAULT_OBJECTIVE,
    SYSTEM_PROMPT,
};
pub use reply::{format_reply, parse_reply, ProposalReply, ReplyError, DESCRIPTION_FIELD, FUNCTION_NAME, SPEC_FIELD};

use thiserror::Error;

use crate::dsl::{format_violations, parse_model_spec, validate, ModelSpec, SystemSchema};
use crate::systems::SystemDef;

/// Target loss named in requirement text of the form "... of X or less".
fn loss_target(requirements: &str) -> Option<&str> {
    let end = requirements.find(" or less")?;
    let start = requirements[..end].rfind("of ")? + 3;
    Some(requirements[start..end].trim()).filter(|s| !s.is_empty())
}

/// Everything the modeling agent is told about the task.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelingContext {
    pub system_description: String,
    pub objective: String,
    pub requirements: String,
    pub skeleton: String,
    /// Loss the reflection prompt asks to reach.
    pub loss_target: String,
    pub generations: usize,
    pub schema: SystemSchema,
}

impl ModelingContext {
    pub fn for_system(sys: &SystemDef, generations: usize) -> Self {
        ModelingContext {
            system_description: sys.description.clone(),
            objective: DEFAULT_OBJECTIVE.into(),
            requirements: sys.requirements.clone(),
            skeleton: dsl_skeleton(&sys.schema),
            loss_target: loss_target(&sys.requirements).unwrap_or("1e-6").to_string(),
            generations,
            schema: sys.schema.clone(),
        }
    }

    pub fn check(&self) -> Result<(), String> {
        for (name, v) in [
            ("system description", &self.system_description),
            ("objective", &self.objective),
            ("requirements", &self.requirements),
            ("skeleton", &self.skeleton),
        ] {
            if v.trim().is_empty() {
                return Err(format!("{name} is empty"));
            }
        }
        if self.generations == 0 {
            return Err("generations must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Feedback {
    pub text: String,
    pub generation: usize,
    /// Set when the critique could not be obtained or came back empty.
    pub warning: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExchangeKind {
    Propose,
    Critique,
    Adapt,
}

impl ExchangeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExchangeKind::Propose => "propose",
            ExchangeKind::Critique => "critique",
            ExchangeKind::Adapt => "adapt",
        }
    }
}

/// One request and what came back.
#[derive(Debug, Clone, PartialEq)]
pub struct Exchange {
    pub kind: ExchangeKind,
    pub generation: usize,
    pub attempt: usize,
    pub request: Vec<Message>,
    pub reply: Result<String, String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Transcript {
    pub exchanges: Vec<Exchange>,
}

impl Transcript {
    /// Replies in request order, in the replay container's entry form.
    pub fn replay_entries(&self) -> Vec<ReplayEntry> {
        self.exchanges
            .iter()
            .filter_map(|e| {
                e.reply.as_ref().ok().map(|text| ReplayEntry {
                    tag: e.kind.as_str().into(),
                    text: text.clone(),
                })
            })
            .collect()
    }
}

fn send(
    client: &mut dyn LlmClient,
    cfg: &DecodingConfig,
    transcript: &mut Transcript,
    kind: ExchangeKind,
    generation: usize,
    attempt: usize,
    request: Vec<Message>,
) -> Result<String, ClientError> {
    let reply = client.complete(&request, cfg);
    transcript.exchanges.push(Exchange {
        kind,
        generation,
        attempt,
        request,
        reply: reply.as_ref().map(String::clone).map_err(|e| e.to_string()),
    });
    reply
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub spec: ModelSpec,
    pub description: String,
    /// Requests issued, including the successful one.
    pub attempts: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProposeError {
    #[error("no usable specification after {attempts} attempts; last problem: {last}")]
    Exhausted { attempts: usize, last: String },
    #[error("modeling agent unavailable: {0}")]
    Client(#[from] ClientError),
}

/// Parses and validates one reply into a spec.
pub fn spec_from_reply(text: &str, schema: &SystemSchema) -> Result<(ModelSpec, String), String> {
    let reply = parse_reply(text).map_err(|e| e.to_string())?;
    let mut spec = parse_model_spec(&reply.spec_text).map_err(|e| format!("specification does not parse: {e}"))?;
    let violations = validate(&spec, schema);
    if !violations.is_empty() {
        return Err(format!("specification is invalid:\n{}", format_violations(&violations)));
    }
    if spec.metadata.is_empty() {
        spec.metadata = reply.description.clone();
    }
    Ok((spec, reply.description))
}

/// Messages for the modeling agent at `generation` (1-based).
pub fn render_modeling_prompt(
    ctx: &ModelingContext,
    pop: &Population,
    feedback: Option<&Feedback>,
    generation: usize,
) -> Vec<Message> {
    let mut messages = vec![
        Message::system(system_message()),
        Message::user(first_task_prompt(ctx, generation)),
    ];
    if pop.is_empty() {
        return messages;
    }
    messages.push(Message::user(reflection_prompt(ctx, pop, generation, &ctx.schema)));
    if let Some(f) = feedback.filter(|f| !f.text.trim().is_empty()) {
        messages.push(Message::assistant(f.text.clone()));
    }
    messages.push(Message::user(subsequent_prompt(ctx, generation)));
    messages
}

/// Messages for the evaluation agent after `generation` completed.
pub fn render_reflection_prompt(ctx: &ModelingContext, pop: &Population, generation: usize) -> Vec<Message> {
    vec![
        Message::system(system_message()),
        Message::user(reflection_prompt(ctx, pop, generation + 1, &ctx.schema)),
    ]
}

/// Asks for a spec, re-prompting with the problems found at most
/// `cfg.retries` times.
pub fn propose_with(
    client: &mut dyn LlmClient,
    cfg: &DecodingConfig,
    mut messages: Vec<Message>,
    schema: &SystemSchema,
    kind: ExchangeKind,
    generation: usize,
    transcript: &mut Transcript,
) -> Result<Proposal, ProposeError> {
    let max = 1 + cfg.retries;
    let mut last = String::new();
    for attempt in 1..=max {
        let text = send(client, cfg, transcript, kind, generation, attempt, messages.clone())?;
        match spec_from_reply(&text, schema) {
            Ok((spec, description)) => {
                return Ok(Proposal {
                    spec,
                    description,
                    attempts: attempt,
                })
            }
            Err(problem) => {
                log::info!("generation {generation}, attempt {attempt}: {problem}");
                messages.push(Message::assistant(text));
                messages.push(Message::user(retry_prompt(&problem)));
                last = problem;
            }
        }
    }
    Err(ProposeError::Exhausted { attempts: max, last })
}

pub fn propose(
    client: &mut dyn LlmClient,
    cfg: &DecodingConfig,
    ctx: &ModelingContext,
    pop: &Population,
    feedback: Option<&Feedback>,
    generation: usize,
    transcript: &mut Transcript,
) -> Result<Proposal, ProposeError> {
    let messages = render_modeling_prompt(ctx, pop, feedback, generation);
    propose_with(client, cfg, messages, &ctx.schema, ExchangeKind::Propose, generation, transcript)
}

/// Feedback on the current population; never fails.
pub fn critique(
    client: &mut dyn LlmClient,
    cfg: &DecodingConfig,
    ctx: &ModelingContext,
    pop: &Population,
    generation: usize,
    transcript: &mut Transcript,
) -> Feedback {
    let messages = render_reflection_prompt(ctx, pop, generation);
    match send(client, cfg, transcript, ExchangeKind::Critique, generation, 1, messages) {
        Ok(text) if text.trim().is_empty() => Feedback {
            text,
            generation,
            warning: Some("evaluation agent returned an empty reply".into()),
        },
        Ok(text) => Feedback {
            text,
            generation,
            warning: None,
        },
        Err(e) => {
            log::warn!("critique for generation {generation} failed: {e}");
            Feedback {
                text: String::new(),
                generation,
                warning: Some(e.to_string()),
            }
        }
    }
}
