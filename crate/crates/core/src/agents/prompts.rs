//! Prompt templates for the modeling and evaluation agents.

use std::fmt::Write as _;

use super::format::{format_g, format_repr};
use super::population::{HistoryItem, Population, PopulationEntry};
use super::reply::{DESCRIPTION_FIELD, FUNCTION_NAME, SPEC_FIELD};
use super::ModelingContext;
use crate::dsl::SystemSchema;

pub const SYSTEM_PROMPT: &str = "Objective: Write code to create an effective differential equation simulator for a given task.
Please note that the code should be fully functional. No placeholders.

You must act autonomously and you will receive no human input at any stage. You have to return as output the complete code for completing this task, and correctly improve the code to create the most accurate and realistic simulator possible.
You always write out the code contents. You always indent code with tabs.
You cannot visualize any graphical output. You exist within a machine. The code can include black box multi-layer perceptions where required.

Use the functions provided. When calling functions only provide a RFC8259 compliant JSON request following this format without deviation.";

pub fn function_schema() -> String {
    format!(
        r#"{{
    "name": "{FUNCTION_NAME}",
    "description": "Write out the complete model specification in the modeling language of the skeleton.",
    "parameters": {{
        "type": "object",
        "properties": {{
            "{SPEC_FIELD}": {{
                "type": "string",
                "description": 'Text of the model specification, inclusive of every parameter and network declaration. If you are unsure, take your best guess. This must be a nonempty string.',
            }},
            "{DESCRIPTION_FIELD}": {{
                "type": "string",
                "description": 'A concise description of the code model, indicating if it is a white box only or white and black box model.',
            }}
        }},
        "required": ["{SPEC_FIELD}", "{DESCRIPTION_FIELD}"],
    }},
}},"#
    )
}

/// The system message: fixed instructions followed by the reply schema.
pub fn system_message() -> String {
    format!("{SYSTEM_PROMPT}\n\n{}", function_schema())
}

pub const DEFAULT_OBJECTIVE: &str = "* The parameters of the model will be optimized to an observed training dataset with the given simulator.
* The observed training dataset has very few samples, and the model must be able to generalize to unseen data.";

/// Scaffold the modeling agent completes, with a compact grammar reference.
pub fn dsl_skeleton(schema: &SystemSchema) -> String {
    let states: Vec<&str> = schema.state_names().collect();
    let actions: Vec<&str> = schema.action_names().collect();
    let mut s = String::from(
        "# Model specification language. One statement per line; '#' starts a comment.
#   describe <free text>
#   param <name> = <initial value>
#   mlp <name>(<input>, ...) hidden [<width>, ...] act relu|leaky_relu|tanh outputs <n>
#   d(<state>)/dt = <expression>
# Expressions use + - * / ^, parentheses, numbers, parameters, inputs, the time t,
# the functions log exp sin cos sqrt abs sigmoid tanh pow(a, b), and network outputs <name>[<i>].
# A network output added at the top level of an equation is that equation's neural residual.
",
    );
    let _ = write!(s, "# States: {}", states.join(", "));
    if actions.is_empty() {
        s.push_str(". There are no actions.\n");
    } else {
        let _ = writeln!(s, ". Actions: {}.", actions.join(", "));
    }
    s.push_str("# TODO: Fill in the parameter and network declarations here\n");
    for name in states {
        let _ = writeln!(s, "d({name})/dt = # TODO: Fill in the expression here");
    }
    s.pop();
    s
}

pub fn first_task_prompt(ctx: &ModelingContext, generation: usize) -> String {
    format!(
        "You will get a system description to code a differential equation simulator for.

System Description:```
{desc}
```

Modelling goals:```
{goals}
```

Requirement Specification:```
{req}
```

Skeleton code to fill in:```
{skel}
```

Useful to know:```
* You are a code evolving machine, and you will be called {g_total} times to generate code, and improve the code to achieve the lowest possible validation loss.
* The model defines the state differential and will be used with an ODE solver to fit the observed training dataset.
* You can use any parameters you want and any black box neural network components (multi-layer perceptrons); however, you have to define these.
* It is preferable to decompose the system into differential equations (compartments) if possible.
* You can use any unary functions, for example log, exp, power etc.
* Under no circumstance can you change the skeleton code function definitions, only fill in the code.
* The input tensors are vectors of shape (batch_size).
* Use initially white box models first and then switch to hybrid white and black box models for the residuals, only after no further best program iteration improvement with white box models.
* Make sure your code follows the exact code skeleton specification.
* Use PyTorch.
```

Think step-by-step, and then give the complete full working code. You are generating code for iteration {generation} out of {g_total}.",
        desc = ctx.system_description,
        goals = ctx.objective,
        req = ctx.requirements,
        skel = ctx.skeleton,
        g_total = ctx.generations,
    )
}

/// `optimized_parameters = {'a': 0.1, ...}` over the fitted scalars.
pub fn optimized_parameters_line(entry: &PopulationEntry) -> String {
    let items: Vec<String> = entry
        .spec
        .params
        .iter()
        .filter_map(|p| entry.params.scalar(&p.name).map(|v| format!("'{}': {}", p.name, format_repr(v))))
        .collect();
    format!("optimized_parameters = {{{}}}", items.join(", "))
}

pub fn val_loss_line(entry: &PopulationEntry, schema: &SystemSchema) -> String {
    let per_dim: Vec<String> = schema
        .state_names()
        .zip(&entry.val.delta)
        .map(|(n, d)| format!("{n} val loss: {}", format_g(*d, 3)))
        .collect();
    format!(
        "Val Loss: {} (Where the val loss per dimension is {}) Iteration: {}",
        format_g(entry.upsilon(), 3),
        per_dim.join(", "),
        entry.generation
    )
}

pub fn render_entry(entry: &PopulationEntry, schema: &SystemSchema) -> String {
    format!(
        "{}\n###\n```\n{}```\n{}\n###",
        val_loss_line(entry, schema),
        entry.canonical,
        optimized_parameters_line(entry)
    )
}

/// Entries worst first, so the best sits last.
pub fn render_completions(pop: &Population, schema: &SystemSchema) -> String {
    let blocks: Vec<String> = pop.entries().iter().rev().map(|e| render_entry(e, schema)).collect();
    format!("\n{}\n", blocks.join("\n\n\n\n"))
}

pub fn render_history(history: &[HistoryItem]) -> String {
    history
        .iter()
        .map(|h| {
            format!(
                "Iteration {}. Best Val Loss: {}. Model description: {}",
                h.generation,
                format_repr(h.upsilon),
                h.description
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Reflection request body; `next_generation` is the iteration it prepares.
pub fn reflection_prompt(ctx: &ModelingContext, pop: &Population, next_generation: usize, schema: &SystemSchema) -> String {
    format!(
        "You generated the following code completions, which then had their parameters optimized to the training dataset. Please reflect on how you can improve the code to minimize the validation loss to {target} or less. The code examples are delineated by ###.

Here are your previous iterations the best programs generated. Use it to see if you have exhausted white box models, i.e. when a white box model repeats with the same val loss and then only add black box models to the white box models:```
{history}
```

Here are the top code completions so far that you have generated, sorted for the lowest validation loss last:```
{completions}
```

Please reflect on how you can improve the code to fit the dataset as accurately as possible, and be interpretable. Think step-by-step. Provide only actionable feedback, that has direct changes to the code. Do not write out the code, only describe how it can be improved. Where applicable use the values of the optimized parameters to reason how the code can be improved to fit the dataset as accurately as possible. This is for generating new code for the next iteration {next_generation} out of {g_total}.",
        target = ctx.loss_target,
        history = render_history(&pop.history),
        completions = render_completions(pop, schema),
        g_total = ctx.generations,
    )
}

pub fn subsequent_prompt(ctx: &ModelingContext, generation: usize) -> String {
    format!(
        "Please now regenerate the code function, with the aim to improve the code to achieve a lower validation error. Use the feedback where applicable. You are generating code for iteration {generation} out of {g_total} total iterations. When generating code if you are unsure about something, take your best guess. You have to generate code, and cannot give an empty string answer.

Please always only fill in the following code skeleton:```
{skel}
```
You cannot change the code skeleton, or input variables.",
        g_total = ctx.generations,
        skel = ctx.skeleton,
    )
}

pub fn retry_prompt(problem: &str) -> String {
    format!(
        "Your previous reply could not be used:\n{problem}\n\nReturn the complete model specification again as a JSON object with the fields `{SPEC_FIELD}` and `{DESCRIPTION_FIELD}`, correcting these problems."
    )
}
