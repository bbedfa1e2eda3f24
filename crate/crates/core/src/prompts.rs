//! Text prompts for the editing pass, built from visual question answering
//! on the edited frame.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagate::PropagationMode;
use crate::types::Frame;

pub const COLOUR_QUESTION: &str = "Please describe object colours in the scene";
pub const SCENE_QUESTION: &str = "Please describe the scene";
pub const DEFAULT_NEGATIVE: &str = "desaturated colour, greyish, unrealistic";
pub const BLEND_PROMPT: &str = "a smooth colour transition across the entire scene";

pub trait CaptionerAdapter: Send + Sync {
    fn id(&self) -> &str;

    fn answer(&self, frame: &Frame, question: &str) -> Result<String>;
}

/// Returns fixed answers keyed by question.
#[derive(Debug, Clone)]
pub struct StubCaptioner {
    answers: BTreeMap<String, String>,
}

impl Default for StubCaptioner {
    fn default() -> Self {
        Self::new([
            (COLOUR_QUESTION, "a brightly coloured object on a grey background"),
            (SCENE_QUESTION, "a simple object in a plain room"),
        ])
    }
}

impl StubCaptioner {
    pub fn new<'a>(answers: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        Self {
            answers: answers.into_iter().map(|(q, a)| (q.to_owned(), a.to_owned())).collect(),
        }
    }
}

impl CaptionerAdapter for StubCaptioner {
    fn id(&self) -> &str {
        "stub"
    }

    fn answer(&self, _frame: &Frame, question: &str) -> Result<String> {
        self.answers
            .get(question)
            .cloned()
            .ok_or_else(|| Error::Caption(format!("no answer for `{question}`")))
    }
}

fn ask(frame: &Frame, captioner: &dyn CaptionerAdapter, question: &str) -> Result<String> {
    let text = captioner.answer(frame, question)?.trim().to_owned();
    if text.is_empty() {
        return Err(Error::Caption(format!("empty answer to `{question}`")));
    }
    Ok(text)
}

pub fn describe_colours(frame: &Frame, captioner: &dyn CaptionerAdapter) -> Result<String> {
    ask(frame, captioner, COLOUR_QUESTION)
}

pub fn describe_scene(frame: &Frame, captioner: &dyn CaptionerAdapter) -> Result<String> {
    ask(frame, captioner, SCENE_QUESTION)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSet {
    pub positive: String,
    pub negative: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blend: Option<String>,
}

impl PromptSet {
    /// Positive prompt with the blend text appended.
    pub fn positive_with_blend(&self) -> String {
        match &self.blend {
            Some(b) => join([self.positive.as_str(), b.as_str()]),
            None => self.positive.clone(),
        }
    }
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            positive: String::new(),
            negative: DEFAULT_NEGATIVE.to_owned(),
            blend: None,
        }
    }
}

/// Which parts of the prompt are used. Disabling both yields an empty
/// positive prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptOptions {
    pub colour_prompt: bool,
    pub scene_prompt: bool,
    pub extra_negative: Vec<String>,
    pub blend_override: Option<String>,
}

impl Default for PromptOptions {
    fn default() -> Self {
        Self {
            colour_prompt: true,
            scene_prompt: true,
            extra_negative: Vec::new(),
            blend_override: None,
        }
    }
}

fn join<'a>(parts: impl IntoIterator<Item = &'a str>) -> String {
    parts
        .into_iter()
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn assemble_prompts(colour_text: &str, scene_text: &str, mode: PropagationMode) -> Result<PromptSet> {
    assemble_prompts_with(colour_text, scene_text, mode, &PromptOptions::default())
}

pub fn assemble_prompts_with(
    colour_text: &str,
    scene_text: &str,
    mode: PropagationMode,
    options: &PromptOptions,
) -> Result<PromptSet> {
    let mut parts = Vec::new();
    if options.colour_prompt {
        parts.push(colour_text);
    }
    if options.scene_prompt {
        parts.push(scene_text);
    }
    let positive = join(parts.iter().copied());
    if !parts.is_empty() && positive.is_empty() {
        return Err(Error::Prompt("colour and scene descriptions are both empty".into()));
    }
    let negative = join(std::iter::once(DEFAULT_NEGATIVE).chain(options.extra_negative.iter().map(String::as_str)));
    let blend = (mode == PropagationMode::Multi)
        .then(|| options.blend_override.clone().unwrap_or_else(|| BLEND_PROMPT.to_owned()));
    Ok(PromptSet {
        positive,
        negative,
        blend,
    })
}

/// Queries the captioner for the enabled descriptions only and assembles
/// the prompt set.
pub fn build_prompts(
    frame: &Frame,
    captioner: &dyn CaptionerAdapter,
    mode: PropagationMode,
    options: &PromptOptions,
) -> Result<PromptSet> {
    let colour = if options.colour_prompt {
        describe_colours(frame, captioner)?
    } else {
        String::new()
    };
    let scene = if options.scene_prompt {
        describe_scene(frame, captioner)?
    } else {
        String::new()
    };
    assemble_prompts_with(&colour, &scene, mode, options)
}
