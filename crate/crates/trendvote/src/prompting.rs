//! Few-shot prompt construction: token counting, input variants, exemplar
//! selection, and the item/merged prompt renderers.
//!
//! Token budgets are defined relative to a pluggable [`TokenCounter`]. The
//! default counter treats whitespace-delimited words as tokens, which keeps
//! every budget enforceable offline; an exact BPE counter can be injected
//! without touching the rendering code.

use std::fmt;
use std::path::Path;

use rand::seq::index::sample as index_sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{NewsItem, TrendLabel};

/// Separator used when merging a day's titles into one block.
pub const TITLE_SEPARATOR: &str = "...";

/// Per-item class: direction of impact, or no impact at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemLabel {
    Up,
    Down,
    Irrelevant,
}

impl ItemLabel {
    pub fn as_trend(self) -> Option<TrendLabel> {
        match self {
            ItemLabel::Up => Some(TrendLabel::Up),
            ItemLabel::Down => Some(TrendLabel::Down),
            ItemLabel::Irrelevant => None,
        }
    }
}

impl From<TrendLabel> for ItemLabel {
    fn from(t: TrendLabel) -> Self {
        match t {
            TrendLabel::Up => ItemLabel::Up,
            TrendLabel::Down => ItemLabel::Down,
        }
    }
}

impl fmt::Display for ItemLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ItemLabel::Up => write!(f, "Up"),
            ItemLabel::Down => write!(f, "Down"),
            ItemLabel::Irrelevant => write!(f, "Irrelevant"),
        }
    }
}

/// The label alphabet a classifier is allowed to answer with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSet {
    /// `{Up, Down}` — the standard and voting methods.
    TwoClass,
    /// `{Up, Down, Irrelevant}` — denoising-then-voting.
    ThreeClass,
}

impl LabelSet {
    pub fn members(self) -> &'static [ItemLabel] {
        match self {
            LabelSet::TwoClass => &[ItemLabel::Up, ItemLabel::Down],
            LabelSet::ThreeClass => &[ItemLabel::Up, ItemLabel::Down, ItemLabel::Irrelevant],
        }
    }

    pub fn contains(self, label: ItemLabel) -> bool {
        self.members().contains(&label)
    }
}

/// One labeled example embedded in a prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub text: String,
    pub label: ItemLabel,
}

/// Which text represents a news item in the prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputVariant {
    Title,
    ArticleFirst(usize),
    ArticleMiddle(usize),
    ArticleLast(usize),
    ArticleSummary(usize),
}

impl InputVariant {
    pub fn parse(s: &str) -> Result<Self, PromptError> {
        let s = s.trim().to_ascii_lowercase();
        if s == "title" {
            return Ok(InputVariant::Title);
        }
        for (prefix, ctor) in [
            ("article-first-", InputVariant::ArticleFirst as fn(usize) -> InputVariant),
            ("article-middle-", InputVariant::ArticleMiddle),
            ("article-last-", InputVariant::ArticleLast),
            ("article-summary-", InputVariant::ArticleSummary),
        ] {
            if let Some(rest) = s.strip_prefix(prefix) {
                let n: usize = rest
                    .parse()
                    .map_err(|_| PromptError::BadVariant(s.clone()))?;
                if n == 0 {
                    return Err(PromptError::BadVariant(s.clone()));
                }
                return Ok(ctor(n));
            }
        }
        Err(PromptError::BadVariant(s))
    }
}

impl fmt::Display for InputVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputVariant::Title => write!(f, "title"),
            InputVariant::ArticleFirst(n) => write!(f, "article-first-{n}"),
            InputVariant::ArticleMiddle(n) => write!(f, "article-middle-{n}"),
            InputVariant::ArticleLast(n) => write!(f, "article-last-{n}"),
            InputVariant::ArticleSummary(n) => write!(f, "article-summary-{n}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("unknown input variant `{0}`")]
    BadVariant(String),
    #[error("item `{0}` has no article text but variant requires one")]
    MissingArticle(String),
    #[error("variant requires a summarizing backend but none is configured")]
    NoSummarizer,
    #[error("exemplar pool has only {found} `{class}` exemplars, need {need}")]
    InsufficientPool {
        class: ItemLabel,
        need: usize,
        found: usize,
    },
    #[error("pool contains `{0}` exemplars outside the method's label set")]
    PoolLabelMismatch(ItemLabel),
    #[error("template is missing placeholder `{0}`")]
    MissingPlaceholder(&'static str),
    #[error("token budget {budget} cannot fit the prompt scaffold ({scaffold} tokens) plus one title")]
    BudgetTooSmall { budget: usize, scaffold: usize },
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed exemplar record: {reason}")]
    PoolParse {
        path: String,
        line: usize,
        reason: String,
    },
}

/// Tokenizer/counter abstraction behind every budget and slice.
pub trait TokenCounter: Send + Sync {
    fn tokenize<'a>(&self, text: &'a str) -> Vec<&'a str>;

    fn count(&self, text: &str) -> usize {
        self.tokenize(text).len()
    }
}

/// Default counter: whitespace-delimited words.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceCounter;

impl TokenCounter for WhitespaceCounter {
    fn tokenize<'a>(&self, text: &'a str) -> Vec<&'a str> {
        text.split_whitespace().collect()
    }
}

/// Summary provider used by the `article-summary-N` variant. Implemented by
/// classifier backends that can compress an article.
pub trait Summarizer {
    fn summarize(&self, article: &str, n_tokens: usize) -> Result<String, PromptError>;
}

/// Derive the per-item input text for a news item under `variant`.
///
/// Slice variants return at most `N` tokens of the article (re-joined with
/// single spaces); the middle slice is centered at token index `⌊L/2⌋` and
/// shifted left when it would overrun. The summary variant delegates to the
/// given summarizer and truncates its output to `N` tokens.
pub fn extract_input(
    item: &NewsItem,
    variant: InputVariant,
    counter: &dyn TokenCounter,
    summarizer: Option<&dyn Summarizer>,
) -> Result<String, PromptError> {
    let article = || {
        item.article
            .as_deref()
            .ok_or_else(|| PromptError::MissingArticle(item.id.clone()))
    };
    match variant {
        InputVariant::Title => Ok(item.title.clone()),
        InputVariant::ArticleFirst(n) => {
            let tokens = counter.tokenize(article()?);
            Ok(tokens[..n.min(tokens.len())].join(" "))
        }
        InputVariant::ArticleLast(n) => {
            let tokens = counter.tokenize(article()?);
            Ok(tokens[tokens.len().saturating_sub(n)..].join(" "))
        }
        InputVariant::ArticleMiddle(n) => {
            let tokens = counter.tokenize(article()?);
            let len = tokens.len();
            let start = (len / 2)
                .saturating_sub(n / 2)
                .min(len.saturating_sub(n));
            Ok(tokens[start..(start + n).min(len)].join(" "))
        }
        InputVariant::ArticleSummary(n) => {
            let summarizer = summarizer.ok_or(PromptError::NoSummarizer)?;
            let raw = summarizer.summarize(article()?, n)?;
            let tokens = counter.tokenize(&raw);
            Ok(tokens[..n.min(tokens.len())].join(" "))
        }
    }
}

/// Pick `shots_per_class` exemplars per class, deterministically under
/// `seed`, and interleave the classes in the fixed order Up, Down,
/// Irrelevant (Up, Down for the 2-class set).
pub fn select_exemplars(
    pool: &[Exemplar],
    shots_per_class: usize,
    seed: u64,
    label_set: LabelSet,
) -> Result<Vec<Exemplar>, PromptError> {
    if let Some(stray) = pool.iter().find(|e| !label_set.contains(e.label)) {
        return Err(PromptError::PoolLabelMismatch(stray.label));
    }
    if shots_per_class == 0 {
        return Ok(Vec::new());
    }
    let mut per_class: Vec<Vec<&Exemplar>> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for &class in label_set.members() {
        let candidates: Vec<&Exemplar> = pool.iter().filter(|e| e.label == class).collect();
        if candidates.len() < shots_per_class {
            return Err(PromptError::InsufficientPool {
                class,
                need: shots_per_class,
                found: candidates.len(),
            });
        }
        let picks = index_sample(&mut rng, candidates.len(), shots_per_class);
        per_class.push(picks.into_iter().map(|i| candidates[i]).collect());
    }
    let mut out = Vec::with_capacity(shots_per_class * per_class.len());
    for round in 0..shots_per_class {
        for class in &per_class {
            out.push(class[round].clone());
        }
    }
    Ok(out)
}

/// Prompt skeleton with `{instruction}`, `{exemplars}`, `{query}` placeholders.
#[derive(Debug, Clone)]
pub struct Template {
    text: String,
}

impl Template {
    pub fn new(text: impl Into<String>) -> Result<Self, PromptError> {
        let text = text.into();
        for ph in ["{instruction}", "{exemplars}", "{query}"] {
            if !text.contains(ph) {
                return Err(PromptError::MissingPlaceholder(match ph {
                    "{instruction}" => "instruction",
                    "{exemplars}" => "exemplars",
                    _ => "query",
                }));
            }
        }
        Ok(Template { text })
    }

    pub fn from_file(path: &Path) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Template::new(text)
    }

    /// Built-in skeleton used when no template file is configured.
    pub fn default_skeleton() -> Self {
        Template::new("{instruction}\n\n{exemplars}\n\n{query}").unwrap()
    }

    fn render(&self, instruction: &str, exemplars: &str, query: &str) -> String {
        let rendered = self
            .text
            .replacen("{instruction}", instruction, 1)
            .replacen("{exemplars}", exemplars, 1)
            .replacen("{query}", query, 1);
        // 0-shot rendering leaves the exemplar slot blank; collapse the gap.
        let mut out = rendered;
        while out.contains("\n\n\n") {
            out = out.replace("\n\n\n", "\n\n");
        }
        out.trim().to_string() + "\n"
    }
}

/// Instruction line used for the 3-class (denoising) prompt.
pub const INSTRUCTION_THREE_CLASS: &str =
    "Predict the impact of news passages on the stock trend into 3 classes: \"Up\", \"Down\" or \"Irrelevant\".";

/// Instruction line used for the 2-class prompts.
pub const INSTRUCTION_TWO_CLASS: &str =
    "Predict the impact of news passages on the stock trend into 2 classes: \"Up\" or \"Down\".";

pub fn default_instruction(label_set: LabelSet) -> &'static str {
    match label_set {
        LabelSet::TwoClass => INSTRUCTION_TWO_CLASS,
        LabelSet::ThreeClass => INSTRUCTION_THREE_CLASS,
    }
}

/// A fully rendered prompt plus the pieces it was built from.
#[derive(Debug, Clone)]
pub struct PromptSpec {
    pub instruction: String,
    pub exemplars: Vec<Exemplar>,
    pub query: String,
    pub label_set: LabelSet,
    pub text: String,
}

fn exemplar_block(exemplars: &[Exemplar]) -> String {
    exemplars
        .iter()
        .map(|e| format!("Title: {}\nLabel: {}", e.text, e.label))
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn query_block(query: &str) -> String {
    format!("Title: {query}\nLabel:")
}

/// Render a per-item prompt: instruction, exemplar blocks, and the query
/// with a trailing `Label:` cue.
pub fn render_item_prompt(
    template: &Template,
    instruction: &str,
    exemplars: &[Exemplar],
    query_text: &str,
    label_set: LabelSet,
) -> PromptSpec {
    let text = template.render(instruction, &exemplar_block(exemplars), &query_block(query_text));
    PromptSpec {
        instruction: instruction.to_string(),
        exemplars: exemplars.to_vec(),
        query: query_text.to_string(),
        label_set,
        text,
    }
}

/// A rendered merged-titles prompt plus how much survived the budget.
#[derive(Debug, Clone)]
pub struct StandardPrompt {
    pub spec: PromptSpec,
    pub retained_titles: usize,
    pub dropped_titles: usize,
}

/// Render the merged-titles prompt for the standard method.
///
/// Titles are joined with [`TITLE_SEPARATOR`] and dropped whole from the end
/// until the full rendered prompt fits the token budget. Errors when not even
/// one title fits.
pub fn render_standard_prompt(
    template: &Template,
    instruction: &str,
    exemplars: &[Exemplar],
    titles: &[String],
    budget: usize,
    counter: &dyn TokenCounter,
) -> Result<StandardPrompt, PromptError> {
    let exemplar_text = exemplar_block(exemplars);
    let render = |merged: &str| template.render(instruction, &exemplar_text, &query_block(merged));
    let scaffold = counter.count(&render(""));
    let mut retained = 0usize;
    let mut best: Option<String> = None;
    for k in 1..=titles.len() {
        let merged = titles[..k].join(TITLE_SEPARATOR);
        let text = render(&merged);
        if counter.count(&text) <= budget {
            retained = k;
            best = Some(text);
        } else {
            break;
        }
    }
    let Some(text) = best else {
        return Err(PromptError::BudgetTooSmall { budget, scaffold });
    };
    let merged = titles[..retained].join(TITLE_SEPARATOR);
    Ok(StandardPrompt {
        spec: PromptSpec {
            instruction: instruction.to_string(),
            exemplars: exemplars.to_vec(),
            query: merged,
            label_set: LabelSet::TwoClass,
            text,
        },
        retained_titles: retained,
        dropped_titles: titles.len() - retained,
    })
}

#[derive(Deserialize)]
struct PoolLine {
    text: String,
    label: ItemLabel,
}

/// Read an exemplar pool file: one JSON record per line with `text`, `label`.
pub fn load_exemplar_pool(path: &Path) -> Result<Vec<Exemplar>, PromptError> {
    let text = std::fs::read_to_string(path).map_err(|source| PromptError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut pool = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: PoolLine = serde_json::from_str(line).map_err(|e| PromptError::PoolParse {
            path: path.display().to_string(),
            line: idx + 1,
            reason: e.to_string(),
        })?;
        if rec.text.trim().is_empty() {
            return Err(PromptError::PoolParse {
                path: path.display().to_string(),
                line: idx + 1,
                reason: "text must be non-empty".into(),
            });
        }
        pool.push(Exemplar {
            text: rec.text,
            label: rec.label,
        });
    }
    Ok(pool)
}
