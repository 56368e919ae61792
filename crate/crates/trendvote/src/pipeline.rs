//! Method execution: per-item classification, the threshold vote rule, and
//! the validation-set λ sweep.
//!
//! The vote rule is the decision kernel: with `N_up` and `N_down` direction
//! votes, the day is `Down` exactly when `N_down / (N_up + N_down) > λ`
//! (strict), otherwise `Up`. Irrelevant votes never enter the ratio, so
//! adding any number of them cannot change the outcome. A day whose votes
//! are all irrelevant falls back to a configured label and is flagged.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, BackendSummarizer, Classifier, ClassifierRequest};
use crate::corpus::{sample_news, CorpusError, DatasetSplit, PredictionInstance, TrendLabel};
use crate::prompting::{
    default_instruction, extract_input, render_item_prompt, render_standard_prompt,
    select_exemplars, Exemplar, InputVariant, ItemLabel, LabelSet, PromptError, Template,
    TokenCounter,
};
use crate::scalar::Scalar;
use crate::Real;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("method `{method}` does not support {op}")]
    WrongMethod { method: MethodKind, op: &'static str },
    #[error("standard method requires a token budget")]
    MissingBudget,
    #[error("lambda {0} outside [0, 1]")]
    BadLambda(Real),
    #[error("max_news must be at least 1")]
    BadMaxNews,
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("item `{id}` on {date}: {source}")]
    Item {
        date: NaiveDate,
        id: String,
        #[source]
        source: Box<PipelineError>,
    },
    #[error("lambda sweep needs per-item tallies; `standard` predictions have none")]
    SweepStandard,
    #[error("sweep grid is empty")]
    EmptyGrid,
    #[error("predictions and truths misaligned: {0}")]
    Misaligned(String),
}

/// Which prediction method runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    /// One 2-class classification of the merged, budget-truncated inputs.
    Standard,
    /// 2-class classification per item, then majority vote.
    Voting,
    /// 3-class classification per item, drop `Irrelevant`, threshold vote.
    Dtv,
}

impl MethodKind {
    pub fn label_set(self) -> LabelSet {
        match self {
            MethodKind::Dtv => LabelSet::ThreeClass,
            _ => LabelSet::TwoClass,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "standard" => Some(MethodKind::Standard),
            "voting" => Some(MethodKind::Voting),
            "dtv" => Some(MethodKind::Dtv),
            _ => None,
        }
    }
}

impl std::fmt::Display for MethodKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MethodKind::Standard => write!(f, "standard"),
            MethodKind::Voting => write!(f, "voting"),
            MethodKind::Dtv => write!(f, "dtv"),
        }
    }
}

/// What to do when a single item's classification fails mid-run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorPolicy {
    /// Abort the whole run (default; protects result integrity).
    #[default]
    Abort,
    /// Record the item as `Irrelevant` so it cannot sway the vote.
    MarkIrrelevant,
    /// Silently drop the item from the tally.
    DropItem,
}

/// Method parameters for one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodConfig {
    pub kind: MethodKind,
    pub shots_per_class: usize,
    pub lambda: Real,
    pub max_news: usize,
    pub fallback: TrendLabel,
    /// Token budget for the merged standard prompt; required iff `kind` is standard.
    pub token_budget: Option<usize>,
    pub seed: u64,
    #[serde(default)]
    pub error_policy: ErrorPolicy,
}

impl MethodConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(PipelineError::BadLambda(self.lambda));
        }
        if self.max_news == 0 {
            return Err(PipelineError::BadMaxNews);
        }
        if self.kind == MethodKind::Standard && self.token_budget.is_none() {
            return Err(PipelineError::MissingBudget);
        }
        Ok(())
    }
}

/// Everything a method needs besides the instances: configuration, prompt
/// resources, the token counter, and request parameters for the backend.
pub struct MethodContext {
    pub cfg: MethodConfig,
    pub input_variant: InputVariant,
    pub item_template: Template,
    pub standard_template: Template,
    pub pool: Vec<Exemplar>,
    /// Overrides the label-set default instruction when set.
    pub instruction: Option<String>,
    pub counter: Box<dyn TokenCounter>,
    pub model_id: String,
    pub temperature: Real,
    /// Per-item classification parallelism (1 = serial).
    pub workers: usize,
}

impl MethodContext {
    fn instruction(&self, label_set: LabelSet) -> &str {
        self.instruction
            .as_deref()
            .unwrap_or_else(|| default_instruction(label_set))
    }

    /// Check configuration and pool/label-set coherence up front.
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.cfg.validate()?;
        let set = self.cfg.kind.label_set();
        if let Some(stray) = self.pool.iter().find(|e| !set.contains(e.label)) {
            return Err(PromptError::PoolLabelMismatch(stray.label).into());
        }
        // fail early when the pool cannot cover the shot count
        select_exemplars(&self.pool, self.cfg.shots_per_class, self.cfg.seed, set)?;
        Ok(())
    }
}

/// Per-day vote counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VoteTally {
    pub n_up: usize,
    pub n_down: usize,
    pub n_irrelevant: usize,
}

impl VoteTally {
    pub fn new(n_up: usize, n_down: usize, n_irrelevant: usize) -> Self {
        VoteTally { n_up, n_down, n_irrelevant }
    }

    /// Votes that carry a direction.
    pub fn direction_total(&self) -> usize {
        self.n_up + self.n_down
    }

    pub fn total(&self) -> usize {
        self.n_up + self.n_down + self.n_irrelevant
    }
}

/// Count labels per class.
pub fn tally<'a>(labels: impl IntoIterator<Item = &'a ItemLabel>) -> VoteTally {
    let mut t = VoteTally::default();
    for label in labels {
        match label {
            ItemLabel::Up => t.n_up += 1,
            ItemLabel::Down => t.n_down += 1,
            ItemLabel::Irrelevant => t.n_irrelevant += 1,
        }
    }
    t
}

/// The λ-threshold vote rule. Returns the day label and whether the
/// fallback was used (all votes irrelevant).
///
/// Generic over the scalar so exact rational λ can be used in tests; the
/// pipeline instantiates it at [`Real`].
pub fn vote<F: Scalar>(t: &VoteTally, lambda: F, fallback: TrendLabel) -> (TrendLabel, bool) {
    let total = t.direction_total();
    if total == 0 {
        return (fallback, true);
    }
    let ratio = F::from_count(t.n_down) / F::from_count(total);
    if ratio > lambda {
        (TrendLabel::Down, false)
    } else {
        (TrendLabel::Up, false)
    }
}

/// One day's prediction. `items` is empty for the standard method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayPrediction {
    pub date: NaiveDate,
    pub method: MethodKind,
    #[serde(rename = "final")]
    pub final_label: TrendLabel,
    pub truth: TrendLabel,
    #[serde(flatten)]
    pub tally: VoteTally,
    pub fallback_used: bool,
    pub items: Vec<(String, ItemLabel)>,
}

/// Run `f` over `items` with up to `workers` threads, returning results in
/// input order regardless of completion order.
fn parallel_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let (tx, rx) = std::sync::mpsc::channel::<(usize, R)>();
    std::thread::scope(|scope| {
        for _ in 0..workers.min(items.len()) {
            let tx = tx.clone();
            let next = &next;
            let f = &f;
            scope.spawn(move || loop {
                let idx = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if idx >= items.len() {
                    break;
                }
                let out = f(&items[idx]);
                if tx.send((idx, out)).is_err() {
                    break;
                }
            });
        }
    });
    drop(tx);
    let mut slots: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    for (idx, r) in rx {
        slots[idx] = Some(r);
    }
    slots.into_iter().map(|s| s.expect("worker completed")).collect()
}

fn classify_one(
    item: &crate::corpus::NewsItem,
    ctx: &MethodContext,
    backend: &dyn Classifier,
    exemplars: &[Exemplar],
    label_set: LabelSet,
) -> Result<ItemLabel, PipelineError> {
    let summarizer = BackendSummarizer {
        backend,
        counter: ctx.counter.as_ref(),
    };
    let query = extract_input(item, ctx.input_variant, ctx.counter.as_ref(), Some(&summarizer))?;
    let prompt = render_item_prompt(
        &ctx.item_template,
        ctx.instruction(label_set),
        exemplars,
        &query,
        label_set,
    );
    let request = ClassifierRequest::new(&ctx.model_id, ctx.temperature, prompt.text, label_set)?;
    let resp = backend.classify(&request)?;
    if !label_set.contains(resp.label) {
        return Err(BackendError::BadRequest(format!(
            "backend `{}` returned out-of-set label {}",
            backend.name(),
            resp.label
        ))
        .into());
    }
    Ok(resp.label)
}

/// Classify each (sampled) news item of the instance individually.
///
/// Voting uses the 2-class set, denoising-then-voting the 3-class set. The
/// output order matches the sampled window order; per-item failures follow
/// the configured [`ErrorPolicy`].
pub fn predict_per_item(
    instance: &PredictionInstance,
    ctx: &MethodContext,
    backend: &dyn Classifier,
) -> Result<Vec<(String, ItemLabel)>, PipelineError> {
    if ctx.cfg.kind == MethodKind::Standard {
        return Err(PipelineError::WrongMethod {
            method: ctx.cfg.kind,
            op: "per-item prediction",
        });
    }
    let label_set = ctx.cfg.kind.label_set();
    let sampled = sample_news(instance, ctx.cfg.max_news, ctx.cfg.seed)?;
    let exemplars = select_exemplars(&ctx.pool, ctx.cfg.shots_per_class, ctx.cfg.seed, label_set)?;
    let results = parallel_map(&sampled.news, ctx.workers, |item| {
        (item.id.clone(), classify_one(item, ctx, backend, &exemplars, label_set))
    });
    let mut labels = Vec::with_capacity(results.len());
    for (id, outcome) in results {
        match outcome {
            Ok(label) => labels.push((id, label)),
            Err(source) => match ctx.cfg.error_policy {
                ErrorPolicy::Abort => {
                    return Err(PipelineError::Item {
                        date: instance.target_date,
                        id,
                        source: Box::new(source),
                    })
                }
                ErrorPolicy::MarkIrrelevant => labels.push((id, ItemLabel::Irrelevant)),
                ErrorPolicy::DropItem => {}
            },
        }
    }
    Ok(labels)
}

/// Classify the merged, budget-truncated inputs once (the standard method).
pub fn predict_standard(
    instance: &PredictionInstance,
    ctx: &MethodContext,
    backend: &dyn Classifier,
) -> Result<DayPrediction, PipelineError> {
    if ctx.cfg.kind != MethodKind::Standard {
        return Err(PipelineError::WrongMethod {
            method: ctx.cfg.kind,
            op: "merged prediction",
        });
    }
    let budget = ctx.cfg.token_budget.ok_or(PipelineError::MissingBudget)?;
    let sampled = sample_news(instance, ctx.cfg.max_news, ctx.cfg.seed)?;
    let summarizer = BackendSummarizer {
        backend,
        counter: ctx.counter.as_ref(),
    };
    let texts = sampled
        .news
        .iter()
        .map(|item| extract_input(item, ctx.input_variant, ctx.counter.as_ref(), Some(&summarizer)))
        .collect::<Result<Vec<_>, _>>()?;
    let exemplars = select_exemplars(&ctx.pool, ctx.cfg.shots_per_class, ctx.cfg.seed, LabelSet::TwoClass)?;
    let rendered = render_standard_prompt(
        &ctx.standard_template,
        ctx.instruction(LabelSet::TwoClass),
        &exemplars,
        &texts,
        budget,
        ctx.counter.as_ref(),
    )?;
    let request = ClassifierRequest::new(
        &ctx.model_id,
        ctx.temperature,
        rendered.spec.text,
        LabelSet::TwoClass,
    )?;
    let resp = backend.classify(&request)?;
    let t = match resp.label {
        ItemLabel::Up => VoteTally::new(1, 0, 0),
        ItemLabel::Down => VoteTally::new(0, 1, 0),
        ItemLabel::Irrelevant => {
            return Err(BackendError::BadRequest(format!(
                "backend `{}` returned out-of-set label Irrelevant",
                backend.name()
            ))
            .into())
        }
    };
    let (final_label, fallback_used) = vote(&t, ctx.cfg.lambda, ctx.cfg.fallback);
    Ok(DayPrediction {
        date: instance.target_date,
        method: MethodKind::Standard,
        final_label,
        truth: instance.truth,
        tally: t,
        fallback_used,
        items: Vec::new(),
    })
}

/// Run the configured method over a whole split, ordered by target date.
pub fn run_method(
    split: &DatasetSplit,
    ctx: &MethodContext,
    backend: &dyn Classifier,
) -> Result<Vec<DayPrediction>, PipelineError> {
    ctx.validate()?;
    let mut instances: Vec<&PredictionInstance> = split.instances.iter().collect();
    instances.sort_by_key(|i| i.target_date);
    let mut out = Vec::with_capacity(instances.len());
    for instance in instances {
        let prediction = match ctx.cfg.kind {
            MethodKind::Standard => predict_standard(instance, ctx, backend)?,
            MethodKind::Voting | MethodKind::Dtv => {
                let items = predict_per_item(instance, ctx, backend)?;
                let t = tally(items.iter().map(|(_, l)| l));
                let (final_label, fallback_used) = vote(&t, ctx.cfg.lambda, ctx.cfg.fallback);
                DayPrediction {
                    date: instance.target_date,
                    method: ctx.cfg.kind,
                    final_label,
                    truth: instance.truth,
                    tally: t,
                    fallback_used,
                    items,
                }
            }
        };
        out.push(prediction);
    }
    Ok(out)
}

/// One sweep row: a λ candidate and the validation accuracy it achieves.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaRow<F> {
    pub lambda: F,
    pub correct: usize,
    pub total: usize,
}

impl<F> LambdaRow<F> {
    pub fn accuracy(&self) -> Real {
        self.correct as Real / self.total as Real
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSweep<F> {
    pub best_lambda: F,
    pub rows: Vec<LambdaRow<F>>,
}

/// Re-apply the vote rule at every grid λ without touching the backend and
/// pick the most accurate candidate. Days that used the fallback keep their
/// recorded final label (the fallback is λ-independent). Ties break toward
/// the λ nearest 0.5, then toward the smaller λ.
pub fn sweep_lambda<F: Scalar>(
    predictions: &[DayPrediction],
    truths: &[TrendLabel],
    grid: &[F],
) -> Result<LambdaSweep<F>, PipelineError> {
    if grid.is_empty() {
        return Err(PipelineError::EmptyGrid);
    }
    if predictions.iter().any(|p| p.method == MethodKind::Standard) {
        return Err(PipelineError::SweepStandard);
    }
    if predictions.len() != truths.len() {
        return Err(PipelineError::Misaligned(format!(
            "{} predictions vs {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    let half = F::from_f64(0.5).expect("0.5 representable");
    let dist_to_half = |l: &F| {
        if *l >= half {
            l.clone() - half.clone()
        } else {
            half.clone() - l.clone()
        }
    };
    let mut rows = Vec::with_capacity(grid.len());
    for lambda in grid {
        let correct = predictions
            .iter()
            .zip(truths)
            .filter(|(p, &truth)| {
                let relabeled = if p.tally.direction_total() == 0 {
                    p.final_label
                } else {
                    vote(&p.tally, lambda.clone(), p.final_label).0
                };
                relabeled == truth
            })
            .count();
        rows.push(LambdaRow {
            lambda: lambda.clone(),
            correct,
            total: predictions.len(),
        });
    }
    let mut best_idx = 0usize;
    for i in 1..rows.len() {
        let (b, c) = (&rows[best_idx], &rows[i]);
        let (db, dc) = (dist_to_half(&b.lambda), dist_to_half(&c.lambda));
        let better = c.correct > b.correct
            || (c.correct == b.correct && (dc < db || (dc == db && c.lambda < b.lambda)));
        if better {
            best_idx = i;
        }
    }
    Ok(LambdaSweep {
        best_lambda: rows[best_idx].lambda.clone(),
        rows,
    })
}

/// The default validation grid for λ: 0.05, 0.10, …, 0.95.
pub fn default_lambda_grid() -> Vec<Real> {
    (1..=19).map(|i| i as Real * 0.05).collect()
}
