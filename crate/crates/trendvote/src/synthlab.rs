//! Synthetic-corpus laboratory.
//!
//! Generates corpora with planted per-item truth so the denoising and
//! voting behavior can be measured offline against exact probabilities:
//! each day gets a fair-coin trend, each item is relevant with probability
//! ρ, relevant items read as the day trend with probability q, and noise
//! items carry a directional surface reading (Up with probability β) while
//! their truth is `Irrelevant`. Prices are synthesized so label derivation
//! recovers the planted trends exactly (+1 on Up days, flat on Down days).
//!
//! The oracle backend answers from the planted truth with configurable
//! relevance/direction error rates; in 2-class mode it returns the surface
//! reading for noise items, modeling a baseline that cannot abstain.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{
    extract_query, BackendError, Classifier, ClassifierRequest, ClassifierResponse, LexiconRule,
    ResponseSource,
};
use crate::corpus::{NewsItem, PriceBar, TrendLabel};
use crate::pipeline::{vote, VoteTally};
use crate::prompting::ItemLabel;
use crate::scalar::RealScalar;
use crate::Real;

/// Exact binomial enumeration is used up to this many relevant voters;
/// beyond it the normal approximation kicks in and results are flagged.
pub const ENUMERATION_CUTOFF: usize = 30;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    BadConfig(String),
    #[error("expected_vote_accuracy needs at least one relevant voter")]
    NoRelevantVoters,
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed truth record: {reason}")]
    TruthParse {
        path: String,
        line: usize,
        reason: String,
    },
}

/// Generator parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_days: usize,
    pub items_per_day: usize,
    /// ρ — probability an item is relevant.
    pub relevance_rate: Real,
    /// q — probability a relevant item reads as the day's true trend.
    pub direction_accuracy: Real,
    /// β — probability a noise item's surface text reads Up.
    pub noise_direction_bias: Real,
    pub seed: u64,
    pub start_date: NaiveDate,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_days: 500,
            items_per_day: 8,
            relevance_rate: 0.5,
            direction_accuracy: 0.8,
            noise_direction_bias: 0.5,
            seed: 42,
            start_date: NaiveDate::from_ymd_opt(2000, 1, 3).unwrap(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_days == 0 {
            return Err(SynthError::BadConfig("n_days must be at least 1".into()));
        }
        if self.items_per_day == 0 {
            return Err(SynthError::BadConfig("items_per_day must be at least 1".into()));
        }
        for (name, p) in [
            ("relevance_rate", self.relevance_rate),
            ("direction_accuracy", self.direction_accuracy),
            ("noise_direction_bias", self.noise_direction_bias),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SynthError::BadConfig(format!("{name} {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Planted per-item truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthItemTruth {
    pub relevant: bool,
    pub planted_label: ItemLabel,
    /// How the item's text reads, regardless of relevance.
    pub surface_reading: TrendLabel,
}

/// One generated day: the true trend and its items with truth attached.
#[derive(Debug, Clone)]
pub struct PlantedDay {
    pub true_trend: TrendLabel,
    pub items: Vec<(NewsItem, SynthItemTruth)>,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub cfg: SynthConfig,
    pub days: Vec<PlantedDay>,
    pub prices: Vec<PriceBar>,
}

const UP_PHRASES: [&str; 3] = [
    "shares rally after upbeat earnings report",
    "profits surge on record customer demand",
    "index set to extend gains traders say",
];

const DOWN_PHRASES: [&str; 3] = [
    "shares slump after dismal earnings report",
    "profits tumble on weakening customer demand",
    "index set to extend losses traders say",
];

/// Lexicon rules matching the generator's phrase pools, so the lexicon
/// backend recovers every item's surface reading.
pub fn synth_lexicon_rules() -> Vec<LexiconRule> {
    [("rally", 1.0), ("surge", 1.0), ("gains", 1.0)]
        .into_iter()
        .map(|(phrase, weight)| LexiconRule { phrase: phrase.into(), weight })
        .chain(
            [("slump", -1.0), ("tumble", -1.0), ("losses", -1.0)]
                .into_iter()
                .map(|(phrase, weight)| LexiconRule { phrase: phrase.into(), weight }),
        )
        .collect()
}

fn phrase_for(reading: TrendLabel, pick: usize) -> &'static str {
    match reading {
        TrendLabel::Up => UP_PHRASES[pick % UP_PHRASES.len()],
        TrendLabel::Down => DOWN_PHRASES[pick % DOWN_PHRASES.len()],
    }
}

// Article tail without any lexicon keyword, so slices that lose the leading
// phrase read as irrelevant.
const ARTICLE_FILLER: &str = "the board met on schedule and reviewed routine operational matters \
across several regional offices during the quarter while analysts waited for further detail";

/// Generate a corpus. Deterministic in the config: the same config yields
/// byte-identical files.
pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut prices = vec![PriceBar {
        date: cfg.start_date,
        adj_close: 100.0,
    }];
    let mut days = Vec::with_capacity(cfg.n_days);
    for day in 1..=cfg.n_days {
        let date = cfg.start_date + chrono::Days::new(day as u64);
        let news_date = prices.last().unwrap().date;
        let true_trend = if rng.gen_bool(0.5) {
            TrendLabel::Up
        } else {
            TrendLabel::Down
        };
        let prev_close = prices.last().unwrap().adj_close;
        prices.push(PriceBar {
            date,
            adj_close: prev_close + if true_trend == TrendLabel::Up { 1.0 } else { 0.0 },
        });
        let mut items = Vec::with_capacity(cfg.items_per_day);
        for i in 0..cfg.items_per_day {
            let relevant = rng.gen_bool(cfg.relevance_rate);
            let (planted_label, surface_reading) = if relevant {
                let reads_true = rng.gen_bool(cfg.direction_accuracy);
                let dir = if reads_true { true_trend } else { true_trend.flipped() };
                (ItemLabel::from(dir), dir)
            } else {
                let surface = if rng.gen_bool(cfg.noise_direction_bias) {
                    TrendLabel::Up
                } else {
                    TrendLabel::Down
                };
                (ItemLabel::Irrelevant, surface)
            };
            let pick = rng.gen_range(0..3usize);
            let id = format!("d{day:05}n{i:02}");
            let title = format!("{id} {}", phrase_for(surface_reading, pick));
            let article = format!("{title} {ARTICLE_FILLER}");
            items.push((
                NewsItem {
                    id: id.clone(),
                    date: news_date,
                    title,
                    article: Some(article),
                    tickers: None,
                },
                SynthItemTruth {
                    relevant,
                    planted_label,
                    surface_reading,
                },
            ));
        }
        days.push(PlantedDay { true_trend, items });
    }
    Ok(SynthCorpus {
        cfg: cfg.clone(),
        days,
        prices,
    })
}

impl SynthCorpus {
    pub fn news(&self) -> Vec<NewsItem> {
        self.days
            .iter()
            .flat_map(|d| d.items.iter().map(|(n, _)| n.clone()))
            .collect()
    }

    pub fn truth_map(&self) -> HashMap<String, SynthItemTruth> {
        self.days
            .iter()
            .flat_map(|d| d.items.iter().map(|(n, t)| (n.id.clone(), *t)))
            .collect()
    }

    /// Realized relevant-item count per day, in date order.
    pub fn relevant_counts(&self) -> Vec<usize> {
        self.days
            .iter()
            .map(|d| d.items.iter().filter(|(_, t)| t.relevant).count())
            .collect()
    }
}

/// File paths produced by [`write_corpus`].
#[derive(Debug, Clone)]
pub struct SynthPaths {
    pub news: PathBuf,
    pub prices: PathBuf,
    pub truth: PathBuf,
    pub lexicon: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct TruthLine {
    id: String,
    date: NaiveDate,
    relevant: bool,
    planted_label: ItemLabel,
    surface_reading: TrendLabel,
}

fn write_file(path: &Path, text: &str) -> Result<(), SynthError> {
    std::fs::write(path, text).map_err(|source| SynthError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Write the corpus in the standard news/price formats plus the truth file
/// and a matching lexicon.
pub fn write_corpus(corpus: &SynthCorpus, dir: &Path) -> Result<SynthPaths, SynthError> {
    std::fs::create_dir_all(dir).map_err(|source| SynthError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let paths = SynthPaths {
        news: dir.join("news.jsonl"),
        prices: dir.join("prices.csv"),
        truth: dir.join("truth.jsonl"),
        lexicon: dir.join("lexicon.jsonl"),
    };

    let mut news = String::new();
    let mut truth = String::new();
    for day in &corpus.days {
        for (item, t) in &day.items {
            news.push_str(&serde_json::to_string(item).expect("news serializes"));
            news.push('\n');
            let line = TruthLine {
                id: item.id.clone(),
                date: item.date,
                relevant: t.relevant,
                planted_label: t.planted_label,
                surface_reading: t.surface_reading,
            };
            truth.push_str(&serde_json::to_string(&line).expect("truth serializes"));
            truth.push('\n');
        }
    }
    write_file(&paths.news, &news)?;
    write_file(&paths.truth, &truth)?;

    let mut prices = String::from("date,adj_close\n");
    for bar in &corpus.prices {
        prices.push_str(&format!("{},{:.2}\n", bar.date, bar.adj_close));
    }
    write_file(&paths.prices, &prices)?;

    let mut lexicon = String::new();
    for rule in synth_lexicon_rules() {
        lexicon.push_str(&format!(
            "{{\"phrase\":\"{}\",\"weight\":{:.1}}}\n",
            rule.phrase, rule.weight
        ));
    }
    write_file(&paths.lexicon, &lexicon)?;
    Ok(paths)
}

/// Classifier that answers from planted truth, with optional per-item
/// corruption. Items are recognized by the id token that leads every
/// generated title.
pub struct OracleBackend {
    truths: HashMap<String, SynthItemTruth>,
    relevance_error: Real,
    direction_error: Real,
    seed: u64,
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for b in bytes {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

impl OracleBackend {
    pub fn new(
        truths: HashMap<String, SynthItemTruth>,
        relevance_error: Real,
        direction_error: Real,
        seed: u64,
    ) -> Result<Self, SynthError> {
        for (name, p) in [("relevance_error", relevance_error), ("direction_error", direction_error)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SynthError::BadConfig(format!("{name} {p} outside [0, 1]")));
            }
        }
        Ok(OracleBackend {
            truths,
            relevance_error,
            direction_error,
            seed,
        })
    }

    pub fn from_corpus(
        corpus: &SynthCorpus,
        relevance_error: Real,
        direction_error: Real,
        seed: u64,
    ) -> Result<Self, SynthError> {
        Self::new(corpus.truth_map(), relevance_error, direction_error, seed)
    }

    /// Load the truth table from a truth file written by [`write_corpus`].
    pub fn from_truth_file(
        path: &Path,
        relevance_error: Real,
        direction_error: Real,
        seed: u64,
    ) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path).map_err(|source| SynthError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut truths = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: TruthLine = serde_json::from_str(line).map_err(|e| SynthError::TruthParse {
                path: path.display().to_string(),
                line: idx + 1,
                reason: e.to_string(),
            })?;
            truths.insert(
                rec.id,
                SynthItemTruth {
                    relevant: rec.relevant,
                    planted_label: rec.planted_label,
                    surface_reading: rec.surface_reading,
                },
            );
        }
        Self::new(truths, relevance_error, direction_error, seed)
    }

    /// Deterministic per-(seed, item) corruption draws.
    fn flips(&self, id: &str) -> (bool, bool) {
        if self.relevance_error == 0.0 && self.direction_error == 0.0 {
            return (false, false);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a64(id.as_bytes()));
        let flip_rel = rng.gen_bool(self.relevance_error);
        let flip_dir = rng.gen_bool(self.direction_error);
        (flip_rel, flip_dir)
    }
}

impl Classifier for OracleBackend {
    fn classify(&self, request: &ClassifierRequest) -> Result<ClassifierResponse, BackendError> {
        let query = extract_query(&request.prompt);
        let id = query.split_whitespace().next().unwrap_or_default();
        let truth = self
            .truths
            .get(id)
            .ok_or_else(|| BackendError::UnknownItem(id.to_string()))?;
        let (flip_rel, flip_dir) = self.flips(id);
        let maybe_flip = |dir: TrendLabel| if flip_dir { dir.flipped() } else { dir };
        let label = match request.label_set {
            crate::prompting::LabelSet::ThreeClass => {
                let treated_relevant = truth.relevant ^ flip_rel;
                if !treated_relevant {
                    ItemLabel::Irrelevant
                } else {
                    let dir = match truth.planted_label.as_trend() {
                        Some(dir) => dir,
                        // a noise item mistaken for relevant reads its surface
                        None => truth.surface_reading,
                    };
                    ItemLabel::from(maybe_flip(dir))
                }
            }
            crate::prompting::LabelSet::TwoClass => {
                if truth.relevant {
                    let dir = truth.planted_label.as_trend().expect("relevant item has direction");
                    ItemLabel::from(maybe_flip(dir))
                } else {
                    // no abstain available: the surface reading becomes a vote
                    ItemLabel::from(truth.surface_reading)
                }
            }
        };
        Ok(ClassifierResponse {
            raw: format!("{label} (oracle)"),
            label,
            source: ResponseSource::Oracle,
        })
    }

    fn summarize(&self, article: &str, n_tokens: usize) -> Result<String, BackendError> {
        // the oracle summarizer is first-N by definition
        let tokens: Vec<&str> = article.split_whitespace().collect();
        Ok(tokens[..n_tokens.min(tokens.len())].join(" "))
    }

    fn name(&self) -> &'static str {
        "oracle"
    }
}

/// Probability that the λ-threshold vote matches the day trend, with the
/// `approximate` flag set when the normal approximation was used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoteAccuracy {
    pub probability: Real,
    pub approximate: bool,
}

fn binomial_coefficient<F: RealScalar>(n: usize, k: usize) -> F {
    let k = k.min(n - k);
    let mut c = F::one();
    for i in 1..=k {
        c = c * F::from_count(n - k + i) / F::from_count(i);
    }
    c
}

/// Exact probability of the vote matching truth: `m_relevant` independent
/// direction votes, each correct with probability `q`, pushed through the
/// vote rule and averaged over the fair-coin trend prior. Exact binomial
/// sums up to [`ENUMERATION_CUTOFF`] voters, flagged normal approximation
/// beyond.
pub fn expected_vote_accuracy(
    m_relevant: usize,
    q: Real,
    lambda: Real,
) -> Result<VoteAccuracy, SynthError> {
    if m_relevant == 0 {
        return Err(SynthError::NoRelevantVoters);
    }
    for (name, p) in [("q", q), ("lambda", lambda)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(SynthError::BadConfig(format!("{name} {p} outside [0, 1]")));
        }
    }
    let m = m_relevant;
    if m <= ENUMERATION_CUTOFF || q == 0.0 || q == 1.0 {
        // k = number of Down votes; correctness decided by the vote rule itself
        let mut p_up_correct = 0.0;
        let mut p_down_correct = 0.0;
        for k in 0..=m {
            let t = VoteTally::new(m - k, k, 0);
            let (label, _) = vote(&t, lambda, TrendLabel::Up);
            let coeff: Real = binomial_coefficient(m, k);
            if label == TrendLabel::Up {
                // truth Up day: each vote is Down with probability 1 − q
                p_up_correct += coeff * (1.0 - q).powi(k as i32) * q.powi((m - k) as i32);
            } else {
                // truth Down day: each vote is Down with probability q
                p_down_correct += coeff * q.powi(k as i32) * (1.0 - q).powi((m - k) as i32);
            }
        }
        return Ok(VoteAccuracy {
            probability: 0.5 * (p_up_correct + p_down_correct),
            approximate: false,
        });
    }
    // Normal approximation with continuity correction: Down wins iff
    // n_down ≥ k_min, the smallest integer strictly above λ·m.
    let threshold = lambda * m as Real;
    let k_min = threshold.floor() + 1.0;
    let sigma = (m as Real * q * (1.0 - q)).sqrt();
    let p_up_correct =
        crate::evaluation::stats::standard_normal_cdf((k_min - 0.5 - m as Real * (1.0 - q)) / sigma);
    let p_down_correct =
        1.0 - crate::evaluation::stats::standard_normal_cdf((k_min - 0.5 - m as Real * q) / sigma);
    Ok(VoteAccuracy {
        probability: 0.5 * (p_up_correct + p_down_correct),
        approximate: true,
    })
}

/// Day-by-day predicted DTV accuracy for a generated corpus under a perfect
/// oracle: the mean of [`expected_vote_accuracy`] over each day's realized
/// relevant count, with all-noise days contributing the fair-coin fallback
/// probability 1/2.
pub fn predicted_dtv_accuracy(corpus: &SynthCorpus, lambda: Real) -> Result<VoteAccuracy, SynthError> {
    let q = corpus.cfg.direction_accuracy;
    let mut sum = 0.0;
    let mut approximate = false;
    for count in corpus.relevant_counts() {
        if count == 0 {
            sum += 0.5;
        } else {
            let acc = expected_vote_accuracy(count, q, lambda)?;
            sum += acc.probability;
            approximate |= acc.approximate;
        }
    }
    Ok(VoteAccuracy {
        probability: sum / corpus.days.len() as Real,
        approximate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::LexiconBackend;
    use crate::corpus::{build_instances, derive_labels};
    use crate::prompting::LabelSet;
    use approx::assert_abs_diff_eq;

    fn small_cfg() -> SynthConfig {
        SynthConfig {
            n_days: 40,
            items_per_day: 5,
            relevance_rate: 0.6,
            direction_accuracy: 0.8,
            noise_direction_bias: 0.5,
            seed: 9,
            start_date: NaiveDate::from_ymd_opt(2000, 1, 3).unwrap(),
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&small_cfg()).unwrap();
        let b = generate(&small_cfg()).unwrap();
        assert_eq!(a.prices, b.prices);
        assert_eq!(a.news(), b.news());
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let pa = write_corpus(&a, dir_a.path()).unwrap();
        let pb = write_corpus(&b, dir_b.path()).unwrap();
        for (x, y) in [(&pa.news, &pb.news), (&pa.prices, &pb.prices), (&pa.truth, &pb.truth)] {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
    }

    #[test]
    fn all_relevant_perfect_accuracy_plants_trend_everywhere() {
        let cfg = SynthConfig {
            relevance_rate: 1.0,
            direction_accuracy: 1.0,
            ..small_cfg()
        };
        let corpus = generate(&cfg).unwrap();
        for day in &corpus.days {
            for (_, t) in &day.items {
                assert!(t.relevant);
                assert_eq!(t.planted_label, ItemLabel::from(day.true_trend));
            }
        }
    }

    #[test]
    fn zero_relevance_means_all_noise() {
        let cfg = SynthConfig {
            relevance_rate: 0.0,
            ..small_cfg()
        };
        let corpus = generate(&cfg).unwrap();
        for day in &corpus.days {
            for (_, t) in &day.items {
                assert!(!t.relevant);
                assert_eq!(t.planted_label, ItemLabel::Irrelevant);
            }
        }
    }

    #[test]
    fn derived_labels_recover_planted_trends() {
        let corpus = generate(&small_cfg()).unwrap();
        let labels = derive_labels(&corpus.prices).unwrap();
        for (day, planted) in corpus.days.iter().enumerate() {
            let date = corpus.prices[day + 1].date;
            assert_eq!(labels[&date], planted.true_trend);
        }
        // windows line up: every day's items fall in its window
        let set = build_instances(&corpus.news(), &corpus.prices).unwrap();
        assert_eq!(set.instances.len(), corpus.days.len());
        assert_eq!(set.unassigned_news, 0);
        for (inst, day) in set.instances.iter().zip(&corpus.days) {
            assert_eq!(inst.news.len(), day.items.len());
            assert_eq!(inst.truth, day.true_trend);
        }
    }

    #[test]
    fn lexicon_recovers_surface_readings() {
        let corpus = generate(&small_cfg()).unwrap();
        let lexicon = LexiconBackend::new(synth_lexicon_rules());
        for day in &corpus.days {
            for (item, t) in &day.items {
                let req = ClassifierRequest::new(
                    "lex",
                    0.0,
                    format!("Title: {}\nLabel:", item.title),
                    LabelSet::TwoClass,
                )
                .unwrap();
                let resp = lexicon.classify(&req).unwrap();
                assert_eq!(resp.label, ItemLabel::from(t.surface_reading), "item {}", item.id);
            }
        }
    }

    fn oracle_req(title: &str, set: LabelSet) -> ClassifierRequest {
        ClassifierRequest::new("oracle", 0.0, format!("Title: {title}\nLabel:"), set).unwrap()
    }

    #[test]
    fn exact_oracle_returns_planted_labels() {
        let corpus = generate(&small_cfg()).unwrap();
        let oracle = OracleBackend::from_corpus(&corpus, 0.0, 0.0, 1).unwrap();
        for day in &corpus.days {
            for (item, t) in &day.items {
                let resp = oracle.classify(&oracle_req(&item.title, LabelSet::ThreeClass)).unwrap();
                assert_eq!(resp.label, t.planted_label);
                assert_eq!(resp.source, ResponseSource::Oracle);
            }
        }
    }

    #[test]
    fn two_class_oracle_votes_surface_on_noise() {
        let cfg = SynthConfig {
            relevance_rate: 0.0,
            noise_direction_bias: 1.0,
            ..small_cfg()
        };
        let corpus = generate(&cfg).unwrap();
        let oracle = OracleBackend::from_corpus(&corpus, 0.0, 0.0, 1).unwrap();
        let (item, t) = &corpus.days[0].items[0];
        assert_eq!(t.planted_label, ItemLabel::Irrelevant);
        let resp = oracle.classify(&oracle_req(&item.title, LabelSet::TwoClass)).unwrap();
        assert_eq!(resp.label, ItemLabel::Up); // forced misvote
    }

    #[test]
    fn unknown_item_is_error() {
        let corpus = generate(&small_cfg()).unwrap();
        let oracle = OracleBackend::from_corpus(&corpus, 0.0, 0.0, 1).unwrap();
        assert!(matches!(
            oracle.classify(&oracle_req("zzz99 unknown title", LabelSet::ThreeClass)),
            Err(BackendError::UnknownItem(_))
        ));
    }

    #[test]
    fn flip_pattern_is_deterministic_per_seed() {
        let corpus = generate(&small_cfg()).unwrap();
        let a = OracleBackend::from_corpus(&corpus, 0.3, 0.3, 5).unwrap();
        let b = OracleBackend::from_corpus(&corpus, 0.3, 0.3, 5).unwrap();
        let c = OracleBackend::from_corpus(&corpus, 0.3, 0.3, 6).unwrap();
        let mut any_difference = false;
        for day in &corpus.days {
            for (item, _) in &day.items {
                let req = oracle_req(&item.title, LabelSet::ThreeClass);
                let ra = a.classify(&req).unwrap().label;
                let rb = b.classify(&req).unwrap().label;
                let rc = c.classify(&req).unwrap().label;
                assert_eq!(ra, rb);
                any_difference |= ra != rc;
            }
        }
        assert!(any_difference, "different seeds should flip differently");
    }

    #[test]
    fn articles_lead_with_id_and_surface_phrase() {
        let corpus = generate(&small_cfg()).unwrap();
        let lexicon = LexiconBackend::new(synth_lexicon_rules());
        for day in &corpus.days {
            for (item, t) in &day.items {
                let article = item.article.as_deref().unwrap();
                assert!(article.starts_with(&item.id));
                assert!(article.len() > item.title.len());
                // the first 8 tokens still carry the surface phrase
                let head: Vec<&str> = article.split_whitespace().take(8).collect();
                let score = lexicon.score(&head.join(" "));
                let expect = if t.surface_reading == TrendLabel::Up { 1.0 } else { -1.0 };
                assert_eq!(score, expect, "item {}", item.id);
            }
        }
    }

    #[test]
    fn oracle_summarizer_is_first_n_tokens() {
        let corpus = generate(&small_cfg()).unwrap();
        let oracle = OracleBackend::from_corpus(&corpus, 0.0, 0.0, 1).unwrap();
        let article = "a b c d e f g h";
        assert_eq!(oracle.summarize(article, 3).unwrap(), "a b c");
        assert_eq!(oracle.summarize(article, 99).unwrap(), article);
    }

    #[test]
    fn truth_file_round_trips() {
        let corpus = generate(&small_cfg()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = write_corpus(&corpus, dir.path()).unwrap();
        let from_file = OracleBackend::from_truth_file(&paths.truth, 0.0, 0.0, 1).unwrap();
        let from_mem = OracleBackend::from_corpus(&corpus, 0.0, 0.0, 1).unwrap();
        for day in &corpus.days {
            for (item, _) in &day.items {
                let req = oracle_req(&item.title, LabelSet::ThreeClass);
                assert_eq!(
                    from_file.classify(&req).unwrap().label,
                    from_mem.classify(&req).unwrap().label
                );
            }
        }
    }

    /// Independent brute-force oracle: enumerate all 2^m correctness
    /// patterns and apply a direct ratio comparison.
    fn enumerate_vote_accuracy(m: usize, q: Real, lambda: Real) -> Real {
        let mut total = 0.0;
        for truth in [TrendLabel::Up, TrendLabel::Down] {
            let mut p_correct = 0.0;
            for mask in 0u32..(1 << m) {
                let mut prob = 1.0;
                let mut n_down = 0usize;
                for i in 0..m {
                    let correct = mask & (1 << i) != 0;
                    prob *= if correct { q } else { 1.0 - q };
                    let dir = if correct { truth } else { truth.flipped() };
                    if dir == TrendLabel::Down {
                        n_down += 1;
                    }
                }
                let final_label = if (n_down as Real) / (m as Real) > lambda {
                    TrendLabel::Down
                } else {
                    TrendLabel::Up
                };
                if final_label == truth {
                    p_correct += prob;
                }
            }
            total += 0.5 * p_correct;
        }
        total
    }

    #[test]
    fn single_voter_accuracy_is_q() {
        let acc = expected_vote_accuracy(1, 0.8, 0.5).unwrap();
        assert_abs_diff_eq!(acc.probability, 0.8, epsilon = 1e-12);
        assert!(!acc.approximate);
    }

    #[test]
    fn perfect_voters_are_always_right() {
        for lambda in [0.1, 0.5, 0.9] {
            let acc = expected_vote_accuracy(3, 1.0, lambda).unwrap();
            assert_abs_diff_eq!(acc.probability, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn three_voters_match_brute_force_enumeration() {
        // confirmed by enumeration: q³ + 3q²(1−q) per side at q = 0.8
        let by_enumeration = enumerate_vote_accuracy(3, 0.8, 0.5);
        assert_abs_diff_eq!(by_enumeration, 0.896, epsilon = 1e-12);
        let acc = expected_vote_accuracy(3, 0.8, 0.5).unwrap();
        assert_abs_diff_eq!(acc.probability, by_enumeration, epsilon = 1e-12);
    }

    #[test]
    fn enumeration_agrees_across_small_m_and_lambda() {
        for m in 1..=8usize {
            for q in [0.3, 0.55, 0.8] {
                for lambda in [0.2, 0.5, 0.7] {
                    let got = expected_vote_accuracy(m, q, lambda).unwrap();
                    let expect = enumerate_vote_accuracy(m, q, lambda);
                    assert_abs_diff_eq!(got.probability, expect, epsilon = 1e-10);
                    assert!(!got.approximate);
                }
            }
        }
    }

    #[test]
    fn zero_voters_is_error() {
        assert!(matches!(
            expected_vote_accuracy(0, 0.8, 0.5),
            Err(SynthError::NoRelevantVoters)
        ));
    }

    #[test]
    fn jury_direction_odd_m_monotone_in_q_and_at_least_q() {
        for m in (1..=15usize).step_by(2) {
            let mut prev = 0.5;
            for step in 1..=10 {
                let q = 0.5 + 0.05 * step as Real;
                let acc = expected_vote_accuracy(m, q, 0.5).unwrap().probability;
                assert!(acc >= q - 1e-12, "m={m} q={q} acc={acc}");
                assert!(acc > prev - 1e-12, "m={m} q={q} not increasing");
                prev = acc;
            }
        }
    }

    #[test]
    fn normal_approximation_flagged_and_close() {
        let exact_at_cutoff = expected_vote_accuracy(30, 0.6, 0.5).unwrap();
        assert!(!exact_at_cutoff.approximate);
        let approx = expected_vote_accuracy(200, 0.6, 0.5).unwrap();
        assert!(approx.approximate);
        // sanity: far from degenerate, between q and 1
        assert!(approx.probability > 0.9 && approx.probability < 1.0);
    }

    #[test]
    fn bad_config_rejected() {
        assert!(generate(&SynthConfig { n_days: 0, ..small_cfg() }).is_err());
        assert!(generate(&SynthConfig { relevance_rate: 1.5, ..small_cfg() }).is_err());
        assert!(expected_vote_accuracy(3, 1.2, 0.5).is_err());
    }
}
