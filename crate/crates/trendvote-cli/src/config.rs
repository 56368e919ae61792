//! Run configuration: a flat-sectioned TOML file where every value can be
//! overridden on the command line by its dotted name
//! (`--method.lambda 0.45`) or via `--set method.lambda=0.45`.
//!
//! Relative paths in the file resolve against the config file's directory,
//! so a run is archivable as the config plus its data directory. The API
//! credential itself is never part of the config — only the name of the
//! environment variable that holds it.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use trendvote::corpus::DateSpan;
use trendvote::pipeline::{default_lambda_grid, ErrorPolicy, MethodConfig, MethodKind};
use trendvote::prompting::InputVariant;
use trendvote::synthlab::SynthConfig;
use trendvote::{Real, TrendLabel};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    pub data: DataSection,
    pub splits: SplitsSection,
    pub method: MethodSection,
    pub prompting: PromptingSection,
    pub backend: BackendSection,
    pub sweep: SweepSection,
    pub report: ReportSection,
    pub synth: SynthSection,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct DataSection {
    pub news: String,
    pub prices: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct SplitsSection {
    pub train_start: String,
    pub train_end: String,
    pub valid_start: String,
    pub valid_end: String,
    pub test_start: String,
    pub test_end: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodSection {
    pub kind: String,
    pub shots_per_class: usize,
    pub lambda: Real,
    pub max_news: usize,
    pub input_variant: String,
    pub fallback: String,
    pub token_budget: usize,
    pub seed: u64,
    pub error_policy: String,
}

impl Default for MethodSection {
    fn default() -> Self {
        MethodSection {
            kind: "dtv".into(),
            shots_per_class: 0,
            lambda: 0.5,
            max_news: 60,
            input_variant: "title".into(),
            fallback: "up".into(),
            token_budget: 4097,
            seed: 7,
            error_policy: "abort".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct PromptingSection {
    pub item_template: String,
    pub standard_template: String,
    pub pool_standard: String,
    pub pool_voting: String,
    pub pool_dtv: String,
    pub instruction: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendSection {
    pub kind: String,
    pub cache: String,
    pub lexicon: String,
    pub truth: String,
    pub relevance_error: Real,
    pub direction_error: Real,
    pub oracle_seed: u64,
    pub endpoint: String,
    pub model: String,
    pub credential_env: String,
    pub temperature: Real,
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub in_flight: usize,
    pub requests_per_minute: u32,
    pub timeout_secs: u64,
}

impl Default for BackendSection {
    fn default() -> Self {
        BackendSection {
            kind: "lexicon".into(),
            cache: String::new(),
            lexicon: String::new(),
            truth: String::new(),
            relevance_error: 0.0,
            direction_error: 0.0,
            oracle_seed: 1,
            endpoint: String::new(),
            model: "gpt-3.5-turbo".into(),
            credential_env: "TRENDVOTE_API_KEY".into(),
            temperature: 0.0,
            max_attempts: 5,
            initial_backoff_ms: 250,
            in_flight: 4,
            requests_per_minute: 60,
            timeout_secs: 60,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct SweepSection {
    pub lambda_grid: Vec<Real>,
    pub shots_grid: Vec<usize>,
    pub news_count_grid: Vec<usize>,
    pub variants: Vec<String>,
}

impl SweepSection {
    pub fn lambda_grid(&self) -> Vec<Real> {
        if self.lambda_grid.is_empty() {
            default_lambda_grid()
        } else {
            self.lambda_grid.clone()
        }
    }

    pub fn shots_grid(&self) -> Vec<usize> {
        if self.shots_grid.is_empty() {
            vec![0, 3, 6, 9, 12]
        } else {
            self.shots_grid.clone()
        }
    }

    pub fn news_count_grid(&self) -> Vec<usize> {
        if self.news_count_grid.is_empty() {
            vec![10, 20, 30, 40, 60, 80]
        } else {
            self.news_count_grid.clone()
        }
    }

    pub fn variants(&self) -> Vec<String> {
        if self.variants.is_empty() {
            vec!["title".into()]
        } else {
            self.variants.clone()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportSection {
    pub out_dir: String,
    pub positive_class: String,
}

impl Default for ReportSection {
    fn default() -> Self {
        ReportSection {
            out_dir: "out".into(),
            positive_class: "up".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSection {
    pub n_days: usize,
    pub items_per_day: usize,
    pub relevance_rate: Real,
    pub direction_accuracy: Real,
    pub noise_direction_bias: Real,
    pub seed: u64,
    pub start_date: String,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            n_days: 500,
            items_per_day: 8,
            relevance_rate: 0.5,
            direction_accuracy: 0.8,
            noise_direction_bias: 0.5,
            seed: 42,
            start_date: "2000-01-03".into(),
        }
    }
}

fn parse_date(name: &str, value: &str) -> Result<NaiveDate, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Validation(format!("{name}: bad date `{value}` (expected YYYY-MM-DD)")))
}

fn parse_trend(name: &str, value: &str) -> Result<TrendLabel, CliError> {
    match value.to_ascii_lowercase().as_str() {
        "up" => Ok(TrendLabel::Up),
        "down" => Ok(TrendLabel::Down),
        other => Err(CliError::Validation(format!("{name}: expected up|down, got `{other}`"))),
    }
}

impl RunConfig {
    /// Load a TOML config file and apply `key.path=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut table: toml::Table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::Validation(format!("cannot read config {}: {e}", p.display()))
                })?;
                text.parse()
                    .map_err(|e| CliError::Validation(format!("config {}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for (key, value) in overrides {
            apply_override(&mut table, key, value)?;
        }
        let mut cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| CliError::Validation(format!("config: {e}")))?;
        if let Some(dir) = path.and_then(|p| p.parent()) {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    /// Resolve relative paths against the config file's directory.
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |s: &mut String| {
            if !s.is_empty() && !Path::new(s).is_absolute() {
                *s = base.join(&*s).to_string_lossy().into_owned();
            }
        };
        fix(&mut self.data.news);
        fix(&mut self.data.prices);
        fix(&mut self.prompting.item_template);
        fix(&mut self.prompting.standard_template);
        fix(&mut self.prompting.pool_standard);
        fix(&mut self.prompting.pool_voting);
        fix(&mut self.prompting.pool_dtv);
        fix(&mut self.backend.cache);
        fix(&mut self.backend.lexicon);
        fix(&mut self.backend.truth);
        // report.out_dir stays relative to the working directory: it is an
        // output location, not part of the archived inputs.
    }

    pub fn method_kind(&self) -> Result<MethodKind, CliError> {
        MethodKind::parse(&self.method.kind)
            .ok_or_else(|| CliError::Usage(format!("unknown method `{}`", self.method.kind)))
    }

    pub fn method_config(&self) -> Result<MethodConfig, CliError> {
        let kind = self.method_kind()?;
        let error_policy = match self.method.error_policy.as_str() {
            "abort" => ErrorPolicy::Abort,
            "mark_irrelevant" => ErrorPolicy::MarkIrrelevant,
            "drop" => ErrorPolicy::DropItem,
            other => {
                return Err(CliError::Validation(format!(
                    "method.error_policy: expected abort|mark_irrelevant|drop, got `{other}`"
                )))
            }
        };
        Ok(MethodConfig {
            kind,
            shots_per_class: self.method.shots_per_class,
            lambda: self.method.lambda,
            max_news: self.method.max_news,
            fallback: parse_trend("method.fallback", &self.method.fallback)?,
            token_budget: Some(self.method.token_budget),
            seed: self.method.seed,
            error_policy,
        })
    }

    pub fn input_variant(&self) -> Result<InputVariant, CliError> {
        InputVariant::parse(&self.method.input_variant)
            .map_err(|e| CliError::Validation(format!("method.input_variant: {e}")))
    }

    pub fn positive_class(&self) -> Result<TrendLabel, CliError> {
        parse_trend("report.positive_class", &self.report.positive_class)
    }

    pub fn spans(&self) -> Result<[DateSpan; 3], CliError> {
        let s = &self.splits;
        for (name, v) in [
            ("splits.train_start", &s.train_start),
            ("splits.train_end", &s.train_end),
            ("splits.valid_start", &s.valid_start),
            ("splits.valid_end", &s.valid_end),
            ("splits.test_start", &s.test_start),
            ("splits.test_end", &s.test_end),
        ] {
            if v.is_empty() {
                return Err(CliError::Validation(format!("{name} is not set")));
            }
        }
        Ok([
            DateSpan::new(
                parse_date("splits.train_start", &s.train_start)?,
                parse_date("splits.train_end", &s.train_end)?,
            ),
            DateSpan::new(
                parse_date("splits.valid_start", &s.valid_start)?,
                parse_date("splits.valid_end", &s.valid_end)?,
            ),
            DateSpan::new(
                parse_date("splits.test_start", &s.test_start)?,
                parse_date("splits.test_end", &s.test_end)?,
            ),
        ])
    }

    pub fn synth_config(&self) -> Result<SynthConfig, CliError> {
        Ok(SynthConfig {
            n_days: self.synth.n_days,
            items_per_day: self.synth.items_per_day,
            relevance_rate: self.synth.relevance_rate,
            direction_accuracy: self.synth.direction_accuracy,
            noise_direction_bias: self.synth.noise_direction_bias,
            seed: self.synth.seed,
            start_date: parse_date("synth.start_date", &self.synth.start_date)?,
        })
    }

    /// Config echo embedded in reports (paths and knobs, no secrets).
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(&self.report.out_dir)
    }
}

/// Apply one `a.b=value` override onto the raw TOML table.
fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.len() != 2 || parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!(
            "override key must look like section.key, got `{key}`"
        )));
    }
    let value = parse_toml_value(raw);
    let section = table
        .entry(parts[0].to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let toml::Value::Table(section) = section else {
        return Err(CliError::Usage(format!("`{}` is not a config section", parts[0])));
    };
    section.insert(parts[1].to_string(), value);
    Ok(())
}

/// Parse an override value as TOML, falling back to a plain string
/// (so `--backend.kind lexicon` works without quotes).
fn parse_toml_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_cover_a_minimal_config() {
        let cfg = RunConfig::load(None, &[]).unwrap();
        assert_eq!(cfg.method.kind, "dtv");
        assert_eq!(cfg.method.lambda, 0.5);
        assert_eq!(cfg.backend.credential_env, "TRENDVOTE_API_KEY");
        assert_eq!(cfg.sweep.shots_grid(), vec![0, 3, 6, 9, 12]);
        assert_eq!(cfg.sweep.lambda_grid().len(), 19);
    }

    #[test]
    fn overrides_take_typed_values() {
        let overrides = vec![
            ("method.lambda".to_string(), "0.45".to_string()),
            ("method.kind".to_string(), "voting".to_string()),
            ("sweep.shots_grid".to_string(), "[0, 6]".to_string()),
            ("backend.in_flight".to_string(), "9".to_string()),
        ];
        let cfg = RunConfig::load(None, &overrides).unwrap();
        assert_eq!(cfg.method.lambda, 0.45);
        assert_eq!(cfg.method.kind, "voting");
        assert_eq!(cfg.sweep.shots_grid, vec![0, 6]);
        assert_eq!(cfg.backend.in_flight, 9);
    }

    #[test]
    fn bad_override_key_is_usage_error() {
        let overrides = vec![("lambda".to_string(), "0.5".to_string())];
        assert!(matches!(
            RunConfig::load(None, &overrides),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[data]\nnews = \"news.jsonl\"\nprices = \"/abs/prices.csv\"\n").unwrap();
        let cfg = RunConfig::load(Some(&path), &[]).unwrap();
        assert_eq!(cfg.data.news, dir.path().join("news.jsonl").to_string_lossy());
        assert_eq!(cfg.data.prices, "/abs/prices.csv");
    }

    #[test]
    fn spans_parse_and_validate() {
        let overrides: Vec<(String, String)> = [
            ("splits.train_start", "2013-05-01"),
            ("splits.train_end", "2013-05-05"),
            ("splits.valid_start", "2013-05-06"),
            ("splits.valid_end", "2013-05-08"),
            ("splits.test_start", "2013-05-09"),
            ("splits.test_end", "2013-05-14"),
        ]
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        let cfg = RunConfig::load(None, &overrides).unwrap();
        let spans = cfg.spans().unwrap();
        assert_eq!(spans[0].start.to_string(), "2013-05-01");
        assert_eq!(spans[2].end.to_string(), "2013-05-14");
    }

    #[test]
    fn credential_value_never_in_echo() {
        std::env::set_var("TRENDVOTE_ECHO_TEST_KEY", "super-secret");
        let cfg = RunConfig::load(
            None,
            &[("backend.credential_env".to_string(), "TRENDVOTE_ECHO_TEST_KEY".to_string())],
        )
        .unwrap();
        let echo = serde_json::to_string(&cfg.echo()).unwrap();
        assert!(echo.contains("TRENDVOTE_ECHO_TEST_KEY"));
        assert!(!echo.contains("super-secret"));
    }
}
