//! Task configuration files: flat `key=value` settings plus `group` and
//! `feature` template lines in one plain-text file.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::features::{Extractor, TemplateSet};
use crate::training::TrainingConfig;
use crate::transition::OracleStrategy;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    LangId,
    Pos,
    Segment,
    Preorder,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::LangId => "langid",
            Task::Pos => "pos",
            Task::Segment => "segment",
            Task::Preorder => "preorder",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "langid" => Ok(Task::LangId),
            "pos" => Ok(Task::Pos),
            "segment" => Ok(Task::Segment),
            "preorder" => Ok(Task::Preorder),
            _ => Err(Error::config(format!("unknown task `{s}` (expected langid, pos, segment or preorder)"))),
        }
    }
}

impl Task {
    pub fn default_metric(self) -> &'static str {
        match self {
            Task::LangId => "micro-f1",
            Task::Pos => "accuracy",
            Task::Segment => "word-f1",
            Task::Preorder => "frs",
        }
    }

    /// Built-in configuration used when `--config` is not given.
    pub fn default_config(self) -> &'static str {
        match self {
            Task::LangId => "langid-16",
            Task::Pos => "pos",
            Task::Segment => "seg-c64",
            Task::Preorder => "preorder",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PreorderMode {
    #[default]
    Vanilla,
    WithPos,
    Inlined,
}

impl fmt::Display for PreorderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PreorderMode::Vanilla => "vanilla",
            PreorderMode::WithPos => "with-pos",
            PreorderMode::Inlined => "inlined",
        })
    }
}

impl FromStr for PreorderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(PreorderMode::Vanilla),
            "with-pos" => Ok(PreorderMode::WithPos),
            "inlined" => Ok(PreorderMode::Inlined),
            _ => Err(Error::config(format!("unknown preorder mode `{s}` (expected vanilla, with-pos or inlined)"))),
        }
    }
}

fn strategy_name(s: OracleStrategy) -> &'static str {
    match s {
        OracleStrategy::EagerAppend => "eager-append",
        OracleStrategy::BubbleSort => "bubble-sort",
    }
}

fn parse_strategy(s: &str) -> Result<OracleStrategy> {
    match s {
        "eager-append" => Ok(OracleStrategy::EagerAppend),
        "bubble-sort" => Ok(OracleStrategy::BubbleSort),
        _ => Err(Error::config(format!("unknown oracle `{s}` (expected eager-append or bubble-sort)"))),
    }
}

/// Everything needed to build, train and describe a model for one task.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskConfig {
    pub task: Task,
    pub hidden_dim: usize,
    /// Minimum training count for lexicon entries.
    pub lexicon_cutoff: usize,
    /// Label count for untrained (skeleton) models used by `size` and `flops`.
    pub num_classes: Option<usize>,
    pub cluster_values: u32,
    pub mode: PreorderMode,
    pub oracle: OracleStrategy,
    /// Quantize embeddings when saving.
    pub quantize: bool,
    pub templates: TemplateSet,
    pub training: TrainingConfig,
}

const BUILTINS: &[(&str, &str)] = &[
    ("langid-6", include_str!("../configs/langid-6.conf")),
    ("langid-16", include_str!("../configs/langid-16.conf")),
    ("langid-16q", include_str!("../configs/langid-16q.conf")),
    ("pos", include_str!("../configs/pos.conf")),
    ("pos-clusters", include_str!("../configs/pos-clusters.conf")),
    ("pos-half", include_str!("../configs/pos-half.conf")),
    ("seg-c64", include_str!("../configs/seg-c64.conf")),
    ("seg-c256", include_str!("../configs/seg-c256.conf")),
    ("seg-c64-b04", include_str!("../configs/seg-c64-b04.conf")),
    ("preorder", include_str!("../configs/preorder.conf")),
    ("preorder-pos", include_str!("../configs/preorder-pos.conf")),
    ("preorder-inlined", include_str!("../configs/preorder-inlined.conf")),
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTINS.iter().map(|(n, _)| *n)
}

pub fn builtin_text(name: &str) -> Option<&'static str> {
    BUILTINS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

impl TaskConfig {
    pub fn builtin(name: &str) -> Result<Self> {
        let text = builtin_text(name).ok_or_else(|| {
            Error::config(format!(
                "no built-in config `{name}` (available: {})",
                builtin_names().collect::<Vec<_>>().join(", ")
            ))
        })?;
        TaskConfig::parse(text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut template_lines = String::new();
        let mut settings: Vec<(usize, String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                template_lines.push('\n');
                continue;
            }
            if line.starts_with("group ") || line.starts_with("feature ") {
                template_lines.push_str(line);
                template_lines.push('\n');
                continue;
            }
            template_lines.push('\n');
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key=value, got `{line}`", i + 1)))?;
            settings.push((i + 1, k.trim().to_string(), v.trim().to_string()));
        }
        let task: Task = settings
            .iter()
            .find(|(_, k, _)| k == "task")
            .ok_or_else(|| Error::config("config lacks a `task=` line"))?
            .2
            .parse()?;
        let templates = TemplateSet::parse(&template_lines)?;
        let mut cfg = TaskConfig {
            task,
            hidden_dim: 0,
            lexicon_cutoff: 1,
            num_classes: None,
            cluster_values: 256,
            mode: PreorderMode::Vanilla,
            oracle: OracleStrategy::EagerAppend,
            quantize: false,
            templates,
            training: TrainingConfig { eval_metric: task.default_metric().into(), ..TrainingConfig::default() },
        };
        let mut saw_hidden = false;
        for (line, k, v) in &settings {
            if k == "hidden_dim" {
                saw_hidden = true;
            }
            cfg.set(k, v).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {line}: {m}")),
                other => other,
            })?;
        }
        if !saw_hidden {
            return Err(Error::config("config lacks `hidden_dim=`"));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply one `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::config(format!("bad value `{value}` for `{key}`"));
        match key {
            "task" => {
                let t: Task = value.parse()?;
                if t != self.task {
                    return Err(Error::config(format!("config is for task {}, not {t}", self.task)));
                }
            }
            "hidden_dim" => self.hidden_dim = value.parse().map_err(|_| bad())?,
            "lexicon_cutoff" => self.lexicon_cutoff = value.parse().map_err(|_| bad())?,
            "num_classes" => self.num_classes = Some(value.parse().map_err(|_| bad())?),
            "cluster_values" => self.cluster_values = value.parse().map_err(|_| bad())?,
            "mode" => self.mode = value.parse()?,
            "oracle" => self.oracle = parse_strategy(value)?,
            "quantize" => {
                self.quantize = match value {
                    "true" | "on" | "1" => true,
                    "false" | "off" | "0" => false,
                    _ => return Err(bad()),
                }
            }
            _ => {
                if !self.training.set(key, value)? {
                    return Err(Error::config(format!("unknown config key `{key}`")));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        if self.hidden_dim == 0 {
            return Err(Error::config("hidden_dim must be positive"));
        }
        if self.lexicon_cutoff == 0 {
            return Err(Error::config("lexicon_cutoff must be at least 1"));
        }
        if self.cluster_values == 0 {
            return Err(Error::config("cluster_values must be positive"));
        }
        if self.templates.groups().is_empty() {
            return Err(Error::config("config declares no feature groups"));
        }
        let uses_tags = self.templates.uses_extractor(|e| *e == Extractor::Tag);
        match self.task {
            Task::Preorder => {
                if uses_tags != (self.mode == PreorderMode::WithPos) {
                    return Err(Error::config(format!(
                        "preorder mode {} {} tag features",
                        self.mode,
                        if uses_tags { "cannot use" } else { "requires" }
                    )));
                }
            }
            _ if uses_tags => return Err(Error::config(format!("task {} cannot use tag features", self.task))),
            _ => {}
        }
        Ok(())
    }

    pub fn uses_clusters(&self) -> bool {
        self.templates.uses_extractor(|e| *e == Extractor::Cluster)
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn to_text(&self) -> String {
        let mut s =
            format!("task={}\nhidden_dim={}\nlexicon_cutoff={}\n", self.task, self.hidden_dim, self.lexicon_cutoff);
        if let Some(k) = self.num_classes {
            s.push_str(&format!("num_classes={k}\n"));
        }
        s.push_str(&format!("cluster_values={}\n", self.cluster_values));
        if self.task == Task::Preorder {
            s.push_str(&format!("mode={}\noracle={}\n", self.mode, strategy_name(self.oracle)));
        }
        s.push_str(&format!("quantize={}\n", self.quantize));
        s.push_str(&self.training.to_text());
        s.push_str(&self.templates.to_string());
        s
    }
}

/// Load `name_or_path`: a built-in config name, or a file on disk.
pub fn load_config(name_or_path: &str) -> Result<TaskConfig> {
    if let Some(text) = builtin_text(name_or_path) {
        return TaskConfig::parse(text);
    }
    let text = std::fs::read_to_string(name_or_path)
        .map_err(|e| Error::config(format!("cannot read config `{name_or_path}`: {e}")))?;
    TaskConfig::parse(&text)
}
