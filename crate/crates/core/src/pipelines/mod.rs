//! Task assemblies: language identification, POS tagging, segmentation and
//! preordering.

pub mod langid;
pub mod preorderer;
pub mod segmenter;
pub mod tagger;

use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Task, TaskConfig};
use crate::error::{Error, Result};
use crate::features::{Context, FeatureVector, Lexicon, Resources, TemplateSet, VocabSource};
use crate::model_file::SavedModel;
use crate::network::NetworkModel;
use crate::training::{train, TrainingLog};
use crate::transition::{Action, PreAction, SegAction};

pub use langid::{classify, langid_preprocess};
pub use preorderer::preorder;
pub use segmenter::segment;
pub use tagger::tag_sentence;

/// Borrowed pieces needed for inference.
#[derive(Clone, Copy)]
pub struct ModelView<'a> {
    pub templates: &'a TemplateSet,
    pub resources: &'a Resources,
    pub network: &'a NetworkModel,
}

impl<'a> ModelView<'a> {
    pub fn features(&self, ctx: &Context<'_>) -> Result<FeatureVector> {
        self.templates.apply(ctx, self.resources)
    }
}

impl SavedModel {
    pub fn view(&self) -> ModelView<'_> {
        ModelView { templates: &self.config.templates, resources: &self.resources, network: &self.network }
    }

    /// Check that the model was trained for `task`.
    pub fn expect_task(&self, task: Task) -> Result<()> {
        if self.config.task != task {
            return Err(Error::config(format!("model is a {} model, not {task}", self.config.task)));
        }
        Ok(())
    }
}

/// Copy lexicon sizes into the template set's lexicon groups.
pub fn sync_lexicon_sizes(templates: &mut TemplateSet, lexicons: &BTreeMap<String, Lexicon>) -> Result<()> {
    for g in templates.groups_mut() {
        if g.source == VocabSource::Lexicon {
            let lex = lexicons
                .get(&g.name)
                .ok_or_else(|| Error::Format(format!("model lacks the lexicon for group `{}`", g.name)))?;
            g.vocab_size = lex.vocab_size();
        }
    }
    Ok(())
}

/// Build lexicons for every non-tag lexicon group from `contexts`.
pub(crate) fn build_lexicons<'c>(
    templates: &TemplateSet,
    cutoff: usize,
    contexts: impl Iterator<Item = Context<'c>>,
) -> Result<BTreeMap<String, Lexicon>> {
    let mut counts: HashMap<String, BTreeMap<String, usize>> = HashMap::new();
    for ctx in contexts {
        templates.count_lexicon_forms(&ctx, &mut counts)?;
    }
    let mut out = BTreeMap::new();
    for g in templates.groups() {
        if g.source == VocabSource::Lexicon {
            let lex = counts.get(&g.name).map_or_else(Lexicon::default, |c| Lexicon::from_counts(c, cutoff));
            out.insert(g.name.clone(), lex);
        }
    }
    Ok(out)
}

pub fn action_labels<A: Action>() -> Vec<String> {
    A::ALL.iter().map(|a| a.name().to_string()).collect()
}

/// Result of training one pipeline model.
pub struct Trained {
    pub model: SavedModel,
    pub log: TrainingLog,
    pub best_metric: f64,
}

/// Shared training driver: initialize, run SGD with the dev closure, and
/// package the best checkpoint (quantized when the config asks for it).
pub(crate) fn fit<F>(
    config: &TaskConfig,
    mut templates: TemplateSet,
    resources: Resources,
    labels: Vec<String>,
    data: &[(FeatureVector, usize)],
    seed: u64,
    mut dev_metric: F,
) -> Result<Trained>
where
    F: FnMut(ModelView<'_>) -> Result<f64>,
{
    sync_lexicon_sizes(&mut templates, &resources.lexicons)?;
    let mut network = NetworkModel::new(templates.layout(), config.hidden_dim, labels)?;
    network.init_random(&mut ChaCha8Rng::seed_from_u64(seed));
    let outcome = train(network, data, &config.training, seed.wrapping_add(1), |net| {
        dev_metric(ModelView { templates: &templates, resources: &resources, network: net })
    })?;
    let network = if config.quantize { outcome.model.quantized()? } else { outcome.model };
    let mut config = config.clone();
    config.templates = templates;
    Ok(Trained { model: SavedModel { config, network, resources }, log: outcome.log, best_metric: outcome.best_metric })
}

/// Untrained model with the config's exact shape, used for size and FLOPs
/// reports without data. Lexicon groups get empty lexicons.
pub fn skeleton(config: &TaskConfig) -> Result<SavedModel> {
    let labels = match config.task {
        Task::Segment => action_labels::<SegAction>(),
        Task::Preorder => action_labels::<PreAction>(),
        Task::LangId | Task::Pos => {
            let k = config
                .num_classes
                .ok_or_else(|| Error::config("config needs `num_classes=` to build an untrained model"))?;
            (0..k).map(|i| format!("class{i:02}")).collect()
        }
    };
    let lexicons: BTreeMap<String, Lexicon> = config
        .templates
        .groups()
        .iter()
        .filter(|g| g.source == VocabSource::Lexicon)
        .map(|g| (g.name.clone(), Lexicon::default()))
        .collect();
    let mut templates = config.templates.clone();
    sync_lexicon_sizes(&mut templates, &lexicons)?;
    let mut network = NetworkModel::new(templates.layout(), config.hidden_dim, labels)?;
    if config.quantize {
        network = network.quantized()?;
    }
    let mut config = config.clone();
    config.templates = templates;
    Ok(SavedModel { config, network, resources: Resources { lexicons, clusters: None } })
}
