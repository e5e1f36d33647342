//! Nested expression generation from scene graphs.
//!
//! Maximal predicate chains are composed into a hierarchy of expressions:
//! one bare noun phrase per entity at level 1, and one description per
//! chain suffix above it, each extending a lower level.

pub mod chains;
pub mod generator;
pub mod structure;
pub mod template;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::evaluator::iou;
use crate::lexicon;
use crate::parse::{DepGraph, ParseBundle};
use crate::pool;
use crate::scene_graph::{BBox, EntityId, ImageId, Predicate, RegionDescription, SceneGraph};

pub use chains::{find_chains, maximal_chains, LinkDirection, PredicateChain};
pub use generator::{
    GenerationRequest, HttpGenerator, HttpParser, ParseService, TextGenerator,
    DEFAULT_SYSTEM_PROMPT,
};
pub use template::{render_chain, TemplateRendering};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ComposeError {
    #[error("no head noun resolvable to a scene-graph entity in {0:?}")]
    UnresolvableHead(String),
    #[error("generated text {text:?} mentions {word:?}, which is not in the chain")]
    Hallucination { text: String, word: String },
    #[error("generated text could not be parsed: {0}")]
    Parse(String),
    #[error("generator rejected the request: {0}")]
    Generator(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Expression {
    pub text: String,
    pub level: u32,
    pub head_entity_id: EntityId,
    pub bbox: BBox,
    /// Indices into the owning instance's `expressions`.
    pub parents: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceSource {
    Template,
    Generator,
    RegionDescription,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NestedInstance {
    pub image_id: ImageId,
    pub width: u32,
    pub height: u32,
    pub max_level: u32,
    pub source: InstanceSource,
    pub chain: Vec<Predicate>,
    /// Sorted by level; targets (level `max_level`) last.
    pub expressions: Vec<Expression>,
}

impl NestedInstance {
    pub fn at_level(&self, level: u32) -> impl Iterator<Item = &Expression> {
        self.expressions.iter().filter(move |e| e.level == level)
    }

    pub fn targets(&self) -> impl Iterator<Item = &Expression> {
        self.at_level(self.max_level)
    }

    /// Invariant violations, empty for a well-formed instance.
    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        let levels: BTreeSet<u32> = self.expressions.iter().map(|e| e.level).collect();
        if levels != (1..=self.max_level).collect() {
            out.push(format!("levels {levels:?} are not 1..={}", self.max_level));
        }
        for (i, e) in self.expressions.iter().enumerate() {
            if (e.level == 1) != e.parents.is_empty() {
                out.push(format!(
                    "expression {i}: level {} with {} parents",
                    e.level,
                    e.parents.len()
                ));
            }
            for &p in &e.parents {
                match self.expressions.get(p) {
                    None => out.push(format!("expression {i}: parent {p} missing")),
                    Some(pe) if pe.level >= e.level => {
                        out.push(format!("expression {i}: parent {p} is not lower"))
                    }
                    _ => {}
                }
            }
        }
        out
    }
}

/// Text generation options for composition. The default composes with the
/// deterministic template only.
#[derive(Clone, Copy, Default)]
pub struct Composer<'a> {
    pub generator: Option<&'a dyn TextGenerator>,
    pub parser: Option<&'a dyn ParseService>,
    pub system_prompt: Option<&'a str>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Template,
    Generator,
    /// Generator unreachable; template used instead.
    TemplateFallback,
}

#[derive(Debug, Clone)]
pub struct Composition {
    pub text: String,
    pub level: u32,
    pub head_entity_id: EntityId,
    pub bbox: BBox,
    pub origin: Origin,
    /// Template parse, or the parser's output for generated text.
    pub parse: Option<ParseBundle>,
}

/// Syntactic head noun of a parsed expression.
pub fn identify_head(dep: &DepGraph) -> Result<usize, ComposeError> {
    structure::head_noun(dep).ok_or_else(|| ComposeError::UnresolvableHead(dep.text()))
}

fn head_word(name: &str) -> String {
    let bare = lexicon::bare_name(name);
    lexicon::lemma_key(bare.rsplit(' ').next().unwrap_or(&bare))
}

/// The first of `candidates` whose name ends in the noun at token `i`.
fn match_entity(
    graph: &SceneGraph,
    candidates: impl IntoIterator<Item = EntityId>,
    dep: &DepGraph,
    i: usize,
) -> Option<EntityId> {
    let key = lexicon::lemma_key(&dep.token(i).form);
    candidates
        .into_iter()
        .find(|&id| graph.entity(id).is_some_and(|e| head_word(&e.name) == key))
}

/// Relational depth of a parsed expression.
pub fn assign_level(dep: &DepGraph, graph: &SceneGraph) -> Result<u32, ComposeError> {
    let head = identify_head(dep)?;
    match_entity(graph, graph.entities().iter().map(|e| e.id), dep, head)
        .ok_or_else(|| ComposeError::UnresolvableHead(dep.text()))?;
    Ok(structure::relational_depth(dep, head, None))
}

/// Lemma keys of every word the chain may be described with.
pub fn chain_vocabulary(graph: &SceneGraph, chain: &PredicateChain) -> BTreeSet<String> {
    let mut vocab = BTreeSet::new();
    for &id in chain.walk() {
        vocab.extend(lexicon::content_keys(
            &graph.entity(id).expect("chain in graph").name,
        ));
    }
    for p in &chain.predicates {
        vocab.extend(lexicon::content_keys(&p.relation));
    }
    vocab
}

/// The first content word of `text` outside the chain vocabulary.
pub fn closure_violation(text: &str, vocab: &BTreeSet<String>) -> Option<String> {
    lexicon::words(text)
        .into_iter()
        .filter(|w| !lexicon::is_function_word(w))
        .find(|w| !vocab.contains(&lexicon::lemma_key(w)))
}

/// Chain entity mentioned first in `text`.
fn earliest_mention(graph: &SceneGraph, chain: &PredicateChain, text: &str) -> Option<EntityId> {
    let ws: Vec<String> = lexicon::words(text)
        .iter()
        .map(|w| lexicon::lemma_key(w))
        .collect();
    chain
        .walk()
        .iter()
        .filter_map(|&id| {
            let name: Vec<String> = lexicon::words(&lexicon::bare_name(&graph.entity(id)?.name))
                .iter()
                .map(|w| lexicon::lemma_key(w))
                .collect();
            ws.windows(name.len())
                .position(|win| win == name.as_slice())
                .map(|pos| (pos, id))
        })
        .min_by_key(|&(pos, _)| pos)
        .map(|(_, id)| id)
}

fn clean_generated(text: &str) -> String {
    let t = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .unwrap_or("")
        .trim();
    let t = t.trim_matches(|c: char| c == '"' || c == '\'');
    let t = t.trim_end_matches(['.', '!']);
    t.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn template_composition(graph: &SceneGraph, chain: &PredicateChain, origin: Origin) -> Composition {
    let rendering = render_chain(graph, chain);
    let head = chain.head();
    Composition {
        text: rendering.text(),
        level: chain.len() as u32 + 1,
        head_entity_id: head,
        bbox: graph.entity(head).expect("chain in graph").bbox,
        origin,
        parse: Some(rendering.bundle()),
    }
}

/// Composes the description of `chain`'s head entity.
///
/// Chains of two or more predicates go to the configured generator; its
/// output must stay within the chain vocabulary. Single predicates, and any
/// chain when the generator is absent or unreachable, use the template.
pub fn compose_expression(
    chain: &PredicateChain,
    graph: &SceneGraph,
    composer: &Composer,
) -> Result<Composition, ComposeError> {
    let Some(generator) = composer.generator.filter(|_| chain.len() >= 2) else {
        return Ok(template_composition(graph, chain, Origin::Template));
    };
    let request = GenerationRequest::for_chain(
        graph,
        chain,
        composer.system_prompt.unwrap_or(DEFAULT_SYSTEM_PROMPT),
    );
    let raw = match generator.generate(&request) {
        Ok(t) => t,
        Err(e) if e.is_transient() => {
            log::warn!("generator unavailable ({e}), using template");
            return Ok(template_composition(graph, chain, Origin::TemplateFallback));
        }
        Err(e) => return Err(ComposeError::Generator(e.to_string())),
    };
    let text = clean_generated(&raw);
    if let Some(word) = closure_violation(&text, &chain_vocabulary(graph, chain)) {
        return Err(ComposeError::Hallucination { text, word });
    }
    let (head, parse) = match composer.parser {
        Some(parser) => {
            let bundle = parser
                .parse(&text)
                .map_err(|e| ComposeError::Parse(e.to_string()))?;
            let i = identify_head(&bundle.dep)?;
            let head = match_entity(graph, chain.walk().iter().copied(), &bundle.dep, i);
            (head, Some(bundle))
        }
        None => (earliest_mention(graph, chain, &text), None),
    };
    let head = head.ok_or_else(|| ComposeError::UnresolvableHead(text.clone()))?;
    Ok(Composition {
        level: chain.len() as u32 + 1,
        head_entity_id: head,
        bbox: graph.entity(head).expect("chain in graph").bbox,
        origin: Origin::Generator,
        parse,
        text,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildConfig {
    pub max_depth: usize,
    pub per_image_cap: Option<usize>,
    pub seed: u64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            max_depth: 3,
            per_image_cap: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BuildReport {
    pub graphs: usize,
    pub unusable_graphs: usize,
    pub chains: usize,
    pub maximal_chains: usize,
    pub instances: usize,
    pub expressions_per_level: BTreeMap<u32, usize>,
    pub instances_per_max_level: BTreeMap<u32, usize>,
    pub hallucination_rejected: usize,
    pub unresolvable_head: usize,
    pub generator_errors: usize,
    pub generator_fallbacks: usize,
    pub duplicate_texts: usize,
    pub capped: usize,
    pub region_instances: usize,
}

impl BuildReport {
    pub fn merge(&mut self, other: &BuildReport) {
        self.graphs += other.graphs;
        self.unusable_graphs += other.unusable_graphs;
        self.chains += other.chains;
        self.maximal_chains += other.maximal_chains;
        self.instances += other.instances;
        for (k, v) in &other.expressions_per_level {
            *self.expressions_per_level.entry(*k).or_default() += v;
        }
        for (k, v) in &other.instances_per_max_level {
            *self.instances_per_max_level.entry(*k).or_default() += v;
        }
        self.hallucination_rejected += other.hallucination_rejected;
        self.unresolvable_head += other.unresolvable_head;
        self.generator_errors += other.generator_errors;
        self.generator_fallbacks += other.generator_fallbacks;
        self.duplicate_texts += other.duplicate_texts;
        self.capped += other.capped;
        self.region_instances += other.region_instances;
    }

    fn count(&mut self, inst: &NestedInstance) {
        self.instances += 1;
        *self
            .instances_per_max_level
            .entry(inst.max_level)
            .or_default() += 1;
        for e in &inst.expressions {
            *self.expressions_per_level.entry(e.level).or_default() += 1;
        }
    }
}

fn expression(
    graph: &SceneGraph,
    text: String,
    level: u32,
    head: EntityId,
    parents: Vec<usize>,
) -> Expression {
    Expression {
        text,
        level,
        head_entity_id: head,
        bbox: graph.entity(head).expect("head in graph").bbox,
        parents,
    }
}

/// One instance from one chain: a level-1 noun phrase per entity (terminal
/// entity first) and a description per chain suffix. The `j`-th walk
/// entity's description extends its own noun phrase and the description of
/// entity `j + 1`.
pub fn compose_instance(
    graph: &SceneGraph,
    chain: &PredicateChain,
    composer: &Composer,
) -> Result<(NestedInstance, Vec<Origin>), ComposeError> {
    let rendering = render_chain(graph, chain);
    let walk = chain.walk();
    let k = chain.len();
    let mut expressions = Vec::new();
    let mut origins = Vec::new();
    let mut base = vec![0; k + 1];
    for pos in (0..=k).rev() {
        let s = rendering
            .spans()
            .iter()
            .find(|s| s.walk_pos == pos && s.is_base)
            .expect("every entity has a base phrase");
        base[pos] = expressions.len();
        expressions.push(expression(
            graph,
            rendering.span_text(s.start, s.end),
            1,
            walk[pos],
            vec![],
        ));
    }
    let mut below = base[k];
    for j in (0..k).rev() {
        let level = (k - j) as u32 + 1;
        let parents = vec![base[j], below];
        let (text, head, origin) = if level >= 3 && composer.generator.is_some() {
            let suffix = PredicateChain::from_walk(graph, walk[j], &chain.predicate_indices[j..])
                .expect("suffix of a valid chain");
            let c = compose_expression(&suffix, graph, composer)?;
            (c.text, c.head_entity_id, c.origin)
        } else {
            let s = rendering
                .spans()
                .iter()
                .find(|s| s.walk_pos == j && !s.is_base)
                .expect("every non-terminal entity is described");
            (
                rendering.span_text(s.start, s.end),
                walk[j],
                Origin::Template,
            )
        };
        below = expressions.len();
        origins.push(origin);
        expressions.push(expression(graph, text, level, head, parents));
    }
    let source = if origins.contains(&Origin::Generator) {
        InstanceSource::Generator
    } else {
        InstanceSource::Template
    };
    Ok((
        NestedInstance {
            image_id: graph.image_id.clone(),
            width: graph.width,
            height: graph.height,
            max_level: k as u32 + 1,
            source,
            chain: chain.predicates.clone(),
            expressions,
        },
        origins,
    ))
}

/// Two-level instances seeded by region phrases that restate one predicate.
///
/// A phrase qualifies when it names the subject, the object and the
/// relation of a predicate, stays within their vocabulary, and its region
/// overlaps the subject box with IoU ≥ 0.5.
pub fn region_instances(graph: &SceneGraph, regions: &[RegionDescription]) -> Vec<NestedInstance> {
    let mut out = Vec::new();
    for r in regions {
        for (i, p) in graph.predicates().iter().enumerate() {
            let Some(chain) = PredicateChain::from_walk(graph, p.subject, &[i]) else {
                continue;
            };
            let vocab = chain_vocabulary(graph, &chain);
            if closure_violation(&r.phrase, &vocab).is_some() {
                continue;
            }
            let keys: BTreeSet<String> = lexicon::content_keys(&r.phrase).into_iter().collect();
            let names_all = [p.subject, p.object]
                .iter()
                .all(|&id| keys.contains(&head_word(&graph.entity(id).unwrap().name)));
            let relation_all = lexicon::content_keys(&p.relation)
                .iter()
                .all(|k| keys.contains(k));
            let subject = graph.entity(p.subject).unwrap();
            let overlap = iou(&r.bbox, &subject.bbox);
            if !(names_all && relation_all) || overlap < num_rational::Ratio::new(1, 2) {
                continue;
            }
            let expressions = vec![
                expression(
                    graph,
                    template::base_phrase(graph, &chain, 1),
                    1,
                    p.object,
                    vec![],
                ),
                expression(
                    graph,
                    template::base_phrase(graph, &chain, 0),
                    1,
                    p.subject,
                    vec![],
                ),
                expression(graph, r.phrase.clone(), 2, p.subject, vec![1, 0]),
            ];
            out.push(NestedInstance {
                image_id: graph.image_id.clone(),
                width: graph.width,
                height: graph.height,
                max_level: 2,
                source: InstanceSource::RegionDescription,
                chain: vec![p.clone()],
                expressions,
            });
            break;
        }
    }
    out
}

/// Golden parse of a template instance's target text, rebuilt from its
/// chain. `None` for generated instances or a chain not in `graph`.
pub fn instance_parse(graph: &SceneGraph, inst: &NestedInstance) -> Option<ParseBundle> {
    if inst.source != InstanceSource::Template {
        return None;
    }
    let head = inst.targets().next()?.head_entity_id;
    let indices = inst
        .chain
        .iter()
        .map(|p| graph.predicates().iter().position(|q| q == p))
        .collect::<Option<Vec<usize>>>()?;
    let chain = PredicateChain::from_walk(graph, head, &indices)?;
    let rendering = render_chain(graph, &chain);
    let bundle = rendering.bundle();
    (bundle.text == inst.targets().next()?.text).then_some(bundle)
}

fn image_seed(seed: u64, image: &ImageId) -> u64 {
    // FNV-1a over the image id, mixed with the run seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in image.0.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ seed
}

/// All instances for one graph, in chain order.
pub fn build_instances(
    graph: &SceneGraph,
    composer: &Composer,
    config: &BuildConfig,
    regions: &[RegionDescription],
) -> (Vec<NestedInstance>, BuildReport) {
    let mut report = BuildReport {
        graphs: 1,
        ..Default::default()
    };
    if !graph.is_composable() {
        report.unusable_graphs = 1;
        return (Vec::new(), report);
    }
    report.chains = find_chains(graph, config.max_depth).len();
    let chains = maximal_chains(graph, config.max_depth);
    report.maximal_chains = chains.len();
    let mut seen = BTreeSet::new();
    let mut instances = Vec::new();
    let mut keep = |inst: NestedInstance, report: &mut BuildReport| {
        let key: Vec<String> = inst.targets().map(|e| e.text.clone()).collect();
        if seen.insert(key) {
            instances.push(inst);
        } else {
            report.duplicate_texts += 1;
        }
    };
    for chain in &chains {
        match compose_instance(graph, chain, composer) {
            Ok((inst, origins)) => {
                report.generator_fallbacks += origins
                    .iter()
                    .filter(|o| **o == Origin::TemplateFallback)
                    .count();
                keep(inst, &mut report);
            }
            Err(ComposeError::Hallucination { text, word }) => {
                log::info!(
                    "{}: rejected {text:?} ({word:?} not in chain)",
                    graph.image_id
                );
                report.hallucination_rejected += 1;
            }
            Err(ComposeError::UnresolvableHead(text)) => {
                log::info!("{}: no head for {text:?}", graph.image_id);
                report.unresolvable_head += 1;
            }
            Err(e) => {
                log::warn!("{}: {e}", graph.image_id);
                report.generator_errors += 1;
            }
        }
    }
    for inst in region_instances(graph, regions) {
        report.region_instances += 1;
        keep(inst, &mut report);
    }
    if let Some(cap) = config.per_image_cap {
        if instances.len() > cap {
            report.capped = instances.len() - cap;
            let mut rng = ChaCha8Rng::seed_from_u64(image_seed(config.seed, &graph.image_id));
            let mut picked = index::sample(&mut rng, instances.len(), cap).into_vec();
            picked.sort_unstable();
            instances = picked.into_iter().map(|i| instances[i].clone()).collect();
        }
    }
    for inst in &instances {
        report.count(inst);
    }
    (instances, report)
}

/// [`build_instances`] over a corpus with up to `concurrency` workers;
/// output follows input order.
pub fn build_corpus(
    graphs: &[SceneGraph],
    composer: &Composer,
    config: &BuildConfig,
    regions: &BTreeMap<ImageId, Vec<RegionDescription>>,
    concurrency: usize,
) -> (Vec<NestedInstance>, BuildReport) {
    let per_graph = pool::ordered_map(graphs, concurrency, |_, g| {
        let r = regions.get(&g.image_id).map_or(&[][..], Vec::as_slice);
        build_instances(g, composer, config, r)
    });
    let mut all = Vec::new();
    let mut report = BuildReport::default();
    for (instances, r) in per_graph {
        all.extend(instances);
        report.merge(&r);
    }
    (all, report)
}
