//! End-to-end commands: training every artifact, describing videos at a
//! level of detail, and evaluating the output against references.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bleu::{bleu_at, tokenize, BleuReport, Granularity, VideoText};
use crate::cohesion::{apply_cohesion, load_genders, CohesionConfig, Gender, Lexicon, SentenceUnit};
use crate::crf::CrfModel;
use crate::data::{parse_dataset, write_dataset, Dataset, FrameSpan, Level, SegmentObservation, SemanticRepresentation, Split, VideoRecord};
use crate::decoder::{decode, DecoderWeights};
use crate::error::{Error, Result};
use crate::inference::{decode_sr_given_topic, decode_sr_unconditioned, select_topic, InferenceOptions};
use crate::lattice::{build_lattice, LatticeOptions, LatticeStats, WordLattice};
use crate::relevance::{build_tfidf, retrieve_nearest_sentence, score_segment, select_top_segments, TfidfTable};
use crate::schema::Schema;
use crate::segmentation::{filter_background, segment_video, train_background, BackgroundClassifier, SegmenterConfig};
use crate::synth::SynthCorpus;
use crate::training::{evaluate_nodes, train_crf_with_report, NodeAccuracy, TrainConfig};
use crate::translation::{align_corpus, estimate_lm, extract_phrases, sr_to_source, source_to_sr, NgramLm, PhraseTable};
use crate::tuning::{tune_weights, TuneConfig, TuneStep};

const MODULE: &str = "cli_pipeline";

/// Where the segments being described come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentSource {
    /// The dataset's own segment intervals.
    #[default]
    Gold,
    /// Agglomerative segmentation of the video's frame stream.
    Auto,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TranslationConfig {
    pub ibm1_iters: usize,
    pub max_phrase_len: usize,
    pub lm_order: usize,
}

impl Default for TranslationConfig {
    fn default() -> Self {
        TranslationConfig {
            ibm1_iters: 5,
            max_phrase_len: 4,
            lm_order: 3,
        }
    }
}

/// Segments kept for the short and single-sentence levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NSelect {
    pub short: usize,
    pub single: usize,
}

impl Default for NSelect {
    fn default() -> Self {
        NSelect { short: 3, single: 1 }
    }
}

impl NSelect {
    /// `None` keeps every segment.
    pub fn get(&self, level: Level) -> Option<usize> {
        match level {
            Level::Detailed => None,
            Level::Short => Some(self.short),
            Level::Single => Some(self.single),
        }
    }
}

/// Everything a command needs. Relative paths are resolved against the
/// directory of the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema: PathBuf,
    pub train: PathBuf,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Artifact directory.
    pub models: PathBuf,
    pub out: PathBuf,
    pub lexicon: Option<PathBuf>,
    pub genders: Option<PathBuf>,
    /// Overrides the tuned weights of the selected level.
    pub weights: Option<PathBuf>,
    pub level: Level,
    pub segments: SegmentSource,
    pub n_select: NSelect,
    pub seed: u64,
    pub segmenter: SegmenterConfig,
    pub inference: InferenceOptions,
    pub lattice: LatticeOptions,
    pub beam: Option<usize>,
    pub training: TrainConfig,
    pub translation: TranslationConfig,
    pub tuning: TuneConfig,
    pub cohesion: CohesionConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            schema: "schema.json".into(),
            train: "train.jsonl".into(),
            dev: None,
            test: None,
            models: "models".into(),
            out: "out".into(),
            lexicon: None,
            genders: None,
            weights: None,
            level: Level::Detailed,
            segments: SegmentSource::Gold,
            n_select: NSelect::default(),
            seed: 0,
            segmenter: SegmenterConfig::default(),
            inference: InferenceOptions::default(),
            lattice: LatticeOptions::default(),
            beam: Some(100),
            training: TrainConfig::default(),
            translation: TranslationConfig::default(),
            tuning: TuneConfig::default(),
            cohesion: CohesionConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve(base);
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// Makes every relative path relative to `base`.
    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.schema);
        fix(&mut self.train);
        fix(&mut self.models);
        fix(&mut self.out);
        for p in [&mut self.dev, &mut self.test, &mut self.lexicon, &mut self.genders, &mut self.weights]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    fn require(&self, paths: &[(&str, Option<&Path>)]) -> Result<()> {
        for (name, p) in paths {
            match p {
                None => return Err(Error::Config(format!("{name} path is not set"))),
                Some(p) if !p.exists() => {
                    return Err(Error::Config(format!("{name} path {} does not exist", p.display())))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    fn split_path(&self, split: Split) -> Option<&Path> {
        match split {
            Split::Train => Some(&self.train),
            Split::Dev => self.dev.as_deref(),
            Split::Test => self.test.as_deref(),
        }
    }

    pub fn load_split(&self, split: Split) -> Result<Dataset> {
        let name = format!("{split:?}").to_lowercase();
        self.require(&[("schema", Some(&self.schema)), (&name, self.split_path(split))])?;
        parse_dataset(self.split_path(split).expect("checked"), &self.schema)
    }

    pub fn lexicon(&self) -> Result<Lexicon> {
        match &self.lexicon {
            Some(p) => {
                self.require(&[("lexicon", Some(p))])?;
                Lexicon::load(p)
            }
            None => Ok(Lexicon::bundled()),
        }
    }

    pub fn genders(&self) -> Result<BTreeMap<String, Gender>> {
        match &self.genders {
            Some(p) => {
                self.require(&[("genders", Some(p))])?;
                load_genders(p)
            }
            None => Ok(BTreeMap::new()),
        }
    }

    /// Training configuration with the pipeline seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            inference: self.inference,
            ..self.training.clone()
        }
    }
}

/// Translation artifacts of one level of detail.
#[derive(Clone, Debug)]
pub struct LevelModel {
    pub phrases: PhraseTable,
    pub lm: NgramLm,
    pub weights: DecoderWeights,
}

#[derive(Clone, Debug)]
pub struct Artifacts {
    pub schema: Schema,
    pub crf: CrfModel,
    pub tfidf: TfidfTable,
    pub background: BackgroundClassifier,
    pub levels: BTreeMap<Level, LevelModel>,
}

pub const CRF_FILE: &str = "crf.json";
pub const TFIDF_FILE: &str = "tfidf.json";
pub const BACKGROUND_FILE: &str = "background.json";

pub fn phrases_file(level: Level) -> String {
    format!("{level}.phrases")
}

pub fn lm_file(level: Level) -> String {
    format!("{level}.arpa")
}

pub fn weights_file(level: Level) -> String {
    format!("{level}.weights.json")
}

impl Artifacts {
    pub fn level(&self, level: Level) -> Result<&LevelModel> {
        self.levels
            .get(&level)
            .ok_or_else(|| Error::artifact(phrases_file(level), format!("no {level} translation model was trained")))
    }

    /// Writes every artifact into `dir` and returns the file names.
    pub fn save(&self, dir: &Path) -> Result<Vec<String>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.crf.save(&dir.join(CRF_FILE))?;
        self.tfidf.save(&dir.join(TFIDF_FILE))?;
        self.background.save(&dir.join(BACKGROUND_FILE))?;
        let mut files = vec![CRF_FILE.to_owned(), TFIDF_FILE.to_owned(), BACKGROUND_FILE.to_owned()];
        for (&level, m) in &self.levels {
            m.phrases.save(&dir.join(phrases_file(level)))?;
            m.lm.save(&dir.join(lm_file(level)))?;
            m.weights.save(&dir.join(weights_file(level)))?;
            files.extend([phrases_file(level), lm_file(level), weights_file(level)]);
        }
        Ok(files)
    }

    /// Loads the artifacts in `dir`; a level is present when its phrase
    /// table is.
    pub fn load(dir: &Path, schema: &Schema) -> Result<Self> {
        let artifact = |name: &str| -> Result<PathBuf> {
            let p = dir.join(name);
            if p.exists() {
                Ok(p)
            } else {
                Err(Error::artifact(p, "missing; run `train` first"))
            }
        };
        let as_artifact = |p: &Path, e: Error| match e {
            Error::Artifact { .. } => e,
            other => Error::artifact(p, other.to_string()),
        };
        let p = artifact(CRF_FILE)?;
        let crf = CrfModel::load(&p)?;
        if crf.schema().nodes() != schema.nodes() || crf.schema().topics() != schema.topics() {
            return Err(Error::artifact(p, "model was trained for a different schema"));
        }
        let tfidf = TfidfTable::load(&artifact(TFIDF_FILE)?, schema)?;
        let p = artifact(BACKGROUND_FILE)?;
        let background = BackgroundClassifier::load(&p).map_err(|e| as_artifact(&p, e))?;
        let mut levels = BTreeMap::new();
        for level in Level::ALL {
            if !dir.join(phrases_file(level)).exists() {
                continue;
            }
            let p = artifact(&phrases_file(level))?;
            let phrases = PhraseTable::load(&p).map_err(|e| as_artifact(&p, e))?;
            let p = artifact(&lm_file(level))?;
            let lm = NgramLm::load(&p).map_err(|e| as_artifact(&p, e))?;
            let p = artifact(&weights_file(level))?;
            let weights = DecoderWeights::load(&p).map_err(|e| as_artifact(&p, e))?;
            levels.insert(level, LevelModel { phrases, lm, weights });
        }
        if levels.is_empty() {
            return Err(Error::artifact(dir.join(phrases_file(Level::Detailed)), "no translation model found"));
        }
        Ok(Artifacts {
            schema: schema.clone(),
            crf,
            tfidf,
            background,
            levels,
        })
    }
}

/// Copy of `d` with only the segments that carry a gold SR.
pub fn labeled_only(d: &Dataset) -> Dataset {
    let mut out = Dataset::new(d.schema.clone(), d.split);
    for v in &d.videos {
        let mut v = v.clone();
        v.segments.retain(|s| s.is_labeled());
        v.frames = None;
        if !v.segments.is_empty() {
            out.videos.push(v);
        }
    }
    out
}

/// (source string of the gold SR, tokenized sentence) for every labeled
/// segment sentence at `level`.
pub fn parallel_corpus(d: &Dataset, level: Level) -> Vec<(Vec<String>, Vec<String>)> {
    let mut pairs = Vec::new();
    for (_, s) in d.segments() {
        let Some(gold) = &s.gold else { continue };
        for sentence in s.sentences.get(level) {
            pairs.push((sr_to_source(gold, &d.schema), tokenize(sentence)));
        }
    }
    pairs
}

/// LM training text: each video's reference description at `level`, or
/// its segment sentences when it has none.
pub fn lm_corpus(d: &Dataset, level: Level) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    for v in &d.videos {
        let own = v.sentences.get(level);
        if own.is_empty() {
            for s in &v.segments {
                out.extend(s.sentences.get(level).iter().map(|t| tokenize(t)));
            }
        } else {
            out.extend(own.iter().map(|t| tokenize(t)));
        }
    }
    out
}

pub fn train_translation(d: &Dataset, level: Level, cfg: &TranslationConfig) -> Result<(PhraseTable, NgramLm)> {
    let pairs = parallel_corpus(d, level);
    if pairs.is_empty() {
        return Err(Error::module(
            "translation_training",
            format!("no labeled segment has a {level} sentence"),
        ));
    }
    let alignments = align_corpus(&pairs, cfg.ibm1_iters)?;
    let phrases = extract_phrases(&pairs, &alignments, cfg.max_phrase_len)?;
    let lm = estimate_lm(&lm_corpus(d, level), cfg.lm_order)?;
    Ok((phrases, lm))
}

/// Options shared by describe, tune and evaluate.
#[derive(Clone, Debug, PartialEq)]
pub struct DescribeOptions {
    pub level: Level,
    pub segments: SegmentSource,
    pub n_select: Option<usize>,
    pub segmenter: SegmenterConfig,
    pub inference: InferenceOptions,
    pub lattice: LatticeOptions,
    pub beam: Option<usize>,
    pub cohesion: CohesionConfig,
}

impl DescribeOptions {
    pub fn from_config(cfg: &PipelineConfig) -> Self {
        DescribeOptions {
            level: cfg.level,
            segments: cfg.segments,
            n_select: cfg.n_select.get(cfg.level),
            segmenter: cfg.segmenter.clone(),
            inference: cfg.inference,
            lattice: cfg.lattice,
            beam: cfg.beam,
            cohesion: cfg.cohesion,
        }
    }
}

/// Segments of a video that survived background filtering, wrapped in a
/// record without gold annotations, plus the chosen topic.
pub struct PreparedVideo {
    pub video: VideoRecord,
    /// All candidate spans before filtering.
    pub spans: Vec<FrameSpan>,
    /// Indices into `spans` of the retained segments.
    pub retained: Vec<usize>,
    /// Level references of each retained segment (gold intervals only).
    pub references: Vec<Vec<String>>,
    pub topic: usize,
    pub warnings: Vec<String>,
}

/// Segments a video, filters background and selects the topic.
pub fn prepare_video(
    crf: &CrfModel,
    background: &BackgroundClassifier,
    video: &VideoRecord,
    opts: &DescribeOptions,
) -> Result<PreparedVideo> {
    let candidates: Vec<SegmentObservation> = match opts.segments {
        SegmentSource::Gold => video.segments.clone(),
        SegmentSource::Auto => {
            let stream = video.frames.as_ref().ok_or_else(|| Error::Data {
                video_id: video.video_id.clone(),
                segment_id: None,
                field: "frames".into(),
                message: "automatic segmentation needs a frame stream".into(),
            })?;
            segment_video(stream, &opts.segmenter)?
                .into_iter()
                .enumerate()
                .map(|(i, span)| stream.observation(format!("{}-a{:02}", video.video_id, i + 1), span))
                .collect()
        }
    };
    if candidates.is_empty() {
        return Err(Error::EmptyVideo(video.video_id.clone()));
    }
    let mut means = Vec::with_capacity(candidates.len());
    for s in &candidates {
        means.push(s.attribute_scores.clone().ok_or_else(|| Error::MissingScores {
            segment_id: s.segment_id.clone(),
            family: "attribute",
        })?);
    }
    let spans: Vec<FrameSpan> = candidates.iter().map(|s| s.frames).collect();
    let mut retained = filter_background(&spans, &means, background, &opts.segmenter);
    let mut warnings = Vec::new();
    if retained.is_empty() {
        let best = (0..means.len())
            .max_by(|&a, &b| background.score(&means[a]).total_cmp(&background.score(&means[b])).then(b.cmp(&a)))
            .expect("nonempty");
        warnings.push(format!(
            "every segment was classified as background; keeping {}",
            candidates[best].segment_id
        ));
        retained.push(best);
    }
    let mut work = VideoRecord::new(video.video_id.clone(), video.topic_scores.clone());
    let mut references = Vec::new();
    for &i in &retained {
        let mut s = candidates[i].clone();
        references.push(s.sentences.get(opts.level).to_vec());
        s.gold = None;
        s.sentences = Default::default();
        work.segments.push(s);
    }
    let topic = select_topic(crf, &work, &opts.inference)?;
    Ok(PreparedVideo {
        video: work,
        spans,
        retained,
        references,
        topic,
        warnings,
    })
}

/// One retained segment of a described video.
#[derive(Clone, Debug, PartialEq)]
pub struct DescribedSegment {
    pub segment_id: String,
    pub span: FrameSpan,
    pub sr: SemanticRepresentation,
    pub marginals: Vec<Vec<f64>>,
    pub converged: bool,
    pub relevance: f64,
    pub selected: bool,
    pub lattice: Option<LatticeStats>,
    /// Lattice words of the decoded path.
    pub source: Vec<String>,
    pub sentence: Option<String>,
    pub score: Option<f64>,
    pub references: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VideoDescription {
    pub video_id: String,
    pub level: Level,
    pub topic: usize,
    pub spans: Vec<FrameSpan>,
    pub retained: Vec<usize>,
    pub segments: Vec<DescribedSegment>,
    /// Decoder output of the selected segments, before cohesion.
    pub sentences: Vec<String>,
    pub paragraph: String,
    pub warnings: Vec<String>,
}

impl VideoDescription {
    /// JSON lines recording the chain from spans to text.
    pub fn trace(&self, schema: &Schema) -> Vec<String> {
        let id = &self.video_id;
        let mut lines = vec![
            json!({
                "video": id,
                "event": "spans",
                "level": self.level,
                "spans": self.spans.iter().map(|s| [s.start, s.end]).collect::<Vec<_>>(),
                "retained": self.retained,
            }),
            json!({"video": id, "event": "topic", "topic": schema.topics()[self.topic], "index": self.topic}),
        ];
        for s in &self.segments {
            let sr: BTreeMap<&str, &str> = schema
                .nodes()
                .iter()
                .map(|n| n.name.as_str())
                .zip(s.sr.labels(schema))
                .collect();
            lines.push(json!({
                "video": id,
                "event": "segment",
                "segment": s.segment_id,
                "span": [s.span.start, s.span.end],
                "sr": sr,
                "converged": s.converged,
                "relevance": s.relevance,
                "selected": s.selected,
                "lattice": s.lattice,
                "source": s.source,
                "output": s.sentence,
                "score": s.score,
            }));
        }
        for w in &self.warnings {
            lines.push(json!({"video": id, "event": "warning", "message": w}));
        }
        lines.push(json!({"video": id, "event": "description", "text": self.paragraph}));
        lines.into_iter().map(|l| l.to_string()).collect()
    }
}

fn labels_of(schema: &Schema, sr: &SemanticRepresentation, node: &str) -> String {
    match schema.node_by_name(node) {
        Some(n) => schema.states(n)[sr.states[n]].clone(),
        None => String::new(),
    }
}

/// Describes videos with the CRF artifacts and one translation model.
pub struct Describer<'a> {
    pub artifacts: &'a Artifacts,
    pub model: &'a LevelModel,
    pub opts: DescribeOptions,
    pub lexicon: &'a Lexicon,
    pub genders: &'a BTreeMap<String, Gender>,
}

impl Describer<'_> {
    pub fn describe(&self, video: &VideoRecord) -> Result<VideoDescription> {
        let arts = self.artifacts;
        let schema = &arts.schema;
        let opts = &self.opts;
        let prep = prepare_video(&arts.crf, &arts.background, video, opts)?;
        let mut warnings = prep.warnings;
        let mut segments = Vec::with_capacity(prep.video.segments.len());
        for (seg, refs) in prep.video.segments.iter().zip(&prep.references) {
            let d = decode_sr_given_topic(&arts.crf, seg, &prep.video, prep.topic, &opts.inference)?;
            let relevance = score_segment(&d.sr, prep.topic, &arts.tfidf)?;
            segments.push(DescribedSegment {
                segment_id: seg.segment_id.clone(),
                span: seg.frames,
                sr: d.sr,
                marginals: d.marginals,
                converged: d.converged,
                relevance,
                selected: false,
                lattice: None,
                source: Vec::new(),
                sentence: None,
                score: None,
                references: refs.clone(),
            });
        }
        let selected: Vec<usize> = match opts.n_select {
            None => (0..segments.len()).collect(),
            Some(n) => {
                let scores: Vec<f64> = segments.iter().map(|s| s.relevance).collect();
                select_top_segments(&scores, n)
            }
        };
        let mut sentences = Vec::new();
        let mut units = Vec::new();
        for i in selected {
            let s = &mut segments[i];
            s.selected = true;
            let lattice = build_lattice(&s.marginals, schema, &opts.lattice)?;
            s.lattice = Some(lattice.stats());
            let out = decode(&lattice, &self.model.phrases, &self.model.lm, &self.model.weights, opts.beam)?;
            let sr = source_to_sr(&out.source, schema).unwrap_or_else(|| s.sr.clone());
            s.source = out.source;
            s.score = Some(out.score);
            if out.sentence.is_empty() {
                warnings.push(format!("{}: empty translation", s.segment_id));
                continue;
            }
            let text = out.sentence.join(" ");
            s.sentence = Some(text.clone());
            units.push(SentenceUnit::new(
                text.clone(),
                labels_of(schema, &sr, "activity"),
                labels_of(schema, &sr, "object"),
            ));
            sentences.push(text);
        }
        let paragraph = if units.is_empty() {
            warnings.push("no sentence was generated".into());
            String::new()
        } else {
            let cfg = CohesionConfig {
                gender: self.genders.get(&video.video_id).copied().unwrap_or(opts.cohesion.gender),
                ..opts.cohesion
            };
            apply_cohesion(&units, &cfg, self.lexicon)?
        };
        Ok(VideoDescription {
            video_id: video.video_id.clone(),
            level: opts.level,
            topic: prep.topic,
            spans: prep.spans,
            retained: prep.retained,
            segments,
            sentences,
            paragraph,
            warnings,
        })
    }

    /// Describes every video, ordered by video id.
    pub fn describe_all(&self, d: &Dataset) -> Result<Vec<VideoDescription>> {
        let mut videos: Vec<&VideoRecord> = d.videos.iter().collect();
        videos.sort_by(|a, b| a.video_id.cmp(&b.video_id));
        videos.par_iter().map(|v| self.describe(v)).collect()
    }
}

/// Lattices of the labeled segments that have `level` references, decoded
/// under the topic selected for their video, paired with those references.
pub fn tuning_set(
    crf: &CrfModel,
    background: &BackgroundClassifier,
    d: &Dataset,
    opts: &DescribeOptions,
) -> Result<Vec<(WordLattice, Vec<Vec<String>>)>> {
    let gold = DescribeOptions {
        segments: SegmentSource::Gold,
        ..opts.clone()
    };
    let per_video: Vec<Vec<(WordLattice, Vec<Vec<String>>)>> = d
        .videos
        .par_iter()
        .map(|v| {
            let prep = prepare_video(crf, background, v, &gold)?;
            let mut out = Vec::new();
            for (seg, refs) in prep.video.segments.iter().zip(&prep.references) {
                if refs.is_empty() {
                    continue;
                }
                let dec = decode_sr_given_topic(crf, seg, &prep.video, prep.topic, &opts.inference)?;
                let lattice = build_lattice(&dec.marginals, crf.schema(), &opts.lattice)?;
                out.push((lattice, refs.iter().map(|r| tokenize(r)).collect()));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per_video.into_iter().flatten().collect())
}

/// A finished training run.
pub struct Trained {
    pub artifacts: Artifacts,
    /// JSON lines describing each training stage.
    pub log: Vec<String>,
}

/// Trains every artifact. Weights are tuned on `dev`, or on the training
/// split when no dev split is given.
pub fn train_all(cfg: &PipelineConfig, train: &Dataset, dev: Option<&Dataset>, levels: &[Level]) -> Result<Trained> {
    let mut log = Vec::new();
    let labeled = labeled_only(train);
    let (crf, report) = train_crf_with_report(&labeled, &cfg.train_config())?;
    log.push(
        json!({
            "event": "crf",
            "segments": labeled.segments().count(),
            "epochs": report.objectives.len() - 1,
            "objective_start": report.objectives[0],
            "objective_final": report.objectives[report.objectives.len() - 1],
            "seed": cfg.seed,
        })
        .to_string(),
    );
    let tfidf = build_tfidf(train)?;
    log.push(json!({"event": "tfidf", "topics": train.schema.num_topics()}).to_string());
    let background = train_background(train)?;
    log.push(json!({"event": "background", "segments": train.segments().count(), "bias": background.bias}).to_string());

    let tune_on = dev.unwrap_or(train);
    let mut models = BTreeMap::new();
    for &level in levels {
        let (phrases, lm) = train_translation(train, level, &cfg.translation)?;
        log.push(json!({"event": "phrases", "level": level, "entries": phrases.len()}).to_string());
        log.push(json!({"event": "lm", "level": level, "order": lm.order()}).to_string());
        let opts = DescribeOptions {
            level,
            ..DescribeOptions::from_config(cfg)
        };
        let set = tuning_set(&crf, &background, tune_on, &opts)?;
        let tune = TuneConfig {
            beam: cfg.beam,
            ..cfg.tuning
        };
        let (weights, trace) = if set.is_empty() {
            (DecoderWeights::default(), Vec::new())
        } else {
            tune_weights(&set, &phrases, &lm, DecoderWeights::default(), &tune)?
        };
        log.extend(trace_lines(level, &trace));
        log.push(json!({"event": "weights", "level": level, "weights": weights, "dev_items": set.len()}).to_string());
        models.insert(level, LevelModel { phrases, lm, weights });
    }
    Ok(Trained {
        artifacts: Artifacts {
            schema: train.schema.clone(),
            crf,
            tfidf,
            background,
            levels: models,
        },
        log,
    })
}

pub fn trace_lines(level: Level, trace: &[TuneStep]) -> Vec<String> {
    trace
        .iter()
        .map(|s| {
            json!({"event": "tune", "level": level, "round": s.round, "axis": s.axis, "value": s.value, "bleu": s.bleu})
                .to_string()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelBleu {
    /// Only on gold intervals, where each sentence has its own references.
    pub sentence: Option<BleuReport>,
    pub description: BleuReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TopicConsistency {
    /// Mean over videos of the fraction of decoded non-EMPTY states that
    /// occur with the video's dish in training.
    pub conditioned: f64,
    pub unconditioned: f64,
    pub videos: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub split: Split,
    pub level: Level,
    pub segments: SegmentSource,
    pub videos: usize,
    pub sentences: usize,
    pub warnings: usize,
    pub bleu: LevelBleu,
    pub node_accuracy: Option<NodeAccuracy>,
    pub topic_consistency: Option<TopicConsistency>,
    /// Nearest-training-video baseline, single level only.
    pub retrieval: Option<LevelBleu>,
}

fn tokenized(sentences: &[String]) -> Vec<Vec<String>> {
    sentences.iter().map(|s| tokenize(s)).collect()
}

/// Reference description of a video: its own, else its segment sentences.
fn description_refs(v: &VideoRecord, level: Level) -> Vec<String> {
    let own = v.sentences.get(level);
    if !own.is_empty() {
        return own.to_vec();
    }
    v.segments.iter().flat_map(|s| s.sentences.get(level).iter().cloned()).collect()
}

/// BLEU of generated sentences at both granularities. Sentence granularity
/// scores each sentence against its segment's references, or against the
/// whole reference description when the segment has none.
pub fn score_descriptions(
    descriptions: &[VideoDescription],
    d: &Dataset,
    level: Level,
    with_sentences: bool,
) -> Result<LevelBleu> {
    let by_id: BTreeMap<&str, &VideoRecord> = d.videos.iter().map(|v| (v.video_id.as_str(), v)).collect();
    let mut texts = Vec::new();
    for desc in descriptions {
        let v = by_id
            .get(desc.video_id.as_str())
            .ok_or_else(|| Error::module("evaluation", format!("unknown video {}", desc.video_id)))?;
        let refs = description_refs(v, level);
        if refs.is_empty() {
            return Err(Error::module("evaluation", format!("video {} has no {level} references", v.video_id)));
        }
        let whole = tokenized(&refs);
        let mut text = VideoText {
            descriptions: vec![whole.clone()],
            ..Default::default()
        };
        for s in desc.segments.iter().filter(|s| s.sentence.is_some()) {
            text.candidate.push(tokenize(s.sentence.as_deref().expect("filtered")));
            text.sentence_refs.push(if s.references.is_empty() {
                whole.clone()
            } else {
                tokenized(&s.references)
            });
        }
        texts.push(text);
    }
    let sentence = if with_sentences {
        let items: Vec<VideoText> = texts.iter().filter(|t| !t.candidate.is_empty()).cloned().collect();
        if items.is_empty() {
            None
        } else {
            Some(bleu_at(Granularity::Sentence, &items)?)
        }
    } else {
        None
    };
    Ok(LevelBleu {
        sentence,
        description: bleu_at(Granularity::Description, &texts)?,
    })
}

/// Topic-consistency of conditioned vs free-topic decoding on the labeled
/// segments of videos with a known dish.
pub fn topic_consistency(
    crf: &CrfModel,
    tfidf: &TfidfTable,
    d: &Dataset,
    opts: &InferenceOptions,
) -> Result<Option<TopicConsistency>> {
    let consistent = |sr: &SemanticRepresentation, dish: usize| -> (usize, usize) {
        let schema = crf.schema();
        let mut hit = 0;
        let mut total = 0;
        for (n, &s) in sr.states.iter().enumerate() {
            if s == schema.empty_state(n) {
                continue;
            }
            total += 1;
            hit += usize::from(tfidf.seen_in(n, s, dish));
        }
        (hit, total)
    };
    let per_video: Vec<Option<(f64, f64)>> = d
        .videos
        .par_iter()
        .map(|v| {
            let Some(dish) = v.dish else { return Ok(None) };
            let mut work = v.clone();
            work.segments.retain(|s| s.is_labeled());
            if work.segments.is_empty() {
                return Ok(None);
            }
            let topic = select_topic(crf, &work, opts)?;
            let (mut c, mut u) = ((0, 0), (0, 0));
            for s in &work.segments {
                let a = consistent(&decode_sr_given_topic(crf, s, &work, topic, opts)?.sr, dish);
                let b = consistent(&decode_sr_unconditioned(crf, s, &work, opts)?.sr, dish);
                c = (c.0 + a.0, c.1 + a.1);
                u = (u.0 + b.0, u.1 + b.1);
            }
            let frac = |(h, t): (usize, usize)| if t == 0 { 1.0 } else { h as f64 / t as f64 };
            Ok(Some((frac(c), frac(u))))
        })
        .collect::<Result<_>>()?;
    let scored: Vec<(f64, f64)> = per_video.into_iter().flatten().collect();
    if scored.is_empty() {
        return Ok(None);
    }
    let n = scored.len() as f64;
    Ok(Some(TopicConsistency {
        conditioned: scored.iter().map(|x| x.0).sum::<f64>() / n,
        unconditioned: scored.iter().map(|x| x.1).sum::<f64>() / n,
        videos: scored.len(),
    }))
}

/// BLEU of the nearest-training-video single sentence.
pub fn retrieval_bleu(descriptions: &[VideoDescription], d: &Dataset, train: &Dataset) -> Result<LevelBleu> {
    let by_id: BTreeMap<&str, &VideoRecord> = d.videos.iter().map(|v| (v.video_id.as_str(), v)).collect();
    let mut texts = Vec::new();
    for desc in descriptions {
        let v = by_id[desc.video_id.as_str()];
        let refs = tokenized(&description_refs(v, Level::Single));
        let cand = tokenize(&retrieve_nearest_sentence(v, desc.topic, train)?);
        texts.push(VideoText {
            candidate: vec![cand],
            sentence_refs: vec![refs.clone()],
            descriptions: vec![refs],
        });
    }
    Ok(LevelBleu {
        sentence: Some(bleu_at(Granularity::Sentence, &texts)?),
        description: bleu_at(Granularity::Description, &texts)?,
    })
}

pub fn evaluate(
    artifacts: &Artifacts,
    descriptions: &[VideoDescription],
    d: &Dataset,
    train: &Dataset,
    opts: &DescribeOptions,
) -> Result<Metrics> {
    let bleu = score_descriptions(descriptions, d, opts.level, opts.segments == SegmentSource::Gold)?;
    let has_gold = d.segments().any(|(_, s)| s.is_labeled());
    let node_accuracy = if has_gold {
        Some(evaluate_nodes(&artifacts.crf, d, &opts.inference)?)
    } else {
        None
    };
    let topic_consistency = topic_consistency(&artifacts.crf, &artifacts.tfidf, d, &opts.inference)?;
    let retrieval = if opts.level == Level::Single {
        Some(retrieval_bleu(descriptions, d, train)?)
    } else {
        None
    };
    Ok(Metrics {
        split: d.split,
        level: opts.level,
        segments: opts.segments,
        videos: descriptions.len(),
        sentences: descriptions.iter().map(|x| x.sentences.len()).sum(),
        warnings: descriptions.iter().map(|x| x.warnings.len()).sum(),
        bleu,
        node_accuracy,
        topic_consistency,
        retrieval,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
    write_text(path, &text)
}

/// `train`: writes all artifacts plus `train.log` into the models directory.
pub fn cmd_train(cfg: &PipelineConfig) -> Result<Vec<String>> {
    let train = cfg.load_split(Split::Train)?;
    let dev = match &cfg.dev {
        Some(_) => Some(cfg.load_split(Split::Dev)?),
        None => None,
    };
    let levels: Vec<Level> = Level::ALL
        .into_iter()
        .filter(|&l| train.segments().any(|(_, s)| !s.sentences.get(l).is_empty()))
        .collect();
    if levels.is_empty() {
        return Err(Error::module("translation_training", "training split has no sentences at any level"));
    }
    let trained = train_all(cfg, &train, dev.as_ref(), &levels)?;
    let mut files = trained.artifacts.save(&cfg.models)?;
    write_lines(&cfg.models.join("train.log"), &trained.log)?;
    files.push("train.log".into());
    Ok(files)
}

pub fn load_artifacts(cfg: &PipelineConfig) -> Result<Artifacts> {
    let schema = Schema::load(&cfg.schema)?;
    if !cfg.models.is_dir() {
        return Err(Error::artifact(&cfg.models, "model directory missing; run `train` first"));
    }
    let mut arts = Artifacts::load(&cfg.models, &schema)?;
    if let Some(p) = &cfg.weights {
        cfg.require(&[("weights", Some(p))])?;
        let w = DecoderWeights::load(p)?;
        if let Some(m) = arts.levels.get_mut(&cfg.level) {
            m.weights = w;
        }
    }
    Ok(arts)
}

fn select_videos(mut d: Dataset, video: Option<&str>) -> Result<Dataset> {
    if let Some(id) = video {
        d.videos.retain(|v| v.video_id == id);
        if d.videos.is_empty() {
            return Err(Error::InvalidArgument(format!("no video {id:?} in the {:?} split", d.split)));
        }
    }
    Ok(d)
}

/// Output of `describe` and `evaluate`.
pub struct Described {
    pub descriptions: Vec<VideoDescription>,
    pub dataset: Dataset,
    pub artifacts: Artifacts,
}

pub fn describe_split(cfg: &PipelineConfig, split: Split, video: Option<&str>) -> Result<Described> {
    let artifacts = load_artifacts(cfg)?;
    let dataset = select_videos(cfg.load_split(split)?, video)?;
    let lexicon = cfg.lexicon()?;
    let genders = cfg.genders()?;
    let describer = Describer {
        artifacts: &artifacts,
        model: artifacts.level(cfg.level)?,
        opts: DescribeOptions::from_config(cfg),
        lexicon: &lexicon,
        genders: &genders,
    };
    let descriptions = describer.describe_all(&dataset)?;
    Ok(Described {
        descriptions,
        dataset,
        artifacts,
    })
}

fn write_descriptions(cfg: &PipelineConfig, out: &Described) -> Result<()> {
    let level = cfg.level;
    let text: Vec<String> = out
        .descriptions
        .iter()
        .map(|d| format!("{}\t{}", d.video_id, d.paragraph))
        .collect();
    write_lines(&cfg.out.join(format!("descriptions.{level}.txt")), &text)?;
    let trace: Vec<String> = out
        .descriptions
        .iter()
        .flat_map(|d| d.trace(&out.artifacts.schema))
        .collect();
    write_lines(&cfg.out.join(format!("trace.{level}.jsonl")), &trace)
}

/// `describe`: writes `descriptions.<level>.txt` and `trace.<level>.jsonl`.
pub fn cmd_describe(cfg: &PipelineConfig, split: Split, video: Option<&str>) -> Result<Vec<VideoDescription>> {
    let out = describe_split(cfg, split, video)?;
    write_descriptions(cfg, &out)?;
    Ok(out.descriptions)
}

/// `evaluate`: describes the split, then writes `metrics.<level>.json`.
pub fn cmd_evaluate(cfg: &PipelineConfig, split: Split) -> Result<Metrics> {
    let out = describe_split(cfg, split, None)?;
    write_descriptions(cfg, &out)?;
    let train = cfg.load_split(Split::Train)?;
    let metrics = evaluate(&out.artifacts, &out.descriptions, &out.dataset, &train, &DescribeOptions::from_config(cfg))?;
    let text = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
    write_text(&cfg.out.join(format!("metrics.{}.json", cfg.level)), &(text + "\n"))?;
    Ok(metrics)
}

/// `segment`: writes `segments.jsonl` with every candidate span, its
/// background score and whether it was kept.
pub fn cmd_segment(cfg: &PipelineConfig, split: Split, video: Option<&str>) -> Result<Vec<String>> {
    let p = cfg.models.join(BACKGROUND_FILE);
    if !p.exists() {
        return Err(Error::artifact(p, "missing; run `train` first"));
    }
    let background = BackgroundClassifier::load(&p)?;
    let dataset = select_videos(cfg.load_split(split)?, video)?;
    let opts = DescribeOptions::from_config(cfg);
    let mut videos: Vec<&VideoRecord> = dataset.videos.iter().collect();
    videos.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    let lines: Vec<String> = videos
        .par_iter()
        .map(|v| {
            let stream = v.frames.as_ref().ok_or_else(|| Error::Data {
                video_id: v.video_id.clone(),
                segment_id: None,
                field: "frames".into(),
                message: "segmentation needs a frame stream".into(),
            })?;
            let spans = segment_video(stream, &opts.segmenter)?;
            let scores: Vec<f64> = spans
                .iter()
                .map(|&s| {
                    let obs = stream.observation("", s);
                    background.score(obs.attribute_scores.as_deref().unwrap_or(&[]))
                })
                .collect();
            let gold: Vec<[u64; 2]> = v.segments.iter().map(|s| [s.frames.start, s.frames.end]).collect();
            Ok(json!({
                "video": v.video_id,
                "spans": spans.iter().map(|s| [s.start, s.end]).collect::<Vec<_>>(),
                "background_score": scores,
                "kept": scores.iter().map(|&x| x >= opts.segmenter.background_threshold).collect::<Vec<_>>(),
                "gold": gold,
            })
            .to_string())
        })
        .collect::<Result<_>>()?;
    write_lines(&cfg.out.join("segments.jsonl"), &lines)?;
    Ok(lines)
}

/// `tune`: re-tunes the selected level's weights on the dev split and
/// overwrites its weight file.
pub fn cmd_tune(cfg: &PipelineConfig) -> Result<(DecoderWeights, Vec<TuneStep>)> {
    let arts = load_artifacts(cfg)?;
    let dev = match &cfg.dev {
        Some(_) => cfg.load_split(Split::Dev)?,
        None => cfg.load_split(Split::Train)?,
    };
    let model = arts.level(cfg.level)?;
    let opts = DescribeOptions::from_config(cfg);
    let set = tuning_set(&arts.crf, &arts.background, &dev, &opts)?;
    if set.is_empty() {
        return Err(Error::module(MODULE, format!("dev split has no {} references", cfg.level)));
    }
    let tune = TuneConfig {
        beam: cfg.beam,
        ..cfg.tuning
    };
    let (w, trace) = tune_weights(&set, &model.phrases, &model.lm, model.weights, &tune)?;
    w.save(&cfg.models.join(weights_file(cfg.level)))?;
    write_lines(&cfg.out.join(format!("tune.{}.jsonl", cfg.level)), &trace_lines(cfg.level, &trace))?;
    Ok((w, trace))
}

/// `inspect-lattice`: writes the lattice of every retained segment as PLF
/// with its statistics and decoded output.
pub fn cmd_inspect_lattice(cfg: &PipelineConfig, split: Split, video: Option<&str>) -> Result<Vec<String>> {
    let arts = load_artifacts(cfg)?;
    let model = arts.level(cfg.level)?;
    let dataset = select_videos(cfg.load_split(split)?, video)?;
    let opts = DescribeOptions::from_config(cfg);
    let mut videos: Vec<&VideoRecord> = dataset.videos.iter().collect();
    videos.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    let per_video: Vec<Vec<String>> = videos
        .par_iter()
        .map(|v| {
            let prep = prepare_video(&arts.crf, &arts.background, v, &opts)?;
            let mut lines = Vec::new();
            for seg in &prep.video.segments {
                let d = decode_sr_given_topic(&arts.crf, seg, &prep.video, prep.topic, &opts.inference)?;
                let lattice = build_lattice(&d.marginals, &arts.schema, &opts.lattice)?;
                let best = decode(&lattice, &model.phrases, &model.lm, &model.weights, opts.beam)?;
                lines.push(
                    json!({
                        "video": v.video_id,
                        "segment": seg.segment_id,
                        "stats": lattice.stats(),
                        "plf": lattice.to_plf(),
                        "output": best.sentence.join(" "),
                        "score": best.score,
                        "features": best.features,
                    })
                    .to_string(),
                );
            }
            Ok(lines)
        })
        .collect::<Result<_>>()?;
    let lines: Vec<String> = per_video.into_iter().flatten().collect();
    write_lines(&cfg.out.join(format!("lattices.{}.jsonl", cfg.level)), &lines)?;
    Ok(lines)
}

/// Writes a synthetic corpus and a config pointing at it into `dir`.
pub fn write_synthetic(corpus: &SynthCorpus, dir: &Path) -> Result<PipelineConfig> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    corpus.schema.save(&dir.join("schema.json"))?;
    write_dataset(&corpus.train, &dir.join("train.jsonl"))?;
    write_dataset(&corpus.dev, &dir.join("dev.jsonl"))?;
    write_dataset(&corpus.test, &dir.join("test.jsonl"))?;
    let genders = serde_json::to_string_pretty(&corpus.genders).expect("genders serialize");
    write_text(&dir.join("genders.json"), &(genders + "\n"))?;
    let cfg = PipelineConfig {
        dev: Some("dev.jsonl".into()),
        test: Some("test.jsonl".into()),
        genders: Some("genders.json".into()),
        inference: InferenceOptions {
            exact_limit: 0,
            ..InferenceOptions::default()
        },
        ..PipelineConfig::default()
    };
    cfg.save(&dir.join("config.json"))?;
    let mut resolved = cfg;
    resolved.resolve(dir);
    Ok(resolved)
}
