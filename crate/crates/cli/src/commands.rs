use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use cbsdecode::embedding::{apply_manifest, load_manifest};
use cbsdecode::neural::{LrSchedule, TrainReport};
use cbsdecode::search::DecodeResult;
use cbsdecode::{
    bind_embeddings, constrained_beam_search, decode_best_of, exhaustive_search, load_embeddings,
    macro_f1, tokenize, train, CaptionModel, ConditioningVector, ConstraintSpec, DecodeRecord,
    Error, EvalPair, Fsm, Hypothesis, LemmaMap, MentionSpec, NGramModel, NeuralScorer, Result,
    Scorer, SearchParams, Status, TrainConfig, TrainingExample, UniformScorer, Vocabulary,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::inputs::{read_jsonl, read_lines, DecodeInput, F1Line, LmSentence};
use crate::{
    CompileArgs, ConstraintArgs, DecodeArgs, EvalF1Args, ExpandArgs, Failure, ModelArgs,
    OracleArgs, ScorerKind, TrainLmArgs, TrainNgramArgs,
};

type Outcome = std::result::Result<(), Failure>;

fn require_paths<'a>(paths: impl IntoIterator<Item = Option<&'a PathBuf>>) -> Outcome {
    for p in paths.into_iter().flatten() {
        if !p.exists() {
            return Err(Failure::config(format!("{} does not exist", p.display())));
        }
    }
    Ok(())
}

fn writer(out: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(out: Option<&Path>, value: &T) -> Outcome {
    let mut w = writer(out)?;
    serde_json::to_writer(&mut w, value).map_err(Error::from)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

enum Loaded {
    Ngram(NGramModel),
    Neural(Box<CaptionModel>),
    Uniform(UniformScorer, Vocabulary),
}

impl Loaded {
    fn vocab(&self) -> &Vocabulary {
        match self {
            Loaded::Ngram(m) => m.vocab(),
            Loaded::Neural(m) => m.vocab(),
            Loaded::Uniform(_, v) => v,
        }
    }
}

fn load_model(a: &ModelArgs) -> std::result::Result<Loaded, Failure> {
    require_paths([a.model.as_ref(), a.vocab.as_ref(), a.embeddings.as_ref(), a.manifest.as_ref()])?;
    let need_model = || {
        a.model
            .as_deref()
            .ok_or_else(|| Failure::config("--model is required for this scorer"))
    };
    Ok(match a.scorer {
        ScorerKind::Ngram => Loaded::Ngram(NGramModel::load(need_model()?)?),
        ScorerKind::Neural => {
            let mut model = CaptionModel::load(need_model()?)?;
            if let (Some(manifest), Some(emb)) = (&a.manifest, &a.embeddings) {
                model = expand_from_files(&model, manifest, emb)?;
            }
            Loaded::Neural(Box::new(model))
        }
        ScorerKind::Uniform => {
            let path = a
                .vocab
                .as_deref()
                .ok_or_else(|| Failure::config("--vocab is required for the uniform scorer"))?;
            let vocab = Vocabulary::with_words(read_lines(path)?.iter().flat_map(|l| tokenize(l)));
            Loaded::Uniform(UniformScorer::new(vocab.len(), vocab.eos())?, vocab)
        }
    })
}

fn expand_from_files(model: &CaptionModel, manifest: &Path, emb: &Path) -> Result<CaptionModel> {
    let manifest = load_manifest(manifest)?;
    let needed: HashSet<String> = manifest.iter().map(|e| e.word.clone()).collect();
    let loaded = load_embeddings(emb, Some(&needed))?;
    apply_manifest(model, &manifest, &loaded.table)
}

struct Constraints {
    spec: Option<ConstraintSpec>,
    lemmas: Option<LemmaMap>,
}

impl Constraints {
    fn load(a: &ConstraintArgs) -> std::result::Result<Self, Failure> {
        require_paths([a.constraints.as_ref(), a.lemmas.as_ref()])?;
        Ok(Constraints {
            spec: a.constraints.as_ref().map(ConstraintSpec::load).transpose()?,
            lemmas: a.lemmas.as_ref().map(LemmaMap::load).transpose()?,
        })
    }

    /// Machines for one input; with `per_phrase` one per phrase. No spec at
    /// all gives the machine that accepts everything.
    fn machines(&self, extra: Option<&ConstraintSpec>, v: &Vocabulary, per_phrase: bool) -> Result<Vec<Fsm>> {
        let spec = match (&self.spec, extra) {
            (None, None) => return Ok(vec![Fsm::universal(v.len())]),
            (Some(s), None) | (None, Some(s)) => s.clone(),
            (Some(a), Some(b)) => a.merged(b),
        };
        if per_phrase {
            spec.compile_per_phrase(v, self.lemmas.as_ref())
        } else {
            Ok(vec![spec.compile(v, self.lemmas.as_ref())?])
        }
    }
}

pub fn compile(a: CompileArgs) -> Outcome {
    let model = load_model(&a.model)?;
    let c = Constraints::load(&a.constraints)?;
    if c.spec.is_none() {
        return Err(Failure::config("compile needs --constraints"));
    }
    let fsms = c.machines(None, model.vocab(), a.per_phrase)?;
    let dumps: Vec<_> = fsms.iter().map(Fsm::dump).collect();
    if a.per_phrase {
        write_json(a.out.as_deref(), &dumps)
    } else {
        write_json(a.out.as_deref(), &dumps[0])
    }
}

fn load_inputs(path: Option<&PathBuf>) -> std::result::Result<Vec<DecodeInput>, Failure> {
    require_paths([path])?;
    Ok(match path {
        Some(p) => read_jsonl(p)?,
        None => vec![DecodeInput::default_single()],
    })
}

fn decode_with<S: Scorer>(
    scorer: &S,
    fsms: &[Fsm],
    params: &SearchParams,
    per_phrase: bool,
) -> Result<DecodeResult> {
    if per_phrase {
        Ok(decode_best_of(scorer, fsms, params)?.result)
    } else {
        constrained_beam_search(scorer, &fsms[0], params)
    }
}

fn conditioning(model: &CaptionModel, input: &DecodeInput) -> Result<ConditioningVector> {
    match &input.features {
        Some(f) => Ok(ConditioningVector(f.clone())),
        None if model.cond_dim() == 0 => Ok(ConditioningVector::zeros(0)),
        None => Err(Error::Data(format!("input {} has no features", input.id))),
    }
}

/// Runs `f` over the inputs on `workers` threads, keeping input order. The
/// first failing input (in input order) decides the error.
fn fan_out<T: Send>(
    workers: usize,
    inputs: &[DecodeInput],
    f: impl Fn(&DecodeInput) -> Result<T> + Sync + Send,
) -> std::result::Result<Vec<T>, Failure> {
    if workers == 0 {
        return Err(Failure::config("--workers must be at least 1"));
    }
    let results: Vec<Result<T>> = if workers == 1 {
        inputs.iter().map(&f).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Failure::config(e.to_string()))?;
        pool.install(|| inputs.par_iter().map(&f).collect())
    };
    results
        .into_iter()
        .collect::<Result<Vec<_>>>()
        .map_err(Failure::from)
}

fn write_records(out: Option<&Path>, records: &[DecodeRecord]) -> Outcome {
    let mut w = writer(out)?;
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(Error::from)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn decode(a: DecodeArgs) -> Outcome {
    let params = a.search.params();
    params.validate()?;
    let model = load_model(&a.model)?;
    let c = Constraints::load(&a.constraints)?;
    let inputs = load_inputs(a.inputs.as_ref())?;
    log::info!("decoding {} inputs (seed {})", inputs.len(), a.seed);
    let vocab = model.vocab();
    let run = |input: &DecodeInput| -> Result<DecodeRecord> {
        let fsms = c.machines(input.constraints.as_ref(), vocab, a.per_phrase)?;
        let result = match &model {
            Loaded::Ngram(m) => decode_with(m, &fsms, &params, a.per_phrase)?,
            Loaded::Uniform(s, _) => decode_with(s, &fsms, &params, a.per_phrase)?,
            Loaded::Neural(m) => {
                let scorer = NeuralScorer::new(m, conditioning(m, input)?)?;
                decode_with(&scorer, &fsms, &params, a.per_phrase)?
            }
        };
        Ok(DecodeRecord::new(input.id.clone(), &result, vocab, a.per_state))
    };
    let records = fan_out(a.workers, &inputs, run)?;
    write_records(a.out.as_deref(), &records)
}

fn oracle_result(best: Option<Hypothesis>, fsm: &Fsm) -> DecodeResult {
    DecodeResult {
        satisfied_count: best.as_ref().map(|h| fsm.progress(h.fsm_state)),
        status: if best.is_some() {
            Status::Accepted
        } else {
            Status::Empty
        },
        best,
        per_state_best: Vec::new(),
        steps: 0,
    }
}

pub fn oracle(a: OracleArgs) -> Outcome {
    let params = a.search.params();
    params.validate()?;
    let model = load_model(&a.model)?;
    let c = Constraints::load(&a.constraints)?;
    let inputs = load_inputs(a.inputs.as_ref())?;
    let vocab = model.vocab();
    let run = |input: &DecodeInput| -> Result<DecodeRecord> {
        let fsm = c.machines(input.constraints.as_ref(), vocab, false)?.remove(0);
        let best = match &model {
            Loaded::Ngram(m) => exhaustive_search(m, &fsm, &params, a.limit)?,
            Loaded::Uniform(s, _) => exhaustive_search(s, &fsm, &params, a.limit)?,
            Loaded::Neural(m) => {
                let scorer = NeuralScorer::new(m, conditioning(m, input)?)?;
                exhaustive_search(&scorer, &fsm, &params, a.limit)?
            }
        };
        Ok(DecodeRecord::new(input.id.clone(), &oracle_result(best, &fsm), vocab, false))
    };
    let records = fan_out(1, &inputs, run)?;
    write_records(a.out.as_deref(), &records)
}

pub fn train_ngram(a: TrainNgramArgs) -> Outcome {
    require_paths([Some(&a.corpus)])?;
    let lines = read_lines(&a.corpus)?;
    let model = NGramModel::train_text(&lines, a.order, a.alpha)?;
    model.save(&a.out)?;
    write_json(
        None,
        &serde_json::json!({
            "sentences": lines.len(),
            "vocab_size": model.vocab().len(),
            "order": model.order(),
            "alpha": model.alpha(),
        }),
    )
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    seed: u64,
    sentences: usize,
    vocab_size: usize,
    hidden: usize,
    cond_dim: usize,
    initial_loss: f64,
    final_loss: f64,
    loss_curve: &'a [f64],
}

pub fn train_lm(a: TrainLmArgs) -> Outcome {
    require_paths([Some(&a.corpus), Some(&a.embeddings)])?;
    let sentences: Vec<LmSentence> = read_jsonl(&a.corpus)?;
    if sentences.is_empty() {
        return Err(Error::Empty("training corpus").into());
    }
    let tokenized: Vec<Vec<String>> = sentences.iter().map(|s| tokenize(&s.text)).collect();
    let vocab = Vocabulary::with_words(tokenized.iter().flatten());
    let cond_dim = sentences[0].features.len();
    let mut corpus = Vec::with_capacity(sentences.len());
    for (i, (s, toks)) in sentences.iter().zip(&tokenized).enumerate() {
        if s.features.len() != cond_dim {
            return Err(Error::Data(format!(
                "sentence {} has {} features, expected {cond_dim}",
                i + 1,
                s.features.len()
            ))
            .into());
        }
        let mut ids = vocab.encode(toks)?;
        ids.push(vocab.eos());
        corpus.push(TrainingExample::new(s.features.clone(), ids));
    }
    let needed: HashSet<String> = vocab.tokens().iter().cloned().collect();
    let loaded = load_embeddings(&a.embeddings, Some(&needed))?;
    let embeddings = bind_embeddings(&vocab, &loaded.table, a.seed)?;
    let model = CaptionModel::initialize(vocab, embeddings, a.hidden, cond_dim, a.seed)?;
    let config = TrainConfig {
        epochs: a.epochs,
        lr: LrSchedule::Constant { lr: a.lr },
        batch_size: a.batch_size,
        seed: a.seed,
    };
    let (trained, report): (CaptionModel, TrainReport) = train(&model, &corpus, &config)?;
    trained.save(&a.out)?;
    write_json(
        None,
        &TrainSummary {
            seed: a.seed,
            sentences: corpus.len(),
            vocab_size: trained.vocab().len(),
            hidden: trained.hidden(),
            cond_dim,
            initial_loss: report.initial_loss(),
            final_loss: report.final_loss(),
            loss_curve: &report.loss_curve,
        },
    )
}

pub fn expand(a: ExpandArgs) -> Outcome {
    require_paths([Some(&a.model), Some(&a.manifest), Some(&a.embeddings)])?;
    let model = CaptionModel::load(&a.model)?;
    let expanded = expand_from_files(&model, &a.manifest, &a.embeddings)?;
    expanded.save(&a.out)?;
    let added = &expanded.expansions()[model.expansions().len()..];
    write_json(
        None,
        &serde_json::json!({
            "vocab_size": expanded.vocab().len(),
            "added": added,
        }),
    )
}

pub fn eval_f1(a: EvalF1Args) -> Outcome {
    require_paths([Some(&a.pairs), Some(&a.mentions)])?;
    let lines: Vec<F1Line> = read_jsonl(&a.pairs)?;
    let pairs: Vec<EvalPair> = lines
        .iter()
        .map(|l| EvalPair::from_text(&l.generated, &l.references))
        .collect();
    let specs = MentionSpec::load_all(&a.mentions)?;
    let report = macro_f1(&pairs, &specs)?;
    write_json(a.out.as_deref(), &report)
}
