//! Standard and constrained beam search.
//!
//! The constrained decoder keeps one beam per state of a constraint machine.
//! Every extension `(y, w)` of a hypothesis sitting in state `s` is routed to
//! the beam of `δ(s, w)`, and each beam keeps its best `b` candidates, so
//! only hypotheses recognized by the machine ever reach an accepting beam.

mod oracle;
mod record;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsm::{compile_phrase, Fsm, PhraseConstraint, StateId};
use crate::scorer::{LogDist, Scorer};
use crate::vocab::TokenId;

pub use oracle::{exhaustive_search, DEFAULT_ORACLE_LIMIT};
pub use record::{DecodeRecord, StateBest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchParams {
    pub beam_size: usize,
    /// Maximum number of generated tokens, end-of-sequence included.
    pub max_len: usize,
    /// Forbid emitting the same token twice in a row.
    pub no_repeat: bool,
    /// Rank completed hypotheses by mean per-token log probability. Disables
    /// early termination, since normalized scores are not monotone.
    pub length_normalize: bool,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            beam_size: 5,
            max_len: 20,
            no_repeat: true,
            length_normalize: false,
        }
    }
}

impl SearchParams {
    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 {
            return Err(Error::Config("beam size must be at least 1".into()));
        }
        if self.max_len == 0 {
            return Err(Error::Config("max_len must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub tokens: Vec<TokenId>,
    pub logprob: f64,
    pub fsm_state: StateId,
    /// The last token is end-of-sequence; completed hypotheses are never
    /// extended.
    pub completed: bool,
}

impl Hypothesis {
    /// Total order used everywhere a winner is picked: higher log
    /// probability first, then shorter, then lexicographically smaller ids.
    /// `Less` means `self` ranks ahead of `other`.
    pub fn rank(&self, other: &Hypothesis) -> Ordering {
        rank(self.logprob, &self.tokens, other.logprob, &other.tokens)
    }

    fn normalized(&self) -> f64 {
        self.logprob / self.tokens.len().max(1) as f64
    }
}

pub(crate) fn rank(a_lp: f64, a: &[TokenId], b_lp: f64, b: &[TokenId]) -> Ordering {
    b_lp.total_cmp(&a_lp)
        .then(a.len().cmp(&b.len()))
        .then_with(|| a.cmp(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    /// `best` completed in an accepting state.
    Accepted,
    /// Nothing accepted completed; `best` comes from the most-satisfied beam.
    Fallback,
    /// No hypothesis completed anywhere.
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub best: Option<Hypothesis>,
    /// Best completed hypothesis of every beam, indexed by machine state.
    pub per_state_best: Vec<Option<Hypothesis>>,
    /// Constraint progress of the state `best` finished in.
    pub satisfied_count: Option<u32>,
    pub status: Status,
    /// Decoding steps actually run.
    pub steps: usize,
}

impl DecodeResult {
    pub fn num_beams(&self) -> usize {
        self.per_state_best.len()
    }

    pub fn logprob(&self) -> Option<f64> {
        self.best.as_ref().map(|h| h.logprob)
    }
}

struct Live<S> {
    hyp: Hypothesis,
    state: S,
    dist: LogDist,
}

#[derive(Clone, Copy)]
struct Candidate {
    score: f64,
    parent: u32,
    token: TokenId,
}

/// Bounded best-`cap` collection of candidates for one destination beam.
struct Bucket {
    items: Vec<Candidate>,
    worst: usize,
}

impl Bucket {
    fn new() -> Self {
        Bucket {
            items: Vec::new(),
            worst: 0,
        }
    }

    fn offer<S>(&mut self, c: Candidate, cap: usize, live: &[Live<S>]) {
        if self.items.len() < cap {
            self.items.push(c);
            if self.items.len() == cap {
                self.find_worst(live);
            }
            return;
        }
        let w = self.items[self.worst];
        if c.score < w.score || (c.score == w.score && cmp_candidates(&c, &w, live) != Ordering::Less)
        {
            return;
        }
        self.items[self.worst] = c;
        self.find_worst(live);
    }

    fn find_worst<S>(&mut self, live: &[Live<S>]) {
        let mut worst = 0;
        for i in 1..self.items.len() {
            if cmp_candidates(&self.items[i], &self.items[worst], live) == Ordering::Greater {
                worst = i;
            }
        }
        self.worst = worst;
    }
}

/// All candidates in one step have the same length, so the token order
/// reduces to the parent prefix followed by the new token.
fn cmp_candidates<S>(a: &Candidate, b: &Candidate, live: &[Live<S>]) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| {
            live[a.parent as usize]
                .hyp
                .tokens
                .cmp(&live[b.parent as usize].hyp.tokens)
        })
        .then(a.token.cmp(&b.token))
}

/// Multi-beam decoding under a constraint machine.
///
/// Starts with the empty hypothesis in the start state's beam. At each step
/// every live hypothesis is extended by every token (minus the immediate
/// repeat when `no_repeat` is set), each extension lands in the beam of its
/// destination state, and each beam keeps its top `beam_size`. Extensions
/// ending in end-of-sequence are completed and move to the beam's finished
/// pool. Decoding stops once the best completed hypothesis in an accepting
/// beam outscores every live hypothesis in every beam, when nothing is left
/// to extend, or after `max_len` steps.
///
/// Zero-probability extensions are never considered.
pub fn constrained_beam_search<S: Scorer>(
    scorer: &S,
    fsm: &Fsm,
    params: &SearchParams,
) -> Result<DecodeResult> {
    params.validate()?;
    let vocab_size = scorer.vocab_size();
    if vocab_size == 0 {
        return Err(Error::Empty("vocabulary"));
    }
    if fsm.vocab_size() != vocab_size {
        return Err(Error::dimension(
            "constraint machine vocabulary",
            vocab_size,
            fsm.vocab_size(),
        ));
    }
    let eos = scorer.eos();
    let num_states = fsm.num_states();
    let cap = params.beam_size;

    let (state, dist) = scorer.start()?;
    check_len(&dist, vocab_size)?;
    let mut live = vec![Live {
        hyp: Hypothesis {
            tokens: Vec::new(),
            logprob: 0.0,
            fsm_state: fsm.start(),
            completed: false,
        },
        state,
        dist,
    }];
    let mut finished: Vec<Vec<Hypothesis>> = vec![Vec::new(); num_states];
    let mut best_accepted: Option<Hypothesis> = None;
    let mut buckets: Vec<Bucket> = (0..num_states).map(|_| Bucket::new()).collect();
    let mut top = Vec::new();
    let mut steps = 0;

    while steps < params.max_len && !live.is_empty() {
        steps += 1;
        for (pi, parent) in live.iter().enumerate() {
            let last = parent.hyp.tokens.last().copied().filter(|_| params.no_repeat);
            let row = fsm.row(parent.hyp.fsm_state);
            let mut consider = |token: TokenId, lp: f64, dest: StateId| {
                let c = Candidate {
                    score: parent.hyp.logprob + lp,
                    parent: pi as u32,
                    token,
                };
                buckets[dest as usize].offer(c, cap, &live);
            };
            for &(t, dest) in &row.arcs {
                let lp = parent.dist[t as usize];
                if Some(t) != last && lp != f64::NEG_INFINITY {
                    consider(t, lp, dest);
                }
            }
            // Every other token lands in the default beam, which can keep at
            // most `cap` of them from this parent.
            let excluded = row.arcs.len() + usize::from(last.is_some());
            top_k(&parent.dist, cap + excluded, &mut top)?;
            let mut taken = 0;
            for &(lp, t) in &top {
                if taken == cap {
                    break;
                }
                if Some(t) == last || row.arcs.binary_search_by_key(&t, |&(a, _)| a).is_ok() {
                    continue;
                }
                consider(t, lp, row.default);
                taken += 1;
            }
        }

        let mut next_live = Vec::new();
        for (s, bucket) in buckets.iter_mut().enumerate() {
            if bucket.items.is_empty() {
                continue;
            }
            let mut items = std::mem::take(&mut bucket.items);
            items.sort_by(|a, b| cmp_candidates(a, b, &live));
            for c in items {
                let parent = &live[c.parent as usize];
                let mut tokens = Vec::with_capacity(parent.hyp.tokens.len() + 1);
                tokens.extend_from_slice(&parent.hyp.tokens);
                tokens.push(c.token);
                let completed = c.token == eos;
                let hyp = Hypothesis {
                    tokens,
                    logprob: c.score,
                    fsm_state: s as StateId,
                    completed,
                };
                if completed {
                    if fsm.is_accepting(hyp.fsm_state)
                        && best_accepted
                            .as_ref()
                            .is_none_or(|b| hyp.rank(b) == Ordering::Less)
                    {
                        best_accepted = Some(hyp.clone());
                    }
                    finished[s].push(hyp);
                } else {
                    let (state, dist) = scorer.step(&parent.state, c.token)?;
                    check_len(&dist, vocab_size)?;
                    next_live.push(Live { hyp, state, dist });
                }
            }
            bucket.worst = 0;
        }
        live = next_live;

        if !params.length_normalize {
            if let Some(best) = &best_accepted {
                let top_live = live
                    .iter()
                    .map(|l| l.hyp.logprob)
                    .fold(f64::NEG_INFINITY, f64::max);
                if best.logprob > top_live {
                    break;
                }
            }
        }
    }

    Ok(assemble(fsm, finished, params, steps))
}

/// The `k` best finite entries of `dist` as `(logprob, token)`, ordered by
/// logprob descending then token ascending.
fn top_k(dist: &[f64], k: usize, out: &mut Vec<(f64, TokenId)>) -> Result<()> {
    out.clear();
    if k == 0 {
        return Ok(());
    }
    let mut floor = f64::NEG_INFINITY;
    for (t, &lp) in dist.iter().enumerate() {
        // Equal scores keep the earlier (smaller) token.
        if lp <= floor && (out.len() == k || lp == f64::NEG_INFINITY) {
            continue;
        }
        if lp.is_nan() {
            return Err(Error::NonFinite(format!("scorer log probability of token {t}")));
        }
        let at = out.partition_point(|&(x, _)| x >= lp);
        if out.len() == k {
            out.pop();
        }
        out.insert(at, (lp, t as TokenId));
        if out.len() == k {
            floor = out[k - 1].0;
        }
    }
    Ok(())
}

fn check_len(dist: &[f64], vocab_size: usize) -> Result<()> {
    if dist.len() != vocab_size {
        return Err(Error::dimension("scorer distribution", vocab_size, dist.len()));
    }
    Ok(())
}

fn pick_best(pool: &[Hypothesis], normalize: bool) -> Option<&Hypothesis> {
    pool.iter().min_by(|a, b| {
        if normalize {
            rank(a.normalized(), &a.tokens, b.normalized(), &b.tokens)
        } else {
            a.rank(b)
        }
    })
}

fn assemble(
    fsm: &Fsm,
    finished: Vec<Vec<Hypothesis>>,
    params: &SearchParams,
    steps: usize,
) -> DecodeResult {
    let normalize = params.length_normalize;
    let per_state_best: Vec<Option<Hypothesis>> = finished
        .iter()
        .map(|pool| pick_best(pool, normalize).cloned())
        .collect();

    let accepted = pick_best(
        &per_state_best
            .iter()
            .enumerate()
            .filter(|(s, _)| fsm.is_accepting(*s as StateId))
            .filter_map(|(_, h)| h.clone())
            .collect::<Vec<_>>(),
        normalize,
    )
    .cloned();

    let (best, status) = match accepted {
        Some(h) => (Some(h), Status::Accepted),
        None => {
            let fallback = per_state_best
                .iter()
                .flatten()
                .min_by(|a, b| {
                    fsm.progress(b.fsm_state)
                        .cmp(&fsm.progress(a.fsm_state))
                        .then_with(|| a.rank(b))
                })
                .cloned();
            match fallback {
                Some(h) => (Some(h), Status::Fallback),
                None => (None, Status::Empty),
            }
        }
    };
    let satisfied_count = best.as_ref().map(|h| fsm.progress(h.fsm_state));
    DecodeResult {
        best,
        per_state_best,
        satisfied_count,
        status,
        steps,
    }
}

/// Unconstrained beam search: the constrained decoder over the one-state
/// machine that accepts everything.
pub fn beam_search<S: Scorer>(scorer: &S, params: &SearchParams) -> Result<Option<Hypothesis>> {
    let fsm = Fsm::universal(scorer.vocab_size());
    Ok(constrained_beam_search(scorer, &fsm, params)?.best)
}

/// Outcome of running one decode per constraint machine.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiDecode {
    /// Index of the run `result` came from.
    pub selected: Option<usize>,
    pub result: DecodeResult,
    pub runs: Vec<DecodeResult>,
}

/// Decodes once per machine and keeps the accepted run with the highest log
/// probability (earlier machines win ties). If no run accepts, the fallback
/// with the most constraint progress wins, then the highest log probability.
pub fn decode_best_of<S: Scorer>(
    scorer: &S,
    fsms: &[Fsm],
    params: &SearchParams,
) -> Result<MultiDecode> {
    if fsms.is_empty() {
        return Err(Error::Empty("constraint machines"));
    }
    let runs = fsms
        .iter()
        .map(|f| constrained_beam_search(scorer, f, params))
        .collect::<Result<Vec<_>>>()?;

    let better = |a: &DecodeResult, b: &DecodeResult| -> bool {
        let (ha, hb) = (a.best.as_ref().unwrap(), b.best.as_ref().unwrap());
        match a.status {
            Status::Accepted => ha.logprob > hb.logprob,
            _ => {
                let (sa, sb) = (a.satisfied_count, b.satisfied_count);
                sa > sb || (sa == sb && ha.logprob > hb.logprob)
            }
        }
    };
    let mut selected = None;
    for status in [Status::Accepted, Status::Fallback] {
        for (i, run) in runs.iter().enumerate() {
            if run.status == status && selected.is_none_or(|j: usize| better(run, &runs[j])) {
                selected = Some(i);
            }
        }
        if selected.is_some() {
            break;
        }
    }
    let result = runs[selected.unwrap_or(0)].clone();
    Ok(MultiDecode {
        selected,
        result,
        runs,
    })
}

/// Runs a separate constrained decode for each phrase and keeps the
/// highest-scoring accepted caption.
pub fn decode_multi_phrase<S: Scorer>(
    scorer: &S,
    phrases: &[PhraseConstraint],
    params: &SearchParams,
) -> Result<MultiDecode> {
    if phrases.is_empty() {
        return Err(Error::Empty("phrase list"));
    }
    let fsms = phrases
        .iter()
        .map(|p| compile_phrase(p, scorer.vocab_size()))
        .collect::<Result<Vec<_>>>()?;
    decode_best_of(scorer, &fsms, params)
}
