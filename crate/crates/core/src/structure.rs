//! Bottom-up model expansion (add state / add path / add factor), selection
//! by free-energy and mutual-information comparison with an optional style
//! hyperprior, stream ingestion, and top-down Bayesian model reduction.

use crate::error::{Error, Result};
use crate::inference::{
    free_energy_with, infer_epoch_with, BeliefState, InferMode, LogCtx, PriorOverride,
};
use crate::learner::{
    gated_update, mutual_information, propose_likelihood_updates, update_transitions,
    UpdateProposal,
};
use crate::model::{DirichletTensor, Epoch, Factor, GenerativeModel};
use crate::special::{digamma, log_beta};
use crate::tensor::{Tensor, COUNT_FLOOR};

/// The four structures compared for each epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateKind {
    Parent,
    AddState,
    AddPath,
    AddFactor,
}

impl std::fmt::Display for CandidateKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CandidateKind::Parent => write!(f, "parent"),
            CandidateKind::AddState => write!(f, "add_state"),
            CandidateKind::AddPath => write!(f, "add_path"),
            CandidateKind::AddFactor => write!(f, "add_factor"),
        }
    }
}

/// An expansion of a parent model together with its comparison scores.
#[derive(Debug, Clone)]
pub struct CandidateModel {
    pub kind: CandidateKind,
    /// The candidate structure before any parameter update.
    pub model: GenerativeModel,
    /// F(candidate) - F(parent), parameters optimised on the epoch.
    pub df: f64,
    /// MI(candidate) - MI(parent) after the hypothetical update.
    pub dg: f64,
    /// Hyperprior log-odds penalty (positive late in training).
    pub dh: f64,
    pub accepted: bool,
    /// Scored free energy of this candidate on the epoch.
    pub free_energy: f64,
    /// Total mutual information after the hypothetical update.
    pub mutual_information: f64,
    /// Beliefs from the scoring inversion, reused when committing.
    pub beliefs: Option<BeliefState>,
    /// Likelihood update proposals from the scoring pass.
    pub proposals: Vec<UpdateProposal>,
}

/// Naive discovery prior over latent styles: with `max_styles` assumed and
/// `discovered` seen so far, the prior odds that the current exemplar is a
/// previously seen style are discovered : (max - discovered).
#[derive(Debug, Clone, Copy)]
pub struct StyleHyperprior {
    pub max_styles: usize,
    pub discovered: usize,
}

impl StyleHyperprior {
    pub fn new(max_styles: usize, discovered: usize) -> Result<Self> {
        if discovered < 1 || discovered > max_styles {
            return Err(Error::Argument(format!(
                "hyperprior wants 1 <= discovered <= max, got {discovered}/{max_styles}"
            )));
        }
        Ok(StyleHyperprior { max_styles, discovered })
    }

    /// ln p - ln (1 - p) with p = discovered / max: the log-odds penalty
    /// added against accepting a new state.
    pub fn delta_h(&self) -> f64 {
        let p = self.discovered as f64 / self.max_styles as f64;
        if p >= 1.0 {
            return f64::INFINITY;
        }
        p.ln() - (1.0 - p).ln()
    }
}

/// Configuration for scoring and ingestion.
#[derive(Debug, Clone)]
pub struct IngestConfig {
    /// Gate precision for committed updates.
    pub alpha: f64,
    /// Style hyperprior applied to add-state comparisons.
    pub hyperprior: Option<StyleHyperprior>,
    /// Factor clamped to a per-epoch label during ingestion.
    pub clamp_factor: Option<usize>,
    /// Include the Dirichlet parameter complexity in comparison scores.
    pub include_param_complexity: bool,
    /// Keep outcome preferences in the update gate (off for pure
    /// classification learning).
    pub use_preferences_in_gate: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            alpha: 1e6,
            hyperprior: None,
            clamp_factor: None,
            include_param_complexity: false,
            use_preferences_in_gate: false,
        }
    }
}

/// One row of the discovery trace.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub epoch: usize,
    pub action: CandidateKind,
    pub n_states: Vec<usize>,
    pub n_paths: Vec<usize>,
    pub n_factors: usize,
    pub free_energy: f64,
    pub mutual_information: f64,
    pub df: f64,
    pub dg: f64,
    pub dh: f64,
}

/// The epoch that created a path, kept so environment adapters can decode
/// what the path does.
#[derive(Debug, Clone)]
pub struct PathExemplar {
    pub factor: usize,
    pub path: usize,
    pub epoch_index: usize,
    pub epoch: Epoch,
}

/// Result of folding a stream of epochs into a model.
#[derive(Debug, Clone)]
pub struct IngestResult {
    pub model: GenerativeModel,
    pub trace: Vec<TraceRow>,
    pub path_exemplars: Vec<PathExemplar>,
}

/// Clone `m` with one more state on the last factor; new likelihood and
/// transition cells start at the model's concentration.
pub fn add_state(m: &GenerativeModel) -> Result<GenerativeModel> {
    let mut out = m.clone();
    let f = out.factors.len() - 1;
    let factor = &mut out.factors[f];
    let n = factor.n_states;
    let c = m.concentration;

    let mut t = factor.transition.counts.extend_axis(0, 1, c)?;
    t = t.extend_axis(1, 1, c)?;
    // keep the stationary slice an exact identity
    for i in 0..=n {
        for j in 0..=n {
            t.set(&[i, j, 0], if i == j { 1.0 } else { 0.0 });
        }
    }
    // preserve accumulated diagonal counts of old states
    for j in 0..n {
        t.set(&[j, j, 0], factor.transition.counts.get(&[j, j, 0]));
    }
    factor.transition = DirichletTensor::new(t, factor.transition.axis_labels.clone());
    factor.initial = DirichletTensor::new(
        factor.initial.counts.extend_axis(0, 1, 1.0)?,
        factor.initial.axis_labels.clone(),
    );
    factor.n_states = n + 1;
    let factor_id = factor.id.clone();

    for g in &mut out.modalities {
        if let Some(axis) = g.parents.iter().position(|p| *p == factor_id) {
            g.likelihood = DirichletTensor::new(
                g.likelihood.counts.extend_axis(axis + 1, 1, c)?,
                g.likelihood.axis_labels.clone(),
            );
        }
    }
    Ok(out)
}

/// Clone `m` with one more path on the last factor: a fresh transition slice
/// at the concentration, flat path prior extended.
pub fn add_path(m: &GenerativeModel) -> Result<GenerativeModel> {
    let mut out = m.clone();
    let f = out.factors.len() - 1;
    let factor = &mut out.factors[f];
    factor.transition = DirichletTensor::new(
        factor.transition.counts.extend_axis(2, 1, m.concentration)?,
        factor.transition.axis_labels.clone(),
    );
    factor.path_prior = DirichletTensor::new(
        factor.path_prior.counts.extend_axis(0, 1, 1.0)?,
        factor.path_prior.axis_labels.clone(),
    );
    factor.n_paths += 1;
    Ok(out)
}

/// Clone `m` with a new two-state, one-path factor appended; every
/// likelihood gains a trailing axis with existing content at state 0 and
/// fresh columns at state 1.
pub fn add_factor(m: &GenerativeModel) -> Result<GenerativeModel> {
    let mut out = m.clone();
    let id = format!("factor-{}", out.factors.len());
    out.factors.push(Factor::new(&id, 2, 1, m.concentration));
    for g in &mut out.modalities {
        let mut labels = g.likelihood.axis_labels.clone();
        labels.push(id.clone());
        g.likelihood = DirichletTensor::new(
            g.likelihood.counts.append_axis(2, m.concentration)?,
            labels,
        );
        g.parents.push(id.clone());
    }
    Ok(out)
}

/// Candidate structures for the next epoch, per the expansion recipe:
/// the parent always; an extra state while the last factor still has a
/// single (stationary) path; an extra path once it has two or more states;
/// a new factor once dynamics have been discovered.
pub fn expand_candidates(m: &GenerativeModel) -> Result<Vec<CandidateModel>> {
    let last = m.factors.last().ok_or_else(|| Error::Argument("model with no factors".into()))?;
    let mut out = vec![unscored(CandidateKind::Parent, m.clone())];
    if last.n_paths == 1 {
        out.push(unscored(CandidateKind::AddState, add_state(m)?));
    }
    if last.n_states >= 2 {
        out.push(unscored(CandidateKind::AddPath, add_path(m)?));
    }
    if last.n_paths >= 2 {
        out.push(unscored(CandidateKind::AddFactor, add_factor(m)?));
    }
    Ok(out)
}

fn unscored(kind: CandidateKind, model: GenerativeModel) -> CandidateModel {
    CandidateModel {
        kind,
        model,
        df: 0.0,
        dg: 0.0,
        dh: 0.0,
        accepted: false,
        free_energy: 0.0,
        mutual_information: 0.0,
        beliefs: None,
        proposals: Vec::new(),
    }
}

/// Total mutual information of the model's learned tensors: the factorised
/// likelihoods plus every flexible transition slice. The stationary slice
/// is fixed by construction and carries no learned information.
pub fn model_mutual_information(m: &GenerativeModel) -> Result<f64> {
    let mut total = 0.0;
    for g in &m.modalities {
        total += mutual_information(&g.likelihood.counts)?;
    }
    for f in &m.factors {
        for u in 1..f.n_paths {
            total += mutual_information(&f.transition.counts.slice_last(u)?)?;
        }
    }
    Ok(total)
}

/// Columnwise KL divergence KL[Dir(new) || Dir(old)] summed over columns.
fn dirichlet_kl_columns(new: &Tensor, old: &Tensor) -> Result<f64> {
    let levels = new.n_levels();
    let cols = new.n_columns();
    let mut total = 0.0;
    for j in 0..cols {
        let new_col: Vec<f64> =
            (0..levels).map(|i| new.data()[i * cols + j].max(COUNT_FLOOR)).collect();
        let old_col: Vec<f64> =
            (0..levels).map(|i| old.data()[i * cols + j].max(COUNT_FLOOR)).collect();
        if new_col
            .iter()
            .zip(&old_col)
            .all(|(a, b)| (a - b).abs() < 1e-15)
        {
            continue;
        }
        let sum_new: f64 = new_col.iter().sum();
        let psi_sum = digamma(sum_new)?;
        let mut kl = log_beta(&old_col)? - log_beta(&new_col)?;
        for (n, o) in new_col.iter().zip(&old_col) {
            kl += (n - o) * (digamma(*n)? - psi_sum);
        }
        total += kl;
    }
    Ok(total)
}

struct ScoredInversion {
    beliefs: BeliefState,
    proposals: Vec<UpdateProposal>,
    free_energy: f64,
    mutual_information: f64,
}

/// Invert a candidate on the epoch, apply the hypothetical (ungated)
/// update, and evaluate free energy under the optimised parameters.
fn score_inversion(
    model: &GenerativeModel,
    epoch: &Epoch,
    clamp: &PriorOverride,
    include_param_complexity: bool,
) -> Result<ScoredInversion> {
    let beliefs = infer_epoch_with(model, epoch, InferMode::Smooth, clamp)?;
    let proposals = propose_likelihood_updates(model, epoch, &beliefs)?;
    let mut updated = model.clone();
    for p in &proposals {
        updated.modalities[p.modality].likelihood.counts.add_scaled(&p.delta, 1.0)?;
    }
    let updated = update_transitions(&updated, &beliefs)?;
    let ctx = LogCtx::new(&updated, clamp)?;
    let mut free_energy = free_energy_with(&updated, &ctx, epoch, &beliefs)?;
    if include_param_complexity {
        for (g, modality) in updated.modalities.iter().enumerate() {
            free_energy += dirichlet_kl_columns(
                &modality.likelihood.counts,
                &model.modalities[g].likelihood.counts,
            )?;
        }
        for (f, factor) in updated.factors.iter().enumerate() {
            free_energy += dirichlet_kl_columns(
                &factor.transition.counts,
                &model.factors[f].transition.counts,
            )?;
        }
    }
    let mutual_information = model_mutual_information(&updated)?;
    Ok(ScoredInversion { beliefs, proposals, free_energy, mutual_information })
}

/// Precise scoring priors for one candidate: the expansion assigns the
/// epoch to its new state or path; preceding factors sit at their shared
/// first state; a label clamp overrides everything for its factor.
fn scoring_clamp(
    kind: CandidateKind,
    model: &GenerativeModel,
    label: Option<(usize, usize)>,
    parent_map: Option<usize>,
) -> PriorOverride {
    let n = model.factors.len();
    let mut over = PriorOverride::none(n);
    let last = n - 1;
    match kind {
        CandidateKind::Parent => {
            if let Some(map) = parent_map {
                over.clamp_state(last, model.factors[last].n_states, map);
            }
        }
        CandidateKind::AddState => {
            over.clamp_state(last, model.factors[last].n_states, model.factors[last].n_states - 1);
            for f in 0..last {
                over.clamp_state(f, model.factors[f].n_states, 0);
            }
        }
        CandidateKind::AddPath => {
            over.clamp_path(last, model.factors[last].n_paths, model.factors[last].n_paths - 1);
            for f in 0..last {
                over.clamp_state(f, model.factors[f].n_states, 0);
            }
        }
        CandidateKind::AddFactor => {
            over.clamp_state(last, 2, 1);
            for f in 0..last {
                over.clamp_state(f, model.factors[f].n_states, 0);
            }
        }
    }
    if let Some((f, k)) = label {
        over.clamp_state(f, model.factors[f].n_states, k);
    }
    over
}

/// Direct transcription of the comparison procedure: walk the candidates,
/// keep the best expansion whose evidence improves on the running best
/// (hyperprior folded into the odds) and whose mutual information strictly
/// increases. Returns the winning index, or None for the parent.
pub fn algorithm1_select(scores: &[(f64, f64, f64)]) -> Option<usize> {
    let mut df_min = 0.0;
    let mut best = None;
    for (i, &(df, dg, dh)) in scores.iter().enumerate() {
        let odds = df + dh;
        if odds < df_min && dg > 0.0 {
            df_min = odds;
            best = Some(i);
        }
    }
    best
}

/// Score every candidate on the epoch and select per the comparison
/// procedure. The parent's beliefs are scored under a precise prior at its
/// MAP state; expansions under precise priors at their new state or path.
pub fn score_and_select(
    mut candidates: Vec<CandidateModel>,
    epoch: &Epoch,
    label: Option<usize>,
    cfg: &IngestConfig,
) -> Result<CandidateModel> {
    if candidates.is_empty() {
        return Err(Error::Argument("score_and_select on empty candidate list".into()));
    }
    let parent_pos = candidates
        .iter()
        .position(|c| c.kind == CandidateKind::Parent)
        .ok_or_else(|| Error::Argument("candidate list lacks the parent".into()))?;

    let label_clamp = match (cfg.clamp_factor, label) {
        (Some(f), Some(k)) => Some((f, k)),
        _ => None,
    };

    // free inversion of the parent fixes its MAP state for precise scoring
    let parent_model = candidates[parent_pos].model.clone();
    let free_clamp = {
        let mut over = PriorOverride::none(parent_model.factors.len());
        if let Some((f, k)) = label_clamp {
            over.clamp_state(f, parent_model.factors[f].n_states, k);
        }
        over
    };
    let free_run = infer_epoch_with(&parent_model, epoch, InferMode::Smooth, &free_clamp)?;
    let parent_map = free_run.states.last().map(|s| s[0].argmax());

    // score every candidate
    for cand in candidates.iter_mut() {
        let clamp = scoring_clamp(cand.kind, &cand.model, label_clamp, parent_map);
        let scored =
            score_inversion(&cand.model, epoch, &clamp, cfg.include_param_complexity)?;
        cand.free_energy = scored.free_energy;
        cand.mutual_information = scored.mutual_information;
        cand.beliefs = Some(scored.beliefs);
        cand.proposals = scored.proposals;
    }

    let parent_f = candidates[parent_pos].free_energy;
    let parent_mi = candidates[parent_pos].mutual_information;
    let mut scores = Vec::new();
    let mut index_of = Vec::new();
    for (i, cand) in candidates.iter_mut().enumerate() {
        if cand.kind == CandidateKind::Parent {
            continue;
        }
        cand.df = cand.free_energy - parent_f;
        cand.dg = cand.mutual_information - parent_mi;
        cand.dh = match (cand.kind, cfg.hyperprior) {
            (CandidateKind::AddState, Some(h)) => h.delta_h(),
            _ => 0.0,
        };
        scores.push((cand.df, cand.dg, cand.dh));
        index_of.push(i);
    }

    let winner = algorithm1_select(&scores).map(|k| index_of[k]).unwrap_or(parent_pos);
    let mut selected = candidates.swap_remove(winner);
    selected.accepted = selected.kind != CandidateKind::Parent;
    Ok(selected)
}

/// Fold a stream of epochs into the model: expand, score, select, commit
/// the gated likelihood update and the transition counts, and trace each
/// decision.
pub fn ingest_stream(
    m: &GenerativeModel,
    epochs: &[Epoch],
    labels: Option<&[usize]>,
    cfg: &IngestConfig,
) -> Result<IngestResult> {
    let mut model = m.clone();
    let mut cfg = cfg.clone();
    let mut trace = Vec::with_capacity(epochs.len());
    let mut path_exemplars = Vec::new();

    for (idx, epoch) in epochs.iter().enumerate() {
        let label = labels.map(|ls| ls[idx]);
        let candidates = expand_candidates(&model)?;
        let selected = score_and_select(candidates, epoch, label, &cfg)?;

        if selected.kind == CandidateKind::AddPath {
            let f = selected.model.factors.len() - 1;
            path_exemplars.push(PathExemplar {
                factor: f,
                path: selected.model.factors[f].n_paths - 1,
                epoch_index: idx,
                epoch: epoch.clone(),
            });
        }
        if selected.kind == CandidateKind::AddState {
            if let Some(h) = cfg.hyperprior.as_mut() {
                h.discovered = (h.discovered + 1).min(h.max_styles);
            }
        }

        // commit: gated likelihood update plus transition accumulation,
        // using the beliefs from the scoring inversion
        let beliefs = selected
            .beliefs
            .as_ref()
            .ok_or_else(|| Error::Argument("selected candidate carries no beliefs".into()))?;
        let (with_a, _) = gated_update(
            &selected.model,
            &selected.proposals,
            cfg.alpha,
            cfg.use_preferences_in_gate,
        )?;
        let committed = update_transitions(&with_a, beliefs)?;
        let violations = committed.validate();
        if !violations.is_empty() {
            return Err(Error::InvalidModel(violations));
        }

        trace.push(TraceRow {
            epoch: idx,
            action: selected.kind,
            n_states: committed.factors.iter().map(|f| f.n_states).collect(),
            n_paths: committed.factors.iter().map(|f| f.n_paths).collect(),
            n_factors: committed.factors.len(),
            free_energy: selected.free_energy,
            mutual_information: selected.mutual_information,
            df: selected.df,
            dg: selected.dg,
            dh: selected.dh,
        });
        model = committed;
    }

    Ok(IngestResult { model, trace, path_exemplars })
}

/// Bayesian model reduction over one Dirichlet tensor.
///
/// Per column, the log evidence gained by swapping the prior for the
/// reduced prior is `ln B(prior) + ln B(post') - ln B(post) - ln B(prior')`
/// with `post' = post + prior' - prior`; positive totals favour the
/// reduction. Returns the total gain and the reduced posterior.
pub fn bmr(
    prior: &Tensor,
    posterior: &Tensor,
    reduced_prior: &Tensor,
) -> Result<(f64, Tensor)> {
    if prior.shape() != posterior.shape() || prior.shape() != reduced_prior.shape() {
        return Err(Error::Shape(format!(
            "bmr shapes differ: {:?} / {:?} / {:?}",
            prior.shape(),
            posterior.shape(),
            reduced_prior.shape()
        )));
    }
    for (p, r) in prior.data().iter().zip(reduced_prior.data()) {
        if *r > *p + 1e-12 {
            return Err(Error::Argument(format!(
                "reduced prior adds mass ({r} > {p}); reduction may only remove it"
            )));
        }
    }
    let mut reduced_post = posterior.clone();
    for ((rp, p), r) in reduced_post
        .data_mut()
        .iter_mut()
        .zip(prior.data())
        .zip(reduced_prior.data())
    {
        *rp += r - p;
        if !(*rp > 0.0) {
            return Err(Error::InfeasibleReduction(format!(
                "reduced posterior count {rp} is nonpositive"
            )));
        }
    }
    let levels = prior.n_levels();
    let cols = prior.n_columns();
    let mut df = 0.0;
    for j in 0..cols {
        let col = |t: &Tensor| -> Vec<f64> {
            (0..levels).map(|i| t.data()[i * cols + j]).collect()
        };
        let (a, ap, post, postp) =
            (col(prior), col(reduced_prior), col(posterior), col(&reduced_post));
        if a.iter().zip(&ap).all(|(x, y)| (x - y).abs() < 1e-15) {
            continue;
        }
        df += log_beta(&a)? + log_beta(&postp)? - log_beta(&post)? - log_beta(&ap)?;
    }
    Ok((df, reduced_post))
}

/// Pruning policy: cells with posterior count below
/// `concentration + offset` are candidates for removal.
#[derive(Debug, Clone, Copy)]
pub struct PrunePolicy {
    pub count_offset: f64,
}

impl Default for PrunePolicy {
    fn default() -> Self {
        PrunePolicy { count_offset: 0.5 }
    }
}

/// Report from a pruning pass.
#[derive(Debug, Clone)]
pub struct PruneReport {
    pub parameters_removed: usize,
    pub total_df: f64,
    pub df_per_modality: Vec<f64>,
}

/// Prune redundant likelihood parameters by Bayesian model reduction:
/// for each column, propose zeroing sub-threshold cells and keep the
/// reduction when the evidence gain is positive.
pub fn prune(m: &GenerativeModel, policy: PrunePolicy) -> Result<(GenerativeModel, PruneReport)> {
    let mut out = m.clone();
    let mut report = PruneReport {
        parameters_removed: 0,
        total_df: 0.0,
        df_per_modality: vec![0.0; m.modalities.len()],
    };
    let threshold = m.concentration + policy.count_offset;
    for (g, modality) in m.modalities.iter().enumerate() {
        let post = &modality.likelihood.counts;
        let levels = post.n_levels();
        let cols = post.n_columns();
        let prior = Tensor::filled(post.shape(), m.concentration);
        let mut reduced_prior = prior.clone();
        let mut proposed = 0usize;
        for j in 0..cols {
            let col: Vec<f64> = (0..levels).map(|i| post.data()[i * cols + j]).collect();
            let small: Vec<usize> =
                (0..levels).filter(|&i| col[i] < threshold).collect();
            // untouched columns are pure prior: reduction gains nothing
            if small.len() == levels || small.is_empty() {
                continue;
            }
            for &i in &small {
                reduced_prior.data_mut()[i * cols + j] = COUNT_FLOOR;
                proposed += 1;
            }
        }
        if proposed == 0 {
            continue;
        }
        let (df, reduced_post) = bmr(&prior, post, &reduced_prior)?;
        if df > 0.0 {
            out.modalities[g].likelihood.counts = reduced_post;
            report.parameters_removed += proposed;
            report.total_df += df;
            report.df_per_modality[g] = df;
        }
    }
    Ok((out, report))
}
