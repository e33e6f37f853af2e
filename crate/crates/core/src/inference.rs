//! Variational state and path inference over an epoch of observations:
//! fixed-point message passing with forward filtering and forward-backward
//! smoothing, plus the variational free energy of the resulting beliefs.
//!
//! Each sweep performs exact coordinate updates (softmax of summed
//! log-domain messages), so free energy is non-increasing sweep over sweep.

use crate::error::{Error, Result};
use crate::model::{Epoch, GenerativeModel};
use crate::tensor::{elog, softmax, AxisWeight, Categorical, Tensor};

/// |dF| threshold for fixed-point convergence, in nats.
pub const CONVERGENCE_TOL: f64 = 1e-4;
/// Hard cap on fixed-point sweeps.
pub const MAX_SWEEPS: usize = 16;

/// Inference mode: forward-only filtering or forward-backward smoothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InferMode {
    Filter,
    Smooth,
}

/// Per-factor categorical posteriors over states and paths for one epoch.
#[derive(Debug, Clone)]
pub struct BeliefState {
    /// states[f][tau]: posterior over states of factor `f` at step `tau`.
    pub states: Vec<Vec<Categorical>>,
    /// paths[f]: posterior over paths of factor `f` for the epoch.
    pub paths: Vec<Categorical>,
    /// Variational free energy of the final beliefs (nats).
    pub free_energy: f64,
    /// Free energy after each sweep.
    pub sweep_trace: Vec<f64>,
    pub converged: bool,
    /// True when produced by a smoothing pass.
    pub smoothed: bool,
}

impl BeliefState {
    /// Maximum a-posteriori state per factor at step `tau` (ties to the
    /// lowest index).
    pub fn map_states(&self, tau: usize) -> Vec<usize> {
        self.states.iter().map(|s| s[tau].argmax()).collect()
    }
}

/// Optional replacements for the model's own priors, used to impose the
/// precise state/path priors of structure scoring and label clamping.
#[derive(Debug, Clone, Default)]
pub struct PriorOverride {
    /// Per factor: log-prior over initial states replacing the learned one.
    pub state_log_prior: Vec<Option<Vec<f64>>>,
    /// Per factor: log-prior over paths replacing the learned one.
    pub path_log_prior: Vec<Option<Vec<f64>>>,
}

impl PriorOverride {
    pub fn none(n_factors: usize) -> Self {
        PriorOverride {
            state_log_prior: vec![None; n_factors],
            path_log_prior: vec![None; n_factors],
        }
    }

    /// Effectively clamp factor `f` to initial state `k`.
    pub fn clamp_state(&mut self, f: usize, n_states: usize, k: usize) {
        let mut v = vec![LOG_FORBID; n_states];
        v[k] = 0.0;
        self.state_log_prior[f] = Some(v);
    }

    /// Effectively clamp factor `f` to path `u`.
    pub fn clamp_path(&mut self, f: usize, n_paths: usize, u: usize) {
        let mut v = vec![LOG_FORBID; n_paths];
        v[u] = 0.0;
        self.path_log_prior[f] = Some(v);
    }
}

/// Log-probability assigned to options excluded by a precise prior. Matches
/// the expected log of a floored Dirichlet count, so clamped and structural
/// zeros behave identically.
pub const LOG_FORBID: f64 = -1e12;

/// Precomputed log-domain tensors for one model.
pub struct LogCtx {
    pub elog_a: Vec<Tensor>,
    pub elog_b: Vec<Tensor>,
    pub log_d: Vec<Vec<f64>>,
    pub log_e: Vec<Vec<f64>>,
    pub parents: Vec<Vec<usize>>,
}

impl LogCtx {
    pub fn new(m: &GenerativeModel, overrides: &PriorOverride) -> Result<Self> {
        let elog_a = m
            .modalities
            .iter()
            .map(|g| elog(&g.likelihood.counts))
            .collect::<Result<Vec<_>>>()?;
        let elog_b = m
            .factors
            .iter()
            .map(|f| elog(&f.transition.counts))
            .collect::<Result<Vec<_>>>()?;
        let mut log_d = Vec::with_capacity(m.factors.len());
        let mut log_e = Vec::with_capacity(m.factors.len());
        for (f, factor) in m.factors.iter().enumerate() {
            match overrides.state_log_prior.get(f).and_then(|o| o.clone()) {
                Some(v) => {
                    if v.len() != factor.n_states {
                        return Err(Error::Shape(format!(
                            "state prior override for factor {f} has length {}",
                            v.len()
                        )));
                    }
                    log_d.push(v);
                }
                None => log_d.push(elog(&factor.initial.counts)?.data().to_vec()),
            }
            match overrides.path_log_prior.get(f).and_then(|o| o.clone()) {
                Some(v) => {
                    if v.len() != factor.n_paths {
                        return Err(Error::Shape(format!(
                            "path prior override for factor {f} has length {}",
                            v.len()
                        )));
                    }
                    log_e.push(v);
                }
                None => log_e.push(elog(&factor.path_prior.counts)?.data().to_vec()),
            }
        }
        let parents = (0..m.modalities.len())
            .map(|g| m.parent_indices(g))
            .collect::<Result<Vec<_>>>()?;
        Ok(LogCtx { elog_a, elog_b, log_d, log_e, parents })
    }
}

/// Ascending message from the likelihood factors to factor `f` at step
/// `tau`: a log-domain mixture of the observation with expected-log
/// likelihoods, contracted against every co-parent's state posterior.
pub fn likelihood_message(
    m: &GenerativeModel,
    ctx: &LogCtx,
    obs: &crate::model::Observation,
    states: &[Vec<Categorical>],
    f: usize,
    tau: usize,
) -> Result<Vec<f64>> {
    let n = m.factors[f].n_states;
    let mut msg = vec![0.0; n];
    for (g, modality) in m.modalities.iter().enumerate() {
        let Some(pos) = ctx.parents[g].iter().position(|&p| p == f) else {
            continue;
        };
        let o = obs.modalities()[g].probs();
        if o.len() != modality.n_levels {
            return Err(Error::Shape(format!(
                "observation for modality {} has {} levels, model wants {}",
                modality.id,
                o.len(),
                modality.n_levels
            )));
        }
        let mut weights: Vec<AxisWeight> = Vec::with_capacity(1 + ctx.parents[g].len());
        weights.push(AxisWeight::Weights(o));
        for (k, &p) in ctx.parents[g].iter().enumerate() {
            if k == pos {
                weights.push(AxisWeight::Free);
            } else {
                weights.push(AxisWeight::Weights(states[p][tau].probs()));
            }
        }
        let part = ctx.elog_a[g].weighted_marginal(&weights)?;
        for (a, b) in msg.iter_mut().zip(&part) {
            *a += b;
        }
    }
    Ok(msg)
}

fn forward_message(
    ctx: &LogCtx,
    states: &[Vec<Categorical>],
    paths: &[Categorical],
    f: usize,
    tau: usize,
) -> Result<Vec<f64>> {
    if tau == 0 {
        return Ok(ctx.log_d[f].clone());
    }
    ctx.elog_b[f].weighted_marginal(&[
        AxisWeight::Free,
        AxisWeight::Weights(states[f][tau - 1].probs()),
        AxisWeight::Weights(paths[f].probs()),
    ])
}

fn backward_message(
    ctx: &LogCtx,
    states: &[Vec<Categorical>],
    paths: &[Categorical],
    f: usize,
    tau: usize,
    horizon: usize,
) -> Result<Option<Vec<f64>>> {
    if tau + 1 >= horizon {
        return Ok(None);
    }
    Ok(Some(ctx.elog_b[f].weighted_marginal(&[
        AxisWeight::Weights(states[f][tau + 1].probs()),
        AxisWeight::Free,
        AxisWeight::Weights(paths[f].probs()),
    ])?))
}

/// Log-evidence for each path of factor `f` accumulated over the epoch's
/// transitions.
fn path_evidence(
    ctx: &LogCtx,
    states: &[Vec<Categorical>],
    f: usize,
    horizon: usize,
) -> Result<Vec<f64>> {
    let n_paths = ctx.log_e[f].len();
    let mut ev = vec![0.0; n_paths];
    for tau in 1..horizon {
        let part = ctx.elog_b[f].weighted_marginal(&[
            AxisWeight::Weights(states[f][tau].probs()),
            AxisWeight::Weights(states[f][tau - 1].probs()),
            AxisWeight::Free,
        ])?;
        for (a, b) in ev.iter_mut().zip(&part) {
            *a += b;
        }
    }
    Ok(ev)
}

/// Infer per-factor path posteriors from state beliefs.
///
/// The posterior mixes the path prior with accumulated transition evidence;
/// controllable factors may add a negated expected-free-energy message from
/// the planner. With fewer than two steps the prior is returned unchanged.
pub fn infer_paths(
    m: &GenerativeModel,
    ctx: &LogCtx,
    beliefs: &BeliefState,
    efe_message: Option<&[Vec<f64>]>,
) -> Result<Vec<Categorical>> {
    let horizon = beliefs.states.first().map(|s| s.len()).unwrap_or(0);
    let mut out = Vec::with_capacity(m.factors.len());
    for f in 0..m.factors.len() {
        let mut logits = ctx.log_e[f].clone();
        if horizon >= 2 {
            let ev = path_evidence(ctx, &beliefs.states, f, horizon)?;
            for (a, b) in logits.iter_mut().zip(&ev) {
                *a += b;
            }
        }
        if m.factors[f].controllable {
            if let Some(msgs) = efe_message {
                for (a, b) in logits.iter_mut().zip(&msgs[f]) {
                    *a += b;
                }
            }
        }
        out.push(softmax(&logits, 1.0)?);
    }
    Ok(out)
}

/// Variational free energy of `beliefs` for `epoch` under `m`:
/// state/path complexity minus digamma-expected accuracy.
pub fn free_energy(m: &GenerativeModel, epoch: &Epoch, beliefs: &BeliefState) -> Result<f64> {
    let ctx = LogCtx::new(m, &PriorOverride::none(m.factors.len()))?;
    free_energy_with(m, &ctx, epoch, beliefs)
}

/// As `free_energy`, but against a prepared log-context (which may carry
/// prior overrides or updated parameters).
pub fn free_energy_with(
    m: &GenerativeModel,
    ctx: &LogCtx,
    epoch: &Epoch,
    beliefs: &BeliefState,
) -> Result<f64> {
    let horizon = epoch.len();
    let mut f_total = 0.0;

    for f in 0..m.factors.len() {
        // state negative entropy and initial-state prior
        for tau in 0..horizon {
            let s = beliefs.states[f][tau].probs();
            for &p in s {
                if p > 0.0 {
                    f_total += p * p.ln();
                }
            }
        }
        for (p, lp) in beliefs.states[f][0].probs().iter().zip(&ctx.log_d[f]) {
            if *p > 0.0 {
                f_total -= p * lp;
            }
        }
        // expected transition log-probabilities
        let u = beliefs.paths[f].probs();
        for tau in 1..horizon {
            f_total -= ctx.elog_b[f].weighted_sum(&[
                beliefs.states[f][tau].probs(),
                beliefs.states[f][tau - 1].probs(),
                u,
            ])?;
        }
        // path negative entropy and prior
        for (&p, lp) in u.iter().zip(&ctx.log_e[f]) {
            if p > 0.0 {
                f_total += p * (p.ln() - lp);
            }
        }
    }

    // accuracy over modalities
    for (tau, obs) in epoch.steps().iter().enumerate() {
        for (g, _) in m.modalities.iter().enumerate() {
            let o = obs.modalities()[g].probs();
            let mut weights: Vec<&[f64]> = Vec::with_capacity(1 + ctx.parents[g].len());
            weights.push(o);
            for &p in &ctx.parents[g] {
                weights.push(beliefs.states[p][tau].probs());
            }
            f_total -= ctx.elog_a[g].weighted_sum(&weights)?;
        }
    }
    Ok(f_total)
}

/// Infer state and path posteriors for one epoch.
pub fn infer_epoch(m: &GenerativeModel, epoch: &Epoch, mode: InferMode) -> Result<BeliefState> {
    infer_epoch_with(m, epoch, mode, &PriorOverride::none(m.factors.len()))
}

/// Infer with explicit prior overrides (precise priors over latent states
/// and paths).
pub fn infer_epoch_with(
    m: &GenerativeModel,
    epoch: &Epoch,
    mode: InferMode,
    overrides: &PriorOverride,
) -> Result<BeliefState> {
    if epoch.is_empty() {
        return Err(Error::Argument("infer_epoch on empty epoch".into()));
    }
    let ctx = LogCtx::new(m, overrides)?;
    infer_epoch_ctx(m, &ctx, epoch, mode)
}

/// Inference against a prepared context.
pub fn infer_epoch_ctx(
    m: &GenerativeModel,
    ctx: &LogCtx,
    epoch: &Epoch,
    mode: InferMode,
) -> Result<BeliefState> {
    let horizon = epoch.len();
    let n_factors = m.factors.len();

    let mut beliefs = BeliefState {
        states: m
            .factors
            .iter()
            .map(|f| vec![Categorical::uniform(f.n_states); horizon])
            .collect(),
        paths: (0..n_factors)
            .map(|f| softmax(&ctx.log_e[f], 1.0))
            .collect::<Result<Vec<_>>>()?,
        free_energy: f64::INFINITY,
        sweep_trace: Vec::new(),
        converged: false,
        smoothed: mode == InferMode::Smooth,
    };

    match mode {
        InferMode::Filter => {
            // One forward pass; converges in a single iteration.
            for tau in 0..horizon {
                for f in 0..n_factors {
                    let mut logits =
                        likelihood_message(m, ctx, &epoch.steps()[tau], &beliefs.states, f, tau)?;
                    let fwd = forward_message(ctx, &beliefs.states, &beliefs.paths, f, tau)?;
                    for (a, b) in logits.iter_mut().zip(&fwd) {
                        *a += b;
                    }
                    beliefs.states[f][tau] = softmax(&logits, 1.0)?;
                }
            }
            beliefs.paths = infer_paths(m, ctx, &beliefs, None)?;
            beliefs.free_energy = free_energy_with(m, ctx, epoch, &beliefs)?;
            beliefs.sweep_trace.push(beliefs.free_energy);
            beliefs.converged = true;
        }
        InferMode::Smooth => {
            let mut prev_f = f64::INFINITY;
            for _sweep in 0..MAX_SWEEPS {
                // paths first: with hard structural zeros in the stationary
                // slice, updating paths against current states avoids locking
                // states onto the identity dynamics before evidence is seen.
                if horizon >= 2 {
                    beliefs.paths = infer_paths(m, ctx, &beliefs, None)?;
                }
                for tau in 0..horizon {
                    for f in 0..n_factors {
                        let mut logits = likelihood_message(
                            m,
                            ctx,
                            &epoch.steps()[tau],
                            &beliefs.states,
                            f,
                            tau,
                        )?;
                        let fwd = forward_message(ctx, &beliefs.states, &beliefs.paths, f, tau)?;
                        for (a, b) in logits.iter_mut().zip(&fwd) {
                            *a += b;
                        }
                        if let Some(bwd) =
                            backward_message(ctx, &beliefs.states, &beliefs.paths, f, tau, horizon)?
                        {
                            for (a, b) in logits.iter_mut().zip(&bwd) {
                                *a += b;
                            }
                        }
                        beliefs.states[f][tau] = softmax(&logits, 1.0)?;
                    }
                }
                let f_now = free_energy_with(m, ctx, epoch, &beliefs)?;
                beliefs.sweep_trace.push(f_now);
                beliefs.free_energy = f_now;
                if (prev_f - f_now).abs() < CONVERGENCE_TOL {
                    beliefs.converged = true;
                    break;
                }
                prev_f = f_now;
            }
        }
    }
    Ok(beliefs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DirichletTensor, Factor, Modality, Observation};
    use approx::assert_relative_eq;

    /// Transition tensor from per-path matrices (each row-major [next, prev]).
    fn transition_from_slices(n: usize, slices: &[Vec<f64>]) -> Vec<f64> {
        let paths = slices.len();
        let mut data = vec![0.0; n * n * paths];
        for (u, s) in slices.iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    data[i * n * paths + j * paths + u] = s[i * n + j];
                }
            }
        }
        data
    }

    /// Single-factor model with explicit likelihood/transition counts.
    fn hmm(
        n_states: usize,
        n_paths: usize,
        likelihood: Vec<f64>,
        transition: Option<Vec<f64>>,
    ) -> GenerativeModel {
        let n_levels = likelihood.len() / n_states;
        let mut m = GenerativeModel::new_minimal(&[("obs", n_levels)], 1.0 / 16.0).unwrap();
        let mut f = Factor::new("factor-0", n_states, n_paths, 1.0 / 16.0);
        if let Some(t) = transition {
            f.transition = DirichletTensor::new(
                Tensor::from_vec(&[n_states, n_states, n_paths], t).unwrap(),
                f.transition.axis_labels.clone(),
            );
        }
        m.factors = vec![f];
        m.modalities[0] = Modality {
            id: "obs".into(),
            n_levels,
            likelihood: DirichletTensor::new(
                Tensor::from_vec(&[n_levels, n_states], likelihood).unwrap(),
                vec!["obs".into(), "factor-0".into()],
            ),
            preference: vec![0.0; n_levels],
            parents: vec!["factor-0".into()],
        };
        m
    }

    fn one_hot_epoch(n_levels: usize, levels: &[usize]) -> Epoch {
        Epoch(
            levels
                .iter()
                .map(|&l| Observation(vec![Categorical::one_hot(n_levels, l)]))
                .collect(),
        )
    }

    #[test]
    fn single_state_model_posterior_is_delta() {
        let m = hmm(1, 1, vec![4.0, 4.0], None);
        let epoch = one_hot_epoch(2, &[0, 1]);
        let b = infer_epoch(&m, &epoch, InferMode::Smooth).unwrap();
        assert_relative_eq!(b.states[0][0].probs()[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(b.states[0][1].probs()[0], 1.0, epsilon = 1e-12);
        // F = -sum of expected log likelihoods, complexity zero
        let ctx = LogCtx::new(&m, &PriorOverride::none(1)).unwrap();
        let ea = &ctx.elog_a[0];
        let want = -(ea.get(&[0, 0]) + ea.get(&[1, 0]));
        assert_relative_eq!(b.free_energy, want, epsilon = 1e-9);
    }

    /// Exact enumeration of ln P(o|m) and posteriors for a single-factor
    /// model with one-hot observations, using exact (normalised-count)
    /// parameters.
    fn enumerate_hmm(
        m: &GenerativeModel,
        levels: &[usize],
    ) -> (f64, Vec<Vec<f64>>) {
        let f = &m.factors[0];
        let n = f.n_states;
        let t = levels.len();
        let a = m.likelihood_probs(0).unwrap();
        let b = m.transition_probs(0).unwrap();
        let d: Vec<f64> = {
            let total = f.initial.counts.total();
            f.initial.counts.data().iter().map(|x| x / total).collect()
        };
        let e: Vec<f64> = {
            let total = f.path_prior.counts.total();
            f.path_prior.counts.data().iter().map(|x| x / total).collect()
        };
        let mut evidence = 0.0;
        let mut marginals = vec![vec![0.0; n]; t];
        let mut seq = vec![0usize; t];
        loop {
            for u in 0..f.n_paths {
                let mut p = e[u] * d[seq[0]] * a.get(&[levels[0], seq[0]]);
                for tau in 1..t {
                    p *= b.get(&[seq[tau], seq[tau - 1], u]) * a.get(&[levels[tau], seq[tau]]);
                }
                evidence += p;
                for tau in 0..t {
                    marginals[tau][seq[tau]] += p;
                }
            }
            let mut k = t;
            loop {
                if k == 0 {
                    for row in marginals.iter_mut() {
                        let s: f64 = row.iter().sum();
                        for x in row.iter_mut() {
                            *x /= s;
                        }
                    }
                    return (evidence.ln(), marginals);
                }
                k -= 1;
                seq[k] += 1;
                if seq[k] < n {
                    break;
                }
                seq[k] = 0;
            }
        }
    }

    /// Near-deterministic two-state chain with high counts, so digamma
    /// expectations coincide with exact logs and the mean-field posterior
    /// coincides with the exact one.
    fn sharp_two_state() -> GenerativeModel {
        let big = 1e7;
        let eps = 1e-4 * big;
        let mut m = hmm(
            2,
            1,
            vec![big, eps, eps, big],
            Some(vec![big, eps, eps, big]),
        );
        m.factors[0].initial =
            DirichletTensor::new(Tensor::from_vec(&[2], vec![0.9 * big, 0.1 * big]).unwrap(), vec!["factor-0".into()]);
        m
    }

    #[test]
    fn two_state_hmm_matches_enumeration() {
        let m = sharp_two_state();
        let epoch = one_hot_epoch(2, &[0, 0]);
        let b = infer_epoch(&m, &epoch, InferMode::Smooth).unwrap();
        let (_, marginals) = enumerate_hmm(&m, &[0, 0]);
        for tau in 0..2 {
            for i in 0..2 {
                assert!(
                    (b.states[0][tau].probs()[i] - marginals[tau][i]).abs() < 1e-6,
                    "tau {tau} state {i}: {} vs {}",
                    b.states[0][tau].probs()[i],
                    marginals[tau][i]
                );
            }
        }
    }

    #[test]
    fn negative_free_energy_attains_log_evidence_at_exact_posterior() {
        let m = sharp_two_state();
        let epoch = one_hot_epoch(2, &[0, 0]);
        let b = infer_epoch(&m, &epoch, InferMode::Smooth).unwrap();
        let (ln_p, _) = enumerate_hmm(&m, &[0, 0]);
        assert!(
            (-b.free_energy - ln_p).abs() < 1e-6,
            "-F = {}, ln P = {}",
            -b.free_energy,
            ln_p
        );
    }

    #[test]
    fn negative_free_energy_lower_bounds_log_evidence() {
        // Moderate counts: digamma strictly below log, bound must hold.
        for (counts, obs) in [
            (vec![3.0, 1.0, 2.0, 5.0], vec![0, 1]),
            (vec![1.0, 1.0, 1.0, 1.0], vec![1, 0]),
            (vec![8.0, 2.0, 1.0, 4.0], vec![0, 0]),
        ] {
            let m = hmm(2, 1, counts, Some(vec![4.0, 1.0, 1.0, 4.0]));
            let epoch = one_hot_epoch(2, &obs);
            let b = infer_epoch(&m, &epoch, InferMode::Smooth).unwrap();
            let (ln_p, _) = enumerate_hmm(&m, &obs);
            assert!(
                -b.free_energy <= ln_p + 1e-9,
                "-F = {} exceeds ln P = {}",
                -b.free_energy,
                ln_p
            );
        }
    }

    #[test]
    fn free_energy_non_increasing_over_sweeps() {
        let m = hmm(
            3,
            2,
            vec![5.0, 1.0, 2.0, 1.0, 6.0, 1.0, 0.5, 0.5, 4.0],
            Some(transition_from_slices(
                3,
                &[
                    // path 0: identity
                    vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
                    // path 1: noisy shift
                    vec![0.2, 0.2, 3.0, 3.0, 0.4, 0.3, 0.3, 3.0, 0.2],
                ],
            )),
        );
        let epoch = one_hot_epoch(3, &[0, 1]);
        let b = infer_epoch(&m, &epoch, InferMode::Smooth).unwrap();
        for w in b.sweep_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "sweep trace increased: {:?}", b.sweep_trace);
        }
        assert!(b.converged);
    }

    #[test]
    fn uninformative_second_observation_matches_filter_at_first_step() {
        // dynamics dominated by a flat flexible path, so the backward
        // message carries no coupling; the flat observation at the second
        // step then leaves the first-step posterior at its filtered value
        let mut m = hmm(
            2,
            2,
            vec![9.0, 1.0, 1.0, 9.0],
            Some(transition_from_slices(
                2,
                &[
                    vec![1.0, 0.0, 0.0, 1.0], // identity
                    vec![5.0, 5.0, 5.0, 5.0], // flat dynamics
                ],
            )),
        );
        m.factors[0].path_prior = DirichletTensor::new(
            Tensor::from_vec(&[2], vec![1e-6, 1e6]).unwrap(),
            vec!["factor-0:path".into()],
        );
        let epoch = Epoch(vec![
            Observation(vec![Categorical::one_hot(2, 0)]),
            Observation(vec![Categorical::uniform(2)]),
        ]);
        let smooth = infer_epoch(&m, &epoch, InferMode::Smooth).unwrap();
        let filt = infer_epoch(&m, &epoch, InferMode::Filter).unwrap();
        for i in 0..2 {
            assert!(
                (smooth.states[0][0].probs()[i] - filt.states[0][0].probs()[i]).abs() < 1e-4,
                "smooth {:?} vs filter {:?}",
                smooth.states[0][0],
                filt.states[0][0]
            );
        }
    }

    #[test]
    fn filter_then_smooth_agrees_with_smooth() {
        let m = sharp_two_state();
        let epoch = one_hot_epoch(2, &[0, 0]);
        let direct = infer_epoch(&m, &epoch, InferMode::Smooth).unwrap();
        // filtering provides the initialisation in the online loop; smoothing
        // afterwards must land on the same fixed point
        let _filtered = infer_epoch(&m, &epoch, InferMode::Filter).unwrap();
        let smoothed = infer_epoch(&m, &epoch, InferMode::Smooth).unwrap();
        for tau in 0..2 {
            for i in 0..2 {
                assert!(
                    (direct.states[0][tau].probs()[i] - smoothed.states[0][tau].probs()[i]).abs()
                        < 1e-6
                );
            }
        }
    }

    #[test]
    fn likelihood_message_sharp_and_uniform() {
        let m = hmm(3, 1, vec![1e6, 1.0, 1.0, 1.0, 1e6, 1.0, 1.0, 1.0, 1e6], None);
        let ctx = LogCtx::new(&m, &PriorOverride::none(1)).unwrap();
        let states = vec![vec![Categorical::uniform(3); 1]];
        let obs = Observation(vec![Categorical::one_hot(3, 1)]);
        let msg = likelihood_message(&m, &ctx, &obs, &states, 0, 0).unwrap();
        let argmax = msg
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, 1);
        assert!(msg.iter().all(|&v| v <= 0.0));

        let m = hmm(3, 1, vec![2.0; 9], None);
        let ctx = LogCtx::new(&m, &PriorOverride::none(1)).unwrap();
        let msg = likelihood_message(&m, &ctx, &obs, &states, 0, 0).unwrap();
        for w in msg.windows(2) {
            assert_relative_eq!(w[0], w[1], epsilon = 1e-12);
        }
    }

    #[test]
    fn likelihood_message_two_parents_matches_loop_oracle() {
        // one modality with two parent factors, 3 levels x 2 x 2 states
        let mut m = GenerativeModel::new_minimal(&[("obs", 3)], 1.0 / 16.0).unwrap();
        m.factors = vec![
            Factor::new("factor-0", 2, 1, 1.0 / 16.0),
            Factor::new("factor-1", 2, 1, 1.0 / 16.0),
        ];
        let data: Vec<f64> = (0..12).map(|i| 0.3 + (i as f64 * 0.37).sin().abs()).collect();
        m.modalities[0] = Modality {
            id: "obs".into(),
            n_levels: 3,
            likelihood: DirichletTensor::new(
                Tensor::from_vec(&[3, 2, 2], data.clone()).unwrap(),
                vec!["obs".into(), "factor-0".into(), "factor-1".into()],
            ),
            preference: vec![0.0; 3],
            parents: vec!["factor-0".into(), "factor-1".into()],
        };
        let ctx = LogCtx::new(&m, &PriorOverride::none(2)).unwrap();
        let obs = Observation(vec![
            Categorical::new(vec![0.5, 0.2, 0.3]).unwrap(),
        ]);
        let co = Categorical::new(vec![0.7, 0.3]).unwrap();
        let states = vec![vec![Categorical::uniform(2); 1], vec![co.clone(); 1]];
        let msg = likelihood_message(&m, &ctx, &obs, &states, 0, 0).unwrap();

        // oracle: exhaustive sum over outcome and co-parent state
        let ea = &ctx.elog_a[0];
        for i in 0..2 {
            let mut want = 0.0;
            for o in 0..3 {
                for j in 0..2 {
                    want += obs.modalities()[0].probs()[o] * ea.get(&[o, i, j]) * co.probs()[j];
                }
            }
            assert_relative_eq!(msg[i], want, epsilon = 1e-12);
        }
    }

    #[test]
    fn path_inference_detects_shift() {
        // 3-state cycle: path 1 shifts i -> i+1 deterministically
        let mut transition = vec![0.0; 18];
        let t = |i: usize, j: usize, u: usize| u * 1 + j * 2 + i * 6; // [3,3,2] strides: 6,2,1
        for j in 0..3 {
            transition[t(j, j, 0)] = 1.0;
            transition[t((j + 1) % 3, j, 1)] = 100.0;
            for i in 0..3 {
                if i != (j + 1) % 3 {
                    transition[t(i, j, 1)] = 0.01;
                }
            }
        }
        let m = hmm(
            3,
            2,
            vec![1e6, 1.0, 1.0, 1.0, 1e6, 1.0, 1.0, 1.0, 1e6],
            Some(transition),
        );
        let epoch = one_hot_epoch(3, &[0, 1]);
        let b = infer_epoch(&m, &epoch, InferMode::Smooth).unwrap();
        assert_eq!(b.paths[0].argmax(), 1, "paths: {:?}", b.paths[0]);
    }

    #[test]
    fn single_path_posterior_is_delta() {
        let m = hmm(2, 1, vec![4.0, 1.0, 1.0, 4.0], None);
        let epoch = one_hot_epoch(2, &[0, 0]);
        let b = infer_epoch(&m, &epoch, InferMode::Smooth).unwrap();
        assert_eq!(b.paths[0].probs(), &[1.0]);
    }

    #[test]
    fn uniform_transitions_leave_path_prior() {
        // two flexible paths with identical counts: posterior equals prior
        let mut m = hmm(
            2,
            3,
            vec![9.0, 1.0, 1.0, 9.0],
            Some(transition_from_slices(
                2,
                &[
                    vec![1.0, 0.0, 0.0, 1.0], // identity
                    vec![2.0, 2.0, 2.0, 2.0], // flat
                    vec![2.0, 2.0, 2.0, 2.0], // flat
                ],
            )),
        );
        m.factors[0].path_prior = DirichletTensor::new(
            Tensor::from_vec(&[3], vec![2.0, 1.0, 1.0]).unwrap(),
            vec!["factor-0:path".into()],
        );
        let epoch = one_hot_epoch(2, &[0, 1]);
        let b = infer_epoch(&m, &epoch, InferMode::Smooth).unwrap();
        // identity path cannot explain 0 -> 1, so mass sits on the two flat
        // paths in proportion to the prior (equal here)
        assert_relative_eq!(b.paths[0].probs()[1], b.paths[0].probs()[2], epsilon = 1e-9);
    }

    #[test]
    fn single_step_epoch_keeps_path_prior() {
        let m = hmm(2, 2, vec![4.0, 1.0, 1.0, 4.0], None);
        let epoch = one_hot_epoch(2, &[0]);
        let b = infer_epoch(&m, &epoch, InferMode::Smooth).unwrap();
        let prior = softmax(
            &elog(&m.factors[0].path_prior.counts).unwrap().data().to_vec(),
            1.0,
        )
        .unwrap();
        for i in 0..2 {
            assert_relative_eq!(b.paths[0].probs()[i], prior.probs()[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn clamped_state_prior_pins_inference() {
        let m = hmm(2, 1, vec![2.0, 2.0, 2.0, 2.0], None);
        let mut over = PriorOverride::none(1);
        over.clamp_state(0, 2, 1);
        let epoch = one_hot_epoch(2, &[0, 0]);
        let b = infer_epoch_with(&m, &epoch, InferMode::Smooth, &over).unwrap();
        assert_relative_eq!(b.states[0][0].probs()[1], 1.0, epsilon = 1e-12);
    }
}
