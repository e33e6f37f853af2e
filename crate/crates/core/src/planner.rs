//! Expected free energy over controllable paths: risk, ambiguity and
//! count-based novelty (over likelihood and transition Dirichlet counts),
//! with depth-k recursive rollout and softmax action selection.

use crate::error::{Error, Result};
use crate::inference::BeliefState;
use crate::model::GenerativeModel;
use crate::tensor::{normalize, softmax, AxisWeight, Categorical, NormalizeMode, Tensor};
use rand::Rng;

/// Hard cap on the number of leaf evaluations in a planning tree.
pub const PLAN_BUDGET: u64 = 1_000_000;

/// The outcome of a depth-k rollout over candidate path combinations.
#[derive(Debug, Clone)]
pub struct Plan {
    /// Candidate joint assignments: one path index per controllable factor,
    /// in factor order.
    pub candidates: Vec<Vec<usize>>,
    /// Accumulated expected free energy per candidate.
    pub g_values: Vec<f64>,
    /// Expected information gain (novelty) of each candidate's first step.
    pub info_gain: Vec<f64>,
    /// softmax(-G_total) over candidates.
    pub distribution: Categorical,
    /// Marginal path posterior per factor (uncontrollable factors keep
    /// their belief-state posterior).
    pub per_factor: Vec<Categorical>,
    /// Argmax action: one path index per factor.
    pub chosen: Vec<usize>,
    /// Factor indices the candidate coordinates refer to, in order.
    pub controllable: Vec<usize>,
    /// Softmax temperature used for the distribution.
    pub precision: f64,
}

/// How `select_action` resolves the plan distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectMode {
    /// Deterministic argmax; ties go to the lowest index.
    Argmax,
    /// Draw from softmax(-G_total).
    Sample,
}

/// Precomputed planning context for one model snapshot.
pub struct PlanCtx {
    a_bar: Vec<Tensor>,
    /// Per modality: ambiguity of each parent-state combination,
    /// -sum_o A[o|s] elog a[o|s], shaped over parent states.
    ambiguity: Vec<Tensor>,
    /// Per modality: A-bar times the count novelty weight, full shape.
    novelty_a: Vec<Tensor>,
    /// Per factor: normalised transitions [next, prev, path].
    b_bar: Vec<Tensor>,
    /// Per factor: B-bar times the transition novelty weight.
    novelty_b: Vec<Tensor>,
    /// Per modality: softmax of the outcome preference vector.
    c_dist: Vec<Vec<f64>>,
    parents: Vec<Vec<usize>>,
    controllable: Vec<usize>,
}

impl PlanCtx {
    pub fn new(m: &GenerativeModel) -> Result<Self> {
        let mut a_bar = Vec::new();
        let mut ambiguity = Vec::new();
        let mut novelty_a = Vec::new();
        let mut c_dist = Vec::new();
        for g in &m.modalities {
            let counts = &g.likelihood.counts;
            let bar = normalize(counts, NormalizeMode::Columns)?;
            let levels = counts.n_levels();
            let cols = counts.n_columns();
            // ambiguity is the entropy of the predictive outcome
            // distribution per state: exact logs of the expected
            // parameters, not digamma expectations, so parameter
            // uncertainty is scored once (by novelty) and not twice
            let mut amb = vec![0.0; cols];
            for j in 0..cols {
                for i in 0..levels {
                    let p = bar.data()[i * cols + j];
                    if p > 0.0 {
                        amb[j] -= p * p.ln();
                    }
                }
            }
            let amb_shape: Vec<usize> = counts.shape()[1..].to_vec();
            ambiguity.push(Tensor::from_vec(&amb_shape, amb)?);
            novelty_a.push(novelty_weighted(counts, &bar));
            a_bar.push(bar);
            c_dist.push(softmax(&g.preference, 1.0)?.probs().to_vec());
        }
        let mut b_bar = Vec::new();
        let mut novelty_b = Vec::new();
        for f in &m.factors {
            let counts = &f.transition.counts;
            let bar = normalize(counts, NormalizeMode::Columns)?;
            novelty_b.push(novelty_weighted(counts, &bar));
            b_bar.push(bar);
        }
        let parents = (0..m.modalities.len())
            .map(|g| m.parent_indices(g))
            .collect::<Result<Vec<_>>>()?;
        let controllable = m
            .factors
            .iter()
            .enumerate()
            .filter(|(_, f)| f.controllable)
            .map(|(i, _)| i)
            .collect();
        Ok(PlanCtx {
            a_bar,
            ambiguity,
            novelty_a,
            b_bar,
            novelty_b,
            c_dist,
            parents,
            controllable,
        })
    }

    pub fn controllable_factors(&self) -> &[usize] {
        &self.controllable
    }
}

/// Expected parameter information gain per cell: the normalised predictive
/// probability times the count novelty weight (1/2)(1/count - 1/colsum),
/// with untouched (zero-count) cells masked out.
fn novelty_weighted(counts: &Tensor, bar: &Tensor) -> Tensor {
    let levels = counts.n_levels();
    let cols = counts.n_columns();
    let mut out = counts.clone();
    for j in 0..cols {
        let colsum = counts.column_sum(j);
        for i in 0..levels {
            let c = counts.data()[i * cols + j];
            let w = if c > 0.0 { 0.5 * (1.0 / c - 1.0 / colsum) } else { 0.0 };
            out.data_mut()[i * cols + j] = bar.data()[i * cols + j] * w;
        }
    }
    out
}

/// Predictive state posterior for factor `f` one step ahead, under either a
/// committed path (`Some(u)`) or the Bayesian model average over the
/// current path posterior (`None`).
fn propagate(
    ctx: &PlanCtx,
    f: usize,
    state: &Categorical,
    paths: &Categorical,
    path: Option<usize>,
) -> Result<Categorical> {
    let n_paths = ctx.b_bar[f].shape()[2];
    let one_hot;
    let path_weights: &[f64] = match path {
        Some(u) => {
            one_hot = Categorical::one_hot(n_paths, u);
            one_hot.probs()
        }
        None => paths.probs(),
    };
    let pred = ctx.b_bar[f].weighted_marginal(&[
        AxisWeight::Free,
        AxisWeight::Weights(state.probs()),
        AxisWeight::Weights(path_weights),
    ])?;
    Categorical::from_weights(&pred)
}

/// Risk, ambiguity and novelty of one candidate path combination evaluated
/// from the given per-factor state posteriors. Returns (G, novelty).
fn efe_terms(
    m: &GenerativeModel,
    ctx: &PlanCtx,
    states: &[Categorical],
    paths: &[Categorical],
    action: &[usize],
) -> Result<(f64, f64)> {
    // predictive states after one step under the candidate paths
    let mut pred = Vec::with_capacity(m.factors.len());
    let mut novelty = 0.0;
    for f in 0..m.factors.len() {
        let u = ctx
            .controllable
            .iter()
            .position(|&c| c == f)
            .map(|k| action[k]);
        if let Some(u) = u {
            if u >= m.factors[f].n_paths {
                return Err(Error::Argument(format!(
                    "path {u} out of range for factor {f}"
                )));
            }
        }
        // transition novelty: expected information gain about b-counts
        let n_paths = m.factors[f].n_paths;
        let hot;
        let path_weights: &[f64] = match u {
            Some(u) => {
                hot = Categorical::one_hot(n_paths, u);
                hot.probs()
            }
            None => paths[f].probs(),
        };
        let ones = vec![1.0; m.factors[f].n_states];
        novelty += ctx.novelty_b[f].weighted_sum(&[
            &ones,
            states[f].probs(),
            path_weights,
        ])?;
        pred.push(propagate(ctx, f, &states[f], &paths[f], u)?);
    }

    let mut g = 0.0;
    for (gi, _) in m.modalities.iter().enumerate() {
        // predictive outcome distribution
        let mut weights: Vec<AxisWeight> = vec![AxisWeight::Free];
        for &p in &ctx.parents[gi] {
            weights.push(AxisWeight::Weights(pred[p].probs()));
        }
        let q_o = ctx.a_bar[gi].weighted_marginal(&weights)?;

        // risk: KL from predicted outcomes to preferred outcomes
        let mut risk = 0.0;
        for (qo, co) in q_o.iter().zip(&ctx.c_dist[gi]) {
            if *qo > 0.0 {
                risk += qo * (qo.ln() - co.ln());
            }
        }

        // ambiguity: expected conditional outcome entropy
        let pred_weights: Vec<&[f64]> =
            ctx.parents[gi].iter().map(|&p| pred[p].probs()).collect();
        let amb = ctx.ambiguity[gi].weighted_sum(&pred_weights)?;

        // likelihood novelty
        let mut nov_weights: Vec<&[f64]> = Vec::with_capacity(1 + ctx.parents[gi].len());
        let ones = vec![1.0; m.modalities[gi].n_levels];
        nov_weights.push(&ones);
        for &p in &ctx.parents[gi] {
            nov_weights.push(pred[p].probs());
        }
        novelty += ctx.novelty_a[gi].weighted_sum(&nov_weights)?;

        g += risk + amb;
    }
    Ok((g - novelty, novelty))
}

/// Expected free energy of a single path combination at unit depth.
/// `action` holds one path index per controllable factor, in factor order.
pub fn efe_path(
    m: &GenerativeModel,
    beliefs: &BeliefState,
    action: &[usize],
) -> Result<f64> {
    let ctx = PlanCtx::new(m)?;
    let states = current_states(beliefs);
    efe_terms(m, &ctx, &states, &beliefs.paths, action).map(|(g, _)| g)
}

fn current_states(beliefs: &BeliefState) -> Vec<Categorical> {
    beliefs
        .states
        .iter()
        .map(|s| s.last().expect("belief state with no steps").clone())
        .collect()
}

fn rollout(
    m: &GenerativeModel,
    ctx: &PlanCtx,
    states: &[Categorical],
    paths: &[Categorical],
    candidates: &[Vec<usize>],
    depth: usize,
    precision: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut g_total = Vec::with_capacity(candidates.len());
    let mut info = Vec::with_capacity(candidates.len());
    for action in candidates {
        let (mut g, nov) = efe_terms(m, ctx, states, paths, action)?;
        if depth > 1 {
            let mut pred = Vec::with_capacity(m.factors.len());
            for f in 0..m.factors.len() {
                let u = ctx
                    .controllable
                    .iter()
                    .position(|&c| c == f)
                    .map(|k| action[k]);
                pred.push(propagate(ctx, f, &states[f], &paths[f], u)?);
            }
            let (g_next, _) =
                rollout(m, ctx, &pred, paths, candidates, depth - 1, precision)?;
            let weights = softmax(&g_next.iter().map(|x| -x).collect::<Vec<_>>(), precision)?;
            let cont: f64 = weights
                .probs()
                .iter()
                .zip(&g_next)
                .map(|(w, gn)| w * gn)
                .sum();
            g += cont;
        }
        g_total.push(g);
        info.push(nov);
    }
    Ok((g_total, info))
}

/// Candidate actions: the full cartesian product of paths over controllable
/// factors.
pub fn all_actions(m: &GenerativeModel) -> Vec<Vec<usize>> {
    let controllable: Vec<usize> = m
        .factors
        .iter()
        .enumerate()
        .filter(|(_, f)| f.controllable)
        .map(|(i, _)| i)
        .collect();
    let mut out: Vec<Vec<usize>> = vec![vec![]];
    for &f in &controllable {
        let mut next = Vec::new();
        for prefix in &out {
            for u in 0..m.factors[f].n_paths {
                let mut v = prefix.clone();
                v.push(u);
                next.push(v);
            }
        }
        out = next;
    }
    out
}

/// Depth-k tree evaluation of expected free energy over candidate actions.
///
/// Each level adds the softmax-weighted expected continuation to the
/// one-step expected free energy; predictive beliefs propagate through the
/// Bayesian-model-average transition for uncontrollable factors.
pub fn plan(
    m: &GenerativeModel,
    beliefs: &BeliefState,
    depth: usize,
    candidates: Option<Vec<Vec<usize>>>,
) -> Result<Plan> {
    if depth < 1 {
        return Err(Error::Argument("planning depth must be >= 1".into()));
    }
    let ctx = PlanCtx::new(m)?;
    if ctx.controllable.is_empty() {
        return Err(Error::Argument("plan requires at least one controllable factor".into()));
    }
    let candidates = candidates.unwrap_or_else(|| all_actions(m));
    if candidates.is_empty() {
        return Err(Error::Argument("empty candidate action set".into()));
    }
    let leaves = (candidates.len() as u64).saturating_pow(depth as u32);
    if leaves > PLAN_BUDGET {
        return Err(Error::Budget { leaves, budget: PLAN_BUDGET });
    }

    let precision = 1.0;
    let states = current_states(beliefs);
    let (g_values, info_gain) = rollout(
        m,
        &ctx,
        &states,
        &beliefs.paths,
        &candidates,
        depth,
        precision,
    )?;
    let distribution = softmax(
        &g_values.iter().map(|g| -g).collect::<Vec<_>>(),
        precision,
    )?;

    // marginal per factor and the argmax action
    let best = distribution.argmax();
    let mut per_factor = Vec::with_capacity(m.factors.len());
    let mut chosen = Vec::with_capacity(m.factors.len());
    for f in 0..m.factors.len() {
        match ctx.controllable.iter().position(|&c| c == f) {
            Some(k) => {
                let mut marg = vec![0.0; m.factors[f].n_paths];
                for (action, w) in candidates.iter().zip(distribution.probs()) {
                    marg[action[k]] += w;
                }
                per_factor.push(Categorical::from_weights(&marg)?);
                chosen.push(candidates[best][k]);
            }
            None => {
                per_factor.push(beliefs.paths[f].clone());
                chosen.push(beliefs.paths[f].argmax());
            }
        }
    }

    Ok(Plan {
        candidates,
        g_values,
        info_gain,
        distribution,
        per_factor,
        chosen,
        controllable: ctx.controllable.clone(),
        precision,
    })
}

/// Resolve a plan into concrete per-factor path indices.
pub fn select_action(plan: &Plan, mode: SelectMode, rng: &mut impl Rng) -> Vec<usize> {
    match mode {
        SelectMode::Argmax => plan.chosen.clone(),
        SelectMode::Sample => {
            let r: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = plan.candidates.len() - 1;
            for (i, &p) in plan.distribution.probs().iter().enumerate() {
                acc += p;
                if r < acc {
                    pick = i;
                    break;
                }
            }
            let mut out = plan.chosen.clone();
            for (k, &f) in plan.controllable.iter().enumerate() {
                out[f] = plan.candidates[pick][k];
            }
            out
        }
    }
}
