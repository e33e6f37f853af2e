//! Active learning of Dirichlet parameters: candidate count increments,
//! mutual-information gating of updates, the gated Bayesian-model-average
//! update, and transition-count accumulation from smoothed beliefs.

use crate::error::{Error, Result};
use crate::inference::BeliefState;
use crate::model::{Epoch, GenerativeModel};
use crate::tensor::{normalize, outer, softmax, NormalizeMode, Tensor};

/// A candidate increment to one modality's likelihood counts.
#[derive(Debug, Clone)]
pub struct UpdateProposal {
    /// Index of the target likelihood tensor.
    pub modality: usize,
    /// Count increment, same shape as the likelihood; total mass is at most
    /// the epoch length.
    pub delta: Tensor,
    /// Expected free energy of the parameters without the update.
    pub g_no_update: f64,
    /// Expected free energy with the update applied.
    pub g_update: f64,
    /// Probability assigned to committing the update.
    pub p_update: f64,
}

/// Outcome of gating a set of proposals: the two expected free energies and
/// the shared update probability.
#[derive(Debug, Clone, Copy)]
pub struct GateDecision {
    pub g_no_update: f64,
    pub g_update: f64,
    pub p_update: f64,
}

/// Count increment for modality `g` at step `tau`: the outer product of the
/// observed outcome vector with every parent state posterior.
pub fn delta_counts(
    m: &GenerativeModel,
    obs: &crate::model::Observation,
    beliefs: &BeliefState,
    g: usize,
    tau: usize,
) -> Result<Tensor> {
    let parents = m.parent_indices(g)?;
    let o = obs.modalities()[g].probs();
    if o.len() != m.modalities[g].n_levels {
        return Err(Error::Shape(format!(
            "observation for modality {g} has {} levels, model wants {}",
            o.len(),
            m.modalities[g].n_levels
        )));
    }
    let mut vs: Vec<&[f64]> = vec![o];
    for &p in &parents {
        vs.push(beliefs.states[p][tau].probs());
    }
    outer(&vs)
}

/// Expected free energy of a likelihood count tensor: the negative mutual
/// information between outcomes and flattened parent states, minus the
/// preference-weighted outcome marginal.
pub fn param_efe(a: &Tensor, preference: &[f64]) -> Result<f64> {
    if preference.len() != a.n_levels() {
        return Err(Error::Shape(format!(
            "preference length {} vs {} outcome levels",
            preference.len(),
            a.n_levels()
        )));
    }
    let mi = mutual_information(a)?;
    let joint = normalize(a, NormalizeMode::Joint)?;
    let levels = joint.n_levels();
    let cols = joint.n_columns();
    let mut cost = 0.0;
    for i in 0..levels {
        let marginal: f64 = (0..cols).map(|j| joint.data()[i * cols + j]).sum();
        cost += preference[i] * marginal;
    }
    Ok(-mi - cost)
}

/// Mutual information of the joint-normalised tensor, matricised to
/// [levels, flattened states]: H(outcome) + H(state) - H(outcome, state).
pub fn mutual_information(a: &Tensor) -> Result<f64> {
    if !(a.total() > 0.0) {
        return Err(Error::DegenerateTensor("mutual information of zero tensor".into()));
    }
    let joint = normalize(a, NormalizeMode::Joint)?;
    let levels = joint.n_levels();
    let cols = joint.n_columns();
    let mut h_joint = 0.0;
    let mut row_marginal = vec![0.0; levels];
    let mut col_marginal = vec![0.0; cols];
    for i in 0..levels {
        for j in 0..cols {
            let p = joint.data()[i * cols + j];
            if p > 0.0 {
                h_joint -= p * p.ln();
            }
            row_marginal[i] += p;
            col_marginal[j] += p;
        }
    }
    let h_row: f64 = -row_marginal.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>();
    let h_col: f64 = -col_marginal.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>();
    Ok(h_row + h_col - h_joint)
}

/// Build likelihood update proposals for a whole epoch, summing the
/// per-step increments for each modality.
pub fn propose_likelihood_updates(
    m: &GenerativeModel,
    epoch: &Epoch,
    beliefs: &BeliefState,
) -> Result<Vec<UpdateProposal>> {
    let mut proposals = Vec::with_capacity(m.modalities.len());
    for g in 0..m.modalities.len() {
        let mut delta = Tensor::zeros(m.modalities[g].likelihood.counts.shape());
        for (tau, obs) in epoch.steps().iter().enumerate() {
            let d = delta_counts(m, obs, beliefs, g, tau)?;
            delta.add_scaled(&d, 1.0)?;
        }
        proposals.push(UpdateProposal {
            modality: g,
            delta,
            g_no_update: 0.0,
            g_update: 0.0,
            p_update: 0.0,
        });
    }
    Ok(proposals)
}

/// Score a set of proposals jointly: one gate for the whole update event.
///
/// The expected free energy sums over the factorised likelihood tensors.
/// With `use_preferences` false the expected-cost term is dropped and the
/// gate reduces to the mutual-information comparison.
pub fn gate_updates(
    m: &GenerativeModel,
    proposals: &[UpdateProposal],
    alpha: f64,
    use_preferences: bool,
) -> Result<GateDecision> {
    let mut g_no = 0.0;
    let mut g_yes = 0.0;
    for p in proposals {
        let a = &m.modalities[p.modality].likelihood.counts;
        let zero_pref = vec![0.0; m.modalities[p.modality].n_levels];
        let pref: &[f64] = if use_preferences {
            &m.modalities[p.modality].preference
        } else {
            &zero_pref
        };
        g_no += param_efe(a, pref)?;
        let mut updated = a.clone();
        updated.add_scaled(&p.delta, 1.0)?;
        g_yes += param_efe(&updated, pref)?;
    }
    let gate = softmax(&[-g_no, -g_yes], alpha)?;
    Ok(GateDecision { g_no_update: g_no, g_update: g_yes, p_update: gate.probs()[1] })
}

/// Apply the gated Bayesian-model-average update: counts grow by
/// `p_update * delta`. Returns the new model snapshot and the filled-in
/// proposals.
pub fn gated_update(
    m: &GenerativeModel,
    proposals: &[UpdateProposal],
    alpha: f64,
    use_preferences: bool,
) -> Result<(GenerativeModel, Vec<UpdateProposal>)> {
    let decision = gate_updates(m, proposals, alpha, use_preferences)?;
    let mut out = m.clone();
    let mut scored = proposals.to_vec();
    for p in scored.iter_mut() {
        p.g_no_update = decision.g_no_update;
        p.g_update = decision.g_update;
        p.p_update = decision.p_update;
        out.modalities[p.modality]
            .likelihood
            .counts
            .add_scaled(&p.delta, decision.p_update)?;
    }
    Ok((out, scored))
}

/// Accumulate transition counts from smoothed beliefs:
/// `b[:, :, u] += path(u) * outer(s_{tau}, s_{tau-1})` summed over the
/// epoch's steps. The stationary first path only ever receives its diagonal
/// component, so it stays an exact identity.
pub fn update_transitions(
    m: &GenerativeModel,
    beliefs: &BeliefState,
) -> Result<GenerativeModel> {
    if !beliefs.smoothed {
        return Err(Error::Contract(
            "update_transitions requires smoothed beliefs, got filtered".into(),
        ));
    }
    let mut out = m.clone();
    let horizon = beliefs.states.first().map(|s| s.len()).unwrap_or(0);
    for (f, factor) in m.factors.iter().enumerate() {
        let n = factor.n_states;
        let b = &mut out.factors[f].transition.counts;
        for tau in 1..horizon {
            let s_next = beliefs.states[f][tau].probs();
            let s_prev = beliefs.states[f][tau - 1].probs();
            for (u, &pu) in beliefs.paths[f].probs().iter().enumerate() {
                if pu == 0.0 {
                    continue;
                }
                if u == 0 {
                    for i in 0..n {
                        let inc = pu * s_next[i] * s_prev[i];
                        if inc != 0.0 {
                            let cur = b.get(&[i, i, 0]);
                            b.set(&[i, i, 0], cur + inc);
                        }
                    }
                } else {
                    for i in 0..n {
                        if s_next[i] == 0.0 {
                            continue;
                        }
                        for j in 0..n {
                            let inc = pu * s_next[i] * s_prev[j];
                            if inc != 0.0 {
                                let cur = b.get(&[i, j, u]);
                                b.set(&[i, j, u], cur + inc);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{infer_epoch, InferMode};
    use crate::model::{DirichletTensor, Factor, Modality, Observation};
    use crate::tensor::Categorical;
    use approx::assert_relative_eq;

    fn beliefs_with(states: Vec<Vec<Categorical>>, paths: Vec<Categorical>, smoothed: bool) -> BeliefState {
        BeliefState {
            states,
            paths,
            free_energy: 0.0,
            sweep_trace: vec![],
            converged: true,
            smoothed,
        }
    }

    fn two_state_model(likelihood: Vec<f64>) -> GenerativeModel {
        let mut m = GenerativeModel::new_minimal(&[("obs", 2)], 1.0 / 16.0).unwrap();
        m.factors = vec![Factor::new("factor-0", 2, 1, 1.0 / 16.0)];
        m.modalities[0] = Modality {
            id: "obs".into(),
            n_levels: 2,
            likelihood: DirichletTensor::new(
                Tensor::from_vec(&[2, 2], likelihood).unwrap(),
                vec!["obs".into(), "factor-0".into()],
            ),
            preference: vec![0.0, 0.0],
            parents: vec!["factor-0".into()],
        };
        m
    }

    #[test]
    fn delta_counts_one_hot() {
        let m = two_state_model(vec![1.0; 4]);
        let b = beliefs_with(
            vec![vec![Categorical::one_hot(2, 0)]],
            vec![Categorical::one_hot(1, 0)],
            true,
        );
        let obs = Observation(vec![Categorical::one_hot(2, 1)]);
        let d = delta_counts(&m, &obs, &b, 0, 0).unwrap();
        assert_eq!(d.get(&[1, 0]), 1.0);
        assert_relative_eq!(d.total(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn delta_counts_soft_observation() {
        let m = two_state_model(vec![1.0; 4]);
        let b = beliefs_with(
            vec![vec![Categorical::one_hot(2, 0)]],
            vec![Categorical::one_hot(1, 0)],
            true,
        );
        let obs = Observation(vec![Categorical::new(vec![0.7, 0.3]).unwrap()]);
        let d = delta_counts(&m, &obs, &b, 0, 0).unwrap();
        assert_relative_eq!(d.get(&[0, 0]), 0.7, epsilon = 1e-12);
        assert_relative_eq!(d.get(&[1, 0]), 0.3, epsilon = 1e-12);
        assert_relative_eq!(d.get(&[0, 1]), 0.0, epsilon = 1e-12);
        assert_relative_eq!(d.total(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn param_efe_uniform_and_diagonal() {
        let uniform = Tensor::filled(&[2, 2], 0.25);
        assert_relative_eq!(param_efe(&uniform, &[0.0, 0.0]).unwrap(), 0.0, epsilon = 1e-12);

        let eps = 1e-12;
        let diag = Tensor::from_vec(&[2, 2], vec![0.5, eps, eps, 0.5]).unwrap();
        let g = param_efe(&diag, &[0.0, 0.0]).unwrap();
        assert_relative_eq!(g, -(2f64.ln()), epsilon = 1e-9);
    }

    #[test]
    fn mutual_information_matches_double_loop_oracle() {
        let data: Vec<f64> = (0..12).map(|i| 0.2 + ((i * 7 + 3) % 11) as f64 * 0.31).collect();
        let a = Tensor::from_vec(&[3, 4], data).unwrap();
        let got = mutual_information(&a).unwrap();

        // oracle: sum p(o,s) ln [p(o,s) / (p(o) p(s))]
        let joint = normalize(&a, NormalizeMode::Joint).unwrap();
        let mut want = 0.0;
        for o in 0..3 {
            for s in 0..4 {
                let p = joint.get(&[o, s]);
                let po: f64 = (0..4).map(|s2| joint.get(&[o, s2])).sum();
                let ps: f64 = (0..3).map(|o2| joint.get(&[o2, s])).sum();
                if p > 0.0 {
                    want += p * (p / (po * ps)).ln();
                }
            }
        }
        assert_relative_eq!(got, want, epsilon = 1e-9);
    }

    #[test]
    fn mutual_information_transpose_invariant() {
        let data: Vec<f64> = (0..12).map(|i| 0.05 + ((i * 13 + 5) % 17) as f64 * 0.21).collect();
        let a = Tensor::from_vec(&[3, 4], data.clone()).unwrap();
        let mut tdata = vec![0.0; 12];
        for i in 0..3 {
            for j in 0..4 {
                tdata[j * 3 + i] = data[i * 4 + j];
            }
        }
        let at = Tensor::from_vec(&[4, 3], tdata).unwrap();
        assert_relative_eq!(
            mutual_information(&a).unwrap(),
            mutual_information(&at).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn gate_symmetric_case_gives_half_update() {
        // a delta of all zeros leaves G unchanged: p = 1/2 at any alpha
        let m = two_state_model(vec![2.0, 0.5, 0.5, 2.0]);
        let proposals = vec![UpdateProposal {
            modality: 0,
            delta: Tensor::zeros(&[2, 2]),
            g_no_update: 0.0,
            g_update: 0.0,
            p_update: 0.0,
        }];
        for alpha in [0.5, 8.0, 1e6] {
            let d = gate_updates(&m, &proposals, alpha, false).unwrap();
            assert_relative_eq!(d.p_update, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn gate_selection_limit() {
        // an update that sharpens the joint raises MI: G_yes < G_no and the
        // high-precision gate fully commits
        let m = two_state_model(vec![2.0, 0.0625, 0.0625, 2.0]);
        let mut delta = Tensor::zeros(&[2, 2]);
        delta.set(&[0, 0], 1.0);
        let proposals = vec![UpdateProposal {
            modality: 0,
            delta,
            g_no_update: 0.0,
            g_update: 0.0,
            p_update: 0.0,
        }];
        let d = gate_updates(&m, &proposals, 1e6, false).unwrap();
        assert!(d.g_update < d.g_no_update);
        assert_relative_eq!(d.p_update, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn style_merge_is_suppressed() {
        // two sharp styles on opposite outcome levels; writing style-0
        // content into the style-1 column lowers mutual information and the
        // gate suppresses it
        let m = two_state_model(vec![4.0, 0.0625, 0.0625, 4.0]);
        let mut delta = Tensor::zeros(&[2, 2]);
        delta.set(&[0, 1], 1.0); // level 0 evidence assigned to state 1
        let proposals = vec![UpdateProposal {
            modality: 0,
            delta,
            g_no_update: 0.0,
            g_update: 0.0,
            p_update: 0.0,
        }];
        let d = gate_updates(&m, &proposals, 8.0, false).unwrap();
        assert!(
            d.g_update > d.g_no_update,
            "merging should lower MI: G_yes {} vs G_no {}",
            d.g_update,
            d.g_no_update
        );
        assert!(d.p_update < 0.5);
    }

    #[test]
    fn p_update_monotone_in_g_difference() {
        let alpha = 8.0;
        let mut last = 1.0;
        for dg in [-1.0, -0.5, 0.0, 0.5, 1.0] {
            let gate = softmax(&[0.0, -dg], alpha).unwrap();
            let p = gate.probs()[1];
            assert!(p <= last + 1e-12);
            last = p;
        }
    }

    #[test]
    fn gated_update_accumulates_counts_exactly() {
        // N confident epochs on a fixed (state, outcome) pair: the count
        // grows by the sum of gate probabilities times the per-epoch mass
        let mut m = two_state_model(vec![2.0, 0.0625, 0.0625, 2.0]);
        let b = beliefs_with(
            vec![vec![Categorical::one_hot(2, 0); 2]],
            vec![Categorical::one_hot(1, 0)],
            true,
        );
        let epoch = Epoch(vec![
            Observation(vec![Categorical::one_hot(2, 0)]),
            Observation(vec![Categorical::one_hot(2, 0)]),
        ]);
        let initial = m.modalities[0].likelihood.counts.get(&[0, 0]);
        let mut expected = initial;
        for _ in 0..4 {
            let proposals = propose_likelihood_updates(&m, &epoch, &b).unwrap();
            assert_relative_eq!(proposals[0].delta.total(), 2.0, epsilon = 1e-12);
            let (next, scored) = gated_update(&m, &proposals, 8.0, false).unwrap();
            expected += scored[0].p_update * 2.0;
            m = next;
            assert_relative_eq!(
                m.modalities[0].likelihood.counts.get(&[0, 0]),
                expected,
                epsilon = 1e-12
            );
        }
        // counts never decrease, positivity preserved
        assert!(m.modalities[0].likelihood.counts.data().iter().all(|&c| c > 0.0));
        assert!(m.modalities[0].likelihood.counts.get(&[0, 0]) >= initial);
    }

    #[test]
    fn update_transitions_requires_smoothed() {
        let m = two_state_model(vec![4.0, 1.0, 1.0, 4.0]);
        let b = beliefs_with(
            vec![vec![Categorical::one_hot(2, 0); 2]],
            vec![Categorical::one_hot(1, 0)],
            false,
        );
        assert!(matches!(update_transitions(&m, &b), Err(Error::Contract(_))));
    }

    #[test]
    fn deterministic_shift_adds_one_off_diagonal_count() {
        let mut m = two_state_model(vec![4.0, 1.0, 1.0, 4.0]);
        m.factors[0] = Factor::new("factor-0", 2, 2, 1.0 / 16.0);
        m.modalities[0].likelihood = DirichletTensor::new(
            Tensor::from_vec(&[2, 2], vec![4.0, 1.0, 1.0, 4.0]).unwrap(),
            vec!["obs".into(), "factor-0".into()],
        );
        let b = beliefs_with(
            vec![vec![Categorical::one_hot(2, 0), Categorical::one_hot(2, 1)]],
            vec![Categorical::one_hot(2, 1)],
            true,
        );
        let before = m.factors[0].transition.counts.clone();
        let after = update_transitions(&m, &b).unwrap();
        let b_after = &after.factors[0].transition.counts;
        assert_relative_eq!(
            b_after.get(&[1, 0, 1]) - before.get(&[1, 0, 1]),
            1.0,
            epsilon = 1e-12
        );
        // total added mass for the flexible slice is exactly one
        let added: f64 = b_after.total() - before.total();
        assert_relative_eq!(added, 1.0, epsilon = 1e-12);
        // identity slice untouched off the diagonal
        assert_eq!(b_after.get(&[1, 0, 0]), 0.0);
    }

    #[test]
    fn split_path_posterior_spreads_increment() {
        let mut m = two_state_model(vec![4.0, 1.0, 1.0, 4.0]);
        m.factors[0] = Factor::new("factor-0", 2, 3, 1.0 / 16.0);
        m.modalities[0].likelihood = DirichletTensor::new(
            Tensor::from_vec(&[2, 2], vec![4.0, 1.0, 1.0, 4.0]).unwrap(),
            vec!["obs".into(), "factor-0".into()],
        );
        let b = beliefs_with(
            vec![vec![Categorical::one_hot(2, 0), Categorical::one_hot(2, 1)]],
            vec![Categorical::new(vec![0.0, 0.5, 0.5]).unwrap()],
            true,
        );
        let after = update_transitions(&m, &b).unwrap();
        let t = &after.factors[0].transition.counts;
        let c = m.concentration;
        assert_relative_eq!(t.get(&[1, 0, 1]), c + 0.5, epsilon = 1e-12);
        assert_relative_eq!(t.get(&[1, 0, 2]), c + 0.5, epsilon = 1e-12);
    }

    #[test]
    fn learning_after_inference_round_trip() {
        // smoothed inference feeding the learner leaves a valid model
        let m = two_state_model(vec![9.0, 1.0, 1.0, 9.0]);
        let epoch = Epoch(vec![
            Observation(vec![Categorical::one_hot(2, 0)]),
            Observation(vec![Categorical::one_hot(2, 0)]),
        ]);
        let beliefs = infer_epoch(&m, &epoch, InferMode::Smooth).unwrap();
        let proposals = propose_likelihood_updates(&m, &epoch, &beliefs).unwrap();
        let (m2, _) = gated_update(&m, &proposals, 8.0, false).unwrap();
        let m3 = update_transitions(&m2, &beliefs).unwrap();
        assert!(m3.validate().is_empty());
    }
}
