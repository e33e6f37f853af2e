//! Curriculum generation: emit the ordered observation stream that lets a
//! model be learned from scratch — per factor, the outcomes of every hidden
//! state under the stationary path, then every non-stationary path from
//! every starting state, all under the first state and path of the other
//! factors.

use sprout_core::error::Result;
use sprout_core::tensor::{AxisWeight, Categorical};
use sprout_core::{Epoch, GenerativeModel, Observation};

/// Predicted observation for a per-factor state distribution.
fn predict_observation(
    m: &GenerativeModel,
    states: &[Vec<f64>],
) -> Result<Observation> {
    let mut modalities = Vec::with_capacity(m.modalities.len());
    for g in 0..m.modalities.len() {
        let probs = m.likelihood_probs(g)?;
        let parents = m.parent_indices(g)?;
        let mut weights: Vec<AxisWeight> = vec![AxisWeight::Free];
        for &p in &parents {
            weights.push(AxisWeight::Weights(&states[p]));
        }
        let q = probs.weighted_marginal(&weights)?;
        modalities.push(Categorical::from_weights(&q)?);
    }
    Ok(Observation(modalities))
}

/// Exact transcription of the teaching routine: for each factor in order,
/// (a) each hidden state generates a stationary epoch under the first path,
/// then (b) each non-stationary path generates a transition epoch from
/// every starting state; other factors sit at their first state and path.
/// Epochs hold `epoch_len` observations (stationary) or the start plus
/// `epoch_len - 1` propagated steps.
pub fn generate_curriculum(m: &GenerativeModel, epoch_len: usize) -> Result<Vec<Epoch>> {
    assert!(epoch_len >= 2, "transition epochs need at least two steps");
    let mut epochs = Vec::new();
    let one_hot = |f: usize, k: usize| -> Vec<f64> {
        let mut v = vec![0.0; m.factors[f].n_states];
        v[k] = 1.0;
        v
    };

    for f in 0..m.factors.len() {
        let base: Vec<Vec<f64>> = (0..m.factors.len()).map(|i| one_hot(i, 0)).collect();

        // (a) stationary pairs for every hidden state
        for s in 0..m.factors[f].n_states {
            let mut states = base.clone();
            states[f] = one_hot(f, s);
            let o = predict_observation(m, &states)?;
            epochs.push(Epoch(vec![o; epoch_len]));
        }

        // (b) every non-stationary path from every starting state
        let transition = m.transition_probs(f)?;
        for u in 1..m.factors[f].n_paths {
            for s in 0..m.factors[f].n_states {
                let mut states = base.clone();
                states[f] = one_hot(f, s);
                let mut obs = vec![predict_observation(m, &states)?];
                for _ in 1..epoch_len {
                    let next = transition.weighted_marginal(&[
                        AxisWeight::Free,
                        AxisWeight::Weights(&states[f]),
                        AxisWeight::Weights(&{
                            let mut p = vec![0.0; m.factors[f].n_paths];
                            p[u] = 1.0;
                            p
                        }),
                    ])?;
                    states[f] = next;
                    obs.push(predict_observation(m, &states)?);
                }
                epochs.push(Epoch(obs));
            }
        }
    }
    Ok(epochs)
}
