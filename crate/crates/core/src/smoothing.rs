//! Action-smoothness regularizers and the composite policy-loss assembler.
//!
//! Two families are implemented behind one configuration type:
//!
//! * spatial — penalize action change across nearby states: Gaussian-ball
//!   sampling (`caps_gaussian`), segment interpolation toward the next state
//!   (`l2c2_interp`), or the transition-aware pair of losses (`asap`) that
//!   couples the action head to the prediction head with stop-gradients in
//!   both directions;
//! * temporal — penalize action change across consecutive steps: first-order
//!   difference (`caps_first_order`) or the normalized second-order
//!   difference (`grad_caps`).
//!
//! Every loss is the batch mean of a squared L2 distance between
//! deterministic squashed action means, built on the tape so gradients flow
//! into the actor. Weighted terms enter the total loss only when their
//! weight is nonzero; with all weights zero the assembled loss *is* the
//! surrogate node, so disabling regularization is bit-exact.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::{Env, EnvRng};
use crate::error::{Error, Result};
use crate::policy::{Actor, ActorVars};
use crate::tape::VarId;
use crate::tensor::Tensor;
use crate::Tape64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialMethod {
    None,
    CapsGaussian,
    L2c2Interp,
    Asap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalMethod {
    None,
    CapsFirstOrder,
    GradCaps,
}

impl std::str::FromStr for SpatialMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(SpatialMethod::None),
            "caps_gaussian" => Ok(SpatialMethod::CapsGaussian),
            "l2c2_interp" => Ok(SpatialMethod::L2c2Interp),
            "asap" => Ok(SpatialMethod::Asap),
            other => Err(Error::contract(format!(
                "unknown spatial method '{other}' (none|caps_gaussian|l2c2_interp|asap)"
            ))),
        }
    }
}

impl std::fmt::Display for SpatialMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SpatialMethod::None => "none",
            SpatialMethod::CapsGaussian => "caps_gaussian",
            SpatialMethod::L2c2Interp => "l2c2_interp",
            SpatialMethod::Asap => "asap",
        })
    }
}

impl std::str::FromStr for TemporalMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(TemporalMethod::None),
            "caps_first_order" => Ok(TemporalMethod::CapsFirstOrder),
            "grad_caps" => Ok(TemporalMethod::GradCaps),
            other => Err(Error::contract(format!(
                "unknown temporal method '{other}' (none|caps_first_order|grad_caps)"
            ))),
        }
    }
}

impl std::fmt::Display for TemporalMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TemporalMethod::None => "none",
            TemporalMethod::CapsFirstOrder => "caps_first_order",
            TemporalMethod::GradCaps => "grad_caps",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularizerSpec {
    pub spatial: SpatialMethod,
    pub temporal: TemporalMethod,
    pub lambda_s: f64,
    pub lambda_p: f64,
    pub lambda_t: f64,
    /// Std of the Gaussian state perturbation used by `caps_gaussian`.
    pub caps_sigma: f64,
    /// Stability constant in the grad-caps denominator.
    pub eps_t: f64,
}

impl Default for RegularizerSpec {
    fn default() -> Self {
        RegularizerSpec {
            spatial: SpatialMethod::None,
            temporal: TemporalMethod::None,
            lambda_s: 0.5,
            lambda_p: 0.1,
            lambda_t: 0.25,
            caps_sigma: 0.05,
            eps_t: 1e-3,
        }
    }
}

impl RegularizerSpec {
    /// A spec with no active terms (plain PPO).
    pub fn none() -> Self {
        RegularizerSpec { lambda_s: 0.0, lambda_p: 0.0, lambda_t: 0.0, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda_s < 0.0 || self.lambda_p < 0.0 || self.lambda_t < 0.0 {
            return Err(Error::contract("regularizer weights must be non-negative"));
        }
        if !(self.eps_t > 0.0) {
            return Err(Error::contract("eps_t must be positive"));
        }
        if self.caps_sigma < 0.0 {
            return Err(Error::contract("caps_sigma must be non-negative"));
        }
        if self.lambda_p > 0.0 && self.spatial != SpatialMethod::Asap {
            return Err(Error::contract(
                "lambda_p applies only to the asap spatial method; set it to 0 otherwise",
            ));
        }
        Ok(())
    }

    /// True when some weighted term would actually enter the loss.
    pub fn any_active(&self) -> bool {
        (self.spatial != SpatialMethod::None && (self.lambda_s > 0.0 || self.lambda_p > 0.0))
            || (self.temporal != TemporalMethod::None && self.lambda_t > 0.0)
    }
}

/// One three-step window of a trajectory, in observation space. Only windows
/// that do not cross an episode boundary are marked valid.
#[derive(Clone, Debug)]
pub struct TransitionTriple {
    pub s_prev: Vec<f64>,
    pub a_prev: Vec<f64>,
    pub s_cur: Vec<f64>,
    pub a_cur: Vec<f64>,
    pub s_next: Vec<f64>,
    pub a_next: Vec<f64>,
    pub reward: f64,
    pub valid: bool,
}

fn ensure_batch(triples: &[TransitionTriple]) -> Result<()> {
    if triples.is_empty() {
        return Err(Error::contract("smoothness loss needs a non-empty batch"));
    }
    if triples.iter().any(|t| !t.valid) {
        return Err(Error::contract("smoothness loss received an invalid triple"));
    }
    Ok(())
}

fn rows(triples: &[TransitionTriple], pick: impl Fn(&TransitionTriple) -> &[f64]) -> Result<Tensor<f64>> {
    let rows: Vec<Vec<f64>> = triples.iter().map(|t| pick(t).to_vec()).collect();
    Tensor::from_rows(&rows)
}

/// Batch mean of rowwise squared L2 distances between two `[B, d]` nodes.
pub fn mean_squared_rowdist(tape: &mut Tape64, a: VarId, b: VarId) -> Result<VarId> {
    let diff = tape.sub(a, b)?;
    let sq = tape.square(diff)?;
    let per_row = tape.sum_rows(sq)?;
    tape.mean(per_row)
}

/// Couples the action head to a frozen copy of the prediction head's
/// forecast: mean of `|| mu(s_cur) - stopgrad(pred(s_prev)) ||^2`.
pub fn loss_asap_spatial(
    actor: &Actor,
    tape: &mut Tape64,
    vars: &ActorVars,
    triples: &[TransitionTriple],
) -> Result<VarId> {
    ensure_batch(triples)?;
    let obs_prev = rows(triples, |t| &t.s_prev)?;
    let obs_cur = rows(triples, |t| &t.s_cur)?;
    let prev = tape.constant(obs_prev);
    let cur = tape.constant(obs_cur);
    let pred = actor.graph_prediction_mean(tape, vars, prev)?;
    let target = tape.stopgrad(pred);
    let mean = actor.graph_action_mean(tape, vars, cur)?;
    mean_squared_rowdist(tape, mean, target)
}

/// Trains the prediction head toward a frozen copy of the action head:
/// mean of `|| pred(s_prev) - stopgrad(mu(s_cur)) ||^2`.
pub fn loss_asap_pred(
    actor: &Actor,
    tape: &mut Tape64,
    vars: &ActorVars,
    triples: &[TransitionTriple],
) -> Result<VarId> {
    ensure_batch(triples)?;
    let obs_prev = rows(triples, |t| &t.s_prev)?;
    let obs_cur = rows(triples, |t| &t.s_cur)?;
    let prev = tape.constant(obs_prev);
    let cur = tape.constant(obs_cur);
    let mean = actor.graph_action_mean(tape, vars, cur)?;
    let target = tape.stopgrad(mean);
    let pred = actor.graph_prediction_mean(tape, vars, prev)?;
    mean_squared_rowdist(tape, pred, target)
}

/// Normalized second-order difference given three `[B, d]` action nodes:
/// mean of `|| (a_next - 2 a_cur + a_prev) / (tanh(a_next - a_prev) + eps) ||^2`
/// elementwise, with the denominator's magnitude floored at `eps/2` (the raw
/// formula is singular where `tanh` of the spread approaches `-eps`).
pub fn grad_caps_from_actions(
    tape: &mut Tape64,
    a_prev: VarId,
    a_cur: VarId,
    a_next: VarId,
    eps_t: f64,
) -> Result<VarId> {
    if !(eps_t > 0.0) {
        return Err(Error::contract("eps_t must be positive"));
    }
    let ends = tape.add(a_next, a_prev)?;
    let twice_mid = tape.scale(a_cur, 2.0)?;
    let second = tape.sub(ends, twice_mid)?;
    let spread = tape.sub(a_next, a_prev)?;
    let t = tape.tanh(spread)?;
    let denom_raw = tape.offset(t, eps_t)?;
    let denom = tape.signed_floor(denom_raw, eps_t / 2.0)?;
    let ratio = tape.div(second, denom)?;
    let sq = tape.square(ratio)?;
    let per_row = tape.sum_rows(sq)?;
    tape.mean(per_row)
}

/// Second-order temporal loss on recomputed action means.
pub fn loss_grad_caps_temporal(
    actor: &Actor,
    tape: &mut Tape64,
    vars: &ActorVars,
    triples: &[TransitionTriple],
    eps_t: f64,
) -> Result<VarId> {
    ensure_batch(triples)?;
    let prev = tape.constant(rows(triples, |t| &t.s_prev)?);
    let cur = tape.constant(rows(triples, |t| &t.s_cur)?);
    let next = tape.constant(rows(triples, |t| &t.s_next)?);
    let a_prev = actor.graph_action_mean(tape, vars, prev)?;
    let a_cur = actor.graph_action_mean(tape, vars, cur)?;
    let a_next = actor.graph_action_mean(tape, vars, next)?;
    grad_caps_from_actions(tape, a_prev, a_cur, a_next, eps_t)
}

/// First-order temporal loss: mean of `|| mu(s_cur) - mu(s_next) ||^2`.
pub fn loss_caps_temporal(
    actor: &Actor,
    tape: &mut Tape64,
    vars: &ActorVars,
    triples: &[TransitionTriple],
) -> Result<VarId> {
    ensure_batch(triples)?;
    let cur = tape.constant(rows(triples, |t| &t.s_cur)?);
    let next = tape.constant(rows(triples, |t| &t.s_next)?);
    let a_cur = actor.graph_action_mean(tape, vars, cur)?;
    let a_next = actor.graph_action_mean(tape, vars, next)?;
    mean_squared_rowdist(tape, a_cur, a_next)
}

/// Gaussian-ball spatial loss: mean of `|| mu(s_cur) - mu(s_cur + sigma z) ||^2`.
pub fn loss_caps_spatial(
    actor: &Actor,
    tape: &mut Tape64,
    vars: &ActorVars,
    triples: &[TransitionTriple],
    sigma: f64,
    rng: &mut EnvRng,
) -> Result<VarId> {
    ensure_batch(triples)?;
    if sigma < 0.0 {
        return Err(Error::contract("caps sigma must be non-negative"));
    }
    let cur = rows(triples, |t| &t.s_cur)?;
    let perturbed_data: Vec<f64> = cur
        .data()
        .iter()
        .map(|&x| {
            let z: f64 = rng.sample(StandardNormal);
            x + sigma * z
        })
        .collect();
    let perturbed = Tensor::new(cur.shape().to_vec(), perturbed_data)?;
    let cur = tape.constant(cur);
    let near = tape.constant(perturbed);
    let a = actor.graph_action_mean(tape, vars, cur)?;
    let b = actor.graph_action_mean(tape, vars, near)?;
    mean_squared_rowdist(tape, a, b)
}

/// Interpolation spatial loss with explicit interpolation coefficients
/// (one `u` in `[0, 1]` per triple).
pub fn loss_l2c2_with_u(
    actor: &Actor,
    tape: &mut Tape64,
    vars: &ActorVars,
    triples: &[TransitionTriple],
    us: &[f64],
) -> Result<VarId> {
    ensure_batch(triples)?;
    if us.len() != triples.len() {
        return Err(Error::contract("one interpolation coefficient per triple"));
    }
    let interp_rows: Vec<Vec<f64>> = triples
        .iter()
        .zip(us)
        .map(|(t, &u)| {
            t.s_cur
                .iter()
                .zip(&t.s_next)
                .map(|(&c, &n)| c + (n - c) * u)
                .collect()
        })
        .collect();
    let cur = tape.constant(rows(triples, |t| &t.s_cur)?);
    let interp = tape.constant(Tensor::from_rows(&interp_rows)?);
    let a = actor.graph_action_mean(tape, vars, cur)?;
    let b = actor.graph_action_mean(tape, vars, interp)?;
    mean_squared_rowdist(tape, a, b)
}

/// Interpolation spatial loss: mean of `|| mu(s_cur) - mu(s~) ||^2` with
/// `s~ = s_cur + (s_next - s_cur) u`, `u ~ Uniform(0,1)` scalar per sample.
pub fn loss_l2c2_spatial(
    actor: &Actor,
    tape: &mut Tape64,
    vars: &ActorVars,
    triples: &[TransitionTriple],
    rng: &mut EnvRng,
) -> Result<VarId> {
    ensure_batch(triples)?;
    let us: Vec<f64> = (0..triples.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
    loss_l2c2_with_u(actor, tape, vars, triples, &us)
}

/// The weighted regularizer terms active for one minibatch.
#[derive(Clone, Copy, Debug, Default)]
pub struct RegTerms {
    pub l_s: Option<VarId>,
    pub l_p: Option<VarId>,
    pub l_t: Option<VarId>,
}

/// Builds whichever loss terms the spec activates. Terms whose weight is
/// zero are not built at all, so a disabled regularizer leaves the graph —
/// and therefore the parameter trajectory — untouched. An empty triple list
/// produces no terms (a minibatch may legitimately contain none).
pub fn build_regularizers(
    actor: &Actor,
    tape: &mut Tape64,
    vars: &ActorVars,
    triples: &[TransitionTriple],
    spec: &RegularizerSpec,
    rng: &mut EnvRng,
) -> Result<RegTerms> {
    let mut terms = RegTerms::default();
    if triples.is_empty() {
        return Ok(terms);
    }
    if spec.lambda_s > 0.0 {
        terms.l_s = match spec.spatial {
            SpatialMethod::None => None,
            SpatialMethod::CapsGaussian => {
                Some(loss_caps_spatial(actor, tape, vars, triples, spec.caps_sigma, rng)?)
            }
            SpatialMethod::L2c2Interp => Some(loss_l2c2_spatial(actor, tape, vars, triples, rng)?),
            SpatialMethod::Asap => Some(loss_asap_spatial(actor, tape, vars, triples)?),
        };
    }
    if spec.lambda_p > 0.0 && spec.spatial == SpatialMethod::Asap {
        terms.l_p = Some(loss_asap_pred(actor, tape, vars, triples)?);
    }
    if spec.lambda_t > 0.0 {
        terms.l_t = match spec.temporal {
            TemporalMethod::None => None,
            TemporalMethod::CapsFirstOrder => Some(loss_caps_temporal(actor, tape, vars, triples)?),
            TemporalMethod::GradCaps => {
                Some(loss_grad_caps_temporal(actor, tape, vars, triples, spec.eps_t)?)
            }
        };
    }
    Ok(terms)
}

/// `total = J_pi + lambda_s L_S + lambda_p L_P + lambda_t L_T`, adding only
/// the terms that exist. With no active terms the returned node *is* `j_pi`.
pub fn assemble_policy_loss(
    tape: &mut Tape64,
    j_pi: VarId,
    spec: &RegularizerSpec,
    terms: &RegTerms,
) -> Result<VarId> {
    let mut total = j_pi;
    if let Some(l_s) = terms.l_s {
        if spec.lambda_s > 0.0 {
            let w = tape.scale(l_s, spec.lambda_s)?;
            total = tape.add(total, w)?;
        }
    }
    if let Some(l_p) = terms.l_p {
        if spec.lambda_p > 0.0 {
            let w = tape.scale(l_p, spec.lambda_p)?;
            total = tape.add(total, w)?;
        }
    }
    if let Some(l_t) = terms.l_t {
        if spec.lambda_t > 0.0 {
            let w = tape.scale(l_t, spec.lambda_t)?;
            total = tape.add(total, w)?;
        }
    }
    Ok(total)
}

/// Diagnostic for the expectation form of the spatial objective: squared
/// distance between the policy's action at one realized next state and its
/// average action over the distribution of similar next states. Not a
/// training loss.
pub fn estimate_expectation_loss(
    policy_mean: impl Fn(&[f64]) -> Result<Vec<f64>>,
    env: &mut Env,
    s_prev: &[f64],
    a_prev: &[f64],
    n: usize,
) -> Result<f64> {
    let samples = env.sample_similar_states(s_prev, a_prev, n + 1)?;
    let (anchor, rest) = samples.split_first().expect("n + 1 >= 3 samples");
    let anchor_action = policy_mean(&env.observe(anchor))?;
    let dim = anchor_action.len();
    let mut mean_action = vec![0.0; dim];
    for s in rest {
        let a = policy_mean(&env.observe(s))?;
        for (m, v) in mean_action.iter_mut().zip(&a) {
            *m += v;
        }
    }
    for m in mean_action.iter_mut() {
        *m /= rest.len() as f64;
    }
    Ok(anchor_action
        .iter()
        .zip(&mean_action)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::Actor;
    use rand_chacha::rand_core::SeedableRng;

    fn rng(seed: u64) -> EnvRng {
        EnvRng::seed_from_u64(seed)
    }

    fn test_actor(seed: u64) -> Actor {
        Actor::new(3, 2, 8, &[-1.0, -1.0], &[1.0, 1.0], &mut rng(seed))
    }

    /// Actor whose both heads always emit the center of the bounds.
    fn constant_actor(seed: u64) -> Actor {
        let mut a = test_actor(seed);
        for t in [&mut a.action_head, &mut a.prediction_head] {
            for x in t.w.data_mut() {
                *x = 0.0;
            }
            for x in t.b.data_mut() {
                *x = 0.0;
            }
        }
        a
    }

    fn random_triples(n: usize, obs_dim: usize, act_dim: usize, seed: u64) -> Vec<TransitionTriple> {
        let mut r = rng(seed);
        (0..n)
            .map(|_| {
                let v = |r: &mut EnvRng, d: usize| (0..d).map(|_| r.gen_range(-1.0..1.0)).collect();
                TransitionTriple {
                    s_prev: v(&mut r, obs_dim),
                    a_prev: v(&mut r, act_dim),
                    s_cur: v(&mut r, obs_dim),
                    a_cur: v(&mut r, act_dim),
                    s_next: v(&mut r, obs_dim),
                    a_next: v(&mut r, act_dim),
                    reward: 0.0,
                    valid: true,
                }
            })
            .collect()
    }

    fn const_actions(tape: &mut Tape64, rows: &[Vec<f64>]) -> VarId {
        tape.constant(Tensor::from_rows(rows).unwrap())
    }

    #[test]
    fn squared_rowdist_examples() {
        let mut tape = Tape64::new();
        let a = const_actions(&mut tape, &[vec![1.0, 0.0]]);
        let b = const_actions(&mut tape, &[vec![0.0, 1.0]]);
        let d = mean_squared_rowdist(&mut tape, a, b).unwrap();
        assert_eq!(tape.value(d).item().unwrap(), 2.0);

        let mut tape = Tape64::new();
        let a = const_actions(&mut tape, &[vec![0.2]]);
        let b = const_actions(&mut tape, &[vec![-0.3]]);
        let d = mean_squared_rowdist(&mut tape, a, b).unwrap();
        assert!((tape.value(d).item().unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn grad_caps_formula_cases() {
        // Linear ramp: zero second difference.
        let mut tape = Tape64::new();
        let p = const_actions(&mut tape, &[vec![0.0]]);
        let c = const_actions(&mut tape, &[vec![1.0]]);
        let n = const_actions(&mut tape, &[vec![2.0]]);
        let l = grad_caps_from_actions(&mut tape, p, c, n, 1e-3).unwrap();
        assert_eq!(tape.value(l).item().unwrap(), 0.0);

        // Spike: spread 0, denominator eps, (-2 / 1e-3)^2 = 4e6.
        let mut tape = Tape64::new();
        let p = const_actions(&mut tape, &[vec![0.0]]);
        let c = const_actions(&mut tape, &[vec![1.0]]);
        let n = const_actions(&mut tape, &[vec![0.0]]);
        let l = grad_caps_from_actions(&mut tape, p, c, n, 1e-3).unwrap();
        assert!((tape.value(l).item().unwrap() - 4.0e6).abs() < 1.0);

        // All zero.
        let mut tape = Tape64::new();
        let p = const_actions(&mut tape, &[vec![0.0]]);
        let c = const_actions(&mut tape, &[vec![0.0]]);
        let n = const_actions(&mut tape, &[vec![0.0]]);
        let l = grad_caps_from_actions(&mut tape, p, c, n, 1e-3).unwrap();
        assert_eq!(tape.value(l).item().unwrap(), 0.0);
    }

    #[test]
    fn grad_caps_depends_only_on_first_differences() {
        let eval = |p: f64, c: f64, n: f64| {
            let mut tape = Tape64::new();
            let pv = const_actions(&mut tape, &[vec![p]]);
            let cv = const_actions(&mut tape, &[vec![c]]);
            let nv = const_actions(&mut tape, &[vec![n]]);
            let l = grad_caps_from_actions(&mut tape, pv, cv, nv, 1e-3).unwrap();
            tape.value(l).item().unwrap()
        };
        // Same first differences (+1, -1) after shifting by 5.
        assert_eq!(eval(0.0, 1.0, 0.0).to_bits(), eval(5.0, 6.0, 5.0).to_bits());
    }

    #[test]
    fn grad_caps_and_first_order_differ_on_a_spike() {
        let mut tape = Tape64::new();
        let c = const_actions(&mut tape, &[vec![1.0]]);
        let n = const_actions(&mut tape, &[vec![0.0]]);
        let first_order = mean_squared_rowdist(&mut tape, c, n).unwrap();
        assert_eq!(tape.value(first_order).item().unwrap(), 1.0);
        let p = const_actions(&mut tape, &[vec![0.0]]);
        let second_order = grad_caps_from_actions(&mut tape, p, c, n, 1e-3).unwrap();
        assert!(tape.value(second_order).item().unwrap() > 1.0e6);
    }

    #[test]
    fn stop_gradient_contracts_hold() {
        let actor = test_actor(1);
        let triples = random_triples(6, 3, 2, 2);

        let mut tape = Tape64::new();
        let vars = actor.insert_leaves(&mut tape);
        let l_s = loss_asap_spatial(&actor, &mut tape, &vars, &triples).unwrap();
        tape.backward(l_s).unwrap();
        assert!(tape.grad(vars.prediction_head_w).unwrap().data().iter().all(|&g| g == 0.0));
        assert!(tape.grad(vars.prediction_head_b).unwrap().data().iter().all(|&g| g == 0.0));
        assert!(tape.grad(vars.action_head_w).unwrap().data().iter().any(|&g| g != 0.0));

        let mut tape = Tape64::new();
        let vars = actor.insert_leaves(&mut tape);
        let l_p = loss_asap_pred(&actor, &mut tape, &vars, &triples).unwrap();
        tape.backward(l_p).unwrap();
        assert!(tape.grad(vars.action_head_w).unwrap().data().iter().all(|&g| g == 0.0));
        assert!(tape.grad(vars.action_head_b).unwrap().data().iter().all(|&g| g == 0.0));
        assert!(tape.grad(vars.prediction_head_w).unwrap().data().iter().any(|&g| g != 0.0));
    }

    #[test]
    fn all_losses_vanish_for_a_constant_policy() {
        let actor = constant_actor(3);
        let triples = random_triples(5, 3, 2, 4);
        let mut tape = Tape64::new();
        let vars = actor.insert_leaves(&mut tape);
        let checks = [
            loss_asap_spatial(&actor, &mut tape, &vars, &triples).unwrap(),
            loss_asap_pred(&actor, &mut tape, &vars, &triples).unwrap(),
            loss_caps_temporal(&actor, &mut tape, &vars, &triples).unwrap(),
            loss_grad_caps_temporal(&actor, &mut tape, &vars, &triples, 1e-3).unwrap(),
            loss_caps_spatial(&actor, &mut tape, &vars, &triples, 0.1, &mut rng(5)).unwrap(),
            loss_l2c2_spatial(&actor, &mut tape, &vars, &triples, &mut rng(6)).unwrap(),
        ];
        for c in checks {
            assert_eq!(tape.value(c).item().unwrap(), 0.0);
        }
    }

    #[test]
    fn losses_are_non_negative_on_random_nets() {
        let actor = test_actor(7);
        let triples = random_triples(8, 3, 2, 8);
        let mut tape = Tape64::new();
        let vars = actor.insert_leaves(&mut tape);
        let vals = [
            loss_asap_spatial(&actor, &mut tape, &vars, &triples).unwrap(),
            loss_asap_pred(&actor, &mut tape, &vars, &triples).unwrap(),
            loss_caps_temporal(&actor, &mut tape, &vars, &triples).unwrap(),
            loss_grad_caps_temporal(&actor, &mut tape, &vars, &triples, 1e-3).unwrap(),
            loss_caps_spatial(&actor, &mut tape, &vars, &triples, 0.05, &mut rng(9)).unwrap(),
            loss_l2c2_spatial(&actor, &mut tape, &vars, &triples, &mut rng(10)).unwrap(),
        ];
        for v in vals {
            assert!(tape.value(v).item().unwrap() >= 0.0);
        }
    }

    #[test]
    fn caps_spatial_zero_sigma_and_determinism() {
        let actor = test_actor(11);
        let triples = random_triples(4, 3, 2, 12);
        let mut tape = Tape64::new();
        let vars = actor.insert_leaves(&mut tape);
        let zero = loss_caps_spatial(&actor, &mut tape, &vars, &triples, 0.0, &mut rng(1)).unwrap();
        assert_eq!(tape.value(zero).item().unwrap(), 0.0);
        let a = loss_caps_spatial(&actor, &mut tape, &vars, &triples, 0.05, &mut rng(2)).unwrap();
        let b = loss_caps_spatial(&actor, &mut tape, &vars, &triples, 0.05, &mut rng(2)).unwrap();
        assert_eq!(
            tape.value(a).item().unwrap().to_bits(),
            tape.value(b).item().unwrap().to_bits()
        );
    }

    #[test]
    fn l2c2_degenerate_and_endpoint_cases() {
        let actor = test_actor(13);
        // s_next == s_cur: interpolation cannot move.
        let mut triples = random_triples(4, 3, 2, 14);
        for t in triples.iter_mut() {
            t.s_next = t.s_cur.clone();
        }
        let mut tape = Tape64::new();
        let vars = actor.insert_leaves(&mut tape);
        let l = loss_l2c2_spatial(&actor, &mut tape, &vars, &triples, &mut rng(15)).unwrap();
        assert_eq!(tape.value(l).item().unwrap(), 0.0);

        // u = 0 pins s~ to s_cur; u = 1 pins it to s_next (== caps temporal).
        let triples = random_triples(4, 3, 2, 16);
        let mut tape = Tape64::new();
        let vars = actor.insert_leaves(&mut tape);
        let zeros = vec![0.0; triples.len()];
        let ones = vec![1.0; triples.len()];
        let at0 = loss_l2c2_with_u(&actor, &mut tape, &vars, &triples, &zeros).unwrap();
        assert_eq!(tape.value(at0).item().unwrap(), 0.0);
        let at1 = loss_l2c2_with_u(&actor, &mut tape, &vars, &triples, &ones).unwrap();
        let caps = loss_caps_temporal(&actor, &mut tape, &vars, &triples).unwrap();
        assert_eq!(
            tape.value(at1).item().unwrap().to_bits(),
            tape.value(caps).item().unwrap().to_bits()
        );
    }

    /// Monte-Carlo check of the Gaussian perturbation semantics: to first
    /// order the expected loss is sigma^2 times the squared Frobenius norm
    /// of the policy Jacobian at the anchor state.
    #[test]
    fn caps_spatial_expectation_matches_jacobian_norm() {
        let actor = test_actor(17);
        let anchor = vec![0.3, -0.1, 0.5];
        let sigma = 1e-4;
        // Jacobian by central differences on the direct forward pass.
        let h = 1e-6;
        let mut frob_sq = 0.0;
        for j in 0..3 {
            let mut plus = anchor.clone();
            let mut minus = anchor.clone();
            plus[j] += h;
            minus[j] -= h;
            let ap = actor.act_mean(&plus).unwrap();
            let am = actor.act_mean(&minus).unwrap();
            for k in 0..2 {
                let d = (ap[k] - am[k]) / (2.0 * h);
                frob_sq += d * d;
            }
        }
        let n = 100_000;
        let triples: Vec<TransitionTriple> = (0..n)
            .map(|_| TransitionTriple {
                s_prev: anchor.clone(),
                a_prev: vec![0.0; 2],
                s_cur: anchor.clone(),
                a_cur: vec![0.0; 2],
                s_next: anchor.clone(),
                a_next: vec![0.0; 2],
                reward: 0.0,
                valid: true,
            })
            .collect();
        let mut tape = Tape64::new();
        let vars = actor.insert_leaves(&mut tape);
        let l = loss_caps_spatial(&actor, &mut tape, &vars, &triples, sigma, &mut rng(18)).unwrap();
        let observed = tape.value(l).item().unwrap();
        let expected = sigma * sigma * frob_sq;
        let rel = (observed - expected).abs() / expected;
        assert!(rel < 0.05, "relative error {rel}: {observed} vs {expected}");
    }

    #[test]
    fn assembler_is_identity_when_disabled_and_linear_otherwise() {
        let mut tape = Tape64::new();
        let j = tape.constant(Tensor::scalar(1.0));
        let spec = RegularizerSpec::none();
        let total = assemble_policy_loss(&mut tape, j, &spec, &RegTerms::default()).unwrap();
        assert_eq!(total, j, "no active terms returns the surrogate node itself");

        let l_s = tape.constant(Tensor::scalar(2.0));
        let l_p = tape.constant(Tensor::scalar(3.0));
        let l_t = tape.constant(Tensor::scalar(4.0));
        let spec = RegularizerSpec {
            spatial: SpatialMethod::Asap,
            temporal: TemporalMethod::GradCaps,
            lambda_s: 0.5,
            lambda_p: 0.1,
            lambda_t: 0.25,
            ..Default::default()
        };
        let terms = RegTerms { l_s: Some(l_s), l_p: Some(l_p), l_t: Some(l_t) };
        let total = assemble_policy_loss(&mut tape, j, &spec, &terms).unwrap();
        assert!((tape.value(total).item().unwrap() - 3.3).abs() < 1e-12);
    }

    #[test]
    fn spec_validation_catches_misuse() {
        let mut spec = RegularizerSpec::default();
        spec.spatial = SpatialMethod::CapsGaussian;
        assert!(spec.validate().is_err(), "lambda_p > 0 without asap");
        spec.lambda_p = 0.0;
        assert!(spec.validate().is_ok());
        spec.eps_t = 0.0;
        assert!(spec.validate().is_err());
        spec.eps_t = 1e-3;
        spec.lambda_t = -0.1;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn empty_and_invalid_batches_are_rejected() {
        let actor = test_actor(19);
        let mut tape = Tape64::new();
        let vars = actor.insert_leaves(&mut tape);
        assert!(loss_asap_spatial(&actor, &mut tape, &vars, &[]).is_err());
        let mut triples = random_triples(2, 3, 2, 20);
        triples[1].valid = false;
        assert!(loss_asap_spatial(&actor, &mut tape, &vars, &triples).is_err());
    }

    #[test]
    fn expectation_loss_degenerate_cases() {
        let actor = Actor::new(2, 2, 8, &[-1.0, -1.0], &[1.0, 1.0], &mut rng(21));
        let mean = |obs: &[f64]| actor.act_mean(obs);

        // Noiseless transitions: every similar state is the same state.
        let mut env = Env::from_name("pointmass", &[("noise_bound".into(), 0.0)], 0).unwrap();
        let s = env.state().to_vec();
        let v = estimate_expectation_loss(mean, &mut env, &s, &[0.2, -0.4], 64).unwrap();
        assert!(v < 1e-12, "{v}");

        // Constant policy: same action everywhere.
        let cmean = |_obs: &[f64]| Ok(vec![0.25, -0.5]);
        let mut env = Env::from_name("pointmass", &[], 1).unwrap();
        let s = env.state().to_vec();
        let v = estimate_expectation_loss(cmean, &mut env, &s, &[0.2, -0.4], 64).unwrap();
        assert!(v < 1e-24, "{v}");
    }

    #[test]
    fn expectation_loss_respects_linear_lipschitz_bound() {
        // Linear policy a = W s on the point mass: the action moves at most
        // ||W|| times as far as the state, and all similar states live in a
        // ball of radius 2 K sigma.
        let w = [[0.7, -0.2], [0.4, 0.9]];
        let policy = |obs: &[f64]| -> Result<Vec<f64>> {
            Ok(vec![
                w[0][0] * obs[0] + w[0][1] * obs[1],
                w[1][0] * obs[0] + w[1][1] * obs[1],
            ])
        };
        let mut env = Env::from_name("pointmass", &[], 3).unwrap();
        let spec = env.spec().clone();
        let op_norm_bound = (w.iter().flat_map(|r| r.iter()).map(|x| x * x).sum::<f64>()).sqrt();
        let bound = (op_norm_bound * 2.0 * spec.noise_sensitivity * spec.noise_bound).powi(2);
        for anchor_seed in 0..20 {
            let _ = env.reset(anchor_seed);
            let s = env.state().to_vec();
            let v = estimate_expectation_loss(policy, &mut env, &s, &[0.5, 0.5], 500).unwrap();
            assert!(v <= bound, "{v} > {bound}");
        }
    }

    #[test]
    fn build_regularizers_skips_disabled_terms() {
        let actor = test_actor(23);
        let triples = random_triples(4, 3, 2, 24);
        let mut tape = Tape64::new();
        let vars = actor.insert_leaves(&mut tape);
        let nodes_before = tape.len();
        let terms = build_regularizers(
            &actor,
            &mut tape,
            &vars,
            &triples,
            &RegularizerSpec::none(),
            &mut rng(25),
        )
        .unwrap();
        assert!(terms.l_s.is_none() && terms.l_p.is_none() && terms.l_t.is_none());
        assert_eq!(tape.len(), nodes_before, "disabled spec must not touch the graph");

        let spec = RegularizerSpec {
            spatial: SpatialMethod::Asap,
            temporal: TemporalMethod::GradCaps,
            ..Default::default()
        };
        let terms =
            build_regularizers(&actor, &mut tape, &vars, &triples, &spec, &mut rng(26)).unwrap();
        assert!(terms.l_s.is_some() && terms.l_p.is_some() && terms.l_t.is_some());
    }
}
