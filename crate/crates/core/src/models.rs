//! The three parameterized families: softmax policy `π_λ`, bounded reward
//! `r_φ` and critic `Q_θ`, each a thin wrapper over an [`MlpSpec`] and a flat
//! parameter vector.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{
    backward, init_scaled_gaussian, init_standard_gaussian, mlp_eval, mlp_forward, Activation, MlpSpec,
    OutputTransform, ParamVec, Tensor,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// How a state-action pair is presented to the reward and critic networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Featurization {
    /// One-hot state followed by one-hot action, `n_states + n_actions` wide.
    Concat,
    /// One-hot over the pair itself, `n_states * n_actions` wide. A linear
    /// network on these features is an exact table.
    Joint,
}

impl Featurization {
    pub fn dim(self, n_states: usize, n_actions: usize) -> usize {
        match self {
            Featurization::Concat => n_states + n_actions,
            Featurization::Joint => n_states * n_actions,
        }
    }

    pub fn encode<T: Scalar>(self, n_states: usize, n_actions: usize, s: usize, a: usize) -> Vec<T> {
        let mut x = vec![T::zero(); self.dim(n_states, n_actions)];
        match self {
            Featurization::Concat => {
                x[s] = T::one();
                x[n_states + a] = T::one();
            }
            Featurization::Joint => x[s * n_actions + a] = T::one(),
        }
        x
    }
}

/// Network family for one model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Architecture {
    /// Hidden layers over concatenated one-hot features.
    Mlp { hidden: Vec<usize>, activation: Activation },
    /// No hidden layer; joint one-hot features for reward and critic.
    Tabular,
}

impl Architecture {
    pub fn mlp(hidden: Vec<usize>) -> Self {
        Architecture::Mlp { hidden, activation: Activation::Tanh }
    }

    fn hidden(&self) -> (Vec<usize>, Activation) {
        match self {
            Architecture::Mlp { hidden, activation } => (hidden.clone(), *activation),
            Architecture::Tabular => (Vec::new(), Activation::Tanh),
        }
    }

    fn pair_features(&self) -> Featurization {
        match self {
            Architecture::Mlp { .. } => Featurization::Concat,
            Architecture::Tabular => Featurization::Joint,
        }
    }
}

fn check_index(s: usize, a: usize, n_states: usize, n_actions: usize) -> Result<()> {
    if s >= n_states || a >= n_actions {
        return Err(Error::Dimension(format!("(s={s}, a={a}) outside {n_states}x{n_actions}")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// policy

/// Softmax policy over a one-hot state input.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyModel<T> {
    pub spec: MlpSpec,
    pub params: ParamVec<T>,
}

impl<T: Scalar> PolicyModel<T> {
    pub fn new(spec: MlpSpec, params: ParamVec<T>) -> Result<Self> {
        spec.validate()?;
        if spec.output_transform != OutputTransform::LogSoftmax {
            return Err(Error::Model("policy network must end in log_softmax".into()));
        }
        if params.len() != spec.param_count() {
            return Err(Error::Dimension(format!(
                "policy needs {} parameters, got {}",
                spec.param_count(),
                params.len()
            )));
        }
        Ok(Self { spec, params })
    }

    pub fn spec_for(n_states: usize, n_actions: usize, arch: &Architecture) -> Result<MlpSpec> {
        let (hidden, activation) = arch.hidden();
        MlpSpec::new(n_states, hidden, activation, n_actions, OutputTransform::LogSoftmax)
    }

    /// Zero parameters: the uniform policy.
    pub fn zeros(n_states: usize, n_actions: usize, arch: &Architecture) -> Result<Self> {
        let spec = Self::spec_for(n_states, n_actions, arch)?;
        let params = ParamVec::zeros(spec.param_count());
        Self::new(spec, params)
    }

    /// Gaussian init with standard deviation `1/sqrt(fan_in)`.
    pub fn init<R: Rng + ?Sized>(n_states: usize, n_actions: usize, arch: &Architecture, rng: &mut R) -> Result<Self> {
        let spec = Self::spec_for(n_states, n_actions, arch)?;
        let params = init_scaled_gaussian(&spec, rng);
        Self::new(spec, params)
    }

    pub fn n_states(&self) -> usize {
        self.spec.input_dim
    }

    pub fn n_actions(&self) -> usize {
        self.spec.output_dim
    }

    pub fn log_probs(&self, s: usize) -> Vec<T> {
        assert!(s < self.n_states(), "state {s} out of range");
        let x = Tensor::one_hot(self.n_states(), s);
        mlp_eval(&self.spec, &self.params, x.data()).expect("policy shapes validated at construction")
    }

    /// `π_λ(· | s)`
    pub fn probs(&self, s: usize) -> Vec<T> {
        self.log_probs(s).into_iter().map(|l| l.exp()).collect()
    }

    /// Action distribution of every state, indexed `[s][a]`.
    pub fn table(&self) -> Vec<Vec<T>> {
        (0..self.n_states()).map(|s| self.probs(s)).collect()
    }

    /// `∇_λ log π_λ(a | s)`
    pub fn score(&self, s: usize, a: usize) -> ParamVec<T> {
        check_index(s, a, self.n_states(), self.n_actions()).expect("score index");
        let x = Tensor::one_hot(self.n_states(), s);
        let (_, tape) = mlp_forward(&self.spec, &self.params, &x).expect("policy shapes validated");
        backward(tape, &Tensor::one_hot(self.n_actions(), a)).expect("cotangent shape")
    }

    pub fn with_params(&self, params: ParamVec<T>) -> Self {
        assert_eq!(params.len(), self.params.len());
        Self { spec: self.spec.clone(), params }
    }
}

/// `policy_dist` as a free function.
pub fn policy_dist<T: Scalar>(policy: &PolicyModel<T>, s: usize) -> Vec<T> {
    policy.probs(s)
}

/// `policy_score` as a free function.
pub fn policy_score<T: Scalar>(policy: &PolicyModel<T>, s: usize, a: usize) -> ParamVec<T> {
    policy.score(s, a)
}

// ---------------------------------------------------------------------------
// reward

/// Sigmoid-bounded reward `r_φ : S x A -> (0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardModel<T> {
    pub spec: MlpSpec,
    pub params: ParamVec<T>,
    pub features: Featurization,
    pub n_states: usize,
    pub n_actions: usize,
}

impl<T: Scalar> RewardModel<T> {
    pub fn new(
        spec: MlpSpec,
        params: ParamVec<T>,
        features: Featurization,
        n_states: usize,
        n_actions: usize,
    ) -> Result<Self> {
        spec.validate()?;
        if spec.output_transform != OutputTransform::Sigmoid || spec.output_dim != 1 {
            return Err(Error::Model("reward network must have one sigmoid output".into()));
        }
        if spec.input_dim != features.dim(n_states, n_actions) {
            return Err(Error::Dimension("reward input width does not match featurization".into()));
        }
        if params.len() != spec.param_count() {
            return Err(Error::Dimension("reward parameter count mismatch".into()));
        }
        Ok(Self { spec, params, features, n_states, n_actions })
    }

    pub fn spec_for(n_states: usize, n_actions: usize, arch: &Architecture) -> Result<MlpSpec> {
        let (hidden, activation) = arch.hidden();
        let input = arch.pair_features().dim(n_states, n_actions);
        MlpSpec::new(input, hidden, activation, 1, OutputTransform::Sigmoid)
    }

    pub fn zeros(n_states: usize, n_actions: usize, arch: &Architecture) -> Result<Self> {
        let spec = Self::spec_for(n_states, n_actions, arch)?;
        let params = ParamVec::zeros(spec.param_count());
        Self::new(spec, params, arch.pair_features(), n_states, n_actions)
    }

    pub fn init<R: Rng + ?Sized>(n_states: usize, n_actions: usize, arch: &Architecture, rng: &mut R) -> Result<Self> {
        let spec = Self::spec_for(n_states, n_actions, arch)?;
        let params = init_scaled_gaussian(&spec, rng);
        Self::new(spec, params, arch.pair_features(), n_states, n_actions)
    }

    pub fn value(&self, s: usize, a: usize) -> T {
        let x = self.features.encode(self.n_states, self.n_actions, s, a);
        mlp_eval(&self.spec, &self.params, &x).expect("reward shapes validated")[0]
    }

    /// `(r_φ(s, a), ∇_φ r_φ(s, a))`
    pub fn eval_grad(&self, s: usize, a: usize) -> (T, ParamVec<T>) {
        check_index(s, a, self.n_states, self.n_actions).expect("reward index");
        let x = Tensor::from_parts_unchecked(
            vec![self.spec.input_dim],
            self.features.encode(self.n_states, self.n_actions, s, a),
        );
        let (out, tape) = mlp_forward(&self.spec, &self.params, &x).expect("reward shapes validated");
        let grad = backward(tape, &Tensor::one_hot(1, 0)).expect("cotangent shape");
        (out.data()[0], grad)
    }

    /// Reward of every pair, indexed `[s * n_actions + a]`.
    pub fn table(&self) -> Vec<T> {
        (0..self.n_states)
            .flat_map(|s| (0..self.n_actions).map(move |a| (s, a)))
            .map(|(s, a)| self.value(s, a))
            .collect()
    }

    pub fn with_params(&self, params: ParamVec<T>) -> Self {
        assert_eq!(params.len(), self.params.len());
        Self { params, ..self.clone() }
    }

    /// Index of the output-layer bias inside the parameters.
    pub fn output_bias_index(&self) -> usize {
        self.spec.bias_index(self.spec.hidden_widths.len(), 0)
    }
}

/// `reward_eval_grad` as a free function.
pub fn reward_eval_grad<T: Scalar>(reward: &RewardModel<T>, s: usize, a: usize) -> (T, ParamVec<T>) {
    reward.eval_grad(s, a)
}

// ---------------------------------------------------------------------------
// critic

/// Critic `Q_θ` with the projection center `θ_0` it was initialized at.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticModel<T> {
    pub spec: MlpSpec,
    pub params: ParamVec<T>,
    pub anchor: ParamVec<T>,
    pub features: Featurization,
    pub n_states: usize,
    pub n_actions: usize,
}

impl<T: Scalar> CriticModel<T> {
    pub fn new(
        spec: MlpSpec,
        params: ParamVec<T>,
        anchor: ParamVec<T>,
        features: Featurization,
        n_states: usize,
        n_actions: usize,
    ) -> Result<Self> {
        spec.validate()?;
        if spec.output_transform != OutputTransform::Identity || spec.output_dim != 1 {
            return Err(Error::Model("critic network must have one identity output".into()));
        }
        if spec.input_dim != features.dim(n_states, n_actions) {
            return Err(Error::Dimension("critic input width does not match featurization".into()));
        }
        if params.len() != spec.param_count() || anchor.len() != spec.param_count() {
            return Err(Error::Dimension("critic parameter count mismatch".into()));
        }
        Ok(Self { spec, params, anchor, features, n_states, n_actions })
    }

    pub fn spec_for(n_states: usize, n_actions: usize, arch: &Architecture) -> Result<MlpSpec> {
        let (hidden, activation) = arch.hidden();
        let input = arch.pair_features().dim(n_states, n_actions);
        MlpSpec::new(input, hidden, activation, 1, OutputTransform::Identity)
    }

    /// Zero parameters anchored at zero.
    pub fn zeros(n_states: usize, n_actions: usize, arch: &Architecture) -> Result<Self> {
        let spec = Self::spec_for(n_states, n_actions, arch)?;
        let params = ParamVec::zeros(spec.param_count());
        Self::new(spec, params.clone(), params, arch.pair_features(), n_states, n_actions)
    }

    /// Standard Gaussian `θ_0`, which is also the projection center.
    pub fn init<R: Rng + ?Sized>(n_states: usize, n_actions: usize, arch: &Architecture, rng: &mut R) -> Result<Self> {
        let spec = Self::spec_for(n_states, n_actions, arch)?;
        let params = init_standard_gaussian(&spec, rng);
        Self::new(spec, params.clone(), params, arch.pair_features(), n_states, n_actions)
    }

    /// Tabular critic holding `table[s * n_actions + a]` exactly, anchored at zero.
    pub fn from_table(n_states: usize, n_actions: usize, table: &[T]) -> Result<Self> {
        let mut c = Self::zeros(n_states, n_actions, &Architecture::Tabular)?;
        if table.len() != n_states * n_actions {
            return Err(Error::Dimension("Q table size mismatch".into()));
        }
        for (i, &q) in table.iter().enumerate() {
            let idx = c.spec.weight_index(0, 0, i);
            c.params[idx] = q;
        }
        Ok(c)
    }

    pub fn value(&self, s: usize, a: usize) -> T {
        let x = self.features.encode(self.n_states, self.n_actions, s, a);
        mlp_eval(&self.spec, &self.params, &x).expect("critic shapes validated")[0]
    }

    /// `(Q_θ(s, a), ∇_θ Q_θ(s, a))`
    pub fn eval_grad(&self, s: usize, a: usize) -> (T, ParamVec<T>) {
        check_index(s, a, self.n_states, self.n_actions).expect("critic index");
        let x = Tensor::from_parts_unchecked(
            vec![self.spec.input_dim],
            self.features.encode(self.n_states, self.n_actions, s, a),
        );
        let (out, tape) = mlp_forward(&self.spec, &self.params, &x).expect("critic shapes validated");
        let grad = backward(tape, &Tensor::one_hot(1, 0)).expect("cotangent shape");
        (out.data()[0], grad)
    }

    /// `Q_θ` of every pair, indexed `[s * n_actions + a]`.
    pub fn table(&self) -> Vec<T> {
        (0..self.n_states)
            .flat_map(|s| (0..self.n_actions).map(move |a| (s, a)))
            .map(|(s, a)| self.value(s, a))
            .collect()
    }

    pub fn with_params(&self, params: ParamVec<T>) -> Self {
        assert_eq!(params.len(), self.params.len());
        Self { params, ..self.clone() }
    }
}

/// `critic_eval_grad` as a free function.
pub fn critic_eval_grad<T: Scalar>(critic: &CriticModel<T>, s: usize, a: usize) -> (T, ParamVec<T>) {
    critic.eval_grad(s, a)
}

// ---------------------------------------------------------------------------
// checkpoints

/// On-disk model: network descriptor plus flat parameters (TOML, exact float
/// round trip).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub spec: MlpSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Featurization>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_states: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_actions: Option<usize>,
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Policy,
    Reward,
    Critic,
}

fn to_f64<T: Scalar>(p: &ParamVec<T>) -> Vec<f64> {
    p.iter().map(|v| v.as_f64()).collect()
}

fn from_f64<T: Scalar>(v: &[f64]) -> ParamVec<T> {
    ParamVec::from_vec(v.iter().map(|&x| T::lit(x)).collect())
}

impl Checkpoint {
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_toml_string())
            .map_err(|e| Error::Format(format!("{}: {e}", path.as_ref().display())))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Format(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_toml_str(&text)
    }

    fn expect_kind(&self, kind: ModelKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Format(format!("checkpoint holds a {:?}, expected {kind:?}", self.kind)));
        }
        Ok(())
    }

    fn pair_meta(&self) -> Result<(Featurization, usize, usize)> {
        match (self.features, self.n_states, self.n_actions) {
            (Some(f), Some(s), Some(a)) => Ok((f, s, a)),
            _ => Err(Error::Format("checkpoint lacks features/n_states/n_actions".into())),
        }
    }

    pub fn into_policy<T: Scalar>(self) -> Result<PolicyModel<T>> {
        self.expect_kind(ModelKind::Policy)?;
        PolicyModel::new(self.spec, from_f64(&self.params))
    }

    pub fn into_reward<T: Scalar>(self) -> Result<RewardModel<T>> {
        self.expect_kind(ModelKind::Reward)?;
        let (f, s, a) = self.pair_meta()?;
        RewardModel::new(self.spec, from_f64(&self.params), f, s, a)
    }

    pub fn into_critic<T: Scalar>(self) -> Result<CriticModel<T>> {
        self.expect_kind(ModelKind::Critic)?;
        let (f, s, a) = self.pair_meta()?;
        let anchor = self.anchor.as_deref().ok_or_else(|| Error::Format("critic checkpoint lacks anchor".into()))?;
        CriticModel::new(self.spec, from_f64(&self.params), from_f64(anchor), f, s, a)
    }
}

impl<T: Scalar> From<&PolicyModel<T>> for Checkpoint {
    fn from(m: &PolicyModel<T>) -> Self {
        Checkpoint {
            kind: ModelKind::Policy,
            spec: m.spec.clone(),
            features: None,
            n_states: None,
            n_actions: None,
            params: to_f64(&m.params),
            anchor: None,
        }
    }
}

impl<T: Scalar> From<&RewardModel<T>> for Checkpoint {
    fn from(m: &RewardModel<T>) -> Self {
        Checkpoint {
            kind: ModelKind::Reward,
            spec: m.spec.clone(),
            features: Some(m.features),
            n_states: Some(m.n_states),
            n_actions: Some(m.n_actions),
            params: to_f64(&m.params),
            anchor: None,
        }
    }
}

impl<T: Scalar> From<&CriticModel<T>> for Checkpoint {
    fn from(m: &CriticModel<T>) -> Self {
        Checkpoint {
            kind: ModelKind::Critic,
            spec: m.spec.clone(),
            features: Some(m.features),
            n_states: Some(m.n_states),
            n_actions: Some(m.n_actions),
            params: to_f64(&m.params),
            anchor: Some(to_f64(&m.anchor)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::finite_diff_grad;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn default_policy(seed: u64) -> PolicyModel<f64> {
        PolicyModel::init(4, 3, &Architecture::mlp(vec![8]), &mut rng(seed)).unwrap()
    }

    #[test]
    fn zero_policy_is_uniform() {
        let p = PolicyModel::<f64>::zeros(3, 4, &Architecture::mlp(vec![5])).unwrap();
        for s in 0..3 {
            assert!(p.probs(s).iter().all(|&x| (x - 0.25).abs() < 1e-15));
        }
    }

    #[test]
    fn shared_logit_shift_leaves_distribution_unchanged() {
        let mut p = PolicyModel::<f64>::init(3, 2, &Architecture::Tabular, &mut rng(1)).unwrap();
        let before = p.table();
        for a in 0..2 {
            let b = p.spec.bias_index(0, a);
            p.params[b] += 3.7;
        }
        for (x, y) in before.iter().flatten().zip(p.table().iter().flatten()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn probs_match_hand_rolled_softmax() {
        let p = default_policy(2);
        for s in 0..4 {
            // logits from a copy of the network with an identity head
            let spec = MlpSpec { output_transform: OutputTransform::Identity, ..p.spec.clone() };
            let logits = mlp_eval(&spec, &p.params, Tensor::<f64>::one_hot(4, s).data()).unwrap();
            let z: f64 = logits.iter().map(|l| l.exp()).sum();
            for (a, pr) in p.probs(s).iter().enumerate() {
                assert!((pr - logits[a].exp() / z).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn score_identity_and_finite_differences() {
        let p = default_policy(3);
        for s in 0..4 {
            let probs = p.probs(s);
            let mut expect = ParamVec::zeros(p.params.len());
            for a in 0..3 {
                expect.axpy(probs[a], &p.score(s, a));
            }
            assert!(expect.norm() < 1e-8);
            let g = p.score(s, 1);
            let fd = finite_diff_grad(|q| p.with_params(q.clone()).log_probs(s)[1], &p.params, 1e-5).unwrap();
            assert!(g.relative_error(&fd, 1e-12) < 1e-6);
        }
    }

    #[test]
    fn tabular_score_in_logit_coordinates() {
        let mut p = PolicyModel::<f64>::zeros(1, 2, &Architecture::Tabular).unwrap();
        p.params = ParamVec::from_vec(vec![0.3, -0.4, 0.1, 0.25]);
        let pi = p.probs(0);
        let g = p.score(0, 0);
        // The bias entries are the logits in a 1-state tabular policy.
        let (b0, b1) = (p.spec.bias_index(0, 0), p.spec.bias_index(0, 1));
        assert!((g[b0] - (1.0 - pi[0])).abs() < 1e-14);
        assert!((g[b1] + pi[1]).abs() < 1e-14);
        let fd = finite_diff_grad(|q| p.with_params(q.clone()).log_probs(0)[0], &p.params, 1e-5).unwrap();
        assert!((fd[b0] - g[b0]).abs() < 1e-9 && (fd[b1] - g[b1]).abs() < 1e-9);
    }

    #[test]
    fn reward_basics() {
        let arch = Architecture::mlp(vec![6]);
        let r = RewardModel::<f64>::zeros(3, 2, &arch).unwrap();
        assert_eq!(r.value(1, 1), 0.5);
        let r = RewardModel::<f64>::init(3, 2, &arch, &mut rng(4)).unwrap();
        let (v, g) = r.eval_grad(2, 0);
        assert!(v > 0.0 && v < 1.0);
        let fd = finite_diff_grad(|q| r.with_params(q.clone()).value(2, 0), &r.params, 1e-5).unwrap();
        assert!(g.relative_error(&fd, 1e-12) < 1e-6);
        let mut bumped = r.clone();
        bumped.params[r.output_bias_index()] += 1e-3;
        assert!(bumped.value(2, 0) > v);
    }

    #[test]
    fn critic_basics() {
        let arch = Architecture::mlp(vec![7]);
        let c = CriticModel::<f64>::zeros(3, 2, &arch).unwrap();
        assert_eq!(c.value(0, 1), 0.0);
        let c = CriticModel::<f64>::init(3, 2, &arch, &mut rng(5)).unwrap();
        assert_eq!(c.params, c.anchor);
        let (_, g) = c.eval_grad(1, 1);
        let fd = finite_diff_grad(|q| c.with_params(q.clone()).value(1, 1), &c.params, 1e-5).unwrap();
        assert!(g.relative_error(&fd, 1e-12) < 1e-6);
        let t = CriticModel::<f64>::from_table(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(t.value(1, 0), 3.0);
        assert_eq!(t.value(2, 1), 6.0);
    }

    #[test]
    fn checkpoints_round_trip() {
        let arch = Architecture::mlp(vec![4]);
        let p = default_policy(6);
        let r = RewardModel::<f64>::init(4, 3, &arch, &mut rng(7)).unwrap();
        let c = CriticModel::<f64>::init(4, 3, &arch, &mut rng(8)).unwrap();
        let back = Checkpoint::from_toml_str(&Checkpoint::from(&p).to_toml_string()).unwrap();
        assert_eq!(back.clone().into_policy::<f64>().unwrap(), p);
        assert!(back.into_reward::<f64>().is_err());
        let back = Checkpoint::from_toml_str(&Checkpoint::from(&r).to_toml_string()).unwrap();
        assert_eq!(back.into_reward::<f64>().unwrap(), r);
        let back = Checkpoint::from_toml_str(&Checkpoint::from(&c).to_toml_string()).unwrap();
        assert_eq!(back.into_critic::<f64>().unwrap(), c);
    }

    proptest! {
        #[test]
        fn reward_stays_in_open_unit_interval(seed in 0u64..500, scale in 0.1f64..50.0) {
            let mut r = RewardModel::<f64>::init(3, 2, &Architecture::mlp(vec![4]), &mut rng(seed)).unwrap();
            r.params.scale(scale);
            for v in r.table() {
                prop_assert!(v > 0.0 && v < 1.0);
            }
        }

        #[test]
        fn policy_rows_normalized(seed in 0u64..500, scale in 0.1f64..20.0) {
            let mut p = default_policy(seed);
            p.params.scale(scale);
            for row in p.table() {
                prop_assert!(row.iter().all(|&x| x > 0.0 || scale > 5.0));
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            }
        }
    }
}
