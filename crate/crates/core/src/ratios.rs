//! Occupancy-ratio estimation with one-hot logistic discriminators and the
//! Ψ correction table built from the estimated ratios.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::OccupancyMeasure;

/// Magnitude bound on `Ψ/(1-α)`, the input of the exponential weight.
pub const EXP_INPUT_BOUND: f64 = 7.0;

/// Feature map fed to the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscriminatorInput {
    /// One-hot over `(s,a)`.
    #[default]
    StateAction,
    /// One-hot over `s`; every action of a state shares the logit.
    State,
}

/// Logistic classifier `c(s,a) = σ(w·onehot + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discriminator {
    pub n_states: usize,
    pub n_actions: usize,
    pub input: DiscriminatorInput,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub trained_steps: usize,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log σ(z)` without cancellation.
fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

impl Discriminator {
    pub fn new(n_states: usize, n_actions: usize, input: DiscriminatorInput) -> Self {
        let n_features = match input {
            DiscriminatorInput::StateAction => n_states * n_actions,
            DiscriminatorInput::State => n_states,
        };
        Discriminator {
            n_states,
            n_actions,
            input,
            weights: vec![0.0; n_features],
            bias: 0.0,
            trained_steps: 0,
        }
    }

    #[inline]
    fn feature(&self, s: usize, a: usize) -> usize {
        match self.input {
            DiscriminatorInput::StateAction => s * self.n_actions + a,
            DiscriminatorInput::State => s,
        }
    }

    pub fn logit(&self, s: usize, a: usize) -> f64 {
        self.weights[self.feature(s, a)] + self.bias
    }

    /// Classifier output; strictly inside (0, 1) for finite logits.
    pub fn output(&self, s: usize, a: usize) -> f64 {
        sigmoid(self.logit(s, a))
    }

    pub fn outputs(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_states, self.n_actions, |s, a| self.output(s, a))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Per-feature masses `(pos, ref)` aggregated through the feature map.
fn feature_masses(disc: &Discriminator, pos: &DMatrix<f64>, reference: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let mut p = vec![0.0; disc.weights.len()];
    let mut r = vec![0.0; disc.weights.len()];
    for s in 0..disc.n_states {
        for a in 0..disc.n_actions {
            let f = disc.feature(s, a);
            p[f] += pos[(s, a)];
            r[f] += reference[(s, a)];
        }
    }
    (p, r)
}

/// Negative logistic objective `-(E_pos[log c] + E_ref[log(1-c)])`.
pub fn discriminator_loss(disc: &Discriminator, pos: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    let mut loss = 0.0;
    for s in 0..disc.n_states {
        for a in 0..disc.n_actions {
            let z = disc.logit(s, a);
            loss -= pos[(s, a)] * log_sigmoid(z) + reference[(s, a)] * log_sigmoid(-z);
        }
    }
    loss
}

/// Gradient of [`discriminator_loss`] w.r.t. `(weights, bias)`.
pub fn discriminator_gradient(disc: &Discriminator, pos: &DMatrix<f64>, reference: &DMatrix<f64>) -> (Vec<f64>, f64) {
    let mut grad = vec![0.0; disc.weights.len()];
    for s in 0..disc.n_states {
        for a in 0..disc.n_actions {
            let c = disc.output(s, a);
            grad[disc.feature(s, a)] += reference[(s, a)] * c - pos[(s, a)] * (1.0 - c);
        }
    }
    let bias = grad.iter().sum();
    (grad, bias)
}

fn check_distribution(name: &str, m: &DMatrix<f64>, shape: (usize, usize)) -> Result<()> {
    if m.shape() != shape {
        return Err(Error::Shape(format!("{name} is {:?}, expected {shape:?}", m.shape())));
    }
    if m.iter().any(|x| !(*x >= 0.0)) {
        return Err(Error::Invalid(format!("{name} has a negative entry")));
    }
    Ok(())
}

/// Full-batch training of the logistic objective with expectations taken
/// exactly under `pos` and `reference`.
///
/// Each weight's gradient is divided by its feature mass `pos + ref`
/// (a diagonal preconditioner), so rare pairs converge at the same rate as
/// frequent ones; the bias takes a plain gradient step. The optimum is
/// unchanged: `c* = pos / (pos + ref)` on every feature with mass.
pub fn train_discriminator(
    pos: &OccupancyMeasure,
    reference: &OccupancyMeasure,
    steps: usize,
    lr: f64,
    input: DiscriminatorInput,
) -> Result<Discriminator> {
    let (ns, na) = pos.matrix().shape();
    check_distribution("reference occupancy", reference.matrix(), (ns, na))?;
    if !(lr > 0.0) {
        return Err(Error::Invalid(format!("discriminator lr must be positive, got {lr}")));
    }
    let (pm, rm) = (pos.matrix(), reference.matrix());
    let mut disc = Discriminator::new(ns, na, input);
    let (fp, fr) = feature_masses(&disc, pm, rm);
    let mass: Vec<f64> = fp.iter().zip(&fr).map(|(p, r)| p + r).collect();
    for step in 0..steps {
        let (grad, grad_bias) = discriminator_gradient(&disc, pm, rm);
        for ((w, g), m) in disc.weights.iter_mut().zip(&grad).zip(&mass) {
            if *m > 0.0 {
                *w -= lr * g / m;
            }
        }
        disc.bias -= lr * grad_bias;
        disc.trained_steps += 1;
        if !discriminator_loss(&disc, pm, rm).is_finite() {
            return Err(Error::NonFinite {
                what: "discriminator loss",
                step,
            });
        }
    }
    Ok(disc)
}

/// `c / (1 - c)` elementwise.
pub fn ratio_from_discriminator(disc: &Discriminator) -> DMatrix<f64> {
    DMatrix::from_fn(disc.n_states, disc.n_actions, |s, a| disc.logit(s, a).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PsiSource {
    Discriminator,
    Exact,
}

/// Per-pair correction `Ψ(s,a)` with its clipping bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiTable {
    pub psi: DMatrix<f64>,
    pub alpha: f64,
    pub clip_lo: f64,
    pub clip_hi: f64,
    pub source: PsiSource,
}

impl PsiTable {
    pub fn zeros(n_states: usize, n_actions: usize, alpha: f64) -> Self {
        PsiTable {
            psi: DMatrix::zeros(n_states, n_actions),
            alpha,
            clip_lo: f64::NEG_INFINITY,
            clip_hi: f64::INFINITY,
            source: PsiSource::Exact,
        }
    }

    pub fn mean(&self) -> f64 {
        self.psi.mean()
    }
}

/// Default Ψ clip: `±7(1-α)` keeps `exp(Ψ/(1-α))` within `[e⁻⁷, e⁷]`. For
/// `α ≥ 1` the weight is `exp(Ψ)` (or Ψ is a reward), so the bound is `±7`.
pub fn default_psi_clip(alpha: f64) -> (f64, f64) {
    let scale = if alpha < 1.0 { 1.0 - alpha } else { 1.0 };
    (-EXP_INPUT_BOUND * scale, EXP_INPUT_BOUND * scale)
}

/// `Ψ = clamp(log ratio_g − α log ratio_b, lo, hi)`. Without a bad ratio
/// the second term is dropped.
pub fn compute_psi(
    ratio_g: &DMatrix<f64>,
    ratio_b: Option<&DMatrix<f64>>,
    alpha: f64,
    clip_lo: f64,
    clip_hi: f64,
) -> Result<PsiTable> {
    if !(alpha >= 0.0) {
        return Err(Error::Invalid(format!("alpha must be non-negative, got {alpha}")));
    }
    if clip_lo > clip_hi {
        return Err(Error::Invalid(format!("clip bounds [{clip_lo}, {clip_hi}] are inverted")));
    }
    let mut bad_pairs = Vec::new();
    for s in 0..ratio_g.nrows() {
        for a in 0..ratio_g.ncols() {
            if !(ratio_g[(s, a)] > 0.0) || ratio_b.is_some_and(|rb| !(rb[(s, a)] > 0.0)) {
                bad_pairs.push((s, a));
            }
        }
    }
    if !bad_pairs.is_empty() {
        return Err(Error::Support {
            context: "ratios must be strictly positive".into(),
            pairs: bad_pairs,
        });
    }
    if let Some(rb) = ratio_b {
        if rb.shape() != ratio_g.shape() {
            return Err(Error::Shape("good and bad ratio tables differ in shape".into()));
        }
    }
    let psi = DMatrix::from_fn(ratio_g.nrows(), ratio_g.ncols(), |s, a| {
        let bad = ratio_b.map_or(0.0, |rb| alpha * rb[(s, a)].ln());
        (ratio_g[(s, a)].ln() - bad).clamp(clip_lo, clip_hi)
    });
    Ok(PsiTable {
        psi,
        alpha,
        clip_lo,
        clip_hi,
        source: PsiSource::Discriminator,
    })
}

/// Ψ from true occupancies. `d_u` must cover the support of `d_g` and `d_b`.
pub fn exact_psi(
    d_g: &OccupancyMeasure,
    d_b: Option<&OccupancyMeasure>,
    d_u: &OccupancyMeasure,
    alpha: f64,
    clip_lo: f64,
    clip_hi: f64,
) -> Result<PsiTable> {
    let (u, g) = (d_u.matrix(), d_g.matrix());
    let mut pairs = Vec::new();
    for s in 0..u.nrows() {
        for a in 0..u.ncols() {
            let covered = |d: f64| d <= 0.0 || u[(s, a)] > 0.0;
            if !covered(g[(s, a)]) || d_b.is_some_and(|b| !covered(b.get(s, a))) {
                pairs.push((s, a));
            }
        }
    }
    if !pairs.is_empty() {
        return Err(Error::Support {
            context: "d_u must be positive wherever d_g or d_b is".into(),
            pairs,
        });
    }
    let ratio = |d: &DMatrix<f64>| DMatrix::from_fn(u.nrows(), u.ncols(), |s, a| {
        if u[(s, a)] > 0.0 {
            d[(s, a)] / u[(s, a)]
        } else {
            1.0
        }
    });
    let rg = ratio(g);
    let rb = d_b.map(|b| ratio(b.matrix()));
    // Zero numerators give -inf logs, which the clip bounds absorb.
    let psi = DMatrix::from_fn(u.nrows(), u.ncols(), |s, a| {
        let bad = rb.as_ref().map_or(0.0, |rb| if alpha == 0.0 { 0.0 } else { alpha * rb[(s, a)].ln() });
        let value = rg[(s, a)].ln() - bad;
        if value.is_nan() {
            0.0
        } else {
            value.clamp(clip_lo, clip_hi)
        }
    });
    Ok(PsiTable {
        psi,
        alpha,
        clip_lo,
        clip_hi,
        source: PsiSource::Exact,
    })
}
