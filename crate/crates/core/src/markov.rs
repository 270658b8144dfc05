//! Closed-form link probabilities and the three round-level Markov metrics:
//! throughput (two-round, raw, effective), Quality of Delivery and average
//! delay.
//!
//! Powers `(1 − p)^e` with large exponents go through `exp(e · ln(1 − p))`
//! so that n up to 10⁸ neither underflows nor loses the small-p precision.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::VolumeSet;
use crate::params::ValidParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarkovError {
    #[error("inconsistent volumes: transmission {tx:e} exceeds collision {cx:e}")]
    InconsistentVolumes { tx: f64, cx: f64 },
    #[error("volume ratio {name} = {value} is not a probability")]
    NotAProbability { name: &'static str, value: f64 },
    #[error("per-round success probability is zero; no frame is ever delivered")]
    NoDelivery,
}

/// `(1 − p)^e`, accurate for tiny `p` and huge `e`.
pub fn pow1m(p: f64, e: f64) -> f64 {
    if e == 0.0 {
        return 1.0;
    }
    if p >= 1.0 {
        return 0.0;
    }
    (e * (-p).ln_1p()).exp()
}

/// `1 − (1 − p)^e` without cancellation.
pub fn one_minus_pow1m(p: f64, e: f64) -> f64 {
    if e == 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    -(e * (-p).ln_1p()).exp_m1()
}

/// Stationary distribution of the storage chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageChain {
    pub k: u32,
    pub p_rx: f64,
    /// `pi[0]` is the empty state, `pi[1..=k]` the storage rounds.
    pub pi: Vec<f64>,
}

impl StorageChain {
    pub fn pi0(&self) -> f64 {
        self.pi[0]
    }

    pub fn pi1(&self) -> f64 {
        self.pi[1]
    }

    /// Probability of holding a frame, `k·p_rx / (1 + p_rx(k − 1))`.
    pub fn p_frame(&self) -> f64 {
        p_frame(self.p_rx, self.k)
    }
}

pub fn p_frame(p_rx: f64, k: u32) -> f64 {
    let k = f64::from(k);
    k * p_rx / (1.0 + p_rx * (k - 1.0))
}

fn pi1(p_rx: f64, k: u32) -> f64 {
    p_rx / (1.0 + p_rx * (f64::from(k) - 1.0))
}

/// `π₀ = (1 − p_rx)/(1 + p_rx(k − 1))`, `π₁ = … = π_k = p_rx/(1 + p_rx(k − 1))`.
pub fn stationary_storage(p_rx: f64, k: u32) -> StorageChain {
    let denom = 1.0 + p_rx * (f64::from(k) - 1.0);
    let mut pi = vec![p_rx / denom; k as usize + 1];
    pi[0] = (1.0 - p_rx) / denom;
    StorageChain { k, p_rx, pi }
}

/// Geometry-derived per-cycle probabilities plus the timing that turns
/// them into per-round probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    pub p_tx: f64,
    pub p_cx: f64,
    pub round_time: f64,
    pub frequency: f64,
}

impl LinkModel {
    pub fn new(params: &ValidParams, volumes: &VolumeSet) -> Result<Self, MarkovError> {
        let (tx, cx) = (volumes.transmission.value, volumes.collision.value);
        if tx > cx {
            return Err(MarkovError::InconsistentVolumes { tx, cx });
        }
        let p_tx = tx / params.total_volume;
        let p_cx = cx / params.total_volume;
        for (name, value) in [("p_tx", p_tx), ("p_cx", p_cx)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(MarkovError::NotAProbability { name, value });
            }
        }
        Ok(Self {
            p_tx,
            p_cx,
            round_time: params.round_time,
            frequency: params.frequency,
        })
    }

    /// Per-cycle collision-free transmission probability
    /// `p_s = p_tx (1 − p_frame p_cx)^{n−1}`.
    pub fn p_s(&self, n: u64, p_frame: f64) -> f64 {
        self.p_tx * pow1m(self.p_cx * p_frame, (n - 1) as f64)
    }

    /// Per-round success probability `T f p_s`, clamped to 1. The flag
    /// reports whether clamping happened.
    pub fn p_s_rnd(&self, n: u64, p_frame: f64) -> (f64, bool) {
        let raw = self.round_time * self.frequency * self.p_s(n, p_frame);
        if raw > 1.0 {
            (1.0, true)
        } else {
            (raw, false)
        }
    }
}

/// All link-level probabilities of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkProbabilities {
    pub p_tx: f64,
    pub p_cx: f64,
    pub p_rx: f64,
    pub p_frame: f64,
    pub p_empty: f64,
    pub p_s: f64,
    pub p_s_rnd: f64,
    /// Set when `T·f·p_s` exceeded 1 and `p_s_rnd` was clamped.
    pub p_s_rnd_clamped: bool,
    pub pi: Vec<f64>,
}

pub fn link_probabilities(
    params: &ValidParams,
    volumes: &VolumeSet,
) -> Result<LinkProbabilities, MarkovError> {
    let link = LinkModel::new(params, volumes)?;
    Ok(link_probabilities_for(&link, params.eta, params.k, params.n))
}

pub fn link_probabilities_for(link: &LinkModel, p_rx: f64, k: u32, n: u64) -> LinkProbabilities {
    let chain = stationary_storage(p_rx, k);
    let p_frame = chain.p_frame();
    let p_s = link.p_s(n, p_frame);
    let (p_s_rnd, p_s_rnd_clamped) = link.p_s_rnd(n, p_frame);
    LinkProbabilities {
        p_tx: link.p_tx,
        p_cx: link.p_cx,
        p_rx,
        p_frame,
        p_empty: chain.pi0(),
        p_s,
        p_s_rnd,
        p_s_rnd_clamped,
        pi: chain.pi,
    }
}

/// Frames per second reaching the router when frames are kept exactly two
/// rounds: `n f p_tx p_rx (1 − p_cx p_rx)^{n−1}`.
///
/// This is not the k = 2 case of [`raw_throughput`], which weights by
/// `p_frame = 2p_rx/(1 + p_rx)` instead of `p_rx`.
pub fn two_round_throughput(params: &ValidParams, volumes: &VolumeSet) -> Result<f64, MarkovError> {
    let link = LinkModel::new(params, volumes)?;
    let n = params.n as f64;
    Ok(n * params.frequency * link.p_tx * params.eta * pow1m(link.p_cx * params.eta, n - 1.0))
}

/// `n f p_tx p_frame (1 − p_cx p_frame)^{n−1}`; repeated frames included.
pub fn raw_throughput(params: &ValidParams, volumes: &VolumeSet) -> Result<f64, MarkovError> {
    let link = LinkModel::new(params, volumes)?;
    Ok(raw_throughput_for(&link, params.eta, params.k, params.n))
}

pub fn raw_throughput_for(link: &LinkModel, p_rx: f64, k: u32, n: u64) -> f64 {
    let pf = p_frame(p_rx, k);
    n as f64 * link.frequency * link.p_tx * pf * pow1m(link.p_cx * pf, (n - 1) as f64)
}

/// Probability that a stored frame is delivered exactly once,
/// `π₁ (1 − (1 − p_s)^{k−1})`.
pub fn p_eff(pi1: f64, p_s: f64, k: u32) -> f64 {
    pi1 * one_minus_pow1m(p_s, f64::from(k) - 1.0)
}

/// The same quantity in its quotient form
/// `π₁ ((1 − p_s)^k + p_s − 1)/(p_s − 1)`, undefined at `p_s = 1`.
pub fn p_eff_quotient(pi1: f64, p_s: f64, k: u32) -> f64 {
    pi1 * ((1.0 - p_s).powi(k as i32) + p_s - 1.0) / (p_s - 1.0)
}

/// Effective (deduplicated) throughput `n f p_eff`.
pub fn effective_throughput(params: &ValidParams, volumes: &VolumeSet) -> Result<f64, MarkovError> {
    let link = LinkModel::new(params, volumes)?;
    Ok(effective_throughput_for(&link, params.eta, params.k, params.n))
}

pub fn effective_throughput_for(link: &LinkModel, p_rx: f64, k: u32, n: u64) -> f64 {
    let pf = p_frame(p_rx, k);
    let p_s = link.p_s(n, pf);
    n as f64 * link.frequency * p_eff(pi1(p_rx, k), p_s, k)
}

/// How many storage rounds may carry a transmission in the QoD chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransmitWindow {
    /// States 1..k−1 transmit (k−1 opportunities), chain of size k+2.
    #[default]
    Printed,
    /// k opportunities: the same recursion evaluated on a storage chain one
    /// round longer. This is the convention that reproduces the published
    /// application dimensioning.
    Inclusive,
}

impl TransmitWindow {
    /// Storage length of the chain actually iterated.
    pub fn chain_k(self, k: u32) -> u32 {
        match self {
            TransmitWindow::Printed => k,
            TransmitWindow::Inclusive => k + 1,
        }
    }
}

/// Distribution over the delivery chain after `m` transitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QodState {
    pub m: u64,
    /// States 0..=k followed by the absorbing `Q`.
    pub pi_m: Vec<f64>,
}

impl QodState {
    pub fn absorbed(&self) -> f64 {
        *self.pi_m.last().expect("state vector is never empty")
    }
}

/// Per-state recursion of the delivery chain, started from the stationary
/// storage distribution with nothing delivered.
///
/// One step costs O(1): the shift of states 2..k by `(1 − p_s_rnd)` is a
/// ring rotation plus a shared scale factor, and the sum over states 1..k−1
/// is carried incrementally (and recomputed periodically).
#[derive(Debug, Clone)]
pub struct QodRecursion {
    k: usize,
    p_rx: f64,
    p_s_rnd: f64,
    m: u64,
    empty: f64,
    /// Scaled storage states; state i lives at `ring[(head + i − 1) % k]`.
    ring: Vec<f64>,
    head: usize,
    scale: f64,
    /// Sum of states 1..k−1.
    sending: f64,
    absorbed: f64,
}

const RESUM_EVERY: u64 = 256;

impl QodRecursion {
    pub fn new(p_rx: f64, p_s_rnd: f64, k: u32) -> Self {
        let chain = stationary_storage(p_rx, k);
        let k = k as usize;
        Self {
            k,
            p_rx,
            p_s_rnd,
            m: 0,
            empty: chain.pi[0],
            ring: chain.pi[1..].to_vec(),
            head: 0,
            scale: 1.0,
            sending: chain.pi[1..k].iter().sum(),
            absorbed: 0.0,
        }
    }

    fn slot(&self, i: usize) -> usize {
        (self.head + i - 1) % self.k
    }

    fn storage(&self, i: usize) -> f64 {
        self.ring[self.slot(i)] * self.scale
    }

    pub fn steps(&self) -> u64 {
        self.m
    }

    /// Absorbed mass `π_mQ`.
    pub fn absorbed(&self) -> f64 {
        self.absorbed
    }

    pub fn step(&mut self) {
        let k = self.k;
        let keep = 1.0 - self.p_s_rnd;
        let last = self.storage(k);
        let before_last = self.storage(k - 1);

        self.absorbed += self.p_s_rnd * self.sending;
        let recycled = self.empty + last;
        let fresh = self.p_rx * recycled;
        self.empty = (1.0 - self.p_rx) * recycled;

        // Rotate: the slot of old state k becomes the new state 1.
        self.head = (self.head + k - 1) % k;
        if keep == 0.0 {
            self.ring.fill(0.0);
            self.scale = 1.0;
        } else {
            self.scale *= keep;
            if self.scale < 1e-200 {
                let s = self.scale;
                self.ring.iter_mut().for_each(|v| *v *= s);
                self.scale = 1.0;
            }
        }
        let head = self.head;
        self.ring[head] = fresh / self.scale;

        self.m += 1;
        if self.m.is_multiple_of(RESUM_EVERY) {
            self.sending = (1..k).map(|i| self.storage(i)).sum();
        } else {
            self.sending = fresh + keep * (self.sending - before_last);
        }
    }

    pub fn advance(&mut self, steps: u64) {
        for _ in 0..steps {
            self.step();
        }
    }

    pub fn state(&self) -> QodState {
        let mut pi_m = Vec::with_capacity(self.k + 2);
        pi_m.push(self.empty);
        pi_m.extend((1..=self.k).map(|i| self.storage(i)));
        pi_m.push(self.absorbed);
        QodState { m: self.m, pi_m }
    }
}

/// `QoD = 1 − (1 − π_mQ)^n`.
pub fn qod_from_absorbed(absorbed: f64, n: u64) -> f64 {
    one_minus_pow1m(absorbed, n as f64).clamp(0.0, 1.0)
}

/// QoD for explicit chain inputs.
pub fn qod_for(link: &LinkModel, p_rx: f64, k: u32, n: u64, m: u64, window: TransmitWindow) -> f64 {
    let kc = window.chain_k(k);
    let (p_s_rnd, _) = link.p_s_rnd(n, p_frame(p_rx, kc));
    let mut rec = QodRecursion::new(p_rx, p_s_rnd, kc);
    rec.advance(m);
    qod_from_absorbed(rec.absorbed(), n)
}

/// Probability that at least one of the `n` nodes delivers a frame within
/// `m` rounds, using the recursion exactly as printed (k−1 opportunities).
pub fn qod(params: &ValidParams, volumes: &VolumeSet, m: u64) -> Result<f64, MarkovError> {
    qod_with(params, volumes, m, TransmitWindow::Printed)
}

pub fn qod_with(
    params: &ValidParams,
    volumes: &VolumeSet,
    m: u64,
    window: TransmitWindow,
) -> Result<f64, MarkovError> {
    let link = LinkModel::new(params, volumes)?;
    Ok(qod_for(&link, params.eta, params.k, params.n, m, window))
}

/// Distribution of the delivery round of delivered frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayDistribution {
    /// `(round index i, weight)` for i = 2..=k.
    pub weights: Vec<(u32, f64)>,
}

impl DelayDistribution {
    pub fn mean_rounds(&self) -> f64 {
        self.weights.iter().map(|&(i, w)| f64::from(i) * w).sum()
    }
}

/// Stationary vector of the delay chain in closed form, ordered as in
/// [`crate::chain::delay_matrix`].
pub fn delay_stationary(p_rx: f64, p_s_rnd: f64, k: u32) -> Vec<f64> {
    let kf = f64::from(k);
    let denom = 1.0 + (kf - 1.0) * p_rx;
    let keep = 1.0 - p_s_rnd;
    let mut pi = Vec::with_capacity(2 * k as usize);
    pi.push((1.0 - p_rx) / denom);
    for i in 1..=k {
        pi.push(p_rx * keep.powi(i as i32 - 1) / denom);
    }
    for i in 2..=k {
        pi.push(delivered_by_round(p_rx, p_s_rnd, k, i));
    }
    pi
}

/// `π^d_{Q_i} = p_rx (1 − (1 − p_s_rnd)^{i−1}) / (1 + (k − 1) p_rx)`; zero at i = 1.
fn delivered_by_round(p_rx: f64, p_s_rnd: f64, k: u32, i: u32) -> f64 {
    let denom = 1.0 + (f64::from(k) - 1.0) * p_rx;
    p_rx * one_minus_pow1m(p_s_rnd, f64::from(i) - 1.0) / denom
}

/// Mean delay (s) and delivery-round distribution for explicit inputs.
///
/// The weights telescope, `(π^d_{Q_i} − π^d_{Q_{i−1}})/π^d_{Q_k}`, which is
/// the geometric law truncated to rounds 2..=k.
pub fn delay_for(p_rx: f64, p_s_rnd: f64, k: u32, round_time: f64) -> Result<(f64, DelayDistribution), MarkovError> {
    // also rejects NaN
    if p_s_rnd.is_nan() || p_s_rnd <= 0.0 {
        return Err(MarkovError::NoDelivery);
    }
    let total = one_minus_pow1m(p_s_rnd, f64::from(k) - 1.0);
    let keep = 1.0 - p_s_rnd;
    let mut weights = Vec::with_capacity(k as usize - 1);
    let mut geometric = 1.0;
    for i in 2..=k {
        weights.push((i, p_s_rnd * geometric / total));
        geometric *= keep;
    }
    let dist = DelayDistribution { weights };
    let _ = p_rx;
    Ok((dist.mean_rounds() * round_time, dist))
}

/// τ_av via the literal stationary-state differences; used to cross-check
/// [`delay_for`].
pub fn delay_from_stationary(p_rx: f64, p_s_rnd: f64, k: u32, round_time: f64) -> f64 {
    let qk = delivered_by_round(p_rx, p_s_rnd, k, k);
    (2..=k)
        .map(|i| {
            let w = (delivered_by_round(p_rx, p_s_rnd, k, i)
                - delivered_by_round(p_rx, p_s_rnd, k, i - 1))
                / qk;
            w * f64::from(i) * round_time
        })
        .sum()
}

pub fn average_delay(
    params: &ValidParams,
    volumes: &VolumeSet,
) -> Result<(f64, DelayDistribution), MarkovError> {
    let lp = link_probabilities(params, volumes)?;
    delay_for(params.eta, lp.p_s_rnd, params.k, params.round_time)
}

/// Analytic figures of merit for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticMetrics {
    /// Two-round throughput (frames/s).
    pub th_two_round: f64,
    /// Raw throughput (frames/s).
    pub th_raw: f64,
    /// Effective throughput (frames/s).
    pub th_eff: f64,
    /// QoD over `m` rounds.
    pub qod: f64,
    pub m: u64,
    /// Average delay (s).
    pub tau_av: f64,
    pub link: LinkProbabilities,
}

pub fn analyze(params: &ValidParams, volumes: &VolumeSet, m: u64) -> Result<AnalyticMetrics, MarkovError> {
    analyze_with(params, volumes, m, TransmitWindow::Printed)
}

pub fn analyze_with(
    params: &ValidParams,
    volumes: &VolumeSet,
    m: u64,
    window: TransmitWindow,
) -> Result<AnalyticMetrics, MarkovError> {
    let link = LinkModel::new(params, volumes)?;
    let probs = link_probabilities_for(&link, params.eta, params.k, params.n);
    let (tau_av, _) = delay_for(params.eta, probs.p_s_rnd, params.k, params.round_time)?;
    Ok(AnalyticMetrics {
        th_two_round: two_round_throughput(params, volumes)?,
        th_raw: raw_throughput_for(&link, params.eta, params.k, params.n),
        th_eff: effective_throughput_for(&link, params.eta, params.k, params.n),
        qod: qod_for(&link, params.eta, params.k, params.n, m, window),
        m,
        tau_av,
        link: probs,
    })
}
