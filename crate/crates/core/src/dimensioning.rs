//! Sizing a nano-network for an application: the node count and storage
//! duration that meet a delivery deadline or a throughput target.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::VolumeSet;
use crate::markov::{
    self, delay_for, effective_throughput_for, p_frame, LinkModel, MarkovError, TransmitWindow,
};
use crate::params::{ValidParams, MAX_K};

/// Largest node count any search will consider.
pub const N_CAP: u64 = 100_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DimensioningError {
    #[error("invalid application spec: {0}")]
    InvalidSpec(String),
    #[error("deadline {tau_target} s is shorter than two rounds of {round_time} s")]
    DeadlineTooShort { tau_target: f64, round_time: f64 },
    #[error("target {target} unreachable: best attained {best} at n = {at_n}")]
    Infeasible { target: f64, best: f64, at_n: u64 },
    #[error("no storage duration satisfies the requirement")]
    NoFeasibleK,
    #[error(transparent)]
    Markov(#[from] MarkovError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Requirement {
    /// Deliver at least one frame within `tau_target` seconds with
    /// probability `qod_target`.
    Deadline { tau_target: f64, qod_target: f64 },
    /// Effective throughput (frames/s) with a bound on the average delay (s).
    Throughput {
        throughput_target: f64,
        tau_av_target: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplicationSpec {
    pub name: String,
    pub eta: f64,
    pub requirement: Requirement,
}

impl ApplicationSpec {
    pub fn deadline(name: &str, eta: f64, tau_target: f64, qod_target: f64) -> Self {
        Self {
            name: name.into(),
            eta,
            requirement: Requirement::Deadline {
                tau_target,
                qod_target,
            },
        }
    }

    pub fn throughput(name: &str, eta: f64, throughput_target: f64, tau_av_target: f64) -> Self {
        Self {
            name: name.into(),
            eta,
            requirement: Requirement::Throughput {
                throughput_target,
                tau_av_target,
            },
        }
    }

    /// The five monitoring applications with their published requirements.
    pub fn reference_applications() -> Vec<Self> {
        vec![
            Self::deadline("bacterial", 0.1, 3600.0, 0.99),
            Self::deadline("viral", 0.0056, 86_400.0, 0.99),
            Self::deadline("sepsis", 0.14, 3600.0, 0.99),
            Self::deadline("heart", 0.35, 900.0, 0.99),
            Self::throughput("restenosis", 0.03, 0.033 / 60.0, 1800.0),
        ]
    }

    pub fn validate(&self, round_time: f64) -> Result<(), DimensioningError> {
        let bad = |m: String| Err(DimensioningError::InvalidSpec(m));
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad(format!("eta must lie in (0, 1] (got {})", self.eta));
        }
        match self.requirement {
            Requirement::Deadline {
                tau_target,
                qod_target,
            } => {
                if !(0.0..1.0).contains(&qod_target) {
                    return bad(format!("qod_target must lie in [0, 1) (got {qod_target})"));
                }
                m_target(tau_target, round_time)?;
            }
            Requirement::Throughput {
                throughput_target,
                tau_av_target,
            } => {
                if !(throughput_target.is_finite() && throughput_target >= 0.0) {
                    return bad(format!("throughput_target must be >= 0 (got {throughput_target})"));
                }
                if !(tau_av_target.is_finite() && tau_av_target >= 2.0 * round_time) {
                    return bad(format!(
                        "tau_av_target must be at least two rounds (got {tau_av_target} s)"
                    ));
                }
            }
        }
        Ok(())
    }
}

/// `⌊τ_target / T⌋`.
pub fn m_target(tau_target: f64, round_time: f64) -> Result<u64, DimensioningError> {
    if !(tau_target.is_finite() && tau_target >= 2.0 * round_time) {
        return Err(DimensioningError::DeadlineTooShort {
            tau_target,
            round_time,
        });
    }
    Ok((tau_target / round_time).floor() as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensioningOptions {
    /// Convention for the QoD chain used when sizing n.
    pub window: TransmitWindow,
    pub n_cap: u64,
}

impl Default for DimensioningOptions {
    fn default() -> Self {
        Self {
            window: TransmitWindow::Inclusive,
            n_cap: N_CAP,
        }
    }
}

/// Outcome of a minimal-n search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NSearch {
    pub n: u64,
    /// Value of the searched metric at `n`.
    pub value: f64,
}

/// Smallest n in `[1, cap]` with `metric(n) ≥ target`, assuming the metric
/// rises before it falls. Doubling brackets the crossing; a drop between
/// consecutive brackets below the target means the peak was passed.
fn smallest_n(
    metric: impl Fn(u64) -> f64,
    target: f64,
    cap: u64,
) -> Result<NSearch, DimensioningError> {
    let first = metric(1);
    if first >= target {
        return Ok(NSearch { n: 1, value: first });
    }
    let (mut lo, mut best, mut best_n) = (1u64, first, 1u64);
    let mut hi = 2u64;
    let value_hi = loop {
        let v = metric(hi);
        if v >= target {
            break v;
        }
        if v < best || hi == cap {
            if v > best {
                best = v;
                best_n = hi;
            }
            return Err(DimensioningError::Infeasible {
                target,
                best,
                at_n: best_n,
            });
        }
        best = v;
        best_n = hi;
        lo = hi;
        hi = (hi * 2).min(cap);
    };
    let mut found = NSearch {
        n: hi,
        value: value_hi,
    };
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let v = metric(mid);
        if v >= target {
            hi = mid;
            found = NSearch { n: mid, value: v };
        } else {
            lo = mid;
        }
    }
    Ok(found)
}

/// Minimum node count reaching `qod_target` within `m` rounds.
pub fn n_min_for_qod(
    link: &LinkModel,
    eta: f64,
    k: u32,
    m: u64,
    qod_target: f64,
    opts: &DimensioningOptions,
) -> Result<NSearch, DimensioningError> {
    smallest_n(
        |n| markov::qod_for(link, eta, k, n, m, opts.window),
        qod_target,
        opts.n_cap,
    )
}

/// Minimum node count reaching an effective throughput (frames/s).
pub fn n_min_for_throughput(
    link: &LinkModel,
    eta: f64,
    k: u32,
    target: f64,
    opts: &DimensioningOptions,
) -> Result<NSearch, DimensioningError> {
    smallest_n(|n| effective_throughput_for(link, eta, k, n), target, opts.n_cap)
}

/// One row of the storage-duration sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KRow {
    pub k: u32,
    /// `None` when the target is out of reach at this k.
    pub n_min: Option<u64>,
    /// QoD (deadline) or throughput (frames/s) attained at `n_min`.
    pub attained: f64,
    pub tau_av: f64,
    pub th_eff: f64,
    /// `τ_av · n_min` as printed in the figure of merit.
    pub tau_n: f64,
    /// Selection score (see [`optimal_k`]).
    pub metric: f64,
}

fn evaluate_at(link: &LinkModel, eta: f64, k: u32, n: u64, round_time: f64) -> (f64, f64) {
    let (p_s_rnd, _) = link.p_s_rnd(n, p_frame(eta, k));
    let tau = delay_for(eta, p_s_rnd, k, round_time)
        .map(|(t, _)| t)
        .unwrap_or(f64::INFINITY);
    (tau, effective_throughput_for(link, eta, k, n))
}

/// Selected storage duration with the full sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub k: u32,
    pub table: Vec<KRow>,
}

/// Chooses k in `[2, m]` balancing node count against delay.
///
/// `n_min` falls and `τ_av` rises with k. Each is divided by its maximum
/// over the range and the score is `(1 − n/n_max)(1 − τ/τ_max)`: close to
/// zero at both ends of the range, largest at the balance point. The
/// largest score wins, smallest k on ties.
pub fn optimal_k(
    app: &ApplicationSpec,
    base: &ValidParams,
    volumes: &VolumeSet,
    opts: &DimensioningOptions,
) -> Result<KSelection, DimensioningError> {
    app.validate(base.round_time)?;
    let Requirement::Deadline {
        tau_target,
        qod_target,
    } = app.requirement
    else {
        return Err(DimensioningError::InvalidSpec(
            "optimal_k needs a deadline requirement".into(),
        ));
    };
    let m = m_target(tau_target, base.round_time)?;
    let link = LinkModel::new(base, volumes)?;
    let k_hi = m.min(u64::from(MAX_K)) as u32;

    let mut table: Vec<KRow> = (2..=k_hi)
        .into_par_iter()
        .map(|k| match n_min_for_qod(&link, app.eta, k, m, qod_target, opts) {
            Ok(found) => {
                let (tau_av, th_eff) = evaluate_at(&link, app.eta, k, found.n, base.round_time);
                KRow {
                    k,
                    n_min: Some(found.n),
                    attained: found.value,
                    tau_av,
                    th_eff,
                    tau_n: tau_av * found.n as f64,
                    metric: f64::NAN,
                }
            }
            Err(_) => KRow {
                k,
                n_min: None,
                attained: f64::NAN,
                tau_av: f64::NAN,
                th_eff: f64::NAN,
                tau_n: f64::NAN,
                metric: f64::NAN,
            },
        })
        .collect();

    let feasible = || table.iter().filter(|r| r.n_min.is_some());
    let n_max = feasible().filter_map(|r| r.n_min).max().ok_or(DimensioningError::NoFeasibleK)? as f64;
    let tau_max = feasible().map(|r| r.tau_av).fold(0.0, f64::max);
    for row in table.iter_mut().filter(|r| r.n_min.is_some()) {
        let n = row.n_min.unwrap_or(0) as f64;
        row.metric = (1.0 - n / n_max) * (1.0 - row.tau_av / tau_max);
    }
    let best = table
        .iter()
        .filter(|r| r.n_min.is_some())
        .fold(None::<&KRow>, |acc, r| match acc {
            Some(b) if b.metric >= r.metric => Some(b),
            _ => Some(r),
        })
        .ok_or(DimensioningError::NoFeasibleK)?;
    Ok(KSelection { k: best.k, table })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensioningResult {
    pub name: String,
    pub k_opt: u32,
    pub n_min: u64,
    /// Effective throughput at the chosen point (frames/s).
    pub throughput: f64,
    /// Average delay at the chosen point (s).
    pub tau_av: f64,
    /// Absent for the throughput variant.
    pub m_target: Option<u64>,
    /// QoD within `m_target` rounds (deadline variant).
    pub qod: Option<f64>,
    pub table: Vec<KRow>,
}

/// Smallest n over k (ties to the smaller k) meeting both the throughput
/// and the average-delay targets.
fn dimension_throughput(
    app: &ApplicationSpec,
    base: &ValidParams,
    link: &LinkModel,
    opts: &DimensioningOptions,
    target: f64,
    tau_target: f64,
) -> Result<DimensioningResult, DimensioningError> {
    let table: Vec<KRow> = (2..=MAX_K)
        .into_par_iter()
        .map(|k| {
            let found = n_min_for_throughput(link, app.eta, k, target, opts).ok();
            let (tau_av, th_eff) = match found {
                Some(f) => evaluate_at(link, app.eta, k, f.n, base.round_time),
                None => (f64::NAN, f64::NAN),
            };
            let ok = found.is_some() && tau_av <= tau_target;
            KRow {
                k,
                n_min: found.filter(|_| ok).map(|f| f.n),
                attained: found.map_or(f64::NAN, |f| f.value),
                tau_av,
                th_eff,
                tau_n: found.map_or(f64::NAN, |f| tau_av * f.n as f64),
                metric: f64::NAN,
            }
        })
        .collect();
    let best = table
        .iter()
        .filter(|r| r.n_min.is_some())
        .min_by_key(|r| (r.n_min, r.k))
        .ok_or(DimensioningError::NoFeasibleK)?;
    // Keep the sweep readable: rows up to the first delay violation past
    // the optimum.
    let cut = table
        .iter()
        .position(|r| r.k > best.k && (r.tau_av.is_nan() || r.tau_av > tau_target))
        .map_or(table.len(), |i| i + 1);
    Ok(DimensioningResult {
        name: app.name.clone(),
        k_opt: best.k,
        n_min: best.n_min.unwrap_or(0),
        throughput: best.th_eff,
        tau_av: best.tau_av,
        m_target: None,
        qod: None,
        table: table[..cut].to_vec(),
    })
}

/// Sizes the network for `app` on top of `base` (whose n, k and η are
/// replaced by the search).
pub fn dimension(
    app: &ApplicationSpec,
    base: &ValidParams,
    volumes: &VolumeSet,
    opts: &DimensioningOptions,
) -> Result<DimensioningResult, DimensioningError> {
    app.validate(base.round_time)?;
    let link = LinkModel::new(base, volumes)?;
    match app.requirement {
        Requirement::Deadline { tau_target, .. } => {
            let m = m_target(tau_target, base.round_time)?;
            let sel = optimal_k(app, base, volumes, opts)?;
            let row = sel
                .table
                .iter()
                .find(|r| r.k == sel.k)
                .expect("selected k is in the table")
                .clone();
            Ok(DimensioningResult {
                name: app.name.clone(),
                k_opt: sel.k,
                n_min: row.n_min.unwrap_or(0),
                throughput: row.th_eff,
                tau_av: row.tau_av,
                m_target: Some(m),
                qod: Some(row.attained),
                table: sel.table,
            })
        }
        Requirement::Throughput {
            throughput_target,
            tau_av_target,
        } => dimension_throughput(app, base, &link, opts, throughput_target, tau_av_target),
    }
}
