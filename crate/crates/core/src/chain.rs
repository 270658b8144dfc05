//! Dense transition matrices of the three storage/transmission chains and a
//! brute-force trajectory sampler used as an independent oracle for the
//! closed-form results in [`crate::markov`].

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("row {row} sums to {sum}, expected 1")]
    RowSum { row: usize, sum: f64 },
    #[error("entry ({row}, {col}) = {value} is not a probability")]
    Entry { row: usize, col: usize, value: f64 },
    #[error("start distribution has length {got}, matrix has {size} states")]
    StartLength { got: usize, size: usize },
    #[error("start distribution sums to {0}, expected 1")]
    StartSum(f64),
    #[error("at least two replications are required")]
    TooFewReplications,
}

/// Row-stochastic matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionMatrix {
    size: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    pub fn zeros(size: usize) -> Self {
        Self {
            size,
            data: vec![0.0; size * size],
        }
    }

    pub fn identity(size: usize) -> Self {
        let mut m = Self::zeros(size);
        for i in 0..size {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, ChainError> {
        let size = rows.len();
        let mut m = Self::zeros(size);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != size {
                return Err(ChainError::StartLength {
                    got: row.len(),
                    size,
                });
            }
            for (j, v) in row.into_iter().enumerate() {
                m.set(i, j, v);
            }
        }
        m.check()?;
        Ok(m)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.size + j]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.size + j] = v;
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.size + j] += v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.size..(i + 1) * self.size]
    }

    /// Every entry in [0, 1] and every row summing to 1 within 1e-9.
    pub fn check(&self) -> Result<(), ChainError> {
        for i in 0..self.size {
            let mut sum = 0.0;
            for (j, &v) in self.row(i).iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(ChainError::Entry {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
                sum += v;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(ChainError::RowSum { row: i, sum });
            }
        }
        Ok(())
    }

    /// `x · M` for a row vector `x`.
    pub fn left_multiply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.size];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (o, &m) in out.iter_mut().zip(self.row(i)) {
                *o += xi * m;
            }
        }
        out
    }
}

/// Storage chain: state 0 is an empty memory, state i ∈ 1..=k means the
/// frame is in its i-th round of storage. Size `(k+1) × (k+1)`.
pub fn storage_matrix(p_rx: f64, k: usize) -> TransitionMatrix {
    let mut m = TransitionMatrix::zeros(k + 1);
    for from in [0, k] {
        m.add(from, 0, 1.0 - p_rx);
        m.add(from, 1, p_rx);
    }
    for i in 1..k {
        m.set(i, i + 1, 1.0);
    }
    m
}

/// Delivery chain: storage states 0..=k plus an absorbing state `Q` (index
/// k+1) entered on the first successful transmission. States 1..k−1
/// transmit with probability `p_s_rnd` per round. Size `(k+2) × (k+2)`.
pub fn qod_matrix(p_rx: f64, p_s_rnd: f64, k: usize) -> TransitionMatrix {
    let q = k + 1;
    let mut m = TransitionMatrix::zeros(k + 2);
    for from in [0, k] {
        m.add(from, 0, 1.0 - p_rx);
        m.add(from, 1, p_rx);
    }
    for i in 1..k {
        m.set(i, i + 1, 1.0 - p_s_rnd);
        m.set(i, q, p_s_rnd);
    }
    m.set(q, q, 1.0);
    m
}

/// Index of delay state `Q_i` (i ∈ 2..=k) in [`delay_matrix`].
pub fn delay_q_index(k: usize, i: usize) -> usize {
    debug_assert!((2..=k).contains(&i));
    k + i - 1
}

/// Delay chain: storage states 0..=k followed by `Q_2..Q_k`, where `Q_i`
/// means the frame was delivered in its i-th round and the node holds it
/// (already delivered) until round k. Size `2k × 2k`.
pub fn delay_matrix(p_rx: f64, p_s_rnd: f64, k: usize) -> TransitionMatrix {
    let mut m = TransitionMatrix::zeros(2 * k);
    let qk = delay_q_index(k, k);
    for from in [0, k, qk] {
        m.add(from, 0, 1.0 - p_rx);
        m.add(from, 1, p_rx);
    }
    for i in 1..k {
        m.set(i, i + 1, 1.0 - p_s_rnd);
        m.set(i, delay_q_index(k, i + 1), p_s_rnd);
    }
    for i in 2..k {
        m.set(delay_q_index(k, i), delay_q_index(k, i + 1), 1.0);
    }
    m
}

/// Empirical statistics from sampled trajectories.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub steps: u64,
    pub replications: u64,
    /// Fraction of replications in each state after `steps` transitions.
    pub final_distribution: Vec<f64>,
    /// Mean over replications of the time-averaged state occupancy
    /// (states visited after each of the `steps` transitions).
    pub occupancy: Vec<f64>,
    /// Standard error of `occupancy` across replications.
    pub occupancy_std_error: Vec<f64>,
    /// Transition counts summed over all replications, row-major.
    pub transitions: Vec<u64>,
    /// Fraction of replications that reached an absorbing state.
    pub absorbed_fraction: f64,
}

impl OracleResult {
    pub fn transition_count(&self, from: usize, to: usize) -> u64 {
        self.transitions[from * self.final_distribution.len() + to]
    }
}

/// Samples `replications` independent trajectories of `steps` transitions.
///
/// Replication `i` draws from ChaCha stream `i` of `seed`, so the output
/// is the same for any thread schedule.
pub fn chain_oracle(
    matrix: &TransitionMatrix,
    start: &[f64],
    steps: u64,
    replications: u64,
    seed: u64,
) -> Result<OracleResult, ChainError> {
    matrix.check()?;
    let size = matrix.size();
    if start.len() != size {
        return Err(ChainError::StartLength {
            got: start.len(),
            size,
        });
    }
    let total: f64 = start.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(ChainError::StartSum(total));
    }
    if replications < 2 {
        return Err(ChainError::TooFewReplications);
    }

    // Sparse cumulative rows for sampling.
    let rows: Vec<Vec<(usize, f64)>> = (0..size)
        .map(|i| {
            let mut acc = 0.0;
            matrix
                .row(i)
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(|(j, &p)| {
                    acc += p;
                    (j, acc)
                })
                .collect()
        })
        .collect();
    let absorbing: Vec<bool> = (0..size).map(|i| matrix.get(i, i) == 1.0).collect();
    let start_cum: Vec<(usize, f64)> = {
        let mut acc = 0.0;
        start
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(j, &p)| {
                acc += p;
                (j, acc)
            })
            .collect()
    };

    fn draw(rng: &mut ChaCha8Rng, cum: &[(usize, f64)]) -> usize {
        let total = cum.last().map_or(1.0, |c| c.1);
        let u: f64 = rng.random::<f64>() * total;
        cum.iter()
            .find(|(_, c)| u < *c)
            .map_or(cum[cum.len() - 1].0, |(j, _)| *j)
    }

    struct Rep {
        last: usize,
        occupancy: Vec<f64>,
        transitions: Vec<u64>,
        absorbed: bool,
    }

    let reps: Vec<Rep> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r);
            let mut state = draw(&mut rng, &start_cum);
            let mut visits = vec![0u64; size];
            let mut transitions = vec![0u64; size * size];
            let mut absorbed = absorbing[state];
            for _ in 0..steps {
                let next = draw(&mut rng, &rows[state]);
                transitions[state * size + next] += 1;
                state = next;
                visits[state] += 1;
                absorbed |= absorbing[state];
            }
            let denom = steps.max(1) as f64;
            Rep {
                last: state,
                occupancy: visits.iter().map(|&v| v as f64 / denom).collect(),
                transitions,
                absorbed,
            }
        })
        .collect();

    let nrep = replications as f64;
    let mut final_distribution = vec![0.0; size];
    let mut occupancy = vec![0.0; size];
    let mut transitions = vec![0u64; size * size];
    let mut absorbed = 0u64;
    for rep in &reps {
        final_distribution[rep.last] += 1.0 / nrep;
        for (o, v) in occupancy.iter_mut().zip(&rep.occupancy) {
            *o += v / nrep;
        }
        for (t, v) in transitions.iter_mut().zip(&rep.transitions) {
            *t += v;
        }
        absorbed += u64::from(rep.absorbed);
    }
    let occupancy_std_error = (0..size)
        .map(|s| {
            let var = reps
                .iter()
                .map(|rep| (rep.occupancy[s] - occupancy[s]).powi(2))
                .sum::<f64>()
                / (nrep - 1.0);
            (var / nrep).sqrt()
        })
        .collect();

    Ok(OracleResult {
        steps,
        replications,
        final_distribution,
        occupancy,
        occupancy_std_error,
        transitions,
        absorbed_fraction: absorbed as f64 / nrep,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrices_are_stochastic() {
        for k in [2, 3, 5, 11] {
            storage_matrix(0.3, k).check().unwrap();
            qod_matrix(0.3, 0.2, k).check().unwrap();
            delay_matrix(0.3, 0.2, k).check().unwrap();
        }
        assert_eq!(delay_matrix(0.1, 0.1, 4).size(), 8);
        assert_eq!(qod_matrix(0.1, 0.1, 4).size(), 6);
    }

    #[test]
    fn identity_keeps_start() {
        let start = [0.2, 0.5, 0.3];
        let res = chain_oracle(&TransitionMatrix::identity(3), &start, 50, 20_000, 3).unwrap();
        for (a, b) in res.final_distribution.iter().zip(start) {
            assert!((a - b).abs() < 0.02);
        }
        assert_eq!(res.absorbed_fraction, 1.0);
    }

    #[test]
    fn malformed_matrix_is_rejected() {
        let bad = TransitionMatrix::from_rows(vec![vec![0.5, 0.4], vec![0.0, 1.0]]);
        assert!(matches!(bad, Err(ChainError::RowSum { row: 0, .. })));
        let neg = TransitionMatrix::from_rows(vec![vec![1.5, -0.5], vec![0.0, 1.0]]);
        assert!(matches!(neg, Err(ChainError::Entry { .. })));
    }

    #[test]
    fn oracle_is_deterministic() {
        let m = storage_matrix(0.5, 2);
        let start = [1.0, 0.0, 0.0];
        let a = chain_oracle(&m, &start, 1000, 8, 9).unwrap();
        let b = chain_oracle(&m, &start, 1000, 8, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_start() {
        let m = storage_matrix(0.5, 2);
        assert!(chain_oracle(&m, &[1.0, 0.0], 10, 2, 0).is_err());
        assert!(chain_oracle(&m, &[0.5, 0.0, 0.0], 10, 2, 0).is_err());
        assert!(chain_oracle(&m, &[1.0, 0.0, 0.0], 10, 1, 0).is_err());
    }
}
