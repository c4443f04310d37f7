//! Parameter containers, the stochastic-oracle contract, and deterministic
//! seeded mini-batch sampling shared by all optimizers and problems.
//!
//! All randomness in the crate flows through a counter-based generator: every
//! draw is keyed by `(seed, stream, counter)`, so distinct streams are
//! independent by construction and any past draw can be reconstructed from its
//! coordinates. Optimizers consume [`PRIMARY_STREAM`]; the extra batches SMBi
//! requests on Armijo failure come from [`INDEPENDENT_STREAM`].

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Stream id for the mini-batches consumed by every optimizer iteration.
pub const PRIMARY_STREAM: u64 = 0;
/// Stream id for the fresh batches SMBi draws when the Armijo test fails.
pub const INDEPENDENT_STREAM: u64 = 1;
/// Stream id reserved for problem/data generation.
pub const PROBLEM_STREAM: u64 = 2;
/// Stream id reserved for parameter initialization.
pub const INIT_STREAM: u64 = 3;

/// 64-bit finalizer (splitmix64 style) used to key per-draw generators.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic generator for the draw identified by `(seed, stream, counter)`.
///
/// Distinct coordinates produce distinct ChaCha keys, so the resulting
/// keystreams never overlap.
pub(crate) fn seeded_rng(seed: u64, stream: u64, counter: u64) -> ChaCha8Rng {
    let s0 = mix64(seed ^ 0x243F_6A88_85A3_08D3);
    let s1 = mix64(s0 ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let s2 = mix64(s1 ^ counter.wrapping_mul(0xD1B5_4A32_D192_ED03));
    let s3 = mix64(s2 ^ 0x94D0_49BB_1331_11EB);
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&s0.to_le_bytes());
    key[8..16].copy_from_slice(&s1.to_le_bytes());
    key[16..24].copy_from_slice(&s2.to_le_bytes());
    key[24..32].copy_from_slice(&s3.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Unbiased uniform integer in `0..n` by rejection.
fn uniform_below(rng: &mut ChaCha8Rng, n: u64) -> u64 {
    debug_assert!(n > 0);
    let zone = u64::MAX - (u64::MAX % n);
    loop {
        let v = rng.next_u64();
        if v < zone {
            return v % n;
        }
    }
}

/// Flat vector of one parameter group's coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(len: usize) -> Self {
        Self { values: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &ParamVector) {
        debug_assert_eq!(self.len(), other.len());
        for (s, o) in self.values.iter_mut().zip(&other.values) {
            *s += a * o;
        }
    }

    /// `self + a * dir` as a new vector.
    pub fn stepped(&self, a: f64, dir: &ParamVector) -> ParamVector {
        let mut out = self.clone();
        out.axpy(a, dir);
        out
    }

    pub fn scaled(&self, a: f64) -> ParamVector {
        ParamVector::new(self.values.iter().map(|v| a * v).collect())
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(values: Vec<f64>) -> Self {
        Self::new(values)
    }
}

impl std::ops::Index<usize> for ParamVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// Ordered, named partition of the full parameter vector into groups.
///
/// Group boundaries are fixed for the lifetime of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGroups {
    groups: Vec<ParamVector>,
    names: Vec<String>,
}

impl ParamGroups {
    /// Builds a partition; panics if `groups` and `names` disagree or are empty.
    pub fn new(groups: Vec<ParamVector>, names: Vec<String>) -> Self {
        assert!(!groups.is_empty(), "ParamGroups requires at least one group");
        assert_eq!(
            groups.len(),
            names.len(),
            "ParamGroups requires one name per group"
        );
        Self { groups, names }
    }

    /// Single-group partition named `name`.
    pub fn single(name: &str, values: Vec<f64>) -> Self {
        Self::new(vec![ParamVector::new(values)], vec![name.to_string()])
    }

    pub fn groups(&self) -> &[ParamVector] {
        &self.groups
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn group(&self, i: usize) -> &ParamVector {
        &self.groups[i]
    }

    pub fn group_mut(&mut self, i: usize) -> &mut ParamVector {
        &mut self.groups[i]
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn total_len(&self) -> usize {
        self.groups.iter().map(ParamVector::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.groups.iter().all(ParamVector::is_finite)
    }

    /// Squared Euclidean norm over all groups concatenated.
    pub fn norm_sq(&self) -> f64 {
        self.groups.iter().map(ParamVector::norm_sq).sum()
    }

    /// Shape equality: same group count and per-group lengths.
    pub fn same_shape(&self, grads: &[ParamVector]) -> bool {
        self.groups.len() == grads.len()
            && self
                .groups
                .iter()
                .zip(grads)
                .all(|(a, b)| a.len() == b.len())
    }

    /// `self += a * dirs`, group by group.
    pub fn axpy(&mut self, a: f64, dirs: &[ParamVector]) {
        debug_assert!(self.same_shape(dirs));
        for (g, d) in self.groups.iter_mut().zip(dirs) {
            g.axpy(a, d);
        }
    }

    /// `self + a * dirs` as a new partition.
    pub fn stepped(&self, a: f64, dirs: &[ParamVector]) -> ParamGroups {
        let mut out = self.clone();
        out.axpy(a, dirs);
        out
    }
}

/// Squared norm of a group-shaped gradient, all groups concatenated.
pub fn grads_norm_sq(grads: &[ParamVector]) -> f64 {
    grads.iter().map(ParamVector::norm_sq).sum()
}

/// One mini-batch draw: sample indices plus a tag identifying the draw.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    indices: Vec<usize>,
    seed_tag: u64,
}

impl Batch {
    /// Wraps explicit indices (used by tests and full-dataset evaluations).
    pub fn from_indices(indices: Vec<usize>, seed_tag: u64) -> Self {
        Self { indices, seed_tag }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn seed_tag(&self) -> u64 {
        self.seed_tag
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SampleError {
    #[error("batch size {m} is outside 1..={n}")]
    InvalidBatchSize { m: usize, n: usize },
}

/// Draws `m` indices from `0..dataset_size` uniformly without replacement.
///
/// The draw is a pure function of `(seed, stream, counter)`; indices are
/// returned sorted ascending (within-batch order is irrelevant to the mean
/// semantics of [`evaluate`], and the canonical order makes equal index sets
/// literally equal).
pub fn sample_batch(
    seed: u64,
    stream: u64,
    counter: u64,
    dataset_size: usize,
    m: usize,
) -> Result<Batch, SampleError> {
    if m == 0 || m > dataset_size {
        return Err(SampleError::InvalidBatchSize { m, n: dataset_size });
    }
    let mut rng = seeded_rng(seed, stream, counter);
    let mut pool: Vec<usize> = (0..dataset_size).collect();
    for i in 0..m {
        let j = i + uniform_below(&mut rng, (dataset_size - i) as u64) as usize;
        pool.swap(i, j);
    }
    pool.truncate(m);
    pool.sort_unstable();
    let seed_tag = (stream << 32) | (counter & 0xFFFF_FFFF);
    Ok(Batch { indices: pool, seed_tag })
}

/// Stateful counter over one sampling stream.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    seed: u64,
    stream: u64,
    counter: u64,
}

impl BatchSampler {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream, counter: 0 }
    }

    /// Next batch on this stream; advances the counter by one.
    pub fn next_batch(&mut self, dataset_size: usize, m: usize) -> Result<Batch, SampleError> {
        let batch = sample_batch(self.seed, self.stream, self.counter, dataset_size, m)?;
        self.counter += 1;
        Ok(batch)
    }

    /// Number of batches drawn so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }
}

/// Loss and group-shaped gradient of one mini-batch evaluation.
#[derive(Debug, Clone)]
pub struct EvalResult {
    pub loss: f64,
    pub grads: Vec<ParamVector>,
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("batch index {index} out of bounds for dataset of size {size}")]
    IndexOutOfBounds { index: usize, size: usize },
    #[error("parameter shape mismatch: {detail}")]
    ShapeMismatch { detail: String },
    #[error("non-finite loss ({value}) during evaluation")]
    NonFiniteLoss { value: f64 },
    #[error("non-finite gradient in parameter group `{group}`")]
    NonFiniteGradient { group: String },
    #[error("non-finite parameters in group `{group}`")]
    NonFiniteParams { group: String },
    #[error("evaluation split is empty")]
    EmptySplit,
}

/// Problem contract: mean loss and mean gradient over a mini-batch.
///
/// Implementations must be immutable after construction so independent runs
/// can share one problem across threads, and must return the *mean* of
/// per-sample losses and gradients so mini-batch estimates are unbiased for
/// the full-dataset quantities.
pub trait StochasticOracle: Sync {
    /// Short problem name used in reports and error messages.
    fn name(&self) -> &str;

    /// Number of samples batches are drawn from (the training split).
    fn dataset_size(&self) -> usize;

    /// Initial iterate for a run with the given seed.
    fn initial_params(&self, seed: u64) -> ParamGroups;

    /// Mean loss and gradients over the batch. Called through [`evaluate`],
    /// which adds the shape and finiteness checks.
    fn eval_batch(&self, x: &ParamGroups, batch: &Batch) -> Result<EvalResult, OracleError>;

    /// Gradient Lipschitz constant when the problem knows one exactly.
    fn lipschitz_bound(&self) -> Option<f64> {
        None
    }
}

/// Evaluates `oracle` at `x` on `batch` with contract checks.
///
/// Verifies that `x` is finite going in, that the gradient shape matches the
/// parameter shape exactly, and that the returned loss and gradients are
/// finite; a non-finite value is reported with the offending group name.
pub fn evaluate<O: StochasticOracle + ?Sized>(
    oracle: &O,
    x: &ParamGroups,
    batch: &Batch,
) -> Result<EvalResult, OracleError> {
    for (group, name) in x.groups().iter().zip(x.names()) {
        if !group.is_finite() {
            return Err(OracleError::NonFiniteParams { group: name.clone() });
        }
    }
    let result = oracle.eval_batch(x, batch)?;
    if !x.same_shape(&result.grads) {
        return Err(OracleError::ShapeMismatch {
            detail: format!(
                "oracle `{}` returned {} gradient group(s) for {} parameter group(s)",
                oracle.name(),
                result.grads.len(),
                x.n_groups()
            ),
        });
    }
    if !result.loss.is_finite() {
        return Err(OracleError::NonFiniteLoss { value: result.loss });
    }
    for (grad, name) in result.grads.iter().zip(x.names()) {
        if !grad.is_finite() {
            return Err(OracleError::NonFiniteGradient { group: name.clone() });
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_batch_draw_covers_all_indices() {
        let batch = sample_batch(7, PRIMARY_STREAM, 0, 10, 10).unwrap();
        assert_eq!(batch.indices(), (0..10).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn identical_coordinates_give_identical_batches() {
        let a = sample_batch(7, PRIMARY_STREAM, 0, 100, 16).unwrap();
        let b = sample_batch(7, PRIMARY_STREAM, 0, 100, 16).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn counter_advances_the_draw() {
        // Golden vectors frozen from the first run of the sampler.
        let a = sample_batch(7, PRIMARY_STREAM, 0, 100, 16).unwrap();
        let b = sample_batch(7, PRIMARY_STREAM, 1, 100, 16).unwrap();
        assert_ne!(a.indices(), b.indices());
        assert_eq!(
            a.indices(),
            &[2, 8, 19, 22, 36, 45, 48, 49, 51, 60, 64, 77, 79, 84, 91, 95]
        );
        assert_eq!(
            b.indices(),
            &[0, 6, 12, 13, 19, 30, 47, 49, 51, 59, 64, 70, 73, 77, 86, 94]
        );
    }

    #[test]
    fn streams_do_not_collide() {
        let a = sample_batch(7, PRIMARY_STREAM, 0, 1000, 32).unwrap();
        let b = sample_batch(7, INDEPENDENT_STREAM, 0, 1000, 32).unwrap();
        assert_ne!(a.indices(), b.indices());
    }

    #[test]
    fn oversized_batch_is_rejected() {
        let err = sample_batch(7, 0, 0, 10, 11).unwrap_err();
        assert_eq!(err, SampleError::InvalidBatchSize { m: 11, n: 10 });
        assert!(sample_batch(7, 0, 0, 10, 0).is_err());
    }

    #[test]
    fn sampler_counts_draws() {
        let mut sampler = BatchSampler::new(3, PRIMARY_STREAM);
        let first = sampler.next_batch(50, 5).unwrap();
        let second = sampler.next_batch(50, 5).unwrap();
        assert_eq!(sampler.counter(), 2);
        assert_eq!(first, sample_batch(3, PRIMARY_STREAM, 0, 50, 5).unwrap());
        assert_eq!(second, sample_batch(3, PRIMARY_STREAM, 1, 50, 5).unwrap());
    }

    #[test]
    fn param_groups_shape_checks() {
        let x = ParamGroups::new(
            vec![ParamVector::zeros(3), ParamVector::zeros(2)],
            vec!["a".into(), "b".into()],
        );
        assert_eq!(x.total_len(), 5);
        assert!(x.same_shape(&[ParamVector::zeros(3), ParamVector::zeros(2)]));
        assert!(!x.same_shape(&[ParamVector::zeros(2), ParamVector::zeros(2)]));
    }

    struct BadOracle;

    impl StochasticOracle for BadOracle {
        fn name(&self) -> &str {
            "bad"
        }
        fn dataset_size(&self) -> usize {
            4
        }
        fn initial_params(&self, _seed: u64) -> ParamGroups {
            ParamGroups::single("w", vec![0.0; 2])
        }
        fn eval_batch(&self, _x: &ParamGroups, _b: &Batch) -> Result<EvalResult, OracleError> {
            Ok(EvalResult {
                loss: 1.0,
                grads: vec![ParamVector::new(vec![f64::NAN, 0.0])],
            })
        }
    }

    #[test]
    fn evaluate_flags_non_finite_gradients_with_group_name() {
        let oracle = BadOracle;
        let x = oracle.initial_params(0);
        let batch = Batch::from_indices(vec![0], 0);
        match evaluate(&oracle, &x, &batch) {
            Err(OracleError::NonFiniteGradient { group }) => assert_eq!(group, "w"),
            other => panic!("expected NonFiniteGradient, got {other:?}"),
        }
    }
}
