//! Monte Carlo result records and the chunked, seed-reproducible sampling
//! engine every estimator runs on.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::quad::NeumaierSum;

/// Value with its standard error, the sample count behind it and the seed
/// that produced it. Deterministic quadratures report `n_samples = 0` and
/// put their error estimate in `stderr`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n_samples: u64,
    pub seed: u64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0, n_samples: 0, seed: 0 }
    }

    pub fn deterministic(value: f64, error: f64) -> Self {
        Self { value, stderr: error.abs(), n_samples: 0, seed: 0 }
    }

    pub fn scale(self, k: f64) -> Self {
        Self { value: self.value * k, stderr: self.stderr * k.abs(), ..self }
    }

    /// Sum of two independent estimates.
    pub fn plus(self, other: Estimate) -> Self {
        Self {
            value: self.value + other.value,
            stderr: self.stderr.hypot(other.stderr),
            n_samples: self.n_samples.max(other.n_samples),
            seed: self.seed,
        }
    }

    pub fn offset(self, c: f64) -> Self {
        Self { value: self.value + c, ..self }
    }

    /// `true` when `self <= other` holds within `k` combined standard errors.
    pub fn le_within(&self, other: &Estimate, k: f64) -> bool {
        other.value - self.value >= -k * self.stderr.hypot(other.stderr)
    }
}

/// Identifies one independent random stream: a 64-bit seed plus a stream
/// number. Distinct stream ids give independent ChaCha streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// SplitMix64 finaliser, used to spread structured stream labels over the
/// 64-bit stream space.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream base for a labelled purpose and sub-index (grid point, node...).
/// Chunk indices are added to the base, so bases are spaced far apart.
pub fn stream_base(label: &str, sub: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325_u64;
    for b in label.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3);
    }
    mix64(h ^ mix64(sub)) & !0xFFFF_FFFF
}

/// Compensated first and second moments of one scalar output.
#[derive(Debug, Clone, Copy, Default)]
pub struct Moments {
    sum: NeumaierSum,
    sum_sq: NeumaierSum,
    n: u64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.sum.add(x);
        self.sum_sq.add(x * x);
        self.n += 1;
    }

    pub fn merge(&mut self, other: &Moments) {
        self.sum.merge(&other.sum);
        self.sum_sq.merge(&other.sum_sq);
        self.n += other.n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum.value() / self.n as f64
        }
    }

    /// Standard error of the mean: sample standard deviation over `sqrt(n)`.
    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let mean = self.mean();
        let var = ((self.sum_sq.value() - n * mean * mean) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }

    pub fn estimate(&self, seed: u64) -> Estimate {
        Estimate { value: self.mean(), stderr: self.stderr(), n_samples: self.n, seed }
    }
}

/// How a Monte Carlo run is split into reproducible chunks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplingPlan {
    pub seed: u64,
    pub stream_base: u64,
    pub n_samples: u64,
    pub chunk_size: u64,
}

pub const DEFAULT_CHUNK: u64 = 4096;

impl SamplingPlan {
    pub fn new(seed: u64, stream_base: u64, n_samples: u64) -> Self {
        Self { seed, stream_base, n_samples, chunk_size: DEFAULT_CHUNK }
    }

    pub fn n_chunks(&self) -> u64 {
        self.n_samples.div_ceil(self.chunk_size)
    }

    pub fn chunk_stream(&self, chunk: u64) -> RngStream {
        RngStream::new(self.seed, self.stream_base.wrapping_add(chunk))
    }

    /// Runs `sample` once per sample, each chunk on its own stream, and
    /// merges the per-chunk moments in chunk order. The result is the same
    /// for any number of worker threads.
    pub fn run<const K: usize, F>(&self, sample: F) -> [Moments; K]
    where
        F: Fn(&mut ChaCha8Rng, &mut [f64; K]) + Sync,
    {
        let chunks: Vec<[Moments; K]> = (0..self.n_chunks())
            .into_par_iter()
            .map(|c| {
                let mut rng = self.chunk_stream(c).rng();
                let start = c * self.chunk_size;
                let end = (start + self.chunk_size).min(self.n_samples);
                let mut acc = [Moments::default(); K];
                let mut out = [0.0; K];
                for _ in start..end {
                    sample(&mut rng, &mut out);
                    for (a, &x) in acc.iter_mut().zip(out.iter()) {
                        a.push(x);
                    }
                }
                acc
            })
            .collect();
        let mut total = [Moments::default(); K];
        for chunk in &chunks {
            for (t, c) in total.iter_mut().zip(chunk.iter()) {
                t.merge(c);
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn moments_match_textbook_formulas() {
        let mut m = Moments::default();
        for x in [1.0, 2.0, 3.0, 4.0] {
            m.push(x);
        }
        assert_eq!(m.mean(), 2.5);
        let sd = (5.0_f64 / 3.0).sqrt();
        assert!((m.stderr() - sd / 2.0).abs() < 1e-15);
    }

    #[test]
    fn plan_is_independent_of_thread_count() {
        let plan = SamplingPlan { chunk_size: 100, ..SamplingPlan::new(7, stream_base("t", 0), 1050) };
        let f = |rng: &mut ChaCha8Rng, out: &mut [f64; 1]| out[0] = rng.random::<f64>();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| plan.run(f));
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| plan.run(f));
        assert_eq!(one[0].mean().to_bits(), four[0].mean().to_bits());
        assert_eq!(one[0].count(), 1050);
    }

    #[test]
    fn stream_bases_differ_by_label_and_index() {
        assert_ne!(stream_base("a", 0), stream_base("b", 0));
        assert_ne!(stream_base("a", 0), stream_base("a", 1));
    }
}
