//! Mann-Whitney U statistics and the three-class sample comparison used to
//! tell natural, random and sponge cost distributions apart.

use alloc::vec::Vec;
use core::fmt;

use crate::math;

/// Result of a one-sided U test with alternative "a tends larger than b".
#[derive(Debug, Clone, PartialEq)]
pub struct MwuResult {
    /// U statistic of sample a (pair count `#[a>b] + 0.5 #[a=b]`).
    pub u_a: f64,
    pub u_b: f64,
    /// One-sided p-value for H1: a > b, by normal approximation with
    /// tie-corrected variance and continuity correction. Always in (0, 1].
    pub p_one_sided: f64,
    pub z: f64,
    /// Set when the pooled samples are all identical (p fixed at 0.5).
    pub degenerate: bool,
}

/// U from rank sums with midrank tie handling. Requires both samples
/// nonempty.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MwuResult, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    for v in a.iter().chain(b.iter()) {
        if !v.is_finite() {
            return Err(StatsError::NonFiniteValue(*v));
        }
    }

    let n_a = a.len();
    let n_b = b.len();
    let n = n_a + n_b;

    let mut pooled: Vec<(f64, bool)> = a
        .iter()
        .map(|v| (*v, true))
        .chain(b.iter().map(|v| (*v, false)))
        .collect();
    pooled.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finite values"));

    // Midranks and tie group sizes.
    let mut rank_sum_a = 0.0f64;
    let mut tie_term = 0.0f64;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let group = (j - i) as f64;
        let midrank = (i + j + 1) as f64 / 2.0;
        for item in &pooled[i..j] {
            if item.1 {
                rank_sum_a += midrank;
            }
        }
        tie_term += group * group * group - group;
        i = j;
    }

    let u_a = rank_sum_a - (n_a * (n_a + 1)) as f64 / 2.0;
    let u_b = (n_a * n_b) as f64 - u_a;

    let mean = (n_a * n_b) as f64 / 2.0;
    let nf = n as f64;
    let variance = (n_a * n_b) as f64 / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));

    if variance <= 0.0 {
        return Ok(MwuResult {
            u_a,
            u_b,
            p_one_sided: 0.5,
            z: 0.0,
            degenerate: true,
        });
    }

    let sigma = math::sqrt(variance);
    let z = (u_a - mean - 0.5) / sigma;
    let p = (0.5 * math::erfc(z / math::sqrt(2.0))).clamp(f64::MIN_POSITIVE, 1.0);
    Ok(MwuResult {
        u_a,
        u_b,
        p_one_sided: p,
        z,
        degenerate: false,
    })
}

/// Directed pairwise test between two labelled sample classes.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTest {
    /// The class claimed to tend larger.
    pub greater: &'static str,
    pub lesser: &'static str,
    pub result: MwuResult,
}

/// Which way the three classes are expected to order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpectedOrdering {
    /// sponge > natural > random (vision pipelines).
    SpongeNaturalRandom,
    /// sponge > random > natural (language pipelines).
    SpongeRandomNatural,
}

impl ExpectedOrdering {
    /// Labels of the three directed pairs, greater side first.
    fn pairs(&self) -> [(&'static str, &'static str); 3] {
        match self {
            ExpectedOrdering::SpongeNaturalRandom => [
                ("sponge", "natural"),
                ("sponge", "random"),
                ("natural", "random"),
            ],
            ExpectedOrdering::SpongeRandomNatural => [
                ("sponge", "random"),
                ("sponge", "natural"),
                ("random", "natural"),
            ],
        }
    }
}

/// p-values of the three directed tests restricted to the first n samples
/// of each class.
#[derive(Debug, Clone, PartialEq)]
pub struct SignificancePoint {
    pub n: usize,
    pub p: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassComparisonReport {
    pub pairs: Vec<PairTest>,
    /// p-values as the per-class sample count grows, for how-many-samples
    /// plots.
    pub significance_trace: Vec<SignificancePoint>,
    /// Smallest traced n at which all three directed tests clear `alpha`.
    pub n_required: Option<usize>,
    pub alpha: f64,
}

/// Run the three directed U tests implied by `expected` over the class
/// samples, plus a significance-vs-sample-count trace.
pub fn compare_sample_classes(
    natural: &[f64],
    random: &[f64],
    sponge: &[f64],
    expected: ExpectedOrdering,
    alpha: f64,
) -> Result<ClassComparisonReport, StatsError> {
    if natural.is_empty() || random.is_empty() || sponge.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let class = |name: &str| -> &[f64] {
        match name {
            "natural" => natural,
            "random" => random,
            _ => sponge,
        }
    };

    let mut pairs = Vec::with_capacity(3);
    for (greater, lesser) in expected.pairs() {
        pairs.push(PairTest {
            greater,
            lesser,
            result: mann_whitney_u(class(greater), class(lesser))?,
        });
    }

    let max_n = natural.len().min(random.len()).min(sponge.len());
    let mut significance_trace = Vec::new();
    let mut n_required = None;
    let mut n = 5usize;
    while n <= max_n {
        let mut p = [1.0f64; 3];
        for (slot, (greater, lesser)) in p.iter_mut().zip(expected.pairs()) {
            *slot = mann_whitney_u(&class(greater)[..n], &class(lesser)[..n])?.p_one_sided;
        }
        if n_required.is_none() && p.iter().all(|v| *v < alpha) {
            n_required = Some(n);
        }
        significance_trace.push(SignificancePoint { n, p });
        if n == max_n {
            break;
        }
        n = (n + (n / 2).max(5)).min(max_n);
    }

    Ok(ClassComparisonReport {
        pairs,
        significance_trace,
        n_required,
        alpha,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum StatsError {
    EmptySample,
    NonFiniteValue(f64),
}

impl fmt::Display for StatsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StatsError::EmptySample => write!(f, "samples must be nonempty"),
            StatsError::NonFiniteValue(v) => write!(f, "sample value {v} is not finite"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for StatsError {}

/// Brute-force U by pair counting: `sum 1[a>b] + 0.5 * 1[a=b]`. Test oracle,
/// kept independent of the rank-based implementation.
pub fn pair_count_u(a: &[f64], b: &[f64]) -> f64 {
    let mut u = 0.0;
    for x in a {
        for y in b {
            if x > y {
                u += 1.0;
            } else if x == y {
                u += 0.5;
            }
        }
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::Rng;

    #[test]
    fn complete_separation_gives_zero_u() {
        let r = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(r.u_a, 0.0);
        assert_eq!(r.u_b, 4.0);
        assert!(r.p_one_sided > 0.5, "a is smaller, upper-tail p is large");
    }

    #[test]
    fn identical_multisets_split_u_evenly() {
        let a = [5.0, 7.0, 7.0, 9.0];
        let r = mann_whitney_u(&a, &a).unwrap();
        assert_eq!(r.u_a, (a.len() * a.len()) as f64 / 2.0);
    }

    #[test]
    fn interleaved_samples_match_pair_count_oracle() {
        let a = [1.0, 3.0, 5.0];
        let b = [2.0, 4.0, 6.0];
        let r = mann_whitney_u(&a, &b).unwrap();
        assert_eq!(r.u_a, pair_count_u(&a, &b));
        assert_eq!(r.u_b, pair_count_u(&b, &a));
        assert!(r.p_one_sided > 0.0 && r.p_one_sided <= 1.0);
    }

    #[test]
    fn u_sums_to_product_of_sizes() {
        let mut rng = crate::rng_from_seed(12);
        for _ in 0..50 {
            let n_a = rng.gen_range(1..10);
            let n_b = rng.gen_range(1..10);
            // Coarse grid forces plenty of ties.
            let a: Vec<f64> = (0..n_a).map(|_| rng.gen_range(0..5) as f64).collect();
            let b: Vec<f64> = (0..n_b).map(|_| rng.gen_range(0..5) as f64).collect();
            let r = mann_whitney_u(&a, &b).unwrap();
            assert_eq!(r.u_a + r.u_b, (n_a * n_b) as f64);
            assert_eq!(r.u_a, pair_count_u(&a, &b));
        }
    }

    #[test]
    fn all_identical_values_are_degenerate() {
        let r = mann_whitney_u(&[2.0; 6], &[2.0; 8]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_one_sided, 0.5);
    }

    #[test]
    fn p_decreases_as_separation_grows() {
        let base: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let mut last_p = 1.0;
        for shift in [0.5, 2.0, 8.0] {
            let shifted: Vec<f64> = base.iter().map(|v| v + shift).collect();
            let p = mann_whitney_u(&shifted, &base).unwrap().p_one_sided;
            assert!(p < last_p, "shift {shift}: p {p} did not decrease");
            last_p = p;
        }
    }

    #[test]
    fn empty_sample_is_rejected() {
        assert_eq!(mann_whitney_u(&[], &[1.0]), Err(StatsError::EmptySample));
    }

    #[test]
    fn disjoint_class_supports_give_tiny_p() {
        let natural: Vec<f64> = (0..50).map(|i| 10.0 + i as f64 * 0.01).collect();
        let random: Vec<f64> = (0..50).map(|i| 20.0 + i as f64 * 0.01).collect();
        let sponge: Vec<f64> = (0..50).map(|i| 30.0 + i as f64 * 0.01).collect();
        let report = compare_sample_classes(
            &natural,
            &random,
            &sponge,
            ExpectedOrdering::SpongeRandomNatural,
            0.01,
        )
        .unwrap();
        for pair in &report.pairs {
            assert!(
                pair.result.p_one_sided < 1e-6,
                "{} vs {}: p {}",
                pair.greater,
                pair.lesser,
                pair.result.p_one_sided
            );
        }
        assert!(report.n_required.is_some());
    }

    #[test]
    fn identical_classes_give_half_p() {
        let same = vec![1.0, 1.0, 1.0, 1.0, 1.0];
        let report = compare_sample_classes(
            &same,
            &same,
            &same,
            ExpectedOrdering::SpongeNaturalRandom,
            0.01,
        )
        .unwrap();
        for pair in &report.pairs {
            assert_eq!(pair.result.p_one_sided, 0.5);
            assert!(pair.result.degenerate);
        }
        assert!(report.n_required.is_none());
    }
}
