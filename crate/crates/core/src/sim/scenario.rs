use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::ThreeWayData;
use crate::em::MixtureParams;
use crate::error::{Error, Result};
use crate::matnorm::{matnorm_sample, SpdMatrix};
use crate::scalar::Scalar;

/// Committed zero patterns of the three block-structured row precisions.
pub const BLOCK_PATTERNS: &str = include_str!("../../fixtures/block_patterns.txt");

/// Off-diagonal weight inside a block.
pub const BLOCK_EDGE: f64 = 0.4;
/// Added to the absolute row sum to form each diagonal entry.
pub const DIAGONAL_MARGIN: f64 = 0.5;
/// Shared diagonal of the block precisions: the largest row sum over the
/// three patterns (four edges of 0.4) plus the margin.
pub const BLOCK_DIAGONAL: f64 = 4.0 * BLOCK_EDGE + DIAGONAL_MARGIN;
pub const ER_WEIGHT_RANGE: (f64, f64) = (0.3, 0.6);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioName {
    AlternatedBlocks,
    SparseAtRandom,
}

impl std::str::FromStr for ScenarioName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alternated-blocks" | "blocks" => Ok(ScenarioName::AlternatedBlocks),
            "sparse-at-random" | "random" => Ok(ScenarioName::SparseAtRandom),
            other => Err(Error::InvalidArgument(format!("unknown scenario `{other}`"))),
        }
    }
}

impl std::fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScenarioName::AlternatedBlocks => "alternated-blocks",
            ScenarioName::SparseAtRandom => "sparse-at-random",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: ScenarioName,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub k: usize,
    pub tau: Vec<f64>,
    /// Edge probabilities of the Erdős–Rényi row precisions, one per component.
    pub er_probs: Vec<f64>,
    /// Edge probability of the Erdős–Rényi column precisions.
    pub gamma_prob: f64,
    /// Multiplier applied to the unit-scale mean patterns.
    pub mean_scale: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(name: ScenarioName, seed: u64) -> Self {
        Self {
            name,
            n: 150,
            p: 10,
            q: 5,
            k: 3,
            tau: vec![1.0 / 3.0; 3],
            er_probs: vec![0.2, 0.5, 0.8],
            gamma_prob: 0.3,
            mean_scale: DEFAULT_MEAN_SCALE,
            seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    /// Same scenario at another shape, with equal mixing weights.
    pub fn with_shape(&self, n: usize, p: usize, q: usize, k: usize) -> Self {
        Self {
            n,
            p,
            q,
            k,
            tau: vec![1.0 / k as f64; k],
            er_probs: (0..k).map(|i| self.er_probs[i % self.er_probs.len()]).collect(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 || self.q == 0 || self.k == 0 {
            return Err(Error::InvalidArgument("scenario dimensions must be positive".into()));
        }
        if self.tau.len() != self.k || self.er_probs.len() != self.k {
            return Err(Error::InvalidArgument(format!(
                "tau has {} and er_probs {} entries for K = {}",
                self.tau.len(),
                self.er_probs.len(),
                self.k
            )));
        }
        let sum: f64 = self.tau.iter().sum();
        if self.tau.iter().any(|&t| !(t > 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument("tau must be a positive probability vector".into()));
        }
        for &pr in self.er_probs.iter().chain(std::iter::once(&self.gamma_prob)) {
            if !(pr > 0.0 && pr <= 1.0) {
                return Err(Error::InvalidArgument(format!("edge probability {pr} is outside (0, 1]")));
            }
        }
        if self.name == ScenarioName::AlternatedBlocks && (self.p != 10 || self.k != 3) {
            return Err(Error::InvalidArgument("the block scenario is defined for p = 10 and K = 3".into()));
        }
        if !(self.mean_scale.is_finite()) {
            return Err(Error::InvalidArgument("mean_scale must be finite".into()));
        }
        Ok(())
    }
}

pub const DEFAULT_MEAN_SCALE: f64 = 1.0;

/// Erdős–Rényi graph on `d` nodes; edges get weights uniform on ±[0.3, 0.6]
/// and each diagonal entry is its absolute row sum plus 0.5.
pub fn gen_er_precision<F: Scalar, R: Rng + ?Sized>(d: usize, prob: f64, rng: &mut R) -> Result<SpdMatrix<F>> {
    if !(prob > 0.0 && prob <= 1.0) {
        return Err(Error::InvalidArgument(format!("edge probability {prob} is outside (0, 1]")));
    }
    let mut a = Array2::<f64>::zeros((d, d));
    for i in 0..d {
        for j in (i + 1)..d {
            if rng.random::<f64>() < prob {
                let mag = rng.random_range(ER_WEIGHT_RANGE.0..=ER_WEIGHT_RANGE.1);
                let w = if rng.random::<bool>() { mag } else { -mag };
                a[[i, j]] = w;
                a[[j, i]] = w;
            }
        }
    }
    dominant_diagonal(a)
}

fn dominant_diagonal<F: Scalar>(mut a: Array2<f64>) -> Result<SpdMatrix<F>> {
    for i in 0..a.nrows() {
        let s: f64 = a.row(i).iter().map(|v| v.abs()).sum();
        a[[i, i]] = s + DIAGONAL_MARGIN;
    }
    SpdMatrix::new(a.mapv(F::lit))
}

/// Zero pattern of block row precision `k` (1-based) as read from the fixture.
pub fn block_pattern(k: usize) -> Result<Vec<Vec<bool>>> {
    let header = format!("omega {k}");
    let mut lines = BLOCK_PATTERNS.lines();
    if !lines.any(|l| l.trim() == header) {
        return Err(Error::InvalidArgument(format!("no block pattern for component {k}")));
    }
    let rows: Vec<Vec<bool>> = lines
        .take_while(|l| !l.starts_with("omega"))
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().chars().map(|c| c == '1').collect())
        .collect();
    Ok(rows)
}

/// Renders a precision's zero pattern in the fixture's text layout.
pub fn render_pattern<F: Scalar>(theta: &SpdMatrix<F>) -> String {
    let v = theta.values();
    let mut out = String::new();
    for row in v.rows() {
        out.extend(row.iter().map(|&x| if x != F::zero() { '1' } else { '0' }));
        out.push('\n');
    }
    out
}

/// Block row precision `k ∈ {1, 2, 3}`: weight 0.4 inside blocks and the
/// common diagonal `BLOCK_DIAGONAL`, so every row is dominant.
pub fn gen_block_precision<F: Scalar>(k: usize) -> Result<SpdMatrix<F>> {
    if !(1..=3).contains(&k) {
        return Err(Error::InvalidArgument(format!("block component must be 1, 2 or 3, got {k}")));
    }
    let pattern = block_pattern(k)?;
    let d = pattern.len();
    let mut a = Array2::<f64>::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            if i == j {
                a[[i, j]] = BLOCK_DIAGONAL;
            } else if pattern[i][j] {
                a[[i, j]] = BLOCK_EDGE;
            }
        }
    }
    SpdMatrix::new(a.mapv(F::lit))
}

/// Unit-scale patterns of the informative rows 1, 3, 5, 7, 9 (1-based). Each
/// informative row is active in one or two components only.
const MEAN_PATTERNS: [[[f64; 5]; 5]; 3] = [
    [
        [1.0, 1.0, 1.0, 1.0, 1.0],
        [1.0, -1.0, 1.0, -1.0, 1.0],
        [0.0; 5],
        [0.0; 5],
        [0.0; 5],
    ],
    [
        [0.0; 5],
        [0.0; 5],
        [1.0, 1.0, 1.0, 1.0, 1.0],
        [-1.0, 1.0, -1.0, 1.0, -1.0],
        [0.0; 5],
    ],
    [
        [0.0; 5],
        [0.0; 5],
        [0.0; 5],
        [0.0; 5],
        [1.0, 1.0, -1.0, -1.0, 1.0],
    ],
];

/// The three 10 × 5 true means: rows 2, 4, 6, 8, 10 are zero everywhere and
/// the others follow fixed patterns multiplied by `scale`.
pub fn gen_true_means<F: Scalar>(scale: f64) -> Vec<Array2<F>> {
    MEAN_PATTERNS
        .iter()
        .map(|pat| {
            let mut m = Array2::<F>::zeros((10, 5));
            for (slot, row) in pat.iter().enumerate() {
                for (c, &v) in row.iter().enumerate() {
                    m[[2 * slot, c]] = F::lit(scale * v);
                }
            }
            m
        })
        .collect()
}

/// Means for other shapes: every second row (1-based even) is zero; the rest
/// are deterministic sign patterns that differ between components.
pub fn gen_means_for_shape<F: Scalar>(k: usize, p: usize, q: usize, scale: f64) -> Vec<Array2<F>> {
    if (k, p, q) == (3, 10, 5) {
        return gen_true_means(scale);
    }
    (0..k)
        .map(|comp| {
            Array2::from_shape_fn((p, q), |(r, c)| {
                if r % 2 == 1 {
                    F::zero()
                } else {
                    let phase = (comp * 7 + r * 3 + c) as f64;
                    let sign = if (comp + r / 2 + c) % 2 == 0 { 1.0 } else { -1.0 };
                    F::lit(scale * sign * (0.75 + 0.25 * phase.sin()))
                }
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SimulatedData<F> {
    pub data: ThreeWayData<F>,
    /// 0-based component of each unit.
    pub labels: Vec<usize>,
    pub params: MixtureParams<F>,
}

/// Draws the true parameters and `n` units, deterministically in `spec.seed`.
pub fn simulate_dataset<F: Scalar>(spec: &ScenarioSpec) -> Result<SimulatedData<F>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let omegas: Vec<SpdMatrix<F>> = match spec.name {
        ScenarioName::AlternatedBlocks => (1..=3).map(gen_block_precision).collect::<Result<_>>()?,
        ScenarioName::SparseAtRandom => spec
            .er_probs
            .iter()
            .map(|&pr| gen_er_precision(spec.p, pr, &mut rng))
            .collect::<Result<_>>()?,
    };
    let gammas: Vec<SpdMatrix<F>> = (0..spec.k)
        .map(|_| gen_er_precision(spec.q, spec.gamma_prob, &mut rng))
        .collect::<Result<_>>()?;
    let means = gen_means_for_shape(spec.k, spec.p, spec.q, spec.mean_scale);
    let params = MixtureParams::new(spec.tau.iter().map(|&t| F::lit(t)).collect(), means, omegas, gammas)?;
    let sigmas: Vec<SpdMatrix<F>> = params.omegas.iter().map(|o| o.inverse_spd()).collect::<Result<_>>()?;
    let psis: Vec<SpdMatrix<F>> = params.gammas.iter().map(|g| g.inverse_spd()).collect::<Result<_>>()?;

    let picker = WeightedIndex::new(&spec.tau).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let labels: Vec<usize> = (0..spec.n).map(|_| picker.sample(&mut rng)).collect();
    let units = labels
        .iter()
        .map(|&l| matnorm_sample(params.means[l].view(), &sigmas[l], &psis[l], &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let data = ThreeWayData::new(units)?;
    Ok(SimulatedData { data, labels, params })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_round_trip() {
        let mut text = String::new();
        for k in 1..=3 {
            text.push_str(&format!("omega {k}\n"));
            text.push_str(&render_pattern(&gen_block_precision::<f64>(k).unwrap()));
        }
        assert_eq!(text, BLOCK_PATTERNS);
    }

    #[test]
    fn zero_rows() {
        let means = gen_true_means::<f64>(1.0);
        for m in &means {
            for r in [1, 3, 5, 7, 9] {
                assert!(m.row(r).iter().all(|&v| v == 0.0));
            }
        }
        for r in [0, 2, 4, 6, 8] {
            assert!(means.iter().any(|m| m.row(r).iter().any(|&v| v != 0.0)));
        }
    }

    #[test]
    fn complete_and_empty_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let full: SpdMatrix<f64> = gen_er_precision(6, 1.0, &mut rng).unwrap();
        for ((i, j), &v) in full.values().indexed_iter() {
            assert!(i == j || v != 0.0);
        }
        let empty: SpdMatrix<f64> = gen_er_precision(6, 1e-300, &mut rng).unwrap();
        for ((i, j), &v) in empty.values().indexed_iter() {
            assert!(i == j || v == 0.0);
        }
    }

    #[test]
    fn same_seed_same_data() {
        let spec = ScenarioSpec::new(ScenarioName::SparseAtRandom, 11);
        let a = simulate_dataset::<f64>(&spec).unwrap();
        let b = simulate_dataset::<f64>(&spec).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.data.units(), b.data.units());
    }
}
