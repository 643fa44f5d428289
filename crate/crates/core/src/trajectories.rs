//! Fourier measurement dictionaries along k-space trajectories.
//!
//! Rows are `(1/√n) exp(−2πi ω·t)` over the regular spatial grid
//! `t ∈ {0, 1/side, …, (side−1)/side}^dim` in row-major order, with `ω` in cycles
//! per field of view. Integer frequencies give the unitary DFT; off-grid
//! frequencies (radial spokes, spirals) break isotropy.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::block_model::BlockDictionary;
use crate::error::{Error, Result};
use crate::numerics::{CMat, ComplexMatrix, ComplexVector};

/// Regular sampling grid on the unit torus, one or two dimensions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct FrequencyGrid {
    sides: Vec<usize>,
}

impl FrequencyGrid {
    pub fn new(sides: Vec<usize>) -> Result<Self> {
        if sides.is_empty() || sides.len() > 2 {
            return Err(Error::usage("grid must have one or two dimensions"));
        }
        if sides.contains(&0) || sides.iter().product::<usize>() < 2 {
            return Err(Error::usage("grid must contain at least two points"));
        }
        Ok(FrequencyGrid { sides })
    }

    pub fn one_d(n: usize) -> Result<Self> {
        Self::new(vec![n])
    }

    pub fn two_d(rows: usize, cols: usize) -> Result<Self> {
        Self::new(vec![rows, cols])
    }

    pub fn dim(&self) -> usize {
        self.sides.len()
    }

    pub fn sides(&self) -> &[usize] {
        &self.sides
    }

    pub fn n(&self) -> usize {
        self.sides.iter().product()
    }

    /// Spatial sample points in row-major order.
    pub fn points(&self) -> Vec<Vec<f64>> {
        match self.sides.as_slice() {
            [s] => (0..*s).map(|i| vec![i as f64 / *s as f64]).collect(),
            [r, c] => (0..*r)
                .flat_map(|i| {
                    (0..*c).map(move |j| vec![i as f64 / *r as f64, j as f64 / *c as f64])
                })
                .collect(),
            _ => unreachable!("validated dimension"),
        }
    }

    fn require_2d(&self, what: &str) -> Result<(usize, usize)> {
        match self.sides.as_slice() {
            [r, c] => Ok((*r, *c)),
            _ => Err(Error::usage(format!("{what} needs a two-dimensional grid"))),
        }
    }
}

impl TryFrom<Vec<usize>> for FrequencyGrid {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<FrequencyGrid> for Vec<usize> {
    fn from(g: FrequencyGrid) -> Self {
        g.sides
    }
}

impl FromStr for FrequencyGrid {
    type Err = Error;
    /// `"64"` or `"16x16"`.
    fn from_str(s: &str) -> Result<Self> {
        let sides = s
            .split('x')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::usage(format!("invalid grid specification {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(sides)
    }
}

impl fmt::Display for FrequencyGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.sides.iter().map(ToString::to_string).collect();
        write!(f, "{}", parts.join("x"))
    }
}

fn row_entries(omega: &[f64], points: &[Vec<f64>]) -> Vec<Complex64> {
    let scale = 1.0 / (points.len() as f64).sqrt();
    points
        .iter()
        .map(|t| {
            let phase: f64 = omega.iter().zip(t).map(|(w, x)| w * x).sum();
            Complex64::from_polar(scale, -TAU * phase)
        })
        .collect()
}

/// Measurement row at frequency `omega`.
pub fn fourier_row(omega: &[f64], grid: &FrequencyGrid) -> Result<ComplexVector> {
    if omega.len() != grid.dim() {
        return Err(Error::usage(format!(
            "frequency has {} components, grid has dimension {}",
            omega.len(),
            grid.dim()
        )));
    }
    if omega.iter().any(|w| !w.is_finite()) {
        return Err(Error::usage("frequency must be finite"));
    }
    ComplexVector::from_slice(&row_entries(omega, &grid.points()))
}

/// Rows for a list of frequency blocks, assembled and validated.
pub fn dictionary_from_frequencies(
    grid: &FrequencyGrid,
    blocks: &[Vec<Vec<f64>>],
) -> Result<BlockDictionary> {
    let points = grid.points();
    let mats = blocks
        .iter()
        .map(|freqs| {
            let rows: Vec<Vec<Complex64>> = freqs.iter().map(|w| row_entries(w, &points)).collect();
            ComplexMatrix::from_rows(&rows)
        })
        .collect::<Result<Vec<_>>>()?;
    BlockDictionary::assemble(&mats)
}

fn integer_frequencies(grid: &FrequencyGrid) -> Vec<Vec<f64>> {
    match grid.sides() {
        [s] => (0..*s).map(|k| vec![k as f64]).collect(),
        [r, c] => (0..*r)
            .flat_map(|k| (0..*c).map(move |l| vec![k as f64, l as f64]))
            .collect(),
        _ => unreachable!(),
    }
}

/// One single-row block per integer frequency: the unitary DFT.
pub fn cartesian_isolated_dict(grid: &FrequencyGrid) -> Result<BlockDictionary> {
    let blocks: Vec<Vec<Vec<f64>>> = integer_frequencies(grid)
        .into_iter()
        .map(|w| vec![w])
        .collect();
    dictionary_from_frequencies(grid, &blocks)
}

/// One block per horizontal k-space line.
pub fn cartesian_line_dict(grid: &FrequencyGrid) -> Result<BlockDictionary> {
    let (rows, cols) = grid.require_2d("Cartesian line sampling")?;
    let blocks: Vec<Vec<Vec<f64>>> = (0..rows)
        .map(|k| (0..cols).map(|l| vec![k as f64, l as f64]).collect())
        .collect();
    dictionary_from_frequencies(grid, &blocks)
}

/// Placement of samples along each radial spoke.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadialOffset {
    /// `r_j = (j + 1/2) r_max / samples`: one-sided, never hits the center.
    #[default]
    HalfStep,
    /// `r_j = j r_max / samples`: every spoke starts at `ω = 0`.
    Centered,
    /// `r_j = (j + 1/2 − samples/2) 2 r_max / samples`: full diameter, center skipped.
    Diameter,
}

impl FromStr for RadialOffset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "half-step" => Ok(RadialOffset::HalfStep),
            "centered" => Ok(RadialOffset::Centered),
            "diameter" => Ok(RadialOffset::Diameter),
            _ => Err(Error::usage(format!("unknown radial offset policy {s:?}"))),
        }
    }
}

/// Angular range covered by the spokes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AngleSpan {
    /// `θ_k = kπ / spokes`.
    #[default]
    Half,
    /// `θ_k = 2kπ / spokes`.
    Full,
}

impl FromStr for AngleSpan {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "half" => Ok(AngleSpan::Half),
            "full" => Ok(AngleSpan::Full),
            _ => Err(Error::usage(format!("unknown angle span {s:?}"))),
        }
    }
}

/// Geometry of a radial trajectory beyond the spoke and sample counts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadialLayout {
    pub offset: RadialOffset,
    pub span: AngleSpan,
    /// Rotation of every spoke, as a fraction of the angular step.
    pub angle_offset: f64,
    /// `r_max` as a multiple of `side/2`.
    pub radius_scale: f64,
    /// Radii follow `r_max u^p` for the normalized positions `u`; `p = 1` is uniform spacing.
    pub radius_exponent: f64,
}

impl Default for RadialLayout {
    fn default() -> Self {
        RadialLayout {
            offset: RadialOffset::HalfStep,
            span: AngleSpan::Half,
            angle_offset: 0.0,
            radius_scale: 1.0,
            radius_exponent: 1.0,
        }
    }
}

impl RadialLayout {
    /// Rotated spokes with area-leaning radii; invertible on small square grids.
    ///
    /// The plain layout places two spokes on the k-space axes whenever the spoke
    /// count is even, and rows `u(r) ⊗ u(0)` then span only `side` dimensions.
    pub fn rotated() -> Self {
        RadialLayout {
            offset: RadialOffset::HalfStep,
            span: AngleSpan::Full,
            angle_offset: 0.25,
            radius_scale: 1.5,
            radius_exponent: 0.7,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.angle_offset.is_finite()) {
            return Err(Error::usage("angle offset must be finite"));
        }
        if !(self.radius_scale > 0.0 && self.radius_scale.is_finite()) {
            return Err(Error::usage("radius scale must be positive"));
        }
        if !(self.radius_exponent > 0.0 && self.radius_exponent.is_finite()) {
            return Err(Error::usage("radius exponent must be positive"));
        }
        Ok(())
    }

    fn radii(&self, samples: usize, r_max: f64) -> Vec<f64> {
        let s = samples as f64;
        let p = self.radius_exponent;
        (0..samples)
            .map(|j| {
                let j = j as f64;
                match self.offset {
                    RadialOffset::HalfStep => r_max * ((j + 0.5) / s).powf(p),
                    RadialOffset::Centered => r_max * (j / s).powf(p),
                    RadialOffset::Diameter => {
                        let u = 2.0 * (j + 0.5) / s - 1.0;
                        r_max * u.signum() * u.abs().powf(p)
                    }
                }
            })
            .collect()
    }
}

/// Frequencies of each spoke, one block per spoke.
pub fn radial_frequencies(
    grid: &FrequencyGrid,
    spokes: usize,
    samples_per_spoke: usize,
    layout: &RadialLayout,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let (rows, cols) = grid.require_2d("radial sampling")?;
    layout.validate()?;
    if spokes < 2 {
        return Err(Error::usage("radial sampling needs at least two spokes"));
    }
    if spokes * samples_per_spoke != grid.n() {
        return Err(Error::usage(format!(
            "spokes x samples = {} must equal n = {}",
            spokes * samples_per_spoke,
            grid.n()
        )));
    }
    let r_max = layout.radius_scale * rows.min(cols) as f64 / 2.0;
    let rs = layout.radii(samples_per_spoke, r_max);
    let arc = match layout.span {
        AngleSpan::Half => PI,
        AngleSpan::Full => TAU,
    };
    Ok((0..spokes)
        .map(|k| {
            let theta = arc * (k as f64 + layout.angle_offset) / spokes as f64;
            let (sin, cos) = theta.sin_cos();
            rs.iter().map(|r| vec![r * cos, r * sin]).collect()
        })
        .collect())
}

/// Radial spokes through k-space, one block per spoke.
pub fn radial_dict(
    grid: &FrequencyGrid,
    spokes: usize,
    samples_per_spoke: usize,
    layout: &RadialLayout,
) -> Result<BlockDictionary> {
    let blocks = radial_frequencies(grid, spokes, samples_per_spoke, layout)?;
    dictionary_from_frequencies(grid, &blocks).map_err(|e| {
        e.with_hint(
            "spokes produce linearly dependent rows; change the offset policy or rotate the spokes",
        )
    })
}

/// Default spiral turn count: adjacent turns about one grid cell apart, shifted a
/// quarter turn so samples do not line up on the k-space axes.
pub fn default_spiral_turns(grid: &FrequencyGrid) -> f64 {
    let side = grid.sides().iter().copied().min().unwrap_or(2);
    side as f64 / 2.0 + 0.25
}

/// Archimedean spiral `ω(τ) = r_max τ^p (cos 2π·turns·τ, sin 2π·turns·τ)` at `τ_j = (j+1)/n`,
/// with `r_max = radius_scale · side/2`. `p = 1` is the plain Archimedean spiral.
pub fn spiral_frequencies(
    grid: &FrequencyGrid,
    turns: f64,
    samples: usize,
    radius_scale: f64,
    radius_exponent: f64,
) -> Result<Vec<Vec<f64>>> {
    let (rows, cols) = grid.require_2d("spiral sampling")?;
    if !(turns > 0.0 && turns.is_finite()) {
        return Err(Error::usage("spiral needs a positive number of turns"));
    }
    if !(radius_scale > 0.0
        && radius_scale.is_finite()
        && radius_exponent > 0.0
        && radius_exponent.is_finite())
    {
        return Err(Error::usage(
            "spiral radius scale and exponent must be positive",
        ));
    }
    if samples != grid.n() {
        return Err(Error::usage(format!(
            "spiral samples ({samples}) must equal n = {}",
            grid.n()
        )));
    }
    let r_max = radius_scale * rows.min(cols) as f64 / 2.0;
    Ok((0..samples)
        .map(|j| {
            let tau = (j + 1) as f64 / samples as f64;
            let (sin, cos) = (TAU * turns * tau).sin_cos();
            let r = r_max * tau.powf(radius_exponent);
            vec![r * cos, r * sin]
        })
        .collect())
}

/// Spiral trajectory split into `arcs` contiguous blocks of equal length.
pub fn spiral_dict(
    grid: &FrequencyGrid,
    turns: f64,
    samples: usize,
    arcs: usize,
) -> Result<BlockDictionary> {
    spiral_dict_scaled(grid, turns, samples, arcs, 1.0, 1.0)
}

/// [`spiral_dict`] with an adjustable outer radius and radius law.
pub fn spiral_dict_scaled(
    grid: &FrequencyGrid,
    turns: f64,
    samples: usize,
    arcs: usize,
    radius_scale: f64,
    radius_exponent: f64,
) -> Result<BlockDictionary> {
    if arcs == 0 || !samples.is_multiple_of(arcs) {
        return Err(Error::usage(format!(
            "arc count {arcs} must divide the sample count {samples}"
        )));
    }
    let freqs = spiral_frequencies(grid, turns, samples, radius_scale, radius_exponent)?;
    let per_arc = samples / arcs;
    let blocks: Vec<Vec<Vec<f64>>> = freqs.chunks(per_arc).map(<[_]>::to_vec).collect();
    dictionary_from_frequencies(grid, &blocks).map_err(|e| {
        e.with_hint("spiral samples are linearly dependent; change turns or radius scale")
    })
}

fn log2_exact(n: usize) -> Option<usize> {
    n.is_power_of_two().then(|| n.trailing_zeros() as usize)
}

/// Orthonormal 1-D Haar synthesis matrix with `levels` decomposition levels.
pub fn haar_synthesis_1d(n: usize, levels: usize) -> Result<DMatrix<f64>> {
    let max_levels = log2_exact(n).ok_or_else(|| {
        Error::usage(format!("Haar transform needs a power-of-two size, got {n}"))
    })?;
    if levels > max_levels {
        return Err(Error::usage(format!(
            "{levels} levels exceed log2({n}) = {max_levels}"
        )));
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    // analysis matrix, column j = transform of e_j
    let mut analysis = DMatrix::<f64>::zeros(n, n);
    let mut buf = vec![0.0; n];
    for j in 0..n {
        let mut v = vec![0.0; n];
        v[j] = 1.0;
        let mut len = n;
        for _ in 0..levels {
            let half = len / 2;
            for i in 0..half {
                buf[i] = (v[2 * i] + v[2 * i + 1]) * h;
                buf[half + i] = (v[2 * i] - v[2 * i + 1]) * h;
            }
            v[..len].copy_from_slice(&buf[..len]);
            len = half;
        }
        for (i, x) in v.into_iter().enumerate() {
            analysis[(i, j)] = x;
        }
    }
    Ok(analysis.transpose())
}

/// Haar synthesis operator `Ψ` on the grid (tensor product in 2-D, row-major).
pub fn haar_synthesis(grid: &FrequencyGrid, levels: usize) -> Result<CMat> {
    let psi = match grid.sides() {
        [s] => haar_synthesis_1d(*s, levels)?,
        [r, c] => haar_synthesis_1d(*r, levels)?.kronecker(&haar_synthesis_1d(*c, levels)?),
        _ => unreachable!(),
    };
    Ok(psi.map(|x| Complex64::new(x, 0.0)))
}

/// Replace `A₀` by `A₀Ψ` for the Haar synthesis `Ψ`; blocks are preserved and `X` recomputed.
pub fn wavelet_compose(
    dict: &BlockDictionary,
    grid: &FrequencyGrid,
    levels: usize,
) -> Result<BlockDictionary> {
    if grid.n() != dict.n() {
        return Err(Error::usage(format!(
            "grid has {} points, dictionary has n = {}",
            grid.n(),
            dict.n()
        )));
    }
    if levels == 0 {
        return Ok(dict.clone());
    }
    dict.right_multiply(&haar_synthesis(grid, levels)?)
}

/// Declarative description of a generated dictionary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TrajectorySpec {
    CartesianIsolated {
        grid: FrequencyGrid,
    },
    CartesianLines {
        grid: FrequencyGrid,
    },
    Radial {
        grid: FrequencyGrid,
        spokes: usize,
        samples: usize,
        #[serde(flatten)]
        layout: RadialLayout,
    },
    Spiral {
        grid: FrequencyGrid,
        #[serde(default)]
        turns: Option<f64>,
        samples: usize,
        #[serde(default = "one")]
        arcs: usize,
        #[serde(default = "unit")]
        radius_scale: f64,
        #[serde(default = "unit")]
        radius_exponent: f64,
    },
}

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

impl TrajectorySpec {
    pub fn grid(&self) -> &FrequencyGrid {
        match self {
            TrajectorySpec::CartesianIsolated { grid }
            | TrajectorySpec::CartesianLines { grid }
            | TrajectorySpec::Radial { grid, .. }
            | TrajectorySpec::Spiral { grid, .. } => grid,
        }
    }

    pub fn build(&self) -> Result<BlockDictionary> {
        match self {
            TrajectorySpec::CartesianIsolated { grid } => cartesian_isolated_dict(grid),
            TrajectorySpec::CartesianLines { grid } => cartesian_line_dict(grid),
            TrajectorySpec::Radial {
                grid,
                spokes,
                samples,
                layout,
            } => radial_dict(grid, *spokes, *samples, layout),
            TrajectorySpec::Spiral {
                grid,
                turns,
                samples,
                arcs,
                radius_scale,
                radius_exponent,
            } => spiral_dict_scaled(
                grid,
                turns.unwrap_or_else(|| default_spiral_turns(grid)),
                *samples,
                *arcs,
                *radius_scale,
                *radius_exponent,
            ),
        }
    }
}
