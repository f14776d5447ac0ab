//! Threat model and per-cell risk surface.
//!
//! Pipeline: detection curve per threat, convolved with the threat's
//! locational prior; survival composition across threats; impact weighting;
//! worst-case dilation over the formation footprint; additive log cost.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::terrain::{Cell, CostGraph, TerrainGrid};

/// Clamp applied before the log transform so fully exposed cells keep a finite cost.
pub const LOG_RISK_EPSILON: f64 = 1e-9;

/// Row-major `f64` raster with the same layout as the terrain file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Raster {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl Raster {
    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Raster {
            rows,
            cols,
            values: vec![value; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(Cell) -> f64) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                values.push(f(Cell::new(r, c)));
            }
        }
        Raster { rows, cols, values }
    }

    #[inline]
    pub fn get(&self, cell: Cell) -> f64 {
        self.values[cell.row * self.cols + cell.col]
    }

    #[inline]
    pub fn set(&mut self, cell: Cell, value: f64) {
        self.values[cell.row * self.cols + cell.col] = value;
    }

    pub fn same_shape(&self, other: &Raster) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn check_shape(&self, field: &str, rows: usize, cols: usize) -> Result<()> {
        if self.rows != rows || self.cols != cols || self.values.len() != rows * cols {
            return Err(Error::shape(field, rows * cols, self.values.len()));
        }
        Ok(())
    }
}

/// Plateau-decay detection curve parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionParams {
    /// Effective range, meters.
    pub range_m: f64,
    /// Fraction of the range inside which detection is certain.
    pub plateau: f64,
    /// Decay exponent.
    pub decay: f64,
}

impl DetectionParams {
    pub fn new(range_m: f64, plateau: f64, decay: f64) -> Result<Self> {
        if !(range_m > 0.0 && range_m.is_finite()) {
            return Err(Error::validation(
                "R_m",
                "range must be positive and finite",
            ));
        }
        if !(plateau > 0.0 && plateau < 1.0) {
            return Err(Error::validation(
                "phi",
                "plateau fraction must lie in (0, 1)",
            ));
        }
        if !(decay > 0.0 && decay.is_finite()) {
            return Err(Error::validation("p", "decay exponent must be positive"));
        }
        Ok(DetectionParams {
            range_m,
            plateau,
            decay,
        })
    }
}

/// Probability of detection at distance `d` meters from the sensor.
pub fn detection_probability(params: &DetectionParams, d: f64) -> f64 {
    let r = params.range_m;
    let inner = params.plateau * r;
    if d <= inner {
        1.0
    } else if d >= r {
        0.0
    } else {
        let x = (d - inner) / (r - inner);
        (1.0 - x * x).powf(params.decay)
    }
}

/// Consequence factor of a detection, constant or per cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Impact {
    Scalar(f64),
    Raster(Vec<f64>),
}

impl Default for Impact {
    fn default() -> Self {
        Impact::Scalar(1.0)
    }
}

impl Impact {
    fn validate(&self) -> Result<()> {
        let ok = |v: &f64| (0.0..=1.0).contains(v);
        let valid = match self {
            Impact::Scalar(v) => ok(v),
            Impact::Raster(vs) => vs.iter().all(ok),
        };
        if valid {
            Ok(())
        } else {
            Err(Error::validation("impact", "values must lie in [0, 1]"))
        }
    }

    #[inline]
    pub(crate) fn at(&self, index: usize) -> f64 {
        match self {
            Impact::Scalar(v) => *v,
            Impact::Raster(vs) => vs[index],
        }
    }
}

/// Sparse, normalized locational prior of one threat.
#[derive(Clone, Debug, PartialEq)]
pub struct SparsePrior {
    cells: Vec<(Cell, f64)>,
}

impl SparsePrior {
    /// Normalizes weights to sum to one; zero-weight cells are dropped.
    pub fn new(cells: Vec<(Cell, f64)>) -> Result<Self> {
        if cells.iter().any(|&(_, w)| !(w >= 0.0 && w.is_finite())) {
            return Err(Error::validation(
                "prior",
                "weights must be finite and >= 0",
            ));
        }
        let total: f64 = cells.iter().map(|&(_, w)| w).sum();
        if !(total > 0.0) {
            return Err(Error::validation(
                "prior",
                "weights must have a positive sum",
            ));
        }
        let cells = cells
            .into_iter()
            .filter(|&(_, w)| w > 0.0)
            .map(|(c, w)| (c, w / total))
            .collect();
        Ok(SparsePrior { cells })
    }

    pub fn dirac(cell: Cell) -> Self {
        SparsePrior {
            cells: vec![(cell, 1.0)],
        }
    }

    /// Uniform over all cells whose centroid lies within `radius_m` of `center`.
    pub fn disk(center: Cell, radius_m: f64, rows: usize, cols: usize, cell_size: f64) -> Self {
        let k = (radius_m / cell_size).floor() as isize;
        let mut cells = Vec::new();
        for dr in -k..=k {
            for dc in -k..=k {
                let (r, c) = (center.row as isize + dr, center.col as isize + dc);
                if r < 0 || c < 0 || r as usize >= rows || c as usize >= cols {
                    continue;
                }
                if ((dr * dr + dc * dc) as f64).sqrt() * cell_size <= radius_m + 1e-9 {
                    cells.push((Cell::new(r as usize, c as usize), 1.0));
                }
            }
        }
        SparsePrior::new(cells).expect("disk contains its center")
    }

    pub fn cells(&self) -> &[(Cell, f64)] {
        &self.cells
    }

    /// Prior-weighted mean location in planar meters.
    pub fn mean_location(&self, grid: &TerrainGrid) -> [f64; 2] {
        self.cells.iter().fold([0.0, 0.0], |acc, &(c, w)| {
            let p = grid.centroid(c);
            [acc[0] + w * p[0], acc[1] + w * p[1]]
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct PriorFile {
    #[serde(serialize_with = "integer_indices")]
    cells: Vec<[f64; 3]>,
}

/// Writes `[row, col, weight]` with integral row/col.
fn integer_indices<S: serde::Serializer>(
    cells: &[[f64; 3]],
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(cells.iter().map(|&[r, c, w]| (r as u64, c as u64, w)))
}

/// One threat as it appears in a threat file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThreatFile {
    pub id: String,
    #[serde(rename = "R_m")]
    pub range_m: f64,
    pub phi: f64,
    pub p: f64,
    #[serde(default)]
    pub impact: Impact,
    prior: PriorFile,
}

/// A threat: detection curve, consequence factor and locational prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ThreatFile", into = "ThreatFile")]
pub struct ThreatSpec {
    pub id: String,
    pub detection: DetectionParams,
    pub impact: Impact,
    pub prior: SparsePrior,
}

impl TryFrom<ThreatFile> for ThreatSpec {
    type Error = Error;

    fn try_from(f: ThreatFile) -> Result<Self> {
        let detection = DetectionParams::new(f.range_m, f.phi, f.p)?;
        f.impact.validate()?;
        let mut cells = Vec::with_capacity(f.prior.cells.len());
        for [r, c, w] in f.prior.cells {
            if r < 0.0 || c < 0.0 || r.fract() != 0.0 || c.fract() != 0.0 {
                return Err(Error::validation(
                    "prior.cells",
                    format!("row/col must be non-negative integers, got [{r}, {c}]"),
                ));
            }
            cells.push((Cell::new(r as usize, c as usize), w));
        }
        Ok(ThreatSpec {
            id: f.id,
            detection,
            impact: f.impact,
            prior: SparsePrior::new(cells)?,
        })
    }
}

impl From<ThreatSpec> for ThreatFile {
    fn from(t: ThreatSpec) -> Self {
        ThreatFile {
            id: t.id,
            range_m: t.detection.range_m,
            phi: t.detection.plateau,
            p: t.detection.decay,
            impact: t.impact,
            prior: PriorFile {
                cells: t
                    .prior
                    .cells
                    .iter()
                    .map(|&(c, w)| [c.row as f64, c.col as f64, w])
                    .collect(),
            },
        }
    }
}

impl ThreatSpec {
    pub fn new(
        id: impl Into<String>,
        detection: DetectionParams,
        impact: Impact,
        prior: SparsePrior,
    ) -> Result<Self> {
        impact.validate()?;
        Ok(ThreatSpec {
            id: id.into(),
            detection,
            impact,
            prior,
        })
    }

    /// Threat known to sit at a single cell, with unit impact.
    pub fn point(id: impl Into<String>, cell: Cell, detection: DetectionParams) -> Self {
        ThreatSpec {
            id: id.into(),
            detection,
            impact: Impact::Scalar(1.0),
            prior: SparsePrior::dirac(cell),
        }
    }

    /// Checks prior support and impact raster against the grid shape.
    pub fn check_against(&self, grid: &TerrainGrid) -> Result<()> {
        if let Some(&(c, _)) = self.prior.cells.iter().find(|(c, _)| !grid.contains(*c)) {
            return Err(Error::validation(
                "prior.cells",
                format!(
                    "threat `{}` has prior cell {c:?} outside the {}x{} grid",
                    self.id,
                    grid.rows(),
                    grid.cols()
                ),
            ));
        }
        if let Impact::Raster(vs) = &self.impact {
            if vs.len() != grid.len() {
                return Err(Error::shape("impact", grid.len(), vs.len()));
            }
        }
        Ok(())
    }

    /// Cells within detection range of some prior support cell, i.e. the only
    /// cells where this threat's expected detection can be non-zero.
    pub fn footprint(&self, grid: &TerrainGrid, extra_m: f64) -> Vec<bool> {
        let mut mask = vec![false; grid.len()];
        let reach = self.detection.range_m + extra_m;
        for &(src, _) in &self.prior.cells {
            for_each_within(grid, src, reach, |cell, _| mask[grid.index(cell)] = true);
        }
        mask
    }
}

/// Visits every in-grid cell whose centroid distance from `center` is `<= radius_m`.
pub(crate) fn for_each_within(
    grid: &TerrainGrid,
    center: Cell,
    radius_m: f64,
    mut f: impl FnMut(Cell, f64),
) {
    let k = (radius_m / grid.cell_size()).floor() as isize;
    let (rows, cols) = (grid.rows() as isize, grid.cols() as isize);
    let r0 = (center.row as isize - k).max(0);
    let r1 = (center.row as isize + k).min(rows - 1);
    let c0 = (center.col as isize - k).max(0);
    let c1 = (center.col as isize + k).min(cols - 1);
    for r in r0..=r1 {
        for c in c0..=c1 {
            let cell = Cell::new(r as usize, c as usize);
            let d = grid.distance(center, cell);
            if d <= radius_m {
                f(cell, d);
            }
        }
    }
}

/// Expected detection probability of one threat at every cell: the detection
/// curve convolved with the locational prior, on planar centroid distances.
pub fn expected_detection(threat: &ThreatSpec, grid: &TerrainGrid) -> Result<Raster> {
    threat.check_against(grid)?;
    let mut out = Raster::filled(grid.rows(), grid.cols(), 0.0);
    let range = threat.detection.range_m;
    for &(src, w) in &threat.prior.cells {
        for_each_within(grid, src, range, |cell, d| {
            let p = detection_probability(&threat.detection, d);
            if p > 0.0 {
                out.values[grid.index(cell)] += w * p;
            }
        });
    }
    for v in &mut out.values {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(out)
}

/// Survival composition `1 - prod(1 - p_i)`; no threats gives an all-zero raster.
pub fn combine_threats(rows: usize, cols: usize, per_threat: &[Raster]) -> Result<Raster> {
    let survival = survival_product(rows, cols, per_threat)?;
    Ok(Raster {
        rows,
        cols,
        values: survival.values.iter().map(|s| 1.0 - s).collect(),
    })
}

/// `prod(1 - p_i)` per cell, in the order given.
pub(crate) fn survival_product(rows: usize, cols: usize, per_threat: &[Raster]) -> Result<Raster> {
    let mut survival = Raster::filled(rows, cols, 1.0);
    for (i, p) in per_threat.iter().enumerate() {
        p.check_shape(&format!("threat raster {i}"), rows, cols)?;
        if p.values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::validation(
                format!("threat raster {i}"),
                "probabilities must lie in [0, 1]",
            ));
        }
        for (s, v) in survival.values.iter_mut().zip(&p.values) {
            *s *= 1.0 - v;
        }
    }
    Ok(survival)
}

/// Pointwise `p_det * impact`.
pub fn risk_surface(p_det: &Raster, impact: &Impact) -> Result<Raster> {
    impact.validate()?;
    if let Impact::Raster(vs) = impact {
        if vs.len() != p_det.values.len() {
            return Err(Error::shape("impact", p_det.values.len(), vs.len()));
        }
    }
    Ok(Raster {
        rows: p_det.rows,
        cols: p_det.cols,
        values: p_det
            .values
            .iter()
            .enumerate()
            .map(|(i, p)| p * impact.at(i))
            .collect(),
    })
}

/// Cell offsets of a disk neighbourhood of radius `radius_m`.
#[derive(Clone, Debug)]
pub struct Disk {
    offsets: Vec<(isize, isize)>,
}

impl Disk {
    pub fn new(radius_m: f64, cell_size: f64) -> Self {
        let radius = radius_m.max(0.0);
        let k = (radius / cell_size + 1e-9).floor() as isize;
        let limit = (radius / cell_size).powi(2) + 1e-9;
        let mut offsets = Vec::new();
        for dr in -k..=k {
            for dc in -k..=k {
                if ((dr * dr + dc * dc) as f64) <= limit {
                    offsets.push((dr, dc));
                }
            }
        }
        Disk { offsets }
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Maximum of `raster` over the disk centred on `cell`.
    pub fn max_at(&self, raster: &Raster, cell: Cell) -> f64 {
        let (rows, cols) = (raster.rows as isize, raster.cols as isize);
        let mut best = f64::NEG_INFINITY;
        for &(dr, dc) in &self.offsets {
            let r = cell.row as isize + dr;
            let c = cell.col as isize + dc;
            if r >= 0 && c >= 0 && r < rows && c < cols {
                best = best.max(raster.values[(r * cols + c) as usize]);
            }
        }
        best
    }
}

/// Worst-case risk over a disk of radius `formation_width / 2` around each cell.
pub fn formation_dilate(risk: &Raster, formation_width: f64, cell_size: f64) -> Raster {
    let disk = Disk::new(formation_width / 2.0, cell_size);
    if disk.len() <= 1 {
        return risk.clone();
    }
    Raster::from_fn(risk.rows, risk.cols, |cell| disk.max_at(risk, cell))
}

/// Per-cell log cost `-ln(1 - min(r, 1 - eps))`.
#[inline]
pub fn log_cost_value(risk: f64) -> f64 {
    let r = risk.clamp(0.0, 1.0 - LOG_RISK_EPSILON);
    -(-r).ln_1p()
}

pub fn log_cost(risk_form: &Raster) -> Raster {
    Raster {
        rows: risk_form.rows,
        cols: risk_form.cols,
        values: risk_form
            .values
            .iter()
            .map(|&r| log_cost_value(r))
            .collect(),
    }
}

/// Survival probability `exp(-sum of log cost)` along a cell path, start excluded.
pub fn path_survival(graph: &CostGraph, path: &[Cell]) -> Result<f64> {
    let nodes = graph.path_nodes(path)?;
    Ok((-graph.path_totals(&nodes).log_risk).exp())
}

/// Every layer of the risk pipeline for one formation width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskField {
    pub formation_width: f64,
    pub p_det: Raster,
    pub impact: Raster,
    pub risk: Raster,
    pub risk_form: Raster,
    pub log_risk: Raster,
    /// `prod(1 - p_i)` over threats, kept so further threats can be composed in.
    #[serde(skip)]
    pub(crate) survival: Option<Raster>,
}

impl RiskField {
    /// Impact per cell is the largest impact among the threats that can detect
    /// there, and 0 where none can.
    pub fn compute(
        grid: &TerrainGrid,
        threats: &[ThreatSpec],
        formation_width: f64,
    ) -> Result<Self> {
        if !(formation_width >= 0.0 && formation_width.is_finite()) {
            return Err(Error::validation(
                "formation_width_m",
                "must be finite and >= 0",
            ));
        }
        let per_threat = threats
            .iter()
            .map(|t| expected_detection(t, grid))
            .collect::<Result<Vec<_>>>()?;
        let survival = survival_product(grid.rows(), grid.cols(), &per_threat)?;
        let impact = combined_impact(grid, threats, &per_threat);
        let p_det = Raster {
            rows: grid.rows(),
            cols: grid.cols(),
            values: survival.values.iter().map(|s| 1.0 - s).collect(),
        };
        let risk = risk_surface(&p_det, &Impact::Raster(impact.values.clone()))?;
        let risk_form = formation_dilate(&risk, formation_width, grid.cell_size());
        let log_risk = log_cost(&risk_form);
        Ok(RiskField {
            formation_width,
            p_det,
            impact,
            risk,
            risk_form,
            log_risk,
            survival: Some(survival),
        })
    }

    /// Graph snapshot carrying this field's dilated risk and log cost.
    pub fn apply_to(&self, graph: &CostGraph) -> Result<CostGraph> {
        if graph.rows() != self.risk_form.rows || graph.cols() != self.risk_form.cols {
            return Err(Error::shape(
                "risk field",
                graph.rows() * graph.cols(),
                self.risk_form.values.len(),
            ));
        }
        let risk = graph
            .nodes()
            .map(|n| self.risk_form.get(graph.cell(n)))
            .collect();
        let log_risk = graph
            .nodes()
            .map(|n| self.log_risk.get(graph.cell(n)))
            .collect();
        graph.with_risk(risk, log_risk)
    }
}

pub(crate) fn combined_impact(
    grid: &TerrainGrid,
    threats: &[ThreatSpec],
    per_threat: &[Raster],
) -> Raster {
    let mut impact = Raster::filled(grid.rows(), grid.cols(), 0.0);
    for (t, detection) in threats.iter().zip(per_threat) {
        raise_impact(&mut impact, t, detection, |_| {});
    }
    impact
}

/// Raises `impact` to the threat's impact wherever it has non-zero detection.
pub(crate) fn raise_impact(
    impact: &mut Raster,
    threat: &ThreatSpec,
    detection: &Raster,
    mut touched: impl FnMut(usize),
) {
    for (i, (v, &p)) in impact.values.iter_mut().zip(&detection.values).enumerate() {
        if p > 0.0 {
            touched(i);
            *v = v.max(threat.impact.at(i));
        }
    }
}
