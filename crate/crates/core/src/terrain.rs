//! World model: terrain raster, mobility model and the planning graph.
//!
//! Cells are addressed by `(row, col)`. The planar centroid of a cell is
//! `x = origin.x + col * cell_size`, `y = origin.y - row * cell_size`, so row 0
//! is the northern edge of the raster.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid cell address.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Cell { row, col }
    }

    /// Chebyshev adjacency (8-neighbourhood), excluding the cell itself.
    pub fn is_adjacent(self, other: Cell) -> bool {
        let dr = self.row.abs_diff(other.row);
        let dc = self.col.abs_diff(other.col);
        dr <= 1 && dc <= 1 && (dr + dc) > 0
    }

    pub fn is_diagonal_to(self, other: Cell) -> bool {
        self.row.abs_diff(other.row) == 1 && self.col.abs_diff(other.col) == 1
    }
}

impl fmt::Debug for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

impl From<[usize; 2]> for Cell {
    fn from([row, col]: [usize; 2]) -> Self {
        Cell { row, col }
    }
}

impl From<Cell> for [usize; 2] {
    fn from(c: Cell) -> Self {
        [c.row, c.col]
    }
}

impl From<Cell> for (usize, usize) {
    fn from(c: Cell) -> Self {
        (c.row, c.col)
    }
}

impl From<(usize, usize)> for Cell {
    fn from((row, col): (usize, usize)) -> Self {
        Cell { row, col }
    }
}

/// Geographic anchor of the raster origin, used only for waypoint export.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoAnchor {
    pub lat: f64,
    pub lon: f64,
}

/// Regular raster of square cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TerrainFile", into = "TerrainFile")]
pub struct TerrainGrid {
    rows: usize,
    cols: usize,
    cell_size: f64,
    origin: [f64; 2],
    elevation: Vec<f64>,
    land_cover: Vec<u16>,
    obstacle: Vec<bool>,
    geo_anchor: Option<GeoAnchor>,
}

/// On-disk layout of a terrain file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerrainFile {
    pub rows: usize,
    pub cols: usize,
    pub cell_size_m: f64,
    pub origin: [f64; 2],
    pub elevation: Vec<f64>,
    pub land_cover: Vec<u16>,
    pub obstacles: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geo_anchor: Option<GeoAnchor>,
}

impl TryFrom<TerrainFile> for TerrainGrid {
    type Error = Error;

    fn try_from(f: TerrainFile) -> Result<Self> {
        if f.obstacles.iter().any(|&o| o > 1) {
            return Err(Error::validation("obstacles", "values must be 0 or 1"));
        }
        TerrainGrid::new(
            f.rows,
            f.cols,
            f.cell_size_m,
            f.origin,
            f.elevation,
            f.land_cover,
            f.obstacles.into_iter().map(|o| o == 1).collect(),
        )
        .map(|g| g.with_geo_anchor(f.geo_anchor))
    }
}

impl From<TerrainGrid> for TerrainFile {
    fn from(g: TerrainGrid) -> Self {
        TerrainFile {
            rows: g.rows,
            cols: g.cols,
            cell_size_m: g.cell_size,
            origin: g.origin,
            elevation: g.elevation,
            land_cover: g.land_cover,
            obstacles: g.obstacle.into_iter().map(u8::from).collect(),
            geo_anchor: g.geo_anchor,
        }
    }
}

impl TerrainGrid {
    pub fn new(
        rows: usize,
        cols: usize,
        cell_size: f64,
        origin: [f64; 2],
        elevation: Vec<f64>,
        land_cover: Vec<u16>,
        obstacle: Vec<bool>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::validation("rows/cols", "must be positive"));
        }
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::validation(
                "cell_size_m",
                "must be positive and finite",
            ));
        }
        if !origin.iter().all(|v| v.is_finite()) {
            return Err(Error::validation("origin", "must be finite"));
        }
        let n = rows * cols;
        if elevation.len() != n {
            return Err(Error::shape("elevation", n, elevation.len()));
        }
        if land_cover.len() != n {
            return Err(Error::shape("land_cover", n, land_cover.len()));
        }
        if obstacle.len() != n {
            return Err(Error::shape("obstacles", n, obstacle.len()));
        }
        if let Some(i) = elevation.iter().position(|e| !e.is_finite()) {
            return Err(Error::validation(
                "elevation",
                format!("non-finite value at index {i}"),
            ));
        }
        Ok(TerrainGrid {
            rows,
            cols,
            cell_size,
            origin,
            elevation,
            land_cover,
            obstacle,
            geo_anchor: None,
        })
    }

    /// Flat, obstacle-free grid of a single land-cover class.
    pub fn flat(rows: usize, cols: usize, cell_size: f64, class: u16) -> Result<Self> {
        let n = rows * cols;
        TerrainGrid::new(
            rows,
            cols,
            cell_size,
            [0.0, 0.0],
            vec![0.0; n],
            vec![class; n],
            vec![false; n],
        )
    }

    pub fn with_geo_anchor(mut self, anchor: Option<GeoAnchor>) -> Self {
        self.geo_anchor = anchor;
        self
    }

    pub fn with_obstacle(mut self, cell: Cell, blocked: bool) -> Self {
        let i = self.index(cell);
        self.obstacle[i] = blocked;
        self
    }

    pub fn with_elevation(mut self, cell: Cell, elevation: f64) -> Self {
        let i = self.index(cell);
        self.elevation[i] = elevation;
        self
    }

    pub fn with_land_cover(mut self, cell: Cell, class: u16) -> Self {
        let i = self.index(cell);
        self.land_cover[i] = class;
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn geo_anchor(&self) -> Option<GeoAnchor> {
        self.geo_anchor
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.row < self.rows && cell.col < self.cols
    }

    /// Row-major index. Panics when the cell is outside the grid.
    pub fn index(&self, cell: Cell) -> usize {
        assert!(
            self.contains(cell),
            "cell {cell:?} outside {}x{} grid",
            self.rows,
            self.cols
        );
        cell.row * self.cols + cell.col
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index / self.cols, index % self.cols)
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.len()).map(|i| self.cell_at(i))
    }

    pub fn elevation(&self, cell: Cell) -> f64 {
        self.elevation[self.index(cell)]
    }

    pub fn land_cover(&self, cell: Cell) -> u16 {
        self.land_cover[self.index(cell)]
    }

    pub fn is_obstacle(&self, cell: Cell) -> bool {
        self.obstacle[self.index(cell)]
    }

    pub fn elevations(&self) -> &[f64] {
        &self.elevation
    }

    pub fn land_covers(&self) -> &[u16] {
        &self.land_cover
    }

    pub fn obstacles(&self) -> &[bool] {
        &self.obstacle
    }

    /// Planar centroid in meters.
    pub fn centroid(&self, cell: Cell) -> [f64; 2] {
        [
            self.origin[0] + cell.col as f64 * self.cell_size,
            self.origin[1] - cell.row as f64 * self.cell_size,
        ]
    }

    /// Euclidean distance between cell centroids, meters.
    pub fn distance(&self, a: Cell, b: Cell) -> f64 {
        let dr = a.row.abs_diff(b.row) as f64;
        let dc = a.col.abs_diff(b.col) as f64;
        dr.hypot(dc) * self.cell_size
    }

    /// In-grid 8-neighbours of a cell, in a fixed order.
    pub fn neighbors(&self, cell: Cell) -> impl Iterator<Item = Cell> + '_ {
        NEIGHBOR_OFFSETS.iter().filter_map(move |&(dr, dc)| {
            let r = cell.row as isize + dr;
            let c = cell.col as isize + dc;
            (r >= 0 && c >= 0 && (r as usize) < self.rows && (c as usize) < self.cols)
                .then(|| Cell::new(r as usize, c as usize))
        })
    }

    /// True when moving between two adjacent cells would clip an obstacle
    /// corner (only possible on diagonal moves).
    pub fn cuts_corner(&self, u: Cell, v: Cell) -> bool {
        u.is_diagonal_to(v)
            && (self.is_obstacle(Cell::new(u.row, v.col))
                || self.is_obstacle(Cell::new(v.row, u.col)))
    }

    /// Checks that every land-cover class is known to the mobility model.
    pub fn check_classes(&self, mobility: &MobilityModel) -> Result<()> {
        for (i, class) in self.land_cover.iter().enumerate() {
            if !mobility.class_speed.contains_key(class) {
                let c = self.cell_at(i);
                return Err(Error::validation(
                    "land_cover",
                    format!("class {class} at {c:?} has no speed in the mobility model"),
                ));
            }
        }
        Ok(())
    }
}

const NEIGHBOR_OFFSETS: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Path-level rule limiting sustained climbs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AscentRule {
    /// Number of trailing edges considered.
    pub window: usize,
    /// Maximum allowed sum of consecutive positive gradients inside the window.
    pub threshold: f64,
}

impl Default for AscentRule {
    fn default() -> Self {
        AscentRule {
            window: 4,
            threshold: 0.6,
        }
    }
}

/// Maps land cover and slope to vehicle speed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MobilityFile", into = "MobilityFile")]
pub struct MobilityModel {
    class_speed: BTreeMap<u16, f64>,
    /// `(|slope|, factor)` breakpoints, sorted by slope, first at slope 0.
    slope_factor: Vec<(f64, f64)>,
    max_slope: f64,
    ascent: AscentRule,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobilityFile {
    pub class_speed: BTreeMap<u16, f64>,
    pub slope_factor: Vec<[f64; 2]>,
    pub max_slope: f64,
    #[serde(default = "default_ascent_window")]
    pub ascent_window: usize,
    #[serde(default = "default_ascent_threshold")]
    pub ascent_threshold: f64,
}

fn default_ascent_window() -> usize {
    AscentRule::default().window
}

fn default_ascent_threshold() -> f64 {
    AscentRule::default().threshold
}

impl TryFrom<MobilityFile> for MobilityModel {
    type Error = Error;

    fn try_from(f: MobilityFile) -> Result<Self> {
        MobilityModel::new(
            f.class_speed,
            f.slope_factor.into_iter().map(|[s, k]| (s, k)).collect(),
            f.max_slope,
            AscentRule {
                window: f.ascent_window,
                threshold: f.ascent_threshold,
            },
        )
    }
}

impl From<MobilityModel> for MobilityFile {
    fn from(m: MobilityModel) -> Self {
        MobilityFile {
            class_speed: m.class_speed,
            slope_factor: m.slope_factor.into_iter().map(|(s, k)| [s, k]).collect(),
            max_slope: m.max_slope,
            ascent_window: m.ascent.window,
            ascent_threshold: m.ascent.threshold,
        }
    }
}

impl Default for MobilityModel {
    fn default() -> Self {
        MobilityModel::new(
            BTreeMap::from([(0, 5.0), (1, 4.0), (2, 3.0), (3, 2.0), (4, 1.0)]),
            vec![(0.0, 1.0), (0.1, 0.8), (0.2, 0.5), (0.3, 0.25), (0.4, 0.1)],
            0.4,
            AscentRule::default(),
        )
        .expect("default mobility model is valid")
    }
}

impl MobilityModel {
    pub fn new(
        class_speed: BTreeMap<u16, f64>,
        slope_factor: Vec<(f64, f64)>,
        max_slope: f64,
        ascent: AscentRule,
    ) -> Result<Self> {
        if class_speed.is_empty() {
            return Err(Error::validation(
                "class_speed",
                "at least one class is required",
            ));
        }
        for (class, speed) in &class_speed {
            if !(*speed > 0.0 && speed.is_finite()) {
                return Err(Error::validation(
                    "class_speed",
                    format!("speed for class {class} must be positive, got {speed}"),
                ));
            }
        }
        match slope_factor.first() {
            Some(&(s, k)) if s == 0.0 && k == 1.0 => {}
            _ => {
                return Err(Error::validation(
                    "slope_factor",
                    "first breakpoint must be [0, 1]",
                ))
            }
        }
        for w in slope_factor.windows(2) {
            let ((s0, k0), (s1, k1)) = (w[0], w[1]);
            if s1 <= s0 {
                return Err(Error::validation(
                    "slope_factor",
                    "breakpoint slopes must be strictly increasing",
                ));
            }
            if k1 > k0 {
                return Err(Error::validation(
                    "slope_factor",
                    "factors must be non-increasing in slope",
                ));
            }
        }
        if slope_factor.iter().any(|&(_, k)| !(0.0..=1.0).contains(&k)) {
            return Err(Error::validation(
                "slope_factor",
                "factors must lie in [0, 1]",
            ));
        }
        if !(max_slope > 0.0) {
            return Err(Error::validation("max_slope", "must be positive"));
        }
        if ascent.window == 0 || !(ascent.threshold > 0.0) {
            return Err(Error::validation(
                "ascent_window/ascent_threshold",
                "window must be >= 1 and threshold positive",
            ));
        }
        Ok(MobilityModel {
            class_speed,
            slope_factor,
            max_slope,
            ascent,
        })
    }

    /// Single-class model with a flat slope response up to `max_slope`.
    pub fn uniform(speed: f64) -> Self {
        MobilityModel::new(
            BTreeMap::from([(0, speed)]),
            vec![(0.0, 1.0)],
            f64::INFINITY,
            AscentRule::default(),
        )
        .expect("uniform mobility model")
    }

    pub fn with_class_speed(mut self, class: u16, speed: f64) -> Self {
        assert!(speed > 0.0);
        self.class_speed.insert(class, speed);
        self
    }

    pub fn class_speed(&self, class: u16) -> Option<f64> {
        self.class_speed.get(&class).copied()
    }

    pub fn classes(&self) -> &BTreeMap<u16, f64> {
        &self.class_speed
    }

    pub fn max_slope(&self) -> f64 {
        self.max_slope
    }

    pub fn ascent_rule(&self) -> AscentRule {
        self.ascent
    }

    /// Piecewise-linear speed factor for a gradient; sign is ignored.
    pub fn slope_factor(&self, slope: f64) -> f64 {
        let s = slope.abs();
        let pts = &self.slope_factor;
        let last = pts[pts.len() - 1];
        if s >= last.0 {
            return last.1;
        }
        let i = pts.partition_point(|&(x, _)| x <= s);
        let (x0, y0) = pts[i - 1];
        let (x1, y1) = pts[i];
        y0 + (y1 - y0) * (s - x0) / (x1 - x0)
    }
}

/// Signed gradient from `u` to `v`: positive when climbing.
pub fn derive_slope(grid: &TerrainGrid, u: Cell, v: Cell) -> Result<f64> {
    if !grid.contains(u) || !grid.contains(v) || !u.is_adjacent(v) {
        return Err(Error::Domain(format!(
            "slope requires adjacent in-grid cells, got {u:?} and {v:?}"
        )));
    }
    Ok((grid.elevation(v) - grid.elevation(u)) / grid.distance(u, v))
}

/// Traversal time in seconds, or `None` when the move is impassable.
///
/// Speed is taken from the land cover of the destination cell and scaled by
/// the slope factor of the directed gradient.
pub fn edge_time(
    grid: &TerrainGrid,
    mobility: &MobilityModel,
    u: Cell,
    v: Cell,
) -> Result<Option<f64>> {
    let slope = derive_slope(grid, u, v)?;
    if grid.is_obstacle(u) || grid.is_obstacle(v) || slope.abs() > mobility.max_slope {
        return Ok(None);
    }
    let class = grid.land_cover(v);
    let base = mobility.class_speed(class).ok_or_else(|| {
        Error::validation(
            "land_cover",
            format!("class {class} has no speed in the mobility model"),
        )
    })?;
    let speed = base * mobility.slope_factor(slope);
    if speed <= 0.0 {
        return Ok(None);
    }
    let t = grid.distance(u, v) / speed;
    Ok(t.is_finite().then_some(t))
}

/// Dense node handle inside a [`CostGraph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Directed half of an undirected grid edge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub to: NodeId,
    /// Seconds to traverse in this direction.
    pub time: f64,
    /// Seconds to traverse in the opposite direction.
    pub back_time: f64,
    /// Meters; identical in both directions.
    pub distance: f64,
    /// Signed gradient in this direction.
    pub slope: f64,
}

#[derive(Debug)]
struct Topology {
    rows: usize,
    cols: usize,
    cell_size: f64,
    origin: [f64; 2],
    cells: Vec<Cell>,
    node_of: Vec<u32>,
    offsets: Vec<usize>,
    edges: Vec<Edge>,
    ascent: AscentRule,
}

const NO_NODE: u32 = u32::MAX;

/// Immutable planning graph. Cloning is cheap: topology and risk layers are
/// shared, and [`CostGraph::with_risk`] produces a new snapshot without
/// touching the original.
#[derive(Clone, Debug)]
pub struct CostGraph {
    topo: Arc<Topology>,
    risk: Arc<Vec<f64>>,
    log_risk: Arc<Vec<f64>>,
}

/// 8-connected graph over free cells, no corner cutting; risk layers start at zero.
pub fn build_graph(grid: &TerrainGrid, mobility: &MobilityModel) -> Result<CostGraph> {
    grid.check_classes(mobility)?;
    let mut node_of = vec![NO_NODE; grid.len()];
    let mut cells = Vec::new();
    for (i, &blocked) in grid.obstacles().iter().enumerate() {
        if !blocked {
            node_of[i] = cells.len() as u32;
            cells.push(grid.cell_at(i));
        }
    }
    if cells.is_empty() {
        return Err(Error::EmptyGraph);
    }

    let mut offsets = Vec::with_capacity(cells.len() + 1);
    let mut edges = Vec::new();
    offsets.push(0);
    for &u in &cells {
        for v in grid.neighbors(u) {
            if grid.is_obstacle(v) || grid.cuts_corner(u, v) {
                continue;
            }
            let (Some(time), Some(back_time)) = (
                edge_time(grid, mobility, u, v)?,
                edge_time(grid, mobility, v, u)?,
            ) else {
                continue;
            };
            edges.push(Edge {
                to: NodeId(node_of[grid.index(v)]),
                time,
                back_time,
                distance: grid.distance(u, v),
                slope: derive_slope(grid, u, v)?,
            });
        }
        offsets.push(edges.len());
    }

    let n = cells.len();
    Ok(CostGraph {
        topo: Arc::new(Topology {
            rows: grid.rows(),
            cols: grid.cols(),
            cell_size: grid.cell_size(),
            origin: grid.origin(),
            cells,
            node_of,
            offsets,
            edges,
            ascent: mobility.ascent_rule(),
        }),
        risk: Arc::new(vec![0.0; n]),
        log_risk: Arc::new(vec![0.0; n]),
    })
}

impl CostGraph {
    pub fn node_count(&self) -> usize {
        self.topo.cells.len()
    }

    /// Undirected edge count.
    pub fn edge_count(&self) -> usize {
        self.topo.edges.len() / 2
    }

    pub fn rows(&self) -> usize {
        self.topo.rows
    }

    pub fn cols(&self) -> usize {
        self.topo.cols
    }

    pub fn cell_size(&self) -> f64 {
        self.topo.cell_size
    }

    pub fn ascent_rule(&self) -> AscentRule {
        self.topo.ascent
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.node_count() as u32).map(NodeId)
    }

    pub fn node(&self, cell: Cell) -> Option<NodeId> {
        if cell.row >= self.topo.rows || cell.col >= self.topo.cols {
            return None;
        }
        let id = self.topo.node_of[cell.row * self.topo.cols + cell.col];
        (id != NO_NODE).then_some(NodeId(id))
    }

    pub fn cell(&self, node: NodeId) -> Cell {
        self.topo.cells[node.index()]
    }

    pub fn centroid(&self, node: NodeId) -> [f64; 2] {
        let c = self.cell(node);
        [
            self.topo.origin[0] + c.col as f64 * self.topo.cell_size,
            self.topo.origin[1] - c.row as f64 * self.topo.cell_size,
        ]
    }

    #[inline]
    pub fn edges(&self, node: NodeId) -> &[Edge] {
        let i = node.index();
        &self.topo.edges[self.topo.offsets[i]..self.topo.offsets[i + 1]]
    }

    pub fn edge(&self, from: NodeId, to: NodeId) -> Option<&Edge> {
        self.edges(from).iter().find(|e| e.to == to)
    }

    /// Formation-dilated risk of the node's cell.
    #[inline]
    pub fn risk(&self, node: NodeId) -> f64 {
        self.risk[node.index()]
    }

    #[inline]
    pub fn log_risk(&self, node: NodeId) -> f64 {
        self.log_risk[node.index()]
    }

    pub fn risks(&self) -> &[f64] {
        &self.risk
    }

    pub fn log_risks(&self) -> &[f64] {
        &self.log_risk
    }

    /// New snapshot sharing this topology with per-node risk layers replaced.
    pub fn with_risk(&self, risk: Vec<f64>, log_risk: Vec<f64>) -> Result<CostGraph> {
        let n = self.node_count();
        if risk.len() != n {
            return Err(Error::shape("node risk", n, risk.len()));
        }
        if log_risk.len() != n {
            return Err(Error::shape("node log-risk", n, log_risk.len()));
        }
        if let Some(i) = log_risk.iter().position(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(Error::validation(
                "node log-risk",
                format!("value at node {i} must be finite and >= 0"),
            ));
        }
        Ok(CostGraph {
            topo: Arc::clone(&self.topo),
            risk: Arc::new(risk),
            log_risk: Arc::new(log_risk),
        })
    }

    /// True when both snapshots share the same topology allocation.
    pub fn same_topology(&self, other: &CostGraph) -> bool {
        Arc::ptr_eq(&self.topo, &other.topo)
    }

    /// Converts a cell path into node ids, checking it is connected in the graph.
    pub fn path_nodes(&self, path: &[Cell]) -> Result<Vec<NodeId>> {
        if path.is_empty() {
            return Err(Error::validation("path", "path is empty"));
        }
        let nodes = path
            .iter()
            .map(|&c| {
                self.node(c).ok_or_else(|| {
                    Error::validation("path", format!("cell {c:?} is not a traversable node"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        for w in nodes.windows(2) {
            if self.edge(w[0], w[1]).is_none() {
                return Err(Error::validation(
                    "path",
                    format!(
                        "no edge between {:?} and {:?}",
                        self.cell(w[0]),
                        self.cell(w[1])
                    ),
                ));
            }
        }
        Ok(nodes)
    }

    /// Exact totals `(time, distance, log_risk)` along a node path; the start
    /// cell's risk is not charged.
    pub fn path_totals(&self, nodes: &[NodeId]) -> PathTotals {
        let mut totals = PathTotals::default();
        for w in nodes.windows(2) {
            let e = self.edge(w[0], w[1]).expect("path validated");
            totals.time += e.time;
            totals.distance += e.distance;
            totals.log_risk += self.log_risk(w[1]);
        }
        totals
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PathTotals {
    pub time: f64,
    pub distance: f64,
    pub log_risk: f64,
}
