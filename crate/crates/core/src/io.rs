//! File formats: JSON inputs and results, and QGC WPL 110 waypoint export.

use std::fmt::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::{MissionRequest, PlanResult};
use crate::replan::DynamicEvent;
use crate::risk::{ThreatFile, ThreatSpec};
use crate::terrain::{Cell, MobilityFile, MobilityModel, TerrainFile, TerrainGrid};

/// Mean Earth radius used by the local equirectangular projection, meters.
pub const EARTH_RADIUS_M: f64 = 6_378_137.0;

const MAV_CMD_NAV_WAYPOINT: u16 = 16;
const MAV_FRAME_GLOBAL: u8 = 0;

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes a file, creating missing parent directories.
pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
    parent
        .map_or(Ok(()), std::fs::create_dir_all)
        .and_then(|_| std::fs::write(path, contents))
        .map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
}

/// Parses JSON, mapping syntax errors to line/column parse errors and
/// semantic errors raised during conversion to their own variants.
pub fn parse_json<T: DeserializeOwned>(source_name: &str, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::from_json(source_name, e))
}

fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    parse_json(&path.display().to_string(), &read_file(path)?)
}

/// Two-stage parse: syntax and field types first (parse errors with line and
/// column), then semantic validation (shape and validation errors).
fn parse_checked<F, T>(source_name: &str, text: &str) -> Result<T>
where
    F: DeserializeOwned,
    T: TryFrom<F, Error = Error>,
{
    T::try_from(parse_json::<F>(source_name, text)?)
}

pub fn parse_grid(source_name: &str, text: &str) -> Result<TerrainGrid> {
    parse_checked::<TerrainFile, _>(source_name, text)
}

pub fn parse_mobility(source_name: &str, text: &str) -> Result<MobilityModel> {
    parse_checked::<MobilityFile, _>(source_name, text)
}

pub fn parse_threats(source_name: &str, text: &str) -> Result<Vec<ThreatSpec>> {
    parse_json::<Vec<ThreatFile>>(source_name, text)?
        .into_iter()
        .map(ThreatSpec::try_from)
        .collect()
}

pub fn load_grid(path: &Path) -> Result<TerrainGrid> {
    parse_grid(&path.display().to_string(), &read_file(path)?)
}

pub fn load_mobility(path: &Path) -> Result<MobilityModel> {
    parse_mobility(&path.display().to_string(), &read_file(path)?)
}

pub fn load_threats(path: &Path) -> Result<Vec<ThreatSpec>> {
    parse_threats(&path.display().to_string(), &read_file(path)?)
}

pub fn load_event(path: &Path) -> Result<DynamicEvent> {
    load(path)
}

pub fn load_result(path: &Path) -> Result<PlanResult> {
    load(path)
}

const MODE_TYPES: [&str; 3] = ["Balanced", "FastWithinRisk", "SafeWithinTime"];

/// Parses and validates a mission request, naming the offending field on error.
pub fn parse_mission(source_name: &str, text: &str) -> Result<MissionRequest> {
    let value: serde_json::Value = parse_json(source_name, text)?;
    match value.pointer("/mode/type") {
        Some(serde_json::Value::String(t)) if MODE_TYPES.contains(&t.as_str()) => {}
        Some(serde_json::Value::String(t)) => {
            return Err(Error::validation(
                "mode.type",
                format!(
                    "unknown mode `{t}`, expected one of {}",
                    MODE_TYPES.join(", ")
                ),
            ))
        }
        _ => return Err(Error::validation("mode.type", "missing or not a string")),
    }
    let req: MissionRequest =
        serde_json::from_value(value).map_err(|e| Error::validation("mission", e.to_string()))?;
    req.validate()?;
    Ok(req)
}

pub fn load_mission(path: &Path) -> Result<MissionRequest> {
    parse_mission(&path.display().to_string(), &read_file(path)?)
}

/// Canonical pretty JSON with a trailing newline. Every front end uses this,
/// so identical results serialize to identical bytes.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

pub fn save_result(result: &PlanResult, path: &Path) -> Result<()> {
    write_file(path, &to_json(result))
}

/// One line of a QGC WPL 110 file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub index: usize,
    pub current: bool,
    pub frame: u8,
    pub command: u16,
    pub params: [f64; 4],
    /// Latitude in degrees, or northing in meters without a geo anchor.
    pub x: f64,
    /// Longitude in degrees, or easting in meters without a geo anchor.
    pub y: f64,
    /// Altitude, meters.
    pub z: f64,
    pub autocontinue: bool,
}

impl Waypoint {
    pub fn is_home(&self) -> bool {
        self.index == 0
    }
}

/// Path cells kept for export: both ends, every turn, and every `decimate`-th cell.
pub fn decimate_path(path: &[Cell], decimate: usize) -> Vec<Cell> {
    let k = decimate.max(1);
    let dir = |a: Cell, b: Cell| {
        (
            b.row as isize - a.row as isize,
            b.col as isize - a.col as isize,
        )
    };
    path.iter()
        .enumerate()
        .filter(|&(i, _)| {
            i == 0
                || i + 1 == path.len()
                || i % k == 0
                || dir(path[i - 1], path[i]) != dir(path[i], path[i + 1])
        })
        .map(|(_, &c)| c)
        .collect()
}

/// Column values `(x, y)` for a cell: geographic degrees when the grid is
/// anchored, planar meters otherwise.
pub fn cell_coordinates(grid: &TerrainGrid, cell: Cell) -> (f64, f64) {
    let [east, north] = grid.centroid(cell);
    match grid.geo_anchor() {
        Some(anchor) => {
            let [ox, oy] = grid.origin();
            let lat = anchor.lat + ((north - oy) / EARTH_RADIUS_M).to_degrees();
            let lon = anchor.lon
                + ((east - ox) / (EARTH_RADIUS_M * anchor.lat.to_radians().cos())).to_degrees();
            (lat, lon)
        }
        None => (north, east),
    }
}

/// Inverse of [`cell_coordinates`]: planar `[east, north]` meters.
pub fn planar_from_columns(grid: &TerrainGrid, x: f64, y: f64) -> [f64; 2] {
    match grid.geo_anchor() {
        Some(anchor) => {
            let [ox, oy] = grid.origin();
            let north = oy + (x - anchor.lat).to_radians() * EARTH_RADIUS_M;
            let east =
                ox + (y - anchor.lon).to_radians() * EARTH_RADIUS_M * anchor.lat.to_radians().cos();
            [east, north]
        }
        None => [y, x],
    }
}

pub fn waypoints_for(grid: &TerrainGrid, path: &[Cell], decimate: usize) -> Result<Vec<Waypoint>> {
    if path.is_empty() {
        return Err(Error::validation("path", "cannot export an empty path"));
    }
    if decimate == 0 {
        return Err(Error::validation("decimate", "must be >= 1"));
    }
    if let Some(c) = path.iter().find(|c| !grid.contains(**c)) {
        return Err(Error::validation(
            "path",
            format!("cell {c:?} is outside the grid"),
        ));
    }
    Ok(decimate_path(path, decimate)
        .into_iter()
        .enumerate()
        .map(|(index, cell)| {
            let (x, y) = cell_coordinates(grid, cell);
            Waypoint {
                index,
                current: index == 0,
                frame: MAV_FRAME_GLOBAL,
                command: MAV_CMD_NAV_WAYPOINT,
                params: [0.0; 4],
                x,
                y,
                z: grid.elevation(cell),
                autocontinue: true,
            }
        })
        .collect())
}

pub fn format_waypoints(waypoints: &[Waypoint]) -> String {
    let mut out = String::from("QGC WPL 110\n");
    for w in waypoints {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{:.8}\t{:.8}\t{:.8}\t{:.8}\t{:.8}\t{:.8}\t{:.6}\t{}",
            w.index,
            u8::from(w.current),
            w.frame,
            w.command,
            w.params[0],
            w.params[1],
            w.params[2],
            w.params[3],
            w.x,
            w.y,
            w.z,
            u8::from(w.autocontinue),
        )
        .expect("write to string");
    }
    out
}

/// Waypoint file text for a path.
pub fn export_waypoints(grid: &TerrainGrid, path: &[Cell], decimate: usize) -> Result<String> {
    Ok(format_waypoints(&waypoints_for(grid, path, decimate)?))
}

pub fn parse_waypoints(text: &str) -> Result<Vec<Waypoint>> {
    let err = |line: usize, message: String| Error::Parse {
        source_name: "waypoints".into(),
        line,
        column: 0,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == "QGC WPL 110" => {}
        _ => return Err(err(1, "missing `QGC WPL 110` header".into())),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 12 {
            return Err(err(
                i + 1,
                format!("expected 12 tab-separated fields, found {}", fields.len()),
            ));
        }
        let num = |k: usize| -> Result<f64> {
            fields[k]
                .trim()
                .parse::<f64>()
                .map_err(|e| err(i + 1, format!("field {}: {e}", k + 1)))
        };
        let int = |k: usize| -> Result<u64> {
            fields[k]
                .trim()
                .parse::<u64>()
                .map_err(|e| err(i + 1, format!("field {}: {e}", k + 1)))
        };
        let flag = |k: usize| -> Result<bool> {
            match int(k)? {
                0 => Ok(false),
                1 => Ok(true),
                v => Err(err(
                    i + 1,
                    format!("field {} must be 0 or 1, got {v}", k + 1),
                )),
            }
        };
        let wp = Waypoint {
            index: int(0)? as usize,
            current: flag(1)?,
            frame: int(2)? as u8,
            command: int(3)? as u16,
            params: [num(4)?, num(5)?, num(6)?, num(7)?],
            x: num(8)?,
            y: num(9)?,
            z: num(10)?,
            autocontinue: flag(11)?,
        };
        if wp.index != out.len() {
            return Err(err(i + 1, format!("index {} out of sequence", wp.index)));
        }
        out.push(wp);
    }
    Ok(out)
}
