use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CELLS_X: usize = 2;
pub const CELLS_Y: usize = 2;
pub const ZONES_PER_CELL_X: usize = 3;
pub const ZONES_PER_CELL_Y: usize = 3;
pub const ZONES_X: usize = CELLS_X * ZONES_PER_CELL_X;
pub const ZONES_Y: usize = CELLS_Y * ZONES_PER_CELL_Y;
pub const ZONE_COUNT: usize = ZONES_X * ZONES_Y;
pub const CELL_COUNT: usize = CELLS_X * CELLS_Y;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Point {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Integer map coordinates, as recorded in actions.
    pub fn rounded(&self) -> (i64, i64) {
        (self.x.round() as i64, self.y.round() as i64)
    }

    fn lex_key(&self) -> (f64, f64) {
        (self.x, self.y)
    }
}

/// Axis-aligned rectangle, boundaries inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn corners(&self) -> [Point; 4] {
        [
            self.min,
            Point::new(self.max.x, self.min.y),
            Point::new(self.min.x, self.max.y),
            self.max,
        ]
    }

    pub fn center(&self) -> Point {
        Point::new(
            (self.min.x + self.max.x) / 2.0,
            (self.min.y + self.max.y) / 2.0,
        )
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct UnitZone {
    pub id: usize,
    pub col: usize,
    pub row: usize,
    pub cell: usize,
    pub rect: Rect,
    pub demand_weight: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalCell {
    pub id: usize,
    pub col: usize,
    pub row: usize,
    pub zones: Vec<usize>,
    pub rect: Rect,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopologyConfig {
    pub width: i64,
    pub height: i64,
    /// Explicit per-zone weights, row-major over the 6x6 grid. When absent
    /// each weight is drawn uniformly from [1, 10].
    pub demand_weights: Option<Vec<f64>>,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            width: 1440,
            height: 720,
            demand_weights: None,
        }
    }
}

/// One area of 2x2 local cells, each of 3x3 unit zones.
#[derive(Clone, Debug, Serialize)]
pub struct Topology {
    pub width: i64,
    pub height: i64,
    pub zones: Vec<UnitZone>,
    pub cells: Vec<LocalCell>,
    pub access_hubs: Vec<Point>,
    pub local_hubs: Vec<Point>,
    /// Area corners. Modelled but unused with a single area.
    pub gateway_hubs: Vec<Point>,
}

pub fn build_topology(config: &TopologyConfig, rng: &mut ChaCha8Rng) -> Result<Topology> {
    if config.width <= 0 || config.height <= 0 {
        return Err(Error::InvalidConfig(format!(
            "map dimensions must be positive, got {}x{}",
            config.width, config.height
        )));
    }
    let weights: Vec<f64> = match &config.demand_weights {
        Some(w) => {
            if w.len() != ZONE_COUNT {
                return Err(Error::InvalidConfig(format!(
                    "expected {ZONE_COUNT} demand weights, got {}",
                    w.len()
                )));
            }
            if w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::InvalidConfig("demand weights must be positive".into()));
            }
            w.clone()
        }
        None => (0..ZONE_COUNT).map(|_| rng.gen_range(1.0..=10.0)).collect(),
    };

    let zw = config.width as f64 / ZONES_X as f64;
    let zh = config.height as f64 / ZONES_Y as f64;
    let cw = config.width as f64 / CELLS_X as f64;
    let ch = config.height as f64 / CELLS_Y as f64;

    let mut zones = Vec::with_capacity(ZONE_COUNT);
    for row in 0..ZONES_Y {
        for col in 0..ZONES_X {
            let id = row * ZONES_X + col;
            let cell = (row / ZONES_PER_CELL_Y) * CELLS_X + col / ZONES_PER_CELL_X;
            zones.push(UnitZone {
                id,
                col,
                row,
                cell,
                rect: Rect {
                    min: Point::new(col as f64 * zw, row as f64 * zh),
                    max: Point::new((col + 1) as f64 * zw, (row + 1) as f64 * zh),
                },
                demand_weight: weights[id],
            });
        }
    }
    let cells = (0..CELL_COUNT)
        .map(|id| {
            let (col, row) = (id % CELLS_X, id / CELLS_X);
            LocalCell {
                id,
                col,
                row,
                zones: zones.iter().filter(|z| z.cell == id).map(|z| z.id).collect(),
                rect: Rect {
                    min: Point::new(col as f64 * cw, row as f64 * ch),
                    max: Point::new((col + 1) as f64 * cw, (row + 1) as f64 * ch),
                },
            }
        })
        .collect();
    let grid = |nx: usize, ny: usize, w: f64, h: f64| -> Vec<Point> {
        (0..=ny)
            .flat_map(|j| (0..=nx).map(move |i| Point::new(i as f64 * w, j as f64 * h)))
            .collect()
    };
    Ok(Topology {
        width: config.width,
        height: config.height,
        zones,
        cells,
        access_hubs: grid(ZONES_X, ZONES_Y, zw, zh),
        local_hubs: grid(CELLS_X, CELLS_Y, cw, ch),
        gateway_hubs: grid(1, 1, config.width as f64, config.height as f64),
    })
}

/// Closest candidate to `target`; ties go to the lowest `(x, y)`.
pub fn nearest(candidates: &[Point], target: &Point) -> Point {
    *candidates
        .iter()
        .min_by(|a, b| {
            a.distance(target)
                .total_cmp(&b.distance(target))
                .then(a.lex_key().0.total_cmp(&b.lex_key().0))
                .then(a.lex_key().1.total_cmp(&b.lex_key().1))
        })
        .expect("candidate list is never empty")
}

impl Topology {
    pub fn in_bounds(&self, p: &Point) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= self.width as f64 && p.y <= self.height as f64
    }

    /// Zone a point belongs to for routing. Shared edges go to the zone on
    /// the higher side, except on the map's far edges.
    pub fn zone_of(&self, p: &Point) -> Option<usize> {
        if !self.in_bounds(p) {
            return None;
        }
        let zw = self.width as f64 / ZONES_X as f64;
        let zh = self.height as f64 / ZONES_Y as f64;
        let col = ((p.x / zw).floor() as usize).min(ZONES_X - 1);
        let row = ((p.y / zh).floor() as usize).min(ZONES_Y - 1);
        Some(row * ZONES_X + col)
    }

    pub fn cell_of_zone(&self, zone: usize) -> usize {
        self.zones[zone].cell
    }

    /// Access hubs of a unit zone: its four corners.
    pub fn zone_access_hubs(&self, zone: usize) -> [Point; 4] {
        self.zones[zone].rect.corners()
    }

    /// Local hubs of a cell: its four corners.
    pub fn cell_local_hubs(&self, cell: usize) -> [Point; 4] {
        self.cells[cell].rect.corners()
    }

    /// Zones that have `p` as one of their corners.
    pub fn zones_sharing_hub(&self, p: &Point) -> Vec<usize> {
        self.zones
            .iter()
            .filter(|z| z.rect.corners().contains(p))
            .map(|z| z.id)
            .collect()
    }

    pub fn total_weight(&self) -> f64 {
        self.zones.iter().map(|z| z.demand_weight).sum()
    }
}
