//! Edge-free storage of the directed dynamic event graph and 1-hop
//! neighbor search.
//!
//! The graph is never materialized. Each pixel owns a fixed-depth ring
//! buffer of its most recent events; a new event finds its neighbors by
//! scanning the queues inside a spatial window and testing every stored
//! entry against the temporal bound. Edges only ever point from stored
//! (past) events to the new one.
//!
//! Scan order is fixed so that `D_max` truncation is reproducible: candidate
//! pixels are visited in raster order (row offset from `-r_s` to `+r_s`,
//! then column offset from `-r_s` to `+r_s`), and each queue newest-first.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_io::Event;

pub const DEFAULT_QUEUE_DEPTH: usize = 16;
pub const DEFAULT_D_MAX: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("queue grid dimensions must be positive, got {width}x{height} with depth {depth}")]
    InvalidDims {
        width: usize,
        height: usize,
        depth: usize,
    },
    #[error("event at ({x}, {y}) lies outside the {width}x{height} grid")]
    OutOfBounds {
        x: u16,
        y: u16,
        width: u16,
        height: u16,
    },
    #[error("{0:?} search has no queue-grid implementation; use brute_force_neighbors")]
    UnsupportedShape(SearchShape),
    #[error("invalid search parameters: {0}")]
    InvalidParams(String),
}

/// Spatiotemporal neighborhood shapes. All of them are restricted to the
/// causal half-space `dt >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchShape {
    /// `sqrt(dx² + dy² + (β·dt)²) <= r`
    Hemisphere,
    /// `|dx| + |dy| + β·dt <= r`
    SemiOctahedron,
    /// `sqrt(dx² + dy²) <= r_s` and `dt <= r_t`
    Cylinder,
    /// `|dx| + |dy| <= r_s` and `dt <= r_t`
    Prism,
}

impl SearchShape {
    pub const ALL: [SearchShape; 4] = [
        SearchShape::Hemisphere,
        SearchShape::SemiOctahedron,
        SearchShape::Cylinder,
        SearchShape::Prism,
    ];

    /// Shapes with separate spatial and temporal radii, which the queue grid
    /// can search directly.
    pub fn is_decoupled(self) -> bool {
        matches!(self, SearchShape::Cylinder | SearchShape::Prism)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    pub shape: SearchShape,
    /// Spatiotemporal radius for the coupled shapes, in pixels after time
    /// scaling.
    #[serde(default)]
    pub r: f64,
    /// Time scaling (per µs) for the coupled shapes.
    #[serde(default)]
    pub beta: f64,
    /// Spatial radius in pixels for the decoupled shapes.
    #[serde(default)]
    pub r_s: u32,
    /// Temporal radius in µs for the decoupled shapes.
    #[serde(default)]
    pub r_t: u32,
    #[serde(rename = "D_max", default = "default_d_max")]
    pub d_max: usize,
}

fn default_d_max() -> usize {
    DEFAULT_D_MAX
}

impl Default for SearchParams {
    fn default() -> Self {
        Self::prism(3, 10_000, DEFAULT_D_MAX)
    }
}

impl SearchParams {
    pub fn prism(r_s: u32, r_t: u32, d_max: usize) -> Self {
        Self {
            shape: SearchShape::Prism,
            r: 0.0,
            beta: 0.0,
            r_s,
            r_t,
            d_max,
        }
    }

    pub fn cylinder(r_s: u32, r_t: u32, d_max: usize) -> Self {
        Self {
            shape: SearchShape::Cylinder,
            ..Self::prism(r_s, r_t, d_max)
        }
    }

    pub fn hemisphere(r: f64, beta: f64, d_max: usize) -> Self {
        Self {
            shape: SearchShape::Hemisphere,
            r,
            beta,
            r_s: 0,
            r_t: 0,
            d_max,
        }
    }

    pub fn semi_octahedron(r: f64, beta: f64, d_max: usize) -> Self {
        Self {
            shape: SearchShape::SemiOctahedron,
            ..Self::hemisphere(r, beta, d_max)
        }
    }

    pub fn with_shape(self, shape: SearchShape) -> Self {
        Self { shape, ..self }
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        if self.d_max == 0 {
            return Err(GraphError::InvalidParams("D_max must be at least 1".into()));
        }
        if !self.shape.is_decoupled()
            && !(self.r.is_finite() && self.r >= 0.0 && self.beta.is_finite() && self.beta >= 0.0)
        {
            return Err(GraphError::InvalidParams(
                "r and beta must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Half-width of the square pixel window that contains every spatial
    /// offset the shape can accept.
    pub fn window_radius(&self) -> i32 {
        if self.shape.is_decoupled() {
            self.r_s.min(i32::MAX as u32 / 2) as i32
        } else {
            self.r.floor().min(f64::from(i32::MAX / 2)) as i32
        }
    }

    /// Spatial part of the predicate. For the coupled shapes this is the
    /// `dt = 0` slice.
    pub fn spatial_ok(&self, dx: i32, dy: i32) -> bool {
        let (dx, dy) = (i64::from(dx), i64::from(dy));
        match self.shape {
            SearchShape::Prism => dx.abs() + dy.abs() <= i64::from(self.r_s),
            SearchShape::Cylinder => dx * dx + dy * dy <= i64::from(self.r_s).pow(2),
            SearchShape::Hemisphere => ((dx * dx + dy * dy) as f64) <= self.r * self.r,
            SearchShape::SemiOctahedron => ((dx.abs() + dy.abs()) as f64) <= self.r,
        }
    }

    /// Full predicate on `(dx, dy, dt)`, with `dt` already known to be
    /// non-negative.
    pub fn accepts(&self, dx: i32, dy: i32, dt: u32) -> bool {
        match self.shape {
            SearchShape::Prism | SearchShape::Cylinder => {
                dt <= self.r_t && self.spatial_ok(dx, dy)
            }
            SearchShape::Hemisphere => {
                let (dx, dy) = (f64::from(dx), f64::from(dy));
                let st = self.beta * f64::from(dt);
                dx * dx + dy * dy + st * st <= self.r * self.r
            }
            SearchShape::SemiOctahedron => {
                f64::from(dx.abs()) + f64::from(dy.abs()) + self.beta * f64::from(dt) <= self.r
            }
        }
    }

    /// True when no event with this `dt` or larger can be accepted, for any
    /// spatial offset.
    fn too_old(&self, dt: u32) -> bool {
        match self.shape {
            SearchShape::Prism | SearchShape::Cylinder => dt > self.r_t,
            SearchShape::Hemisphere | SearchShape::SemiOctahedron => {
                self.beta > 0.0 && self.beta * f64::from(dt) > self.r
            }
        }
    }
}

/// A stored event, minus the coordinates implied by its queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct QueueEntry {
    pub t: u32,
    pub p: u8,
    pub n: u32,
}

/// W×H per-pixel ring buffers of depth Q. This is the whole stored graph
/// state.
#[derive(Debug, Clone)]
pub struct EventQueueGrid {
    width: u16,
    height: u16,
    depth: usize,
    entries: Vec<QueueEntry>,
    lens: Vec<u16>,
    heads: Vec<u16>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SearchStats {
    /// In-bound queues inside the spatial predicate that were opened.
    pub queues_visited: u32,
    /// Stored entries tested against the temporal predicate.
    pub entries_scanned: u32,
}

impl EventQueueGrid {
    pub fn new(width: u16, height: u16, depth: usize) -> Result<Self, GraphError> {
        if width == 0 || height == 0 || depth == 0 || depth > usize::from(u16::MAX) {
            return Err(GraphError::InvalidDims {
                width: width.into(),
                height: height.into(),
                depth,
            });
        }
        let cells = usize::from(width) * usize::from(height);
        Ok(Self {
            width,
            height,
            depth,
            entries: vec![QueueEntry::default(); cells * depth],
            lens: vec![0; cells],
            heads: vec![0; cells],
        })
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn num_queues(&self) -> usize {
        self.lens.len()
    }

    fn cell(&self, x: u16, y: u16) -> Result<usize, GraphError> {
        if x >= self.width || y >= self.height {
            return Err(GraphError::OutOfBounds {
                x,
                y,
                width: self.width,
                height: self.height,
            });
        }
        Ok(usize::from(y) * usize::from(self.width) + usize::from(x))
    }

    pub fn queue_len(&self, x: u16, y: u16) -> Result<usize, GraphError> {
        Ok(self.lens[self.cell(x, y)?].into())
    }

    /// Entries of queue (x, y), newest first.
    pub fn queue(&self, x: u16, y: u16) -> Result<impl Iterator<Item = QueueEntry> + '_, GraphError> {
        let cell = self.cell(x, y)?;
        Ok(self.queue_at(cell))
    }

    fn queue_at(&self, cell: usize) -> impl Iterator<Item = QueueEntry> + '_ {
        let depth = self.depth;
        let base = cell * depth;
        let head = usize::from(self.heads[cell]);
        let len = usize::from(self.lens[cell]);
        (0..len).map(move |k| self.entries[base + (head + depth - 1 - k) % depth])
    }

    /// Stores `ev` at its pixel; returns the evicted oldest entry when the
    /// queue was already full.
    pub fn push_event(&mut self, ev: &Event) -> Result<Option<QueueEntry>, GraphError> {
        let cell = self.cell(ev.x, ev.y)?;
        let base = cell * self.depth;
        let head = usize::from(self.heads[cell]);
        let full = usize::from(self.lens[cell]) == self.depth;
        let evicted = full.then(|| self.entries[base + head]);
        self.entries[base + head] = QueueEntry {
            t: ev.t,
            p: ev.p,
            n: ev.n,
        };
        self.heads[cell] = ((head + 1) % self.depth) as u16;
        if !full {
            self.lens[cell] += 1;
        }
        Ok(evicted)
    }

    pub fn search_neighbors(&self, ev: &Event, params: &SearchParams) -> Result<NeighborSet, GraphError> {
        self.search_neighbors_with_stats(ev, params).map(|(set, _)| set)
    }

    /// Prism/cylinder search over the stored queues. `ev` must not have been
    /// pushed yet.
    pub fn search_neighbors_with_stats(
        &self,
        ev: &Event,
        params: &SearchParams,
    ) -> Result<(NeighborSet, SearchStats), GraphError> {
        if !params.shape.is_decoupled() {
            return Err(GraphError::UnsupportedShape(params.shape));
        }
        params.validate()?;
        self.cell(ev.x, ev.y)?;

        let mut out = NeighborSet::with_capacity(params.d_max.min(64));
        let mut stats = SearchStats::default();
        let radius = params.window_radius();
        let (ex, ey) = (i32::from(ev.x), i32::from(ev.y));
        'scan: for oy in -radius..=radius {
            let qy = ey + oy;
            if qy < 0 || qy >= i32::from(self.height) {
                continue;
            }
            for ox in -radius..=radius {
                let qx = ex + ox;
                if qx < 0 || qx >= i32::from(self.width) {
                    continue;
                }
                // dx, dy are new minus neighbor
                let (dx, dy) = (-ox, -oy);
                if !params.spatial_ok(dx, dy) {
                    continue;
                }
                stats.queues_visited += 1;
                let cell = qy as usize * usize::from(self.width) + qx as usize;
                for entry in self.queue_at(cell) {
                    stats.entries_scanned += 1;
                    if entry.n >= ev.n || entry.t > ev.t {
                        continue;
                    }
                    let dt = ev.t - entry.t;
                    if dt <= params.r_t {
                        out.push(Neighbor {
                            n: entry.n,
                            t: entry.t,
                            p: entry.p,
                            dx,
                            dy,
                            dt,
                        });
                        if out.len() == params.d_max {
                            break 'scan;
                        }
                    }
                }
            }
        }
        Ok((out, stats))
    }
}

/// A causal edge source, described relative to the new event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Neighbor {
    pub n: u32,
    pub t: u32,
    pub p: u8,
    /// New minus neighbor, in pixels.
    pub dx: i32,
    pub dy: i32,
    /// New minus neighbor, in µs.
    pub dt: u32,
}

/// Neighbors of one event in canonical scan order, at most `D_max` long.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NeighborSet(Vec<Neighbor>);

impl NeighborSet {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub fn with_capacity(cap: usize) -> Self {
        Self(Vec::with_capacity(cap))
    }

    pub fn push(&mut self, nb: Neighbor) {
        self.0.push(nb);
    }

    pub fn as_slice(&self) -> &[Neighbor] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<Neighbor> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Neighbor> {
        self.0.iter()
    }
}

impl From<Vec<Neighbor>> for NeighborSet {
    fn from(v: Vec<Neighbor>) -> Self {
        Self(v)
    }
}

impl<'a> IntoIterator for &'a NeighborSet {
    type Item = &'a Neighbor;
    type IntoIter = std::slice::Iter<'a, Neighbor>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Reference neighbor search straight from the stream history, for every
/// shape.
///
/// Semantics: only the `queue_depth` most recent events of each pixel are
/// eligible (queue eviction replayed), the shape predicate is applied, the
/// survivors are put in canonical scan order and the first `D_max` are kept.
/// `history` must be the stream prefix preceding `ev`, in stream order.
pub fn brute_force_neighbors(
    history: &[Event],
    ev: &Event,
    params: &SearchParams,
    queue_depth: usize,
) -> NeighborSet {
    // (row, column, rank within its pixel) orders candidates exactly like
    // the raster window scan does.
    let mut candidates: Vec<((u16, u16, usize), Neighbor)> = Vec::new();
    let mut newer_at_pixel: HashMap<(u16, u16), usize> = HashMap::new();
    for h in history.iter().rev() {
        if h.t > ev.t || h.n >= ev.n {
            continue;
        }
        let dt = ev.t - h.t;
        if params.too_old(dt) {
            // history is time-ordered, so everything older fails too
            break;
        }
        let rank = newer_at_pixel.entry((h.x, h.y)).or_insert(0);
        let this_rank = *rank;
        *rank += 1;
        if this_rank >= queue_depth {
            continue;
        }
        let dx = i32::from(ev.x) - i32::from(h.x);
        let dy = i32::from(ev.y) - i32::from(h.y);
        if params.accepts(dx, dy, dt) {
            candidates.push((
                (h.y, h.x, this_rank),
                Neighbor {
                    n: h.n,
                    t: h.t,
                    p: h.p,
                    dx,
                    dy,
                    dt,
                },
            ));
        }
    }
    candidates.sort_unstable_by_key(|(key, _)| *key);
    candidates.truncate(params.d_max);
    candidates.into_iter().map(|(_, nb)| nb).collect::<Vec<_>>().into()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(x: u16, y: u16, t: u32, n: u32) -> Event {
        Event::new(x, y, t, 1, n)
    }

    #[test]
    fn grid_dims() {
        let g = EventQueueGrid::new(120, 100, 16).unwrap();
        assert_eq!(g.num_queues(), 12_000);
        assert_eq!(g.queue_len(119, 99).unwrap(), 0);
        let one = EventQueueGrid::new(1, 1, 1).unwrap();
        assert_eq!(one.num_queues(), 1);
        assert!(matches!(
            EventQueueGrid::new(0, 5, 16),
            Err(GraphError::InvalidDims { .. })
        ));
        assert!(EventQueueGrid::new(5, 5, 0).is_err());
    }

    #[test]
    fn push_evicts_oldest_when_full() {
        let mut g = EventQueueGrid::new(4, 4, 16).unwrap();
        assert_eq!(g.push_event(&ev(1, 1, 0, 0)).unwrap(), None);
        assert_eq!(g.queue_len(1, 1).unwrap(), 1);
        for n in 1..16 {
            assert_eq!(g.push_event(&ev(1, 1, n * 10, n)).unwrap(), None);
        }
        let evicted = g.push_event(&ev(1, 1, 160, 16)).unwrap();
        assert_eq!(evicted, Some(QueueEntry { t: 0, p: 1, n: 0 }));
        let ns: Vec<u32> = g.queue(1, 1).unwrap().map(|e| e.n).collect();
        assert_eq!(ns, (1..=16).rev().collect::<Vec<_>>());
        assert!(matches!(
            g.push_event(&ev(4, 0, 200, 17)),
            Err(GraphError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn prism_example() {
        let mut g = EventQueueGrid::new(16, 16, 16).unwrap();
        let a = ev(6, 5, 90, 0);
        let b = ev(5, 8, 95, 1);
        g.push_event(&a).unwrap();
        g.push_event(&b).unwrap();
        let q = ev(5, 5, 100, 2);
        let params = SearchParams::prism(2, 50, 16);
        let set = g.search_neighbors(&q, &params).unwrap();
        assert_eq!(set.len(), 1);
        let nb = set.as_slice()[0];
        assert_eq!((nb.n, nb.dx, nb.dy, nb.dt), (0, -1, 0, 10));
        assert_eq!(brute_force_neighbors(&[a, b], &q, &params, 16), set);
    }

    #[test]
    fn same_timestamp_same_pixel_is_a_neighbor() {
        let mut g = EventQueueGrid::new(8, 8, 4).unwrap();
        let a = ev(3, 3, 100, 0);
        g.push_event(&a).unwrap();
        let q = ev(3, 3, 100, 1);
        let params = SearchParams::prism(1, 0, 16);
        let set = g.search_neighbors(&q, &params).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.as_slice()[0].dt, 0);
        assert_eq!(brute_force_neighbors(&[a], &q, &params, 4), set);
    }

    #[test]
    fn empty_inputs() {
        let g = EventQueueGrid::new(8, 8, 4).unwrap();
        let q = ev(3, 3, 100, 0);
        assert!(g.search_neighbors(&q, &SearchParams::default()).unwrap().is_empty());
        for shape in SearchShape::ALL {
            let p = SearchParams {
                r: 2.0,
                beta: 0.01,
                ..SearchParams::default().with_shape(shape)
            };
            assert!(brute_force_neighbors(&[], &q, &p, 4).is_empty());
        }
    }

    #[test]
    fn coupled_shapes_need_the_oracle() {
        let g = EventQueueGrid::new(8, 8, 4).unwrap();
        let q = ev(3, 3, 100, 0);
        let p = SearchParams::hemisphere(2.0, 0.1, 16);
        assert_eq!(
            g.search_neighbors(&q, &p),
            Err(GraphError::UnsupportedShape(SearchShape::Hemisphere))
        );
        assert!(g.search_neighbors(&ev(8, 0, 1, 0), &SearchParams::default()).is_err());
    }

    #[test]
    fn zero_beta_ignores_time() {
        let old = ev(4, 3, 0, 0);
        let q = ev(3, 3, 1_000_000, 1);
        let p = SearchParams::hemisphere(1.0, 0.0, 16);
        let set = brute_force_neighbors(&[old], &q, &p, 16);
        assert_eq!(set.len(), 1);
        assert_eq!(set.as_slice()[0].dt, 1_000_000);
    }

    #[test]
    fn scan_order_and_early_stop() {
        // Two events at each of three pixels; the window scan must visit
        // row -1 before row 0 and, within a pixel, newest first.
        let hist = vec![
            ev(5, 5, 10, 0),
            ev(4, 5, 11, 1),
            ev(5, 4, 12, 2),
            ev(5, 5, 13, 3),
            ev(4, 5, 14, 4),
            ev(5, 4, 15, 5),
        ];
        let mut g = EventQueueGrid::new(10, 10, 16).unwrap();
        for e in &hist {
            g.push_event(e).unwrap();
        }
        let q = ev(5, 5, 20, 6);
        let all = g.search_neighbors(&q, &SearchParams::prism(1, 100, 16)).unwrap();
        let order: Vec<u32> = all.iter().map(|nb| nb.n).collect();
        assert_eq!(order, vec![5, 2, 4, 1, 3, 0]);

        let (capped, stats) = g
            .search_neighbors_with_stats(&q, &SearchParams::prism(1, 100, 3))
            .unwrap();
        let order: Vec<u32> = capped.iter().map(|nb| nb.n).collect();
        assert_eq!(order, vec![5, 2, 4]);
        assert_eq!(stats.entries_scanned, 3);
        assert_eq!(brute_force_neighbors(&hist, &q, &SearchParams::prism(1, 100, 3), 16), capped);
    }

    #[test]
    fn eviction_is_replayed_by_oracle() {
        let hist: Vec<Event> = (0..5).map(|n| ev(2, 2, n * 10, n)).collect();
        let mut g = EventQueueGrid::new(4, 4, 2).unwrap();
        for e in &hist {
            g.push_event(e).unwrap();
        }
        let q = ev(2, 2, 100, 5);
        let p = SearchParams::prism(0, 1000, 16);
        let set = g.search_neighbors(&q, &p).unwrap();
        assert_eq!(set.iter().map(|nb| nb.n).collect::<Vec<_>>(), vec![4, 3]);
        assert_eq!(brute_force_neighbors(&hist, &q, &p, 2), set);
    }

    #[test]
    fn out_of_bound_window_is_skipped() {
        let mut g = EventQueueGrid::new(3, 3, 4).unwrap();
        let a = ev(0, 0, 0, 0);
        g.push_event(&a).unwrap();
        let q = ev(0, 1, 5, 1);
        let (set, stats) = g
            .search_neighbors_with_stats(&q, &SearchParams::prism(2, 10, 16))
            .unwrap();
        assert_eq!(set.len(), 1);
        // in-bound pixels with |dx|+|dy| <= 2 around (0, 1)
        assert_eq!(stats.queues_visited, 7);
    }

    #[test]
    fn predicates() {
        let prism = SearchParams::prism(2, 10, 16);
        assert!(prism.accepts(1, -1, 10));
        assert!(!prism.accepts(2, 1, 0));
        assert!(!prism.accepts(0, 0, 11));
        let cyl = SearchParams::cylinder(2, 10, 16);
        assert!(!cyl.accepts(2, 1, 0));
        assert!(cyl.accepts(2, 0, 0));
        assert!(!cyl.accepts(2, 2, 0));
        let hemi = SearchParams::hemisphere(5.0, 0.125, 16);
        assert!(hemi.accepts(3, 0, 32));
        assert!(!hemi.accepts(3, 0, 33));
        let oct = SearchParams::semi_octahedron(5.0, 0.125, 16);
        assert!(oct.accepts(1, 1, 24));
        assert!(!oct.accepts(1, 1, 25));
        assert!(SearchParams::prism(1, 1, 0).validate().is_err());
        assert!(SearchParams::hemisphere(f64::NAN, 0.0, 4).validate().is_err());
    }
}
