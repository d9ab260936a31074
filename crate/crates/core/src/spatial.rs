//! Uniform hash grid over 3D points for radius and k-nearest queries.

use std::collections::HashMap;

use crate::num::{dist2, Real, Vec3};

pub(crate) type Cell = [i64; 3];

pub struct PointGrid<'a, T: Real> {
    points: &'a [Vec3<T>],
    cell: T,
    /// Point indices grouped by cell, ascending within each cell.
    order: Vec<u32>,
    ranges: HashMap<Cell, (u32, u32)>,
    lo: Cell,
    hi: Cell,
}

impl<'a, T: Real> PointGrid<'a, T> {
    pub fn new(points: &'a [Vec3<T>], cell: T) -> Self {
        assert!(cell > T::zero() && cell.is_finite(), "grid cell size must be positive");
        let key = |p: &Vec3<T>| -> Cell {
            [
                (p.x / cell).floor().as_f64() as i64,
                (p.y / cell).floor().as_f64() as i64,
                (p.z / cell).floor().as_f64() as i64,
            ]
        };
        let keys: Vec<Cell> = points.iter().map(key).collect();
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        order.sort_by_key(|&i| (keys[i as usize], i));
        let mut ranges = HashMap::new();
        let (mut lo, mut hi) = ([i64::MAX; 3], [i64::MIN; 3]);
        let mut start = 0;
        while start < order.len() {
            let k = keys[order[start] as usize];
            let mut end = start + 1;
            while end < order.len() && keys[order[end] as usize] == k {
                end += 1;
            }
            ranges.insert(k, (start as u32, end as u32));
            for a in 0..3 {
                lo[a] = lo[a].min(k[a]);
                hi[a] = hi[a].max(k[a]);
            }
            start = end;
        }
        Self { points, cell, order, ranges, lo, hi }
    }

    /// Cell size giving roughly `per_cell` points per cell. Extents come
    /// from the 2nd to 98th percentile on each axis so a few far outliers do
    /// not blow up the cells; flat or linear clouds are sized by their
    /// spanned dimensions only.
    pub fn auto_cell(points: &[Vec3<T>], per_cell: usize) -> T {
        if points.len() < 2 {
            return T::one();
        }
        let stride = (points.len() / 20_000).max(1);
        let mut ext = [T::zero(); 3];
        for (a, e) in ext.iter_mut().enumerate() {
            let mut v: Vec<T> = points.iter().step_by(stride).map(|p| p[a]).collect();
            v.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let lo = v[(v.len() - 1) / 50];
            let hi = v[(v.len() - 1) - (v.len() - 1) / 50];
            *e = hi - lo;
        }
        let largest = ext.iter().fold(T::zero(), |m, &e| m.max(e));
        if !(largest > T::zero()) {
            return T::one();
        }
        let spanned: Vec<T> = ext.iter().copied().filter(|&e| e > largest * T::lit(1e-3)).collect();
        let measure = spanned.iter().fold(T::one(), |m, &e| m * e);
        let share = measure * T::from_count(per_cell.max(1)) / T::from_count(points.len());
        share.powf(T::one() / T::from_count(spanned.len())).max(largest * T::lit(1e-6))
    }

    pub(crate) fn cell_of(&self, p: &Vec3<T>) -> Cell {
        [
            (p.x / self.cell).floor().as_f64() as i64,
            (p.y / self.cell).floor().as_f64() as i64,
            (p.z / self.cell).floor().as_f64() as i64,
        ]
    }

    pub(crate) fn cell_points(&self, c: &Cell) -> &[u32] {
        match self.ranges.get(c) {
            Some(&(s, e)) => &self.order[s as usize..e as usize],
            None => &[],
        }
    }

    /// Non-empty cells in ascending key order.
    pub(crate) fn cells(&self) -> Vec<Cell> {
        let mut keys: Vec<Cell> = self.ranges.keys().copied().collect();
        keys.sort_unstable();
        keys
    }

    /// Indices within `radius` (inclusive) of `q`, ascending. `radius` must
    /// not exceed the cell size.
    pub fn within(&self, q: &Vec3<T>, radius: T, out: &mut Vec<usize>) {
        debug_assert!(radius <= self.cell);
        out.clear();
        let r2 = radius * radius;
        let c = self.cell_of(q);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    for &i in self.cell_points(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        if dist2(q, &self.points[i as usize]) <= r2 {
                            out.push(i as usize);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
    }

    /// The `k` nearest points to `q` as `(squared distance, index)`, nearest
    /// first, ties by index. `skip` excludes one index (usually the query).
    pub fn nearest(&self, q: &Vec3<T>, k: usize, skip: Option<usize>) -> Vec<(T, usize)> {
        let mut best: Vec<(T, usize)> = Vec::with_capacity(k + 1);
        if k == 0 {
            return best;
        }
        let c = self.cell_of(q);
        let gap = (0..3).map(|a| (self.lo[a] - c[a]).max(c[a] - self.hi[a]).max(0)).max().unwrap_or(0);
        let reach = (0..3).map(|a| (c[a] - self.lo[a]).abs().max((self.hi[a] - c[a]).abs())).max().unwrap_or(0);
        let span = |a: usize, ring: i64| (-ring).max(self.lo[a] - c[a])..=ring.min(self.hi[a] - c[a]);
        let offer = |best: &mut Vec<(T, usize)>, i: usize| {
            if Some(i) == skip {
                return;
            }
            let d = dist2(q, &self.points[i]);
            if best.len() < k || (d, i) < best[k - 1] {
                let pos = best.partition_point(|e| *e < (d, i));
                best.insert(pos, (d, i));
                best.truncate(k);
            }
        };
        let mut probed = 0usize;
        for ring in gap..=reach {
            // Far from everything else (an isolated outlier, say) the shells
            // are mostly empty cells; a plain scan is cheaper from here on.
            if probed > self.points.len() {
                best.clear();
                for i in 0..self.points.len() {
                    offer(&mut best, i);
                }
                return best;
            }
            for dx in span(0, ring) {
                for dy in span(1, ring) {
                    let on_shell = dx.abs() == ring || dy.abs() == ring;
                    for dz in span(2, ring) {
                        if !on_shell && dz.abs() != ring {
                            continue;
                        }
                        probed += 1;
                        for &i in self.cell_points(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                            offer(&mut best, i as usize);
                        }
                    }
                }
            }
            // Everything outside the searched rings is at least this far away.
            let safe = self.cell * T::from_count(ring as usize);
            if best.len() == k && best[k - 1].0 <= safe * safe {
                break;
            }
        }
        best
    }
}
