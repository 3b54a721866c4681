//! Divergence-free velocity fields on a staggered grid.
//!
//! The stream function `psi` lives on grid nodes. Face velocities are its
//! discrete perpendicular gradient, `u = d psi / dx2` on faces normal to
//! axis 0 and `v = -d psi / dx1` on faces normal to axis 1, so the discrete
//! divergence of every cell vanishes identically. Cell-center velocities are
//! averages of the two opposite faces.

use std::borrow::Cow;
use std::collections::VecDeque;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::domain::{Boundary, BoxGrid, DomainSpec};
use crate::error::{Error, Result};
use crate::paths::TimeGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FieldTime {
    /// Time-independent; valid for every `t >= 0`. `window` is the
    /// generation window used for space-time defect accounting.
    Steady { window: f64 },
    /// One slice per node of the grid.
    Sampled(TimeGrid),
}

impl FieldTime {
    pub fn window(&self) -> f64 {
        match self {
            FieldTime::Steady { window } => *window,
            FieldTime::Sampled(g) => g.horizon(),
        }
    }

    fn slice_count(&self) -> usize {
        match self {
            FieldTime::Steady { .. } => 1,
            FieldTime::Sampled(g) => g.len(),
        }
    }
}

/// Cell-centered velocity components, row-major with axis 0 fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct CellVelocity {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl CellVelocity {
    pub fn speed_sq(&self, c: usize) -> f64 {
        self.u[c] * self.u[c] + self.v[c] * self.v[c]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityField {
    grid: BoxGrid,
    time: FieldTime,
    slices: Vec<Vec<f64>>,
    region: Vec<usize>,
    speed_sq: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    grid: BoxGrid,
    time: FieldTime,
    speed_sq: Vec<f64>,
    region: Vec<usize>,
}

impl VelocityField {
    pub fn new(
        grid: BoxGrid,
        time: FieldTime,
        slices: Vec<Vec<f64>>,
        region: Vec<usize>,
        speed_sq: Vec<f64>,
    ) -> Result<Self> {
        if slices.len() != time.slice_count() {
            return Err(Error::Mismatch(format!("{} slices for {} time nodes", slices.len(), time.slice_count())));
        }
        if slices.iter().any(|s| s.len() != grid.n_nodes()) {
            return Err(Error::Mismatch("stream function slice has the wrong node count".into()));
        }
        if region.len() != grid.n_cells() || region.iter().any(|&r| r >= speed_sq.len()) {
            return Err(Error::Mismatch("region map does not match the grid".into()));
        }
        Ok(Self { grid, time, slices, region, speed_sq })
    }

    /// Single-region field.
    pub fn single(grid: BoxGrid, time: FieldTime, slices: Vec<Vec<f64>>, speed_sq: f64) -> Result<Self> {
        let region = vec![0; grid.n_cells()];
        Self::new(grid, time, slices, region, vec![speed_sq])
    }

    pub fn grid(&self) -> &BoxGrid {
        &self.grid
    }

    pub fn time(&self) -> &FieldTime {
        &self.time
    }

    pub fn is_steady(&self) -> bool {
        matches!(self.time, FieldTime::Steady { .. })
    }

    pub fn slice_count(&self) -> usize {
        self.slices.len()
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        &self.slices[k]
    }

    pub fn slice_time(&self, k: usize) -> f64 {
        match &self.time {
            FieldTime::Steady { .. } => 0.0,
            FieldTime::Sampled(g) => g.node(k),
        }
    }

    pub fn region(&self) -> &[usize] {
        &self.region
    }

    pub fn speed_sq_targets(&self) -> &[f64] {
        &self.speed_sq
    }

    /// Stream function at generator time `t`, linearly interpolated between
    /// slices. Exact slices are borrowed, not recomputed.
    pub fn psi_at(&self, t: f64) -> Result<Cow<'_, [f64]>> {
        match &self.time {
            FieldTime::Steady { .. } => Ok(Cow::Borrowed(&self.slices[0])),
            FieldTime::Sampled(g) => {
                if t > g.horizon() || t < 0.0 {
                    return Err(Error::ClockOverrun { tau: t, window: g.horizon() });
                }
                let k = g.floor_index(t);
                let a = if k == g.steps() { 0.0 } else { (t - g.node(k)) / g.dt() };
                if a == 0.0 {
                    return Ok(Cow::Borrowed(&self.slices[k]));
                }
                let (p, q) = (&self.slices[k], &self.slices[k + 1]);
                Ok(Cow::Owned(p.iter().zip(q).map(|(x, y)| x * (1.0 - a) + y * a).collect()))
            }
        }
    }

    pub fn face_u(&self, psi: &[f64], i: usize, j: usize) -> f64 {
        let g = &self.grid;
        (psi[g.node_index(i, j + 1)] - psi[g.node_index(i, j)]) / g.h(1)
    }

    pub fn face_v(&self, psi: &[f64], i: usize, j: usize) -> f64 {
        let g = &self.grid;
        -(psi[g.node_index(i + 1, j)] - psi[g.node_index(i, j)]) / g.h(0)
    }

    pub fn centers(&self, psi: &[f64]) -> CellVelocity {
        let g = &self.grid;
        let [nx, ny] = g.cells;
        let mut u = Vec::with_capacity(g.n_cells());
        let mut v = Vec::with_capacity(g.n_cells());
        for j in 0..ny {
            for i in 0..nx {
                u.push(0.5 * (self.face_u(psi, i, j) + self.face_u(psi, i + 1, j)));
                v.push(0.5 * (self.face_v(psi, i, j) + self.face_v(psi, i, j + 1)));
            }
        }
        CellVelocity { u, v }
    }

    pub fn centers_at(&self, t: f64) -> Result<CellVelocity> {
        Ok(self.centers(&self.psi_at(t)?))
    }

    /// Largest cell divergence over all slices, relative to `max|v| / h`.
    pub fn max_divergence(&self) -> f64 {
        let g = &self.grid;
        let [nx, ny] = g.cells;
        let mut worst: f64 = 0.0;
        for psi in &self.slices {
            let mut scale: f64 = 0.0;
            let mut div: f64 = 0.0;
            for j in 0..ny {
                for i in 0..nx {
                    let (ul, ur) = (self.face_u(psi, i, j), self.face_u(psi, i + 1, j));
                    let (vb, vt) = (self.face_v(psi, i, j), self.face_v(psi, i, j + 1));
                    scale = scale.max(ul.abs()).max(vb.abs());
                    div = div.max(((ur - ul) / g.h(0) + (vt - vb) / g.h(1)).abs());
                }
            }
            if scale > 0.0 {
                worst = worst.max(div * g.h(0).min(g.h(1)) / scale);
            }
        }
        worst
    }

    /// Largest normal velocity on wall faces over all slices.
    pub fn max_wall_flux(&self) -> f64 {
        let g = &self.grid;
        let [nx, ny] = g.cells;
        let mut worst: f64 = 0.0;
        for psi in &self.slices {
            if g.boundary[0] == Boundary::Wall {
                for j in 0..ny {
                    worst = worst.max(self.face_u(psi, 0, j).abs()).max(self.face_u(psi, nx, j).abs());
                }
            }
            if g.boundary[1] == Boundary::Wall {
                for i in 0..nx {
                    worst = worst.max(self.face_v(psi, i, 0).abs()).max(self.face_v(psi, i, ny).abs());
                }
            }
        }
        worst
    }

    /// `D = target - |v|^2` at cell centers of slice `k`.
    pub fn defect(&self, k: usize) -> Vec<f64> {
        let c = self.centers(&self.slices[k]);
        (0..self.grid.n_cells()).map(|i| self.speed_sq[self.region[i]] - c.speed_sq(i)).collect()
    }

    /// Space integral of `|D|` for slice `k`.
    pub fn slice_defect_norm(&self, k: usize) -> f64 {
        self.defect(k).iter().map(|d| d.abs()).sum::<f64>() * self.grid.cell_area()
    }

    /// Space-time integral of `|D|` over the generation window (trapezoid in time).
    pub fn defect_norm(&self) -> f64 {
        match &self.time {
            FieldTime::Steady { window } => window * self.slice_defect_norm(0),
            FieldTime::Sampled(g) => {
                let v: Vec<f64> = (0..g.len()).map(|k| self.slice_defect_norm(k)).collect();
                let inner: f64 = v[1..v.len() - 1].iter().sum();
                g.dt() * (0.5 * (v[0] + v[v.len() - 1]) + inner)
            }
        }
    }

    /// Smallest `D` over all cells and slices.
    pub fn min_defect(&self) -> f64 {
        (0..self.slices.len()).flat_map(|k| self.defect(k)).fold(f64::INFINITY, f64::min)
    }

    /// Mean of `D` over the cells of `region` in slice `k`.
    pub fn mean_defect(&self, k: usize, region: usize) -> f64 {
        let d = self.defect(k);
        let (sum, n) = d
            .iter()
            .zip(&self.region)
            .filter(|(_, &r)| r == region)
            .fold((0.0, 0usize), |(s, n), (x, _)| (s + x, n + 1));
        sum / n.max(1) as f64
    }

    /// L2 distance of the velocities at generator time `t`.
    pub fn l2_distance(&self, other: &VelocityField, t: f64) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::Mismatch("fields on different grids".into()));
        }
        let (a, b) = (self.centers_at(t)?, other.centers_at(t)?);
        let s: f64 = (0..self.grid.n_cells()).map(|c| (a.u[c] - b.u[c]).powi(2) + (a.v[c] - b.v[c]).powi(2)).sum();
        Ok((s * self.grid.cell_area()).sqrt())
    }

    /// Self-describing CSV: one `#`-prefixed JSON header line with the grid
    /// metadata, then `slice,i,j,psi` rows, slice-major, row-major in space.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header =
            Header { grid: self.grid, time: self.time, speed_sq: self.speed_sq.clone(), region: self.region.clone() };
        writeln!(out, "# {}", serde_json::to_string(&header)?)?;
        writeln!(out, "slice,i,j,psi")?;
        let [nx, ny] = self.grid.cells;
        for (k, psi) in self.slices.iter().enumerate() {
            for j in 0..=ny {
                for i in 0..=nx {
                    writeln!(out, "{k},{i},{j},{}", psi[self.grid.node_index(i, j)])?;
                }
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let bad = |why: &str| Error::Mismatch(format!("field file: {why}"));
        let first = lines.next().ok_or_else(|| bad("empty"))??;
        let json = first.strip_prefix("# ").ok_or_else(|| bad("missing header"))?;
        let h: Header = serde_json::from_str(json)?;
        let _ = lines.next().ok_or_else(|| bad("missing column line"))??;
        let count = h.time.slice_count();
        let mut slices = vec![vec![0.0; h.grid.n_nodes()]; count];
        let mut seen = 0usize;
        for line in lines {
            let line = line?;
            let mut parts = line.split(',');
            let mut next = || parts.next().ok_or_else(|| bad("short row"));
            let k: usize = next()?.parse().map_err(|_| bad("slice index"))?;
            let i: usize = next()?.parse().map_err(|_| bad("i index"))?;
            let j: usize = next()?.parse().map_err(|_| bad("j index"))?;
            let p: f64 = next()?.parse().map_err(|_| bad("value"))?;
            if k >= count || i > h.grid.cells[0] || j > h.grid.cells[1] {
                return Err(bad("index out of range"));
            }
            slices[k][h.grid.node_index(i, j)] = p;
            seen += 1;
        }
        if seen != count * h.grid.n_nodes() {
            return Err(bad("missing rows"));
        }
        Self::new(h.grid, h.time, slices, h.region, h.speed_sq)
    }
}

/// Stationary shear layers `v = (c sigma(x2), 0)` with `sigma = +-1` on
/// `stripes` equal bands. Axis 0 must be periodic so that `v . n = 0` on walls.
pub fn shear_fixture(grid: BoxGrid, speed: f64, stripes: usize) -> Result<VelocityField> {
    if stripes < 1 {
        return Err(Error::InvalidDomain("stripe count must be at least 1".into()));
    }
    if grid.boundary[0] != Boundary::Periodic {
        return Err(Error::InvalidDomain("shear layers need a periodic axis 0".into()));
    }
    let [nx, ny] = grid.cells;
    let h = grid.h(1);
    let mut column = vec![0.0; ny + 1];
    for j in 0..ny {
        let band = ((j as f64 + 0.5) / ny as f64 * stripes as f64).floor() as usize;
        let sigma = if band.is_multiple_of(2) { 1.0 } else { -1.0 };
        column[j + 1] = column[j] + speed * sigma * h;
    }
    let mut psi = vec![0.0; grid.n_nodes()];
    for j in 0..=ny {
        for i in 0..=nx {
            psi[grid.node_index(i, j)] = column[j];
        }
    }
    VelocityField::single(grid, FieldTime::Steady { window: 1.0 }, vec![psi], speed * speed)
}

/// Assemble per-subdomain fields into one field on the domain grid.
///
/// Each piece must carry a stream function that is constant along every edge
/// it shares with another piece; constants are matched across interfaces.
pub fn paste(domain: &DomainSpec, pieces: &[VelocityField]) -> Result<VelocityField> {
    if pieces.len() != domain.subdomains().len() {
        return Err(Error::Mismatch("one field per subdomain required".into()));
    }
    let first = &pieces[0];
    if pieces.len() == 1 {
        return Ok(first.clone());
    }
    let h = [first.grid.h(0), first.grid.h(1)];
    let cells = [(domain.lengths()[0] / h[0]).round() as usize, (domain.lengths()[1] / h[1]).round() as usize];
    let grid = domain.grid(cells)?;
    for p in pieces {
        if !p.grid.same_spacing(&grid) {
            return Err(Error::Mismatch("pieces use different grid spacings".into()));
        }
        if p.time != first.time {
            return Err(Error::Mismatch("pieces use different time grids".into()));
        }
    }
    let offsets: Vec<[usize; 2]> = pieces
        .iter()
        .map(|p| [(p.grid.origin[0] / h[0]).round() as usize, (p.grid.origin[1] / h[1]).round() as usize])
        .collect();
    let region = domain.cell_regions(cells)?;
    let speed_sq: Vec<f64> = pieces.iter().map(|p| p.speed_sq[0]).collect();

    // owner of each global node, and node lists per piece
    let node_of = |k: usize, i: usize, j: usize| grid.node_index(offsets[k][0] + i, offsets[k][1] + j);
    let mut slices = Vec::with_capacity(first.slice_count());
    for s in 0..first.slice_count() {
        let mut shift = vec![None::<f64>; pieces.len()];
        let mut psi = vec![f64::NAN; grid.n_nodes()];
        let mut owner = vec![usize::MAX; grid.n_nodes()];
        let mut queue = VecDeque::new();
        shift[0] = Some(0.0);
        queue.push_back(0usize);
        let mut placed = vec![false; pieces.len()];
        while let Some(k) = queue.pop_front() {
            if placed[k] {
                continue;
            }
            placed[k] = true;
            let p = &pieces[k];
            let c = shift[k].expect("shift set before placement");
            let [px, py] = p.grid.cells;
            for j in 0..=py {
                for i in 0..=px {
                    let g = node_of(k, i, j);
                    let val = p.slices[s][p.grid.node_index(i, j)] + c;
                    if owner[g] == usize::MAX {
                        owner[g] = k;
                        psi[g] = val;
                    } else {
                        let scale = 1.0 + val.abs().max(psi[g].abs());
                        if (psi[g] - val).abs() > 1e-10 * scale {
                            return Err(Error::Mismatch(format!(
                                "pieces {} and {k} disagree on a shared edge; a piece carries normal flux",
                                owner[g]
                            )));
                        }
                    }
                }
            }
            // neighbours: any unplaced piece sharing a node
            for (m, q) in pieces.iter().enumerate() {
                if placed[m] || shift[m].is_some() {
                    continue;
                }
                let [qx, qy] = q.grid.cells;
                'search: for j in 0..=qy {
                    for i in 0..=qx {
                        let g = node_of(m, i, j);
                        if owner[g] != usize::MAX {
                            shift[m] = Some(psi[g] - q.slices[s][q.grid.node_index(i, j)]);
                            queue.push_back(m);
                            break 'search;
                        }
                    }
                }
            }
        }
        if placed.iter().any(|&p| !p) {
            return Err(Error::Mismatch("pieces do not form a connected partition".into()));
        }
        slices.push(psi);
    }
    VelocityField::new(grid, first.time, slices, region, speed_sq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn periodic(n: usize) -> BoxGrid {
        BoxGrid::unit_square(n, [Boundary::Periodic, Boundary::Wall]).unwrap()
    }

    #[test]
    fn fixture_has_exact_speed() {
        let f = shear_fixture(periodic(16), 1.0, 2).unwrap();
        let c = f.centers_at(0.3).unwrap();
        for k in 0..256 {
            assert!((c.speed_sq(k) - 1.0).abs() < 1e-14);
        }
        assert!(f.min_defect().abs() < 1e-14);
        assert_eq!(f.max_wall_flux(), 0.0);
        assert!(f.max_divergence() < 1e-14);
    }

    #[test]
    fn fixture_rejects_bad_input() {
        assert!(shear_fixture(periodic(8), 1.0, 0).is_err());
        let walls = BoxGrid::unit_square(8, [Boundary::Wall, Boundary::Wall]).unwrap();
        assert!(shear_fixture(walls, 1.0, 2).is_err());
    }

    #[test]
    fn stripe_patterns_differ_at_equal_energy() {
        let a = shear_fixture(periodic(16), 1.0, 2).unwrap();
        let b = shear_fixture(periodic(16), 1.0, 4).unwrap();
        assert!(a.l2_distance(&b, 0.0).unwrap() > 0.1);
        assert!((a.defect_norm() - b.defect_norm()).abs() < 1e-13);
    }

    #[test]
    fn paste_two_strips_with_different_speeds() {
        let d =
            DomainSpec::tensor(vec![1.0, 1.0], vec![Boundary::Periodic, Boundary::Wall], &[vec![], vec![0.5]]).unwrap();
        let lower = shear_fixture(d.subgrid(0, [16, 16]).unwrap(), 1.0, 2).unwrap();
        let upper = shear_fixture(d.subgrid(1, [16, 16]).unwrap(), 2.0, 3).unwrap();
        let f = paste(&d, &[lower, upper]).unwrap();
        let c = f.centers_at(0.0).unwrap();
        for (k, &r) in f.region().iter().enumerate() {
            let want = if r == 0 { 1.0 } else { 4.0 };
            assert!((c.speed_sq(k) - want).abs() < 1e-13);
        }
        assert!(f.max_divergence() < 1e-14);
        assert_eq!(f.max_wall_flux(), 0.0);
    }

    #[test]
    fn paste_single_piece_is_identity() {
        let d = DomainSpec::single(vec![1.0, 1.0], vec![Boundary::Periodic, Boundary::Wall]).unwrap();
        let f = shear_fixture(d.grid([8, 8]).unwrap(), 1.5, 2).unwrap();
        assert_eq!(paste(&d, std::slice::from_ref(&f)).unwrap(), f);
    }

    #[test]
    fn paste_rejects_spacing_mismatch() {
        let d =
            DomainSpec::tensor(vec![1.0, 1.0], vec![Boundary::Periodic, Boundary::Wall], &[vec![], vec![0.5]]).unwrap();
        let a = shear_fixture(d.subgrid(0, [16, 16]).unwrap(), 1.0, 2).unwrap();
        let b = shear_fixture(d.subgrid(1, [32, 32]).unwrap(), 1.0, 2).unwrap();
        assert!(paste(&d, &[a, b]).is_err());
    }

    #[test]
    fn csv_round_trip_is_bitwise() {
        let f = shear_fixture(periodic(6), 0.7, 3).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let g = VelocityField::read_csv(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(f, g);
    }

    proptest! {
        #[test]
        fn random_stream_functions_are_divergence_free(
            vals in proptest::collection::vec(-3.0f64..3.0, 81),
        ) {
            let g = BoxGrid::unit_square(8, [Boundary::Wall, Boundary::Wall]).unwrap();
            let f = VelocityField::single(g, FieldTime::Steady { window: 1.0 }, vec![vals], 1.0).unwrap();
            prop_assert!(f.max_divergence() < 1e-12);
        }

        #[test]
        fn fixture_speed_is_exact(n in 2usize..40, stripes in 1usize..6, c in 0.1f64..5.0) {
            let f = shear_fixture(periodic(n), c, stripes).unwrap();
            let v = f.centers_at(0.0).unwrap();
            for k in 0..n * n {
                prop_assert!((v.speed_sq(k) - c * c).abs() <= 1e-13 * c * c);
            }
        }
    }
}
