use std::collections::BTreeMap;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::error::{Result, RomError};

/// Face orientation of a Cartesian cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    East,
    West,
    North,
    South,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::East,
        Direction::West,
        Direction::North,
        Direction::South,
    ];

    /// Outward unit normal.
    pub fn normal(self) -> [f64; 2] {
        match self {
            Direction::East => [1.0, 0.0],
            Direction::West => [-1.0, 0.0],
            Direction::North => [0.0, 1.0],
            Direction::South => [0.0, -1.0],
        }
    }

    pub fn index(self) -> usize {
        match self {
            Direction::East => 0,
            Direction::West => 1,
            Direction::North => 2,
            Direction::South => 3,
        }
    }

    fn offset(self) -> (isize, isize) {
        match self {
            Direction::East => (1, 0),
            Direction::West => (-1, 0),
            Direction::North => (0, 1),
            Direction::South => (0, -1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Neighbor {
    Cell(usize),
    /// Index into [`Mesh::boundary_faces`].
    Boundary(usize),
}

#[derive(Clone, Debug)]
pub struct BoundaryFace {
    pub cell: usize,
    pub dir: Direction,
    pub patch: usize,
    pub area: f64,
}

#[derive(Clone, Debug)]
pub struct Patch {
    pub name: String,
    pub faces: Vec<usize>,
}

/// Geometry of the 2D tee: a horizontal main channel with a vertical branch
/// standing on its top wall.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeeSpec {
    pub main_nx: usize,
    pub main_ny: usize,
    pub branch_x0: usize,
    pub branch_nx: usize,
    pub branch_ny: usize,
}

impl Default for TeeSpec {
    fn default() -> Self {
        TeeSpec {
            main_nx: 64,
            main_ny: 32,
            branch_x0: 24,
            branch_nx: 16,
            branch_ny: 24,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    /// Patches `west`, `east`, `south`, `north`.
    Rectangle,
    /// Patches `lid` (north) and `walls`.
    Cavity,
    /// Patches `main_inlet`, `branch_inlet`, `outlet`, `walls`.
    Tee(TeeSpec),
}

/// Structured 2D Cartesian finite-volume mesh, possibly masked (the tee).
///
/// Active cells are numbered row by row (x fastest), which keeps the
/// bandwidth of compact operators at most one grid row.
#[derive(Clone, Debug)]
pub struct Mesh {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub shape: Shape,
    pub cell_volumes: Vec<f64>,
    pub boundary_faces: Vec<BoundaryFace>,
    pub patches: Vec<Patch>,
    cells: Vec<[usize; 2]>,
    lookup: Vec<Option<usize>>,
    neighbors: Vec<[Neighbor; 4]>,
    id: u64,
}

impl Mesh {
    pub fn rectangle(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Mesh> {
        Mesh::build(nx, ny, lx / nx as f64, ly / ny as f64, Shape::Rectangle)
    }

    pub fn cavity(n: usize) -> Result<Mesh> {
        Mesh::build(n, n, 1.0 / n as f64, 1.0 / n as f64, Shape::Cavity)
    }

    pub fn tee(spec: TeeSpec, h: f64) -> Result<Mesh> {
        if spec.branch_x0 + spec.branch_nx > spec.main_nx || spec.branch_nx == 0 {
            return Err(RomError::config("branch does not fit on the main channel"));
        }
        Mesh::build(
            spec.main_nx,
            spec.main_ny + spec.branch_ny,
            h,
            h,
            Shape::Tee(spec),
        )
    }

    fn build(nx: usize, ny: usize, dx: f64, dy: f64, shape: Shape) -> Result<Mesh> {
        if nx == 0 || ny == 0 {
            return Err(RomError::config("mesh needs at least one cell per axis"));
        }
        if !(dx > 0.0 && dy > 0.0 && dx.is_finite() && dy.is_finite()) {
            return Err(RomError::config("cell sizes must be positive"));
        }
        let active = |i: usize, j: usize| -> bool {
            match shape {
                Shape::Tee(t) => {
                    j < t.main_ny || (i >= t.branch_x0 && i < t.branch_x0 + t.branch_nx)
                }
                _ => true,
            }
        };
        let mut lookup = vec![None; nx * ny];
        let mut cells = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                if active(i, j) {
                    lookup[j * nx + i] = Some(cells.len());
                    cells.push([i, j]);
                }
            }
        }

        let patch_names: Vec<&str> = match shape {
            Shape::Rectangle => vec!["west", "east", "south", "north"],
            Shape::Cavity => vec!["lid", "walls"],
            Shape::Tee(_) => vec!["main_inlet", "branch_inlet", "outlet", "walls"],
        };
        let classify = |i: usize, j: usize, dir: Direction| -> usize {
            match shape {
                Shape::Rectangle => match dir {
                    Direction::West => 0,
                    Direction::East => 1,
                    Direction::South => 2,
                    Direction::North => 3,
                },
                Shape::Cavity => {
                    if dir == Direction::North {
                        0
                    } else {
                        1
                    }
                }
                Shape::Tee(t) => match dir {
                    Direction::West if i == 0 && j < t.main_ny => 0,
                    Direction::North if j == ny - 1 => 1,
                    Direction::East if i == nx - 1 && j < t.main_ny => 2,
                    _ => 3,
                },
            }
        };

        let mut patches: Vec<Patch> = patch_names
            .iter()
            .map(|n| Patch {
                name: n.to_string(),
                faces: Vec::new(),
            })
            .collect();
        let mut boundary_faces = Vec::new();
        let mut neighbors = Vec::with_capacity(cells.len());
        for (c, &[i, j]) in cells.iter().enumerate() {
            let mut nb = [Neighbor::Cell(0); 4];
            for dir in Direction::ALL {
                let (di, dj) = dir.offset();
                let (ii, jj) = (i as isize + di, j as isize + dj);
                let inside = ii >= 0 && jj >= 0 && (ii as usize) < nx && (jj as usize) < ny;
                let other = if inside {
                    lookup[jj as usize * nx + ii as usize]
                } else {
                    None
                };
                nb[dir.index()] = match other {
                    Some(o) => Neighbor::Cell(o),
                    None => {
                        let patch = classify(i, j, dir);
                        let area = match dir {
                            Direction::East | Direction::West => dy,
                            _ => dx,
                        };
                        boundary_faces.push(BoundaryFace {
                            cell: c,
                            dir,
                            patch,
                            area,
                        });
                        patches[patch].faces.push(boundary_faces.len() - 1);
                        Neighbor::Boundary(boundary_faces.len() - 1)
                    }
                };
            }
            neighbors.push(nb);
        }

        let mut mesh = Mesh {
            nx,
            ny,
            dx,
            dy,
            shape,
            cell_volumes: vec![dx * dy; cells.len()],
            boundary_faces,
            patches,
            cells,
            lookup,
            neighbors,
            id: 0,
        };
        mesh.id = mesh.compute_id();
        Ok(mesh)
    }

    fn compute_id(&self) -> u64 {
        let mut h = Sha256::new();
        h.update(self.to_manifest().as_bytes());
        let d = h.finalize();
        u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_ij(&self, c: usize) -> [usize; 2] {
        self.cells[c]
    }

    pub fn cell_at(&self, i: usize, j: usize) -> Option<usize> {
        if i < self.nx && j < self.ny {
            self.lookup[j * self.nx + i]
        } else {
            None
        }
    }

    pub fn center(&self, c: usize) -> [f64; 2] {
        let [i, j] = self.cells[c];
        [(i as f64 + 0.5) * self.dx, (j as f64 + 0.5) * self.dy]
    }

    pub fn neighbor(&self, c: usize, dir: Direction) -> Neighbor {
        self.neighbors[c][dir.index()]
    }

    pub fn face_area(&self, dir: Direction) -> f64 {
        match dir {
            Direction::East | Direction::West => self.dy,
            Direction::North | Direction::South => self.dx,
        }
    }

    /// Distance between the centres of the two cells sharing a face.
    pub fn face_spacing(&self, dir: Direction) -> f64 {
        match dir {
            Direction::East | Direction::West => self.dx,
            Direction::North | Direction::South => self.dy,
        }
    }

    pub fn patch_id(&self, name: &str) -> Option<usize> {
        self.patches.iter().position(|p| p.name == name)
    }

    pub fn total_volume(&self) -> f64 {
        self.cell_volumes.iter().sum()
    }

    pub fn boundary_measure(&self) -> f64 {
        self.boundary_faces.iter().map(|f| f.area).sum()
    }

    /// Mesh-size parameter sqrt(dx*dy).
    pub fn h(&self) -> f64 {
        (self.dx * self.dy).sqrt()
    }

    /// True when no face of `c` touches the boundary.
    pub fn is_interior(&self, c: usize) -> bool {
        self.neighbors[c]
            .iter()
            .all(|n| matches!(n, Neighbor::Cell(_)))
    }

    /// Interior cells whose neighbours are also interior; second-order
    /// stencils are exact there regardless of boundary treatment.
    pub fn is_deep_interior(&self, c: usize) -> bool {
        self.is_interior(c)
            && self.neighbors[c].iter().all(|n| match n {
                Neighbor::Cell(o) => self.is_interior(*o),
                Neighbor::Boundary(_) => false,
            })
    }

    /// Cell containing point (x, y), if inside the active domain.
    pub fn locate(&self, x: f64, y: f64) -> Option<usize> {
        if !(x >= 0.0 && y >= 0.0) {
            return None;
        }
        let i = (x / self.dx).floor() as usize;
        let j = (y / self.dy).floor() as usize;
        // points on the far edge belong to the last cell
        let i = if i == self.nx && x <= self.nx as f64 * self.dx { i - 1 } else { i };
        let j = if j == self.ny && y <= self.ny as f64 * self.dy { j - 1 } else { j };
        self.cell_at(i, j)
    }

    pub fn to_manifest(&self) -> String {
        let mut s = String::new();
        let shape = match self.shape {
            Shape::Rectangle => "rectangle",
            Shape::Cavity => "cavity",
            Shape::Tee(_) => "tee",
        };
        let _ = writeln!(s, "shape={shape}");
        let _ = writeln!(s, "nx={}", self.nx);
        let _ = writeln!(s, "ny={}", self.ny);
        let _ = writeln!(s, "dx={}", self.dx);
        let _ = writeln!(s, "dy={}", self.dy);
        if let Shape::Tee(t) = self.shape {
            let _ = writeln!(s, "main_ny={}", t.main_ny);
            let _ = writeln!(s, "branch_x0={}", t.branch_x0);
            let _ = writeln!(s, "branch_nx={}", t.branch_nx);
        }
        for p in &self.patches {
            let _ = writeln!(s, "patch.{}={}", p.name, p.faces.len());
        }
        s
    }

    pub fn from_manifest(text: &str) -> Result<Mesh> {
        let kv = parse_key_values(text)?;
        let get = |k: &str| -> Result<&str> {
            kv.get(k)
                .map(|s| s.as_str())
                .ok_or_else(|| RomError::Format(format!("mesh manifest lacks `{k}`")))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| RomError::Format(format!("bad integer for `{k}`")))
        };
        let real = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| RomError::Format(format!("bad real for `{k}`")))
        };
        let (nx, ny, dx, dy) = (num("nx")?, num("ny")?, real("dx")?, real("dy")?);
        let shape = match get("shape")? {
            "rectangle" => Shape::Rectangle,
            "cavity" => Shape::Cavity,
            "tee" => {
                let main_ny = num("main_ny")?;
                Shape::Tee(TeeSpec {
                    main_nx: nx,
                    main_ny,
                    branch_x0: num("branch_x0")?,
                    branch_nx: num("branch_nx")?,
                    branch_ny: ny.checked_sub(main_ny).ok_or_else(|| {
                        RomError::Format("main_ny exceeds ny".into())
                    })?,
                })
            }
            other => return Err(RomError::Format(format!("unknown shape `{other}`"))),
        };
        let mesh = Mesh::build(nx, ny, dx, dy, shape)?;
        for p in &mesh.patches {
            if let Some(v) = kv.get(&format!("patch.{}", p.name)) {
                if v.parse::<usize>().ok() != Some(p.faces.len()) {
                    return Err(RomError::Format(format!(
                        "patch `{}` face count disagrees with geometry",
                        p.name
                    )));
                }
            }
        }
        Ok(mesh)
    }
}

/// Parses `key=value` lines, ignoring blanks and `#` comments.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| RomError::Format(format!("line {}: expected key=value", n + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}
