//! Mesh model, the `djtled-mesh 1` text format, structured box generation,
//! node selection and legacy VTK export.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::str::FromStr;

use crate::element::{jacobian0, ElementKind, ElementShape, ShapeDerivatives};
use crate::{Error, Real, Result, Vec3};

/// An immutable single-kind mesh in its reference configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<Vec3>,
    pub elements: Vec<Vec<usize>>,
    pub kind: ElementKind,
}

impl Mesh {
    /// Validates connectivity and orientation.
    pub fn new(nodes: Vec<Vec3>, elements: Vec<Vec<usize>>, kind: ElementKind) -> Result<Self> {
        let mesh = Mesh { nodes, elements, kind };
        mesh.validate()?;
        Ok(mesh)
    }

    fn validate(&self) -> Result<()> {
        let n = self.kind.nodes();
        for (e, conn) in self.elements.iter().enumerate() {
            if conn.len() != n {
                return Err(Error::InvalidElement {
                    element: e,
                    message: format!("expected {n} nodes for {}, found {}", self.kind, conn.len()),
                });
            }
            if let Some(&bad) = conn.iter().find(|&&i| i >= self.nodes.len()) {
                return Err(Error::InvalidElement {
                    element: e,
                    message: format!("node index {bad} out of range ({} nodes)", self.nodes.len()),
                });
            }
            let check = match self.kind {
                ElementKind::T4 => self.reference_jacobian::<4>(e).map(|_| ()),
                ElementKind::H8 => self.reference_jacobian::<8>(e).map(|_| ()),
            };
            check.map_err(|err| err.at_element(e))?;
        }
        Ok(())
    }

    fn reference_jacobian<const N: usize>(&self, e: usize) -> Result<crate::element::Jacobian>
    where
        ShapeDerivatives<N>: ElementShape,
    {
        jacobian0(&self.element_coords::<N>(e), &ShapeDerivatives::<N>::natural())
    }

    pub fn dofs(&self) -> usize {
        3 * self.nodes.len()
    }

    /// Reference coordinates of element `e`. `N` must match the mesh kind.
    pub fn element_coords<const N: usize>(&self, e: usize) -> [Vec3; N] {
        let conn = &self.elements[e];
        std::array::from_fn(|a| self.nodes[conn[a]])
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(Real::INFINITY);
        let mut hi = Vec3::repeat(Real::NEG_INFINITY);
        for p in &self.nodes {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }

    /// Nodes lying on the boundary surface (on a face used by one element).
    pub fn boundary_nodes(&self) -> BTreeSet<usize> {
        let local_faces: &[&[usize]] = match self.kind {
            ElementKind::T4 => &[&[0, 1, 2], &[0, 1, 3], &[0, 2, 3], &[1, 2, 3]],
            ElementKind::H8 => &[
                &[0, 1, 2, 3],
                &[4, 5, 6, 7],
                &[0, 1, 5, 4],
                &[1, 2, 6, 5],
                &[2, 3, 7, 6],
                &[3, 0, 4, 7],
            ],
        };
        let mut count: HashMap<Vec<usize>, usize> = HashMap::new();
        for conn in &self.elements {
            for face in local_faces {
                let mut key: Vec<usize> = face.iter().map(|&a| conn[a]).collect();
                key.sort_unstable();
                *count.entry(key).or_default() += 1;
            }
        }
        count
            .into_iter()
            .filter(|(_, c)| *c == 1)
            .flat_map(|(k, _)| k)
            .collect()
    }

    /// Keeps the elements accepted by `keep` and drops nodes no longer used.
    pub fn retain_elements(&self, mut keep: impl FnMut(&[Vec3]) -> bool) -> Result<Mesh> {
        let mut remap = vec![usize::MAX; self.nodes.len()];
        let mut nodes = Vec::new();
        let mut elements = Vec::new();
        for conn in &self.elements {
            let coords: Vec<Vec3> = conn.iter().map(|&i| self.nodes[i]).collect();
            if !keep(&coords) {
                continue;
            }
            let mapped = conn
                .iter()
                .map(|&i| {
                    if remap[i] == usize::MAX {
                        remap[i] = nodes.len();
                        nodes.push(self.nodes[i]);
                    }
                    remap[i]
                })
                .collect();
            elements.push(mapped);
        }
        if elements.is_empty() {
            return Err(Error::invalid("element filter removed every element"));
        }
        Mesh::new(nodes, elements, self.kind)
    }
}

/// Parses the line-oriented mesh format.
pub fn load_mesh(text: &str) -> Result<Mesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let mut next = |what: &str| {
        lines.next().ok_or_else(|| Error::Parse {
            line: text.lines().count() + 1,
            message: format!("unexpected end of file, expected {what}"),
        })
    };

    let (line, header) = next("header")?;
    if header.split_whitespace().collect::<Vec<_>>() != ["djtled-mesh", "1"] {
        return Err(Error::Parse { line, message: "expected header `djtled-mesh 1`".into() });
    }

    let (line, node_header) = next("`nodes N`")?;
    let node_count = match node_header.split_whitespace().collect::<Vec<_>>()[..] {
        ["nodes", n] => parse_field::<usize>(n, line)?,
        _ => return Err(Error::Parse { line, message: "expected `nodes N`".into() }),
    };

    let mut nodes = Vec::with_capacity(node_count);
    for _ in 0..node_count {
        let (line, l) = next("node coordinates")?;
        let v = parse_fields::<Real>(l, line)?;
        if v.len() != 3 {
            return Err(Error::Parse { line, message: format!("expected 3 coordinates, found {}", v.len()) });
        }
        nodes.push(Vec3::new(v[0], v[1], v[2]));
    }

    let (line, elem_header) = next("`elements T4|H8 M`")?;
    let (kind, element_count) = match elem_header.split_whitespace().collect::<Vec<_>>()[..] {
        ["elements", k, m] => (
            ElementKind::from_str(k).map_err(|e| Error::Parse { line, message: e.to_string() })?,
            parse_field::<usize>(m, line)?,
        ),
        _ => return Err(Error::Parse { line, message: "expected `elements T4|H8 M`".into() }),
    };

    let mut elements = Vec::with_capacity(element_count);
    for _ in 0..element_count {
        let (line, l) = next("element connectivity")?;
        let conn = parse_fields::<usize>(l, line)?;
        if conn.len() != kind.nodes() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} node indices, found {}", kind.nodes(), conn.len()),
            });
        }
        elements.push(conn);
    }

    if let Some((line, _)) = lines.next() {
        return Err(Error::Parse { line, message: "trailing content after elements".into() });
    }

    Mesh::new(nodes, elements, kind)
}

fn parse_field<T: FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse().map_err(|_| Error::Parse { line, message: format!("cannot parse `{s}`") })
}

fn parse_fields<T: FromStr>(s: &str, line: usize) -> Result<Vec<T>> {
    s.split_whitespace().map(|f| parse_field(f, line)).collect()
}

/// Writes the mesh in the text format with round-trip precision.
pub fn render_mesh(mesh: &Mesh) -> String {
    let mut out = String::new();
    writeln!(out, "djtled-mesh 1").unwrap();
    writeln!(out, "nodes {}", mesh.nodes.len()).unwrap();
    for p in &mesh.nodes {
        writeln!(out, "{} {} {}", p.x, p.y, p.z).unwrap();
    }
    writeln!(out, "elements {} {}", mesh.kind, mesh.elements.len()).unwrap();
    for conn in &mesh.elements {
        let idx: Vec<String> = conn.iter().map(|i| i.to_string()).collect();
        writeln!(out, "{}", idx.join(" ")).unwrap();
    }
    out
}

/// Structured box `[0, extent]` with `divisions` cells per axis. T4 meshes
/// split every cell into six tetrahedra around the cell's main diagonal.
pub fn generate_box(extent: [Real; 3], divisions: [usize; 3], kind: ElementKind) -> Result<Mesh> {
    if extent.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
        return Err(Error::invalid(format!("box extents must be positive, got {extent:?}")));
    }
    if divisions.contains(&0) {
        return Err(Error::invalid(format!("box divisions must be at least 1, got {divisions:?}")));
    }
    let [dx, dy, dz] = divisions;
    let index = |i: usize, j: usize, k: usize| i + (dx + 1) * (j + (dy + 1) * k);

    let mut nodes = Vec::with_capacity((dx + 1) * (dy + 1) * (dz + 1));
    for k in 0..=dz {
        for j in 0..=dy {
            for i in 0..=dx {
                nodes.push(Vec3::new(
                    extent[0] * i as Real / dx as Real,
                    extent[1] * j as Real / dy as Real,
                    extent[2] * k as Real / dz as Real,
                ));
            }
        }
    }

    let mut elements = Vec::new();
    for k in 0..dz {
        for j in 0..dy {
            for i in 0..dx {
                let c = [
                    index(i, j, k),
                    index(i + 1, j, k),
                    index(i + 1, j + 1, k),
                    index(i, j + 1, k),
                    index(i, j, k + 1),
                    index(i + 1, j, k + 1),
                    index(i + 1, j + 1, k + 1),
                    index(i, j + 1, k + 1),
                ];
                match kind {
                    ElementKind::H8 => elements.push(c.to_vec()),
                    ElementKind::T4 => {
                        for [a, b] in [[1, 2], [2, 3], [3, 7], [7, 4], [4, 5], [5, 1]] {
                            elements.push(vec![c[0], c[a], c[b], c[6]]);
                        }
                    }
                }
            }
        }
    }
    Mesh::new(nodes, elements, kind)
}

/// Legacy ASCII VTK unstructured grid with a `displacement` point vector field.
pub fn export_field(mesh: &Mesh, displacements: &[Vec3]) -> Result<String> {
    if displacements.len() != mesh.nodes.len() {
        return Err(Error::invalid(format!(
            "displacement field has {} entries, mesh has {} nodes",
            displacements.len(),
            mesh.nodes.len()
        )));
    }
    let ty = if crate::PRECISION == "double" { "double" } else { "float" };
    let n = mesh.kind.nodes();
    let mut out = String::new();
    writeln!(out, "# vtk DataFile Version 3.0").unwrap();
    writeln!(out, "djtled displacement field").unwrap();
    writeln!(out, "ASCII").unwrap();
    writeln!(out, "DATASET UNSTRUCTURED_GRID").unwrap();
    writeln!(out, "POINTS {} {ty}", mesh.nodes.len()).unwrap();
    for p in &mesh.nodes {
        writeln!(out, "{} {} {}", p.x, p.y, p.z).unwrap();
    }
    writeln!(out, "CELLS {} {}", mesh.elements.len(), mesh.elements.len() * (n + 1)).unwrap();
    for conn in &mesh.elements {
        write!(out, "{n}").unwrap();
        for i in conn {
            write!(out, " {i}").unwrap();
        }
        out.push('\n');
    }
    writeln!(out, "CELL_TYPES {}", mesh.elements.len()).unwrap();
    for _ in &mesh.elements {
        writeln!(out, "{}", mesh.kind.vtk_cell_type()).unwrap();
    }
    writeln!(out, "POINT_DATA {}", mesh.nodes.len()).unwrap();
    writeln!(out, "VECTORS displacement {ty}").unwrap();
    for u in displacements {
        writeln!(out, "{} {} {}", u.x, u.y, u.z).unwrap();
    }
    Ok(out)
}

/// Reads the `displacement` vectors back from [`export_field`] output.
pub fn read_field(text: &str) -> Result<Vec<Vec3>> {
    let mut lines = text.lines().enumerate();
    let count = loop {
        let (i, l) = lines
            .next()
            .ok_or_else(|| Error::Parse { line: 0, message: "no POINT_DATA section".into() })?;
        if let Some(rest) = l.strip_prefix("POINT_DATA ") {
            break parse_field::<usize>(rest.trim(), i + 1)?;
        }
    };
    match lines.next() {
        Some((_, l)) if l.starts_with("VECTORS displacement") => {}
        Some((i, _)) => return Err(Error::Parse { line: i + 1, message: "expected VECTORS displacement".into() }),
        None => return Err(Error::Parse { line: 0, message: "truncated field".into() }),
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let (i, l) = lines
            .next()
            .ok_or_else(|| Error::Parse { line: 0, message: "truncated field".into() })?;
        let v = parse_fields::<Real>(l, i + 1)?;
        if v.len() != 3 {
            return Err(Error::Parse { line: i + 1, message: "expected 3 components".into() });
        }
        out.push(Vec3::new(v[0], v[1], v[2]));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Axis {
    X = 0,
    Y = 1,
    Z = 2,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_char(c: char) -> Option<Axis> {
        match c {
            'x' | 'X' => Some(Axis::X),
            'y' | 'Y' => Some(Axis::Y),
            'z' | 'Z' => Some(Axis::Z),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlaneAt {
    Min,
    Max,
    Value(Real),
}

/// Node selection predicates.
#[derive(Debug, Clone, PartialEq)]
pub enum Selector {
    /// Nodes within `1e-9 · extent` of an axis-aligned plane.
    Plane { axis: Axis, at: PlaneAt },
    Sphere { centre: Vec3, radius: Real },
    Boundary,
    All(Vec<Selector>),
}

impl Selector {
    pub fn select(&self, mesh: &Mesh) -> Vec<usize> {
        let (lo, hi) = mesh.bounds();
        let eps = 1e-9 * (hi - lo).max();
        let boundary = self.needs_boundary().then(|| mesh.boundary_nodes());
        (0..mesh.nodes.len())
            .filter(|&i| self.matches(mesh.nodes[i], i, lo, hi, eps, boundary.as_ref()))
            .collect()
    }

    fn needs_boundary(&self) -> bool {
        match self {
            Selector::Boundary => true,
            Selector::All(parts) => parts.iter().any(Selector::needs_boundary),
            _ => false,
        }
    }

    fn matches(
        &self,
        p: Vec3,
        i: usize,
        lo: Vec3,
        hi: Vec3,
        eps: Real,
        boundary: Option<&BTreeSet<usize>>,
    ) -> bool {
        match self {
            Selector::Plane { axis, at } => {
                let a = axis.index();
                let target = match at {
                    PlaneAt::Min => lo[a],
                    PlaneAt::Max => hi[a],
                    PlaneAt::Value(v) => *v,
                };
                (p[a] - target).abs() <= eps
            }
            Selector::Sphere { centre, radius } => (p - centre).norm() <= *radius,
            Selector::Boundary => boundary.is_some_and(|b| b.contains(&i)),
            Selector::All(parts) => parts.iter().all(|s| s.matches(p, i, lo, hi, eps, boundary)),
        }
    }
}

impl FromStr for Selector {
    type Err = Error;

    /// `zmin`, `xmax`, `y=0.05`, `boundary`, `sphere(cx,cy,cz,r)`, joined by `&`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('&').map(str::trim).collect();
        if parts.len() > 1 {
            return parts.iter().map(|p| p.parse()).collect::<Result<Vec<_>>>().map(Selector::All);
        }
        let s = parts[0];
        let bad = || Error::config(format!("unknown node selector `{s}`"));
        if s == "boundary" {
            return Ok(Selector::Boundary);
        }
        if let Some(args) = s.strip_prefix("sphere(").and_then(|r| r.strip_suffix(')')) {
            let v: Vec<Real> = args
                .split(',')
                .map(|a| a.trim().parse::<Real>().map_err(|_| bad()))
                .collect::<Result<_>>()?;
            if v.len() != 4 || !(v[3] > 0.0) {
                return Err(bad());
            }
            return Ok(Selector::Sphere { centre: Vec3::new(v[0], v[1], v[2]), radius: v[3] });
        }
        let mut chars = s.chars();
        let axis = chars.next().and_then(Axis::from_char).ok_or_else(bad)?;
        let rest = chars.as_str();
        let at = match rest {
            "min" => PlaneAt::Min,
            "max" => PlaneAt::Max,
            _ => PlaneAt::Value(
                rest.strip_prefix('=').and_then(|v| v.trim().parse().ok()).ok_or_else(bad)?,
            ),
        };
        Ok(Selector::Plane { axis, at })
    }
}

/// A ramped prescribed displacement `u(t) = min(t / ramp, 1) · target`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prescribed {
    pub nodes: Vec<usize>,
    pub axis: Axis,
    pub target: Real,
    pub ramp: Real,
}

impl Prescribed {
    pub fn value_at(&self, t: Real) -> Real {
        (t / self.ramp).min(1.0) * self.target
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundaryConditions {
    pub fixed: BTreeSet<(usize, Axis)>,
    pub prescribed: Vec<Prescribed>,
}

impl BoundaryConditions {
    pub fn fix(&mut self, nodes: impl IntoIterator<Item = usize>, axes: &[Axis]) {
        for n in nodes {
            for &a in axes {
                self.fixed.insert((n, a));
            }
        }
    }

    pub fn prescribe(&mut self, nodes: Vec<usize>, axis: Axis, target: Real, ramp: Real) {
        self.prescribed.push(Prescribed { nodes, axis, target, ramp });
    }

    /// Checks node ranges, ramp positivity and that no DOF is constrained twice.
    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        let n = mesh.nodes.len();
        if let Some((node, _)) = self.fixed.iter().find(|(node, _)| *node >= n) {
            return Err(Error::config(format!("fixed node {node} out of range")));
        }
        let mut seen = BTreeSet::new();
        for p in &self.prescribed {
            if !(p.ramp > 0.0) {
                return Err(Error::config(format!("ramp duration must be positive, got {}", p.ramp)));
            }
            for &node in &p.nodes {
                if node >= n {
                    return Err(Error::config(format!("prescribed node {node} out of range")));
                }
                if self.fixed.contains(&(node, p.axis)) || !seen.insert((node, p.axis)) {
                    return Err(Error::config(format!(
                        "node {node} axis {:?} is constrained more than once",
                        p.axis
                    )));
                }
            }
        }
        Ok(())
    }
}
