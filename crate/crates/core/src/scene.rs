//! Colored point-cloud scenes: PLY ingestion/export and procedural rooms.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed PLY header: {0}")]
    MalformedHeader(String),
    #[error("missing color properties")]
    MissingColor,
    #[error("missing position properties")]
    MissingPosition,
    #[error("truncated payload: expected {expected} vertices, read {read}")]
    Truncated { expected: usize, read: usize },
    #[error("bad vertex record {index}: {detail}")]
    BadRecord { index: usize, detail: String },
    #[error("scene has no vertices")]
    Empty,
    #[error("non-finite vertex coordinate at index {0}")]
    NonFinite(usize),
    #[error("degenerate room extents {0:?}")]
    DegenerateExtents([f64; 3]),
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn center(&self) -> Vector3<f64> {
        (self.min + self.max) * 0.5
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }
}

/// An immutable colored point cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    scene_id: String,
    positions: Vec<Vector3<f64>>,
    colors: Vec<[u8; 3]>,
    bounds: Aabb,
}

impl Scene {
    pub fn new(
        scene_id: impl Into<String>,
        positions: Vec<Vector3<f64>>,
        colors: Vec<[u8; 3]>,
    ) -> Result<Self, SceneError> {
        assert_eq!(positions.len(), colors.len(), "positions/colors length mismatch");
        if positions.is_empty() {
            return Err(SceneError::Empty);
        }
        let mut min = Vector3::repeat(f64::INFINITY);
        let mut max = Vector3::repeat(f64::NEG_INFINITY);
        for (i, p) in positions.iter().enumerate() {
            if !p.iter().all(|v| v.is_finite()) {
                return Err(SceneError::NonFinite(i));
            }
            min = min.inf(p);
            max = max.sup(p);
        }
        Ok(Self {
            scene_id: scene_id.into(),
            positions,
            colors,
            bounds: Aabb { min, max },
        })
    }

    pub fn id(&self) -> &str {
        &self.scene_id
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn colors(&self) -> &[[u8; 3]] {
        &self.colors
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    /// A copy of the scene with every vertex shifted by `offset`.
    pub fn translated(&self, offset: &Vector3<f64>) -> Scene {
        let positions = self.positions.iter().map(|p| p + offset).collect();
        Scene::new(self.scene_id.clone(), positions, self.colors.clone())
            .expect("translation preserves validity")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }

    fn decode_le(self, b: &[u8]) -> f64 {
        match self {
            ScalarType::I8 => b[0] as i8 as f64,
            ScalarType::U8 => b[0] as f64,
            ScalarType::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: ScalarType },
    List { count: ScalarType, item: ScalarType },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

struct Header {
    format: PlyFormat,
    elements: Vec<Element>,
}

fn read_header<R: BufRead>(r: &mut R) -> Result<Header, SceneError> {
    let mut line = String::new();
    let mut next = |r: &mut R| -> Result<Option<String>, SceneError> {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Ok(None);
        }
        Ok(Some(line.trim_end_matches(['\r', '\n']).to_string()))
    };
    match next(r)? {
        Some(l) if l.trim() == "ply" => {}
        _ => return Err(SceneError::MalformedHeader("missing `ply` magic".into())),
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let l = next(r)?
            .ok_or_else(|| SceneError::MalformedHeader("missing end_header".into()))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks.as_slice() {
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", f, _version] => {
                format = Some(match *f {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => {
                        return Err(SceneError::MalformedHeader(format!(
                            "unsupported format `{other}`"
                        )))
                    }
                });
            }
            ["element", name, count] => {
                let count = count.parse().map_err(|_| {
                    SceneError::MalformedHeader(format!("bad element count `{count}`"))
                })?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            ["property", "list", c, i, _name] => {
                let el = elements.last_mut().ok_or_else(|| {
                    SceneError::MalformedHeader("property before element".into())
                })?;
                let (count, item) = match (ScalarType::parse(c), ScalarType::parse(i)) {
                    (Some(c), Some(i)) => (c, i),
                    _ => return Err(SceneError::MalformedHeader(format!("bad list type in `{l}`"))),
                };
                el.props.push(Property::List { count, item });
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or_else(|| {
                    SceneError::MalformedHeader("property before element".into())
                })?;
                let ty = ScalarType::parse(ty)
                    .ok_or_else(|| SceneError::MalformedHeader(format!("bad type `{ty}`")))?;
                el.props.push(Property::Scalar {
                    name: name.to_string(),
                    ty,
                });
            }
            ["end_header"] => break,
            _ => return Err(SceneError::MalformedHeader(format!("unexpected line `{l}`"))),
        }
    }
    let format = format.ok_or_else(|| SceneError::MalformedHeader("missing format".into()))?;
    Ok(Header { format, elements })
}

/// Indices of x,y,z and red,green,blue among the vertex element's properties.
fn vertex_layout(el: &Element) -> Result<([usize; 3], [usize; 3]), SceneError> {
    let find = |names: &[&str]| {
        el.props.iter().position(|p| match p {
            Property::Scalar { name, .. } => names.contains(&name.as_str()),
            Property::List { .. } => false,
        })
    };
    let pos = match (find(&["x"]), find(&["y"]), find(&["z"])) {
        (Some(x), Some(y), Some(z)) => [x, y, z],
        _ => return Err(SceneError::MissingPosition),
    };
    let col = match (
        find(&["red", "r", "diffuse_red"]),
        find(&["green", "g", "diffuse_green"]),
        find(&["blue", "b", "diffuse_blue"]),
    ) {
        (Some(r), Some(g), Some(b)) => [r, g, b],
        _ => return Err(SceneError::MissingColor),
    };
    Ok((pos, col))
}

fn color_channel(v: f64, ty: ScalarType) -> u8 {
    match ty {
        ScalarType::F32 | ScalarType::F64 if v <= 1.0 => (v.clamp(0.0, 1.0) * 255.0).round() as u8,
        _ => v.clamp(0.0, 255.0).round() as u8,
    }
}

/// Loads an ASCII or binary little-endian PLY point cloud. The scene id is the
/// file stem.
pub fn load_scene(path: &Path) -> Result<Scene, SceneError> {
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let file = File::open(path)?;
    read_ply(BufReader::new(file), &id)
}

pub fn read_ply<R: BufRead>(mut r: R, scene_id: &str) -> Result<Scene, SceneError> {
    let header = read_header(&mut r)?;
    let vi = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| SceneError::MalformedHeader("no vertex element".into()))?;
    let (pos_idx, col_idx) = vertex_layout(&header.elements[vi])?;
    let mut positions = Vec::new();
    let mut colors = Vec::new();

    for (ei, el) in header.elements.iter().enumerate() {
        if ei > vi {
            break;
        }
        let keep = ei == vi;
        if keep {
            positions.reserve(el.count);
            colors.reserve(el.count);
        }
        let scalar_ty = |i: usize| match &el.props[i] {
            Property::Scalar { ty, .. } => *ty,
            Property::List { .. } => unreachable!("layout only selects scalars"),
        };
        let mut values = vec![0.0f64; el.props.len()];
        for n in 0..el.count {
            let ok = match header.format {
                PlyFormat::Ascii => read_ascii_record(&mut r, el, &mut values, n)?,
                PlyFormat::BinaryLittleEndian => read_binary_record(&mut r, el, &mut values)?,
            };
            if !ok {
                return Err(SceneError::Truncated {
                    expected: el.count,
                    read: n,
                });
            }
            if keep {
                let p = Vector3::new(values[pos_idx[0]], values[pos_idx[1]], values[pos_idx[2]]);
                if !p.iter().all(|v| v.is_finite()) {
                    return Err(SceneError::NonFinite(n));
                }
                positions.push(p);
                colors.push([
                    color_channel(values[col_idx[0]], scalar_ty(col_idx[0])),
                    color_channel(values[col_idx[1]], scalar_ty(col_idx[1])),
                    color_channel(values[col_idx[2]], scalar_ty(col_idx[2])),
                ]);
            }
        }
    }
    Scene::new(scene_id, positions, colors)
}

fn read_ascii_record<R: BufRead>(
    r: &mut R,
    el: &Element,
    values: &mut [f64],
    index: usize,
) -> Result<bool, SceneError> {
    let mut line = String::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Ok(false);
        }
        if !line.trim().is_empty() {
            break;
        }
    }
    let mut toks = line.split_whitespace();
    let mut parse = |what: &str| -> Result<f64, SceneError> {
        let t = toks.next().ok_or_else(|| SceneError::BadRecord {
            index,
            detail: format!("missing {what}"),
        })?;
        t.parse::<f64>().map_err(|_| SceneError::BadRecord {
            index,
            detail: format!("cannot parse `{t}`"),
        })
    };
    for (i, prop) in el.props.iter().enumerate() {
        match prop {
            Property::Scalar { name, .. } => values[i] = parse(name)?,
            Property::List { .. } => {
                let n = parse("list count")? as usize;
                for _ in 0..n {
                    parse("list item")?;
                }
            }
        }
    }
    Ok(true)
}

fn read_exact_or_eof<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<bool, SceneError> {
    match r.read_exact(buf) {
        Ok(()) => Ok(true),
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => Ok(false),
        Err(e) => Err(e.into()),
    }
}

fn read_binary_record<R: Read>(
    r: &mut R,
    el: &Element,
    values: &mut [f64],
) -> Result<bool, SceneError> {
    let mut buf = [0u8; 8];
    for (i, prop) in el.props.iter().enumerate() {
        match prop {
            Property::Scalar { ty, .. } => {
                let b = &mut buf[..ty.size()];
                if !read_exact_or_eof(r, b)? {
                    return Ok(false);
                }
                values[i] = ty.decode_le(b);
            }
            Property::List { count, item } => {
                let b = &mut buf[..count.size()];
                if !read_exact_or_eof(r, b)? {
                    return Ok(false);
                }
                let n = count.decode_le(b) as usize;
                let mut skip = vec![0u8; n * item.size()];
                if !read_exact_or_eof(r, &mut skip)? {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Writes a binary little-endian PLY with double-precision positions and
/// uchar colors, so a write/read cycle is bit-exact.
pub fn write_ply_binary<W: Write>(scene: &Scene, w: W) -> io::Result<()> {
    let mut w = BufWriter::new(w);
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\ncomment scene {}\nelement vertex {}\n\
         property double x\nproperty double y\nproperty double z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        scene.id(),
        scene.len()
    )?;
    for (p, c) in scene.positions().iter().zip(scene.colors()) {
        for v in p.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(c)?;
    }
    w.flush()
}

pub fn write_ply_ascii<W: Write>(scene: &Scene, w: W) -> io::Result<()> {
    let mut w = BufWriter::new(w);
    write!(
        w,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\n\
         property float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        scene.len()
    )?;
    for (p, c) in scene.positions().iter().zip(scene.colors()) {
        writeln!(w, "{} {} {} {} {} {}", p.x, p.y, p.z, c[0], c[1], c[2])?;
    }
    w.flush()
}

pub fn save_scene(scene: &Scene, path: &Path) -> io::Result<()> {
    write_ply_binary(scene, File::create(path)?)
}

/// Parameters of a procedural room: an open-top shell (floor and four walls)
/// with `boxes` colored boxes standing on the floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProceduralSpec {
    /// Room size along x, y (floor) and z (wall height), meters.
    pub extent: [f64; 3],
    pub boxes: usize,
    /// Exact number of sampled vertices.
    pub points: usize,
}

impl Default for ProceduralSpec {
    fn default() -> Self {
        Self {
            extent: [6.0, 5.0, 2.8],
            boxes: 4,
            points: 200_000,
        }
    }
}

/// One sampled planar rectangle: `origin + u*s + v*t`, s,t ∈ [0,1].
struct Patch {
    origin: Vector3<f64>,
    u: Vector3<f64>,
    v: Vector3<f64>,
    style: Style,
}

#[derive(Clone, Copy)]
enum Style {
    Floor,
    Wall(usize),
    Furniture([u8; 3], f64),
}

const WALL_TINTS: [[f64; 3]; 4] = [
    [0.85, 0.75, 0.55],
    [0.55, 0.70, 0.85],
    [0.70, 0.85, 0.60],
    [0.85, 0.60, 0.65],
];

impl Patch {
    fn area(&self) -> f64 {
        self.u.cross(&self.v).norm()
    }

    fn color(&self, p: &Vector3<f64>) -> [u8; 3] {
        match self.style {
            Style::Floor => {
                let tile = ((p.x / 0.5).floor() as i64 + (p.y / 0.5).floor() as i64).rem_euclid(2);
                if tile == 0 {
                    [150, 110, 70]
                } else {
                    [200, 170, 120]
                }
            }
            Style::Wall(i) => {
                let along = p.x + p.y;
                let band = 0.65 + 0.35 * (((p.z / 0.35).floor() as i64).rem_euclid(3) as f64 / 2.0);
                let stripe = if (along / 0.6).floor() as i64 % 2 == 0 { 1.0 } else { 0.8 };
                let t = WALL_TINTS[i % 4];
                [
                    (255.0 * t[0] * band * stripe) as u8,
                    (255.0 * t[1] * band * stripe) as u8,
                    (255.0 * t[2] * band * stripe) as u8,
                ]
            }
            Style::Furniture(c, shade) => [
                (c[0] as f64 * shade) as u8,
                (c[1] as f64 * shade) as u8,
                (c[2] as f64 * shade) as u8,
            ],
        }
    }
}

fn room_patches(ext: [f64; 3]) -> Vec<Patch> {
    let [x, y, z] = ext;
    let o = Vector3::zeros();
    let ex = Vector3::new(x, 0.0, 0.0);
    let ey = Vector3::new(0.0, y, 0.0);
    let ez = Vector3::new(0.0, 0.0, z);
    vec![
        Patch { origin: o, u: ex, v: ey, style: Style::Floor },
        Patch { origin: o, u: ex, v: ez, style: Style::Wall(0) },
        Patch { origin: ey, u: ex, v: ez, style: Style::Wall(1) },
        Patch { origin: o, u: ey, v: ez, style: Style::Wall(2) },
        Patch { origin: ex, u: ey, v: ez, style: Style::Wall(3) },
    ]
}

fn box_patches(min: Vector3<f64>, size: Vector3<f64>, color: [u8; 3]) -> Vec<Patch> {
    let ex = Vector3::new(size.x, 0.0, 0.0);
    let ey = Vector3::new(0.0, size.y, 0.0);
    let ez = Vector3::new(0.0, 0.0, size.z);
    vec![
        Patch { origin: min + ez, u: ex, v: ey, style: Style::Furniture(color, 1.0) },
        Patch { origin: min, u: ex, v: ez, style: Style::Furniture(color, 0.8) },
        Patch { origin: min + ey, u: ex, v: ez, style: Style::Furniture(color, 0.7) },
        Patch { origin: min, u: ey, v: ez, style: Style::Furniture(color, 0.6) },
        Patch { origin: min + ex, u: ey, v: ez, style: Style::Furniture(color, 0.9) },
    ]
}

/// Deterministically samples a procedural room.
pub fn procedural_scene(
    scene_id: &str,
    seed: u64,
    spec: &ProceduralSpec,
) -> Result<Scene, SceneError> {
    let ext = spec.extent;
    if !ext.iter().all(|v| v.is_finite() && *v > 0.1) || spec.points == 0 {
        return Err(SceneError::DegenerateExtents(ext));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut patches = room_patches(ext);
    for _ in 0..spec.boxes {
        let size = Vector3::new(
            rng.gen_range(0.3..=(0.35 * ext[0]).max(0.31)),
            rng.gen_range(0.3..=(0.35 * ext[1]).max(0.31)),
            rng.gen_range(0.3..=(0.6 * ext[2]).max(0.31)),
        )
        .inf(&Vector3::new(ext[0], ext[1], ext[2]));
        let min = Vector3::new(
            rng.gen_range(0.0..=(ext[0] - size.x)),
            rng.gen_range(0.0..=(ext[1] - size.y)),
            0.0,
        );
        let color = [
            rng.gen_range(40..=235u8),
            rng.gen_range(40..=235u8),
            rng.gen_range(40..=235u8),
        ];
        patches.extend(box_patches(min, size, color));
    }
    let weights: Vec<f64> = patches.iter().map(Patch::area).collect();
    let pick = WeightedIndex::new(&weights).map_err(|_| SceneError::DegenerateExtents(ext))?;
    let mut positions = Vec::with_capacity(spec.points);
    let mut colors = Vec::with_capacity(spec.points);
    let hi = Vector3::new(ext[0], ext[1], ext[2]);
    for _ in 0..spec.points {
        let patch = &patches[pick.sample(&mut rng)];
        let s: f64 = rng.gen();
        let t: f64 = rng.gen();
        let p = (patch.origin + patch.u * s + patch.v * t).sup(&Vector3::zeros()).inf(&hi);
        colors.push(patch.color(&p));
        positions.push(p);
    }
    Scene::new(scene_id, positions, colors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    const ASCII3: &str = "ply\nformat ascii 1.0\ncomment tiny\nelement vertex 3\n\
        property float x\nproperty float y\nproperty float z\n\
        property uchar red\nproperty uchar green\nproperty uchar blue\n\
        element face 1\nproperty list uchar int vertex_indices\nend_header\n\
        0 0 0 255 0 0\n1 0 0 0 255 0\n0 1 0.5 0 0 255\n3 0 1 2\n";

    #[test]
    fn ascii_three_vertices_in_order() {
        let s = read_ply(Cursor::new(ASCII3), "tiny").unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.positions()[2], Vector3::new(0.0, 1.0, 0.5));
        assert_eq!(s.colors(), &[[255, 0, 0], [0, 255, 0], [0, 0, 255]]);
        assert_eq!(s.bounds().max, Vector3::new(1.0, 1.0, 0.5));
    }

    #[test]
    fn missing_color_is_reported() {
        let ply = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n\
            property float y\nproperty float z\nend_header\n0 0 0\n";
        let err = read_ply(Cursor::new(ply), "x").unwrap_err();
        assert!(matches!(err, SceneError::MissingColor));
        assert_eq!(err.to_string(), "missing color properties");
    }

    #[test]
    fn malformed_and_truncated() {
        let err = read_ply(Cursor::new("plx\n"), "x").unwrap_err();
        assert!(matches!(err, SceneError::MalformedHeader(_)));
        let err = read_ply(Cursor::new("ply\nformat ascii 1.0\nelement vertex 1\n"), "x").unwrap_err();
        assert!(matches!(err, SceneError::MalformedHeader(_)));
        let short = ASCII3.replace("0 1 0.5 0 0 255\n3 0 1 2\n", "");
        let err = read_ply(Cursor::new(short), "x").unwrap_err();
        assert!(matches!(err, SceneError::Truncated { expected: 3, read: 2 }));

        let scene = procedural_scene("p", 3, &ProceduralSpec { points: 10, ..Default::default() }).unwrap();
        let mut bytes = Vec::new();
        write_ply_binary(&scene, &mut bytes).unwrap();
        bytes.truncate(bytes.len() - 5);
        let err = read_ply(Cursor::new(bytes), "p").unwrap_err();
        assert!(matches!(err, SceneError::Truncated { expected: 10, read: 9 }));
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let scene = procedural_scene("room", 11, &ProceduralSpec { points: 500, ..Default::default() }).unwrap();
        let mut bytes = Vec::new();
        write_ply_binary(&scene, &mut bytes).unwrap();
        let back = read_ply(Cursor::new(&bytes), "room").unwrap();
        assert_eq!(back, scene);
        let mut again = Vec::new();
        write_ply_binary(&back, &mut again).unwrap();
        assert_eq!(again, bytes);
    }

    #[test]
    fn float32_binary_with_face_list() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex 2\n\
            property float x\nproperty float y\nproperty float z\nproperty uchar red\n\
            property uchar green\nproperty uchar blue\nproperty uchar alpha\n\
            element face 1\nproperty list uchar int vertex_indices\nend_header\n"
            .to_vec();
        for (p, c) in [([1.5f32, 2.0, -3.0], [1u8, 2, 3]), ([0.25, 0.0, 4.0], [9, 8, 7])] {
            for v in p {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            bytes.extend_from_slice(&c);
            bytes.push(255);
        }
        bytes.push(2);
        bytes.extend_from_slice(&0i32.to_le_bytes());
        bytes.extend_from_slice(&1i32.to_le_bytes());
        let s = read_ply(Cursor::new(bytes), "b").unwrap();
        assert_eq!(s.positions()[0], Vector3::new(1.5, 2.0, -3.0));
        assert_eq!(s.colors()[1], [9, 8, 7]);
    }

    #[test]
    fn procedural_is_deterministic_and_contained() {
        let spec = ProceduralSpec { boxes: 2, points: 5_000, ..Default::default() };
        let a = procedural_scene("s", 1, &spec).unwrap();
        let b = procedural_scene("s", 1, &spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5_000);
        let room = Aabb {
            min: Vector3::zeros(),
            max: Vector3::new(spec.extent[0], spec.extent[1], spec.extent[2]),
        };
        for seed in 0..5 {
            let s = procedural_scene("s", seed, &spec).unwrap();
            assert!(s.positions().iter().all(|p| room.contains(p)));
        }
        let c = procedural_scene("s", 2, &spec).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn shell_only_without_boxes() {
        let spec = ProceduralSpec { boxes: 0, points: 2_000, extent: [4.0, 3.0, 2.5] };
        let s = procedural_scene("s", 5, &spec).unwrap();
        // Every vertex lies on the floor or a wall.
        for p in s.positions() {
            let on_shell = p.z == 0.0 || p.x == 0.0 || p.y == 0.0 || p.x == 4.0 || p.y == 3.0;
            assert!(on_shell, "{p:?}");
        }
    }

    #[test]
    fn degenerate_extents_rejected() {
        let spec = ProceduralSpec { extent: [0.0, 3.0, 2.0], ..Default::default() };
        assert!(matches!(
            procedural_scene("s", 1, &spec),
            Err(SceneError::DegenerateExtents(_))
        ));
    }
}
