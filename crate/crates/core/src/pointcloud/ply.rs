//! PLY reader and writer for vertex clouds.
//!
//! Reads `ascii 1.0` and `binary_little_endian 1.0` files with `x`, `y`, `z`
//! (float or double) and optional `red`, `green`, `blue` (uchar). Other
//! vertex properties are skipped. Elements declared before `vertex` are
//! skipped when their size is known; elements after it are never read.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use log::warn;

use super::{CloudError, Point3, PointCloud, Rgb};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

impl FromStr for PlyFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ascii" | "ply-ascii" => Ok(PlyFormat::Ascii),
            "binary" | "binary-le" | "ply-binary-le" | "binary_little_endian" => {
                Ok(PlyFormat::BinaryLittleEndian)
            }
            other => Err(format!("unknown PLY format {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn decode_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(Debug)]
struct Header {
    format: PlyFormat,
    elements: Vec<Element>,
}

fn bad(msg: impl Into<String>) -> CloudError {
    CloudError::Ply(msg.into())
}

fn read_header<R: BufRead>(r: &mut R) -> Result<Header, CloudError> {
    let mut line = String::new();
    let next_line = |r: &mut R, line: &mut String| -> Result<bool, CloudError> {
        line.clear();
        let n = r.read_line(line).map_err(|e| bad(format!("reading header: {e}")))?;
        Ok(n > 0)
    };

    if !next_line(r, &mut line)? || line.trim_end() != "ply" {
        return Err(bad("missing 'ply' magic"));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        if !next_line(r, &mut line)? {
            return Err(bad("header not terminated by end_header"));
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, version] => {
                if *version != "1.0" {
                    return Err(bad(format!("unsupported PLY version {version}")));
                }
                format = Some(match *fmt {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => return Err(bad(format!("unsupported format {other}"))),
                });
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| bad(format!("bad element count {count:?}")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            ["property", "list", _, _, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| bad("property before any element"))?;
                el.props.push(Property::List {
                    name: name.to_string(),
                });
            }
            ["property", ty, name] => {
                let ty = Scalar::parse(ty).ok_or_else(|| bad(format!("unknown type {ty}")))?;
                let el = elements
                    .last_mut()
                    .ok_or_else(|| bad("property before any element"))?;
                el.props.push(Property::Scalar {
                    name: name.to_string(),
                    ty,
                });
            }
            ["end_header"] => break,
            _ => return Err(bad(format!("unrecognised header line {:?}", line.trim_end()))),
        }
    }
    Ok(Header {
        format: format.ok_or_else(|| bad("missing format line"))?,
        elements,
    })
}

/// Where each needed field lives within a vertex record.
struct VertexLayout {
    xyz: [usize; 3],
    rgb: Option<[usize; 3]>,
    types: Vec<Scalar>,
}

fn vertex_layout(el: &Element) -> Result<VertexLayout, CloudError> {
    let mut types = Vec::with_capacity(el.props.len());
    for p in &el.props {
        match p {
            Property::Scalar { ty, .. } => types.push(*ty),
            Property::List { name } => {
                return Err(bad(format!("list property {name:?} on vertex element")))
            }
        }
    }
    let find = |key: &str| {
        el.props
            .iter()
            .position(|p| matches!(p, Property::Scalar { name, .. } if name == key))
    };
    let coord = |key: &str| -> Result<usize, CloudError> {
        let i = find(key).ok_or_else(|| bad(format!("vertex has no {key} property")))?;
        match types[i] {
            Scalar::F32 | Scalar::F64 => Ok(i),
            _ => Err(bad(format!("{key} must be float or double"))),
        }
    };
    let xyz = [coord("x")?, coord("y")?, coord("z")?];
    let rgb = match (find("red"), find("green"), find("blue")) {
        (Some(r), Some(g), Some(b)) => {
            if [r, g, b].iter().any(|&i| types[i] != Scalar::U8) {
                return Err(bad("colour properties must be uchar"));
            }
            Some([r, g, b])
        }
        (None, None, None) => None,
        _ => return Err(bad("incomplete red/green/blue properties")),
    };
    for (i, p) in el.props.iter().enumerate() {
        if !xyz.contains(&i) && !rgb.is_some_and(|c| c.contains(&i)) {
            if let Property::Scalar { name, .. } = p {
                warn!("skipping unknown vertex property {name:?}");
            }
        }
    }
    Ok(VertexLayout { xyz, rgb, types })
}

/// Reads a PLY point cloud from any buffered reader.
pub fn read_ply<R: BufRead>(mut r: R) -> Result<PointCloud, CloudError> {
    let header = read_header(&mut r)?;
    let vpos = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| bad("no vertex element"))?;
    let vertex = &header.elements[vpos];
    if vertex.count == 0 {
        return Err(CloudError::Empty);
    }
    let layout = vertex_layout(vertex)?;

    for el in &header.elements[..vpos] {
        warn!("skipping element {:?} before vertex data", el.name);
        skip_element(&mut r, el, header.format)?;
    }

    let mut points = Vec::with_capacity(vertex.count);
    let mut colors = layout.rgb.map(|_| Vec::with_capacity(vertex.count));
    let mut values = vec![0.0f64; layout.types.len()];

    match header.format {
        PlyFormat::Ascii => {
            let mut line = String::new();
            for i in 0..vertex.count {
                line.clear();
                let n = r
                    .read_line(&mut line)
                    .map_err(|e| bad(format!("reading vertex {i}: {e}")))?;
                if n == 0 {
                    return Err(bad(format!("unexpected end of file at vertex {i}")));
                }
                let mut tokens = line.split_whitespace();
                for (k, v) in values.iter_mut().enumerate() {
                    let tok = tokens
                        .next()
                        .ok_or_else(|| bad(format!("vertex {i} has too few values")))?;
                    *v = tok.parse::<f64>().map_err(|_| {
                        bad(format!("vertex {i} property {k}: cannot parse {tok:?}"))
                    })?;
                }
                push_vertex(i, &values, &layout, &mut points, colors.as_mut())?;
            }
        }
        PlyFormat::BinaryLittleEndian => {
            let stride: usize = layout.types.iter().map(|t| t.size()).sum();
            let mut buf = vec![0u8; stride];
            for i in 0..vertex.count {
                r.read_exact(&mut buf)
                    .map_err(|_| bad(format!("unexpected end of file at vertex {i}")))?;
                let mut off = 0;
                for (v, ty) in values.iter_mut().zip(&layout.types) {
                    *v = ty.decode_le(&buf[off..]);
                    off += ty.size();
                }
                push_vertex(i, &values, &layout, &mut points, colors.as_mut())?;
            }
        }
    }

    match colors {
        Some(c) => PointCloud::with_colors(points, c),
        None => PointCloud::new(points),
    }
}

fn push_vertex(
    i: usize,
    values: &[f64],
    layout: &VertexLayout,
    points: &mut Vec<Point3>,
    colors: Option<&mut Vec<Rgb>>,
) -> Result<(), CloudError> {
    let p = Point3::new(values[layout.xyz[0]], values[layout.xyz[1]], values[layout.xyz[2]]);
    if !p.coords.iter().all(|c| c.is_finite()) {
        return Err(CloudError::NonFinite { index: i });
    }
    points.push(p);
    if let (Some(colors), Some([r, g, b])) = (colors, layout.rgb) {
        let byte = |k: usize| -> Result<u8, CloudError> {
            let v = values[k];
            if (0.0..=255.0).contains(&v) && v.fract() == 0.0 {
                Ok(v as u8)
            } else {
                Err(bad(format!("vertex {i}: colour value {v} out of range")))
            }
        };
        colors.push([byte(r)?, byte(g)?, byte(b)?]);
    }
    Ok(())
}

fn skip_element<R: BufRead>(r: &mut R, el: &Element, format: PlyFormat) -> Result<(), CloudError> {
    match format {
        PlyFormat::Ascii => {
            let mut line = String::new();
            for _ in 0..el.count {
                line.clear();
                if r.read_line(&mut line).map_err(|e| bad(e.to_string()))? == 0 {
                    return Err(bad(format!("unexpected end of file in element {:?}", el.name)));
                }
            }
        }
        PlyFormat::BinaryLittleEndian => {
            let mut stride = 0u64;
            for p in &el.props {
                match p {
                    Property::Scalar { ty, .. } => stride += ty.size() as u64,
                    Property::List { name } => {
                        return Err(bad(format!(
                            "cannot skip list property {name:?} preceding vertex data"
                        )))
                    }
                }
            }
            let want = stride * el.count as u64;
            let got = std::io::copy(&mut r.take(want), &mut std::io::sink())
                .map_err(|e| bad(e.to_string()))?;
            if got != want {
                return Err(bad(format!("unexpected end of file in element {:?}", el.name)));
            }
        }
    }
    Ok(())
}

/// Writes `cloud` as PLY. ASCII output uses six decimal places; binary
/// output stores coordinates as `double` so a reload is bit-identical.
pub fn write_ply<W: Write>(cloud: &PointCloud, format: PlyFormat, mut w: W) -> std::io::Result<()> {
    let coord_ty = match format {
        PlyFormat::Ascii => "float",
        PlyFormat::BinaryLittleEndian => "double",
    };
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    writeln!(w, "ply")?;
    writeln!(w, "format {fmt} 1.0")?;
    writeln!(w, "element vertex {}", cloud.len())?;
    for axis in ["x", "y", "z"] {
        writeln!(w, "property {coord_ty} {axis}")?;
    }
    if cloud.colors().is_some() {
        for c in ["red", "green", "blue"] {
            writeln!(w, "property uchar {c}")?;
        }
    }
    writeln!(w, "end_header")?;

    let colors = cloud.colors();
    for (i, p) in cloud.points().iter().enumerate() {
        match format {
            PlyFormat::Ascii => {
                write!(w, "{:.6} {:.6} {:.6}", p.x, p.y, p.z)?;
                if let Some(c) = colors {
                    write!(w, " {} {} {}", c[i][0], c[i][1], c[i][2])?;
                }
                writeln!(w)?;
            }
            PlyFormat::BinaryLittleEndian => {
                for v in [p.x, p.y, p.z] {
                    w.write_all(&v.to_le_bytes())?;
                }
                if let Some(c) = colors {
                    w.write_all(&c[i])?;
                }
            }
        }
    }
    w.flush()
}

pub fn load_cloud(path: impl AsRef<Path>) -> Result<PointCloud, CloudError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CloudError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_ply(BufReader::new(file)).map_err(|e| match e {
        CloudError::Ply(msg) => CloudError::Ply(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn save_cloud(cloud: &PointCloud, path: impl AsRef<Path>, format: PlyFormat) -> Result<(), CloudError> {
    cloud.require_non_empty()?;
    let path = path.as_ref();
    let io_err = |source| CloudError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    write_ply(cloud, format, BufWriter::new(file)).map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TRIANGLE: &str = "ply\nformat ascii 1.0\ncomment test\nelement vertex 3\n\
        property float x\nproperty float y\nproperty float z\nend_header\n\
        0 0 0\n1 0 0\n0 1 0\n";

    fn random_cloud(n: usize, seed: u64, colored: bool) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Point3> = (0..n)
            .map(|_| {
                Point3::new(
                    rng.random_range(-0.1..0.1),
                    rng.random_range(-0.1..0.1),
                    rng.random_range(-0.1..0.1),
                )
            })
            .collect();
        if colored {
            let cols = (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
            PointCloud::with_colors(pts, cols).unwrap()
        } else {
            PointCloud::new(pts).unwrap()
        }
    }

    #[test]
    fn reads_ascii_triangle_in_order() {
        let c = read_ply(TRIANGLE.as_bytes()).unwrap();
        assert_eq!(
            c.points(),
            &[
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0)
            ]
        );
        assert!(c.colors().is_none());
    }

    #[test]
    fn binary_encoding_of_same_geometry_is_identical() {
        let ascii = read_ply(TRIANGLE.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_ply(&ascii, PlyFormat::BinaryLittleEndian, &mut buf).unwrap();
        assert_eq!(read_ply(buf.as_slice()).unwrap(), ascii);
    }

    #[test]
    fn zero_vertices_is_empty_cloud_error() {
        let src = "ply\nformat ascii 1.0\nelement vertex 0\nproperty float x\n\
                   property float y\nproperty float z\nend_header\n";
        let err = read_ply(src.as_bytes()).unwrap_err();
        assert_eq!(err.to_string(), "empty cloud");
    }

    #[test]
    fn non_finite_coordinate_reports_index() {
        let src = TRIANGLE.replace("1 0 0", "nan 0 0");
        let err = read_ply(src.as_bytes()).unwrap_err();
        assert!(matches!(err, CloudError::NonFinite { index: 1 }), "{err}");
    }

    #[test]
    fn malformed_headers() {
        for src in [
            "plx\n",
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nend_header\n0\n",
            "ply\nformat binary_big_endian 1.0\nend_header\n",
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n",
        ] {
            assert!(matches!(read_ply(src.as_bytes()), Err(CloudError::Ply(_))), "{src:?}");
        }
    }

    #[test]
    fn truncated_body() {
        let src = TRIANGLE.replace("0 1 0\n", "");
        assert!(read_ply(src.as_bytes()).is_err());
    }

    #[test]
    fn skips_unknown_properties_and_reads_colors() {
        let src = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\n\
                   property float intensity\nproperty float y\nproperty float z\n\
                   property uchar red\nproperty uchar green\nproperty uchar blue\n\
                   element face 1\nproperty list uchar int vertex_indices\nend_header\n\
                   1 9 2 3 255 128 0\n4 9 5 6 1 2 3\n3 0 1 2\n";
        let c = read_ply(src.as_bytes()).unwrap();
        assert_eq!(c.points()[1], Point3::new(4.0, 5.0, 6.0));
        assert_eq!(c.colors().unwrap(), &[[255, 128, 0], [1, 2, 3]]);
    }

    #[test]
    fn binary_with_float_coords_and_leading_element() {
        let mut buf = b"ply\nformat binary_little_endian 1.0\nelement camera 1\n\
            property int id\nelement vertex 1\nproperty float x\nproperty float y\n\
            property float z\nend_header\n"
            .to_vec();
        buf.extend(7i32.to_le_bytes());
        for v in [0.5f32, -1.0, 2.0] {
            buf.extend(v.to_le_bytes());
        }
        let c = read_ply(buf.as_slice()).unwrap();
        assert_eq!(c.points(), &[Point3::new(0.5, -1.0, 2.0)]);
    }

    #[test]
    fn binary_round_trip_is_bit_identical() {
        let cloud = random_cloud(1000, 11, true);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ply");
        save_cloud(&cloud, &path, PlyFormat::BinaryLittleEndian).unwrap();
        let back = load_cloud(&path).unwrap();
        for (a, b) in cloud.points().iter().zip(back.points()) {
            for k in 0..3 {
                assert_eq!(a[k].to_bits(), b[k].to_bits());
            }
        }
        assert_eq!(back, cloud);
    }

    #[test]
    fn ascii_round_trip_within_micrometre() {
        let cloud = random_cloud(1000, 12, false);
        let mut buf = Vec::new();
        write_ply(&cloud, PlyFormat::Ascii, &mut buf).unwrap();
        let back = read_ply(buf.as_slice()).unwrap();
        let max_err = cloud
            .points()
            .iter()
            .zip(back.points())
            .flat_map(|(a, b)| (0..3).map(move |k| (a[k] - b[k]).abs()))
            .fold(0.0, f64::max);
        assert!(max_err <= 1e-6, "max error {max_err}");
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let cloud = random_cloud(3, 1, false);
        let err = save_cloud(&cloud, "/nonexistent-dir/x/y.ply", PlyFormat::Ascii).unwrap_err();
        assert!(matches!(err, CloudError::Io { .. }));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load_cloud("/nonexistent.ply"), Err(CloudError::Io { .. })));
    }

    proptest! {
        #[test]
        fn binary_round_trip_any_finite(coords in prop::collection::vec(
            (-1e6f64..1e6, -1e6f64..1e6, -1e6f64..1e6), 1..50)) {
            let pts = coords.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect();
            let cloud = PointCloud::new(pts).unwrap();
            let mut buf = Vec::new();
            write_ply(&cloud, PlyFormat::BinaryLittleEndian, &mut buf).unwrap();
            prop_assert_eq!(read_ply(buf.as_slice()).unwrap(), cloud);
        }
    }
}
