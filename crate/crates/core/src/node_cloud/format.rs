//! Text formats for node clouds and surface meshes.
//!
//! Cloud format, one node per line, `#` starts a comment:
//!
//! ```text
//! x y z boundary_flag(0|1) fx fy fz region
//! ```
//!
//! Boundary normals are not part of the format. On load they are estimated
//! from the local neighbor geometry, or taken from a surface mesh when the
//! caller provides one (see [`assign_normals_from_surface`]).
//!
//! Surface mesh format (header-first variant, `#` comments):
//!
//! ```text
//! ntriangles nvertices
//! x y z          (nvertices lines)
//! i j k          (ntriangles lines, zero-based indices)
//! ```

use super::{CloudError, KdTree, NodeCloud, SurfaceMesh};
use crate::point::Point;
use crate::scalar::Real;
use nalgebra::Vector3;
use std::io::{BufRead, Write};

pub fn write_cloud<T: Real, W: Write>(cloud: &NodeCloud<T>, w: &mut W) -> Result<(), CloudError> {
    writeln!(w, "# x y z boundary fx fy fz region")?;
    for i in 0..cloud.len() {
        let p = cloud.point(i);
        let f = cloud.fiber(i);
        writeln!(
            w,
            "{} {} {} {} {} {} {} {}",
            p.x.to64(),
            p.y.to64(),
            p.z.to64(),
            u8::from(cloud.is_boundary(i)),
            f.x.to64(),
            f.y.to64(),
            f.z.to64(),
            cloud.region(i)
        )?;
    }
    Ok(())
}

/// Parse a cloud file. `h` fixes the characteristic spacing; when `None` it
/// is estimated as the mean nearest-neighbor distance. Boundary normals are
/// estimated from neighbor geometry (see module docs).
pub fn read_cloud<T: Real, R: BufRead>(r: R, h: Option<T>) -> Result<NodeCloud<T>, CloudError> {
    let mut points = Vec::new();
    let mut boundary = Vec::new();
    let mut fibers = Vec::new();
    let mut regions = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(CloudError::Format {
                line: lineno + 1,
                reason: format!("expected 8 fields, got {}", fields.len()),
            });
        }
        let num = |k: usize| -> Result<f64, CloudError> {
            fields[k].parse::<f64>().map_err(|_| CloudError::Format {
                line: lineno + 1,
                reason: format!("bad number {:?}", fields[k]),
            })
        };
        points.push(Point::new(T::of(num(0)?), T::of(num(1)?), T::of(num(2)?)));
        boundary.push(match fields[3] {
            "0" => false,
            "1" => true,
            other => {
                return Err(CloudError::Format {
                    line: lineno + 1,
                    reason: format!("boundary flag must be 0 or 1, got {other:?}"),
                })
            }
        });
        let f = Vector3::new(T::of(num(4)?), T::of(num(5)?), T::of(num(6)?));
        fibers.push(f.normalize());
        regions.push(fields[7].parse::<u32>().map_err(|_| CloudError::Format {
            line: lineno + 1,
            reason: format!("bad region label {:?}", fields[7]),
        })?);
    }
    if points.len() < 4 {
        return Err(CloudError::Format { line: 0, reason: format!("only {} nodes in file", points.len()) });
    }
    let dim = if points.iter().all(|p| p.z == T::zero()) { 2 } else { 3 };
    let tree = KdTree::build(&points, dim);
    let h = match h {
        Some(h) if h > T::zero() => h,
        Some(h) => return Err(CloudError::NonPositiveSpacing(h.to64())),
        None => estimate_spacing(&points, &tree),
    };
    let normals = estimate_boundary_normals(&points, &boundary, &tree, h);
    let cloud = NodeCloud::from_parts(dim, points, boundary, normals, fibers, regions, h);
    cloud.validate()?;
    Ok(cloud)
}

/// Mean nearest-neighbor distance over all nodes.
fn estimate_spacing<T: Real>(points: &[Point<T>], tree: &KdTree<T>) -> T {
    let mut total = T::zero();
    for p in points {
        let nn = tree.knn(p, 2);
        for &(_, d2) in &nn {
            if d2 > T::zero() {
                total += d2.sqrt();
            }
        }
    }
    total / T::of_usize(points.len())
}

/// Outward-normal estimate for boundary nodes: the normalized sum of offsets
/// from the node's neighbors points away from the material side. Interior
/// nodes get a zero vector.
fn estimate_boundary_normals<T: Real>(
    points: &[Point<T>],
    boundary: &[bool],
    tree: &KdTree<T>,
    h: T,
) -> Vec<Vector3<T>> {
    let r2 = (h + h) * (h + h);
    points
        .iter()
        .zip(boundary)
        .map(|(p, &is_bc)| {
            if !is_bc {
                return Vector3::zeros();
            }
            let mut acc = Vector3::zeros();
            for idx in tree.within_radius2(p, r2) {
                let q = &points[idx as usize];
                acc += p.to_vector() - q.to_vector();
            }
            if acc.norm() == T::zero() {
                // Isolated or perfectly symmetric neighborhood; no defensible
                // direction exists, fall back to +x to keep the cloud valid.
                Vector3::x()
            } else {
                acc.normalize()
            }
        })
        .collect()
}

/// Replace the estimated normals of boundary nodes with the area-weighted
/// vertex normal of the nearest surface-mesh vertex.
pub fn assign_normals_from_surface<T: Real>(cloud: &mut NodeCloud<T>, mesh: &SurfaceMesh<T>) {
    let vtx_normals = mesh.vertex_normals();
    let tree = KdTree::build(mesh.vertices(), 3);
    for i in 0..cloud.len() {
        if !cloud.is_boundary(i) {
            continue;
        }
        let nearest = tree.knn(cloud.point(i), 1)[0].0 as usize;
        let n = vtx_normals[nearest];
        cloud.set_normal(i, n);
    }
}

pub fn write_surface_mesh<T: Real, W: Write>(mesh: &SurfaceMesh<T>, w: &mut W) -> Result<(), CloudError> {
    writeln!(w, "# surface mesh: ntriangles nvertices, then vertices, then triangles")?;
    writeln!(w, "{} {}", mesh.n_triangles(), mesh.n_vertices())?;
    for v in mesh.vertices() {
        writeln!(w, "{} {} {}", v.x.to64(), v.y.to64(), v.z.to64())?;
    }
    for t in mesh.triangles() {
        writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
    }
    Ok(())
}

pub fn read_surface_mesh<T: Real, R: BufRead>(r: R) -> Result<SurfaceMesh<T>, CloudError> {
    let mut rows = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        rows.push((lineno + 1, body.to_string()));
    }
    if rows.is_empty() {
        return Err(CloudError::Format { line: 0, reason: "empty mesh file".into() });
    }
    let (hdr_line, header) = &rows[0];
    let hdr: Vec<&str> = header.split_whitespace().collect();
    if hdr.len() != 2 {
        return Err(CloudError::Format {
            line: *hdr_line,
            reason: "header must be `ntriangles nvertices`".into(),
        });
    }
    let ntri: usize = hdr[0]
        .parse()
        .map_err(|_| CloudError::Format { line: *hdr_line, reason: "bad triangle count".into() })?;
    let nvtx: usize = hdr[1]
        .parse()
        .map_err(|_| CloudError::Format { line: *hdr_line, reason: "bad vertex count".into() })?;
    if rows.len() != 1 + nvtx + ntri {
        return Err(CloudError::Format {
            line: *hdr_line,
            reason: format!("expected {} data lines, found {}", nvtx + ntri, rows.len() - 1),
        });
    }
    let mut vertices = Vec::with_capacity(nvtx);
    for (lineno, body) in &rows[1..1 + nvtx] {
        let f: Vec<&str> = body.split_whitespace().collect();
        if f.len() != 3 {
            return Err(CloudError::Format { line: *lineno, reason: "vertex needs 3 coordinates".into() });
        }
        let mut c = [0.0f64; 3];
        for (k, s) in f.iter().enumerate() {
            c[k] = s
                .parse()
                .map_err(|_| CloudError::Format { line: *lineno, reason: format!("bad number {s:?}") })?;
        }
        vertices.push(Point::new(T::of(c[0]), T::of(c[1]), T::of(c[2])));
    }
    let mut triangles = Vec::with_capacity(ntri);
    for (lineno, body) in &rows[1 + nvtx..] {
        let f: Vec<&str> = body.split_whitespace().collect();
        if f.len() != 3 {
            return Err(CloudError::Format { line: *lineno, reason: "triangle needs 3 indices".into() });
        }
        let mut idx = [0u32; 3];
        for (k, s) in f.iter().enumerate() {
            idx[k] = s
                .parse()
                .map_err(|_| CloudError::Format { line: *lineno, reason: format!("bad index {s:?}") })?;
        }
        triangles.push(idx);
    }
    SurfaceMesh::from_parts(vertices, triangles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::node_cloud::{generate_regular_grid, immerse_grid};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::io::BufReader;

    #[test]
    fn cloud_round_trip_preserves_fields() {
        let mesh = SurfaceMesh::axis_box(Point::new(0.0, 0.0, 0.0), Point::new(1.0, 1.0, 1.0));
        let mut cloud = immerse_grid(&mesh, 0.25).unwrap();
        cloud.set_region(3, 7);
        let mut buf = Vec::new();
        write_cloud(&cloud, &mut buf).unwrap();
        let back: NodeCloud<f64> = read_cloud(BufReader::new(buf.as_slice()), Some(0.25)).unwrap();
        assert_eq!(back.len(), cloud.len());
        assert_eq!(back.dim(), 3);
        for i in 0..cloud.len() {
            assert_eq!(back.point(i), cloud.point(i), "node {i}");
            assert_eq!(back.is_boundary(i), cloud.is_boundary(i));
            assert_eq!(back.region(i), cloud.region(i));
            assert_abs_diff_eq!(back.fiber(i).x, cloud.fiber(i).x, epsilon = 1e-15);
        }
    }

    #[test]
    fn mesh_round_trip_is_exact() {
        let mesh = SurfaceMesh::icosphere(1.0_f64, 1);
        let mut buf = Vec::new();
        write_surface_mesh(&mesh, &mut buf).unwrap();
        let back: SurfaceMesh<f64> = read_surface_mesh(BufReader::new(buf.as_slice())).unwrap();
        assert_eq!(back.n_vertices(), mesh.n_vertices());
        assert_eq!(back.n_triangles(), mesh.n_triangles());
        assert_eq!(back.triangles(), mesh.triangles());
        for (a, b) in back.vertices().iter().zip(mesh.vertices()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn malformed_lines_are_rejected_with_line_numbers() {
        let text = "# header\n0 0 0 1 1 0 0 0\n0 0 0 2 1 0 0 0\n";
        let err = read_cloud::<f64, _>(BufReader::new(text.as_bytes()), None).unwrap_err();
        match err {
            CloudError::Format { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn estimated_spacing_matches_grid() {
        let cloud = generate_regular_grid(&[1.0_f64, 1.0], 0.25, 2).unwrap();
        let mut buf = Vec::new();
        write_cloud(&cloud, &mut buf).unwrap();
        let back: NodeCloud<f64> = read_cloud(BufReader::new(buf.as_slice()), None).unwrap();
        assert_abs_diff_eq!(back.h(), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn estimated_boundary_normals_face_outward_on_grid() {
        let cloud = generate_regular_grid(&[1.0_f64, 1.0], 0.125, 2).unwrap();
        let mut buf = Vec::new();
        write_cloud(&cloud, &mut buf).unwrap();
        let back: NodeCloud<f64> = read_cloud(BufReader::new(buf.as_slice()), None).unwrap();
        for i in 0..back.len() {
            if !back.is_boundary(i) {
                continue;
            }
            let n = back.normal(i);
            let exact = cloud.normal(i);
            assert!(n.dot(exact) > 0.7, "node {i}: estimated {n:?} vs exact {exact:?}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn cloud_format_round_trips_random_clouds(seed in 0u64..1000) {
            let mut cloud = generate_regular_grid(&[1.0_f64, 1.0], 0.25, 2).unwrap();
            cloud.jitter_interior(0.3, seed);
            let mut buf = Vec::new();
            write_cloud(&cloud, &mut buf).unwrap();
            let back: NodeCloud<f64> = read_cloud(BufReader::new(buf.as_slice()), Some(cloud.h())).unwrap();
            prop_assert_eq!(back.len(), cloud.len());
            for i in 0..cloud.len() {
                prop_assert_eq!(back.point(i), cloud.point(i));
                prop_assert_eq!(back.is_boundary(i), cloud.is_boundary(i));
            }
        }
    }
}
