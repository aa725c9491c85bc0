use l0dc::fem::{assemble, parse_field, field_to_text, TriMesh};
use l0dc::linalg::{csr_matvec, dot};

#[test]
fn mesh_text_round_trip() {
    let mesh = TriMesh::structured(6).unwrap();
    let back = TriMesh::parse(&mesh.to_text()).unwrap();
    assert_eq!(back.nodes, mesh.nodes);
    assert_eq!(back.triangles, mesh.triangles);
    assert_eq!(back.boundary, mesh.boundary);
}

#[test]
fn mesh_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mesh.txt");
    let mesh = TriMesh::structured(3).unwrap();
    mesh.export(&path).unwrap();
    let back = TriMesh::import(&path).unwrap();
    assert_eq!(back.triangles, mesh.triangles);
}

#[test]
fn field_text_is_exact() {
    let values = vec![0.1, -1.0 / 3.0, 2.5e-300, 0.0, 1e10];
    assert_eq!(parse_field(&field_to_text(&values)).unwrap(), values);
}

#[test]
fn imported_mesh_assembles_like_structured() {
    let mesh = TriMesh::structured(8).unwrap();
    let imported = TriMesh::parse(&mesh.to_text()).unwrap();
    let a = assemble(&mesh, |x, y| x + y).unwrap();
    let b = assemble(&imported, |x, y| x + y).unwrap();
    assert_eq!(a.load, b.load);
    assert_eq!(a.patch_measure, b.patch_measure);
}

#[test]
fn mass_reproduces_area_and_stiffness_kills_constants() {
    for n in [2, 5, 9] {
        let sys = assemble(&TriMesh::structured(n).unwrap(), |_, _| 0.0).unwrap();
        let ones = vec![1.0; sys.num_nodes()];
        let mut m1 = vec![0.0; ones.len()];
        csr_matvec(&sys.mass_full, &ones, &mut m1);
        assert!((dot(&ones, &m1) - 1.0).abs() < 1e-13);
        let mut a1 = vec![0.0; ones.len()];
        csr_matvec(&sys.stiffness_full, &ones, &mut a1);
        assert!(a1.iter().all(|v| v.abs() < 1e-12));
        assert!((sys.basis_integral.iter().sum::<f64>() - 1.0).abs() < 1e-13);
    }
}

#[test]
fn malformed_mesh_is_rejected() {
    assert!(TriMesh::parse("nodes 2\n0 0\n1 0\ntriangles 1\n0 1 2\n").is_err());
    assert!(TriMesh::parse("nodes 1\n0 zero\ntriangles 0\n").is_err());
}
