//! Assembles P1 matrices on a structured mesh and checks basic identities.
use l0dc::fem::{assemble, TriMesh};
use l0dc::linalg::{csr_matvec, dot};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for n in [4, 8, 16] {
        let mesh = TriMesh::structured(n)?;
        let sys = assemble(&mesh, |_, _| 1.0)?;
        let ones = vec![1.0; sys.num_nodes()];
        let mut m1 = vec![0.0; sys.num_nodes()];
        csr_matvec(&sys.mass_full, &ones, &mut m1);
        let mut a1 = vec![0.0; sys.num_nodes()];
        csr_matvec(&sys.stiffness_full, &ones, &mut a1);
        let patch_sum: f64 = sys.patch_measure.iter().sum();
        println!(
            "n = {n:2}: nodes {:4} dofs {:4} elements {:4}  1'M1 = {:.15}  |A1|max = {:.1e}  sum patch = {:.3}",
            sys.num_nodes(),
            sys.num_dofs(),
            sys.num_elements(),
            dot(&ones, &m1),
            a1.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
            patch_sum
        );
    }
    Ok(())
}
