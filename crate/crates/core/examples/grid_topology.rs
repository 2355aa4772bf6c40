//! Cell indexing, faces and neighbours of a small mixed-boundary grid.

use fvm_markov::{BoundaryCondition, BoxDomain, Grid};

fn main() -> fvm_markov::Result<()> {
    let grid = Grid::new(
        BoxDomain::new(vec![0.0, 0.0], vec![4.0, 3.0])?,
        vec![4, 3],
        vec![BoundaryCondition::Periodic, BoundaryCondition::Dirichlet],
    )?;
    println!("{} cells, spacing {:?}", grid.num_cells(), grid.spacing());

    let interior = grid.edges().iter().filter(|e| !e.is_boundary()).count();
    let boundary = grid.edges().len() - interior;
    println!("{interior} interior faces, {boundary} outflow faces");

    for cell in [0, 5, 11] {
        let idx = grid.multi_index(cell);
        let c = grid.cell_center(cell);
        print!("cell {cell} = ({}, {}) at ({:.1}, {:.1}):", idx[0], idx[1], c[0], c[1]);
        for nb in grid.neighbors(cell)? {
            let e = &grid.edges()[nb.edge];
            match nb.cell {
                Some(other) => print!(" {other}"),
                None => print!(" [wall axis {}]", e.axis),
            }
        }
        println!();
    }
    Ok(())
}
