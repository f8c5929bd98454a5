//! Regenerates the morph test fixtures:
//! `cargo run --example make_fixtures -- crates/core/tests/fixtures`.

use dihedra::mesh::write_obj;
use dihedra::shapes;
use nalgebra::Vector3;

fn main() -> dihedra::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "tests/fixtures".into());
    let sphere = shapes::fibonacci_sphere(500);
    let bent = shapes::bent(&shapes::stretched(&sphere, Vector3::new(2.0, 1.0, 1.0)), 1.5);
    write_obj(format!("{dir}/sphere_500.obj"), &sphere)?;
    write_obj(format!("{dir}/bent_sphere_500.obj"), &bent)?;
    Ok(())
}
