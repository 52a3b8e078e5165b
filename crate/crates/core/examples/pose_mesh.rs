//! Triangulates a handful of source poses and locates a driving pose in the mesh.

use facecodec::geometry::{barycentric, delaunay, locate, project_pose, EulerPose, Location};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sources = [(0.0, 0.0), (20.0, 0.0), (0.0, 20.0), (20.0, 20.0), (-15.0, 10.0)];
    let mut points = Vec::new();
    for (id, &(yaw, pitch)) in sources.iter().enumerate() {
        let p = project_pose(&EulerPose::new(yaw, pitch, 0.0)?)?;
        points.push((id as u32, p));
    }
    let mesh = delaunay(&points)?;
    println!("{} sources, {} triangles", mesh.vertices().len(), mesh.triangle_count());
    for tri in mesh.triangles() {
        println!("  triangle {tri:?}");
    }

    let drive = project_pose(&EulerPose::new(7.0, 5.0, 3.0)?)?;
    match locate(&mesh, drive)? {
        Location::Interior { triangle } => {
            let w = barycentric(mesh.triangle_points(triangle), drive)?;
            let ids = mesh.triangle_ids(triangle);
            println!("driving pose (7, 5) falls in {ids:?} with weights {:?}", w.weights);
            let back = w.reconstruct(mesh.triangle_points(triangle));
            println!("reconstructed point ({:.6}, {:.6})", back.yaw, back.pitch);
        }
        other => println!("driving pose is {other:?}"),
    }
    Ok(())
}
