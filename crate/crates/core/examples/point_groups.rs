//! Farthest-point sampling and nearest-neighbour grouping of a point cloud.
//! The grouping is canonical, so shuffling rows changes nothing.

use modalbridge::encoders::group_points;
use modalbridge::Tensor;

fn main() -> modalbridge::Result<()> {
    let pts: Vec<f32> = (0..64)
        .flat_map(|i| {
            let a = i as f32 * 0.7;
            [a.cos(), a.sin(), (i % 8) as f32 / 8.0]
        })
        .collect();
    let cloud = Tensor::new([64, 3], pts.clone())?;
    let g = group_points(&cloud, 4, 6)?;
    for c in g.centroids.data().chunks(3) {
        println!("centroid ({:+.3}, {:+.3}, {:+.3})", c[0], c[1], c[2]);
    }

    let mut rows: Vec<&[f32]> = pts.chunks(3).collect();
    rows.reverse();
    let reversed = Tensor::new([64, 3], rows.concat())?;
    assert_eq!(group_points(&reversed, 4, 6)?, g);
    println!("groups {:?}, identical under row reversal", g.groups.dims());
    Ok(())
}
