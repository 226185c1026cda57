//! Exp/log maps, geodesic distances and divergences on the sphere.
//!
//! cargo run --example geometry

use sphere_bridge::manifold::{
    divergence, exp_map, geodesic_distance, log_map, sample_uniform, tangent_basis, DivergenceMode,
    ProjectedConstant, Vec3,
};
use sphere_bridge::rng::stream;
use sphere_bridge::SpherePoint;

fn main() -> sphere_bridge::Result<()> {
    let north = SpherePoint::new(0.0, 0.0, 1.0);
    let quito = SpherePoint::from_latlon_deg(-0.18, -78.47);

    let v = log_map(&north, &quito)?;
    println!("log_north(quito) = {:?}, |v| = {:.6} rad", v.vec, v.vec.norm());
    println!("geodesic distance  = {:.6} rad", geodesic_distance(&north, &quito));
    let back = exp_map(&north, &v);
    println!("exp(log) error     = {:.2e}", (back.coords() - quito.coords()).norm());

    let basis = tangent_basis(&quito);
    println!("tangent basis at quito: e1 = {:?}, e2 = {:?}", basis.e1, basis.e2);

    // div P(x)c = -2 <c, x>
    let c = Vec3::new(0.3, -1.0, 0.5);
    let field = ProjectedConstant(c);
    let mut rng = stream(1, &[]);
    for _ in 0..3 {
        let x = sample_uniform(&mut rng);
        let exact = divergence(&field, &x, DivergenceMode::Exact)?;
        let fd = divergence(&field, &x, DivergenceMode::FiniteDifference { h: 1e-4 })?;
        println!("div at {:?}: exact {exact:+.8}  fd {fd:+.8}  closed form {:+.8}", x.coords(), -2.0 * c.dot(x.coords()));
    }

    match log_map(&north, &SpherePoint::new(0.0, 0.0, -1.0)) {
        Err(e) => println!("antipodal log: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
