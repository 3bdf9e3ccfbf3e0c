//! The three basis quantile functions on their own: build parameters,
//! evaluate quantiles and CDFs, check that each inverts the other.

use nss::spline::{BasisParams, CSplineParams, GaussianParams, PSplineParams};

fn main() -> nss::Result<()> {
    // four bins in CDF space: narrow tails, wide middle
    let c = CSplineParams::new(-1.0, vec![0.5, 0.5, 0.5, 0.5], vec![0.1, 0.4, 0.4, 0.1])?;
    // triangular density on [-1, 1]
    let p = PSplineParams::normalized(vec![-1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0])?;
    let g = GaussianParams::new(0.0, 0.5)?;

    let bases = [
        ("c-spline", BasisParams::CSpline(c)),
        ("p-spline", BasisParams::PSpline(p)),
        ("gaussian", BasisParams::Gaussian(g)),
    ];
    println!("{:>9} {:>6} {:>10} {:>10}", "basis", "alpha", "q(alpha)", "F(q)");
    for (name, b) in &bases {
        for alpha in [0.05, 0.25, 0.5, 0.75, 0.95] {
            let q = b.quantile(alpha)?;
            println!("{name:>9} {alpha:>6.2} {q:>10.5} {:>10.5}", b.cdf(q));
        }
    }

    // gradients of q with respect to the basis parameters
    let grad = bases[0].1.quantile_grad(0.3)?;
    println!("c-spline dq/dparams at 0.3: {:?}", grad.partials);
    println!("c-spline dq/dalpha at 0.3: {}", grad.d_alpha);
    Ok(())
}
