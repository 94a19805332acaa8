//! Signed singular value decomposition `M = P diag(σ) Qᵀ` with `P, Q ∈ SO(d)`.

use lamforge::Matrix;

fn main() -> lamforge::Result<()> {
    let m = Matrix::from_rows(&[&[0.0, 2.0, 1.0], &[-1.0, 0.5, 0.0], &[0.3, 0.0, -2.0]])?;
    let svd = m.signed_svd()?;
    println!("M =\n{m}");
    println!("signed singular values: {:?}", svd.diag);
    println!("det P = {:.3e}, det Q = {:.3e}", svd.p.determinant(), svd.q.determinant());
    println!("prod σ = {:.12}, det M = {:.12}", svd.diag.iter().product::<f64>(), m.determinant());

    let back = svd.p * Matrix::diag(&svd.diag)? * svd.q.transpose();
    println!("reconstruction error {:.2e}", back.max_abs_diff(&m));
    Ok(())
}
