//! Maximum-similarity matching between two ingredient lists of different
//! length. The shorter side is padded with null items that score zero.

use recipesim::assignment::{optimal_assignment, pad_square, SimilarityMatrix};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let left = ["olive oil", "lemon juice", "salt"];
    let right = ["lemon juice", "canola oil"];
    let m = SimilarityMatrix::from_rows(&[vec![0.1, 0.67], vec![1.0, 0.0], vec![0.0, 0.0]])?;

    let a = optimal_assignment(&pad_square(&m))?;
    for &(i, j) in &a.pairs {
        let other = right.get(j).copied().unwrap_or("(nothing)");
        let s = if j < m.cols() { m.get(i, j) } else { 0.0 };
        println!("{:<12} -> {:<12} {s:.2}", left[i], other);
    }
    println!("total {:.2}, normalized {:.4}", a.total, a.total / left.len().max(right.len()) as f64);

    // Equal optima resolve to the lexicographically smallest column sequence.
    let tied = SimilarityMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]])?;
    println!("tie-break: {:?}", optimal_assignment(&tied)?.pairs);
    Ok(())
}
