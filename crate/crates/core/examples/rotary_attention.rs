//! Rotary position encoding makes attention scores depend on the offset
//! between positions only.

use pitf_tensor::{Tensor, TensorError};

pub fn run() -> Result<(), TensorError> {
    let (len, d) = (6, 8);
    let q: Vec<f64> = (0..d).map(|i| (i as f64 * 0.37).cos()).collect();
    let k: Vec<f64> = (0..d).map(|i| (i as f64 * 0.91).sin()).collect();
    // the same query and key at every position
    let rq = Tensor::new(&[1, len, d], q.repeat(len))?.rotary(d)?;
    let rk = Tensor::new(&[1, len, d], k.repeat(len))?.rotary(d)?;
    let scores = rq.matmul(&rk.transpose()?)?;
    println!("score(m, n) for m, n < {len}; each diagonal is constant:");
    for row in scores.data().chunks(len) {
        println!("  {}", row.iter().map(|v| format!("{v:+.4}")).collect::<Vec<_>>().join(" "));
    }

    // causal attention never looks ahead: changing the last value leaves
    // earlier outputs unchanged
    let x = Tensor::new(&[1, len, d], (0..len * d).map(|i| (i as f64 * 0.1).sin()).collect())?;
    let mut y = x.data().to_vec();
    y[len * d - 1] += 10.0;
    let y = Tensor::new(&[1, len, d], y)?;
    let a = Tensor::causal_attention(&x, &x, &x, 2)?;
    let b = Tensor::causal_attention(&y, &y, &y, 2)?;
    let same = a.data()[..(len - 1) * d] == b.data()[..(len - 1) * d];
    println!("earlier positions unaffected by a future change: {same}");
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
