//! Two-sample KS test on runtimes given as comma-separated lists.
//!
//!     cargo run --example ks_compare -- 1.2,1.4,1.1,1.3 2.0,2.2,1.9,2.4

use gabench::analysis::{ks_two_sample, summary_stats, BinSpec};

fn parse(arg: Option<String>, fallback: &[f64]) -> Result<Vec<f64>, std::num::ParseFloatError> {
    match arg {
        Some(s) => s.split(',').map(|v| v.trim().parse()).collect(),
        None => Ok(fallback.to_vec()),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let a = parse(args.next(), &[289.3, 271.1, 301.8, 265.7, 348.2, 280.4, 295.0, 277.9])?;
    let b = parse(args.next(), &[312.5, 330.1, 305.9, 351.0, 322.4, 340.7, 318.3, 309.6])?;

    for (name, s) in [("a", &a), ("b", &b)] {
        let st = summary_stats(s)?;
        println!("{name}: n = {}, mean {:.3}, min {:.3}, max {:.3}", st.n, st.mean_s, st.min_s, st.max_s);
    }
    let ks = ks_two_sample(&a, &b)?;
    println!("D = {:.4}, p = {:.4e}", ks.d_statistic, ks.p_value);
    for alpha in [0.05, 0.01] {
        println!("significant at {alpha}: {}", ks.is_significant(alpha));
    }

    let bins = BinSpec::from_samples([a.as_slice(), b.as_slice()]).expect("non-empty samples");
    println!("\nshared bins (width {:.3}):", bins.width());
    let (ca, cb) = (bins.counts(&a), bins.counts(&b));
    for i in 0..bins.n_bins {
        let (lo, hi) = bins.edges(i);
        println!("[{lo:>8.3}, {hi:>8.3}]  a {:>2}  b {:>2}", ca[i], cb[i]);
    }
    Ok(())
}
