//! Uncertainty in prediction: the Gaussian score approximation, the
//! probit-style logistic integral, and how variance pulls predictions toward
//! 1/2.
//!
//! ```bash
//! cargo run --example uncertainty
//! ```

use varembed::factors::GaussianFactor;
use varembed::inference::{probit_logistic_integral, validate_normal_approx, ScoreMoments};
use varembed::rng::stream_rng;

fn main() {
    // A fixed mean score under growing variance: confidence decays to 1/2.
    println!("predictive probability for score mean 2.0 under growing variance:");
    for variance in [0.0, 1.0, 4.0, 16.0, 64.0] {
        let p = probit_logistic_integral(ScoreMoments { mean: 2.0, variance });
        println!("  variance {variance:>5.1} -> p = {p:.4}");
    }

    // The same machinery against brute-force averaging of the logistic over
    // score samples.
    let mut rng = stream_rng(9, "example/mc", 0);
    let moments = ScoreMoments { mean: 1.0, variance: 3.0 };
    let mc: f64 = {
        use rand::Rng;
        use rand_distr::StandardNormal;
        let n = 200_000;
        (0..n)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                let x = moments.mean + z * moments.variance.sqrt();
                1.0 / (1.0 + (-x).exp())
            })
            .sum::<f64>()
            / n as f64
    };
    let closed = probit_logistic_integral(moments);
    println!("\nclosed form vs Monte-Carlo at mean 1.0, variance 3.0:");
    println!("  closed {closed:.4}   monte-carlo {mc:.4}\n");

    // The score of a pair is a sum of per-dimension products; its law is
    // close to normal once the dimension is large enough.
    println!("Kolmogorov-Smirnov distance of the score law to its normal fit:");
    for t in [2usize, 5, 10, 20, 50] {
        let mut rng = stream_rng(9, "example/ks", t as u64);
        let ks = validate_normal_approx(
            &GaussianFactor::standard(t),
            &GaussianFactor::standard(t),
            &GaussianFactor::standard(1),
            100_000,
            &mut rng,
        )
        .unwrap();
        println!("  t = {t:>2} -> KS {ks:.4}");
    }
}
