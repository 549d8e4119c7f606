#![allow(dead_code)]

use mte_core::data::{Dataset, COVARIATE_COLUMNS};
use mte_core::estimation::{terms, EstimatorConfig};
use mte_core::rng::stream_rng;
use rand::Rng;
use rand_distr::StandardNormal;

/// Small estimator specification used by the simulation studies.
pub fn reduced_config() -> EstimatorConfig {
    EstimatorConfig {
        probit_x: terms(&["1", "log_g", "log_n10", "age", "black"]),
        probit_z: terms(&["log_z1"]),
        beta_terms: terms(&["1", "log_n10", "age", "black"]),
        lambda_terms: terms(&["log_g", "log_n10"]),
        impute_wages: false,
        ..Default::default()
    }
}

/// Rows with random covariates, one instrument and `clusters` equal-size
/// clusters. Hours are zero and every wage is observed.
pub fn synthetic(n: usize, clusters: usize, seed: u64) -> Dataset {
    let mut rng = stream_rng(seed, 0);
    let mut d = Dataset {
        hours: vec![0.0; n],
        participates: (0..n).map(|i| i % 2 == 0).collect(),
        log_wage: (0..n).map(|_| Some(2.0 + 0.1 * rng.sample::<f64, _>(StandardNormal))).collect(),
        cluster_id: (0..n).map(|i| (i * clusters / n) as u64).collect(),
        columns: vec![],
    };
    for name in COVARIATE_COLUMNS {
        let v: Vec<f64> = match name {
            "age" => (0..n).map(|_| rng.random_range(18.0..55.0)).collect(),
            "black" | "region1" | "region2" | "region3" => (0..n).map(|_| (rng.random::<f64>() < 0.4) as u8 as f64).collect(),
            "kids_under6" => (0..n).map(|_| rng.random_range(0..3u8) as f64).collect(),
            "family_size" => (0..n).map(|_| rng.random_range(2..6u8) as f64).collect(),
            "nonlabor_income" => (0..n).map(|_| rng.random_range(0.0..60.0)).collect(),
            "guarantee" => (0..n).map(|_| rng.random_range(250.0..350.0)).collect(),
            "tax_t" => vec![0.5; n],
            "tax_r" => vec![0.0; n],
            _ => (0..n).map(|_| rng.random_range(1.0..10.0)).collect(),
        };
        d.set_column(name, v);
    }
    let z = (0..n).map(|_| rng.random_range(0.05..0.3)).collect();
    d.set_column("z1", z);
    d
}

/// Standard deviation of each coordinate across rows of `draws`.
pub fn column_sd(draws: &[Vec<f64>]) -> Vec<f64> {
    let k = draws[0].len();
    (0..k)
        .map(|j| {
            let v: Vec<f64> = draws.iter().map(|d| d[j]).collect();
            mte_core::numeric::variance(&v).sqrt()
        })
        .collect()
}
