//! Writes the small case-control data set used by the CLI tests.
//!
//! cargo run -p cfipw --example make_fixture > crates/core/tests/fixtures/study.csv

use cfipw::simulation::{
    sample_case_control, CovariateSpec, NormalScale, ScenarioModel, SelectionVariant,
};
use cfipw::Link;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let binom = |p| CovariateSpec::Binomial { trials: 2, p };
    let model = ScenarioModel {
        name: "fixture".into(),
        link: Link::Identity,
        covariates: vec![
            CovariateSpec::Normal { mean: 0.0, spread: 1.0 },
            CovariateSpec::Bernoulli { p: 0.5 },
            binom(0.3),
            binom(0.2),
            binom(0.4),
        ],
        interactions: vec![],
        normal_scale: NormalScale::Sd,
        disease_columns: vec![0, 1, 2, 3],
        disease_coef: vec![-2.5, 0.5, 0.4, 0.3],
        mean_coef: vec![1.0, 0.6, 0.3, 0.25, 0.0, 0.0],
        selection_coef: vec![0.8, 0.4, 0.2, 0.0, 0.0, 0.0],
        normalizer_coef: None,
        true_beta: None,
        residual_spread: 1.0,
        mean_columns: None,
        selection_variants: vec![SelectionVariant::new("cont", &[0, 1, 2])],
        coefficient_names: ["Intercept", "age", "sex", "snp1", "snp2", "snp3"]
            .map(String::from)
            .to_vec(),
        n_cases: 250,
        n_controls: 250,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let pop = model.generate(&mut rng, 20_000).expect("population");
    eprintln!("population prevalence {:.4}", pop.prevalence());
    let (s, _) = sample_case_control(&pop.data, 250, 250, &mut rng).expect("sample");
    println!("y,d,age,sex,snp1,snp2,snp3");
    for i in 0..s.n() {
        let x = s.x_sel.row(i);
        println!(
            "{:.4},{},{:.4},{},{},{},{}",
            s.y[i], s.d[i], x[1], x[2], x[3], x[4], x[5]
        );
    }
}
