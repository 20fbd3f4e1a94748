use prsbias::moments::{monte_carlo_check, FixedSelection, MomentConfig, QuantityTag};
use prsbias::synth::{CohortSizes, TraitArchitecture};

fn config() -> MomentConfig {
    let arch = TraitArchitecture { m_alpha_beta: 60, m_alpha_eta: 60, ..TraitArchitecture::shared(400, 80, 1.0, 0.6, 0.5) };
    let selection = Some(FixedSelection::leading(&arch, 50, 70));
    MomentConfig {
        arch,
        sizes: CohortSizes { n1: 200, n2: 150, n3: 120 },
        n_shared: 100,
        rho_eps: 0.3,
        selection,
        z_threshold: 4.0,
    }
}

#[test]
fn every_quantity_matches_its_expectation() {
    let cfg = config();
    let mut failures = Vec::new();
    for tag in QuantityTag::ALL {
        let r = monte_carlo_check(tag, &cfg, 300, 13).unwrap();
        println!(
            "{:<22} predicted {:>14.6e} empirical {:>14.6e} se {:>11.4e} z {:>6.2}",
            tag.tag(),
            r.predicted,
            r.empirical_mean,
            r.empirical_se,
            r.z
        );
        if !r.pass {
            failures.push(tag.tag());
        }
    }
    assert!(failures.is_empty(), "mismatched quantities: {failures:?}");
}
