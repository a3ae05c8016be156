use proptest::prelude::*;

use dyadic_core::dynamics::{
    cascade_down, cascade_up, energy, full_rhs, nonlinear_rhs, CoefficientField, Convention,
    ModelParams,
};
use dyadic_core::integrator::{integrate, IntegrationSpan, Recording};
use dyadic_core::lattice::{enumerate_cascades, CascadeTable, LatticeConfig};

fn shape() -> impl Strategy<Value = (LatticeConfig, CascadeTable)> {
    prop_oneof![Just((1usize, 5u32)), Just((2, 3)), Just((3, 2))].prop_map(|(d, j)| {
        let c = LatticeConfig::new(d, j).unwrap();
        (c, enumerate_cascades(&c))
    })
}

fn field(config: &LatticeConfig, values: &[f64]) -> CoefficientField {
    let v = (0..config.total_cubes())
        .map(|i| values[i % values.len()] * (1.0 + i as f64).sqrt().recip())
        .collect();
    CoefficientField::from_values(config, v).unwrap()
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-12 * scale.max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nonlinearity_conserves_energy(
        (config, table) in shape(),
        raw in proptest::collection::vec(-1.0f64..1.0, 1..64),
    ) {
        let u = field(&config, &raw);
        let rhs = nonlinear_rhs(&u, &ModelParams::default(), &table).unwrap();
        let bound = 1e-12 * table.max_kappa() * energy(&u).powf(1.5);
        prop_assert!(rhs.dot(&u).abs() <= bound.max(1e-300));
    }

    #[test]
    fn cascade_operators_are_bilinear(
        (config, table) in shape(),
        a in proptest::collection::vec(-1.0f64..1.0, 1..32),
        b in proptest::collection::vec(-1.0f64..1.0, 1..32),
        v in proptest::collection::vec(-1.0f64..1.0, 1..32),
        s in -3.0f64..3.0,
        t in -3.0f64..3.0,
    ) {
        let (a, b, v) = (field(&config, &a), field(&config, &b), field(&config, &v));
        let mix = a.combine(s, &b, t);
        for op in [cascade_down, cascade_up] {
            let lhs = op(&mix, &v, &table).unwrap();
            let rhs = op(&a, &v, &table).unwrap().combine(s, &op(&b, &v, &table).unwrap(), t);
            let scale = table.max_kappa() * (1.0 + s.abs() + t.abs());
            for (x, y) in lhs.values().iter().zip(rhs.values()) {
                prop_assert!(close(*x, *y, scale));
            }
            let lhs = op(&v, &mix, &table).unwrap();
            let rhs = op(&v, &a, &table).unwrap().combine(s, &op(&v, &b, &table).unwrap(), t);
            for (x, y) in lhs.values().iter().zip(rhs.values()) {
                prop_assert!(close(*x, *y, scale));
            }
        }
    }

    #[test]
    fn down_and_up_are_transposes(
        (config, table) in shape(),
        u in proptest::collection::vec(-1.0f64..1.0, 1..32),
        v in proptest::collection::vec(-1.0f64..1.0, 1..32),
        w in proptest::collection::vec(-1.0f64..1.0, 1..32),
    ) {
        let (u, v, w) = (field(&config, &u), field(&config, &v), field(&config, &w));
        let lhs = cascade_down(&u, &v, &table).unwrap().dot(&w);
        let rhs = u.dot(&cascade_up(&w, &v, &table).unwrap());
        let scale = table.max_kappa() * table.len() as f64;
        prop_assert!(close(lhs, rhs, scale));
    }
}

#[test]
fn literal_convention_breaks_conservation() {
    let config = LatticeConfig::new(1, 4).unwrap();
    let table = enumerate_cascades(&config);
    let u = field(&config, &[0.3, -0.7, 0.5, 0.9]);
    let params = ModelParams {
        convention: Convention::Weighted,
        ..ModelParams::default()
    };
    let rhs = nonlinear_rhs(&u, &params, &table).unwrap();
    assert!(rhs.dot(&u).abs() > 1e-6);
}

#[test]
fn energy_law_matches_finite_differences() {
    let config = LatticeConfig::new(1, 5).unwrap();
    let table = enumerate_cascades(&config);
    let params = ModelParams::navier_stokes(1.1);
    let u0 = field(&config, &[0.4, -0.2, 0.8, -0.6, 0.1]);
    let span = IntegrationSpan {
        rtol: 1e-11,
        atol: 1e-15,
        ..IntegrationSpan::new(0.0, 2e-4)
    };
    let rec = Recording {
        snapshot_interval: Some(1e-5),
        ..Recording::default()
    };
    let traj = integrate(&u0, &span, &params, &table, &rec).unwrap();
    let d = &traj.diagnostics;
    // centred difference of E against -2 sum lambda u^2 at interior snapshots
    for k in 1..d.len() - 1 {
        let de = (d[k + 1].energy - d[k - 1].energy) / (d[k + 1].time - d[k - 1].time);
        let predicted = -d[k].dissipation_rate;
        let rhs = full_rhs(&traj.snapshots[k].field, &params, &table).unwrap();
        let exact = 2.0 * rhs.dot(&traj.snapshots[k].field);
        assert!((exact - predicted).abs() <= 1e-9 * predicted.abs(), "k={k}");
        assert!(
            (de - predicted).abs() <= 1e-3 * predicted.abs(),
            "k={k}: {de} vs {predicted}"
        );
    }
}
