use dec_core::adaptive::{adaptive_step, AdaptiveConfig};
use dec_core::bench::{ConvergenceReport, ConvergenceRow, Series};
use dec_core::cg1d::{pde_step, Basis, FemSpace1D, TimeMode};
use dec_core::coeffs::{interp_matrix, lagrange_basis, DecCoefficients, NodeFamily, NodeSet};
use dec_core::dec_ode::{step, FnSystem, SchemePlan, Variant};
use dec_core::rk_export::build_tableau;
use dec_core::stability::{region_grid, scheme_polynomial, GridSpec};
use proptest::prelude::*;

fn family() -> impl Strategy<Value = NodeFamily> {
    prop_oneof![Just(NodeFamily::Equispaced), Just(NodeFamily::GaussLobatto)]
}

fn variant() -> impl Strategy<Value = Variant> {
    prop_oneof![Just(Variant::AlphaDec), Just(Variant::AlphaDecU), Just(Variant::AlphaDecDu)]
}

fn alpha() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(1.0), 0.0..=1.0]
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    num / den
}

/// `u' = A u + b` with a fixed dimension-3 matrix.
fn affine(a: [[f64; 3]; 3], b: [f64; 3]) -> impl dec_core::OdeSystem {
    FnSystem::new(3, move |_t: f64, u: &[f64], du: &mut [f64]| {
        for i in 0..3 {
            du[i] = b[i] + (0..3).map(|j| a[i][j] * u[j]).sum::<f64>();
        }
    })
}

fn oscillator() -> impl dec_core::OdeSystem {
    FnSystem::new(2, |t: f64, u: &[f64], du: &mut [f64]| {
        du[0] = u[1];
        du[1] = -u[0] - 0.3 * u[1] * u[0].powi(2) + (2.0 * t).sin();
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partition_of_unity(fam in family(), m in 1usize..=12, x in 0.0f64..=1.0) {
        let set = NodeSet::new(fam, m).unwrap();
        let s: f64 = lagrange_basis(set.nodes(), x).iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-12, "sum {s}");
    }

    #[test]
    fn coefficient_identities(fam in family(), m in 1usize..=12) {
        let c = DecCoefficients::for_family(fam, m).unwrap();
        let n = m + 1;
        for r in 0..n {
            let s: f64 = c.theta.row(r).iter().sum();
            prop_assert!((s - c.beta[r]).abs() < 1e-12);
            for l in 0..n {
                let d: f64 = (1..=r).map(|k| c.delta[(k, l)]).sum();
                prop_assert!((d - c.theta[(r, l)]).abs() < 1e-12);
            }
        }
        prop_assert!(c.gamma_matrix.is_strictly_lower());
        prop_assert!((c.theta.row(m).iter().sum::<f64>() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn interpolation_reproduces_polynomials(
        from_fam in family(),
        to_fam in family(),
        m_from in 1usize..=10,
        m_to in 1usize..=12,
        seed in prop::collection::vec(-2.0f64..2.0, 11),
    ) {
        let from = NodeSet::new(from_fam, m_from).unwrap();
        let to = NodeSet::new(to_fam, m_to).unwrap();
        let h = interp_matrix(from.nodes(), to.nodes()).unwrap();
        let poly = |x: f64| seed[..=m_from].iter().rev().fold(0.0, |acc, c| acc * x + c);
        let samples: Vec<f64> = from.nodes().iter().map(|&x| poly(x)).collect();
        for (i, v) in h.matvec(&samples).into_iter().enumerate() {
            prop_assert!((v - poly(to.nodes()[i])).abs() < 1e-11);
        }
        for s in h.row_sums() {
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lobatto_weights_exact(m in 1usize..=12) {
        let c = DecCoefficients::for_family(NodeFamily::GaussLobatto, m).unwrap();
        for deg in 0..2 * m {
            let q: f64 = c.nodes().iter().zip(c.theta.row(m)).map(|(x, w)| w * x.powi(deg as i32)).sum();
            prop_assert!((q - 1.0 / (deg as f64 + 1.0)).abs() < 1e-12, "deg {deg}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn linear_systems_do_not_see_u_versus_du(
        a in prop::array::uniform3(prop::array::uniform3(-2.0f64..2.0)),
        b in prop::array::uniform3(-1.0f64..1.0),
        u0 in prop::array::uniform3(-1.0f64..1.0),
        order in 3usize..=7,
        fam in family(),
        al in alpha(),
        dt in 0.01f64..0.2,
    ) {
        let sys = affine(a, b);
        let pu = SchemePlan::new(Variant::AlphaDecU, al, order, fam).unwrap();
        let pdu = SchemePlan::new(Variant::AlphaDecDu, al, order, fam).unwrap();
        let x = step(&pu, &sys, 0.3, &u0, dt).unwrap().u_next;
        let y = step(&pdu, &sys, 0.3, &u0, dt).unwrap().u_next;
        prop_assert!(rel_diff(&x, &y) < 1e-13, "{}", rel_diff(&x, &y));
    }

    #[test]
    fn order_two_variants_coincide(
        fam in family(),
        al in alpha(),
        u0 in prop::array::uniform2(-1.5f64..1.5),
        dt in 0.01f64..0.5,
    ) {
        let sys = oscillator();
        let base = step(&SchemePlan::new(Variant::AlphaDec, al, 2, fam).unwrap(), &sys, 0.0, &u0, dt).unwrap();
        for v in [Variant::AlphaDecU, Variant::AlphaDecDu] {
            let other = step(&SchemePlan::new(v, al, 2, fam).unwrap(), &sys, 0.0, &u0, dt).unwrap();
            prop_assert_eq!(&other.u_next, &base.u_next);
        }
    }

    #[test]
    fn tableau_consistency(v in variant(), al in prop_oneof![Just(0.0), Just(1.0)], order in 2usize..=9, fam in family()) {
        prop_assume!(!(v == Variant::AlphaDecU && al != 0.0));
        let tab = build_tableau(&SchemePlan::new(v, al, order, fam).unwrap()).unwrap();
        prop_assert!(tab.a.is_strictly_lower());
        for (i, s) in tab.a.row_sums().into_iter().enumerate() {
            prop_assert!((s - tab.c[i]).abs() < 1e-13);
        }
        prop_assert!((tab.b.iter().sum::<f64>() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn tableau_step_matches_stepper(
        v in variant(),
        al in prop_oneof![Just(0.0), Just(1.0), 0.1f64..0.9],
        order in 2usize..=7,
        fam in family(),
        u0 in prop::array::uniform2(-1.5f64..1.5),
        dt in 0.01f64..0.3,
    ) {
        prop_assume!(!(v == Variant::AlphaDecU && al != 0.0));
        let plan = SchemePlan::new(v, al, order, fam).unwrap();
        let sys = oscillator();
        let rk = build_tableau(&plan).unwrap().step(&sys, 0.2, &u0, dt);
        let dec = step(&plan, &sys, 0.2, &u0, dt).unwrap().u_next;
        prop_assert!(rel_diff(&rk, &dec) < 1e-12);
    }

    #[test]
    fn stability_region_is_symmetric(v in variant(), order in 2usize..=8, fam in family(), r in 0.5f64..6.0) {
        let poly = scheme_polynomial(&SchemePlan::new(v, 1.0, order, fam).unwrap()).unwrap();
        let grid = region_grid(&poly, GridSpec { re: (-r, 1.0), im: (-r, r), nx: 17, ny: 23 }).unwrap();
        let ny = grid.spec.ny;
        for row in &grid.magnitudes {
            for j in 0..ny {
                let (a, b) = (row[j], row[ny - 1 - j]);
                prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
            }
        }
    }

    #[test]
    fn adaptive_respects_p_max(
        v in prop_oneof![Just(Variant::AlphaDecU), Just(Variant::AlphaDecDu)],
        fam in family(),
        eps in prop_oneof![Just(0.0), 1e-14f64..1e-2],
        p_max in 2usize..=9,
        dt in 0.01f64..0.5,
    ) {
        let cfg = AdaptiveConfig { p_max, ..AdaptiveConfig::new(v, 1.0, eps, fam) };
        let out = adaptive_step(&cfg, &oscillator(), 0.0, &[1.0, 0.0], dt).unwrap();
        prop_assert!(out.p_used >= 2 && out.p_used <= p_max);
        if out.p_used < p_max {
            prop_assert!(out.converged);
        }
    }

    #[test]
    fn convergence_csv_round_trip(
        rows in prop::collection::vec(
            (1e-4f64..1.0, prop::option::of(1e-16f64..1.0), 0usize..100_000, prop::option::of((1.0f64..15.0, 0.0f64..3.0))),
            1..8,
        ),
        timing in any::<bool>(),
    ) {
        let rows: Vec<ConvergenceRow> = rows
            .into_iter()
            .enumerate()
            .map(|(k, (dt, error, evals, stats))| ConvergenceRow {
                method: "bDeC3-eq".into(),
                dt: dt / (k + 1) as f64,
                error,
                rhs_evaluations: evals,
                mean_p: stats.map(|s| s.0),
                std_p: stats.map(|s| s.1),
                seconds: timing.then_some(dt * 7.0),
                failure: if error.is_none() { Some("step 3: non-finite value".into()) } else { None },
            })
            .collect();
        let report = ConvergenceReport { problem: "linear".into(), series: vec![Series::from_rows("bDeC3-eq".into(), rows)] };
        let back = ConvergenceReport::from_csv_str(&report.to_csv_string()).unwrap();
        prop_assert_eq!(back, report);
    }
}

fn basis() -> impl Strategy<Value = Basis> {
    prop_oneof![
        Just(Basis::Bernstein(2)),
        Just(Basis::Bernstein(3)),
        Just(Basis::LagrangeEquispaced(2)),
        Just(Basis::LagrangeEquispaced(3)),
        Just(Basis::LagrangeGL(2)),
        Just(Basis::LagrangeGL(3)),
        Just(Basis::LagrangeGL(4)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cg_residual_sums_to_zero(b in basis(), n in 3usize..12, cip in 0.0f64..0.05, seed in prop::collection::vec(-1.0f64..1.0, 48)) {
        let space = FemSpace1D::new(n, b).unwrap();
        let c = &seed[..space.dof_count];
        let s: f64 = space.space_residual(c, cip).iter().sum();
        prop_assert!(s.abs() < 1e-12, "{s}");
    }

    #[test]
    fn cg_steps_preserve_constants_and_mass(
        b in basis(),
        n in 3usize..10,
        v in prop_oneof![Just(Variant::AlphaDec), Just(Variant::AlphaDecU)],
        order in 2usize..=5,
        k in -3.0f64..3.0,
        seed in prop::collection::vec(-1.0f64..1.0, 40),
    ) {
        let space = FemSpace1D::new(n, b).unwrap();
        let plan = SchemePlan::new(v, 0.0, order, NodeFamily::Equispaced).unwrap();
        let mode = TimeMode::default_for(b);
        let cip = b.default_cip().unwrap_or(0.0);
        let dt = 0.1 * space.h;

        let flat = vec![k; space.dof_count];
        let out = pde_step(&space, &plan, mode, &flat, dt, cip).unwrap().c_next;
        for x in out {
            prop_assert!((x - k).abs() <= 1e-13 * k.abs().max(1.0));
        }

        let c = &seed[..space.dof_count];
        let next = pde_step(&space, &plan, mode, c, dt, cip).unwrap().c_next;
        prop_assert!((space.total_mass(&next) - space.total_mass(c)).abs() < 1e-12);
    }
}
