use fol_core::fem::assemble_dense;
use fol_core::fol::{fol_loss, BcMode, FolProblem};
use fol_core::mesh::{DirichletBc, DofMap, Mesh};
use fol_core::metrics::compare_fields;
use fol_core::microstructure::{
    downsample, fourier_field, generate_two_phase_samples, ElasticityField, FourierSpec,
};
use fol_core::solver::{solve_dense, solve_displacement, SolutionField};
use fol_core::StiffnessOperator;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tension_shear(n: usize) -> FolProblem {
    let mesh = Mesh::structured_grid(n, 1.0).unwrap();
    let bcs = [
        DirichletBc::new("left", 0, 0.0),
        DirichletBc::new("left", 1, 0.0),
        DirichletBc::new("right", 0, 0.05),
        DirichletBc::new("right", 1, 0.05),
    ];
    let dofs = DofMap::new(&mesh, &bcs).unwrap();
    FolProblem::new(mesh, dofs, 0.3).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stiffness_is_symmetric_and_semidefinite(
        e in prop::collection::vec(0.1f64..1.0, 25),
        u in prop::collection::vec(-1.0f64..1.0, 50),
        v in prop::collection::vec(-1.0f64..1.0, 50),
    ) {
        let mesh = Mesh::structured_grid(5, 1.0).unwrap();
        let op = StiffnessOperator::new(&mesh, 0.3).unwrap();
        let ku = op.apply_vec(&e, &u).unwrap();
        let kv = op.apply_vec(&e, &v).unwrap();
        let (a, b) = (dot(&v, &ku), dot(&u, &kv));
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        prop_assert!(op.energy(&e, &u).unwrap() >= -1e-15);
    }

    #[test]
    fn rigid_motions_cost_nothing(
        e in prop::collection::vec(0.1f64..1.0, 16),
        tx in -1.0f64..1.0, ty in -1.0f64..1.0, w in -1.0f64..1.0,
    ) {
        let mesh = Mesh::structured_grid(4, 1.0).unwrap();
        let op = StiffnessOperator::new(&mesh, 0.3).unwrap();
        let u: Vec<f64> = (0..16).flat_map(|i| {
            let p = mesh.node(i);
            [tx - w * p[1], ty + w * p[0]]
        }).collect();
        let r = op.apply_vec(&e, &u).unwrap();
        prop_assert!(r.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn fol_energy_is_nonnegative(
        e in prop::collection::vec(0.1f64..1.0, 25),
        u in prop::collection::vec(-0.2f64..0.2, 50),
    ) {
        let p = tension_shear(5);
        for mode in [BcMode::SoftBc, BcMode::HardBc] {
            let (loss, _) = fol_loss(&p, &e, &u, mode, 10.0).unwrap();
            prop_assert!(loss.energy >= 0.0 && loss.dirichlet >= 0.0);
            prop_assert_eq!(loss.total, loss.energy + loss.dirichlet);
        }
    }

    #[test]
    fn fourier_fields_stay_in_bounds(coeffs in prop::collection::vec(-40.0f64..40.0, 10)) {
        let mesh = Mesh::structured_grid(11, 1.0).unwrap();
        let field = fourier_field(&FourierSpec::default_2d(coeffs), &mesh, 0.3).unwrap();
        prop_assert!(field.e.iter().all(|&e| (0.1..=1.0).contains(&e)));
    }

    #[test]
    fn pooling_is_idempotent(seed in 0u64..1000) {
        let set = generate_two_phase_samples(1, 21, 1.0, 0.1, seed).unwrap();
        let f = ElasticityField::new(set.samples[0].values.clone(), 0.3);
        let once = downsample(&f, 11).unwrap();
        let twice = downsample(&once, 11).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn error_metrics_are_symmetric(
        a in prop::collection::vec(-1.0f64..1.0, 45),
        b in prop::collection::vec(-1.0f64..1.0, 45),
        c in 0.1f64..10.0,
    ) {
        let mk = |v: &[f64]| SolutionField { dim: 2, u: v[..18].to_vec(), stress: v[18..].to_vec() };
        let ab = compare_fields(&mk(&a), &mk(&b)).unwrap();
        let ba = compare_fields(&mk(&b), &mk(&a)).unwrap();
        let sa: Vec<f64> = a.iter().map(|x| x * c).collect();
        let sb: Vec<f64> = b.iter().map(|x| x * c).collect();
        let sc = compare_fields(&mk(&sa), &mk(&sb)).unwrap();
        for ((x, y), z) in ab.components.iter().zip(&ba.components).zip(&sc.components) {
            prop_assert!((x.err_mse - y.err_mse).abs() <= 1e-15);
            prop_assert_eq!(x.err_max, y.err_max);
            prop_assert!(x.err_max >= x.err_mse);
            prop_assert!((z.err_mse - c * x.err_mse).abs() <= 1e-12 * (1.0 + z.err_mse));
        }
    }
}

#[test]
fn cg_agrees_with_dense_lu_up_to_21() {
    for (n, seed) in [(3, 1), (11, 2), (11, 3), (21, 4)] {
        let p = tension_shear(n);
        let e = generate_two_phase_samples(1, n, 1.0, 0.1, seed).unwrap().samples.remove(0).values;
        let (cg, _) = solve_displacement(&p.op, &p.dofs, &e).unwrap();
        let lu = solve_dense(&p.mesh, &p.dofs, &e, 0.3).unwrap();
        let num: f64 = cg.iter().zip(&lu).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let den: f64 = lu.iter().map(|b| b * b).sum::<f64>().sqrt();
        assert!(num / den <= 1e-8, "n = {n}: {}", num / den);
    }
}

#[test]
fn solution_minimizes_energy_among_admissible_fields() {
    let p = tension_shear(11);
    let e = generate_two_phase_samples(1, 11, 1.0, 0.1, 8).unwrap().samples.remove(0).values;
    let (u, _) = solve_displacement(&p.op, &p.dofs, &e).unwrap();
    let best = p.op.energy(&e, &u).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let mut w = u.clone();
        for &d in p.dofs.free_dofs() {
            w[d] += rng.gen_range(-1e-3..1e-3);
        }
        assert!(p.op.energy(&e, &w).unwrap() > best);
    }
}

#[test]
fn scaling_modulus_keeps_the_minimizer() {
    let p = tension_shear(11);
    let e = generate_two_phase_samples(1, 11, 1.0, 0.1, 5).unwrap().samples.remove(0).values;
    let e3: Vec<f64> = e.iter().map(|x| 3.0 * x).collect();
    let (u1, _) = solve_displacement(&p.op, &p.dofs, &e).unwrap();
    let (u3, _) = solve_displacement(&p.op, &p.dofs, &e3).unwrap();
    for (a, b) in u1.iter().zip(&u3) {
        assert!((a - b).abs() < 1e-10);
    }
    let (l1, _) = fol_loss(&p, &e, &u1, BcMode::HardBc, 10.0).unwrap();
    let (l3, _) = fol_loss(&p, &e3, &u1, BcMode::HardBc, 10.0).unwrap();
    assert!((l3.energy - 3.0 * l1.energy).abs() < 1e-14);
}

#[test]
fn dense_assembly_matches_energy() {
    let mesh = Mesh::tet_cube(2, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let e: Vec<f64> = (0..mesh.n_nodes()).map(|_| rng.gen_range(0.1..1.0)).collect();
    let u: Vec<f64> = (0..mesh.n_dofs()).map(|_| rng.gen_range(-0.1..0.1)).collect();
    let k = assemble_dense(&mesh, &e, 0.25).unwrap();
    let ku = &k * nalgebra::DVector::from_column_slice(&u);
    let op = StiffnessOperator::new(&mesh, 0.25).unwrap();
    assert!((0.5 * dot(&u, ku.as_slice()) - op.energy(&e, &u).unwrap()).abs() < 1e-13);
}
