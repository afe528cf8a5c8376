use nalgebra::{DMatrix, DVector};
use porolab::grid::Grid;
use porolab::kernel::{
    kernel_moments, Marginal, PDECoefficients, ProbabilityKernel, QuadratureConfig,
    TabulatedDensity, VectorField,
};
use porolab::montecarlo::{self, WalkEnsemble};
use porolab::solver::{self, IBVProblem, SolveOptions};
use porolab::statelaw::{IdealDomain, StateLaw};

const PARTS: usize = 16;

fn gauss1(mean: f64, var: f64, tau: f64) -> ProbabilityKernel {
    ProbabilityKernel::gaussian(
        DVector::from_vec(vec![mean]),
        DMatrix::from_element(1, 1, var),
        8.0,
        tau,
    )
    .unwrap()
}

#[test]
fn even_kernel_leaves_the_mean_in_place() {
    let (n, k, sd) = (100_000, 10, 0.1);
    let mut e = WalkEnsemble::new(gauss1(0.0, sd * sd, 0.01), vec![0.0; n], 11, PARTS).unwrap();
    e.walk(k);
    let band = 5.0 * sd * (k as f64).sqrt() / (n as f64).sqrt();
    assert!(e.mean()[0].abs() <= band, "{} > {band}", e.mean()[0]);
    assert_eq!(e.len(), n);
}

#[test]
fn shifted_kernel_moves_the_mean_by_k_mu() {
    let (n, k, sd, mu) = (100_000, 25, 0.1, 0.01);
    let mut e = WalkEnsemble::new(gauss1(mu, sd * sd, 0.01), vec![0.5; n], 12, PARTS).unwrap();
    e.walk(k);
    let band = 5.0 * sd * (k as f64).sqrt() / (n as f64).sqrt();
    let want = 0.5 + k as f64 * mu;
    assert!(
        (e.mean()[0] - want).abs() <= band,
        "{} vs {want} ± {band}",
        e.mean()[0]
    );
}

fn moment_bands(kernel: ProbabilityKernel, seed: u64) {
    let n = 200_000;
    let dim = kernel.dim();
    let x = vec![0.0; dim];
    let m = kernel_moments(&kernel, &x, 0.0, QuadratureConfig::default()).unwrap();
    let e = WalkEnsemble::new(kernel, x.clone(), seed, 1).unwrap();
    let z = e.sample_displacements(&x, 0.0, n, 3);
    let nf = n as f64;
    for i in 0..dim {
        let first: Vec<f64> = z.chunks(dim).map(|p| p[i]).collect();
        let mean = first.iter().sum::<f64>() / nf;
        let sd = (first.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf).sqrt();
        assert!(
            (mean - m.e[i]).abs() <= 5.0 * sd / nf.sqrt() + 1e-12,
            "E_{i}: {mean} vs {}",
            m.e[i]
        );
        for j in 0..dim {
            let prod: Vec<f64> = z.chunks(dim).map(|p| p[i] * p[j]).collect();
            let pm = prod.iter().sum::<f64>() / nf;
            let psd = (prod.iter().map(|v| (v - pm).powi(2)).sum::<f64>() / nf).sqrt();
            assert!(
                (pm - m.a_bar[(i, j)]).abs() <= 5.0 * psd / nf.sqrt() + 1e-12,
                "a_bar_{i}{j}: {pm} vs {}",
                m.a_bar[(i, j)]
            );
        }
    }
}

#[test]
fn displacement_moments_match_kernel_moments() {
    let cov = DMatrix::from_row_slice(2, 2, &[0.04, 0.015, 0.015, 0.02]);
    moment_bands(
        ProbabilityKernel::gaussian(DVector::from_vec(vec![0.05, -0.02]), cov, 4.0, 0.1).unwrap(),
        21,
    );
    moment_bands(
        ProbabilityKernel::product(
            vec![
                Marginal::Uniform {
                    low: -0.1,
                    high: 0.3,
                },
                Marginal::Triangular {
                    center: 0.05,
                    half_width: 0.2,
                },
            ],
            0.1,
        )
        .unwrap(),
        22,
    );
    let vals = [1.0, 3.0, 2.0, 0.5, 4.0, 1.5];
    let sum: f64 = vals.iter().sum();
    let t = TabulatedDensity::new(
        vec![0.1, 0.2],
        vec![2, 3],
        vals.iter().map(|v| v / (sum * 0.02)).collect(),
    )
    .unwrap();
    moment_bands(ProbabilityKernel::tabulated(t, 0.1).unwrap(), 23);
}

// two-sample Kolmogorov–Smirnov statistic
fn ks(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn halving_tau_and_variance_gives_the_same_walk() {
    let n = 50_000;
    let var = 0.004;
    let mut coarse = WalkEnsemble::new(gauss1(0.0, var, 0.02), vec![0.0; n], 31, PARTS).unwrap();
    let mut fine =
        WalkEnsemble::new(gauss1(0.0, var / 2.0, 0.01), vec![0.0; n], 32, PARTS).unwrap();
    coarse.walk(10);
    fine.walk(20);
    assert!((coarse.time() - fine.time()).abs() < 1e-15);
    // critical value at level 1e-3
    let crit = 1.95 * (2.0 / n as f64).sqrt();
    let d = ks(coarse.positions(), fine.positions());
    assert!(d <= crit, "KS {d} > {crit}");
}

#[test]
fn histogram_conserves_mass() {
    let grid = Grid::interval(-3.0, 3.0, 300).unwrap();
    let mut e =
        WalkEnsemble::gaussian_cloud(gauss1(0.0, 0.0025, 0.01), 20_000, &[0.0], 0.2, 41, PARTS)
            .unwrap();
    e.walk(30);
    let rho = montecarlo::empirical_density(&e, &grid).unwrap();
    let mass: f64 = rho.values.iter().sum::<f64>() * grid.cell_volume();
    assert!((mass - 1.0).abs() < 1e-12);
    assert_eq!(e.len(), 20_000);
}

#[test]
fn positive_mean_moves_walk_and_density_the_same_way() {
    let tau = 0.01;
    let mu = 0.002;
    let kernel = gauss1(mu, 0.0025, tau);
    let m = kernel_moments(&kernel, &[0.0], 0.0, QuadratureConfig::default()).unwrap();
    let grid = Grid::interval(-3.0, 3.0, 300).unwrap();
    let law = StateLaw::ideal(1.0, IdealDomain::FullLine).unwrap();
    let c = PDECoefficients::constant(m.a.clone(), DMatrix::zeros(1, 1), DVector::zeros(1), law)
        .unwrap()
        .with_drift(VectorField::Constant(m.drift.clone()));
    let sd = 0.2;
    let mut u0 = grid.sample(0.0, |x| {
        (-x[0] * x[0] / (2.0 * sd * sd)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
    });
    for b in grid.boundary_indices() {
        u0.values[b] = 0.0;
    }
    let p = IBVProblem::new(c, 0.0, u0, &grid).unwrap();
    let traj = solver::solve_with(&p, &grid, &SolveOptions::new(0.5, 0)).unwrap();
    let pde = montecarlo::center_of_mass(&traj.last().field, &grid)[0];

    let n = 100_000;
    let mut e = WalkEnsemble::gaussian_cloud(kernel, n, &[0.0], sd, 42, PARTS).unwrap();
    e.walk(50);
    let walk = e.mean()[0];
    let predicted = mu / tau * 0.5;
    let band = 5.0 * (sd * sd + 50.0 * 0.0025f64).sqrt() / (n as f64).sqrt();
    assert!(pde > 0.0 && walk > 0.0);
    assert!((pde - predicted).abs() < 1e-6, "{pde} vs {predicted}");
    assert!((walk - pde).abs() <= band, "{walk} vs {pde} ± {band}");
}
