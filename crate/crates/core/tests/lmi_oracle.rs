use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use fluid_observer::fixtures;
use fluid_observer::linearizer::AugmentedModel;
use fluid_observer::lmi::{
    assemble_lmi, check_certificate, synthesize_gain, verify_gain, Certificate, GainVerdict, SynthesisOptions,
};

fn normal(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

fn spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let g = normal(rng, n, n);
    &g * g.transpose() + DMatrix::identity(n, n)
}

fn random_certificate(rng: &mut ChaCha8Rng, n: usize, ns: usize) -> Certificate {
    Certificate {
        p: spd(rng, n),
        q: (0..ns).map(|_| spd(rng, n)).collect(),
        s: (0..ns).map(|_| spd(rng, n)).collect(),
        x: DVector::from_column_slice(normal(rng, n, 1).as_slice()),
    }
}

/// The block matrix written out term by term: `Ξ₁ + Ξ₃` with
/// `Ξ₃ = Σ M_i (2P − S_i) M_iᵀ`, bordered by `Y` and `S_i/τ_i²`.
fn literal_block(m: &AugmentedModel, c: &Certificate) -> DMatrix<f64> {
    let n = m.dim();
    let ns = m.num_sources();
    let k = (ns + 1) * n;
    let p = &c.p;
    let xc = &c.x * &m.c_bar;
    let mut psi = -(p * &m.a_bar) - m.a_bar.transpose() * p + &xc + xc.transpose();
    for q in &c.q {
        psi -= q;
    }
    let mut xi1 = DMatrix::zeros(k, k);
    xi1.view_mut((0, 0), (n, n)).copy_from(&psi);
    for i in 0..ns {
        let pad = p * &m.a_d_parts[i];
        xi1.view_mut((0, (i + 1) * n), (n, n)).copy_from(&(-&pad));
        xi1.view_mut(((i + 1) * n, 0), (n, n)).copy_from(&(-pad.transpose()));
        xi1.view_mut(((i + 1) * n, (i + 1) * n), (n, n)).copy_from(&c.q[i]);
    }
    let mut xi3 = DMatrix::<f64>::zeros(k, k);
    for i in 0..ns {
        let mut mi = DMatrix::<f64>::zeros(k, n);
        mi.view_mut((0, 0), (n, n)).copy_from(&(-DMatrix::identity(n, n)));
        mi.view_mut(((i + 1) * n, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
        xi3 += &mi * (p * 2.0 - &c.s[i]) * mi.transpose();
    }
    let mut y = DMatrix::zeros(k, n);
    y.view_mut((0, 0), (n, n)).copy_from(&(p * &m.a_bar - &xc).transpose());
    for i in 0..ns {
        y.view_mut(((i + 1) * n, 0), (n, n))
            .copy_from(&(p * &m.a_d_parts[i]).transpose());
    }
    let total = k + ns * n;
    let mut out = DMatrix::zeros(total, total);
    out.view_mut((0, 0), (k, k)).copy_from(&(xi1 + xi3));
    for j in 0..ns {
        let off = k + j * n;
        out.view_mut((0, off), (k, n)).copy_from(&y);
        out.view_mut((off, 0), (n, k)).copy_from(&y.transpose());
        let tau = m.fwd_delays[j];
        out.view_mut((off, off), (n, n)).copy_from(&(&c.s[j] / (tau * tau)));
    }
    out
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}

#[test]
fn assembled_block_matches_literal_construction() {
    let model = fixtures::printed_model();
    let problem = assemble_lmi(&model).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let cert = random_certificate(&mut rng, 5, 3);
        let ours = problem.evaluate(&cert);
        let theirs = literal_block(&model, &cert);
        assert_eq!(ours.shape(), (35, 35));
        let scale = theirs.amax();
        assert!((&ours - &theirs).amax() <= 1e-12 * scale);
        assert!((&ours - ours.transpose()).amax() <= 1e-12 * scale);
    }
}

#[test]
fn block_is_linear_in_the_certificate() {
    let problem = assemble_lmi(&fixtures::printed_model()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cert = random_certificate(&mut rng, 5, 3);
    let base = problem.evaluate(&cert);
    for alpha in [0.5, 3.0, 1e4] {
        let scaled = problem.evaluate(&cert.scaled(alpha));
        assert!((&scaled - &base * alpha).amax() <= 1e-12 * alpha * base.amax());
    }
}

#[test]
fn sdpa_export_reproduces_blocks() {
    let problem = assemble_lmi(&fixtures::printed_model()).unwrap();
    let text = problem.to_sdpa(1e-7);
    let mut lines = text.lines().filter(|l| !l.starts_with('"'));
    let m: usize = lines.next().unwrap().trim().parse().unwrap();
    let nblocks: usize = lines.next().unwrap().trim().parse().unwrap();
    let sizes: Vec<usize> = lines
        .next()
        .unwrap()
        .split_whitespace()
        .map(|s| s.parse().unwrap())
        .collect();
    assert_eq!(m, problem.num_variables());
    assert_eq!(sizes.len(), nblocks);
    lines.next();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let z: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut rebuilt: Vec<DMatrix<f64>> = sizes.iter().map(|s| DMatrix::zeros(*s, *s)).collect();
    for line in lines {
        let f: Vec<&str> = line.split_whitespace().collect();
        let k: usize = f[0].parse().unwrap();
        if k == 0 {
            continue;
        }
        let (b, r, c): (usize, usize, usize) = (f[1].parse().unwrap(), f[2].parse().unwrap(), f[3].parse().unwrap());
        let v: f64 = f[4].parse().unwrap();
        rebuilt[b - 1][(r - 1, c - 1)] += z[k - 1] * v;
        if r != c {
            rebuilt[b - 1][(c - 1, r - 1)] += z[k - 1] * v;
        }
    }
    let expected = problem.blocks(&problem.certificate_from(&z));
    for (a, b) in rebuilt.iter().zip(&expected) {
        assert!((a - b).amax() <= 1e-12 * b.amax().max(1.0));
    }
}

#[test]
fn synthesized_certificate_survives_shorter_delays() {
    let model = fixtures::printed_model();
    let res = synthesize_gain(&model, &SynthesisOptions::default()).unwrap();
    assert!(check_certificate(&model, &res).passed);
    let base = min_eig(&assemble_lmi(&model).unwrap().evaluate(&res.certificate));

    let mut shorter = model.clone();
    for d in &mut shorter.fwd_delays {
        *d *= 0.5;
    }
    let block = assemble_lmi(&shorter).unwrap().evaluate(&res.certificate);
    assert!(min_eig(&block) >= base * (1.0 - 1e-9));
    let verdict = verify_gain(&shorter, &res.gain, &SynthesisOptions::default()).unwrap();
    assert!(matches!(verdict, GainVerdict::Certified(_)));
}

#[test]
fn gain_reproduces_from_certificate() {
    let model = fixtures::printed_model();
    let res = synthesize_gain(&model, &SynthesisOptions::default()).unwrap();
    let l = res.certificate.p.clone().lu().solve(&res.certificate.x).unwrap();
    assert!((&l - &res.gain).amax() <= 1e-8 * res.gain.amax());
}
