use uagan::theory::{
    aggregated_perturbation, minimize_perturbed_js, optimal_discriminator, perturbed_js_loss, DiscreteDistribution, PerturbationSpec,
};

fn dist(m: &[f64]) -> DiscreteDistribution {
    DiscreteDistribution::new(m.to_vec()).unwrap()
}

#[test]
fn optimal_discriminator_is_density_ratio() {
    let d = optimal_discriminator(&dist(&[0.5, 0.25, 0.25]), &dist(&[0.25, 0.25, 0.5])).unwrap();
    let want = [2.0 / 3.0, 0.5, 1.0 / 3.0];
    for (a, b) in d.iter().zip(want) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn unperturbed_minimiser_is_the_target() {
    let p = dist(&[0.1, 0.2, 0.3, 0.4]);
    let state = minimize_perturbed_js(&p, &PerturbationSpec::unperturbed(4)).unwrap();
    for (q, p) in state.q.mass().iter().zip(p.mass()) {
        assert!((q - p).abs() < 1e-10, "{q} vs {p}");
    }
}

#[test]
fn minimiser_beats_nearby_feasible_points() {
    // Independent check of optimality: small mass transfers never lower the loss.
    let p = dist(&[0.05, 0.15, 0.3, 0.5]);
    let xi = PerturbationSpec::new(vec![1.1, 0.9, 1.05, 0.95], Some(0.1), None).unwrap();
    let state = minimize_perturbed_js(&p, &xi).unwrap();
    let h: Vec<f64> = p.mass().iter().zip(xi.xi()).map(|(p, x)| p * x).collect();
    let best = perturbed_js_loss(p.mass(), state.q.mass(), &h).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            if i == j {
                continue;
            }
            let mut q = state.q.mass().to_vec();
            q[i] += 1e-4;
            q[j] -= 1e-4;
            assert!(perturbed_js_loss(p.mass(), &q, &h).unwrap() >= best - 1e-15);
        }
    }
}

#[test]
fn aggregation_reproduces_mixture_of_perturbations() {
    let locals = [dist(&[0.7, 0.2, 0.1]), dist(&[0.1, 0.3, 0.6])];
    let pi = [0.25, 0.75];
    let q = dist(&[0.3, 0.3, 0.4]);
    let xi = vec![vec![1.1, 0.95, 1.0], vec![0.9, 1.05, 1.02]];
    let (observed, closed) = aggregated_perturbation(&locals, &pi, &q, &xi).unwrap();
    for x in 0..3 {
        let num = 0.25 * locals[0].mass()[x] * xi[0][x] + 0.75 * locals[1].mass()[x] * xi[1][x];
        let den = 0.25 * locals[0].mass()[x] + 0.75 * locals[1].mass()[x];
        assert!((observed[x] - num / den).abs() < 1e-12);
        assert!((closed[x] - num / den).abs() < 1e-15);
    }
}
