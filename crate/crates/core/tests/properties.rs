use num_complex::Complex64;
use proptest::prelude::*;
use scarbound::entanglement::{renyi_entropy, schmidt_spectrum, EntanglementSpectrum, Region};
use scarbound::io::{parse_spectrum, write_spectrum, SpectrumMeta};
use scarbound::revival::{cascade_check_exact, partition_weights, RevivalEvent};
use scarbound::{EnergyDistribution, Lattice, StateVector, Verdict};

fn distribution() -> impl Strategy<Value = EnergyDistribution> {
    prop::collection::vec((0.0f64..10.0, 0.01f64..1.0), 1..40).prop_filter_map("duplicate energies", |raw| {
        let mut raw = raw;
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        raw.dedup_by(|a, b| a.0 == b.0);
        let total: f64 = raw.iter().map(|p| p.1).sum();
        EnergyDistribution::new(raw.into_iter().map(|(e, w)| (e, w / total)).collect(), 0.0).ok()
    })
}

fn state(dim: usize) -> impl Strategy<Value = StateVector> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), dim).prop_filter_map("zero vector", |v| {
        StateVector::normalized(v.into_iter().map(|(re, im)| Complex64::new(re, im)).collect()).ok()
    })
}

fn probabilities() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-6f64..1.0, 1..30).prop_map(|mut v| {
        let total: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= total);
        v.sort_by(|a, b| b.total_cmp(a));
        v
    })
}

fn spectrum_of(schmidt_sq: Vec<f64>) -> EntanglementSpectrum {
    let lattice = Lattice::chain(2, false, 2).unwrap();
    EntanglementSpectrum { region: Region::new(&lattice, [0]).unwrap(), schmidt_sq, rank_cut: 0.0 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn in_peak_weight_respects_lower_bound(dist in distribution(), tau in 0.05f64..7.0, delta in 0.01f64..std::f64::consts::PI) {
        let event = RevivalEvent::from_distribution(&dist, tau).unwrap();
        let stats = partition_weights(&dist, &event, delta).unwrap();
        prop_assert!((stats.in_peak_total + stats.gap_total - dist.total_weight()).abs() < 1e-12);
        prop_assert_ne!(stats.in_peak_check().verdict, Verdict::Fail);
    }

    #[test]
    fn cascade_never_fails(dist in distribution(), tau in 0.05f64..7.0) {
        let event = RevivalEvent::from_distribution(&dist, tau).unwrap();
        for row in cascade_check_exact(&dist, &event, 10) {
            prop_assert_ne!(row.verdict, Verdict::Fail, "m = {}", row.m);
        }
    }

    #[test]
    fn fidelity_is_translation_invariant(dist in distribution(), shift in -50.0f64..50.0, t in 0.0f64..20.0) {
        prop_assert!((dist.fidelity(t) - dist.translated(shift).fidelity(t)).abs() < 1e-12);
    }

    #[test]
    fn renyi_entropies_are_ordered(p in probabilities(), a in 0.1f64..5.0, b in 0.1f64..5.0) {
        let spec = spectrum_of(p);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let s_lo = renyi_entropy(&spec, lo).unwrap();
        let s_hi = renyi_entropy(&spec, hi).unwrap();
        prop_assert!(s_hi <= s_lo + 1e-12);
        let s_inf = renyi_entropy(&spec, f64::INFINITY).unwrap();
        prop_assert!(s_inf <= s_hi + 1e-12);
        if hi > 1.0 {
            prop_assert!(s_inf >= (hi - 1.0) / hi * s_hi - 1e-12);
        }
        prop_assert!(s_lo <= renyi_entropy(&spec, 0.0).unwrap() + 1e-12);
    }

    #[test]
    fn schmidt_values_sum_to_one_and_match_complement(psi in state(27)) {
        let lattice = Lattice::chain(3, false, 3).unwrap();
        let a = schmidt_spectrum(&psi, &Region::new(&lattice, [0]).unwrap(), &lattice, 0.0).unwrap();
        let b = schmidt_spectrum(&psi, &Region::new(&lattice, [1, 2]).unwrap(), &lattice, 0.0).unwrap();
        prop_assert!((a.schmidt_sq.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for k in 0..3 {
            prop_assert!((a.schmidt_sq[k] - b.schmidt_sq[k]).abs() < 1e-12);
        }
        prop_assert!(b.schmidt_sq[3..].iter().all(|&l| l < 1e-12));
    }

    #[test]
    fn local_unitaries_preserve_schmidt_values(psi in state(16), theta in 0.0f64..6.3, phi in 0.0f64..6.3) {
        // one qubit rotation on site 0 (inside A) and a phase on site 3 (outside A)
        let lattice = Lattice::chain(4, true, 2).unwrap();
        let region = Region::new(&lattice, [0, 1]).unwrap();
        let (c, s) = (theta.cos(), theta.sin());
        let phase = Complex64::from_polar(1.0, phi);
        let mut rotated = vec![Complex64::new(0.0, 0.0); 16];
        for (idx, &amp) in psi.as_slice().iter().enumerate() {
            let bit = idx >> 3 & 1;
            let rest = idx & 0b0111;
            let amp = if idx & 1 == 1 { amp * phase } else { amp };
            if bit == 0 {
                rotated[rest] += c * amp;
                rotated[rest | 8] += s * amp;
            } else {
                rotated[rest] -= s * amp;
                rotated[rest | 8] += c * amp;
            }
        }
        let rotated = StateVector::new(rotated).unwrap();
        let before = schmidt_spectrum(&psi, &region, &lattice, 0.0).unwrap();
        let after = schmidt_spectrum(&rotated, &region, &lattice, 0.0).unwrap();
        for (x, y) in before.schmidt_sq.iter().zip(&after.schmidt_sq) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn spectrum_files_round_trip(dist in distribution(), h in 0.1f64..10.0) {
        let meta = SpectrumMeta { n_sites: 6, lattice_dim: 1, h, shift: -1.5, weight_cut: 1e-14 };
        let mut buf = Vec::new();
        write_spectrum(&mut buf, &dist, &meta).unwrap();
        let (back, m) = parse_spectrum(std::str::from_utf8(&buf).unwrap(), "mem").unwrap();
        prop_assert_eq!(back.energies(), dist.energies());
        prop_assert_eq!(back.weights(), dist.weights());
        prop_assert_eq!(m, meta);
    }
}

#[test]
fn deficient_total_weight_is_an_input_error() {
    let text = "0.0 0.4\n1.0 0.4\n";
    assert!(parse_spectrum(text, "f").is_err());
}
