use tmsi_core::backaction::{
    fit_efficiency, fit_strength_z, generate_tomography, generate_tomography_dephased, t2_corrected_eta,
    BackactionParams,
};

const STRENGTH: f64 = 0.66;
const SHOTS: usize = 1_000_000;

#[test]
fn recovers_strength_and_efficiency() {
    for (k, eta) in [0.2, 0.29, 0.46, 0.58, 1.0].into_iter().enumerate() {
        let ds = generate_tomography(&BackactionParams::from_strength(STRENGTH, eta), SHOTS, 100 + k as u64).unwrap();
        let s = fit_strength_z(&ds).unwrap();
        assert!((s.strength - STRENGTH).abs() < 0.01, "eta {eta}: strength {}", s.strength);
        assert!(!s.no_measurement);
        let e = fit_efficiency(&ds, s.strength).unwrap();
        assert!((e.eta_fit - eta).abs() < 0.02, "eta {eta}: fit {} ± {}", e.eta_fit, e.eta_half_width);
        assert!(e.eta_fit > 0.0 && e.eta_fit <= 1.0 && e.residual.is_finite());
        if eta == 1.0 {
            assert!(e.eta_fit >= 0.98);
        }
    }
}

#[test]
fn z_cut_follows_tanh_for_any_efficiency() {
    for eta in [0.29, 1.0] {
        let ds = generate_tomography(&BackactionParams::from_strength(STRENGTH, eta), 600_000, 7).unwrap();
        let s = fit_strength_z(&ds).unwrap();
        let populated: Vec<_> = s.cut.iter().filter(|b| b.count >= 200).collect();
        let outliers = populated
            .iter()
            .filter(|b| (b.mean - (STRENGTH * b.coord).tanh()).abs() > 4.0 * b.std_error)
            .count();
        assert!(outliers <= populated.len() / 50, "{outliers} of {} bins off", populated.len());
    }
}

#[test]
fn zero_strength_flags_no_measurement() {
    let ds = generate_tomography(&BackactionParams::from_strength(0.0, 1.0), 200_000, 9).unwrap();
    let s = fit_strength_z(&ds).unwrap();
    assert!(s.strength.abs() < 0.02);
    assert!(s.no_measurement);
}

#[test]
fn nonzero_q_center_is_recovered() {
    let p = BackactionParams {
        i_bar: 0.66,
        q_bar: 0.5,
        sigma: 1.0,
        eta: 0.46,
    };
    let ds = generate_tomography(&p, SHOTS, 21).unwrap();
    let e = fit_efficiency(&ds, 0.66).unwrap();
    assert!((e.eta_fit - 0.46).abs() < 0.03, "{}", e.eta_fit);
    assert!((e.q_bar_fit - 0.5).abs() < 0.2, "{}", e.q_bar_fit);
}

#[test]
fn dephasing_lowers_fit_and_correction_restores_it() {
    let (t, t2): (f64, f64) = (660e-9, 4.4e-6);
    let p = BackactionParams::from_strength(STRENGTH, 0.6);
    let ds = generate_tomography_dephased(&p, SHOTS, 33, (-t / t2).exp()).unwrap();
    let raw = fit_efficiency(&ds, STRENGTH).unwrap();
    assert!(raw.eta_fit < 0.58);
    let cor = t2_corrected_eta(raw.eta_fit, STRENGTH, t, t2).unwrap();
    assert!((cor.eta_corrected - 0.6).abs() < 0.03, "{}", cor.eta_corrected);
}


#[test]
fn identical_across_pool_sizes() {
    let p = BackactionParams::from_strength(STRENGTH, 0.46);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| generate_tomography(&p, 50_000, 5).unwrap())
    };
    assert_eq!(run(1), run(4));
}
