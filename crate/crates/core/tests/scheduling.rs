//! Scheduling modes on drawn channels, with and without realization.

use hybridbf::channel::{draw_rayleigh_taps, to_frequency, FrequencyChannel};
use hybridbf::cpps::Flow;
use hybridbf::scheduler::{
    forced_set_rates, schedule, schedule_and_beamform, CppsOptions, Mode, SchedulerConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rayleigh(seed: u64, n: usize, k_total: usize, nf: usize) -> FrequencyChannel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    to_frequency(&draw_rayleigh_taps(n, k_total, 4, &mut rng), nf).unwrap()
}

fn cfg(mode: Mode, power: f64) -> SchedulerConfig {
    SchedulerConfig::new(mode, 4, 3, power)
}

#[test]
fn forced_sets_order_modes_per_subcarrier() {
    for seed in 0..10 {
        let ch = rayleigh(seed, 12, 8, 8);
        let sets = schedule(&ch, &cfg(Mode::Asb, 2.0)).unwrap().user_sets();
        let asb = forced_set_rates(&ch, &sets, Mode::Asb, &cfg(Mode::Asb, 2.0)).unwrap();
        let hb = forced_set_rates(&ch, &sets, Mode::Hb, &cfg(Mode::Hb, 2.0)).unwrap();
        let db = forced_set_rates(&ch, &sets, Mode::Db, &cfg(Mode::Db, 2.0)).unwrap();
        for i in 0..sets.len() {
            assert!(hb[i] >= asb[i] - 1e-12, "seed {seed} sub-carrier {i}");
            assert!(db[i] >= hb[i] - 1e-12);
        }
    }
}

#[test]
fn hybrid_stack_fits_the_rf_chains() {
    for seed in 0..5 {
        let ch = rayleigh(seed, 16, 10, 8);
        let out = schedule(&ch, &cfg(Mode::Hb, 4.0)).unwrap();
        assert!(out.rank <= 4);
        let db = schedule(&ch, &cfg(Mode::Db, 4.0)).unwrap();
        assert!(db.total_rate() >= out.total_rate() - 1e-9);
    }
}

#[test]
fn tunable_realization_reproduces_digital_rates() {
    let ch = rayleigh(11, 16, 8, 4);
    for mode in [Mode::Hb, Mode::Db] {
        let c = cfg(mode, 3.0);
        let out = schedule_and_beamform(&ch, &c, None).unwrap();
        let f = out.factorization.as_ref().unwrap();
        assert_eq!(out.pair_count, f.structural_nonzeros());
        for (i, s) in out.schedule.subcarriers.iter().enumerate() {
            assert!((out.rates[i] - s.rate).abs() <= 1e-8 * s.rate.max(1.0));
        }
    }
}

#[test]
fn fixed_bank_converges_to_tunable_rates() {
    let ch = rayleigh(12, 16, 8, 4);
    let c = cfg(Mode::Hb, 3.0);
    let dcps = schedule_and_beamform(&ch, &c, None).unwrap().total_rate();
    let mut gaps = Vec::new();
    for p in 1..=4 {
        let opts = CppsOptions {
            precision: p,
            flow: Flow::Asymmetric,
            cap: None,
        };
        let out = schedule_and_beamform(&ch, &c, Some(opts)).unwrap();
        assert!(out.cpps_max_error <= 10f64.powi(-(p as i32)) * (1.0 + 1e-9));
        gaps.push((dcps - out.total_rate()).abs() / dcps);
    }
    assert!(gaps[3] < 1e-4, "{gaps:?}");
    assert!(gaps[3] < gaps[0]);
}

#[test]
fn antenna_selection_has_no_phase_shifters() {
    let ch = rayleigh(13, 8, 6, 4);
    let out = schedule_and_beamform(&ch, &cfg(Mode::Asb, 1.0), None).unwrap();
    assert_eq!(out.pair_count, 0);
    assert!(out.factorization.is_none());
    for s in &out.schedule.subcarriers {
        // Only the first N_a antennas radiate.
        assert!(s.precoder.rows(4, 4).iter().all(|z| z.norm() == 0.0));
    }
}
