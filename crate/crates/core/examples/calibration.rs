//! Preset calibration harness: runs the raw / normalized / iterative
//! pipeline over 20 seeds of a (possibly overridden) biased preset and
//! prints the per-seed THI entropies, AID extremes, and task-max peak, plus
//! tally lines. This is the tool the shipped `preset_biased` constants were
//! chosen with; rerun it when adjusting them.
//!
//! Usage: `calibration [noise_std] [quality_std] [n_train] [seed_base] [col_jitter_std]`

use std::time::Instant;

use bids_core::analysis::{aid, balance_metrics, thi_instance_level, thi_task_level};
use bids_core::normalize::normalize_columns;
use bids_core::select::{select_bids, select_instance_max, select_task_max, Aggregator};
use bids_core::synth::{generate, preset_biased};
use bids_core::{AttributionMatrix, SelectionResult};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let defaults = preset_biased(0);
    let noise_std: f64 = args
        .get(1)
        .map(|s| s.parse().unwrap())
        .unwrap_or(defaults.noise_std);
    let quality_std: f64 = args
        .get(2)
        .map(|s| s.parse().unwrap())
        .unwrap_or(defaults.quality_std);
    let n_train: usize = args
        .get(3)
        .map(|s| s.parse().unwrap())
        .unwrap_or(defaults.n_train);
    let seed_base: u64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(0);
    let col_jitter_std: f64 = args
        .get(5)
        .map(|s| s.parse().unwrap())
        .unwrap_or(defaults.col_jitter_std);
    let b = n_train / 10;

    println!(
        "noise_std={noise_std} quality_std={quality_std} jitter={col_jitter_std} \
         n_train={n_train} B={b} seeds={seed_base}..{}",
        seed_base + 20
    );

    // Tallies over the seed range: the full entropy chain raw < norm <= bids,
    // the end-to-end comparisons only, the middle ordering on its own, both
    // AID extremes moving inward, and the task-max peak landing on the
    // dominant task.
    let mut chain_full = 0;
    let mut chain_ends = 0;
    let mut middle = 0;
    let mut aid_both = 0;
    let mut taskmax_top = 0;

    for seed in seed_base..seed_base + 20 {
        let t0 = Instant::now();
        let mut cfg = preset_biased(seed);
        cfg.noise_std = noise_std;
        cfg.quality_std = quality_std;
        cfg.col_jitter_std = col_jitter_std;
        cfg.n_train = n_train;
        let dominant = cfg
            .task_mean_offsets
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
            .unwrap();
        let (raw, part) = generate(&cfg).unwrap();
        let norm = normalize_columns(&raw).unwrap();

        let sel_raw = select_instance_max(&raw, b).unwrap();
        let sel_norm = select_instance_max(&norm, b).unwrap();
        let t1 = Instant::now();
        let sel_bids = select_bids(&norm, b).unwrap();
        let bids_time = t1.elapsed();

        let entropy = |m: &AttributionMatrix, s: &SelectionResult| {
            balance_metrics(&thi_instance_level(m, &part, &s.indices).unwrap())
                .unwrap()
                .entropy
        };
        let e_raw = entropy(&raw, &sel_raw);
        let e_norm = entropy(&norm, &sel_norm);
        let e_bids = entropy(&norm, &sel_bids);

        let extremes = |s: &SelectionResult| {
            let profile = aid(&norm, Some(&s.indices)).unwrap();
            let max = profile.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = profile.iter().copied().fold(f64::INFINITY, f64::min);
            (max, min)
        };
        let (rmx, rmn) = extremes(&sel_raw);
        let (bmx, bmn) = extremes(&sel_bids);

        let sel_tm = select_task_max(&raw, &part, b, Aggregator::Sum).unwrap();
        let counts = thi_task_level(&raw, &part, &sel_tm.indices).unwrap();
        let peak = counts
            .iter()
            .enumerate()
            .max_by_key(|&(_, &c)| c)
            .unwrap()
            .0;

        chain_full += u32::from(e_raw < e_norm && e_norm <= e_bids);
        chain_ends += u32::from(e_raw < e_norm && e_raw < e_bids);
        middle += u32::from(e_norm <= e_bids);
        aid_both += u32::from(bmx < rmx && bmn > rmn);
        taskmax_top += u32::from(peak == dominant);

        println!(
            "seed {seed:3}  e_raw {e_raw:.4}  e_norm {e_norm:.5}  e_bids {e_bids:.5}  mid {}  \
             aidmax {rmx:.4}->{bmx:.4} {}  aidmin {rmn:+.4}->{bmn:+.4} {}  taskmax-peak {peak}  \
             [{:.1?} bids, {:.1?} total]",
            if e_norm <= e_bids { "Y" } else { "n" },
            if bmx < rmx { "Y" } else { "n" },
            if bmn > rmn { "Y" } else { "n" },
            bids_time,
            t0.elapsed(),
        );
    }
    println!(
        "full-chain {chain_full}/20  chain-ends {chain_ends}/20  middle {middle}/20  \
         aid-both {aid_both}/20  taskmax-top {taskmax_top}/20"
    );
}
