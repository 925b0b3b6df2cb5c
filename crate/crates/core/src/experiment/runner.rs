//! Scenario execution: seeded, job-parallel sweeps for the three schemes.
//!
//! Jobs are (ratio, run) pairs; each job builds its transmit field once,
//! reuses the propagated channel across the sweep axis where physics allows
//! it (noise is loaded at the receiver input) and walks the receiver chain
//! per axis point. Seeds derive from `(base_seed, salts...)` only, so the
//! result is identical for any worker count or execution order.

use std::collections::BTreeMap;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::channel::{
    amplify, amplify_dual, apply_cd, apply_cd_dual, deinterleave_dual, load_noise_to_osnr,
    load_noise_to_osnr_dual, propagate_manakov, random_pol_rotation, NoiseSpec, StepConfig,
};
use crate::error::{Error, Result};
use crate::experiment::scenario::{CdCompensation, LinkScenario, NoiseMode, Scheme};
use crate::experiment::{mix_seeds, SweepResult, SweepRow, TheoryPoint};
use crate::receiver::{
    adc, add_lo, analytic_ber, cd_compensate, decide_and_count, extract_real_lane, kk_reconstruct,
    osnr_to_symbol_snr, polmux_demux, remove_constant_phase, BerKind, KkConfig, SnrBookkeeping,
};
use crate::signal::{
    apply_filter, map_spectrum, rate_ratio, resample_band_limited, winding_number, ComplexSignal,
    DualPolSignal,
};
use crate::txmodem::{
    build_kkpam, build_two_sided, make_frame, polmux, shape_impulses, split_about_gap,
    take_sideband, wdm_mux, Sideband, SymbolFrame, TxConfig,
};

// seed salts, one namespace per random purpose
const SALT_DATA: u64 = 0xDA7A;
const SALT_NOISE: u64 = 0x0153;
const SALT_POL: u64 = 0x90FA;
const SALT_AMP: u64 = 0xA5E0;

#[derive(Debug, Clone)]
struct LaneOutcome {
    variant: u8,
    sideband: &'static str,
    sideband_idx: u8,
    pol: &'static str,
    pol_idx: u8,
    n_bits: u64,
    n_errors: u64,
    winding_violations: u64,
    clips: u64,
}

/// Occupied-bandwidth bookkeeping for a two-sided scenario.
#[derive(Debug, Clone, Copy)]
pub struct SpectralAccounting {
    /// Symbol rate plus guard band.
    pub nominal_bw_hz: f64,
    /// Roll-off-inclusive occupied bandwidth.
    pub rolloff_bw_hz: f64,
    /// Spectral-efficiency loss of the guard band vs a gapless channel.
    pub se_loss_fraction: f64,
}

pub fn spectral_accounting(sc: &LinkScenario) -> SpectralAccounting {
    let nominal = sc.baud_hz + sc.gap_hz;
    SpectralAccounting {
        nominal_bw_hz: nominal,
        rolloff_bw_hz: (1.0 + sc.rolloff) * sc.baud_hz + sc.gap_hz,
        se_loss_fraction: sc.gap_hz / nominal,
    }
}

fn zero_like(x: &ComplexSignal) -> ComplexSignal {
    ComplexSignal::new(
        vec![Complex64::ZERO; x.len()],
        x.sample_rate_hz(),
        x.center_freq_hz(),
    )
    .expect("zero signal")
}

fn zero_mean(x: &ComplexSignal) -> ComplexSignal {
    let m = x.mean();
    ComplexSignal::new(
        x.samples().iter().map(|s| s - m).collect(),
        x.sample_rate_hz(),
        x.center_freq_hz(),
    )
    .expect("zero-mean signal")
}

fn scale_signal(x: &ComplexSignal, factor: f64) -> ComplexSignal {
    ComplexSignal::new(
        x.samples().iter().map(|s| s * factor).collect(),
        x.sample_rate_hz(),
        x.center_freq_hz(),
    )
    .expect("scaled signal")
}

fn scale_dual(x: &DualPolSignal, factor: f64) -> DualPolSignal {
    DualPolSignal {
        x: scale_signal(&x.x, factor),
        y: scale_signal(&x.y, factor),
    }
}

fn zero_mean_power(x: &ComplexSignal) -> f64 {
    let m = x.mean();
    x.samples().iter().map(|s| (s - m).norm_sqr()).sum::<f64>() / x.len() as f64
}

fn winding_violation(x: &ComplexSignal) -> u64 {
    match winding_number(x) {
        Ok(0) => 0,
        _ => 1,
    }
}

fn step_config(sc: &LinkScenario) -> StepConfig {
    StepConfig {
        step_km: sc.ssfm.step_km,
        check_convergence: sc.ssfm.check_convergence,
        tol: sc.ssfm.tol,
    }
}

/// Propagates through the nonlinear link; in target-OSNR mode every span is
/// followed by an ideal loss-recovery gain, in amplifier-chain mode by a
/// noisy EDFA of the same gain.
fn propagate_link(
    sc: &LinkScenario,
    tx: &DualPolSignal,
    seed: u64,
) -> Result<DualPolSignal> {
    let step = step_config(sc);
    let mut field = tx.clone();
    for (i, span) in sc.spans.iter().enumerate() {
        field = propagate_manakov(&field, span, &step)?;
        let span_loss_db = span.alpha_db_km * span.length_km;
        match sc.noise.mode {
            NoiseMode::TargetOsnr => {
                field = scale_dual(&field, 10f64.powf(span_loss_db / 20.0));
            }
            NoiseMode::AmplifierChain => {
                field = amplify_dual(
                    &field,
                    span_loss_db,
                    sc.noise.nf_db,
                    mix_seeds(seed, &[SALT_AMP, i as u64]),
                )?;
            }
        }
    }
    Ok(field)
}

/// Linear channel (no Kerr): pure dispersion, with the amplifier chain's
/// lumped loss budget and ASE when that mode is selected.
fn linear_link_scalar(
    sc: &LinkScenario,
    tx: &ComplexSignal,
    cd_total_ps_nm: f64,
    seed: u64,
) -> Result<ComplexSignal> {
    let mut field = apply_cd(tx, cd_total_ps_nm);
    if sc.noise.mode == NoiseMode::AmplifierChain {
        let loss = sc.noise.loss_budget_db;
        field = scale_signal(&field, 10f64.powf(-loss / 20.0));
        field = amplify(&field, loss, sc.noise.nf_db, mix_seeds(seed, &[SALT_AMP]))?;
    }
    Ok(field)
}

// ---------------------------------------------------------------------------
// KK-PAM
// ---------------------------------------------------------------------------

struct KkpamTx {
    tx: DualPolSignal,
    central_frame: SymbolFrame,
    /// Zero-mean SSB signal power of the measured channel (P_s).
    p_s: f64,
    /// Total transmitted power of the measured channel, bias included.
    p_channel: f64,
}

fn prepare_kkpam(sc: &LinkScenario, ratio: f64, ratio_idx: usize, run: usize) -> Result<KkpamTx> {
    let fs = sc.sim_rate_hz();
    let pulse = sc.pulse();
    let cfg = TxConfig::kkpam(ratio);
    let central = sc.n_wdm / 2;
    let mut channels = Vec::with_capacity(sc.n_wdm);
    let mut central_frame = None;
    let mut p_s = 0.0;
    let mut p_channel = 0.0;
    for ch in 0..sc.n_wdm {
        let seed = mix_seeds(
            sc.base_seed,
            &[SALT_DATA, ratio_idx as u64, run as u64, ch as u64],
        );
        let frame = make_frame(sc.n_symbols, sc.modulation_order, seed)?;
        let field = build_kkpam(&frame, &pulse, &cfg, fs)?;
        if ch == central {
            p_s = zero_mean_power(&field);
            p_channel = field.power();
            central_frame = Some(frame);
        }
        let zero = zero_like(&field);
        channels.push(polmux(field, zero)?);
    }
    let tx = if sc.n_wdm > 1 {
        wdm_mux(&channels, sc.spacing_hz)?
    } else {
        channels.pop().expect("one channel")
    };
    Ok(KkpamTx {
        tx,
        central_frame: central_frame.expect("central channel"),
        p_s,
        p_channel,
    })
}

fn kkpam_variants(sc: &LinkScenario, axis_name: &str) -> Vec<CdCompensation> {
    match sc.cd_compensation {
        Some(CdCompensation::Both) | None if axis_name == "osnr_db" => {
            vec![CdCompensation::Optical, CdCompensation::Digital]
        }
        Some(CdCompensation::Optical) => vec![CdCompensation::Optical],
        Some(CdCompensation::Digital) | None => vec![CdCompensation::Digital],
        Some(CdCompensation::Both) => vec![CdCompensation::Optical, CdCompensation::Digital],
    }
}

#[allow(clippy::too_many_arguments)]
fn kkpam_point(
    sc: &LinkScenario,
    prep: &KkpamTx,
    channel_field: &ComplexSignal,
    p_signal: f64,
    osnr_db: f64,
    cd_total: f64,
    variants: &[CdCompensation],
    noise_seed: u64,
) -> Result<Vec<LaneOutcome>> {
    let pulse = sc.pulse();
    let noisy = match sc.noise.mode {
        NoiseMode::TargetOsnr => {
            let spec = NoiseSpec {
                osnr_db,
                ref_bw_hz: sc.noise.ref_bw_hz,
                exclude_bias: true,
            };
            load_noise_to_osnr(channel_field, &spec, p_signal, noise_seed)?
        }
        NoiseMode::AmplifierChain => channel_field.clone(),
    };
    let kk_cfg = KkConfig {
        adc_rate_hz: sc.rx.adc_rate_hz,
        upsample_factor: sc.rx.upsample_factor,
        log_floor_rel: sc.rx.log_floor_rel,
        output_rate_hz: 2.0 * sc.baud_hz,
    };
    let mut outcomes = Vec::new();
    for (v_idx, variant) in variants.iter().enumerate() {
        let pre = match variant {
            CdCompensation::Optical => apply_cd(&noisy, -cd_total),
            _ => noisy.clone(),
        };
        let filtered = apply_filter(&pre, &sc.rx.filter);
        let violations = winding_violation(&filtered);
        let current = crate::receiver::photodetect(&filtered);
        let sampled = adc(&current, sc.rx.adc_rate_hz)?;
        let (rec, diag) = kk_reconstruct(&sampled, &kk_cfg)?;
        let rec = match variant {
            CdCompensation::Digital => cd_compensate(&rec, cd_total),
            _ => rec,
        };
        let rec = remove_constant_phase(&rec)?;
        let lane = extract_real_lane(&rec, 0.0)?;
        let report = decide_and_count(&lane, &prep.central_frame, &pulse)?;
        outcomes.push(LaneOutcome {
            variant: v_idx as u8,
            sideband: "ssb",
            sideband_idx: 0,
            pol: "x",
            pol_idx: 0,
            n_bits: report.n_bits,
            n_errors: report.n_errors,
            winding_violations: violations,
            clips: diag.clipped,
        });
    }
    Ok(outcomes)
}

fn kkpam_job(
    sc: &LinkScenario,
    axis_name: &'static str,
    axis: &[f64],
    ratio: f64,
    ratio_idx: usize,
    run: usize,
) -> Result<Vec<(usize, Vec<LaneOutcome>)>> {
    let prep = prepare_kkpam(sc, ratio, ratio_idx, run)?;
    let variants = kkpam_variants(sc, axis_name);
    let chain_seed = mix_seeds(sc.base_seed, &[SALT_AMP, ratio_idx as u64, run as u64]);

    // the propagated field is axis-independent for OSNR sweeps
    let mut shared: Option<(ComplexSignal, f64, f64)> = None;
    if axis_name == "osnr_db" {
        let cd_total = sc.total_cd_ps_nm();
        let (field, p_sig) = if sc.nonlinear {
            let p_launch = 10f64.powf((sc.launch_dbm - 30.0) / 10.0);
            let scale = (p_launch / prep.p_channel).sqrt();
            let launched = scale_dual(&prep.tx, scale);
            let out = propagate_link(sc, &launched, chain_seed)?;
            (out.x, prep.p_s * scale * scale)
        } else {
            (
                linear_link_scalar(sc, &prep.tx.x, cd_total, chain_seed)?,
                prep.p_s,
            )
        };
        shared = Some((field, p_sig, cd_total));
    }

    let mut out = Vec::with_capacity(axis.len());
    for (axis_idx, &value) in axis.iter().enumerate() {
        let noise_seed = mix_seeds(
            sc.base_seed,
            &[SALT_NOISE, axis_idx as u64, ratio_idx as u64, run as u64],
        );
        let outcomes = match (&shared, axis_name) {
            (Some((field, p_sig, cd_total)), _) => kkpam_point(
                sc, &prep, field, *p_sig, value, *cd_total, &variants, noise_seed,
            )?,
            (None, "cd_ps_nm") => {
                let osnr_db = sc
                    .fixed_osnr_db
                    .ok_or_else(|| Error::Config("cd sweep needs fixed_osnr_db".into()))?;
                let field = linear_link_scalar(sc, &prep.tx.x, value, chain_seed)?;
                kkpam_point(
                    sc, &prep, &field, prep.p_s, osnr_db, value, &variants, noise_seed,
                )?
            }
            _ => unreachable!("axis handled above"),
        };
        out.push((axis_idx, outcomes));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Two-sided polarization-multiplexed KK
// ---------------------------------------------------------------------------

struct TskkLanes {
    /// Post-interleaver sideband lane fields of the central channel:
    /// [upper, lower] x [x pol, y pol].
    lane_fields: [[ComplexSignal; 2]; 2],
    frames: [[SymbolFrame; 2]; 2],
}

struct TskkTx {
    tx: DualPolSignal,
    lanes: TskkLanes,
    p_channel: f64,
}

fn tskk_tx_config(sc: &LinkScenario) -> TxConfig {
    TxConfig::two_sided(
        sc.gap_hz,
        sc.spacing_hz,
        sc.interleaver.filter,
        sc.interleaver.offset_hz,
    )
}

fn prepare_tskk(sc: &LinkScenario, ratio_idx: usize, run: usize) -> Result<TskkTx> {
    let fs = sc.sim_rate_hz();
    let pulse = sc.pulse();
    let cfg = tskk_tx_config(sc);
    let central = sc.n_wdm / 2;
    let mut channels = Vec::with_capacity(sc.n_wdm);
    let mut lanes = None;
    for ch in 0..sc.n_wdm {
        let mut pol_fields = Vec::with_capacity(2);
        let mut lane_fields: Vec<[ComplexSignal; 2]> = Vec::with_capacity(2);
        let mut frames: Vec<[SymbolFrame; 2]> = Vec::with_capacity(2);
        for pol in 0..2u64 {
            let seed_lo = mix_seeds(
                sc.base_seed,
                &[SALT_DATA, ratio_idx as u64, run as u64, ch as u64, pol, 0],
            );
            let seed_hi = mix_seeds(
                sc.base_seed,
                &[SALT_DATA, ratio_idx as u64, run as u64, ch as u64, pol, 1],
            );
            let frame_lo = make_frame(sc.n_symbols, sc.modulation_order, seed_lo)?;
            let frame_hi = make_frame(sc.n_symbols, sc.modulation_order, seed_hi)?;
            if ch == central {
                // assemble by parts so the per-sideband lane fields stay
                // available for LO sizing and demux training
                let r_lo = crate::txmodem::shape(&frame_lo, &pulse, fs)?;
                let r_hi = crate::txmodem::shape(&frame_hi, &pulse, fs)?;
                let upper =
                    take_sideband(&split_about_gap(&r_hi, cfg.gap_hz)?, Sideband::Upper);
                let lower =
                    take_sideband(&split_about_gap(&r_lo, cfg.gap_hz)?, Sideband::Lower);
                let flt = cfg.interleaver.expect("two-sided interleaver");
                let upper = apply_filter(&upper, &flt.centered_at(cfg.interleaver_offset_hz));
                let lower = apply_filter(&lower, &flt.centered_at(-cfg.interleaver_offset_hz));
                let field = ComplexSignal::new(
                    upper
                        .samples()
                        .iter()
                        .zip(lower.samples())
                        .map(|(a, b)| a + b)
                        .collect(),
                    fs,
                    0.0,
                )?;
                pol_fields.push(field);
                lane_fields.push([upper, lower]);
                frames.push([frame_hi, frame_lo]);
            } else {
                pol_fields.push(build_two_sided(&frame_lo, &frame_hi, &pulse, &cfg, fs)?);
            }
        }
        let y = pol_fields.pop().expect("y pol");
        let x = pol_fields.pop().expect("x pol");
        if ch == central {
            let lf_y = lane_fields.pop().expect("y lanes");
            let lf_x = lane_fields.pop().expect("x lanes");
            let fr_y = frames.pop().expect("y frames");
            let fr_x = frames.pop().expect("x frames");
            let [up_x, lo_x] = lf_x;
            let [up_y, lo_y] = lf_y;
            let [hi_x, lo_fx] = fr_x;
            let [hi_y, lo_fy] = fr_y;
            lanes = Some(TskkLanes {
                lane_fields: [[up_x, up_y], [lo_x, lo_y]],
                frames: [[hi_x, hi_y], [lo_fx, lo_fy]],
            });
        }
        channels.push(polmux(x, y)?);
    }
    let tx = if sc.n_wdm > 1 {
        wdm_mux(&channels, sc.spacing_hz)?
    } else {
        channels.pop().expect("one channel")
    };
    let lanes = lanes.expect("central lanes");
    let p_channel: f64 = lanes
        .lane_fields
        .iter()
        .flatten()
        .map(|f| f.power())
        .sum();
    Ok(TskkTx {
        tx,
        lanes,
        p_channel,
    })
}

#[allow(clippy::too_many_arguments)]
fn tskk_point(
    sc: &LinkScenario,
    prep: &TskkTx,
    channel_field: &DualPolSignal,
    launch_scale: f64,
    osnr_db: f64,
    cd_total: f64,
    ratio: f64,
    noise_seed: u64,
) -> Result<Vec<LaneOutcome>> {
    let pulse = sc.pulse();
    let spec = NoiseSpec {
        osnr_db,
        ref_bw_hz: sc.noise.ref_bw_hz,
        exclude_bias: true,
    };
    let p_sig = prep.p_channel * launch_scale * launch_scale;
    let noisy = match sc.noise.mode {
        NoiseMode::TargetOsnr => load_noise_to_osnr_dual(channel_field, &spec, p_sig, noise_seed)?,
        NoiseMode::AmplifierChain => channel_field.clone(),
    };
    let flt = sc.interleaver.filter;
    let (lower_branch, upper_branch) = deinterleave_dual(
        &noisy,
        &flt.centered_at(-sc.interleaver.offset_hz),
        &flt.centered_at(sc.interleaver.offset_hz),
    );
    let kk_cfg = KkConfig {
        adc_rate_hz: sc.rx.adc_rate_hz,
        upsample_factor: sc.rx.upsample_factor,
        log_floor_rel: sc.rx.log_floor_rel,
        output_rate_hz: 2.0 * sc.baud_hz,
    };
    let (p2, q2) = rate_ratio(sc.sim_rate_hz(), 2.0 * sc.baud_hz)?;

    let mut outcomes = Vec::new();
    for (side_idx, (branch, side)) in [(upper_branch, Sideband::Upper), (lower_branch, Sideband::Lower)]
        .into_iter()
        .enumerate()
    {
        let lane_refs = &prep.lanes.lane_fields[side_idx];
        let frames = &prep.lanes.frames[side_idx];
        // per-branch LO: ratio times the per-branch (half-sideband) signal power
        let p_side: f64 = lane_refs.iter().map(|f| f.power()).sum::<f64>()
            * launch_scale
            * launch_scale;
        let lo_amp = (ratio * p_side / 2.0).sqrt();

        let mut recon = Vec::with_capacity(2);
        let mut violations = [0u64; 2];
        let mut clips = [0u64; 2];
        for (b_idx, b) in [&branch.x, &branch.y].into_iter().enumerate() {
            let with_lo = add_lo(b, lo_amp);
            violations[b_idx] = winding_violation(&with_lo);
            let current = crate::receiver::photodetect(&with_lo);
            let sampled = adc(&current, sc.rx.adc_rate_hz)?;
            let (rec, diag) = kk_reconstruct(&sampled, &kk_cfg)?;
            clips[b_idx] = diag.clipped;
            // the minimum-phase solution for a lower-sideband branch is the
            // conjugate field; mirror it back
            let rec = match side {
                Sideband::Lower => rec.conjugate(),
                Sideband::Upper => rec,
            };
            let rec = cd_compensate(&rec, cd_total);
            let rec = remove_constant_phase(&rec)?;
            recon.push(zero_mean(&rec));
        }

        // training references: the transmitted lane fields, re-filtered by
        // the receiver de-interleaver and brought to the equalizer grid
        let rx_filter = flt.centered_at(match side {
            Sideband::Upper => sc.interleaver.offset_hz,
            Sideband::Lower => -sc.interleaver.offset_hz,
        });
        let mut truth = Vec::with_capacity(2);
        for lane in lane_refs {
            let f = apply_filter(lane, &rx_filter);
            truth.push(zero_mean(&resample_band_limited(&f, p2, q2)?));
        }

        let training = sc.training_symbols * 2;
        let (dx, dy, _m) = polmux_demux(
            (&recon[0], &recon[1]),
            (&truth[0], &truth[1]),
            training,
        )?;

        let gap_shift = match side {
            Sideband::Upper => -sc.gap_hz / 2.0,
            Sideband::Lower => sc.gap_hz / 2.0,
        };
        for (pol_idx, demuxed) in [dx, dy].into_iter().enumerate() {
            let lane = extract_real_lane(&demuxed, gap_shift)?;
            let report = decide_and_count(&lane, &frames[pol_idx], &pulse)?;
            outcomes.push(LaneOutcome {
                variant: 0,
                sideband: match side {
                    Sideband::Upper => "upper",
                    Sideband::Lower => "lower",
                },
                sideband_idx: side_idx as u8,
                pol: if pol_idx == 0 { "x" } else { "y" },
                pol_idx: pol_idx as u8,
                n_bits: report.n_bits,
                n_errors: report.n_errors,
                winding_violations: violations[pol_idx],
                clips: clips[pol_idx],
            });
        }
    }
    Ok(outcomes)
}

fn tskk_job(
    sc: &LinkScenario,
    axis: &[f64],
    ratio: f64,
    ratio_idx: usize,
    run: usize,
) -> Result<Vec<(usize, Vec<LaneOutcome>)>> {
    let prep = prepare_tskk(sc, ratio_idx, run)?;
    let chain_seed = mix_seeds(sc.base_seed, &[SALT_AMP, ratio_idx as u64, run as u64]);
    let pol_seed = mix_seeds(sc.base_seed, &[SALT_POL, ratio_idx as u64, run as u64]);
    let cd_total = sc.total_cd_ps_nm();

    let launch_scale = if sc.nonlinear {
        let p_launch = 10f64.powf((sc.launch_dbm - 30.0) / 10.0);
        (p_launch / prep.p_channel).sqrt()
    } else {
        1.0
    };
    let launched = scale_dual(&prep.tx, launch_scale);
    let propagated = if sc.nonlinear {
        propagate_link(sc, &launched, chain_seed)?
    } else {
        apply_cd_dual(&launched, cd_total)
    };
    let (rotated, _jones) = random_pol_rotation(&propagated, pol_seed);

    let mut out = Vec::with_capacity(axis.len());
    for (axis_idx, &osnr_db) in axis.iter().enumerate() {
        let noise_seed = mix_seeds(
            sc.base_seed,
            &[SALT_NOISE, axis_idx as u64, ratio_idx as u64, run as u64],
        );
        out.push((
            axis_idx,
            tskk_point(
                sc,
                &prep,
                &rotated,
                launch_scale,
                osnr_db,
                cd_total,
                ratio,
                noise_seed,
            )?,
        ));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Coherent 16-QAM baseline
// ---------------------------------------------------------------------------

struct QamTx {
    tx: DualPolSignal,
    /// Per polarization: the I and Q PAM frames.
    frames: [[SymbolFrame; 2]; 2],
    p_channel: f64,
}

fn prepare_qam(sc: &LinkScenario, ratio_idx: usize, run: usize) -> Result<QamTx> {
    let fs = sc.sim_rate_hz();
    let pulse = sc.pulse();
    let central = sc.n_wdm / 2;
    let mut channels = Vec::with_capacity(sc.n_wdm);
    let mut central_frames = None;
    let mut p_channel = 0.0;
    for ch in 0..sc.n_wdm {
        let mut pol_fields = Vec::with_capacity(2);
        let mut frames: Vec<[SymbolFrame; 2]> = Vec::with_capacity(2);
        for pol in 0..2u64 {
            let seed_i = mix_seeds(
                sc.base_seed,
                &[SALT_DATA, ratio_idx as u64, run as u64, ch as u64, pol, 0],
            );
            let seed_q = mix_seeds(
                sc.base_seed,
                &[SALT_DATA, ratio_idx as u64, run as u64, ch as u64, pol, 1],
            );
            let frame_i = make_frame(sc.n_symbols, 4, seed_i)?;
            let frame_q = make_frame(sc.n_symbols, 4, seed_q)?;
            let amps: Vec<Complex64> = frame_i
                .amplitudes()
                .iter()
                .zip(frame_q.amplitudes())
                .map(|(&i, q)| Complex64::new(i, q) / 2f64.sqrt())
                .collect();
            pol_fields.push(shape_impulses(&amps, &pulse, fs)?);
            frames.push([frame_i, frame_q]);
        }
        let y = pol_fields.pop().expect("y pol");
        let x = pol_fields.pop().expect("x pol");
        if ch == central {
            p_channel = x.power() + y.power();
            let fy = frames.pop().expect("y frames");
            let fx = frames.pop().expect("x frames");
            central_frames = Some([fx, fy]);
        }
        channels.push(polmux(x, y)?);
    }
    let tx = if sc.n_wdm > 1 {
        wdm_mux(&channels, sc.spacing_hz)?
    } else {
        channels.pop().expect("one channel")
    };
    Ok(QamTx {
        tx,
        frames: central_frames.expect("central frames"),
        p_channel,
    })
}

fn qam_job(
    sc: &LinkScenario,
    axis: &[f64],
    ratio_idx: usize,
    run: usize,
) -> Result<Vec<(usize, Vec<LaneOutcome>)>> {
    let pulse = sc.pulse();
    let prep = prepare_qam(sc, ratio_idx, run)?;
    let chain_seed = mix_seeds(sc.base_seed, &[SALT_AMP, ratio_idx as u64, run as u64]);
    let pol_seed = mix_seeds(sc.base_seed, &[SALT_POL, ratio_idx as u64, run as u64]);
    let cd_total = sc.total_cd_ps_nm();

    let launch_scale = if sc.nonlinear {
        let p_launch = 10f64.powf((sc.launch_dbm - 30.0) / 10.0);
        (p_launch / prep.p_channel).sqrt()
    } else {
        1.0
    };
    let launched = scale_dual(&prep.tx, launch_scale);
    let propagated = if sc.nonlinear {
        propagate_link(sc, &launched, chain_seed)?
    } else {
        apply_cd_dual(&launched, cd_total)
    };
    let (rotated, jones) = random_pol_rotation(&propagated, pol_seed);
    let p_sig = prep.p_channel * launch_scale * launch_scale;
    let (p2, q2) = rate_ratio(sc.sim_rate_hz(), 2.0 * sc.baud_hz)?;
    let half_bw = pulse.occupied_bw_hz() / 2.0;

    let mut out = Vec::with_capacity(axis.len());
    for (axis_idx, &osnr_db) in axis.iter().enumerate() {
        let noise_seed = mix_seeds(
            sc.base_seed,
            &[SALT_NOISE, axis_idx as u64, ratio_idx as u64, run as u64],
        );
        let spec = NoiseSpec {
            osnr_db,
            ref_bw_hz: sc.noise.ref_bw_hz,
            exclude_bias: true,
        };
        let noisy = match sc.noise.mode {
            NoiseMode::TargetOsnr => load_noise_to_osnr_dual(&rotated, &spec, p_sig, noise_seed)?,
            NoiseMode::AmplifierChain => rotated.clone(),
        };
        // ideal receiver: the rotation is known exactly
        let aligned = jones.dagger().apply(&noisy);
        let mut outcomes = Vec::new();
        for (pol_idx, field) in [&aligned.x, &aligned.y].into_iter().enumerate() {
            // channel select, then bring to the equalizer grid
            let selected = map_spectrum(field, |f, v| {
                if f.abs() <= half_bw * (1.0 + 1e-12) {
                    v
                } else {
                    Complex64::ZERO
                }
            });
            let eq = cd_compensate(&resample_band_limited(&selected, p2, q2)?, cd_total);
            // constant-phase recovery: the Kerr effect leaves a common
            // rotation that the known symbol stream pins down exactly
            let mut corr = Complex64::ZERO;
            for (k, (fi, fq)) in prep.frames[pol_idx][0]
                .amplitudes()
                .iter()
                .zip(prep.frames[pol_idx][1].amplitudes())
                .enumerate()
            {
                let reference = Complex64::new(*fi, fq) / 2f64.sqrt();
                corr += eq.samples()[k * 2] * reference.conj();
            }
            let derot = Complex64::from_polar(1.0, -corr.arg());
            let eq = ComplexSignal::new(
                eq.samples().iter().map(|s| s * derot).collect(),
                eq.sample_rate_hz(),
                eq.center_freq_hz(),
            )?;
            let mut bits = 0u64;
            let mut errors = 0u64;
            for (lane_idx, part) in [0usize, 1].into_iter().enumerate() {
                let lane = ComplexSignal::from_real(
                    eq.samples()
                        .iter()
                        .map(|s| if part == 0 { s.re } else { s.im })
                        .collect(),
                    eq.sample_rate_hz(),
                    0.0,
                )?;
                let report =
                    decide_and_count(&lane, &prep.frames[pol_idx][lane_idx], &pulse)?;
                bits += report.n_bits;
                errors += report.n_errors;
            }
            outcomes.push(LaneOutcome {
                variant: 0,
                sideband: "iq",
                sideband_idx: 0,
                pol: if pol_idx == 0 { "x" } else { "y" },
                pol_idx: pol_idx as u8,
                n_bits: bits,
                n_errors: errors,
                winding_violations: 0,
                clips: 0,
            });
        }
        out.push((axis_idx, outcomes));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Sweep orchestration
// ---------------------------------------------------------------------------

fn scheme_label(sc: &LinkScenario, axis_name: &str, variant: u8) -> String {
    match sc.scheme {
        Scheme::KkpamSsb => {
            let variants = kkpam_variants(sc, axis_name);
            let v = variants
                .get(variant as usize)
                .copied()
                .unwrap_or(CdCompensation::Digital);
            let tag = match v {
                CdCompensation::Optical => "optical",
                _ => "digital",
            };
            format!("{}:{}", sc.scheme.label(), tag)
        }
        _ => sc.scheme.label().to_string(),
    }
}

/// Analytic BER reference for an OSNR sweep.
fn theory_curve(sc: &LinkScenario, axis_name: &str, axis: &[f64]) -> Vec<TheoryPoint> {
    if axis_name != "osnr_db" {
        return Vec::new();
    }
    let (m, kind, mode) = match sc.scheme {
        Scheme::KkpamSsb => (
            sc.modulation_order,
            BerKind::PamCoherent,
            SnrBookkeeping::SinglePolLane,
        ),
        Scheme::TwoSidedPolmux => (
            sc.modulation_order,
            BerKind::PamCoherent,
            SnrBookkeeping::DualPolTwoSidedLane,
        ),
        Scheme::CoherentQam16 => (16, BerKind::QamCoherent, SnrBookkeeping::DualPolQam),
    };
    axis.iter()
        .map(|&osnr_db| TheoryPoint {
            axis_value: osnr_db,
            ber: analytic_ber(
                m,
                osnr_to_symbol_snr(osnr_db, sc.noise.ref_bw_hz, sc.baud_hz, mode),
                kind,
            ),
        })
        .collect()
}

/// Runs one scenario: every (axis value, ratio) pair, `n_runs` seeded runs,
/// aggregated into one row per (axis value, ratio, variant, sideband,
/// polarization).
pub fn run_scenario(sc: &LinkScenario) -> Result<SweepResult> {
    sc.validate()?;
    let (axis_name, axis) = sc.axis()?;
    if sc.noise.mode == NoiseMode::AmplifierChain && axis_name == "osnr_db" && axis.len() > 1 {
        return Err(Error::Config(
            "amplifier-chain noise sets its own OSNR; use a cd sweep or a single-point axis".into(),
        ));
    }
    let started = Instant::now();

    let jobs: Vec<(usize, usize)> = (0..sc.bias_or_lo_ratio.len())
        .flat_map(|r| (0..sc.n_runs).map(move |run| (r, run)))
        .collect();

    let results: Result<Vec<_>> = jobs
        .par_iter()
        .map(|&(ratio_idx, run)| {
            let ratio = sc.bias_or_lo_ratio[ratio_idx];
            let per_axis = match sc.scheme {
                Scheme::KkpamSsb => kkpam_job(sc, axis_name, &axis, ratio, ratio_idx, run)?,
                Scheme::TwoSidedPolmux => tskk_job(sc, &axis, ratio, ratio_idx, run)?,
                Scheme::CoherentQam16 => qam_job(sc, &axis, ratio_idx, run)?,
            };
            Ok((ratio_idx, per_axis))
        })
        .collect();
    let results = results?;

    // ordered aggregation: BTreeMap keyed by (axis, ratio, variant, sideband, pol)
    #[derive(Default, Clone)]
    struct Acc {
        bits: u64,
        errors: u64,
        violations: u64,
        clips: u64,
        sideband: &'static str,
        pol: &'static str,
    }
    let mut acc: BTreeMap<(usize, usize, u8, u8, u8), Acc> = BTreeMap::new();
    for (ratio_idx, per_axis) in results {
        for (axis_idx, outcomes) in per_axis {
            for o in outcomes {
                let entry = acc
                    .entry((axis_idx, ratio_idx, o.variant, o.sideband_idx, o.pol_idx))
                    .or_default();
                entry.bits += o.n_bits;
                entry.errors += o.n_errors;
                entry.violations += o.winding_violations;
                entry.clips += o.clips;
                entry.sideband = o.sideband;
                entry.pol = o.pol;
            }
        }
    }

    let rows: Vec<SweepRow> = acc
        .into_iter()
        .map(|((axis_idx, ratio_idx, variant, _sb, _pol), a)| SweepRow {
            axis_name,
            axis_value: axis[axis_idx],
            ratio: sc.bias_or_lo_ratio[ratio_idx],
            scheme_label: scheme_label(sc, axis_name, variant),
            sideband: a.sideband,
            polarization: a.pol,
            n_bits: a.bits,
            n_errors: a.errors,
            ber: if a.bits > 0 {
                a.errors as f64 / a.bits as f64
            } else {
                0.0
            },
            min_phase_violations: a.violations,
            clip_count: a.clips,
            seed_base: sc.base_seed,
        })
        .collect();

    Ok(SweepResult {
        scenario: sc.clone(),
        axis_name,
        rows,
        theory: theory_curve(sc, axis_name, &axis),
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}
