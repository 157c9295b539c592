//! Headered CSV series for the reference figures.

use std::fmt::Write as _;

use crate::dataset::sample_challenges;
use crate::entropy::{Challenge, EnvironmentCondition, InstanceConfig, NoiseModel};
use crate::error::{Error, Result};
use crate::metrics::{
    ber_sweep, centered_histogram, exact_failure_probability, margin_threshold, toggle_gaps,
    uniformity, ResponseSet,
};
use crate::puf::{ApufInstance, Architecture, NmqRoInstance, Puf};
use crate::sensitivity::SensitivityGrid;

/// Failure probability against CRP count for each BER, under the 5 %-below
/// threshold rule. Columns: `ber,n_crps,threshold,failure_probability`.
pub fn fig2_csv(bers: &[f64], max_crps: u64, step: u64) -> Result<String> {
    if step == 0 || max_crps == 0 {
        return Err(Error::InvalidConfig(
            "CRP step and maximum must be >= 1".into(),
        ));
    }
    let mut s = String::from("ber,n_crps,threshold,failure_probability\n");
    for &ber in bers {
        if !(0.0..=1.0).contains(&ber) {
            return Err(Error::InvalidConfig(format!("ber {ber} outside [0, 1]")));
        }
        let mut n = step;
        while n <= max_crps {
            let t = margin_threshold(ber, n);
            let _ = writeln!(
                s,
                "{ber},{n},{t},{:.6e}",
                exact_failure_probability(ber, n, t)
            );
            n += step;
        }
    }
    Ok(s)
}

/// NMQ-RO quantizer input and output per challenge, sorted by ratio.
/// Columns: `challenge,ratio,scaled,toggle_count,response`.
pub fn fig3_nmq_csv(puf: &NmqRoInstance, challenges: &[Challenge]) -> Result<String> {
    let env = EnvironmentCondition::enrollment();
    let noise = NoiseModel::none();
    let mut rows: Vec<(Challenge, crate::puf::QuantizerTrace)> = challenges
        .iter()
        .map(|c| Ok((*c, puf.trace(c, &env, &noise, 0)?)))
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| a.1.ratio.total_cmp(&b.1.ratio));
    let mut s = String::from("challenge,ratio,scaled,toggle_count,response\n");
    for (c, t) in rows {
        let _ = writeln!(
            s,
            "{c},{:.9},{:.6},{},{}",
            t.ratio,
            t.scaled,
            t.toggle_count,
            u8::from(t.response)
        );
    }
    Ok(s)
}

/// Arbiter delay difference (ps) and response per challenge, sorted by
/// difference. Columns: `challenge,difference_ps,response`.
pub fn fig3_apuf_csv(puf: &ApufInstance, challenges: &[Challenge]) -> Result<String> {
    let env = EnvironmentCondition::enrollment();
    let noise = NoiseModel::none();
    let mut rows: Vec<(Challenge, f64)> = challenges
        .iter()
        .map(|c| Ok((*c, puf.delay_difference(c, &env, &noise, 0)?)))
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut s = String::from("challenge,difference_ps,response\n");
    for (c, d) in rows {
        let _ = writeln!(
            s,
            "{c},{:.6},{}",
            d / crate::entropy::PICOSECOND,
            u8::from(d < 0.0)
        );
    }
    Ok(s)
}

/// BER of NMQ-RO against temperature for several trap counter values.
/// Columns: `g,temperature,ber`.
pub fn fig5_ber_csv(
    config: &InstanceConfig,
    gs: &[u32],
    temperatures: &[f64],
    crps: u64,
    evals: usize,
    challenge_seed: u64,
) -> Result<String> {
    let challenges = sample_challenges(config.n, crps, challenge_seed)?;
    let noise = config.noise();
    let mut s = String::from("g,temperature,ber\n");
    for &g in gs {
        let puf = Architecture::NmqRo { g }.build(config)?;
        let enrolled = ResponseSet::enroll(format!("g={g}"), &puf, &challenges, &noise)?;
        let report = ber_sweep(&puf, &enrolled, temperatures, &noise, evals)?;
        for p in report.points {
            let _ = writeln!(s, "{g},{},{:.6}", p.temperature, p.error_ratio());
        }
    }
    Ok(s)
}

/// Per-instance uniformity for several trap counter values, showing how the
/// spread across instances narrows as `g` grows. Columns: `g,instance_seed,uniformity`.
pub fn fig5_uniformity_csv(
    config: &InstanceConfig,
    gs: &[u32],
    instances: u64,
    crps: u64,
    challenge_seed: u64,
) -> Result<String> {
    let challenges = sample_challenges(config.n, crps, challenge_seed)?;
    let mut s = String::from("g,instance_seed,uniformity\n");
    for &g in gs {
        for i in 0..instances {
            let cfg = config.with_seed(config.seed.wrapping_add(i));
            let puf = Architecture::NmqRo { g }.build(&cfg)?;
            let rs = ResponseSet::enroll("u", &puf, &challenges, &NoiseModel::none())?;
            let _ = writeln!(s, "{g},{},{:.6}", cfg.seed, uniformity(&rs)?);
        }
    }
    Ok(s)
}

/// Histogram of `g - toggle_count`, centered on its rounded mean, per `g`.
/// Columns: `g,centered_gap,count`.
pub fn fig7_csv(
    config: &InstanceConfig,
    gs: &[u32],
    crps: u64,
    challenge_seed: u64,
) -> Result<String> {
    let challenges = sample_challenges(config.n, crps, challenge_seed)?;
    let entropy = config.instance()?;
    let env = EnvironmentCondition::enrollment();
    let mut s = String::from("g,centered_gap,count\n");
    for &g in gs {
        let inst = NmqRoInstance::new(entropy.clone(), g)?;
        let gaps = toggle_gaps(&inst, &challenges, &env, &NoiseModel::none(), 0)?;
        for (gap, count) in centered_histogram(&gaps) {
            let _ = writeln!(s, "{g},{gap},{count}");
        }
    }
    Ok(s)
}

/// Contour grid rows `alpha,beta,f`.
pub fn fig10_csv(grid: &SensitivityGrid) -> String {
    grid.to_csv()
}

/// Number of response alternations along the challenges sorted by `key`.
pub fn alternations<P: Puf>(
    puf: &P,
    challenges: &[Challenge],
    key: impl Fn(&Challenge) -> Result<f64>,
) -> Result<usize> {
    let env = EnvironmentCondition::enrollment();
    let noise = NoiseModel::none();
    let mut rows: Vec<(f64, bool)> = challenges
        .iter()
        .map(|c| Ok((key(c)?, puf.eval(c, &env, &noise, 0)?)))
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(rows.windows(2).filter(|w| w[0].1 != w[1].1).count())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig2_rows_and_reference_point() {
        let csv = fig2_csv(&[0.1, 0.2], 400, 200).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[2].starts_with("0.1,400,340,"));
        let p: f64 = lines[1].rsplit(',').next().unwrap().parse().unwrap();
        assert!((0.005..=0.02).contains(&p), "{p}");
        assert!(fig2_csv(&[1.5], 10, 1).is_err());
        assert!(fig2_csv(&[0.1], 10, 0).is_err());
    }

    #[test]
    fn fig3_nmq_rows_are_sorted_and_consistent() {
        let cfg = InstanceConfig::desk();
        let inst = NmqRoInstance::new(cfg.instance().unwrap(), 400).unwrap();
        let cs = sample_challenges(32, 200, 1).unwrap();
        let csv = fig3_nmq_csv(&inst, &cs).unwrap();
        let rows: Vec<Vec<&str>> = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').collect())
            .collect();
        assert_eq!(rows.len(), 200);
        let ratios: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
        assert!(ratios.windows(2).all(|w| w[0] <= w[1]));
        for r in &rows {
            let count: u64 = r[3].parse().unwrap();
            assert_eq!(r[4], if count % 2 == 1 { "1" } else { "0" });
        }
    }

    #[test]
    fn fig3_apuf_responses_follow_sign() {
        let cfg = InstanceConfig::desk();
        let inst = ApufInstance::new(cfg.instance().unwrap());
        let cs = sample_challenges(32, 300, 2).unwrap();
        let csv = fig3_apuf_csv(&inst, &cs).unwrap();
        for line in csv.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            let d: f64 = f[1].parse().unwrap();
            assert_eq!(f[2] == "1", d < 0.0, "{line}");
        }
        let apuf = Architecture::Apuf.build(&cfg).unwrap();
        let n = alternations(&apuf, &cs, |c| {
            inst.delay_difference(
                c,
                &EnvironmentCondition::enrollment(),
                &NoiseModel::none(),
                0,
            )
        })
        .unwrap();
        assert_eq!(n, 1);
    }

    #[test]
    fn fig7_counts_sum_to_crps() {
        let cfg = InstanceConfig::desk();
        let csv = fig7_csv(&cfg, &[100, 800], 500, 3).unwrap();
        for g in ["100", "800"] {
            let total: usize = csv
                .lines()
                .skip(1)
                .filter(|l| l.split(',').next() == Some(g))
                .map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap())
                .sum();
            assert_eq!(total, 500);
        }
    }

    #[test]
    fn fig5_shapes() {
        let cfg = InstanceConfig::desk();
        let ber = fig5_ber_csv(&cfg, &[100, 200], &[0.0, 20.0], 200, 5, 1).unwrap();
        assert_eq!(ber.lines().count(), 5);
        let uni = fig5_uniformity_csv(&cfg, &[100], 3, 200, 1).unwrap();
        assert_eq!(uni.lines().count(), 4);
    }
}
