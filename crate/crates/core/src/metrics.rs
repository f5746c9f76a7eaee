//! Evaluation metrics over predicted and reference trajectories.
//!
//! RMSE and MAE aggregate over every entry (trajectories × time × channels ×
//! space). PCC is taken per snapshot over the jointly flattened channels.
//! HCT is computed per trajectory, then averaged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pde::Field;

/// Correlation level above which a snapshot counts toward HCT.
pub const HCT_THRESHOLD: f64 = 0.8;

fn same_len(op: &'static str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch {
            op,
            dim: "length",
            expected: a,
            got: b,
        });
    }
    Ok(())
}

fn same_fields(op: &'static str, pred: &[Field], truth: &[Field]) -> Result<()> {
    same_len(op, truth.len(), pred.len())?;
    for (p, t) in pred.iter().zip(truth) {
        if p.shape() != t.shape() {
            return Err(Error::InvalidArgument(format!(
                "{op}: snapshot shape {:?} vs {:?}",
                p.shape(),
                t.shape()
            )));
        }
    }
    Ok(())
}

/// Running sums of squared and absolute errors.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorSums {
    pub sum_sq: f64,
    pub sum_abs: f64,
    pub count: usize,
}

impl ErrorSums {
    pub fn add_slices(&mut self, pred: &[f64], truth: &[f64]) {
        for (p, t) in pred.iter().zip(truth) {
            let d = p - t;
            self.sum_sq += d * d;
            self.sum_abs += d.abs();
        }
        self.count += pred.len();
    }

    pub fn merge(&mut self, other: &ErrorSums) {
        self.sum_sq += other.sum_sq;
        self.sum_abs += other.sum_abs;
        self.count += other.count;
    }

    pub fn rmse(&self) -> f64 {
        (self.sum_sq / self.count as f64).sqrt()
    }

    pub fn mae(&self) -> f64 {
        self.sum_abs / self.count as f64
    }
}

fn sums(op: &'static str, pred: &[f64], truth: &[f64]) -> Result<ErrorSums> {
    same_len(op, truth.len(), pred.len())?;
    if pred.is_empty() {
        return Err(Error::InvalidArgument(format!("{op}: empty input")));
    }
    let mut s = ErrorSums::default();
    s.add_slices(pred, truth);
    Ok(s)
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    Ok(sums("rmse", pred, truth)?.rmse())
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    Ok(sums("mae", pred, truth)?.mae())
}

/// Error sums over a sequence of snapshots.
pub fn field_errors(pred: &[Field], truth: &[Field]) -> Result<ErrorSums> {
    same_fields("field_errors", pred, truth)?;
    let mut s = ErrorSums::default();
    for (p, t) in pred.iter().zip(truth) {
        s.add_slices(p.data(), t.data());
    }
    Ok(s)
}

/// Pearson correlation. If exactly one input is constant the correlation is
/// taken as 0; if both are, it is undefined.
pub fn pcc(a: &[f64], b: &[f64]) -> Result<f64> {
    same_len("pcc", a.len(), b.len())?;
    if a.len() < 2 {
        return Err(Error::InvalidArgument(format!("pcc needs at least 2 values, got {}", a.len())));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    match (va > 0.0, vb > 0.0) {
        (false, false) => Err(Error::UndefinedCorrelation),
        (true, true) => Ok((cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0)),
        _ => Ok(0.0),
    }
}

/// `Σ_i dt · 1(pcc(pred_i, truth_i) > threshold)`.
pub fn hct(pred: &[Field], truth: &[Field], dt: f64, threshold: f64) -> Result<f64> {
    same_fields("hct", pred, truth)?;
    let mut total = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        if pcc(p.data(), t.data())? > threshold {
            total += dt;
        }
    }
    Ok(total)
}

/// `(i·dt, RMSE_i)` for every snapshot `i`.
pub fn error_curve(pred: &[Field], truth: &[Field], dt: f64) -> Result<Vec<(f64, f64)>> {
    same_fields("error_curve", pred, truth)?;
    Ok(pred
        .iter()
        .zip(truth)
        .enumerate()
        .map(|(i, (p, t))| {
            let mut s = ErrorSums::default();
            s.add_slices(p.data(), t.data());
            (i as f64 * dt, s.rmse())
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport {
    pub index: usize,
    /// Predicted steps compared against the reference.
    pub steps: usize,
    /// Step at which the rollout became non-finite, if it did.
    pub blow_up_step: Option<usize>,
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    pub hct: Option<f64>,
    /// RMSE at `t = 0, dt, 2dt, ...`, starting from the initial condition.
    pub curve: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub checkpoint: String,
    pub dataset: String,
    pub dt: f64,
    pub threshold: f64,
    /// Aggregates are `None` when any trajectory blew up.
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    pub hct: Option<f64>,
    pub trajectories: Vec<TrajectoryReport>,
}

/// A model rollout for one reference trajectory: the predicted states
/// (initial condition first) or the step at which it blew up.
pub enum Rollout {
    Complete(Vec<Field>),
    BlowUp(usize),
}

impl EvalReport {
    /// Metrics for rollouts compared with their references. The initial
    /// condition is shared and excluded from RMSE, MAE and HCT, but kept as
    /// the first point of each error curve.
    pub fn build(
        checkpoint: impl Into<String>,
        dataset: impl Into<String>,
        dt: f64,
        threshold: f64,
        rollouts: &[(Rollout, &[Field])],
    ) -> Result<Self> {
        let mut all = ErrorSums::default();
        let mut hcts = Vec::new();
        let mut trajectories = Vec::new();
        for (index, (rollout, truth)) in rollouts.iter().enumerate() {
            let steps = truth.len().saturating_sub(1);
            let report = match rollout {
                Rollout::BlowUp(step) => TrajectoryReport {
                    index,
                    steps,
                    blow_up_step: Some(*step),
                    rmse: None,
                    mae: None,
                    hct: None,
                    curve: Vec::new(),
                },
                Rollout::Complete(pred) => {
                    same_fields("evaluate", pred, truth)?;
                    if steps == 0 {
                        return Err(Error::InvalidArgument(format!(
                            "trajectory {index} has no snapshots after the initial condition"
                        )));
                    }
                    let errs = field_errors(&pred[1..], &truth[1..])?;
                    all.merge(&errs);
                    let h = hct(&pred[1..], &truth[1..], dt, threshold)?;
                    hcts.push(h);
                    TrajectoryReport {
                        index,
                        steps,
                        blow_up_step: None,
                        rmse: Some(errs.rmse()),
                        mae: Some(errs.mae()),
                        hct: Some(h),
                        curve: error_curve(pred, truth, dt)?.into_iter().map(|(_, e)| e).collect(),
                    }
                }
            };
            trajectories.push(report);
        }
        let complete = !trajectories.is_empty() && trajectories.iter().all(|t| t.blow_up_step.is_none());
        Ok(EvalReport {
            checkpoint: checkpoint.into(),
            dataset: dataset.into(),
            dt,
            threshold,
            rmse: complete.then(|| all.rmse()),
            mae: complete.then(|| all.mae()),
            hct: complete.then(|| hcts.iter().sum::<f64>() / hcts.len() as f64),
            trajectories,
        })
    }

    /// Error curves as CSV: `t` then one RMSE column per trajectory. Blown-up
    /// trajectories are left empty.
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("t");
        for t in &self.trajectories {
            out.push_str(&format!(",rmse_{}", t.index));
        }
        out.push('\n');
        let rows = self.trajectories.iter().map(|t| t.curve.len()).max().unwrap_or(0);
        for i in 0..rows {
            out.push_str(&format!("{}", i as f64 * self.dt));
            for t in &self.trajectories {
                out.push(',');
                if let Some(e) = t.curve.get(i) {
                    out.push_str(&format!("{e}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn field(data: Vec<f64>) -> Field {
        let n = data.len();
        Field::new(1, 1, n, data).unwrap()
    }

    #[test]
    fn unit_examples() {
        assert_eq!((rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap()), (0.0, 0.0));
        let t = [0.0; 4];
        let p = [1.0, -1.0, 1.0, -1.0];
        assert_eq!((rmse(&p, &t).unwrap(), mae(&p, &t).unwrap()), (1.0, 1.0));
        assert!((rmse(&[0.0, 2.0], &[0.0, 0.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(mae(&[0.0, 2.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());

        let a = [0.3, -1.0, 2.5, 0.0];
        assert!((pcc(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = a.iter().map(|x| -x).collect();
        assert!((pcc(&a, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!((pcc(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(pcc(&[1.0, 1.0], &[2.0, 2.0]), Err(Error::UndefinedCorrelation)));
        assert_eq!(pcc(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert!(pcc(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn hct_examples() {
        let truth: Vec<Field> = (0..5).map(|i| field(vec![0.0, 1.0, i as f64, -2.0])).collect();
        assert!((hct(&truth, &truth, 0.5, HCT_THRESHOLD).unwrap() - 2.5).abs() < 1e-15);
        let neg: Vec<Field> = truth
            .iter()
            .map(|f| field(f.data().iter().map(|x| -x).collect()))
            .collect();
        assert_eq!(hct(&neg, &truth, 0.5, HCT_THRESHOLD).unwrap(), 0.0);
        // A perfect Burgers prediction over the full test window [0, 3.216]
        // at dt = 0.001 reaches the end of the data.
        let window: Vec<Field> = (0..3216).map(|i| field(vec![i as f64, 0.0, 1.0])).collect();
        assert!((hct(&window, &window, 0.001, HCT_THRESHOLD).unwrap() - 3.216).abs() < 1e-9);
    }

    #[test]
    fn error_curve_examples() {
        let truth: Vec<Field> = (0..4).map(|i| field(vec![i as f64, 1.0, 2.0])).collect();
        assert!(error_curve(&truth, &truth, 0.1).unwrap().iter().all(|&(_, e)| e == 0.0));
        let biased: Vec<Field> = truth
            .iter()
            .map(|f| field(f.data().iter().map(|x| x - 0.25).collect()))
            .collect();
        let curve = error_curve(&biased, &truth, 0.1).unwrap();
        assert!(curve.iter().all(|&(_, e)| (e - 0.25).abs() < 1e-15));
        assert!((curve[3].0 - 0.3).abs() < 1e-15);
    }

    #[test]
    fn curve_mean_matches_recomputation() {
        let truth: Vec<Field> = (0..6).map(|i| field((0..8).map(|j| ((i * 8 + j) as f64).sin()).collect())).collect();
        let pred: Vec<Field> = (0..6).map(|i| field((0..8).map(|j| ((i * 8 + j) as f64).cos()).collect())).collect();
        let curve = error_curve(&pred, &truth, 1.0).unwrap();
        let mean = curve.iter().map(|c| c.1).sum::<f64>() / 6.0;
        let direct = (0..6)
            .map(|i| {
                let s: f64 = (0..8)
                    .map(|j| {
                        let k = (i * 8 + j) as f64;
                        (k.cos() - k.sin()).powi(2)
                    })
                    .sum();
                (s / 8.0).sqrt()
            })
            .sum::<f64>()
            / 6.0;
        assert!((mean - direct).abs() < 1e-12);
    }

    #[test]
    fn report_aggregates_and_blow_ups() {
        let truth: Vec<Field> = (0..3).map(|i| field(vec![i as f64, 1.0, -1.0])).collect();
        let shifted: Vec<Field> = truth
            .iter()
            .enumerate()
            .map(|(i, f)| field(f.data().iter().map(|x| x + if i == 0 { 0.0 } else { 2.0 }).collect()))
            .collect();
        let report = EvalReport::build(
            "ck",
            "ds",
            0.5,
            HCT_THRESHOLD,
            &[(Rollout::Complete(truth.clone()), &truth), (Rollout::Complete(shifted), &truth)],
        )
        .unwrap();
        // Zero error on 6 entries and 2 on 6 entries.
        assert!((report.rmse.unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(report.mae.unwrap(), 1.0);
        assert_eq!(report.hct.unwrap(), 1.0);
        assert_eq!(report.trajectories[1].curve, vec![0.0, 2.0, 2.0]);
        let csv = report.curves_csv();
        assert_eq!(csv.lines().next().unwrap(), "t,rmse_0,rmse_1");
        assert_eq!(csv.lines().nth(2).unwrap(), "0.5,0,2");

        let broken = EvalReport::build(
            "ck",
            "ds",
            0.5,
            HCT_THRESHOLD,
            &[(Rollout::Complete(truth.clone()), &truth), (Rollout::BlowUp(1), &truth)],
        )
        .unwrap();
        assert_eq!((broken.rmse, broken.hct), (None, None));
        assert_eq!(broken.trajectories[1].blow_up_step, Some(1));
        let json = serde_json::to_value(&broken).unwrap();
        assert!(json["rmse"].is_null());
    }

    fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..40).prop_flat_map(|n| {
            (
                proptest::collection::vec(-10.0f64..10.0, n),
                proptest::collection::vec(-10.0f64..10.0, n),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn rmse_dominates_mae((a, b) in pair()) {
            let (r, m) = (rmse(&a, &b).unwrap(), mae(&a, &b).unwrap());
            prop_assert!(m >= 0.0);
            prop_assert!(r >= m * (1.0 - 1e-12));
        }
    }

    proptest! {
        #[test]
        fn pcc_is_affine_invariant((a, b) in pair(), alpha in 0.01f64..100.0, beta in -50.0f64..50.0) {
            let base = pcc(&a, &b);
            prop_assume!(base.is_ok());
            let scaled: Vec<f64> = a.iter().map(|x| alpha * x + beta).collect();
            prop_assert!((pcc(&scaled, &b).unwrap() - base.unwrap()).abs() < 1e-12);
        }

        #[test]
        fn hct_is_monotone_in_threshold(
            seqs in proptest::collection::vec(pair(), 1..8).prop_map(|v| {
                let n = v[0].0.len();
                v.into_iter().filter(|(a, _)| a.len() == n).collect::<Vec<_>>()
            }),
            t1 in -1.0f64..1.0,
            t2 in -1.0f64..1.0,
        ) {
            let (lo, hi) = (t1.min(t2), t1.max(t2));
            let pred: Vec<Field> = seqs.iter().map(|(a, _)| field(a.clone())).collect();
            let truth: Vec<Field> = seqs.iter().map(|(_, b)| field(b.clone())).collect();
            prop_assert!(hct(&pred, &truth, 0.1, hi).unwrap() <= hct(&pred, &truth, 0.1, lo).unwrap());
        }

        #[test]
        fn metrics_ignore_shared_permutations((a, b) in pair(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut perm: Vec<usize> = (0..a.len()).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let pa: Vec<f64> = perm.iter().map(|&i| a[i]).collect();
            let pb: Vec<f64> = perm.iter().map(|&i| b[i]).collect();
            prop_assert!((rmse(&pa, &pb).unwrap() - rmse(&a, &b).unwrap()).abs() < 1e-12);
            prop_assert!((mae(&pa, &pb).unwrap() - mae(&a, &b).unwrap()).abs() < 1e-12);
            prop_assert!((pcc(&pa, &pb).unwrap() - pcc(&a, &b).unwrap()).abs() < 1e-12);
            let (fa, fb) = ([field(a.clone())], [field(b.clone())]);
            let (ga, gb) = ([field(pa)], [field(pb)]);
            prop_assert_eq!(hct(&fa, &fb, 1.0, 0.5).unwrap(), hct(&ga, &gb, 1.0, 0.5).unwrap());
        }
    }
}
