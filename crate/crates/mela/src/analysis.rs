//! Post-hoc analysis of evaluation logs: per-mode expert activation
//! matrices, labelled high-dimensional exports for external embedding, and
//! learning-curve comparisons between architectures.

use crate::env::ModeLabel;
use crate::error::{Error, Result};
use crate::sac::EpisodeMetrics;
use serde::{Deserialize, Serialize};

/// One activation-log row: the gate weights at one evaluation step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActivationRow {
    pub step: usize,
    pub mode: ModeLabel,
    pub alpha: Vec<f64>,
}

/// Mean gate activation per task mode: rows are modes, columns experts.
/// Each row lies on the simplex.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActivationMatrix {
    pub modes: Vec<ModeLabel>,
    pub num_experts: usize,
    /// Row-major mode-by-expert means.
    pub values: Vec<f64>,
    /// Steps aggregated per mode.
    pub counts: Vec<usize>,
}

impl ActivationMatrix {
    /// Aggregate logged rows by mode label.
    pub fn from_rows(rows: &[ActivationRow]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::contract("activation_matrix", "no labelled activation rows"))?;
        let n = first.alpha.len();
        let modes = [ModeLabel::Recovery, ModeLabel::Rhythmic, ModeLabel::GoalTracking];
        let mut sums = vec![vec![0.0; n]; modes.len()];
        let mut counts = vec![0usize; modes.len()];
        for row in rows {
            if row.alpha.len() != n {
                return Err(Error::shape(
                    "activation_matrix",
                    format!("row of {} weights vs {}", row.alpha.len(), n),
                ));
            }
            let sum: f64 = row.alpha.iter().sum();
            if (sum - 1.0).abs() > 1e-6 || row.alpha.iter().any(|&a| !(0.0..=1.0).contains(&a)) {
                return Err(Error::contract(
                    "activation_matrix",
                    format!("logged weights off the simplex (sum {sum})"),
                ));
            }
            let mi = modes.iter().position(|&m| m == row.mode).expect("known mode");
            for (s, a) in sums[mi].iter_mut().zip(&row.alpha) {
                *s += a;
            }
            counts[mi] += 1;
        }
        let mut out_modes = Vec::new();
        let mut values = Vec::new();
        let mut out_counts = Vec::new();
        for (mi, mode) in modes.iter().enumerate() {
            if counts[mi] == 0 {
                continue;
            }
            out_modes.push(*mode);
            out_counts.push(counts[mi]);
            values.extend(sums[mi].iter().map(|s| s / counts[mi] as f64));
        }
        Ok(ActivationMatrix {
            modes: out_modes,
            num_experts: n,
            values,
            counts: out_counts,
        })
    }

    pub fn row(&self, mode: ModeLabel) -> Option<&[f64]> {
        let i = self.modes.iter().position(|&m| m == mode)?;
        Some(&self.values[i * self.num_experts..(i + 1) * self.num_experts])
    }

    /// Index of the strictly largest activation per mode row; `None` when
    /// the maximum is tied.
    pub fn dominant_expert(&self, mode: ModeLabel) -> Option<usize> {
        let row = self.row(mode)?;
        let (mut best, mut best_v, mut strict) = (0usize, f64::NEG_INFINITY, false);
        for (i, &v) in row.iter().enumerate() {
            if v > best_v {
                best = i;
                best_v = v;
                strict = true;
            } else if v == best_v {
                strict = false;
            }
        }
        strict.then_some(best)
    }

    /// Top-two experts per mode, by mean activation.
    pub fn top_two(&self, mode: ModeLabel) -> Option<[usize; 2]> {
        let row = self.row(mode)?;
        let mut idx: Vec<usize> = (0..row.len()).collect();
        idx.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).expect("finite activations"));
        Some([idx[0], idx[1]])
    }

    /// CSV rendering: header `mode,steps,expert_1..expert_N`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("mode,steps");
        for k in 0..self.num_experts {
            out.push_str(&format!(",expert_{}", k + 1));
        }
        out.push('\n');
        for (i, mode) in self.modes.iter().enumerate() {
            out.push_str(&format!("{},{}", mode.name(), self.counts[i]));
            for v in &self.values[i * self.num_experts..(i + 1) * self.num_experts] {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    /// Table of the top-two dominant experts per mode (1-based indices).
    pub fn dominance_csv(&self) -> String {
        let mut out = String::from("mode,first_expert,second_expert\n");
        for mode in &self.modes {
            if let Some([a, b]) = self.top_two(*mode) {
                out.push_str(&format!("{},{},{}\n", mode.name(), a + 1, b + 1));
            }
        }
        out
    }
}

/// Labelled vector export for external embedding: one row per evaluation
/// step with the action vector, the gate weights, and the labels.
pub fn embedding_csv(rows: &[(usize, ModeLabel, Vec<f64>, Vec<f64>)]) -> String {
    let (n_action, n_alpha) = rows
        .first()
        .map(|(_, _, a, w)| (a.len(), w.len()))
        .unwrap_or((0, 0));
    let mut out = String::from("step,mode,dominant_expert");
    for j in 0..n_action {
        out.push_str(&format!(",action_{j}"));
    }
    for k in 0..n_alpha {
        out.push_str(&format!(",alpha_{}", k + 1));
    }
    out.push('\n');
    for (step, mode, action, alpha) in rows {
        let dominant = alpha
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite"))
            .map(|(i, _)| i + 1)
            .unwrap_or(0);
        out.push_str(&format!("{step},{},{dominant}", mode.name()));
        for v in action {
            out.push_str(&format!(",{v}"));
        }
        for v in alpha {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

/// Area under the learning curve (mean return per episode, trapezoid over
/// episode index).
pub fn learning_curve_auc(metrics: &[EpisodeMetrics]) -> f64 {
    if metrics.len() < 2 {
        return metrics.first().map_or(0.0, |m| m.ret);
    }
    let mut auc = 0.0;
    for w in metrics.windows(2) {
        auc += 0.5 * (w[0].ret + w[1].ret);
    }
    auc
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Comparison table of per-seed learning-curve AUCs for two architectures.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub mela_auc: Vec<f64>,
    pub moe_auc: Vec<f64>,
    pub mela_mean: f64,
    pub mela_std: f64,
    pub moe_mean: f64,
    pub moe_std: f64,
    pub mela_at_least_moe: bool,
}

impl ComparisonTable {
    pub fn new(mela_auc: Vec<f64>, moe_auc: Vec<f64>) -> Self {
        let (mela_mean, mela_std) = mean_std(&mela_auc);
        let (moe_mean, moe_std) = mean_std(&moe_auc);
        ComparisonTable {
            mela_at_least_moe: mela_mean >= moe_mean,
            mela_auc,
            moe_auc,
            mela_mean,
            mela_std,
            moe_mean,
            moe_std,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("arch,seed_index,auc\n");
        for (i, v) in self.mela_auc.iter().enumerate() {
            out.push_str(&format!("mela,{i},{v}\n"));
        }
        for (i, v) in self.moe_auc.iter().enumerate() {
            out.push_str(&format!("moe,{i},{v}\n"));
        }
        out.push_str(&format!(
            "mela,mean_std,{} ± {}\nmoe,mean_std,{} ± {}\n",
            self.mela_mean, self.mela_std, self.moe_mean, self.moe_std
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(mode: ModeLabel, alpha: Vec<f64>) -> ActivationRow {
        ActivationRow {
            step: 0,
            mode,
            alpha,
        }
    }

    #[test]
    fn one_hot_rows_give_permutation_like_matrix() {
        let rows = vec![
            row(ModeLabel::Recovery, vec![1.0, 0.0, 0.0]),
            row(ModeLabel::Rhythmic, vec![0.0, 1.0, 0.0]),
            row(ModeLabel::GoalTracking, vec![0.0, 0.0, 1.0]),
        ];
        let m = ActivationMatrix::from_rows(&rows).unwrap();
        assert_eq!(m.dominant_expert(ModeLabel::Recovery), Some(0));
        assert_eq!(m.dominant_expert(ModeLabel::Rhythmic), Some(1));
        assert_eq!(m.dominant_expert(ModeLabel::GoalTracking), Some(2));
    }

    #[test]
    fn uniform_rows_have_no_strict_dominant() {
        let rows = vec![
            row(ModeLabel::Recovery, vec![0.25; 4]),
            row(ModeLabel::Recovery, vec![0.25; 4]),
        ];
        let m = ActivationMatrix::from_rows(&rows).unwrap();
        for v in m.row(ModeLabel::Recovery).unwrap() {
            assert!((v - 0.25).abs() < 1e-12);
        }
        assert_eq!(m.dominant_expert(ModeLabel::Recovery), None);
    }

    #[test]
    fn rows_off_the_simplex_are_rejected() {
        let rows = vec![row(ModeLabel::Recovery, vec![0.7, 0.7])];
        assert!(ActivationMatrix::from_rows(&rows).is_err());
        assert!(ActivationMatrix::from_rows(&[]).is_err());
    }

    #[test]
    fn matrix_rows_stay_on_the_simplex() {
        let rows = vec![
            row(ModeLabel::Recovery, vec![0.6, 0.3, 0.1]),
            row(ModeLabel::Recovery, vec![0.2, 0.5, 0.3]),
            row(ModeLabel::Rhythmic, vec![0.1, 0.1, 0.8]),
        ];
        let m = ActivationMatrix::from_rows(&rows).unwrap();
        for mode in &m.modes {
            let sum: f64 = m.row(*mode).unwrap().iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
        assert_eq!(m.top_two(ModeLabel::Recovery), Some([0, 1]));
    }

    #[test]
    fn embedding_export_shapes_and_header() {
        let rows = vec![
            (0, ModeLabel::Recovery, vec![0.1, -0.2], vec![0.9, 0.1]),
            (1, ModeLabel::Rhythmic, vec![0.3, 0.4], vec![0.2, 0.8]),
        ];
        let csv = embedding_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "step,mode,dominant_expert,action_0,action_1,alpha_1,alpha_2");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("0,recovery,1,"));
        assert!(lines[2].starts_with("1,rhythmic,2,"));
        // Empty log: header only.
        let empty = embedding_csv(&[]);
        assert_eq!(empty.lines().count(), 1);
    }

    #[test]
    fn auc_is_trapezoidal_over_episodes() {
        let m = |e: usize, r: f64| EpisodeMetrics {
            episode: e,
            env_steps: 0,
            ret: r,
            steps: 0,
            critic_loss: 0.0,
            actor_loss: 0.0,
            smoothing_term: 0.0,
            alpha_t: 0.0,
            mean_alpha: None,
            eval_return: None,
        };
        let curve = vec![m(0, 0.0), m(1, 2.0), m(2, 4.0)];
        assert!((learning_curve_auc(&curve) - 4.0).abs() < 1e-12);
        assert_eq!(learning_curve_auc(&curve[..1]), 0.0);
    }

    #[test]
    fn comparison_table_reports_both_outcomes() {
        let t = ComparisonTable::new(vec![10.0, 12.0], vec![8.0, 9.0]);
        assert!(t.mela_at_least_moe);
        let t = ComparisonTable::new(vec![1.0], vec![5.0]);
        assert!(!t.mela_at_least_moe);
        assert!(t.to_csv().contains("mela,0,1"));
    }
}
