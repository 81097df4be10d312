use std::time::Instant;

use super::{evaluate, train, EpochRecord, EvalOptions, EvalResult, PipelineError, TrainConfig, TrainData};
use crate::pointcloud::PointCloud;
use crate::rotgroup::group_name_for_size;

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub group: String,
    pub size: usize,
    pub result: EvalResult,
    pub final_loss: Option<f64>,
    pub train_seconds: f64,
}

/// Trains one model per group size with otherwise identical settings and
/// evaluates each on `test`.
pub fn run_ablation(
    base: &TrainConfig,
    data: &TrainData,
    test: &[PointCloud],
    sizes: &[usize],
    opts: &EvalOptions,
    on_epoch: &mut dyn FnMut(&str, &EpochRecord),
) -> Result<Vec<AblationRow>, PipelineError> {
    if sizes.is_empty() {
        return Err(PipelineError::Config("no group sizes given".into()));
    }
    let dim = data.layout.spatial_dim;
    let names: Vec<String> = sizes.iter().map(|&k| group_name_for_size(k, dim)).collect();
    // fail on a bad size before spending time on training
    for name in &names {
        crate::rotgroup::RotationGroup::by_name(name, dim)?;
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for (&size, name) in sizes.iter().zip(&names) {
        let cfg = TrainConfig {
            group: name.clone(),
            ..base.clone()
        };
        let start = Instant::now();
        let out = train(&cfg, data, &mut |r| on_epoch(name, r))?;
        let train_seconds = start.elapsed().as_secs_f64();
        let result = evaluate(&out.classifier, &out.params, test, opts)?;
        rows.push(AblationRow {
            group: name.clone(),
            size,
            result,
            final_loss: out.epochs.last().map(|e| e.loss),
            train_seconds,
        });
    }
    Ok(rows)
}

/// Comparison table; wall-clock times are left to the metrics log so the
/// table is reproducible.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("group,size,instance_accuracy,class_accuracy,rotations,final_loss\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{},{}\n",
            r.group,
            r.size,
            r.result.instance_accuracy,
            r.result.class_accuracy,
            r.result.rotations,
            r.final_loss.map_or(String::new(), |l| format!("{l:.6}")),
        ));
    }
    out
}
