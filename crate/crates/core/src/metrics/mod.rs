//! Summary-quality metrics and batch evaluation.

mod bleu;
mod rouge;

use serde::Serialize;
use thiserror::Error;

use crate::engine::{esr, ExecutionReport};
use crate::graph::{cycle_stats, PlanGraph};
use crate::task::SummarizationTask;

pub use bleu::{
    bleu, corpus_bleu, sentence_bleu, tokenize_13a, BleuStats, BLEU_SIGNATURE, MAX_ORDER,
};
pub use rouge::{lcs_len, rouge_l, rouge_l_f1, rouge_tokens, RougeScore};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("metric needs non-empty input")]
    EmptyInput,
    #[error("{tasks} tasks but {outputs} outputs")]
    LengthMismatch { tasks: usize, outputs: usize },
    #[error("task `{0}` has no reference summary")]
    MissingReference(String),
}

/// What the pipeline produced for one task.
#[derive(Debug, Clone)]
pub struct TaskOutput {
    pub summary: String,
    pub report: ExecutionReport,
    pub graph: PlanGraph,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    pub bleu: f64,
    pub rouge_l_f1: f64,
    pub esr: f64,
    pub avg_cycles_seq: f64,
    pub avg_cycles_graph: f64,
    pub bleu_signature: String,
}

impl EvalResult {
    pub fn to_tsv(&self) -> String {
        format!(
            "bleu\trouge_l_f1\tesr\tavg_cycles_seq\tavg_cycles_graph\tbleu_signature\n{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{}\n",
            self.bleu,
            self.rouge_l_f1,
            self.esr,
            self.avg_cycles_seq,
            self.avg_cycles_graph,
            self.bleu_signature
        )
    }
}

/// Corpus BLEU over all pairs, mean ROUGE-L F1, pooled ESR and cycle averages.
pub fn evaluate_batch(
    tasks: &[SummarizationTask],
    outputs: &[TaskOutput],
) -> Result<EvalResult, MetricError> {
    if tasks.len() != outputs.len() {
        return Err(MetricError::LengthMismatch {
            tasks: tasks.len(),
            outputs: outputs.len(),
        });
    }
    if tasks.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let mut pairs = Vec::with_capacity(tasks.len());
    let mut rouge_total = 0.0;
    for (task, out) in tasks.iter().zip(outputs) {
        let reference = task
            .reference_summary
            .as_deref()
            .ok_or_else(|| MetricError::MissingReference(task.id.clone()))?;
        rouge_total += rouge_l_f1(&out.summary, reference)?;
        pairs.push((out.summary.as_str(), vec![reference]));
    }
    let reports: Vec<ExecutionReport> = outputs.iter().map(|o| o.report.clone()).collect();
    let graphs: Vec<PlanGraph> = outputs.iter().map(|o| o.graph.clone()).collect();
    let cycles = cycle_stats(&graphs).map_err(|_| MetricError::EmptyInput)?;
    Ok(EvalResult {
        bleu: corpus_bleu(&pairs)?,
        rouge_l_f1: rouge_total / tasks.len() as f64,
        esr: esr(&reports).map_err(|_| MetricError::EmptyInput)?,
        avg_cycles_seq: cycles.avg_sequential,
        avg_cycles_graph: cycles.avg_graph,
        bleu_signature: BLEU_SIGNATURE.to_string(),
    })
}
