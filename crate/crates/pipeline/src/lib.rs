//! Dataset generation and evaluation workflows built on the core metrics,
//! the SQL sandbox and the LLM gateway.

pub mod datagen;
pub mod dataset;
pub mod grid_text;
pub mod harness;
pub mod report;

pub use datagen::{
    build_answer_prompt, build_generation_prompt, filter_pairs, judge_and_answer, parse_judgment, parse_pair_list,
    run_datagen, AnswerJudgment, DatagenConfig, DatagenError, DatagenSummary, FilterOutcome, GenPair, Manifest,
    manifest_path_for,
};
pub use dataset::{artifact_timestamp, load_dataset, record_id, validate_dataset, write_dataset_atomic, DatasetError, DatasetRecord, ValidationReport};
pub use grid_text::render_grid;
pub use harness::{
    build_sql_gen_prompt, echo_mock_spec, evaluate_dataset, load_eval_records, load_few_shot, parse_sql_response,
    target_question_block, EvalOptions, EvalRecord, EvalRun, FewShotExample, HarnessError, ModeTag, NoSql, PromptMode,
    SqlResponse,
};
pub use report::{build_report, render_report, ReportError, ReportFormat, ReportMetadata, ReportRow, ReportTable, CSV_HEADER};
