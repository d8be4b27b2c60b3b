//! Personality-test harness for chat-completion agents.
//!
//! Administers the MBTI and BFI questionnaires under unconditioned,
//! personality-conditioned and role+personality-conditioned prompting,
//! scores the answers, and aggregates the results.

pub mod analysis;
pub mod awareness;
pub mod instruments;
pub mod ledger;
pub mod llm_client;
pub mod parsing;
pub mod personas;
pub mod prompting;
pub mod report;
pub mod results;
pub mod runner;
pub mod scoring;
pub mod types;

pub use analysis::{conditioned_accuracy, factor_means, outcome_matrix, pct_increase, type_frequencies, Filter};
pub use awareness::{awareness_report, cosine, preprocess, word_overlap, AwarenessReport, AwarenessResult};
pub use instruments::{load_bank, option_value, OptionScale, Question, QuestionBank};
pub use llm_client::{ChatBackend, ClientError, Embedder, HttpChatClient, MockPersona, MockTarget, SamplingParams};
pub use parsing::{answer_with_retries, parse_option, MatchMethod, ParsedAnswer};
pub use personas::{all_types, roles_for, traits_for, Personas};
pub use prompting::{
    render_awareness_prompt, render_question_prompt, render_system_message, ConditioningSpec, Regime, Templates,
};
pub use scoring::{likert_weight, reverse_item, score_bfi, score_mbti, BfiScores, MbtiOutcome};
pub use ledger::{Ledger, LedgerRecord};
pub use results::{score_ledger, AnalysisError, ScoredLedger, ScoredSession};
pub use runner::{execute, session_count, shuffle_questions, RunOptions, RunPlan};
pub use types::{Axis, BigFiveFactor, Instrument, MbtiType, Target};
