//! Verification harness: synthetic cohorts with planted truth, baseline
//! classifiers, before/after evaluation and matched-pair benefit.

pub mod benefit;
pub mod eval;
pub mod models;
pub mod synth;

pub use benefit::{c_for_benefit, evaluate_benefit, match_pairs, predicted_benefit, BenefitReport, MatchedPair};
pub use eval::{auc, cross_validate, improvement_gain, metrics, stratified_kfold, AfterArm, EvalReport, Metrics, ModelEval};
pub use models::{knn_predict, logistic_loss_grad, train_logistic, LogisticConfig, LogisticModel, ModelKind};
pub use synth::{
    generate_synthetic, ArmEffect, GroundTruth, PlantedCondition, PlantedPersona, PlantedTruth, SignatureTerm,
    SynthConfig, Synthetic,
};
