//! Questionnaire definitions, form rendering and usage analytics for remote
//! patient-reported outcome collection.

pub mod analytics;
pub mod form;
pub mod gaze;
pub mod odm;
pub mod xml;
